//! Candidate and verifier state machines.
//!
//! Both are synchronous transducers: the caller feeds an [`Event`] together
//! with the party's local clock reading and carries out the returned
//! [`Action`]s (send frames, sample the channel, arm timers). Variant
//! [`Variant::KnownVerifier`] sends the RSS set directly once collected;
//! [`Variant::Commitment`] starts with a verifier beacon, commits to the RSS
//! set and opens the commitment `delta_t` later.

use std::fmt;
use std::sync::Arc;

use pof_core::channel::RssTrace;
use pof_core::seed::derive_seed;
use pof_core::sigproc::{align, default_alignment_tolerance};
use pof_core::verify::verify_pair;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{timing_check, window_samples, SessionConfig};
use crate::crypto::{Credentials, CryptoProvider, Identity};
use crate::message::{open_sealed, seal_signed, Frame, Gamma, ProtocolMessage, SignedMessage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    KnownVerifier,
    Commitment,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Timer {
    OpenCommitment,
}

#[derive(Debug, Clone)]
pub enum Event {
    Start,
    Received(Vec<u8>),
    CollectionComplete(RssTrace),
    TimerFired(Timer),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AbortReason {
    ProtocolViolation,
    AuthFailure,
    BindingFailure,
    StaleCommit,
}

impl fmt::Display for AbortReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::ProtocolViolation => "protocol-violation",
            Self::AuthFailure => "auth-failure",
            Self::BindingFailure => "binding-failure",
            Self::StaleCommit => "stale-commit",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub candidate: String,
    pub accept: bool,
    pub rhos: Vec<f64>,
    pub passed_count: usize,
    pub required: usize,
    /// Why no correlation result could be computed, if so.
    pub diagnostic: Option<String>,
}

impl Verdict {
    pub fn mean_rho(&self) -> Option<f64> {
        (!self.rhos.is_empty()).then(|| self.rhos.iter().sum::<f64>() / self.rhos.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Action {
    Send {
        to: String,
        #[serde(with = "hex")]
        frame: Vec<u8>,
    },
    Broadcast {
        #[serde(with = "hex")]
        frame: Vec<u8>,
    },
    StartCollection {
        start_t: f64,
        end_t: f64,
        rate: f64,
    },
    SetTimer {
        at: f64,
        timer: Timer,
    },
    Verdict(Verdict),
    Abort {
        reason: AbortReason,
        detail: String,
    },
}

/// Extension point for a verifier that also proves its own following to
/// the candidate. Called once after the verdict.
pub trait MutualProof: Send {
    fn on_verdict(&mut self, verdict: &Verdict) -> Vec<Action>;
}

/// Bytes the commitment is computed over: RSS set followed by the id.
pub fn commitment_input(gamma: &Gamma, id: &str) -> Vec<u8> {
    let mut v = gamma.to_bytes();
    v.extend_from_slice(&(id.len() as u32).to_le_bytes());
    v.extend_from_slice(id.as_bytes());
    v
}

type Step<T> = Result<T, (AbortReason, String)>;

fn fail<T>(reason: AbortReason, detail: impl Into<String>) -> Step<T> {
    Err((reason, detail.into()))
}

fn open_frame(crypto: &dyn CryptoProvider, sk: &[u8], bytes: &[u8]) -> Step<Option<SignedMessage>> {
    match Frame::decode(bytes) {
        Err(e) => fail(AbortReason::ProtocolViolation, format!("malformed frame: {e}")),
        Ok(Frame::Beacon(_)) => Ok(None),
        Ok(Frame::Sealed(payload)) => match open_sealed(crypto, sk, &payload) {
            Ok(m) => Ok(Some(m)),
            Err(e) => fail(AbortReason::AuthFailure, format!("cannot open envelope: {e}")),
        },
    }
}

fn send_sealed(
    crypto: &dyn CryptoProvider,
    me: &Credentials,
    to: &Identity,
    msg: &ProtocolMessage,
) -> Step<Action> {
    match seal_signed(crypto, me, &to.public_key, msg) {
        Ok(frame) => Ok(Action::Send {
            to: to.id.clone(),
            frame,
        }),
        Err(e) => fail(AbortReason::AuthFailure, format!("cannot seal {} to {}: {e}", msg.name(), to.id)),
    }
}

fn check_sig(crypto: &dyn CryptoProvider, m: &SignedMessage, signer: &Identity) -> Step<()> {
    if m.verify(crypto, &signer.public_key) {
        Ok(())
    } else {
        fail(
            AbortReason::AuthFailure,
            format!("{} is not signed by {}", m.msg.name(), signer.id),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CandidateState {
    Idle,
    AwaitBeacon,
    AwaitReply { verifier: Identity },
    Collecting { verifier: Identity },
    Committed { verifier: Identity, gamma: Gamma, r: Vec<u8> },
    Done,
    Aborted(AbortReason),
}

pub struct CandidateSession {
    cfg: SessionConfig,
    me: Credentials,
    ca_pk: Vec<u8>,
    crypto: Arc<dyn CryptoProvider>,
    variant: Variant,
    known_verifier: Option<Identity>,
    rng: ChaCha8Rng,
    state: CandidateState,
}

impl CandidateSession {
    /// Candidate that already holds the verifier's identity.
    pub fn known_verifier(
        cfg: SessionConfig,
        me: Credentials,
        ca_pk: Vec<u8>,
        verifier: Identity,
        crypto: Arc<dyn CryptoProvider>,
        seed: u64,
    ) -> Self {
        Self::build(cfg, me, ca_pk, Variant::KnownVerifier, Some(verifier), crypto, seed)
    }

    /// Candidate that discovers the verifier from its beacon.
    pub fn commitment(
        cfg: SessionConfig,
        me: Credentials,
        ca_pk: Vec<u8>,
        crypto: Arc<dyn CryptoProvider>,
        seed: u64,
    ) -> Self {
        Self::build(cfg, me, ca_pk, Variant::Commitment, None, crypto, seed)
    }

    fn build(
        cfg: SessionConfig,
        me: Credentials,
        ca_pk: Vec<u8>,
        variant: Variant,
        known_verifier: Option<Identity>,
        crypto: Arc<dyn CryptoProvider>,
        seed: u64,
    ) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("nonce/{}", me.id())));
        Self {
            cfg,
            me,
            ca_pk,
            crypto,
            variant,
            known_verifier,
            rng,
            state: CandidateState::Idle,
        }
    }

    pub fn state(&self) -> &CandidateState {
        &self.state
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn id(&self) -> &str {
        self.me.id()
    }

    /// Advances the session; `now` is the candidate's local clock.
    pub fn step(&mut self, now: f64, event: Event) -> Vec<Action> {
        if matches!(self.state, CandidateState::Done | CandidateState::Aborted(_)) {
            return Vec::new();
        }
        match self.transition(now, event) {
            Ok(actions) => actions,
            Err((reason, detail)) => {
                self.state = CandidateState::Aborted(reason);
                vec![Action::Abort { reason, detail }]
            }
        }
    }

    fn transition(&mut self, now: f64, event: Event) -> Step<Vec<Action>> {
        let crypto = self.crypto.clone();
        let crypto = crypto.as_ref();
        let state = std::mem::replace(&mut self.state, CandidateState::Idle);
        let (next, actions) = match (state, event) {
            (CandidateState::Idle, Event::Start) => match (self.variant, self.known_verifier.clone()) {
                (Variant::KnownVerifier, Some(v)) => {
                    let send = send_sealed(crypto, &self.me, &v, &ProtocolMessage::join_req(&self.me.identity))?;
                    (CandidateState::AwaitReply { verifier: v }, vec![send])
                }
                (Variant::KnownVerifier, None) => {
                    return fail(AbortReason::ProtocolViolation, "no verifier identity configured")
                }
                (Variant::Commitment, _) => (CandidateState::AwaitBeacon, Vec::new()),
            },
            (CandidateState::AwaitBeacon, Event::Received(bytes)) => match Frame::decode(&bytes) {
                Ok(Frame::Beacon(ProtocolMessage::VerifierBeacon { id, pk, cert })) => {
                    let v = Identity {
                        id,
                        public_key: pk,
                        certificate: cert,
                    };
                    if !crypto.verify_cert(&self.ca_pk, &v) {
                        return fail(AbortReason::AuthFailure, format!("certificate of {} does not verify", v.id));
                    }
                    let send = send_sealed(crypto, &self.me, &v, &ProtocolMessage::join_req(&self.me.identity))?;
                    (CandidateState::AwaitReply { verifier: v }, vec![send])
                }
                Ok(Frame::Beacon(m)) => {
                    return fail(AbortReason::ProtocolViolation, format!("unexpected clear {}", m.name()))
                }
                Ok(Frame::Sealed(_)) => {
                    return fail(AbortReason::ProtocolViolation, "sealed message before discovery")
                }
                Err(e) => return fail(AbortReason::ProtocolViolation, format!("malformed frame: {e}")),
            },
            (CandidateState::AwaitReply { verifier }, Event::Received(bytes)) => {
                let Some(m) = open_frame(crypto, &self.me.secret_key, &bytes)? else {
                    self.state = CandidateState::AwaitReply { verifier };
                    return Ok(Vec::new());
                };
                let ProtocolMessage::Reply {
                    ref id,
                    start_t,
                    end_t,
                    rate,
                    ..
                } = m.msg
                else {
                    return fail(AbortReason::ProtocolViolation, format!("expected reply, got {}", m.msg.name()));
                };
                check_sig(crypto, &m, &verifier)?;
                if *id != verifier.id {
                    return fail(AbortReason::AuthFailure, format!("reply names {id}, expected {}", verifier.id));
                }
                let need = self.cfg.params.required_samples();
                if !(rate > 0.0) || window_samples((start_t, end_t), rate) < need {
                    return fail(
                        AbortReason::ProtocolViolation,
                        format!("offered window ({start_t}, {end_t}) at {rate} Hz holds fewer than {need} samples"),
                    );
                }
                (
                    CandidateState::Collecting { verifier },
                    vec![Action::StartCollection { start_t, end_t, rate }],
                )
            }
            (CandidateState::Collecting { verifier }, Event::CollectionComplete(trace)) => {
                let gamma = Gamma::from_trace(&trace);
                match self.variant {
                    Variant::KnownVerifier => {
                        let msg = ProtocolMessage::RssReport {
                            gamma,
                            id: self.me.id().to_string(),
                        };
                        (CandidateState::Done, vec![send_sealed(crypto, &self.me, &verifier, &msg)?])
                    }
                    Variant::Commitment => {
                        let r = crypto.fresh_nonce(&mut self.rng).to_vec();
                        let c = crypto.commit(&commitment_input(&gamma, self.me.id()), &r);
                        let send = send_sealed(crypto, &self.me, &verifier, &ProtocolMessage::Commit { c })?;
                        let timer = Action::SetTimer {
                            at: now + self.cfg.delta_t,
                            timer: Timer::OpenCommitment,
                        };
                        (CandidateState::Committed { verifier, gamma, r }, vec![send, timer])
                    }
                }
            }
            (CandidateState::Committed { verifier, gamma, r }, Event::TimerFired(Timer::OpenCommitment)) => {
                let msg = ProtocolMessage::Open {
                    gamma,
                    id: self.me.id().to_string(),
                    r,
                };
                (CandidateState::Done, vec![send_sealed(crypto, &self.me, &verifier, &msg)?])
            }
            (s, Event::Received(bytes)) if matches!(Frame::decode(&bytes), Ok(Frame::Beacon(_))) => (s, Vec::new()),
            (s, e) => {
                return fail(
                    AbortReason::ProtocolViolation,
                    format!("{} not expected in state {}", event_name(&e), candidate_state_name(&s)),
                )
            }
        };
        self.state = next;
        Ok(actions)
    }
}

fn event_name(e: &Event) -> &'static str {
    match e {
        Event::Start => "start",
        Event::Received(_) => "message",
        Event::CollectionComplete(_) => "collection-complete",
        Event::TimerFired(_) => "timer",
    }
}

fn candidate_state_name(s: &CandidateState) -> &'static str {
    match s {
        CandidateState::Idle => "idle",
        CandidateState::AwaitBeacon => "await-beacon",
        CandidateState::AwaitReply { .. } => "await-reply",
        CandidateState::Collecting { .. } => "collecting",
        CandidateState::Committed { .. } => "committed",
        CandidateState::Done => "done",
        CandidateState::Aborted(_) => "aborted",
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerifierState {
    Idle,
    Listening,
    Collecting,
    Done,
    Aborted(AbortReason),
}

pub struct VerifierSession {
    cfg: SessionConfig,
    me: Credentials,
    ca_pk: Vec<u8>,
    crypto: Arc<dyn CryptoProvider>,
    variant: Variant,
    state: VerifierState,
    candidate: Option<Identity>,
    own: Option<RssTrace>,
    commit: Option<(Vec<u8>, f64)>,
    report: Option<Gamma>,
    verdict: Option<Verdict>,
    mutual: Option<Box<dyn MutualProof>>,
}

impl VerifierSession {
    pub fn new(
        cfg: SessionConfig,
        me: Credentials,
        ca_pk: Vec<u8>,
        variant: Variant,
        crypto: Arc<dyn CryptoProvider>,
    ) -> Self {
        Self {
            cfg,
            me,
            ca_pk,
            crypto,
            variant,
            state: VerifierState::Idle,
            candidate: None,
            own: None,
            commit: None,
            report: None,
            verdict: None,
            mutual: None,
        }
    }

    pub fn with_mutual_proof(mut self, hook: Box<dyn MutualProof>) -> Self {
        self.mutual = Some(hook);
        self
    }

    pub fn state(&self) -> VerifierState {
        self.state
    }

    pub fn candidate(&self) -> Option<&Identity> {
        self.candidate.as_ref()
    }

    pub fn verdict(&self) -> Option<&Verdict> {
        self.verdict.as_ref()
    }

    /// Own RSS set once collection has finished.
    pub fn own_trace(&self) -> Option<&RssTrace> {
        self.own.as_ref()
    }

    pub fn config(&self) -> &SessionConfig {
        &self.cfg
    }

    /// Advances the session; `now` is the verifier's local clock.
    pub fn step(&mut self, now: f64, event: Event) -> Vec<Action> {
        if matches!(self.state, VerifierState::Done | VerifierState::Aborted(_)) {
            return Vec::new();
        }
        match self.transition(now, event) {
            Ok(actions) => actions,
            Err((reason, detail)) => {
                self.state = VerifierState::Aborted(reason);
                vec![Action::Abort { reason, detail }]
            }
        }
    }

    fn transition(&mut self, now: f64, event: Event) -> Step<Vec<Action>> {
        let crypto = self.crypto.clone();
        let crypto = crypto.as_ref();
        match (self.state, event) {
            (VerifierState::Idle, Event::Start) => {
                self.state = VerifierState::Listening;
                Ok(match self.variant {
                    Variant::KnownVerifier => Vec::new(),
                    Variant::Commitment => vec![Action::Broadcast {
                        frame: Frame::Beacon(ProtocolMessage::beacon(&self.me.identity)).encode(),
                    }],
                })
            }
            (VerifierState::Listening, Event::Received(bytes)) => {
                let Some(m) = open_frame(crypto, &self.me.secret_key, &bytes)? else {
                    return Ok(Vec::new());
                };
                let ProtocolMessage::JoinReq { id, pk, cert } = m.msg.clone() else {
                    return fail(AbortReason::ProtocolViolation, format!("expected join request, got {}", m.msg.name()));
                };
                let cand = Identity {
                    id,
                    public_key: pk,
                    certificate: cert,
                };
                if !crypto.verify_cert(&self.ca_pk, &cand) {
                    return fail(AbortReason::AuthFailure, format!("certificate of {} does not verify", cand.id));
                }
                check_sig(crypto, &m, &cand)?;
                let (start_t, end_t) = self.cfg.window_for_request(now);
                let reply = ProtocolMessage::Reply {
                    id: self.me.id().to_string(),
                    start_t,
                    end_t,
                    freq: self.cfg.freq,
                    rate: self.cfg.rate,
                };
                let send = send_sealed(crypto, &self.me, &cand, &reply)?;
                self.candidate = Some(cand);
                self.state = VerifierState::Collecting;
                Ok(vec![
                    send,
                    Action::StartCollection {
                        start_t,
                        end_t,
                        rate: self.cfg.rate,
                    },
                ])
            }
            (VerifierState::Collecting, Event::Received(bytes)) => {
                let Some(m) = open_frame(crypto, &self.me.secret_key, &bytes)? else {
                    return Ok(Vec::new());
                };
                if matches!(m.msg, ProtocolMessage::JoinReq { .. }) {
                    return Ok(Vec::new());
                }
                let cand = self.candidate.clone().expect("candidate set when collecting");
                check_sig(crypto, &m, &cand)?;
                self.on_candidate_message(now, m.msg, &cand)
            }
            (VerifierState::Collecting, Event::CollectionComplete(trace)) => {
                if self.own.is_some() {
                    return fail(AbortReason::ProtocolViolation, "collection completed twice");
                }
                self.own = Some(trace);
                match (self.variant, self.report.take()) {
                    (Variant::KnownVerifier, Some(gamma)) => Ok(self.finish(&gamma)),
                    _ => Ok(Vec::new()),
                }
            }
            (s, e) => fail(
                AbortReason::ProtocolViolation,
                format!("{} not expected in state {s:?}", event_name(&e)),
            ),
        }
    }

    fn on_candidate_message(&mut self, now: f64, msg: ProtocolMessage, cand: &Identity) -> Step<Vec<Action>> {
        let crypto = self.crypto.clone();
        match (self.variant, msg) {
            (Variant::KnownVerifier, ProtocolMessage::RssReport { gamma, id }) => {
                if id != cand.id {
                    return fail(AbortReason::AuthFailure, format!("report names {id}, session is with {}", cand.id));
                }
                if self.report.is_some() {
                    return fail(AbortReason::ProtocolViolation, "duplicate rss report");
                }
                if self.own.is_some() {
                    Ok(self.finish(&gamma))
                } else {
                    self.report = Some(gamma);
                    Ok(Vec::new())
                }
            }
            (Variant::Commitment, ProtocolMessage::Commit { c }) => {
                if self.commit.is_some() {
                    return fail(AbortReason::ProtocolViolation, "duplicate commitment");
                }
                self.commit = Some((c, now));
                Ok(Vec::new())
            }
            (Variant::Commitment, ProtocolMessage::Open { gamma, id, r }) => {
                let Some((c, t_commit)) = self.commit.clone() else {
                    return fail(AbortReason::ProtocolViolation, "open before commit");
                };
                let Some(t_v_last) = self.own.as_ref().and_then(|t| t.end()) else {
                    return fail(AbortReason::ProtocolViolation, "open before own collection completed");
                };
                if id != cand.id {
                    return fail(AbortReason::AuthFailure, format!("opening names {id}, session is with {}", cand.id));
                }
                if !crypto.open_commitment(&c, &commitment_input(&gamma, &id), &r) {
                    return fail(AbortReason::BindingFailure, "opening does not match the commitment");
                }
                if !timing_check(t_commit, t_v_last, self.cfg.epsilon) {
                    return fail(
                        AbortReason::StaleCommit,
                        format!(
                            "commitment arrived {:.3} s after the last sample, limit {} s",
                            t_commit - t_v_last,
                            self.cfg.epsilon
                        ),
                    );
                }
                Ok(self.finish(&gamma))
            }
            (_, m) => fail(
                AbortReason::ProtocolViolation,
                format!("{} not expected in {:?} session", m.name(), self.variant),
            ),
        }
    }

    fn finish(&mut self, gamma: &Gamma) -> Vec<Action> {
        let cand = self.candidate.as_ref().expect("candidate set").id.clone();
        let own = self.own.as_ref().expect("own collection complete");
        let verdict = evaluate(&self.cfg, own, gamma, &cand);
        self.state = VerifierState::Done;
        self.verdict = Some(verdict.clone());
        let mut out = vec![Action::Verdict(verdict.clone())];
        if let Some(hook) = self.mutual.as_mut() {
            out.extend(hook.on_verdict(&verdict));
        }
        out
    }
}

/// Correlates the verifier's RSS set against a candidate's.
pub fn evaluate(cfg: &SessionConfig, own: &RssTrace, gamma: &Gamma, candidate: &str) -> Verdict {
    let rejected = |diagnostic: String| Verdict {
        candidate: candidate.to_string(),
        accept: false,
        rhos: Vec::new(),
        passed_count: 0,
        required: cfg.params.required_passes(),
        diagnostic: Some(diagnostic),
    };
    let theirs = match gamma.to_trace(own.rate(), candidate) {
        Ok(t) => t,
        Err(e) => return rejected(e.to_string()),
    };
    let pair = match align(own, &theirs, default_alignment_tolerance(own.rate())) {
        Ok(p) => p,
        Err(e) => return rejected(e.to_string()),
    };
    match verify_pair(&pair, &cfg.params) {
        Ok(d) => Verdict {
            candidate: candidate.to_string(),
            accept: d.accept,
            rhos: d.rhos,
            passed_count: d.passed_count,
            required: d.required,
            diagnostic: None,
        },
        Err(e) => rejected(e.to_string()),
    }
}
