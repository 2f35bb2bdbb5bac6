//! Dolev-Yao adversaries on the V2V link.
//!
//! An adversary sees every frame before delivery and answers with a list of
//! [`AdvAction`]s. A frame is delivered only if the list contains
//! [`AdvAction::Relay`] or [`AdvAction::Delay`]; withholding it models
//! reactive jamming. Adversaries hold their own credentials and the public
//! identities of the honest parties, nothing else. All times an adversary
//! sees or sets are on its own clock.

use std::sync::Arc;

use pof_core::channel::RssTrace;
use pof_protocol::message::{open_sealed, reseal, seal_signed, SignedMessage};
use pof_protocol::session::commitment_input;
use pof_protocol::{Credentials, CryptoProvider, Frame, Gamma, Identity, ProtocolMessage, SessionConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::scenario::MitmStrategy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum AdvAction {
    Relay,
    /// Withhold the frame (reactive jamming).
    Drop,
    /// Deliver the frame this many seconds late.
    Delay(f64),
    /// Send a frame of the adversary's own making.
    Inject {
        to: String,
        #[serde(with = "hex")]
        frame: Vec<u8>,
    },
    /// Note for the run log.
    Record(String),
    /// Sample the channel at the adversary's position over `[start, end)`.
    Collect { start: f64, end: f64 },
    SetTimer { at: f64, tag: u32 },
}

pub trait Adversary: Send {
    /// Called for every frame on the wire; `dst` is `*` for broadcasts.
    fn intercept(&mut self, t: f64, src: &str, dst: &str, frame: &[u8]) -> Vec<AdvAction>;

    fn on_timer(&mut self, _t: f64, _tag: u32) -> Vec<AdvAction> {
        Vec::new()
    }

    fn on_collection(&mut self, _t: f64, _trace: RssTrace) -> Vec<AdvAction> {
        Vec::new()
    }
}

/// Runs one frame through `adv`.
pub fn adversary_hook(adv: &mut dyn Adversary, t: f64, src: &str, dst: &str, frame: &[u8]) -> Vec<AdvAction> {
    adv.intercept(t, src, dst, frame)
}

/// Transparent wire.
#[derive(Debug, Default, Clone, Copy)]
pub struct Passive;

impl Adversary for Passive {
    fn intercept(&mut self, _t: f64, _src: &str, _dst: &str, _frame: &[u8]) -> Vec<AdvAction> {
        vec![AdvAction::Relay]
    }
}

/// What an adversary starts out with.
#[derive(Clone)]
pub struct AdversaryKit {
    pub me: Credentials,
    pub verifier: Identity,
    pub candidate: Identity,
    pub crypto: Arc<dyn CryptoProvider>,
    pub cfg: SessionConfig,
    pub latency: f64,
    pub seed: u64,
}

impl AdversaryKit {
    fn open(&self, frame: &[u8]) -> Result<SignedMessage, String> {
        match Frame::decode(frame).map_err(|e| e.to_string())? {
            Frame::Sealed(body) => open_sealed(self.crypto.as_ref(), &self.me.secret_key, &body).map_err(|e| e.to_string()),
            Frame::Beacon(m) => Ok(SignedMessage { msg: m, sig: Vec::new() }),
        }
    }

    fn inject(&self, to: &Identity, msg: &ProtocolMessage) -> AdvAction {
        match seal_signed(self.crypto.as_ref(), &self.me, &to.public_key, msg) {
            Ok(frame) => AdvAction::Inject {
                to: to.id.clone(),
                frame,
            },
            Err(e) => AdvAction::Record(format!("could not seal {} to {}: {e}", msg.name(), to.id)),
        }
    }

    fn beacon(&self) -> AdvAction {
        AdvAction::Inject {
            to: self.candidate.id.clone(),
            frame: Frame::Beacon(ProtocolMessage::beacon(&self.me.identity)).encode(),
        }
    }

    fn reply(&self, (start_t, end_t): (f64, f64)) -> ProtocolMessage {
        ProtocolMessage::Reply {
            id: self.me.id().to_string(),
            start_t,
            end_t,
            freq: self.cfg.freq,
            rate: self.cfg.rate,
        }
    }

    /// Fresh commitment and opening of `gamma` under the adversary's id.
    fn commit_as_self(&self, rng: &mut ChaCha8Rng, gamma: Gamma) -> Vec<AdvAction> {
        let r = self.crypto.fresh_nonce(rng).to_vec();
        let c = self.crypto.commit(&commitment_input(&gamma, self.me.id()), &r);
        vec![
            self.inject(&self.verifier, &ProtocolMessage::Commit { c }),
            self.inject(
                &self.verifier,
                &ProtocolMessage::Open {
                    gamma,
                    id: self.me.id().to_string(),
                    r,
                },
            ),
        ]
    }

    fn is_verifier(&self, id: &str) -> bool {
        id == self.verifier.id
    }

    fn is_candidate(&self, id: &str) -> bool {
        id == self.candidate.id
    }

    fn is_me(&self, id: &str) -> bool {
        id == self.me.id()
    }
}

/// Known-verifier variant: joins in the candidate's place, forwards the
/// verifier's reply so the candidate keeps going, and submits its own RSS
/// set because the candidate's is sealed to the verifier.
pub struct MitmKnown {
    kit: AdversaryKit,
    joined: bool,
}

impl MitmKnown {
    pub fn new(kit: AdversaryKit) -> Self {
        Self { kit, joined: false }
    }
}

impl Adversary for MitmKnown {
    fn intercept(&mut self, _t: f64, src: &str, dst: &str, frame: &[u8]) -> Vec<AdvAction> {
        let k = &self.kit;
        if k.is_candidate(src) && k.is_verifier(dst) {
            let note = match k.open(frame) {
                Ok(m) => format!("opened {} from {src}", m.msg.name()),
                Err(e) => format!("cannot open frame from {src} to {dst}: {e}"),
            };
            let mut out = vec![AdvAction::Drop, AdvAction::Record(note)];
            if !self.joined {
                self.joined = true;
                out.push(k.inject(&k.verifier, &ProtocolMessage::join_req(&k.me.identity)));
                out.push(AdvAction::Record("joining the verifier under own identity".into()));
            }
            return out;
        }
        if k.is_verifier(src) && k.is_me(dst) {
            return match k.open(frame) {
                Ok(signed) => match signed.msg {
                    ProtocolMessage::Reply { start_t, end_t, .. } => {
                        let mut out = vec![AdvAction::Collect { start: start_t, end: end_t }];
                        match reseal(k.crypto.as_ref(), &signed, &k.candidate.public_key) {
                            Ok(frame) => out.push(AdvAction::Inject {
                                to: k.candidate.id.clone(),
                                frame,
                            }),
                            Err(e) => out.push(AdvAction::Record(format!("could not forward reply: {e}"))),
                        }
                        out.push(AdvAction::Record(format!("forwarded reply for window ({start_t}, {end_t})")));
                        out
                    }
                    m => vec![AdvAction::Record(format!("ignored {}", m.name()))],
                },
                Err(e) => vec![AdvAction::Record(format!("cannot open frame from {src}: {e}"))],
            };
        }
        vec![AdvAction::Relay]
    }

    fn on_collection(&mut self, _t: f64, trace: RssTrace) -> Vec<AdvAction> {
        let k = &self.kit;
        let report = ProtocolMessage::RssReport {
            gamma: Gamma::from_trace(&trace),
            id: k.me.id().to_string(),
        };
        vec![
            k.inject(&k.verifier, &report),
            AdvAction::Record(format!("submitted own RSS set of {} samples", trace.len())),
        ]
    }
}

/// Commitment variant, two simultaneous sessions: poses as the verifier to
/// the candidate and as a candidate to the verifier, reusing the
/// verifier's window.
pub struct MitmParallel {
    kit: AdversaryKit,
    strategy: MitmStrategy,
    rng: ChaCha8Rng,
}

impl MitmParallel {
    pub fn new(kit: AdversaryKit, strategy: MitmStrategy) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(kit.seed);
        Self {
            kit,
            strategy,
            rng,
        }
    }
}

impl Adversary for MitmParallel {
    fn intercept(&mut self, _t: f64, src: &str, dst: &str, frame: &[u8]) -> Vec<AdvAction> {
        let k = &self.kit;
        if k.is_verifier(src) && dst == "*" {
            return vec![
                AdvAction::Drop,
                k.beacon(),
                AdvAction::Record("jammed verifier beacon, sent own".into()),
            ];
        }
        if !k.is_me(dst) {
            return vec![AdvAction::Relay];
        }
        let signed = match k.open(frame) {
            Ok(s) => s,
            Err(e) => return vec![AdvAction::Record(format!("cannot open frame from {src}: {e}"))],
        };
        match (src, signed.msg) {
            (s, ProtocolMessage::JoinReq { .. }) if k.is_candidate(s) => vec![
                k.inject(&k.verifier, &ProtocolMessage::join_req(&k.me.identity)),
                AdvAction::Record("candidate joined; joining the verifier".into()),
            ],
            (s, ProtocolMessage::Reply { start_t, end_t, .. }) if k.is_verifier(s) => vec![
                k.inject(&k.candidate, &k.reply((start_t, end_t))),
                AdvAction::Record(format!("offered the verifier's window ({start_t}, {end_t})")),
            ],
            (s, ProtocolMessage::Commit { c }) if k.is_candidate(s) => match self.strategy {
                MitmStrategy::CommitAfterOpen => {
                    vec![AdvAction::Record("holding candidate commitment until it opens".into())]
                }
                MitmStrategy::ForwardCommitment => vec![
                    k.inject(&k.verifier, &ProtocolMessage::Commit { c }),
                    AdvAction::Record("forwarded candidate commitment".into()),
                ],
            },
            (s, ProtocolMessage::Open { gamma, r, .. }) if k.is_candidate(s) => match self.strategy {
                MitmStrategy::CommitAfterOpen => {
                    let mut out = k.commit_as_self(&mut self.rng, gamma);
                    out.push(AdvAction::Record("committed to the candidate's RSS set after opening".into()));
                    out
                }
                MitmStrategy::ForwardCommitment => {
                    vec![
                        k.inject(
                            &k.verifier,
                            &ProtocolMessage::Open {
                                gamma,
                                id: k.me.id().to_string(),
                                r,
                            },
                        ),
                        AdvAction::Record("opened forwarded commitment under own id".into()),
                    ]
                }
            },
            (_, m) => vec![AdvAction::Record(format!("ignored {} from {src}", m.name()))],
        }
    }
}

const JOIN_TIMER: u32 = 1;

/// Commitment variant with the verifier session started `delta_t` after
/// the candidate's, so the candidate's opening arrives in time to commit
/// to the verifier. The RSS set is shifted onto the verifier's window.
pub struct MitmDelayed {
    kit: AdversaryKit,
    rng: ChaCha8Rng,
    candidate_window: Option<(f64, f64)>,
    verifier_window: Option<(f64, f64)>,
}

impl MitmDelayed {
    pub fn new(kit: AdversaryKit) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(kit.seed);
        Self {
            kit,
            rng,
            candidate_window: None,
            verifier_window: None,
        }
    }
}

impl Adversary for MitmDelayed {
    fn intercept(&mut self, t: f64, src: &str, dst: &str, frame: &[u8]) -> Vec<AdvAction> {
        let k = &self.kit;
        if k.is_verifier(src) && dst == "*" {
            return vec![
                AdvAction::Drop,
                k.beacon(),
                AdvAction::Record("jammed verifier beacon, sent own".into()),
            ];
        }
        if !k.is_me(dst) {
            return vec![AdvAction::Relay];
        }
        let signed = match k.open(frame) {
            Ok(s) => s,
            Err(e) => return vec![AdvAction::Record(format!("cannot open frame from {src}: {e}"))],
        };
        match (src, signed.msg) {
            (s, ProtocolMessage::JoinReq { .. }) if k.is_candidate(s) => {
                let w = k.cfg.window_for_request(t);
                self.candidate_window = Some(w);
                // the verifier's window should end shortly before the
                // candidate opens, leaving half of epsilon for the commitment
                let at = w.0 + k.cfg.delta_t - k.cfg.epsilon / 2.0 - k.cfg.reply_lead - k.latency;
                vec![
                    k.inject(&k.candidate, &k.reply(w)),
                    AdvAction::SetTimer { at, tag: JOIN_TIMER },
                    AdvAction::Record(format!("offered window ({}, {}) to the candidate", w.0, w.1)),
                ]
            }
            (s, ProtocolMessage::Reply { start_t, end_t, .. }) if k.is_verifier(s) => {
                self.verifier_window = Some((start_t, end_t));
                vec![AdvAction::Record(format!("verifier window ({start_t}, {end_t})"))]
            }
            (s, ProtocolMessage::Commit { .. }) if k.is_candidate(s) => {
                vec![AdvAction::Record("holding candidate commitment".into())]
            }
            (s, ProtocolMessage::Open { gamma, .. }) if k.is_candidate(s) => {
                let (Some(wc), Some(wv)) = (self.candidate_window, self.verifier_window) else {
                    return vec![AdvAction::Record("opening arrived before both windows were known".into())];
                };
                let shift = wv.0 - wc.0;
                let mut out = k.commit_as_self(&mut self.rng, gamma.time_shifted(shift));
                out.push(AdvAction::Record(format!(
                    "committed to the candidate's RSS set shifted by {shift:.3} s"
                )));
                out
            }
            (_, m) => vec![AdvAction::Record(format!("ignored {} from {src}", m.name()))],
        }
    }

    fn on_timer(&mut self, _t: f64, tag: u32) -> Vec<AdvAction> {
        if tag != JOIN_TIMER {
            return Vec::new();
        }
        let k = &self.kit;
        vec![
            k.inject(&k.verifier, &ProtocolMessage::join_req(&k.me.identity)),
            AdvAction::Record("joining the verifier".into()),
        ]
    }
}
