//! Event loop binding sessions, the channel and an adversary.

use std::collections::BTreeMap;
use std::sync::Arc;

use pof_core::channel::RssTrace;
use pof_core::kinematics::{is_following, Route};
use pof_core::seed::derive_seed;
use pof_protocol::config::window_samples;
use pof_protocol::{
    continuous_verification, AbortReason, Action, CandidateSession, Credentials, Event, SessionConfig, Timer,
    ToyProvider, Transcript, Variant, Verdict, VerifierSession, WindowOutcome,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adversary::{AdvAction, Adversary, AdversaryKit, MitmDelayed, MitmKnown, MitmParallel, Passive};
use crate::queue::EventQueue;
use crate::scenario::{Scenario, ScenarioKind};
use crate::world::{GapProfile, SampleRequest, World, WorldConfig};
use crate::SimError;

/// Gap of the remote adversary's actual position behind the platoon (m).
pub const REMOTE_GAP: f64 = 1000.0;
/// Ground-truth sampling step (s).
pub const TRUTH_DT: f64 = 0.05;
const MAX_EVENTS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Party {
    V,
    C,
    M,
}

impl Party {
    fn id(self) -> &'static str {
        match self {
            Self::V => "V",
            Self::C => "C",
            Self::M => "M",
        }
    }

    fn from_id(id: &str) -> Option<Self> {
        match id {
            "V" => Some(Self::V),
            "C" => Some(Self::C),
            "M" => Some(Self::M),
            _ => None,
        }
    }
}

enum Ev {
    Start(Party),
    Deliver { to: Party, frame: Vec<u8> },
    Collected { party: Party, trace: RssTrace },
    Timer { party: Party, timer: Timer },
    AdvTimer(u32),
}

struct Node {
    offset: f64,
    /// Where the vehicle actually is.
    physical: Route<f64>,
    /// Where its RSS samples come from.
    source: Route<f64>,
    replay_lead: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "kebab-case")]
pub enum Outcome {
    Accept,
    Reject,
    Aborted { party: String, reason: AbortReason },
    Incomplete,
}

impl Outcome {
    pub fn accepted(&self) -> bool {
        matches!(self, Self::Accept)
    }

    /// `accept`, `reject`, `abort:<reason>` or `incomplete`.
    pub fn label(&self) -> String {
        match self {
            Self::Accept => "accept".into(),
            Self::Reject => "reject".into(),
            Self::Aborted { reason, .. } => format!("abort:{reason}"),
            Self::Incomplete => "incomplete".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbortRecord {
    pub t: f64,
    pub party: String,
    pub reason: AbortReason,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub t: f64,
    pub note: String,
}

/// Kinematic truth about the party the verifier evaluated, over the
/// verifier's collection window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub subject: String,
    pub window: (f64, f64),
    pub following: bool,
    /// Share of sampled instants within `d_ref`.
    pub following_fraction: f64,
    /// Share of the correlation subsets spent entirely within `d_ref`.
    pub subset_following_fraction: f64,
    pub max_separation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub scenario: String,
    pub kind: ScenarioKind,
    pub variant: Variant,
    pub seed: u64,
    pub outcome: Outcome,
    pub verdict: Option<Verdict>,
    pub aborts: Vec<AbortRecord>,
    pub ground_truth: GroundTruth,
    pub clock_offsets: BTreeMap<String, f64>,
    pub adversary_log: Vec<LogEntry>,
    pub continuous: Vec<WindowOutcome>,
    pub transcript: Transcript,
}

impl SimReport {
    pub fn accepted(&self) -> bool {
        self.outcome.accepted()
    }

    pub fn mean_rho(&self) -> Option<f64> {
        self.verdict.as_ref().and_then(Verdict::mean_rho)
    }

    pub fn passed_count(&self) -> Option<usize> {
        self.verdict.as_ref().map(|v| v.passed_count)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Keys every run uses: a CA plus enrolled `V`, `C` and `M`.
pub struct Pki {
    pub crypto: Arc<ToyProvider>,
    pub ca_pk: Vec<u8>,
    pub v: Credentials,
    pub c: Credentials,
    pub m: Credentials,
}

pub fn pki() -> Pki {
    let crypto = Arc::new(ToyProvider::new());
    let ca = crypto.keygen(1);
    let v = crypto.enroll("V", 2, &ca);
    let c = crypto.enroll("C", 3, &ca);
    let m = crypto.enroll("M", 4, &ca);
    Pki {
        crypto,
        ca_pk: ca.public,
        v,
        c,
        m,
    }
}

/// Runs one session of `scenario` over a fresh realization of `world_cfg`.
pub fn run_simulation(
    world_cfg: &WorldConfig,
    scenario: &Scenario,
    session_cfg: &SessionConfig,
    seed: u64,
) -> Result<SimReport, SimError> {
    session_cfg
        .validate()
        .map_err(|e| SimError::Config(e.to_string()))?;
    scenario.validate(world_cfg)?;
    if (session_cfg.rate - world_cfg.rate).abs() > 1e-9 {
        return Err(SimError::Config(format!(
            "session rate {} Hz differs from world rate {} Hz",
            session_cfg.rate, world_cfg.rate
        )));
    }
    let world = World::new(world_cfg.clone(), seed)?;
    Sim::new(world, scenario.clone(), session_cfg.clone(), seed)?.run()
}

struct Sim {
    world: World,
    scenario: Scenario,
    cfg: SessionConfig,
    seed: u64,
    noise_seed: u64,
    nodes: BTreeMap<Party, Node>,
    verifier: VerifierSession,
    candidate: CandidateSession,
    adversary: Box<dyn Adversary>,
    queue: EventQueue<Ev>,
    transcript: Transcript,
    aborts: Vec<AbortRecord>,
    verdict: Option<Verdict>,
    log: Vec<LogEntry>,
    predicted_window: (f64, f64),
}

impl Sim {
    fn new(world: World, scenario: Scenario, cfg: SessionConfig, seed: u64) -> Result<Self, SimError> {
        let wc = &world.cfg;
        let variant = scenario.variant();
        let mut clocks = ChaCha8Rng::seed_from_u64(derive_seed(seed, "clocks"));
        let mut offset = || {
            if wc.clock_offset_max > 0.0 {
                clocks.random_range(-wc.clock_offset_max..=wc.clock_offset_max)
            } else {
                0.0
            }
        };
        let (off_v, off_c, off_m) = (offset(), offset(), offset());

        let first_request = match variant {
            Variant::KnownVerifier => wc.latency,
            Variant::Commitment => 2.0 * wc.latency,
        };
        let local_window = cfg.window_for_request(first_request + off_v);
        let predicted_window = (local_window.0 - off_v, local_window.1 - off_v);
        let duration = local_window.1 - local_window.0;
        let t0 = -1.0;
        let t1 = local_window.1
            + scenario.continuous_windows as f64 * duration
            + 2.0 * cfg.delta_t
            + 60.0;

        let route = |p: &GapProfile| world.route(p, t0, t1);
        let constant = |gap: f64| GapProfile::Constant { gap };
        let mut nodes = BTreeMap::new();
        let lead = world.lead_route(t0, t1)?;
        nodes.insert(
            Party::V,
            Node {
                offset: off_v,
                physical: lead.clone(),
                source: lead,
                replay_lead: 0.0,
            },
        );
        let live = |offset: f64, r: Route<f64>| Node {
            offset,
            physical: r.clone(),
            source: r,
            replay_lead: 0.0,
        };
        let c_node = match scenario.kind {
            ScenarioKind::Legit | ScenarioKind::FollowingAfar => {
                live(off_c, route(&constant(scenario.follow_distance()))?)
            }
            ScenarioKind::Remote => Node {
                offset: off_c,
                physical: route(&constant(REMOTE_GAP))?,
                source: route(&constant(scenario.near_distance))?,
                replay_lead: scenario.pre_record_lead,
            },
            ScenarioKind::PartiallyFollowing => live(
                off_c,
                route(&GapProfile::Partial {
                    near: scenario.near_distance,
                    far: scenario.adversary_distance,
                    theta: scenario.theta,
                    window: predicted_window,
                    pattern: scenario.pattern,
                    ramp_speed: scenario.ramp_speed,
                })?,
            ),
            ScenarioKind::MitmKnown | ScenarioKind::MitmParallel | ScenarioKind::MitmDelayed => {
                live(off_c, route(&constant(scenario.near_distance))?)
            }
        };
        nodes.insert(Party::C, c_node);
        if scenario.kind.is_mitm() {
            nodes.insert(Party::M, live(off_m, route(&constant(scenario.adversary_distance))?));
        }

        let pki = pki();
        let crypto: Arc<dyn pof_protocol::CryptoProvider> = pki.crypto.clone();
        let verifier = VerifierSession::new(cfg.clone(), pki.v.clone(), pki.ca_pk.clone(), variant, crypto.clone());
        let session_seed = derive_seed(seed, "session");
        let candidate = match variant {
            Variant::KnownVerifier => CandidateSession::known_verifier(
                cfg.clone(),
                pki.c.clone(),
                pki.ca_pk.clone(),
                pki.v.identity.clone(),
                crypto.clone(),
                session_seed,
            ),
            Variant::Commitment => {
                CandidateSession::commitment(cfg.clone(), pki.c.clone(), pki.ca_pk.clone(), crypto.clone(), session_seed)
            }
        };
        let kit = AdversaryKit {
            me: pki.m.clone(),
            verifier: pki.v.identity.clone(),
            candidate: pki.c.identity.clone(),
            crypto,
            cfg: cfg.clone(),
            latency: wc.latency,
            seed: derive_seed(seed, "adversary"),
        };
        let adversary: Box<dyn Adversary> = match scenario.kind {
            ScenarioKind::MitmKnown => Box::new(MitmKnown::new(kit)),
            ScenarioKind::MitmParallel => Box::new(MitmParallel::new(kit, scenario.mitm_strategy)),
            ScenarioKind::MitmDelayed => Box::new(MitmDelayed::new(kit)),
            _ => Box::new(Passive),
        };

        Ok(Self {
            world,
            scenario,
            cfg,
            seed,
            noise_seed: derive_seed(seed, "noise"),
            nodes,
            verifier,
            candidate,
            adversary,
            queue: EventQueue::new(),
            transcript: Transcript::default(),
            aborts: Vec::new(),
            verdict: None,
            log: Vec::new(),
            predicted_window,
        })
    }

    fn node(&self, p: Party) -> &Node {
        self.nodes.get(&p).expect("node exists")
    }

    fn local(&self, p: Party, t: f64) -> f64 {
        t + self.nodes.get(&p).map_or(0.0, |n| n.offset)
    }

    fn to_true(&self, p: Party, local: f64) -> f64 {
        local - self.nodes.get(&p).map_or(0.0, |n| n.offset)
    }

    fn run(mut self) -> Result<SimReport, SimError> {
        self.queue.push(0.0, Ev::Start(Party::V));
        self.queue.push(0.0, Ev::Start(Party::C));
        let mut processed = 0usize;
        while let Some((t, ev)) = self.queue.pop() {
            processed += 1;
            if processed > MAX_EVENTS {
                return Err(SimError::Runtime(format!("event limit of {MAX_EVENTS} exceeded")));
            }
            match ev {
                Ev::Start(p) => self.step_party(p, t, Event::Start)?,
                Ev::Deliver { to: Party::M, .. } => {}
                Ev::Deliver { to, frame } => self.step_party(to, t, Event::Received(frame))?,
                Ev::Collected { party: Party::M, trace } => {
                    let local = self.local(Party::M, t);
                    let acts = self.adversary.on_collection(local, trace);
                    self.apply_adversary(t, acts)?;
                }
                Ev::Collected { party, trace } => self.step_party(party, t, Event::CollectionComplete(trace))?,
                Ev::Timer { party, timer } => self.step_party(party, t, Event::TimerFired(timer))?,
                Ev::AdvTimer(tag) => {
                    let local = self.local(Party::M, t);
                    let acts = self.adversary.on_timer(local, tag);
                    self.apply_adversary(t, acts)?;
                }
            }
        }
        self.finish()
    }

    fn step_party(&mut self, p: Party, t: f64, ev: Event) -> Result<(), SimError> {
        let now = self.local(p, t);
        let actions = match p {
            Party::V => self.verifier.step(now, ev),
            Party::C => self.candidate.step(now, ev),
            Party::M => unreachable!("adversary is not a session"),
        };
        for a in actions {
            match a {
                Action::Send { to, frame } => self.transmit(t, p, &to, frame)?,
                Action::Broadcast { frame } => self.transmit(t, p, "*", frame)?,
                Action::StartCollection { start_t, end_t, rate } => self.collect(p, t, start_t, end_t, rate)?,
                Action::SetTimer { at, timer } => {
                    let when = self.to_true(p, at).max(t);
                    self.queue.push(when, Ev::Timer { party: p, timer });
                }
                Action::Verdict(v) => self.verdict = Some(v),
                Action::Abort { reason, detail } => self.aborts.push(AbortRecord {
                    t,
                    party: p.id().to_string(),
                    reason,
                    detail,
                }),
            }
        }
        Ok(())
    }

    fn transmit(&mut self, t: f64, from: Party, to: &str, frame: Vec<u8>) -> Result<(), SimError> {
        self.transcript.record(t, from.id(), to, &frame);
        let local = self.local(Party::M, t);
        let acts = self.adversary.intercept(local, from.id(), to, &frame);
        let latency = self.world.cfg.latency;
        let mut delay = None;
        let mut rest = Vec::new();
        for a in acts {
            match a {
                AdvAction::Relay => delay = Some(delay.unwrap_or(0.0)),
                AdvAction::Delay(d) => delay = Some(delay.unwrap_or(0.0f64).max(d.max(0.0))),
                AdvAction::Drop => {}
                other => rest.push(other),
            }
        }
        if let Some(d) = delay {
            for dst in self.recipients(from, to)? {
                self.queue.push(
                    t + latency + d,
                    Ev::Deliver {
                        to: dst,
                        frame: frame.clone(),
                    },
                );
            }
        }
        self.apply_adversary(t, rest)
    }

    fn recipients(&self, from: Party, to: &str) -> Result<Vec<Party>, SimError> {
        if to == "*" {
            return Ok(self.nodes.keys().copied().filter(|&p| p != from).collect());
        }
        match Party::from_id(to) {
            Some(p) if self.nodes.contains_key(&p) => Ok(vec![p]),
            _ => Err(SimError::Runtime(format!("frame addressed to unknown party {to}"))),
        }
    }

    fn apply_adversary(&mut self, t: f64, acts: Vec<AdvAction>) -> Result<(), SimError> {
        let latency = self.world.cfg.latency;
        for a in acts {
            match a {
                AdvAction::Inject { to, frame } => {
                    self.transcript.record(t, Party::M.id(), &to, &frame);
                    for dst in self.recipients(Party::M, &to)? {
                        self.queue.push(
                            t + latency,
                            Ev::Deliver {
                                to: dst,
                                frame: frame.clone(),
                            },
                        );
                    }
                }
                AdvAction::Record(note) => self.log.push(LogEntry { t, note }),
                AdvAction::Collect { start, end } => {
                    let rate = self.cfg.rate;
                    self.collect(Party::M, t, start, end, rate)?
                }
                AdvAction::SetTimer { at, tag } => {
                    let when = self.to_true(Party::M, at).max(t);
                    self.queue.push(when, Ev::AdvTimer(tag));
                }
                AdvAction::Relay | AdvAction::Drop | AdvAction::Delay(_) => {}
            }
        }
        Ok(())
    }

    fn sample(&self, p: Party, start_local: f64, count: usize, rate: f64) -> Result<RssTrace, SimError> {
        let node = self.node(p);
        self.world.sample(
            &node.source,
            &SampleRequest {
                vehicle_id: p.id(),
                seed: self.noise_seed,
                clock_offset: node.offset,
                start_local,
                count,
                rate,
                replay_lead: node.replay_lead,
            },
        )
    }

    fn collect(&mut self, p: Party, t: f64, start: f64, end: f64, rate: f64) -> Result<(), SimError> {
        let count = window_samples((start, end), rate);
        let trace = self.sample(p, start, count, rate)?;
        let done = self.to_true(p, end).max(t);
        self.queue.push(done, Ev::Collected { party: p, trace });
        Ok(())
    }

    fn ground_truth(&self, subject: Party, window: (f64, f64)) -> Result<GroundTruth, SimError> {
        let lead = &self.node(Party::V).physical;
        let other = &self.node(subject).physical;
        let d_ref = self.world.cfg.d_ref;
        let clip = |r: &Route<f64>, a: f64, b: f64| -> Result<Route<f64>, SimError> {
            let mut pts: Vec<_> = r.points().iter().copied().filter(|p| p.t > a && p.t < b).collect();
            let at = |t: f64| -> Result<_, SimError> {
                Ok(pof_core::kinematics::RoutePoint {
                    pos: r.position_at(t).map_err(|e| SimError::Runtime(e.to_string()))?,
                    t,
                })
            };
            pts.insert(0, at(a)?);
            pts.push(at(b)?);
            Route::with_speed_bound(pts, f64::INFINITY).map_err(|e| SimError::Runtime(e.to_string()))
        };
        let check = |a: f64, b: f64| -> Result<_, SimError> {
            is_following(&clip(lead, a, b)?, &clip(other, a, b)?, d_ref, TRUTH_DT)
                .map_err(|e| SimError::Runtime(e.to_string()))
        };
        let whole = check(window.0, window.1)?;
        let p = &self.cfg.params;
        let period = 1.0 / self.cfg.rate;
        let half = p.n / 2;
        let mut inside = 0usize;
        for k in 0..p.k {
            let a = window.0 + (k * half) as f64 * period;
            let b = a + (p.n - 1) as f64 * period;
            if b <= window.1 + 1e-9 && check(a, b)?.following {
                inside += 1;
            }
        }
        Ok(GroundTruth {
            subject: subject.id().to_string(),
            window,
            following: whole.following,
            following_fraction: whole.fraction_within,
            subset_following_fraction: inside as f64 / p.k as f64,
            max_separation: whole.max_separation,
        })
    }

    fn continuous(&self, window_local: (f64, f64)) -> Result<Vec<WindowOutcome>, SimError> {
        let n = self.scenario.continuous_windows;
        if n == 0 || self.verdict.is_none() {
            return Ok(Vec::new());
        }
        let need = self.cfg.params.required_samples();
        let rate = self.cfg.rate;
        let start = window_local.0 + need as f64 / rate;
        let v = self.sample(Party::V, start, n * need, rate)?;
        let c = self.sample(Party::C, start - 1.0, n * need + 2 * rate as usize, rate)?;
        Ok(continuous_verification(&self.cfg, &v, &c))
    }

    fn finish(self) -> Result<SimReport, SimError> {
        let subject = self
            .verifier
            .candidate()
            .and_then(|c| Party::from_id(&c.id))
            .filter(|p| self.nodes.contains_key(p))
            .unwrap_or(if self.scenario.kind.is_mitm() { Party::M } else { Party::C });
        let off_v = self.node(Party::V).offset;
        let window_local = match self.verifier.own_trace().and_then(|t| Some((t.start()?, t.end()?))) {
            Some(w) => w,
            None => (self.predicted_window.0 + off_v, self.predicted_window.1 + off_v),
        };
        let window = (window_local.0 - off_v, window_local.1 - off_v);
        let ground_truth = self.ground_truth(subject, window)?;
        let continuous = self.continuous(window_local)?;
        let outcome = match (&self.verdict, self.aborts.first()) {
            (Some(v), _) if v.accept => Outcome::Accept,
            (Some(_), _) => Outcome::Reject,
            (None, Some(a)) => Outcome::Aborted {
                party: a.party.clone(),
                reason: a.reason,
            },
            (None, None) => Outcome::Incomplete,
        };
        let clock_offsets = self
            .nodes
            .iter()
            .map(|(p, n)| (p.id().to_string(), n.offset))
            .collect();
        Ok(SimReport {
            scenario: self.scenario.label(),
            kind: self.scenario.kind,
            variant: self.scenario.variant(),
            seed: self.seed,
            outcome,
            verdict: self.verdict,
            aborts: self.aborts,
            ground_truth,
            clock_offsets,
            adversary_log: self.log,
            continuous,
            transcript: self.transcript,
        })
    }
}
