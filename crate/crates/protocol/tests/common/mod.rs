#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::Arc;

use pof_core::channel::{generate_rss_trace, PathLossParams, SamplingConfig, ShadowField, ShadowFieldParams};
use pof_core::kinematics::{KinematicSpec, Point, Polyline};
use pof_core::RssTrace;
use pof_protocol::{
    Action, CandidateSession, Credentials, Event, KeyPair, SessionConfig, ToyProvider, Transcript, Variant,
    Verdict, VerifierSession,
};

pub struct Pki {
    pub provider: Arc<ToyProvider>,
    pub ca: KeyPair,
    pub c: Credentials,
    pub v: Credentials,
    pub m: Credentials,
}

pub fn pki() -> Pki {
    let provider = Arc::new(ToyProvider::new());
    let ca = provider.keygen(0);
    let c = provider.enroll("C", 1, &ca);
    let v = provider.enroll("V", 2, &ca);
    let m = provider.enroll("M", 3, &ca);
    Pki { provider, ca, c, v, m }
}

/// RSS seen by a vehicle `behind` metres behind the lead over `[0, secs)`.
pub fn trace(seed: u64, behind: f64, secs: f64, id: &str) -> RssTrace {
    let field = ShadowField::new(6.0, ShadowFieldParams { seed, ..Default::default() }).unwrap();
    let route = KinematicSpec {
        path: Polyline::straight(10_000.0),
        speed: 13.3,
        start_offset: 500.0 - behind,
        start_time: 0.0,
        jitter: 0.0,
    }
    .route(0.0, secs + 1.0, 0.05, 0)
    .unwrap();
    let mut cfg = SamplingConfig::new(20.0, 4.0, seed, id);
    cfg.window = Some((0.0, (secs * 20.0) as usize));
    let station = Point::new(1500.0, 3000.0);
    generate_rss_trace(&route, &[station], &PathLossParams::default(), &field, &cfg).unwrap()
}

/// Window contents as a collection would return them.
pub fn collect(full: &RssTrace, start: f64, end: f64) -> RssTrace {
    full.window(start - 1e-9, end - 1e-6)
}

#[derive(Debug, Default)]
pub struct Outcome {
    pub verdict: Option<Verdict>,
    pub cand_aborts: Vec<Action>,
    pub ver_aborts: Vec<Action>,
    pub transcript: Transcript,
}

/// Wire hook: `(src, dst, frame) -> frame to deliver`, `None` drops it.
pub type Tamper<'a> = dyn FnMut(&str, &str, Vec<u8>) -> Option<Vec<u8>> + 'a;

/// Runs one candidate/verifier pair to completion with 10 ms latency and
/// perfectly synchronized clocks.
pub fn run(
    variant: Variant,
    cfg: &SessionConfig,
    pki: &Pki,
    c_full: &RssTrace,
    v_full: &RssTrace,
    tamper: &mut Tamper<'_>,
) -> Outcome {
    let mut cand = match variant {
        Variant::KnownVerifier => CandidateSession::known_verifier(
            cfg.clone(),
            pki.c.clone(),
            pki.ca.public.clone(),
            pki.v.identity.clone(),
            pki.provider.clone(),
            7,
        ),
        Variant::Commitment => {
            CandidateSession::commitment(cfg.clone(), pki.c.clone(), pki.ca.public.clone(), pki.provider.clone(), 7)
        }
    };
    let mut ver = VerifierSession::new(cfg.clone(), pki.v.clone(), pki.ca.public.clone(), variant, pki.provider.clone());
    let mut queue: BTreeMap<(u64, u64), (bool, Event)> = BTreeMap::new();
    let key = |t: f64| (t * 1e6).round() as u64;
    let mut seq = 0u64;
    let mut push = |q: &mut BTreeMap<(u64, u64), (bool, Event)>, t: f64, to_cand: bool, e: Event| {
        q.insert((key(t), seq), (to_cand, e));
        seq += 1;
    };
    push(&mut queue, 0.0, false, Event::Start);
    push(&mut queue, 0.0, true, Event::Start);
    let mut out = Outcome::default();
    while let Some(((tk, _), (to_cand, ev))) = queue.pop_first() {
        let now = tk as f64 * 1e-6;
        let actions = if to_cand { cand.step(now, ev) } else { ver.step(now, ev) };
        let src = if to_cand { "C" } else { "V" };
        for a in actions {
            match a {
                Action::Send { to, frame } => {
                    out.transcript.record(now, src, &to, &frame);
                    if let Some(f) = tamper(src, &to, frame) {
                        push(&mut queue, now + 0.01, to == "C", Event::Received(f));
                    }
                }
                Action::Broadcast { frame } => {
                    out.transcript.record(now, src, "*", &frame);
                    if let Some(f) = tamper(src, "*", frame) {
                        push(&mut queue, now + 0.01, !to_cand, Event::Received(f));
                    }
                }
                Action::StartCollection { start_t, end_t, .. } => {
                    let full = if to_cand { c_full } else { v_full };
                    push(&mut queue, end_t, to_cand, Event::CollectionComplete(collect(full, start_t, end_t)));
                }
                Action::SetTimer { at, timer } => push(&mut queue, at, to_cand, Event::TimerFired(timer)),
                Action::Verdict(v) => out.verdict = Some(v),
                abort @ Action::Abort { .. } => {
                    if to_cand {
                        out.cand_aborts.push(abort)
                    } else {
                        out.ver_aborts.push(abort)
                    }
                }
            }
        }
    }
    out
}

pub fn passthrough() -> impl FnMut(&str, &str, Vec<u8>) -> Option<Vec<u8>> {
    |_, _, f| Some(f)
}
