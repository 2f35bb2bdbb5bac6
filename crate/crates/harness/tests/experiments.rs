//! Experiment-level behavior of the harness commands on the simulated
//! world.

use std::path::Path;

use pof_core::verify::{pass_probability, PofParams};
use pof_harness::offline::{apen_of, ApenOptions};
use pof_harness::{sweep, tune, LoadedConfig, SweepKind};
use pof_sim::experiments::{signal_rhos_many, SignalPair};
use pof_sim::world::SampleRequest;
use pof_sim::{World, WorldConfig};

fn config(text: &str) -> LoadedConfig {
    LoadedConfig::from_text(Path::new("test.json"), text.to_string()).unwrap()
}

#[test]
fn tuned_threshold_for_follower_at_20m_against_90m() {
    let cfg = config(
        r#"{"training": {"simulated": {"legit_gaps": [20, 20], "adversary_gaps": [90, 90], "per_class": 40}}}"#,
    );
    let mut taus: Vec<f64> = (0..5)
        .map(|seed| {
            let r = tune(&cfg, seed).unwrap();
            println!(
                "seed {seed}: tau*={} K*={} alpha*={:.3} eer*={:.2e} held-out {:?}",
                r.tuned.tau, r.tuned.k, r.tuned.alpha, r.tuned.eer, r.held_out
            );
            r.tuned.tau
        })
        .collect();
    taus.sort_by(f64::total_cmp);
    let median = taus[2];
    println!("median tau* = {median}");
    assert!((0.30..=0.45).contains(&median), "median tau* {median}");
}

#[test]
fn k_sweep_follows_binomial_model_and_converges() {
    let seeds: Vec<u64> = (0..100).collect();
    let cfg = config(r#"{"seeds": {"from": 0, "count": 100}, "sweep": {"gap": 15, "remote_lead": 3600}}"#);
    let ks: Vec<f64> = (1..=20).map(f64::from).collect();
    let out = sweep(&cfg, SweepKind::K, &ks).unwrap();
    let remote = out.remote.clone().unwrap();
    let p = PofParams::default();
    let world = WorldConfig::default();
    let f_hat = |pair: SignalPair| {
        let all: Vec<f64> = signal_rhos_many(&world, &p, pair, &seeds).unwrap().concat();
        all.iter().filter(|&&r| r >= p.tau).count() as f64 / all.len() as f64
    };
    let f_c = f_hat(SignalPair::at_gap(15.0));
    let f_m = f_hat(SignalPair {
        replay_lead: 3600.0,
        ..SignalPair::at_gap(15.0)
    });
    println!("per-test pass rates: follower {f_c:.3}, remote {f_m:.3}");
    for (curve, f, name) in [(&out.curve, f_c, "follower"), (&remote, f_m, "remote")] {
        for pt in curve {
            let k = pt.x as usize;
            let model = pass_probability(f, k, p.alpha);
            let se = (model * (1.0 - model) / pt.n as f64).sqrt();
            println!("{name} K={k:2}: empirical {:.2} model {model:.3}", pt.mean);
            assert!(
                (pt.mean - model).abs() <= 3.0 * se + 0.05,
                "{name} K={k}: {} vs {model}",
                pt.mean
            );
        }
    }
    assert!(out.curve[9..].iter().all(|p| p.mean >= 0.98), "{:?}", out.curve);
    assert!(remote[9..].iter().all(|p| p.mean <= 0.02), "{remote:?}");
    assert!(remote[19].mean < remote[0].mean && out.curve[19].mean >= out.curve[0].mean);
}

#[test]
fn approximate_entropy_band_on_simulated_traces() {
    // recorded urban and highway drives score 0.4730 and 0.3088; reference only
    let cfg = WorldConfig::default();
    let values: Vec<f64> = (0..100)
        .map(|seed| {
            let world = World::new(cfg.clone(), seed).unwrap();
            let route = world.lead_route(0.0, 110.0).unwrap();
            let req = SampleRequest {
                vehicle_id: "V",
                seed,
                clock_offset: 0.0,
                start_local: 1.0,
                count: 2000,
                rate: cfg.rate,
                replay_lead: 0.0,
            };
            let rss: Vec<f64> = world.sample(&route, &req).unwrap().samples().iter().map(|s| s.rss).collect();
            apen_of(&rss, ApenOptions::default()).unwrap()
        })
        .collect();
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    println!("ApEn(m=2, R=0.2 std, M=20) over 100 seeds: mean {mean:.4}, band [{lo:.4}, {hi:.4}]");
    assert!(lo > 0.0 && hi.is_finite());
    let constant = apen_of(&[-70.0; 2000], ApenOptions::default()).unwrap();
    assert!(lo > constant);
}

#[test]
fn distance_sweep_is_decreasing_and_fits_configured_decorrelation() {
    let cfg = config(r#"{"seeds": {"from": 0, "count": 12}}"#);
    let grid: Vec<f64> = (0..8).map(|i| 10.0 + 15.0 * i as f64).collect();
    let out = sweep(&cfg, SweepKind::Distance, &grid).unwrap();
    for w in out.curve.windows(2) {
        assert!(w[1].mean < w[0].mean + 0.03, "{:?}", out.curve);
    }
    let dc = out.fitted_d_corr.unwrap();
    println!("fitted d_corr {dc:.2} m");
    assert!((dc - 53.35).abs() / 53.35 <= 0.15, "{dc}");
}
