//! `pof tune`: EER-minimizing parameter search on a seeded train/test split
//! of labeled trace pairs.

use pof_core::io::read_trace;
use pof_core::seed::derive_seed;
use pof_core::sigproc::{align, default_alignment_tolerance};
use pof_core::verify::{self, correlation_tests, decide, PofParams, TunedParams, VerifyError};
use pof_sim::experiments::training_pairs;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{Label, LoadedConfig, ParamsSource, TrainingSpec};
use crate::{HarnessError, Result};

/// Held-out passing rates of the tuned tuple.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeldOut {
    #[serde(rename = "F_C")]
    pub f_c: f64,
    #[serde(rename = "F_M")]
    pub f_m: f64,
    pub legit_pairs: usize,
    pub adversary_pairs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub legit_pairs: usize,
    pub adversary_pairs: usize,
    pub legit_rhos: usize,
    pub adversary_rhos: usize,
}

/// Written by `pof tune`. Carries `N, M, K, tau, alpha` at the top level,
/// so the file doubles as a params file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneReport {
    #[serde(flatten)]
    pub tuned: TunedParams,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub held_out: Option<HeldOut>,
    pub training: SplitCounts,
    pub seed: u64,
    pub warnings: Vec<String>,
}

impl TuneReport {
    pub fn params(&self) -> PofParams {
        self.tuned.into_params(self.n, self.m)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

struct Pair {
    label: Label,
    rhos: Vec<f64>,
}

fn base_params(cfg: &LoadedConfig) -> PofParams {
    match &cfg.raw.params {
        Some(ParamsSource::Explicit(p)) => *p,
        _ => cfg.raw.session.params,
    }
}

fn gather(cfg: &LoadedConfig, spec: &TrainingSpec, base: PofParams, seed: u64) -> Result<Vec<Pair>> {
    let mut pairs = Vec::new();
    for p in &spec.pairs {
        let vpath = cfg.resolve(&p.verifier);
        let tv = read_trace(&vpath)?;
        let tc = read_trace(&cfg.resolve(&p.candidate))?;
        let aligned = align(&tv, &tc, default_alignment_tolerance(tv.rate()))
            .map_err(|e| HarnessError::Runtime(format!("{}: {e}", vpath.display())))?;
        let avail = (2 * aligned.len() / base.n).saturating_sub(1).min(spec.k_max);
        if avail == 0 {
            return Err(HarnessError::Runtime(format!(
                "{}: {} aligned samples do not fill one subset of N={}",
                vpath.display(),
                aligned.len(),
                base.n
            )));
        }
        let params = PofParams { k: avail, ..base };
        let rhos = correlation_tests(&aligned, &params).map_err(HarnessError::runtime)?;
        pairs.push(Pair { label: p.label, rhos });
    }
    if let Some(s) = &spec.simulated {
        let sim = training_pairs(
            &cfg.world,
            base.n,
            base.m,
            spec.k_max,
            s.legit_gaps,
            s.adversary_gaps,
            s.per_class,
            derive_seed(seed, "tune/training"),
        )
        .map_err(HarnessError::runtime)?;
        pairs.extend(sim.into_iter().map(|p| Pair {
            label: if p.legit { Label::Legit } else { Label::Adversary },
            rhos: p.rhos,
        }));
    }
    Ok(pairs)
}

/// Shuffles `idx` with `rng` and splits off the training share; a class of
/// one trains on its only pair and holds nothing out.
fn split(mut idx: Vec<usize>, fraction: f64, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    idx.shuffle(rng);
    let n_train = ((fraction * idx.len() as f64).ceil() as usize).clamp(1, idx.len());
    let test = idx.split_off(n_train);
    (idx, test)
}

/// Tunes `(tau, K, alpha)` on the config's `training` section with base
/// seed `seed`.
pub fn tune(cfg: &LoadedConfig, seed: u64) -> Result<TuneReport> {
    let spec = cfg
        .raw
        .training
        .as_ref()
        .ok_or_else(|| cfg.error_at("training", "config has no `training` section"))?;
    let base = base_params(cfg);
    let pairs = gather(cfg, spec, base, seed)?;
    let of = |l: Label| -> Vec<usize> { (0..pairs.len()).filter(|&i| pairs[i].label == l).collect() };
    let (legit, adversary) = (of(Label::Legit), of(Label::Adversary));
    let mut warnings = Vec::new();
    for (name, idx) in [("legit", &legit), ("adversary", &adversary)] {
        if idx.is_empty() {
            return Err(cfg.error_at("training", format!("no {name} training pairs")));
        }
        if idx.len() < 2 {
            warnings.push(format!(
                "small sample: only {} {name} pair; held-out rates cannot be estimated",
                idx.len()
            ));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "tune/split"));
    let (train_c, test_c) = split(legit, spec.train_fraction, &mut rng);
    let (train_m, test_m) = split(adversary, spec.train_fraction, &mut rng);
    let pool = |idx: &[usize]| -> Vec<f64> { idx.iter().flat_map(|&i| pairs[i].rhos.iter().copied()).collect() };
    let (rho_c, rho_m) = (pool(&train_c), pool(&train_m));
    let tuned = verify::tune(&rho_c, &rho_m, spec.k_max).map_err(|e| match e {
        VerifyError::Inseparable => HarnessError::Infeasible(format!(
            "{e} ({} legit and {} adversary training correlations)",
            rho_c.len(),
            rho_m.len()
        )),
        other => cfg.error_at("training", other.to_string()),
    })?;

    let rate = |idx: &[usize], warnings: &mut Vec<String>| -> Option<(f64, usize)> {
        let usable: Vec<&Pair> = idx.iter().map(|&i| &pairs[i]).filter(|p| p.rhos.len() >= tuned.k).collect();
        if usable.len() < idx.len() {
            warnings.push(format!(
                "{} held-out pair(s) have fewer than K={} tests and were skipped",
                idx.len() - usable.len(),
                tuned.k
            ));
        }
        if usable.is_empty() {
            return None;
        }
        let accepted = usable
            .iter()
            .filter(|p| decide(&p.rhos[..tuned.k], tuned.tau, tuned.alpha).accept)
            .count();
        Some((accepted as f64 / usable.len() as f64, usable.len()))
    };
    let held_c = rate(&test_c, &mut warnings);
    let held_m = rate(&test_m, &mut warnings);
    let held_out = match (held_c, held_m) {
        (Some((f_c, nc)), Some((f_m, nm))) => Some(HeldOut {
            f_c,
            f_m,
            legit_pairs: nc,
            adversary_pairs: nm,
        }),
        _ => None,
    };
    Ok(TuneReport {
        tuned,
        n: base.n,
        m: base.m,
        held_out,
        training: SplitCounts {
            legit_pairs: train_c.len(),
            adversary_pairs: train_m.len(),
            legit_rhos: rho_c.len(),
            adversary_rhos: rho_m.len(),
        },
        seed,
        warnings,
    })
}
