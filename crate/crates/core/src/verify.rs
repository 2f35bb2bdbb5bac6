//! Decision engine: per-subset correlation tests, the K-of-α acceptance
//! rule, binomial passing probability and the EER-minimizing parameter
//! search.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::spatial_correlation;
use crate::scalar::Scalar;
use crate::sigproc::{self, AlignedPair, SigprocError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VerifyError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("need {required} aligned samples for K={k}, N={n}; got {available}")]
    InsufficientSamples { required: usize, available: usize, k: usize, n: usize },
    #[error("empty training set ({0})")]
    EmptyTraining(&'static str),
    #[error("inseparable training data: no threshold on the grid gives f_C > 0.5 and f_M < 0.5")]
    Inseparable,
    #[error(transparent)]
    Signal(#[from] SigprocError),
}

/// Verification tuple.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PofParams {
    /// Subset length in samples.
    #[serde(rename = "N")]
    pub n: usize,
    /// Moving-average window.
    #[serde(rename = "M")]
    pub m: usize,
    /// Number of correlation tests.
    #[serde(rename = "K")]
    pub k: usize,
    pub tau: f64,
    pub alpha: f64,
}

impl Default for PofParams {
    fn default() -> Self {
        Self {
            n: 400,
            m: 20,
            k: 20,
            tau: 0.35,
            alpha: 0.686,
        }
    }
}

impl PofParams {
    pub fn validate(&self) -> Result<(), VerifyError> {
        let err = |m: String| Err(VerifyError::InvalidParams(m));
        if self.n == 0 || self.n % 2 != 0 {
            return err(format!("N must be even and positive, got {}", self.n));
        }
        if self.m == 0 || self.n < 2 * self.m {
            return err(format!("need 1 <= M and N >= 2M (N={}, M={})", self.n, self.m));
        }
        if self.k == 0 {
            return err("K must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return err(format!("tau must lie in [0, 1], got {}", self.tau));
        }
        let need = required_passes(self.alpha, self.k);
        if !(self.alpha > 0.0 && self.alpha <= 1.0) || need < 1 || need > self.k {
            return err(format!("alpha={} gives ceil(alpha*K) outside [1, K]", self.alpha));
        }
        Ok(())
    }

    /// Aligned samples consumed by one verification, `(K+1)·N/2`.
    pub fn required_samples(&self) -> usize {
        sigproc::required_samples(self.k, self.n)
    }

    /// Collection time for one verification at `rate` Hz.
    pub fn duration_secs(&self, rate: f64) -> f64 {
        self.required_samples() as f64 / rate
    }

    pub fn required_passes(&self) -> usize {
        required_passes(self.alpha, self.k)
    }
}

/// `⌈α·K⌉`, robust to α having been computed as `j/K` in floating point.
pub fn required_passes(alpha: f64, k: usize) -> usize {
    let v = (alpha * k as f64 - 1e-9).ceil();
    if v <= 0.0 {
        0
    } else {
        v as usize
    }
}

/// Correlation of each half-overlapping subset pair after smoothing both
/// sides with an `M`-point moving average. Degenerate (flat) subsets
/// score −1.
pub fn correlation_tests<T: Scalar>(pair: &AlignedPair<T>, p: &PofParams) -> Result<Vec<T>, VerifyError> {
    p.validate()?;
    let required = p.required_samples();
    if pair.len() < required {
        return Err(VerifyError::InsufficientSamples {
            required,
            available: pair.len(),
            k: p.k,
            n: p.n,
        });
    }
    let a = sigproc::split_subsets(&pair.a[..required], p.n)?;
    let b = sigproc::split_subsets(&pair.b[..required], p.n)?;
    debug_assert_eq!(a.len(), p.k);
    a.iter()
        .zip(&b)
        .map(|(sa, sb)| {
            let ma = sigproc::moving_average(sa, p.m)?;
            let mb = sigproc::moving_average(sb, p.m)?;
            match sigproc::pearson(&ma, &mb) {
                Ok(r) => Ok(r),
                Err(SigprocError::Degenerate) => Ok(-T::one()),
                Err(e) => Err(e.into()),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PofDecision<T> {
    pub rhos: Vec<T>,
    pub passed_count: usize,
    pub required: usize,
    pub accept: bool,
}

/// Accept iff at least `⌈α·K⌉` of the `K = rhos.len()` values reach `tau`.
pub fn decide<T: Scalar>(rhos: &[T], tau: T, alpha: f64) -> PofDecision<T> {
    let passed_count = rhos.iter().filter(|&&r| r >= tau).count();
    let required = required_passes(alpha, rhos.len());
    PofDecision {
        rhos: rhos.to_vec(),
        passed_count,
        required,
        accept: !rhos.is_empty() && passed_count >= required,
    }
}

/// Runs the full verification on an aligned pair.
pub fn verify_pair<T: Scalar>(pair: &AlignedPair<T>, p: &PofParams) -> Result<PofDecision<T>, VerifyError> {
    let rhos = correlation_tests(pair, p)?;
    Ok(decide(&rhos, T::of(p.tau), p.alpha))
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn binomial_sum(f: f64, k: usize, range: std::ops::Range<usize>) -> f64 {
    let q = 1.0 - f;
    // Neumaier-compensated sum
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for x in range {
        let term = binomial(k, x) * f.powi(x as i32) * q.powi((k - x) as i32);
        let t = sum + term;
        if sum.abs() >= term.abs() {
            comp += (sum - t) + term;
        } else {
            comp += (term - t) + sum;
        }
        sum = t;
    }
    (sum + comp).clamp(0.0, 1.0)
}

/// Probability that at least `⌈α·K⌉` of `K` independent tests pass when
/// each passes with probability `f`.
pub fn pass_probability<T: Scalar>(f: T, k: usize, alpha: f64) -> T {
    let f = f.as_f64().clamp(0.0, 1.0);
    T::of(binomial_sum(f, k, required_passes(alpha, k)..k + 1))
}

/// `1 − pass_probability`, summed over the lower tail so that tiny miss
/// rates keep their precision.
pub fn fail_probability<T: Scalar>(f: T, k: usize, alpha: f64) -> T {
    let f = f.as_f64().clamp(0.0, 1.0);
    T::of(binomial_sum(f, k, 0..required_passes(alpha, k).min(k + 1)))
}

/// Threshold from the average correlation model, `e^(−d_ref/d_corr)`.
pub fn model_threshold<T: Scalar>(d_ref: T, d_corr: T) -> T {
    spatial_correlation(d_ref, d_corr)
}

/// Empirical fraction of `rhos` at or above `tau`.
pub fn estimate_pass_rate<T: Scalar>(rhos: &[T], tau: T) -> T {
    if rhos.is_empty() {
        return T::zero();
    }
    T::of_usize(rhos.iter().filter(|&&r| r >= tau).count()) / T::of_usize(rhos.len())
}

pub const DEFAULT_K_MAX: usize = 40;

/// Threshold grid searched by [`tune`]: `0.00, 0.01, …, 1.00`.
pub fn tau_grid() -> impl Iterator<Item = f64> {
    (0..=100).map(|j| j as f64 / 100.0)
}

/// Outcome of the parameter search, serialized as
/// `{tau, K, alpha, eer, f_C, f_M}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TunedParams {
    pub tau: f64,
    #[serde(rename = "K")]
    pub k: usize,
    pub alpha: f64,
    pub eer: f64,
    #[serde(rename = "f_C")]
    pub f_c: f64,
    #[serde(rename = "f_M")]
    pub f_m: f64,
}

impl TunedParams {
    pub fn pass_rates(&self) -> (f64, f64) {
        (
            pass_probability(self.f_c, self.k, self.alpha),
            pass_probability(self.f_m, self.k, self.alpha),
        )
    }

    pub fn into_params(self, n: usize, m: usize) -> PofParams {
        PofParams {
            n,
            m,
            k: self.k,
            tau: self.tau,
            alpha: self.alpha,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    tau: f64,
    k: usize,
    passes: usize,
    f_c: f64,
    f_m: f64,
    eer: f64,
    gap: f64,
}

// eer asc, then K asc, then gap desc, then tau asc, then alpha asc
// Relative comparison; differences at rounding level count as ties.
fn cmp_rel(a: f64, b: f64) -> Ordering {
    if (a - b).abs() <= 1e-9 * a.abs().max(b.abs()) {
        Ordering::Equal
    } else {
        a.total_cmp(&b)
    }
}

fn rank(a: &Candidate, b: &Candidate) -> Ordering {
    cmp_rel(a.eer, b.eer)
        .then(a.k.cmp(&b.k))
        .then(cmp_rel(b.gap, a.gap))
        .then(a.tau.total_cmp(&b.tau))
        .then(a.passes.cmp(&b.passes))
}

/// Exhaustive search over `τ ∈ {0.00,…,1.00}` with `f_C > 0.5` and
/// `f_M < 0.5`, `K ∈ 1..=k_max` and `α ∈ {j/K}` minimizing
/// `max(1 − F_C, F_M)`.
pub fn tune(train_c: &[f64], train_m: &[f64], k_max: usize) -> Result<TunedParams, VerifyError> {
    if train_c.is_empty() {
        return Err(VerifyError::EmptyTraining("legitimate"));
    }
    if train_m.is_empty() {
        return Err(VerifyError::EmptyTraining("adversary"));
    }
    if k_max == 0 {
        return Err(VerifyError::InvalidParams("K_max must be at least 1".into()));
    }
    let mut best: Option<Candidate> = None;
    let mut feasible = false;
    for tau in tau_grid() {
        let f_c = estimate_pass_rate(train_c, tau);
        let f_m = estimate_pass_rate(train_m, tau);
        if !(f_c > 0.5 && f_m < 0.5) {
            continue;
        }
        feasible = true;
        for k in 1..=k_max {
            for passes in 1..=k {
                let alpha = passes as f64 / k as f64;
                let miss_c = fail_probability(f_c, k, alpha);
                let big_m = pass_probability(f_m, k, alpha);
                let cand = Candidate {
                    tau,
                    k,
                    passes,
                    f_c,
                    f_m,
                    eer: miss_c.max(big_m),
                    gap: (1.0 - miss_c) - big_m,
                };
                if best.as_ref().is_none_or(|b| rank(&cand, b) == Ordering::Less) {
                    best = Some(cand);
                }
            }
        }
    }
    match best {
        Some(b) if feasible => Ok(TunedParams {
            tau: b.tau,
            k: b.k,
            alpha: b.passes as f64 / b.k as f64,
            eer: b.eer,
            f_c: b.f_c,
            f_m: b.f_m,
        }),
        _ => Err(VerifyError::Inseparable),
    }
}

/// Secondary strategy: with `tau` and `K` fixed (e.g. `tau` from
/// [`model_threshold`]), pick `α = j/K` maximizing `F_C − F_M`.
pub fn tune_max_gap(train_c: &[f64], train_m: &[f64], tau: f64, k: usize) -> Result<TunedParams, VerifyError> {
    if train_c.is_empty() {
        return Err(VerifyError::EmptyTraining("legitimate"));
    }
    if train_m.is_empty() {
        return Err(VerifyError::EmptyTraining("adversary"));
    }
    if k == 0 {
        return Err(VerifyError::InvalidParams("K must be at least 1".into()));
    }
    let f_c = estimate_pass_rate(train_c, tau);
    let f_m = estimate_pass_rate(train_m, tau);
    let (passes, miss_c, big_m) = (1..=k)
        .map(|j| {
            let a = j as f64 / k as f64;
            (j, fail_probability(f_c, k, a), pass_probability(f_m, k, a))
        })
        .max_by(|x, y| ((1.0 - x.1) - x.2).total_cmp(&((1.0 - y.1) - y.2)).then(y.0.cmp(&x.0)))
        .expect("k >= 1");
    Ok(TunedParams {
        tau,
        k,
        alpha: passes as f64 / k as f64,
        eer: miss_c.max(big_m),
        f_c,
        f_m,
    })
}
