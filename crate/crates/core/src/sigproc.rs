//! Signal pipeline: timestamp alignment, moving-average smoothing, subset
//! formation, Pearson correlation and approximate entropy.

use thiserror::Error;

use crate::channel::RssTrace;
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SigprocError {
    #[error("declared rates differ: {0} Hz vs {1} Hz")]
    RateMismatch(f64, f64),
    #[error("traces do not overlap in time")]
    NoOverlap,
    #[error("misaligned traces: {exceeding} of {candidates} candidate pairs exceed the {tol} s tolerance")]
    Misaligned { exceeding: usize, candidates: usize, tol: f64 },
    #[error("input of length {len} shorter than required {required}")]
    TooShort { len: usize, required: usize },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("zero-variance input")]
    Degenerate,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Fraction of candidate pairs allowed to exceed the alignment tolerance.
pub const MAX_MISALIGNED_FRACTION: f64 = 0.05;

/// Two time-aligned RSS sequences; `a[i]` and `b[i]` were taken at
/// (nearly) the same instant `times[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedPair<T> {
    pub a: Vec<T>,
    pub b: Vec<T>,
    /// Timestamps of the `a` side.
    pub times: Vec<f64>,
    pub t0: f64,
    pub rate: f64,
}

impl<T: Scalar> AlignedPair<T> {
    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    /// Pair over indices `[from, to)`.
    pub fn slice(&self, from: usize, to: usize) -> Self {
        Self {
            a: self.a[from..to].to_vec(),
            b: self.b[from..to].to_vec(),
            times: self.times[from..to].to_vec(),
            t0: self.times.get(from).copied().unwrap_or(self.t0),
            rate: self.rate,
        }
    }
}

pub fn default_alignment_tolerance(rate: f64) -> f64 {
    0.5 / rate
}

/// Pairs each sample of `tv` inside the common span with the nearest
/// sample of `tc`. Pairs whose gap exceeds `tol` (or that would reuse a
/// `tc` sample) are dropped; more than 5% dropped is an error.
pub fn align(tv: &RssTrace, tc: &RssTrace, tol: f64) -> Result<AlignedPair<f64>, SigprocError> {
    let (rv, rc) = (tv.rate(), tc.rate());
    if (rv - rc).abs() > 1e-9 * rv.max(rc) {
        return Err(SigprocError::RateMismatch(rv, rc));
    }
    let (v, c) = (tv.samples(), tc.samples());
    let (Some(vs), Some(cs)) = (v.first(), c.first()) else {
        return Err(SigprocError::NoOverlap);
    };
    let start = vs.t.max(cs.t);
    let end = v[v.len() - 1].t.min(c[c.len() - 1].t);
    if start > end + tol {
        return Err(SigprocError::NoOverlap);
    }
    let mut out = AlignedPair {
        a: Vec::new(),
        b: Vec::new(),
        times: Vec::new(),
        t0: 0.0,
        rate: rv,
    };
    let mut candidates = 0usize;
    let mut exceeding = 0usize;
    let mut j = 0usize;
    let mut last_used: Option<usize> = None;
    for s in v.iter().filter(|s| s.t >= start - tol && s.t <= end + tol) {
        candidates += 1;
        while j + 1 < c.len() && (c[j + 1].t - s.t).abs() <= (c[j].t - s.t).abs() {
            j += 1;
        }
        let gap = (c[j].t - s.t).abs();
        if gap > tol || last_used == Some(j) {
            exceeding += 1;
            continue;
        }
        last_used = Some(j);
        out.a.push(s.rss);
        out.b.push(c[j].rss);
        out.times.push(s.t);
    }
    if candidates == 0 || out.a.is_empty() {
        return Err(SigprocError::NoOverlap);
    }
    if exceeding as f64 > MAX_MISALIGNED_FRACTION * candidates as f64 {
        return Err(SigprocError::Misaligned { exceeding, candidates, tol });
    }
    out.t0 = out.times[0];
    Ok(out)
}

/// Trailing moving average: `out[i] = mean(x[i..i+m])`, length `len − m + 1`.
pub fn moving_average<T: Scalar>(x: &[T], m: usize) -> Result<Vec<T>, SigprocError> {
    if m == 0 {
        return Err(SigprocError::InvalidParameter("window length must be at least 1".into()));
    }
    if x.len() < m {
        return Err(SigprocError::TooShort { len: x.len(), required: m });
    }
    let mf = T::of_usize(m);
    Ok(x.windows(m).map(|w| w.iter().copied().sum::<T>() / mf).collect())
}

fn mean<T: Scalar>(x: &[T]) -> T {
    x.iter().copied().sum::<T>() / T::of_usize(x.len())
}

/// Population standard deviation.
pub fn std_dev<T: Scalar>(x: &[T]) -> T {
    if x.is_empty() {
        return T::zero();
    }
    let m = mean(x);
    (x.iter().map(|&v| (v - m) * (v - m)).sum::<T>() / T::of_usize(x.len())).sqrt()
}

fn is_flat<T: Scalar>(x: &[T], centered_ss: T) -> bool {
    let scale = x.iter().fold(T::one(), |acc, v| acc.max(v.abs()));
    let rms = (centered_ss / T::of_usize(x.len())).sqrt();
    rms <= T::epsilon() * T::of(64.0) * scale
}

/// Pearson correlation coefficient, clamped to `[-1, 1]`.
pub fn pearson<T: Scalar>(a: &[T], b: &[T]) -> Result<T, SigprocError> {
    if a.len() != b.len() {
        return Err(SigprocError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(SigprocError::TooShort { len: a.len(), required: 2 });
    }
    let (ma, mb) = (mean(a), mean(b));
    let mut sab = T::zero();
    let mut saa = T::zero();
    let mut sbb = T::zero();
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab = sab + dx * dy;
        saa = saa + dx * dx;
        sbb = sbb + dy * dy;
    }
    if is_flat(a, saa) || is_flat(b, sbb) {
        return Err(SigprocError::Degenerate);
    }
    let r = sab / (saa.sqrt() * sbb.sqrt());
    Ok(r.max(-T::one()).min(T::one()))
}

/// Number of samples consumed by `k` half-overlapping subsets of length `n`.
pub fn required_samples(k: usize, n: usize) -> usize {
    (k + 1) * n / 2
}

/// Half-overlapping subsets of length `n` starting at `0, n/2, n, …`.
pub fn split_subsets<T>(x: &[T], n: usize) -> Result<Vec<&[T]>, SigprocError> {
    if n == 0 || n % 2 != 0 {
        return Err(SigprocError::InvalidParameter(format!("subset length must be even and positive, got {n}")));
    }
    if x.len() < n {
        return Err(SigprocError::TooShort { len: x.len(), required: n });
    }
    let half = n / 2;
    let k = (x.len() - n) / half + 1;
    Ok((0..k).map(|i| &x[i * half..i * half + n]).collect())
}

/// Approximate entropy `Φ^m(r) − Φ^(m+1)(r)` with self-matches counted,
/// Chebyshev distance between embedded vectors and natural logarithms.
pub fn approx_entropy<T: Scalar>(x: &[T], m: usize, r: T) -> Result<T, SigprocError> {
    if m == 0 {
        return Err(SigprocError::InvalidParameter("run length m must be at least 1".into()));
    }
    if !(r > T::zero()) {
        return Err(SigprocError::InvalidParameter(format!("similarity radius must be positive, got {r}")));
    }
    if x.len() < m + 2 {
        return Err(SigprocError::TooShort { len: x.len(), required: m + 2 });
    }
    let phi = |len: usize| -> T {
        let count = x.len() - len + 1;
        let total: T = (0..count)
            .map(|i| {
                let matches = (0..count)
                    .filter(|&j| (0..len).all(|k| (x[i + k] - x[j + k]).abs() <= r))
                    .count();
                (T::of_usize(matches) / T::of_usize(count)).ln()
            })
            .sum();
        total / T::of_usize(count)
    };
    // rounding can push an exactly-zero difference a hair below zero
    Ok((phi(m) - phi(m + 1)).max(T::zero()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::RssSample;
    use approx::assert_relative_eq;

    fn grid(t0: f64, n: usize, rate: f64, id: &str) -> RssTrace {
        let s = (0..n)
            .map(|i| RssSample { t: t0 + i as f64 / rate, rss: i as f64 })
            .collect();
        RssTrace::new(s, rate, id).unwrap()
    }

    // brute force: for each V sample, scan every C sample for the nearest
    fn brute_pairs(v: &RssTrace, c: &RssTrace) -> Vec<(usize, usize, f64)> {
        v.samples()
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let (j, g) = c
                    .samples()
                    .iter()
                    .enumerate()
                    .map(|(j, q)| (j, (q.t - s.t).abs()))
                    .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
                    .unwrap();
                (i, j, g)
            })
            .collect()
    }

    #[test]
    fn aligns_identical_grids() {
        let v = grid(0.0, 100, 20.0, "V");
        let c = grid(0.0, 100, 20.0, "C");
        let p = align(&v, &c, 0.025).unwrap();
        assert_eq!(p.len(), 100);
        assert_eq!(p.a, p.b);
    }

    #[test]
    fn aligns_offset_grids_like_brute_force() {
        for (offset, expect_gap) in [(0.010, 0.010), (0.040, 0.010), (-0.020, 0.020)] {
            let v = grid(0.0, 100, 20.0, "V");
            let c = grid(offset, 100, 20.0, "C");
            let p = align(&v, &c, 0.025).unwrap();
            let oracle: Vec<_> = brute_pairs(&v, &c)
                .into_iter()
                .filter(|&(_, _, g)| g <= 0.025)
                .collect();
            let mut seen = std::collections::HashSet::new();
            let oracle: Vec<_> = oracle.into_iter().filter(|&(_, j, _)| seen.insert(j)).collect();
            assert_eq!(p.len(), oracle.len(), "offset {offset}");
            for (k, (i, j, g)) in oracle.into_iter().enumerate() {
                assert_eq!(p.a[k], i as f64);
                assert_eq!(p.b[k], j as f64);
                assert!((g - expect_gap).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn rate_mismatch_and_disjoint_spans() {
        let v = grid(0.0, 100, 20.0, "V");
        assert!(matches!(align(&v, &grid(0.0, 100, 10.0, "C"), 0.025), Err(SigprocError::RateMismatch(..))));
        assert_eq!(align(&v, &grid(100.0, 100, 20.0, "C"), 0.025), Err(SigprocError::NoOverlap));
    }

    #[test]
    fn jittered_grid_is_misaligned() {
        let v = grid(0.0, 100, 20.0, "V");
        // every other sample displaced by 20 ms, tolerance 10 ms
        let s = (0..100)
            .map(|i| RssSample { t: i as f64 / 20.0 + if i % 2 == 0 { 0.02 } else { 0.0 }, rss: 0.0 })
            .collect();
        let c = RssTrace::new(s, 20.0, "C").unwrap();
        assert!(matches!(align(&v, &c, 0.01), Err(SigprocError::Misaligned { .. })));
    }

    #[test]
    fn moving_average_examples() {
        let x = [0.0, 2.0, 4.0];
        assert_eq!(moving_average(&x, 1).unwrap(), x.to_vec());
        assert_eq!(moving_average(&x, 2).unwrap(), vec![1.0, 3.0]);
        assert_eq!(moving_average(&[7.5f64; 50], 20).unwrap(), vec![7.5; 31]);
        assert!(matches!(moving_average(&x, 4), Err(SigprocError::TooShort { .. })));
    }

    #[test]
    fn pearson_examples() {
        assert_relative_eq!(pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
        assert_relative_eq!(pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
        assert_relative_eq!(pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap(), 1.0);
        assert_relative_eq!(pearson(&[1.0f32, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap(), 1.0);
        assert_eq!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), Err(SigprocError::Degenerate));
        assert_eq!(pearson(&[0.1; 30], &[1.0; 30]), Err(SigprocError::Degenerate));
        assert!(matches!(pearson(&[1.0], &[1.0]), Err(SigprocError::TooShort { .. })));
    }

    #[test]
    fn subset_offsets() {
        let x: Vec<usize> = (0..600).collect();
        let s = split_subsets(&x, 400).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!((s[0][0], s[0][399]), (0, 399));
        assert_eq!((s[1][0], s[1][399]), (200, 599));
        assert_eq!(split_subsets(&x[..400], 400).unwrap().len(), 1);
        let x: Vec<usize> = (0..4200).collect();
        assert_eq!(split_subsets(&x, 400).unwrap().len(), 20);
        assert_eq!(required_samples(20, 400), 4200);
        assert!(split_subsets(&x, 401).is_err());
        assert!(split_subsets(&x[..10], 400).is_err());
    }

    #[test]
    fn apen_constant_is_zero() {
        assert_eq!(approx_entropy(&[3.0f64; 100], 2, 0.1).unwrap(), 0.0);
        assert_eq!(approx_entropy(&[3.0f64; 10], 3, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn apen_alternating_is_small() {
        let x: Vec<f64> = (0..200).map(|i| if i % 2 == 0 { 1.0 } else { 2.0 }).collect();
        let r = 0.2 * std_dev(&x);
        assert!(approx_entropy(&x, 2, r).unwrap() < 0.05);
    }

    // Direct transcription of the textbook steps, written independently:
    // build every embedded vector, count neighbours, average the logs.
    fn apen_oracle(x: &[f64], m: usize, r: f64) -> f64 {
        fn phi(x: &[f64], m: usize, r: f64) -> f64 {
            let vecs: Vec<&[f64]> = x.windows(m).collect();
            let n = vecs.len() as f64;
            vecs.iter()
                .map(|u| {
                    let c = vecs
                        .iter()
                        .filter(|v| u.iter().zip(v.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) <= r)
                        .count() as f64;
                    (c / n).ln()
                })
                .sum::<f64>()
                / n
        }
        phi(x, m, r) - phi(x, m + 1, r)
    }

    #[test]
    fn apen_matches_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for len in [20usize, 57, 300, 1000] {
            let x: Vec<f64> = (0..len).map(|_| rng.random::<f64>()).collect();
            let r = 0.2 * std_dev(&x);
            // very short series can dip below zero from the unequal vector counts
            let expected = apen_oracle(&x, 2, r).max(0.0);
            assert_relative_eq!(approx_entropy(&x, 2, r).unwrap(), expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn apen_errors() {
        assert!(matches!(approx_entropy(&[1.0, 2.0, 3.0], 2, 0.1), Err(SigprocError::TooShort { .. })));
        assert!(approx_entropy(&[1.0, 2.0, 3.0, 4.0], 2, 0.0).is_err());
    }
}
