//! Exact Gaussian-process sampling by Cholesky factorization. Cubic in the
//! number of query points; meant as a validation oracle for
//! [`super::ShadowField`] on at most a few thousand points.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{ChannelError, ShadowFieldParams};
use crate::kinematics::Point;

pub const MAX_REFERENCE_POINTS: usize = 2_000;

/// Draws one joint sample of the separable exponential field at `queries`.
pub fn sample_exact(
    queries: &[(Point<f64>, f64)],
    sigma_shadow: f64,
    params: &ShadowFieldParams,
    seed: u64,
) -> Result<Vec<f64>, ChannelError> {
    let n = queries.len();
    if n > MAX_REFERENCE_POINTS {
        return Err(ChannelError::InvalidParameter(format!(
            "reference sampler limited to {MAX_REFERENCE_POINTS} points, got {n}"
        )));
    }
    let var = sigma_shadow * sigma_shadow;
    let cov = DMatrix::from_fn(n, n, |i, j| {
        let (pi, ti) = queries[i];
        let (pj, tj) = queries[j];
        let c = var
            * (-pi.distance(&pj) / params.d_corr).exp()
            * (-(ti - tj).abs() / params.t_corr).exp();
        if i == j {
            c + 1e-10 * var.max(1.0)
        } else {
            c
        }
    });
    let chol = cov
        .cholesky()
        .ok_or_else(|| ChannelError::InvalidParameter("covariance not positive definite".into()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
    Ok((chol.l() * z).iter().copied().collect())
}
