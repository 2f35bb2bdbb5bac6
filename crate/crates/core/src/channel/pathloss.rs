use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Log-distance path-loss model parameters. All values in dB except the
/// reference distance (m) and the dimensionless exponent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathLossParams<T> {
    pub d0: T,
    pub l_d0: T,
    pub beta: T,
    pub sigma_shadow: T,
    pub tx_power: T,
}

impl<T: Scalar> Default for PathLossParams<T> {
    fn default() -> Self {
        Self {
            d0: T::one(),
            l_d0: T::of(40.0),
            beta: T::of(3.0),
            sigma_shadow: T::of(6.0),
            tx_power: T::of(43.0),
        }
    }
}

impl<T: Scalar> PathLossParams<T> {
    pub fn validate(&self) -> Result<(), super::ChannelError> {
        let bad = |what: &str| Err(super::ChannelError::InvalidParameter(what.to_string()));
        if !(self.d0 > T::zero()) {
            return bad("d0 must be positive");
        }
        if !(self.beta > T::zero()) {
            return bad("beta must be positive");
        }
        if !(self.sigma_shadow >= T::zero()) {
            return bad("sigma_shadow must be nonnegative");
        }
        if !(self.l_d0.is_finite() && self.tx_power.is_finite()) {
            return bad("l_d0 and tx_power must be finite");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathLoss<T> {
    pub db: T,
    /// Set when the distance was below `d0` and got clamped to it.
    pub clamped: bool,
}

/// Deterministic log-distance loss `L(d0) + 10·β·log10(d/d0)`; shadowing is
/// added separately by the field.
pub fn path_loss<T: Scalar>(d_tr: T, p: &PathLossParams<T>) -> PathLoss<T> {
    let clamped = !(d_tr >= p.d0);
    let d = if clamped { p.d0 } else { d_tr };
    PathLoss {
        db: p.l_d0 + T::of(10.0) * p.beta * (d / p.d0).log10(),
        clamped,
    }
}

/// Exponential shadowing correlation `e^(−d/d_corr)`.
pub fn spatial_correlation<T: Scalar>(d: T, d_corr: T) -> T {
    (-d / d_corr).exp()
}

pub fn temporal_correlation<T: Scalar>(dt: T, t_corr: T) -> T {
    (-dt.abs() / t_corr).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn path_loss_values() {
        let p = PathLossParams { d0: 1.0, l_d0: 40.0, beta: 2.0, sigma_shadow: 6.0, tx_power: 43.0 };
        assert_eq!(path_loss(1.0, &p).db, 40.0);
        assert_relative_eq!(path_loss(10.0, &p).db, 60.0, epsilon = 1e-12);
        let p = PathLossParams { beta: 3.5, ..p };
        assert_relative_eq!(path_loss(100.0, &p).db, 110.0, epsilon = 1e-12);
    }

    #[test]
    fn near_field_is_clamped() {
        let p = PathLossParams::<f64> { d0: 5.0, ..Default::default() };
        let l = path_loss(1.0, &p);
        assert!(l.clamped);
        assert_eq!(l.db, p.l_d0);
        assert!(!path_loss(5.0, &p).clamped);
    }

    #[test]
    fn correlation_values() {
        assert_eq!(spatial_correlation(0.0, 53.35), 1.0);
        assert_relative_eq!(spatial_correlation(53.35, 53.35), (-1.0f64).exp());
        assert_relative_eq!(spatial_correlation(53.35, 53.35), 0.3679, epsilon = 1e-4);
        assert_relative_eq!(spatial_correlation(20.0, 53.35), 0.6874, epsilon = 1e-4);
        assert_relative_eq!(spatial_correlation(20.0f32, 53.35), 0.6874, epsilon = 1e-4);
    }

    #[test]
    fn correlation_strictly_decreasing() {
        let mut prev = 1.0 + 1e-12;
        for i in 0..200 {
            let c = spatial_correlation(i as f64 * 2.5, 53.35);
            assert!(c < prev && c > 0.0);
            prev = c;
        }
        assert!(spatial_correlation(1e4, 53.35) < 1e-80);
    }

    #[test]
    fn invalid_params() {
        let p = PathLossParams::<f64> { beta: 0.0, ..Default::default() };
        assert!(p.validate().is_err());
        let p = PathLossParams::<f64> { d0: -1.0, ..Default::default() };
        assert!(p.validate().is_err());
        assert!(PathLossParams::<f64>::default().validate().is_ok());
    }
}
