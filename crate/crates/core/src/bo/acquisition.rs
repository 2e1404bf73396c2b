use crate::error::BoError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "UPPERCASE"))]
pub enum AcquisitionKind {
    Pi,
    Ei,
    Ucb,
}

impl AcquisitionKind {
    pub fn name(&self) -> &'static str {
        match self {
            AcquisitionKind::Pi => "PI",
            AcquisitionKind::Ei => "EI",
            AcquisitionKind::Ucb => "UCB",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AcquisitionSpec {
    pub kind: AcquisitionKind,
    /// Confidence for the UCB schedule, in `(0, 1)`.
    #[cfg_attr(feature = "serde", serde(default = "default_delta"))]
    pub delta: f64,
}

#[cfg(feature = "serde")]
fn default_delta() -> f64 {
    DEFAULT_DELTA
}

pub const DEFAULT_DELTA: f64 = 0.1;

impl AcquisitionSpec {
    pub fn new(kind: AcquisitionKind, delta: f64) -> Result<Self, BoError> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(BoError::BadDelta(delta));
        }
        Ok(Self { kind, delta })
    }

    pub fn ucb() -> Self {
        Self {
            kind: AcquisitionKind::Ucb,
            delta: DEFAULT_DELTA,
        }
    }

    pub fn ei() -> Self {
        Self {
            kind: AcquisitionKind::Ei,
            delta: DEFAULT_DELTA,
        }
    }

    pub fn pi() -> Self {
        Self {
            kind: AcquisitionKind::Pi,
            delta: DEFAULT_DELTA,
        }
    }
}

/// Standard normal CDF.
pub fn norm_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / core::f64::consts::SQRT_2)
}

/// Standard normal density.
pub fn norm_pdf(z: f64) -> f64 {
    const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
    INV_SQRT_2PI * libm::exp(-0.5 * z * z)
}

/// Acquisition score of a Gaussian prediction `(mu, sigma)` against the
/// incumbent `y_best` (maximisation).
pub fn acquisition_value(kind: AcquisitionKind, mu: f64, sigma: f64, y_best: f64, beta: f64) -> Result<f64, BoError> {
    if !(sigma >= 0.0) {
        return Err(BoError::NegativeSigma(sigma));
    }
    if sigma == 0.0 {
        return Ok(match kind {
            AcquisitionKind::Pi => {
                if mu > y_best {
                    1.0
                } else {
                    0.0
                }
            }
            AcquisitionKind::Ei => (mu - y_best).max(0.0),
            AcquisitionKind::Ucb => mu,
        });
    }
    let z = (mu - y_best) / sigma;
    Ok(match kind {
        AcquisitionKind::Pi => norm_cdf(z),
        AcquisitionKind::Ei => ((mu - y_best) * norm_cdf(z) + sigma * norm_pdf(z)).max(0.0),
        AcquisitionKind::Ucb => mu + libm::sqrt(beta) * sigma,
    })
}

/// `beta_t = 2 ln(|C| t^2 pi^2 / (6 delta))`.
pub fn beta_schedule(t: usize, candidates: usize, delta: f64) -> f64 {
    let t = t.max(1) as f64;
    let pi2 = core::f64::consts::PI * core::f64::consts::PI;
    2.0 * libm::log(candidates as f64 * t * t * pi2 / (6.0 * delta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn closed_form_examples() {
        assert_eq!(acquisition_value(AcquisitionKind::Pi, 0.3, 1.0, 0.3, 0.0).unwrap(), 0.5);
        assert_eq!(acquisition_value(AcquisitionKind::Ei, 0.0, 0.0, 0.3, 0.0).unwrap(), 0.0);
        assert_abs_diff_eq!(
            acquisition_value(AcquisitionKind::Ei, 0.2, 1.0, 0.2, 0.0).unwrap(),
            0.398_942_3,
            epsilon = 1e-7
        );
        assert_eq!(
            acquisition_value(AcquisitionKind::Ucb, 1.0, 0.5, 0.0, 4.0).unwrap(),
            2.0
        );
    }

    #[test]
    fn zero_sigma_limits() {
        use AcquisitionKind::*;
        assert_eq!(acquisition_value(Pi, 1.0, 0.0, 0.5, 0.0).unwrap(), 1.0);
        assert_eq!(acquisition_value(Pi, 0.5, 0.0, 0.5, 0.0).unwrap(), 0.0);
        assert_eq!(acquisition_value(Ei, 0.8, 0.0, 0.5, 0.0).unwrap(), 0.8 - 0.5);
        assert_eq!(acquisition_value(Ucb, 0.8, 0.0, 0.5, 9.0).unwrap(), 0.8);
        assert_eq!(
            acquisition_value(Ucb, 0.8, -0.1, 0.5, 9.0).unwrap_err(),
            BoError::NegativeSigma(-0.1)
        );
    }

    #[test]
    fn ei_non_negative_and_monotone_in_sigma() {
        for mu in [-2.0, -0.3, 0.0, 0.4, 3.0] {
            let mut prev = 0.0;
            for k in 0..60 {
                let s = 0.05 * k as f64;
                let v = acquisition_value(AcquisitionKind::Ei, mu, s, 0.0, 0.0).unwrap();
                assert!(v >= 0.0);
                assert!(v >= prev - 1e-15);
                prev = v;
            }
        }
    }

    #[test]
    fn beta_examples() {
        assert_abs_diff_eq!(beta_schedule(1, 100, 0.1), 14.81, epsilon = 5e-3);
        let pi2 = core::f64::consts::PI * core::f64::consts::PI;
        assert_abs_diff_eq!(
            beta_schedule(1, 1, 1.0 - 1e-12),
            2.0 * libm::log(pi2 / 6.0),
            epsilon = 1e-9
        );
        assert_abs_diff_eq!(beta_schedule(1, 1, 1.0 - 1e-12), 0.995, epsilon = 1e-3);
        for t in 1..200 {
            assert!(beta_schedule(t + 1, 1681, 0.1) > beta_schedule(t, 1681, 0.1));
        }
    }

    #[test]
    fn delta_validation() {
        assert!(AcquisitionSpec::new(AcquisitionKind::Ucb, 0.0).is_err());
        assert!(AcquisitionSpec::new(AcquisitionKind::Ucb, 1.0).is_err());
        assert!(AcquisitionSpec::new(AcquisitionKind::Ucb, 0.5).is_ok());
    }
}
