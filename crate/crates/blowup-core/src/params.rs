//! Problem parameters, regime classification and self-similarity exponents.

use crate::error::Error;
use crate::Result;
use serde::Serialize;

/// The triple `(m, p, sigma)` of the equation `u_t = (u^m)_xx + |x|^sigma u^p`.
///
/// Invariants enforced at construction: `m > 1`, `0 < p < 1`, `sigma > 0`,
/// all finite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Parameters {
    pub m: f64,
    pub p: f64,
    pub sigma: f64,
}

/// Sign of `m + p - 2`, which decides which phase systems apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Regime {
    /// `m + p > 2`.
    Supercritical,
    /// `m + p = 2` exactly. Representable, never analyzed.
    Critical,
    /// `m + p < 2`.
    Subcritical,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Regime::Supercritical => write!(f, "supercritical"),
            Regime::Critical => write!(f, "critical"),
            Regime::Subcritical => write!(f, "subcritical"),
        }
    }
}

/// Self-similarity exponents for `u = (T-t)^{-alpha} f(|x| (T-t)^{beta})`.
///
/// Both are positive in the admissible range and satisfy
/// `alpha (m-1) - 2 beta = 1` and `beta sigma - alpha (1-p) = 1` exactly (as
/// algebraic identities; numerically to rounding).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Exponents {
    pub alpha: f64,
    pub beta: f64,
    /// Blow-up time used when evaluating time-dependent quantities; the
    /// profile itself does not depend on it.
    pub t_blowup: f64,
}

impl Parameters {
    pub fn new(m: f64, p: f64, sigma: f64) -> Result<Self> {
        if !m.is_finite() || m <= 1.0 {
            return Err(Error::InvalidParameter(format!("m = {m}, need m > 1")));
        }
        if !p.is_finite() || p <= 0.0 || p >= 1.0 {
            return Err(Error::InvalidParameter(format!("p = {p}, need 0 < p < 1")));
        }
        if !sigma.is_finite() || sigma <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "sigma = {sigma}, need sigma > 0"
            )));
        }
        Ok(Self { m, p, sigma })
    }

    /// `2(1-p)/(m-1)`: the infimum of admissible `sigma`.
    pub fn sigma_lower(&self) -> f64 {
        2.0 * (1.0 - self.p) / (self.m - 1.0)
    }

    /// `g = sigma (m-1) + 2 (p-1)`, the common denominator of the exponents.
    /// Positive exactly when `sigma > sigma_lower`.
    pub fn g(&self) -> f64 {
        self.sigma * (self.m - 1.0) + 2.0 * (self.p - 1.0)
    }

    pub fn regime(&self) -> Regime {
        classify_regime(self)
    }

    /// Typed gate: errors unless `m + p > 2`.
    pub fn require_supercritical(&self) -> Result<()> {
        match self.regime() {
            Regime::Supercritical => Ok(()),
            Regime::Critical => Err(Error::CriticalRegime),
            Regime::Subcritical => Err(Error::RegimeMismatch {
                system: "supercritical systems",
                regime: "subcritical",
            }),
        }
    }

    /// Typed gate: errors unless `m + p < 2`.
    pub fn require_subcritical(&self) -> Result<()> {
        match self.regime() {
            Regime::Subcritical => Ok(()),
            Regime::Critical => Err(Error::CriticalRegime),
            Regime::Supercritical => Err(Error::RegimeMismatch {
                system: "subcritical systems",
                regime: "supercritical",
            }),
        }
    }
}

/// Classify by the sign of `m + p - 2`. Exact equality is the critical case;
/// no tolerance band is applied, values are taken as given.
pub fn classify_regime(params: &Parameters) -> Regime {
    let s = params.m + params.p - 2.0;
    if s > 0.0 {
        Regime::Supercritical
    } else if s < 0.0 {
        Regime::Subcritical
    } else {
        Regime::Critical
    }
}

/// Compute `alpha = (sigma+2)/g`, `beta = (m-p)/g`.
///
/// Errors with [`Error::SigmaOutOfRange`] when `sigma <= 2(1-p)/(m-1)`
/// (equivalently `g <= 0`), where the ansatz exponents lose their sign.
/// The blow-up time is set to 1; profiles are independent of it.
pub fn derive_exponents(params: &Parameters) -> Result<Exponents> {
    let g = params.g();
    if g <= 0.0 {
        return Err(Error::SigmaOutOfRange {
            sigma: params.sigma,
            lower: params.sigma_lower(),
        });
    }
    Ok(Exponents {
        alpha: (params.sigma + 2.0) / g,
        beta: (params.m - params.p) / g,
        t_blowup: 1.0,
    })
}

impl Exponents {
    pub fn with_blowup_time(mut self, t: f64) -> Self {
        self.t_blowup = t;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn exponents_at_reference_supercritical_point() {
        // m=3, p=1/2, sigma=1: g = 2 - 1 = 1, alpha = 3, beta = 5/2.
        let params = Parameters::new(3.0, 0.5, 1.0).unwrap();
        let e = derive_exponents(&params).unwrap();
        assert_relative_eq!(e.alpha, 3.0, max_relative = 1e-15);
        assert_relative_eq!(e.beta, 2.5, max_relative = 1e-15);
    }

    #[test]
    fn exponents_at_larger_sigma() {
        // m=3, p=1/2, sigma=3: g = 5, alpha = 1, beta = 1/2.
        let params = Parameters::new(3.0, 0.5, 3.0).unwrap();
        let e = derive_exponents(&params).unwrap();
        assert_relative_eq!(e.alpha, 1.0, max_relative = 1e-15);
        assert_relative_eq!(e.beta, 0.5, max_relative = 1e-15);
    }

    #[test]
    fn sigma_at_lower_bound_is_refused() {
        // Lower bound for (3, 1/2) is 2*(1/2)/2 = 1/2.
        let params = Parameters::new(3.0, 0.5, 0.5).unwrap();
        match derive_exponents(&params) {
            Err(Error::SigmaOutOfRange { lower, .. }) => {
                assert_relative_eq!(lower, 0.5, max_relative = 1e-15)
            }
            other => panic!("expected SigmaOutOfRange, got {other:?}"),
        }
        let below = Parameters::new(3.0, 0.5, 0.4).unwrap();
        assert!(matches!(
            derive_exponents(&below),
            Err(Error::SigmaOutOfRange { .. })
        ));
    }

    #[test]
    fn exponent_identities_hold() {
        for &(m, p, sigma) in &[
            (3.0, 0.5, 1.0),
            (3.0, 0.5, 3.5),
            (1.8, 0.4, 9.0),
            (1.3, 0.5, 4.0),
            (2.4, 0.7, 0.9),
        ] {
            let params = Parameters::new(m, p, sigma).unwrap();
            let e = match derive_exponents(&params) {
                Ok(e) => e,
                Err(_) => continue,
            };
            // alpha/beta = (sigma+2)/(m-p), alpha(m-1)-2beta = 1,
            // beta*sigma - alpha(1-p) = 1.
            assert_relative_eq!(
                e.alpha / e.beta,
                (sigma + 2.0) / (m - p),
                max_relative = 1e-13
            );
            assert_relative_eq!(e.alpha * (m - 1.0) - 2.0 * e.beta, 1.0, max_relative = 1e-12);
            assert_relative_eq!(e.beta * sigma - e.alpha * (1.0 - p), 1.0, max_relative = 1e-12);
            assert!(e.alpha > 0.0 && e.beta > 0.0);
        }
    }

    #[test]
    fn regime_classification() {
        let sup = Parameters::new(3.0, 0.5, 1.0).unwrap();
        assert_eq!(classify_regime(&sup), Regime::Supercritical);
        let sub = Parameters::new(1.3, 0.5, 4.0).unwrap();
        assert_eq!(classify_regime(&sub), Regime::Subcritical);
        let crit = Parameters::new(1.5, 0.5, 3.0).unwrap();
        assert_eq!(classify_regime(&crit), Regime::Critical);
        assert!(matches!(
            crit.require_supercritical(),
            Err(Error::CriticalRegime)
        ));
        assert!(matches!(
            sub.require_supercritical(),
            Err(Error::RegimeMismatch { .. })
        ));
    }

    #[test]
    fn constructor_rejects_out_of_domain_values() {
        assert!(Parameters::new(1.0, 0.5, 1.0).is_err());
        assert!(Parameters::new(3.0, 0.0, 1.0).is_err());
        assert!(Parameters::new(3.0, 1.0, 1.0).is_err());
        assert!(Parameters::new(3.0, 0.5, -1.0).is_err());
        assert!(Parameters::new(f64::NAN, 0.5, 1.0).is_err());
    }

    #[test]
    fn subcritical_reference_point() {
        // m=1.3, p=1/2, sigma=4: g = 4*0.3 - 1 = 0.2, alpha = 30, beta = 4.
        let params = Parameters::new(1.3, 0.5, 4.0).unwrap();
        let e = derive_exponents(&params).unwrap();
        assert_relative_eq!(e.alpha, 30.0, max_relative = 1e-12);
        assert_relative_eq!(e.beta, 4.0, max_relative = 1e-12);
    }
}
