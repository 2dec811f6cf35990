//! Physical and asymptotic parameters, the slip law on the bottom wall, and
//! regime classification against the critical exponent `3 - 2s`.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest flow-behavior index accepted by the solvers. Below it the slip
/// closure approaches a set-valued friction law and Newton loses robustness.
pub const MIN_FLOW_INDEX: f64 = 1.05;

/// Position of the slip exponent relative to the critical value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegimeKind {
    /// Power-law slip survives in the limit.
    Critical,
    /// Perfect slip in the limit.
    Supercritical,
    /// No-slip in the limit.
    Subcritical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regime {
    pub kind: RegimeKind,
    pub gamma_star: f64,
}

/// Critical exponent `3 - 2s`.
pub fn critical_exponent(s: f64) -> f64 {
    3.0 - 2.0 * s
}

/// Classifies `gamma` against the critical exponent for flow index `s`.
///
/// The comparison is exact: `gamma == 3 - 2s` evaluated in floating point is
/// the only value classified as critical.
pub fn classify_regime(s: f64, gamma: f64) -> Result<Regime> {
    if !(s > 1.0 && s <= 2.0) {
        return Err(Error::domain("s", format!("flow index must lie in (1, 2], got {s}")));
    }
    if !gamma.is_finite() {
        return Err(Error::domain("gamma", "slip exponent must be finite"));
    }
    let gamma_star = critical_exponent(s);
    let kind = if gamma == gamma_star {
        RegimeKind::Critical
    } else if gamma > gamma_star {
        RegimeKind::Supercritical
    } else {
        RegimeKind::Subcritical
    };
    Ok(Regime { kind, gamma_star })
}

/// Checks that `k` is symmetric and positive definite.
pub fn validate_tensor(k: &Matrix2<f64>) -> Result<()> {
    if k.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("k", "tensor entries must be finite"));
    }
    let scale = k.abs().max().max(f64::MIN_POSITIVE);
    if (k[(0, 1)] - k[(1, 0)]).abs() > 1e-14 * scale {
        return Err(Error::domain(
            "k",
            format!(
                "tensor must be symmetric, got off-diagonals {} and {}",
                k[(0, 1)],
                k[(1, 0)]
            ),
        ));
    }
    let eig = k.symmetric_eigenvalues();
    if eig.min() <= 0.0 {
        return Err(Error::domain(
            "k",
            format!("tensor must be positive definite, smallest eigenvalue {}", eig.min()),
        ));
    }
    Ok(())
}

/// The regularized power-law slip law `|K b|_δ^{s-2} K² b` with
/// `|x|_δ = sqrt(|x|² + δ²)`.
///
/// It is the gradient of the convex potential `(|K b|² + δ²)^{s/2} / s`, so it
/// is monotone and odd for every `δ ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlipLaw {
    pub s: f64,
    pub k: Matrix2<f64>,
    pub delta: f64,
}

impl SlipLaw {
    pub fn new(s: f64, k: Matrix2<f64>, delta: f64) -> Self {
        Self { s, k, delta }
    }

    fn k2(&self) -> Matrix2<f64> {
        self.k * self.k
    }

    /// Scalar coefficient `|K b|_δ^{s-2}`.
    ///
    /// At `δ = 0` and `b = 0` with `s < 2` the coefficient is infinite; callers
    /// that freeze it must use `δ > 0`.
    pub fn coefficient(&self, b: &Vector2<f64>) -> f64 {
        if self.s == 2.0 {
            return 1.0;
        }
        let r = (self.k * b).norm_squared() + self.delta * self.delta;
        r.powf(0.5 * (self.s - 2.0))
    }

    pub fn traction(&self, b: &Vector2<f64>) -> Vector2<f64> {
        if self.s == 2.0 {
            return self.k2() * b;
        }
        let kb = self.k * b;
        let r = kb.norm_squared() + self.delta * self.delta;
        if r == 0.0 {
            return Vector2::zeros();
        }
        self.k2() * b * r.powf(0.5 * (self.s - 2.0))
    }

    /// Derivative of [`SlipLaw::traction`] with respect to `b` (symmetric).
    pub fn jacobian(&self, b: &Vector2<f64>) -> Matrix2<f64> {
        let k2 = self.k2();
        if self.s == 2.0 {
            return k2;
        }
        let r = (self.k * b).norm_squared() + self.delta * self.delta;
        let phi = r.powf(0.5 * (self.s - 2.0));
        let dphi = 0.5 * (self.s - 2.0) * r.powf(0.5 * (self.s - 4.0));
        let k2b = k2 * b;
        k2 * phi + k2b * k2b.transpose() * (2.0 * dphi)
    }

    /// Convex potential whose gradient is the traction.
    pub fn potential(&self, b: &Vector2<f64>) -> f64 {
        let r = (self.k * b).norm_squared() + self.delta * self.delta;
        r.powf(0.5 * self.s) / self.s
    }

    /// `|K b|_δ^{s-2} |K b|²`, the work density of the traction on `b`.
    pub fn work_density(&self, b: &Vector2<f64>) -> f64 {
        self.traction(b).dot(b)
    }
}

/// Parameters of the full-order and limit problems.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluidParams {
    /// Viscosity.
    pub nu: f64,
    /// Flow-behavior index of the slip law.
    pub s: f64,
    /// Exponent of the slip-tensor scaling `ε^{γ/s} K`.
    pub gamma: f64,
    /// Anisotropic slip tensor (a multiple of the identity in reduced dimension 1).
    pub k: Matrix2<f64>,
    /// Thickness parameter; only full-order solves read it.
    pub eps: f64,
    /// Regularization length of the power-law nonlinearity.
    pub delta_reg: f64,
}

impl FluidParams {
    pub fn new(nu: f64, s: f64, gamma: f64, k: Matrix2<f64>, eps: f64, delta_reg: f64) -> Result<Self> {
        let p = Self {
            nu,
            s,
            gamma,
            k,
            eps,
            delta_reg,
        };
        p.validate()?;
        Ok(p)
    }

    /// Isotropic slip tensor `sqrt(k2) I`, i.e. friction `k2` at `s = 2`.
    pub fn isotropic_tensor(k: f64) -> Matrix2<f64> {
        Matrix2::identity() * k
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return Err(Error::domain(
                "nu",
                format!("viscosity must be positive, got {}", self.nu),
            ));
        }
        if !(self.s > 1.0 && self.s <= 2.0) {
            return Err(Error::domain(
                "s",
                format!("flow index must lie in (1, 2], got {}", self.s),
            ));
        }
        if self.s < MIN_FLOW_INDEX {
            return Err(Error::domain(
                "s",
                format!("flow index below {MIN_FLOW_INDEX} is not supported, got {}", self.s),
            ));
        }
        if !self.gamma.is_finite() {
            return Err(Error::domain("gamma", "slip exponent must be finite"));
        }
        validate_tensor(&self.k)?;
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::domain(
                "eps",
                format!("thickness must be positive, got {}", self.eps),
            ));
        }
        if !(self.delta_reg >= 0.0 && self.delta_reg.is_finite()) {
            return Err(Error::domain("delta_reg", "regularization must be non-negative"));
        }
        if self.delta_reg == 0.0 && self.s != 2.0 {
            return Err(Error::domain("delta_reg", "zero regularization requires s = 2"));
        }
        Ok(())
    }

    pub fn regime(&self) -> Result<Regime> {
        classify_regime(self.s, self.gamma)
    }

    /// Slip law of the limit problem (unscaled tensor, limit-scale δ).
    pub fn slip_law(&self) -> SlipLaw {
        SlipLaw::new(self.s, self.k, self.delta_reg)
    }

    /// Default regularization: `1e-6` times a characteristic velocity, or `1e-6`
    /// when the characteristic velocity vanishes.
    pub fn default_delta(characteristic_velocity: f64) -> f64 {
        if characteristic_velocity > 0.0 {
            1e-6 * characteristic_velocity
        } else {
            1e-6
        }
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps = eps;
        self
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classify_examples() {
        let r = classify_regime(1.5, 0.0).unwrap();
        assert_eq!(r.kind, RegimeKind::Critical);
        assert_eq!(r.gamma_star, 0.0);

        let r = classify_regime(2.0, -1.0).unwrap();
        assert_eq!(r.kind, RegimeKind::Critical);
        assert_eq!(r.gamma_star, -1.0);

        let r = classify_regime(1.2, 1.0).unwrap();
        assert_eq!(r.kind, RegimeKind::Supercritical);
        assert!((r.gamma_star - 0.6).abs() < 1e-15);

        assert_eq!(classify_regime(1.5, -0.5).unwrap().kind, RegimeKind::Subcritical);
    }

    #[test]
    fn classify_rejects_out_of_range_index() {
        for s in [1.0, 0.5, 2.0000001, f64::NAN] {
            assert!(matches!(classify_regime(s, 0.0), Err(Error::ParameterDomain { .. })));
        }
    }

    #[test]
    fn critical_is_exact_for_arbitrary_index() {
        for i in 1..1000 {
            let s = 1.0 + i as f64 / 1000.0;
            let r = classify_regime(s, 3.0 - 2.0 * s).unwrap();
            assert_eq!(r.kind, RegimeKind::Critical, "s = {s}");
        }
    }

    #[test]
    fn params_validation() {
        let k = Matrix2::identity();
        assert!(FluidParams::new(1.0, 1.5, 0.0, k, 0.1, 1e-6).is_ok());
        assert!(FluidParams::new(0.0, 1.5, 0.0, k, 0.1, 1e-6).is_err());
        assert!(FluidParams::new(1.0, 1.5, 0.0, k, 0.1, 0.0).is_err());
        assert!(FluidParams::new(1.0, 2.0, -1.0, k, 0.1, 0.0).is_ok());
        assert!(FluidParams::new(1.0, 1.01, 0.0, k, 0.1, 1e-6).is_err());
        let nonsym = Matrix2::new(1.0, 0.2, 0.1, 1.0);
        let err = FluidParams::new(1.0, 1.5, 0.0, nonsym, 0.1, 1e-6).unwrap_err();
        assert!(matches!(err, Error::ParameterDomain { ref field, .. } if field == "k"));
        let indefinite = Matrix2::new(1.0, 2.0, 2.0, 1.0);
        assert!(FluidParams::new(1.0, 1.5, 0.0, indefinite, 0.1, 1e-6).is_err());
    }

    #[test]
    fn traction_jacobian_matches_finite_differences() {
        let law = SlipLaw::new(1.5, Matrix2::new(1.3, 0.2, 0.2, 0.7), 1e-3);
        let b = Vector2::new(0.4, -0.9);
        let jac = law.jacobian(&b);
        let h = 1e-6;
        for j in 0..2 {
            let mut bp = b;
            let mut bm = b;
            bp[j] += h;
            bm[j] -= h;
            let col = (law.traction(&bp) - law.traction(&bm)) / (2.0 * h);
            for i in 0..2 {
                assert!((col[i] - jac[(i, j)]).abs() <= 1e-6 * jac.abs().max());
            }
        }
    }
}
