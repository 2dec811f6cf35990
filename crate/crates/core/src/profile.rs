//! Column problem `-ν u'' = G` on `(0, h)` with `u(h) = 0` and the
//! regime-dependent bottom condition. The solution is the quadratic
//! `u(z) = -G z²/(2ν) + A z + B`.

use nalgebra::{Matrix2, Vector2};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::params::{FluidParams, Regime, RegimeKind};

pub const NEWTON_MAX_ITERS: usize = 100;
const ARMIJO_DECREASE: f64 = 1e-4;
const ARMIJO_MIN_STEP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProfileSolution {
    /// Shear coefficient `A = ∂₃u(0)`.
    pub shear: [f64; 2],
    /// Slip velocity `B = u(0)`.
    pub slip: [f64; 2],
    /// Driving vector `G = f' - ∇p`.
    pub drive: [f64; 2],
    pub gap: f64,
    /// `∫₀ʰ u dz₃`.
    pub flux: [f64; 2],
    pub newton_iters: usize,
    pub residual: f64,
    pub nu: f64,
}

impl ProfileSolution {
    pub fn velocity_at(&self, z3: f64) -> Vector2<f64> {
        let g = Vector2::from(self.drive);
        let a = Vector2::from(self.shear);
        let b = Vector2::from(self.slip);
        -g * (z3 * z3 / (2.0 * self.nu)) + a * z3 + b
    }

    /// `∂₃u(z₃)`.
    pub fn shear_at(&self, z3: f64) -> Vector2<f64> {
        -Vector2::from(self.drive) * (z3 / self.nu) + Vector2::from(self.shear)
    }
}

/// Regularized power-law traction `|K b|_δ^{s-2} K² b`.
pub fn slip_traction(b: &Vector2<f64>, params: &FluidParams) -> Vector2<f64> {
    params.slip_law().traction(b)
}

/// Residual of the critical closure `B + (h/ν) T(B) - G h²/(2ν)`.
pub fn closure_residual(b: &Vector2<f64>, drive: &Vector2<f64>, gap: f64, params: &FluidParams) -> Vector2<f64> {
    b + slip_traction(b, params) * (gap / params.nu) - drive * (gap * gap / (2.0 * params.nu))
}

/// Derivative of [`closure_residual`] with respect to `B`.
pub fn closure_jacobian(b: &Vector2<f64>, gap: f64, params: &FluidParams) -> Matrix2<f64> {
    Matrix2::identity() + params.slip_law().jacobian(b) * (gap / params.nu)
}

/// Newton tolerance `1e-12 max(1, |G| h² / (2ν))`.
pub fn newton_tolerance(drive: &Vector2<f64>, gap: f64, nu: f64) -> f64 {
    1e-12 * (drive.norm() * gap * gap / (2.0 * nu)).max(1.0)
}

fn finish(
    drive: Vector2<f64>,
    gap: f64,
    nu: f64,
    a: Vector2<f64>,
    b: Vector2<f64>,
    iters: usize,
    residual: f64,
) -> ProfileSolution {
    let flux = -drive * (gap.powi(3) / (6.0 * nu)) + a * (gap * gap / 2.0) + b * gap;
    ProfileSolution {
        shear: a.into(),
        slip: b.into(),
        drive: drive.into(),
        gap,
        flux: flux.into(),
        newton_iters: iters,
        residual,
        nu,
    }
}

/// Solves one column. Sub- and supercritical profiles are closed forms; the
/// critical slip velocity comes from damped Newton on the closure.
pub fn solve_profile(drive: Vector2<f64>, gap: f64, params: &FluidParams, regime: Regime) -> Result<ProfileSolution> {
    if !(gap > 0.0 && gap.is_finite()) {
        return Err(Error::domain("h", format!("gap must be positive, got {gap}")));
    }
    if drive.iter().any(|g| !g.is_finite()) {
        return Err(Error::domain("G", "driving vector must be finite"));
    }
    let nu = params.nu;
    match regime.kind {
        RegimeKind::Subcritical => {
            let a = drive * (gap / (2.0 * nu));
            let mut sol = finish(drive, gap, nu, a, Vector2::zeros(), 0, 0.0);
            sol.flux = (drive * (gap.powi(3) / (12.0 * nu))).into();
            Ok(sol)
        }
        RegimeKind::Supercritical => {
            let b = drive * (gap * gap / (2.0 * nu));
            let mut sol = finish(drive, gap, nu, Vector2::zeros(), b, 0, 0.0);
            sol.flux = (drive * (gap.powi(3) / (3.0 * nu))).into();
            Ok(sol)
        }
        RegimeKind::Critical => {
            let (b, iters, residual) = newton_slip(drive, gap, params)?;
            let a = slip_traction(&b, params) / nu;
            Ok(finish(drive, gap, nu, a, b, iters, residual))
        }
    }
}

/// Damped Newton for the critical slip velocity, started from the
/// supercritical value `G h²/(2ν)`.
fn newton_slip(drive: Vector2<f64>, gap: f64, params: &FluidParams) -> Result<(Vector2<f64>, usize, f64)> {
    let tol = newton_tolerance(&drive, gap, params.nu);
    let mut b = drive * (gap * gap / (2.0 * params.nu));
    let mut r = closure_residual(&b, &drive, gap, params);
    let mut rn = r.norm();
    let mut history = vec![rn];
    for it in 0..NEWTON_MAX_ITERS {
        if rn <= tol {
            // one undamped polishing step; quadratic convergence takes the
            // residual to rounding level
            if let Some(step) = closure_jacobian(&b, gap, params).lu().solve(&(-r)) {
                let trial = b + step;
                let rt = closure_residual(&trial, &drive, gap, params).norm();
                if rt < rn {
                    return Ok((trial, it + 1, rt));
                }
            }
            return Ok((b, it, rn));
        }
        let jac = closure_jacobian(&b, gap, params);
        let step = jac
            .lu()
            .solve(&(-r))
            .ok_or_else(|| Error::Configuration("singular closure Jacobian".into()))?;
        let mut lambda = 1.0;
        loop {
            let trial = b + step * lambda;
            let rt = closure_residual(&trial, &drive, gap, params);
            let rtn = rt.norm();
            if rtn <= (1.0 - ARMIJO_DECREASE * lambda) * rn || lambda < ARMIJO_MIN_STEP {
                b = trial;
                r = rt;
                rn = rtn;
                break;
            }
            lambda *= 0.5;
        }
        history.push(rn);
    }
    if rn <= tol {
        return Ok((b, NEWTON_MAX_ITERS, rn));
    }
    Err(Error::NonConvergence {
        solver: "profile newton",
        iterations: NEWTON_MAX_ITERS,
        residual: rn,
        history,
    })
}

/// Flux-to-drive mobility `h³/(12ν)` or `h³/(3ν)` of the linear regimes.
pub fn regime_mobility(kind: RegimeKind, gap: f64, nu: f64) -> Option<f64> {
    match kind {
        RegimeKind::Subcritical => Some(gap.powi(3) / (12.0 * nu)),
        RegimeKind::Supercritical => Some(gap.powi(3) / (3.0 * nu)),
        RegimeKind::Critical => None,
    }
}

/// Mobility of the critical column with the slip coefficient frozen at
/// `coeff = |K B|_δ^{s-2}`:
/// `(h³/ν) [ (I + S/2)(I + S)⁻¹ / 2 - I/6 ]` with `S = (h coeff / ν) K²`.
///
/// The result is symmetric and lies between the sub- and supercritical
/// mobilities.
pub fn frozen_mobility(gap: f64, nu: f64, coeff: f64, k: &Matrix2<f64>) -> Matrix2<f64> {
    let s = k * k * (gap * coeff / nu);
    let id = Matrix2::identity();
    let inv = (id + s).try_inverse().expect("I + S is positive definite");
    let m = ((id + s * 0.5) * inv) * 0.5 - id / 6.0;
    let m = m * (gap.powi(3) / nu);
    (m + m.transpose()) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::classify_regime;
    use proptest::prelude::*;

    fn params(nu: f64, s: f64, gamma: f64, k: f64, delta: f64) -> FluidParams {
        FluidParams::new(nu, s, gamma, FluidParams::isotropic_tensor(k), 0.1, delta).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn subcritical_example() {
        let p = params(1.0, 1.5, -1.0, 1.0, 1e-6);
        let sol = solve_profile(Vector2::new(1.0, 0.0), 1.0, &p, p.regime().unwrap()).unwrap();
        assert_eq!(sol.slip, [0.0, 0.0]);
        assert!(rel(sol.shear[0], 0.5) < 1e-15);
        assert!(rel(sol.flux[0], 1.0 / 12.0) < 1e-15);
        assert!(sol.velocity_at(1.0).norm() < 1e-15);
    }

    #[test]
    fn supercritical_example() {
        let p = params(1.0, 1.5, 1.0, 1.0, 1e-6);
        let sol = solve_profile(Vector2::new(1.0, 0.0), 1.0, &p, p.regime().unwrap()).unwrap();
        assert_eq!(sol.shear, [0.0, 0.0]);
        assert!(rel(sol.slip[0], 0.5) < 1e-15);
        assert!(rel(sol.flux[0], 1.0 / 3.0) < 1e-15);
    }

    #[test]
    fn navier_example() {
        let p = params(1.0, 2.0, -1.0, 1.0, 0.0);
        let sol = solve_profile(Vector2::new(1.0, 0.0), 1.0, &p, p.regime().unwrap()).unwrap();
        assert!(rel(sol.slip[0], 0.25) < 1e-14);
        assert!(rel(sol.shear[0], 0.25) < 1e-14);
        assert!(rel(sol.flux[0], 5.0 / 24.0) < 1e-14);
        assert!(sol.velocity_at(1.0).norm() < 1e-15);
    }

    #[test]
    fn zero_drive_any_regime() {
        for gamma in [-1.0, 0.0, 1.0] {
            let p = params(1.0, 1.5, gamma, 1.0, 1e-6);
            let sol = solve_profile(Vector2::zeros(), 2.0, &p, p.regime().unwrap()).unwrap();
            assert_eq!(sol.shear, [0.0, 0.0]);
            assert_eq!(sol.slip, [0.0, 0.0]);
            assert_eq!(sol.flux, [0.0, 0.0]);
        }
    }

    #[test]
    fn traction_examples() {
        let p = params(1.0, 1.5, 0.0, 1.0, 1e-6);
        assert_eq!(slip_traction(&Vector2::zeros(), &p), Vector2::zeros());
        let p = FluidParams { delta_reg: 0.0, ..p };
        let t = slip_traction(&Vector2::new(1.0, 0.0), &p);
        assert!((t - Vector2::new(1.0, 0.0)).norm() < 1e-15);
        let lambda: f64 = 3.0;
        let p = params(1.0, 2.0, -1.0, lambda.sqrt(), 0.0);
        let b = Vector2::new(0.3, -1.2);
        assert!((slip_traction(&b, &p) - b * lambda).norm() < 1e-14);
    }

    #[test]
    fn navier_continuity_over_friction() {
        for lambda in [0.1f64, 1.0, 10.0] {
            let p = params(1.0, 2.0, -1.0, lambda.sqrt(), 0.0);
            let sol = solve_profile(Vector2::new(1.0, 0.0), 1.0, &p, p.regime().unwrap()).unwrap();
            let b = 0.5 / (1.0 + lambda);
            assert!(rel(sol.slip[0], b) < 1e-12, "lambda {lambda}");
        }
    }

    #[test]
    fn frozen_mobility_reproduces_critical_flux() {
        let k = Matrix2::new(1.4, 0.3, 0.3, 0.8);
        let p = FluidParams::new(0.7, 1.5, 0.0, k, 0.1, 1e-6).unwrap();
        let g = Vector2::new(0.9, -0.4);
        let h = 1.3;
        let sol = solve_profile(g, h, &p, p.regime().unwrap()).unwrap();
        let coeff = p.slip_law().coefficient(&Vector2::from(sol.slip));
        let m = frozen_mobility(h, p.nu, coeff, &k);
        let q = m * g;
        assert!((q - Vector2::from(sol.flux)).norm() < 1e-12 * q.norm());
    }

    #[test]
    fn delta_robustness() {
        let p0 = params(1.0, 1.5, 0.0, 1.0, 1e-4);
        let g = Vector2::new(1.0, 0.0);
        let deltas = [1e-4, 5e-5, 2.5e-5];
        let b: Vec<f64> = deltas
            .iter()
            .map(|&d| {
                let p = FluidParams { delta_reg: d, ..p0 };
                solve_profile(g, 1.0, &p, p.regime().unwrap()).unwrap().slip[0]
            })
            .collect();
        let order = ((b[0] - b[1]) / (b[1] - b[2])).abs().log2();
        let limit = b[2] - (b[1] - b[2]) / (2f64.powf(order) - 1.0);
        assert!((b[1] - limit).abs() <= 0.5 * (b[0] - limit).abs());
        assert!((b[2] - limit).abs() <= 0.5 * (b[1] - limit).abs());
    }

    proptest! {
        #[test]
        fn closure_is_monotone(
            b1 in prop::array::uniform2(-5.0f64..5.0),
            b2 in prop::array::uniform2(-5.0f64..5.0),
            s in 1.05f64..2.0,
            delta in prop::sample::select(vec![0.0, 1e-6, 1e-2]),
        ) {
            let p = FluidParams { delta_reg: delta, ..params(1.0, s, 0.0, 1.0, 1e-6) };
            let (b1, b2) = (Vector2::from(b1), Vector2::from(b2));
            let d = (slip_traction(&b1, &p) - slip_traction(&b2, &p)).dot(&(b1 - b2));
            prop_assert!(d >= -1e-12);
        }

        #[test]
        fn flux_ordering(g in 0.01f64..10.0, h in 0.1f64..3.0, nu in 0.1f64..5.0, s in 1.1f64..2.0) {
            let p = params(nu, s, 3.0 - 2.0 * s, 1.0, 1e-6);
            let drive = Vector2::new(g, 0.0);
            let crit = solve_profile(drive, h, &p, classify_regime(s, 3.0 - 2.0 * s).unwrap()).unwrap();
            let sub = solve_profile(drive, h, &p, classify_regime(s, -5.0).unwrap()).unwrap();
            let sup = solve_profile(drive, h, &p, classify_regime(s, 5.0).unwrap()).unwrap();
            prop_assert!(sub.flux[0] <= crit.flux[0] * (1.0 + 1e-12));
            prop_assert!(crit.flux[0] <= sup.flux[0] * (1.0 + 1e-12));
        }

        #[test]
        fn reconstruction_vanishes_on_top(
            g in prop::array::uniform2(-10.0f64..10.0),
            h in 0.1f64..3.0,
            s in 1.1f64..2.0,
            shift in -1i32..=1,
        ) {
            let gamma = 3.0 - 2.0 * s + shift as f64;
            let p = params(1.0, s, gamma, 1.3, 1e-6);
            let sol = solve_profile(Vector2::from(g), h, &p, p.regime().unwrap()).unwrap();
            let scale = Vector2::from(g).norm() * h * h / 2.0;
            prop_assert!(sol.velocity_at(h).norm() <= 1e-12 * scale.max(1e-300));
            if shift == 0 {
                let r = closure_residual(&Vector2::from(sol.slip), &Vector2::from(g), h, &p).norm();
                prop_assert!(r <= newton_tolerance(&Vector2::from(g), h, 1.0));
            }
        }

        #[test]
        fn closure_jacobian_matches_differences(
            b in prop::array::uniform2(0.2f64..3.0),
            s in 1.1f64..2.0,
        ) {
            let k = Matrix2::new(1.2, 0.1, 0.1, 0.9);
            let p = FluidParams::new(1.0, s, 0.0, k, 0.1, 1e-6).unwrap();
            let b = Vector2::from(b);
            let g = Vector2::new(1.0, 1.0);
            let jac = closure_jacobian(&b, 1.0, &p);
            let step = 1e-6;
            for j in 0..2 {
                let mut bp = b;
                let mut bm = b;
                bp[j] += step;
                bm[j] -= step;
                let col = (closure_residual(&bp, &g, 1.0, &p) - closure_residual(&bm, &g, 1.0, &p)) / (2.0 * step);
                for i in 0..2 {
                    prop_assert!((col[i] - jac[(i, j)]).abs() <= 1e-6 * jac.abs().max());
                }
            }
        }
    }
}
