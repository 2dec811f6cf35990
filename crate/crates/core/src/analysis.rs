//! Post-processing of ε-sweeps: a priori scaling checks, distance to the
//! limit solution and identification of the effective bottom condition.

use std::sync::Arc;

use nalgebra::Vector2;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{norm_with_tensor, norms, Field, FieldKind, ReducedVelocityLayout, Restriction};
use crate::fullorder::{BottomStencil, FullOrderSolution};
use crate::geometry::Grid3;
use crate::operators::apply_deps;
use crate::params::{classify_regime, FluidParams, RegimeKind, SlipLaw};
use crate::reynolds::LimitSolution;

/// Slack on the one-sided slope thresholds.
pub const SLOPE_SLACK: f64 = 0.15;
/// Largest admissible max/min ratio of the pressure norm over a sweep.
pub const PRESSURE_RATIO_BOUND: f64 = 3.0;
/// Allowed growth of the boundary ratio as ε decreases.
pub const BOUNDARY_RATIO_SLACK: f64 = 1.5;
/// An indicator below this value at every ε of a sweep is small.
pub const REGIME_THRESHOLD: f64 = 0.1;
/// Indicators below this value at the smallest ε are small outright.
pub const REGIME_FLOOR: f64 = 1e-6;
/// An indicator that decreases at every step and decays at least like
/// ε^DECAY_RATE also counts as small.
pub const DECAY_RATE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// Largest relative deviation of the fitted power law from the data.
    pub residual: f64,
}

/// Least-squares line through `(ln ε, ln value)`.
pub fn fit_slope(points: &[(f64, f64)]) -> Result<SlopeFit> {
    if points.len() < 2 {
        return Err(Error::Usage(format!(
            "slope fit needs at least 2 points, got {}",
            points.len()
        )));
    }
    for &(e, v) in points {
        if !(e > 0.0 && e.is_finite()) {
            return Err(Error::Data(format!("abscissa must be positive, got {e}")));
        }
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Data(format!("value must be positive, got {v} at eps = {e}")));
        }
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::Data("slope fit needs at least two distinct abscissae".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| ((intercept + slope * x - y).exp() - 1.0).abs())
        .fold(0.0, f64::max);
    Ok(SlopeFit {
        slope,
        intercept,
        residual,
    })
}

/// Norms of one full-order solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormBundle {
    pub eps: f64,
    /// `‖ũ_ε‖_{L²(Ω)}`.
    pub velocity: f64,
    /// `‖D_ε ũ_ε‖_{L²(Ω)}`.
    pub strain: f64,
    /// `‖K ũ'_ε‖_{L^s(Γ₀)}`.
    pub boundary: f64,
    /// `‖p̃_ε‖_{L²(Ω)}`.
    pub pressure: f64,
    /// `‖ũ_{ε,3}‖_{L²(Ω)}`.
    pub vertical: f64,
}

impl NormBundle {
    pub fn from_solution(sol: &FullOrderSolution) -> Result<Self> {
        let v = &sol.velocity;
        let g = &v.grid;
        let mut vertical = 0.0;
        for k in 0..g.nz {
            for j in 0..g.ny() {
                for i in 0..g.nx() {
                    let u = v.cell_velocity(i, j, k)?;
                    vertical += u[2] * u[2] * g.cell_volume(i, j);
                }
            }
        }
        Ok(Self {
            eps: sol.eps,
            velocity: norms(v, 2.0, Restriction::Omega)?,
            strain: apply_deps(v, sol.eps)?.l2_norm(),
            boundary: norm_with_tensor(v, sol.params.s, Restriction::Gamma0, Some(&sol.params.k))?,
            pressure: norms(&sol.pressure, 2.0, Restriction::Omega)?,
            vertical: vertical.sqrt(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NamedSlope {
    pub metric: String,
    /// `None` when the metric vanishes somewhere on the sweep.
    pub fit: Option<SlopeFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitError {
    pub eps: f64,
    pub l2: f64,
    pub d3: f64,
    /// `l2 / ‖ũ‖_{L²(Ω)}`.
    pub relative_l2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    /// Sorted in decreasing order.
    pub eps_list: Vec<f64>,
    pub norms: Vec<NormBundle>,
    pub slopes: Vec<NamedSlope>,
    /// `r(ε) = ‖K ũ'_ε‖_{L^s(Γ₀)} / ε^{(3-γ)/s}`.
    pub boundary_ratios: Vec<f64>,
    pub checks: Vec<Check>,
    pub identically_zero: bool,
    pub limit_errors: Vec<LimitError>,
    pub regime: Option<RegimeVerdict>,
}

impl SweepReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Flat `(ε, metric, value)` rows in a fixed order.
    pub fn rows(&self) -> Vec<(f64, &'static str, f64)> {
        let mut out = Vec::new();
        for (b, r) in self.norms.iter().zip(&self.boundary_ratios) {
            out.push((b.eps, "velocity_l2", b.velocity));
            out.push((b.eps, "strain_l2", b.strain));
            out.push((b.eps, "boundary_ls", b.boundary));
            out.push((b.eps, "pressure_l2", b.pressure));
            out.push((b.eps, "vertical_l2", b.vertical));
            out.push((b.eps, "boundary_ratio", *r));
        }
        for e in &self.limit_errors {
            out.push((e.eps, "limit_l2", e.l2));
            out.push((e.eps, "limit_d3", e.d3));
            out.push((e.eps, "limit_relative_l2", e.relative_l2));
        }
        if let Some(v) = &self.regime {
            for i in &v.indicators {
                out.push((i.eps, "slip_ratio", i.slip_ratio));
                out.push((i.eps, "shear_ratio", i.shear_ratio));
                out.push((i.eps, "closure_residual", i.closure_residual));
            }
        }
        out
    }
}

/// Checks the a priori bounds on a sweep of full-order solves sharing one
/// grid family and parameter set (apart from ε).
pub fn verify_apriori(sweep: &[FullOrderSolution], params: &FluidParams) -> Result<SweepReport> {
    let bundles = sweep
        .par_iter()
        .map(NormBundle::from_solution)
        .collect::<Result<Vec<_>>>()?;
    verify_norms(&bundles, params.s, params.gamma)
}

/// [`verify_apriori`] on precomputed norms.
pub fn verify_norms(bundles: &[NormBundle], s: f64, gamma: f64) -> Result<SweepReport> {
    if bundles.len() < 3 {
        return Err(Error::Usage(format!(
            "a priori checks need at least 3 eps values, got {}",
            bundles.len()
        )));
    }
    classify_regime(s, gamma)?;
    let mut b = bundles.to_vec();
    b.sort_by(|x, y| y.eps.total_cmp(&x.eps));
    if b.windows(2).any(|w| w[0].eps == w[1].eps) {
        return Err(Error::Usage("eps values in a sweep must be distinct".into()));
    }
    let eps_list: Vec<f64> = b.iter().map(|x| x.eps).collect();
    let identically_zero = b.iter().all(|x| x.velocity == 0.0);

    let fit = |name: &str, f: &dyn Fn(&NormBundle) -> f64| -> Result<NamedSlope> {
        let pts: Vec<(f64, f64)> = b.iter().map(|x| (x.eps, f(x))).collect();
        let fit = if pts.iter().all(|p| p.1 > 0.0) {
            Some(fit_slope(&pts)?)
        } else {
            None
        };
        Ok(NamedSlope {
            metric: name.to_string(),
            fit,
        })
    };
    let slopes = vec![
        fit("velocity_l2", &|x| x.velocity)?,
        fit("strain_l2", &|x| x.strain)?,
        fit("boundary_ls", &|x| x.boundary)?,
        fit("pressure_l2", &|x| x.pressure)?,
        fit("vertical_l2", &|x| x.vertical)?,
    ];

    let exponent = (3.0 - gamma) / s;
    let boundary_ratios: Vec<f64> = b.iter().map(|x| x.boundary / x.eps.powf(exponent)).collect();

    let mut checks = Vec::new();
    let slope_check = |name: &str, slope: &NamedSlope, target: f64| {
        let threshold = target - SLOPE_SLACK;
        match slope.fit {
            Some(f) => Check {
                name: name.into(),
                passed: f.slope >= threshold,
                value: f.slope,
                threshold,
            },
            // a vanishing velocity satisfies every upper bound
            None => Check {
                name: name.into(),
                passed: identically_zero,
                value: f64::NAN,
                threshold,
            },
        }
    };
    checks.push(slope_check("velocity_slope", &slopes[0], 2.0));
    checks.push(slope_check("strain_slope", &slopes[1], 1.0));

    let pmax = b.iter().map(|x| x.pressure).fold(0.0, f64::max);
    let pmin = b.iter().map(|x| x.pressure).fold(f64::INFINITY, f64::min);
    let pratio = if pmax == 0.0 {
        1.0
    } else if pmin == 0.0 {
        f64::INFINITY
    } else {
        pmax / pmin
    };
    checks.push(Check {
        name: "pressure_bounded".into(),
        passed: pratio <= PRESSURE_RATIO_BOUND,
        value: pratio,
        threshold: PRESSURE_RATIO_BOUND,
    });

    // worst growth of r over any pair with decreasing ε
    let mut growth: f64 = if identically_zero { 0.0 } else { 1.0 };
    for i in 0..boundary_ratios.len() {
        for j in i + 1..boundary_ratios.len() {
            let (ri, rj) = (boundary_ratios[i], boundary_ratios[j]);
            if ri > 0.0 {
                growth = growth.max(rj / ri);
            } else if rj > 0.0 {
                growth = f64::INFINITY;
            }
        }
    }
    checks.push(Check {
        name: "boundary_ratio".into(),
        passed: growth <= BOUNDARY_RATIO_SLACK,
        value: growth,
        threshold: BOUNDARY_RATIO_SLACK,
    });

    Ok(SweepReport {
        eps_list,
        norms: b,
        slopes,
        boundary_ratios,
        checks,
        identically_zero,
        limit_errors: Vec::new(),
        regime: None,
    })
}

/// L² norm over Ω of the horizontal components and of their vertical
/// derivative for a reduced velocity field. The derivative uses the bottom
/// trace and the zero top value at half-cell distance.
fn vertical_seminorm(f: &Field) -> Result<(f64, f64)> {
    if f.kind != FieldKind::VelocityReduced {
        return Err(Error::Usage("expected a cell-centered velocity field".into()));
    }
    let g = &f.grid;
    let l = ReducedVelocityLayout::new(g);
    let area = g.reduced.cell_area();
    let (mut value, mut deriv) = (0.0, 0.0);
    for j in 0..g.ny() {
        for i in 0..g.nx() {
            let col = g.reduced.cell_index(i, j);
            let dz = g.dz(i, j);
            for c in 0..l.n_horizontal {
                let at = |k: usize| f.values[l.value(c, g.cell_index(i, j, k))];
                let b = f.values[l.trace(c, col)];
                let mut below = b;
                for k in 0..g.nz {
                    let u = at(k);
                    value += u * u * area * dz;
                    let (d, len) = if k == 0 {
                        ((u - below) / (0.5 * dz), 0.5 * dz)
                    } else {
                        ((u - below) / dz, dz)
                    };
                    deriv += d * d * area * len;
                    below = u;
                }
                let d = -below / (0.5 * dz);
                deriv += d * d * area * 0.5 * dz;
            }
        }
    }
    Ok((value.sqrt(), deriv.sqrt()))
}

/// Distance between two cell-centered velocity fields on the same grid:
/// `(L² error, L² error of ∂₃)`.
pub fn field_distance(a: &Field, b: &Field) -> Result<(f64, f64)> {
    if !a.grid.same_geometry(&b.grid) {
        return Err(Error::Usage("fields live on different grids".into()));
    }
    if a.kind != FieldKind::VelocityReduced || b.kind != FieldKind::VelocityReduced {
        return Err(Error::Usage("expected cell-centered velocity fields".into()));
    }
    let mut d = a.clone();
    d.values.iter_mut().zip(&b.values).for_each(|(x, y)| *x -= y);
    let l2 = norms(&d, 2.0, Restriction::Omega)?;
    let (_, d3) = vertical_seminorm(&d)?;
    Ok((l2, d3))
}

/// Compares `ε^{-2} ũ_ε` with the limit velocity.
pub fn compare_limit(sol: &FullOrderSolution, limit: &LimitSolution) -> Result<LimitError> {
    let lg = &limit.velocity.grid;
    let sg = &sol.velocity.grid;
    if !sg.same_geometry(lg) {
        return Err(Error::Usage(format!(
            "geometry mismatch: full-order grid {}x{}x{} vs limit grid {}x{}x{}",
            sg.nx(),
            sg.ny(),
            sg.nz,
            lg.nx(),
            lg.ny(),
            lg.nz
        )));
    }
    let w = rescaled_velocity(sol)?;
    let (l2, d3) = field_distance(&w, &limit.velocity)?;
    let reference = norms(&limit.velocity, 2.0, Restriction::Omega)?;
    Ok(LimitError {
        eps: sol.eps,
        l2,
        d3,
        relative_l2: if reference > 0.0 { l2 / reference } else { l2 },
    })
}

/// `ε^{-2} ũ_ε` sampled at cell centers and bottom-face midpoints.
pub fn rescaled_velocity(sol: &FullOrderSolution) -> Result<Field> {
    sol.velocity.to_cell_centered(1.0 / (sol.eps * sol.eps))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Subcritical,
    Critical,
    Supercritical,
    Indeterminate,
    /// The flow vanishes; no wall law can be read off.
    ZeroFlow,
}

impl Verdict {
    pub fn matches(self, kind: RegimeKind) -> bool {
        matches!(
            (self, kind),
            (Verdict::Subcritical, RegimeKind::Subcritical)
                | (Verdict::Critical, RegimeKind::Critical)
                | (Verdict::Supercritical, RegimeKind::Supercritical)
        )
    }
}

/// Wall-law indicators of a rescaled field `w = ε^{-2} ũ_ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegimeIndicators {
    pub eps: f64,
    /// `‖b‖_{L²(Γ₀)} / ‖w‖_{L²(Ω)}`.
    pub slip_ratio: f64,
    /// `‖t‖_{L²(Γ₀)} / (ν ‖∂₃w'‖_{L²(Ω)})`.
    pub shear_ratio: f64,
    /// `‖t - |K b|_δ^{s-2} K² b‖_{L²(Γ₀)} / ‖t‖_{L²(Γ₀)}`.
    pub closure_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeVerdict {
    pub verdict: Verdict,
    pub indicators: Vec<RegimeIndicators>,
    /// Regime predicted by `(s, γ)`, when known.
    pub expected: Option<RegimeKind>,
}

impl RegimeVerdict {
    pub fn agrees(&self) -> bool {
        self.expected.is_some_and(|k| self.verdict.matches(k))
    }
}

/// Indicators for a cell-centered rescaled field; `t = ν ∂₃w'` on Γ₀ is taken
/// with `stencil` from the trace and the two lowest cells. `None` for a zero
/// field.
pub fn field_indicators(
    w: &Field,
    eps: f64,
    nu: f64,
    law: &SlipLaw,
    stencil: BottomStencil,
) -> Result<Option<RegimeIndicators>> {
    let g: &Arc<Grid3> = &w.grid;
    if g.nz < 2 {
        return Err(Error::Usage("regime indicators need at least 2 vertical cells".into()));
    }
    let (value, deriv) = vertical_seminorm(w)?;
    if value == 0.0 {
        return Ok(None);
    }
    let area = g.reduced.cell_area();
    let (mut slip, mut shear, mut closure) = (0.0, 0.0, 0.0);
    for j in 0..g.ny() {
        for i in 0..g.nx() {
            let b = w.bottom_trace(i, j)?;
            let c0 = w.cell_velocity(i, j, 0)?;
            let c1 = w.cell_velocity(i, j, 1)?;
            let dz = g.dz(i, j);
            let t = Vector2::new(
                nu * stencil.derivative(b[0], c0[0], c1[0], dz),
                nu * stencil.derivative(b[1], c0[1], c1[1], dz),
            );
            slip += b.norm_squared() * area;
            shear += t.norm_squared() * area;
            closure += (t - law.traction(&b)).norm_squared() * area;
        }
    }
    let ratio = |num: f64, den: f64| {
        if den > 0.0 {
            num / den
        } else if num > 0.0 {
            f64::INFINITY
        } else {
            0.0
        }
    };
    Ok(Some(RegimeIndicators {
        eps,
        slip_ratio: slip.sqrt() / value,
        shear_ratio: ratio(shear.sqrt(), nu * deriv),
        closure_residual: ratio(closure.sqrt(), shear.sqrt()),
    }))
}

/// Indicators of one full-order solve. The slip law keeps the unscaled δ
/// since it acts on rescaled traces.
pub fn solution_indicators(sol: &FullOrderSolution) -> Result<Option<RegimeIndicators>> {
    let w = rescaled_velocity(sol)?;
    field_indicators(&w, sol.eps, sol.params.nu, &sol.params.slip_law(), sol.options.stencil)
}

/// `series` holds (ε, value) ordered by decreasing ε.
fn is_small(series: &[(f64, f64)]) -> bool {
    let Some(&(_, last)) = series.last() else { return false };
    if last <= REGIME_FLOOR || series.iter().all(|&(_, v)| v <= REGIME_THRESHOLD) {
        return true;
    }
    series.len() >= 2
        && series.windows(2).all(|w| w[1].1 < w[0].1)
        && fit_slope(series).is_ok_and(|f| f.slope >= DECAY_RATE)
}

/// Verdict from indicators ordered by decreasing ε. Critical is tested
/// first, then subcritical, then supercritical.
pub fn classify_indicators(indicators: &[RegimeIndicators]) -> Verdict {
    if indicators.is_empty() {
        return Verdict::ZeroFlow;
    }
    let series = |f: fn(&RegimeIndicators) -> f64| indicators.iter().map(|i| (i.eps, f(i))).collect::<Vec<_>>();
    if is_small(&series(|i| i.closure_residual)) {
        Verdict::Critical
    } else if is_small(&series(|i| i.slip_ratio)) {
        Verdict::Subcritical
    } else if is_small(&series(|i| i.shear_ratio)) {
        Verdict::Supercritical
    } else {
        Verdict::Indeterminate
    }
}

/// Classifies an ε-sweep. Any vanishing solution makes the sweep
/// zero-flow.
pub fn classify_sweep(sweep: &[FullOrderSolution]) -> Result<RegimeVerdict> {
    let mut sols: Vec<&FullOrderSolution> = sweep.iter().collect();
    sols.sort_by(|a, b| b.eps.total_cmp(&a.eps));
    let found = sols
        .par_iter()
        .map(|s| solution_indicators(s))
        .collect::<Result<Vec<_>>>()?;
    let expected = sols.first().map(|s| s.params.regime()).transpose()?.map(|r| r.kind);
    let Some(indicators) = found.into_iter().collect::<Option<Vec<_>>>() else {
        return Ok(RegimeVerdict {
            verdict: Verdict::ZeroFlow,
            indicators: Vec::new(),
            expected,
        });
    };
    Ok(RegimeVerdict {
        verdict: classify_indicators(&indicators),
        indicators,
        expected,
    })
}

/// Single-solve verdict against a limit solution on the same geometry. The
/// trend requirement is dropped; only the thresholds apply.
pub fn regime_identify(sol: &FullOrderSolution, limit: &LimitSolution) -> Result<RegimeVerdict> {
    if !sol.velocity.grid.same_geometry(&limit.velocity.grid) {
        return Err(Error::Usage(
            "full-order and limit solutions live on different grids".into(),
        ));
    }
    let expected = Some(limit.regime.kind);
    let Some(ind) = solution_indicators(sol)? else {
        return Ok(RegimeVerdict {
            verdict: Verdict::ZeroFlow,
            indicators: Vec::new(),
            expected,
        });
    };
    Ok(RegimeVerdict {
        verdict: classify_indicators(&[ind]),
        indicators: vec![ind],
        expected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{ReducedDim, ReducedGrid};
    use crate::profile::solve_profile;
    use nalgebra::Matrix2;
    use proptest::prelude::*;

    fn bundle(eps: f64, velocity: f64, strain: f64, boundary: f64, pressure: f64) -> NormBundle {
        NormBundle {
            eps,
            velocity,
            strain,
            boundary,
            pressure,
            vertical: velocity * eps,
        }
    }

    #[test]
    fn fit_examples() {
        let f = fit_slope(&[(0.1, 0.01), (0.05, 0.0025)]).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12 && f.residual < 1e-12);
        let f = fit_slope(&[(0.1, 3.0), (0.05, 3.0)]).unwrap();
        assert!(f.slope.abs() < 1e-12);
        let f = fit_slope(&[(0.2, 0.2), (0.1, 0.1), (0.05, 0.05)]).unwrap();
        assert!((f.slope - 1.0).abs() < 1e-12 && f.residual < 1e-12);
        assert!(matches!(fit_slope(&[(0.1, 0.0), (0.05, 1.0)]), Err(Error::Data(_))));
        assert!(matches!(fit_slope(&[(0.1, 1.0)]), Err(Error::Usage(_))));
    }

    proptest! {
        #[test]
        fn fit_recovers_pure_power_laws(p in -3.0f64..3.0, c in 0.01f64..100.0) {
            let pts: Vec<(f64, f64)> = [0.2, 0.1, 0.05, 0.025].iter().map(|&e: &f64| (e, c * e.powf(p))).collect();
            let f = fit_slope(&pts).unwrap();
            prop_assert!((f.slope - p).abs() < 1e-10);
            prop_assert!(f.residual < 1e-10);
        }
    }

    #[test]
    fn synthetic_sweep_passes() {
        let (s, gamma) = (1.5, 0.0);
        let e = (3.0 - gamma) / s;
        let b: Vec<NormBundle> = [0.2, 0.1, 0.05]
            .iter()
            .map(|&x: &f64| bundle(x, x * x, x, x.powf(e), 1.0))
            .collect();
        let r = verify_norms(&b, s, gamma).unwrap();
        assert!(r.passed(), "{:?}", r.checks);
    }

    #[test]
    fn wrong_velocity_law_fails() {
        let b: Vec<NormBundle> = [0.2, 0.1, 0.05]
            .iter()
            .map(|&x: &f64| bundle(x, x, x, x.powf(2.0), 1.0))
            .collect();
        let r = verify_norms(&b, 1.5, 0.0).unwrap();
        assert!(!r.check("velocity_slope").unwrap().passed);
        assert!(r.check("strain_slope").unwrap().passed);
    }

    #[test]
    fn unbounded_pressure_and_growing_boundary_fail() {
        let b: Vec<NormBundle> = [0.2, 0.1, 0.05]
            .iter()
            .map(|&x: &f64| bundle(x, x * x, x, x, 1.0 / x))
            .collect();
        let r = verify_norms(&b, 1.5, 0.0).unwrap();
        assert!(!r.check("pressure_bounded").unwrap().passed);
        assert!(!r.check("boundary_ratio").unwrap().passed);
    }

    #[test]
    fn too_few_points_is_usage_error() {
        let b = vec![bundle(0.1, 1.0, 1.0, 1.0, 1.0), bundle(0.05, 1.0, 1.0, 1.0, 1.0)];
        assert!(matches!(verify_norms(&b, 1.5, 0.0), Err(Error::Usage(_))));
    }

    #[test]
    fn zero_sweep_is_identically_zero() {
        let b: Vec<NormBundle> = [0.2, 0.1, 0.05]
            .iter()
            .map(|&x| bundle(x, 0.0, 0.0, 0.0, 0.0))
            .collect();
        let r = verify_norms(&b, 1.5, 0.0).unwrap();
        assert!(r.identically_zero && r.passed());
    }

    fn grid() -> Arc<Grid3> {
        Grid3::flat(ReducedGrid::unit(ReducedDim::Two, 3).unwrap(), 1.0, 8).unwrap()
    }

    fn random_field(g: &Arc<Grid3>, seed: u64) -> Field {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut f = Field::zeros(FieldKind::VelocityReduced, g.clone());
        f.values.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
        f
    }

    #[test]
    fn distance_of_constant_shift() {
        let g = grid();
        let a = random_field(&g, 1);
        let mut b = a.clone();
        let l = ReducedVelocityLayout::new(&g);
        for cell in 0..g.n_cells() {
            b.values[l.value(0, cell)] += 1e-3;
        }
        let (l2, _) = field_distance(&a, &b).unwrap();
        assert!((l2 - 1e-3).abs() < 1e-15);
        assert_eq!(field_distance(&a, &a).unwrap(), (0.0, 0.0));
    }

    proptest! {
        #[test]
        fn distance_is_a_metric(s1 in 0u64..1000, s2 in 0u64..1000, s3 in 0u64..1000) {
            let g = grid();
            let (a, b, c) = (random_field(&g, s1), random_field(&g, s2), random_field(&g, s3));
            let ab = field_distance(&a, &b).unwrap();
            let ba = field_distance(&b, &a).unwrap();
            let bc = field_distance(&b, &c).unwrap();
            let ac = field_distance(&a, &c).unwrap();
            prop_assert!((ab.0 - ba.0).abs() <= 1e-12 && (ab.1 - ba.1).abs() <= 1e-12);
            prop_assert!(ac.0 <= ab.0 + bc.0 + 1e-12);
            prop_assert!(ac.1 <= ab.1 + bc.1 + 1e-12);
            prop_assert_eq!(ab.0 == 0.0, s1 == s2);
        }
    }

    #[test]
    fn mismatched_grids_are_rejected() {
        let a = Field::zeros(FieldKind::VelocityReduced, grid());
        let other = Grid3::flat(ReducedGrid::unit(ReducedDim::Two, 4).unwrap(), 1.0, 8).unwrap();
        let b = Field::zeros(FieldKind::VelocityReduced, other);
        assert!(matches!(field_distance(&a, &b), Err(Error::Usage(_))));
    }

    /// Rescaled field built column by column from the closed-form profiles,
    /// with drive `(G, G/2)`.
    fn profile_field(params: &FluidParams, g: &Arc<Grid3>) -> Field {
        let regime = params.regime().unwrap();
        let l = ReducedVelocityLayout::new(g);
        let mut f = Field::zeros(FieldKind::VelocityReduced, g.clone());
        for j in 0..g.ny() {
            for i in 0..g.nx() {
                let drive = Vector2::new(1.0 + 0.1 * i as f64, 0.5 - 0.2 * j as f64);
                let p = solve_profile(drive, g.column_height(i, j), params, regime).unwrap();
                let dz = g.dz(i, j);
                for k in 0..g.nz {
                    let u = p.velocity_at((k as f64 + 0.5) * dz);
                    let cell = g.cell_index(i, j, k);
                    f.values[l.value(0, cell)] = u[0];
                    f.values[l.value(1, cell)] = u[1];
                }
                let col = g.reduced.cell_index(i, j);
                f.values[l.trace(0, col)] = p.slip[0];
                f.values[l.trace(1, col)] = p.slip[1];
            }
        }
        f
    }

    #[test]
    fn classifier_recovers_profile_regimes() {
        let g = grid();
        for (gamma, want) in [
            (-1.0, Verdict::Subcritical),
            (0.0, Verdict::Critical),
            (1.0, Verdict::Supercritical),
        ] {
            let params = FluidParams::new(1.0, 1.5, gamma, Matrix2::identity(), 0.1, 1e-6).unwrap();
            let w = profile_field(&params, &g);
            let ind = field_indicators(&w, 0.1, 1.0, &params.slip_law(), BottomStencil::SecondOrder)
                .unwrap()
                .unwrap();
            assert_eq!(classify_indicators(&[ind, ind]), want, "{ind:?}");
        }
    }

    #[test]
    fn navier_profiles_classify_as_critical() {
        let g = grid();
        let lambda: f64 = 2.0;
        let params = FluidParams::new(1.0, 2.0, -1.0, Matrix2::identity() * lambda.sqrt(), 0.1, 0.0).unwrap();
        let w = profile_field(&params, &g);
        let ind = field_indicators(&w, 0.1, 1.0, &params.slip_law(), BottomStencil::SecondOrder)
            .unwrap()
            .unwrap();
        assert!(ind.closure_residual < 1e-12, "{ind:?}");
        assert_eq!(classify_indicators(&[ind]), Verdict::Critical);
    }

    #[test]
    fn zero_field_has_no_indicators() {
        let g = grid();
        let w = Field::zeros(FieldKind::VelocityReduced, g);
        let law = SlipLaw::new(1.5, Matrix2::identity(), 1e-6);
        assert!(field_indicators(&w, 0.1, 1.0, &law, BottomStencil::SecondOrder)
            .unwrap()
            .is_none());
        assert_eq!(classify_indicators(&[]), Verdict::ZeroFlow);
    }

    #[test]
    fn smallness_rules() {
        let eps = [0.2, 0.1, 0.05];
        let s = |v: [f64; 3]| eps.iter().copied().zip(v).collect::<Vec<_>>();
        // flat floor below threshold
        assert!(is_small(&s([0.008, 0.007, 0.008])));
        // linear decay from above threshold
        assert!(is_small(&s([0.56, 0.24, 0.107])));
        assert!(is_small(&[(0.2, 1e-8), (0.1, 1e-7)]));
        assert!(!is_small(&s([0.01, 0.05, 0.2])));
        // slow drift is not decay
        assert!(!is_small(&s([1.56, 1.48, 1.44])));
        assert!(!is_small(&s([0.47, 0.53, 0.57])));
    }
}
