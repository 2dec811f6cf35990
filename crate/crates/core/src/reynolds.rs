//! Limit problem on ω: find the zero-mean pressure whose column fluxes are
//! divergence free with zero normal flux, then rebuild the velocity profiles.
//!
//! Cell-centered finite volumes; each face carries the drive
//! `G = f' - ∇p` (normal part from the two adjacent cells, tangential part
//! averaged from the four neighboring faces of the other family) and a flux
//! `q = M(G) G` from the column profile.

use std::sync::Arc;

use nalgebra::{Matrix2, Vector2};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{Field, FieldKind, ReducedVelocityLayout};
use crate::geometry::{ForcingPreset, Grid3, HeightField, ReducedDim, ReducedGrid};
use crate::params::{FluidParams, Regime, RegimeKind};
use crate::profile::{frozen_mobility, regime_mobility, solve_profile, ProfileSolution};
use crate::sparse::{SparseLu, Triplets};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitOptions {
    /// Vertical samples per column for the reconstructed velocity.
    pub n_z3: usize,
    /// Picard relaxation factor.
    pub relaxation: f64,
    /// Relative pressure update that stops the Picard loop.
    pub tolerance: f64,
    pub max_iters: usize,
}

impl Default for LimitOptions {
    fn default() -> Self {
        Self {
            n_z3: 16,
            relaxation: 0.7,
            tolerance: 1e-10,
            max_iters: 500,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LimitSolution {
    /// Zero-mean (gap-weighted) column pressure.
    pub pressure: Field,
    /// Profile velocity at the cell centers of Ω; the vertical component is zero.
    pub velocity: Field,
    /// Normal flux per unit length on x-faces, `j * (nx + 1) + i`.
    pub flux_x: Vec<f64>,
    /// Normal flux per unit length on y-faces, `j * nx + i` (empty in dimension 1).
    pub flux_y: Vec<f64>,
    pub picard_iters: usize,
    /// Largest per-cell flux divergence.
    pub flux_div_residual: f64,
    /// Linearized residual `|A(p) p - b(p)| / |b(p)|` at each Picard iterate.
    pub residual_history: Vec<f64>,
    /// Relative pressure updates.
    pub update_history: Vec<f64>,
    pub regime: Regime,
}

impl LimitSolution {
    pub fn grid(&self) -> &Arc<Grid3> {
        &self.velocity.grid
    }

    /// `∫ |u'|²` over Ω.
    pub fn kinetic_energy(&self) -> f64 {
        let n = crate::field::norms(&self.velocity, 2.0, crate::field::Restriction::Omega).unwrap_or(0.0);
        n * n
    }
}

/// Face drives and mobilities for one pressure iterate.
struct FaceState {
    /// Drive vectors on x-faces (boundary faces: normal part zero).
    gx: Vec<Vector2<f64>>,
    gy: Vec<Vector2<f64>>,
    /// Mobility tensors (zero on boundary faces).
    mx: Vec<Matrix2<f64>>,
    my: Vec<Matrix2<f64>>,
}

struct Problem<'a> {
    hf: &'a HeightField,
    params: &'a FluidParams,
    regime: Regime,
    grid: &'a ReducedGrid,
    two_d: bool,
    /// Forcing normal components on x- and y-faces.
    fx: Vec<f64>,
    fy: Vec<f64>,
}

impl<'a> Problem<'a> {
    fn new(hf: &'a HeightField, forcing: &ForcingPreset, params: &'a FluidParams) -> Result<Self> {
        params.validate()?;
        let regime = params.regime()?;
        let grid = &hf.grid;
        let two_d = grid.dim == ReducedDim::Two;
        let (nx, ny) = (grid.nx, grid.ny);
        let mut fx = Vec::with_capacity((nx + 1) * ny);
        for j in 0..ny {
            for i in 0..=nx {
                fx.push(forcing.eval(grid, [grid.x_node(i), grid.y_center(j)])[0]);
            }
        }
        let mut fy = Vec::new();
        if two_d {
            for j in 0..=ny {
                for i in 0..nx {
                    fy.push(forcing.eval(grid, [grid.x_center(i), grid.y_node(j)])[1]);
                }
            }
        }
        Ok(Self {
            hf,
            params,
            regime,
            grid,
            two_d,
            fx,
            fy,
        })
    }

    fn xf(&self, i: usize, j: usize) -> usize {
        j * (self.grid.nx + 1) + i
    }

    fn yf(&self, i: usize, j: usize) -> usize {
        j * self.grid.nx + i
    }

    /// Normal drive components; zero on boundary faces.
    fn normal_drives(&self, p: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let g = self.grid;
        let (nx, ny) = (g.nx, g.ny);
        let (dx, dy) = (g.dx(), g.dy());
        let mut gx = vec![0.0; (nx + 1) * ny];
        for j in 0..ny {
            for i in 1..nx {
                let grad = (p[g.cell_index(i, j)] - p[g.cell_index(i - 1, j)]) / dx;
                gx[self.xf(i, j)] = self.fx[self.xf(i, j)] - grad;
            }
        }
        let mut gy = Vec::new();
        if self.two_d {
            gy = vec![0.0; nx * (ny + 1)];
            for j in 1..ny {
                for i in 0..nx {
                    let grad = (p[g.cell_index(i, j)] - p[g.cell_index(i, j - 1)]) / dy;
                    gy[self.yf(i, j)] = self.fy[self.yf(i, j)] - grad;
                }
            }
        }
        (gx, gy)
    }

    fn face_state(&self, p: &[f64]) -> Result<FaceState> {
        let g = self.grid;
        let (nx, ny) = (g.nx, g.ny);
        let (nxn, nyn) = self.normal_drives(p);
        let mut gx = vec![Vector2::zeros(); nxn.len()];
        for j in 0..ny {
            for i in 0..=nx {
                let t = if self.two_d {
                    let mut s = 0.0;
                    for (ii, jj) in [(i.wrapping_sub(1), j), (i.wrapping_sub(1), j + 1), (i, j), (i, j + 1)] {
                        if ii < nx {
                            s += nyn[self.yf(ii, jj)];
                        }
                    }
                    0.25 * s
                } else {
                    0.0
                };
                gx[self.xf(i, j)] = Vector2::new(nxn[self.xf(i, j)], t);
            }
        }
        let mut gy = vec![Vector2::zeros(); nyn.len()];
        if self.two_d {
            for j in 0..=ny {
                for i in 0..nx {
                    let mut s = 0.0;
                    for (ii, jj) in [(i, j.wrapping_sub(1)), (i + 1, j.wrapping_sub(1)), (i, j), (i + 1, j)] {
                        if jj < ny {
                            s += nxn[self.xf(ii, jj)];
                        }
                    }
                    gy[self.yf(i, j)] = Vector2::new(0.25 * s, nyn[self.yf(i, j)]);
                }
            }
        }

        let interior_x = |idx: usize| {
            let i = idx % (nx + 1);
            i > 0 && i < nx
        };
        let interior_y = |idx: usize| {
            let j = idx / nx;
            j > 0 && j < ny
        };
        let hx = &self.hf.h_faces_x;
        let hy = &self.hf.h_faces_y;
        let mx = self.mobilities(&gx, hx, interior_x)?;
        let my = self.mobilities(&gy, hy, interior_y)?;
        Ok(FaceState { gx, gy, mx, my })
    }

    fn mobilities(
        &self,
        drives: &[Vector2<f64>],
        gaps: &[f64],
        interior: impl Fn(usize) -> bool + Sync,
    ) -> Result<Vec<Matrix2<f64>>> {
        let params = self.params;
        let regime = self.regime;
        drives
            .par_iter()
            .enumerate()
            .map(|(idx, g)| {
                if !interior(idx) {
                    return Ok(Matrix2::zeros());
                }
                let h = gaps[idx];
                match regime_mobility(regime.kind, h, params.nu) {
                    Some(m) => Ok(Matrix2::identity() * m),
                    None => {
                        let sol = solve_profile(*g, h, params, regime)?;
                        let coeff = params.slip_law().coefficient(&Vector2::from(sol.slip));
                        Ok(frozen_mobility(h, params.nu, coeff, &params.k))
                    }
                }
            })
            .collect()
    }

    /// Assembles the pinned flux-balance system for frozen mobilities. The
    /// tangential coupling `M_nt G_t` is lagged into the right-hand side.
    fn assemble(&self, st: &FaceState) -> (Triplets, Vec<f64>) {
        let g = self.grid;
        let (nx, ny) = (g.nx, g.ny);
        let (dx, dy) = (g.dx(), g.dy());
        let n = g.n_cells();
        let mut t = Triplets::new(n, n);
        let mut b = vec![0.0; n];
        let link = |t: &mut Triplets, b: &mut [f64], lo: usize, hi: usize, w: f64, src: f64| {
            // outflow of `lo` is w (p_lo - p_hi) + src
            let keep = |row: usize| if row == 0 { 0.0 } else { 1.0 };
            t.push(lo, lo, keep(lo) * w);
            t.push(lo, hi, -keep(lo) * w);
            t.push(hi, hi, keep(hi) * w);
            t.push(hi, lo, -keep(hi) * w);
            if lo != 0 {
                b[lo] -= src;
            }
            if hi != 0 {
                b[hi] += src;
            }
        };
        for j in 0..ny {
            for i in 1..nx {
                let f = self.xf(i, j);
                let m = st.mx[f];
                let w = m[(0, 0)] * dy / dx;
                let src = (m[(0, 0)] * self.fx[f] + m[(0, 1)] * st.gx[f][1]) * dy;
                link(&mut t, &mut b, g.cell_index(i - 1, j), g.cell_index(i, j), w, src);
            }
        }
        if self.two_d {
            for j in 1..ny {
                for i in 0..nx {
                    let f = self.yf(i, j);
                    let m = st.my[f];
                    let w = m[(1, 1)] * dx / dy;
                    let src = (m[(1, 1)] * self.fy[f] + m[(1, 0)] * st.gy[f][0]) * dx;
                    link(&mut t, &mut b, g.cell_index(i, j - 1), g.cell_index(i, j), w, src);
                }
            }
        }
        t.push(0, 0, 1.0);
        (t, b)
    }

    /// Normal fluxes per unit length: `M(G) G` with the current drives.
    fn fluxes(&self, st: &FaceState) -> (Vec<f64>, Vec<f64>) {
        let qx = st.mx.iter().zip(&st.gx).map(|(m, g)| (m * g)[0]).collect();
        let qy = st.my.iter().zip(&st.gy).map(|(m, g)| (m * g)[1]).collect();
        (qx, qy)
    }

    fn max_flux_divergence(&self, qx: &[f64], qy: &[f64]) -> f64 {
        let g = self.grid;
        let (dx, dy) = (g.dx(), g.dy());
        let mut worst: f64 = 0.0;
        for j in 0..g.ny {
            for i in 0..g.nx {
                let mut d = (qx[self.xf(i + 1, j)] - qx[self.xf(i, j)]) / dx;
                if self.two_d {
                    d += (qy[self.yf(i, j + 1)] - qy[self.yf(i, j)]) / dy;
                }
                worst = worst.max(d.abs());
            }
        }
        worst
    }

    /// Whether a frozen-mobility solve is already the fixed point.
    fn is_linear(&self) -> bool {
        match self.regime.kind {
            RegimeKind::Subcritical | RegimeKind::Supercritical => true,
            RegimeKind::Critical => {
                let k2 = self.params.k * self.params.k;
                self.params.s == 2.0 && (k2[(0, 1)] == 0.0 || !self.two_d)
            }
        }
    }
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Solves the limit problem for gap `hf` and forcing `forcing`.
pub fn solve_limit(
    hf: &HeightField,
    forcing: &ForcingPreset,
    params: &FluidParams,
    options: &LimitOptions,
) -> Result<LimitSolution> {
    if !(options.relaxation > 0.0 && options.relaxation <= 1.0) {
        return Err(Error::domain("relaxation", "Picard relaxation must lie in (0, 1]"));
    }
    let prob = Problem::new(hf, forcing, params)?;
    let n = prob.grid.n_cells();
    let linear = prob.is_linear();
    let mut p = vec![0.0; n];
    let mut lu: Option<SparseLu> = None;
    let mut residual_history = Vec::new();
    let mut update_history = Vec::new();
    let mut iters = 0;
    let mut converged = false;
    while iters < options.max_iters {
        iters += 1;
        let st = prob.face_state(&p)?;
        let (t, b) = prob.assemble(&st);
        let ap = t.apply(&p);
        let bn = l2(&b);
        let res: Vec<f64> = ap.iter().zip(&b).skip(1).map(|(a, b)| a - b).collect();
        residual_history.push(if bn > 0.0 { l2(&res) / bn } else { l2(&res) });
        if lu.is_none() {
            lu = Some(SparseLu::analyze(&t)?);
        }
        let solver = lu.as_mut().expect("analyzed above");
        solver.factorize(&t.vals)?;
        let p_hat = solver.solve(&b)?;
        if linear {
            p = p_hat;
            converged = true;
            break;
        }
        let theta = options.relaxation;
        let next: Vec<f64> = p.iter().zip(&p_hat).map(|(a, b)| a + theta * (b - a)).collect();
        let diff: Vec<f64> = next.iter().zip(&p).map(|(a, b)| a - b).collect();
        let scale = l2(&next);
        let upd = if scale > 0.0 { l2(&diff) / scale } else { l2(&diff) };
        update_history.push(upd);
        p = next;
        if upd < options.tolerance {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence {
            solver: "limit picard",
            iterations: iters,
            residual: update_history.last().copied().unwrap_or(f64::NAN),
            history: update_history,
        });
    }

    let grid3 = Grid3::new(hf, options.n_z3)?;
    let mut pressure = Field::from_values(FieldKind::PressureReduced, grid3.clone(), p)?;
    pressure.project_zero_mean()?;
    let st = prob.face_state(&pressure.values)?;
    let (flux_x, flux_y) = prob.fluxes(&st);
    let flux_div_residual = prob.max_flux_divergence(&flux_x, &flux_y);
    let velocity = reconstruct_from_state(&prob, &st, grid3)?;
    Ok(LimitSolution {
        pressure,
        velocity,
        flux_x,
        flux_y,
        picard_iters: iters,
        flux_div_residual,
        residual_history,
        update_history,
        regime: prob.regime,
    })
}

/// Profile velocity on the cells of Ω for a given column pressure.
///
/// The drive at a cell center averages the normal drives of its two faces per
/// axis; wall faces carry zero normal drive (the discrete no-flux condition).
pub fn reconstruct_velocity(
    pressure: &Field,
    hf: &HeightField,
    forcing: &ForcingPreset,
    params: &FluidParams,
    n_z3: usize,
) -> Result<Field> {
    if pressure.kind != FieldKind::PressureReduced {
        return Err(Error::Usage("reconstruction needs a reduced pressure".into()));
    }
    if pressure.values.len() != hf.grid.n_cells() {
        return Err(Error::Usage("pressure does not match the height field".into()));
    }
    let prob = Problem::new(hf, forcing, params)?;
    let (gx, gy) = prob.normal_drives(&pressure.values);
    let grid3 = Grid3::new(hf, n_z3)?;
    cell_profiles(&prob, &gx, &gy, grid3)
}

fn reconstruct_from_state(prob: &Problem<'_>, st: &FaceState, grid3: Arc<Grid3>) -> Result<Field> {
    let gx: Vec<f64> = st.gx.iter().map(|g| g[0]).collect();
    let gy: Vec<f64> = st.gy.iter().map(|g| g[1]).collect();
    cell_profiles(prob, &gx, &gy, grid3)
}

fn cell_profiles(prob: &Problem<'_>, gx: &[f64], gy: &[f64], grid3: Arc<Grid3>) -> Result<Field> {
    let g = prob.grid;
    let (nx, ny) = (g.nx, g.ny);
    let layout = ReducedVelocityLayout::new(&grid3);
    let columns: Vec<(usize, usize)> = (0..ny).flat_map(|j| (0..nx).map(move |i| (i, j))).collect();
    let profiles: Result<Vec<ProfileSolution>> = columns
        .par_iter()
        .map(|&(i, j)| {
            let d1 = 0.5 * (gx[prob.xf(i, j)] + gx[prob.xf(i + 1, j)]);
            let d2 = if prob.two_d {
                0.5 * (gy[prob.yf(i, j)] + gy[prob.yf(i, j + 1)])
            } else {
                0.0
            };
            solve_profile(Vector2::new(d1, d2), prob.hf.h_cell(i, j), prob.params, prob.regime)
        })
        .collect();
    let profiles = profiles?;
    let mut out = Field::zeros(FieldKind::VelocityReduced, grid3.clone());
    for (&(i, j), prof) in columns.iter().zip(&profiles) {
        let col = g.cell_index(i, j);
        let dz = grid3.dz(i, j);
        for k in 0..grid3.nz {
            let u = prof.velocity_at((k as f64 + 0.5) * dz);
            let cell = grid3.cell_index(i, j, k);
            for c in 0..layout.n_horizontal {
                out.values[layout.value(c, cell)] = u[c];
            }
        }
        for c in 0..layout.n_horizontal {
            out.values[layout.trace(c, col)] = prof.slip[c];
        }
    }
    Ok(out)
}
