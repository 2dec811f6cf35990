//! Finite-ε problem on the dilated domain: MAC discretization of the
//! ε-scaled Stokes (optionally Navier-Stokes) system with the power-law slip
//! condition on the bottom wall.
//!
//! Unknowns are the interior face velocities, the tangential bottom traces
//! `b` and the cell pressures. All rows are integrated over their control
//! volume. The cell next to the bottom couples to the trace through a
//! one-sided `∂₃` stencil, and each trace row is the Robin balance
//! `-ν ε⁻² ∂₃u + ε^{γ-1} ∂Φ/∂b = 0`, where `Φ` is the bottom-face midpoint
//! quadrature of the slip potential.

use std::collections::VecDeque;
use std::sync::Arc;

#[cfg(test)]
use nalgebra::Matrix2;
use nalgebra::{DMatrix, DVector, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Field, FieldKind, VelocityLayout};
use crate::geometry::{ForcingPreset, Grid3};
use crate::operators::{divergence_matrix, gradient_matrix, DofKind, VelocityDofs};
use crate::params::{FluidParams, SlipLaw};
use crate::sparse::{SparseLu, Triplets};

/// One-sided difference used for `∂₃u` at the bottom wall.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BottomStencil {
    /// `(u₀ - b) / (Δz/2)`.
    FirstOrder,
    /// `(-8b + 9u₀ - u₁) / (3Δz)`, exact for quadratics.
    SecondOrder,
}

impl BottomStencil {
    /// Coefficients on `(b, u₀, u₁)` times `Δz`.
    fn weights(self) -> [f64; 3] {
        match self {
            BottomStencil::FirstOrder => [-2.0, 2.0, 0.0],
            BottomStencil::SecondOrder => [-8.0 / 3.0, 3.0, -1.0 / 3.0],
        }
    }

    /// `∂₃u(0)` from the trace and the two lowest cell values.
    pub fn derivative(self, b: f64, u0: f64, u1: f64, dz: f64) -> f64 {
        let [wb, w0, w1] = self.weights();
        (wb * b + w0 * u0 + w1 * u1) / dz
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FullOptions {
    /// Upwinded convection, frozen inside the outer loop.
    pub convection: bool,
    pub stencil: BottomStencil,
    /// Relative velocity update that stops the outer loop.
    pub tolerance: f64,
    pub max_outer: usize,
    /// Anderson mixing depth on the velocity (0 for the plain frozen-coefficient
    /// iteration).
    pub acceleration_depth: usize,
}

impl Default for FullOptions {
    fn default() -> Self {
        Self {
            convection: false,
            stencil: BottomStencil::SecondOrder,
            tolerance: 1e-10,
            max_outer: 200,
            acceleration_depth: 5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FullOrderSolution {
    pub velocity: Field,
    /// Zero-mean (volume-weighted) pressure.
    pub pressure: Field,
    pub eps: f64,
    pub outer_iters: usize,
    /// `|A x - f| / |f|` of the last frozen saddle-point system.
    pub saddle_residual: f64,
    /// Frozen Robin coefficients `ε^{γ-1} |K b|_δ^{s-2}` per bottom face.
    pub boundary_coeff_field: Vec<f64>,
    /// Relative velocity updates of the outer loop.
    pub update_history: Vec<f64>,
    pub params: FluidParams,
    pub forcing: ForcingPreset,
    pub options: FullOptions,
}

/// Terms of the discrete energy balance
/// `viscous + boundary (+ convection) = work`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyBalance {
    /// Discrete `ν ‖D_ε u‖²` of the assembled viscous operator.
    pub viscous: f64,
    /// `ε^{γ-1} ∫_{Γ₀} |K u'|_δ^{s-2} |K u'|²`.
    pub boundary: f64,
    /// Convective work (zero without convection).
    pub convection: f64,
    /// `∫ f'·u'`.
    pub work: f64,
    /// `|viscous + boundary + convection - work| / max(work, viscous + boundary)`.
    pub mismatch: f64,
}

/// Neighbor of a momentum unknown along one axis.
#[derive(Debug, Clone, Copy)]
enum Neighbor {
    /// A free unknown at the given distance.
    Free(usize, f64),
    /// A wall value of zero at the given distance.
    Wall(f64),
}

/// Bottom face of one column: the free trace unknowns entering its midpoint
/// value `b_c = P b` (order: `b1` left, `b1` right, `b2` low, `b2` high).
#[derive(Debug, Clone, Copy)]
struct BottomCell {
    local: [Option<usize>; 4],
}

/// The assembled linear pieces of the full-order problem for one grid,
/// forcing and parameter set.
pub struct FullOrderSystem {
    pub grid: Arc<Grid3>,
    pub dofs: VelocityDofs,
    pub params: FluidParams,
    pub stencil: BottomStencil,
    pub n_velocity: usize,
    pub n_pressure: usize,
    viscous: Triplets,
    gradient: Triplets,
    divergence: Triplets,
    rhs: Vec<f64>,
    cells: Vec<BottomCell>,
    area: f64,
    /// `ε^{γ-1}`.
    boundary_scale: f64,
    law: SlipLaw,
}

impl FullOrderSystem {
    pub fn new(
        grid: Arc<Grid3>,
        forcing: &ForcingPreset,
        params: &FluidParams,
        stencil: BottomStencil,
    ) -> Result<Self> {
        params.validate()?;
        grid.uniform_height()?;
        let dofs = VelocityDofs::new(&grid);
        let eps = params.eps;
        let gradient = gradient_matrix(&grid, &dofs, eps)?;
        let divergence = divergence_matrix(&grid, &dofs, eps)?;
        let mut sys = Self {
            n_velocity: dofs.n_free(),
            n_pressure: grid.n_cells(),
            viscous: Triplets::new(dofs.n_free(), dofs.n_free()),
            gradient,
            divergence,
            rhs: vec![0.0; dofs.n_free()],
            cells: Vec::new(),
            area: grid.reduced.cell_area(),
            boundary_scale: eps.powf(params.gamma - 1.0),
            // traces scale like ε², so the regularization length does too
            law: SlipLaw::new(params.s, params.k, params.delta_reg * eps * eps),
            grid,
            dofs,
            params: *params,
            stencil,
        };
        sys.assemble_viscous();
        sys.assemble_forcing(forcing);
        sys.collect_bottom_cells();
        Ok(sys)
    }

    fn spacing(&self) -> (f64, f64, f64) {
        (self.grid.reduced.dx(), self.grid.reduced.dy(), self.grid.dz(0, 0))
    }

    /// Neighbors of a momentum unknown along x, y and z (minus side, plus
    /// side). The bottom neighbor of a horizontal component is its trace.
    fn neighbors(&self, kind: DofKind, i: usize, j: usize, k: usize) -> [[Option<Neighbor>; 2]; 3] {
        let l = &self.dofs.layout;
        let (nx, ny, nz) = (l.nx, l.ny, l.nz);
        let (dx, dy, dz) = self.spacing();
        let free = |idx: usize, d: f64| match self.dofs.free(idx) {
            Some(f) => Neighbor::Free(f, d),
            None => Neighbor::Wall(d),
        };
        let mut out = [[None; 2]; 3];
        match kind {
            DofKind::U1 => {
                out[0] = [Some(free(l.u1(i - 1, j, k), dx)), Some(free(l.u1(i + 1, j, k), dx))];
                if l.two_d {
                    out[1][0] = Some(if j > 0 {
                        free(l.u1(i, j - 1, k), dy)
                    } else {
                        Neighbor::Wall(0.5 * dy)
                    });
                    out[1][1] = Some(if j + 1 < ny {
                        free(l.u1(i, j + 1, k), dy)
                    } else {
                        Neighbor::Wall(0.5 * dy)
                    });
                }
                out[2][0] = Some(if k > 0 {
                    free(l.u1(i, j, k - 1), dz)
                } else {
                    free(l.b1(i, j), 0.5 * dz)
                });
                out[2][1] = Some(if k + 1 < nz {
                    free(l.u1(i, j, k + 1), dz)
                } else {
                    Neighbor::Wall(0.5 * dz)
                });
            }
            DofKind::U2 => {
                out[0][0] = Some(if i > 0 {
                    free(l.u2(i - 1, j, k), dx)
                } else {
                    Neighbor::Wall(0.5 * dx)
                });
                out[0][1] = Some(if i + 1 < nx {
                    free(l.u2(i + 1, j, k), dx)
                } else {
                    Neighbor::Wall(0.5 * dx)
                });
                out[1] = [Some(free(l.u2(i, j - 1, k), dy)), Some(free(l.u2(i, j + 1, k), dy))];
                out[2][0] = Some(if k > 0 {
                    free(l.u2(i, j, k - 1), dz)
                } else {
                    free(l.b2(i, j), 0.5 * dz)
                });
                out[2][1] = Some(if k + 1 < nz {
                    free(l.u2(i, j, k + 1), dz)
                } else {
                    Neighbor::Wall(0.5 * dz)
                });
            }
            DofKind::U3 => {
                out[0][0] = Some(if i > 0 {
                    free(l.u3(i - 1, j, k), dx)
                } else {
                    Neighbor::Wall(0.5 * dx)
                });
                out[0][1] = Some(if i + 1 < nx {
                    free(l.u3(i + 1, j, k), dx)
                } else {
                    Neighbor::Wall(0.5 * dx)
                });
                if l.two_d {
                    out[1][0] = Some(if j > 0 {
                        free(l.u3(i, j - 1, k), dy)
                    } else {
                        Neighbor::Wall(0.5 * dy)
                    });
                    out[1][1] = Some(if j + 1 < ny {
                        free(l.u3(i, j + 1, k), dy)
                    } else {
                        Neighbor::Wall(0.5 * dy)
                    });
                }
                out[2] = [Some(free(l.u3(i, j, k - 1), dz)), Some(free(l.u3(i, j, k + 1), dz))];
            }
            DofKind::B1 | DofKind::B2 => {}
        }
        out
    }

    /// Face position `(i, j, k)` of a layout index.
    fn position(&self, kind: DofKind, idx: usize) -> (usize, usize, usize) {
        let l = &self.dofs.layout;
        let (nx, ny) = (l.nx, l.ny);
        match kind {
            DofKind::U1 => {
                let r = idx;
                (r % (nx + 1), (r / (nx + 1)) % ny, r / ((nx + 1) * ny))
            }
            DofKind::U2 => {
                let r = idx - l.off_u2;
                (r % nx, (r / nx) % (ny + 1), r / (nx * (ny + 1)))
            }
            DofKind::U3 => {
                let r = idx - l.off_u3;
                (r % nx, (r / nx) % ny, r / (nx * ny))
            }
            DofKind::B1 => {
                let r = idx - l.off_b1;
                (r % (nx + 1), r / (nx + 1), 0)
            }
            DofKind::B2 => {
                let r = idx - l.off_b2;
                (r % nx, r / nx, 0)
            }
        }
    }

    fn assemble_viscous(&mut self) {
        let nu = self.params.nu;
        let eps2 = self.params.eps * self.params.eps;
        let (dx, dy, dz) = self.spacing();
        let two_d = self.dofs.layout.two_d;
        // face areas normal to x, y, z, and the vertical scaling
        let area = [dy * dz, dx * dz, dx * dy];
        let scale = [1.0, 1.0, 1.0 / eps2];
        let weights = self.stencil.weights();
        let mut t = Triplets::new(self.n_velocity, self.n_velocity);
        for row in 0..self.n_velocity {
            let kind = self.dofs.kind_of[row];
            if matches!(kind, DofKind::B1 | DofKind::B2) {
                continue;
            }
            let (i, j, k) = self.position(kind, self.dofs.layout_of[row]);
            let nb = self.neighbors(kind, i, j, k);
            let mut diag = 0.0;
            for (axis, sides) in nb.iter().enumerate() {
                if axis == 1 && !two_d {
                    continue;
                }
                for (side, n) in sides.iter().enumerate() {
                    let Some(n) = n else { continue };
                    let bottom = axis == 2 && side == 0 && k == 0 && kind != DofKind::U3;
                    if bottom {
                        // flux through the bottom wall from the one-sided stencil
                        let Neighbor::Free(b, _) = *n else { continue };
                        let c = nu * scale[2] * area[2] / dz;
                        let above = match nb[2][1] {
                            Some(Neighbor::Free(f, _)) => Some(f),
                            _ => None,
                        };
                        diag += c * weights[1];
                        t.push(row, b, c * weights[0]);
                        t.push(b, b, -c * weights[0]);
                        t.push(b, row, -c * weights[1]);
                        if let Some(up) = above {
                            t.push(row, up, c * weights[2]);
                            t.push(b, up, -c * weights[2]);
                        }
                        continue;
                    }
                    let (d, free) = match *n {
                        Neighbor::Free(f, d) => (d, Some(f)),
                        Neighbor::Wall(d) => (d, None),
                    };
                    let c = nu * scale[axis] * area[axis] / d;
                    diag += c;
                    if let Some(f) = free {
                        t.push(row, f, -c);
                    }
                }
            }
            t.push(row, row, diag);
        }
        self.viscous = t;
    }

    fn assemble_forcing(&mut self, forcing: &ForcingPreset) {
        let g = &self.grid.reduced;
        let vol = self.grid.cell_volume(0, 0);
        for row in 0..self.n_velocity {
            let kind = self.dofs.kind_of[row];
            let (i, j, _) = self.position(kind, self.dofs.layout_of[row]);
            self.rhs[row] = match kind {
                DofKind::U1 => vol * forcing.eval(g, [g.x_node(i), g.y_center(j)])[0],
                DofKind::U2 => vol * forcing.eval(g, [g.x_center(i), g.y_node(j)])[1],
                _ => 0.0,
            };
        }
    }

    fn collect_bottom_cells(&mut self) {
        let l = self.dofs.layout;
        let mut cells = Vec::with_capacity(l.nx * l.ny);
        for j in 0..l.ny {
            for i in 0..l.nx {
                let mut local = [self.dofs.free(l.b1(i, j)), self.dofs.free(l.b1(i + 1, j)), None, None];
                if l.two_d {
                    local[2] = self.dofs.free(l.b2(i, j));
                    local[3] = self.dofs.free(l.b2(i, j + 1));
                }
                cells.push(BottomCell { local });
            }
        }
        self.cells = cells;
    }

    /// Slip law on the finite-ε traces (`δ` scaled by `ε²`).
    pub fn law(&self) -> &SlipLaw {
        &self.law
    }

    /// Bottom-face midpoint traces `b_c` for free unknowns `v`.
    pub fn face_traces(&self, v: &[f64]) -> Vec<Vector2<f64>> {
        self.cells
            .iter()
            .map(|c| {
                let val = |o: Option<usize>| o.map_or(0.0, |f| v[f]);
                Vector2::new(
                    0.5 * (val(c.local[0]) + val(c.local[1])),
                    0.5 * (val(c.local[2]) + val(c.local[3])),
                )
            })
            .collect()
    }

    /// Frozen Robin coefficients `ε^{γ-1} |K b_c|_δ^{s-2}`.
    pub fn boundary_coefficients(&self, v: &[f64]) -> Vec<f64> {
        self.face_traces(v)
            .iter()
            .map(|b| self.boundary_scale * self.law.coefficient(b))
            .collect()
    }

    /// `∂/∂v` of `ε^{γ-1} Σ_c |c| Φ(b_c)`: the nonlinear slip force on the
    /// trace unknowns (zero elsewhere).
    pub fn boundary_gradient(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_velocity];
        for (cell, b) in self.cells.iter().zip(self.face_traces(v)) {
            let t = self.law.traction(&b) * (self.boundary_scale * self.area);
            let comps = [t[0], t[0], t[1], t[1]];
            for (slot, c) in cell.local.iter().zip(comps) {
                if let Some(f) = slot {
                    out[*f] += 0.5 * c;
                }
            }
        }
        out
    }

    /// Viscous operator applied to free unknowns.
    pub fn apply_viscous(&self, v: &[f64]) -> Vec<f64> {
        self.viscous.apply(v)
    }

    /// The assembled nonlinear velocity operator `𝒜(v)`: viscous plus slip.
    pub fn apply_operator(&self, v: &[f64]) -> Vec<f64> {
        let mut a = self.apply_viscous(v);
        for (x, y) in a.iter_mut().zip(self.boundary_gradient(v)) {
            *x += y;
        }
        a
    }

    /// Discrete `ν ‖D_ε v‖²`.
    pub fn viscous_energy(&self, v: &[f64]) -> f64 {
        self.apply_viscous(v).iter().zip(v).map(|(a, b)| a * b).sum()
    }

    /// `ε^{γ-1} Σ_c |c| T(b_c)·b_c`.
    pub fn boundary_work(&self, v: &[f64]) -> f64 {
        self.face_traces(v)
            .iter()
            .map(|b| self.boundary_scale * self.area * self.law.work_density(b))
            .sum()
    }

    /// `Σ |cv| f'·u'` over the momentum control volumes.
    pub fn forcing_work(&self, v: &[f64]) -> f64 {
        self.rhs.iter().zip(v).map(|(a, b)| a * b).sum()
    }

    /// Upwinded `(w·∇_ε) u` integrated over the momentum control volumes, for
    /// an advecting layout vector `w`.
    fn convection(&self, w: &[f64]) -> Triplets {
        let l = &self.dofs.layout;
        let eps = self.params.eps;
        let vol = self.grid.cell_volume(0, 0);
        let mut t = Triplets::new(self.n_velocity, self.n_velocity);
        let at = |idx: usize| w[idx];
        for row in 0..self.n_velocity {
            let kind = self.dofs.kind_of[row];
            if matches!(kind, DofKind::B1 | DofKind::B2) {
                continue;
            }
            let (i, j, k) = self.position(kind, self.dofs.layout_of[row]);
            let mut vel = [0.0; 3];
            match kind {
                DofKind::U1 => {
                    vel[0] = at(l.u1(i, j, k));
                    if l.two_d {
                        vel[1] = 0.25
                            * (at(l.u2(i - 1, j, k))
                                + at(l.u2(i - 1, j + 1, k))
                                + at(l.u2(i, j, k))
                                + at(l.u2(i, j + 1, k)));
                    }
                    vel[2] = 0.25
                        * (at(l.u3(i - 1, j, k))
                            + at(l.u3(i - 1, j, k + 1))
                            + at(l.u3(i, j, k))
                            + at(l.u3(i, j, k + 1)));
                }
                DofKind::U2 => {
                    vel[0] = 0.25
                        * (at(l.u1(i, j - 1, k))
                            + at(l.u1(i + 1, j - 1, k))
                            + at(l.u1(i, j, k))
                            + at(l.u1(i + 1, j, k)));
                    vel[1] = at(l.u2(i, j, k));
                    vel[2] = 0.25
                        * (at(l.u3(i, j - 1, k))
                            + at(l.u3(i, j - 1, k + 1))
                            + at(l.u3(i, j, k))
                            + at(l.u3(i, j, k + 1)));
                }
                DofKind::U3 => {
                    vel[0] = 0.25
                        * (at(l.u1(i, j, k - 1))
                            + at(l.u1(i + 1, j, k - 1))
                            + at(l.u1(i, j, k))
                            + at(l.u1(i + 1, j, k)));
                    if l.two_d {
                        vel[1] = 0.25
                            * (at(l.u2(i, j, k - 1))
                                + at(l.u2(i, j + 1, k - 1))
                                + at(l.u2(i, j, k))
                                + at(l.u2(i, j + 1, k)));
                    }
                    vel[2] = at(l.u3(i, j, k));
                }
                _ => unreachable!(),
            }
            let nb = self.neighbors(kind, i, j, k);
            let mut diag = 0.0;
            for axis in 0..3 {
                let a = if axis == 2 { vel[axis] / eps } else { vel[axis] };
                // both sides are pushed so that the pattern does not depend on
                // the upwind direction
                for (side, n) in nb[axis].iter().enumerate() {
                    let Some(n) = n else { continue };
                    let (d, free) = match *n {
                        Neighbor::Free(f, d) => (d, Some(f)),
                        Neighbor::Wall(d) => (d, None),
                    };
                    let upwind = (side == 0 && a > 0.0) || (side == 1 && a < 0.0);
                    let c = if upwind { vol * a.abs() / d } else { 0.0 };
                    diag += c;
                    if let Some(f) = free {
                        t.push(row, f, -c);
                    }
                }
            }
            t.push(row, row, diag);
        }
        t
    }

    /// Frozen saddle-point system. The pressure row of cell 0 is replaced by
    /// `p₀ = 0`. Entry order is fixed for a given `convection` flag.
    pub fn assemble(&self, alpha: &[f64], advecting: Option<&[f64]>) -> (Triplets, Vec<f64>) {
        let nv = self.n_velocity;
        let n = nv + self.n_pressure;
        let mut t = Triplets::new(n, n);
        let append = |t: &mut Triplets, src: &Triplets, r0: usize, c0: usize, skip_row: Option<usize>| {
            for ((&r, &c), &v) in src.rows.iter().zip(&src.cols).zip(&src.vals) {
                if Some(r) == skip_row {
                    continue;
                }
                t.push(r + r0, c + c0, v);
            }
        };
        append(&mut t, &self.viscous, 0, 0, None);
        if let Some(w) = advecting {
            append(&mut t, &self.convection(w), 0, 0, None);
        }
        let k2 = self.params.k * self.params.k;
        let p = [[0.5, 0.5, 0.0, 0.0], [0.0, 0.0, 0.5, 0.5]];
        for (cell, a) in self.cells.iter().zip(alpha) {
            let w = a * self.area;
            for (ia, ra) in cell.local.iter().enumerate() {
                let Some(ra) = ra else { continue };
                for (ib, rb) in cell.local.iter().enumerate() {
                    let Some(rb) = rb else { continue };
                    let mut q = 0.0;
                    for m in 0..2 {
                        for nn in 0..2 {
                            q += p[m][ia] * k2[(m, nn)] * p[nn][ib];
                        }
                    }
                    t.push(*ra, *rb, w * q);
                }
            }
        }
        append(&mut t, &self.gradient, 0, nv, None);
        append(&mut t, &self.divergence, nv, 0, Some(0));
        t.push(nv, nv, 1.0);
        let mut rhs = self.rhs.clone();
        rhs.resize(n, 0.0);
        (t, rhs)
    }
}

/// Anderson mixing for the fixed-point map `v -> G(v)`. The history is
/// dropped whenever the fixed-point residual grows.
struct Anderson {
    depth: usize,
    prev: Option<(Vec<f64>, Vec<f64>, f64)>,
    dg: VecDeque<Vec<f64>>,
    df: VecDeque<Vec<f64>>,
}

impl Anderson {
    fn new(depth: usize) -> Self {
        Self {
            depth,
            prev: None,
            dg: VecDeque::new(),
            df: VecDeque::new(),
        }
    }

    fn next(&mut self, v: &[f64], g: &[f64]) -> Vec<f64> {
        if self.depth == 0 {
            return g.to_vec();
        }
        let f: Vec<f64> = g.iter().zip(v).map(|(a, b)| a - b).collect();
        let fnorm = l2(&f);
        if let Some((gp, fp, fpn)) = self.prev.take() {
            if fnorm > fpn {
                self.dg.clear();
                self.df.clear();
            } else {
                self.dg.push_back(g.iter().zip(&gp).map(|(a, b)| a - b).collect());
                self.df.push_back(f.iter().zip(&fp).map(|(a, b)| a - b).collect());
                if self.df.len() > self.depth {
                    self.dg.pop_front();
                    self.df.pop_front();
                }
            }
        }
        self.prev = Some((g.to_vec(), f.clone(), fnorm));
        if self.df.is_empty() {
            return g.to_vec();
        }
        let m = self.df.len();
        let a = DMatrix::from_fn(f.len(), m, |r, c| self.df[c][r]);
        let Ok(coef) = a.svd(true, true).solve(&DVector::from_column_slice(&f), 1e-12) else {
            return g.to_vec();
        };
        let mut out = g.to_vec();
        for (c, dg) in self.dg.iter().enumerate() {
            for (o, d) in out.iter_mut().zip(dg) {
                *o -= coef[c] * d;
            }
        }
        out
    }
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Solves the finite-ε problem on a constant-gap grid.
pub fn solve_full(
    grid: Arc<Grid3>,
    forcing: &ForcingPreset,
    params: &FluidParams,
    options: &FullOptions,
) -> Result<FullOrderSolution> {
    let sys = FullOrderSystem::new(grid.clone(), forcing, params, options.stencil)?;
    let nv = sys.n_velocity;
    let linear = params.s == 2.0 && !options.convection;
    let mut v = vec![0.0; nv];
    let mut x = vec![0.0; nv + sys.n_pressure];
    let mut lu: Option<SparseLu> = None;
    let mut history = Vec::new();
    let mut iters = 0;
    let mut converged = false;
    let mut last = None;
    let mut mixer = Anderson::new(options.acceleration_depth);
    while iters < options.max_outer {
        iters += 1;
        let alpha = sys.boundary_coefficients(&v);
        let advecting = options.convection.then(|| sys.dofs.scatter(&v));
        let (t, rhs) = sys.assemble(&alpha, advecting.as_deref());
        if lu.is_none() {
            lu = Some(SparseLu::analyze(&t)?);
        }
        let solver = lu.as_mut().expect("analyzed above");
        solver.factorize(&t.vals).map_err(|e| {
            Error::Configuration(format!(
                "{e} (grid {}x{}x{}, eps {})",
                grid.nx(),
                grid.ny(),
                grid.nz,
                params.eps
            ))
        })?;
        x = solver.solve(&rhs)?;
        let diff: Vec<f64> = x[..nv].iter().zip(&v).map(|(a, b)| a - b).collect();
        let scale = l2(&x[..nv]);
        let upd = if scale > 0.0 { l2(&diff) / scale } else { l2(&diff) };
        history.push(upd);
        last = Some((t, rhs));
        if linear || upd < options.tolerance {
            v.copy_from_slice(&x[..nv]);
            converged = true;
            break;
        }
        v = mixer.next(&v, &x[..nv]);
    }
    if !converged {
        return Err(Error::NonConvergence {
            solver: "full-order outer loop",
            iterations: iters,
            residual: history.last().copied().unwrap_or(f64::NAN),
            history,
        });
    }
    let (t, rhs) = last.expect("at least one iteration");
    let ax = t.apply(&x);
    let res: Vec<f64> = ax.iter().zip(&rhs).map(|(a, b)| a - b).collect();
    let rn = l2(&rhs);
    let saddle_residual = if rn > 0.0 { l2(&res) / rn } else { l2(&res) };

    let velocity = Field::from_values(FieldKind::VelocityFull, grid.clone(), sys.dofs.scatter(&v))?;
    let mut pressure = Field::from_values(FieldKind::PressureFull, grid, x[nv..].to_vec())?;
    pressure.project_zero_mean()?;
    Ok(FullOrderSolution {
        velocity,
        pressure,
        eps: params.eps,
        outer_iters: iters,
        saddle_residual,
        boundary_coeff_field: sys.boundary_coefficients(&v),
        update_history: history,
        params: *params,
        forcing: forcing.clone(),
        options: *options,
    })
}

/// Discrete energy balance of a solved state.
pub fn boundary_term_energy(sol: &FullOrderSolution) -> Result<EnergyBalance> {
    let sys = FullOrderSystem::new(
        sol.velocity.grid.clone(),
        &sol.forcing,
        &sol.params,
        sol.options.stencil,
    )?;
    let v = sys.dofs.gather(&sol.velocity.values);
    let viscous = sys.viscous_energy(&v);
    let boundary = sys.boundary_work(&v);
    let convection = if sol.options.convection {
        let c = sys.convection(&sol.velocity.values).apply(&v);
        c.iter().zip(&v).map(|(a, b)| a * b).sum()
    } else {
        0.0
    };
    let work = sys.forcing_work(&v);
    let scale = work.abs().max(viscous + boundary);
    let mismatch = if scale > 0.0 {
        (viscous + boundary + convection - work).abs() / scale
    } else {
        0.0
    };
    Ok(EnergyBalance {
        viscous,
        boundary,
        convection,
        work,
        mismatch,
    })
}

/// `∂₃u'` at the bottom wall (unscaled) per bottom face, from the solver's
/// one-sided stencil applied to face-midpoint values.
pub fn bottom_shear(sol: &FullOrderSolution) -> Result<Vec<Vector2<f64>>> {
    let v = &sol.velocity;
    let g = &v.grid;
    let l = VelocityLayout::new(g);
    let dz = g.dz(0, 0);
    let st = sol.options.stencil;
    let mut out = Vec::with_capacity(g.reduced.n_cells());
    for j in 0..g.ny() {
        for i in 0..g.nx() {
            let b = v.bottom_trace(i, j)?;
            let c0 = v.cell_velocity(i, j, 0)?;
            let c1 = v.cell_velocity(i, j, 1)?;
            let d1 = st.derivative(b[0], c0[0], c1[0], dz);
            let d2 = if l.two_d {
                st.derivative(b[1], c0[1], c1[1], dz)
            } else {
                0.0
            };
            out.push(Vector2::new(d1, d2));
        }
    }
    Ok(out)
}
