//! Discrete velocity and pressure fields on Ω (staggered or cell-centered) and
//! their quadrature norms.

use std::sync::Arc;

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Grid3, ReducedDim};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FieldKind {
    /// Staggered velocity: normal components on faces plus the tangential
    /// bottom traces on Γ₀.
    VelocityFull,
    /// Cell-centered pressure on Ω.
    PressureFull,
    /// Cell-centered velocity on Ω (horizontal components, then vertical) plus
    /// the horizontal bottom traces per column.
    VelocityReduced,
    /// Column pressure on ω.
    PressureReduced,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Restriction {
    Omega,
    Gamma0,
}

/// Offsets of the staggered velocity blocks. Every block stores all
/// positions, including wall positions that solutions keep at zero.
///
/// - `u1` at x-faces `(i, j, k)`, `i ∈ 0..=nx`
/// - `u2` at y-faces `(i, j, k)`, `j ∈ 0..=ny` (empty in dimension 1)
/// - `u3` at z-faces `(i, j, k)`, `k ∈ 0..=nz`
/// - `b1` bottom trace of `u1` at `(i, j)`, `b2` bottom trace of `u2`
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VelocityLayout {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub two_d: bool,
    pub off_u2: usize,
    pub off_u3: usize,
    pub off_b1: usize,
    pub off_b2: usize,
    pub len: usize,
}

impl VelocityLayout {
    pub fn new(grid: &Grid3) -> Self {
        let (nx, ny, nz) = (grid.nx(), grid.ny(), grid.nz);
        let two_d = grid.dim() == ReducedDim::Two;
        let n_u1 = (nx + 1) * ny * nz;
        let n_u2 = if two_d { nx * (ny + 1) * nz } else { 0 };
        let n_u3 = nx * ny * (nz + 1);
        let n_b1 = (nx + 1) * ny;
        let n_b2 = if two_d { nx * (ny + 1) } else { 0 };
        let off_u2 = n_u1;
        let off_u3 = off_u2 + n_u2;
        let off_b1 = off_u3 + n_u3;
        let off_b2 = off_b1 + n_b1;
        Self {
            nx,
            ny,
            nz,
            two_d,
            off_u2,
            off_u3,
            off_b1,
            off_b2,
            len: off_b2 + n_b2,
        }
    }

    pub fn u1(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.ny + j) * (self.nx + 1) + i
    }

    pub fn u2(&self, i: usize, j: usize, k: usize) -> usize {
        self.off_u2 + (k * (self.ny + 1) + j) * self.nx + i
    }

    pub fn u3(&self, i: usize, j: usize, k: usize) -> usize {
        self.off_u3 + (k * self.ny + j) * self.nx + i
    }

    pub fn b1(&self, i: usize, j: usize) -> usize {
        self.off_b1 + j * (self.nx + 1) + i
    }

    pub fn b2(&self, i: usize, j: usize) -> usize {
        self.off_b2 + j * self.nx + i
    }
}

/// Layout of [`FieldKind::VelocityReduced`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReducedVelocityLayout {
    pub n_horizontal: usize,
    pub n_cells: usize,
    pub n_columns: usize,
    pub len: usize,
}

impl ReducedVelocityLayout {
    pub fn new(grid: &Grid3) -> Self {
        let n_horizontal = grid.dim().as_usize();
        let n_cells = grid.n_cells();
        let n_columns = grid.reduced.n_cells();
        Self {
            n_horizontal,
            n_cells,
            n_columns,
            len: (n_horizontal + 1) * n_cells + n_horizontal * n_columns,
        }
    }

    /// Component `c` (horizontal `0..n_horizontal`, vertical `n_horizontal`) at `cell`.
    pub fn value(&self, c: usize, cell: usize) -> usize {
        c * self.n_cells + cell
    }

    pub fn trace(&self, c: usize, column: usize) -> usize {
        (self.n_horizontal + 1) * self.n_cells + c * self.n_columns + column
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub kind: FieldKind,
    pub grid: Arc<Grid3>,
    pub values: Vec<f64>,
    /// Set once the pressure has been projected onto zero mean.
    pub zero_mean: bool,
}

pub fn field_len(kind: FieldKind, grid: &Grid3) -> usize {
    match kind {
        FieldKind::VelocityFull => VelocityLayout::new(grid).len,
        FieldKind::PressureFull => grid.n_cells(),
        FieldKind::VelocityReduced => ReducedVelocityLayout::new(grid).len,
        FieldKind::PressureReduced => grid.reduced.n_cells(),
    }
}

impl Field {
    pub fn zeros(kind: FieldKind, grid: Arc<Grid3>) -> Self {
        let n = field_len(kind, &grid);
        Self {
            kind,
            grid,
            values: vec![0.0; n],
            zero_mean: false,
        }
    }

    pub fn from_values(kind: FieldKind, grid: Arc<Grid3>, values: Vec<f64>) -> Result<Self> {
        let n = field_len(kind, &grid);
        if values.len() != n {
            return Err(Error::Usage(format!(
                "{kind:?} on this grid needs {n} values, got {}",
                values.len()
            )));
        }
        Ok(Self {
            kind,
            grid,
            values,
            zero_mean: false,
        })
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= c);
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Quadrature weights of the pressure samples (cell volumes in Ω).
    fn pressure_weights(&self) -> Result<Vec<f64>> {
        let g = &self.grid;
        let (nx, ny) = (g.nx(), g.ny());
        match self.kind {
            FieldKind::PressureFull => {
                let mut w = Vec::with_capacity(g.n_cells());
                for _k in 0..g.nz {
                    for j in 0..ny {
                        for i in 0..nx {
                            w.push(g.cell_volume(i, j));
                        }
                    }
                }
                Ok(w)
            }
            FieldKind::PressureReduced => Ok(g.heights.iter().map(|h| h * g.reduced.cell_area()).collect()),
            _ => Err(Error::Usage(
                "zero-mean projection applies to pressure fields only".into(),
            )),
        }
    }

    /// Volume-weighted mean of a pressure field.
    pub fn mean(&self) -> Result<f64> {
        let w = self.pressure_weights()?;
        let total: f64 = w.iter().sum();
        Ok(self.values.iter().zip(&w).map(|(v, w)| v * w).sum::<f64>() / total)
    }

    /// Subtracts the volume-weighted mean.
    pub fn project_zero_mean(&mut self) -> Result<()> {
        let m = self.mean()?;
        self.values.iter_mut().for_each(|v| *v -= m);
        self.zero_mean = true;
        Ok(())
    }

    /// Horizontal velocity at the bottom face midpoint of column `(i, j)`.
    pub fn bottom_trace(&self, i: usize, j: usize) -> Result<Vector2<f64>> {
        match self.kind {
            FieldKind::VelocityFull => {
                let l = VelocityLayout::new(&self.grid);
                let v = &self.values;
                let b1 = 0.5 * (v[l.b1(i, j)] + v[l.b1(i + 1, j)]);
                let b2 = if l.two_d {
                    0.5 * (v[l.b2(i, j)] + v[l.b2(i, j + 1)])
                } else {
                    0.0
                };
                Ok(Vector2::new(b1, b2))
            }
            FieldKind::VelocityReduced => {
                let l = ReducedVelocityLayout::new(&self.grid);
                let col = self.grid.reduced.cell_index(i, j);
                let b1 = self.values[l.trace(0, col)];
                let b2 = if l.n_horizontal == 2 {
                    self.values[l.trace(1, col)]
                } else {
                    0.0
                };
                Ok(Vector2::new(b1, b2))
            }
            _ => Err(Error::Usage("bottom traces exist for velocity fields only".into())),
        }
    }

    /// Velocity vector (horizontal, horizontal, vertical) at the center of cell `(i, j, k)`.
    pub fn cell_velocity(&self, i: usize, j: usize, k: usize) -> Result<[f64; 3]> {
        match self.kind {
            FieldKind::VelocityFull => {
                let l = VelocityLayout::new(&self.grid);
                let v = &self.values;
                let a = 0.5 * (v[l.u1(i, j, k)] + v[l.u1(i + 1, j, k)]);
                let b = if l.two_d {
                    0.5 * (v[l.u2(i, j, k)] + v[l.u2(i, j + 1, k)])
                } else {
                    0.0
                };
                let c = 0.5 * (v[l.u3(i, j, k)] + v[l.u3(i, j, k + 1)]);
                Ok([a, b, c])
            }
            FieldKind::VelocityReduced => {
                let l = ReducedVelocityLayout::new(&self.grid);
                let cell = self.grid.cell_index(i, j, k);
                let a = self.values[l.value(0, cell)];
                let b = if l.n_horizontal == 2 {
                    self.values[l.value(1, cell)]
                } else {
                    0.0
                };
                let c = self.values[l.value(l.n_horizontal, cell)];
                Ok([a, b, c])
            }
            _ => Err(Error::Usage("cell velocity exists for velocity fields only".into())),
        }
    }

    /// Resamples a velocity field at cell centers (and bottom-face midpoints),
    /// multiplied by `scale`.
    pub fn to_cell_centered(&self, scale: f64) -> Result<Field> {
        let g = &self.grid;
        let mut out = Field::zeros(FieldKind::VelocityReduced, g.clone());
        let l = ReducedVelocityLayout::new(g);
        for k in 0..g.nz {
            for j in 0..g.ny() {
                for i in 0..g.nx() {
                    let u = self.cell_velocity(i, j, k)?;
                    let cell = g.cell_index(i, j, k);
                    for (c, uc) in u.iter().take(l.n_horizontal).enumerate() {
                        out.values[l.value(c, cell)] = scale * uc;
                    }
                    out.values[l.value(l.n_horizontal, cell)] = scale * u[2];
                }
            }
        }
        for j in 0..g.ny() {
            for i in 0..g.nx() {
                let b = self.bottom_trace(i, j)?;
                let col = g.reduced.cell_index(i, j);
                for c in 0..l.n_horizontal {
                    out.values[l.trace(c, col)] = scale * b[c];
                }
            }
        }
        Ok(out)
    }
}

fn lp_accumulate(sum: f64, magnitude: f64, p: f64, weight: f64) -> f64 {
    if p == 2.0 {
        sum + magnitude * magnitude * weight
    } else {
        sum + magnitude.powf(p) * weight
    }
}

fn lp_finish(sum: f64, p: f64) -> f64 {
    if p == 2.0 {
        sum.sqrt()
    } else {
        sum.powf(1.0 / p)
    }
}

/// Midpoint-rule Lᵖ norm of a field over Ω or over the bottom wall Γ₀
/// (measure `dσ = dz'`). Vector fields use the Euclidean magnitude at each
/// cell center or bottom-face midpoint.
pub fn norms(f: &Field, p: f64, restriction: Restriction) -> Result<f64> {
    norm_with_tensor(f, p, restriction, None)
}

/// Lᵖ norm of `K u'` on Γ₀ (or of the field on Ω when `k` is `None`).
pub fn norm_with_tensor(f: &Field, p: f64, restriction: Restriction, k: Option<&Matrix2<f64>>) -> Result<f64> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::Usage(format!("norm exponent must be >= 1, got {p}")));
    }
    let g = &f.grid;
    let (nx, ny, nz) = (g.nx(), g.ny(), g.nz);
    let area = g.reduced.cell_area();
    let mut sum = 0.0;
    match (f.kind, restriction) {
        (FieldKind::PressureFull, Restriction::Omega) => {
            for k in 0..nz {
                for j in 0..ny {
                    for i in 0..nx {
                        let v = f.values[g.cell_index(i, j, k)].abs();
                        sum = lp_accumulate(sum, v, p, g.cell_volume(i, j));
                    }
                }
            }
        }
        (FieldKind::PressureReduced, Restriction::Omega) => {
            for (v, h) in f.values.iter().zip(&g.heights) {
                sum = lp_accumulate(sum, v.abs(), p, h * area);
            }
        }
        (FieldKind::VelocityFull | FieldKind::VelocityReduced, Restriction::Omega) => {
            if k.is_some() {
                return Err(Error::Usage("tensor-weighted norms are defined on Γ₀ only".into()));
            }
            for kk in 0..nz {
                for j in 0..ny {
                    for i in 0..nx {
                        let u = f.cell_velocity(i, j, kk)?;
                        let m = (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt();
                        sum = lp_accumulate(sum, m, p, g.cell_volume(i, j));
                    }
                }
            }
        }
        (FieldKind::VelocityFull | FieldKind::VelocityReduced, Restriction::Gamma0) => {
            for j in 0..ny {
                for i in 0..nx {
                    let mut b = f.bottom_trace(i, j)?;
                    if let Some(k) = k {
                        b = k * b;
                    }
                    sum = lp_accumulate(sum, b.norm(), p, area);
                }
            }
        }
        (kind, Restriction::Gamma0) => {
            return Err(Error::Usage(format!("{kind:?} has no trace on Γ₀")));
        }
    }
    Ok(lp_finish(sum, p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ReducedGrid;

    fn unit_grid(dim: ReducedDim, n: usize, nz: usize) -> Arc<Grid3> {
        Grid3::flat(ReducedGrid::unit(dim, n).unwrap(), 1.0, nz).unwrap()
    }

    #[test]
    fn constant_pressure_norm() {
        let g = unit_grid(ReducedDim::Two, 4, 3);
        let mut f = Field::zeros(FieldKind::PressureFull, g);
        f.values.iter_mut().for_each(|v| *v = 1.0);
        assert!((norms(&f, 2.0, Restriction::Omega).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn constant_trace_norm() {
        let g = unit_grid(ReducedDim::One, 8, 4);
        let mut f = Field::zeros(FieldKind::VelocityFull, g.clone());
        let l = VelocityLayout::new(&g);
        for i in 0..=8 {
            f.values[l.b1(i, 0)] = 2.0;
        }
        assert!((norms(&f, 2.0, Restriction::Gamma0).unwrap() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn linear_profile_norm_converges_second_order() {
        // exact ∫ z² over the unit cube is 1/3; the midpoint rule misses dz²/12
        let mut errs = Vec::new();
        for nz in [8, 16, 32] {
            let g = unit_grid(ReducedDim::Two, 3, nz);
            let mut f = Field::zeros(FieldKind::PressureFull, g.clone());
            for k in 0..nz {
                for j in 0..3 {
                    for i in 0..3 {
                        f.values[g.cell_index(i, j, k)] = (k as f64 + 0.5) / nz as f64;
                    }
                }
            }
            let n = norms(&f, 2.0, Restriction::Omega).unwrap();
            errs.push((n - (1.0f64 / 3.0).sqrt()).abs());
        }
        assert!(errs[0] < 1e-2);
        assert!(errs[0] / errs[1] > 3.9 && errs[1] / errs[2] > 3.9);
    }

    #[test]
    fn pressure_has_no_trace() {
        let g = unit_grid(ReducedDim::One, 4, 4);
        let f = Field::zeros(FieldKind::PressureFull, g);
        assert!(matches!(norms(&f, 2.0, Restriction::Gamma0), Err(Error::Usage(_))));
    }

    #[test]
    fn zero_mean_projection() {
        let g = unit_grid(ReducedDim::Two, 5, 3);
        let mut f = Field::zeros(FieldKind::PressureFull, g);
        for (n, v) in f.values.iter_mut().enumerate() {
            *v = (n as f64 * 0.37).sin() + 3.0;
        }
        f.project_zero_mean().unwrap();
        let first = f.values.clone();
        assert!(f.mean().unwrap().abs() < 1e-12 * f.max_abs());
        f.project_zero_mean().unwrap();
        for (a, b) in first.iter().zip(&f.values) {
            assert!((a - b).abs() <= 1e-14 * f.max_abs());
        }
        assert!(f.zero_mean);
    }
}
