//! The ε-scaled operators `D_ε`, `div_ε` and `∇_ε` on the staggered grid, as
//! matrix-free maps and as assembled matrices over the free velocity unknowns.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::field::{Field, FieldKind, VelocityLayout};
use crate::geometry::Grid3;
use crate::sparse::Triplets;

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(Error::domain("eps", format!("thickness must be positive, got {eps}")))
    }
}

fn expect_kind(f: &Field, kind: FieldKind) -> Result<()> {
    if f.kind == kind {
        Ok(())
    } else {
        Err(Error::Usage(format!("expected a {kind:?} field, got {:?}", f.kind)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DofKind {
    U1,
    U2,
    U3,
    B1,
    B2,
}

/// Numbering of the velocity unknowns that are not fixed by a wall condition:
/// interior faces plus the interior tangential bottom traces.
#[derive(Debug, Clone)]
pub struct VelocityDofs {
    pub layout: VelocityLayout,
    /// Layout index to free index (`usize::MAX` for wall positions).
    pub free_of: Vec<usize>,
    /// Free index to layout index.
    pub layout_of: Vec<usize>,
    pub kind_of: Vec<DofKind>,
}

impl VelocityDofs {
    pub fn new(grid: &Grid3) -> Self {
        let l = VelocityLayout::new(grid);
        let (nx, ny, nz) = (l.nx, l.ny, l.nz);
        let mut free_of = vec![usize::MAX; l.len];
        let mut layout_of = Vec::new();
        let mut kind_of = Vec::new();
        let mut add = |idx: usize, kind: DofKind| {
            free_of[idx] = layout_of.len();
            layout_of.push(idx);
            kind_of.push(kind);
        };
        for k in 0..nz {
            for j in 0..ny {
                for i in 1..nx {
                    add(l.u1(i, j, k), DofKind::U1);
                }
            }
        }
        if l.two_d {
            for k in 0..nz {
                for j in 1..ny {
                    for i in 0..nx {
                        add(l.u2(i, j, k), DofKind::U2);
                    }
                }
            }
        }
        for k in 1..nz {
            for j in 0..ny {
                for i in 0..nx {
                    add(l.u3(i, j, k), DofKind::U3);
                }
            }
        }
        for j in 0..ny {
            for i in 1..nx {
                add(l.b1(i, j), DofKind::B1);
            }
        }
        if l.two_d {
            for j in 1..ny {
                for i in 0..nx {
                    add(l.b2(i, j), DofKind::B2);
                }
            }
        }
        Self {
            layout: l,
            free_of,
            layout_of,
            kind_of,
        }
    }

    pub fn n_free(&self) -> usize {
        self.layout_of.len()
    }

    pub fn free(&self, layout_index: usize) -> Option<usize> {
        match self.free_of[layout_index] {
            usize::MAX => None,
            f => Some(f),
        }
    }

    /// Gathers the free unknowns of a layout vector.
    pub fn gather(&self, values: &[f64]) -> Vec<f64> {
        self.layout_of.iter().map(|&i| values[i]).collect()
    }

    /// Scatters free unknowns into a zero-initialized layout vector.
    pub fn scatter(&self, free: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.layout.len];
        for (&i, &v) in self.layout_of.iter().zip(free) {
            out[i] = v;
        }
        out
    }
}

/// Per-face pressure-gradient weights: each staggered face links the two
/// adjacent cells with the face area (`d ∫ q div φ` in integrated form).
fn face_links(grid: &Grid3, eps: f64, mut visit: impl FnMut(usize, usize, usize, f64)) {
    let l = VelocityLayout::new(grid);
    let (nx, ny, nz) = (l.nx, l.ny, l.nz);
    let dx = grid.reduced.dx();
    let dy = grid.reduced.dy();
    let dz = grid.dz(0, 0);
    let ax = dy * dz;
    let ay = dx * dz;
    let az = dx * dy / eps;
    for k in 0..nz {
        for j in 0..ny {
            for i in 1..nx {
                visit(
                    l.u1(i, j, k),
                    grid.cell_index(i - 1, j, k),
                    grid.cell_index(i, j, k),
                    ax,
                );
            }
        }
    }
    if l.two_d {
        for k in 0..nz {
            for j in 1..ny {
                for i in 0..nx {
                    visit(
                        l.u2(i, j, k),
                        grid.cell_index(i, j - 1, k),
                        grid.cell_index(i, j, k),
                        ay,
                    );
                }
            }
        }
    }
    for k in 1..nz {
        for j in 0..ny {
            for i in 0..nx {
                visit(
                    l.u3(i, j, k),
                    grid.cell_index(i, j, k - 1),
                    grid.cell_index(i, j, k),
                    az,
                );
            }
        }
    }
}

/// Integrated divergence: row `c` is `|cell| div_ε v` over the free velocity
/// unknowns.
pub fn divergence_matrix(grid: &Grid3, dofs: &VelocityDofs, eps: f64) -> Result<Triplets> {
    check_eps(eps)?;
    let mut t = Triplets::new(grid.n_cells(), dofs.n_free());
    face_links(grid, eps, |face, lower, upper, w| {
        let col = dofs.free_of[face];
        t.push(lower, col, w);
        t.push(upper, col, -w);
    });
    Ok(t)
}

/// Integrated gradient: row of a free face is `|cell| (∇_ε q)·e` at that face.
pub fn gradient_matrix(grid: &Grid3, dofs: &VelocityDofs, eps: f64) -> Result<Triplets> {
    check_eps(eps)?;
    let mut t = Triplets::new(dofs.n_free(), grid.n_cells());
    face_links(grid, eps, |face, lower, upper, w| {
        let row = dofs.free_of[face];
        t.push(row, upper, w);
        t.push(row, lower, -w);
    });
    Ok(t)
}

/// Pointwise `div_ε v` per pressure cell.
pub fn apply_diveps(v: &Field, eps: f64) -> Result<Field> {
    check_eps(eps)?;
    expect_kind(v, FieldKind::VelocityFull)?;
    let g = &v.grid;
    let l = VelocityLayout::new(g);
    let dx = g.reduced.dx();
    let dy = g.reduced.dy();
    let dz = g.dz(0, 0);
    let x = &v.values;
    let mut out = Field::zeros(FieldKind::PressureFull, g.clone());
    for k in 0..l.nz {
        for j in 0..l.ny {
            for i in 0..l.nx {
                let mut d = (x[l.u1(i + 1, j, k)] - x[l.u1(i, j, k)]) / dx;
                if l.two_d {
                    d += (x[l.u2(i, j + 1, k)] - x[l.u2(i, j, k)]) / dy;
                }
                d += (x[l.u3(i, j, k + 1)] - x[l.u3(i, j, k)]) / (eps * dz);
                out.values[g.cell_index(i, j, k)] = d;
            }
        }
    }
    Ok(out)
}

/// Pointwise `∇_ε q` on the interior faces (zero on walls and traces).
pub fn apply_grad_eps(q: &Field, eps: f64) -> Result<Field> {
    check_eps(eps)?;
    expect_kind(q, FieldKind::PressureFull)?;
    let g = &q.grid;
    let mut out = Field::zeros(FieldKind::VelocityFull, g.clone());
    let vol = g.cell_volume(0, 0);
    face_links(g, eps, |face, lower, upper, w| {
        out.values[face] = w * (q.values[upper] - q.values[lower]) / vol;
    });
    Ok(out)
}

/// Cell-centered 3×3 tensor field, `values[cell][row][col]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorField {
    pub grid: Arc<Grid3>,
    pub values: Vec<[[f64; 3]; 3]>,
}

impl TensorField {
    /// Midpoint-rule L² norm (Frobenius pointwise).
    pub fn l2_norm(&self) -> f64 {
        let g = &self.grid;
        let mut sum = 0.0;
        for k in 0..g.nz {
            for j in 0..g.ny() {
                for i in 0..g.nx() {
                    let t = &self.values[g.cell_index(i, j, k)];
                    let f: f64 = t.iter().flatten().map(|v| v * v).sum();
                    sum += f * g.cell_volume(i, j);
                }
            }
        }
        sum.sqrt()
    }
}

/// Derivative at 0 of the quadratic through `(-h1, fm)`, `(0, f0)`, `(h2, fp)`.
fn three_point(fm: f64, f0: f64, fp: f64, h1: f64, h2: f64) -> f64 {
    -h2 / (h1 * (h1 + h2)) * fm + (h2 - h1) / (h1 * h2) * f0 + h1 / (h2 * (h1 + h2)) * fp
}

/// Neighbor value and distance along an axis: an interior neighbor at one
/// spacing, or the wall value at half a spacing.
fn neighbor(interior: Option<f64>, wall: f64, h: f64) -> (f64, f64) {
    match interior {
        Some(v) => (v, h),
        None => (wall, 0.5 * h),
    }
}

/// `D_ε v` at cell centers: `(D_ε v)_{ij} = ∂_j v_i` for horizontal `j` and
/// `ε⁻¹ ∂₃ v_i` in the third column.
///
/// Diagonal entries are the exact staggered differences; off-diagonal entries
/// use three-point differences of cell-centered values, with the wall values
/// (zero, or the bottom trace for horizontal components) half a cell away.
pub fn apply_deps(v: &Field, eps: f64) -> Result<TensorField> {
    check_eps(eps)?;
    expect_kind(v, FieldKind::VelocityFull)?;
    let g = v.grid.clone();
    let l = VelocityLayout::new(&g);
    let (nx, ny, nz) = (l.nx, l.ny, l.nz);
    let dx = g.reduced.dx();
    let dy = g.reduced.dy();
    let dz = g.dz(0, 0);
    let x = &v.values;

    let n = g.n_cells();
    let mut centered = vec![[0.0; 3]; n];
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                centered[g.cell_index(i, j, k)] = v.cell_velocity(i, j, k)?;
            }
        }
    }
    let mut traces = vec![[0.0; 3]; g.reduced.n_cells()];
    for j in 0..ny {
        for i in 0..nx {
            let b = v.bottom_trace(i, j)?;
            traces[g.reduced.cell_index(i, j)] = [b[0], b[1], 0.0];
        }
    }

    let mut out = vec![[[0.0; 3]; 3]; n];
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let cell = g.cell_index(i, j, k);
                let u0 = centered[cell];
                let t = &mut out[cell];
                for c in 0..3 {
                    // x direction
                    let (fm, h1) = neighbor((i > 0).then(|| centered[g.cell_index(i - 1, j, k)][c]), 0.0, dx);
                    let (fp, h2) = neighbor((i + 1 < nx).then(|| centered[g.cell_index(i + 1, j, k)][c]), 0.0, dx);
                    t[c][0] = three_point(fm, u0[c], fp, h1, h2);
                    // y direction
                    if l.two_d {
                        let (fm, h1) = neighbor((j > 0).then(|| centered[g.cell_index(i, j - 1, k)][c]), 0.0, dy);
                        let (fp, h2) = neighbor((j + 1 < ny).then(|| centered[g.cell_index(i, j + 1, k)][c]), 0.0, dy);
                        t[c][1] = three_point(fm, u0[c], fp, h1, h2);
                    }
                    // z direction
                    let bottom = traces[g.reduced.cell_index(i, j)][c];
                    let (fm, h1) = neighbor((k > 0).then(|| centered[g.cell_index(i, j, k - 1)][c]), bottom, dz);
                    let (fp, h2) = neighbor((k + 1 < nz).then(|| centered[g.cell_index(i, j, k + 1)][c]), 0.0, dz);
                    t[c][2] = three_point(fm, u0[c], fp, h1, h2) / eps;
                }
                t[0][0] = (x[l.u1(i + 1, j, k)] - x[l.u1(i, j, k)]) / dx;
                t[1][1] = if l.two_d {
                    (x[l.u2(i, j + 1, k)] - x[l.u2(i, j, k)]) / dy
                } else {
                    0.0
                };
                t[2][2] = (x[l.u3(i, j, k + 1)] - x[l.u3(i, j, k)]) / (eps * dz);
            }
        }
    }
    Ok(TensorField { grid: g, values: out })
}
