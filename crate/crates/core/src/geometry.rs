//! Reduced domain ω, gap function h, forcing presets and the rescaled grid on
//! Ω = {z' ∈ ω, 0 < z₃ < h(z')}.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dimension of the reduced domain ω.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReducedDim {
    /// ω is an interval; the flow is a 2D cross-section.
    One,
    /// ω is a rectangle; the flow is fully 3D.
    Two,
}

impl ReducedDim {
    pub fn from_usize(d: usize) -> Result<Self> {
        match d {
            1 => Ok(ReducedDim::One),
            2 => Ok(ReducedDim::Two),
            _ => Err(Error::domain(
                "dim",
                format!("reduced dimension must be 1 or 2, got {d}"),
            )),
        }
    }

    pub fn as_usize(self) -> usize {
        match self {
            ReducedDim::One => 1,
            ReducedDim::Two => 2,
        }
    }
}

/// Uniform cell-centered grid on an interval or axis-aligned rectangle.
///
/// In reduced dimension 1 the second axis is a single dummy cell of unit
/// width, so areas reduce to lengths.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedGrid {
    pub dim: ReducedDim,
    pub origin: [f64; 2],
    pub extent: [f64; 2],
    pub nx: usize,
    pub ny: usize,
}

impl ReducedGrid {
    pub fn interval(x0: f64, length: f64, nx: usize) -> Result<Self> {
        Self::new(ReducedDim::One, [x0, 0.0], [length, 1.0], [nx, 1])
    }

    pub fn rectangle(origin: [f64; 2], extent: [f64; 2], n: [usize; 2]) -> Result<Self> {
        Self::new(ReducedDim::Two, origin, extent, n)
    }

    pub fn unit(dim: ReducedDim, n: usize) -> Result<Self> {
        match dim {
            ReducedDim::One => Self::interval(0.0, 1.0, n),
            ReducedDim::Two => Self::rectangle([0.0, 0.0], [1.0, 1.0], [n, n]),
        }
    }

    pub fn new(dim: ReducedDim, origin: [f64; 2], extent: [f64; 2], n: [usize; 2]) -> Result<Self> {
        let (extent, n) = match dim {
            ReducedDim::One => ([extent[0], 1.0], [n[0], 1]),
            ReducedDim::Two => (extent, n),
        };
        for a in 0..dim.as_usize() {
            if !(extent[a] > 0.0 && extent[a].is_finite()) {
                return Err(Error::domain("extent", "domain extents must be positive"));
            }
            if n[a] < 2 {
                return Err(Error::domain("n_cells", "at least two cells per axis are required"));
            }
        }
        Ok(Self {
            dim,
            origin,
            extent,
            nx: n[0],
            ny: n[1],
        })
    }

    pub fn dx(&self) -> f64 {
        self.extent[0] / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        self.extent[1] / self.ny as f64
    }

    pub fn cell_area(&self) -> f64 {
        self.dx() * self.dy()
    }

    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn cell_index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    /// x coordinate of node (face) `i`.
    pub fn x_node(&self, i: usize) -> f64 {
        self.origin[0] + i as f64 * self.dx()
    }

    pub fn x_center(&self, i: usize) -> f64 {
        self.origin[0] + (i as f64 + 0.5) * self.dx()
    }

    pub fn y_node(&self, j: usize) -> f64 {
        match self.dim {
            ReducedDim::One => self.origin[1],
            ReducedDim::Two => self.origin[1] + j as f64 * self.dy(),
        }
    }

    /// y coordinate of a cell center; in reduced dimension 1 the line sits at
    /// the dummy origin.
    pub fn y_center(&self, j: usize) -> f64 {
        match self.dim {
            ReducedDim::One => self.origin[1],
            ReducedDim::Two => self.origin[1] + (j as f64 + 0.5) * self.dy(),
        }
    }

    pub fn center(&self, i: usize, j: usize) -> [f64; 2] {
        [self.x_center(i), self.y_center(j)]
    }

    /// Normalized coordinates in [0, 1]² (second one is 1/2 in dimension 1).
    pub fn normalized(&self, z: [f64; 2]) -> [f64; 2] {
        let xi = (z[0] - self.origin[0]) / self.extent[0];
        let eta = match self.dim {
            ReducedDim::One => 0.5,
            ReducedDim::Two => (z[1] - self.origin[1]) / self.extent[1],
        };
        [xi, eta]
    }

    pub fn area(&self) -> f64 {
        self.extent[0] * self.extent[1]
    }
}

/// Closed-form gap functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", content = "coefficients", rename_all = "snake_case")]
pub enum HeightPreset {
    /// `h = c`.
    Constant(f64),
    /// `h = a0 + a1 z1 + a2 z2`.
    Affine([f64; 3]),
    /// `h = base + amplitude * sin(π ξ) sin(π η)` in normalized coordinates.
    Bump { base: f64, amplitude: f64 },
}

impl HeightPreset {
    /// Builds a preset from a string key and coefficient list.
    pub fn from_key(key: &str, coefficients: &[f64]) -> Result<Self> {
        let need = |n: usize| -> Result<()> {
            if coefficients.len() != n {
                return Err(Error::domain(
                    "height.coefficients",
                    format!("preset `{key}` takes {n} coefficients, got {}", coefficients.len()),
                ));
            }
            Ok(())
        };
        match key {
            "constant" => {
                need(1)?;
                Ok(HeightPreset::Constant(coefficients[0]))
            }
            "affine" => {
                need(3)?;
                Ok(HeightPreset::Affine([
                    coefficients[0],
                    coefficients[1],
                    coefficients[2],
                ]))
            }
            "bump" => {
                need(2)?;
                Ok(HeightPreset::Bump {
                    base: coefficients[0],
                    amplitude: coefficients[1],
                })
            }
            _ => Err(Error::domain("height.preset", format!("unknown height preset `{key}`"))),
        }
    }

    pub fn eval(&self, grid: &ReducedGrid, z: [f64; 2]) -> f64 {
        match *self {
            HeightPreset::Constant(c) => c,
            HeightPreset::Affine([a0, a1, a2]) => {
                let z2 = if grid.dim == ReducedDim::One { 0.0 } else { z[1] };
                a0 + a1 * z[0] + a2 * z2
            }
            HeightPreset::Bump { base, amplitude } => {
                let [xi, eta] = grid.normalized(z);
                let sy = if grid.dim == ReducedDim::One {
                    1.0
                } else {
                    (PI * eta).sin()
                };
                base + amplitude * (PI * xi).sin() * sy
            }
        }
    }
}

/// Cell- and face-sampled gap function over the reduced grid.
#[derive(Debug, Clone, PartialEq)]
pub struct HeightField {
    pub grid: ReducedGrid,
    /// Cell-centered samples, `j * nx + i`.
    pub h_values: Vec<f64>,
    /// x-face samples, `j * (nx + 1) + i`.
    pub h_faces_x: Vec<f64>,
    /// y-face samples, `j * nx + i` with `j` in `0..=ny` (empty in dimension 1).
    pub h_faces_y: Vec<f64>,
}

impl HeightField {
    pub fn from_preset(grid: ReducedGrid, preset: &HeightPreset) -> Result<Self> {
        let mut h_values = Vec::with_capacity(grid.n_cells());
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                h_values.push(preset.eval(&grid, grid.center(i, j)));
            }
        }
        Self::from_cells(grid, h_values)
    }

    pub fn constant(grid: ReducedGrid, h: f64) -> Result<Self> {
        Self::from_preset(grid, &HeightPreset::Constant(h))
    }

    /// Face values are the mean of the two adjacent cells; boundary faces copy
    /// the adjacent cell.
    pub fn from_cells(grid: ReducedGrid, h_values: Vec<f64>) -> Result<Self> {
        if h_values.len() != grid.n_cells() {
            return Err(Error::Usage("height samples do not match the grid".into()));
        }
        let min = h_values.iter().cloned().fold(f64::INFINITY, f64::min);
        if min.is_nan() || min <= 0.0 || h_values.iter().any(|h| !h.is_finite()) {
            return Err(Error::domain(
                "height",
                format!("gap must be positive, minimum sample {min}"),
            ));
        }
        let (nx, ny) = (grid.nx, grid.ny);
        let cell = |i: usize, j: usize| h_values[j * nx + i];
        let mut h_faces_x = Vec::with_capacity((nx + 1) * ny);
        for j in 0..ny {
            for i in 0..=nx {
                h_faces_x.push(match i {
                    0 => cell(0, j),
                    i if i == nx => cell(nx - 1, j),
                    i => 0.5 * (cell(i - 1, j) + cell(i, j)),
                });
            }
        }
        let mut h_faces_y = Vec::new();
        if grid.dim == ReducedDim::Two {
            h_faces_y.reserve(nx * (ny + 1));
            for j in 0..=ny {
                for i in 0..nx {
                    h_faces_y.push(match j {
                        0 => cell(i, 0),
                        j if j == ny => cell(i, ny - 1),
                        j => 0.5 * (cell(i, j - 1) + cell(i, j)),
                    });
                }
            }
        }
        Ok(Self {
            grid,
            h_values,
            h_faces_x,
            h_faces_y,
        })
    }

    pub fn h_cell(&self, i: usize, j: usize) -> f64 {
        self.h_values[j * self.grid.nx + i]
    }

    pub fn h_face_x(&self, i: usize, j: usize) -> f64 {
        self.h_faces_x[j * (self.grid.nx + 1) + i]
    }

    pub fn h_face_y(&self, i: usize, j: usize) -> f64 {
        self.h_faces_y[j * self.grid.nx + i]
    }

    pub fn max(&self) -> f64 {
        self.h_values.iter().cloned().fold(0.0, f64::max)
    }
}

/// Closed-form horizontal forcings `f'(z')`, independent of `z₃`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", content = "coefficients", rename_all = "snake_case")]
pub enum ForcingPreset {
    Zero,
    /// `f' = (c1, c2)`.
    Constant([f64; 2]),
    /// `f'_1 = a0 + a1 z1 + a2 z2`, `f'_2 = b0 + b1 z1 + b2 z2`.
    Affine([f64; 6]),
    /// `f' = ∇g` with `g = amplitude * sin(π ξ) sin(π η)` in normalized coordinates.
    TrigGradient(f64),
    /// `f' = amplitude * (-(z2 - c2), z1 - c1)` about the domain center `c`.
    Rotational(f64),
}

impl ForcingPreset {
    pub fn from_key(key: &str, coefficients: &[f64]) -> Result<Self> {
        let need = |n: usize| -> Result<()> {
            if coefficients.len() != n {
                return Err(Error::domain(
                    "forcing.coefficients",
                    format!("preset `{key}` takes {n} coefficients, got {}", coefficients.len()),
                ));
            }
            Ok(())
        };
        match key {
            "zero" => {
                need(0)?;
                Ok(ForcingPreset::Zero)
            }
            "constant" => {
                need(2)?;
                Ok(ForcingPreset::Constant([coefficients[0], coefficients[1]]))
            }
            "affine" => {
                need(6)?;
                let mut c = [0.0; 6];
                c.copy_from_slice(coefficients);
                Ok(ForcingPreset::Affine(c))
            }
            "trig_gradient" => {
                need(1)?;
                Ok(ForcingPreset::TrigGradient(coefficients[0]))
            }
            "rotational" => {
                need(1)?;
                Ok(ForcingPreset::Rotational(coefficients[0]))
            }
            _ => Err(Error::domain(
                "forcing.preset",
                format!("unknown forcing preset `{key}`"),
            )),
        }
    }

    /// Evaluates `f'(z')`. The second component is dropped in dimension 1.
    pub fn eval(&self, grid: &ReducedGrid, z: [f64; 2]) -> Vector2<f64> {
        let two_d = grid.dim == ReducedDim::Two;
        let f = match *self {
            ForcingPreset::Zero => Vector2::zeros(),
            ForcingPreset::Constant([c1, c2]) => Vector2::new(c1, c2),
            ForcingPreset::Affine([a0, a1, a2, b0, b1, b2]) => {
                let z2 = if two_d { z[1] } else { 0.0 };
                Vector2::new(a0 + a1 * z[0] + a2 * z2, b0 + b1 * z[0] + b2 * z2)
            }
            ForcingPreset::TrigGradient(a) => {
                let [xi, eta] = grid.normalized(z);
                if two_d {
                    Vector2::new(
                        a * PI / grid.extent[0] * (PI * xi).cos() * (PI * eta).sin(),
                        a * PI / grid.extent[1] * (PI * xi).sin() * (PI * eta).cos(),
                    )
                } else {
                    Vector2::new(a * PI / grid.extent[0] * (PI * xi).cos(), 0.0)
                }
            }
            ForcingPreset::Rotational(a) => {
                let c1 = grid.origin[0] + 0.5 * grid.extent[0];
                let c2 = grid.origin[1] + 0.5 * grid.extent[1];
                let z2 = if two_d { z[1] } else { c2 };
                Vector2::new(-a * (z2 - c2), a * (z[0] - c1))
            }
        };
        if two_d {
            f
        } else {
            Vector2::new(f[0], 0.0)
        }
    }

    /// The potential `g` when the forcing is a gradient (used by tests).
    pub fn potential(&self, grid: &ReducedGrid, z: [f64; 2]) -> Option<f64> {
        match *self {
            ForcingPreset::Zero => Some(0.0),
            ForcingPreset::TrigGradient(a) => {
                let [xi, eta] = grid.normalized(z);
                let sy = if grid.dim == ReducedDim::Two {
                    (PI * eta).sin()
                } else {
                    1.0
                };
                Some(a * (PI * xi).sin() * sy)
            }
            _ => None,
        }
    }

    /// Largest sampled magnitude over the cell centers.
    pub fn max_magnitude(&self, grid: &ReducedGrid) -> f64 {
        let mut m: f64 = 0.0;
        for j in 0..grid.ny {
            for i in 0..=grid.nx {
                m = m.max(self.eval(grid, [grid.x_node(i), grid.y_center(j)]).norm());
            }
        }
        if grid.dim == ReducedDim::Two {
            for j in 0..=grid.ny {
                for i in 0..grid.nx {
                    m = m.max(self.eval(grid, [grid.x_center(i), grid.y_node(j)]).norm());
                }
            }
        }
        m
    }
}

/// The rescaled domain Ω discretized as reduced grid × `nz` vertical cells per
/// column, each column spanning `(0, h)` with spacing `h / nz`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid3 {
    pub reduced: ReducedGrid,
    pub nz: usize,
    /// Cell-centered column heights, `j * nx + i`.
    pub heights: Vec<f64>,
}

impl Grid3 {
    pub fn new(hf: &HeightField, nz: usize) -> Result<Arc<Self>> {
        if nz < 2 {
            return Err(Error::domain("n_z3", "at least two vertical cells are required"));
        }
        Ok(Arc::new(Self {
            reduced: hf.grid.clone(),
            nz,
            heights: hf.h_values.clone(),
        }))
    }

    /// Convenience constructor for constant gap.
    pub fn flat(reduced: ReducedGrid, h: f64, nz: usize) -> Result<Arc<Self>> {
        let hf = HeightField::constant(reduced, h)?;
        Self::new(&hf, nz)
    }

    pub fn dim(&self) -> ReducedDim {
        self.reduced.dim
    }

    pub fn nx(&self) -> usize {
        self.reduced.nx
    }

    pub fn ny(&self) -> usize {
        self.reduced.ny
    }

    /// The common height when the top is flat; full-order solves require it.
    pub fn uniform_height(&self) -> Result<f64> {
        let h0 = self.heights[0];
        if self.heights.iter().all(|&h| h == h0) {
            Ok(h0)
        } else {
            Err(Error::Usage("full-order grids require a constant gap".into()))
        }
    }

    pub fn column_height(&self, i: usize, j: usize) -> f64 {
        self.heights[j * self.reduced.nx + i]
    }

    pub fn dz(&self, i: usize, j: usize) -> f64 {
        self.column_height(i, j) / self.nz as f64
    }

    pub fn n_cells(&self) -> usize {
        self.reduced.n_cells() * self.nz
    }

    pub fn cell_index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.reduced.ny + j) * self.reduced.nx + i
    }

    pub fn cell_volume(&self, i: usize, j: usize) -> f64 {
        self.reduced.cell_area() * self.dz(i, j)
    }

    /// Volume of Ω.
    pub fn volume(&self) -> f64 {
        self.heights.iter().sum::<f64>() * self.reduced.cell_area()
    }

    /// Same mesh metadata (shape, extents, heights).
    pub fn same_geometry(&self, other: &Grid3) -> bool {
        self == other
    }
}
