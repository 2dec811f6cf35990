//! Triplet assembly and a sparse LU wrapper that reuses the symbolic
//! factorization across Picard steps with an unchanged pattern.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{Argsort, Pair, SparseColMat, SymbolicSparseColMat};
use faer::{Mat, Par};

use crate::error::{Error, Result};

/// Coordinate-format assembly buffer. Duplicates are summed on conversion;
/// explicit zeros stay in the pattern so that refactorizations see a fixed
/// structure.
#[derive(Debug, Clone, Default)]
pub struct Triplets {
    pub n_rows: usize,
    pub n_cols: usize,
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl Triplets {
    pub fn new(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            ..Default::default()
        }
    }

    pub fn push(&mut self, row: usize, col: usize, val: f64) {
        debug_assert!(row < self.n_rows && col < self.n_cols);
        self.rows.push(row);
        self.cols.push(col);
        self.vals.push(val);
    }

    pub fn len(&self) -> usize {
        self.vals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vals.is_empty()
    }

    /// Dense copy, for small test matrices.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n_cols]; self.n_rows];
        for ((&r, &c), &v) in self.rows.iter().zip(&self.cols).zip(&self.vals) {
            d[r][c] += v;
        }
        d
    }

    /// `y = A x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_rows];
        for ((&r, &c), &v) in self.rows.iter().zip(&self.cols).zip(&self.vals) {
            y[r] += v * x[c];
        }
        y
    }
}

/// Compressed pattern of a [`Triplets`] buffer, reusable for new values in the
/// same push order.
pub struct Pattern {
    symbolic: SymbolicSparseColMat<usize>,
    argsort: Argsort<usize>,
    n_entries: usize,
}

impl Pattern {
    pub fn new(t: &Triplets) -> Result<Self> {
        let idx: Vec<Pair<usize, usize>> = t
            .rows
            .iter()
            .zip(&t.cols)
            .map(|(&row, &col)| Pair { row, col })
            .collect();
        let (symbolic, argsort) = SymbolicSparseColMat::try_new_from_indices(t.n_rows, t.n_cols, &idx)
            .map_err(|e| Error::Configuration(format!("invalid sparse pattern: {e:?}")))?;
        Ok(Self {
            symbolic,
            argsort,
            n_entries: t.len(),
        })
    }

    pub fn matrix(&self, vals: &[f64]) -> Result<SparseColMat<usize, f64>> {
        if vals.len() != self.n_entries {
            return Err(Error::Usage("value count differs from the assembled pattern".into()));
        }
        SparseColMat::new_from_argsort(self.symbolic.clone(), &self.argsort, vals)
            .map_err(|e| Error::Configuration(format!("sparse assembly failed: {e:?}")))
    }
}

/// Sparse LU with a cached symbolic analysis.
pub struct SparseLu {
    pattern: Pattern,
    symbolic: SymbolicLu<usize>,
    numeric: Option<Lu<usize, f64>>,
    n: usize,
}

impl SparseLu {
    /// Analyzes the pattern of a square system.
    pub fn analyze(t: &Triplets) -> Result<Self> {
        if t.n_rows != t.n_cols {
            return Err(Error::Usage("LU needs a square matrix".into()));
        }
        // Sequential kernels keep results independent of the thread count.
        faer::set_global_parallelism(Par::Seq);
        let pattern = Pattern::new(t)?;
        let symbolic = SymbolicLu::try_new(pattern.symbolic.as_ref())
            .map_err(|e| Error::Configuration(format!("symbolic LU failed: {e:?}")))?;
        Ok(Self {
            pattern,
            symbolic,
            numeric: None,
            n: t.n_rows,
        })
    }

    /// Numeric factorization for values pushed in the analyzed order.
    pub fn factorize(&mut self, vals: &[f64]) -> Result<()> {
        let a = self.pattern.matrix(vals)?;
        let lu = Lu::try_new_with_symbolic(self.symbolic.clone(), a.as_ref())
            .map_err(|e| Error::Configuration(format!("LU factorization failed: {e:?}")))?;
        self.numeric = Some(lu);
        Ok(())
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let lu = self
            .numeric
            .as_ref()
            .ok_or_else(|| Error::Usage("solve called before factorize".into()))?;
        if rhs.len() != self.n {
            return Err(Error::Usage("right-hand side has the wrong length".into()));
        }
        let mut x = Mat::<f64>::from_fn(self.n, 1, |i, _| rhs[i]);
        lu.solve_in_place(&mut x);
        let out: Vec<f64> = (0..self.n).map(|i| x[(i, 0)]).collect();
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Configuration(
                "LU solve produced non-finite values (singular system)".into(),
            ));
        }
        Ok(out)
    }
}

/// One-shot factorize-and-solve.
pub fn solve_once(t: &Triplets, rhs: &[f64]) -> Result<Vec<f64>> {
    let mut lu = SparseLu::analyze(t)?;
    lu.factorize(&t.vals)?;
    lu.solve(rhs)
}
