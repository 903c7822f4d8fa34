//! Sparse matrix assembly storage and the direct solver wrapper.
//!
//! Assembly produces coordinate-format triplets (duplicates are summed on
//! conversion); solving goes through a sparse LU factorization with partial
//! pivoting. The factorization is forced to run sequentially so that repeated
//! runs of the same experiment produce bitwise-identical numbers; parallelism
//! lives at the experiment-job level instead.

use std::sync::Once;

use faer::linalg::solvers::Solve;
use faer::prelude::Reborrow;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;

use crate::error::{IceLabError, Result};

/// Coordinate-format sparse matrix under assembly. Duplicate (row, col)
/// entries are allowed and are summed when the matrix is finalized.
#[derive(Debug, Clone)]
pub struct CooMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

impl CooMatrix {
    pub fn new(n_rows: usize, n_cols: usize) -> Self {
        CooMatrix {
            n_rows,
            n_cols,
            entries: Vec::new(),
        }
    }

    pub fn with_capacity(n_rows: usize, n_cols: usize, cap: usize) -> Self {
        CooMatrix {
            n_rows,
            n_cols,
            entries: Vec::with_capacity(cap),
        }
    }

    #[inline]
    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.n_rows && col < self.n_cols);
        self.entries.push((row, col, value));
    }

    /// y = A x computed directly from the triplets.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n_cols);
        let mut y = vec![0.0; self.n_rows];
        for &(r, c, v) in &self.entries {
            y[r] += v * x[c];
        }
        y
    }

    /// Sum duplicates into a deterministic (row-major sorted) triplet list.
    pub fn compressed_entries(&self) -> Vec<(usize, usize, f64)> {
        let mut sorted = self.entries.clone();
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut out: Vec<(usize, usize, f64)> = Vec::with_capacity(sorted.len());
        for (r, c, v) in sorted {
            match out.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => out.push((r, c, v)),
            }
        }
        out
    }

    /// Write the compressed matrix in coordinate text format, one
    /// `row col value` triple per line.
    pub fn dump_coordinate_text(&self, mut w: impl std::io::Write) -> std::io::Result<()> {
        for (r, c, v) in self.compressed_entries() {
            writeln!(w, "{} {} {:.17e}", r, c, v)?;
        }
        Ok(())
    }
}

fn force_sequential_solver() {
    static INIT: Once = Once::new();
    INIT.call_once(|| {
        faer::set_global_parallelism(faer::Par::Seq);
    });
}

/// Outcome of a direct solve: solution vector plus the achieved relative
/// residual max(‖Ax−b‖₂ / ‖b‖₂, computed from the assembled triplets).
#[derive(Debug, Clone)]
pub struct DirectSolve {
    pub x: Vec<f64>,
    pub residual: f64,
}

/// Sparse LU solve of A x = b. Singular matrices are reported with the
/// elimination step at which no pivot was found.
pub fn solve_sparse(a: &CooMatrix, b: &[f64]) -> Result<DirectSolve> {
    force_sequential_solver();
    if a.n_rows != a.n_cols {
        return Err(IceLabError::Solver(format!(
            "matrix is {}x{}, expected square",
            a.n_rows, a.n_cols
        )));
    }
    if b.len() != a.n_rows {
        return Err(IceLabError::Solver(format!(
            "rhs length {} does not match matrix size {}",
            b.len(),
            a.n_rows
        )));
    }
    let n = a.n_rows;
    let triplets: Vec<Triplet<usize, usize, f64>> = a
        .entries
        .iter()
        .map(|&(r, c, v)| Triplet::new(r, c, v))
        .collect();
    let mat = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &triplets)
        .map_err(|e| IceLabError::Solver(format!("triplet conversion failed: {e:?}")))?;
    let symbolic = SymbolicLu::try_new(mat.symbolic())
        .map_err(|e| IceLabError::Solver(format!("symbolic factorization failed: {e:?}")))?;
    let lu = Lu::try_new_with_symbolic(symbolic, mat.rb()).map_err(|e| match e {
        faer::sparse::linalg::LuError::SymbolicSingular { index } => {
            IceLabError::SingularSystem { pivot: index }
        }
        other => IceLabError::Solver(format!("numeric factorization failed: {other:?}")),
    })?;
    let rhs = Mat::from_fn(n, 1, |i, _| b[i]);
    let sol = lu.solve(&rhs);
    let x: Vec<f64> = (0..n).map(|i| sol[(i, 0)]).collect();
    if x.iter().any(|v| !v.is_finite()) {
        return Err(IceLabError::Solver(
            "solution contains non-finite entries".to_string(),
        ));
    }
    let ax = a.matvec(&x);
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..n {
        num += (ax[i] - b[i]) * (ax[i] - b[i]);
        den += b[i] * b[i];
    }
    let residual = if den > 0.0 {
        (num / den).sqrt()
    } else {
        num.sqrt()
    };
    Ok(DirectSolve { x, residual })
}
