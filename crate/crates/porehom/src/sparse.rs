//! Thin triplet-based interface to the sparse direct solver.
//!
//! Assembly routines accumulate (row, col, value) triplets plus a dense
//! right-hand side, then factorize with an LU decomposition. Duplicate
//! triplets sum. Factorizations run sequentially so that repeated solves
//! of the same system are bit-identical; parallelism belongs one level
//! up (across independent solves).

use std::sync::Once;

use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};

use crate::error::{Error, Result};

static FORCE_SEQUENTIAL: Once = Once::new();

/// Square sparse linear system under assembly.
pub struct LinearSystem {
    n: usize,
    triplets: Vec<Triplet<usize, usize, f64>>,
    rhs: Vec<f64>,
}

impl LinearSystem {
    /// Empty n×n system with zero right-hand side.
    pub fn new(n: usize) -> Self {
        LinearSystem { n, triplets: Vec::with_capacity(8 * n), rhs: vec![0.0; n] }
    }

    /// Dimension of the system.
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Accumulates `val` into entry (row, col).
    #[inline]
    pub fn add(&mut self, row: usize, col: usize, val: f64) {
        debug_assert!(row < self.n && col < self.n);
        if val != 0.0 {
            self.triplets.push(Triplet::new(row, col, val));
        }
    }

    /// Accumulates `val` into the right-hand side of `row`.
    #[inline]
    pub fn add_rhs(&mut self, row: usize, val: f64) {
        debug_assert!(row < self.n);
        self.rhs[row] += val;
    }

    /// Right-hand side assembled so far.
    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    /// Matrix-vector product with the assembled triplets (for residual
    /// checks; duplicates sum, matching the factorized matrix).
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        let mut y = vec![0.0; self.n];
        for t in &self.triplets {
            y[t.row] += t.val * x[t.col];
        }
        y
    }

    /// Solves the assembled system by sparse LU.
    pub fn solve(&self) -> Result<Vec<f64>> {
        FORCE_SEQUENTIAL.call_once(|| faer::set_global_parallelism(faer::Par::Seq));
        let mat = SparseColMat::try_new_from_triplets(self.n, self.n, &self.triplets)
            .map_err(|e| Error::SingularSystem(format!("assembly failed: {e:?}")))?;
        let lu = mat
            .sp_lu()
            .map_err(|e| Error::SingularSystem(format!("LU factorization failed: {e:?}")))?;
        let b = faer::Mat::from_fn(self.n, 1, |i, _| self.rhs[i]);
        let x = lu.solve(&b);
        let sol: Vec<f64> = (0..self.n).map(|i| x[(i, 0)]).collect();
        if sol.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("linear solve produced non-finite entries".into()));
        }
        Ok(sol)
    }
}
