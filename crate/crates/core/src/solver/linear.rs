//! Compressed-column pattern of the global system and a sparse LU wrapper
//! that keeps the symbolic factorization between Newton iterations.

use faer::prelude::Solve;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::Mat;

use super::SolverError;

/// Column-compressed sparsity pattern with sorted row indices.
#[derive(Debug, Clone)]
pub struct SparsePattern {
    n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
}

impl SparsePattern {
    /// Pattern of the union of dense blocks, one per element, given by the
    /// free global indices of the element's dofs.
    pub fn from_blocks<'a>(n: usize, blocks: impl Iterator<Item = &'a [usize]>) -> Self {
        let mut cols: Vec<Vec<usize>> = vec![Vec::new(); n];
        for block in blocks {
            for &j in block {
                cols[j].extend_from_slice(block);
            }
        }
        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut row_idx = Vec::new();
        col_ptr.push(0);
        for mut c in cols {
            c.sort_unstable();
            c.dedup();
            row_idx.extend_from_slice(&c);
            col_ptr.push(row_idx.len());
        }
        Self {
            n,
            col_ptr,
            row_idx,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    /// Index into the value array of entry `(row, col)`.
    pub fn position(&self, row: usize, col: usize) -> Option<usize> {
        let start = self.col_ptr[col];
        let rows = &self.row_idx[start..self.col_ptr[col + 1]];
        rows.binary_search(&row).ok().map(|k| start + k)
    }

    pub fn col_ptr(&self) -> &[usize] {
        &self.col_ptr
    }

    pub fn row_idx(&self) -> &[usize] {
        &self.row_idx
    }

    fn symbolic(&self) -> SymbolicSparseColMatRef<'_, usize> {
        SymbolicSparseColMatRef::new_checked(self.n, self.n, &self.col_ptr, None, &self.row_idx)
    }

    /// `y = A x` for values laid out on this pattern.
    pub fn mul(&self, values: &[f64], x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for j in 0..self.n {
            for k in self.col_ptr[j]..self.col_ptr[j + 1] {
                y[self.row_idx[k]] += values[k] * x[j];
            }
        }
        y
    }

    /// Largest `|a_ij - a_ji|` relative to the largest entry.
    pub fn relative_asymmetry(&self, values: &[f64]) -> f64 {
        let scale = values
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()))
            .max(f64::MIN_POSITIVE);
        let mut worst = 0.0f64;
        for j in 0..self.n {
            for k in self.col_ptr[j]..self.col_ptr[j + 1] {
                let i = self.row_idx[k];
                let t = self.position(j, i).map_or(0.0, |p| values[p]);
                worst = worst.max((values[k] - t).abs());
            }
        }
        worst / scale
    }
}

/// Direct sparse solver for a fixed pattern.
pub struct SparseLu {
    pattern: SparsePattern,
    symbolic: Option<SymbolicLu<usize>>,
}

impl SparseLu {
    pub fn new(pattern: SparsePattern) -> Self {
        Self {
            pattern,
            symbolic: None,
        }
    }

    pub fn pattern(&self) -> &SparsePattern {
        &self.pattern
    }

    /// Solves `A x = b` with a fresh numeric factorization. One step of
    /// iterative refinement is applied when the first residual is not small.
    pub fn solve(&mut self, values: &[f64], b: &[f64]) -> Result<Vec<f64>, SolverError> {
        let n = self.pattern.dim();
        if n == 0 {
            return Ok(Vec::new());
        }
        let symbolic = match &self.symbolic {
            Some(s) => s.clone(),
            None => {
                let s = SymbolicLu::try_new(self.pattern.symbolic())
                    .map_err(|e| SolverError::Factorization(format!("{e:?}")))?;
                self.symbolic = Some(s.clone());
                s
            }
        };
        let mat = SparseColMatRef::new(self.pattern.symbolic(), values);
        let lu = Lu::try_new_with_symbolic(symbolic, mat)
            .map_err(|e| SolverError::Factorization(format!("{e:?}")))?;
        let rhs = Mat::from_fn(n, 1, |i, _| b[i]);
        let sol = lu.solve(&rhs);
        let mut x: Vec<f64> = (0..n).map(|i| sol[(i, 0)]).collect();
        if x.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::Factorization(
                "singular matrix (non-finite solution)".into(),
            ));
        }
        let b_norm = norm(b);
        let mut res = residual(&self.pattern, values, &x, b);
        if norm(&res) > 1e-12 * b_norm {
            let corr = lu.solve(&Mat::from_fn(n, 1, |i, _| res[i]));
            for i in 0..n {
                x[i] += corr[(i, 0)];
            }
            res = residual(&self.pattern, values, &x, b);
        }
        let r = norm(&res);
        if !(r <= 1e-6 * b_norm.max(f64::MIN_POSITIVE)) && b_norm > 0.0 {
            return Err(SolverError::Factorization(format!(
                "linear residual {r:e} too large relative to right-hand side {b_norm:e}"
            )));
        }
        Ok(x)
    }
}

fn residual(pattern: &SparsePattern, values: &[f64], x: &[f64], b: &[f64]) -> Vec<f64> {
    let ax = pattern.mul(values, x);
    ax.iter().zip(b).map(|(a, b)| b - a).collect()
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dense_pattern(n: usize) -> SparsePattern {
        let all: Vec<usize> = (0..n).collect();
        SparsePattern::from_blocks(n, std::iter::once(all.as_slice()))
    }

    #[test]
    fn identity_solve() {
        let n = 5;
        let blocks: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        let p = SparsePattern::from_blocks(n, blocks.iter().map(|b| b.as_slice()));
        assert_eq!(p.nnz(), n);
        let mut lu = SparseLu::new(p);
        let mut b = vec![0.0; n];
        b[0] = -1.0;
        let x = lu.solve(&vec![1.0; n], &b).unwrap();
        assert_eq!(x[0], -1.0);
        assert!(x[1..].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn random_spd_matches_dense() {
        let n = 50;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let spd = &a * a.transpose() + DMatrix::identity(n, n) * n as f64;
        let b = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let p = dense_pattern(n);
        let values: Vec<f64> = (0..p.nnz())
            .map(|k| {
                let col = p.col_ptr().partition_point(|&c| c <= k) - 1;
                spd[(p.row_idx()[k], col)]
            })
            .collect();
        let mut lu = SparseLu::new(p);
        let x = lu.solve(&values, b.as_slice()).unwrap();
        let oracle = spd.clone().lu().solve(&b).unwrap();
        let diff = (DVector::from_vec(x.clone()) - &oracle).amax();
        assert!(diff < 1e-10 * oracle.amax());
        // the cached symbolic factorization is reused
        let x2 = lu.solve(&values, b.as_slice()).unwrap();
        assert_eq!(x, x2);
    }

    #[test]
    fn singular_matrix_reported() {
        let p = dense_pattern(2);
        let mut lu = SparseLu::new(p);
        assert!(lu.solve(&[1.0, 1.0, 1.0, 1.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn pattern_positions() {
        let blocks = [vec![0, 2], vec![1, 2]];
        let p = SparsePattern::from_blocks(3, blocks.iter().map(|b| b.as_slice()));
        assert!(p.position(0, 1).is_none());
        assert!(p.position(2, 0).is_some());
        assert_eq!(p.nnz(), 7);
    }
}
