//! Compressed sparse row storage, finite element assembly helpers and linear solvers.
//!
//! Element contributions are computed in parallel and scattered sequentially in element order,
//! so assembled values do not depend on the thread count. Reductions use fixed-size chunks for
//! the same reason.

use std::sync::Arc;

use faer::prelude::*;
use faer::sparse::linalg::solvers::{Llt, Lu, SymbolicLlt, SymbolicLu};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMat};
use faer::Side;
use rayon::prelude::*;

use crate::error::{Error, Result};

const CHUNK: usize = 4096;

/// Structurally symmetric sparsity pattern with sorted column indices.
#[derive(Debug)]
pub struct CsrPattern {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    faer: SymbolicSparseColMat<usize>,
}

impl CsrPattern {
    /// Pattern coupling every pair of indices within each clique. Indices `>= n` are ignored.
    pub fn from_cliques<'a>(n: usize, cliques: impl IntoIterator<Item = &'a [usize]>) -> Self {
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n];
        for c in cliques {
            for &i in c.iter().filter(|&&i| i < n) {
                rows[i].extend(c.iter().copied().filter(|&j| j < n));
            }
        }
        Self::from_rows(rows)
    }

    /// Pattern from explicit row lists; the diagonal is always included.
    pub fn from_rows(mut rows: Vec<Vec<usize>>) -> Self {
        let n = rows.len();
        rows.par_iter_mut().enumerate().for_each(|(i, r)| {
            r.push(i);
            r.sort_unstable();
            r.dedup();
        });
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        for r in &rows {
            row_ptr.push(row_ptr.last().unwrap() + r.len());
        }
        let cols: Vec<usize> = rows.into_iter().flatten().collect();
        let faer = SymbolicSparseColMat::new_checked(n, n, row_ptr.clone(), None, cols.clone());
        CsrPattern { row_ptr, cols, faer }
    }

    pub fn n(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.cols[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    /// Position of entry (i, j) in the value array.
    pub fn index(&self, i: usize, j: usize) -> Option<usize> {
        self.row(i).binary_search(&j).ok().map(|k| self.row_ptr[i] + k)
    }
}

#[derive(Debug, Clone)]
pub struct CsrMatrix {
    pattern: Arc<CsrPattern>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(pattern: Arc<CsrPattern>) -> Self {
        let values = vec![0.0; pattern.nnz()];
        CsrMatrix { pattern, values }
    }

    pub fn pattern(&self) -> &Arc<CsrPattern> {
        &self.pattern
    }

    pub fn n(&self) -> usize {
        self.pattern.n()
    }

    /// Adds `v` to entry (i, j), which must be in the pattern.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self
            .pattern
            .index(i, j)
            .unwrap_or_else(|| panic!("entry ({i}, {j}) not in sparsity pattern"));
        self.values[k] += v;
    }

    /// Scatters a dense element matrix. `dofs[a] >= n` marks a row/column to drop.
    pub fn add_local<const N: usize>(&mut self, dofs: &[usize; N], local: &[[f64; N]; N]) {
        let n = self.n();
        for (a, &i) in dofs.iter().enumerate() {
            if i >= n {
                continue;
            }
            let row = self.pattern.row_ptr[i];
            let cols = self.pattern.row(i);
            for (b, &j) in dofs.iter().enumerate() {
                if j >= n {
                    continue;
                }
                let k = cols.binary_search(&j).expect("element entry in pattern");
                self.values[row + k] += local[a][b];
            }
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.pattern.index(i, j).map_or(0.0, |k| self.values[k])
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n()).map(|i| self.get(i, i)).collect()
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.values[self.pattern.row_ptr[i]..self.pattern.row_ptr[i + 1]]
            .iter()
            .sum()
    }

    /// y = A x.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        let p = &self.pattern;
        y.par_iter_mut().enumerate().for_each(|(i, yi)| {
            let r = p.row_ptr[i]..p.row_ptr[i + 1];
            *yi = p.cols[r.clone()]
                .iter()
                .zip(&self.values[r])
                .map(|(&j, &v)| v * x[j])
                .sum();
        });
    }

    /// Largest |A_ij − A_ji|.
    pub fn asymmetry(&self) -> f64 {
        (0..self.n())
            .flat_map(|i| self.pattern.row(i).iter().map(move |&j| (i, j)))
            .map(|(i, j)| (self.get(i, j) - self.get(j, i)).abs())
            .fold(0.0, f64::max)
    }

    /// Replaces row and column `i` with the identity, moving the known value to `rhs`.
    pub fn constrain(&mut self, i: usize, value: f64, rhs: &mut [f64]) {
        let cols: Vec<usize> = self.pattern.row(i).to_vec();
        for &j in &cols {
            if j != i {
                let k = self.pattern.index(j, i).expect("symmetric pattern");
                rhs[j] -= self.values[k] * value;
                self.values[k] = 0.0;
            }
        }
        for &j in &cols {
            let k = self.pattern.index(i, j).unwrap();
            self.values[k] = if j == i { 1.0 } else { 0.0 };
        }
        rhs[i] = value;
    }

    /// Column-major view of a numerically symmetric matrix (the CSR arrays of A are the CSC
    /// arrays of Aᵀ).
    fn as_faer(&self) -> SparseColMatRef<'_, usize, f64> {
        SparseColMatRef::new(self.pattern.faer.rb(), &self.values)
    }
}

/// Evaluates `compute(i)` for `i in 0..count` in parallel, in bounded chunks, and hands the
/// results to `scatter` in index order.
pub fn for_each_ordered<T, C, S>(count: usize, compute: C, mut scatter: S) -> Result<()>
where
    T: Send,
    C: Fn(usize) -> Result<T> + Sync,
    S: FnMut(usize, T),
{
    const BLOCK: usize = 16 * 1024;
    let mut start = 0;
    while start < count {
        let end = (start + BLOCK).min(count);
        let block: Vec<T> = (start..end).into_par_iter().map(&compute).collect::<Result<_>>()?;
        for (k, v) in block.into_iter().enumerate() {
            scatter(start + k, v);
        }
        start = end;
    }
    Ok(())
}

/// Order-independent dot product: fixed chunks summed in parallel, partials summed in order.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let partial: Vec<f64> = a
        .par_chunks(CHUNK)
        .zip(b.par_chunks(CHUNK))
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum())
        .collect();
    partial.iter().sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrylovStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Jacobi-preconditioned conjugate gradients on an SPD matrix, starting from `x`.
pub fn pcg(a: &CsrMatrix, b: &[f64], x: &mut [f64], tol: f64, max_iter: usize) -> Result<KrylovStats> {
    let n = a.n();
    let inv_diag: Vec<f64> = a
        .diagonal()
        .into_iter()
        .map(|d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let b_norm = norm(b);
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(KrylovStats {
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let mut r = vec![0.0; n];
    a.matvec(x, &mut r);
    r.par_iter_mut().zip(b).for_each(|(ri, bi)| *ri = bi - *ri);
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    for it in 0..max_iter {
        let res = norm(&r) / b_norm;
        if res <= tol {
            return Ok(KrylovStats {
                iterations: it,
                relative_residual: res,
            });
        }
        a.matvec(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::Solver(format!(
                "conjugate gradients broke down (pᵀAp = {pap:e})"
            )));
        }
        let alpha = rz / pap;
        x.par_iter_mut().zip(&p).for_each(|(xi, pi)| *xi += alpha * pi);
        r.par_iter_mut().zip(&ap).for_each(|(ri, api)| *ri -= alpha * api);
        z.par_iter_mut()
            .zip(&r)
            .zip(&inv_diag)
            .for_each(|((zi, ri), di)| *zi = ri * di);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.par_iter_mut().zip(&z).for_each(|(pi, zi)| *pi = zi + beta * *pi);
    }
    let res = norm(&r) / b_norm;
    if res <= tol {
        Ok(KrylovStats {
            iterations: max_iter,
            relative_residual: res,
        })
    } else {
        Err(Error::Solver(format!(
            "conjugate gradients did not converge in {max_iter} iterations (relative residual {res:e})"
        )))
    }
}

/// Sparse direct solver for symmetric matrices: Cholesky, falling back to LU for indefinite
/// systems. Symbolic factorizations are cached per pattern.
#[derive(Default)]
pub struct DirectSolver {
    pattern: Option<Arc<CsrPattern>>,
    llt: Option<SymbolicLlt<usize>>,
    lu: Option<SymbolicLu<usize>>,
}

impl DirectSolver {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn solve(&mut self, a: &CsrMatrix, b: &[f64]) -> Result<Vec<f64>> {
        if !self.pattern.as_ref().is_some_and(|p| Arc::ptr_eq(p, a.pattern())) {
            self.pattern = Some(a.pattern().clone());
            self.llt = None;
            self.lu = None;
        }
        let mat = a.as_faer();
        let rhs = Col::<f64>::from_fn(b.len(), |i| b[i]);
        let x = match self.cholesky(mat) {
            Some(f) => f.solve(&rhs),
            None => {
                let sym = match &self.lu {
                    Some(s) => s.clone(),
                    None => {
                        let s = SymbolicLu::try_new(mat.symbolic())
                            .map_err(|e| Error::Solver(format!("symbolic LU failed: {e:?}")))?;
                        self.lu = Some(s.clone());
                        s
                    }
                };
                let lu = Lu::try_new_with_symbolic(sym, mat)
                    .map_err(|e| Error::Solver(format!("sparse LU failed: {e:?}")))?;
                lu.solve(&rhs)
            }
        };
        let out: Vec<f64> = (0..x.nrows()).map(|i| x[i]).collect();
        if out.iter().all(|v| v.is_finite()) {
            Ok(out)
        } else {
            Err(Error::Solver("singular linear system".into()))
        }
    }

    fn cholesky(&mut self, mat: SparseColMatRef<'_, usize, f64>) -> Option<Llt<usize, f64>> {
        let sym = match &self.llt {
            Some(s) => s.clone(),
            None => {
                let s = SymbolicLlt::try_new(mat.symbolic(), Side::Lower).ok()?;
                self.llt = Some(s.clone());
                s
            }
        };
        Llt::try_new_with_symbolic(sym, mat, Side::Lower).ok()
    }
}
