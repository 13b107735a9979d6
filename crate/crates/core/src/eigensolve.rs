//! Lowest eigenpairs of the symmetric pencil A u = λ B u with A positive
//! definite and B positive semidefinite.
//!
//! Restarted block Krylov iteration on the shift-inverted operator A⁻¹B
//! (shift 0), with full B-orthogonalization (classical Gram–Schmidt, twice)
//! and Rayleigh–Ritz on the pencil itself. Starting vectors pass through
//! A⁻¹B once, which removes components in the kernel of B.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::Llt;
use faer::{Mat, Side};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::sparse::SymmetricSparseOperator;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct EigenOptions {
    /// Relative residual ‖AU − λBU‖₂ / (|λ| ‖BU‖₂) required of every pair.
    pub tol: f64,
    /// Operator applications allowed per requested pair.
    pub max_iter_per_pair: usize,
    pub seed: u64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions { tol: 1e-10, max_iter_per_pair: 500, seed: 0 }
    }
}

#[derive(Clone, Debug)]
pub struct EigenSolution {
    /// Ascending eigenvalues.
    pub values: Vec<f64>,
    /// B-orthonormal coefficient vectors on the free dofs.
    pub vectors: Vec<Vec<f64>>,
    /// Absolute residuals ‖AU − λBU‖₂.
    pub residuals: Vec<f64>,
    pub relative_residuals: Vec<f64>,
    pub tol: f64,
}

/// Sparse Cholesky factor of A.
pub struct Factor {
    llt: Llt<usize, f64>,
    n: usize,
}

impl Factor {
    pub fn new(a: &SymmetricSparseOperator) -> Result<Self> {
        let llt = a
            .to_faer_lower()
            .sp_cholesky(Side::Lower)
            .map_err(|e| Error::Factorization(format!("{e:?}")))?;
        Ok(Factor { llt, n: a.dim() })
    }

    /// Solves A X = R for every column of `cols` in place.
    pub fn solve_columns(&self, cols: &mut [Vec<f64>]) {
        if cols.is_empty() {
            return;
        }
        let mut rhs = Mat::from_fn(self.n, cols.len(), |i, j| cols[j][i]);
        self.llt.solve_in_place(rhs.as_mut());
        for (j, c) in cols.iter_mut().enumerate() {
            for (i, x) in c.iter_mut().enumerate() {
                *x = rhs[(i, j)];
            }
        }
    }
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

/// B-orthonormal basis with cached B-images.
struct Basis<'a> {
    b: &'a SymmetricSparseOperator,
    v: Vec<Vec<f64>>,
    bv: Vec<Vec<f64>>,
}

impl Basis<'_> {
    /// Orthogonalizes `w` against the basis and appends it unless it is
    /// numerically dependent. Returns whether it was appended.
    fn push(&mut self, mut w: Vec<f64>) -> bool {
        let norm0 = dot(&w, &self.b.apply(&w)).max(0.0).sqrt();
        if norm0 == 0.0 || !norm0.is_finite() {
            return false;
        }
        // Near convergence the new direction is as small as the residual, so
        // the drop threshold must sit near round-off; a third pass restores
        // orthogonality for strongly cancelling vectors.
        let mut bw = Vec::new();
        let mut nrm = norm0;
        for pass in 0..3 {
            let coef: Vec<f64> = self.bv.par_iter().map(|bv| dot(bv, &w)).collect();
            for (c, v) in coef.iter().zip(&self.v) {
                for (wi, vi) in w.iter_mut().zip(v) {
                    *wi -= c * vi;
                }
            }
            let before = nrm;
            bw = self.b.apply(&w);
            nrm = dot(&w, &bw).max(0.0).sqrt();
            if pass >= 1 && nrm > 0.5 * before {
                break;
            }
        }
        if nrm <= 1e-12 * norm0 {
            return false;
        }
        let s = 1.0 / nrm;
        self.v.push(w.into_iter().map(|x| x * s).collect());
        self.bv.push(bw.into_iter().map(|x| x * s).collect());
        true
    }
}

/// Lowest `m` eigenpairs from random starting vectors.
pub fn solve_lowest(
    a: &SymmetricSparseOperator,
    b: &SymmetricSparseOperator,
    m: usize,
    opts: &EigenOptions,
) -> Result<EigenSolution> {
    solve_lowest_warm(a, b, m, opts, &[])
}

/// Lowest `m` eigenpairs; `warm` vectors (e.g. prolongated eigenvectors from
/// a coarser mesh) seed the first block.
pub fn solve_lowest_warm(
    a: &SymmetricSparseOperator,
    b: &SymmetricSparseOperator,
    m: usize,
    opts: &EigenOptions,
    warm: &[Vec<f64>],
) -> Result<EigenSolution> {
    let n = a.dim();
    if b.dim() != n {
        return Err(Error::Config("stiffness and mass operators differ in size".into()));
    }
    if m == 0 {
        return Ok(EigenSolution { values: vec![], vectors: vec![], residuals: vec![], relative_residuals: vec![], tol: opts.tol });
    }
    if m > n {
        return Err(Error::Config(format!("requested {m} eigenpairs from a problem with {n} unknowns")));
    }
    let factor = Factor::new(a)?;
    let op = |cols: Vec<Vec<f64>>| -> Vec<Vec<f64>> {
        let mut y: Vec<Vec<f64>> = cols.par_iter().map(|c| b.apply(c)).collect();
        factor.solve_columns(&mut y);
        y
    };

    let bs = n.min(m + 4.max(m / 4));
    let kmax = n.min(6 * bs);
    let budget = opts.max_iter_per_pair.saturating_mul(m).max(kmax);

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut start: Vec<Vec<f64>> = warm.iter().filter(|w| w.len() == n).take(bs).cloned().collect();
    while start.len() < bs {
        start.push((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect());
    }
    let mut applies = start.len();
    let mut basis = Basis { b, v: Vec::with_capacity(kmax), bv: Vec::with_capacity(kmax) };
    let mut last: Vec<usize> = Vec::new();
    for w in op(start) {
        if basis.push(w) {
            last.push(basis.v.len() - 1);
        }
    }

    loop {
        while basis.v.len() < kmax && !last.is_empty() {
            let block: Vec<Vec<f64>> = last.iter().map(|&i| basis.v[i].clone()).collect();
            applies += block.len();
            last.clear();
            for w in op(block) {
                if basis.v.len() >= kmax {
                    break;
                }
                if basis.push(w) {
                    last.push(basis.v.len() - 1);
                }
            }
        }
        let k = basis.v.len();
        if k < m {
            return Err(Error::Config(format!(
                "the mass form is positive only on a {k}-dimensional subspace; {m} eigenpairs requested"
            )));
        }
        let av: Vec<Vec<f64>> = basis.v.par_iter().map(|v| a.apply(v)).collect();
        let h = DMatrix::from_fn(k, k, |i, j| {
            let (i, j) = if i <= j { (i, j) } else { (j, i) };
            dot(&basis.v[i], &av[j])
        });
        let eig = SymmetricEigen::new(h);
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
        let keep = bs.min(k);
        let combine = |src: &[Vec<f64>], col: usize| -> Vec<f64> {
            let mut x = vec![0.0; n];
            for (j, s) in src.iter().enumerate() {
                let c = eig.eigenvectors[(j, col)];
                for (xi, si) in x.iter_mut().zip(s) {
                    *xi += c * si;
                }
            }
            x
        };
        let ritz: Vec<(f64, Vec<f64>, Vec<f64>, Vec<f64>)> = order[..keep]
            .par_iter()
            .map(|&c| (eig.eigenvalues[c], combine(&basis.v, c), combine(&av, c), combine(&basis.bv, c)))
            .collect();
        let rel: Vec<f64> = ritz[..m]
            .iter()
            .map(|(th, _, ax, bx)| {
                let r: Vec<f64> = ax.iter().zip(bx).map(|(p, q)| p - th * q).collect();
                norm(&r) / (th.abs() * norm(bx))
            })
            .collect();
        if rel.iter().all(|r| *r <= opts.tol) {
            return Ok(finalize(a, b, ritz.into_iter().take(m).map(|(th, x, _, _)| (th, x)).collect(), opts.tol));
        }
        if applies >= budget {
            return Err(Error::NotConverged { iterations: applies, residuals: rel });
        }
        basis.v.clear();
        basis.bv.clear();
        last.clear();
        for (_, x, _, _) in ritz {
            if basis.push(x) {
                last.push(basis.v.len() - 1);
            }
        }
    }
}

fn finalize(a: &SymmetricSparseOperator, b: &SymmetricSparseOperator, pairs: Vec<(f64, Vec<f64>)>, tol: f64) -> EigenSolution {
    let mut out = EigenSolution { values: vec![], vectors: vec![], residuals: vec![], relative_residuals: vec![], tol };
    for (_, mut x) in pairs {
        let bx = b.apply(&x);
        let s = 1.0 / dot(&x, &bx).sqrt();
        let big = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let first = x.iter().find(|v| v.abs() > 1e-6 * big).copied().unwrap_or(1.0);
        let s = if first < 0.0 { -s } else { s };
        x.iter_mut().for_each(|v| *v *= s);
        let ax = a.apply(&x);
        let bx = b.apply(&x);
        let lam = dot(&x, &ax) / dot(&x, &bx);
        let r: Vec<f64> = ax.iter().zip(&bx).map(|(p, q)| p - lam * q).collect();
        out.values.push(lam);
        out.residuals.push(norm(&r));
        out.relative_residuals.push(norm(&r) / (lam.abs() * norm(&bx)));
        out.vectors.push(x);
    }
    // Rayleigh quotients can reorder nearly equal Ritz values by an ulp.
    let mut idx: Vec<usize> = (0..out.values.len()).collect();
    idx.sort_by(|&i, &j| out.values[i].total_cmp(&out.values[j]));
    EigenSolution {
        values: idx.iter().map(|&i| out.values[i]).collect(),
        vectors: idx.iter().map(|&i| out.vectors[i].clone()).collect(),
        residuals: idx.iter().map(|&i| out.residuals[i]).collect(),
        relative_residuals: idx.iter().map(|&i| out.relative_residuals[i]).collect(),
        tol,
    }
}

/// (UᵀAU)/(UᵀBU).
pub fn rayleigh_quotient(a: &SymmetricSparseOperator, b: &SymmetricSparseOperator, u: &[f64]) -> Result<f64> {
    let ub = b.form(u, u);
    if ub <= 0.0 {
        return Err(Error::ZeroBNorm);
    }
    Ok(a.form(u, u) / ub)
}
