//! Brute-force validation of the lower-bound formulas on small dense pencils
//! with a prescribed spectrum.
//!
//! Each trial builds A = B U Λ Uᵀ B with Uᵀ B U = I, so the exact eigenvalues
//! are the diagonal of Λ. A random trial subspace yields Galerkin pairs, and
//! the residual representative w_i = u_i − λ*_i A⁻¹ B u_i has exactly
//! computable energy norm. The Kato bound is checked for every index and a
//! grid of shifts ν ∈ (λ*_s, λ_{s+1}]; the Weinstein bound wherever the
//! closeness condition holds.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bounds::{distance_bound, kato, kato_recursive, weinstein, ApproxSpectrum};

/// Relative slack for floating-point comparisons against exact values.
pub const SLACK: f64 = 1e-10;

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct HarnessReport {
    pub trials: usize,
    pub kato_checks: usize,
    pub kato_violations: usize,
    pub weinstein_checks: usize,
    pub weinstein_violations: usize,
    pub distance_checks: usize,
    pub distance_violations: usize,
    /// Kato violations after perturbing the discrete eigenvectors, which
    /// breaks the Galerkin hypothesis. Informational only.
    pub perturbed_kato_violations: usize,
}

impl HarnessReport {
    pub fn passed(&self) -> bool {
        self.kato_violations == 0 && self.weinstein_violations == 0 && self.distance_violations == 0
    }
}

/// A dense pencil with known spectrum and a set of approximate pairs.
pub struct Trial {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    /// Exact eigenvalues, ascending.
    pub exact: Vec<f64>,
    /// Approximate eigenvalues, ascending, with b-normalized vectors.
    pub approx: Vec<f64>,
    pub vectors: Vec<DVector<f64>>,
}

impl Trial {
    pub fn random(rng: &mut ChaCha8Rng) -> Trial {
        let n = rng.gen_range(3..=12);
        let mut exact: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..20.0)).collect();
        exact.sort_by(f64::total_cmp);
        // Occasional exact multiplicities.
        for i in 1..n {
            if rng.gen_bool(0.15) {
                exact[i] = exact[i - 1];
            }
        }
        let g = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let b = &g * g.transpose() + DMatrix::identity(n, n) * rng.gen_range(0.1..1.0);
        // B-orthonormal eigenvectors: U = L⁻ᵀ Q with B = L Lᵀ, Q orthogonal.
        let l = b.clone().cholesky().expect("B is SPD").l();
        let q = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0)).qr().q();
        let u = l.transpose().try_inverse().expect("invertible") * q;
        let lam = DMatrix::from_diagonal(&DVector::from_vec(exact.clone()));
        let a = &b * &u * lam * u.transpose() * &b;
        let a = (&a + a.transpose()) * 0.5;

        let k = rng.gen_range(1..n);
        let eps = 10f64.powf(rng.gen_range(-4.0..0.0));
        let w = DMatrix::from_fn(n, k, |i, j| u[(i, j)] + eps * rng.gen_range(-1.0..1.0));
        let (approx, vectors) = galerkin(&a, &b, &w);
        Trial { a, b, exact, approx, vectors }
    }

    /// ‖w_i‖_a for the residual representative of pair i.
    pub fn residual_norm(&self, i: usize) -> f64 {
        residual_norm(&self.a, &self.b, self.approx[i], &self.vectors[i])
    }
}

fn residual_norm(a: &DMatrix<f64>, b: &DMatrix<f64>, lam: f64, u: &DVector<f64>) -> f64 {
    let rhs = b * u;
    let sol = a.clone().cholesky().expect("A is SPD").solve(&rhs);
    let w = u - sol * lam;
    (w.transpose() * a * &w)[(0, 0)].max(0.0).sqrt()
}

/// Galerkin pairs of (A, B) on the column span of `w`, b-normalized.
fn galerkin(a: &DMatrix<f64>, b: &DMatrix<f64>, w: &DMatrix<f64>) -> (Vec<f64>, Vec<DVector<f64>>) {
    let ar = w.transpose() * a * w;
    let br = w.transpose() * b * w;
    let l = br.cholesky().expect("trial basis is independent").l();
    let li = l.try_inverse().expect("invertible");
    let c = &li * ar * li.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = order
        .iter()
        .map(|&i| {
            let y = li.transpose() * eig.eigenvectors.column(i);
            let u = w * y;
            let nb = (u.transpose() * b * &u)[(0, 0)].sqrt();
            u / nb
        })
        .collect();
    (vals, vecs)
}

/// Runs `trials` random instances. `nu_grid` shifts are sampled per (r, s).
pub fn run_harness(trials: usize, seed: u64, nu_grid: usize) -> HarnessReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = HarnessReport { trials, ..Default::default() };
    for _ in 0..trials {
        let t = Trial::random(&mut rng);
        let k = t.approx.len();
        let etas: Vec<f64> = (0..k).map(|i| t.residual_norm(i)).collect();
        // Residual bounds may overestimate; inflate some of them.
        let inflate = if rng.gen_bool(0.5) { 1.0 } else { rng.gen_range(1.0..3.0) };
        let etas: Vec<f64> = etas.iter().map(|e| e * inflate).collect();

        for i in 0..k {
            let (l, e) = (t.approx[i], etas[i]);
            let dist = t.exact.iter().map(|x| (x - l) * (x - l) / x).fold(f64::INFINITY, f64::min);
            rep.distance_checks += 1;
            if dist > distance_bound(l, e, 1.0).expect("normalized") * (1.0 + SLACK) + 1e-14 {
                rep.distance_violations += 1;
            }
            // Closeness with exact neighbours; λ_0 = 0.
            let prev = if i == 0 { 0.0 } else { t.exact[i - 1] };
            let next = t.exact.get(i + 1).copied().unwrap_or(f64::INFINITY);
            let (ln, close_lo, close_hi) = (t.exact[i], (prev * t.exact[i]).sqrt(), (t.exact[i] * next).sqrt());
            if close_lo <= l && l <= close_hi {
                rep.weinstein_checks += 1;
                if weinstein(l, e) > ln * (1.0 + SLACK) {
                    rep.weinstein_violations += 1;
                }
            }
        }

        for r in 1..=k {
            for s in r..=k {
                let approx = ApproxSpectrum::new(r, t.approx[r - 1..s].to_vec(), etas[r - 1..s].to_vec())
                    .expect("Galerkin values are positive and sorted");
                let ls = t.approx[s - 1];
                let hi = t.exact[s]; // λ_{s+1}; exists since k < n
                if !(hi > ls) {
                    continue;
                }
                for g in 1..=nu_grid {
                    let nu = ls + (hi - ls) * g as f64 / nu_grid as f64;
                    if !(nu > ls) {
                        continue;
                    }
                    for n in r..=s {
                        rep.kato_checks += 1;
                        let bound = kato(&approx, nu, n).expect("nu above lambda_s");
                        if bound > t.exact[n - 1] * (1.0 + SLACK) {
                            rep.kato_violations += 1;
                        }
                    }
                    if let Ok(rec) = kato_recursive(&approx, nu) {
                        for (j, v) in rec.iter().enumerate() {
                            rep.kato_checks += 1;
                            if *v > t.exact[r - 1 + j] * (1.0 + SLACK) {
                                rep.kato_violations += 1;
                            }
                        }
                    }
                }
            }
        }

        // Sensitivity probe: perturbed vectors no longer satisfy the
        // Galerkin identities, so the Kato hypothesis fails.
        let pert: Vec<DVector<f64>> = t
            .vectors
            .iter()
            .map(|u| {
                let d = DVector::from_fn(u.len(), |_, _| 1e-2 * rng.gen_range(-1.0..1.0));
                let v = u + d;
                let nb = (v.transpose() * &t.b * &v)[(0, 0)].sqrt();
                v / nb
            })
            .collect();
        let pl: Vec<f64> = pert.iter().map(|v| (v.transpose() * &t.a * v)[(0, 0)]).collect();
        if pl.windows(2).all(|w| w[0] <= w[1]) {
            let pe: Vec<f64> = (0..k).map(|i| residual_norm(&t.a, &t.b, pl[i], &pert[i])).collect();
            if let Ok(approx) = ApproxSpectrum::new(1, pl.clone(), pe) {
                let nu = t.exact[k];
                if nu > pl[k - 1] {
                    for n in 1..=k {
                        if kato(&approx, nu, n).map(|v| v > t.exact[n - 1] * (1.0 + SLACK)).unwrap_or(false) {
                            rep.perturbed_kato_violations += 1;
                        }
                    }
                }
            }
        }
    }
    rep
}
