//! Lower bounds on eigenvalues from approximate eigenpairs and bounds η_i on
//! the energy norm of their residual representatives.
//!
//! * [`weinstein`]: ℓ = ¼(−η + √(η² + 4λ*))², valid when λ* is closer to
//!   λ_n than to its neighbours in the geometric-mean sense.
//! * [`kato`]: L_n = λ*_n / (1 + ν λ*_n Σ_{i=n}^{s} η_i² / (λ*_i² (ν − λ*_i))),
//!   valid when λ*_s < ν ≤ λ_{s+1}.

use serde::Serialize;

use crate::{Error, Result};

/// Weinstein-type lower bound. Evaluated as λ*² / (¼(η + √(η² + 4λ*))²),
/// which avoids cancellation when η is large.
pub fn weinstein(lambda: f64, eta: f64) -> f64 {
    if eta == 0.0 {
        return lambda;
    }
    let s = (eta * eta + 4.0 * lambda).sqrt();
    let d = 0.5 * (eta + s);
    lambda * lambda / (d * d)
}

/// Approximate eigenvalues λ*_r..λ*_s with residual bounds η_r..η_s.
#[derive(Clone, Debug, PartialEq)]
pub struct ApproxSpectrum {
    /// Index r of the first entry (1-based).
    pub first: usize,
    pub lambdas: Vec<f64>,
    pub etas: Vec<f64>,
}

impl ApproxSpectrum {
    pub fn new(first: usize, lambdas: Vec<f64>, etas: Vec<f64>) -> Result<Self> {
        if first < 1 || lambdas.is_empty() || lambdas.len() != etas.len() {
            return Err(Error::Config("approximate spectrum needs r >= 1 and matching, nonempty λ/η lists".into()));
        }
        if lambdas.iter().any(|l| !(*l > 0.0)) || etas.iter().any(|e| !(*e >= 0.0)) {
            return Err(Error::Config("approximate eigenvalues must be positive and η nonnegative".into()));
        }
        if lambdas.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Config("approximate eigenvalues must be ascending".into()));
        }
        Ok(ApproxSpectrum { first, lambdas, etas })
    }

    /// Index s of the last entry.
    pub fn last(&self) -> usize {
        self.first + self.lambdas.len() - 1
    }

    pub fn lambda(&self, n: usize) -> f64 {
        self.lambdas[n - self.first]
    }

    pub fn eta(&self, n: usize) -> f64 {
        self.etas[n - self.first]
    }

    /// Restriction to indices r..=s.
    pub fn truncate(&self, s: usize) -> ApproxSpectrum {
        let k = s + 1 - self.first;
        ApproxSpectrum { first: self.first, lambdas: self.lambdas[..k].to_vec(), etas: self.etas[..k].to_vec() }
    }
}

/// Kato-type lower bound for index `n`. Fails if ν ≤ λ*_s; the caller is
/// responsible for ν ≤ λ_{s+1}.
pub fn kato(approx: &ApproxSpectrum, nu: f64, n: usize) -> Result<f64> {
    let s = approx.last();
    if n < approx.first || n > s {
        return Err(Error::Config(format!("index {n} outside {}..={s}", approx.first)));
    }
    let ls = approx.lambda(s);
    if !(nu > ls) {
        return Err(Error::ShiftTooSmall { nu, lambda_s: ls });
    }
    let sum: f64 = (n..=s)
        .map(|i| {
            let (l, e) = (approx.lambda(i), approx.eta(i));
            e * e / (l * l * (nu - l))
        })
        .sum();
    let ln = approx.lambda(n);
    Ok(ln / (1.0 + nu * ln * sum))
}

/// Kato bounds for r..s, improved by repeating with ν set to the best lower
/// bound so far for λ_s, λ_{s−1}, …; the largest value per index is kept.
/// Fails if the initial ν does not exceed λ*_s.
pub fn kato_recursive(approx: &ApproxSpectrum, nu0: f64) -> Result<Vec<f64>> {
    kato_recursive_seeded(approx, nu0, None)
}

/// As [`kato_recursive`], but the "best lower bound so far" also considers
/// `extra[n - r]` (typically the Weinstein bounds).
pub fn kato_recursive_seeded(approx: &ApproxSpectrum, nu0: f64, extra: Option<&[f64]>) -> Result<Vec<f64>> {
    let ls = approx.lambda(approx.last());
    if !(nu0 > ls) {
        return Err(Error::ShiftTooSmall { nu: nu0, lambda_s: ls });
    }
    Ok(kato_descending(approx, nu0, extra).into_iter().map(|k| k.expect("top level covers every index")).collect())
}

/// Descending recursion over the top index t = s, s−1, …, r. Level t uses
/// ν = `nu0` for t = s and otherwise the best lower bound for λ_{t+1}. A
/// level whose ν does not exceed λ*_t is skipped and the descent goes on.
/// Indices never reached by a valid level get `None`.
pub fn kato_descending(approx: &ApproxSpectrum, nu0: f64, extra: Option<&[f64]>) -> Vec<Option<f64>> {
    let (r, s) = (approx.first, approx.last());
    let mut best: Vec<Option<f64>> = vec![None; s + 1 - r];
    for top in (r..=s).rev() {
        let nu = if top == s {
            nu0
        } else {
            let k = top + 1 - r;
            let e = extra.map_or(f64::NEG_INFINITY, |x| x[k]);
            best[k].map_or(e, |b| b.max(e))
        };
        if !(nu > approx.lambda(top)) {
            continue;
        }
        let sub = approx.truncate(top);
        for n in r..=top {
            let v = kato(&sub, nu, n).expect("shift checked above");
            let slot = &mut best[n - r];
            *slot = Some(slot.map_or(v, |b| b.max(v)));
        }
    }
    best
}

/// η² / |u*|_b²: bounds min_i (λ_i − λ*)² / λ_i from above.
pub fn distance_bound(_lambda: f64, eta: f64, b_norm: f64) -> Result<f64> {
    if !(b_norm > 0.0) {
        return Err(Error::ZeroBNorm);
    }
    Ok(eta * eta / (b_norm * b_norm))
}

/// A posteriori closeness test λ_{h,n} ≤ √(λ̲_n λ̲_{n+1}).
pub fn closeness_check(lower_n: f64, lower_next: f64, upper_n: f64) -> bool {
    upper_n * upper_n <= lower_n * lower_next
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum NuProvenance {
    #[serde(rename = "analytic")]
    Analytic,
    #[serde(rename = "homotopy")]
    Homotopy,
    /// ν = ℓ_{s+1} from the same computation (combination mode).
    #[serde(rename = "ell_s+1")]
    WeinsteinNext,
    #[serde(rename = "user")]
    User,
}

impl NuProvenance {
    /// Whether a ν of this origin is itself a certified lower bound.
    pub fn is_certified(self) -> bool {
        matches!(self, NuProvenance::Analytic | NuProvenance::Homotopy)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundEntry {
    pub n: usize,
    pub upper: f64,
    pub eta: f64,
    pub weinstein: f64,
    pub kato: Option<f64>,
    pub lower: f64,
    pub nu: Option<f64>,
    pub nu_provenance: Option<NuProvenance>,
    pub guaranteed: bool,
    pub closeness: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundsReport {
    pub entries: Vec<BoundEntry>,
    /// Discrete gaps λ_{h,n+1} − λ_{h,n} over all computed pairs.
    pub gaps: Vec<f64>,
}

impl BoundsReport {
    pub fn entry(&self, n: usize) -> Option<&BoundEntry> {
        self.entries.iter().find(|e| e.n == n)
    }

    /// Indices whose lower bound exceeds the upper bound (should be empty).
    pub fn violations(&self) -> Vec<usize> {
        self.entries.iter().filter(|e| e.lower > e.upper).map(|e| e.n).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.entries).expect("report serializes")
    }
}

fn gaps(l: &[f64]) -> Vec<f64> {
    l.windows(2).map(|w| w[1] - w[0]).collect()
}

/// Combination mode: `approx` covers r..s+1. The Kato recursion starts from
/// ν = ℓ_{s+1} and descends through [`kato_descending`], so a cluster at the
/// top of the range only costs the clustered indices their Kato bound. Each
/// final bound is max(ℓ_n, L_n). Not guaranteed, since ℓ_{s+1} relies on an
/// unverified closeness condition.
pub fn combine(approx: &ApproxSpectrum) -> Result<BoundsReport> {
    let (r, s1) = (approx.first, approx.last());
    if s1 <= r {
        return Err(Error::Config("combination mode needs at least the pairs r..s+1 with s >= r".into()));
    }
    let s = s1 - 1;
    let ell: Vec<f64> = (r..=s1).map(|n| weinstein(approx.lambda(n), approx.eta(n))).collect();
    let nu = ell[s1 - r];
    let core = approx.truncate(s);
    let kato_vals = kato_descending(&core, nu, Some(&ell));
    let lower: Vec<f64> = (r..=s).map(|n| kato_vals[n - r].map_or(ell[n - r], |k| ell[n - r].max(k))).collect();
    let entries = (r..=s)
        .map(|n| {
            let next = if n < s { lower[n + 1 - r] } else { nu };
            let kato = kato_vals[n - r];
            BoundEntry {
                n,
                upper: approx.lambda(n),
                eta: approx.eta(n),
                weinstein: ell[n - r],
                kato,
                lower: lower[n - r],
                nu: kato.map(|_| nu),
                nu_provenance: kato.map(|_| NuProvenance::WeinsteinNext),
                guaranteed: false,
                closeness: closeness_check(lower[n - r], next, approx.lambda(n)),
            }
        })
        .collect();
    Ok(BoundsReport { entries, gaps: gaps(&approx.lambdas) })
}

/// Fixed-shift mode with a supplied ν (below λ_{s+1}). Kato bounds are the
/// primary result; ℓ_n is used only where the a posteriori closeness test
/// passes with the Kato bounds (and ν for index s+1).
pub fn fixed_shift(approx: &ApproxSpectrum, nu: f64, provenance: NuProvenance) -> Result<BoundsReport> {
    let (r, s) = (approx.first, approx.last());
    let kv = kato_recursive(approx, nu)?;
    let ell: Vec<f64> = (r..=s).map(|n| weinstein(approx.lambda(n), approx.eta(n))).collect();
    let entries = (r..=s)
        .map(|n| {
            let k = kv[n - r];
            let next = if n < s { kv[n + 1 - r] } else { nu };
            let close = closeness_check(k, next, approx.lambda(n));
            BoundEntry {
                n,
                upper: approx.lambda(n),
                eta: approx.eta(n),
                weinstein: ell[n - r],
                kato: Some(k),
                lower: if close { k.max(ell[n - r]) } else { k },
                nu: Some(nu),
                nu_provenance: Some(provenance),
                guaranteed: provenance.is_certified(),
                closeness: close,
            }
        })
        .collect();
    Ok(BoundsReport { entries, gaps: gaps(&approx.lambdas) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec(first: usize, l: &[f64], e: &[f64]) -> ApproxSpectrum {
        ApproxSpectrum::new(first, l.to_vec(), e.to_vec()).unwrap()
    }

    #[test]
    fn weinstein_examples() {
        assert_eq!(weinstein(5.0, 0.0), 5.0);
        assert_eq!(weinstein(4.0, 3.0), 1.0);
        // Naive form for comparison where it is accurate.
        let naive = |l: f64, e: f64| 0.25 * (-e + (e * e + 4.0 * l).sqrt()).powi(2);
        for (l, e) in [(2.0, 0.1), (19.7, 0.8), (1.0, 5.0)] {
            assert!((weinstein(l, e) - naive(l, e)).abs() < 1e-12 * l);
        }
        // Large η: the naive form loses everything; the stable one keeps λ²/η².
        let w = weinstein(1.0, 1e9);
        assert!((w * 1e18 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn kato_examples() {
        assert!((kato(&spec(1, &[1.0], &[1.0]), 2.0, 1).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        let z = spec(1, &[1.0, 2.0, 3.0], &[0.0; 3]);
        for n in 1..=3 {
            assert_eq!(kato(&z, 4.0, n).unwrap(), z.lambda(n));
        }
        assert!(matches!(kato(&z, 3.0, 1), Err(Error::ShiftTooSmall { .. })));
    }

    #[test]
    fn recursion_with_single_index_is_one_call() {
        let a = spec(3, &[2.5], &[0.3]);
        assert_eq!(kato_recursive(&a, 4.0).unwrap(), vec![kato(&a, 4.0, 3).unwrap()]);
    }

    #[test]
    fn recursion_is_a_fixed_point_without_residual() {
        let a = spec(1, &[1.0, 2.0, 5.0], &[0.0; 3]);
        assert_eq!(kato_recursive(&a, 6.0).unwrap(), vec![1.0, 2.0, 5.0]);
    }

    #[test]
    fn recursion_never_worsens_a_bound() {
        let a = spec(1, &[1.0, 1.5, 4.0, 4.2], &[0.05, 0.1, 0.2, 0.1]);
        let once: Vec<f64> = (1..=4).map(|n| kato(&a, 9.0, n).unwrap()).collect();
        let rec = kato_recursive(&a, 9.0).unwrap();
        for (x, y) in rec.iter().zip(&once) {
            assert!(x >= y);
        }
        assert!(rec[0] > once[0]);
    }

    #[test]
    fn distance_bound_examples() {
        assert_eq!(distance_bound(3.0, 0.5, 1.0).unwrap(), 0.25);
        assert_eq!(distance_bound(3.0, 0.0, 1.0).unwrap(), 0.0);
        assert!(matches!(distance_bound(3.0, 0.5, 0.0), Err(Error::ZeroBNorm)));
    }

    #[test]
    fn closeness_examples() {
        assert!(closeness_check(2.0, 2.0, 2.0));
        assert!(!closeness_check(1.0, 3.0, 2.0));
    }

    #[test]
    fn combine_without_residuals_is_exact() {
        let a = spec(1, &[1.0, 2.0, 3.0], &[0.0; 3]);
        let rep = combine(&a).unwrap();
        assert_eq!(rep.entries.len(), 2);
        for e in &rep.entries {
            assert_eq!(e.lower, e.upper);
            assert!(!e.guaranteed);
        }
    }

    #[test]
    fn combine_on_coarse_data_has_no_kato() {
        // ℓ_{s+1} falls below λ*_s: the Kato branch is skipped.
        let a = spec(1, &[10.0, 12.0], &[0.5, 3.0]);
        let rep = combine(&a).unwrap();
        assert!(rep.entries[0].kato.is_none());
        assert!(rep.entries[0].nu.is_none());
        assert_eq!(rep.entries[0].lower, rep.entries[0].weinstein);
    }

    #[test]
    fn combine_skips_a_cluster_at_the_top() {
        // ℓ₃ < λ*₂, so level 2 fails; level 1 runs with ν = ℓ₂.
        let a = spec(1, &[1.0, 3.0, 3.001], &[0.01, 0.01, 0.05]);
        let rep = combine(&a).unwrap();
        let (e1, e2) = (&rep.entries[0], &rep.entries[1]);
        assert!(e2.kato.is_none() && e2.lower == e2.weinstein);
        let expect = kato(&a.truncate(1), weinstein(3.0, 0.01), 1).unwrap();
        assert_eq!(e1.kato, Some(expect));
        assert_eq!(e1.lower, expect.max(e1.weinstein));
        assert!(e1.kato.unwrap() > e1.weinstein);
    }

    #[test]
    fn descending_recursion_matches_plain_recursion_without_failures() {
        let a = spec(1, &[1.0, 1.5, 4.0, 4.2], &[0.05, 0.1, 0.2, 0.1]);
        let d: Vec<f64> = kato_descending(&a, 9.0, None).into_iter().map(Option::unwrap).collect();
        assert_eq!(d, kato_recursive(&a, 9.0).unwrap());
        // Without seeds, a failed top level leaves nothing to descend with.
        assert!(kato_descending(&a, 4.1, None).iter().all(Option::is_none));
        assert!(matches!(kato_recursive(&a, 4.1), Err(Error::ShiftTooSmall { .. })));
    }

    #[test]
    fn combine_prefers_kato_when_resolved() {
        let a = spec(1, &[19.8, 49.5, 49.6, 79.3], &[0.2, 0.5, 0.5, 0.8]);
        let rep = combine(&a).unwrap();
        for e in &rep.entries {
            assert!(e.kato.unwrap() > e.weinstein, "n={}", e.n);
            assert_eq!(e.lower, e.kato.unwrap());
        }
        assert_eq!(rep.violations(), Vec::<usize>::new());
    }

    #[test]
    fn fixed_shift_flags_and_errors() {
        let a = spec(1, &[1.2, 2.0], &[0.01, 0.02]);
        let rep = fixed_shift(&a, 2.5, NuProvenance::Homotopy).unwrap();
        assert!(rep.entries.iter().all(|e| e.guaranteed && e.kato.is_some()));
        let rep = fixed_shift(&a, 2.5, NuProvenance::User).unwrap();
        assert!(rep.entries.iter().all(|e| !e.guaranteed));
        assert!(fixed_shift(&a, 1.9, NuProvenance::Analytic).is_err());
    }

    #[test]
    fn report_json_has_the_documented_fields() {
        let rep = combine(&spec(1, &[1.0, 2.0], &[0.1, 0.1])).unwrap();
        let v: serde_json::Value = serde_json::from_str(&rep.to_json()).unwrap();
        let obj = v[0].as_object().unwrap();
        for key in ["n", "upper", "eta", "weinstein", "kato", "lower", "nu", "nu_provenance", "guaranteed", "closeness"] {
            assert!(obj.contains_key(key), "{key}");
        }
    }

    #[test]
    fn asymptotic_orders() {
        // (λ − ℓ)/η → √λ and (λ − L)/η² → ν / (ν − λ) as η → 0.
        let (l, nu) = (3.0, 5.0);
        for eta in [1e-3, 1e-4, 1e-5] {
            let w = weinstein(l, eta);
            assert!(((l - w) / eta - l.sqrt()).abs() < 2.0 * eta);
            let k = kato(&spec(1, &[l], &[eta]), nu, 1).unwrap();
            let lim = nu / (nu - l);
            assert!(((l - k) / (eta * eta) - lim).abs() < 1e-3 * lim);
        }
    }

    proptest! {
        #[test]
        fn weinstein_is_monotone(l in 0.1f64..100.0, e in 0.0f64..50.0) {
            let h = 1e-6 * (1.0 + e);
            let w = weinstein(l, e);
            prop_assert!(w <= l && w > 0.0);
            prop_assert!(weinstein(l, e + h) < w);
            prop_assert!(weinstein(l * (1.0 + 1e-6), e) >= w);
        }

        #[test]
        fn kato_is_below_lambda(l in proptest::collection::vec(0.1f64..10.0, 1..6), gap in 0.01f64..5.0, e in proptest::collection::vec(0.0f64..2.0, 6)) {
            let mut l = l;
            l.sort_by(f64::total_cmp);
            let n = l.len();
            let a = ApproxSpectrum::new(1, l.clone(), e[..n].to_vec()).unwrap();
            let nu = l[n - 1] + gap;
            for (k, v) in kato_recursive(&a, nu).unwrap().iter().enumerate() {
                prop_assert!(*v <= l[k] && *v > 0.0);
            }
        }
    }
}
