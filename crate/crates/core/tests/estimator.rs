mod common;

use std::f64::consts::PI;

use common::{mixed_spec, pairs, reference_residual_norm, square_mesh};
use eigbounds::assembly::{build_space, interpolate};
use eigbounds::estimator::{
    element_terms, eta, eta_full, eta_simplified, indicators_csv, local_indicators, poincare_or_reaction, residual_at, residual_fields, trace_constants,
    ElementClass, ElementResidual, EtaPath, Residuals,
};
use eigbounds::flux::{reconstruct, FluxField, RtSpace};
use eigbounds::mesh::{BoundaryTag, Mesh};
use eigbounds::problem::Coefficients;
use eigbounds::{Ext, ProblemSpec};
use proptest::prelude::*;

const LAMBDA1_LOWER: f64 = 97.0 / 81.0;

fn clean(n: usize) -> Residuals {
    Residuals { elements: vec![], r_total: 0.0, g_total: 0.0, r_scale: 1.0, g_scale: 0.0 }.with(n)
}

trait With {
    fn with(self, n: usize) -> Self;
}

impl With for Residuals {
    fn with(mut self, n: usize) -> Self {
        self.elements = (0..n).map(|k| ElementResidual { flux: 0.1 * (k + 1) as f64, r_norm: 0.0, r_integral: 0.0, edges: vec![] }).collect();
        self
    }
}

#[test]
fn zero_flux_on_a_linear_function() {
    // q = 0, u = x, A = I, c = 0, λ = 1, β₁ = 1: F = (1, 0), r = −x.
    let spec = ProblemSpec::unit_square();
    let mesh = Mesh::unit_square(3);
    let dofs = build_space(&mesh, &spec).unwrap();
    let u = interpolate(&mesh, &dofs, |x| x[0]);
    let q = FluxField::zeros(RtSpace::new(&mesh, 1));
    for t in [0, 7, 17] {
        let ef = q.element(&mesh, t).unwrap();
        for b in [[0.2, 0.3, 0.5], [1.0 / 3.0; 3]] {
            let (f, r) = residual_at(&mesh, &spec, &dofs, &u, 1.0, &ef, t, b);
            let x = mesh.geom(t).point(b);
            assert!((f[0] - 1.0).abs() < 1e-14 && f[1].abs() < 1e-14);
            assert!((r + x[0]).abs() < 1e-14);
        }
    }
    // ‖F‖² over Ω is the area.
    let res = residual_fields(&mesh, &spec, &dofs, &u, 1.0, &q).unwrap();
    let f2: f64 = res.elements.iter().map(|e| e.flux * e.flux).sum();
    assert!((f2 - 1.0).abs() < 1e-13);
}

#[test]
fn vanishing_residuals_leave_only_the_flux_term() {
    let spec = mixed_spec();
    let mesh = square_mesh(&spec, 3);
    let res = clean(mesh.num_triangles());
    for t in element_terms(&mesh, &spec, &res, None) {
        assert_eq!(t.m, Ext::Finite(t.f));
    }
}

#[test]
fn reaction_free_dirichlet_problem_with_unbalanced_residual() {
    let spec = ProblemSpec::unit_square();
    let mesh = Mesh::unit_square(2);
    let mut res = clean(mesh.num_triangles());
    for e in &mut res.elements {
        e.r_norm = 0.01;
        e.r_integral = 0.004;
    }
    let terms = element_terms(&mesh, &spec, &res, Some(LAMBDA1_LOWER));
    for t in &terms {
        assert_eq!((t.r1, t.r2), (Ext::Infinite, Ext::Infinite));
        assert_eq!(t.r3, Ext::Finite(0.01));
        assert_eq!(t.m, Ext::Infinite);
        assert_eq!(t.class, ElementClass::PlusPlus);
        assert_eq!(t.y, Ext::Finite(t.f));
        assert_eq!(t.r, t.r3);
    }
    let out = eta(&terms, Some(LAMBDA1_LOWER)).unwrap();
    let f2: f64 = terms.iter().map(|t| t.f * t.f).sum();
    let r2: f64 = terms.len() as f64 * 1e-4;
    assert!((out.eta - (f2.sqrt() + r2.sqrt() / LAMBDA1_LOWER.sqrt())).abs() < 1e-14);
    assert_eq!(out.classes, [terms.len(), 0, 0]);
    // Without λ̲₁ nothing finite is available.
    let terms = element_terms(&mesh, &spec, &res, None);
    assert!(matches!(eta(&terms, None), Err(eigbounds::Error::EstimatorUnavailable)));
}

#[test]
fn mean_free_residual_uses_the_poincare_branch() {
    let spec = ProblemSpec::unit_square();
    let mesh = Mesh::unit_square(2);
    let mut res = clean(mesh.num_triangles());
    res.elements[0].r_norm = 0.5;
    let t = &element_terms(&mesh, &spec, &res, None)[0];
    let h = mesh.geom(0).h;
    assert_eq!(t.r2, Ext::Finite(h / PI * 0.5));
    assert_eq!(t.m, Ext::Finite(t.f + h / PI * 0.5));
}

#[test]
fn poincare_constant_on_equilateral_triangle() {
    // Unit edges, A = I, c = 1.
    assert!((poincare_or_reaction(1.0, 1.0, 1.0) - 1.0 / PI).abs() < 1e-16);
    assert_eq!(poincare_or_reaction(10.0, 1.0, 1.0), 1.0);
    let area = 3f64.sqrt() / 4.0;
    let (c, cbar) = trace_constants(1.0, area, 1.0, 1.0, 1.0);
    // C² = |γ|/(2|K|)·(4 + 4)^{1/2}; C̄² = |γ|/(2|K|)·M̄·(2 + 2M̄).
    let k = 1.0 / (2.0 * area);
    assert!((c.finite().unwrap().powi(2) - k * 8f64.sqrt()).abs() < 1e-14);
    let m = 1.0 / PI;
    assert!((cbar.finite().unwrap().powi(2) - k * m * (2.0 + 2.0 * m)).abs() < 1e-14);
    assert_eq!(trace_constants(1.0, area, 1.0, 1.0, 0.0).0, Ext::Infinite);
}

#[test]
fn edge_terms_follow_their_case_split() {
    let spec = mixed_spec().with_coefficients(Coefficients { reaction: 0.0, ..Default::default() });
    let mesh = square_mesh(&spec, 2);
    let mut res = clean(mesh.num_triangles());
    for (t, e) in res.elements.iter_mut().enumerate() {
        for &g in &mesh.tri_edges[t] {
            if let Some(BoundaryTag::Neumann(_)) = mesh.edges[g].tag {
                e.edges.push(eigbounds::estimator::EdgeResidual { edge: g, g_norm: 0.2, g_integral: 0.1 });
            }
        }
    }
    let terms = element_terms(&mesh, &spec, &res, None);
    let mut seen = [false; 3];
    for t in &terms {
        for e in &t.edges {
            let Some(BoundaryTag::Neumann(seg)) = mesh.edges[e.edge].tag else { panic!() };
            seen[seg as usize - 1] = true;
            // c = 0 and ∫g ≠ 0: the trace branch is unavailable.
            assert_eq!(e.g2, Ext::Infinite);
            match seg {
                1 => assert_eq!((e.g1, e.g3), (Ext::Finite(0.2), Ext::Infinite)),
                2 => {
                    assert!((e.g1.finite().unwrap() - 0.2 / 2f64.sqrt()).abs() < 1e-15);
                    assert!((e.g3.finite().unwrap() - 0.2 / 0.5f64.sqrt()).abs() < 1e-15);
                }
                3 => assert_eq!((e.g1, e.g3), (Ext::Infinite, Ext::Infinite)),
                _ => unreachable!(),
            }
        }
    }
    assert_eq!(seen, [true; 3]);
}

#[test]
fn no_lower_bound_means_first_branch() {
    let spec = mixed_spec();
    let mesh = square_mesh(&spec, 3);
    let terms = element_terms(&mesh, &spec, &clean(mesh.num_triangles()), None);
    let out = eta(&terms, None).unwrap();
    let m2: f64 = terms.iter().map(|t| t.m.finite().unwrap().powi(2)).sum();
    assert_eq!(out.eta, m2.sqrt());
    assert_eq!(out.eta_b, Ext::Infinite);
}

#[test]
fn clean_reconstruction_takes_the_simplified_path() {
    let spec = ProblemSpec::unit_square();
    let mesh = Mesh::unit_square(8);
    let (dofs, ps) = pairs(&mesh, &spec, 1);
    let (lambda, u) = &ps[0];
    let q = reconstruct(&mesh, &spec, &dofs, *lambda, u).unwrap();
    let (out, res) = eta_simplified(&mesh, &spec, &dofs, u, *lambda, &q, None).unwrap();
    assert_eq!(out.path, EtaPath::Simplified);
    let f2: f64 = res.elements.iter().map(|e| e.flux * e.flux).sum();
    assert_eq!(out.eta, f2.sqrt());

    // One perturbed dof breaks equilibration: the guarded bound applies.
    let mut qp = q.clone();
    let k = qp.coeffs.len() / 2;
    qp.coeffs[k] += 1e-3;
    let (out_p, res_p) = eta_simplified(&mesh, &spec, &dofs, u, *lambda, &qp, Some(LAMBDA1_LOWER)).unwrap();
    assert_eq!(out_p.path, EtaPath::Safeguarded);
    assert!(res_p.relative_r() > 1e-8);
    assert!(out_p.eta > out.eta);
    assert!(eta_simplified(&mesh, &spec, &dofs, u, *lambda, &qp, None).is_err());
}

#[test]
fn zero_function_has_zero_estimate() {
    let spec = ProblemSpec::unit_square();
    let mesh = Mesh::unit_square(4);
    let dofs = build_space(&mesh, &spec).unwrap();
    let u = vec![0.0; dofs.n_total()];
    let q = reconstruct(&mesh, &spec, &dofs, 20.0, &u).unwrap();
    let (out, _) = eta_simplified(&mesh, &spec, &dofs, &u, 20.0, &q, None).unwrap();
    assert_eq!(out.eta, 0.0);
}

#[test]
fn indicators_take_the_largest_flux_term() {
    assert_eq!(local_indicators(&[vec![0.1, 0.4]]), vec![0.1, 0.4]);
    assert_eq!(local_indicators(&[vec![0.1, 0.5], vec![0.3, 0.2]]), vec![0.3, 0.5]);
    let eq = local_indicators(&[vec![0.2; 5], vec![0.2; 5]]);
    assert!(eq.iter().all(|&x| x == 0.2));
}

#[test]
fn indicator_csv_has_a_row_per_element() {
    let spec = mixed_spec();
    let mesh = square_mesh(&spec, 2);
    let terms = element_terms(&mesh, &spec, &clean(mesh.num_triangles()), None);
    let ind: Vec<f64> = terms.iter().map(|t| t.f).collect();
    let csv = indicators_csv(&terms, &ind);
    assert_eq!(csv.lines().count(), mesh.num_triangles() + 1);
    assert!(csv.starts_with("element_id,F_K,M_K,class,indicator\n0,"));
}

#[test]
fn estimate_bounds_the_reference_residual_norm() {
    let spec = ProblemSpec::unit_square();
    for n in [4, 8] {
        let mesh = Mesh::unit_square(n);
        let (dofs, ps) = pairs(&mesh, &spec, 3);
        for (lambda, u) in &ps {
            let q = reconstruct(&mesh, &spec, &dofs, *lambda, u).unwrap();
            let (out, _) = eta_simplified(&mesh, &spec, &dofs, u, *lambda, &q, None).unwrap();
            let w = reference_residual_norm(&mesh, &spec, *lambda, u, 2);
            assert!(out.eta >= 0.999 * w, "n={n}: η={} ‖w‖={w}", out.eta);
            assert!(out.eta <= 10.0 * w);
        }
    }
}

#[test]
fn full_estimate_bounds_the_reference_on_a_robin_problem() {
    let spec = mixed_spec();
    let mesh = square_mesh(&spec, 6);
    let (dofs, ps) = pairs(&mesh, &spec, 2);
    for (lambda, u) in &ps {
        let q = reconstruct(&mesh, &spec, &dofs, *lambda, u).unwrap();
        let res = residual_fields(&mesh, &spec, &dofs, u, *lambda, &q).unwrap();
        let full = eta_full(&mesh, &spec, &res, None).unwrap();
        let w = reference_residual_norm(&mesh, &spec, *lambda, u, 2);
        assert!(full.eta >= 0.999 * w, "η={} ‖w‖={w}", full.eta);
        assert!(full.eta <= full.eta_a.finite().unwrap());
    }
}

#[test]
fn distance_to_the_analytic_spectrum_is_bounded() {
    let spec = ProblemSpec::unit_square();
    let mesh = Mesh::unit_square(8);
    let (dofs, ps) = pairs(&mesh, &spec, 4);
    let mut exact: Vec<f64> = (1..8).flat_map(|i| (1..8).map(move |j| PI * PI * (i * i + j * j) as f64)).collect();
    exact.sort_by(f64::total_cmp);
    for (lambda, u) in &ps {
        let q = reconstruct(&mesh, &spec, &dofs, *lambda, u).unwrap();
        let (out, _) = eta_simplified(&mesh, &spec, &dofs, u, *lambda, &q, None).unwrap();
        let d = exact.iter().map(|l| (l - lambda).powi(2) / l).fold(f64::INFINITY, f64::min);
        assert!(d <= out.eta * out.eta);
    }
}

proptest! {
    #[test]
    fn larger_residuals_never_decrease_eta(
        f in prop::collection::vec(0.0..1.0f64, 8),
        r in prop::collection::vec(0.0..1.0f64, 8),
        g in prop::collection::vec(0.0..1.0f64, 8),
        bump in 1.0..3.0f64,
        mean_free in any::<bool>(),
    ) {
        let spec = mixed_spec();
        let mesh = square_mesh(&spec, 2);
        let build = |s: f64| {
            let mut res = clean(mesh.num_triangles());
            for (t, e) in res.elements.iter_mut().enumerate() {
                e.flux = f[t];
                e.r_norm = r[t] * s;
                e.r_integral = if mean_free { 0.0 } else { 0.3 * r[t] * s };
                for &ed in &mesh.tri_edges[t] {
                    if let Some(BoundaryTag::Neumann(_)) = mesh.edges[ed].tag {
                        e.edges.push(eigbounds::estimator::EdgeResidual { edge: ed, g_norm: g[t] * s, g_integral: 0.0 });
                    }
                }
            }
            res
        };
        for l in [None, Some(LAMBDA1_LOWER)] {
            let e1 = eta(&element_terms(&mesh, &spec, &build(1.0), l), l).unwrap();
            let e2 = eta(&element_terms(&mesh, &spec, &build(bump), l), l).unwrap();
            prop_assert!(e2.eta >= e1.eta * (1.0 - 1e-14));
            prop_assert!(e1.eta <= e1.eta_a.finite().unwrap_or(f64::INFINITY));
            prop_assert!(Ext::Finite(e1.eta) <= e1.eta_b);
        }
    }
}
