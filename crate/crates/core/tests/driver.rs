use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use eigbounds::bounds::NuProvenance;
use eigbounds::driver::{adapt, doerfler_mark, run_homotopy, AdaptiveConfig, HomotopyPlan, ShiftMode};
use eigbounds::eigensolve::EigenOptions;
use eigbounds::mesh::read_mesh;
use eigbounds::{Error, ProblemSpec};
use proptest::prelude::*;

fn problems_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../problems")
}

fn square(max_area: f64) -> ProblemSpec {
    ProblemSpec::unit_square().with_max_area(max_area)
}

#[test]
fn adaptive_square_encloses_first_eigenvalue_along_the_trace() {
    let cfg = AdaptiveConfig { max_dofs: 4000, ..Default::default() };
    let trace = adapt(&square(0.02), &cfg).unwrap();
    let exact = 2.0 * PI * PI;
    assert!(trace.iterations.len() >= 4);
    for it in &trace.iterations {
        let e = &it.report.entries[0];
        assert!(e.lower <= e.upper, "iteration {}", it.iter);
        assert!(e.lower <= exact && exact <= e.upper, "iteration {}: [{}, {}]", it.iter, e.lower, e.upper);
        assert!(!e.guaranteed, "combination mode is heuristic");
        assert_eq!(it.lambdas.len(), 2);
    }
    for w in trace.iterations.windows(2) {
        assert!(w[1].dofs > w[0].dofs);
    }
    assert!(trace.last().unwrap().dofs <= 4000);
    let width = |k: usize| {
        let e = &trace.iterations[k].report.entries[0];
        (e.upper - e.lower) / e.lower
    };
    assert!(width(trace.iterations.len() - 1) * 10.0 <= width(0));
}

#[test]
fn identical_runs_produce_identical_csv() {
    let cfg = AdaptiveConfig { s: 2, max_dofs: 1500, ..Default::default() };
    let a = adapt(&square(0.05), &cfg).unwrap().to_csv();
    let b = adapt(&square(0.05), &cfg).unwrap().to_csv();
    assert_eq!(a, b);
    let mut lines = a.lines();
    assert_eq!(lines.next(), Some("iter,dofs,n,upper,eta,weinstein,kato,lower,guaranteed"));
    for line in lines {
        assert_eq!(line.split(',').count(), 9, "{line}");
    }
}

#[test]
fn csv_has_one_row_per_iteration_and_index() {
    let cfg = AdaptiveConfig { r: 2, s: 3, max_dofs: 800, ..Default::default() };
    let trace = adapt(&square(0.05), &cfg).unwrap();
    let rows = trace.to_csv().lines().count() - 1;
    assert_eq!(rows, 2 * trace.iterations.len());
    let json: serde_json::Value = serde_json::from_str(&trace.to_json()).unwrap();
    assert_eq!(json["iterations"].as_array().unwrap().len(), trace.iterations.len());
}

#[test]
fn uniform_mode_marks_every_element() {
    let cfg = AdaptiveConfig { uniform: true, max_dofs: 2000, snapshots: true, ..Default::default() };
    let trace = adapt(&square(0.05), &cfg).unwrap();
    let n = trace.iterations.len();
    for (k, it) in trace.iterations.iter().enumerate() {
        if k + 1 < n {
            assert_eq!(it.marked, it.mesh.triangles);
            assert_eq!(trace.iterations[k + 1].mesh.triangles, 2 * it.mesh.triangles);
        }
        let mesh = read_mesh(it.mesh_text.as_deref().unwrap()).unwrap();
        assert_eq!(mesh.num_triangles(), it.mesh.triangles);
    }
}

#[test]
fn certified_shift_yields_guaranteed_bounds() {
    // 5π² is the second and third eigenvalue of the unit square.
    let nu = 5.0 * PI * PI;
    let cfg = AdaptiveConfig {
        max_dofs: 1500,
        mode: ShiftMode::Fixed { nu, provenance: NuProvenance::Analytic },
        ..Default::default()
    };
    let trace = adapt(&square(0.02), &cfg).unwrap();
    let last = trace.last().unwrap();
    assert!(last.kato_note.is_none());
    let e = &last.report.entries[0];
    assert!(e.guaranteed);
    assert_eq!(e.nu, Some(nu));
    assert_eq!(last.lambdas.len(), 1);
    assert!(e.lower <= 2.0 * PI * PI && 2.0 * PI * PI <= e.upper);
}

#[test]
fn shift_below_discrete_eigenvalue_falls_back_to_weinstein() {
    let cfg = AdaptiveConfig {
        max_dofs: 300,
        mode: ShiftMode::Fixed { nu: 15.0, provenance: NuProvenance::Analytic },
        ..Default::default()
    };
    let trace = adapt(&square(0.05), &cfg).unwrap();
    for it in &trace.iterations {
        assert!(it.kato_note.is_some());
        let e = &it.report.entries[0];
        assert!(e.kato.is_none() && !e.guaranteed);
        assert_eq!(e.lower, e.weinstein);
    }
}

#[test]
fn invalid_configuration_is_rejected_before_solving() {
    let cfg = AdaptiveConfig { theta: 0.0, ..Default::default() };
    let err = adapt(&square(0.05), &cfg).unwrap_err();
    assert!(err.trace.iterations.is_empty());
    assert!(err.error.is_config());
}

#[test]
fn shipped_plan_parses_with_analytic_base() {
    let plan = HomotopyPlan::from_file(&problems_dir().join("dumbbell_plan.toml")).unwrap();
    assert_eq!(plan.stages.len(), 4);
    assert_eq!(plan.initial_nu(), 16.1111);
    let l = plan.analytic(21);
    assert!((l[0] - 97.0 / 81.0).abs() < 1e-14);
    assert!((l[20] - 145.0 / 9.0).abs() < 1e-13);
    assert!(plan.initial_nu() < l[20]);
    assert_eq!(plan.lambda1_lower, Some(l[0]));
    let s: Vec<usize> = plan.stages.iter().map(|st| st.config.s).collect();
    assert_eq!(s, vec![20, 17, 14, 12]);
    for st in &plan.stages {
        assert_eq!(st.config.lambda1_lower, Some(l[0]));
    }
}

#[test]
fn analytic_column_to_five_digits() {
    let plan = HomotopyPlan::from_file(&problems_dir().join("dumbbell_plan.toml")).unwrap();
    let l = plan.analytic(21);
    assert_eq!(format!("{:.5}", l[0]), "1.19753");
    assert_eq!(format!("{:.4}", l[19]), "13.9383");
    assert_eq!(format!("{:.4}", l[20]), "16.1111");
}

fn write_problem(dir: &Path, name: &str, vertices: &[[f64; 2]]) {
    let verts: Vec<String> = vertices.iter().map(|v| format!("[{:?}, {:?}]", v[0], v[1])).collect();
    let segs: Vec<String> = (0..vertices.len()).map(|i| i.to_string()).collect();
    let text = format!(
        "degree = 1\nvertices = [{}]\n\n[[boundary]]\nsegments = [{}]\nkind = \"dirichlet\"\n\n[mesh]\nmax_area = 0.02\n",
        verts.join(", "),
        segs.join(", ")
    );
    std::fs::write(dir.join(name), text).unwrap();
}

const SQUARE: [[f64; 2]; 4] = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
const NOTCHED: [[f64; 2]; 7] = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.55, 1.0], [0.5, 0.9], [0.45, 1.0], [0.0, 1.0]];

#[test]
fn plan_rejects_stage_outside_previous_domain() {
    let dir = tempfile::tempdir().unwrap();
    write_problem(dir.path(), "base.toml", &SQUARE);
    write_problem(dir.path(), "big.toml", &[[0.0, 0.0], [1.2, 0.0], [1.2, 1.0], [0.0, 1.0]]);
    let text = "[analytic]\nproblem = \"base.toml\"\nnu_index = 3\n\n[[stage]]\nproblem = \"big.toml\"\ns = 1\n";
    match HomotopyPlan::from_toml_str(text, dir.path()) {
        Err(Error::Homotopy { stage: 1, message }) => assert!(message.contains("outside"), "{message}"),
        other => panic!("expected nesting failure, got {other:?}"),
    }
}

#[test]
fn plan_rejects_inconsistent_indices() {
    let dir = tempfile::tempdir().unwrap();
    write_problem(dir.path(), "base.toml", &SQUARE);
    write_problem(dir.path(), "notch.toml", &NOTCHED);
    let cases = [
        // s + 1 must not exceed the index the shift bounds.
        "[analytic]\nproblem = \"base.toml\"\nnu_index = 3\n\n[[stage]]\nproblem = \"notch.toml\"\ns = 3\n",
        // Intermediate stages need a transfer index.
        "[analytic]\nproblem = \"base.toml\"\nnu_index = 4\n\n[[stage]]\nproblem = \"base.toml\"\ns = 2\n\n[[stage]]\nproblem = \"notch.toml\"\ns = 1\n",
        "[analytic]\nproblem = \"base.toml\"\nnu_index = 4\n\n[[stage]]\nproblem = \"base.toml\"\ns = 2\ntransfer = 3\n",
        // ν above the analytic eigenvalue it stands in for.
        "[analytic]\nproblem = \"base.toml\"\nnu_index = 2\nnu = 50.0\n",
        "[analytic]\nproblem = \"notch.toml\"\nnu_index = 2\n",
        "[analytic]\nproblem = \"base.toml\"\nnu_index = 2\nbogus = 1\n",
    ];
    for text in cases {
        let err = HomotopyPlan::from_toml_str(text, dir.path()).unwrap_err();
        assert!(err.is_config() || matches!(err, Error::Homotopy { .. }), "{text}: {err}");
    }
}

#[test]
fn analytic_only_plan_reproduces_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::copy(problems_dir().join("rectangle.toml"), dir.path().join("rect.toml")).unwrap();
    let plan = HomotopyPlan::from_toml_str("[analytic]\nproblem = \"rect.toml\"\nnu_index = 21\n", dir.path()).unwrap();
    let res = run_homotopy(&plan, &EigenOptions::default()).unwrap();
    assert!(res.stages.is_empty());
    assert!(res.final_report().is_none());
    assert_eq!(res.analytic.len(), 21);
    // λ = 16i²/81 + j², enumerated independently.
    let mut reference: Vec<f64> = (1..=8).flat_map(|i| (1..=8).map(move |j| 16.0 * (i * i) as f64 / 81.0 + (j * j) as f64)).collect();
    reference.sort_by(f64::total_cmp);
    for (a, b) in res.analytic.iter().zip(&reference) {
        assert!((a - b).abs() <= 1e-12 * b, "{a} vs {b}");
    }
    assert_eq!(res.initial_nu, res.analytic[20]);
}

#[test]
fn two_stage_chain_keeps_enclosures_and_transfers_sound_shifts() {
    let dir = tempfile::tempdir().unwrap();
    write_problem(dir.path(), "base.toml", &SQUARE);
    write_problem(dir.path(), "notch.toml", &NOTCHED);
    // ν = λ₄ = 8π² clears the double eigenvalue 5π² of the square.
    let text = "[analytic]\nproblem = \"base.toml\"\nnu_index = 4\n\n\
                [[stage]]\nproblem = \"base.toml\"\ns = 3\ntransfer = 2\nmax_dofs = 1500\n\n\
                [[stage]]\nproblem = \"notch.toml\"\ns = 1\nmax_dofs = 1500\n";
    let plan = HomotopyPlan::from_toml_str(text, dir.path()).unwrap();
    let res = run_homotopy(&plan, &EigenOptions::default()).unwrap();
    assert_eq!(res.stages.len(), 2);
    let (s1, s2) = (&res.stages[0], &res.stages[1]);
    assert!((s1.nu - 8.0 * PI * PI).abs() < 1e-12);
    assert_eq!(s1.nu_provenance, NuProvenance::Analytic);
    assert_eq!(s2.nu_provenance, NuProvenance::Homotopy);
    // The transferred shift is a lower bound for λ₂ of the square.
    let handed = s1.transferred.unwrap();
    assert_eq!(s2.nu, handed);
    assert!(handed <= 5.0 * PI * PI);
    for st in &res.stages {
        for it in &st.trace.iterations {
            for e in &it.report.entries {
                assert!(e.lower <= e.upper);
            }
        }
    }
    let fin = res.final_report().unwrap();
    assert!(fin.entries.iter().all(|e| e.guaranteed));
    // Domain monotonicity: the notched square's λ₁ is above the square's.
    assert!(fin.entries[0].upper >= 2.0 * PI * PI);
}

proptest! {
    #[test]
    fn bulk_marking_is_minimal_and_sufficient(ind in prop::collection::vec(0.0f64..10.0, 1..60), theta in 0.05f64..1.0) {
        let marked = doerfler_mark(&ind, theta);
        let total: f64 = ind.iter().map(|x| x * x).sum();
        let got: f64 = marked.iter().map(|&k| ind[k] * ind[k]).sum();
        if total > 0.0 {
            prop_assert!(got >= theta * theta * total * (1.0 - 1e-12));
            // Dropping the last marked element must fall short.
            let last = ind[*marked.last().unwrap()];
            prop_assert!(got - last * last < theta * theta * total);
            for w in marked.windows(2) {
                prop_assert!(ind[w[0]] >= ind[w[1]]);
            }
        } else {
            prop_assert!(marked.is_empty());
        }
    }
}
