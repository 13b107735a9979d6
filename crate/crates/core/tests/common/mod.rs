#![allow(dead_code)]

use eigbounds::assembly::{assemble_forms, build_space, DofMap};
use eigbounds::eigensolve::{solve_lowest, EigenOptions};
use eigbounds::mesh::{BoundaryTag, Mesh};
use eigbounds::problem::{Coefficients, SegmentKind};
use eigbounds::ProblemSpec;

/// Unit square: bottom Dirichlet, right Neumann (α=1), top Robin with
/// boundary weight (α=2, β₂=0.5), left homogeneous Neumann; reaction 1.
pub fn mixed_spec() -> ProblemSpec {
    ProblemSpec::unit_square()
        .with_segment(1, SegmentKind::Neumann { alpha: 1.0, beta2: 0.0 })
        .with_segment(2, SegmentKind::Neumann { alpha: 2.0, beta2: 0.5 })
        .with_segment(3, SegmentKind::Neumann { alpha: 0.0, beta2: 0.0 })
        .with_coefficients(Coefficients { diffusion: [[1.0, 0.0], [0.0, 1.0]], reaction: 1.0, weight: 1.0 })
}

/// Structured mesh of the unit square tagged after the segments of `spec`.
pub fn square_mesh(spec: &ProblemSpec, n: usize) -> Mesh {
    Mesh::rectangle_grid([0.0, 0.0], [1.0, 1.0], n, n, |s| match spec.segments[s] {
        SegmentKind::Dirichlet => BoundaryTag::Dirichlet,
        SegmentKind::Neumann { .. } => BoundaryTag::Neumann(s as u32),
    })
}

/// Lowest `m` discrete eigenpairs as (λ_h, full coefficient vector).
pub fn pairs(mesh: &Mesh, spec: &ProblemSpec, m: usize) -> (DofMap, Vec<(f64, Vec<f64>)>) {
    let dofs = build_space(mesh, spec).unwrap();
    let (a, b) = assemble_forms(mesh, spec, &dofs).unwrap();
    let sol = solve_lowest(&a, &b, m, &EigenOptions::default()).unwrap();
    let out = sol.values.iter().zip(&sol.vectors).map(|(l, v)| (*l, dofs.expand(v))).collect();
    (dofs, out)
}

/// One bisection of every element.
pub fn bisect_all(mesh: &Mesh) -> Mesh {
    let all: Vec<usize> = (0..mesh.num_triangles()).collect();
    eigbounds::mesh::bisect(mesh, &all)
}

/// Reference value of ‖w‖_a for a P1 pair (λ, u): the residual
/// representative is solved for in the P1 space of `mesh` refined by
/// `2 * levels` uniform bisections (h / 2^levels). Being a Galerkin
/// approximation, it never exceeds the exact norm.
pub fn reference_residual_norm(mesh: &Mesh, spec: &ProblemSpec, lambda: f64, u: &[f64], levels: usize) -> f64 {
    assert_eq!(spec.degree, 1);
    let mut fine = mesh.clone();
    let mut uf = u.to_vec();
    for _ in 0..2 * levels {
        fine = bisect_all(&fine);
        uf = eigbounds::assembly::prolongate_p1(&fine, &uf);
    }
    let dofs = build_space(&fine, spec).unwrap();
    let (a, b) = assemble_forms(&fine, spec, &dofs).unwrap();
    let ur = dofs.restrict(&uf);
    let au = a.apply(&ur);
    let bu = b.apply(&ur);
    let rhs: Vec<f64> = au.iter().zip(&bu).map(|(x, y)| x - lambda * y).collect();
    let factor = eigbounds::eigensolve::Factor::new(&a).unwrap();
    let mut cols = vec![rhs.clone()];
    factor.solve_columns(&mut cols);
    cols[0].iter().zip(&rhs).map(|(w, r)| w * r).sum::<f64>().max(0.0).sqrt()
}
