//! Conforming P_p space, evaluation of finite element functions, and
//! assembly of the stiffness form a(·,·) and mass form b(·,·).

use rayon::prelude::*;

use crate::fe::LagrangeBasis;
use crate::geometry::{Point, TriGeom};
use crate::mesh::{BoundaryTag, Mesh};
use crate::problem::{ProblemSpec, MAX_DEGREE};
use crate::quadrature::{LineRule, TriangleRule};
use crate::sparse::{SymmetricSparseOperator, TripletBuilder};
use crate::{Error, Result};

const NONE: usize = usize::MAX;

/// Global numbering of Lagrange degrees of freedom: vertices, then p-1 per
/// edge (ordered from the lower-index endpoint), then interior bubbles.
#[derive(Clone, Debug)]
pub struct DofMap {
    pub p: usize,
    pub basis: LagrangeBasis,
    n_total: usize,
    elem_dofs: Vec<usize>,
    dirichlet: Vec<bool>,
    free_index: Vec<usize>,
    free_to_global: Vec<usize>,
}

impl DofMap {
    pub fn n_total(&self) -> usize {
        self.n_total
    }

    pub fn n_free(&self) -> usize {
        self.free_to_global.len()
    }

    pub fn n_dirichlet(&self) -> usize {
        self.n_total - self.n_free()
    }

    pub fn local_len(&self) -> usize {
        self.basis.len()
    }

    pub fn element_dofs(&self, t: usize) -> &[usize] {
        let n = self.basis.len();
        &self.elem_dofs[t * n..(t + 1) * n]
    }

    pub fn is_dirichlet(&self, g: usize) -> bool {
        self.dirichlet[g]
    }

    pub fn free_of(&self, g: usize) -> Option<usize> {
        let f = self.free_index[g];
        (f != NONE).then_some(f)
    }

    pub fn global_of_free(&self) -> &[usize] {
        &self.free_to_global
    }

    /// Free-dof vector → full vector with zeros at Dirichlet dofs.
    pub fn expand(&self, free: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.n_total];
        for (f, &g) in self.free_to_global.iter().enumerate() {
            full[g] = free[f];
        }
        full
    }

    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.free_to_global.iter().map(|&g| full[g]).collect()
    }
}

pub fn build_space(mesh: &Mesh, spec: &ProblemSpec) -> Result<DofMap> {
    let p = spec.degree;
    if p < 1 {
        return Err(Error::Problem("polynomial degree must be at least 1".into()));
    }
    let basis = LagrangeBasis::new(p);
    let (nv, ne, nt) = (mesh.num_vertices(), mesh.num_edges(), mesh.num_triangles());
    let nb = basis.num_interior();
    let n_total = nv + (p - 1) * ne + nb * nt;
    let nloc = basis.len();
    let mut elem_dofs = vec![0usize; nt * nloc];
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let dofs = &mut elem_dofs[t * nloc..(t + 1) * nloc];
        let mut interior = 0;
        for (i, m) in basis.nodes.iter().enumerate() {
            let zeros = m.iter().filter(|&&x| x == 0).count();
            dofs[i] = match zeros {
                2 => tri[m.iter().position(|&x| x != 0).unwrap()],
                1 => {
                    let e = m.iter().position(|&x| x == 0).unwrap();
                    let (a, b) = ((e + 1) % 3, (e + 2) % 3);
                    let k = if tri[a] < tri[b] { m[b] } else { m[a] };
                    nv + mesh.tri_edges[t][e] * (p - 1) + (k - 1)
                }
                _ => {
                    interior += 1;
                    nv + ne * (p - 1) + t * nb + interior - 1
                }
            };
        }
    }
    let mut dirichlet = vec![false; n_total];
    for (e, edge) in mesh.edges.iter().enumerate() {
        if edge.tag == Some(BoundaryTag::Dirichlet) {
            dirichlet[edge.v[0]] = true;
            dirichlet[edge.v[1]] = true;
            for k in 0..p - 1 {
                dirichlet[nv + e * (p - 1) + k] = true;
            }
        }
    }
    let mut free_index = vec![NONE; n_total];
    let mut free_to_global = Vec::with_capacity(n_total);
    for g in 0..n_total {
        if !dirichlet[g] {
            free_index[g] = free_to_global.len();
            free_to_global.push(g);
        }
    }
    Ok(DofMap { p, basis, n_total, elem_dofs, dirichlet, free_index, free_to_global })
}

/// Value and gradient of the finite element function with full coefficient
/// vector `u` at barycentric point `bary` of element `t`.
pub fn evaluate(mesh: &Mesh, dofs: &DofMap, u: &[f64], t: usize, bary: [f64; 3]) -> (f64, Point) {
    evaluate_in(&mesh.geom(t), dofs, u, t, bary)
}

/// [`evaluate`] with the element geometry supplied.
pub fn evaluate_in(g: &TriGeom, dofs: &DofMap, u: &[f64], t: usize, bary: [f64; 3]) -> (f64, Point) {
    let n = dofs.local_len();
    const MAX: usize = (MAX_DEGREE + 1) * (MAX_DEGREE + 2) / 2;
    let (mut v, mut d) = ([0.0; MAX], [[0.0; 2]; MAX]);
    dofs.basis.eval_grad(bary, g, &mut v[..n], &mut d[..n]);
    let mut val = 0.0;
    let mut grad = [0.0; 2];
    for (i, &gi) in dofs.element_dofs(t).iter().enumerate() {
        val += u[gi] * v[i];
        grad[0] += u[gi] * d[i][0];
        grad[1] += u[gi] * d[i][1];
    }
    (val, grad)
}

/// Nodal interpolant (full vector; Dirichlet entries are not zeroed).
pub fn interpolate(mesh: &Mesh, dofs: &DofMap, f: impl Fn(Point) -> f64) -> Vec<f64> {
    let mut u = vec![0.0; dofs.n_total()];
    for t in 0..mesh.num_triangles() {
        let g = mesh.geom(t);
        for (i, &gi) in dofs.element_dofs(t).iter().enumerate() {
            u[gi] = f(g.point(dofs.basis.node_bary(i)));
        }
    }
    u
}

struct LocalForms {
    a: Vec<f64>,
    b: Vec<f64>,
}

fn local_forms(mesh: &Mesh, spec: &ProblemSpec, dofs: &DofMap, t: usize, tri_rule: &TriangleRule, line: &LineRule) -> LocalForms {
    let n = dofs.local_len();
    let g = mesh.geom(t);
    let co = spec.coefficients(mesh.regions[t]);
    let mut a = vec![0.0; n * n];
    let mut b = vec![0.0; n * n];
    let (mut v, mut d) = (vec![0.0; n], vec![[0.0; 2]; n]);
    for (q, w) in tri_rule.points.iter().zip(&tri_rule.weights) {
        dofs.basis.eval_grad(*q, &g, &mut v, &mut d);
        let w = w * g.area;
        for i in 0..n {
            let adi = co.apply(d[i]);
            for j in i..n {
                a[i * n + j] += w * (adi[0] * d[j][0] + adi[1] * d[j][1] + co.reaction * v[i] * v[j]);
                b[i * n + j] += w * co.weight * v[i] * v[j];
            }
        }
    }
    for (le, &e) in mesh.tri_edges[t].iter().enumerate() {
        let Some(BoundaryTag::Neumann(seg)) = mesh.edges[e].tag else { continue };
        let (alpha, beta2) = spec.neumann(seg);
        if alpha == 0.0 && beta2 == 0.0 {
            continue;
        }
        let len = mesh.edge_length(e);
        let (ea, eb) = ((le + 1) % 3, (le + 2) % 3);
        for (s, w) in line.points.iter().zip(&line.weights) {
            let mut bary = [0.0; 3];
            bary[ea] = 1.0 - s;
            bary[eb] = *s;
            dofs.basis.eval(bary, &mut v);
            let w = w * len;
            for i in 0..n {
                for j in i..n {
                    a[i * n + j] += w * alpha * v[i] * v[j];
                    b[i * n + j] += w * beta2 * v[i] * v[j];
                }
            }
        }
    }
    for i in 0..n {
        for j in 0..i {
            a[i * n + j] = a[j * n + i];
            b[i * n + j] = b[j * n + i];
        }
    }
    LocalForms { a, b }
}

fn assemble_impl(mesh: &Mesh, spec: &ProblemSpec, dofs: &DofMap, reduced: bool) -> Result<(SymmetricSparseOperator, SymmetricSparseOperator)> {
    spec.validate_coefficients()?;
    if spec.degree != dofs.p {
        return Err(Error::Problem("degree of the space does not match the problem".into()));
    }
    let tri_rule = TriangleRule::cached(2 * dofs.p);
    let line = LineRule::cached_exact(2 * dofs.p);
    let locals: Vec<LocalForms> = (0..mesh.num_triangles())
        .into_par_iter()
        .map(|t| local_forms(mesh, spec, dofs, t, &tri_rule, &line))
        .collect();
    let n = if reduced { dofs.n_free() } else { dofs.n_total() };
    let map = |g: usize| if reduced { dofs.free_of(g) } else { Some(g) };
    let mut ab = TripletBuilder::new(n);
    let mut bb = TripletBuilder::new(n);
    let nl = dofs.local_len();
    for (t, lf) in locals.iter().enumerate() {
        let ed = dofs.element_dofs(t);
        for i in 0..nl {
            let Some(gi) = map(ed[i]) else { continue };
            for j in 0..nl {
                let Some(gj) = map(ed[j]) else { continue };
                ab.add(gi, gj, lf.a[i * nl + j]);
                bb.add(gi, gj, lf.b[i * nl + j]);
            }
        }
    }
    Ok((ab.build(), bb.build()))
}

/// Stiffness and mass operators on the free (non-Dirichlet) dofs.
pub fn assemble_forms(mesh: &Mesh, spec: &ProblemSpec, dofs: &DofMap) -> Result<(SymmetricSparseOperator, SymmetricSparseOperator)> {
    assemble_impl(mesh, spec, dofs, true)
}

/// Stiffness and mass operators on all dofs, without Dirichlet elimination.
pub fn assemble_full(mesh: &Mesh, spec: &ProblemSpec, dofs: &DofMap) -> Result<(SymmetricSparseOperator, SymmetricSparseOperator)> {
    assemble_impl(mesh, spec, dofs, false)
}

/// Transfers a P1 function from the parent mesh to a mesh produced by
/// `bisect` (full vectors): new vertices take the mean of their parents.
pub fn prolongate_p1(fine: &Mesh, coarse_full: &[f64]) -> Vec<f64> {
    let mut u = vec![0.0; fine.num_vertices()];
    u[..coarse_full.len()].copy_from_slice(coarse_full);
    for v in coarse_full.len()..fine.num_vertices() {
        if let Some([a, b]) = fine.vertex_parents[v] {
            u[v] = 0.5 * (u[a] + u[b]);
        }
    }
    u
}
