//! Equilibrated flux reconstruction in Raviart–Thomas spaces by local
//! mixed problems on vertex patches.
//!
//! Global RT_p numbering: edge `g` owns dofs `g(p+1)..(g+1)(p+1)`, the values
//! of `q·n_g` at the p+1 Gauss points of the edge parametrized from its
//! lower-index vertex (`n_g` from [`Mesh::edge_normal`]). Triangle `t` then
//! owns `p(p+1)` interior moment dofs. Sharing edge dofs makes the normal
//! trace single-valued by construction.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::assembly::DofMap;
use crate::geometry::{Point, TriGeom};
use crate::mesh::{local_edge, BoundaryTag, Mesh, VertexKind};
use crate::problem::{ProblemSpec, MAX_DEGREE};
use crate::quadrature::{legendre01, LineRule, TriangleRule};
use crate::sparse::TripletBuilder;
use crate::{Error, Result};

/// Relative pivot size below which a patch system is declared singular.
const SINGULAR_PIVOT: f64 = 1e-14;

/// Dof layout of the global RT_p space on a mesh.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RtSpace {
    pub p: usize,
    pub n_edges: usize,
    pub n_triangles: usize,
}

impl RtSpace {
    pub fn new(mesh: &Mesh, p: usize) -> Self {
        RtSpace { p, n_edges: mesh.num_edges(), n_triangles: mesh.num_triangles() }
    }

    pub fn per_edge(&self) -> usize {
        self.p + 1
    }

    pub fn per_interior(&self) -> usize {
        self.p * (self.p + 1)
    }

    /// Local dimension (p+1)(p+3).
    pub fn local_len(&self) -> usize {
        (self.p + 1) * (self.p + 3)
    }

    pub fn dim(&self) -> usize {
        self.n_edges * self.per_edge() + self.n_triangles * self.per_interior()
    }

    pub fn edge_dof(&self, g: usize, k: usize) -> usize {
        g * self.per_edge() + k
    }

    pub fn interior_dof(&self, t: usize, i: usize) -> usize {
        self.n_edges * self.per_edge() + t * self.per_interior() + i
    }

    /// Global indices of the local dofs of triangle `t`: local edge `e`
    /// (opposite local vertex `e`) first, then interior moments.
    pub fn local_dofs(&self, mesh: &Mesh, t: usize) -> Vec<usize> {
        let mut d = Vec::with_capacity(self.local_len());
        for &g in &mesh.tri_edges[t] {
            d.extend((0..self.per_edge()).map(|k| self.edge_dof(g, k)));
        }
        d.extend((0..self.per_interior()).map(|i| self.interior_dof(t, i)));
        d
    }
}

/// Sign relating the global normal of local edge `e` to the outward normal
/// of triangle `t`.
pub fn edge_sign(mesh: &Mesh, t: usize, e: usize) -> f64 {
    let [a, b] = local_edge(&mesh.triangles[t], e);
    if a < b {
        1.0
    } else {
        -1.0
    }
}

#[derive(Clone, Copy, Debug)]
enum Span {
    X(usize, usize),
    Y(usize, usize),
    Radial(usize, usize),
}

fn monomials(deg: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..=deg).flat_map(move |d| (0..=d).map(move |b| (d - b, b)))
}

/// Local RT dimension at the largest supported degree.
const MAX_LOCAL: usize = (MAX_DEGREE + 1) * (MAX_DEGREE + 3);

/// Coordinates (x − centroid)/h on one element.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Local(pub f64, pub f64);

/// Nodal RT_p basis on one physical triangle, expressed in scaled monomials
/// about the centroid.
///
/// Points are best given in barycentric form. Subtracting the centroid from
/// a physical point cancels digits when h is small against |x|, and two
/// neighbours would then see slightly different edge points.
#[derive(Clone, Debug)]
pub struct RtElement {
    pub p: usize,
    pub geom: TriGeom,
    center: Point,
    scale: f64,
    /// Vertices in local coordinates.
    corners: [Point; 3],
    span: Vec<Span>,
    /// Column k holds the monomial coefficients of basis function k.
    coef: DMatrix<f64>,
}

impl RtElement {
    pub fn new(mesh: &Mesh, t: usize, p: usize) -> Result<Self> {
        let geom = mesh.geom(t);
        let center = geom.centroid();
        // Farthest vertex at distance one, so monomials stay O(1).
        let scale = geom.x.iter().map(|v| crate::geometry::dist(*v, center)).fold(0.0, f64::max);
        let corners = geom.x.map(|v| [(v[0] - center[0]) / scale, (v[1] - center[1]) / scale]);
        let mut span = Vec::new();
        for (a, b) in monomials(p) {
            span.push(Span::X(a, b));
            span.push(Span::Y(a, b));
        }
        for b in 0..=p {
            span.push(Span::Radial(p - b, b));
        }
        let n = span.len();
        let mut el = RtElement { p, geom, center, scale, corners, span, coef: DMatrix::identity(n, n) };
        let d = el.functionals_many(mesh, t, n, |_, b, out| {
            let mut divs = [0.0; MAX_LOCAL];
            el.eval_span(el.at(b), out, &mut divs[..n]);
        });
        el.coef = d.try_inverse().ok_or_else(|| Error::Mesh(format!("degenerate RT element on triangle {t}")))?;
        Ok(el)
    }

    /// The local dofs of a vector field on this element: normal values at
    /// edge Gauss points, then mean moments against (m, 0) and (0, m) for
    /// scaled monomials m of degree < p.
    pub fn functionals(&self, mesh: &Mesh, t: usize, f: impl Fn(Point) -> Point) -> Vec<f64> {
        self.functionals_many(mesh, t, 1, |x, _, out| out[0] = f(x)).column(0).iter().copied().collect()
    }

    /// Local dofs of `k` fields at once; `f` writes the k values at a point.
    /// Column j of the result belongs to field j.
    fn functionals_many(&self, mesh: &Mesh, t: usize, k: usize, mut f: impl FnMut(Point, [f64; 3], &mut [Point])) -> DMatrix<f64> {
        let p = self.p;
        let mut out = DMatrix::<f64>::zeros((p + 1) * (p + 3), k);
        let mut v = vec![[0.0; 2]; k];
        let gauss = LineRule::cached(p + 1);
        let tri = mesh.triangles[t];
        let mut row = 0;
        for &g in &mesh.tri_edges[t] {
            let [lo, hi] = mesh.edges[g].v;
            let ng = mesh.edge_normal(g);
            let (il, ih) = (local_index(&tri, lo), local_index(&tri, hi));
            for s in &gauss.points {
                let mut bary = [0.0; 3];
                bary[il] = 1.0 - s;
                bary[ih] = *s;
                f(self.geom.point(bary), bary, &mut v);
                for (j, vj) in v.iter().enumerate() {
                    out[(row, j)] = vj[0] * ng[0] + vj[1] * ng[1];
                }
                row += 1;
            }
        }
        if p > 0 {
            let rule = TriangleRule::cached(2 * p);
            let moments: Vec<(usize, usize)> = monomials(p - 1).collect();
            let nm = moments.len();
            for (q, w) in rule.points.iter().zip(&rule.weights) {
                f(self.geom.point(*q), *q, &mut v);
                let Local(xh, yh) = self.at(*q);
                for (i, &(a, b)) in moments.iter().enumerate() {
                    let m = xh.powi(a as i32) * yh.powi(b as i32) * w;
                    for (j, vj) in v.iter().enumerate() {
                        out[(row + i, j)] += m * vj[0];
                        out[(row + nm + i, j)] += m * vj[1];
                    }
                }
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.span.len()
    }

    pub fn is_empty(&self) -> bool {
        self.span.is_empty()
    }

    /// Local coordinates of a physical point.
    pub fn local(&self, x: Point) -> Local {
        Local((x[0] - self.center[0]) / self.scale, (x[1] - self.center[1]) / self.scale)
    }

    /// Local coordinates of a barycentric point.
    pub fn at(&self, b: [f64; 3]) -> Local {
        let c = &self.corners;
        Local(b[0] * c[0][0] + b[1] * c[1][0] + b[2] * c[2][0], b[0] * c[0][1] + b[1] * c[1][1] + b[2] * c[2][1])
    }

    fn eval_span(&self, at: Local, vals: &mut [Point], divs: &mut [f64]) {
        let Local(xh, yh) = at;
        let p = self.p;
        let mut px = [1.0; MAX_DEGREE + 2];
        let mut py = [1.0; MAX_DEGREE + 2];
        for k in 1..p + 2 {
            px[k] = px[k - 1] * xh;
            py[k] = py[k - 1] * yh;
        }
        let inv = 1.0 / self.scale;
        for (j, s) in self.span.iter().enumerate() {
            match *s {
                Span::X(a, b) => {
                    vals[j] = [px[a] * py[b], 0.0];
                    divs[j] = if a > 0 { a as f64 * px[a - 1] * py[b] * inv } else { 0.0 };
                }
                Span::Y(a, b) => {
                    vals[j] = [0.0, px[a] * py[b]];
                    divs[j] = if b > 0 { b as f64 * px[a] * py[b - 1] * inv } else { 0.0 };
                }
                Span::Radial(a, b) => {
                    let m = px[a] * py[b];
                    vals[j] = [xh * m, yh * m];
                    divs[j] = (p + 2) as f64 * m * inv;
                }
            }
        }
    }

    /// Values and divergences of all local basis functions.
    pub fn eval(&self, at: Local, vals: &mut [Point], divs: &mut [f64]) {
        let n = self.len();
        let mut sv = [[0.0; 2]; MAX_LOCAL];
        let mut sd = [0.0; MAX_LOCAL];
        self.eval_span(at, &mut sv[..n], &mut sd[..n]);
        for k in 0..n {
            let (mut v, mut d) = ([0.0; 2], 0.0);
            for j in 0..n {
                let c = self.coef[(j, k)];
                v[0] += c * sv[j][0];
                v[1] += c * sv[j][1];
                d += c * sd[j];
            }
            vals[k] = v;
            divs[k] = d;
        }
    }

    /// Value and divergence of the field with local coefficients `c`.
    pub fn eval_field(&self, c: &[f64], at: Local) -> (Point, f64) {
        self.eval_monomial_field(&self.monomial_coefficients(c), at)
    }

    /// Coefficients of the field with local dofs `c` in the monomial span.
    pub fn monomial_coefficients(&self, c: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n).map(|j| (0..n).map(|k| self.coef[(j, k)] * c[k]).sum()).collect()
    }

    /// Value and divergence of a field given by [`Self::monomial_coefficients`].
    pub fn eval_monomial_field(&self, cs: &[f64], at: Local) -> (Point, f64) {
        let n = self.len();
        let mut vals = [[0.0; 2]; MAX_LOCAL];
        let mut divs = [0.0; MAX_LOCAL];
        self.eval_span(at, &mut vals[..n], &mut divs[..n]);
        let mut v = [0.0; 2];
        let mut d = 0.0;
        for k in 0..n {
            v[0] += cs[k] * vals[k][0];
            v[1] += cs[k] * vals[k][1];
            d += cs[k] * divs[k];
        }
        (v, d)
    }
}

fn local_index(tri: &[usize; 3], v: usize) -> usize {
    tri.iter().position(|&x| x == v).expect("vertex of triangle")
}

/// Scaled monomial basis of P_p about the centroid, used for the pressure.
fn pressure_basis(at: Local, p: usize, out: &mut [f64]) {
    let Local(xh, yh) = at;
    for (i, (a, b)) in monomials(p).enumerate() {
        out[i] = xh.powi(a as i32) * yh.powi(b as i32);
    }
}

/// A global RT_p field.
#[derive(Clone, Debug, PartialEq)]
pub struct FluxField {
    pub space: RtSpace,
    pub coeffs: Vec<f64>,
}

impl FluxField {
    pub fn zeros(space: RtSpace) -> Self {
        FluxField { coeffs: vec![0.0; space.dim()], space }
    }

    pub fn element(&self, mesh: &Mesh, t: usize) -> Result<ElementFlux> {
        let el = RtElement::new(mesh, t, self.space.p)?;
        let c = self.space.local_dofs(mesh, t).iter().map(|&g| self.coeffs[g]).collect();
        Ok(ElementFlux { el, c })
    }

    /// Per-element RT coefficients as 1-based `element local_dof value` lines.
    pub fn to_triplet_text(&self, mesh: &Mesh) -> String {
        let mut s = String::new();
        for t in 0..mesh.num_triangles() {
            for (i, &g) in self.space.local_dofs(mesh, t).iter().enumerate() {
                s.push_str(&format!("{} {} {:.16e}\n", t + 1, i + 1, self.coeffs[g]));
            }
        }
        s
    }

    /// Largest jump of the normal component across interior edges, sampled
    /// at p+1 Gauss points per edge.
    pub fn max_normal_jump(&self, mesh: &Mesh) -> Result<f64> {
        let gauss = LineRule::cached(self.space.p + 1);
        let mut elems: Vec<Option<ElementFlux>> = vec![None; mesh.num_triangles()];
        let mut worst: f64 = 0.0;
        for (g, edge) in mesh.edges.iter().enumerate() {
            let [Some(t0), Some(t1)] = edge.tris else { continue };
            let ng = mesh.edge_normal(g);
            for t in [t0, t1] {
                if elems[t].is_none() {
                    elems[t] = Some(self.element(mesh, t)?);
                }
            }
            let on_edge = |t: usize, s: f64| {
                let tri = &mesh.triangles[t];
                let mut b = [0.0; 3];
                b[local_index(tri, edge.v[0])] = 1.0 - s;
                b[local_index(tri, edge.v[1])] = s;
                b
            };
            for &s in &gauss.points {
                let (q0, _) = elems[t0].as_ref().unwrap().eval_bary(on_edge(t0, s));
                let (q1, _) = elems[t1].as_ref().unwrap().eval_bary(on_edge(t1, s));
                let j = (q0[0] - q1[0]) * ng[0] + (q0[1] - q1[1]) * ng[1];
                worst = worst.max(j.abs());
            }
        }
        Ok(worst)
    }
}

/// RT basis of one element with the field's local coefficients.
#[derive(Clone, Debug)]
pub struct ElementFlux {
    pub el: RtElement,
    pub c: Vec<f64>,
}

impl ElementFlux {
    pub fn eval(&self, x: Point) -> (Point, f64) {
        self.el.eval_field(&self.c, self.el.local(x))
    }

    pub fn eval_bary(&self, b: [f64; 3]) -> (Point, f64) {
        self.el.eval_field(&self.c, self.el.at(b))
    }
}

/// Pointwise values of the patch data at `x` in element `t` for vertex `a`:
/// returns (r̃, ψ_a, u_h, ∇u_h).
fn patch_data(mesh: &Mesh, spec: &ProblemSpec, dofs: &DofMap, u: &[f64], lambda: f64, a: usize, t: usize, bary: [f64; 3]) -> (f64, f64, f64, Point) {
    let g = mesh.geom(t);
    let ia = local_index(&mesh.triangles[t], a);
    let co = spec.coefficients(mesh.regions[t]);
    let (uh, du) = crate::assembly::evaluate(mesh, dofs, u, t, bary);
    let psi = bary[ia];
    let adpsi = co.apply(g.grad_bary[ia]);
    let r = (co.reaction - lambda * co.weight) * psi * uh + adpsi[0] * du[0] + adpsi[1] * du[1];
    (r, psi, uh, du)
}

/// r̃_a = (c − λβ₁)ψ_a u_h + A∇ψ_a·∇u_h at barycentric point `bary` of `t`.
pub fn r_tilde(mesh: &Mesh, spec: &ProblemSpec, dofs: &DofMap, u: &[f64], lambda: f64, a: usize, t: usize, bary: [f64; 3]) -> f64 {
    patch_data(mesh, spec, dofs, u, lambda, a, t, bary).0
}

/// g̃_a = (α − λβ₂)ψ_a u_h at parameter `s` of Neumann edge `g` (from its
/// lower-index vertex).
pub fn g_tilde(mesh: &Mesh, spec: &ProblemSpec, dofs: &DofMap, u: &[f64], lambda: f64, a: usize, g: usize, s: f64) -> f64 {
    let edge = &mesh.edges[g];
    let Some(BoundaryTag::Neumann(seg)) = edge.tag else { return 0.0 };
    let (alpha, beta2) = spec.neumann(seg);
    let t = edge.tris[0].expect("boundary edge has a triangle");
    let tri = mesh.triangles[t];
    let mut bary = [0.0; 3];
    bary[local_index(&tri, edge.v[0])] = 1.0 - s;
    bary[local_index(&tri, edge.v[1])] = s;
    let Some(ia) = tri.iter().position(|&x| x == a) else { return 0.0 };
    let (uh, _) = crate::assembly::evaluate(mesh, dofs, u, t, bary);
    (alpha - lambda * beta2) * bary[ia] * uh
}

/// Integrals of the patch data: ∫_K r̃_a per patch element and ∫_γ g̃_a per
/// Neumann edge touching `a`.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchRhs {
    pub element_integrals: Vec<(usize, f64)>,
    pub edge_integrals: Vec<(usize, f64)>,
}

impl PatchRhs {
    pub fn total(&self) -> f64 {
        self.element_integrals.iter().chain(&self.edge_integrals).map(|x| x.1).sum()
    }
}

pub fn patch_rhs(mesh: &Mesh, spec: &ProblemSpec, dofs: &DofMap, u: &[f64], lambda: f64, a: usize) -> PatchRhs {
    let p = dofs.p;
    let rule = TriangleRule::cached(p + 1);
    let line = LineRule::cached_exact(p + 1);
    let patch = mesh.vertex_patch(a);
    let element_integrals = patch
        .elements
        .iter()
        .map(|&t| {
            let area = mesh.geom(t).area;
            let s: f64 = rule.points.iter().zip(&rule.weights).map(|(q, w)| w * r_tilde(mesh, spec, dofs, u, lambda, a, t, *q)).sum();
            (t, s * area)
        })
        .collect();
    let edge_integrals = patch
        .neumann_edges
        .iter()
        .map(|&g| {
            let s: f64 = line.points.iter().zip(&line.weights).map(|(x, w)| w * g_tilde(mesh, spec, dofs, u, lambda, a, g, *x)).sum();
            (g, s * mesh.edge_length(g))
        })
        .collect();
    PatchRhs { element_integrals, edge_integrals }
}

/// Element quantities shared by every patch and eigenpair on one mesh.
#[derive(Clone, Debug)]
pub struct ElementData {
    pub el: RtElement,
    /// (A⁻¹φ_j, φ_i)_K.
    mass: DMatrix<f64>,
    /// (m_k, div φ_i)_K for the pressure monomials m_k.
    div: DMatrix<f64>,
    /// (m_k, 1)_K.
    mean: Vec<f64>,
}

impl ElementData {
    fn new(mesh: &Mesh, spec: &ProblemSpec, t: usize, p: usize) -> Result<Self> {
        let el = RtElement::new(mesh, t, p)?;
        let nl = el.len();
        let np = (p + 1) * (p + 2) / 2;
        let co = spec.coefficients(mesh.regions[t]);
        let rule = TriangleRule::cached(2 * p + 2);
        let mut mass = DMatrix::<f64>::zeros(nl, nl);
        let mut div = DMatrix::<f64>::zeros(np, nl);
        let mut mean = vec![0.0; np];
        let (mut vals, mut divs, mut pb) = ([[0.0; 2]; MAX_LOCAL], [0.0; MAX_LOCAL], [0.0; MAX_LOCAL]);
        for (q, w) in rule.points.iter().zip(&rule.weights) {
            let at = el.at(*q);
            el.eval(at, &mut vals[..nl], &mut divs[..nl]);
            pressure_basis(at, p, &mut pb[..np]);
            let w = w * el.geom.area;
            for i in 0..nl {
                let ai = co.apply_inverse(vals[i]);
                for j in i..nl {
                    mass[(i, j)] += w * (ai[0] * vals[j][0] + ai[1] * vals[j][1]);
                }
                for k in 0..np {
                    div[(k, i)] += w * pb[k] * divs[i];
                }
            }
            for k in 0..np {
                mean[k] += w * pb[k];
            }
        }
        for i in 0..nl {
            for j in 0..i {
                mass[(i, j)] = mass[(j, i)];
            }
        }
        Ok(ElementData { el, mass, div, mean })
    }
}

/// RT bases and local matrices of every element, plus the vertex labels.
#[derive(Clone, Debug)]
pub struct FluxCache {
    pub space: RtSpace,
    pub kinds: Vec<VertexKind>,
    elements: Vec<ElementData>,
}

impl FluxCache {
    pub fn new(mesh: &Mesh, spec: &ProblemSpec, p: usize) -> Result<Self> {
        let elements = (0..mesh.num_triangles())
            .into_par_iter()
            .map(|t| ElementData::new(mesh, spec, t, p))
            .collect::<Result<Vec<_>>>()?;
        Ok(FluxCache { space: RtSpace::new(mesh, p), kinds: mesh.classify_vertices()?, elements })
    }

    pub fn element(&self, t: usize) -> &RtElement {
        &self.elements[t].el
    }
}

/// The local mixed problem on the patch of one vertex, factorized once and
/// reusable for several eigenpairs.
pub struct PatchProblem {
    pub vertex: usize,
    pub kind: VertexKind,
    pub elements: Vec<usize>,
    /// Edges whose normal dofs are unknowns (interior and Dirichlet edges
    /// through the vertex).
    pub free_edges: Vec<usize>,
    /// Neumann edges through the vertex; their dofs are prescribed.
    pub neumann_edges: Vec<usize>,
    n_q: usize,
    n_d: usize,
    lu: nalgebra::linalg::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    /// Ratio of smallest to largest pivot magnitude.
    pub pivot_ratio: f64,
    /// Per element: patch indices of its local RT dofs.
    maps: Vec<Vec<LocalDof>>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum LocalDof {
    Free(usize),
    Prescribed(usize, usize),
    Zero,
}

impl PatchProblem {
    pub fn new(mesh: &Mesh, cache: &FluxCache, a: usize) -> Result<Self> {
        let p = cache.space.p;
        let kind = cache.kinds[a];
        let patch = mesh.vertex_patch(a);
        let mut free_edges: Vec<usize> = patch.interior_edges.iter().chain(&patch.dirichlet_edges).copied().collect();
        free_edges.sort_unstable();
        let mut neumann_edges = patch.neumann_edges.clone();
        neumann_edges.sort_unstable();
        let pe = p + 1;
        let pi = p * (p + 1);
        let np = (p + 1) * (p + 2) / 2;
        let ne = patch.elements.len();
        let n_q = free_edges.len() * pe + ne * pi;
        let n_d = ne * np;
        let has_mu = kind != VertexKind::Dirichlet;
        let n = n_q + n_d + usize::from(has_mu);
        let nl = cache.space.local_len();
        let mut k = DMatrix::<f64>::zeros(n, n);
        let mut maps = Vec::with_capacity(ne);
        for (ie, &t) in patch.elements.iter().enumerate() {
            let mut map = Vec::with_capacity(nl);
            for &g in &mesh.tri_edges[t] {
                for kk in 0..pe {
                    map.push(if let Ok(i) = free_edges.binary_search(&g) {
                        LocalDof::Free(i * pe + kk)
                    } else if let Ok(i) = neumann_edges.binary_search(&g) {
                        LocalDof::Prescribed(i, kk)
                    } else {
                        LocalDof::Zero
                    });
                }
            }
            for i in 0..pi {
                map.push(LocalDof::Free(free_edges.len() * pe + ie * pi + i));
            }
            let data = &cache.elements[t];
            let d0 = n_q + ie * np;
            for i in 0..nl {
                let LocalDof::Free(gi) = map[i] else { continue };
                for j in 0..nl {
                    if let LocalDof::Free(gj) = map[j] {
                        k[(gi, gj)] += data.mass[(i, j)];
                    }
                }
                for kq in 0..np {
                    k[(gi, d0 + kq)] -= data.div[(kq, i)];
                    k[(d0 + kq, gi)] -= data.div[(kq, i)];
                }
            }
            if has_mu {
                for kq in 0..np {
                    k[(d0 + kq, n - 1)] = data.mean[kq];
                    k[(n - 1, d0 + kq)] = data.mean[kq];
                }
            }
            maps.push(map);
        }
        let lu = k.lu();
        let u = lu.u();
        let diag: Vec<f64> = (0..n).map(|i| u[(i, i)].abs()).collect();
        let max = diag.iter().cloned().fold(0.0, f64::max);
        let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
        let pivot_ratio = if max > 0.0 { min / max } else { 0.0 };
        if !(pivot_ratio > SINGULAR_PIVOT) {
            return Err(Error::SingularPatch { vertex: a });
        }
        Ok(PatchProblem { vertex: a, kind, elements: patch.elements, free_edges, neumann_edges, n_q, n_d, lu, pivot_ratio, maps })
    }

    pub fn dim(&self) -> usize {
        self.n_q + self.n_d + usize::from(self.kind != VertexKind::Dirichlet)
    }

    /// Prescribed values of `q·n_g` at the Gauss points of each Neumann edge:
    /// the projection of −g̃_a onto P_p, oriented to the global normal.
    fn neumann_values(&self, mesh: &Mesh, spec: &ProblemSpec, dofs: &DofMap, u: &[f64], lambda: f64) -> Vec<Vec<f64>> {
        let p = dofs.p;
        let fine = LineRule::cached(p + 2);
        let nodes = LineRule::cached(p + 1);
        self.neumann_edges
            .iter()
            .map(|&g| {
                let t = mesh.edges[g].tris[0].expect("boundary edge has a triangle");
                let le = mesh.tri_edges[t].iter().position(|&x| x == g).unwrap();
                let sign = edge_sign(mesh, t, le);
                let mut c = vec![0.0; p + 1];
                for (s, w) in fine.points.iter().zip(&fine.weights) {
                    let val = g_tilde(mesh, spec, dofs, u, lambda, self.vertex, g, *s);
                    for (cj, lj) in c.iter_mut().zip(legendre01(p, *s)) {
                        *cj += w * val * lj;
                    }
                }
                nodes
                    .points
                    .iter()
                    .map(|s| -sign * legendre01(p, *s).iter().zip(&c).map(|(l, c)| l * c).sum::<f64>())
                    .collect()
            })
            .collect()
    }

    /// Solves for one eigenpair; returns (global RT dof, value) contributions.
    pub fn solve(&self, mesh: &Mesh, spec: &ProblemSpec, dofs: &DofMap, cache: &FluxCache, u: &[f64], lambda: f64) -> Result<Vec<(usize, f64)>> {
        Ok(self.solve_many(mesh, spec, dofs, cache, &[(lambda, u)])?.remove(0))
    }

    /// Solves for several eigenpairs (λ_h, full coefficient vector) at once.
    pub fn solve_many(&self, mesh: &Mesh, spec: &ProblemSpec, dofs: &DofMap, cache: &FluxCache, pairs: &[(f64, &[f64])]) -> Result<Vec<Vec<(usize, f64)>>> {
        let p = dofs.p;
        let space = &cache.space;
        let np = (p + 1) * (p + 2) / 2;
        let n = self.dim();
        let nl = space.local_len();
        let m = pairs.len();
        let neu: Vec<Vec<Vec<f64>>> = pairs.iter().map(|&(l, u)| self.neumann_values(mesh, spec, dofs, u, l)).collect();
        let mut rhs = DMatrix::<f64>::zeros(n, m);
        let rule = TriangleRule::cached(2 * p + 2);
        let (mut vals, mut divs, mut pb) = ([[0.0; 2]; MAX_LOCAL], [0.0; MAX_LOCAL], [0.0; MAX_LOCAL]);
        let mut f1 = DMatrix::<f64>::zeros(nl, m);
        for (ie, &t) in self.elements.iter().enumerate() {
            let map = &self.maps[ie];
            let data = &cache.elements[t];
            let el = &data.el;
            let d0 = self.n_q + ie * np;
            let co = spec.coefficients(mesh.regions[t]);
            let ia = local_index(&mesh.triangles[t], self.vertex);
            let adpsi = co.apply(el.geom.grad_bary[ia]);
            f1.fill(0.0);
            for (q, w) in rule.points.iter().zip(&rule.weights) {
                let at = el.at(*q);
                el.eval(at, &mut vals[..nl], &mut divs[..nl]);
                pressure_basis(at, el.p, &mut pb[..np]);
                let w = w * el.geom.area;
                let psi = q[ia];
                for (j, &(lambda, u)) in pairs.iter().enumerate() {
                    let (uh, du) = crate::assembly::evaluate_in(&el.geom, dofs, u, t, *q);
                    let r = (co.reaction - lambda * co.weight) * psi * uh + adpsi[0] * du[0] + adpsi[1] * du[1];
                    for i in 0..nl {
                        f1[(i, j)] += w * psi * (du[0] * vals[i][0] + du[1] * vals[i][1]);
                    }
                    for kq in 0..np {
                        rhs[(d0 + kq, j)] -= w * r * pb[kq];
                    }
                }
            }
            for j in 0..m {
                let fixed: Vec<(usize, f64)> = map
                    .iter()
                    .enumerate()
                    .filter_map(|(l, d)| match *d {
                        LocalDof::Prescribed(ig, k) => Some((l, neu[j][ig][k])),
                        _ => None,
                    })
                    .collect();
                for i in 0..nl {
                    if let LocalDof::Free(gi) = map[i] {
                        let lift: f64 = fixed.iter().map(|&(l, v)| data.mass[(i, l)] * v).sum();
                        rhs[(gi, j)] += f1[(i, j)] - lift;
                    }
                }
                for kq in 0..np {
                    let lift: f64 = fixed.iter().map(|&(l, v)| data.div[(kq, l)] * v).sum();
                    rhs[(d0 + kq, j)] += lift;
                }
            }
        }
        let x = self.lu.solve(&rhs).ok_or(Error::SingularPatch { vertex: self.vertex })?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularPatch { vertex: self.vertex });
        }
        let pe = p + 1;
        let pi = space.per_interior();
        Ok((0..m)
            .map(|j| {
                let mut out = Vec::with_capacity(self.n_q + self.neumann_edges.len() * pe);
                for (i, &g) in self.free_edges.iter().enumerate() {
                    for k in 0..pe {
                        out.push((space.edge_dof(g, k), x[(i * pe + k, j)]));
                    }
                }
                for (ie, &t) in self.elements.iter().enumerate() {
                    for i in 0..pi {
                        out.push((space.interior_dof(t, i), x[(self.free_edges.len() * pe + ie * pi + i, j)]));
                    }
                }
                for (ig, &g) in self.neumann_edges.iter().enumerate() {
                    for k in 0..pe {
                        out.push((space.edge_dof(g, k), neu[j][ig][k]));
                    }
                }
                out
            })
            .collect())
    }
}

/// Diagnostics over all patch solves.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PatchStats {
    pub patches: usize,
    pub max_dim: usize,
    pub min_pivot_ratio: f64,
}

/// Flux reconstructions for several eigenpairs on one mesh; each patch
/// system is factorized once. `pairs` holds (λ_h, full coefficient vector).
pub fn reconstruct_many(mesh: &Mesh, spec: &ProblemSpec, dofs: &DofMap, pairs: &[(f64, &[f64])]) -> Result<(Vec<FluxField>, PatchStats)> {
    let cache = FluxCache::new(mesh, spec, dofs.p)?;
    reconstruct_with(mesh, spec, dofs, &cache, pairs)
}

/// [`reconstruct_many`] with precomputed element data.
pub fn reconstruct_with(mesh: &Mesh, spec: &ProblemSpec, dofs: &DofMap, cache: &FluxCache, pairs: &[(f64, &[f64])]) -> Result<(Vec<FluxField>, PatchStats)> {
    let mut fields: Vec<FluxField> = pairs.iter().map(|_| FluxField::zeros(cache.space)).collect();
    let mut stats = PatchStats { min_pivot_ratio: f64::INFINITY, ..Default::default() };
    // Patches are solved in parallel chunks and merged in vertex order, so
    // the sums do not depend on scheduling.
    let vertices: Vec<usize> = (0..mesh.num_vertices()).filter(|&a| !mesh.vertex_triangles(a).is_empty()).collect();
    for chunk in vertices.chunks(4096) {
        let solved = chunk
            .par_iter()
            .map(|&a| {
                let prob = PatchProblem::new(mesh, cache, a)?;
                let parts = prob.solve_many(mesh, spec, dofs, cache, pairs)?;
                Ok((prob.dim(), prob.pivot_ratio, parts))
            })
            .collect::<Result<Vec<_>>>()?;
        for (dim, ratio, parts) in solved {
            stats.patches += 1;
            stats.max_dim = stats.max_dim.max(dim);
            stats.min_pivot_ratio = stats.min_pivot_ratio.min(ratio);
            for (f, part) in fields.iter_mut().zip(parts) {
                for (g, v) in part {
                    f.coeffs[g] += v;
                }
            }
        }
    }
    Ok((fields, stats))
}

pub fn reconstruct(mesh: &Mesh, spec: &ProblemSpec, dofs: &DofMap, lambda: f64, u: &[f64]) -> Result<FluxField> {
    Ok(reconstruct_many(mesh, spec, dofs, &[(lambda, u)])?.0.remove(0))
}

/// Sparse RT mass matrix (A⁻¹q, w) over the whole mesh; used by tests that
/// compare global quantities.
pub fn rt_mass(mesh: &Mesh, spec: &ProblemSpec, space: &RtSpace) -> Result<crate::sparse::SymmetricSparseOperator> {
    let nl = space.local_len();
    let rule = TriangleRule::cached(2 * space.p + 2);
    let mut b = TripletBuilder::new(space.dim());
    let (mut vals, mut divs) = (vec![[0.0; 2]; nl], vec![0.0; nl]);
    for t in 0..mesh.num_triangles() {
        let el = RtElement::new(mesh, t, space.p)?;
        let co = spec.coefficients(mesh.regions[t]);
        let ld = space.local_dofs(mesh, t);
        let mut ml = vec![0.0; nl * nl];
        for (q, w) in rule.points.iter().zip(&rule.weights) {
            el.eval(el.at(*q), &mut vals, &mut divs);
            let w = w * el.geom.area;
            for i in 0..nl {
                let ai = co.apply_inverse(vals[i]);
                for j in 0..nl {
                    ml[i * nl + j] += w * (ai[0] * vals[j][0] + ai[1] * vals[j][1]);
                }
            }
        }
        for i in 0..nl {
            for j in 0..nl {
                b.add(ld[i], ld[j], ml[i * nl + j]);
            }
        }
    }
    Ok(b.build())
}
