//! Guaranteed upper bound η on the energy norm of the residual
//! representative, computed from any H(div) field q.
//!
//! Element quantities combine several ways of bounding the residual terms
//! (reaction weighting, Poincaré for mean-free residuals, trace inequalities
//! on Neumann edges) and keep the smallest. Values that are unavailable for
//! an element are infinite and handled by [`Ext`] arithmetic.

use std::borrow::Cow;
use std::f64::consts::PI;

use serde::Serialize;

use crate::assembly::{evaluate, evaluate_in, DofMap};
use crate::ext::Ext;
use crate::flux::{edge_sign, FluxCache, FluxField, RtElement};
use crate::geometry::Point;
use crate::mesh::{local_edge, BoundaryTag, Mesh};
use crate::problem::ProblemSpec;
use crate::quadrature::{LineRule, TriangleRule};
use crate::{Error, Result};

/// |∫ r| ≤ ZERO_MEAN·scale·‖r‖ counts as a vanishing integral.
pub const ZERO_MEAN: f64 = 1e-10;
/// Relative residual size below which the flux counts as exactly equilibrated.
pub const CLEAN_RESIDUAL: f64 = 1e-8;

const DIM: f64 = 2.0;

/// Norms of the residual fields on one element and its Neumann edges.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ElementResidual {
    /// ‖A^{-1/2}(A∇u − q)‖_K.
    pub flux: f64,
    pub r_norm: f64,
    pub r_integral: f64,
    pub edges: Vec<EdgeResidual>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EdgeResidual {
    pub edge: usize,
    pub g_norm: f64,
    pub g_integral: f64,
}

/// Residual norms for one approximate pair, with global reference scales.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Residuals {
    pub elements: Vec<ElementResidual>,
    /// ‖r‖ over Ω and ‖g‖ over Γ_N.
    pub r_total: f64,
    pub g_total: f64,
    /// ‖λβ₁u‖ over Ω.
    pub r_scale: f64,
    /// ‖αu‖ + ‖λβ₂u‖ over Γ_N.
    pub g_scale: f64,
}

impl Residuals {
    pub fn relative_r(&self) -> f64 {
        relative(self.r_total, self.r_scale)
    }

    /// Boundary residual relative to its own data scale, or to the interior
    /// scale when the boundary data vanish.
    pub fn relative_g(&self) -> f64 {
        if self.g_scale > 0.0 {
            self.g_total / self.g_scale
        } else {
            relative(self.g_total, self.r_scale)
        }
    }

    pub fn is_clean(&self) -> bool {
        self.relative_r() <= CLEAN_RESIDUAL && self.relative_g() <= CLEAN_RESIDUAL
    }
}

fn relative(x: f64, scale: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else if scale > 0.0 {
        x / scale
    } else {
        f64::INFINITY
    }
}

/// F = A∇u − q and r = cu − λβ₁u − div q at a point of element `t`.
pub fn residual_at(mesh: &Mesh, spec: &ProblemSpec, dofs: &DofMap, u: &[f64], lambda: f64, q: &crate::flux::ElementFlux, t: usize, bary: [f64; 3]) -> (Point, f64) {
    let co = spec.coefficients(mesh.regions[t]);
    let (uh, du) = evaluate(mesh, dofs, u, t, bary);
    let (qv, dq) = q.eval_bary(bary);
    let adu = co.apply(du);
    ([adu[0] - qv[0], adu[1] - qv[1]], (co.reaction - lambda * co.weight) * uh - dq)
}

/// Norms and integrals of F, r, g for (u, λ, q); `u` is the full vector.
pub fn residual_fields(mesh: &Mesh, spec: &ProblemSpec, dofs: &DofMap, u: &[f64], lambda: f64, q: &FluxField) -> Result<Residuals> {
    residual_fields_impl(mesh, spec, dofs, u, lambda, q, |t| Ok(Cow::Owned(RtElement::new(mesh, t, q.space.p)?)))
}

/// [`residual_fields`] reusing the RT bases of a [`FluxCache`].
pub fn residual_fields_cached(mesh: &Mesh, spec: &ProblemSpec, dofs: &DofMap, u: &[f64], lambda: f64, q: &FluxField, cache: &FluxCache) -> Result<Residuals> {
    residual_fields_impl(mesh, spec, dofs, u, lambda, q, |t| Ok(Cow::Borrowed(cache.element(t))))
}

fn residual_fields_impl<'a>(
    mesh: &Mesh,
    spec: &ProblemSpec,
    dofs: &DofMap,
    u: &[f64],
    lambda: f64,
    q: &FluxField,
    element: impl Fn(usize) -> Result<Cow<'a, RtElement>>,
) -> Result<Residuals> {
    let p = dofs.p;
    let rule = TriangleRule::cached(2 * p + 2);
    let line = LineRule::cached_exact(2 * p + 2);
    let mut elements = Vec::with_capacity(mesh.num_triangles());
    let (mut r2, mut g2, mut rs2, mut ga2, mut gb2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for t in 0..mesh.num_triangles() {
        let co = spec.coefficients(mesh.regions[t]);
        let el = element(t)?;
        let geom = el.geom;
        let c: Vec<f64> = q.space.local_dofs(mesh, t).iter().map(|&g| q.coeffs[g]).collect();
        let c = el.monomial_coefficients(&c);
        let (mut fl, mut rn, mut ri, mut sc) = (0.0, 0.0, 0.0, 0.0);
        for (b, w) in rule.points.iter().zip(&rule.weights) {
            let (uh, du) = evaluate_in(&geom, dofs, u, t, *b);
            let (qv, dq) = el.eval_monomial_field(&c, el.at(*b));
            let adu = co.apply(du);
            let f = [adu[0] - qv[0], adu[1] - qv[1]];
            let r = (co.reaction - lambda * co.weight) * uh - dq;
            let ainv_f = co.apply_inverse(f);
            let w = w * geom.area;
            fl += w * (ainv_f[0] * f[0] + ainv_f[1] * f[1]);
            rn += w * r * r;
            ri += w * r;
            sc += w * (lambda * co.weight * uh).powi(2);
        }
        let mut edges = Vec::new();
        for (le, &g) in mesh.tri_edges[t].iter().enumerate() {
            let Some(BoundaryTag::Neumann(seg)) = mesh.edges[g].tag else { continue };
            let (alpha, beta2) = spec.neumann(seg);
            let [va, vb] = local_edge(&mesh.triangles[t], le);
            let (ia, ib) = (pos(&mesh.triangles[t], va), pos(&mesh.triangles[t], vb));
            let n_out = scale(mesh.edge_normal(g), edge_sign(mesh, t, le));
            let len = mesh.edge_length(g);
            let (mut gn, mut gi) = (0.0, 0.0);
            for (s, w) in line.points.iter().zip(&line.weights) {
                let mut bary = [0.0; 3];
                bary[ia] = 1.0 - s;
                bary[ib] = *s;
                let (uh, _) = evaluate_in(&geom, dofs, u, t, bary);
                let (qv, _) = el.eval_monomial_field(&c, el.at(bary));
                let gv = (alpha - lambda * beta2) * uh + qv[0] * n_out[0] + qv[1] * n_out[1];
                let w = w * len;
                gn += w * gv * gv;
                gi += w * gv;
                ga2 += w * (alpha * uh).powi(2);
                gb2 += w * (lambda * beta2 * uh).powi(2);
            }
            g2 += gn;
            edges.push(EdgeResidual { edge: g, g_norm: gn.max(0.0).sqrt(), g_integral: gi });
        }
        r2 += rn;
        rs2 += sc;
        elements.push(ElementResidual { flux: fl.max(0.0).sqrt(), r_norm: rn.max(0.0).sqrt(), r_integral: ri, edges });
    }
    Ok(Residuals {
        elements,
        r_total: r2.sqrt(),
        g_total: g2.sqrt(),
        r_scale: rs2.sqrt(),
        g_scale: ga2.sqrt() + gb2.sqrt(),
    })
}

fn pos(tri: &[usize; 3], v: usize) -> usize {
    tri.iter().position(|&x| x == v).unwrap()
}

fn scale(v: Point, s: f64) -> Point {
    [v[0] * s, v[1] * s]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ElementClass {
    /// β₁ > 0 and the split bound wins.
    PlusPlus,
    /// β₁ = 0 with a weighted Neumann edge, and the split bound wins.
    PlusZero,
    Zero,
}

impl ElementClass {
    pub fn label(self) -> &'static str {
        match self {
            ElementClass::PlusPlus => "++",
            ElementClass::PlusZero => "+0",
            ElementClass::Zero => "0",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EdgeTerms {
    pub edge: usize,
    pub g1: Ext,
    pub g2: Ext,
    pub g3: Ext,
    /// β₂ > 0 on this edge.
    pub weighted: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ElementTerms {
    pub f: f64,
    pub r1: Ext,
    pub r2: Ext,
    pub r3: Ext,
    pub edges: Vec<EdgeTerms>,
    pub m: Ext,
    pub m0: Ext,
    pub y: Ext,
    pub r: Ext,
    pub g: Ext,
    pub class: ElementClass,
}

fn inv_sqrt(x: f64) -> Ext {
    if x > 0.0 {
        Ext::Finite(x.powf(-0.5))
    } else {
        Ext::Infinite
    }
}

/// Trace constants for edge length `len` on an element with area `area`,
/// diameter `h`, smallest diffusion eigenvalue `lmin` and reaction `c`.
pub fn trace_constants(len: f64, area: f64, h: f64, lmin: f64, c: f64) -> (Ext, Ext) {
    let big = if c > 0.0 {
        let sq = len / (DIM * area * c.sqrt()) * (4.0 * h * h / lmin + DIM * DIM / c).sqrt();
        Ext::Finite(sq.sqrt())
    } else {
        Ext::Infinite
    };
    let mbar = poincare_or_reaction(h, lmin, c);
    let sq = len / (DIM * area) * mbar * (2.0 * h / lmin.sqrt() + DIM * mbar);
    (big, Ext::Finite(sq.sqrt()))
}

/// min{h π⁻¹ λ_min^{-1/2}, c^{-1/2}}.
pub fn poincare_or_reaction(h: f64, lmin: f64, c: f64) -> f64 {
    let poinc = h / PI / lmin.sqrt();
    if c > 0.0 {
        poinc.min(1.0 / c.sqrt())
    } else {
        poinc
    }
}

fn sum_sq(it: impl Iterator<Item = Ext>) -> Ext {
    it.map(Ext::sq).sum()
}

/// Four-way minimum over the given edge subset.
fn m_over(f: f64, r1: Ext, r2: Ext, edges: &[&EdgeTerms]) -> Ext {
    let f = Ext::Finite(f);
    let g1 = sum_sq(edges.iter().map(|e| e.g1));
    let g2: Ext = edges.iter().map(|e| e.g2).sum();
    let a = (f.sq() + r1.sq() + g1).sqrt();
    let b = (f.sq() + r1.sq()).sqrt() + g2;
    let c = (f.sq() + g1).sqrt() + r2;
    let d = f + r2 + g2;
    a.min(b).min(c).min(d)
}

pub fn element_terms(mesh: &Mesh, spec: &ProblemSpec, res: &Residuals, lambda1_lower: Option<f64>) -> Vec<ElementTerms> {
    (0..mesh.num_triangles()).map(|t| terms_for(mesh, spec, t, &res.elements[t], lambda1_lower)).collect()
}

fn terms_for(mesh: &Mesh, spec: &ProblemSpec, t: usize, er: &ElementResidual, lambda1_lower: Option<f64>) -> ElementTerms {
    let co = spec.coefficients(mesh.regions[t]);
    let geom = mesh.geom(t);
    let (h, area) = (geom.h, geom.area);
    let lmin = co.lambda_min();
    let c = co.reaction;
    let r1 = inv_sqrt(c).scale(er.r_norm);
    let r2 = if er.r_integral.abs() <= ZERO_MEAN * h * er.r_norm {
        Ext::Finite(h / PI / lmin.sqrt() * er.r_norm)
    } else {
        Ext::Infinite
    };
    let r3 = inv_sqrt(co.weight).scale(er.r_norm);
    let edges: Vec<EdgeTerms> = er
        .edges
        .iter()
        .map(|e| {
            let Some(BoundaryTag::Neumann(seg)) = mesh.edges[e.edge].tag else { unreachable!("residual edges are Neumann") };
            let (alpha, beta2) = spec.neumann(seg);
            let len = mesh.edge_length(e.edge);
            let mean_free = e.g_integral.abs() <= ZERO_MEAN * len.sqrt() * e.g_norm;
            let (cc, cbar) = trace_constants(len, area, h, lmin, c);
            let cbar = if mean_free { cbar } else { Ext::Infinite };
            let g2 = if c > 0.0 || mean_free { cc.min(cbar).scale(e.g_norm) } else { Ext::Infinite };
            EdgeTerms { edge: e.edge, g1: inv_sqrt(alpha).scale(e.g_norm), g2, g3: inv_sqrt(beta2).scale(e.g_norm), weighted: beta2 > 0.0 }
        })
        .collect();
    let all: Vec<&EdgeTerms> = edges.iter().collect();
    let n0: Vec<&EdgeTerms> = edges.iter().filter(|e| !e.weighted).collect();
    let nplus: Vec<&EdgeTerms> = edges.iter().filter(|e| e.weighted).collect();
    let f = er.flux;
    let m = m_over(f, r1, r2, &all);
    let m0 = m_over(f, r1, r2, &n0);
    let fe = Ext::Finite(f);
    let y = (fe.sq() + sum_sq(n0.iter().map(|e| e.g1))).sqrt().min(fe + n0.iter().map(|e| e.g2).sum());
    let gk = sum_sq(nplus.iter().map(|e| e.g3)).sqrt();
    let rk = (r3.sq() + sum_sq(nplus.iter().map(|e| e.g3))).sqrt();
    let class = match lambda1_lower {
        Some(l) => {
            let il = 1.0 / l.sqrt();
            if co.weight > 0.0 && y + rk.scale(il) <= m {
                ElementClass::PlusPlus
            } else if co.weight == 0.0 && !nplus.is_empty() && gk.scale(il) + m0 <= m {
                ElementClass::PlusZero
            } else {
                ElementClass::Zero
            }
        }
        None => ElementClass::Zero,
    };
    ElementTerms { f, r1, r2, r3, edges, m, m0, y, r: rk, g: gk, class }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    A,
    B,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EtaPath {
    /// The full element-term bound.
    Full,
    /// Residuals verified below round-off; η² = Σ F_K².
    Simplified,
    /// Residuals too large for the simplified form; full bound used.
    Safeguarded,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EtaResult {
    pub eta: f64,
    pub eta_a: Ext,
    pub eta_b: Ext,
    pub branch: Branch,
    /// Sizes of the classes ++, +0, 0.
    pub classes: [usize; 3],
    pub path: EtaPath,
    pub r_norm: f64,
    pub g_norm: f64,
}

/// η = min(η^(a), η^(b)).
pub fn eta(terms: &[ElementTerms], lambda1_lower: Option<f64>) -> Result<EtaResult> {
    let eta_a = sum_sq(terms.iter().map(|t| t.m)).sqrt();
    let mut classes = [0usize; 3];
    for t in terms {
        classes[t.class as usize] += 1;
    }
    let eta_b = match lambda1_lower {
        Some(l) if l > 0.0 => {
            let first = sum_sq(terms.iter().map(|t| match t.class {
                ElementClass::PlusPlus => t.y,
                ElementClass::PlusZero => t.m0,
                ElementClass::Zero => t.m,
            }))
            .sqrt();
            let second = sum_sq(terms.iter().filter_map(|t| match t.class {
                ElementClass::PlusPlus => Some(t.r),
                ElementClass::PlusZero => Some(t.g),
                ElementClass::Zero => None,
            }))
            .sqrt();
            first + second.scale(1.0 / l.sqrt())
        }
        _ => Ext::Infinite,
    };
    let (value, branch) = if eta_b < eta_a { (eta_b, Branch::B) } else { (eta_a, Branch::A) };
    let eta = value.finite().ok_or(Error::EstimatorUnavailable)?;
    Ok(EtaResult { eta, eta_a, eta_b, branch, classes, path: EtaPath::Full, r_norm: f64::NAN, g_norm: f64::NAN })
}

/// Full estimator from residual norms.
pub fn eta_full(mesh: &Mesh, spec: &ProblemSpec, res: &Residuals, lambda1_lower: Option<f64>) -> Result<EtaResult> {
    let terms = element_terms(mesh, spec, res, lambda1_lower);
    let mut out = eta(&terms, lambda1_lower)?;
    out.r_norm = res.r_total;
    out.g_norm = res.g_total;
    Ok(out)
}

/// η² = Σ F_K² when the residuals of (u, λ, q) are verified to vanish up to
/// round-off; otherwise falls back to the full bound.
pub fn eta_simplified(mesh: &Mesh, spec: &ProblemSpec, dofs: &DofMap, u: &[f64], lambda: f64, q: &FluxField, lambda1_lower: Option<f64>) -> Result<(EtaResult, Residuals)> {
    let res = residual_fields(mesh, spec, dofs, u, lambda, q)?;
    let out = eta_from_residuals(mesh, spec, &res, lambda1_lower)?;
    Ok((out, res))
}

pub fn eta_from_residuals(mesh: &Mesh, spec: &ProblemSpec, res: &Residuals, lambda1_lower: Option<f64>) -> Result<EtaResult> {
    if res.is_clean() {
        let eta = res.elements.iter().map(|e| e.flux * e.flux).sum::<f64>().sqrt();
        Ok(EtaResult {
            eta,
            eta_a: Ext::Finite(eta),
            eta_b: Ext::Infinite,
            branch: Branch::A,
            classes: [0, 0, res.elements.len()],
            path: EtaPath::Simplified,
            r_norm: res.r_total,
            g_norm: res.g_total,
        })
    } else {
        let mut out = eta_full(mesh, spec, res, lambda1_lower)?;
        out.path = EtaPath::Safeguarded;
        Ok(out)
    }
}

/// Refinement indicator per element: the largest F_K over the eigenpairs.
pub fn local_indicators(flux_norms: &[Vec<f64>]) -> Vec<f64> {
    let Some(first) = flux_norms.first() else { return vec![] };
    (0..first.len()).map(|k| flux_norms.iter().map(|f| f[k]).fold(0.0, f64::max)).collect()
}

/// CSV with columns `element_id, F_K, M_K, class, indicator`.
pub fn indicators_csv(terms: &[ElementTerms], indicators: &[f64]) -> String {
    let mut s = String::from("element_id,F_K,M_K,class,indicator\n");
    for (k, (t, ind)) in terms.iter().zip(indicators).enumerate() {
        let m = match t.m {
            Ext::Finite(v) => format!("{v:.11e}"),
            Ext::Infinite => "inf".to_string(),
        };
        s.push_str(&format!("{k},{:.11e},{m},{},{ind:.11e}\n", t.f, t.class.label()));
    }
    s
}
