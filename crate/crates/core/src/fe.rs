//! Lagrange P_p shape functions on a triangle, in barycentric form.
//!
//! Local node order: the three vertices; then the p-1 nodes of each local
//! edge (edge `e` runs from local vertex `e+1` to `e+2`, nodes listed from
//! its first endpoint); then interior nodes.

use crate::geometry::{Point, TriGeom};

#[derive(Clone, Debug)]
pub struct LagrangeBasis {
    pub p: usize,
    /// Multi-indices (i, j, k) with i + j + k = p; node at (i, j, k) / p.
    pub nodes: Vec<[usize; 3]>,
}

impl LagrangeBasis {
    pub fn new(p: usize) -> Self {
        assert!(p >= 1, "degree must be at least 1");
        let mut nodes = Vec::with_capacity((p + 1) * (p + 2) / 2);
        for v in 0..3 {
            let mut m = [0; 3];
            m[v] = p;
            nodes.push(m);
        }
        for e in 0..3 {
            let (a, b) = ((e + 1) % 3, (e + 2) % 3);
            for k in 1..p {
                let mut m = [0; 3];
                m[a] = p - k;
                m[b] = k;
                nodes.push(m);
            }
        }
        for i in 1..p {
            for j in 1..p - i {
                nodes.push([i, j, p - i - j]);
            }
        }
        LagrangeBasis { p, nodes }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn num_interior(&self) -> usize {
        if self.p < 3 {
            0
        } else {
            (self.p - 1) * (self.p - 2) / 2
        }
    }

    pub fn node_bary(&self, i: usize) -> [f64; 3] {
        self.nodes[i].map(|m| m as f64 / self.p as f64)
    }

    fn factor(&self, m: usize, l: f64) -> (f64, f64) {
        // f(λ) = Π_{k<m} (pλ - k)/(m - k) and its derivative.
        let p = self.p as f64;
        let mut val = 1.0;
        let mut der = 0.0;
        for k in 0..m {
            let denom = (m - k) as f64;
            let t = (p * l - k as f64) / denom;
            der = der * t + val * p / denom;
            val *= t;
        }
        (val, der)
    }

    pub fn eval(&self, b: [f64; 3], out: &mut [f64]) {
        for (o, m) in out.iter_mut().zip(&self.nodes) {
            *o = (0..3).map(|c| self.factor(m[c], b[c]).0).product();
        }
    }

    /// Values and physical gradients at barycentric point `b` of element `g`.
    pub fn eval_grad(&self, b: [f64; 3], g: &TriGeom, vals: &mut [f64], grads: &mut [Point]) {
        for (i, m) in self.nodes.iter().enumerate() {
            let f: [(f64, f64); 3] = std::array::from_fn(|c| self.factor(m[c], b[c]));
            vals[i] = f[0].0 * f[1].0 * f[2].0;
            let d = [f[0].1 * f[1].0 * f[2].0, f[0].0 * f[1].1 * f[2].0, f[0].0 * f[1].0 * f[2].1];
            grads[i] = [
                d[0] * g.grad_bary[0][0] + d[1] * g.grad_bary[1][0] + d[2] * g.grad_bary[2][0],
                d[0] * g.grad_bary[0][1] + d[1] * g.grad_bary[1][1] + d[2] * g.grad_bary[2][1],
            ];
        }
    }
}
