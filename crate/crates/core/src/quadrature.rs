//! Gauss–Legendre rules on [0,1] and collapsed Gauss rules on triangles.
//!
//! Weights are normalized to sum to one, so `∫_K f ≈ |K| Σ w_q f(x_q)` and
//! `∫_γ f ≈ |γ| Σ w_q f(x_q)`.

use std::f64::consts::PI;
use std::sync::OnceLock;

const CACHED_LINE: usize = 40;
const CACHED_TRIANGLE: usize = 60;

/// Gauss–Legendre rule with `n` points, mapped to [0,1]. Exact for degree
/// `2n - 1`.
#[derive(Clone, Debug)]
pub struct LineRule {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl LineRule {
    pub fn gauss(n: usize) -> Self {
        assert!(n >= 1);
        let mut points = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..(n + 1) / 2 {
            // Chebyshev-based initial guess, then Newton on P_n.
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            // x is the i-th largest root; store in ascending order on [0,1].
            points[n - 1 - i] = 0.5 * (1.0 + x);
            points[i] = 0.5 * (1.0 - x);
            weights[n - 1 - i] = 0.5 * w;
            weights[i] = 0.5 * w;
        }
        LineRule { points, weights }
    }

    /// Smallest Gauss rule exact for polynomials of degree `deg`.
    pub fn exact_to(deg: usize) -> Self {
        Self::gauss(deg / 2 + 1)
    }

    /// Shared copy of `gauss(n)`.
    pub fn cached(n: usize) -> &'static LineRule {
        static TABLE: OnceLock<Vec<LineRule>> = OnceLock::new();
        assert!((1..=CACHED_LINE).contains(&n), "no cached Gauss rule with {n} points");
        &TABLE.get_or_init(|| (1..=CACHED_LINE).map(LineRule::gauss).collect())[n - 1]
    }

    /// Shared copy of `exact_to(deg)`.
    pub fn cached_exact(deg: usize) -> &'static LineRule {
        Self::cached(deg / 2 + 1)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Orthonormal Legendre polynomials on [0,1]: `sqrt(2k+1) P_k(2t-1)`,
/// evaluated for k = 0..=deg.
pub fn legendre01(deg: usize, t: f64) -> Vec<f64> {
    let x = 2.0 * t - 1.0;
    let mut out = Vec::with_capacity(deg + 1);
    let (mut p0, mut p1) = (1.0, x);
    for k in 0..=deg {
        let pk = match k {
            0 => 1.0,
            1 => x,
            _ => {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
                p2
            }
        };
        out.push(pk * (2.0 * k as f64 + 1.0).sqrt());
    }
    out
}

/// Quadrature on a triangle in barycentric coordinates.
#[derive(Clone, Debug)]
pub struct TriangleRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

impl TriangleRule {
    /// Collapsed (Duffy) tensor Gauss rule exact for total degree `deg`.
    pub fn exact_to(deg: usize) -> Self {
        // The Jacobian of the collapse adds one degree in the collapsed
        // direction: 2n - 1 >= deg + 1.
        let n = (deg + 3) / 2;
        let g = LineRule::gauss(n);
        let mut points = Vec::with_capacity(n * n);
        let mut weights = Vec::with_capacity(n * n);
        for (t, wt) in g.points.iter().zip(&g.weights) {
            for (s, ws) in g.points.iter().zip(&g.weights) {
                let x = s * (1.0 - t);
                let y = *t;
                points.push([1.0 - x - y, x, y]);
                weights.push(2.0 * ws * wt * (1.0 - t));
            }
        }
        TriangleRule { points, weights }
    }

    /// Shared copy of `exact_to(deg)`.
    pub fn cached(deg: usize) -> &'static TriangleRule {
        static TABLE: OnceLock<Vec<TriangleRule>> = OnceLock::new();
        assert!(deg <= CACHED_TRIANGLE, "no cached triangle rule of degree {deg}");
        &TABLE.get_or_init(|| (0..=CACHED_TRIANGLE).map(TriangleRule::exact_to).collect())[deg]
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}
