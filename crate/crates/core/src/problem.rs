//! Problem description: polygonal geometry, boundary conditions, and
//! piecewise-constant coefficients.
//!
//! Problems are usually read from TOML:
//!
//! ```toml
//! degree = 1
//! vertices = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]
//!
//! [[boundary]]          # segment i joins vertex i to vertex i+1 (cyclic)
//! segments = [0, 1, 2]
//! kind = "dirichlet"
//!
//! [[boundary]]
//! segments = [3]
//! kind = "neumann"
//! alpha = 1.0           # Robin coefficient
//! beta2 = 0.5           # boundary eigenvalue weight
//!
//! [[region]]
//! diffusion = [[1.0, 0.0], [0.0, 1.0]]
//! reaction = 0.0
//! weight = 1.0
//!
//! [mesh]
//! max_area = 0.01
//! min_angle = 25.0
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::geometry::{contains_closed, diameter, polygon_area, validate_polygon, Point};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SegmentKind {
    Dirichlet,
    Neumann { alpha: f64, beta2: f64 },
}

/// Constant coefficients on one region.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Coefficients {
    pub diffusion: [[f64; 2]; 2],
    pub reaction: f64,
    pub weight: f64,
}

impl Default for Coefficients {
    fn default() -> Self {
        Coefficients { diffusion: [[1.0, 0.0], [0.0, 1.0]], reaction: 0.0, weight: 1.0 }
    }
}

impl Coefficients {
    /// Eigenvalues of the diffusion matrix, ascending.
    pub fn diffusion_eigenvalues(&self) -> [f64; 2] {
        let [[a, b], [_, d]] = self.diffusion;
        let m = 0.5 * (a + d);
        let r = (0.25 * (a - d) * (a - d) + b * b).sqrt();
        [m - r, m + r]
    }

    pub fn lambda_min(&self) -> f64 {
        self.diffusion_eigenvalues()[0]
    }

    pub fn diffusion_inverse(&self) -> [[f64; 2]; 2] {
        let [[a, b], [_, d]] = self.diffusion;
        let det = a * d - b * b;
        [[d / det, -b / det], [-b / det, a / det]]
    }

    pub fn apply(&self, v: Point) -> Point {
        let m = self.diffusion;
        [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
    }

    pub fn apply_inverse(&self, v: Point) -> Point {
        let m = self.diffusion_inverse();
        [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
    }

    fn validate(&self, which: usize) -> Result<()> {
        let m = self.diffusion;
        if m[0][1] != m[1][0] {
            return Err(Error::Problem(format!("region {which}: diffusion matrix is not symmetric")));
        }
        if !(self.lambda_min() > 0.0) {
            return Err(Error::Problem(format!("region {which}: diffusion matrix is not positive definite")));
        }
        if !(self.reaction >= 0.0) || !(self.weight >= 0.0) {
            return Err(Error::Problem(format!("region {which}: reaction and weight must be nonnegative")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Region {
    pub coeffs: Coefficients,
    /// Regions without a polygon cover everything not claimed by another region.
    pub polygon: Option<Vec<Point>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeshOptions {
    pub max_area: f64,
    pub min_angle_deg: f64,
    pub file: Option<PathBuf>,
}

impl Default for MeshOptions {
    fn default() -> Self {
        MeshOptions { max_area: f64::INFINITY, min_angle_deg: 25.0, file: None }
    }
}

/// Largest supported polynomial degree.
pub const MAX_DEGREE: usize = 6;

#[derive(Clone, Debug, PartialEq)]
pub struct ProblemSpec {
    pub degree: usize,
    /// Counter-clockwise polygon; segment i joins vertex i and vertex i+1.
    pub vertices: Vec<Point>,
    pub segments: Vec<SegmentKind>,
    pub regions: Vec<Region>,
    pub mesh: MeshOptions,
}

impl ProblemSpec {
    /// Dirichlet Laplacian (A = I, c = 0, β₁ = 1) on a polygon, p = 1.
    pub fn dirichlet_laplacian(vertices: Vec<Point>) -> Self {
        let n = vertices.len();
        ProblemSpec {
            degree: 1,
            vertices,
            segments: vec![SegmentKind::Dirichlet; n],
            regions: vec![Region { coeffs: Coefficients::default(), polygon: None }],
            mesh: MeshOptions::default(),
        }
    }

    pub fn unit_square() -> Self {
        Self::dirichlet_laplacian(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    }

    pub fn rectangle(width: f64, height: f64) -> Self {
        Self::dirichlet_laplacian(vec![[0.0, 0.0], [width, 0.0], [width, height], [0.0, height]])
    }

    pub fn with_degree(mut self, p: usize) -> Self {
        self.degree = p;
        self
    }

    pub fn with_segment(mut self, seg: usize, kind: SegmentKind) -> Self {
        self.segments[seg] = kind;
        self
    }

    pub fn with_coefficients(mut self, coeffs: Coefficients) -> Self {
        self.regions[0].coeffs = coeffs;
        self
    }

    pub fn with_max_area(mut self, a: f64) -> Self {
        self.mesh.max_area = a;
        self
    }

    pub fn diameter(&self) -> f64 {
        diameter(&self.vertices)
    }

    pub fn area(&self) -> f64 {
        polygon_area(&self.vertices)
    }

    pub fn has_dirichlet(&self) -> bool {
        self.segments.iter().any(|s| *s == SegmentKind::Dirichlet)
    }

    pub fn coefficients(&self, region: u32) -> &Coefficients {
        &self.regions[region as usize].coeffs
    }

    /// Robin coefficient α and boundary weight β₂ of a Neumann segment.
    pub fn neumann(&self, segment: u32) -> (f64, f64) {
        match self.segments.get(segment as usize) {
            Some(SegmentKind::Neumann { alpha, beta2 }) => (*alpha, *beta2),
            _ => (0.0, 0.0),
        }
    }

    /// Region id for a point (normally an element centroid).
    pub fn region_of(&self, p: Point) -> u32 {
        let tol = 1e-12 * self.diameter();
        let mut default = 0u32;
        let mut have_default = false;
        for (i, r) in self.regions.iter().enumerate() {
            match &r.polygon {
                Some(poly) if contains_closed(poly, p, tol) => return i as u32,
                None if !have_default => {
                    default = i as u32;
                    have_default = true;
                }
                _ => {}
            }
        }
        default
    }

    /// Full validation, including coercivity of the bilinear form.
    pub fn validate(&self) -> Result<()> {
        self.validate_coefficients()?;
        let has_reaction = self.regions.iter().any(|r| r.coeffs.reaction > 0.0);
        let has_robin = self
            .segments
            .iter()
            .any(|s| matches!(s, SegmentKind::Neumann { alpha, .. } if *alpha > 0.0));
        if !(has_reaction || has_robin || self.has_dirichlet()) {
            return Err(Error::Problem(
                "bilinear form is not coercive: need c > 0 somewhere, alpha > 0 somewhere, or a Dirichlet segment".into(),
            ));
        }
        Ok(())
    }

    /// Geometry and coefficient checks without the coercivity requirement.
    pub fn validate_coefficients(&self) -> Result<()> {
        if self.degree < 1 {
            return Err(Error::Problem("polynomial degree must be at least 1".into()));
        }
        if self.degree > MAX_DEGREE {
            return Err(Error::Problem(format!("polynomial degree must be at most {MAX_DEGREE}")));
        }
        validate_polygon(&self.vertices)?;
        if self.area() <= 0.0 {
            return Err(Error::Geometry("polygon vertices must be in counter-clockwise order".into()));
        }
        if self.segments.len() != self.vertices.len() {
            return Err(Error::Problem(format!(
                "{} boundary segments for {} vertices",
                self.segments.len(),
                self.vertices.len()
            )));
        }
        for (i, s) in self.segments.iter().enumerate() {
            if let SegmentKind::Neumann { alpha, beta2 } = s {
                if !(*alpha >= 0.0 && *beta2 >= 0.0) {
                    return Err(Error::Problem(format!("segment {i}: alpha and beta2 must be nonnegative")));
                }
            }
        }
        if self.regions.is_empty() {
            return Err(Error::Problem("at least one region is required".into()));
        }
        if !self.regions.iter().any(|r| r.polygon.is_none()) {
            return Err(Error::Problem("one region must be the default region (no polygon)".into()));
        }
        for (i, r) in self.regions.iter().enumerate() {
            r.coeffs.validate(i)?;
            if let Some(poly) = &r.polygon {
                validate_polygon(poly)?;
            }
        }
        if !(self.mesh.max_area > 0.0) {
            return Err(Error::Problem("mesh.max_area must be positive".into()));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str, base_dir: Option<&Path>) -> Result<Self> {
        let raw: RawProblem = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        raw.into_spec(base_dir)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text, path.parent())
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProblem {
    #[serde(default = "one")]
    degree: usize,
    vertices: Vec<Point>,
    #[serde(default)]
    boundary: Vec<RawBoundary>,
    #[serde(default)]
    region: Vec<RawRegion>,
    #[serde(default)]
    mesh: Option<RawMesh>,
}

fn one() -> usize {
    1
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBoundary {
    segments: Vec<usize>,
    kind: String,
    #[serde(default)]
    alpha: f64,
    #[serde(default)]
    beta2: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRegion {
    #[serde(default = "identity")]
    diffusion: [[f64; 2]; 2],
    #[serde(default)]
    reaction: f64,
    #[serde(default = "unit")]
    weight: f64,
    #[serde(default)]
    polygon: Option<Vec<Point>>,
}

fn identity() -> [[f64; 2]; 2] {
    [[1.0, 0.0], [0.0, 1.0]]
}

fn unit() -> f64 {
    1.0
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMesh {
    max_area: Option<f64>,
    min_angle: Option<f64>,
    file: Option<PathBuf>,
}

impl RawProblem {
    fn into_spec(self, base_dir: Option<&Path>) -> Result<ProblemSpec> {
        let n = self.vertices.len();
        let mut segments: Vec<Option<SegmentKind>> = vec![None; n];
        for b in &self.boundary {
            let kind = match b.kind.as_str() {
                "dirichlet" => {
                    if b.alpha != 0.0 || b.beta2 != 0.0 {
                        return Err(Error::Problem("dirichlet segments take no alpha/beta2".into()));
                    }
                    SegmentKind::Dirichlet
                }
                "neumann" | "robin" => SegmentKind::Neumann { alpha: b.alpha, beta2: b.beta2 },
                other => return Err(Error::Problem(format!("unknown boundary kind '{other}'"))),
            };
            for &s in &b.segments {
                let slot = segments
                    .get_mut(s)
                    .ok_or_else(|| Error::Problem(format!("segment index {s} out of range")))?;
                if slot.is_some() {
                    return Err(Error::Problem(format!("segment {s} is tagged twice")));
                }
                *slot = Some(kind);
            }
        }
        let segments = segments
            .into_iter()
            .enumerate()
            .map(|(i, s)| s.ok_or_else(|| Error::Problem(format!("segment {i} has no boundary condition"))))
            .collect::<Result<Vec<_>>>()?;
        let mut regions: Vec<Region> = self
            .region
            .into_iter()
            .map(|r| Region {
                coeffs: Coefficients { diffusion: r.diffusion, reaction: r.reaction, weight: r.weight },
                polygon: r.polygon,
            })
            .collect();
        if regions.is_empty() {
            regions.push(Region { coeffs: Coefficients::default(), polygon: None });
        }
        let mut mesh = MeshOptions::default();
        if let Some(m) = self.mesh {
            if let Some(a) = m.max_area {
                mesh.max_area = a;
            }
            if let Some(a) = m.min_angle {
                mesh.min_angle_deg = a;
            }
            mesh.file = m.file.map(|f| match base_dir {
                Some(dir) if f.is_relative() => dir.join(f),
                _ => f,
            });
        }
        let spec = ProblemSpec { degree: self.degree, vertices: self.vertices, segments, regions, mesh };
        spec.validate()?;
        Ok(spec)
    }
}
