//! Adaptive SOLVE → ESTIMATE → MARK → REFINE loop and the nested-domain
//! homotopy that supplies certified shifts.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assembly::{assemble_forms, build_space, prolongate_p1};
use crate::bounds::{combine, fixed_shift, weinstein, ApproxSpectrum, BoundEntry, BoundsReport, NuProvenance};
use crate::eigensolve::{solve_lowest_warm, EigenOptions};
use crate::estimator::{eta_from_residuals, local_indicators, residual_fields_cached, EtaPath};
use crate::flux::{reconstruct_with, FluxCache};
use crate::geometry::contains_closed;
use crate::mesh::{bisect, build_mesh, write_mesh, Mesh};
use crate::problem::SegmentKind;
use crate::{Error, ProblemSpec, Result};

/// How the shift ν for the Kato bound is obtained.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum ShiftMode {
    /// ν = ℓ_{s+1} from the same run; bounds are heuristic.
    Combination,
    /// A supplied ν ≤ λ_{s+1}; bounds are guaranteed iff the provenance is certified.
    Fixed { nu: f64, provenance: NuProvenance },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AdaptiveConfig {
    /// First requested index (1-based).
    pub r: usize,
    /// Last requested index.
    pub s: usize,
    pub theta: f64,
    /// The loop stops before a refinement would push the number of free
    /// dofs above this.
    pub max_dofs: usize,
    pub mode: ShiftMode,
    pub lambda1_lower: Option<f64>,
    /// Marking with all elements instead of the bulk criterion.
    pub uniform: bool,
    pub max_iterations: usize,
    pub eigen: EigenOptions,
    /// Keep a text snapshot of every mesh in the trace.
    pub snapshots: bool,
}

impl Default for AdaptiveConfig {
    fn default() -> Self {
        AdaptiveConfig {
            r: 1,
            s: 1,
            theta: 0.5,
            max_dofs: 100_000,
            mode: ShiftMode::Combination,
            lambda1_lower: None,
            uniform: false,
            max_iterations: 200,
            eigen: EigenOptions::default(),
            snapshots: false,
        }
    }
}

impl AdaptiveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(Error::Config(format!("theta must lie in (0, 1], got {}", self.theta)));
        }
        if self.r < 1 || self.s < self.r {
            return Err(Error::Config(format!("invalid index range {}:{}", self.r, self.s)));
        }
        if self.max_dofs == 0 {
            return Err(Error::Config("dof budget must be positive".into()));
        }
        if let ShiftMode::Fixed { nu, .. } = self.mode {
            if !(nu > 0.0 && nu.is_finite()) {
                return Err(Error::Config(format!("shift must be positive, got {nu}")));
            }
        }
        if let Some(l) = self.lambda1_lower {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::Config(format!("lower bound for the first eigenvalue must be positive, got {l}")));
            }
        }
        Ok(())
    }

    /// Number of eigenpairs solved for per iteration.
    pub fn pairs_needed(&self) -> usize {
        match self.mode {
            ShiftMode::Combination => self.s + 1,
            ShiftMode::Fixed { .. } => self.s,
        }
    }
}

/// Selects a minimal set of elements whose squared indicators reach θ² of
/// the total, taking larger indicators first and breaking ties by id.
/// Returns an empty set when every indicator vanishes.
pub fn doerfler_mark(indicators: &[f64], theta: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..indicators.len()).filter(|&k| indicators[k] > 0.0).collect();
    order.sort_by(|&a, &b| indicators[b].total_cmp(&indicators[a]).then(a.cmp(&b)));
    // Summing in the same order makes θ = 1 reach the total exactly.
    let total: f64 = order.iter().map(|&k| indicators[k] * indicators[k]).sum();
    let target = theta * theta * total;
    let mut acc = 0.0;
    let mut marked = Vec::new();
    for k in order {
        if acc >= target {
            break;
        }
        acc += indicators[k] * indicators[k];
        marked.push(k);
    }
    marked
}

#[derive(Clone, Debug, Serialize)]
pub struct MeshStats {
    pub vertices: usize,
    pub triangles: usize,
    pub max_h: f64,
    pub min_angle_deg: f64,
}

impl MeshStats {
    fn of(mesh: &Mesh) -> Self {
        let max_h = (0..mesh.num_triangles()).map(|t| mesh.geom(t).h).fold(0.0, f64::max);
        MeshStats {
            vertices: mesh.num_vertices(),
            triangles: mesh.num_triangles(),
            max_h,
            min_angle_deg: mesh.min_angle().to_degrees(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Iteration {
    pub iter: usize,
    pub dofs: usize,
    pub mesh: MeshStats,
    /// λ_{h,n} for every solved pair (indices r..).
    pub lambdas: Vec<f64>,
    pub etas: Vec<f64>,
    pub eta_paths: Vec<EtaPath>,
    pub report: BoundsReport,
    /// Why the Kato bound is absent, if it is.
    pub kato_note: Option<String>,
    pub marked: usize,
    pub wall_seconds: f64,
    #[serde(skip)]
    pub mesh_text: Option<String>,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct RunTrace {
    pub iterations: Vec<Iteration>,
}

impl RunTrace {
    pub fn last(&self) -> Option<&Iteration> {
        self.iterations.last()
    }

    pub fn final_report(&self) -> Option<&BoundsReport> {
        self.last().map(|it| &it.report)
    }

    /// `iter,dofs,n,upper,eta,weinstein,kato,lower,guaranteed`, one row per
    /// iteration and index; absent Kato values are empty fields.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,dofs,n,upper,eta,weinstein,kato,lower,guaranteed\n");
        for it in &self.iterations {
            for e in &it.report.entries {
                out.push_str(&csv_row(it.iter, it.dofs, e));
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serializes")
    }
}

fn csv_row(iter: usize, dofs: usize, e: &BoundEntry) -> String {
    let kato = e.kato.map(|k| format!("{k:.11e}")).unwrap_or_default();
    format!(
        "{iter},{dofs},{},{:.11e},{:.11e},{:.11e},{kato},{:.11e},{}\n",
        e.n, e.upper, e.eta, e.weinstein, e.lower, e.guaranteed
    )
}

/// Error from [`adapt`] together with everything computed before it.
#[derive(Debug)]
pub struct AdaptFailure {
    pub trace: RunTrace,
    pub error: Error,
}

impl std::fmt::Display for AdaptFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} (after {} completed iterations)", self.error, self.trace.iterations.len())
    }
}

impl std::error::Error for AdaptFailure {}

/// Bounds for one iteration when Kato cannot run: ℓ_n only, not guaranteed.
fn weinstein_only(approx: &ApproxSpectrum, upto: usize) -> BoundsReport {
    let entries = (approx.first..=upto)
        .map(|n| {
            let (l, e) = (approx.lambda(n), approx.eta(n));
            let w = weinstein(l, e);
            BoundEntry {
                n,
                upper: l,
                eta: e,
                weinstein: w,
                kato: None,
                lower: w,
                nu: None,
                nu_provenance: None,
                guaranteed: false,
                closeness: false,
            }
        })
        .collect();
    BoundsReport { entries, gaps: approx.lambdas.windows(2).map(|w| w[1] - w[0]).collect() }
}

fn bounds_for(approx: &ApproxSpectrum, cfg: &AdaptiveConfig) -> Result<(BoundsReport, Option<String>)> {
    match cfg.mode {
        ShiftMode::Combination => {
            let rep = combine(approx)?;
            let note = rep.entries[0].kato.is_none().then(|| {
                format!(
                    "no level of the Kato recursion passed the gap check (nu = ell_(s+1) = {:.6e})",
                    weinstein(approx.lambda(cfg.s + 1), approx.eta(cfg.s + 1))
                )
            });
            Ok((rep, note))
        }
        ShiftMode::Fixed { nu, provenance } => match fixed_shift(approx, nu, provenance) {
            Ok(rep) => Ok((rep, None)),
            Err(e @ Error::ShiftTooSmall { .. }) => Ok((weinstein_only(approx, cfg.s), Some(e.to_string()))),
            Err(e) => Err(e),
        },
    }
}

struct Solved {
    iteration: Iteration,
    indicators: Vec<f64>,
    vectors: Vec<Vec<f64>>,
}

fn solve_step(mesh: &Mesh, spec: &ProblemSpec, cfg: &AdaptiveConfig, warm: &[Vec<f64>], iter: usize) -> Result<Solved> {
    let start = Instant::now();
    let dofs = build_space(mesh, spec)?;
    let (a, b) = assemble_forms(mesh, spec, &dofs)?;
    let m = cfg.pairs_needed();
    let warm_free: Vec<Vec<f64>> = warm.iter().map(|u| dofs.restrict(u)).collect();
    let sol = solve_lowest_warm(&a, &b, m, &cfg.eigen, &warm_free)?;
    let full: Vec<Vec<f64>> = sol.vectors.iter().map(|v| dofs.expand(v)).collect();
    let idx: Vec<usize> = (cfg.r - 1..m).collect();
    let pairs: Vec<(f64, &[f64])> = idx.iter().map(|&i| (sol.values[i], full[i].as_slice())).collect();
    let cache = FluxCache::new(mesh, spec, dofs.p)?;
    let (fluxes, _) = reconstruct_with(mesh, spec, &dofs, &cache, &pairs)?;
    let estimates = pairs
        .par_iter()
        .zip(&fluxes)
        .map(|(&(lambda, u), q)| {
            let res = residual_fields_cached(mesh, spec, &dofs, u, lambda, q, &cache)?;
            Ok((eta_from_residuals(mesh, spec, &res, cfg.lambda1_lower)?, res))
        })
        .collect::<Result<Vec<_>>>()?;
    let flux_norms: Vec<Vec<f64>> = estimates.iter().map(|(_, res)| res.elements.iter().map(|e| e.flux).collect()).collect();
    let indicators = local_indicators(&flux_norms);
    let lambdas: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let etas: Vec<f64> = estimates.iter().map(|(e, _)| e.eta).collect();
    let approx = ApproxSpectrum::new(cfg.r, lambdas.clone(), etas.clone())?;
    let (report, kato_note) = bounds_for(&approx, cfg)?;
    Ok(Solved {
        iteration: Iteration {
            iter,
            dofs: dofs.n_free(),
            mesh: MeshStats::of(mesh),
            lambdas,
            etas,
            eta_paths: estimates.iter().map(|(e, _)| e.path).collect(),
            report,
            kato_note,
            marked: 0,
            wall_seconds: start.elapsed().as_secs_f64(),
            mesh_text: cfg.snapshots.then(|| write_mesh(mesh)),
        },
        indicators,
        vectors: full,
    })
}

fn free_dof_count(mesh: &Mesh, spec: &ProblemSpec) -> Result<usize> {
    Ok(build_space(mesh, spec)?.n_free())
}

/// Runs the adaptive loop from the initial mesh of `spec`.
pub fn adapt(spec: &ProblemSpec, cfg: &AdaptiveConfig) -> std::result::Result<RunTrace, Box<AdaptFailure>> {
    let fail = |trace: RunTrace, error: Error| Box::new(AdaptFailure { trace, error });
    if let Err(e) = cfg.validate().and_then(|_| spec.validate()) {
        return Err(fail(RunTrace::default(), e));
    }
    let mesh = match build_mesh(spec) {
        Ok(m) => m,
        Err(e) => return Err(fail(RunTrace::default(), e)),
    };
    adapt_from(spec, mesh, cfg)
}

/// Runs the adaptive loop from a given initial mesh.
pub fn adapt_from(spec: &ProblemSpec, mut mesh: Mesh, cfg: &AdaptiveConfig) -> std::result::Result<RunTrace, Box<AdaptFailure>> {
    let mut trace = RunTrace::default();
    let mut warm: Vec<Vec<f64>> = Vec::new();
    for iter in 0..cfg.max_iterations {
        let step = match solve_step(&mesh, spec, cfg, &warm, iter) {
            Ok(s) => s,
            Err(error) => return Err(Box::new(AdaptFailure { trace, error })),
        };
        let Solved { mut iteration, indicators, vectors } = step;
        let mut marked = if cfg.uniform { vec![] } else { doerfler_mark(&indicators, cfg.theta) };
        if marked.is_empty() {
            marked = (0..mesh.num_triangles()).collect();
        }
        let next = bisect(&mesh, &marked);
        let next_dofs = match free_dof_count(&next, spec) {
            Ok(n) => n,
            Err(error) => return Err(Box::new(AdaptFailure { trace, error })),
        };
        let stop = next_dofs > cfg.max_dofs || iter + 1 == cfg.max_iterations;
        iteration.marked = if stop { 0 } else { marked.len() };
        trace.iterations.push(iteration);
        if stop {
            break;
        }
        warm = if spec.degree == 1 { vectors.iter().map(|u| prolongate_p1(&next, u)).collect() } else { Vec::new() };
        mesh = next;
    }
    Ok(trace)
}

/// Closed-form Dirichlet-Laplacian eigenvalues of an axis-aligned rectangle
/// of width `w` and height `h`, the lowest `count` in ascending order.
pub fn rectangle_eigenvalues(w: f64, h: f64, count: usize) -> Vec<f64> {
    let pi2 = std::f64::consts::PI * std::f64::consts::PI;
    // Every eigenvalue below the count-th one has i ≤ count and j ≤ count.
    let mut all: Vec<f64> = (1..=count)
        .flat_map(|i| (1..=count).map(move |j| pi2 * ((i * i) as f64 / (w * w) + (j * j) as f64 / (h * h))))
        .collect();
    all.sort_by(f64::total_cmp);
    all.truncate(count);
    all
}

/// The Dirichlet Laplacian on an axis-aligned rectangle, if `spec` is one:
/// returns (width, height).
pub fn analytic_rectangle(spec: &ProblemSpec) -> Option<(f64, f64)> {
    let v = &spec.vertices;
    if v.len() != 4 || spec.regions.len() != 1 || !spec.segments.iter().all(|s| *s == SegmentKind::Dirichlet) {
        return None;
    }
    let c = &spec.regions[0].coeffs;
    if c.diffusion != [[1.0, 0.0], [0.0, 1.0]] || c.reaction != 0.0 || c.weight != 1.0 {
        return None;
    }
    let xs: Vec<f64> = v.iter().map(|p| p[0]).collect();
    let ys: Vec<f64> = v.iter().map(|p| p[1]).collect();
    let (x0, x1) = (xs.iter().cloned().fold(f64::INFINITY, f64::min), xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    let (y0, y1) = (ys.iter().cloned().fold(f64::INFINITY, f64::min), ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    let corner = |p: &[f64; 2]| (p[0] == x0 || p[0] == x1) && (p[1] == y0 || p[1] == y1);
    let axis = (0..4).all(|i| {
        let (a, b) = (v[i], v[(i + 1) % 4]);
        a[0] == b[0] || a[1] == b[1]
    });
    (v.iter().all(corner) && axis && x1 > x0 && y1 > y0).then_some((x1 - x0, y1 - y0))
}

/// Plan file as written on disk.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPlan {
    analytic: RawAnalytic,
    #[serde(default)]
    stage: Vec<RawStage>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAnalytic {
    problem: PathBuf,
    nu_index: usize,
    nu: Option<f64>,
    lambda1_lower: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStage {
    problem: PathBuf,
    s: usize,
    transfer: Option<usize>,
    #[serde(default = "default_theta")]
    theta: f64,
    #[serde(default = "default_budget")]
    max_dofs: usize,
}

fn default_theta() -> f64 {
    0.5
}

fn default_budget() -> usize {
    100_000
}

#[derive(Clone, Debug)]
pub struct HomotopyStage {
    pub name: String,
    pub spec: ProblemSpec,
    pub config: AdaptiveConfig,
    /// Index whose lower bound becomes the next stage's ν.
    pub transfer: Option<usize>,
}

/// Nested domains Ω⁽⁰⁾ ⊇ Ω⁽¹⁾ ⊇ … with a closed-form spectrum on Ω⁽⁰⁾.
#[derive(Clone, Debug)]
pub struct HomotopyPlan {
    pub base: ProblemSpec,
    /// Rectangle width and height of the base domain.
    pub base_size: (f64, f64),
    /// ν for stage 1 is the analytic eigenvalue with this index (or `nu`, if given, which must not exceed it).
    pub nu_index: usize,
    pub nu: Option<f64>,
    pub lambda1_lower: Option<f64>,
    pub stages: Vec<HomotopyStage>,
}

impl HomotopyPlan {
    /// Reads a plan; problem paths are relative to the plan file.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self> {
        let raw: RawPlan = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let load = |p: &Path| ProblemSpec::from_file(&base_dir.join(p));
        let base = load(&raw.analytic.problem)?;
        let base_size = analytic_rectangle(&base)
            .ok_or_else(|| Error::Homotopy { stage: 0, message: "base problem must be the Dirichlet Laplacian on an axis-aligned rectangle".into() })?;
        let lambda1 = raw.analytic.lambda1_lower.unwrap_or_else(|| rectangle_eigenvalues(base_size.0, base_size.1, 1)[0]);
        let stages = raw
            .stage
            .iter()
            .map(|st| {
                let spec = load(&st.problem)?;
                let config = AdaptiveConfig {
                    r: 1,
                    s: st.s,
                    theta: st.theta,
                    max_dofs: st.max_dofs,
                    // The shift is filled in while the chain runs.
                    mode: ShiftMode::Fixed { nu: 1.0, provenance: NuProvenance::Homotopy },
                    lambda1_lower: Some(lambda1),
                    ..Default::default()
                };
                Ok(HomotopyStage { name: st.problem.display().to_string(), spec, config, transfer: st.transfer })
            })
            .collect::<Result<Vec<_>>>()?;
        let plan = HomotopyPlan {
            base,
            base_size,
            nu_index: raw.analytic.nu_index,
            nu: raw.analytic.nu,
            lambda1_lower: Some(lambda1),
            stages,
        };
        plan.validate()?;
        Ok(plan)
    }

    /// Lowest `count` eigenvalues of the base rectangle.
    pub fn analytic(&self, count: usize) -> Vec<f64> {
        rectangle_eigenvalues(self.base_size.0, self.base_size.1, count)
    }

    /// Shift for stage 1.
    pub fn initial_nu(&self) -> f64 {
        let exact = self.analytic(self.nu_index)[self.nu_index - 1];
        self.nu.unwrap_or(exact)
    }

    /// Checks nesting and index bookkeeping along the chain.
    pub fn validate(&self) -> Result<()> {
        let err = |stage: usize, message: String| Error::Homotopy { stage, message };
        if self.nu_index < 2 {
            return Err(err(0, "nu_index must be at least 2".into()));
        }
        let exact = self.analytic(self.nu_index)[self.nu_index - 1];
        if let Some(nu) = self.nu {
            if !(nu > 0.0 && nu <= exact) {
                return Err(err(0, format!("nu = {nu} exceeds the analytic eigenvalue {exact} with index {}", self.nu_index)));
            }
        }
        let mut outer = &self.base;
        let mut k = self.nu_index;
        for (i, st) in self.stages.iter().enumerate() {
            let stage = i + 1;
            check_nested(outer, &st.spec).map_err(|m| err(stage, m))?;
            if st.config.s + 1 > k {
                return Err(err(stage, format!("s = {} needs a shift below eigenvalue {}, but the incoming shift only bounds eigenvalue {k}", st.config.s, st.config.s + 1)));
            }
            st.config.validate().map_err(|e| err(stage, e.to_string()))?;
            let last = stage == self.stages.len();
            match st.transfer {
                Some(t) if t >= 1 && t <= st.config.s => k = t,
                Some(t) => return Err(err(stage, format!("transfer index {t} is outside 1..={}", st.config.s))),
                None if !last => return Err(err(stage, "intermediate stages need a transfer index".into())),
                None => {}
            }
            outer = &st.spec;
        }
        Ok(())
    }
}

fn check_nested(outer: &ProblemSpec, inner: &ProblemSpec) -> std::result::Result<(), String> {
    let tol = 1e-12 * outer.diameter();
    for p in &inner.vertices {
        if !contains_closed(&outer.vertices, *p, tol) {
            return Err(format!("vertex ({}, {}) lies outside the previous domain", p[0], p[1]));
        }
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct StageResult {
    pub stage: usize,
    pub name: String,
    pub nu: f64,
    pub nu_provenance: NuProvenance,
    pub trace: RunTrace,
    /// Lower bound handed to the next stage.
    pub transferred: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct HomotopyResult {
    /// Closed-form eigenvalues of the base rectangle up to the initial ν index.
    pub analytic: Vec<f64>,
    pub initial_nu: f64,
    pub stages: Vec<StageResult>,
}

impl HomotopyResult {
    pub fn final_report(&self) -> Option<&BoundsReport> {
        self.stages.last().and_then(|s| s.trace.final_report())
    }
}

/// Error from [`run_homotopy`] with the stages finished so far.
#[derive(Debug)]
pub struct HomotopyFailure {
    pub partial: HomotopyResult,
    /// Trace of the failing stage, if it got that far.
    pub trace: Option<RunTrace>,
    pub error: Error,
}

impl std::fmt::Display for HomotopyFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.error.fmt(f)
    }
}

impl std::error::Error for HomotopyFailure {}

/// Runs every stage in fixed-shift mode, each stage's certified lower bound
/// at its transfer index becoming the next shift.
pub fn run_homotopy(plan: &HomotopyPlan, eigen: &EigenOptions) -> std::result::Result<HomotopyResult, Box<HomotopyFailure>> {
    let mut result = HomotopyResult { analytic: plan.analytic(plan.nu_index), initial_nu: plan.initial_nu(), stages: vec![] };
    if let Err(error) = plan.validate() {
        return Err(Box::new(HomotopyFailure { partial: result, trace: None, error }));
    }
    let mut nu = result.initial_nu;
    let mut provenance = NuProvenance::Analytic;
    for (i, st) in plan.stages.iter().enumerate() {
        let stage = i + 1;
        let cfg = AdaptiveConfig { mode: ShiftMode::Fixed { nu, provenance }, eigen: *eigen, ..st.config.clone() };
        let trace = match adapt(&st.spec, &cfg) {
            Ok(t) => t,
            Err(f) => {
                let error = Error::Homotopy { stage, message: f.error.to_string() };
                return Err(Box::new(HomotopyFailure { partial: result, trace: Some(f.trace), error }));
            }
        };
        let last = trace.last().expect("at least one iteration");
        if let Some(note) = &last.kato_note {
            let error = Error::Homotopy { stage, message: format!("no certified bounds on the final mesh: {note}") };
            return Err(Box::new(HomotopyFailure { partial: result, trace: Some(trace), error }));
        }
        let transferred = st.transfer.map(|t| last.report.entry(t).expect("transfer index within r..s").lower);
        result.stages.push(StageResult { stage, name: st.name.clone(), nu, nu_provenance: provenance, trace, transferred });
        if let Some(next) = transferred {
            nu = next;
            provenance = NuProvenance::Homotopy;
        }
    }
    Ok(result)
}
