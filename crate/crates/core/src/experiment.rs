//! Configuration-driven sweeps: ground state, ansatz, energy landscape,
//! reduced model and Newton solve for every ε of a config, with fixed-name
//! outputs per point and a summary written once at the end.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ansatz::{admissible_interval, build_segregated, build_synchronized, chord, PeakConfiguration};
use crate::coupled::{classify, CoupledParams};
use crate::energy::{
    energy, moments, multipeak_interaction_constant, multipeak_prediction_seg, multipeak_prediction_sync,
    seg_coefficients, seg_cross_term, seg_interaction_constant, single_peak_energy_sync, sync_coefficients,
    EnergyBreakdown, Moments, PotentialModel, MIN_SEPARATION,
};
use crate::error::{Error, Result};
use crate::grid::{GridField, GridSpec};
use crate::ground_state::{solve_ground_state, RadialProfile};
use crate::numerics::linear_fit;
use crate::reduction::{
    measured_landscape, minimize_model, minimize_segregated, predicted_radius, Landscape, ReducedMode, ReducedModel,
};
use crate::solver::{
    correction_norm, eps_norm, fit_ansatz_radius, newton_solve, profile_gap_seg, profile_gap_sync, residual_dual_norm,
    AnsatzFamily, GapRotation, Mode, Problem, SolveReport, SolverOptions,
};
use crate::spectral::{fft_friendly, LaplaceKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialP {
    pub a: f64,
    pub m: f64,
    #[serde(default = "one")]
    pub theta: f64,
    #[serde(default)]
    pub c_hot: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialQ {
    pub b: f64,
    pub n: f64,
    #[serde(default = "one")]
    pub delta: f64,
    #[serde(default)]
    pub c_hot: f64,
}

/// Grid lengths are in units of ε.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    /// Newton and energy grids use `h = ε / spacing_ratio`.
    pub spacing_ratio: f64,
    /// Distance from the outermost peak to the box face.
    pub margin: f64,
    /// Largest admissible node count per axis.
    pub max_nodes: usize,
    pub landscape_samples: usize,
    pub landscape_spacing_ratio: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { spacing_ratio: 4.0, margin: 6.0, max_nodes: 97, landscape_samples: 17, landscape_spacing_ratio: 4.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub enabled: bool,
    pub newton_tol: f64,
    pub max_iters: usize,
    pub laplace: LaplaceKind,
    pub peak_threshold: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { enabled: true, newton_tol: 1e-8, max_iters: 30, laplace: LaplaceKind::Spectral, peak_threshold: 0.3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GroundStateConfig {
    /// Outer radius of the radial ODE, in units of the peak width.
    pub r_max: f64,
    pub nodes: usize,
}

impl Default for GroundStateConfig {
    fn default() -> Self {
        Self { r_max: 25.0, nodes: 8000 }
    }
}

fn one() -> f64 {
    1.0
}

fn default_delta() -> f64 {
    0.4
}

fn default_beta_guard() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub mu1: f64,
    pub mu2: f64,
    pub beta: f64,
    pub k: usize,
    pub eps_list: Vec<f64>,
    /// Half-width δ of the admissible radius window.
    #[serde(default = "default_delta")]
    pub delta_seps: f64,
    /// Segregated runs require `beta < beta_guard`.
    #[serde(default = "default_beta_guard")]
    pub beta_guard: f64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    pub p: PotentialP,
    pub q: PotentialQ,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub ground_state: GroundStateConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn potentials(&self) -> Result<(PotentialModel, PotentialModel)> {
        Ok((
            PotentialModel::new(self.p.a, self.p.m, self.p.c_hot, self.p.theta)?,
            PotentialModel::new(self.q.b, self.q.n, self.q.c_hot, self.q.delta)?,
        ))
    }

    /// Leading exponent `min{m, n}` of the admissible window.
    pub fn lead_exponent(&self) -> f64 {
        self.p.m.min(self.q.n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub message: String,
}

impl Diagnostic {
    fn error(message: impl Into<String>) -> Self {
        Self { severity: Severity::Error, message: message.into() }
    }

    fn warning(message: impl Into<String>) -> Self {
        Self { severity: Severity::Warning, message: message.into() }
    }
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{tag}: {}", self.message)
    }
}

/// Every violated or marginal hypothesis of the config; never mutates it.
pub fn validate(config: &ExperimentConfig) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let c = config;
    if !(c.mu1 > 0.0 && c.mu2 > 0.0) {
        out.push(Diagnostic::error(format!("mu1 and mu2 must be positive, got ({}, {})", c.mu1, c.mu2)));
        return out;
    }
    if c.k == 0 {
        out.push(Diagnostic::error("k must be at least 1"));
    }
    if c.eps_list.is_empty() {
        out.push(Diagnostic::error("eps_list is empty"));
    }
    for &e in &c.eps_list {
        if !(e > 0.0 && e < 1.0) {
            out.push(Diagnostic::error(format!("eps = {e} outside (0, 1)")));
        }
    }
    let mut sorted = c.eps_list.clone();
    sorted.sort_by(f64::total_cmp);
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        out.push(Diagnostic::error("eps_list contains duplicates"));
    }
    if !(c.p.m > 1.0 && c.q.n > 1.0) {
        out.push(Diagnostic::error(format!("exponents must exceed 1, got m = {}, n = {}", c.p.m, c.q.n)));
    }
    if !(c.p.theta > 0.0 && c.q.delta > 0.0) {
        out.push(Diagnostic::error("higher-order exponents theta and delta must be positive"));
    }
    let lead = c.lead_exponent();
    if !(c.delta_seps > 0.0 && c.delta_seps < lead) {
        out.push(Diagnostic::error(format!("delta_seps = {} outside (0, min(m, n) = {lead})", c.delta_seps)));
    }
    if c.grid.spacing_ratio < 4.0 || c.grid.landscape_spacing_ratio < 4.0 {
        out.push(Diagnostic::error("grid spacing ratios below 4 do not resolve eps (h must be at most eps/4)"));
    }
    if c.grid.landscape_samples < 3 {
        out.push(Diagnostic::error("landscape_samples must be at least 3"));
    }
    if c.grid.margin < 4.0 {
        out.push(Diagnostic::warning(format!(
            "box margin {} eps leaves visible truncation of the peak tails",
            c.grid.margin
        )));
    }
    let product = c.mu1 * c.mu2;
    if ((c.beta * c.beta - product) / product).abs() < 0.05 {
        out.push(Diagnostic::warning(format!(
            "beta^2 = {} within 5% of mu1*mu2 = {product}: amplitude blow-up risk",
            c.beta * c.beta
        )));
    }
    match c.mode {
        Mode::Sync => validate_sync(c, &mut out),
        Mode::Seg => validate_seg(c, &mut out),
    }
    out
}

fn validate_sync(c: &ExperimentConfig, out: &mut Vec<Diagnostic>) {
    let params = match classify(c.mu1, c.mu2, c.beta) {
        Ok(p) => p,
        Err(e) => {
            out.push(Diagnostic::error(e.to_string()));
            return;
        }
    };
    if !params.regime.is_synchronized() {
        out.push(Diagnostic::error(format!(
            "beta = {} outside the synchronized window (-sqrt(mu1 mu2), min(mu1, mu2)) or (max(mu1, mu2), inf)",
            c.beta
        )));
        return;
    }
    if params.is_decoupled() {
        out.push(Diagnostic::warning("beta = 0: decoupled limit, coupling tests are vacuous"));
    }
    let (a, m, b, n) = (c.p.a, c.p.m, c.q.b, c.q.n);
    if m < n && !(a > 0.0) {
        out.push(Diagnostic::error(format!("condition (1) violated: m < n requires a > 0, got a = {a}")));
    } else if m > n && !(b > 0.0) {
        out.push(Diagnostic::error(format!("condition (1) violated: m > n requires b > 0, got b = {b}")));
    } else if m == n {
        let w = solve_ground_state(1.0, 25.0, 4000);
        if let Ok(w) = w {
            if let Ok(coef) = sync_coefficients(&params, &moments(&w)) {
                let s = a * coef.b + b * coef.c0_coeff;
                if !(s > 0.0) {
                    out.push(Diagnostic::error(format!(
                        "condition (2) violated: m = n requires aB + bC0 > 0, got {s:.6}"
                    )));
                }
            }
        }
    }
}

fn validate_seg(c: &ExperimentConfig, out: &mut Vec<Diagnostic>) {
    if !(c.beta < c.beta_guard) {
        out.push(Diagnostic::error(format!(
            "segregated mode requires beta < beta_guard = {}, got {}",
            c.beta_guard, c.beta
        )));
    }
    if c.p.m != c.q.n {
        out.push(Diagnostic::error(format!("segregated mode requires m = n, got m = {}, n = {}", c.p.m, c.q.n)));
    }
    if !(c.p.a > 0.0 && c.q.b > 0.0) {
        out.push(Diagnostic::error(format!(
            "segregated mode requires a > 0 and b > 0, got a = {}, b = {}",
            c.p.a, c.q.b
        )));
    }
}

/// Fails with every error diagnostic joined into one message.
pub fn check(config: &ExperimentConfig) -> Result<()> {
    let errors: Vec<String> =
        validate(config).into_iter().filter(|d| d.severity == Severity::Error).map(|d| d.message).collect();
    if errors.is_empty() {
        Ok(())
    } else {
        Err(Error::ConfigInvalid(errors.join("; ")))
    }
}

/// Smallest cube grid with `h = ε / ratio`, an FFT-friendly node count, and
/// `margin · ε` between `extent` and the faces.
pub fn grid_for(eps: f64, ratio: f64, extent: f64, margin: f64, max_nodes: usize) -> Result<GridSpec> {
    let h = eps / ratio;
    let half = ((extent + margin * eps) / h - 1e-9).ceil() as usize;
    let n = fft_friendly(2 * half + 1);
    if n > max_nodes {
        return Err(Error::InvalidParam(format!("grid needs {n} nodes per axis, above the cap {max_nodes}")));
    }
    GridSpec::new(h * ((n - 1) / 2) as f64, n)
}

/// One row per (ε, mode) point; every key is always present.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PointSummary {
    pub mode: Option<Mode>,
    pub eps: f64,
    pub k: usize,
    pub predicted_radius: Option<f64>,
    pub window_low: Option<f64>,
    pub window_high: Option<f64>,
    pub interaction_constant: Option<f64>,
    pub model_r_star: Option<f64>,
    pub model_rho_star: Option<f64>,
    pub model_interior: Option<bool>,
    pub cross_term: Option<f64>,
    pub cross_term_ratio: Option<f64>,
    pub landscape_minimizer: Option<f64>,
    pub landscape_relative_error: Option<f64>,
    pub landscape_is_valley: Option<bool>,
    pub expansion_slope: Option<f64>,
    pub ansatz_energy: Option<f64>,
    pub predicted_energy: Option<f64>,
    pub ansatz_dual_norm: Option<f64>,
    pub newton_converged: Option<bool>,
    pub newton_iterations: Option<usize>,
    pub final_residual: Option<f64>,
    pub quadratic_constant: Option<f64>,
    pub peak_census_u: Option<(usize, usize)>,
    pub peak_census_v: Option<(usize, usize)>,
    pub symmetry_defect_initial: Option<f64>,
    pub symmetry_defect_final: Option<f64>,
    pub fitted_r: Option<f64>,
    pub fitted_rho: Option<f64>,
    pub correction_norm: Option<f64>,
    pub ansatz_norm: Option<f64>,
    pub correction_ratio: Option<f64>,
    pub profile_gap_h1: Option<f64>,
    pub profile_gap_sup: Option<f64>,
    pub profile_gap_aligned_h1: Option<f64>,
    pub profile_gap_aligned_sup: Option<f64>,
    pub resumed: bool,
    pub errors: Vec<String>,
}

/// Cross-ε comparisons, ordered from the largest ε to the smallest.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trends {
    pub eps_descending: Vec<f64>,
    /// `ln(N_i / N_{i+1}) / ln(ε_i / ε_{i+1})` for consecutive correction norms.
    pub correction_exponents: Vec<Option<f64>>,
    pub correction_exponent_target: f64,
    pub profile_gap_decreasing: Option<bool>,
    pub cross_term_ratio_decreasing: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub config: ExperimentConfig,
    pub points: Vec<PointSummary>,
    pub trends: Trends,
}

pub const SUMMARY_FILE: &str = "summary.json";
pub const POINT_FILE: &str = "point.json";
pub const CHECKPOINT_FILE: &str = "solution.field";
pub const REPORT_FILE: &str = "solve_report.json";
pub const LANDSCAPE_FILE: &str = "landscape.csv";
pub const ENERGY_FILE: &str = "energy.csv";

pub fn point_dir(out: &Path, mode: Mode, eps: f64) -> PathBuf {
    let tag = match mode {
        Mode::Sync => "sync",
        Mode::Seg => "seg",
    };
    out.join(format!("{tag}_eps{eps}"))
}

fn write_atomic(path: &Path, text: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, text)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Ground states keyed by the bit pattern of μ, shared by all points.
struct Profiles(BTreeMap<u64, RadialProfile>);

impl Profiles {
    fn get(&self, mu: f64) -> &RadialProfile {
        &self.0[&mu.to_bits()]
    }
}

/// Everything a point needs that does not depend on ε.
struct Shared<'a> {
    config: &'a ExperimentConfig,
    profiles: Profiles,
    p: PotentialModel,
    q: PotentialModel,
    params: Option<CoupledParams>,
}

impl Shared<'_> {
    fn problem(&self, eps: f64) -> Problem {
        let c = self.config;
        Problem { eps, p: self.p, q: self.q, mu1: c.mu1, mu2: c.mu2, beta: c.beta }
    }

    fn family(&self) -> AnsatzFamily<'_> {
        match self.params.as_ref() {
            Some(params) => AnsatzFamily::Sync { params, w: self.profiles.get(1.0) },
            None => {
                AnsatzFamily::Seg { u1: self.profiles.get(self.config.mu1), u2: self.profiles.get(self.config.mu2) }
            }
        }
    }
}

/// Runs the whole sweep into `out`; points run on a pool of `workers`
/// threads (0 = all cores). Per-point failures are recorded, not fatal.
pub fn run(config: &ExperimentConfig, out: &Path, workers: usize, resume: bool) -> Result<Summary> {
    check(config)?;
    std::fs::create_dir_all(out)?;
    let (p, q) = config.potentials()?;
    let params = match config.mode {
        Mode::Sync => Some(classify(config.mu1, config.mu2, config.beta)?),
        Mode::Seg => None,
    };
    let mus: Vec<f64> = match config.mode {
        Mode::Sync => vec![1.0],
        Mode::Seg => vec![config.mu1, config.mu2],
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidParam(format!("worker pool: {e}")))?;
    let gs = &config.ground_state;
    let profiles = pool.install(|| {
        mus.par_iter()
            .map(|&mu| solve_ground_state(mu, gs.r_max, gs.nodes).map(|w| (mu.to_bits(), w)))
            .collect::<Result<BTreeMap<_, _>>>()
    })?;
    let shared = Shared { config, profiles: Profiles(profiles), p, q, params };
    let points: Vec<PointSummary> = pool.install(|| {
        config.eps_list.par_iter().map(|&eps| run_point(&shared, eps, out, resume)).collect::<Result<_>>()
    })?;
    let summary = Summary { config: config.clone(), trends: trends(config, &points), points };
    write_atomic(&out.join(SUMMARY_FILE), &to_json(&summary)?)?;
    Ok(summary)
}

fn run_point(shared: &Shared<'_>, eps: f64, out: &Path, resume: bool) -> Result<PointSummary> {
    let c = shared.config;
    let dir = point_dir(out, c.mode, eps);
    if resume {
        if let Ok(text) = std::fs::read_to_string(dir.join(POINT_FILE)) {
            if let Ok(point) = serde_json::from_str::<PointSummary>(&text) {
                return Ok(point);
            }
        }
    }
    std::fs::create_dir_all(&dir)?;
    let mut point = PointSummary { mode: Some(c.mode), eps, k: c.k, ..Default::default() };
    for (&bits, w) in &shared.profiles.0 {
        let name =
            if c.mode == Mode::Sync { "profile_w.txt".to_string() } else { profile_name(c, f64::from_bits(bits)) };
        w.write(&dir.join(name))?;
    }
    let radii = match model_stage(shared, eps, &mut point) {
        Ok(r) => Some(r),
        Err(e) => {
            point.errors.push(format!("model: {e}"));
            None
        }
    };
    if let Some((r, rho)) = radii {
        if let Err(e) = landscape_stage(shared, eps, rho, &dir, &mut point) {
            point.errors.push(format!("landscape: {e}"));
        }
        if c.solver.enabled {
            if let Err(e) = solve_stage(shared, eps, r, rho, &dir, resume, &mut point) {
                point.errors.push(format!("solver: {e}"));
            }
        }
    }
    write_atomic(&dir.join(POINT_FILE), &to_json(&point)?)?;
    Ok(point)
}

fn profile_name(c: &ExperimentConfig, mu: f64) -> String {
    if mu == c.mu1 {
        "profile_u1.txt".into()
    } else {
        "profile_u2.txt".into()
    }
}

/// Reduced model at ε: returns the ring radii `(r, ρ)` used downstream.
fn model_stage(shared: &Shared<'_>, eps: f64, point: &mut PointSummary) -> Result<(f64, f64)> {
    let c = shared.config;
    let lead = c.lead_exponent();
    let rbar = predicted_radius(eps, c.k, lead)?;
    let window = admissible_interval(eps, c.k, c.p.m, c.q.n, c.delta_seps)?;
    point.predicted_radius = Some(rbar);
    point.window_low = Some(window.0);
    point.window_high = Some(window.1);
    match shared.family() {
        AnsatzFamily::Sync { params, w } => {
            let coef = sync_coefficients(params, &moments(w))?;
            let c_int = multipeak_interaction_constant(w, c.k, interaction_radius(c.k, rbar, eps), eps)?
                * params.interaction_factor()?;
            point.interaction_constant = Some(c_int);
            point.expansion_slope = expansion_slope(w, params, rbar, eps, &shared.p, &shared.q, coef.a_const).ok();
            let model = ReducedModel {
                a_b: c.p.a * coef.b,
                b_c0: c.q.b * coef.c0_coeff,
                c_int,
                m: c.p.m,
                n: c.q.n,
                k: c.k,
                eps,
                mode: ReducedMode::Synchronized,
            };
            match minimize_model(&model, window) {
                Ok(min) => {
                    point.model_r_star = Some(min.r_star);
                    point.model_interior = Some(min.interior);
                    Ok((min.r_star, min.r_star))
                }
                Err(e) => {
                    point.model_interior = Some(false);
                    point.errors.push(format!("model: {e}"));
                    Ok((rbar, rbar))
                }
            }
        }
        AnsatzFamily::Seg { u1, u2 } => {
            let coef = seg_coefficients(c.mu1, c.mu2, &moments(u1), &moments(u2));
            let b1 = seg_interaction_constant(u1, c.mu1, c.k, interaction_radius(c.k, rbar, eps), eps)?;
            let b2 = seg_interaction_constant(u2, c.mu2, c.k, interaction_radius(c.k, rbar, eps), eps)?;
            point.interaction_constant = Some(b1);
            let base = ReducedModel {
                a_b: c.p.a * coef.b1,
                b_c0: 0.0,
                c_int: b1,
                m: c.p.m,
                n: c.q.n,
                k: c.k,
                eps,
                mode: ReducedMode::SegregatedR,
            };
            let model_rho =
                ReducedModel { a_b: 0.0, b_c0: c.q.b * coef.c2, c_int: b2, mode: ReducedMode::SegregatedRho, ..base };
            let min = match minimize_segregated(&base, &model_rho, window) {
                Ok(min) => min,
                Err(e) => {
                    point.model_interior = Some(false);
                    point.errors.push(format!("model: {e}"));
                    return Ok((rbar, rbar));
                }
            };
            point.model_r_star = Some(min.r1);
            point.model_rho_star = Some(min.rho1);
            point.model_interior = Some(min.interior);
            match seg_cross_term(u1, u2, c.beta, c.k, min.r1, min.rho1, eps) {
                Ok(cross) => {
                    let retained = retained_exponentials(&base, &model_rho, min.r1, min.rho1);
                    point.cross_term = Some(cross);
                    point.cross_term_ratio = Some(cross.abs() / (2.0 * c.k as f64 * eps.powi(3) * retained));
                }
                Err(e) => point.errors.push(format!("cross term: {e}")),
            }
            Ok((min.r1, min.rho1))
        }
    }
}

/// Radius at which interaction constants are measured: the ring radius, or
/// the smallest one whose chord is still in the asymptotic range `d ≥ 4ε`.
pub fn interaction_radius(k: usize, r: f64, eps: f64) -> f64 {
    r.max(MIN_SEPARATION * eps / chord(k, 1.0))
}

/// `B̂₁e^{-2r sin(π/2k)/ε} + B̂₂e^{-2ρ sin(π/2k)/ε}` of the two segregated factors.
pub fn retained_exponentials(model_r: &ReducedModel, model_rho: &ReducedModel, r: f64, rho: f64) -> f64 {
    let pure = |m: &ReducedModel, x: f64| ReducedModel { a_b: 0.0, b_c0: 0.0, ..*m }.value(x);
    pure(model_r, r) + pure(model_rho, rho)
}

/// Log-log slope of `I_ε/ε³ - A` for one synchronized peak over the decade `[r̄, 10r̄]`.
pub fn expansion_slope(
    w: &RadialProfile,
    params: &CoupledParams,
    rbar: f64,
    eps: f64,
    p: &PotentialModel,
    q: &PotentialModel,
    a_const: f64,
) -> Result<f64> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for i in 0..9 {
        let r = rbar * 10f64.powf(i as f64 / 8.0);
        let e = single_peak_energy_sync(w, params, r, eps, p, q)?;
        let excess = e.total / eps.powi(3) - a_const;
        if !(excess > 0.0) {
            return Err(Error::InvalidParam(format!("non-positive energy excess {excess:.3e} at r = {r}")));
        }
        xs.push(r.ln());
        ys.push(excess.ln());
    }
    Ok(linear_fit(&xs, &ys).0)
}

fn build_ansatz(shared: &Shared<'_>, eps: f64, r: f64, rho: f64, spec: &GridSpec) -> Result<GridField> {
    let k = shared.config.k;
    match shared.family() {
        AnsatzFamily::Sync { params, w } => {
            build_synchronized(&PeakConfiguration::synchronized(k, r, eps)?, params, w, spec, Some(0.0))
        }
        AnsatzFamily::Seg { u1, u2 } => {
            build_segregated(&PeakConfiguration::segregated(k, r, rho, eps)?, u1, u2, spec, Some(0.0))
        }
    }
}

fn energy_of(shared: &Shared<'_>, field: &GridField, eps: f64) -> Result<EnergyBreakdown> {
    let c = shared.config;
    energy(field, eps, &shared.p, &shared.q, c.mu1, c.mu2, c.beta, c.solver.laplace)
}

fn prediction(shared: &Shared<'_>, eps: f64, r: f64, rho: f64) -> Result<f64> {
    let c = shared.config;
    match shared.family() {
        AnsatzFamily::Sync { params, w } => {
            let c_hat = multipeak_interaction_constant(w, c.k, interaction_radius(c.k, r, eps), eps)?;
            multipeak_prediction_sync(eps, r, c.k, &shared.p, &shared.q, params, &moments(w), c_hat)
        }
        AnsatzFamily::Seg { u1, u2 } => {
            let (m1, m2): (Moments, Moments) = (moments(u1), moments(u2));
            let b1 = seg_interaction_constant(u1, c.mu1, c.k, interaction_radius(c.k, r, eps), eps)?;
            let b2 = seg_interaction_constant(u2, c.mu2, c.k, interaction_radius(c.k, rho, eps), eps)?;
            Ok(multipeak_prediction_seg(eps, r, rho, c.k, &shared.p, &shared.q, c.mu1, c.mu2, &m1, &m2, b1, b2))
        }
    }
}

/// Measured energy over the admissible window in `r` (with `ρ` held at its
/// model value in segregated mode).
fn landscape_stage(shared: &Shared<'_>, eps: f64, rho: f64, dir: &Path, point: &mut PointSummary) -> Result<()> {
    let c = shared.config;
    let (lo, hi) = (point.window_low.unwrap_or(0.0), point.window_high.unwrap_or(0.0));
    let n = c.grid.landscape_samples;
    let samples: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
    let extent = if c.mode == Mode::Seg { hi.max(rho) } else { hi };
    let spec = grid_for(eps, c.grid.landscape_spacing_ratio, extent, c.grid.margin, c.grid.max_nodes)?;
    let landscape: Landscape = measured_landscape(eps, c.k, c.lead_exponent(), &samples, |r| {
        Ok(energy_of(shared, &build_ansatz(shared, eps, r, rho, &spec)?, eps)?.total)
    })?;
    let model: Vec<f64> = samples.iter().map(|&r| prediction(shared, eps, r, rho)).collect::<Result<_>>()?;
    std::fs::write(dir.join(LANDSCAPE_FILE), landscape.to_csv(Some(&model)))?;
    point.landscape_minimizer = Some(landscape.minimizer());
    point.landscape_relative_error = Some(landscape.relative_error());
    point.landscape_is_valley = Some(landscape.is_valley());
    Ok(())
}

fn energy_row(s: &mut String, label: &str, k: usize, e: &EnergyBreakdown) {
    let opt = |x: Option<f64>| x.map_or(String::new(), |v| format!("{v:.12e}"));
    let _ = writeln!(
        s,
        "{label},{:e},{k},{},{},{:.12e},{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
        e.eps,
        opt(e.r),
        opt(e.rho),
        e.total,
        opt(e.predicted_total),
        e.kinetic_u,
        e.kinetic_v,
        e.potential_u,
        e.potential_v,
        e.quartic_u,
        e.quartic_v,
        e.coupling
    );
}

#[allow(clippy::too_many_arguments)]
fn solve_stage(
    shared: &Shared<'_>,
    eps: f64,
    r: f64,
    rho: f64,
    dir: &Path,
    resume: bool,
    point: &mut PointSummary,
) -> Result<()> {
    let c = shared.config;
    let spec = grid_for(eps, c.grid.spacing_ratio, 1.2 * r.max(rho), c.grid.margin, c.grid.max_nodes)?;
    let problem = shared.problem(eps);
    let laplace = c.solver.laplace;
    let ansatz = build_ansatz(shared, eps, r, rho, &spec)?;
    let mut rows = String::from(
        "label,eps,k,r,rho,total,predicted,kinetic_u,kinetic_v,potential_u,potential_v,quartic_u,quartic_v,coupling\n",
    );
    let e_ansatz =
        energy_of(shared, &ansatz, eps)?.with_prediction(prediction(shared, eps, r, rho)?).at_radii(Some(r), Some(rho));
    energy_row(&mut rows, "ansatz", c.k, &e_ansatz);
    point.ansatz_energy = Some(e_ansatz.total);
    point.predicted_energy = e_ansatz.predicted_total;
    point.ansatz_dual_norm = Some(residual_dual_norm(&ansatz, &problem, laplace)?.value);
    std::fs::write(dir.join("ansatz_slice_x3_0.csv"), ansatz.slice_csv())?;

    let checkpoint = dir.join(CHECKPOINT_FILE);
    let initial = match resume.then(|| GridField::read(&checkpoint)) {
        Some(Ok(f)) if f.spec.same_nodes(&spec) => {
            point.resumed = true;
            f
        }
        _ => ansatz.clone(),
    };
    let opts = SolverOptions {
        newton_tol: c.solver.newton_tol,
        max_iters: c.solver.max_iters,
        laplace,
        ..SolverOptions::new(c.k, c.mode)
    };
    let (solution, mut report) = newton_solve(&initial, &problem, &opts)?;
    let threshold = c.solver.peak_threshold;
    report.peak_census_u = crate::solver::peak_census(&solution, crate::grid::Component::U, threshold);
    report.peak_census_v = crate::solver::peak_census(&solution, crate::grid::Component::V, threshold);
    solution.write(&checkpoint)?;
    std::fs::write(dir.join("slice_x3_0.csv"), solution.slice_csv())?;
    point.newton_converged = Some(report.converged);
    point.newton_iterations = Some(report.iterations);
    point.final_residual = Some(report.final_residual());
    point.quadratic_constant = report.quadratic_constant();
    point.peak_census_u = Some(report.peak_census_u);
    point.peak_census_v = Some(report.peak_census_v);
    point.symmetry_defect_initial = Some(report.symmetry_defect_initial);
    point.symmetry_defect_final = Some(report.symmetry_defect_final);
    if report.converged {
        measure_solution(shared, eps, r, rho, &solution, &problem, &mut report, &mut rows)?;
        point.fitted_r = report.fitted_r;
        point.fitted_rho = report.fitted_rho;
        point.correction_norm = report.correction_norm_eps;
        point.ansatz_norm = report.ansatz_norm_eps;
        point.correction_ratio = report.correction_norm_eps.zip(report.ansatz_norm_eps).map(|(a, b)| a / b);
        point.profile_gap_h1 = report.profile_gap.map(|g| g.h1);
        point.profile_gap_sup = report.profile_gap.map(|g| g.sup);
        point.profile_gap_aligned_h1 = report.profile_gap_aligned.map(|g| g.h1);
        point.profile_gap_aligned_sup = report.profile_gap_aligned.map(|g| g.sup);
    } else {
        point.errors.push(format!("solver: {}", report.require_converged().unwrap_err()));
    }
    std::fs::write(dir.join(ENERGY_FILE), rows)?;
    std::fs::write(dir.join(REPORT_FILE), to_json(&report)?)?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn measure_solution(
    shared: &Shared<'_>,
    eps: f64,
    r: f64,
    rho: f64,
    solution: &GridField,
    problem: &Problem,
    report: &mut SolveReport,
    rows: &mut String,
) -> Result<()> {
    let c = shared.config;
    let laplace = c.solver.laplace;
    let family = shared.family();
    let (rf, rhof) = fit_ansatz_radius(solution, family, c.k, r, rho)?;
    let fitted = family.build(c.k, rf, rhof, eps, &solution.spec)?;
    report.fitted_r = Some(rf);
    report.fitted_rho = (c.mode == Mode::Seg).then_some(rhof);
    report.correction_norm_eps = Some(correction_norm(solution, &fitted, problem, laplace)?);
    report.ansatz_norm_eps = Some(eps_norm(&fitted, problem, laplace)?);
    match shared.params.as_ref() {
        Some(params) => report.profile_gap = Some(profile_gap_sync(solution, params, laplace)),
        None => {
            report.profile_gap = Some(profile_gap_seg(solution, c.mu1, c.mu2, c.k, GapRotation::Stated, laplace));
            report.profile_gap_aligned =
                Some(profile_gap_seg(solution, c.mu1, c.mu2, c.k, GapRotation::Aligned, laplace));
        }
    }
    let e = energy_of(shared, solution, eps)?
        .with_prediction(prediction(shared, eps, rf, rhof)?)
        .at_radii(Some(rf), Some(rhof));
    energy_row(rows, "solution", c.k, &e);
    Ok(())
}

fn trends(config: &ExperimentConfig, points: &[PointSummary]) -> Trends {
    let mut order: Vec<&PointSummary> = points.iter().collect();
    order.sort_by(|a, b| b.eps.total_cmp(&a.eps));
    let correction_exponents = order
        .windows(2)
        .map(|w| match (w[0].correction_norm, w[1].correction_norm) {
            (Some(a), Some(b)) if a > 0.0 && b > 0.0 => Some((a / b).ln() / (w[0].eps / w[1].eps).ln()),
            _ => None,
        })
        .collect();
    let decreasing = |get: fn(&PointSummary) -> Option<f64>| -> Option<bool> {
        let vals: Option<Vec<f64>> = order.iter().map(|p| get(p)).collect();
        vals.filter(|v| v.len() >= 2).map(|v| v.windows(2).all(|w| w[1] < w[0]))
    };
    Trends {
        eps_descending: order.iter().map(|p| p.eps).collect(),
        correction_exponents,
        correction_exponent_target: (3.0 + config.lead_exponent()) / 2.0,
        profile_gap_decreasing: decreasing(|p| p.profile_gap_h1.zip(p.profile_gap_sup).map(|(a, b)| a + b)),
        cross_term_ratio_decreasing: decreasing(|p| p.cross_term_ratio),
    }
}

/// Collects plot-ready tables from a finished run into `out/plot`.
pub fn plot_data(out: &Path) -> Result<Vec<PathBuf>> {
    let text = std::fs::read_to_string(out.join(SUMMARY_FILE))?;
    let summary: Summary = serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
    let plot = out.join("plot");
    std::fs::create_dir_all(&plot)?;
    let mode = summary.config.mode;
    let tag = match mode {
        Mode::Sync => "sync",
        Mode::Seg => "seg",
    };
    let opt = |x: Option<f64>| x.map_or(String::new(), |v| format!("{v:.12e}"));

    let mut landscapes = String::from("mode,eps,r,measured,model\n");
    let mut residuals = String::from("mode,eps,iteration,residual\n");
    for p in &summary.points {
        let dir = point_dir(out, mode, p.eps);
        if let Ok(csv) = std::fs::read_to_string(dir.join(LANDSCAPE_FILE)) {
            for line in csv.lines().skip(1) {
                let _ = writeln!(landscapes, "{tag},{:e},{line}", p.eps);
            }
        }
        if let Ok(json) = std::fs::read_to_string(dir.join(REPORT_FILE)) {
            let report: SolveReport = serde_json::from_str(&json).map_err(|e| Error::Parse(e.to_string()))?;
            for (i, r) in report.residual_history.iter().enumerate() {
                let _ = writeln!(residuals, "{tag},{:e},{i},{r:.12e}", p.eps);
            }
        }
    }
    let mut minimizers =
        String::from("mode,eps,predicted_radius,model_r_star,model_rho_star,landscape_minimizer,fitted_r,fitted_rho\n");
    let mut norms =
        String::from("mode,eps,correction_norm,ansatz_norm,profile_gap_h1,profile_gap_sup,ansatz_dual_norm\n");
    for p in &summary.points {
        let _ = writeln!(
            minimizers,
            "{tag},{:e},{},{},{},{},{},{}",
            p.eps,
            opt(p.predicted_radius),
            opt(p.model_r_star),
            opt(p.model_rho_star),
            opt(p.landscape_minimizer),
            opt(p.fitted_r),
            opt(p.fitted_rho)
        );
        let _ = writeln!(
            norms,
            "{tag},{:e},{},{},{},{},{}",
            p.eps,
            opt(p.correction_norm),
            opt(p.ansatz_norm),
            opt(p.profile_gap_h1),
            opt(p.profile_gap_sup),
            opt(p.ansatz_dual_norm)
        );
    }
    let files = [
        ("landscapes.csv", landscapes),
        ("newton_residuals.csv", residuals),
        ("minimizers.csv", minimizers),
        ("norms.csv", norms),
    ];
    let mut written = Vec::new();
    for (name, body) in files {
        let path = plot.join(name);
        std::fs::write(&path, body)?;
        written.push(path);
    }
    Ok(written)
}
