//! Newton-Krylov solution of the discrete coupled system inside the symmetry
//! class, and the a posteriori measurements made on its output.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ansatz::{
    build_segregated, build_synchronized, radial_derivative_fields, symmetry_defect_with, PeakConfiguration,
};
use crate::coupled::CoupledParams;
use crate::energy::{check_resolution, PotentialModel};
use crate::error::{Error, Result};
use crate::grid::{dot, grid_sum, max_abs, symmetrize, Component, GridField, GridSpec, Parity};
use crate::ground_state::RadialProfile;
use crate::krylov::{gmres, pcg};
use crate::spectral::{LaplaceKind, LaplaceOp};

/// Coefficients of the coupled system at one value of ε.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub eps: f64,
    pub p: PotentialModel,
    pub q: PotentialModel,
    pub mu1: f64,
    pub mu2: f64,
    pub beta: f64,
}

impl Problem {
    pub fn new(eps: f64, p: PotentialModel, q: PotentialModel, params: &CoupledParams) -> Self {
        Self { eps, p, q, mu1: params.mu1, mu2: params.mu2, beta: params.beta }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Sync,
    Seg,
}

/// Symmetry sectors of `(u, v)`: the segregated `v` is odd in x₂ for odd `k`.
pub fn parities(mode: Mode, k: usize) -> (Parity, Parity) {
    let v = match mode {
        Mode::Sync => Parity::even(k),
        Mode::Seg => Parity { k, x2: if k % 2 == 1 { -1.0 } else { 1.0 } },
    };
    (Parity::even(k), v)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub newton_tol: f64,
    pub max_iters: usize,
    pub laplace: LaplaceKind,
    /// Shift `s` of the preconditioner `(-ε²Δ_h + s)⁻¹`.
    pub shift: f64,
    pub gmres_restart: usize,
    pub gmres_max_iter: usize,
    pub forcing_max: f64,
    pub max_backtracks: usize,
    pub k: usize,
    pub mode: Mode,
}

impl SolverOptions {
    pub fn new(k: usize, mode: Mode) -> Self {
        Self {
            newton_tol: 1e-8,
            max_iters: 30,
            laplace: LaplaceKind::Spectral,
            shift: 1.0,
            gmres_restart: 40,
            gmres_max_iter: 400,
            forcing_max: 0.1,
            max_backtracks: 12,
            k,
            mode,
        }
    }
}

fn node_values(spec: &GridSpec, f: impl Fn([f64; 3]) -> f64 + Sync) -> Vec<f64> {
    GridField::from_fn(*spec, 1.0, |x| (f(x), 0.0)).u
}

struct Operator {
    op: LaplaceOp,
    p: Vec<f64>,
    q: Vec<f64>,
    problem: Problem,
}

impl Operator {
    fn new(spec: &GridSpec, problem: &Problem, laplace: LaplaceKind) -> Result<Self> {
        check_resolution(spec.spacing(), problem.eps)?;
        Ok(Self {
            op: LaplaceOp::new(*spec, laplace),
            p: node_values(spec, |x| problem.p.at(x)),
            q: node_values(spec, |x| problem.q.at(x)),
            problem: *problem,
        })
    }

    fn residual(&self, field: &GridField) -> GridField {
        let pr = &self.problem;
        let e2 = pr.eps * pr.eps;
        let mut lu = vec![0.0; field.u.len()];
        let mut lv = vec![0.0; field.v.len()];
        self.op.apply(&field.u, &mut lu);
        self.op.apply(&field.v, &mut lv);
        let (u, v) = (&field.u, &field.v);
        let ru: Vec<f64> = (0..u.len())
            .into_par_iter()
            .map(|i| -e2 * lu[i] + self.p[i] * u[i] - pr.mu1 * u[i].powi(3) - pr.beta * v[i] * v[i] * u[i])
            .collect();
        let rv: Vec<f64> = (0..v.len())
            .into_par_iter()
            .map(|i| -e2 * lv[i] + self.q[i] * v[i] - pr.mu2 * v[i].powi(3) - pr.beta * u[i] * u[i] * v[i])
            .collect();
        GridField { spec: field.spec, eps: field.eps, u: ru, v: rv }
    }

    /// `⟨f, (-ε²Δ_h + K) f⟩ h³`.
    fn eps_norm_sq(&self, f: &[f64], k: &[f64]) -> f64 {
        let e2 = self.problem.eps * self.problem.eps;
        let mut lap = vec![0.0; f.len()];
        self.op.apply(f, &mut lap);
        let plane = self.op.spec.n * self.op.spec.n;
        self.op.spec.cell_volume() * grid_sum(f.len(), plane, |i| f[i] * (-e2 * lap[i] + k[i] * f[i]))
    }

    /// Solves `(-ε²Δ_h + K) g = f` by PCG preconditioned with the unit shift.
    fn riesz(&self, f: &[f64], k: &[f64], tol: f64) -> Result<(Vec<f64>, usize)> {
        let e2 = self.problem.eps * self.problem.eps;
        let apply = |x: &[f64], out: &mut [f64]| {
            self.op.apply(x, out);
            for i in 0..x.len() {
                out[i] = -e2 * out[i] + k[i] * x[i];
            }
        };
        let (g, out) = pcg(apply, |z| self.op.solve_shifted(z, self.problem.eps, 1.0), f, tol, 500)?;
        Ok((g, out.iterations))
    }
}

/// Residual of both equations, `-ε²Δ_h u + Pu - μ₁u³ - βv²u` and its partner.
pub fn residual(field: &GridField, problem: &Problem, laplace: LaplaceKind) -> Result<GridField> {
    Ok(Operator::new(&field.spec, problem, laplace)?.residual(field))
}

pub fn sup_norm(field: &GridField) -> f64 {
    max_abs(&field.u).max(max_abs(&field.v))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GapReport {
    pub h1: f64,
    pub sup: f64,
}

impl GapReport {
    pub fn total(&self) -> f64 {
        self.h1 + self.sup
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SolveReport {
    pub converged: bool,
    pub iterations: usize,
    /// Sup-norm of the residual before each accepted step and after the last.
    pub residual_history: Vec<f64>,
    pub linear_iterations: Vec<usize>,
    pub step_lengths: Vec<f64>,
    pub correction_norm_eps: Option<f64>,
    pub ansatz_norm_eps: Option<f64>,
    pub fitted_r: Option<f64>,
    pub fitted_rho: Option<f64>,
    pub peak_census_u: (usize, usize),
    pub peak_census_v: (usize, usize),
    pub symmetry_defect_initial: f64,
    pub symmetry_defect_final: f64,
    pub profile_gap: Option<GapReport>,
    pub profile_gap_aligned: Option<GapReport>,
    pub message: Option<String>,
}

impl SolveReport {
    pub fn require_converged(&self) -> Result<()> {
        if self.converged {
            Ok(())
        } else {
            Err(Error::DidNotConverge {
                residual: self.residual_history.last().copied().unwrap_or(f64::NAN),
                iterations: self.iterations,
            })
        }
    }

    pub fn final_residual(&self) -> f64 {
        self.residual_history.last().copied().unwrap_or(f64::NAN)
    }

    /// Fitted constant `C` in `res_{i+1} ≤ C res_i²` over the steps taken
    /// after the residual fell below `1e-3` of its initial value.
    pub fn quadratic_constant(&self) -> Option<f64> {
        let h = &self.residual_history;
        let first = *h.first()?;
        let mut worst: Option<f64> = None;
        for w in h.windows(2) {
            if w[0] < 1e-3 * first && w[1] > 1e-13 {
                let c = w[1] / (w[0] * w[0]);
                worst = Some(worst.map_or(c, |x: f64| x.max(c)));
            }
        }
        worst
    }
}

/// Damped Newton with right-preconditioned GMRES on the exact Jacobian.
/// Every iterate is projected onto the symmetry class of `options.mode`.
pub fn newton_solve(
    initial: &GridField,
    problem: &Problem,
    options: &SolverOptions,
) -> Result<(GridField, SolveReport)> {
    let spec = initial.spec;
    let oper = Operator::new(&spec, problem, options.laplace)?;
    let (pu, pv) = parities(options.mode, options.k);
    let mut report =
        SolveReport { symmetry_defect_initial: symmetry_defect_with(initial, pu, pv).max(), ..Default::default() };
    let mut x = initial.clone();
    symmetrize(&mut x, pu, pv);
    let mut res = oper.residual(&x);
    let mut sup = sup_norm(&res);
    report.residual_history.push(sup);
    let len = spec.len();
    let mut eta = options.forcing_max;
    let (eps, shift) = (problem.eps, options.shift);
    while sup >= options.newton_tol {
        if report.iterations >= options.max_iters {
            report.message = Some(format!("no convergence after {} Newton steps", options.max_iters));
            break;
        }
        let (u, v) = (&x.u, &x.v);
        let pr = problem;
        let vu: Vec<f64> =
            (0..len).map(|i| oper.p[i] - 3.0 * pr.mu1 * u[i] * u[i] - pr.beta * v[i] * v[i] - shift).collect();
        let vv: Vec<f64> =
            (0..len).map(|i| oper.q[i] - 3.0 * pr.mu2 * v[i] * v[i] - pr.beta * u[i] * u[i] - shift).collect();
        let wc: Vec<f64> = (0..len).map(|i| -2.0 * pr.beta * u[i] * v[i]).collect();
        let precondition = |z: &[f64]| -> Vec<f64> {
            let mut y = z.to_vec();
            let (yu, yv) = y.split_at_mut(len);
            oper.op.solve_shifted(yu, eps, shift);
            oper.op.solve_shifted(yv, eps, shift);
            y
        };
        // J M⁻¹ z = z + (V - s) M⁻¹z + W (M⁻¹z)_other, since -ε²Δ_h M⁻¹ = I - s M⁻¹
        let apply = |z: &[f64], out: &mut [f64]| {
            let y = precondition(z);
            for i in 0..len {
                out[i] = z[i] + vu[i] * y[i] + wc[i] * y[len + i];
                out[len + i] = z[len + i] + vv[i] * y[len + i] + wc[i] * y[i];
            }
        };
        let mut b = Vec::with_capacity(2 * len);
        b.extend(res.u.iter().map(|r| -r));
        b.extend(res.v.iter().map(|r| -r));
        let (z, outcome) = gmres(apply, &b, eta, options.gmres_restart, options.gmres_max_iter);
        if !(outcome.relative < 1.0) {
            return Err(Error::LinearSolveStall { relative: outcome.relative, iterations: outcome.iterations });
        }
        let delta = precondition(&z);
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..=options.max_backtracks {
            let mut trial = x.clone();
            for i in 0..len {
                trial.u[i] += lambda * delta[i];
                trial.v[i] += lambda * delta[len + i];
            }
            symmetrize(&mut trial, pu, pv);
            let r = oper.residual(&trial);
            let s = sup_norm(&r);
            if s <= (1.0 - 1e-4 * lambda) * sup {
                accepted = Some((trial, r, s));
                break;
            }
            lambda *= 0.5;
        }
        let Some((trial, r, s)) = accepted else {
            report.message = Some("line search failed to reduce the residual".into());
            break;
        };
        report.iterations += 1;
        report.linear_iterations.push(outcome.iterations);
        report.step_lengths.push(lambda);
        x = trial;
        res = r;
        let prev_sup = std::mem::replace(&mut sup, s);
        report.residual_history.push(sup);
        // Eisenstat-Walker forcing, second choice
        let ratio = sup / prev_sup;
        let mut next = 0.9 * ratio * ratio;
        if 0.9 * eta * eta > 0.1 {
            next = next.max(0.9 * eta * eta);
        }
        eta = next.clamp(1e-10, options.forcing_max);
    }
    report.converged = sup < options.newton_tol;
    report.symmetry_defect_final = symmetry_defect_with(&x, pu, pv).max();
    report.peak_census_u = peak_census(&x, Component::U, DEFAULT_PEAK_THRESHOLD);
    report.peak_census_v = peak_census(&x, Component::V, DEFAULT_PEAK_THRESHOLD);
    Ok((x, report))
}

pub const DEFAULT_PEAK_THRESHOLD: f64 = 0.3;

/// `(positive, negative)` strict local extrema over the 26 neighbours whose
/// magnitude exceeds `threshold_fraction · max|f|`.
pub fn peak_census(field: &GridField, c: Component, threshold_fraction: f64) -> (usize, usize) {
    let f = field.component(c);
    let spec = field.spec;
    let n = spec.n;
    let top = max_abs(f);
    if top == 0.0 {
        return (0, 0);
    }
    let cut = threshold_fraction * top;
    let counts: Vec<(usize, usize)> = (1..n - 1)
        .into_par_iter()
        .map(|i| {
            let (mut pos, mut neg) = (0, 0);
            for j in 1..n - 1 {
                for k in 1..n - 1 {
                    let x = f[spec.index(i, j, k)];
                    if x.abs() <= cut {
                        continue;
                    }
                    let mut is_max = true;
                    let mut is_min = true;
                    for di in 0..3 {
                        for dj in 0..3 {
                            for dk in 0..3 {
                                if di == 1 && dj == 1 && dk == 1 {
                                    continue;
                                }
                                let y = f[spec.index(i + di - 1, j + dj - 1, k + dk - 1)];
                                is_max &= x > y;
                                is_min &= x < y;
                            }
                        }
                    }
                    if is_max && x > 0.0 {
                        pos += 1;
                    }
                    if is_min && x < 0.0 {
                        neg += 1;
                    }
                }
            }
            (pos, neg)
        })
        .collect();
    counts.iter().fold((0, 0), |a, b| (a.0 + b.0, a.1 + b.1))
}

fn h1_and_sup(op: &LaplaceOp, f: &[f64]) -> GapReport {
    let mut lap = vec![0.0; f.len()];
    op.apply(f, &mut lap);
    let plane = op.spec.n * op.spec.n;
    let h1 = (op.spec.cell_volume() * grid_sum(f.len(), plane, |i| f[i] * f[i] - f[i] * lap[i])).max(0.0).sqrt();
    GapReport { h1, sup: max_abs(f) }
}

/// Discrete H¹ and sup norms of `√|μ₁-β| u - √|μ₂-β| v`.
pub fn profile_gap_sync(field: &GridField, params: &CoupledParams, laplace: LaplaceKind) -> GapReport {
    let a = (params.mu1 - params.beta).abs().sqrt();
    let b = (params.mu2 - params.beta).abs().sqrt();
    let comb: Vec<f64> = field.u.iter().zip(&field.v).map(|(u, v)| a * u - b * v).collect();
    h1_and_sup(&LaplaceOp::new(field.spec, laplace), &comb)
}

/// Rotation used to compare the two segregated components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GapRotation {
    /// Rotation by `π/k` with weights `(√μ₂, √μ₁)`, as the metric is stated.
    Stated,
    /// Rotation by `π/(2k)` with weights `(√μ₁, √μ₂)`, which maps the
    /// v-peaks onto the u-peaks and makes the combination vanish on the
    /// exact profiles.
    Aligned,
}

/// Discrete H¹ and sup norms of `c₁u(x) - c₂v(Tx)` with `v(Tx)` from
/// tricubic interpolation.
pub fn profile_gap_seg(
    field: &GridField,
    mu1: f64,
    mu2: f64,
    k: usize,
    rotation: GapRotation,
    laplace: LaplaceKind,
) -> GapReport {
    let (angle, cu, cv) = match rotation {
        GapRotation::Stated => (PI / k as f64, mu2.sqrt(), mu1.sqrt()),
        GapRotation::Aligned => (PI / (2 * k) as f64, mu1.sqrt(), mu2.sqrt()),
    };
    let (s, c) = angle.sin_cos();
    let spec = field.spec;
    let n = spec.n;
    let mut comb = vec![0.0; spec.len()];
    comb.par_chunks_mut(n * n).enumerate().for_each(|(i, plane)| {
        for j in 0..n {
            for k3 in 0..n {
                let x = spec.point(i, j, k3);
                let (a, b) = (x[0] - spec.center[0], x[1] - spec.center[1]);
                let t = [spec.center[0] + c * a - s * b, spec.center[1] + s * a + c * b, x[2]];
                plane[j * n + k3] = cu * field.u[spec.index(i, j, k3)] - cv * field.interpolate(Component::V, t);
            }
        }
    });
    h1_and_sup(&LaplaceOp::new(spec, laplace), &comb)
}

/// `√(‖φ‖²_{ε,P} + ‖ψ‖²_{ε,Q})` for `(φ, ψ) = solution - ansatz`.
pub fn correction_norm(
    solution: &GridField,
    ansatz: &GridField,
    problem: &Problem,
    laplace: LaplaceKind,
) -> Result<f64> {
    if !solution.spec.same_nodes(&ansatz.spec) {
        return Err(Error::GridMismatch("solution and ansatz live on different grids".into()));
    }
    let diff = GridField {
        spec: solution.spec,
        eps: solution.eps,
        u: solution.u.iter().zip(&ansatz.u).map(|(a, b)| a - b).collect(),
        v: solution.v.iter().zip(&ansatz.v).map(|(a, b)| a - b).collect(),
    };
    eps_norm(&diff, problem, laplace)
}

/// `√(‖u‖²_{ε,P} + ‖v‖²_{ε,Q})`.
pub fn eps_norm(field: &GridField, problem: &Problem, laplace: LaplaceKind) -> Result<f64> {
    let oper = Operator::new(&field.spec, problem, laplace)?;
    Ok((oper.eps_norm_sq(&field.u, &oper.p) + oper.eps_norm_sq(&field.v, &oper.q)).max(0.0).sqrt())
}

/// What the ansatz is built from, so it can be rebuilt at other radii.
#[derive(Debug, Clone, Copy)]
pub enum AnsatzFamily<'a> {
    Sync { params: &'a CoupledParams, w: &'a RadialProfile },
    Seg { u1: &'a RadialProfile, u2: &'a RadialProfile },
}

impl AnsatzFamily<'_> {
    pub fn build(&self, k: usize, r: f64, rho: f64, eps: f64, spec: &GridSpec) -> Result<GridField> {
        match self {
            Self::Sync { params, w } => {
                build_synchronized(&PeakConfiguration::synchronized(k, r, eps)?, params, w, spec, Some(0.0))
            }
            Self::Seg { u1, u2 } => {
                build_segregated(&PeakConfiguration::segregated(k, r, rho, eps)?, u1, u2, spec, Some(0.0))
            }
        }
    }

    /// Constraint densities `Σ_j s_j U_j² ∂_r U_j` (and the V analogue).
    pub fn constraint(&self, k: usize, r: f64, rho: f64, eps: f64, spec: &GridSpec) -> Result<(Vec<f64>, Vec<f64>)> {
        let cfg = PeakConfiguration::segregated(k, r, rho, eps)?;
        match self {
            Self::Sync { params, w } => {
                let (alpha, gamma) = params.amplitudes()?;
                let (_, c) = radial_derivative_fields(spec, eps, &cfg.x_points, &cfg.signs, w);
                let cu = c.iter().map(|x| alpha.powi(3) * x).collect();
                let cv = c.iter().map(|x| gamma.powi(3) * x).collect();
                Ok((cu, cv))
            }
            Self::Seg { u1, u2 } => {
                let y = cfg.y_points.as_ref().expect("segregated configuration has offset points");
                Ok((
                    radial_derivative_fields(spec, eps, &cfg.x_points, &cfg.signs, u1).1,
                    radial_derivative_fields(spec, eps, y, &cfg.signs, u2).1,
                ))
            }
        }
    }
}

/// Secant solve of `g(r) = ⟨target - ansatz(r), constraint(r)⟩ = 0` for one component set.
fn secant(mut g: impl FnMut(f64) -> Result<f64>, r0: f64) -> Result<f64> {
    let (mut a, mut b) = (r0, r0 * 1.02);
    let (mut ga, mut gb) = (g(a)?, g(b)?);
    for _ in 0..40 {
        if gb == ga {
            break;
        }
        let c = b - gb * (b - a) / (gb - ga);
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::NonConvergence("radius fit left the positive axis".into()));
        }
        a = b;
        ga = gb;
        b = c;
        gb = g(b)?;
        if (b - a).abs() <= 1e-10 * b {
            return Ok(b);
        }
    }
    Err(Error::NonConvergence("radius fit did not settle".into()))
}

/// Radius (and ρ) for which `solution - ansatz` satisfies the orthogonality
/// constraint of the reduction. Returns `(r, rho)`; `rho = r` in sync mode.
pub fn fit_ansatz_radius(
    solution: &GridField,
    family: AnsatzFamily<'_>,
    k: usize,
    r0: f64,
    rho0: f64,
) -> Result<(f64, f64)> {
    let spec = solution.spec;
    let eps = solution.eps;
    match family {
        AnsatzFamily::Sync { .. } => {
            let r = secant(
                |r| {
                    let a = family.build(k, r, r, eps, &spec)?;
                    let (cu, cv) = family.constraint(k, r, r, eps, &spec)?;
                    let du: Vec<f64> = solution.u.iter().zip(&a.u).map(|(s, a)| s - a).collect();
                    let dv: Vec<f64> = solution.v.iter().zip(&a.v).map(|(s, a)| s - a).collect();
                    Ok(dot(&du, &cu) + dot(&dv, &cv))
                },
                r0,
            )?;
            Ok((r, r))
        }
        AnsatzFamily::Seg { .. } => {
            let r = secant(
                |r| {
                    let a = family.build(k, r, rho0, eps, &spec)?;
                    let (cu, _) = family.constraint(k, r, rho0, eps, &spec)?;
                    let du: Vec<f64> = solution.u.iter().zip(&a.u).map(|(s, a)| s - a).collect();
                    Ok(dot(&du, &cu))
                },
                r0,
            )?;
            let rho = secant(
                |rho| {
                    let a = family.build(k, r, rho, eps, &spec)?;
                    let (_, cv) = family.constraint(k, r, rho, eps, &spec)?;
                    let dv: Vec<f64> = solution.v.iter().zip(&a.v).map(|(s, a)| s - a).collect();
                    Ok(dot(&dv, &cv))
                },
                rho0,
            )?;
            Ok((r, rho))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoercivityReport {
    /// Smallest `Q(φ,ψ) / ‖(φ,ψ)‖²_ε` over the random probes.
    pub rayleigh_min: f64,
    /// Smallest `‖Π J(φ,ψ)‖_* / ‖(φ,ψ)‖_ε` over the probes (dual norm of the
    /// linearization, projected off the constraint direction).
    pub operator_ratio_min: f64,
    /// Rayleigh quotient along the raw radial-translation direction.
    pub rayleigh_translation: f64,
    pub n_probes: usize,
}

/// Random symmetric probes of the second variation at the ansatz.
///
/// Probes are polynomial-times-Gaussian bumps at every peak with random
/// coefficients, projected onto the symmetry class and made orthogonal (in
/// the discrete inner product) to the combined constraint field.
#[allow(clippy::too_many_arguments)]
pub fn coercivity_probe(
    ansatz: &GridField,
    problem: &Problem,
    centers_u: &[[f64; 3]],
    centers_v: &[[f64; 3]],
    constraint: (&[f64], &[f64]),
    translation: (&[f64], &[f64]),
    mode: Mode,
    k: usize,
    n_probes: usize,
    seed: u64,
    laplace: LaplaceKind,
) -> Result<CoercivityReport> {
    let spec = ansatz.spec;
    let oper = Operator::new(&spec, problem, laplace)?;
    let (pu, pv) = parities(mode, k);
    let len = spec.len();
    let (u, v) = (&ansatz.u, &ansatz.v);
    let pr = problem;
    let e2 = pr.eps * pr.eps;
    let jac = |phi: &[f64], psi: &[f64]| -> (Vec<f64>, Vec<f64>) {
        let mut lp = vec![0.0; len];
        let mut lq = vec![0.0; len];
        oper.op.apply(phi, &mut lp);
        oper.op.apply(psi, &mut lq);
        let a = (0..len)
            .map(|i| {
                -e2 * lp[i] + (oper.p[i] - 3.0 * pr.mu1 * u[i] * u[i] - pr.beta * v[i] * v[i]) * phi[i]
                    - 2.0 * pr.beta * u[i] * v[i] * psi[i]
            })
            .collect();
        let b = (0..len)
            .map(|i| {
                -e2 * lq[i] + (oper.q[i] - 3.0 * pr.mu2 * v[i] * v[i] - pr.beta * u[i] * u[i]) * psi[i]
                    - 2.0 * pr.beta * u[i] * v[i] * phi[i]
            })
            .collect();
        (a, b)
    };
    let dv = spec.cell_volume();
    let rayleigh = |phi: &[f64], psi: &[f64]| -> f64 {
        let (a, b) = jac(phi, psi);
        let q = dv * (dot(phi, &a) + dot(psi, &b));
        q / (oper.eps_norm_sq(phi, &oper.p) + oper.eps_norm_sq(psi, &oper.q))
    };
    let (cu, cv) = constraint;
    let cc = dot(cu, cu) + dot(cv, cv);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rayleigh_min = f64::INFINITY;
    let mut ratio_min = f64::INFINITY;
    let eps = pr.eps;
    for _ in 0..n_probes {
        let mut bump = |centers: &[[f64; 3]]| -> Vec<f64> {
            let coeffs: Vec<[f64; 10]> =
                centers.iter().map(|_| std::array::from_fn(|_| rng.gen_range(-1.0..1.0))).collect();
            node_values(&spec, |x| {
                let mut acc = 0.0;
                for (c, a) in centers.iter().zip(&coeffs) {
                    let y = [(x[0] - c[0]) / eps, (x[1] - c[1]) / eps, (x[2] - c[2]) / eps];
                    let r2 = y[0] * y[0] + y[1] * y[1] + y[2] * y[2];
                    if r2 > 64.0 {
                        continue;
                    }
                    let poly = a[0]
                        + a[1] * y[0]
                        + a[2] * y[1]
                        + a[3] * y[2]
                        + a[4] * y[0] * y[0]
                        + a[5] * y[1] * y[1]
                        + a[6] * y[2] * y[2]
                        + a[7] * y[0] * y[1]
                        + a[8] * y[1] * y[2]
                        + a[9] * y[0] * y[2];
                    acc += poly * (-0.5 * r2).exp();
                }
                acc
            })
        };
        let mut probe = GridField { spec, eps, u: bump(centers_u), v: bump(centers_v) };
        symmetrize(&mut probe, pu, pv);
        let t = (dot(&probe.u, cu) + dot(&probe.v, cv)) / cc;
        for i in 0..len {
            probe.u[i] -= t * cu[i];
            probe.v[i] -= t * cv[i];
        }
        rayleigh_min = rayleigh_min.min(rayleigh(&probe.u, &probe.v));
        let (mut a, mut b) = jac(&probe.u, &probe.v);
        let t = (dot(&a, cu) + dot(&b, cv)) / cc;
        for i in 0..len {
            a[i] -= t * cu[i];
            b[i] -= t * cv[i];
        }
        let (ga, _) = oper.riesz(&a, &oper.p, 1e-8)?;
        let (gb, _) = oper.riesz(&b, &oper.q, 1e-8)?;
        let dual = (dv * (dot(&ga, &a) + dot(&gb, &b))).max(0.0).sqrt();
        let norm = (oper.eps_norm_sq(&probe.u, &oper.p) + oper.eps_norm_sq(&probe.v, &oper.q)).sqrt();
        ratio_min = ratio_min.min(dual / norm);
    }
    Ok(CoercivityReport {
        rayleigh_min,
        operator_ratio_min: ratio_min,
        rayleigh_translation: rayleigh(translation.0, translation.1),
        n_probes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualNorm {
    pub value: f64,
    pub cg_iterations: usize,
}

/// ε-dual norm of the first variation at `field`: one Riesz solve per component.
pub fn residual_dual_norm(field: &GridField, problem: &Problem, laplace: LaplaceKind) -> Result<DualNorm> {
    let oper = Operator::new(&field.spec, problem, laplace)?;
    let res = oper.residual(field);
    let (gu, iu) = oper.riesz(&res.u, &oper.p, 1e-10)?;
    let (gv, iv) = oper.riesz(&res.v, &oper.q, 1e-10)?;
    let dv = field.spec.cell_volume();
    let value = (dv * (dot(&gu, &res.u) + dot(&gv, &res.v))).max(0.0).sqrt();
    Ok(DualNorm { value, cg_iterations: iu + iv })
}
