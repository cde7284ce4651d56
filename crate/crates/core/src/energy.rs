//! Energy functional, profile moments, two-centre interaction integrals and
//! the asymptotic energy expansions they feed.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::ansatz::{chord, cross_distance, Point};
use crate::coupled::CoupledParams;
use crate::error::{Error, Result};
use crate::grid::{grid_sum, GridField};
use crate::ground_state::RadialProfile;
use crate::numerics::{pairwise_sum, CompositeRule};
use crate::spectral::{LaplaceKind, LaplaceOp};

/// Radial potential `1 + a r^m + c_hot r^{m+θ}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialModel {
    pub a: f64,
    pub m: f64,
    pub c_hot: f64,
    pub theta: f64,
    pub floor: f64,
}

impl PotentialModel {
    pub fn new(a: f64, m: f64, c_hot: f64, theta: f64) -> Result<Self> {
        if !(m > 1.0) {
            return Err(Error::InvalidParam(format!("exponent must exceed 1, got {m}")));
        }
        if !(theta > 0.0) {
            return Err(Error::InvalidParam(format!("theta must be positive, got {theta}")));
        }
        Ok(Self { a, m, c_hot, theta, floor: 1.0 })
    }

    pub fn power(a: f64, m: f64) -> Result<Self> {
        Self::new(a, m, 0.0, 1.0)
    }

    /// `P ≡ 1`.
    pub fn constant() -> Self {
        Self { a: 0.0, m: 2.0, c_hot: 0.0, theta: 1.0, floor: 1.0 }
    }

    pub fn at_radius(&self, r: f64) -> f64 {
        let mut p = self.floor + self.a * r.powf(self.m);
        if self.c_hot != 0.0 {
            p += self.c_hot * r.powf(self.m + self.theta);
        }
        p
    }

    pub fn at(&self, x: Point) -> f64 {
        self.at_radius((x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt())
    }

    /// Checks `inf P > 0` on the ball of the given radius (sampled densely).
    pub fn check_positive(&self, radius: f64) -> Result<f64> {
        let lowest = (0..=2000).map(|i| self.at_radius(radius * i as f64 / 2000.0)).fold(f64::INFINITY, f64::min);
        if !(lowest > 0.0) {
            return Err(Error::InvalidParam(format!("potential reaches {lowest} inside radius {radius}")));
        }
        Ok(lowest)
    }
}

/// Integrals of the profile over ℝ³.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub int_w2: f64,
    pub int_w4: f64,
    /// `∫ w³(x) e^{-x₁} dx`.
    pub int_w3_exp: f64,
    pub int_grad2: f64,
    /// `∫ |x|² w² dx`.
    pub int_r2_w2: f64,
}

fn radial_rule(profile: &RadialProfile) -> CompositeRule {
    // past r_max the tail model is exact to the ODE tolerance
    let hi = profile.r_max + 15.0;
    CompositeRule::new(0.0, hi, (hi * 40.0) as usize, 8)
}

pub fn moments(profile: &RadialProfile) -> Moments {
    let rule = radial_rule(profile);
    let w = |r: f64| profile.value(r);
    let four_pi = 4.0 * PI;
    Moments {
        int_w2: four_pi * rule.integrate(|r| w(r).powi(2) * r * r),
        int_w4: four_pi * rule.integrate(|r| w(r).powi(4) * r * r),
        int_w3_exp: four_pi * rule.integrate(|r| w(r).powi(3) * r * r.sinh()),
        int_grad2: four_pi * rule.integrate(|r| profile.value_and_derivative(r).1.powi(2) * r * r),
        int_r2_w2: four_pi * rule.integrate(|r| w(r).powi(2) * r.powi(4)),
    }
}

/// `∫ f(|y|) g(|y|) dy` for two radial profiles.
pub fn product_moment(f: &RadialProfile, g: &RadialProfile, pf: i32, pg: i32) -> f64 {
    let rule = radial_rule(f);
    4.0 * PI * rule.integrate(|r| f.value(r).powi(pf) * g.value(r).powi(pg) * r * r)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub total: f64,
    pub kinetic_u: f64,
    pub kinetic_v: f64,
    pub potential_u: f64,
    pub potential_v: f64,
    /// `μ₁ ∫ u⁴`.
    pub quartic_u: f64,
    /// `μ₂ ∫ v⁴`.
    pub quartic_v: f64,
    /// `∫ u² v²`.
    pub coupling: f64,
    pub predicted_total: Option<f64>,
    pub eps: f64,
    pub r: Option<f64>,
    pub rho: Option<f64>,
}

impl EnergyBreakdown {
    fn assemble(mut self, beta: f64) -> Self {
        self.total = 0.5 * (self.kinetic_u + self.potential_u + self.kinetic_v + self.potential_v)
            - 0.25 * (self.quartic_u + self.quartic_v)
            - 0.5 * beta * self.coupling;
        self
    }

    pub fn with_prediction(mut self, predicted: f64) -> Self {
        self.predicted_total = Some(predicted);
        self
    }

    pub fn at_radii(mut self, r: Option<f64>, rho: Option<f64>) -> Self {
        self.r = r;
        self.rho = rho;
        self
    }
}

/// Largest spacing accepted by the quadratures, relative to ε.
pub const MAX_SPACING_RATIO: f64 = 0.25;

pub fn check_resolution(h: f64, eps: f64) -> Result<()> {
    let limit = MAX_SPACING_RATIO * eps;
    if h > limit * (1.0 + 1e-12) {
        return Err(Error::ResolutionTooCoarse { h, limit });
    }
    Ok(())
}

/// `∫ ε²|∇f|²` on the grid as `-ε² ⟨f, Δ_h f⟩` (summation by parts).
pub fn kinetic(op: &LaplaceOp, f: &[f64], eps: f64) -> f64 {
    let mut lap = vec![0.0; f.len()];
    op.apply(f, &mut lap);
    -eps * eps * op.spec.cell_volume() * grid_sum(f.len(), op.spec.n * op.spec.n, |i| f[i] * lap[i])
}

/// Tensor-grid evaluation of the energy: nodal (trapezoidal) weights, kinetic
/// terms through the chosen discrete Laplacian.
#[allow(clippy::too_many_arguments)]
pub fn energy(
    field: &GridField,
    eps: f64,
    p: &PotentialModel,
    q: &PotentialModel,
    mu1: f64,
    mu2: f64,
    beta: f64,
    laplace: LaplaceKind,
) -> Result<EnergyBreakdown> {
    let spec = field.spec;
    check_resolution(spec.spacing(), eps)?;
    let op = LaplaceOp::new(spec, laplace);
    let dv = spec.cell_volume();
    let n = spec.n;
    let node = |idx: usize| spec.point(idx / (n * n), (idx / n) % n, idx % n);
    let plane = n * n;
    let len = spec.len();
    let (u, v) = (&field.u, &field.v);
    let e = EnergyBreakdown {
        kinetic_u: kinetic(&op, u, eps),
        kinetic_v: kinetic(&op, v, eps),
        potential_u: dv * grid_sum(len, plane, |i| p.at(node(i)) * u[i] * u[i]),
        potential_v: dv * grid_sum(len, plane, |i| q.at(node(i)) * v[i] * v[i]),
        quartic_u: mu1 * dv * grid_sum(len, plane, |i| u[i].powi(4)),
        quartic_v: mu2 * dv * grid_sum(len, plane, |i| v[i].powi(4)),
        coupling: dv * grid_sum(len, plane, |i| u[i] * u[i] * v[i] * v[i]),
        eps,
        ..Default::default()
    };
    Ok(e.assemble(beta))
}

/// `∫ K(|c + εy|) f(|y|)² dy`: spherical quadrature centred on the peak.
fn shifted_weight_integral(profile: &RadialProfile, center: Point, eps: f64, k: &PotentialModel) -> f64 {
    let d = (center[0] * center[0] + center[1] * center[1] + center[2] * center[2]).sqrt();
    let rule = radial_rule(profile);
    let cos_rule = CompositeRule::new(-1.0, 1.0, 4, 8);
    2.0 * PI
        * rule.integrate(|rho| {
            let w = profile.value(rho);
            let inner = cos_rule.integrate(|c| {
                let s = (d * d + eps * eps * rho * rho + 2.0 * d * eps * rho * c).max(0.0).sqrt();
                k.at_radius(s)
            });
            rho * rho * w * w * inner
        })
}

/// Continuum energy of a single peak `(a_u U(|x-c|/ε), a_v V(|x-c|/ε))` by
/// peak-centred spherical quadrature.
#[allow(clippy::too_many_arguments)]
pub fn single_peak_energy(
    u_profile: &RadialProfile,
    amp_u: f64,
    v_profile: &RadialProfile,
    amp_v: f64,
    center: Point,
    eps: f64,
    p: &PotentialModel,
    q: &PotentialModel,
    mu1: f64,
    mu2: f64,
    beta: f64,
) -> EnergyBreakdown {
    let e3 = eps.powi(3);
    let mu_ = moments(u_profile);
    let mv = moments(v_profile);
    let e = EnergyBreakdown {
        kinetic_u: e3 * amp_u * amp_u * mu_.int_grad2,
        kinetic_v: e3 * amp_v * amp_v * mv.int_grad2,
        potential_u: e3 * amp_u * amp_u * shifted_weight_integral(u_profile, center, eps, p),
        potential_v: e3 * amp_v * amp_v * shifted_weight_integral(v_profile, center, eps, q),
        quartic_u: e3 * mu1 * amp_u.powi(4) * mu_.int_w4,
        quartic_v: e3 * mu2 * amp_v.powi(4) * mv.int_w4,
        coupling: e3 * amp_u * amp_u * amp_v * amp_v * product_moment(u_profile, v_profile, 2, 2),
        eps,
        r: Some((center[0] * center[0] + center[1] * center[1]).sqrt()),
        ..Default::default()
    };
    e.assemble(beta)
}

/// Synchronized single peak at `(r, 0, 0)`.
pub fn single_peak_energy_sync(
    w: &RadialProfile,
    params: &CoupledParams,
    r: f64,
    eps: f64,
    p: &PotentialModel,
    q: &PotentialModel,
) -> Result<EnergyBreakdown> {
    let (alpha, gamma) = params.amplitudes()?;
    Ok(single_peak_energy(w, alpha, w, gamma, [r, 0.0, 0.0], eps, p, q, params.mu1, params.mu2, params.beta))
}

/// Expansion coefficients of the synchronized single-peak energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyncCoefficients {
    /// `¼(μ₁α⁴ + μ₂γ⁴ + 2βα²γ²) ∫w⁴`.
    pub a_const: f64,
    /// `½α² ∫w²`.
    pub b: f64,
    /// `½γ² ∫w²`.
    pub c0_coeff: f64,
}

pub fn sync_coefficients(params: &CoupledParams, m: &Moments) -> Result<SyncCoefficients> {
    let (alpha, gamma) = params.amplitudes()?;
    Ok(SyncCoefficients {
        a_const: params.quartic_factor()? * m.int_w4,
        b: 0.5 * alpha * alpha * m.int_w2,
        c0_coeff: 0.5 * gamma * gamma * m.int_w2,
    })
}

/// `ε³ (A + aB r^m + bC₀ r^n)`.
pub fn single_peak_prediction(
    eps: f64,
    r: f64,
    p: &PotentialModel,
    q: &PotentialModel,
    params: &CoupledParams,
    m: &Moments,
) -> Result<f64> {
    let c = sync_coefficients(params, m)?;
    Ok(eps.powi(3) * (c.a_const + p.a * c.b * r.powf(p.m) + q.a * c.c0_coeff * r.powf(q.m)))
}

/// `∫ f(|y|) g(|y - D e₁|) dy` in cylindrical coordinates about the axis
/// through both centres, composite Gauss-Legendre in `z` and `ρ`.
fn two_centre_integral(f: impl Fn(f64) -> f64, g: impl Fn(f64) -> f64, sep: f64) -> f64 {
    const REACH: f64 = 16.0;
    let z_rule = CompositeRule::new(-REACH, sep + REACH, ((sep + 2.0 * REACH) * 4.0).ceil() as usize, 8);
    let rho_rule = CompositeRule::new(0.0, REACH, (REACH * 4.0) as usize, 8);
    let slices: Vec<f64> = z_rule
        .nodes
        .iter()
        .zip(&z_rule.weights)
        .map(|(&z, &wz)| {
            wz * rho_rule.integrate(|rho| {
                let a = (rho * rho + z * z).sqrt();
                let b = (rho * rho + (z - sep) * (z - sep)).sqrt();
                rho * f(a) * g(b)
            })
        })
        .collect();
    2.0 * PI * pairwise_sum(&slices)
}

/// Shortest separation (in units of ε) for which the interaction integrals
/// are in their asymptotic regime.
pub const MIN_SEPARATION: f64 = 4.0;

fn separation_ratio(d: f64, eps: f64) -> Result<f64> {
    if !(eps > 0.0) || !(d >= 0.0) {
        return Err(Error::InvalidParam(format!("need eps > 0 and d >= 0, got {eps}, {d}")));
    }
    let ratio = d / eps;
    if ratio > 0.0 && ratio < MIN_SEPARATION {
        return Err(Error::TooClose { ratio });
    }
    Ok(ratio)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairInteraction {
    /// `∫ w³_{p,ε} w_{q,ε} dx` with `|p - q| = d`.
    pub value: f64,
    /// `value / (ε³ e^{-d/ε})`.
    pub c_hat: f64,
    /// `c_hat · d/ε`, which removes the algebraic `ε/d` factor of the far field.
    pub c_hat_algebraic: f64,
}

pub fn pair_interaction(profile: &RadialProfile, d: f64, eps: f64) -> Result<PairInteraction> {
    let ratio = separation_ratio(d, eps)?;
    let e3 = eps.powi(3);
    if ratio == 0.0 {
        let value = e3 * moments(profile).int_w4;
        return Ok(PairInteraction { value, c_hat: value / e3, c_hat_algebraic: 0.0 });
    }
    let j = two_centre_integral(|s| profile.value(s).powi(3), |s| profile.value(s), ratio);
    let c_hat = j * ratio.exp();
    Ok(PairInteraction { value: e3 * j, c_hat, c_hat_algebraic: c_hat * ratio })
}

/// The classical candidate `C₀ ∫ w³ e^{-x₁}` for the interaction constant.
pub fn classical_interaction_constant(profile: &RadialProfile) -> f64 {
    profile.c0 * moments(profile).int_w3_exp
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossInteraction {
    /// `∫ U₁²_{p,ε} U₂²_{q,ε} dx`.
    pub value: f64,
    /// `value / (ε³ e^{-2d/ε})`.
    pub normalized_ratio: f64,
}

pub fn cross_species_interaction(u1: &RadialProfile, u2: &RadialProfile, d: f64, eps: f64) -> Result<CrossInteraction> {
    let ratio = separation_ratio(d, eps)?;
    let e3 = eps.powi(3);
    let j = if ratio == 0.0 {
        product_moment(u1, u2, 2, 2)
    } else {
        two_centre_integral(|s| u1.value(s).powi(2), |s| u2.value(s).powi(2), ratio)
    };
    Ok(CrossInteraction { value: e3 * j, normalized_ratio: j * (2.0 * ratio).exp() })
}

/// Number of nearest neighbours of a peak on the circle.
pub fn neighbour_count(k: usize) -> f64 {
    if k == 1 {
        1.0
    } else {
        2.0
    }
}

/// Interaction constant `Ĉ` for the multi-peak expansion, measured at the
/// actual chord `2r sin(π/2k)`: every peak interacts with its neighbours, so
/// `Ĉ = (neighbours) · ∫w³_{x¹}w_{x²} / (ε³ e^{-chord/ε})`.
pub fn multipeak_interaction_constant(w: &RadialProfile, k: usize, r: f64, eps: f64) -> Result<f64> {
    Ok(neighbour_count(k) * pair_interaction(w, chord(k, r), eps)?.c_hat)
}

/// `2kε³[A + aBr^m + bC₀r^n + Ĉ(μ₁α⁴/2 + μ₂γ⁴/2 + βα²γ²) e^{-2r sin(π/2k)/ε}]`.
#[allow(clippy::too_many_arguments)]
pub fn multipeak_prediction_sync(
    eps: f64,
    r: f64,
    k: usize,
    p: &PotentialModel,
    q: &PotentialModel,
    params: &CoupledParams,
    m: &Moments,
    c_hat: f64,
) -> Result<f64> {
    let single = single_peak_prediction(eps, r, p, q, params, m)? / eps.powi(3);
    let inter = c_hat * params.interaction_factor()? * (-chord(k, r) / eps).exp();
    Ok(2.0 * k as f64 * eps.powi(3) * (single + inter))
}

/// Expansion coefficients of the segregated single-peak energies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegCoefficients {
    /// `¼ ∫(μ₁U₁⁴ + μ₂U₂⁴)`.
    pub a_const: f64,
    /// `½ ∫U₁²`.
    pub b1: f64,
    /// `½ ∫U₂²`.
    pub c2: f64,
}

pub fn seg_coefficients(mu1: f64, mu2: f64, m1: &Moments, m2: &Moments) -> SegCoefficients {
    SegCoefficients { a_const: 0.25 * (mu1 * m1.int_w4 + mu2 * m2.int_w4), b1: 0.5 * m1.int_w2, c2: 0.5 * m2.int_w2 }
}

/// Same-species interaction constant `B̂_i = (neighbours)(μ_i/2) Ĉ_{U_i}`.
pub fn seg_interaction_constant(profile: &RadialProfile, mu: f64, k: usize, r: f64, eps: f64) -> Result<f64> {
    Ok(0.5 * mu * multipeak_interaction_constant(profile, k, r, eps)?)
}

/// `2kε³[Ã + aB̃r^m + bC̃ρ^n + B̂₁e^{-2r sin(π/2k)/ε} + B̂₂e^{-2ρ sin(π/2k)/ε}]`.
#[allow(clippy::too_many_arguments)]
pub fn multipeak_prediction_seg(
    eps: f64,
    r: f64,
    rho: f64,
    k: usize,
    p: &PotentialModel,
    q: &PotentialModel,
    mu1: f64,
    mu2: f64,
    m1: &Moments,
    m2: &Moments,
    b1_hat: f64,
    b2_hat: f64,
) -> f64 {
    let c = seg_coefficients(mu1, mu2, m1, m2);
    let bracket = c.a_const
        + p.a * c.b1 * r.powf(p.m)
        + q.a * c.c2 * rho.powf(q.m)
        + b1_hat * (-chord(k, r) / eps).exp()
        + b2_hat * (-chord(k, rho) / eps).exp();
    2.0 * k as f64 * eps.powi(3) * bracket
}

/// Leading cross-species contribution `-(β/2) Σ ∫ U₁²U₂²` over the `4k`
/// nearest (x, y) pairs; reported, never added to the prediction.
pub fn seg_cross_term(
    u1: &RadialProfile,
    u2: &RadialProfile,
    beta: f64,
    k: usize,
    r: f64,
    rho: f64,
    eps: f64,
) -> Result<f64> {
    let d = cross_distance(k, r, rho);
    Ok(-0.5 * beta * 4.0 * k as f64 * cross_species_interaction(u1, u2, d, eps)?.value)
}
