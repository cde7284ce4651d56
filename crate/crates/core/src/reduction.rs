//! Reduced energy landscapes: the analytic one-dimensional models and the
//! measured energy of the ansatz as a function of the ring radius.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ansatz::{build_synchronized, PeakConfiguration};
use crate::coupled::CoupledParams;
use crate::energy::{energy, PotentialModel};
use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::ground_state::RadialProfile;
use crate::numerics::golden_section;
use crate::spectral::LaplaceKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReducedMode {
    Synchronized,
    SegregatedR,
    SegregatedRho,
}

/// `f(r) = aB r^m + bC₀ r^n + C e^{-2r sin(π/2k)/ε}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReducedModel {
    pub a_b: f64,
    pub b_c0: f64,
    pub c_int: f64,
    pub m: f64,
    pub n: f64,
    pub k: usize,
    pub eps: f64,
    pub mode: ReducedMode,
}

impl ReducedModel {
    fn rate(&self) -> f64 {
        2.0 * (PI / (2 * self.k) as f64).sin() / self.eps
    }

    pub fn value(&self, r: f64) -> f64 {
        self.a_b * r.powf(self.m) + self.b_c0 * r.powf(self.n) + self.c_int * (-self.rate() * r).exp()
    }

    pub fn derivative(&self, r: f64) -> f64 {
        let s = self.rate();
        self.a_b * self.m * r.powf(self.m - 1.0) + self.b_c0 * self.n * r.powf(self.n - 1.0)
            - s * self.c_int * (-s * r).exp()
    }

    pub fn second_derivative(&self, r: f64) -> f64 {
        let s = self.rate();
        self.a_b * self.m * (self.m - 1.0) * r.powf(self.m - 2.0)
            + self.b_c0 * self.n * (self.n - 1.0) * r.powf(self.n - 2.0)
            + s * s * self.c_int * (-s * r).exp()
    }
}

/// `m / (2 sin(π/2k)) · ε ln(1/ε)`.
pub fn predicted_radius(eps: f64, k: usize, m: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidParam(format!("eps must lie in (0, 1), got {eps}")));
    }
    if k == 0 {
        return Err(Error::InvalidParam("k must be positive".into()));
    }
    Ok(m / (2.0 * (PI / (2 * k) as f64).sin()) * eps * (1.0 / eps).ln())
}

/// `r · 2 sin(π/2k) / (ε ln(1/ε))`, the radius in units where the prediction equals `m`.
pub fn scaled_radius(r: f64, eps: f64, k: usize) -> f64 {
    r * 2.0 * (PI / (2 * k) as f64).sin() / (eps * (1.0 / eps).ln())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelMinimum {
    pub r_star: f64,
    pub f_star: f64,
    pub interior: bool,
}

const SCAN_POINTS: usize = 256;

/// Dense scan, golden-section refinement on the best bracket, then
/// safeguarded Newton on `f'`.
pub fn minimize_model(model: &ReducedModel, interval: (f64, f64)) -> Result<ModelMinimum> {
    let (low, high) = interval;
    if !(low > 0.0 && high > low) {
        return Err(Error::InvalidParam(format!("need 0 < low < high, got ({low}, {high})")));
    }
    let step = (high - low) / SCAN_POINTS as f64;
    let mut best = 0;
    let mut best_val = f64::INFINITY;
    for i in 0..=SCAN_POINTS {
        let v = model.value(low + i as f64 * step);
        if v < best_val {
            best_val = v;
            best = i;
        }
    }
    let a = low + best.saturating_sub(1) as f64 * step;
    let b = (low + (best + 1) as f64 * step).min(high);
    let tol = 1e-12 * high;
    let mut r = golden_section(|x| model.value(x), a, b, tol, 500);
    for _ in 0..50 {
        let d2 = model.second_derivative(r);
        if !(d2 > 0.0) {
            break;
        }
        let next = r - model.derivative(r) / d2;
        if !(next > a && next < b) {
            break;
        }
        let done = (next - r).abs() <= 1e-15 * r;
        r = next;
        if done {
            break;
        }
    }
    let search_tol = 1e-9 * (high - low);
    if r - low < search_tol || high - r < search_tol {
        return Err(Error::NoInteriorMin { at: r, low, high });
    }
    Ok(ModelMinimum { r_star: r, f_star: model.value(r), interior: true })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegregatedMinimum {
    pub r1: f64,
    pub rho1: f64,
    /// `g̃(r₁) + h̃(ρ₁)`.
    pub value: f64,
    pub interior: bool,
    /// Cross-species term at the minimizer, when supplied.
    pub cross_term: Option<f64>,
}

impl SegregatedMinimum {
    pub fn with_cross_term(mut self, cross: f64) -> Self {
        self.cross_term = Some(cross);
        self
    }
}

/// The segregated landscape is separable, so each factor is minimized on its own.
pub fn minimize_segregated(
    model_r: &ReducedModel,
    model_rho: &ReducedModel,
    bounds: (f64, f64),
) -> Result<SegregatedMinimum> {
    let a = minimize_model(model_r, bounds)?;
    let b = minimize_model(model_rho, bounds)?;
    Ok(SegregatedMinimum {
        r1: a.r_star,
        rho1: b.r_star,
        value: a.f_star + b.f_star,
        interior: a.interior && b.interior,
        cross_term: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Landscape {
    pub eps: f64,
    pub k: usize,
    pub radii: Vec<f64>,
    pub energies: Vec<f64>,
    pub predicted_radius: f64,
}

impl Landscape {
    /// Index of the smallest energy; ties go to the smaller radius.
    pub fn argmin(&self) -> usize {
        let mut best = 0;
        for (i, e) in self.energies.iter().enumerate() {
            if *e < self.energies[best] {
                best = i;
            }
        }
        best
    }

    pub fn minimizer(&self) -> f64 {
        self.radii[self.argmin()]
    }

    pub fn relative_error(&self) -> f64 {
        (self.minimizer() / self.predicted_radius - 1.0).abs()
    }

    /// Minimum strictly inside the sampled range, with the first step
    /// descending and the last ascending.
    pub fn is_valley(&self) -> bool {
        let n = self.energies.len();
        let i = self.argmin();
        n >= 3
            && i > 0
            && i + 1 < n
            && self.energies[1] < self.energies[0]
            && self.energies[n - 1] > self.energies[n - 2]
    }

    pub fn to_csv(&self, model: Option<&[f64]>) -> String {
        let mut s = String::from("r,measured,model\n");
        for (i, (r, e)) in self.radii.iter().zip(&self.energies).enumerate() {
            let m = model.map_or(String::new(), |m| format!("{:.12e}", m[i]));
            s.push_str(&format!("{r:.12e},{e:.12e},{m}\n"));
        }
        s
    }
}

/// Evaluates the energy pipeline at every sampled radius (in parallel,
/// assembled by sample index).
pub fn measured_landscape(
    eps: f64,
    k: usize,
    m: f64,
    r_samples: &[f64],
    pipeline: impl Fn(f64) -> Result<f64> + Sync,
) -> Result<Landscape> {
    if r_samples.is_empty() {
        return Err(Error::InvalidParam("need at least one sample radius".into()));
    }
    let energies: Vec<f64> = r_samples.par_iter().map(|&r| pipeline(r)).collect::<Result<_>>()?;
    Ok(Landscape { eps, k, radii: r_samples.to_vec(), energies, predicted_radius: predicted_radius(eps, k, m)? })
}

/// Energy of the synchronized ansatz as a function of the ring radius.
#[derive(Debug, Clone)]
pub struct SyncPipeline<'a> {
    pub w: &'a RadialProfile,
    pub params: CoupledParams,
    pub p: PotentialModel,
    pub q: PotentialModel,
    pub eps: f64,
    pub k: usize,
    pub spec: GridSpec,
    pub laplace: LaplaceKind,
    pub min_margin: Option<f64>,
}

impl SyncPipeline<'_> {
    pub fn energy_at(&self, r: f64) -> Result<f64> {
        let config = PeakConfiguration::synchronized(self.k, r, self.eps)?;
        let field = build_synchronized(&config, &self.params, self.w, &self.spec, self.min_margin)?;
        let e = energy(
            &field,
            self.eps,
            &self.p,
            &self.q,
            self.params.mu1,
            self.params.mu2,
            self.params.beta,
            self.laplace,
        )?;
        Ok(e.total)
    }
}
