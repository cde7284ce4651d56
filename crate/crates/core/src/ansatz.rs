//! Alternating-sign multi-peak configurations and the fields built on them.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coupled::CoupledParams;
use crate::error::{Error, Result};
use crate::grid::{Component, GridField, GridSpec, Parity};
use crate::ground_state::RadialProfile;

pub type Point = [f64; 3];

/// `2k` points on the circle of radius `r` in the `x₃ = 0` plane, the first on
/// the positive x₁-axis.
pub fn peak_positions(k: usize, r: f64) -> Vec<Point> {
    (0..2 * k)
        .map(|j| {
            let t = j as f64 * PI / k as f64;
            [r * t.cos(), r * t.sin(), 0.0]
        })
        .collect()
}

/// Same circle construction rotated by half a step, `π/(2k)`.
pub fn offset_positions(k: usize, rho: f64) -> Vec<Point> {
    (0..2 * k)
        .map(|j| {
            let t = (2 * j + 1) as f64 * PI / (2 * k) as f64;
            [rho * t.cos(), rho * t.sin(), 0.0]
        })
        .collect()
}

/// Alternating signs `(-1)^{j-1}` for `j = 1..2k`.
pub fn alternating_signs(k: usize) -> Vec<f64> {
    (0..2 * k).map(|j| if j % 2 == 0 { 1.0 } else { -1.0 }).collect()
}

/// Nearest-neighbour distance `2r sin(π/2k)` on the peak circle.
pub fn chord(k: usize, r: f64) -> f64 {
    2.0 * r * (PI / (2 * k) as f64).sin()
}

/// Distance from a peak to the nearest offset point, `|x¹ - y¹|`.
pub fn cross_distance(k: usize, r: f64, rho: f64) -> f64 {
    let half = PI / (2 * k) as f64;
    ((rho - r * half.cos()).powi(2) + (r * half.sin()).powi(2)).sqrt()
}

/// Endpoints of the admissible radius window
/// `(min{m,n} ∓ δ) / (2 sin(π/2k)) · ε ln(1/ε)`.
pub fn admissible_interval(eps: f64, k: usize, m: f64, n: f64, delta: f64) -> Result<(f64, f64)> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidParam(format!("eps must lie in (0, 1), got {eps}")));
    }
    if k == 0 {
        return Err(Error::InvalidParam("k must be positive".into()));
    }
    let lead = m.min(n);
    if !(delta > 0.0 && delta < lead) {
        return Err(Error::InvalidParam(format!("delta must lie in (0, {lead}), got {delta}")));
    }
    let scale = eps * (1.0 / eps).ln() / (2.0 * (PI / (2 * k) as f64).sin());
    Ok(((lead - delta) * scale, (lead + delta) * scale))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakConfiguration {
    pub k: usize,
    pub r: f64,
    pub rho: Option<f64>,
    pub eps: f64,
    pub x_points: Vec<Point>,
    pub y_points: Option<Vec<Point>>,
    pub signs: Vec<f64>,
}

impl PeakConfiguration {
    pub fn synchronized(k: usize, r: f64, eps: f64) -> Result<Self> {
        check_basic(k, r, eps)?;
        Ok(Self { k, r, rho: None, eps, x_points: peak_positions(k, r), y_points: None, signs: alternating_signs(k) })
    }

    pub fn segregated(k: usize, r: f64, rho: f64, eps: f64) -> Result<Self> {
        check_basic(k, r, eps)?;
        check_basic(k, rho, eps)?;
        Ok(Self {
            k,
            r,
            rho: Some(rho),
            eps,
            x_points: peak_positions(k, r),
            y_points: Some(offset_positions(k, rho)),
            signs: alternating_signs(k),
        })
    }

    /// Fails unless `r` (and `ρ`) lie in the admissible window.
    pub fn check_admissible(&self, m: f64, n: f64, delta: f64) -> Result<()> {
        let (lo, hi) = admissible_interval(self.eps, self.k, m, n, delta)?;
        for (name, x) in [("r", Some(self.r)), ("rho", self.rho)] {
            if let Some(x) = x {
                if x < lo || x > hi {
                    return Err(Error::InvalidParam(format!("{name} = {x} outside [{lo}, {hi}]")));
                }
            }
        }
        Ok(())
    }

    fn extent(&self) -> f64 {
        self.r.max(self.rho.unwrap_or(0.0))
    }
}

fn check_basic(k: usize, r: f64, eps: f64) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidParam("k must be positive".into()));
    }
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::InvalidParam(format!("radius must be positive, got {r}")));
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidParam(format!("eps must be positive, got {eps}")));
    }
    Ok(())
}

/// Default margin between the outermost peak and the box faces.
pub fn default_margin(eps: f64) -> f64 {
    6.0 * eps * (1.0 / eps).ln().max(1.0)
}

fn check_box(config: &PeakConfiguration, spec: &GridSpec, min_margin: Option<f64>) -> Result<()> {
    let required = min_margin.unwrap_or_else(|| default_margin(config.eps));
    let margin = spec.half_width - config.extent();
    if margin < required {
        return Err(Error::BoxTooSmall { margin, required });
    }
    Ok(())
}

/// `Σ_j s_j · amp · w(|x - p_j| / ε)`.
pub fn peak_sum(x: Point, eps: f64, centers: &[Point], signs: &[f64], w: &RadialProfile) -> f64 {
    let mut acc = 0.0;
    for (p, s) in centers.iter().zip(signs) {
        let d = ((x[0] - p[0]).powi(2) + (x[1] - p[1]).powi(2) + (x[2] - p[2]).powi(2)).sqrt();
        acc += s * w.value(d / eps);
    }
    acc
}

/// Synchronized ansatz `(αΣ s_j w_j, γΣ s_j w_j)`; `min_margin` defaults to `6ε ln(1/ε)`.
pub fn build_synchronized(
    config: &PeakConfiguration,
    params: &CoupledParams,
    w: &RadialProfile,
    spec: &GridSpec,
    min_margin: Option<f64>,
) -> Result<GridField> {
    let (alpha, gamma) = params.amplitudes()?;
    check_box(config, spec, min_margin)?;
    Ok(GridField::from_fn(*spec, config.eps, |x| {
        let s = peak_sum(x, config.eps, &config.x_points, &config.signs, w);
        (alpha * s, gamma * s)
    }))
}

/// Segregated ansatz: `u` from `U₁` at the x-points, `v` from `U₂` at the y-points.
pub fn build_segregated(
    config: &PeakConfiguration,
    u1: &RadialProfile,
    u2: &RadialProfile,
    spec: &GridSpec,
    min_margin: Option<f64>,
) -> Result<GridField> {
    let y = config.y_points.as_ref().ok_or_else(|| Error::InvalidParam("segregated ansatz needs rho".into()))?;
    check_box(config, spec, min_margin)?;
    Ok(GridField::from_fn(*spec, config.eps, |x| {
        (peak_sum(x, config.eps, &config.x_points, &config.signs, u1), peak_sum(x, config.eps, y, &config.signs, u2))
    }))
}

/// `∂/∂r Σ_j s_j W(|x - r e_j| / ε)` and the signed constraint density
/// `Σ_j s_j W_j² ∂_r W_j`, sampled on the grid.
pub fn radial_derivative_fields(
    spec: &GridSpec,
    eps: f64,
    centers: &[Point],
    signs: &[f64],
    w: &RadialProfile,
) -> (Vec<f64>, Vec<f64>) {
    let n = spec.n;
    let radius = centers.first().map_or(0.0, |p| (p[0] * p[0] + p[1] * p[1]).sqrt());
    let mut dr = vec![0.0; spec.len()];
    let mut cons = vec![0.0; spec.len()];
    dr.par_chunks_mut(n * n).zip(cons.par_chunks_mut(n * n)).enumerate().for_each(|(i, (pd, pc))| {
        for j in 0..n {
            for k in 0..n {
                let x = spec.point(i, j, k);
                let (mut a, mut b) = (0.0, 0.0);
                for (p, s) in centers.iter().zip(signs) {
                    let e = [p[0] / radius, p[1] / radius, 0.0];
                    let diff = [x[0] - p[0], x[1] - p[1], x[2] - p[2]];
                    let d = (diff[0] * diff[0] + diff[1] * diff[1] + diff[2] * diff[2]).sqrt();
                    let (val, der) = w.value_and_derivative(d / eps);
                    let y = if d > 0.0 { -der / eps * (diff[0] * e[0] + diff[1] * e[1]) / d } else { 0.0 };
                    a += s * y;
                    b += s * val * val * y;
                }
                pd[j * n + k] = a;
                pc[j * n + k] = b;
            }
        }
    });
    (dr, cons)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ComponentDefect {
    /// `max |f(R_{π/k} x) + f(x)|` over nodes whose image stays in the box.
    pub rotation: f64,
    pub even_x2: f64,
    pub even_x3: f64,
}

impl ComponentDefect {
    pub fn max(&self) -> f64 {
        self.rotation.max(self.even_x2).max(self.even_x3)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SymmetryDefect {
    pub u: ComponentDefect,
    pub v: ComponentDefect,
}

impl SymmetryDefect {
    pub fn max(&self) -> f64 {
        self.u.max().max(self.v.max())
    }
}

/// Defects with respect to the symmetry class with both components even in x₂.
pub fn symmetry_defect(field: &GridField, k: usize) -> SymmetryDefect {
    symmetry_defect_with(field, Parity::even(k), Parity::even(k))
}

/// The x₂-reflection defect is measured against the given parity; rotated
/// values come from tricubic interpolation.
pub fn symmetry_defect_with(field: &GridField, u_parity: Parity, v_parity: Parity) -> SymmetryDefect {
    SymmetryDefect {
        u: component_defect(field, Component::U, u_parity),
        v: component_defect(field, Component::V, v_parity),
    }
}

fn component_defect(field: &GridField, c: Component, parity: Parity) -> ComponentDefect {
    let spec = field.spec;
    let f = field.component(c);
    let n = spec.n;
    let l = spec.half_width * (1.0 + 1e-12);
    let (sin, cos) = (PI / parity.k as f64).sin_cos();
    let per_plane: Vec<ComponentDefect> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut d = ComponentDefect::default();
            for j in 0..n {
                for k in 0..n {
                    let here = f[spec.index(i, j, k)];
                    d.even_x2 = d.even_x2.max((f[spec.index(i, n - 1 - j, k)] - parity.x2 * here).abs());
                    d.even_x3 = d.even_x3.max((f[spec.index(i, j, n - 1 - k)] - here).abs());
                    let x = spec.point(i, j, k);
                    let (a, b) = (x[0] - spec.center[0], x[1] - spec.center[1]);
                    let (ra, rb) = (cos * a - sin * b, sin * a + cos * b);
                    if ra.abs() <= l && rb.abs() <= l {
                        let rotated = field.interpolate(c, [spec.center[0] + ra, spec.center[1] + rb, x[2]]);
                        d.rotation = d.rotation.max((rotated + here).abs());
                    }
                }
            }
            d
        })
        .collect();
    per_plane.iter().fold(ComponentDefect::default(), |acc, d| ComponentDefect {
        rotation: acc.rotation.max(d.rotation),
        even_x2: acc.even_x2.max(d.even_x2),
        even_x3: acc.even_x3.max(d.even_x3),
    })
}
