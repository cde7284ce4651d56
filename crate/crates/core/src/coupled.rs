//! Amplitude algebra for the synchronized pair `(U, V) = (αw, γw)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ground_state::RadialProfile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// `0 ≤ β < min{μ₁, μ₂}` (β = 0 is the decoupled limit).
    AttractiveSync,
    /// `-√(μ₁μ₂) < β < 0`.
    RepulsiveSync,
    /// `β > max{μ₁, μ₂}`.
    LargeBetaSync,
    /// `β < -√(μ₁μ₂)`: only the segregated construction applies.
    SegregatedOnly,
    /// `min{μ₁, μ₂} ≤ β ≤ max{μ₁, μ₂}`: a radicand is nonpositive.
    Invalid,
}

impl Regime {
    pub fn is_synchronized(self) -> bool {
        matches!(self, Regime::AttractiveSync | Regime::RepulsiveSync | Regime::LargeBetaSync)
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoupledParams {
    pub mu1: f64,
    pub mu2: f64,
    pub beta: f64,
    pub alpha: Option<f64>,
    pub gamma: Option<f64>,
    pub regime: Regime,
}

impl CoupledParams {
    /// `(α, γ)` or a `RegimeMismatch` error.
    pub fn amplitudes(&self) -> Result<(f64, f64)> {
        match (self.alpha, self.gamma) {
            (Some(a), Some(g)) => Ok((a, g)),
            _ => Err(Error::RegimeMismatch(self.regime.to_string())),
        }
    }

    pub fn is_decoupled(&self) -> bool {
        self.beta == 0.0
    }

    /// `¼(μ₁α⁴ + μ₂γ⁴ + 2βα²γ²)`, the factor multiplying `∫w⁴` in the
    /// single-peak energy.
    pub fn quartic_factor(&self) -> Result<f64> {
        let (a, g) = self.amplitudes()?;
        Ok(0.25 * (self.mu1 * a.powi(4) + self.mu2 * g.powi(4) + 2.0 * self.beta * a * a * g * g))
    }

    /// `μ₁α⁴/2 + μ₂γ⁴/2 + βα²γ²`, the factor multiplying the interaction constant.
    pub fn interaction_factor(&self) -> Result<f64> {
        let (a, g) = self.amplitudes()?;
        Ok(0.5 * self.mu1 * a.powi(4) + 0.5 * self.mu2 * g.powi(4) + self.beta * a * a * g * g)
    }
}

pub fn classify(mu1: f64, mu2: f64, beta: f64) -> Result<CoupledParams> {
    if !(mu1 > 0.0 && mu2 > 0.0) {
        return Err(Error::InvalidParam(format!("mu1, mu2 must be positive, got {mu1}, {mu2}")));
    }
    if !beta.is_finite() {
        return Err(Error::InvalidParam("beta must be finite".into()));
    }
    let product = mu1 * mu2;
    let denom = product - beta * beta;
    if denom.abs() <= 1e-14 * product {
        return Err(Error::SingularBeta { product });
    }
    let (lo, hi) = (mu1.min(mu2), mu1.max(mu2));
    let regime = if beta > hi {
        Regime::LargeBetaSync
    } else if beta >= lo {
        Regime::Invalid
    } else if beta >= 0.0 {
        Regime::AttractiveSync
    } else if denom > 0.0 {
        Regime::RepulsiveSync
    } else {
        Regime::SegregatedOnly
    };
    let (alpha, gamma) = if regime.is_synchronized() {
        let a2 = (mu2 - beta) / denom;
        let g2 = (mu1 - beta) / denom;
        debug_assert!(a2 > 0.0 && g2 > 0.0);
        (Some(a2.sqrt()), Some(g2.sqrt()))
    } else {
        (None, None)
    };
    Ok(CoupledParams { mu1, mu2, beta, alpha, gamma, regime })
}

/// Max over the sample radii of both residuals of the rescaled system
/// `-Δu + u = μ₁u³ + βv²u`, `-Δv + v = μ₂v³ + βu²v` with `(u, v) = (αw, γw)`.
/// `w` must solve the `μ = 1` problem. Each radius is snapped to the nearest
/// profile node, where `w''` comes from a sixth-order difference of the
/// stored `w'`.
pub fn synchronized_residual(params: &CoupledParams, profile: &RadialProfile, sample_radii: &[f64]) -> Result<f64> {
    let (alpha, gamma) = params.amplitudes()?;
    let h = profile.spacing();
    let last = profile.r_grid.len() - 4;
    let d = |j: isize| -> f64 {
        if j < 0 {
            -profile.derivs[(-j) as usize]
        } else {
            profile.derivs[j as usize]
        }
    };
    let mut worst: f64 = 0.0;
    for &r in sample_radii {
        if !(r > 0.0) {
            return Err(Error::InvalidParam(format!("sample radius must be positive, got {r}")));
        }
        let i = ((r / h).round() as usize).clamp(1, last) as isize;
        let second =
            (-d(i - 3) + 9.0 * d(i - 2) - 45.0 * d(i - 1) + 45.0 * d(i + 1) - 9.0 * d(i + 2) + d(i + 3)) / (60.0 * h);
        let (ri, w, dw) = (profile.r_grid[i as usize], profile.values[i as usize], profile.derivs[i as usize]);
        let lap = second + 2.0 * dw / ri;
        let (u, v) = (alpha * w, gamma * w);
        let ru = -alpha * lap + u - params.mu1 * u.powi(3) - params.beta * v * v * u;
        let rv = -gamma * lap + v - params.mu2 * v.powi(3) - params.beta * u * u * v;
        worst = worst.max(ru.abs()).max(rv.abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ground_state::solve_ground_state;
    use proptest::prelude::*;

    #[test]
    fn decoupled_unit() {
        let p = classify(1.0, 1.0, 0.0).unwrap();
        assert_eq!(p.amplitudes().unwrap(), (1.0, 1.0));
        assert_eq!(p.regime, Regime::AttractiveSync);
        assert!(p.is_decoupled());
    }

    #[test]
    fn singular_beta() {
        assert!(matches!(classify(1.0, 4.0, -2.0), Err(Error::SingularBeta { .. })));
        assert!(matches!(classify(1.0, 4.0, 2.0), Err(Error::SingularBeta { .. })));
    }

    #[test]
    fn regimes() {
        assert_eq!(classify(1.0, 2.0, -0.5).unwrap().regime, Regime::RepulsiveSync);
        assert_eq!(classify(1.0, 2.0, 0.5).unwrap().regime, Regime::AttractiveSync);
        assert_eq!(classify(1.0, 2.0, 1.0).unwrap().regime, Regime::Invalid);
        assert_eq!(classify(1.0, 2.0, 1.5).unwrap().regime, Regime::Invalid);
        assert_eq!(classify(1.0, 2.0, 2.0).unwrap().regime, Regime::Invalid);
        assert_eq!(classify(1.0, 2.0, 3.0).unwrap().regime, Regime::LargeBetaSync);
        let seg = classify(1.0, 2.0, -3.0).unwrap();
        assert_eq!(seg.regime, Regime::SegregatedOnly);
        assert!(matches!(seg.amplitudes(), Err(Error::RegimeMismatch(_))));
    }

    #[test]
    fn synchronized_residuals_small() {
        let w = solve_ground_state(1.0, 25.0, 8000).unwrap();
        let radii: Vec<f64> = (1..60).map(|i| 0.2 * i as f64).collect();
        for (m1, m2, b, tol) in
            [(1.0, 1.0, 0.0, 1e-7), (2.0, 3.0, 1.0, 1e-6), (1.0, 1.0, 0.9, 1e-6), (1.0, 1.0, 0.5, 1e-6)]
        {
            let p = classify(m1, m2, b).unwrap();
            let res = synchronized_residual(&p, &w, &radii).unwrap();
            assert!(res < tol, "({m1},{m2},{b}) residual {res:e}");
        }
        let p = classify(1.0, 1.0, 0.5).unwrap();
        let (a, g) = p.amplitudes().unwrap();
        assert!((a - g).abs() < 1e-15);
    }

    #[test]
    fn identity_for_two_three_one() {
        // α² = (3-1)/(6-1) = 2/5, γ² = (2-1)/5 = 1/5: 2·2/5 + 1/5 = 1, 3/5 + 2/5 = 1
        let p = classify(2.0, 3.0, 1.0).unwrap();
        let (a, g) = p.amplitudes().unwrap();
        assert!((a * a - 0.4).abs() < 1e-15 && (g * g - 0.2).abs() < 1e-15);
    }

    #[test]
    fn small_beta_limit() {
        let p = classify(2.0, 5.0, 1e-9).unwrap();
        let (a, g) = p.amplitudes().unwrap();
        assert!((a - 1.0 / 2f64.sqrt()).abs() < 1e-8);
        assert!((g - 1.0 / 5f64.sqrt()).abs() < 1e-8);
    }

    fn admissible() -> impl Strategy<Value = (f64, f64, f64)> {
        (0.2f64..5.0, 0.2f64..5.0, 0.0f64..1.0, 0usize..3).prop_map(|(m1, m2, t, branch)| {
            let s = (m1 * m2).sqrt();
            let (lo, hi) = (m1.min(m2), m1.max(m2));
            let b = match branch {
                0 => -s * (0.02 + 0.96 * t),
                1 => lo * (0.02 + 0.96 * t),
                _ => hi * (1.02 + 3.0 * t),
            };
            (m1, m2, b)
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn amplitude_identities((m1, m2, b) in admissible()) {
            let p = classify(m1, m2, b).unwrap();
            let (a, g) = p.amplitudes().unwrap();
            prop_assert!((m1 * a * a + b * g * g - 1.0).abs() < 1e-12);
            prop_assert!((m2 * g * g + b * a * a - 1.0).abs() < 1e-12);
            let swapped = classify(m2, m1, b).unwrap();
            prop_assert_eq!(swapped.alpha, p.gamma);
            prop_assert_eq!(swapped.gamma, p.alpha);
            // the combination in the asymptotic-profile metric vanishes identically
            let comb = (m1 - b).abs().sqrt() * a - (m2 - b).abs().sqrt() * g;
            prop_assert!(comb.abs() < 1e-12 * ((m1 - b).abs().sqrt() * a).max(1.0));
        }
    }
}
