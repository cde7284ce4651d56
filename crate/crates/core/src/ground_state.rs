//! Radial ground state of `-Δu + u = μ u³` in three dimensions.
//!
//! The profile is obtained by shooting on `u(0)` with bisection, integrating
//! the radial IVP with an adaptive Dormand-Prince 5(4) pair up to a matching
//! radius, and continuing with the exact linear far field `c0 e^{-r}/r`
//! (the cubic term is `O(e^{-3r})` there).

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use crate::error::{Error, Result};

pub const DEFAULT_ODE_TOL: f64 = 1e-8;
pub const DEFAULT_TAIL_TOL: f64 = 1e-3;
const FORMAT_TAG: &str = "nodal-profile v1";

#[derive(Debug, Clone, Copy)]
pub struct ShootingOptions {
    pub ode_tol: f64,
    pub tail_tol: f64,
    /// Radius where the integrated trajectory hands over to the far-field form.
    pub match_radius: f64,
    pub rtol: f64,
}

impl Default for ShootingOptions {
    fn default() -> Self {
        Self { ode_tol: DEFAULT_ODE_TOL, tail_tol: DEFAULT_TAIL_TOL, match_radius: 8.0, rtol: 1e-13 }
    }
}

/// Tabulated radial solution on a uniform grid, `r_grid[0] = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialProfile {
    pub mu: f64,
    pub r_grid: Vec<f64>,
    pub values: Vec<f64>,
    pub derivs: Vec<f64>,
    pub c0: f64,
    pub r_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Fate {
    /// `u` changed sign: the shooting value is too large.
    Crosses,
    /// `u` turned upward while positive: the shooting value is too small.
    Rises,
    Decays,
}

type State = [f64; 2];

fn rhs(mu: f64, r: f64, y: &State) -> State {
    [y[1], -2.0 / r * y[1] + y[0] - mu * y[0].powi(3)]
}

/// Series expansion near the origin: `u = s + a r² + b r⁴`.
fn series_start(mu: f64, s: f64, r: f64) -> State {
    let a = (s - mu * s.powi(3)) / 6.0;
    let b = a * (1.0 - 3.0 * mu * s * s) / 20.0;
    [s + a * r * r + b * r.powi(4), 2.0 * a * r + 4.0 * b * r.powi(3)]
}

const SERIES_RADIUS: f64 = 1e-3;

/// One Dormand-Prince step. Returns the 5th-order solution and an error estimate.
fn dp45_step(mu: f64, r: f64, y: &State, h: f64) -> (State, f64) {
    let f = |r: f64, y: &State| rhs(mu, r, y);
    let add = |y: &State, terms: &[(f64, &State)]| {
        let mut out = *y;
        for (c, k) in terms {
            out[0] += h * c * k[0];
            out[1] += h * c * k[1];
        }
        out
    };
    let k1 = f(r, y);
    let k2 = f(r + h / 5.0, &add(y, &[(1.0 / 5.0, &k1)]));
    let k3 = f(r + 3.0 * h / 10.0, &add(y, &[(3.0 / 40.0, &k1), (9.0 / 40.0, &k2)]));
    let k4 = f(r + 4.0 * h / 5.0, &add(y, &[(44.0 / 45.0, &k1), (-56.0 / 15.0, &k2), (32.0 / 9.0, &k3)]));
    let k5 = f(
        r + 8.0 * h / 9.0,
        &add(y, &[(19372.0 / 6561.0, &k1), (-25360.0 / 2187.0, &k2), (64448.0 / 6561.0, &k3), (-212.0 / 729.0, &k4)]),
    );
    let k6 = f(
        r + h,
        &add(
            y,
            &[
                (9017.0 / 3168.0, &k1),
                (-355.0 / 33.0, &k2),
                (46732.0 / 5247.0, &k3),
                (49.0 / 176.0, &k4),
                (-5103.0 / 18656.0, &k5),
            ],
        ),
    );
    let y5 = add(
        y,
        &[
            (35.0 / 384.0, &k1),
            (500.0 / 1113.0, &k3),
            (125.0 / 192.0, &k4),
            (-2187.0 / 6784.0, &k5),
            (11.0 / 84.0, &k6),
        ],
    );
    let k7 = f(r + h, &y5);
    let y4 = add(
        y,
        &[
            (5179.0 / 57600.0, &k1),
            (7571.0 / 16695.0, &k3),
            (393.0 / 640.0, &k4),
            (-92097.0 / 339200.0, &k5),
            (187.0 / 2100.0, &k6),
            (1.0 / 40.0, &k7),
        ],
    );
    let err = ((y5[0] - y4[0]).abs()).max((y5[1] - y4[1]).abs());
    (y5, err)
}

/// Adaptive integration from `r0` to `r1`. `watch` is called after every
/// accepted step and may stop the integration early.
fn integrate(
    mu: f64,
    r0: f64,
    y0: State,
    r1: f64,
    rtol: f64,
    mut watch: impl FnMut(f64, &State) -> bool,
) -> (f64, State) {
    let mut r = r0;
    let mut y = y0;
    let mut h = ((r1 - r0) / 8.0).min(0.05);
    while r < r1 {
        if r + h > r1 {
            h = r1 - r;
        }
        let (y_new, err) = dp45_step(mu, r, &y, h);
        let scale = rtol * (y[0].abs().max(y_new[0].abs()) + y[1].abs().max(y_new[1].abs())) + 1e-300;
        let ratio = err / scale;
        if ratio <= 1.0 || h < 1e-12 {
            r += h;
            y = y_new;
            if watch(r, &y) {
                return (r, y);
            }
        }
        let factor = if ratio == 0.0 { 5.0 } else { (0.9 * ratio.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
    }
    (r, y)
}

fn classify_shot(mu: f64, s: f64, r_max: f64, rtol: f64) -> Fate {
    let mut fate = Fate::Decays;
    let y0 = series_start(mu, s, SERIES_RADIUS);
    if y0[1] > 0.0 {
        return Fate::Rises;
    }
    integrate(mu, SERIES_RADIUS, y0, r_max, rtol, |_, y| {
        if y[0] < 0.0 {
            fate = Fate::Crosses;
            true
        } else if y[1] > 0.0 {
            fate = Fate::Rises;
            true
        } else {
            false
        }
    });
    fate
}

/// Bisection on the shooting value `u(0)`; returns the final bracket.
pub fn bracket_shooting_value(mu: f64, r_max: f64, rtol: f64) -> Result<(f64, f64)> {
    let scale = 1.0 / mu.sqrt();
    let mut lo = scale * 1.001;
    let mut hi = scale * 10.0;
    if classify_shot(mu, lo, r_max, rtol) == Fate::Crosses || classify_shot(mu, hi, r_max, rtol) != Fate::Crosses {
        return Err(Error::NonConvergence("initial shooting bracket does not straddle the ground state".into()));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return Ok((lo, hi));
        }
        match classify_shot(mu, mid, r_max, rtol) {
            Fate::Crosses => hi = mid,
            Fate::Rises => lo = mid,
            Fate::Decays => return Ok((mid, mid)),
        }
    }
    Err(Error::NonConvergence(format!("bracket [{lo}, {hi}] did not collapse")))
}

/// Solve for the ground state with default tolerances.
pub fn solve_ground_state(mu: f64, r_max: f64, nodes: usize) -> Result<RadialProfile> {
    solve_ground_state_with(mu, r_max, nodes, ShootingOptions::default())
}

pub fn solve_ground_state_with(mu: f64, r_max: f64, nodes: usize, opts: ShootingOptions) -> Result<RadialProfile> {
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(Error::InvalidParam(format!("mu must be positive, got {mu}")));
    }
    if r_max < 20.0 {
        return Err(Error::InvalidParam(format!("r_max must be at least 20, got {r_max}")));
    }
    if nodes < 2000 {
        return Err(Error::InvalidParam(format!("need at least 2000 nodes, got {nodes}")));
    }
    let (lo, hi) = bracket_shooting_value(mu, r_max, opts.rtol)?;
    let s = 0.5 * (lo + hi);

    let h = r_max / (nodes - 1) as f64;
    let r_grid: Vec<f64> = (0..nodes).map(|i| i as f64 * h).collect();
    let i_match = ((opts.match_radius / h).floor() as usize).clamp(8, nodes - 2);
    let mut values = vec![0.0; nodes];
    let mut derivs = vec![0.0; nodes];
    values[0] = s;

    let mut r = SERIES_RADIUS.min(0.5 * h);
    let mut y = series_start(mu, s, r);
    for i in 1..=i_match {
        let (r_end, y_end) = integrate(mu, r, y, r_grid[i], opts.rtol, |_, _| false);
        r = r_end;
        y = y_end;
        values[i] = y[0];
        derivs[i] = y[1];
    }
    let r_m = r_grid[i_match];
    if !(values[i_match] > 0.0 && derivs[i_match] < 0.0) {
        return Err(Error::NonConvergence(format!("trajectory left the decaying branch before r = {r_m}")));
    }
    // the far field satisfies u'/u = -(1 + 1/r); a mismatch means the unstable mode has grown
    let log_deriv_gap = (derivs[i_match] / values[i_match] + 1.0 + 1.0 / r_m).abs();
    if log_deriv_gap > opts.tail_tol {
        return Err(Error::NonConvergence(format!("log-derivative mismatch {log_deriv_gap:.3e} at matching radius")));
    }
    let c0 = values[i_match] * r_m * r_m.exp();
    for i in i_match + 1..nodes {
        let (u, du) = tail(c0, r_grid[i]);
        values[i] = u;
        derivs[i] = du;
    }

    let profile = RadialProfile { mu, r_grid, values, derivs, c0, r_max };
    profile.check_invariants(opts.ode_tol)?;
    Ok(profile)
}

fn tail(c0: f64, r: f64) -> (f64, f64) {
    let u = c0 * (-r).exp() / r;
    (u, -u * (1.0 + 1.0 / r))
}

/// Least-squares fit of `log u + r + log r` to a constant over the window.
/// Returns `(c0, max residual)`.
pub fn fit_decay_constant(r: &[f64], u: &[f64], window: (f64, f64)) -> Option<(f64, f64)> {
    let ys: Vec<f64> = r
        .iter()
        .zip(u)
        .filter(|(r, u)| **r >= window.0 && **r <= window.1 && **u > 0.0)
        .map(|(r, u)| u.ln() + r + r.ln())
        .collect();
    if ys.is_empty() {
        return None;
    }
    let mean = ys.iter().sum::<f64>() / ys.len() as f64;
    let resid = ys.iter().map(|y| (y - mean).abs()).fold(0.0, f64::max);
    Some((mean.exp(), resid))
}

/// Decay constant `C0 = lim r e^r u(r)` fitted over `[0.6, 0.9]·r_max`.
pub fn decay_constant(profile: &RadialProfile) -> Result<f64> {
    decay_constant_with_residual(profile, DEFAULT_TAIL_TOL).map(|(c, _)| c)
}

pub fn decay_constant_with_residual(profile: &RadialProfile, tail_tol: f64) -> Result<(f64, f64)> {
    let window = (0.6 * profile.r_max, 0.9 * profile.r_max);
    let (c0, resid) = fit_decay_constant(&profile.r_grid, &profile.values, window)
        .ok_or_else(|| Error::InvalidParam("no positive samples in the fit window".into()))?;
    if resid > tail_tol {
        return Err(Error::PoorFit { residual: resid, tol: tail_tol });
    }
    Ok((c0, resid))
}

/// Value of the profile at `r ≥ 0`: cubic Hermite on the grid, far-field
/// formula beyond `r_max`.
pub fn evaluate(profile: &RadialProfile, r: f64) -> f64 {
    profile.value(r)
}

impl RadialProfile {
    /// Build a profile from externally supplied samples (no ODE check).
    pub fn from_samples(mu: f64, r_grid: Vec<f64>, values: Vec<f64>, derivs: Vec<f64>, c0: f64) -> Result<Self> {
        if r_grid.len() < 2 || r_grid.len() != values.len() || r_grid.len() != derivs.len() {
            return Err(Error::InvalidParam("sample arrays must have equal length >= 2".into()));
        }
        if r_grid[0] != 0.0 {
            return Err(Error::InvalidParam("r_grid must start at 0".into()));
        }
        let r_max = *r_grid.last().unwrap();
        Ok(Self { mu, r_grid, values, derivs, c0, r_max })
    }

    pub fn spacing(&self) -> f64 {
        self.r_grid[1] - self.r_grid[0]
    }

    pub fn peak_value(&self) -> f64 {
        self.values[0]
    }

    pub fn value(&self, r: f64) -> f64 {
        self.value_and_derivative(r).0
    }

    /// `(u(r), u'(r))`.
    pub fn value_and_derivative(&self, r: f64) -> (f64, f64) {
        let r = r.abs();
        if r >= self.r_max {
            return tail(self.c0, r);
        }
        let h = self.spacing();
        let i = ((r / h) as usize).min(self.r_grid.len() - 2);
        let t = (r - self.r_grid[i]) / h;
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let (d0, d1) = (self.derivs[i] * h, self.derivs[i + 1] * h);
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        let value = h00 * y0 + h10 * d0 + h01 * y1 + h11 * d1;
        let dh00 = 6.0 * t2 - 6.0 * t;
        let dh10 = 3.0 * t2 - 4.0 * t + 1.0;
        let dh01 = -6.0 * t2 + 6.0 * t;
        let dh11 = 3.0 * t2 - 2.0 * t;
        let deriv = (dh00 * y0 + dh10 * d0 + dh01 * y1 + dh11 * d1) / h;
        (value, deriv)
    }

    /// Pointwise ODE residual `|u'' + 2u'/r - u + μu³|` at node `i`, with
    /// `u''` from a sixth-order central difference of the stored `u'`
    /// (odd reflection through the origin). `None` near the outer end.
    pub fn ode_residual_at(&self, i: usize) -> Option<f64> {
        let n = self.r_grid.len();
        if i == 0 || i + 3 >= n {
            return None;
        }
        let h = self.spacing();
        let d = |j: isize| -> f64 {
            if j < 0 {
                -self.derivs[(-j) as usize]
            } else {
                self.derivs[j as usize]
            }
        };
        let i = i as isize;
        let second =
            (-d(i - 3) + 9.0 * d(i - 2) - 45.0 * d(i - 1) + 45.0 * d(i + 1) - 9.0 * d(i + 2) + d(i + 3)) / (60.0 * h);
        let (r, u, du) = (self.r_grid[i as usize], self.values[i as usize], self.derivs[i as usize]);
        Some((second + 2.0 * du / r - u + self.mu * u.powi(3)).abs())
    }

    pub fn max_ode_residual(&self) -> f64 {
        (1..self.r_grid.len()).filter_map(|i| self.ode_residual_at(i)).fold(0.0, f64::max)
    }

    fn check_invariants(&self, ode_tol: f64) -> Result<()> {
        if self.derivs[0] != 0.0 {
            return Err(Error::NonConvergence("u'(0) must vanish".into()));
        }
        for w in self.values.windows(2) {
            if !(w[1] < w[0]) || !(w[1] > 0.0) {
                return Err(Error::NonConvergence("profile is not positive and strictly decreasing".into()));
            }
        }
        let resid = self.max_ode_residual();
        if !(resid < ode_tol) {
            return Err(Error::NonConvergence(format!("ODE residual {resid:.3e} above {ode_tol:.1e}")));
        }
        Ok(())
    }

    /// Versioned text dump: a header line, then `r u u'` per line.
    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(self.r_grid.len() * 72);
        let _ = writeln!(s, "{FORMAT_TAG} mu={:.17e} c0={:.17e} nodes={}", self.mu, self.c0, self.r_grid.len());
        for i in 0..self.r_grid.len() {
            let _ = writeln!(s, "{:.17e} {:.17e} {:.17e}", self.r_grid[i], self.values[i], self.derivs[i]);
        }
        s
    }

    pub fn from_text(reader: impl Read) -> Result<Self> {
        let mut lines = BufReader::new(reader).lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty profile file".into()))??;
        let rest =
            header.strip_prefix(FORMAT_TAG).ok_or_else(|| Error::Parse(format!("unknown profile header: {header}")))?;
        let mut mu = None;
        let mut c0 = None;
        let mut nodes = None;
        for kv in rest.split_whitespace() {
            let (k, v) = kv.split_once('=').ok_or_else(|| Error::Parse(format!("bad header field {kv}")))?;
            match k {
                "mu" => mu = Some(parse_f64(v)?),
                "c0" => c0 = Some(parse_f64(v)?),
                "nodes" => nodes = Some(v.parse::<usize>().map_err(|e| Error::Parse(e.to_string()))?),
                _ => return Err(Error::Parse(format!("unknown header key {k}"))),
            }
        }
        let (mu, c0, nodes) = match (mu, c0, nodes) {
            (Some(a), Some(b), Some(c)) => (a, b, c),
            _ => return Err(Error::Parse("header must carry mu, c0 and nodes".into())),
        };
        let mut r_grid = Vec::with_capacity(nodes);
        let mut values = Vec::with_capacity(nodes);
        let mut derivs = Vec::with_capacity(nodes);
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split_whitespace().collect();
            if cols.len() != 3 {
                return Err(Error::Parse(format!("expected 3 columns, got: {line}")));
            }
            r_grid.push(parse_f64(cols[0])?);
            values.push(parse_f64(cols[1])?);
            derivs.push(parse_f64(cols[2])?);
        }
        if r_grid.len() != nodes {
            return Err(Error::Parse(format!("header announces {nodes} nodes, found {}", r_grid.len())));
        }
        Self::from_samples(mu, r_grid, values, derivs, c0)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_text(std::fs::File::open(path)?)
    }
}

fn parse_f64(s: &str) -> Result<f64> {
    s.parse::<f64>().map_err(|e| Error::Parse(format!("{s}: {e}")))
}
