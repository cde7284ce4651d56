//! Tensor grids on a cube, two-component fields, finite-difference stencils
//! and the discrete symmetry group used to project iterates.
//!
//! Nodes sit at `center + (-L + i h)` per axis with `h = 2L/(n-1)`. Values
//! outside the box are treated as an odd reflection through a virtual zero
//! one spacing beyond the last node, so every stencil here is diagonalized by
//! the type-I discrete sine transform.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numerics::pairwise_sum;

const FORMAT_TAG: &str = "nodal-field v1";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub half_width: f64,
    pub n: usize,
    pub center: [f64; 3],
}

impl GridSpec {
    pub fn new(half_width: f64, n: usize) -> Result<Self> {
        if !(half_width > 0.0) || !half_width.is_finite() {
            return Err(Error::InvalidParam(format!("half width must be positive, got {half_width}")));
        }
        if n < 5 || n.is_multiple_of(2) {
            return Err(Error::InvalidParam(format!("node count per axis must be odd and >= 5, got {n}")));
        }
        Ok(Self { half_width, n, center: [0.0; 3] })
    }

    /// Odd node count with spacing at most `h_max` covering `[-L, L]`.
    pub fn with_max_spacing(half_width: f64, h_max: f64) -> Result<Self> {
        let cells = (2.0 * half_width / h_max).ceil() as usize;
        let cells = cells + cells % 2;
        Self::new(half_width, cells.max(4) + 1)
    }

    pub fn centered_at(mut self, center: [f64; 3]) -> Self {
        self.center = center;
        self
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / (self.n - 1) as f64
    }

    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn offset(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.spacing()
    }

    pub fn point(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        [self.center[0] + self.offset(i), self.center[1] + self.offset(j), self.center[2] + self.offset(k)]
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n + j) * self.n + k
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(3)
    }

    pub fn same_nodes(&self, other: &GridSpec) -> bool {
        self.n == other.n && self.half_width == other.half_width && self.center == other.center
    }
}

/// Maps a possibly out-of-range line index onto `(in-range index, sign)`;
/// `None` stands for the zero at the virtual boundary node.
#[inline]
pub fn ghost(idx: isize, n: usize) -> Option<(usize, f64)> {
    let n = n as isize;
    if (0..n).contains(&idx) {
        Some((idx as usize, 1.0))
    } else if idx == -1 || idx == n {
        None
    } else if idx < -1 {
        Some(((-2 - idx) as usize, -1.0))
    } else {
        Some(((2 * n - idx) as usize, -1.0))
    }
}

/// Central finite-difference weights of a given even order.
#[derive(Debug, Clone, PartialEq)]
pub struct Stencil {
    pub order: usize,
    /// `[c0, c1, .., cR]` for `f'' ≈ (c0 f_i + Σ c_s (f_{i+s} + f_{i-s})) / h²`.
    pub second: Vec<f64>,
}

impl Stencil {
    pub fn new(order: usize) -> Result<Self> {
        let second = match order {
            2 => vec![-2.0, 1.0],
            4 => vec![-5.0 / 2.0, 4.0 / 3.0, -1.0 / 12.0],
            6 => vec![-49.0 / 18.0, 3.0 / 2.0, -3.0 / 20.0, 1.0 / 90.0],
            _ => return Err(Error::InvalidParam(format!("stencil order must be 2, 4 or 6, got {order}"))),
        };
        Ok(Self { order, second })
    }

    pub fn radius(&self) -> usize {
        self.second.len() - 1
    }

    /// Eigenvalue of the 1D second difference on the sine mode with angle `theta`.
    pub fn second_symbol(&self, theta: f64, h: f64) -> f64 {
        let mut s = self.second[0];
        for (q, c) in self.second.iter().enumerate().skip(1) {
            s += 2.0 * c * (q as f64 * theta).cos();
        }
        s / (h * h)
    }
}

/// `out = Δ_h f` on the grid.
pub fn laplacian(spec: &GridSpec, stencil: &Stencil, f: &[f64], out: &mut [f64]) {
    let n = spec.n;
    let n2 = n * n;
    let inv_h2 = 1.0 / (spec.spacing() * spec.spacing());
    let c = &stencil.second;
    let radius = stencil.radius() as isize;
    out.par_chunks_mut(n2).enumerate().for_each(|(i, plane)| {
        let c0 = 3.0 * c[0];
        let here = &f[i * n2..(i + 1) * n2];
        for (o, x) in plane.iter_mut().zip(here) {
            *o = c0 * x;
        }
        // x1 direction: whole planes
        for s in 1..=radius {
            let cs = c[s as usize];
            for idx in [i as isize - s, i as isize + s] {
                if let Some((ii, sign)) = ghost(idx, n) {
                    let w = cs * sign;
                    let other = &f[ii * n2..(ii + 1) * n2];
                    for (o, x) in plane.iter_mut().zip(other) {
                        *o += w * x;
                    }
                }
            }
        }
        // x2 direction: rows within the plane
        for j in 0..n {
            let row = &mut plane[j * n..(j + 1) * n];
            for s in 1..=radius {
                let cs = c[s as usize];
                for idx in [j as isize - s, j as isize + s] {
                    if let Some((jj, sign)) = ghost(idx, n) {
                        let w = cs * sign;
                        let other = &here[jj * n..(jj + 1) * n];
                        for (o, x) in row.iter_mut().zip(other) {
                            *o += w * x;
                        }
                    }
                }
            }
        }
        // x3 direction: within each row
        let r = radius as usize;
        let mut pad = vec![0.0; n + 2 * r];
        for j in 0..n {
            let src = &here[j * n..(j + 1) * n];
            pad[r..r + n].copy_from_slice(src);
            for q in 0..r {
                // pad[r - 1 - q] holds index -1 - q, pad[r + n + q] holds index n + q
                pad[r - 1 - q] = ghost(-1 - q as isize, n).map_or(0.0, |(t, sg)| sg * src[t]);
                pad[r + n + q] = ghost((n + q) as isize, n).map_or(0.0, |(t, sg)| sg * src[t]);
            }
            let row = &mut plane[j * n..(j + 1) * n];
            for (kk, o) in row.iter_mut().enumerate() {
                let mut acc = 0.0;
                for s in 1..=r {
                    acc += c[s] * (pad[r + kk - s] + pad[r + kk + s]);
                }
                *o += acc;
            }
        }
        for o in plane.iter_mut() {
            *o *= inv_h2;
        }
    });
}

/// Deterministic sum of `f(i)` over all grid nodes: per-plane partial sums,
/// then a pairwise reduction in plane order.
pub fn grid_sum(len: usize, plane: usize, f: impl Fn(usize) -> f64 + Sync) -> f64 {
    let partial: Vec<f64> = (0..len.div_ceil(plane))
        .into_par_iter()
        .map(|p| {
            let lo = p * plane;
            let hi = (lo + plane).min(len);
            let vals: Vec<f64> = (lo..hi).map(&f).collect();
            pairwise_sum(&vals)
        })
        .collect();
    pairwise_sum(&partial)
}

/// Deterministic dot product of two equally long vectors.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    grid_sum(a.len(), 8192, |i| a[i] * b[i])
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.par_iter().map(|x| x.abs()).reduce(|| 0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    U,
    V,
}

/// Two scalar fields sampled on the same grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    pub spec: GridSpec,
    pub eps: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl GridField {
    pub fn zeros(spec: GridSpec, eps: f64) -> Self {
        Self { spec, eps, u: vec![0.0; spec.len()], v: vec![0.0; spec.len()] }
    }

    /// Sample `(u, v) = f(x)` at every node.
    pub fn from_fn(spec: GridSpec, eps: f64, f: impl Fn([f64; 3]) -> (f64, f64) + Sync) -> Self {
        let n = spec.n;
        let mut u = vec![0.0; spec.len()];
        let mut v = vec![0.0; spec.len()];
        u.par_chunks_mut(n * n).zip(v.par_chunks_mut(n * n)).enumerate().for_each(|(i, (pu, pv))| {
            for j in 0..n {
                for k in 0..n {
                    let (a, b) = f(spec.point(i, j, k));
                    pu[j * n + k] = a;
                    pv[j * n + k] = b;
                }
            }
        });
        Self { spec, eps, u, v }
    }

    pub fn component(&self, c: Component) -> &[f64] {
        match c {
            Component::U => &self.u,
            Component::V => &self.v,
        }
    }

    /// Largest magnitude on the six faces of the box.
    pub fn boundary_max(&self) -> f64 {
        let n = self.spec.n;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    if i == 0 || j == 0 || k == 0 || i == n - 1 || j == n - 1 || k == n - 1 {
                        let idx = self.spec.index(i, j, k);
                        worst = worst.max(self.u[idx].abs()).max(self.v[idx].abs());
                    }
                }
            }
        }
        worst
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(&self.v).all(|x| x.is_finite())
    }

    /// Tricubic Lagrange interpolation; points outside the box see the odd
    /// reflection used by the stencils.
    pub fn interpolate(&self, c: Component, p: [f64; 3]) -> f64 {
        let f = self.component(c);
        let n = self.spec.n;
        let h = self.spec.spacing();
        let mut base = [0isize; 3];
        let mut w = [[0.0; 4]; 3];
        for a in 0..3 {
            let t = (p[a] - self.spec.center[a] + self.spec.half_width) / h;
            let i0 = t.floor();
            base[a] = i0 as isize - 1;
            w[a] = lagrange_weights(t - i0);
        }
        let mut acc = 0.0;
        for (a, wa) in w[0].iter().enumerate() {
            let Some((i, si)) = ghost(base[0] + a as isize, n) else { continue };
            for (b, wb) in w[1].iter().enumerate() {
                let Some((j, sj)) = ghost(base[1] + b as isize, n) else { continue };
                for (cc, wc) in w[2].iter().enumerate() {
                    let Some((k, sk)) = ghost(base[2] + cc as isize, n) else { continue };
                    acc += wa * wb * wc * si * sj * sk * f[(i * n + j) * n + k];
                }
            }
        }
        acc
    }

    /// Versioned text dump: header, then one `u v` pair per node in index order.
    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(self.spec.len() * 50 + 200);
        let c = self.spec.center;
        let _ = writeln!(
            s,
            "{FORMAT_TAG} L={:.17e} n={} eps={:.17e} center={:.17e},{:.17e},{:.17e}",
            self.spec.half_width, self.spec.n, self.eps, c[0], c[1], c[2]
        );
        for (a, b) in self.u.iter().zip(&self.v) {
            let _ = writeln!(s, "{a:.17e} {b:.17e}");
        }
        s
    }

    pub fn from_text(reader: impl Read) -> Result<Self> {
        let mut lines = BufReader::new(reader).lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty field file".into()))??;
        let rest =
            header.strip_prefix(FORMAT_TAG).ok_or_else(|| Error::Parse(format!("unknown field header: {header}")))?;
        let (mut l, mut n, mut eps, mut center) = (None, None, None, None);
        for kv in rest.split_whitespace() {
            let (k, v) = kv.split_once('=').ok_or_else(|| Error::Parse(format!("bad header field {kv}")))?;
            match k {
                "L" => l = Some(parse(v)?),
                "n" => n = Some(v.parse::<usize>().map_err(|e| Error::Parse(e.to_string()))?),
                "eps" => eps = Some(parse(v)?),
                "center" => {
                    let parts: Vec<f64> = v.split(',').map(parse).collect::<Result<_>>()?;
                    if parts.len() != 3 {
                        return Err(Error::Parse("center needs three coordinates".into()));
                    }
                    center = Some([parts[0], parts[1], parts[2]]);
                }
                _ => return Err(Error::Parse(format!("unknown header key {k}"))),
            }
        }
        let (Some(l), Some(n), Some(eps), Some(center)) = (l, n, eps, center) else {
            return Err(Error::Parse("header must carry L, n, eps and center".into()));
        };
        let spec = GridSpec::new(l, n)?.centered_at(center);
        let mut u = Vec::with_capacity(spec.len());
        let mut v = Vec::with_capacity(spec.len());
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut it = line.split_whitespace();
            match (it.next(), it.next(), it.next()) {
                (Some(a), Some(b), None) => {
                    u.push(parse(a)?);
                    v.push(parse(b)?);
                }
                _ => return Err(Error::Parse(format!("expected two columns, got: {line}"))),
            }
        }
        if u.len() != spec.len() {
            return Err(Error::Parse(format!("expected {} nodes, found {}", spec.len(), u.len())));
        }
        Ok(Self { spec, eps, u, v })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_text(std::fs::File::open(path)?)
    }

    /// CSV of the `x₃ = 0` plane (the middle node layer).
    pub fn slice_csv(&self) -> String {
        let n = self.spec.n;
        let mid = n / 2;
        let mut s = String::from("x1,x2,u,v\n");
        for i in 0..n {
            for j in 0..n {
                let p = self.spec.point(i, j, mid);
                let idx = self.spec.index(i, j, mid);
                let _ = writeln!(s, "{:.10e},{:.10e},{:.10e},{:.10e}", p[0], p[1], self.u[idx], self.v[idx]);
            }
        }
        s
    }
}

fn parse(s: &str) -> Result<f64> {
    s.parse::<f64>().map_err(|e| Error::Parse(format!("{s}: {e}")))
}

/// Cubic Lagrange weights for nodes `-1, 0, 1, 2` at fractional position `t`.
fn lagrange_weights(t: f64) -> [f64; 4] {
    [
        -t * (t - 1.0) * (t - 2.0) / 6.0,
        (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
        -(t + 1.0) * t * (t - 2.0) / 2.0,
        (t + 1.0) * t * (t - 1.0) / 6.0,
    ]
}

/// Parities defining the symmetry sector of one component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Parity {
    /// `k`: the field changes sign under rotation by `π/k` about the x₃-axis.
    pub k: usize,
    /// Sign under `x₂ → -x₂`.
    pub x2: f64,
}

impl Parity {
    pub fn even(k: usize) -> Self {
        Self { k, x2: 1.0 }
    }
}

/// An element of the node-permutation group: flip the selected axes, then
/// optionally exchange x₁ and x₂.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct GroupElement {
    flip: [bool; 3],
    swap: bool,
}

/// The grid-exact subgroup of the symmetry class: reflections in every axis
/// combination (constrained by the parity character) and, for even `k`, the
/// quarter turn. For `k ≤ 2` this is the full group.
fn group(k: usize) -> Vec<GroupElement> {
    let mut out = Vec::new();
    let swaps: &[bool] = if k.is_multiple_of(2) { &[false, true] } else { &[false] };
    for &swap in swaps {
        for bits in 0..8u8 {
            out.push(GroupElement { flip: [bits & 1 != 0, bits & 2 != 0, bits & 4 != 0], swap });
        }
    }
    out
}

fn character(g: &GroupElement, p: &Parity) -> f64 {
    let rot_pi = if p.k.is_multiple_of(2) { 1.0 } else { -1.0 };
    // flipping x₁ alone equals rotation by π composed with the x₂ reflection
    let chi1 = rot_pi * p.x2;
    let mut c = 1.0;
    if g.flip[0] {
        c *= chi1;
    }
    if g.flip[1] {
        c *= p.x2;
    }
    if g.swap {
        // exchange of x₁, x₂ = quarter turn after the x₂ reflection
        let quarter = if (p.k / 2).is_multiple_of(2) { 1.0 } else { -1.0 };
        c *= quarter * p.x2;
    }
    c
}

/// Group average `(1/|G|) Σ χ(g) f(g·x)`: an orthogonal projection onto the
/// symmetry sector.
pub fn symmetrize_component(spec: &GridSpec, f: &[f64], parity: Parity) -> Vec<f64> {
    let n = spec.n;
    let elements = group(parity.k);
    let weights: Vec<f64> = elements.iter().map(|g| character(g, &parity) / elements.len() as f64).collect();
    let mut out = vec![0.0; f.len()];
    out.par_chunks_mut(n * n).enumerate().for_each(|(i, plane)| {
        for j in 0..n {
            for k in 0..n {
                let mut acc = 0.0;
                for (g, w) in elements.iter().zip(&weights) {
                    let mut c = [i, j, k];
                    for (ca, &flip) in c.iter_mut().zip(&g.flip) {
                        if flip {
                            *ca = n - 1 - *ca;
                        }
                    }
                    if g.swap {
                        c.swap(0, 1);
                    }
                    acc += w * f[(c[0] * n + c[1]) * n + c[2]];
                }
                plane[j * n + k] = acc;
            }
        }
    });
    out
}

pub fn symmetrize(field: &mut GridField, u_parity: Parity, v_parity: Parity) {
    field.u = symmetrize_component(&field.spec, &field.u, u_parity);
    field.v = symmetrize_component(&field.spec, &field.v, v_parity);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(n: usize) -> GridSpec {
        GridSpec::new(1.0, n).unwrap()
    }

    #[test]
    fn ghost_mapping() {
        assert_eq!(ghost(0, 5), Some((0, 1.0)));
        assert_eq!(ghost(-1, 5), None);
        assert_eq!(ghost(5, 5), None);
        assert_eq!(ghost(-2, 5), Some((0, -1.0)));
        assert_eq!(ghost(-3, 5), Some((1, -1.0)));
        assert_eq!(ghost(6, 5), Some((4, -1.0)));
    }

    #[test]
    fn grid_is_symmetric_node_for_node() {
        let s = spec(9);
        for i in 0..9 {
            assert_eq!(s.offset(i), -s.offset(8 - i));
        }
    }

    #[test]
    fn laplacian_of_sine_mode_matches_symbol() {
        for order in [2, 4, 6] {
            let st = Stencil::new(order).unwrap();
            let s = spec(11);
            let (m1, m2, m3) = (1.0, 3.0, 7.0);
            let th = |m: f64| std::f64::consts::PI * m / 12.0;
            let f: Vec<f64> = (0..s.len())
                .map(|idx| {
                    let (i, j, k) = (idx / 121, (idx / 11) % 11, idx % 11);
                    (th(m1) * (i + 1) as f64).sin() * (th(m2) * (j + 1) as f64).sin() * (th(m3) * (k + 1) as f64).sin()
                })
                .collect();
            let mut out = vec![0.0; f.len()];
            laplacian(&s, &st, &f, &mut out);
            let h = s.spacing();
            let lam = st.second_symbol(th(m1), h) + st.second_symbol(th(m2), h) + st.second_symbol(th(m3), h);
            for (o, x) in out.iter().zip(&f) {
                assert!((o - lam * x).abs() < 1e-9 * lam.abs(), "order {order}");
            }
        }
    }

    #[test]
    fn laplacian_converges_on_gaussian() {
        let g = |p: [f64; 3]| (-8.0 * (p[0] * p[0] + p[1] * p[1] + p[2] * p[2])).exp();
        let lap = |p: [f64; 3]| {
            let r2 = p[0] * p[0] + p[1] * p[1] + p[2] * p[2];
            (256.0 * r2 - 48.0) * g(p)
        };
        let mut errs = Vec::new();
        for n in [41, 81] {
            let s = GridSpec::new(1.5, n).unwrap();
            let field = GridField::from_fn(s, 1.0, |p| (g(p), 0.0));
            let mut out = vec![0.0; s.len()];
            laplacian(&s, &Stencil::new(4).unwrap(), &field.u, &mut out);
            let mut worst: f64 = 0.0;
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        worst = worst.max((out[s.index(i, j, k)] - lap(s.point(i, j, k))).abs());
                    }
                }
            }
            errs.push(worst);
        }
        let rate = (errs[0] / errs[1]).log2();
        assert!(rate > 3.6, "observed order {rate}");
    }

    #[test]
    fn interpolation_exact_for_cubics() {
        let s = spec(11);
        let cubic = |p: [f64; 3]| 1.0 + p[0] - 2.0 * p[1] * p[1] * p[0] + p[2].powi(3);
        let f = GridField::from_fn(s, 1.0, |p| (cubic(p), 0.0));
        let q = [0.13, -0.41, 0.27];
        assert!((f.interpolate(Component::U, q) - cubic(q)).abs() < 1e-12);
        let node = s.point(3, 4, 5);
        assert_eq!(f.interpolate(Component::U, node), f.u[s.index(3, 4, 5)]);
    }

    #[test]
    fn symmetrize_is_a_projection() {
        let s = spec(9);
        for (k, x2) in [(1, 1.0), (2, 1.0), (2, -1.0), (3, 1.0)] {
            let p = Parity { k, x2 };
            let f: Vec<f64> = (0..s.len()).map(|i| ((i * 7919) % 101) as f64 / 101.0 - 0.5).collect();
            let once = symmetrize_component(&s, &f, p);
            let twice = symmetrize_component(&s, &once, p);
            for (a, b) in once.iter().zip(&twice) {
                assert!((a - b).abs() < 1e-15);
            }
            // odd under rotation by π when k is odd
            let n = s.n;
            let sign = if k % 2 == 1 { -1.0 } else { 1.0 };
            let a = once[s.index(1, 2, 3)];
            let b = once[s.index(n - 2, n - 3, 3)];
            assert!((a - sign * b).abs() < 1e-15);
        }
    }

    #[test]
    fn text_round_trip_and_slice() {
        let s = spec(5).centered_at([0.5, 0.0, -0.25]);
        let f = GridField::from_fn(s, 0.1, |p| (p[0], p[1] * p[2]));
        let back = GridField::from_text(f.to_text().as_bytes()).unwrap();
        assert_eq!(back, f);
        assert_eq!(f.slice_csv().lines().count(), 26);
        assert!(GridField::from_text("nodal-field v1 L=1 n=5\n".as_bytes()).is_err());
    }
}
