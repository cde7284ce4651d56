//! Type-I discrete sine transform on the cube and the Laplacians it
//! diagonalizes.
//!
//! Mode `m = 1..n` on a line is `sin(π m (i+1)/(n+1))`; this is exactly the
//! eigenbasis of every stencil in [`crate::grid`] under the odd-reflection
//! boundary rule, and of the spectral Laplacian with wave number
//! `κ_m = π m / ((n+1) h)`.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::{num_complex::Complex, Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{laplacian, GridSpec, Stencil};

pub struct SineTransform {
    n: usize,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for SineTransform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "SineTransform({})", self.n)
    }
}

impl SineTransform {
    pub fn new(n: usize) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(2 * (n + 1));
        Self { n, fft }
    }

    /// Unnormalized DST-I of two real lines at once (real and imaginary
    /// parts of a single complex transform of the odd extensions).
    fn pair(&self, a: &mut [f64], b: &mut [f64], buf: &mut [Complex<f64>], scratch: &mut [Complex<f64>]) {
        let n = self.n;
        buf[0] = Complex::new(0.0, 0.0);
        buf[n + 1] = Complex::new(0.0, 0.0);
        for i in 0..n {
            buf[i + 1] = Complex::new(a[i], b[i]);
            buf[2 * n + 1 - i] = Complex::new(-a[i], -b[i]);
        }
        self.fft.process_with_scratch(buf, scratch);
        for m in 0..n {
            let z = buf[m + 1];
            a[m] = -0.5 * z.im;
            b[m] = 0.5 * z.re;
        }
    }

    /// Transform every line of `lines` (each of length `n`), pairing them up.
    fn lines(&self, lines: &mut [f64]) {
        let n = self.n;
        let mut buf = vec![Complex::new(0.0, 0.0); 2 * (n + 1)];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        let mut spare = vec![0.0; n];
        let mut chunks = lines.chunks_mut(2 * n);
        for chunk in &mut chunks {
            if chunk.len() == 2 * n {
                let (a, b) = chunk.split_at_mut(n);
                self.pair(a, b, &mut buf, &mut scratch);
            } else {
                spare.iter_mut().for_each(|x| *x = 0.0);
                self.pair(chunk, &mut spare, &mut buf, &mut scratch);
            }
        }
    }

    /// In-place unnormalized 3D DST-I; applying it twice multiplies by `((n+1)/2)³`.
    pub fn forward3(&self, data: &mut [f64]) {
        let n = self.n;
        let n2 = n * n;
        assert_eq!(data.len(), n2 * n);
        // x₃: contiguous lines
        data.par_chunks_mut(n2).for_each(|plane| self.lines(plane));
        // x₂: transpose each plane, transform, transpose back
        data.par_chunks_mut(n2).for_each(|plane| {
            let mut t = vec![0.0; n2];
            for j in 0..n {
                for k in 0..n {
                    t[k * n + j] = plane[j * n + k];
                }
            }
            self.lines(&mut t);
            for j in 0..n {
                for k in 0..n {
                    plane[j * n + k] = t[k * n + j];
                }
            }
        });
        // x₁: gather one slab per j, transform, scatter in order
        let slabs: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|j| {
                let mut t = vec![0.0; n2];
                for i in 0..n {
                    for k in 0..n {
                        t[k * n + i] = data[(i * n + j) * n + k];
                    }
                }
                self.lines(&mut t);
                t
            })
            .collect();
        for (j, t) in slabs.iter().enumerate() {
            for i in 0..n {
                for k in 0..n {
                    data[(i * n + j) * n + k] = t[k * n + i];
                }
            }
        }
    }

    pub fn inverse_scale(&self) -> f64 {
        (2.0 / (self.n + 1) as f64).powi(3)
    }
}

/// Smallest odd `m >= n` such that `m + 1` has no prime factors beyond 5,
/// which keeps the length-`2(m+1)` transforms fast.
pub fn fft_friendly(n: usize) -> usize {
    let smooth = |mut x: usize| {
        for p in [2, 3, 5] {
            while x.is_multiple_of(p) {
                x /= p;
            }
        }
        x == 1
    };
    let mut m = n | 1;
    while !smooth(m + 1) {
        m += 2;
    }
    m
}

/// Discrete Laplacian used by the solver and the energy quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LaplaceKind {
    /// Central differences of order 2 (the 7-point stencil), 4 or 6.
    Fd2,
    Fd4,
    Fd6,
    /// Sine-spectral: exact on the sine modes of the box.
    Spectral,
}

impl LaplaceKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "fd2" => Ok(Self::Fd2),
            "fd4" => Ok(Self::Fd4),
            "fd6" => Ok(Self::Fd6),
            "spectral" => Ok(Self::Spectral),
            _ => Err(Error::InvalidParam(format!("unknown laplacian '{s}'"))),
        }
    }

    fn stencil(self) -> Option<Stencil> {
        let order = match self {
            Self::Fd2 => 2,
            Self::Fd4 => 4,
            Self::Fd6 => 6,
            Self::Spectral => return None,
        };
        Some(Stencil::new(order).expect("valid order"))
    }
}

/// A Laplacian bound to a grid, together with its sine-mode symbol.
#[derive(Debug)]
pub struct LaplaceOp {
    pub kind: LaplaceKind,
    pub spec: GridSpec,
    dst: SineTransform,
    stencil: Option<Stencil>,
    /// One-dimensional eigenvalues per mode index.
    symbol: Vec<f64>,
}

impl LaplaceOp {
    pub fn new(spec: GridSpec, kind: LaplaceKind) -> Self {
        let n = spec.n;
        let h = spec.spacing();
        let stencil = kind.stencil();
        let symbol = (1..=n)
            .map(|m| {
                let theta = PI * m as f64 / (n + 1) as f64;
                match &stencil {
                    Some(s) => s.second_symbol(theta, h),
                    None => -(theta / h).powi(2),
                }
            })
            .collect();
        Self { kind, spec, dst: SineTransform::new(n), stencil, symbol }
    }

    fn diagonal(&self, data: &mut [f64], f: impl Fn(f64) -> f64 + Sync) {
        let n = self.spec.n;
        let sym = &self.symbol;
        let scale = self.dst.inverse_scale();
        self.dst.forward3(data);
        data.par_chunks_mut(n * n).enumerate().for_each(|(i, plane)| {
            for j in 0..n {
                for k in 0..n {
                    plane[j * n + k] *= scale * f(sym[i] + sym[j] + sym[k]);
                }
            }
        });
        self.dst.forward3(data);
    }

    /// `out = Δ_h f`.
    pub fn apply(&self, f: &[f64], out: &mut [f64]) {
        match &self.stencil {
            Some(s) => laplacian(&self.spec, s, f, out),
            None => {
                out.copy_from_slice(f);
                self.diagonal(out, |lam| lam);
            }
        }
    }

    /// In place: `f ← (-ε²Δ_h + shift)⁻¹ f`.
    pub fn solve_shifted(&self, f: &mut [f64], eps: f64, shift: f64) {
        let e2 = eps * eps;
        self.diagonal(f, |lam| 1.0 / (shift - e2 * lam));
    }
}
