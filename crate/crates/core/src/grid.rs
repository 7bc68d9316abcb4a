//! Uniform tensor-product grids, complex fields on them, and the spectral
//! transforms used by every split-operator solver.
//!
//! FFT convention: the forward transform is unnormalized,
//! `F_k = Σ_j f_j exp(-2πi jk/n)`, and the inverse carries the `1/n`, so a
//! forward/inverse pair is the identity and `Σ|f|² = Σ|F|² / n` (Parseval).
//! Wavenumbers are returned in FFT order, `k_i = 2π f_i / (n·step)` with
//! `f = [0, 1, …, n/2-1, -n/2, …, -1]`; the Nyquist entry is negative.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform one-dimensional grid: points `min + i·step`, `i ∈ [0, n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    pub min: f64,
    pub n: usize,
    pub step: f64,
}

impl Grid1D {
    pub fn new(min: f64, n: usize, step: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid(format!("grid needs at least 2 points, got {n}")));
        }
        if !(step > 0.0) || !step.is_finite() || !min.is_finite() {
            return Err(Error::invalid(format!("grid step must be positive, got {step}")));
        }
        Ok(Grid1D { min, n, step })
    }

    /// Grid with `n` points symmetric about the origin in the FFT sense:
    /// `min = -(n/2)·step`, so `x → -x` maps point `i` onto `n - i`.
    pub fn centered(n: usize, step: f64) -> Result<Self> {
        Grid1D::new(-((n / 2) as f64) * step, n, step)
    }

    pub fn point(&self, i: usize) -> f64 {
        self.min + i as f64 * self.step
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.point(i)).collect()
    }

    pub fn max(&self) -> f64 {
        self.point(self.n - 1)
    }

    pub fn length(&self) -> f64 {
        self.n as f64 * self.step
    }

    pub fn wavenumbers(&self) -> Vec<f64> {
        wavenumbers(self)
    }

    /// Nearest index to `x`, clamped into the grid.
    pub fn nearest(&self, x: f64) -> usize {
        let i = ((x - self.min) / self.step).round();
        i.clamp(0.0, (self.n - 1) as f64) as usize
    }
}

/// Angular wavenumbers of `grid` in FFT order.
pub fn wavenumbers(grid: &Grid1D) -> Vec<f64> {
    let n = grid.n as i64;
    let scale = 2.0 * PI / (grid.n as f64 * grid.step);
    (0..n)
        .map(|i| {
            let f = if i < (n + 1) / 2 { i } else { i - n };
            if n % 2 == 0 && i == n / 2 {
                -(n / 2) as f64 * scale
            } else {
                f as f64 * scale
            }
        })
        .collect()
}

/// Complex amplitudes on a one- to three-dimensional tensor-product grid,
/// stored row-major (last axis contiguous).
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    pub axes: Vec<Grid1D>,
    pub data: Vec<Complex64>,
}

impl ComplexField {
    pub fn zeros(axes: Vec<Grid1D>) -> Result<Self> {
        if axes.is_empty() || axes.len() > 3 {
            return Err(Error::invalid(format!("fields have one to three axes, got {}", axes.len())));
        }
        let len = axes.iter().map(|a| a.n).product();
        Ok(ComplexField { axes, data: vec![Complex64::new(0.0, 0.0); len] })
    }

    pub fn from_data(axes: Vec<Grid1D>, data: Vec<Complex64>) -> Result<Self> {
        let mut f = ComplexField::zeros(axes)?;
        if f.data.len() != data.len() {
            return Err(Error::invalid(format!("data length {} does not match grid size {}", data.len(), f.data.len())));
        }
        f.data = data;
        Ok(f)
    }

    /// Field sampled from `f(coords)` at every grid point.
    pub fn from_fn(axes: Vec<Grid1D>, f: impl Fn(&[f64]) -> Complex64) -> Result<Self> {
        let mut field = ComplexField::zeros(axes)?;
        let shape = field.shape();
        let mut coords = vec![0.0; shape.len()];
        let mut idx = vec![0usize; shape.len()];
        for v in field.data.iter_mut() {
            for (a, c) in coords.iter_mut().enumerate() {
                *c = field.axes[a].point(idx[a]);
            }
            *v = f(&coords);
            increment(&mut idx, &shape);
        }
        Ok(field)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(|a| a.n).collect()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Volume element Π step.
    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().map(|a| a.step).product()
    }

    pub fn norm_sqr(&self) -> f64 {
        sum_norm_sqr(&self.data) * self.cell_volume()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// ⟨self|other⟩ with the grid volume element.
    pub fn inner(&self, other: &ComplexField) -> Complex64 {
        inner(&self.data, &other.data) * self.cell_volume()
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    pub fn same_grid(&self, other: &ComplexField) -> bool {
        self.axes == other.axes
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }
}

/// Σ|v|² in a fixed sequential order (deterministic).
pub fn sum_norm_sqr(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// Σ conj(a)·b in a fixed sequential order.
pub fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub(crate) fn increment(idx: &mut [usize], shape: &[usize]) {
    for a in (0..shape.len()).rev() {
        idx[a] += 1;
        if idx[a] < shape[a] {
            return;
        }
        idx[a] = 0;
    }
}

/// Multi-dimensional FFT over a row-major array of fixed shape, built from
/// one-dimensional rustfft plans applied axis by axis.
#[derive(Clone)]
pub struct FftNd {
    shape: Vec<usize>,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
}

impl std::fmt::Debug for FftNd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FftNd").field("shape", &self.shape).finish()
    }
}

impl FftNd {
    pub fn new(shape: &[usize]) -> Self {
        let mut planner = FftPlanner::new();
        FftNd {
            shape: shape.to_vec(),
            forward: shape.iter().map(|&n| planner.plan_fft_forward(n)).collect(),
            inverse: shape.iter().map(|&n| planner.plan_fft_inverse(n)).collect(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Unnormalized forward transform over all axes.
    pub fn forward(&self, data: &mut [Complex64]) {
        for axis in 0..self.shape.len() {
            self.transform_axis(data, axis, true);
        }
    }

    /// Inverse transform over all axes, including the 1/N factor.
    pub fn inverse(&self, data: &mut [Complex64]) {
        for axis in 0..self.shape.len() {
            self.transform_axis(data, axis, false);
        }
        let s = 1.0 / self.len() as f64;
        data.par_iter_mut().for_each(|v| *v *= s);
    }

    /// Forward transform over a subset of axes.
    pub fn forward_axes(&self, data: &mut [Complex64], axes: &[usize]) {
        for &axis in axes {
            self.transform_axis(data, axis, true);
        }
    }

    /// Inverse transform over a subset of axes, normalized by their sizes.
    pub fn inverse_axes(&self, data: &mut [Complex64], axes: &[usize]) {
        for &axis in axes {
            self.transform_axis(data, axis, false);
        }
        let s = 1.0 / axes.iter().map(|&a| self.shape[a]).product::<usize>() as f64;
        data.par_iter_mut().for_each(|v| *v *= s);
    }

    /// Unnormalized transform along one axis only (inverse without 1/n).
    pub fn transform_axis(&self, data: &mut [Complex64], axis: usize, forward: bool) {
        assert_eq!(data.len(), self.len(), "FFT buffer does not match plan shape");
        let n = self.shape[axis];
        let inner: usize = self.shape[axis + 1..].iter().product();
        let plan = if forward { &self.forward[axis] } else { &self.inverse[axis] };
        if inner == 1 {
            data.par_chunks_mut(n).for_each_init(
                || vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()],
                |scratch, line| plan.process_with_scratch(line, scratch),
            );
            return;
        }
        // Transpose each outer block to [inner][n], transform lines, transpose back.
        let block = n * inner;
        let mut buf = vec![Complex64::new(0.0, 0.0); data.len()];
        buf.par_chunks_mut(block).zip(data.par_chunks(block)).for_each(|(dst, src)| {
            for j in 0..inner {
                for i in 0..n {
                    dst[j * n + i] = src[i * inner + j];
                }
            }
        });
        buf.par_chunks_mut(n).for_each_init(
            || vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()],
            |scratch, line| plan.process_with_scratch(line, scratch),
        );
        data.par_chunks_mut(block).zip(buf.par_chunks(block)).for_each(|(dst, src)| {
            for i in 0..n {
                for j in 0..inner {
                    dst[i * inner + j] = src[j * n + i];
                }
            }
        });
    }
}
