//! Second-order (Strang) split-operator propagation of two-component fields
//! in real and imaginary time, plus smooth-mask continuum splitting.
//!
//! One step is `K/2 · V/2 · C · V/2 · K/2`: the kinetic energy is applied
//! spectrally, the diagonal potentials pointwise, and the channel coupling
//! `-d·E σx` as the exact rotation `exp(iθσx)`, `θ = d·E·dt`. Consecutive
//! kinetic half steps are fused, so a block of `n` steps costs `n + 1`
//! forward/inverse transform pairs per component.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{self, ComplexField, FftNd, Grid1D};
use crate::laser::Pulse;

/// Time-dependent scalar field driving the length-gauge and coupling terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Drive {
    None,
    Constant(f64),
    Pulse(Pulse),
}

impl Drive {
    pub fn at(&self, t: f64) -> f64 {
        match self {
            Drive::None => 0.0,
            Drive::Constant(e) => *e,
            Drive::Pulse(p) => p.field(t),
        }
    }
}

/// Index of a component of a [`TwoComponentState`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    G,
    U,
}

impl Channel {
    pub const BOTH: [Channel; 2] = [Channel::G, Channel::U];

    pub fn index(self) -> usize {
        match self {
            Channel::G => 0,
            Channel::U => 1,
        }
    }
}

/// The pieces of a (possibly two-channel) Hamiltonian on a product grid:
///
/// `H_c = Σ_a k_a²/(2 m_a) + V_c + x_f·E(t)` on the diagonal and
/// `-d(q_c)·E(t)` off the diagonal, where `x_f` is the coordinate along
/// `field_axis` and `q_c` the coordinate along the coupling axis. An axis
/// with infinite mass carries no kinetic energy and is never transformed,
/// which turns it into a batch of independent problems.
#[derive(Debug, Clone)]
pub struct Hamiltonian {
    pub axes: Vec<Grid1D>,
    pub masses: Vec<f64>,
    pub potential: [Vec<f64>; 2],
    pub field_axis: Option<usize>,
    pub coupling: Option<(usize, Vec<f64>)>,
    pub drive: Drive,
}

impl Hamiltonian {
    /// Single-channel Hamiltonian (the `u` potential duplicates `g`).
    pub fn single(axes: Vec<Grid1D>, masses: Vec<f64>, potential: Vec<f64>) -> Result<Self> {
        let h = Hamiltonian { axes, masses, potential: [potential.clone(), potential], field_axis: None, coupling: None, drive: Drive::None };
        h.validate()?;
        Ok(h)
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.n).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if self.masses.len() != self.axes.len() {
            return Err(Error::invalid("one mass per axis required"));
        }
        if self.masses.iter().any(|m| !(*m > 0.0) || m.is_nan()) {
            return Err(Error::invalid("masses must be positive"));
        }
        if self.potential.iter().any(|v| v.len() != n) {
            return Err(Error::invalid("potential arrays must match the grid size"));
        }
        if let Some(a) = self.field_axis {
            if a >= self.axes.len() {
                return Err(Error::invalid("field axis out of range"));
            }
        }
        if let Some((a, d)) = &self.coupling {
            if *a >= self.axes.len() || d.len() != self.axes[*a].n {
                return Err(Error::invalid("coupling profile does not match its axis"));
            }
        }
        Ok(())
    }

    fn kinetic(&self) -> Vec<f64> {
        let ks: Vec<Vec<f64>> = self.axes.iter().map(grid::wavenumbers).collect();
        let shape: Vec<usize> = self.axes.iter().map(|a| a.n).collect();
        let mut out = vec![0.0; self.len()];
        let mut idx = vec![0usize; shape.len()];
        for v in out.iter_mut() {
            *v = idx.iter().enumerate().map(|(a, &i)| ks[a][i] * ks[a][i] / (2.0 * self.masses[a])).sum();
            grid::increment(&mut idx, &shape);
        }
        out
    }

    fn axis_index(&self, axis: usize) -> Vec<u32> {
        let inner: usize = self.axes[axis + 1..].iter().map(|a| a.n).product();
        let n = self.axes[axis].n;
        (0..self.len()).map(|i| ((i / inner) % n) as u32).collect()
    }
}

/// Pair of fields `(ψ_g, ψ_u)` on a shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoComponentState {
    pub g: ComplexField,
    pub u: ComplexField,
    pub time: f64,
}

impl TwoComponentState {
    pub fn new(g: ComplexField, u: ComplexField, time: f64) -> Result<Self> {
        if !g.same_grid(&u) {
            return Err(Error::invalid("components must share one grid"));
        }
        Ok(TwoComponentState { g, u, time })
    }

    /// State with `ψ_u = 0`.
    pub fn from_g(g: ComplexField, time: f64) -> Self {
        let u = ComplexField::zeros(g.axes.clone()).expect("valid axes");
        TwoComponentState { g, u, time }
    }

    pub fn component(&self, c: Channel) -> &ComplexField {
        match c {
            Channel::G => &self.g,
            Channel::U => &self.u,
        }
    }

    pub fn component_mut(&mut self, c: Channel) -> &mut ComplexField {
        match c {
            Channel::G => &mut self.g,
            Channel::U => &mut self.u,
        }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.g.norm_sqr() + self.u.norm_sqr()
    }

    pub fn inner(&self, other: &TwoComponentState) -> Complex64 {
        self.g.inner(&other.g) + self.u.inner(&other.u)
    }

    pub fn scale(&mut self, s: f64) {
        self.g.scale(s);
        self.u.scale(s);
    }

    pub fn is_finite(&self) -> bool {
        self.g.is_finite() && self.u.is_finite()
    }
}

/// Smooth cos^(1/8) mask: 1 inside radius `r_c`, 0 beyond `r_c + width`,
/// where the radius is taken over the listed axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskSpec {
    pub inner_radius: f64,
    pub width: f64,
    pub axes: Vec<usize>,
    /// Exponent of the cosine ramp.
    #[serde(default = "default_mask_power")]
    pub power: f64,
}

fn default_mask_power() -> f64 {
    0.125
}

impl MaskSpec {
    pub fn new(inner_radius: f64, width: f64, axes: Vec<usize>) -> Self {
        MaskSpec { inner_radius, width, axes, power: default_mask_power() }
    }

    pub fn value(&self, r: f64) -> f64 {
        if r <= self.inner_radius {
            1.0
        } else if r >= self.inner_radius + self.width {
            0.0
        } else {
            let s = (0.5 * PI * (r - self.inner_radius) / self.width).cos();
            s.max(0.0).powf(self.power)
        }
    }

    /// Mask sampled on a product grid.
    pub fn sample(&self, axes: &[Grid1D]) -> Result<Vec<f64>> {
        if !(self.inner_radius > 0.0) || !(self.width > 0.0) || !(self.power > 0.0) {
            return Err(Error::invalid("mask radius, width and power must be positive"));
        }
        for &a in &self.axes {
            let g = axes.get(a).ok_or_else(|| Error::invalid("mask axis out of range"))?;
            let edge = (-g.min).min(g.max());
            if self.inner_radius + self.width > edge + 1e-9 {
                return Err(Error::invalid(format!("mask r_c + w = {} exceeds box edge {edge}", self.inner_radius + self.width)));
            }
        }
        let f = ComplexField::from_fn(axes.to_vec(), |x| {
            let r = self.axes.iter().map(|&a| x[a] * x[a]).sum::<f64>().sqrt();
            Complex64::new(self.value(r), 0.0)
        })?;
        Ok(f.data.iter().map(|z| z.re).collect())
    }
}

/// Result of splitting a state with a mask.
#[derive(Debug, Clone)]
pub struct MaskSplit {
    pub inner: TwoComponentState,
    pub outer: TwoComponentState,
    /// `2 Re⟨mψ|(1-m)ψ⟩`, so that inner + outer + overlap = total norm.
    pub overlap: f64,
}

/// `inner = m·ψ`, `outer = (1-m)·ψ` per channel.
pub fn split_with_mask(state: &TwoComponentState, mask: &[f64]) -> Result<MaskSplit> {
    if mask.len() != state.g.len() {
        return Err(Error::invalid("mask does not match the state grid"));
    }
    let mut inner = state.clone();
    let mut outer = state.clone();
    let mut overlap = 0.0;
    let dv = state.g.cell_volume();
    for c in Channel::BOTH {
        let src = &state.component(c).data;
        let (i_data, o_data) = (&mut inner.component_mut(c).data, &mut outer.component_mut(c).data);
        for k in 0..src.len() {
            let m = mask[k];
            i_data[k] = src[k] * m;
            o_data[k] = src[k] * (1.0 - m);
            overlap += 2.0 * m * (1.0 - m) * src[k].norm_sqr();
        }
    }
    Ok(MaskSplit { inner, outer, overlap: overlap * dv })
}

/// Cached split-operator machinery for one Hamiltonian.
#[derive(Debug, Clone)]
pub struct SplitOperator {
    pub ham: Hamiltonian,
    fft: FftNd,
    spectral_axes: Vec<usize>,
    kinetic: Vec<f64>,
    field_idx: Option<Vec<u32>>,
    coupling_idx: Option<Vec<u32>>,
    field_coord: Vec<f64>,
}

impl SplitOperator {
    pub fn new(ham: Hamiltonian) -> Result<Self> {
        ham.validate()?;
        let shape: Vec<usize> = ham.axes.iter().map(|a| a.n).collect();
        let fft = FftNd::new(&shape);
        let spectral_axes = (0..shape.len()).filter(|&a| ham.masses[a].is_finite()).collect();
        let kinetic = ham.kinetic();
        let field_idx = ham.field_axis.map(|a| ham.axis_index(a));
        let coupling_idx = ham.coupling.as_ref().map(|(a, _)| ham.axis_index(*a));
        let field_coord = ham.field_axis.map(|a| ham.axes[a].points()).unwrap_or_default();
        Ok(SplitOperator { ham, fft, spectral_axes, kinetic, field_idx, coupling_idx, field_coord })
    }

    pub fn fft(&self) -> &FftNd {
        &self.fft
    }

    pub fn kinetic_grid(&self) -> &[f64] {
        &self.kinetic
    }

    fn check_state(&self, state: &TwoComponentState) -> Result<()> {
        if state.g.axes != self.ham.axes || state.u.axes != self.ham.axes {
            return Err(Error::invalid("state grid does not match the Hamiltonian grid"));
        }
        Ok(())
    }

    fn kinetic_phase(&self, dt: f64, imaginary: bool) -> Vec<Complex64> {
        self.kinetic.par_iter().map(|&t| if imaginary { Complex64::new((-t * dt).exp(), 0.0) } else { Complex64::from_polar(1.0, -t * dt) }).collect()
    }

    fn static_phase(&self, c: usize, dt: f64, imaginary: bool) -> Vec<Complex64> {
        self.ham.potential[c]
            .par_iter()
            .map(|&v| if imaginary { Complex64::new((-v * dt).exp(), 0.0) } else { Complex64::from_polar(1.0, -v * dt) })
            .collect()
    }

    fn apply_kinetic(&self, data: &mut [Complex64], phase: &[Complex64]) {
        self.fft.forward_axes(data, &self.spectral_axes);
        data.par_iter_mut().zip(phase.par_iter()).for_each(|(v, p)| *v *= p);
        self.fft.inverse_axes(data, &self.spectral_axes);
    }

    /// Diagonal half potential step for one channel at field value `e`.
    fn apply_diagonal(&self, data: &mut [Complex64], stat: &[Complex64], e: f64, half_dt: f64, imaginary: bool) {
        match (&self.field_idx, e != 0.0) {
            (Some(idx), true) => {
                let extra: Vec<Complex64> = self
                    .field_coord
                    .iter()
                    .map(|&x| if imaginary { Complex64::new((-x * e * half_dt).exp(), 0.0) } else { Complex64::from_polar(1.0, -x * e * half_dt) })
                    .collect();
                data.par_iter_mut().zip(stat.par_iter()).zip(idx.par_iter()).for_each(|((v, s), &i)| *v *= s * extra[i as usize]);
            }
            _ => data.par_iter_mut().zip(stat.par_iter()).for_each(|(v, s)| *v *= s),
        }
    }

    /// Channel coupling `exp(-i dt (-dE) σx)` (or its imaginary-time analogue).
    fn apply_coupling(&self, g: &mut [Complex64], u: &mut [Complex64], e: f64, dt: f64, imaginary: bool) {
        let (Some((_, d)), Some(idx)) = (&self.ham.coupling, &self.coupling_idx) else {
            return;
        };
        if e == 0.0 {
            return;
        }
        let rot: Vec<(Complex64, Complex64)> = d
            .iter()
            .map(|&dv| {
                let th = dv * e * dt;
                if imaginary {
                    (Complex64::new(th.cosh(), 0.0), Complex64::new(th.sinh(), 0.0))
                } else {
                    (Complex64::new(th.cos(), 0.0), Complex64::new(0.0, th.sin()))
                }
            })
            .collect();
        g.par_iter_mut().zip(u.par_iter_mut()).zip(idx.par_iter()).for_each(|((a, b), &i)| {
            let (c, s) = rot[i as usize];
            let na = c * *a + s * *b;
            let nb = s * *a + c * *b;
            *a = na;
            *b = nb;
        });
    }

    fn potential_block(&self, state: &mut TwoComponentState, stat: &[Vec<Complex64>; 2], t_mid: f64, dt: f64, imaginary: bool, active_u: bool) {
        let e = self.ham.drive.at(t_mid);
        let half = 0.5 * dt;
        self.apply_diagonal(&mut state.g.data, &stat[0], e, half, imaginary);
        if active_u {
            self.apply_diagonal(&mut state.u.data, &stat[1], e, half, imaginary);
            self.apply_coupling(&mut state.g.data, &mut state.u.data, e, dt, imaginary);
            self.apply_diagonal(&mut state.g.data, &stat[0], e, half, imaginary);
            self.apply_diagonal(&mut state.u.data, &stat[1], e, half, imaginary);
        } else {
            self.apply_diagonal(&mut state.g.data, &stat[0], e, half, imaginary);
        }
    }

    fn u_active(&self, state: &TwoComponentState) -> bool {
        self.ham.coupling.is_some() || state.u.data.iter().any(|z| z.re != 0.0 || z.im != 0.0)
    }

    /// Advances `state` by `steps` real-time steps of length `dt`.
    pub fn propagate(&self, state: &mut TwoComponentState, dt: f64, steps: usize) -> Result<()> {
        self.run_block(state, dt, steps, false)?;
        if !state.is_finite() {
            return Err(Error::Numerical { step: steps, message: "non-finite amplitude after real-time block".into() });
        }
        Ok(())
    }

    fn run_block(&self, state: &mut TwoComponentState, dt: f64, steps: usize, imaginary: bool) -> Result<()> {
        self.check_state(state)?;
        if !(dt > 0.0) {
            return Err(Error::invalid("time step must be positive"));
        }
        if steps == 0 {
            return Ok(());
        }
        let active_u = self.u_active(state);
        let half_k = self.kinetic_phase(0.5 * dt, imaginary);
        let full_k = self.kinetic_phase(dt, imaginary);
        let stat = [self.static_phase(0, 0.5 * dt, imaginary), self.static_phase(1, 0.5 * dt, imaginary)];
        let comps: &[Channel] = if active_u { &Channel::BOTH } else { &[Channel::G] };
        for &c in comps {
            self.apply_kinetic(&mut state.component_mut(c).data, &half_k);
        }
        for s in 0..steps {
            let t_mid = state.time + 0.5 * dt;
            self.potential_block(state, &stat, t_mid, dt, imaginary, active_u);
            state.time += dt;
            let k = if s + 1 == steps { &half_k } else { &full_k };
            for &c in comps {
                self.apply_kinetic(&mut state.component_mut(c).data, k);
            }
        }
        Ok(())
    }

    /// ⟨Ψ|H(t)|Ψ⟩ / ⟨Ψ|Ψ⟩.
    pub fn energy(&self, state: &TwoComponentState, t: f64) -> Result<f64> {
        let h = self.apply(state, t)?;
        let norm = state.norm_sqr();
        if norm == 0.0 {
            return Err(Error::invalid("energy of a zero state"));
        }
        Ok(state.inner(&h).re / norm)
    }

    /// `H(t)Ψ`.
    pub fn apply(&self, state: &TwoComponentState, t: f64) -> Result<TwoComponentState> {
        self.check_state(state)?;
        let e = self.ham.drive.at(t);
        let mut out = state.clone();
        for c in Channel::BOTH {
            let src = &state.component(c).data;
            let mut kin = src.clone();
            self.fft.forward_axes(&mut kin, &self.spectral_axes);
            kin.par_iter_mut().zip(self.kinetic.par_iter()).for_each(|(v, t)| *v *= t);
            self.fft.inverse_axes(&mut kin, &self.spectral_axes);
            let v = &self.ham.potential[c.index()];
            let dst = &mut out.component_mut(c).data;
            for i in 0..dst.len() {
                let mut pot = v[i];
                if let Some(idx) = &self.field_idx {
                    pot += self.field_coord[idx[i] as usize] * e;
                }
                dst[i] = kin[i] + src[i] * pot;
            }
        }
        if let (Some((_, d)), Some(idx)) = (&self.ham.coupling, &self.coupling_idx) {
            for i in 0..out.g.data.len() {
                let w = -d[idx[i] as usize] * e;
                out.g.data[i] += state.u.data[i] * w;
                out.u.data[i] += state.g.data[i] * w;
            }
        }
        Ok(out)
    }

    /// Imaginary-time relaxation with renormalization, stopped once the
    /// energy changes by less than `tol` between checks `check_every`
    /// steps apart. Returns the converged energy.
    pub fn relax(&self, state: &mut TwoComponentState, opts: &RelaxOptions) -> Result<f64> {
        let n0 = state.norm_sqr();
        if !(n0 > 0.0) {
            return Err(Error::invalid("relaxation needs a nonzero initial guess"));
        }
        state.scale(1.0 / n0.sqrt());
        let t0 = state.time;
        let mut energy = self.energy(state, t0)?;
        let mut steps = 0;
        let mut last_delta = f64::INFINITY;
        while steps < opts.max_steps {
            let n = opts.check_every.min(opts.max_steps - steps).max(1);
            self.run_block(state, opts.dtau, n, true)?;
            state.time = t0;
            steps += n;
            let norm = state.norm_sqr();
            if !(norm > 0.0) || !norm.is_finite() {
                return Err(Error::Numerical { step: steps, message: "relaxation norm collapsed".into() });
            }
            state.scale(1.0 / norm.sqrt());
            let e_new = self.energy(state, t0)?;
            last_delta = (e_new - energy).abs();
            energy = e_new;
            if last_delta < opts.tol {
                return Ok(energy);
            }
        }
        Err(Error::NoConvergence { steps, last_delta })
    }
}

/// Settings for imaginary-time relaxation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelaxOptions {
    pub dtau: f64,
    pub tol: f64,
    pub check_every: usize,
    pub max_steps: usize,
}

impl Default for RelaxOptions {
    fn default() -> Self {
        RelaxOptions { dtau: 0.05, tol: 1e-10, check_every: 20, max_steps: 200_000 }
    }
}
