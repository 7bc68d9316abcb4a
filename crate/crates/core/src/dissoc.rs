//! Coupled electron (1D or 2D) + nuclear (R) + two-level ion model, from the
//! neutral ground state through the pulse to the joint amplitude over
//! electron momentum, outgoing nuclear momentum K and ion channel.
//!
//! Continuum electrons are peeled off the main grid with a smooth mask.
//! Each peeled slice is transformed to canonical momentum and handed to an
//! accumulator that carries the free-electron (Volkov) phase analytically
//! and propagates the ion in R on its two coupled curves. The accumulator
//! runs in the Volkov interaction picture, so its ion propagation is the
//! same for every electron momentum.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ComplexField, FftNd, Grid1D};
use crate::laser::Pulse;
use crate::potentials::{IonCurves, SoftCoreParams, TransitionDipole};
use crate::propagator::{split_with_mask, Channel, Drive, Hamiltonian, MaskSpec, RelaxOptions, SplitOperator, TwoComponentState};
use crate::units;
use crate::vib;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ElectronDim {
    #[serde(rename = "1d")]
    One,
    #[serde(rename = "2d")]
    Two,
}

/// Numerical settings of a run. Times in atomic units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Numerics {
    pub dt: f64,
    /// Main-grid steps between mask events.
    pub mask_every: usize,
    /// Accumulator steps per mask interval.
    pub acc_substeps: usize,
    /// Field-free propagation after the pulse, accumulator included.
    pub tail: f64,
    /// Part of the tail during which the main grid keeps shedding electrons.
    pub electron_tail: f64,
    pub tail_dt: f64,
    pub p_max: f64,
    pub n_pad: usize,
    pub acc_r_points: usize,
    pub acc_absorber_width: f64,
    pub r_absorber_start: f64,
    pub r_absorber_width: f64,
    pub n_vib: usize,
    pub vib_r_max: f64,
    pub ker_max_ev: f64,
    pub relax_dtau: f64,
    pub relax_tol: f64,
}

/// FFT indices kept on one electron axis and the momentum grid they form.
type AxisWindow = (Vec<usize>, Grid1D);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub pulse: Pulse,
    pub dim: ElectronDim,
    pub x: Grid1D,
    pub y: Option<Grid1D>,
    pub r: Grid1D,
    pub soft_core: SoftCoreParams,
    pub curves: IonCurves,
    pub dipole: TransitionDipole,
    pub reduced_mass: f64,
    pub mask: MaskSpec,
    pub numerics: Numerics,
}

impl ModelConfig {
    /// Desk-scale 1D electron model: 96 R points from 0.5 (dR = 0.0625),
    /// 256 x points of 0.4 and a cos² mask starting at |x| = 30.
    pub fn desk_1d(pulse: Pulse, soft_core: SoftCoreParams) -> Self {
        let tail = 2.0 * pulse.total_duration();
        ModelConfig {
            pulse,
            dim: ElectronDim::One,
            x: Grid1D::centered(256, 0.4).expect("static grid"),
            y: None,
            r: Grid1D::new(0.5, 96, 0.0625).expect("static grid"),
            soft_core,
            curves: crate::potentials::ion_curves_builtin(),
            dipole: TransitionDipole::default(),
            reduced_mass: units::DEUTERON_MASS_AU / 2.0,
            mask: MaskSpec { inner_radius: 30.0, width: 20.0, axes: vec![1], power: 2.0 },
            numerics: Numerics {
                dt: 0.1,
                mask_every: 25,
                acc_substeps: 1,
                tail,
                electron_tail: 300.0_f64.min(tail),
                tail_dt: 5.0,
                p_max: 1.6,
                n_pad: 2048,
                acc_r_points: 1536,
                acc_absorber_width: 10.0,
                r_absorber_start: 5.0,
                r_absorber_width: 1.4,
                n_vib: 30,
                vib_r_max: 30.0,
                ker_max_ev: 7.0,
                relax_dtau: 0.05,
                relax_tol: 1e-10,
            },
        }
    }

    /// Coarse 2D electron model (x along the molecular axis, y transverse).
    pub fn desk_2d(pulse: Pulse, soft_core: SoftCoreParams) -> Self {
        let mut c = ModelConfig::desk_1d(pulse, soft_core);
        c.dim = ElectronDim::Two;
        c.x = Grid1D::centered(128, 0.5).expect("static grid");
        c.y = Some(Grid1D::centered(128, 0.5).expect("static grid"));
        c.mask = MaskSpec { inner_radius: 18.0, width: 13.0, axes: vec![1, 2], power: 2.0 };
        c.numerics.dt = 0.05;
        c.numerics.mask_every = 50;
        c.numerics.acc_substeps = 1;
        c.numerics.n_pad = 512;
        c.numerics.p_max = 1.2;
        c
    }

    pub fn validate(&self) -> Result<()> {
        self.pulse.validate()?;
        self.soft_core.validate()?;
        if !(self.reduced_mass > 0.0) {
            return Err(Error::invalid("reduced mass must be positive"));
        }
        match (self.dim, &self.y) {
            (ElectronDim::One, Some(_)) => return Err(Error::invalid("1D electron mode takes no y grid")),
            (ElectronDim::Two, None) => return Err(Error::invalid("2D electron mode needs a y grid")),
            _ => {}
        }
        if self.r.min <= 0.0 {
            return Err(Error::invalid("R grid must start at positive R"));
        }
        let n = &self.numerics;
        if !(n.dt > 0.0) || !(n.tail_dt > 0.0) || n.mask_every == 0 || n.acc_substeps == 0 {
            return Err(Error::invalid("time steps and step counts must be positive"));
        }
        if !(n.tail >= 0.0) || !(n.electron_tail >= 0.0) || n.electron_tail > n.tail {
            return Err(Error::invalid("need 0 ≤ electron_tail ≤ tail"));
        }
        if n.n_pad < self.x.n || self.y.is_some_and(|y| n.n_pad < y.n) {
            return Err(Error::invalid("padded transform length must cover the electron grid"));
        }
        if n.acc_r_points < self.r.n {
            return Err(Error::invalid("accumulator R grid must extend the main R grid"));
        }
        if !(n.p_max > 0.0) || !(n.ker_max_ev > 0.0) {
            return Err(Error::invalid("p_max and ker_max must be positive"));
        }
        if n.r_absorber_start + n.r_absorber_width > self.r.max() + self.r.step + 1e-9 {
            return Err(Error::invalid("main R absorber extends past the R grid"));
        }
        let dt_acc = n.dt * n.mask_every as f64 / n.acc_substeps as f64;
        // CFL-type sanity on the electron kinetic phase
        let kmax = PI / self.x.step;
        if n.dt * 0.5 * kmax * kmax > 40.0 || dt_acc <= 0.0 {
            return Err(Error::invalid("time step too large for the electron grid"));
        }
        Ok(())
    }

    fn electron_axes(&self) -> Vec<Grid1D> {
        let mut v = vec![self.x];
        if let Some(y) = self.y {
            v.push(y);
        }
        v
    }

    /// Main-grid axes: `[R, x]` or `[R, x, y]`.
    pub fn axes(&self) -> Vec<Grid1D> {
        let mut v = vec![self.r];
        v.extend(self.electron_axes());
        v
    }

    pub fn mask_interval(&self) -> f64 {
        self.numerics.dt * self.numerics.mask_every as f64
    }
}

/// Bookkeeping of where the initial norm ends up.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NormLedger {
    pub initial: f64,
    pub bound_remainder: f64,
    pub absorbed_main_r_edge: f64,
    /// Σ‖(1-m)ψ‖² over mask events.
    pub transferred: f64,
    /// Σ 2Re⟨mψ|(1-m)ψ⟩ over mask events.
    pub split_overlap: f64,
    /// Part of the transferred norm outside the retained momentum window.
    pub truncated_p: f64,
    /// Σ 2Re⟨Φ|φ_m⟩ between each new slice and the accumulated continuum.
    pub event_interference: f64,
    pub absorbed_acc_r_edge: f64,
    pub continuum_final: f64,
    pub bound_ion: f64,
    pub incoming: f64,
    pub truncated_k: f64,
    pub joint: f64,
}

impl NormLedger {
    /// `transferred` is counted once as an intermediate; the closing sum
    /// uses the terminal buckets plus the mask cross terms.
    pub fn accounted(&self) -> f64 {
        self.bound_remainder
            + self.absorbed_main_r_edge
            + self.absorbed_acc_r_edge
            + self.truncated_p
            + self.truncated_k
            + self.bound_ion
            + self.incoming
            + self.joint
            + self.mask_residual()
    }

    /// Cross terms of the mask decomposition; they cancel when the Volkov
    /// continuation of each slice matches the true evolution.
    pub fn mask_residual(&self) -> f64 {
        self.split_overlap - self.event_interference
    }

    pub fn closure_error(&self) -> f64 {
        (self.initial - self.accounted()).abs()
    }

    /// Main grid: initial = remainder + absorbed + transferred + overlap.
    pub fn main_grid_error(&self) -> f64 {
        (self.initial - self.bound_remainder - self.absorbed_main_r_edge - self.transferred - self.split_overlap).abs()
    }

    /// Accumulator: transferred - truncated + interference - absorbed = final.
    pub fn accumulator_error(&self) -> f64 {
        (self.transferred - self.truncated_p + self.event_interference - self.absorbed_acc_r_edge - self.continuum_final).abs()
    }

    /// Final split: continuum = joint + bound ion + incoming + truncated K.
    pub fn projection_error(&self) -> f64 {
        (self.continuum_final - self.joint - self.bound_ion - self.incoming - self.truncated_k).abs()
    }
}

/// Complex amplitude over electron momentum, outgoing nuclear momentum
/// `K > 0` and ion channel, stored channel-major `[c][px][(py)][K]`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointAmplitude {
    pub px: Grid1D,
    pub py: Option<Grid1D>,
    pub k: Grid1D,
    pub reduced_mass: f64,
    pub data: Vec<Complex64>,
}

impl JointAmplitude {
    pub fn new(px: Grid1D, py: Option<Grid1D>, k: Grid1D, reduced_mass: f64, data: Vec<Complex64>) -> Result<Self> {
        let j = JointAmplitude { px, py, k, reduced_mass, data };
        j.validate()?;
        Ok(j)
    }

    pub fn validate(&self) -> Result<()> {
        if self.data.len() != self.shape().iter().product::<usize>() {
            return Err(Error::invalid("joint amplitude size does not match its grids"));
        }
        if !(self.k.min > 0.0) {
            return Err(Error::invalid("K grid must be strictly positive"));
        }
        if !(self.reduced_mass > 0.0) {
            return Err(Error::invalid("reduced mass must be positive"));
        }
        if self.data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::invalid("joint amplitude is not finite"));
        }
        Ok(())
    }

    /// `[2, n_px, (n_py,) n_K]`.
    pub fn shape(&self) -> Vec<usize> {
        let mut s = vec![2, self.px.n];
        if let Some(py) = self.py {
            s.push(py.n);
        }
        s.push(self.k.n);
        s
    }

    pub fn n_p(&self) -> usize {
        self.px.n * self.py.map_or(1, |g| g.n)
    }

    /// Momentum-space cell `dpx·(dpy)·dK`.
    pub fn cell(&self) -> f64 {
        self.px.step * self.py.map_or(1.0, |g| g.step) * self.k.step
    }

    pub fn index(&self, ch: Channel, p: usize, k: usize) -> usize {
        (ch.index() * self.n_p() + p) * self.k.n + k
    }

    pub fn amp(&self, ch: Channel, p: usize, k: usize) -> Complex64 {
        self.data[self.index(ch, p, k)]
    }

    /// Electron momentum `(px, py)` of flattened index `p`.
    pub fn momentum(&self, p: usize) -> (f64, f64) {
        match self.py {
            Some(py) => (self.px.point(p / py.n), py.point(p % py.n)),
            None => (self.px.point(p), 0.0),
        }
    }

    /// Flattened index of the mirror momentum `(-px, py)`.
    pub fn mirror_index(&self, p: usize) -> usize {
        match self.py {
            Some(py) => (self.px.n - 1 - p / py.n) * py.n + p % py.n,
            None => self.px.n - 1 - p,
        }
    }

    pub fn ker_au(&self, k: usize) -> f64 {
        let kk = self.k.point(k);
        kk * kk / (2.0 * self.reduced_mass)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.cell()
    }

    /// All-zero amplitude on the given grids.
    pub fn zeros(px: Grid1D, py: Option<Grid1D>, k: Grid1D, reduced_mass: f64) -> Result<Self> {
        let n = 2 * px.n * py.map_or(1, |g| g.n) * k.n;
        JointAmplitude::new(px, py, k, reduced_mass, vec![Complex64::new(0.0, 0.0); n])
    }
}

/// The relaxed neutral state and the adiabatic reference used to check it.
#[derive(Debug, Clone)]
pub struct Neutral {
    pub state: TwoComponentState,
    pub energy: f64,
    pub mean_r: f64,
    /// `E_el(R) + V_g(R)` on the main R grid, electron relaxed at fixed R.
    pub adiabatic_curve: Vec<f64>,
    /// `⟨R⟩` of the nuclear ground state on the adiabatic curve.
    pub adiabatic_mean_r: f64,
}

/// Everything needed to propagate one configuration.
#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub main: SplitOperator,
    mask: Vec<f64>,
    r_absorber: Vec<f64>,
}

fn edge_mask(grid: &Grid1D, start: f64, width: f64) -> Vec<f64> {
    let spec = MaskSpec::new(1.0, width, vec![]);
    grid.points().iter().map(|&r| spec.value(1.0 + (r - start).max(0.0))).collect()
}

impl Model {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let axes = config.axes();
        let mut pots = [Vec::new(), Vec::new()];
        for ch in Channel::BOTH {
            let f = ComplexField::from_fn(axes.clone(), |c| {
                let y = if c.len() > 2 { c[2] } else { 0.0 };
                let v = config.soft_core.v_int_unchecked(ch, c[1], y, c[0]) + config.curves.eval(ch, c[0]);
                Complex64::new(v, 0.0)
            })?;
            pots[ch.index()] = f.data.iter().map(|z| z.re).collect();
        }
        let mut masses = vec![config.reduced_mass, 1.0];
        if config.y.is_some() {
            masses.push(1.0);
        }
        let ham = Hamiltonian {
            axes: axes.clone(),
            masses,
            potential: pots,
            field_axis: Some(1),
            coupling: Some((0, config.dipole.sample(&config.r))),
            drive: Drive::Pulse(config.pulse),
        };
        let main = SplitOperator::new(ham)?;
        let mut mspec = config.mask.clone();
        mspec.axes = (1..axes.len()).collect();
        let mask = mspec.sample(&axes)?;
        let r_absorber = edge_mask(&config.r, config.numerics.r_absorber_start, config.numerics.r_absorber_width);
        Ok(Model { config, main, mask, r_absorber })
    }

    /// `H(t)Ψ` of the full model.
    pub fn hamiltonian_apply(&self, state: &TwoComponentState, t: f64) -> Result<TwoComponentState> {
        self.main.apply(state, t)
    }

    fn relax_options(&self) -> RelaxOptions {
        RelaxOptions { dtau: self.config.numerics.relax_dtau, tol: self.config.numerics.relax_tol, check_every: 20, max_steps: 2_000_000 }
    }

    /// Field-free ground state of the coupled system in the g channel. The
    /// starting guess is the adiabatic product `χ(R)φ_R(r)`.
    pub fn prepare_neutral(&self) -> Result<Neutral> {
        let cfg = &self.config;
        let eaxes = cfg.electron_axes();
        let opts = RelaxOptions { dtau: 0.05, tol: 1e-11, check_every: 20, max_steps: 1_000_000 };
        let mut guess = ComplexField::from_fn(eaxes.clone(), |c| Complex64::new((-c.iter().map(|x| x * x).sum::<f64>().sqrt()).exp(), 0.0))?;
        let ne = guess.len();
        let mut el_states = Vec::with_capacity(cfg.r.n);
        let mut curve = Vec::with_capacity(cfg.r.n);
        for r in cfg.r.points() {
            let ham = crate::potentials::electron_hamiltonian(&cfg.soft_core, Channel::G, r, &eaxes)?;
            let so = SplitOperator::new(ham)?;
            let mut st = TwoComponentState::from_g(guess.clone(), 0.0);
            let e = so.relax(&mut st, &opts)?;
            guess = st.g.clone();
            curve.push(e + cfg.curves.g.eval(r));
            el_states.push(st.g);
        }
        let chi = vib::bound_states(&cfg.r, cfg.reduced_mass, &curve, f64::INFINITY, 1)?;
        let chi = &chi[0].vector;
        let adiabatic_mean_r = cfg.r.points().iter().zip(chi).map(|(r, c)| r * c * c).sum::<f64>() * cfg.r.step;
        let mut data = Vec::with_capacity(cfg.r.n * ne);
        for (j, el) in el_states.iter().enumerate() {
            data.extend(el.data.iter().map(|z| z * chi[j]));
        }
        let g = ComplexField::from_data(cfg.axes(), data)?;
        let mut state = TwoComponentState::from_g(g, 0.0);
        let energy = self.relax_full(&mut state)?;
        let mean_r = mean_r(&state);
        Ok(Neutral { state, energy, mean_r, adiabatic_curve: curve, adiabatic_mean_r })
    }

    /// Relaxation of the full field-free system, finished with a short
    /// stage at a tenth of the step to shrink the splitting error of the
    /// fixed point.
    pub fn relax_full(&self, state: &mut TwoComponentState) -> Result<f64> {
        let so = self.main_field_free();
        let opts = self.relax_options();
        so.relax(state, &opts)?;
        let polish = RelaxOptions { dtau: opts.dtau / 10.0, tol: 1e-14, check_every: 100, max_steps: 20_000 };
        match so.relax(state, &polish) {
            Ok(e) => Ok(e),
            Err(Error::NoConvergence { .. }) => so.energy(state, 0.0),
            Err(e) => Err(e),
        }
    }

    fn main_field_free(&self) -> SplitOperator {
        let mut ham = self.main.ham.clone();
        ham.drive = Drive::None;
        SplitOperator::new(ham).expect("validated Hamiltonian")
    }

    fn momentum_window(&self) -> Result<(Vec<usize>, Grid1D, Option<AxisWindow>)> {
        let n = &self.config.numerics;
        let pick = |g: &Grid1D| -> Result<AxisWindow> {
            let dp = 2.0 * PI / (n.n_pad as f64 * g.step);
            let m = (n.p_max / dp).floor() as i64;
            if m < 1 || 2 * m + 1 > n.n_pad as i64 {
                return Err(Error::invalid("momentum window does not fit the padded transform"));
            }
            let idx = (-m..=m).map(|k| k.rem_euclid(n.n_pad as i64) as usize).collect();
            Ok((idx, Grid1D::new(-(m as f64) * dp, (2 * m + 1) as usize, dp)?))
        };
        let (ix, gx) = pick(&self.config.x)?;
        let y = match &self.config.y {
            Some(g) => Some(pick(g)?),
            None => None,
        };
        Ok((ix, gx, y))
    }

    /// Full propagation: pulse, mask events, accumulator, tail, K projection.
    pub fn run(&self, neutral: &TwoComponentState) -> Result<RunOutput> {
        let cfg = &self.config;
        let num = &cfg.numerics;
        let mut state = neutral.clone();
        state.time = 0.0;
        let mut ledger = NormLedger { initial: state.norm_sqr(), ..Default::default() };

        let (ix, px, py_sel) = self.momentum_window()?;
        let py = py_sel.as_ref().map(|(_, g)| *g);
        let acc_r = Grid1D::new(cfg.r.min, num.acc_r_points, cfg.r.step)?;
        let mut acc_axes = vec![px];
        if let Some(g) = py {
            acc_axes.push(g);
        }
        acc_axes.push(acc_r);
        let n_p: usize = acc_axes[..acc_axes.len() - 1].iter().map(|g| g.n).product();
        let acc = accumulator_operator(cfg, &acc_axes)?;
        let mut acc_state = TwoComponentState::from_g(ComplexField::zeros(acc_axes.clone())?, 0.0);
        let acc_abs = edge_mask(&acc_r, acc_r.max() - num.acc_absorber_width, num.acc_absorber_width);

        let pulse_t = cfg.pulse.total_duration();
        let interval = cfg.mask_interval();
        let main_end = pulse_t + num.electron_tail;
        let n_events = (main_end / interval).ceil() as usize;
        let volkov = VolkovPhase::new(&cfg.pulse);
        let dt_acc = interval / num.acc_substeps as f64;
        let transform = SliceTransform::new(cfg, &ix, py_sel.as_ref().map(|(i, _)| i.as_slice()))?;

        let mut timing = [0.0f64; 4];
        for event in 0..n_events {
            let clock = std::time::Instant::now();
            self.main.propagate(&mut state, num.dt, num.mask_every)?;
            timing[0] += clock.elapsed().as_secs_f64();
            let clock = std::time::Instant::now();
            acc.propagate(&mut acc_state, dt_acc, num.acc_substeps)?;
            timing[1] += clock.elapsed().as_secs_f64();
            let clock = std::time::Instant::now();
            // consistent clocks: both advanced by one interval
            let t = (event + 1) as f64 * interval;
            state.time = t;
            acc_state.time = t;

            let split = split_with_mask(&state, &self.mask)?;
            ledger.transferred += split.outer.norm_sqr();
            ledger.split_overlap += split.overlap;
            state = split.inner;

            let a_t = cfg.pulse.vector_potential(t);
            let s_t = volkov.at(t);
            for ch in Channel::BOTH {
                let (slice, full_norm) = transform.apply(split.outer.component(ch), a_t, &s_t, &acc_axes, n_p)?;
                let sel_norm: f64 = slice.iter().map(|z| z.norm_sqr()).sum::<f64>() * acc_state.g.cell_volume();
                ledger.truncated_p += full_norm - sel_norm;
                let target = acc_state.component_mut(ch);
                let cross: Complex64 = crate::grid::inner(&target.data, &slice);
                ledger.event_interference += 2.0 * cross.re * target.cell_volume();
                target.data.par_iter_mut().zip(slice.par_iter()).for_each(|(a, b)| *a += b);
            }

            ledger.absorbed_main_r_edge += absorb_rows(&mut state, &self.r_absorber, RAxis::First);
            ledger.absorbed_acc_r_edge += absorb_rows(&mut acc_state, &acc_abs, RAxis::Last);
            if !state.is_finite() || !acc_state.is_finite() {
                return Err(Error::Numerical { step: (event + 1) * num.mask_every, message: "non-finite state".into() });
            }
            timing[2] += clock.elapsed().as_secs_f64();
        }
        let clock = std::time::Instant::now();
        ledger.bound_remainder = state.norm_sqr();
        let main_time = n_events as f64 * interval;

        // field-free nuclear tail in the accumulator
        let t_final = pulse_t + num.tail;
        let mut t = main_time;
        let chunk = (num.tail_dt * 20.0).max(interval);
        while t < t_final - 1e-9 {
            let span = chunk.min(t_final - t);
            let steps = (span / num.tail_dt).ceil().max(1.0) as usize;
            acc.propagate(&mut acc_state, span / steps as f64, steps)?;
            t += span;
            acc_state.time = t;
            ledger.absorbed_acc_r_edge += absorb_rows(&mut acc_state, &acc_abs, RAxis::Last);
        }
        acc_state.time = t;
        timing[3] = clock.elapsed().as_secs_f64();
        log::debug!("timing [s]: main {:.1}, accumulator {:.1}, events {:.1}, tail {:.1}", timing[0], timing[1], timing[2], timing[3]);
        ledger.continuum_final = acc_state.norm_sqr();
        let electron_spectrum = momentum_marginal(&acc_state);

        // back from the Volkov interaction picture
        let s_f = volkov.at(t);
        for ch in Channel::BOTH {
            let f = acc_state.component_mut(ch);
            f.data.par_chunks_mut(acc_r.n).enumerate().for_each(|(p, row)| {
                let ph = Complex64::from_polar(1.0, -phase(&s_f, &acc_axes, p));
                row.iter_mut().for_each(|v| *v *= ph);
            });
        }

        let (joint, bound_ion, incoming, truncated_k) = self.project_outgoing(&acc_state, &acc_axes, n_p)?;
        ledger.bound_ion = bound_ion;
        ledger.incoming = incoming;
        ledger.truncated_k = truncated_k;
        ledger.joint = joint.norm_sqr();

        let err = ledger.closure_error().max(ledger.projection_error());
        if err > 1e-4 {
            return Err(Error::Ledger(format!("closure error {err:.3e}: {ledger:?}")));
        }
        log::info!(
            "run done: joint {:.4e}, remainder {:.6}, mask residual {:.3e}, closure {:.2e}",
            ledger.joint,
            ledger.bound_remainder,
            ledger.mask_residual(),
            ledger.closure_error()
        );
        Ok(RunOutput { bound_remainder: state, joint, ledger, electron_spectrum, final_time: t })
    }

    /// Removes bound V_g vibrational content and transforms R → K.
    fn project_outgoing(&self, acc_state: &TwoComponentState, acc_axes: &[Grid1D], n_p: usize) -> Result<(JointAmplitude, f64, f64, f64)> {
        let cfg = &self.config;
        let num = &cfg.numerics;
        let acc_r = *acc_axes.last().expect("R axis");
        let proj = vib::KProjection::new(&acc_r, cfg.reduced_mass, &cfg.curves.g, num.n_vib, num.vib_r_max, num.ker_max_ev)?;
        let n_k = proj.k.n;
        let dp_cell = acc_state.g.cell_volume() / acc_r.step;
        let mut data = vec![Complex64::new(0.0, 0.0); 2 * n_p * n_k];
        let mut total = vib::ProjectionNorms::default();
        for ch in Channel::BOTH {
            let rows: Vec<_> = acc_state.component(ch).data.par_chunks(acc_r.n).map(|row| proj.project(row, ch == Channel::G)).collect();
            for (p, (out, nrm)) in rows.into_iter().enumerate() {
                let base = (ch.index() * n_p + p) * n_k;
                data[base..base + n_k].copy_from_slice(&out);
                total.bound += nrm.bound * dp_cell;
                total.incoming += nrm.incoming * dp_cell;
                total.truncated += nrm.truncated * dp_cell;
            }
        }
        let px = acc_axes[0];
        let py = if acc_axes.len() == 3 { Some(acc_axes[1]) } else { None };
        let joint = JointAmplitude::new(px, py, proj.k, cfg.reduced_mass, data)?;
        Ok((joint, total.bound, total.incoming, total.truncated))
    }
}

/// Result of [`Model::run`].
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub bound_remainder: TwoComponentState,
    pub joint: JointAmplitude,
    pub ledger: NormLedger,
    /// Photoelectron density over the flattened momentum window, summed over
    /// R and both ion channels (bound and dissociating ions alike).
    pub electron_spectrum: Vec<f64>,
    pub final_time: f64,
}

fn momentum_marginal(acc: &TwoComponentState) -> Vec<f64> {
    let r = *acc.g.axes.last().expect("R axis");
    let mut out = vec![0.0; acc.g.len() / r.n];
    for f in [&acc.g, &acc.u] {
        for (p, row) in f.data.chunks(r.n).enumerate() {
            out[p] += row.iter().map(|z| z.norm_sqr()).sum::<f64>() * r.step;
        }
    }
    out
}

pub fn mean_r(state: &TwoComponentState) -> f64 {
    let r = state.g.axes[0];
    let inner: usize = state.g.axes[1..].iter().map(|a| a.n).product();
    let mut num = 0.0;
    let mut den = 0.0;
    for f in [&state.g, &state.u] {
        for (j, row) in f.data.chunks(inner).enumerate() {
            let w: f64 = row.iter().map(|z| z.norm_sqr()).sum();
            num += r.point(j) * w;
            den += w;
        }
    }
    num / den
}

#[derive(Clone, Copy, PartialEq)]
enum RAxis {
    First,
    Last,
}

/// Multiplies the state by an edge mask along R; returns the removed norm.
fn absorb_rows(state: &mut TwoComponentState, mask: &[f64], axis: RAxis) -> f64 {
    let before = state.norm_sqr();
    for ch in Channel::BOTH {
        let f = state.component_mut(ch);
        match axis {
            RAxis::First => {
                let inner = f.len() / mask.len();
                f.data.par_chunks_mut(inner).zip(mask.par_iter()).for_each(|(row, m)| row.iter_mut().for_each(|z| *z *= m));
            }
            RAxis::Last => {
                f.data.par_chunks_mut(mask.len()).for_each(|row| row.iter_mut().zip(mask).for_each(|(z, m)| *z *= m));
            }
        }
    }
    before - state.norm_sqr()
}

fn accumulator_operator(cfg: &ModelConfig, axes: &[Grid1D]) -> Result<SplitOperator> {
    let r = *axes.last().expect("R axis");
    let batch: usize = axes[..axes.len() - 1].iter().map(|g| g.n).product();
    let mut pots = [Vec::with_capacity(batch * r.n), Vec::with_capacity(batch * r.n)];
    for ch in Channel::BOTH {
        let row = match ch {
            Channel::G => cfg.curves.g.sample(&r),
            Channel::U => cfg.curves.u.sample(&r),
        };
        for _ in 0..batch {
            pots[ch.index()].extend_from_slice(&row);
        }
    }
    let mut masses = vec![f64::INFINITY; axes.len() - 1];
    masses.push(cfg.reduced_mass);
    SplitOperator::new(Hamiltonian {
        axes: axes.to_vec(),
        masses,
        potential: pots,
        field_axis: None,
        coupling: Some((axes.len() - 1, cfg.dipole.sample(&r))),
        drive: Drive::Pulse(cfg.pulse),
    })
}

/// `S(p, t) = ∫₀ᵗ [(px + A)² + py²]/2 dt'` through the running integrals of
/// A and A², tabulated on a fine time grid.
struct VolkovPhase {
    h: f64,
    a_end: f64,
    int_a: Vec<f64>,
    int_a2: Vec<f64>,
}

/// Integrals of A and A² at one time.
struct VolkovAt {
    t: f64,
    int_a: f64,
    int_a2: f64,
}

impl VolkovPhase {
    fn new(pulse: &Pulse) -> Self {
        let t_end = pulse.total_duration();
        let n = ((t_end / 0.05).ceil() as usize).max(2);
        let h = t_end / n as f64;
        let mut int_a = vec![0.0; n + 1];
        let mut int_a2 = vec![0.0; n + 1];
        for i in 0..n {
            let (t0, tm, t1) = (i as f64 * h, (i as f64 + 0.5) * h, (i + 1) as f64 * h);
            let (a0, am, a1) = (pulse.vector_potential(t0), pulse.vector_potential(tm), pulse.vector_potential(t1));
            int_a[i + 1] = int_a[i] + h / 6.0 * (a0 + 4.0 * am + a1);
            int_a2[i + 1] = int_a2[i] + h / 6.0 * (a0 * a0 + 4.0 * am * am + a1 * a1);
        }
        VolkovPhase { h, a_end: pulse.vector_potential(t_end), int_a, int_a2 }
    }

    /// Beyond the pulse A stays at A(T).
    fn at(&self, t: f64) -> VolkovAt {
        let n = self.int_a.len() - 1;
        let t_end = n as f64 * self.h;
        if t >= t_end {
            let dt = t - t_end;
            return VolkovAt { t, int_a: self.int_a[n] + self.a_end * dt, int_a2: self.int_a2[n] + self.a_end * self.a_end * dt };
        }
        let x = t / self.h;
        let i = (x.floor() as usize).min(n - 1);
        let f = x - i as f64;
        VolkovAt {
            t,
            int_a: self.int_a[i] + f * (self.int_a[i + 1] - self.int_a[i]),
            int_a2: self.int_a2[i] + f * (self.int_a2[i + 1] - self.int_a2[i]),
        }
    }
}

fn phase(s: &VolkovAt, axes: &[Grid1D], p: usize) -> f64 {
    let (px, py) = if axes.len() == 3 { (axes[0].point(p / axes[1].n), axes[1].point(p % axes[1].n)) } else { (axes[0].point(p), 0.0) };
    0.5 * (px * px + py * py) * s.t + px * s.int_a + 0.5 * s.int_a2
}

/// Outer-slice transform: length → velocity gauge, zero-padded FFT over the
/// electron axes, exact continuous-FT prefactor, momentum window selection.
struct SliceTransform {
    x: Grid1D,
    y: Option<Grid1D>,
    n_pad: usize,
    fft: FftNd,
    ix: Vec<usize>,
    iy: Option<Vec<usize>>,
    r_n: usize,
}

impl SliceTransform {
    fn new(cfg: &ModelConfig, ix: &[usize], iy: Option<&[usize]>) -> Result<Self> {
        let n_pad = cfg.numerics.n_pad;
        let shape: Vec<usize> = if cfg.y.is_some() { vec![n_pad, n_pad] } else { vec![n_pad] };
        Ok(SliceTransform { x: cfg.x, y: cfg.y, n_pad, fft: FftNd::new(&shape), ix: ix.to_vec(), iy: iy.map(|v| v.to_vec()), r_n: cfg.r.n })
    }

    /// Returns the accumulator-layout slice (`[p][R_acc]`, interaction
    /// picture) and the full-window norm of the transformed outer part.
    fn apply(&self, outer: &ComplexField, a_t: f64, s_t: &VolkovAt, acc_axes: &[Grid1D], n_p: usize) -> Result<(Vec<Complex64>, f64)> {
        let n_acc_r = acc_axes.last().expect("R axis").n;
        let ne = outer.len() / self.r_n;
        let xs = self.x.points();
        let gauge: Vec<Complex64> = xs.iter().map(|&x| Complex64::from_polar(1.0, -a_t * x)).collect();
        let kx = Grid1D::new(self.x.min, self.n_pad, self.x.step)?.wavenumbers();
        let ky = match self.y {
            Some(y) => Grid1D::new(y.min, self.n_pad, y.step)?.wavenumbers(),
            None => Vec::new(),
        };
        let dv = self.x.step * self.y.map_or(1.0, |g| g.step);
        let scale = dv / (2.0 * PI).powf(if self.y.is_some() { 1.0 } else { 0.5 });
        let ny = self.y.map_or(1, |g| g.n);
        let padded_len = if self.y.is_some() { self.n_pad * self.n_pad } else { self.n_pad };
        let dp_cell = 2.0 * PI / (self.n_pad as f64 * self.x.step) * self.y.map_or(1.0, |g| 2.0 * PI / (self.n_pad as f64 * g.step));

        let per_row: Vec<(Vec<Complex64>, f64)> = outer
            .data
            .par_chunks(ne)
            .map(|row| {
                if row.iter().all(|z| z.re == 0.0 && z.im == 0.0) {
                    return (vec![Complex64::new(0.0, 0.0); n_p], 0.0);
                }
                let mut buf = vec![Complex64::new(0.0, 0.0); padded_len];
                for i in 0..self.x.n {
                    for j in 0..ny {
                        let dst = if self.y.is_some() { i * self.n_pad + j } else { i };
                        buf[dst] = row[i * ny + j] * gauge[i];
                    }
                }
                self.fft.forward(&mut buf);
                let full: f64 = buf.iter().map(|z| z.norm_sqr()).sum::<f64>() * scale * scale * dp_cell;
                let mut sel = Vec::with_capacity(n_p);
                match &self.iy {
                    None => {
                        for &i in &self.ix {
                            let ph = -kx[i] * self.x.min;
                            sel.push(buf[i] * Complex64::from_polar(scale, ph));
                        }
                    }
                    Some(iy) => {
                        let y = self.y.expect("y grid");
                        for &i in &self.ix {
                            for &j in iy {
                                let ph = -kx[i] * self.x.min - ky[j] * y.min;
                                sel.push(buf[i * self.n_pad + j] * Complex64::from_polar(scale, ph));
                            }
                        }
                    }
                }
                (sel, full)
            })
            .collect();

        let mut out = vec![Complex64::new(0.0, 0.0); n_p * n_acc_r];
        let mut full_norm = 0.0;
        let dr = acc_axes.last().expect("R axis").step;
        for (r, (sel, full)) in per_row.iter().enumerate() {
            full_norm += full * dr;
            for (p, v) in sel.iter().enumerate() {
                out[p * n_acc_r + r] = *v;
            }
        }
        // into the Volkov interaction picture
        out.par_chunks_mut(n_acc_r).enumerate().for_each(|(p, row)| {
            let ph = Complex64::from_polar(1.0, phase(s_t, acc_axes, p));
            row.iter_mut().for_each(|v| *v *= ph);
        });
        Ok((out, full_norm))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis;
    use crate::ion1d::d_plus_right_left;
    use crate::potentials::{calibrate, default_ip_u_ev, CalibrationSpec, ProfileSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::OnceLock;

    fn calibrated() -> SoftCoreParams {
        static P: OnceLock<SoftCoreParams> = OnceLock::new();
        P.get_or_init(|| {
            let x = Grid1D::centered(128, 0.4).unwrap();
            let curves = crate::potentials::ion_curves_builtin();
            let mut spec = CalibrationSpec::new(15.47, default_ip_u_ev(15.47, &curves, 1.4), vec![x]);
            spec.profile = Some(ProfileSpec::builtin());
            calibrate(&spec).unwrap()
        })
        .clone()
    }

    fn tiny(intensity: f64, cep: f64) -> ModelConfig {
        let pulse = Pulse::from_cycles(intensity, 515.0, 3.0, cep).unwrap();
        let mut c = ModelConfig::desk_1d(pulse, calibrated());
        c.x = Grid1D::centered(128, 0.4).unwrap();
        c.r = Grid1D::new(0.5, 48, 0.0625).unwrap();
        c.mask = MaskSpec { inner_radius: 16.0, width: 9.0, axes: vec![1], power: 2.0 };
        c.numerics.r_absorber_start = 2.6;
        c.numerics.r_absorber_width = 0.8;
        c.numerics.n_pad = 512;
        c.numerics.acc_r_points = 384;
        c.numerics.tail = 100.0;
        c.numerics.electron_tail = 50.0;
        c.numerics.vib_r_max = 10.0;
        c
    }

    fn neutral() -> &'static Neutral {
        static N: OnceLock<Neutral> = OnceLock::new();
        N.get_or_init(|| Model::new(tiny(1e14, 0.0)).unwrap().prepare_neutral().unwrap())
    }

    fn random_state(model: &Model, seed: u64) -> TwoComponentState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let axes = model.config.axes();
        let n: usize = axes.iter().map(|a| a.n).product();
        let mut f = || {
            let data = (0..n).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
            ComplexField::from_data(axes.clone(), data).unwrap()
        };
        let g = f();
        let u = f();
        TwoComponentState::new(g, u, 0.0).unwrap()
    }

    #[test]
    fn config_validation() {
        let mut c = tiny(1e14, 0.0);
        assert!(c.validate().is_ok());
        c.reduced_mass = 0.0;
        assert!(c.validate().is_err());
        let mut c = tiny(1e14, 0.0);
        c.y = Some(c.x);
        assert!(c.validate().is_err());
        let mut c = tiny(1e14, 0.0);
        c.numerics.acc_r_points = 10;
        assert!(c.validate().is_err());
    }

    #[test]
    fn no_coupling_without_field() {
        let m = Model::new(tiny(1e14, 0.0)).unwrap();
        let mut st = random_state(&m, 1);
        st.u.data.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
        // the sin² envelope vanishes at t = 0
        let h = m.hamiltonian_apply(&st, 0.0).unwrap();
        assert!(h.u.norm_sqr() == 0.0);
        let h = m.hamiltonian_apply(&st, 0.5 * m.config.pulse.total_duration()).unwrap();
        assert!(h.u.norm_sqr() > 0.0);
    }

    #[test]
    fn hamiltonian_is_hermitian() {
        let m = Model::new(tiny(1e14, 0.3)).unwrap();
        let t = 0.37 * m.config.pulse.total_duration();
        for seed in 0..3 {
            let a = random_state(&m, 10 + seed);
            let b = random_state(&m, 20 + seed);
            let ha = m.hamiltonian_apply(&a, t).unwrap();
            let hb = m.hamiltonian_apply(&b, t).unwrap();
            let lhs = b.inner(&ha);
            let rhs = a.inner(&hb).conj();
            assert!((lhs - rhs).norm() < 1e-10 * lhs.norm().max(1.0), "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn neutral_ground_state() {
        let n = neutral();
        assert!((1.3..=1.5).contains(&n.mean_r), "<R> = {}", n.mean_r);
        assert!((n.mean_r - n.adiabatic_mean_r).abs() < 0.05 * n.adiabatic_mean_r);
        assert!((n.state.norm_sqr() - 1.0).abs() < 1e-10);
        assert!(n.state.u.norm_sqr() < 1e-20);
        // x-parity of the g density
        let nx = n.state.g.axes[1].n;
        let mut err: f64 = 0.0;
        for row in n.state.g.data.chunks(nx) {
            for i in 1..nx {
                err = err.max((row[i].norm_sqr() - row[nx - i].norm_sqr()).abs());
            }
        }
        assert!(err < 1e-10, "parity error {err}");
        // eigen-consistency
        let m = Model::new(tiny(1e14, 0.0)).unwrap();
        let h = m.hamiltonian_apply(&n.state, 0.0).unwrap();
        let mut resid = h.clone();
        for ch in Channel::BOTH {
            let (r, s) = (resid.component_mut(ch), n.state.component(ch));
            r.data.iter_mut().zip(&s.data).for_each(|(a, b)| *a -= b * n.energy);
        }
        assert!(resid.norm_sqr().sqrt() < 1e-6, "residual {}", resid.norm_sqr().sqrt());
        // fixed point of the relaxation
        let mut again = n.state.clone();
        let e = m.relax_full(&mut again).unwrap();
        assert!((e - n.energy).abs() < 1e-10);
        assert!((again.inner(&n.state).norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn zero_intensity_run() {
        // a finer step keeps the splitting error of the real-time step,
        // which sheds ~1e-9 of norm at dt = 0.1, below the tolerance
        let mut c = tiny(0.0, 0.0);
        c.numerics.dt = 0.025;
        c.numerics.mask_every = 100;
        let m = Model::new(c).unwrap();
        let n = neutral();
        let out = m.run(&n.state).unwrap();
        assert!(out.joint.norm_sqr() < 1e-10, "{:?}", out.ledger);
        assert!(out.ledger.closure_error() < 1e-10);
        assert!((out.ledger.bound_remainder - out.ledger.initial).abs() < 1e-10, "{:?}", out.ledger);
        // the field-free ground state only picks up a phase, up to the
        // splitting error of the real-time step
        let overlap = out.bound_remainder.inner(&n.state).norm();
        assert!((overlap - 1.0).abs() < 1e-6, "overlap {overlap}");
    }

    #[test]
    fn ledger_closes_and_cep_mirror_holds() {
        let n = neutral();
        let o0 = Model::new(tiny(1e14, 0.0)).unwrap().run(&n.state).unwrap();
        let o1 = Model::new(tiny(1e14, PI)).unwrap().run(&n.state).unwrap();
        for o in [&o0, &o1] {
            assert!(o.ledger.closure_error() < 1e-6, "{:?}", o.ledger);
            assert!(o.ledger.main_grid_error() < 1e-6);
            assert!(o.ledger.accumulator_error() < 1e-6);
            assert!(o.ledger.projection_error() < 1e-6);
            assert!(o.joint.norm_sqr() > 0.0);
        }
        let d = analysis::reflection_mismatch(&o0.joint, &o1.joint).unwrap();
        assert!(d < 0.02, "mirror mismatch {d}");
        // bit-identical rerun
        let again = Model::new(tiny(1e14, 0.0)).unwrap().run(&n.state).unwrap();
        assert!(again.joint.data.iter().zip(&o0.joint.data).all(|(a, b)| a.re.to_bits() == b.re.to_bits() && a.im.to_bits() == b.im.to_bits()));
    }

    /// In a static field E > 0 the soft-core electron of the stretched ion
    /// settles at x < 0, and the lower state of the coupled channel pair is
    /// the combination `d_plus_right_left` labels as D⁺ right.
    #[test]
    fn static_field_sign_convention() {
        let sc = SoftCoreParams::new(1.28, 0.63).unwrap();
        let x = Grid1D::centered(256, 0.2).unwrap();
        let (r, field) = (6.0, 0.002);
        let mut ham = crate::potentials::electron_hamiltonian(&sc, Channel::G, r, &[x]).unwrap();
        ham.field_axis = Some(0);
        ham.drive = Drive::Constant(field);
        let so = SplitOperator::new(ham).unwrap();
        let guess = ComplexField::from_fn(vec![x], |c| Complex64::new((-(c[0] * c[0]) / 8.0).exp() * (1.0 + 0.1 * c[0]), 0.0)).unwrap();
        let mut st = TwoComponentState::from_g(guess, 0.0);
        so.relax(&mut st, &RelaxOptions { dtau: 0.05, tol: 1e-10, check_every: 20, max_steps: 500_000 }).unwrap();
        let mean_x: f64 = st.g.data.iter().enumerate().map(|(i, z)| x.point(i) * z.norm_sqr()).sum::<f64>() * x.step;
        assert!(mean_x < -0.1, "<x> = {mean_x}");

        // two-level ion at the same R: equal curves, coupling −d(R)E
        let rg = Grid1D::new(r, 2, 0.01).unwrap();
        let d = TransitionDipole::default().sample(&rg);
        let two = SplitOperator::new(Hamiltonian {
            axes: vec![rg],
            masses: vec![f64::INFINITY],
            potential: [vec![0.0; 2], vec![0.0; 2]],
            field_axis: None,
            coupling: Some((0, d)),
            drive: Drive::Constant(field),
        })
        .unwrap();
        let mut ion = TwoComponentState::new(
            ComplexField::from_data(vec![rg], vec![Complex64::new(1.0, 0.0); 2]).unwrap(),
            ComplexField::from_data(vec![rg], vec![Complex64::new(0.3, 0.0); 2]).unwrap(),
            0.0,
        )
        .unwrap();
        two.relax(&mut ion, &RelaxOptions { dtau: 0.5, tol: 1e-12, check_every: 20, max_steps: 1_000_000 }).unwrap();
        for i in 0..2 {
            let (right, left) = d_plus_right_left(ion.g.data[i], ion.u.data[i]);
            assert!(left.norm_sqr() < 1e-6 * right.norm_sqr(), "{right} {left}");
        }
    }
}
