//! Ion-only two-level Born-Oppenheimer model: the neutral vibrational ground
//! state is placed on V_g at the ionization time, propagated on the coupled
//! V_g/V_u curves, and analyzed for the right-left D⁺ emission asymmetry.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ComplexField, Grid1D};
use crate::laser::Pulse;
use crate::potentials::{Curve, IonCurves, TransitionDipole};
use crate::propagator::{Channel, Drive, Hamiltonian, RelaxOptions, SplitOperator, TwoComponentState};
use crate::units;
use crate::vib::{self, KProjection};

pub type IonState = TwoComponentState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IonConfig {
    pub pulse: Pulse,
    pub curves: IonCurves,
    pub dipole: TransitionDipole,
    pub neutral: Curve,
    pub reduced_mass: f64,
    pub r: Grid1D,
    pub dt: f64,
    /// Field-free propagation after the pulse [a.u.].
    pub tail: f64,
    /// Optional R-edge absorber `(start, width)`.
    pub absorber: Option<(f64, f64)>,
    pub n_vib: usize,
    pub vib_r_max: f64,
    pub ker_max_ev: f64,
    /// Bins below this fraction of the dissociative norm have no asymmetry.
    pub yield_threshold: f64,
}

impl IonConfig {
    /// 9.74e13 W/cm², 515 nm, 56-cycle sin² pulse, builtin curves.
    pub fn default_scan() -> Self {
        let pulse = Pulse::from_cycles(9.74e13, 515.0, 56.0, 0.0).expect("static pulse");
        IonConfig {
            pulse,
            curves: crate::potentials::ion_curves_builtin(),
            dipole: TransitionDipole::default(),
            neutral: crate::potentials::neutral_curve_builtin(),
            reduced_mass: units::DEUTERON_MASS_AU / 2.0,
            r: Grid1D::new(0.5, 2048, 0.05).expect("static grid"),
            dt: 0.2,
            tail: 1000.0,
            absorber: None,
            n_vib: 30,
            vib_r_max: 30.0,
            ker_max_ev: 8.0,
            yield_threshold: 1e-8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.pulse.validate()?;
        if !(self.reduced_mass > 0.0) || !(self.dt > 0.0) || !(self.tail >= 0.0) {
            return Err(Error::invalid("mass and dt must be positive, tail non-negative"));
        }
        if self.r.min <= 0.0 {
            return Err(Error::invalid("R grid must start at positive R"));
        }
        if let Some((s, w)) = self.absorber {
            if !(w > 0.0) || s + w > self.r.max() + self.r.step + 1e-9 {
                return Err(Error::invalid("absorber does not fit the R grid"));
            }
        }
        if !(self.yield_threshold >= 0.0) {
            return Err(Error::invalid("yield threshold must be non-negative"));
        }
        Ok(())
    }

    fn operator(&self, drive: Drive) -> Result<SplitOperator> {
        SplitOperator::new(Hamiltonian {
            axes: vec![self.r],
            masses: vec![self.reduced_mass],
            potential: [self.curves.g.sample(&self.r), self.curves.u.sample(&self.r)],
            field_axis: None,
            coupling: Some((0, self.dipole.sample(&self.r))),
            drive,
        })
    }
}

/// Neutral vibrational ground state by relaxation on the neutral curve.
pub fn neutral_ground_state(config: &IonConfig) -> Result<ComplexField> {
    let opts = RelaxOptions { dtau: 1.0, tol: 1e-13, check_every: 50, max_steps: 1_000_000 };
    let (_, f) = vib::relaxed_ground_state(&config.r, config.reduced_mass, &config.neutral, &opts)?;
    Ok(f)
}

/// `χ_g` = neutral ground state (normalized), `χ_u` = 0, clock at `t_ion`.
pub fn franck_condon_launch(config: &IonConfig, neutral: Option<&ComplexField>, t_ion: f64) -> Result<IonState> {
    let t_end = config.pulse.total_duration();
    if !(0.0..=t_end).contains(&t_ion) {
        return Err(Error::invalid(format!("t_ion = {t_ion} outside the pulse [0, {t_end}]")));
    }
    let mut g = match neutral {
        Some(f) => {
            if f.axes != [config.r] {
                return Err(Error::invalid("neutral state is not on the ion R grid"));
            }
            f.clone()
        }
        None => neutral_ground_state(config)?,
    };
    let n = g.norm_sqr();
    if !(n > 0.0) {
        return Err(Error::invalid("neutral state has zero norm"));
    }
    g.scale(1.0 / n.sqrt());
    Ok(TwoComponentState::from_g(g, t_ion))
}

/// Propagates to the end of the pulse plus the tail. Returns the state and
/// the norm removed by the absorber (zero without one).
pub fn propagate_ion(config: &IonConfig, state: &IonState) -> Result<(IonState, f64)> {
    config.validate()?;
    let so = config.operator(Drive::Pulse(config.pulse))?;
    let mut st = state.clone();
    let t_final = config.pulse.total_duration() + config.tail;
    let mask: Option<Vec<f64>> = config.absorber.map(|(s, w)| {
        let spec = crate::propagator::MaskSpec::new(1.0, w, vec![]);
        config.r.points().iter().map(|&r| spec.value(1.0 + (r - s).max(0.0))).collect()
    });
    let chunk: f64 = 200.0;
    let mut absorbed = 0.0;
    while st.time < t_final - 1e-9 {
        let span = chunk.min(t_final - st.time);
        let steps = (span / config.dt).ceil().max(1.0) as usize;
        let t0 = st.time;
        so.propagate(&mut st, span / steps as f64, steps)?;
        st.time = t0 + span;
        if let Some(m) = &mask {
            let before = st.norm_sqr();
            for ch in Channel::BOTH {
                st.component_mut(ch).data.iter_mut().zip(m).for_each(|(z, v)| *z *= v);
            }
            absorbed += before - st.norm_sqr();
        }
        if !st.is_finite() {
            return Err(Error::Numerical { step: steps, message: format!("non-finite ion state at t = {}", st.time) });
        }
    }
    Ok((st, absorbed))
}

/// Per-channel dissociative amplitudes ã_g(K), ã_u(K) after bound removal.
#[derive(Debug, Clone, PartialEq)]
pub struct Dissociative {
    pub k: Grid1D,
    pub reduced_mass: f64,
    pub g: Vec<Complex64>,
    pub u: Vec<Complex64>,
}

impl Dissociative {
    pub fn ker_ev(&self) -> Vec<f64> {
        self.k.points().iter().map(|k| units::au_to_ev(k * k / (2.0 * self.reduced_mass))).collect()
    }

    pub fn norm_sqr(&self) -> f64 {
        (self.g.iter().chain(&self.u).map(|z| z.norm_sqr()).sum::<f64>()) * self.k.step
    }
}

pub fn dissociative_amplitudes(config: &IonConfig, state: &IonState) -> Result<Dissociative> {
    let proj = KProjection::new(&config.r, config.reduced_mass, &config.curves.g, config.n_vib, config.vib_r_max, config.ker_max_ev)?;
    let (g, _) = proj.project(&state.g.data, true);
    let (u, _) = proj.project(&state.u.data, false);
    Ok(Dissociative { k: proj.k, reduced_mass: config.reduced_mass, g, u })
}

/// D⁺ right/left amplitudes `((ã_g + ã_u)/√2, (ã_g − ã_u)/√2)`.
///
/// With the `+x·E` electron term and `−d·E` coupling used throughout, the
/// lower field-dressed state `(g + u)/√2` in a field pointing to +x has the
/// bound electron on the left, so the remaining positive charge is on the
/// right.
pub fn d_plus_right_left(g: Complex64, u: Complex64) -> (Complex64, Complex64) {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    ((g + u) * s, (g - u) * s)
}

/// `(|a_R|² − |a_L|²)/(|a_R|² + |a_L|²)` for the D⁺ direction; `None` when
/// the bin yield is not above `threshold`.
pub fn asymmetry_value(g: Complex64, u: Complex64, threshold: f64) -> Option<f64> {
    let (r, l) = d_plus_right_left(g, u);
    let (nr, nl) = (r.norm_sqr(), l.norm_sqr());
    let y = nr + nl;
    if y > threshold && y > 0.0 {
        Some((nr - nl) / y)
    } else {
        None
    }
}

/// A versus KER at one ionization time.
#[derive(Debug, Clone, PartialEq)]
pub struct AsymmetryColumn {
    pub ker_ev: Vec<f64>,
    pub a: Vec<Option<f64>>,
    /// Dissociative density per K bin, `|ã_g|² + |ã_u|²`.
    pub yield_density: Vec<f64>,
}

pub fn asymmetry(config: &IonConfig, state: &IonState) -> Result<AsymmetryColumn> {
    let d = dissociative_amplitudes(config, state)?;
    let total = d.norm_sqr();
    let thr = config.yield_threshold * total / d.k.step;
    let yield_density: Vec<f64> = d.g.iter().zip(&d.u).map(|(g, u)| g.norm_sqr() + u.norm_sqr()).collect();
    let a = d.g.iter().zip(&d.u).map(|(&g, &u)| asymmetry_value(g, u, thr)).collect();
    Ok(AsymmetryColumn { ker_ev: d.ker_ev(), a, yield_density })
}

/// A(KER, t_ion); `t_ion` in optical cycles.
#[derive(Debug, Clone, PartialEq)]
pub struct AsymmetryMap {
    pub ker_ev: Vec<f64>,
    pub t_ion_cycles: Vec<f64>,
    /// `[t_ion][KER]`.
    pub a: Vec<Vec<Option<f64>>>,
    pub yield_density: Vec<Vec<f64>>,
}

impl AsymmetryMap {
    /// Rows `t_ion,ker_ev,A,yield`; undefined A is written as `nan`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t_ion_cycles,ker_ev,asymmetry,yield\n");
        for (i, t) in self.t_ion_cycles.iter().enumerate() {
            for (j, e) in self.ker_ev.iter().enumerate() {
                let a = self.a[i][j].map_or("nan".to_string(), |v| format!("{v:.8e}"));
                s.push_str(&format!("{t},{e:.6},{a},{:.8e}\n", self.yield_density[i][j]));
            }
        }
        s
    }
}

pub fn scan_tion(config: &IonConfig, t_ion_cycles: &[f64]) -> Result<AsymmetryMap> {
    config.validate()?;
    let neutral = neutral_ground_state(config)?;
    let period = config.pulse.cycle_period();
    let cols: Vec<AsymmetryColumn> = t_ion_cycles
        .par_iter()
        .map(|&c| {
            let st = franck_condon_launch(config, Some(&neutral), c * period)?;
            let (st, _) = propagate_ion(config, &st)?;
            asymmetry(config, &st)
        })
        .collect::<Result<_>>()?;
    let ker_ev = cols.first().map(|c| c.ker_ev.clone()).unwrap_or_default();
    Ok(AsymmetryMap {
        ker_ev,
        t_ion_cycles: t_ion_cycles.to_vec(),
        yield_density: cols.iter().map(|c| c.yield_density.clone()).collect(),
        a: cols.into_iter().map(|c| c.a).collect(),
    })
}

/// `‖A1 + A2‖ / (‖A1‖ + ‖A2‖)` over bins above `ker_min_ev` where both are
/// defined; zero for perfectly antisymmetric columns.
pub fn antisymmetry_residual(ker_ev: &[f64], a1: &[Option<f64>], a2: &[Option<f64>], ker_min_ev: f64) -> Option<f64> {
    let (mut s, mut n1, mut n2) = (0.0, 0.0, 0.0);
    let mut any = false;
    for ((e, x), y) in ker_ev.iter().zip(a1).zip(a2) {
        if let (true, Some(x), Some(y)) = (*e > ker_min_ev, x, y) {
            s += (x + y).powi(2);
            n1 += x * x;
            n2 += y * y;
            any = true;
        }
    }
    if !any || n1 + n2 == 0.0 {
        return None;
    }
    Some(s.sqrt() / (n1.sqrt() + n2.sqrt()))
}
