//! Electron-core soft-core interaction, ion potential curves, transition
//! dipole, and calibration of the soft-core smoothing to target binding
//! energies.

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ComplexField, Grid1D};
use crate::propagator::{Channel, Hamiltonian, RelaxOptions, SplitOperator, TwoComponentState};
use crate::units;

/// Two-center soft-core parameters. Each nucleus carries `charge`, so the
/// far-field potential is `-2·charge/r`. The gerade smoothing may vary with
/// R through `a_g_profile`; `a_g` is then its value at the calibration
/// distance and is not used for evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftCoreParams {
    pub a_g: f64,
    pub a_u: f64,
    #[serde(default = "default_charge")]
    pub charge: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_g_profile: Option<Table>,
}

fn default_charge() -> f64 {
    0.5
}

impl SoftCoreParams {
    pub fn new(a_g: f64, a_u: f64) -> Result<Self> {
        let p = SoftCoreParams { a_g, a_u, charge: default_charge(), a_g_profile: None };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a_g > 0.0) || !(self.a_u > 0.0) || !self.a_g.is_finite() || !self.a_u.is_finite() {
            return Err(Error::invalid(format!("soft-core smoothing must be positive, got a_g={} a_u={}", self.a_g, self.a_u)));
        }
        if !(self.charge > 0.0) || !self.charge.is_finite() {
            return Err(Error::invalid("soft-core charge must be positive"));
        }
        if let Some(t) = &self.a_g_profile {
            if t.v.iter().any(|a| !(*a > 0.0)) {
                return Err(Error::invalid("smoothing profile must be positive"));
            }
        }
        Ok(())
    }

    /// Smoothing of channel `ch` at internuclear distance `r`.
    pub fn smoothing(&self, ch: Channel, r: f64) -> f64 {
        match (ch, &self.a_g_profile) {
            (Channel::G, Some(t)) => t.eval(r),
            (Channel::G, None) => self.a_g,
            (Channel::U, _) => self.a_u,
        }
    }

    fn with_smoothing(&self, ch: Channel, a: f64) -> Self {
        match ch {
            Channel::G => SoftCoreParams { a_g: a, a_g_profile: None, ..self.clone() },
            Channel::U => SoftCoreParams { a_u: a, ..self.clone() },
        }
    }

    /// `-q/√((x-R/2)²+y²+a) - q/√((x+R/2)²+y²+a)`.
    pub fn v_int(&self, ch: Channel, x: f64, y: f64, r: f64) -> Result<f64> {
        if !(r > 0.0) {
            return Err(Error::invalid(format!("internuclear distance must be positive, got {r}")));
        }
        Ok(self.v_int_unchecked(ch, x, y, r))
    }

    pub(crate) fn v_int_unchecked(&self, ch: Channel, x: f64, y: f64, r: f64) -> f64 {
        let a = self.smoothing(ch, r);
        let h = 0.5 * r;
        let y2 = y * y + a;
        -self.charge / ((x - h) * (x - h) + y2).sqrt() - self.charge / ((x + h) * (x + h) + y2).sqrt()
    }
}

/// Tabulated curve: strictly increasing abscissae, linear interpolation,
/// constant extrapolation beyond the ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub r: Vec<f64>,
    pub v: Vec<f64>,
}

impl Table {
    pub fn new(r: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if r.len() < 2 || r.len() != v.len() {
            return Err(Error::invalid("table needs at least two (R, value) rows"));
        }
        if r.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("table R values must be strictly increasing"));
        }
        if r.iter().chain(&v).any(|x| !x.is_finite()) {
            return Err(Error::invalid("table contains non-finite values"));
        }
        Ok(Table { r, v })
    }

    /// Two whitespace-separated columns; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut r = Vec::new();
        let mut v = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split_whitespace().collect();
            let parse = |s: &str| s.parse::<f64>().ok();
            match cols.as_slice() {
                [a, b] => match (parse(a), parse(b)) {
                    (Some(a), Some(b)) => {
                        r.push(a);
                        v.push(b);
                    }
                    _ => return Err(Error::config("unparsable number in table row", Some(lineno + 1))),
                },
                _ => return Err(Error::config("table rows need exactly two columns", Some(lineno + 1))),
            }
        }
        Table::new(r, v).map_err(|e| Error::config(e.to_string(), None))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Table::parse(&text)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.r.len();
        if x <= self.r[0] {
            return self.v[0];
        }
        if x >= self.r[n - 1] {
            return self.v[n - 1];
        }
        let i = self.r.partition_point(|&ri| ri <= x) - 1;
        let t = (x - self.r[i]) / (self.r[i + 1] - self.r[i]);
        self.v[i] + t * (self.v[i + 1] - self.v[i])
    }
}

/// A potential curve V(R) [hartree], zero at dissociation for the analytic forms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Curve {
    /// `De[(1 - e^{-α(R-R0)})² - 1]`.
    Morse {
        depth: f64,
        alpha: f64,
        r0: f64,
    },
    /// `De[e^{-2α(R-R0)} + 2e^{-α(R-R0)}]`, the repulsive partner of the
    /// Morse curve with the same parameters.
    AntiMorse {
        depth: f64,
        alpha: f64,
        r0: f64,
    },
    Table(Table),
}

impl Curve {
    pub fn eval(&self, r: f64) -> f64 {
        match self {
            Curve::Morse { depth, alpha, r0 } => {
                let e = (-alpha * (r - r0)).exp();
                depth * (e * e - 2.0 * e)
            }
            Curve::AntiMorse { depth, alpha, r0 } => {
                let e = (-alpha * (r - r0)).exp();
                depth * (e * e + 2.0 * e)
            }
            Curve::Table(t) => t.eval(r),
        }
    }

    pub fn sample(&self, grid: &Grid1D) -> Vec<f64> {
        grid.points().iter().map(|&r| self.eval(r)).collect()
    }
}

/// The two lowest ion curves, 1sσ_g (`g`) and 2pσ_u (`u`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IonCurves {
    pub g: Curve,
    pub u: Curve,
}

impl IonCurves {
    pub fn eval(&self, ch: Channel, r: f64) -> f64 {
        match ch {
            Channel::G => self.g.eval(r),
            Channel::U => self.u.eval(r),
        }
    }

    /// Checks `V_u ≥ V_g`, asymptotic degeneracy at the last point, and a
    /// single minimum of `V_g` on the grid.
    pub fn check(&self, grid: &Grid1D) -> Result<()> {
        let vg = self.g.sample(grid);
        let vu = self.u.sample(grid);
        if let Some(i) = (0..grid.n).find(|&i| vu[i] < vg[i] - 1e-12) {
            return Err(Error::invalid(format!("V_u < V_g at R = {}", grid.point(i))));
        }
        let gap = vu[grid.n - 1] - vg[grid.n - 1];
        if gap >= 1e-4 {
            return Err(Error::invalid(format!("ion curves not degenerate at R = {}: gap {gap} hartree", grid.max())));
        }
        let minima = (1..grid.n - 1).filter(|&i| vg[i] < vg[i - 1] && vg[i] <= vg[i + 1]).count();
        if minima != 1 {
            return Err(Error::invalid(format!("V_g has {minima} interior minima on the grid")));
        }
        Ok(())
    }
}

/// D₂⁺ 1sσ_g as a Morse curve (De = 2.79 eV, R_e = 2.0 a.u.) and 2pσ_u as
/// its anti-Morse partner. The g-u splitting `4De·e^{-α(R-R0)}` is 17.2 eV at
/// R = 1.4 and one 515 nm photon near R = 4.1.
pub fn ion_curves_builtin() -> IonCurves {
    let (depth, alpha, r0) = (0.1026, 0.72, 2.0);
    IonCurves { g: Curve::Morse { depth, alpha, r0 }, u: Curve::AntiMorse { depth, alpha, r0 } }
}

/// Neutral D₂ ground-state curve (X¹Σ_g⁺) as a Morse fit: De = 4.75 eV,
/// R_e = 1.401 a.u., ω_e ≈ 3116 cm⁻¹ for the deuteron mass.
pub fn neutral_curve_builtin() -> Curve {
    Curve::Morse { depth: 0.1745, alpha: 1.028, r0: 1.401 }
}

/// `d(R) = (R/2)·s(R)` with `s(R) = 1 - (1 - s0)·exp(-R²/w²)`, or a table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TransitionDipole {
    Switched { s0: f64, width: f64 },
    Table(Table),
}

impl Default for TransitionDipole {
    fn default() -> Self {
        TransitionDipole::Switched { s0: 0.8, width: 2.0 }
    }
}

impl TransitionDipole {
    pub fn eval(&self, r: f64) -> f64 {
        match self {
            TransitionDipole::Switched { s0, width } => 0.5 * r * (1.0 - (1.0 - s0) * (-(r * r) / (width * width)).exp()),
            TransitionDipole::Table(t) => t.eval(r),
        }
    }

    pub fn sample(&self, grid: &Grid1D) -> Vec<f64> {
        grid.points().iter().map(|&r| self.eval(r)).collect()
    }
}

/// Electron grid used to evaluate bound-state energies: one axis (x) in the
/// 1D-electron model, two (x, y) in the 2D model.
pub fn electron_hamiltonian(params: &SoftCoreParams, ch: Channel, r: f64, axes: &[Grid1D]) -> Result<Hamiltonian> {
    if axes.is_empty() || axes.len() > 2 {
        return Err(Error::invalid("electron grid must have one or two axes"));
    }
    let pot = ComplexField::from_fn(axes.to_vec(), |c| {
        let y = if c.len() > 1 { c[1] } else { 0.0 };
        Complex64::new(params.v_int_unchecked(ch, c[0], y, r), 0.0)
    })?;
    Hamiltonian::single(axes.to_vec(), vec![1.0; axes.len()], pot.data.iter().map(|z| z.re).collect())
}

fn electron_guess(axes: &[Grid1D]) -> Result<ComplexField> {
    ComplexField::from_fn(axes.to_vec(), |c| Complex64::new((-c.iter().map(|x| x * x).sum::<f64>().sqrt()).exp(), 0.0))
}

/// Ground-state electronic energy of one channel at fixed R, by relaxation.
pub fn electronic_ground_energy(params: &SoftCoreParams, ch: Channel, r: f64, axes: &[Grid1D], opts: &RelaxOptions) -> Result<f64> {
    let so = SplitOperator::new(electron_hamiltonian(params, ch, r, axes)?)?;
    let mut st = TwoComponentState::from_g(electron_guess(axes)?, 0.0);
    so.relax(&mut st, opts)
}

/// Settings for [`calibrate`].
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSpec {
    pub target_ip_g_ev: f64,
    pub target_ip_u_ev: f64,
    pub r_eq: f64,
    pub axes: Vec<Grid1D>,
    pub initial: SoftCoreParams,
    /// Bisection bracket on the smoothing parameter.
    pub bracket: (f64, f64),
    /// Accepted binding-energy mismatch [hartree].
    pub tol: f64,
    pub relax: RelaxOptions,
    pub profile: Option<ProfileSpec>,
}

/// Request for an R-dependent gerade smoothing: at every node the binding
/// energy is set to `IP_g + ΔV_g(R) - ΔV_X(R)` (differences taken from
/// `r_eq`), so that the adiabatic neutral curve `E_el(R) + V_g(R)` follows
/// the neutral curve up to a constant.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileSpec {
    pub curves: IonCurves,
    pub neutral: Curve,
    pub nodes: Vec<f64>,
}

impl ProfileSpec {
    pub fn builtin() -> Self {
        ProfileSpec { curves: ion_curves_builtin(), neutral: neutral_curve_builtin(), nodes: (0..=25).map(|i| 0.5 + 0.1 * i as f64).collect() }
    }
}

impl CalibrationSpec {
    pub fn new(target_ip_g_ev: f64, target_ip_u_ev: f64, axes: Vec<Grid1D>) -> Self {
        CalibrationSpec {
            target_ip_g_ev,
            target_ip_u_ev,
            r_eq: 1.4,
            axes,
            initial: SoftCoreParams { a_g: 1.0, a_u: 1.0, charge: 0.5, a_g_profile: None },
            bracket: (0.02, 20.0),
            tol: 1e-4,
            relax: RelaxOptions { dtau: 0.02, tol: 1e-11, check_every: 50, max_steps: 400_000 },
            profile: None,
        }
    }
}

/// Default u-channel binding energy: the u-channel ground level sits one
/// X→B vertical excitation (12.75 eV) above the neutral ground state at
/// `r_eq`, i.e. `IP_u = IP_g + [V_u - V_g](r_eq) - 12.75 eV`.
pub fn default_ip_u_ev(ip_g_ev: f64, curves: &IonCurves, r_eq: f64) -> f64 {
    ip_g_ev + units::au_to_ev(curves.u.eval(r_eq) - curves.g.eval(r_eq)) - 12.75
}

/// Smoothing parameters such that the electronic binding energy of each
/// channel at `r_eq` equals the target ionization potential. The binding
/// energy decreases monotonically with the smoothing, so each channel is a
/// bisection on the fixed bracket.
pub fn calibrate(spec: &CalibrationSpec) -> Result<SoftCoreParams> {
    for ip in [spec.target_ip_g_ev, spec.target_ip_u_ev] {
        if !(ip > 0.0) || !ip.is_finite() {
            return Err(Error::invalid(format!("target ionization potential must be positive, got {ip}")));
        }
    }
    spec.initial.validate()?;
    let mut params = spec.initial.clone();
    for (ch, ip_ev) in [(Channel::G, spec.target_ip_g_ev), (Channel::U, spec.target_ip_u_ev)] {
        let guess = match ch {
            Channel::G => params.a_g,
            Channel::U => params.a_u,
        };
        let a = solve_smoothing(&params, ch, spec.r_eq, units::ev_to_au(ip_ev), guess, spec)?;
        if a != guess {
            params = params.with_smoothing(ch, a);
        }
        log::info!("calibrated {ch:?}: a = {a:.6}");
    }
    if let Some(prof) = &spec.profile {
        if params.a_g_profile.is_none() {
            let base = SoftCoreParams { a_g_profile: None, ..params.clone() };
            let (vg0, vx0) = (prof.curves.g.eval(spec.r_eq), prof.neutral.eval(spec.r_eq));
            let mut values = Vec::with_capacity(prof.nodes.len());
            let mut guess = params.a_g;
            for &r in &prof.nodes {
                let ip = units::ev_to_au(spec.target_ip_g_ev) + (prof.curves.g.eval(r) - vg0) - (prof.neutral.eval(r) - vx0);
                if !(ip > 0.0) {
                    return Err(Error::Calibration(format!("non-positive binding target at R = {r}")));
                }
                guess = solve_smoothing(&base, Channel::G, r, ip, guess, spec)?;
                values.push(guess);
            }
            params.a_g_profile = Some(Table::new(prof.nodes.clone(), values)?);
        }
    }
    Ok(params)
}

fn solve_smoothing(params: &SoftCoreParams, ch: Channel, r: f64, binding: f64, guess: f64, spec: &CalibrationSpec) -> Result<f64> {
    let f = |a: f64| -> Result<f64> { Ok(electronic_ground_energy(&params.with_smoothing(ch, a), ch, r, &spec.axes, &spec.relax)? + binding) };
    if f(guess)?.abs() < spec.tol {
        return Ok(guess);
    }
    let (mut lo, mut hi) = spec.bracket;
    let (f_lo, f_hi) = (f(lo)?, f(hi)?);
    if !(f_lo < 0.0 && f_hi > 0.0) {
        return Err(Error::Calibration(format!(
            "no root for channel {ch:?} at R = {r} in a ∈ [{lo}, {hi}]: E - target = {f_lo:.4e}, {f_hi:.4e} hartree"
        )));
    }
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..100 {
        mid = 0.5 * (lo + hi);
        let fm = f(mid)?;
        if fm.abs() < spec.tol {
            break;
        }
        if fm < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(mid)
}
