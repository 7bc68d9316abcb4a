//! Run configuration: TOML text with one section per stage. Every physical
//! quantity carries its unit in the key name (`_au`, `_ev`, `_nm`, `_fs`,
//! `_wcm2`, `_rad`, `_cycles`).

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{AngleCuts, CorrelationOptions, EeWeighting};
use crate::dissoc::{ElectronDim, ModelConfig};
use crate::error::{Error, Result};
use crate::grid::Grid1D;
use crate::holography::{HoloConfig, DEFAULT_IP_EV};
use crate::ion1d::IonConfig;
use crate::laser::Pulse;
use crate::potentials::{self, CalibrationSpec, Curve, IonCurves, ProfileSpec, SoftCoreParams, Table, TransitionDipole};
use crate::propagator::MaskSpec;
use crate::qubits::Sector;
use crate::units;

pub const SCHEMA_VERSION: u32 = 1;

const UNIT_SUFFIXES: [&str; 8] = ["au", "ev", "nm", "fs", "wcm2", "rad", "cycles", "deg"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default = "default_output_dir")]
    pub output_dir: String,
    /// Seed for randomized checks only; the simulation itself is deterministic.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub laser: LaserSection,
    #[serde(default)]
    pub grids: GridSection,
    #[serde(default)]
    pub potentials: PotentialSection,
    #[serde(default)]
    pub dissoc: DissocSection,
    #[serde(default)]
    pub ion1d: Ion1dSection,
    #[serde(default)]
    pub holo: HoloSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
}

fn default_output_dir() -> String {
    "out".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LaserSection {
    pub intensity_wcm2: f64,
    pub wavelength_nm: f64,
    /// Sin² support in optical cycles; ignored when `fwhm_fs` is given.
    pub duration_cycles: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fwhm_fs: Option<f64>,
    pub cep_rad: f64,
}

impl Default for LaserSection {
    fn default() -> Self {
        LaserSection { intensity_wcm2: 7.7e13, wavelength_nm: 515.0, duration_cycles: 20.0, fwhm_fs: None, cep_rad: 0.0 }
    }
}

impl LaserSection {
    pub fn pulse(&self) -> Result<Pulse> {
        match self.fwhm_fs {
            Some(f) => Pulse::new(self.intensity_wcm2, self.wavelength_nm, f, self.cep_rad),
            None => Pulse::from_cycles(self.intensity_wcm2, self.wavelength_nm, self.duration_cycles, self.cep_rad),
        }
    }
}

/// Main-grid overrides; unset entries take the defaults of the electron mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub electron_dim: ElectronDim,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_points: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x_step_au: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y_points: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y_step_au: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_min_au: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_points: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_step_au: Option<f64>,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            electron_dim: ElectronDim::One,
            x_points: None,
            x_step_au: None,
            y_points: None,
            y_step_au: None,
            r_min_au: None,
            r_points: None,
            r_step_au: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PotentialSection {
    pub ip_g_ev: f64,
    /// Defaults to one X→B excitation above the neutral ground state.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ip_u_ev: Option<f64>,
    pub r_eq_au: f64,
    pub charge: f64,
    /// R-dependent gerade smoothing that makes the adiabatic neutral curve
    /// follow the neutral Morse curve.
    pub smoothing_profile: bool,
    /// Fixed smoothing; skips calibration when both are set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a_g_au: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a_u_au: Option<f64>,
    /// Two-column `R V` tables [a.u.] replacing the builtin curves.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g_curve_file: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u_curve_file: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dipole_file: Option<String>,
}

impl Default for PotentialSection {
    fn default() -> Self {
        PotentialSection {
            ip_g_ev: DEFAULT_IP_EV,
            ip_u_ev: None,
            r_eq_au: 1.4,
            charge: 0.5,
            smoothing_profile: true,
            a_g_au: None,
            a_u_au: None,
            g_curve_file: None,
            u_curve_file: None,
            dipole_file: None,
        }
    }
}

impl PotentialSection {
    pub fn curves(&self) -> Result<IonCurves> {
        let mut c = potentials::ion_curves_builtin();
        if let Some(p) = &self.g_curve_file {
            c.g = Curve::Table(Table::load(Path::new(p))?);
        }
        if let Some(p) = &self.u_curve_file {
            c.u = Curve::Table(Table::load(Path::new(p))?);
        }
        Ok(c)
    }

    pub fn dipole(&self) -> Result<TransitionDipole> {
        Ok(match &self.dipole_file {
            Some(p) => TransitionDipole::Table(Table::load(Path::new(p))?),
            None => TransitionDipole::default(),
        })
    }

    pub fn ip_u_ev(&self) -> Result<f64> {
        Ok(match self.ip_u_ev {
            Some(v) => v,
            None => potentials::default_ip_u_ev(self.ip_g_ev, &self.curves()?, self.r_eq_au),
        })
    }

    /// Calibration request on the given electron axes.
    pub fn calibration(&self, axes: Vec<Grid1D>) -> Result<CalibrationSpec> {
        let curves = self.curves()?;
        let mut spec = CalibrationSpec::new(self.ip_g_ev, self.ip_u_ev()?, axes);
        spec.r_eq = self.r_eq_au;
        spec.initial.charge = self.charge;
        if self.smoothing_profile {
            spec.profile = Some(ProfileSpec { curves, ..ProfileSpec::builtin() });
        }
        Ok(spec)
    }

    /// Soft-core parameters: the fixed values when both are given,
    /// otherwise calibrated on `axes`.
    pub fn soft_core(&self, axes: Vec<Grid1D>) -> Result<SoftCoreParams> {
        match (self.a_g_au, self.a_u_au) {
            (Some(a_g), Some(a_u)) => {
                let p = SoftCoreParams { a_g, a_u, charge: self.charge, a_g_profile: None };
                p.validate()?;
                Ok(p)
            }
            _ => potentials::calibrate(&self.calibration(axes)?),
        }
    }
}

/// Propagation overrides; unset entries take the electron-mode defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DissocSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt_au: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mask_every: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub acc_substeps: Option<usize>,
    /// Field-free tail after the pulse; defaults to twice the pulse length.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tail_au: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub electron_tail_au: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tail_dt_au: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_max_au: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_pad: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub acc_r_points: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub acc_absorber_width_au: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_absorber_start_au: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_absorber_width_au: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mask_inner_au: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mask_width_au: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mask_power: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_vib: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vib_r_max_au: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ker_max_ev: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reduced_mass_au: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ion1dSection {
    pub intensity_wcm2: f64,
    pub duration_cycles: f64,
    pub r_min_au: f64,
    pub r_points: usize,
    pub r_step_au: f64,
    pub dt_au: f64,
    pub tail_au: f64,
    pub n_vib: usize,
    pub ker_max_ev: f64,
    pub yield_threshold: f64,
    pub t_ion_min_cycles: f64,
    pub t_ion_max_cycles: f64,
    pub t_ion_step_cycles: f64,
}

impl Default for Ion1dSection {
    fn default() -> Self {
        let c = IonConfig::default_scan();
        let half = 0.5 * c.pulse.cycles();
        Ion1dSection {
            intensity_wcm2: c.pulse.intensity_wcm2,
            duration_cycles: c.pulse.cycles(),
            r_min_au: c.r.min,
            r_points: c.r.n,
            r_step_au: c.r.step,
            dt_au: c.dt,
            tail_au: c.tail,
            n_vib: c.n_vib,
            ker_max_ev: c.ker_max_ev,
            yield_threshold: c.yield_threshold,
            t_ion_min_cycles: half - 1.0,
            t_ion_max_cycles: half + 1.0,
            t_ion_step_cycles: 0.125,
        }
    }
}

impl Ion1dSection {
    pub fn t_ion_cycles(&self) -> Vec<f64> {
        let n = ((self.t_ion_max_cycles - self.t_ion_min_cycles) / self.t_ion_step_cycles + 1e-9).floor() as usize + 1;
        (0..n).map(|i| self.t_ion_min_cycles + i as f64 * self.t_ion_step_cycles).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HoloSection {
    pub d_au: f64,
    pub n_min: u32,
    pub n_max: u32,
    /// Comb threshold: orders sit at `n ħω - ip_ev - U_P`.
    pub ip_ev: f64,
    /// Amplitude of order `n_min + k` is `exp(-amplitude_decay·k)`.
    pub amplitude_decay: f64,
    pub shell_width_ev: f64,
    pub sigma_perp_au: f64,
    pub parity: Sector,
    pub single_source: bool,
    pub p_max_au: f64,
    pub p_step_au: f64,
}

impl Default for HoloSection {
    fn default() -> Self {
        let h = HoloConfig::default();
        HoloSection {
            d_au: h.d,
            n_min: h.n_min,
            n_max: h.n_max,
            ip_ev: DEFAULT_IP_EV,
            amplitude_decay: 0.5,
            shell_width_ev: units::au_to_ev(h.shell_width),
            sigma_perp_au: h.sigma_perp,
            parity: h.parity,
            single_source: false,
            p_max_au: -h.px.min,
            p_step_au: h.px.step,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSection {
    pub ker_bin_ev: f64,
    pub ee_bin_ev: f64,
    pub cone_rad: f64,
    pub weighting: EeWeighting,
    pub rel_threshold: f64,
    pub ker_window_ev: [f64; 2],
    /// Kernel width of the ATI energy spectra.
    pub ati_sigma_ev: f64,
    pub separation_min_au: f64,
    pub separation_max_au: f64,
    pub separation_step_au: f64,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        let c = CorrelationOptions::default();
        AnalysisSection {
            ker_bin_ev: c.ker_bin_ev,
            ee_bin_ev: c.ee_bin_ev,
            cone_rad: c.cuts.cone,
            weighting: c.weighting,
            rel_threshold: c.rel_threshold,
            ker_window_ev: [0.0, 10.0],
            ati_sigma_ev: 0.25,
            separation_min_au: 10.0,
            separation_max_au: 100.0,
            separation_step_au: 0.5,
        }
    }
}

impl AnalysisSection {
    pub fn correlation_options(&self) -> CorrelationOptions {
        CorrelationOptions {
            ker_bin_ev: self.ker_bin_ev,
            ee_bin_ev: self.ee_bin_ev,
            cuts: AngleCuts { cone: self.cone_rad },
            weighting: self.weighting,
            rel_threshold: self.rel_threshold,
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(format!("`{name}` must be positive, got {v}"), None))
    }
}

fn nonzero(name: &str, v: usize) -> Result<()> {
    if v > 0 {
        Ok(())
    } else {
        Err(Error::config(format!("`{name}` must be positive"), None))
    }
}

impl RunConfig {
    /// Defaults everywhere.
    pub fn minimal() -> Self {
        RunConfig {
            schema_version: SCHEMA_VERSION,
            output_dir: default_output_dir(),
            seed: 0,
            laser: LaserSection::default(),
            grids: GridSection::default(),
            potentials: PotentialSection::default(),
            dissoc: DissocSection::default(),
            ion1d: Ion1dSection::default(),
            holo: HoloSection::default(),
            analysis: AnalysisSection::default(),
        }
    }

    /// Range checks that serde cannot express. Errors name the key.
    pub fn check(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::config(format!("unsupported schema_version {} (expected {SCHEMA_VERSION})", self.schema_version), None));
        }
        let l = &self.laser;
        positive("laser.wavelength_nm", l.wavelength_nm)?;
        positive("laser.duration_cycles", l.duration_cycles)?;
        if let Some(f) = l.fwhm_fs {
            positive("laser.fwhm_fs", f)?;
        }
        if !(l.intensity_wcm2 >= 0.0) {
            return Err(Error::config("`laser.intensity_wcm2` must be non-negative", None));
        }
        let g = &self.grids;
        for (k, v) in [("grids.x_points", g.x_points), ("grids.y_points", g.y_points), ("grids.r_points", g.r_points)] {
            if let Some(v) = v {
                nonzero(k, v)?;
            }
        }
        for (k, v) in
            [("grids.x_step_au", g.x_step_au), ("grids.y_step_au", g.y_step_au), ("grids.r_step_au", g.r_step_au), ("grids.r_min_au", g.r_min_au)]
        {
            if let Some(v) = v {
                positive(k, v)?;
            }
        }
        let d = &self.dissoc;
        for (k, v) in [
            ("dissoc.mask_every", d.mask_every),
            ("dissoc.acc_substeps", d.acc_substeps),
            ("dissoc.n_pad", d.n_pad),
            ("dissoc.acc_r_points", d.acc_r_points),
        ] {
            if let Some(v) = v {
                nonzero(k, v)?;
            }
        }
        for (k, v) in [
            ("dissoc.dt_au", d.dt_au),
            ("dissoc.tail_dt_au", d.tail_dt_au),
            ("dissoc.p_max_au", d.p_max_au),
            ("dissoc.reduced_mass_au", d.reduced_mass_au),
        ] {
            if let Some(v) = v {
                positive(k, v)?;
            }
        }
        let i = &self.ion1d;
        nonzero("ion1d.r_points", i.r_points)?;
        positive("ion1d.r_step_au", i.r_step_au)?;
        positive("ion1d.dt_au", i.dt_au)?;
        positive("ion1d.duration_cycles", i.duration_cycles)?;
        positive("ion1d.t_ion_step_cycles", i.t_ion_step_cycles)?;
        if i.t_ion_max_cycles < i.t_ion_min_cycles {
            return Err(Error::config("`ion1d.t_ion_max_cycles` is below `ion1d.t_ion_min_cycles`", None));
        }
        let h = &self.holo;
        positive("holo.d_au", h.d_au)?;
        positive("holo.p_step_au", h.p_step_au)?;
        positive("holo.p_max_au", h.p_max_au)?;
        let a = &self.analysis;
        positive("analysis.ker_bin_ev", a.ker_bin_ev)?;
        positive("analysis.ee_bin_ev", a.ee_bin_ev)?;
        positive("analysis.ati_sigma_ev", a.ati_sigma_ev)?;
        positive("analysis.separation_step_au", a.separation_step_au)?;
        if !(a.cone_rad > 0.0 && a.cone_rad <= std::f64::consts::FRAC_PI_2) {
            return Err(Error::config("`analysis.cone_rad` must lie in (0, π/2]", None));
        }
        if !(a.ker_window_ev[1] > a.ker_window_ev[0]) {
            return Err(Error::config("`analysis.ker_window_ev` must be increasing", None));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn pulse(&self) -> Result<Pulse> {
        self.laser.pulse()
    }

    /// Electron axes of the main grid, before calibration.
    pub fn electron_axes(&self) -> Result<Vec<Grid1D>> {
        let base = self.base_model(SoftCoreParams::new(1.0, 1.0)?)?;
        let mut v = vec![base.x];
        v.extend(base.y);
        Ok(v)
    }

    fn base_model(&self, sc: SoftCoreParams) -> Result<ModelConfig> {
        let pulse = self.pulse()?;
        Ok(match self.grids.electron_dim {
            ElectronDim::One => ModelConfig::desk_1d(pulse, sc),
            ElectronDim::Two => ModelConfig::desk_2d(pulse, sc),
        })
    }

    /// Model configuration with the given soft-core parameters.
    pub fn model(&self, soft_core: SoftCoreParams) -> Result<ModelConfig> {
        let mut m = self.base_model(soft_core)?;
        let g = &self.grids;
        let x = m.x;
        m.x = Grid1D::centered(g.x_points.unwrap_or(x.n), g.x_step_au.unwrap_or(x.step))?;
        if let Some(y) = m.y {
            m.y = Some(Grid1D::centered(g.y_points.unwrap_or(y.n), g.y_step_au.unwrap_or(y.step))?);
        } else if g.y_points.is_some() || g.y_step_au.is_some() {
            return Err(Error::config("`grids.y_*` keys need electron_dim = \"2d\"", None));
        }
        m.r = Grid1D::new(g.r_min_au.unwrap_or(m.r.min), g.r_points.unwrap_or(m.r.n), g.r_step_au.unwrap_or(m.r.step))?;
        m.curves = self.potentials.curves()?;
        m.dipole = self.potentials.dipole()?;
        let d = &self.dissoc;
        let n = &mut m.numerics;
        macro_rules! set {
            ($($src:ident => $dst:ident),*) => { $(if let Some(v) = d.$src { n.$dst = v; })* };
        }
        set!(dt_au => dt, mask_every => mask_every, acc_substeps => acc_substeps, tail_au => tail, electron_tail_au => electron_tail,
             tail_dt_au => tail_dt, p_max_au => p_max, n_pad => n_pad, acc_r_points => acc_r_points,
             acc_absorber_width_au => acc_absorber_width, r_absorber_start_au => r_absorber_start,
             r_absorber_width_au => r_absorber_width, n_vib => n_vib, vib_r_max_au => vib_r_max, ker_max_ev => ker_max_ev);
        if d.tail_au.is_some() && d.electron_tail_au.is_none() {
            n.electron_tail = n.electron_tail.min(n.tail);
        }
        if let Some(v) = d.mask_inner_au {
            m.mask.inner_radius = v;
        }
        if let Some(v) = d.mask_width_au {
            m.mask.width = v;
        }
        if let Some(v) = d.mask_power {
            m.mask.power = v;
        }
        if let Some(v) = d.reduced_mass_au {
            m.reduced_mass = v;
        }
        m.mask = MaskSpec { axes: m.mask.axes.clone(), ..m.mask };
        m.validate().map_err(|e| Error::config(e.to_string(), None))?;
        Ok(m)
    }

    pub fn ion_config(&self) -> Result<IonConfig> {
        let i = &self.ion1d;
        let pulse = Pulse::from_cycles(i.intensity_wcm2, self.laser.wavelength_nm, i.duration_cycles, self.laser.cep_rad)?;
        let mut c = IonConfig::default_scan();
        c.pulse = pulse;
        c.curves = self.potentials.curves()?;
        c.dipole = self.potentials.dipole()?;
        c.r = Grid1D::new(i.r_min_au, i.r_points, i.r_step_au)?;
        c.dt = i.dt_au;
        c.tail = i.tail_au;
        c.n_vib = i.n_vib;
        c.ker_max_ev = i.ker_max_ev;
        c.yield_threshold = i.yield_threshold;
        if let Some(m) = self.dissoc.reduced_mass_au {
            c.reduced_mass = m;
        }
        c.validate().map_err(|e| Error::config(e.to_string(), None))?;
        Ok(c)
    }

    pub fn holo_config(&self) -> Result<HoloConfig> {
        let h = &self.holo;
        let wl = self.laser.wavelength_nm;
        let up = units::ponderomotive_energy_ev(self.laser.intensity_wcm2, wl)?;
        let n = ((2.0 * h.p_max_au / h.p_step_au).round() as usize) + 1;
        let grid = Grid1D::new(-h.p_max_au, n, h.p_step_au)?;
        let count = h.n_max.saturating_sub(h.n_min) + 1;
        let c = HoloConfig {
            d: h.d_au,
            n_min: h.n_min,
            n_max: h.n_max,
            photon_energy: units::ev_to_au(units::photon_energy(wl)?),
            e_offset: -units::ev_to_au(h.ip_ev + up),
            amplitudes: (0..count).map(|k| (-h.amplitude_decay * k as f64).exp()).collect(),
            shell_width: units::ev_to_au(h.shell_width_ev),
            sigma_perp: h.sigma_perp_au,
            parity: h.parity,
            single_source: h.single_source,
            px: grid,
            py: grid,
        };
        c.validate().map_err(|e| Error::config(e.to_string(), None))?;
        Ok(c)
    }
}

/// 1-based line of `key` inside `[section]` (top level when `section` is
/// empty).
pub fn locate(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if let Some(h) = t.strip_prefix('[') {
            current = h.trim_end_matches(']').trim().to_string();
            if key.is_empty() && current == section {
                return Some(i + 1);
            }
            continue;
        }
        let Some((k, _)) = t.split_once('=') else { continue };
        let k = k.trim().trim_matches('"');
        let (sec, k) = match k.rsplit_once('.') {
            Some((s, k)) if current.is_empty() => (s.to_string(), k),
            _ => (current.clone(), k),
        };
        if sec == section && k == key {
            return Some(i + 1);
        }
    }
    None
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn stem(key: &str) -> &str {
    match key.rsplit_once('_') {
        Some((s, suffix)) if UNIT_SUFFIXES.contains(&suffix) => s,
        _ => key,
    }
}

/// Unknown keys and unit-suffix mismatches, checked against the keys of
/// the fully populated default so the message can name the right key.
fn check_keys(text: &str, table: &toml::Table) -> Result<()> {
    let mut reference = RunConfig::minimal();
    reference.laser.fwhm_fs = Some(1.0);
    reference.potentials = PotentialSection {
        ip_u_ev: Some(1.0),
        a_g_au: Some(1.0),
        a_u_au: Some(1.0),
        g_curve_file: Some(String::new()),
        u_curve_file: Some(String::new()),
        dipole_file: Some(String::new()),
        ..PotentialSection::default()
    };
    let known = toml::Table::try_from(&reference).expect("config serializes");
    let full_grids = toml::Table::try_from(GridSectionFull::default()).expect("static");
    let full_dissoc = toml::Table::try_from(DissocSectionFull::default()).expect("static");
    for (k, v) in table {
        let Some(kv) = known.get(k) else {
            return Err(unknown(text, "", k, known.keys()));
        };
        if let (toml::Value::Table(sub), toml::Value::Table(ksub)) = (v, kv) {
            let ksub = match k.as_str() {
                "grids" => &full_grids,
                "dissoc" => &full_dissoc,
                _ => ksub,
            };
            for sk in sub.keys() {
                if !ksub.contains_key(sk) {
                    return Err(unknown(text, k, sk, ksub.keys()));
                }
            }
        }
    }
    Ok(())
}

fn unknown<'a>(text: &str, section: &str, key: &str, known: impl Iterator<Item = &'a String>) -> Error {
    let line = locate(text, section, key);
    let full = if section.is_empty() { key.to_string() } else { format!("{section}.{key}") };
    let known: Vec<&String> = known.collect();
    if let Some(m) = known.iter().find(|k| stem(k) == stem(key) && k.as_str() != key) {
        return Error::config(format!("unit suffix mismatch for `{full}`: expected `{m}`"), line);
    }
    Error::config(format!("unknown key `{full}`"), line)
}

/// Key lists of the optional-field sections with every field present.
#[derive(Serialize, Default)]
struct GridSectionFull {
    electron_dim: String,
    x_points: usize,
    x_step_au: f64,
    y_points: usize,
    y_step_au: f64,
    r_min_au: f64,
    r_points: usize,
    r_step_au: f64,
}

#[derive(Serialize, Default)]
struct DissocSectionFull {
    dt_au: f64,
    mask_every: usize,
    acc_substeps: usize,
    tail_au: f64,
    electron_tail_au: f64,
    tail_dt_au: f64,
    p_max_au: f64,
    n_pad: usize,
    acc_r_points: usize,
    acc_absorber_width_au: f64,
    r_absorber_start_au: f64,
    r_absorber_width_au: f64,
    mask_inner_au: f64,
    mask_width_au: f64,
    mask_power: f64,
    n_vib: usize,
    vib_r_max_au: f64,
    ker_max_ev: f64,
    reduced_mass_au: f64,
}

/// Applies `key.path=value` overrides to a parsed table. Values are read as
/// TOML and fall back to a bare string.
pub fn apply_overrides(table: &mut toml::Table, overrides: &[String]) -> Result<()> {
    for o in overrides {
        let (path, raw) = o.split_once('=').ok_or_else(|| Error::config(format!("override `{o}` is not key=value"), None))?;
        let value: toml::Value = match toml::from_str::<toml::Table>(&format!("v = {}", raw.trim())) {
            Ok(mut t) => t.remove("v").expect("parsed key"),
            Err(_) => toml::Value::String(raw.trim().to_string()),
        };
        let parts: Vec<&str> = path.trim().split('.').collect();
        let mut node = &mut *table;
        for p in &parts[..parts.len() - 1] {
            let entry = node.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
            node = entry.as_table_mut().ok_or_else(|| Error::config(format!("override path `{path}` runs through a value"), None))?;
        }
        node.insert(parts[parts.len() - 1].to_string(), value);
    }
    Ok(())
}

/// Parses, applies overrides and validates. Errors carry the line of the
/// offending key when it can be found in `text`.
pub fn parse_config_with(text: &str, overrides: &[String]) -> Result<RunConfig> {
    let mut table: toml::Table = toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| line_of_offset(text, s.start));
        let near = e.span().and_then(|s| text.get(s)).map(str::trim).filter(|s| !s.is_empty() && !s.contains('\n'));
        let msg = match near {
            Some(n) => format!("{} `{n}`", e.message().trim()),
            None => e.message().trim().to_string(),
        };
        Error::config(msg, line)
    })?;
    apply_overrides(&mut table, overrides)?;
    if !table.contains_key("schema_version") {
        return Err(Error::config("missing required key `schema_version`", None));
    }
    check_keys(text, &table)?;
    let cfg: RunConfig = table.try_into().map_err(|e: toml::de::Error| {
        let msg = e.message().trim().to_string();
        Error::config(msg, None)
    })?;
    cfg.check().map_err(|e| match e {
        Error::Config { message, .. } => {
            let line = message.split('`').nth(1).and_then(|k| k.rsplit_once('.').map_or(locate(text, "", k), |(s, k)| locate(text, s, k)));
            Error::config(message, line)
        }
        other => other,
    })?;
    Ok(cfg)
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    parse_config_with(text, &[])
}

pub fn load_config(path: &Path, overrides: &[String]) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_with(&text, overrides)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(e: &Error) -> Option<usize> {
        match e {
            Error::Config { line, .. } => *line,
            _ => None,
        }
    }

    #[test]
    fn minimal_config_fills_defaults() {
        let c = parse_config("schema_version = 1\n").unwrap();
        assert_eq!(c, RunConfig::minimal());
        assert_eq!(c.laser.intensity_wcm2, 7.7e13);
        assert_eq!(c.grids.electron_dim, ElectronDim::One);
        let m = c.model(SoftCoreParams::new(1.0, 1.0).unwrap()).unwrap();
        assert_eq!(m.x.n, 256);
    }

    #[test]
    fn missing_schema_version() {
        assert!(parse_config("[laser]\nintensity_wcm2 = 1e14\n").is_err());
        assert!(parse_config("schema_version = 7\n").is_err());
    }

    #[test]
    fn duplicate_key_names_key_and_line() {
        let text = "schema_version = 1\n[laser]\nintensity_wcm2 = 1e14\nintensity_wcm2 = 2e14\n";
        let e = parse_config(text).unwrap_err();
        assert!(e.to_string().contains("intensity_wcm2"), "{e}");
        assert_eq!(line(&e), Some(4));
    }

    #[test]
    fn unknown_key_and_unit_mismatch() {
        let e = parse_config("schema_version = 1\n\n[grids]\nz_points = 3\n").unwrap_err();
        assert!(e.to_string().contains("unknown key `grids.z_points`"), "{e}");
        assert_eq!(line(&e), Some(4));
        let e = parse_config("schema_version = 1\n[laser]\nwavelength_au = 9.7\n").unwrap_err();
        assert!(e.to_string().contains("expected `wavelength_nm`"), "{e}");
        assert_eq!(line(&e), Some(3));
        let e = parse_config("schema_version = 1\n[laser]\nintensity = 1e14\n").unwrap_err();
        assert!(e.to_string().contains("intensity_wcm2"), "{e}");
        let e = parse_config("schema_version = 1\nbogus = 3\n").unwrap_err();
        assert_eq!(line(&e), Some(2));
    }

    #[test]
    fn non_positive_grid_sizes() {
        let e = parse_config("schema_version = 1\n[grids]\nx_points = 0\n").unwrap_err();
        assert_eq!(line(&e), Some(3), "{e}");
        assert!(parse_config("schema_version = 1\n[ion1d]\nr_step_au = -0.1\n").is_err());
        assert!(parse_config("schema_version = 1\n[dissoc]\ndt_au = 0.0\n").is_err());
    }

    #[test]
    fn round_trip_is_structurally_equal() {
        let text = "schema_version = 1\nseed = 9\n[laser]\nintensity_wcm2 = 9.74e13\nfwhm_fs = 52.5\n[grids]\nelectron_dim = \"2d\"\nx_points = 64\n[dissoc]\nmask_every = 10\n[holo]\nparity = \"odd\"\n[analysis]\nweighting = \"flat\"\nker_window_ev = [1.0, 2.0]\n";
        let c = parse_config(text).unwrap();
        let again = parse_config(&c.to_toml()).unwrap();
        assert_eq!(c, again);
        assert_eq!(c.hash(), again.hash());
        assert_ne!(c.hash(), RunConfig::minimal().hash());
    }

    #[test]
    fn overrides_follow_dot_paths() {
        let c = parse_config_with(
            "schema_version = 1\n",
            &["laser.intensity_wcm2=1e14".into(), "grids.electron_dim=2d".into(), "output_dir=runs/a".into()],
        )
        .unwrap();
        assert_eq!(c.laser.intensity_wcm2, 1e14);
        assert_eq!(c.grids.electron_dim, ElectronDim::Two);
        assert_eq!(c.output_dir, "runs/a");
        assert!(parse_config_with("schema_version = 1\n", &["laser.nope=1".into()]).is_err());
        assert!(parse_config_with("schema_version = 1\n", &["noequals".into()]).is_err());
    }

    #[test]
    fn derived_module_configs() {
        let c = RunConfig::minimal();
        let h = c.holo_config().unwrap();
        let d = HoloConfig::default();
        assert_eq!(h.px.n, d.px.n);
        assert!((h.e_offset - d.e_offset).abs() < 1e-12);
        let i = c.ion_config().unwrap();
        assert!((i.pulse.intensity_wcm2 - 9.74e13).abs() < 1.0);
        let t = c.ion1d.t_ion_cycles();
        assert_eq!(t.len(), 17);
        let mut two = RunConfig::minimal();
        two.grids.electron_dim = ElectronDim::Two;
        assert!(two.model(SoftCoreParams::new(1.0, 1.0).unwrap()).unwrap().y.is_some());
        let mut bad = RunConfig::minimal();
        bad.grids.y_points = Some(4);
        assert!(bad.model(SoftCoreParams::new(1.0, 1.0).unwrap()).is_err());
    }
}
