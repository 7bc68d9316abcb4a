//! Linearly polarized sin²-envelope laser pulse (length gauge, dipole
//! approximation, polarization along the molecular axis x).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units;

/// Ratio FWHM(E²)/T for a sin² field envelope of total length T.
pub fn fwhm_to_duration_ratio() -> f64 {
    1.0 - 2.0 * (2f64.powf(-0.25)).asin() / PI
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Envelope {
    Sin2,
}

/// Pulse parameters in laboratory units. The field is
/// `E(t) = E0 sin²(πt/T) cos(ωt + cep)` on `[0, T]` and zero elsewhere,
/// with `T` chosen so the intensity envelope has the requested FWHM.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pulse {
    pub intensity_wcm2: f64,
    pub wavelength_nm: f64,
    pub fwhm_fs: f64,
    #[serde(default)]
    pub cep_rad: f64,
    #[serde(skip, default = "default_envelope")]
    pub envelope: Envelope,
}

fn default_envelope() -> Envelope {
    Envelope::Sin2
}

impl Pulse {
    pub fn new(intensity_wcm2: f64, wavelength_nm: f64, fwhm_fs: f64, cep_rad: f64) -> Result<Self> {
        let p = Pulse { intensity_wcm2, wavelength_nm, fwhm_fs, cep_rad, envelope: Envelope::Sin2 };
        p.validate()?;
        Ok(p)
    }

    /// Pulse whose sin² support spans exactly `cycles` optical cycles.
    pub fn from_cycles(intensity_wcm2: f64, wavelength_nm: f64, cycles: f64, cep_rad: f64) -> Result<Self> {
        if !(cycles > 0.0) {
            return Err(Error::invalid(format!("cycle count must be positive, got {cycles}")));
        }
        let omega = units::angular_frequency(wavelength_nm)?;
        let t_au = cycles * 2.0 * PI / omega;
        let fwhm_fs = units::UnitContext::default().au_to_fs(t_au) * fwhm_to_duration_ratio();
        Pulse::new(intensity_wcm2, wavelength_nm, fwhm_fs, cep_rad)
    }

    pub fn validate(&self) -> Result<()> {
        units::convert_intensity_to_field(self.intensity_wcm2)?;
        units::photon_energy(self.wavelength_nm)?;
        if !(self.fwhm_fs > 0.0) || !self.fwhm_fs.is_finite() {
            return Err(Error::invalid(format!("fwhm must be positive, got {}", self.fwhm_fs)));
        }
        if !self.cep_rad.is_finite() {
            return Err(Error::invalid("cep must be finite"));
        }
        Ok(())
    }

    /// Peak field amplitude E0 [a.u.].
    pub fn amplitude(&self) -> f64 {
        (self.intensity_wcm2 / units::AU_INTENSITY_WCM2).sqrt()
    }

    /// Carrier angular frequency ω [a.u.].
    pub fn omega(&self) -> f64 {
        units::ev_to_au(units::HC_EV_NM / self.wavelength_nm)
    }

    pub fn cycle_period(&self) -> f64 {
        2.0 * PI / self.omega()
    }

    /// Length T of the sin² support [a.u.].
    pub fn total_duration(&self) -> f64 {
        units::fs_to_au(self.fwhm_fs) / fwhm_to_duration_ratio()
    }

    pub fn cycles(&self) -> f64 {
        self.total_duration() / self.cycle_period()
    }

    pub fn field(&self, t: f64) -> f64 {
        let tt = self.total_duration();
        if !(0.0..=tt).contains(&t) {
            return 0.0;
        }
        let env = (PI * t / tt).sin();
        self.amplitude() * env * env * (self.omega() * t + self.cep_rad).cos()
    }

    /// Vector potential `A(t) = -∫₀ᵗ E dt'`, evaluated in closed form.
    pub fn vector_potential(&self, t: f64) -> f64 {
        let tt = self.total_duration();
        let t = t.clamp(0.0, tt);
        let w = self.omega();
        let big = 2.0 * PI / tt;
        let phi = self.cep_rad;
        // sin²(Ωt/2)cos(ωt+φ) = ½cos(ωt+φ) − ¼cos((ω+Ω)t+φ) − ¼cos((ω−Ω)t+φ)
        let integral = 0.5 * cos_integral(w, phi, t) - 0.25 * cos_integral(w + big, phi, t) - 0.25 * cos_integral(w - big, phi, t);
        -self.amplitude() * integral
    }

    /// Pulse with the intensity replaced (used by zero-field checks and scans).
    pub fn with_intensity(&self, intensity_wcm2: f64) -> Self {
        Pulse { intensity_wcm2, ..*self }
    }

    pub fn with_cep(&self, cep_rad: f64) -> Self {
        Pulse { cep_rad, ..*self }
    }
}

/// ∫₀ᵗ cos(a t' + φ) dt'.
fn cos_integral(a: f64, phi: f64, t: f64) -> f64 {
    if a.abs() < 1e-14 {
        t * phi.cos()
    } else {
        ((a * t + phi).sin() - phi.sin()) / a
    }
}
