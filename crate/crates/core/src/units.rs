//! Hartree atomic units and the handful of conversions used at I/O boundaries.
//!
//! Everything inside the solvers is in atomic units. Laboratory quantities
//! (W/cm², nm, fs, eV) are converted once when a config is read and once when
//! results are written.

use crate::error::{Error, Result};

/// eV per hartree.
pub const EV_PER_HARTREE: f64 = 27.211386;
/// Atomic unit of intensity in W/cm².
pub const AU_INTENSITY_WCM2: f64 = 3.509445e16;
/// Atomic unit of time in attoseconds.
pub const AU_TIME_AS: f64 = 24.18884;
/// Atomic unit of length in nm.
pub const AU_LENGTH_NM: f64 = 0.0529177;
/// hc in eV·nm.
pub const HC_EV_NM: f64 = 1239.841984;
/// Deuteron mass in electron masses.
pub const DEUTERON_MASS_AU: f64 = 3670.48;

/// Immutable bundle of the conversion constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitContext {
    pub ev_per_hartree: f64,
    pub au_intensity_wcm2: f64,
    pub au_time_as: f64,
    pub au_length_nm: f64,
}

impl Default for UnitContext {
    fn default() -> Self {
        UnitContext { ev_per_hartree: EV_PER_HARTREE, au_intensity_wcm2: AU_INTENSITY_WCM2, au_time_as: AU_TIME_AS, au_length_nm: AU_LENGTH_NM }
    }
}

impl UnitContext {
    pub fn ev_to_au(&self, ev: f64) -> f64 {
        ev / self.ev_per_hartree
    }
    pub fn au_to_ev(&self, au: f64) -> f64 {
        au * self.ev_per_hartree
    }
    pub fn fs_to_au(&self, fs: f64) -> f64 {
        fs * 1000.0 / self.au_time_as
    }
    pub fn au_to_fs(&self, au: f64) -> f64 {
        au * self.au_time_as / 1000.0
    }
    pub fn nm_to_au(&self, nm: f64) -> f64 {
        nm / self.au_length_nm
    }
    pub fn au_to_nm(&self, au: f64) -> f64 {
        au * self.au_length_nm
    }
}

pub fn ev_to_au(ev: f64) -> f64 {
    ev / EV_PER_HARTREE
}

pub fn au_to_ev(au: f64) -> f64 {
    au * EV_PER_HARTREE
}

pub fn fs_to_au(fs: f64) -> f64 {
    UnitContext::default().fs_to_au(fs)
}

/// Peak field amplitude (a.u.) for a peak intensity in W/cm².
pub fn convert_intensity_to_field(intensity_wcm2: f64) -> Result<f64> {
    if !(intensity_wcm2 >= 0.0) || !intensity_wcm2.is_finite() {
        return Err(Error::invalid(format!("intensity must be finite and non-negative, got {intensity_wcm2}")));
    }
    Ok((intensity_wcm2 / AU_INTENSITY_WCM2).sqrt())
}

/// Photon energy in eV for a vacuum wavelength in nm.
pub fn photon_energy(wavelength_nm: f64) -> Result<f64> {
    if !(wavelength_nm > 0.0) || !wavelength_nm.is_finite() {
        return Err(Error::invalid(format!("wavelength must be positive, got {wavelength_nm}")));
    }
    Ok(HC_EV_NM / wavelength_nm)
}

/// Angular frequency in a.u. for a wavelength in nm.
pub fn angular_frequency(wavelength_nm: f64) -> Result<f64> {
    Ok(ev_to_au(photon_energy(wavelength_nm)?))
}

/// Ponderomotive energy E0²/(4ω²) in eV.
pub fn ponderomotive_energy_ev(intensity_wcm2: f64, wavelength_nm: f64) -> Result<f64> {
    let e0 = convert_intensity_to_field(intensity_wcm2)?;
    let w = angular_frequency(wavelength_nm)?;
    Ok(au_to_ev(e0 * e0 / (4.0 * w * w)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_from_intensity() {
        let e0 = convert_intensity_to_field(9e13).unwrap();
        assert!((e0 - 0.05064).abs() < 5e-5, "{e0}");
        assert_eq!(convert_intensity_to_field(0.0).unwrap(), 0.0);
        assert!(convert_intensity_to_field(-1.0).is_err());
    }

    #[test]
    fn ponderomotive_values() {
        let up = ponderomotive_energy_ev(9e13, 515.0).unwrap();
        assert!((up - 2.23).abs() < 0.05, "{up}");
        let up = ponderomotive_energy_ev(1.4e14, 515.0).unwrap();
        assert!((up - 3.47).abs() < 0.05, "{up}");
    }

    #[test]
    fn photon_energies() {
        assert!((photon_energy(515.0).unwrap() - 2.407).abs() < 5e-4);
        assert!((photon_energy(HC_EV_NM).unwrap() - 1.0).abs() < 1e-15);
        let ratio = photon_energy(1030.0).unwrap() / photon_energy(515.0).unwrap();
        assert!((ratio - 0.5).abs() < 1e-15);
        assert!(photon_energy(0.0).is_err());
        assert!(photon_energy(-515.0).is_err());
    }

    #[test]
    fn conversions_round_trip() {
        let u = UnitContext::default();
        for v in [1e-6, 0.3, 2.407, 15.47, 1e4] {
            assert!((u.au_to_ev(u.ev_to_au(v)) - v).abs() <= 1e-12 * v);
            assert!((u.au_to_fs(u.fs_to_au(v)) - v).abs() <= 1e-12 * v);
            assert!((u.au_to_nm(u.nm_to_au(v)) - v).abs() <= 1e-12 * v);
        }
    }
}
