//! Two-qubit parity algebra for the photoelectron-ion pair: l/r basis
//! transform, emission correlation parameter C and Bell-state fidelity.
//!
//! Basis ordering is `|electron, ion⟩` over `{gg, gu, ug, uu}`. The l/r
//! states are `|l⟩ = (|g⟩ - |u⟩)/√2` and `|r⟩ = (|g⟩ + |u⟩)/√2` for both
//! particles; the D⁺ charge sits opposite the bound electron, so ion `r`
//! is charge `L`.

use nalgebra::{Matrix4, Vector4};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const NORM_TOL: f64 = 1e-12;

pub type Density = Matrix4<Complex64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sector {
    Even,
    Odd,
}

impl Sector {
    pub fn sign(self) -> f64 {
        match self {
            Sector::Even => 1.0,
            Sector::Odd => -1.0,
        }
    }

    /// Basis indices of the two allowed states `(a, b)`: path B then path A
    /// for even (`gg`, `uu`), `gu`, `ug` for odd.
    pub fn allowed(self) -> (usize, usize) {
        match self {
            Sector::Even => (GG, UU),
            Sector::Odd => (GU, UG),
        }
    }
}

pub const GG: usize = 0;
pub const GU: usize = 1;
pub const UG: usize = 2;
pub const UU: usize = 3;

/// `α|e, 2pσ_u⟩ + β e^{iφ}|e', 1sσ_g⟩` with the electron parity fixed by
/// the sector: even gives `α|uu⟩ + βe^{iφ}|gg⟩`, odd `α|gu⟩ + βe^{iφ}|ug⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParityPureState {
    pub alpha: f64,
    pub beta: f64,
    pub phi: f64,
    pub sector: Sector,
}

impl ParityPureState {
    pub fn new(alpha: f64, beta: f64, phi: f64, sector: Sector) -> Result<Self> {
        if !(alpha >= 0.0 && beta >= 0.0) || !phi.is_finite() {
            return Err(Error::invalid("alpha and beta must be non-negative, phi finite"));
        }
        if (alpha * alpha + beta * beta - 1.0).abs() > NORM_TOL {
            return Err(Error::invalid(format!("alpha² + beta² = {} ≠ 1", alpha * alpha + beta * beta)));
        }
        Ok(ParityPureState { alpha, beta, phi, sector })
    }

    /// State with path-A weight `alpha_sq = α²`.
    pub fn from_weight(alpha_sq: f64, phi: f64, sector: Sector) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha_sq) {
            return Err(Error::invalid("alpha² must lie in [0, 1]"));
        }
        Self::new(alpha_sq.sqrt(), (1.0 - alpha_sq).sqrt(), phi, sector)
    }

    /// Amplitudes over `{gg, gu, ug, uu}`.
    pub fn amplitudes(&self) -> Vector4<Complex64> {
        let mut v = Vector4::zeros();
        let b = Complex64::from_polar(self.beta, self.phi);
        match self.sector {
            Sector::Even => {
                v[UU] = Complex64::new(self.alpha, 0.0);
                v[GG] = b;
            }
            Sector::Odd => {
                v[GU] = Complex64::new(self.alpha, 0.0);
                v[UG] = b;
            }
        }
        v
    }

    pub fn density(&self) -> FixedParityDensity {
        let (a2, b2) = (self.alpha * self.alpha, self.beta * self.beta);
        match self.sector {
            Sector::Even => {
                FixedParityDensity { p_aa: b2, p_bb: a2, c: Complex64::from_polar(self.alpha * self.beta, self.phi), sector: self.sector }
            }
            Sector::Odd => {
                FixedParityDensity { p_aa: a2, p_bb: b2, c: Complex64::from_polar(self.alpha * self.beta, -self.phi), sector: self.sector }
            }
        }
    }
}

/// Density matrix restricted to one parity sector. `p_aa`, `p_bb` are the
/// populations of `sector.allowed()` in order and `c = ρ_ab`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedParityDensity {
    pub p_aa: f64,
    pub p_bb: f64,
    pub c: Complex64,
    pub sector: Sector,
}

impl FixedParityDensity {
    pub fn new(p_aa: f64, p_bb: f64, c: Complex64, sector: Sector) -> Result<Self> {
        if !(p_aa >= 0.0 && p_bb >= 0.0) {
            return Err(Error::invalid("populations must be non-negative"));
        }
        if (p_aa + p_bb - 1.0).abs() > NORM_TOL {
            return Err(Error::invalid(format!("populations sum to {}", p_aa + p_bb)));
        }
        if c.norm() > (p_aa * p_bb).sqrt() * (1.0 + NORM_TOL) + NORM_TOL {
            return Err(Error::invalid("coherence violates positivity |c| ≤ √(p_aa p_bb)"));
        }
        Ok(FixedParityDensity { p_aa, p_bb, c, sector })
    }

    pub fn matrix(&self) -> Density {
        let (a, b) = self.sector.allowed();
        let mut m = Density::zeros();
        m[(a, a)] = Complex64::new(self.p_aa, 0.0);
        m[(b, b)] = Complex64::new(self.p_bb, 0.0);
        m[(a, b)] = self.c;
        m[(b, a)] = self.c.conj();
        m
    }
}

/// Pure product state `(ζ_g|g⟩ + ζ_u|u⟩) ⊗ (η_g|g⟩ + η_u|u⟩)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeparableState {
    pub zeta_g: Complex64,
    pub zeta_u: Complex64,
    pub eta_g: Complex64,
    pub eta_u: Complex64,
}

impl SeparableState {
    pub fn new(zeta_g: Complex64, zeta_u: Complex64, eta_g: Complex64, eta_u: Complex64) -> Result<Self> {
        let nz = zeta_g.norm_sqr() + zeta_u.norm_sqr();
        let ne = eta_g.norm_sqr() + eta_u.norm_sqr();
        if (nz - 1.0).abs() > NORM_TOL || (ne - 1.0).abs() > NORM_TOL {
            return Err(Error::invalid("separable factors must be normalized"));
        }
        Ok(SeparableState { zeta_g, zeta_u, eta_g, eta_u })
    }

    pub fn amplitudes(&self) -> Vector4<Complex64> {
        Vector4::new(self.zeta_g * self.eta_g, self.zeta_g * self.eta_u, self.zeta_u * self.eta_g, self.zeta_u * self.eta_u)
    }

    pub fn density(&self) -> Density {
        let v = self.amplitudes();
        v * v.adjoint()
    }
}

/// Index into the l/r coefficient array: electron side then D⁺ charge side.
pub const R_L: usize = 0;
pub const L_R: usize = 1;
pub const R_R: usize = 2;
pub const L_L: usize = 3;
pub const LR_LABELS: [&str; 4] = ["rL", "lR", "rR", "lL"];

/// Coefficients over `{rL, lR, rR, lL}`.
pub fn to_lr_basis(state: &ParityPureState) -> [Complex64; 4] {
    let b = Complex64::from_polar(state.beta, state.phi);
    let a = Complex64::new(state.alpha, 0.0);
    let s = state.sector.sign();
    let opp = (a + b) / 2.0;
    let same = (b - a) / 2.0;
    [opp, opp * s, same, same * s]
}

/// Projection vectors `|e⟩ ⊗ |ion⟩` for the four l/r outcomes, in the
/// order of [`LR_LABELS`]. Charge `L` means the ion's bound electron is `r`.
pub fn lr_projectors() -> [Vector4<Complex64>; 4] {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let r = [h, h];
    let l = [h, -h];
    let prod = |e: [f64; 2], i: [f64; 2]| {
        Vector4::new(
            Complex64::new(e[0] * i[0], 0.0),
            Complex64::new(e[0] * i[1], 0.0),
            Complex64::new(e[1] * i[0], 0.0),
            Complex64::new(e[1] * i[1], 0.0),
        )
    };
    [prod(r, r), prod(l, l), prod(r, l), prod(l, r)]
}

/// `p_{rL}, p_{lR}, p_{rR}, p_{lL}` from a density matrix.
pub fn lr_probabilities(rho: &Density) -> [f64; 4] {
    lr_projectors().map(|v| (v.adjoint() * rho * v)[(0, 0)].re)
}

/// C from outcome probabilities: same-hemisphere minus opposite over the sum.
pub fn correlation_from_probabilities(p: &[f64; 4]) -> f64 {
    let same = p[R_R] + p[L_L];
    let opp = p[R_L] + p[L_R];
    (same - opp) / (same + opp)
}

pub fn correlation_pure(state: &ParityPureState) -> f64 {
    -2.0 * state.alpha * state.beta * state.phi.cos()
}

pub fn correlation_rho(rho: &FixedParityDensity) -> f64 {
    -2.0 * rho.c.re
}

pub fn correlation_separable(s: &SeparableState) -> f64 {
    let a = s.zeta_g.conj() * s.zeta_u;
    -2.0 * ((a * s.eta_g.conj() * s.eta_u).re + (a * s.eta_g * s.eta_u.conj()).re)
}

/// Fidelity with the closest Bell state of the sector: `Φ⁺` for even,
/// `Ψ⁺` for odd.
pub fn bell_fidelity(rho: &FixedParityDensity) -> f64 {
    0.5 * (rho.p_aa + rho.p_bb) + rho.c.re
}

/// Bell states `Φ⁺, Φ⁻, Ψ⁺, Ψ⁻`.
pub fn bell_states() -> [Vector4<Complex64>; 4] {
    let h = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let z = Complex64::new(0.0, 0.0);
    [Vector4::new(h, z, z, h), Vector4::new(h, z, z, -h), Vector4::new(z, h, h, z), Vector4::new(z, h, -h, z)]
}

/// `⟨B|ρ|B⟩` for the four Bell states.
pub fn bell_fidelities(rho: &Density) -> [f64; 4] {
    bell_states().map(|v| (v.adjoint() * rho * v)[(0, 0)].re)
}

/// Average of `ρ` and its total-parity image `(Z⊗Z) ρ (Z⊗Z)`. A local-unitary
/// mixture, so separability is preserved; the result is block diagonal in
/// the two sectors.
pub fn parity_twirl(rho: &Density) -> Density {
    let z = [1.0, -1.0, -1.0, 1.0];
    Density::from_fn(|i, j| if z[i] * z[j] > 0.0 { rho[(i, j)] } else { Complex64::new(0.0, 0.0) })
}

/// Normalized sector block of a density matrix, if it has weight.
pub fn sector_block(rho: &Density, sector: Sector) -> Option<FixedParityDensity> {
    let (a, b) = sector.allowed();
    let w = rho[(a, a)].re + rho[(b, b)].re;
    if w <= 0.0 {
        return None;
    }
    Some(FixedParityDensity { p_aa: rho[(a, a)].re / w, p_bb: rho[(b, b)].re / w, c: rho[(a, b)] / w, sector })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// Explicit single-particle rotation `g,u → r,l` applied to each factor,
    /// then the outcome probabilities read off as diagonal entries.
    fn oracle_c(rho: &Density) -> f64 {
        let h = FRAC_1_SQRT_2;
        // rows: r, l ; columns: g, u
        let u1 = [[h, h], [h, -h]];
        let mut u = Matrix4::<Complex64>::zeros();
        for (ea, eb) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            for (ia, ib) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                u[(2 * ea + ia, 2 * eb + ib)] = c(u1[ea][eb] * u1[ia][ib], 0.0);
            }
        }
        let rot = u * rho * u.adjoint();
        // rotated index 2*e + i with 0 = r, 1 = l; ion r is charge L
        let p = |e: usize, i: usize| rot[(2 * e + i, 2 * e + i)].re;
        let same = p(0, 1) + p(1, 0);
        let opp = p(0, 0) + p(1, 1);
        (same - opp) / (same + opp)
    }

    fn random_pure(rng: &mut ChaCha8Rng) -> ParityPureState {
        let sector = if rng.random::<bool>() { Sector::Even } else { Sector::Odd };
        ParityPureState::from_weight(rng.random::<f64>(), rng.random_range(-PI..PI), sector).unwrap()
    }

    fn random_unit(rng: &mut ChaCha8Rng) -> (Complex64, Complex64) {
        let a = c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let b = c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let n = (a.norm_sqr() + b.norm_sqr()).sqrt();
        (a / n, b / n)
    }

    fn random_separable(rng: &mut ChaCha8Rng) -> SeparableState {
        let (zg, zu) = random_unit(rng);
        let (eg, eu) = random_unit(rng);
        SeparableState::new(zg, zu, eg, eu).unwrap()
    }

    fn random_density(rng: &mut ChaCha8Rng) -> FixedParityDensity {
        let p: f64 = rng.random();
        let r = (p * (1.0 - p)).sqrt() * rng.random::<f64>();
        let sector = if rng.random::<bool>() { Sector::Even } else { Sector::Odd };
        FixedParityDensity::new(p, 1.0 - p, Complex64::from_polar(r, rng.random_range(-PI..PI)), sector).unwrap()
    }

    #[test]
    fn lr_examples() {
        let s = ParityPureState::new(1.0, 0.0, 0.0, Sector::Even).unwrap();
        for z in to_lr_basis(&s) {
            assert!((z.norm_sqr() - 0.25).abs() < 1e-15);
        }
        let s = ParityPureState::new(FRAC_1_SQRT_2, FRAC_1_SQRT_2, PI, Sector::Even).unwrap();
        let v = to_lr_basis(&s);
        assert!(v[R_L].norm() < 1e-15 && v[L_R].norm() < 1e-15);
        assert!((v[R_R].norm_sqr() - 0.5).abs() < 1e-15 && (v[L_L].norm_sqr() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn lr_coefficients_match_projections() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let s = random_pure(&mut rng);
            let v = to_lr_basis(&s);
            let amps = s.amplitudes();
            let sum: f64 = v.iter().map(|z| z.norm_sqr()).sum();
            assert!((sum - 1.0).abs() < 1e-12);
            for (k, p) in lr_projectors().iter().enumerate() {
                let overlap = (p.adjoint() * amps)[(0, 0)];
                assert!((overlap - v[k]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn closed_forms_against_probability_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10_000 {
            let s = random_pure(&mut rng);
            let rho_pure = s.amplitudes() * s.amplitudes().adjoint();
            let cp = correlation_pure(&s);
            assert!((cp - oracle_c(&rho_pure)).abs() < 1e-12);
            assert!((cp - correlation_rho(&s.density())).abs() < 1e-12);
            assert!((s.density().matrix() - rho_pure).norm() < 1e-12);

            let d = random_density(&mut rng);
            let cr = correlation_rho(&d);
            assert!((cr - oracle_c(&d.matrix())).abs() < 1e-12);
            assert!((bell_fidelity(&d) - 0.5 + cr / 2.0).abs() < 1e-12);
            assert!(cr.abs() <= 2.0 * d.c.norm() + 1e-15 && 2.0 * d.c.norm() <= 1.0 + 1e-12);

            let sep = random_separable(&mut rng);
            assert!((correlation_separable(&sep) - oracle_c(&sep.density())).abs() < 1e-12);
        }
    }

    #[test]
    fn library_eq4_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let d = random_density(&mut rng).matrix();
            assert!((correlation_from_probabilities(&lr_probabilities(&d)) - oracle_c(&d)).abs() < 1e-12);
        }
    }

    #[test]
    fn correlation_examples() {
        let s = ParityPureState::new(FRAC_1_SQRT_2, FRAC_1_SQRT_2, PI, Sector::Odd).unwrap();
        assert!((correlation_pure(&s) - 1.0).abs() < 1e-15);
        let s = ParityPureState::new(1.0, 0.0, 0.3, Sector::Even).unwrap();
        assert_eq!(correlation_pure(&s), 0.0);
        let d = FixedParityDensity::new(0.3, 0.7, c(0.0, 0.0), Sector::Even).unwrap();
        assert_eq!(correlation_rho(&d), 0.0);
        let h = c(FRAC_1_SQRT_2, 0.0);
        let sep = SeparableState::new(h, h, h, h).unwrap();
        assert!((correlation_separable(&sep) + 1.0).abs() < 1e-15);
        let sep = SeparableState::new(c(1.0, 0.0), c(0.0, 0.0), h, h).unwrap();
        assert_eq!(correlation_separable(&sep), 0.0);
    }

    #[test]
    fn fidelity_examples() {
        let d = FixedParityDensity::new(0.5, 0.5, c(0.5, 0.0), Sector::Even).unwrap();
        assert!((bell_fidelity(&d) - 1.0).abs() < 1e-15);
        let d = FixedParityDensity::new(1.0, 0.0, c(0.0, 0.0), Sector::Even).unwrap();
        assert!((bell_fidelity(&d) - 0.5).abs() < 1e-15);
        let d = FixedParityDensity::new(0.5, 0.5, c(0.5, 0.0), Sector::Odd).unwrap();
        let full = bell_fidelities(&d.matrix());
        assert!((full[2] - bell_fidelity(&d)).abs() < 1e-15);
    }

    #[test]
    fn separable_states_stay_below_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut worst: f64 = 0.0;
        for _ in 0..100_000 {
            let rho = parity_twirl(&random_separable(&mut rng).density());
            worst = worst.max(bell_fidelities(&rho).into_iter().fold(0.0, f64::max));
        }
        assert!(worst <= 0.5 + 1e-12, "{worst}");
        assert!(worst > 0.49);
    }

    #[test]
    fn validation() {
        assert!(ParityPureState::new(0.6, 0.6, 0.0, Sector::Even).is_err());
        assert!(ParityPureState::new(-0.6, 0.8, 0.0, Sector::Even).is_err());
        assert!(FixedParityDensity::new(0.5, 0.5, c(0.6, 0.0), Sector::Even).is_err());
        assert!(FixedParityDensity::new(0.5, 0.6, c(0.0, 0.0), Sector::Even).is_err());
        let h = c(FRAC_1_SQRT_2, 0.0);
        assert!(SeparableState::new(h, h, h, c(0.0, 0.0)).is_err());
    }

    proptest! {
        #[test]
        fn fidelity_identity(p in 0.0f64..=1.0, frac in 0.0f64..=1.0, ph in -PI..PI, odd: bool) {
            let sector = if odd { Sector::Odd } else { Sector::Even };
            let d = FixedParityDensity::new(p, 1.0 - p, Complex64::from_polar(frac * (p * (1.0 - p)).sqrt(), ph), sector).unwrap();
            let f = bell_fidelity(&d);
            prop_assert!((0.0..=1.0 + 1e-12).contains(&f));
            prop_assert!((f - 0.5 + correlation_rho(&d) / 2.0).abs() < 1e-12);
            prop_assert_eq!(f > 0.5, d.c.re > 0.0);
            prop_assert_eq!(sector_block(&d.matrix(), sector).unwrap().sector, sector);
        }

        #[test]
        fn pure_correlation_bounded(w in 0.0f64..=1.0, ph in -10.0f64..10.0) {
            let s = ParityPureState::from_weight(w, ph, Sector::Even).unwrap();
            let cp = correlation_pure(&s);
            prop_assert!(cp.abs() <= 1.0 + 1e-15);
            let d = s.density();
            prop_assert_eq!(d.sector, s.sector);
        }
    }
}
