//! One-dimensional nuclear problems on the R grid: vibrational eigenstates,
//! relaxed ground states, and the Franck-Condon window.

use nalgebra::DMatrix;
use num_complex::Complex64;

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grid::{ComplexField, FftNd, Grid1D};
use crate::potentials::Curve;
use crate::propagator::{Hamiltonian, RelaxOptions, SplitOperator, TwoComponentState};
use crate::units;

/// Real eigenvector normalized with the grid measure, `Σ v² dR = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct VibState {
    pub energy: f64,
    pub vector: Vec<f64>,
}

/// Kinetic matrix `P²/(2m)` of the periodic spectral discretization, the
/// same operator the split-operator propagator applies.
pub fn kinetic_matrix(grid: &Grid1D, mass: f64) -> DMatrix<f64> {
    let n = grid.n;
    let ks = grid.wavenumbers();
    let row: Vec<f64> = (0..n)
        .map(|d| {
            let x = d as f64 * grid.step;
            ks.iter().map(|k| k * k * (k * x).cos()).sum::<f64>() / (2.0 * mass * n as f64)
        })
        .collect();
    DMatrix::from_fn(n, n, |i, j| row[i.abs_diff(j)])
}

/// Eigenstates with energy below `e_max`, lowest first, at most `max_states`.
pub fn bound_states(grid: &Grid1D, mass: f64, potential: &[f64], e_max: f64, max_states: usize) -> Result<Vec<VibState>> {
    if potential.len() != grid.n {
        return Err(Error::invalid("potential does not match the grid"));
    }
    let mut h = kinetic_matrix(grid, mass);
    for (i, v) in potential.iter().enumerate() {
        h[(i, i)] += v;
    }
    let eig = h.symmetric_eigen();
    let mut order: Vec<usize> = (0..grid.n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let norm = grid.step.sqrt();
    Ok(order
        .into_iter()
        .filter(|&i| eig.eigenvalues[i] < e_max)
        .take(max_states)
        .map(|i| {
            let col = eig.eigenvectors.column(i);
            // fix the sign so the largest-magnitude entry is positive
            let imax = (0..grid.n).max_by(|&a, &b| col[a].abs().total_cmp(&col[b].abs())).unwrap_or(0);
            let s = col[imax].signum() / norm;
            VibState { energy: eig.eigenvalues[i], vector: col.iter().map(|v| v * s).collect() }
        })
        .collect())
}

/// Vibrational ground state on `curve` by imaginary-time relaxation.
pub fn relaxed_ground_state(grid: &Grid1D, mass: f64, curve: &Curve, opts: &RelaxOptions) -> Result<(f64, ComplexField)> {
    let v = curve.sample(grid);
    let imin = (0..grid.n).min_by(|&a, &b| v[a].total_cmp(&v[b])).unwrap_or(0);
    let r0 = grid.point(imin);
    let guess = ComplexField::from_fn(vec![*grid], |c| Complex64::new((-(c[0] - r0).powi(2) / 0.05).exp(), 0.0))?;
    let so = SplitOperator::new(Hamiltonian::single(vec![*grid], vec![mass], v)?)?;
    let mut st = TwoComponentState::from_g(guess, 0.0);
    let e = so.relax(&mut st, opts)?;
    Ok((e, st.g))
}

/// `⟨R⟩` of a one-dimensional density.
pub fn mean_position(f: &ComplexField) -> f64 {
    let g = &f.axes[0];
    let w: f64 = f.data.iter().map(|z| z.norm_sqr()).sum();
    f.data.iter().enumerate().map(|(i, z)| g.point(i) * z.norm_sqr()).sum::<f64>() / w
}

/// R interval where the density exceeds `fraction` of its maximum.
pub fn density_window(f: &ComplexField, fraction: f64) -> (f64, f64) {
    let g = &f.axes[0];
    let rho: Vec<f64> = f.data.iter().map(|z| z.norm_sqr()).collect();
    let peak = rho.iter().cloned().fold(0.0, f64::max);
    let inside: Vec<usize> = (0..rho.len()).filter(|&i| rho[i] >= fraction * peak).collect();
    (g.point(inside[0]), g.point(*inside.last().unwrap()))
}

/// Outgoing-momentum projection of a nuclear wavefunction on `grid`:
/// bound V_g vibrational content removed, then a spectral transform in R
/// keeping `0 < K ≤ K(ker_max)`.
#[derive(Debug, Clone)]
pub struct KProjection {
    pub grid: Grid1D,
    pub k: Grid1D,
    pub bound: Vec<VibState>,
    fft: FftNd,
    ks: Vec<f64>,
    pref: Vec<Complex64>,
}

/// Norms of one projected row, in units of the R/K measure.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ProjectionNorms {
    pub bound: f64,
    pub incoming: f64,
    pub truncated: f64,
}

impl KProjection {
    pub fn new(grid: &Grid1D, mass: f64, v_g: &Curve, n_vib: usize, vib_r_max: f64, ker_max_ev: f64) -> Result<Self> {
        if !(ker_max_ev > 0.0) {
            return Err(Error::invalid("ker_max must be positive"));
        }
        let n_trunc = (((vib_r_max - grid.min) / grid.step).ceil() as usize).clamp(2, grid.n);
        let vib_grid = Grid1D::new(grid.min, n_trunc, grid.step)?;
        let bound = bound_states(&vib_grid, mass, &v_g.sample(&vib_grid), 0.0, n_vib)?;
        let dk = 2.0 * PI / (grid.n as f64 * grid.step);
        let k_max = (2.0 * mass * units::ev_to_au(ker_max_ev)).sqrt();
        let n_k = ((k_max / dk).floor() as usize).min(grid.n / 2 - 1).max(1);
        let ks = grid.wavenumbers();
        let pref = ks.iter().map(|&k| Complex64::from_polar(grid.step / (2.0 * PI).sqrt(), -k * grid.min)).collect();
        Ok(KProjection { grid: *grid, k: Grid1D::new(dk, n_k, dk)?, bound, fft: FftNd::new(&[grid.n]), ks, pref })
    }

    /// Projects one row; `remove_bound` applies to the g channel only.
    pub fn project(&self, row: &[Complex64], remove_bound: bool) -> (Vec<Complex64>, ProjectionNorms) {
        let mut row = row.to_vec();
        let mut norms = ProjectionNorms::default();
        if remove_bound {
            for s in &self.bound {
                let c: Complex64 = s.vector.iter().zip(&row).map(|(v, z)| z * *v).sum::<Complex64>() * self.grid.step;
                norms.bound += c.norm_sqr();
                row.iter_mut().zip(&s.vector).for_each(|(z, v)| *z -= c * *v);
            }
        }
        self.fft.forward(&mut row);
        let dk = self.k.step;
        let mut out = vec![Complex64::new(0.0, 0.0); self.k.n];
        for (i, z) in row.iter().enumerate() {
            let a = z * self.pref[i];
            let k = self.ks[i];
            if k <= 0.0 {
                norms.incoming += a.norm_sqr() * dk;
            } else {
                let j = (k / dk).round() as usize;
                if (1..=self.k.n).contains(&j) {
                    out[j - 1] = a;
                } else {
                    norms.truncated += a.norm_sqr() * dk;
                }
            }
        }
        (out, norms)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::{ion_curves_builtin, neutral_curve_builtin};
    use crate::units;

    const MU: f64 = units::DEUTERON_MASS_AU / 2.0;

    /// Morse levels `-De + ω(n+½) - [ω(n+½)]²/(4De)`, `ω = α√(2De/μ)`.
    fn morse_level(depth: f64, alpha: f64, n: usize) -> f64 {
        let w = alpha * (2.0 * depth / MU).sqrt();
        let x = w * (n as f64 + 0.5);
        -depth + x - x * x / (4.0 * depth)
    }

    #[test]
    fn morse_levels_from_diagonalization() {
        let grid = Grid1D::new(0.5, 400, 0.02).unwrap();
        let c = neutral_curve_builtin();
        let states = bound_states(&grid, MU, &c.sample(&grid), -0.05, 6).unwrap();
        assert_eq!(states.len(), 6);
        for (n, s) in states.iter().enumerate() {
            assert!((s.energy - morse_level(0.1745, 1.028, n)).abs() < 1e-7, "n={n}: {}", s.energy);
            let norm: f64 = s.vector.iter().map(|v| v * v).sum::<f64>() * grid.step;
            assert!((norm - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn relaxation_agrees_with_diagonalization() {
        let grid = Grid1D::new(0.5, 256, 0.025).unwrap();
        let c = neutral_curve_builtin();
        let opts = RelaxOptions { dtau: 1.0, tol: 1e-13, check_every: 50, max_steps: 1_000_000 };
        let (e, f) = relaxed_ground_state(&grid, MU, &c, &opts).unwrap();
        let ev = bound_states(&grid, MU, &c.sample(&grid), 0.0, 1).unwrap();
        assert!((e - ev[0].energy).abs() < 1e-9);
        let r = mean_position(&f);
        assert!((1.3..=1.5).contains(&r), "{r}");
    }

    /// The neutral ground-state density window spans more than one 515 nm
    /// photon energy on V_g, and contains a pair V_g(R_A) = V_g(R_B) + ħω.
    #[test]
    fn franck_condon_window_exceeds_photon_energy() {
        let grid = Grid1D::new(0.5, 256, 0.02).unwrap();
        let opts = RelaxOptions { dtau: 1.0, tol: 1e-13, check_every: 50, max_steps: 1_000_000 };
        let (_, f) = relaxed_ground_state(&grid, MU, &neutral_curve_builtin(), &opts).unwrap();
        let (lo, hi) = density_window(&f, 0.01);
        let vg = ion_curves_builtin().g;
        let span = units::au_to_ev(vg.eval(lo) - vg.eval(hi));
        assert!(span >= 2.4, "window [{lo}, {hi}] spans {span} eV");
        let hw = units::ev_to_au(units::photon_energy(515.0).unwrap());
        let r_b = hi;
        let (mut a, mut b) = (lo, r_b);
        for _ in 0..100 {
            let m = 0.5 * (a + b);
            if vg.eval(m) > vg.eval(r_b) + hw {
                a = m
            } else {
                b = m
            }
        }
        assert!(a > lo && a < r_b);
        assert!((vg.eval(a) - vg.eval(r_b) - hw).abs() < 1e-10);
    }
}
