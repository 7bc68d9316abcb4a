//! Analytic-oracle suites run at runtime by the `selftest` subcommand.
//! Each measurement is computed from scratch and compared against a closed
//! form that does not go through the code under test.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use nalgebra::Matrix4;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::grid::{ComplexField, Grid1D};
use crate::holography::{self, Arc, HoloConfig};
use crate::propagator::{Drive, Hamiltonian, RelaxOptions, SplitOperator, TwoComponentState};
use crate::qubits::{self, Density, FixedParityDensity, ParityPureState, Sector, SeparableState};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub suite: &'static str,
    pub name: String,
    pub value: f64,
    /// Human-readable acceptance condition.
    pub condition: String,
    pub passed: bool,
}

impl Check {
    pub fn below(suite: &'static str, name: impl Into<String>, value: f64, bound: f64) -> Self {
        Check { suite, name: name.into(), value, condition: format!("< {bound:e}"), passed: value < bound }
    }

    pub fn above(suite: &'static str, name: impl Into<String>, value: f64, bound: f64) -> Self {
        Check { suite, name: name.into(), value, condition: format!("> {bound}"), passed: value > bound }
    }

    pub fn within(suite: &'static str, name: impl Into<String>, value: f64, target: f64, tol: f64) -> Self {
        Check { suite, name: name.into(), value, condition: format!("{target} ± {tol}"), passed: (value - target).abs() <= tol }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelftestReport {
    pub seed: u64,
    pub checks: Vec<Check>,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn suites(&self) -> Vec<&'static str> {
        let mut s: Vec<_> = self.checks.iter().map(|c| c.suite).collect();
        s.dedup();
        s
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let tag = if c.passed { "PASS" } else { "FAIL" };
            out.push_str(&format!("{tag} {:<11} {:<40} {:>12.4e}  ({})\n", c.suite, c.name, c.value, c.condition));
        }
        out
    }
}

pub fn run_all(seed: u64) -> Result<SelftestReport> {
    let mut checks = propagator_suite()?;
    checks.extend(qubit_suite(seed, 10_000, 100_000));
    checks.extend(holography_suite(&HoloConfig::default())?);
    Ok(SelftestReport { seed, checks })
}

fn gaussian(g: Grid1D, x0: f64, sigma: f64) -> Result<ComplexField> {
    ComplexField::from_fn(vec![g], |x| {
        let d = x[0] - x0;
        Complex64::new((-d * d / (4.0 * sigma * sigma)).exp(), 0.0)
    })
}

/// Relative error of the free-particle width `σ(t) = σ₀ √(1 + (t/2σ₀²)²)`.
pub fn free_gaussian_error() -> Result<f64> {
    let g = Grid1D::centered(2048, 0.1)?;
    let sigma0 = 1.5;
    let so = SplitOperator::new(Hamiltonian::single(vec![g], vec![1.0], vec![0.0; g.n])?)?;
    let mut st = TwoComponentState::from_g(gaussian(g, 0.0, sigma0)?, 0.0);
    let (dt, steps) = (0.05, 200);
    so.propagate(&mut st, dt, steps)?;
    let t = dt * steps as f64;
    let want = sigma0 * (1.0 + (t / (2.0 * sigma0 * sigma0)).powi(2)).sqrt();
    let pts = g.points();
    let w: Vec<f64> = st.g.data.iter().map(|z| z.norm_sqr()).collect();
    let n: f64 = w.iter().sum();
    let mean = pts.iter().zip(&w).map(|(x, p)| x * p).sum::<f64>() / n;
    let var = pts.iter().zip(&w).map(|(x, p)| (x - mean).powi(2) * p).sum::<f64>() / n;
    Ok(((var.sqrt() - want) / want).abs())
}

/// Largest deviation of the two populations from `cos²Ωt, sin²Ωt` under a
/// constant coupling with the kinetic term switched off.
pub fn rabi_error() -> Result<f64> {
    let g = Grid1D::centered(8, 1.0)?;
    let mut ham = Hamiltonian::single(vec![g], vec![f64::INFINITY], vec![0.0; 8])?;
    let (d, e) = (0.8, 0.05);
    ham.coupling = Some((0, vec![d; 8]));
    ham.drive = Drive::Constant(e);
    let so = SplitOperator::new(ham)?;
    let mut st = TwoComponentState::from_g(ComplexField::from_fn(vec![g], |_| Complex64::new(1.0 / 8f64.sqrt(), 0.0))?, 0.0);
    let (dt, steps) = (0.37, 123);
    so.propagate(&mut st, dt, steps)?;
    let wt = d * e * dt * steps as f64;
    Ok((st.g.norm_sqr() - wt.cos().powi(2)).abs().max((st.u.norm_sqr() - wt.sin().powi(2)).abs()))
}

/// Imaginary-time ground-state energy of `x²/2`.
pub fn oscillator_energy() -> Result<f64> {
    let g = Grid1D::centered(256, 0.1)?;
    let v = g.points().iter().map(|x| 0.5 * x * x).collect();
    let so = SplitOperator::new(Hamiltonian::single(vec![g], vec![1.0], v)?)?;
    let mut st = TwoComponentState::from_g(gaussian(g, 0.7, 1.3)?, 0.0);
    so.relax(&mut st, &RelaxOptions { dtau: 0.002, tol: 1e-13, ..Default::default() })
}

/// `log₂(err(dt)/err(dt/2))` for one oscillator period of a coherent state,
/// whose exact revival is `-ψ(0)`.
pub fn splitting_order() -> Result<f64> {
    let g = Grid1D::centered(256, 0.08)?;
    let v = g.points().iter().map(|x| 0.5 * x * x).collect();
    let so = SplitOperator::new(Hamiltonian::single(vec![g], vec![1.0], v)?)?;
    let psi0 = gaussian(g, 1.5, FRAC_1_SQRT_2)?;
    let err = |steps: usize| -> Result<f64> {
        let mut st = TwoComponentState::from_g(psi0.clone(), 0.0);
        so.propagate(&mut st, 2.0 * PI / steps as f64, steps)?;
        let d: f64 = st.g.data.iter().zip(&psi0.data).map(|(a, b)| (a + b).norm_sqr()).sum();
        Ok((d * g.step).sqrt())
    };
    Ok((err(400)? / err(800)?).log2())
}

pub fn propagator_suite() -> Result<Vec<Check>> {
    const S: &str = "propagator";
    Ok(vec![
        Check::below(S, "free Gaussian width, relative error", free_gaussian_error()?, 1e-6),
        Check::below(S, "Rabi populations, abs error", rabi_error()?, 1e-8),
        Check::within(S, "oscillator ground energy [a.u.]", oscillator_energy()?, 0.5, 1e-6),
        Check::within(S, "dt-convergence slope", splitting_order()?, 2.0, 0.2),
    ])
}

/// Brute-force C: rotate both qubits with the explicit 4×4 matrix
/// `H ⊗ H` (`g,u → r,l`) and read the coincidence probabilities off the
/// diagonal. An ion in `r` carries charge on the left.
pub fn brute_force_correlation(rho: &Density) -> f64 {
    let h = FRAC_1_SQRT_2;
    let u1 = [[h, h], [h, -h]];
    let mut u = Matrix4::<Complex64>::zeros();
    for ea in 0..2 {
        for eb in 0..2 {
            for ia in 0..2 {
                for ib in 0..2 {
                    u[(2 * ea + ia, 2 * eb + ib)] = Complex64::new(u1[ea][eb] * u1[ia][ib], 0.0);
                }
            }
        }
    }
    let rot = u * rho * u.adjoint();
    let p = |e: usize, i: usize| rot[(2 * e + i, 2 * e + i)].re;
    let same = p(0, 1) + p(1, 0);
    let opp = p(0, 0) + p(1, 1);
    (same - opp) / (same + opp)
}

fn sector(rng: &mut ChaCha8Rng) -> Sector {
    if rng.random::<bool>() {
        Sector::Even
    } else {
        Sector::Odd
    }
}

fn unit_pair(rng: &mut ChaCha8Rng) -> (Complex64, Complex64) {
    let mut z = || Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    let (a, b) = (z(), z());
    let n = (a.norm_sqr() + b.norm_sqr()).sqrt();
    (a / n, b / n)
}

pub fn random_separable(rng: &mut ChaCha8Rng) -> Result<SeparableState> {
    let (zg, zu) = unit_pair(rng);
    let (eg, eu) = unit_pair(rng);
    SeparableState::new(zg, zu, eg, eu)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QubitMeasurements {
    /// Worst |closed form − brute force| over pure, mixed and separable states.
    pub pure_err: f64,
    pub mixed_err: f64,
    pub separable_err: f64,
    /// Worst |F − 1/2 + C/2|.
    pub identity_err: f64,
    /// Largest Bell fidelity found among parity-twirled separable states.
    pub separable_bell_max: f64,
}

pub fn qubit_measurements(seed: u64, n_states: usize, n_separable: usize) -> Result<QubitMeasurements> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = QubitMeasurements { pure_err: 0.0, mixed_err: 0.0, separable_err: 0.0, identity_err: 0.0, separable_bell_max: 0.0 };
    for _ in 0..n_states {
        let s = sector(&mut rng);
        let pure = ParityPureState::from_weight(rng.random(), rng.random_range(-PI..PI), s)?;
        let rho = pure.amplitudes() * pure.amplitudes().adjoint();
        m.pure_err = m.pure_err.max((qubits::correlation_pure(&pure) - brute_force_correlation(&rho)).abs());

        let p: f64 = rng.random();
        let r = (p * (1.0 - p)).sqrt() * rng.random::<f64>();
        let s = sector(&mut rng);
        let d = FixedParityDensity::new(p, 1.0 - p, Complex64::from_polar(r, rng.random_range(-PI..PI)), s)?;
        let c = qubits::correlation_rho(&d);
        m.mixed_err = m.mixed_err.max((c - brute_force_correlation(&d.matrix())).abs());
        m.identity_err = m.identity_err.max((qubits::bell_fidelity(&d) - 0.5 + c / 2.0).abs());

        let sep = random_separable(&mut rng)?;
        m.separable_err = m.separable_err.max((qubits::correlation_separable(&sep) - brute_force_correlation(&sep.density())).abs());
    }
    for _ in 0..n_separable {
        let rho = qubits::parity_twirl(&random_separable(&mut rng)?.density());
        m.separable_bell_max = qubits::bell_fidelities(&rho).into_iter().fold(m.separable_bell_max, f64::max);
    }
    Ok(m)
}

pub fn qubit_suite(seed: u64, n_states: usize, n_separable: usize) -> Vec<Check> {
    const S: &str = "qubits";
    match qubit_measurements(seed, n_states, n_separable) {
        Ok(m) => vec![
            Check::below(S, format!("pure-state C vs brute force ({n_states})"), m.pure_err, 1e-12),
            Check::below(S, format!("fixed-parity C vs brute force ({n_states})"), m.mixed_err, 1e-12),
            Check::below(S, format!("separable C vs brute force ({n_states})"), m.separable_err, 1e-12),
            Check::below(S, "F - 1/2 + C/2", m.identity_err, 1e-12),
            Check::below(S, format!("separable Bell fidelity max ({n_separable})"), m.separable_bell_max, 0.5 + 1e-12),
        ],
        Err(e) => vec![Check { suite: S, name: format!("state construction failed: {e}"), value: f64::NAN, condition: "ok".into(), passed: false }],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WashoutMeasurements {
    pub orders: Vec<u32>,
    /// Per order: visibility of path A, path B and of the equal-weight sum.
    pub v_a: Vec<f64>,
    pub v_b: Vec<f64>,
    pub v_sum: Vec<f64>,
    /// Worst distance from a minimum of A to the nearest maximum of B [a.u.].
    pub complement_offset: f64,
    pub cell: f64,
}

pub fn washout_measurements(config: &HoloConfig) -> Result<WashoutMeasurements> {
    let a = holography::pmd(&config.with_parity(Sector::Even))?;
    let b = holography::pmd(&config.with_parity(Sector::Odd))?;
    let sum = holography::incoherent_sum(&a, &b)?;
    let mut m = WashoutMeasurements { orders: vec![], v_a: vec![], v_b: vec![], v_sum: vec![], complement_offset: 0.0, cell: config.px.step };
    for n in config.orders() {
        let arc = Arc::fringe_window(config.shell_momentum(n), config.d, 0.002);
        let v = |p| holography::visibility(p, &arc, 0, 1e-12).map(|v| v.unwrap_or(f64::NAN));
        m.orders.push(n);
        m.v_a.push(v(&a)?);
        m.v_b.push(v(&b)?);
        m.v_sum.push(v(&sum)?);
        let e = config.shell_energy(n);
        let maxs = holography::fringe_maxima(&b, e)?;
        let mins = holography::fringe_minima(&a, e)?;
        if mins.is_empty() || maxs.is_empty() {
            m.complement_offset = f64::INFINITY;
        }
        for x in mins {
            let near = maxs.iter().map(|y| (y - x).abs()).fold(f64::INFINITY, f64::min);
            m.complement_offset = m.complement_offset.max(near);
        }
    }
    Ok(m)
}

pub fn holography_suite(config: &HoloConfig) -> Result<Vec<Check>> {
    const S: &str = "holography";
    let m = washout_measurements(config)?;
    let min = |v: &[f64]| v.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = |v: &[f64]| v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(vec![
        Check::above(S, "path A visibility (worst order)", min(&m.v_a), 0.5),
        Check::above(S, "path B visibility (worst order)", min(&m.v_b), 0.5),
        Check::below(S, "incoherent sum visibility (worst order)", max(&m.v_sum), 0.05),
        Check::below(S, "A minima to B maxima [a.u.]", m.complement_offset, m.cell),
    ])
}
