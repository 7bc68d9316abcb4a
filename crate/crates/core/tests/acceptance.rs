//! End-to-end acceptance checks. Each test prints one line
//! `criterion N: PASS|FAIL ...` with the measured values and the pinned
//! tolerance, then asserts.
//!
//! The desk-scale runs (20-cycle sin² pulse at 7.7e13 W/cm², CEP 0 and π,
//! 1D electron) go through the same pipeline as `dmolsim run` and are shared
//! between criteria 5 to 8.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use dmolsim::analysis::{self, ChannelSel, EnergyAxis, KerSpectrum};
use dmolsim::config::RunConfig;
use dmolsim::dissoc::JointAmplitude;
use dmolsim::grid::Grid1D;
use dmolsim::io;
use dmolsim::ion1d;
use dmolsim::orchestrate::{orchestrate, Stage, StageOptions};
use dmolsim::qubits::{self, ParityPureState, Sector};
use dmolsim::selftest;
use dmolsim::{units, Channel};

// criterion 1
const PHOTON_EV: (f64, f64) = (2.407, 0.005);
const UP_EV: (f64, f64) = (2.23, 0.05);
// criterion 2
const GAUSSIAN_REL: f64 = 1e-6;
const RABI_ABS: f64 = 1e-8;
const OSCILLATOR: (f64, f64) = (0.5, 1e-6);
const SLOPE: (f64, f64) = (2.0, 0.2);
// criterion 3
const QUBIT_TOL: f64 = 1e-12;
const N_STATES: usize = 10_000;
const N_SEPARABLE: usize = 100_000;
// criterion 4
const V_SUM_MAX: f64 = 0.05;
const V_PATH_MIN: f64 = 0.5;
// criterion 5
const DESK_INTENSITY: f64 = 7.7e13;
const DESK_CYCLES: f64 = 20.0;
const CLOSURE: f64 = 1e-6;
const ATI_SPACING: (f64, f64) = (2.407, 0.12);
const REFLECTION: f64 = 0.02;
// criterion 6
const U_DOMINATES_BELOW: f64 = 1.5;
const G_DOMINATES_ABOVE: f64 = 2.5;
const CROSSING: (f64, f64) = (1.7, 2.3);
// criterion 7
const SIGN_WINDOW: (f64, f64) = (1.8, 3.2);
const MIN_SIGN_CHANGES: usize = 2;
const SYNTHETIC_TOL: f64 = 1e-3;
// criterion 8
const BALANCE: f64 = 0.8;
const RESTORATION: f64 = 2.0;
const ERASER_WIDTH_EV: f64 = 0.5;
// criterion 9
const ION_INTENSITY: f64 = 9.74e13;
const UNITARITY: f64 = 1e-12;
const ANTISYMMETRY: f64 = 0.10;
const ANTISYMMETRY_KER_MIN: f64 = 1.8;

/// Writes to the stderr handle directly so the line shows up even when the
/// test harness captures output.
fn report(n: u32, passed: bool, detail: &str) {
    let _ = writeln!(std::io::stderr(), "criterion {n}: {} {detail}", if passed { "PASS" } else { "FAIL" });
}

fn scratch(name: &str) -> PathBuf {
    let p = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance").join(name);
    let _ = fs::remove_dir_all(&p);
    fs::create_dir_all(&p).unwrap();
    p
}

fn desk_config(cep: f64) -> RunConfig {
    let mut c = RunConfig::minimal();
    c.laser.intensity_wcm2 = DESK_INTENSITY;
    c.laser.duration_cycles = DESK_CYCLES;
    c.laser.cep_rad = cep;
    c
}

struct DeskRun {
    joint: JointAmplitude,
    closure: f64,
}

struct Desk {
    zero: DeskRun,
    pi: DeskRun,
}

fn run_stage(cfg: &RunConfig, dir: &Path) -> DeskRun {
    orchestrate(Stage::Run, cfg, &StageOptions::new(dir)).unwrap();
    let (joint, h) = io::read_joint(&dir.join("joint.bin")).unwrap();
    assert_eq!(h.config_hash, cfg.hash());
    let ledger: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("ledger.json")).unwrap()).unwrap();
    DeskRun { joint, closure: ledger["closure_error"].as_f64().unwrap() }
}

fn desk() -> &'static Desk {
    static DESK: OnceLock<Desk> = OnceLock::new();
    DESK.get_or_init(|| {
        let a = scratch("desk_cep0");
        let b = scratch("desk_cep_pi");
        let zero = run_stage(&desk_config(0.0), &a);
        // the neutral state does not depend on the laser; reuse it
        fs::copy(a.join("neutral.bin"), b.join("neutral.bin")).unwrap();
        let pi = run_stage(&desk_config(std::f64::consts::PI), &b);
        Desk { zero, pi }
    })
}

fn ker(j: &JointAmplitude) -> KerSpectrum {
    analysis::ker_spectrum(j, analysis::DEFAULT_KER_BIN_EV).unwrap()
}

#[test]
fn criterion_01_units() {
    let hw = units::photon_energy(515.0).unwrap();
    let up = units::ponderomotive_energy_ev(9e13, 515.0).unwrap();
    let ok = (hw - PHOTON_EV.0).abs() <= PHOTON_EV.1 && (up - UP_EV.0).abs() <= UP_EV.1;
    report(1, ok, &format!("hw = {hw:.4} eV ({} ± {}), U_P = {up:.4} eV ({} ± {})", PHOTON_EV.0, PHOTON_EV.1, UP_EV.0, UP_EV.1));
    assert!(ok);
}

#[test]
fn criterion_02_propagator_oracles() {
    let g = selftest::free_gaussian_error().unwrap();
    let r = selftest::rabi_error().unwrap();
    let e = selftest::oscillator_energy().unwrap();
    let s = selftest::splitting_order().unwrap();
    let ok = g < GAUSSIAN_REL && r < RABI_ABS && (e - OSCILLATOR.0).abs() < OSCILLATOR.1 && (s - SLOPE.0).abs() <= SLOPE.1;
    report(
        2,
        ok,
        &format!(
            "gaussian rel {g:.2e} (<{GAUSSIAN_REL:e}), rabi {r:.2e} (<{RABI_ABS:e}), E0 {e:.9} (0.5 ± {:e}), slope {s:.3} (2 ± 0.2)",
            OSCILLATOR.1
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_03_qubit_algebra() {
    let m = selftest::qubit_measurements(2024, N_STATES, N_SEPARABLE).unwrap();
    let worst = m.pure_err.max(m.mixed_err).max(m.separable_err);
    let ok = worst < QUBIT_TOL && m.identity_err < QUBIT_TOL && m.separable_bell_max <= 0.5 + QUBIT_TOL;
    report(
        3,
        ok,
        &format!(
            "closed forms vs brute force {worst:.2e}, F identity {:.2e} (<{QUBIT_TOL:e}, {N_STATES} states), separable F max {:.15} over {N_SEPARABLE}",
            m.identity_err, m.separable_bell_max
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_04_holography_washout() {
    let m = selftest::washout_measurements(&dmolsim::holography::HoloConfig::default()).unwrap();
    let min = |v: &[f64]| v.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_sum = m.v_sum.iter().cloned().fold(0.0, f64::max);
    let ok = max_sum < V_SUM_MAX && min(&m.v_a) > V_PATH_MIN && min(&m.v_b) > V_PATH_MIN && m.complement_offset < m.cell;
    report(
        4,
        ok,
        &format!(
            "orders {:?}: V_sum max {max_sum:.4} (<{V_SUM_MAX}), V_A min {:.4}, V_B min {:.4} (>{V_PATH_MIN}), min/max offset {:.4} (< cell {})",
            m.orders,
            min(&m.v_a),
            min(&m.v_b),
            m.complement_offset,
            m.cell
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_05_desk_run() {
    let d = desk();
    let closure = d.zero.closure.max(d.pi.closure);
    let a = RunConfig::minimal().analysis;
    let comb = analysis::ati_comb(&d.zero.joint, EnergyAxis::Electron, a.ati_sigma_ev, 30.0).unwrap();
    let total = analysis::ati_comb(&d.zero.joint, EnergyAxis::Total, a.ati_sigma_ev, 30.0).ok();
    let refl = analysis::reflection_mismatch(&d.zero.joint, &d.pi.joint).unwrap();
    let ok = closure < CLOSURE && (comb.spacing_ev - ATI_SPACING.0).abs() <= ATI_SPACING.1 && refl < REFLECTION;
    report(
        5,
        ok,
        &format!(
            "ledger closure {closure:.2e} (<{CLOSURE:e}), photoelectron comb spacing {:.3} eV ({} ± {}) from peaks {:?} (E_e+KER: {:?}), CEP 0/π reflection mismatch {refl:.2e} (<{REFLECTION})",
            comb.spacing_ev,
            ATI_SPACING.0,
            ATI_SPACING.1,
            comb.peaks_ev,
            total.map(|c| (c.spacing_ev * 1000.0).round() / 1000.0)
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_06_pathway_ordering() {
    let d = desk();
    let s = ker(&d.zero.joint);
    let peak = s.channel(ChannelSel::Both).iter().cloned().fold(0.0, f64::max);
    // bins that carry at least 1e-3 of the peak yield
    let live: Vec<usize> = (0..s.bins.n).filter(|&i| s.g[i] + s.u[i] >= 1e-3 * peak).collect();
    let low_bad: Vec<f64> = live.iter().filter(|&&i| s.bins.center(i) < U_DOMINATES_BELOW && s.u[i] <= s.g[i]).map(|&i| s.bins.center(i)).collect();
    let high_bad: Vec<f64> = live.iter().filter(|&&i| s.bins.center(i) > G_DOMINATES_ABOVE && s.g[i] <= s.u[i]).map(|&i| s.bins.center(i)).collect();
    let crossing = s.dominance_crossing();
    let ok = low_bad.is_empty() && high_bad.is_empty() && crossing.is_some_and(|c| (CROSSING.0..=CROSSING.1).contains(&c));
    let ratio = |lo: f64, hi: f64| {
        let (g, u) = s.window_yields(lo, hi);
        g / u
    };
    report(
        6,
        ok,
        &format!(
            "u>g below {U_DOMINATES_BELOW} eV violated in {} bins, g>u above {G_DOMINATES_ABOVE} eV violated in {} bins, crossing {:?} eV (want [{}, {}]); g/u in [0,1.5) {:.3}, [2.5,3) {:.3}, [3,3.5) {:.3}",
            low_bad.len(),
            high_bad.len(),
            crossing.map(|c| (c * 1000.0).round() / 1000.0),
            CROSSING.0,
            CROSSING.1,
            ratio(0.0, 1.5),
            ratio(2.5, 3.0),
            ratio(3.0, 3.5)
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_07_correlation() {
    let d = desk();
    let c = analysis::correlation_curve(&d.zero.joint, &analysis::CorrelationOptions::default()).unwrap();
    let changes = c.sign_changes(SIGN_WINDOW.0, SIGN_WINDOW.1);
    let max_abs = c.max_abs();

    // qubit-synthesized perfect localization: C(KER) must follow −2αβ cos φ
    let px = Grid1D::new(-1.5, 301, 0.01).unwrap();
    let k = Grid1D::new(4.0, 160, 0.25).unwrap();
    let mu = units::DEUTERON_MASS_AU / 2.0;
    let opts = analysis::CorrelationOptions { rel_threshold: 0.0, ..Default::default() };
    let bins = analysis::Binning::new(0.0, opts.ker_bin_ev, 400).unwrap();
    let weight = |e: f64| 0.5 + 0.45 * (2.3 * e).sin();
    let phase = |e: f64| 6.0 * e - 1.0;
    let sector = |i: usize| if i.is_multiple_of(2) { Sector::Even } else { Sector::Odd };
    let ker_of = |ik: usize| units::au_to_ev(k.point(ik).powi(2) / (2.0 * mu));
    let states: Vec<Option<ParityPureState>> = (0..k.n)
        .map(|ik| {
            let i = bins.index(ker_of(ik))?;
            ParityPureState::from_weight(weight(bins.center(i)), phase(bins.center(i)), sector(i)).ok()
        })
        .collect();
    let profile = |p: f64| (-(p - 0.7).powi(2) / 0.03).exp();
    let j = analysis::synthetic_joint(px, k, mu, |ik| states[ik], profile, 0.0, profile).unwrap();
    let sc = analysis::correlation_curve(&j, &opts).unwrap();
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for i in 0..sc.bins.n {
        if let Some(v) = sc.c[i] {
            let e = sc.bins.center(i);
            let s = ParityPureState::from_weight(weight(e), phase(e), sector(bins.index(e).unwrap())).unwrap();
            worst = worst.max((v - qubits::correlation_pure(&s)).abs());
            checked += 1;
        }
    }
    let ok = changes >= MIN_SIGN_CHANGES && max_abs <= 1.0 && worst < SYNTHETIC_TOL && checked > 20;
    report(
        7,
        ok,
        &format!(
            "desk run: {changes} sign changes in [{}, {}] eV (>= {MIN_SIGN_CHANGES}), max |C| {max_abs:.3} (<= 1); synthetic: max |C - (-2ab cos phi)| {worst:.2e} over {checked} bins (<{SYNTHETIC_TOL:e})",
            SIGN_WINDOW.0, SIGN_WINDOW.1
        ),
    );
    assert!(ok);
}

fn eraser_report(n: u32, label: &str, e: &analysis::EraserComparison) -> bool {
    let ok = e.weight_ratio() >= BALANCE && e.restoration() >= RESTORATION;
    report(
        n,
        ok,
        &format!(
            "{label}: KER [{:.2}, {:.2}) eV, g/u balance {:.3} (>= {BALANCE}), V_g {:.3}, V_u {:.3}, V_channels {:.3}, V_both {:.3}, ratio {:.2} (>= {RESTORATION}), probe {:?}",
            e.window.0,
            e.window.1,
            e.weight_ratio(),
            e.v_g,
            e.v_u,
            e.v_channels,
            e.v_both,
            e.restoration(),
            e.probe
        ),
    );
    ok
}

/// The 1D-electron variant; see `criterion_08_eraser_2d` for the coarse 2D mode.
#[test]
fn criterion_08_eraser_1d() {
    let d = desk();
    let s = ker(&d.zero.joint);
    let cfg = RunConfig::minimal().analysis;
    let windows = s.balanced_windows((cfg.ker_window_ev[0], cfg.ker_window_ev[1]), ERASER_WIDTH_EV, BALANCE);
    let Some(&w) = windows.first() else {
        report(8, false, "no KER window with balanced channel weights");
        panic!("no balanced window");
    };
    let e = analysis::eraser_1d(&d.zero.joint, w, cfg.separation_min_au, cfg.separation_max_au, cfg.separation_step_au).unwrap();
    assert!(eraser_report(8, "1D electron", &e));
}

/// Coarse 2D electron mode. Hours on one core, so it only runs on request:
/// `cargo test --release --test acceptance -- --ignored criterion_08_eraser_2d`.
#[test]
#[ignore]
fn criterion_08_eraser_2d() {
    let dir = scratch("desk_2d");
    let mut cfg = desk_config(0.0);
    cfg.grids.electron_dim = dmolsim::dissoc::ElectronDim::Two;
    let run = run_stage(&cfg, &dir);
    let s = ker(&run.joint);
    let a = &cfg.analysis;
    let windows = s.balanced_windows((a.ker_window_ev[0], a.ker_window_ev[1]), ERASER_WIDTH_EV, BALANCE);
    let w = *windows.first().expect("balanced window");
    let shells = analysis::ati_comb(&run.joint, EnergyAxis::Electron, a.ati_sigma_ev, 30.0).unwrap().peaks_ev;
    let e = analysis::eraser_2d(&run.joint, w, &shells, cfg.holo.d_au, 2).unwrap();
    assert!(eraser_report(8, "coarse 2D", &e));
}

#[test]
fn criterion_09_ion_asymmetry_map() {
    let mut cfg = RunConfig::minimal();
    cfg.ion1d.intensity_wcm2 = ION_INTENSITY;
    let ic = cfg.ion_config().unwrap();
    let t = cfg.ion1d.t_ion_cycles();
    let map = ion1d::scan_tion(&ic, &t).unwrap();
    let max_abs = map.a.iter().flatten().flatten().fold(0.0f64, |m, v| m.max(v.abs()));

    // g/u → L/R unitarity on the propagated amplitudes of two columns
    let neutral = ion1d::neutral_ground_state(&ic).unwrap();
    let mut unitarity: f64 = 0.0;
    for &c in &[t[0], t[t.len() / 2]] {
        let st = ion1d::franck_condon_launch(&ic, Some(&neutral), c * ic.pulse.cycle_period()).unwrap();
        let (st, _) = ion1d::propagate_ion(&ic, &st).unwrap();
        let dis = ion1d::dissociative_amplitudes(&ic, &st).unwrap();
        for (&g, &u) in dis.g.iter().zip(&dis.u) {
            let (r, l) = ion1d::d_plus_right_left(g, u);
            let scale = (g.norm_sqr() + u.norm_sqr()).max(f64::MIN_POSITIVE);
            unitarity = unitarity.max((r.norm_sqr() + l.norm_sqr() - g.norm_sqr() - u.norm_sqr()).abs() / scale);
        }
    }

    let step = cfg.ion1d.t_ion_step_cycles;
    let shift = (0.5 / step).round() as usize;
    assert!((shift as f64 * step - 0.5).abs() < 1e-12, "scan step must divide half a cycle");
    let residuals: Vec<f64> = (0..t.len() - shift)
        .map(|i| ion1d::antisymmetry_residual(&map.ker_ev, &map.a[i], &map.a[i + shift], ANTISYMMETRY_KER_MIN).unwrap_or(f64::INFINITY))
        .collect();
    let worst = residuals.iter().cloned().fold(0.0, f64::max);
    let ok = max_abs <= 1.0 && unitarity < UNITARITY && worst < ANTISYMMETRY;
    report(
        9,
        ok,
        &format!(
            "{} columns at {ION_INTENSITY:e} W/cm2: max |A| {max_abs:.4} (<= 1), unitarity {unitarity:.2e} (<{UNITARITY:e}), worst half-cycle residual above {ANTISYMMETRY_KER_MIN} eV {worst:.4} (<{ANTISYMMETRY}) over {} pairs",
            t.len(),
            residuals.len()
        ),
    );
    assert!(ok);
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| !p.file_name().unwrap().to_string_lossy().starts_with("manifest_"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn criterion_10_reproducibility() {
    let mut cfg = desk_config(0.3);
    cfg.laser.duration_cycles = 4.0;
    cfg.ion1d.t_ion_min_cycles = 27.5;
    cfg.ion1d.t_ion_max_cycles = 28.0;
    cfg.ion1d.t_ion_step_cycles = 0.25;
    cfg.ion1d.duration_cycles = 56.0;
    cfg.holo.p_step_au = 0.01;
    let mut compared = 0;
    let mut mismatched = vec![];
    let dirs = [scratch("repro_a"), scratch("repro_b")];
    for dir in &dirs {
        for stage in [Stage::Run, Stage::Analyze, Stage::Ion1d, Stage::Holo, Stage::Entangle] {
            orchestrate(stage, &cfg, &StageOptions::new(dir)).unwrap();
        }
    }
    let (a, b) = (files(&dirs[0]), files(&dirs[1]));
    assert_eq!(a.iter().map(|x| &x.0).collect::<Vec<_>>(), b.iter().map(|x| &x.0).collect::<Vec<_>>());
    for ((name, x), (_, y)) in a.iter().zip(&b) {
        compared += 1;
        if x != y {
            mismatched.push(name.clone());
        }
    }
    // manifests differ only in wall time and paths; their output digests must agree
    let digests = |d: &Path| -> Vec<String> {
        let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("manifest_run.json")).unwrap()).unwrap();
        m["outputs"].as_array().unwrap().iter().map(|o| o["sha256"].as_str().unwrap().to_string()).collect()
    };
    let same_digests = digests(&dirs[0]) == digests(&dirs[1]);
    let ok = mismatched.is_empty() && same_digests && compared >= 10;
    report(10, ok, &format!("{compared} output files compared byte for byte across two runs, mismatched: {mismatched:?}"));
    assert!(ok);
    let (j, _) = io::read_joint(&dirs[0].join("joint.bin")).unwrap();
    assert!(j.norm_sqr() > 0.0 && j.amp(Channel::G, 0, 0).is_finite());
}
