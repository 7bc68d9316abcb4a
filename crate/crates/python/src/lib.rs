use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use dmolsim::analysis;
use dmolsim::config;
use dmolsim::io::{self, ArrayData};
use dmolsim::orchestrate::{self, Stage, StageOptions};
use dmolsim::qubits::{self, ParityPureState, Sector};
use dmolsim::{selftest, units, Error};

fn to_py(e: Error) -> PyErr {
    match e.exit_code() {
        2 => PyValueError::new_err(e.to_string()),
        4 => PyIOError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

type SelftestRows = Vec<(String, String, f64, bool)>;
type ComplexArray = (String, Vec<usize>, Vec<(f64, f64)>);

fn sector(name: &str) -> PyResult<Sector> {
    match name {
        "even" => Ok(Sector::Even),
        "odd" => Ok(Sector::Odd),
        _ => Err(PyValueError::new_err(format!("sector must be 'even' or 'odd', got {name:?}"))),
    }
}

/// Photon energy [eV] at `wavelength_nm`.
#[pyfunction]
fn photon_energy_ev(wavelength_nm: f64) -> PyResult<f64> {
    units::photon_energy(wavelength_nm).map_err(to_py)
}

#[pyfunction]
fn ponderomotive_energy_ev(intensity_wcm2: f64, wavelength_nm: f64) -> PyResult<f64> {
    units::ponderomotive_energy_ev(intensity_wcm2, wavelength_nm).map_err(to_py)
}

/// `(C, F)` of the pure parity state with weight `alpha_sq` and phase `phi`.
#[pyfunction]
#[pyo3(signature = (alpha_sq, phi, sector_name = "even"))]
fn correlation_and_fidelity(alpha_sq: f64, phi: f64, sector_name: &str) -> PyResult<(f64, f64)> {
    let s = ParityPureState::from_weight(alpha_sq, phi, sector(sector_name)?).map_err(to_py)?;
    Ok((qubits::correlation_pure(&s), qubits::bell_fidelity(&s.density())))
}

/// Hash of a configuration text after validation and overrides.
#[pyfunction]
#[pyo3(signature = (text, overrides = vec![]))]
fn config_hash(text: &str, overrides: Vec<String>) -> PyResult<String> {
    let c = config::parse_config_with(text, &overrides).map_err(to_py)?;
    c.check().map_err(to_py)?;
    Ok(c.hash())
}

/// Runs the oracle suites; returns `(passed, [(suite, name, value, passed)])`.
#[pyfunction]
#[pyo3(signature = (seed = 0))]
fn run_selftest(py: Python<'_>, seed: u64) -> PyResult<(bool, SelftestRows)> {
    let r = py.detach(|| selftest::run_all(seed)).map_err(to_py)?;
    let rows = r.checks.iter().map(|c| (c.suite.to_string(), c.name.clone(), c.value, c.passed)).collect();
    Ok((r.passed(), rows))
}

/// Runs one pipeline stage; returns the manifest as JSON text.
#[pyfunction]
#[pyo3(signature = (stage, config_text, out, overrides = vec![], inputs = vec![], allow_mixed_hash = false))]
fn run_stage(
    py: Python<'_>,
    stage: &str,
    config_text: &str,
    out: PathBuf,
    overrides: Vec<String>,
    inputs: Vec<PathBuf>,
    allow_mixed_hash: bool,
) -> PyResult<String> {
    let stage = Stage::parse(stage).map_err(to_py)?;
    let cfg = config::parse_config_with(config_text, &overrides).map_err(to_py)?;
    let mut opts = StageOptions::new(out);
    opts.inputs = inputs;
    opts.allow_mixed_hash = allow_mixed_hash;
    let m = py.detach(|| orchestrate::orchestrate(stage, &cfg, &opts)).map_err(to_py)?;
    serde_json::to_string(&m).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

/// Reads a real array file: `(header_json, shape, values)`.
#[pyfunction]
fn read_real_array(path: PathBuf) -> PyResult<(String, Vec<usize>, Vec<f64>)> {
    let (h, d) = io::read_array(&path).map_err(to_py)?;
    let ArrayData::F64(v) = d else {
        return Err(PyValueError::new_err("complex array; use read_complex_array"));
    };
    Ok((serde_json::to_string(&h).unwrap_or_default(), h.shape, v))
}

/// Reads a complex array file: `(header_json, shape, values)`.
#[pyfunction]
fn read_complex_array(path: PathBuf) -> PyResult<ComplexArray> {
    let (h, v) = orchestrate::read_complex(&path).map_err(to_py)?;
    let shape = h.shape.clone();
    Ok((serde_json::to_string(&h).unwrap_or_default(), shape, v.iter().map(|z| (z.re, z.im)).collect()))
}

/// Channel-resolved KER spectrum of a joint file: `(ker_ev, yield_g, yield_u)`.
#[pyfunction]
#[pyo3(signature = (path, bin_ev = analysis::DEFAULT_KER_BIN_EV))]
fn ker_spectrum(path: PathBuf, bin_ev: f64) -> PyResult<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let (j, _) = io::read_joint(&path).map_err(to_py)?;
    let s = analysis::ker_spectrum(&j, bin_ev).map_err(to_py)?;
    Ok((s.bins.centers(), s.g, s.u))
}

/// C(KER) of a joint file with default cuts: `(ker_ev, c)`, NaN where undefined.
#[pyfunction]
fn correlation_curve(path: PathBuf) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let (j, _) = io::read_joint(&path).map_err(to_py)?;
    let c = analysis::correlation_curve(&j, &analysis::CorrelationOptions::default()).map_err(to_py)?;
    Ok((c.bins.centers(), c.c.iter().map(|v| v.unwrap_or(f64::NAN)).collect()))
}

#[pymodule]
fn dmolsim_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(photon_energy_ev, m)?)?;
    m.add_function(wrap_pyfunction!(ponderomotive_energy_ev, m)?)?;
    m.add_function(wrap_pyfunction!(correlation_and_fidelity, m)?)?;
    m.add_function(wrap_pyfunction!(config_hash, m)?)?;
    m.add_function(wrap_pyfunction!(run_selftest, m)?)?;
    m.add_function(wrap_pyfunction!(run_stage, m)?)?;
    m.add_function(wrap_pyfunction!(read_real_array, m)?)?;
    m.add_function(wrap_pyfunction!(read_complex_array, m)?)?;
    m.add_function(wrap_pyfunction!(ker_spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(correlation_curve, m)?)?;
    Ok(())
}
