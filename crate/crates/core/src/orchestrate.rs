//! Pipeline stages behind the command-line tool. Each stage reads the
//! validated [`RunConfig`], writes its outputs atomically under the output
//! directory and records a manifest with input and output digests.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{self, ChannelSel, EnergyAxis};
use crate::config::RunConfig;
use crate::dissoc::{JointAmplitude, Model};
use crate::error::{Error, Result};
use crate::grid::{ComplexField, Grid1D};
use crate::holography;
use crate::io::{self, ArrayData, ArrayHeader};
use crate::ion1d;
use crate::potentials::SoftCoreParams;
use crate::propagator::TwoComponentState;
use crate::qubits::{self, ParityPureState, Sector};
use crate::selftest;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Relax,
    Run,
    Ion1d,
    Holo,
    Analyze,
    Entangle,
    Selftest,
}

impl Stage {
    pub const ALL: [Stage; 7] = [Stage::Relax, Stage::Run, Stage::Ion1d, Stage::Holo, Stage::Analyze, Stage::Entangle, Stage::Selftest];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Relax => "relax",
            Stage::Run => "run",
            Stage::Ion1d => "ion1d",
            Stage::Holo => "holo",
            Stage::Analyze => "analyze",
            Stage::Entangle => "entangle",
            Stage::Selftest => "selftest",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Stage::ALL.into_iter().find(|st| st.name() == s).ok_or_else(|| Error::invalid(format!("unknown subcommand `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnalyzeTask {
    Jes,
    Ker,
    Pmd,
    Corr,
    Eraser,
    Ati,
}

impl AnalyzeTask {
    pub const ALL: [AnalyzeTask; 6] =
        [AnalyzeTask::Jes, AnalyzeTask::Ker, AnalyzeTask::Pmd, AnalyzeTask::Corr, AnalyzeTask::Eraser, AnalyzeTask::Ati];

    pub fn parse(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::invalid(format!("unknown analysis task `{s}` (jes, ker, pmd, corr, eraser, ati)")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageOptions {
    pub out: PathBuf,
    /// Joint files for `analyze`; defaults to `<out>/joint.bin`.
    pub inputs: Vec<PathBuf>,
    pub allow_mixed_hash: bool,
    pub tasks: Vec<AnalyzeTask>,
}

impl StageOptions {
    pub fn new(out: impl Into<PathBuf>) -> Self {
        StageOptions { out: out.into(), inputs: vec![], allow_mixed_hash: false, tasks: AnalyzeTask::ALL.to_vec() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

impl FileRecord {
    pub fn of(path: &Path) -> Result<Self> {
        let b = fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(FileRecord { path: path.display().to_string(), sha256: hex::encode(Sha256::digest(&b)), bytes: b.len() as u64 })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: Stage,
    pub config_hash: String,
    pub git_describe: String,
    pub threads: usize,
    pub inputs: Vec<FileRecord>,
    pub outputs: Vec<FileRecord>,
    pub wall_time_s: f64,
    /// False when a check inside the stage failed (selftest).
    pub passed: bool,
    pub summary: serde_json::Value,
}

struct Outputs {
    dir: PathBuf,
    written: Vec<PathBuf>,
    hash: String,
}

impl Outputs {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn bytes(&mut self, name: &str, b: &[u8]) -> Result<()> {
        let p = self.path(name);
        io::write_atomic(&p, b)?;
        self.written.push(p);
        Ok(())
    }

    fn text(&mut self, name: &str, s: &str) -> Result<()> {
        self.bytes(name, s.as_bytes())
    }

    fn json<T: Serialize>(&mut self, name: &str, v: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(v).map_err(|e| Error::invalid(e.to_string()))?;
        s.push('\n');
        self.text(name, &s)
    }

    fn array(&mut self, name: &str, shape: Vec<usize>, units: &str, meta: serde_json::Value, data: ArrayData) -> Result<()> {
        let mut h = ArrayHeader::new(data.dtype(), shape, units, &self.hash);
        h.meta = meta;
        let p = self.path(name);
        io::write_array(&p, &h, &data)?;
        self.written.push(p);
        Ok(())
    }
}

/// Runs one stage and writes `manifest_<stage>.json` next to its outputs.
pub fn orchestrate(stage: Stage, config: &RunConfig, opts: &StageOptions) -> Result<Manifest> {
    config.check()?;
    let start = Instant::now();
    fs::create_dir_all(&opts.out).map_err(|e| Error::io(&opts.out, e))?;
    let mut out = Outputs { dir: opts.out.clone(), written: vec![], hash: config.hash() };
    out.text("config.toml", &config.to_toml())?;
    let mut inputs = vec![];
    let (passed, summary) = match stage {
        Stage::Relax => (true, relax_stage(config, &mut out)?),
        Stage::Run => (true, run_stage(config, &mut out, &mut inputs)?),
        Stage::Ion1d => (true, ion1d_stage(config, &mut out)?),
        Stage::Holo => (true, holo_stage(config, &mut out)?),
        Stage::Analyze => (true, analyze_stage(config, opts, &mut out, &mut inputs)?),
        Stage::Entangle => (true, entangle_stage(&mut out)?),
        Stage::Selftest => selftest_stage(config, &mut out)?,
    };
    let manifest = Manifest {
        stage,
        config_hash: out.hash.clone(),
        git_describe: io::build_id(),
        threads: rayon::current_num_threads(),
        inputs: inputs.iter().map(|p: &PathBuf| FileRecord::of(p)).collect::<Result<_>>()?,
        outputs: out.written.iter().map(|p| FileRecord::of(p)).collect::<Result<_>>()?,
        wall_time_s: start.elapsed().as_secs_f64(),
        passed,
        summary,
    };
    let mut s = serde_json::to_string_pretty(&manifest).map_err(|e| Error::invalid(e.to_string()))?;
    s.push('\n');
    io::write_atomic(&opts.out.join(format!("manifest_{}.json", stage.name())), s.as_bytes())?;
    Ok(manifest)
}

fn to_json<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).unwrap_or(serde_json::Value::Null)
}

/// Digest of the sections that determine the neutral state; the laser
/// settings do not enter.
fn neutral_key(config: &RunConfig) -> String {
    let v = serde_json::json!({ "grids": config.grids, "potentials": config.potentials, "dissoc": config.dissoc });
    hex::encode(Sha256::digest(v.to_string().as_bytes()))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct NeutralMeta {
    key: String,
    axes: Vec<Grid1D>,
    soft_core: SoftCoreParams,
    energy_au: f64,
    mean_r_au: f64,
    adiabatic_mean_r_au: f64,
}

fn model_for(config: &RunConfig, soft_core: SoftCoreParams) -> Result<Model> {
    Model::new(config.model(soft_core)?)
}

fn relax_stage(config: &RunConfig, out: &mut Outputs) -> Result<serde_json::Value> {
    let soft_core = config.potentials.soft_core(config.electron_axes()?)?;
    let model = model_for(config, soft_core.clone())?;
    let n = model.prepare_neutral()?;
    let meta = NeutralMeta {
        key: neutral_key(config),
        axes: n.state.g.axes.clone(),
        soft_core,
        energy_au: n.energy,
        mean_r_au: n.mean_r,
        adiabatic_mean_r_au: n.adiabatic_mean_r,
    };
    let mut shape = vec![2];
    shape.extend(n.state.g.shape());
    let mut data = n.state.g.data.clone();
    data.extend_from_slice(&n.state.u.data);
    out.array("neutral.bin", shape, "amplitude [a.u.]", to_json(&meta), ArrayData::C128(data))?;
    let summary = serde_json::json!({
        "energy_au": n.energy,
        "mean_r_au": n.mean_r,
        "adiabatic_mean_r_au": n.adiabatic_mean_r,
        "soft_core": meta.soft_core,
    });
    out.json("neutral.json", &summary)?;
    Ok(summary)
}

/// Reuses `<out>/neutral.bin` when its key matches, otherwise relaxes.
fn load_or_relax(config: &RunConfig, out: &mut Outputs, inputs: &mut Vec<PathBuf>) -> Result<(Model, TwoComponentState)> {
    let path = out.path("neutral.bin");
    if path.exists() {
        let (h, data) = io::read_array(&path)?;
        let meta: Option<NeutralMeta> = serde_json::from_value(h.meta.clone()).ok();
        if let (Some(meta), ArrayData::C128(data)) = (meta, data) {
            if meta.key == neutral_key(config) {
                log::info!("reusing {}", path.display());
                let half = data.len() / 2;
                let g = ComplexField::from_data(meta.axes.clone(), data[..half].to_vec())?;
                let u = ComplexField::from_data(meta.axes.clone(), data[half..].to_vec())?;
                inputs.push(path);
                return Ok((model_for(config, meta.soft_core)?, TwoComponentState::new(g, u, 0.0)?));
            }
        }
        log::info!("{} belongs to another configuration; relaxing again", path.display());
    }
    relax_stage(config, out)?;
    load_or_relax(config, out, inputs)
}

fn run_stage(config: &RunConfig, out: &mut Outputs, inputs: &mut Vec<PathBuf>) -> Result<serde_json::Value> {
    let (model, neutral) = load_or_relax(config, out, inputs)?;
    let r = model.run(&neutral)?;
    let extra = serde_json::json!({ "intensity_wcm2": config.laser.intensity_wcm2, "cep_rad": config.laser.cep_rad });
    let p = out.path("joint.bin");
    io::write_joint(&p, &r.joint, &out.hash, extra)?;
    out.written.push(p);
    let ledger = serde_json::json!({
        "ledger": r.ledger,
        "closure_error": r.ledger.closure_error(),
        "main_grid_error": r.ledger.main_grid_error(),
        "accumulator_error": r.ledger.accumulator_error(),
        "projection_error": r.ledger.projection_error(),
        "final_time_au": r.final_time,
    });
    out.json("ledger.json", &ledger)?;
    let j = &r.joint;
    let mut shape = vec![j.px.n];
    shape.extend(j.py.map(|g| g.n));
    let meta = serde_json::json!({ "px": j.px, "py": j.py, "content": "photoelectron density, all ions" });
    out.array("electron_spectrum.bin", shape, "probability density [a.u.]", meta, ArrayData::F64(r.electron_spectrum.clone()))?;
    Ok(serde_json::json!({ "joint_norm": j.norm_sqr(), "closure_error": r.ledger.closure_error(), "final_time_au": r.final_time }))
}

fn ion1d_stage(config: &RunConfig, out: &mut Outputs) -> Result<serde_json::Value> {
    let ic = config.ion_config()?;
    let t = config.ion1d.t_ion_cycles();
    let map = ion1d::scan_tion(&ic, &t)?;
    out.text("asymmetry.csv", &map.to_csv())?;
    let data: Vec<f64> = map.a.iter().flatten().map(|a| a.unwrap_or(f64::NAN)).collect();
    let meta = serde_json::json!({ "t_ion_cycles": map.t_ion_cycles, "ker_ev": map.ker_ev, "layout": "t_ion, KER; NaN where undefined" });
    out.array("asymmetry.bin", vec![map.t_ion_cycles.len(), map.ker_ev.len()], "1", meta, ArrayData::F64(data))?;
    // half-cycle partners inside the scan
    let step = config.ion1d.t_ion_step_cycles;
    let shift = (0.5 / step).round() as usize;
    let mut pairs = vec![];
    if (shift as f64 * step - 0.5).abs() < 1e-9 {
        for (i, ti) in t.iter().enumerate().take(t.len().saturating_sub(shift)) {
            let res = ion1d::antisymmetry_residual(&map.ker_ev, &map.a[i], &map.a[i + shift], 1.8);
            pairs.push(serde_json::json!({ "t_ion_cycles": ti, "residual": res }));
        }
    }
    let max_abs = map.a.iter().flatten().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let summary = serde_json::json!({ "columns": t.len(), "max_abs_asymmetry": max_abs, "antisymmetry": pairs });
    out.json("ion1d.json", &summary)?;
    Ok(summary)
}

fn holo_stage(config: &RunConfig, out: &mut Outputs) -> Result<serde_json::Value> {
    let hc = config.holo_config()?;
    let parities = [(Sector::Even, "even"), (Sector::Odd, "odd")];
    let mut pmds = vec![];
    for (s, name) in parities {
        pmds.push((name, holography::pmd(&hc.with_parity(s))?));
    }
    let sum = holography::incoherent_sum(&pmds[0].1, &pmds[1].1)?;
    pmds.push(("sum", sum));
    let mut csv = String::from("order,shell_ev,map,kind,px_au\n");
    for (name, p) in &pmds {
        let meta = serde_json::json!({ "px": p.px, "py": p.py, "scale": p.scale, "layout": "px, py" });
        out.array(&format!("pmd_{name}.bin"), vec![p.px.n, p.py.n], "1 (unit max)", meta, ArrayData::F64(p.data.clone()))?;
        for n in hc.orders() {
            let e = hc.shell_energy(n);
            for (kind, xs) in [("min", holography::fringe_minima(p, e)?), ("max", holography::fringe_maxima(p, e)?)] {
                for x in xs {
                    let _ = writeln!(csv, "{n},{:.6},{name},{kind},{x:.6}", crate::units::au_to_ev(e));
                }
            }
        }
    }
    out.text("fringes.csv", &csv)?;
    let m = selftest::washout_measurements(&hc)?;
    out.json("holo.json", &m)?;
    Ok(to_json(&m))
}

fn read_inputs(opts: &StageOptions, out: &Outputs) -> Result<Vec<(PathBuf, JointAmplitude, ArrayHeader)>> {
    let paths = if opts.inputs.is_empty() { vec![out.path("joint.bin")] } else { opts.inputs.clone() };
    let mut v = vec![];
    for p in paths {
        let (j, h) = io::read_joint(&p)?;
        v.push((p, j, h));
    }
    let first = &v[0].2.config_hash;
    if let Some((p, _, h)) = v.iter().find(|x| &x.2.config_hash != first) {
        if !opts.allow_mixed_hash {
            return Err(Error::invalid(format!(
                "{} has config hash {} but {} has {}; pass --allow-mixed-hash to combine them",
                p.display(),
                h.config_hash,
                v[0].0.display(),
                first
            )));
        }
        log::warn!("combining inputs from different configurations");
    }
    Ok(v)
}

fn analyze_stage(config: &RunConfig, opts: &StageOptions, out: &mut Outputs, inputs: &mut Vec<PathBuf>) -> Result<serde_json::Value> {
    let joints = read_inputs(opts, out)?;
    let a = &config.analysis;
    let window = (a.ker_window_ev[0], a.ker_window_ev[1]);
    let mut summaries = serde_json::Map::new();
    for (idx, (path, j, _)) in joints.iter().enumerate() {
        inputs.push(path.clone());
        let tag = if joints.len() == 1 { String::new() } else { format!("{idx}_") };
        let mut s = serde_json::Map::new();
        let ker = analysis::ker_spectrum(j, a.ker_bin_ev)?;
        for task in &opts.tasks {
            match task {
                AnalyzeTask::Jes => {
                    let jes = analysis::joint_energy_spectrum(j, a.ker_bin_ev, a.ee_bin_ev)?;
                    let meta = serde_json::json!({ "ker": jes.ker, "ee": jes.ee, "layout": "KER, E_e" });
                    out.array(&format!("{tag}jes.bin"), vec![jes.ker.n, jes.ee.n], "probability per bin", meta, ArrayData::F64(jes.yields.clone()))?;
                    s.insert("jes_total".into(), jes.total().into());
                }
                AnalyzeTask::Ker => {
                    let mut csv = String::from("ker_ev,yield_g,yield_u,alpha_sq\n");
                    for (i, al) in ker.alpha_sq().iter().enumerate() {
                        let al = al.map_or("nan".to_string(), |v| format!("{v:.8e}"));
                        let _ = writeln!(csv, "{:.4},{:.8e},{:.8e},{al}", ker.bins.center(i), ker.g[i], ker.u[i]);
                    }
                    out.text(&format!("{tag}ker.csv"), &csv)?;
                    let total = |v: &[f64]| v.iter().sum::<f64>();
                    s.insert("yield_g".into(), total(&ker.g).into());
                    s.insert("yield_u".into(), total(&ker.u).into());
                    s.insert("dominance_crossing_ev".into(), to_json(&ker.dominance_crossing()));
                }
                AnalyzeTask::Pmd => {
                    for (sel, name) in [(ChannelSel::G, "g"), (ChannelSel::U, "u"), (ChannelSel::Both, "both")] {
                        let m = analysis::pmd_filtered(j, window, sel)?;
                        let mut shape = vec![m.px.n];
                        shape.extend(m.py.map(|g| g.n));
                        let meta = serde_json::json!({ "px": m.px, "py": m.py, "ker_window_ev": window });
                        out.array(&format!("{tag}pmd_{name}.bin"), shape, "probability density [a.u.]", meta, ArrayData::F64(m.data))?;
                    }
                }
                AnalyzeTask::Corr => {
                    let c = analysis::correlation_curve(j, &a.correlation_options())?;
                    let mut csv = String::from("ker_ev,c,sigma,n_same,n_opp\n");
                    for i in 0..c.bins.n {
                        let f = |v: Option<f64>| v.map_or("nan".to_string(), |v| format!("{v:.8e}"));
                        let _ = writeln!(csv, "{:.4},{},{},{:.8e},{:.8e}", c.bins.center(i), f(c.c[i]), f(c.sigma[i]), c.n_same[i], c.n_opp[i]);
                    }
                    out.text(&format!("{tag}corr.csv"), &csv)?;
                    s.insert("corr_max_abs".into(), c.max_abs().into());
                    s.insert("corr_sign_changes_1p8_3p2".into(), c.sign_changes(1.8, 3.2).into());
                }
                AnalyzeTask::Eraser => {
                    let windows = ker.balanced_windows(window, 0.5, 0.8);
                    let res = match windows.first() {
                        Some(&w) if j.py.is_none() => {
                            Some(analysis::eraser_1d(j, w, a.separation_min_au, a.separation_max_au, a.separation_step_au)?)
                        }
                        Some(&w) => {
                            let shells: Vec<f64> =
                                analysis::ati_comb(j, EnergyAxis::Electron, a.ati_sigma_ev, 30.0).map(|c| c.peaks_ev).unwrap_or_default();
                            if shells.is_empty() {
                                None
                            } else {
                                Some(analysis::eraser_2d(j, w, &shells, config.holo.d_au, 2)?)
                            }
                        }
                        None => None,
                    };
                    let v = serde_json::json!({
                        "comparison": res,
                        "restoration": res.as_ref().map(|r| r.restoration()),
                        "weight_ratio": res.as_ref().map(|r| r.weight_ratio()),
                    });
                    out.json(&format!("{tag}eraser.json"), &v)?;
                    s.insert("eraser".into(), v);
                }
                AnalyzeTask::Ati => {
                    let mut v = serde_json::Map::new();
                    for (axis, name) in [(EnergyAxis::Electron, "electron"), (EnergyAxis::Total, "total")] {
                        let comb = analysis::ati_comb(j, axis, a.ati_sigma_ev, 30.0).ok();
                        v.insert(name.into(), to_json(&comb));
                    }
                    out.json(&format!("{tag}ati.json"), &v)?;
                    s.insert("ati".into(), serde_json::Value::Object(v));
                }
            }
        }
        // keyed by position so that the file does not depend on where inputs live
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        s.insert("file".into(), name.into());
        summaries.insert(format!("input_{idx}"), serde_json::Value::Object(s));
    }
    if joints.len() == 2 {
        let m = analysis::reflection_mismatch(&joints[0].1, &joints[1].1)?;
        summaries.insert("reflection_mismatch".into(), m.into());
    }
    let v = serde_json::Value::Object(summaries);
    out.json("analysis.json", &v)?;
    Ok(v)
}

/// C and Bell fidelity of pure parity states over `(α², φ, sector)`.
fn entangle_stage(out: &mut Outputs) -> Result<serde_json::Value> {
    let mut csv = String::from("sector,alpha_sq,phi_rad,c,bell_fidelity\n");
    let mut rows = 0usize;
    for (sector, name) in [(Sector::Even, "even"), (Sector::Odd, "odd")] {
        for ia in 0..=20 {
            let a2 = ia as f64 / 20.0;
            for ip in 0..=24 {
                let phi = -std::f64::consts::PI + ip as f64 * std::f64::consts::PI / 12.0;
                let s = ParityPureState::from_weight(a2, phi, sector)?;
                let c = qubits::correlation_pure(&s);
                let f = qubits::bell_fidelity(&s.density());
                let _ = writeln!(csv, "{name},{a2:.2},{phi:.6},{c:.12},{f:.12}");
                rows += 1;
            }
        }
    }
    out.text("entangle.csv", &csv)?;
    Ok(serde_json::json!({ "rows": rows }))
}

fn selftest_stage(config: &RunConfig, out: &mut Outputs) -> Result<(bool, serde_json::Value)> {
    let report = selftest::run_all(config.seed)?;
    print!("{}", report.render());
    out.json("selftest.json", &report)?;
    Ok((report.passed(), serde_json::json!({ "suites": report.suites(), "passed": report.passed(), "checks": report.checks.len() })))
}

/// Complex amplitudes in an array file, for callers that only need data.
pub fn read_complex(path: &Path) -> Result<(ArrayHeader, Vec<Complex64>)> {
    match io::read_array(path)? {
        (h, ArrayData::C128(v)) => Ok((h, v)),
        (h, _) => Err(Error::Format { path: path.to_path_buf(), message: format!("expected c128, found {:?}", h.dtype) }),
    }
}
