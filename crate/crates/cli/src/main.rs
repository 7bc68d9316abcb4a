use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dmolsim::config::{self, RunConfig};
use dmolsim::orchestrate::{self, AnalyzeTask, Stage, StageOptions};
use dmolsim::Error;

#[derive(Debug, Parser)]
#[command(name = "dmolsim", version, about = "Strong-field dissociative ionization of D2 on a grid")]
struct Cli {
    /// TOML run configuration; defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; 0 lets rayon decide.
    #[arg(long, global = true, env = "DMOLSIM_THREADS", default_value_t = 0)]
    threads: usize,
    /// Dot-path override such as `laser.intensity_wcm2=5e13`; repeatable.
    #[arg(long = "override", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Calibrate the soft-core model and relax the neutral ground state.
    Relax,
    /// Propagate through the pulse and write the joint amplitude.
    Run,
    /// Scan the ionic two-state model over ionization times.
    Ion1d,
    /// Evaluate the two-source holography model.
    Holo,
    /// Spectra, correlation, eraser and ATI analyses of joint files.
    Analyze {
        /// Joint amplitude files; defaults to `<out>/joint.bin`.
        #[arg(long = "input")]
        inputs: Vec<PathBuf>,
        /// Accept inputs written under different configurations.
        #[arg(long)]
        allow_mixed_hash: bool,
        /// Comma-separated subset of jes, ker, pmd, corr, eraser, ati.
        #[arg(long, value_delimiter = ',')]
        tasks: Vec<String>,
    },
    /// Tabulate C and Bell fidelity of parity states.
    Entangle,
    /// Run the analytic-oracle suites.
    Selftest,
    /// Print the fully resolved configuration.
    ShowConfig,
}

fn load(cli: &Cli) -> dmolsim::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => config::load_config(p, &cli.overrides)?,
        None => config::parse_config_with(&format!("schema_version = {}\n", config::SCHEMA_VERSION), &cli.overrides)?,
    };
    if let Some(o) = &cli.out {
        cfg.output_dir = o.display().to_string();
    }
    Ok(cfg)
}

fn execute(cli: &Cli) -> dmolsim::Result<bool> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global().map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    }
    let cfg = load(cli)?;
    let mut opts = StageOptions::new(&cfg.output_dir);
    let stage = match &cli.command {
        Command::Relax => Stage::Relax,
        Command::Run => Stage::Run,
        Command::Ion1d => Stage::Ion1d,
        Command::Holo => Stage::Holo,
        Command::Analyze { inputs, allow_mixed_hash, tasks } => {
            opts.inputs = inputs.clone();
            opts.allow_mixed_hash = *allow_mixed_hash;
            if !tasks.is_empty() {
                opts.tasks = tasks.iter().map(|t| AnalyzeTask::parse(t)).collect::<dmolsim::Result<_>>()?;
            }
            Stage::Analyze
        }
        Command::Entangle => Stage::Entangle,
        Command::Selftest => Stage::Selftest,
        Command::ShowConfig => {
            print!("{}", cfg.to_toml());
            println!("# hash = {}", cfg.hash());
            return Ok(true);
        }
    };
    let m = orchestrate::orchestrate(stage, &cfg, &opts)?;
    log::info!("{} finished in {:.1} s", stage.name(), m.wall_time_s);
    println!("{}", serde_json::to_string_pretty(&m.summary).unwrap_or_default());
    if !m.passed {
        eprintln!("{} reported failing checks", stage.name());
    }
    Ok(m.passed)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            let line = match &e {
                Error::Config { line, .. } => *line,
                _ => None,
            };
            let diag = serde_json::json!({ "error": e.kind(), "message": e.to_string(), "line": line });
            eprintln!("{diag}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
