mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ion_cnot::experiments::{
    fit_double_sine_decay, fit_fringe, phase_grid, run_fringe_scan, run_rabi_scan, run_truth_table,
    FitResult, IDEAL_TRUTH_TABLE,
};
use ion_cnot::pulses::{self, pulses_from_json};
use ion_cnot::readout::{
    estimate_from_references, estimate_p_down, simulate_histogram, CountHistogram,
};
use ion_cnot::spectator::{
    exact_shifts, leakage_csv, leakage_scan, power_law_exponent, shift_table, shift_table_csv,
};
use ion_cnot::state::BasisLabel;
use ion_cnot::{Error, Readout, Recipe};
use serde_json::{json, Value};

use crate::config::{parse_duration, Resolved, RunConfig};

/// Measured logic table, shown beside simulated truth tables.
const MEASURED_TABLE: [f64; 4] = [0.989, 0.050, 0.019, 0.968];

#[derive(Parser)]
#[command(
    name = "ion-cnot",
    version,
    about = "Trapped-ion wave-packet CNOT simulator"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON config file, or a previous run's summary
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for all sampled readout
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Noise off and exact readout
    #[arg(long, global = true)]
    ideal: bool,
    #[arg(long, global = true, value_name = "HZ")]
    omega_z_hz: Option<f64>,
    #[arg(long, global = true, value_name = "HZ")]
    omega_00_hz: Option<f64>,
    #[arg(long, global = true, conflicts_with = "eta")]
    target_ratio: Option<f64>,
    #[arg(long, global = true)]
    eta: Option<f64>,
    /// Contrast-decay time, e.g. 170us
    #[arg(long, global = true, value_parser = parse_duration)]
    tau: Option<f64>,
    /// Disable contrast decay
    #[arg(long, global = true, conflicts_with = "tau")]
    no_decay: bool,
    #[arg(long, global = true)]
    prep_error: Option<f64>,
    #[arg(long, global = true)]
    lambda_bright: Option<f64>,
    #[arg(long, global = true)]
    lambda_dark: Option<f64>,
    #[arg(long, global = true)]
    shots: Option<usize>,
    #[arg(long, global = true)]
    n_max: Option<usize>,
    /// Directory for default output files
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    csv: Option<PathBuf>,
    #[arg(long, global = true)]
    json: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// P↓ after the gate for the four basis inputs
    TruthTable,
    /// Carrier drive of the superposition input versus time, with a two-frequency fit
    RabiScan {
        #[arg(long, default_value = "150us", value_parser = parse_duration)]
        tmax: f64,
        #[arg(long, default_value = "1us", value_parser = parse_duration)]
        step: f64,
        #[arg(long)]
        no_fit: bool,
    },
    /// Interferometric phase scan through the gate, with a sinusoid fit
    FringeScan {
        #[arg(long, default_value_t = 24)]
        points: usize,
        /// Remove motional coherence after the gate
        #[arg(long)]
        incoherent: bool,
    },
    /// Perturbative versus exact light shifts of each level
    Stark,
    /// Spectator-level leakage against gate speed Ω₀₀/ω_z
    Leakage {
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "0.005,0.01,0.02,0.04,0.08"
        )]
        speeds: Vec<f64>,
    },
    /// Simulated or supplied count histograms and the P↓ estimators
    ReadoutCalib {
        /// P↓ of the simulated sample
        #[arg(long, default_value_t = 0.5)]
        p: f64,
        /// Histogram to analyse (CSV `bin,count` or JSON) instead of simulating one
        #[arg(long)]
        hist: Option<PathBuf>,
        #[arg(long, requires = "dark")]
        bright: Option<PathBuf>,
        #[arg(long, requires = "bright")]
        dark: Option<PathBuf>,
    },
    /// Apply a JSON pulse list to a prepared input and report the final populations
    Sequence {
        #[arg(long)]
        pulses: PathBuf,
        /// down0, up0, down2, up2, scan-superposition or phase-state:<rad>
        #[arg(long, default_value = "down0")]
        input: String,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::TruthTable => "truth-table",
            Command::RabiScan { .. } => "rabi-scan",
            Command::FringeScan { .. } => "fringe-scan",
            Command::Stark => "stark",
            Command::Leakage { .. } => "leakage",
            Command::ReadoutCalib { .. } => "readout-calib",
            Command::Sequence { .. } => "sequence",
        }
    }
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: if e.is_config() { 2 } else { 3 },
            message: e.to_string(),
        }
    }
}

fn config_error(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

fn resolve(common: &Common) -> Result<Resolved, Failure> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(v) = common.omega_z_hz {
        cfg.trap.omega_z_hz = Some(v);
    }
    if let Some(v) = common.omega_00_hz {
        cfg.laser.omega_00_hz = Some(v);
    }
    if let Some(v) = common.eta {
        cfg.trap.eta = Some(v);
        cfg.trap.target_ratio = None;
    }
    if let Some(v) = common.target_ratio {
        cfg.trap.target_ratio = Some(v);
        cfg.trap.eta = None;
    }
    if let Some(v) = common.tau {
        cfg.noise.tau_s = Some(Some(v));
        cfg.noise.tau_us = None;
    }
    if common.no_decay {
        cfg.noise.tau_s = Some(None);
        cfg.noise.tau_us = None;
    }
    if let Some(v) = common.prep_error {
        cfg.noise.prep_error = Some(v);
    }
    if let Some(v) = common.lambda_bright {
        cfg.detector.lambda_bright = Some(v);
    }
    if let Some(v) = common.lambda_dark {
        cfg.detector.lambda_dark = Some(v);
    }
    if let Some(v) = common.shots {
        cfg.shots = Some(v);
    }
    if let Some(v) = common.n_max {
        cfg.n_max = Some(v);
    }
    if let Some(v) = common.seed {
        cfg.seed = Some(v);
    }
    if common.ideal {
        cfg.ideal = Some(true);
    }
    if let Some(v) = &common.out_dir {
        cfg.output.dir = Some(v.display().to_string());
    }
    Ok(cfg.resolve()?)
}

struct Outputs {
    csv: PathBuf,
    json: PathBuf,
}

fn outputs(common: &Common, cfg: &Resolved, command: &str) -> Outputs {
    let dir = PathBuf::from(cfg.output.dir.clone().unwrap_or_else(|| ".".into()));
    let pick = |flag: &Option<PathBuf>, file: &Option<String>, ext: &str| {
        flag.clone()
            .or_else(|| file.as_ref().map(PathBuf::from))
            .unwrap_or_else(|| dir.join(format!("{command}.{ext}")))
    };
    Outputs {
        csv: pick(&common.csv, &cfg.output.csv, "csv"),
        json: pick(&common.json, &cfg.output.json, "json"),
    }
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Failure {
            code: 3,
            message: format!("cannot create {}: {e}", parent.display()),
        })?;
    }
    std::fs::write(path, text).map_err(|e| Failure {
        code: 3,
        message: format!("cannot write {}: {e}", path.display()),
    })
}

fn readout(cfg: &Resolved, command: &str) -> Result<Readout, Failure> {
    if cfg.ideal {
        return Ok(Readout::Bypass);
    }
    let seed = cfg.seed.ok_or_else(|| {
        config_error(format!(
            "{command} samples readout noise: pass --seed or --ideal"
        ))
    })?;
    Ok(Readout::simulated(cfg.detector()?, cfg.shots, seed))
}

fn fit_json(fit: &Result<FitResult, Error>) -> Value {
    match fit {
        Ok(f) => serde_json::to_value(f).unwrap_or(Value::Null),
        Err(e) => json!({ "error": e.to_string() }),
    }
}

fn read_histogram(path: &Path) -> Result<CountHistogram, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| config_error(format!("cannot read histogram {}: {e}", path.display())))?;
    if text.trim_start().starts_with('{') {
        serde_json::from_str(&text)
            .map_err(|e| config_error(format!("bad histogram {}: {e}", path.display())))
    } else {
        Ok(CountHistogram::from_csv(&text)?)
    }
}

/// Runs one subcommand; returns (csv, results, summary line, deferred error).
fn execute(
    command: &Command,
    cfg: &Resolved,
) -> Result<(String, Value, String, Option<Failure>), Failure> {
    let model = cfg.model()?;
    let noise = cfg.noise()?;
    let name = command.name();
    match command {
        Command::TruthTable => {
            let rows = run_truth_table(&model, &noise, &readout(cfg, name)?)?;
            let mut csv = String::from("input,p_down,sigma\n");
            for r in &rows {
                csv.push_str(&format!("{},{},{}\n", r.input, r.p_down, r.sigma));
            }
            let line = rows
                .iter()
                .map(|r| format!("{} {:.3}±{:.3}", r.input, r.p_down, r.sigma))
                .collect::<Vec<_>>();
            let results = json!({ "rows": rows, "ideal": IDEAL_TRUTH_TABLE, "measured_reference": MEASURED_TABLE });
            Ok((
                csv,
                results,
                format!("truth table P↓: {}", line.join(", ")),
                None,
            ))
        }
        Command::RabiScan { tmax, step, no_fit } => {
            if step.is_nan() || *step <= 0.0 {
                return Err(config_error("--step must be positive"));
            }
            let count = (tmax / step + 1e-9).floor() as usize + 1;
            let times: Vec<f64> = (0..count).map(|i| i as f64 * step).collect();
            let curve = run_rabi_scan(&model, &noise, &readout(cfg, name)?, &times)?;
            let mut results = json!({ "points": curve.len(), "model_ratio": model.ratio(), "gate_time_s": model.gate_time() });
            let mut deferred = None;
            let line = if *no_fit {
                format!("rabi scan: {} points", curve.len())
            } else {
                let fit = fit_double_sine_decay(&curve);
                results["fit"] = fit_json(&fit);
                match &fit {
                    Ok(f) => format!(
                        "rabi scan: {} points; ratio {:.4} ± {:.4}; tau {:.1} ± {:.1} us",
                        curve.len(),
                        f.value("ratio"),
                        f.sigma("ratio"),
                        f.value("tau") * 1e6,
                        f.sigma("tau") * 1e6
                    ),
                    Err(e) => {
                        deferred = Some(Failure {
                            code: 3,
                            message: e.to_string(),
                        });
                        format!("rabi scan: {} points; fit failed", curve.len())
                    }
                }
            };
            Ok((curve.to_csv(), results, line, deferred))
        }
        Command::FringeScan { points, incoherent } => {
            if *points < 3 {
                return Err(config_error("--points must be at least 3"));
            }
            let curve = run_fringe_scan(
                &model,
                &noise,
                &readout(cfg, name)?,
                &phase_grid(*points),
                !incoherent,
            )?;
            let fit = fit_fringe(&curve);
            let results =
                json!({ "points": curve.len(), "coherent": !incoherent, "fit": fit_json(&fit) });
            let fit = fit?;
            let line = format!(
                "fringe scan ({}): contrast {:.4} ± {:.4}; phi0 {:.4} rad",
                if *incoherent {
                    "incoherent"
                } else {
                    "coherent"
                },
                fit.value("contrast"),
                fit.sigma("contrast"),
                fit.value("phi0")
            );
            Ok((curve.to_csv(), results, line, None))
        }
        Command::Stark => {
            let rows = shift_table(&model)?;
            let pairs = exact_shifts(&model)?;
            let max_diff = pairs
                .iter()
                .map(|p| p.differential().abs())
                .fold(0.0, f64::max)
                / model.omega_z();
            let max_rel = rows.iter().map(|r| r.rel_err).fold(0.0, f64::max);
            let speed = model.omega_base() / model.omega_z();
            let results = json!({ "rows": rows, "omega_over_omega_z": speed, "max_differential_over_omega_z": max_diff, "max_rel_err": max_rel });
            let line = format!(
                "stark: Ω/ω_z = {speed:.4}; perturbative differential 0; exact max |differential| {max_diff:.1e}·ω_z; max rel err {max_rel:.2e}"
            );
            Ok((shift_table_csv(&rows), results, line, None))
        }
        Command::Leakage { speeds } => {
            let points = leakage_scan(&model, speeds)?;
            let exponent = if points.len() >= 2 {
                power_law_exponent(&points)
            } else {
                f64::NAN
            };
            let results = json!({ "points": points, "exponent": exponent });
            let line = format!(
                "leakage: {} speeds; power-law exponent {exponent:.3}",
                points.len()
            );
            Ok((leakage_csv(&points), results, line, None))
        }
        Command::ReadoutCalib {
            p,
            hist,
            bright,
            dark,
        } => {
            let det = cfg.detector()?;
            let needs_seed = hist.is_none() || bright.is_none();
            let seed = match cfg.seed {
                Some(s) => s,
                None if needs_seed => {
                    return Err(config_error("readout-calib simulates counts: pass --seed"))
                }
                None => 0,
            };
            let sample = match hist {
                Some(path) => read_histogram(path)?,
                None => simulate_histogram(*p, cfg.shots, &det, seed)?,
            };
            let (ref_bright, ref_dark) = match (bright, dark) {
                (Some(b), Some(d)) => (read_histogram(b)?, read_histogram(d)?),
                _ => (
                    simulate_histogram(1.0, cfg.shots, &det, seed.wrapping_add(1))?,
                    simulate_histogram(0.0, cfg.shots, &det, seed.wrapping_add(2))?,
                ),
            };
            let parametric = estimate_p_down(&sample, &det)?;
            let empirical = estimate_from_references(&sample, &ref_bright, &ref_dark)?;
            let results = json!({
                "detector": det,
                "sample": sample,
                "reference_bright": ref_bright,
                "reference_dark": ref_dark,
                "estimate_parametric": parametric,
                "estimate_references": empirical,
            });
            let line = format!(
                "readout: {} shots; P↓ {:.4} ± {:.4} (Poisson model), {:.4} ± {:.4} (reference histograms)",
                sample.total(),
                parametric.p_down,
                parametric.sigma,
                empirical.p_down,
                empirical.sigma
            );
            Ok((sample.to_csv(), results, line, None))
        }
        Command::Sequence {
            pulses: path,
            input,
        } => {
            let recipe: Recipe = input.parse()?;
            let text = std::fs::read_to_string(path).map_err(|e| {
                config_error(format!("cannot read pulse list {}: {e}", path.display()))
            })?;
            let list = pulses_from_json(&text)?;
            let mut state = pulses::prep(recipe, &model, &noise)?;
            for p in &list {
                state = pulses::drive(&state, p, &model, &noise)?;
            }
            let mut csv = String::from("level,population\n");
            let mut populations = serde_json::Map::new();
            for k in 0..state.dim() {
                let label = BasisLabel::from_index(k, cfg.n_max);
                let pop = state.population(label);
                csv.push_str(&format!("{label},{pop}\n"));
                populations.insert(label.to_string(), json!(pop));
            }
            let results = json!({ "input": recipe.to_string(), "pulses": list, "p_down": state.p_down(), "populations": populations });
            let line = format!(
                "sequence: {} pulses on {recipe}; P↓ {:.6}",
                list.len(),
                state.p_down()
            );
            Ok((csv, results, line, None))
        }
    }
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let cfg = resolve(&cli.common)?;
    let name = cli.command.name();
    let out = outputs(&cli.common, &cfg, name);
    let (csv, results, line, deferred) = execute(&cli.command, &cfg)?;
    let summary = json!({ "command": name, "config": cfg.to_config(), "results": results });
    let text = serde_json::to_string_pretty(&summary).map_err(|e| Failure {
        code: 3,
        message: e.to_string(),
    })?;
    write(&out.csv, &csv)?;
    write(&out.json, &(text + "\n"))?;
    println!("{line}");
    match deferred {
        Some(f) => Err(f),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
