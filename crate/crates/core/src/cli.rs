//! Command-line front end. Every command validates its inputs before it
//! creates the output directory, then writes plot-ready CSV/JSON together
//! with a `manifest.json` describing the run.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::lindblad::{simulate_with, SimulateOptions};
use crate::nis::{extract_junction_params, linspace, IvCurve, Junction, RateModel};
use crate::params::EngineConfig;
use crate::ramsey::{synthetic_sweep, unwrap_sweep, write_sweep_csv};
use crate::readout::{
    corrected_populations, correction_matrix, count_in_ellipse, fit_gmm, sample_shots, CorrectionMatrix, GmmModel,
    ShotSet, DEFAULT_RADIUS,
};
use crate::thermo::analyze;
use crate::transmon::{spectrum, write_spectrum_csv};

#[derive(Debug, Parser)]
#[command(name = "qotto", version, about = "Transmon quantum Otto engine simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    /// Engine configuration (JSON). Defaults to the built-in calibrated engine.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Seed for every random stream of the run.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of engine cycles.
    #[arg(long)]
    pub cycles: Option<usize>,
    /// Override a configuration value, e.g. `--set schedule.A_h=2.0`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate the engine and write trajectory.csv, report.json and rates.csv.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Disable dissipation during the flux ramps (ideal Otto cycle).
        #[arg(long)]
        ideal: bool,
    },
    /// Write the flux-dependent spectrum over the protocol.
    Spectrum {
        #[command(flatten)]
        common: Common,
    },
    /// Junction IV characteristics.
    Iv {
        #[command(subcommand)]
        action: IvAction,
    },
    /// Readout chain emulation.
    Readout {
        #[command(subcommand)]
        action: ReadoutAction,
    },
    /// Amplitude sweep of modified Ramsey fringes, unwrapped into detuning.
    Ramsey {
        #[command(flatten)]
        common: Common,
        /// Flux pulse length, ns.
        #[arg(long, default_value_t = 50.0)]
        tau: f64,
        /// Largest flux amplitude magnitude (flux quanta); swept from zero in the negative direction.
        #[arg(long, default_value_t = 0.3)]
        max_amplitude: f64,
        #[arg(long, default_value_t = 60)]
        steps: usize,
        /// Phase points per fringe.
        #[arg(long, default_value_t = 32)]
        points: usize,
        /// Readout noise, in units of the fringe amplitude.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
    },
    /// Print the built-in calibrated configuration.
    DefaultConfig {
        #[arg(long)]
        cycles: Option<usize>,
    },
}

#[derive(Debug, Subcommand)]
pub enum IvAction {
    /// Synthesize an IV curve from the device parameters.
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 401)]
        points: usize,
        /// Largest |V|, units of Δ/e.
        #[arg(long, default_value_t = 3.0)]
        vmax: f64,
    },
    /// Extract (Δ, R_T, γ_D) from an IV CSV (columns V_delta_over_e, I_nA).
    Extract {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
    },
}

#[derive(Debug, Args, Clone)]
pub struct ReadoutCommon {
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Mixture model (JSON). Defaults to the built-in overlapping layout.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Mahalanobis radius of the boundary ellipses.
    #[arg(long, default_value_t = DEFAULT_RADIUS)]
    pub radius: f64,
}

#[derive(Debug, Subcommand)]
pub enum ReadoutAction {
    /// Draw IQ shots for given populations.
    Sample {
        #[command(flatten)]
        common: ReadoutCommon,
        /// Comma-separated populations of g, e, f, hij.
        #[arg(long, value_delimiter = ',', default_value = "0.5,0.3,0.15,0.05")]
        populations: Vec<f64>,
        #[arg(long, default_value_t = 10_000)]
        shots: usize,
    },
    /// Fit a mixture to shots by EM, starting from (and labelled by) the model.
    Fit {
        #[command(flatten)]
        common: ReadoutCommon,
        #[arg(long)]
        input: PathBuf,
    },
    /// Monte-Carlo correction matrix of a model.
    Matrix {
        #[command(flatten)]
        common: ReadoutCommon,
        #[arg(long, default_value_t = 1_000_000)]
        samples: usize,
    },
    /// Corrected populations from shots, a model and a correction matrix.
    Correct {
        #[command(flatten)]
        common: ReadoutCommon,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        matrix: PathBuf,
    },
}

/// Written to every output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: Option<String>,
    pub seed: u64,
    pub output_dir: String,
    pub tool_version: String,
    pub config_hash: Option<String>,
    pub outputs: Vec<String>,
}

fn set_path(root: &mut Value, key: &str, value: Value) -> Result<()> {
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Error::config(key, "does not name a configuration field"))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    Ok(())
}

/// Loads the configuration named by `common`, applying `--cycles`, `--seed`
/// and `--set` overrides, and validates it.
pub fn load_config(common: &Common) -> Result<EngineConfig> {
    let base = match &common.config {
        Some(p) => fs::read_to_string(p).map_err(|e| Error::config("--config", format!("{}: {e}", p.display())))?,
        None => EngineConfig::calibrated(3).to_json_pretty(),
    };
    let mut value: Value = serde_json::from_str(&base).map_err(|e| Error::ConfigParse(e.to_string()))?;
    if let Some(n) = common.cycles {
        set_path(&mut value, "schedule.n_cycles", n.into())?;
    }
    if let Some(s) = common.seed {
        set_path(&mut value, "simulation.seed", s.into())?;
    }
    for o in &common.overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| Error::config(o.as_str(), "overrides take the form key=value"))?;
        let parsed = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
        set_path(&mut value, k, parsed)?;
    }
    // With a target detuning, the flux amplitude is re-derived from the
    // (possibly overridden) device unless it was set explicitly.
    let explicit_phi = common.overrides.iter().any(|o| o.starts_with("schedule.phi_ac="));
    if let Some(s) = value.get_mut("schedule").and_then(Value::as_object_mut) {
        if !explicit_phi && s.get("target_detuning").is_some_and(|v| !v.is_null()) {
            s.remove("phi_ac");
        }
    }
    EngineConfig::from_json_str(&value.to_string())
}

struct Output {
    dir: PathBuf,
    files: Vec<String>,
}

impl Output {
    fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn file(&mut self, name: &str) -> Result<BufWriter<File>> {
        self.files.push(name.to_string());
        Ok(BufWriter::new(File::create(self.dir.join(name))?))
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut f = self.file(name)?;
        serde_json::to_writer_pretty(&mut f, value)?;
        f.write_all(b"\n")?;
        f.flush()?;
        Ok(())
    }

    fn finish(mut self, command: &str, config_path: Option<&Path>, seed: u64, hash: Option<String>) -> Result<()> {
        let files = std::mem::take(&mut self.files);
        let manifest = RunManifest {
            command: command.to_string(),
            config_path: config_path.map(|p| p.display().to_string()),
            seed,
            output_dir: self.dir.display().to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: hash,
            outputs: files,
        };
        self.json("manifest.json", &manifest)?;
        info!("wrote {}", self.dir.display());
        Ok(())
    }
}

fn load_model(path: &Option<PathBuf>) -> Result<GmmModel> {
    let model = match path {
        Some(p) => serde_json::from_reader(BufReader::new(File::open(p)?))?,
        None => GmmModel::overlapping(),
    };
    model.validate()?;
    Ok(model)
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { common, ideal } => {
            let cfg = load_config(&common)?;
            let rates = RateModel::new(&cfg.device, &cfg.schedule)?;
            let traj = simulate_with(
                &cfg,
                &rates,
                SimulateOptions {
                    ramp_dissipation: !ideal,
                },
            )?;
            let report = analyze(&traj)?;
            let table = rates.table(&cfg.schedule)?;
            let mut out = Output::create(&common.out)?;
            out.json("config.json", &cfg)?;
            traj.write_csv(out.file("trajectory.csv")?)?;
            table.write_csv(out.file("rates.csv")?)?;
            out.json("report.json", &report)?;
            out.finish(
                "simulate",
                common.config.as_deref(),
                cfg.simulation.seed,
                Some(cfg.hash()),
            )
        }
        Command::Spectrum { common } => {
            let cfg = load_config(&common)?;
            let samples = spectrum(&cfg.device, &cfg.schedule, cfg.simulation.sample_spacing())?;
            let mut out = Output::create(&common.out)?;
            write_spectrum_csv(out.file("spectrum.csv")?, &samples)?;
            out.finish(
                "spectrum",
                common.config.as_deref(),
                cfg.simulation.seed,
                Some(cfg.hash()),
            )
        }
        Command::Iv { action } => match action {
            IvAction::Generate { common, points, vmax } => {
                let cfg = load_config(&common)?;
                if points < 2 || !(vmax > 0.0) {
                    return Err(Error::config(
                        "--points/--vmax",
                        "need at least 2 points and a positive range",
                    ));
                }
                let d = &cfg.device;
                let curve = IvCurve::synthesize(
                    &Junction::from_device(d),
                    d.t_n,
                    d.delta,
                    &linspace(-vmax, vmax, points),
                )?;
                let mut out = Output::create(&common.out)?;
                curve.write_csv(out.file("iv.csv")?)?;
                out.finish(
                    "iv generate",
                    common.config.as_deref(),
                    cfg.simulation.seed,
                    Some(cfg.hash()),
                )
            }
            IvAction::Extract { common, input } => {
                let cfg = load_config(&common)?;
                let curve = IvCurve::read_csv(BufReader::new(File::open(&input)?), cfg.device.delta, cfg.device.t_n)?;
                let fit = extract_junction_params(&curve)?;
                let mut out = Output::create(&common.out)?;
                out.json("extraction.json", &fit)?;
                out.finish(
                    "iv extract",
                    common.config.as_deref(),
                    cfg.simulation.seed,
                    Some(cfg.hash()),
                )
            }
        },
        Command::Readout { action } => run_readout(action),
        Command::Ramsey {
            common,
            tau,
            max_amplitude,
            steps,
            points,
            noise,
        } => {
            let cfg = load_config(&common)?;
            if !(tau > 0.0) || steps == 0 || !(max_amplitude > 0.0 && max_amplitude < 0.5) {
                return Err(Error::config(
                    "--tau/--steps/--max-amplitude",
                    "need tau > 0, steps >= 1, 0 < amplitude < 0.5",
                ));
            }
            let amps: Vec<f64> = (0..=steps).map(|k| -max_amplitude * k as f64 / steps as f64).collect();
            let (_, fringes) = synthetic_sweep(&cfg.device, &amps, tau, points, noise, cfg.simulation.seed)?;
            let sweep = unwrap_sweep(&amps, &fringes)?;
            let mut out = Output::create(&common.out)?;
            write_sweep_csv(out.file("sweep.csv")?, &sweep)?;
            out.finish(
                "ramsey",
                common.config.as_deref(),
                cfg.simulation.seed,
                Some(cfg.hash()),
            )
        }
        Command::DefaultConfig { cycles } => {
            println!("{}", EngineConfig::calibrated(cycles.unwrap_or(3)).to_json_pretty());
            Ok(())
        }
    }
}

fn run_readout(action: ReadoutAction) -> Result<()> {
    match action {
        ReadoutAction::Sample {
            common,
            populations,
            shots,
        } => {
            let model = load_model(&common.model)?;
            if shots == 0 {
                return Err(Error::config("--shots", "must be at least 1"));
            }
            let set = sample_shots(&populations, &model, shots, common.seed)?;
            let mut out = Output::create(&common.out)?;
            set.write_csv(out.file("shots.csv")?)?;
            out.json("model.json", &model)?;
            out.finish("readout sample", None, common.seed, None)
        }
        ReadoutAction::Fit { common, input } => {
            let init = load_model(&common.model)?;
            let shots = ShotSet::read_csv(BufReader::new(File::open(&input)?), common.seed)?;
            let fit = fit_gmm(&shots.points, &init)?;
            let mut out = Output::create(&common.out)?;
            out.json("model.json", &fit.model)?;
            out.json("fit.json", &fit)?;
            out.finish("readout fit", None, common.seed, None)
        }
        ReadoutAction::Matrix { common, samples } => {
            let model = load_model(&common.model)?;
            let m = correction_matrix(&model, common.radius, samples, common.seed)?;
            let mut out = Output::create(&common.out)?;
            out.json("matrix.json", &m)?;
            out.finish("readout matrix", None, common.seed, None)
        }
        ReadoutAction::Correct { common, input, matrix } => {
            let model = load_model(&common.model)?;
            let m: CorrectionMatrix = serde_json::from_reader(BufReader::new(File::open(&matrix)?))?;
            let shots = ShotSet::read_csv(BufReader::new(File::open(&input)?), common.seed)?;
            let counts: Vec<f64> = count_in_ellipse(&shots.points, &model, m.radius)?
                .into_iter()
                .map(|c| c as f64)
                .collect();
            let corrected = corrected_populations(&counts, &m)?;
            #[derive(Serialize)]
            struct Out<'a> {
                uncorrected_counts: &'a [f64],
                #[serde(flatten)]
                corrected: &'a crate::readout::CorrectedPopulations,
            }
            let mut out = Output::create(&common.out)?;
            out.json(
                "corrected.json",
                &Out {
                    uncorrected_counts: &counts,
                    corrected: &corrected,
                },
            )?;
            out.finish("readout correct", None, common.seed, None)
        }
    }
}
