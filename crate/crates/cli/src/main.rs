//! `hzsl`: build class hierarchies, train projections and evaluate zero-shot,
//! generalised zero-shot and few-shot classification from the command line.

mod io;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use hzsl_core::hierarchy::{build_hierarchy, ClassHierarchy};
use hzsl_core::inference::predictions_csv;
use hzsl_core::model::{ModelParams, ProjectionModel};
use hzsl_core::pipeline::{evaluate, train, Dataset, Mode, RunConfig};
use hzsl_core::synth::{gen_synthetic, SyntheticSpec};
use serde::{Deserialize, Serialize};

#[derive(Debug)]
pub enum CliError {
    /// Bad arguments, files or configuration (exit 2).
    Usage(String),
    /// The numerics failed on valid input (exit 1).
    Numerical(String),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Numerical(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Numerical(m) => f.write_str(m),
        }
    }
}

impl From<hzsl_core::Error> for CliError {
    fn from(e: hzsl_core::Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Usage(e.to_string())
        }
    }
}

#[derive(Parser)]
#[command(name = "hzsl", version, about = "Hierarchical zero-shot classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Zsl,
    Gzsl,
    Fsl,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Zsl => Mode::Zsl,
            ModeArg::Gzsl => Mode::Gzsl,
            ModeArg::Fsl => Mode::Fsl,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset with a planted feature map.
    GenSynth {
        #[arg(long)]
        out: PathBuf,
        /// Seen classes.
        #[arg(long, default_value_t = 40)]
        p: usize,
        /// Unseen classes.
        #[arg(long, default_value_t = 10)]
        q: usize,
        #[arg(long, default_value_t = 32)]
        df: usize,
        #[arg(long, default_value_t = 16)]
        dz: usize,
        /// Samples per class (training and test alike).
        #[arg(long, default_value_t = 30)]
        n: usize,
        #[arg(long, default_value_t = 0.05)]
        sigma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Cluster class semantics into a superclass hierarchy.
    BuildHierarchy {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 5)]
        t: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Learn the per-layer and class-level projections.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        hierarchy: PathBuf,
        /// JSON run configuration; `{}` selects every default.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Classify the test samples; writes report.json and predictions.csv to the working directory.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        hierarchy: PathBuf,
        #[arg(long, value_enum)]
        mode: ModeArg,
        /// Support samples per class in few-shot episodes.
        #[arg(long)]
        kshot: Option<usize>,
    },
}

/// Model sidecar: projection shapes and hyperparameters plus the run
/// configuration that `eval` reuses.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Sidecar {
    model: ModelParams,
    config: RunConfig,
}

fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    RunConfig::from_json(&io::read_text(path)?).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

fn load_hierarchy(path: &Path) -> Result<ClassHierarchy, CliError> {
    ClassHierarchy::from_json(&io::read_text(path)?).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

fn load_model(path: &Path) -> Result<(ProjectionModel, RunConfig), CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
    let sidecar_path = io::sidecar_path(path);
    let sidecar: Sidecar = serde_json::from_str(&io::read_text(&sidecar_path)?)
        .map_err(|e| CliError::usage(format!("{}: {e}", sidecar_path.display())))?;
    sidecar.config.validate().map_err(|e| CliError::usage(format!("{}: {e}", sidecar_path.display())))?;
    let model = ProjectionModel::decode(&bytes, sidecar.model)
        .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    Ok((model, sidecar.config))
}

fn check_hierarchy(h: &ClassHierarchy, data: &Dataset) -> Result<(), CliError> {
    if h.n_classes() != data.semantics.len() || h.semantic_dim() != data.semantics.dim() {
        return Err(CliError::usage(format!(
            "hierarchy covers {} classes of dimension {}, dataset has {} of dimension {}",
            h.n_classes(),
            h.semantic_dim(),
            data.semantics.len(),
            data.semantics.dim()
        )));
    }
    Ok(())
}

fn format_trace(trace: &[f64]) -> String {
    trace.iter().map(|v| format!("{v:.12e}")).collect::<Vec<_>>().join(" ")
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::GenSynth { out, p, q, df, dz, n, sigma, seed } => {
            let spec = SyntheticSpec { p, q, d_f: df, d_z: dz, n_per_class: n, noise_sigma: sigma, seed };
            let data = Dataset::from_synthetic(&gen_synthetic(&spec)?)?;
            io::write_dataset(&out, &data)?;
            println!(
                "wrote {} samples of {} classes ({} seen, {} unseen) to {}",
                data.labels.len(),
                data.semantics.len(),
                p,
                q,
                out.display()
            );
        }
        Command::BuildHierarchy { data, t, out } => {
            let data = io::load_dataset(&data)?;
            let h = build_hierarchy(&data.semantics, t, 0)?;
            io::write_file(&out, h.to_json() + "\n")?;
            println!("layer sizes {:?}", h.layer_sizes());
        }
        Command::Train { data, hierarchy, config, out } => {
            let cfg = load_config(&config)?;
            let data = io::load_dataset(&data)?;
            let h = load_hierarchy(&hierarchy)?;
            check_hierarchy(&h, &data)?;
            let result = train(&data, &h, &cfg)?;
            io::write_file(&out, result.model.to_bytes())?;
            let sidecar = Sidecar { model: result.model.params(), config: cfg };
            let json = serde_json::to_string_pretty(&sidecar).expect("sidecar serialises");
            io::write_file(&io::sidecar_path(&out), json + "\n")?;
            let n_r = h.n_layers();
            for (i, (trace, conv)) in result.traces.iter().zip(&result.converged).enumerate() {
                let name = if i < n_r { format!("layer {i}") } else { "class".to_string() };
                let status = if *conv { "converged" } else { "max_iters" };
                println!("{name} objective ({} iterations, {status}): {}", trace.len(), format_trace(trace));
            }
        }
        Command::Eval { data, model, hierarchy, mode, kshot } => {
            let (model, mut cfg) = load_model(&model)?;
            if let Some(k) = kshot {
                cfg.episodes.k_shot = k;
            }
            let data = io::load_dataset(&data)?;
            let h = load_hierarchy(&hierarchy)?;
            check_hierarchy(&h, &data)?;
            let result = evaluate(&data, &h, &model, &cfg, mode.into())?;
            io::write_file(Path::new("report.json"), result.report.to_json() + "\n")?;
            let csv = predictions_csv(&result.sample_ids, &result.predictions, data.semantics.names())?;
            io::write_file(Path::new("predictions.csv"), csv)?;
            print!("{}", result.report.to_table(Some(data.semantics.names())));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
