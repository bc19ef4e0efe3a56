//! `gnconvert`: train QCFS networks, convert them to IF or group-neuron SNNs,
//! and measure the conversion.
//!
//! Flags take precedence over `GNCONVERT_*` environment variables, which take
//! precedence over defaults. Logs go to stderr.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};

use gnconvert_core::analysis::{
    accuracy_eval, conversion_mse, curve_grid, firing_rate_curve, phi_residual_dataset, EvalMode,
    EvalReport, Metric,
};
use gnconvert_core::conversion::{ann_to_snn, replace_if_with_gn};
use gnconvert_core::data::{BlobsConfig, Dataset};
use gnconvert_core::network::{model_hash, ModelSpec, NeuronKind, SimConfig, V0Policy};
use gnconvert_core::trainer::{train_with_history, TrainConfig};

#[derive(Parser)]
#[command(name = "gnconvert", version, about = "ANN to group-neuron SNN conversion toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a dense QCFS network and write it as JSON.
    Train(TrainArgs),
    /// Assign IF thresholds from lambda and optionally swap in group neurons.
    Convert(ConvertArgs),
    /// Evaluate a model and write CSV and JSON reports.
    Eval(EvalArgs),
    /// Sample the firing-rate staircase of a single neuron.
    Curve(CurveArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Synthetic {
    Blobs,
}

#[derive(Args)]
#[command(group(ArgGroup::new("source").required(true).multiple(false)))]
struct DataArgs {
    /// Built-in synthetic dataset.
    #[arg(long, value_enum, group = "source")]
    synthetic: Option<Synthetic>,
    /// CSV file with `label,feature,...` rows.
    #[arg(long, group = "source")]
    csv: Option<PathBuf>,
    /// IDX image file (needs --idx-labels).
    #[arg(long, group = "source", requires = "idx_labels")]
    idx_images: Option<PathBuf>,
    #[arg(long, requires = "idx_images")]
    idx_labels: Option<PathBuf>,
    /// Blob samples per cluster.
    #[arg(long, env = "GNCONVERT_SAMPLES", default_value_t = 500)]
    samples: usize,
    /// Blob standard deviation.
    #[arg(long, env = "GNCONVERT_SPREAD", default_value_t = 0.5)]
    spread: f64,
    /// Blob clusters, labelled round-robin over two classes.
    #[arg(long, env = "GNCONVERT_CLUSTERS", default_value_t = 2)]
    clusters: usize,
}

impl DataArgs {
    fn load(&self, seed: u64) -> Result<Dataset> {
        if self.synthetic == Some(Synthetic::Blobs) {
            let cfg = BlobsConfig {
                clusters: self.clusters,
                samples_per_cluster: self.samples,
                std_dev: self.spread,
                seed,
                ..Default::default()
            };
            return Ok(cfg.generate()?);
        }
        if let Some(path) = &self.csv {
            return Dataset::from_csv(path).with_context(|| format!("reading {}", path.display()));
        }
        if let (Some(images), Some(labels)) = (&self.idx_images, &self.idx_labels) {
            return Dataset::from_idx(images, labels).context("reading IDX files");
        }
        unreachable!("clap requires a data source")
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Layer widths including input and output.
    #[arg(long, env = "GNCONVERT_ARCH", value_delimiter = ',', default_value = "2,16,2")]
    arch: Vec<usize>,
    /// QCFS quantization levels.
    #[arg(long = "L", env = "GNCONVERT_L", default_value_t = 4, value_parser = clap::value_parser!(u32).range(1..))]
    levels: u32,
    #[arg(long, env = "GNCONVERT_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, env = "GNCONVERT_EPOCHS", default_value_t = 60)]
    epochs: usize,
    #[arg(long, env = "GNCONVERT_LR", default_value_t = 0.1)]
    lr: f64,
    #[arg(long, env = "GNCONVERT_BATCH_SIZE", default_value_t = 16)]
    batch_size: usize,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct ConvertArgs {
    model: PathBuf,
    /// Group size; omit to keep IF neurons.
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    tau: Option<u32>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum MetricArg {
    Accuracy,
    Mse,
    Phi,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum NeuronArg {
    If,
    Gn,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum V0Arg {
    Zero,
    HalfThreshold,
}

impl From<V0Arg> for V0Policy {
    fn from(v: V0Arg) -> Self {
        match v {
            V0Arg::Zero => V0Policy::Zero,
            V0Arg::HalfThreshold => V0Policy::HalfThreshold,
        }
    }
}

#[derive(Args)]
struct EvalArgs {
    model: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Time-step counts to evaluate.
    #[arg(long = "T", value_delimiter = ',', required = true, value_parser = clap::value_parser!(u32).range(1..))]
    t_steps: Vec<u32>,
    #[arg(long, value_enum, default_value = "accuracy")]
    metric: MetricArg,
    /// Source ANN, required for --metric mse.
    #[arg(long, required_if_eq("metric", "mse"))]
    ann: Option<PathBuf>,
    /// Override the neuron kind stored in the model.
    #[arg(long, value_enum)]
    neuron: Option<NeuronArg>,
    /// Override the group size.
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    tau: Option<u32>,
    #[arg(long, value_enum, env = "GNCONVERT_V0", default_value = "half-threshold")]
    v0: V0Arg,
    #[arg(long, env = "GNCONVERT_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, env = "GNCONVERT_OUT_DIR", default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct CurveArgs {
    #[arg(long, value_enum)]
    neuron: NeuronArg,
    #[arg(long, value_parser = positive, allow_negative_numbers = true)]
    theta: f64,
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u32).range(1..))]
    tau: u32,
    #[arg(long = "T", value_parser = clap::value_parser!(u32).range(1..))]
    t_steps: u32,
    #[arg(long, value_enum, default_value = "half-threshold")]
    v0: V0Arg,
    /// Output file; stdout when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

fn positive(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("must be a positive number, got {v}"))
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn load_model(path: &Path) -> Result<ModelSpec> {
    ModelSpec::load(path).with_context(|| format!("loading {}", path.display()))
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let data = args.data.load(args.seed)?;
    eprintln!("training {:?} on {} samples", args.arch, data.len());
    let cfg = TrainConfig {
        epochs: args.epochs,
        learning_rate: args.lr,
        batch_size: args.batch_size,
        levels: args.levels,
        seed: args.seed,
        widths: args.arch.clone(),
    };
    let outcome = train_with_history(&data, &cfg)?;
    if let Some(loss) = outcome.epoch_losses.last() {
        eprintln!("final epoch loss {loss:.6}");
    }
    outcome.model.save(&args.output)?;
    eprintln!("wrote {}", args.output.display());
    Ok(())
}

fn cmd_convert(args: &ConvertArgs) -> Result<()> {
    let mut model = ann_to_snn(&load_model(&args.model)?)?;
    if let Some(tau) = args.tau {
        model = replace_if_with_gn(&model, tau)?;
    }
    model.save(&args.output)?;
    eprintln!("wrote {}", args.output.display());
    Ok(())
}

fn sim_neuron(model: &ModelSpec, args: &EvalArgs) -> Result<NeuronKind> {
    let stored = model.group_size();
    Ok(match (args.neuron, args.tau) {
        (Some(NeuronArg::If), Some(_)) => bail!("--tau cannot be combined with --neuron if"),
        (Some(NeuronArg::If), None) => NeuronKind::If,
        (Some(NeuronArg::Gn), tau) | (None, tau @ Some(_)) => match tau.or(stored) {
            Some(tau) => NeuronKind::Gn { tau },
            None => bail!("--neuron gn needs --tau for a model converted with IF neurons"),
        },
        (None, None) => stored.map_or(NeuronKind::If, |tau| NeuronKind::Gn { tau }),
    })
}

/// Re-tag a converted model with the neuron kind used for simulation.
fn with_neuron(model: &ModelSpec, kind: NeuronKind) -> Result<ModelSpec> {
    let base = ann_to_snn(model)?;
    Ok(match kind {
        NeuronKind::If => base,
        NeuronKind::Gn { tau } => replace_if_with_gn(&base, tau)?,
    })
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let loaded = load_model(&args.model)?;
    if !loaded.is_converted() {
        bail!("{} is not converted; run `gnconvert convert` first", args.model.display());
    }
    let mut data = args.data.load(args.seed)?;
    if data.feature_shape() != loaded.input_shape.as_slice() {
        let width: usize = loaded.input_shape.iter().product();
        if loaded.input_shape.len() == 1 && data.feature_len() == width {
            data = data.flattened();
        } else {
            bail!(
                "dataset samples have shape {:?} but the model expects {:?}",
                data.feature_shape(),
                loaded.input_shape
            );
        }
    }
    let kind = sim_neuron(&loaded, args)?;
    let model = with_neuron(&loaded, kind)?;
    let v0 = V0Policy::from(args.v0);
    eprintln!(
        "evaluating {} ({}) on {} samples",
        args.model.display(),
        kind.label(),
        data.len()
    );

    let report = match args.metric {
        MetricArg::Mse => {
            let ann_path = args.ann.as_ref().expect("clap requires --ann for mse");
            conversion_mse(&load_model(ann_path)?, &model, &data, &args.t_steps, v0)?
        }
        MetricArg::Accuracy => {
            let mut report = EvalReport::default();
            for &t in &args.t_steps {
                let sim = SimConfig::new(t, kind)?.with_v0(v0);
                report.push(t, kind, Metric::Accuracy, accuracy_eval(&model, &data, &EvalMode::Snn(sim))?);
            }
            report
        }
        MetricArg::Phi => {
            let mut report = EvalReport::default();
            for &t in &args.t_steps {
                let sim = SimConfig::new(t, kind)?.with_v0(v0);
                let worst = phi_residual_dataset(&model, &data, &sim)?
                    .iter()
                    .map(|a| a.residual_max)
                    .fold(0.0, f64::max);
                report.push(t, kind, Metric::PhiResidualMax, worst);
            }
            report
        }
    };

    let t_label: Vec<String> = args.t_steps.iter().map(u32::to_string).collect();
    let tau_label = kind.tau().map_or_else(|| "none".to_string(), |t| t.to_string());
    let metric = match args.metric {
        MetricArg::Accuracy => "accuracy",
        MetricArg::Mse => "mse",
        MetricArg::Phi => "phi",
    };
    let stem = format!(
        "{}_T{}_tau{}_{}_{}",
        model_hash(&loaded),
        t_label.join("-"),
        tau_label,
        kind.label(),
        metric
    );
    fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))?;
    let csv = report.to_csv();
    write_file(&args.out_dir.join(format!("{stem}.csv")), &csv)?;
    write_file(&args.out_dir.join(format!("{stem}.json")), &report.to_json())?;
    eprintln!("wrote {}/{stem}.{{csv,json}}", args.out_dir.display());
    print!("{csv}");
    Ok(())
}

fn cmd_curve(args: &CurveArgs) -> Result<()> {
    let kind = match args.neuron {
        NeuronArg::If => NeuronKind::If,
        NeuronArg::Gn => NeuronKind::Gn { tau: args.tau },
    };
    let v0 = V0Policy::from(args.v0);
    let grid = curve_grid(kind, args.theta, args.t_steps, v0, -0.5 * args.theta, 1.5 * args.theta)?;
    let curve = firing_rate_curve(kind, args.theta, args.t_steps, v0, &grid)?;
    let mut out = String::from("x,rate\n");
    for (x, rate) in curve {
        out.push_str(&format!("{x},{rate}\n"));
    }
    match &args.output {
        Some(path) => {
            write_file(path, &out)?;
            eprintln!("wrote {}", path.display());
        }
        None => print!("{out}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Convert(a) => cmd_convert(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Curve(a) => cmd_curve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
