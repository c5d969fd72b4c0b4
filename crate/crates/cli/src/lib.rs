//! Command implementations shared by the `parcel` and `synthgen` binaries.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use parcel_eta::config::{apply_overrides, read_config};
use parcel_eta::data::{read_dataset, AoiTable, DayRecord, EncodedSample, MobilityTensors, Sample};
use parcel_eta::eval::{csv_err, evaluate, format_table, write_report_csv, AvgBaseline, ModelPredictor, NearestDeadline};
use parcel_eta::model::{CheckpointMeta, Model};
use parcel_eta::serve::{BatchConfig, Server, Service};
use parcel_eta::sweep::{run_sweep, write_sweep_csv, SweepConfig};
use parcel_eta::synth::emit::{AOI_FILE, MOBILITY_FILE, TEST_FILE, TRAIN_FILE, VAL_FILE};
use parcel_eta::synth::{generate, WorldConfig};
use parcel_eta::train::{encode_all, fit, prepare, samples_from_records, write_history_csv, TrainConfig};
use parcel_eta::{Error, Result};

/// Exit status for configuration problems; clap uses 2 for usage errors.
pub const EXIT_CONFIG: u8 = 3;

pub fn exit_code(e: &Error) -> ExitCode {
    match e {
        Error::Config(_) => ExitCode::from(EXIT_CONFIG),
        _ => ExitCode::FAILURE,
    }
}

/// Prints a failed command's error to stderr and maps it to an exit code.
pub fn finish(result: Result<()>) -> ExitCode {
    match result {
        Ok(()) => ExitCode::SUCCESS,
        // A closed pipe (e.g. `| head`) is the reader's choice, not a failure.
        Err(Error::Io(e)) if e.kind() == std::io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "parcel", version, about = "Route and delivery-time prediction for couriers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Simulate a courier world and write a dataset directory.
    Generate(GenerateArgs),
    /// Train a model on a dataset directory.
    Train(TrainArgs),
    /// Score a checkpoint and the baselines on one split.
    Evaluate(EvaluateArgs),
    /// Write per-package predictions for a dataset file as CSV.
    Predict(PredictArgs),
    /// Serve predictions over line-delimited JSON on a TCP socket.
    Serve(ServeArgs),
    /// Train and evaluate across memory sizes and pending windows.
    Sweep(SweepArgs),
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(a) => cmd_generate(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::Predict(a) => cmd_predict(&a),
        Command::Serve(a) => cmd_serve(&a),
        Command::Sweep(a) => cmd_sweep(&a),
    }
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    /// World config file (key = value lines).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override one config key, e.g. `--set couriers=5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

fn load_config<T>(path: Option<&Path>, overrides: &[String]) -> Result<T>
where
    T: Default + serde::Serialize + serde::de::DeserializeOwned,
{
    let base = match path {
        Some(p) => read_config(p)?,
        None => T::default(),
    };
    apply_overrides(&base, overrides)
}

pub fn cmd_generate(a: &GenerateArgs) -> Result<()> {
    let mut cfg: WorldConfig = load_config(a.config.as_deref(), &a.overrides)?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let report = generate(&cfg, &a.out)?;
    writeln!(std::io::stdout().lock(), "{}", serde_json::to_string_pretty(&report)?)?;
    Ok(())
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Dataset directory written by `generate`.
    #[arg(long)]
    pub data: PathBuf,
    /// Checkpoint to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Training config file (key = value lines).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Where to write the per-epoch history CSV.
    #[arg(long)]
    pub history: Option<PathBuf>,
    /// Label stored in the checkpoint and reported by the server.
    #[arg(long, default_value = "dev")]
    pub model_version: String,
}

/// The splits, AOI table and training mobility of a dataset directory.
pub struct DatasetDir {
    pub train: Vec<DayRecord>,
    pub val: Vec<DayRecord>,
    pub test: Vec<DayRecord>,
    pub mobility: MobilityTensors,
}

impl DatasetDir {
    pub fn read(dir: &Path) -> Result<Self> {
        let aois = AoiTable::read(dir.join(AOI_FILE))?;
        let n = Some(aois.len());
        let train = read_dataset(dir.join(TRAIN_FILE), n)?;
        let mobility_path = dir.join(MOBILITY_FILE);
        let mobility = if mobility_path.exists() {
            MobilityTensors::read(&mobility_path)?
        } else {
            MobilityTensors::build(&train, &aois)
        };
        Ok(Self {
            val: read_dataset(dir.join(VAL_FILE), n)?,
            test: read_dataset(dir.join(TEST_FILE), n)?,
            train,
            mobility,
        })
    }
}

pub fn cmd_train(a: &TrainArgs) -> Result<()> {
    let mut cfg: TrainConfig = load_config(a.config.as_deref(), &a.overrides)?;
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let data = DatasetDir::read(&a.data)?;
    let train = samples_from_records(&data.train, cfg.stride);
    let val = samples_from_records(&data.val, cfg.stride);
    let prep = prepare(&train, &val, &cfg)?;
    eprintln!("training on {} samples, validating on {}", prep.train.len(), prep.val.len());
    let outcome = fit(&prep, Some(&data.mobility), &cfg, |r| {
        eprintln!(
            "epoch {:>3}  loss {:>10.4}  val rmse {}  lmd {}",
            r.epoch,
            r.loss,
            r.val_rmse.map_or("-".into(), |v| format!("{v:.3}")),
            r.val_lmd.map_or("-".into(), |v| format!("{v:.3}")),
        );
    })?;
    outcome.model.save(&a.out, &prep.stats, &a.model_version)?;
    if let Some(path) = &a.history {
        write_history_csv(File::create(path)?, &outcome.history)?;
    }
    match outcome.best_epoch {
        Some(e) => eprintln!("kept epoch {e}; wrote {}", a.out.display()),
        None => eprintln!("no epochs run; wrote initial parameters to {}", a.out.display()),
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    /// Which split to score.
    #[arg(long, default_value = "test", value_parser = ["train", "val", "test"])]
    pub split: String,
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
    /// Also write the report as CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Leave inference time out of the report so it is reproducible.
    #[arg(long)]
    pub no_timing: bool,
}

pub fn cmd_evaluate(a: &EvaluateArgs) -> Result<()> {
    let (model, meta) = Model::load(&a.model)?;
    let data = DatasetDir::read(&a.data)?;
    let records = match a.split.as_str() {
        "train" => &data.train,
        "val" => &data.val,
        _ => &data.test,
    };
    let stats = &meta.features;
    let samples = encode_all(&samples_from_records(records, a.stride), stats);
    let train = encode_all(&samples_from_records(&data.train, a.stride), stats);
    let avg = AvgBaseline::fit(&train)?;
    let predictor = ModelPredictor {
        model: &model,
        mobility: Some(&data.mobility),
    };
    let rows = vec![
        ("avg".to_string(), evaluate(&samples, &avg)?),
        ("nearest-deadline".to_string(), evaluate(&samples, &NearestDeadline)?),
        (format!("model:{}", meta.model_version), evaluate(&samples, &predictor)?),
    ];
    write!(std::io::stdout().lock(), "{}", format_table(&rows, !a.no_timing))?;
    if let Some(path) = &a.out {
        write_report_csv(File::create(path)?, &rows, !a.no_timing)?;
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Dataset file of courier-days (one JSON record per line).
    #[arg(long)]
    pub input: PathBuf,
    /// Mobility tensors; required when the model uses them.
    #[arg(long)]
    pub mobility: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
    /// CSV output; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// One CSV row per predicted delivery.
fn write_predictions<W: Write>(w: W, model: &Model, samples: &[Sample], encoded: &[EncodedSample], mobility: Option<&MobilityTensors>) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["sample", "courier_id", "t", "package_id", "position", "minutes", "eta", "actual_minutes"])
        .map_err(csv_err)?;
    for (k, (s, e)) in samples.iter().zip(encoded).enumerate() {
        let p = model.predict(e, mobility)?;
        let pos = p.positions();
        for &i in &p.route {
            if !e.is_delivery(i) {
                continue;
            }
            let actual = e.target.as_ref().and_then(|t| t.offsets[i]);
            out.write_record([
                k.to_string(),
                s.courier_id.clone(),
                s.t.to_string(),
                e.pending_ids[i].clone(),
                pos[i].to_string(),
                format!("{:.6}", p.minutes[i]),
                format!("{:.1}", s.t as f64 + p.minutes[i] * 60.0),
                actual.map_or_else(String::new, |a| format!("{a:.6}")),
            ])
            .map_err(csv_err)?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn cmd_predict(a: &PredictArgs) -> Result<()> {
    let (model, meta) = Model::load(&a.model)?;
    let mobility = a.mobility.as_ref().map(MobilityTensors::read).transpose()?;
    let records = read_dataset(&a.input, mobility.as_ref().map(|m| m.n_aoi))?;
    let samples: Vec<Sample> = samples_from_records(&records, a.stride)
        .into_iter()
        .filter(|s| !s.pending.is_empty())
        .collect();
    let encoded: Vec<EncodedSample> = samples.iter().map(|s| meta.features.encode(s)).collect();
    match &a.out {
        Some(p) => write_predictions(BufWriter::new(File::create(p)?), &model, &samples, &encoded, mobility.as_ref()),
        None => write_predictions(std::io::stdout().lock(), &model, &samples, &encoded, mobility.as_ref()),
    }
}

#[derive(Args, Debug)]
pub struct ServeArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Mobility tensors, also the file `reload` re-reads.
    #[arg(long)]
    pub mobility: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:7878")]
    pub addr: String,
    /// Batching config file (max_batch, flush_ms, queue_capacity, retry_after_ms).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

pub fn cmd_serve(a: &ServeArgs) -> Result<()> {
    let batch: BatchConfig = load_config(a.config.as_deref(), &a.overrides)?;
    let (model, meta): (Model, CheckpointMeta) = Model::load(&a.model)?;
    let mobility = a.mobility.as_ref().map(MobilityTensors::read).transpose()?;
    let service = Service::start(model, meta.features, meta.model_version, mobility, a.mobility.clone(), batch)?;
    let server = Server::bind(&a.addr, Arc::new(service))?;
    eprintln!("listening on {}", server.local_addr());
    server.join();
    Ok(())
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Base training config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Sweep grid file with `l_m = [...]` and `l_f = [...]`.
    #[arg(long)]
    pub grid: Option<PathBuf>,
    /// CSV output; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn cmd_sweep(a: &SweepArgs) -> Result<()> {
    let cfg: TrainConfig = load_config(a.config.as_deref(), &a.overrides)?;
    let grid: SweepConfig = load_config(a.grid.as_deref(), &[])?;
    let data = DatasetDir::read(&a.data)?;
    let train = samples_from_records(&data.train, cfg.stride);
    let val = samples_from_records(&data.val, cfg.stride);
    let test = samples_from_records(&data.test, cfg.stride);
    let rows = run_sweep(&train, &val, &test, Some(&data.mobility), &cfg, &grid, |r| {
        eprintln!("{} = {:>2}: rmse {:?} lmd {:?}", r.param, r.value, r.result.rmse, r.result.lmd)
    })?;
    match &a.out {
        Some(p) => write_sweep_csv(File::create(p)?, &rows),
        None => write_sweep_csv(std::io::stdout().lock(), &rows),
    }
}
