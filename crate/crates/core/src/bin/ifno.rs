use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use tissue_ifno::checkpoint::{load_checkpoint, save_checkpoint};
use tissue_ifno::config::PipelineConfig;
use tissue_ifno::data::{
    frames_to_samples, generate_synthetic, ingest_tracked_csv, mls_smooth, spline_resample_to, split_study,
    tracked_extent, Dataset, ScatteredSample,
};
use tissue_ifno::fung::{fem_solve_fung, fit_fung_de, load_records_csv, FitResult};
use tissue_ifno::grid::{relative_l2_error, GridField, GridSpec, Sample};
use tissue_ifno::ifno::forward_many;
use tissue_ifno::study::{emit_report, run_study, Split, StudyReport};
use tissue_ifno::train::{physics_loss, train, DatasetSplit};
use tissue_ifno::{Error, Result};

#[derive(Parser)]
#[command(name = "ifno", version, about = "Boundary-to-field operator learning for planar tissue specimens")]
struct Cli {
    /// Pipeline configuration (JSON); defaults apply to missing sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    GenData {
        /// Also write a per-node CSV export.
        #[arg(long)]
        csv: bool,
    },
    /// Read tracked-node CSV exports into scattered samples.
    Ingest {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// MLS-smooth scattered samples.
    Smooth {
        #[arg(long)]
        input: PathBuf,
    },
    /// Resample scattered samples onto a regular grid dataset.
    Resample {
        #[arg(long)]
        input: PathBuf,
    },
    /// Train an operator.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Fit the Fung model to stress-stretch records.
    FitFung {
        /// Records CSV (lambda1, lambda2, P11_kPa, P22_kPa).
        #[arg(long, conflicts_with = "data", required_unless_present = "data")]
        records: Option<PathBuf>,
        /// Dataset whose samples carry records.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Predict fields with the fitted Fung model by finite elements.
    FemPredict {
        #[arg(long)]
        fit: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Solve every sample, not only the first loading cycle.
        #[arg(long)]
        all_cycles: bool,
    },
    /// Run one of the four comparison studies.
    RunStudy {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
        study: u8,
    },
    /// Print and check a study summary.
    Report {
        /// Study output directory or summary.json.
        #[arg(long)]
        input: PathBuf,
    },
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// Train on the training split of this study instead of every sample.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
    study: Option<u8>,
    /// Overrides the penalty weight of the configuration.
    #[arg(long)]
    gamma: Option<f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("--threads: {e}")))?;
    }
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg = cfg.with_seed(seed);
    }
    let out = cli.out.as_path();
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;

    match cli.command {
        Command::GenData { csv } => {
            let ds = generate_synthetic(&cfg.synthetic)?;
            ds.save(out)?;
            if csv {
                let path = out.join("dataset.csv");
                let f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
                ds.write_csv(std::io::BufWriter::new(f))?;
            }
            println!("wrote {} samples on a {}x{} grid to {}", ds.len(), ds.grid.nx, ds.grid.ny, out.display());
        }
        Command::Ingest { inputs } => {
            let mut all = Vec::new();
            for p in &inputs {
                let frames = ingest_tracked_csv(p)?;
                all.extend(frames_to_samples(&frames));
            }
            write_json(&out.join("scattered.json"), &all)?;
            println!("ingested {} frames from {} files", all.len(), inputs.len());
        }
        Command::Smooth { input } => {
            let samples: Vec<ScatteredSample> = read_json(&input)?;
            let smoothed = samples
                .iter()
                .map(|s| mls_smooth(s, &cfg.mls))
                .collect::<Result<Vec<_>>>()?;
            write_json(&out.join("smoothed.json"), &smoothed)?;
            println!("smoothed {} frames", smoothed.len());
        }
        Command::Resample { input } => {
            let samples: Vec<ScatteredSample> = read_json(&input)?;
            let ds = resample_all(&samples, &cfg)?;
            ds.save(out)?;
            println!("resampled {} frames onto {:?} mm", ds.len(), ds.grid.extent);
        }
        Command::Train(args) => train_cmd(&args, &cfg, out)?,
        Command::Predict { checkpoint, data } => {
            let params = load_checkpoint(&checkpoint)?;
            let ds = Dataset::load(&data)?;
            let loads: Vec<_> = ds.samples.iter().map(|s| &s.boundary).collect();
            let preds = forward_many(&loads, &params)?;
            let mean = write_predictions(&ds, &preds, (0..ds.len()).collect(), out)?;
            println!("mean relative error {}", fmt_err(mean));
        }
        Command::FitFung { records, data } => {
            let recs = match (records, data) {
                (Some(r), _) => load_records_csv(&r)?,
                (None, Some(d)) => Dataset::load(&d)?.samples.iter().filter_map(|s| s.record).collect(),
                (None, None) => unreachable!("clap requires one source"),
            };
            let seed = cli.seed.unwrap_or(cfg.train.seed);
            let fit = fit_fung_de(&recs, &cfg.fung.bounds, &cfg.fung.de, seed)?;
            write_json(&out.join("fung_fit.json"), &fit)?;
            let p = fit.params;
            println!(
                "c={:.6} a1={:.6} a2={:.6} a3={:.6} (mse {:.4e} kPa^2 over {} records)",
                p.c,
                p.a1,
                p.a2,
                p.a3,
                fit.objective,
                recs.len()
            );
        }
        Command::FemPredict { fit, data, all_cycles } => {
            let fit: FitResult = read_json(&fit)?;
            let ds = Dataset::load(&data)?;
            let chosen: Vec<usize> = (0..ds.len()).filter(|&k| all_cycles || ds.samples[k].cycle == 0).collect();
            let preds = chosen
                .iter()
                .map(|&k| fem_solve_fung(&ds.samples[k].boundary, &fit.params, &ds.grid, &cfg.fung.fem).map(|s| s.field))
                .collect::<Result<Vec<_>>>()?;
            let mean = write_predictions(&ds, &preds, chosen, out)?;
            println!("mean relative error {}", fmt_err(mean));
        }
        Command::RunStudy { data, study } => {
            let ds = Dataset::load(&data)?;
            let outcome = run_study(study, &ds, &cfg, Some(&out.join("artifacts")))?;
            emit_report(&outcome, out)?;
            print!("{}", outcome.report.render_table());
        }
        Command::Report { input } => {
            let path = if input.is_dir() { input.join("summary.json") } else { input };
            let report = StudyReport::load(&path)?;
            check_report(&report)?;
            print!("{}", report.render_table());
        }
    }
    Ok(())
}

fn train_cmd(args: &TrainArgs, cfg: &PipelineConfig, out: &Path) -> Result<()> {
    let ds = Dataset::load(&args.data)?;
    let (train_set, test_set) = match args.study {
        Some(s) => split_study(&ds, s, cfg.train.seed)?,
        None => (ds.samples.clone(), Vec::new()),
    };
    let mut tc = cfg.train.clone();
    if let Some(g) = args.gamma {
        tc.gamma = g;
    }
    let (params, history) = train(
        DatasetSplit {
            train: &train_set,
            test: &test_set,
        },
        &tc,
    )?;
    save_checkpoint(&params, &out.join("model.ckpt"))?;
    history.save_csv(&out.join("loss_history.csv"))?;
    let summary = serde_json::json!({
        "train_samples": train_set.len(),
        "test_samples": test_set.len(),
        "best_loss": history.best_loss,
        "final_train_error": history.final_train_error,
        "final_test_error": history.final_test_error,
        "physics_loss": physics_loss(&params)?,
        "config": tc,
    });
    write_json(&out.join("train_summary.json"), &summary)?;
    println!(
        "trained on {} samples: train error {}, test error {}",
        train_set.len(),
        fmt_err(history.final_train_error),
        fmt_err(history.final_test_error)
    );
    Ok(())
}

/// Resamples every frame onto the largest grid all of them cover.
fn resample_all(samples: &[ScatteredSample], cfg: &PipelineConfig) -> Result<Dataset> {
    if samples.is_empty() {
        return Err(Error::Data("no scattered samples to resample".into()));
    }
    let mut extent = [f64::INFINITY; 2];
    for s in samples {
        let e = tracked_extent(s)?;
        extent = [extent[0].min(e[0]), extent[1].min(e[1])];
    }
    let grid = GridSpec::new(cfg.resample.nx, cfg.resample.ny, extent)?;
    let out = samples
        .iter()
        .map(|s| spline_resample_to(s, &grid))
        .collect::<Result<Vec<Sample>>>()?;
    Dataset::new(grid, out)
}

/// Writes predictions as a dataset plus `prediction_errors.csv`; returns the
/// mean relative error.
fn write_predictions(ds: &Dataset, preds: &[GridField], chosen: Vec<usize>, out: &Path) -> Result<Option<f64>> {
    let mut rows = csv::Writer::from_writer(Vec::new());
    rows.write_record(["sample", "protocol_id", "cycle", "relative_error"])?;
    let (mut sum, mut n) = (0.0, 0usize);
    let mut predicted = Vec::with_capacity(chosen.len());
    for (&k, p) in chosen.iter().zip(preds) {
        let s = &ds.samples[k];
        let e = relative_l2_error(p, &s.field)?.value();
        if let Some(e) = e {
            sum += e;
            n += 1;
        }
        rows.write_record([
            k.to_string(),
            s.protocol_id.to_string(),
            s.cycle.to_string(),
            e.map_or_else(String::new, |e| e.to_string()),
        ])?;
        predicted.push(Sample {
            field: p.clone(),
            ..s.clone()
        });
    }
    let path = out.join("prediction_errors.csv");
    let bytes = rows.into_inner().map_err(|e| Error::Data(format!("csv buffer: {e}")))?;
    fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    Dataset {
        samples: predicted,
        ..ds.clone()
    }
    .save(&out.join("predictions"))?;
    Ok((n > 0).then(|| sum / n as f64))
}

fn check_report(r: &StudyReport) -> Result<()> {
    for m in &r.models {
        for (split, stored) in [(Split::Train, m.train_error), (Split::Test, m.test_error)] {
            let (mean, _) = r.table_mean(&m.model, split);
            let agree = match (mean, stored) {
                (Some(a), Some(b)) => (a - b).abs() <= 1e-12,
                (None, None) => true,
                _ => false,
            };
            if !agree {
                return Err(Error::Data(format!(
                    "{} {} average {:?} disagrees with its per-sample table ({:?})",
                    m.model,
                    split.as_str(),
                    stored,
                    mean
                )));
            }
        }
    }
    Ok(())
}

fn fmt_err(e: Option<f64>) -> String {
    e.map_or_else(|| "n/a".into(), |e| format!("{:.2}%", 100.0 * e))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}
