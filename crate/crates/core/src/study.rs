//! Study runner: vanilla and physics-guided IFNO plus the Fung baseline on
//! one train/test split, and the artifacts written for each run.
//!
//! `summary.json` holds only quantities that are a deterministic function of
//! the dataset and configuration; wall-clock times go to `timing.json`.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::save_checkpoint;
use crate::config::PipelineConfig;
use crate::data::{study_indices, Dataset};
use crate::error::{Error, Result};
use crate::fung::{fem_solve_fung, fit_fung_de, FungParams};
use crate::grid::{relative_l2_error, GridField, GridSpec, Sample};
use crate::ifno::{forward_many, IfnoParams};
use crate::train::{physics_loss, train, DatasetSplit, TrainConfig, TrainHistory};

pub const REPORT_FORMAT_VERSION: u32 = 1;
pub const MODEL_IFNO: &str = "ifno";
pub const MODEL_PG_IFNO: &str = "pg-ifno";
pub const MODEL_FUNG: &str = "fung";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleError {
    pub model: String,
    pub split: Split,
    /// Index into the dataset.
    pub sample: usize,
    pub protocol_id: u8,
    pub cycle: usize,
    /// `None` when the reference field is zero.
    pub error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub model: String,
    pub train_error: Option<f64>,
    pub test_error: Option<f64>,
    pub train_evaluated: usize,
    pub test_evaluated: usize,
    /// `‖G[0]‖²` of the trained operator.
    pub physics_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub grid: Option<GridSpec>,
    pub samples: usize,
    pub train: usize,
    pub test: usize,
    pub lipschitz: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FungFitSummary {
    pub params: FungParams,
    pub objective: f64,
    pub records: usize,
}

/// Everything written to `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub format_version: u32,
    pub study: u8,
    pub config: PipelineConfig,
    pub dataset: DatasetInfo,
    pub models: Vec<ModelSummary>,
    pub fung_fit: Option<FungFitSummary>,
    pub per_sample: Vec<SampleError>,
}

impl StudyReport {
    pub fn empty(study: u8, config: PipelineConfig) -> Self {
        Self {
            format_version: REPORT_FORMAT_VERSION,
            study,
            config,
            dataset: DatasetInfo {
                grid: None,
                samples: 0,
                train: 0,
                test: 0,
                lipschitz: None,
            },
            models: Vec::new(),
            fung_fit: None,
            per_sample: Vec::new(),
        }
    }

    pub fn model(&self, name: &str) -> Option<&ModelSummary> {
        self.models.iter().find(|m| m.model == name)
    }

    /// Mean defined error of one model on one split, from the table.
    pub fn table_mean(&self, model: &str, split: Split) -> (Option<f64>, usize) {
        mean_defined(
            self.per_sample
                .iter()
                .filter(|r| r.model == model && r.split == split)
                .map(|r| r.error),
        )
    }

    fn push_model(&mut self, model: &str, rows: Vec<SampleError>, physics: Option<f64>) {
        self.per_sample.extend(rows);
        let (train_error, train_evaluated) = self.table_mean(model, Split::Train);
        let (test_error, test_evaluated) = self.table_mean(model, Split::Test);
        self.models.push(ModelSummary {
            model: model.to_string(),
            train_error,
            test_error,
            train_evaluated,
            test_evaluated,
            physics_loss: physics,
        });
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
    }

    /// Plain-text table of the per-model averages.
    pub fn render_table(&self) -> String {
        let pct = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |e| format!("{:.2}%", 100.0 * e));
        let mut out = format!("study {}\n{:<10} {:>10} {:>10} {:>12}\n", self.study, "model", "train", "test", "||G[0]||^2");
        for m in &self.models {
            let phys = m.physics_loss.map_or_else(|| "-".to_string(), |p| format!("{p:.3e}"));
            out += &format!("{:<10} {:>10} {:>10} {:>12}\n", m.model, pct(m.train_error), pct(m.test_error), phys);
        }
        out
    }
}

fn mean_defined(errors: impl Iterator<Item = Option<f64>>) -> (Option<f64>, usize) {
    let (mut sum, mut n) = (0.0, 0usize);
    for e in errors.flatten() {
        sum += e;
        n += 1;
    }
    ((n > 0).then(|| sum / n as f64), n)
}

/// Predicted and reference field of one sample, for plotting elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldDump {
    pub model: String,
    pub sample: usize,
    pub truth: GridField,
    pub prediction: GridField,
}

/// A finished study: the deterministic report plus run artifacts.
#[derive(Debug, Clone)]
pub struct StudyOutcome {
    pub report: StudyReport,
    /// Wall-clock seconds per stage.
    pub timing: BTreeMap<String, f64>,
    pub histories: Vec<(String, TrainHistory)>,
    pub dumps: Vec<FieldDump>,
}

impl StudyOutcome {
    pub fn empty(study: u8, config: PipelineConfig) -> Self {
        Self {
            report: StudyReport::empty(study, config),
            timing: BTreeMap::new(),
            histories: Vec::new(),
            dumps: Vec::new(),
        }
    }
}

fn timed<T>(timing: &mut BTreeMap<String, f64>, stage: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let out = f().map_err(|e| e.in_stage(stage))?;
    timing.insert(stage.to_string(), start.elapsed().as_secs_f64());
    Ok(out)
}

fn error_rows(
    model: &str,
    split: Split,
    samples: &[(usize, &Sample)],
    predictions: &[GridField],
) -> Result<Vec<SampleError>> {
    samples
        .iter()
        .zip(predictions)
        .map(|(&(k, s), p)| {
            Ok(SampleError {
                model: model.to_string(),
                split,
                sample: k,
                protocol_id: s.protocol_id,
                cycle: s.cycle,
                error: relative_l2_error(p, &s.field)?.value(),
            })
        })
        .collect()
}

fn first_cycle<'a>(set: &[(usize, &'a Sample)], all_cycles: bool) -> Vec<(usize, &'a Sample)> {
    set.iter()
        .copied()
        .filter(|(_, s)| all_cycles || s.cycle == 0)
        .collect()
}

fn ifno_predictions(params: &IfnoParams, samples: &[(usize, &Sample)]) -> Result<Vec<GridField>> {
    let loads: Vec<_> = samples.iter().map(|(_, s)| &s.boundary).collect();
    forward_many(&loads, params)
}

/// Runs study `study` (1-4) on `ds`. Trained checkpoints and the Fung fit are
/// written to `artifacts` as soon as each stage finishes, so they survive a
/// later failure.
pub fn run_study(study: u8, ds: &Dataset, config: &PipelineConfig, artifacts: Option<&Path>) -> Result<StudyOutcome> {
    config.validate()?;
    let mut out = StudyOutcome::empty(study, config.clone());
    let timing = &mut out.timing;
    let ids: Vec<u8> = ds.samples.iter().map(|s| s.protocol_id).collect();
    let (train_idx, test_idx) = timed(timing, "split", || study_indices(&ids, study, config.train.seed))?;
    if train_idx.is_empty() {
        return Err(Error::Data(format!("study {study} leaves no training samples")).in_stage("split"));
    }
    if let Some(dir) = artifacts {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let pick = |idx: &[usize]| idx.iter().map(|&k| (k, &ds.samples[k])).collect::<Vec<_>>();
    let (train_set, test_set) = (pick(&train_idx), pick(&test_idx));
    let train_owned: Vec<Sample> = train_set.iter().map(|(_, s)| (*s).clone()).collect();
    let test_owned: Vec<Sample> = test_set.iter().map(|(_, s)| (*s).clone()).collect();
    let split = DatasetSplit {
        train: &train_owned,
        test: &test_owned,
    };
    out.report.dataset = DatasetInfo {
        grid: Some(ds.grid),
        samples: ds.len(),
        train: train_idx.len(),
        test: test_idx.len(),
        lipschitz: ds.lipschitz,
    };

    let dump_positions: Vec<usize> = {
        let n = test_set.len();
        let count = config.study.dump_count.min(n);
        let mut p: Vec<usize> = (0..count).map(|k| k * n / count).collect();
        p.dedup();
        p
    };

    let models = [
        (MODEL_IFNO, "train-ifno", 0.0),
        (MODEL_PG_IFNO, "train-pg-ifno", config.study.pg_gamma),
    ];
    for (name, stage, gamma) in models {
        let tc = TrainConfig {
            gamma,
            ..config.train.clone()
        };
        let (params, history) = timed(timing, stage, || train(split, &tc))?;
        if let Some(dir) = artifacts {
            save_checkpoint(&params, &dir.join(format!("{name}.ckpt"))).map_err(|e| e.in_stage(stage))?;
        }
        let (rows, phys, dumps) = timed(timing, if gamma == 0.0 { "evaluate-ifno" } else { "evaluate-pg-ifno" }, || {
            let train_pred = ifno_predictions(&params, &train_set)?;
            let test_pred = ifno_predictions(&params, &test_set)?;
            let mut rows = error_rows(name, Split::Train, &train_set, &train_pred)?;
            rows.extend(error_rows(name, Split::Test, &test_set, &test_pred)?);
            let dumps: Vec<FieldDump> = dump_positions
                .iter()
                .map(|&p| FieldDump {
                    model: name.to_string(),
                    sample: test_set[p].0,
                    truth: test_set[p].1.field.clone(),
                    prediction: test_pred[p].clone(),
                })
                .collect();
            Ok((rows, physics_loss(&params)?, dumps))
        })?;
        out.report.push_model(name, rows, Some(phys));
        out.histories.push((name.to_string(), history));
        out.dumps.extend(dumps);
    }

    let records: Vec<_> = train_set.iter().filter_map(|(_, s)| s.record).collect();
    let fit = timed(timing, "fit-fung", || {
        if records.is_empty() {
            return Err(Error::Data("training split has no stress-stretch records".into()));
        }
        fit_fung_de(&records, &config.fung.bounds, &config.fung.de, config.train.seed)
    })?;
    if let Some(dir) = artifacts {
        let path = dir.join("fung_fit.json");
        fs::write(&path, serde_json::to_string_pretty(&fit)? + "\n").map_err(|e| Error::io(&path, e))?;
    }
    out.report.fung_fit = Some(FungFitSummary {
        params: fit.params,
        objective: fit.objective,
        records: records.len(),
    });
    let all_cycles = config.study.fung_all_cycles;
    let (rows, dumps) = timed(timing, "fem-predict", || {
        let (tr, te) = (first_cycle(&train_set, all_cycles), first_cycle(&test_set, all_cycles));
        let solve = |set: &[(usize, &Sample)]| -> Result<Vec<GridField>> {
            set.par_iter()
                .map(|(_, s)| fem_solve_fung(&s.boundary, &fit.params, &ds.grid, &config.fung.fem).map(|sol| sol.field))
                .collect()
        };
        let (tr_pred, te_pred) = (solve(&tr)?, solve(&te)?);
        let mut rows = error_rows(MODEL_FUNG, Split::Train, &tr, &tr_pred)?;
        rows.extend(error_rows(MODEL_FUNG, Split::Test, &te, &te_pred)?);
        let dumps: Vec<FieldDump> = dump_positions
            .iter()
            .filter_map(|&p| {
                let k = test_set[p].0;
                te.iter().position(|(j, _)| *j == k).map(|q| FieldDump {
                    model: MODEL_FUNG.to_string(),
                    sample: k,
                    truth: te[q].1.field.clone(),
                    prediction: te_pred[q].clone(),
                })
            })
            .collect();
        Ok((rows, dumps))
    })?;
    out.report.push_model(MODEL_FUNG, rows, None);
    out.dumps.extend(dumps);
    Ok(out)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn write_field_dump<W: Write>(dump: &FieldDump, w: W) -> Result<()> {
    let g = dump.truth.grid();
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["x", "y", "ux_true", "uy_true", "ux_pred", "uy_pred"])?;
    for i in 0..g.nx {
        for j in 0..g.ny {
            let [x, y] = g.coord(i, j);
            let row = [
                x,
                y,
                dump.truth.get(0, i, j),
                dump.truth.get(1, i, j),
                dump.prediction.get(0, i, j),
                dump.prediction.get(1, i, j),
            ];
            out.write_record(row.iter().map(|v| v.to_string()))?;
        }
    }
    out.flush().map_err(|e| Error::io("<field dump>", e))
}

/// Writes `summary.json`, `timing.json`, `per_sample_errors.csv`,
/// `loss_history.csv` and one `fields/<model>_sample<k>.csv` per dump.
pub fn emit_report(outcome: &StudyOutcome, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir.join("fields")).map_err(|e| Error::io(dir, e))?;
    write_file(&dir.join("summary.json"), outcome.report.to_json()?.as_bytes())?;
    write_file(
        &dir.join("timing.json"),
        (serde_json::to_string_pretty(&outcome.timing)? + "\n").as_bytes(),
    )?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["model", "split", "sample", "protocol_id", "cycle", "relative_error"])?;
    for r in &outcome.report.per_sample {
        w.write_record([
            r.model.clone(),
            r.split.as_str().to_string(),
            r.sample.to_string(),
            r.protocol_id.to_string(),
            r.cycle.to_string(),
            r.error.map_or_else(String::new, |e| e.to_string()),
        ])?;
    }
    write_file(&dir.join("per_sample_errors.csv"), &csv_bytes(w)?)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["model", "epoch", "depth", "lr", "data_loss", "physics_loss", "seconds"])?;
    for (model, h) in &outcome.histories {
        for e in &h.epochs {
            w.write_record([
                model.clone(),
                e.epoch.to_string(),
                e.depth.to_string(),
                e.lr.to_string(),
                e.data_loss.to_string(),
                e.physics_loss.to_string(),
                e.seconds.to_string(),
            ])?;
        }
    }
    write_file(&dir.join("loss_history.csv"), &csv_bytes(w)?)?;

    for d in &outcome.dumps {
        let path = dir.join("fields").join(format!("{}_sample{}.csv", d.model, d.sample));
        let mut buf = Vec::new();
        write_field_dump(d, &mut buf)?;
        write_file(&path, &buf)?;
    }
    Ok(())
}

fn csv_bytes(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>> {
    w.into_inner()
        .map_err(|e| Error::Data(format!("csv buffer: {e}")))
}
