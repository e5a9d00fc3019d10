//! Trial orchestration: mask, select, learn, score, write artifacts.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::embed::{embedding_cost_matrix, spectral_embed};
use crate::error::{Error, Result};
use crate::eval::{
    cp_for_dataset, cp_score, error_rate, f1_micro, select_params_by_cp, MetricReport,
    TrialMetrics,
};
use crate::inference::{fit, Fit};
use crate::io::{load_table, mask_labels, save_labels, save_matrix, split_views};
use crate::model::{validate_dataset_with_classes, CpReport, Dataset, HyperParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub lambda: f64,
    pub gamma: Option<f64>,
    /// Winning CP grid point, when a grid was searched.
    pub grid_index: Option<usize>,
    pub error_rate: f64,
    pub f1_micro: f64,
    pub cp_off_diagonal_sum: f64,
    pub cp_score: f64,
    pub iterations: usize,
    pub wall_time_secs: f64,
}

/// Loads the configured table and splits it into views. Labels are the full
/// ground truth; masking happens per trial.
pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    let table = load_table(cfg.data.path(), cfg.data.delimiter(), &cfg.data.label_columns())?;
    if table.labels.is_empty() {
        return Err(Error::Config("no label columns configured".into()));
    }
    let views = split_views(&table.features, &cfg.view_split)?;
    let classes = table.class_counts();
    validate_dataset_with_classes(views, table.labels, &classes)
}

/// Classes scored as positive by micro-F1: the second class of a binary
/// task, every class otherwise.
pub fn positive_classes(ds: &Dataset) -> Vec<Vec<usize>> {
    ds.class_counts()
        .into_iter()
        .map(|c| if c == 2 { vec![1] } else { (0..c).collect() })
        .collect()
}

/// Outcome of one trial, before it is written anywhere.
pub struct TrialOutcome {
    pub record: TrialRecord,
    pub fit: Fit,
    pub masked: Dataset,
}

/// Runs one trial on `truth` with labels hidden using `seed`.
pub fn run_trial(
    truth: &Dataset,
    cfg: &ExperimentConfig,
    template: &HyperParams,
    trial: usize,
    seed: u64,
) -> Result<TrialOutcome> {
    let start = Instant::now();
    let labels = truth.label_columns();
    let masked = truth.with_labels(mask_labels(&labels, cfg.label_fraction, seed)?)?;

    let (hp, fitted, report, grid_index): (HyperParams, Fit, CpReport, Option<usize>) =
        match &cfg.cp_grid {
            Some(grid) => {
                let sel = select_params_by_cp(&masked, grid, template, cfg.mode)?;
                (sel.params, sel.fit, sel.report, Some(sel.index))
            }
            None => {
                let fitted = fit(&masked, template)?;
                let report = cp_for_dataset(&masked, &fitted.graph, template.z)?;
                (template.clone(), fitted, report, None)
            }
        };

    let mut pred_all = Vec::new();
    let mut truth_all = Vec::new();
    let mut pred_tasks = Vec::new();
    let mut truth_tasks = Vec::new();
    for (k, result) in fitted.results.iter().enumerate() {
        let hidden: Vec<usize> = (0..truth.n())
            .filter(|&i| masked.tasks()[k].labels()[i].is_none())
            .filter(|&i| labels[k][i].is_some())
            .collect();
        let p: Vec<usize> = hidden.iter().map(|&i| result.predictions[i]).collect();
        let t: Vec<usize> = hidden.iter().map(|&i| labels[k][i].unwrap()).collect();
        pred_all.extend_from_slice(&p);
        truth_all.extend_from_slice(&t);
        pred_tasks.push(p);
        truth_tasks.push(t);
    }

    let record = TrialRecord {
        trial,
        seed,
        alpha: hp.alphas.clone(),
        beta: hp.betas.clone(),
        lambda: hp.lambda,
        gamma: hp.gamma,
        grid_index,
        error_rate: error_rate(&pred_all, &truth_all)?,
        f1_micro: f1_micro(&pred_tasks, &truth_tasks, &positive_classes(truth))?,
        cp_off_diagonal_sum: report.off_diagonal_sum,
        cp_score: cp_score(&report, cfg.mode),
        iterations: fitted.results.first().map_or(0, |r| r.iterations),
        wall_time_secs: start.elapsed().as_secs_f64(),
    };
    Ok(TrialOutcome {
        record,
        fit: fitted,
        masked,
    })
}

fn write_artifacts(dir: &Path, outcome: &TrialOutcome, embed_dim: Option<usize>) -> Result<()> {
    save_matrix(&dir.join("weights.csv"), outcome.fit.graph.matrix())?;
    for (k, r) in outcome.fit.results.iter().enumerate() {
        save_matrix(&dir.join(format!("soft_labels_{k}.csv")), &r.soft)?;
    }
    save_labels(&dir.join("given_labels.csv"), &outcome.masked.label_columns())?;
    let predicted: Vec<Vec<Option<usize>>> = outcome
        .fit
        .results
        .iter()
        .map(|r| r.predictions.iter().map(|&c| Some(c)).collect())
        .collect();
    save_labels(&dir.join("predictions.csv"), &predicted)?;
    if let Some(d) = embed_dim {
        let emb = spectral_embed(&embedding_cost_matrix(&outcome.fit.graph), d)?;
        save_matrix(&dir.join("embedding.csv"), &emb.coords)?;
    }
    Ok(())
}

/// Runs every trial, appending one JSON line per trial to `trials.jsonl` as it
/// finishes, then writes `summary.json`. Trial `t` uses seed `seed + t`;
/// matrix artifacts are written for trial 0.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<MetricReport> {
    let truth = load_dataset(cfg)?;
    let template = cfg.hyper_params(truth.q(), truth.p())?;
    template.validate(&truth)?;

    let out = &cfg.out;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let log_path = out.join("trials.jsonl");
    let mut log = File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;

    let mut per_trial = Vec::with_capacity(cfg.trials);
    for t in 0..cfg.trials {
        let seed = cfg.seed.wrapping_add(t as u64);
        let outcome = run_trial(&truth, cfg, &template, t, seed)?;
        let line = serde_json::to_string(&outcome.record)
            .map_err(|e| Error::Numeric(format!("trial record not serializable: {e}")))?;
        writeln!(log, "{line}")
            .and_then(|_| log.flush())
            .map_err(|e| Error::io(&log_path, e))?;
        if t == 0 {
            write_artifacts(out, &outcome, cfg.embed_dim)?;
        }
        per_trial.push(TrialMetrics {
            seed,
            error_rate: outcome.record.error_rate,
            f1_micro: outcome.record.f1_micro,
            cp_off_diagonal_sum: outcome.record.cp_off_diagonal_sum,
        });
    }

    let report = MetricReport::from_trials(per_trial);
    let summary_path = out.join("summary.json");
    let file = File::create(&summary_path).map_err(|e| Error::io(&summary_path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, &report)
        .map_err(|e| Error::Numeric(format!("summary not serializable: {e}")))?;
    writeln!(w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(&summary_path, e))?;
    Ok(report)
}
