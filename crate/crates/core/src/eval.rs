//! Cross propagation, parameter selection and scoring metrics.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{fit, Fit};
use crate::model::{signed_label_matrix, CpReport, Dataset, HyperParams, LabelState, SignedLabels};
use crate::weights::WeightGraph;

/// How the learner's extra descriptions relate to each other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Several label columns over one feature space; scored by off-diagonal CP mass.
    Multitask,
    /// Several feature views over one label column; scored by the single CP value.
    Multiview,
}

/// `F^T W^z F` aggregated to task pairs, with `W^z F` formed by `z` products.
pub fn cross_propagation(graph: &WeightGraph, signed: &SignedLabels, z: usize) -> Result<CpReport> {
    if z == 0 {
        return Err(Error::Config("walk length z must be at least 1".into()));
    }
    let f = &signed.matrix;
    if f.nrows() != graph.n() {
        return Err(Error::Dimension(format!(
            "signed labels have {} rows, graph has {}",
            f.nrows(),
            graph.n()
        )));
    }
    let mut walked = f.clone();
    for _ in 0..z {
        walked = graph.matrix() * walked;
    }
    Ok(aggregate(&f.tr_mul(&walked), &signed.column_task))
}

pub(crate) fn aggregate(expanded: &DMatrix<f64>, column_task: &[usize]) -> CpReport {
    let p = column_task.iter().max().map_or(0, |m| m + 1);
    let mut matrix = vec![vec![0.0; p]; p];
    for (a, &ta) in column_task.iter().enumerate() {
        for (b, &tb) in column_task.iter().enumerate() {
            matrix[ta][tb] += expanded[(a, b)];
        }
    }
    let mut diagonal_sum = 0.0;
    let mut off_diagonal_sum = 0.0;
    for (i, row) in matrix.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            if i == j {
                diagonal_sum += v;
            } else {
                off_diagonal_sum += v;
            }
        }
    }
    CpReport {
        matrix,
        off_diagonal_sum,
        diagonal_sum,
    }
}

/// CP of a fitted graph against the given labels only.
pub fn cp_for_dataset(ds: &Dataset, graph: &WeightGraph, z: usize) -> Result<CpReport> {
    let states = LabelState::for_dataset(ds)?;
    cross_propagation(graph, &signed_label_matrix(&states), z)
}

pub fn cp_score(report: &CpReport, mode: Mode) -> f64 {
    match mode {
        Mode::Multitask => report.off_diagonal_sum,
        Mode::Multiview => report.diagonal_sum,
    }
}

/// One candidate of a CP selection grid; unset fields keep the template's value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridPoint {
    #[serde(default)]
    pub alpha: Option<Vec<f64>>,
    #[serde(default)]
    pub beta: Option<Vec<f64>>,
}

impl GridPoint {
    pub fn apply(&self, template: &HyperParams) -> HyperParams {
        let mut hp = template.clone();
        if let Some(a) = &self.alpha {
            hp.alphas = a.clone();
        }
        if let Some(b) = &self.beta {
            hp.betas = b.clone();
        }
        hp
    }
}

#[derive(Debug, Clone)]
pub struct CpSelection {
    /// Index of the winning grid point.
    pub index: usize,
    pub params: HyperParams,
    pub fit: Fit,
    pub report: CpReport,
    /// Score of every grid point, in grid order.
    pub scores: Vec<f64>,
}

/// Fits every grid point and keeps the one with the largest CP score.
/// Ties go to the earliest grid point.
pub fn select_params_by_cp(
    ds: &Dataset,
    grid: &[GridPoint],
    template: &HyperParams,
    mode: Mode,
) -> Result<CpSelection> {
    if grid.is_empty() {
        return Err(Error::Config("CP grid is empty".into()));
    }
    let runs: Vec<(HyperParams, Fit, CpReport)> = grid
        .par_iter()
        .map(|point| {
            let hp = point.apply(template);
            let fitted = fit(ds, &hp)?;
            let report = cp_for_dataset(ds, &fitted.graph, hp.z)?;
            Ok((hp, fitted, report))
        })
        .collect::<Result<_>>()?;
    let scores: Vec<f64> = runs.iter().map(|(_, _, r)| cp_score(r, mode)).collect();
    if let Some(bad) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::Numeric(format!("CP score of grid point {bad} is not finite")));
    }
    let mut index = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[index] {
            index = i;
        }
    }
    let (params, fit, report) = runs.into_iter().nth(index).unwrap();
    Ok(CpSelection {
        index,
        params,
        fit,
        report,
        scores,
    })
}

/// Fraction of positions where prediction and truth differ.
pub fn error_rate(predictions: &[usize], truth: &[usize]) -> Result<f64> {
    if predictions.len() != truth.len() {
        return Err(Error::Dimension(format!(
            "{} predictions for {} truth labels",
            predictions.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::Invalid("nothing to score".into()));
    }
    let wrong = predictions.iter().zip(truth).filter(|(p, t)| p != t).count();
    Ok(wrong as f64 / truth.len() as f64)
}

/// Micro-averaged F1 pooled over tasks. `positive[k]` lists the classes of
/// task `k` that count as positive labels.
pub fn f1_micro(predictions: &[Vec<usize>], truth: &[Vec<usize>], positive: &[Vec<usize>]) -> Result<f64> {
    if predictions.len() != truth.len() || truth.len() != positive.len() {
        return Err(Error::Dimension("predictions, truth and positive classes differ in task count".into()));
    }
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for ((pred, tru), pos) in predictions.iter().zip(truth).zip(positive) {
        if pred.len() != tru.len() {
            return Err(Error::Dimension(format!(
                "{} predictions for {} truth labels",
                pred.len(),
                tru.len()
            )));
        }
        for &c in pos {
            for (&p, &t) in pred.iter().zip(tru) {
                match (p == c, t == c) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fn_ += 1,
                    (false, false) => {}
                }
            }
        }
    }
    let denom = 2 * tp + fp + fn_;
    Ok(if denom == 0 { 0.0 } else { 2.0 * tp as f64 / denom as f64 })
}

/// Spearman rank correlation with average ranks for ties; `None` when either
/// side is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let mean = (a.len() as f64 + 1.0) / 2.0;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        sab += (x - mean) * (y - mean);
        saa += (x - mean).powi(2);
        sbb += (y - mean).powi(2);
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some(sab / (saa * sbb).sqrt())
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut out = vec![0.0; v.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end + 1 < order.len() && v[order[end + 1]] == v[order[start]] {
            end += 1;
        }
        let rank = (start + end) as f64 / 2.0 + 1.0;
        for &i in &order[start..=end] {
            out[i] = rank;
        }
        start = end + 1;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    pub seed: u64,
    pub error_rate: f64,
    pub f1_micro: f64,
    pub cp_off_diagonal_sum: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation; zero for a single value.
    pub std: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Summary {
        let n = values.len();
        if n == 0 {
            return Summary { mean: f64::NAN, std: f64::NAN };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Summary { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub error_rate: Summary,
    pub f1_micro: Summary,
    pub per_trial: Vec<TrialMetrics>,
}

impl MetricReport {
    pub fn from_trials(per_trial: Vec<TrialMetrics>) -> MetricReport {
        let errors: Vec<f64> = per_trial.iter().map(|t| t.error_rate).collect();
        let f1: Vec<f64> = per_trial.iter().map(|t| t.f1_micro).collect();
        MetricReport {
            error_rate: Summary::of(&errors),
            f1_micro: Summary::of(&f1),
            per_trial,
        }
    }
}
