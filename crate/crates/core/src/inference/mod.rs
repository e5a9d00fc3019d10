//! Alternating optimization drivers that fill in missing labels.
//!
//! Strategies are registered by name; [`inference_strategy`] resolves the one
//! named in [`HyperParams::inference`].

mod solve;

use nalgebra::DMatrix;

pub use solve::{
    harden_labels, infer_closed_form, predictions, progressive_commit, relaxed_gradient,
    relaxed_infer, relaxed_select, select_most_confident, Selection,
};

use crate::error::{Error, Result};
use crate::model::{Dataset, HyperParams, LabelState};
use crate::weights::{neighbor_sets, update_regularizer, WeightGraph, WeightProblem};

/// Outcome for one task.
#[derive(Debug, Clone, PartialEq)]
pub struct InferenceResult {
    /// Final soft label matrix `F` (n × c).
    pub soft: DMatrix<f64>,
    /// One class per instance; given labels are passed through unchanged.
    pub predictions: Vec<usize>,
    pub iterations: usize,
    /// Objective after every half-step.
    pub objective_trace: Vec<f64>,
}

/// Learnt graph plus per-task results.
#[derive(Debug, Clone)]
pub struct Fit {
    pub graph: WeightGraph,
    pub results: Vec<InferenceResult>,
}

pub trait InferenceStrategy: Send + Sync {
    fn name(&self) -> &'static str;
    fn run(&self, ds: &Dataset, hp: &HyperParams) -> Result<Fit>;
}

/// Alternates full W rebuilds with exact label solves until `F` settles.
#[derive(Debug, Default, Clone, Copy)]
pub struct Batch;

/// Commits one most-confident label per iteration until none are missing.
#[derive(Debug, Default, Clone, Copy)]
pub struct Progressive;

impl InferenceStrategy for Batch {
    fn name(&self) -> &'static str {
        "batch"
    }

    fn run(&self, ds: &Dataset, hp: &HyperParams) -> Result<Fit> {
        run_batch(ds, hp)
    }
}

impl InferenceStrategy for Progressive {
    fn name(&self) -> &'static str {
        "progressive"
    }

    fn run(&self, ds: &Dataset, hp: &HyperParams) -> Result<Fit> {
        run_progressive(ds, hp)
    }
}

pub const STRATEGY_NAMES: [&str; 2] = ["batch", "progressive"];

pub fn inference_strategy(name: &str) -> Result<Box<dyn InferenceStrategy>> {
    match name {
        "batch" => Ok(Box::new(Batch)),
        "progressive" => Ok(Box::new(Progressive)),
        other => Err(Error::Config(format!(
            "unknown inference strategy {other:?} (available: {})",
            STRATEGY_NAMES.join(", ")
        ))),
    }
}

/// Runs the strategy named in `hp`.
pub fn fit(ds: &Dataset, hp: &HyperParams) -> Result<Fit> {
    inference_strategy(&hp.inference)?.run(ds, hp)
}

/// Value of the joint objective for the current graph and label states.
///
/// With a finite `gamma` the relaxed penalty `beta_k gamma ||F - VY||^2` is included.
pub fn objective(ds: &Dataset, graph: &WeightGraph, states: &[LabelState], hp: &HyperParams) -> f64 {
    let a = graph.laplacian();
    let mut total = hp.lambda * graph.matrix().norm_squared();
    for (x, &alpha) in ds.views().iter().zip(&hp.alphas) {
        total += alpha * (&a * x).norm_squared();
    }
    for (st, &beta) in states.iter().zip(&hp.betas) {
        total += beta * (&a * st.soft()).norm_squared();
        if let Some(gamma) = hp.gamma {
            total += beta * gamma * (st.soft() - st.expanded_prior()).norm_squared();
        }
    }
    total
}

fn build_graph(
    ds: &Dataset,
    states: &[LabelState],
    hp: &HyperParams,
    neighbors: &[Vec<usize>],
) -> Result<WeightGraph> {
    WeightProblem::from_states(ds, states, hp, neighbors)?.build()
}

fn max_change(before: &[DMatrix<f64>], states: &[LabelState]) -> f64 {
    before
        .iter()
        .zip(states)
        .map(|(b, st)| (b - st.soft()).amax())
        .fold(0.0, f64::max)
}

fn finish(
    ds: &Dataset,
    graph: WeightGraph,
    states: Vec<LabelState>,
    iterations: usize,
    trace: Vec<f64>,
) -> Fit {
    let results = states
        .into_iter()
        .zip(ds.tasks())
        .map(|(st, task)| InferenceResult {
            predictions: predictions(&st, task.labels()),
            soft: st.soft().clone(),
            iterations,
            objective_trace: trace.clone(),
        })
        .collect();
    Fit { graph, results }
}

/// Batch alternating optimization.
///
/// The first graph is solved with one-hot given labels and zero unlabeled rows;
/// `V` is derived from it and then held fixed, so every later half-step is an
/// exact minimizer of the same objective.
pub fn run_batch(ds: &Dataset, hp: &HyperParams) -> Result<Fit> {
    hp.validate(ds)?;
    let neighbors = neighbor_sets(ds, hp.neighborhood)?;
    let mut states = LabelState::for_dataset(ds)?;
    let mut graph = build_graph(ds, &states, hp, &neighbors)?;
    for st in &mut states {
        update_regularizer(st, &graph, hp.degree_source)?;
        st.clamp_labeled();
    }

    let mut trace = Vec::new();
    let mut iterations = 0;
    loop {
        let before: Vec<DMatrix<f64>> = states.iter().map(|s| s.soft().clone()).collect();
        for st in &mut states {
            match hp.gamma {
                Some(gamma) => {
                    let f = relaxed_infer(&graph, st, gamma)?;
                    st.set_soft(f)?;
                }
                None => {
                    let fu = infer_closed_form(&graph, st)?;
                    st.set_unlabeled_soft(&fu)?;
                }
            }
        }
        iterations += 1;
        trace.push(objective(ds, &graph, &states, hp));
        if max_change(&before, &states) < hp.tol || iterations >= hp.max_iters {
            break;
        }
        graph = build_graph(ds, &states, hp, &neighbors)?;
        trace.push(objective(ds, &graph, &states, hp));
    }
    Ok(finish(ds, graph, states, iterations, trace))
}

/// Progressive inference: rebuild W, refresh `V`, commit the single most
/// negative gradient entry across all tasks, repeat.
pub fn run_progressive(ds: &Dataset, hp: &HyperParams) -> Result<Fit> {
    hp.validate(ds)?;
    let neighbors = neighbor_sets(ds, hp.neighborhood)?;
    let mut states = LabelState::for_dataset(ds)?;
    let mut trace = Vec::new();
    let mut iterations = 0;
    loop {
        let graph = build_graph(ds, &states, hp, &neighbors)?;
        trace.push(objective(ds, &graph, &states, hp));
        let mut best: Option<(f64, usize, Selection)> = None;
        for (k, st) in states.iter_mut().enumerate() {
            if st.unlabeled().is_empty() {
                continue;
            }
            update_regularizer(st, &graph, hp.degree_source)?;
            let s = match hp.gamma {
                Some(gamma) => relaxed_select(&graph, st, gamma)?,
                None => select_most_confident(&graph, st)?,
            };
            // strict comparison keeps the lowest task on ties
            if best.is_none_or(|(v, _, _)| s.value < v) {
                best = Some((s.value, k, s));
            }
        }
        let Some((_, k, s)) = best else {
            return Ok(finish(ds, graph, states, iterations, trace));
        };
        progressive_commit(&mut states[k], s.instance, s.class)?;
        iterations += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_resolves_names() {
        for name in STRATEGY_NAMES {
            assert_eq!(inference_strategy(name).unwrap().name(), name);
        }
        assert!(inference_strategy("greedy").is_err());
    }
}
