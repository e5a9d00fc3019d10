#![allow(dead_code)]

use mtmv_core::model::{validate_dataset, Dataset, LabelState, Task};
use mtmv_core::weights::WeightGraph;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Standard normal draw (Box-Muller).
pub fn normal(rng: &mut impl Rng) -> f64 {
    let u: f64 = rng.random_range(f64::EPSILON..1.0);
    let v: f64 = rng.random();
    (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos()
}

/// Two 2-D unit-variance blobs; class 1 is shifted by `sep` along x.
pub fn blobs(per_class: usize, sep: f64, seed: u64) -> (DMatrix<f64>, Vec<usize>) {
    let mut r = rng(seed);
    let n = 2 * per_class;
    let truth: Vec<usize> = (0..n).map(|i| usize::from(i >= per_class)).collect();
    let x = DMatrix::from_fn(n, 2, |i, c| {
        let shift = if c == 0 && truth[i] == 1 { sep } else { 0.0 };
        shift + normal(&mut r)
    });
    (x, truth)
}

/// Keeps the labels at `keep`, hides the rest.
pub fn partial(truth: &[usize], keep: &[usize]) -> Vec<Option<usize>> {
    (0..truth.len())
        .map(|i| keep.contains(&i).then_some(truth[i]))
        .collect()
}

/// Random row-stochastic matrix with zero diagonal and some negative entries.
pub fn random_graph(n: usize, seed: u64) -> WeightGraph {
    let mut r = rng(seed);
    let mut w = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { r.random_range(-0.2..1.0) });
    for i in 0..n {
        let s: f64 = w.row(i).sum();
        let mut row = w.row_mut(i);
        row /= s;
    }
    WeightGraph::from_matrix(w).unwrap()
}

/// Random binary/ternary task over `n` instances with every class observed
/// and at least one missing label.
pub fn random_task(n: usize, seed: u64) -> Task {
    let mut r = rng(seed);
    let c = r.random_range(2..=3usize).min(n - 1);
    let mut labels: Vec<Option<usize>> = (0..n)
        .map(|_| r.random_bool(0.4).then(|| r.random_range(0..c)))
        .collect();
    for (class, slot) in labels.iter_mut().take(c).enumerate() {
        *slot = Some(class);
    }
    labels[n - 1] = None;
    Task::new(labels, c).unwrap()
}

/// Label state with a random positive node regularizer.
pub fn random_state(n: usize, seed: u64) -> LabelState {
    let mut st = LabelState::from_task(&random_task(n, seed)).unwrap();
    let mut r = rng(seed ^ 0x9e37);
    let v = DVector::from_fn(st.labeled().len(), |_, _| r.random_range(0.2..2.0));
    st.set_regularizer(v).unwrap();
    st.clamp_labeled();
    st
}

/// Small random multi-view multi-task dataset with missing labels.
pub fn random_dataset(seed: u64) -> Dataset {
    let mut r = rng(seed);
    let n = r.random_range(8..=20);
    let q = r.random_range(1..=2);
    let p = r.random_range(1..=2);
    let views = (0..q)
        .map(|_| {
            let d = r.random_range(1..=4);
            DMatrix::from_fn(n, d, |_, _| normal(&mut r))
        })
        .collect();
    let tasks = (0..p)
        .map(|k| random_task(n, seed * 7 + k as u64).labels().to_vec())
        .collect();
    validate_dataset(views, tasks).unwrap()
}

pub fn max_row_sum_deviation(g: &WeightGraph) -> f64 {
    g.matrix().row_iter().map(|r| (r.sum() - 1.0).abs()).fold(0.0, f64::max)
}

pub fn max_abs_diagonal(g: &WeightGraph) -> f64 {
    g.matrix().diagonal().amax()
}
