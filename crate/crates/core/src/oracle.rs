//! Brute-force reference computations.
//!
//! Everything here is written from the defining formulas with explicit loops
//! and general-purpose dense solvers, sharing no code with the fast paths it
//! is used to check.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::eval::cross_propagation;
use crate::inference::infer_closed_form;
use crate::model::{
    validate_dataset, Dataset, DegreeSource, HyperParams, LabelState, Neighborhood, SignedLabels, Task,
};
use crate::weights::{neighbor_sets, update_regularizer, WeightGraph, WeightProblem};

fn conditioned(mut l: DMatrix<f64>, xi: f64) -> DMatrix<f64> {
    let m = l.nrows();
    let trace: f64 = (0..m).map(|a| l[(a, a)]).sum();
    let shift = if trace == 0.0 { 1e-8 } else { xi * trace / m as f64 };
    for a in 0..m {
        l[(a, a)] += shift;
    }
    l
}

/// Mixed local covariance of instance `i` built entry by entry.
pub fn mixed_covariance(
    descriptions: &[(f64, &DMatrix<f64>)],
    lambda: f64,
    i: usize,
    neighbors: &[usize],
) -> DMatrix<f64> {
    let m = neighbors.len();
    let mut l = DMatrix::zeros(m, m);
    for a in 0..m {
        for b in 0..m {
            let mut s = if a == b { lambda } else { 0.0 };
            for &(weight, x) in descriptions {
                for c in 0..x.ncols() {
                    s += weight * (x[(i, c)] - x[(neighbors[a], c)]) * (x[(i, c)] - x[(neighbors[b], c)]);
                }
            }
            l[(a, b)] = s;
        }
    }
    l
}

/// Minimizer of `w^T L w` subject to `sum(w) = 1` from the bordered system
/// `[2L 1; 1^T 0] [w; mu] = [0; 1]`, solved by LU.
pub fn kkt_row(l: &DMatrix<f64>) -> Result<DVector<f64>> {
    let m = l.nrows();
    let mut k = DMatrix::zeros(m + 1, m + 1);
    k.view_mut((0, 0), (m, m)).copy_from(&(l * 2.0));
    for a in 0..m {
        k[(a, m)] = 1.0;
        k[(m, a)] = 1.0;
    }
    let mut rhs = DVector::zeros(m + 1);
    rhs[m] = 1.0;
    let sol = k
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Singular("KKT system is singular".into()))?;
    Ok(sol.rows(0, m).into_owned())
}

/// Weight row of instance `i` over `neighbors`, conditioned like the library.
pub fn kkt_weight_row(
    views: &[DMatrix<f64>],
    labels: &[DMatrix<f64>],
    hp: &HyperParams,
    i: usize,
    neighbors: &[usize],
) -> Result<DVector<f64>> {
    let mut desc: Vec<(f64, &DMatrix<f64>)> = Vec::new();
    desc.extend(hp.alphas.iter().copied().zip(views.iter()));
    desc.extend(hp.betas.iter().copied().zip(labels.iter()));
    let l = conditioned(mixed_covariance(&desc, hp.lambda, i, neighbors), hp.xi);
    kkt_row(&l)
}

/// `F_u` minimizing `||(I-W)[VY; F_u]||_F^2` by Householder QR least squares.
pub fn least_squares_labels(
    w: &DMatrix<f64>,
    vy: &DMatrix<f64>,
    labeled: &[usize],
    unlabeled: &[usize],
) -> Result<DMatrix<f64>> {
    let n = w.nrows();
    let a = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } - w[(i, j)]);
    let a_u = DMatrix::from_fn(n, unlabeled.len(), |i, c| a[(i, unlabeled[c])]);
    let a_l = DMatrix::from_fn(n, labeled.len(), |i, c| a[(i, labeled[c])]);
    let target = -(a_l * vy);
    let qr = a_u.qr();
    let qtb = qr.q().transpose() * target;
    qr.r()
        .solve_upper_triangular(&qtb)
        .ok_or_else(|| Error::Singular("unlabeled columns are rank deficient".into()))
}

fn triple_product(a: &DMatrix<f64>, b: &DMatrix<f64>, p: &DMatrix<f64>) -> DMatrix<f64> {
    // a^T (b p) with explicit loops
    let n = a.nrows();
    let c = p.ncols();
    let mut bp = DMatrix::<f64>::zeros(n, c);
    for r in 0..n {
        for j in 0..c {
            bp[(r, j)] = (0..n).map(|s| b[(r, s)] * p[(s, j)]).sum();
        }
    }
    DMatrix::from_fn(n, c, |i, j| (0..n).map(|r| a[(r, i)] * bp[(r, j)]).sum())
}

fn argmin_rows(g: &DMatrix<f64>, rows: &[usize]) -> (usize, usize) {
    let mut cands: Vec<(f64, usize, usize)> = rows
        .iter()
        .flat_map(|&i| (0..g.ncols()).map(move |j| (i, j)))
        .map(|(i, j)| (g[(i, j)], i, j))
        .collect();
    cands.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    (cands[0].1, cands[0].2)
}

/// Argmin over unlabeled rows of `(I-W)^T (I-W) P`, `P` the expanded `VY`.
pub fn exhaustive_selection(w: &DMatrix<f64>, prior: &DMatrix<f64>, unlabeled: &[usize]) -> (usize, usize) {
    let n = w.nrows();
    let a = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } - w[(i, j)]);
    argmin_rows(&triple_product(&a, &a, prior), unlabeled)
}

/// Relaxed counterpart of [`exhaustive_selection`] using an LU inverse.
pub fn exhaustive_relaxed_selection(
    w: &DMatrix<f64>,
    prior: &DMatrix<f64>,
    unlabeled: &[usize],
    gamma: f64,
) -> Result<(usize, usize)> {
    let n = w.nrows();
    let id = DMatrix::<f64>::identity(n, n);
    let lap = &id - w;
    let m = lap.transpose() * &lap;
    let a = (&m / gamma + &id)
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::Singular("relaxed system is singular".into()))?;
    let a_i = &a - &id;
    let b = a.transpose() * &m * &a + a_i.transpose() * &a_i * gamma;
    Ok(argmin_rows(&triple_product(&b, &b, prior), unlabeled))
}

/// `F^T W^z F` with `W^z` materialized.
pub fn explicit_cp(w: &DMatrix<f64>, f: &DMatrix<f64>, z: usize) -> DMatrix<f64> {
    let mut wz = DMatrix::identity(w.nrows(), w.nrows());
    for _ in 0..z {
        wz = &wz * w;
    }
    f.transpose() * wz * f
}

/// Projector onto eigenvectors 2..=d+1 of `M` from a plain dense eigensolve.
pub fn dense_embedding_projector(m: &DMatrix<f64>, d: usize) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..m.nrows()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let u = eig.eigenvectors.select_columns(&order[1..=d]);
    &u * u.transpose()
}

fn knn_raw(x: &DMatrix<f64>, i: usize, k: usize) -> Vec<usize> {
    let n = x.nrows();
    let d = x.ncols();
    let mut z = x.clone();
    for c in 0..d {
        let mean = (0..n).map(|r| x[(r, c)]).sum::<f64>() / n as f64;
        let var = (0..n).map(|r| (x[(r, c)] - mean).powi(2)).sum::<f64>() / n as f64;
        let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
        for r in 0..n {
            z[(r, c)] = (x[(r, c)] - mean) / sd;
        }
    }
    let mut dist: Vec<(f64, usize)> = (0..n)
        .filter(|&j| j != i)
        .map(|j| ((0..d).map(|c| (z[(i, c)] - z[(j, c)]).powi(2)).sum(), j))
        .collect();
    dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    dist.into_iter().take(k).map(|(_, j)| j).collect()
}

/// Settings of the single-view, single-task reference learner.
#[derive(Debug, Clone, Copy)]
pub struct SpecialCase {
    /// Weight of the label term; the feature term gets `1 - a`.
    pub a: f64,
    /// Ridge added to every local system.
    pub lambda: f64,
    pub xi: f64,
    pub k: usize,
    pub max_iters: usize,
    pub tol: f64,
}

/// Alternating minimization of `(1-a)||X - WX||^2 + a||F - WF||^2` (plus ridge)
/// over k-nearest-neighbor rows with `F_l` pinned to the one-hot labels.
/// Returns the final `W` and `F`.
pub fn special_case_fit(
    x: &DMatrix<f64>,
    labels: &[Option<usize>],
    n_classes: usize,
    s: SpecialCase,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = x.nrows();
    let labeled: Vec<usize> = (0..n).filter(|&i| labels[i].is_some()).collect();
    let unlabeled: Vec<usize> = (0..n).filter(|&i| labels[i].is_none()).collect();
    let mut y = DMatrix::zeros(labeled.len(), n_classes);
    let mut f = DMatrix::zeros(n, n_classes);
    for (r, &i) in labeled.iter().enumerate() {
        let c = labels[i].unwrap();
        y[(r, c)] = 1.0;
        f[(i, c)] = 1.0;
    }
    let neighbors: Vec<Vec<usize>> = (0..n).map(|i| knn_raw(x, i, s.k)).collect();
    let solve_w = |f: &DMatrix<f64>| -> Result<DMatrix<f64>> {
        let mut w = DMatrix::zeros(n, n);
        for i in 0..n {
            let desc = [(1.0 - s.a, x), (s.a, f)];
            let l = conditioned(mixed_covariance(&desc, s.lambda, i, &neighbors[i]), s.xi);
            let row = kkt_row(&l)?;
            for (a, &j) in neighbors[i].iter().enumerate() {
                w[(i, j)] = row[a];
            }
        }
        Ok(w)
    };
    let mut w = solve_w(&f)?;
    for iter in 0.. {
        let fu = least_squares_labels(&w, &y, &labeled, &unlabeled)?;
        let mut change: f64 = 0.0;
        for (r, &i) in unlabeled.iter().enumerate() {
            for c in 0..n_classes {
                change = change.max((f[(i, c)] - fu[(r, c)]).abs());
                f[(i, c)] = fu[(r, c)];
            }
        }
        if change < s.tol || iter + 1 >= s.max_iters {
            break;
        }
        w = solve_w(&f)?;
    }
    Ok((w, f))
}

/// A small random multi-view multi-task problem.
pub struct RandomInstance {
    pub dataset: Dataset,
    /// Soft label matrices, one per task (arbitrary reals).
    pub labels: Vec<DMatrix<f64>>,
    pub params: HyperParams,
}

/// Instance with `n <= 10`, `d <= 5`, `p <= 2`, `q <= 2`, drawn from `seed`.
pub fn random_instance(seed: u64) -> RandomInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(3..=10);
    let q = rng.random_range(1..=2);
    let p = rng.random_range(1..=2);
    let views: Vec<DMatrix<f64>> = (0..q)
        .map(|_| {
            let d = rng.random_range(1..=5);
            DMatrix::from_fn(n, d, |_, _| rng.random_range(-2.0..2.0))
        })
        .collect();
    let tasks: Vec<Vec<Option<usize>>> = (0..p)
        .map(|_| (0..n).map(|i| if i < 2 { Some(i) } else { None }).collect())
        .collect();
    let labels: Vec<DMatrix<f64>> = (0..p)
        .map(|_| {
            let c = rng.random_range(2..=3);
            DMatrix::from_fn(n, c, |_, _| rng.random_range(-1.0..1.0))
        })
        .collect();
    let dataset = validate_dataset(views, tasks).expect("generated dataset is valid");
    let mut params = HyperParams::for_dataset(&dataset);
    params.alphas = (0..q).map(|_| rng.random_range(0.0..=1.0)).collect();
    params.betas = (0..p).map(|_| rng.random_range(0.0..=1.0)).collect();
    params.lambda = rng.random_range(0.05..2.0);
    params.xi = [0.0, 1e-4, 1e-2][rng.random_range(0..3)];
    params.solver = if rng.random_bool(0.5) { "lowrank" } else { "dense" }.into();
    if rng.random_bool(0.5) {
        params.neighborhood = Neighborhood::Nearest(rng.random_range(1..n));
    }
    RandomInstance {
        dataset,
        labels,
        params,
    }
}

/// Largest deviation between library weight rows and the KKT oracle.
pub fn weight_row_deviation(inst: &RandomInstance) -> Result<f64> {
    let ds = &inst.dataset;
    let nbs = neighbor_sets(ds, inst.params.neighborhood)?;
    let problem = WeightProblem::new(ds, inst.labels.iter().collect(), &inst.params, &nbs)?;
    let mut worst: f64 = 0.0;
    for i in 0..ds.n() {
        let fast = problem.solve_row(i)?;
        let reference = kkt_weight_row(ds.views(), &inst.labels, &inst.params, i, &nbs[i])?;
        for (a, &j) in nbs[i].iter().enumerate() {
            worst = worst.max((fast[j] - reference[a]).abs());
        }
        let outside: f64 = (0..ds.n())
            .filter(|j| !nbs[i].contains(j))
            .map(|j| fast[j].abs())
            .fold(0.0, f64::max);
        worst = worst.max(outside);
    }
    Ok(worst)
}

/// Result of a named oracle fixture.
#[derive(Debug, Clone, Serialize)]
pub struct FixtureReport {
    pub fixture: String,
    pub cases: usize,
    pub max_deviation: f64,
}

pub const FIXTURES: [&str; 3] = ["weight-row", "labels", "cp"];

// row-stochastic, zero diagonal, some negative entries
fn random_weights(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let mut w = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { rng.random_range(-0.2..1.0) });
    for i in 0..n {
        let s: f64 = (0..n).map(|j| w[(i, j)]).sum();
        for j in 0..n {
            w[(i, j)] /= s;
        }
    }
    w
}

/// Closed-form unlabeled labels against QR least squares.
fn label_deviation(seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(4..=12);
    let c = rng.random_range(2..=3);
    let mut labels: Vec<Option<usize>> = (0..n)
        .map(|i| (i < c || rng.random_bool(0.3)).then(|| i % c))
        .collect();
    labels[n - 1] = None;
    let w = random_weights(n, &mut rng);
    let graph = WeightGraph::from_matrix(w.clone())?;
    let mut state = LabelState::from_task(&Task::new(labels, c)?)?;
    update_regularizer(&mut state, &graph, DegreeSource::AllRows)?;
    let fast = infer_closed_form(&graph, &state)?;
    let slow = least_squares_labels(&w, &state.regularized_prior(), state.labeled(), state.unlabeled())?;
    Ok((fast - slow).amax())
}

/// Repeated products against the explicit matrix power.
fn cp_deviation(seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(3..=30);
    let w = random_weights(n, &mut rng);
    let cols = rng.random_range(1..=3);
    let f = DMatrix::from_fn(n, cols, |_, _| [-1.0, 0.0, 1.0][rng.random_range(0..3)]);
    let z = rng.random_range(1..=4);
    let signed = SignedLabels {
        matrix: f.clone(),
        column_task: (0..cols).collect(),
    };
    let report = cross_propagation(&WeightGraph::from_matrix(w.clone())?, &signed, z)?;
    let explicit = explicit_cp(&w, &f, z);
    let mut worst: f64 = 0.0;
    for a in 0..cols {
        for b in 0..cols {
            worst = worst.max((report.matrix[a][b] - explicit[(a, b)]).abs());
        }
    }
    Ok(worst)
}

pub fn run_fixture(name: &str) -> Result<FixtureReport> {
    let (cases, check): (u64, fn(u64) -> Result<f64>) = match name {
        "weight-row" => (200, |seed| weight_row_deviation(&random_instance(seed))),
        "labels" => (200, label_deviation),
        "cp" => (100, cp_deviation),
        other => {
            return Err(Error::Config(format!(
                "unknown fixture {other:?} (available: {})",
                FIXTURES.join(", ")
            )))
        }
    };
    let mut worst: f64 = 0.0;
    for seed in 0..cases {
        worst = worst.max(check(seed)?);
    }
    Ok(FixtureReport {
        fixture: name.into(),
        cases: cases as usize,
        max_deviation: worst,
    })
}
