//! Reconstruction weights: local covariances, per-row constrained solves,
//! assembly of the row-stochastic graph, and the node regularizer.

mod neighbors;
mod solver;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

pub use neighbors::{neighbor_set, neighbor_sets, standardized_features};
pub use solver::{row_solver, DenseCholesky, LowRankWoodbury, RowSolver, RowSystem, SOLVER_NAMES};

use crate::error::{Error, Result};
use crate::model::{Dataset, DegreeSource, HyperParams, LabelState};

/// Diagonal floor added when a local system has zero trace.
pub const ZERO_TRACE_FLOOR: f64 = 1e-8;

/// Row-sum tolerance accepted by [`assemble_weight_matrix`].
pub const ROW_SUM_TOLERANCE: f64 = 1e-8;

/// Dense n × n reconstruction weights with zero diagonal and unit row sums.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightGraph {
    w: DMatrix<f64>,
    degrees: DVector<f64>,
}

impl WeightGraph {
    /// Validates an existing matrix (e.g. one read back from disk).
    pub fn from_matrix(w: DMatrix<f64>) -> Result<Self> {
        if !w.is_square() || w.nrows() < 2 {
            return Err(Error::Dimension(format!(
                "weight matrix must be square with n >= 2, got {}x{}",
                w.nrows(),
                w.ncols()
            )));
        }
        for i in 0..w.nrows() {
            if w[(i, i)] != 0.0 {
                return Err(Error::Invalid(format!("nonzero diagonal at row {i}")));
            }
            let s = w.row(i).sum();
            if !s.is_finite() || (s - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::Invalid(format!("row {i} sums to {s}, expected 1")));
            }
        }
        let degrees = DVector::from_iterator(w.ncols(), w.column_iter().map(|c| c.sum()));
        Ok(WeightGraph { w, degrees })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn n(&self) -> usize {
        self.w.nrows()
    }

    /// Column sums `d_jj = sum_i w_ij`.
    pub fn degrees(&self) -> &DVector<f64> {
        &self.degrees
    }

    /// `I - W`.
    pub fn laplacian(&self) -> DMatrix<f64> {
        DMatrix::identity(self.n(), self.n()) - &self.w
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.w
    }
}

/// Places per-instance rows into a [`WeightGraph`].
pub fn assemble_weight_matrix(rows: Vec<DVector<f64>>) -> Result<WeightGraph> {
    let n = rows.len();
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != n) {
        return Err(Error::Dimension(format!("row {i} has length {}, expected {n}", r.len())));
    }
    let mut w = DMatrix::zeros(n, n);
    for (i, r) in rows.iter().enumerate() {
        w.set_row(i, &r.transpose());
    }
    WeightGraph::from_matrix(w)
}

/// Which feature or label description a covariance was built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovarianceSource {
    View(usize),
    Task(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalCovariance {
    pub matrix: DMatrix<f64>,
    pub center: usize,
    pub source: CovarianceSource,
}

/// Gram matrix of the differences `center - neighbor_a`, one neighbor per row.
pub fn local_covariance(center: &[f64], neighbors: &DMatrix<f64>) -> DMatrix<f64> {
    let diff = DMatrix::from_fn(neighbors.nrows(), neighbors.ncols(), |a, c| {
        center[c] - neighbors[(a, c)]
    });
    &diff * diff.transpose()
}

/// Diagonal shift `xi * tr(L) / m`, or [`ZERO_TRACE_FLOOR`] when the trace vanishes.
pub fn conditioning_shift(trace: f64, xi: f64, m: usize) -> f64 {
    if trace == 0.0 {
        ZERO_TRACE_FLOOR
    } else {
        xi * trace / m as f64
    }
}

/// `L + (xi tr(L) / m) I`.
pub fn condition_system(l: &DMatrix<f64>, xi: f64, m: usize) -> DMatrix<f64> {
    let shift = conditioning_shift(l.trace(), xi, m);
    let mut out = l.clone();
    for a in 0..out.nrows() {
        out[(a, a)] += shift;
    }
    out
}

/// Mixed local covariance of one instance, `sum alpha C^x + sum beta C^f + lambda I`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedLocalSystem {
    pub l: DMatrix<f64>,
    pub neighbors: Vec<usize>,
}

/// All inputs needed to rebuild W for fixed soft labels.
pub struct WeightProblem<'a> {
    ds: &'a Dataset,
    labels: Vec<&'a DMatrix<f64>>,
    hp: &'a HyperParams,
    neighbors: &'a [Vec<usize>],
    solver: Box<dyn RowSolver>,
}

impl<'a> WeightProblem<'a> {
    /// `labels[k]` is the current n × c soft label matrix of task k.
    pub fn new(
        ds: &'a Dataset,
        labels: Vec<&'a DMatrix<f64>>,
        hp: &'a HyperParams,
        neighbors: &'a [Vec<usize>],
    ) -> Result<Self> {
        if labels.len() != ds.p() {
            return Err(Error::Dimension(format!(
                "{} label matrices for {} tasks",
                labels.len(),
                ds.p()
            )));
        }
        if labels.iter().any(|f| f.nrows() != ds.n()) {
            return Err(Error::Dimension("label matrix row count differs from n".into()));
        }
        if neighbors.len() != ds.n() {
            return Err(Error::Dimension("one neighbor set per instance is required".into()));
        }
        let solver = row_solver(&hp.solver)?;
        Ok(WeightProblem {
            ds,
            labels,
            hp,
            neighbors,
            solver,
        })
    }

    pub fn from_states(
        ds: &'a Dataset,
        states: &'a [LabelState],
        hp: &'a HyperParams,
        neighbors: &'a [Vec<usize>],
    ) -> Result<Self> {
        Self::new(ds, states.iter().map(LabelState::soft).collect(), hp, neighbors)
    }

    fn descriptions(&self) -> impl Iterator<Item = (f64, &DMatrix<f64>, CovarianceSource)> {
        let views = self
            .ds
            .views()
            .iter()
            .zip(&self.hp.alphas)
            .enumerate()
            .map(|(k, (x, &a))| (a, x, CovarianceSource::View(k)));
        let tasks = self
            .labels
            .iter()
            .zip(&self.hp.betas)
            .enumerate()
            .map(|(k, (f, &b))| (b, *f, CovarianceSource::Task(k)));
        views.chain(tasks).filter(|(wt, _, _)| *wt > 0.0)
    }

    /// Low-rank factor of the mixed covariance of instance `i`.
    pub fn row_system(&self, i: usize) -> RowSystem {
        let nb = &self.neighbors[i];
        let width: usize = self.descriptions().map(|(_, m, _)| m.ncols()).sum();
        let mut factor = DMatrix::zeros(nb.len(), width);
        let mut col = 0;
        for (wt, mat, _) in self.descriptions() {
            let s = wt.sqrt();
            for c in 0..mat.ncols() {
                let center = mat[(i, c)];
                for (a, &j) in nb.iter().enumerate() {
                    factor[(a, col)] = s * (center - mat[(j, c)]);
                }
                col += 1;
            }
        }
        RowSystem {
            factor,
            lambda: self.hp.lambda,
            xi: self.hp.xi,
        }
    }

    /// Per-description covariances of instance `i` (unweighted).
    pub fn local_covariances(&self, i: usize) -> Vec<LocalCovariance> {
        let nb = &self.neighbors[i];
        self.descriptions()
            .map(|(_, mat, source)| {
                let center: Vec<f64> = mat.row(i).iter().copied().collect();
                let rows = mat.select_rows(nb.iter());
                LocalCovariance {
                    matrix: local_covariance(&center, &rows),
                    center: i,
                    source,
                }
            })
            .collect()
    }

    /// Explicit mixed system, summed from the individual local covariances.
    pub fn mixed_local_system(&self, i: usize) -> MixedLocalSystem {
        let m = self.neighbors[i].len();
        let mut l = DMatrix::identity(m, m) * self.hp.lambda;
        let weights: Vec<f64> = self.descriptions().map(|(w, _, _)| w).collect();
        for (cov, w) in self.local_covariances(i).into_iter().zip(weights) {
            l += cov.matrix * w;
        }
        MixedLocalSystem {
            l,
            neighbors: self.neighbors[i].clone(),
        }
    }

    /// Length-n weight row of instance `i`, zero outside its neighbor set.
    pub fn solve_row(&self, i: usize) -> Result<DVector<f64>> {
        let local = self
            .solver
            .solve(&self.row_system(i))
            .map_err(|e| match e {
                Error::Singular(msg) => Error::Singular(format!("row {i}: {msg}")),
                other => other,
            })?;
        let mut row = DVector::zeros(self.ds.n());
        for (a, &j) in self.neighbors[i].iter().enumerate() {
            row[j] = local[a];
        }
        Ok(row)
    }

    /// Solves every row (concurrently) and assembles the graph in row order.
    pub fn build(&self) -> Result<WeightGraph> {
        let rows: Result<Vec<DVector<f64>>> =
            (0..self.ds.n()).into_par_iter().map(|i| self.solve_row(i)).collect();
        assemble_weight_matrix(rows?)
    }
}

/// One weight row computed from scratch, neighbor set included.
pub fn solve_weight_row(
    ds: &Dataset,
    states: &[LabelState],
    hp: &HyperParams,
    i: usize,
) -> Result<DVector<f64>> {
    hp.validate(ds)?;
    let neighbors: Vec<Vec<usize>> = (0..ds.n())
        .map(|j| {
            if j == i {
                neighbor_set(ds, i, hp.neighborhood)
            } else {
                Ok(Vec::new())
            }
        })
        .collect::<Result<_>>()?;
    WeightProblem::from_states(ds, states, hp, &neighbors)?.solve_row(i)
}

/// Diagonal of `V` for one task: each class column of `V Y` sums to one.
///
/// `degrees[r]` is the degree of the `r`-th labeled instance.
pub fn node_regularizer(prior: &DMatrix<f64>, degrees: &DVector<f64>) -> Result<DVector<f64>> {
    if prior.nrows() != degrees.len() {
        return Err(Error::Dimension(format!(
            "{} labeled rows but {} degrees",
            prior.nrows(),
            degrees.len()
        )));
    }
    let mut v = DVector::zeros(prior.nrows());
    for (c, col) in prior.column_iter().enumerate() {
        let mass = col.dot(degrees);
        if !mass.is_finite() || mass.abs() < 1e-12 {
            return Err(Error::Numeric(format!(
                "class {c} has zero degree mass over its labeled instances"
            )));
        }
        v += col.component_mul(degrees) / mass;
    }
    Ok(v)
}

/// Degrees of the labeled instances of one task under the chosen source.
pub fn labeled_degrees(graph: &WeightGraph, labeled: &[usize], source: DegreeSource) -> DVector<f64> {
    match source {
        DegreeSource::AllRows => DVector::from_iterator(
            labeled.len(),
            labeled.iter().map(|&j| graph.degrees()[j]),
        ),
        DegreeSource::LabeledRows => {
            let w = graph.matrix();
            DVector::from_iterator(
                labeled.len(),
                labeled.iter().map(|&j| labeled.iter().map(|&i| w[(i, j)]).sum()),
            )
        }
        DegreeSource::Uniform => DVector::from_element(labeled.len(), 1.0),
    }
}

/// Recomputes `V` for a task from the current graph.
pub fn update_regularizer(
    state: &mut LabelState,
    graph: &WeightGraph,
    source: DegreeSource,
) -> Result<()> {
    let v = match source {
        DegreeSource::Uniform => DVector::from_element(state.labeled().len(), 1.0),
        _ => node_regularizer(state.prior(), &labeled_degrees(graph, state.labeled(), source))?,
    };
    state.set_regularizer(v)
}
