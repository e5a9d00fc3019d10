//! Shared domain types: datasets, per-task label state, hyperparameters.
//!
//! Class labels are 0-based everywhere in the library. Instances are never
//! reordered; the labeled/unlabeled partition of each task is carried as
//! explicit index lists.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Label column of one task. `None` marks a missing label.
#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    labels: Vec<Option<usize>>,
    n_classes: usize,
}

impl Task {
    pub fn new(labels: Vec<Option<usize>>, n_classes: usize) -> Result<Self> {
        if labels.iter().all(Option::is_none) {
            return Err(Error::Invalid("task has no labels".into()));
        }
        if n_classes == 0 {
            return Err(Error::Invalid("task must have at least one class".into()));
        }
        if let Some(bad) = labels.iter().flatten().find(|&&c| c >= n_classes) {
            return Err(Error::Invalid(format!(
                "label {bad} outside class range 0..{n_classes}"
            )));
        }
        let mut seen = vec![false; n_classes];
        for &c in labels.iter().flatten() {
            seen[c] = true;
        }
        if let Some(empty) = seen.iter().position(|s| !s) {
            return Err(Error::Invalid(format!(
                "class {empty} has no observed label"
            )));
        }
        Ok(Task { labels, n_classes })
    }

    pub fn labels(&self) -> &[Option<usize>] {
        &self.labels
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn n_missing(&self) -> usize {
        self.labels.iter().filter(|l| l.is_none()).count()
    }
}

/// `n` instances described by `q` feature views and `p` label tasks.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    views: Vec<DMatrix<f64>>,
    tasks: Vec<Task>,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.views[0].nrows()
    }

    /// Number of views.
    pub fn q(&self) -> usize {
        self.views.len()
    }

    /// Number of tasks.
    pub fn p(&self) -> usize {
        self.tasks.len()
    }

    pub fn views(&self) -> &[DMatrix<f64>] {
        &self.views
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    /// Raw label columns, suitable for feeding back into [`validate_dataset_with_classes`].
    pub fn label_columns(&self) -> Vec<Vec<Option<usize>>> {
        self.tasks.iter().map(|t| t.labels.clone()).collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        self.tasks.iter().map(Task::n_classes).collect()
    }

    /// Same tasks over different views.
    pub fn with_views(&self, views: Vec<DMatrix<f64>>) -> Result<Dataset> {
        validate_dataset_with_classes(views, self.label_columns(), &self.class_counts())
    }

    /// Same views with different label columns (e.g. after masking).
    pub fn with_labels(&self, labels: Vec<Vec<Option<usize>>>) -> Result<Dataset> {
        validate_dataset_with_classes(self.views.clone(), labels, &self.class_counts())
    }
}

/// Builds a [`Dataset`], inferring each task's class count as `max label + 1`.
pub fn validate_dataset(
    views: Vec<DMatrix<f64>>,
    labels: Vec<Vec<Option<usize>>>,
) -> Result<Dataset> {
    let classes: Vec<usize> = labels
        .iter()
        .map(|col| col.iter().flatten().max().map_or(0, |m| m + 1))
        .collect();
    validate_dataset_with_classes(views, labels, &classes)
}

pub fn validate_dataset_with_classes(
    views: Vec<DMatrix<f64>>,
    labels: Vec<Vec<Option<usize>>>,
    classes: &[usize],
) -> Result<Dataset> {
    if views.is_empty() {
        return Err(Error::Invalid("at least one view is required".into()));
    }
    if labels.is_empty() {
        return Err(Error::Invalid("at least one task is required".into()));
    }
    if classes.len() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} class counts for {} tasks",
            classes.len(),
            labels.len()
        )));
    }
    let n = views[0].nrows();
    if let Some((k, v)) = views.iter().enumerate().find(|(_, v)| v.nrows() != n) {
        return Err(Error::Dimension(format!(
            "view row mismatch: view 0 has {n} rows, view {k} has {}",
            v.nrows()
        )));
    }
    if n < 2 {
        return Err(Error::Invalid(format!("need at least 2 instances, got {n}")));
    }
    if let Some((k, _)) = views.iter().enumerate().find(|(_, v)| v.ncols() == 0) {
        return Err(Error::Dimension(format!("view {k} has no features")));
    }
    if views.iter().any(|v| v.iter().any(|x| !x.is_finite())) {
        return Err(Error::Invalid("non-finite feature value".into()));
    }
    let mut tasks = Vec::with_capacity(labels.len());
    for (k, (col, &c)) in labels.into_iter().zip(classes).enumerate() {
        if col.len() != n {
            return Err(Error::Dimension(format!(
                "task {k} has {} labels for {n} instances",
                col.len()
            )));
        }
        tasks.push(Task::new(col, c).map_err(|e| match e {
            Error::Invalid(msg) => Error::Invalid(format!("task {k}: {msg}")),
            other => other,
        })?);
    }
    Ok(Dataset { views, tasks })
}

/// One-hot prior matrix for the observed entries of a label column.
///
/// Returns `(Y, labeled, unlabeled)` where row `r` of `Y` belongs to instance
/// `labeled[r]`.
pub fn binarize_labels(
    column: &[Option<usize>],
    n_classes: usize,
) -> Result<(DMatrix<f64>, Vec<usize>, Vec<usize>)> {
    let mut labeled = Vec::new();
    let mut unlabeled = Vec::new();
    for (i, label) in column.iter().enumerate() {
        match label {
            Some(c) if *c >= n_classes => {
                return Err(Error::Invalid(format!(
                    "label {c} at instance {i} outside class range 0..{n_classes}"
                )))
            }
            Some(_) => labeled.push(i),
            None => unlabeled.push(i),
        }
    }
    let mut y = DMatrix::zeros(labeled.len(), n_classes);
    for (r, &i) in labeled.iter().enumerate() {
        y[(r, column[i].unwrap())] = 1.0;
    }
    Ok((y, labeled, unlabeled))
}

/// Per-task label bookkeeping during inference.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelState {
    labeled: Vec<usize>,
    unlabeled: Vec<usize>,
    prior: DMatrix<f64>,
    regularizer: DVector<f64>,
    soft: DMatrix<f64>,
}

impl LabelState {
    /// Fresh state with `V = I`; labeled rows of `F` hold the one-hot prior,
    /// unlabeled rows are zero.
    pub fn from_task(task: &Task) -> Result<Self> {
        let (prior, labeled, unlabeled) = binarize_labels(task.labels(), task.n_classes())?;
        let n = task.labels().len();
        let mut soft = DMatrix::zeros(n, task.n_classes());
        for (r, &i) in labeled.iter().enumerate() {
            soft.set_row(i, &prior.row(r));
        }
        let regularizer = DVector::from_element(labeled.len(), 1.0);
        Ok(LabelState {
            labeled,
            unlabeled,
            prior,
            regularizer,
            soft,
        })
    }

    pub fn for_dataset(ds: &Dataset) -> Result<Vec<Self>> {
        ds.tasks().iter().map(LabelState::from_task).collect()
    }

    pub fn n(&self) -> usize {
        self.soft.nrows()
    }

    pub fn n_classes(&self) -> usize {
        self.prior.ncols()
    }

    pub fn labeled(&self) -> &[usize] {
        &self.labeled
    }

    pub fn unlabeled(&self) -> &[usize] {
        &self.unlabeled
    }

    /// `Y`, one row per entry of [`labeled`](Self::labeled).
    pub fn prior(&self) -> &DMatrix<f64> {
        &self.prior
    }

    /// Diagonal of `V`.
    pub fn regularizer(&self) -> &DVector<f64> {
        &self.regularizer
    }

    /// Soft classifying matrix `F` (n × c).
    pub fn soft(&self) -> &DMatrix<f64> {
        &self.soft
    }

    /// Class of the `r`-th labeled instance.
    pub fn prior_class(&self, r: usize) -> usize {
        self.prior.row(r).iter().position(|&x| x == 1.0).unwrap()
    }

    /// `V Y`, l × c.
    pub fn regularized_prior(&self) -> DMatrix<f64> {
        let mut vy = self.prior.clone();
        for (r, mut row) in vy.row_iter_mut().enumerate() {
            row *= self.regularizer[r];
        }
        vy
    }

    /// `V Y` scattered into an n × c matrix with zero rows for unlabeled instances.
    pub fn expanded_prior(&self) -> DMatrix<f64> {
        let vy = self.regularized_prior();
        let mut out = DMatrix::zeros(self.n(), self.n_classes());
        for (r, &i) in self.labeled.iter().enumerate() {
            out.set_row(i, &vy.row(r));
        }
        out
    }

    /// Installs a new node regularizer. `F` is left untouched.
    pub fn set_regularizer(&mut self, v: DVector<f64>) -> Result<()> {
        if v.len() != self.labeled.len() {
            return Err(Error::Dimension(format!(
                "regularizer of length {} for {} labeled instances",
                v.len(),
                self.labeled.len()
            )));
        }
        self.regularizer = v;
        Ok(())
    }

    /// Resets the labeled rows of `F` to `V Y`.
    pub fn clamp_labeled(&mut self) {
        let vy = self.regularized_prior();
        for (r, &i) in self.labeled.iter().enumerate() {
            self.soft.set_row(i, &vy.row(r));
        }
    }

    /// Writes the unlabeled block of `F`, rows ordered as [`unlabeled`](Self::unlabeled).
    pub fn set_unlabeled_soft(&mut self, fu: &DMatrix<f64>) -> Result<()> {
        if fu.nrows() != self.unlabeled.len() || fu.ncols() != self.n_classes() {
            return Err(Error::Dimension(format!(
                "unlabeled block is {}x{}, expected {}x{}",
                fu.nrows(),
                fu.ncols(),
                self.unlabeled.len(),
                self.n_classes()
            )));
        }
        for (r, &i) in self.unlabeled.iter().enumerate() {
            self.soft.set_row(i, &fu.row(r));
        }
        Ok(())
    }

    /// Replaces all of `F` (used by the relaxed update, which may move labeled rows).
    pub fn set_soft(&mut self, f: DMatrix<f64>) -> Result<()> {
        if f.shape() != self.soft.shape() {
            return Err(Error::Dimension("soft label matrix shape changed".into()));
        }
        self.soft = f;
        Ok(())
    }

    pub(crate) fn commit(&mut self, instance: usize, class: usize) -> Result<()> {
        if class >= self.n_classes() {
            return Err(Error::Invalid(format!(
                "class {class} outside range 0..{}",
                self.n_classes()
            )));
        }
        let pos = self
            .unlabeled
            .iter()
            .position(|&u| u == instance)
            .ok_or_else(|| {
                Error::Invalid(format!("instance {instance} is not unlabeled in this task"))
            })?;
        self.unlabeled.remove(pos);
        self.labeled.push(instance);

        let l = self.prior.nrows();
        let prior = std::mem::replace(&mut self.prior, DMatrix::zeros(0, 0));
        self.prior = prior.insert_row(l, 0.0);
        self.prior[(l, class)] = 1.0;

        let v = std::mem::replace(&mut self.regularizer, DVector::zeros(0));
        self.regularizer = v.push(1.0);

        for j in 0..self.n_classes() {
            self.soft[(instance, j)] = if j == class { 1.0 } else { 0.0 };
        }
        Ok(())
    }
}

/// Neighbor sets used when reconstructing each instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Neighborhood {
    /// Every other instance.
    Full,
    /// The `k` nearest instances in standardized concatenated feature space.
    Nearest(usize),
}

/// Which degrees feed the node regularizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DegreeSource {
    /// `d_j = sum over labeled i of w_ij`.
    LabeledRows,
    /// `d_j = sum over all i of w_ij`.
    AllRows,
    /// No node regularizer (`V = I`).
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    /// View weights, one per view.
    pub alphas: Vec<f64>,
    /// Task weights, one per task.
    pub betas: Vec<f64>,
    /// Ridge weight on `||W||_F^2`.
    pub lambda: f64,
    /// Noise tolerance of the relaxed label update; `None` keeps labels fixed.
    pub gamma: Option<f64>,
    /// Relative diagonal shift used to condition each local system.
    pub xi: f64,
    /// Walk length of the cross-propagation score.
    pub z: usize,
    pub neighborhood: Neighborhood,
    /// Registered name of the inference strategy.
    pub inference: String,
    /// Registered name of the weight-row solver.
    pub solver: String,
    pub max_iters: usize,
    pub tol: f64,
    pub degree_source: DegreeSource,
}

impl HyperParams {
    pub const DEFAULT_XI: f64 = 1e-4;

    /// Defaults for a dataset with `q` views and `p` tasks.
    pub fn new(q: usize, p: usize) -> Self {
        HyperParams {
            alphas: vec![1.0; q],
            betas: vec![1.0; p],
            lambda: 1.0,
            gamma: None,
            xi: Self::DEFAULT_XI,
            z: 2,
            neighborhood: Neighborhood::Full,
            inference: "batch".into(),
            solver: "lowrank".into(),
            max_iters: 20,
            tol: 1e-6,
            degree_source: DegreeSource::AllRows,
        }
    }

    pub fn for_dataset(ds: &Dataset) -> Self {
        Self::new(ds.q(), ds.p())
    }

    pub fn validate(&self, ds: &Dataset) -> Result<()> {
        if self.alphas.len() != ds.q() {
            return Err(Error::Config(format!(
                "{} view weights for {} views",
                self.alphas.len(),
                ds.q()
            )));
        }
        if self.betas.len() != ds.p() {
            return Err(Error::Config(format!(
                "{} task weights for {} tasks",
                self.betas.len(),
                ds.p()
            )));
        }
        let in_unit = |x: &f64| x.is_finite() && (0.0..=1.0).contains(x);
        if !self.alphas.iter().all(in_unit) || !self.betas.iter().all(in_unit) {
            return Err(Error::Config("view and task weights must lie in [0, 1]".into()));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be positive, got {}", self.lambda)));
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0) {
                return Err(Error::Config(format!("gamma must be positive, got {g}")));
            }
        }
        if !(0.0..0.1).contains(&self.xi) {
            return Err(Error::Config(format!("xi must lie in [0, 0.1), got {}", self.xi)));
        }
        if self.z == 0 {
            return Err(Error::Config("z must be at least 1".into()));
        }
        if let Neighborhood::Nearest(k) = self.neighborhood {
            if k == 0 || k >= ds.n() {
                return Err(Error::Config(format!(
                    "neighborhood size {k} must lie in 1..{}",
                    ds.n()
                )));
            }
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be at least 1".into()));
        }
        if self.tol.is_nan() || self.tol < 0.0 {
            return Err(Error::Config("tol must be non-negative".into()));
        }
        Ok(())
    }
}

/// Low-dimensional coordinates derived from a weight graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    /// n × d coordinates.
    pub coords: DMatrix<f64>,
    /// Sum of the retained eigenvalues, equal to `tr(X^T M X)`.
    pub cost: f64,
    /// Retained eigenvalues in ascending order.
    pub eigenvalues: Vec<f64>,
}

/// Cross-propagation matrix aggregated to task pairs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CpReport {
    /// p × p, row-major.
    pub matrix: Vec<Vec<f64>>,
    pub off_diagonal_sum: f64,
    pub diagonal_sum: f64,
}

/// The ±1 label matrix scored by cross propagation.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedLabels {
    /// n × (expanded columns).
    pub matrix: DMatrix<f64>,
    /// Owning task of each column.
    pub column_task: Vec<usize>,
}

/// Encodes the labeled rows of every task as ±1 columns; unlabeled rows are 0.
///
/// A task with at most two classes contributes one column (+1 for class 0,
/// -1 for class 1). A task with `c > 2` classes contributes `c` one-vs-rest
/// columns.
pub fn signed_label_matrix(states: &[LabelState]) -> SignedLabels {
    let n = states.first().map_or(0, LabelState::n);
    let mut columns: Vec<DVector<f64>> = Vec::new();
    let mut column_task = Vec::new();
    for (k, st) in states.iter().enumerate() {
        let c = st.n_classes();
        let targets: Vec<usize> = if c <= 2 { vec![0] } else { (0..c).collect() };
        for target in targets {
            let mut col = DVector::zeros(n);
            for (r, &i) in st.labeled().iter().enumerate() {
                col[i] = if st.prior_class(r) == target { 1.0 } else { -1.0 };
            }
            columns.push(col);
            column_task.push(k);
        }
    }
    let matrix = if columns.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&columns)
    };
    SignedLabels {
        matrix,
        column_task,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn views_4() -> Vec<DMatrix<f64>> {
        vec![
            DMatrix::from_row_slice(4, 3, &[0., 1., 2., 1., 0., 1., 2., 2., 0., 3., 1., 1.]),
            DMatrix::from_row_slice(4, 2, &[1., 1., 0., 2., 1., 0., 2., 2.]),
        ]
    }

    #[test]
    fn validates_two_views_one_task() {
        let ds = validate_dataset(views_4(), vec![vec![Some(0), Some(1), None, None]]).unwrap();
        assert_eq!((ds.n(), ds.q(), ds.p()), (4, 2, 1));
        assert_eq!(ds.tasks()[0].n_classes(), 2);
    }

    #[test]
    fn rejects_row_mismatch() {
        let mut views = views_4();
        views[1] = DMatrix::zeros(5, 2);
        let err = validate_dataset(views, vec![vec![Some(0), Some(1), None, None]]).unwrap_err();
        assert!(err.to_string().contains("view row mismatch"), "{err}");
    }

    #[test]
    fn rejects_unlabeled_task() {
        let err = validate_dataset(views_4(), vec![vec![None; 4]]).unwrap_err();
        assert!(err.to_string().contains("task has no labels"), "{err}");
    }

    #[test]
    fn rejects_empty_class_and_tiny_n() {
        let err = validate_dataset_with_classes(
            views_4(),
            vec![vec![Some(0), Some(2), None, None]],
            &[3],
        )
        .unwrap_err();
        assert!(err.to_string().contains("class 1"), "{err}");

        let one = vec![DMatrix::zeros(1, 2)];
        assert!(validate_dataset(one, vec![vec![Some(0)]]).is_err());
    }

    #[test]
    fn validation_is_idempotent() {
        let ds = validate_dataset(views_4(), vec![vec![Some(1), Some(0), None, Some(1)]]).unwrap();
        let again = validate_dataset_with_classes(
            ds.views().to_vec(),
            ds.label_columns(),
            &ds.class_counts(),
        )
        .unwrap();
        assert_eq!(ds, again);
    }

    #[test]
    fn binarize_examples() {
        let (y, l, u) = binarize_labels(&[Some(0), Some(1), None], 2).unwrap();
        assert_eq!(y, DMatrix::from_row_slice(2, 2, &[1., 0., 0., 1.]));
        assert_eq!((l, u), (vec![0, 1], vec![2]));

        let (y, _, _) = binarize_labels(&[Some(1), Some(1)], 2).unwrap();
        assert_eq!(y, DMatrix::from_row_slice(2, 2, &[0., 1., 0., 1.]));

        assert!(binarize_labels(&[Some(2)], 2).is_err());
    }

    #[test]
    fn signed_matrix_binary_and_missing() {
        let t = Task::new(vec![Some(0), Some(1)], 2).unwrap();
        let s = signed_label_matrix(&[LabelState::from_task(&t).unwrap()]);
        assert_eq!(s.matrix, DMatrix::from_column_slice(2, 1, &[1., -1.]));

        let t = Task::new(vec![Some(0), None, Some(1)], 2).unwrap();
        let s = signed_label_matrix(&[LabelState::from_task(&t).unwrap()]);
        assert_eq!(s.matrix[(1, 0)], 0.0);
    }

    #[test]
    fn signed_matrix_one_vs_rest() {
        let t = Task::new(vec![Some(0), Some(1), Some(2)], 3).unwrap();
        let s = signed_label_matrix(&[LabelState::from_task(&t).unwrap()]);
        let expected = DMatrix::from_row_slice(3, 3, &[1., -1., -1., -1., 1., -1., -1., -1., 1.]);
        assert_eq!(s.matrix, expected);
        assert_eq!(s.column_task, vec![0, 0, 0]);
    }

    #[test]
    fn commit_moves_instance() {
        let t = Task::new(vec![Some(0), Some(1), None, None, None, None], 2).unwrap();
        let mut st = LabelState::from_task(&t).unwrap();
        st.commit(5, 0).unwrap();
        assert_eq!(st.labeled(), &[0, 1, 5]);
        assert_eq!(st.unlabeled(), &[2, 3, 4]);
        assert_eq!(st.prior().row(2).iter().copied().collect::<Vec<_>>(), vec![1.0, 0.0]);
        assert!(st.commit(5, 0).is_err());
    }

    #[test]
    fn hyperparams_validation() {
        let ds = validate_dataset(views_4(), vec![vec![Some(0), Some(1), None, None]]).unwrap();
        let mut hp = HyperParams::for_dataset(&ds);
        hp.validate(&ds).unwrap();
        hp.neighborhood = Neighborhood::Nearest(4);
        assert!(hp.validate(&ds).is_err());
        hp.neighborhood = Neighborhood::Full;
        hp.lambda = 0.0;
        assert!(hp.validate(&ds).is_err());
    }
}
