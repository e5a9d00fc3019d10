//! Label updates for a fixed weight graph.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::LabelState;
use crate::weights::WeightGraph;

/// A proposed label commit: instance, class and the gradient entry that chose it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Selection {
    pub instance: usize,
    pub class: usize,
    pub value: f64,
}

fn check_partition(graph: &WeightGraph, state: &LabelState) -> Result<()> {
    let n = graph.n();
    if state.n() != n {
        return Err(Error::Dimension(format!(
            "label state covers {} instances, graph has {n}",
            state.n()
        )));
    }
    let mut seen = vec![false; n];
    for &i in state.labeled().iter().chain(state.unlabeled()) {
        if i >= n || seen[i] {
            return Err(Error::Invalid(format!("index {i} repeated or out of range")));
        }
        seen[i] = true;
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::Invalid("labeled and unlabeled indices do not cover 0..n".into()));
    }
    Ok(())
}

// singular values of a symmetric PSD matrix are its eigenvalues
fn smallest_singular_value(m: DMatrix<f64>) -> f64 {
    m.symmetric_eigenvalues().iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min)
}

/// Unlabeled block of `F` (rows ordered as `state.unlabeled()`) with the
/// labeled block pinned to `V Y`.
///
/// Solves `(A_u^T A_u) F_u = -A_u^T A_l V Y` with `A = I - W`.
pub fn infer_closed_form(graph: &WeightGraph, state: &LabelState) -> Result<DMatrix<f64>> {
    check_partition(graph, state)?;
    let c = state.n_classes();
    if state.unlabeled().is_empty() {
        return Ok(DMatrix::zeros(0, c));
    }
    let a = graph.laplacian();
    let a_u = a.select_columns(state.unlabeled());
    let a_l = a.select_columns(state.labeled());
    let a_ut = a_u.transpose();
    let lhs = &a_ut * &a_u;
    let rhs = -(a_ut * (a_l * state.regularized_prior()));
    match lhs.clone().cholesky() {
        Some(chol) => Ok(chol.solve(&rhs)),
        None => Err(Error::Singular(format!(
            "unlabeled block is not positive definite (smallest singular value {:.3e})",
            smallest_singular_value(lhs)
        ))),
    }
}

fn argmin_unlabeled(gradient: &DMatrix<f64>, unlabeled: &[usize]) -> Selection {
    let mut best: Option<Selection> = None;
    for &i in unlabeled {
        for j in 0..gradient.ncols() {
            let value = gradient[(i, j)];
            let better = match best {
                None => true,
                Some(b) => value < b.value || (value == b.value && (i, j) < (b.instance, b.class)),
            };
            if better {
                best = Some(Selection {
                    instance: i,
                    class: j,
                    value,
                });
            }
        }
    }
    best.expect("argmin over an empty candidate set")
}

/// Most negative entry of the unlabeled block of `(I-W)^T (I-W) [VY; 0]`.
pub fn select_most_confident(graph: &WeightGraph, state: &LabelState) -> Result<Selection> {
    check_partition(graph, state)?;
    if state.unlabeled().is_empty() {
        return Err(Error::Invalid("no unlabeled instance to select".into()));
    }
    let a = graph.laplacian();
    let gradient = a.transpose() * (&a * state.expanded_prior());
    Ok(argmin_unlabeled(&gradient, state.unlabeled()))
}

/// Moves `instance` into the labeled set of `state` with the given class.
pub fn progressive_commit(state: &mut LabelState, instance: usize, class: usize) -> Result<()> {
    state.commit(instance, class)
}

fn cost_matrix(graph: &WeightGraph) -> DMatrix<f64> {
    let a = graph.laplacian();
    a.transpose() * &a
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::Config(format!("gamma must be positive and finite, got {gamma}")));
    }
    Ok(())
}

/// Full `F = ((1/gamma) M + I)^{-1} V Y` with `V Y` expanded to n rows.
pub fn relaxed_infer(graph: &WeightGraph, state: &LabelState, gamma: f64) -> Result<DMatrix<f64>> {
    check_partition(graph, state)?;
    check_gamma(gamma)?;
    let mut system = cost_matrix(graph);
    for i in 0..system.nrows() {
        system[(i, i)] += gamma;
    }
    let rhs = state.expanded_prior() * gamma;
    let chol = system
        .cholesky()
        .ok_or_else(|| Error::Singular("relaxed label system is not positive definite".into()))?;
    Ok(chol.solve(&rhs))
}

/// Gradient `M F + gamma (F - VY)` of the relaxed label cost.
pub fn relaxed_gradient(
    graph: &WeightGraph,
    state: &LabelState,
    f: &DMatrix<f64>,
    gamma: f64,
) -> DMatrix<f64> {
    cost_matrix(graph) * f + (f - state.expanded_prior()) * gamma
}

/// Argmin over the unlabeled block of `(B^T B) V Y`, where
/// `B = A^T M A + gamma (A - I)^T (A - I)` and `A = ((1/gamma) M + I)^{-1}`.
pub fn relaxed_select(graph: &WeightGraph, state: &LabelState, gamma: f64) -> Result<Selection> {
    check_partition(graph, state)?;
    check_gamma(gamma)?;
    if state.unlabeled().is_empty() {
        return Err(Error::Invalid("no unlabeled instance to select".into()));
    }
    let n = graph.n();
    let m = cost_matrix(graph);
    let inner = &m / gamma + DMatrix::identity(n, n);
    let a = inner
        .cholesky()
        .ok_or_else(|| Error::Singular("relaxed label system is not positive definite".into()))?
        .inverse();
    let a_minus_i = &a - DMatrix::identity(n, n);
    let b = a.transpose() * (&m * &a) + a_minus_i.transpose() * &a_minus_i * gamma;
    let gradient = b.transpose() * (&b * state.expanded_prior());
    Ok(argmin_unlabeled(&gradient, state.unlabeled()))
}

/// Index of the largest entry; ties go to the lowest index.
pub fn harden_labels(row: &[f64]) -> usize {
    assert!(!row.is_empty(), "cannot harden an empty row");
    let mut best = 0;
    for (j, &x) in row.iter().enumerate().skip(1) {
        if x > row[best] {
            best = j;
        }
    }
    best
}

/// Predicted class per instance: given labels for labeled rows, argmax of `F` elsewhere.
pub fn predictions(state: &LabelState, given: &[Option<usize>]) -> Vec<usize> {
    let f = state.soft();
    (0..state.n())
        .map(|i| match given[i] {
            Some(c) => c,
            None => {
                let row: Vec<f64> = f.row(i).iter().copied().collect();
                harden_labels(&row)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Task;

    fn state(labels: Vec<Option<usize>>, c: usize) -> LabelState {
        LabelState::from_task(&Task::new(labels, c).unwrap()).unwrap()
    }

    fn graph(rows: &[&[f64]]) -> WeightGraph {
        let n = rows.len();
        WeightGraph::from_matrix(DMatrix::from_fn(n, n, |i, j| rows[i][j])).unwrap()
    }

    #[test]
    fn harden_examples() {
        assert_eq!(harden_labels(&[0.2, 0.7, 0.1]), 1);
        assert_eq!(harden_labels(&[0.5, 0.5]), 0);
        assert_eq!(harden_labels(&[0.0, 0.0, 1.0]), 2);
    }

    #[test]
    fn single_unlabeled_follows_its_only_neighbor() {
        // node 2 is tied only to node 0 (class 0)
        let g = graph(&[&[0., 1., 0.], &[1., 0., 0.], &[1., 0., 0.]]);
        let st = state(vec![Some(0), Some(1), None], 2);
        let fu = infer_closed_form(&g, &st).unwrap();
        assert!(fu[(0, 0)] > fu[(0, 1)]);
        assert!((fu[(0, 0)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_node_relaxed_hand_solve() {
        // M = [[2,-2],[-2,2]], gamma = 1, VY = [[1],[0]]  ->  (M + I) F = VY
        let g = graph(&[&[0., 1.], &[1., 0.]]);
        let st = state(vec![Some(0), None], 1);
        let f = relaxed_infer(&g, &st, 1.0).unwrap();
        assert!((f[(0, 0)] - 0.6).abs() < 1e-12);
        assert!((f[(1, 0)] - 0.4).abs() < 1e-12);
        assert!(relaxed_gradient(&g, &st, &f, 1.0).amax() < 1e-12);
    }

    #[test]
    fn selection_tie_prefers_lower_instance() {
        let h = 0.5;
        let g = graph(&[&[0., h, h], &[1., 0., 0.], &[1., 0., 0.]]);
        let st = state(vec![Some(0), None, None], 1);
        let s = select_most_confident(&g, &st).unwrap();
        assert_eq!((s.instance, s.class), (1, 0));
    }

    #[test]
    fn commit_twice_fails() {
        let mut st = state(vec![Some(0), Some(1), None], 2);
        progressive_commit(&mut st, 2, 1).unwrap();
        assert!(st.unlabeled().is_empty());
        assert!(progressive_commit(&mut st, 2, 1).is_err());
    }
}
