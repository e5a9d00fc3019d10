//! Spectral embedding of a learnt weight graph.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::inference::{fit, Fit};
use crate::model::{Dataset, Embedding, HyperParams};
use crate::weights::WeightGraph;

/// `M = (I - W)^T (I - W)`, symmetrized.
pub fn embedding_cost_matrix(graph: &WeightGraph) -> DMatrix<f64> {
    let a = graph.laplacian();
    let m = a.transpose() * &a;
    (&m + m.transpose()) * 0.5
}

/// Orthonormal basis of the complement of the all-ones vector (n × (n-1)),
/// taken from the Householder reflector that maps `1` onto the first axis.
fn complement_basis(n: usize) -> DMatrix<f64> {
    let mut v = DVector::from_element(n, 1.0);
    v[0] += (n as f64).sqrt();
    let h = DMatrix::identity(n, n) - (&v * v.transpose()) * (2.0 / v.norm_squared());
    h.columns(1, n - 1).into_owned()
}

fn sorted_eigen(m: DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("cost matrix has non-finite entries".into()));
    }
    let eig = SymmetricEigen::try_new(m, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numeric("eigensolver did not converge".into()))?;
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = eig.eigenvectors.select_columns(&order);
    Ok((values, vectors))
}

// first component that is clearly nonzero is made positive
fn fix_signs(x: &mut DMatrix<f64>) {
    for mut col in x.column_iter_mut() {
        if let Some(&lead) = col.iter().find(|v| v.abs() > 1e-12) {
            if lead < 0.0 {
                col.neg_mut();
            }
        }
    }
}

/// Coordinates from the `d` smallest eigenvectors of `M` orthogonal to `1`.
///
/// The constant direction is projected out before the eigendecomposition, so
/// a graph with several zero modes still yields coordinates orthogonal to `1`.
pub fn spectral_embed(m: &DMatrix<f64>, d: usize) -> Result<Embedding> {
    let n = m.nrows();
    if !m.is_square() {
        return Err(Error::Dimension("cost matrix must be square".into()));
    }
    if d == 0 || d >= n {
        return Err(Error::Config(format!("embedding dimension {d} must lie in 1..{n}")));
    }
    let q = complement_basis(n);
    let reduced = q.transpose() * (m * &q);
    let reduced = (&reduced + reduced.transpose()) * 0.5;
    let (values, vectors) = sorted_eigen(reduced)?;
    let mut coords = q * vectors.columns(0, d);
    fix_signs(&mut coords);
    let eigenvalues = values[..d].to_vec();
    Ok(Embedding {
        coords,
        cost: eigenvalues.iter().sum(),
        eigenvalues,
    })
}

/// All eigenvalues of a symmetric matrix, ascending.
pub fn spectrum(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    Ok(sorted_eigen((m + m.transpose()) * 0.5)?.0)
}

/// `sum_i ||x_i - sum_j w_ij x_j||^2` evaluated directly on coordinates.
pub fn embedding_cost(graph: &WeightGraph, coords: &DMatrix<f64>) -> f64 {
    (coords - graph.matrix() * coords).norm_squared()
}

/// Alternates learning and embedding: each round replaces the views with the
/// coordinates of the previous round. `rounds = 0` is a plain fit.
pub fn learn_and_embed(
    ds: &Dataset,
    hp: &HyperParams,
    d: usize,
    rounds: usize,
) -> Result<(Fit, Embedding)> {
    let mut current = ds.clone();
    let mut hp = hp.clone();
    let mut result = fit(&current, &hp)?;
    let mut emb = spectral_embed(&embedding_cost_matrix(&result.graph), d)?;
    for _ in 0..rounds {
        current = current.with_views(vec![emb.coords.clone()])?;
        hp.alphas = vec![1.0];
        result = fit(&current, &hp)?;
        emb = spectral_embed(&embedding_cost_matrix(&result.graph), d)?;
    }
    Ok((result, emb))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn swap_graph_cost_matrix() {
        let g = WeightGraph::from_matrix(DMatrix::from_row_slice(2, 2, &[0., 1., 1., 0.])).unwrap();
        let m = embedding_cost_matrix(&g);
        assert_eq!(m, DMatrix::from_row_slice(2, 2, &[2., -2., -2., 2.]));
        let s = spectrum(&m).unwrap();
        assert!(s[0].abs() < 1e-12 && (s[1] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn basis_is_orthonormal_and_orthogonal_to_ones() {
        for n in [2, 3, 7] {
            let q = complement_basis(n);
            assert!((q.tr_mul(&q) - DMatrix::identity(n - 1, n - 1)).amax() < 1e-12);
            assert!((q.transpose() * DVector::from_element(n, 1.0)).amax() < 1e-12);
        }
    }

    #[test]
    fn two_cliques_separate() {
        let h = 0.5;
        let mut w = DMatrix::zeros(6, 6);
        for block in [0, 3] {
            for i in block..block + 3 {
                for j in block..block + 3 {
                    if i != j {
                        w[(i, j)] = h;
                    }
                }
            }
        }
        let g = WeightGraph::from_matrix(w).unwrap();
        let e = spectral_embed(&embedding_cost_matrix(&g), 1).unwrap();
        let x = e.coords.column(0);
        assert!(e.cost.abs() < 1e-10);
        assert!(x[0] > 0.0 && x[1] > 0.0 && x[2] > 0.0);
        assert!(x[3] < 0.0 && x[4] < 0.0 && x[5] < 0.0);
        assert!(spectral_embed(&embedding_cost_matrix(&g), 6).is_err());
    }
}
