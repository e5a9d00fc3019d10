use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{Dataset, Neighborhood};

/// Concatenates the views after standardizing every feature column to zero
/// mean and unit (population) variance. Constant columns are only centered.
pub fn standardized_features(ds: &Dataset) -> DMatrix<f64> {
    let n = ds.n();
    let width: usize = ds.views().iter().map(|v| v.ncols()).sum();
    let mut out = DMatrix::zeros(n, width);
    let mut col = 0;
    for view in ds.views() {
        for c in view.column_iter() {
            let mean = c.mean();
            let var = c.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
            let scale = if var > 0.0 { var.sqrt() } else { 1.0 };
            for i in 0..n {
                out[(i, col)] = (c[i] - mean) / scale;
            }
            col += 1;
        }
    }
    out
}

/// Indices instance `i` may be reconstructed from. Never contains `i`.
pub fn neighbor_set(ds: &Dataset, i: usize, neighborhood: Neighborhood) -> Result<Vec<usize>> {
    if i >= ds.n() {
        return Err(Error::Invalid(format!("instance {i} out of range 0..{}", ds.n())));
    }
    match neighborhood {
        Neighborhood::Full => Ok((0..ds.n()).filter(|&j| j != i).collect()),
        Neighborhood::Nearest(k) => {
            check_k(k, ds.n())?;
            Ok(nearest(&standardized_features(ds), i, k))
        }
    }
}

/// Neighbor sets for every instance; standardization is computed once.
pub fn neighbor_sets(ds: &Dataset, neighborhood: Neighborhood) -> Result<Vec<Vec<usize>>> {
    let n = ds.n();
    match neighborhood {
        Neighborhood::Full => Ok((0..n)
            .map(|i| (0..n).filter(|&j| j != i).collect())
            .collect()),
        Neighborhood::Nearest(k) => {
            check_k(k, n)?;
            let z = standardized_features(ds);
            Ok((0..n).map(|i| nearest(&z, i, k)).collect())
        }
    }
}

fn check_k(k: usize, n: usize) -> Result<()> {
    if k == 0 || k >= n {
        return Err(Error::Config(format!(
            "neighborhood size {k} must lie in 1..{n}"
        )));
    }
    Ok(())
}

// Ties go to the lower index: the sort is stable over ascending j.
fn nearest(z: &DMatrix<f64>, i: usize, k: usize) -> Vec<usize> {
    let mut dist: Vec<(f64, usize)> = (0..z.nrows())
        .filter(|&j| j != i)
        .map(|j| ((z.row(i) - z.row(j)).norm_squared(), j))
        .collect();
    dist.sort_by(|a, b| a.0.total_cmp(&b.0));
    dist.truncate(k);
    dist.into_iter().map(|(_, j)| j).collect()
}
