//! Row solvers for `min w^T L w  s.t.  sum(w) = 1`, where
//! `L = lambda I + B B^T` plus the trace-relative conditioning shift.
//!
//! Every solver is registered by name; [`row_solver`] resolves one at runtime.

use std::fmt::Debug;

use nalgebra::{DMatrix, DVector};

use super::{condition_system, conditioning_shift};
use crate::error::{Error, Result};

/// The regularized local least-squares problem of one instance.
///
/// Row `a` of `factor` stacks the `sqrt(alpha)`-scaled feature differences and
/// `sqrt(beta)`-scaled label differences between the instance and its `a`-th
/// neighbor, so `factor * factor^T` is the weighted sum of local covariances.
#[derive(Debug, Clone)]
pub struct RowSystem {
    pub factor: DMatrix<f64>,
    pub lambda: f64,
    pub xi: f64,
}

impl RowSystem {
    pub fn m(&self) -> usize {
        self.factor.nrows()
    }

    /// Explicit `L = B B^T + lambda I`, before conditioning.
    pub fn dense(&self) -> DMatrix<f64> {
        let m = self.m();
        let mut l = &self.factor * self.factor.transpose();
        for a in 0..m {
            l[(a, a)] += self.lambda;
        }
        l
    }

    fn trace(&self) -> f64 {
        self.lambda * self.m() as f64 + self.factor.norm_squared()
    }
}

pub trait RowSolver: Debug + Send + Sync {
    fn name(&self) -> &'static str;

    /// Weights over the neighbor set, summing to one.
    fn solve(&self, system: &RowSystem) -> Result<DVector<f64>>;
}

/// Forms the m × m system and factors it with Cholesky.
#[derive(Debug, Default, Clone, Copy)]
pub struct DenseCholesky;

/// Applies the matrix-inversion identity to `s I + B B^T`, factoring only the
/// r × r core. Falls back to the dense path when `r >= m`.
#[derive(Debug, Default, Clone, Copy)]
pub struct LowRankWoodbury;

impl RowSolver for DenseCholesky {
    fn name(&self) -> &'static str {
        "dense"
    }

    fn solve(&self, system: &RowSystem) -> Result<DVector<f64>> {
        let m = system.m();
        let l = condition_system(&system.dense(), system.xi, m);
        let chol = l
            .cholesky()
            .ok_or_else(|| Error::Singular("local system is not positive definite".into()))?;
        let x = chol.solve(&DVector::from_element(m, 1.0));
        normalize(x)
    }
}

impl RowSolver for LowRankWoodbury {
    fn name(&self) -> &'static str {
        "lowrank"
    }

    fn solve(&self, system: &RowSystem) -> Result<DVector<f64>> {
        let m = system.m();
        let r = system.factor.ncols();
        if r >= m {
            return DenseCholesky.solve(system);
        }
        let s = system.lambda + conditioning_shift(system.trace(), system.xi, m);
        let ones = DVector::from_element(m, 1.0);
        if r == 0 {
            return normalize(ones / s);
        }
        let b = &system.factor;
        let mut core = b.transpose() * b;
        for a in 0..r {
            core[(a, a)] += s;
        }
        let chol = core
            .cholesky()
            .ok_or_else(|| Error::Singular("low-rank core is not positive definite".into()))?;
        let u = chol.solve(&(b.transpose() * &ones));
        let x = (ones - b * u) / s;
        normalize(x)
    }
}

fn normalize(x: DVector<f64>) -> Result<DVector<f64>> {
    let total = x.sum();
    if !total.is_finite() || total.abs() <= f64::MIN_POSITIVE || x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular(format!(
            "weights cannot be rescaled to sum to one (sum = {total})"
        )));
    }
    Ok(x / total)
}

pub const SOLVER_NAMES: [&str; 2] = ["lowrank", "dense"];

pub fn row_solver(name: &str) -> Result<Box<dyn RowSolver>> {
    match name {
        "lowrank" => Ok(Box::new(LowRankWoodbury)),
        "dense" => Ok(Box::new(DenseCholesky)),
        other => Err(Error::Config(format!(
            "unknown row solver {other:?} (available: {})",
            SOLVER_NAMES.join(", ")
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn system(m: usize, r: usize, seed: u64) -> RowSystem {
        // small deterministic LCG, enough for a fixture
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        RowSystem {
            factor: DMatrix::from_fn(m, r, |_, _| next()),
            lambda: 0.3,
            xi: 1e-3,
        }
    }

    #[test]
    fn isotropic_system_is_uniform() {
        let sys = RowSystem {
            factor: DMatrix::zeros(4, 0),
            lambda: 2.0,
            xi: 1e-4,
        };
        for solver in [&DenseCholesky as &dyn RowSolver, &LowRankWoodbury] {
            let w = solver.solve(&sys).unwrap();
            assert!(w.iter().all(|x| (x - 0.25).abs() < 1e-14));
        }
    }

    #[test]
    fn mirror_neighbors_split_evenly() {
        let sys = RowSystem {
            factor: DMatrix::from_row_slice(2, 1, &[1.0, -1.0]),
            lambda: 0.7,
            xi: 0.0,
        };
        let w = LowRankWoodbury.solve(&sys).unwrap();
        assert!((w[0] - 0.5).abs() < 1e-14 && (w[1] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn woodbury_matches_dense() {
        for seed in 0..20 {
            let sys = system(12, 3, seed);
            let a = DenseCholesky.solve(&sys).unwrap();
            let b = LowRankWoodbury.solve(&sys).unwrap();
            assert!((a - b).amax() < 1e-10);
        }
    }

    #[test]
    fn registry_resolves_names() {
        for name in SOLVER_NAMES {
            assert_eq!(row_solver(name).unwrap().name(), name);
        }
        assert!(row_solver("qr").is_err());
    }
}
