//! Least-squares loss `F(w) = (1/2m) ||Xw - y||^2`, its gradients and the
//! exact optimum used to report `F(w) - F*`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::datagen::{dot, Dataset, Shard};
use crate::{Error, Result};

/// Iterate of a run: weights plus the iteration count and simulated time
/// at which they were produced.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub weights: Vec<f64>,
    pub iteration: u64,
    pub wall_clock: f64,
}

impl ModelState {
    pub fn zeros(d: usize) -> Self {
        Self {
            weights: vec![0.0; d],
            iteration: 0,
            wall_clock: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optimum {
    pub weights_star: Vec<f64>,
    pub loss_star: f64,
}

/// A convex loss that can drive the simulator.
pub trait Loss {
    fn loss(&self, dataset: &Dataset, weights: &[f64]) -> Result<f64>;
    fn full_gradient(&self, dataset: &Dataset, weights: &[f64]) -> Result<Vec<f64>>;
    fn partial_gradient(&self, dataset: &Dataset, shard: &Shard, weights: &[f64]) -> Result<Vec<f64>>;
    fn solve_optimum(&self, dataset: &Dataset) -> Result<Optimum>;
}

/// Linear regression with the halved mean squared residual.
#[derive(Debug, Clone, Copy, Default)]
pub struct LeastSquares;

impl Loss for LeastSquares {
    fn loss(&self, dataset: &Dataset, weights: &[f64]) -> Result<f64> {
        check_dim(dataset, weights)?;
        let sum: f64 = (0..dataset.rows())
            .map(|i| {
                let r = dot(dataset.row(i), weights) - dataset.label(i);
                r * r
            })
            .sum();
        Ok(sum / (2.0 * dataset.rows() as f64))
    }

    fn full_gradient(&self, dataset: &Dataset, weights: &[f64]) -> Result<Vec<f64>> {
        check_dim(dataset, weights)?;
        let mut out = vec![0.0; dataset.cols()];
        accumulate_gradient(dataset, 0..dataset.rows(), weights, &mut out);
        Ok(out)
    }

    fn partial_gradient(&self, dataset: &Dataset, shard: &Shard, weights: &[f64]) -> Result<Vec<f64>> {
        check_dim(dataset, weights)?;
        check_shard(dataset, shard)?;
        let mut out = vec![0.0; dataset.cols()];
        accumulate_gradient(dataset, shard.row_indices.iter().copied(), weights, &mut out);
        Ok(out)
    }

    fn solve_optimum(&self, dataset: &Dataset) -> Result<Optimum> {
        let (m, d) = (dataset.rows(), dataset.cols());
        if m < d {
            return Err(Error::RankDeficient { rank: m, d });
        }
        let x = DMatrix::from_row_slice(m, d, dataset.features());
        let y = DVector::from_column_slice(dataset.labels());
        let qr = x.clone().qr();
        let r = qr.r();
        let diag_max = r.diagonal().iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        let tol = diag_max * (m.max(d) as f64) * f64::EPSILON;
        let rank = r.diagonal().iter().filter(|v| v.abs() > tol).count();
        if rank < d {
            return Err(Error::RankDeficient { rank, d });
        }
        let q = qr.q();
        let solve = |rhs: &DVector<f64>| -> Result<DVector<f64>> {
            r.solve_upper_triangular(&(q.transpose() * rhs))
                .ok_or(Error::RankDeficient { rank, d })
        };
        let mut w = solve(&y)?;
        // one round of iterative refinement
        let resid = &y - &x * &w;
        w += solve(&resid)?;
        let weights_star: Vec<f64> = w.iter().copied().collect();
        let loss_star = self.loss(dataset, &weights_star)?;
        Ok(Optimum {
            weights_star,
            loss_star,
        })
    }
}

pub fn loss(dataset: &Dataset, weights: &[f64]) -> Result<f64> {
    LeastSquares.loss(dataset, weights)
}

pub fn full_gradient(dataset: &Dataset, weights: &[f64]) -> Result<Vec<f64>> {
    LeastSquares.full_gradient(dataset, weights)
}

pub fn partial_gradient(dataset: &Dataset, shard: &Shard, weights: &[f64]) -> Result<Vec<f64>> {
    LeastSquares.partial_gradient(dataset, shard, weights)
}

pub fn solve_optimum(dataset: &Dataset) -> Result<Optimum> {
    LeastSquares.solve_optimum(dataset)
}

/// Writes the mean of `(<x, w> - y) x` over `rows` into `out`.
pub(crate) fn accumulate_gradient(
    dataset: &Dataset,
    rows: impl ExactSizeIterator<Item = usize>,
    weights: &[f64],
    out: &mut [f64],
) {
    out.iter_mut().for_each(|g| *g = 0.0);
    let count = rows.len();
    for i in rows {
        let x = dataset.row(i);
        let r = dot(x, weights) - dataset.label(i);
        for (g, xi) in out.iter_mut().zip(x) {
            *g += r * xi;
        }
    }
    let scale = 1.0 / count as f64;
    out.iter_mut().for_each(|g| *g *= scale);
}

/// Evaluates `F(w) - F*` as the quadratic form `(1/2) (w - w*)^T H (w - w*)`
/// with the empirical Hessian `H = X^T X / m`. For least squares this equals
/// the loss difference but does not cancel two large numbers.
#[derive(Debug, Clone)]
pub struct Suboptimality {
    hessian: DMatrix<f64>,
    /// Row-major `L^T` for the Cholesky factor `H = L L^T`.
    factor_t: Vec<f64>,
    weights_star: Vec<f64>,
}

impl Suboptimality {
    pub fn new(dataset: &Dataset, optimum: &Optimum) -> Self {
        let d = dataset.cols();
        let x = DMatrix::from_row_slice(dataset.rows(), d, dataset.features());
        let hessian = x.transpose() * &x / dataset.rows() as f64;
        let factor_t = match hessian.clone().cholesky() {
            Some(ch) => {
                let l = ch.l();
                let mut out = vec![0.0; d * d];
                for i in 0..d {
                    for j in i..d {
                        out[i * d + j] = l[(j, i)];
                    }
                }
                out
            }
            // singular Hessians never reach here through solve_optimum; fall
            // back to an empty factor and the dense form
            None => Vec::new(),
        };
        Self {
            hessian,
            factor_t,
            weights_star: optimum.weights_star.clone(),
        }
    }

    pub fn hessian(&self) -> &DMatrix<f64> {
        &self.hessian
    }

    pub fn eval(&self, weights: &[f64]) -> f64 {
        let d = self.weights_star.len();
        let delta: Vec<f64> = weights.iter().zip(&self.weights_star).map(|(w, s)| w - s).collect();
        if self.factor_t.is_empty() {
            let v = DVector::from_column_slice(&delta);
            return 0.5 * v.dot(&(&self.hessian * &v));
        }
        let mut sum = 0.0;
        for i in 0..d {
            let row = &self.factor_t[i * d + i..(i + 1) * d];
            let y: f64 = row.iter().zip(&delta[i..]).map(|(a, b)| a * b).sum();
            sum += y * y;
        }
        0.5 * sum
    }
}

fn check_dim(dataset: &Dataset, weights: &[f64]) -> Result<()> {
    if weights.len() != dataset.cols() {
        return Err(Error::DimensionMismatch {
            expected: dataset.cols(),
            actual: weights.len(),
        });
    }
    Ok(())
}

fn check_shard(dataset: &Dataset, shard: &Shard) -> Result<()> {
    let foreign = shard.parent_rows != dataset.rows()
        || shard.is_empty()
        || shard.row_indices.iter().any(|&i| i >= dataset.rows());
    if foreign {
        return Err(Error::ForeignShard {
            worker_id: shard.worker_id,
        });
    }
    Ok(())
}
