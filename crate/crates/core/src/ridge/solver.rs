//! Closed-form ridge regression over a whole penalty grid.
//!
//! Targets and features are centred on the training rows, so the intercept is
//! unpenalized and equals the training mean of each response. One spectral
//! decomposition serves every penalty:
//!
//! * `p <= n`: thin SVD of the centred design `X = U S Vᵀ`, predictions
//!   `X_eval V diag(1 / (s² + α)) diag(s) Uᵀ Y`;
//! * `p > n`: eigendecomposition of the Gram matrix `X Xᵀ = Q Λ Qᵀ`,
//!   predictions `X_eval Xᵀ Q diag(1 / (λ + α)) Qᵀ Y`.
//!
//! Both collapse to `A diag(1 / (λ + α)) B`. Directions with numerically zero
//! spectrum are dropped, which makes `α = 0` the minimum-norm least-squares
//! solution.

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, MatRef, Par, Side};
use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

fn product(lhs: MatRef<'_, f64>, rhs: MatRef<'_, f64>) -> Mat<f64> {
    let mut out = Mat::zeros(lhs.nrows(), rhs.ncols());
    matmul(out.as_mut(), Accum::Replace, lhs, rhs, 1.0, Par::Seq);
    out
}

/// `lhs * rhsᵀ`.
pub(crate) fn gram(lhs: &Mat<f64>, rhs: &Mat<f64>) -> Mat<f64> {
    product(lhs.as_ref(), rhs.as_ref().transpose())
}

fn check_finite(what: &str, m: &Array2<f64>) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Data(format!("{what} contains non-finite values")))
    }
}

fn check_alphas(alphas: &[f64]) -> Result<()> {
    match alphas.iter().find(|a| !(a.is_finite() && **a >= 0.0)) {
        Some(bad) => Err(Error::InvalidArgument(format!("invalid ridge penalty {bad}"))),
        None => Ok(()),
    }
}

/// Subtracts `means` from every row.
pub(crate) fn center(m: &Array2<f64>, means: &Array1<f64>) -> Mat<f64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[[i, j]] - means[j])
}

/// Column means summed in row order, whatever the memory layout.
pub(crate) fn column_means(m: &Array2<f64>) -> Array1<f64> {
    let n = m.nrows() as f64;
    m.columns().into_iter().map(|c| c.iter().sum::<f64>() / n).collect()
}

/// A ridge problem decomposed once, ready to predict for any penalty.
#[derive(Debug, Clone)]
pub struct SpectralRidge {
    /// n_eval × rank
    a: Mat<f64>,
    /// rank × units
    b: Mat<f64>,
    spectrum: Vec<f64>,
    y_mean: Array1<f64>,
}

impl SpectralRidge {
    /// Centres the training design and targets, then decomposes whichever of
    /// `Xᵀ X` / `X Xᵀ` is smaller.
    pub fn from_design(
        x_train: &Array2<f64>,
        y_train: &Array2<f64>,
        x_eval: &Array2<f64>,
    ) -> Result<Self> {
        let n = x_train.nrows();
        if n < 2 {
            return Err(Error::InvalidArgument(format!(
                "ridge needs at least 2 training rows, got {n}"
            )));
        }
        if y_train.nrows() != n {
            return Err(Error::RowMismatch {
                what: "training targets".into(),
                expected: n,
                found: y_train.nrows(),
            });
        }
        if x_eval.ncols() != x_train.ncols() {
            return Err(Error::ShapeMismatch(format!(
                "evaluation design has {} columns, training design {}",
                x_eval.ncols(),
                x_train.ncols()
            )));
        }
        check_finite("training design", x_train)?;
        check_finite("training targets", y_train)?;
        check_finite("evaluation design", x_eval)?;

        let x_means = column_means(x_train);
        let xc = center(x_train, &x_means);
        let xe = center(x_eval, &x_means);
        if x_train.ncols() <= n {
            Self::primal(&xc, y_train, &xe)
        } else {
            Self::from_kernels(&gram(&xc, &xc), &gram(&xe, &xc), y_train)
        }
    }

    fn primal(xc: &Mat<f64>, y_train: &Array2<f64>, xe: &Mat<f64>) -> Result<Self> {
        let y_mean = column_means(y_train);
        let yc = center(y_train, &y_mean);
        let svd = xc
            .thin_svd()
            .map_err(|e| Error::LinAlg(format!("svd did not converge: {e:?}")))?;
        let s = svd.S().column_vector();
        let s_max = (0..s.nrows()).map(|i| s[i]).fold(0.0, f64::max);
        let tol = s_max * xc.nrows().max(xc.ncols()) as f64 * f64::EPSILON;
        let keep: Vec<usize> = (0..s.nrows()).filter(|&i| s[i] > tol).collect();
        let u = svd.U();
        let v = svd.V();
        let v_kept = Mat::from_fn(v.nrows(), keep.len(), |i, k| v[(i, keep[k])]);
        let a = product(xe.as_ref(), v_kept.as_ref());
        let ut_y = product(u.transpose(), yc.as_ref());
        let b = Mat::from_fn(keep.len(), yc.ncols(), |k, j| s[keep[k]] * ut_y[(keep[k], j)]);
        Ok(Self {
            a,
            b,
            spectrum: keep.iter().map(|&i| s[i] * s[i]).collect(),
            y_mean,
        })
    }

    /// Dual form from a centred training Gram matrix `k_train` (n × n) and the
    /// cross Gram `k_eval` (n_eval × n) between centred evaluation and
    /// training rows.
    pub(crate) fn from_kernels(
        k_train: &Mat<f64>,
        k_eval: &Mat<f64>,
        y_train: &Array2<f64>,
    ) -> Result<Self> {
        let y_mean = column_means(y_train);
        let yc = center(y_train, &y_mean);
        let eig = k_train
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| Error::LinAlg(format!("eigendecomposition did not converge: {e:?}")))?;
        let lambda = eig.S().column_vector();
        let n = lambda.nrows();
        let l_max = (0..n).map(|i| lambda[i]).fold(0.0, f64::max);
        let tol = l_max * n as f64 * f64::EPSILON;
        let keep: Vec<usize> = (0..n).filter(|&i| lambda[i] > tol).collect();
        let q = eig.U();
        let q_kept = Mat::from_fn(q.nrows(), keep.len(), |i, k| q[(i, keep[k])]);
        let a = product(k_eval.as_ref(), q_kept.as_ref());
        let b = product(q_kept.as_ref().transpose(), yc.as_ref());
        Ok(Self {
            a,
            b,
            spectrum: keep.iter().map(|&i| lambda[i]).collect(),
            y_mean,
        })
    }

    pub fn rank(&self) -> usize {
        self.spectrum.len()
    }

    pub fn n_eval(&self) -> usize {
        self.a.nrows()
    }

    /// Evaluation-set predictions for one penalty, intercept included.
    pub fn predict(&self, alpha: f64) -> Array2<f64> {
        let scaled = Mat::from_fn(self.a.nrows(), self.a.ncols(), |i, k| {
            self.a[(i, k)] / (self.spectrum[k] + alpha)
        });
        let centred = product(scaled.as_ref(), self.b.as_ref());
        Array2::from_shape_fn((centred.nrows(), centred.ncols()), |(i, j)| {
            centred[(i, j)] + self.y_mean[j]
        })
    }
}

/// Ridge predictions on `x_eval` for every penalty in `alphas`, all response
/// columns at once.
pub fn ridge_solve(
    x_train: &Array2<f64>,
    y_train: &Array2<f64>,
    x_eval: &Array2<f64>,
    alphas: &[f64],
) -> Result<Vec<Array2<f64>>> {
    check_alphas(alphas)?;
    let solver = SpectralRidge::from_design(x_train, y_train, x_eval)?;
    Ok(alphas.iter().map(|&alpha| solver.predict(alpha)).collect())
}

/// Fitted coefficients (`p × units`) and intercepts for every penalty.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeWeights {
    pub alpha: f64,
    pub coefficients: Array2<f64>,
    pub intercept: Array1<f64>,
}

pub fn ridge_weights(
    x_train: &Array2<f64>,
    y_train: &Array2<f64>,
    alphas: &[f64],
) -> Result<Vec<RidgeWeights>> {
    check_alphas(alphas)?;
    if x_train.nrows() != y_train.nrows() || x_train.nrows() < 2 {
        return Err(Error::ShapeMismatch(format!(
            "design has {} rows, targets {}",
            x_train.nrows(),
            y_train.nrows()
        )));
    }
    check_finite("training design", x_train)?;
    check_finite("training targets", y_train)?;
    let x_means = column_means(x_train);
    let y_means = column_means(y_train);
    let xc = center(x_train, &x_means);
    let yc = center(y_train, &y_means);
    let svd = xc
        .thin_svd()
        .map_err(|e| Error::LinAlg(format!("svd did not converge: {e:?}")))?;
    let s = svd.S().column_vector();
    let s_max = (0..s.nrows()).map(|i| s[i]).fold(0.0, f64::max);
    let tol = s_max * xc.nrows().max(xc.ncols()) as f64 * f64::EPSILON;
    let ut_y = product(svd.U().transpose(), yc.as_ref());
    let v = svd.V();
    Ok(alphas
        .iter()
        .map(|&alpha| {
            let shrunk = Mat::from_fn(s.nrows(), yc.ncols(), |k, j| {
                if s[k] > tol {
                    s[k] / (s[k] * s[k] + alpha) * ut_y[(k, j)]
                } else {
                    0.0
                }
            });
            let w = product(v, shrunk.as_ref());
            let coefficients = Array2::from_shape_fn((w.nrows(), w.ncols()), |(i, j)| w[(i, j)]);
            let intercept = &y_means - &x_means.dot(&coefficients);
            RidgeWeights {
                alpha,
                coefficients,
                intercept,
            }
        })
        .collect())
}
