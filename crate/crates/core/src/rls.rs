//! Recursive Least Squares estimation of ARX coefficients.
//!
//! Each update folds one (regressor, output) observation into the running
//! estimate:
//!
//! ```text
//! e(k)     = y(k) - phi(k)' theta(k-1)                  prediction error
//! L(k)     = C(k-1) phi(k) / (lambda + phi(k)' C(k-1) phi(k))
//! theta(k) = theta(k-1) + L(k) e(k)
//! C(k)     = (C(k-1) - L(k) phi(k)' C(k-1)) / lambda
//! ```
//!
//! With the forgetting factor `lambda` left at 1 this is plain RLS. The
//! covariance is re-symmetrized after every update; the raw recursion drifts
//! asymmetric in floating point.

use nalgebra::{DMatrix, DVector};

use crate::arx::{ArxOrder, Regressor};
use crate::error::{CoreError, Result};

/// Default initial covariance scale: large diagonal, high initial uncertainty.
pub const DEFAULT_COV_SCALE: f64 = 1e6;
/// Default threshold on the update magnitude below which the model counts as
/// converging, in normalized signal units.
pub const DEFAULT_EPSILON: f64 = 1e-3;

/// Online least-squares estimator for one signal pair.
#[derive(Debug, Clone)]
pub struct RlsEstimator {
    order: ArxOrder,
    theta: DVector<f64>,
    cov: DMatrix<f64>,
    step: u64,
    last_update_norm: f64,
    /// Forgetting factor lambda in (0, 1]; 1 weights all samples equally.
    forgetting: f64,
    /// Stability threshold on the infinity norm of `L(k) e(k)`.
    epsilon: f64,
    /// Consecutive updates whose magnitude stayed below `epsilon`.
    stable_run: u64,
}

impl RlsEstimator {
    /// Zero coefficients and a scaled identity covariance.
    pub fn new(order: ArxOrder, cov_scale: f64) -> Result<Self> {
        Self::with_options(order, cov_scale, DEFAULT_EPSILON, 1.0)
    }

    pub fn with_options(
        order: ArxOrder,
        cov_scale: f64,
        epsilon: f64,
        forgetting: f64,
    ) -> Result<Self> {
        if !cov_scale.is_finite() || cov_scale <= 0.0 {
            return Err(CoreError::Config(format!(
                "covariance scale must be a positive finite number, got {cov_scale}"
            )));
        }
        if !epsilon.is_finite() || epsilon <= 0.0 {
            return Err(CoreError::Config(format!(
                "stability epsilon must be a positive finite number, got {epsilon}"
            )));
        }
        if !forgetting.is_finite() || forgetting <= 0.0 || forgetting > 1.0 {
            return Err(CoreError::Config(format!(
                "forgetting factor must be in (0, 1], got {forgetting}"
            )));
        }
        let dim = order.dim();
        Ok(RlsEstimator {
            order,
            theta: DVector::zeros(dim),
            cov: DMatrix::identity(dim, dim) * cov_scale,
            step: 0,
            last_update_norm: 0.0,
            forgetting,
            epsilon,
            stable_run: 0,
        })
    }

    pub fn order(&self) -> ArxOrder {
        self.order
    }

    pub fn theta(&self) -> &DVector<f64> {
        &self.theta
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Number of updates applied so far.
    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Infinity norm of the most recent coefficient update `L(k) e(k)`.
    pub fn last_update_norm(&self) -> f64 {
        self.last_update_norm
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// One-step output prediction `phi' theta`. Pure; no state change.
    pub fn predict(&self, phi: &Regressor) -> Result<f64> {
        if phi.len() != self.order.dim() {
            return Err(CoreError::DimensionMismatch {
                expected: self.order.dim(),
                got: phi.len(),
            });
        }
        Ok(phi.as_vector().dot(&self.theta))
    }

    /// Folds one observation into the estimate and returns the pre-update
    /// prediction error `y - phi' theta(k-1)`.
    ///
    /// The returned error is the quantity consumed downstream for detection;
    /// it is computed against the coefficients *before* this update.
    pub fn update(&mut self, phi: &Regressor, y: f64) -> Result<f64> {
        if !y.is_finite() {
            return Err(CoreError::NonFinite {
                what: "output sample",
            });
        }
        if phi.len() != self.order.dim() {
            return Err(CoreError::DimensionMismatch {
                expected: self.order.dim(),
                got: phi.len(),
            });
        }
        let phi = phi.as_vector();

        let error = y - phi.dot(&self.theta);

        // p = C phi, s = phi' C phi >= 0 since C stays positive semidefinite.
        let p = &self.cov * phi;
        let s = phi.dot(&p);
        let denom = self.forgetting + s;
        let gain = &p / denom;

        self.theta.axpy(error, &gain, 1.0);

        // Rank-1 downdate C - L (C phi)'; symmetry of C makes (C phi)' = phi' C.
        self.cov.ger(-1.0, &gain, &p, 1.0);
        if self.forgetting != 1.0 {
            self.cov /= self.forgetting;
        }
        self.symmetrize();

        self.last_update_norm = gain.amax() * error.abs();
        self.step += 1;
        if self.last_update_norm < self.epsilon {
            self.stable_run += 1;
        } else {
            self.stable_run = 0;
        }
        Ok(error)
    }

    /// True once the last `hold` consecutive updates all moved the
    /// coefficients by less than `epsilon` in infinity norm.
    pub fn is_stable(&self, hold: u64) -> bool {
        hold >= 1 && self.stable_run >= hold
    }

    /// Consecutive below-threshold updates observed so far.
    pub fn stable_run(&self) -> u64 {
        self.stable_run
    }

    fn symmetrize(&mut self) {
        let n = self.cov.nrows();
        for i in 0..n {
            for j in (i + 1)..n {
                let m = (self.cov[(i, j)] + self.cov[(j, i)]) * 0.5;
                self.cov[(i, j)] = m;
                self.cov[(j, i)] = m;
            }
        }
    }
}
