//! ARX regressor construction.
//!
//! An ARX model predicts the current output of a signal pair from the last
//! `na` outputs, the current input and the last `nb` inputs. The model
//! coefficients are stacked into a single vector theta with the matching
//! regressor layout `[y(k-1)..y(k-na), u(k), u(k-1)..u(k-nb)]`, so the
//! one-step prediction is the inner product `phi . theta`.

use std::collections::VecDeque;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Lag structure of an ARX model: `na` past outputs and `nb` past inputs.
///
/// The regressor additionally carries the current input, so its length is
/// `na + nb + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArxOrder {
    pub na: usize,
    pub nb: usize,
}

impl ArxOrder {
    pub fn new(na: usize, nb: usize) -> Self {
        ArxOrder { na, nb }
    }

    /// Regressor (and coefficient vector) length.
    pub fn dim(&self) -> usize {
        self.na + self.nb + 1
    }
}

/// One regressor vector, laid out as `[y(k-1)..y(k-na), u(k), u(k-1)..u(k-nb)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Regressor {
    phi: DVector<f64>,
}

impl Regressor {
    /// Wraps a raw vector, rejecting non-finite entries.
    pub fn new(phi: DVector<f64>) -> Result<Self> {
        if phi.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::NonFinite {
                what: "regressor entry",
            });
        }
        Ok(Regressor { phi })
    }

    /// Builds a regressor from explicit lag slices.
    ///
    /// `y_lags` must hold `[y(k-1), .., y(k-na)]` and `u_lags`
    /// `[u(k-1), .., u(k-nb)]`.
    pub fn from_lags(order: ArxOrder, y_lags: &[f64], u_now: f64, u_lags: &[f64]) -> Result<Self> {
        if y_lags.len() != order.na || u_lags.len() != order.nb {
            return Err(CoreError::DimensionMismatch {
                expected: order.dim(),
                got: y_lags.len() + u_lags.len() + 1,
            });
        }
        let mut phi = Vec::with_capacity(order.dim());
        phi.extend_from_slice(y_lags);
        phi.push(u_now);
        phi.extend_from_slice(u_lags);
        Regressor::new(DVector::from_vec(phi))
    }

    pub fn len(&self) -> usize {
        self.phi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phi.is_empty()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.phi
    }
}

/// Ring buffers of recent samples from which regressors are built.
///
/// The window is primed with the first `order.dim()` measured samples before
/// it yields any regressor; priming with real data avoids the startup
/// transient a zero-filled history would inject into the estimate.
#[derive(Debug, Clone)]
pub struct RegressorWindow {
    order: ArxOrder,
    /// Most recent output first: `y(k-1), y(k-2), ..`.
    y_hist: VecDeque<f64>,
    /// Most recent input first: `u(k-1), u(k-2), ..`.
    u_hist: VecDeque<f64>,
    seen: usize,
}

impl RegressorWindow {
    pub fn new(order: ArxOrder) -> Self {
        RegressorWindow {
            order,
            y_hist: VecDeque::with_capacity(order.na + 1),
            u_hist: VecDeque::with_capacity(order.nb + 1),
            seen: 0,
        }
    }

    pub fn order(&self) -> ArxOrder {
        self.order
    }

    /// True once enough samples have been absorbed to form a regressor.
    pub fn is_primed(&self) -> bool {
        self.seen >= self.order.dim()
    }

    /// Number of samples consumed so far (priming included).
    pub fn samples_seen(&self) -> usize {
        self.seen
    }

    /// Absorbs one (input, output) sample into the history.
    pub fn push(&mut self, u: f64, y: f64) {
        self.y_hist.push_front(y);
        self.y_hist.truncate(self.order.na);
        self.u_hist.push_front(u);
        self.u_hist.truncate(self.order.nb);
        self.seen += 1;
    }

    /// Regressor for the current step given the new input `u(k)`, or `None`
    /// while still priming. Call before `push`ing the current sample.
    pub fn regressor(&self, u_now: f64) -> Option<Regressor> {
        if !self.is_primed() {
            return None;
        }
        let mut phi = Vec::with_capacity(self.order.dim());
        phi.extend(self.y_hist.iter().copied());
        phi.push(u_now);
        phi.extend(self.u_hist.iter().copied());
        // History lengths are maintained by push; entries were validated upstream.
        Some(Regressor {
            phi: DVector::from_vec(phi),
        })
    }

    pub fn clear(&mut self) {
        self.y_hist.clear();
        self.u_hist.clear();
        self.seen = 0;
    }
}
