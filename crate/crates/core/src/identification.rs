//! Online identification of the pseudo-gradient: a projection-type estimator
//! for the current PG vector and an autoregressive forecaster for the PG
//! values over the prediction horizon.

use std::collections::VecDeque;

use nalgebra::DVector;

use crate::error::{check_finite, check_len, MfapcError, Result};
use crate::model::{ControllerConfig, PgVector, ResetPolicy};

/// Projection estimator
/// `phi(k) = phi(k-1) + eta * dH(k-1) * (dy(k) - phi(k-1)^T dH(k-1)) / (mu + |dH(k-1)|^2)`.
#[derive(Debug, Clone)]
pub struct PgEstimator {
    phi_hat: PgVector,
    phi_init: PgVector,
    mu: f64,
    eta: f64,
    reset: ResetPolicy,
}

impl PgEstimator {
    pub fn new(phi_init: PgVector, mu: f64, eta: f64, reset: ResetPolicy) -> Result<Self> {
        if !(mu > 0.0) {
            return Err(MfapcError::InvalidConfig(format!("mu must be positive, got {mu}")));
        }
        if !(eta > 0.0 && eta <= 2.0) {
            return Err(MfapcError::InvalidConfig(format!(
                "eta must lie in (0, 2], got {eta}"
            )));
        }
        check_finite("initial PG vector", phi_init.as_slice())?;
        Ok(Self {
            phi_hat: phi_init.clone(),
            phi_init,
            mu,
            eta,
            reset,
        })
    }

    pub fn from_config(cfg: &ControllerConfig) -> Result<Self> {
        Self::new(cfg.phi_init.clone(), cfg.mu, cfg.eta, cfg.reset.clone())
    }

    pub fn current(&self) -> &PgVector {
        &self.phi_hat
    }

    /// Folds in one measurement: `dh_prev = dH(k-1)` and `dy = dy(k)`.
    pub fn estimate(&mut self, dh_prev: &[f64], dy: f64) -> Result<&PgVector> {
        check_len("estimator regressor", self.phi_hat.len(), dh_prev.len())?;
        check_finite("estimator regressor", dh_prev)?;
        check_finite("output increment", &[dy])?;

        let regressor = DVector::from_column_slice(dh_prev);
        let energy = regressor.norm_squared();
        let innovation = dy - self.phi_hat.as_vector().dot(&regressor);
        let gain = self.eta * innovation / (self.mu + energy);
        let updated = self.phi_hat.as_vector() + regressor * gain;
        self.phi_hat = PgVector::from_vector(updated, self.phi_hat.ly());

        if self.reset.enabled && self.should_reset(energy.sqrt()) {
            self.phi_hat = self.phi_init.clone();
        }
        if !self.phi_hat.is_finite() {
            return Err(MfapcError::NonFinite("PG estimate"));
        }
        Ok(&self.phi_hat)
    }

    fn should_reset(&self, regressor_norm: f64) -> bool {
        regressor_norm <= self.reset.epsilon
            || self.phi_hat.norm() >= self.reset.norm_bound
            || self.phi_hat.input_gain().signum() != self.phi_init.input_gain().signum()
    }
}

/// Forecasts `phi(k+1), ..., phi(k+N-1)` as a linear combination of the last
/// `n_p` estimates with scalar coefficients `theta` shared by all components.
///
/// `theta` is adapted by a normalized projection step each time a new
/// estimate arrives and falls back to persistence (`[1, 0, ..]`) when its
/// norm exceeds `theta_max`.
#[derive(Debug, Clone)]
pub struct PgForecaster {
    theta: Vec<f64>,
    theta_init: Vec<f64>,
    // newest first
    history: VecDeque<PgVector>,
    delta: f64,
    theta_max: f64,
}

impl PgForecaster {
    pub fn new(order: usize, delta: f64, theta_max: f64) -> Result<Self> {
        if order == 0 {
            return Err(MfapcError::InvalidConfig("forecaster order must be >= 1".into()));
        }
        if !(delta > 0.0) || !(theta_max > 0.0) {
            return Err(MfapcError::InvalidConfig(
                "forecaster delta and theta_max must be positive".into(),
            ));
        }
        let mut theta_init = vec![0.0; order];
        theta_init[0] = 1.0;
        Ok(Self {
            theta: theta_init.clone(),
            theta_init,
            history: VecDeque::with_capacity(order + 1),
            delta,
            theta_max,
        })
    }

    pub fn from_config(cfg: &ControllerConfig) -> Result<Self> {
        Self::new(cfg.ar_order, cfg.ar_delta, cfg.theta_max)
    }

    /// Replaces the AR coefficients; used to pin a forecaster in tests and experiments.
    pub fn with_theta(mut self, theta: Vec<f64>) -> Result<Self> {
        check_len("forecaster coefficients", self.theta.len(), theta.len())?;
        self.theta = theta;
        Ok(self)
    }

    /// Seeds the past estimates, newest first, without adapting `theta`.
    pub fn with_history(mut self, newest_first: Vec<PgVector>) -> Self {
        self.history = newest_first.into_iter().take(self.order()).collect();
        self
    }

    pub fn order(&self) -> usize {
        self.theta.len()
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn latest(&self) -> Option<&PgVector> {
        self.history.front()
    }

    /// Adapts `theta` against the new estimate, then enqueues it.
    pub fn update(&mut self, phi_new: &PgVector) -> Result<()> {
        if let Some(front) = self.history.front() {
            phi_new.check_shape(front.ly(), front.lu(), "forecaster estimate")?;
            let target = phi_new.as_vector();
            let mut fitted = DVector::zeros(target.len());
            let mut frobenius = 0.0;
            for (past, t) in self.history.iter().zip(&self.theta) {
                fitted += past.as_vector() * *t;
                frobenius += past.as_vector().norm_squared();
            }
            let residual = target - fitted;
            let denom = self.delta + frobenius;
            for (past, t) in self.history.iter().zip(self.theta.iter_mut()) {
                *t += past.as_vector().dot(&residual) / denom;
            }
            let norm = self.theta.iter().map(|t| t * t).sum::<f64>().sqrt();
            if !norm.is_finite() || norm > self.theta_max {
                self.theta.clone_from(&self.theta_init);
            }
        }
        self.history.push_front(phi_new.clone());
        self.history.truncate(self.order());
        Ok(())
    }

    /// Returns `horizon` forecasts `phi(k+1), ..., phi(k+horizon)` where `phi(k)`
    /// is the newest enqueued estimate. Earlier forecasts feed later ones.
    pub fn forecast(&self, horizon: usize) -> Result<Vec<PgVector>> {
        if horizon == 0 {
            return Ok(Vec::new());
        }
        let newest = self
            .history
            .front()
            .ok_or_else(|| MfapcError::InvalidConfig("forecast requested before any estimate".into()))?;
        let ly = newest.ly();
        let dim = newest.len();

        // window[0] is the most recent value (estimate or forecast)
        let mut window: VecDeque<DVector<f64>> =
            self.history.iter().map(|p| p.as_vector().clone()).collect();
        let mut out = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            let mut next = DVector::zeros(dim);
            for (past, t) in window.iter().zip(&self.theta) {
                next += past * *t;
            }
            window.push_front(next.clone());
            window.truncate(self.order());
            out.push(PgVector::from_vector(next, ly));
        }
        Ok(out)
    }

    /// `[phi(k), phi(k+1), ..., phi(k+n-1)]`: the current estimate followed by `n - 1` forecasts.
    pub fn horizon_sequence(&self, n: usize) -> Result<Vec<PgVector>> {
        let current = self
            .latest()
            .ok_or_else(|| MfapcError::InvalidConfig("forecast requested before any estimate".into()))?
            .clone();
        let mut seq = vec![current];
        seq.extend(self.forecast(n.saturating_sub(1))?);
        Ok(seq)
    }
}
