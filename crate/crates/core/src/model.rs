//! Shared domain types: the pseudo-gradient vector, the I/O history window,
//! controller configuration, closed-loop traces and the one-step
//! full-form dynamic linearization (FFDL) data model.

use std::collections::VecDeque;

use nalgebra::DVector;

use crate::error::{check_finite, check_len, MfapcError, Result};

/// Pseudo-gradient (PG) vector `[phi_y; phi_u]` of an FFDL data model.
///
/// The first `ly` entries weight past output increments, the remaining `lu`
/// entries weight input increments. `phi_u[0]` is the instantaneous input
/// gain used as the MFAC denominator term.
#[derive(Debug, Clone, PartialEq)]
pub struct PgVector {
    values: DVector<f64>,
    ly: usize,
}

impl PgVector {
    pub fn new(phi_y: &[f64], phi_u: &[f64]) -> Result<Self> {
        if phi_y.is_empty() || phi_u.is_empty() {
            return Err(MfapcError::InvalidConfig(
                "pseudo orders must satisfy ly >= 1 and lu >= 1".into(),
            ));
        }
        let values = DVector::from_iterator(
            phi_y.len() + phi_u.len(),
            phi_y.iter().chain(phi_u.iter()).copied(),
        );
        Ok(Self {
            values,
            ly: phi_y.len(),
        })
    }

    /// Builds a PG vector from a flat slice whose first `ly` entries are the output part.
    pub fn from_slice(values: &[f64], ly: usize) -> Result<Self> {
        if ly == 0 || ly >= values.len() {
            return Err(MfapcError::InvalidConfig(format!(
                "cannot split {} PG components with ly = {ly}",
                values.len()
            )));
        }
        Self::new(&values[..ly], &values[ly..])
    }

    pub fn zeros(ly: usize, lu: usize) -> Result<Self> {
        Self::new(&vec![0.0; ly], &vec![0.0; lu])
    }

    pub(crate) fn from_vector(values: DVector<f64>, ly: usize) -> Self {
        debug_assert!(ly >= 1 && ly < values.len());
        Self { values, ly }
    }

    pub fn ly(&self) -> usize {
        self.ly
    }

    pub fn lu(&self) -> usize {
        self.values.len() - self.ly
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn phi_y(&self) -> &[f64] {
        &self.values.as_slice()[..self.ly]
    }

    pub fn phi_u(&self) -> &[f64] {
        &self.values.as_slice()[self.ly..]
    }

    /// `phi_{ly+1}`, the sensitivity of the next output to the current input increment.
    pub fn input_gain(&self) -> f64 {
        self.values[self.ly]
    }

    pub fn as_slice(&self) -> &[f64] {
        self.values.as_slice()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        self.values.norm()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self::from_vector(&self.values * factor, self.ly)
    }

    pub(crate) fn check_shape(&self, ly: usize, lu: usize, context: &'static str) -> Result<()> {
        check_len(context, ly, self.ly())?;
        check_len(context, lu, self.lu())
    }
}

/// One step of the FFDL data model: `dy(k+1) = phi^T dH(k)`.
pub fn ffdl_step(phi: &PgVector, increments: &[f64]) -> Result<f64> {
    check_len("ffdl_step increments", phi.len(), increments.len())?;
    Ok(phi
        .as_slice()
        .iter()
        .zip(increments)
        .map(|(p, d)| p * d)
        .sum())
}

#[derive(Debug, Clone)]
struct Window {
    buf: VecDeque<f64>,
    depth: usize,
    pushed: usize,
}

impl Window {
    fn new(depth: usize) -> Self {
        Self {
            buf: VecDeque::with_capacity(depth + 1),
            depth,
            pushed: 0,
        }
    }

    fn push(&mut self, value: f64) {
        self.buf.push_front(value);
        if self.buf.len() > self.depth {
            self.buf.pop_back();
        }
        self.pushed += 1;
    }

    fn value(&self, lag: usize) -> f64 {
        if lag < self.buf.len() {
            self.buf[lag]
        } else if lag >= self.pushed {
            0.0
        } else {
            panic!(
                "history lag {lag} exceeds retained depth {} (capacity too small)",
                self.depth
            );
        }
    }

    fn delta(&self, lag: usize) -> f64 {
        self.value(lag) - self.value(lag + 1)
    }
}

/// Bounded record of recent plant outputs and control inputs.
///
/// Lag 0 is the newest sample. Anything older than the first push reads as
/// zero, so increments at start-up are measured against a zero pre-history.
#[derive(Debug, Clone)]
pub struct IoHistory {
    outputs: Window,
    inputs: Window,
    capacity: usize,
}

impl IoHistory {
    /// `capacity` is the largest increment lag (exclusive) that will be queried.
    pub fn new(capacity: usize) -> Self {
        let capacity = capacity.max(1);
        Self {
            outputs: Window::new(capacity + 1),
            inputs: Window::new(capacity + 1),
            capacity,
        }
    }

    /// History deep enough for the controller windows plus the estimator's one-step lag.
    pub fn for_orders(ly: usize, lu: usize) -> Self {
        Self::new(ly.max(lu) + 2)
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push_sample(&mut self, y: f64, u: f64) {
        self.push_output(y);
        self.push_input(u);
    }

    pub fn push_output(&mut self, y: f64) {
        self.outputs.push(y);
    }

    pub fn push_input(&mut self, u: f64) {
        self.inputs.push(u);
    }

    pub fn output(&self, lag: usize) -> f64 {
        self.outputs.value(lag)
    }

    pub fn input(&self, lag: usize) -> f64 {
        self.inputs.value(lag)
    }

    pub fn delta_output(&self, lag: usize) -> f64 {
        self.outputs.delta(lag)
    }

    pub fn delta_input(&self, lag: usize) -> f64 {
        self.inputs.delta(lag)
    }

    /// `[dy(t-lag), dy(t-lag-1), ..., dy(t-lag-len+1)]` where `t` is the newest output.
    pub fn delta_outputs(&self, len: usize, lag: usize) -> Vec<f64> {
        (lag..lag + len).map(|i| self.delta_output(i)).collect()
    }

    /// `[du(t-lag), ..., du(t-lag-len+1)]` where `t` is the newest input.
    pub fn delta_inputs(&self, len: usize, lag: usize) -> Vec<f64> {
        (lag..lag + len).map(|i| self.delta_input(i)).collect()
    }

    /// The stacked increment vector `dH = [dY_ly; dU_lu]` at the newest samples.
    pub fn regressor(&self, ly: usize, lu: usize) -> Vec<f64> {
        let mut dh = self.delta_outputs(ly, 0);
        dh.extend(self.delta_inputs(lu, 0));
        dh
    }
}

/// Optional safeguard that snaps the PG estimate back to its initial value.
#[derive(Debug, Clone, PartialEq)]
pub struct ResetPolicy {
    pub enabled: bool,
    /// Reset when the regressor norm falls to or below this value.
    pub epsilon: f64,
    /// Reset when the estimate norm reaches this bound.
    pub norm_bound: f64,
}

impl Default for ResetPolicy {
    fn default() -> Self {
        Self {
            enabled: false,
            epsilon: 1e-5,
            norm_bound: 1e4,
        }
    }
}

/// Tuning of an MFAPC/MFAC controller.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerConfig {
    /// Output pseudo order `L_y`.
    pub ly: usize,
    /// Input pseudo order `L_u`.
    pub lu: usize,
    /// Prediction horizon `N`.
    pub horizon: usize,
    /// Control horizon `N_u`.
    pub control_horizon: usize,
    /// Weight on control increment energy.
    pub lambda: f64,
    /// Step factors, `ly + lu` entries. Entry `ly` scales the tracking error,
    /// entries `ly+1..` scale the first `lu - 1` past input increments.
    pub rho: Vec<f64>,
    /// Projection estimator denominator constant.
    pub mu: f64,
    /// Projection estimator gain.
    pub eta: f64,
    /// Order of the autoregressive PG forecaster.
    pub ar_order: usize,
    /// Forecaster denominator constant.
    pub ar_delta: f64,
    /// Forecaster coefficient norm that triggers a reset to persistence.
    pub theta_max: f64,
    pub phi_init: PgVector,
    pub reset: ResetPolicy,
}

impl ControllerConfig {
    /// First-order PI-form tuning shared by every controller in the benchmark
    /// comparison: `ly = lu = 1`, `rho = [0.4, 0.4]`, `mu = 10`, `eta = 0.5`,
    /// `phi(0) = [0.1, 0.1]`, no reset.
    pub fn benchmark_pi(lambda: f64, horizon: usize, control_horizon: usize) -> Self {
        Self {
            ly: 1,
            lu: 1,
            horizon,
            control_horizon,
            lambda,
            rho: vec![0.4, 0.4],
            mu: 10.0,
            eta: 0.5,
            ar_order: 3,
            ar_delta: 1.0,
            theta_max: 1e4,
            phi_init: PgVector::new(&[0.1], &[0.1]).expect("static shape"),
            reset: ResetPolicy::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(MfapcError::InvalidConfig(msg));
        if self.ly < 1 || self.lu < 1 {
            return fail(format!(
                "pseudo orders must be >= 1 (ly = {}, lu = {})",
                self.ly, self.lu
            ));
        }
        if self.horizon < 1 {
            return fail("prediction horizon N must be >= 1".into());
        }
        if self.control_horizon < 1 || self.control_horizon > self.horizon {
            return fail(format!(
                "control horizon must satisfy 1 <= Nu <= N (Nu = {}, N = {})",
                self.control_horizon, self.horizon
            ));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return fail(format!("lambda must be positive, got {}", self.lambda));
        }
        if self.rho.len() != self.ly + self.lu {
            return fail(format!(
                "expected {} step factors, got {}",
                self.ly + self.lu,
                self.rho.len()
            ));
        }
        if let Some(r) = self.rho.iter().find(|r| !(**r > 0.0 && **r <= 1.0)) {
            return fail(format!("step factors must lie in (0, 1], got {r}"));
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return fail(format!("mu must be positive, got {}", self.mu));
        }
        if !(self.eta > 0.0 && self.eta <= 2.0) {
            return fail(format!("eta must lie in (0, 2], got {}", self.eta));
        }
        if self.ar_order < 1 {
            return fail("forecaster order must be >= 1".into());
        }
        if !(self.ar_delta > 0.0 && self.ar_delta.is_finite()) {
            return fail(format!("forecaster delta must be positive, got {}", self.ar_delta));
        }
        if !(self.theta_max > 0.0) {
            return fail("theta_max must be positive".into());
        }
        if self.phi_init.ly() != self.ly || self.phi_init.lu() != self.lu {
            return fail(format!(
                "initial PG vector has shape ({}, {}), expected ({}, {})",
                self.phi_init.ly(),
                self.phi_init.lu(),
                self.ly,
                self.lu
            ));
        }
        check_finite("initial PG vector", self.phi_init.as_slice())
    }

    /// Factors on `dY_ly(k)`.
    pub fn output_factors(&self) -> &[f64] {
        &self.rho[..self.ly]
    }

    /// Factor on the tracking error term.
    pub fn error_factor(&self) -> f64 {
        self.rho[self.ly]
    }

    /// Factors on the first `lu - 1` entries of `dU_lu(k-1)`.
    pub fn input_factors(&self) -> &[f64] {
        &self.rho[self.ly + 1..]
    }
}

/// One closed-loop tick.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub k: usize,
    pub y_star: f64,
    pub y: f64,
    pub u: f64,
    pub du: f64,
    pub e: f64,
    pub phi: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    rows: Vec<TraceRow>,
}

impl Trace {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends tick `k`; the tracking error is derived as `y_star - y`.
    ///
    /// Panics if `k` does not strictly follow the previous row.
    pub fn record(&mut self, k: usize, y_star: f64, y: f64, u: f64, du: f64, phi: &PgVector) {
        if let Some(last) = self.rows.last() {
            assert!(k > last.k, "trace rows must be strictly ordered by k");
        }
        self.rows.push(TraceRow {
            k,
            y_star,
            y,
            u,
            du,
            e: y_star - y,
            phi: phi.as_slice().to_vec(),
        });
    }

    pub fn rows(&self) -> &[TraceRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn errors(&self) -> impl Iterator<Item = f64> + '_ {
        self.rows.iter().map(|r| r.e)
    }

    pub fn inputs(&self) -> impl Iterator<Item = f64> + '_ {
        self.rows.iter().map(|r| r.u)
    }

    /// Number of PG components per row (0 for an empty trace).
    pub fn pg_len(&self) -> usize {
        self.rows.first().map_or(0, |r| r.phi.len())
    }
}
