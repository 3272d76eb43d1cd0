//! Receding-horizon MFAPC law and its special cases.
//!
//! The free moves minimize
//!
//! ```text
//! J = |r - Psi_Nu dU|^2 + lambda |dU|^2,
//! r = rho_e (Y* - E y(k)) - Psi_Y L_Y dY_ly(k) - Psi_U L_U dU_lu(k-1)
//! ```
//!
//! giving `dU = (Psi_Nu^T Psi_Nu + lambda I)^-1 Psi_Nu^T r`; only the first
//! move is applied. With every step factor equal to one, `J` is the plain
//! tracking cost `|Y* - Y_N(k+1)|^2 + lambda |dU|^2` under the prediction
//! model.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_finite, check_len, MfapcError, Result};
use crate::model::{ControllerConfig, PgVector};
use crate::predictor::{predict_outputs, PredictionMatrices, PredictionShape};

/// Measured quantities entering one control decision at tick `k`.
#[derive(Debug, Clone, Copy)]
pub struct ControlInputs<'a> {
    /// `y(k)`.
    pub y_now: f64,
    /// `u(k-1)`.
    pub u_prev: f64,
    /// `[y*(k+1), ..., y*(k+N)]`.
    pub y_star: &'a [f64],
    /// `dY_ly(k) = [dy(k), ..., dy(k-ly+1)]`.
    pub dy_window: &'a [f64],
    /// `dU_lu(k-1) = [du(k-1), ..., du(k-lu)]`.
    pub du_prev: &'a [f64],
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlDecision {
    /// Optimal free moves `dU_Nu(k)`.
    pub du_vector: DVector<f64>,
    /// `g^T dU_Nu(k)`, the move actually applied.
    pub du_applied: f64,
    /// `u(k) = u(k-1) + du_applied`.
    pub u_new: f64,
    /// Weighted cost at the solution.
    pub cost: f64,
}

impl ControlDecision {
    fn from_moves(du_vector: DVector<f64>, u_prev: f64, cost: f64) -> Self {
        let du_applied = du_vector[0];
        Self {
            du_vector,
            du_applied,
            u_new: u_prev + du_applied,
            cost,
        }
    }
}

fn check_inputs(m: &PredictionMatrices, inputs: &ControlInputs<'_>, cfg: &ControllerConfig) -> Result<()> {
    let shape = m.shape();
    if shape != PredictionShape::from_config(cfg) {
        return Err(MfapcError::InvalidConfig(format!(
            "prediction matrices {shape:?} do not match controller dimensions"
        )));
    }
    check_len("rho", cfg.ly + cfg.lu, cfg.rho.len())?;
    check_len("reference horizon", shape.horizon, inputs.y_star.len())?;
    check_len("dY_ly(k)", shape.ly, inputs.dy_window.len())?;
    check_len("dU_lu(k-1)", shape.lu, inputs.du_prev.len())?;
    if !m.is_finite() {
        return Err(MfapcError::NonFinite("prediction matrices"));
    }
    check_finite("reference", inputs.y_star)?;
    check_finite("output increments", inputs.dy_window)?;
    check_finite("input increments", inputs.du_prev)?;
    check_finite("current output/input", &[inputs.y_now, inputs.u_prev])
}

/// The step-factor weighted target `r` the free moves are fitted against.
pub fn reference_residual(
    m: &PredictionMatrices,
    inputs: &ControlInputs<'_>,
    cfg: &ControllerConfig,
) -> DVector<f64> {
    let errors = DVector::from_iterator(
        inputs.y_star.len(),
        inputs.y_star.iter().map(|r| r - inputs.y_now),
    );
    let weighted_dy = DVector::from_iterator(
        cfg.ly,
        inputs
            .dy_window
            .iter()
            .zip(cfg.output_factors())
            .map(|(d, r)| d * r),
    );
    // the last entry of dU_lu(k-1) meets a zero column of Psi_U
    let weighted_du = DVector::from_iterator(
        cfg.lu,
        inputs
            .du_prev
            .iter()
            .zip(cfg.input_factors().iter().chain(std::iter::once(&0.0)))
            .map(|(d, r)| d * r),
    );
    errors * cfg.error_factor() - &m.psi_y * weighted_dy - &m.psi_u * weighted_du
}

/// Weighted cost `|r - Psi_Nu dU|^2 + lambda |dU|^2` for an arbitrary move vector.
pub fn weighted_cost(
    m: &PredictionMatrices,
    inputs: &ControlInputs<'_>,
    cfg: &ControllerConfig,
    du: &DVector<f64>,
) -> Result<f64> {
    check_inputs(m, inputs, cfg)?;
    check_len("dU_Nu(k)", m.psi_nu.ncols(), du.len())?;
    let r = reference_residual(m, inputs, cfg);
    Ok((r - &m.psi_nu * du).norm_squared() + cfg.lambda * du.norm_squared())
}

/// Unweighted tracking cost `|Y* - Y_N(k+1)|^2 + lambda |dU|^2` using the predicted outputs.
pub fn tracking_cost(
    m: &PredictionMatrices,
    inputs: &ControlInputs<'_>,
    lambda: f64,
    du: &DVector<f64>,
) -> Result<f64> {
    let predicted = predict_outputs(m, inputs.y_now, inputs.dy_window, inputs.du_prev, du.as_slice())?;
    check_len("reference horizon", predicted.len(), inputs.y_star.len())?;
    let target = DVector::from_column_slice(inputs.y_star);
    Ok((target - predicted).norm_squared() + lambda * du.norm_squared())
}

fn normal_matrix(psi_nu: &DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
    let n = psi_nu.ncols();
    psi_nu.transpose() * psi_nu + DMatrix::identity(n, n) * lambda
}

/// General MFAPC increment solved through a Cholesky factorization of the
/// `N_u x N_u` normal matrix.
pub fn mfapc_increment(
    m: &PredictionMatrices,
    inputs: &ControlInputs<'_>,
    cfg: &ControllerConfig,
) -> Result<ControlDecision> {
    check_inputs(m, inputs, cfg)?;
    let r = reference_residual(m, inputs, cfg);
    let chol = normal_matrix(&m.psi_nu, cfg.lambda)
        .cholesky()
        .ok_or(MfapcError::Factorization { lambda: cfg.lambda })?;
    let du = chol.solve(&(m.psi_nu.transpose() * &r));
    let cost = (r - &m.psi_nu * &du).norm_squared() + cfg.lambda * du.norm_squared();
    Ok(ControlDecision::from_moves(du, inputs.u_prev, cost))
}

/// Single free move: `du = c^T r / (c^T c + lambda)` with `c` the only column of `Psi_Nu`.
pub fn mfapc_increment_nu1(
    m: &PredictionMatrices,
    inputs: &ControlInputs<'_>,
    cfg: &ControllerConfig,
) -> Result<ControlDecision> {
    if cfg.control_horizon != 1 {
        return Err(MfapcError::InvalidConfig(format!(
            "scalar control law needs Nu = 1, got {}",
            cfg.control_horizon
        )));
    }
    check_inputs(m, inputs, cfg)?;
    let r = reference_residual(m, inputs, cfg);
    let c = m.psi_nu.column(0);
    let denom = c.norm_squared() + cfg.lambda;
    if !(denom > 0.0) {
        return Err(MfapcError::Factorization { lambda: cfg.lambda });
    }
    let du = c.dot(&r) / denom;
    let cost = (r - c * du).norm_squared() + cfg.lambda * du * du;
    Ok(ControlDecision::from_moves(DVector::from_element(1, du), inputs.u_prev, cost))
}

/// One-step MFAC law:
///
/// ```text
/// du(k) = phi_{ly+1} / (lambda + phi_{ly+1}^2) * [ rho_{ly+1} (y* - y(k))
///         - sum_i rho_i phi_i dy(k-i+1)
///         - sum_{j>=2} rho_{ly+j} phi_{ly+j} du(k-j+1) ]
/// ```
pub fn mfac_increment(
    phi: &PgVector,
    inputs: &ControlInputs<'_>,
    cfg: &ControllerConfig,
) -> Result<ControlDecision> {
    phi.check_shape(cfg.ly, cfg.lu, "MFAC PG vector")?;
    check_len("rho", cfg.ly + cfg.lu, cfg.rho.len())?;
    check_len("MFAC reference", 1, inputs.y_star.len())?;
    check_len("dY_ly(k)", cfg.ly, inputs.dy_window.len())?;
    check_len("dU_lu(k-1)", cfg.lu, inputs.du_prev.len())?;
    check_finite("MFAC PG vector", phi.as_slice())?;
    check_finite("reference", inputs.y_star)?;
    check_finite("output increments", inputs.dy_window)?;
    check_finite("input increments", inputs.du_prev)?;

    let gain = phi.input_gain();
    let output_term: f64 = phi
        .phi_y()
        .iter()
        .zip(cfg.output_factors())
        .zip(inputs.dy_window)
        .map(|((p, r), d)| p * r * d)
        .sum();
    let input_term: f64 = phi.phi_u()[1..]
        .iter()
        .zip(cfg.input_factors())
        .zip(inputs.du_prev)
        .map(|((p, r), d)| p * r * d)
        .sum();
    let residual = cfg.error_factor() * (inputs.y_star[0] - inputs.y_now) - output_term - input_term;
    let denom = cfg.lambda + gain * gain;
    let du = gain * residual / denom;
    let cost = (residual - gain * du).powi(2) + cfg.lambda * du * du;
    Ok(ControlDecision::from_moves(DVector::from_element(1, du), inputs.u_prev, cost))
}

/// Gains of the PID reading of the law for `L_y = 2`, `L_u = 1`:
/// `du(k) = kp de(k) + ki . (Y* - E y(k)) + kd (de(k) - de(k-1))`,
/// valid for a constant reference where `de = -dy`.
#[derive(Debug, Clone, PartialEq)]
pub struct PidGains {
    pub kp: f64,
    /// One integral gain per predicted step.
    pub ki: DVector<f64>,
    pub kd: f64,
}

impl PidGains {
    pub fn increment(&self, de_now: f64, de_prev: f64, tracking_errors: &[f64]) -> f64 {
        assert_eq!(tracking_errors.len(), self.ki.len(), "error horizon mismatch");
        let integral: f64 = self.ki.iter().zip(tracking_errors).map(|(k, e)| k * e).sum();
        self.kp * de_now + integral + self.kd * (de_now - de_prev)
    }
}

pub fn pid_form_gains(m: &PredictionMatrices, cfg: &ControllerConfig) -> Result<PidGains> {
    if cfg.ly != 2 || cfg.lu != 1 {
        return Err(MfapcError::InvalidConfig(format!(
            "PID form needs ly = 2 and lu = 1, got ly = {}, lu = {}",
            cfg.ly, cfg.lu
        )));
    }
    if m.shape() != PredictionShape::from_config(cfg) {
        return Err(MfapcError::InvalidConfig(
            "prediction matrices do not match controller dimensions".into(),
        ));
    }
    if !m.is_finite() {
        return Err(MfapcError::NonFinite("prediction matrices"));
    }
    let chol = normal_matrix(&m.psi_nu, cfg.lambda)
        .cholesky()
        .ok_or(MfapcError::Factorization { lambda: cfg.lambda })?;
    // first row of (Psi^T Psi + lambda I)^-1 Psi^T
    let gain_row = chol.solve(&m.psi_nu.transpose()).row(0).transpose();
    let p1 = gain_row.dot(&m.psi_y.column(0));
    let p2 = gain_row.dot(&m.psi_y.column(1));
    let (rho1, rho2, rho3) = (cfg.rho[0], cfg.rho[1], cfg.rho[2]);
    Ok(PidGains {
        kp: rho1 * p1 + rho2 * p2,
        ki: gain_row * rho3,
        kd: -rho2 * p2,
    })
}
