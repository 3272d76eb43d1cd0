//! N-step output prediction on the FFDL data model.
//!
//! Rolling the one-step model forward gives
//!
//! ```text
//! Y_N(k+1) = E y(k) + Psi_Y dY_ly(k) + Psi_U dU_lu(k-1) + Psi_Nu dU_Nu(k)
//! ```
//!
//! where every matrix is cumulative (row `i` predicts `y(k+i) - y(k)`).
//! [`build_matrices_sim`] obtains the columns by superposition of unit
//! impulses through the forward recursion; [`build_matrices_closed_form`]
//! evaluates the nested-sum definitions directly and is kept as a
//! cross-check.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_finite, check_len, MfapcError, Result};
use crate::model::{ControllerConfig, PgVector};

/// Dimensions of a prediction problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PredictionShape {
    pub ly: usize,
    pub lu: usize,
    /// Prediction horizon `N`.
    pub horizon: usize,
    /// Control horizon `N_u`.
    pub control_horizon: usize,
}

impl PredictionShape {
    pub fn new(ly: usize, lu: usize, horizon: usize, control_horizon: usize) -> Self {
        Self {
            ly,
            lu,
            horizon,
            control_horizon,
        }
    }

    pub fn from_config(cfg: &ControllerConfig) -> Self {
        Self::new(cfg.ly, cfg.lu, cfg.horizon, cfg.control_horizon)
    }

    fn validate(&self, phis: &[PgVector]) -> Result<()> {
        if self.ly < 1 || self.lu < 1 || self.horizon < 1 || self.control_horizon < 1 {
            return Err(MfapcError::InvalidConfig(format!(
                "prediction shape must be positive, got {self:?}"
            )));
        }
        if self.control_horizon > self.horizon {
            return Err(MfapcError::InvalidConfig(format!(
                "control horizon {} exceeds prediction horizon {}",
                self.control_horizon, self.horizon
            )));
        }
        check_len("PG sequence", self.horizon, phis.len())?;
        for phi in phis {
            phi.check_shape(self.ly, self.lu, "PG sequence entry")?;
            check_finite("PG sequence entry", phi.as_slice())?;
        }
        Ok(())
    }
}

/// Cumulative prediction matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionMatrices {
    /// `N x L_y`, multiplies `dY_ly(k)`.
    pub psi_y: DMatrix<f64>,
    /// `N x L_u`, multiplies `dU_lu(k-1)`; the last column is identically zero.
    pub psi_u: DMatrix<f64>,
    /// `N x N_u`, multiplies the free moves `dU_Nu(k)`; lower trapezoidal.
    pub psi_nu: DMatrix<f64>,
}

impl PredictionMatrices {
    pub fn shape(&self) -> PredictionShape {
        PredictionShape::new(
            self.psi_y.ncols(),
            self.psi_u.ncols(),
            self.psi_nu.nrows(),
            self.psi_nu.ncols(),
        )
    }

    pub fn is_finite(&self) -> bool {
        self.psi_y
            .iter()
            .chain(self.psi_u.iter())
            .chain(self.psi_nu.iter())
            .all(|v| v.is_finite())
    }

    /// Largest element-wise absolute difference over all three matrices.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.shape(), other.shape(), "matrix shapes differ");
        let pairs = |a: &DMatrix<f64>, b: &DMatrix<f64>| (a - b).abs().max();
        pairs(&self.psi_y, &other.psi_y)
            .max(pairs(&self.psi_u, &other.psi_u))
            .max(pairs(&self.psi_nu, &other.psi_nu))
    }
}

/// Runs the FFDL recursion forward over the horizon and returns the
/// cumulative deviations `y(k+i) - y(k)`, `i = 1..=N`.
///
/// `dy_window = dY_ly(k)`, `du_prev = dU_lu(k-1)`, `du_future = [du(k), ..]`
/// (entries beyond its length are taken as zero).
pub fn simulate_deviation(
    phis: &[PgVector],
    dy_window: &[f64],
    du_prev: &[f64],
    du_future: &[f64],
) -> Vec<f64> {
    let mut dy_hist: VecDeque<f64> = dy_window.iter().copied().collect();
    let mut du_hist: VecDeque<f64> = du_prev.iter().copied().collect();
    let (ly, lu) = (dy_window.len(), du_prev.len());

    let mut level = 0.0;
    let mut out = Vec::with_capacity(phis.len());
    for (i, phi) in phis.iter().enumerate() {
        du_hist.push_front(du_future.get(i).copied().unwrap_or(0.0));
        du_hist.truncate(lu);
        let dy: f64 = phi
            .phi_y()
            .iter()
            .zip(&dy_hist)
            .chain(phi.phi_u().iter().zip(&du_hist))
            .map(|(p, d)| p * d)
            .sum();
        level += dy;
        out.push(level);
        dy_hist.push_front(dy);
        dy_hist.truncate(ly);
    }
    out
}

/// Builds the cumulative prediction matrices by impulse superposition.
///
/// `phis = [phi(k), ..., phi(k+N-1)]`.
pub fn build_matrices_sim(phis: &[PgVector], shape: PredictionShape) -> Result<PredictionMatrices> {
    shape.validate(phis)?;
    let PredictionShape {
        ly,
        lu,
        horizon: n,
        control_horizon: nu,
    } = shape;

    let impulse = |len: usize, at: usize| {
        let mut v = vec![0.0; len];
        v[at] = 1.0;
        v
    };
    let column = |dy: &[f64], du: &[f64], fut: &[f64]| {
        DVector::from_vec(simulate_deviation(phis, dy, du, fut))
    };

    let zeros_y = vec![0.0; ly];
    let zeros_u = vec![0.0; lu];

    let psi_y = DMatrix::from_columns(
        &(0..ly)
            .map(|j| column(&impulse(ly, j), &zeros_u, &[]))
            .collect::<Vec<_>>(),
    );
    let psi_u = DMatrix::from_columns(
        &(0..lu)
            .map(|j| column(&zeros_y, &impulse(lu, j), &[]))
            .collect::<Vec<_>>(),
    );
    let psi_nu = DMatrix::from_columns(
        &(0..nu)
            .map(|j| column(&zeros_y, &zeros_u, &impulse(n, j)))
            .collect::<Vec<_>>(),
    );
    Ok(PredictionMatrices {
        psi_y,
        psi_u,
        psi_nu,
    })
}

/// Non-cumulative matrices `Psi_Y`, `Psi_U`, `Psi_N` (row `i` predicts `dy(k+i)`).
#[derive(Debug, Clone, PartialEq)]
pub struct IncrementMatrices {
    pub psi_y: DMatrix<f64>,
    pub psi_u: DMatrix<f64>,
    /// Full `N x N` lower-triangular input matrix.
    pub psi_n: DMatrix<f64>,
}

impl IncrementMatrices {
    /// Left-multiplies by the running-sum operator `A_N` and keeps the first
    /// `control_horizon` input columns.
    pub fn accumulate(&self, control_horizon: usize) -> PredictionMatrices {
        let psi_n = running_sum(&self.psi_n);
        PredictionMatrices {
            psi_y: running_sum(&self.psi_y),
            psi_u: running_sum(&self.psi_u),
            psi_nu: psi_n.columns(0, control_horizon).into_owned(),
        }
    }
}

/// `A_N * m`: row `i` of the result is the sum of rows `0..=i` of `m`.
pub fn running_sum(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for i in 1..out.nrows() {
        let prev = out.row(i - 1).into_owned();
        let mut row = out.row_mut(i);
        row += prev;
    }
    out
}

// phi^T A^p for the down-shift A: entry c reads phi[c + p].
fn shifted_row(phi: &[f64], p: usize) -> Vec<f64> {
    (0..phi.len())
        .map(|c| phi.get(c + p).copied().unwrap_or(0.0))
        .collect()
}

// phi^T A^p B, i.e. entry p of phi (zero once the shift runs off the end).
fn selected(phi: &[f64], p: usize) -> f64 {
    phi.get(p).copied().unwrap_or(0.0)
}

/// Evaluates the nested-sum definitions of the non-cumulative matrices.
///
/// With 1-based rows `i` and `phi_i = phi(k+i-1)`:
///
/// ```text
/// Psi_Y[i]  = phi_y,i^T C^(i-1)   + sum_{m=0}^{i-2}   phi_y,i^T C^m D Psi_Y[i-m-1]
/// Psi_U[i]  = phi_u,i^T A^i       + sum_{m=0}^{i-2}   phi_y,i^T C^m D Psi_U[i-m-1]
/// psi_{i,j} = phi_u,i^T A^(i-j) B + sum_{m=0}^{i-j-1} phi_y,i^T C^m D psi_{i-m-1,j}
/// ```
///
/// with `A^p = C^p = 0` for negative `p`.
pub fn build_increment_matrices(phis: &[PgVector], shape: PredictionShape) -> Result<IncrementMatrices> {
    shape.validate(phis)?;
    let PredictionShape { ly, lu, horizon: n, .. } = shape;

    let mut psi_y = DMatrix::zeros(n, ly);
    let mut psi_u = DMatrix::zeros(n, lu);
    let mut psi_n = DMatrix::zeros(n, n);

    for i in 1..=n {
        let phi = &phis[i - 1];
        let (py, pu) = (phi.phi_y(), phi.phi_u());
        let r = i - 1;

        let mut row_y = DVector::from_vec(shifted_row(py, i - 1));
        let mut row_u = DVector::from_vec(shifted_row(pu, i));
        for m in 0..i.saturating_sub(1) {
            let w = selected(py, m);
            let src = i - m - 2;
            row_y += psi_y.row(src).transpose() * w;
            row_u += psi_u.row(src).transpose() * w;
        }
        psi_y.set_row(r, &row_y.transpose());
        psi_u.set_row(r, &row_u.transpose());

        for j in 1..=i {
            let mut v = selected(pu, i - j);
            for m in 0..(i - j) {
                v += selected(py, m) * psi_n[(i - m - 2, j - 1)];
            }
            psi_n[(r, j - 1)] = v;
        }
    }
    Ok(IncrementMatrices { psi_y, psi_u, psi_n })
}

/// Closed-form counterpart of [`build_matrices_sim`].
pub fn build_matrices_closed_form(
    phis: &[PgVector],
    shape: PredictionShape,
) -> Result<PredictionMatrices> {
    Ok(build_increment_matrices(phis, shape)?.accumulate(shape.control_horizon))
}

/// `Y_N(k+1) = E y(k) + Psi_Y dY + Psi_U dU_prev + Psi_Nu dU_future`.
pub fn predict_outputs(
    m: &PredictionMatrices,
    y_now: f64,
    dy_window: &[f64],
    du_prev: &[f64],
    du_future: &[f64],
) -> Result<DVector<f64>> {
    check_len("dY_ly(k)", m.psi_y.ncols(), dy_window.len())?;
    check_len("dU_lu(k-1)", m.psi_u.ncols(), du_prev.len())?;
    check_len("dU_Nu(k)", m.psi_nu.ncols(), du_future.len())?;
    let n = m.psi_nu.nrows();
    Ok(DVector::from_element(n, y_now)
        + &m.psi_y * DVector::from_column_slice(dy_window)
        + &m.psi_u * DVector::from_column_slice(du_prev)
        + &m.psi_nu * DVector::from_column_slice(du_future))
}
