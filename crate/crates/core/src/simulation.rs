//! Closed-loop benchmark harness: plants, reference trajectories, the
//! per-tick estimation -> forecast -> prediction -> control pipeline,
//! tracking metrics and lambda sweeps.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use crate::control::{mfac_increment, mfapc_increment, ControlInputs};
use crate::error::{MfapcError, Result};
use crate::identification::{PgEstimator, PgForecaster};
use crate::model::{ControllerConfig, IoHistory, PgVector, Trace};
use crate::predictor::{build_matrices_sim, PredictionShape};

#[derive(Debug, Clone, PartialEq)]
pub enum PlantKind {
    /// `y(k+1) = 0.6y(k) - 0.1y(k-1) + 1.8u(k) - 1.8u(k)^2 + 0.6u(k)^3
    ///          - 0.15u(k-1) + 0.15u(k-1)^2 - 0.05u(k-1)^3`
    PolynomialBenchmark,
    /// `y(k+1) = a y(k) + b u(k - delay)`
    LinearDelay { a: f64, b: f64, delay: usize },
    /// `y(k+1) = sum_i a[i] y(k-i) + sum_j b[j] u(k - delay - j)`
    UserLinear {
        a: Vec<f64>,
        b: Vec<f64>,
        delay: usize,
    },
}

/// Discrete-time SISO plant with zero initial lags.
#[derive(Debug, Clone)]
pub struct Plant {
    kind: PlantKind,
    // newest first; outputs[0] = y(k)
    outputs: VecDeque<f64>,
    // newest first; inputs[0] = u(k-1) before a step
    inputs: VecDeque<f64>,
}

impl Plant {
    pub fn new(kind: PlantKind) -> Result<Self> {
        if let PlantKind::UserLinear { a, b, .. } = &kind {
            if b.is_empty() {
                return Err(MfapcError::InvalidConfig(
                    "linear plant needs at least one input coefficient".into(),
                ));
            }
            if a.iter().chain(b).any(|c| !c.is_finite()) {
                return Err(MfapcError::NonFinite("plant coefficients"));
            }
        }
        let (ny, nu) = Self::lags(&kind);
        Ok(Self {
            kind,
            outputs: std::iter::repeat(0.0).take(ny).collect(),
            inputs: std::iter::repeat(0.0).take(nu).collect(),
        })
    }

    pub fn benchmark() -> Self {
        Self::new(PlantKind::PolynomialBenchmark).expect("static plant")
    }

    pub fn linear_delay(a: f64, b: f64, delay: usize) -> Self {
        Self::new(PlantKind::LinearDelay { a, b, delay }).expect("static plant")
    }

    fn lags(kind: &PlantKind) -> (usize, usize) {
        match kind {
            PlantKind::PolynomialBenchmark => (2, 2),
            PlantKind::LinearDelay { delay, .. } => (1, delay + 1),
            PlantKind::UserLinear { a, b, delay } => (a.len().max(1), delay + b.len()),
        }
    }

    pub fn kind(&self) -> &PlantKind {
        &self.kind
    }

    /// Current output `y(k)`.
    pub fn output(&self) -> f64 {
        self.outputs[0]
    }

    /// Applies `u(k)`, returns `y(k+1)` and shifts the lag registers.
    pub fn step(&mut self, u: f64) -> Result<f64> {
        if !u.is_finite() {
            return Err(MfapcError::NonFinite("plant input"));
        }
        self.inputs.push_front(u);
        self.inputs.pop_back();
        let y = &self.outputs;
        let u = &self.inputs;
        let next = match &self.kind {
            PlantKind::PolynomialBenchmark => {
                let cubic = |v: f64, c1: f64, c2: f64, c3: f64| c1 * v + c2 * v * v + c3 * v * v * v;
                0.6 * y[0] - 0.1 * y[1] + cubic(u[0], 1.8, -1.8, 0.6) + cubic(u[1], -0.15, 0.15, -0.05)
            }
            PlantKind::LinearDelay { a, b, delay } => a * y[0] + b * u[*delay],
            PlantKind::UserLinear { a, b, delay } => {
                let ar: f64 = a.iter().zip(y).map(|(c, v)| c * v).sum();
                let x: f64 = b.iter().zip(u.iter().skip(*delay)).map(|(c, v)| c * v).sum();
                ar + x
            }
        };
        self.outputs.push_front(next);
        self.outputs.pop_back();
        Ok(next)
    }
}

/// Desired output trajectory `y*(k)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Reference {
    Constant(f64),
    /// `offset + amplitude` on the first half of each period, `offset - amplitude` on the second.
    SquareWave {
        amplitude: f64,
        period: usize,
        offset: f64,
    },
    /// `offset + amplitude * sin(2 pi k / period)`.
    Sine {
        amplitude: f64,
        period: usize,
        offset: f64,
    },
    /// Holds each value from its start step until the next breakpoint; zero before the first.
    Piecewise(Vec<(usize, f64)>),
}

impl Reference {
    pub fn square_wave(amplitude: f64, period: usize, offset: f64) -> Self {
        Self::SquareWave {
            amplitude,
            period,
            offset,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::SquareWave { period, .. } | Self::Sine { period, .. } if *period < 2 => Err(
                MfapcError::InvalidConfig(format!("reference period must be >= 2, got {period}")),
            ),
            Self::Piecewise(points) if points.windows(2).any(|w| w[0].0 >= w[1].0) => Err(
                MfapcError::InvalidConfig("piecewise breakpoints must be strictly increasing".into()),
            ),
            _ => Ok(()),
        }
    }

    pub fn at(&self, k: usize) -> f64 {
        match self {
            Self::Constant(v) => *v,
            Self::SquareWave {
                amplitude,
                period,
                offset,
            } => {
                if k % period < period / 2 {
                    offset + amplitude
                } else {
                    offset - amplitude
                }
            }
            Self::Sine {
                amplitude,
                period,
                offset,
            } => {
                let phase = std::f64::consts::TAU * (k % period) as f64 / *period as f64;
                offset + amplitude * phase.sin()
            }
            Self::Piecewise(points) => points
                .iter()
                .take_while(|(start, _)| *start <= k)
                .last()
                .map_or(0.0, |(_, v)| *v),
        }
    }

    /// `[y*(k+1), ..., y*(k+n)]`.
    pub fn lookahead(&self, k: usize, n: usize) -> Vec<f64> {
        (k + 1..=k + n).map(|i| self.at(i)).collect()
    }

    /// Half the peak-to-peak swing (the magnitude for constants).
    pub fn amplitude(&self) -> f64 {
        match self {
            Self::Constant(v) => v.abs(),
            Self::SquareWave { amplitude, .. } | Self::Sine { amplitude, .. } => amplitude.abs(),
            Self::Piecewise(points) => {
                let values = points.iter().map(|(_, v)| *v).chain(std::iter::once(0.0));
                let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                    (lo.min(v), hi.max(v))
                });
                (hi - lo) / 2.0
            }
        }
    }

    /// Steps elapsed since the reference last changed value at or before `k`
    /// (`None` for a continuously varying reference).
    pub fn steps_since_change(&self, k: usize) -> Option<usize> {
        match self {
            Self::Constant(_) => Some(k),
            Self::SquareWave { period, .. } => {
                let half = period / 2;
                let pos = k % period;
                Some(if pos < half { pos } else { pos - half })
            }
            Self::Sine { .. } => None,
            Self::Piecewise(points) => Some(
                points
                    .iter()
                    .take_while(|(start, _)| *start <= k)
                    .last()
                    .map_or(k, |(start, _)| k - start),
            ),
        }
    }

    /// Steps from `k` until the next change of value (`None` if it never changes
    /// or varies continuously).
    pub fn steps_until_change(&self, k: usize) -> Option<usize> {
        match self {
            Self::Constant(_) | Self::Sine { .. } => None,
            Self::SquareWave { period, .. } => {
                let half = period / 2;
                let pos = k % period;
                Some(if pos < half { half - pos } else { period - pos })
            }
            Self::Piecewise(points) => points.iter().find(|(start, _)| *start > k).map(|(start, _)| start - k),
        }
    }

    /// Whether tick `k` lies inside a settled window: at least `settle` steps
    /// after the latest change and more than `guard` steps before the next one.
    /// Continuously varying references are always considered settled.
    pub fn is_settled(&self, k: usize, settle: usize, guard: usize) -> bool {
        self.steps_since_change(k).is_none_or(|s| s >= settle)
            && self.steps_until_change(k).is_none_or(|u| u > guard)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Receding-horizon law with forecast PG vectors.
    Mfapc,
    /// One-step law on the current PG estimate; requires `N = N_u = 1`.
    Mfac,
    /// MFAPC restricted to `L_y = L_u = 1`.
    MfapcPi,
}

impl Variant {
    pub fn check(&self, cfg: &ControllerConfig) -> Result<()> {
        cfg.validate()?;
        match self {
            Self::Mfac if cfg.horizon != 1 || cfg.control_horizon != 1 => {
                Err(MfapcError::InvalidConfig(format!(
                    "MFAC needs N = Nu = 1, got N = {}, Nu = {}",
                    cfg.horizon, cfg.control_horizon
                )))
            }
            Self::MfapcPi if cfg.ly != 1 || cfg.lu != 1 => Err(MfapcError::InvalidConfig(format!(
                "MFAPC-PI needs ly = lu = 1, got ly = {}, lu = {}",
                cfg.ly, cfg.lu
            ))),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Mfapc => "MFAPC",
            Self::Mfac => "MFAC",
            Self::MfapcPi => "MFAPC-PI",
        })
    }
}

impl FromStr for Variant {
    type Err = MfapcError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "mfapc" => Ok(Self::Mfapc),
            "mfac" => Ok(Self::Mfac),
            "mfapc-pi" => Ok(Self::MfapcPi),
            other => Err(MfapcError::InvalidConfig(format!("unknown controller variant `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOptions {
    /// A run halts as diverged once `|y(k)|` exceeds this bound.
    pub divergence_bound: f64,
    /// Number of initial ticks that hold `u = 0` while the history fills.
    pub warmup: usize,
    /// Optional symmetric actuator limit.
    pub input_limit: Option<f64>,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            divergence_bound: 1e3,
            warmup: 3,
            input_limit: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorMetrics {
    pub ise: f64,
    pub iae: f64,
    pub max_abs_e: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub ise: f64,
    pub iae: f64,
    pub max_abs_e: f64,
    pub diverged: bool,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub variant: Variant,
    pub trace: Trace,
    pub metrics: Metrics,
    /// Tick at which the run was halted, if it diverged.
    pub diverged_at: Option<usize>,
    pub config_echo: ControllerConfig,
}

impl RunResult {
    /// Max `|e|` over ticks `k >= from` inside settled windows of the reference
    /// (see [`Reference::is_settled`]). Predictive controllers move ahead of a
    /// known change, so the `guard` steps before it are excluded as well.
    pub fn settled_max_error(&self, reference: &Reference, settle: usize, guard: usize, from: usize) -> f64 {
        self.trace
            .rows()
            .iter()
            .filter(|r| r.k >= from)
            .filter(|r| reference.is_settled(r.k, settle, guard))
            .map(|r| r.e.abs())
            .fold(0.0, f64::max)
    }

    /// Largest PG estimate norm seen during the run.
    pub fn max_pg_norm(&self) -> f64 {
        self.trace
            .rows()
            .iter()
            .map(|r| r.phi.iter().map(|p| p * p).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }
}

/// ISE, IAE and max `|e|` over every row.
pub fn compute_metrics(trace: &Trace) -> Result<ErrorMetrics> {
    if trace.is_empty() {
        return Err(MfapcError::EmptyTrace);
    }
    Ok(trace.errors().fold(
        ErrorMetrics {
            ise: 0.0,
            iae: 0.0,
            max_abs_e: 0.0,
        },
        |acc, e| ErrorMetrics {
            ise: acc.ise + e * e,
            iae: acc.iae + e.abs(),
            max_abs_e: acc.max_abs_e.max(e.abs()),
        },
    ))
}

pub fn run_closed_loop(
    plant: Plant,
    reference: &Reference,
    cfg: &ControllerConfig,
    variant: Variant,
    steps: usize,
) -> Result<RunResult> {
    run_closed_loop_with(plant, reference, cfg, variant, steps, &SimOptions::default())
}

/// Drives `plant` for `steps` ticks. Each tick `k`:
/// 1. measure `y(k)` and update the PG estimate from `dH(k-1)`, `dy(k)`;
/// 2. feed the forecaster and forecast `phi(k+1..k+N-1)`;
/// 3. build the prediction matrices;
/// 4. solve for `du(k)`;
/// 5. apply `u(k)` to the plant;
/// 6. record the trace row.
pub fn run_closed_loop_with(
    mut plant: Plant,
    reference: &Reference,
    cfg: &ControllerConfig,
    variant: Variant,
    steps: usize,
    opts: &SimOptions,
) -> Result<RunResult> {
    variant.check(cfg)?;
    reference.validate()?;
    if steps == 0 {
        return Err(MfapcError::InvalidConfig("steps must be positive".into()));
    }
    let (ly, lu) = (cfg.ly, cfg.lu);
    let shape = PredictionShape::from_config(cfg);
    let mut history = IoHistory::for_orders(ly, lu);
    let mut estimator = PgEstimator::from_config(cfg)?;
    let mut forecaster = PgForecaster::from_config(cfg)?;
    let mut trace = Trace::new();
    let mut u_prev = 0.0;
    let mut diverged_at = None;

    for k in 0..steps {
        let y = plant.output();
        if !y.is_finite() || y.abs() > opts.divergence_bound {
            diverged_at = Some(k);
            break;
        }
        history.push_output(y);

        let mut dh_prev = history.delta_outputs(ly, 1);
        dh_prev.extend(history.delta_inputs(lu, 0));
        let phi: PgVector = match estimator.estimate(&dh_prev, history.delta_output(0)) {
            Ok(phi) => phi.clone(),
            Err(MfapcError::NonFinite(_)) => {
                diverged_at = Some(k);
                break;
            }
            Err(e) => return Err(e),
        };

        let u = if k < opts.warmup {
            if variant != Variant::Mfac {
                forecaster.update(&phi)?;
            }
            0.0
        } else {
            let dy_window = history.delta_outputs(ly, 0);
            let du_prev = history.delta_inputs(lu, 0);
            let y_star = reference.lookahead(k, shape.horizon);
            let inputs = ControlInputs {
                y_now: y,
                u_prev,
                y_star: &y_star,
                dy_window: &dy_window,
                du_prev: &du_prev,
            };
            let decision = match variant {
                Variant::Mfac => mfac_increment(&phi, &inputs, cfg),
                Variant::Mfapc | Variant::MfapcPi => {
                    forecaster.update(&phi)?;
                    let phis = forecaster.horizon_sequence(shape.horizon)?;
                    build_matrices_sim(&phis, shape).and_then(|m| mfapc_increment(&m, &inputs, cfg))
                }
            };
            match decision {
                Ok(d) if d.u_new.is_finite() => match opts.input_limit {
                    Some(limit) => d.u_new.clamp(-limit, limit),
                    None => d.u_new,
                },
                Ok(_) | Err(MfapcError::NonFinite(_)) | Err(MfapcError::Factorization { .. }) => {
                    diverged_at = Some(k);
                    break;
                }
                Err(e) => return Err(e),
            }
        };

        history.push_input(u);
        plant.step(u)?;
        trace.record(k, reference.at(k), y, u, u - u_prev, &phi);
        u_prev = u;
    }

    let metrics = match compute_metrics(&trace) {
        Ok(m) => Metrics {
            ise: m.ise,
            iae: m.iae,
            max_abs_e: m.max_abs_e,
            diverged: diverged_at.is_some(),
        },
        Err(_) => Metrics {
            ise: 0.0,
            iae: 0.0,
            max_abs_e: 0.0,
            diverged: diverged_at.is_some(),
        },
    };
    Ok(RunResult {
        variant,
        trace,
        metrics,
        diverged_at,
        config_echo: cfg.clone(),
    })
}

/// One independent run per `lambda`, results in input order.
pub fn lambda_sweep(
    plant: &Plant,
    reference: &Reference,
    base: &ControllerConfig,
    variant: Variant,
    lambdas: &[f64],
    steps: usize,
    opts: &SimOptions,
) -> Result<Vec<RunResult>> {
    if lambdas.is_empty() {
        return Err(MfapcError::InvalidConfig("lambda sweep needs at least one value".into()));
    }
    std::thread::scope(|scope| {
        let handles: Vec<_> = lambdas
            .iter()
            .map(|&lambda| {
                let mut cfg = base.clone();
                cfg.lambda = lambda;
                let plant = plant.clone();
                scope.spawn(move || run_closed_loop_with(plant, reference, &cfg, variant, steps, opts))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("sweep worker panicked"))
            .collect()
    })
}
