//! Built-in consistency suites run by `mfapc selftest`.

use nalgebra::DVector;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::control::{
    mfac_increment, mfapc_increment, mfapc_increment_nu1, pid_form_gains, weighted_cost, ControlInputs,
};
use crate::error::Result;
use crate::identification::{PgEstimator, PgForecaster};
use crate::model::{ControllerConfig, PgVector, ResetPolicy};
use crate::predictor::{build_matrices_closed_form, build_matrices_sim, PredictionMatrices, PredictionShape};
use crate::simulation::{run_closed_loop, Plant, Reference, Variant};

/// Signature shared by the prediction-matrix builders.
pub type MatrixBuilder = fn(&[PgVector], PredictionShape) -> Result<PredictionMatrices>;

const SEED: u64 = 0x4d46_4150;

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl SuiteReport {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Self { name, passed, detail }
    }

    fn from_result(name: &'static str, outcome: std::result::Result<String, String>) -> Self {
        match outcome {
            Ok(detail) => Self::new(name, true, detail),
            Err(detail) => Self::new(name, false, detail),
        }
    }
}

pub fn random_phis(rng: &mut StdRng, ly: usize, lu: usize, n: usize) -> Vec<PgVector> {
    (0..n)
        .map(|_| {
            let values: Vec<f64> = (0..ly + lu).map(|_| rng.gen_range(-1.5..1.5)).collect();
            PgVector::from_slice(&values, ly).expect("ly >= 1")
        })
        .collect()
}

pub fn random_shape(rng: &mut StdRng) -> PredictionShape {
    let n = rng.gen_range(1..=5);
    PredictionShape::new(rng.gen_range(1..=3), rng.gen_range(1..=3), n, rng.gen_range(1..=n))
}

fn random_vec(rng: &mut StdRng, len: usize, scale: f64) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(-scale..scale)).collect()
}

fn config_for(shape: PredictionShape, lambda: f64, rho: Vec<f64>) -> ControllerConfig {
    let mut cfg = ControllerConfig::benchmark_pi(lambda, shape.horizon, shape.control_horizon);
    cfg.ly = shape.ly;
    cfg.lu = shape.lu;
    cfg.rho = rho;
    cfg.phi_init = PgVector::from_slice(&vec![0.1; shape.ly + shape.lu], shape.ly).expect("ly >= 1");
    cfg
}

/// Impulse-superposition builder against `closed_form` on random PG sequences.
pub fn matrix_oracle_suite(closed_form: MatrixBuilder, cases: usize, tol: f64) -> SuiteReport {
    let mut rng = StdRng::seed_from_u64(SEED);
    let mut worst = 0.0_f64;
    for case in 0..cases {
        let shape = random_shape(&mut rng);
        let phis = random_phis(&mut rng, shape.ly, shape.lu, shape.horizon);
        let diff = match (build_matrices_sim(&phis, shape), closed_form(&phis, shape)) {
            (Ok(a), Ok(b)) if a.shape() == b.shape() => a.max_abs_diff(&b),
            (Ok(_), Ok(_)) => {
                return SuiteReport::new("matrix-oracle", false, format!("case {case}: shape mismatch"))
            }
            (Err(e), _) | (_, Err(e)) => {
                return SuiteReport::new("matrix-oracle", false, format!("case {case}: {e}"))
            }
        };
        if !(diff <= tol) {
            return SuiteReport::new(
                "matrix-oracle",
                false,
                format!("case {case} {shape:?}: max difference {diff:e} > {tol:e}"),
            );
        }
        worst = worst.max(diff);
    }
    SuiteReport::new("matrix-oracle", true, format!("{cases} cases, max difference {worst:e}"))
}

/// MFAPC with `N = N_u = 1` against MFAC over a benchmark closed loop.
pub fn degeneration_suite(steps: usize, tol: f64) -> SuiteReport {
    let outcome = (|| {
        let cfg = ControllerConfig::benchmark_pi(2.0, 1, 1);
        let reference = Reference::square_wave(5.0, 200, 0.0);
        let a = run_closed_loop(Plant::benchmark(), &reference, &cfg, Variant::Mfapc, steps)
            .map_err(|e| e.to_string())?;
        let b = run_closed_loop(Plant::benchmark(), &reference, &cfg, Variant::Mfac, steps)
            .map_err(|e| e.to_string())?;
        if a.trace.len() != b.trace.len() {
            return Err(format!("trace lengths {} and {}", a.trace.len(), b.trace.len()));
        }
        let worst = a
            .trace
            .inputs()
            .zip(b.trace.inputs())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        if worst <= tol {
            Ok(format!("{} steps, max |u difference| {worst:e}", a.trace.len()))
        } else {
            Err(format!("max |u difference| {worst:e} > {tol:e}"))
        }
    })();
    SuiteReport::from_result("mfac-degeneration", outcome)
}

struct Instance {
    shape: PredictionShape,
    cfg: ControllerConfig,
    m: PredictionMatrices,
    y_star: Vec<f64>,
    dy: Vec<f64>,
    du: Vec<f64>,
}

impl Instance {
    fn random(rng: &mut StdRng, shape: PredictionShape) -> Self {
        let lambda = rng.gen_range(0.05..5.0);
        let rho = (0..shape.ly + shape.lu).map(|_| rng.gen_range(0.1..1.0)).collect();
        let cfg = config_for(shape, lambda, rho);
        let phis = random_phis(rng, shape.ly, shape.lu, shape.horizon);
        let m = build_matrices_sim(&phis, shape).expect("valid random shape");
        Self {
            shape,
            cfg,
            m,
            y_star: random_vec(rng, shape.horizon, 5.0),
            dy: random_vec(rng, shape.ly, 1.0),
            du: random_vec(rng, shape.lu, 1.0),
        }
    }

    fn inputs(&self) -> ControlInputs<'_> {
        ControlInputs {
            y_now: 0.7,
            u_prev: -0.2,
            y_star: &self.y_star,
            dy_window: &self.dy,
            du_prev: &self.du,
        }
    }
}

/// Scalar law against the general solver when `N_u = 1`.
pub fn scalar_law_suite(cases: usize, tol: f64) -> SuiteReport {
    let mut rng = StdRng::seed_from_u64(SEED ^ 1);
    let outcome = (|| {
        let mut worst = 0.0_f64;
        for _ in 0..cases {
            let n = rng.gen_range(1..=5);
            let shape = PredictionShape::new(rng.gen_range(1..=3), rng.gen_range(1..=3), n, 1);
            let inst = Instance::random(&mut rng, shape);
            let a = mfapc_increment(&inst.m, &inst.inputs(), &inst.cfg).map_err(|e| e.to_string())?;
            let b = mfapc_increment_nu1(&inst.m, &inst.inputs(), &inst.cfg).map_err(|e| e.to_string())?;
            worst = worst.max((a.du_applied - b.du_applied).abs());
        }
        if worst <= tol {
            Ok(format!("{cases} cases, max difference {worst:e}"))
        } else {
            Err(format!("max difference {worst:e} > {tol:e}"))
        }
    })();
    SuiteReport::from_result("scalar-law", outcome)
}

/// Stationarity and local minimality of the returned moves.
pub fn optimality_suite(cases: usize, probes: usize) -> SuiteReport {
    let mut rng = StdRng::seed_from_u64(SEED ^ 2);
    let outcome = (|| {
        for case in 0..cases {
            let shape = random_shape(&mut rng);
            let inst = Instance::random(&mut rng, shape);
            let inputs = inst.inputs();
            let cost = |du: &DVector<f64>| weighted_cost(&inst.m, &inputs, &inst.cfg, du);
            let best = mfapc_increment(&inst.m, &inputs, &inst.cfg).map_err(|e| e.to_string())?;
            let j = cost(&best.du_vector).map_err(|e| e.to_string())?;
            let h = 1e-5;
            for c in 0..inst.shape.control_horizon {
                let mut up = best.du_vector.clone();
                let mut down = best.du_vector.clone();
                up[c] += h;
                down[c] -= h;
                let g = (cost(&up).map_err(|e| e.to_string())? - cost(&down).map_err(|e| e.to_string())?)
                    / (2.0 * h);
                if g.abs() > 1e-6 * (1.0 + j.abs()) {
                    return Err(format!("case {case}: gradient component {c} = {g:e}"));
                }
            }
            for _ in 0..probes {
                let mut delta = DVector::from_vec(random_vec(&mut rng, inst.shape.control_horizon, 1.0));
                let norm = delta.norm();
                if norm == 0.0 {
                    continue;
                }
                delta *= 0.1 / norm;
                let moved = cost(&(&best.du_vector + delta)).map_err(|e| e.to_string())?;
                if moved < j {
                    return Err(format!("case {case}: perturbed cost {moved} < {j}"));
                }
            }
        }
        Ok(format!("{cases} instances, {probes} probes each"))
    })();
    SuiteReport::from_result("optimality", outcome)
}

/// PID reading of the law for `L_y = 2`, `L_u = 1` on a constant reference.
pub fn pid_form_suite(cases: usize, tol: f64) -> SuiteReport {
    let mut rng = StdRng::seed_from_u64(SEED ^ 3);
    let outcome = (|| {
        let mut worst = 0.0_f64;
        for _ in 0..cases {
            let n = rng.gen_range(1..=5);
            let shape = PredictionShape::new(2, 1, n, rng.gen_range(1..=n));
            let mut inst = Instance::random(&mut rng, shape);
            let target = rng.gen_range(-5.0..5.0);
            inst.y_star = vec![target; n];
            let inputs = inst.inputs();
            let law = mfapc_increment(&inst.m, &inputs, &inst.cfg).map_err(|e| e.to_string())?;
            let gains = pid_form_gains(&inst.m, &inst.cfg).map_err(|e| e.to_string())?;
            let errors = vec![target - inputs.y_now; n];
            let du = gains.increment(-inst.dy[0], -inst.dy[1], &errors);
            worst = worst.max((du - law.du_applied).abs());
        }
        if worst <= tol {
            Ok(format!("{cases} cases, max difference {worst:e}"))
        } else {
            Err(format!("max difference {worst:e} > {tol:e}"))
        }
    })();
    SuiteReport::from_result("pid-form", outcome)
}

/// One-step MFAC law against the general solver at `N = N_u = 1`.
pub fn one_step_suite(cases: usize, tol: f64) -> SuiteReport {
    let mut rng = StdRng::seed_from_u64(SEED ^ 4);
    let outcome = (|| {
        let mut worst = 0.0_f64;
        for _ in 0..cases {
            let shape = PredictionShape::new(rng.gen_range(1..=3), rng.gen_range(1..=3), 1, 1);
            let lambda = rng.gen_range(0.05..5.0);
            let rho = (0..shape.ly + shape.lu).map(|_| rng.gen_range(0.1..1.0)).collect();
            let cfg = config_for(shape, lambda, rho);
            let phis = random_phis(&mut rng, shape.ly, shape.lu, 1);
            let m = build_matrices_sim(&phis, shape).map_err(|e| e.to_string())?;
            let y_star = random_vec(&mut rng, 1, 5.0);
            let dy = random_vec(&mut rng, shape.ly, 1.0);
            let du = random_vec(&mut rng, shape.lu, 1.0);
            let inputs = ControlInputs {
                y_now: 0.3,
                u_prev: 0.1,
                y_star: &y_star,
                dy_window: &dy,
                du_prev: &du,
            };
            let a = mfapc_increment(&m, &inputs, &cfg).map_err(|e| e.to_string())?;
            let b = mfac_increment(&phis[0], &inputs, &cfg).map_err(|e| e.to_string())?;
            worst = worst.max((a.du_applied - b.du_applied).abs());
        }
        if worst <= tol {
            Ok(format!("{cases} cases, max difference {worst:e}"))
        } else {
            Err(format!("max difference {worst:e} > {tol:e}"))
        }
    })();
    SuiteReport::from_result("one-step-law", outcome)
}

/// Hand-checked estimator and forecaster steps.
pub fn identification_suite() -> SuiteReport {
    let outcome = (|| {
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12;
        let init = PgVector::new(&[0.1], &[0.1]).map_err(|e| e.to_string())?;
        let mut est = PgEstimator::new(init, 10.0, 0.5, ResetPolicy::default()).map_err(|e| e.to_string())?;
        let phi = est.estimate(&[1.0, 1.0], 1.0).map_err(|e| e.to_string())?;
        if !phi.as_slice().iter().all(|v| close(*v, 0.4 / 3.0)) {
            return Err(format!("estimator step gave {:?}", phi.as_slice()));
        }

        let past = PgVector::new(&[0.5], &[1.0]).map_err(|e| e.to_string())?;
        let mut fc = PgForecaster::new(1, 1.0, 1e4)
            .map_err(|e| e.to_string())?
            .with_history(vec![past]);
        fc.update(&PgVector::new(&[0.55], &[1.1]).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
        if !close(fc.theta()[0], 1.0 + 0.125 / 2.25) {
            return Err(format!("forecaster coefficient {}", fc.theta()[0]));
        }

        let fc = PgForecaster::new(1, 1.0, 1e4)
            .map_err(|e| e.to_string())?
            .with_theta(vec![0.5])
            .map_err(|e| e.to_string())?
            .with_history(vec![PgVector::new(&[0.4], &[0.8]).map_err(|e| e.to_string())?]);
        let ahead = fc.forecast(2).map_err(|e| e.to_string())?;
        let expected = [[0.2, 0.4], [0.1, 0.2]];
        for (got, want) in ahead.iter().zip(expected) {
            if !got.as_slice().iter().zip(want).all(|(a, b)| close(*a, b)) {
                return Err(format!("forecast {:?}, expected {want:?}", got.as_slice()));
            }
        }
        Ok("estimator, coefficient update and forecast recursion".to_string())
    })();
    SuiteReport::from_result("identification", outcome)
}

pub fn run_all() -> Vec<SuiteReport> {
    vec![
        matrix_oracle_suite(build_matrices_closed_form, 100, 1e-10),
        degeneration_suite(500, 1e-10),
        one_step_suite(100, 1e-12),
        scalar_law_suite(100, 1e-12),
        optimality_suite(20, 100),
        pid_form_suite(100, 1e-12),
        identification_suite(),
    ]
}
