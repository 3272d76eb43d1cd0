use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use mfapc::control::{mfac_increment, mfapc_increment, tracking_cost, ControlInputs};
use mfapc::identification::PgForecaster;
use mfapc::predictor::{
    build_increment_matrices, build_matrices_closed_form, build_matrices_sim, predict_outputs, PredictionShape,
};
use mfapc::{ffdl_step, ControllerConfig, IoHistory, PgVector};

fn shape_strategy() -> impl Strategy<Value = PredictionShape> {
    (1usize..=3, 1usize..=3, 1usize..=5)
        .prop_flat_map(|(ly, lu, n)| (Just(ly), Just(lu), Just(n), 1usize..=n))
        .prop_map(|(ly, lu, n, nu)| PredictionShape::new(ly, lu, n, nu))
}

fn phis_for(shape: PredictionShape) -> impl Strategy<Value = Vec<PgVector>> {
    let len = shape.ly + shape.lu;
    prop::collection::vec(prop::collection::vec(-1.5f64..1.5, len), shape.horizon)
        .prop_map(move |rows| rows.iter().map(|r| PgVector::from_slice(r, shape.ly).unwrap()).collect())
}

fn instance() -> impl Strategy<Value = (PredictionShape, Vec<PgVector>)> {
    shape_strategy().prop_flat_map(|s| (Just(s), phis_for(s)))
}

// Direct evaluation of the data model: keeps full increment histories and
// applies dy(t+1) = phi_y(t) . [dy(t), ..] + phi_u(t) . [du(t), ..].
fn reference_outputs(
    phis: &[PgVector],
    y_now: f64,
    dy_window: &[f64],
    du_prev: &[f64],
    du_future: &[f64],
) -> Vec<f64> {
    // oldest first
    let mut dys: Vec<f64> = dy_window.iter().rev().copied().collect();
    let mut dus: Vec<f64> = du_prev.iter().rev().copied().collect();
    let mut y = y_now;
    let mut out = Vec::new();
    for (i, phi) in phis.iter().enumerate() {
        dus.push(du_future.get(i).copied().unwrap_or(0.0));
        let mut dy = 0.0;
        for (m, p) in phi.phi_y().iter().enumerate() {
            dy += p * dys[dys.len() - 1 - m];
        }
        for (m, p) in phi.phi_u().iter().enumerate() {
            dy += p * dus[dus.len() - 1 - m];
        }
        dys.push(dy);
        y += dy;
        out.push(y);
    }
    out
}

fn config_for(shape: PredictionShape, lambda: f64) -> ControllerConfig {
    let mut cfg = ControllerConfig::benchmark_pi(lambda, shape.horizon, shape.control_horizon);
    cfg.ly = shape.ly;
    cfg.lu = shape.lu;
    cfg.rho = vec![1.0; shape.ly + shape.lu];
    cfg.phi_init = PgVector::from_slice(&vec![0.1; shape.ly + shape.lu], shape.ly).unwrap();
    cfg
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn builders_agree((shape, phis) in instance()) {
        let a = build_matrices_sim(&phis, shape).unwrap();
        let b = build_matrices_closed_form(&phis, shape).unwrap();
        prop_assert!(a.max_abs_diff(&b) <= 1e-10, "difference {}", a.max_abs_diff(&b));
    }

    #[test]
    fn input_matrix_is_causal((shape, phis) in instance()) {
        let m = build_matrices_sim(&phis, shape).unwrap();
        for i in 0..shape.horizon {
            for j in (i + 1)..shape.control_horizon {
                prop_assert_eq!(m.psi_nu[(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn last_past_input_column_is_zero((shape, phis) in instance()) {
        let m = build_matrices_sim(&phis, shape).unwrap();
        prop_assert!(m.psi_u.column(shape.lu - 1).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn cumulative_rows_are_running_sums((shape, phis) in instance()) {
        let inc = build_increment_matrices(&phis, shape).unwrap();
        let cum = build_matrices_sim(&phis, shape).unwrap();
        for i in 0..shape.horizon {
            let rows = |m: &DMatrix<f64>| m.rows(0, i + 1).row_sum();
            prop_assert!((rows(&inc.psi_y) - cum.psi_y.row(i)).amax() <= 1e-10);
            prop_assert!((rows(&inc.psi_u) - cum.psi_u.row(i)).amax() <= 1e-10);
            let nu = shape.control_horizon;
            prop_assert!((rows(&inc.psi_n).columns(0, nu) - cum.psi_nu.row(i)).amax() <= 1e-10);
        }
    }

    #[test]
    fn predictions_match_direct_evaluation(
        (shape, phis) in instance(),
        y_now in -5.0f64..5.0,
        seed in prop::collection::vec(-1.0f64..1.0, 11),
    ) {
        let dy = &seed[..shape.ly];
        let du = &seed[3..3 + shape.lu];
        let fut = &seed[6..6 + shape.control_horizon];
        let m = build_matrices_sim(&phis, shape).unwrap();
        let got = predict_outputs(&m, y_now, dy, du, fut).unwrap();
        let want = reference_outputs(&phis, y_now, dy, du, fut);
        for (g, w) in got.iter().zip(&want) {
            prop_assert!((g - w).abs() <= 1e-10, "{} vs {}", g, w);
        }
    }

    #[test]
    fn law_minimizes_unweighted_tracking_cost(
        (shape, phis) in instance(),
        lambda in 0.05f64..5.0,
        seed in prop::collection::vec(-2.0f64..2.0, 11),
    ) {
        // independent solve: columns of the input map from direct evaluation, then ridge normal equations
        let cfg = config_for(shape, lambda);
        let dy = &seed[..shape.ly];
        let du = &seed[3..3 + shape.lu];
        let y_star: Vec<f64> = seed[6..6 + shape.horizon].iter().map(|v| 2.0 * v).collect();
        let free = reference_outputs(&phis, 0.4, dy, du, &[]);
        let cols: Vec<DVector<f64>> = (0..shape.control_horizon)
            .map(|j| {
                let mut e = vec![0.0; shape.control_horizon];
                e[j] = 1.0;
                let hit = reference_outputs(&phis, 0.4, dy, du, &e);
                DVector::from_iterator(shape.horizon, hit.iter().zip(&free).map(|(a, b)| a - b))
            })
            .collect();
        let g = DMatrix::from_columns(&cols);
        let target = DVector::from_iterator(shape.horizon, y_star.iter().zip(&free).map(|(a, b)| a - b));
        let lhs = g.transpose() * &g + DMatrix::identity(shape.control_horizon, shape.control_horizon) * lambda;
        let oracle = lhs.lu().solve(&(g.transpose() * target)).unwrap();

        let m = build_matrices_sim(&phis, shape).unwrap();
        let inputs = ControlInputs { y_now: 0.4, u_prev: 0.0, y_star: &y_star, dy_window: dy, du_prev: du };
        let d = mfapc_increment(&m, &inputs, &cfg).unwrap();
        prop_assert!((&d.du_vector - &oracle).amax() <= 1e-9);
        let j = tracking_cost(&m, &inputs, lambda, &d.du_vector).unwrap();
        prop_assert!((j - d.cost).abs() <= 1e-9 * (1.0 + j.abs()));
    }

    #[test]
    fn normal_matrix_spectrum_is_shifted((shape, phis) in instance(), lambda in 0.01f64..10.0) {
        let m = build_matrices_sim(&phis, shape).unwrap();
        let nu = shape.control_horizon;
        let h = m.psi_nu.transpose() * &m.psi_nu + DMatrix::identity(nu, nu) * lambda;
        let eig = h.symmetric_eigenvalues();
        prop_assert!(eig.iter().all(|e| *e >= lambda * (1.0 - 1e-12) - 1e-12));
    }

    #[test]
    fn doubling_lambda_shrinks_moves(
        (shape, phis) in instance(),
        lambda in 0.01f64..10.0,
        seed in prop::collection::vec(-2.0f64..2.0, 11),
    ) {
        let m = build_matrices_sim(&phis, shape).unwrap();
        let dy = &seed[..shape.ly];
        let du = &seed[3..3 + shape.lu];
        let y_star = &seed[6..6 + shape.horizon];
        let inputs = ControlInputs { y_now: 0.0, u_prev: 0.0, y_star, dy_window: dy, du_prev: du };
        let a = mfapc_increment(&m, &inputs, &config_for(shape, lambda)).unwrap();
        let b = mfapc_increment(&m, &inputs, &config_for(shape, 2.0 * lambda)).unwrap();
        prop_assert!(b.du_vector.norm() <= a.du_vector.norm() * (1.0 + 1e-12) + 1e-15);
    }

    #[test]
    fn one_step_law_matches_mfac(
        ly in 1usize..=3,
        lu in 1usize..=3,
        lambda in 0.05f64..5.0,
        seed in prop::collection::vec(-1.5f64..1.5, 14),
    ) {
        let shape = PredictionShape::new(ly, lu, 1, 1);
        let phi = PgVector::from_slice(&seed[..ly + lu], ly).unwrap();
        let mut cfg = config_for(shape, lambda);
        cfg.rho = seed[6..6 + ly + lu].iter().map(|v| 0.1 + 0.5 * v.abs()).collect();
        let m = build_matrices_sim(std::slice::from_ref(&phi), shape).unwrap();
        let y_star = [seed[12] * 3.0];
        let dy = &seed[..ly];
        let du = &seed[3..3 + lu];
        let inputs = ControlInputs { y_now: seed[13], u_prev: 0.0, y_star: &y_star, dy_window: dy, du_prev: du };
        let a = mfapc_increment(&m, &inputs, &cfg).unwrap();
        let b = mfac_increment(&phi, &inputs, &cfg).unwrap();
        prop_assert!((a.du_applied - b.du_applied).abs() <= 1e-12);
    }

    #[test]
    fn forecasts_scale_linearly(
        theta in prop::collection::vec(-1.0f64..1.0, 3),
        hist in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 2), 3),
        alpha in -3.0f64..3.0,
        horizon in 0usize..6,
    ) {
        let pgs: Vec<PgVector> = hist.iter().map(|h| PgVector::from_slice(h, 1).unwrap()).collect();
        let scaled: Vec<PgVector> = pgs.iter().map(|p| p.scaled(alpha)).collect();
        let f = |h: Vec<PgVector>| {
            PgForecaster::new(3, 1.0, 1e4).unwrap().with_theta(theta.clone()).unwrap().with_history(h).forecast(horizon).unwrap()
        };
        for (a, b) in f(pgs).iter().zip(f(scaled)) {
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                prop_assert!((alpha * x - y).abs() <= 1e-9 * (1.0 + y.abs()));
            }
        }
    }

    #[test]
    fn summed_increments_reproduce_levels(
        ly in 1usize..=3,
        lu in 1usize..=3,
        phis in prop::collection::vec(prop::collection::vec(-0.5f64..0.5, 6), 100),
        inputs in prop::collection::vec(-1.0f64..1.0, 100),
    ) {
        // forward level recursion y(t+1) = y(t) + phi(t) . dH(t) against accumulated ffdl_step outputs
        let mut hist = IoHistory::for_orders(ly, lu);
        let mut y = 0.0;
        let mut ys = vec![0.0];
        let mut steps = Vec::new();
        for (row, u) in phis.iter().zip(&inputs) {
            hist.push_sample(y, *u);
            let phi = PgVector::from_slice(&row[..ly + lu], ly).unwrap();
            let dy = ffdl_step(&phi, &hist.regressor(ly, lu)).unwrap();
            steps.push(dy);
            let direct: f64 = row[..ly].iter().enumerate().map(|(m, p)| p * hist.delta_output(m)).sum::<f64>()
                + row[ly..ly + lu].iter().enumerate().map(|(m, p)| p * hist.delta_input(m)).sum::<f64>();
            y += direct;
            ys.push(y);
        }
        let mut acc = 0.0;
        for (i, s) in steps.iter().enumerate() {
            acc += s;
            prop_assert!((acc - ys[i + 1]).abs() <= 1e-12);
        }
    }
}

#[test]
fn forecaster_learns_ar2_stream() {
    // undamped oscillation: phi(t) = 2 cos(w) phi(t-1) - phi(t-2)
    let w = 1.0_f64;
    let theta_star = [2.0 * w.cos(), -1.0];
    let mut stream = vec![
        PgVector::new(&[1.0], &[0.0]).unwrap(),
        PgVector::new(&[w.cos()], &[w.sin()]).unwrap(),
    ];
    while stream.len() < 202 {
        let n = stream.len();
        let next = stream[n - 1].as_vector() * theta_star[0] + stream[n - 2].as_vector() * theta_star[1];
        stream.push(PgVector::from_slice(next.as_slice(), 1).unwrap());
    }

    let mut fc = PgForecaster::new(2, 1.0, 1e4).unwrap();
    let mut last_error = f64::INFINITY;
    for n in 0..201 {
        fc.update(&stream[n]).unwrap();
        let predicted = &fc.forecast(1).unwrap()[0];
        last_error = (predicted.as_vector() - stream[n + 1].as_vector()).amax();
    }
    assert!(last_error <= 1e-6, "one-step forecast error {last_error:e}, theta {:?}", fc.theta());
}
