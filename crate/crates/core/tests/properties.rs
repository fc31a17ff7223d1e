use proptest::prelude::*;

use bicopter::controller::{self, ControllerConfig, EstimatorState};
use bicopter::estimator;
use bicopter::harness::records::format_value;
use bicopter::model::{
    thrust_jacobian, thrust_jacobian_inv, thrust_vector, Mat2, PhysicalParams, PlantState, ThrustRoll, Vec2,
};
use bicopter::sim::{closed_loop_deriv, lyapunov_v4, v4_dot_analytic, AugmentedState};
use bicopter::trajectory::{
    hilbert_waypoints, time_parameterize, EllipseConfig, Reference, ReferenceSample, SetPoint, SpeedProfile,
};

fn plant_state() -> impl Strategy<Value = PlantState<f64>> {
    (
        (-2.0..2.0f64, -2.0..2.0f64, -1.0..1.0f64, -1.0..1.0f64),
        (5.0..15.0f64, -0.5..0.5f64, -1.0..1.0f64, -1.0..1.0f64),
    )
        .prop_map(|((x, y, vx, vy), (f, phi, fd, phid))| PlantState {
            position: Vec2::new(x, y),
            velocity: Vec2::new(vx, vy),
            thrust_roll: ThrustRoll::new(f, phi),
            thrust_roll_rate: ThrustRoll::new(fd, phid),
        })
}

fn params() -> impl Strategy<Value = PhysicalParams<f64>> {
    (0.3..3.0f64, 0.05..1.0f64).prop_map(|(m, j)| PhysicalParams::new(m, j, 9.81))
}

fn estimates() -> impl Strategy<Value = EstimatorState<f64>> {
    (0.3..3.0f64, 0.05..1.0f64, 0.3..3.0f64, 0.3..3.0f64).prop_map(|(a, b, c, d)| EstimatorState {
        mass_hat: a,
        inertia_hat: b,
        inv_mass_hat: c,
        inv_mass_aux_hat: d,
    })
}

fn mat_close(a: &Mat2<f64>, b: &Mat2<f64>, tol: f64) -> bool {
    a.sub(b).max_abs() <= tol
}

proptest! {
    #[test]
    fn jacobian_determinant_is_minus_thrust(f in -50.0..50.0f64, phi in -10.0..10.0f64) {
        let g = thrust_jacobian(ThrustRoll::new(f, phi));
        prop_assert!((g.det() + f).abs() <= 1e-12 * (1.0 + f.abs()));
    }

    #[test]
    fn jacobian_inverse_multiplies_to_identity(
        f in prop_oneof![-50.0..-1e-3f64, 1e-3..50.0f64],
        phi in -10.0..10.0f64,
    ) {
        let x3 = ThrustRoll::new(f, phi);
        let inv = thrust_jacobian_inv(x3, 1e-6).unwrap();
        let g = thrust_jacobian(x3);
        let tol = 1e-12 * (1.0 + f.abs() + 1.0 / f.abs());
        prop_assert!(mat_close(&g.mul_mat(&inv), &Mat2::identity(), tol));
        prop_assert!(mat_close(&inv.mul_mat(&g), &Mat2::identity(), tol));
    }

    #[test]
    fn thrust_vector_has_thrust_magnitude(f in -50.0..50.0f64, phi in -10.0..10.0f64) {
        let v = thrust_vector(ThrustRoll::new(f, phi));
        prop_assert!((v.norm() - f.abs()).abs() <= 1e-12 * (1.0 + f.abs()));
    }

    #[test]
    fn guard_rejects_small_thrust(f in -1e-6..1e-6f64, phi in -3.0..3.0f64) {
        prop_assume!(f.abs() < 1e-6);
        prop_assert!(thrust_jacobian_inv(ThrustRoll::new(f, phi), 1e-6).is_err());
        let state = PlantState::at_rest(Vec2::zero(), f);
        let r = ReferenceSample::at_rest(Vec2::new(1.0, 1.0));
        let est = EstimatorState { mass_hat: 1.0, inertia_hat: 0.1, inv_mass_hat: 1.0, inv_mass_aux_hat: 1.0 };
        prop_assert!(controller::control(&state, &est, &r, &ControllerConfig::default()).is_err());
    }

    #[test]
    fn lyapunov_levels_are_ordered_and_descent_is_nonpositive(
        s in plant_state(), est in estimates(), p in params(), t in 0.0..60.0f64,
    ) {
        let cfg = ControllerConfig::default();
        let r = SetPoint(Vec2::new(1.0, 1.0)).sample(t);
        let (_, diag) = controller::control(&s, &est, &r, &cfg).unwrap();
        let v = lyapunov_v4(&est, &p, &diag, &cfg);
        prop_assert!(0.0 <= v.v1 && v.v1 <= v.v2 && v.v2 <= v.v3 && v.v3 <= v.v4);
        prop_assert!(v4_dot_analytic(&diag, &p, &cfg) <= 0.0);
        prop_assert!(v.descent_terms.iter().all(|&d| d >= 0.0));
    }

    #[test]
    fn v4_derivative_along_flow_matches_closed_form(
        s in plant_state(), est in estimates(), p in params(), t in 0.0..60.0f64,
    ) {
        let cfg = ControllerConfig::default();
        let reference = EllipseConfig::<f64>::default();
        let v4_at = |a: &AugmentedState<f64>| {
            let r = reference.sample(a.t);
            let (_, diag) = controller::control(&a.plant, &a.est, &r, &cfg).unwrap();
            lyapunov_v4(&a.est, &p, &diag, &cfg).v4
        };
        let x = AugmentedState { plant: s, est, t };
        let eval = closed_loop_deriv(&x, &reference, &cfg, &p).unwrap();
        let analytic = v4_dot_analytic(&eval.diag, &p, &cfg);
        let shift = |h: f64| {
            let a = x.to_array();
            let d = eval.deriv.to_array();
            AugmentedState::from_array(std::array::from_fn(|i| a[i] + h * d[i]), t + h)
        };
        let h = 1e-5;
        let numeric = (v4_at(&shift(h)) - v4_at(&shift(-h))) / (2.0 * h);
        let scale = 1.0 + analytic.abs() + v4_at(&x) * 1e-3;
        prop_assert!((numeric - analytic).abs() <= 1e-4 * scale, "numeric {numeric} analytic {analytic}");
    }

    #[test]
    fn control_law_ignores_true_parameters(
        s in plant_state(), est in estimates(), p in params(), q in params(), t in 0.0..60.0f64,
    ) {
        let cfg = ControllerConfig::default();
        let reference = EllipseConfig::<f64>::default();
        let x = AugmentedState { plant: s, est, t };
        let a = closed_loop_deriv(&x, &reference, &cfg, &p).unwrap();
        let b = closed_loop_deriv(&x, &reference, &cfg, &q).unwrap();
        prop_assert_eq!(a.input, b.input);
        prop_assert_eq!(a.deriv.est, b.deriv.est);
        prop_assert_eq!(estimator::rates(&a.diag, &est, &cfg), a.deriv.est);
    }

    #[test]
    fn rate_target_cancels_thrust_layer(s in plant_state(), est in estimates(), t in 0.0..60.0f64) {
        // With x4 = ξ4 the rate error vanishes by construction.
        let cfg = ControllerConfig::default();
        let r = EllipseConfig::<f64>::default().sample(t);
        let (_, diag) = controller::control(&s, &est, &r, &cfg).unwrap();
        let mut on_target = s;
        on_target.thrust_roll_rate = ThrustRoll::from_column(diag.rate_target);
        let (_, again) = controller::control(&on_target, &est, &r, &cfg).unwrap();
        prop_assert!(again.rate_error.norm() <= 1e-9 * (1.0 + diag.rate_target.norm()));
    }

    #[test]
    fn hilbert_curve_is_a_self_avoiding_lattice_walk(order in 1u32..6, side in 0.1..100.0f64) {
        let pts = hilbert_waypoints(order, side).unwrap();
        let n = 1usize << order;
        prop_assert_eq!(pts.len(), n * n);
        let pitch = side / (n - 1) as f64;
        let mut seen = std::collections::HashSet::new();
        for p in &pts {
            let (i, j) = ((p.x / pitch).round() as i64, (p.y / pitch).round() as i64);
            prop_assert!(seen.insert((i, j)));
            prop_assert!(p.x >= -1e-9 && p.y >= -1e-9 && p.x <= side + 1e-9 && p.y <= side + 1e-9);
        }
        for w in pts.windows(2) {
            let d = w[1] - w[0];
            let axis_aligned = d.x.abs() < 1e-9 * side || d.y.abs() < 1e-9 * side;
            prop_assert!(axis_aligned);
            prop_assert!((d.norm() - pitch).abs() <= 1e-9 * side);
        }
    }

    #[test]
    fn speed_profile_respects_limits(length in 1e-3..50.0f64, v in 0.1..5.0f64, a in 0.1..5.0f64) {
        let prof = SpeedProfile::new(length, v, a);
        let dur = prof.duration();
        let expected = if length >= v * v / a { length / v + v / a } else { 2.0 * (length / a).sqrt() };
        prop_assert!((dur - expected).abs() <= 1e-12 * (1.0 + expected));
        let (s_end, v_end, _) = prof.eval(dur);
        prop_assert!((s_end - length).abs() <= 1e-9 * (1.0 + length));
        prop_assert!(v_end.abs() <= 1e-9);
        let n = 200;
        let mut prev = 0.0;
        for k in 0..=n {
            let tau = dur * k as f64 / n as f64;
            let (s, sv, sa) = prof.eval(tau);
            prop_assert!(sv <= v * (1.0 + 1e-12) && sv >= -1e-12);
            prop_assert!(sa.abs() <= a * (1.0 + 1e-12));
            prop_assert!(s >= prev - 1e-12);
            prev = s;
        }
    }

    #[test]
    fn piecewise_trajectory_is_continuous(order in 1u32..4, side in 0.5..8.0f64, v in 0.2..3.0f64, a in 0.2..3.0f64) {
        let pts = hilbert_waypoints(order, side).unwrap();
        let traj = time_parameterize(&pts, v, a).unwrap();
        prop_assert_eq!(traj.sample(0.0), pts[0]);
        let end = traj.sample(traj.duration);
        prop_assert!((end - *pts.last().unwrap()).norm() <= 1e-9 * side);
        let n = 2000;
        let dt = traj.duration / n as f64;
        for k in 0..n {
            let t = k as f64 * dt;
            let jump = (traj.sample(t + dt) - traj.sample(t)).norm();
            prop_assert!(jump <= v * dt * (1.0 + 1e-9) + 1e-12);
        }
    }

    #[test]
    fn ellipse_is_periodic(t in 0.0..500.0f64, omega in 0.05..2.0f64, psi in -3.0..3.0f64) {
        let cfg = EllipseConfig { psi, omega, a: 5.0, b: 3.0 };
        let p0 = bicopter::trajectory::ellipse_ref(t, &cfg);
        let p1 = bicopter::trajectory::ellipse_ref(t + cfg.period(), &cfg);
        prop_assert!((p1 - p0).norm() <= 1e-9 * (1.0 + t * omega));
        prop_assert!(bicopter::trajectory::ellipse_ref(0.0, &cfg).norm() <= 1e-12);
    }

    #[test]
    fn formatted_values_round_trip_to_nine_digits(v in proptest::num::f64::NORMAL) {
        let back: f64 = format_value(v).parse().unwrap();
        prop_assert!((back - v).abs() <= 5e-9 * v.abs());
    }
}
