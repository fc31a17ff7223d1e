//! Oracle suite behind `bicopter verify` and the acceptance tests.
//!
//! Each check returns a [`Check`]; informational rows are printed but never
//! fail the report. Nothing in the report depends on wall-clock time except
//! the pass/fail of the runtime budget, so a fixed seed gives identical
//! output.

use std::fmt;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::controller::{self, ControllerConfig, EstimatorState, Fault};
use crate::model::{
    gravity_drift, thrust_jacobian, thrust_jacobian_dot, thrust_jacobian_inv, thrust_jacobian_inv_dot, thrust_vector,
    Mat2, PhysicalParams, PlantState, ThrustRoll, Vec2,
};
use crate::sim::{
    closed_loop_deriv, estimate_error_bounds, rk4_step, AugmentedState, SimError, SimRecord, SimRun,
};
use crate::trajectory::{
    ellipse_ref, hilbert_waypoints, time_parameterize, EllipseConfig, PiecewiseTrajectory, ReferenceSample,
    SpeedProfile,
};

use super::preset::{builtin, BuiltReference, Preset, TrajectorySpec};
use super::records::{read_records, write_records, RunMetrics};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub id: String,
    pub name: String,
    pub passed: bool,
    pub informational: bool,
    pub detail: String,
}

impl Check {
    fn new(id: &str, name: &str, passed: bool, detail: String) -> Self {
        Self { id: id.into(), name: name.into(), passed, informational: false, detail }
    }

    fn info(id: &str, name: &str, detail: String) -> Self {
        Self { id: id.into(), name: name.into(), passed: true, informational: true, detail }
    }

    pub fn status(&self) -> &'static str {
        match (self.informational, self.passed) {
            (true, _) => "INFO",
            (false, true) => "PASS",
            (false, false) => "FAIL",
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:<4} {:<8} {:<44} {}", self.status(), self.id, self.name, self.detail)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub seed: u64,
    pub checks: Vec<Check>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "verify seed={}", self.seed)?;
        for c in &self.checks {
            writeln!(f, "{c}")?;
        }
        let failed = self.checks.iter().filter(|c| !c.passed).count();
        let counted = self.checks.iter().filter(|c| !c.informational).count();
        write!(f, "{} of {} checks passed", counted - failed, counted)
    }
}

fn preset(name: &str) -> Preset {
    builtin(name).expect("builtin preset")
}

fn timed_run(p: &Preset) -> (SimRun<f64>, Duration) {
    let start = Instant::now();
    let run = p.simulate().expect("builtin presets are valid");
    (run, start.elapsed())
}

// ---------------------------------------------------------------------------
// Lyapunov descent

/// Agreement of finite-difference `dV4/dt` with the closed form.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DescentStats {
    /// Samples with a full 5-point stencil (minus excluded ones).
    pub samples: usize,
    /// Agreeing with the 5-point (4th-order) central stencil.
    pub agree_5pt: usize,
    /// Agreeing with the recorded 3-point central difference.
    pub agree_3pt: usize,
    /// 3-point agreement restricted to `t >= 1 s`.
    pub samples_after_1s: usize,
    pub agree_3pt_after_1s: usize,
    /// Largest `V4[k+1] - V4[k]`.
    pub max_increase: f64,
    /// Largest closed-form `V̇4`; never positive.
    pub max_analytic: f64,
}

impl DescentStats {
    pub fn fraction_5pt(&self) -> f64 {
        self.agree_5pt as f64 / self.samples.max(1) as f64
    }

    pub fn fraction_3pt(&self) -> f64 {
        self.agree_3pt as f64 / self.samples.max(1) as f64
    }

    pub fn fraction_3pt_after_1s(&self) -> f64 {
        self.agree_3pt_after_1s as f64 / self.samples_after_1s.max(1) as f64
    }
}

pub fn descent_tolerance(analytic: f64) -> f64 {
    1e-4f64.max(1e-3 * analytic.abs())
}

/// `exclude(t0, t1)` drops samples whose stencil spans `[t0, t1]` and
/// increments across it.
pub fn descent_stats(records: &[SimRecord<f64>], exclude: impl Fn(f64, f64) -> bool) -> DescentStats {
    let mut s = DescentStats { max_increase: f64::NEG_INFINITY, max_analytic: f64::NEG_INFINITY, ..Default::default() };
    let n = records.len();
    for w in records.windows(2) {
        if !exclude(w[0].t, w[1].t) {
            s.max_increase = s.max_increase.max(w[1].v4 - w[0].v4);
        }
    }
    for r in records {
        s.max_analytic = s.max_analytic.max(r.v4_dot_analytic);
    }
    for k in 2..n.saturating_sub(2) {
        if exclude(records[k - 2].t, records[k + 2].t) {
            continue;
        }
        let h = (records[k + 2].t - records[k - 2].t) / 4.0;
        let a = records[k].v4_dot_analytic;
        let tol = descent_tolerance(a);
        let fd5 = (records[k - 2].v4 - 8.0 * records[k - 1].v4 + 8.0 * records[k + 1].v4 - records[k + 2].v4) / (12.0 * h);
        let ok3 = (records[k].v4_dot_findiff - a).abs() <= tol;
        s.samples += 1;
        s.agree_5pt += usize::from((fd5 - a).abs() <= tol);
        s.agree_3pt += usize::from(ok3);
        if records[k].t >= 1.0 {
            s.samples_after_1s += 1;
            s.agree_3pt_after_1s += usize::from(ok3);
        }
    }
    s
}

fn no_exclusion(_: f64, _: f64) -> bool {
    false
}

const DESCENT_FRACTION: f64 = 0.999;
const MONOTONE_SLACK: f64 = 1e-6;

/// Criterion 1 on an `ellipse-slow` run.
pub fn lyapunov_descent(run: &SimRun<f64>, elapsed: Duration) -> Vec<Check> {
    let s = descent_stats(&run.records, no_exclusion);
    let within_budget = elapsed <= Duration::from_secs(10);
    let ok = run.is_ok()
        && s.fraction_5pt() >= DESCENT_FRACTION
        && s.max_increase <= MONOTONE_SLACK
        && s.max_analytic <= 0.0
        && within_budget;
    vec![
        Check::new(
            "C1",
            "Lyapunov descent on ellipse-slow",
            ok,
            format!(
                "agree {:.4}% of {} samples (5-point), max dV4 {:.2e}, runtime within 10 s: {}",
                100.0 * s.fraction_5pt(),
                s.samples,
                s.max_increase,
                within_budget
            ),
        ),
        Check::new(
            "C1.3pt",
            "3-point stencil agrees once t >= 1 s",
            s.fraction_3pt_after_1s() >= DESCENT_FRACTION,
            format!(
                "{:.4}% after 1 s ({:.4}% overall, first-second transient outruns the 3-point stencil)",
                100.0 * s.fraction_3pt_after_1s(),
                100.0 * s.fraction_3pt()
            ),
        ),
    ]
}

/// Same oracle with the `Ψ` sign flipped; must fail.
pub fn mutation_sensitivity() -> Check {
    let mut p = preset("ellipse-slow");
    p.duration = Some(5.0);
    p.controller.fault = Fault::FlipDriftRegressor;
    let run = p.simulate().expect("valid preset");
    let s = descent_stats(&run.records, no_exclusion);
    let detected = !run.is_ok() || s.fraction_5pt() < DESCENT_FRACTION || s.max_increase > MONOTONE_SLACK;
    Check::new(
        "M1",
        "flipped drift regressor breaks descent oracle",
        detected,
        format!("agreement drops to {:.2}%", 100.0 * s.fraction_5pt()),
    )
}

/// Descent on the remaining smooth presets and, away from acceleration
/// switches, on the Hilbert pair.
pub fn descent_other_presets() -> Vec<Check> {
    let mut out = Vec::new();
    for name in ["regulation", "ellipse-fast"] {
        let run = preset(name).simulate().expect("valid preset");
        let s = descent_stats(&run.records, no_exclusion);
        out.push(Check::new(
            "I.desc",
            &format!("V4 non-increasing on {name}"),
            run.is_ok() && s.max_increase <= MONOTONE_SLACK && s.max_analytic <= 0.0,
            format!("max dV4 {:.2e}, 5-point agreement {:.3}%", s.max_increase, 100.0 * s.fraction_5pt()),
        ));
    }
    for name in ["hilbert-slow", "hilbert-fast"] {
        let p = preset(name);
        let BuiltReference::Path(path) = p.trajectory.build().expect("valid") else {
            unreachable!("hilbert presets build a path")
        };
        let breaks = path.breakpoints();
        let run = p.simulate().expect("valid preset");
        let crosses = |t0: f64, t1: f64| breaks.iter().any(|&b| b >= t0 - 1e-9 && b <= t1 + 1e-9);
        let s = descent_stats(&run.records, crosses);
        let mut jumps = 0;
        for w in run.records.windows(2) {
            if crosses(w[0].t, w[1].t) && w[1].v4 > w[0].v4 + MONOTONE_SLACK {
                jumps += 1;
            }
        }
        out.push(Check::new(
            "I.desc",
            &format!("V4 non-increasing between switches, {name}"),
            run.is_ok() && s.max_increase <= MONOTONE_SLACK,
            format!("max dV4 {:.2e}; {jumps} of {} acceleration switches raise V4", s.max_increase, breaks.len()),
        ));
    }
    out
}

// ---------------------------------------------------------------------------
// Convergence and comparison

pub fn regulation() -> Check {
    let run = preset("regulation").simulate().expect("valid preset");
    let late_max = run.records.iter().filter(|r| r.t >= 60.0).map(|r| r.error_norms[0]).fold(0.0, f64::max);
    let v0 = run.records.first().map_or(f64::NAN, |r| r.v4);
    let vt = run.records.last().map_or(f64::NAN, |r| r.v4);
    let reached_end = run.records.last().is_some_and(|r| (r.t - 120.0).abs() < 1e-9);
    Check::new(
        "C2",
        "regulation to (1, 1)",
        run.is_ok() && reached_end && late_max < 1e-3 && vt < 0.05 * v0,
        format!("max |e1| after 60 s {late_max:.2e} m, V4(120)/V4(0) = {:.2e}", vt / v0),
    )
}

fn pair_metrics(slow: &Preset, fast: &Preset) -> (RunMetrics, RunMetrics) {
    let (a, b) = rayon::join(|| slow.simulate(), || fast.simulate());
    (
        RunMetrics::from_run(&slow.name, &a.expect("valid preset")),
        RunMetrics::from_run(&fast.name, &b.expect("valid preset")),
    )
}

fn ordering_check(id: &str, name: &str, slow: &RunMetrics, fast: &RunMetrics) -> Check {
    let ok = slow.error.is_none()
        && fast.error.is_none()
        && fast.rmse_e1_late < slow.rmse_e1_late
        && fast.max_input > slow.max_input;
    Check::new(
        id,
        name,
        ok,
        format!(
            "late rmse fast {:.3e} vs slow {:.3e} m, max |u| fast {:.3e} vs slow {:.3e}",
            fast.rmse_e1_late, slow.rmse_e1_late, fast.max_input, slow.max_input
        ),
    )
}

fn with_side(mut p: Preset, side_m: f64) -> Preset {
    if let TrajectorySpec::Hilbert { side, .. } = &mut p.trajectory {
        *side = side_m;
    }
    p
}

/// Hilbert side at which the fast/slow pair is compared.
pub const COMPARISON_SIDE: f64 = 2.0;

/// Criterion 3 (ellipse and Hilbert pairs) plus the default-size Hilbert
/// pair as an informational row.
pub fn fast_vs_slow() -> Vec<Check> {
    let (es, ef) = pair_metrics(&preset("ellipse-slow"), &preset("ellipse-fast"));
    let (hs, hf) = pair_metrics(
        &with_side(preset("hilbert-slow"), COMPARISON_SIDE),
        &with_side(preset("hilbert-fast"), COMPARISON_SIDE),
    );
    let (ds, df) = pair_metrics(&preset("hilbert-slow"), &preset("hilbert-fast"));
    let default_holds = df.rmse_e1_late < ds.rmse_e1_late && df.max_input > ds.max_input;
    vec![
        ordering_check("C3.ell", "fast adaptation: less error, more effort (ellipse)", &es, &ef),
        ordering_check("C3.hil", "same on Hilbert pair, 2 m square", &hs, &hf),
        Check::info(
            "C3.hil4",
            "Hilbert pair at the default 4 m square",
            format!(
                "ordering {}: late rmse fast {:.3e} vs slow {:.3e} m",
                if default_holds { "holds" } else { "reversed" },
                df.rmse_e1_late,
                ds.rmse_e1_late
            ),
        ),
    ]
}

pub fn non_convergence(run: &SimRun<f64>) -> Check {
    let p = preset("ellipse-slow");
    let Some(last) = run.records.last() else {
        return Check::new("C9", "estimates stay off their true values", false, "no records".into());
    };
    let e = last.est;
    let offsets = [
        (e.mass_hat - p.params.mass).abs(),
        (e.inertia_hat - p.params.inertia).abs(),
        (e.inv_mass_hat - p.params.theta1()).abs(),
    ];
    let off = offsets.iter().any(|&d| d > 0.05);
    let (bounded, worst) = estimates_bounded(run, &p.params, &p.controller);
    Check::new(
        "C9",
        "estimates stay off their true values",
        run.is_ok() && off && bounded,
        format!(
            "|p1-m| {:.2e}, |p2-J| {:.2e}, |th1-1/m| {:.2e}; worst bound usage {:.3}",
            offsets[0], offsets[1], offsets[2], worst
        ),
    )
}

/// Every estimate inside the ball implied by `V4 <= V4(0)`; returns the
/// largest ratio of offset to radius.
pub fn estimates_bounded(run: &SimRun<f64>, params: &PhysicalParams<f64>, cfg: &ControllerConfig<f64>) -> (bool, f64) {
    let Some(first) = run.records.first() else { return (false, f64::NAN) };
    let radius = estimate_error_bounds(first.v4, params, cfg);
    let truth = [params.mass, params.inertia, params.theta1(), params.theta1()];
    let mut worst: f64 = 0.0;
    for r in &run.records {
        for ((v, t), rad) in r.est.to_array().iter().zip(truth).zip(radius) {
            worst = worst.max((v - t).abs() / rad);
        }
    }
    (worst <= 1.0 + 1e-9, worst)
}

pub fn bounded_on_presets() -> Check {
    let mut worst_all: f64 = 0.0;
    let mut ok = true;
    for name in ["ellipse-slow", "ellipse-fast", "hilbert-slow", "hilbert-fast", "regulation"] {
        let p = preset(name);
        let run = p.simulate().expect("valid preset");
        if p.trajectory_is_smooth() {
            let (b, w) = estimates_bounded(&run, &p.params, &p.controller);
            ok &= b && run.is_ok();
            worst_all = worst_all.max(w);
        } else {
            ok &= run.is_ok() && run.records.iter().all(|r| r.est.to_array().iter().all(|v| v.is_finite()));
        }
    }
    Check::new(
        "I.bound",
        "estimates inside V4(0) ball on smooth presets",
        ok,
        format!("worst radius usage {worst_all:.3}"),
    )
}

impl Preset {
    /// True when every reference derivative the controller uses is continuous.
    pub fn trajectory_is_smooth(&self) -> bool {
        !matches!(self.trajectory, TrajectorySpec::Hilbert { .. })
    }
}

// ---------------------------------------------------------------------------
// Algebra

fn random_thrust_roll(rng: &mut ChaCha8Rng, min_thrust: f64) -> ThrustRoll<f64> {
    let mag = rng.random_range(min_thrust..30.0);
    let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    ThrustRoll::new(sign * mag, rng.random_range(-std::f64::consts::PI..std::f64::consts::PI))
}

fn random_vec(rng: &mut ChaCha8Rng, scale: f64) -> Vec2<f64> {
    Vec2::new(rng.random_range(-scale..scale), rng.random_range(-scale..scale))
}

fn random_state(rng: &mut ChaCha8Rng, min_thrust: f64) -> PlantState<f64> {
    PlantState {
        position: random_vec(rng, 5.0),
        velocity: random_vec(rng, 3.0),
        thrust_roll: random_thrust_roll(rng, min_thrust),
        thrust_roll_rate: ThrustRoll::new(rng.random_range(-5.0..5.0), rng.random_range(-3.0..3.0)),
    }
}

fn random_estimates(rng: &mut ChaCha8Rng) -> EstimatorState<f64> {
    EstimatorState::from_array([
        rng.random_range(-2.0..2.0),
        rng.random_range(-2.0..2.0),
        rng.random_range(-2.0..2.0),
        rng.random_range(-2.0..2.0),
    ])
}

fn random_reference(rng: &mut ChaCha8Rng) -> ReferenceSample<f64> {
    ReferenceSample {
        position: random_vec(rng, 5.0),
        velocity: random_vec(rng, 1.0),
        accel: random_vec(rng, 1.0),
        jerk: random_vec(rng, 1.0),
        snap: random_vec(rng, 1.0),
    }
}

fn random_config(rng: &mut ChaCha8Rng) -> ControllerConfig<f64> {
    let mut c = ControllerConfig::with_adaptation_rate(if rng.random_bool(0.5) { 0.1 } else { 1.0 });
    c.feedforward = rng.random_bool(0.7);
    if rng.random_bool(0.2) {
        c.sign_theta1 = -1.0;
    }
    c
}

/// The rate-layer bracket `B` with `ξ4 = -𝒢⁻¹ B`, written out from the error
/// definitions without touching the controller's intermediates.
pub fn reference_bracket(
    s: &PlantState<f64>,
    est: &EstimatorState<f64>,
    r: &ReferenceSample<f64>,
    c: &ControllerConfig<f64>,
) -> Vec2<f64> {
    let r = if c.feedforward { *r } else { ReferenceSample::at_rest(r.position) };
    let f2 = gravity_drift(c.gravity);
    let g = thrust_vector(s.thrust_roll);
    let s1 = c.sign_theta1;
    let e1 = s.position - r.position;
    let e2 = s.velocity + e1 * c.k1 - r.velocity;
    let phi = e1 + f2 + (s.velocity - r.velocity) * c.k1 - r.accel;
    let p1_rate = c.gamma1 * s1 * e2.dot(phi);
    let e3 = g + phi * est.mass_hat + e2 * (c.k2 * s1);
    let phi_rate_known = s.velocity - r.velocity + f2 * c.k1 - r.accel * c.k1 - r.jerk;
    let e2_rate_known = f2 + (s.velocity - r.velocity) * c.k1 - r.accel;
    let shaped = e2 + g * (c.k1 * est.mass_hat + c.k2 * s1);
    phi * p1_rate + phi_rate_known * est.mass_hat + e2_rate_known * (c.k2 * s1) + shaped * est.inv_mass_hat + e3 * c.k3
}

pub const ALGEBRA_SAMPLES: usize = 10_000;

pub fn algebra(seed: u64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut det_worst: f64 = 0.0;
    for _ in 0..ALGEBRA_SAMPLES {
        let x3 = random_thrust_roll(&mut rng, 1e-3);
        let det = thrust_jacobian(x3).det();
        det_worst = det_worst.max((det + x3.thrust).abs() / x3.thrust.abs());
    }

    let mut bracket_worst: f64 = 0.0;
    for _ in 0..ALGEBRA_SAMPLES {
        let s = random_state(&mut rng, 0.1);
        let est = random_estimates(&mut rng);
        let r = random_reference(&mut rng);
        let c = random_config(&mut rng);
        let xi4 = controller::rate_target(&s, &est, &r, &c).expect("guarded state");
        let b = reference_bracket(&s, &est, &r, &c);
        let resid = thrust_jacobian(s.thrust_roll).mul_vec(xi4) + b;
        bracket_worst = bracket_worst.max(resid.norm() / b.norm().max(1e-300));
    }

    let h = 1e-5;
    let mut dot_worst: f64 = 0.0;
    let mut inv_dot_worst: f64 = 0.0;
    let rel = |fd: Mat2<f64>, exact: Mat2<f64>| fd.sub(&exact).max_abs() / exact.max_abs().max(1.0);
    for _ in 0..ALGEBRA_SAMPLES {
        let x3 = random_thrust_roll(&mut rng, 0.5);
        let x4 = ThrustRoll::new(rng.random_range(-5.0..5.0), rng.random_range(-3.0..3.0));
        let fwd = ThrustRoll::from_column(x3.column() + x4.column() * h);
        let back = ThrustRoll::from_column(x3.column() - x4.column() * h);
        let fd = thrust_jacobian(fwd).sub(&thrust_jacobian(back)).scale(0.5 / h);
        dot_worst = dot_worst.max(rel(fd, thrust_jacobian_dot(x3, x4)));
        let inv = |x| thrust_jacobian_inv(x, 1e-6).expect("guarded");
        let fd_inv = inv(fwd).sub(&inv(back)).scale(0.5 / h);
        inv_dot_worst = inv_dot_worst.max(rel(fd_inv, thrust_jacobian_inv_dot(x3, x4, 1e-6).expect("guarded")));
    }

    vec![
        Check::new(
            "C4a",
            "det of thrust Jacobian equals -F",
            det_worst <= 1e-12,
            format!("worst relative error {det_worst:.2e} over {ALGEBRA_SAMPLES} states"),
        ),
        Check::new(
            "C4b",
            "Jacobian times rate target gives -bracket",
            bracket_worst <= 1e-10,
            format!("worst relative residual {bracket_worst:.2e} over {ALGEBRA_SAMPLES} states"),
        ),
        Check::new(
            "C4c",
            "Jacobian rates match central differences",
            dot_worst <= 1e-8 && inv_dot_worst <= 1e-8,
            format!("h = 1e-5: worst {dot_worst:.2e} (direct), {inv_dot_worst:.2e} (inverse)"),
        ),
    ]
}

// ---------------------------------------------------------------------------
// Firewall, integrator, guard, generator

pub fn firewall(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_f11e);
    let light = PhysicalParams::new(1.0, 0.2, 9.81);
    let heavy = PhysicalParams::new(3.0, 0.7, 9.81);
    let reference = BuiltReference::Ellipse(EllipseConfig::default());
    let mut identical = true;
    let n = 1000;
    for _ in 0..n {
        let s = AugmentedState { plant: random_state(&mut rng, 0.1), est: random_estimates(&mut rng), t: rng.random_range(0.0..100.0) };
        let c = random_config(&mut rng);
        let a = closed_loop_deriv(&s, &reference, &c, &light).expect("guarded");
        let b = closed_loop_deriv(&s, &reference, &c, &heavy).expect("guarded");
        let bits = |e: &crate::sim::ClosedLoopEval<f64>| {
            let mut v = vec![e.input.thrust_accel.to_bits(), e.input.moment.to_bits()];
            v.extend(e.deriv.est.to_array().iter().map(|x| x.to_bits()));
            v
        };
        identical &= bits(&a) == bits(&b);
    }
    Check::new(
        "C5",
        "control and adaptation blind to (m, J)",
        identical,
        format!("(1, 0.2) vs (3, 0.7) on {n} random states: {}", if identical { "bit-identical" } else { "differ" }),
    )
}

/// Observed order from positions at `t = 1 s` with `dt`, `dt/2`, `dt/4`.
pub fn observed_order(base: &Preset, dts: [f64; 3]) -> f64 {
    let end = |dt: f64| {
        let mut p = base.clone();
        p.dt = dt;
        p.output_stride = 1;
        p.duration = Some(1.0);
        let run = p.simulate().expect("valid preset");
        assert!(run.is_ok(), "{:?}", run.error);
        run.records.last().expect("records").state.position
    };
    let x: Vec<Vec2<f64>> = dts.iter().map(|&dt| end(dt)).collect();
    ((x[0] - x[1]).norm() / (x[1] - x[2]).norm()).log2()
}

/// Criterion 6 on the constant-reference preset, so the measured order is
/// the integrator's alone.
pub fn integrator_order() -> Check {
    let order = observed_order(&preset("regulation"), [2e-3, 1e-3, 5e-4]);
    Check::new(
        "C6",
        "closed-loop RK4 order at t = 1 s (regulation)",
        order >= 3.5,
        format!("observed order {order:.3} from dt = 2e-3, 1e-3, 5e-4"),
    )
}

/// Same measurement with a moving reference sampled at stage times.
pub fn integrator_order_tracking() -> Vec<Check> {
    let coarse = observed_order(&preset("ellipse-slow"), [2e-3, 1e-3, 5e-4]);
    let fine = observed_order(&preset("ellipse-slow"), [5e-4, 2.5e-4, 1.25e-4]);
    vec![
        Check::info(
            "C6.ell",
            "same on ellipse-slow, dt = 2e-3 .. 5e-4",
            format!("observed order {coarse:.3}; error terms nearly cancel near dt = 2e-3"),
        ),
        Check::new(
            "C6.ellf",
            "ellipse-slow order, dt = 5e-4 .. 1.25e-4",
            fine >= 3.5,
            format!("observed order {fine:.3}"),
        ),
    ]
}

pub fn scalar_rk4_order() -> Check {
    let err = |dt: f64| {
        let mut y = [1.0f64];
        let n = (1.0 / dt).round() as usize;
        for k in 0..n {
            y = rk4_step(k as f64 * dt, &y, dt, |_, y| Ok::<_, ()>([-y[0]])).expect("infallible");
        }
        (y[0] - (-1.0f64).exp()).abs()
    };
    let one = rk4_step(0.0, &[1.0f64], 0.1, |_, y| Ok::<_, ()>([-y[0]])).expect("infallible")[0];
    let ratio = err(0.1) / err(0.05);
    Check::new(
        "I.rk4",
        "RK4 on y' = -y",
        (one - (-0.1f64).exp()).abs() < 1e-7 && (14.0..18.0).contains(&ratio),
        format!("one-step error {:.2e}, halving ratio {ratio:.2}", (one - (-0.1f64).exp()).abs()),
    )
}

/// Closed-loop derivative against a one-sided difference of a tiny RK4
/// step, at states visited by `ellipse-slow`. The gap must be small and
/// halve with the step.
pub fn derivative_consistency(run: &SimRun<f64>) -> Check {
    let p = preset("ellipse-slow");
    let reference = p.trajectory.build().expect("valid");
    let c = p.controller;
    let f = |t: f64, y: &[f64; 12]| {
        closed_loop_deriv(&AugmentedState::from_array(*y, t), &reference, &c, &p.params).map(|e| e.deriv.to_array())
    };
    let gap = |s: &AugmentedState<f64>, h: f64| {
        let y = s.to_array();
        let d = f(s.t, &y).expect("guarded");
        let next = rk4_step(s.t, &y, h, f).expect("guarded");
        let scale = d.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        (0..12).map(|i| ((next[i] - y[i]) / h - d[i]).abs() / scale).fold(0.0, f64::max)
    };
    let h = 1e-6;
    let (mut worst, mut sum_h, mut sum_half) = (0.0f64, 0.0, 0.0);
    let mut n = 0;
    for r in run.records.iter().step_by(997) {
        let s = AugmentedState { plant: r.state, est: r.est, t: r.t };
        let g = gap(&s, h);
        worst = worst.max(g);
        sum_h += g;
        sum_half += gap(&s, h / 2.0);
        n += 1;
    }
    let ratio = sum_h / sum_half;
    Check::new(
        "I.deriv",
        "closed-loop derivative vs RK4 micro-step",
        n > 0 && worst < 1e-3 && (1.8..2.2).contains(&ratio),
        format!("worst relative gap {worst:.2e} at dt = 1e-6, halving dt shrinks it {ratio:.2}x ({n} states)"),
    )
}

pub fn singular_guard() -> Check {
    let p = preset("singular-hover");
    let run = p.simulate().expect("valid preset");
    let finite = run.records.iter().all(|r| r.state.to_array().iter().chain(r.est.to_array().iter()).all(|v| v.is_finite()));
    let (tripped, at) = match run.error {
        Some(SimError::SingularGuardTripped { t, .. }) => (true, t),
        _ => (false, f64::NAN),
    };
    let eps = p.controller.eps_f;
    Check::new(
        "C7",
        "singular guard trips cleanly",
        tripped && finite && run.min_thrust_evaluated >= eps,
        format!("tripped at t = {at:.3} s, smallest evaluated |F| {:.3e} N >= eps_f {eps:.0e}", run.min_thrust_evaluated),
    )
}

pub fn hilbert_generator() -> Vec<Check> {
    let w = hilbert_waypoints(2, 3.0f64).expect("order 2");
    let mut cells: Vec<(i64, i64)> = w.iter().map(|p| (p.x.round() as i64, p.y.round() as i64)).collect();
    let on_grid = w.iter().all(|p| p.x == p.x.round() && p.y == p.y.round());
    let unit_steps = w.windows(2).all(|s| {
        let d = s[1] - s[0];
        d.x.abs() + d.y.abs() == 1.0 && (d.x == 0.0 || d.y == 0.0)
    });
    cells.sort_unstable();
    cells.dedup();
    let all_nodes = cells.len() == 16 && cells.iter().all(|&(x, y)| (0..4).contains(&x) && (0..4).contains(&y));

    let closed_form = |l: f64, v: f64, a: f64| if l >= v * v / a { l / v + v / a } else { 2.0 * (l / a).sqrt() };
    let mut exact = true;
    for (side, v, a) in [(3.0, 1.0, 1.0), (4.0, 1.0, 1.0), (1.0, 1.0, 1.0), (8.0, 0.7, 1.3)] {
        let path = time_parameterize(&hilbert_waypoints(2, side).expect("order 2"), v, a).expect("valid");
        for s in &path.segments {
            exact &= s.profile.duration() == closed_form(s.profile.length, v, a);
        }
    }
    let long = SpeedProfile::new(4.0, 1.0, 1.0);
    exact &= long.duration() == 5.0 && long.cruise_time == 3.0;

    vec![
        Check::new(
            "C8a",
            "order-2 Hilbert visits 16 nodes once",
            on_grid && unit_steps && all_nodes && w.len() == 16,
            format!("{} waypoints, {} distinct nodes, unit L1 steps: {unit_steps}", w.len(), cells.len()),
        ),
        Check::new(
            "C8b",
            "segment durations equal closed form",
            exact,
            "L = 4, v = a = 1 gives 5 s with a 3 s cruise".into(),
        ),
    ]
}

pub fn trajectory_invariants() -> Vec<Check> {
    let cfg = EllipseConfig::<f64>::default();
    let period = cfg.period();
    let periodic = (0..1000).all(|i| {
        let t = i as f64 * 0.37;
        (ellipse_ref(t, &cfg) - ellipse_ref(t + period, &cfg)).norm() < 1e-9
    });

    let (v_max, a_max) = (1.0, 1.0);
    let mut ok = true;
    let mut detail = String::new();
    for order in 1..=3 {
        let side = 4.0;
        let w = hilbert_waypoints(order, side).expect("order >= 1");
        let path: PiecewiseTrajectory<f64> = time_parameterize(&w, v_max, a_max).expect("valid");
        let pitch = side / ((1u64 << order) - 1) as f64;
        let expected_len = pitch * ((1u64 << (2 * order)) - 1) as f64;
        let dt = 1e-3;
        let n = (path.duration / dt).ceil() as usize + 10;
        let mut max_jump: f64 = 0.0;
        let mut max_speed: f64 = 0.0;
        let mut max_acc: f64 = 0.0;
        let mut prev = path.sample(-dt);
        for k in 0..=n {
            let p = path.sample(k as f64 * dt);
            max_jump = max_jump.max((p - prev).norm());
            max_speed = max_speed.max(path.sample_full(k as f64 * dt).velocity.norm());
            if k > 0 {
                max_acc = max_acc.max(path.sample_full(k as f64 * dt).accel.norm());
            }
            prev = p;
        }
        let this = max_jump < v_max * dt * 1.01
            && (path.length() - expected_len).abs() < 1e-9 * expected_len
            && max_speed <= v_max + 1e-12
            && max_acc <= a_max + 1e-12;
        ok &= this;
        if order == 2 {
            detail = format!("order 2: max step {max_jump:.3e} m per ms, length {:.4} m", path.length());
        }
    }
    vec![
        Check::new("I.ell", "ellipse periodic in 2 pi / omega", periodic, format!("period {period:.4} s")),
        Check::new("I.path", "Hilbert path continuous, limits respected", ok, detail),
    ]
}

pub fn csv_round_trip() -> Check {
    let mut p = preset("ellipse-slow");
    p.duration = Some(0.5);
    let emit = || {
        let run = p.simulate().expect("valid preset");
        let mut buf = Vec::new();
        write_records(&mut buf, &run.records).expect("in-memory write");
        buf
    };
    let a = emit();
    let b = emit();
    let back = read_records(a.as_slice()).expect("own output parses");
    let mut c = Vec::new();
    write_records(&mut c, &back).expect("in-memory write");
    Check::new(
        "I.csv",
        "CSV deterministic and round-trips",
        a == b && a == c,
        format!("{} rows, {} bytes", back.len(), a.len()),
    )
}

/// Every check, in report order.
pub fn verify(seed: u64) -> Report {
    let mut checks = Vec::new();
    let slow = preset("ellipse-slow");
    let (run, elapsed) = timed_run(&slow);
    checks.extend(lyapunov_descent(&run, elapsed));
    checks.push(regulation());
    checks.extend(fast_vs_slow());
    checks.extend(algebra(seed));
    checks.push(firewall(seed));
    checks.push(integrator_order());
    checks.extend(integrator_order_tracking());
    checks.push(singular_guard());
    checks.extend(hilbert_generator());
    checks.push(non_convergence(&run));
    checks.push(mutation_sensitivity());
    checks.extend(descent_other_presets());
    checks.push(bounded_on_presets());
    checks.push(scalar_rk4_order());
    checks.push(derivative_consistency(&run));
    checks.extend(trajectory_invariants());
    checks.push(csv_round_trip());
    Report { seed, checks }
}
