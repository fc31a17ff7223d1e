//! Fixed-step closed-loop simulation and the Lyapunov monitor.
//!
//! The augmented state is the eight plant states plus the four estimates.
//! True physical parameters enter only [`plant_deriv`], [`lyapunov_v4`] and
//! [`v4_dot_analytic`]; the controller sees [`ControllerConfig`] alone.

use thiserror::Error;

use crate::controller::{self, ControllerConfig, ControllerDiagnostics, EstimatorState};
use crate::estimator;
use crate::model::{plant_deriv, ControlInput, ModelError, PhysicalParams, PlantState, Vec2};
use crate::trajectory::Reference;
use crate::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("singular input map at t = {t} s (|F| = {thrust:e} below eps_f = {eps:e})")]
    SingularGuardTripped { t: f64, thrust: f64, eps: f64 },
    #[error("non-finite {field} at t = {t} s")]
    NonFiniteState { t: f64, field: &'static str },
    #[error("invalid setup: {0}")]
    InvalidSetup(String),
}

/// Plant, estimates and time.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AugmentedState<T> {
    pub plant: PlantState<T>,
    pub est: EstimatorState<T>,
    pub t: T,
}

impl<T: Scalar> AugmentedState<T> {
    pub const DIM: usize = 12;

    /// Plant states in CSV order followed by the four estimates.
    pub fn to_array(&self) -> [T; 12] {
        let p = self.plant.to_array();
        let e = self.est.to_array();
        [p[0], p[1], p[2], p[3], p[4], p[5], p[6], p[7], e[0], e[1], e[2], e[3]]
    }

    pub fn from_array(a: [T; 12], t: T) -> Self {
        Self {
            plant: PlantState::from_array([a[0], a[1], a[2], a[3], a[4], a[5], a[6], a[7]]),
            est: EstimatorState::from_array([a[8], a[9], a[10], a[11]]),
            t,
        }
    }

    pub fn non_finite_field(&self) -> Option<&'static str> {
        if let Some(f) = self.plant.non_finite_field() {
            return Some(f);
        }
        const NAMES: [&str; 4] = ["mass_hat", "inertia_hat", "inv_mass_hat", "inv_mass_aux_hat"];
        self.est.to_array().iter().position(|v| !v.is_finite()).map(|i| NAMES[i])
    }
}

/// `V1..V4` and the four terms of the closed-form `V̇4`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LyapunovBreakdown<T> {
    pub v1: T,
    pub v2: T,
    pub v3: T,
    pub v4: T,
    /// `k1|e1|²`, `k2|θ1||e2|²`, `k3|e3|²`, `k4(|θ2| e4_roll² + e4_thrust²)`;
    /// `V̇4` is minus their sum.
    pub descent_terms: [T; 4],
}

/// One output sample.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SimRecord<T> {
    pub t: T,
    pub state: PlantState<T>,
    pub input: ControlInput<T>,
    pub reference: Vec2<T>,
    /// `|e1|..|e4|`.
    pub error_norms: [T; 4],
    pub est: EstimatorState<T>,
    pub v4: T,
    pub v4_dot_analytic: T,
    /// Central difference of `v4` over neighbouring records (one-sided at
    /// the ends).
    pub v4_dot_findiff: T,
}

impl<T: Scalar> SimRecord<T> {
    pub fn to_row(&self) -> [T; 24] {
        let s = self.state.to_array();
        let e = self.est.to_array();
        [
            self.t,
            s[0],
            s[1],
            s[2],
            s[3],
            s[4],
            s[5],
            s[6],
            s[7],
            self.input.thrust_accel,
            self.input.moment,
            self.reference.x,
            self.reference.y,
            self.error_norms[0],
            self.error_norms[1],
            self.error_norms[2],
            self.error_norms[3],
            e[0],
            e[1],
            e[2],
            e[3],
            self.v4,
            self.v4_dot_analytic,
            self.v4_dot_findiff,
        ]
    }

    pub fn from_row(r: &[T; 24]) -> Self {
        Self {
            t: r[0],
            state: PlantState::from_array([r[1], r[2], r[3], r[4], r[5], r[6], r[7], r[8]]),
            input: ControlInput::new(r[9], r[10]),
            reference: Vec2::new(r[11], r[12]),
            error_norms: [r[13], r[14], r[15], r[16]],
            est: EstimatorState::from_array([r[17], r[18], r[19], r[20]]),
            v4: r[21],
            v4_dot_analytic: r[22],
            v4_dot_findiff: r[23],
        }
    }
}

/// CSV header, in [`SimRecord::to_row`] order.
pub const RECORD_COLUMNS: [&str; 24] = [
    "t",
    "r1",
    "r2",
    "v1",
    "v2",
    "F",
    "phi",
    "F_dot",
    "phi_dot",
    "u_F_ddot",
    "u_M",
    "xi1_1",
    "xi1_2",
    "e1_norm",
    "e2_norm",
    "e3_norm",
    "e4_norm",
    "p1_hat",
    "p2_hat",
    "theta1_hat",
    "vartheta1_hat",
    "V4",
    "V4_dot_analytic",
    "V4_dot_findiff",
];

/// Lyapunov function built from the controller's error coordinates and the
/// true parameters.
pub fn lyapunov_v4<T: Scalar>(
    est: &EstimatorState<T>,
    params: &PhysicalParams<T>,
    diag: &ControllerDiagnostics<T>,
    cfg: &ControllerConfig<T>,
) -> LyapunovBreakdown<T> {
    let half = T::half();
    let th1 = params.theta1();
    let th2 = params.theta2();
    let p1 = params.mass;
    let p2 = params.inertia;
    let sq = |v: T| v * v;

    let v1 = half * diag.position_error.norm_squared();
    let v2 = v1
        + half * diag.velocity_error.norm_squared()
        + half / cfg.gamma1 * th1.abs() * sq(est.mass_hat - p1);
    let v3 = v2 + half * diag.thrust_vector_error.norm_squared();
    let v4 = v3
        + half * diag.rate_error.norm_squared()
        + half / cfg.gamma2 * th2.abs() * sq(est.inertia_hat - p2)
        + half / cfg.alpha1 * sq(th1 - est.inv_mass_hat)
        + half / cfg.alpha2 * sq(th1 - est.inv_mass_aux_hat);
    LyapunovBreakdown {
        v1,
        v2,
        v3,
        v4,
        descent_terms: descent_terms(diag, params, cfg),
    }
}

fn descent_terms<T: Scalar>(
    diag: &ControllerDiagnostics<T>,
    params: &PhysicalParams<T>,
    cfg: &ControllerConfig<T>,
) -> [T; 4] {
    let e4 = diag.rate_error;
    [
        cfg.k1 * diag.position_error.norm_squared(),
        cfg.k2 * params.theta1().abs() * diag.velocity_error.norm_squared(),
        cfg.k3 * diag.thrust_vector_error.norm_squared(),
        cfg.k4 * (params.theta2().abs() * e4.x * e4.x + e4.y * e4.y),
    ]
}

/// Closed-form `V̇4`; never positive.
pub fn v4_dot_analytic<T: Scalar>(
    diag: &ControllerDiagnostics<T>,
    params: &PhysicalParams<T>,
    cfg: &ControllerConfig<T>,
) -> T {
    -descent_terms(diag, params, cfg)
        .iter()
        .fold(T::zero(), |acc, &v| acc + v)
}

/// Radii `|p̂1 - m|, |p̂2 - J|, |θ̂1 - 1/m|, |ϑ̂1 - 1/m|` can never exceed while
/// `V4 <= v4_bound`.
pub fn estimate_error_bounds<T: Scalar>(
    v4_bound: T,
    params: &PhysicalParams<T>,
    cfg: &ControllerConfig<T>,
) -> [T; 4] {
    let two_v = T::two() * v4_bound.max(T::zero());
    [
        (two_v * cfg.gamma1 / params.theta1().abs()).sqrt(),
        (two_v * cfg.gamma2 / params.theta2().abs()).sqrt(),
        (two_v * cfg.alpha1).sqrt(),
        (two_v * cfg.alpha2).sqrt(),
    ]
}

/// Everything produced by one evaluation of the closed loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedLoopEval<T> {
    pub deriv: AugmentedState<T>,
    pub input: ControlInput<T>,
    pub diag: ControllerDiagnostics<T>,
    pub reference: Vec2<T>,
}

/// Time derivative of the augmented state (`deriv.t` is one). Plant and
/// estimator rates come from the same controller evaluation.
pub fn closed_loop_deriv<T: Scalar>(
    s: &AugmentedState<T>,
    reference: &dyn Reference<T>,
    cfg: &ControllerConfig<T>,
    params: &PhysicalParams<T>,
) -> Result<ClosedLoopEval<T>, ModelError> {
    let r = reference.sample(s.t);
    let (u, diag) = controller::control(&s.plant, &s.est, &r, cfg)?;
    Ok(ClosedLoopEval {
        deriv: AugmentedState {
            plant: plant_deriv(&s.plant, u, params),
            est: estimator::rates(&diag, &s.est, cfg),
            t: T::one(),
        },
        input: u,
        diag,
        reference: r.position,
    })
}

fn axpy<T: Scalar, const N: usize>(y: &[T; N], h: T, k: &[T; N]) -> [T; N] {
    let mut out = *y;
    for (o, d) in out.iter_mut().zip(k) {
        *o = *o + h * *d;
    }
    out
}

/// Classical RK4 step on `ẏ = f(t, y)` when `k1 = f(t, y)` is already known.
pub fn rk4_step_from<T: Scalar, const N: usize, E>(
    t: T,
    y: &[T; N],
    k1: &[T; N],
    dt: T,
    mut f: impl FnMut(T, &[T; N]) -> Result<[T; N], E>,
) -> Result<[T; N], E> {
    let half = dt * T::half();
    let k2 = f(t + half, &axpy(y, half, k1))?;
    let k3 = f(t + half, &axpy(y, half, &k2))?;
    let k4 = f(t + dt, &axpy(y, dt, &k3))?;
    let sixth = dt / T::lit(6.0);
    let mut out = *y;
    for i in 0..N {
        out[i] = out[i] + sixth * (k1[i] + T::two() * (k2[i] + k3[i]) + k4[i]);
    }
    Ok(out)
}

/// Classical RK4 step on `ẏ = f(t, y)`; four evaluations of `f`.
pub fn rk4_step<T: Scalar, const N: usize, E>(
    t: T,
    y: &[T; N],
    dt: T,
    mut f: impl FnMut(T, &[T; N]) -> Result<[T; N], E>,
) -> Result<[T; N], E> {
    let k1 = f(t, y)?;
    rk4_step_from(t, y, &k1, dt, f)
}

/// Everything [`simulate`] needs.
pub struct SimSetup<'a, T> {
    pub reference: &'a dyn Reference<T>,
    pub controller: ControllerConfig<T>,
    pub params: PhysicalParams<T>,
    pub initial: AugmentedState<T>,
    pub dt: T,
    pub duration: T,
    /// Record every `output_stride`-th step.
    pub output_stride: usize,
}

/// Records plus how the run ended.
#[derive(Debug, Clone, PartialEq)]
pub struct SimRun<T> {
    pub records: Vec<SimRecord<T>>,
    pub error: Option<SimError>,
    /// Smallest `|F|` any controller evaluation was handed that passed the
    /// guard.
    pub min_thrust_evaluated: T,
    pub controller_calls: u64,
}

impl<T: Scalar> SimRun<T> {
    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }
}

fn make_record<T: Scalar>(s: &AugmentedState<T>, ev: &ClosedLoopEval<T>, setup: &SimSetup<'_, T>) -> SimRecord<T> {
    let lyap = lyapunov_v4(&s.est, &setup.params, &ev.diag, &setup.controller);
    let d = &ev.diag;
    SimRecord {
        t: s.t,
        state: s.plant,
        input: ev.input,
        reference: ev.reference,
        error_norms: [
            d.position_error.norm(),
            d.velocity_error.norm(),
            d.thrust_vector_error.norm(),
            d.rate_error.norm(),
        ],
        est: s.est,
        v4: lyap.v4,
        v4_dot_analytic: v4_dot_analytic(d, &setup.params, &setup.controller),
        v4_dot_findiff: T::nan(),
    }
}

/// Number of fixed steps covering `duration`.
pub fn step_count<T: Scalar>(dt: T, duration: T) -> usize {
    (duration / dt).round().to_usize().unwrap_or(0)
}

/// Fills `v4_dot_findiff` from neighbouring records.
pub fn fill_findiff<T: Scalar>(records: &mut [SimRecord<T>]) {
    let n = records.len();
    if n < 2 {
        if let Some(r) = records.first_mut() {
            r.v4_dot_findiff = r.v4_dot_analytic;
        }
        return;
    }
    for i in 0..n {
        let (a, b) = match i {
            0 => (0, 1),
            _ if i == n - 1 => (n - 2, n - 1),
            _ => (i - 1, i + 1),
        };
        records[i].v4_dot_findiff = (records[b].v4 - records[a].v4) / (records[b].t - records[a].t);
    }
}

/// Integrates from `t = 0` to `duration`. Stops early on a guard trip or a
/// non-finite state; records up to that point are kept, including the last
/// state that could still be evaluated.
pub fn simulate<T: Scalar>(setup: &SimSetup<'_, T>) -> SimRun<T> {
    let mut run = SimRun {
        records: Vec::new(),
        error: None,
        min_thrust_evaluated: T::infinity(),
        controller_calls: 0,
    };
    if !(setup.dt > T::zero() && setup.dt.is_finite()) {
        run.error = Some(SimError::InvalidSetup(format!("dt must be positive, got {}", setup.dt)));
        return run;
    }
    if !(setup.duration >= T::zero() && setup.duration.is_finite()) {
        run.error = Some(SimError::InvalidSetup(format!("duration must be nonnegative, got {}", setup.duration)));
        return run;
    }
    if setup.output_stride == 0 {
        run.error = Some(SimError::InvalidSetup("output stride must be at least 1".into()));
        return run;
    }
    if let Err(e) = setup.controller.validate() {
        run.error = Some(SimError::InvalidSetup(e));
        return run;
    }
    if !setup.params.is_valid() {
        run.error = Some(SimError::InvalidSetup("physical parameters must be positive and finite".into()));
        return run;
    }

    let steps = step_count(setup.dt, setup.duration);
    let cfg = &setup.controller;
    let mut state = setup.initial;
    state.t = T::zero();

    // Closure shared by every RK4 stage; keeps the guard statistics.
    let mut min_f = T::infinity();
    let mut calls = 0u64;
    let mut eval = |s: &AugmentedState<T>| -> Result<ClosedLoopEval<T>, SimError> {
        calls += 1;
        match closed_loop_deriv(s, setup.reference, cfg, &setup.params) {
            Ok(ev) => {
                min_f = min_f.min(s.plant.thrust_roll.thrust.abs());
                Ok(ev)
            }
            Err(ModelError::SingularInputMap { thrust, eps }) => Err(SimError::SingularGuardTripped {
                t: s.t.to_f64_lossy(),
                thrust,
                eps,
            }),
        }
    };

    let mut k = 0usize;
    loop {
        if let Some(field) = state.non_finite_field() {
            run.error = Some(SimError::NonFiniteState { t: state.t.to_f64_lossy(), field });
            break;
        }
        let first = match eval(&state) {
            Ok(ev) => ev,
            Err(e) => {
                run.error = Some(e);
                break;
            }
        };
        let recorded = k % setup.output_stride == 0 || k == steps;
        let record = make_record(&state, &first, setup);
        if recorded {
            run.records.push(record);
        }
        if k == steps {
            break;
        }
        let y = state.to_array();
        let t = state.t;
        let stepped = rk4_step_from(t, &y, &first.deriv.to_array(), setup.dt, |ts, ys| {
            eval(&AugmentedState::from_array(*ys, ts)).map(|ev| ev.deriv.to_array())
        });
        match stepped {
            Ok(next) => {
                k += 1;
                // Time from the step index so long runs do not drift.
                state = AugmentedState::from_array(next, setup.dt * T::lit(k as f64));
            }
            Err(e) => {
                if !recorded {
                    run.records.push(record);
                }
                run.error = Some(e);
                break;
            }
        }
    }
    run.min_thrust_evaluated = min_f;
    run.controller_calls = calls;
    fill_findiff(&mut run.records);
    run
}

/// Plant at rest on `position` with thrust `thrust`, zero estimates.
pub fn initial_state<T: Scalar>(position: Vec2<T>, thrust: T) -> AugmentedState<T> {
    AugmentedState {
        plant: PlantState::at_rest(position, thrust),
        est: EstimatorState::default(),
        t: T::zero(),
    }
}
