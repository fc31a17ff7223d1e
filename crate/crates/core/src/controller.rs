//! Adaptive backstepping control law.
//!
//! The controller sees the plant state, its own four estimates, the reference
//! sample and [`ControllerConfig`]. It never sees mass or inertia, only their
//! signs. Everything is evaluated in one pass, each quantity consuming only
//! upstream values:
//!
//! `e1 → ξ2 → e2 → Φ → ṗ1 → ξ3 → e3 → θ̇1 → ξ4 → e4 → Σ, Ψ → u`
//!
//! Vectors living in the thrust/roll layer (`ξ4`, `e4`, `Σ`, `Ψ`) are packed in
//! `(roll, thrust)` order, see [`crate::model`].
//!
//! The adaptation-law right-hand sides that appear inside `ξ4`, `Σ` and `Ψ`
//! are evaluated at the current state rather than differentiated numerically,
//! so the law is a memoryless function of `(state, estimates, reference)`.

use serde::{Deserialize, Serialize};

use crate::estimator;
use crate::model::{
    gravity_drift, thrust_jacobian, thrust_jacobian_inv, thrust_jacobian_inv_dot, thrust_vector,
    ControlInput, Mat2, ModelError, PlantState, ThrustRoll, Vec2, DEFAULT_EPS_F,
};
use crate::trajectory::ReferenceSample;
use crate::Scalar;

/// Deliberate defects used to check that the oracles catch algebra bugs.
#[doc(hidden)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fault {
    #[default]
    None,
    /// Negates `Ψ` after it is computed.
    FlipDriftRegressor,
}

/// Gains, adaptation rates and the only parameter knowledge the controller
/// has: the signs of `1/m` and `1/J`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig<T> {
    pub k1: T,
    pub k2: T,
    pub k3: T,
    pub k4: T,
    pub gamma1: T,
    pub gamma2: T,
    pub alpha1: T,
    pub alpha2: T,
    /// Sign of `1/m`, `+1` or `-1`.
    pub sign_theta1: T,
    /// Sign of `1/J`, `+1` or `-1`.
    pub sign_theta2: T,
    /// Thrust magnitude below which the law refuses to evaluate [N].
    pub eps_f: T,
    /// Gravity is a known constant of the drift term.
    pub gravity: T,
    /// Feed reference derivatives through the virtual controls. With `false`
    /// only the reference position is used.
    pub feedforward: bool,
    #[doc(hidden)]
    #[serde(skip)]
    pub fault: Fault,
}

impl<T: Scalar> ControllerConfig<T> {
    /// Controller gains `k = (1, 5, 10, 20)` with all four adaptation rates set
    /// to `rate`.
    pub fn with_adaptation_rate(rate: T) -> Self {
        Self {
            k1: T::lit(1.0),
            k2: T::lit(5.0),
            k3: T::lit(10.0),
            k4: T::lit(20.0),
            gamma1: rate,
            gamma2: rate,
            alpha1: rate,
            alpha2: rate,
            sign_theta1: T::one(),
            sign_theta2: T::one(),
            eps_f: T::lit(DEFAULT_EPS_F),
            gravity: T::lit(9.81),
            feedforward: true,
            fault: Fault::None,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("k1", self.k1),
            ("k2", self.k2),
            ("k3", self.k3),
            ("k4", self.k4),
            ("gamma1", self.gamma1),
            ("gamma2", self.gamma2),
            ("alpha1", self.alpha1),
            ("alpha2", self.alpha2),
            ("eps_f", self.eps_f),
        ];
        for (name, v) in positive {
            if !(v > T::zero() && v.is_finite()) {
                return Err(format!("{name} must be positive and finite, got {v}"));
            }
        }
        for (name, v) in [("sign_theta1", self.sign_theta1), ("sign_theta2", self.sign_theta2)] {
            if v != T::one() && v != -T::one() {
                return Err(format!("{name} must be +1 or -1, got {v}"));
            }
        }
        if !(self.gravity >= T::zero() && self.gravity.is_finite()) {
            return Err(format!("gravity must be nonnegative, got {}", self.gravity));
        }
        Ok(())
    }
}

impl<T: Scalar> Default for ControllerConfig<T> {
    fn default() -> Self {
        Self::with_adaptation_rate(T::lit(0.1))
    }
}

/// The four adapted scalars.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EstimatorState<T> {
    /// Estimate of `m` (`p̂1`).
    pub mass_hat: T,
    /// Estimate of `J` (`p̂2`).
    pub inertia_hat: T,
    /// Estimate of `1/m` used in the thrust layer (`θ̂1`).
    pub inv_mass_hat: T,
    /// Estimate of `1/m` used in the rate layer (`ϑ̂1`).
    pub inv_mass_aux_hat: T,
}

impl<T: Scalar> EstimatorState<T> {
    pub fn to_array(&self) -> [T; 4] {
        [self.mass_hat, self.inertia_hat, self.inv_mass_hat, self.inv_mass_aux_hat]
    }

    pub fn from_array(a: [T; 4]) -> Self {
        Self {
            mass_hat: a[0],
            inertia_hat: a[1],
            inv_mass_hat: a[2],
            inv_mass_aux_hat: a[3],
        }
    }
}

/// Every intermediate of one control evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControllerDiagnostics<T> {
    /// `e1 = x1 - ξ1`.
    pub position_error: Vec2<T>,
    /// `ξ2`.
    pub velocity_target: Vec2<T>,
    /// `e2 = x2 - ξ2`.
    pub velocity_error: Vec2<T>,
    /// `Φ`, the regressor shared by the first adaptation law and `ξ3`.
    pub regressor: Vec2<T>,
    /// `ξ3`.
    pub thrust_vector_target: Vec2<T>,
    /// `e3 = g(x3) - ξ3`.
    pub thrust_vector_error: Vec2<T>,
    /// `ξ4`, (roll, thrust) order.
    pub rate_target: Vec2<T>,
    /// `e4 = x4 - ξ4`, (roll, thrust) order.
    pub rate_error: Vec2<T>,
    /// `Σ`: the part of the `e4` dynamics known to the controller.
    pub drift_known: Vec2<T>,
    /// `Ψ`: the part of the `e4` dynamics multiplying `1/m`.
    pub drift_regressor: Vec2<T>,
    /// `ṗ1` evaluated inline.
    pub mass_hat_rate: T,
    /// `θ̇1` evaluated inline.
    pub inv_mass_hat_rate: T,
    /// Thrust at which the law was evaluated; always `>= eps_f` in magnitude.
    pub thrust: T,
}

impl<T: Scalar> ControllerDiagnostics<T> {
    /// `Σ + Ψ ϑ̂1`.
    pub fn drift_estimate(&self, est: &EstimatorState<T>) -> Vec2<T> {
        self.drift_known + self.drift_regressor * est.inv_mass_aux_hat
    }
}

fn effective_reference<T: Scalar>(r: &ReferenceSample<T>, cfg: &ControllerConfig<T>) -> ReferenceSample<T> {
    if cfg.feedforward {
        *r
    } else {
        ReferenceSample::at_rest(r.position)
    }
}

/// `e1 = x1 - ξ1`.
#[inline]
pub fn position_error<T: Scalar>(x1: Vec2<T>, xi1: Vec2<T>) -> Vec2<T> {
    x1 - xi1
}

/// `ξ2 = -k1 e1 (+ ξ̇1 with feedforward)`.
pub fn velocity_target<T: Scalar>(
    e1: Vec2<T>,
    reference: &ReferenceSample<T>,
    cfg: &ControllerConfig<T>,
) -> Vec2<T> {
    let r = effective_reference(reference, cfg);
    -e1 * cfg.k1 + r.velocity
}

/// `Φ = e1 + k1 (x2 - ξ̇1) + f2 - ξ̈1`; the reference terms vanish without
/// feedforward.
pub fn regressor<T: Scalar>(
    e1: Vec2<T>,
    x2: Vec2<T>,
    reference: &ReferenceSample<T>,
    cfg: &ControllerConfig<T>,
) -> Vec2<T> {
    let r = effective_reference(reference, cfg);
    e1 + (x2 - r.velocity) * cfg.k1 + gravity_drift(cfg.gravity) - r.accel
}

/// `ξ3 = -p̂1 Φ - k2 σ(θ1) e2`.
pub fn thrust_vector_target<T: Scalar>(
    e1: Vec2<T>,
    x2: Vec2<T>,
    est: &EstimatorState<T>,
    reference: &ReferenceSample<T>,
    cfg: &ControllerConfig<T>,
) -> Vec2<T> {
    let e2 = x2 - velocity_target(e1, reference, cfg);
    let phi = regressor(e1, x2, reference, cfg);
    -phi * est.mass_hat - e2 * (cfg.k2 * cfg.sign_theta1)
}

/// Full evaluation of the backstepping chain.
pub fn evaluate<T: Scalar>(
    state: &PlantState<T>,
    est: &EstimatorState<T>,
    reference: &ReferenceSample<T>,
    cfg: &ControllerConfig<T>,
) -> Result<ControllerDiagnostics<T>, ModelError> {
    let x3 = state.thrust_roll;
    let x4: ThrustRoll<T> = state.thrust_roll_rate;
    // Guard first so nothing below ever runs on a singular Jacobian.
    let jac_inv = thrust_jacobian_inv(x3, cfg.eps_f)?;
    let jac_inv_dot = thrust_jacobian_inv_dot(x3, x4, cfg.eps_f)?;
    let jac: Mat2<T> = thrust_jacobian(x3);

    let r = effective_reference(reference, cfg);
    let (k1, k2, k3) = (cfg.k1, cfg.k2, cfg.k3);
    let s1 = cfg.sign_theta1;
    let f2 = gravity_drift(cfg.gravity);
    let x2 = state.velocity;
    let gv = thrust_vector(x3);
    let x4c = x4.column();
    let jac_x4 = jac.mul_vec(x4c);

    let e1 = position_error(state.position, r.position);
    let xi2 = velocity_target(e1, &r, cfg);
    let e2 = x2 - xi2;
    let phi = regressor(e1, x2, &r, cfg);
    let p1_rate = estimator::mass_hat_rate(e2, phi, cfg);
    let xi3 = -phi * est.mass_hat - e2 * (k2 * s1);
    let e3 = gv - xi3;

    // Known parts of Φ̇ and ė2 (the 1/m parts are k1 g and g).
    let phi_known_rate = x2 - r.velocity + f2 * k1 - r.accel * k1 - r.jerk;
    let e2_known_rate = f2 + (x2 - r.velocity) * k1 - r.accel;

    let gain_mix = k1 * est.mass_hat + k2 * s1;
    let shaped = e2 + gv * gain_mix;
    let th1_rate = estimator::inv_mass_hat_rate(e2, e3, x3, est, cfg);

    let known = phi * p1_rate + phi_known_rate * est.mass_hat + e2_known_rate * (k2 * s1);
    let bracket = known + shaped * est.inv_mass_hat + e3 * k3;
    let xi4 = -jac_inv.mul_vec(bracket);
    let e4 = x4c - xi4;

    // d/dt of the inline ṗ1, split into known and 1/m parts.
    let p1_rate_dot_known = cfg.gamma1 * s1 * (e2_known_rate.dot(phi) + e2.dot(phi_known_rate));
    let p1_rate_dot_regr = cfg.gamma1 * s1 * (gv.dot(phi) + k1 * gv.dot(e2));

    let two = T::two();
    let bracket_rate_known = phi * p1_rate_dot_known
        + phi_known_rate * (two * p1_rate)
        + (f2 - r.accel - r.jerk * k1 - r.snap) * est.mass_hat
        + ((f2 - r.accel) * k1 - r.jerk) * (k2 * s1)
        + shaped * th1_rate
        + (e2_known_rate + gv * (k1 * p1_rate) + jac_x4 * gain_mix) * est.inv_mass_hat
        + (jac_x4 + known) * k3;
    let bracket_rate_regr = phi * p1_rate_dot_regr
        + gv * (k1 * p1_rate + est.mass_hat + k1 * k2 * s1 + est.inv_mass_hat + k3 * gain_mix);

    let sigma = jac.transpose().mul_vec(e3)
        + jac_inv_dot.mul_vec(bracket)
        + jac_inv.mul_vec(bracket_rate_known);
    let mut psi = jac_inv.mul_vec(bracket_rate_regr);
    if cfg.fault == Fault::FlipDriftRegressor {
        psi = -psi;
    }

    Ok(ControllerDiagnostics {
        position_error: e1,
        velocity_target: xi2,
        velocity_error: e2,
        regressor: phi,
        thrust_vector_target: xi3,
        thrust_vector_error: e3,
        rate_target: xi4,
        rate_error: e4,
        drift_known: sigma,
        drift_regressor: psi,
        mass_hat_rate: p1_rate,
        inv_mass_hat_rate: th1_rate,
        thrust: x3.thrust,
    })
}

/// `ξ4`, (roll, thrust) order.
pub fn rate_target<T: Scalar>(
    state: &PlantState<T>,
    est: &EstimatorState<T>,
    reference: &ReferenceSample<T>,
    cfg: &ControllerConfig<T>,
) -> Result<Vec2<T>, ModelError> {
    evaluate(state, est, reference, cfg).map(|d| d.rate_target)
}

/// `Σ`.
pub fn drift_known<T: Scalar>(
    state: &PlantState<T>,
    est: &EstimatorState<T>,
    reference: &ReferenceSample<T>,
    cfg: &ControllerConfig<T>,
) -> Result<Vec2<T>, ModelError> {
    evaluate(state, est, reference, cfg).map(|d| d.drift_known)
}

/// `Ψ`.
pub fn drift_regressor<T: Scalar>(
    state: &PlantState<T>,
    est: &EstimatorState<T>,
    reference: &ReferenceSample<T>,
    cfg: &ControllerConfig<T>,
) -> Result<Vec2<T>, ModelError> {
    evaluate(state, est, reference, cfg).map(|d| d.drift_regressor)
}

/// Control from the diagnostics of one evaluation:
/// `u = -([[0, 1], [p̂2, 0]] (Σ + Ψ ϑ̂1) + k4 [[0, 1], [σ(θ2), 0]] e4)`.
pub fn input_from<T: Scalar>(
    diag: &ControllerDiagnostics<T>,
    est: &EstimatorState<T>,
    cfg: &ControllerConfig<T>,
) -> ControlInput<T> {
    let w = diag.drift_estimate(est);
    let e4 = diag.rate_error;
    let alloc = Mat2::new(T::zero(), T::one(), est.inertia_hat, T::zero());
    let damp = Mat2::new(T::zero(), T::one(), cfg.sign_theta2, T::zero());
    let v = alloc.mul_vec(w) + damp.mul_vec(e4) * cfg.k4;
    ControlInput::from_vec(-v)
}

/// Control input and every intermediate.
pub fn control<T: Scalar>(
    state: &PlantState<T>,
    est: &EstimatorState<T>,
    reference: &ReferenceSample<T>,
    cfg: &ControllerConfig<T>,
) -> Result<(ControlInput<T>, ControllerDiagnostics<T>), ModelError> {
    let diag = evaluate(state, est, reference, cfg)?;
    Ok((input_from(&diag, est, cfg), diag))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cfg() -> ControllerConfig<f64> {
        ControllerConfig::default()
    }

    fn still(p: Vec2<f64>) -> ReferenceSample<f64> {
        ReferenceSample::at_rest(p)
    }

    #[test]
    fn position_error_examples() {
        assert_eq!(position_error(Vec2::zero(), Vec2::zero()), Vec2::<f64>::zero());
        assert_eq!(position_error(Vec2::new(1.0, 2.0), Vec2::new(1.0, 0.0)), Vec2::new(0.0, 2.0));
    }

    #[test]
    fn velocity_target_examples() {
        let c = cfg();
        let r = still(Vec2::zero());
        assert_eq!(velocity_target(Vec2::new(1.0, 0.0), &r, &c), Vec2::new(-1.0, 0.0));
        assert_eq!(velocity_target(Vec2::zero(), &r, &c).norm(), 0.0);
        assert_eq!(velocity_target(Vec2::new(0.5, -0.5), &r, &c), Vec2::new(-0.5, 0.5));
    }

    #[test]
    fn velocity_target_feeds_reference_velocity_forward() {
        let mut c = cfg();
        let r = ReferenceSample {
            velocity: Vec2::new(0.3, -0.2),
            ..still(Vec2::zero())
        };
        assert_eq!(velocity_target(Vec2::zero(), &r, &c), Vec2::new(0.3, -0.2));
        c.feedforward = false;
        assert_eq!(velocity_target(Vec2::zero(), &r, &c).norm(), 0.0);
    }

    #[test]
    fn regressor_examples() {
        let c = cfg();
        let r = still(Vec2::zero());
        assert_eq!(regressor(Vec2::zero(), Vec2::zero(), &r, &c), Vec2::new(0.0, -9.81));
        let p = regressor(Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0), &r, &c);
        assert_relative_eq!(p.x, 1.0);
        assert_relative_eq!(p.y, -8.81);
    }

    #[test]
    fn thrust_vector_target_examples() {
        let c = cfg();
        let r = still(Vec2::zero());
        let zero = EstimatorState::default();
        // e2 = x2 + k1 e1 = 0
        assert_eq!(
            thrust_vector_target(Vec2::zero(), Vec2::zero(), &zero, &r, &c).norm(),
            0.0
        );
        // e2 = (1, 0) from x2 alone
        let xi3 = thrust_vector_target(Vec2::zero(), Vec2::new(1.0, 0.0), &zero, &r, &c);
        assert_eq!(xi3, Vec2::new(-5.0, -0.0));
        // p̂1 = 1, e1 = (0, g), x2 = 0: the regressor cancels, leaving -k2 e2
        let est = EstimatorState { mass_hat: 1.0, ..zero };
        let e1 = Vec2::new(0.0, 9.81);
        let xi3 = thrust_vector_target(e1, Vec2::zero(), &est, &r, &c);
        let e2 = e1 * c.k1;
        assert_relative_eq!(xi3.x, -5.0 * e2.x);
        assert_relative_eq!(xi3.y, -5.0 * e2.y);
    }

    #[test]
    fn singular_thrust_is_refused() {
        let s = PlantState::at_rest(Vec2::new(0.0, 0.0), 0.0);
        let err = control(&s, &EstimatorState::default(), &still(Vec2::zero()), &cfg()).unwrap_err();
        assert!(matches!(err, ModelError::SingularInputMap { .. }));
    }

    #[test]
    fn zero_drift_and_zero_rate_error_give_zero_input() {
        let diag = ControllerDiagnostics::<f64>::default();
        let u = input_from(&diag, &EstimatorState::default(), &cfg());
        assert_eq!(u.norm(), 0.0);
    }

    #[test]
    fn input_matrix_expansion() {
        // p̂2 = 0, k4 = 20, σ(θ2) = +1, e4 = (a, b), Σ + Ψϑ̂1 = (c, d) → u = -(d + 20 b, 20 a)
        let (a, b, c_, d) = (0.3, -1.1, 2.0, 0.7);
        let diag = ControllerDiagnostics {
            rate_error: Vec2::new(a, b),
            drift_known: Vec2::new(c_, d),
            ..Default::default()
        };
        let u = input_from(&diag, &EstimatorState::default(), &cfg());
        assert_relative_eq!(u.thrust_accel, -(d + 20.0 * b));
        assert_relative_eq!(u.moment, -(20.0 * a));
    }

    #[test]
    fn config_validation() {
        let mut c = cfg();
        assert!(c.validate().is_ok());
        c.sign_theta2 = 0.5;
        assert!(c.validate().is_err());
        let mut c = cfg();
        c.k3 = 0.0;
        assert!(c.validate().unwrap_err().contains("k3"));
    }
}
