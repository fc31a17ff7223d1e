//! Dynamically extended planar bicopter.
//!
//! The plant carries eight states: position, velocity, the thrust/roll pair
//! and its rate. Thrust `F` and roll `φ` are stored by name. Whenever they are
//! packed into a vector for the matrix algebra the order is **(roll, thrust)**:
//! that is the column order of [`thrust_jacobian`] and the row order of
//! [`input_map`]. With that ordering the Jacobian really is `∂g/∂(φ, F)` and the
//! input map sends the moment to the roll acceleration.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crate::linalg::{Mat2, Vec2};
use crate::Scalar;

/// Default thrust magnitude below which the thrust Jacobian is treated as
/// singular [N].
pub const DEFAULT_EPS_F: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("thrust Jacobian is singular: |F| = {thrust:e} < eps_F = {eps:e}")]
    SingularInputMap { thrust: f64, eps: f64 },
}

/// Thrust `F` [N] and roll `φ` [rad], or their time derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ThrustRoll<T> {
    pub thrust: T,
    pub roll: T,
}

impl<T: Scalar> ThrustRoll<T> {
    pub fn new(thrust: T, roll: T) -> Self {
        Self { thrust, roll }
    }

    /// Packs as `(roll, thrust)`, the order the Jacobian columns use.
    #[inline]
    pub fn column(self) -> Vec2<T> {
        Vec2::new(self.roll, self.thrust)
    }

    #[inline]
    pub fn from_column(v: Vec2<T>) -> Self {
        Self { roll: v.x, thrust: v.y }
    }
}

/// True inertial parameters of the simulated vehicle.
///
/// Only the plant and the Lyapunov monitor may read these.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicalParams<T> {
    /// Mass [kg].
    pub mass: T,
    /// Moment of inertia [kg m^2].
    pub inertia: T,
    /// Gravitational acceleration [m/s^2].
    pub gravity: T,
}

impl<T: Scalar> PhysicalParams<T> {
    pub fn new(mass: T, inertia: T, gravity: T) -> Self {
        Self { mass, inertia, gravity }
    }

    /// Inverse mass.
    pub fn theta1(&self) -> T {
        T::one() / self.mass
    }

    /// Inverse inertia.
    pub fn theta2(&self) -> T {
        T::one() / self.inertia
    }

    pub fn is_valid(&self) -> bool {
        self.mass > T::zero()
            && self.inertia > T::zero()
            && self.gravity >= T::zero()
            && self.mass.is_finite()
            && self.inertia.is_finite()
            && self.gravity.is_finite()
    }
}

impl Default for PhysicalParams<f64> {
    fn default() -> Self {
        Self::new(1.0, 0.2, 9.81)
    }
}

/// Plant input: thrust acceleration `F̈` [N/s^2] and moment `M` [N m].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControlInput<T> {
    pub thrust_accel: T,
    pub moment: T,
}

impl<T: Scalar> ControlInput<T> {
    pub fn new(thrust_accel: T, moment: T) -> Self {
        Self { thrust_accel, moment }
    }

    /// `(F̈, M)`, the vector the input map acts on.
    pub fn as_vec(self) -> Vec2<T> {
        Vec2::new(self.thrust_accel, self.moment)
    }

    pub fn from_vec(v: Vec2<T>) -> Self {
        Self::new(v.x, v.y)
    }

    pub fn norm(self) -> T {
        self.as_vec().norm()
    }
}

/// The eight extended plant states (or their derivative).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PlantState<T> {
    /// Center-of-mass position (horizontal, vertical) [m].
    pub position: Vec2<T>,
    /// Velocity [m/s].
    pub velocity: Vec2<T>,
    pub thrust_roll: ThrustRoll<T>,
    pub thrust_roll_rate: ThrustRoll<T>,
}

impl<T: Scalar> PlantState<T> {
    pub fn at_rest(position: Vec2<T>, thrust: T) -> Self {
        Self {
            position,
            velocity: Vec2::zero(),
            thrust_roll: ThrustRoll::new(thrust, T::zero()),
            thrust_roll_rate: ThrustRoll::default(),
        }
    }

    /// Eight values in CSV order: `r1 r2 v1 v2 F φ Ḟ φ̇`.
    pub fn to_array(&self) -> [T; 8] {
        [
            self.position.x,
            self.position.y,
            self.velocity.x,
            self.velocity.y,
            self.thrust_roll.thrust,
            self.thrust_roll.roll,
            self.thrust_roll_rate.thrust,
            self.thrust_roll_rate.roll,
        ]
    }

    pub fn from_array(a: [T; 8]) -> Self {
        Self {
            position: Vec2::new(a[0], a[1]),
            velocity: Vec2::new(a[2], a[3]),
            thrust_roll: ThrustRoll::new(a[4], a[5]),
            thrust_roll_rate: ThrustRoll::new(a[6], a[7]),
        }
    }

    /// Name of the first non-finite field, if any.
    pub fn non_finite_field(&self) -> Option<&'static str> {
        const NAMES: [&str; 8] = [
            "position.x",
            "position.y",
            "velocity.x",
            "velocity.y",
            "thrust",
            "roll",
            "thrust_rate",
            "roll_rate",
        ];
        self.to_array()
            .iter()
            .position(|v| !v.is_finite())
            .map(|i| NAMES[i])
    }
}

/// Gravity drift `(0, -g)`.
#[inline]
pub fn gravity_drift<T: Scalar>(gravity: T) -> Vec2<T> {
    Vec2::new(T::zero(), -gravity)
}

/// Thrust direction scaled by thrust: `(-sin φ F, cos φ F)`.
#[inline]
pub fn thrust_vector<T: Scalar>(x3: ThrustRoll<T>) -> Vec2<T> {
    let (s, c) = x3.roll.sin_cos();
    Vec2::new(-s * x3.thrust, c * x3.thrust)
}

/// Jacobian of [`thrust_vector`] with columns ordered (roll, thrust):
/// `[[-cos φ F, -sin φ], [-sin φ F, cos φ]]`. Its determinant is `-F`.
#[inline]
pub fn thrust_jacobian<T: Scalar>(x3: ThrustRoll<T>) -> Mat2<T> {
    let (s, c) = x3.roll.sin_cos();
    let f = x3.thrust;
    Mat2::new(-c * f, -s, -s * f, c)
}

fn guard<T: Scalar>(x3: ThrustRoll<T>, eps_f: T) -> Result<(), ModelError> {
    // NaN thrust fails the comparison and is rejected too.
    if x3.thrust.abs() >= eps_f {
        Ok(())
    } else {
        Err(ModelError::SingularInputMap {
            thrust: x3.thrust.to_f64_lossy(),
            eps: eps_f.to_f64_lossy(),
        })
    }
}

/// Closed-form inverse of [`thrust_jacobian`], refused when `|F| < eps_f`.
pub fn thrust_jacobian_inv<T: Scalar>(x3: ThrustRoll<T>, eps_f: T) -> Result<Mat2<T>, ModelError> {
    guard(x3, eps_f)?;
    let (s, c) = x3.roll.sin_cos();
    let f = x3.thrust;
    // det = -F
    Ok(Mat2::new(-c / f, -s / f, -s, c))
}

/// Entrywise time derivative of [`thrust_jacobian`] along `x3` moving at `x4`.
pub fn thrust_jacobian_dot<T: Scalar>(x3: ThrustRoll<T>, x4: ThrustRoll<T>) -> Mat2<T> {
    let (s, c) = x3.roll.sin_cos();
    let f = x3.thrust;
    let fd = x4.thrust;
    let pd = x4.roll;
    Mat2::new(
        s * pd * f - c * fd,
        -c * pd,
        -c * pd * f - s * fd,
        -s * pd,
    )
}

/// Time derivative of the inverse Jacobian, `-G⁻¹ Ġ G⁻¹`.
pub fn thrust_jacobian_inv_dot<T: Scalar>(
    x3: ThrustRoll<T>,
    x4: ThrustRoll<T>,
    eps_f: T,
) -> Result<Mat2<T>, ModelError> {
    let inv = thrust_jacobian_inv(x3, eps_f)?;
    let dot = thrust_jacobian_dot(x3, x4);
    Ok(inv.mul_mat(&dot).mul_mat(&inv).scale(-T::one()))
}

/// Input map `[[0, θ₂], [1, 0]]` acting on `(F̈, M)`; rows are (roll, thrust).
pub fn input_map<T: Scalar>(params: &PhysicalParams<T>) -> Mat2<T> {
    Mat2::new(T::zero(), params.theta2(), T::one(), T::zero())
}

/// Right-hand side of the extended equations of motion.
pub fn plant_deriv<T: Scalar>(
    s: &PlantState<T>,
    u: ControlInput<T>,
    params: &PhysicalParams<T>,
) -> PlantState<T> {
    let accel = gravity_drift(params.gravity) + thrust_vector(s.thrust_roll) * params.theta1();
    let rate_dot = input_map(params).mul_vec(u.as_vec());
    PlantState {
        position: s.velocity,
        velocity: accel,
        thrust_roll: s.thrust_roll_rate,
        thrust_roll_rate: ThrustRoll::from_column(rate_dot),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn gravity_drift_values() {
        assert_eq!(gravity_drift(9.81), Vec2::new(0.0, -9.81));
        assert_eq!(gravity_drift(0.0), Vec2::new(0.0, -0.0));
        assert_eq!(gravity_drift(1.0), Vec2::new(0.0, -1.0));
    }

    #[test]
    fn thrust_vector_values() {
        assert_eq!(thrust_vector(ThrustRoll::new(1.0, 0.0)), Vec2::new(-0.0, 1.0));
        let v = thrust_vector(ThrustRoll::new(2.0, FRAC_PI_2));
        assert_relative_eq!(v.x, -2.0);
        assert!(v.y.abs() < 1e-15);
        let z = thrust_vector(ThrustRoll::new(0.0, 0.3));
        assert_eq!(z.norm(), 0.0);
    }

    #[test]
    fn jacobian_values() {
        let g = thrust_jacobian(ThrustRoll::new(1.0, 0.0));
        assert_eq!(g.m, [[-1.0, -0.0], [-0.0, 1.0]]);
        let g0 = thrust_jacobian(ThrustRoll::new(0.0, 0.0));
        assert_eq!(g0.det(), 0.0);
        assert_eq!(g0.m[1][1], 1.0);
    }

    #[test]
    fn jacobian_is_derivative_of_thrust_vector() {
        let x3 = ThrustRoll::new(3.7, -0.4);
        let h = 1e-6;
        let jac = thrust_jacobian(x3);
        let d_roll = (thrust_vector(ThrustRoll::new(x3.thrust, x3.roll + h))
            - thrust_vector(ThrustRoll::new(x3.thrust, x3.roll - h)))
            * (0.5 / h);
        let d_thrust = (thrust_vector(ThrustRoll::new(x3.thrust + h, x3.roll))
            - thrust_vector(ThrustRoll::new(x3.thrust - h, x3.roll)))
            * (0.5 / h);
        assert_relative_eq!(jac.m[0][0], d_roll.x, epsilon = 1e-8);
        assert_relative_eq!(jac.m[1][0], d_roll.y, epsilon = 1e-8);
        assert_relative_eq!(jac.m[0][1], d_thrust.x, epsilon = 1e-8);
        assert_relative_eq!(jac.m[1][1], d_thrust.y, epsilon = 1e-8);
    }

    #[test]
    fn inverse_at_unit_thrust_is_self() {
        let inv = thrust_jacobian_inv(ThrustRoll::new(1.0, 0.0), 1e-6).unwrap();
        assert_eq!(inv.m, [[-1.0, -0.0], [-0.0, 1.0]]);
    }

    #[test]
    fn inverse_refuses_zero_thrust() {
        for roll in [0.0, 0.3, -2.0] {
            let err = thrust_jacobian_inv(ThrustRoll::new(0.0, roll), DEFAULT_EPS_F).unwrap_err();
            assert!(matches!(err, ModelError::SingularInputMap { .. }));
        }
        assert!(thrust_jacobian_inv(ThrustRoll::new(f64::NAN, 0.0), 1e-6).is_err());
        assert!(thrust_jacobian_inv(ThrustRoll::new(5e-7, 0.0), 1e-6).is_err());
        assert!(thrust_jacobian_inv(ThrustRoll::new(-1e-6, 0.0), 1e-6).is_ok());
    }

    #[test]
    fn jacobian_dot_frozen_and_pure_thrust_rate() {
        let z = thrust_jacobian_dot(ThrustRoll::new(2.0, 0.7), ThrustRoll::new(0.0, 0.0));
        assert_eq!(z.max_abs(), 0.0);
        let d = thrust_jacobian_dot(ThrustRoll::new(1.0, 0.0), ThrustRoll::new(1.0, 0.0));
        assert_eq!(d.m, [[-1.0, -0.0], [-0.0, -0.0]]);
        let di = thrust_jacobian_inv_dot(ThrustRoll::new(1.0f64, 0.0), ThrustRoll::new(1.0, 0.0), 1e-6)
            .unwrap();
        // d/dt(-1/F) = Ḟ/F² = 1
        assert_relative_eq!(di.m[0][0], 1.0);
        assert_eq!(di.m[0][1].abs() + di.m[1][0].abs() + di.m[1][1].abs(), 0.0);
        let zi = thrust_jacobian_inv_dot(ThrustRoll::new(2.0, 0.7), ThrustRoll::default(), 1e-6)
            .unwrap();
        assert_eq!(zi.max_abs(), 0.0);
    }

    #[test]
    fn hover_is_equilibrium() {
        let p = PhysicalParams::new(1.3f64, 0.2, 9.81);
        let s = PlantState::at_rest(Vec2::new(2.0, -1.0), p.mass * p.gravity);
        let d = plant_deriv(&s, ControlInput::default(), &p);
        assert!(d.to_array().iter().all(|v| v.abs() < 1e-15), "{d:?}");
    }

    #[test]
    fn unit_moment_drives_roll_acceleration() {
        let p = PhysicalParams::new(1.0, 0.2, 9.81);
        let s = PlantState::at_rest(Vec2::zero(), 9.81);
        let d = plant_deriv(&s, ControlInput::new(0.0, 1.0), &p);
        // (φ̈, F̈) = g4 (0, 1) = (θ₂, 0)
        assert_relative_eq!(d.thrust_roll_rate.roll, 5.0);
        assert_eq!(d.thrust_roll_rate.thrust, 0.0);
        assert_eq!(ThrustRoll::column(d.thrust_roll_rate), Vec2::new(5.0, 0.0));
    }

    #[test]
    fn doubling_mass_halves_thrust_acceleration() {
        let s = PlantState {
            thrust_roll: ThrustRoll::new(4.0, 0.3),
            ..PlantState::default()
        };
        let a = plant_deriv(&s, ControlInput::default(), &PhysicalParams::new(1.0, 0.2, 0.0));
        let b = plant_deriv(&s, ControlInput::default(), &PhysicalParams::new(2.0, 0.2, 0.0));
        assert_eq!(a.velocity * 0.5, b.velocity);
    }

    #[test]
    fn non_finite_field_is_named() {
        let mut s = PlantState::<f64>::default();
        assert_eq!(s.non_finite_field(), None);
        s.thrust_roll_rate.roll = f64::INFINITY;
        assert_eq!(s.non_finite_field(), Some("roll_rate"));
    }
}
