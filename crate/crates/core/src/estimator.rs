//! Adaptation laws.
//!
//! Pure right-hand sides; the simulator integrates them alongside the plant.
//! No projection or leakage is applied, so the estimates are free
//! integrators whose boundedness comes from the Lyapunov function.

use crate::controller::{ControllerConfig, ControllerDiagnostics, EstimatorState};
use crate::model::{thrust_vector, ThrustRoll, Vec2};
use crate::Scalar;

/// `ṗ1 = γ1 σ(θ1) e2ᵀ Φ`.
#[inline]
pub fn mass_hat_rate<T: Scalar>(e2: Vec2<T>, regressor: Vec2<T>, cfg: &ControllerConfig<T>) -> T {
    cfg.gamma1 * cfg.sign_theta1 * e2.dot(regressor)
}

/// `ṗ2 = γ2 σ(θ2) [1 0] e4 · [1 0] (Σ + Ψ ϑ̂1)`.
///
/// Only the roll components of `e4` and of the drift estimate enter.
#[inline]
pub fn inertia_hat_rate<T: Scalar>(
    e4: Vec2<T>,
    drift_known: Vec2<T>,
    drift_regressor: Vec2<T>,
    inv_mass_aux_hat: T,
    cfg: &ControllerConfig<T>,
) -> T {
    let w = drift_known + drift_regressor * inv_mass_aux_hat;
    cfg.gamma2 * cfg.sign_theta2 * e4.x * w.x
}

/// `θ̇1 = α1 e3ᵀ (e2 + (k1 p̂1 + k2 σ(θ1)) g(x3))`.
#[inline]
pub fn inv_mass_hat_rate<T: Scalar>(
    e2: Vec2<T>,
    e3: Vec2<T>,
    x3: ThrustRoll<T>,
    est: &EstimatorState<T>,
    cfg: &ControllerConfig<T>,
) -> T {
    let mix = cfg.k1 * est.mass_hat + cfg.k2 * cfg.sign_theta1;
    cfg.alpha1 * e3.dot(e2 + thrust_vector(x3) * mix)
}

/// `ϑ̇1 = α2 Ψᵀ e4`.
///
/// `ϑ̂1` stands in for `1/m` in front of `Ψ`, so `Ψ` is its regressor.
#[inline]
pub fn inv_mass_aux_hat_rate<T: Scalar>(e4: Vec2<T>, drift_regressor: Vec2<T>, cfg: &ControllerConfig<T>) -> T {
    cfg.alpha2 * drift_regressor.dot(e4)
}

/// All four rates from one controller evaluation.
pub fn rates<T: Scalar>(
    diag: &ControllerDiagnostics<T>,
    est: &EstimatorState<T>,
    cfg: &ControllerConfig<T>,
) -> EstimatorState<T> {
    EstimatorState {
        mass_hat: diag.mass_hat_rate,
        inertia_hat: inertia_hat_rate(
            diag.rate_error,
            diag.drift_known,
            diag.drift_regressor,
            est.inv_mass_aux_hat,
            cfg,
        ),
        inv_mass_hat: diag.inv_mass_hat_rate,
        inv_mass_aux_hat: inv_mass_aux_hat_rate(diag.rate_error, diag.drift_regressor, cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cfg(rate: f64) -> ControllerConfig<f64> {
        ControllerConfig::with_adaptation_rate(rate)
    }

    #[test]
    fn mass_hat_rate_examples() {
        let c = cfg(0.1);
        let phi = Vec2::new(0.0, -9.81); // e1 = 0, x2 = 0
        assert_eq!(mass_hat_rate(Vec2::zero(), phi, &c), 0.0);
        assert_relative_eq!(mass_hat_rate(Vec2::new(0.0, 1.0), phi, &c), -0.981);
        let mut flipped = c;
        flipped.sign_theta1 = -1.0;
        assert_relative_eq!(mass_hat_rate(Vec2::new(0.0, 1.0), phi, &flipped), 0.981);
    }

    #[test]
    fn inertia_hat_rate_uses_roll_components_only() {
        let c = cfg(1.0);
        assert_eq!(
            inertia_hat_rate(Vec2::new(0.0, 99.0), Vec2::new(3.0, 99.0), Vec2::zero(), 0.0, &c),
            0.0
        );
        assert_relative_eq!(
            inertia_hat_rate(Vec2::new(2.0, 99.0), Vec2::new(3.0, 99.0), Vec2::zero(), 0.0, &c),
            6.0
        );
        let slow = cfg(0.1);
        assert_relative_eq!(
            inertia_hat_rate(Vec2::new(1.0, 0.0), Vec2::new(1.0, 0.0), Vec2::zero(), 0.0, &slow),
            0.1
        );
        // Ψ ϑ̂1 enters the drift estimate
        assert_relative_eq!(
            inertia_hat_rate(Vec2::new(1.0, 0.0), Vec2::zero(), Vec2::new(2.0, 7.0), 0.5, &c),
            1.0
        );
    }

    #[test]
    fn inv_mass_hat_rate_examples() {
        let c = cfg(0.1);
        let est = EstimatorState::default();
        let x3 = ThrustRoll::new(1.0, 0.0); // g(x3) = (0, 1)
        assert_eq!(inv_mass_hat_rate(Vec2::new(1.0, 2.0), Vec2::zero(), x3, &est, &c), 0.0);
        assert_relative_eq!(
            inv_mass_hat_rate(Vec2::zero(), Vec2::new(0.0, 1.0), x3, &est, &c),
            0.5
        );
        // with p̂1 = 0 the k1 p̂1 term drops out
        let e2 = Vec2::new(0.4, -0.3);
        let e3 = Vec2::new(1.5, 2.0);
        let expect = 0.1 * e3.dot(e2 + Vec2::new(0.0, 5.0));
        assert_relative_eq!(inv_mass_hat_rate(e2, e3, x3, &est, &c), expect);
    }

    #[test]
    fn inv_mass_aux_hat_rate_examples() {
        assert_eq!(inv_mass_aux_hat_rate(Vec2::zero(), Vec2::new(1.0, 2.0), &cfg(0.1)), 0.0);
        assert_eq!(inv_mass_aux_hat_rate(Vec2::new(2.0, -1.0), Vec2::new(1.0, 2.0), &cfg(0.1)), 0.0);
        assert_relative_eq!(inv_mass_aux_hat_rate(Vec2::new(3.0, 0.0), Vec2::new(1.0, 0.0), &cfg(1.0)), 3.0);
    }

    #[test]
    fn zero_errors_freeze_the_estimates() {
        let diag = ControllerDiagnostics {
            drift_known: Vec2::new(3.0, -2.0),
            drift_regressor: Vec2::new(1.0, 4.0),
            ..Default::default()
        };
        let est = EstimatorState { mass_hat: 0.7, inertia_hat: 0.1, inv_mass_hat: 2.0, inv_mass_aux_hat: -1.0 };
        let r = rates(&diag, &est, &cfg(1.0));
        assert_eq!(r.to_array(), [0.0; 4]);
    }
}
