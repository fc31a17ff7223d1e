//! Singularity-free adaptive backstepping control of a planar bicopter:
//! plant model, controller, adaptation laws, reference generators, a
//! fixed-step closed-loop simulator with a Lyapunov monitor, and the
//! experiment harness behind the `bicopter` CLI.

pub mod controller;
pub mod estimator;
pub mod harness;
pub mod linalg;
pub mod model;
mod scalar;
pub mod sim;
pub mod trajectory;

pub use scalar::Scalar;

pub type Vec2f = linalg::Vec2<f64>;
pub type Mat2f = linalg::Mat2<f64>;
pub type PlantState64 = model::PlantState<f64>;
pub type PlantState32 = model::PlantState<f32>;
pub type PhysicalParams64 = model::PhysicalParams<f64>;
pub type ControllerConfig64 = controller::ControllerConfig<f64>;
pub type ControllerConfig32 = controller::ControllerConfig<f32>;
pub type EstimatorState64 = controller::EstimatorState<f64>;
pub type AugmentedState64 = sim::AugmentedState<f64>;
pub type SimRecord64 = sim::SimRecord<f64>;
