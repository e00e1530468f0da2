//! Coordination-aware routing of connected automated vehicles over a grid of
//! signal-free intersections.
//!
//! The core is generic over the scalar type; the aliases below fix it to `f64`.

pub mod coordination;
pub mod network;
pub mod routing;
pub mod scalar;
pub mod simulation;
pub mod trajectory;

pub use coordination::CavId;
pub use scalar::Scalar;

pub type Trajectory = trajectory::CubicTrajectory<f64>;
pub type Limits = trajectory::MotionLimits<f64>;
pub type Safety = coordination::SafetyParams<f64>;
pub type Ledger = coordination::IntersectionLedger<f64>;
pub type Graph = network::NetworkGraph<f64>;
pub type Geometry = network::GridGeometry<f64>;
pub type Trip = routing::TripRequest<f64>;
pub type Params = simulation::SimParams<f64>;
pub type World = simulation::WorldState<f64>;
pub type RunMetrics = simulation::Metrics<f64>;
