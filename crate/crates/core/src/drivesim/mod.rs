//! Deterministic 2D lane-following simulator.

pub mod controller;
pub mod env;
pub mod render;
pub mod route;
pub mod vehicle;

pub use controller::PurePursuit;
pub use env::{
    observe, pose_error, reward, DoneReason, DriveEnv, EnvConfig, SensorNoise, StepResult, TraceRecord,
    GOAL_REWARD, LANE_DEPARTURE_REWARD, TIMEOUT_REWARD,
};
pub use render::{render, RenderConfig};
pub use route::{
    generate_route, max_abs_curvature, Projection, RouteGeometry, RouteKind, RouteParams, RouteSpec,
    DRIVABLE_CURVATURE,
};
pub use vehicle::{step, VehicleParams, VehicleState};
