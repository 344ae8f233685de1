//! Synthetic worlds and downstream evaluation of point selections.

pub mod ba;
pub mod metrics;
pub mod sweep;
pub mod world;

pub use ba::{gauss_newton_ba, BaOptions, BaResult};
pub use metrics::{ape, recall_proxy, rpe, DEFAULT_RECALL_THRESHOLD};
pub use sweep::{
    budget_sweep, evaluate_subset, select_points, Budget, EvalOptions, EvalReport, Method, SelectConfig, SweepConfig,
    SweepRow,
};
pub use world::{generate_world, GroundTruth, Shape, World, WorldSpec};
