//! Synthetic scenes: iterative collision-free layout, rescans, camera
//! trajectories, partial observations, and the three evaluation benchmarks
//! (spatial repetition, temporal repetition, articulation).

mod bench;
mod camera;
mod layout;
mod observe;

pub use bench::{
    build_articulation_benchmark, build_spatial_benchmark, build_temporal_benchmark,
    ArticulationBenchmark, ArticulationScene, SpatialBenchmark, SpatialRoles, SpatialScene,
    TemporalBenchmark, TemporalScene,
};
pub use camera::{camera_trajectory, single_object_viewpoints, CameraTrajectory, Viewpoint};
pub use layout::{footprint, instance_world_bbox, make_rescans, place_objects, posed_points};
pub use observe::{observe, observe_points, Observation};

use crate::geom::Vec3;

/// One placed object: index into the scene's shape list, yaw about the
/// vertical axis, world position (`position[1]` is vertical), and an optional
/// articulation value carried as metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneInstance {
    pub shape_id: usize,
    pub yaw: f64,
    pub position: Vec3,
    pub theta: Option<f64>,
}

/// An arrangement of instances whose top-down footprints are pairwise
/// disjoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub instances: Vec<SceneInstance>,
    pub seed: u64,
}

/// Default observation noise (standard deviation of the isotropic jitter).
pub const DEFAULT_NOISE_SIGMA: f64 = 0.005;
/// Default observation dropout fraction.
pub const DEFAULT_DROPOUT: f64 = 0.3;
/// Viewpoints in a scene camera trajectory.
pub const TRAJECTORY_LEN: usize = 100;
/// Viewpoints used for isolated-object (training) observations.
pub const SINGLE_OBJECT_VIEWS: usize = 24;
