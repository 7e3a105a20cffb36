//! Camera trajectories.
//!
//! Scene trajectories interpolate a handful of control viewpoints on an arc
//! around the scene into exactly [`super::TRAJECTORY_LEN`] viewpoints. Each
//! control viewpoint sits at radius `max scene extent + δ`, `δ ∈ [0.5, 1]`,
//! from the scene center. The arc covers only part of the circle, which is
//! what makes observations structurally partial, and the lookat target
//! drifts across the instances in placement order.

use super::{layout, Scene, SINGLE_OBJECT_VIEWS, TRAJECTORY_LEN};
use crate::corpus::CanonicalShape;
use crate::error::{Error, Result};
use crate::geom::{self, Aabb, Vec3};
use crate::rng;
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Viewpoint {
    pub position: Vec3,
    pub lookat: Vec3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CameraTrajectory {
    pub viewpoints: Vec<Viewpoint>,
}

fn arc_positions(
    center: Vec3,
    radius_base: f64,
    n_ctrl: usize,
    arc: (f64, f64),
    elev: (f64, f64),
    r: &mut impl Rng,
) -> Vec<Vec3> {
    let start = r.random_range(0.0..std::f64::consts::TAU);
    let span = r.random_range(arc.0..=arc.1);
    (0..n_ctrl)
        .map(|j| {
            let theta = start + span * j as f64 / (n_ctrl - 1) as f64;
            let phi = r.random_range(elev.0..=elev.1);
            let radius = radius_base + r.random_range(0.5..=1.0);
            [
                center[0] + radius * phi.cos() * theta.cos(),
                center[1] + radius * phi.sin(),
                center[2] + radius * phi.cos() * theta.sin(),
            ]
        })
        .collect()
}

fn interpolate_polyline(control: &[Vec3], count: usize) -> Vec<Vec3> {
    if control.len() == 1 {
        return vec![control[0]; count];
    }
    let segments = control.len() - 1;
    (0..count)
        .map(|i| {
            let s = i as f64 / (count - 1) as f64 * segments as f64;
            let seg = (s.floor() as usize).min(segments - 1);
            let frac = s - seg as f64;
            geom::add(
                geom::scale(control[seg], 1.0 - frac),
                geom::scale(control[seg + 1], frac),
            )
        })
        .collect()
}

/// Flying trajectory around a scene: 100 viewpoints, lookat sweeping across
/// instance positions in placement order.
pub fn camera_trajectory(
    shapes: &[&CanonicalShape],
    scene: &Scene,
    seed: u64,
) -> Result<CameraTrajectory> {
    if scene.instances.is_empty() {
        return Err(Error::Input("cannot orbit an empty scene".into()));
    }
    let mut bbox = Aabb::empty();
    for inst in &scene.instances {
        let b = layout::instance_world_bbox(shapes[inst.shape_id], inst);
        bbox.expand(b.min);
        bbox.expand(b.max);
    }
    let center = bbox.center();
    let mut r = rng::rng(rng::subseed_str(seed, "camera"));
    let n_ctrl = r.random_range(4..=8);
    let controls = arc_positions(
        center,
        bbox.max_extent(),
        n_ctrl,
        (120f64.to_radians(), 270f64.to_radians()),
        (10f64.to_radians(), 40f64.to_radians()),
        &mut r,
    );
    let positions = interpolate_polyline(&controls, TRAJECTORY_LEN);

    // Lookat drifts across instance centers in placement order.
    let targets: Vec<Vec3> = scene.instances.iter().map(|i| i.position).collect();
    let lookats = interpolate_polyline(&targets, TRAJECTORY_LEN);

    Ok(CameraTrajectory {
        viewpoints: positions
            .into_iter()
            .zip(lookats)
            .map(|(position, lookat)| Viewpoint { position, lookat })
            .collect(),
    })
}

/// Viewpoint positions for observing one isolated object (pair-wise training
/// protocol): a short arc at radius `max extent + δ`, interpolated to
/// [`SINGLE_OBJECT_VIEWS`] positions, oriented at the origin.
pub fn single_object_viewpoints(max_extent: f64, seed: u64) -> Vec<Vec3> {
    let mut r = rng::rng(rng::subseed_str(seed, "object-views"));
    let n_ctrl = r.random_range(3..=6);
    let controls = arc_positions(
        [0.0; 3],
        max_extent,
        n_ctrl,
        (60f64.to_radians(), 200f64.to_radians()),
        (10f64.to_radians(), 40f64.to_radians()),
        &mut r,
    );
    interpolate_polyline(&controls, SINGLE_OBJECT_VIEWS)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_shape, Family, ShapeSpec};
    use crate::scene::place_objects;

    fn shapes(n: usize) -> Vec<CanonicalShape> {
        (0..n)
            .map(|i| {
                generate_shape(&ShapeSpec {
                    family: Family::Box,
                    params: [0.5; 4],
                    seed: i as u64,
                })
                .unwrap()
            })
            .collect()
    }

    #[test]
    fn trajectory_has_exactly_100_viewpoints() {
        let s = shapes(3);
        let refs: Vec<&CanonicalShape> = s.iter().collect();
        let scene = place_objects(&refs, 1).unwrap();
        let traj = camera_trajectory(&refs, &scene, 2).unwrap();
        assert_eq!(traj.viewpoints.len(), 100);
    }

    #[test]
    fn trajectory_is_seeded() {
        let s = shapes(2);
        let refs: Vec<&CanonicalShape> = s.iter().collect();
        let scene = place_objects(&refs, 1).unwrap();
        let a = camera_trajectory(&refs, &scene, 2).unwrap();
        let b = camera_trajectory(&refs, &scene, 2).unwrap();
        let c = camera_trajectory(&refs, &scene, 3).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn control_radii_respect_the_formula() {
        // Inspect the raw arc generator: center at origin, extent 2.0.
        let mut r = crate::rng::rng(9);
        let pts = arc_positions(
            [0.0; 3],
            2.0,
            6,
            (120f64.to_radians(), 270f64.to_radians()),
            (10f64.to_radians(), 40f64.to_radians()),
            &mut r,
        );
        for p in pts {
            let radius = geom::norm(p);
            assert!(
                (2.5..=3.0).contains(&radius),
                "control radius {radius} outside [2.5, 3.0]"
            );
        }
    }

    #[test]
    fn positions_stay_outside_every_footprint() {
        let s = shapes(5);
        let refs: Vec<&CanonicalShape> = s.iter().collect();
        for seed in 0..20 {
            let scene = place_objects(&refs, seed).unwrap();
            let traj = camera_trajectory(&refs, &scene, seed + 100).unwrap();
            for vp in &traj.viewpoints {
                for inst in &scene.instances {
                    let fp =
                        crate::scene::footprint(&s[inst.shape_id], inst.yaw, inst.position);
                    assert!(
                        !fp.contains_xz(vp.position[0], vp.position[2]),
                        "viewpoint inside a footprint"
                    );
                }
            }
        }
    }

    #[test]
    fn empty_scene_is_rejected() {
        let s = shapes(1);
        let refs: Vec<&CanonicalShape> = s.iter().collect();
        let empty = Scene {
            instances: vec![],
            seed: 0,
        };
        assert!(camera_trajectory(&refs, &empty, 1).is_err());
    }
}
