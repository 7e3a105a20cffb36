//! Partial per-instance observations.
//!
//! A surface sample is visible from a viewpoint when its normal faces the
//! camera and the segment from the camera to the sample clears every other
//! instance's world-frame bounding box. Samples visible from at least one
//! viewpoint are pooled (once each, with a visibility count), jittered with
//! isotropic Gaussian noise, and thinned by dropout.

use super::{layout, CameraTrajectory, Scene};
use crate::corpus::CanonicalShape;
use crate::error::{Error, Result};
use crate::geom::{self, Aabb, Vec3};
use crate::rng;
use rand::Rng;
use rand_distr::StandardNormal;

/// World-frame partial point cloud of one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub instance_id: usize,
    pub points: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    /// Number of viewpoints that saw each surviving point.
    pub visibility_count: Vec<u32>,
    /// Set when the instance had no visible surface sample at all.
    pub warning: bool,
}

impl Observation {
    pub fn empty(instance_id: usize) -> Self {
        Observation {
            instance_id,
            points: Vec::new(),
            normals: Vec::new(),
            visibility_count: Vec::new(),
            warning: true,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Observe one posed sample set against a list of occluder boxes.
pub fn observe_points(
    instance_id: usize,
    points: &[Vec3],
    normals: &[Vec3],
    occluders: &[Aabb],
    viewpoints: &[Vec3],
    noise_sigma: f64,
    dropout: f64,
    seed: u64,
) -> Result<Observation> {
    if noise_sigma < 0.0 {
        return Err(Error::Parameter(format!(
            "noise sigma must be non-negative, got {noise_sigma}"
        )));
    }
    if !(0.0..1.0).contains(&dropout) {
        return Err(Error::Parameter(format!(
            "dropout must lie in [0, 1), got {dropout}"
        )));
    }
    let mut visible: Vec<(usize, u32)> = Vec::new();
    for (i, (p, n)) in points.iter().zip(normals).enumerate() {
        let mut count = 0u32;
        for c in viewpoints {
            let to_cam = geom::sub(*c, *p);
            if geom::dot(*n, to_cam) <= 0.0 {
                continue;
            }
            if occluders.iter().any(|b| b.intersects_segment(*c, *p)) {
                continue;
            }
            count += 1;
        }
        if count > 0 {
            visible.push((i, count));
        }
    }
    if visible.is_empty() {
        return Ok(Observation::empty(instance_id));
    }

    let mut r = rng::rng(rng::subseed(seed, instance_id as u64));
    let mut out = Observation {
        instance_id,
        points: Vec::new(),
        normals: Vec::new(),
        visibility_count: Vec::new(),
        warning: false,
    };
    for &(i, count) in &visible {
        // Draw jitter and the dropout coin unconditionally so the stream
        // stays aligned regardless of which points survive.
        let jitter: [f64; 3] = std::array::from_fn(|_| {
            let g: f64 = r.sample(StandardNormal);
            g * noise_sigma
        });
        let keep: f64 = r.random();
        if keep < dropout {
            continue;
        }
        out.points.push(geom::add(points[i], jitter));
        out.normals.push(normals[i]);
        out.visibility_count.push(count);
    }
    if out.points.is_empty() {
        // Dropout removed everything; keep the lowest-index visible point so
        // a visible instance never yields an empty observation.
        let (i, count) = visible[0];
        out.points.push(points[i]);
        out.normals.push(normals[i]);
        out.visibility_count.push(count);
    }
    Ok(out)
}

/// Observe every instance in a scene along a trajectory.
pub fn observe(
    shapes: &[&CanonicalShape],
    scene: &Scene,
    traj: &CameraTrajectory,
    noise_sigma: f64,
    dropout: f64,
    seed: u64,
) -> Result<Vec<Observation>> {
    let posed: Vec<(Vec<Vec3>, Vec<Vec3>)> = scene
        .instances
        .iter()
        .map(|inst| layout::posed_points(shapes[inst.shape_id], inst))
        .collect();
    let boxes: Vec<Aabb> = scene
        .instances
        .iter()
        .map(|inst| layout::instance_world_bbox(shapes[inst.shape_id], inst))
        .collect();
    let viewpoints: Vec<Vec3> = traj.viewpoints.iter().map(|v| v.position).collect();

    let mut out = Vec::with_capacity(scene.instances.len());
    for (k, (pts, nrm)) in posed.iter().enumerate() {
        let occluders: Vec<Aabb> = boxes
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != k)
            .map(|(_, b)| *b)
            .collect();
        out.push(observe_points(
            k,
            pts,
            nrm,
            &occluders,
            &viewpoints,
            noise_sigma,
            dropout,
            rng::subseed(seed, k as u64),
        )?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_shape, Family, ShapeSpec};
    use crate::scene::{camera_trajectory, place_objects, SceneInstance};

    fn box_shape(seed: u64) -> CanonicalShape {
        generate_shape(&ShapeSpec {
            family: Family::Box,
            params: [0.5; 4],
            seed,
        })
        .unwrap()
    }

    #[test]
    fn single_camera_sees_exactly_the_front_facing_hemisphere() {
        let shape = box_shape(1);
        let cam = [5.0, 0.0, 0.0];
        let obs = observe_points(
            0,
            &shape.points,
            &shape.normals,
            &[],
            &[cam],
            0.0,
            0.0,
            3,
        )
        .unwrap();
        // Brute-force oracle: the normal test alone decides visibility.
        let expected: Vec<usize> = shape
            .points
            .iter()
            .zip(&shape.normals)
            .enumerate()
            .filter(|(_, (p, n))| geom::dot(**n, geom::sub(cam, **p)) > 0.0)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(obs.len(), expected.len());
        for (got, want) in obs.points.iter().zip(expected.iter()) {
            assert_eq!(*got, shape.points[*want]);
        }
        assert!(!obs.warning);
    }

    #[test]
    fn occluder_box_blocks_the_ray() {
        // One sample behind a box on the camera ray.
        let p = [0.0, 0.0, 0.0];
        let n = [1.0, 0.0, 0.0];
        let cam = [5.0, 0.0, 0.0];
        let occluder = Aabb {
            min: [2.0, -0.5, -0.5],
            max: [3.0, 0.5, 0.5],
        };
        let blocked = observe_points(0, &[p], &[n], &[occluder], &[cam], 0.0, 0.0, 1).unwrap();
        assert!(blocked.is_empty());
        assert!(blocked.warning);
        let clear = observe_points(0, &[p], &[n], &[], &[cam], 0.0, 0.0, 1).unwrap();
        assert_eq!(clear.len(), 1);
    }

    #[test]
    fn noiseless_observation_is_subset_of_posed_samples() {
        let shapes: Vec<CanonicalShape> = (0..3).map(box_shape).collect();
        let refs: Vec<&CanonicalShape> = shapes.iter().collect();
        let scene = place_objects(&refs, 5).unwrap();
        let traj = camera_trajectory(&refs, &scene, 6).unwrap();
        let obs = observe(&refs, &scene, &traj, 0.0, 0.0, 7).unwrap();
        for (k, ob) in obs.iter().enumerate() {
            let (posed, _) = layout::posed_points(&shapes[k], &scene.instances[k]);
            for p in &ob.points {
                assert!(
                    posed.iter().any(|q| geom::dist(*p, *q) < 1e-12),
                    "observed point not among posed samples"
                );
            }
        }
    }

    #[test]
    fn more_viewpoints_never_remove_points() {
        let shape = box_shape(2);
        let inst = SceneInstance {
            shape_id: 0,
            yaw: 0.3,
            position: [0.0, 0.0, 0.0],
            theta: None,
        };
        let (pts, nrm) = layout::posed_points(&shape, &inst);
        let views: Vec<Vec3> = (0..10)
            .map(|i| {
                let a = i as f64 * 0.35;
                [3.0 * a.cos(), 1.0, 3.0 * a.sin()]
            })
            .collect();
        let mut prev = 0;
        for n_views in 1..=views.len() {
            let obs =
                observe_points(0, &pts, &nrm, &[], &views[..n_views], 0.0, 0.0, 1).unwrap();
            assert!(obs.len() >= prev, "visibility shrank with more viewpoints");
            prev = obs.len();
        }
    }

    #[test]
    fn dropout_thins_but_never_empties() {
        let shape = box_shape(3);
        let cam = [4.0, 0.5, 0.0];
        let full = observe_points(0, &shape.points, &shape.normals, &[], &[cam], 0.0, 0.0, 9)
            .unwrap();
        let thinned =
            observe_points(0, &shape.points, &shape.normals, &[], &[cam], 0.0, 0.5, 9).unwrap();
        assert!(thinned.len() < full.len());
        assert!(!thinned.is_empty());
        let frac = thinned.len() as f64 / full.len() as f64;
        assert!((frac - 0.5).abs() < 0.06, "kept fraction {frac}");

        // Extreme dropout keeps at least one point.
        let nearly_all =
            observe_points(0, &shape.points, &shape.normals, &[], &[cam], 0.0, 0.999, 9)
                .unwrap();
        assert!(!nearly_all.is_empty());
    }

    #[test]
    fn parameters_are_validated() {
        let shape = box_shape(4);
        let cam = [4.0, 0.5, 0.0];
        assert!(
            observe_points(0, &shape.points, &shape.normals, &[], &[cam], -0.1, 0.0, 1).is_err()
        );
        assert!(
            observe_points(0, &shape.points, &shape.normals, &[], &[cam], 0.0, 1.0, 1).is_err()
        );
    }

    #[test]
    fn observation_is_seeded() {
        let shape = box_shape(5);
        let cam = [4.0, 0.5, 0.0];
        let a = observe_points(0, &shape.points, &shape.normals, &[], &[cam], 0.01, 0.3, 11)
            .unwrap();
        let b = observe_points(0, &shape.points, &shape.normals, &[], &[cam], 0.01, 0.3, 11)
            .unwrap();
        let c = observe_points(0, &shape.points, &shape.normals, &[], &[cam], 0.01, 0.3, 12)
            .unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
