//! Iterative collision-free object placement.
//!
//! Objects are added one at a time. Each new object starts at the mean of
//! the already-placed positions (the origin for the first), picks a random
//! horizontal direction, and walks outward from an initial distance equal to
//! the sum of the placed objects' short footprint sides, in increments of
//! 0.05, until its top-down footprint clears every placed footprint.

use super::{Scene, SceneInstance};
use crate::corpus::CanonicalShape;
use crate::error::{Error, Result};
use crate::geom::{self, Aabb, FootprintRect, Vec3};
use crate::rng;
use rand::Rng;

const STEP: f64 = 0.05;
const MAX_INCREMENTS: usize = 10_000;
pub const VERTICAL_OFFSET_RANGE: (f64, f64) = (-0.5, 0.2);

/// Top-down axis-aligned footprint of a yaw-rotated shape at a position.
/// Computed from the rotated bounding-box corners.
pub fn footprint(shape: &CanonicalShape, yaw: f64, position: Vec3) -> FootprintRect {
    let mut min = [f64::INFINITY; 2];
    let mut max = [f64::NEG_INFINITY; 2];
    for corner in shape.bbox.corners() {
        let r = geom::rotate_yaw(corner, yaw);
        min[0] = min[0].min(r[0] + position[0]);
        max[0] = max[0].max(r[0] + position[0]);
        min[1] = min[1].min(r[2] + position[2]);
        max[1] = max[1].max(r[2] + position[2]);
    }
    FootprintRect { min, max }
}

/// Canonical samples posed into the world frame.
pub fn posed_points(shape: &CanonicalShape, inst: &SceneInstance) -> (Vec<Vec3>, Vec<Vec3>) {
    let pts = shape
        .points
        .iter()
        .map(|p| geom::add(geom::rotate_yaw(*p, inst.yaw), inst.position))
        .collect();
    let nrm = shape
        .normals
        .iter()
        .map(|n| geom::rotate_yaw(*n, inst.yaw))
        .collect();
    (pts, nrm)
}

/// World-frame axis-aligned box of a posed instance.
pub fn instance_world_bbox(shape: &CanonicalShape, inst: &SceneInstance) -> Aabb {
    let mut b = Aabb::empty();
    for corner in shape.bbox.corners() {
        b.expand(geom::add(geom::rotate_yaw(corner, inst.yaw), inst.position));
    }
    b
}

/// Place `shapes` into a collision-free arrangement.
pub fn place_objects(shapes: &[&CanonicalShape], seed: u64) -> Result<Scene> {
    if shapes.is_empty() || shapes.len() > 16 {
        return Err(Error::Input(format!(
            "can place between 1 and 16 shapes, got {}",
            shapes.len()
        )));
    }
    let mut r = rng::rng(rng::subseed_str(seed, "layout"));
    let mut instances: Vec<SceneInstance> = Vec::with_capacity(shapes.len());
    let mut footprints: Vec<FootprintRect> = Vec::new();

    for (i, shape) in shapes.iter().enumerate() {
        let yaw = r.random_range(0.0..std::f64::consts::TAU);
        let start = if instances.is_empty() {
            [0.0, 0.0]
        } else {
            let mut m = [0.0, 0.0];
            for inst in &instances {
                m[0] += inst.position[0];
                m[1] += inst.position[2];
            }
            [
                m[0] / instances.len() as f64,
                m[1] / instances.len() as f64,
            ]
        };
        let dir_angle = r.random_range(0.0..std::f64::consts::TAU);
        let dir = [dir_angle.cos(), dir_angle.sin()];
        let d0: f64 = footprints.iter().map(FootprintRect::short_side).sum();

        let base = footprint(shape, yaw, [0.0, 0.0, 0.0]);
        let mut steps = 0usize;
        let (x, z) = loop {
            let d = d0 + STEP * steps as f64;
            let x = start[0] + d * dir[0];
            let z = start[1] + d * dir[1];
            let fp = base.translated(x, z);
            if footprints.iter().all(|other| !fp.overlaps(other)) {
                break (x, z);
            }
            steps += 1;
            if steps > MAX_INCREMENTS {
                return Err(Error::Placement(steps));
            }
        };
        let y = r.random_range(VERTICAL_OFFSET_RANGE.0..=VERTICAL_OFFSET_RANGE.1);
        let inst = SceneInstance {
            shape_id: i,
            yaw,
            position: [x, y, z],
            theta: None,
        };
        footprints.push(footprint(shape, yaw, inst.position));
        instances.push(inst);
    }
    Ok(Scene { instances, seed })
}

/// Fresh arrangements of the same shapes: temporal rescans realized by
/// re-running the layout generator.
pub fn make_rescans(
    shapes: &[&CanonicalShape],
    scene: &Scene,
    count: usize,
    seed: u64,
) -> Result<Vec<Scene>> {
    if count == 0 {
        return Err(Error::Input("rescan count must be at least 1".into()));
    }
    let _ = scene;
    (0..count)
        .map(|i| place_objects(shapes, rng::subseed(rng::subseed_str(seed, "rescan"), i as u64)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_shape, Family, ShapeSpec};

    fn shape(seed: u64) -> CanonicalShape {
        generate_shape(&ShapeSpec {
            family: Family::Box,
            params: [0.5; 4],
            seed,
        })
        .unwrap()
    }

    #[test]
    fn single_shape_sits_at_the_origin() {
        let s = shape(1);
        let scene = place_objects(&[&s], 42).unwrap();
        assert_eq!(scene.instances.len(), 1);
        let p = scene.instances[0].position;
        assert_eq!(p[0], 0.0);
        assert_eq!(p[2], 0.0);
        let (lo, hi) = VERTICAL_OFFSET_RANGE;
        assert!(p[1] >= lo && p[1] <= hi);
    }

    #[test]
    fn two_boxes_have_disjoint_footprints() {
        let a = shape(1);
        let b = shape(2);
        let scene = place_objects(&[&a, &b], 7).unwrap();
        let fps: Vec<_> = scene
            .instances
            .iter()
            .zip([&a, &b])
            .map(|(inst, s)| footprint(s, inst.yaw, inst.position))
            .collect();
        assert!(!fps[0].overlaps(&fps[1]));
    }

    #[test]
    fn many_seeds_never_overlap_and_terminate_quickly() {
        // Independent O(K²) rectangle-overlap oracle over 100 seeded scenes.
        let shapes: Vec<CanonicalShape> = (0..8).map(shape).collect();
        let refs: Vec<&CanonicalShape> = shapes.iter().collect();
        for seed in 0..100 {
            let scene = place_objects(&refs, seed).unwrap();
            let fps: Vec<FootprintRect> = scene
                .instances
                .iter()
                .map(|inst| footprint(&shapes[inst.shape_id], inst.yaw, inst.position))
                .collect();
            for i in 0..fps.len() {
                for j in (i + 1)..fps.len() {
                    let a = &fps[i];
                    let b = &fps[j];
                    let overlap = a.min[0] < b.max[0]
                        && b.min[0] < a.max[0]
                        && a.min[1] < b.max[1]
                        && b.min[1] < a.max[1];
                    assert!(!overlap, "seed {seed}: instances {i} and {j} overlap");
                }
            }
        }
    }

    #[test]
    fn placement_is_deterministic() {
        let shapes: Vec<CanonicalShape> = (0..4).map(shape).collect();
        let refs: Vec<&CanonicalShape> = shapes.iter().collect();
        let a = place_objects(&refs, 5).unwrap();
        let b = place_objects(&refs, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rescans_preserve_shape_ids_and_change_poses() {
        let shapes: Vec<CanonicalShape> = (0..4).map(shape).collect();
        let refs: Vec<&CanonicalShape> = shapes.iter().collect();
        let scene = place_objects(&refs, 5).unwrap();
        let rescans = make_rescans(&refs, &scene, 3, 9).unwrap();
        assert_eq!(rescans.len(), 3);
        for r in &rescans {
            let ids: Vec<usize> = r.instances.iter().map(|i| i.shape_id).collect();
            let orig: Vec<usize> = scene.instances.iter().map(|i| i.shape_id).collect();
            assert_eq!(ids, orig);
            assert_ne!(
                r.instances[0].position, scene.instances[0].position,
                "rescan should move objects"
            );
        }
        assert!(make_rescans(&refs, &scene, 0, 9).is_err());
    }

    #[test]
    fn rescan_instances_relate_by_recoverable_rigid_transform() {
        // Posing the same canonical samples in two scans gives corresponding
        // point sets; the alignment baseline must recover the relative
        // transform exactly from known correspondences.
        let shapes: Vec<CanonicalShape> = (0..3).map(shape).collect();
        let refs: Vec<&CanonicalShape> = shapes.iter().collect();
        let scan_a = place_objects(&refs, 30).unwrap();
        let scan_b = make_rescans(&refs, &scan_a, 1, 31).unwrap().remove(0);
        let pairs: Vec<(usize, usize)> = (0..shapes[0].points.len()).map(|i| (i, i)).collect();
        for k in 0..3 {
            let (pa, _) = posed_points(&shapes[k], &scan_a.instances[k]);
            let (pb, _) = posed_points(&shapes[k], &scan_b.instances[k]);
            let reg = crate::align::register_rigid(&pa, &pb, Some(&pairs)).unwrap();
            for (a, b) in pa.iter().zip(&pb) {
                let moved = reg.transform.apply_point(*a);
                assert!(geom::dist(moved, *b) < 1e-9);
            }
        }
    }
}
