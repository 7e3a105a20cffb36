//! Small 3D vector/box helpers shared across the crate.
//!
//! Points are plain `[f64; 3]` with `y` as the vertical axis.

pub type Vec3 = [f64; 3];

pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

pub fn dist(a: Vec3, b: Vec3) -> f64 {
    norm(sub(a, b))
}

/// Normalize; returns `fallback` for near-zero input.
pub fn normalize_or(a: Vec3, fallback: Vec3) -> Vec3 {
    let n = norm(a);
    if n < 1e-12 {
        fallback
    } else {
        scale(a, 1.0 / n)
    }
}

/// Rotate about the vertical (y) axis by `yaw` radians.
pub fn rotate_yaw(p: Vec3, yaw: f64) -> Vec3 {
    let (s, c) = yaw.sin_cos();
    [c * p[0] + s * p[2], p[1], -s * p[0] + c * p[2]]
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn empty() -> Self {
        Aabb {
            min: [f64::INFINITY; 3],
            max: [f64::NEG_INFINITY; 3],
        }
    }

    pub fn of_points(points: &[Vec3]) -> Self {
        let mut b = Aabb::empty();
        for p in points {
            b.expand(*p);
        }
        b
    }

    pub fn expand(&mut self, p: Vec3) {
        for k in 0..3 {
            self.min[k] = self.min[k].min(p[k]);
            self.max[k] = self.max[k].max(p[k]);
        }
    }

    pub fn extent(&self) -> Vec3 {
        sub(self.max, self.min)
    }

    pub fn max_extent(&self) -> f64 {
        let e = self.extent();
        e[0].max(e[1]).max(e[2])
    }

    pub fn diagonal(&self) -> f64 {
        norm(self.extent())
    }

    pub fn center(&self) -> Vec3 {
        scale(add(self.min, self.max), 0.5)
    }

    pub fn corners(&self) -> [Vec3; 8] {
        let (lo, hi) = (self.min, self.max);
        [
            [lo[0], lo[1], lo[2]],
            [hi[0], lo[1], lo[2]],
            [lo[0], hi[1], lo[2]],
            [hi[0], hi[1], lo[2]],
            [lo[0], lo[1], hi[2]],
            [hi[0], lo[1], hi[2]],
            [lo[0], hi[1], hi[2]],
            [hi[0], hi[1], hi[2]],
        ]
    }

    pub fn contains(&self, p: Vec3) -> bool {
        (0..3).all(|k| p[k] >= self.min[k] && p[k] <= self.max[k])
    }

    /// Slab test: does the open segment from `a` to `b` pass through the box?
    ///
    /// Touching exactly at the endpoints does not count, so a camera ray to a
    /// surface sample is not occluded by the sample's own box face.
    pub fn intersects_segment(&self, a: Vec3, b: Vec3) -> bool {
        let d = sub(b, a);
        let mut t0 = 0.0_f64;
        let mut t1 = 1.0_f64;
        for k in 0..3 {
            if d[k].abs() < 1e-15 {
                if a[k] < self.min[k] || a[k] > self.max[k] {
                    return false;
                }
            } else {
                let inv = 1.0 / d[k];
                let (mut ta, mut tb) = ((self.min[k] - a[k]) * inv, (self.max[k] - a[k]) * inv);
                if ta > tb {
                    std::mem::swap(&mut ta, &mut tb);
                }
                t0 = t0.max(ta);
                t1 = t1.min(tb);
                if t0 > t1 {
                    return false;
                }
            }
        }
        // Require a real interior crossing, not a grazing endpoint contact.
        t1 > 1e-9 && t0 < 1.0 - 1e-9 && t1 - t0 > 1e-12
    }
}

/// Axis-aligned rectangle in the horizontal (x, z) plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FootprintRect {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl FootprintRect {
    pub fn sides(&self) -> [f64; 2] {
        [self.max[0] - self.min[0], self.max[1] - self.min[1]]
    }

    pub fn short_side(&self) -> f64 {
        let s = self.sides();
        s[0].min(s[1])
    }

    pub fn translated(&self, dx: f64, dz: f64) -> Self {
        FootprintRect {
            min: [self.min[0] + dx, self.min[1] + dz],
            max: [self.max[0] + dx, self.max[1] + dz],
        }
    }

    pub fn overlaps(&self, other: &FootprintRect) -> bool {
        self.min[0] < other.max[0]
            && other.min[0] < self.max[0]
            && self.min[1] < other.max[1]
            && other.min[1] < self.max[1]
    }

    pub fn contains_xz(&self, x: f64, z: f64) -> bool {
        x >= self.min[0] && x <= self.max[0] && z >= self.min[1] && z <= self.max[1]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn yaw_rotation_preserves_height_and_norm() {
        let p = [1.0, 2.0, 3.0];
        let q = rotate_yaw(p, 0.7);
        assert_eq!(q[1], 2.0);
        assert!((norm(q) - norm(p)).abs() < 1e-12);
        let r = rotate_yaw(q, -0.7);
        for k in 0..3 {
            assert!((r[k] - p[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn segment_box_hits_and_misses() {
        let b = Aabb {
            min: [-0.5, -0.5, -0.5],
            max: [0.5, 0.5, 0.5],
        };
        assert!(b.intersects_segment([-2.0, 0.0, 0.0], [2.0, 0.0, 0.0]));
        assert!(!b.intersects_segment([-2.0, 2.0, 0.0], [2.0, 2.0, 0.0]));
        // Segment ending on the box surface: endpoint contact only.
        assert!(!b.intersects_segment([-2.0, 0.0, 0.0], [-0.5, 0.0, 0.0]));
        // Segment fully before the box.
        assert!(!b.intersects_segment([-3.0, 0.0, 0.0], [-1.0, 0.0, 0.0]));
    }

    #[test]
    fn rect_overlap_is_strict() {
        let a = FootprintRect {
            min: [0.0, 0.0],
            max: [1.0, 1.0],
        };
        let touching = a.translated(1.0, 0.0);
        let overlapping = a.translated(0.9, 0.0);
        assert!(!a.overlaps(&touching));
        assert!(a.overlaps(&overlapping));
    }
}
