//! Parametric toy shape corpus.
//!
//! Each family is an assembly of axis-aligned cuboid parts, so surface
//! sampling is exact: pick a face with probability proportional to its area,
//! then a uniform point on it, with the face normal attached. Shapes are
//! normalized to a canonical frame (sample centroid at the origin, bounding
//! box diagonal equal to one). The Cabinet family carries a joint — a hinged
//! door or a prismatic drawer — whose part can be articulated.
//!
//! Descriptors are rotation-invariant geometric histograms standing in for
//! learned shape embeddings: a pairwise-distance histogram concatenated with
//! a normal-elevation histogram, L2-normalized.

use crate::error::{Error, Result};
use crate::geom::{self, Aabb, Vec3};
use crate::rng;
use rand::Rng;

pub const PARAM_COUNT: usize = 4;
/// Default number of canonical surface samples per shape.
pub const DEFAULT_SAMPLES: usize = 2048;
pub const DESCRIPTOR_DIM: usize = 64;
pub const HINGE_MAX: f64 = std::f64::consts::FRAC_PI_2;
pub const PRISMATIC_MAX: f64 = 0.4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Box,
    Table,
    Chair,
    Sofa,
    Lamp,
    Pillow,
    Cabinet,
}

pub const FAMILIES: [Family; 7] = [
    Family::Box,
    Family::Table,
    Family::Chair,
    Family::Sofa,
    Family::Lamp,
    Family::Pillow,
    Family::Cabinet,
];

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Box => "box",
            Family::Table => "table",
            Family::Chair => "chair",
            Family::Sofa => "sofa",
            Family::Lamp => "lamp",
            Family::Pillow => "pillow",
            Family::Cabinet => "cabinet",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        FAMILIES
            .iter()
            .copied()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::Parameter(format!("unknown shape family `{s}`")))
    }
}

/// Recipe for one shape: family, proportions in (0, 1], and a sampling seed.
/// The same spec always reproduces the same shape bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeSpec {
    pub family: Family,
    pub params: [f64; PARAM_COUNT],
    pub seed: u64,
}

impl ShapeSpec {
    pub fn validate(&self) -> Result<()> {
        for (i, p) in self.params.iter().enumerate() {
            if !(*p > 0.0 && *p <= 1.0) {
                return Err(Error::Parameter(format!(
                    "param[{i}] = {p} outside (0, 1] for family {}",
                    self.family.name()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JointKind {
    Hinge,
    Prismatic,
}

impl JointKind {
    pub fn theta_max(self) -> f64 {
        match self {
            JointKind::Hinge => HINGE_MAX,
            JointKind::Prismatic => PRISMATIC_MAX,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            JointKind::Hinge => "hinge",
            JointKind::Prismatic => "prismatic",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Joint {
    pub axis: Vec3,
    pub pivot: Vec3,
    pub kind: JointKind,
    /// True for points belonging to the moving part.
    pub part_mask: Vec<bool>,
}

/// One rectangular face of a cuboid part.
#[derive(Debug, Clone, PartialEq)]
pub struct Face {
    pub origin: Vec3,
    pub edge_u: Vec3,
    pub edge_v: Vec3,
    pub normal: Vec3,
    /// True if the face belongs to the articulated part.
    pub moving: bool,
}

impl Face {
    fn area(&self) -> f64 {
        geom::norm(geom::cross(self.edge_u, self.edge_v))
    }
}

/// A generated shape in its canonical unit-cube frame.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalShape {
    pub points: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    pub bbox: Aabb,
    pub joint: Option<Joint>,
    /// Face list in the canonical frame; used for resampling and articulation.
    pub faces: Vec<Face>,
}

/// L2-normalized rotation-invariant descriptor.
#[derive(Debug, Clone, PartialEq)]
pub struct Descriptor {
    pub vec: [f64; DESCRIPTOR_DIM],
}

impl Descriptor {
    pub fn cosine(&self, other: &Descriptor) -> f64 {
        self.vec
            .iter()
            .zip(other.vec.iter())
            .map(|(a, b)| a * b)
            .sum()
    }
}

// ── Family constructions ──────────────────────────────────────────────────────

/// Push the six faces of an axis-aligned cuboid centered at `c` with half
/// extents `h`.
fn cuboid(faces: &mut Vec<Face>, c: Vec3, h: Vec3, moving: bool) {
    let (cx, cy, cz) = (c[0], c[1], c[2]);
    let (hx, hy, hz) = (h[0], h[1], h[2]);
    let mut push = |origin: Vec3, eu: Vec3, ev: Vec3, n: Vec3| {
        faces.push(Face {
            origin,
            edge_u: eu,
            edge_v: ev,
            normal: n,
            moving,
        });
    };
    push(
        [cx + hx, cy - hy, cz - hz],
        [0.0, 2.0 * hy, 0.0],
        [0.0, 0.0, 2.0 * hz],
        [1.0, 0.0, 0.0],
    );
    push(
        [cx - hx, cy - hy, cz - hz],
        [0.0, 2.0 * hy, 0.0],
        [0.0, 0.0, 2.0 * hz],
        [-1.0, 0.0, 0.0],
    );
    push(
        [cx - hx, cy + hy, cz - hz],
        [2.0 * hx, 0.0, 0.0],
        [0.0, 0.0, 2.0 * hz],
        [0.0, 1.0, 0.0],
    );
    push(
        [cx - hx, cy - hy, cz - hz],
        [2.0 * hx, 0.0, 0.0],
        [0.0, 0.0, 2.0 * hz],
        [0.0, -1.0, 0.0],
    );
    push(
        [cx - hx, cy - hy, cz + hz],
        [2.0 * hx, 0.0, 0.0],
        [0.0, 2.0 * hy, 0.0],
        [0.0, 0.0, 1.0],
    );
    push(
        [cx - hx, cy - hy, cz - hz],
        [2.0 * hx, 0.0, 0.0],
        [0.0, 2.0 * hy, 0.0],
        [0.0, 0.0, -1.0],
    );
}

struct Assembly {
    faces: Vec<Face>,
    joint: Option<(Vec3, Vec3, JointKind)>, // axis, pivot
}

fn build_assembly(family: Family, p: &[f64; PARAM_COUNT]) -> Assembly {
    let mut faces = Vec::new();
    let mut joint = None;
    match family {
        Family::Box => {
            let h = [
                0.15 + 0.35 * p[0],
                0.15 + 0.35 * p[1],
                0.15 + 0.35 * p[2],
            ];
            cuboid(&mut faces, [0.0, h[1], 0.0], h, false);
        }
        Family::Table => {
            let half_w = 0.25 + 0.30 * p[0];
            let half_d = 0.20 + 0.25 * p[2];
            let height = 0.35 + 0.35 * p[3];
            let top_t = 0.02 + 0.04 * p[1];
            let leg = 0.02 + 0.03 * p[1];
            cuboid(
                &mut faces,
                [0.0, height - top_t, 0.0],
                [half_w, top_t, half_d],
                false,
            );
            let leg_h = (height - 2.0 * top_t) / 2.0;
            for (sx, sz) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                cuboid(
                    &mut faces,
                    [sx * (half_w - leg), leg_h, sz * (half_d - leg)],
                    [leg, leg_h, leg],
                    false,
                );
            }
        }
        Family::Chair => {
            let half_w = 0.16 + 0.12 * p[0];
            let seat_h = 0.20 + 0.15 * p[1];
            let seat_t = 0.025 + 0.02 * p[0];
            let back_h = 0.22 + 0.22 * p[2];
            let back_t = 0.02 + 0.02 * p[3];
            let leg = 0.018 + 0.02 * p[3];
            cuboid(
                &mut faces,
                [0.0, seat_h, 0.0],
                [half_w, seat_t, half_w],
                false,
            );
            for (sx, sz) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                cuboid(
                    &mut faces,
                    [sx * (half_w - leg), seat_h / 2.0, sz * (half_w - leg)],
                    [leg, seat_h / 2.0, leg],
                    false,
                );
            }
            cuboid(
                &mut faces,
                [0.0, seat_h + seat_t + back_h, -(half_w - back_t)],
                [half_w, back_h, back_t],
                false,
            );
        }
        Family::Sofa => {
            let half_w = 0.35 + 0.25 * p[0];
            let half_d = 0.18 + 0.12 * p[2];
            let base_h = 0.10 + 0.08 * p[1];
            let back_h = 0.14 + 0.14 * p[3];
            let arm = 0.05 + 0.04 * p[1];
            cuboid(
                &mut faces,
                [0.0, base_h, 0.0],
                [half_w, base_h, half_d],
                false,
            );
            cuboid(
                &mut faces,
                [0.0, 2.0 * base_h + back_h, -(half_d - arm / 2.0)],
                [half_w, back_h, arm / 2.0],
                false,
            );
            for sx in [1.0, -1.0] {
                cuboid(
                    &mut faces,
                    [sx * (half_w - arm / 2.0), 2.0 * base_h + arm, 0.0],
                    [arm / 2.0, arm, half_d],
                    false,
                );
            }
        }
        Family::Lamp => {
            let base = 0.10 + 0.10 * p[0];
            let pole = 0.015 + 0.015 * p[1];
            let height = 0.45 + 0.35 * p[2];
            let shade = 0.08 + 0.10 * p[3];
            cuboid(&mut faces, [0.0, 0.02, 0.0], [base, 0.02, base], false);
            cuboid(
                &mut faces,
                [0.0, 0.04 + height / 2.0, 0.0],
                [pole, height / 2.0, pole],
                false,
            );
            cuboid(
                &mut faces,
                [0.0, 0.04 + height + shade * 0.8, 0.0],
                [shade, shade * 0.8, shade],
                false,
            );
        }
        Family::Pillow => {
            let h = [
                0.20 + 0.25 * p[0],
                0.04 + 0.06 * p[1],
                0.14 + 0.18 * p[2],
            ];
            cuboid(&mut faces, [0.0, h[1], 0.0], h, false);
        }
        Family::Cabinet => {
            let half_w = 0.20 + 0.15 * p[0];
            let half_h = 0.25 + 0.20 * p[1];
            let half_d = 0.12 + 0.10 * p[2];
            let panel_t = 0.012;
            // Body sits behind the front plane at z = half_d.
            cuboid(
                &mut faces,
                [0.0, half_h, -panel_t],
                [half_w, half_h, half_d - panel_t],
                false,
            );
            let kind = if p[3] <= 0.5 {
                JointKind::Hinge
            } else {
                JointKind::Prismatic
            };
            match kind {
                JointKind::Hinge => {
                    // Full-front door hinged on its left vertical edge.
                    cuboid(
                        &mut faces,
                        [0.0, half_h, half_d - panel_t],
                        [half_w, half_h, panel_t],
                        true,
                    );
                    joint = Some((
                        [0.0, 1.0, 0.0],
                        [-half_w, 0.0, half_d - panel_t],
                        JointKind::Hinge,
                    ));
                }
                JointKind::Prismatic => {
                    // Drawer face across the lower front, sliding outward.
                    cuboid(
                        &mut faces,
                        [0.0, half_h * 0.5, half_d - panel_t],
                        [half_w, half_h * 0.5, panel_t],
                        true,
                    );
                    joint = Some(([0.0, 0.0, 1.0], [0.0, 0.0, 0.0], JointKind::Prismatic));
                }
            }
        }
    }
    Assembly { faces, joint }
}

// ── Sampling ──────────────────────────────────────────────────────────────────

fn sample_faces(faces: &[Face], count: usize, seed: u64) -> (Vec<Vec3>, Vec<Vec3>, Vec<bool>) {
    let areas: Vec<f64> = faces.iter().map(Face::area).collect();
    let total: f64 = areas.iter().sum();
    let mut cum = Vec::with_capacity(areas.len());
    let mut acc = 0.0;
    for a in &areas {
        acc += a;
        cum.push(acc);
    }
    let mut rng = rng::rng(seed);
    let mut points = Vec::with_capacity(count);
    let mut normals = Vec::with_capacity(count);
    let mut moving = Vec::with_capacity(count);
    for _ in 0..count {
        let u: f64 = rng.random_range(0.0..total);
        let idx = cum.partition_point(|c| *c < u).min(faces.len() - 1);
        let f = &faces[idx];
        let (s, t): (f64, f64) = (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
        let p = geom::add(
            f.origin,
            geom::add(geom::scale(f.edge_u, s), geom::scale(f.edge_v, t)),
        );
        points.push(p);
        normals.push(f.normal);
        moving.push(f.moving);
    }
    (points, normals, moving)
}

// ── Operations ────────────────────────────────────────────────────────────────

/// Generate a shape in its canonical frame from a spec.
pub fn generate_shape(spec: &ShapeSpec) -> Result<CanonicalShape> {
    spec.validate()?;
    let assembly = build_assembly(spec.family, &spec.params);
    let (mut points, normals, moving) =
        sample_faces(&assembly.faces, DEFAULT_SAMPLES, rng::subseed(spec.seed, 0x5a));

    // Center on the sample centroid.
    let mut centroid = [0.0; 3];
    for p in &points {
        centroid = geom::add(centroid, *p);
    }
    centroid = geom::scale(centroid, 1.0 / points.len() as f64);
    for p in &mut points {
        *p = geom::sub(*p, centroid);
    }
    // Rescale so the bounding-box diagonal is exactly one.
    let bbox = Aabb::of_points(&points);
    let scale = 1.0 / bbox.diagonal();
    for p in &mut points {
        *p = geom::scale(*p, scale);
    }
    let bbox = Aabb::of_points(&points);

    let faces: Vec<Face> = assembly
        .faces
        .iter()
        .map(|f| Face {
            origin: geom::scale(geom::sub(f.origin, centroid), scale),
            edge_u: geom::scale(f.edge_u, scale),
            edge_v: geom::scale(f.edge_v, scale),
            normal: f.normal,
            moving: f.moving,
        })
        .collect();
    let joint = assembly.joint.map(|(axis, pivot, kind)| Joint {
        axis,
        pivot: geom::scale(geom::sub(pivot, centroid), scale),
        kind,
        part_mask: moving,
    });

    Ok(CanonicalShape {
        points,
        normals,
        bbox,
        joint,
        faces,
    })
}

/// Draw fresh area-weighted surface samples from a shape's faces.
pub fn sample_surface(
    shape: &CanonicalShape,
    count: usize,
    seed: u64,
) -> Result<(Vec<Vec3>, Vec<Vec3>)> {
    if count == 0 {
        return Err(Error::Input("sample count must be at least 1".into()));
    }
    let (points, normals, _) = sample_faces(&shape.faces, count, seed);
    Ok((points, normals))
}

/// Apply an articulation state. Hinge joints rotate the moving part about
/// the joint axis through the pivot; prismatic joints translate it along the
/// axis. The bounding box is recomputed and may exceed the unit diagonal.
pub fn articulate(shape: &CanonicalShape, theta: f64) -> Result<CanonicalShape> {
    let joint = shape.joint.as_ref().ok_or(Error::MissingJoint)?;
    let max = joint.kind.theta_max();
    if !(0.0..=max + 1e-12).contains(&theta) {
        return Err(Error::Parameter(format!(
            "theta {theta} outside [0, {max}] for {} joint",
            joint.kind.name()
        )));
    }
    if theta == 0.0 {
        return Ok(shape.clone());
    }

    let rot = rotation_about_axis(joint.axis, theta);
    let pivot = joint.pivot;
    let delta = geom::scale(joint.axis, theta);
    let kind = joint.kind;
    let transform_point = |p: Vec3| -> Vec3 {
        match kind {
            JointKind::Hinge => geom::add(apply3(&rot, geom::sub(p, pivot)), pivot),
            JointKind::Prismatic => geom::add(p, delta),
        }
    };
    let transform_dir = |d: Vec3| -> Vec3 {
        match kind {
            JointKind::Hinge => apply3(&rot, d),
            JointKind::Prismatic => d,
        }
    };

    let mut points = shape.points.clone();
    let mut normals = shape.normals.clone();
    for (i, m) in joint.part_mask.iter().enumerate() {
        if *m {
            points[i] = transform_point(points[i]);
            normals[i] = transform_dir(normals[i]);
        }
    }
    let faces: Vec<Face> = shape
        .faces
        .iter()
        .map(|f| {
            if f.moving {
                Face {
                    origin: transform_point(f.origin),
                    edge_u: transform_dir(f.edge_u),
                    edge_v: transform_dir(f.edge_v),
                    normal: transform_dir(f.normal),
                    moving: true,
                }
            } else {
                f.clone()
            }
        })
        .collect();
    let bbox = Aabb::of_points(&points);
    Ok(CanonicalShape {
        points,
        normals,
        bbox,
        joint: shape.joint.clone(),
        faces,
    })
}

fn rotation_about_axis(axis: Vec3, theta: f64) -> [[f64; 3]; 3] {
    let (s, c) = theta.sin_cos();
    let t = 1.0 - c;
    let [x, y, z] = axis;
    [
        [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
        [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
        [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
    ]
}

fn apply3(m: &[[f64; 3]; 3], v: Vec3) -> Vec3 {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

/// Rotation-invariant descriptor of a sampled shape.
pub fn descriptor(shape: &CanonicalShape) -> Result<Descriptor> {
    descriptor_from_points(&shape.points, &shape.normals)
}

/// Descriptor over raw (possibly partial) points and unit normals.
///
/// First half: histogram of all pairwise point distances. Second half:
/// histogram of normal elevation (vertical component). Both are order-free,
/// invariant to rotation about the vertical axis, and translation-invariant.
pub fn descriptor_from_points(points: &[Vec3], normals: &[Vec3]) -> Result<Descriptor> {
    if points.len() < 32 {
        return Err(Error::Input(format!(
            "descriptor needs at least 32 points, got {}",
            points.len()
        )));
    }
    const HALF: usize = DESCRIPTOR_DIM / 2;
    let mut dist_hist = [0.0f64; HALF];
    // Pairwise distances of a unit-diagonal shape lie in [0, ~1]; leave a
    // little headroom for articulated or noisy inputs.
    let dmax = 1.2;
    let mut pairs = 0u64;
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            let d = geom::dist(points[i], points[j]);
            let bin = ((d / dmax) * HALF as f64) as usize;
            dist_hist[bin.min(HALF - 1)] += 1.0;
            pairs += 1;
        }
    }
    if pairs > 0 {
        for v in &mut dist_hist {
            *v /= pairs as f64;
        }
    }
    let mut elev_hist = [0.0f64; HALF];
    for n in normals {
        let e = (n[1].clamp(-1.0, 1.0) + 1.0) / 2.0;
        let bin = (e * HALF as f64) as usize;
        elev_hist[bin.min(HALF - 1)] += 1.0;
    }
    for v in &mut elev_hist {
        *v /= normals.len() as f64;
    }

    let mut vec = [0.0f64; DESCRIPTOR_DIM];
    vec[..HALF].copy_from_slice(&dist_hist);
    vec[HALF..].copy_from_slice(&elev_hist);
    let norm: f64 = vec.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm < 1e-12 {
        return Err(Error::Degenerate("all-zero descriptor".into()));
    }
    for v in &mut vec {
        *v /= norm;
    }
    Ok(Descriptor { vec })
}

// ── Corpus container ──────────────────────────────────────────────────────────

#[derive(Debug, Clone)]
pub struct CorpusShape {
    pub id: usize,
    pub spec: ShapeSpec,
    pub canon: CanonicalShape,
    pub descriptor: Descriptor,
}

/// A generated shape pool split into a training part and a held-out part.
///
/// Held-out shapes are generated in sibling pairs (same family, nearby
/// proportions) so that benchmark construction can always find a similar
/// source for any target.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub shapes: Vec<CorpusShape>,
    pub holdout_start: usize,
    pub seed: u64,
}

impl Corpus {
    pub fn train(&self) -> &[CorpusShape] {
        &self.shapes[..self.holdout_start]
    }

    pub fn holdout(&self) -> &[CorpusShape] {
        &self.shapes[self.holdout_start..]
    }
}

/// Generate `n_train` training shapes plus `n_holdout` held-out shapes
/// (rounded up to an even count for sibling pairing).
pub fn build_corpus(n_train: usize, n_holdout: usize, seed: u64) -> Result<Corpus> {
    let n_holdout = n_holdout + n_holdout % 2;
    let mut shapes = Vec::with_capacity(n_train + n_holdout);
    let mut r = rng::rng(rng::subseed_str(seed, "corpus-specs"));
    for i in 0..n_train {
        let family = FAMILIES[i % FAMILIES.len()];
        let params = std::array::from_fn(|_| r.random_range(0.05..=1.0f64));
        let spec = ShapeSpec {
            family,
            params,
            seed: rng::subseed(seed, i as u64),
        };
        push_shape(&mut shapes, spec)?;
    }
    // Held-out sibling pairs; cycle families so Cabinet is always present.
    for k in 0..n_holdout / 2 {
        let family = FAMILIES[k % FAMILIES.len()];
        let base: [f64; PARAM_COUNT] = std::array::from_fn(|_| r.random_range(0.1..=0.9f64));
        let sibling: [f64; PARAM_COUNT] = {
            let mut s = base;
            for v in &mut s {
                *v = (*v + r.random_range(-0.05..=0.05)).clamp(0.05, 1.0);
            }
            // Keep the joint kind identical for cabinets.
            if family == Family::Cabinet {
                s[3] = base[3];
            }
            s
        };
        for params in [base, sibling] {
            let i = shapes.len();
            let spec = ShapeSpec {
                family,
                params,
                seed: rng::subseed(seed, 0x8000_0000 + i as u64),
            };
            push_shape(&mut shapes, spec)?;
        }
    }
    Ok(Corpus {
        shapes,
        holdout_start: n_train,
        seed,
    })
}

fn push_shape(shapes: &mut Vec<CorpusShape>, spec: ShapeSpec) -> Result<()> {
    let canon = generate_shape(&spec)?;
    let desc = descriptor(&canon)?;
    shapes.push(CorpusShape {
        id: shapes.len(),
        spec,
        canon,
        descriptor: desc,
    });
    Ok(())
}
