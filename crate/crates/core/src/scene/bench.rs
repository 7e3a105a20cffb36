//! Benchmark scene construction.
//!
//! Spatial repetition: six objects per scene — a target, two occluders, and
//! three sources (identical, similar, negative). Temporal repetition: one
//! target arrangement plus three rescans of 4–8 objects. Articulation: three
//! copies of one articulated object in different motion states plus two
//! occluder objects.

use super::{layout, Scene};
use crate::corpus::{articulate, CanonicalShape, CorpusShape};
use crate::error::{Error, Result};
use crate::rng;
use rand::seq::SliceRandom;
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpatialRoles {
    pub target: usize,
    pub occluders: [usize; 2],
    pub identical: usize,
    pub similar: usize,
    pub negative: usize,
}

#[derive(Debug, Clone)]
pub struct SpatialScene {
    /// Corpus shape id per instance.
    pub corpus_ids: Vec<usize>,
    pub scene: Scene,
    pub roles: SpatialRoles,
}

#[derive(Debug, Clone)]
pub struct SpatialBenchmark {
    pub scenes: Vec<SpatialScene>,
    pub similar_threshold: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct TemporalScene {
    pub corpus_ids: Vec<usize>,
    /// `scans[0]` is the target arrangement; instance `i` corresponds to
    /// instance `i` in every rescan (the ground-truth matching table).
    pub scans: Vec<Scene>,
}

#[derive(Debug, Clone)]
pub struct TemporalBenchmark {
    pub scenes: Vec<TemporalScene>,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct ArticulationScene {
    pub corpus_ids: Vec<usize>,
    pub scene: Scene,
    /// Instance indices of the three articulated copies, rest state first.
    pub copies: [usize; 3],
    pub occluders: [usize; 2],
}

#[derive(Debug, Clone)]
pub struct ArticulationBenchmark {
    pub scenes: Vec<ArticulationScene>,
    pub seed: u64,
}

fn pick<'a, R: Rng>(pool: &'a [CorpusShape], r: &mut R) -> &'a CorpusShape {
    &pool[r.random_range(0..pool.len())]
}

/// Spatial-repetition benchmark over a shape pool.
pub fn build_spatial_benchmark(
    pool: &[CorpusShape],
    n_scenes: usize,
    similar_threshold: f64,
    seed: u64,
) -> Result<SpatialBenchmark> {
    if pool.len() < 4 {
        return Err(Error::Config(format!(
            "spatial benchmark needs at least 4 pool shapes, got {}",
            pool.len()
        )));
    }
    let mut scenes = Vec::with_capacity(n_scenes);
    for s in 0..n_scenes {
        let sseed = rng::subseed(rng::subseed_str(seed, "spatial"), s as u64);
        let mut r = rng::rng(sseed);

        // Target with at least one similar candidate; resample on failure.
        let (target, similar) = {
            let mut found = None;
            for _ in 0..1000 {
                let t = pick(pool, &mut r);
                let candidates: Vec<&CorpusShape> = pool
                    .iter()
                    .filter(|c| {
                        c.id != t.id
                            && c.spec.family == t.spec.family
                            && c.descriptor.cosine(&t.descriptor) > similar_threshold
                    })
                    .collect();
                if !candidates.is_empty() {
                    let pick_idx = r.random_range(0..candidates.len());
                    found = Some((t, candidates[pick_idx]));
                    break;
                }
            }
            found.ok_or_else(|| {
                Error::Config(format!(
                    "no similar candidate above threshold {similar_threshold} in the pool"
                ))
            })?
        };
        let negatives: Vec<&CorpusShape> = pool
            .iter()
            .filter(|c| c.spec.family != target.spec.family)
            .collect();
        if negatives.is_empty() {
            return Err(Error::Config("pool has a single family; no negatives".into()));
        }
        let negative = negatives[r.random_range(0..negatives.len())];
        let others: Vec<&CorpusShape> = pool.iter().filter(|c| c.id != target.id).collect();
        let occ1 = others[r.random_range(0..others.len())];
        let occ2 = others[r.random_range(0..others.len())];

        // Roles in canonical order, then shuffled into placement order.
        let mut slots: Vec<(usize, &CorpusShape)> = vec![
            (0, target),
            (1, occ1),
            (2, occ2),
            (3, target), // identical source
            (4, similar),
            (5, negative),
        ];
        slots.shuffle(&mut r);
        let shapes: Vec<&CanonicalShape> = slots.iter().map(|(_, s)| &s.canon).collect();
        let scene = layout::place_objects(&shapes, rng::subseed(sseed, 0x10))?;
        let corpus_ids: Vec<usize> = slots.iter().map(|(_, s)| s.id).collect();
        let pos = |role: usize| slots.iter().position(|(r0, _)| *r0 == role).unwrap();
        let roles = SpatialRoles {
            target: pos(0),
            occluders: [pos(1), pos(2)],
            identical: pos(3),
            similar: pos(4),
            negative: pos(5),
        };
        scenes.push(SpatialScene {
            corpus_ids,
            scene,
            roles,
        });
    }
    Ok(SpatialBenchmark {
        scenes,
        similar_threshold,
        seed,
    })
}

/// Temporal-repetition benchmark: 4–8 distinct objects, four arrangements.
pub fn build_temporal_benchmark(
    pool: &[CorpusShape],
    n_scenes: usize,
    seed: u64,
) -> Result<TemporalBenchmark> {
    if pool.len() < 8 {
        return Err(Error::Config(format!(
            "temporal benchmark needs at least 8 pool shapes, got {}",
            pool.len()
        )));
    }
    let mut scenes = Vec::with_capacity(n_scenes);
    for s in 0..n_scenes {
        let sseed = rng::subseed(rng::subseed_str(seed, "temporal"), s as u64);
        let mut r = rng::rng(sseed);
        let count = r.random_range(4..=8usize);
        let mut ids: Vec<usize> = (0..pool.len()).collect();
        ids.shuffle(&mut r);
        ids.truncate(count);
        let shapes: Vec<&CanonicalShape> = ids.iter().map(|i| &pool[*i].canon).collect();
        let target = layout::place_objects(&shapes, rng::subseed(sseed, 0x20))?;
        let rescans = layout::make_rescans(&shapes, &target, 3, rng::subseed(sseed, 0x21))?;
        let mut scans = vec![target];
        scans.extend(rescans);
        scenes.push(TemporalScene {
            corpus_ids: ids.iter().map(|i| pool[*i].id).collect(),
            scans,
        });
    }
    Ok(TemporalBenchmark { scenes, seed })
}

/// Articulation benchmark: three motion states of one articulated object
/// (rest state first) plus two occluders.
pub fn build_articulation_benchmark(
    pool: &[CorpusShape],
    n_scenes: usize,
    seed: u64,
) -> Result<ArticulationBenchmark> {
    let articulated: Vec<&CorpusShape> =
        pool.iter().filter(|c| c.canon.joint.is_some()).collect();
    if articulated.is_empty() {
        return Err(Error::Config("pool has no articulated shapes".into()));
    }
    let mut scenes = Vec::with_capacity(n_scenes);
    for s in 0..n_scenes {
        let sseed = rng::subseed(rng::subseed_str(seed, "articulated"), s as u64);
        let mut r = rng::rng(sseed);
        let subject = articulated[r.random_range(0..articulated.len())];
        let theta_max = subject.canon.joint.as_ref().unwrap().kind.theta_max();
        let thetas = [
            0.0,
            r.random_range(0.1 * theta_max..=theta_max),
            r.random_range(0.1 * theta_max..=theta_max),
        ];
        let others: Vec<&CorpusShape> = pool.iter().filter(|c| c.id != subject.id).collect();
        let occ1 = others[r.random_range(0..others.len())];
        let occ2 = others[r.random_range(0..others.len())];

        // slots: roles 0..2 are the copies in state order, 3..4 occluders.
        let articulated_shapes: Vec<CanonicalShape> = thetas
            .iter()
            .map(|t| articulate(&subject.canon, *t))
            .collect::<Result<_>>()?;
        let mut slots: Vec<(usize, &CorpusShape, Option<f64>, &CanonicalShape)> = vec![
            (0, subject, Some(thetas[0]), &articulated_shapes[0]),
            (1, subject, Some(thetas[1]), &articulated_shapes[1]),
            (2, subject, Some(thetas[2]), &articulated_shapes[2]),
            (3, occ1, None, &occ1.canon),
            (4, occ2, None, &occ2.canon),
        ];
        slots.shuffle(&mut r);
        let shapes: Vec<&CanonicalShape> = slots.iter().map(|(_, _, _, c)| *c).collect();
        let mut scene = layout::place_objects(&shapes, rng::subseed(sseed, 0x30))?;
        for (inst, (_, _, theta, _)) in scene.instances.iter_mut().zip(&slots) {
            inst.theta = *theta;
        }
        let pos = |role: usize| slots.iter().position(|(r0, _, _, _)| *r0 == role).unwrap();
        scenes.push(ArticulationScene {
            corpus_ids: slots.iter().map(|(_, c, _, _)| c.id).collect(),
            scene,
            copies: [pos(0), pos(1), pos(2)],
            occluders: [pos(3), pos(4)],
        });
    }
    Ok(ArticulationBenchmark { scenes, seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::build_corpus;

    #[test]
    fn spatial_scenes_have_six_instances_with_consistent_roles() {
        let corpus = build_corpus(0, 20, 31).unwrap();
        let bench = build_spatial_benchmark(corpus.holdout(), 10, 0.65, 5).unwrap();
        assert_eq!(bench.scenes.len(), 10);
        for sc in &bench.scenes {
            assert_eq!(sc.scene.instances.len(), 6);
            assert_eq!(sc.corpus_ids.len(), 6);
            let ids = &sc.corpus_ids;
            // The identical source shares the corpus shape id with the target.
            assert_eq!(ids[sc.roles.target], ids[sc.roles.identical]);
            // The negative source comes from a different family.
            let fam = |cid: usize| {
                corpus
                    .shapes
                    .iter()
                    .find(|s| s.id == cid)
                    .unwrap()
                    .spec
                    .family
            };
            assert_ne!(fam(ids[sc.roles.target]), fam(ids[sc.roles.negative]));
            // The similar source shares the family and clears the threshold.
            assert_eq!(fam(ids[sc.roles.target]), fam(ids[sc.roles.similar]));
            assert_ne!(ids[sc.roles.target], ids[sc.roles.similar]);
        }
    }

    #[test]
    fn temporal_scenes_have_four_arrangements_of_4_to_8_objects() {
        let corpus = build_corpus(0, 20, 32).unwrap();
        let bench = build_temporal_benchmark(corpus.holdout(), 10, 6).unwrap();
        for sc in &bench.scenes {
            assert_eq!(sc.scans.len(), 4);
            let k = sc.corpus_ids.len();
            assert!((4..=8).contains(&k));
            for scan in &sc.scans {
                assert_eq!(scan.instances.len(), k);
            }
            // Shape multiset identical across scans by construction: the
            // matching table is the instance index itself.
            let mut sorted = sc.corpus_ids.clone();
            sorted.sort_unstable();
            sorted.dedup();
            assert_eq!(sorted.len(), k, "objects are distinct");
        }
    }

    #[test]
    fn articulation_scenes_have_rest_state_and_shared_shape() {
        let corpus = build_corpus(0, 20, 33).unwrap();
        let bench = build_articulation_benchmark(corpus.holdout(), 10, 7).unwrap();
        for sc in &bench.scenes {
            assert_eq!(sc.scene.instances.len(), 5);
            let copy_ids: Vec<usize> = sc.copies.iter().map(|i| sc.corpus_ids[*i]).collect();
            assert_eq!(copy_ids[0], copy_ids[1]);
            assert_eq!(copy_ids[0], copy_ids[2]);
            assert_eq!(sc.scene.instances[sc.copies[0]].theta, Some(0.0));
            let t1 = sc.scene.instances[sc.copies[1]].theta.unwrap();
            let t2 = sc.scene.instances[sc.copies[2]].theta.unwrap();
            assert!(t1 > 0.0 && t2 > 0.0);
            for occ in sc.occluders {
                assert!(sc.scene.instances[occ].theta.is_none());
            }
        }
    }

    #[test]
    fn benchmarks_are_deterministic_per_seed() {
        let corpus = build_corpus(0, 16, 34).unwrap();
        let a = build_spatial_benchmark(corpus.holdout(), 4, 0.6, 9).unwrap();
        let b = build_spatial_benchmark(corpus.holdout(), 4, 0.6, 9).unwrap();
        for (x, y) in a.scenes.iter().zip(&b.scenes) {
            assert_eq!(x.scene, y.scene);
            assert_eq!(x.corpus_ids, y.corpus_ids);
        }
    }
}
