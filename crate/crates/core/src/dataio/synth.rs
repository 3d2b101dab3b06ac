//! Synthetic spatio-temporal interaction datasets.
//!
//! Each video has a fixed set of actors that drift with a reflected Gaussian
//! random walk. Objects are redrawn independently in every clip, so nothing in
//! clip `t` says where objects were in clip `t ± 1`. Raw features are a
//! per-kind embedding plus Gaussian noise; they never encode a label. Labels
//! come from geometric rules:
//!
//! * `spatial-proximity`: an object of kind `k` has its center within
//!   `radius` of the actor's center in the same clip.
//! * `temporal-adjacent-object`: the same test against objects of clip
//!   `t − offset` or `t + offset`, using the actor's clip-`t` center.
//! * `actor-actor`: another actor is within `radius` in the same clip.
//!
//! All entities are written as ground-truth boxes (actors carry `labels`,
//! possibly empty). Object kinds are returned separately as [`SplitTruth`].

use std::collections::HashMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::record::{ClipRecord, EntityDetection};
use crate::graph::{BoxGeometry, EntityKind};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleKind {
    SpatialProximity,
    TemporalAdjacentObject,
    ActorActor,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthRule {
    pub class_id: u32,
    pub kind: RuleKind,
    /// Object kind the rule looks for; ignored by `actor-actor`.
    #[serde(default)]
    pub object_kind: usize,
    pub radius: f64,
    /// Clip offset for `temporal-adjacent-object`.
    #[serde(default = "default_offset")]
    pub offset: usize,
}

fn default_offset() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub train_videos: usize,
    pub val_videos: usize,
    pub clips_per_video: usize,
    /// Inclusive range; drawn once per video.
    pub actors_per_video: [usize; 2],
    /// Inclusive range; drawn per clip.
    pub objects_per_clip: [usize; 2],
    pub object_kinds: usize,
    pub feature_width: usize,
    /// Standard deviation of the feature noise.
    pub noise: f64,
    /// Per-clip standard deviation of each actor's center step.
    pub actor_speed: f64,
    /// Box `[width, height]`.
    pub actor_box: [f64; 2],
    pub object_box: [f64; 2],
    pub rules: Vec<SynthRule>,
    pub seed: u64,
}

impl SynthSpec {
    /// Two-rule benchmark: class 0 fires on a nearby kind-0 object in the same
    /// clip, class 1 on a nearby kind-1 object in an adjacent clip.
    pub fn context_benchmark(seed: u64) -> Self {
        Self {
            train_videos: 48,
            val_videos: 16,
            clips_per_video: 10,
            actors_per_video: [1, 3],
            objects_per_clip: [2, 4],
            object_kinds: 4,
            feature_width: 12,
            noise: 0.3,
            actor_speed: 0.03,
            actor_box: [0.12, 0.3],
            object_box: [0.08, 0.08],
            rules: vec![
                SynthRule { class_id: 0, kind: RuleKind::SpatialProximity, object_kind: 0, radius: 0.3, offset: 0 },
                SynthRule { class_id: 1, kind: RuleKind::TemporalAdjacentObject, object_kind: 1, radius: 0.3, offset: 1 },
            ],
            seed,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::Config(format!("generator spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec serializes")
    }

    pub fn n_classes(&self) -> usize {
        self.rules.iter().map(|r| r.class_id as usize + 1).max().unwrap_or(0)
    }

    pub fn rules_of(&self, kind: RuleKind) -> impl Iterator<Item = &SynthRule> {
        self.rules.iter().filter(move |r| r.kind == kind)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.clips_per_video == 0 || self.feature_width == 0 {
            return bad("clips_per_video and feature_width must be positive".into());
        }
        if self.actors_per_video[0] > self.actors_per_video[1] || self.objects_per_clip[0] > self.objects_per_clip[1] {
            return bad("count ranges must satisfy min <= max".into());
        }
        if !(self.noise >= 0.0 && self.actor_speed >= 0.0) {
            return bad("noise and actor_speed must be non-negative".into());
        }
        for size in [self.actor_box, self.object_box] {
            if !size.iter().all(|s| *s > 0.0 && *s < 1.0) {
                return bad(format!("box size {size:?} must lie in (0, 1)"));
            }
        }
        if self.rules.is_empty() {
            return bad("at least one rule is required".into());
        }
        let mut seen = std::collections::HashSet::new();
        for r in &self.rules {
            if !seen.insert(r.class_id) {
                return bad(format!("class {} has more than one rule", r.class_id));
            }
            if !(r.radius > 0.0 && r.radius <= 1.0) {
                return bad(format!("class {}: radius {} outside (0, 1]", r.class_id, r.radius));
            }
            if r.kind != RuleKind::ActorActor && r.object_kind >= self.object_kinds {
                return bad(format!("class {}: object kind {} but only {} kinds", r.class_id, r.object_kind, self.object_kinds));
            }
            if r.kind == RuleKind::TemporalAdjacentObject && r.offset == 0 {
                return bad(format!("class {}: temporal rule needs offset >= 1", r.class_id));
            }
        }
        Ok(())
    }
}

/// Object kind of every entity, aligned with the records (`None` for actors).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SplitTruth {
    pub entity_kinds: Vec<Vec<Option<usize>>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SynthReport {
    /// `(class_id, train positives, val positives)`.
    pub positives: Vec<(u32, usize, usize)>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct SynthOutput {
    pub train: Vec<ClipRecord>,
    pub val: Vec<ClipRecord>,
    pub train_truth: SplitTruth,
    pub val_truth: SplitTruth,
    /// Noise-free feature of actors (index 0) and of object kind `k` (index `k + 1`).
    pub embeddings: Vec<Vec<f64>>,
    pub report: SynthReport,
}

pub fn synth_generate(spec: &SynthSpec) -> Result<SynthOutput> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let scale = 1.0 / (spec.feature_width as f64).sqrt();
    let embeddings: Vec<Vec<f64>> = (0..=spec.object_kinds)
        .map(|_| (0..spec.feature_width).map(|_| rng.sample::<f64, _>(StandardNormal) * 2.0 * scale).collect())
        .collect();
    let (train, train_truth) = generate_split(spec, "train", spec.train_videos, &embeddings, &mut rng)?;
    let (val, val_truth) = generate_split(spec, "val", spec.val_videos, &embeddings, &mut rng)?;

    let mut report = SynthReport::default();
    let count = |records: &[ClipRecord], class: u32| {
        records.iter().flat_map(|c| &c.entities).filter(|e| e.labels.as_ref().is_some_and(|l| l.contains(&class))).count()
    };
    for r in &spec.rules {
        let (a, b) = (count(&train, r.class_id), count(&val, r.class_id));
        if a == 0 || b == 0 {
            let msg = format!("class {} has zero positives in {} split", r.class_id, if a == 0 { "train" } else { "val" });
            log::warn!("{msg}");
            report.warnings.push(msg);
        }
        report.positives.push((r.class_id, a, b));
    }
    Ok(SynthOutput { train, val, train_truth, val_truth, embeddings, report })
}

struct ClipLayout {
    actors: Vec<BoxGeometry>,
    objects: Vec<(BoxGeometry, usize)>,
}

fn generate_split(
    spec: &SynthSpec,
    prefix: &str,
    n_videos: usize,
    embeddings: &[Vec<f64>],
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<ClipRecord>, SplitTruth)> {
    let noise = Normal::new(0.0, spec.noise).map_err(|e| Error::Config(e.to_string()))?;
    let step = Normal::new(0.0, spec.actor_speed).map_err(|e| Error::Config(e.to_string()))?;
    let [aw, ah] = spec.actor_box;
    let [ow, oh] = spec.object_box;
    let mut records = Vec::new();
    let mut truth = SplitTruth::default();
    for v in 0..n_videos {
        let video_id = format!("{prefix}-{v:04}");
        let n_actors = rng.random_range(spec.actors_per_video[0]..=spec.actors_per_video[1]);
        let mut pos: Vec<(f64, f64)> =
            (0..n_actors).map(|_| (rng.random_range(aw / 2.0..=1.0 - aw / 2.0), rng.random_range(ah / 2.0..=1.0 - ah / 2.0))).collect();
        let mut layouts = Vec::with_capacity(spec.clips_per_video);
        for t in 0..spec.clips_per_video {
            if t > 0 {
                for p in &mut pos {
                    p.0 = reflect(p.0 + step.sample(rng), aw / 2.0, 1.0 - aw / 2.0);
                    p.1 = reflect(p.1 + step.sample(rng), ah / 2.0, 1.0 - ah / 2.0);
                }
            }
            let actors = pos.iter().map(|&(x, y)| BoxGeometry::from_center(x, y, aw, ah)).collect::<Result<Vec<_>>>()?;
            let n_objects = rng.random_range(spec.objects_per_clip[0]..=spec.objects_per_clip[1]);
            let mut objects = Vec::with_capacity(n_objects);
            for _ in 0..n_objects {
                let kind = rng.random_range(0..spec.object_kinds);
                let x = rng.random_range(ow / 2.0..=1.0 - ow / 2.0);
                let y = rng.random_range(oh / 2.0..=1.0 - oh / 2.0);
                objects.push((BoxGeometry::from_center(x, y, ow, oh)?, kind));
            }
            layouts.push(ClipLayout { actors, objects });
        }
        for t in 0..layouts.len() {
            let mut entities = Vec::new();
            let mut kinds = Vec::new();
            for (a, b) in layouts[t].actors.iter().enumerate() {
                let labels = spec.rules.iter().filter(|r| rule_fires(r, &layouts, t, a)).map(|r| r.class_id).collect::<Vec<_>>();
                entities.push(entity(EntityKind::Actor, *b, &embeddings[0], &noise, rng, Some(labels)));
                kinds.push(None);
            }
            for (b, k) in &layouts[t].objects {
                entities.push(entity(EntityKind::Object, *b, &embeddings[k + 1], &noise, rng, None));
                kinds.push(Some(*k));
            }
            records.push(ClipRecord { video_id: video_id.clone(), timestamp: 900 + t as i64, entities });
            truth.entity_kinds.push(kinds);
        }
    }
    Ok((records, truth))
}

fn rule_fires(rule: &SynthRule, layouts: &[ClipLayout], t: usize, actor: usize) -> bool {
    let me = &layouts[t].actors[actor];
    let near_kind = |clip: &ClipLayout| clip.objects.iter().any(|(b, k)| *k == rule.object_kind && me.center_distance(b) <= rule.radius);
    match rule.kind {
        RuleKind::SpatialProximity => near_kind(&layouts[t]),
        RuleKind::TemporalAdjacentObject => {
            let before = t.checked_sub(rule.offset).map(|s| &layouts[s]);
            let after = layouts.get(t + rule.offset);
            before.into_iter().chain(after).any(near_kind)
        }
        RuleKind::ActorActor => layouts[t].actors.iter().enumerate().any(|(j, b)| j != actor && me.center_distance(b) <= rule.radius),
    }
}

fn reflect(mut x: f64, lo: f64, hi: f64) -> f64 {
    while x < lo || x > hi {
        x = if x < lo { 2.0 * lo - x } else { 2.0 * hi - x };
    }
    x
}

fn entity<R: Rng>(kind: EntityKind, bbox: BoxGeometry, emb: &[f64], noise: &Normal<f64>, rng: &mut R, labels: Option<Vec<u32>>) -> EntityDetection {
    let feature = emb.iter().map(|v| (v + noise.sample(rng)) as f32).collect();
    EntityDetection { kind, bbox, score: 1.0, feature, labels }
}

/// Recomputes every actor label from boxes and object kinds alone.
///
/// Returns, per record and entity, the sorted class list of actors and `None`
/// for objects.
pub fn reference_labels(records: &[ClipRecord], truth: &SplitTruth, rules: &[SynthRule]) -> Vec<Vec<Option<Vec<u32>>>> {
    let index: HashMap<(&str, i64), usize> = records.iter().enumerate().map(|(i, r)| ((r.video_id.as_str(), r.timestamp), i)).collect();
    let objects_of = |i: usize| {
        records[i].entities.iter().zip(&truth.entity_kinds[i]).filter_map(|(e, k)| k.map(|k| (e.bbox, k))).collect::<Vec<_>>()
    };
    records
        .iter()
        .enumerate()
        .map(|(i, rec)| {
            rec.entities
                .iter()
                .enumerate()
                .map(|(ei, e)| {
                    if e.kind != EntityKind::Actor {
                        return None;
                    }
                    let (cx, cy) = e.bbox.center();
                    let close = |b: &BoxGeometry, r: f64| {
                        let (x, y) = b.center();
                        ((cx - x).powi(2) + (cy - y).powi(2)).sqrt() <= r
                    };
                    let mut labels: Vec<u32> = rules
                        .iter()
                        .filter(|rule| match rule.kind {
                            RuleKind::SpatialProximity => objects_of(i).iter().any(|(b, k)| *k == rule.object_kind && close(b, rule.radius)),
                            RuleKind::TemporalAdjacentObject => [rec.timestamp - rule.offset as i64, rec.timestamp + rule.offset as i64]
                                .iter()
                                .filter_map(|ts| index.get(&(rec.video_id.as_str(), *ts)))
                                .any(|&j| objects_of(j).iter().any(|(b, k)| *k == rule.object_kind && close(b, rule.radius))),
                            RuleKind::ActorActor => rec
                                .entities
                                .iter()
                                .enumerate()
                                .any(|(oj, o)| oj != ei && o.kind == EntityKind::Actor && close(&o.bbox, rule.radius)),
                        })
                        .map(|r| r.class_id)
                        .collect();
                    labels.sort_unstable();
                    Some(labels)
                })
                .collect()
        })
        .collect()
}

/// Area of the disk of radius `r` at `c` inside the rectangle `xs × ys`, by
/// midpoint quadrature over `x`.
pub fn disk_rect_area(c: (f64, f64), r: f64, xs: (f64, f64), ys: (f64, f64)) -> f64 {
    const STEPS: usize = 4000;
    let (a, b) = ((c.0 - r).max(xs.0), (c.0 + r).min(xs.1));
    if a >= b {
        return 0.0;
    }
    let dx = (b - a) / STEPS as f64;
    (0..STEPS)
        .map(|i| {
            let x = a + (i as f64 + 0.5) * dx;
            let half = (r * r - (x - c.0).powi(2)).max(0.0).sqrt();
            ((c.1 + half).min(ys.1) - (c.1 - half).max(ys.0)).max(0.0)
        })
        .sum::<f64>()
        * dx
}

/// Probability that one clip contains an object of the rule's kind within the
/// rule's radius of `center`.
fn hit_probability(spec: &SynthSpec, rule: &SynthRule, center: (f64, f64)) -> f64 {
    let [ow, oh] = spec.object_box;
    let xs = (ow / 2.0, 1.0 - ow / 2.0);
    let ys = (oh / 2.0, 1.0 - oh / 2.0);
    let area = disk_rect_area(center, rule.radius, xs, ys) / ((xs.1 - xs.0) * (ys.1 - ys.0));
    let q = area / spec.object_kinds as f64;
    let [n0, n1] = spec.objects_per_clip;
    let miss: f64 = (n0..=n1).map(|n| (1.0 - q).powi(n as i32)).sum::<f64>() / (n1 - n0 + 1) as f64;
    1.0 - miss
}

/// Posterior of a temporal-rule label given only the actor's own clip.
///
/// Objects in other clips are independent of everything observed in clip `t`,
/// so the best single-clip score is `1 − Π (1 − p_hit)` over the neighbour
/// clips that exist. Returns one `(score, is_positive)` pair per actor.
pub fn single_clip_bayes_scores(spec: &SynthSpec, rule: &SynthRule, records: &[ClipRecord]) -> Vec<(f64, bool)> {
    let present: std::collections::HashSet<(&str, i64)> = records.iter().map(|r| (r.video_id.as_str(), r.timestamp)).collect();
    let mut out = Vec::new();
    for rec in records {
        for e in rec.entities.iter().filter(|e| e.kind == EntityKind::Actor) {
            let p = hit_probability(spec, rule, e.bbox.center());
            let neighbours = [rec.timestamp - rule.offset as i64, rec.timestamp + rule.offset as i64]
                .iter()
                .filter(|ts| present.contains(&(rec.video_id.as_str(), **ts)))
                .count();
            let score = 1.0 - (1.0 - p).powi(neighbours as i32);
            let positive = e.labels.as_ref().is_some_and(|l| l.contains(&rule.class_id));
            out.push((score, positive));
        }
    }
    out
}

/// Scores actors by whether an object whose feature is nearest to the rule's
/// kind embedding lies within the rule's radius in the same clip.
pub fn proximity_oracle_scores(records: &[ClipRecord], embeddings: &[Vec<f64>], rule: &SynthRule) -> Vec<(f64, bool)> {
    let nearest_kind = |f: &[f32]| {
        (1..embeddings.len())
            .map(|k| (k - 1, embeddings[k].iter().zip(f).map(|(a, b)| (a - *b as f64).powi(2)).sum::<f64>()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(k, _)| k)
    };
    let mut out = Vec::new();
    for rec in records {
        let targets: Vec<BoxGeometry> = rec
            .entities
            .iter()
            .filter(|e| e.kind == EntityKind::Object && nearest_kind(&e.feature) == Some(rule.object_kind))
            .map(|e| e.bbox)
            .collect();
        for a in rec.entities.iter().filter(|e| e.kind == EntityKind::Actor) {
            let hit = targets.iter().any(|b| a.bbox.center_distance(b) <= rule.radius);
            let positive = a.labels.as_ref().is_some_and(|l| l.contains(&rule.class_id));
            out.push((if hit { 1.0 } else { 0.0 }, positive));
        }
    }
    out
}
