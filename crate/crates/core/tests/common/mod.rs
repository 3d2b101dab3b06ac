#![allow(dead_code)]

use rand::Rng;
use stage::dataio::synth::SynthSpec;
use stage::dataio::{ClipRecord, Dataset, EntityDetection};
use stage::{BoxGeometry, EntityKind};

/// One clip with `actors` labeled actors followed by `objects` objects.
pub fn random_clip<R: Rng>(
    rng: &mut R,
    video: &str,
    timestamp: i64,
    (actors, objects): (usize, usize),
    (actor_width, object_width): (usize, usize),
    n_classes: usize,
) -> ClipRecord {
    let entities = (0..actors + objects)
        .map(|k| {
            let actor = k < actors;
            let (x, y) = (rng.random_range(0.05..0.6), rng.random_range(0.05..0.6));
            let (w, h) = (rng.random_range(0.05..0.3), rng.random_range(0.05..0.3));
            let width = if actor { actor_width } else { object_width };
            EntityDetection {
                kind: if actor { EntityKind::Actor } else { EntityKind::Object },
                bbox: BoxGeometry::new(x, y, x + w, y + h).unwrap(),
                score: 1.0,
                feature: (0..width).map(|_| rng.random_range(-1.0f32..1.0)).collect(),
                labels: actor.then(|| vec![rng.random_range(0..n_classes as u32)]),
            }
        })
        .collect();
    ClipRecord { video_id: video.into(), timestamp, entities }
}

/// A small version of the built-in benchmark that trains in seconds.
pub fn tiny_spec(seed: u64) -> SynthSpec {
    SynthSpec { train_videos: 10, val_videos: 4, clips_per_video: 6, ..SynthSpec::context_benchmark(seed) }
}

pub fn tiny_data(seed: u64) -> (Dataset, Dataset) {
    let out = stage::dataio::synth::synth_generate(&tiny_spec(seed)).unwrap();
    (Dataset::from_records(out.train).unwrap(), Dataset::from_records(out.val).unwrap())
}
