//! The full model: configuration, parameters, window assembly, forward pass,
//! loss, complexity accounting and checkpoints.
//!
//! Raw actor and object features get `[h, w, xc, yc]` of their box appended.
//! The kind with the wider result is projected to the narrower width `d_f`;
//! the other passes through unchanged. When both widths agree nothing is
//! projected.

mod checkpoint;
mod complexity;
mod config;
mod forward;
pub mod gradcheck;
mod params;
mod window;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, MAGIC, VERSION};
pub use complexity::{count_flops, count_params, FlopCount};
pub use config::{Ablation, AdjacencyKind, EvalBoxes, LossMode, StageConfig, GEOMETRY_FEATURES};
pub use forward::{assemble_entity_features, classify_actors, forward, loss, predict, ForwardPass};
pub use params::ParameterSet;
pub use window::{ActorSelection, EntityRef, WindowGraph};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{ClipRecord, EntityDetection};
    use crate::graph::{BoxGeometry, EntityKind};
    use crate::numcore::Tape;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn clip(rng: &mut ChaCha8Rng, t: i64, actors: usize, objects: usize, cfg: &StageConfig) -> ClipRecord {
        let mut entities = Vec::new();
        for k in 0..actors + objects {
            let kind = if k < actors { EntityKind::Actor } else { EntityKind::Object };
            let width = if k < actors { cfg.actor_width } else { cfg.object_width };
            let (x, y) = (rng.random_range(0.1..0.7), rng.random_range(0.1..0.7));
            entities.push(EntityDetection {
                kind,
                bbox: BoxGeometry::new(x, y, x + 0.2, y + 0.25).unwrap(),
                score: 1.0,
                feature: (0..width).map(|_| rng.random_range(-1.0..1.0)).collect(),
                labels: (k < actors).then(|| vec![(k % cfg.n_classes) as u32]),
            });
        }
        ClipRecord { video_id: "v".into(), timestamp: t, entities }
    }

    fn small_config() -> StageConfig {
        StageConfig { n_heads: 2, n_layers: 1, actor_width: 6, object_width: 9, n_classes: 3, keep: 1.0, ..StageConfig::default() }
    }

    #[test]
    fn parameter_count_matches_store_and_published_scale() {
        let cfg = small_config();
        let p = ParameterSet::init(&cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(p.scalar_count(), count_params(&cfg));
        let i3d = StageConfig::preset("stage-i3d").unwrap();
        assert_eq!(count_params(&i3d), 6_432_284);
        assert_eq!(count_params(&StageConfig::preset("stage-r101").unwrap()), 17_031_684);
        let sf = count_params(&StageConfig::preset("stage-slowfast").unwrap());
        assert!((21_700_000..21_850_000).contains(&sf), "{sf}");
    }

    #[test]
    fn classifier_only_sees_actors() {
        let cfg = small_config();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = ParameterSet::init(&cfg, &mut rng).unwrap();
        let c = clip(&mut rng, 0, 4, 3, &cfg);
        let g = WindowGraph::build(&[&c], &cfg, ActorSelection::Training).unwrap();
        assert_eq!(predict(&p, &g).unwrap().shape(), (4, 3));
        let objects_only = clip(&mut rng, 0, 0, 3, &cfg);
        let g = WindowGraph::build(&[&objects_only], &cfg, ActorSelection::Training).unwrap();
        assert_eq!(predict(&p, &g).unwrap().shape(), (0, 3));
        let mut tape = Tape::new();
        let pass = forward(&mut tape, &p, &g, false, &mut rng, None).unwrap();
        assert_eq!(tape.shape(pass.logits), (0, 3));
        let l = loss(&mut tape, pass.logits, &g.labels, LossMode::MultiLabel).unwrap();
        assert_eq!(tape.value(l)[(0, 0)], 0.0);
    }

    #[test]
    fn loss_closed_forms() {
        let mut tape = Tape::new();
        let z = tape.input_owned(crate::Matrix::zeros(1, 1));
        let l = loss(&mut tape, z, &[vec![0]], LossMode::MultiLabel).unwrap();
        assert!((tape.value(l)[(0, 0)] - 2f64.ln()).abs() < 1e-15);
        let z = tape.input_owned(crate::Matrix::zeros(2, 5));
        let l = loss(&mut tape, z, &[vec![3], vec![1]], LossMode::SingleLabel).unwrap();
        assert!((tape.value(l)[(0, 0)] - 5f64.ln()).abs() < 1e-15);
        assert!(loss(&mut tape, z, &[vec![7], vec![1]], LossMode::SingleLabel).is_err());
    }

    #[test]
    fn assembled_width_is_shared() {
        let cfg = small_config();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = ParameterSet::init(&cfg, &mut rng).unwrap();
        let c = clip(&mut rng, 0, 2, 3, &cfg);
        let g = WindowGraph::build(&[&c], &cfg, ActorSelection::Training).unwrap();
        let mut tape = Tape::new();
        let x = assemble_entity_features(&mut tape, &p, &g, None).unwrap();
        assert_eq!(tape.shape(x), (5, cfg.d_f()));
        // actors pass through untouched, geometry last
        let row = tape.value(x).row(g.actor_rows[0]);
        let e = &c.entities[0];
        assert_eq!(row[..6], e.feature.iter().map(|&v| v as f64).collect::<Vec<_>>()[..]);
        assert_eq!(row[6..], e.bbox.geometry_features());
    }

    #[test]
    fn block_diagonal_matches_separate_windows() {
        let cfg = StageConfig { n_layers: 2, ..small_config() };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = ParameterSet::init(&cfg, &mut rng).unwrap();
        let a: Vec<_> = (0..3).map(|t| clip(&mut rng, t, 2, 2, &cfg)).collect();
        let b: Vec<_> = (5..7).map(|t| clip(&mut rng, t, 1, 3, &cfg)).collect();
        let ga = WindowGraph::build(&a.iter().collect::<Vec<_>>(), &cfg, ActorSelection::Training).unwrap();
        let gb = WindowGraph::build(&b.iter().collect::<Vec<_>>(), &cfg, ActorSelection::Training).unwrap();
        let joint = WindowGraph::block_diagonal(&[ga.clone(), gb.clone()]);
        let (pa, pb, pj) = (predict(&p, &ga).unwrap(), predict(&p, &gb).unwrap(), predict(&p, &joint).unwrap());
        let mut sep = pa.as_slice().to_vec();
        sep.extend_from_slice(pb.as_slice());
        for (x, y) in sep.iter().zip(pj.as_slice()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn detections_inherit_labels_and_eval_selects_boxes() {
        let cfg = small_config();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut c = clip(&mut rng, 0, 1, 1, &cfg);
        let mut det = c.entities[0].clone();
        det.labels = None;
        det.score = 0.75;
        c.entities.push(det.clone());
        det.score = 0.5;
        c.entities.push(det);
        let train = WindowGraph::build(&[&c], &cfg, ActorSelection::Training).unwrap();
        assert_eq!(train.n_actors(), 3);
        assert!(train.labels.iter().all(|l| l == &train.labels[0]));
        let gt = WindowGraph::build(&[&c], &cfg, ActorSelection::Evaluation(EvalBoxes::GroundTruth)).unwrap();
        assert_eq!(gt.n_actors(), 1);
        let det = WindowGraph::build(&[&c], &cfg, ActorSelection::Evaluation(EvalBoxes::Detected { score_thresh: 0.7 })).unwrap();
        assert_eq!(det.n_actors(), 1);
        assert_eq!(det.sources[det.actor_rows[0]].entity, 2);
    }
}
