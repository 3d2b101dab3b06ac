//! One forward pass of a 4-head, 1-layer model over a window of three clips:
//! prints the shape of every learnable block and one actor's attention.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stage::attention::Trace;
use stage::dataio::{ClipRecord, EntityDetection};
use stage::model::{forward, ActorSelection, WindowGraph};
use stage::numcore::Tape;
use stage::{BoxGeometry, EntityKind, ParameterSet, StageConfig};

fn main() -> stage::Result<()> {
    let cfg = StageConfig { n_heads: 4, n_layers: 1, actor_width: 60, object_width: 96, n_classes: 5, ..StageConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let clips: Vec<ClipRecord> = (0..3)
        .map(|t| {
            let entities = (0..5)
                .map(|k| {
                    let actor = k < 2;
                    let (x, y) = (rng.random_range(0.0..0.7), rng.random_range(0.0..0.7));
                    EntityDetection {
                        kind: if actor { EntityKind::Actor } else { EntityKind::Object },
                        bbox: BoxGeometry::new(x, y, x + 0.2, y + 0.3).unwrap(),
                        score: 1.0,
                        feature: (0..if actor { 60 } else { 96 }).map(|_| rng.random_range(-1.0..1.0)).collect(),
                        labels: actor.then(|| vec![k as u32]),
                    }
                })
                .collect();
            ClipRecord { video_id: "demo".into(), timestamp: t, entities }
        })
        .collect();
    let refs: Vec<&ClipRecord> = clips.iter().collect();
    let graph = WindowGraph::build(&refs, &cfg, ActorSelection::Training)?;
    let params = ParameterSet::init(&cfg, &mut rng)?;

    let mut trace = Trace::default();
    let mut tape = Tape::new();
    let pass = forward(&mut tape, &params, &graph, false, &mut rng, Some(&mut trace))?;
    println!("{} entities, {} actors, d_f = {}", graph.len(), graph.n_actors(), cfg.d_f());
    for s in &trace.shapes {
        let at = match (s.layer, s.head) {
            (Some(l), Some(h)) => format!("layer {l} head {h}"),
            (Some(l), None) => format!("layer {l}"),
            _ => String::new(),
        };
        println!("{:<18} {:<16} {:?} -> {:?}", s.block, at, s.input, s.output);
    }
    let weights = tape.value(trace.attention[0]);
    let actor = graph.actor_rows[graph.n_actors() / 2];
    println!("\nhead 0 attention of entity {actor} (clip {}):", graph.sources[actor].timestamp);
    for (j, w) in weights.row(actor).iter().enumerate() {
        println!("  -> {j:2} {:?} clip {} : {w:.4}", graph.kinds[j], graph.sources[j].timestamp);
    }
    println!("\nlogits shape {:?}", tape.shape(pass.logits));
    Ok(())
}
