//! Frame-level mAP on two hand-made keyframes with two classes.

use stage::evaluation::{frame_map, EvalOptions, FramePrediction, FrameTruth};
use stage::BoxGeometry;

fn main() -> stage::Result<()> {
    let a = BoxGeometry::new(0.1, 0.1, 0.4, 0.6)?;
    let b = BoxGeometry::new(0.5, 0.2, 0.8, 0.9)?;
    let shifted = BoxGeometry::new(0.12, 0.1, 0.42, 0.6)?;
    let truth = vec![
        FrameTruth { video_id: "v".into(), timestamp: 1, boxes: vec![a, b], labels: vec![vec![0], vec![0, 1]] },
        FrameTruth { video_id: "v".into(), timestamp: 2, boxes: vec![a], labels: vec![vec![1]] },
    ];
    // scores are per class: [class 0, class 1]
    let predictions = vec![
        FramePrediction { video_id: "v".into(), timestamp: 1, boxes: vec![shifted, b], scores: vec![vec![0.9, 0.2], vec![0.6, 0.7]] },
        FramePrediction { video_id: "v".into(), timestamp: 2, boxes: vec![b, a], scores: vec![vec![0.3, 0.95], vec![0.1, 0.5]] },
    ];
    let opts = EvalOptions { class_names: Some(vec!["stand".into(), "hold".into()]), ..EvalOptions::new(0.5) };
    let report = frame_map(&predictions, &truth, 2, &opts)?;
    for c in &report.per_class {
        println!("{:<6} gt {} det {} AP {:?}", c.class_name, c.n_gt, c.n_det, c.ap);
    }
    println!("{}", report.summary());
    Ok(())
}
