//! Writes a small dataset as line-delimited JSON, reads it back and lists
//! the training windows it yields.

use stage::dataio::{read_dataset, write_clips, ClipRecord, EntityDetection};
use stage::training::{centered_windows, make_windows};
use stage::{BoxGeometry, EntityKind};

fn main() -> stage::Result<()> {
    let clip = |video: &str, t: i64| -> stage::Result<ClipRecord> {
        Ok(ClipRecord {
            video_id: video.into(),
            timestamp: t,
            entities: vec![
                EntityDetection {
                    kind: EntityKind::Actor,
                    bbox: BoxGeometry::new(0.1, 0.2, 0.3, 0.8)?,
                    score: 1.0,
                    feature: vec![0.5, -1.25, 2.0],
                    labels: Some(vec![3]),
                },
                EntityDetection {
                    kind: EntityKind::Object,
                    bbox: BoxGeometry::new(0.35, 0.5, 0.45, 0.6)?,
                    score: 0.8,
                    feature: vec![1.0, 0.0],
                    labels: None,
                },
            ],
        })
    };
    // video b has a gap between 12 and 20
    let mut records = Vec::new();
    for t in 0..5 {
        records.push(clip("a", t)?);
    }
    for t in [10, 11, 12, 20, 21] {
        records.push(clip("b", t)?);
    }
    let path = std::env::temp_dir().join("stage-example.jsonl");
    write_clips(&path, &records)?;
    println!("first line: {}", std::fs::read_to_string(&path).unwrap().lines().next().unwrap_or(""));

    let data = read_dataset(&path)?;
    println!("{} videos, {} clips", data.videos.len(), data.n_clips());
    for w in make_windows(&data, 3, 3) {
        let v = &data.videos[w.video];
        let ts: Vec<i64> = v.clips[w.clips].iter().map(|c| c.timestamp).collect();
        println!("training window {}: {ts:?}", v.id);
    }
    for w in centered_windows(&data, 3).iter().take(3) {
        let v = &data.videos[w.video];
        println!("keyframe {} of {} uses clips {:?}", v.clips[w.center].timestamp, v.id, w.clips);
    }
    std::fs::remove_file(&path).ok();
    Ok(())
}
