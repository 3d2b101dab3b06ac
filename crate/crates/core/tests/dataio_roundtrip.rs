use std::io::BufReader;

use proptest::prelude::*;
use stage::dataio::{parse_clips, read_clips, read_dataset, write_clips, write_clips_to, ClipRecord, EntityDetection};
use stage::{BoxGeometry, EntityKind};

fn entity(actor: bool, width: usize) -> impl Strategy<Value = EntityDetection> {
    let feature = prop::collection::vec(prop::num::f32::NORMAL | prop::num::f32::ZERO, width);
    let labels = if actor { prop::option::of(prop::collection::vec(0u32..80, 0..4)).boxed() } else { Just(None).boxed() };
    (0.0f64..0.9, 0.0f64..0.9, 0.001f64..0.1, 0.001f64..0.1, 0.0f64..=1.0, feature, labels).prop_map(
        move |(x, y, w, h, score, feature, labels)| EntityDetection {
            kind: if actor { EntityKind::Actor } else { EntityKind::Object },
            bbox: BoxGeometry::new(x, y, x + w, y + h).unwrap(),
            score,
            feature,
            labels,
        },
    )
}

/// Records with consistent widths and unique `(video, timestamp)` keys, in arbitrary order.
fn records() -> impl Strategy<Value = Vec<ClipRecord>> {
    (1usize..6, 1usize..6).prop_flat_map(|(aw, ow)| {
        let clip = (0usize..3, -5i64..20, prop::collection::vec(entity(true, aw), 0..3), prop::collection::vec(entity(false, ow), 0..3));
        prop::collection::vec(clip, 1..12).prop_map(|clips| {
            let mut seen = std::collections::HashSet::new();
            clips
                .into_iter()
                .filter(|(v, t, _, _)| seen.insert((*v, *t)))
                .map(|(v, t, mut actors, objects)| {
                    actors.extend(objects);
                    ClipRecord { video_id: format!("video-{v}"), timestamp: t, entities: actors }
                })
                .collect()
        })
    })
}

fn encode(records: &[ClipRecord]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_clips_to(&mut buf, records).unwrap();
    buf
}

proptest! {
    #[test]
    fn write_then_parse_is_identity(recs in records()) {
        let bytes = encode(&recs);
        let back = parse_clips(BufReader::new(bytes.as_slice()), "mem").unwrap();
        prop_assert_eq!(&back, &recs);
        prop_assert_eq!(encode(&back), bytes);
    }

    #[test]
    fn file_round_trip_is_byte_exact(recs in records()) {
        let dir = tempfile::tempdir().unwrap();
        let first = dir.path().join("a.jsonl");
        let second = dir.path().join("b.jsonl");
        write_clips(&first, &recs).unwrap();
        let read = read_clips(&first).unwrap();
        write_clips(&second, &read).unwrap();
        let mut sorted = recs.clone();
        sorted.sort_by(|a, b| (&a.video_id, a.timestamp).cmp(&(&b.video_id, b.timestamp)));
        prop_assert_eq!(&read, &sorted);
        let again = read_clips(&second).unwrap();
        write_clips(dir.path().join("c.jsonl"), &again).unwrap();
        prop_assert_eq!(std::fs::read(&second).unwrap(), std::fs::read(dir.path().join("c.jsonl")).unwrap());
        prop_assert_eq!(read_dataset(&first).unwrap().n_clips(), recs.len());
    }
}

#[test]
fn errors_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.jsonl");
    let good = r#"{"video_id":"v","timestamp":1,"entities":[{"kind":"actor","box":[0.1,0.1,0.2,0.2],"score":1.0,"feature":[1.0,2.0]}]}"#;
    let wrong_width = r#"{"video_id":"v","timestamp":2,"entities":[{"kind":"actor","box":[0.1,0.1,0.2,0.2],"score":1.0,"feature":[1.0]}]}"#;
    std::fs::write(&p, format!("{good}\n\n{wrong_width}\n")).unwrap();
    let msg = read_clips(&p).unwrap_err().to_string();
    assert!(msg.contains('3'), "{msg}");
    let bad_box = good.replace("0.2,0.2]", "0.05,0.2]");
    std::fs::write(&p, format!("{bad_box}\n")).unwrap();
    assert!(read_clips(&p).is_err());
    let labeled_object = good.replace("\"actor\"", "\"object\"").replace("\"feature\"", "\"labels\":[1],\"feature\"");
    std::fs::write(&p, format!("{labeled_object}\n")).unwrap();
    assert!(read_clips(&p).unwrap_err().to_string().contains("labels"));
}
