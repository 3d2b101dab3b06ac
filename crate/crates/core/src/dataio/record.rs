use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::graph::{BoxGeometry, EntityKind};

/// One actor or object detection on a keyframe.
///
/// An actor carrying `labels` is a ground-truth annotation; actors without
/// labels are detector outputs and inherit labels by IoU during training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntityDetection {
    pub kind: EntityKind,
    #[serde(rename = "box")]
    pub bbox: BoxGeometry,
    pub score: f64,
    pub feature: Vec<f32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<u32>>,
}

impl EntityDetection {
    pub fn is_ground_truth(&self) -> bool {
        self.kind == EntityKind::Actor && self.labels.is_some()
    }
}

/// All detections of one keyframe.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClipRecord {
    pub video_id: String,
    pub timestamp: i64,
    pub entities: Vec<EntityDetection>,
}

impl ClipRecord {
    pub fn boxes(&self) -> Vec<BoxGeometry> {
        self.entities.iter().map(|e| e.bbox).collect()
    }

    pub fn count(&self, kind: EntityKind) -> usize {
        self.entities.iter().filter(|e| e.kind == kind).count()
    }
}

/// Clips of one video in timestamp order.
#[derive(Clone, Debug, PartialEq)]
pub struct Video {
    pub id: String,
    pub clips: Vec<ClipRecord>,
}

/// Clips grouped by video (videos sorted by id), each video sorted by timestamp.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub videos: Vec<Video>,
}

impl Dataset {
    /// Groups and sorts records. Duplicate `(video, timestamp)` pairs are rejected.
    pub fn from_records(records: Vec<ClipRecord>) -> crate::Result<Self> {
        let mut by_video: BTreeMap<String, Vec<ClipRecord>> = BTreeMap::new();
        for r in records {
            by_video.entry(r.video_id.clone()).or_default().push(r);
        }
        let mut videos = Vec::with_capacity(by_video.len());
        for (id, mut clips) in by_video {
            clips.sort_by_key(|c| c.timestamp);
            let mut seen = HashSet::new();
            for c in &clips {
                if !seen.insert(c.timestamp) {
                    return Err(crate::Error::Config(format!("video `{id}` has duplicate timestamp {}", c.timestamp)));
                }
            }
            videos.push(Video { id, clips });
        }
        Ok(Self { videos })
    }

    pub fn clips(&self) -> impl Iterator<Item = &ClipRecord> {
        self.videos.iter().flat_map(|v| v.clips.iter())
    }

    pub fn n_clips(&self) -> usize {
        self.videos.iter().map(|v| v.clips.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.n_clips() == 0
    }

    pub fn into_records(self) -> Vec<ClipRecord> {
        self.videos.into_iter().flat_map(|v| v.clips).collect()
    }

    /// Raw feature width of each kind, if any entity of that kind exists.
    pub fn feature_width(&self, kind: EntityKind) -> Option<usize> {
        self.clips().flat_map(|c| c.entities.iter()).find(|e| e.kind == kind).map(|e| e.feature.len())
    }
}
