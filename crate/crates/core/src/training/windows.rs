use std::ops::Range;

use crate::dataio::{Dataset, Video};
use crate::evaluation::iou;
use crate::graph::BoxGeometry;

/// Consecutive clips `clips` of video `video` (indices into the dataset).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Window {
    pub video: usize,
    pub clips: Range<usize>,
}

/// A window built around one clip for prediction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CenteredWindow {
    pub video: usize,
    pub clips: Range<usize>,
    pub center: usize,
}

/// Maximal runs of consecutive timestamps in a video.
fn segments(video: &Video) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=video.clips.len() {
        if i == video.clips.len() || video.clips[i].timestamp != video.clips[i - 1].timestamp + 1 {
            out.push(start..i);
            start = i;
        }
    }
    out
}

/// Sliding windows of `b` clips with the given stride. Windows never cross a
/// video or a timestamp gap; the last window of a run may be shorter.
pub fn make_windows(dataset: &Dataset, b: usize, stride: usize) -> Vec<Window> {
    assert!(b >= 1 && stride >= 1, "window and stride must be positive");
    let mut out = Vec::new();
    for (v, video) in dataset.videos.iter().enumerate() {
        if video.clips.is_empty() {
            log::warn!("video `{}` has no clips; skipped", video.id);
            continue;
        }
        for seg in segments(video) {
            let mut start = seg.start;
            loop {
                let end = (start + b).min(seg.end);
                out.push(Window { video: v, clips: start..end });
                if end == seg.end {
                    break;
                }
                start += stride;
            }
        }
    }
    out
}

/// One window per clip spanning up to `b / 2` clips on each side, clipped at
/// gaps and video boundaries.
pub fn centered_windows(dataset: &Dataset, b: usize) -> Vec<CenteredWindow> {
    let half = b / 2;
    let mut out = Vec::new();
    for (v, video) in dataset.videos.iter().enumerate() {
        for seg in segments(video) {
            for c in seg.clone() {
                let lo = c.saturating_sub(half).max(seg.start);
                let hi = (c + half + 1).min(seg.end);
                out.push(CenteredWindow { video: v, clips: lo..hi, center: c });
            }
        }
    }
    out
}

/// Each predicted box takes the labels of the ground-truth box it overlaps
/// most, provided that IoU reaches `iou_thresh`; otherwise it gets none.
pub fn assign_labels(pred: &[BoxGeometry], gt_boxes: &[BoxGeometry], gt_labels: &[Vec<u32>], iou_thresh: f64) -> Vec<Vec<u32>> {
    pred.iter()
        .map(|p| {
            let mut best: Option<(usize, f64)> = None;
            for (g, gb) in gt_boxes.iter().enumerate() {
                let o = iou(p, gb);
                if best.is_none_or(|(_, b)| o > b) {
                    best = Some((g, o));
                }
            }
            match best {
                Some((g, o)) if o >= iou_thresh => gt_labels[g].clone(),
                _ => Vec::new(),
            }
        })
        .collect()
}
