//! Entity geometry and the matrices that condition attention: spatial
//! proximity, multi-clip block adjacency, temporal connectivity and
//! interaction-type masks.

use serde::{Deserialize, Serialize};

use crate::numcore::Matrix;
use crate::Error;

/// Cap applied to inverse feature distances; identical features would divide by zero.
pub const INV_DISTANCE_CAP: f64 = 1e6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntityKind {
    Actor,
    Object,
}

impl EntityKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EntityKind::Actor => "actor",
            EntityKind::Object => "object",
        }
    }
}

/// Axis-aligned box in normalized image coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BoxGeometry {
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
}

impl BoxGeometry {
    /// Validates `0 ≤ x1 < x2 ≤ 1` and `0 ≤ y1 < y2 ≤ 1`.
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self, Error> {
        let ok = [x1, y1, x2, y2].iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v)) && x1 < x2 && y1 < y2;
        if !ok {
            return Err(Error::InvalidBox { coords: [x1, y1, x2, y2] });
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    pub fn from_center(xc: f64, yc: f64, w: f64, h: f64) -> Result<Self, Error> {
        Self::new(xc - w / 2.0, yc - h / 2.0, xc + w / 2.0, yc + h / 2.0)
    }

    pub fn coords(&self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    /// Geometry features appended to every entity: `[h, w, xc, yc]`.
    pub fn geometry_features(&self) -> [f64; 4] {
        let (xc, yc) = self.center();
        [self.height(), self.width(), xc, yc]
    }

    pub fn center_distance(&self, other: &BoxGeometry) -> f64 {
        let (a, b) = (self.center(), other.center());
        ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
    }
}

impl TryFrom<[f64; 4]> for BoxGeometry {
    type Error = Error;

    fn try_from(c: [f64; 4]) -> Result<Self, Error> {
        BoxGeometry::new(c[0], c[1], c[2], c[3])
    }
}

impl From<BoxGeometry> for [f64; 4] {
    fn from(b: BoxGeometry) -> Self {
        b.coords()
    }
}

/// `exp(−‖c_i − c_j‖₂)` over box centers.
pub fn proximity(a: &BoxGeometry, b: &BoxGeometry) -> f64 {
    (-a.center_distance(b)).exp()
}

/// Single-clip proximity adjacency. Symmetric with a unit diagonal.
pub fn proximity_adjacency(boxes: &[BoxGeometry]) -> Matrix {
    let n = boxes.len();
    let mut a = Matrix::zeros(n, n);
    for i in 0..n {
        a[(i, i)] = 1.0;
        for j in i + 1..n {
            let p = proximity(&boxes[i], &boxes[j]);
            a[(i, j)] = p;
            a[(j, i)] = p;
        }
    }
    a
}

/// `1/‖h_i − h_j‖₂` between feature rows, capped at [`INV_DISTANCE_CAP`]
/// (which is also the diagonal).
pub fn feature_distance_adjacency(features: &Matrix) -> Matrix {
    crate::numcore::inv_pair_distance_value(features, INV_DISTANCE_CAP)
}

/// Geometry of one clip inside a window: its timestamp and entity boxes.
#[derive(Clone, Copy, Debug)]
pub struct ClipGeometry<'a> {
    pub timestamp: i64,
    pub boxes: &'a [BoxGeometry],
}

/// Block adjacency over consecutive clips plus its temporal connectivity mask.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiClipAdjacency {
    pub adjacency: Matrix,
    pub tmask: Matrix,
    /// Entity-count prefix sums; clip `t` owns rows `offsets[t]..offsets[t+1]`.
    pub offsets: Vec<usize>,
}

impl MultiClipAdjacency {
    pub fn clip_of(&self, row: usize) -> usize {
        self.offsets.partition_point(|&o| o <= row) - 1
    }
}

/// Builds the window adjacency: blocks for clips at most `(rf_direct−1)/2`
/// apart hold cross-clip proximity, every other block is exactly zero.
pub fn multi_clip_adjacency(clips: &[ClipGeometry<'_>], rf_direct: usize) -> Result<MultiClipAdjacency, Error> {
    if rf_direct == 0 || rf_direct.is_multiple_of(2) {
        return Err(Error::Config(format!("direct receptive field must be odd, got {rf_direct}")));
    }
    for pair in clips.windows(2) {
        if pair[1].timestamp != pair[0].timestamp + 1 {
            return Err(Error::TimestampGap { before: pair[0].timestamp, after: pair[1].timestamp });
        }
    }
    let reach = (rf_direct - 1) / 2;
    let mut offsets = Vec::with_capacity(clips.len() + 1);
    offsets.push(0);
    for c in clips {
        offsets.push(offsets.last().unwrap() + c.boxes.len());
    }
    let n = *offsets.last().unwrap();
    let mut adjacency = Matrix::zeros(n, n);
    let mut tmask = Matrix::zeros(n, n);
    for (s, cs) in clips.iter().enumerate() {
        for (t, ct) in clips.iter().enumerate() {
            if s.abs_diff(t) > reach {
                continue;
            }
            for (i, bi) in cs.boxes.iter().enumerate() {
                for (j, bj) in ct.boxes.iter().enumerate() {
                    let (r, c) = (offsets[s] + i, offsets[t] + j);
                    adjacency[(r, c)] = if r == c { 1.0 } else { proximity(bi, bj) };
                    tmask[(r, c)] = 1.0;
                }
            }
        }
    }
    Ok(MultiClipAdjacency { adjacency, tmask, offsets })
}

/// Which of the four actor/object interaction blocks are enabled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionToggles {
    pub actor_actor: bool,
    pub actor_object: bool,
    pub object_actor: bool,
    pub object_object: bool,
}

impl Default for InteractionToggles {
    fn default() -> Self {
        Self { actor_actor: true, actor_object: true, object_actor: true, object_object: true }
    }
}

impl InteractionToggles {
    /// Whether row entity `from` may attend to column entity `to`.
    pub fn allows(&self, from: EntityKind, to: EntityKind) -> bool {
        match (from, to) {
            (EntityKind::Actor, EntityKind::Actor) => self.actor_actor,
            (EntityKind::Actor, EntityKind::Object) => self.actor_object,
            (EntityKind::Object, EntityKind::Actor) => self.object_actor,
            (EntityKind::Object, EntityKind::Object) => self.object_object,
        }
    }
}

/// `{0,1}` mask zeroing disabled interaction blocks; the diagonal is always 1.
pub fn interaction_mask(kinds: &[EntityKind], toggles: InteractionToggles) -> Matrix {
    let n = kinds.len();
    Matrix::from_fn(n, n, |i, j| if i == j || toggles.allows(kinds[i], kinds[j]) { 1.0 } else { 0.0 })
}

/// Elementwise AND of `{0,1}` masks.
pub fn mask_and(a: &Matrix, b: &Matrix) -> Result<Matrix, Error> {
    Ok(a.zip_map(b, "mask_and", |x, y| if x != 0.0 && y != 0.0 { 1.0 } else { 0.0 })?)
}
