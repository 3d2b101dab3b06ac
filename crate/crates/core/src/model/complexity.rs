use serde::Serialize;

use super::config::StageConfig;
use crate::attention::AttentionKind;
use crate::graph::EntityKind;

/// Number of learnable scalars a configuration defines.
pub fn count_params(config: &StageConfig) -> usize {
    let d_f = config.d_f();
    let d_h = config.d_h();
    let affine = |i: usize, o: usize| i * o + o;
    let projection = config.projected_kind().map_or(0, |k| affine(config.extended_width(k), d_f));
    let head = match config.ablation.attention {
        AttentionKind::Graph => affine(d_f, d_h) + affine(2 * d_h, 1),
        AttentionKind::Transformer => 3 * affine(d_f, d_h),
    };
    let layer = config.n_heads * head + affine(config.n_heads * d_h, d_f) + 2 * d_f;
    projection + config.n_layers * layer + affine(d_f, config.n_classes)
}

/// Multiply-accumulate counts of one single-clip inference, per term.
///
/// Pair scores are counted as if the scorer were applied to every
/// concatenated pair (`N² · 2·d_h` per head); elementwise work is ignored.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct FlopCount {
    pub projection: u64,
    pub head_projection: u64,
    pub pair_scores: u64,
    pub weighted_sum: u64,
    pub output_map: u64,
    pub classifier: u64,
}

impl FlopCount {
    pub fn total(&self) -> u64 {
        self.projection + self.head_projection + self.pair_scores + self.weighted_sum + self.output_map + self.classifier
    }
}

pub fn count_flops(config: &StageConfig, n_actors: usize, n_objects: usize) -> FlopCount {
    let (a, o) = (n_actors as u64, n_objects as u64);
    let n = a + o;
    let d_f = config.d_f() as u64;
    let d_h = config.d_h() as u64;
    let heads = config.n_heads as u64;
    let layers = config.n_layers as u64;
    let projected = match config.projected_kind() {
        Some(EntityKind::Actor) => a * config.extended_width(EntityKind::Actor) as u64,
        Some(EntityKind::Object) => o * config.extended_width(EntityKind::Object) as u64,
        None => 0,
    };
    let (head_projection, pair_scores) = match config.ablation.attention {
        AttentionKind::Graph => (n * d_f * d_h, n * n * 2 * d_h),
        AttentionKind::Transformer => (3 * n * d_f * d_h, n * n * d_h),
    };
    FlopCount {
        projection: projected * d_f,
        head_projection: layers * heads * head_projection,
        pair_scores: layers * heads * pair_scores,
        weighted_sum: layers * heads * n * n * d_h,
        output_map: layers * n * heads * d_h * d_f,
        classifier: a * d_f * config.n_classes as u64,
    }
}
