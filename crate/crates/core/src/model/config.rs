use serde::{Deserialize, Serialize};

use crate::attention::AttentionKind;
use crate::graph::{EntityKind, InteractionToggles};
use crate::{Error, Result};

/// Number of geometry features appended to every raw feature vector.
pub const GEOMETRY_FEATURES: usize = 4;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossMode {
    /// Independent sigmoid per class.
    #[default]
    MultiLabel,
    /// One class per actor, softmax over classes.
    SingleLabel,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdjacencyKind {
    /// Center-distance proximity of the boxes.
    #[default]
    Box,
    /// Inverse distance between entity features.
    FeatureDistance,
}

/// Structural switches used by the ablation variants.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ablation {
    pub proximity: bool,
    pub temporal: bool,
    pub actor_actor: bool,
    pub object_object: bool,
    pub attention: AttentionKind,
    pub adjacency: AdjacencyKind,
}

impl Default for Ablation {
    fn default() -> Self {
        Self {
            proximity: true,
            temporal: true,
            actor_actor: true,
            object_object: true,
            attention: AttentionKind::Graph,
            adjacency: AdjacencyKind::Box,
        }
    }
}

impl Ablation {
    /// Parses one of `full`, `no-proximity`, `no-temporal`, `no-actor-actor`,
    /// `no-object-object`, `transformer`, `feature-distance`.
    pub fn named(name: &str) -> Result<Self> {
        let mut a = Self::default();
        match name {
            "full" => {}
            "no-proximity" => a.proximity = false,
            "no-temporal" => a.temporal = false,
            "no-actor-actor" => a.actor_actor = false,
            "no-object-object" => a.object_object = false,
            "transformer" => a.attention = AttentionKind::Transformer,
            "feature-distance" => a.adjacency = AdjacencyKind::FeatureDistance,
            other => return Err(Error::Config(format!("unknown ablation `{other}`"))),
        }
        Ok(a)
    }

    pub const NAMES: [&'static str; 7] =
        ["full", "no-proximity", "no-temporal", "no-actor-actor", "no-object-object", "transformer", "feature-distance"];

    pub fn toggles(&self) -> InteractionToggles {
        InteractionToggles { actor_actor: self.actor_actor, object_object: self.object_object, ..InteractionToggles::default() }
    }
}

/// Which boxes are scored at evaluation time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum EvalBoxes {
    /// Unlabeled actor detections with score at least the threshold.
    Detected { score_thresh: f64 },
    /// Labeled actor boxes.
    GroundTruth,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageConfig {
    pub n_heads: usize,
    pub n_layers: usize,
    /// Raw actor and object feature widths, before geometry is appended.
    pub actor_width: usize,
    pub object_width: usize,
    pub n_classes: usize,
    /// Clips per window.
    pub window: usize,
    /// Direct temporal field in clips (odd).
    pub rf_direct: usize,
    pub keep: f64,
    pub leaky_slope: f64,
    pub loss: LossMode,
    pub ablation: Ablation,
    pub lr: f64,
    pub decay_patience: usize,
    pub stop_patience: usize,
    pub max_epochs: usize,
    /// Windows per optimizer step.
    pub batch_windows: usize,
    /// IoU a detection needs with a labeled box to inherit its labels.
    pub label_iou: f64,
    pub eval_boxes: EvalBoxes,
    pub min_class_examples: usize,
    pub seed: u64,
}

impl Default for StageConfig {
    fn default() -> Self {
        Self {
            n_heads: 4,
            n_layers: 2,
            actor_width: 1024,
            object_width: 2048,
            n_classes: 80,
            window: 3,
            rf_direct: 3,
            keep: 0.5,
            leaky_slope: 0.2,
            loss: LossMode::MultiLabel,
            ablation: Ablation::default(),
            lr: 6.25e-5,
            decay_patience: 10,
            stop_patience: 15,
            max_epochs: 100,
            batch_windows: 6,
            label_iou: 0.5,
            eval_boxes: EvalBoxes::Detected { score_thresh: 0.7 },
            min_class_examples: 25,
            seed: 0,
        }
    }
}

impl StageConfig {
    pub const PRESETS: [&'static str; 4] = ["stage-i3d", "stage-r101", "stage-slowfast", "synthetic"];

    pub fn preset(name: &str) -> Result<Self> {
        let base = Self::default();
        let cfg = match name {
            "stage-i3d" => base,
            "stage-r101" => Self {
                n_heads: 2,
                actor_width: 2048,
                lr: 1e-5,
                label_iou: 0.9,
                eval_boxes: EvalBoxes::Detected { score_thresh: 0.8 },
                ..base
            },
            "stage-slowfast" => Self {
                n_heads: 2,
                actor_width: 2304,
                lr: 1e-5,
                label_iou: 0.9,
                eval_boxes: EvalBoxes::Detected { score_thresh: 0.8 },
                ..base
            },
            "synthetic" => Self {
                n_heads: 2,
                n_layers: 2,
                actor_width: 12,
                object_width: 12,
                n_classes: 2,
                keep: 0.9,
                lr: 3e-3,
                decay_patience: 6,
                stop_patience: 10,
                max_epochs: 40,
                eval_boxes: EvalBoxes::GroundTruth,
                min_class_examples: 0,
                ..base
            },
            other => return Err(Error::Config(format!("unknown preset `{other}` (expected one of {:?})", Self::PRESETS))),
        };
        Ok(cfg)
    }

    /// Width of a kind after geometry features are appended.
    pub fn extended_width(&self, kind: EntityKind) -> usize {
        GEOMETRY_FEATURES
            + match kind {
                EntityKind::Actor => self.actor_width,
                EntityKind::Object => self.object_width,
            }
    }

    /// Model width: the smaller extended width.
    pub fn d_f(&self) -> usize {
        self.extended_width(EntityKind::Actor).min(self.extended_width(EntityKind::Object))
    }

    pub fn d_h(&self) -> usize {
        crate::attention::head_width(self.d_f(), self.n_heads)
    }

    /// The kind whose extended features are projected to `d_f`; `None` when
    /// both kinds already have the same width.
    pub fn projected_kind(&self) -> Option<EntityKind> {
        let (a, o) = (self.extended_width(EntityKind::Actor), self.extended_width(EntityKind::Object));
        match a.cmp(&o) {
            std::cmp::Ordering::Greater => Some(EntityKind::Actor),
            std::cmp::Ordering::Less => Some(EntityKind::Object),
            std::cmp::Ordering::Equal => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.n_heads == 0 || self.n_layers == 0 {
            return fail("n_heads and n_layers must be at least 1".into());
        }
        if self.d_f() < self.n_heads {
            return fail(format!("model width {} is smaller than the head count {}", self.d_f(), self.n_heads));
        }
        if self.n_classes == 0 {
            return fail("n_classes must be at least 1".into());
        }
        if !(self.keep > 0.0 && self.keep <= 1.0) {
            return fail(format!("keep {} outside (0, 1]", self.keep));
        }
        if !(self.leaky_slope > 0.0 && self.leaky_slope < 1.0) {
            return fail(format!("leaky slope {} outside (0, 1)", self.leaky_slope));
        }
        if self.window == 0 || self.batch_windows == 0 {
            return fail("window and batch_windows must be at least 1".into());
        }
        if self.rf_direct == 0 || self.rf_direct.is_multiple_of(2) {
            return fail(format!("rf_direct {} must be odd", self.rf_direct));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return fail(format!("lr {} must be positive", self.lr));
        }
        if !(self.label_iou > 0.0 && self.label_iou < 1.0) {
            return fail(format!("label_iou {} outside (0, 1)", self.label_iou));
        }
        Ok(())
    }

    /// Direct temporal field actually used by the graph.
    pub fn effective_rf(&self) -> usize {
        if self.ablation.temporal {
            self.rf_direct
        } else {
            1
        }
    }
}
