use rand::Rng;

use super::config::StageConfig;
use crate::attention::{Affine, LayerParams};
use crate::graph::EntityKind;
use crate::numcore::ParamStore;
use crate::Result;

/// All learnable weights of a model plus the configuration that shaped them.
///
/// Blocks are stored in declaration order: the input projection (if any),
/// then each layer's heads, output map and layer norm, then the classifier.
#[derive(Clone, Debug)]
pub struct ParameterSet {
    pub config: StageConfig,
    pub store: ParamStore,
    pub projection: Option<(EntityKind, Affine)>,
    pub layers: Vec<LayerParams>,
    pub classifier: Affine,
}

impl ParameterSet {
    pub fn init<R: Rng + ?Sized>(config: &StageConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let d_f = config.d_f();
        let mut store = ParamStore::new();
        let projection = config.projected_kind().map(|kind| {
            let name = format!("{}_projection", kind.as_str());
            (kind, Affine::init(&mut store, &name, config.extended_width(kind), d_f, rng))
        });
        let layers = (0..config.n_layers)
            .map(|l| LayerParams::init(&mut store, &format!("layer{l}"), config.ablation.attention, d_f, config.n_heads, rng))
            .collect();
        let classifier = Affine::init(&mut store, "classifier", d_f, config.n_classes, rng);
        Ok(Self { config: config.clone(), store, projection, layers, classifier })
    }

    pub fn scalar_count(&self) -> usize {
        self.store.scalar_count()
    }
}
