//! Graph-attention heads and layers.
//!
//! A graph head projects node features to `h`, scores every ordered pair with
//! an affine map on `h_i ∥ h_j` followed by LeakyReLU, scales the scores by the
//! adjacency, normalizes each row with a softmax restricted to connected
//! entries and outputs `elu(Σ_j w_ij h_j)`. A layer runs its heads in
//! parallel, concatenates them, maps back to the model width and applies a
//! residual connection followed by layer normalization.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::numcore::ops::LAYER_NORM_EPS;
use crate::numcore::{Matrix, ParamId, ParamStore, Tape, Var};
use crate::Result;

/// Which attention mechanism the heads use.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttentionKind {
    #[default]
    Graph,
    /// Scaled dot-product attention; adjacency conditioning is skipped.
    Transformer,
}

/// Affine projection `x·W + b`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Affine {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Affine {
    /// Glorot-uniform weight, zero bias.
    pub fn init<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let w = Matrix::from_fn(fan_in, fan_out, |_, _| rng.random_range(-limit..=limit));
        let weight = store.push(format!("{name}.weight"), w);
        let bias = store.push(format!("{name}.bias"), Matrix::zeros(1, fan_out));
        Self { weight, bias }
    }

    pub fn apply<'p>(&self, tape: &mut Tape<'p>, store: &'p ParamStore, x: Var) -> Result<Var> {
        let (w, b) = (tape.param(store, self.weight), tape.param(store, self.bias));
        Ok(tape.linear(x, w, b)?)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GraphHeadParams {
    /// `d_f → d_h` projection producing `h`.
    pub projection: Affine,
    /// `2·d_h → 1` pair scorer.
    pub scorer: Affine,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransformerHeadParams {
    pub query: Affine,
    pub key: Affine,
    pub value: Affine,
}

#[derive(Clone, Debug, PartialEq)]
pub enum HeadParams {
    Graph(GraphHeadParams),
    Transformer(TransformerHeadParams),
}

impl HeadParams {
    pub fn init<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, kind: AttentionKind, d_f: usize, d_h: usize, rng: &mut R) -> Self {
        match kind {
            AttentionKind::Graph => HeadParams::Graph(GraphHeadParams {
                projection: Affine::init(store, &format!("{name}.proj"), d_f, d_h, rng),
                scorer: Affine::init(store, &format!("{name}.score"), 2 * d_h, 1, rng),
            }),
            AttentionKind::Transformer => HeadParams::Transformer(TransformerHeadParams {
                query: Affine::init(store, &format!("{name}.query"), d_f, d_h, rng),
                key: Affine::init(store, &format!("{name}.key"), d_f, d_h, rng),
                value: Affine::init(store, &format!("{name}.value"), d_f, d_h, rng),
            }),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams {
    pub heads: Vec<HeadParams>,
    /// `n_h·d_h → d_f` map applied to the concatenated heads.
    pub output: Affine,
    pub norm_gain: ParamId,
    pub norm_bias: ParamId,
}

impl LayerParams {
    pub fn init<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, kind: AttentionKind, d_f: usize, n_heads: usize, rng: &mut R) -> Self {
        let d_h = head_width(d_f, n_heads);
        let heads = (0..n_heads).map(|h| HeadParams::init(store, &format!("{name}.head{h}"), kind, d_f, d_h, rng)).collect();
        let output = Affine::init(store, &format!("{name}.out"), n_heads * d_h, d_f, rng);
        let norm_gain = store.push(format!("{name}.norm.gain"), Matrix::filled(1, d_f, 1.0));
        let norm_bias = store.push(format!("{name}.norm.bias"), Matrix::zeros(1, d_f));
        Self { heads, output, norm_gain, norm_bias }
    }
}

/// Per-head width `⌊d_f / n_h⌋`.
pub fn head_width(d_f: usize, n_heads: usize) -> usize {
    d_f / n_heads
}

/// Number of consecutive clips that can influence one clip's output after
/// `n_layers` layers when each layer links clips up to `(rf_direct−1)/2` apart.
pub fn receptive_field(n_layers: usize, rf_direct: usize) -> usize {
    assert!(n_layers >= 1, "at least one layer");
    rf_direct + (rf_direct - 1) * (n_layers - 1)
}

/// How attention logits are conditioned on pairwise structure.
#[derive(Clone, Copy, Debug)]
pub enum Adjacency<'p> {
    /// Constant matrix (box proximity).
    Fixed(&'p Matrix),
    /// Matrix computed on the tape (feature distance).
    Computed(Var),
    /// No conditioning; only the mask applies.
    Off,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HeadSettings {
    pub leaky_slope: f64,
    pub keep: f64,
}

impl Default for HeadSettings {
    fn default() -> Self {
        Self { leaky_slope: 0.2, keep: 0.5 }
    }
}

/// Shapes of one learnable block as seen during a forward pass.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShapeRecord {
    pub block: &'static str,
    pub layer: Option<usize>,
    pub head: Option<usize>,
    pub input: Vec<usize>,
    pub output: Vec<usize>,
}

/// Optional side channel of a forward pass: block shapes and attention weights.
#[derive(Clone, Debug, Default)]
pub struct Trace {
    pub shapes: Vec<ShapeRecord>,
    /// Row-normalized attention weights, one per (layer, head) in order.
    pub attention: Vec<Var>,
}

impl Trace {
    pub(crate) fn shape(&mut self, block: &'static str, layer: Option<usize>, head: Option<usize>, input: &[usize], output: &[usize]) {
        self.shapes.push(ShapeRecord { block, layer, head, input: input.to_vec(), output: output.to_vec() });
    }
}

/// Everything a forward pass over one window needs besides parameters.
pub struct ForwardCtx<'p, 'r, R: Rng + ?Sized> {
    pub adjacency: Adjacency<'p>,
    /// `{0,1}`; zero entries get exactly zero attention.
    pub mask: &'p Matrix,
    pub settings: HeadSettings,
    pub training: bool,
    pub rng: &'r mut R,
    pub trace: Option<&'r mut Trace>,
}

pub fn head_forward<'p, R: Rng + ?Sized>(
    tape: &mut Tape<'p>,
    store: &'p ParamStore,
    x: Var,
    head: &HeadParams,
    ctx: &mut ForwardCtx<'p, '_, R>,
    at: (usize, usize),
) -> Result<Var> {
    let n = tape.shape(x).0;
    let out = match head {
        HeadParams::Graph(p) => {
            let h = p.projection.apply(tape, store, x)?;
            let d_h = tape.shape(h).1;
            let (sw, sb) = (tape.param(store, p.scorer.weight), tape.param(store, p.scorer.bias));
            let scores = tape.pair_scores(h, sw, sb)?;
            if let Some(t) = ctx.trace.as_deref_mut() {
                t.shape("head_projection", Some(at.0), Some(at.1), &[n, tape.shape(x).1], &[n, d_h]);
                t.shape("pair_scorer", Some(at.0), Some(at.1), &[n, n, 2 * d_h], &[n, n]);
            }
            let e = tape.leaky_relu(scores, ctx.settings.leaky_slope);
            let d = match ctx.adjacency {
                Adjacency::Fixed(a) => tape.hadamard_const(e, a)?,
                Adjacency::Computed(a) => tape.hadamard(e, a)?,
                Adjacency::Off => e,
            };
            let weights = tape.masked_softmax(d, ctx.mask)?;
            if let Some(t) = ctx.trace.as_deref_mut() {
                t.attention.push(weights);
            }
            let mixed = tape.matmul(weights, h)?;
            tape.elu(mixed)
        }
        HeadParams::Transformer(p) => {
            let q = p.query.apply(tape, store, x)?;
            let k = p.key.apply(tape, store, x)?;
            let v = p.value.apply(tape, store, x)?;
            let d_k = tape.shape(q).1;
            let logits = tape.matmul_nt(q, k)?;
            let logits = tape.scale(logits, 1.0 / (d_k as f64).sqrt());
            if let Some(t) = ctx.trace.as_deref_mut() {
                t.shape("query_key_value", Some(at.0), Some(at.1), &[n, tape.shape(x).1], &[n, d_k]);
            }
            let weights = tape.masked_softmax(logits, ctx.mask)?;
            if let Some(t) = ctx.trace.as_deref_mut() {
                t.attention.push(weights);
            }
            tape.matmul(weights, v)?
        }
    };
    Ok(tape.dropout(out, ctx.settings.keep, ctx.training, &mut *ctx.rng))
}

/// `layer_norm(x + concat(heads)·W_o + b_o)`.
pub fn layer_forward<'p, R: Rng + ?Sized>(
    tape: &mut Tape<'p>,
    store: &'p ParamStore,
    x: Var,
    layer: &LayerParams,
    ctx: &mut ForwardCtx<'p, '_, R>,
    index: usize,
) -> Result<Var> {
    let mut outs = Vec::with_capacity(layer.heads.len());
    for (h, head) in layer.heads.iter().enumerate() {
        outs.push(head_forward(tape, store, x, head, ctx, (index, h))?);
    }
    let cat = tape.concat_cols(&outs)?;
    let mapped = layer.output.apply(tape, store, cat)?;
    let residual = tape.add(x, mapped)?;
    let (g, b) = (tape.param(store, layer.norm_gain), tape.param(store, layer.norm_bias));
    let out = tape.layer_norm(residual, g, b, LAYER_NORM_EPS)?;
    if let Some(t) = ctx.trace.as_deref_mut() {
        let (n, w) = tape.shape(cat);
        let d_f = tape.shape(out).1;
        t.shape("output_projection", Some(index), None, &[n, w], &[n, d_f]);
        t.shape("layer_norm", Some(index), None, &[n, d_f], &[n, d_f]);
    }
    Ok(out)
}

/// Applies the layers in sequence with the same adjacency and mask.
pub fn stage_forward<'p, R: Rng + ?Sized>(
    tape: &mut Tape<'p>,
    store: &'p ParamStore,
    x: Var,
    layers: &[LayerParams],
    ctx: &mut ForwardCtx<'p, '_, R>,
) -> Result<Var> {
    if layers.is_empty() {
        return Err(crate::Error::Config("at least one attention layer is required".into()));
    }
    let mut h = x;
    for (i, layer) in layers.iter().enumerate() {
        h = layer_forward(tape, store, h, layer, ctx, i)?;
    }
    Ok(h)
}
