//! The NAP predictor head: pooling over frozen encoder feature sequences,
//! the 2L/3L MLP variant grid, exact reverse-mode gradients and a
//! deterministic Adam training loop. The encoder backbone is frozen; only
//! the head (and the attentive pooling query) train.

use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NapError, Result};
use crate::losses::{eval_loss, LossKind, LossSpec};
use crate::metrics::spearman_exact;
use crate::record::{ScoreRecord, Split};

const LN_EPS: f64 = 1e-6;

/// Frozen encoder outputs for one example.
#[derive(Debug, Clone)]
pub struct FeatureSequence {
    /// `L x d`.
    pub features: Vec<Vec<f64>>,
    /// true = valid position.
    pub mask: Vec<bool>,
}

impl FeatureSequence {
    pub fn new(features: Vec<Vec<f64>>, mask: Vec<bool>) -> Result<Self> {
        if features.is_empty() || mask.len() != features.len() {
            return Err(NapError::DimensionMismatch("feature/mask lengths".into()));
        }
        if !mask.iter().any(|&m| m) {
            return Err(NapError::EmptyInput("no valid positions"));
        }
        let d = features[0].len();
        for row in &features {
            if row.len() != d || row.iter().any(|v| !v.is_finite()) {
                return Err(NapError::DimensionMismatch("feature rows".into()));
            }
        }
        Ok(Self { features, mask })
    }

    /// All-valid sequence, as stored on the wire.
    pub fn from_rows(features: Vec<Vec<f64>>) -> Result<Self> {
        let mask = vec![true; features.len()];
        Self::new(features, mask)
    }

    pub fn dim(&self) -> usize {
        self.features[0].len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Relu,
    Softmax,
    LnExp,
    LnTanh,
}

impl Activation {
    fn has_ln(&self) -> bool {
        matches!(self, Self::LnExp | Self::LnTanh)
    }
}

/// One of the nine head architectures of the ablation grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct Variant {
    pub depth: u8,
    pub act: Activation,
}

impl Variant {
    pub const NAMES: [&'static str; 9] = [
        "2L-Tanh",
        "2L-SM",
        "2L-LN-Exp",
        "2L-LN-Tanh",
        "3L-ReLU",
        "3L-Tanh",
        "3L-LN-Exp",
        "3L-LN-Tanh",
        "3L-SM",
    ];

    pub fn parse(name: &str) -> Result<Self> {
        let v = match name {
            "2L-Tanh" => Self { depth: 2, act: Activation::Tanh },
            "2L-SM" => Self { depth: 2, act: Activation::Softmax },
            "2L-LN-Exp" => Self { depth: 2, act: Activation::LnExp },
            "2L-LN-Tanh" => Self { depth: 2, act: Activation::LnTanh },
            "3L-ReLU" => Self { depth: 3, act: Activation::Relu },
            "3L-Tanh" => Self { depth: 3, act: Activation::Tanh },
            "3L-LN-Exp" => Self { depth: 3, act: Activation::LnExp },
            "3L-LN-Tanh" => Self { depth: 3, act: Activation::LnTanh },
            "3L-SM" => Self { depth: 3, act: Activation::Softmax },
            _ => {
                return Err(NapError::UnknownName {
                    kind: "variant",
                    name: name.to_string(),
                    valid: Self::NAMES.join(", "),
                })
            }
        };
        Ok(v)
    }

    pub fn as_str(&self) -> &'static str {
        match (self.depth, self.act) {
            (2, Activation::Tanh) => "2L-Tanh",
            (2, Activation::Softmax) => "2L-SM",
            (2, Activation::LnExp) => "2L-LN-Exp",
            (2, Activation::LnTanh) => "2L-LN-Tanh",
            (3, Activation::Relu) => "3L-ReLU",
            (3, Activation::Tanh) => "3L-Tanh",
            (3, Activation::LnExp) => "3L-LN-Exp",
            (3, Activation::LnTanh) => "3L-LN-Tanh",
            (3, Activation::Softmax) => "3L-SM",
            _ => unreachable!("invalid variant"),
        }
    }

    /// The default head: three layers with an initial softmax activation.
    pub fn default_head() -> Self {
        Self { depth: 3, act: Activation::Softmax }
    }
}

impl From<Variant> for String {
    fn from(v: Variant) -> String {
        v.as_str().to_string()
    }
}

impl TryFrom<String> for Variant {
    type Error = String;
    fn try_from(s: String) -> std::result::Result<Self, String> {
        Variant::parse(&s).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    Average,
    Attentive,
}

impl Pooling {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "average" => Ok(Self::Average),
            "attentive" => Ok(Self::Attentive),
            _ => Err(NapError::UnknownName {
                kind: "pooling",
                name: name.to_string(),
                valid: "average, attentive".into(),
            }),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Affine {
    /// `w[out][in]`.
    pub w: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

impl Affine {
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.w
            .iter()
            .zip(&self.b)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }

    fn n_params(&self) -> usize {
        self.w.len() * self.w[0].len() + self.b.len()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerNorm {
    pub gain: Vec<f64>,
    pub bias: Vec<f64>,
}

/// All trainable parameters of one NAP head.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HeadParams {
    pub variant: Variant,
    pub pooling: Pooling,
    /// Attentive pooling query; present iff pooling is attentive.
    pub query: Option<Vec<f64>>,
    /// Layer norm before the first activation; present iff the variant has LN.
    pub ln: Option<LayerNorm>,
    pub layers: Vec<Affine>,
}

/// Width for a 2L variant that matches the parameter count of the 3L variant
/// with hidden width `hidden` (within 1%).
pub fn matched_2l_width(dim: usize, hidden: usize, has_ln: bool) -> usize {
    let ln2 = if has_ln { 2 } else { 0 };
    // 3L: affine(d->h) + [LN] + affine(h->h) + tanh + affine(h->1)
    let p3 = hidden * dim + hidden + ln2 * hidden + hidden * hidden + hidden + hidden + 1;
    // 2L: affine(d->w) + [LN] + affine(w->1); params = w(d + 2 + ln2) + 1
    let w = (p3 - 1) as f64 / (dim + 2 + ln2) as f64;
    (w.round() as usize).max(1)
}

impl HeadParams {
    /// Seeded initialization: Xavier-uniform affine weights, unit LN gain,
    /// zero biases, small Gaussian query.
    pub fn init(variant: Variant, pooling: Pooling, dim: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = if variant.depth == 2 {
            matched_2l_width(dim, hidden, variant.act.has_ln())
        } else {
            hidden
        };
        let mut affine = |fan_in: usize, fan_out: usize| {
            let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
            Affine {
                w: (0..fan_out)
                    .map(|_| (0..fan_in).map(|_| rng.gen_range(-s..s)).collect())
                    .collect(),
                b: vec![0.0; fan_out],
            }
        };
        let layers = if variant.depth == 2 {
            vec![affine(dim, h), affine(h, 1)]
        } else {
            vec![affine(dim, h), affine(h, h), affine(h, 1)]
        };
        let ln = variant.act.has_ln().then(|| LayerNorm {
            gain: vec![1.0; h],
            bias: vec![0.0; h],
        });
        let query = matches!(pooling, Pooling::Attentive).then(|| {
            let scale = 1.0 / (dim as f64).sqrt();
            (0..dim).map(|_| rng.gen_range(-scale..scale)).collect()
        });
        Self { variant, pooling, query, ln, layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w[0].len()
    }

    pub fn hidden_width(&self) -> usize {
        self.layers[0].w.len()
    }

    pub fn n_params(&self) -> usize {
        let mut n = self.layers.iter().map(Affine::n_params).sum::<usize>();
        if let Some(ln) = &self.ln {
            n += ln.gain.len() + ln.bias.len();
        }
        if let Some(q) = &self.query {
            n += q.len();
        }
        n
    }

    /// Flatten trainable parameters in a fixed order:
    /// query, LN gain, LN bias, then each affine's weights row-major and bias.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.n_params());
        if let Some(q) = &self.query {
            flat.extend_from_slice(q);
        }
        if let Some(ln) = &self.ln {
            flat.extend_from_slice(&ln.gain);
            flat.extend_from_slice(&ln.bias);
        }
        for layer in &self.layers {
            for row in &layer.w {
                flat.extend_from_slice(row);
            }
            flat.extend_from_slice(&layer.b);
        }
        flat
    }

    pub fn set_from_flat(&mut self, flat: &[f64]) {
        let mut i = 0;
        let mut take = |n: usize| {
            let s = &flat[i..i + n];
            i += n;
            s.to_vec()
        };
        if let Some(q) = &mut self.query {
            *q = take(q.len());
        }
        if let Some(ln) = &mut self.ln {
            ln.gain = take(ln.gain.len());
            ln.bias = take(ln.bias.len());
        }
        for layer in &mut self.layers {
            for r in 0..layer.w.len() {
                layer.w[r] = take(layer.w[r].len());
            }
            layer.b = take(layer.b.len());
        }
        debug_assert_eq!(i, flat.len());
    }
}

/// Masked mean over valid rows.
pub fn average_pool(fs: &FeatureSequence) -> Vec<f64> {
    let d = fs.dim();
    let mut pooled = vec![0.0; d];
    let mut count = 0.0;
    for (row, &valid) in fs.features.iter().zip(&fs.mask) {
        if valid {
            for (p, v) in pooled.iter_mut().zip(row) {
                *p += v;
            }
            count += 1.0;
        }
    }
    for p in &mut pooled {
        *p /= count;
    }
    pooled
}

/// Single-head attention with a trainable query and no key/value projections:
/// `score_l = <query, f_l> / sqrt(d)`, softmax over valid positions.
/// Returns the pooled vector and the attention weights (0 at masked slots).
pub fn attentive_pool(fs: &FeatureSequence, query: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = fs.dim();
    if query.len() != d {
        return Err(NapError::DimensionMismatch(format!("query {} vs features {d}", query.len())));
    }
    let scale = 1.0 / (d as f64).sqrt();
    let scores: Vec<f64> = fs
        .features
        .iter()
        .zip(&fs.mask)
        .map(|(row, &valid)| {
            if valid {
                row.iter().zip(query).map(|(f, q)| f * q).sum::<f64>() * scale
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores
        .iter()
        .map(|&s| if s.is_finite() { (s - max).exp() } else { 0.0 })
        .collect();
    let z: f64 = exps.iter().sum();
    let weights: Vec<f64> = exps.into_iter().map(|e| e / z).collect();
    let mut pooled = vec![0.0; d];
    for (row, &w) in fs.features.iter().zip(&weights) {
        if w > 0.0 {
            for (p, v) in pooled.iter_mut().zip(row) {
                *p += w * v;
            }
        }
    }
    Ok((pooled, weights))
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

struct LnCache {
    norm: Vec<f64>,
    inv_std: f64,
}

/// Intermediates retained for the backward pass.
pub struct ForwardCache {
    features: Vec<Vec<f64>>,
    mask: Vec<bool>,
    att_weights: Option<Vec<f64>>,
    pooled: Vec<f64>,
    ln: Option<LnCache>,
    /// First activation input (post-LN when present).
    act_in: Vec<f64>,
    /// First activation output.
    a1: Vec<f64>,
    /// 3L only: tanh output of the middle layer.
    h2: Option<Vec<f64>>,
}

/// Pooling followed by the variant's layer stack; returns the scalar score
/// and the cache for [`head_backward`].
pub fn head_forward(fs: &FeatureSequence, params: &HeadParams) -> Result<(f64, ForwardCache)> {
    if fs.dim() != params.input_dim() {
        return Err(NapError::DimensionMismatch(format!(
            "features {} vs head {}",
            fs.dim(),
            params.input_dim()
        )));
    }
    let (pooled, att_weights) = match params.pooling {
        Pooling::Average => (average_pool(fs), None),
        Pooling::Attentive => {
            let q = params.query.as_ref().expect("attentive head has a query");
            let (p, w) = attentive_pool(fs, q)?;
            (p, Some(w))
        }
    };

    let z1 = params.layers[0].apply(&pooled);
    let (act_in, ln) = match &params.ln {
        None => (z1, None),
        Some(lnp) => {
            let h = z1.len();
            let mean = z1.iter().sum::<f64>() / h as f64;
            let var = z1.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / h as f64;
            let inv_std = 1.0 / (var + LN_EPS).sqrt();
            let norm: Vec<f64> = z1.iter().map(|v| (v - mean) * inv_std).collect();
            let y: Vec<f64> = norm
                .iter()
                .zip(&lnp.gain)
                .zip(&lnp.bias)
                .map(|((n, g), b)| n * g + b)
                .collect();
            (y, Some(LnCache { norm, inv_std }))
        }
    };
    let a1: Vec<f64> = match params.variant.act {
        Activation::Tanh | Activation::LnTanh => act_in.iter().map(|v| v.tanh()).collect(),
        Activation::Relu => act_in.iter().map(|v| v.max(0.0)).collect(),
        Activation::Softmax => softmax(&act_in),
        Activation::LnExp => act_in.iter().map(|v| v.exp()).collect(),
    };

    let (score, h2) = if params.variant.depth == 2 {
        (params.layers[1].apply(&a1)[0], None)
    } else {
        let z2 = params.layers[1].apply(&a1);
        let h2: Vec<f64> = z2.iter().map(|v| v.tanh()).collect();
        (params.layers[2].apply(&h2)[0], Some(h2))
    };

    Ok((
        score,
        ForwardCache {
            features: fs.features.clone(),
            mask: fs.mask.clone(),
            att_weights,
            pooled,
            ln,
            act_in,
            a1,
            h2,
        },
    ))
}

fn affine_backward(
    layer: &Affine,
    input: &[f64],
    upstream: &[f64],
    gw: &mut Vec<f64>,
    gb: &mut Vec<f64>,
) -> Vec<f64> {
    for u in upstream {
        for x in input {
            gw.push(u * x);
        }
    }
    gb.extend_from_slice(upstream);
    let mut gx = vec![0.0; input.len()];
    for (u, row) in upstream.iter().zip(&layer.w) {
        for (g, w) in gx.iter_mut().zip(row) {
            *g += u * w;
        }
    }
    gx
}

/// Exact gradients for all trainable parameters, flattened in the
/// [`HeadParams::to_flat`] order.
pub fn head_backward(params: &HeadParams, cache: &ForwardCache, upstream: f64) -> Vec<f64> {
    let h = params.hidden_width();

    // Walk the stack in reverse, collecting per-layer gradients.
    let mut layer_gw: Vec<Vec<f64>> = vec![Vec::new(); params.layers.len()];
    let mut layer_gb: Vec<Vec<f64>> = vec![Vec::new(); params.layers.len()];

    let g_a1: Vec<f64> = if params.variant.depth == 2 {
        affine_backward(
            &params.layers[1],
            &cache.a1,
            &[upstream],
            &mut layer_gw[1],
            &mut layer_gb[1],
        )
    } else {
        let h2 = cache.h2.as_ref().expect("3L cache");
        let g_h2 = affine_backward(
            &params.layers[2],
            h2,
            &[upstream],
            &mut layer_gw[2],
            &mut layer_gb[2],
        );
        let g_z2: Vec<f64> = g_h2.iter().zip(h2).map(|(g, t)| g * (1.0 - t * t)).collect();
        affine_backward(&params.layers[1], &cache.a1, &g_z2, &mut layer_gw[1], &mut layer_gb[1])
    };

    // Activation backward (into the post-LN pre-activation).
    let g_act_in: Vec<f64> = match params.variant.act {
        Activation::Tanh | Activation::LnTanh => g_a1
            .iter()
            .zip(&cache.a1)
            .map(|(g, a)| g * (1.0 - a * a))
            .collect(),
        Activation::Relu => g_a1
            .iter()
            .zip(&cache.act_in)
            .map(|(g, z)| if *z > 0.0 { *g } else { 0.0 })
            .collect(),
        Activation::Softmax => {
            let dot: f64 = g_a1.iter().zip(&cache.a1).map(|(g, p)| g * p).sum();
            g_a1.iter().zip(&cache.a1).map(|(g, p)| p * (g - dot)).collect()
        }
        Activation::LnExp => g_a1.iter().zip(&cache.a1).map(|(g, a)| g * a).collect(),
    };

    // LN backward when present.
    let (g_z1, g_gain, g_bias) = match (&params.ln, &cache.ln) {
        (Some(lnp), Some(lc)) => {
            let g_gain: Vec<f64> = g_act_in.iter().zip(&lc.norm).map(|(g, n)| g * n).collect();
            let g_bias: Vec<f64> = g_act_in.clone();
            let g_norm: Vec<f64> = g_act_in.iter().zip(&lnp.gain).map(|(g, gn)| g * gn).collect();
            let hf = h as f64;
            let mean_gn = g_norm.iter().sum::<f64>() / hf;
            let mean_gn_norm = g_norm.iter().zip(&lc.norm).map(|(g, n)| g * n).sum::<f64>() / hf;
            let g_z1: Vec<f64> = g_norm
                .iter()
                .zip(&lc.norm)
                .map(|(g, n)| lc.inv_std * (g - mean_gn - n * mean_gn_norm))
                .collect();
            (g_z1, Some(g_gain), Some(g_bias))
        }
        _ => (g_act_in, None, None),
    };

    let g_pooled = affine_backward(
        &params.layers[0],
        &cache.pooled,
        &g_z1,
        &mut layer_gw[0],
        &mut layer_gb[0],
    );

    // Attentive pooling: gradient w.r.t. the query (features are frozen).
    let g_query: Option<Vec<f64>> = match (&params.pooling, &cache.att_weights) {
        (Pooling::Attentive, Some(weights)) => {
            let d = cache.pooled.len();
            let scale = 1.0 / (d as f64).sqrt();
            let g_w: Vec<f64> = cache
                .features
                .iter()
                .map(|row| row.iter().zip(&g_pooled).map(|(f, g)| f * g).sum::<f64>())
                .collect();
            let dot: f64 = weights.iter().zip(&g_w).map(|(a, g)| a * g).sum();
            let mut gq = vec![0.0; d];
            for ((row, &a), (&gw_l, &valid)) in cache
                .features
                .iter()
                .zip(weights)
                .zip(g_w.iter().zip(&cache.mask))
            {
                if valid {
                    let g_score = a * (gw_l - dot);
                    for (g, f) in gq.iter_mut().zip(row) {
                        *g += g_score * f * scale;
                    }
                }
            }
            Some(gq)
        }
        _ => None,
    };

    let mut flat = Vec::with_capacity(params.n_params());
    if let Some(gq) = g_query {
        flat.extend(gq);
    } else if params.query.is_some() {
        flat.extend(std::iter::repeat(0.0).take(params.query.as_ref().unwrap().len()));
    }
    if params.ln.is_some() {
        flat.extend(g_gain.unwrap_or_else(|| vec![0.0; h]));
        flat.extend(g_bias.unwrap_or_else(|| vec![0.0; h]));
    }
    for (gw, gb) in layer_gw.into_iter().zip(layer_gb) {
        flat.extend(gw);
        flat.extend(gb);
    }
    flat
}

/// Minimum effective batch for correlation losses; smaller batches are skipped.
pub const MIN_CORRELATION_BATCH: usize = 8;

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub loss: LossSpec,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub evals_per_epoch: usize,
    /// 0 means "one epoch worth of evaluations".
    pub patience_evals: usize,
    pub seed: u64,
    pub hidden_width: usize,
    /// Aleatoric target field for the ep_al loss.
    pub aux_field: Option<String>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss: LossSpec { kind: LossKind::Scc, epsilon: 1e-6, alpha: 0.0 },
            learning_rate: 1e-4,
            batch_size: 32,
            max_epochs: 100,
            evals_per_epoch: 10,
            patience_evals: 0,
            seed: 0,
            hidden_width: 64,
            aux_field: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        if !(self.learning_rate > 0.0) {
            return Err(NapError::InvalidConfig("learning rate must be > 0".into()));
        }
        if self.loss.kind.is_correlation() && self.batch_size < MIN_CORRELATION_BATCH {
            return Err(NapError::InvalidConfig(format!(
                "batch size {} below minimum {MIN_CORRELATION_BATCH} for correlation losses",
                self.batch_size
            )));
        }
        if self.batch_size == 0 {
            return Err(NapError::InvalidConfig("batch size must be > 0".into()));
        }
        if self.evals_per_epoch == 0 {
            return Err(NapError::InvalidConfig("evals_per_epoch must be >= 1".into()));
        }
        Ok(())
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    lr: f64,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize, lr: f64) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0, lr }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let bc1 = 1.0 - Self::BETA1.powi(self.t as i32);
        let bc2 = 1.0 - Self::BETA2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * grad[i];
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * grad[i] * grad[i];
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            params[i] -= self.lr * mhat / (vhat.sqrt() + Self::EPS);
        }
    }
}

fn score_records(params: &HeadParams, records: &[&ScoreRecord]) -> Result<Vec<f64>> {
    records
        .iter()
        .map(|r| {
            let fs = FeatureSequence::from_rows(r.features.clone())?;
            head_forward(&fs, params).map(|(s, _)| s)
        })
        .collect()
}

/// Score every record in input order with a trained head.
pub fn score_all(params: &HeadParams, records: &[ScoreRecord]) -> Result<Vec<f64>> {
    let refs: Vec<&ScoreRecord> = records.iter().collect();
    score_records(params, &refs)
}

/// Minibatch Adam on the configured loss with validation-Spearman early
/// stopping. Deterministic given the seed; returns the parameters at the
/// best validation point and the (step, validation spearman) history.
pub fn train_head(
    records: &[ScoreRecord],
    target_field: &str,
    config: &TrainConfig,
    init_params: &HeadParams,
) -> Result<(HeadParams, Vec<(usize, f64)>)> {
    config.validate()?;
    let train: Vec<&ScoreRecord> = records.iter().filter(|r| r.split == Split::Train).collect();
    let val: Vec<&ScoreRecord> = records.iter().filter(|r| r.split == Split::Validation).collect();
    if train.is_empty() {
        return Err(NapError::EmptyInput("train split"));
    }
    if val.is_empty() {
        return Err(NapError::EmptyInput("validation split"));
    }
    let train_targets: Vec<f64> = train
        .iter()
        .map(|r| r.target(target_field))
        .collect::<Result<_>>()?;
    let val_targets: Vec<f64> = val
        .iter()
        .map(|r| r.target(target_field))
        .collect::<Result<_>>()?;
    if train_targets.iter().all(|&t| t == train_targets[0]) {
        return Err(NapError::DegenerateTarget);
    }
    let aux_field = match config.loss.kind {
        LossKind::EpAl => Some(config.aux_field.clone().unwrap_or_else(|| "aleatoric".into())),
        _ => None,
    };
    let train_aux: Option<Vec<f64>> = match &aux_field {
        Some(f) => Some(train.iter().map(|r| r.target(f)).collect::<Result<_>>()?),
        None => None,
    };

    let mut params = init_params.clone();
    let mut flat = params.to_flat();
    let mut adam = Adam::new(flat.len(), config.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let steps_per_epoch = (train.len() + config.batch_size - 1) / config.batch_size;
    let eval_every = (steps_per_epoch / config.evals_per_epoch).max(1);
    let patience = if config.patience_evals == 0 {
        config.evals_per_epoch
    } else {
        config.patience_evals
    };

    let mut best_metric = f64::NEG_INFINITY;
    let mut best_flat = flat.clone();
    let mut since_improve = 0usize;
    let mut history = Vec::new();
    let mut step = 0usize;
    let mut skipped_batches = 0usize;

    'outer: for _epoch in 0..config.max_epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            step += 1;
            let skip = chunk.len() < MIN_CORRELATION_BATCH && config.loss.kind.is_correlation();
            if !skip {
                params.set_from_flat(&flat);
                let mut preds = Vec::with_capacity(chunk.len());
                let mut caches = Vec::with_capacity(chunk.len());
                for &i in chunk {
                    let fs = FeatureSequence::from_rows(train[i].features.clone())?;
                    let (s, c) = head_forward(&fs, &params)?;
                    preds.push(s);
                    caches.push(c);
                }
                let targets: Vec<f64> = chunk.iter().map(|&i| train_targets[i]).collect();
                let aux: Option<Vec<f64>> = train_aux
                    .as_ref()
                    .map(|a| chunk.iter().map(|&i| a[i]).collect());
                match eval_loss(&config.loss, &preds, &targets, aux.as_deref()) {
                    Ok((_, grad_scores)) => {
                        let mut grad = vec![0.0; flat.len()];
                        // Fixed index order keeps accumulation deterministic.
                        for (cache, &g) in caches.iter().zip(&grad_scores) {
                            let gi = head_backward(&params, cache, g);
                            for (acc, v) in grad.iter_mut().zip(&gi) {
                                *acc += v;
                            }
                        }
                        adam.step(&mut flat, &grad);
                    }
                    Err(NapError::ZeroVariance) | Err(NapError::ZeroRankVariance) => {
                        skipped_batches += 1;
                    }
                    Err(e) => return Err(e),
                }
            }
            if step % eval_every == 0 {
                params.set_from_flat(&flat);
                let preds = score_records(&params, &val)?;
                let metric = spearman_exact(&preds, &val_targets).unwrap_or(f64::NEG_INFINITY);
                history.push((step, metric));
                if metric > best_metric {
                    best_metric = metric;
                    best_flat = flat.clone();
                    since_improve = 0;
                } else {
                    since_improve += 1;
                    if since_improve >= patience {
                        break 'outer;
                    }
                }
            }
        }
    }
    if skipped_batches > 0 {
        eprintln!("warning: skipped {skipped_batches} degenerate batches");
    }
    params.set_from_flat(&best_flat);
    Ok((params, history))
}

const PARAMS_FORMAT: &str = "nap-head-params";
const PARAMS_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ParamsFile {
    format: String,
    version: u32,
    params: HeadParams,
}

/// Versioned text serialization with exact round-trip (shortest decimal reals).
pub fn save_params(path: &Path, params: &HeadParams) -> Result<()> {
    let file = ParamsFile {
        format: PARAMS_FORMAT.into(),
        version: PARAMS_VERSION,
        params: params.clone(),
    };
    let mut bytes = serde_json::to_vec_pretty(&file)?;
    bytes.push(b'\n');
    std::fs::write(path, bytes)?;
    Ok(())
}

pub fn load_params(path: &Path) -> Result<HeadParams> {
    let bytes = std::fs::read(path)?;
    let file: ParamsFile = serde_json::from_slice(&bytes)?;
    if file.format != PARAMS_FORMAT || file.version != PARAMS_VERSION {
        return Err(NapError::InvalidConfig(format!(
            "unsupported params file {} v{}",
            file.format, file.version
        )));
    }
    Ok(file.params)
}
