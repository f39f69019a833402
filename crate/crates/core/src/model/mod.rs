//! Aspect-level towers, fusion heads and the interaction predictor.
//!
//! Every `(side, aspect)` pair owns an MLP tower that maps a raw PathSim row
//! to a nonnegative latent factor. The per-aspect factors of a node are
//! fused into one vector (attention, self-attention, averaging, or a single
//! aspect), and a user-item pair is scored by `sigmoid(<u, v>)`.

pub mod fusion;
mod sampler;
mod train;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{axpy, clamp_prob, dot, sigmoid, Activation, DenseMatrix, Mlp, MlpCache, MlpGrads};
use crate::simpath::{Side, SimilarityMatrix};

pub use sampler::{sample_negatives, TrainingSet};
pub use train::{build_epoch_examples, train_epoch, Example, TrainConfig};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Aspect {
    pub label: String,
    pub user_path: String,
    pub item_path: String,
}

impl Aspect {
    pub fn new(label: &str, user_path: &str, item_path: &str) -> Self {
        Aspect {
            label: label.into(),
            user_path: user_path.into(),
            item_path: item_path.into(),
        }
    }
}

/// Ordered aspects with their user-side and item-side meta-paths.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Aspect>", into = "Vec<Aspect>")]
pub struct AspectSet {
    aspects: Vec<Aspect>,
}

impl AspectSet {
    pub fn new(aspects: Vec<Aspect>) -> Result<Self> {
        if aspects.is_empty() {
            return Err(Error::Config("at least one aspect is required".into()));
        }
        let mut seen = HashSet::new();
        for a in &aspects {
            if a.label.is_empty() || a.label.chars().any(|c| c.is_whitespace()) {
                return Err(Error::Config(format!("invalid aspect label `{}`", a.label)));
            }
            if a.user_path.is_empty() || a.item_path.is_empty() {
                return Err(Error::Config(format!(
                    "aspect `{}` lacks a meta-path",
                    a.label
                )));
            }
            if !seen.insert(a.label.as_str()) {
                return Err(Error::Config(format!("duplicate aspect `{}`", a.label)));
            }
        }
        Ok(AspectSet { aspects })
    }

    pub fn movielens_default() -> Self {
        AspectSet {
            aspects: vec![
                Aspect::new("History", "UMU", "MUM"),
                Aspect::new("Director", "UMDMU", "MDM"),
                Aspect::new("Actor", "UMAMU", "MAM"),
            ],
        }
    }

    pub fn amazon_default() -> Self {
        AspectSet {
            aspects: vec![
                Aspect::new("History", "UIU", "IUI"),
                Aspect::new("Brand", "UIBIU", "IBI"),
                Aspect::new("Category", "UICIU", "ICI"),
                Aspect::new("CoView", "UIVIU", "IVI"),
            ],
        }
    }

    pub fn len(&self) -> usize {
        self.aspects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.aspects.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Aspect> {
        self.aspects.iter()
    }

    pub fn labels(&self) -> Vec<String> {
        self.aspects.iter().map(|a| a.label.clone()).collect()
    }

    /// Looks an aspect up by label or by its `user-item` path pair
    /// (e.g. `UMU-MUM`).
    pub fn find(&self, key: &str) -> Option<&Aspect> {
        self.aspects
            .iter()
            .find(|a| a.label == key || format!("{}-{}", a.user_path, a.item_path) == key)
    }
}

impl TryFrom<Vec<Aspect>> for AspectSet {
    type Error = Error;

    fn try_from(v: Vec<Aspect>) -> Result<Self> {
        AspectSet::new(v)
    }
}

impl From<AspectSet> for Vec<Aspect> {
    fn from(s: AspectSet) -> Self {
        s.aspects
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum FusionMode {
    Attention,
    SelfAttention,
    Average,
    /// Train and score with one aspect only.
    Single(String),
}

impl fmt::Display for FusionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FusionMode::Attention => f.write_str("attention"),
            FusionMode::SelfAttention => f.write_str("self_attention"),
            FusionMode::Average => f.write_str("average"),
            FusionMode::Single(a) => write!(f, "single:{a}"),
        }
    }
}

impl FromStr for FusionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "attention" => Ok(FusionMode::Attention),
            "self_attention" => Ok(FusionMode::SelfAttention),
            "average" => Ok(FusionMode::Average),
            other => match other.strip_prefix("single:") {
                Some(a) if !a.is_empty() => Ok(FusionMode::Single(a.to_string())),
                _ => Err(Error::Config(format!(
                    "unknown fusion mode `{other}` (expected attention, self_attention, average or single:<aspect>)"
                ))),
            },
        }
    }
}

impl TryFrom<String> for FusionMode {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<FusionMode> for String {
    fn from(m: FusionMode) -> Self {
        m.to_string()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelDims {
    pub latent_dim: usize,
    pub hidden: usize,
    /// Number of weight layers per tower.
    pub layers: usize,
    pub attention_hidden: usize,
    /// Activation of the last tower layer; ReLU keeps factors nonnegative.
    pub tower_output: Activation,
}

impl Default for ModelDims {
    fn default() -> Self {
        ModelDims {
            latent_dim: 64,
            hidden: 600,
            layers: 3,
            attention_hidden: 64,
            tower_output: Activation::Relu,
        }
    }
}

impl ModelDims {
    pub fn tower_sizes(&self, n_inputs: usize) -> Vec<usize> {
        let mut sizes = vec![n_inputs];
        sizes.extend(std::iter::repeat_n(
            self.hidden,
            self.layers.saturating_sub(1),
        ));
        sizes.push(self.latent_dim);
        sizes
    }
}

/// Similarity matrices feeding the towers, aligned with the model's aspects.
#[derive(Clone, Debug)]
pub struct FeatureSet {
    pub user: Vec<SimilarityMatrix>,
    pub item: Vec<SimilarityMatrix>,
}

impl FeatureSet {
    /// Picks the user and item matrix of each label from `all`.
    pub fn select(all: &[SimilarityMatrix], labels: &[String]) -> Result<Self> {
        let pick = |label: &str, side: Side| {
            all.iter()
                .find(|s| s.aspect == label && s.side == side)
                .cloned()
                .ok_or_else(|| {
                    Error::UnknownAspect(format!("{label} (no {side}-side similarity matrix)"))
                })
        };
        let mut user = Vec::new();
        let mut item = Vec::new();
        for label in labels {
            user.push(pick(label, Side::User)?);
            item.push(pick(label, Side::Item)?);
        }
        Ok(FeatureSet { user, item })
    }

    pub fn side(&self, side: Side) -> &[SimilarityMatrix] {
        match side {
            Side::User => &self.user,
            Side::Item => &self.item,
        }
    }

    pub fn n_nodes(&self, side: Side) -> usize {
        self.side(side).first().map_or(0, SimilarityMatrix::n)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NeuAcfModel {
    pub dims: ModelDims,
    pub fusion: FusionMode,
    /// Labels of the aspects with towers, in tower order.
    pub aspects: Vec<String>,
    pub user_towers: Vec<Mlp>,
    pub item_towers: Vec<Mlp>,
    pub user_attention: Option<Mlp>,
    pub item_attention: Option<Mlp>,
}

/// Parameter gradients in the layout of [`NeuAcfModel::params_mut`].
#[derive(Clone, Debug)]
pub struct ModelGrads {
    pub user_towers: Vec<MlpGrads>,
    pub item_towers: Vec<MlpGrads>,
    pub user_attention: Option<MlpGrads>,
    pub item_attention: Option<MlpGrads>,
}

impl ModelGrads {
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for g in self.user_towers.iter().chain(&self.item_towers) {
            out.extend(g.slices());
        }
        for g in self.user_attention.iter().chain(&self.item_attention) {
            out.extend(g.slices());
        }
        out
    }
}

/// Batched forward state of one side: per-aspect tower caches plus fusion
/// intermediates for every node in `nodes`.
pub struct SideForward {
    pub nodes: Vec<usize>,
    towers: Vec<MlpCache>,
    fusion: FusionCache,
    pub fused: DenseMatrix,
}

enum FusionCache {
    Identity,
    Average,
    Attention {
        /// Attention-net cache over rows `node * L + aspect`.
        net: MlpCache,
        weights: DenseMatrix,
    },
    SelfAttention {
        coeffs: Vec<DenseMatrix>,
    },
}

impl SideForward {
    /// Aspect factors of the `j`-th node in the batch.
    pub fn factors(&self, j: usize) -> Vec<&[f64]> {
        self.towers.iter().map(|c| c.output().row(j)).collect()
    }

    /// Per-aspect fusion weights of the `j`-th node: softmax weights for
    /// attention, column shares of the coefficient matrix for
    /// self-attention, uniform for averaging.
    pub fn aspect_weights(&self, j: usize) -> Vec<f64> {
        let l = self.towers.len();
        match &self.fusion {
            FusionCache::Identity => vec![1.0],
            FusionCache::Average => vec![1.0 / l as f64; l],
            FusionCache::Attention { weights, .. } => weights.row(j).to_vec(),
            FusionCache::SelfAttention { coeffs } => (0..l)
                .map(|c| (0..l).map(|b| coeffs[j][(b, c)]).sum::<f64>() / l as f64)
                .collect(),
        }
    }
}

impl NeuAcfModel {
    pub fn new<R: Rng + ?Sized>(
        aspects: &AspectSet,
        fusion: FusionMode,
        dims: ModelDims,
        n_users: usize,
        n_items: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if dims.latent_dim == 0
            || dims.hidden == 0
            || dims.layers == 0
            || dims.attention_hidden == 0
        {
            return Err(Error::Config("model dimensions must be positive".into()));
        }
        // Single modes are normalised to the aspect label.
        let (fusion, labels) = match fusion {
            FusionMode::Single(key) => {
                let label = aspects
                    .find(&key)
                    .ok_or_else(|| Error::UnknownAspect(key.clone()))?
                    .label
                    .clone();
                (FusionMode::Single(label.clone()), vec![label])
            }
            other => (other, aspects.labels()),
        };
        let user_towers = labels
            .iter()
            .map(|_| Mlp::new(&dims.tower_sizes(n_users), dims.tower_output, rng))
            .collect();
        let item_towers = labels
            .iter()
            .map(|_| Mlp::new(&dims.tower_sizes(n_items), dims.tower_output, rng))
            .collect();
        let attention_sizes = [dims.latent_dim, dims.attention_hidden, 1];
        let (user_attention, item_attention) = if fusion == FusionMode::Attention {
            (
                Some(Mlp::new(&attention_sizes, Activation::Identity, rng)),
                Some(Mlp::new(&attention_sizes, Activation::Identity, rng)),
            )
        } else {
            (None, None)
        };
        Ok(NeuAcfModel {
            dims,
            fusion,
            aspects: labels,
            user_towers,
            item_towers,
            user_attention,
            item_attention,
        })
    }

    pub fn n_aspects(&self) -> usize {
        self.aspects.len()
    }

    pub fn towers(&self, side: Side) -> &[Mlp] {
        match side {
            Side::User => &self.user_towers,
            Side::Item => &self.item_towers,
        }
    }

    pub fn attention(&self, side: Side) -> Option<&Mlp> {
        match side {
            Side::User => self.user_attention.as_ref(),
            Side::Item => self.item_attention.as_ref(),
        }
    }

    pub fn n_params(&self) -> usize {
        self.user_towers
            .iter()
            .chain(&self.item_towers)
            .chain(&self.user_attention)
            .chain(&self.item_attention)
            .map(Mlp::n_params)
            .sum()
    }

    /// Parameter buffers: user towers, item towers, then attention networks.
    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for m in self
            .user_towers
            .iter_mut()
            .chain(self.item_towers.iter_mut())
        {
            out.extend(m.params_mut());
        }
        for m in self
            .user_attention
            .iter_mut()
            .chain(self.item_attention.iter_mut())
        {
            out.extend(m.params_mut());
        }
        out
    }

    pub fn params(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for m in self.user_towers.iter().chain(&self.item_towers) {
            out.extend(m.params());
        }
        for m in self.user_attention.iter().chain(&self.item_attention) {
            out.extend(m.params());
        }
        out
    }

    fn check_features(&self, features: &FeatureSet) -> Result<()> {
        for side in [Side::User, Side::Item] {
            let sims = features.side(side);
            if sims.len() != self.aspects.len() {
                return Err(Error::UnknownAspect(format!(
                    "{} {side}-side similarity matrices for {} aspects",
                    sims.len(),
                    self.aspects.len()
                )));
            }
            for ((sim, label), tower) in sims.iter().zip(&self.aspects).zip(self.towers(side)) {
                if &sim.aspect != label {
                    return Err(Error::UnknownAspect(format!(
                        "expected {side}-side matrix for `{label}`, found `{}`",
                        sim.aspect
                    )));
                }
                if sim.n() != tower.input_dim() {
                    return Err(Error::DimensionMismatch(format!(
                        "{side}-side `{label}` similarity has {} nodes, tower expects {}",
                        sim.n(),
                        tower.input_dim()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Runs every tower of `side` over `nodes` and fuses the results.
    pub fn forward_side(
        &self,
        features: &FeatureSet,
        side: Side,
        nodes: &[usize],
    ) -> Result<SideForward> {
        self.check_features(features)?;
        let sims = features.side(side);
        let mut towers = Vec::with_capacity(sims.len());
        for (sim, tower) in sims.iter().zip(self.towers(side)) {
            let mut input = DenseMatrix::zeros(nodes.len(), sim.n());
            for (j, &node) in nodes.iter().enumerate() {
                sim.write_row(node, input.row_mut(j))?;
            }
            towers.push(tower.forward_batch(input)?);
        }
        let d = self.dims.latent_dim;
        let l = towers.len();
        let n = nodes.len();
        let mut fused = DenseMatrix::zeros(n, d);
        let factors_of =
            |j: usize| -> Vec<&[f64]> { towers.iter().map(|c| c.output().row(j)).collect() };

        let fusion = match (&self.fusion, self.attention(side)) {
            (FusionMode::Single(_), _) => {
                fused = towers[0].output().clone();
                FusionCache::Identity
            }
            (FusionMode::Average, _) => {
                for j in 0..n {
                    fused
                        .row_mut(j)
                        .copy_from_slice(&fusion::average_fuse(&factors_of(j))?);
                }
                FusionCache::Average
            }
            (FusionMode::SelfAttention, _) => {
                let mut coeffs = Vec::with_capacity(n);
                for j in 0..n {
                    let fs = factors_of(j);
                    let (c, _) = fusion::self_attention_coefficients(&fs);
                    fused
                        .row_mut(j)
                        .copy_from_slice(&fusion::self_attention_combine(&fs, &c, d));
                    coeffs.push(c);
                }
                FusionCache::SelfAttention { coeffs }
            }
            (FusionMode::Attention, Some(net)) => {
                let mut stacked = DenseMatrix::zeros(n * l, d);
                for j in 0..n {
                    for (k, f) in factors_of(j).into_iter().enumerate() {
                        stacked.row_mut(j * l + k).copy_from_slice(f);
                    }
                }
                let net_cache = net.forward_batch(stacked)?;
                let mut weights = DenseMatrix::zeros(n, l);
                for j in 0..n {
                    let scores = &net_cache.output().as_slice()[j * l..(j + 1) * l];
                    let (f, w) = fusion::attention_combine(&factors_of(j), scores);
                    fused.row_mut(j).copy_from_slice(&f);
                    weights.row_mut(j).copy_from_slice(&w);
                }
                FusionCache::Attention {
                    net: net_cache,
                    weights,
                }
            }
            (FusionMode::Attention, None) => {
                return Err(Error::Config(format!(
                    "attention fusion without a {side}-side network"
                )))
            }
        };
        Ok(SideForward {
            nodes: nodes.to_vec(),
            towers,
            fusion,
            fused,
        })
    }

    /// Backpropagates `grad_fused` (one row per node of `fwd`) into tower and
    /// attention-network gradients.
    pub fn backward_side(
        &self,
        side: Side,
        fwd: &SideForward,
        grad_fused: &DenseMatrix,
    ) -> Result<(Vec<MlpGrads>, Option<MlpGrads>)> {
        let n = fwd.nodes.len();
        let l = fwd.towers.len();
        let d = self.dims.latent_dim;
        if grad_fused.shape() != (n, d) {
            return Err(Error::DimensionMismatch(format!(
                "fused gradient shape {:?}, expected ({n}, {d})",
                grad_fused.shape()
            )));
        }
        let mut grad_factors: Vec<DenseMatrix> = (0..l).map(|_| DenseMatrix::zeros(n, d)).collect();
        let mut attention_grads = None;
        match &fwd.fusion {
            FusionCache::Identity => grad_factors[0] = grad_fused.clone(),
            FusionCache::Average => {
                for g in &mut grad_factors {
                    axpy(1.0 / l as f64, grad_fused.as_slice(), g.as_mut_slice());
                }
            }
            FusionCache::SelfAttention { coeffs } => {
                for j in 0..n {
                    let gs = fusion::self_attention_backward(
                        &fwd.factors(j),
                        &coeffs[j],
                        grad_fused.row(j),
                    );
                    for (k, g) in gs.iter().enumerate() {
                        grad_factors[k].row_mut(j).copy_from_slice(g);
                    }
                }
            }
            FusionCache::Attention { net, weights } => {
                let mut grad_scores = DenseMatrix::zeros(n * l, 1);
                for j in 0..n {
                    let (direct, gs) = fusion::attention_combine_backward(
                        &fwd.factors(j),
                        weights.row(j),
                        grad_fused.row(j),
                    );
                    for (k, g) in direct.iter().enumerate() {
                        grad_factors[k].row_mut(j).copy_from_slice(g);
                        grad_scores[(j * l + k, 0)] = gs[k];
                    }
                }
                let attention = self
                    .attention(side)
                    .ok_or_else(|| Error::Config("missing attention network".into()))?;
                let g = attention.backward_batch(net, &grad_scores, true)?;
                let through = g.input.as_ref().expect("input gradient requested");
                for j in 0..n {
                    for k in 0..l {
                        axpy(1.0, through.row(j * l + k), grad_factors[k].row_mut(j));
                    }
                }
                attention_grads = Some(g);
            }
        }
        let mut tower_grads = Vec::with_capacity(l);
        for ((tower, cache), g) in self.towers(side).iter().zip(&fwd.towers).zip(&grad_factors) {
            tower_grads.push(tower.backward_batch(cache, g, false)?);
        }
        Ok((tower_grads, attention_grads))
    }

    /// The `L` aspect-level factors of one node, in aspect order.
    pub fn aspect_factors(
        &self,
        features: &FeatureSet,
        side: Side,
        index: usize,
    ) -> Result<Vec<Vec<f64>>> {
        let fwd = self.forward_side(features, side, &[index])?;
        Ok(fwd.factors(0).into_iter().map(<[f64]>::to_vec).collect())
    }

    pub fn fused_factor(
        &self,
        features: &FeatureSet,
        side: Side,
        index: usize,
    ) -> Result<Vec<f64>> {
        Ok(self
            .forward_side(features, side, &[index])?
            .fused
            .row(0)
            .to_vec())
    }

    /// `sigmoid(<u, v>)` of the fused factors, clamped away from 0 and 1.
    pub fn predict(&self, features: &FeatureSet, user: usize, item: usize) -> Result<f64> {
        let u = self.fused_factor(features, Side::User, user)?;
        let v = self.fused_factor(features, Side::Item, item)?;
        Ok(clamp_prob(sigmoid(dot(&u, &v))))
    }

    /// Forward passes over every node of `side` in chunks; returns the fused
    /// factors and the per-aspect fusion weights (one row per node each).
    pub fn embed_all(
        &self,
        features: &FeatureSet,
        side: Side,
        chunk: usize,
    ) -> Result<(DenseMatrix, DenseMatrix)> {
        let n = features.n_nodes(side);
        let l = self.n_aspects();
        let d = self.dims.latent_dim;
        let mut fused = DenseMatrix::zeros(n, d);
        let mut weights = DenseMatrix::zeros(n, l);
        let nodes: Vec<usize> = (0..n).collect();
        for block in nodes.chunks(chunk.max(1)) {
            let fwd = self.forward_side(features, side, block)?;
            for (j, &node) in block.iter().enumerate() {
                fused.row_mut(node).copy_from_slice(fwd.fused.row(j));
                weights
                    .row_mut(node)
                    .copy_from_slice(&fwd.aspect_weights(j));
            }
        }
        Ok((fused, weights))
    }

    /// Per-aspect factors of every node of `side` for one aspect.
    pub fn aspect_factors_all(
        &self,
        features: &FeatureSet,
        side: Side,
        aspect: &str,
        chunk: usize,
    ) -> Result<DenseMatrix> {
        let k = self
            .aspects
            .iter()
            .position(|a| a == aspect)
            .ok_or_else(|| Error::UnknownAspect(aspect.to_string()))?;
        let n = features.n_nodes(side);
        let mut out = DenseMatrix::zeros(n, self.dims.latent_dim);
        let nodes: Vec<usize> = (0..n).collect();
        for block in nodes.chunks(chunk.max(1)) {
            let fwd = self.forward_side(features, side, block)?;
            for (j, &node) in block.iter().enumerate() {
                out.row_mut(node).copy_from_slice(fwd.factors(j)[k]);
            }
        }
        Ok(out)
    }

    /// Mean BCE over `batch` and the gradients of every parameter.
    pub fn loss_and_grads(
        &self,
        features: &FeatureSet,
        batch: &[Example],
    ) -> Result<(f64, ModelGrads)> {
        let mut users: Vec<usize> = batch.iter().map(|e| e.user).collect();
        users.sort_unstable();
        users.dedup();
        let mut items: Vec<usize> = batch.iter().map(|e| e.item).collect();
        items.sort_unstable();
        items.dedup();

        let uf = self.forward_side(features, Side::User, &users)?;
        let vf = self.forward_side(features, Side::Item, &items)?;
        let pos = |nodes: &[usize], x: usize| nodes.binary_search(&x).expect("node in batch");

        let mut probs = Vec::with_capacity(batch.len());
        let mut labels = Vec::with_capacity(batch.len());
        let mut slots = Vec::with_capacity(batch.len());
        for e in batch {
            let (ju, ji) = (pos(&users, e.user), pos(&items, e.item));
            probs.push(sigmoid(dot(uf.fused.row(ju), vf.fused.row(ji))));
            labels.push(e.label);
            slots.push((ju, ji));
        }
        let (loss, grad_logits) = crate::nn::bce_loss(&probs, &labels)?;

        let d = self.dims.latent_dim;
        let mut grad_u = DenseMatrix::zeros(users.len(), d);
        let mut grad_v = DenseMatrix::zeros(items.len(), d);
        for (&(ju, ji), &g) in slots.iter().zip(&grad_logits) {
            axpy(g, vf.fused.row(ji), grad_u.row_mut(ju));
            axpy(g, uf.fused.row(ju), grad_v.row_mut(ji));
        }
        let (user_towers, user_attention) = self.backward_side(Side::User, &uf, &grad_u)?;
        let (item_towers, item_attention) = self.backward_side(Side::Item, &vf, &grad_v)?;
        Ok((
            loss,
            ModelGrads {
                user_towers,
                item_towers,
                user_attention,
                item_attention,
            },
        ))
    }
}
