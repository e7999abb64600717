//! Per-node convolutional text classifiers and top-down inference.
//!
//! Every internal node of the hierarchy owns a small text CNN over its
//! children: embedding lookup → 1-D convolutions per filter width → ReLU →
//! max-over-time pooling → concatenation → dense → softmax. Training
//! minimizes the KL divergence from the pseudo documents' soft labels to
//! the predicted distribution; the embedding layer starts from the network
//! embedding's word vectors and is fine-tuned. Inference walks the
//! hierarchy greedily from the root, multiplying chosen probabilities into
//! a path confidence.
//!
//! The forward/backward math is written once, generic over the float type:
//! training runs in 32-bit while [`gradient_check`] exercises the same code
//! in 64-bit against central finite differences.

use std::collections::BTreeMap;
use std::ops::AddAssign;
use std::path::Path;

use num_traits::Float;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::LabelHierarchy;
use crate::error::{Error, Result};
use crate::pseudogen::{PseudoDocument, WordVectors};

/// Format version written into model containers.
pub const MODEL_VERSION: u32 = 1;

/// Architecture and optimization settings for one local classifier.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CnnConfig {
    /// Convolution widths; one bank of filters per width.
    pub filter_widths: Vec<usize>,
    /// Filters per width.
    pub filters_per_width: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for CnnConfig {
    fn default() -> Self {
        CnnConfig {
            filter_widths: vec![2, 3, 4, 5],
            filters_per_width: 20,
            epochs: 5,
            batch_size: 64,
            learning_rate: 1e-3,
            seed: 42,
        }
    }
}

impl CnnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.filter_widths.is_empty() || self.filter_widths.iter().any(|&w| w == 0) {
            return Err(Error::Validation(
                "filter widths must be a non-empty list of positive sizes".into(),
            ));
        }
        if self.filters_per_width == 0 || self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Validation(
                "filters_per_width, epochs and batch_size must be positive".into(),
            ));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Validation("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

/// Shape metadata shared by the generic kernels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct Arch {
    vocab_len: usize,
    dim: usize,
    widths: Vec<usize>,
    filters_per_width: usize,
    m: usize,
}

impl Arch {
    fn total_filters(&self) -> usize {
        self.widths.len() * self.filters_per_width
    }

    fn max_width(&self) -> usize {
        *self.widths.iter().max().expect("non-empty widths")
    }

    /// Reserved pad token: one row past the vocabulary.
    fn pad_id(&self) -> usize {
        self.vocab_len
    }
}

/// All trainable tensors at one precision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Tensors<T> {
    /// (vocab_len + 1) × dim; the final row is the pad token, pinned to 0.
    embedding: Vec<T>,
    /// Per width: filters_per_width × width × dim, filter-major.
    conv_w: Vec<Vec<T>>,
    /// Per width: filters_per_width biases.
    conv_b: Vec<Vec<T>>,
    /// m × total_filters, output-major.
    dense_w: Vec<T>,
    dense_b: Vec<T>,
}

impl<T: Float> Tensors<T> {
    fn zeros_like(arch: &Arch) -> Self {
        Tensors {
            embedding: vec![T::zero(); (arch.vocab_len + 1) * arch.dim],
            conv_w: arch
                .widths
                .iter()
                .map(|&w| vec![T::zero(); arch.filters_per_width * w * arch.dim])
                .collect(),
            conv_b: arch
                .widths
                .iter()
                .map(|_| vec![T::zero(); arch.filters_per_width])
                .collect(),
            dense_w: vec![T::zero(); arch.m * arch.total_filters()],
            dense_b: vec![T::zero(); arch.m],
        }
    }

    fn fill(&mut self, value: T) {
        self.embedding.fill(value);
        for w in &mut self.conv_w {
            w.fill(value);
        }
        for b in &mut self.conv_b {
            b.fill(value);
        }
        self.dense_w.fill(value);
        self.dense_b.fill(value);
    }
}

impl Tensors<f32> {
    fn widen(&self) -> Tensors<f64> {
        Tensors {
            embedding: self.embedding.iter().map(|&x| x as f64).collect(),
            conv_w: self
                .conv_w
                .iter()
                .map(|w| w.iter().map(|&x| x as f64).collect())
                .collect(),
            conv_b: self
                .conv_b
                .iter()
                .map(|b| b.iter().map(|&x| x as f64).collect())
                .collect(),
            dense_w: self.dense_w.iter().map(|&x| x as f64).collect(),
            dense_b: self.dense_b.iter().map(|&x| x as f64).collect(),
        }
    }
}

/// Cached activations from one forward pass, kept for the backward pass.
struct ForwardPass<T> {
    ids: Vec<usize>,
    /// Post-ReLU pooled feature per global filter index.
    pooled: Vec<T>,
    /// First position attaining the pre-ReLU maximum, per global filter.
    argmax_pos: Vec<usize>,
    /// The pre-ReLU maximum itself (gates the ReLU in backward).
    max_score: Vec<T>,
    probs: Vec<T>,
}

/// Drops out-of-vocabulary ids and pads with the reserved pad token up to
/// the largest filter width.
fn prepare_ids(tokens: &[u32], arch: &Arch) -> Vec<usize> {
    let mut ids: Vec<usize> = tokens
        .iter()
        .filter(|&&t| (t as usize) < arch.vocab_len)
        .map(|&t| t as usize)
        .collect();
    while ids.len() < arch.max_width() {
        ids.push(arch.pad_id());
    }
    ids
}

fn forward<T: Float + AddAssign>(params: &Tensors<T>, arch: &Arch, ids: &[usize]) -> ForwardPass<T> {
    let d = arch.dim;
    let nf = arch.filters_per_width;
    let total = arch.total_filters();
    let mut pooled = vec![T::zero(); total];
    let mut argmax_pos = vec![0usize; total];
    let mut max_score = vec![T::zero(); total];

    for (wi, &w) in arch.widths.iter().enumerate() {
        let bank_w = &params.conv_w[wi];
        let bank_b = &params.conv_b[wi];
        for f in 0..nf {
            let filter = &bank_w[f * w * d..(f + 1) * w * d];
            let mut best = T::neg_infinity();
            let mut best_pos = 0usize;
            for pos in 0..=(ids.len() - w) {
                let mut s = bank_b[f];
                for i in 0..w {
                    let row = &params.embedding[ids[pos + i] * d..(ids[pos + i] + 1) * d];
                    let wrow = &filter[i * d..(i + 1) * d];
                    for j in 0..d {
                        s += wrow[j] * row[j];
                    }
                }
                if s > best {
                    best = s;
                    best_pos = pos;
                }
            }
            let g = wi * nf + f;
            max_score[g] = best;
            argmax_pos[g] = best_pos;
            pooled[g] = best.max(T::zero());
        }
    }

    let mut logits = vec![T::zero(); arch.m];
    for (j, logit) in logits.iter_mut().enumerate() {
        let mut z = params.dense_b[j];
        let row = &params.dense_w[j * total..(j + 1) * total];
        for f in 0..total {
            z += row[f] * pooled[f];
        }
        *logit = z;
    }
    let zmax = logits.iter().cloned().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&z| (z - zmax).exp()).collect();
    let zsum = exps.iter().fold(T::zero(), |a, &b| a + b);
    let probs = exps.iter().map(|&e| e / zsum).collect();

    ForwardPass {
        ids: ids.to_vec(),
        pooled,
        argmax_pos,
        max_score,
        probs,
    }
}

/// KL(label ‖ probs); zero-probability label entries contribute nothing.
pub fn kl_loss<T: Float>(label: &[f64], probs: &[T]) -> f64 {
    label
        .iter()
        .zip(probs)
        .map(|(&l, &p)| {
            if l > 0.0 {
                l * (l.ln() - p.to_f64().unwrap().ln())
            } else {
                0.0
            }
        })
        .sum()
}

/// Accumulates gradients of KL(label ‖ probs) into `grads`.
fn backward<T: Float + AddAssign>(
    params: &Tensors<T>,
    arch: &Arch,
    fwd: &ForwardPass<T>,
    label: &[f64],
    grads: &mut Tensors<T>,
) {
    let d = arch.dim;
    let nf = arch.filters_per_width;
    let total = arch.total_filters();

    // d loss / d logit_j = p_j − l_j.
    let dz: Vec<T> = fwd
        .probs
        .iter()
        .zip(label)
        .map(|(&p, &l)| p - T::from(l).unwrap())
        .collect();

    let mut d_pooled = vec![T::zero(); total];
    for j in 0..arch.m {
        grads.dense_b[j] += dz[j];
        let wrow = &params.dense_w[j * total..(j + 1) * total];
        let grow = &mut grads.dense_w[j * total..(j + 1) * total];
        for f in 0..total {
            grow[f] += dz[j] * fwd.pooled[f];
            d_pooled[f] += dz[j] * wrow[f];
        }
    }

    for (wi, &w) in arch.widths.iter().enumerate() {
        for f in 0..nf {
            let g = wi * nf + f;
            if fwd.max_score[g] <= T::zero() {
                continue; // ReLU gate closed at the pooled maximum.
            }
            let gp = d_pooled[g];
            if gp == T::zero() {
                continue;
            }
            grads.conv_b[wi][f] += gp;
            let pos = fwd.argmax_pos[g];
            let filter = &params.conv_w[wi][f * w * d..(f + 1) * w * d];
            let gfilter = &mut grads.conv_w[wi][f * w * d..(f + 1) * w * d];
            for i in 0..w {
                let id = fwd.ids[pos + i];
                let row = &params.embedding[id * d..(id + 1) * d];
                for j in 0..d {
                    gfilter[i * d + j] += gp * row[j];
                    grads.embedding[id * d + j] += gp * filter[i * d + j];
                }
            }
        }
    }
}

/// Adam state for the f32 training path.
struct Adam {
    m: Tensors<f32>,
    v: Tensors<f32>,
    t: i32,
    lr: f32,
}

const ADAM_B1: f32 = 0.9;
const ADAM_B2: f32 = 0.999;
const ADAM_EPS: f32 = 1e-8;

impl Adam {
    fn new(arch: &Arch, lr: f32) -> Self {
        Adam {
            m: Tensors::zeros_like(arch),
            v: Tensors::zeros_like(arch),
            t: 0,
            lr,
        }
    }

    fn update_slice(
        params: &mut [f32],
        grads: &[f32],
        m: &mut [f32],
        v: &mut [f32],
        lr_t: f32,
        skip: Option<std::ops::Range<usize>>,
    ) {
        for i in 0..params.len() {
            if let Some(r) = &skip {
                if r.contains(&i) {
                    continue;
                }
            }
            let g = grads[i];
            m[i] = ADAM_B1 * m[i] + (1.0 - ADAM_B1) * g;
            v[i] = ADAM_B2 * v[i] + (1.0 - ADAM_B2) * g * g;
            params[i] -= lr_t * m[i] / (v[i].sqrt() + ADAM_EPS);
        }
    }

    fn step(&mut self, params: &mut Tensors<f32>, grads: &Tensors<f32>, arch: &Arch) {
        self.t += 1;
        // Fold both bias corrections into the step size.
        let lr_t = self.lr * (1.0 - ADAM_B2.powi(self.t)).sqrt() / (1.0 - ADAM_B1.powi(self.t));
        let pad = arch.pad_id() * arch.dim..(arch.pad_id() + 1) * arch.dim;
        Adam::update_slice(
            &mut params.embedding,
            &grads.embedding,
            &mut self.m.embedding,
            &mut self.v.embedding,
            lr_t,
            Some(pad),
        );
        for wi in 0..arch.widths.len() {
            Adam::update_slice(
                &mut params.conv_w[wi],
                &grads.conv_w[wi],
                &mut self.m.conv_w[wi],
                &mut self.v.conv_w[wi],
                lr_t,
                None,
            );
            Adam::update_slice(
                &mut params.conv_b[wi],
                &grads.conv_b[wi],
                &mut self.m.conv_b[wi],
                &mut self.v.conv_b[wi],
                lr_t,
                None,
            );
        }
        Adam::update_slice(
            &mut params.dense_w,
            &grads.dense_w,
            &mut self.m.dense_w,
            &mut self.v.dense_w,
            lr_t,
            None,
        );
        Adam::update_slice(
            &mut params.dense_b,
            &grads.dense_b,
            &mut self.m.dense_b,
            &mut self.v.dense_b,
            lr_t,
            None,
        );
    }
}

/// Classifier over one internal node's children.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LocalClassifier {
    pub node: String,
    /// Child ids aligned with output indices.
    pub child_ids: Vec<String>,
    arch: Arch,
    params: Tensors<f32>,
    pub trained: bool,
    /// Mean training-set KL at initialization and after each epoch.
    pub loss_trace: Vec<f64>,
}

impl LocalClassifier {
    /// Untrained model with embeddings copied from the word vectors and
    /// small random filter/dense weights.
    pub fn init(
        node: &str,
        child_ids: &[String],
        words: &WordVectors,
        config: &CnnConfig,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        config.validate()?;
        if child_ids.is_empty() {
            return Err(Error::Validation(format!(
                "internal node {node:?} has no children to classify"
            )));
        }
        let arch = Arch {
            vocab_len: words.len(),
            dim: words.dim,
            widths: config.filter_widths.clone(),
            filters_per_width: config.filters_per_width,
            m: child_ids.len(),
        };
        let mut params = Tensors::zeros_like(&arch);
        for id in 0..arch.vocab_len {
            let row = words.row(id as u32);
            for j in 0..arch.dim {
                params.embedding[id * arch.dim + j] = row[j] as f32;
            }
        }
        for (wi, &w) in arch.widths.iter().enumerate() {
            let a = (1.0 / (w * arch.dim) as f32).sqrt();
            for x in params.conv_w[wi].iter_mut() {
                *x = rng.gen_range(-a..a);
            }
        }
        let a = (1.0 / arch.total_filters() as f32).sqrt();
        for x in params.dense_w.iter_mut() {
            *x = rng.gen_range(-a..a);
        }
        Ok(LocalClassifier {
            node: node.to_string(),
            child_ids: child_ids.to_vec(),
            arch,
            params,
            trained: false,
            loss_trace: Vec::new(),
        })
    }

    pub fn num_children(&self) -> usize {
        self.arch.m
    }

    /// Forward pass regardless of the trained flag (training internals).
    fn probabilities(&self, tokens: &[u32]) -> Vec<f64> {
        let ids = prepare_ids(tokens, &self.arch);
        forward(&self.params, &self.arch, &ids)
            .probs
            .iter()
            .map(|&p| p as f64)
            .collect()
    }

    /// Probability vector over the node's children. Unknown token ids are
    /// skipped; short or empty documents are padded.
    pub fn predict(&self, tokens: &[u32]) -> Result<Vec<f64>> {
        if !self.trained {
            return Err(Error::Untrained(self.node.clone()));
        }
        Ok(self.probabilities(tokens))
    }

    fn mean_loss(&self, docs: &[&PseudoDocument]) -> f64 {
        docs.iter()
            .map(|doc| {
                let ids = prepare_ids(&doc.tokens, &self.arch);
                let fwd = forward(&self.params, &self.arch, &ids);
                kl_loss(&doc.label, &fwd.probs)
            })
            .sum::<f64>()
            / docs.len() as f64
    }
}

/// Trains one local classifier on its children's pseudo documents with
/// mini-batch Adam on the mean KL loss.
pub fn train_local(
    node: &str,
    child_ids: &[String],
    docs: &[PseudoDocument],
    words: &WordVectors,
    config: &CnnConfig,
) -> Result<LocalClassifier> {
    let m = child_ids.len();
    if docs.is_empty() {
        return Err(Error::Validation(format!(
            "no pseudo documents for node {node:?}"
        )));
    }
    let mut per_child = vec![0usize; m];
    for doc in docs {
        if doc.class != node {
            return Err(Error::Validation(format!(
                "pseudo document for class {:?} passed to node {node:?}",
                doc.class
            )));
        }
        if doc.child_index >= m || doc.label.len() != m {
            return Err(Error::Validation(format!(
                "pseudo document shaped for {} children, node {node:?} has {m}",
                doc.label.len()
            )));
        }
        per_child[doc.child_index] += 1;
    }
    if let Some(empty) = per_child.iter().position(|&c| c == 0) {
        return Err(Error::Validation(format!(
            "child {:?} of node {node:?} has no pseudo documents",
            child_ids[empty]
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut clf = LocalClassifier::init(node, child_ids, words, config, &mut rng)?;
    let all: Vec<&PseudoDocument> = docs.iter().collect();
    clf.loss_trace.push(clf.mean_loss(&all));

    let mut adam = Adam::new(&clf.arch, config.learning_rate as f32);
    let mut grads: Tensors<f32> = Tensors::zeros_like(&clf.arch);
    let mut order: Vec<usize> = (0..docs.len()).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for (bi, batch) in order.chunks(config.batch_size).enumerate() {
            grads.fill(0.0);
            let mut batch_loss = 0.0;
            for &di in batch {
                let doc = &docs[di];
                let ids = prepare_ids(&doc.tokens, &clf.arch);
                let fwd = forward(&clf.params, &clf.arch, &ids);
                batch_loss += kl_loss(&doc.label, &fwd.probs);
                backward(&clf.params, &clf.arch, &fwd, &doc.label, &mut grads);
            }
            batch_loss /= batch.len() as f64;
            if !batch_loss.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite loss {batch_loss} at node {node:?}, epoch {epoch}, batch {bi}; \
                     try a smaller learning rate"
                )));
            }
            let scale = 1.0 / batch.len() as f32;
            grads.embedding.iter_mut().for_each(|g| *g *= scale);
            grads.conv_w.iter_mut().flatten().for_each(|g| *g *= scale);
            grads.conv_b.iter_mut().flatten().for_each(|g| *g *= scale);
            grads.dense_w.iter_mut().for_each(|g| *g *= scale);
            grads.dense_b.iter_mut().for_each(|g| *g *= scale);
            adam.step(&mut clf.params, &grads, &clf.arch);
        }
        clf.loss_trace.push(clf.mean_loss(&all));
    }
    let final_loss = *clf.loss_trace.last().expect("loss trace");
    if !final_loss.is_finite() {
        return Err(Error::Numerical(format!(
            "non-finite training loss at node {node:?}; try a smaller learning rate"
        )));
    }
    clf.trained = true;
    Ok(clf)
}

/// Maximum relative error between analytic gradients and 64-bit central
/// finite differences (h = 1e-5) over every trainable parameter of the
/// KL loss on one document. The pad embedding row is not trainable and is
/// skipped.
pub fn gradient_check(clf: &LocalClassifier, tokens: &[u32], label: &[f64]) -> f64 {
    let arch = clf.arch.clone();
    let mut params = clf.params.widen();
    let ids = prepare_ids(tokens, &arch);

    let mut analytic = Tensors::<f64>::zeros_like(&arch);
    let fwd = forward(&params, &arch, &ids);
    backward(&params, &arch, &fwd, label, &mut analytic);

    fn slot(p: &mut Tensors<f64>, tensor: usize, wi: usize, i: usize) -> &mut f64 {
        match tensor {
            0 => &mut p.embedding[i],
            1 => &mut p.conv_w[wi][i],
            2 => &mut p.conv_b[wi][i],
            3 => &mut p.dense_w[i],
            _ => &mut p.dense_b[i],
        }
    }

    let h = 1e-5;
    let mut worst = 0.0f64;
    let mut check = |params: &mut Tensors<f64>, tensor: usize, wi: usize, i: usize, a: f64| {
        let read = |p: &Tensors<f64>| -> f64 {
            let fwd = forward(p, &arch, &ids);
            kl_loss(label, &fwd.probs)
        };
        let orig = *slot(params, tensor, wi, i);
        *slot(params, tensor, wi, i) = orig + h;
        let up = read(params);
        *slot(params, tensor, wi, i) = orig - h;
        let down = read(params);
        *slot(params, tensor, wi, i) = orig;
        let fd = (up - down) / (2.0 * h);
        let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
        if rel > worst {
            worst = rel;
        }
    };

    let pad_start = arch.pad_id() * arch.dim;
    for i in 0..analytic.embedding.len() {
        if i >= pad_start {
            continue;
        }
        check(&mut params, 0, 0, i, analytic.embedding[i]);
    }
    for wi in 0..arch.widths.len() {
        for i in 0..analytic.conv_w[wi].len() {
            check(&mut params, 1, wi, i, analytic.conv_w[wi][i]);
        }
        for i in 0..analytic.conv_b[wi].len() {
            check(&mut params, 2, wi, i, analytic.conv_b[wi][i]);
        }
    }
    for i in 0..analytic.dense_w.len() {
        check(&mut params, 3, 0, i, analytic.dense_w[i]);
    }
    for i in 0..analytic.dense_b.len() {
        check(&mut params, 4, 0, i, analytic.dense_b[i]);
    }
    worst
}

/// One step of a predicted path: a label and the cumulative confidence
/// down to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathStep {
    pub label: String,
    pub confidence: f64,
}

/// One classifier per internal node plus the hierarchy they live in.
#[derive(Debug, Clone)]
pub struct HierarchicalModel {
    pub hierarchy: LabelHierarchy,
    pub classifiers: BTreeMap<String, LocalClassifier>,
}

/// Per-node RNG stream so adding a node never shifts another node's
/// initialization.
fn node_seed(seed: u64, node: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(node.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 length"))
}

impl HierarchicalModel {
    /// Checks the exactly-one-classifier-per-internal-node invariant.
    pub fn validate(&self) -> Result<()> {
        for node in self.hierarchy.internal_nodes() {
            let clf = self
                .classifiers
                .get(&node)
                .ok_or_else(|| Error::Validation(format!("no classifier for internal node {node:?}")))?;
            let children = &self.hierarchy.node(&node)?.children;
            if &clf.child_ids != children {
                return Err(Error::Validation(format!(
                    "classifier for {node:?} covers children {:?}, hierarchy has {:?}",
                    clf.child_ids, children
                )));
            }
        }
        for node in self.classifiers.keys() {
            if !self.hierarchy.contains(node) || self.hierarchy.is_leaf(node) {
                return Err(Error::Validation(format!(
                    "classifier for {node:?} which is not an internal node"
                )));
            }
        }
        Ok(())
    }

    /// Trains every internal node's classifier. `docs_by_node` must hold
    /// that node's pseudo documents keyed by node id; each node draws its
    /// own seed from the base seed.
    pub fn train_all(
        hierarchy: &LabelHierarchy,
        docs_by_node: &BTreeMap<String, Vec<PseudoDocument>>,
        words: &WordVectors,
        config: &CnnConfig,
    ) -> Result<Self> {
        let mut classifiers = BTreeMap::new();
        for node in hierarchy.internal_nodes() {
            let docs = docs_by_node.get(&node).ok_or_else(|| {
                Error::Validation(format!("no pseudo documents for internal node {node:?}"))
            })?;
            let children = hierarchy.node(&node)?.children.clone();
            let node_config = CnnConfig {
                seed: node_seed(config.seed, &node),
                ..config.clone()
            };
            log::info!("training classifier for {node:?} ({} documents)", docs.len());
            let clf = train_local(&node, &children, docs, words, &node_config)?;
            classifiers.insert(node, clf);
        }
        let model = HierarchicalModel {
            hierarchy: hierarchy.clone(),
            classifiers,
        };
        model.validate()?;
        Ok(model)
    }

    /// Greedy top-down inference: at each internal node take the argmax
    /// child (ties to the earlier child) and multiply its probability into
    /// the confidence; descends all the way to a leaf.
    pub fn predict_path(&self, tokens: &[u32]) -> Result<Vec<PathStep>> {
        self.descend(tokens, None)
    }

    /// Like [`predict_path`](Self::predict_path) but stops descending once
    /// the chosen child's local probability falls below `threshold`.
    pub fn predict_path_with_stop(&self, tokens: &[u32], threshold: f64) -> Result<Vec<PathStep>> {
        self.descend(tokens, Some(threshold))
    }

    fn descend(&self, tokens: &[u32], threshold: Option<f64>) -> Result<Vec<PathStep>> {
        let mut node = self.hierarchy.root().to_string();
        let mut confidence = 1.0;
        let mut path = Vec::new();
        while !self.hierarchy.is_leaf(&node) {
            let clf = self
                .classifiers
                .get(&node)
                .ok_or_else(|| Error::Validation(format!("no classifier for internal node {node:?}")))?;
            let probs = clf.predict(tokens)?;
            let (best, &p) = probs
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap().then(b.0.cmp(&a.0)))
                .expect("non-empty children");
            confidence *= p;
            node = clf.child_ids[best].clone();
            path.push(PathStep {
                label: node.clone(),
                confidence,
            });
            if let Some(t) = threshold {
                if p < t {
                    break;
                }
            }
        }
        Ok(path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = ModelFile {
            version: MODEL_VERSION,
            hierarchy: self.hierarchy.to_json_string(),
            classifiers: self.classifiers.clone(),
        };
        let json = serde_json::to_string(&file).expect("model serialization");
        std::fs::write(path, json).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let file: ModelFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: 0,
            message: e.to_string(),
        })?;
        if file.version != MODEL_VERSION {
            return Err(Error::Validation(format!(
                "model file {} has version {}, this build reads version {MODEL_VERSION}",
                path.display(),
                file.version
            )));
        }
        let model = HierarchicalModel {
            hierarchy: LabelHierarchy::from_json_str(&file.hierarchy)?,
            classifiers: file.classifiers,
        };
        model.validate()?;
        Ok(model)
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    hierarchy: String,
    classifiers: BTreeMap<String, LocalClassifier>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pseudogen::label_distribution;

    fn random_words(n: usize, dim: usize, seed: u64) -> WordVectors {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let map: BTreeMap<String, Vec<f64>> = (0..n)
            .map(|i| {
                (
                    format!("w{i:03}"),
                    crate::topics::random_unit_vector(dim, &mut rng),
                )
            })
            .collect();
        let vocab = crate::corpus::Vocabulary::from_tokens(map.keys().cloned().collect());
        WordVectors::from_map(&map, &vocab).unwrap()
    }

    /// Two children with disjoint 20-token vocabularies.
    fn planted_docs(node: &str, per_child: usize, beta: f64, seed: u64) -> Vec<PseudoDocument> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut docs = Vec::new();
        for child in 0..2usize {
            for _ in 0..per_child {
                let len = rng.gen_range(20..40);
                let tokens = (0..len)
                    .map(|_| rng.gen_range(0..20) + 20 * child as u32)
                    .collect();
                docs.push(PseudoDocument {
                    class: node.to_string(),
                    child_index: child,
                    tokens,
                    label: label_distribution(2, beta, child),
                    doc_vector: vec![],
                });
            }
        }
        docs
    }

    fn small_config() -> CnnConfig {
        CnnConfig {
            filter_widths: vec![2, 3],
            filters_per_width: 8,
            epochs: 5,
            batch_size: 64,
            learning_rate: 1e-3,
            seed: 7,
        }
    }

    fn children(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn planted_disjoint_vocabularies_become_separable() {
        let words = random_words(40, 8, 1);
        let docs = planted_docs("node", 200, 0.2, 2);
        let clf = train_local("node", &children(&["a", "b"]), &docs, &words, &small_config())
            .unwrap();
        let correct = docs
            .iter()
            .filter(|d| {
                let p = clf.predict(&d.tokens).unwrap();
                let arg = p
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .unwrap()
                    .0;
                arg == d.child_index
            })
            .count();
        let acc = correct as f64 / docs.len() as f64;
        assert!(acc >= 0.95, "training accuracy {acc}");
        // Descent sanity: the first epoch already lowers the training loss.
        assert!(clf.loss_trace[1] < clf.loss_trace[0], "{:?}", clf.loss_trace);
        assert!(clf.loss_trace.last().unwrap() < &clf.loss_trace[0]);
    }

    #[test]
    fn training_is_deterministic() {
        let words = random_words(40, 6, 3);
        let docs = planted_docs("node", 40, 0.2, 4);
        let cfg = CnnConfig {
            epochs: 2,
            ..small_config()
        };
        let a = train_local("node", &children(&["x", "y"]), &docs, &words, &cfg).unwrap();
        let b = train_local("node", &children(&["x", "y"]), &docs, &words, &cfg).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.loss_trace, b.loss_trace);
    }

    #[test]
    fn missing_child_documents_is_an_error() {
        let words = random_words(40, 6, 3);
        let docs: Vec<PseudoDocument> = planted_docs("node", 10, 0.2, 4)
            .into_iter()
            .filter(|d| d.child_index == 0)
            .map(|mut d| {
                d.label = label_distribution(2, 0.2, 0);
                d
            })
            .collect();
        let err = train_local("node", &children(&["x", "y"]), &docs, &words, &small_config())
            .unwrap_err();
        assert!(err.to_string().contains('y'), "{err}");
    }

    #[test]
    fn absurd_learning_rate_aborts_with_diagnostics() {
        let words = random_words(40, 6, 3);
        let docs = planted_docs("node", 60, 0.2, 4);
        let cfg = CnnConfig {
            learning_rate: 1e30,
            epochs: 3,
            batch_size: 8,
            ..small_config()
        };
        let err = train_local("node", &children(&["x", "y"]), &docs, &words, &cfg).unwrap_err();
        assert!(err.to_string().contains("learning rate"), "{err}");
    }

    #[test]
    fn untrained_prediction_is_an_error() {
        let words = random_words(10, 4, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let clf = LocalClassifier::init("n", &children(&["a", "b"]), &words, &small_config(), &mut rng)
            .unwrap();
        assert!(matches!(clf.predict(&[1, 2, 3]), Err(Error::Untrained(_))));
    }

    #[test]
    fn outputs_are_probability_vectors() {
        let words = random_words(30, 6, 8);
        let docs = planted_docs("node", 20, 0.2, 9);
        let cfg = CnnConfig {
            epochs: 1,
            ..small_config()
        };
        let clf = train_local("node", &children(&["a", "b"]), &docs, &words, &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..1000 {
            let len = rng.gen_range(0..50);
            // Includes out-of-vocabulary ids, which must be skipped.
            let tokens: Vec<u32> = (0..len).map(|_| rng.gen_range(0..60)).collect();
            let p = clf.predict(&tokens).unwrap();
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            assert!(p.iter().all(|&x| x >= 0.0));
        }
        // Empty document: the pad-only forward pass, still a distribution.
        let p = clf.predict(&[]).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        // Determinism of inference.
        assert_eq!(clf.predict(&[1, 2, 3]).unwrap(), clf.predict(&[1, 2, 3]).unwrap());
    }

    #[test]
    fn width_one_filters_make_order_irrelevant() {
        let words = random_words(30, 6, 11);
        let docs = planted_docs("node", 20, 0.2, 12);
        let cfg = CnnConfig {
            filter_widths: vec![1],
            epochs: 1,
            ..small_config()
        };
        let clf = train_local("node", &children(&["a", "b"]), &docs, &words, &cfg).unwrap();
        let tokens = vec![3u32, 17, 8, 25, 1, 8];
        let mut reversed = tokens.clone();
        reversed.reverse();
        assert_eq!(clf.predict(&tokens).unwrap(), clf.predict(&reversed).unwrap());
    }

    #[test]
    fn scaling_logits_preserves_argmax() {
        let words = random_words(30, 6, 13);
        let docs = planted_docs("node", 30, 0.2, 14);
        let cfg = CnnConfig {
            epochs: 1,
            ..small_config()
        };
        let clf = train_local("node", &children(&["a", "b"]), &docs, &words, &cfg).unwrap();
        let mut scaled = clf.clone();
        for x in scaled.params.dense_w.iter_mut() {
            *x *= 3.0;
        }
        for x in scaled.params.dense_b.iter_mut() {
            *x *= 3.0;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        for _ in 0..50 {
            let tokens: Vec<u32> = (0..30).map(|_| rng.gen_range(0..30)).collect();
            let a = clf.predict(&tokens).unwrap();
            let b = scaled.predict(&tokens).unwrap();
            let arg = |v: &[f64]| {
                v.iter()
                    .enumerate()
                    .max_by(|x, y| x.1.partial_cmp(y.1).unwrap())
                    .unwrap()
                    .0
            };
            assert_eq!(arg(&a), arg(&b));
        }
    }

    #[test]
    fn kl_identity_is_zero() {
        let p = [0.3f64, 0.2, 0.5];
        assert_eq!(kl_loss(&p, &p.to_vec()), 0.0);
        assert!(kl_loss(&[1.0, 0.0], &vec![0.6f64, 0.4]) > 0.0);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let words = random_words(15, 6, 16);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let cfg = CnnConfig {
            filter_widths: vec![2, 3],
            filters_per_width: 3,
            ..small_config()
        };
        let clf =
            LocalClassifier::init("n", &children(&["a", "b"]), &words, &cfg, &mut rng).unwrap();
        let tokens: Vec<u32> = (0..10).map(|_| rng.gen_range(0..15)).collect();
        let worst = gradient_check(&clf, &tokens, &[0.7, 0.3]);
        assert!(worst < 1e-4, "max relative error {worst}");
    }

    #[test]
    fn zero_loss_has_zero_dense_bias_gradient() {
        let words = random_words(15, 6, 18);
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let mut clf =
            LocalClassifier::init("n", &children(&["a", "b"]), &words, &small_config(), &mut rng)
                .unwrap();
        // Zeroed dense layer → uniform output; a uniform label then sits at
        // the KL minimum, so every gradient vanishes.
        clf.params.dense_w.fill(0.0);
        clf.params.dense_b.fill(0.0);
        let tokens: Vec<u32> = (0..8).collect();
        let label = [0.5, 0.5];
        let params = clf.params.widen();
        let ids = prepare_ids(&tokens, &clf.arch);
        let fwd = forward(&params, &clf.arch, &ids);
        assert!(kl_loss(&label, &fwd.probs) < 1e-12);
        let mut grads = Tensors::<f64>::zeros_like(&clf.arch);
        backward(&params, &clf.arch, &fwd, &label, &mut grads);
        for g in &grads.dense_b {
            assert!(g.abs() < 1e-8);
        }
        // The check itself passes here too (property holds pointwise).
        assert!(gradient_check(&clf, &tokens, &label) < 1e-4);
    }

    fn two_level_hierarchy() -> LabelHierarchy {
        LabelHierarchy::from_json_str(
            r#"{"id":"root","name":"Root","children":[
                {"id":"a","name":"A","children":[
                    {"id":"a1","name":"A1","keyword":"alpha"},
                    {"id":"a2","name":"A2","keyword":"apex"}]},
                {"id":"b","name":"B","children":[
                    {"id":"b1","name":"B1","keyword":"bravo"},
                    {"id":"b2","name":"B2","keyword":"basil"}]}]}"#,
        )
        .unwrap()
    }

    /// Constant-output classifier: zero dense weights and log-probability
    /// biases make the forward pass emit `probs` for any input.
    fn constant_classifier(node: &str, kids: &[&str], probs: &[f64], words: &WordVectors) -> LocalClassifier {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut clf =
            LocalClassifier::init(node, &children(kids), words, &small_config(), &mut rng).unwrap();
        clf.params.dense_w.fill(0.0);
        for (b, &p) in clf.params.dense_b.iter_mut().zip(probs) {
            *b = (p as f32).ln();
        }
        clf.trained = true;
        clf
    }

    #[test]
    fn path_confidences_multiply_down_the_tree() {
        let words = random_words(10, 4, 20);
        let hierarchy = two_level_hierarchy();
        let mut classifiers = BTreeMap::new();
        classifiers.insert(
            "root".to_string(),
            constant_classifier("root", &["a", "b"], &[0.9, 0.1], &words),
        );
        classifiers.insert(
            "a".to_string(),
            constant_classifier("a", &["a1", "a2"], &[0.2, 0.8], &words),
        );
        classifiers.insert(
            "b".to_string(),
            constant_classifier("b", &["b1", "b2"], &[0.5, 0.5], &words),
        );
        let model = HierarchicalModel {
            hierarchy,
            classifiers,
        };
        model.validate().unwrap();
        let path = model.predict_path(&[1, 2, 3]).unwrap();
        assert_eq!(path.len(), 2);
        assert_eq!(path[0].label, "a");
        assert!((path[0].confidence - 0.9).abs() < 1e-5);
        assert_eq!(path[1].label, "a2");
        assert!((path[1].confidence - 0.72).abs() < 1e-5);

        // Confidence gate: 0.9 < 0.95 stops the walk after level 1.
        let stopped = model.predict_path_with_stop(&[1, 2, 3], 0.95).unwrap();
        assert_eq!(stopped.len(), 1);
        assert_eq!(stopped[0].label, "a");
    }

    #[test]
    fn exact_ties_choose_the_earlier_child() {
        let words = random_words(10, 4, 21);
        let hierarchy = LabelHierarchy::from_json_str(
            r#"{"id":"root","name":"R","children":[
                {"id":"l","name":"L","keyword":"left"},
                {"id":"r","name":"R2","keyword":"right"}]}"#,
        )
        .unwrap();
        let mut classifiers = BTreeMap::new();
        classifiers.insert(
            "root".to_string(),
            constant_classifier("root", &["l", "r"], &[0.5, 0.5], &words),
        );
        let model = HierarchicalModel {
            hierarchy,
            classifiers,
        };
        let path = model.predict_path(&[0]).unwrap();
        assert_eq!(path[0].label, "l");
    }

    #[test]
    fn model_save_load_round_trip_and_version_gate() {
        let words = random_words(40, 6, 22);
        let hierarchy = LabelHierarchy::from_json_str(
            r#"{"id":"root","name":"R","children":[
                {"id":"x","name":"X","keyword":"xray"},
                {"id":"y","name":"Y","keyword":"yam"}]}"#,
        )
        .unwrap();
        let mut docs_by_node = BTreeMap::new();
        let mut docs = planted_docs("root", 30, 0.2, 23);
        for d in docs.iter_mut() {
            d.class = "root".into();
        }
        docs_by_node.insert("root".to_string(), docs);
        let cfg = CnnConfig {
            epochs: 1,
            ..small_config()
        };
        let model = HierarchicalModel::train_all(&hierarchy, &docs_by_node, &words, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        model.save(&path).unwrap();
        let loaded = HierarchicalModel::load(&path).unwrap();
        let tokens = vec![1u32, 5, 30];
        assert_eq!(
            model.predict_path(&tokens).unwrap(),
            loaded.predict_path(&tokens).unwrap()
        );

        // A different version number is rejected.
        let text = std::fs::read_to_string(&path).unwrap();
        let tampered = text.replacen("\"version\":1", "\"version\":9", 1);
        assert_ne!(text, tampered);
        std::fs::write(&path, tampered).unwrap();
        let err = HierarchicalModel::load(&path).unwrap_err();
        assert!(err.to_string().contains("version"), "{err}");
    }

    #[test]
    fn train_all_requires_documents_for_every_internal_node() {
        let words = random_words(40, 6, 24);
        let hierarchy = two_level_hierarchy();
        let mut docs_by_node = BTreeMap::new();
        docs_by_node.insert("root".to_string(), planted_docs("root", 10, 0.2, 25));
        let err =
            HierarchicalModel::train_all(&hierarchy, &docs_by_node, &words, &small_config())
                .unwrap_err();
        assert!(err.to_string().contains("internal node"), "{err}");
    }
}
