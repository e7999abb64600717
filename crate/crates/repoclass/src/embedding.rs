//! Meta-path-guided node embeddings over the HIN.
//!
//! Training pairs are the two word endpoints of length-3 path instances
//! W–X–W (X one of doc/user/tag/name/label). Each meta-path M has a scoring
//! model f(u,v,M) = mu_M + p_M.e_u + q_M.e_v + e_u.e_v, trained with
//! logistic negative sampling: maximize log s(f(u,v)) over observed pairs
//! plus sum of log s(-f(u,v')) over k negatives drawn from the word-degree
//! distribution raised to 3/4. Deterministic single-worker mode and a
//! lock-free multi-worker mode (benign lost updates) share the same
//! parameter store of atomically accessed f64 bits. After training, word
//! vectors are normalized onto the unit sphere; all other node vectors and
//! the per-path biases are training scaffolding.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::hin::{EdgeKind, HinGraph, NodeRef};

/// Per-meta-path scoring parameters: global bias and the two endpoint
/// biases.
#[derive(Debug, Clone, PartialEq)]
pub struct PathParams {
    pub mu: f64,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

impl PathParams {
    fn zeros(dim: usize) -> Self {
        PathParams {
            mu: 0.0,
            p: vec![0.0; dim],
            q: vec![0.0; dim],
        }
    }
}

/// Dense vectors for every HIN node plus the per-meta-path parameters.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    pub dim: usize,
    /// Node labels aligned to the HIN's dense ids (words first).
    pub nodes: Vec<NodeRef>,
    pub word_count: usize,
    /// Row-major node_count x dim.
    pub vectors: Vec<f64>,
    pub paths: BTreeMap<EdgeKind, PathParams>,
}

impl EmbeddingTable {
    pub fn vector(&self, id: u32) -> &[f64] {
        let d = self.dim;
        &self.vectors[id as usize * d..(id as usize + 1) * d]
    }

    pub fn vector_mut(&mut self, id: u32) -> &mut [f64] {
        let d = self.dim;
        &mut self.vectors[id as usize * d..(id as usize + 1) * d]
    }

    /// Uniform random init in [-0.5/d, 0.5/d] with zeroed path parameters —
    /// the state training starts from.
    pub fn init(nodes: Vec<NodeRef>, word_count: usize, dim: usize, paths: &[EdgeKind], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 0.5 / dim as f64;
        let vectors = (0..nodes.len() * dim)
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        EmbeddingTable {
            dim,
            nodes,
            word_count,
            vectors,
            paths: paths.iter().map(|&k| (k, PathParams::zeros(dim))).collect(),
        }
    }

    /// Word token -> vector map (tokens are the Word nodes' keys).
    pub fn word_vectors(&self) -> BTreeMap<String, Vec<f64>> {
        (0..self.word_count as u32)
            .map(|id| (self.nodes[id as usize].key.clone(), self.vector(id).to_vec()))
            .collect()
    }
}

/// Training hyperparameters. Defaults follow skip-gram conventions.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Embedding dimension (>= 2).
    pub dim: usize,
    /// Negative samples per positive pair (>= 1).
    pub negative_samples: usize,
    /// Total SGD samples = samples_per_edge x |edges|.
    pub samples_per_edge: f64,
    /// Linear learning-rate decay from `lr_initial` to `lr_final`.
    pub lr_initial: f64,
    pub lr_final: f64,
    pub seed: u64,
    /// 1 = deterministic; > 1 = lock-free parallel (runs vary).
    pub workers: usize,
    /// Meta-paths with sampling proportions (must sum to 1).
    pub metapaths: Vec<(EdgeKind, f64)>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 50,
            negative_samples: 5,
            samples_per_edge: 200.0,
            lr_initial: 0.025,
            lr_final: 1e-4,
            seed: 42,
            workers: 1,
            metapaths: EdgeKind::ALL.iter().map(|&k| (k, 0.2)).collect(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::Config(format!("embedding dim {} < 2", self.dim)));
        }
        if self.negative_samples < 1 {
            return Err(Error::Config("need at least 1 negative sample".into()));
        }
        if self.workers < 1 {
            return Err(Error::Config("need at least 1 worker".into()));
        }
        if self.lr_initial <= 0.0 || self.lr_final <= 0.0 {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if self.metapaths.is_empty() {
            return Err(Error::Config("no meta-paths configured".into()));
        }
        let total: f64 = self.metapaths.iter().map(|(_, p)| p).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "meta-path proportions sum to {total}, expected 1"
            )));
        }
        Ok(())
    }
}

/// Per-slice held-out loss trace and which meta-paths were skipped.
#[derive(Debug, Clone, Default)]
pub struct TrainStats {
    /// Mean negative-sampling loss on a fixed held-out pair sample,
    /// recorded after each tenth of training.
    pub heldout_loss: Vec<f64>,
    pub skipped_paths: Vec<EdgeKind>,
}

/// Draw a W–X–W path instance: uniform start among words with an X
/// neighbor, then two weight-proportional hops. Returns the word endpoints.
pub fn sample_path_instance(
    graph: &HinGraph,
    metapath: EdgeKind,
    rng: &mut impl Rng,
) -> Result<(u32, u32)> {
    let (u, _, v) = sample_path_triple(graph, metapath, rng)?;
    Ok((u, v))
}

fn sample_path_triple(
    graph: &HinGraph,
    metapath: EdgeKind,
    rng: &mut impl Rng,
) -> Result<(u32, u32, u32)> {
    let starts = graph.words_with_neighbors(metapath);
    if starts.is_empty() {
        return Err(Error::NoNeighbors {
            node: "any word".into(),
            edge: metapath.name().to_string(),
        });
    }
    let u = starts[rng.gen_range(0..starts.len())];
    let x = graph.sample_neighbor_id(u, metapath, rng)?;
    let v = graph.sample_neighbor_id(x, metapath, rng)?;
    Ok((u, x, v))
}

/// f(u, v, M) = mu_M + p_M.e_u + q_M.e_v + e_u.e_v.
pub fn score(table: &EmbeddingTable, u: u32, v: u32, metapath: EdgeKind) -> Result<f64> {
    let params = table
        .paths
        .get(&metapath)
        .ok_or_else(|| Error::UnknownMetaPath(metapath.name().to_string()))?;
    let eu = table.vector(u);
    let ev = table.vector(v);
    Ok(params.mu + dot(&params.p, eu) + dot(&params.q, ev) + dot(eu, ev))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// log sigma(x), stable for large |x|.
fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Gradients of the per-pair objective, accumulated per distinct node (a
/// node appearing as both positive and negative target receives the sum).
#[derive(Debug, Clone, Default)]
pub struct PairGradients {
    pub d_mu: f64,
    pub d_p: Vec<f64>,
    pub d_q: Vec<f64>,
    /// (node id, gradient of its vector), distinct ids.
    pub d_nodes: Vec<(u32, Vec<f64>)>,
}

/// Scratch for the shared gradient core: distinct node ids, their vector
/// snapshots and gradient accumulators.
struct Scratch {
    ids: Vec<u32>,
    vecs: Vec<f64>,
    grads: Vec<f64>,
    d_mu: f64,
    d_p: Vec<f64>,
    d_q: Vec<f64>,
}

impl Scratch {
    fn new(dim: usize, k: usize) -> Self {
        let cap = (2 + k) * dim;
        Scratch {
            ids: Vec::with_capacity(2 + k),
            vecs: Vec::with_capacity(cap),
            grads: Vec::with_capacity(cap),
            d_mu: 0.0,
            d_p: vec![0.0; dim],
            d_q: vec![0.0; dim],
        }
    }

    fn slot(&mut self, id: u32, dim: usize, read: &impl Fn(u32, &mut [f64])) -> usize {
        if let Some(pos) = self.ids.iter().position(|&x| x == id) {
            return pos;
        }
        let pos = self.ids.len();
        self.ids.push(id);
        self.vecs.resize((pos + 1) * dim, 0.0);
        self.grads.resize((pos + 1) * dim, 0.0);
        read(id, &mut self.vecs[pos * dim..(pos + 1) * dim]);
        pos
    }

    fn vec(&self, pos: usize, dim: usize) -> &[f64] {
        &self.vecs[pos * dim..(pos + 1) * dim]
    }

    fn grad(&self, pos: usize, dim: usize) -> &[f64] {
        &self.grads[pos * dim..(pos + 1) * dim]
    }

    fn reset(&mut self) {
        self.ids.clear();
        self.vecs.clear();
        self.grads.clear();
        self.d_mu = 0.0;
        self.d_p.iter_mut().for_each(|x| *x = 0.0);
        self.d_q.iter_mut().for_each(|x| *x = 0.0);
    }
}

/// The one objective/gradient implementation used by training, the public
/// gradient API and the held-out loss. Fills `scratch` with d/d(node
/// vectors), d_mu, d_p, d_q of
///   l = log s(f(u,v)) + sum_j log s(-f(u,neg_j))
/// and returns l.
fn pair_core(
    read: &impl Fn(u32, &mut [f64]),
    mu: f64,
    p: &[f64],
    q: &[f64],
    u: u32,
    v: u32,
    negatives: &[u32],
    dim: usize,
    scratch: &mut Scratch,
) -> f64 {
    scratch.reset();
    let u_pos = scratch.slot(u, dim, read);
    let p_eu = dot(p, scratch.vec(u_pos, dim));

    let mut objective = 0.0;
    let mut g_sum = 0.0; // sum of dl/ds over all targets
    for (t, positive) in std::iter::once((v, true)).chain(negatives.iter().map(|&n| (n, false))) {
        let t_pos = scratch.slot(t, dim, read);
        let s = mu
            + p_eu
            + dot(q, scratch.vec(t_pos, dim))
            + dot(scratch.vec(u_pos, dim), scratch.vec(t_pos, dim));
        let (obj, g) = if positive {
            (log_sigmoid(s), sigmoid(-s))
        } else {
            (log_sigmoid(-s), -sigmoid(s))
        };
        objective += obj;
        g_sum += g;

        // d s / d e_t = q + e_u ; d s / d e_u gains g * (p + e_t).
        for i in 0..dim {
            let e_u_i = scratch.vecs[u_pos * dim + i];
            let e_t_i = scratch.vecs[t_pos * dim + i];
            scratch.grads[t_pos * dim + i] += g * (q[i] + e_u_i);
            scratch.grads[u_pos * dim + i] += g * (p[i] + e_t_i);
            scratch.d_q[i] += g * e_t_i;
        }
    }
    scratch.d_mu = g_sum;
    for i in 0..dim {
        scratch.d_p[i] = g_sum * scratch.vecs[u_pos * dim + i];
    }
    objective
}

fn table_reader(table: &EmbeddingTable) -> impl Fn(u32, &mut [f64]) + '_ {
    |id, out| out.copy_from_slice(table.vector(id))
}

/// The per-pair objective l (the quantity SGD ascends).
pub fn pair_objective(
    table: &EmbeddingTable,
    metapath: EdgeKind,
    u: u32,
    v: u32,
    negatives: &[u32],
) -> Result<f64> {
    let params = table
        .paths
        .get(&metapath)
        .ok_or_else(|| Error::UnknownMetaPath(metapath.name().to_string()))?;
    let mut scratch = Scratch::new(table.dim, negatives.len());
    Ok(pair_core(
        &table_reader(table),
        params.mu,
        &params.p,
        &params.q,
        u,
        v,
        negatives,
        table.dim,
        &mut scratch,
    ))
}

/// Analytic gradients of `pair_objective` w.r.t. every parameter block.
pub fn pair_gradients(
    table: &EmbeddingTable,
    metapath: EdgeKind,
    u: u32,
    v: u32,
    negatives: &[u32],
) -> Result<PairGradients> {
    let params = table
        .paths
        .get(&metapath)
        .ok_or_else(|| Error::UnknownMetaPath(metapath.name().to_string()))?;
    let dim = table.dim;
    let mut scratch = Scratch::new(dim, negatives.len());
    pair_core(
        &table_reader(table),
        params.mu,
        &params.p,
        &params.q,
        u,
        v,
        negatives,
        dim,
        &mut scratch,
    );
    Ok(PairGradients {
        d_mu: scratch.d_mu,
        d_p: scratch.d_p.clone(),
        d_q: scratch.d_q.clone(),
        d_nodes: scratch
            .ids
            .iter()
            .enumerate()
            .map(|(pos, &id)| (id, scratch.grad(pos, dim).to_vec()))
            .collect(),
    })
}

// ---------------------------------------------------------------------------
// Shared parameter store
// ---------------------------------------------------------------------------

/// Flat parameter store accessed through f64 bit atomics, so lock-free
/// workers are memory-safe; lost updates are acceptable by design. Layout:
/// node vectors, then per-path [mu, p, q] blocks.
struct ParamStore {
    bits: Vec<AtomicU64>,
    dim: usize,
    path_offsets: BTreeMap<EdgeKind, usize>,
}

impl ParamStore {
    fn from_table(table: &EmbeddingTable) -> Self {
        let dim = table.dim;
        let mut values: Vec<f64> = table.vectors.clone();
        let mut path_offsets = BTreeMap::new();
        for (&kind, params) in &table.paths {
            path_offsets.insert(kind, values.len());
            values.push(params.mu);
            values.extend_from_slice(&params.p);
            values.extend_from_slice(&params.q);
        }
        ParamStore {
            bits: values.into_iter().map(|v| AtomicU64::new(v.to_bits())).collect(),
            dim,
            path_offsets,
        }
    }

    fn get(&self, idx: usize) -> f64 {
        f64::from_bits(self.bits[idx].load(Ordering::Relaxed))
    }

    fn add(&self, idx: usize, delta: f64) {
        let v = self.get(idx) + delta;
        self.bits[idx].store(v.to_bits(), Ordering::Relaxed);
    }

    fn read_vec(&self, id: u32, out: &mut [f64]) {
        let base = id as usize * self.dim;
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.get(base + i);
        }
    }

    fn read_path(&self, kind: EdgeKind, p: &mut [f64], q: &mut [f64]) -> f64 {
        let base = self.path_offsets[&kind];
        for (i, x) in p.iter_mut().enumerate() {
            *x = self.get(base + 1 + i);
        }
        for (i, x) in q.iter_mut().enumerate() {
            *x = self.get(base + 1 + self.dim + i);
        }
        self.get(base)
    }

    fn write_back(&self, table: &mut EmbeddingTable) {
        for (i, v) in table.vectors.iter_mut().enumerate() {
            *v = self.get(i);
        }
        for (kind, params) in table.paths.iter_mut() {
            let base = self.path_offsets[kind];
            params.mu = self.get(base);
            for (i, x) in params.p.iter_mut().enumerate() {
                *x = self.get(base + 1 + i);
            }
            for (i, x) in params.q.iter_mut().enumerate() {
                *x = self.get(base + 1 + self.dim + i);
            }
        }
    }
}

/// Cumulative table for negative sampling: word mass = total degree^(3/4).
struct NegativeTable {
    cumulative: Vec<f64>,
}

impl NegativeTable {
    fn build(graph: &HinGraph) -> Self {
        let mut cumulative = Vec::with_capacity(graph.word_count());
        let mut total = 0.0;
        for id in 0..graph.word_count() as u32 {
            total += graph.total_degree(id).powf(0.75);
            cumulative.push(total);
        }
        NegativeTable { cumulative }
    }

    fn sample(&self, rng: &mut impl Rng) -> u32 {
        let total = *self.cumulative.last().expect("nonempty vocabulary");
        let x = rng.gen_range(0.0..total);
        self.cumulative.partition_point(|&c| c <= x) as u32
    }
}

struct HeldoutExample {
    metapath: EdgeKind,
    u: u32,
    v: u32,
    negatives: Vec<u32>,
}

fn choose_path(paths: &[(EdgeKind, f64)], rng: &mut impl Rng) -> EdgeKind {
    let r: f64 = rng.gen();
    let mut acc = 0.0;
    for &(kind, prop) in paths {
        acc += prop;
        if r < acc {
            return kind;
        }
    }
    paths.last().expect("nonempty metapaths").0
}

/// Train embeddings over the graph. Returns the finalized table (word
/// vectors unit-normalized) and the held-out loss trace.
pub fn train(graph: &HinGraph, config: &TrainConfig) -> Result<(EmbeddingTable, TrainStats)> {
    config.validate()?;
    let mut stats = TrainStats::default();

    // Drop meta-paths without instances, renormalizing proportions.
    let mut active: Vec<(EdgeKind, f64)> = Vec::new();
    for &(kind, prop) in &config.metapaths {
        if graph.words_with_neighbors(kind).is_empty() {
            log::warn!("meta-path W-{}-W has no instances; skipping", kind.name());
            stats.skipped_paths.push(kind);
        } else {
            active.push((kind, prop));
        }
    }
    let kinds: Vec<EdgeKind> = config.metapaths.iter().map(|&(k, _)| k).collect();
    let mut table = EmbeddingTable::init(
        (0..graph.node_count() as u32).map(|i| graph.node(i).clone()).collect(),
        graph.word_count(),
        config.dim,
        &kinds,
        config.seed,
    );
    if active.is_empty() || graph.edge_count() == 0 {
        log::warn!("nothing to train on; returning initialization");
        finalize(&mut table);
        return Ok((table, stats));
    }
    let prop_total: f64 = active.iter().map(|(_, p)| p).sum();
    for (_, p) in &mut active {
        *p /= prop_total;
    }

    let store = ParamStore::from_table(&table);
    let negatives = NegativeTable::build(graph);
    let total_samples = (config.samples_per_edge * graph.edge_count() as f64).ceil() as u64;
    let k = config.negative_samples;
    let dim = config.dim;

    // Fixed held-out examples, drawn before training with their own stream.
    let mut held_rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x9e3779b97f4a7c15));
    let heldout: Vec<HeldoutExample> = (0..512)
        .map(|_| {
            let metapath = choose_path(&active, &mut held_rng);
            let (u, v) = sample_path_instance(graph, metapath, &mut held_rng)?;
            let negs = (0..k).map(|_| negatives.sample(&mut held_rng)).collect();
            Ok(HeldoutExample {
                metapath,
                u,
                v,
                negatives: negs,
            })
        })
        .collect::<Result<_>>()?;

    let abort = AtomicBool::new(false);
    let slices = 10u64;
    let lr_span = config.lr_final - config.lr_initial;

    let run_range = |worker_seed: u64, start: u64, end: u64| -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(worker_seed);
        let mut scratch = Scratch::new(dim, k);
        let mut p = vec![0.0; dim];
        let mut q = vec![0.0; dim];
        let mut negs = vec![0u32; k];
        let read = |id: u32, out: &mut [f64]| store.read_vec(id, out);
        for step in start..end {
            if abort.load(Ordering::Relaxed) {
                return Ok(());
            }
            let lr = config.lr_initial + lr_span * (step as f64 / total_samples as f64);
            let metapath = choose_path(&active, &mut rng);
            let (u, _, v) = sample_path_triple(graph, metapath, &mut rng)?;
            for n in negs.iter_mut() {
                *n = negatives.sample(&mut rng);
            }
            let mu = store.read_path(metapath, &mut p, &mut q);
            pair_core(&read, mu, &p, &q, u, v, &negs, dim, &mut scratch);
            if !mu.is_finite() || !scratch.d_mu.is_finite() {
                abort.store(true, Ordering::Relaxed);
                return Err(Error::Numerical(
                    "non-finite parameters during embedding training (learning rate too high)"
                        .into(),
                ));
            }

            let base = store.path_offsets[&metapath];
            store.add(base, lr * scratch.d_mu);
            for i in 0..dim {
                store.add(base + 1 + i, lr * scratch.d_p[i]);
                store.add(base + 1 + dim + i, lr * scratch.d_q[i]);
            }
            for (pos, &id) in scratch.ids.iter().enumerate() {
                let vbase = id as usize * dim;
                for i in 0..dim {
                    store.add(vbase + i, lr * scratch.grads[pos * dim + i]);
                }
            }
        }
        Ok(())
    };

    for slice in 0..slices {
        let begin = total_samples * slice / slices;
        let end = total_samples * (slice + 1) / slices;
        // One RNG stream per (slice, worker) so no sample sequence repeats.
        let stream = |worker: u64| config.seed.wrapping_add(1 + slice * config.workers as u64 + worker);
        if config.workers == 1 {
            run_range(stream(0), begin, end)?;
        } else {
            let span = end - begin;
            let w = config.workers as u64;
            std::thread::scope(|scope| -> Result<()> {
                let mut handles = Vec::new();
                for worker in 0..w {
                    let ws = begin + span * worker / w;
                    let we = begin + span * (worker + 1) / w;
                    let run = &run_range;
                    handles.push(scope.spawn(move || run(stream(worker), ws, we)));
                }
                for h in handles {
                    h.join().expect("embedding worker panicked")?;
                }
                Ok(())
            })?;
        }

        // Held-out loss (negative objective) under the current parameters.
        let read = |id: u32, out: &mut [f64]| store.read_vec(id, out);
        let mut scratch = Scratch::new(dim, k);
        let mut p = vec![0.0; dim];
        let mut q = vec![0.0; dim];
        let mut loss = 0.0;
        for ex in &heldout {
            let mu = store.read_path(ex.metapath, &mut p, &mut q);
            loss -= pair_core(&read, mu, &p, &q, ex.u, ex.v, &ex.negatives, dim, &mut scratch);
        }
        stats.heldout_loss.push(loss / heldout.len() as f64);
    }

    store.write_back(&mut table);
    if table.vectors.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(
            "non-finite parameters after embedding training (learning rate too high)".into(),
        ));
    }
    finalize(&mut table);
    Ok((table, stats))
}

/// Normalize word-node vectors to unit length (zero vectors are left as-is
/// with a warning; they cannot occur after real training).
fn finalize(table: &mut EmbeddingTable) {
    for id in 0..table.word_count as u32 {
        let v = table.vector_mut(id);
        let norm = dot(v, v).sqrt();
        if norm > 1e-12 {
            v.iter_mut().for_each(|x| *x /= norm);
        } else {
            log::warn!("word vector {id} has zero norm; leaving unnormalized");
        }
    }
}

// ---------------------------------------------------------------------------
// Text export / import
// ---------------------------------------------------------------------------

/// Write all node vectors: header "N d", then `<kind>:<key> v1 .. vd`.
pub fn export_table(table: &EmbeddingTable, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut out = std::io::BufWriter::new(file);
    let io_err = |e| Error::io(path.display().to_string(), e);
    writeln!(out, "{} {}", table.nodes.len(), table.dim).map_err(io_err)?;
    for (id, node) in table.nodes.iter().enumerate() {
        write!(out, "{}", node).map_err(io_err)?;
        for v in table.vector(id as u32) {
            write!(out, " {v}").map_err(io_err)?;
        }
        writeln!(out).map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

/// Write only Word nodes, keyed by bare token.
pub fn export_word_vectors(table: &EmbeddingTable, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut out = std::io::BufWriter::new(file);
    let io_err = |e| Error::io(path.display().to_string(), e);
    writeln!(out, "{} {}", table.word_count, table.dim).map_err(io_err)?;
    for id in 0..table.word_count {
        write!(out, "{}", table.nodes[id].key).map_err(io_err)?;
        for v in table.vector(id as u32) {
            write!(out, " {v}").map_err(io_err)?;
        }
        writeln!(out).map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

/// Load word vectors from either export format (full tables keep only
/// `word:`-prefixed rows; word-only files use bare tokens). Tokens are
/// always alphanumeric, so a ':' safely marks a kind prefix.
pub fn load_word_vectors(path: &Path) -> Result<BTreeMap<String, Vec<f64>>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let reader = BufReader::new(file);
    let mut lines = reader.lines().enumerate();
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.display().to_string(),
        line,
        message,
    };

    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, "empty embedding file".into()))?;
    let header = header.map_err(|e| Error::io(path.display().to_string(), e))?;
    let dims: Vec<&str> = header.split_whitespace().collect();
    if dims.len() != 2 {
        return Err(parse_err(1, format!("bad header {header:?}")));
    }
    let dim: usize = dims[1]
        .parse()
        .map_err(|e| parse_err(1, format!("bad dimension: {e}")))?;

    let mut vectors = BTreeMap::new();
    for (idx, line) in lines {
        let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let name = parts.next().unwrap();
        let token = match name.split_once(':') {
            Some(("word", key)) => key,
            Some(_) => continue, // other node kinds
            None => name,
        };
        let values: Vec<f64> = parts
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| parse_err(idx + 1, format!("bad value: {e}")))?;
        if values.len() != dim {
            return Err(parse_err(
                idx + 1,
                format!("expected {dim} values, found {}", values.len()),
            ));
        }
        vectors.insert(token.to_string(), values);
    }
    Ok(vectors)
}
