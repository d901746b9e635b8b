//! Network internals: parameter container, batch packing, forward pass with
//! cached activations, loss, hand-written backward pass, and Adam.
//!
//! Conventions (fixed throughout):
//! - Node states are rows: `h` is N×H, features are N×F with F ≤ H
//!   (features occupy the first F columns of h⁰, the rest are zero).
//! - Every linear map `W` is stored out×in and applied as `x · Wᵀ`.
//! - Messages flow along a bundle's (src, dst) pairs: dst accumulates
//!   `A_p · h_src + b_p`, optionally scaled by a per-bundle scalar gate.
//! - GRU update with tanh candidate:
//!     z = σ(m·Wzᵀ + h·Uzᵀ + bz), r = σ(m·Wrᵀ + h·Urᵀ + br),
//!     ĥ = tanh(m·Whᵀ + (r⊙h)·Uhᵀ + bh), h' = (1−z)⊙h + z⊙ĥ.
//! - Readout per node: s_v = σ(G·[h_v ‖ x_v] + bg) ⊙ (O·h_v + bo), then
//!   sum / average over real nodes, or the virtual master node's score.

use super::tensor::{
    gather_rows, matmul_nn, matmul_nt, matmul_tn_acc, scatter_add_rows, Mat, Real,
};
use super::{GgnnError, LossKind, Readout, TrainConfig};
use crate::cpg::EdgeType;
use crate::vectorize::VectorizedGraph;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// What a message bundle carries: one of the twelve graph edge types, or the
/// virtual master-node connection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairSource {
    Edge(EdgeType),
    Master,
}

/// One (source kind, direction) propagation channel with its own weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairKind {
    pub source: PairSource,
    pub reversed: bool,
}

impl PairKind {
    pub fn name(&self) -> String {
        let tag = match self.source {
            PairSource::Edge(t) => t.name(),
            PairSource::Master => "MASTER",
        };
        format!("{}.{}", tag, if self.reversed { "rev" } else { "fwd" })
    }
}

/// The propagation channels implied by a config, in a fixed order: each edge
/// type forward (and reversed, if enabled), then the master channels when the
/// master readout is selected.
pub fn pair_kinds(config: &TrainConfig) -> Vec<PairKind> {
    let mut pairs = Vec::new();
    for t in EdgeType::ALL {
        pairs.push(PairKind { source: PairSource::Edge(t), reversed: false });
        if config.reverse_edges {
            pairs.push(PairKind { source: PairSource::Edge(t), reversed: true });
        }
    }
    if config.readout == Readout::Master {
        pairs.push(PairKind { source: PairSource::Master, reversed: false });
        pairs.push(PairKind { source: PairSource::Master, reversed: true });
    }
    pairs
}

/// Shape and layout metadata shared by parameters, batches, and checkpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamMeta {
    pub hidden: usize,
    pub features: usize,
    pub classes: usize,
    pub pairs: Vec<PairKind>,
    pub edge_gates: bool,
    pub master: bool,
}

impl ParamMeta {
    pub fn from_config(config: &TrainConfig, feature_dim: usize) -> ParamMeta {
        ParamMeta {
            hidden: config.hidden_size,
            features: feature_dim,
            classes: config.classes(),
            pairs: pair_kinds(config),
            edge_gates: config.edge_gates,
            master: config.readout == Readout::Master,
        }
    }
}

/// All learned tensors. `tensors()`/`tensors_mut()` enumerate them in a
/// stable order used by Adam, gradient checking, and checkpoints.
#[derive(Debug, Clone)]
pub struct ModelParams<T> {
    pub meta: ParamMeta,
    pub edge_w: Vec<Mat<T>>,
    pub edge_b: Vec<Mat<T>>,
    pub wz: Mat<T>,
    pub uz: Mat<T>,
    pub bz: Mat<T>,
    pub wr: Mat<T>,
    pub ur: Mat<T>,
    pub br: Mat<T>,
    pub wh: Mat<T>,
    pub uh: Mat<T>,
    pub bh: Mat<T>,
    pub gate_w: Mat<T>,
    pub gate_b: Mat<T>,
    pub out_w: Mat<T>,
    pub out_b: Mat<T>,
    pub edge_gate: Option<Mat<T>>,
    pub master_init: Option<Mat<T>>,
}

impl<T: Real> ModelParams<T> {
    /// All-zero parameters with the right shapes.
    pub fn zeros(meta: ParamMeta) -> ModelParams<T> {
        let h = meta.hidden;
        let c = meta.classes;
        let f = meta.features;
        let p = meta.pairs.len();
        let (gates, master) = (meta.edge_gates, meta.master);
        ModelParams {
            meta,
            edge_w: (0..p).map(|_| Mat::zeros(h, h)).collect(),
            edge_b: (0..p).map(|_| Mat::zeros(1, h)).collect(),
            wz: Mat::zeros(h, h),
            uz: Mat::zeros(h, h),
            bz: Mat::zeros(1, h),
            wr: Mat::zeros(h, h),
            ur: Mat::zeros(h, h),
            br: Mat::zeros(1, h),
            wh: Mat::zeros(h, h),
            uh: Mat::zeros(h, h),
            bh: Mat::zeros(1, h),
            gate_w: Mat::zeros(c, h + f),
            gate_b: Mat::zeros(1, c),
            out_w: Mat::zeros(c, h),
            out_b: Mat::zeros(1, c),
            edge_gate: gates.then(|| Mat::zeros(1, p)),
            master_init: master.then(|| Mat::zeros(1, h)),
        }
    }

    pub fn zeros_like(&self) -> ModelParams<T> {
        ModelParams::zeros(self.meta.clone())
    }

    pub fn tensors(&self) -> Vec<(String, &Mat<T>)> {
        let mut out: Vec<(String, &Mat<T>)> = Vec::new();
        for (i, pk) in self.meta.pairs.iter().enumerate() {
            out.push((format!("edge_w.{}", pk.name()), &self.edge_w[i]));
            out.push((format!("edge_b.{}", pk.name()), &self.edge_b[i]));
        }
        out.push(("gru.wz".into(), &self.wz));
        out.push(("gru.uz".into(), &self.uz));
        out.push(("gru.bz".into(), &self.bz));
        out.push(("gru.wr".into(), &self.wr));
        out.push(("gru.ur".into(), &self.ur));
        out.push(("gru.br".into(), &self.br));
        out.push(("gru.wh".into(), &self.wh));
        out.push(("gru.uh".into(), &self.uh));
        out.push(("gru.bh".into(), &self.bh));
        out.push(("readout.gate_w".into(), &self.gate_w));
        out.push(("readout.gate_b".into(), &self.gate_b));
        out.push(("readout.out_w".into(), &self.out_w));
        out.push(("readout.out_b".into(), &self.out_b));
        if let Some(g) = &self.edge_gate {
            out.push(("edge_gate".into(), g));
        }
        if let Some(m) = &self.master_init {
            out.push(("master_init".into(), m));
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Mat<T>)> {
        let mut out: Vec<(String, &mut Mat<T>)> = Vec::new();
        for (i, (w, b)) in self.edge_w.iter_mut().zip(self.edge_b.iter_mut()).enumerate() {
            let name = self.meta.pairs[i].name();
            out.push((format!("edge_w.{name}"), w));
            out.push((format!("edge_b.{name}"), b));
        }
        out.push(("gru.wz".into(), &mut self.wz));
        out.push(("gru.uz".into(), &mut self.uz));
        out.push(("gru.bz".into(), &mut self.bz));
        out.push(("gru.wr".into(), &mut self.wr));
        out.push(("gru.ur".into(), &mut self.ur));
        out.push(("gru.br".into(), &mut self.br));
        out.push(("gru.wh".into(), &mut self.wh));
        out.push(("gru.uh".into(), &mut self.uh));
        out.push(("gru.bh".into(), &mut self.bh));
        out.push(("readout.gate_w".into(), &mut self.gate_w));
        out.push(("readout.gate_b".into(), &mut self.gate_b));
        out.push(("readout.out_w".into(), &mut self.out_w));
        out.push(("readout.out_b".into(), &mut self.out_b));
        if let Some(g) = &mut self.edge_gate {
            out.push(("edge_gate".into(), g));
        }
        if let Some(m) = &mut self.master_init {
            out.push(("master_init".into(), m));
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.is_finite())
    }

    /// Convert precision (f32 ↔ f64); used by gradient-check tooling.
    pub fn convert<U: Real>(&self) -> ModelParams<U> {
        let mut out = ModelParams::<U>::zeros(self.meta.clone());
        let src = self.tensors();
        for (dst, (_, s)) in out.tensors_mut().into_iter().zip(src) {
            for (d, &x) in dst.1.data.iter_mut().zip(&s.data) {
                *d = U::from_f64(x.to_f64());
            }
        }
        out
    }
}

/// Glorot-uniform initialization: weights ±√(6/(fan_in+fan_out)), biases
/// zero, edge gates one, master seed state small uniform.
pub fn init_params<T: Real>(
    config: &TrainConfig,
    feature_dim: usize,
    seed: u64,
) -> Result<ModelParams<T>, GgnnError> {
    config.validate(feature_dim)?;
    let meta = ParamMeta::from_config(config, feature_dim);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = ModelParams::<T>::zeros(meta);
    let glorot = |m: &mut Mat<T>, rng: &mut ChaCha8Rng| {
        let bound = (6.0 / (m.rows + m.cols) as f64).sqrt();
        for v in m.data.iter_mut() {
            *v = T::from_f64(rng.gen_range(-bound..bound));
        }
    };
    for w in p.edge_w.iter_mut() {
        glorot(w, &mut rng);
    }
    glorot(&mut p.wz, &mut rng);
    glorot(&mut p.uz, &mut rng);
    glorot(&mut p.wr, &mut rng);
    glorot(&mut p.ur, &mut rng);
    glorot(&mut p.wh, &mut rng);
    glorot(&mut p.uh, &mut rng);
    glorot(&mut p.gate_w, &mut rng);
    glorot(&mut p.out_w, &mut rng);
    if let Some(g) = &mut p.edge_gate {
        g.fill(T::one());
    }
    if let Some(m) = &mut p.master_init {
        for v in m.data.iter_mut() {
            *v = T::from_f64(rng.gen_range(-0.1..0.1));
        }
    }
    Ok(p)
}

/// A set of graphs fused into one disjoint union, with per-channel edge
/// bundles aligned to `ParamMeta::pairs`. Real nodes of graph g occupy a
/// contiguous block; master nodes (if any) sit after all real nodes.
#[derive(Debug, Clone)]
pub struct PackedBatch<T> {
    pub features: Mat<T>,
    pub labels: Vec<u8>,
    pub sample_ids: Vec<String>,
    /// graph index for every node row (masters included).
    pub graph_of: Vec<usize>,
    /// first real-node row of each graph.
    pub offsets: Vec<usize>,
    /// real (non-master) node count of each graph.
    pub real_counts: Vec<usize>,
    /// total real nodes (masters occupy rows real_total..n_nodes).
    pub real_total: usize,
    pub n_nodes: usize,
    /// per channel: (src,dst) node rows; dst accumulates messages from src.
    pub bundles: Vec<Vec<(u32, u32)>>,
}

/// Fuse `graphs` into one batch laid out for `config`. Rejects empty input,
/// empty graphs, inconsistent feature widths, and labels outside {0, 1}.
pub fn pack_graphs<T: Real>(
    graphs: &[VectorizedGraph],
    config: &TrainConfig,
    feature_dim: usize,
) -> Result<PackedBatch<T>, GgnnError> {
    if graphs.is_empty() {
        return Err(GgnnError::EmptyBatch);
    }
    let master = config.readout == Readout::Master;
    let pairs = pair_kinds(config);
    let real_total: usize = graphs.iter().map(|g| g.node_count).sum();
    let n_nodes = real_total + if master { graphs.len() } else { 0 };

    let mut features = Mat::<T>::zeros(n_nodes, feature_dim);
    let mut labels = Vec::with_capacity(graphs.len());
    let mut sample_ids = Vec::with_capacity(graphs.len());
    let mut graph_of = vec![0usize; n_nodes];
    let mut offsets = Vec::with_capacity(graphs.len());
    let mut real_counts = Vec::with_capacity(graphs.len());
    let mut bundles: Vec<Vec<(u32, u32)>> = vec![Vec::new(); pairs.len()];

    // Channel index lookup: per edge type, forward and (optional) reversed.
    let mut chan_fwd = [usize::MAX; EdgeType::ALL.len()];
    let mut chan_rev = [usize::MAX; EdgeType::ALL.len()];
    let mut chan_master = (usize::MAX, usize::MAX);
    for (i, pk) in pairs.iter().enumerate() {
        match (pk.source, pk.reversed) {
            (PairSource::Edge(t), false) => chan_fwd[t as usize] = i,
            (PairSource::Edge(t), true) => chan_rev[t as usize] = i,
            (PairSource::Master, false) => chan_master.0 = i,
            (PairSource::Master, true) => chan_master.1 = i,
        }
    }

    let mut offset = 0usize;
    for (gi, g) in graphs.iter().enumerate() {
        if g.node_count == 0 {
            return Err(GgnnError::EmptyGraph { sample_id: g.sample_id.clone() });
        }
        if g.label > 1 {
            return Err(GgnnError::InvalidLabel { sample_id: g.sample_id.clone(), label: g.label });
        }
        if g.features.len() != g.node_count {
            return Err(GgnnError::Malformed {
                sample_id: g.sample_id.clone(),
                message: format!(
                    "feature rows ({}) do not match node_count ({})",
                    g.features.len(),
                    g.node_count
                ),
            });
        }
        for (v, row) in g.features.iter().enumerate() {
            if row.len() != feature_dim {
                return Err(GgnnError::FeatureWidth {
                    expected: feature_dim,
                    got: row.len(),
                    sample_id: g.sample_id.clone(),
                });
            }
            for (j, &x) in row.iter().enumerate() {
                features.set(offset + v, j, T::from_f64(x as f64));
            }
            graph_of[offset + v] = gi;
        }
        for (&t, edges) in &g.adjacency {
            for &(u, v) in edges {
                if u as usize >= g.node_count || v as usize >= g.node_count {
                    return Err(GgnnError::Malformed {
                        sample_id: g.sample_id.clone(),
                        message: format!("edge ({u}, {v}) out of range for {} nodes", g.node_count),
                    });
                }
                let (su, sv) = ((offset + u as usize) as u32, (offset + v as usize) as u32);
                bundles[chan_fwd[t as usize]].push((su, sv));
                if config.reverse_edges {
                    bundles[chan_rev[t as usize]].push((sv, su));
                }
            }
        }
        labels.push(g.label);
        sample_ids.push(g.sample_id.clone());
        offsets.push(offset);
        real_counts.push(g.node_count);
        offset += g.node_count;
    }

    if master {
        for (gi, g) in graphs.iter().enumerate() {
            let mrow = real_total + gi;
            graph_of[mrow] = gi;
            for v in 0..g.node_count {
                let nv = (offsets[gi] + v) as u32;
                bundles[chan_master.0].push((nv, mrow as u32));
                bundles[chan_master.1].push((mrow as u32, nv));
            }
        }
    }

    Ok(PackedBatch {
        features,
        labels,
        sample_ids,
        graph_of,
        offsets,
        real_counts,
        real_total,
        n_nodes,
        bundles,
    })
}

/// Everything the backward pass needs from a forward run.
pub struct Activations<T> {
    /// h[0..=T]: node states before/after each propagation step.
    pub h: Vec<Mat<T>>,
    /// per step: message sums, gate values, reset values, candidates.
    pub m: Vec<Mat<T>>,
    pub z: Vec<Mat<T>>,
    pub r: Vec<Mat<T>>,
    pub hc: Vec<Mat<T>>,
    /// inverted-dropout mask applied to h[T] (None when not training or keep=1).
    pub dropout_mask: Option<Mat<T>>,
    /// h[T] after dropout — the state the readout saw.
    pub h_final: Mat<T>,
    /// [h_final ‖ features] (N×(H+F)).
    pub hx: Mat<T>,
    pub gate: Mat<T>,
    pub trans: Mat<T>,
    /// per-node scores s_v (N×C).
    pub scores: Mat<T>,
}

fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// Run the network over a packed batch. Returns per-graph logits (G×C) and
/// the cached activations. `dropout_seed` only matters when `training` and
/// dropout_keep < 1.
pub fn forward<T: Real>(
    batch: &PackedBatch<T>,
    params: &ModelParams<T>,
    config: &TrainConfig,
    training: bool,
    dropout_seed: u64,
) -> (Mat<T>, Activations<T>) {
    let meta = &params.meta;
    let (n, h_dim, f_dim, c_dim) = (batch.n_nodes, meta.hidden, meta.features, meta.classes);
    debug_assert_eq!(batch.bundles.len(), meta.pairs.len(), "batch/params channel mismatch");
    let n_graphs = batch.labels.len();

    // h⁰: features in the first F columns; master rows get the learned seed.
    let mut h0 = Mat::<T>::zeros(n, h_dim);
    for v in 0..batch.real_total {
        h0.row_mut(v)[..f_dim].copy_from_slice(batch.features.row(v));
    }
    if let Some(m0) = &params.master_init {
        for v in batch.real_total..n {
            h0.row_mut(v).copy_from_slice(m0.row(0));
        }
    }

    let steps = config.timesteps;
    let mut h = Vec::with_capacity(steps + 1);
    h.push(h0);
    let mut ms = Vec::with_capacity(steps);
    let mut zs = Vec::with_capacity(steps);
    let mut rs = Vec::with_capacity(steps);
    let mut hcs = Vec::with_capacity(steps);

    for _ in 0..steps {
        let hp = h.last().unwrap();
        // Message passing: every channel gathers source rows, applies its
        // linear map, and scatter-adds into the destinations.
        let mut m = Mat::<T>::zeros(n, h_dim);
        for (p, bundle) in batch.bundles.iter().enumerate() {
            if bundle.is_empty() {
                continue;
            }
            let x = gather_rows(hp, bundle.iter().map(|&(s, _)| s as usize));
            let mut y = matmul_nt(&x, &params.edge_w[p]);
            y.add_bias_row(&params.edge_b[p]);
            if let Some(g) = &params.edge_gate {
                y.scale(g.get(0, p));
            }
            scatter_add_rows(&mut m, bundle.iter().map(|&(_, d)| d as usize), &y);
        }

        // GRU cell over all nodes at once.
        let mut zpre = matmul_nt(&m, &params.wz);
        zpre.add_assign(&matmul_nt(hp, &params.uz));
        zpre.add_bias_row(&params.bz);
        zpre.map_inplace(sigmoid);
        let z = zpre;

        let mut rpre = matmul_nt(&m, &params.wr);
        rpre.add_assign(&matmul_nt(hp, &params.ur));
        rpre.add_bias_row(&params.br);
        rpre.map_inplace(sigmoid);
        let r = rpre;

        let mut rh = r.clone();
        for (a, &b) in rh.data.iter_mut().zip(&hp.data) {
            *a = *a * b;
        }
        let mut hcpre = matmul_nt(&m, &params.wh);
        hcpre.add_assign(&matmul_nt(&rh, &params.uh));
        hcpre.add_bias_row(&params.bh);
        hcpre.map_inplace(|x| x.tanh());
        let hc = hcpre;

        let mut hn = Mat::<T>::zeros(n, h_dim);
        for i in 0..hn.data.len() {
            let zz = z.data[i];
            hn.data[i] = (T::one() - zz) * hp.data[i] + zz * hc.data[i];
        }

        ms.push(m);
        zs.push(z);
        rs.push(r);
        hcs.push(hc);
        h.push(hn);
    }

    // Inverted dropout on the final state.
    let keep = config.dropout_keep;
    let mut dropout_mask = None;
    let mut h_final = h.last().unwrap().clone();
    if training && keep < 1.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(dropout_seed);
        let inv = T::from_f64(1.0 / keep);
        let mut mask = Mat::<T>::zeros(n, h_dim);
        for v in mask.data.iter_mut() {
            *v = if rng.gen_range(0.0..1.0) < keep { inv } else { T::zero() };
        }
        for (a, &b) in h_final.data.iter_mut().zip(&mask.data) {
            *a = *a * b;
        }
        dropout_mask = Some(mask);
    }

    // Readout: s_v = σ(G·[h_v ‖ x_v] + bg) ⊙ (O·h_v + bo).
    let mut hx = Mat::<T>::zeros(n, h_dim + f_dim);
    for v in 0..n {
        hx.row_mut(v)[..h_dim].copy_from_slice(h_final.row(v));
    }
    for v in 0..batch.real_total {
        hx.row_mut(v)[h_dim..].copy_from_slice(batch.features.row(v));
    }
    let mut gate = matmul_nt(&hx, &params.gate_w);
    gate.add_bias_row(&params.gate_b);
    gate.map_inplace(sigmoid);
    let mut trans = matmul_nt(&h_final, &params.out_w);
    trans.add_bias_row(&params.out_b);
    let mut scores = gate.clone();
    for (a, &b) in scores.data.iter_mut().zip(&trans.data) {
        *a = *a * b;
    }

    let mut logits = Mat::<T>::zeros(n_graphs, c_dim);
    match config.readout {
        Readout::Sum | Readout::Average => {
            for v in 0..batch.real_total {
                let g = batch.graph_of[v];
                for c in 0..c_dim {
                    let cur = logits.get(g, c);
                    logits.set(g, c, cur + scores.get(v, c));
                }
            }
            if config.readout == Readout::Average {
                for g in 0..n_graphs {
                    let inv = T::from_f64(1.0 / batch.real_counts[g] as f64);
                    for c in 0..c_dim {
                        let cur = logits.get(g, c);
                        logits.set(g, c, cur * inv);
                    }
                }
            }
        }
        Readout::Master => {
            for g in 0..n_graphs {
                let mrow = batch.real_total + g;
                for c in 0..c_dim {
                    logits.set(g, c, scores.get(mrow, c));
                }
            }
        }
    }

    let acts = Activations {
        h,
        m: ms,
        z: zs,
        r: rs,
        hc: hcs,
        dropout_mask,
        h_final,
        hx,
        gate,
        trans,
        scores,
    };
    (logits, acts)
}

/// Positive-class probability for each graph, from logits (C=1: σ(l);
/// C=2: softmax component 1), clamped to [1e-7, 1−1e-7].
pub fn positive_probabilities<T: Real>(logits: &Mat<T>) -> Vec<T> {
    let lo = T::from_f64(1e-7);
    let hi = T::one() - lo;
    (0..logits.rows)
        .map(|g| {
            let p = if logits.cols == 1 {
                sigmoid(logits.get(g, 0))
            } else {
                let (l0, l1) = (logits.get(g, 0), logits.get(g, 1));
                let m = if l0 > l1 { l0 } else { l1 };
                let (e0, e1) = ((l0 - m).exp(), (l1 - m).exp());
                e1 / (e0 + e1)
            };
            // Explicit comparisons so NaN propagates (min/max would swallow
            // it) and divergence is caught by the loss finiteness check.
            if p < lo {
                lo
            } else if p > hi {
                hi
            } else {
                p
            }
        })
        .collect()
}

/// Mean loss over the batch plus ∂loss/∂logits (already divided by the
/// number of graphs). The three variants share one formula pair:
///   L = −[w·y·(1−p)^γ·ln p + (1−y)·p^γ·ln(1−p)]
/// with γ=0 for plain and weighted cross-entropy, w=1 for plain.
pub fn loss_and_grad<T: Real>(
    logits: &Mat<T>,
    labels: &[u8],
    config: &TrainConfig,
) -> (T, Mat<T>) {
    debug_assert_eq!(logits.rows, labels.len());
    let probs = positive_probabilities(logits);
    let (w, gamma) = match config.loss {
        LossKind::Ce => (T::one(), 0.0),
        LossKind::WeightedCe => (T::from_f64(config.class_weight_pos), 0.0),
        LossKind::Focal => (T::from_f64(config.class_weight_pos), config.focal_gamma),
    };
    let g_count = T::from_f64(labels.len() as f64);
    let mut total = T::zero();
    let mut dlogits = Mat::<T>::zeros(logits.rows, logits.cols);
    for (gidx, (&y, &p)) in labels.iter().zip(&probs).enumerate() {
        let one = T::one();
        let q = one - p;
        let (loss, dldp) = if y == 1 {
            let focus = if gamma == 0.0 { one } else { q.powf(T::from_f64(gamma)) };
            let loss = -(w * focus * p.ln());
            // d/dp [−w(1−p)^γ ln p] = wγ(1−p)^{γ−1} ln p − w(1−p)^γ/p
            let dldp = if gamma == 0.0 {
                -(w / p)
            } else {
                w * T::from_f64(gamma) * q.powf(T::from_f64(gamma - 1.0)) * p.ln() - w * focus / p
            };
            (loss, dldp)
        } else {
            let focus = if gamma == 0.0 { one } else { p.powf(T::from_f64(gamma)) };
            let loss = -(focus * q.ln());
            // d/dp [−p^γ ln(1−p)] = −γp^{γ−1} ln(1−p) + p^γ/(1−p)
            let dldp = if gamma == 0.0 {
                one / q
            } else {
                -(T::from_f64(gamma) * p.powf(T::from_f64(gamma - 1.0)) * q.ln()) + focus / q
            };
            (loss, dldp)
        };
        total = total + loss;
        // p = σ(l) for C=1 and softmax₁ for C=2 share dp/dl₁ = p(1−p);
        // for C=2, dp/dl₀ = −p(1−p).
        let dpdl = p * q;
        let dl = dldp * dpdl / g_count;
        if logits.cols == 1 {
            dlogits.set(gidx, 0, dl);
        } else {
            dlogits.set(gidx, 0, -dl);
            dlogits.set(gidx, 1, dl);
        }
    }
    (total / g_count, dlogits)
}

/// Hand-written reverse pass. Returns gradients in a params-shaped container.
pub fn backward<T: Real>(
    batch: &PackedBatch<T>,
    params: &ModelParams<T>,
    config: &TrainConfig,
    acts: &Activations<T>,
    dlogits: &Mat<T>,
) -> ModelParams<T> {
    let meta = &params.meta;
    let (n, h_dim, c_dim) = (batch.n_nodes, meta.hidden, meta.classes);
    let n_graphs = batch.labels.len();
    let mut grads = params.zeros_like();

    // Readout → per-node score gradients.
    let mut dscores = Mat::<T>::zeros(n, c_dim);
    match config.readout {
        Readout::Sum => {
            for v in 0..batch.real_total {
                let g = batch.graph_of[v];
                dscores.row_mut(v).copy_from_slice(dlogits.row(g));
            }
        }
        Readout::Average => {
            for v in 0..batch.real_total {
                let g = batch.graph_of[v];
                let inv = T::from_f64(1.0 / batch.real_counts[g] as f64);
                for c in 0..c_dim {
                    dscores.set(v, c, dlogits.get(g, c) * inv);
                }
            }
        }
        Readout::Master => {
            for g in 0..n_graphs {
                dscores.row_mut(batch.real_total + g).copy_from_slice(dlogits.row(g));
            }
        }
    }

    // s = gate ⊙ trans.
    let mut dgate_pre = Mat::<T>::zeros(n, c_dim);
    let mut dtrans = Mat::<T>::zeros(n, c_dim);
    for i in 0..dscores.data.len() {
        let ds = dscores.data[i];
        let gv = acts.gate.data[i];
        dtrans.data[i] = ds * gv;
        dgate_pre.data[i] = ds * acts.trans.data[i] * gv * (T::one() - gv);
    }

    // trans = h_final·Oᵀ + bo.
    matmul_tn_acc(&dtrans, &acts.h_final, &mut grads.out_w);
    grads.out_b.add_assign(&dtrans.colsum());
    let mut dh_final = matmul_nn(&dtrans, &params.out_w);

    // gate_pre = hx·Gᵀ + bg; hx = [h_final ‖ x], features are constants.
    matmul_tn_acc(&dgate_pre, &acts.hx, &mut grads.gate_w);
    grads.gate_b.add_assign(&dgate_pre.colsum());
    let dhx = matmul_nn(&dgate_pre, &params.gate_w);
    for v in 0..n {
        for (a, &b) in dh_final.row_mut(v).iter_mut().zip(&dhx.row(v)[..h_dim]) {
            *a = *a + b;
        }
    }

    // Dropout.
    let mut dht = dh_final;
    if let Some(mask) = &acts.dropout_mask {
        for (a, &b) in dht.data.iter_mut().zip(&mask.data) {
            *a = *a * b;
        }
    }

    // Propagation steps, in reverse.
    for t in (0..config.timesteps).rev() {
        let hp = &acts.h[t];
        let (z, r, hc, m) = (&acts.z[t], &acts.r[t], &acts.hc[t], &acts.m[t]);

        // h' = (1−z)⊙hp + z⊙hc
        let mut dz_pre = Mat::<T>::zeros(n, h_dim);
        let mut dhc_pre = Mat::<T>::zeros(n, h_dim);
        let mut dhp = Mat::<T>::zeros(n, h_dim);
        for i in 0..dht.data.len() {
            let d = dht.data[i];
            let (zv, hcv, hpv) = (z.data[i], hc.data[i], hp.data[i]);
            dhp.data[i] = d * (T::one() - zv);
            // dz with σ' folded in; dhc with tanh' folded in.
            dz_pre.data[i] = d * (hcv - hpv) * zv * (T::one() - zv);
            dhc_pre.data[i] = d * zv * (T::one() - hcv * hcv);
        }

        // Candidate: hc_pre = m·Whᵀ + (r⊙hp)·Uhᵀ + bh.
        let mut rh = r.clone();
        for (a, &b) in rh.data.iter_mut().zip(&hp.data) {
            *a = *a * b;
        }
        matmul_tn_acc(&dhc_pre, m, &mut grads.wh);
        matmul_tn_acc(&dhc_pre, &rh, &mut grads.uh);
        grads.bh.add_assign(&dhc_pre.colsum());
        let mut dm = matmul_nn(&dhc_pre, &params.wh);
        let drh = matmul_nn(&dhc_pre, &params.uh);
        let mut dr_pre = Mat::<T>::zeros(n, h_dim);
        for i in 0..drh.data.len() {
            let (rv, hpv) = (r.data[i], hp.data[i]);
            dr_pre.data[i] = drh.data[i] * hpv * rv * (T::one() - rv);
            dhp.data[i] = dhp.data[i] + drh.data[i] * rv;
        }

        // Gates: z_pre = m·Wzᵀ + hp·Uzᵀ + bz (and r likewise).
        matmul_tn_acc(&dz_pre, m, &mut grads.wz);
        matmul_tn_acc(&dz_pre, hp, &mut grads.uz);
        grads.bz.add_assign(&dz_pre.colsum());
        dm.add_assign(&matmul_nn(&dz_pre, &params.wz));
        dhp.add_assign(&matmul_nn(&dz_pre, &params.uz));

        matmul_tn_acc(&dr_pre, m, &mut grads.wr);
        matmul_tn_acc(&dr_pre, hp, &mut grads.ur);
        grads.br.add_assign(&dr_pre.colsum());
        dm.add_assign(&matmul_nn(&dr_pre, &params.wr));
        dhp.add_assign(&matmul_nn(&dr_pre, &params.ur));

        // Message passing: m[dst] += g_p·(hp[src]·A_pᵀ + b_p).
        for (p, bundle) in batch.bundles.iter().enumerate() {
            if bundle.is_empty() {
                continue;
            }
            let dy_final = gather_rows(&dm, bundle.iter().map(|&(_, d)| d as usize));
            let x = gather_rows(hp, bundle.iter().map(|&(s, _)| s as usize));
            let gate_val = params.edge_gate.as_ref().map(|g| g.get(0, p));
            if let Some(gv) = gate_val {
                // dg_p = Σ dy_final ⊙ (x·Aᵀ + b)
                let mut ypre = matmul_nt(&x, &params.edge_w[p]);
                ypre.add_bias_row(&params.edge_b[p]);
                let dg: T = dy_final.data.iter().zip(&ypre.data).map(|(&a, &b)| a * b).sum();
                let gm = grads.edge_gate.as_mut().unwrap();
                let cur = gm.get(0, p);
                gm.set(0, p, cur + dg);
                let mut dy = dy_final;
                dy.scale(gv);
                matmul_tn_acc(&dy, &x, &mut grads.edge_w[p]);
                grads.edge_b[p].add_assign(&dy.colsum());
                let dx = matmul_nn(&dy, &params.edge_w[p]);
                scatter_add_rows(&mut dhp, bundle.iter().map(|&(s, _)| s as usize), &dx);
            } else {
                matmul_tn_acc(&dy_final, &x, &mut grads.edge_w[p]);
                grads.edge_b[p].add_assign(&dy_final.colsum());
                let dx = matmul_nn(&dy_final, &params.edge_w[p]);
                scatter_add_rows(&mut dhp, bundle.iter().map(|&(s, _)| s as usize), &dx);
            }
        }

        dht = dhp;
    }

    // h⁰ gradient reaches the learned master seed (feature rows are inputs).
    if let Some(gm) = grads.master_init.as_mut() {
        for v in batch.real_total..n {
            for (a, &b) in gm.row_mut(0).iter_mut().zip(dht.row(v)) {
                *a = *a + b;
            }
        }
    }

    grads
}

/// First/second-moment state for Adam, aligned with `tensors()` order.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    pub step: u64,
    pub m: Vec<Mat<T>>,
    pub v: Vec<Mat<T>>,
}

impl<T: Real> AdamState<T> {
    pub fn new(params: &ModelParams<T>) -> AdamState<T> {
        let shapes: Vec<(usize, usize)> =
            params.tensors().iter().map(|(_, t)| (t.rows, t.cols)).collect();
        AdamState {
            step: 0,
            m: shapes.iter().map(|&(r, c)| Mat::zeros(r, c)).collect(),
            v: shapes.iter().map(|&(r, c)| Mat::zeros(r, c)).collect(),
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step<T: Real>(
    params: &mut ModelParams<T>,
    grads: &ModelParams<T>,
    state: &mut AdamState<T>,
    config: &TrainConfig,
) {
    state.step += 1;
    let t = state.step as f64;
    let (b1, b2) = (config.adam_beta1, config.adam_beta2);
    let lr_t =
        T::from_f64(config.learning_rate * (1.0 - b2.powf(t)).sqrt() / (1.0 - b1.powf(t)));
    let (b1t, b2t) = (T::from_f64(b1), T::from_f64(b2));
    let (ob1, ob2) = (T::one() - b1t, T::one() - b2t);
    let eps = T::from_f64(config.adam_epsilon);
    let gts = grads.tensors();
    for (slot, (pt, (_, gt))) in params.tensors_mut().into_iter().zip(gts).enumerate() {
        let (m, v) = (&mut state.m[slot], &mut state.v[slot]);
        for i in 0..gt.data.len() {
            let g = gt.data[i];
            m.data[i] = b1t * m.data[i] + ob1 * g;
            v.data[i] = b2t * v.data[i] + ob2 * g * g;
            pt.1.data[i] = pt.1.data[i] - lr_t * m.data[i] / (v.data[i].sqrt() + eps);
        }
    }
}

/// Deterministic per-(seed, epoch, batch) stream for dropout masks.
pub fn dropout_seed(seed: u64, epoch: usize, batch: usize) -> u64 {
    seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (batch as u64 + 1).wrapping_mul(0xBF58_476D_1CE4_E5B9)
}

/// Per-node positive scores for one packed batch (evaluation mode), used by
/// prediction introspection.
pub fn node_scores<T: Real>(scores: &Mat<T>, batch: &PackedBatch<T>) -> Vec<Vec<f64>> {
    let c = scores.cols;
    let mut out: Vec<Vec<f64>> = batch.real_counts.iter().map(|&k| Vec::with_capacity(k)).collect();
    for v in 0..batch.real_total {
        let g = batch.graph_of[v];
        // For C=2 report the positive-class column, else the single score.
        let s = if c == 1 { scores.get(v, 0) } else { scores.get(v, 1) };
        out[g].push(s.to_f64());
    }
    out
}
