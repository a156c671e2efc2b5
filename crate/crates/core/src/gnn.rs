//! Graph-transformer inference on the AP/UE channel graph.
//!
//! Each layer updates every node from its own state and an attention-weighted
//! sum over each edge type `•`:
//!
//! ```text
//! f_•(i)    = L1_•(h_i) + Σ_{j ∈ N_•(i)} α_•(i, j)·L2_•(h_j)
//! α_•(i, ·) = softmax_j(⟨L3_•(h_i), L4_•(h_j)⟩ / √d)
//! h_i      ← LayerNorm(ReLU(f_AP(i) + f_UE(i)))
//! ```
//!
//! A single linear map shared by all nodes turns the last hidden state into
//! the six output features, which go through the usual deprocessing and
//! postprocessing to give a feasible precoder.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::channel::rng_from_seed;
use crate::graph::{
    build_graph, deprocess_and_postprocess, input_features, CfGraph, FeatureStats, NodeFeatures,
    INPUT_FEATURES, OUTPUT_FEATURES,
};
use crate::math::{exp, sqrt};
use crate::system::{ChannelMatrix, Precoder};
use crate::{Error, Result};

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GnnConfig {
    pub num_layers: usize,
    pub hidden_dim: usize,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Default for GnnConfig {
    fn default() -> Self {
        Self {
            num_layers: 6,
            hidden_dim: 22,
            in_dim: INPUT_FEATURES,
            out_dim: OUTPUT_FEATURES,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EdgeType {
    Ap,
    Ue,
}

impl EdgeType {
    pub const ALL: [EdgeType; 2] = [EdgeType::Ap, EdgeType::Ue];

    pub fn name(self) -> &'static str {
        match self {
            EdgeType::Ap => "ap",
            EdgeType::Ue => "ue",
        }
    }
}

/// Name and shape of one stored tensor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
}

impl TensorSpec {
    fn new(name: String, shape: Vec<usize>) -> Self {
        Self { name, shape }
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl GnnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_layers == 0 || self.hidden_dim == 0 || self.in_dim == 0 || self.out_dim == 0 {
            return Err(Error::InvalidArgument("GNN dimensions must be positive"));
        }
        Ok(())
    }

    fn layer_in(&self, t: usize) -> usize {
        if t == 0 {
            self.in_dim
        } else {
            self.hidden_dim
        }
    }

    /// Trainable tensors in canonical order. Weight shapes are `[out, in]`.
    pub fn parameter_specs(&self) -> Vec<TensorSpec> {
        let d = self.hidden_dim;
        let mut specs = Vec::new();
        for t in 0..self.num_layers {
            let din = self.layer_in(t);
            for ty in EdgeType::ALL {
                let p = format!("layers.{t}.{}", ty.name());
                specs.push(TensorSpec::new(format!("{p}.l1.weight"), vec![d, din]));
                specs.push(TensorSpec::new(format!("{p}.l1.bias"), vec![d]));
                specs.push(TensorSpec::new(format!("{p}.l2.weight"), vec![d, din]));
                specs.push(TensorSpec::new(format!("{p}.l2.bias"), vec![d]));
                specs.push(TensorSpec::new(format!("{p}.l3.weight"), vec![d, din]));
                specs.push(TensorSpec::new(format!("{p}.l4.weight"), vec![d, din]));
            }
            specs.push(TensorSpec::new(format!("layers.{t}.norm.gain"), vec![d]));
            specs.push(TensorSpec::new(format!("layers.{t}.norm.offset"), vec![d]));
        }
        specs.push(TensorSpec::new("output.weight".into(), vec![self.out_dim, d]));
        specs.push(TensorSpec::new("output.bias".into(), vec![self.out_dim]));
        specs
    }

    /// Parameter tensors followed by the frozen feature statistics.
    pub fn tensor_specs(&self) -> Vec<TensorSpec> {
        let mut specs = self.parameter_specs();
        for (name, n) in [
            ("input_mean", INPUT_FEATURES),
            ("input_std", INPUT_FEATURES),
            ("output_mean", OUTPUT_FEATURES),
            ("output_std", OUTPUT_FEATURES),
        ] {
            specs.push(TensorSpec::new(format!("feature_stats.{name}"), vec![n]));
        }
        specs
    }
}

/// Number of trainable scalars (feature statistics excluded).
pub fn count_parameters(config: &GnnConfig) -> usize {
    config.parameter_specs().iter().map(TensorSpec::len).sum()
}

/// `y = W x (+ b)` with `W` stored row-major as `[out, in]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub out_dim: usize,
    pub in_dim: usize,
    pub weight: Vec<f64>,
    pub bias: Option<Vec<f64>>,
}

impl Linear {
    pub fn zeros(out_dim: usize, in_dim: usize, bias: bool) -> Self {
        Self {
            out_dim,
            in_dim,
            weight: vec![0.0; out_dim * in_dim],
            bias: bias.then(|| vec![0.0; out_dim]),
        }
    }

    #[inline]
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (o, yo) in y.iter_mut().enumerate() {
            let row = &self.weight[o * self.in_dim..(o + 1) * self.in_dim];
            let mut acc = self.bias.as_ref().map_or(0.0, |b| b[o]);
            for (w, xi) in row.iter().zip(x) {
                acc += w * xi;
            }
            *yo = acc;
        }
    }

    /// Applies the map to every node row.
    pub fn apply_rows(&self, h: &NodeFeatures) -> NodeFeatures {
        let n = h.num_nodes();
        let mut out = NodeFeatures::zeros(n, self.out_dim);
        for i in 0..n {
            self.apply(h.node(i), out.node_mut(i));
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EdgeTypeParams {
    /// Self term.
    pub l1: Linear,
    /// Neighbor values.
    pub l2: Linear,
    /// Queries (no bias).
    pub l3: Linear,
    /// Keys (no bias).
    pub l4: Linear,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams {
    pub ap: EdgeTypeParams,
    pub ue: EdgeTypeParams,
    pub norm_gain: Vec<f64>,
    pub norm_offset: Vec<f64>,
}

impl LayerParams {
    pub fn edge_type(&self, ty: EdgeType) -> &EdgeTypeParams {
        match ty {
            EdgeType::Ap => &self.ap,
            EdgeType::Ue => &self.ue,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GnnWeights {
    pub config: GnnConfig,
    pub layers: Vec<LayerParams>,
    pub output: Linear,
    pub feature_stats: FeatureStats,
}

impl GnnWeights {
    /// All-zero weights and biases, unit norm gains, identity statistics.
    pub fn zeros(config: GnnConfig) -> Result<Self> {
        config.validate()?;
        let d = config.hidden_dim;
        let edge = |din| EdgeTypeParams {
            l1: Linear::zeros(d, din, true),
            l2: Linear::zeros(d, din, true),
            l3: Linear::zeros(d, din, false),
            l4: Linear::zeros(d, din, false),
        };
        let layers = (0..config.num_layers)
            .map(|t| LayerParams {
                ap: edge(config.layer_in(t)),
                ue: edge(config.layer_in(t)),
                norm_gain: vec![1.0; d],
                norm_offset: vec![0.0; d],
            })
            .collect();
        Ok(Self {
            config,
            layers,
            output: Linear::zeros(config.out_dim, d, true),
            feature_stats: FeatureStats::identity(),
        })
    }

    /// Glorot-uniform weights and small uniform biases from a seeded ChaCha20
    /// stream, in canonical tensor order.
    pub fn random(config: GnnConfig, seed: u64) -> Result<Self> {
        let mut w = Self::zeros(config)?;
        let mut rng = rng_from_seed(seed);
        for (spec, data) in config.parameter_specs().iter().zip(w.parameters_mut()) {
            let range = match spec.shape.as_slice() {
                [out, inp] => sqrt(6.0 / (out + inp) as f64),
                _ if spec.name.ends_with(".gain") || spec.name.ends_with(".offset") => continue,
                _ => 0.1,
            };
            data.iter_mut().for_each(|v| *v = rng.random_range(-range..range));
        }
        Ok(w)
    }

    /// Mutable parameter buffers in [`GnnConfig::parameter_specs`] order.
    fn parameters_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out: Vec<&mut Vec<f64>> = Vec::new();
        for layer in &mut self.layers {
            let LayerParams {
                ap,
                ue,
                norm_gain,
                norm_offset,
            } = layer;
            for e in [ap, ue] {
                out.push(&mut e.l1.weight);
                out.push(e.l1.bias.as_mut().expect("l1 has a bias"));
                out.push(&mut e.l2.weight);
                out.push(e.l2.bias.as_mut().expect("l2 has a bias"));
                out.push(&mut e.l3.weight);
                out.push(&mut e.l4.weight);
            }
            out.push(norm_gain);
            out.push(norm_offset);
        }
        out.push(&mut self.output.weight);
        out.push(self.output.bias.as_mut().expect("output has a bias"));
        out
    }

    fn parameters(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for layer in &self.layers {
            for e in [&layer.ap, &layer.ue] {
                out.push(&e.l1.weight);
                out.push(e.l1.bias.as_deref().unwrap_or(&[]));
                out.push(&e.l2.weight);
                out.push(e.l2.bias.as_deref().unwrap_or(&[]));
                out.push(&e.l3.weight);
                out.push(&e.l4.weight);
            }
            out.push(&layer.norm_gain);
            out.push(&layer.norm_offset);
        }
        out.push(&self.output.weight);
        out.push(self.output.bias.as_deref().unwrap_or(&[]));
        out
    }

    /// Every tensor (parameters, then feature statistics) with its name and
    /// shape, in canonical order.
    pub fn named_tensors(&self) -> Vec<(TensorSpec, Vec<f64>)> {
        let s = &self.feature_stats;
        let stats: [&[f64]; 4] = [&s.input_mean, &s.input_std, &s.output_mean, &s.output_std];
        self.config
            .tensor_specs()
            .into_iter()
            .zip(self.parameters().into_iter().chain(stats))
            .map(|(spec, data)| (spec, data.to_vec()))
            .collect()
    }

    /// Assembles weights from named tensors, checking names and shapes against
    /// `config` in canonical order.
    pub fn from_named_tensors(
        config: GnnConfig,
        mut tensors: BTreeMap<String, (Vec<usize>, Vec<f64>)>,
    ) -> Result<Self> {
        let mut w = Self::zeros(config)?;
        let specs = config.tensor_specs();
        let mut values = Vec::with_capacity(specs.len());
        for spec in &specs {
            let Some((shape, data)) = tensors.remove(&spec.name) else {
                return Err(Error::MissingParameter(spec.name.clone()));
            };
            if shape != spec.shape {
                return Err(Error::ShapeMismatch(format!(
                    "{}: expected {:?}, found {:?}",
                    spec.name, spec.shape, shape
                )));
            }
            if data.len() != spec.len() {
                return Err(Error::ShapeMismatch(format!(
                    "{}: shape {:?} needs {} values, found {}",
                    spec.name,
                    spec.shape,
                    spec.len(),
                    data.len()
                )));
            }
            values.push(data);
        }
        if let Some(name) = tensors.into_keys().next() {
            return Err(Error::UnexpectedParameter(name));
        }
        let n_params = config.parameter_specs().len();
        for (dst, src) in w.parameters_mut().into_iter().zip(&values[..n_params]) {
            dst.copy_from_slice(src);
        }
        let stats = &values[n_params..];
        let fs = &mut w.feature_stats;
        fs.input_mean.copy_from_slice(&stats[0]);
        fs.input_std.copy_from_slice(&stats[1]);
        fs.output_mean.copy_from_slice(&stats[2]);
        fs.output_std.copy_from_slice(&stats[3]);
        fs.validate()?;
        Ok(w)
    }
}

/// Outgoing edges grouped by source, keeping edge-list order within a group.
struct Adjacency {
    offsets: Vec<usize>,
    /// `(edge id, target)`.
    entries: Vec<(usize, usize)>,
}

impl Adjacency {
    fn new(num_nodes: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut offsets = vec![0usize; num_nodes + 1];
        for &(s, t) in edges {
            if s >= num_nodes || t >= num_nodes {
                return Err(Error::InvalidArgument("edge endpoint out of range"));
            }
            offsets[s + 1] += 1;
        }
        for i in 0..num_nodes {
            offsets[i + 1] += offsets[i];
        }
        let mut fill = offsets.clone();
        let mut entries = vec![(0, 0); edges.len()];
        for (e, &(s, t)) in edges.iter().enumerate() {
            entries[fill[s]] = (e, t);
            fill[s] += 1;
        }
        Ok(Self { offsets, entries })
    }

    #[inline]
    fn neighbors(&self, i: usize) -> &[(usize, usize)] {
        &self.entries[self.offsets[i]..self.offsets[i + 1]]
    }
}

fn edges_of(graph: &CfGraph, ty: EdgeType) -> &[(usize, usize)] {
    match ty {
        EdgeType::Ap => &graph.edges_ap,
        EdgeType::Ue => &graph.edges_ue,
    }
}

fn check_width(h: &NodeFeatures, graph: &CfGraph, width: usize) -> Result<()> {
    if h.width != width || h.num_nodes() != graph.num_nodes() {
        return Err(Error::ShapeMismatch(format!(
            "node state is {}x{}, expected {}x{}",
            h.num_nodes(),
            h.width,
            graph.num_nodes(),
            width
        )));
    }
    Ok(())
}

fn softmax_per_source(adj: &Adjacency, q: &NodeFeatures, k: &NodeFeatures, num_edges: usize) -> Vec<f64> {
    let scale = 1.0 / sqrt(q.width as f64);
    let mut alpha = vec![0.0; num_edges];
    let mut logits = Vec::new();
    for i in 0..q.num_nodes() {
        let nbrs = adj.neighbors(i);
        if nbrs.is_empty() {
            continue;
        }
        let qi = q.node(i);
        logits.clear();
        logits.extend(nbrs.iter().map(|&(_, j)| {
            qi.iter().zip(k.node(j)).map(|(a, b)| a * b).sum::<f64>() * scale
        }));
        let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for l in logits.iter_mut() {
            *l = exp(*l - top);
            total += *l;
        }
        for (&(e, _), l) in nbrs.iter().zip(&logits) {
            alpha[e] = l / total;
        }
    }
    alpha
}

/// Attention weights of one edge type, one per edge in the graph's edge-list
/// order. Each source's weights over its out-neighbors sum to one.
pub fn attention_coefficients(
    layer: &LayerParams,
    ty: EdgeType,
    graph: &CfGraph,
    h: &NodeFeatures,
) -> Result<Vec<f64>> {
    let p = layer.edge_type(ty);
    check_width(h, graph, p.l3.in_dim)?;
    let edges = edges_of(graph, ty);
    let adj = Adjacency::new(graph.num_nodes(), edges)?;
    Ok(softmax_per_source(&adj, &p.l3.apply_rows(h), &p.l4.apply_rows(h), edges.len()))
}

/// Layer normalization of each row with learned gain and offset.
fn layer_norm(h: &mut NodeFeatures, gain: &[f64], offset: &[f64]) {
    let w = h.width as f64;
    for row in h.data.chunks_exact_mut(gain.len()) {
        let mean = row.iter().sum::<f64>() / w;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / w;
        let inv = 1.0 / sqrt(var + LAYER_NORM_EPS);
        for ((v, g), b) in row.iter_mut().zip(gain).zip(offset) {
            *v = (*v - mean) * inv * g + b;
        }
    }
}

/// One attention layer: both edge types, sum, ReLU, layer normalization.
pub fn layer_forward(layer: &LayerParams, graph: &CfGraph, h: &NodeFeatures) -> Result<NodeFeatures> {
    let n = graph.num_nodes();
    let d = layer.norm_gain.len();
    let mut out = NodeFeatures::zeros(n, d);
    for ty in EdgeType::ALL {
        let p = layer.edge_type(ty);
        check_width(h, graph, p.l1.in_dim)?;
        let edges = edges_of(graph, ty);
        let adj = Adjacency::new(n, edges)?;
        let own = p.l1.apply_rows(h);
        let values = p.l2.apply_rows(h);
        let alpha = softmax_per_source(&adj, &p.l3.apply_rows(h), &p.l4.apply_rows(h), edges.len());
        for i in 0..n {
            let acc = out.node_mut(i);
            for (a, s) in acc.iter_mut().zip(own.node(i)) {
                *a += s;
            }
            for &(e, j) in adj.neighbors(i) {
                let w = alpha[e];
                for (a, v) in acc.iter_mut().zip(values.node(j)) {
                    *a += w * v;
                }
            }
        }
    }
    out.data.iter_mut().for_each(|v| *v = v.max(0.0));
    layer_norm(&mut out, &layer.norm_gain, &layer.norm_offset);
    Ok(out)
}

/// Runs all layers and the output map on a graph carrying standardized input
/// features; returns standardized output features.
pub fn forward_raw(weights: &GnnWeights, graph: &CfGraph) -> Result<NodeFeatures> {
    let mut h = graph.node_features.clone();
    check_width(&h, graph, weights.config.in_dim)?;
    for layer in &weights.layers {
        h = layer_forward(layer, graph, &h)?;
    }
    Ok(weights.output.apply_rows(&h))
}

/// Graph with standardized input features for channel `g`.
pub fn prepare_graph(g: &ChannelMatrix, weights: &GnnWeights) -> Result<CfGraph> {
    if weights.config.in_dim != INPUT_FEATURES || weights.config.out_dim != OUTPUT_FEATURES {
        return Err(Error::ShapeMismatch(format!(
            "network maps {} to {} features, the pipeline needs {} to {}",
            weights.config.in_dim, weights.config.out_dim, INPUT_FEATURES, OUTPUT_FEATURES
        )));
    }
    let features = input_features(g, &weights.feature_stats)?;
    build_graph(g.num_aps(), g.num_ues()).with_features(features)
}

/// Full pipeline: features, network, deprocessing and postprocessing.
pub fn forward(g: &ChannelMatrix, weights: &GnnWeights) -> Result<Precoder> {
    let graph = prepare_graph(g, weights)?;
    let out = forward_raw(weights, &graph)?;
    deprocess_and_postprocess(g, &out, &weights.feature_stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{generate_scenario, EnvironmentKind, EnvironmentSpec};
    use crate::graph::permute_graph;
    use crate::linalg::cabs;
    use crate::system::SystemConfig;

    fn scenario(m: usize, k: usize, seed: u64) -> ChannelMatrix {
        let env = EnvironmentSpec::preset(EnvironmentKind::LoS60GHz);
        let cfg = SystemConfig::new(m, k, env.rho_d).unwrap();
        generate_scenario(cfg, &env, seed).unwrap().channel
    }

    fn random_features(n: usize, w: usize, seed: u64) -> NodeFeatures {
        let mut rng = rng_from_seed(seed);
        NodeFeatures::from_vec(w, (0..n * w).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn parameter_counts() {
        let tiny = GnnConfig {
            num_layers: 1,
            hidden_dim: 1,
            in_dim: 1,
            out_dim: 1,
        };
        // per type: l1 (w, b), l2 (w, b), l3, l4 = 6; two types, norm gain/offset, output (w, b)
        assert_eq!(count_parameters(&tiny), 6 * 2 + 2 + 2);
        let n = count_parameters(&GnnConfig::default());
        assert!((20160..=24640).contains(&n), "{n}");
        let d = 22;
        assert_eq!(n, 40 * d * d + 74 * d + 6);
        let wide = count_parameters(&GnnConfig {
            hidden_dim: 44,
            ..Default::default()
        });
        let ratio = wide as f64 / n as f64;
        assert!((3.6..4.0).contains(&ratio), "{ratio}");
    }

    #[test]
    fn attention_rows_are_distributions() {
        let w = GnnWeights::random(GnnConfig::default(), 1).unwrap();
        let graph = build_graph(5, 3);
        let h = random_features(15, 4, 2);
        for ty in EdgeType::ALL {
            let alpha = attention_coefficients(&w.layers[0], ty, &graph, &h).unwrap();
            for i in 0..15 {
                let s: f64 = edges_of(&graph, ty)
                    .iter()
                    .zip(&alpha)
                    .filter(|((src, _), _)| *src == i)
                    .map(|(_, a)| {
                        assert!(*a >= 0.0);
                        *a
                    })
                    .sum();
                assert!((s - 1.0).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn identical_keys_give_uniform_attention() {
        let mut w = GnnWeights::random(GnnConfig::default(), 3).unwrap();
        // keys ignore the node state entirely
        w.layers[0].ap.l4.weight.iter_mut().for_each(|v| *v = 0.0);
        let graph = build_graph(4, 5);
        let h = random_features(20, 4, 4);
        let alpha = attention_coefficients(&w.layers[0], EdgeType::Ap, &graph, &h).unwrap();
        assert!(alpha.iter().all(|a| (a - 0.25).abs() <= 1e-12));
    }

    #[test]
    fn softmax_ignores_per_source_shifts() {
        // a common key offset adds the same constant to every logit of a source
        let w = GnnWeights::random(GnnConfig::default(), 5).unwrap();
        let graph = build_graph(4, 3);
        let h = random_features(12, 4, 6);
        let p = &w.layers[0].ue;
        let adj = Adjacency::new(12, &graph.edges_ue).unwrap();
        let q = p.l3.apply_rows(&h);
        let k = p.l4.apply_rows(&h);
        let base = softmax_per_source(&adj, &q, &k, graph.edges_ue.len());
        let mut k2 = k.clone();
        let bump = random_features(1, 22, 7);
        for i in 0..12 {
            for (v, b) in k2.node_mut(i).iter_mut().zip(bump.node(0)) {
                *v += b;
            }
        }
        let shifted = softmax_per_source(&adj, &q, &k2, graph.edges_ue.len());
        for (a, b) in base.iter().zip(&shifted) {
            assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn zero_weights_propagate_zeros() {
        let w = GnnWeights::zeros(GnnConfig::default()).unwrap();
        let graph = build_graph(3, 2).with_features(random_features(6, 4, 8)).unwrap();
        let h = layer_forward(&w.layers[0], &graph, &graph.node_features).unwrap();
        assert!(h.data.iter().all(|&v| v == 0.0));
        assert!(forward_raw(&w, &graph).unwrap().data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_node_uses_only_the_self_term() {
        let w = GnnWeights::random(GnnConfig::default(), 9).unwrap();
        let graph = build_graph(1, 1);
        let h = random_features(1, 4, 10);
        let out = layer_forward(&w.layers[0], &graph, &h).unwrap();
        let mut f = vec![0.0; 22];
        let mut tmp = vec![0.0; 22];
        for p in [&w.layers[0].ap, &w.layers[0].ue] {
            p.l1.apply(h.node(0), &mut tmp);
            f.iter_mut().zip(&tmp).for_each(|(a, b)| *a += b);
        }
        let mut expected = NodeFeatures::from_vec(22, f.iter().map(|v| v.max(0.0)).collect()).unwrap();
        layer_norm(&mut expected, &w.layers[0].norm_gain, &w.layers[0].norm_offset);
        for (a, b) in out.data.iter().zip(&expected.data) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn layers_commute_with_relabeling() {
        let w = GnnWeights::random(GnnConfig::default(), 11).unwrap();
        let graph = build_graph(5, 3).with_features(random_features(15, 4, 12)).unwrap();
        let rows = [4, 2, 0, 1, 3];
        let cols = [1, 2, 0];
        let out = forward_raw(&w, &graph).unwrap();
        let permuted = permute_graph(&graph, &rows, &cols).unwrap();
        let out_p = forward_raw(&w, &permuted).unwrap();
        let expected = permute_graph(&build_graph(5, 3).with_features(out).unwrap(), &rows, &cols)
            .unwrap()
            .node_features;
        for (a, b) in out_p.data.iter().zip(&expected.data) {
            assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn forward_is_equivariant_and_feasible() {
        let w = GnnWeights::random(GnnConfig::default(), 13).unwrap();
        let g = scenario(8, 3, 1);
        let d = forward(&g, &w).unwrap();
        assert!(d.satisfies_power(1e-12));
        assert_eq!(d, forward(&g, &w).unwrap());
        let rows = [7, 6, 5, 4, 3, 2, 1, 0];
        let cols = [2, 0, 1];
        let dp = forward(&g.permuted(&rows, &cols), &w).unwrap();
        let expected = d.entries().permute(&rows, &cols);
        let scale = expected.max_abs();
        for (a, b) in dp.entries().as_slice().iter().zip(expected.as_slice()) {
            assert!(cabs(*a - *b) <= 1e-5 * scale);
        }
    }

    #[test]
    fn named_tensor_roundtrip_and_errors() {
        let cfg = GnnConfig::default();
        let w = GnnWeights::random(cfg, 21).unwrap();
        let map = |w: &GnnWeights| -> BTreeMap<String, (Vec<usize>, Vec<f64>)> {
            w.named_tensors().into_iter().map(|(s, d)| (s.name, (s.shape, d))).collect()
        };
        assert_eq!(GnnWeights::from_named_tensors(cfg, map(&w)).unwrap(), w);

        let mut missing = map(&w);
        missing.remove("layers.3.ue.l4.weight");
        assert_eq!(
            GnnWeights::from_named_tensors(cfg, missing),
            Err(Error::MissingParameter("layers.3.ue.l4.weight".into()))
        );

        let mut extra = map(&w);
        extra.insert("layers.9.ap.l1.weight".into(), (vec![1], vec![0.0]));
        assert_eq!(
            GnnWeights::from_named_tensors(cfg, extra),
            Err(Error::UnexpectedParameter("layers.9.ap.l1.weight".into()))
        );

        let narrow = GnnWeights::random(GnnConfig { hidden_dim: 16, ..cfg }, 1).unwrap();
        match GnnWeights::from_named_tensors(cfg, map(&narrow)) {
            Err(Error::ShapeMismatch(msg)) => assert!(msg.starts_with("layers.0.ap.l1.weight:"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }
}
