//! AP/UE channel graph and the feature transforms around the network.
//!
//! Node `π(m, k) = m·K + k` stands for the link between AP `m` and UE `k`.
//! Two nodes are joined when they share an AP (AP-type edge) or a UE (UE-type
//! edge); both directions are listed.
//!
//! Input features per node are `(log2|g|, phase g, log2|g†|, phase g†)` and
//! outputs are the log-magnitude and phase of the three precoder components
//! `Y1, Y2, Y3`. Magnitudes are clamped at `2^-60`; clamped entries get phase
//! 0 and map back to exact zeros. Everything is standardized with frozen
//! [`FeatureStats`].

use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::{cabs, from_polar, phase, CMatrix, C64};
use crate::math::{exp2, log2, sqrt};
use crate::olp::decompose_precoder;
use crate::system::{project_power, ChannelMatrix, Precoder};
use crate::{Error, Result};

pub const INPUT_FEATURES: usize = 4;
pub const OUTPUT_FEATURES: usize = 6;
/// `log2` of the smallest magnitude represented.
pub const LOG_MAGNITUDE_FLOOR: f64 = -60.0;

/// Row-major `num_nodes × width` real matrix.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NodeFeatures {
    pub width: usize,
    pub data: Vec<f64>,
}

impl NodeFeatures {
    pub fn zeros(num_nodes: usize, width: usize) -> Self {
        Self {
            width,
            data: vec![0.0; num_nodes * width],
        }
    }

    pub fn from_vec(width: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || data.len() % width != 0 {
            return Err(Error::InvalidArgument("feature data is not a whole number of rows"));
        }
        Ok(Self { width, data })
    }

    #[inline]
    pub fn num_nodes(&self) -> usize {
        if self.width == 0 {
            0
        } else {
            self.data.len() / self.width
        }
    }

    #[inline]
    pub fn node(&self, i: usize) -> &[f64] {
        &self.data[i * self.width..(i + 1) * self.width]
    }

    #[inline]
    pub fn node_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.width..(i + 1) * self.width]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CfGraph {
    pub num_aps: usize,
    pub num_ues: usize,
    /// Sorted `(source, target)` pairs sharing an AP.
    pub edges_ap: Vec<(usize, usize)>,
    /// Sorted `(source, target)` pairs sharing a UE.
    pub edges_ue: Vec<(usize, usize)>,
    /// Empty (width 0) for a topology-only graph.
    pub node_features: NodeFeatures,
}

#[inline]
pub fn node_index(m: usize, k: usize, num_ues: usize) -> usize {
    m * num_ues + k
}

impl CfGraph {
    pub fn num_nodes(&self) -> usize {
        self.num_aps * self.num_ues
    }

    pub fn num_edges(&self) -> usize {
        self.edges_ap.len() + self.edges_ue.len()
    }

    pub fn with_features(mut self, features: NodeFeatures) -> Result<Self> {
        if features.num_nodes() != self.num_nodes() {
            return Err(Error::InvalidArgument("feature rows must match node count"));
        }
        self.node_features = features;
        Ok(self)
    }
}

/// Topology of the `M·K`-node graph, `MK(M+K−2)` directed edges.
pub fn build_graph(num_aps: usize, num_ues: usize) -> CfGraph {
    let mut edges_ap = Vec::with_capacity(num_aps * num_ues * num_ues.saturating_sub(1));
    let mut edges_ue = Vec::with_capacity(num_aps * num_ues * num_aps.saturating_sub(1));
    for m in 0..num_aps {
        for k in 0..num_ues {
            let i = node_index(m, k, num_ues);
            for k2 in (0..num_ues).filter(|&k2| k2 != k) {
                edges_ap.push((i, node_index(m, k2, num_ues)));
            }
            for m2 in (0..num_aps).filter(|&m2| m2 != m) {
                edges_ue.push((i, node_index(m2, k, num_ues)));
            }
        }
    }
    // generated in (source, target) order already; sorting keeps that explicit
    edges_ap.sort_unstable();
    edges_ue.sort_unstable();
    CfGraph {
        num_aps,
        num_ues,
        edges_ap,
        edges_ue,
        node_features: NodeFeatures::zeros(0, 0),
    }
}

fn check_permutation(p: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    if p.len() != n {
        return Err(Error::InvalidArgument("permutation has the wrong length"));
    }
    for &v in p {
        if v >= n || seen[v] {
            return Err(Error::InvalidArgument("not a permutation"));
        }
        seen[v] = true;
    }
    Ok(())
}

/// Relabels AP `m → rows[m]` and UE `k → cols[k]`, moving features with
/// their nodes.
pub fn permute_graph(graph: &CfGraph, rows: &[usize], cols: &[usize]) -> Result<CfGraph> {
    let (m_aps, k_ues) = (graph.num_aps, graph.num_ues);
    check_permutation(rows, m_aps)?;
    check_permutation(cols, k_ues)?;
    let map = |i: usize| node_index(rows[i / k_ues], cols[i % k_ues], k_ues);
    let relabel = |edges: &[(usize, usize)]| {
        let mut e: Vec<_> = edges.iter().map(|&(a, b)| (map(a), map(b))).collect();
        e.sort_unstable();
        e
    };
    let width = graph.node_features.width;
    let mut features = NodeFeatures::zeros(graph.node_features.num_nodes(), width);
    for i in 0..graph.node_features.num_nodes() {
        features.node_mut(map(i)).copy_from_slice(graph.node_features.node(i));
    }
    Ok(CfGraph {
        num_aps: m_aps,
        num_ues: k_ues,
        edges_ap: relabel(&graph.edges_ap),
        edges_ue: relabel(&graph.edges_ue),
        node_features: features,
    })
}

/// `(log2 max(|z|, 2^-60), phase)`, with phase 0 for clamped entries.
#[inline]
pub fn log_polar(z: C64) -> (f64, f64) {
    let a = cabs(z);
    if a > exp2(LOG_MAGNITUDE_FLOOR) {
        (log2(a), phase(z))
    } else {
        (LOG_MAGNITUDE_FLOOR, 0.0)
    }
}

/// Inverse of [`log_polar`]; anything at or below the floor becomes 0.
#[inline]
pub fn from_log_polar(log_mag: f64, phase: f64) -> C64 {
    if log_mag <= LOG_MAGNITUDE_FLOOR {
        C64::new(0.0, 0.0)
    } else {
        from_polar(exp2(log_mag), phase)
    }
}

/// Per-feature mean and (population) standard deviation.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FeatureStats {
    pub input_mean: [f64; INPUT_FEATURES],
    pub input_std: [f64; INPUT_FEATURES],
    pub output_mean: [f64; OUTPUT_FEATURES],
    pub output_std: [f64; OUTPUT_FEATURES],
}

impl Default for FeatureStats {
    fn default() -> Self {
        Self::identity()
    }
}

fn moments<const W: usize>(sets: &[&NodeFeatures]) -> Result<([f64; W], [f64; W])> {
    let mut n = 0usize;
    let mut mean = [0.0; W];
    for f in sets {
        if f.width != W {
            return Err(Error::InvalidArgument("feature width mismatch"));
        }
        for row in f.data.chunks_exact(W) {
            n += 1;
            for j in 0..W {
                mean[j] += row[j];
            }
        }
    }
    if n == 0 {
        return Err(Error::InvalidArgument("no samples to fit statistics on"));
    }
    mean.iter_mut().for_each(|v| *v /= n as f64);
    let mut var = [0.0; W];
    for f in sets {
        for row in f.data.chunks_exact(W) {
            for j in 0..W {
                let d = row[j] - mean[j];
                var[j] += d * d;
            }
        }
    }
    // a constant feature (e.g. Y3 ≡ 0 when M = K) keeps unit scale
    let std = var.map(|v| {
        let s = sqrt(v / n as f64);
        if s > 1e-12 {
            s
        } else {
            1.0
        }
    });
    Ok((mean, std))
}

impl FeatureStats {
    /// Zero mean, unit std: leaves features untouched.
    pub fn identity() -> Self {
        Self {
            input_mean: [0.0; INPUT_FEATURES],
            input_std: [1.0; INPUT_FEATURES],
            output_mean: [0.0; OUTPUT_FEATURES],
            output_std: [1.0; OUTPUT_FEATURES],
        }
    }

    /// Fits statistics on raw (unstandardized) input and output features.
    pub fn fit(inputs: &[&NodeFeatures], outputs: &[&NodeFeatures]) -> Result<Self> {
        let (input_mean, input_std) = moments::<INPUT_FEATURES>(inputs)?;
        let (output_mean, output_std) = moments::<OUTPUT_FEATURES>(outputs)?;
        Ok(Self {
            input_mean,
            input_std,
            output_mean,
            output_std,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |x: &f64| x.is_finite();
        let pos = |x: &f64| *x > 0.0 && x.is_finite();
        if self.input_mean.iter().all(ok)
            && self.output_mean.iter().all(ok)
            && self.input_std.iter().all(pos)
            && self.output_std.iter().all(pos)
        {
            Ok(())
        } else {
            Err(Error::InvalidArgument("feature statistics need finite means and positive stds"))
        }
    }

    pub fn standardize_inputs(&self, f: &mut NodeFeatures) {
        standardize(f, &self.input_mean, &self.input_std);
    }

    pub fn standardize_outputs(&self, f: &mut NodeFeatures) {
        standardize(f, &self.output_mean, &self.output_std);
    }

    pub fn destandardize_outputs(&self, f: &mut NodeFeatures) {
        for row in f.data.chunks_exact_mut(OUTPUT_FEATURES) {
            for j in 0..OUTPUT_FEATURES {
                row[j] = row[j] * self.output_std[j] + self.output_mean[j];
            }
        }
    }
}

fn standardize(f: &mut NodeFeatures, mean: &[f64], std: &[f64]) {
    let w = mean.len();
    for row in f.data.chunks_exact_mut(w) {
        for j in 0..w {
            row[j] = (row[j] - mean[j]) / std[j];
        }
    }
}

/// Unstandardized input features, one row per node.
pub fn raw_input_features(g: &ChannelMatrix) -> Result<NodeFeatures> {
    let pinv = g.pseudo_inverse()?;
    let (m_aps, k_ues) = g.entries().shape();
    let mut f = NodeFeatures::zeros(m_aps * k_ues, INPUT_FEATURES);
    for m in 0..m_aps {
        for k in 0..k_ues {
            let (a, pa) = log_polar(g.entries()[(m, k)]);
            let (b, pb) = log_polar(pinv[(m, k)]);
            f.node_mut(node_index(m, k, k_ues)).copy_from_slice(&[a, pa, b, pb]);
        }
    }
    Ok(f)
}

pub fn input_features(g: &ChannelMatrix, stats: &FeatureStats) -> Result<NodeFeatures> {
    let mut f = raw_input_features(g)?;
    stats.standardize_inputs(&mut f);
    Ok(f)
}

/// Unstandardized output features of `delta`, from its `(Y1, Y2, Y3)` split.
pub fn raw_target_features(g: &ChannelMatrix, delta: &Precoder) -> Result<NodeFeatures> {
    let (y1, y2, y3) = decompose_precoder(g, delta)?;
    let (m_aps, k_ues) = g.entries().shape();
    let mut f = NodeFeatures::zeros(m_aps * k_ues, OUTPUT_FEATURES);
    for m in 0..m_aps {
        for k in 0..k_ues {
            let row = f.node_mut(node_index(m, k, k_ues));
            for (c, y) in [&y1, &y2, &y3].into_iter().enumerate() {
                let (lm, ph) = log_polar(y[(m, k)]);
                row[2 * c] = lm;
                row[2 * c + 1] = ph;
            }
        }
    }
    Ok(f)
}

pub fn target_features(g: &ChannelMatrix, delta: &Precoder, stats: &FeatureStats) -> Result<NodeFeatures> {
    let mut f = raw_target_features(g, delta)?;
    stats.standardize_outputs(&mut f);
    Ok(f)
}

/// Rebuilds `(Y1, Y2, Y3)` from unstandardized output features.
pub fn components_from_features(
    num_aps: usize,
    num_ues: usize,
    raw: &NodeFeatures,
) -> Result<(CMatrix, CMatrix, CMatrix)> {
    if raw.width != OUTPUT_FEATURES || raw.num_nodes() != num_aps * num_ues {
        return Err(Error::ShapeMismatch(alloc::format!(
            "output features are {}x{}, expected {}x{}",
            raw.num_nodes(),
            raw.width,
            num_aps * num_ues,
            OUTPUT_FEATURES
        )));
    }
    let build = |c: usize| {
        CMatrix::from_fn(num_aps, num_ues, |m, k| {
            let row = raw.node(node_index(m, k, num_ues));
            from_log_polar(row[2 * c], row[2 * c + 1])
        })
    };
    Ok((build(0), build(1), build(2)))
}

/// Result of the algebraic corrections, before and after power projection.
#[derive(Clone, Debug)]
pub struct Postprocessed {
    /// `G†·real(diag(G^T y1))`.
    pub y1: CMatrix,
    /// `G†·(G^T y2 − diag(G^T y2))`.
    pub y2: CMatrix,
    pub y3: CMatrix,
    /// `project_power(y1 + y2 + y3)`.
    pub precoder: Precoder,
}

/// Forces `G^T y1'` to be real diagonal and `G^T y2'` to have zero diagonal,
/// then sums and projects onto the per-AP power constraint.
pub fn postprocess(g: &ChannelMatrix, y1: &CMatrix, y2: &CMatrix, y3: &CMatrix) -> Result<Postprocessed> {
    let pinv = g.pseudo_inverse()?;
    let gt = |y: &CMatrix| g.entries().transpose_matmul(y);
    let a1 = gt(y1)?;
    let real_diag = CMatrix::from_fn(a1.rows(), a1.cols(), |i, j| {
        if i == j {
            C64::new(a1[(i, i)].re, 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    });
    let y1p = pinv.matmul(&real_diag)?;
    let a2 = gt(y2)?;
    let y2p = pinv.matmul(&a2.sub(&a2.diag_part())?)?;
    let sum = y1p.add(&y2p)?.add(y3)?;
    Ok(Postprocessed {
        y1: y1p,
        y2: y2p,
        y3: y3.clone(),
        precoder: project_power(&Precoder(sum)),
    })
}

/// Network output (standardized, one 6-vector per node) to a feasible precoder.
pub fn deprocess_and_postprocess(
    g: &ChannelMatrix,
    output: &NodeFeatures,
    stats: &FeatureStats,
) -> Result<Precoder> {
    let mut raw = output.clone();
    stats.destandardize_outputs(&mut raw);
    let (m_aps, k_ues) = g.entries().shape();
    let (y1, y2, y3) = components_from_features(m_aps, k_ues, &raw)?;
    Ok(postprocess(g, &y1, &y2, &y3)?.precoder)
}
