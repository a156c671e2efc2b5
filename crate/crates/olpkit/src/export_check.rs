//! Checks that an externally trained weights file runs in this engine and
//! reproduces the trainer's own outputs.
//!
//! A parity file is JSON:
//!
//! ```json
//! { "cases": [ { "M": 4, "K": 2,
//!                "g": [[re, im], ...],          // M×K row-major
//!                "g_pinv": [[re, im], ...],     // optional, M×K
//!                "outputs": [...],              // optional, MK×6 standardized
//!                "precoder": [[re, im], ...] }  // optional, M×K
//! ] }
//! ```

use anyhow::{bail, ensure, Result};
use olpkit_core::gnn::{forward_raw, prepare_graph, GnnWeights};
use olpkit_core::graph::{deprocess_and_postprocess, FeatureStats, NodeFeatures, raw_input_features, raw_target_features};
use olpkit_core::linalg::{c64, cabs, CMatrix};
use olpkit_core::system::ChannelMatrix;
use serde::{Deserialize, Serialize};

use crate::dataset::SampleRecord;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParityCase {
    #[serde(rename = "M")]
    pub num_aps: usize,
    #[serde(rename = "K")]
    pub num_ues: usize,
    pub g: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_pinv: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outputs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub precoder: Option<Vec<[f64; 2]>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParityFile {
    pub cases: Vec<ParityCase>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ParityOutcome {
    pub index: usize,
    pub outputs_rel_err: Option<f64>,
    pub precoder_rel_err: Option<f64>,
}

impl ParityOutcome {
    pub fn worst(&self) -> f64 {
        self.outputs_rel_err.unwrap_or(0.0).max(self.precoder_rel_err.unwrap_or(0.0))
    }
}

fn matrix(rows: usize, cols: usize, pairs: &[[f64; 2]], what: &str) -> Result<CMatrix> {
    ensure!(pairs.len() == rows * cols, "{what} has {} entries, expected {}", pairs.len(), rows * cols);
    Ok(CMatrix::from_vec(rows, cols, pairs.iter().map(|p| c64(p[0], p[1])).collect())?)
}

pub fn pairs(a: &CMatrix) -> Vec<[f64; 2]> {
    a.as_slice().iter().map(|z| [z.re, z.im]).collect()
}

/// `max|a − b| / max|b|`.
fn rel_err(a: impl Iterator<Item = f64>, b: impl Iterator<Item = f64> + Clone) -> f64 {
    let scale = b.clone().map(f64::abs).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    a.zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale
}

impl ParityCase {
    fn channel(&self) -> Result<ChannelMatrix> {
        let g = matrix(self.num_aps, self.num_ues, &self.g, "g")?;
        Ok(match &self.g_pinv {
            Some(p) => ChannelMatrix::with_pinv(g, matrix(self.num_aps, self.num_ues, p, "g_pinv")?)?,
            None => ChannelMatrix::new(g),
        })
    }

    /// Builds a case from this engine's own outputs.
    pub fn from_engine(weights: &GnnWeights, g: &ChannelMatrix) -> Result<Self> {
        let graph = prepare_graph(g, weights)?;
        let out = forward_raw(weights, &graph)?;
        let delta = deprocess_and_postprocess(g, &out, &weights.feature_stats)?;
        Ok(Self {
            num_aps: g.num_aps(),
            num_ues: g.num_ues(),
            g: pairs(g.entries()),
            g_pinv: Some(pairs(g.pseudo_inverse()?)),
            outputs: Some(out.data),
            precoder: Some(pairs(delta.entries())),
        })
    }
}

pub fn check_parity(weights: &GnnWeights, file: &ParityFile) -> Result<Vec<ParityOutcome>> {
    if file.cases.is_empty() {
        bail!("parity file has no cases");
    }
    file.cases
        .iter()
        .enumerate()
        .map(|(index, case)| {
            let g = case.channel()?;
            let graph = prepare_graph(&g, weights)?;
            let out = forward_raw(weights, &graph)?;
            let outputs_rel_err = match &case.outputs {
                Some(reference) => {
                    ensure!(
                        reference.len() == out.data.len(),
                        "case {index}: {} outputs, engine produced {}",
                        reference.len(),
                        out.data.len()
                    );
                    Some(rel_err(out.data.iter().copied(), reference.iter().copied()))
                }
                None => None,
            };
            let precoder_rel_err = match &case.precoder {
                Some(reference) => {
                    let delta = deprocess_and_postprocess(&g, &out, &weights.feature_stats)?;
                    let r = matrix(case.num_aps, case.num_ues, reference, "precoder")?;
                    let scale = r.max_abs().max(f64::MIN_POSITIVE);
                    let diff = delta
                        .entries()
                        .as_slice()
                        .iter()
                        .zip(r.as_slice())
                        .map(|(a, b)| cabs(*a - *b))
                        .fold(0.0, f64::max);
                    Some(diff / scale)
                }
                None => None,
            };
            Ok(ParityOutcome {
                index,
                outputs_rel_err,
                precoder_rel_err,
            })
        })
        .collect()
}

/// Feature statistics of a set of labeled samples (population moments).
pub fn fit_feature_stats(records: &[SampleRecord]) -> Result<FeatureStats> {
    let mut inputs = Vec::with_capacity(records.len());
    let mut outputs = Vec::with_capacity(records.len());
    for rec in records {
        let g = rec.channel();
        inputs.push(raw_input_features(&g)?);
        outputs.push(raw_target_features(&g, &rec.precoder())?);
    }
    let ins: Vec<&NodeFeatures> = inputs.iter().collect();
    let outs: Vec<&NodeFeatures> = outputs.iter().collect();
    Ok(FeatureStats::fit(&ins, &outs)?)
}
