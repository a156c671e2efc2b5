//! Evaluation of precoders over a dataset and the resulting reports.
//!
//! Per-user spectral efficiencies are pooled across all samples before
//! quantiles and CDFs are taken; per-sample min-SINR/min-SE are kept
//! separately.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use anyhow::{bail, Context, Result};
use olpkit_core::baseline::{maximum_ratio, zero_forcing};
use olpkit_core::gnn::{self, GnnWeights};
use olpkit_core::metrics::{empirical_cdf, SeSummary};
use olpkit_core::olp::SolverConfig;
use olpkit_core::system::{sinr, Precoder, UserMetrics};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetManifest, SampleRecord};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum PrecoderKind {
    Olp,
    Zf,
    Mr,
    Gnn,
}

impl PrecoderKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Olp => "olp",
            Self::Zf => "zf",
            Self::Mr => "mr",
            Self::Gnn => "gnn",
        }
    }
}

impl fmt::Display for PrecoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Precoder `kind` for one stored sample. OLP uses the stored label.
pub fn precoder_for(
    kind: PrecoderKind,
    rec: &SampleRecord,
    rho_d: f64,
    solver: &SolverConfig,
    weights: Option<&GnnWeights>,
) -> Result<Precoder> {
    let g = rec.channel();
    Ok(match kind {
        PrecoderKind::Olp => rec.precoder(),
        PrecoderKind::Zf => zero_forcing(&g, rho_d)?,
        PrecoderKind::Mr => maximum_ratio(&g, rho_d, solver)?,
        PrecoderKind::Gnn => gnn::forward(&g, weights.context("gnn needs weights")?)?,
    })
}

#[derive(Clone, Debug)]
pub struct SampleEval {
    pub index: usize,
    pub seed: u64,
    /// `None` where the precoder failed on this sample.
    pub users: BTreeMap<PrecoderKind, Option<UserMetrics>>,
}

#[derive(Clone, Debug)]
pub struct Evaluation {
    pub precoders: Vec<PrecoderKind>,
    pub samples: Vec<SampleEval>,
}

impl Evaluation {
    /// Per-user SE of `kind` pooled over every sample it succeeded on.
    pub fn pooled_se(&self, kind: PrecoderKind) -> Vec<f64> {
        self.samples
            .iter()
            .filter_map(|s| s.users.get(&kind).and_then(Option::as_ref))
            .flat_map(|u| u.se.iter().copied())
            .collect()
    }

    pub fn failures(&self, kind: PrecoderKind) -> usize {
        self.samples
            .iter()
            .filter(|s| matches!(s.users.get(&kind), Some(None)))
            .count()
    }
}

/// Evaluates every selected precoder on every record, in parallel over
/// samples. Results come back in record order.
pub fn evaluate(
    manifest: &DatasetManifest,
    records: &[SampleRecord],
    precoders: &[PrecoderKind],
    weights: Option<&GnnWeights>,
) -> Result<Evaluation> {
    if precoders.is_empty() {
        bail!("no precoders selected");
    }
    if precoders.contains(&PrecoderKind::Gnn) && weights.is_none() {
        bail!("the gnn precoder needs --weights");
    }
    let rho_d = manifest.rho_d;
    let samples = records
        .par_iter()
        .enumerate()
        .map(|(index, rec)| {
            let g = rec.channel();
            let users = precoders
                .iter()
                .map(|&kind| {
                    let out = precoder_for(kind, rec, rho_d, &manifest.solver, weights)
                        .and_then(|d| Ok(sinr(&g, &d, rho_d)?));
                    let out = match out {
                        Ok(u) => Some(u),
                        Err(e) => {
                            log::warn!("sample {index}: {kind} failed: {e:#}");
                            None
                        }
                    };
                    (kind, out)
                })
                .collect();
            SampleEval {
                index,
                seed: rec.seed,
                users,
            }
        })
        .collect();
    Ok(Evaluation {
        precoders: precoders.to_vec(),
        samples,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrecoderMetrics {
    pub median_se: f64,
    pub p5_se: f64,
    pub mean_se: f64,
    /// Relative loss against OLP at the median, in percent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub median_loss_vs_olp: Option<f64>,
    /// Relative loss against OLP at the 5th percentile, in percent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p95_likely_loss_vs_olp: Option<f64>,
    pub num_user_samples: usize,
    pub failures: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub index: usize,
    pub seed: u64,
    pub min_sinr: BTreeMap<PrecoderKind, Option<f64>>,
    pub min_se: BTreeMap<PrecoderKind, Option<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub environment: String,
    #[serde(rename = "M")]
    pub num_aps: usize,
    #[serde(rename = "K")]
    pub num_ues: usize,
    pub rho_d: f64,
    pub num_samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub dataset: DatasetSummary,
    pub precoders: BTreeMap<PrecoderKind, PrecoderMetrics>,
    pub per_sample: Vec<SampleRow>,
}

impl MetricsReport {
    pub fn build(manifest: &DatasetManifest, eval: &Evaluation) -> Result<Self> {
        let summaries = eval
            .precoders
            .iter()
            .map(|&k| {
                let se = eval.pooled_se(k);
                if se.is_empty() {
                    bail!("{k} failed on every sample");
                }
                Ok((k, (SeSummary::of(&se)?, se)))
            })
            .collect::<Result<BTreeMap<_, _>>>()?;
        let reference = summaries.get(&PrecoderKind::Olp).map(|(s, _)| *s);
        let precoders = summaries
            .iter()
            .map(|(&k, (s, se))| {
                let losses = reference.map(|r| s.losses_vs(&r));
                let m = PrecoderMetrics {
                    median_se: s.median_se,
                    p5_se: s.p5_se,
                    mean_se: se.iter().sum::<f64>() / se.len() as f64,
                    median_loss_vs_olp: losses.map(|l| l.0),
                    p95_likely_loss_vs_olp: losses.map(|l| l.1),
                    num_user_samples: se.len(),
                    failures: eval.failures(k),
                };
                (k, m)
            })
            .collect();
        let per_sample = eval
            .samples
            .iter()
            .map(|s| SampleRow {
                index: s.index,
                seed: s.seed,
                min_sinr: s.users.iter().map(|(&k, u)| (k, u.as_ref().map(UserMetrics::min_sinr))).collect(),
                min_se: s.users.iter().map(|(&k, u)| (k, u.as_ref().map(UserMetrics::min_se))).collect(),
            })
            .collect();
        Ok(Self {
            dataset: DatasetSummary {
                environment: manifest.environment.kind.name().into(),
                num_aps: manifest.num_aps,
                num_ues: manifest.num_ues,
                rho_d: manifest.rho_d,
                num_samples: eval.samples.len(),
            },
            precoders,
            per_sample,
        })
    }
}

/// `precoder,se,cdf` rows of the pooled empirical CDF of every precoder.
pub fn write_cdf_csv<W: Write>(mut out: W, eval: &Evaluation) -> Result<()> {
    writeln!(out, "precoder,se,cdf")?;
    for &k in &eval.precoders {
        let se = eval.pooled_se(k);
        if se.is_empty() {
            continue;
        }
        for (x, p) in empirical_cdf(&se)? {
            writeln!(out, "{k},{x},{p}")?;
        }
    }
    Ok(())
}
