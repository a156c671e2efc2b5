//! Wall-clock timing of each precoder, split into stages.
//!
//! | precoder | preprocess               | solve / infer  | postprocess             |
//! |----------|--------------------------|----------------|-------------------------|
//! | olp      | pseudo-inverse           | bisection      |                         |
//! | zf       | pseudo-inverse           | row scaling    |                         |
//! | mr       |                          | bisection      |                         |
//! | gnn      | pseudo-inverse, features | network        | deprocess + postprocess |

use std::collections::BTreeMap;
use std::hint::black_box;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use olpkit_core::baseline::{maximum_ratio, zero_forcing};
use olpkit_core::gnn::{forward_raw, prepare_graph, GnnWeights};
use olpkit_core::graph::deprocess_and_postprocess;
use olpkit_core::olp::solve_olp;
use olpkit_core::system::ChannelMatrix;
use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetManifest, SampleRecord};
use crate::eval::PrecoderKind;

pub const PREPROCESS: &str = "preprocess";
pub const SOLVE: &str = "solve";
pub const INFER: &str = "infer";
pub const POSTPROCESS: &str = "postprocess";

/// Mean per-sample stage times (ms) of one repetition of one precoder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub repetition: usize,
    pub precoder: PrecoderKind,
    pub stages_ms: BTreeMap<String, f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean_ms: f64,
    /// Sample standard deviation across repetitions (0 for one repetition).
    pub std_ms: f64,
}

impl Stat {
    fn of(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = if xs.len() > 1 {
            xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self {
            mean_ms: mean,
            std_ms: var.sqrt(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    #[serde(rename = "M")]
    pub num_aps: usize,
    #[serde(rename = "K")]
    pub num_ues: usize,
    pub samples_per_repetition: usize,
    pub repetitions: usize,
    pub rows: Vec<TimingRow>,
    /// Per precoder, per stage, plus `total`.
    pub summary: BTreeMap<PrecoderKind, BTreeMap<String, Stat>>,
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Stage times (ms) of one precoder on one sample.
fn time_sample(
    kind: PrecoderKind,
    rec: &SampleRecord,
    manifest: &DatasetManifest,
    weights: Option<&GnnWeights>,
) -> Result<Vec<(&'static str, f64)>> {
    let rho = manifest.rho_d;
    let g = ChannelMatrix::new(rec.g.clone());
    let mut stages = Vec::with_capacity(3);
    if kind != PrecoderKind::Mr {
        let t = Instant::now();
        black_box(g.pseudo_inverse()?);
        stages.push((PREPROCESS, ms_since(t)));
    }
    match kind {
        PrecoderKind::Olp => {
            let t = Instant::now();
            black_box(solve_olp(&g, rho, &manifest.solver)?);
            stages.push((SOLVE, ms_since(t)));
        }
        PrecoderKind::Zf => {
            let t = Instant::now();
            black_box(zero_forcing(&g, rho)?);
            stages.push((SOLVE, ms_since(t)));
        }
        PrecoderKind::Mr => {
            let t = Instant::now();
            black_box(maximum_ratio(&g, rho, &manifest.solver)?);
            stages.push((SOLVE, ms_since(t)));
        }
        PrecoderKind::Gnn => {
            let w = weights.context("the gnn precoder needs --weights")?;
            let t = Instant::now();
            let graph = prepare_graph(&g, w)?;
            stages[0].1 += ms_since(t);
            let t = Instant::now();
            let out = forward_raw(w, &graph)?;
            stages.push((INFER, ms_since(t)));
            let t = Instant::now();
            black_box(deprocess_and_postprocess(&g, &out, &w.feature_stats)?);
            stages.push((POSTPROCESS, ms_since(t)));
        }
    }
    Ok(stages)
}

/// Times every precoder over `records`, `repetitions` times, on the calling
/// thread.
pub fn bench(
    manifest: &DatasetManifest,
    records: &[SampleRecord],
    precoders: &[PrecoderKind],
    weights: Option<&GnnWeights>,
    repetitions: usize,
) -> Result<TimingReport> {
    if repetitions == 0 || records.is_empty() || precoders.is_empty() {
        bail!("bench needs at least one repetition, sample and precoder");
    }
    let mut rows = Vec::new();
    for repetition in 0..repetitions {
        for &kind in precoders {
            let mut sums: BTreeMap<String, f64> = BTreeMap::new();
            for (i, rec) in records.iter().enumerate() {
                let stages = time_sample(kind, rec, manifest, weights)
                    .with_context(|| format!("{kind} on sample {i}"))?;
                for (name, ms) in stages {
                    *sums.entry(name.to_string()).or_default() += ms;
                }
            }
            let n = records.len() as f64;
            sums.values_mut().for_each(|v| *v /= n);
            rows.push(TimingRow {
                repetition,
                precoder: kind,
                stages_ms: sums,
            });
        }
    }
    let mut summary = BTreeMap::new();
    for &kind in precoders {
        let mine: Vec<&TimingRow> = rows.iter().filter(|r| r.precoder == kind).collect();
        let mut stats = BTreeMap::new();
        for stage in mine[0].stages_ms.keys() {
            let xs: Vec<f64> = mine.iter().map(|r| r.stages_ms[stage]).collect();
            stats.insert(stage.clone(), Stat::of(&xs));
        }
        let totals: Vec<f64> = mine.iter().map(|r| r.stages_ms.values().sum()).collect();
        stats.insert("total".into(), Stat::of(&totals));
        summary.insert(kind, stats);
    }
    Ok(TimingReport {
        num_aps: manifest.num_aps,
        num_ues: manifest.num_ues,
        samples_per_repetition: records.len(),
        repetitions,
        rows,
        summary,
    })
}
