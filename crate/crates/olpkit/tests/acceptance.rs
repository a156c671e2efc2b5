//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.
//!
//! Reference values are recomputed here from first principles (direct sums
//! over channel entries, explicit permutations, hand-built files) instead of
//! going through the library paths under test.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use olpkit::dataset::{read_dataset, write_dataset, DatasetError, DatasetManifest, SampleRecord, MANIFEST_FILE, SAMPLES_FILE};
use olpkit::weights::{assemble, decode_header, decode_weights, encode_weights, TrainingMetadata, WeightsArtifact, WeightsError};
use olpkit_core::baseline::{maximum_ratio, zero_forcing};
use olpkit_core::channel::{draw_fast_fading, generate_scenario, rng_from_seed, EnvironmentKind, EnvironmentSpec};
use olpkit_core::gnn::{count_parameters, forward, GnnConfig, GnnWeights};
use olpkit_core::graph::{build_graph, components_from_features, postprocess, NodeFeatures};
use olpkit_core::linalg::{c64, cabs, CMatrix, C64};
use olpkit_core::metrics::{quantile, SeSummary};
use olpkit_core::olp::{feasibility_residuals, socp_feasible, solve_olp, BisectionResult, FeasibilityProblem, SolverConfig};
use olpkit_core::system::{project_power, sinr, ChannelMatrix, Precoder, SystemConfig};
use rand::seq::SliceRandom;
use rand::Rng;

const ENVS: [EnvironmentKind; 3] = [
    EnvironmentKind::LoS60GHz,
    EnvironmentKind::UrbanNLoS2GHz,
    EnvironmentKind::RuralNLoS450MHz,
];

/// Table 1 scenario sizes.
const TABLE_SIZES: [(usize, usize); 24] = [
    (24, 4), (24, 5), (24, 6), (24, 9),
    (32, 4), (32, 6), (32, 8), (32, 9), (32, 12), (32, 16),
    (48, 8), (48, 12), (48, 16), (48, 24),
    (64, 6), (64, 9), (64, 12), (64, 18), (64, 24), (64, 32),
    (96, 9), (96, 18), (96, 27), (96, 36),
];

fn channel(kind: EnvironmentKind, m: usize, k: usize, seed: u64) -> (ChannelMatrix, f64) {
    let env = EnvironmentSpec::preset(kind);
    let cfg = SystemConfig::new(m, k, env.rho_d).unwrap();
    (generate_scenario(cfg, &env, seed).unwrap().channel, env.rho_d)
}

/// SINR from the definition: `ρ|Σ_m g_mk δ_mk|² / (1 + ρ Σ_{l≠k} |Σ_m g_mk δ_ml|²)`.
fn direct_sinr(g: &CMatrix, d: &CMatrix, rho: f64) -> Vec<f64> {
    let (m_aps, k_ues) = (g.rows(), g.cols());
    let gain = |k: usize, l: usize| {
        (0..m_aps).fold(c64(0.0, 0.0), |acc, m| acc + g[(m, k)] * d[(m, l)]).norm_sqr()
    };
    (0..k_ues)
        .map(|k| {
            let interference: f64 = (0..k_ues).filter(|&l| l != k).map(|l| gain(k, l)).sum();
            rho * gain(k, k) / (1.0 + rho * interference)
        })
        .collect()
}

fn direct_min_sinr(g: &CMatrix, d: &CMatrix, rho: f64) -> f64 {
    direct_sinr(g, d, rho).into_iter().fold(f64::INFINITY, f64::min)
}

/// `G^T X` by explicit sums.
fn gt_times(g: &CMatrix, x: &CMatrix) -> CMatrix {
    CMatrix::from_fn(g.cols(), x.cols(), |k, l| {
        (0..g.rows()).fold(c64(0.0, 0.0), |acc, m| acc + g[(m, k)] * x[(m, l)])
    })
}

fn row_norm(a: &CMatrix, m: usize) -> f64 {
    (0..a.cols()).map(|l| a[(m, l)].norm_sqr()).sum::<f64>().sqrt()
}

/// Entry `(i, j)` moves to `(rows[i], cols[j])`.
fn permute(a: &CMatrix, rows: &[usize], cols: &[usize]) -> CMatrix {
    let mut out = CMatrix::zeros(a.rows(), a.cols());
    for i in 0..a.rows() {
        for j in 0..a.cols() {
            out[(rows[i], cols[j])] = a[(i, j)];
        }
    }
    out
}

struct Check {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Check {
    Check {
        pass,
        detail: detail.into(),
    }
}

fn sinr_oracle() -> Check {
    let sizes = [(4, 2), (8, 3), (16, 8)];
    let mut worst: f64 = 0.0;
    for i in 0..200u64 {
        let (m, k) = sizes[i as usize % 3];
        let (g, rho) = channel(ENVS[(i / 3) as usize % 3], m, k, 1000 + i);
        let mut rng = rng_from_seed(5000 + i);
        let raw = draw_fast_fading(m, k, &mut rng).zeta;
        let shrink: f64 = rng.random_range(0.05..1.0);
        let d = project_power(&Precoder(raw.scale(shrink)));
        let reference = direct_sinr(g.entries(), d.entries(), rho);
        let got = sinr(&g, &d, rho).unwrap().sinr;
        for (a, b) in got.iter().zip(&reference) {
            worst = worst.max((a - b).abs() / b.abs().max(f64::MIN_POSITIVE));
        }
    }
    verdict(worst <= 1e-12, format!("200 instances, max relative difference {worst:.2e} (tol 1e-12)"))
}

fn single_user_closed_form() -> Check {
    let cfg = SolverConfig::default();
    let sizes = [1, 2, 4, 8, 16, 24, 32];
    let mut worst: f64 = 0.0;
    for i in 0..50u64 {
        let m = sizes[i as usize % sizes.len()];
        let (g, rho) = channel(ENVS[i as usize % 3], m, 1, 2000 + i);
        let sum: f64 = (0..m).map(|r| cabs(g.entries()[(r, 0)])).sum();
        let exact = rho * sum * sum;
        let t = solve_olp(&g, rho, &cfg).unwrap().t_star;
        worst = worst.max((t - exact).abs() / exact);
    }
    verdict(
        worst <= cfg.epsilon,
        format!("50 instances, max relative gap to ρ(Σ|g_m|)² {worst:.2e} (tol {})", cfg.epsilon),
    )
}

struct Solved {
    g: ChannelMatrix,
    rho: f64,
    result: BisectionResult,
}

fn solve_set() -> Vec<Solved> {
    let cfg = SolverConfig::default();
    let mut out = Vec::new();
    for (m, k, n, base) in [(8, 3, 50u64, 3000u64), (16, 8, 20, 4000)] {
        for i in 0..n {
            let (g, rho) = channel(ENVS[i as usize % 3], m, k, base + i);
            let result = solve_olp(&g, rho, &cfg).unwrap();
            out.push(Solved { g, rho, result });
        }
    }
    out
}

fn certificates(set: &[Solved]) -> Check {
    let cfg = SolverConfig::default();
    let mut worst_res: f64 = 0.0;
    let mut failures = Vec::new();
    for (i, s) in set.iter().enumerate() {
        let r = &s.result;
        let res = feasibility_residuals(&s.g, s.rho, r.t_star, &r.precoder).unwrap();
        worst_res = worst_res.max(res);
        let at = |t| socp_feasible(&FeasibilityProblem { channel: &s.g, rho_d: s.rho, t }, &cfg).unwrap();
        let achieved = direct_min_sinr(s.g.entries(), r.precoder.entries(), s.rho);
        let power_ok = (0..s.g.num_aps()).all(|m| row_norm(r.precoder.entries(), m) <= 1.0 + 1e-6);
        if res > 1e-6
            || !power_ok
            || r.numerical_trouble > 0
            || !at(r.t_star).feasible
            || at(r.t_upper).feasible
            || achieved < r.t_star - 1e-4
        {
            failures.push(i);
        }
    }
    verdict(
        failures.is_empty(),
        format!(
            "{} instances, max residual {worst_res:.2e} (tol 1e-6), failing instances {failures:?}",
            set.len()
        ),
    )
}

fn dominance(set: &[Solved]) -> Check {
    let cfg = SolverConfig::default();
    let (mut zf_gap, mut mr_gap, mut off, mut spread) = (f64::NEG_INFINITY, f64::NEG_INFINITY, 0.0f64, 0.0f64);
    for s in set {
        let t = s.result.t_star;
        let zf = zero_forcing(&s.g, s.rho).unwrap();
        let mr = maximum_ratio(&s.g, s.rho, &cfg).unwrap();
        zf_gap = zf_gap.max((direct_min_sinr(s.g.entries(), zf.entries(), s.rho) - t) / t);
        mr_gap = mr_gap.max((direct_min_sinr(s.g.entries(), mr.entries(), s.rho) - t) / t);
        let a = gt_times(s.g.entries(), zf.entries());
        let k = a.rows();
        let diag = (0..k).map(|i| cabs(a[(i, i)])).fold(0.0, f64::max);
        for i in 0..k {
            for j in (0..k).filter(|&j| j != i) {
                off = off.max(cabs(a[(i, j)]) / diag);
            }
        }
        let z = direct_sinr(s.g.entries(), zf.entries(), s.rho);
        let (lo, hi) = z.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &x| (l.min(x), h.max(x)));
        spread = spread.max((hi - lo) / hi);
    }
    let eps = cfg.epsilon;
    verdict(
        zf_gap <= eps && mr_gap <= eps && off <= 1e-9 && spread <= 1e-9,
        format!(
            "{} samples: max (ZF − t*)/t* {zf_gap:.2e}, max (MR − t*)/t* {mr_gap:.2e} (tol {eps}); \
             ZF off-diagonal {off:.2e}, SINR spread {spread:.2e} (tol 1e-9)",
            set.len()
        ),
    )
}

fn graph_counts() -> Check {
    let mut bad = Vec::new();
    for (m, k) in TABLE_SIZES {
        let g = build_graph(m, k);
        let n = m * k;
        // every ordered pair of distinct nodes sharing an AP or a UE, once per relation
        let expected = n * (k - 1) + n * (m - 1);
        if g.num_nodes() != n || g.num_edges() != expected || expected != m * k * (m + k - 2) {
            bad.push((m, k));
        }
    }
    verdict(bad.is_empty(), format!("24 sizes, mismatches {bad:?}"))
}

fn equivariance() -> Check {
    let w = GnnWeights::random(GnnConfig::default(), 77).unwrap();
    let mut rng = rng_from_seed(91);
    let mut worst: f64 = 0.0;
    for (m, k, base) in [(8usize, 3usize, 6000u64), (16, 8, 7000)] {
        for i in 0..20u64 {
            let (g, _) = channel(ENVS[i as usize % 3], m, k, base + i);
            let mut rows: Vec<usize> = (0..m).collect();
            let mut cols: Vec<usize> = (0..k).collect();
            rows.shuffle(&mut rng);
            cols.shuffle(&mut rng);
            let d = forward(&g, &w).unwrap();
            let gp = ChannelMatrix::new(permute(g.entries(), &rows, &cols));
            let dp = forward(&gp, &w).unwrap();
            let expected = permute(d.entries(), &rows, &cols);
            let scale = expected.max_abs();
            let diff = dp
                .entries()
                .as_slice()
                .iter()
                .zip(expected.as_slice())
                .map(|(a, b)| cabs(*a - *b))
                .fold(0.0, f64::max);
            worst = worst.max(diff / scale);
        }
    }
    verdict(worst <= 1e-5, format!("40 permutations, max relative difference {worst:.2e} (tol 1e-5)"))
}

fn postprocessing() -> Check {
    let mut rng = rng_from_seed(123);
    let (mut y1_err, mut y2_err, mut rows): (f64, f64, f64) = (0.0, 0.0, 0.0);
    let sizes = [(4, 2), (8, 3), (16, 8), (24, 4)];
    for i in 0..60u64 {
        let (m, k) = sizes[i as usize % sizes.len()];
        let (g, _) = channel(ENVS[i as usize % 3], m, k, 8000 + i);
        let raw = NodeFeatures::from_vec(
            6,
            (0..m * k * 6)
                .map(|j| {
                    if j % 2 == 0 {
                        rng.random_range(-40.0..0.0)
                    } else {
                        rng.random_range(0.0..std::f64::consts::TAU)
                    }
                })
                .collect(),
        )
        .unwrap();
        let (y1, y2, y3) = components_from_features(m, k, &raw).unwrap();
        let p = postprocess(&g, &y1, &y2, &y3).unwrap();
        let a1 = gt_times(g.entries(), &p.y1);
        let a2 = gt_times(g.entries(), &p.y2);
        let s1 = a1.norm_inf().max(f64::MIN_POSITIVE);
        let s2 = a2.norm_inf().max(f64::MIN_POSITIVE);
        for r in 0..k {
            for c in 0..k {
                let z: C64 = a1[(r, c)];
                let e1 = if r == c { z.im.abs() } else { cabs(z) };
                y1_err = y1_err.max(e1 / s1);
                if r == c {
                    y2_err = y2_err.max(cabs(a2[(r, c)]) / s2);
                }
            }
        }
        for r in 0..m {
            rows = rows.max(row_norm(p.precoder.entries(), r));
        }
    }
    verdict(
        y1_err <= 1e-9 && y2_err <= 1e-9 && rows <= 1.0 + 1e-12,
        format!(
            "60 instances: G^T y1' off real-diagonal {y1_err:.2e}, diag(G^T y2') {y2_err:.2e} (tol 1e-9·‖A‖∞); \
             max row norm {rows:.15}"
        ),
    )
}

fn parameter_count() -> Check {
    let n = count_parameters(&GnnConfig::default());
    verdict(
        (20160..=24640).contains(&n),
        format!("{n} parameters (band 20160..=24640 around 22.4k)"),
    )
}

fn formats() -> Check {
    let tmp = tempfile::tempdir().unwrap();
    let mut problems = Vec::new();

    // dataset: real labeled samples
    let env = EnvironmentSpec::preset(EnvironmentKind::UrbanNLoS2GHz);
    let solver = SolverConfig::default();
    let records: Vec<SampleRecord> = (0..4u64)
        .map(|i| {
            let (g, rho) = channel(env.kind, 6, 2, 9000 + i);
            let r = solve_olp(&g, rho, &solver).unwrap();
            SampleRecord {
                g_pinv: g.pseudo_inverse().unwrap().clone(),
                g: g.entries().clone(),
                delta_olp: r.precoder.0,
                t_star: r.t_star,
                seed: 9000 + i,
            }
        })
        .collect();
    let dir = tmp.path().join("d");
    let manifest = write_dataset(&dir, &DatasetManifest::new(env, 6, 2, solver, 9000), &records).unwrap();
    let (m2, back) = read_dataset(&dir).unwrap();
    let bits = |a: &CMatrix| a.as_slice().iter().flat_map(|z| [z.re.to_bits(), z.im.to_bits()]).collect::<Vec<_>>();
    let same = m2 == manifest
        && back.len() == records.len()
        && back.iter().zip(&records).all(|(a, b)| {
            bits(&a.g) == bits(&b.g)
                && bits(&a.g_pinv) == bits(&b.g_pinv)
                && bits(&a.delta_olp) == bits(&b.delta_olp)
                && a.t_star.to_bits() == b.t_star.to_bits()
                && a.seed == b.seed
        });
    if !same {
        problems.push("dataset roundtrip");
    }
    // expected layout of the first field, written out by hand
    let blob = fs::read(dir.join(SAMPLES_FILE)).unwrap();
    let mut first = Vec::new();
    first.extend_from_slice(&records[0].g[(0, 0)].re.to_le_bytes());
    first.extend_from_slice(&records[0].g[(0, 0)].im.to_le_bytes());
    if blob.len() != 4 * (48 * 12 + 16) || blob[..16] != first[..] {
        problems.push("dataset byte layout");
    }
    let edit = |f: &dyn Fn(&mut serde_json::Value)| {
        let path = dir.join(MANIFEST_FILE);
        let mut v: serde_json::Value = serde_json::from_slice(&fs::read(&path).unwrap()).unwrap();
        f(&mut v);
        fs::write(&path, serde_json::to_vec(&v).unwrap()).unwrap();
    };
    edit(&|v| v["num_samples"] = 5.into());
    if !matches!(read_dataset(&dir), Err(DatasetError::Truncated { .. })) {
        problems.push("dataset truncation");
    }
    edit(&|v| v["format_version"] = "olpkit-dataset/7".into());
    if !matches!(read_dataset(&dir), Err(DatasetError::Version { .. })) {
        problems.push("dataset version");
    }
    write_dataset(&dir, &manifest, &records).unwrap();
    let mut corrupt = blob.clone();
    corrupt[100] ^= 1;
    fs::write(dir.join(SAMPLES_FILE), corrupt).unwrap();
    if !matches!(read_dataset(&dir), Err(DatasetError::Checksum { .. })) {
        problems.push("dataset checksum");
    }

    // weights
    let artifact = WeightsArtifact {
        weights: GnnWeights::random(GnnConfig::default(), 4).unwrap(),
        training: TrainingMetadata {
            epochs: Some(3),
            ..Default::default()
        },
    };
    let bytes = encode_weights(&artifact);
    match decode_weights(&bytes) {
        Ok(b) => {
            let flat = |w: &GnnWeights| {
                w.named_tensors()
                    .into_iter()
                    .map(|(s, d)| (s.name, d.iter().map(|x| x.to_bits()).collect::<Vec<_>>()))
                    .collect::<BTreeMap<_, _>>()
            };
            if flat(&b.weights) != flat(&artifact.weights) || b.training != artifact.training {
                problems.push("weights roundtrip");
            }
        }
        Err(_) => problems.push("weights roundtrip"),
    }
    let narrow = encode_weights(&WeightsArtifact {
        weights: GnnWeights::random(GnnConfig { hidden_dim: 16, ..Default::default() }, 4).unwrap(),
        training: TrainingMetadata::default(),
    });
    let (mut header, blob16) = decode_header(&narrow).unwrap();
    header.config.hidden_dim = 22;
    match decode_weights(&assemble(&header, blob16)) {
        Err(WeightsError::ShapeMismatch(msg)) if msg.starts_with("layers.0.ap.l1.weight") => {}
        _ => problems.push("weights shape error"),
    }
    let (mut header, blob22) = decode_header(&bytes).unwrap();
    header.tensors.retain(|t| t.name != "output.bias");
    if !matches!(decode_weights(&assemble(&header, blob22)), Err(WeightsError::MissingParameter(n)) if n == "output.bias") {
        problems.push("weights missing parameter");
    }
    let mut flipped = bytes.clone();
    let n = flipped.len();
    flipped[n - 1] ^= 0x80;
    if !matches!(decode_weights(&flipped), Err(WeightsError::Checksum { .. })) {
        problems.push("weights checksum");
    }
    verdict(
        problems.is_empty(),
        if problems.is_empty() {
            "dataset and weights bit-exact; truncation, version, checksum, shape and missing-name errors raised".into()
        } else {
            format!("failed: {problems:?}")
        },
    )
}

fn quantile_convention() -> Check {
    let v: Vec<f64> = (1..=100).map(f64::from).collect();
    let (med, p5) = (quantile(&v, 0.5).unwrap(), quantile(&v, 0.05).unwrap());
    let s = SeSummary::of(&v).unwrap();
    verdict(
        med == 50.5 && p5 == 5.95 && s.median_se == med && s.p5_se == p5,
        format!("median {med}, p5 {p5} (expected 50.5, 5.95)"),
    )
}

fn run(name: &str, budget: Option<Duration>, f: impl FnOnce() -> Check) -> bool {
    let start = Instant::now();
    let out = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        verdict(false, format!("panicked: {msg}"))
    });
    let elapsed = start.elapsed();
    let in_budget = budget.is_none_or(|b| elapsed <= b);
    let pass = out.pass && in_budget;
    let budget_note = budget.map_or(String::new(), |b| format!(", budget {:.0?}", b));
    println!(
        "{} {name}: {} [{:.2?}{budget_note}]",
        if pass { "PASS" } else { "FAIL" },
        out.detail,
        elapsed
    );
    pass
}

fn main() -> ExitCode {
    let mut ok = true;
    ok &= run("SINR oracle", Some(Duration::from_secs(1)), sinr_oracle);
    ok &= run("K=1 closed form", Some(Duration::from_secs(30)), single_user_closed_form);
    let start = Instant::now();
    let set = catch_unwind(solve_set).ok();
    let solve_time = start.elapsed();
    match &set {
        Some(set) => {
            let budget = Duration::from_secs(300).saturating_sub(solve_time);
            ok &= run("B-SOCP certificates", Some(budget), || {
                let mut c = certificates(set);
                c.detail.push_str(&format!("; solves took {solve_time:.2?}"));
                c
            });
            ok &= run("Dominance over ZF and MR", None, || dominance(set));
        }
        None => {
            println!("FAIL B-SOCP certificates: solve_olp panicked");
            println!("FAIL Dominance over ZF and MR: no solved instances");
            ok = false;
        }
    }
    ok &= run("Graph combinatorics", None, graph_counts);
    ok &= run("Equivariance", None, equivariance);
    ok &= run("Postprocessing identities", None, postprocessing);
    ok &= run("Parameter count", None, parameter_count);
    ok &= run("Format roundtrips", None, formats);
    ok &= run("Quantile convention", None, quantile_convention);
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
