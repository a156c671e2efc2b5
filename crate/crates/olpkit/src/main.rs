use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use olpkit::bench::bench;
use olpkit::dataset::{check_record, read_dataset, read_manifest, read_samples, write_dataset, DatasetManifest};
use olpkit::eval::{evaluate, write_cdf_csv, MetricsReport, PrecoderKind};
use olpkit::export_check::{check_parity, fit_feature_stats, ParityFile};
use olpkit::generate::generate_records;
use olpkit::weights::{read_weights, write_weights, TrainingMetadata, WeightsArtifact};
use olpkit_core::channel::{EnvironmentKind, EnvironmentSpec};
use olpkit_core::gnn::{count_parameters, forward, GnnConfig, GnnWeights};
use olpkit_core::olp::SolverConfig;
use olpkit_core::system::SystemConfig;

#[derive(Parser)]
#[command(name = "olpkit", version, about = "Max-min SINR precoding for cell-free massive MIMO")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "OLPKIT_THREADS")]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw random scenarios and label them with the optimal precoder.
    Generate(GenerateArgs),
    /// Evaluate precoders on a dataset; writes metrics.json and cdf.csv.
    Eval(EvalArgs),
    /// Time each precoder stage on a dataset; writes timings.json.
    Bench(BenchArgs),
    /// Re-check a dataset's checksum and every stored sample.
    Verify(VerifyArgs),
    /// Load a weights file, run it, and optionally compare against reference outputs.
    TrainExportCheck(ExportCheckArgs),
    /// Write randomly initialized weights, optionally with feature statistics fitted on a dataset.
    InitWeights(InitWeightsArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Environment: los60, urban2 or rural450.
    #[arg(long)]
    env: String,
    #[arg(long)]
    aps: usize,
    #[arg(long)]
    ues: usize,
    #[arg(long)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Override the environment's downlink SNR (linear).
    #[arg(long)]
    rho_d: Option<f64>,
    /// Relative bisection precision.
    #[arg(long, default_value_t = SolverConfig::default().epsilon)]
    epsilon: f64,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [PrecoderKind::Olp, PrecoderKind::Zf, PrecoderKind::Mr])]
    precoders: Vec<PrecoderKind>,
    /// Weights file, required when `gnn` is selected.
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [PrecoderKind::Olp, PrecoderKind::Zf, PrecoderKind::Mr])]
    precoders: Vec<PrecoderKind>,
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    repetitions: usize,
    /// Only time the first N samples.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long, default_value = "timings.json")]
    out: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    data: PathBuf,
}

#[derive(Args)]
struct ExportCheckArgs {
    #[arg(long)]
    weights: PathBuf,
    /// Run the network on the first samples of this dataset.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    samples: usize,
    /// Reference outputs written by the training side.
    #[arg(long)]
    parity: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
}

#[derive(Args)]
struct InitWeightsArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = GnnConfig::default().num_layers)]
    layers: usize,
    #[arg(long, default_value_t = GnnConfig::default().hidden_dim)]
    hidden_dim: usize,
    /// Fit feature statistics on this dataset instead of using the identity.
    #[arg(long)]
    data: Option<PathBuf>,
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_weights(path: Option<&Path>, precoders: &[PrecoderKind]) -> Result<Option<GnnWeights>> {
    match (path, precoders.contains(&PrecoderKind::Gnn)) {
        (Some(p), _) => Ok(Some(
            read_weights(p).with_context(|| format!("loading {}", p.display()))?.weights,
        )),
        (None, true) => bail!("the gnn precoder needs --weights"),
        (None, false) => Ok(None),
    }
}

fn cmd_generate(a: GenerateArgs) -> Result<()> {
    let kind = EnvironmentKind::from_name(&a.env)
        .with_context(|| format!("unknown environment `{}` (expected los60, urban2 or rural450)", a.env))?;
    let mut env = EnvironmentSpec::preset(kind);
    if let Some(rho) = a.rho_d {
        env.rho_d = rho;
    }
    let config = SystemConfig::new(a.aps, a.ues, env.rho_d)?;
    if !config.is_massive() {
        log::warn!("M = {} ≤ K = {}: not a massive MIMO setting, continuing anyway", a.aps, a.ues);
    }
    let solver = SolverConfig {
        epsilon: a.epsilon,
        ..Default::default()
    };
    solver.validate()?;
    log::info!("generating {} samples of {}x{} in {}", a.count, a.aps, a.ues, kind.name());
    let out = generate_records(config, &env, &solver, a.count, a.seed);
    let manifest = DatasetManifest::new(env, a.aps, a.ues, solver, a.seed);
    let written = write_dataset(&a.out, &manifest, &out.records)?;
    let failed = out.failures.len();
    log::info!(
        "wrote {} samples to {} ({failed} failed)",
        written.num_samples,
        a.out.display()
    );
    if failed * 100 > a.count {
        bail!("{failed} of {} solves failed (more than 1%)", a.count);
    }
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let (manifest, records) = read_dataset(&a.data)?;
    let weights = load_weights(a.weights.as_deref(), &a.precoders)?;
    let eval = evaluate(&manifest, &records, &a.precoders, weights.as_ref())?;
    let report = MetricsReport::build(&manifest, &eval)?;
    fs::create_dir_all(&a.out)?;
    write_json(&a.out.join("metrics.json"), &report)?;
    let csv = a.out.join("cdf.csv");
    write_cdf_csv(BufWriter::new(fs::File::create(&csv)?), &eval)?;
    println!("{:<6} {:>10} {:>10} {:>12} {:>12}", "", "median SE", "p5 SE", "median loss", "p95 loss");
    for (k, m) in &report.precoders {
        let pct = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.2}%"));
        println!(
            "{:<6} {:>10.4} {:>10.4} {:>12} {:>12}",
            k.name(),
            m.median_se,
            m.p5_se,
            pct(m.median_loss_vs_olp),
            pct(m.p95_likely_loss_vs_olp)
        );
    }
    Ok(())
}

fn cmd_bench(a: BenchArgs) -> Result<()> {
    let (manifest, mut records) = read_dataset(&a.data)?;
    if let Some(n) = a.samples {
        records.truncate(n);
    }
    let weights = load_weights(a.weights.as_deref(), &a.precoders)?;
    let report = bench(&manifest, &records, &a.precoders, weights.as_ref(), a.repetitions)?;
    write_json(&a.out, &report)?;
    for (k, stages) in &report.summary {
        let parts: Vec<String> = stages
            .iter()
            .map(|(s, t)| format!("{s} {:.3}±{:.3} ms", t.mean_ms, t.std_ms))
            .collect();
        println!("{:<4} {}", k.name(), parts.join(", "));
    }
    Ok(())
}

fn cmd_verify(a: VerifyArgs) -> Result<bool> {
    let manifest = read_manifest(&a.data)?;
    let records = read_samples(&a.data, &manifest)?;
    let mut bad = 0;
    for (i, rec) in records.iter().enumerate() {
        let problems = check_record(rec, manifest.rho_d);
        if !problems.is_empty() {
            bad += 1;
        }
        for p in problems {
            println!("sample {i}: {p}");
        }
    }
    if bad == 0 {
        println!("ok: {} samples verified", records.len());
    } else {
        println!("FAILED: {bad} of {} samples have violations", records.len());
    }
    Ok(bad == 0)
}

fn cmd_export_check(a: ExportCheckArgs) -> Result<bool> {
    let artifact = read_weights(&a.weights).with_context(|| format!("loading {}", a.weights.display()))?;
    let w = &artifact.weights;
    println!(
        "loaded {} layers, hidden width {}, {} parameters",
        w.config.num_layers,
        w.config.hidden_dim,
        count_parameters(&w.config)
    );
    let mut ok = true;
    if let Some(dir) = &a.data {
        let (_, records) = read_dataset(dir)?;
        for (i, rec) in records.iter().take(a.samples).enumerate() {
            let d = forward(&rec.channel(), w)?;
            let finite = d.entries().as_slice().iter().all(|z| z.re.is_finite() && z.im.is_finite());
            if !finite || !d.satisfies_power(1e-12) {
                println!("sample {i}: output precoder is not finite or violates the power limit");
                ok = false;
            }
        }
    }
    if let Some(path) = &a.parity {
        let file: ParityFile = serde_json::from_slice(&fs::read(path)?)
            .with_context(|| format!("parsing {}", path.display()))?;
        for o in check_parity(w, &file)? {
            let pass = o.worst() <= a.tolerance;
            ok &= pass;
            println!(
                "case {}: outputs {:?}, precoder {:?} -> {}",
                o.index,
                o.outputs_rel_err,
                o.precoder_rel_err,
                if pass { "ok" } else { "MISMATCH" }
            );
        }
    }
    println!("{}", if ok { "ok" } else { "FAILED" });
    Ok(ok)
}

fn cmd_init_weights(a: InitWeightsArgs) -> Result<()> {
    let config = GnnConfig {
        num_layers: a.layers,
        hidden_dim: a.hidden_dim,
        ..Default::default()
    };
    let mut weights = GnnWeights::random(config, a.seed)?;
    let mut training = TrainingMetadata {
        seed: Some(a.seed),
        created_by: Some(format!("olpkit {} init-weights", env!("CARGO_PKG_VERSION"))),
        ..Default::default()
    };
    if let Some(dir) = &a.data {
        let (_, records) = read_dataset(dir)?;
        weights.feature_stats = fit_feature_stats(&records)?;
        training.datasets.push(dir.display().to_string());
    }
    write_weights(&a.out, &WeightsArtifact { weights, training })?;
    println!("wrote {} ({} parameters)", a.out.display(), count_parameters(&config));
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    if let Some(n) = cli.jobs {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Generate(a) => cmd_generate(a).map(|_| true),
        Command::Eval(a) => cmd_eval(a).map(|_| true),
        Command::Bench(a) => cmd_bench(a).map(|_| true),
        Command::Verify(a) => cmd_verify(a),
        Command::TrainExportCheck(a) => cmd_export_check(a),
        Command::InitWeights(a) => cmd_init_weights(a).map(|_| true),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
