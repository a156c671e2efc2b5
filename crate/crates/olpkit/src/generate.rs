//! Labeled dataset generation: random drops solved to optimality.

use olpkit_core::channel::{generate_scenario, EnvironmentSpec};
use olpkit_core::olp::{solve_olp, SolverConfig};
use olpkit_core::system::SystemConfig;
use rayon::prelude::*;

use crate::dataset::SampleRecord;

#[derive(Clone, Debug, PartialEq)]
pub struct Failure {
    pub index: usize,
    pub seed: u64,
    pub reason: String,
}

#[derive(Clone, Debug, Default)]
pub struct Generated {
    pub records: Vec<SampleRecord>,
    pub failures: Vec<Failure>,
}

/// Seed of sample `index`.
pub fn sample_seed(seed_base: u64, index: usize) -> u64 {
    seed_base.wrapping_add(index as u64)
}

/// Draws and labels one sample. A solve that needed numerical-trouble
/// fallbacks is rejected rather than stored with an uncertified label.
pub fn generate_record(
    config: SystemConfig,
    env: &EnvironmentSpec,
    solver: &SolverConfig,
    seed: u64,
) -> Result<SampleRecord, String> {
    let scenario = generate_scenario(config, env, seed).map_err(|e| e.to_string())?;
    let g = scenario.channel;
    let result = solve_olp(&g, config.rho_d, solver).map_err(|e| e.to_string())?;
    if result.numerical_trouble > 0 {
        return Err(format!(
            "{} feasibility checks stayed in numerical trouble",
            result.numerical_trouble
        ));
    }
    if result.exhausted {
        log::warn!("seed {seed}: bisection hit the iteration cap before reaching epsilon");
    }
    let g_pinv = g.pseudo_inverse().map_err(|e| e.to_string())?.clone();
    Ok(SampleRecord {
        g: g.entries().clone(),
        g_pinv,
        delta_olp: result.precoder.0,
        t_star: result.t_star,
        seed,
    })
}

/// Generates `count` samples in parallel; output order follows the sample
/// index, so results do not depend on the thread count.
pub fn generate_records(
    config: SystemConfig,
    env: &EnvironmentSpec,
    solver: &SolverConfig,
    count: usize,
    seed_base: u64,
) -> Generated {
    let outcomes: Vec<_> = (0..count)
        .into_par_iter()
        .map(|index| {
            let seed = sample_seed(seed_base, index);
            (index, seed, generate_record(config, env, solver, seed))
        })
        .collect();
    let mut out = Generated::default();
    for (index, seed, outcome) in outcomes {
        match outcome {
            Ok(rec) => out.records.push(rec),
            Err(reason) => {
                log::warn!("sample {index} (seed {seed}) skipped: {reason}");
                out.failures.push(Failure { index, seed, reason });
            }
        }
    }
    out
}
