//! Optimal linear precoder (OLP) by bisection over cone feasibility programs.
//!
//! For a threshold `t`, the question is whether some `Δ` gives, with
//! `A = G^T Δ`,
//!
//! - real nonnegative diagonal entries `a_kk`,
//! - `a_kk ≥ √t·‖(a_k1, …, a_kK without a_kk, 1/√ρ_d)‖` for every user,
//! - `‖δ̄_m‖ ≤ 1` for every AP row.
//!
//! The user constraints are multiplied through by `√ρ_d`, so the program is
//! posed on `√ρ_d·G` with the unit constant in the tail. Typical channel
//! magnitudes (1e-15..1e-5) times `√ρ_d` (≈ 5.6e5) land near unit scale.
//! The real variable vector interleaves `(Re δ_ml, Im δ_ml)` in row-major order.

use alloc::vec;
use alloc::vec::Vec;

use crate::baseline::zero_forcing;
use crate::linalg::{c64, CMatrix};
use crate::math::{exp2, log2, round, sqrt};
use crate::socp::{maximize_margin, AffineRow, BarrierSettings, Cone, MarginProgram, MarginStatus};
use crate::system::{effective_channel, min_sinr, ChannelMatrix, Precoder};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SolverConfig {
    /// Bisection precision: stop once `hi − lo ≤ epsilon·lo`.
    pub epsilon: f64,
    /// Largest constraint violation accepted when re-verifying a precoder.
    pub feas_tol: f64,
    pub max_bisection_iters: usize,
    /// A threshold counts as feasible when the optimal margin reaches this.
    pub margin: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.01,
            feas_tol: 1e-7,
            max_bisection_iters: 64,
            margin: 1e-9,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |x: f64| x > 0.0 && x.is_finite();
        if !positive(self.epsilon) || !positive(self.feas_tol) || !positive(self.margin) {
            return Err(Error::InvalidArgument("solver tolerances must be positive"));
        }
        if self.max_bisection_iters == 0 {
            return Err(Error::InvalidArgument("max_bisection_iters must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
pub struct FeasibilityProblem<'a> {
    pub channel: &'a ChannelMatrix,
    pub rho_d: f64,
    /// SINR threshold, linear scale.
    pub t: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum SolverStatus {
    Optimal,
    Infeasible,
    NumericalTrouble,
}

#[derive(Clone, Debug)]
pub struct FeasibilityVerdict {
    pub feasible: bool,
    /// Present iff `feasible`.
    pub precoder: Option<Precoder>,
    /// Largest constraint violation of the solver's final point.
    pub residuals: f64,
    pub solver_status: SolverStatus,
}

#[derive(Clone, Debug)]
pub struct BisectionResult {
    /// Certified achievable max-min SINR (linear).
    pub t_star: f64,
    pub precoder: Precoder,
    /// Smallest threshold found infeasible.
    pub t_upper: f64,
    pub iterations: usize,
    pub epsilon: f64,
    /// The iteration cap was hit before reaching the requested precision.
    pub exhausted: bool,
    /// Feasibility calls that stayed in numerical trouble after the retry.
    /// Each one was treated as infeasible, so `t_upper` is not certified
    /// when this is nonzero.
    pub numerical_trouble: usize,
}

/// `ρ_d·min_k(Σ_m |g_mk|)²`: each user's SINR if it alone received every AP
/// at full power, co-phased. No threshold above it is feasible.
pub fn sinr_upper_bound(g: &ChannelMatrix, rho_d: f64) -> f64 {
    let e = g.entries();
    (0..e.cols())
        .map(|k| {
            let s: f64 = (0..e.rows()).map(|m| e[(m, k)].norm_sqr()).map(sqrt).sum();
            rho_d * s * s
        })
        .fold(f64::INFINITY, f64::min)
}

#[inline]
fn re_idx(m: usize, l: usize, k: usize) -> usize {
    2 * (m * k + l)
}

/// Real and imaginary parts of `a_kl = Σ_m g_mk δ_ml` as rows over `x`.
fn effective_rows(gs: &CMatrix, k: usize, l: usize) -> (AffineRow, AffineRow) {
    let (m_aps, k_ues) = gs.shape();
    let mut re = Vec::with_capacity(2 * m_aps);
    let mut im = Vec::with_capacity(2 * m_aps);
    for m in 0..m_aps {
        let g = gs[(m, k)];
        let i = re_idx(m, l, k_ues);
        re.push((i, g.re));
        re.push((i + 1, -g.im));
        im.push((i, g.im));
        im.push((i + 1, g.re));
    }
    (
        AffineRow { terms: re, constant: 0.0 },
        AffineRow { terms: im, constant: 0.0 },
    )
}

/// Margin program for threshold `t` on the scaled channel `gs = √ρ_d·G`.
fn olp_program(gs: &CMatrix, t: f64) -> MarginProgram {
    let (m_aps, k_ues) = gs.shape();
    let rt = sqrt(t);
    let mut cones = Vec::with_capacity(k_ues + m_aps);
    let mut equalities = Vec::with_capacity(k_ues);
    for k in 0..k_ues {
        let (head, im_kk) = effective_rows(gs, k, k);
        equalities.push(im_kk);
        let mut tail = Vec::new();
        if t > 0.0 {
            for l in (0..k_ues).filter(|&l| l != k) {
                let (re, im) = effective_rows(gs, k, l);
                tail.push(re.scaled(rt));
                tail.push(im.scaled(rt));
            }
            tail.push(AffineRow::constant(rt));
        }
        cones.push(Cone {
            head,
            margin_weight: 1.0,
            tail,
        });
    }
    for m in 0..m_aps {
        let tail = (0..2 * k_ues)
            .map(|j| AffineRow::single(re_idx(m, 0, k_ues) + j, 1.0))
            .collect();
        cones.push(Cone {
            head: AffineRow::constant(1.0),
            margin_weight: 1.0,
            tail,
        });
    }
    MarginProgram {
        num_vars: 2 * m_aps * k_ues,
        cones,
        equalities,
    }
}

fn precoder_from_x(m_aps: usize, k_ues: usize, x: &[f64]) -> Precoder {
    Precoder(CMatrix::from_fn(m_aps, k_ues, |m, l| {
        let i = re_idx(m, l, k_ues);
        c64(x[i], x[i + 1])
    }))
}

fn x_from_precoder(delta: &Precoder) -> Vec<f64> {
    delta
        .entries()
        .as_slice()
        .iter()
        .flat_map(|z| [z.re, z.im])
        .collect()
}

/// Largest violation of the threshold-`t` constraints by `delta`, evaluated
/// from scratch on the complex effective channel. User constraints are
/// measured after multiplying through by `√ρ_d`.
pub fn feasibility_residuals(g: &ChannelMatrix, rho_d: f64, t: f64, delta: &Precoder) -> Result<f64> {
    let a = effective_channel(g, delta)?.0;
    let k_ues = a.rows();
    let sr = sqrt(rho_d);
    let mut worst: f64 = 0.0;
    for k in 0..k_ues {
        let akk = a[(k, k)];
        worst = worst.max((sr * akk.im).abs());
        let interference: f64 = (0..k_ues)
            .filter(|&l| l != k)
            .map(|l| a[(k, l)].norm_sqr())
            .sum();
        let rhs = sqrt(t) * sqrt(rho_d * interference + 1.0);
        worst = worst.max(rhs - sr * akk.re);
    }
    worst = worst.max(delta.max_row_norm() - 1.0);
    Ok(worst)
}

/// Scale factor `2^(−round(log2 median|g|))` used by the retry.
fn conditioning_scale(g: &CMatrix) -> f64 {
    let mut mags: Vec<f64> = g.as_slice().iter().map(|z| sqrt(z.norm_sqr())).collect();
    mags.sort_by(f64::total_cmp);
    let median = mags[mags.len() / 2];
    if median > 0.0 && median.is_finite() {
        exp2(-round(log2(median)))
    } else {
        1.0
    }
}

fn attempt(
    g: &ChannelMatrix,
    rho_d: f64,
    t: f64,
    cfg: &SolverConfig,
    x0: &[f64],
    settings: BarrierSettings,
) -> Result<FeasibilityVerdict> {
    let (m_aps, k_ues) = g.entries().shape();
    let gs = g.entries().scale(sqrt(rho_d));
    let program = olp_program(&gs, t);
    let settings = BarrierSettings {
        stop_above: Some(cfg.margin),
        stop_below: Some(cfg.margin),
        ..settings
    };
    let sol = maximize_margin(&program, x0, &settings);
    let delta = precoder_from_x(m_aps, k_ues, &sol.x);
    let residuals = feasibility_residuals(g, rho_d, t, &delta)?;
    let witnessed = program.margin_of(&sol.x) >= cfg.margin && residuals <= cfg.feas_tol;
    let status = match sol.status {
        _ if witnessed => SolverStatus::Optimal,
        MarginStatus::BelowTarget => SolverStatus::Infeasible,
        MarginStatus::Converged if sol.margin < cfg.margin => SolverStatus::Infeasible,
        _ => SolverStatus::NumericalTrouble,
    };
    Ok(FeasibilityVerdict {
        feasible: witnessed,
        precoder: witnessed.then_some(delta),
        residuals,
        solver_status: status,
    })
}

fn check_problem(p: &FeasibilityProblem<'_>) -> Result<()> {
    if !(p.t >= 0.0) || !p.t.is_finite() {
        return Err(Error::InvalidArgument("SINR threshold must be finite and nonnegative"));
    }
    if !(p.rho_d > 0.0) || !p.rho_d.is_finite() {
        return Err(Error::InvalidArgument("rho_d must be positive and finite"));
    }
    Ok(())
}

fn feasible_from(p: &FeasibilityProblem<'_>, cfg: &SolverConfig, x0: &[f64]) -> Result<FeasibilityVerdict> {
    let first = attempt(p.channel, p.rho_d, p.t, cfg, x0, BarrierSettings::default())?;
    if first.solver_status != SolverStatus::NumericalTrouble {
        return Ok(first);
    }
    // One retry on a rescaled instance (SINR is invariant under g → f·g,
    // ρ_d → ρ_d/f²) with a gentler barrier schedule.
    let f = conditioning_scale(p.channel.entries());
    let scaled = p.channel.scaled(f);
    attempt(
        &scaled,
        p.rho_d / (f * f),
        p.t,
        cfg,
        x0,
        BarrierSettings::default().conservative(),
    )
}

/// Decides whether threshold `p.t` is achievable. A feasible verdict carries a
/// precoder whose constraint residuals were re-checked independently of the
/// cone solver.
pub fn socp_feasible(p: &FeasibilityProblem<'_>, cfg: &SolverConfig) -> Result<FeasibilityVerdict> {
    cfg.validate()?;
    check_problem(p)?;
    let (m_aps, k_ues) = p.channel.entries().shape();
    if p.t == 0.0 {
        return Ok(FeasibilityVerdict {
            feasible: true,
            precoder: Some(Precoder::zeros(m_aps, k_ues)),
            residuals: 0.0,
            solver_status: SolverStatus::Optimal,
        });
    }
    let x0 = vec![0.0; 2 * m_aps * k_ues];
    feasible_from(p, cfg, &x0)
}

pub(crate) enum Probe {
    /// Witness point and the min-SINR it achieves.
    Feasible(Vec<f64>, f64),
    Infeasible,
    Trouble,
}

pub(crate) struct Bracket {
    pub t_star: f64,
    pub x: Vec<f64>,
    pub t_upper: f64,
    pub iterations: usize,
    pub exhausted: bool,
    pub troubles: usize,
}

/// Bisection on `[0, t_ub]` keeping a witness for the lower end.
///
/// The lower end starts at the min-SINR of `seed` (any feasible point) and,
/// after each feasible probe, jumps to the new witness's own min-SINR. The
/// bracket stops once `hi − lo ≤ epsilon·lo`, a relative precision at every
/// SINR scale.
pub(crate) fn bisect(
    t_ub: f64,
    cfg: &SolverConfig,
    seed: (Vec<f64>, f64),
    mut probe: impl FnMut(f64, &[f64]) -> Result<Probe>,
) -> Result<Bracket> {
    let mut hi = t_ub;
    let mut lo = (seed.1 * (1.0 - 1e-6)).clamp(0.0, hi);
    let mut best = seed.0;
    let mut iterations = 0;
    let mut troubles = 0;
    let mut exhausted = false;
    while hi - lo > cfg.epsilon * lo {
        if iterations >= cfg.max_bisection_iters {
            exhausted = true;
            break;
        }
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        match probe(mid, &best)? {
            Probe::Feasible(x, achieved) => {
                lo = mid.max((achieved * (1.0 - 1e-6)).min(hi));
                best = x;
            }
            Probe::Infeasible => hi = mid,
            Probe::Trouble => {
                troubles += 1;
                hi = mid;
            }
        }
    }
    Ok(Bracket {
        t_star: lo,
        x: best,
        t_upper: hi,
        iterations,
        exhausted,
        troubles,
    })
}

/// Max-min SINR optimal precoder.
pub fn solve_olp(g: &ChannelMatrix, rho_d: f64, cfg: &SolverConfig) -> Result<BisectionResult> {
    cfg.validate()?;
    check_problem(&FeasibilityProblem { channel: g, rho_d, t: 0.0 })?;
    g.pseudo_inverse()?;
    let (m_aps, k_ues) = g.entries().shape();
    let t_ub = sinr_upper_bound(g, rho_d);
    let zf = zero_forcing(g, rho_d)?;
    let seed = (x_from_precoder(&zf), min_sinr(g, &zf, rho_d)?);
    let bracket = bisect(t_ub, cfg, seed, |t, warm| {
        let p = FeasibilityProblem { channel: g, rho_d, t };
        let v = feasible_from(&p, cfg, warm)?;
        Ok(match v.solver_status {
            SolverStatus::Optimal => {
                let delta = v.precoder.expect("feasible verdict carries a precoder");
                let achieved = min_sinr(g, &delta, rho_d)?;
                Probe::Feasible(x_from_precoder(&delta), achieved)
            }
            SolverStatus::Infeasible => Probe::Infeasible,
            SolverStatus::NumericalTrouble => Probe::Trouble,
        })
    })?;
    Ok(BisectionResult {
        t_star: bracket.t_star,
        precoder: precoder_from_x(m_aps, k_ues, &bracket.x),
        t_upper: bracket.t_upper,
        iterations: bracket.iterations,
        epsilon: cfg.epsilon,
        exhausted: bracket.exhausted,
        numerical_trouble: bracket.troubles,
    })
}

/// Splits `Δ` into `(Y1, Y2, Y3)` with `A = G^T Δ`: `Y1 = G†·diag(A)`,
/// `Y2 = G†·(A − diag(A))` and the null-space part `Y3 = Δ − G†·A`.
pub fn decompose_precoder(g: &ChannelMatrix, delta: &Precoder) -> Result<(CMatrix, CMatrix, CMatrix)> {
    let pinv = g.pseudo_inverse()?;
    let a = effective_channel(g, delta)?.0;
    let diag = a.diag_part();
    let off = a.sub(&diag)?;
    let y1 = pinv.matmul(&diag)?;
    let y2 = pinv.matmul(&off)?;
    let y3 = delta.entries().sub(&pinv.matmul(&a)?)?;
    Ok((y1, y2, y3))
}
