//! Zero forcing and maximum ratio precoders.

use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::{cabs, CMatrix, C64};
use crate::math::sqrt;
use crate::olp::{bisect, sinr_upper_bound, Probe, SolverConfig};
use crate::socp::{maximize_margin, AffineRow, BarrierSettings, Cone, MarginProgram, MarginStatus};
use crate::system::{min_sinr, ChannelMatrix, Precoder};
use crate::{Error, Result};

/// `Δ = c·G†` with `c = 1/max_m ‖row_m(G†)‖`: zero interference, equal
/// effective gain `c` for every user and the busiest AP at full power.
pub fn zero_forcing(g: &ChannelMatrix, rho_d: f64) -> Result<Precoder> {
    check_rho(rho_d)?;
    let pinv = g.pseudo_inverse()?;
    let widest = (0..pinv.rows()).map(|m| pinv.row_norm(m)).fold(0.0, f64::max);
    if !(widest > 0.0) || !widest.is_finite() {
        return Err(Error::NumericalTrouble("pseudo-inverse has no usable rows"));
    }
    Ok(Precoder(pinv.scale(1.0 / widest)))
}

fn check_rho(rho_d: f64) -> Result<()> {
    if !(rho_d > 0.0) || !rho_d.is_finite() {
        return Err(Error::InvalidArgument("rho_d must be positive and finite"));
    }
    Ok(())
}

/// Unit conjugate directions `conj(g_ml)/|g_ml|`, zero where `g_ml = 0`.
fn conjugate_directions(g: &CMatrix) -> CMatrix {
    CMatrix::from_fn(g.rows(), g.cols(), |m, l| {
        let z = g[(m, l)];
        let a = cabs(z);
        if a > 0.0 {
            z.conj() / a
        } else {
            C64::new(0.0, 0.0)
        }
    })
}

fn assemble(u: &CMatrix, w: &[f64]) -> Precoder {
    Precoder(CMatrix::from_fn(u.rows(), u.cols(), |m, l| {
        u[(m, l)] * w[m * u.cols() + l]
    }))
}

/// Power-weight program at threshold `t` over `w_ml ≥ 0`, with
/// `δ_ml = w_ml·conj(g_ml)/|g_ml|` and `gs = √ρ_d·G`.
fn mr_program(gs: &CMatrix, u: &CMatrix, t: f64) -> MarginProgram {
    let (m_aps, k_ues) = gs.shape();
    let rt = sqrt(t);
    let mut cones = Vec::with_capacity(k_ues + m_aps + m_aps * k_ues);
    for k in 0..k_ues {
        let head = AffineRow {
            terms: (0..m_aps).map(|m| (m * k_ues + k, cabs(gs[(m, k)]))).collect(),
            constant: 0.0,
        };
        let mut tail = Vec::new();
        if t > 0.0 {
            for l in (0..k_ues).filter(|&l| l != k) {
                let coeff: Vec<(usize, C64)> =
                    (0..m_aps).map(|m| (m * k_ues + l, gs[(m, k)] * u[(m, l)])).collect();
                tail.push(AffineRow {
                    terms: coeff.iter().map(|&(i, c)| (i, rt * c.re)).collect(),
                    constant: 0.0,
                });
                tail.push(AffineRow {
                    terms: coeff.iter().map(|&(i, c)| (i, rt * c.im)).collect(),
                    constant: 0.0,
                });
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
        cones.push(Cone {
            head: AffineRow::constant(1.0),
            margin_weight: 1.0,
            tail: (0..k_ues).map(|l| AffineRow::single(m * k_ues + l, 1.0)).collect(),
        });
    }
    for i in 0..m_aps * k_ues {
        cones.push(Cone {
            head: AffineRow::single(i, 1.0),
            margin_weight: 0.0,
            tail: Vec::new(),
        });
    }
    MarginProgram {
        num_vars: m_aps * k_ues,
        cones,
        equalities: Vec::new(),
    }
}

/// Max-min SINR conjugate beamforming: column `k` follows `conj(g_k)` with
/// per-entry nonnegative power weights chosen by bisection, subject to the
/// per-AP power limits.
pub fn maximum_ratio(g: &ChannelMatrix, rho_d: f64, cfg: &SolverConfig) -> Result<Precoder> {
    check_rho(rho_d)?;
    cfg.validate()?;
    let entries = g.entries();
    if entries.max_abs() == 0.0 {
        return Err(Error::InvalidArgument("channel is identically zero"));
    }
    let (m_aps, k_ues) = entries.shape();
    let u = conjugate_directions(entries);
    let gs = entries.scale(sqrt(rho_d));
    let start = vec![0.5 / sqrt(k_ues as f64); m_aps * k_ues];
    let t_ub = sinr_upper_bound(g, rho_d);

    // every AP splitting full power evenly is a valid starting witness
    let even = vec![1.0 / sqrt(k_ues as f64); m_aps * k_ues];
    let seed_sinr = min_sinr(g, &assemble(&u, &even), rho_d)?;
    let bracket = bisect(t_ub, cfg, (even, seed_sinr), |t, warm| {
        let program = mr_program(&gs, &u, t);
        // warm points must stay strictly inside the nonnegativity cones
        let x0 = if warm.iter().all(|&w| w > 0.0) { warm } else { &start[..] };
        let mut settings = BarrierSettings {
            stop_above: Some(cfg.margin),
            stop_below: Some(cfg.margin),
            ..Default::default()
        };
        for _ in 0..2 {
            let sol = maximize_margin(&program, x0, &settings);
            if program.margin_of(&sol.x) >= cfg.margin && sol.x.iter().all(|&w| w >= 0.0) {
                let achieved = min_sinr(g, &assemble(&u, &sol.x), rho_d)?;
                return Ok(Probe::Feasible(sol.x, achieved));
            }
            match sol.status {
                MarginStatus::BelowTarget => return Ok(Probe::Infeasible),
                MarginStatus::Converged if sol.margin < cfg.margin => return Ok(Probe::Infeasible),
                _ => settings = settings.conservative(),
            }
        }
        Ok(Probe::Trouble)
    })?;
    let mut delta = assemble(&u, &bracket.x);
    // clip roundoff so every row is within the power limit
    for m in 0..m_aps {
        let n = delta.0.row_norm(m);
        if n > 1.0 {
            delta.0.row_mut(m).iter_mut().for_each(|z| *z /= n);
        }
    }
    Ok(delta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{generate_scenario, EnvironmentKind, EnvironmentSpec};
    use crate::olp::solve_olp;
    use crate::system::{effective_channel, sinr, SystemConfig};

    fn scenario(kind: EnvironmentKind, m: usize, k: usize, seed: u64) -> (ChannelMatrix, f64) {
        let env = EnvironmentSpec::preset(kind);
        let cfg = SystemConfig::new(m, k, env.rho_d).unwrap();
        (generate_scenario(cfg, &env, seed).unwrap().channel, env.rho_d)
    }

    #[test]
    fn zf_identity_channel() {
        let g = ChannelMatrix::new(CMatrix::identity(2));
        let d = zero_forcing(&g, 5.0).unwrap();
        assert_eq!(d.entries(), &CMatrix::identity(2));
        let s = sinr(&g, &d, 5.0).unwrap();
        assert!(s.sinr.iter().all(|&x| (x - 5.0).abs() < 1e-12));
    }

    #[test]
    fn zf_properties() {
        for seed in 0..20 {
            let (g, rho) = scenario(EnvironmentKind::UrbanNLoS2GHz, 16, 8, seed);
            let d = zero_forcing(&g, rho).unwrap();
            let a = effective_channel(&g, &d).unwrap().0;
            let diag_max = (0..8).map(|k| a[(k, k)].re).fold(0.0, f64::max);
            for k in 0..8 {
                for l in (0..8).filter(|&l| l != k) {
                    assert!(cabs(a[(k, l)]) <= 1e-9 * diag_max);
                }
            }
            assert!((d.max_row_norm() - 1.0).abs() <= 1e-12);
            let s = sinr(&g, &d, rho).unwrap().sinr;
            let (lo, hi) = s.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
            assert!((hi - lo) / hi <= 1e-9);
        }
    }

    #[test]
    fn mr_single_user_matches_olp() {
        let cfg = SolverConfig::default();
        for seed in 0..5 {
            let (g, rho) = scenario(EnvironmentKind::LoS60GHz, 8, 1, seed);
            let mr = maximum_ratio(&g, rho, &cfg).unwrap();
            let olp = solve_olp(&g, rho, &cfg).unwrap();
            let ratio = min_sinr(&g, &mr, rho).unwrap() / sinr_upper_bound(&g, rho);
            assert!((1.0 - cfg.epsilon..=1.0 + 1e-9).contains(&ratio), "{ratio}");
            let r2 = min_sinr(&g, &mr, rho).unwrap() / olp.t_star;
            assert!(r2 <= 1.0 + cfg.epsilon, "{r2}");
        }
    }

    #[test]
    fn mr_respects_power_and_direction() {
        let cfg = SolverConfig::default();
        let (g, rho) = scenario(EnvironmentKind::UrbanNLoS2GHz, 8, 3, 3);
        let d = maximum_ratio(&g, rho, &cfg).unwrap();
        assert!(d.satisfies_power(1e-9));
        for m in 0..8 {
            for l in 0..3 {
                // δ_ml is a nonnegative multiple of conj(g_ml)
                let p = d.entries()[(m, l)] * g.entries()[(m, l)];
                assert!(p.re >= 0.0 && p.im.abs() <= 1e-9 * cabs(p).max(1e-300));
            }
        }
    }

    #[test]
    fn olp_dominates_mr() {
        let cfg = SolverConfig::default();
        for seed in 0..5 {
            let (g, rho) = scenario(EnvironmentKind::UrbanNLoS2GHz, 8, 3, seed);
            let mr = min_sinr(&g, &maximum_ratio(&g, rho, &cfg).unwrap(), rho).unwrap();
            let t = solve_olp(&g, rho, &cfg).unwrap().t_star;
            assert!(mr <= t * (1.0 + cfg.epsilon), "seed {seed}: {mr} vs {t}");
        }
    }

    #[test]
    fn mr_and_zf_each_win_somewhere() {
        // noise-limited (low ρ) favors MR, interference-limited (high ρ) favors ZF
        let cfg = SolverConfig::default();
        let (mut mr_wins, mut zf_wins) = (false, false);
        for seed in 0..200 {
            let (g, rho) = scenario(EnvironmentKind::UrbanNLoS2GHz, 16, 8, seed);
            for scale in [1e-4, 1e2] {
                let rho = rho * scale;
                let zf = min_sinr(&g, &zero_forcing(&g, rho).unwrap(), rho).unwrap();
                let mr = min_sinr(&g, &maximum_ratio(&g, rho, &cfg).unwrap(), rho).unwrap();
                mr_wins |= mr > zf;
                zf_wins |= zf > mr;
            }
            if mr_wins && zf_wins {
                break;
            }
        }
        assert!(mr_wins && zf_wins, "MR wins: {mr_wins}, ZF wins: {zf_wins}");
    }
}
