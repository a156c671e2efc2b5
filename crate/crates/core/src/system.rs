//! Channel and precoder types, and exact SINR / spectral-efficiency evaluation.
//!
//! Conventions: `G` is M×K (row m = AP m, column k = UE k), a precoder `Δ` is
//! M×K with per-AP rows, and the effective channel is `A = G^T Δ` (K×K).
//! The pseudo-inverse `G†` of `G^T` is M×K, so `G^T G† = I_K`.

use alloc::boxed::Box;
use alloc::vec::Vec;

use once_cell::race::OnceBox;

use crate::linalg::{hermitian_pd_inverse, CMatrix};
use crate::math::log2;
use crate::{Error, Result};

/// Numerical tolerances used across the toolkit.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Tolerances {
    /// Relative Cholesky pivot below which the Gram matrix counts as singular.
    pub rank_pivot: f64,
    /// `‖G^T G† − I‖` bound, scaled by the condition number.
    pub pinv_residual: f64,
    /// Projector axiom bound (Hermitian, idempotent, annihilated by `G^T`).
    pub projector: f64,
    /// Row-norm slack accepted after power projection.
    pub power: f64,
}

pub const TOLERANCES: Tolerances = Tolerances {
    rank_pivot: 1e-13,
    pinv_residual: 1e-9,
    projector: 1e-9,
    power: 1e-12,
};

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SystemConfig {
    pub num_aps: usize,
    pub num_ues: usize,
    /// Downlink SNR per AP, linear scale.
    pub rho_d: f64,
}

impl SystemConfig {
    pub fn new(num_aps: usize, num_ues: usize, rho_d: f64) -> Result<Self> {
        if num_aps == 0 || num_ues == 0 {
            return Err(Error::InvalidArgument("need at least one AP and one UE"));
        }
        if !(rho_d > 0.0) || !rho_d.is_finite() {
            return Err(Error::InvalidArgument("rho_d must be positive and finite"));
        }
        Ok(Self {
            num_aps,
            num_ues,
            rho_d,
        })
    }

    /// Massive MIMO assumes more APs than UEs. Callers should warn when this
    /// is false; nothing in the toolkit refuses to run.
    pub fn is_massive(&self) -> bool {
        self.num_aps > self.num_ues
    }
}

/// M×K channel matrix with lazily computed pseudo-inverse and null-space
/// projector. Both caches are initialized at most once and are safe to read
/// from several threads.
pub struct ChannelMatrix {
    entries: CMatrix,
    pinv: OnceBox<Result<CMatrix>>,
    null_projector: OnceBox<Result<CMatrix>>,
}

impl ChannelMatrix {
    pub fn new(entries: CMatrix) -> Self {
        Self {
            entries,
            pinv: OnceBox::new(),
            null_projector: OnceBox::new(),
        }
    }

    /// Wraps a channel together with a previously computed `G†` (M×K), so
    /// stored datasets feed identical inputs everywhere.
    pub fn with_pinv(entries: CMatrix, pinv: CMatrix) -> Result<Self> {
        pinv.check_shape(entries.rows(), entries.cols())?;
        let g = Self::new(entries);
        let _ = g.pinv.set(Box::new(Ok(pinv)));
        Ok(g)
    }

    #[inline]
    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    #[inline]
    pub fn num_aps(&self) -> usize {
        self.entries.rows()
    }

    #[inline]
    pub fn num_ues(&self) -> usize {
        self.entries.cols()
    }

    /// `G† = G^{T*}(G^T G^{T*})^{-1}`, via Cholesky of the K×K Gram matrix.
    pub fn pseudo_inverse(&self) -> Result<&CMatrix> {
        self.pinv
            .get_or_init(|| Box::new(pseudo_inverse_of(&self.entries)))
            .as_ref()
            .map_err(Clone::clone)
    }

    /// `P = I_M − G† G^T`, the orthogonal projector onto the null space of `G^T`.
    pub fn null_projector(&self) -> Result<&CMatrix> {
        self.null_projector
            .get_or_init(|| {
                Box::new(self.pseudo_inverse().and_then(|pinv| {
                    let m = self.num_aps();
                    let range = pinv.matmul(&self.entries.transpose())?;
                    CMatrix::identity(m).sub(&range)
                }))
            })
            .as_ref()
            .map_err(Clone::clone)
    }

    /// Same channel scaled by a real factor (caches are not carried over).
    pub fn scaled(&self, factor: f64) -> Self {
        Self::new(self.entries.scale(factor))
    }

    /// Channel with APs relabeled by `rows` and UEs by `cols`.
    pub fn permuted(&self, rows: &[usize], cols: &[usize]) -> Self {
        Self::new(self.entries.permute(rows, cols))
    }
}

impl Clone for ChannelMatrix {
    fn clone(&self) -> Self {
        let g = Self::new(self.entries.clone());
        if let Some(p) = self.pinv.get() {
            let _ = g.pinv.set(Box::new(p.clone()));
        }
        if let Some(p) = self.null_projector.get() {
            let _ = g.null_projector.set(Box::new(p.clone()));
        }
        g
    }
}

impl core::fmt::Debug for ChannelMatrix {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("ChannelMatrix")
            .field("entries", &self.entries)
            .finish_non_exhaustive()
    }
}

impl From<CMatrix> for ChannelMatrix {
    fn from(entries: CMatrix) -> Self {
        Self::new(entries)
    }
}

fn pseudo_inverse_of(g: &CMatrix) -> Result<CMatrix> {
    let g_conj = g.conj();
    let gram = g.transpose_matmul(&g_conj)?;
    let inv = hermitian_pd_inverse(&gram, TOLERANCES.rank_pivot)?;
    g_conj.matmul(&inv)
}

/// Free-function form of [`ChannelMatrix::pseudo_inverse`].
pub fn pseudo_inverse(g: &ChannelMatrix) -> Result<&CMatrix> {
    g.pseudo_inverse()
}

/// Free-function form of [`ChannelMatrix::null_projector`].
pub fn null_projector(g: &ChannelMatrix) -> Result<&CMatrix> {
    g.null_projector()
}

/// M×K linear precoder; row m is AP m's beam across users.
#[derive(Clone, Debug, PartialEq)]
pub struct Precoder(pub CMatrix);

impl Precoder {
    pub fn zeros(num_aps: usize, num_ues: usize) -> Self {
        Self(CMatrix::zeros(num_aps, num_ues))
    }

    #[inline]
    pub fn entries(&self) -> &CMatrix {
        &self.0
    }

    pub fn row_norms(&self) -> Vec<f64> {
        (0..self.0.rows()).map(|m| self.0.row_norm(m)).collect()
    }

    pub fn max_row_norm(&self) -> f64 {
        self.row_norms().into_iter().fold(0.0, f64::max)
    }

    /// True when every per-AP row satisfies `‖δ̄_m‖ ≤ 1 + slack`.
    pub fn satisfies_power(&self, slack: f64) -> bool {
        self.row_norms().iter().all(|&n| n <= 1.0 + slack)
    }
}

impl From<CMatrix> for Precoder {
    fn from(m: CMatrix) -> Self {
        Self(m)
    }
}

/// `A = G^T Δ`, K×K: diagonal is useful signal, off-diagonal interference.
#[derive(Clone, Debug, PartialEq)]
pub struct EffectiveChannel(pub CMatrix);

#[derive(Clone, Debug, PartialEq)]
pub struct UserMetrics {
    pub sinr: Vec<f64>,
    /// Spectral efficiency `log2(1 + SINR)` in bit/s/Hz.
    pub se: Vec<f64>,
}

impl UserMetrics {
    pub fn from_sinr(sinr: Vec<f64>) -> Self {
        let se = sinr.iter().map(|&s| spectral_efficiency(s)).collect();
        Self { sinr, se }
    }

    pub fn min_sinr(&self) -> f64 {
        self.sinr.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn min_se(&self) -> f64 {
        self.se.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

#[inline]
pub fn spectral_efficiency(sinr: f64) -> f64 {
    log2(1.0 + sinr)
}

pub fn effective_channel(g: &ChannelMatrix, delta: &Precoder) -> Result<EffectiveChannel> {
    delta.0.check_shape(g.num_aps(), g.num_ues())?;
    Ok(EffectiveChannel(g.entries().transpose_matmul(&delta.0)?))
}

/// Per-user SINR from the effective channel:
/// `ρ|a_kk|² / (1 + ρ Σ_{l≠k} |a_kl|²)`.
pub fn sinr_from_effective(a: &EffectiveChannel, rho_d: f64) -> UserMetrics {
    let k = a.0.rows();
    let sinr = (0..k)
        .map(|u| {
            let row = a.0.row(u);
            let signal = row[u].norm_sqr();
            let interference: f64 = row
                .iter()
                .enumerate()
                .filter(|&(l, _)| l != u)
                .map(|(_, z)| z.norm_sqr())
                .sum();
            rho_d * signal / (1.0 + rho_d * interference)
        })
        .collect();
    UserMetrics::from_sinr(sinr)
}

pub fn sinr(g: &ChannelMatrix, delta: &Precoder, rho_d: f64) -> Result<UserMetrics> {
    if !(rho_d > 0.0) {
        return Err(Error::InvalidArgument("rho_d must be positive"));
    }
    Ok(sinr_from_effective(&effective_channel(g, delta)?, rho_d))
}

pub fn min_sinr(g: &ChannelMatrix, delta: &Precoder, rho_d: f64) -> Result<f64> {
    Ok(sinr(g, delta, rho_d)?.min_sinr())
}

/// Rescales every row with `‖δ̄_m‖ ≥ 1` to unit norm and leaves the others.
///
/// Normalized rows are nudged down by an ulp when rounding leaves their norm
/// above one, so the result is exactly feasible and the map is idempotent.
pub fn project_power(delta: &Precoder) -> Precoder {
    let mut out = delta.0.clone();
    for m in 0..out.rows() {
        let norm = out.row_norm(m);
        if norm >= 1.0 && norm.is_finite() {
            for z in out.row_mut(m) {
                *z /= norm;
            }
            while out.row_norm(m) > 1.0 {
                for z in out.row_mut(m) {
                    *z *= 1.0 - f64::EPSILON;
                }
            }
        }
    }
    Precoder(out)
}

/// `‖G^T G† − I_K‖_max`, used to check the pseudo-inverse.
pub fn pinv_residual(g: &ChannelMatrix) -> Result<f64> {
    let pinv = g.pseudo_inverse()?;
    let prod = g.entries().transpose_matmul(pinv)?;
    Ok(prod.sub(&CMatrix::identity(g.num_ues()))?.max_abs())
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c64, cabs};
    use alloc::vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> CMatrix {
        CMatrix::from_fn(rows, cols, |_, _| {
            c64(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    #[test]
    fn effective_channel_trivial_cases() {
        let g = ChannelMatrix::new(CMatrix::identity(2));
        let a = effective_channel(&g, &Precoder(CMatrix::identity(2))).unwrap();
        assert_eq!(a.0, CMatrix::identity(2));

        let g = ChannelMatrix::new(CMatrix::from_real(1, 1, &[2.0]).unwrap());
        let a = effective_channel(&g, &Precoder(CMatrix::from_real(1, 1, &[0.5]).unwrap()))
            .unwrap();
        assert_eq!(a.0[(0, 0)], c64(1.0, 0.0));
    }

    #[test]
    fn effective_channel_matches_naive_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = ChannelMatrix::new(random_matrix(&mut rng, 4, 2));
        let d = Precoder(random_matrix(&mut rng, 4, 2));
        let a = effective_channel(&g, &d).unwrap();
        for k in 0..2 {
            for l in 0..2 {
                let mut s = c64(0.0, 0.0);
                for m in 0..4 {
                    s += g.entries()[(m, k)] * d.0[(m, l)];
                }
                let err = cabs(a.0[(k, l)] - s) / cabs(s);
                assert!(err <= 1e-13, "{err}");
            }
        }
    }

    #[test]
    fn effective_channel_rejects_mismatch() {
        let g = ChannelMatrix::new(CMatrix::identity(2));
        assert!(matches!(
            effective_channel(&g, &Precoder::zeros(3, 2)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn sinr_trivial_cases() {
        let g = ChannelMatrix::new(CMatrix::identity(1));
        let m = sinr(&g, &Precoder(CMatrix::identity(1)), 1.0).unwrap();
        assert_eq!(m.sinr, vec![1.0]);
        assert_eq!(m.se, vec![1.0]);

        let a = EffectiveChannel(CMatrix::from_real(2, 2, &[1.0, 1.0, 1.0, 1.0]).unwrap());
        assert_eq!(sinr_from_effective(&a, 1.0).sinr, vec![0.5, 0.5]);
    }

    #[test]
    fn project_power_examples() {
        let d = Precoder(CMatrix::from_real(2, 2, &[2.0, 0.0, 0.0, 0.5]).unwrap());
        let p = project_power(&d);
        let norms = p.row_norms();
        assert!((norms[0] - 1.0).abs() < 1e-15 && norms[0] <= 1.0);
        assert_eq!(norms[1], 0.5);

        let z = Precoder::zeros(3, 2);
        assert_eq!(project_power(&z), z);
    }

    #[test]
    fn project_power_is_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let d = Precoder(random_matrix(&mut rng, 6, 3).scale(rng.random_range(0.1..3.0)));
            let once = project_power(&d);
            assert_eq!(project_power(&once), once);
            assert!(once.satisfies_power(0.0));
        }
    }

    #[test]
    fn pseudo_inverse_examples() {
        let g = ChannelMatrix::new(CMatrix::identity(2));
        assert!(g.pseudo_inverse().unwrap().sub(&CMatrix::identity(2)).unwrap().max_abs() < 1e-15);

        let g = ChannelMatrix::new(CMatrix::from_real(1, 1, &[2.0]).unwrap());
        assert_eq!(g.pseudo_inverse().unwrap()[(0, 0)], c64(0.5, 0.0));

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = ChannelMatrix::new(random_matrix(&mut rng, 8, 3));
        assert!(pinv_residual(&g).unwrap() <= 1e-10);
    }

    #[test]
    fn pseudo_inverse_reports_rank_deficiency() {
        // two identical user columns
        let g = ChannelMatrix::new(CMatrix::from_real(3, 2, &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0]).unwrap());
        assert!(matches!(g.pseudo_inverse(), Err(Error::RankDeficient { .. })));
        assert!(matches!(g.null_projector(), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn null_projector_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = ChannelMatrix::new(random_matrix(&mut rng, 2, 2));
        assert!(g.null_projector().unwrap().max_abs() < 1e-12);

        let g = ChannelMatrix::new(CMatrix::from_real(2, 1, &[1.0, 0.0]).unwrap());
        let p = g.null_projector().unwrap();
        let expected = CMatrix::from_real(2, 2, &[0.0, 0.0, 0.0, 1.0]).unwrap();
        assert!(p.sub(&expected).unwrap().max_abs() < 1e-15);
    }

    #[test]
    fn stored_pinv_is_used() {
        let g = ChannelMatrix::with_pinv(CMatrix::identity(2), CMatrix::identity(2).scale(3.0))
            .unwrap();
        assert_eq!(g.pseudo_inverse().unwrap()[(0, 0)], c64(3.0, 0.0));
        assert!(ChannelMatrix::with_pinv(CMatrix::identity(2), CMatrix::identity(3)).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(SystemConfig::new(0, 1, 1.0).is_err());
        assert!(SystemConfig::new(2, 1, 0.0).is_err());
        let c = SystemConfig::new(8, 12, 1.0).unwrap();
        assert!(!c.is_massive());
    }
}
