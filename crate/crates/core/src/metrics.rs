//! Spectral-efficiency statistics: quantiles, empirical CDFs and relative
//! losses against a reference precoder.

use alloc::vec::Vec;

use crate::{Error, Result};

/// Sorted copy of `samples`; rejects empty input and NaNs.
pub fn sorted(samples: &[f64]) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no samples"));
    }
    if samples.iter().any(|x| x.is_nan()) {
        return Err(Error::InvalidArgument("samples contain NaN"));
    }
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Quantile of already sorted data, interpolating linearly between order
/// statistics at position `h = (n − 1)·q`.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> Result<f64> {
    if sorted.is_empty() {
        return Err(Error::InvalidArgument("no samples"));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidArgument("quantile level must lie in [0, 1]"));
    }
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h as usize;
    let frac = h - lo as f64;
    Ok(match sorted.get(lo + 1) {
        Some(&next) if frac > 0.0 => sorted[lo] + frac * (next - sorted[lo]),
        _ => sorted[lo],
    })
}

pub fn quantile(samples: &[f64], q: f64) -> Result<f64> {
    quantile_sorted(&sorted(samples)?, q)
}

/// Empirical CDF as `(value, fraction ≤ value)` steps, one per sample.
pub fn empirical_cdf(samples: &[f64]) -> Result<Vec<(f64, f64)>> {
    let v = sorted(samples)?;
    let n = v.len() as f64;
    Ok(v.iter().enumerate().map(|(i, &x)| (x, (i + 1) as f64 / n)).collect())
}

/// `(reference − candidate)/reference` in percent.
pub fn relative_loss_percent(reference: f64, candidate: f64) -> f64 {
    if reference == 0.0 {
        return if candidate == 0.0 { 0.0 } else { f64::NEG_INFINITY };
    }
    100.0 * (reference - candidate) / reference
}

/// Median and 5th percentile of pooled per-user spectral efficiencies.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SeSummary {
    pub median_se: f64,
    pub p5_se: f64,
}

impl SeSummary {
    pub fn of(samples: &[f64]) -> Result<Self> {
        let v = sorted(samples)?;
        Ok(Self {
            median_se: quantile_sorted(&v, 0.5)?,
            p5_se: quantile_sorted(&v, 0.05)?,
        })
    }

    /// Losses of `self` against `reference` at the median and at the 5th
    /// percentile (the 95%-likely rate), in percent.
    pub fn losses_vs(&self, reference: &SeSummary) -> (f64, f64) {
        (
            relative_loss_percent(reference.median_se, self.median_se),
            relative_loss_percent(reference.p5_se, self.p5_se),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn one_to_hundred() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(quantile(&v, 0.5).unwrap(), 50.5);
        assert_eq!(quantile(&v, 0.05).unwrap(), 5.95);
        assert_eq!(quantile(&v, 0.0).unwrap(), 1.0);
        assert_eq!(quantile(&v, 1.0).unwrap(), 100.0);
    }

    #[test]
    fn bad_inputs() {
        assert!(quantile(&[], 0.5).is_err());
        assert!(quantile(&[1.0], 1.5).is_err());
        assert!(quantile(&[1.0, f64::NAN], 0.5).is_err());
    }

    #[test]
    fn self_comparison_has_no_loss() {
        let s = SeSummary::of(&[3.0, 1.0, 2.0]).unwrap();
        assert_eq!(s.losses_vs(&s), (0.0, 0.0));
        let worse = SeSummary { median_se: 1.0, p5_se: 0.5 };
        let (m, p) = worse.losses_vs(&SeSummary { median_se: 2.0, p5_se: 1.0 });
        assert_eq!((m, p), (50.0, 50.0));
    }

    proptest! {
        #[test]
        fn cdf_is_monotone(v in prop::collection::vec(-1e3f64..1e3, 1..64)) {
            let cdf = empirical_cdf(&v).unwrap();
            prop_assert_eq!(cdf.last().unwrap().1, 1.0);
            for w in cdf.windows(2) {
                prop_assert!(w[0].0 <= w[1].0 && w[0].1 < w[1].1);
            }
        }

        #[test]
        fn quantile_is_monotone_and_bounded(
            v in prop::collection::vec(-1e3f64..1e3, 1..64),
            a in 0.0f64..=1.0,
            b in 0.0f64..=1.0,
        ) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let s = sorted(&v).unwrap();
            let (x, y) = (quantile_sorted(&s, lo).unwrap(), quantile_sorted(&s, hi).unwrap());
            prop_assert!(x <= y);
            prop_assert!(s[0] <= x && y <= s[s.len() - 1]);
        }
    }
}
