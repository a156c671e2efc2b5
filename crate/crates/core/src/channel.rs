//! Random cell-free drops: AP/UE placement, large-scale fading and i.i.d.
//! Rayleigh fast fading.
//!
//! Every scenario is a pure function of `(config, env, seed)`. The generator is
//! ChaCha20 seeded with [`rand::SeedableRng::seed_from_u64`], and draws are
//! consumed in a fixed order:
//!
//! 1. AP positions, one AP at a time: `u` (radius), then `v` (angle);
//! 2. UE positions in the same way;
//! 3. fast fading in row-major `(m, k)` order, two uniforms per entry turned
//!    into `(x1, x2)` by Box-Muller.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::linalg::{c64, from_polar, CMatrix, C64};
use crate::math::{floor, hypot, ln, log10, pow10, sin_cos, sqrt, PI, TAU};
use crate::system::{ChannelMatrix, SystemConfig};
use crate::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
const BOLTZMANN: f64 = 1.380_649e-23;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum EnvironmentKind {
    #[cfg_attr(feature = "serde", serde(rename = "los60"))]
    LoS60GHz,
    #[cfg_attr(feature = "serde", serde(rename = "urban2"))]
    UrbanNLoS2GHz,
    #[cfg_attr(feature = "serde", serde(rename = "rural450"))]
    RuralNLoS450MHz,
}

impl EnvironmentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::LoS60GHz => "los60",
            Self::UrbanNLoS2GHz => "urban2",
            Self::RuralNLoS450MHz => "rural450",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "los60" | "los" => Some(Self::LoS60GHz),
            "urban2" | "urban" => Some(Self::UrbanNLoS2GHz),
            "rural450" | "rural" => Some(Self::RuralNLoS450MHz),
            _ => None,
        }
    }
}

/// Large-scale propagation model.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "model", rename_all = "snake_case"))]
pub enum PathLoss {
    /// Friis free space: amplitude `λ/(4πd)`, phase `−2πd/λ`.
    FreeSpace,
    /// ITU-R M.2135 macro NLoS (UMa / RMa share the expression):
    ///
    /// `PL = 161.04 − 7.1 log10(W) + 7.5 log10(h) − (24.37 − 3.7 (h/h_BS)²) log10(h_BS)
    ///       + (43.42 − 3.1 log10(h_BS)) (log10(d) − 3) + 20 log10(f_GHz)
    ///       − (3.2 (log10(11.75 h_UT))² − 4.97)`
    MacroNlos {
        street_width_m: f64,
        building_height_m: f64,
        bs_height_m: f64,
        ue_height_m: f64,
    },
}

impl PathLoss {
    /// Path loss in dB at distance `d` meters and carrier `carrier_hz`.
    pub fn db(&self, carrier_hz: f64, d: f64) -> f64 {
        match *self {
            PathLoss::FreeSpace => {
                let lambda = SPEED_OF_LIGHT / carrier_hz;
                -20.0 * log10(lambda / (4.0 * PI * d))
            }
            PathLoss::MacroNlos {
                street_width_m: w,
                building_height_m: h,
                bs_height_m: h_bs,
                ue_height_m: h_ut,
            } => {
                let f_ghz = carrier_hz / 1e9;
                let ue_term = log10(11.75 * h_ut);
                161.04 - 7.1 * log10(w) + 7.5 * log10(h)
                    - (24.37 - 3.7 * (h / h_bs) * (h / h_bs)) * log10(h_bs)
                    + (43.42 - 3.1 * log10(h_bs)) * (log10(d) - 3.0)
                    + 20.0 * log10(f_ghz)
                    - (3.2 * ue_term * ue_term - 4.97)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EnvironmentSpec {
    pub kind: EnvironmentKind,
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    pub area_radius_m: f64,
    /// Downlink SNR per AP (linear).
    pub rho_d: f64,
    pub min_distance_m: f64,
    pub path_loss: PathLoss,
}

/// `ρ_d` from transmit power over thermal noise at 290 K with a noise figure.
pub fn rho_d_from_budget(tx_power_w: f64, bandwidth_hz: f64, noise_figure_db: f64) -> f64 {
    let noise = BOLTZMANN * 290.0 * bandwidth_hz * pow10(noise_figure_db / 10.0);
    tx_power_w / noise
}

pub const DEFAULT_BANDWIDTH_HZ: f64 = 2.0e7;
pub const DEFAULT_TX_POWER_W: f64 = 0.2;
pub const DEFAULT_NOISE_FIGURE_DB: f64 = 9.0;

impl EnvironmentSpec {
    pub fn preset(kind: EnvironmentKind) -> Self {
        let rho_d = rho_d_from_budget(
            DEFAULT_TX_POWER_W,
            DEFAULT_BANDWIDTH_HZ,
            DEFAULT_NOISE_FIGURE_DB,
        );
        let (carrier_hz, area_radius_m, path_loss) = match kind {
            EnvironmentKind::LoS60GHz => (60e9, 500.0, PathLoss::FreeSpace),
            EnvironmentKind::UrbanNLoS2GHz => (
                2e9,
                500.0,
                PathLoss::MacroNlos {
                    street_width_m: 20.0,
                    building_height_m: 20.0,
                    bs_height_m: 25.0,
                    ue_height_m: 1.5,
                },
            ),
            EnvironmentKind::RuralNLoS450MHz => (
                450e6,
                4000.0,
                PathLoss::MacroNlos {
                    street_width_m: 20.0,
                    building_height_m: 5.0,
                    bs_height_m: 35.0,
                    ue_height_m: 1.5,
                },
            ),
        };
        Self {
            kind,
            carrier_hz,
            bandwidth_hz: DEFAULT_BANDWIDTH_HZ,
            area_radius_m,
            rho_d,
            min_distance_m: 1.0,
            path_loss,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |x: f64| x > 0.0 && x.is_finite();
        if !positive(self.area_radius_m) {
            return Err(Error::InvalidArgument("area radius must be positive"));
        }
        if !positive(self.carrier_hz) {
            return Err(Error::InvalidArgument("carrier frequency must be positive"));
        }
        if !positive(self.rho_d) {
            return Err(Error::InvalidArgument("rho_d must be positive"));
        }
        if !positive(self.bandwidth_hz) || !positive(self.min_distance_m) {
            return Err(Error::InvalidArgument(
                "bandwidth and minimum distance must be positive",
            ));
        }
        Ok(())
    }

    pub fn wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn distance(&self, other: &Position) -> f64 {
        hypot(self.x - other.x, self.y - other.y)
    }

    pub fn radius(&self) -> f64 {
        hypot(self.x, self.y)
    }
}

/// M×K fast-fading coefficients `ζ = (x1 + i x2)/√2`.
#[derive(Clone, Debug, PartialEq)]
pub struct FastFading {
    pub zeta: CMatrix,
}

#[derive(Clone, Debug)]
pub struct Scenario {
    pub config: SystemConfig,
    pub env: EnvironmentSpec,
    pub ap_positions: Vec<Position>,
    pub ue_positions: Vec<Position>,
    pub channel: ChannelMatrix,
    pub seed: u64,
}

impl Scenario {
    /// Number of channel entries whose magnitude lies outside `[lo, hi]`.
    pub fn magnitudes_outside(&self, lo: f64, hi: f64) -> usize {
        self.channel
            .entries()
            .as_slice()
            .iter()
            .filter(|z| {
                let a = crate::linalg::cabs(**z);
                !(lo..=hi).contains(&a)
            })
            .count()
    }
}

/// Default plausibility window for channel magnitudes.
pub const PLAUSIBLE_MAGNITUDE: (f64, f64) = (1e-15, 1e-4);

pub fn rng_from_seed(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// `n` points uniform over the disc of the given radius (area-uniform).
pub fn place_uniform_disc<R: Rng + ?Sized>(n: usize, radius: f64, rng: &mut R) -> Vec<Position> {
    (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            let v: f64 = rng.random();
            let r = radius * sqrt(u);
            let (s, c) = sin_cos(TAU * v);
            Position { x: r * c, y: r * s }
        })
        .collect()
}

/// One standard complex Gaussian `(x1 + i x2)/√2` by Box-Muller.
fn rayleigh<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let u1: f64 = rng.random();
    let u2: f64 = rng.random();
    // 1 - u1 lies in (0, 1], so the log is finite
    let r = sqrt(-2.0 * ln(1.0 - u1));
    let (s, c) = sin_cos(TAU * u2);
    c64(r * c, r * s) * core::f64::consts::FRAC_1_SQRT_2
}

pub fn draw_fast_fading<R: Rng + ?Sized>(m: usize, k: usize, rng: &mut R) -> FastFading {
    FastFading {
        zeta: CMatrix::from_fn(m, k, |_, _| rayleigh(rng)),
    }
}

/// Complex large-scale gain at distance `d` (clamped below at the
/// environment's minimum distance).
pub fn large_scale_gain(env: &EnvironmentSpec, d: f64) -> Result<C64> {
    if !(d > 0.0) || !d.is_finite() {
        return Err(Error::InvalidArgument("distance must be positive"));
    }
    let d = d.max(env.min_distance_m);
    match env.path_loss {
        PathLoss::FreeSpace => {
            let lambda = env.wavelength_m();
            let amplitude = lambda / (4.0 * PI * d);
            // reduce d/λ modulo one cycle before forming the angle
            let cycles = d / lambda;
            let frac = cycles - floor(cycles);
            Ok(from_polar(amplitude, -TAU * frac))
        }
        model @ PathLoss::MacroNlos { .. } => {
            let amplitude = pow10(-model.db(env.carrier_hz, d) / 20.0);
            Ok(c64(amplitude, 0.0))
        }
    }
}

pub fn generate_scenario(config: SystemConfig, env: &EnvironmentSpec, seed: u64) -> Result<Scenario> {
    env.validate()?;
    let config = SystemConfig::new(config.num_aps, config.num_ues, config.rho_d)?;
    let mut rng = rng_from_seed(seed);
    let ap_positions = place_uniform_disc(config.num_aps, env.area_radius_m, &mut rng);
    let ue_positions = place_uniform_disc(config.num_ues, env.area_radius_m, &mut rng);
    let fading = draw_fast_fading(config.num_aps, config.num_ues, &mut rng);
    let mut entries = CMatrix::zeros(config.num_aps, config.num_ues);
    for (m, ap) in ap_positions.iter().enumerate() {
        for (k, ue) in ue_positions.iter().enumerate() {
            let gain = large_scale_gain(env, ap.distance(ue))?;
            entries[(m, k)] = gain * fading.zeta[(m, k)];
        }
    }
    Ok(Scenario {
        config,
        env: env.clone(),
        ap_positions,
        ue_positions,
        channel: ChannelMatrix::new(entries),
        seed,
    })
}
