//! Per-TTI stochastic environment: Normal traffic demand, Rayleigh channel
//! quality mapped to SNR and quantized into channel levels, and the service
//! mapping ζ from (PRBs, SNR) to deliverable bits.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::config::{lookup_mcs, McsTable, SliceSpec, SystemConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrafficSample {
    pub slice_id: u32,
    pub tti: u64,
    pub demand_bits: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelSample {
    pub slice_id: u32,
    pub tti: u64,
    /// Raw Rayleigh draw before the SNR map.
    pub raw: f64,
    pub snr_db: f64,
    pub level: usize,
}

/// Mixes a run seed with a slice id and stream tag into an independent seed.
pub fn sub_seed(seed: u64, slice_id: u32, stream: u64) -> u64 {
    // splitmix64 finalizer over a simple combination
    let mut z = seed
        ^ (slice_id as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ stream.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const TRAFFIC_STREAM: u64 = 1;
const CHANNEL_STREAM: u64 = 2;

/// Inverse-CDF Rayleigh quantile.
pub fn rayleigh_quantile(scale: f64, p: f64) -> f64 {
    scale * (-2.0 * (1.0 - p).ln()).sqrt()
}

/// Affine map from raw Rayleigh draws to dB plus level quantization.
///
/// The map is fixed by the reference scale so that a slice's τ changes both
/// the spread and the mean of its SNR.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnrMap {
    lo_raw: f64,
    hi_raw: f64,
    snr_min_db: f64,
    snr_max_db: f64,
    levels: usize,
}

impl SnrMap {
    pub fn new(config: &SystemConfig) -> Self {
        Self {
            lo_raw: rayleigh_quantile(config.rayleigh_ref_scale, 0.01),
            hi_raw: rayleigh_quantile(config.rayleigh_ref_scale, 0.99),
            snr_min_db: config.snr_min_db,
            snr_max_db: config.snr_max_db,
            levels: config.channel_levels as usize,
        }
    }

    pub fn to_db(&self, raw: f64) -> f64 {
        self.snr_min_db
            + (raw - self.lo_raw) / (self.hi_raw - self.lo_raw) * (self.snr_max_db - self.snr_min_db)
    }

    pub fn level(&self, snr_db: f64) -> usize {
        let frac = (snr_db - self.snr_min_db) / (self.snr_max_db - self.snr_min_db);
        let g = (frac * self.levels as f64).floor();
        if g < 0.0 {
            0
        } else {
            (g as usize).min(self.levels - 1)
        }
    }

    pub fn levels(&self) -> usize {
        self.levels
    }
}

/// Demand draw for one TTI: Normal(μ(n), ν) in bits per TTI, clamped at 0.
pub fn draw_traffic<R: Rng + ?Sized>(
    spec: &SliceSpec,
    config: &SystemConfig,
    epoch: u32,
    tti: u64,
    rng: &mut R,
) -> TrafficSample {
    let mean = config.bits_per_tti(spec.mean_rate_at(epoch));
    let std = config.bits_per_tti(spec.traffic_std_mbps);
    let value = if std > 0.0 {
        Normal::new(mean, std).expect("finite std").sample(rng)
    } else {
        mean
    };
    TrafficSample {
        slice_id: spec.id,
        tti,
        demand_bits: value.max(0.0).round() as u64,
    }
}

/// Channel draw for one TTI: Rayleigh(τ), mapped to dB and quantized.
pub fn draw_channel<R: Rng + ?Sized>(spec: &SliceSpec, map: &SnrMap, tti: u64, rng: &mut R) -> ChannelSample {
    // 1 - U lies in (0, 1]
    let u: f64 = 1.0 - rng.random::<f64>();
    let raw = spec.rayleigh_scale * (-2.0 * u.ln()).sqrt();
    let snr_db = map.to_db(raw);
    ChannelSample {
        slice_id: spec.id,
        tti,
        raw,
        snr_db,
        level: map.level(snr_db),
    }
}

/// Bits deliverable in one TTI with `prbs` PRBs at `snr_db`.
pub fn zeta(prbs: u32, snr_db: f64, table: &McsTable) -> u64 {
    let (_, bits) = lookup_mcs(snr_db, table);
    prbs as u64 * bits as u64
}

/// `(Σ_m Γ_m π_m) · T · y`, with `pi` indexed like the table rows.
pub fn capacity_estimate(pi: &[f64], table: &McsTable, epoch_ttis: u32, prbs: u32) -> Result<f64> {
    let sum: f64 = pi.iter().sum();
    if (sum - 1.0).abs() > 1e-9 || pi.len() != table.entries().len() || pi.iter().any(|&p| p < 0.0) {
        return Err(Error::NotNormalized { sum });
    }
    let mean_bits: f64 = pi
        .iter()
        .zip(table.entries())
        .map(|(p, e)| p * e.bits_per_prb_per_tti as f64)
        .sum();
    Ok(mean_bits * epoch_ttis as f64 * prbs as f64)
}

/// Independent traffic and channel streams for one slice in one run.
#[derive(Debug, Clone)]
pub struct SliceGenerator {
    pub spec: SliceSpec,
    traffic_rng: ChaCha8Rng,
    channel_rng: ChaCha8Rng,
}

impl SliceGenerator {
    pub fn new(spec: SliceSpec, run_seed: u64) -> Self {
        Self {
            traffic_rng: ChaCha8Rng::seed_from_u64(sub_seed(run_seed, spec.id, TRAFFIC_STREAM)),
            channel_rng: ChaCha8Rng::seed_from_u64(sub_seed(run_seed, spec.id, CHANNEL_STREAM)),
            spec,
        }
    }

    pub fn traffic(&mut self, config: &SystemConfig, epoch: u32, tti: u64) -> TrafficSample {
        draw_traffic(&self.spec, config, epoch, tti, &mut self.traffic_rng)
    }

    pub fn channel(&mut self, map: &SnrMap, tti: u64) -> ChannelSample {
        draw_channel(&self.spec, map, tti, &mut self.channel_rng)
    }
}
