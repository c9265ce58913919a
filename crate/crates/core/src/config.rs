//! Domain types shared by every layer: system dimensions, per-slice SLA and
//! traffic/channel parameters, the SNR to MCS table, and the enumeration of
//! the bandit's action space (PRB splits across slices).

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Radio system dimensions and run-wide knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    /// Total PRBs available per TTI.
    pub capacity_prbs: u32,
    /// Allocation granularity in PRBs; must divide `capacity_prbs`.
    pub chunk: u32,
    pub tti_ms: f64,
    /// TTIs per decision epoch.
    pub epoch_ttis: u32,
    /// Number of decision epochs.
    pub horizon: u32,
    /// Number of quantized channel levels `G`.
    pub channel_levels: u32,
    /// Exponent applied to the latency-ok mass in the model reward.
    pub reward_exponent: f64,
    pub rng_seed: u64,
    /// SNR range spanned by the reference Rayleigh distribution's 1st and
    /// 99th percentiles.
    pub snr_min_db: f64,
    pub snr_max_db: f64,
    /// Rayleigh scale whose percentiles define the fixed SNR map.
    pub rayleigh_ref_scale: f64,
    /// Serve packets past their deadline instead of expiring them. Late bits
    /// still count as deficit.
    pub serve_late: bool,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            capacity_prbs: 100,
            chunk: 10,
            tti_ms: 1.0,
            epoch_ttis: 1000,
            horizon: 500,
            channel_levels: 4,
            reward_exponent: 1.0,
            rng_seed: 0,
            snr_min_db: 0.0,
            snr_max_db: 30.0,
            rayleigh_ref_scale: 1.0,
            serve_late: false,
        }
    }
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        if self.capacity_prbs == 0 || self.chunk == 0 {
            return Err(Error::InvalidConfig(
                "capacity_prbs and chunk must be positive".into(),
            ));
        }
        if !self.capacity_prbs.is_multiple_of(self.chunk) {
            return Err(Error::NonDivisibleCapacity {
                capacity: self.capacity_prbs,
                chunk: self.chunk,
            });
        }
        if self.epoch_ttis == 0 || self.horizon == 0 || self.channel_levels == 0 {
            return Err(Error::InvalidConfig(
                "epoch_ttis, horizon and channel_levels must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.reward_exponent) {
            return Err(Error::InvalidConfig(format!(
                "reward_exponent {} outside [0, 1]",
                self.reward_exponent
            )));
        }
        if !(self.tti_ms > 0.0) {
            return Err(Error::InvalidConfig("tti_ms must be positive".into()));
        }
        if !(self.snr_max_db > self.snr_min_db) || !(self.rayleigh_ref_scale > 0.0) {
            return Err(Error::InvalidConfig(
                "snr range must be non-empty and rayleigh_ref_scale positive".into(),
            ));
        }
        Ok(())
    }

    /// Number of allocation chunks, `C / Θ`.
    pub fn chunks(&self) -> u32 {
        self.capacity_prbs / self.chunk
    }

    /// Converts a rate in Mb/s into bits per TTI.
    pub fn bits_per_tti(&self, rate_mbps: f64) -> f64 {
        rate_mbps * 1e3 * self.tti_ms
    }

    /// Latency tolerance expressed in whole TTIs.
    pub fn deadline_ttis(&self, latency_ms: f64) -> u64 {
        (latency_ms / self.tti_ms).floor().max(0.0) as u64
    }
}

/// Time profile of a slice's mean offered load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TrafficModulation {
    Constant,
    /// `μ(n) = low + (high − low)(1 + sin(2πn/period + phase)) / 2`.
    Sinusoidal {
        low: f64,
        high: f64,
        period_epochs: f64,
        phase: f64,
    },
}

/// Per-tenant SLA and stochastic environment parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SliceSpec {
    pub id: u32,
    /// Latency tolerance Δ in ms.
    pub latency_ms: f64,
    /// Contracted throughput Λ in Mb/s (informational).
    pub throughput_sla_mbps: f64,
    /// Mean offered load μ in Mb/s (constant modulation).
    pub traffic_mean_mbps: f64,
    /// Standard deviation ν in Mb/s.
    pub traffic_std_mbps: f64,
    #[serde(default = "constant_modulation")]
    pub modulation: TrafficModulation,
    /// Rayleigh scale τ of the raw channel draw.
    pub rayleigh_scale: f64,
}

fn constant_modulation() -> TrafficModulation {
    TrafficModulation::Constant
}

impl SliceSpec {
    pub fn new(id: u32, latency_ms: f64, mean_mbps: f64, std_mbps: f64, rayleigh_scale: f64) -> Self {
        Self {
            id,
            latency_ms,
            throughput_sla_mbps: mean_mbps,
            traffic_mean_mbps: mean_mbps,
            traffic_std_mbps: std_mbps,
            modulation: TrafficModulation::Constant,
            rayleigh_scale,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.latency_ms > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "slice {}: latency tolerance must be positive",
                self.id
            )));
        }
        if !(self.traffic_std_mbps >= 0.0) || !(self.traffic_mean_mbps >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "slice {}: traffic mean and std must be non-negative",
                self.id
            )));
        }
        if !(self.rayleigh_scale > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "slice {}: rayleigh scale must be positive",
                self.id
            )));
        }
        if let TrafficModulation::Sinusoidal {
            low,
            high,
            period_epochs,
            ..
        } = self.modulation
        {
            if !(low > 0.0 && low <= high) || !(period_epochs > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "slice {}: sinusoid needs 0 < low <= high and a positive period",
                    self.id
                )));
            }
        }
        Ok(())
    }

    /// Mean offered rate (Mb/s) at decision epoch `epoch`.
    pub fn mean_rate_at(&self, epoch: u32) -> f64 {
        match self.modulation {
            TrafficModulation::Constant => self.traffic_mean_mbps,
            TrafficModulation::Sinusoidal {
                low,
                high,
                period_epochs,
                phase,
            } => {
                let angle = 2.0 * PI * epoch as f64 / period_epochs + phase;
                low + (high - low) * (1.0 + angle.sin()) / 2.0
            }
        }
    }
}

/// One PRB split across slices: an arm of the bandit.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SlicingConfiguration {
    pub arm_index: usize,
    pub allocation: Vec<u32>,
}

/// Enumerates every Θ-granular split of `C` PRBs over `num_slices` slices.
///
/// Arms are indexed in lexicographic order of the allocation vector, so
/// `(0, C)` is arm 0 for two slices.
pub fn enumerate_arms(num_slices: usize, config: &SystemConfig) -> Result<Vec<SlicingConfiguration>> {
    if num_slices == 0 {
        return Err(Error::NoSlices);
    }
    if config.chunk == 0 || !config.capacity_prbs.is_multiple_of(config.chunk) {
        return Err(Error::NonDivisibleCapacity {
            capacity: config.capacity_prbs,
            chunk: config.chunk,
        });
    }
    let chunks = config.chunks();
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(num_slices);
    compositions(chunks, num_slices, &mut current, &mut |parts| {
        out.push(SlicingConfiguration {
            arm_index: out.len(),
            allocation: parts.iter().map(|&k| k * config.chunk).collect(),
        });
    });
    Ok(out)
}

fn compositions(remaining: u32, parts_left: usize, current: &mut Vec<u32>, emit: &mut dyn FnMut(&[u32])) {
    if parts_left == 1 {
        current.push(remaining);
        emit(current);
        current.pop();
        return;
    }
    for k in 0..=remaining {
        current.push(k);
        compositions(remaining - k, parts_left - 1, current, emit);
        current.pop();
    }
}

/// `(n + k − 1)! / ((k − 1)! n!)`: number of ways to split `n` chunks over `k` slices.
pub fn arm_count(chunks: u64, num_slices: u64) -> u64 {
    if num_slices == 0 {
        return 0;
    }
    binomial(chunks + num_slices - 1, num_slices - 1)
}

fn binomial(n: u64, k: u64) -> u64 {
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc * (n - i) / (i + 1))
}

/// A row of the SNR to MCS mapping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McsEntry {
    pub snr_threshold_db: f64,
    pub mcs_index: i32,
    pub bits_per_prb_per_tti: u32,
}

/// Sentinel returned by [`lookup_mcs`] below the lowest threshold.
pub const OUT_OF_RANGE_MCS: i32 = -1;

const DEFAULT_TABLE: &str = include_str!("../data/mcs_table.txt");

/// Ordered SNR thresholds with their MCS index and per-PRB capacity Γ.
#[derive(Debug, Clone, PartialEq)]
pub struct McsTable {
    entries: Vec<McsEntry>,
}

impl McsTable {
    pub fn new(entries: Vec<McsEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::EmptyMcsTable);
        }
        for (i, pair) in entries.windows(2).enumerate() {
            if !(pair[1].snr_threshold_db > pair[0].snr_threshold_db) {
                return Err(Error::MalformedMcsTable {
                    line: i + 2,
                    reason: "SNR thresholds must be strictly increasing".into(),
                });
            }
            if pair[1].bits_per_prb_per_tti < pair[0].bits_per_prb_per_tti {
                return Err(Error::MalformedMcsTable {
                    line: i + 2,
                    reason: "bits per PRB must be non-decreasing".into(),
                });
            }
        }
        if entries.iter().any(|e| e.bits_per_prb_per_tti == 0) {
            return Err(Error::MalformedMcsTable {
                line: 0,
                reason: "bits per PRB must be positive".into(),
            });
        }
        Ok(Self { entries })
    }

    /// The table shipped with the crate (15 CQI rows).
    pub fn embedded() -> Self {
        Self::parse(DEFAULT_TABLE).expect("embedded MCS table is well-formed")
    }

    /// Parses `threshold_db, mcs_index, bits_per_prb_per_tti` rows separated
    /// by whitespace or commas. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .collect();
            let bad = |reason: &str| Error::MalformedMcsTable {
                line: lineno + 1,
                reason: reason.to_string(),
            };
            if fields.len() != 3 {
                return Err(bad("expected 3 fields"));
            }
            entries.push(McsEntry {
                snr_threshold_db: fields[0].parse().map_err(|_| bad("bad threshold"))?,
                mcs_index: fields[1].parse().map_err(|_| bad("bad mcs index"))?,
                bits_per_prb_per_tti: fields[2].parse().map_err(|_| bad("bad bit count"))?,
            });
        }
        Self::new(entries)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn entries(&self) -> &[McsEntry] {
        &self.entries
    }

    pub fn max_bits(&self) -> u32 {
        self.entries.last().map_or(0, |e| e.bits_per_prb_per_tti)
    }
}

/// Returns `(mcs_index, Γ)` for the highest threshold not above `snr_db`,
/// or `(OUT_OF_RANGE_MCS, 0)` below the table.
pub fn lookup_mcs(snr_db: f64, table: &McsTable) -> (i32, u32) {
    let idx = table
        .entries
        .partition_point(|e| e.snr_threshold_db <= snr_db);
    if idx == 0 {
        (OUT_OF_RANGE_MCS, 0)
    } else {
        let e = &table.entries[idx - 1];
        (e.mcs_index, e.bits_per_prb_per_tti)
    }
}
