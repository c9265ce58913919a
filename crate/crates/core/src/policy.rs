//! Arm-selection policies and reward functions.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::config::{McsTable, SlicingConfiguration};
use crate::dtmc::{latency_ok_mass, SteadyState};
use crate::env::zeta;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Laco,
    Ucb,
    Ts,
    Rr,
    Oracle,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 5] = [Self::Laco, Self::Ucb, Self::Ts, Self::Rr, Self::Oracle];

    pub fn name(self) -> &'static str {
        match self {
            Self::Laco => "laco",
            Self::Ucb => "ucb",
            Self::Ts => "ts",
            Self::Rr => "rr",
            Self::Oracle => "oracle",
        }
    }

    pub fn uses_arms(self) -> bool {
        self != Self::Rr
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown policy '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardKind {
    Model,
    Classic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardSample {
    pub arm: usize,
    pub epoch: u32,
    pub value: f64,
    pub kind: RewardKind,
}

/// How a new reward is folded into `ρ̂_σ`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanUpdate {
    #[default]
    RunningMean,
    Overwrite,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BanditState {
    pulls: Vec<u64>,
    means: Vec<f64>,
    psi: Vec<f64>,
    rule: MeanUpdate,
}

impl BanditState {
    pub fn new(arms: usize) -> Self {
        Self::with_rule(arms, MeanUpdate::RunningMean)
    }

    pub fn with_rule(arms: usize, rule: MeanUpdate) -> Self {
        Self {
            pulls: vec![0; arms],
            means: vec![0.0; arms],
            psi: vec![1.0; arms],
            rule,
        }
    }

    pub fn arms(&self) -> usize {
        self.pulls.len()
    }

    pub fn pulls(&self) -> &[u64] {
        &self.pulls
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn psi(&self) -> &[f64] {
        &self.psi
    }

    pub fn total_pulls(&self) -> u64 {
        self.pulls.iter().sum()
    }

    pub fn set_psi(&mut self, arm: usize, psi: f64) -> Result<()> {
        let slot = self.psi.get_mut(arm).ok_or(Error::InvalidArm(arm))?;
        *slot = psi;
        Ok(())
    }

    /// Next arm of the initialization sweep, if any arm is still unplayed.
    pub fn sweep_arm(&self) -> Option<usize> {
        self.pulls.iter().position(|&z| z == 0)
    }

    pub fn update(&mut self, arm: usize, reward: f64) -> Result<()> {
        if arm >= self.arms() {
            return Err(Error::InvalidArm(arm));
        }
        self.pulls[arm] += 1;
        match self.rule {
            MeanUpdate::RunningMean => {
                self.means[arm] += (reward - self.means[arm]) / self.pulls[arm] as f64;
            }
            MeanUpdate::Overwrite => self.means[arm] = reward,
        }
        Ok(())
    }
}

/// `(latency-ok mass)^η`.
pub fn model_reward(pi: &SteadyState, eta: f64) -> f64 {
    latency_ok_mass(pi).clamp(0.0, 1.0).powf(eta)
}

/// `Σ_i (ζ_i − λ_i / Δ_i)`: service per TTI minus the arrival rate, where
/// `λ_i` counts the bits arriving in a window of `Δ_i` TTIs.
pub fn classic_reward(zeta_bits: &[f64], window_bits: &[f64], deadline_ttis: &[f64]) -> f64 {
    zeta_bits
        .iter()
        .zip(window_bits)
        .zip(deadline_ttis)
        .map(|((z, l), d)| z - l / d.max(1.0))
        .sum()
}

/// [`classic_reward`] with `ζ` looked up from the MCS table.
pub fn classic_reward_at(
    arm: &SlicingConfiguration,
    snr_db: &[f64],
    window_bits: &[f64],
    deadline_ttis: &[f64],
    table: &McsTable,
) -> f64 {
    let z: Vec<f64> = arm
        .allocation
        .iter()
        .zip(snr_db)
        .map(|(&y, &s)| zeta(y, s, table) as f64)
        .collect();
    classic_reward(&z, window_bits, deadline_ttis)
}

/// Affine map of classic rewards onto `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardScale {
    pub lo: f64,
    pub hi: f64,
}

impl RewardScale {
    pub fn apply(&self, x: f64) -> f64 {
        if self.hi <= self.lo {
            return 0.5;
        }
        ((x - self.lo) / (self.hi - self.lo)).clamp(0.0, 1.0)
    }
}

fn argmax(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, v) in values.into_iter().enumerate() {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

fn check_initialized(state: &BanditState) -> Result<()> {
    match state.sweep_arm() {
        Some(arm) => Err(Error::Uninitialized(arm)),
        None if state.arms() == 0 => Err(Error::InvalidArm(0)),
        None => Ok(()),
    }
}

fn confidence_index(state: &BanditState, psi: impl Fn(usize) -> f64) -> usize {
    let log_n = (state.total_pulls() as f64).ln();
    argmax((0..state.arms()).map(|k| {
        let z = state.pulls[k] as f64;
        state.means[k] + psi(k) * (2.0 * log_n / z).sqrt()
    }))
}

/// `argmax ρ̂_σ + ψ(σ) √(2 log Σ z / z_σ)`, lowest index on ties.
pub fn laco_select(state: &BanditState) -> Result<usize> {
    check_initialized(state)?;
    Ok(confidence_index(state, |k| state.psi[k]))
}

/// UCB1, i.e. [`laco_select`] with `ψ ≡ 1`.
pub fn ucb_select(state: &BanditState) -> Result<usize> {
    check_initialized(state)?;
    Ok(confidence_index(state, |_| 1.0))
}

/// Gaussian Thompson sampling: one draw from `N(ρ̂_σ, v / (z_σ + 1))` per
/// arm, play the largest. Unplayed arms draw from the prior `N(0, v)`.
pub fn ts_select<R: Rng + ?Sized>(state: &BanditState, prior_variance: f64, rng: &mut R) -> Result<usize> {
    if state.arms() == 0 {
        return Err(Error::InvalidArm(0));
    }
    let draws: Vec<f64> = (0..state.arms())
        .map(|k| {
            let sd = (prior_variance / (state.pulls[k] as f64 + 1.0)).sqrt();
            let mean = state.means[k];
            if sd > 0.0 {
                Normal::new(mean, sd).map(|n| n.sample(rng)).unwrap_or(mean)
            } else {
                mean
            }
        })
        .collect();
    Ok(argmax(draws))
}

/// Arm with the largest true mean, lowest index on ties.
pub fn oracle_select(true_means: &[f64]) -> usize {
    argmax(true_means.iter().copied())
}

/// One TTI of round-robin: chunks go one at a time to the backlogged slices,
/// starting at slice `start` and cycling. Slices with an empty buffer get
/// nothing; with no backlog anywhere nothing is allocated.
pub fn round_robin_allocate(backlogged: &[bool], capacity: u32, chunk: u32, start: usize) -> Vec<u32> {
    let n = backlogged.len();
    let mut alloc = vec![0u32; n];
    let active: Vec<usize> = (0..n).map(|k| (start + k) % n.max(1)).filter(|&i| backlogged[i]).collect();
    if active.is_empty() || chunk == 0 {
        return alloc;
    }
    for c in 0..(capacity / chunk) as usize {
        alloc[active[c % active.len()]] += chunk;
    }
    alloc
}
