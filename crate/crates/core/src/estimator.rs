//! Monitoring and prediction of the latency chain.
//!
//! Observed delay-flag switches `a → b` are counted per channel level `g` in
//! an [`ObservationHistory`]. The latent variable `w` is the true channel
//! level; the observed level `g` is a quantized view of it that spills into
//! adjacent levels with probability `level_confusion`. Expectation
//! maximization alternates
//!
//! * posterior `Pr(w | g, a, b) ∝ ρ^w_{a,b} · K(g | w) · Pr(w)`
//! * likelihood `ρ^w_{a,b} ∝ Σ_g h^g_{a,b} Pr(w | g, a, b)`, normalized over `b`
//! * prior `Pr(w) = Σ_{g,a,b} h^g_{a,b} Pr(w | g, a, b) / Σ h`
//!
//! until the largest parameter change falls below the tolerance.
//!
//! Note: the likelihood sums the counts of every observed level, so `ρ^w`
//! depends on `w` only through the posterior.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dtmc::{build_transition_matrix, steady_state, DtmcParams, SteadyState};
use crate::error::{Error, Result};

/// Transition counts `h^g_{a,b}` for one (slice, arm) pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObservationHistory {
    counts: Vec<[[u64; 2]; 2]>,
    total: u64,
}

impl ObservationHistory {
    pub fn new(levels: usize) -> Self {
        Self {
            counts: vec![[[0; 2]; 2]; levels],
            total: 0,
        }
    }

    pub fn levels(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn count(&self, g: usize, a: usize, b: usize) -> u64 {
        self.counts[g][a][b]
    }

    /// Records one `S(g, a) → S(·, b)` switch.
    pub fn record_transition(&mut self, g: usize, a: usize, b: usize) {
        self.add(g, a, b, 1);
    }

    pub fn add(&mut self, g: usize, a: usize, b: usize, n: u64) {
        assert!(g < self.counts.len() && a < 2 && b < 2, "invalid (g, a, b) triple");
        self.counts[g][a][b] += n;
        self.total += n;
    }

    pub fn merge(&mut self, other: &ObservationHistory) {
        for (g, rows) in other.counts.iter().enumerate() {
            for a in 0..2 {
                for b in 0..2 {
                    if rows[a][b] > 0 {
                        self.add(g, a, b, rows[a][b]);
                    }
                }
            }
        }
    }

    /// Removes counts previously merged in (sliding-window eviction).
    pub fn subtract(&mut self, other: &ObservationHistory) {
        for (g, rows) in other.counts.iter().enumerate() {
            for a in 0..2 {
                for b in 0..2 {
                    let n = rows[a][b].min(self.counts[g][a][b]);
                    self.counts[g][a][b] -= n;
                    self.total -= n;
                }
            }
        }
    }

    /// Empirical `h^g_{a,b} / Σ_b h^g_{a,b}`, or `None` for an unseen row.
    pub fn frequency(&self, g: usize, a: usize, b: usize) -> Option<f64> {
        let row = self.counts[g][a][0] + self.counts[g][a][1];
        (row > 0).then(|| self.counts[g][a][b] as f64 / row as f64)
    }

    /// Line-oriented `g,a,b,count` text, non-zero rows only.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# g,a,b,count\n");
        for (g, rows) in self.counts.iter().enumerate() {
            for a in 0..2 {
                for b in 0..2 {
                    if rows[a][b] > 0 {
                        let _ = writeln!(out, "{g},{a},{b},{}", rows[a][b]);
                    }
                }
            }
        }
        out
    }

    pub fn from_text(text: &str, levels: usize) -> Result<Self> {
        let mut h = Self::new(levels);
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |reason: &str| Error::MalformedHistory {
                line: i + 1,
                reason: reason.into(),
            };
            let f: Vec<u64> = line
                .split(',')
                .map(|s| s.trim().parse::<u64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad("expected four non-negative integers"))?;
            if f.len() != 4 {
                return Err(bad("expected g,a,b,count"));
            }
            let (g, a, b) = (f[0] as usize, f[1] as usize, f[2] as usize);
            if g >= levels || a > 1 || b > 1 {
                return Err(bad("triple out of range"));
            }
            h.add(g, a, b, f[3]);
        }
        Ok(h)
    }
}

/// Single-step channel level moves observed for one slice.
///
/// A jump over several levels is credited as a run of single steps, each
/// step also counting as a visit of the level it leaves.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelSteps {
    pub visits: Vec<u64>,
    pub ups: Vec<u64>,
    pub downs: Vec<u64>,
}

impl ChannelSteps {
    pub fn new(levels: usize) -> Self {
        Self {
            visits: vec![0; levels],
            ups: vec![0; levels],
            downs: vec![0; levels],
        }
    }

    pub fn levels(&self) -> usize {
        self.visits.len()
    }

    pub fn record_move(&mut self, from: usize, to: usize) {
        if from == to {
            self.visits[from] += 1;
        } else if to > from {
            for g in from..to {
                self.visits[g] += 1;
                self.ups[g] += 1;
            }
        } else {
            for g in (to + 1..=from).rev() {
                self.visits[g] += 1;
                self.downs[g] += 1;
            }
        }
    }

    pub fn total_visits(&self) -> u64 {
        self.visits.iter().sum()
    }
}

/// Knobs of the EM estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    /// Latent cardinality `W`; `None` means `W = G`.
    pub latent_levels: Option<usize>,
    /// Probability that an observation is quantized into an adjacent level.
    pub level_confusion: f64,
    /// Laplace pseudo-count added per (w, a, b) cell.
    pub smoothing: f64,
    pub max_iter: usize,
    pub tol: f64,
    /// Sliding window in epochs; `None` keeps the whole history.
    pub window_epochs: Option<usize>,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            latent_levels: None,
            level_confusion: 0.05,
            smoothing: 1.0,
            max_iter: 500,
            tol: 1e-6,
            window_epochs: None,
        }
    }
}

impl EstimatorConfig {
    pub fn latent_count(&self, levels: usize) -> usize {
        self.latent_levels.unwrap_or(levels).max(1)
    }
}

/// Emission kernel `K[w][g] = Pr(observed level g | latent w)`.
///
/// For `W = G` it is symmetric and tridiagonal, so also doubly stochastic.
pub fn level_kernel(levels: usize, latent: usize, confusion: f64) -> Vec<Vec<f64>> {
    (0..latent)
        .map(|w| {
            let center = if latent == 1 {
                (levels - 1) as f64 / 2.0
            } else {
                w as f64 * (levels - 1) as f64 / (latent - 1) as f64
            };
            let g0 = center.round() as usize;
            let mut row = vec![0.0; levels];
            let mut spill = 0.0;
            if g0 > 0 {
                row[g0 - 1] = confusion;
                spill += confusion;
            }
            if g0 + 1 < levels {
                row[g0 + 1] = confusion;
                spill += confusion;
            }
            row[g0] = 1.0 - spill;
            row
        })
        .collect()
}

/// Output of [`em_estimate`].
#[derive(Debug, Clone, PartialEq)]
pub struct LatentEstimate {
    /// `rho[w][a][b] = ρ^w_{a,b}`.
    pub rho: Vec<[[f64; 2]; 2]>,
    /// `Pr(w | g, a, b)`, indexed by [`LatentEstimate::posterior_at`].
    posterior: Vec<f64>,
    pub prior: Vec<f64>,
    pub levels: usize,
    pub converged: bool,
    pub iterations: usize,
    /// Largest parameter change of every iteration.
    pub changes: Vec<f64>,
}

impl LatentEstimate {
    pub fn latent_count(&self) -> usize {
        self.rho.len()
    }

    pub fn posterior_at(&self, g: usize, a: usize, b: usize, w: usize) -> f64 {
        let wn = self.latent_count();
        self.posterior[((g * 2 + a) * 2 + b) * wn + w]
    }

    /// Expected counts attributed to latent `w`: `Σ_g h^g_{a,b} Pr(w | g, a, b)`.
    pub fn expected_counts(&self, history: &ObservationHistory) -> Vec<[[f64; 2]; 2]> {
        let mut out = vec![[[0.0; 2]; 2]; self.latent_count()];
        for g in 0..history.levels().min(self.levels) {
            for a in 0..2 {
                for b in 0..2 {
                    let h = history.count(g, a, b) as f64;
                    if h == 0.0 {
                        continue;
                    }
                    for (w, cell) in out.iter_mut().enumerate() {
                        cell[a][b] += h * self.posterior_at(g, a, b, w);
                    }
                }
            }
        }
        out
    }
}

fn posteriors(
    rho: &[[[f64; 2]; 2]],
    prior: &[f64],
    kernel: &[Vec<f64>],
    levels: usize,
) -> Vec<f64> {
    let wn = rho.len();
    let mut post = vec![0.0; levels * 4 * wn];
    for g in 0..levels {
        for a in 0..2 {
            for b in 0..2 {
                let base = ((g * 2 + a) * 2 + b) * wn;
                let mut norm = 0.0;
                for w in 0..wn {
                    let v = rho[w][a][b] * kernel[w][g] * prior[w];
                    post[base + w] = v;
                    norm += v;
                }
                for w in 0..wn {
                    post[base + w] = if norm > 0.0 {
                        post[base + w] / norm
                    } else {
                        1.0 / wn as f64
                    };
                }
            }
        }
    }
    post
}

/// Fits `ρ^w_{a,b}` and `Pr(w)` to the observed counts.
///
/// Priors start uniform and `ρ^w` starts at the Laplace-smoothed empirical
/// frequencies of the level `w` maps onto, which makes the fit deterministic.
pub fn em_estimate(history: &ObservationHistory, config: &EstimatorConfig) -> Result<LatentEstimate> {
    if history.total() == 0 {
        return Err(Error::EmptyHistory);
    }
    let levels = history.levels();
    let wn = config.latent_count(levels);
    let kernel = level_kernel(levels, wn, config.level_confusion);
    let s = config.smoothing;
    let total = history.total() as f64;

    let mut rho: Vec<[[f64; 2]; 2]> = (0..wn)
        .map(|w| {
            let g = kernel[w]
                .iter()
                .enumerate()
                .max_by(|x, y| x.1.total_cmp(y.1))
                .map(|(g, _)| g)
                .unwrap_or(0);
            let mut cell = [[0.5; 2]; 2];
            for a in 0..2 {
                let h0 = history.count(g, a, 0) as f64 + 1.0;
                let h1 = history.count(g, a, 1) as f64 + 1.0;
                cell[a] = [h0 / (h0 + h1), h1 / (h0 + h1)];
            }
            cell
        })
        .collect();
    let mut prior = vec![1.0 / wn as f64; wn];
    let mut changes = Vec::new();
    let mut converged = false;

    for _ in 0..config.max_iter {
        let post = posteriors(&rho, &prior, &kernel, levels);
        let mut expected = vec![[[0.0f64; 2]; 2]; wn];
        for g in 0..levels {
            for a in 0..2 {
                for b in 0..2 {
                    let h = history.count(g, a, b) as f64;
                    if h == 0.0 {
                        continue;
                    }
                    let base = ((g * 2 + a) * 2 + b) * wn;
                    for (w, cell) in expected.iter_mut().enumerate() {
                        cell[a][b] += h * post[base + w];
                    }
                }
            }
        }
        let mut change = 0.0f64;
        for w in 0..wn {
            for a in 0..2 {
                let denom = expected[w][a][0] + expected[w][a][1] + 2.0 * s;
                if denom <= 0.0 {
                    continue;
                }
                for b in 0..2 {
                    let v = (expected[w][a][b] + s) / denom;
                    change = change.max((v - rho[w][a][b]).abs());
                    rho[w][a][b] = v;
                }
            }
            let p = expected[w].iter().flatten().sum::<f64>() / total;
            change = change.max((p - prior[w]).abs());
            prior[w] = p;
        }
        changes.push(change);
        if change < config.tol {
            converged = true;
            break;
        }
    }

    Ok(LatentEstimate {
        posterior: posteriors(&rho, &prior, &kernel, levels),
        iterations: changes.len(),
        rho,
        prior,
        levels,
        converged,
        changes,
    })
}

/// Latent weights `ω(w | Ŝ)`.
///
/// Each observed transition contributes `ρ^w_{α,β}` to the latent level it is
/// attributed to (expected counts plus the Laplace pseudo-count), normalized
/// across levels. With no observations the weights are uniform.
pub fn latent_weights(estimate: &LatentEstimate, history: &ObservationHistory, smoothing: f64) -> Vec<f64> {
    let wn = estimate.latent_count();
    let expected = estimate.expected_counts(history);
    let raw: Vec<f64> = (0..wn)
        .map(|w| {
            let mut acc = 0.0;
            for a in 0..2 {
                for b in 0..2 {
                    acc += (expected[w][a][b] + smoothing) * estimate.rho[w][a][b];
                }
            }
            acc
        })
        .collect();
    let norm: f64 = raw.iter().sum();
    if norm > 0.0 {
        raw.iter().map(|v| v / norm).collect()
    } else {
        vec![1.0 / wn as f64; wn]
    }
}

/// Uniform weights, used before any observation exists.
pub fn uninformed_weights(latent: usize) -> Vec<f64> {
    vec![1.0 / latent.max(1) as f64; latent.max(1)]
}

/// `ρ_{a,b} = Σ_w ω_w ρ^w_{a,b}`.
pub fn inferred_transition(a: usize, b: usize, estimate: &LatentEstimate, weights: &[f64]) -> f64 {
    estimate
        .rho
        .iter()
        .zip(weights)
        .map(|(r, w)| w * r[a][b])
        .sum()
}

/// Markov accuracy `ψ = (Σ ω)² / (W Σ ω²)`, in `[1/W, 1]`.
pub fn markov_accuracy(weights: &[f64]) -> f64 {
    let top = weights.iter().copied().fold(0.0, f64::max);
    if top <= 0.0 {
        return 1.0;
    }
    // scaling by the largest weight keeps the uniform and one-hot cases exact
    let s: f64 = weights.iter().map(|w| w / top).sum();
    let sq: f64 = weights.iter().map(|w| (w / top) * (w / top)).sum();
    (s * s / (weights.len() as f64 * sq)).min(1.0)
}

/// Maps the fitted latent transitions onto chain parameters.
///
/// `m_g = ρ^g_{0,1}`, `l_g = ρ^g_{1,0}` (mixed through `Pr(w | g)` when
/// `W ≠ G`); `p_g`, `q_g` are the empirical single-step frequencies. When
/// `p + q + max(m, l) > 1` at a level, all four are shrunk by the same factor.
pub fn dtmc_params_from_estimates(
    estimate: &LatentEstimate,
    steps: &ChannelSteps,
    config: &EstimatorConfig,
) -> Result<DtmcParams> {
    let levels = steps.levels();
    let wn = estimate.latent_count();
    let kernel = level_kernel(levels, wn, config.level_confusion);
    let mut params = DtmcParams {
        up: vec![0.0; levels],
        down: vec![0.0; levels],
        violate: vec![0.0; levels],
        recover: vec![0.0; levels],
    };
    for g in 0..levels {
        let (m, l) = if wn == levels {
            (estimate.rho[g][0][1], estimate.rho[g][1][0])
        } else {
            let weights: Vec<f64> = (0..wn).map(|w| kernel[w][g] * estimate.prior[w]).collect();
            let norm: f64 = weights.iter().sum();
            let mix = |a: usize, b: usize| {
                if norm > 0.0 {
                    (0..wn).map(|w| weights[w] * estimate.rho[w][a][b]).sum::<f64>() / norm
                } else {
                    (0..wn).map(|w| estimate.rho[w][a][b]).sum::<f64>() / wn as f64
                }
            };
            (mix(0, 1), mix(1, 0))
        };
        let v = steps.visits[g] as f64;
        let p = if v > 0.0 && g + 1 < levels { steps.ups[g] as f64 / v } else { 0.0 };
        let q = if v > 0.0 && g > 0 { steps.downs[g] as f64 / v } else { 0.0 };
        let load = p + q + m.max(l);
        let f = if load > 1.0 { 1.0 / load } else { 1.0 };
        params.up[g] = p * f;
        params.down[g] = q * f;
        params.violate[g] = m * f;
        params.recover[g] = l * f;
    }
    params.validate()?;
    Ok(params)
}

/// Stationary distribution of the fitted chain, restricted
/// to the band of channel levels the slice actually visited.
///
/// Inside the band, zero step or switch probabilities are floored so the
/// restricted chain is irreducible.
pub fn fitted_steady_state(
    estimate: &LatentEstimate,
    steps: &ChannelSteps,
    config: &EstimatorConfig,
) -> Result<SteadyState> {
    const FLOOR: f64 = 1e-9;
    let full = dtmc_params_from_estimates(estimate, steps, config)?;
    let visited: Vec<usize> = (0..steps.levels()).filter(|&g| steps.visits[g] > 0).collect();
    let (lo, hi) = match (visited.first(), visited.last()) {
        (Some(&lo), Some(&hi)) => (lo, hi),
        _ => (0, steps.levels() - 1),
    };
    let mut band = DtmcParams {
        up: full.up[lo..=hi].to_vec(),
        down: full.down[lo..=hi].to_vec(),
        violate: full.violate[lo..=hi].to_vec(),
        recover: full.recover[lo..=hi].to_vec(),
    };
    let n = band.levels();
    band.up[n - 1] = 0.0;
    band.down[0] = 0.0;
    for i in 0..n {
        if i + 1 < n {
            band.up[i] = band.up[i].max(FLOOR);
        }
        if i > 0 {
            band.down[i] = band.down[i].max(FLOOR);
        }
        band.violate[i] = band.violate[i].max(FLOOR);
        band.recover[i] = band.recover[i].max(FLOOR);
        let load = band.up[i] + band.down[i] + band.violate[i].max(band.recover[i]);
        if load > 1.0 {
            band.up[i] /= load;
            band.down[i] /= load;
            band.violate[i] /= load;
            band.recover[i] /= load;
        }
    }
    steady_state(&build_transition_matrix(&band)?)
}
