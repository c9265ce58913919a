#![allow(dead_code)]

use laco::dtmc::{DtmcParams, TransitionMatrix};
use laco::estimator::{level_kernel, ObservationHistory};
use laco::policy::BanditState;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Well separated `ρ^w` rows used by the EM recovery checks (W = G = 4).
pub const TRUE_RHO: [[[f64; 2]; 2]; 4] = [
    [[0.9, 0.1], [0.6, 0.4]],
    [[0.7, 0.3], [0.35, 0.65]],
    [[0.45, 0.55], [0.2, 0.8]],
    [[0.2, 0.8], [0.05, 0.95]],
];

/// Draws `n` transitions from the latent model: `w` uniform, observed level
/// from the emission kernel, origin flag uniform, next flag from `ρ^w_a`.
pub fn synthetic_history(n: usize, confusion: f64, seed: u64) -> ObservationHistory {
    let levels = TRUE_RHO.len();
    let kernel = level_kernel(levels, levels, confusion);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hist = ObservationHistory::new(levels);
    for _ in 0..n {
        let w = rng.random_range(0..levels);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut g = levels - 1;
        for (lvl, p) in kernel[w].iter().enumerate() {
            acc += p;
            if u < acc {
                g = lvl;
                break;
            }
        }
        let a = rng.random_range(0..2);
        let b = usize::from(rng.random::<f64>() >= TRUE_RHO[w][a][0]);
        hist.record_transition(g, a, b);
    }
    hist
}

/// Random irreducible chain parameters with `levels` levels.
pub fn random_params<R: Rng>(levels: usize, rng: &mut R) -> DtmcParams {
    let mut p = DtmcParams {
        up: vec![0.0; levels],
        down: vec![0.0; levels],
        violate: vec![0.0; levels],
        recover: vec![0.0; levels],
    };
    for g in 0..levels {
        if g + 1 < levels {
            p.up[g] = rng.random_range(0.02..0.45);
        }
        if g > 0 {
            p.down[g] = rng.random_range(0.02..0.45);
        }
        let room = 1.0 - p.up[g] - p.down[g];
        p.violate[g] = rng.random_range(0.01..room.max(0.02));
        p.recover[g] = rng.random_range(0.01..room.max(0.02));
    }
    p
}

/// Stationary distribution by repeated squaring of the lazy chain `(I + P) / 2`.
pub fn power_iteration_oracle(m: &TransitionMatrix) -> Vec<f64> {
    let n = m.dim();
    let mut a: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| 0.5 * m.get(i, j) + if i == j { 0.5 } else { 0.0 }).collect())
        .collect();
    for _ in 0..60 {
        let mut b = vec![vec![0.0; n]; n];
        for i in 0..n {
            for k in 0..n {
                let x = a[i][k];
                if x == 0.0 {
                    continue;
                }
                for j in 0..n {
                    b[i][j] += x * a[k][j];
                }
            }
        }
        a = b;
    }
    let row = a[0].clone();
    let s: f64 = row.iter().sum();
    row.iter().map(|v| v / s).collect()
}

/// Stationary Bernoulli bandit. Every arm owns a reward stream, so two
/// policies that pick the same arms see the same rewards.
pub struct BernoulliBandit {
    pub means: Vec<f64>,
    streams: Vec<ChaCha8Rng>,
}

impl BernoulliBandit {
    pub fn new(means: Vec<f64>, seed: u64) -> Self {
        let streams = (0..means.len())
            .map(|k| ChaCha8Rng::seed_from_u64(seed.wrapping_mul(1_000_003).wrapping_add(k as u64)))
            .collect();
        Self { means, streams }
    }

    pub fn pull(&mut self, arm: usize) -> f64 {
        f64::from(u8::from(self.streams[arm].random::<f64>() < self.means[arm]))
    }
}

/// Plays `epochs` rounds: one sweep in index order, then `select`.
pub fn play(
    bandit: &mut BernoulliBandit,
    state: &mut BanditState,
    epochs: usize,
    mut select: impl FnMut(&BanditState) -> usize,
) -> Vec<usize> {
    let mut arms = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        let arm = state.sweep_arm().unwrap_or_else(|| select(state));
        let r = bandit.pull(arm);
        state.update(arm, r).expect("valid arm");
        arms.push(arm);
    }
    arms
}
