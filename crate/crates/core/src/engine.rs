//! TTI-granular simulation: per-slice virtual queues, the epoch loop driven
//! by a policy, oracle replays and regret accounting.

use std::collections::VecDeque;
use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{enumerate_arms, lookup_mcs, McsTable, SliceSpec, SlicingConfiguration, SystemConfig};
use crate::env::{sub_seed, SliceGenerator, SnrMap};
use crate::error::{Error, Result};
use crate::estimator::{
    em_estimate, fitted_steady_state, latent_weights, markov_accuracy, ChannelSteps, EstimatorConfig,
    ObservationHistory,
};
use crate::policy::{
    classic_reward, laco_select, model_reward, oracle_select, round_robin_allocate, ts_select, ucb_select,
    BanditState, MeanUpdate, PolicyKind, RewardScale,
};

const POLICY_STREAM: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Packet {
    pub arrival: u64,
    pub remaining: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ServedRecord {
    pub bits: u64,
    pub latency_ttis: u64,
}

/// What happened to one slice's queue in one TTI.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TtiOutcome {
    pub offered: u64,
    pub served: u64,
    pub expired: u64,
    /// Bits served after their deadline (only with `serve_late`).
    pub late: u64,
    /// `Σ bits · latency` over the bits served this TTI.
    pub latency_bits: u64,
    pub max_latency: u64,
    /// Delay flag `d`: some bit expired or was served late.
    pub violated: bool,
}

/// FIFO of aggregate packets for one slice.
#[derive(Debug, Clone, Default)]
pub struct VirtualQueue {
    fifo: VecDeque<Packet>,
    backlog: u64,
    pub dropped_bits: u64,
    pub late_bits: u64,
    /// Served chunks since the last [`VirtualQueue::take_served`].
    served: Vec<ServedRecord>,
    log_served: bool,
}

impl VirtualQueue {
    pub fn new() -> Self {
        Self::default()
    }

    /// A queue that keeps a log of every served chunk.
    pub fn logging() -> Self {
        Self {
            log_served: true,
            ..Self::default()
        }
    }

    pub fn backlog_bits(&self) -> u64 {
        self.backlog
    }

    pub fn len(&self) -> usize {
        self.fifo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fifo.is_empty()
    }

    pub fn take_served(&mut self) -> Vec<ServedRecord> {
        std::mem::take(&mut self.served)
    }

    /// Enqueue `demand`, expire packets older than `deadline` TTIs (unless
    /// `serve_late`), then serve up to `budget` bits head-first.
    pub fn step(&mut self, tti: u64, demand: u64, budget: u64, deadline: u64, serve_late: bool) -> TtiOutcome {
        let mut out = TtiOutcome {
            offered: demand,
            ..TtiOutcome::default()
        };
        if demand > 0 {
            self.fifo.push_back(Packet {
                arrival: tti,
                remaining: demand,
            });
            self.backlog += demand;
        }
        if !serve_late {
            while let Some(head) = self.fifo.front() {
                if tti - head.arrival <= deadline {
                    break;
                }
                out.expired += head.remaining;
                self.fifo.pop_front();
            }
            self.backlog -= out.expired;
            self.dropped_bits += out.expired;
        }
        let mut budget = budget;
        while budget > 0 {
            let Some(head) = self.fifo.front_mut() else { break };
            let take = head.remaining.min(budget);
            let latency = tti - head.arrival;
            head.remaining -= take;
            budget -= take;
            out.served += take;
            out.latency_bits += take * latency;
            out.max_latency = out.max_latency.max(latency);
            if latency > deadline {
                out.late += take;
            }
            if self.log_served {
                self.served.push(ServedRecord {
                    bits: take,
                    latency_ttis: latency,
                });
            }
            if head.remaining == 0 {
                self.fifo.pop_front();
            }
        }
        self.backlog -= out.served;
        self.late_bits += out.late;
        out.violated = out.expired > 0 || out.late > 0;
        out
    }
}

/// Knobs of the learning policies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyParams {
    pub ts_prior_variance: f64,
    pub mean_update: MeanUpdate,
    pub psi_scope: PsiScope,
    pub estimator: EstimatorConfig,
}

impl Default for PolicyParams {
    fn default() -> Self {
        Self {
            ts_prior_variance: 1.0,
            mean_update: MeanUpdate::RunningMean,
            psi_scope: PsiScope::PerArm,
            estimator: EstimatorConfig::default(),
        }
    }
}

/// Which history feeds the latent weights behind `ψ(σ)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsiScope {
    #[default]
    PerArm,
    Global,
}

/// Everything a run needs besides the policy and the seed.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub system: SystemConfig,
    pub slices: Vec<SliceSpec>,
    pub table: McsTable,
    pub params: PolicyParams,
    arms: Vec<SlicingConfiguration>,
    snr_map: SnrMap,
}

impl Scenario {
    pub fn new(system: SystemConfig, slices: Vec<SliceSpec>, table: McsTable, params: PolicyParams) -> Result<Self> {
        system.validate()?;
        for s in &slices {
            s.validate()?;
        }
        let arms = enumerate_arms(slices.len(), &system)?;
        Ok(Self {
            snr_map: SnrMap::new(&system),
            system,
            slices,
            table,
            params,
            arms,
        })
    }

    pub fn arms(&self) -> &[SlicingConfiguration] {
        &self.arms
    }

    pub fn levels(&self) -> usize {
        self.system.channel_levels as usize
    }

    fn deadlines(&self) -> Vec<u64> {
        self.slices.iter().map(|s| self.system.deadline_ttis(s.latency_ms)).collect()
    }

    /// Normalization of classic rewards: from no service at all to every PRB
    /// at the best MCS, both against the nominal mean demand.
    pub fn classic_scale(&self) -> RewardScale {
        let demand: f64 = self
            .slices
            .iter()
            .map(|s| self.system.bits_per_tti(s.traffic_mean_mbps))
            .sum();
        RewardScale {
            lo: -demand,
            hi: self.system.capacity_prbs as f64 * self.table.max_bits() as f64 - demand,
        }
    }
}

/// Realized demand and channel of every slice over one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochTrace {
    pub epoch: u32,
    pub first_tti: u64,
    pub demand: Vec<Vec<u64>>,
    pub snr_db: Vec<Vec<f64>>,
    pub level: Vec<Vec<usize>>,
    pub bits_per_prb: Vec<Vec<u32>>,
}

/// Seeded per-slice generators producing one [`EpochTrace`] at a time.
#[derive(Debug, Clone)]
pub struct Environment {
    generators: Vec<SliceGenerator>,
    next_epoch: u32,
}

impl Environment {
    pub fn new(scenario: &Scenario, seed: u64) -> Self {
        Self {
            generators: scenario
                .slices
                .iter()
                .map(|s| SliceGenerator::new(s.clone(), seed))
                .collect(),
            next_epoch: 0,
        }
    }

    pub fn next_epoch(&mut self, scenario: &Scenario) -> EpochTrace {
        let epoch = self.next_epoch;
        self.next_epoch += 1;
        let ttis = scenario.system.epoch_ttis as u64;
        let first_tti = epoch as u64 * ttis;
        let n = self.generators.len();
        let mut trace = EpochTrace {
            epoch,
            first_tti,
            demand: vec![Vec::with_capacity(ttis as usize); n],
            snr_db: vec![Vec::with_capacity(ttis as usize); n],
            level: vec![Vec::with_capacity(ttis as usize); n],
            bits_per_prb: vec![Vec::with_capacity(ttis as usize); n],
        };
        for (i, g) in self.generators.iter_mut().enumerate() {
            for t in first_tti..first_tti + ttis {
                trace.demand[i].push(g.traffic(&scenario.system, epoch, t).demand_bits);
                let ch = g.channel(&scenario.snr_map, t);
                trace.snr_db[i].push(ch.snr_db);
                trace.level[i].push(ch.level);
                trace.bits_per_prb[i].push(lookup_mcs(ch.snr_db, &scenario.table).1);
            }
        }
        trace
    }
}

/// Per-slice, per-PRB-count scores of every epoch: the `η`-powered fraction
/// of TTIs without a delay violation when the epoch's realized trace is
/// replayed from an empty queue.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleTable {
    chunk: u32,
    eta: f64,
    /// `scores[epoch][slice][y / chunk]`.
    scores: Vec<Vec<Vec<f64>>>,
}

impl OracleTable {
    pub fn build(scenario: &Scenario, seed: u64) -> Self {
        let mut env = Environment::new(scenario, seed);
        let scores = (0..scenario.system.horizon)
            .map(|_| epoch_scores(scenario, &env.next_epoch(scenario)))
            .collect();
        Self {
            chunk: scenario.system.chunk,
            eta: scenario.system.reward_exponent,
            scores,
        }
    }

    pub fn epochs(&self) -> usize {
        self.scores.len()
    }

    pub fn slice_score(&self, epoch: usize, slice: usize, prbs: u32) -> f64 {
        self.scores[epoch][slice][(prbs / self.chunk) as usize]
    }

    pub fn arm_value(&self, epoch: usize, arm: &SlicingConfiguration) -> f64 {
        let s = &self.scores[epoch];
        arm.allocation
            .iter()
            .enumerate()
            .map(|(i, &y)| s[i][(y / self.chunk) as usize])
            .sum::<f64>()
            / s.len() as f64
    }

    pub fn arm_values(&self, epoch: usize, arms: &[SlicingConfiguration]) -> Vec<f64> {
        arms.iter().map(|a| self.arm_value(epoch, a)).collect()
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }
}

fn epoch_scores(scenario: &Scenario, trace: &EpochTrace) -> Vec<Vec<f64>> {
    let deadlines = scenario.deadlines();
    let sys = &scenario.system;
    (0..scenario.slices.len())
        .map(|i| {
            (0..=sys.chunks())
                .map(|c| {
                    let y = c * sys.chunk;
                    let mut q = VirtualQueue::new();
                    let mut ok = 0u64;
                    for (k, (&demand, &bits)) in trace.demand[i].iter().zip(&trace.bits_per_prb[i]).enumerate() {
                        let out = q.step(
                            trace.first_tti + k as u64,
                            demand,
                            y as u64 * bits as u64,
                            deadlines[i],
                            sys.serve_late,
                        );
                        ok += u64::from(!out.violated);
                    }
                    (ok as f64 / trace.demand[i].len().max(1) as f64).powf(sys.reward_exponent)
                })
                .collect()
        })
        .collect()
}

/// Per-slice statistics of one epoch.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SliceEpochStats {
    pub offered_bits: u64,
    pub served_bits: u64,
    pub dropped_bits: u64,
    pub late_bits: u64,
    /// Queue content at the end of the epoch.
    pub backlog_bits: u64,
    /// Mean PRBs held over the epoch.
    pub mean_prbs: f64,
    /// Bit-weighted mean latency of served bits.
    pub mean_latency_ms: f64,
    pub max_latency_ms: f64,
    pub mean_snr_db: f64,
    pub violation_ttis: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: u32,
    /// `None` for round-robin, which has no arm.
    pub arm: Option<usize>,
    pub slices: Vec<SliceEpochStats>,
    pub reward: Option<f64>,
    pub psi: Option<f64>,
    /// Best and played arm value from the oracle table, when available.
    pub oracle_best: Option<f64>,
    pub oracle_value: Option<f64>,
}

/// How PRBs are split during an epoch.
#[derive(Debug, Clone, Copy)]
pub enum Allocation<'a> {
    Arm(&'a SlicingConfiguration),
    RoundRobin,
}

/// Mutable per-run simulation state.
#[derive(Debug, Clone)]
pub struct SimState {
    pub queues: Vec<VirtualQueue>,
    /// `(g, d)` of every slice after the previous TTI.
    prev: Vec<Option<(usize, usize)>>,
    pub steps: Vec<ChannelSteps>,
    rr_cursor: usize,
}

impl SimState {
    pub fn new(scenario: &Scenario) -> Self {
        let n = scenario.slices.len();
        Self {
            queues: (0..n).map(|_| VirtualQueue::logging()).collect(),
            prev: vec![None; n],
            steps: vec![ChannelSteps::new(scenario.levels()); n],
            rr_cursor: 0,
        }
    }
}

/// Runs one epoch and returns its record together with the transitions
/// observed by every slice during it.
pub fn run_epoch(
    scenario: &Scenario,
    allocation: Allocation<'_>,
    state: &mut SimState,
    trace: &EpochTrace,
) -> (EpochRecord, Vec<ObservationHistory>) {
    let sys = &scenario.system;
    let n = scenario.slices.len();
    let deadlines = scenario.deadlines();
    let ttis = trace.demand.first().map_or(0, Vec::len);
    let mut stats = vec![SliceEpochStats::default(); n];
    let mut latency_bits = vec![0u64; n];
    let mut prb_sum = vec![0u64; n];
    let mut observed = vec![ObservationHistory::new(scenario.levels()); n];

    for k in 0..ttis {
        let tti = trace.first_tti + k as u64;
        let alloc: Vec<u32> = match allocation {
            Allocation::Arm(arm) => arm.allocation.clone(),
            Allocation::RoundRobin => {
                let backlogged: Vec<bool> = (0..n)
                    .map(|i| state.queues[i].backlog_bits() + trace.demand[i][k] > 0 && trace.bits_per_prb[i][k] > 0)
                    .collect();
                let a = round_robin_allocate(&backlogged, sys.capacity_prbs, sys.chunk, state.rr_cursor);
                state.rr_cursor = (state.rr_cursor + 1) % n;
                a
            }
        };
        for i in 0..n {
            let budget = alloc[i] as u64 * trace.bits_per_prb[i][k] as u64;
            let out = state.queues[i].step(tti, trace.demand[i][k], budget, deadlines[i], sys.serve_late);
            let st = &mut stats[i];
            st.offered_bits += out.offered;
            st.served_bits += out.served;
            st.dropped_bits += out.expired;
            st.late_bits += out.late;
            st.max_latency_ms = st.max_latency_ms.max(out.max_latency as f64 * sys.tti_ms);
            st.mean_snr_db += trace.snr_db[i][k];
            st.violation_ttis += u32::from(out.violated);
            latency_bits[i] += out.latency_bits;
            prb_sum[i] += alloc[i] as u64;

            let g = trace.level[i][k];
            let d = usize::from(out.violated);
            if let Some((pg, pd)) = state.prev[i] {
                observed[i].record_transition(pg, pd, d);
                state.steps[i].record_move(pg, g);
            }
            state.prev[i] = Some((g, d));
        }
    }
    for i in 0..n {
        let st = &mut stats[i];
        st.backlog_bits = state.queues[i].backlog_bits();
        if ttis > 0 {
            st.mean_snr_db /= ttis as f64;
            st.mean_prbs = prb_sum[i] as f64 / ttis as f64;
        }
        if st.served_bits > 0 {
            st.mean_latency_ms = latency_bits[i] as f64 / st.served_bits as f64 * sys.tti_ms;
        }
        state.queues[i].take_served();
    }
    let record = EpochRecord {
        epoch: trace.epoch,
        arm: match allocation {
            Allocation::Arm(a) => Some(a.arm_index),
            Allocation::RoundRobin => None,
        },
        slices: stats,
        reward: None,
        psi: None,
        oracle_best: None,
        oracle_value: None,
    };
    (record, observed)
}

/// Counts of one (slice, arm) pair, optionally over the most recent epochs only.
#[derive(Debug, Clone)]
struct ArmHistory {
    total: ObservationHistory,
    recent: VecDeque<ObservationHistory>,
    window: Option<usize>,
}

impl ArmHistory {
    fn new(levels: usize, window: Option<usize>) -> Self {
        Self {
            total: ObservationHistory::new(levels),
            recent: VecDeque::new(),
            window,
        }
    }

    fn push(&mut self, epoch: ObservationHistory) {
        self.total.merge(&epoch);
        if let Some(w) = self.window {
            self.recent.push_back(epoch);
            while self.recent.len() > w.max(1) {
                let old = self.recent.pop_front().expect("non-empty window");
                self.total.subtract(&old);
            }
        }
    }
}

/// Complete output of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub policy: PolicyKind,
    pub seed: u64,
    pub system: SystemConfig,
    pub slices: Vec<SliceSpec>,
    pub records: Vec<EpochRecord>,
}

/// A run that stopped early, with everything recorded up to the failure.
#[derive(Debug, Clone, PartialEq)]
pub struct RunAborted {
    pub error: Error,
    pub partial: Box<RunTrace>,
}

impl std::fmt::Display for RunAborted {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "run aborted after {} epochs: {}", self.partial.records.len(), self.error)
    }
}

impl std::error::Error for RunAborted {}

impl RunTrace {
    pub fn arm_sequence(&self) -> Vec<Option<usize>> {
        self.records.iter().map(|r| r.arm).collect()
    }

    /// Cumulative dropped bits per slice after every epoch.
    pub fn cumulative_dropped(&self) -> Vec<Vec<u64>> {
        let n = self.slices.len();
        let mut acc = vec![0u64; n];
        self.records
            .iter()
            .map(|r| {
                for (a, s) in acc.iter_mut().zip(&r.slices) {
                    *a += s.dropped_bits;
                }
                acc.clone()
            })
            .collect()
    }

    pub fn total_dropped(&self) -> u64 {
        self.records.iter().flat_map(|r| &r.slices).map(|s| s.dropped_bits).sum()
    }

    pub fn total_offered(&self) -> u64 {
        self.records.iter().flat_map(|r| &r.slices).map(|s| s.offered_bits).sum()
    }

    pub fn total_served(&self) -> u64 {
        self.records.iter().flat_map(|r| &r.slices).map(|s| s.served_bits).sum()
    }

    pub fn final_backlog(&self) -> u64 {
        self.records
            .last()
            .map_or(0, |r| r.slices.iter().map(|s| s.backlog_bits).sum())
    }

    /// `offered = served + dropped + backlog` for every slice.
    pub fn conserves_bits(&self) -> bool {
        (0..self.slices.len()).all(|i| {
            let sum = |f: fn(&SliceEpochStats) -> u64| self.records.iter().map(|r| f(&r.slices[i])).sum::<u64>();
            let backlog = self.records.last().map_or(0, |r| r.slices[i].backlog_bits);
            sum(|s| s.offered_bits) == sum(|s| s.served_bits) + sum(|s| s.dropped_bits) + backlog
        })
    }

    /// Bit-weighted mean latency of all served bits, in ms.
    pub fn mean_latency_ms(&self) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for s in self.records.iter().flat_map(|r| &r.slices) {
            num += s.mean_latency_ms * s.served_bits as f64;
            den += s.served_bits as f64;
        }
        if den > 0.0 {
            num / den
        } else {
            0.0
        }
    }

    /// First epoch after which the played arm never changes.
    pub fn convergence_epoch(&self) -> Option<u32> {
        let arms = self.arm_sequence();
        let last = *arms.last()?;
        last?;
        let k = arms.iter().rposition(|a| *a != last).map_or(0, |p| p + 1);
        Some(self.records[k].epoch)
    }

    /// Cumulative `Σ (best − played)` from the oracle columns.
    pub fn regret_curve(&self) -> Option<Vec<f64>> {
        let mut acc = 0.0;
        self.records
            .iter()
            .map(|r| {
                acc += r.oracle_best? - r.oracle_value?;
                Some(acc)
            })
            .collect()
    }

    pub fn csv_header(&self) -> String {
        let mut h = String::from("epoch,arm,reward,psi,oracle_best,oracle_value");
        for s in &self.slices {
            let id = s.id;
            let _ = write!(
                h,
                ",s{id}_prbs,s{id}_offered,s{id}_served,s{id}_dropped,s{id}_late,s{id}_backlog,\
                 s{id}_mean_latency_ms,s{id}_max_latency_ms,s{id}_mean_snr_db,s{id}_violation_ttis"
            );
        }
        h
    }

    pub fn to_csv(&self) -> String {
        fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
            v.map(|x| x.to_string()).unwrap_or_default()
        }
        let mut out = self.csv_header();
        out.push('\n');
        for r in &self.records {
            let _ = write!(
                out,
                "{},{},{},{},{},{}",
                r.epoch,
                opt(r.arm),
                opt(r.reward),
                opt(r.psi),
                opt(r.oracle_best),
                opt(r.oracle_value)
            );
            for s in &r.slices {
                let _ = write!(
                    out,
                    ",{},{},{},{},{},{},{},{},{},{}",
                    s.mean_prbs,
                    s.offered_bits,
                    s.served_bits,
                    s.dropped_bits,
                    s.late_bits,
                    s.backlog_bits,
                    s.mean_latency_ms,
                    s.max_latency_ms,
                    s.mean_snr_db,
                    s.violation_ttis
                );
            }
            out.push('\n');
        }
        out
    }
}

/// Runs `policy` for `system.horizon` epochs.
///
/// Learning policies first sweep every arm once in index order. Afterwards
/// each epoch selects an arm, runs it, folds the reward into the bandit
/// state and, for LACO, refits the latency chain of the played arm and
/// refreshes its `ψ`. The oracle table, when given, fills the regret columns
/// and drives [`PolicyKind::Oracle`].
pub fn run_experiment(
    scenario: &Scenario,
    policy: PolicyKind,
    seed: u64,
    oracle: Option<&OracleTable>,
) -> std::result::Result<RunTrace, RunAborted> {
    let mut trace = RunTrace {
        policy,
        seed,
        system: scenario.system.clone(),
        slices: scenario.slices.clone(),
        records: Vec::with_capacity(scenario.system.horizon as usize),
    };
    match drive(scenario, policy, seed, oracle, &mut trace) {
        Ok(()) => Ok(trace),
        Err(error) => Err(RunAborted {
            error,
            partial: Box::new(trace),
        }),
    }
}

fn drive(
    scenario: &Scenario,
    policy: PolicyKind,
    seed: u64,
    oracle: Option<&OracleTable>,
    trace: &mut RunTrace,
) -> Result<()> {
    let sys = &scenario.system;
    let params = &scenario.params;
    let n = scenario.slices.len();
    let levels = scenario.levels();
    let arms = scenario.arms();
    if policy == PolicyKind::Oracle && oracle.is_none() {
        return Err(Error::InvalidConfig("the oracle policy needs an oracle table".into()));
    }

    let mut env = Environment::new(scenario, seed);
    let mut sim = SimState::new(scenario);
    let mut bandit = BanditState::with_rule(arms.len(), params.mean_update);
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, u32::MAX, POLICY_STREAM));
    let window = params.estimator.window_epochs;
    let mut histories: Vec<Vec<ArmHistory>> = if policy == PolicyKind::Laco {
        vec![vec![ArmHistory::new(levels, window); arms.len()]; n]
    } else {
        Vec::new()
    };
    let mut global: Vec<ObservationHistory> = vec![ObservationHistory::new(levels); n];
    let scale = scenario.classic_scale();
    let deadlines: Vec<f64> = scenario.deadlines().iter().map(|&d| d.max(1) as f64).collect();

    for epoch in 0..sys.horizon {
        let env_trace = env.next_epoch(scenario);
        let oracle_values = oracle
            .filter(|o| (epoch as usize) < o.epochs())
            .map(|o| o.arm_values(epoch as usize, arms));

        let choice = match policy {
            PolicyKind::Rr => None,
            PolicyKind::Oracle => Some(oracle_select(oracle_values.as_deref().unwrap_or(&[]))),
            _ => Some(match bandit.sweep_arm() {
                Some(arm) => arm,
                None => match policy {
                    PolicyKind::Laco => laco_select(&bandit)?,
                    PolicyKind::Ucb => ucb_select(&bandit)?,
                    _ => ts_select(&bandit, params.ts_prior_variance, &mut rng)?,
                },
            }),
        };
        let allocation = match choice {
            Some(a) => Allocation::Arm(arms.get(a).ok_or(Error::InvalidArm(a))?),
            None => Allocation::RoundRobin,
        };
        let (mut record, observed) = run_epoch(scenario, allocation, &mut sim, &env_trace);
        for (g, o) in global.iter_mut().zip(&observed) {
            g.merge(o);
        }

        if let (Some(arm), Some(values)) = (choice, &oracle_values) {
            record.oracle_best = values.iter().copied().reduce(f64::max);
            record.oracle_value = Some(values[arm]);
        }

        match (policy, choice) {
            (PolicyKind::Laco, Some(arm)) => {
                let mut rewards = 0.0;
                let mut psis = 0.0;
                for (i, o) in observed.into_iter().enumerate() {
                    let h = &mut histories[i][arm];
                    h.push(o);
                    let est = em_estimate(&h.total, &params.estimator)?;
                    let ss = fitted_steady_state(&est, &sim.steps[i], &params.estimator)?;
                    rewards += model_reward(&ss, sys.reward_exponent);
                    let source = match params.psi_scope {
                        PsiScope::PerArm => (est, &h.total),
                        PsiScope::Global => (em_estimate(&global[i], &params.estimator)?, &global[i]),
                    };
                    psis += markov_accuracy(&latent_weights(&source.0, source.1, params.estimator.smoothing));
                }
                let reward = rewards / n as f64;
                let psi = psis / n as f64;
                bandit.update(arm, reward)?;
                bandit.set_psi(arm, psi)?;
                record.reward = Some(reward);
                record.psi = Some(psi);
            }
            (PolicyKind::Ucb | PolicyKind::Ts, Some(arm)) => {
                let ttis = sys.epoch_ttis.max(1) as f64;
                let zeta: Vec<f64> = (0..n)
                    .map(|i| {
                        let y = arms[arm].allocation[i] as f64;
                        env_trace.bits_per_prb[i].iter().map(|&b| y * b as f64).sum::<f64>() / ttis
                    })
                    .collect();
                let window: Vec<f64> = (0..n)
                    .map(|i| record.slices[i].offered_bits as f64 / ttis * deadlines[i])
                    .collect();
                let reward = scale.apply(classic_reward(&zeta, &window, &deadlines));
                bandit.update(arm, reward)?;
                record.reward = Some(reward);
            }
            _ => {}
        }
        trace.records.push(record);
    }
    Ok(())
}

/// Cumulative regret `Σ_n (max_σ ρ̄_σ(n) − ρ̄_{σ(n)}(n))` of an arm sequence.
/// A single row of means is reused for every epoch (stationary case).
pub fn empirical_regret(arms: &[usize], means: &[Vec<f64>]) -> Vec<f64> {
    let mut acc = 0.0;
    arms.iter()
        .enumerate()
        .map(|(n, &a)| {
            let row = if means.len() == 1 { &means[0] } else { &means[n] };
            let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            acc += best - row[a];
            acc
        })
        .collect()
}

/// `Σ_σ 4 log N / Δ_σ + 8 Δ_σ` over the suboptimal arms' gaps.
pub fn regret_upper_bound(gaps: &[f64], horizon: f64) -> Result<f64> {
    if let Some(&g) = gaps.iter().find(|&&g| g.is_nan() || g <= 0.0) {
        return Err(Error::NonPositiveGap(g));
    }
    let log_n = horizon.ln();
    Ok(gaps.iter().map(|g| 4.0 * log_n / g + 8.0 * g).sum())
}

/// Reward distribution of one arm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ArmDistribution {
    Bernoulli(f64),
    Gaussian { mean: f64, variance: f64 },
}

impl ArmDistribution {
    pub fn mean(&self) -> f64 {
        match *self {
            Self::Bernoulli(p) => p,
            Self::Gaussian { mean, .. } => mean,
        }
    }

    /// `KL(self ‖ other)` for distributions of the same family.
    pub fn kl(&self, other: &Self) -> Result<f64> {
        match (*self, *other) {
            (Self::Bernoulli(p), Self::Bernoulli(q)) => {
                if !(0.0..=1.0).contains(&p) || !(0.0..=1.0).contains(&q) {
                    return Err(Error::UndefinedDivergence(format!("Bernoulli parameter outside [0, 1]: {p}, {q}")));
                }
                let term = |a: f64, b: f64| -> Result<f64> {
                    if a == 0.0 {
                        Ok(0.0)
                    } else if b == 0.0 {
                        Err(Error::UndefinedDivergence(format!("KL(Bern({p}) ‖ Bern({q})) is infinite")))
                    } else {
                        Ok(a * (a / b).ln())
                    }
                };
                Ok(term(p, q)? + term(1.0 - p, 1.0 - q)?)
            }
            (Self::Gaussian { mean: m1, variance: v1 }, Self::Gaussian { mean: m2, variance: v2 }) => {
                if v1 <= 0.0 || v2 <= 0.0 {
                    return Err(Error::UndefinedDivergence("Gaussian variance must be positive".into()));
                }
                Ok(0.5 * ((v2 / v1).ln() + (v1 + (m1 - m2).powi(2)) / v2 - 1.0))
            }
            _ => Err(Error::UndefinedDivergence("arms of different families".into())),
        }
    }
}

/// `log N · Σ_σ Δ_σ / KL(ρ̄_σ ‖ ρ̄_σ*)` over the suboptimal arms.
pub fn regret_lower_bound(arms: &[ArmDistribution], horizon: f64) -> Result<f64> {
    let Some(best) = arms.iter().max_by(|a, b| a.mean().total_cmp(&b.mean())) else {
        return Ok(0.0);
    };
    let mut sum = 0.0;
    for a in arms {
        let gap = best.mean() - a.mean();
        if gap > 0.0 {
            sum += gap / a.kl(best)?;
        }
    }
    Ok(horizon.ln() * sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    #[test]
    fn queue_serves_within_budget() {
        let mut q = VirtualQueue::logging();
        let o = q.step(0, 100, 60, 5, false);
        assert_eq!((o.served, o.expired, q.backlog_bits()), (60, 0, 40));
        let o = q.step(1, 100, 60, 5, false);
        assert_eq!(o.served, 60);
        assert_eq!(o.max_latency, 1);
        assert_eq!(q.backlog_bits(), 80);
        let log = q.take_served();
        assert_eq!(log, vec![
            ServedRecord { bits: 60, latency_ttis: 0 },
            ServedRecord { bits: 40, latency_ttis: 1 },
            ServedRecord { bits: 20, latency_ttis: 0 },
        ]);
    }

    #[test]
    fn queue_expires_after_deadline() {
        let mut q = VirtualQueue::new();
        let mut expired = 0;
        for t in 0..10 {
            let o = q.step(t, 50, 0, 2, false);
            expired += o.expired;
            assert_eq!(o.violated, t >= 3);
        }
        // packets from TTIs 0..=6 expired, 7..=9 still waiting
        assert_eq!(expired, 350);
        assert_eq!(q.backlog_bits(), 150);
        assert_eq!(q.dropped_bits, 350);
    }

    #[test]
    fn serve_late_keeps_packets() {
        let mut q = VirtualQueue::new();
        for t in 0..4 {
            q.step(t, 10, 0, 1, true);
        }
        let o = q.step(4, 0, 100, 1, true);
        assert_eq!(o.served, 40);
        assert_eq!(o.late, 30);
        assert!(o.violated);
        assert_eq!(q.dropped_bits, 0);
    }

    #[test]
    fn regret_examples() {
        assert_eq!(empirical_regret(&[1, 1, 1], &[vec![0.2, 0.9]]), vec![0.0; 3]);
        let r = empirical_regret(&[0; 10], &[vec![0.6, 1.0]]);
        assert!((r[9] - 4.0).abs() < 1e-12);
        assert!(r.windows(2).all(|w| w[1] >= w[0]));
        let tv = empirical_regret(&[0, 0], &[vec![0.9, 0.1], vec![0.2, 0.6]]);
        assert!((tv[1] - 0.4).abs() < 1e-12);
    }

    #[test]
    fn upper_bound_examples() {
        assert!((regret_upper_bound(&[0.5], E).unwrap() - 12.0).abs() < 1e-12);
        assert!((regret_upper_bound(&[0.2, 0.4], E).unwrap() - 34.8).abs() < 1e-12);
        assert!(regret_upper_bound(&[0.2], 100.0).unwrap() < regret_upper_bound(&[0.2], 1000.0).unwrap());
        assert_eq!(regret_upper_bound(&[0.0], 10.0), Err(Error::NonPositiveGap(0.0)));
        assert!(regret_upper_bound(&[-0.1], 10.0).is_err());
    }

    #[test]
    fn lower_bound_examples() {
        let eq = [ArmDistribution::Bernoulli(0.5), ArmDistribution::Bernoulli(0.5)];
        assert_eq!(regret_lower_bound(&eq, 100.0).unwrap(), 0.0);

        let arms = [ArmDistribution::Bernoulli(0.5), ArmDistribution::Bernoulli(0.9)];
        let kl = 0.5 * (0.5f64 / 0.9).ln() + 0.5 * (0.5f64 / 0.1).ln();
        assert!((regret_lower_bound(&arms, E).unwrap() - 0.4 / kl).abs() < 1e-12);

        let g = [
            ArmDistribution::Gaussian { mean: 0.0, variance: 1.0 },
            ArmDistribution::Gaussian { mean: 0.5, variance: 1.0 },
        ];
        assert!((regret_lower_bound(&g, 100.0).unwrap() - 2.0 * 100f64.ln() / 0.5).abs() < 1e-12);

        let bad = [ArmDistribution::Bernoulli(0.5), ArmDistribution::Bernoulli(1.0)];
        assert!(matches!(regret_lower_bound(&bad, 10.0), Err(Error::UndefinedDivergence(_))));
    }
}
