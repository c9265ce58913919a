//! Experiment configuration, the built-in presets, replication and output.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{McsTable, SliceSpec, SystemConfig, TrafficModulation};
use crate::engine::{regret_upper_bound, run_experiment, OracleTable, PolicyParams, RunTrace, Scenario};
use crate::error::{Error, Result};
use crate::policy::{MeanUpdate, PolicyKind};

pub const PRESETS: [&str; 5] = ["chunk_size", "counterphase", "heatmap", "regret_vs_slices", "convergence"];

/// One concrete system and slice set inside an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variant {
    pub label: String,
    pub system: SystemConfig,
    #[serde(rename = "slice")]
    pub slices: Vec<SliceSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub policies: Vec<PolicyKind>,
    pub replications: u32,
    /// Replication `k` runs with seed `seed_base + k`.
    pub seed_base: u64,
    pub workers: Option<usize>,
    pub out_dir: Option<PathBuf>,
    /// Build the per-epoch oracle table (regret columns).
    pub with_oracle: bool,
    /// MCS table file; the embedded table when absent.
    pub mcs_table: Option<PathBuf>,
    /// Base system, used when `variant` is empty.
    pub system: SystemConfig,
    pub policy: PolicyParams,
    #[serde(rename = "slice")]
    pub slices: Vec<SliceSpec>,
    #[serde(rename = "variant")]
    pub variants: Vec<Variant>,
    /// Defaults chosen where the scenario description leaves a value open.
    pub notes: Vec<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "custom".into(),
            policies: vec![PolicyKind::Laco],
            replications: 1,
            seed_base: 0,
            workers: None,
            out_dir: None,
            with_oracle: false,
            mcs_table: None,
            system: SystemConfig::default(),
            policy: PolicyParams::default(),
            slices: vec![
                SliceSpec::new(0, 10.0, 20.0, 2.0, 1.0),
                SliceSpec::new(1, 30.0, 20.0, 2.0, 1.0),
            ],
            variants: Vec::new(),
            notes: Vec::new(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    /// Lays `overrides` (TOML text) over this config: tables merge key by
    /// key, everything else is replaced.
    pub fn overlay(&self, overrides: &str) -> Result<Self> {
        let base = toml::Value::try_from(self).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        let top: toml::Value = toml::from_str(overrides).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        let merged = merge(base, top);
        merged.try_into().map_err(|e: toml::de::Error| Error::InvalidConfig(e.to_string()))
    }

    /// Variants actually run: the explicit list, or the base system alone.
    pub fn resolved_variants(&self) -> Vec<Variant> {
        if self.variants.is_empty() {
            vec![Variant {
                label: "base".into(),
                system: self.system.clone(),
                slices: self.slices.clone(),
            }]
        } else {
            self.variants.clone()
        }
    }

    pub fn table(&self) -> Result<McsTable> {
        match &self.mcs_table {
            Some(p) => McsTable::load(p),
            None => Ok(McsTable::embedded()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.policies.is_empty() {
            return Err(Error::InvalidConfig("at least one policy is required".into()));
        }
        if self.replications == 0 {
            return Err(Error::InvalidConfig("replications must be at least 1".into()));
        }
        let table = self.table()?;
        for v in self.resolved_variants() {
            if v.slices.is_empty() {
                return Err(Error::NoSlices);
            }
            Scenario::new(v.system.clone(), v.slices.clone(), table.clone(), self.policy.clone())?;
        }
        Ok(())
    }

    /// Applies `f` to the base system and every variant's system.
    pub fn for_each_system(&mut self, mut f: impl FnMut(&mut SystemConfig)) {
        f(&mut self.system);
        for v in &mut self.variants {
            f(&mut v.system);
        }
    }
}

fn merge(base: toml::Value, top: toml::Value) -> toml::Value {
    match (base, top) {
        (toml::Value::Table(mut b), toml::Value::Table(t)) => {
            for (k, v) in t {
                let merged = match b.remove(&k) {
                    Some(old) => merge(old, v),
                    None => v,
                };
                b.insert(k, merged);
            }
            toml::Value::Table(b)
        }
        (_, top) => top,
    }
}

fn counterphase_slice(id: u32, phase: f64) -> SliceSpec {
    let mut s = SliceSpec::new(id, 20.0, 24.0, 10f64.sqrt(), 1.0);
    s.throughput_sla_mbps = 40.0;
    s.modulation = TrafficModulation::Sinusoidal {
        low: 8.0,
        high: 40.0,
        period_epochs: 200.0,
        phase,
    };
    s
}

fn high_snr_system() -> SystemConfig {
    SystemConfig {
        snr_min_db: 20.0,
        snr_max_db: 50.0,
        channel_levels: 15,
        ..SystemConfig::default()
    }
}

/// The built-in scenarios.
pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let base = ExperimentConfig {
        name: name.to_string(),
        ..ExperimentConfig::default()
    };
    let common_notes = [
        "tti_ms = 1 and epoch_ttis = 1000: one decision per second; the testbed used 15 s epochs".to_string(),
        "channel: Rayleigh(tau) mapped affinely to dB so that the reference distribution's 1st/99th percentiles hit snr_min_db/snr_max_db".to_string(),
        "G = 15 uniform channel levels over 20..50 dB, one per MCS table row".to_string(),
        "estimator: W = G latent levels, level confusion 0.05, add-1 smoothing, tol 1e-6, max 500 iterations".to_string(),
        "TS posterior: Gaussian N(mean, 1/(pulls+1)); UCB/TS rewards are classic rewards scaled by [no service, full capacity at the best MCS]".to_string(),
    ];
    let mut cfg = match name {
        "chunk_size" => {
            let system = SystemConfig {
                horizon: 500,
                ..high_snr_system()
            };
            let slices = vec![
                SliceSpec::new(0, 20.0, 25.0, 2.5, 0.02),
                SliceSpec::new(1, 20.0, 25.0, 2.5, 0.02),
            ];
            ExperimentConfig {
                policies: vec![PolicyKind::Laco],
                replications: 20,
                variants: [2u32, 5, 10]
                    .iter()
                    .map(|&chunk| Variant {
                        label: format!("theta_{chunk}"),
                        system: SystemConfig { chunk, ..system.clone() },
                        slices: slices.clone(),
                    })
                    .collect(),
                system,
                slices,
                notes: vec![
                    "two static slices with equal SLAs: 25 Mb/s (nu = 2.5 Mb/s) within 20 ms".into(),
                    "static channel: tau = 0.02 keeps every draw in the lowest level (about 19 dB, 515..597 bits per PRB)".into(),
                    "horizon 500 epochs, 20 replications".into(),
                ],
                ..base
            }
        }
        "counterphase" => ExperimentConfig {
            policies: vec![PolicyKind::Laco, PolicyKind::Ts, PolicyKind::Ucb],
            replications: 10,
            system: high_snr_system(),
            policy: PolicyParams {
                mean_update: MeanUpdate::Overwrite,
                estimator: crate::estimator::EstimatorConfig {
                    window_epochs: Some(5),
                    ..Default::default()
                },
                ..PolicyParams::default()
            },
            slices: vec![counterphase_slice(0, 0.0), counterphase_slice(1, PI)],
            notes: vec![
                "sinusoid period 200 epochs (the scenario leaves it open), nu^2 = 10 (Mb/s)^2".into(),
                                "non-stationary load: the latest reward replaces the arm estimate and chain histories keep the last 5 plays of each arm".into(),
            ],
            ..base
        },
        "heatmap" => {
            let system = SystemConfig {
                horizon: 200,
                ..high_snr_system()
            };
            let mut variants = Vec::new();
            for alpha in 1..=4u32 {
                for beta in 1..=4u32 {
                    let mean = 10.0 * alpha as f64;
                    variants.push(Variant {
                        label: format!("alpha{alpha}_beta{beta}"),
                        system: system.clone(),
                        slices: vec![
                            SliceSpec::new(0, 10.0 * beta as f64, mean, 0.1 * mean, 1.0),
                            SliceSpec::new(1, 20.0, 20.0, 2.0, 1.0),
                        ],
                    });
                }
            }
            ExperimentConfig {
                policies: vec![PolicyKind::Laco],
                replications: 5,
                system,
                variants,
                notes: vec![
                    "grid alpha, beta in 1..4: slice 0 asks 10*alpha Mb/s within 10*beta ms, slice 1 fixed at 20 Mb/s within 20 ms".into(),
                    "horizon 200 epochs, 5 replications per cell".into(),
                ],
                ..base
            }
        }
        "regret_vs_slices" => {
            let system = SystemConfig {
                horizon: 2000,
                ..high_snr_system()
            };
            let variants = (2..=4u32)
                .map(|n| Variant {
                    label: format!("slices_{n}"),
                    system: system.clone(),
                    slices: (0..n)
                        .map(|i| SliceSpec::new(i, 10.0 + 10.0 * i as f64, 8.0, 0.8, 0.02))
                        .collect(),
                })
                .collect();
            ExperimentConfig {
                policies: vec![PolicyKind::Laco, PolicyKind::Ts],
                replications: 10,
                with_oracle: true,
                system,
                variants,
                notes: vec![
                    "I in 2..4 slices of 8 Mb/s each; slice i tolerates 10 + 10 i ms".into(),
                    "static channel as in chunk_size: tau = 0.02".into(),
                    "oracle: per epoch, every arm replayed on the realized trace from an empty queue; value = mean over slices of the violation-free TTI fraction".into(),
                    "horizon 2000 epochs, 10 replications".into(),
                ],
                ..base
            }
        }
        "convergence" => {
            let mut variants = Vec::new();
            for n in [2u32, 3] {
                for capacity in [50u32, 100] {
                    for tau in [0.1, 0.2, 0.3, 0.4] {
                        let system = SystemConfig {
                            capacity_prbs: capacity,
                            chunk: capacity / 10,
                            horizon: 1000,
                            rayleigh_ref_scale: 0.4,
                            ..high_snr_system()
                        };
                        let mean = 0.3 * capacity as f64 / n as f64;
                        variants.push(Variant {
                            label: format!("slices_{n}_prbs_{capacity}_tau_{tau}"),
                            system,
                            slices: (0..n)
                                .map(|i| SliceSpec::new(i, 10.0 + 10.0 * i as f64, mean, 0.1 * mean, tau))
                                .collect(),
                        });
                    }
                }
            }
            ExperimentConfig {
                policies: vec![PolicyKind::Laco],
                replications: 5,
                variants,
                notes: vec![
                    "reference Rayleigh scale 0.4, so tau = 0.4 spans the full snr range and smaller tau means a worse channel".into(),
                    "offered load 0.3 Mb/s per PRB split evenly across slices; chunk = C / 10; horizon 1000 epochs".into(),
                    "convergence epoch: first epoch after which the played arm never changes".into(),
                ],
                ..base
            }
        }
        other => return Err(Error::UnknownPreset(other.to_string())),
    };
    cfg.notes.extend(common_notes);
    Ok(cfg)
}

/// Per-run figures, recomputable from the run's CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub variant: String,
    pub policy: PolicyKind,
    pub replication: u32,
    pub seed: u64,
    pub file: String,
    pub epochs: usize,
    pub offered_bits: u64,
    pub served_bits: u64,
    pub dropped_bits: u64,
    pub late_bits: u64,
    pub backlog_bits: u64,
    pub drop_fraction: f64,
    pub mean_latency_ms: f64,
    pub conserved: bool,
    pub convergence_epoch: Option<u32>,
    /// Mean reward over the last tenth of the run.
    pub final_reward: Option<f64>,
    pub final_regret: Option<f64>,
    pub regret_bound: Option<f64>,
    pub bound_ok: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub variant: String,
    pub policy: PolicyKind,
    pub runs: usize,
    pub mean_dropped_bits: f64,
    pub mean_drop_fraction: f64,
    pub mean_latency_ms: f64,
    pub mean_convergence_epoch: Option<f64>,
    pub mean_final_reward: Option<f64>,
    pub mean_final_regret: Option<f64>,
    pub bound_passes: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub runs: Vec<RunSummary>,
    pub groups: Vec<GroupSummary>,
}

fn mean(xs: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (mut s, mut n) = (0.0, 0usize);
    for x in xs {
        s += x;
        n += 1;
    }
    (n > 0).then(|| s / n as f64)
}

/// Per-run summary; `arm_means` are the oracle values averaged over the run.
pub fn summarize_run(trace: &RunTrace, variant: &str, replication: u32, file: String, arm_means: Option<&[f64]>) -> RunSummary {
    let offered = trace.total_offered();
    let dropped = trace.total_dropped();
    let tail = (trace.records.len() / 10).max(1);
    let final_reward = mean(trace.records.iter().rev().take(tail).filter_map(|r| r.reward));
    let final_regret = trace.regret_curve().and_then(|c| c.last().copied());
    let regret_bound = arm_means.and_then(|m| {
        let best = m.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let gaps: Vec<f64> = m.iter().map(|v| best - v).filter(|&g| g > 1e-12).collect();
        if gaps.is_empty() {
            None
        } else {
            regret_upper_bound(&gaps, trace.records.len() as f64).ok()
        }
    });
    RunSummary {
        variant: variant.to_string(),
        policy: trace.policy,
        replication,
        seed: trace.seed,
        file,
        epochs: trace.records.len(),
        offered_bits: offered,
        served_bits: trace.total_served(),
        dropped_bits: dropped,
        late_bits: trace.records.iter().flat_map(|r| &r.slices).map(|s| s.late_bits).sum(),
        backlog_bits: trace.final_backlog(),
        drop_fraction: if offered > 0 { dropped as f64 / offered as f64 } else { 0.0 },
        mean_latency_ms: trace.mean_latency_ms(),
        conserved: trace.conserves_bits(),
        convergence_epoch: trace.convergence_epoch(),
        final_reward,
        final_regret,
        regret_bound,
        bound_ok: match (final_regret, regret_bound) {
            (Some(r), Some(b)) => Some(r <= b),
            _ => None,
        },
    }
}

pub fn group_runs(runs: &[RunSummary]) -> Vec<GroupSummary> {
    let mut keys: Vec<(String, PolicyKind)> = Vec::new();
    for r in runs {
        let k = (r.variant.clone(), r.policy);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(variant, policy)| {
            let g: Vec<&RunSummary> = runs.iter().filter(|r| r.variant == variant && r.policy == policy).collect();
            let all_some = |f: fn(&RunSummary) -> Option<f64>| -> Option<f64> {
                let v: Option<Vec<f64>> = g.iter().map(|r| f(r)).collect();
                v.and_then(mean)
            };
            GroupSummary {
                runs: g.len(),
                mean_dropped_bits: mean(g.iter().map(|r| r.dropped_bits as f64)).unwrap_or(0.0),
                mean_drop_fraction: mean(g.iter().map(|r| r.drop_fraction)).unwrap_or(0.0),
                mean_latency_ms: mean(g.iter().map(|r| r.mean_latency_ms)).unwrap_or(0.0),
                mean_convergence_epoch: all_some(|r| r.convergence_epoch.map(f64::from)),
                mean_final_reward: all_some(|r| r.final_reward),
                mean_final_regret: all_some(|r| r.final_regret),
                bound_passes: g.iter().map(|r| r.bound_ok).collect::<Option<Vec<bool>>>().map(|v| v.iter().filter(|&&b| b).count()),
                variant,
                policy,
            }
        })
        .collect()
}

/// File name of one run's CSV trace.
pub fn trace_file_name(variant: &str, policy: PolicyKind, replication: u32) -> String {
    let clean: String = variant
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' { c } else { '_' })
        .collect();
    format!("{clean}__{policy}__rep{replication:03}.csv")
}

/// Writes `contents` to `path` through a temporary sibling and a rename.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })?;
    Ok(())
}

/// All traces of one (variant, replication) job.
struct JobOutput {
    variant: String,
    replication: u32,
    traces: Vec<RunTrace>,
    arm_means: Option<Vec<f64>>,
}

/// Runs every (variant, policy, replication) combination. Traces are
/// returned rather than written so callers decide about output.
pub fn run_all(config: &ExperimentConfig) -> Result<Vec<(RunSummary, RunTrace)>> {
    config.validate()?;
    let table = config.table()?;
    let variants = config.resolved_variants();
    let jobs: Vec<(usize, u32)> = (0..variants.len())
        .flat_map(|v| (0..config.replications).map(move |r| (v, r)))
        .collect();
    let needs_oracle = config.with_oracle || config.policies.contains(&PolicyKind::Oracle);

    let run_job = |&(v, rep): &(usize, u32)| -> Result<JobOutput> {
        let variant = &variants[v];
        let scenario = Scenario::new(variant.system.clone(), variant.slices.clone(), table.clone(), config.policy.clone())?;
        let seed = config.seed_base + rep as u64;
        let oracle = needs_oracle.then(|| OracleTable::build(&scenario, seed));
        let arm_means = oracle.as_ref().map(|o| {
            let arms = scenario.arms();
            let mut acc = vec![0.0; arms.len()];
            for n in 0..o.epochs() {
                for (a, v) in acc.iter_mut().zip(o.arm_values(n, arms)) {
                    *a += v;
                }
            }
            acc.iter().map(|a| a / o.epochs().max(1) as f64).collect()
        });
        let traces = config
            .policies
            .iter()
            .map(|&p| run_experiment(&scenario, p, seed, oracle.as_ref()).map_err(|e| e.error))
            .collect::<Result<Vec<_>>>()?;
        Ok(JobOutput {
            variant: variant.label.clone(),
            replication: rep,
            traces,
            arm_means,
        })
    };

    let outputs: Vec<JobOutput> = match config.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?
            .install(|| jobs.par_iter().map(run_job).collect::<Result<Vec<_>>>())?,
        None => jobs.par_iter().map(run_job).collect::<Result<Vec<_>>>()?,
    };

    let mut results = Vec::new();
    for out in outputs {
        for trace in out.traces {
            let file = trace_file_name(&out.variant, trace.policy, out.replication);
            let summary = summarize_run(&trace, &out.variant, out.replication, file, out.arm_means.as_deref());
            results.push((summary, trace));
        }
    }
    Ok(results)
}

/// Runs the experiment and writes one CSV per run plus `summary.json` into
/// `out_dir`, which must already exist.
pub fn execute(config: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentReport> {
    if !out_dir.is_dir() {
        return Err(Error::Io(format!("output directory {} does not exist", out_dir.display())));
    }
    let results = run_all(config)?;
    for (summary, trace) in &results {
        write_atomic(&out_dir.join(&summary.file), &trace.to_csv())?;
    }
    let runs: Vec<RunSummary> = results.into_iter().map(|(s, _)| s).collect();
    let report = ExperimentReport {
        config: config.clone(),
        groups: group_runs(&runs),
        runs,
    };
    let json = serde_json::to_string_pretty(&report).map_err(|e| Error::Io(e.to_string()))?;
    write_atomic(&out_dir.join("summary.json"), &json)?;
    write_atomic(&out_dir.join("summary.txt"), &render_report(&report))?;
    Ok(report)
}

fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.digits$}"))
}

/// Plain-text one-page report.
pub fn render_report(report: &ExperimentReport) -> String {
    let mut out = format!(
        "experiment {} | {} runs | seeds {}..{}\n\n",
        report.config.name,
        report.runs.len(),
        report.config.seed_base,
        report.config.seed_base + report.config.replications as u64 - 1
    );
    out.push_str(&format!(
        "{:<32} {:<7} {:>4} {:>14} {:>9} {:>10} {:>9} {:>9} {:>11} {:>7}\n",
        "variant", "policy", "runs", "dropped_bits", "drop_frac", "latency_ms", "conv_ep", "reward", "regret@N", "bound"
    ));
    for g in &report.groups {
        out.push_str(&format!(
            "{:<32} {:<7} {:>4} {:>14.0} {:>9.4} {:>10.3} {:>9} {:>9} {:>11} {:>7}\n",
            g.variant,
            g.policy.name(),
            g.runs,
            g.mean_dropped_bits,
            g.mean_drop_fraction,
            g.mean_latency_ms,
            fmt_opt(g.mean_convergence_epoch, 1),
            fmt_opt(g.mean_final_reward, 4),
            fmt_opt(g.mean_final_regret, 2),
            g.bound_passes.map_or_else(|| "-".into(), |p| format!("{p}/{}", g.runs)),
        ));
    }
    let conserved = report.runs.iter().all(|r| r.conserved);
    out.push_str(&format!("\nbit conservation: {}\n", if conserved { "ok" } else { "VIOLATED" }));
    if !report.config.notes.is_empty() {
        out.push_str("\ndefaults:\n");
        for n in &report.config.notes {
            out.push_str(&format!("  - {n}\n"));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid() {
        for name in PRESETS {
            let cfg = preset(name).unwrap();
            cfg.validate().unwrap();
            assert!(!cfg.notes.is_empty());
        }
        assert_eq!(preset("nope"), Err(Error::UnknownPreset("nope".into())));
    }

    #[test]
    fn counterphase_preset_shape() {
        let cfg = preset("counterphase").unwrap();
        assert_eq!(cfg.slices.len(), 2);
        for s in &cfg.slices {
            assert_eq!(s.latency_ms, 20.0);
            assert!(matches!(s.modulation, TrafficModulation::Sinusoidal { low, high, .. } if low == 8.0 && high == 40.0));
        }
        for n in [0, 37, 150] {
            let total: f64 = cfg.slices.iter().map(|s| s.mean_rate_at(n)).sum();
            assert!((total - 48.0).abs() < 1e-9);
        }
    }

    #[test]
    fn chunk_size_preset_shape() {
        let cfg = preset("chunk_size").unwrap();
        let chunks: Vec<u32> = cfg.variants.iter().map(|v| v.system.chunk).collect();
        assert_eq!(chunks, vec![2, 5, 10]);
        assert!(cfg.variants.iter().all(|v| v.system.capacity_prbs == 100));
    }

    #[test]
    fn heatmap_preset_grid() {
        let cfg = preset("heatmap").unwrap();
        assert_eq!(cfg.variants.len(), 16);
        let v = cfg.variants.iter().find(|v| v.label == "alpha3_beta2").unwrap();
        assert_eq!(v.slices[0].traffic_mean_mbps, 30.0);
        assert_eq!(v.slices[0].latency_ms, 20.0);
    }

    #[test]
    fn toml_round_trip() {
        for name in PRESETS {
            let cfg = preset(name).unwrap();
            let text = cfg.to_toml().unwrap();
            let back = ExperimentConfig::from_toml(&text).unwrap();
            assert_eq!(back, cfg);
            assert_eq!(back.to_toml().unwrap(), text);
        }
    }

    #[test]
    fn overlay_merges_tables() {
        let cfg = preset("counterphase").unwrap();
        let over = cfg.overlay("replications = 2\n[system]\nhorizon = 7\n").unwrap();
        assert_eq!(over.replications, 2);
        assert_eq!(over.system.horizon, 7);
        assert_eq!(over.system.snr_min_db, cfg.system.snr_min_db);
        assert_eq!(over.slices, cfg.slices);
        assert!(cfg.overlay("bogus_key = 1\n").is_err());
    }

    #[test]
    fn trace_names_are_distinct() {
        let a = trace_file_name("theta_2", PolicyKind::Laco, 0);
        let b = trace_file_name("theta_2", PolicyKind::Ts, 0);
        let c = trace_file_name("theta_2", PolicyKind::Laco, 1);
        assert!(a != b && a != c && b != c);
        assert_eq!(trace_file_name("a b/c", PolicyKind::Ucb, 12), "a_b_c__ucb__rep012.csv");
    }
}
