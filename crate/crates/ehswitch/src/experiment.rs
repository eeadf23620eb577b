//! Paired Monte Carlo comparison of switching policies.
//!
//! Each run index deterministically derives its own trace set from the master
//! seed; every policy in the comparison replays the *same* traces for that
//! run, so policy differences are paired and their variance shrinks
//! accordingly. Runs are independent and may execute in parallel without
//! changing any result.

use crate::energy::{
    sample_trace_with, EnergyError, HarvestTrace, InitialEnergy, SystemConfig, TransmissionTarget,
};
use crate::policy::{PolicyKind, PredictorSettings, WorkTimeMode};
use crate::schedule::{completion_time, optimal_powers, PowerSchedule, RateModel, ScheduleError};
use crate::schedule::GainRef;
use crate::sim::{run, RunResult, SimError, SimOptions};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Seed-lane tag for harvest-trace generation.
pub const PURPOSE_TRACE: u64 = 1;

/// Errors from experiment preparation or execution.
#[derive(Debug, Error)]
pub enum ExperimentError {
    /// The experiment description is unusable.
    #[error("invalid experiment: {0}")]
    Invalid(String),
    /// Trace generation failed.
    #[error(transparent)]
    Energy(#[from] EnergyError),
    /// Scheduling failed (for example, an infeasible bit target).
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    /// A simulation run failed.
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Build parameters for the reference schedule used by every run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSettings {
    /// Channel used for the aggregated bit curve.
    pub gain_ref: GainRef,
    /// The simulated schedule spans `margin` times the reference completion
    /// time, so the bit target stays reachable even though individual
    /// channels are weaker than the reference channel.
    pub margin: f64,
    /// Length of the sampled harvest traces, in seconds. Must cover
    /// `margin x` the completion time of every run.
    pub trace_horizon_s: f64,
}

impl Default for ScheduleSettings {
    fn default() -> Self {
        ScheduleSettings {
            gain_ref: GainRef::EnergyWeighted,
            margin: 1.05,
            trace_horizon_s: 4000.0,
        }
    }
}

/// Full description of a policy-comparison experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Transmitters and radio parameters; the target must be a bit target.
    pub system: SystemConfig,
    /// Policies to compare; all replay identical traces within a run.
    pub policies: Vec<PolicyKind>,
    /// Number of independent runs.
    pub n_runs: u64,
    /// Root of all randomness in the experiment.
    pub master_seed: u64,
    /// Working-time mode for policies that do not pin their own.
    pub mode: WorkTimeMode,
    /// Reference-schedule construction.
    pub schedule: ScheduleSettings,
    /// Engine options.
    pub sim: SimOptions,
    /// Predictor options for predicted working times.
    pub predictor: PredictorSettings,
    /// Battery contents at t = 0.
    pub initial_energy: InitialEnergy,
}

impl ExperimentConfig {
    /// Checks the experiment invariants.
    pub fn validate(&self) -> Result<(), ExperimentError> {
        self.system.validate()?;
        if self.n_runs < 1 {
            return Err(ExperimentError::Invalid("n_runs must be >= 1".into()));
        }
        if self.policies.is_empty() {
            return Err(ExperimentError::Invalid(
                "at least one policy is required".into(),
            ));
        }
        let mut names: Vec<&str> = self.policies.iter().map(|p| p.name()).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != self.policies.len() {
            return Err(ExperimentError::Invalid("duplicate policy".into()));
        }
        if !(self.schedule.margin >= 1.0) {
            return Err(ExperimentError::Invalid(format!(
                "schedule margin must be >= 1, got {}",
                self.schedule.margin
            )));
        }
        if !(self.schedule.trace_horizon_s > 0.0) {
            return Err(ExperimentError::Invalid(
                "trace horizon must be > 0".into(),
            ));
        }
        match self.system.target {
            TransmissionTarget::Bits(b) if b > 0.0 => Ok(()),
            TransmissionTarget::Bits(b) => Err(ExperimentError::Invalid(format!(
                "bit target must be > 0 Mbit, got {b}"
            ))),
            TransmissionTarget::Horizon(_) => Err(ExperimentError::Invalid(
                "policy comparison needs a bit target, not a horizon".into(),
            )),
        }
    }

    fn target_mbit(&self) -> f64 {
        match self.system.target {
            TransmissionTarget::Bits(b) => b,
            TransmissionTarget::Horizon(_) => unreachable!("validated"),
        }
    }

    fn rate_model(&self) -> RateModel {
        RateModel {
            bandwidth_mhz: self.system.bandwidth_mhz,
            noise_w_per_hz: self.system.noise_w_per_hz,
        }
    }
}

/// Deterministic generator for one (run, transmitter, purpose) lane.
///
/// The four labels are packed little-endian into the 32-byte stream-cipher
/// seed, so distinct lanes get independent streams and the same lane always
/// replays the same draws regardless of evaluation order.
pub fn derive_rng(master_seed: u64, run_index: u64, tx: u64, purpose: u64) -> ChaCha12Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&master_seed.to_le_bytes());
    key[8..16].copy_from_slice(&run_index.to_le_bytes());
    key[16..24].copy_from_slice(&tx.to_le_bytes());
    key[24..32].copy_from_slice(&purpose.to_le_bytes());
    ChaCha12Rng::from_seed(key)
}

/// Order-independent fingerprint of a trace set, for paired-design checks.
pub fn trace_set_hash(traces: &[HarvestTrace]) -> u64 {
    let mut ordered: Vec<&HarvestTrace> = traces.iter().collect();
    ordered.sort_by_key(|t| t.transmitter_id);
    let mut h: u64 = 0xcbf2_9ce4_8422_2325; // FNV-1a offset basis.
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x100_0000_01b3);
        }
    };
    for t in ordered {
        eat(&t.transmitter_id.to_le_bytes());
        eat(&t.initial_mj.to_bits().to_le_bytes());
        for e in &t.events {
            eat(&e.time_s.to_bits().to_le_bytes());
            eat(&e.amount_mj.to_bits().to_le_bytes());
        }
    }
    h
}

/// Everything one run needs: its traces and the reference schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSetup {
    /// One trace per transmitter, in the system's transmitter order.
    pub traces: Vec<HarvestTrace>,
    /// Completion time of the aggregated reference curve, in seconds.
    pub completion_time_s: f64,
    /// Bit target, in Mbit.
    pub target_mbit: f64,
    /// Power staircase over `margin x completion_time_s`.
    pub schedule: PowerSchedule,
}

/// Samples traces for one run index and solves the reference schedule.
pub fn prepare_run(config: &ExperimentConfig, run_index: u64) -> Result<RunSetup, ExperimentError> {
    let mut traces = Vec::with_capacity(config.system.transmitters.len());
    for t in &config.system.transmitters {
        let mut rng = derive_rng(config.master_seed, run_index, u64::from(t.id), PURPOSE_TRACE);
        traces.push(sample_trace_with(
            t,
            config.schedule.trace_horizon_s,
            &mut rng,
            config.initial_energy,
        )?);
    }
    let rate = config.rate_model();
    let gain = config.schedule.gain_ref.resolve(&config.system.transmitters);
    let target = config.target_mbit();
    let (te, _) = completion_time(&traces, &rate, gain, target)?;
    let sim_horizon = te * config.schedule.margin;
    if sim_horizon > config.schedule.trace_horizon_s {
        return Err(ExperimentError::Invalid(format!(
            "trace horizon {} s is shorter than the simulated span {} s; \
             raise trace_horizon_s",
            config.schedule.trace_horizon_s, sim_horizon
        )));
    }
    let schedule = optimal_powers(&traces, sim_horizon)?;
    Ok(RunSetup {
        traces,
        completion_time_s: te,
        target_mbit: target,
        schedule,
    })
}

/// Runs every configured policy against one prepared trace set.
pub fn run_policies(
    config: &ExperimentConfig,
    setup: &RunSetup,
) -> Result<Vec<RunResult>, ExperimentError> {
    let rate = config.rate_model();
    config
        .policies
        .iter()
        .map(|&policy| {
            run(
                &config.system.transmitters,
                &setup.traces,
                &setup.schedule,
                &rate,
                setup.target_mbit,
                setup.completion_time_s,
                policy,
                policy.work_time_mode(config.mode),
                &config.predictor,
                &config.sim,
            )
            .map_err(ExperimentError::from)
        })
        .collect()
}

/// All observations for one policy across the runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyRuns {
    pub policy: PolicyKind,
    /// Switch count per run, indexed by run.
    pub switches: Vec<u64>,
    /// Completion time per run, in seconds, indexed by run.
    pub completions: Vec<f64>,
}

/// Aggregates for one policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySummary {
    pub policy: PolicyKind,
    pub mean_switches: f64,
    /// Sample standard deviation (zero for a single run).
    pub std_switches: f64,
    pub mean_completion_s: f64,
    pub n_runs: u64,
}

/// Result of a paired Monte Carlo comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonOutcome {
    pub n_runs: u64,
    pub master_seed: u64,
    /// Per-policy observations, in the configured policy order.
    pub policies: Vec<PolicyRuns>,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

impl ComparisonOutcome {
    /// Per-policy aggregates, sorted by policy name for stable reporting.
    pub fn summaries(&self) -> Vec<PolicySummary> {
        let mut rows: Vec<PolicySummary> = self
            .policies
            .iter()
            .map(|p| {
                let sw: Vec<f64> = p.switches.iter().map(|&s| s as f64).collect();
                PolicySummary {
                    policy: p.policy,
                    mean_switches: mean(&sw),
                    std_switches: sample_std(&sw),
                    mean_completion_s: mean(&p.completions),
                    n_runs: self.n_runs,
                }
            })
            .collect();
        rows.sort_by_key(|r| r.policy.name());
        rows
    }

    /// CSV table with the pinned schema
    /// `policy,mean_switches,std_switches,mean_completion_s,n_runs`.
    pub fn csv_report(&self) -> String {
        let mut out = String::from("policy,mean_switches,std_switches,mean_completion_s,n_runs\n");
        for r in self.summaries() {
            out.push_str(&format!(
                "{},{:.4},{:.4},{:.4},{}\n",
                r.policy.name(),
                r.mean_switches,
                r.std_switches,
                r.mean_completion_s,
                r.n_runs
            ));
        }
        out
    }
}

/// Paired Monte Carlo comparison across the configured policies.
///
/// The result is deterministic in `master_seed` and the configuration; runs
/// execute in parallel but are collected in run-index order.
pub fn monte_carlo(config: &ExperimentConfig) -> Result<ComparisonOutcome, ExperimentError> {
    config.validate()?;
    let per_run: Vec<Vec<RunResult>> = (0..config.n_runs)
        .into_par_iter()
        .map(|k| {
            let setup = prepare_run(config, k)?;
            run_policies(config, &setup)
        })
        .collect::<Result<_, ExperimentError>>()?;
    let policies = config
        .policies
        .iter()
        .enumerate()
        .map(|(j, &policy)| PolicyRuns {
            policy,
            switches: per_run.iter().map(|r| r[j].switch_count).collect(),
            completions: per_run.iter().map(|r| r[j].completion_time_s).collect(),
        })
        .collect();
    Ok(ComparisonOutcome {
        n_runs: config.n_runs,
        master_seed: config.master_seed,
        policies,
    })
}
