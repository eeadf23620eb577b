//! Switching policies.
//!
//! At every switching moment the engine asks a policy to pick the successor
//! among the transmitters that are not currently working. The headline policy
//! scores each candidate by geometric projection in the time-data plane: from
//! the current point L = (now, bits sent) the run must reach
//! W = (completion time, bit target), and a candidate that would work for
//! `w` seconds delivering `b` Mbit moves the run by F - L = (w, b). The
//! candidate whose displacement has the longest scalar projection onto the
//! remaining line LW is chosen — the straightest step toward completion,
//! which favors long stints and therefore few switches.
//!
//! The four baselines greedily maximize a single quantity instead: stored
//! energy (EM), channel gain (RM), deliverable bits (BM), or working time
//! (TM).

use crate::energy::{HarvestTrace, TxId};
use crate::prediction::{
    mean_working_time_with, MeanConvention, PredictionError, PredictionInput,
};
use crate::schedule::RateModel;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// Errors from policy evaluation.
#[derive(Debug, Error)]
pub enum PolicyError {
    /// The current point already coincides with the completion point, so the
    /// projection direction is undefined.
    #[error("transmission already complete: projection direction is the zero vector")]
    TransmissionComplete,
    /// No non-current transmitter exists to switch to.
    #[error("no candidate transmitter available")]
    NoCandidates,
    /// A policy name failed to parse.
    #[error("unknown policy name {0:?} (expected gp-known, gp-predicted, em, rm, bm, or tm)")]
    UnknownPolicy(String),
    /// Candidate snapshots and traces must describe the same transmitters.
    #[error("trace for transmitter {0} missing from policy inputs")]
    MissingTrace(TxId),
    /// Propagated predictor failure.
    #[error(transparent)]
    Prediction(#[from] PredictionError),
}

/// Available switching policies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    /// Geometric projection with working times read from the actual future
    /// trace.
    GpKnown,
    /// Geometric projection with working times from the probabilistic
    /// predictor.
    GpPredicted,
    /// Most stored energy.
    Em,
    /// Best channel among candidates holding energy.
    Rm,
    /// Most deliverable bits over the candidate's working time.
    Bm,
    /// Longest working time.
    Tm,
}

impl PolicyKind {
    /// All supported policies, in canonical name order.
    pub const ALL: [PolicyKind; 6] = [
        PolicyKind::Bm,
        PolicyKind::Em,
        PolicyKind::GpKnown,
        PolicyKind::GpPredicted,
        PolicyKind::Rm,
        PolicyKind::Tm,
    ];

    /// Canonical lowercase name.
    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::GpKnown => "gp-known",
            PolicyKind::GpPredicted => "gp-predicted",
            PolicyKind::Em => "em",
            PolicyKind::Rm => "rm",
            PolicyKind::Bm => "bm",
            PolicyKind::Tm => "tm",
        }
    }

    /// How this policy obtains candidate working times, given the run-wide
    /// default mode.
    pub fn work_time_mode(&self, default_mode: WorkTimeMode) -> WorkTimeMode {
        match self {
            PolicyKind::GpKnown => WorkTimeMode::Known,
            PolicyKind::GpPredicted => WorkTimeMode::Predicted,
            _ => default_mode,
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gp-known" => Ok(PolicyKind::GpKnown),
            "gp-predicted" => Ok(PolicyKind::GpPredicted),
            "em" => Ok(PolicyKind::Em),
            "rm" => Ok(PolicyKind::Rm),
            "bm" => Ok(PolicyKind::Bm),
            "tm" => Ok(PolicyKind::Tm),
            other => Err(PolicyError::UnknownPolicy(other.into())),
        }
    }
}

/// Where candidate working times come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WorkTimeMode {
    /// Exact depletion against the known future trace.
    Known,
    /// Expectation from the probabilistic predictor.
    Predicted,
}

/// Predictor options threaded through policy evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictorSettings {
    /// Mean burst amount convention for expected extensions.
    pub convention: MeanConvention,
    /// Term cap for the expectation series.
    pub n_max: usize,
}

impl Default for PredictorSettings {
    fn default() -> Self {
        PredictorSettings {
            convention: MeanConvention::Midpoint,
            n_max: crate::prediction::DEFAULT_TERM_CAP,
        }
    }
}

/// Per-transmitter state visible to a policy at a switching moment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TxSnapshot {
    pub id: TxId,
    /// Stored energy, in mJ.
    pub left_energy_mj: f64,
    /// Seconds since this transmitter's last energy arrival.
    pub elapsed_s: f64,
    /// Linear channel power gain.
    pub gain: f64,
    /// Energy-arrival rate, in 1/s.
    pub lambda_per_s: f64,
    /// Burst-amount bounds, in mJ.
    pub amount_min_mj: f64,
    pub amount_max_mj: f64,
    /// True for the transmitter that was working until this moment.
    pub is_current: bool,
}

/// Decision context at one switching moment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchContext {
    /// Present time, in seconds.
    pub now_s: f64,
    /// Bits already delivered, in Mbit.
    pub bits_sent_mbit: f64,
    /// Completion point: reference completion time, in seconds.
    pub target_time_s: f64,
    /// Completion point: bit target, in Mbit.
    pub target_bits_mbit: f64,
    /// Power level currently mandated by the schedule, in mW.
    pub power_mw: f64,
    /// Snapshots of every transmitter (at most one marked current).
    pub transmitters: Vec<TxSnapshot>,
    /// Default working-time mode for policies that use working times.
    pub mode: WorkTimeMode,
}

/// Scored candidate: its predicted displacement in the time-data plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateVector {
    pub transmitter_id: TxId,
    /// Seconds the candidate is expected to sustain the current power.
    pub work_time_s: f64,
    /// Mbit it would deliver in that time through its own channel.
    pub bits_mbit: f64,
    /// Scalar projection of (work_time, bits) onto the remaining-run
    /// direction.
    pub projection: f64,
}

/// Scalar projection of the displacement `candidate` onto `direction`.
///
/// Fails when the direction is the zero vector, which only happens once the
/// run has already reached its completion point.
pub fn projection_length(
    candidate: (f64, f64),
    direction: (f64, f64),
) -> Result<f64, PolicyError> {
    let norm = direction.0.hypot(direction.1);
    if norm == 0.0 {
        return Err(PolicyError::TransmissionComplete);
    }
    Ok((candidate.0 * direction.0 + candidate.1 * direction.1) / norm)
}

/// Working time at constant power against the known future trace: the drain
/// time of the stored energy, extended by every arrival that lands inside the
/// still-open window.
pub fn known_work_time(
    left_energy_mj: f64,
    power_mw: f64,
    trace: &HarvestTrace,
    now_s: f64,
) -> f64 {
    if power_mw <= 0.0 {
        return 0.0;
    }
    let mut end = now_s + left_energy_mj / power_mw;
    let start = trace
        .events
        .partition_point(|e| e.time_s <= now_s);
    for ev in &trace.events[start..] {
        if ev.time_s >= end {
            break;
        }
        end += ev.amount_mj / power_mw;
    }
    end - now_s
}

fn work_time_for(
    snap: &TxSnapshot,
    ctx: &SwitchContext,
    mode: WorkTimeMode,
    traces: &[HarvestTrace],
    predictor: &PredictorSettings,
) -> Result<f64, PolicyError> {
    match mode {
        WorkTimeMode::Known => {
            let trace = traces
                .iter()
                .find(|t| t.transmitter_id == snap.id)
                .ok_or(PolicyError::MissingTrace(snap.id))?;
            Ok(known_work_time(
                snap.left_energy_mj,
                ctx.power_mw,
                trace,
                ctx.now_s,
            ))
        }
        WorkTimeMode::Predicted => {
            let input = PredictionInput {
                left_energy_mj: snap.left_energy_mj,
                power_mw: ctx.power_mw,
                lambda_per_s: snap.lambda_per_s,
                amount_min_mj: snap.amount_min_mj,
                amount_max_mj: snap.amount_max_mj,
                elapsed_s: snap.elapsed_s,
            };
            Ok(
                mean_working_time_with(&input, predictor.convention, predictor.n_max)?
                    .mean_working_time_s,
            )
        }
    }
}

/// Scores every non-current transmitter for the policies that look ahead.
pub fn candidate_vectors(
    kind: PolicyKind,
    ctx: &SwitchContext,
    rate: &RateModel,
    traces: &[HarvestTrace],
    predictor: &PredictorSettings,
) -> Result<Vec<CandidateVector>, PolicyError> {
    let mode = kind.work_time_mode(ctx.mode);
    let direction = (
        ctx.target_time_s - ctx.now_s,
        ctx.target_bits_mbit - ctx.bits_sent_mbit,
    );
    let mut out = Vec::new();
    for snap in ctx.transmitters.iter().filter(|s| !s.is_current) {
        let w = work_time_for(snap, ctx, mode, traces, predictor)?;
        let b = w * rate.rate_mbps(ctx.power_mw, snap.gain);
        let projection = projection_length((w, b), direction)?;
        out.push(CandidateVector {
            transmitter_id: snap.id,
            work_time_s: w,
            bits_mbit: b,
            projection,
        });
    }
    Ok(out)
}

fn argmax_by_key<T, F: Fn(&T) -> f64>(items: &[T], key: F) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, item) in items.iter().enumerate() {
        let v = key(item);
        match best {
            // Strict comparison keeps the earliest (smallest-id) maximizer.
            Some((_, bv)) if v <= bv => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}

/// Picks the successor transmitter under the given policy.
///
/// Candidates are all non-current transmitters; ties break toward the
/// smallest id. Snapshots must be sorted by id for the tie-break to apply
/// (the simulator guarantees this).
pub fn choose(
    kind: PolicyKind,
    ctx: &SwitchContext,
    rate: &RateModel,
    traces: &[HarvestTrace],
    predictor: &PredictorSettings,
) -> Result<TxId, PolicyError> {
    let candidates: Vec<&TxSnapshot> =
        ctx.transmitters.iter().filter(|s| !s.is_current).collect();
    if candidates.is_empty() {
        return Err(PolicyError::NoCandidates);
    }
    match kind {
        PolicyKind::Em => {
            let i = argmax_by_key(&candidates, |s| s.left_energy_mj).expect("nonempty");
            Ok(candidates[i].id)
        }
        PolicyKind::Rm => {
            let holders: Vec<&&TxSnapshot> = candidates
                .iter()
                .filter(|s| s.left_energy_mj > 0.0)
                .collect();
            if holders.is_empty() {
                let i = argmax_by_key(&candidates, |s| s.gain).expect("nonempty");
                Ok(candidates[i].id)
            } else {
                let i = argmax_by_key(&holders, |s| s.gain).expect("nonempty");
                Ok(holders[i].id)
            }
        }
        PolicyKind::Bm | PolicyKind::Tm | PolicyKind::GpKnown | PolicyKind::GpPredicted => {
            let vectors = candidate_vectors(kind, ctx, rate, traces, predictor)?;
            let i = match kind {
                PolicyKind::Bm => argmax_by_key(&vectors, |v| v.bits_mbit),
                PolicyKind::Tm => argmax_by_key(&vectors, |v| v.work_time_s),
                _ => argmax_by_key(&vectors, |v| v.projection),
            }
            .expect("nonempty");
            Ok(vectors[i].transmitter_id)
        }
    }
}
