//! Offline optimal power schedule of the aggregated "whole transmitter".
//!
//! Pooling every transmitter's harvests into one node yields a cumulative
//! energy staircase. The transmission policy that finishes a bit target
//! soonest spends that energy at piecewise-constant, non-decreasing power
//! levels: the tightest monotone path under the staircase (a taut string
//! anchored at the origin and the final staircase corner). Powers only step
//! up at harvest epochs where the string touches the staircase.

use crate::energy::{merge_epochs, HarvestTrace, TransmitterConfig};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors from schedule construction and evaluation.
#[derive(Debug, Error)]
pub enum ScheduleError {
    /// No energy is available in `[0, horizon]`, so no schedule exists.
    #[error("no energy available by t = {horizon_s} s; schedule is empty")]
    NoEnergy { horizon_s: f64 },
    /// The horizon must be strictly positive.
    #[error("horizon must be > 0 s, got {0}")]
    InvalidHorizon(f64),
    /// Evaluation time outside the schedule's span.
    #[error("time {t_s} s is outside the schedule span [0, {horizon_s}] s")]
    OutOfRange { t_s: f64, horizon_s: f64 },
    /// The bit target exceeds what all harvested energy can deliver.
    #[error(
        "target of {target_mbit} Mbit is infeasible: all {available_mj} mJ of harvested energy \
         delivers at most {max_mbit} Mbit"
    )]
    InfeasibleTarget {
        target_mbit: f64,
        available_mj: f64,
        max_mbit: f64,
    },
    /// Propagated trace defect.
    #[error(transparent)]
    Energy(#[from] crate::energy::EnergyError),
}

/// Piecewise-constant power schedule.
///
/// `epochs_s[0] = 0`, and `powers_mw[j]` applies on
/// `[epochs_s[j], epochs_s[j+1])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSchedule {
    /// Segment boundaries, strictly increasing, starting at 0.
    pub epochs_s: Vec<f64>,
    /// One power level per segment, in mW.
    pub powers_mw: Vec<f64>,
}

impl PowerSchedule {
    /// Last boundary: the schedule's horizon in seconds.
    pub fn horizon_s(&self) -> f64 {
        *self.epochs_s.last().expect("non-empty schedule")
    }

    /// Power in force at time `t_s` (the last segment is closed on the right).
    pub fn power_at(&self, t_s: f64) -> Option<f64> {
        if t_s < 0.0 || t_s > self.horizon_s() {
            return None;
        }
        let j = match self
            .epochs_s
            .binary_search_by(|e| e.total_cmp(&t_s))
        {
            Ok(i) => i,
            Err(i) => i.saturating_sub(1),
        };
        Some(self.powers_mw[j.min(self.powers_mw.len() - 1)])
    }

    /// True when the power levels never decrease.
    pub fn is_non_decreasing(&self) -> bool {
        self.powers_mw.windows(2).all(|w| w[0] <= w[1] * (1.0 + 1e-12))
    }

    /// Energy consumed by time `t_s`, in mJ.
    pub fn consumed_by(&self, t_s: f64) -> f64 {
        let mut total = 0.0;
        for j in 0..self.powers_mw.len() {
            let a = self.epochs_s[j];
            let b = self.epochs_s[j + 1];
            if t_s <= a {
                break;
            }
            total += self.powers_mw[j] * (t_s.min(b) - a);
        }
        total
    }

    /// Worst-case causality slack against the traces, in mJ: the minimum over
    /// all event instants of (energy arrived strictly before t) minus (energy
    /// consumed by t). A correct schedule keeps this at or above a small
    /// negative rounding tolerance.
    pub fn causality_slack_mj(&self, traces: &[HarvestTrace]) -> f64 {
        let initial: f64 = traces.iter().map(|t| t.initial_mj).sum();
        let merged = match merge_epochs(traces) {
            Ok(m) => m,
            Err(_) => return f64::NAN,
        };
        let mut slack = initial - self.consumed_by(0.0);
        let mut cum = initial;
        for ev in &merged {
            if ev.time_s > self.horizon_s() {
                break;
            }
            // Just before the arrival, only energy from strictly earlier
            // instants is spendable.
            slack = slack.min(cum - self.consumed_by(ev.time_s));
            cum += ev.amount_mj;
        }
        slack = slack.min(cum - self.consumed_by(self.horizon_s()));
        slack
    }
}

/// Shared radio parameters of the link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateModel {
    /// Channel bandwidth in MHz.
    pub bandwidth_mhz: f64,
    /// Noise power spectral density in W/Hz.
    pub noise_w_per_hz: f64,
}

impl RateModel {
    /// Shannon rate in Mbit/s for transmit power `p_mw` over a channel with
    /// linear power gain `gain`.
    pub fn rate_mbps(&self, p_mw: f64, gain: f64) -> f64 {
        let snr = p_mw * 1e-3 * gain / (self.noise_w_per_hz * self.bandwidth_mhz * 1e6);
        self.bandwidth_mhz * (1.0 + snr).log2()
    }
}

/// Which single channel gain stands in for the aggregated node's bit curve.
///
/// The aggregation pools energy across transmitters whose channels differ, so
/// one reference gain must be chosen to translate the pooled power schedule
/// into bits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GainRef {
    /// Strongest channel among the transmitters.
    BestChannel,
    /// Plain average of the linear gains.
    LinearMean,
    /// Average of the linear gains weighted by each transmitter's share of the
    /// long-run harvested power (rate times mean burst). This makes the
    /// aggregated bit curve track the realized multi-transmitter mixture and
    /// is the default.
    EnergyWeighted,
    /// Explicit path loss in dB.
    ExplicitDb(f64),
}

impl GainRef {
    /// Resolves to a linear power gain for the given transmitter set.
    pub fn resolve(&self, transmitters: &[TransmitterConfig]) -> f64 {
        match self {
            GainRef::BestChannel => transmitters
                .iter()
                .map(|t| t.gain_linear())
                .fold(0.0, f64::max),
            GainRef::LinearMean => {
                transmitters.iter().map(|t| t.gain_linear()).sum::<f64>()
                    / transmitters.len() as f64
            }
            GainRef::EnergyWeighted => {
                let weights: Vec<f64> = transmitters
                    .iter()
                    .map(|t| t.lambda_per_s * t.mean_amount_mj())
                    .collect();
                let total: f64 = weights.iter().sum();
                transmitters
                    .iter()
                    .zip(&weights)
                    .map(|(t, w)| t.gain_linear() * w / total)
                    .sum()
            }
            GainRef::ExplicitDb(db) => 10f64.powf(db / 10.0),
        }
    }
}

/// Total energy (initial charges plus bursts with `time <= t_s`), in mJ.
pub fn cumulative_energy(traces: &[HarvestTrace], t_s: f64) -> f64 {
    traces
        .iter()
        .map(|tr| {
            tr.initial_mj
                + tr.events
                    .iter()
                    .take_while(|e| e.time_s <= t_s)
                    .map(|e| e.amount_mj)
                    .sum::<f64>()
        })
        .sum()
}

/// Staircase corners constraining cumulative consumption.
///
/// At an interior epoch only energy from strictly earlier instants can have
/// been spent; at the horizon everything available by then must be gone.
fn constraint_points(traces: &[HarvestTrace], horizon_s: f64) -> Vec<(f64, f64)> {
    let initial: f64 = traces.iter().map(|t| t.initial_mj).sum();
    let merged = merge_epochs(traces).unwrap_or_default();
    let mut points: Vec<(f64, f64)> = Vec::new();
    let mut cum = initial;
    for ev in &merged {
        if ev.time_s <= 0.0 {
            cum += ev.amount_mj;
            continue;
        }
        if ev.time_s >= horizon_s {
            break;
        }
        match points.last_mut() {
            Some(p) if p.0 == ev.time_s => {}
            _ => points.push((ev.time_s, cum)),
        }
        cum += ev.amount_mj;
    }
    points.push((horizon_s, cumulative_energy(traces, horizon_s)));
    points
}

/// Computes the minimal-completion-time power schedule over `[0, horizon_s]`.
///
/// From each anchor the next power is the smallest feasible slope to any
/// future staircase corner; the anchor advances to the farthest corner
/// attaining that slope. The result has non-decreasing powers, never spends
/// energy before it arrives, and consumes exactly the energy available by the
/// horizon.
pub fn optimal_powers(
    traces: &[HarvestTrace],
    horizon_s: f64,
) -> Result<PowerSchedule, ScheduleError> {
    if !(horizon_s > 0.0) {
        return Err(ScheduleError::InvalidHorizon(horizon_s));
    }
    let points = constraint_points(traces, horizon_s);
    let total = points.last().expect("has terminal point").1;
    if !(total > 0.0) {
        return Err(ScheduleError::NoEnergy { horizon_s });
    }
    let mut epochs = vec![0.0];
    let mut powers = Vec::new();
    let (mut anchor_t, mut anchor_c) = (0.0, 0.0);
    let mut start = 0;
    while anchor_t < horizon_s {
        let mut best_p = f64::INFINITY;
        let mut best_i = start;
        for (i, &(t, c)) in points.iter().enumerate().skip(start) {
            if t <= anchor_t {
                continue;
            }
            let p = (c - anchor_c).max(0.0) / (t - anchor_t);
            // Prefer the farthest corner among (numerically) equal slopes so
            // segments are maximal and the staircase is canonical.
            if p < best_p * (1.0 - 1e-12) || p <= best_p * (1.0 + 1e-12) {
                if p < best_p {
                    best_p = p;
                }
                best_i = i;
            }
        }
        let (t, c) = points[best_i];
        epochs.push(t);
        powers.push((c - anchor_c).max(0.0) / (t - anchor_t));
        anchor_t = t;
        anchor_c = c;
        start = best_i + 1;
    }
    Ok(PowerSchedule {
        epochs_s: epochs,
        powers_mw: powers,
    })
}

/// Bits delivered by time `t_s` when the scheduled power is decoded through a
/// channel with linear gain `gain_ref`.
pub fn bits_by(
    schedule: &PowerSchedule,
    rate: &RateModel,
    gain_ref: f64,
    t_s: f64,
) -> Result<f64, ScheduleError> {
    let horizon = schedule.horizon_s();
    if t_s < 0.0 || t_s > horizon * (1.0 + 1e-12) {
        return Err(ScheduleError::OutOfRange {
            t_s,
            horizon_s: horizon,
        });
    }
    let t_s = t_s.min(horizon);
    let mut bits = 0.0;
    for j in 0..schedule.powers_mw.len() {
        let a = schedule.epochs_s[j];
        let b = schedule.epochs_s[j + 1];
        if t_s <= a {
            break;
        }
        bits += (t_s.min(b) - a) * rate.rate_mbps(schedule.powers_mw[j], gain_ref);
    }
    Ok(bits)
}

/// Upper bound on deliverable bits: energy spread infinitely thin approaches
/// the linear regime of the rate curve.
fn bits_upper_bound_mbit(total_mj: f64, rate: &RateModel, gain_ref: f64) -> f64 {
    // lim_{P -> 0} len * Bw * log2(1 + P g / (N0 Bw)) with len * P = E fixed.
    total_mj * 1e-3 * gain_ref / (rate.noise_w_per_hz * 1e6) / std::f64::consts::LN_2
}

/// Smallest completion time for `target_mbit`, together with the schedule
/// computed at exactly that horizon.
///
/// The horizon bracket doubles geometrically until the bit curve reaches the
/// target, then bisection tightens until the relative bit error is at most
/// 1e-9.
pub fn completion_time(
    traces: &[HarvestTrace],
    rate: &RateModel,
    gain_ref: f64,
    target_mbit: f64,
) -> Result<(f64, PowerSchedule), ScheduleError> {
    let total = cumulative_energy(traces, f64::INFINITY);
    let cap = bits_upper_bound_mbit(total, rate, gain_ref);
    if !(target_mbit > 0.0) || target_mbit >= cap {
        return Err(ScheduleError::InfeasibleTarget {
            target_mbit,
            available_mj: total,
            max_mbit: cap,
        });
    }
    let bits_at = |h: f64| -> Result<f64, ScheduleError> {
        let sched = optimal_powers(traces, h)?;
        bits_by(&sched, rate, gain_ref, h)
    };
    let mut hi = 1.0;
    let mut lo = 0.0;
    for _ in 0..200 {
        match bits_at(hi) {
            Ok(b) if b >= target_mbit => break,
            Ok(_) => {
                lo = hi;
                hi *= 2.0;
            }
            Err(ScheduleError::NoEnergy { .. }) => {
                lo = hi;
                hi *= 2.0;
            }
            Err(e) => return Err(e),
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let b = match bits_at(mid) {
            Ok(b) => b,
            Err(ScheduleError::NoEnergy { .. }) => 0.0,
            Err(e) => return Err(e),
        };
        if (b - target_mbit).abs() <= 1e-9 * target_mbit {
            let sched = optimal_powers(traces, mid)?;
            return Ok((mid, sched));
        }
        if b < target_mbit {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let sched = optimal_powers(traces, hi)?;
    Ok((hi, sched))
}
