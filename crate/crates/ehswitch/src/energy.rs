//! Stochastic energy-harvest traces and system-level configuration.
//!
//! Each transmitter harvests energy in discrete bursts: inter-arrival times
//! are exponentially distributed and every burst carries a uniformly
//! distributed amount of energy. A [`HarvestTrace`] is one realization of that
//! process over a finite horizon, together with the energy already stored at
//! time zero.

use rand::Rng;
use rand_distr::{Distribution, Exp, Uniform};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Transmitter identifier (1-based index).
pub type TxId = u32;

/// Errors produced while building or parsing traces and configurations.
#[derive(Debug, Error)]
pub enum EnergyError {
    /// A transmitter parameter set violates its invariants.
    #[error("invalid transmitter {id}: {reason}")]
    InvalidTransmitter { id: TxId, reason: String },
    /// A sampling horizon must be strictly positive.
    #[error("horizon must be > 0 s, got {0}")]
    InvalidHorizon(f64),
    /// Two events with identical (time, transmitter) pairs cannot be ordered.
    #[error("duplicate event at t = {time_s} s for transmitter {id}")]
    DuplicateEvent { time_s: f64, id: TxId },
    /// A serialized trace line could not be parsed.
    #[error("trace parse error on line {line}: {reason}")]
    Parse { line: usize, reason: String },
    /// The system-level configuration is inconsistent.
    #[error("invalid system configuration: {0}")]
    InvalidSystem(String),
}

/// Stochastic and channel parameters of one transmitter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransmitterConfig {
    /// Identifier, 1-based.
    pub id: TxId,
    /// Energy-arrival rate of the Poisson process, in 1/s.
    pub lambda_per_s: f64,
    /// Lower bound of the uniform burst-amount distribution, in mJ.
    pub amount_min_mj: f64,
    /// Upper bound of the uniform burst-amount distribution, in mJ.
    pub amount_max_mj: f64,
    /// Channel path loss in dB (negative; -100 means a 1e-10 linear gain).
    pub pathloss_db: f64,
}

impl TransmitterConfig {
    /// Linear channel power gain derived from the path loss.
    pub fn gain_linear(&self) -> f64 {
        10f64.powf(self.pathloss_db / 10.0)
    }

    /// Mean burst amount in mJ.
    pub fn mean_amount_mj(&self) -> f64 {
        0.5 * (self.amount_min_mj + self.amount_max_mj)
    }

    /// Checks the parameter invariants.
    pub fn validate(&self) -> Result<(), EnergyError> {
        if !(self.lambda_per_s > 0.0) {
            return Err(EnergyError::InvalidTransmitter {
                id: self.id,
                reason: format!("arrival rate must be > 0, got {}", self.lambda_per_s),
            });
        }
        if !(0.0 <= self.amount_min_mj && self.amount_min_mj < self.amount_max_mj) {
            return Err(EnergyError::InvalidTransmitter {
                id: self.id,
                reason: format!(
                    "need 0 <= min < max for burst amounts, got [{}, {}]",
                    self.amount_min_mj, self.amount_max_mj
                ),
            });
        }
        if !self.pathloss_db.is_finite() {
            return Err(EnergyError::InvalidTransmitter {
                id: self.id,
                reason: "path loss must be finite".into(),
            });
        }
        Ok(())
    }
}

/// One energy burst.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarvestEvent {
    /// Arrival instant, in seconds.
    pub time_s: f64,
    /// Harvested amount, in mJ.
    pub amount_mj: f64,
}

/// A realization of one transmitter's harvesting process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarvestTrace {
    /// Owning transmitter.
    pub transmitter_id: TxId,
    /// Energy already stored at t = 0, in mJ.
    pub initial_mj: f64,
    /// Bursts sorted strictly increasing in time.
    pub events: Vec<HarvestEvent>,
}

impl HarvestTrace {
    /// Total energy carried by the trace: initial charge plus all bursts.
    pub fn total_energy_mj(&self) -> f64 {
        self.initial_mj + self.events.iter().map(|e| e.amount_mj).sum::<f64>()
    }
}

/// How the battery is charged at t = 0 when sampling a trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialEnergy {
    /// One uniform burst-amount draw is stored before the run starts, so every
    /// transmitter can be scheduled from the first instant.
    Draw,
    /// Batteries start empty.
    Zero,
}

/// What the schedule computation solves for.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TransmissionTarget {
    /// Deliver this many Mbit as fast as possible (the completion time is the
    /// unknown).
    Bits(f64),
    /// Spread the available energy over this horizon in seconds (the bit total
    /// is the unknown).
    Horizon(f64),
}

/// Full system description: transmitters plus the shared radio parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// At least two transmitters, ids unique.
    pub transmitters: Vec<TransmitterConfig>,
    /// Channel bandwidth in MHz.
    pub bandwidth_mhz: f64,
    /// Noise power spectral density in W/Hz.
    pub noise_w_per_hz: f64,
    /// Bit target or horizon; exactly one is given.
    pub target: TransmissionTarget,
    /// Master seed for trace generation.
    pub rng_seed: u64,
}

impl SystemConfig {
    /// Checks the configuration invariants.
    pub fn validate(&self) -> Result<(), EnergyError> {
        if self.transmitters.len() < 2 {
            return Err(EnergyError::InvalidSystem(format!(
                "need at least 2 transmitters, got {}",
                self.transmitters.len()
            )));
        }
        let mut ids: Vec<TxId> = self.transmitters.iter().map(|t| t.id).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != self.transmitters.len() {
            return Err(EnergyError::InvalidSystem(
                "transmitter ids must be unique".into(),
            ));
        }
        for t in &self.transmitters {
            t.validate()?;
        }
        if !(self.bandwidth_mhz > 0.0) {
            return Err(EnergyError::InvalidSystem(format!(
                "bandwidth must be > 0 MHz, got {}",
                self.bandwidth_mhz
            )));
        }
        if !(self.noise_w_per_hz > 0.0) {
            return Err(EnergyError::InvalidSystem(format!(
                "noise density must be > 0 W/Hz, got {}",
                self.noise_w_per_hz
            )));
        }
        match self.target {
            TransmissionTarget::Bits(b) if !(b > 0.0) => Err(EnergyError::InvalidSystem(
                format!("bit target must be > 0 Mbit, got {b}"),
            )),
            TransmissionTarget::Horizon(h) if !(h > 0.0) => Err(EnergyError::InvalidSystem(
                format!("horizon must be > 0 s, got {h}"),
            )),
            _ => Ok(()),
        }
    }
}

/// Samples a harvest trace over `[0, horizon_s]` with the default initial
/// charge (one uniform draw stored at t = 0).
pub fn sample_trace<R: Rng>(
    cfg: &TransmitterConfig,
    horizon_s: f64,
    rng: &mut R,
) -> Result<HarvestTrace, EnergyError> {
    sample_trace_with(cfg, horizon_s, rng, InitialEnergy::Draw)
}

/// Samples a harvest trace with an explicit initial-charge mode.
///
/// Inter-arrival times are iid Exponential(`lambda_per_s`); amounts are iid
/// Uniform on the open interval (`amount_min_mj`, `amount_max_mj`). Exact
/// endpoint draws are rejected so every amount lies strictly inside the
/// interval. The result is deterministic for a given generator state.
pub fn sample_trace_with<R: Rng>(
    cfg: &TransmitterConfig,
    horizon_s: f64,
    rng: &mut R,
    initial: InitialEnergy,
) -> Result<HarvestTrace, EnergyError> {
    cfg.validate()?;
    if !(horizon_s > 0.0) {
        return Err(EnergyError::InvalidHorizon(horizon_s));
    }
    let exp = Exp::new(cfg.lambda_per_s).expect("validated rate");
    let uni = Uniform::new(cfg.amount_min_mj, cfg.amount_max_mj);
    let draw_amount = |rng: &mut R| loop {
        let a = uni.sample(rng);
        if a > cfg.amount_min_mj && a < cfg.amount_max_mj {
            return a;
        }
    };
    let initial_mj = match initial {
        InitialEnergy::Draw => draw_amount(rng),
        InitialEnergy::Zero => 0.0,
    };
    let mut events = Vec::new();
    let mut t = 0.0;
    loop {
        t += exp.sample(rng);
        if t > horizon_s {
            break;
        }
        let amount_mj = draw_amount(rng);
        events.push(HarvestEvent { time_s: t, amount_mj });
    }
    Ok(HarvestTrace {
        transmitter_id: cfg.id,
        initial_mj,
        events,
    })
}

/// One entry of the merged, globally ordered event sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergedEvent {
    pub time_s: f64,
    pub transmitter_id: TxId,
    pub amount_mj: f64,
}

/// Merges per-transmitter traces into one strictly ordered epoch sequence.
///
/// Ties in time are broken by ascending transmitter id; identical
/// (time, transmitter) pairs are rejected because they cannot be ordered
/// reproducibly.
pub fn merge_epochs(traces: &[HarvestTrace]) -> Result<Vec<MergedEvent>, EnergyError> {
    let mut merged: Vec<MergedEvent> = Vec::new();
    for tr in traces {
        merged.extend(tr.events.iter().map(|e| MergedEvent {
            time_s: e.time_s,
            transmitter_id: tr.transmitter_id,
            amount_mj: e.amount_mj,
        }));
    }
    merged.sort_by(|a, b| {
        a.time_s
            .total_cmp(&b.time_s)
            .then(a.transmitter_id.cmp(&b.transmitter_id))
    });
    for w in merged.windows(2) {
        if w[0].time_s == w[1].time_s && w[0].transmitter_id == w[1].transmitter_id {
            return Err(EnergyError::DuplicateEvent {
                time_s: w[0].time_s,
                id: w[0].transmitter_id,
            });
        }
    }
    Ok(merged)
}

/// Serializes traces to the line format `time_s,transmitter_id,amount_mJ`.
///
/// Initial charges are carried by comment lines `# initial,<id>,<amount_mJ>`
/// so a round trip preserves the full trace set.
pub fn write_traces(traces: &[HarvestTrace]) -> String {
    let mut out = String::from("time_s,transmitter_id,amount_mJ\n");
    for tr in traces {
        out.push_str(&format!(
            "# initial,{},{:.12}\n",
            tr.transmitter_id, tr.initial_mj
        ));
    }
    let mut merged = Vec::new();
    for tr in traces {
        merged.extend(tr.events.iter().map(|e| (e.time_s, tr.transmitter_id, e.amount_mj)));
    }
    merged.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    for (t, id, a) in merged {
        out.push_str(&format!("{t:.12},{id},{a:.12}\n"));
    }
    out
}

/// Parses the format produced by [`write_traces`].
pub fn parse_traces(text: &str) -> Result<Vec<HarvestTrace>, EnergyError> {
    let mut traces: Vec<HarvestTrace> = Vec::new();
    let find = |id: TxId, traces: &mut Vec<HarvestTrace>| -> usize {
        if let Some(i) = traces.iter().position(|t| t.transmitter_id == id) {
            i
        } else {
            traces.push(HarvestTrace {
                transmitter_id: id,
                initial_mj: 0.0,
                events: Vec::new(),
            });
            traces.len() - 1
        }
    };
    for (line_no, raw) in text.lines().enumerate() {
        let line = line_no + 1;
        let s = raw.trim();
        if s.is_empty() || s == "time_s,transmitter_id,amount_mJ" {
            continue;
        }
        if let Some(rest) = s.strip_prefix('#') {
            let rest = rest.trim();
            if let Some(body) = rest.strip_prefix("initial,") {
                let mut it = body.split(',');
                let id: TxId = it
                    .next()
                    .and_then(|v| v.trim().parse().ok())
                    .ok_or_else(|| EnergyError::Parse {
                        line,
                        reason: "bad initial id".into(),
                    })?;
                let amount: f64 = it
                    .next()
                    .and_then(|v| v.trim().parse().ok())
                    .ok_or_else(|| EnergyError::Parse {
                        line,
                        reason: "bad initial amount".into(),
                    })?;
                let i = find(id, &mut traces);
                traces[i].initial_mj = amount;
            }
            continue;
        }
        let mut it = s.split(',');
        let time_s: f64 = it
            .next()
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| EnergyError::Parse {
                line,
                reason: "bad time".into(),
            })?;
        let id: TxId = it
            .next()
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| EnergyError::Parse {
                line,
                reason: "bad transmitter id".into(),
            })?;
        let amount_mj: f64 = it
            .next()
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| EnergyError::Parse {
                line,
                reason: "bad amount".into(),
            })?;
        let i = find(id, &mut traces);
        traces[i].events.push(HarvestEvent { time_s, amount_mj });
    }
    for tr in &mut traces {
        tr.events.sort_by(|a, b| a.time_s.total_cmp(&b.time_s));
    }
    traces.sort_by_key(|t| t.transmitter_id);
    Ok(traces)
}
