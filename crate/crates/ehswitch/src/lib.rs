//! Simulation toolkit for transmitter switching in communication systems with
//! multiple energy-harvesting transmitters and one receiver.
//!
//! The library models a set of transmitters that harvest energy in random
//! bursts (Poisson arrival times, uniformly distributed amounts) and share a
//! single data queue. It provides:
//!
//! * stochastic harvest-trace generation and a line-oriented replay format
//!   ([`energy`]),
//! * the offline optimal piecewise-constant power schedule of the aggregated
//!   "whole transmitter", its bit curve, and the minimum completion time for a
//!   bit target ([`schedule`]),
//! * a probabilistic predictor for how long a transmitter can sustain the
//!   current power level, built on Erlang and Irwin-Hall densities
//!   ([`prediction`]),
//! * the geometric-projection switching policy plus four greedy baselines
//!   ([`policy`]),
//! * a deterministic event-driven simulator that counts switches
//!   ([`sim`]), and
//! * a paired Monte Carlo harness with CSV reporting ([`experiment`]).
//!
//! # Units
//!
//! All quantities use a fixed unit system: seconds, millijoules, milliwatts,
//! megahertz, and megabits. With the shipped default parameters this makes the
//! signal-to-noise ratio of the best channel numerically equal to the power in
//! milliwatts, and data targets on the order of thousands of megabits complete
//! in about half an hour of simulated time.

// Validation guards are written as negated comparisons (`!(x > 0.0)`) so that
// NaN inputs fail them too; `partial_cmp` rewrites would lose that.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod energy;
pub mod experiment;
pub mod policy;
pub mod prediction;
pub mod quad;
pub mod schedule;
pub mod sim;

pub use energy::{
    merge_epochs, parse_traces, sample_trace, sample_trace_with, write_traces, EnergyError,
    HarvestEvent, HarvestTrace, InitialEnergy, SystemConfig, TransmissionTarget,
    TransmitterConfig, TxId,
};
pub use experiment::{
    derive_rng, monte_carlo, prepare_run, run_policies, trace_set_hash, ComparisonOutcome,
    ExperimentConfig, ExperimentError, PolicyRuns, PolicySummary, RunSetup, ScheduleSettings,
};
pub use policy::{
    choose, projection_length, CandidateVector, PolicyError, PolicyKind, PredictorSettings,
    SwitchContext, TxSnapshot, WorkTimeMode,
};
pub use prediction::{
    erlang_pdf, erlang_survival, irwin_hall_pdf, mc_working_time_oracle, mean_working_time,
    mean_working_time_with, pp_sequence, tail_prob, MeanConvention, PredictionError,
    PredictionInput, PredictionResult,
};
pub use quad::QuadError;
pub use schedule::{
    bits_by, completion_time, cumulative_energy, optimal_powers, GainRef, PowerSchedule,
    RateModel, ScheduleError,
};
pub use sim::{
    count_switches, run, RunResult, SimError, SimOptions, Termination, WorkEntry,
};
