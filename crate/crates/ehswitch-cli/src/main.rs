//! Command-line front end for the transmitter-switching experiments.
//!
//! Four subcommands cover the workflow: `schedule` solves the aggregated
//! power staircase for one seeded trace set, `predict` prints working-time
//! diagnostics for one transmitter, `simulate` replays a single run under one
//! policy, and `compare` runs the paired Monte Carlo policy comparison.
//!
//! Exit codes: 0 success, 2 configuration error, 3 infeasible instance,
//! 4 numerical failure. Every report begins with a provenance comment noting
//! the effective master seed and the SHA-256 of the configuration file, and
//! identical invocations produce byte-identical output.

mod config;

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Parser, Subcommand};
use sha2::{Digest, Sha256};

use config::{parse_mode, parse_policies, ConfigError, FileConfig};
use ehswitch::experiment::{
    derive_rng, monte_carlo, prepare_run, ExperimentConfig, ExperimentError,
};
use ehswitch::prediction::{mc_working_time_oracle, mean_working_time_with, PredictionInput};
use ehswitch::schedule::{completion_time, ScheduleError};
use ehswitch::sim::run as sim_run;
use ehswitch::{PolicyKind, PredictionError, SimError};

/// Seed lane for the predict subcommand's Monte Carlo oracle.
const PURPOSE_PREDICT_ORACLE: u64 = 2;

#[derive(Parser)]
#[command(
    name = "ehswitch",
    version,
    about = "Transmitter-switching schedules, predictions, and policy comparisons"
)]
struct Cli {
    /// Experiment configuration file (TOML).
    #[arg(long, global = true, default_value = "default.config")]
    config: PathBuf,
    /// Override the master seed from the configuration file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Write the report to this file instead of standard output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve the aggregated power staircase for one seeded trace set.
    Schedule {
        /// Which run's traces to draw.
        #[arg(long, default_value_t = 0)]
        run_index: u64,
    },
    /// Working-time prediction diagnostics for one transmitter.
    Predict {
        /// Transmitter id from the configuration.
        #[arg(long)]
        tx: u32,
        /// Stored energy in mJ.
        #[arg(long)]
        energy: f64,
        /// Power level in mW.
        #[arg(long)]
        power: f64,
        /// Seconds since the last arrival.
        #[arg(long, default_value_t = 0.0)]
        elapsed: f64,
        /// Sample count for the Monte Carlo oracle.
        #[arg(long, default_value_t = 200_000)]
        samples: usize,
    },
    /// Replay one run under a single policy and dump its work log.
    Simulate {
        /// Policy to run.
        #[arg(long, default_value = "gp-known")]
        policy: String,
        /// Working-time mode override for baselines: known | predicted.
        #[arg(long)]
        mode: Option<String>,
        /// Which run's traces to draw.
        #[arg(long, default_value_t = 0)]
        run_index: u64,
    },
    /// Paired Monte Carlo policy comparison (CSV report).
    Compare {
        /// Override the number of runs.
        #[arg(long)]
        runs: Option<u64>,
        /// Override the policy list (comma separated).
        #[arg(long)]
        policies: Option<String>,
        /// Override the working-time mode for baselines: known | predicted.
        #[arg(long)]
        mode: Option<String>,
    },
}

/// Failure classes, each with its pinned exit code.
enum CliError {
    /// Exit 2: the configuration or arguments are unusable.
    Config(String),
    /// Exit 3: the instance cannot meet its target.
    Infeasible(String),
    /// Exit 4: a numerical procedure failed.
    Numerical(String),
    /// Exit 1: input/output failure.
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Infeasible(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m)
            | CliError::Infeasible(m)
            | CliError::Numerical(m)
            | CliError::Io(m) => m,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<ScheduleError> for CliError {
    fn from(e: ScheduleError) -> Self {
        match e {
            ScheduleError::InfeasibleTarget { .. } | ScheduleError::NoEnergy { .. } => {
                CliError::Infeasible(e.to_string())
            }
            ScheduleError::InvalidHorizon(_) => CliError::Config(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<PredictionError> for CliError {
    fn from(e: PredictionError) -> Self {
        match e {
            PredictionError::InvalidArgument(_) => CliError::Config(e.to_string()),
            PredictionError::Quadrature(_) => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Invalid(m) => CliError::Config(m),
            ExperimentError::Energy(inner) => CliError::Config(inner.to_string()),
            ExperimentError::Schedule(inner) => inner.into(),
            ExperimentError::Sim(inner) => match inner {
                SimError::Policy(p) => CliError::Numerical(p.to_string()),
                SimError::InvalidInput(m) => CliError::Config(m),
                SimError::EventCapExceeded { .. } => CliError::Numerical(inner.to_string()),
            },
        }
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().fold(String::new(), |mut acc, b| {
        let _ = write!(acc, "{b:02x}");
        acc
    })
}

/// Loads the configuration, applies the seed override, and returns the
/// experiment plus the provenance comment line.
fn load(cli: &Cli) -> Result<(ExperimentConfig, String), CliError> {
    let (file, bytes) = FileConfig::load(&cli.config)?;
    let mut exp = file.to_experiment()?;
    if let Some(seed) = cli.seed {
        exp.master_seed = seed;
        exp.system.rng_seed = seed;
    }
    let provenance = format!(
        "# master_seed={} config_sha256={}\n",
        exp.master_seed,
        sha256_hex(&bytes)
    );
    Ok((exp, provenance))
}

fn emit(cli: &Cli, text: &str) -> Result<(), CliError> {
    match &cli.out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_schedule(cli: &Cli, run_index: u64) -> Result<String, CliError> {
    let (exp, provenance) = load(cli)?;
    let setup = prepare_run(&exp, run_index)?;
    // Report the staircase at exactly the completion horizon, not the
    // margin-extended one the simulator replays.
    let rate = ehswitch::RateModel {
        bandwidth_mhz: exp.system.bandwidth_mhz,
        noise_w_per_hz: exp.system.noise_w_per_hz,
    };
    let gain = exp.schedule.gain_ref.resolve(&exp.system.transmitters);
    let target = match exp.system.target {
        ehswitch::TransmissionTarget::Bits(b) => b,
        ehswitch::TransmissionTarget::Horizon(_) => unreachable!("validated"),
    };
    let (te, sched) = completion_time(&setup.traces, &rate, gain, target)?;
    let mut out = provenance;
    let _ = writeln!(
        out,
        "# run_index={run_index} completion_time_s={te:.6} target_mbit={target:.4} \
         reference_gain_db={:.4}",
        10.0 * gain.log10()
    );
    out.push_str("t_start_s,t_end_s,power_mw\n");
    for (i, &p) in sched.powers_mw.iter().enumerate() {
        let _ = writeln!(
            out,
            "{:.6},{:.6},{p:.6}",
            sched.epochs_s[i],
            sched.epochs_s[i + 1]
        );
    }
    Ok(out)
}

fn cmd_predict(
    cli: &Cli,
    tx: u32,
    energy: f64,
    power: f64,
    elapsed: f64,
    samples: usize,
) -> Result<String, CliError> {
    let (exp, provenance) = load(cli)?;
    let t = exp
        .system
        .transmitters
        .iter()
        .find(|t| t.id == tx)
        .ok_or_else(|| CliError::Config(format!("no transmitter with id {tx}")))?;
    let input = PredictionInput {
        left_energy_mj: energy,
        power_mw: power,
        lambda_per_s: t.lambda_per_s,
        amount_min_mj: t.amount_min_mj,
        amount_max_mj: t.amount_max_mj,
        elapsed_s: elapsed,
    };
    let res = mean_working_time_with(&input, exp.predictor.convention, exp.predictor.n_max)?;
    let mut rng = derive_rng(exp.master_seed, 0, u64::from(tx), PURPOSE_PREDICT_ORACLE);
    let (oracle, stderr) = mc_working_time_oracle(&input, samples, &mut rng)?;
    let mut out = provenance;
    let _ = writeln!(
        out,
        "# transmitter={tx} energy_mj={energy:.4} power_mw={power:.4} elapsed_s={elapsed:.4}"
    );
    out.push_str("n,window_s,stop_probability,stop_product_s\n");
    for (i, (&pp, &term)) in res.pp.iter().zip(res.terms_s.iter()).enumerate() {
        let _ = writeln!(out, "{},{term:.6},{pp:.9},{:.6}", i + 1, pp * term);
    }
    let _ = writeln!(
        out,
        "# mean_working_time_s={:.6} terms={} truncated={}",
        res.mean_working_time_s, res.n_terms, res.truncated
    );
    let gap = (res.mean_working_time_s - oracle) / oracle;
    let _ = writeln!(
        out,
        "# oracle_mean_s={oracle:.6} oracle_stderr_s={stderr:.6} rel_gap={gap:.4} \
         samples={samples}"
    );
    Ok(out)
}

fn cmd_simulate(
    cli: &Cli,
    policy: &str,
    mode: Option<&str>,
    run_index: u64,
) -> Result<String, CliError> {
    let (mut exp, provenance) = load(cli)?;
    let policy = PolicyKind::from_str(policy).map_err(|e| CliError::Config(e.to_string()))?;
    if let Some(m) = mode {
        exp.mode = parse_mode(m)?;
    }
    let setup = prepare_run(&exp, run_index)?;
    let rate = ehswitch::RateModel {
        bandwidth_mhz: exp.system.bandwidth_mhz,
        noise_w_per_hz: exp.system.noise_w_per_hz,
    };
    let mode = policy.work_time_mode(exp.mode);
    let result = sim_run(
        &exp.system.transmitters,
        &setup.traces,
        &setup.schedule,
        &rate,
        setup.target_mbit,
        setup.completion_time_s,
        policy,
        mode,
        &exp.predictor,
        &exp.sim,
    )
    .map_err(|e| CliError::from(ExperimentError::from(e)))?;
    let mode_name = match mode {
        ehswitch::WorkTimeMode::Known => "known",
        ehswitch::WorkTimeMode::Predicted => "predicted",
    };
    let mut out = provenance;
    let _ = writeln!(
        out,
        "# run_index={run_index} policy={policy} mode={mode_name} target_mbit={:.4} \
         reference_completion_s={:.6}",
        setup.target_mbit, setup.completion_time_s
    );
    let termination = match result.termination {
        ehswitch::Termination::BitsComplete => "bits-complete",
        ehswitch::Termination::EnergyExhausted => "energy-exhausted",
    };
    let _ = writeln!(
        out,
        "# switch_count={} harvest_count={} completion_time_s={:.6} \
         bits_sent_mbit={:.6} termination={termination}",
        result.switch_count, result.harvest_count, result.completion_time_s,
        result.bits_sent_mbit
    );
    out.push_str("transmitter_id,t_start_s,t_end_s,power_mw,bits_mbit\n");
    for e in &result.work_log {
        let _ = writeln!(
            out,
            "{},{:.6},{:.6},{:.6},{:.6}",
            e.transmitter_id, e.t_start_s, e.t_end_s, e.power_mw, e.bits_mbit
        );
    }
    Ok(out)
}

fn cmd_compare(
    cli: &Cli,
    runs: Option<u64>,
    policies: Option<&str>,
    mode: Option<&str>,
) -> Result<String, CliError> {
    let (mut exp, provenance) = load(cli)?;
    if let Some(n) = runs {
        exp.n_runs = n;
    }
    if let Some(p) = policies {
        exp.policies = parse_policies(p)?;
    }
    if let Some(m) = mode {
        exp.mode = parse_mode(m)?;
    }
    let outcome = monte_carlo(&exp)?;
    Ok(provenance + &outcome.csv_report())
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    let report = match &cli.cmd {
        Cmd::Schedule { run_index } => cmd_schedule(cli, *run_index)?,
        Cmd::Predict {
            tx,
            energy,
            power,
            elapsed,
            samples,
        } => cmd_predict(cli, *tx, *energy, *power, *elapsed, *samples)?,
        Cmd::Simulate {
            policy,
            mode,
            run_index,
        } => cmd_simulate(cli, policy, mode.as_deref(), *run_index)?,
        Cmd::Compare {
            runs,
            policies,
            mode,
        } => cmd_compare(cli, *runs, policies.as_deref(), mode.as_deref())?,
    };
    emit(cli, &report)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}
