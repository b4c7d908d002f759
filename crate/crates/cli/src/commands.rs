//! Subcommands.

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use powergame::effmath::to_db;
use powergame::experiments::{
    run_admission_curve, run_efficiency_curve, run_equilibrium, run_finite_vs_asymptotic, run_load_sweep,
    run_target_sir_comparison, run_utility_power_curve, Mode, ScenarioConfig,
};
use powergame::linsys::ReceiverKind;

use crate::config::{parse_config, parse_override, Settings};
use crate::output::{emit_csv, float, Table};
use crate::CliError;

pub const SWEEP_HEADER: &[&str] = &[
    "alpha",
    "kind",
    "m",
    "mode",
    "mean_utility",
    "std_utility",
    "mean_power",
    "target_sir",
    "trials_used",
    "trials_discarded",
];

#[derive(Debug, Parser)]
#[command(
    name = "powergame",
    version,
    about = "Energy-efficient power control games for CDMA uplinks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Configuration file of `key = value` lines.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Override one configuration key; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Write CSV here instead of standard output.
    #[arg(long, global = true, value_name = "PATH")]
    pub output: Option<PathBuf>,
    /// Master seed (default 0).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub trials: Option<usize>,
    /// Exit with status 4 when an equilibrium fails to converge or a trial is discarded.
    #[arg(long, global = true)]
    pub strict: bool,
    /// MF, DE, MMSE or all.
    #[arg(long, global = true)]
    pub receiver: Option<String>,
    /// Comma-separated receive antenna counts.
    #[arg(long, global = true, value_name = "LIST")]
    pub antennas: Option<String>,
    /// Load grid.
    #[arg(long = "alpha-range", global = true, value_name = "START:STOP:STEP")]
    pub alpha_range: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Target SIR, linear and in dB.
    GammaStar,
    /// Finite-system Nash equilibrium on one draw, per user.
    Equilibrium,
    /// Average utility against load.
    Sweep,
    /// Non-cooperative and Pareto-optimal utility against load.
    Pareto,
    /// Non-cooperative and Pareto-optimal target SIR against load.
    SirCompare,
    /// Average utility against load for several antenna counts.
    Antennas,
    /// Total utility per degree of freedom against load.
    Admission,
    /// Utility of one user against its own power.
    CurveUtility,
    /// Efficiency function against SIR.
    CurveEfficiency,
    /// Finite-system equilibrium powers against the large-system limit.
    ValidateAsymptotic,
}

impl Cli {
    /// `--set` pairs followed by the dedicated flags, which win.
    pub fn overrides(&self) -> Result<Vec<(String, String)>, CliError> {
        let mut pairs = self
            .set
            .iter()
            .map(|s| parse_override(s))
            .collect::<Result<Vec<_>, _>>()?;
        let mut flag = |key: &str, value: Option<String>| {
            if let Some(v) = value {
                pairs.push((key.to_string(), v));
            }
        };
        flag("seed", self.seed.map(|s| s.to_string()));
        flag("trials", self.trials.map(|t| t.to_string()));
        flag("receiver", self.receiver.clone());
        flag("antennas", self.antennas.clone());
        flag("alpha_range", self.alpha_range.clone());
        Ok(pairs)
    }
}

/// A table plus the non-convergence notes `--strict` turns into failures.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub table: Table,
    pub problems: Vec<String>,
}

impl From<Table> for Outcome {
    fn from(table: Table) -> Self {
        Self {
            table,
            problems: Vec::new(),
        }
    }
}

/// Parses configuration, runs the command, and writes its CSV.
pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let settings = parse_config(cli.config.as_deref(), &cli.overrides()?)?;
    let outcome = run(cli.command, &settings)?;
    emit_csv(&outcome.table, cli.output.as_deref())?;
    for p in &outcome.problems {
        log::warn!("{p}");
    }
    if cli.strict && !outcome.problems.is_empty() {
        return Err(CliError::NotConverged(outcome.problems.join("; ")));
    }
    Ok(())
}

fn scenario(settings: &Settings, command: Command) -> Result<ScenarioConfig, CliError> {
    let mut s = settings.scenario.clone();
    s.placement = settings.placement_or(if command == Command::Admission {
        "annulus"
    } else {
        "fixed"
    })?;
    if command == Command::Antennas && settings.antennas.is_none() {
        s.antennas = vec![1, 2, 4, 8];
    }
    s.mode = settings.mode.unwrap_or(match command {
        Command::Pareto => Mode::Both,
        _ => Mode::NonCooperative,
    });
    if command == Command::ValidateAsymptotic && settings.trials.is_none() {
        s.trials = 200;
    }
    Ok(s)
}

/// Runs one command on parsed settings.
pub fn run(command: Command, settings: &Settings) -> Result<Outcome, CliError> {
    let s = scenario(settings, command)?;
    match command {
        Command::GammaStar => gamma_star(&s),
        Command::Equilibrium => equilibrium(&s),
        Command::Sweep | Command::Pareto | Command::Antennas => sweep(&s),
        Command::SirCompare => sir_compare(&s),
        Command::Admission => admission(&s),
        Command::CurveUtility => {
            let mut t = Table::new(&["kind", "power", "sir", "utility"]);
            for r in run_utility_power_curve(&s, settings.user, &settings.power_grid())? {
                t.push(vec![
                    r.kind.short_name().into(),
                    float(r.power),
                    float(r.sir),
                    float(r.utility),
                ]);
            }
            Ok(t.into())
        }
        Command::CurveEfficiency => {
            let mut t = Table::new(&["gamma", "f"]);
            for (g, f) in run_efficiency_curve(&s.model, &settings.gamma_grid())? {
                t.push(vec![float(g), float(f)]);
            }
            Ok(t.into())
        }
        Command::ValidateAsymptotic => validate_asymptotic(&s, settings),
    }
}

fn gamma_star(s: &ScenarioConfig) -> Result<Outcome, CliError> {
    let g = s.gamma_star()?;
    let mut t = Table::new(&["efficiency", "M", "gamma_star", "gamma_star_db"]);
    t.push(vec![
        s.model.kind().to_string(),
        s.model.packet_bits().to_string(),
        float(g),
        float(to_db(g)),
    ]);
    Ok(t.into())
}

fn equilibrium(s: &ScenarioConfig) -> Result<Outcome, CliError> {
    let mut t = Table::new(&[
        "kind",
        "m",
        "user",
        "distance",
        "gain_energy",
        "power",
        "sir",
        "utility",
        "clamped",
        "converged",
        "iterations",
    ]);
    let mut problems = Vec::new();
    for run in run_equilibrium(s)? {
        let res = &run.result;
        if !res.converged {
            problems.push(format!(
                "{} with {} antenna(s) did not converge after {} sweeps",
                run.kind, run.antennas, res.iterations
            ));
        }
        for k in 0..res.powers.len() {
            t.push(vec![
                run.kind.short_name().into(),
                run.antennas.to_string(),
                k.to_string(),
                float(run.realization.distances[k]),
                float(run.realization.gains.column(k).norm_squared()),
                float(res.powers[k]),
                float(res.sirs[k]),
                float(res.utilities[k]),
                res.clamped_users.contains(&k).to_string(),
                res.converged.to_string(),
                res.iterations.to_string(),
            ]);
        }
    }
    Ok(Outcome { table: t, problems })
}

fn sweep(s: &ScenarioConfig) -> Result<Outcome, CliError> {
    let mut t = Table::new(SWEEP_HEADER);
    for r in run_load_sweep(s)? {
        t.push(vec![
            float(r.alpha),
            r.kind.short_name().into(),
            r.antennas.to_string(),
            r.mode.to_string(),
            float(r.mean_utility),
            float(r.std_utility),
            float(r.mean_power),
            float(r.target_sir),
            r.trials_used.to_string(),
            r.trials_discarded.to_string(),
        ]);
    }
    Ok(t.into())
}

fn sir_compare(s: &ScenarioConfig) -> Result<Outcome, CliError> {
    let mut t = Table::new(&["alpha", "kind", "gamma_noncoop", "gamma_pareto"]);
    for r in run_target_sir_comparison(s)? {
        t.push(vec![
            float(r.alpha),
            r.kind.short_name().into(),
            float(r.gamma_noncoop),
            float(r.gamma_pareto),
        ]);
    }
    Ok(t.into())
}

fn admission(s: &ScenarioConfig) -> Result<Outcome, CliError> {
    let mut t = Table::new(&[
        "alpha",
        "kind",
        "m",
        "mean_total_utility_per_dof",
        "std_total_utility_per_dof",
        "gamma_factor",
        "trials",
    ]);
    for r in run_admission_curve(s)? {
        t.push(vec![
            float(r.alpha),
            r.kind.short_name().into(),
            r.antennas.to_string(),
            float(r.mean_total_utility_per_dof),
            float(r.std_total_utility_per_dof),
            float(r.gamma_factor),
            r.trials.to_string(),
        ]);
    }
    Ok(t.into())
}

/// Load used per receiver when no load is configured.
pub fn default_validation_load(kind: ReceiverKind) -> f64 {
    match kind {
        ReceiverKind::MatchedFilter => 0.07,
        ReceiverKind::Decorrelator => 0.3,
        ReceiverKind::Mmse => 0.5,
    }
}

fn validate_asymptotic(s: &ScenarioConfig, settings: &Settings) -> Result<Outcome, CliError> {
    let mut rows = Vec::new();
    if settings.alpha.is_some() || settings.alpha_grid.is_some() {
        rows = run_finite_vs_asymptotic(s)?;
    } else {
        for &kind in &s.kinds {
            let per_kind = ScenarioConfig {
                kinds: vec![kind],
                alpha_grid: vec![default_validation_load(kind)],
                ..s.clone()
            };
            rows.extend(run_finite_vs_asymptotic(&per_kind)?);
        }
    }
    rows.sort_by(|a, b| {
        a.processing_gain
            .cmp(&b.processing_gain)
            .then(a.alpha.total_cmp(&b.alpha))
            .then(a.kind.short_name().cmp(b.kind.short_name()))
            .then(a.antennas.cmp(&b.antennas))
    });
    let mut t = Table::new(&[
        "N",
        "kind",
        "alpha",
        "m",
        "users",
        "mean_power_ratio",
        "mean_rel_power_error",
        "mean_abs_rel_power_error",
        "trials_used",
        "trials_discarded",
    ]);
    let mut problems = Vec::new();
    for r in rows {
        if r.trials_discarded > 0 {
            problems.push(format!(
                "{} at N = {}, alpha = {}: {} trial(s) discarded",
                r.kind, r.processing_gain, r.alpha, r.trials_discarded
            ));
        }
        t.push(vec![
            r.processing_gain.to_string(),
            r.kind.short_name().into(),
            float(r.alpha),
            r.antennas.to_string(),
            r.users.to_string(),
            float(r.mean_power_ratio),
            float(r.mean_rel_power_error),
            float(r.mean_abs_rel_power_error),
            r.trials_used.to_string(),
            r.trials_discarded.to_string(),
        ]);
    }
    Ok(Outcome { table: t, problems })
}
