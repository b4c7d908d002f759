//! Seeded Monte Carlo scenarios producing tables.
//!
//! Trial `i` of every scenario draws from [`trial_rng`]`(master_seed, i, ·)`
//! only, so results do not depend on scheduling or worker count, and every
//! receiver, load and antenna count sees the same channel draws.

use std::cmp::Ordering;

use rand::Rng;

use crate::asymptotic::{balanced_received_power, solve_pareto_target};
use crate::effmath::{solve_gamma_star, EfficiencyModel, DEFAULT_TOL};
use crate::game::{solve_with_detector, Detector, EquilibriumResult, SolverOptions};
use crate::linsys::{
    generate_gains, utility_vs_power_curve, ChannelRealization, GainMeanSemantics, ReceiverKind, SystemParams,
};
use crate::multiantenna::{detector_ma, equilibrium_power_ma, gamma_factor_ma, utility_ma};
use crate::parallel::{map_indexed, trial_rng, Execution};
use crate::stats::{compensated_sum, Summary};
use crate::{Error, Result};

/// Redraws allowed per trial when a draw is unusable (singular decorrelator).
pub const MAX_ATTEMPTS: u64 = 16;

/// Where users sit relative to the receiver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Placement {
    /// Every user at the same distance, in meters.
    Fixed(f64),
    /// Uniform over the area of an annulus with the given radii, in meters.
    Annulus { inner: f64, outer: f64 },
}

impl Placement {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Placement::Fixed(d) if d > 0.0 && d.is_finite() => Ok(()),
            Placement::Annulus { inner, outer } if inner > 0.0 && outer > inner && outer.is_finite() => Ok(()),
            other => Err(Error::InvalidParameter(format!("invalid placement {other:?}"))),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Placement::Fixed(d) => d,
            Placement::Annulus { inner, outer } => {
                let u: f64 = rng.random();
                (inner * inner + u * (outer * outer - inner * inner)).sqrt()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    NonCooperative,
    Pareto,
    #[default]
    Both,
}

impl Mode {
    fn solutions(self) -> &'static [Solution] {
        match self {
            Mode::NonCooperative => &[Solution::NonCooperative],
            Mode::Pareto => &[Solution::Pareto],
            Mode::Both => &[Solution::NonCooperative, Solution::Pareto],
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "noncooperative" | "noncoop" => Ok(Mode::NonCooperative),
            "pareto" => Ok(Mode::Pareto),
            "both" => Ok(Mode::Both),
            _ => Err(Error::InvalidParameter(format!(
                "unknown mode `{s}` (expected noncoop, pareto or both)"
            ))),
        }
    }
}

/// The solution concept a sweep row reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Solution {
    NonCooperative,
    Pareto,
}

impl std::fmt::Display for Solution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Solution::NonCooperative => "noncoop",
            Solution::Pareto => "pareto",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub params: SystemParams,
    pub model: EfficiencyModel,
    pub kinds: Vec<ReceiverKind>,
    /// Strictly increasing positive loads.
    pub alpha_grid: Vec<f64>,
    pub trials: usize,
    pub master_seed: u64,
    pub placement: Placement,
    pub antennas: Vec<usize>,
    pub mode: Mode,
    pub gain_semantics: GainMeanSemantics,
    /// Processing gains compared against the large-system limit.
    pub processing_gains: Vec<usize>,
    pub solver: SolverOptions,
    /// Absolute tolerance of the target-SIR root solves.
    pub tol: f64,
    pub execution: Execution,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            params: SystemParams::default(),
            model: EfficiencyModel::exp_approx(100).expect("M = 100 is valid"),
            kinds: ReceiverKind::ALL.to_vec(),
            alpha_grid: alpha_range(0.01, 1.15, 0.01).expect("static grid"),
            trials: 500,
            master_seed: 0,
            placement: Placement::Fixed(100.0),
            antennas: vec![1],
            mode: Mode::Both,
            gain_semantics: GainMeanSemantics::Amplitude,
            processing_gains: vec![50, 100, 200],
            solver: SolverOptions::default(),
            tol: DEFAULT_TOL,
            execution: Execution::Parallel,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.placement.validate()?;
        let bad = |msg: &str| Err(Error::InvalidParameter(msg.to_string()));
        if self.alpha_grid.is_empty() || self.alpha_grid[0] <= 0.0 || self.alpha_grid.windows(2).any(|w| w[1] <= w[0]) {
            return bad("alpha grid must be positive and strictly increasing");
        }
        if self.trials == 0 {
            return bad("trials must be at least 1");
        }
        if self.kinds.is_empty() {
            return bad("at least one receiver kind is required");
        }
        if self.antennas.is_empty() || self.antennas.contains(&0) {
            return bad("antenna counts must be at least 1");
        }
        if self.processing_gains.contains(&0) {
            return bad("processing gains must be at least 1");
        }
        if !(self.tol > 0.0) {
            return bad("tolerance must be positive");
        }
        Ok(())
    }

    pub fn gamma_star(&self) -> Result<f64> {
        solve_gamma_star(&self.model, self.tol)
    }

    fn antenna_list(&self) -> Vec<usize> {
        let mut m = self.antennas.clone();
        m.sort_unstable();
        m.dedup();
        m
    }
}

/// Inclusive `start:stop:step` grid; points are rounded to 12 decimals so
/// they print the same regardless of accumulated error.
pub fn alpha_range(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && stop >= start && start.is_finite() && stop.is_finite()) {
        return Err(Error::InvalidParameter(format!("bad range {start}:{stop}:{step}")));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..count)
        .map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12)
        .collect())
}

fn kind_order(a: ReceiverKind, b: ReceiverKind) -> Ordering {
    a.short_name().cmp(b.short_name())
}

fn skip(what: &str, alpha: f64, kind: ReceiverKind, m: usize, err: &Error) {
    log::info!("{what}: omitting {kind} at load {alpha} with {m} antenna(s): {err}");
}

/// One cell of a load sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub alpha: f64,
    pub kind: ReceiverKind,
    pub antennas: usize,
    pub mode: Solution,
    /// Bits per joule.
    pub mean_utility: f64,
    pub std_utility: f64,
    /// Watts.
    pub mean_power: f64,
    pub target_sir: f64,
    pub trials_used: usize,
    pub trials_discarded: usize,
}

/// Average utility against load for every receiver, antenna count and
/// solution concept, using the large-system closed forms with random gains.
///
/// Pareto rows are produced for single-antenna cells only.
pub fn run_load_sweep(config: &ScenarioConfig) -> Result<Vec<SweepRow>> {
    config.validate()?;
    let gamma_star = config.gamma_star()?;
    let antennas = config.antenna_list();
    let max_m = *antennas.last().expect("validated");
    let params = &config.params;

    // pooled power gain h̄² of the tagged user for each antenna count
    let energies: Vec<Vec<f64>> = map_indexed(config.trials, config.execution, |t| {
        let mut rng = trial_rng(config.master_seed, t as u64, 0);
        let d = config.placement.sample(&mut rng);
        let gains =
            generate_gains(&[d], max_m, config.gain_semantics, &mut rng).expect("placement distances are positive");
        antennas
            .iter()
            .map(|&m| gains.rows(0, m).iter().map(|h| h * h).sum())
            .collect()
    });

    let mut rows = Vec::new();
    for &alpha in &config.alpha_grid {
        for &kind in &config.kinds {
            for (mi, &m) in antennas.iter().enumerate() {
                for &mode in config.mode.solutions() {
                    let target = match mode {
                        Solution::NonCooperative => gamma_factor_ma(kind, alpha, m, gamma_star)
                            .map(|gf| (gamma_star, gamma_star * params.noise_power / gf)),
                        Solution::Pareto if m == 1 => solve_pareto_target(kind, alpha, &config.model, config.tol)
                            .and_then(|g| Ok((g, balanced_received_power(kind, alpha, g, params.noise_power)?))),
                        Solution::Pareto => continue,
                    };
                    let (sir, received) = match target {
                        Ok(t) => t,
                        Err(e) => {
                            skip("load sweep", alpha, kind, m, &e);
                            continue;
                        }
                    };
                    let scale = params.goodput() * config.model.value(sir)? / received;
                    let utilities: Vec<f64> = energies.iter().map(|e| scale * e[mi]).collect();
                    let powers: Vec<f64> = energies.iter().map(|e| received / e[mi]).collect();
                    let u = Summary::of(&utilities);
                    rows.push(SweepRow {
                        alpha,
                        kind,
                        antennas: m,
                        mode,
                        mean_utility: u.mean,
                        std_utility: u.std,
                        mean_power: Summary::of(&powers).mean,
                        target_sir: sir,
                        trials_used: config.trials,
                        trials_discarded: 0,
                    });
                }
            }
        }
    }
    rows.sort_by(|a, b| {
        a.alpha
            .total_cmp(&b.alpha)
            .then(kind_order(a.kind, b.kind))
            .then(a.antennas.cmp(&b.antennas))
            .then(a.mode.cmp(&b.mode))
    });
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetSirRow {
    pub alpha: f64,
    pub kind: ReceiverKind,
    pub gamma_noncoop: f64,
    pub gamma_pareto: f64,
}

/// Non-cooperative against Pareto-optimal target SIR across the load grid.
pub fn run_target_sir_comparison(config: &ScenarioConfig) -> Result<Vec<TargetSirRow>> {
    config.validate()?;
    let gamma_star = config.gamma_star()?;
    let mut rows = Vec::new();
    for &alpha in &config.alpha_grid {
        let mut kinds = config.kinds.clone();
        kinds.sort_by(|a, b| kind_order(*a, *b));
        for kind in kinds {
            match solve_pareto_target(kind, alpha, &config.model, config.tol) {
                Ok(gamma_pareto) => rows.push(TargetSirRow {
                    alpha,
                    kind,
                    gamma_noncoop: gamma_star,
                    gamma_pareto,
                }),
                Err(e) => skip("target SIR comparison", alpha, kind, 1, &e),
            }
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmissionRow {
    pub alpha: f64,
    pub kind: ReceiverKind,
    pub antennas: usize,
    /// Sum utility divided by the processing gain, bits per joule.
    pub mean_total_utility_per_dof: f64,
    pub std_total_utility_per_dof: f64,
    /// `Γ̄` at this load.
    pub gamma_factor: f64,
    pub trials: usize,
}

/// Total utility per degree of freedom against load with users spread over
/// the cell.
///
/// Each trial places a pool of `⌈α_max N⌉` users; the total utility per
/// degree of freedom at load `α` is `α` times the pool's mean utility, so
/// every load sees the same placements.
pub fn run_admission_curve(config: &ScenarioConfig) -> Result<Vec<AdmissionRow>> {
    config.validate()?;
    let gamma_star = config.gamma_star()?;
    let antennas = config.antenna_list();
    let max_m = *antennas.last().expect("validated");
    let max_alpha = *config.alpha_grid.last().expect("validated");
    let pool = ((max_alpha * config.params.processing_gain as f64).ceil() as usize).max(1);

    // [trial][antenna index][user] pooled power gains
    let energies: Vec<Vec<Vec<f64>>> = map_indexed(config.trials, config.execution, |t| {
        let mut rng = trial_rng(config.master_seed, t as u64, 0);
        let distances: Vec<f64> = (0..pool).map(|_| config.placement.sample(&mut rng)).collect();
        let gains = generate_gains(&distances, max_m, config.gain_semantics, &mut rng)
            .expect("placement distances are positive");
        antennas
            .iter()
            .map(|&m| gains.column_iter().map(|h| h.rows(0, m).norm_squared()).collect())
            .collect()
    });

    let mut rows = Vec::new();
    for &alpha in &config.alpha_grid {
        let mut kinds = config.kinds.clone();
        kinds.sort_by(|a, b| kind_order(*a, *b));
        for kind in kinds {
            for (mi, &m) in antennas.iter().enumerate() {
                let gf = match gamma_factor_ma(kind, alpha, m, gamma_star) {
                    Ok(g) => g,
                    Err(e) => {
                        skip("admission curve", alpha, kind, m, &e);
                        continue;
                    }
                };
                let totals = energies
                    .iter()
                    .map(|trial| {
                        let utilities = trial[mi]
                            .iter()
                            .map(|&e| utility_ma(kind, alpha, m, &config.params, &config.model, gamma_star, e))
                            .collect::<Result<Vec<_>>>()?;
                        Ok(alpha * compensated_sum(&utilities) / utilities.len() as f64)
                    })
                    .collect::<Result<Vec<_>>>()?;
                let s = Summary::of(&totals);
                rows.push(AdmissionRow {
                    alpha,
                    kind,
                    antennas: m,
                    mean_total_utility_per_dof: s.mean,
                    std_total_utility_per_dof: s.std,
                    gamma_factor: gf,
                    trials: config.trials,
                });
            }
        }
    }
    Ok(rows)
}

/// Row with the largest mean total utility for one receiver and antenna count.
pub fn admission_peak(rows: &[AdmissionRow], kind: ReceiverKind, antennas: usize) -> Option<&AdmissionRow> {
    rows.iter()
        .filter(|r| r.kind == kind && r.antennas == antennas)
        .max_by(|a, b| a.mean_total_utility_per_dof.total_cmp(&b.mean_total_utility_per_dof))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub kind: ReceiverKind,
    pub power: f64,
    pub sir: f64,
    pub utility: f64,
}

/// Utility of user `user` against its own transmit power on one finite
/// realization, with every other user at its equilibrium power.
pub fn run_utility_power_curve(config: &ScenarioConfig, user: usize, power_grid: &[f64]) -> Result<Vec<CurveRow>> {
    config.validate()?;
    let params = &config.params;
    if user >= params.users {
        return Err(Error::InvalidParameter(format!(
            "user {user} out of range for K = {}",
            params.users
        )));
    }
    let gamma_star = config.gamma_star()?;
    let single = SystemParams {
        antennas: 1,
        ..params.clone()
    };
    let mut rows = Vec::new();
    let mut kinds = config.kinds.clone();
    kinds.sort_by(|a, b| kind_order(*a, *b));
    for kind in kinds {
        let (realization, detector) = draw_usable(config, &single, 0, |r| {
            Detector::new(kind, &r.spreading, &r.amplitudes())
        })?
        .ok_or(Error::Rank {
            condition: f64::INFINITY,
        })?;
        let eq = solve_with_detector(&detector, gamma_star, &single, &config.model, &config.solver)?;
        let amplitudes = realization.amplitudes();
        let curve = utility_vs_power_curve(
            user,
            &realization.spreading,
            &amplitudes,
            kind,
            &eq.powers,
            power_grid,
            &single,
            &config.model,
        )?;
        let mut powers = eq.powers.clone();
        for (power, utility) in curve {
            powers[user] = power;
            rows.push(CurveRow {
                kind,
                power,
                sir: detector.sir(user, &powers, single.noise_power)?,
                utility,
            });
        }
    }
    Ok(rows)
}

/// One finite-system equilibrium.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumRun {
    pub kind: ReceiverKind,
    pub antennas: usize,
    pub realization: ChannelRealization,
    pub result: EquilibriumResult,
}

/// Nash equilibria on the first trial's draw for every receiver and antenna
/// count, with `params.users` users.
pub fn run_equilibrium(config: &ScenarioConfig) -> Result<Vec<EquilibriumRun>> {
    config.validate()?;
    let gamma_star = config.gamma_star()?;
    let mut kinds = config.kinds.clone();
    kinds.sort_by(|a, b| kind_order(*a, *b));
    let mut runs = Vec::new();
    for kind in kinds {
        for m in config.antenna_list() {
            let params = SystemParams {
                antennas: m,
                ..config.params.clone()
            };
            let drawn = draw_usable(config, &params, 0, |r| {
                if m == 1 {
                    Detector::new(kind, &r.spreading, &r.amplitudes())
                } else {
                    detector_ma(kind, &r.spreading, &r.gains)
                }
            })?;
            let (realization, detector) = drawn.ok_or(Error::Rank {
                condition: f64::INFINITY,
            })?;
            let result = solve_with_detector(&detector, gamma_star, &params, &config.model, &config.solver)?;
            runs.push(EquilibriumRun {
                kind,
                antennas: m,
                realization,
                result,
            });
        }
    }
    Ok(runs)
}

/// `(γ, f(γ))` along a grid.
pub fn run_efficiency_curve(model: &EfficiencyModel, gamma_grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    if gamma_grid.first().is_some_and(|&g| g < 0.0) || gamma_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter(
            "SIR grid must be nonnegative and strictly increasing".into(),
        ));
    }
    gamma_grid.iter().map(|&g| Ok((g, model.value(g)?))).collect()
}

/// Draws a realization for trial `trial`, redrawing on the next substream
/// while `build` reports a rank failure. `None` when every attempt failed.
fn draw_usable<T, F>(
    config: &ScenarioConfig,
    params: &SystemParams,
    trial: u64,
    build: F,
) -> Result<Option<(ChannelRealization, T)>>
where
    F: Fn(&ChannelRealization) -> Result<T>,
{
    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = trial_rng(config.master_seed, trial, attempt);
        let distances = (0..params.users).map(|_| config.placement.sample(&mut rng)).collect();
        let realization = ChannelRealization::draw(params, distances, config.gain_semantics, &mut rng)?;
        match build(&realization) {
            Ok(t) => return Ok(Some((realization, t))),
            Err(Error::Rank { condition }) => {
                log::debug!("trial {trial} attempt {attempt}: redraw (condition {condition:e})");
            }
            Err(e) => return Err(e),
        }
    }
    Ok(None)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiniteAsymptoticRow {
    pub processing_gain: usize,
    pub kind: ReceiverKind,
    pub alpha: f64,
    pub antennas: usize,
    pub users: usize,
    /// Mean over users and trials of `p_finite / p_large`.
    pub mean_power_ratio: f64,
    /// `|mean_power_ratio − 1|`.
    pub mean_rel_power_error: f64,
    /// Mean over users and trials of `|p_finite / p_large − 1|`.
    pub mean_abs_rel_power_error: f64,
    pub trials_used: usize,
    pub trials_discarded: usize,
}

/// Finite-system equilibrium powers against the large-system closed form,
/// user by user, for every processing gain, receiver, load and antenna count.
///
/// A trial is discarded when no draw within [`MAX_ATTEMPTS`] is usable, the
/// iteration does not converge, or some user is held at the power cap (the
/// closed form has no cap).
pub fn run_finite_vs_asymptotic(config: &ScenarioConfig) -> Result<Vec<FiniteAsymptoticRow>> {
    config.validate()?;
    let gamma_star = config.gamma_star()?;
    let mut rows = Vec::new();
    for &n in &config.processing_gains {
        for &kind in &config.kinds {
            for &alpha in &config.alpha_grid {
                for &m in &config.antenna_list() {
                    let users = ((alpha * n as f64).round() as usize).max(1);
                    let load = users as f64 / n as f64;
                    if let Err(e) = gamma_factor_ma(kind, load, m, gamma_star) {
                        skip("finite vs asymptotic", alpha, kind, m, &e);
                        continue;
                    }
                    if kind == ReceiverKind::Decorrelator && users > n {
                        continue;
                    }
                    let params = SystemParams {
                        users,
                        processing_gain: n,
                        antennas: m,
                        ..config.params.clone()
                    };
                    let trials: Vec<Option<(f64, f64)>> = map_indexed(config.trials, config.execution, |t| {
                        finite_trial(config, &params, kind, load, gamma_star, t as u64).unwrap_or_else(|e| {
                            log::warn!("trial {t} failed: {e}");
                            None
                        })
                    });
                    let used: Vec<(f64, f64)> = trials.iter().flatten().copied().collect();
                    let ratio: Vec<f64> = used.iter().map(|u| u.0).collect();
                    let abs: Vec<f64> = used.iter().map(|u| u.1).collect();
                    let mean_power_ratio = Summary::of(&ratio).mean;
                    rows.push(FiniteAsymptoticRow {
                        processing_gain: n,
                        kind,
                        alpha,
                        antennas: m,
                        users,
                        mean_power_ratio,
                        mean_rel_power_error: (mean_power_ratio - 1.0).abs(),
                        mean_abs_rel_power_error: Summary::of(&abs).mean,
                        trials_used: used.len(),
                        trials_discarded: config.trials - used.len(),
                    });
                }
            }
        }
    }
    Ok(rows)
}

/// `(mean ratio, mean |ratio − 1|)` over the users of one trial.
fn finite_trial(
    config: &ScenarioConfig,
    params: &SystemParams,
    kind: ReceiverKind,
    load: f64,
    gamma_star: f64,
    trial: u64,
) -> Result<Option<(f64, f64)>> {
    let drawn = draw_usable(config, params, trial, |r| {
        if params.antennas == 1 {
            Detector::new(kind, &r.spreading, &r.amplitudes())
        } else {
            detector_ma(kind, &r.spreading, &r.gains)
        }
    })?;
    let Some((realization, detector)) = drawn else {
        return Ok(None);
    };
    let eq = solve_with_detector(&detector, gamma_star, params, &config.model, &config.solver)?;
    if !eq.converged || !eq.clamped_users.is_empty() {
        return Ok(None);
    }
    let mut ratios = Vec::with_capacity(params.users);
    for (k, h) in realization.gains.column_iter().enumerate() {
        let large = equilibrium_power_ma(
            kind,
            load,
            params.antennas,
            gamma_star,
            params.noise_power,
            h.norm_squared(),
        )?;
        ratios.push(eq.powers[k] / large);
    }
    let deviations: Vec<f64> = ratios.iter().map(|r| (r - 1.0).abs()).collect();
    let n = ratios.len() as f64;
    Ok(Some((compensated_sum(&ratios) / n, compensated_sum(&deviations) / n)))
}
