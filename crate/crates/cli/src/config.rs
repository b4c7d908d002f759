//! Flat `key = value` configuration.

use std::path::Path;

use powergame::effmath::{EfficiencyKind, EfficiencyModel};
use powergame::experiments::{alpha_range, Mode, Placement, ScenarioConfig};
use powergame::linsys::ReceiverKind;
use powergame::multiantenna::gamma_factor_ma;
use powergame::Error;

use crate::CliError;

/// Every accepted key with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    ("N", "processing gain (chips per symbol)"),
    ("K", "number of users for single-realization commands"),
    ("sigma2", "noise power in watts"),
    ("R", "bit rate in bits per second"),
    ("L", "information bits per packet (defaults to M)"),
    ("M", "bits per packet"),
    ("Pmax", "transmit power cap in watts"),
    ("efficiency", "efficiency function: exp or bpsk"),
    ("receiver", "MF, DE, MMSE or all"),
    ("alpha", "a single load K/N"),
    ("alpha_range", "load grid START:STOP:STEP"),
    ("trials", "Monte Carlo trials"),
    ("seed", "master seed"),
    ("placement", "fixed or annulus"),
    ("distance", "user distance in meters for fixed placement"),
    ("d_min", "inner annulus radius in meters"),
    ("d_max", "outer annulus radius in meters"),
    ("antennas", "comma-separated receive antenna counts"),
    ("mode", "noncoop, pareto or both"),
    ("gain_mean_semantics", "amplitude or mean_square"),
    ("n_grid", "comma-separated processing gains for validate-asymptotic"),
    ("tol", "target SIR root tolerance"),
    ("sir_tol", "relative SIR tolerance at convergence"),
    ("power_tol", "relative power change that ends the iteration"),
    ("max_iter", "iteration cap"),
    ("execution", "parallel or sequential"),
    ("user", "user index for curve-utility"),
    ("power_min", "lowest power of the curve-utility grid"),
    ("power_max", "highest power of the curve-utility grid"),
    ("power_points", "points on the curve-utility grid"),
    ("gamma_max", "largest SIR of the curve-efficiency grid"),
    ("gamma_points", "points on the curve-efficiency grid"),
];

/// Receivers selected by `receiver`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReceiverSelection {
    One(ReceiverKind),
    All,
}

impl ReceiverSelection {
    pub fn kinds(self) -> Vec<ReceiverKind> {
        match self {
            ReceiverSelection::One(k) => vec![k],
            ReceiverSelection::All => ReceiverKind::ALL.to_vec(),
        }
    }
}

impl std::str::FromStr for ReceiverSelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        if s.eq_ignore_ascii_case("all") {
            Ok(ReceiverSelection::All)
        } else {
            s.parse().map(ReceiverSelection::One)
        }
    }
}

/// Parsed configuration. Fields left `None` take a per-command default.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub scenario: ScenarioConfig,
    pub efficiency: EfficiencyKind,
    pub receiver: ReceiverSelection,
    pub info_bits: Option<u32>,
    pub alpha: Option<f64>,
    pub alpha_grid: Option<Vec<f64>>,
    pub placement: Option<String>,
    pub distance: f64,
    pub d_min: f64,
    pub d_max: f64,
    pub antennas: Option<Vec<usize>>,
    pub mode: Option<Mode>,
    pub trials: Option<usize>,
    pub user: usize,
    pub power_min: f64,
    pub power_max: f64,
    pub power_points: usize,
    pub gamma_max: f64,
    pub gamma_points: usize,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::default(),
            efficiency: EfficiencyKind::ExpApprox,
            receiver: ReceiverSelection::All,
            info_bits: None,
            alpha: None,
            alpha_grid: None,
            placement: None,
            distance: 100.0,
            d_min: 10.0,
            d_max: 1000.0,
            antennas: None,
            mode: None,
            trials: None,
            user: 0,
            power_min: 1e-8,
            power_max: 1e-3,
            power_points: 201,
            gamma_max: 20.0,
            gamma_points: 401,
        }
    }
}

impl Settings {
    /// Placement for a command whose natural default is `fallback`.
    pub fn placement_or(&self, fallback: &str) -> Result<Placement, CliError> {
        let placement = match self.placement.as_deref().unwrap_or(fallback) {
            "fixed" => Placement::Fixed(self.distance),
            "annulus" => Placement::Annulus {
                inner: self.d_min,
                outer: self.d_max,
            },
            other => {
                return Err(CliError::config(format!(
                    "placement: unknown rule `{other}` (expected fixed or annulus)"
                )))
            }
        };
        placement
            .validate()
            .map_err(|e| CliError::config(format!("placement: {e}")))?;
        Ok(placement)
    }

    /// Geometric grid between `power_min` and `power_max`.
    pub fn power_grid(&self) -> Vec<f64> {
        geometric(self.power_min, self.power_max, self.power_points)
    }

    /// Uniform grid on `[0, gamma_max]`.
    pub fn gamma_grid(&self) -> Vec<f64> {
        let n = self.gamma_points.max(2) - 1;
        (0..=n).map(|i| self.gamma_max * i as f64 / n as f64).collect()
    }
}

fn geometric(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points <= 1 {
        return vec![lo];
    }
    let ratio = (hi / lo).ln() / (points - 1) as f64;
    (0..points).map(|i| lo * (ratio * i as f64).exp()).collect()
}

fn value<T: std::str::FromStr>(key: &str, raw: &str) -> Result<T, CliError> {
    raw.parse()
        .map_err(|_| CliError::config(format!("{key}: cannot parse `{raw}`")))
}

fn list<T: std::str::FromStr>(key: &str, raw: &str) -> Result<Vec<T>, CliError> {
    raw.split(',').map(|v| value(key, v.trim())).collect()
}

fn parsed<T: std::str::FromStr<Err = Error>>(key: &str, raw: &str) -> Result<T, CliError> {
    raw.parse().map_err(|e: Error| CliError::config(format!("{key}: {e}")))
}

/// Parses `START:STOP:STEP`.
pub fn parse_alpha_range(raw: &str) -> Result<Vec<f64>, CliError> {
    let parts: Vec<&str> = raw.split(':').collect();
    let [start, stop, step] = parts[..] else {
        return Err(CliError::config(format!(
            "alpha_range: expected START:STOP:STEP, got `{raw}`"
        )));
    };
    alpha_range(
        value("alpha_range", start)?,
        value("alpha_range", stop)?,
        value("alpha_range", step)?,
    )
    .map_err(|e| CliError::config(format!("alpha_range: {e}")))
}

fn unknown_key(key: &str) -> CliError {
    let valid: Vec<&str> = KEYS.iter().map(|(k, _)| *k).collect();
    CliError::config(format!("unknown key `{key}`; valid keys are: {}", valid.join(", ")))
}

fn apply(settings: &mut Settings, key: &str, raw: &str) -> Result<(), CliError> {
    let s = &mut settings.scenario;
    match key {
        "N" => s.params.processing_gain = value(key, raw)?,
        "K" => s.params.users = value(key, raw)?,
        "sigma2" => s.params.noise_power = value(key, raw)?,
        "R" => s.params.rate = value(key, raw)?,
        "L" => settings.info_bits = Some(value(key, raw)?),
        "M" => s.params.packet_bits = value(key, raw)?,
        "Pmax" => s.params.max_power = value(key, raw)?,
        "efficiency" => settings.efficiency = parsed(key, raw)?,
        "receiver" => settings.receiver = parsed(key, raw)?,
        "alpha" => settings.alpha = Some(value(key, raw)?),
        "alpha_range" => settings.alpha_grid = Some(parse_alpha_range(raw)?),
        "trials" => settings.trials = Some(value(key, raw)?),
        "seed" => s.master_seed = value(key, raw)?,
        "placement" => settings.placement = Some(raw.to_ascii_lowercase()),
        "distance" => settings.distance = value(key, raw)?,
        "d_min" => settings.d_min = value(key, raw)?,
        "d_max" => settings.d_max = value(key, raw)?,
        "antennas" => settings.antennas = Some(list(key, raw)?),
        "mode" => settings.mode = Some(parsed(key, raw)?),
        "gain_mean_semantics" => s.gain_semantics = parsed(key, raw)?,
        "n_grid" => s.processing_gains = list(key, raw)?,
        "tol" => s.tol = value(key, raw)?,
        "sir_tol" => s.solver.sir_tol = value(key, raw)?,
        "power_tol" => s.solver.power_tol = value(key, raw)?,
        "max_iter" => s.solver.max_iter = value(key, raw)?,
        "execution" => s.execution = parsed(key, raw)?,
        "user" => settings.user = value(key, raw)?,
        "power_min" => settings.power_min = value(key, raw)?,
        "power_max" => settings.power_max = value(key, raw)?,
        "power_points" => settings.power_points = value(key, raw)?,
        "gamma_max" => settings.gamma_max = value(key, raw)?,
        "gamma_points" => settings.gamma_points = value(key, raw)?,
        _ => return Err(unknown_key(key)),
    }
    Ok(())
}

/// Splits `key = value` text into pairs, dropping blank lines and `#` comments.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut pairs = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, raw)) = line.split_once('=') else {
            return Err(CliError::config(format!(
                "line {}: expected `key = value`, got `{line}`",
                n + 1
            )));
        };
        pairs.push((key.trim().to_string(), raw.trim().to_string()));
    }
    Ok(pairs)
}

/// Parses one `KEY=VALUE` override.
pub fn parse_override(raw: &str) -> Result<(String, String), CliError> {
    raw.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| CliError::config(format!("override `{raw}` is not KEY=VALUE")))
}

/// Builds settings from an optional file and overrides applied after it.
pub fn parse_config(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Settings, CliError> {
    let mut pairs = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
            parse_pairs(&text)?
        }
        None => Vec::new(),
    };
    pairs.extend_from_slice(overrides);
    let mut settings = Settings::default();
    for (key, raw) in &pairs {
        apply(&mut settings, key, raw)?;
    }
    finish(settings)
}

fn finish(mut settings: Settings) -> Result<Settings, CliError> {
    let s = &mut settings.scenario;
    s.params.info_bits = settings.info_bits.unwrap_or(s.params.packet_bits);
    s.model = EfficiencyModel::new(settings.efficiency, s.params.packet_bits)
        .map_err(|e| CliError::config(format!("M: {e}")))?;
    s.kinds = settings.receiver.kinds();
    if let Some(t) = settings.trials {
        s.trials = t;
    }
    if let Some(a) = &settings.antennas {
        s.antennas = a.clone();
    }
    if let Some(alpha) = settings.alpha {
        s.alpha_grid = vec![alpha];
    } else if let Some(grid) = &settings.alpha_grid {
        s.alpha_grid = grid.clone();
    }
    s.params
        .validate()
        .map_err(|e| CliError::config(format!("system parameters: {e}")))?;
    s.validate().map_err(CliError::config)?;
    if !(settings.power_min > 0.0 && settings.power_max > settings.power_min) {
        return Err(CliError::config("power_min/power_max: need 0 < power_min < power_max"));
    }
    if !(settings.gamma_max > 0.0) {
        return Err(CliError::config("gamma_max: must be positive"));
    }
    if let (Some(alpha), ReceiverSelection::One(kind)) = (settings.alpha, settings.receiver) {
        let gamma_star = s.gamma_star().map_err(|e| CliError::config(format!("M: {e}")))?;
        for &m in &s.antennas {
            if let Err(Error::Infeasible { bound, .. }) = gamma_factor_ma(kind, alpha, m, gamma_star) {
                return Err(CliError::config(format!(
                    "alpha: load {alpha} is infeasible for {kind} with {m} antenna(s); requires alpha < {bound}"
                )));
            }
        }
    }
    Ok(settings)
}

impl std::str::FromStr for Settings {
    type Err = CliError;

    /// Parses configuration text with no overrides.
    fn from_str(text: &str) -> Result<Self, CliError> {
        let mut settings = Settings::default();
        for (key, raw) in parse_pairs(text)? {
            apply(&mut settings, &key, &raw)?;
        }
        finish(settings)
    }
}
