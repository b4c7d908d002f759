//! Best-response power control to the SIR-balanced Nash equilibrium.
//!
//! Output SIR is linear in a user's own power at fixed interference for all
//! three receivers, so the best response to any interference level is the
//! power that lands exactly on the target `γ*`, capped at `P_max`. Iterating
//! the best response converges (standard interference function) to the unique
//! equilibrium.

use nalgebra::DMatrix;

use crate::effmath::{solve_gamma_star, EfficiencyModel, DEFAULT_TOL};
use crate::linsys::{
    decorrelator_filters, received_signatures, utility, ChannelRealization, ReceiverKind, SystemParams,
};
use crate::{Error, Result};

/// Output-SIR evaluator for a fixed set of received signatures.
///
/// Filters that do not depend on the powers (matched filter, decorrelator,
/// per-antenna variants) are reduced to their coupling coefficients once. The
/// MMSE receiver is evaluated in user space through the matrix inversion
/// lemma, so each evaluation costs one `K × K` factorization.
#[derive(Debug, Clone)]
pub enum Detector {
    Fixed {
        /// `(c_kᵀ v_j)²` in row `k`, column `j`.
        coupling: DMatrix<f64>,
        /// `c_kᵀ c_k`.
        filter_energy: Vec<f64>,
    },
    Mmse {
        /// `VᵀV` for received signatures `V`.
        gram: DMatrix<f64>,
    },
}

impl Detector {
    /// Single-antenna detector for spreading `S` and amplitude gains `h`.
    pub fn new(kind: ReceiverKind, spreading: &DMatrix<f64>, amplitudes: &[f64]) -> Result<Self> {
        if amplitudes.len() != spreading.ncols() {
            return Err(Error::Dimension(format!(
                "{} amplitudes for {} users",
                amplitudes.len(),
                spreading.ncols()
            )));
        }
        let v = received_signatures(spreading, amplitudes);
        Ok(match kind {
            ReceiverKind::MatchedFilter => Self::from_filters(spreading, &v)?,
            ReceiverKind::Decorrelator => Self::from_filters(&decorrelator_filters(spreading)?, &v)?,
            ReceiverKind::Mmse => Self::mmse(&v),
        })
    }

    /// Power-independent filters `C` (one column per user) applied to
    /// received signatures `V`.
    pub fn from_filters(filters: &DMatrix<f64>, signatures: &DMatrix<f64>) -> Result<Self> {
        if filters.shape() != signatures.shape() {
            return Err(Error::Dimension(format!(
                "filters {:?} vs signatures {:?}",
                filters.shape(),
                signatures.shape()
            )));
        }
        let coupling = filters.tr_mul(signatures).map(|x| x * x);
        let filter_energy = filters.column_iter().map(|c| c.norm_squared()).collect();
        Ok(Detector::Fixed {
            coupling,
            filter_energy,
        })
    }

    pub fn mmse(signatures: &DMatrix<f64>) -> Self {
        Detector::Mmse {
            gram: signatures.tr_mul(signatures),
        }
    }

    pub fn users(&self) -> usize {
        match self {
            Detector::Fixed { filter_energy, .. } => filter_energy.len(),
            Detector::Mmse { gram } => gram.nrows(),
        }
    }

    /// Output SIR of every user.
    pub fn sirs(&self, powers: &[f64], noise_power: f64) -> Result<Vec<f64>> {
        self.check(powers)?;
        match self {
            Detector::Fixed { .. } => (0..powers.len()).map(|k| self.sir(k, powers, noise_power)).collect(),
            Detector::Mmse { gram } => {
                // γ_k = p_k / (σ² [(σ² P⁻¹ + VᵀV)⁻¹]_kk) − 1 over the active users
                let active: Vec<usize> = (0..powers.len()).filter(|&j| powers[j] > 0.0).collect();
                let mut sirs = vec![0.0; powers.len()];
                if active.is_empty() {
                    return Ok(sirs);
                }
                let b = DMatrix::from_fn(active.len(), active.len(), |r, c| {
                    let g = gram[(active[r], active[c])];
                    if r == c {
                        g + noise_power / powers[active[r]]
                    } else {
                        g
                    }
                });
                let inv = b
                    .cholesky()
                    .ok_or(Error::Rank {
                        condition: f64::INFINITY,
                    })?
                    .inverse();
                for (r, &k) in active.iter().enumerate() {
                    sirs[k] = powers[k] / (noise_power * inv[(r, r)]) - 1.0;
                }
                Ok(sirs)
            }
        }
    }

    /// Output SIR of user `k` alone.
    pub fn sir(&self, k: usize, powers: &[f64], noise_power: f64) -> Result<f64> {
        self.check(powers)?;
        if k >= powers.len() {
            return Err(Error::Dimension(format!("user {k} out of range")));
        }
        match self {
            Detector::Fixed {
                coupling,
                filter_energy,
            } => {
                let row = coupling.row(k);
                let interference: f64 = (0..powers.len()).filter(|&j| j != k).map(|j| powers[j] * row[j]).sum();
                Ok(powers[k] * row[k] / (noise_power * filter_energy[k] + interference))
            }
            Detector::Mmse { gram } => {
                // v_kᵀ A_k⁻¹ v_k = σ⁻² (G_kk − g_kᵀ (σ² P⁻¹ + G)⁻¹ g_k) over interferers
                let others: Vec<usize> = (0..powers.len()).filter(|&j| j != k && powers[j] > 0.0).collect();
                let own = gram[(k, k)];
                if others.is_empty() {
                    return Ok(powers[k] * own / noise_power);
                }
                let b = DMatrix::from_fn(others.len(), others.len(), |r, c| {
                    let g = gram[(others[r], others[c])];
                    if r == c {
                        g + noise_power / powers[others[r]]
                    } else {
                        g
                    }
                });
                let cross = nalgebra::DVector::from_iterator(others.len(), others.iter().map(|&j| gram[(k, j)]));
                let solved = b
                    .cholesky()
                    .ok_or(Error::Rank {
                        condition: f64::INFINITY,
                    })?
                    .solve(&cross);
                Ok(powers[k] * (own - cross.dot(&solved)) / noise_power)
            }
        }
    }

    fn check(&self, powers: &[f64]) -> Result<()> {
        if powers.len() != self.users() {
            return Err(Error::Dimension(format!(
                "{} powers for {} users",
                powers.len(),
                self.users()
            )));
        }
        if let Some(&p) = powers.iter().find(|&&p| !(p >= 0.0 && p.is_finite())) {
            return Err(Error::Domain {
                what: "power",
                value: p,
            });
        }
        Ok(())
    }
}

/// Outcome of a best-response power iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumResult {
    pub powers: Vec<f64>,
    pub sirs: Vec<f64>,
    /// Bits per joule.
    pub utilities: Vec<f64>,
    pub iterations: usize,
    /// Powers settled and every unclamped user sits at the target.
    pub converged: bool,
    /// Users transmitting at `P_max`, in increasing order.
    pub clamped_users: Vec<usize>,
    pub target_sir: f64,
}

impl EquilibriumResult {
    /// Largest `|γ_k − γ*| / γ*` over all users, clamped or not.
    pub fn max_sir_error(&self) -> f64 {
        self.sirs
            .iter()
            .map(|g| (g - self.target_sir).abs() / self.target_sir)
            .fold(0.0, f64::max)
    }

    pub fn is_sir_balanced(&self, tol: f64) -> bool {
        self.max_sir_error() <= tol
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    /// Relative SIR tolerance for unclamped users at convergence.
    pub sir_tol: f64,
    /// Stop once the largest relative power change in a sweep drops below this.
    pub power_tol: f64,
    pub max_iter: usize,
    /// Starting power for every user; `None` means `10⁻² P_max`.
    pub initial_power: Option<f64>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            sir_tol: 1e-6,
            power_tol: 1e-9,
            max_iter: 10_000,
            initial_power: None,
        }
    }
}

/// `min(p_k γ*/γ_k, P_max)` with the receiver re-derived from the current
/// interferer powers.
pub fn best_response_power(
    k: usize,
    powers: &[f64],
    detector: &Detector,
    target: f64,
    noise_power: f64,
    max_power: f64,
) -> Result<f64> {
    let sir = detector.sir(k, powers, noise_power)?;
    response(k, powers[k], sir, target, max_power)
}

fn response(k: usize, power: f64, sir: f64, target: f64, max_power: f64) -> Result<f64> {
    if !(sir > 0.0) {
        return Err(Error::ZeroSir { user: k });
    }
    Ok((power * target / sir).min(max_power))
}

/// Stateful best-response iteration, one sweep at a time.
#[derive(Debug, Clone)]
pub struct PowerIteration<'a> {
    detector: &'a Detector,
    target: f64,
    noise_power: f64,
    max_power: f64,
    powers: Vec<f64>,
    sweeps: usize,
}

impl<'a> PowerIteration<'a> {
    pub fn new(
        detector: &'a Detector,
        target: f64,
        noise_power: f64,
        max_power: f64,
        initial: Vec<f64>,
    ) -> Result<Self> {
        if initial.len() != detector.users() {
            return Err(Error::Dimension(format!(
                "{} initial powers for {} users",
                initial.len(),
                detector.users()
            )));
        }
        if let Some(&p) = initial.iter().find(|&&p| !(p > 0.0)) {
            return Err(Error::Domain {
                what: "initial power",
                value: p,
            });
        }
        Ok(Self {
            detector,
            target,
            noise_power,
            max_power,
            powers: initial,
            sweeps: 0,
        })
    }

    /// Every user responds to the same snapshot of powers. Returns the
    /// largest relative power change.
    pub fn sweep(&mut self) -> Result<f64> {
        let sirs = self.detector.sirs(&self.powers, self.noise_power)?;
        let mut change = 0.0f64;
        for (k, (p, sir)) in self.powers.iter_mut().zip(sirs).enumerate() {
            let next = response(k, *p, sir, self.target, self.max_power)?;
            change = change.max((next - *p).abs() / *p);
            *p = next;
        }
        self.sweeps += 1;
        Ok(change)
    }

    /// Users respond one after another in `order`, each seeing the updates
    /// made before it.
    pub fn sweep_in_order(&mut self, order: &[usize]) -> Result<f64> {
        let mut change = 0.0f64;
        for &k in order {
            let old = self.powers[k];
            let next = best_response_power(
                k,
                &self.powers,
                self.detector,
                self.target,
                self.noise_power,
                self.max_power,
            )?;
            change = change.max((next - old).abs() / old);
            self.powers[k] = next;
        }
        self.sweeps += 1;
        Ok(change)
    }

    pub fn powers(&self) -> &[f64] {
        &self.powers
    }

    pub fn sweeps(&self) -> usize {
        self.sweeps
    }
}

/// Nash equilibrium of the power game for one receiver kind on a
/// single-antenna realization.
pub fn solve_equilibrium(
    realization: &ChannelRealization,
    kind: ReceiverKind,
    params: &SystemParams,
    model: &EfficiencyModel,
    options: &SolverOptions,
) -> Result<EquilibriumResult> {
    let detector = Detector::new(kind, &realization.spreading, &realization.amplitudes())?;
    let target = solve_gamma_star(model, DEFAULT_TOL)?;
    solve_with_detector(&detector, target, params, model, options)
}

/// Synchronous best-response sweeps on an arbitrary detector.
pub fn solve_with_detector(
    detector: &Detector,
    target: f64,
    params: &SystemParams,
    model: &EfficiencyModel,
    options: &SolverOptions,
) -> Result<EquilibriumResult> {
    let start = options.initial_power.unwrap_or(1e-2 * params.max_power);
    let mut iteration = PowerIteration::new(
        detector,
        target,
        params.noise_power,
        params.max_power,
        vec![start; detector.users()],
    )?;
    let mut settled = false;
    while iteration.sweeps() < options.max_iter {
        if iteration.sweep()? < options.power_tol {
            settled = true;
            break;
        }
    }
    let powers = iteration.powers().to_vec();
    let sirs = detector.sirs(&powers, params.noise_power)?;
    let utilities = powers
        .iter()
        .zip(&sirs)
        .map(|(&p, &g)| utility(p, g, params, model))
        .collect::<Result<Vec<_>>>()?;
    let clamped_users: Vec<usize> = (0..powers.len()).filter(|&k| powers[k] >= params.max_power).collect();
    let balanced = (0..powers.len())
        .filter(|k| clamped_users.binary_search(k).is_err())
        .all(|k| (sirs[k] - target).abs() <= options.sir_tol * target);
    if !settled {
        log::debug!(
            "power iteration stopped after {} sweeps without settling",
            iteration.sweeps()
        );
    }
    Ok(EquilibriumResult {
        powers,
        sirs,
        utilities,
        iterations: iteration.sweeps(),
        converged: settled && balanced,
        clamped_users,
        target_sir: target,
    })
}

/// Relative utility gain a deviation must exceed to count as profitable.
pub const DEVIATION_TOL: f64 = 1e-6;

/// Checks that no user gains by scaling its own power by any factor on a
/// geometric grid over `[0.5, 2]`, with every other power fixed.
pub fn verify_nash(
    result: &EquilibriumResult,
    realization: &ChannelRealization,
    kind: ReceiverKind,
    params: &SystemParams,
    model: &EfficiencyModel,
    probe_grid_size: usize,
) -> Result<bool> {
    let detector = Detector::new(kind, &realization.spreading, &realization.amplitudes())?;
    verify_nash_with(result, &detector, params, model, probe_grid_size)
}

pub fn verify_nash_with(
    result: &EquilibriumResult,
    detector: &Detector,
    params: &SystemParams,
    model: &EfficiencyModel,
    probe_grid_size: usize,
) -> Result<bool> {
    if !result.converged {
        log::warn!("deviation check requested on an unconverged iteration");
        return Ok(false);
    }
    let points = probe_grid_size.max(2);
    let factors: Vec<f64> = (0..points)
        .map(|i| 0.5 * 4f64.powf(i as f64 / (points - 1) as f64))
        .collect();
    let mut probe = result.powers.clone();
    for k in 0..probe.len() {
        let base = result.powers[k];
        let current = utility(base, detector.sir(k, &probe, params.noise_power)?, params, model)?;
        for &factor in &factors {
            let deviated = base * factor;
            if deviated > params.max_power {
                continue;
            }
            probe[k] = deviated;
            let sir = detector.sir(k, &probe, params.noise_power)?;
            let u = utility(deviated, sir, params, model)?;
            if u > current * (1.0 + DEVIATION_TOL) {
                log::debug!("user {k} gains {u} > {current} at factor {factor}");
                return Ok(false);
            }
        }
        probe[k] = base;
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linsys::{generate_spreading, output_sir, receiver_filter};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model() -> EfficiencyModel {
        EfficiencyModel::exp_approx(100).unwrap()
    }

    fn gamma_star() -> f64 {
        solve_gamma_star(&model(), DEFAULT_TOL).unwrap()
    }

    fn realization(n: usize, amplitudes: Vec<f64>, seed: u64) -> ChannelRealization {
        let k = amplitudes.len();
        let spreading = generate_spreading(n, k, &mut ChaCha8Rng::seed_from_u64(seed));
        ChannelRealization {
            spreading,
            gains: DMatrix::from_row_slice(1, k, &amplitudes),
            distances: vec![100.0; k],
        }
    }

    #[test]
    fn fast_sirs_match_generic_filters() {
        let r = realization(16, vec![1.0, 0.4, 2.0, 0.9, 1.5], 3);
        let h = r.amplitudes();
        let p = [0.3, 1.2, 0.1, 0.7, 0.05];
        for kind in ReceiverKind::ALL {
            let det = Detector::new(kind, &r.spreading, &h).unwrap();
            let fast = det.sirs(&p, 0.05).unwrap();
            for (k, &f) in fast.iter().enumerate() {
                let c = receiver_filter(kind, k, &r.spreading, &h, &p, 0.05).unwrap();
                let exact = output_sir(&c, k, &r.spreading, &h, &p, 0.05).unwrap();
                assert_relative_eq!(f, exact, max_relative = 1e-10);
                assert_relative_eq!(det.sir(k, &p, 0.05).unwrap(), exact, max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn single_user_best_response_is_exact() {
        let r = realization(8, vec![0.5], 1);
        let det = Detector::new(ReceiverKind::MatchedFilter, &r.spreading, &r.amplitudes()).unwrap();
        let g = gamma_star();
        let p = best_response_power(0, &[1e-3], &det, g, 0.01, 10.0).unwrap();
        assert_relative_eq!(p, g * 0.01 / 0.25, max_relative = 1e-14);
        // fixed point
        let again = best_response_power(0, &[p], &det, g, 0.01, 10.0).unwrap();
        assert_relative_eq!(again, p, max_relative = 1e-14);
    }

    #[test]
    fn orthogonal_users_decouple() {
        let s = DMatrix::from_row_slice(4, 2, &[1.0, 1.0, 1.0, -1.0, 1.0, 1.0, 1.0, -1.0]) * 0.5;
        let h = [0.8, 1.7];
        let g = gamma_star();
        for kind in ReceiverKind::ALL {
            let det = Detector::new(kind, &s, &h).unwrap();
            let mut it = PowerIteration::new(&det, g, 0.1, 100.0, vec![1.0, 1.0]).unwrap();
            it.sweep().unwrap();
            for (p, hk) in it.powers().iter().zip(h) {
                assert_relative_eq!(*p, g * 0.1 / (hk * hk), max_relative = 1e-12);
            }
            assert!(it.sweep().unwrap() < 1e-12);
        }
    }

    #[test]
    fn zero_gain_user_cannot_reach_target() {
        let s = DMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
        let det = Detector::new(ReceiverKind::MatchedFilter, &s, &[0.0]).unwrap();
        assert_eq!(
            best_response_power(0, &[1.0], &det, 6.0, 1.0, 10.0),
            Err(Error::ZeroSir { user: 0 })
        );
    }

    #[test]
    fn single_user_equilibrium() {
        let r = realization(16, vec![3e-5], 4);
        let params = SystemParams {
            users: 1,
            ..Default::default()
        };
        let res = solve_equilibrium(
            &r,
            ReceiverKind::MatchedFilter,
            &params,
            &model(),
            &SolverOptions::default(),
        )
        .unwrap();
        assert!(res.converged);
        assert!(res.iterations <= 2);
        assert_relative_eq!(res.powers[0], gamma_star() * 5e-16 / 9e-10, max_relative = 1e-12);
        assert!(verify_nash(&res, &r, ReceiverKind::MatchedFilter, &params, &model(), 31).unwrap());
    }

    #[test]
    fn deviation_lowers_own_utility() {
        let r = realization(64, (0..8).map(|i| 1e-5 * (1.0 + 0.1 * i as f64)).collect(), 8);
        let params = SystemParams {
            users: 8,
            processing_gain: 64,
            ..Default::default()
        };
        let res = solve_equilibrium(&r, ReceiverKind::Mmse, &params, &model(), &SolverOptions::default()).unwrap();
        assert!(res.converged);
        let det = Detector::new(ReceiverKind::Mmse, &r.spreading, &r.amplitudes()).unwrap();
        let mut p = res.powers.clone();
        p[3] *= 1.5;
        let sir = det.sir(3, &p, params.noise_power).unwrap();
        let u = utility(p[3], sir, &params, &model()).unwrap();
        assert!(u < res.utilities[3]);
    }

    #[test]
    fn unconverged_results_are_not_certified() {
        let r = realization(16, vec![1e-5, 2e-5], 4);
        let params = SystemParams {
            users: 2,
            processing_gain: 16,
            ..Default::default()
        };
        let opts = SolverOptions {
            max_iter: 1,
            ..Default::default()
        };
        let res = solve_equilibrium(&r, ReceiverKind::Mmse, &params, &model(), &opts).unwrap();
        assert!(!res.converged);
        assert!(!verify_nash(&res, &r, ReceiverKind::Mmse, &params, &model(), 11).unwrap());
    }
}
