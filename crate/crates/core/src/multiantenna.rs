//! Receive diversity with `m` antennas.
//!
//! Stacking the `m` antenna outputs turns user `k` into a single-antenna user
//! with effective signature `s̄_k = [h_{k1} s_kᵀ … h_{km} s_kᵀ]ᵀ` of length
//! `mN`, so the game and every receiver carry over unchanged. In the large
//! system the matched filter and MMSE receiver see the load divided by `m`;
//! the per-antenna decorrelator only gains the pooled power `h̄_k² = Σ_l h_{kl}²`.

use nalgebra::DMatrix;

use crate::asymptotic;
use crate::effmath::{solve_gamma_star, EfficiencyModel, DEFAULT_TOL};
use crate::game::{solve_with_detector, Detector, EquilibriumResult, SolverOptions};
use crate::linsys::{decorrelator_filters, ReceiverKind, SystemParams};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveSystem {
    /// `mN × K` stacked effective signatures.
    pub signatures: DMatrix<f64>,
    /// `h̄_k²`, the power gain pooled over antennas.
    pub gain_energy: Vec<f64>,
    pub antennas: usize,
}

/// Stacks antenna `l`'s copy `h_{kl} s_k` of every signature below the
/// previous antenna's.
pub fn effective_signatures(spreading: &DMatrix<f64>, gains: &DMatrix<f64>) -> Result<EffectiveSystem> {
    let (n, k) = spreading.shape();
    let (m, kg) = gains.shape();
    if k != kg || m == 0 {
        return Err(Error::Dimension(format!("spreading is {n}×{k} but gains are {m}×{kg}")));
    }
    let mut signatures = DMatrix::zeros(m * n, k);
    for user in 0..k {
        for l in 0..m {
            let block = spreading.column(user) * gains[(l, user)];
            signatures.view_mut((l * n, user), (n, 1)).copy_from(&block);
        }
    }
    let gain_energy = gains.column_iter().map(|h| h.norm_squared()).collect();
    Ok(EffectiveSystem {
        signatures,
        gain_energy,
        antennas: m,
    })
}

/// Detector over the stacked model.
///
/// - matched filter: despread each antenna and combine with the user's own
///   gains, i.e. `c̄_k = s̄_k`;
/// - decorrelator: decorrelate each antenna with `S(SᵀS)⁻¹` and combine with
///   the user's own gains, needing no interferer gains;
/// - MMSE: `Ā_k⁻¹ s̄_k` on the stacked signatures.
pub fn detector_ma(kind: ReceiverKind, spreading: &DMatrix<f64>, gains: &DMatrix<f64>) -> Result<Detector> {
    let sys = effective_signatures(spreading, gains)?;
    Ok(match kind {
        ReceiverKind::MatchedFilter => Detector::from_filters(&sys.signatures, &sys.signatures)?,
        ReceiverKind::Decorrelator => {
            let per_antenna = decorrelator_filters(spreading)?;
            let combined = effective_signatures(&per_antenna, gains)?;
            Detector::from_filters(&combined.signatures, &sys.signatures)?
        }
        ReceiverKind::Mmse => Detector::mmse(&sys.signatures),
    })
}

/// Nash equilibrium with `m` receive antennas (`gains` is `m × K`).
pub fn solve_equilibrium_ma(
    spreading: &DMatrix<f64>,
    gains: &DMatrix<f64>,
    kind: ReceiverKind,
    params: &SystemParams,
    model: &EfficiencyModel,
    options: &SolverOptions,
) -> Result<EquilibriumResult> {
    let detector = detector_ma(kind, spreading, gains)?;
    let target = solve_gamma_star(model, DEFAULT_TOL)?;
    solve_with_detector(&detector, target, params, model, options)
}

/// Largest feasible load with `m` antennas.
pub fn feasibility_bound_ma(kind: ReceiverKind, antennas: usize, gamma: f64) -> f64 {
    match kind {
        ReceiverKind::Decorrelator => 1.0,
        _ => antennas as f64 * asymptotic::feasibility_bound(kind, gamma),
    }
}

/// `Γ̄`: the single-antenna factor at effective load `α/m` for the matched
/// filter and MMSE receiver, and `1 − α` for the decorrelator.
pub fn gamma_factor_ma(kind: ReceiverKind, alpha: f64, antennas: usize, gamma_star: f64) -> Result<f64> {
    if antennas == 0 {
        return Err(Error::InvalidParameter("need at least one antenna".into()));
    }
    let effective = match kind {
        ReceiverKind::Decorrelator => alpha,
        _ => alpha / antennas as f64,
    };
    asymptotic::gamma_factor(kind, effective, gamma_star).map_err(|e| match e {
        Error::Infeasible { kind, .. } => Error::Infeasible {
            kind,
            alpha,
            bound: feasibility_bound_ma(kind, antennas, gamma_star),
        },
        other => other,
    })
}

/// Equilibrium utility `(L R f(γ*) h̄²)/(M γ* σ²) · Γ̄`.
pub fn utility_ma(
    kind: ReceiverKind,
    alpha: f64,
    antennas: usize,
    params: &SystemParams,
    model: &EfficiencyModel,
    gamma_star: f64,
    gain_energy: f64,
) -> Result<f64> {
    let gf = gamma_factor_ma(kind, alpha, antennas, gamma_star)?;
    Ok(params.goodput() * model.value(gamma_star)? * gain_energy / (gamma_star * params.noise_power) * gf)
}

/// Transmit power implied by [`utility_ma`]: `γ* σ² / (h̄² Γ̄)`.
pub fn equilibrium_power_ma(
    kind: ReceiverKind,
    alpha: f64,
    antennas: usize,
    gamma_star: f64,
    noise_power: f64,
    gain_energy: f64,
) -> Result<f64> {
    if !(gain_energy > 0.0) {
        return Err(Error::Domain {
            what: "power gain",
            value: gain_energy,
        });
    }
    Ok(gamma_star * noise_power / (gain_energy * gamma_factor_ma(kind, alpha, antennas, gamma_star)?))
}
