//! Large-system closed forms (`K, N → ∞` with `K/N → α`).
//!
//! At equilibrium every user needs the same received power, and its utility
//! reduces to `(L R f(γ*) h²)/(M γ* σ²) · Γ`, where the load penalty `Γ`
//! depends only on the receiver, the load and the target SIR.

use crate::effmath::{find_crossing, solve_gamma_star, EfficiencyModel, BRACKET_HI, BRACKET_LO};
use crate::linsys::{ReceiverKind, SystemParams};
use crate::{Error, Result};

/// Summary of one receiver at one load.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsymptoticResult {
    pub alpha: f64,
    pub gamma_target: f64,
    /// Load penalty `Γ ∈ (0, 1]`.
    pub gamma_factor: f64,
    /// Common received power `p_k h_k²`, in watts.
    pub received_power: f64,
    /// Utility per unit `h²`, in bits per joule.
    pub utility_coeff: f64,
}

/// Largest load at which `γ` is reachable by every user.
pub fn feasibility_bound(kind: ReceiverKind, gamma: f64) -> f64 {
    match kind {
        ReceiverKind::MatchedFilter => 1.0 / gamma,
        ReceiverKind::Decorrelator => 1.0,
        ReceiverKind::Mmse => 1.0 + 1.0 / gamma,
    }
}

fn check_load(kind: ReceiverKind, alpha: f64, gamma: f64) -> Result<()> {
    if !(alpha >= 0.0) {
        return Err(Error::Domain {
            what: "load",
            value: alpha,
        });
    }
    if !(gamma > 0.0) {
        return Err(Error::Domain {
            what: "target SIR",
            value: gamma,
        });
    }
    let bound = feasibility_bound(kind, gamma);
    if alpha < bound {
        Ok(())
    } else {
        Err(Error::Infeasible { kind, alpha, bound })
    }
}

/// `Γ`: MF `1 − αγ`, DE `1 − α`, MMSE `1 − αγ/(1+γ)`.
pub fn gamma_factor(kind: ReceiverKind, alpha: f64, gamma: f64) -> Result<f64> {
    check_load(kind, alpha, gamma)?;
    Ok(match kind {
        ReceiverKind::MatchedFilter => 1.0 - alpha * gamma,
        ReceiverKind::Decorrelator => 1.0 - alpha,
        ReceiverKind::Mmse => 1.0 - alpha * gamma / (1.0 + gamma),
    })
}

/// Received power `q(γ) = γσ²/Γ` that gives every user SIR `γ`.
pub fn balanced_received_power(kind: ReceiverKind, alpha: f64, gamma: f64, noise_power: f64) -> Result<f64> {
    Ok(gamma * noise_power / gamma_factor(kind, alpha, gamma)?)
}

/// Minimum transmit power reaching `γ*` for a user with power gain `h2`.
pub fn equilibrium_power_large(
    kind: ReceiverKind,
    alpha: f64,
    gamma_star: f64,
    noise_power: f64,
    h2: f64,
) -> Result<f64> {
    if !(h2 > 0.0) {
        return Err(Error::Domain {
            what: "power gain",
            value: h2,
        });
    }
    Ok(balanced_received_power(kind, alpha, gamma_star, noise_power)? / h2)
}

/// Equilibrium utility `(L R f(γ*) h²)/(M γ* σ²) · Γ`.
pub fn equilibrium_utility_large(
    kind: ReceiverKind,
    alpha: f64,
    params: &SystemParams,
    model: &EfficiencyModel,
    gamma_star: f64,
    h2: f64,
) -> Result<f64> {
    let gf = gamma_factor(kind, alpha, gamma_star)?;
    Ok(params.goodput() * model.value(gamma_star)? * h2 / (gamma_star * params.noise_power) * gf)
}

pub fn analyze(
    kind: ReceiverKind,
    alpha: f64,
    params: &SystemParams,
    model: &EfficiencyModel,
    gamma_target: f64,
) -> Result<AsymptoticResult> {
    let received_power = balanced_received_power(kind, alpha, gamma_target, params.noise_power)?;
    Ok(AsymptoticResult {
        alpha,
        gamma_target,
        gamma_factor: gamma_factor(kind, alpha, gamma_target)?,
        received_power,
        utility_coeff: params.goodput() * model.value(gamma_target)? / received_power,
    })
}

const FIXED_POINT_TOL: f64 = 1e-10;
const FIXED_POINT_MAX_ITER: usize = 10_000;

/// Large-system MMSE SIR of user `k` given every user's received power
/// `p_j h_j²`: the fixed point of
///
/// ```text
/// γ = b / (σ² + (1/N) Σ_{j≠k} a_j b / (b + a_j γ)),   b = p_k h_k²
/// ```
pub fn mmse_sir_fixed_point_large(
    received_powers: &[f64],
    k: usize,
    noise_power: f64,
    processing_gain: f64,
) -> Result<f64> {
    if k >= received_powers.len() {
        return Err(Error::Dimension(format!("user {k} out of range")));
    }
    if let Some(&a) = received_powers.iter().find(|&&a| !(a >= 0.0)) {
        return Err(Error::Domain {
            what: "received power",
            value: a,
        });
    }
    let own = received_powers[k];
    let map = |g: f64| {
        let interference: f64 = received_powers
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != k)
            .map(|(_, &a)| if a == 0.0 { 0.0 } else { a * own / (own + a * g) })
            .sum();
        own / (noise_power + interference / processing_gain)
    };
    let mut gamma = own / noise_power;
    for _ in 0..FIXED_POINT_MAX_ITER {
        // the map is decreasing in γ; averaging damps the oscillation
        let next = 0.5 * (gamma + map(gamma));
        if (next - gamma).abs() <= FIXED_POINT_TOL * next.abs() {
            return Ok(next);
        }
        gamma = next;
    }
    Err(Error::NoConvergence {
        iterations: FIXED_POINT_MAX_ITER,
    })
}

/// `g(γ) = 1 − αγ / ((1+γ)² − αγ²)`.
pub fn mmse_pareto_gap(gamma: f64, alpha: f64) -> Result<f64> {
    let denom = (1.0 + gamma).powi(2) - alpha * gamma * gamma;
    if !(denom > 0.0) {
        return Err(Error::Domain {
            what: "Pareto gap denominator",
            value: denom,
        });
    }
    Ok(1.0 - alpha * gamma / denom)
}

/// Common SIR maximizing the sum utility under SIR balancing with equal
/// received powers, i.e. the maximizer of `f(γ)/q(γ)`.
pub fn solve_pareto_target(kind: ReceiverKind, alpha: f64, model: &EfficiencyModel, tol: f64) -> Result<f64> {
    if !(alpha >= 0.0) {
        return Err(Error::Domain {
            what: "load",
            value: alpha,
        });
    }
    match kind {
        ReceiverKind::Decorrelator => {
            if alpha >= 1.0 {
                return Err(Error::Infeasible {
                    kind,
                    alpha,
                    bound: 1.0,
                });
            }
            solve_gamma_star(model, tol)
        }
        ReceiverKind::MatchedFilter => {
            // q^MF(γ) blows up at γ = 1/α
            let hi = if alpha > 0.0 {
                BRACKET_HI.min((1.0 - 1e-9) / alpha)
            } else {
                BRACKET_HI
            };
            find_crossing(
                |g| {
                    model
                        .value_over_slope(g)
                        .map_or(f64::NAN, |r| r - g * (1.0 - alpha * g))
                },
                BRACKET_LO,
                hi,
                tol,
            )
        }
        ReceiverKind::Mmse => {
            // q^MMSE(γ) needs α < 1 + 1/γ, i.e. γ < 1/(α − 1) above unit load
            let hi = if alpha > 1.0 {
                BRACKET_HI.min((1.0 - 1e-9) / (alpha - 1.0))
            } else {
                BRACKET_HI
            };
            if hi <= BRACKET_LO {
                return Err(Error::NoBracket { lo: BRACKET_LO, hi });
            }
            find_crossing(
                |g| match (model.value_over_slope(g), mmse_pareto_gap(g, alpha)) {
                    (Ok(r), Ok(gap)) => r - g * gap,
                    _ => f64::NAN,
                },
                BRACKET_LO,
                hi,
                tol,
            )
        }
    }
}

/// Per-user utility at the Pareto-optimal common SIR, `(L/M) R f(γ) h² / q(γ)`.
pub fn pareto_utility(
    kind: ReceiverKind,
    alpha: f64,
    params: &SystemParams,
    model: &EfficiencyModel,
    h2: f64,
    tol: f64,
) -> Result<f64> {
    let gamma = solve_pareto_target(kind, alpha, model, tol)?;
    let q = balanced_received_power(kind, alpha, gamma, params.noise_power)?;
    Ok(params.goodput() * model.value(gamma)? * h2 / q)
}

/// Load maximizing total utility per degree of freedom: the solution of
/// `Γ̄ = 1/2` with `m` receive antennas.
pub fn optimal_load(kind: ReceiverKind, gamma_star: f64, antennas: usize) -> Result<f64> {
    if !(gamma_star > 0.0) || antennas == 0 {
        return Err(Error::InvalidParameter(format!(
            "need γ* > 0 and m ≥ 1, got γ*={gamma_star} m={antennas}"
        )));
    }
    let m = antennas as f64;
    Ok(match kind {
        ReceiverKind::MatchedFilter => m / (2.0 * gamma_star),
        ReceiverKind::Decorrelator => 0.5,
        ReceiverKind::Mmse => m * (0.5 + 0.5 / gamma_star),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ReceiverKind::*;

    const G: f64 = 6.48;

    fn model() -> EfficiencyModel {
        EfficiencyModel::exp_approx(100).unwrap()
    }

    #[test]
    fn bounds() {
        assert_relative_eq!(
            feasibility_bound(MatchedFilter, G),
            0.154_320_987_654_321,
            max_relative = 1e-12
        );
        assert_eq!(feasibility_bound(Decorrelator, 0.3), 1.0);
        assert_relative_eq!(feasibility_bound(Mmse, G), 1.154_320_987_654_321, max_relative = 1e-12);
    }

    #[test]
    fn equilibrium_powers() {
        let (s2, h2) = (5e-16, 1e-9);
        for kind in ReceiverKind::ALL {
            assert_relative_eq!(equilibrium_power_large(kind, 0.0, G, s2, h2).unwrap(), G * s2 / h2);
        }
        assert_relative_eq!(
            equilibrium_power_large(Decorrelator, 0.5, G, s2, h2).unwrap(),
            2.0 * G * s2 / h2,
            max_relative = 1e-14
        );
        let err = equilibrium_power_large(MatchedFilter, 0.2, G, s2, h2).unwrap_err();
        assert!(matches!(
            err,
            Error::Infeasible {
                kind: MatchedFilter,
                ..
            }
        ));
    }

    #[test]
    fn gamma_factors() {
        for kind in ReceiverKind::ALL {
            assert_eq!(gamma_factor(kind, 0.0, G).unwrap(), 1.0);
        }
        assert_eq!(gamma_factor(Decorrelator, 0.5, G).unwrap(), 0.5);
        assert_relative_eq!(
            gamma_factor(Mmse, 1.0, G).unwrap(),
            1.0 - 6.48 / 7.48,
            max_relative = 1e-14
        );
        assert!((gamma_factor(Mmse, 1.0, G).unwrap() - 0.1337).abs() < 1e-4);
        assert!(gamma_factor(Decorrelator, 1.0, G).is_err());
    }

    #[test]
    fn utility_identity_and_ordering() {
        let params = SystemParams::default();
        let m = model();
        for alpha in [0.02, 0.08, 0.15] {
            let u: Vec<f64> = ReceiverKind::ALL
                .iter()
                .map(|&k| equilibrium_utility_large(k, alpha, &params, &m, G, 1e-9).unwrap())
                .collect();
            assert!(u[2] >= u[1] && u[2] >= u[0]);
            // DE beats MF because γ* > 1
            assert!(u[1] > u[0]);
            for (i, kind) in ReceiverKind::ALL.into_iter().enumerate() {
                let p = equilibrium_power_large(kind, alpha, G, params.noise_power, 1e-9).unwrap();
                let direct = params.goodput() * m.value(G).unwrap() / p;
                assert_relative_eq!(u[i], direct, max_relative = 1e-12);
            }
        }
        // with γ* < 1 the matched filter wins over the decorrelator
        assert!(gamma_factor(MatchedFilter, 0.3, 0.5).unwrap() > gamma_factor(Decorrelator, 0.3, 0.5).unwrap());
    }

    #[test]
    fn fixed_point_basics() {
        let q = 2e-15;
        assert_relative_eq!(
            mmse_sir_fixed_point_large(&[q, 0.0, 0.0], 0, 5e-16, 100.0).unwrap(),
            4.0
        );

        // equal received powers from the balanced solution reproduce the target
        let (alpha, n, s2): (f64, f64, f64) = (0.7, 200.0, 5e-16);
        let k = (alpha * n).round() as usize;
        let q = balanced_received_power(Mmse, alpha, G, s2).unwrap();
        // with K users the interference sum has K − 1 terms; use K + 1 so (K)/N = α
        let powers = vec![q; k + 1];
        let g = mmse_sir_fixed_point_large(&powers, 0, s2, n).unwrap();
        assert_relative_eq!(g, G, max_relative = 1e-9);
        let residual = {
            let i: f64 = (0..k).map(|_| q * q / (q + q * g)).sum::<f64>() / n;
            q / (s2 + i) - g
        };
        assert!(residual.abs() / g < 1e-9);

        let mut doubled = powers.clone();
        doubled[0] *= 2.0;
        assert!(mmse_sir_fixed_point_large(&doubled, 0, s2, n).unwrap() > g);
        assert!(mmse_sir_fixed_point_large(&[-1.0], 0, s2, n).is_err());
    }

    #[test]
    fn pareto_gap() {
        for g in [0.5, 6.48, 20.0] {
            assert_eq!(mmse_pareto_gap(g, 0.0).unwrap(), 1.0);
        }
        assert!((mmse_pareto_gap(6.48, 0.5).unwrap() - 0.9073).abs() < 1e-4);
        assert!(mmse_pareto_gap(6.48, 0.9).unwrap() < mmse_pareto_gap(6.48, 0.5).unwrap());
        assert!(mmse_pareto_gap(1.0, 5.0).is_err());
    }

    #[test]
    fn pareto_targets() {
        let m = model();
        let gs = solve_gamma_star(&m, 1e-12).unwrap();
        for alpha in [0.0, 0.3, 0.9] {
            assert_eq!(solve_pareto_target(Decorrelator, alpha, &m, 1e-12).unwrap(), gs);
        }
        // mpmath roots of the stationarity conditions
        let mf = solve_pareto_target(MatchedFilter, 0.1, &m, 1e-12).unwrap();
        assert!((mf - 5.514_836_751_218_34).abs() < 1e-8);
        assert!((solve_pareto_target(MatchedFilter, 1e-9, &m, 1e-12).unwrap() - gs).abs() < 1e-6);
        let mmse = solve_pareto_target(Mmse, 0.9, &m, 1e-12).unwrap();
        assert!((mmse - 6.007_193_516_450_647).abs() < 1e-8);
        assert!(mmse < gs && (gs - mmse) / gs < 0.15);
        let mmse1 = solve_pareto_target(Mmse, 1.0, &m, 1e-12).unwrap();
        assert!((mmse1 - 5.739_740_639_346_952).abs() < 1e-8);
    }

    #[test]
    fn pareto_dominates_noncooperative() {
        let params = SystemParams::default();
        let m = model();
        let gs = solve_gamma_star(&m, 1e-12).unwrap();
        for (kind, alpha) in [(MatchedFilter, 0.1), (Mmse, 0.9), (Decorrelator, 0.4)] {
            let nc = equilibrium_utility_large(kind, alpha, &params, &m, gs, 1e-9).unwrap();
            let po = pareto_utility(kind, alpha, &params, &m, 1e-9, 1e-12).unwrap();
            assert!(po >= nc * (1.0 - 1e-12), "{kind}: {po} < {nc}");
            if kind == Mmse {
                assert!((po - nc) / nc < 0.05);
            }
            if kind == Decorrelator {
                assert_relative_eq!(po, nc, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn admission_loads() {
        assert_eq!(optimal_load(Decorrelator, 6.48, 3).unwrap(), 0.5);
        assert!((optimal_load(Mmse, 6.48, 1).unwrap() - 0.5772).abs() < 1e-4);
        assert!((optimal_load(MatchedFilter, 6.48, 1).unwrap() - 0.0772).abs() < 1e-4);
        let sum = optimal_load(MatchedFilter, G, 1).unwrap() + optimal_load(Decorrelator, G, 1).unwrap();
        assert_relative_eq!(optimal_load(Mmse, G, 1).unwrap(), sum, max_relative = 1e-15);
    }

    #[test]
    fn total_utility_peaks_at_optimal_load() {
        for kind in ReceiverKind::ALL {
            let bound = feasibility_bound(kind, G);
            let step = bound / 10_000.0;
            let (best, _) = (1..10_000)
                .map(|i| i as f64 * step)
                .map(|a| (a, a * gamma_factor(kind, a, G).unwrap()))
                .fold((0.0, f64::MIN), |acc, x| if x.1 > acc.1 { x } else { acc });
            assert!((best - optimal_load(kind, G, 1).unwrap()).abs() <= step);
        }
    }
}
