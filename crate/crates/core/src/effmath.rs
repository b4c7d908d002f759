//! Efficiency functions and the utility-maximizing target SIR.
//!
//! An efficiency function `f(γ)` approximates the probability that a packet of
//! `M` bits is received without error at output SIR `γ`. It is increasing,
//! S-shaped, zero at the origin and tends to one. The target SIR `γ*` is the
//! unique positive solution of `f(γ) = γ f'(γ)`: the point where the line
//! through the origin is tangent to `f`.

use libm::erfc;
use std::f64::consts::{LN_2, PI};

use crate::{Error, Result};

/// Lower end of the bracket used by every root solve in this crate.
pub const BRACKET_LO: f64 = 1e-6;
/// Upper end of the bracket used by every root solve in this crate.
pub const BRACKET_HI: f64 = 1e3;
/// Default absolute tolerance for root solves.
pub const DEFAULT_TOL: f64 = 1e-9;

const SCAN_POINTS: usize = 400;
const MAX_BISECTIONS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EfficiencyKind {
    /// `f(γ) = (1 − e^{−γ})^M`.
    ExpApprox,
    /// BPSK over AWGN, `(1 − Q(√(2γ)))^M` shifted down by its value at zero.
    BpskAwgn,
}

impl std::fmt::Display for EfficiencyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EfficiencyKind::ExpApprox => "exp",
            EfficiencyKind::BpskAwgn => "bpsk",
        })
    }
}

impl std::str::FromStr for EfficiencyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "exp" | "expapprox" => Ok(EfficiencyKind::ExpApprox),
            "bpsk" | "bpskawgn" => Ok(EfficiencyKind::BpskAwgn),
            _ => Err(Error::InvalidParameter(format!(
                "unknown efficiency function `{s}` (expected exp or bpsk)"
            ))),
        }
    }
}

/// An efficiency function together with its packet length in bits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EfficiencyModel {
    kind: EfficiencyKind,
    packet_bits: u32,
}

impl EfficiencyModel {
    pub fn new(kind: EfficiencyKind, packet_bits: u32) -> Result<Self> {
        if packet_bits == 0 {
            return Err(Error::InvalidParameter(
                "packet length M must be at least one bit".into(),
            ));
        }
        Ok(Self { kind, packet_bits })
    }

    pub fn exp_approx(packet_bits: u32) -> Result<Self> {
        Self::new(EfficiencyKind::ExpApprox, packet_bits)
    }

    pub fn bpsk_awgn(packet_bits: u32) -> Result<Self> {
        Self::new(EfficiencyKind::BpskAwgn, packet_bits)
    }

    pub fn kind(&self) -> EfficiencyKind {
        self.kind
    }

    pub fn packet_bits(&self) -> u32 {
        self.packet_bits
    }

    /// `f(γ)`; exactly zero at `γ = 0`.
    pub fn value(&self, gamma: f64) -> Result<f64> {
        check_gamma(gamma)?;
        let m = f64::from(self.packet_bits);
        Ok(match self.kind {
            EfficiencyKind::ExpApprox => {
                if gamma == 0.0 {
                    0.0
                } else {
                    (m * (-(-gamma).exp()).ln_1p()).exp()
                }
            }
            EfficiencyKind::BpskAwgn => {
                // (1−Q)^M − 2^{−M} = (1−Q)^M · (1 − (2(1−Q))^{−M}), with Q = erfc(√γ)/2
                let log_success = (-0.5 * erfc(gamma.sqrt())).ln_1p();
                let success_pow = (m * log_success).exp();
                success_pow * -(-m * (log_success + LN_2)).exp_m1()
            }
        })
    }

    /// Closed-form `f'(γ)`. For `BpskAwgn` the derivative is unbounded at
    /// zero and `+∞` is returned there.
    pub fn derivative(&self, gamma: f64) -> Result<f64> {
        check_gamma(gamma)?;
        let m = f64::from(self.packet_bits);
        Ok(match self.kind {
            EfficiencyKind::ExpApprox => {
                let decay = (-gamma).exp();
                if self.packet_bits == 1 {
                    decay
                } else if gamma == 0.0 {
                    0.0
                } else {
                    m * decay * ((m - 1.0) * (-decay).ln_1p()).exp()
                }
            }
            EfficiencyKind::BpskAwgn => {
                if gamma == 0.0 {
                    return Ok(f64::INFINITY);
                }
                let log_success = (-0.5 * erfc(gamma.sqrt())).ln_1p();
                m * ((m - 1.0) * log_success).exp() * (-gamma).exp() / (2.0 * (PI * gamma).sqrt())
            }
        })
    }

    /// `f(γ) − γ f'(γ)`. Underflows to zero for large `M` near the origin;
    /// use [`EfficiencyModel::value_over_slope`] when only the sign matters.
    pub fn tangent_gap(&self, gamma: f64) -> Result<f64> {
        Ok(self.value(gamma)? - gamma * self.derivative(gamma)?)
    }

    /// `f(γ) / f'(γ)` evaluated without forming either factor, so it stays
    /// finite (or `+∞`) where `f` and `f'` underflow. For `γ > 0`,
    /// `sign(f − γ f') = sign(f/f' − γ)`.
    pub fn value_over_slope(&self, gamma: f64) -> Result<f64> {
        check_gamma(gamma)?;
        if gamma == 0.0 {
            return Ok(0.0);
        }
        let m = f64::from(self.packet_bits);
        Ok(match self.kind {
            EfficiencyKind::ExpApprox => gamma.exp_m1() / m,
            EfficiencyKind::BpskAwgn => {
                let tail = 0.5 * erfc(gamma.sqrt());
                let success = 1.0 - tail;
                let shift = -(-m * ((-tail).ln_1p() + LN_2)).exp_m1();
                success * shift * 2.0 * (PI * gamma).sqrt() * gamma.exp() / m
            }
        })
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma >= 0.0 && !gamma.is_nan() {
        Ok(())
    } else {
        Err(Error::Domain {
            what: "SIR",
            value: gamma,
        })
    }
}

/// Finds the first negative-to-positive crossing of `h` on `[lo, hi]` by a
/// geometric scan, then refines it by bisection to absolute tolerance `tol`.
pub fn find_crossing<F>(h: F, lo: f64, hi: f64, tol: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if !(lo > 0.0 && hi > lo && tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "bad bracket [{lo}, {hi}] or tolerance {tol}"
        )));
    }
    let ratio = (hi / lo).powf(1.0 / (SCAN_POINTS - 1) as f64);
    let mut left = lo;
    let mut left_val = h(left);
    for i in 1..SCAN_POINTS {
        let right = if i == SCAN_POINTS - 1 {
            hi
        } else {
            lo * ratio.powi(i as i32)
        };
        let right_val = h(right);
        if left_val < 0.0 && right_val >= 0.0 {
            return bisect(&h, left, right, tol);
        }
        left = right;
        left_val = right_val;
    }
    Err(Error::NoBracket { lo, hi })
}

/// Plain bisection on a bracket with `h(lo) < 0 ≤ h(hi)`.
pub fn bisect<F>(h: F, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if !(h(lo) < 0.0 && h(hi) >= 0.0) {
        return Err(Error::NoBracket { lo, hi });
    }
    for _ in 0..MAX_BISECTIONS {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if h(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// The unique positive root `γ*` of `f(γ) = γ f'(γ)`.
///
/// Fails with [`Error::NoBracket`] when the efficiency function is not
/// S-shaped, e.g. `ExpApprox` with `M = 1`, which is concave everywhere.
pub fn solve_gamma_star(model: &EfficiencyModel, tol: f64) -> Result<f64> {
    find_crossing(
        |g| model.value_over_slope(g).map_or(f64::NAN, |r| r - g),
        BRACKET_LO,
        BRACKET_HI,
        tol,
    )
}

/// `10 log10(x)`.
pub fn to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn exp(m: u32) -> EfficiencyModel {
        EfficiencyModel::exp_approx(m).unwrap()
    }

    #[test]
    fn exp_approx_values() {
        assert_eq!(exp(100).value(0.0).unwrap(), 0.0);
        assert_relative_eq!(exp(1).value(2f64.ln()).unwrap(), 0.5, epsilon = 1e-15);
        let v = exp(100).value(6.48).unwrap();
        assert!(v > 0.84 && v < 0.86);
        // mpmath, 40 digits
        assert_relative_eq!(v, 0.857_701_778_764_100_6, max_relative = 1e-13);
        assert!(exp(100).value(20.0).unwrap() > 0.999);
    }

    #[test]
    fn exp_approx_derivative() {
        assert_eq!(exp(1).derivative(0.0).unwrap(), 1.0);
        assert_eq!(exp(100).derivative(0.0).unwrap(), 0.0);
        let d = exp(100).derivative(6.48).unwrap();
        assert_relative_eq!(d, 0.131_757_305_556_738_54, max_relative = 1e-12);
        let h = 1e-6;
        let m = exp(100);
        let fd = (m.value(6.48 + h).unwrap() - m.value(6.48 - h).unwrap()) / (2.0 * h);
        assert_relative_eq!(d, fd, max_relative = 1e-5);
    }

    #[test]
    fn negative_sir_is_a_domain_error() {
        let m = exp(100);
        assert!(matches!(m.value(-1.0), Err(Error::Domain { .. })));
        assert!(matches!(m.derivative(-1e-3), Err(Error::Domain { .. })));
        assert!(m.value(f64::NAN).is_err());
        assert!(EfficiencyModel::exp_approx(0).is_err());
    }

    #[test]
    fn gamma_star_reference_values() {
        // mpmath roots of e^γ − 1 = Mγ
        let g = solve_gamma_star(&exp(100), 1e-6).unwrap();
        assert!((g - 6.48).abs() <= 0.01);
        assert!((g - 6.474_600_379_589_358).abs() < 1e-6);
        assert!((to_db(g) - 8.1).abs() < 0.05);
        let g2 = solve_gamma_star(&exp(2), 1e-9).unwrap();
        assert!((g2 - 1.256_431_208_626_17).abs() < 1e-8);
        let g500 = solve_gamma_star(&exp(500), 1e-9).unwrap();
        assert!((g500 - 8.335_353_998_029_94).abs() < 1e-8);
    }

    #[test]
    fn concave_model_has_no_target() {
        assert!(matches!(solve_gamma_star(&exp(1), 1e-9), Err(Error::NoBracket { .. })));
    }

    #[test]
    fn tolerance_refinement_is_consistent() {
        let a = solve_gamma_star(&exp(100), 1e-4).unwrap();
        let b = solve_gamma_star(&exp(100), 1e-8).unwrap();
        assert!((a - b).abs() < 1e-4);
    }

    #[test]
    fn bpsk_shifted_form() {
        let m = EfficiencyModel::bpsk_awgn(100).unwrap();
        assert_eq!(m.value(0.0).unwrap(), 0.0);
        // mpmath: ((1+erf(√5))/2)^100 − 2^-100 and its derivative
        assert_relative_eq!(m.value(5.0).unwrap(), 0.924_686_276_123_196_8, max_relative = 1e-12);
        assert_relative_eq!(
            m.derivative(5.0).unwrap(),
            0.078_663_293_242_096_8,
            max_relative = 1e-10
        );
        let g = solve_gamma_star(&m, 1e-9).unwrap();
        assert!((g - 4.040_023_600_919_334).abs() < 1e-7);
        assert!(m.value(40.0).unwrap() <= 1.0);
    }

    #[test]
    fn bpsk_derivative_matches_finite_differences() {
        let m = EfficiencyModel::bpsk_awgn(100).unwrap();
        for g in [0.5, 1.0, 3.0, 6.0, 10.0] {
            let h = 1e-6;
            let fd = (m.value(g + h).unwrap() - m.value(g - h).unwrap()) / (2.0 * h);
            assert_relative_eq!(m.derivative(g).unwrap(), fd, max_relative = 1e-5);
        }
    }

    #[test]
    fn ratio_form_agrees_with_direct_quotient() {
        for model in [exp(100), EfficiencyModel::bpsk_awgn(50).unwrap()] {
            for g in [0.3, 2.0, 6.0, 12.0] {
                let direct = model.value(g).unwrap() / model.derivative(g).unwrap();
                assert_relative_eq!(model.value_over_slope(g).unwrap(), direct, max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn bisect_rejects_bad_bracket() {
        assert!(bisect(|x| x - 2.0, 3.0, 4.0, 1e-9).is_err());
        assert_relative_eq!(bisect(|x| x - 2.0, 1.0, 4.0, 1e-12).unwrap(), 2.0, epsilon = 1e-11);
        assert!(find_crossing(|x| x, 0.0, 1.0, 1e-9).is_err());
    }
}
