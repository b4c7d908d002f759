//! Finite-dimension uplink model: random spreading, Rayleigh gains, the three
//! linear receivers and the exact output SIR of each user.
//!
//! Signals are described by a spreading matrix `S` (one unit-norm column per
//! user) and per-user amplitude gains. The SIR at the output of filter `c` is
//!
//! ```text
//! γ_k = p_k h_k² (cᵀs_k)² / (σ² cᵀc + Σ_{j≠k} p_j h_j² (cᵀs_j)²)
//! ```
//!
//! Multi-antenna systems reuse every function here by passing stacked
//! effective signatures with unit amplitudes.

use nalgebra::{DMatrix, DVector};
use rand::distr::Open01;
use rand::Rng;

use crate::effmath::EfficiencyModel;
use crate::{Error, Result};

/// Gram matrices with a condition estimate above this are treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

/// Scale of the mean channel gain at distance `d`: `0.3 / d²`.
pub const GAIN_AT_UNIT_DISTANCE: f64 = 0.3;

/// System dimensions and link parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemParams {
    /// Number of users `K`.
    pub users: usize,
    /// Processing gain `N` (spreading sequence length).
    pub processing_gain: usize,
    /// Thermal noise power `σ²` in watts.
    pub noise_power: f64,
    /// Transmission rate `R` in bits per second.
    pub rate: f64,
    /// Information bits per packet `L`.
    pub info_bits: u32,
    /// Total bits per packet `M`.
    pub packet_bits: u32,
    /// Maximum transmit power in watts.
    pub max_power: f64,
    /// Receive antennas `m`.
    pub antennas: usize,
}

impl Default for SystemParams {
    fn default() -> Self {
        Self {
            users: 30,
            processing_gain: 100,
            noise_power: 5e-16,
            rate: 1e5,
            info_bits: 100,
            packet_bits: 100,
            max_power: 1.0,
            antennas: 1,
        }
    }
}

impl SystemParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.users == 0 {
            return bad("K must be at least 1".into());
        }
        if self.processing_gain == 0 {
            return bad("N must be at least 1".into());
        }
        if self.antennas == 0 {
            return bad("m must be at least 1".into());
        }
        if self.info_bits == 0 || self.packet_bits == 0 || self.info_bits > self.packet_bits {
            return bad(format!(
                "need 1 <= L <= M, got L={} M={}",
                self.info_bits, self.packet_bits
            ));
        }
        for (name, v) in [("sigma2", self.noise_power), ("R", self.rate), ("Pmax", self.max_power)] {
            if !(v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        Ok(())
    }

    /// `K / N`.
    pub fn load(&self) -> f64 {
        self.users as f64 / self.processing_gain as f64
    }

    /// `(L/M) R`, the throughput at unit efficiency.
    pub fn goodput(&self) -> f64 {
        f64::from(self.info_bits) / f64::from(self.packet_bits) * self.rate
    }
}

/// How the Rayleigh gain scale relates to `0.3 / d²`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GainMeanSemantics {
    /// The amplitude gain `h` has mean `0.3 / d²`.
    #[default]
    Amplitude,
    /// The power gain `h²` has mean `0.3 / d²`.
    MeanSquare,
}

impl GainMeanSemantics {
    /// Rayleigh scale parameter for a target mean `mean`.
    pub fn rayleigh_scale(self, mean: f64) -> f64 {
        match self {
            // E[h] = s √(π/2)
            GainMeanSemantics::Amplitude => mean * (2.0 / std::f64::consts::PI).sqrt(),
            // E[h²] = 2 s²
            GainMeanSemantics::MeanSquare => (mean / 2.0).sqrt(),
        }
    }

    /// `E[h²]` for a user at distance `d`.
    pub fn mean_square_gain(self, distance: f64) -> f64 {
        let s = self.rayleigh_scale(GAIN_AT_UNIT_DISTANCE / (distance * distance));
        2.0 * s * s
    }
}

impl std::str::FromStr for GainMeanSemantics {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "amplitude" => Ok(GainMeanSemantics::Amplitude),
            "mean_square" | "meansquare" => Ok(GainMeanSemantics::MeanSquare),
            _ => Err(Error::InvalidParameter(format!(
                "unknown gain semantics `{s}` (expected amplitude or mean_square)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ReceiverKind {
    MatchedFilter,
    Decorrelator,
    Mmse,
}

impl ReceiverKind {
    pub const ALL: [ReceiverKind; 3] = [
        ReceiverKind::MatchedFilter,
        ReceiverKind::Decorrelator,
        ReceiverKind::Mmse,
    ];

    pub fn short_name(self) -> &'static str {
        match self {
            ReceiverKind::MatchedFilter => "MF",
            ReceiverKind::Decorrelator => "DE",
            ReceiverKind::Mmse => "MMSE",
        }
    }
}

impl std::fmt::Display for ReceiverKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.short_name())
    }
}

impl std::str::FromStr for ReceiverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "MF" | "MATCHEDFILTER" => Ok(ReceiverKind::MatchedFilter),
            "DE" | "DECORRELATOR" => Ok(ReceiverKind::Decorrelator),
            "MMSE" => Ok(ReceiverKind::Mmse),
            _ => Err(Error::InvalidParameter(format!(
                "unknown receiver `{s}` (expected MF, DE or MMSE)"
            ))),
        }
    }
}

/// One draw of spreading sequences and channel gains.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    /// `N × K`, entries `±1/√N`.
    pub spreading: DMatrix<f64>,
    /// `m × K` amplitude gains; positive for one antenna, with an independent
    /// random sign per entry otherwise.
    pub gains: DMatrix<f64>,
    /// Distance of each user from the receiver, in meters.
    pub distances: Vec<f64>,
}

impl ChannelRealization {
    /// Draws spreading first, then gain magnitudes, then (for `m > 1`) signs,
    /// all from the same stream.
    pub fn draw<R: Rng + ?Sized>(
        params: &SystemParams,
        distances: Vec<f64>,
        semantics: GainMeanSemantics,
        rng: &mut R,
    ) -> Result<Self> {
        if distances.len() != params.users {
            return Err(Error::Dimension(format!(
                "{} distances for {} users",
                distances.len(),
                params.users
            )));
        }
        let spreading = generate_spreading(params.processing_gain, params.users, rng);
        let mut gains = generate_gains(&distances, params.antennas, semantics, rng)?;
        if params.antennas > 1 {
            apply_carrier_signs(&mut gains, rng);
        }
        Ok(Self {
            spreading,
            gains,
            distances,
        })
    }

    pub fn users(&self) -> usize {
        self.spreading.ncols()
    }

    /// Gains seen by the first receive antenna.
    pub fn amplitudes(&self) -> Vec<f64> {
        self.gains.row(0).iter().copied().collect()
    }
}

/// Random binary spreading: every entry is `±1/√N` with equal probability.
pub fn generate_spreading<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> DMatrix<f64> {
    let chip = 1.0 / (n as f64).sqrt();
    // column-major fill keeps each user's chips contiguous in the stream
    DMatrix::from_fn(n, k, |_, _| if rng.random::<bool>() { chip } else { -chip })
}

/// Rayleigh amplitude gains, `m` independent draws per user.
pub fn generate_gains<R: Rng + ?Sized>(
    distances: &[f64],
    antennas: usize,
    semantics: GainMeanSemantics,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    if let Some(&d) = distances.iter().find(|&&d| !(d > 0.0 && d.is_finite())) {
        return Err(Error::Domain {
            what: "distance",
            value: d,
        });
    }
    let mut gains = DMatrix::zeros(antennas, distances.len());
    for (k, &d) in distances.iter().enumerate() {
        let scale = semantics.rayleigh_scale(GAIN_AT_UNIT_DISTANCE / (d * d));
        for l in 0..antennas {
            gains[(l, k)] = rayleigh(scale, rng);
        }
    }
    Ok(gains)
}

/// Flips each gain with probability 1/2: the real-valued counterpart of an
/// independent uniform carrier phase per antenna. Leaves every `h²` and
/// every single-antenna SIR unchanged.
pub fn apply_carrier_signs<R: Rng + ?Sized>(gains: &mut DMatrix<f64>, rng: &mut R) {
    for h in gains.iter_mut() {
        if rng.random::<bool>() {
            *h = -*h;
        }
    }
}

/// Inverse-CDF Rayleigh sample; strictly positive.
pub fn rayleigh<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.sample(Open01);
    scale * (-2.0 * u.ln()).sqrt()
}

/// `S · diag(h)`: the received signature of every user.
pub fn received_signatures(spreading: &DMatrix<f64>, amplitudes: &[f64]) -> DMatrix<f64> {
    let mut v = spreading.clone();
    for (k, mut col) in v.column_iter_mut().enumerate() {
        col *= amplitudes[k];
    }
    v
}

/// Columns of `S (SᵀS)⁻¹`, the decorrelating filters of all users.
pub fn decorrelator_filters(spreading: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (n, k) = spreading.shape();
    if k > n {
        return Err(Error::Rank {
            condition: f64::INFINITY,
        });
    }
    let gram = spreading.transpose() * spreading;
    let eig = gram.clone().symmetric_eigenvalues();
    let (lo, hi) = eig
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if condition > MAX_CONDITION {
        return Err(Error::Rank { condition });
    }
    let inv = gram.lu().try_inverse().ok_or(Error::Rank { condition })?;
    Ok(spreading * inv)
}

fn check_dims(k: usize, spreading: &DMatrix<f64>, amplitudes: &[f64], powers: &[f64]) -> Result<()> {
    let users = spreading.ncols();
    if amplitudes.len() != users || powers.len() != users {
        return Err(Error::Dimension(format!(
            "{users} signatures, {} amplitudes, {} powers",
            amplitudes.len(),
            powers.len()
        )));
    }
    if k >= users {
        return Err(Error::Dimension(format!("user {k} out of range 0..{users}")));
    }
    Ok(())
}

/// Interference-plus-noise covariance seen by user `k`:
/// `A_k = Σ_{j≠k} p_j h_j² s_j s_jᵀ + σ² I`.
pub fn interference_covariance(
    k: usize,
    spreading: &DMatrix<f64>,
    amplitudes: &[f64],
    powers: &[f64],
    noise_power: f64,
) -> DMatrix<f64> {
    let n = spreading.nrows();
    let mut a = DMatrix::identity(n, n) * noise_power;
    for (j, s) in spreading.column_iter().enumerate() {
        if j != k {
            a.ger(powers[j] * amplitudes[j] * amplitudes[j], &s, &s, 1.0);
        }
    }
    a
}

/// Filter coefficients of user `k`.
///
/// The MMSE filter is returned as `A_k⁻¹ s_k`; the scalar prefactor is
/// dropped because the output SIR does not depend on it.
pub fn receiver_filter(
    kind: ReceiverKind,
    k: usize,
    spreading: &DMatrix<f64>,
    amplitudes: &[f64],
    powers: &[f64],
    noise_power: f64,
) -> Result<DVector<f64>> {
    check_dims(k, spreading, amplitudes, powers)?;
    match kind {
        ReceiverKind::MatchedFilter => Ok(spreading.column(k).into_owned()),
        ReceiverKind::Decorrelator => Ok(decorrelator_filters(spreading)?.column(k).into_owned()),
        ReceiverKind::Mmse => {
            if let Some(&p) = powers.iter().find(|&&p| !(p >= 0.0)) {
                return Err(Error::Domain {
                    what: "power",
                    value: p,
                });
            }
            let a = interference_covariance(k, spreading, amplitudes, powers, noise_power);
            a.lu().solve(&spreading.column(k).into_owned()).ok_or(Error::Rank {
                condition: f64::INFINITY,
            })
        }
    }
}

/// Output SIR of user `k` behind filter `c`. Invariant under scaling of `c`.
pub fn output_sir(
    filter: &DVector<f64>,
    k: usize,
    spreading: &DMatrix<f64>,
    amplitudes: &[f64],
    powers: &[f64],
    noise_power: f64,
) -> Result<f64> {
    check_dims(k, spreading, amplitudes, powers)?;
    let energy = filter.norm_squared();
    if energy == 0.0 {
        return Err(Error::Domain {
            what: "filter norm",
            value: 0.0,
        });
    }
    let proj = spreading.tr_mul(filter);
    let received = |j: usize| powers[j] * amplitudes[j] * amplitudes[j] * proj[j] * proj[j];
    let interference: f64 = (0..powers.len()).filter(|&j| j != k).map(received).sum();
    Ok(received(k) / (noise_power * energy + interference))
}

/// Bits delivered per joule: `(L/M) R f(γ) / p`.
pub fn utility(power: f64, sir: f64, params: &SystemParams, model: &EfficiencyModel) -> Result<f64> {
    if !(power > 0.0) {
        return Err(Error::Domain {
            what: "transmit power",
            value: power,
        });
    }
    Ok(params.goodput() * model.value(sir)? / power)
}

/// Utility of user `k` along `grid` with every other power held fixed.
/// The receiver is re-derived at every grid point.
#[allow(clippy::too_many_arguments)]
pub fn utility_vs_power_curve(
    k: usize,
    spreading: &DMatrix<f64>,
    amplitudes: &[f64],
    kind: ReceiverKind,
    powers: &[f64],
    grid: &[f64],
    params: &SystemParams,
    model: &EfficiencyModel,
) -> Result<Vec<(f64, f64)>> {
    if grid.first().is_some_and(|&p| !(p > 0.0)) || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParameter(
            "power grid must be positive and strictly increasing".into(),
        ));
    }
    let mut trial = powers.to_vec();
    grid.iter()
        .map(|&p| {
            trial[k] = p;
            let c = receiver_filter(kind, k, spreading, amplitudes, &trial, params.noise_power)?;
            let sir = output_sir(&c, k, spreading, amplitudes, &trial, params.noise_power)?;
            Ok((p, utility(p, sir, params, model)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn spreading_is_reproducible_and_unit_norm() {
        let a = generate_spreading(4, 2, &mut rng(7));
        let b = generate_spreading(4, 2, &mut rng(7));
        assert_eq!(a, b);
        for col in a.column_iter() {
            assert_eq!(col.norm_squared(), 1.0);
            assert!(col.iter().all(|&x| x.abs() == 0.5));
        }
        let s = generate_spreading(37, 5, &mut rng(1));
        for col in s.column_iter() {
            assert_relative_eq!(col.norm_squared(), 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn crosscorrelations_are_zero_mean() {
        let mut r = rng(11);
        let mut sum = 0.0;
        let draws = 10_000;
        for _ in 0..draws {
            let s = generate_spreading(64, 2, &mut r);
            sum += s.column(0).dot(&s.column(1));
        }
        assert!((sum / draws as f64).abs() < 0.01);
    }

    #[test]
    fn rayleigh_mean_matches_distance_law() {
        let mut r = rng(3);
        let samples = 100_000;
        let g = generate_gains(&vec![100.0; samples], 1, GainMeanSemantics::Amplitude, &mut r).unwrap();
        assert!(g.iter().all(|&x| x > 0.0));
        let mean = g.iter().sum::<f64>() / samples as f64;
        assert!((mean / 3e-5 - 1.0).abs() < 0.02, "mean {mean}");

        let g = generate_gains(&vec![100.0; samples], 1, GainMeanSemantics::MeanSquare, &mut r).unwrap();
        let ms = g.iter().map(|x| x * x).sum::<f64>() / samples as f64;
        assert!((ms / 3e-5 - 1.0).abs() < 0.02, "mean square {ms}");
    }

    #[test]
    fn antenna_gains_are_uncorrelated() {
        let samples = 100_000;
        let g = generate_gains(&vec![100.0; samples], 2, GainMeanSemantics::Amplitude, &mut rng(5)).unwrap();
        let a: Vec<f64> = g.row(0).iter().copied().collect();
        let b: Vec<f64> = g.row(1).iter().copied().collect();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let (ma, mb) = (mean(&a), mean(&b));
        let cov: f64 = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        assert!((cov / (va * vb).sqrt()).abs() < 0.02);
    }

    #[test]
    fn nonpositive_distance_is_rejected() {
        let err = generate_gains(&[100.0, 0.0], 1, GainMeanSemantics::Amplitude, &mut rng(0));
        assert!(matches!(err, Err(Error::Domain { what: "distance", .. })));
    }

    fn orthogonal() -> DMatrix<f64> {
        // rows of a 4×4 Hadamard matrix, scaled to unit norm
        DMatrix::from_row_slice(4, 2, &[1.0, 1.0, 1.0, -1.0, 1.0, 1.0, 1.0, -1.0]) * 0.5
    }

    #[test]
    fn filters_for_simple_geometries() {
        let s = orthogonal();
        let h = [1.0, 2.0];
        let p = [1.0, 1.0];
        let mf = receiver_filter(ReceiverKind::MatchedFilter, 1, &s, &h, &p, 0.1).unwrap();
        assert_eq!(mf, s.column(1).into_owned());
        let de = receiver_filter(ReceiverKind::Decorrelator, 0, &s, &h, &p, 0.1).unwrap();
        assert_relative_eq!(de, s.column(0).into_owned(), epsilon = 1e-14);
        let mmse = receiver_filter(ReceiverKind::Mmse, 0, &s, &h, &[1.0, 0.0], 0.1).unwrap();
        assert_relative_eq!(mmse, s.column(0) / 0.1, epsilon = 1e-12);
    }

    #[test]
    fn decorrelator_needs_full_column_rank() {
        let s = generate_spreading(4, 5, &mut rng(0));
        assert!(matches!(decorrelator_filters(&s), Err(Error::Rank { .. })));
        let dup = DMatrix::from_columns(&[s.column(0), s.column(0)]);
        assert!(matches!(decorrelator_filters(&dup), Err(Error::Rank { .. })));
    }

    #[test]
    fn two_user_sirs() {
        let s = generate_spreading(8, 2, &mut rng(9));
        let rho = s.column(0).dot(&s.column(1));
        let (h, p, sigma2) = ([0.7, 1.3], [2.0, 0.5], 0.2);
        let a1 = p[0] * h[0] * h[0];
        let a2 = p[1] * h[1] * h[1];

        let mf = receiver_filter(ReceiverKind::MatchedFilter, 0, &s, &h, &p, sigma2).unwrap();
        let g = output_sir(&mf, 0, &s, &h, &p, sigma2).unwrap();
        assert_relative_eq!(g, a1 / (sigma2 + a2 * rho * rho), max_relative = 1e-13);

        let mmse = receiver_filter(ReceiverKind::Mmse, 0, &s, &h, &p, sigma2).unwrap();
        let g = output_sir(&mmse, 0, &s, &h, &p, sigma2).unwrap();
        let closed = a1 / sigma2 * (1.0 - a2 * rho * rho / (sigma2 + a2));
        assert_relative_eq!(g, closed, max_relative = 1e-12);

        // oracle: explicit inverse of A_1
        let a = interference_covariance(0, &s, &h, &p, sigma2);
        let inv = a.try_inverse().unwrap();
        let sk = s.column(0);
        assert_relative_eq!(g, a1 * (sk.transpose() * inv * sk)[(0, 0)], max_relative = 1e-12);
    }

    #[test]
    fn single_user_sir() {
        let s = generate_spreading(16, 1, &mut rng(2));
        let c = s.column(0).into_owned();
        let g = output_sir(&c, 0, &s, &[0.5], &[3.0], 0.25).unwrap();
        assert_relative_eq!(g, 3.0 * 0.25 / 0.25, max_relative = 1e-14);
    }

    #[test]
    fn zero_filter_is_rejected() {
        let s = generate_spreading(4, 1, &mut rng(0));
        let c = DVector::zeros(4);
        assert!(output_sir(&c, 0, &s, &[1.0], &[1.0], 1.0).is_err());
    }

    #[test]
    fn utility_arithmetic() {
        let params = SystemParams::default();
        let model = EfficiencyModel::exp_approx(100).unwrap();
        assert_eq!(utility(1e-3, 0.0, &params, &model).unwrap(), 0.0);
        let u1 = utility(1e-8, 6.0, &params, &model).unwrap();
        let u2 = utility(2e-8, 6.0, &params, &model).unwrap();
        assert_relative_eq!(u1, 2.0 * u2, max_relative = 1e-15);
        // f = 0.8 at p = 1e-8: (100/100)·1e5·0.8/1e-8
        assert_relative_eq!(params.goodput() * 0.8 / 1e-8, 8e12, max_relative = 1e-15);
        assert!(utility(0.0, 1.0, &params, &model).is_err());
    }

    #[test]
    fn params_validation() {
        assert!(SystemParams::default().validate().is_ok());
        let p = SystemParams {
            info_bits: 120,
            ..Default::default()
        };
        assert!(p.validate().is_err());
        let p = SystemParams {
            max_power: 0.0,
            ..Default::default()
        };
        assert!(p.validate().is_err());
    }

    #[test]
    fn names_round_trip() {
        for kind in ReceiverKind::ALL {
            assert_eq!(kind.short_name().parse::<ReceiverKind>().unwrap(), kind);
        }
        assert!("ZF".parse::<ReceiverKind>().is_err());
    }
}
