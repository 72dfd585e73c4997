//! Rate-distortion-energy source models, the AWGN channel rate law, the
//! receiver MMSE of uncoded (analog) transmission, and the stochastic
//! environment a sensor operates in.
//!
//! Rates are in bits per slot and use base-2 logarithms throughout. Energies
//! are per channel use.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quadrature;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("domain error: {0}")]
    Domain(String),
    /// Zero source energy with a positive compression requirement.
    #[error("source rate diverges at zero compression energy")]
    RateInfinite,
}

fn domain<T>(msg: impl Into<String>) -> Result<T, ModelError> {
    Err(ModelError::Domain(msg.into()))
}

/// Channel uses and source samples per slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GeometryRepr", into = "GeometryRepr")]
pub struct SlotGeometry {
    channel_uses_per_slot: u32,
    source_samples_per_slot: u32,
    bandwidth_ratio: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GeometryRepr {
    channel_uses_per_slot: u32,
    source_samples_per_slot: u32,
}

impl TryFrom<GeometryRepr> for SlotGeometry {
    type Error = ModelError;
    fn try_from(r: GeometryRepr) -> Result<Self, ModelError> {
        SlotGeometry::new(r.channel_uses_per_slot, r.source_samples_per_slot)
    }
}

impl From<SlotGeometry> for GeometryRepr {
    fn from(g: SlotGeometry) -> Self {
        GeometryRepr {
            channel_uses_per_slot: g.channel_uses_per_slot,
            source_samples_per_slot: g.source_samples_per_slot,
        }
    }
}

impl SlotGeometry {
    pub fn new(channel_uses: u32, source_samples: u32) -> Result<Self, ModelError> {
        if channel_uses == 0 || source_samples == 0 {
            return domain("slot geometry needs positive channel uses and source samples");
        }
        Ok(SlotGeometry {
            channel_uses_per_slot: channel_uses,
            source_samples_per_slot: source_samples,
            bandwidth_ratio: channel_uses as f64 / source_samples as f64,
        })
    }

    pub fn channel_uses(&self) -> f64 {
        self.channel_uses_per_slot as f64
    }

    pub fn source_samples(&self) -> f64 {
        self.source_samples_per_slot as f64
    }

    /// Channel uses per source sample.
    pub fn bandwidth_ratio(&self) -> f64 {
        self.bandwidth_ratio
    }

    /// The `N / b` prefactor of the source rate laws (equal to `M`).
    fn rate_scale(&self) -> f64 {
        self.channel_uses() / self.bandwidth_ratio
    }
}

/// Noisy observation of an i.i.d. Gaussian source; compression cost follows
/// a processor power law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianIidSource {
    pub d_max: f64,
    /// Energy per source sample beyond which compression gets no cheaper.
    pub ts_max: f64,
    pub zeta: f64,
    pub eta: f64,
}

impl GaussianIidSource {
    pub fn new(d_max: f64, ts_max: f64, zeta: f64, eta: f64) -> Result<Self, ModelError> {
        let s = GaussianIidSource { d_max, ts_max, zeta, eta };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.d_max > 0.0 && self.ts_max > 0.0) {
            return domain("d_max and ts_max must be positive");
        }
        if !(self.zeta >= 1.0) {
            return domain("zeta must be at least 1");
        }
        if !(1.0..=3.0).contains(&self.eta) {
            return domain("eta must lie in [1, 3]");
        }
        Ok(())
    }

    /// Estimation MMSE of the source given one noisy observation at SNR `q`.
    pub fn d_mmse(&self, q: f64) -> f64 {
        1.0 / (1.0 / self.d_max + q)
    }

    /// Rate-distortion factor `log2((d_max - d_mmse) / (d - d_mmse))^+`.
    pub fn distortion_factor(&self, d: f64, q: f64) -> Result<f64, ModelError> {
        if !(q >= 0.0) {
            return domain(format!("observation SNR {q} must be nonnegative"));
        }
        let dm = self.d_mmse(q);
        if !(d > dm) {
            return domain(format!("distortion {d} not above the estimation MMSE {dm}"));
        }
        if d > self.d_max * (1.0 + 1e-12) {
            return domain(format!("distortion {d} exceeds d_max {}", self.d_max));
        }
        Ok(((self.d_max - dm) / (d - dm)).log2().max(0.0))
    }

    /// Compression multiplier `zeta * max((b ts / ts_max)^(-1/eta), 1)`;
    /// infinite at `ts == 0`.
    pub fn energy_factor(&self, geom: &SlotGeometry, ts: f64) -> f64 {
        let x = geom.bandwidth_ratio() * ts / self.ts_max;
        if x >= 1.0 {
            self.zeta
        } else {
            self.zeta * x.powf(-1.0 / self.eta)
        }
    }

    /// Source energy at which the compression multiplier saturates at `zeta`.
    pub fn saturation_energy(&self, geom: &SlotGeometry) -> f64 {
        self.ts_max / geom.bandwidth_ratio()
    }
}

/// First-order Gauss–Markov source compressed by a transform coder whose
/// size (and energy) trades against the exploited correlation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussMarkovSource {
    pub d_max: f64,
    pub zeta: f64,
    /// Minimum compression energy scale; source energy must exceed `nu / b`.
    pub nu: f64,
}

impl GaussMarkovSource {
    pub fn new(d_max: f64, zeta: f64, nu: f64) -> Result<Self, ModelError> {
        let s = GaussMarkovSource { d_max, zeta, nu };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.d_max > 0.0) {
            return domain("d_max must be positive");
        }
        if !(self.zeta >= 1.0) {
            return domain("zeta must be at least 1");
        }
        if !(self.nu >= 0.0) {
            return domain("nu must be nonnegative");
        }
        Ok(())
    }

    /// Smallest admissible source energy (exclusive).
    pub fn min_energy(&self, geom: &SlotGeometry) -> f64 {
        self.nu / geom.bandwidth_ratio()
    }

    /// `log2(zeta d_max / d)`.
    pub fn distortion_term(&self, d: f64) -> Result<f64, ModelError> {
        if !(d > 0.0) {
            return domain(format!("distortion {d} must be positive"));
        }
        Ok((self.zeta * self.d_max / d).log2())
    }

    /// `log2(1 - q^2) (ts - nu/b) / ts`, nonpositive.
    pub fn energy_term(&self, geom: &SlotGeometry, ts: f64, q: f64) -> Result<f64, ModelError> {
        if !(0.0..1.0).contains(&q) {
            return domain(format!("correlation {q} outside [0, 1)"));
        }
        let floor = self.min_energy(geom);
        if !(ts > floor) {
            return domain(format!("source energy {ts} must exceed {floor}"));
        }
        Ok((1.0 - q * q).log2() * (ts - floor) / ts)
    }

    /// Largest distortion with a positive rate at energy `ts`.
    pub fn positivity_bound(&self, geom: &SlotGeometry, ts: f64, q: f64) -> Result<f64, ModelError> {
        let e = self.energy_term(geom, ts, q)?;
        Ok(self.zeta * self.d_max * e.exp2())
    }
}

/// Either of the two rate-distortion-energy source laws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceModel {
    GaussianIid(GaussianIidSource),
    GaussMarkov(GaussMarkovSource),
}

impl SourceModel {
    pub fn d_max(&self) -> f64 {
        match self {
            SourceModel::GaussianIid(s) => s.d_max,
            SourceModel::GaussMarkov(s) => s.d_max,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        match self {
            SourceModel::GaussianIid(s) => s.validate(),
            SourceModel::GaussMarkov(s) => s.validate(),
        }
    }

    /// Bits produced per slot.
    pub fn rate(&self, geom: &SlotGeometry, d: f64, ts: f64, q: f64) -> Result<f64, ModelError> {
        match self {
            SourceModel::GaussianIid(s) => source_rate_gaussian_iid(s, geom, d, ts, q),
            SourceModel::GaussMarkov(s) => source_rate_gauss_markov(s, geom, d, ts, q),
        }
    }

    /// Smallest distortion any finite rate reaches, regardless of energy.
    pub fn distortion_floor(&self, q: f64) -> f64 {
        match self {
            SourceModel::GaussianIid(s) => s.d_mmse(q),
            SourceModel::GaussMarkov(_) => 0.0,
        }
    }
}

/// Bits per slot for the noisy i.i.d. Gaussian source.
///
/// A request at `d == d_max` needs no bits at all, so it returns 0 even at
/// zero source energy; any other request at `ts == 0` is
/// [`ModelError::RateInfinite`].
pub fn source_rate_gaussian_iid(
    model: &GaussianIidSource,
    geom: &SlotGeometry,
    d: f64,
    ts: f64,
    q: f64,
) -> Result<f64, ModelError> {
    if !(ts >= 0.0) {
        return domain(format!("source energy {ts} must be nonnegative"));
    }
    let f1 = model.distortion_factor(d, q)?;
    if f1 == 0.0 {
        return Ok(0.0);
    }
    if ts == 0.0 {
        return Err(ModelError::RateInfinite);
    }
    Ok(geom.rate_scale() * f1 * model.energy_factor(geom, ts))
}

/// Bits per slot for the Gauss–Markov source under transform coding.
///
/// The outer positive part is applied after summing both terms, so a
/// distortion above the positivity bound costs 0 bits.
pub fn source_rate_gauss_markov(
    model: &GaussMarkovSource,
    geom: &SlotGeometry,
    d: f64,
    ts: f64,
    q: f64,
) -> Result<f64, ModelError> {
    let e = model.energy_term(geom, ts, q)?;
    let l = model.distortion_term(d)?;
    Ok(geom.rate_scale() * (l + e).max(0.0))
}

/// Shannon rate `N log2(1 + h tt)` of the complex AWGN channel.
pub fn channel_rate_awgn(geom: &SlotGeometry, h: f64, tt: f64) -> Result<f64, ModelError> {
    if !(h >= 0.0) || !(tt >= 0.0) {
        return domain(format!("channel SNR {h} and energy {tt} must be nonnegative"));
    }
    Ok(geom.channel_uses() * (h * tt).ln_1p() / std::f64::consts::LN_2)
}

/// Receiver MMSE when the observed samples are scaled and sent uncoded.
///
/// For `b < 1` the untransmitted fraction `1 - b` of samples accrues `d_max`.
pub fn analog_mmse(
    geom: &SlotGeometry,
    tt: f64,
    q: f64,
    h: f64,
    d_max: f64,
) -> Result<f64, ModelError> {
    analog_mmse_with_ratio(geom.bandwidth_ratio(), tt, q, h, d_max)
}

pub(crate) fn analog_mmse_with_ratio(
    b: f64,
    tt: f64,
    q: f64,
    h: f64,
    d_max: f64,
) -> Result<f64, ModelError> {
    if !(tt >= 0.0 && q > 0.0 && h >= 0.0 && d_max > 0.0 && b > 0.0) {
        return domain(format!(
            "analog MMSE needs tt >= 0, q > 0, h >= 0, d_max > 0, b > 0 (got {tt}, {q}, {h}, {d_max}, {b})"
        ));
    }
    if b >= 1.0 {
        let snr = b * tt * q * h / (b * tt * q + q + 1.0);
        Ok(1.0 / (snr + 1.0 / d_max))
    } else {
        let snr = tt * q * h / (tt * q + q + 1.0);
        Ok(b / (snr + 1.0 / d_max) + (1.0 - b) * d_max)
    }
}

/// Interval `(d_lo, d_hi]` of distortions with a finite nonnegative rate at
/// observation state `q` and source energy `ts`.
pub fn distortion_bounds(
    source: &SourceModel,
    geom: &SlotGeometry,
    q: f64,
    ts: f64,
) -> Result<(f64, f64), ModelError> {
    match source {
        SourceModel::GaussianIid(s) => {
            if !(ts >= 0.0) {
                return domain(format!("source energy {ts} must be nonnegative"));
            }
            if !(q >= 0.0) {
                return domain(format!("observation SNR {q} must be nonnegative"));
            }
            let lo = s.d_mmse(q);
            if !(lo < s.d_max) {
                return domain(format!("observation SNR {q} leaves no admissible distortion"));
            }
            Ok((lo, s.d_max))
        }
        SourceModel::GaussMarkov(s) => Ok((0.0, s.positivity_bound(geom, ts, q)?)),
    }
}

/// Law of the per-slot energy arrival.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnergyDistribution {
    Uniform { lo: f64, hi: f64 },
    Discrete { values: Vec<f64>, probs: Vec<f64> },
}

impl EnergyDistribution {
    pub fn point(value: f64) -> Self {
        EnergyDistribution::Discrete { values: vec![value], probs: vec![1.0] }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        match self {
            EnergyDistribution::Uniform { lo, hi } => {
                if !(*lo >= 0.0 && hi >= lo && hi.is_finite()) {
                    return domain(format!("uniform energy law needs 0 <= lo <= hi (got {lo}, {hi})"));
                }
            }
            EnergyDistribution::Discrete { values, probs } => {
                if values.is_empty() || values.len() != probs.len() {
                    return domain("discrete energy law needs matching nonempty values/probs");
                }
                if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                    return domain("energy values must be finite and nonnegative");
                }
                check_pmf(probs)?;
            }
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        match self {
            EnergyDistribution::Uniform { lo, hi } => 0.5 * (lo + hi),
            EnergyDistribution::Discrete { values, probs } => {
                values.iter().zip(probs).map(|(v, p)| v * p).sum()
            }
        }
    }

    /// Inverse-CDF sample from one uniform draw `u` in [0, 1).
    pub fn sample(&self, u: f64) -> f64 {
        match self {
            EnergyDistribution::Uniform { lo, hi } => lo + (hi - lo) * u,
            EnergyDistribution::Discrete { values, probs } => values[sample_index(probs, u)],
        }
    }

    /// `E[f(E)]`: exact for discrete laws, 64-point Gauss–Legendre otherwise.
    pub fn expect<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        match self {
            EnergyDistribution::Uniform { lo, hi } => {
                if hi == lo {
                    f(*lo)
                } else {
                    quadrature::integrate(*lo, *hi, f) / (hi - lo)
                }
            }
            EnergyDistribution::Discrete { values, probs } => values
                .iter()
                .zip(probs)
                .filter(|(_, p)| **p > 0.0)
                .map(|(v, p)| p * f(*v))
                .sum(),
        }
    }

    /// Smallest value in the support.
    pub fn min_value(&self) -> f64 {
        match self {
            EnergyDistribution::Uniform { lo, .. } => *lo,
            EnergyDistribution::Discrete { values, probs } => values
                .iter()
                .zip(probs)
                .filter(|(_, p)| **p > 0.0)
                .map(|(v, _)| *v)
                .fold(f64::INFINITY, f64::min),
        }
    }
}

pub(crate) fn check_pmf(p: &[f64]) -> Result<(), ModelError> {
    if p.is_empty() {
        return domain("probability vector is empty");
    }
    if p.iter().any(|x| !(*x >= 0.0)) {
        return domain("probabilities must be nonnegative");
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > 1e-12 {
        return domain(format!("probabilities sum to {s}, not 1"));
    }
    Ok(())
}

/// Index drawn from `pmf` by inverse CDF with one uniform draw.
pub fn sample_index(pmf: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (i, p) in pmf.iter().enumerate() {
        if *p <= 0.0 {
            continue;
        }
        acc += p;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

/// Observation, channel and harvesting processes, each i.i.d. across slots
/// and mutually independent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Environment {
    pub q_support: Vec<f64>,
    pub q_pmf: Vec<f64>,
    pub h_support: Vec<f64>,
    pub h_pmf: Vec<f64>,
    pub energy: EnergyDistribution,
}

impl Environment {
    pub fn new(
        q_support: Vec<f64>,
        q_pmf: Vec<f64>,
        h_support: Vec<f64>,
        h_pmf: Vec<f64>,
        energy: EnergyDistribution,
    ) -> Result<Self, ModelError> {
        let env = Environment { q_support, q_pmf, h_support, h_pmf, energy };
        env.validate()?;
        Ok(env)
    }

    /// Constant observation and channel states.
    pub fn constant(q: f64, h: f64, energy: EnergyDistribution) -> Result<Self, ModelError> {
        Environment::new(vec![q], vec![1.0], vec![h], vec![1.0], energy)
    }

    /// Two-state observation and channel processes; `pw_*` is the
    /// probability of the worse state, listed first.
    pub fn two_state(
        q_states: (f64, f64),
        pw_q: f64,
        h_states: (f64, f64),
        pw_h: f64,
        energy: EnergyDistribution,
    ) -> Result<Self, ModelError> {
        Environment::new(
            vec![q_states.0, q_states.1],
            vec![pw_q, 1.0 - pw_q],
            vec![h_states.0, h_states.1],
            vec![pw_h, 1.0 - pw_h],
            energy,
        )
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.q_support.len() != self.q_pmf.len() || self.h_support.len() != self.h_pmf.len() {
            return domain("support and pmf lengths differ");
        }
        check_pmf(&self.q_pmf)?;
        check_pmf(&self.h_pmf)?;
        if self.q_support.iter().chain(&self.h_support).any(|x| !x.is_finite()) {
            return domain("state values must be finite");
        }
        if self.h_support.iter().any(|h| *h < 0.0) {
            return domain("channel SNRs must be nonnegative");
        }
        self.energy.validate()
    }

    pub fn mean_energy(&self) -> f64 {
        self.energy.mean()
    }
}

/// Everything static about one sensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorSpec {
    pub geometry: SlotGeometry,
    pub source: SourceModel,
    pub env: Environment,
    /// Energy reserve of the buffered policies; defaults to 1e-3 of the mean
    /// harvest.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
}

impl SensorSpec {
    pub fn new(geometry: SlotGeometry, source: SourceModel, env: Environment) -> Self {
        SensorSpec { geometry, source, env, epsilon: None }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        self.source.validate()?;
        self.env.validate()?;
        if let Some(e) = self.epsilon {
            if !(e >= 0.0) {
                return domain("epsilon must be nonnegative");
            }
        }
        Ok(())
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon.unwrap_or(1e-3 * self.env.mean_energy())
    }

    pub fn source_rate(&self, d: f64, ts: f64, q: f64) -> Result<f64, ModelError> {
        self.source.rate(&self.geometry, d, ts, q)
    }

    /// Channel rate; the environment guarantees `h >= 0`.
    pub fn channel_rate(&self, h: f64, tt: f64) -> f64 {
        channel_rate_awgn(&self.geometry, h, tt.max(0.0)).unwrap_or(0.0)
    }
}
