//! Expectations over the harvest law of the quantities that appear in the
//! greedy and hybrid conditions.
//!
//! For a uniform harvest both the compression multiplier and the channel
//! log-rate integrate in closed form; discrete laws are summed exactly.

use crate::models::{EnergyDistribution, GaussMarkovSource, GaussianIidSource, SensorSpec, SourceModel};

/// `E[zeta * max((b a E / ts_max)^(-1/eta), 1)]`; infinite when the source
/// receives zero energy with positive probability (or density near 0 with
/// `eta == 1`).
pub fn mean_energy_factor(model: &GaussianIidSource, b: f64, a: f64, law: &EnergyDistribution) -> f64 {
    let point = |e: f64| {
        let x = b * a * e / model.ts_max;
        if x >= 1.0 {
            1.0
        } else if x > 0.0 {
            x.powf(-1.0 / model.eta)
        } else {
            f64::INFINITY
        }
    };
    let raw = match law {
        EnergyDistribution::Discrete { values, probs } => values
            .iter()
            .zip(probs)
            .filter(|(_, p)| **p > 0.0)
            .map(|(v, p)| p * point(*v))
            .sum(),
        EnergyDistribution::Uniform { lo, hi } => {
            if hi <= lo {
                point(*lo)
            } else if !(a > 0.0) {
                f64::INFINITY
            } else {
                // Below c the power law applies, above it the multiplier is 1.
                let c = model.ts_max / (b * a);
                let m = c.clamp(*lo, *hi);
                let s = 1.0 - 1.0 / model.eta;
                let below = if m <= *lo {
                    0.0
                } else if s > 1e-12 {
                    c.powf(1.0 / model.eta) * (m.powf(s) - lo.powf(s)) / s
                } else if *lo > 0.0 {
                    c * (m / lo).ln()
                } else {
                    f64::INFINITY
                };
                (below + (hi - m)) / (hi - lo)
            }
        }
    };
    model.zeta * raw
}

/// Antiderivative of `ln(1 + k e)` in `e`, accurate for small `k e`.
fn log_antiderivative(k: f64, e: f64) -> f64 {
    let x = k * e;
    if x < 1e-3 {
        e * x * (0.5 - x / 6.0 + x * x / 12.0 - x * x * x / 20.0)
    } else {
        ((1.0 + x) * x.ln_1p() - x) / k
    }
}

/// `E[log2(1 + k E)]` for `k >= 0`.
pub fn mean_log2_1p(k: f64, law: &EnergyDistribution) -> f64 {
    if !(k > 0.0) {
        return 0.0;
    }
    let nats = match law {
        EnergyDistribution::Discrete { values, probs } => values
            .iter()
            .zip(probs)
            .filter(|(_, p)| **p > 0.0)
            .map(|(v, p)| p * (k * v).ln_1p())
            .sum(),
        EnergyDistribution::Uniform { lo, hi } => {
            if hi <= lo {
                (k * lo).ln_1p()
            } else {
                (log_antiderivative(k, *hi) - log_antiderivative(k, *lo)) / (hi - lo)
            }
        }
    };
    nats / std::f64::consts::LN_2
}

/// `E[g^h(c E)]` in bits per slot.
pub fn mean_channel_rate(spec: &SensorSpec, h: f64, c: f64) -> f64 {
    spec.geometry.channel_uses() * mean_log2_1p(h * c, &spec.env.energy)
}

fn gauss_markov_mean(model: &GaussMarkovSource, spec: &SensorSpec, d: f64, a: f64, q: f64) -> f64 {
    let floor = model.min_energy(&spec.geometry);
    if !(spec.env.energy.min_value() * a > floor) {
        return f64::INFINITY;
    }
    let geom = spec.geometry;
    spec.env
        .energy
        .expect(|e| spec.source.rate(&geom, d, a * e, q).unwrap_or(f64::INFINITY))
}

/// `E[f^q(d, a E)]` in bits per slot; infinite when `d` is not attainable
/// at some likely energy level.
pub fn mean_source_rate(spec: &SensorSpec, q: f64, d: f64, a: f64) -> f64 {
    match &spec.source {
        SourceModel::GaussianIid(m) => match m.distortion_factor(d, q) {
            Ok(f1) if f1 == 0.0 => 0.0,
            Ok(f1) => {
                spec.geometry.source_samples()
                    * f1
                    * mean_energy_factor(m, spec.geometry.bandwidth_ratio(), a, &spec.env.energy)
            }
            Err(_) => f64::INFINITY,
        },
        SourceModel::GaussMarkov(m) => gauss_markov_mean(m, spec, d, a, q),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate;

    fn model(eta: f64) -> GaussianIidSource {
        GaussianIidSource::new(1.0, 1.0, 1.0, eta).unwrap()
    }

    // Split at the kink and substitute e = kink * t^p, which removes the
    // integrable singularity at e = 0.
    fn factor_by_quadrature(m: &GaussianIidSource, b: f64, a: f64, lo: f64, hi: f64) -> f64 {
        let c = m.ts_max / (b * a);
        let kink = c.clamp(lo, hi);
        let p = 6.0;
        let t0 = if kink > 0.0 { (lo / kink).powf(1.0 / p) } else { 1.0 };
        let below = if kink > lo {
            integrate(t0, 1.0, |t| {
                let e = kink * t.powf(p);
                let de = kink * p * t.powf(p - 1.0);
                (e / c).powf(-1.0 / m.eta) * de
            })
        } else {
            0.0
        };
        (below + (hi - kink)) / (hi - lo)
    }

    #[test]
    fn energy_factor_matches_quadrature() {
        for &(eta, a, b, lo, hi) in &[
            (1.5, 0.5, 1.0, 0.0, 2.0),
            (1.5, 0.1, 1.0, 0.0, 2.0),
            (2.7, 0.9, 5.0, 0.0, 2.0),
            (1.2, 0.3, 0.201, 0.5, 1.5),
            (1.0, 0.3, 1.0, 0.5, 1.5),
            (3.0, 1.0, 1.0, 0.0, 0.4),
        ] {
            let m = model(eta);
            let law = EnergyDistribution::Uniform { lo, hi };
            let closed = mean_energy_factor(&m, b, a, &law);
            let quad = factor_by_quadrature(&m, b, a, lo, hi);
            assert!((closed - quad).abs() / quad < 1e-8, "{eta} {a} {b}: {closed} vs {quad}");
        }
    }

    #[test]
    fn energy_factor_infinite_cases() {
        let law = EnergyDistribution::Uniform { lo: 0.0, hi: 2.0 };
        assert!(mean_energy_factor(&model(1.0), 1.0, 0.5, &law).is_infinite());
        assert!(mean_energy_factor(&model(1.5), 1.0, 0.0, &law).is_infinite());
        let law = EnergyDistribution::Discrete { values: vec![0.0, 1.0], probs: vec![0.1, 0.9] };
        assert!(mean_energy_factor(&model(1.5), 1.0, 0.5, &law).is_infinite());
    }

    #[test]
    fn log_mean_matches_quadrature() {
        for &(k, lo, hi) in &[(1e-7, 0.0, 2.0), (0.05, 0.0, 2.0), (3.5, 0.0, 2.0), (700.0, 0.3, 1.1)] {
            let law = EnergyDistribution::Uniform { lo, hi };
            let closed = mean_log2_1p(k, &law);
            let quad = integrate(lo, hi, |e| (k * e).ln_1p()) / (hi - lo) / std::f64::consts::LN_2;
            assert!((closed - quad).abs() <= 1e-10 * quad.abs().max(1e-12), "{k}: {closed} vs {quad}");
        }
    }

    #[test]
    fn point_mass_reduces_to_evaluation() {
        let law = EnergyDistribution::point(0.7);
        assert!((mean_log2_1p(3.0, &law) - (1.0f64 + 2.1).log2()).abs() < 1e-15);
        let m = model(1.5);
        let want = (0.5f64 * 0.7).powf(-1.0 / 1.5);
        assert!((mean_energy_factor(&m, 1.0, 0.5, &law) - want).abs() < 1e-14);
    }

    #[test]
    fn jensen_for_channel_rate() {
        let law = EnergyDistribution::Uniform { lo: 0.0, hi: 2.0 };
        for k in [0.01, 0.3, 2.0, 50.0] {
            assert!(mean_log2_1p(k, &law) <= (1.0f64 + k).log2());
        }
    }
}
