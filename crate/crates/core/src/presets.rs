//! Ready-made setups for the standard experiments.

use crate::feasibility::region::SweepAxes;
use crate::mdp::DiscreteSpec;
use crate::models::{
    EnergyDistribution, Environment, GaussMarkovSource, GaussianIidSource, SensorSpec, SlotGeometry, SourceModel,
};
use crate::policies::PolicyClass;
use crate::scheduling::MultiSensorSpec;

pub const REGION_PRESETS: [&str; 5] = ["narrowband", "matched", "wideband", "spread-states", "close-states"];
pub const TRADEOFF_PRESETS: [&str; 2] = ["tradeoff-mild", "tradeoff-harsh"];
pub const SCHEDULE_PRESETS: [&str; 1] = ["two-sensor"];

/// Default points per axis for constant-state sweeps.
pub const CONSTANT_STATE_POINTS: usize = 40;
/// Default points per axis for probability sweeps.
pub const PROBABILITY_POINTS: usize = 21;
/// Default number of trade-off weights.
pub const GAMMA_POINTS: usize = 21;

pub const D_BAR: f64 = 0.8;

/// `(p_w^q, p_w^h)` of the second sensor in the two-sensor sweeps.
pub const SECOND_SENSOR_CASES: [(f64, f64); 3] = [(0.1, 0.1), (0.5, 0.5), (0.9, 0.1)];

fn harvest() -> EnergyDistribution {
    EnergyDistribution::Uniform { lo: 0.0, hi: 2.0 }
}

fn iid_source() -> SourceModel {
    SourceModel::GaussianIid(GaussianIidSource::new(1.0, 1.0, 1.0, 1.5).expect("valid constants"))
}

/// Gaussian i.i.d. sensor with uniform harvesting and the given slot shape.
pub fn sensor(channel_uses: u32, source_samples: u32, env: Environment) -> SensorSpec {
    SensorSpec::new(SlotGeometry::new(channel_uses, source_samples).expect("positive sizes"), iid_source(), env)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionSetup {
    pub name: &'static str,
    pub template: SensorSpec,
    pub axes: SweepAxes,
    pub d_bar: f64,
    pub classes: Vec<PolicyClass>,
}

/// Region sweep setup; `points` overrides the per-axis resolution.
pub fn region(name: &str, points: Option<usize>) -> Option<RegionSetup> {
    let constant = |name, n, m| {
        let env = Environment::constant(1.0, 1.0, harvest()).expect("valid constants");
        RegionSetup {
            name,
            template: sensor(n, m, env),
            axes: SweepAxes::constant_state(0.1, 1000.0, points.unwrap_or(CONSTANT_STATE_POINTS)),
            d_bar: D_BAR,
            classes: PolicyClass::ALL.to_vec(),
        }
    };
    let two = |name, q: (f64, f64), h: (f64, f64)| {
        let env = Environment::two_state(q, 0.5, h, 0.5, harvest()).expect("valid constants");
        RegionSetup {
            name,
            template: sensor(100, 100, env),
            axes: SweepAxes::two_state(q, h, points.unwrap_or(PROBABILITY_POINTS)),
            d_bar: D_BAR,
            classes: vec![PolicyClass::Do, PolicyClass::Greedy, PolicyClass::GreedyFixed],
        }
    };
    Some(match name {
        "narrowband" => constant("narrowband", 201, 1000),
        "matched" => constant("matched", 100, 100),
        "wideband" => constant("wideband", 500, 100),
        "spread-states" => two("spread-states", (0.1, 100.0), (0.1, 100.0)),
        "close-states" => two("close-states", close_q(), CLOSE_H),
        _ => return None,
    })
}

/// Discrete model for the trade-off curves; `pw` is the probability of the
/// worse energy arrival, correlation and channel state.
pub fn tradeoff_spec(pw: f64) -> DiscreteSpec {
    DiscreteSpec {
        geometry: SlotGeometry::new(100, 100).expect("positive sizes"),
        source: SourceModel::GaussMarkov(GaussMarkovSource::new(1.0, 1.0, 0.1).expect("valid constants")),
        queue_capacity: 5,
        battery_capacity: 2,
        energy_unit: 1.0,
        energy_arrivals: vec![1, 2],
        energy_pmf: vec![pw, 1.0 - pw],
        q_support: vec![0.1, 0.5],
        q_pmf: vec![pw, 1.0 - pw],
        h_support: vec![0.5, 10.0],
        h_pmf: vec![pw, 1.0 - pw],
        d_levels: vec![0.1, 0.55, 1.0],
        ts_levels: vec![0, 1, 2, 3, 4],
        tt_levels: vec![0, 1, 2, 3, 4],
        lambda: 0.5,
    }
}

pub fn tradeoff(name: &str) -> Option<DiscreteSpec> {
    match name {
        "tradeoff-mild" => Some(tradeoff_spec(0.1)),
        "tradeoff-harsh" => Some(tradeoff_spec(0.9)),
        _ => None,
    }
}

fn close_q() -> (f64, f64) {
    (10f64.powf(-0.2), 1.0)
}

const CLOSE_H: (f64, f64) = (3.5, 7.0);

/// Two sensors on the close-states model; the first sensor's
/// probabilities are placeholders that sweeps overwrite.
pub fn two_sensors(pw_q2: f64, pw_h2: f64) -> MultiSensorSpec {
    let env = |pq, ph| Environment::two_state(close_q(), pq, CLOSE_H, ph, harvest()).expect("valid constants");
    MultiSensorSpec::independent(
        vec![sensor(100, 100, env(0.5, 0.5)), sensor(100, 100, env(pw_q2, pw_h2))],
        vec![D_BAR, D_BAR],
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_resolve() {
        for name in REGION_PRESETS {
            let r = region(name, None).unwrap();
            r.template.validate().unwrap();
            assert_eq!(r.name, name);
        }
        for name in TRADEOFF_PRESETS {
            tradeoff(name).unwrap().validate().unwrap();
        }
        two_sensors(0.1, 0.1).validate().unwrap();
        assert!(region("nope", None).is_none());
    }

    #[test]
    fn bandwidth_ratios() {
        let b = |n| region(n, None).unwrap().template.geometry.bandwidth_ratio();
        assert!((b("narrowband") - 0.201).abs() < 1e-12);
        assert_eq!(b("matched"), 1.0);
        assert_eq!(b("wideband"), 5.0);
    }

    #[test]
    fn tradeoff_state_count() {
        assert_eq!(tradeoff_spec(0.1).nominal_state_count(), 72);
    }
}
