//! Stationary energy-management policy classes and their per-slot decision
//! rules.
//!
//! Parameter tables are indexed by position in the environment's
//! `q_support` / `h_support`; two-dimensional tables are `[q][h]`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::models::{Environment, SensorSpec};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("parameters do not cover state (q index {q}, h index {h})")]
    MissingState { q: usize, h: usize },
    #[error("invalid policy parameters: {0}")]
    Invalid(String),
}

/// One slot's decision. `d` is `None` for uncoded (analog) transmission,
/// whose distortion is set by the receiver MMSE rather than chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub d: Option<f64>,
    pub ts: f64,
    pub tt: f64,
}

impl Action {
    pub fn idle(d: Option<f64>) -> Self {
        Action { d, ts: 0.0, tt: 0.0 }
    }
}

/// What a policy sees at decision time: the buffer after this slot's
/// arrival has been added, the arrival itself, and the state indices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecisionInput {
    pub energy: f64,
    pub arrival: f64,
    pub q_index: usize,
    pub h_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicyParams {
    /// Buffered, separately adapted source (by q) and channel (by h) energies.
    Do {
        d_per_q: Vec<f64>,
        ts_per_q: Vec<f64>,
        tt_per_h: Vec<f64>,
        alpha: f64,
        epsilon: f64,
    },
    /// Spends each arrival at once, split by a per-(q, h) fraction.
    Greedy { d_per_qh: Vec<Vec<f64>>, alpha_per_qh: Vec<Vec<f64>> },
    /// Greedy with one split for every state.
    GreedyFixed { d_per_qh: Vec<Vec<f64>>, alpha: f64 },
    /// Buffer for the channel encoder only.
    Hybrid1 { d_per_q: Vec<f64>, tt_per_h: Vec<f64>, alpha: f64 },
    /// Buffer for the source encoder only.
    Hybrid2 { d_per_q: Vec<f64>, ts_per_q: Vec<f64>, alpha: f64 },
    /// Uncoded transmission with a buffered per-(q, h) energy target.
    Analog { tt_per_qh: Vec<Vec<f64>>, epsilon: f64 },
    /// Uncoded transmission of every arrival.
    AnalogGreedy,
}

/// Policy class labels, used by sweeps and reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyClass {
    Do,
    Greedy,
    GreedyFixed,
    Hybrid1,
    Hybrid2,
    Analog,
    AnalogGreedy,
}

impl PolicyClass {
    pub const ALL: [PolicyClass; 7] = [
        PolicyClass::Do,
        PolicyClass::Greedy,
        PolicyClass::GreedyFixed,
        PolicyClass::Hybrid1,
        PolicyClass::Hybrid2,
        PolicyClass::Analog,
        PolicyClass::AnalogGreedy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyClass::Do => "do",
            PolicyClass::Greedy => "greedy",
            PolicyClass::GreedyFixed => "greedy_fixed",
            PolicyClass::Hybrid1 => "hybrid1",
            PolicyClass::Hybrid2 => "hybrid2",
            PolicyClass::Analog => "analog",
            PolicyClass::AnalogGreedy => "analog_greedy",
        }
    }

    pub fn is_digital(self) -> bool {
        !matches!(self, PolicyClass::Analog | PolicyClass::AnalogGreedy)
    }
}

impl std::str::FromStr for PolicyClass {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        PolicyClass::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown policy class `{s}`"))
    }
}

impl std::fmt::Display for PolicyClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

fn clamp0(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

fn get(v: &[f64], i: usize, q: usize, h: usize) -> Result<f64, PolicyError> {
    v.get(i).copied().ok_or(PolicyError::MissingState { q, h })
}

fn get2(v: &[Vec<f64>], q: usize, h: usize) -> Result<f64, PolicyError> {
    v.get(q)
        .and_then(|row| row.get(h))
        .copied()
        .ok_or(PolicyError::MissingState { q, h })
}

impl PolicyParams {
    pub fn class(&self) -> PolicyClass {
        match self {
            PolicyParams::Do { .. } => PolicyClass::Do,
            PolicyParams::Greedy { .. } => PolicyClass::Greedy,
            PolicyParams::GreedyFixed { .. } => PolicyClass::GreedyFixed,
            PolicyParams::Hybrid1 { .. } => PolicyClass::Hybrid1,
            PolicyParams::Hybrid2 { .. } => PolicyClass::Hybrid2,
            PolicyParams::Analog { .. } => PolicyClass::Analog,
            PolicyParams::AnalogGreedy => PolicyClass::AnalogGreedy,
        }
    }

    /// Checks table shapes against `env` and parameter ranges.
    pub fn validate(&self, env: &Environment) -> Result<(), PolicyError> {
        let nq = env.q_support.len();
        let nh = env.h_support.len();
        let bad = |m: &str| Err(PolicyError::Invalid(m.to_string()));
        let len = |v: &[f64], n: usize, name: &str| -> Result<(), PolicyError> {
            if v.len() != n {
                return Err(PolicyError::Invalid(format!("{name} has {} entries, expected {n}", v.len())));
            }
            if v.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return Err(PolicyError::Invalid(format!("{name} entries must be finite and nonnegative")));
            }
            Ok(())
        };
        let len2 = |v: &[Vec<f64>], name: &str| -> Result<(), PolicyError> {
            if v.len() != nq {
                return Err(PolicyError::Invalid(format!("{name} has {} rows, expected {nq}", v.len())));
            }
            v.iter().try_for_each(|row| len(row, nh, name))
        };
        let open_unit = |a: f64| a > 0.0 && a < 1.0;
        match self {
            PolicyParams::Do { d_per_q, ts_per_q, tt_per_h, alpha, epsilon } => {
                len(d_per_q, nq, "d_per_q")?;
                len(ts_per_q, nq, "ts_per_q")?;
                len(tt_per_h, nh, "tt_per_h")?;
                if !open_unit(*alpha) {
                    return bad("alpha must lie in (0, 1)");
                }
                if !(*epsilon >= 0.0) {
                    return bad("epsilon must be nonnegative");
                }
            }
            PolicyParams::Greedy { d_per_qh, alpha_per_qh } => {
                len2(d_per_qh, "d_per_qh")?;
                len2(alpha_per_qh, "alpha_per_qh")?;
                if alpha_per_qh.iter().flatten().any(|a| *a > 1.0) {
                    return bad("alpha_per_qh entries must lie in [0, 1]");
                }
            }
            PolicyParams::GreedyFixed { d_per_qh, alpha } => {
                len2(d_per_qh, "d_per_qh")?;
                if !(0.0..=1.0).contains(alpha) {
                    return bad("alpha must lie in [0, 1]");
                }
            }
            PolicyParams::Hybrid1 { d_per_q, tt_per_h, alpha } => {
                len(d_per_q, nq, "d_per_q")?;
                len(tt_per_h, nh, "tt_per_h")?;
                if !open_unit(*alpha) {
                    return bad("alpha must lie in (0, 1)");
                }
            }
            PolicyParams::Hybrid2 { d_per_q, ts_per_q, alpha } => {
                len(d_per_q, nq, "d_per_q")?;
                len(ts_per_q, nq, "ts_per_q")?;
                if !open_unit(*alpha) {
                    return bad("alpha must lie in (0, 1)");
                }
            }
            PolicyParams::Analog { tt_per_qh, epsilon } => {
                len2(tt_per_qh, "tt_per_qh")?;
                if !(*epsilon >= 0.0) {
                    return bad("epsilon must be nonnegative");
                }
            }
            PolicyParams::AnalogGreedy => {}
        }
        Ok(())
    }

    /// Per-slot decision. Never spends more than `input.energy`, given that
    /// the arrival is already included in it.
    pub fn decide(&self, input: &DecisionInput) -> Result<Action, PolicyError> {
        let (qi, hi) = (input.q_index, input.h_index);
        let e = input.energy;
        let arrival = input.arrival.min(e);
        let act = match self {
            PolicyParams::Do { d_per_q, ts_per_q, tt_per_h, alpha, epsilon } => Action {
                d: Some(get(d_per_q, qi, qi, hi)?),
                ts: clamp0(((1.0 - alpha) * e - epsilon).min(get(ts_per_q, qi, qi, hi)?)),
                tt: clamp0((alpha * e - epsilon).min(get(tt_per_h, hi, qi, hi)?)),
            },
            PolicyParams::Greedy { d_per_qh, alpha_per_qh } => {
                let a = get2(alpha_per_qh, qi, hi)?;
                Action { d: Some(get2(d_per_qh, qi, hi)?), ts: a * arrival, tt: (1.0 - a) * arrival }
            }
            PolicyParams::GreedyFixed { d_per_qh, alpha } => Action {
                d: Some(get2(d_per_qh, qi, hi)?),
                ts: alpha * arrival,
                tt: (1.0 - alpha) * arrival,
            },
            PolicyParams::Hybrid1 { d_per_q, tt_per_h, alpha } => Action {
                d: Some(get(d_per_q, qi, qi, hi)?),
                ts: (1.0 - alpha) * arrival,
                tt: clamp0((alpha * e).min(get(tt_per_h, hi, qi, hi)?)),
            },
            PolicyParams::Hybrid2 { d_per_q, ts_per_q, alpha } => Action {
                d: Some(get(d_per_q, qi, qi, hi)?),
                ts: clamp0(((1.0 - alpha) * e).min(get(ts_per_q, qi, qi, hi)?)),
                tt: alpha * arrival,
            },
            PolicyParams::Analog { tt_per_qh, epsilon } => Action {
                d: None,
                ts: 0.0,
                tt: clamp0((e - epsilon).min(get2(tt_per_qh, qi, hi)?)),
            },
            PolicyParams::AnalogGreedy => Action { d: None, ts: 0.0, tt: arrival },
        };
        Ok(act)
    }

    /// Builds a constant-state DO witness with the default reserve.
    pub fn do_single(spec: &SensorSpec, d: f64, ts: f64, tt: f64, alpha: f64) -> Self {
        PolicyParams::Do {
            d_per_q: vec![d],
            ts_per_q: vec![ts],
            tt_per_h: vec![tt],
            alpha,
            epsilon: spec.epsilon(),
        }
    }
}
