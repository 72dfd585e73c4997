//! WebAssembly bindings for the demo page in `www/`.
//!
//! Every export takes plain numbers and strings and returns JSON, so the page
//! needs no glue beyond `JSON.parse`.

use energy_neutral::feasibility::region::{region_sweep, SweepAxes, SweepOptions};
use energy_neutral::feasibility::{synthesize, waterfill::waterfill};
use energy_neutral::policies::PolicyClass;
use energy_neutral::presets::{self, RegionSetup};
use serde::Serialize;
use wasm_bindgen::prelude::*;

fn setup(preset: &str, points: usize) -> Result<RegionSetup, String> {
    presets::region(preset, Some(points)).ok_or_else(|| format!("unknown preset `{preset}`"))
}

/// Axes holding the single point `(x, y)` in the preset's coordinates.
fn single_point(axes: &SweepAxes, x: f64, y: f64) -> SweepAxes {
    match axes {
        SweepAxes::ConstantState { .. } => SweepAxes::ConstantState { q_values: vec![x], h_values: vec![y] },
        SweepAxes::TwoState { q_states, h_states, .. } => {
            SweepAxes::TwoState { q_states: *q_states, h_states: *h_states, pw_q_values: vec![x], pw_h_values: vec![y] }
        }
    }
}

fn json(value: &impl Serialize) -> String {
    serde_json::to_string(value).expect("plain data serializes")
}

pub fn check_point_json(preset: &str, class: &str, x: f64, y: f64, d_bar: f64) -> Result<String, String> {
    let class: PolicyClass = class.parse()?;
    let s = setup(preset, 1)?;
    let spec = single_point(&s.axes, x, y).spec_at(&s.template, 0, 0).map_err(|e| e.to_string())?;
    Ok(json(&synthesize(class, &spec, d_bar)))
}

#[derive(Serialize)]
struct Sweep {
    axis1: Vec<f64>,
    axis2: Vec<f64>,
    log_axes: bool,
    /// Row-major, axis 1 outer.
    feasible: Vec<bool>,
    rate_margin: Vec<Option<f64>>,
}

pub fn sweep_json(preset: &str, class: &str, points: usize, d_bar: f64) -> Result<String, String> {
    let class: PolicyClass = class.parse()?;
    if !(2..=60).contains(&points) {
        return Err("points must be between 2 and 60".into());
    }
    let s = setup(preset, points)?;
    let g = region_sweep(&s.template, &s.axes, d_bar, class, &SweepOptions::default()).map_err(|e| e.to_string())?;
    Ok(json(&Sweep {
        log_axes: matches!(s.axes, SweepAxes::ConstantState { .. }),
        feasible: g.cells.iter().map(|c| c.feasible).collect(),
        rate_margin: g.cells.iter().map(|c| c.margins.rate).collect(),
        axis1: g.axis1,
        axis2: g.axis2,
    }))
}

#[derive(Serialize)]
struct Fill {
    level: f64,
    energy: Vec<f64>,
}

pub fn waterfill_json(gains: &[f64], pmf: &[f64], budget: f64) -> Result<String, String> {
    let total: f64 = pmf.iter().sum();
    if pmf.iter().any(|p| *p < 0.0) || total <= 0.0 {
        return Err("probabilities must be nonnegative and not all zero".into());
    }
    let pmf: Vec<f64> = pmf.iter().map(|p| p / total).collect();
    let w = waterfill(gains, &pmf, budget).map_err(|e| e.to_string())?;
    Ok(json(&Fill { level: w.level, energy: w.energy }))
}

/// Synthesizes a policy of `class` at one point of a region preset. For the
/// constant-state presets `(x, y)` is `(q, h)`; for the two-state ones it is
/// the pair of worse-state probabilities.
#[wasm_bindgen]
pub fn check_point(preset: &str, class: &str, x: f64, y: f64, d_bar: f64) -> Result<String, JsValue> {
    check_point_json(preset, class, x, y, d_bar).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn sweep(preset: &str, class: &str, points: usize, d_bar: f64) -> Result<String, JsValue> {
    sweep_json(preset, class, points, d_bar).map_err(|e| JsValue::from_str(&e))
}

/// Energy per channel state; `pmf` is normalized first.
#[wasm_bindgen]
pub fn water_fill(gains: &[f64], pmf: &[f64], budget: f64) -> Result<String, JsValue> {
    waterfill_json(gains, pmf, budget).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn region_presets() -> String {
    json(&presets::REGION_PRESETS)
}

#[wasm_bindgen]
pub fn class_names() -> String {
    json(&PolicyClass::ALL.map(|c| c.name()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    #[test]
    fn point_matches_sweep_cell() {
        let v: Value = serde_json::from_str(&sweep_json("matched", "do", 5, 0.8).unwrap()).unwrap();
        let q = v["axis1"][2].as_f64().unwrap();
        let h = v["axis2"][3].as_f64().unwrap();
        let p: Value = serde_json::from_str(&check_point_json("matched", "do", q, h, 0.8).unwrap()).unwrap();
        assert_eq!(p["feasible"], v["feasible"][2 * 5 + 3]);
        assert_eq!(v["log_axes"], true);
    }

    #[test]
    fn two_state_point() {
        let p: Value = serde_json::from_str(&check_point_json("spread-states", "greedy", 0.0, 0.0, 0.8).unwrap()).unwrap();
        assert_eq!(p["class"], "greedy");
    }

    #[test]
    fn waterfill_meets_budget() {
        let v: Value = serde_json::from_str(&waterfill_json(&[0.5, 2.0, 8.0], &[1.0, 1.0, 2.0], 0.5).unwrap()).unwrap();
        let e: Vec<f64> = v["energy"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
        let used = (e[0] + e[1] + 2.0 * e[2]) / 4.0;
        assert!((used - 0.5).abs() < 1e-12);
        assert_eq!(e[0], 0.0);
    }

    #[test]
    fn bad_input_is_an_error() {
        assert!(check_point_json("nope", "do", 1.0, 1.0, 0.8).is_err());
        assert!(sweep_json("matched", "psychic", 5, 0.8).is_err());
        assert!(sweep_json("matched", "do", 500, 0.8).is_err());
        assert!(waterfill_json(&[1.0], &[0.0], 1.0).is_err());
    }
}
