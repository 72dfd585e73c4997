//! Water-filling allocation of an average transmit-energy budget across
//! channel states.

use crate::models::ModelError;

/// Allocation `T_h = max(mu - 1/h, 0)` and its water level.
#[derive(Debug, Clone, PartialEq)]
pub struct WaterFill {
    pub level: f64,
    pub energy: Vec<f64>,
}

/// Maximizes `sum w_h log2(1 + h T_h)` subject to `sum w_h T_h = budget`.
///
/// The weights need not sum to one (scheduled channel shares, for example).
/// The level is found exactly by peeling states in order of decreasing
/// gain, so the budget is met to rounding error.
pub fn waterfill_weighted(gains: &[f64], weights: &[f64], budget: f64) -> Result<WaterFill, ModelError> {
    if gains.len() != weights.len() || gains.is_empty() {
        return Err(ModelError::Domain("gains and weights must be nonempty and equally long".into()));
    }
    if !(budget > 0.0) || !budget.is_finite() {
        return Err(ModelError::Domain(format!("budget {budget} must be positive")));
    }
    if gains.iter().any(|h| !(*h > 0.0) || !h.is_finite()) {
        return Err(ModelError::Domain("channel gains must be positive".into()));
    }
    if weights.iter().any(|w| !(*w >= 0.0)) || !weights.iter().any(|w| *w > 0.0) {
        return Err(ModelError::Domain("weights must be nonnegative and not all zero".into()));
    }
    let mut order: Vec<usize> = (0..gains.len()).filter(|&i| weights[i] > 0.0).collect();
    order.sort_by(|&a, &b| gains[b].total_cmp(&gains[a]));
    let mut wsum = 0.0;
    let mut inv_sum = 0.0;
    let mut level = 0.0;
    for (k, &i) in order.iter().enumerate() {
        wsum += weights[i];
        inv_sum += weights[i] / gains[i];
        level = (budget + inv_sum) / wsum;
        let next_floor = order.get(k + 1).map(|&j| 1.0 / gains[j]);
        match next_floor {
            Some(f) if level > f => continue,
            _ => break,
        }
    }
    let energy = gains.iter().map(|h| (level - 1.0 / h).max(0.0)).collect();
    Ok(WaterFill { level, energy })
}

/// Water-filling over a channel pmf.
pub fn waterfill(h_support: &[f64], h_pmf: &[f64], budget: f64) -> Result<WaterFill, ModelError> {
    waterfill_weighted(h_support, h_pmf, budget)
}

/// Like [`waterfill_weighted`] but tolerates zero gains (they get no
/// energy) and a nonpositive budget (nothing is allocated).
pub(crate) fn waterfill_lenient(gains: &[f64], weights: &[f64], budget: f64) -> Vec<f64> {
    let idx: Vec<usize> = (0..gains.len()).filter(|&i| gains[i] > 0.0 && weights[i] > 0.0).collect();
    let mut out = vec![0.0; gains.len()];
    if !(budget > 0.0) || idx.is_empty() {
        return out;
    }
    let g: Vec<f64> = idx.iter().map(|&i| gains[i]).collect();
    let w: Vec<f64> = idx.iter().map(|&i| weights[i]).collect();
    let wf = waterfill_weighted(&g, &w, budget).expect("inputs filtered to a valid instance");
    for (k, &i) in idx.iter().enumerate() {
        out[i] = wf.energy[k];
    }
    out
}
