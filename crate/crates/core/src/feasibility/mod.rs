//! Feasibility conditions for each policy class, parameter synthesis, the
//! minimal supportable distortion, and achievable-region sweeps.
//!
//! A class is feasible for a distortion target when its mean compression
//! rate stays strictly below its mean channel rate (or is exactly zero),
//! the mean distortion meets the target and the energy budgets hold.

pub mod expect;
pub mod region;
pub mod source;
pub mod waterfill;

use serde::{Deserialize, Serialize};

use crate::models::{analog_mmse, SensorSpec, SourceModel};
use crate::policies::{PolicyClass, PolicyError, PolicyParams};

pub use expect::{mean_channel_rate, mean_source_rate};
pub use region::{region_sweep, RegionCell, RegionGrid, SweepAxes, SweepOptions};
pub use source::{allocate_source, SourceAllocation};
pub use waterfill::{waterfill, waterfill_weighted, WaterFill};

use source::dot;

/// Minimum gap, in bits per slot, between mean channel and source rates.
pub const RATE_SLACK: f64 = 1e-12;

/// Default number of points in the channel-share grid.
pub const DEFAULT_ALPHA_POINTS: usize = 64;

/// Slack of each condition: positive means satisfied with room to spare.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Margins {
    /// Mean channel rate minus mean source rate (bits per slot).
    pub rate: Option<f64>,
    /// Target minus mean distortion.
    pub distortion: f64,
    /// Unused source energy budget.
    pub energy_source: Option<f64>,
    /// Unused channel (or total, for uncoded transmission) energy budget.
    pub energy_channel: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub feasible: bool,
    pub class: PolicyClass,
    /// Parameters that satisfy every condition; present iff `feasible`.
    pub witness: Option<PolicyParams>,
    pub margins: Margins,
    pub mean_source_rate: Option<f64>,
    pub mean_channel_rate: Option<f64>,
}

impl FeasibilityReport {
    pub(crate) fn infeasible(class: PolicyClass) -> Self {
        FeasibilityReport {
            feasible: false,
            class,
            witness: None,
            margins: Margins {
                rate: None,
                distortion: f64::NEG_INFINITY,
                energy_source: None,
                energy_channel: None,
            },
            mean_source_rate: None,
            mean_channel_rate: None,
        }
    }

    /// Rate margin, or `-inf` when the class has no rate condition or no
    /// finite allocation was found.
    pub fn rate_margin(&self) -> f64 {
        self.margins.rate.unwrap_or(f64::NEG_INFINITY)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthOptions {
    pub alpha_points: usize,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions { alpha_points: DEFAULT_ALPHA_POINTS }
    }
}

impl SynthOptions {
    /// Midpoint grid on (0, 1).
    pub fn alphas(&self) -> Vec<f64> {
        let n = self.alpha_points.max(1);
        (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect()
    }
}

pub(crate) fn rate_condition(mean_f: f64, mean_g: f64) -> bool {
    mean_f == 0.0 || mean_g - mean_f > RATE_SLACK
}

pub(crate) fn report(
    class: PolicyClass,
    params: &PolicyParams,
    mean_f: f64,
    mean_g: f64,
    dist_margin: f64,
    es: Option<f64>,
    ec: Option<f64>,
) -> FeasibilityReport {
    let feasible = rate_condition(mean_f, mean_g)
        && dist_margin >= 0.0
        && es.is_none_or(|x| x >= 0.0)
        && ec.is_none_or(|x| x >= 0.0);
    FeasibilityReport {
        feasible,
        class,
        witness: feasible.then(|| params.clone()),
        margins: Margins { rate: Some(mean_g - mean_f), distortion: dist_margin, energy_source: es, energy_channel: ec },
        mean_source_rate: Some(mean_f),
        mean_channel_rate: Some(mean_g),
    }
}

pub(crate) fn rate_or_inf(spec: &SensorSpec, d: f64, ts: f64, q: f64) -> f64 {
    spec.source_rate(d, ts, q).unwrap_or(f64::INFINITY)
}

/// Weighted sum that ignores zero-probability terms (which may be infinite).
pub(crate) fn expect_over(p: &[f64], mut f: impl FnMut(usize) -> f64) -> f64 {
    p.iter().enumerate().filter(|(_, p)| **p > 0.0).map(|(i, p)| p * f(i)).sum()
}

fn expect_over2(pq: &[f64], ph: &[f64], mut f: impl FnMut(usize, usize) -> f64) -> f64 {
    let mut s = 0.0;
    for (i, a) in pq.iter().enumerate() {
        for (j, b) in ph.iter().enumerate() {
            if a * b > 0.0 {
                s += a * b * f(i, j);
            }
        }
    }
    s
}

/// Received distortion of an uncoded slot; `d_max` where the model is
/// undefined (no observation).
pub fn analog_distortion(spec: &SensorSpec, tt: f64, q: f64, h: f64) -> f64 {
    let d_max = spec.source.d_max();
    analog_mmse(&spec.geometry, tt, q, h, d_max).unwrap_or(d_max)
}

/// Conditions for the buffered distortion-optimal class.
pub fn check_do(params: &PolicyParams, spec: &SensorSpec, d_bar: f64) -> Result<FeasibilityReport, PolicyError> {
    let PolicyParams::Do { d_per_q, ts_per_q, tt_per_h, alpha, epsilon } = params else {
        return Err(PolicyError::Invalid("expected distortion-optimal parameters".into()));
    };
    params.validate(&spec.env)?;
    let env = &spec.env;
    let e_mean = env.mean_energy();
    let mean_f = expect_over(&env.q_pmf, |i| rate_or_inf(spec, d_per_q[i], ts_per_q[i], env.q_support[i]));
    let mean_g = expect_over(&env.h_pmf, |j| spec.channel_rate(env.h_support[j], tt_per_h[j]));
    Ok(report(
        PolicyClass::Do,
        params,
        mean_f,
        mean_g,
        d_bar - dot(&env.q_pmf, d_per_q),
        Some((1.0 - alpha) * e_mean - epsilon - dot(&env.q_pmf, ts_per_q)),
        Some(alpha * e_mean - epsilon - dot(&env.h_pmf, tt_per_h)),
    ))
}

/// Conditions for the greedy classes, with expectations over the harvest.
pub fn check_greedy(params: &PolicyParams, spec: &SensorSpec, d_bar: f64) -> Result<FeasibilityReport, PolicyError> {
    let (d, alpha_at): (&Vec<Vec<f64>>, Box<dyn Fn(usize, usize) -> f64>) = match params {
        PolicyParams::Greedy { d_per_qh, alpha_per_qh } => {
            (d_per_qh, Box::new(move |i, j| alpha_per_qh[i][j]))
        }
        PolicyParams::GreedyFixed { d_per_qh, alpha } => {
            let a = *alpha;
            (d_per_qh, Box::new(move |_, _| a))
        }
        _ => return Err(PolicyError::Invalid("expected greedy parameters".into())),
    };
    params.validate(&spec.env)?;
    let env = &spec.env;
    let mean_f = expect_over2(&env.q_pmf, &env.h_pmf, |i, j| {
        mean_source_rate(spec, env.q_support[i], d[i][j], alpha_at(i, j))
    });
    let mean_g = expect_over2(&env.q_pmf, &env.h_pmf, |i, j| {
        mean_channel_rate(spec, env.h_support[j], 1.0 - alpha_at(i, j))
    });
    let mean_d = expect_over2(&env.q_pmf, &env.h_pmf, |i, j| d[i][j]);
    Ok(report(params.class(), params, mean_f, mean_g, d_bar - mean_d, None, None))
}

/// Conditions for the two single-buffer hybrids. The reserve is the
/// sensor's default.
pub fn check_hybrid(params: &PolicyParams, spec: &SensorSpec, d_bar: f64) -> Result<FeasibilityReport, PolicyError> {
    params.validate(&spec.env)?;
    let env = &spec.env;
    let e_mean = env.mean_energy();
    let eps = spec.epsilon();
    match params {
        PolicyParams::Hybrid1 { d_per_q, tt_per_h, alpha } => {
            let mean_f = expect_over(&env.q_pmf, |i| mean_source_rate(spec, env.q_support[i], d_per_q[i], 1.0 - alpha));
            let mean_g = expect_over(&env.h_pmf, |j| spec.channel_rate(env.h_support[j], tt_per_h[j]));
            Ok(report(
                PolicyClass::Hybrid1,
                params,
                mean_f,
                mean_g,
                d_bar - dot(&env.q_pmf, d_per_q),
                None,
                Some(alpha * e_mean - eps - dot(&env.h_pmf, tt_per_h)),
            ))
        }
        PolicyParams::Hybrid2 { d_per_q, ts_per_q, alpha } => {
            let mean_f = expect_over(&env.q_pmf, |i| rate_or_inf(spec, d_per_q[i], ts_per_q[i], env.q_support[i]));
            let mean_g = expect_over(&env.h_pmf, |j| mean_channel_rate(spec, env.h_support[j], *alpha));
            Ok(report(
                PolicyClass::Hybrid2,
                params,
                mean_f,
                mean_g,
                d_bar - dot(&env.q_pmf, d_per_q),
                Some((1.0 - alpha) * e_mean - eps - dot(&env.q_pmf, ts_per_q)),
                None,
            ))
        }
        _ => Err(PolicyError::Invalid("expected hybrid parameters".into())),
    }
}

/// Distortion and energy conditions for uncoded transmission.
pub fn check_analog(params: &PolicyParams, spec: &SensorSpec, d_bar: f64) -> Result<FeasibilityReport, PolicyError> {
    params.validate(&spec.env)?;
    let env = &spec.env;
    let (mean_d, energy_margin) = match params {
        PolicyParams::Analog { tt_per_qh, .. } => (
            expect_over2(&env.q_pmf, &env.h_pmf, |i, j| {
                analog_distortion(spec, tt_per_qh[i][j], env.q_support[i], env.h_support[j])
            }),
            Some(env.mean_energy() - expect_over2(&env.q_pmf, &env.h_pmf, |i, j| tt_per_qh[i][j])),
        ),
        PolicyParams::AnalogGreedy => (
            expect_over2(&env.q_pmf, &env.h_pmf, |i, j| {
                let (q, h) = (env.q_support[i], env.h_support[j]);
                env.energy.expect(|e| analog_distortion(spec, e, q, h))
            }),
            None,
        ),
        _ => return Err(PolicyError::Invalid("expected analog parameters".into())),
    };
    let dist = d_bar - mean_d;
    let feasible = dist >= 0.0 && energy_margin.is_none_or(|x| x >= 0.0);
    Ok(FeasibilityReport {
        feasible,
        class: params.class(),
        witness: feasible.then(|| params.clone()),
        margins: Margins { rate: None, distortion: dist, energy_source: None, energy_channel: energy_margin },
        mean_source_rate: None,
        mean_channel_rate: None,
    })
}

/// Dispatches to the checker of the parameters' class.
pub fn check(params: &PolicyParams, spec: &SensorSpec, d_bar: f64) -> Result<FeasibilityReport, PolicyError> {
    match params.class() {
        PolicyClass::Do => check_do(params, spec, d_bar),
        PolicyClass::Greedy | PolicyClass::GreedyFixed => check_greedy(params, spec, d_bar),
        PolicyClass::Hybrid1 | PolicyClass::Hybrid2 => check_hybrid(params, spec, d_bar),
        PolicyClass::Analog | PolicyClass::AnalogGreedy => check_analog(params, spec, d_bar),
    }
}

/// Channel side of the buffered classes: water-filled energies and mean
/// rate on a budget.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelAllocation {
    pub tt: Vec<f64>,
    pub mean_rate: f64,
}

pub fn allocate_channel(spec: &SensorSpec, budget: f64) -> ChannelAllocation {
    let env = &spec.env;
    let mut tt = waterfill::waterfill_lenient(&env.h_support, &env.h_pmf, budget);
    source::fit_budget(&env.h_pmf, &mut tt, budget);
    let mean_rate = expect_over(&env.h_pmf, |j| spec.channel_rate(env.h_support[j], tt[j]));
    ChannelAllocation { tt, mean_rate }
}

/// Source frontier of the buffered class over the channel-share grid.
pub fn do_source_frontier(spec: &SensorSpec, d_bar: f64, alphas: &[f64]) -> Vec<Option<SourceAllocation>> {
    let e = spec.env.mean_energy();
    let eps = spec.epsilon();
    alphas.iter().map(|a| allocate_source(spec, d_bar, (1.0 - a) * e - eps)).collect()
}

/// Channel frontier of the buffered class over the channel-share grid.
pub fn do_channel_frontier(spec: &SensorSpec, alphas: &[f64]) -> Vec<ChannelAllocation> {
    let e = spec.env.mean_energy();
    let eps = spec.epsilon();
    alphas.iter().map(|a| allocate_channel(spec, a * e - eps)).collect()
}

/// Picks the channel share with the largest rate margin and checks the
/// resulting witness.
pub fn combine_do(
    spec: &SensorSpec,
    d_bar: f64,
    alphas: &[f64],
    src: &[Option<SourceAllocation>],
    ch: &[ChannelAllocation],
) -> FeasibilityReport {
    let best = (0..alphas.len())
        .filter_map(|k| src[k].as_ref().map(|s| (k, s)))
        .max_by(|a, b| {
            let ma = ch[a.0].mean_rate - a.1.mean_rate;
            let mb = ch[b.0].mean_rate - b.1.mean_rate;
            ma.total_cmp(&mb).then(b.0.cmp(&a.0))
        });
    let Some((k, s)) = best else {
        return FeasibilityReport::infeasible(PolicyClass::Do);
    };
    let params = PolicyParams::Do {
        d_per_q: s.d.clone(),
        ts_per_q: s.ts.clone(),
        tt_per_h: ch[k].tt.clone(),
        alpha: alphas[k],
        epsilon: spec.epsilon(),
    };
    check_do(&params, spec, d_bar).expect("synthesized parameters match the environment")
}

/// Searches the buffered class for a feasible member.
pub fn synthesize_do(spec: &SensorSpec, d_bar: f64) -> FeasibilityReport {
    synthesize_do_with(spec, d_bar, &SynthOptions::default())
}

pub fn synthesize_do_with(spec: &SensorSpec, d_bar: f64, opts: &SynthOptions) -> FeasibilityReport {
    let alphas = opts.alphas();
    let src = do_source_frontier(spec, d_bar, &alphas);
    let ch = do_channel_frontier(spec, &alphas);
    combine_do(spec, d_bar, &alphas, &src, &ch)
}

/// Distortion minimizing `E[f^q(D, a E)] + nu D` for one observation state,
/// with the attained expected rate.
fn greedy_d(spec: &SensorSpec, q: f64, a: f64, nu: f64) -> (f64, f64) {
    match &spec.source {
        SourceModel::GaussianIid(m) => {
            let psi = expect::mean_energy_factor(m, spec.geometry.bandwidth_ratio(), a, &spec.env.energy);
            let dm = m.d_mmse(q.max(0.0));
            if !psi.is_finite() || dm >= m.d_max {
                return (m.d_max, 0.0);
            }
            let k = spec.geometry.source_samples() * psi;
            let d = (dm + k / (nu * std::f64::consts::LN_2)).min(m.d_max);
            (d, mean_source_rate(spec, q, d, a))
        }
        SourceModel::GaussMarkov(m) => {
            let hi = m.zeta * m.d_max;
            let cost = |d: f64| mean_source_rate(spec, q, d, a) + nu * d;
            let d = golden_min(1e-9 * hi, hi, 80, cost);
            (d, mean_source_rate(spec, q, d, a))
        }
    }
}

/// Golden-section minimizer of a unimodal function on `[lo, hi]`.
fn golden_min(mut lo: f64, mut hi: f64, iters: usize, f: impl Fn(f64) -> f64) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..iters {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        x1
    } else {
        x2
    }
}

/// Log-spaced multiplier grid followed by bisection on the best bracket;
/// `eval(nu)` returns `(mean distortion, objective margin, payload)`.
/// Returns the feasible (`mean distortion <= d_bar`) payload of largest margin.
fn search_multiplier<T>(d_bar: f64, eval: impl Fn(f64) -> (f64, f64, T)) -> Option<(f64, T)> {
    let mut best: Option<(f64, T)> = None;
    let keep = |d: f64, m: f64, t: T, best: &mut Option<(f64, T)>| {
        if d <= d_bar && best.as_ref().is_none_or(|b| m > b.0) {
            *best = Some((m, t));
        }
    };
    let grid: Vec<f64> = (0..=60).map(|k| 10f64.powf(-4.0 + 0.25 * k as f64)).collect();
    let mut last_infeasible = None;
    let mut first_feasible = None;
    for &nu in &grid {
        let (d, m, t) = eval(nu);
        if d <= d_bar {
            if first_feasible.is_none() {
                first_feasible = Some(nu);
            }
        } else {
            last_infeasible = Some(nu);
        }
        keep(d, m, t, &mut best);
    }
    // Refine the switch from infeasible to feasible, where the margin is best.
    if let (Some(mut lo), Some(mut hi)) = (last_infeasible, first_feasible) {
        if lo < hi {
            for _ in 0..80 {
                let mid = (lo * hi).sqrt();
                let (d, m, t) = eval(mid);
                let ok = d <= d_bar;
                keep(d, m, t, &mut best);
                if ok {
                    hi = mid;
                } else {
                    lo = mid;
                }
                if hi / lo < 1.0 + 1e-13 {
                    break;
                }
            }
        }
    }
    best
}

/// Per-state distortions minimizing `sum p_q E[f^q(D_q, a E)]` subject to
/// the mean distortion target.
fn allocate_d_greedy(spec: &SensorSpec, d_bar: f64, a: f64) -> Option<(Vec<f64>, f64)> {
    let env = &spec.env;
    let d_max = spec.source.d_max();
    if d_max <= d_bar {
        return Some((vec![d_max; env.q_support.len()], 0.0));
    }
    let eval = |nu: f64| {
        let sol: Vec<(f64, f64)> = env.q_support.iter().map(|&q| greedy_d(spec, q, a, nu)).collect();
        let d: Vec<f64> = sol.iter().map(|s| s.0).collect();
        let f = expect_over(&env.q_pmf, |i| sol[i].1);
        (dot(&env.q_pmf, &d), -f, (d, f))
    };
    search_multiplier(d_bar, eval).and_then(|(_, (d, f))| f.is_finite().then_some((d, f)))
}

/// Source frontier of the buffered-channel hybrid: per-state distortions and
/// expected rate with source share `1 - alpha`.
pub fn hybrid1_source_frontier(spec: &SensorSpec, d_bar: f64, alphas: &[f64]) -> Vec<Option<(Vec<f64>, f64)>> {
    alphas.iter().map(|a| allocate_d_greedy(spec, d_bar, 1.0 - a)).collect()
}

pub fn combine_hybrid1(
    spec: &SensorSpec,
    d_bar: f64,
    alphas: &[f64],
    src: &[Option<(Vec<f64>, f64)>],
    ch: &[ChannelAllocation],
) -> FeasibilityReport {
    let best = (0..alphas.len())
        .filter_map(|k| src[k].as_ref().map(|s| (k, s)))
        .max_by(|a, b| (ch[a.0].mean_rate - a.1 .1).total_cmp(&(ch[b.0].mean_rate - b.1 .1)).then(b.0.cmp(&a.0)));
    let Some((k, s)) = best else {
        return FeasibilityReport::infeasible(PolicyClass::Hybrid1);
    };
    let params = PolicyParams::Hybrid1 { d_per_q: s.0.clone(), tt_per_h: ch[k].tt.clone(), alpha: alphas[k] };
    check_hybrid(&params, spec, d_bar).expect("synthesized parameters match the environment")
}

/// Searches the buffered-channel hybrid for a feasible member.
pub fn synthesize_hybrid1(spec: &SensorSpec, d_bar: f64, opts: &SynthOptions) -> FeasibilityReport {
    let alphas = opts.alphas();
    let src = hybrid1_source_frontier(spec, d_bar, &alphas);
    let ch = do_channel_frontier(spec, &alphas);
    combine_hybrid1(spec, d_bar, &alphas, &src, &ch)
}

/// Searches the buffered-source hybrid for a feasible member.
pub fn synthesize_hybrid2(spec: &SensorSpec, d_bar: f64, opts: &SynthOptions) -> FeasibilityReport {
    let alphas = opts.alphas();
    let src = do_source_frontier(spec, d_bar, &alphas);
    let ch = hybrid2_channel_frontier(spec, &alphas);
    combine_hybrid2(spec, d_bar, &alphas, &src, &ch)
}

/// Mean greedy channel rate `sum p_h E[g^h(a E)]` over the share grid.
pub fn hybrid2_channel_frontier(spec: &SensorSpec, alphas: &[f64]) -> Vec<f64> {
    let env = &spec.env;
    alphas
        .iter()
        .map(|a| expect_over(&env.h_pmf, |j| mean_channel_rate(spec, env.h_support[j], *a)))
        .collect()
}

pub fn combine_hybrid2(
    spec: &SensorSpec,
    d_bar: f64,
    alphas: &[f64],
    src: &[Option<SourceAllocation>],
    ch: &[f64],
) -> FeasibilityReport {
    let best = (0..alphas.len())
        .filter_map(|k| src[k].as_ref().map(|s| (k, s)))
        .max_by(|a, b| (ch[a.0] - a.1.mean_rate).total_cmp(&(ch[b.0] - b.1.mean_rate)).then(b.0.cmp(&a.0)));
    let Some((k, s)) = best else {
        return FeasibilityReport::infeasible(PolicyClass::Hybrid2);
    };
    let params = PolicyParams::Hybrid2 { d_per_q: s.d.clone(), ts_per_q: s.ts.clone(), alpha: alphas[k] };
    check_hybrid(&params, spec, d_bar).expect("synthesized parameters match the environment")
}

/// Searches the fixed-split greedy class.
pub fn synthesize_greedy_fixed(spec: &SensorSpec, d_bar: f64, opts: &SynthOptions) -> FeasibilityReport {
    match greedy_fixed_params(spec, d_bar, opts) {
        Some(p) => check_greedy(&p, spec, d_bar).expect("synthesized parameters match the environment"),
        None => FeasibilityReport::infeasible(PolicyClass::GreedyFixed),
    }
}

/// Best fixed-split parameters by rate margin, feasible or not.
fn greedy_fixed_params(spec: &SensorSpec, d_bar: f64, opts: &SynthOptions) -> Option<PolicyParams> {
    let env = &spec.env;
    let nh = env.h_support.len();
    let eval = |alpha: f64| -> Option<(f64, Vec<f64>)> {
        let (d, f) = allocate_d_greedy(spec, d_bar, alpha)?;
        let g = expect_over(&env.h_pmf, |j| mean_channel_rate(spec, env.h_support[j], 1.0 - alpha));
        Some((g - f, d))
    };
    let n = opts.alpha_points.max(2);
    let grid: Vec<f64> = (0..=n).map(|k| k as f64 / n as f64).collect();
    let mut best: Option<(f64, f64, Vec<f64>)> = None;
    for &a in &grid {
        if let Some((m, d)) = eval(a) {
            if best.as_ref().is_none_or(|b| m > b.0) {
                best = Some((m, a, d));
            }
        }
    }
    let (_, a0, _) = best.clone()?;
    // Golden refinement around the best grid point.
    let step = 1.0 / n as f64;
    let a_ref = golden_min((a0 - step).max(0.0), (a0 + step).min(1.0), 40, |a| {
        eval(a).map(|x| -x.0).unwrap_or(f64::INFINITY)
    });
    if let Some((m, d)) = eval(a_ref) {
        if best.as_ref().is_none_or(|b| m > b.0) {
            best = Some((m, a_ref, d));
        }
    }
    let (_, alpha, d) = best.expect("grid search found a candidate");
    Some(PolicyParams::GreedyFixed { d_per_qh: d.iter().map(|&x| vec![x; nh]).collect(), alpha })
}

/// Minimizer over `[0, 1]` of a split cost: grid of 65 points, then a
/// golden-section polish around the best one.
fn best_split(cost: impl Fn(f64) -> f64) -> f64 {
    let n = 64;
    let mut best = (f64::INFINITY, 0.0);
    for k in 0..=n {
        let a = k as f64 / n as f64;
        let c = cost(a);
        if c < best.0 {
            best = (c, a);
        }
    }
    let step = 1.0 / n as f64;
    let a = golden_min((best.1 - step).max(0.0), (best.1 + step).min(1.0), 40, &cost);
    if cost(a) <= best.0 {
        a
    } else {
        best.1
    }
}

/// Best split and distortion of one `(q, h)` cell of the adaptive greedy
/// class for a distortion multiplier: `(alpha, D, E f, E g)`.
fn greedy_cell(spec: &SensorSpec, q: f64, h: f64, nu: f64) -> (f64, f64, f64, f64) {
    let eval = |a: f64| {
        let (d, f) = greedy_d(spec, q, a, nu);
        let g = mean_channel_rate(spec, h, 1.0 - a);
        (f + nu * d - g, d, f, g)
    };
    let a = best_split(|a| eval(a).0);
    let (_, d, f, g) = eval(a);
    (a, d, f, g)
}

/// Cell margin `E g - E f` at a fixed distortion with the best split.
fn greedy_cell_at(spec: &SensorSpec, q: f64, h: f64, d: f64) -> (f64, f64) {
    let margin = |a: f64| mean_channel_rate(spec, h, 1.0 - a) - mean_source_rate(spec, q, d, a);
    let a = best_split(|a| -margin(a));
    (a, margin(a))
}

/// The per-cell problem is not jointly convex in (split, distortion), so the
/// multiplier solution can leave distortion budget unused. Hands the unused
/// budget to whichever cell gains most, until none is left or nothing helps.
fn greedy_fill_slack(spec: &SensorSpec, d_bar: f64, d: &mut [Vec<f64>], a: &mut [Vec<f64>]) {
    let env = &spec.env;
    let d_max = spec.source.d_max();
    let cells: Vec<(usize, usize, f64)> = (0..env.q_support.len())
        .flat_map(|i| (0..env.h_support.len()).map(move |j| (i, j)))
        .map(|(i, j)| (i, j, env.q_pmf[i] * env.h_pmf[j]))
        .filter(|c| c.2 > 0.0)
        .collect();
    for _ in 0..cells.len() {
        let used: f64 = cells.iter().map(|&(i, j, w)| w * d[i][j]).sum();
        let slack = d_bar - used;
        if !(slack > 1e-12) {
            return;
        }
        let mut best: Option<(f64, usize, f64, f64)> = None;
        for (k, &(i, j, w)) in cells.iter().enumerate() {
            let (q, h) = (env.q_support[i], env.h_support[j]);
            let old = mean_channel_rate(spec, h, 1.0 - a[i][j]) - mean_source_rate(spec, q, d[i][j], a[i][j]);
            let nd = (d[i][j] + slack / w).min(d_max);
            // Stay inside the budget despite rounding.
            let nd = if used - w * d[i][j] + w * nd > d_bar { d[i][j] } else { nd };
            let (na, m) = greedy_cell_at(spec, q, h, nd);
            let gain = w * (m - old);
            if gain > 0.0 && best.is_none_or(|b| gain > b.0) {
                best = Some((gain, k, nd, na));
            }
        }
        let Some((_, k, nd, na)) = best else { return };
        let (i, j, _) = cells[k];
        d[i][j] = nd;
        a[i][j] = na;
    }
}

/// Searches the state-adaptive greedy class. The fixed-split optimum is a
/// member of this class and is kept when it does better.
pub fn synthesize_greedy(spec: &SensorSpec, d_bar: f64, opts: &SynthOptions) -> FeasibilityReport {
    let env = &spec.env;
    let (nq, nh) = (env.q_support.len(), env.h_support.len());
    let d_max = spec.source.d_max();
    type Cells = (Vec<Vec<f64>>, Vec<Vec<f64>>);
    let eval = |nu: f64| -> (f64, f64, Cells) {
        let mut d = vec![vec![d_max; nh]; nq];
        let mut a = vec![vec![0.5; nh]; nq];
        let (mut md, mut mf, mut mg) = (0.0, 0.0, 0.0);
        for i in 0..nq {
            for j in 0..nh {
                let w = env.q_pmf[i] * env.h_pmf[j];
                if w == 0.0 {
                    continue;
                }
                let (ac, dc, fc, gc) = greedy_cell(spec, env.q_support[i], env.h_support[j], nu);
                d[i][j] = dc;
                a[i][j] = ac;
                md += w * dc;
                mf += w * fc;
                mg += w * gc;
            }
        }
        (md, mg - mf, (d, a))
    };
    let adaptive = if d_max <= d_bar {
        // Zero-rate distortions; spend everything on the channel.
        Some(PolicyParams::Greedy { d_per_qh: vec![vec![d_max; nh]; nq], alpha_per_qh: vec![vec![0.0; nh]; nq] })
    } else {
        search_multiplier(d_bar, eval).map(|(_, (mut d, mut a))| {
            greedy_fill_slack(spec, d_bar, &mut d, &mut a);
            PolicyParams::Greedy { d_per_qh: d, alpha_per_qh: a }
        })
    };
    let from_fixed = greedy_fixed_params(spec, d_bar, opts).map(|w| match w {
        PolicyParams::GreedyFixed { d_per_qh, alpha } => {
            PolicyParams::Greedy { d_per_qh, alpha_per_qh: vec![vec![alpha; nh]; nq] }
        }
        _ => unreachable!("fixed-split synthesis returns its own class"),
    });
    let mut out: Option<FeasibilityReport> = None;
    for cand in adaptive.into_iter().chain(from_fixed) {
        let r = check_greedy(&cand, spec, d_bar).expect("synthesized parameters match the environment");
        let better = match &out {
            None => true,
            Some(o) => (r.feasible, r.rate_margin()) > (o.feasible, o.rate_margin()),
        };
        if better {
            out = Some(r);
        }
    }
    out.unwrap_or_else(|| FeasibilityReport::infeasible(PolicyClass::Greedy))
}

/// Minimum mean received distortion of uncoded transmission with an average
/// energy budget, and the per-(q, h) energies attaining it.
pub fn allocate_analog(spec: &SensorSpec, budget: f64) -> (Vec<Vec<f64>>, f64) {
    let env = &spec.env;
    let (nq, nh) = (env.q_support.len(), env.h_support.len());
    let b = spec.geometry.bandwidth_ratio();
    let d_max = spec.source.d_max();
    // -d mmse / d T at energy t.
    let slope = |q: f64, h: f64, t: f64| -> f64 {
        if !(q > 0.0 && h > 0.0) {
            return 0.0;
        }
        let (scale, k) = if b >= 1.0 { (1.0, b) } else { (b, 1.0) };
        let den = k * q * t + q + 1.0;
        let snr = k * q * h * t / den;
        let dsnr = k * q * h * (q + 1.0) / (den * den);
        let inv = snr + 1.0 / d_max;
        scale * dsnr / (inv * inv)
    };
    let t_of = |q: f64, h: f64, mu: f64| -> f64 {
        if slope(q, h, 0.0) <= mu {
            return 0.0;
        }
        let mut hi = 1.0;
        while slope(q, h, hi) > mu {
            hi *= 2.0;
            if hi > 1e12 {
                return hi;
            }
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if slope(q, h, mid) > mu {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * hi {
                break;
            }
        }
        lo
    };
    let alloc = |mu: f64| -> Vec<Vec<f64>> {
        (0..nq)
            .map(|i| (0..nh).map(|j| t_of(env.q_support[i], env.h_support[j], mu)).collect())
            .collect()
    };
    let used = |t: &Vec<Vec<f64>>| expect_over2(&env.q_pmf, &env.h_pmf, |i, j| t[i][j]);
    let mean_d = |t: &Vec<Vec<f64>>| {
        expect_over2(&env.q_pmf, &env.h_pmf, |i, j| analog_distortion(spec, t[i][j], env.q_support[i], env.h_support[j]))
    };
    if !(budget > 0.0) {
        let t = vec![vec![0.0; nh]; nq];
        let d = mean_d(&t);
        return (t, d);
    }
    // Bracket the multiplier: a large one allocates nothing.
    let mut lo = 1.0;
    while used(&alloc(lo)) <= budget && lo > 1e-30 {
        lo *= 1e-3;
    }
    let mut hi = 1.0;
    while used(&alloc(hi)) > budget {
        hi *= 1e3;
    }
    if used(&alloc(lo)) <= budget {
        let t = alloc(lo);
        let d = mean_d(&t);
        return (t, d);
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if !(mid > lo && mid < hi) {
            break;
        }
        if used(&alloc(mid)) > budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t = alloc(hi);
    let d = mean_d(&t);
    (t, d)
}

/// Searches buffered uncoded transmission (budget: mean harvest minus the
/// reserve).
pub fn synthesize_analog(spec: &SensorSpec, d_bar: f64) -> FeasibilityReport {
    let eps = spec.epsilon();
    let (t, _) = allocate_analog(spec, spec.env.mean_energy() - eps);
    let params = PolicyParams::Analog { tt_per_qh: t, epsilon: eps };
    check_analog(&params, spec, d_bar).expect("synthesized parameters match the environment")
}

/// Synthesis for any class with default options.
pub fn synthesize(class: PolicyClass, spec: &SensorSpec, d_bar: f64) -> FeasibilityReport {
    synthesize_with(class, spec, d_bar, &SynthOptions::default())
}

pub fn synthesize_with(class: PolicyClass, spec: &SensorSpec, d_bar: f64, opts: &SynthOptions) -> FeasibilityReport {
    match class {
        PolicyClass::Do => synthesize_do_with(spec, d_bar, opts),
        PolicyClass::Greedy => synthesize_greedy(spec, d_bar, opts),
        PolicyClass::GreedyFixed => synthesize_greedy_fixed(spec, d_bar, opts),
        PolicyClass::Hybrid1 => synthesize_hybrid1(spec, d_bar, opts),
        PolicyClass::Hybrid2 => synthesize_hybrid2(spec, d_bar, opts),
        PolicyClass::Analog => synthesize_analog(spec, d_bar),
        PolicyClass::AnalogGreedy => {
            check_analog(&PolicyParams::AnalogGreedy, spec, d_bar).expect("no parameters to mismatch")
        }
    }
}

/// Absolute tolerance of [`min_feasible_distortion`].
pub const MIN_DISTORTION_TOL: f64 = 1e-4;

/// Smallest target the buffered class supports, to within
/// [`MIN_DISTORTION_TOL`]; `None` when even `d_max` is out of reach.
pub fn min_feasible_distortion(spec: &SensorSpec) -> Option<f64> {
    min_feasible_distortion_with(spec, &SynthOptions::default())
}

pub fn min_feasible_distortion_with(spec: &SensorSpec, opts: &SynthOptions) -> Option<f64> {
    let d_max = spec.source.d_max();
    let feasible = |d: f64| synthesize_do_with(spec, d, opts).feasible;
    if !feasible(d_max) {
        return None;
    }
    let env = &spec.env;
    let mut lo = dot(&env.q_pmf, &env.q_support.iter().map(|&q| spec.source.distortion_floor(q)).collect::<Vec<_>>());
    let mut hi = d_max;
    while hi - lo > MIN_DISTORTION_TOL {
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}
