//! Several sensors sharing one receiver by TDMA: each slot belongs to one
//! sensor, chosen at random with probabilities that may depend on the joint
//! channel state. Every sensor runs a buffered distortion-optimal policy;
//! only the scheduled one transmits.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::feasibility::region::par_map;
use crate::feasibility::source::{dot, fit_budget};
use crate::feasibility::waterfill::waterfill_lenient;
use crate::feasibility::{
    do_source_frontier, expect_over, rate_condition, rate_or_inf, report, FeasibilityReport, Margins, RegionCell,
    RegionGrid, SourceAllocation, SynthOptions,
};
use crate::models::{sample_index, Environment, ModelError, SensorSpec};
use crate::policies::{PolicyClass, PolicyError, PolicyParams};
use crate::simulator::{stream, SensorRuntime, SimError, Trace};

#[derive(Debug, Error)]
pub enum ScheduleError {
    #[error("invalid schedule: {0}")]
    Invariant(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

fn invariant<T>(msg: impl Into<String>) -> Result<T, ScheduleError> {
    Err(ScheduleError::Invariant(msg.into()))
}

/// Tolerance on probability sums.
pub const SIMPLEX_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultiSensorSpec {
    pub sensors: Vec<SensorSpec>,
    /// Law of the joint channel state over the product of the sensors'
    /// channel supports, first sensor slowest; independent when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub joint_h_pmf: Option<Vec<f64>>,
    pub d_bar: Vec<f64>,
}

impl MultiSensorSpec {
    pub fn independent(sensors: Vec<SensorSpec>, d_bar: Vec<f64>) -> Self {
        MultiSensorSpec { sensors, joint_h_pmf: None, d_bar }
    }

    pub fn len(&self) -> usize {
        self.sensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sensors.is_empty()
    }

    /// Per-sensor channel indices of each joint state.
    pub fn joint_states(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new()];
        for s in &self.sensors {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    (0..s.env.h_support.len()).map(move |j| {
                        let mut v = prefix.clone();
                        v.push(j);
                        v
                    })
                })
                .collect();
        }
        out
    }

    pub fn joint_pmf(&self) -> Vec<f64> {
        match &self.joint_h_pmf {
            Some(p) => p.clone(),
            None => self
                .joint_states()
                .iter()
                .map(|js| js.iter().zip(&self.sensors).map(|(&j, s)| s.env.h_pmf[j]).product())
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<(), ScheduleError> {
        if self.sensors.is_empty() {
            return invariant("at least one sensor is required");
        }
        if self.d_bar.len() != self.sensors.len() {
            return invariant("one distortion target per sensor is required");
        }
        for s in &self.sensors {
            s.validate()?;
        }
        let states = self.joint_states();
        let pmf = self.joint_pmf();
        if pmf.len() != states.len() {
            return invariant(format!("joint channel law has {} entries, expected {}", pmf.len(), states.len()));
        }
        crate::models::check_pmf(&pmf)?;
        for (l, s) in self.sensors.iter().enumerate() {
            for (j, p) in s.env.h_pmf.iter().enumerate() {
                let m: f64 = states.iter().zip(&pmf).filter(|(js, _)| js[l] == j).map(|(_, p)| p).sum();
                if (m - p).abs() > 1e-10 {
                    return invariant(format!("joint channel law disagrees with sensor {l}'s marginal"));
                }
            }
        }
        Ok(())
    }

    /// `w_l(h) = sum over joint states with h_l = h of Pr(joint) beta_l`.
    pub fn channel_weights(&self, l: usize, beta: &[Vec<f64>]) -> Vec<f64> {
        let mut w = vec![0.0; self.sensors[l].env.h_support.len()];
        for ((js, p), b) in self.joint_states().iter().zip(self.joint_pmf()).zip(beta) {
            w[js[l]] += p * b[l];
        }
        w
    }
}

fn check_simplex(row: &[f64]) -> Result<(), ScheduleError> {
    if row.iter().any(|b| !(0.0..=1.0).contains(b)) || (row.iter().sum::<f64>() - 1.0).abs() > SIMPLEX_TOL {
        return invariant("scheduling probabilities must be in [0, 1] and sum to 1");
    }
    Ok(())
}

/// Scheduling rule plus each sensor's buffered policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case", try_from = "SchedulePolicyRepr")]
pub enum SchedulePolicy {
    /// `beta[joint state][sensor]`.
    Opportunistic { beta: Vec<Vec<f64>>, per_sensor: Vec<PolicyParams> },
    /// `beta[sensor]`, the same in every channel state.
    Fixed { beta: Vec<f64>, per_sensor: Vec<PolicyParams> },
}

#[derive(Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case", deny_unknown_fields)]
enum SchedulePolicyRepr {
    Opportunistic { beta: Vec<Vec<f64>>, per_sensor: Vec<PolicyParams> },
    Fixed { beta: Vec<f64>, per_sensor: Vec<PolicyParams> },
}

impl TryFrom<SchedulePolicyRepr> for SchedulePolicy {
    type Error = ScheduleError;

    fn try_from(r: SchedulePolicyRepr) -> Result<Self, Self::Error> {
        let p = match r {
            SchedulePolicyRepr::Opportunistic { beta, per_sensor } => SchedulePolicy::Opportunistic { beta, per_sensor },
            SchedulePolicyRepr::Fixed { beta, per_sensor } => SchedulePolicy::Fixed { beta, per_sensor },
        };
        p.check_rows()?;
        Ok(p)
    }
}

impl SchedulePolicy {
    pub fn per_sensor(&self) -> &[PolicyParams] {
        match self {
            SchedulePolicy::Opportunistic { per_sensor, .. } | SchedulePolicy::Fixed { per_sensor, .. } => per_sensor,
        }
    }

    fn check_rows(&self) -> Result<(), ScheduleError> {
        match self {
            SchedulePolicy::Opportunistic { beta, .. } => beta.iter().try_for_each(|r| check_simplex(r)),
            SchedulePolicy::Fixed { beta, .. } => check_simplex(beta),
        }
    }

    /// Scheduling probabilities in every joint state.
    pub fn beta_rows(&self, n_joint: usize) -> Vec<Vec<f64>> {
        match self {
            SchedulePolicy::Opportunistic { beta, .. } => beta.clone(),
            SchedulePolicy::Fixed { beta, .. } => vec![beta.clone(); n_joint],
        }
    }

    pub fn validate(&self, spec: &MultiSensorSpec) -> Result<(), ScheduleError> {
        self.check_rows()?;
        let n = spec.len();
        let per = self.per_sensor();
        if per.len() != n {
            return invariant("one policy per sensor is required");
        }
        match self {
            SchedulePolicy::Opportunistic { beta, .. } => {
                if beta.len() != spec.joint_states().len() || beta.iter().any(|r| r.len() != n) {
                    return invariant("one probability per sensor and joint channel state is required");
                }
            }
            SchedulePolicy::Fixed { beta, .. } => {
                if beta.len() != n {
                    return invariant("one probability per sensor is required");
                }
            }
        }
        for (p, s) in per.iter().zip(&spec.sensors) {
            if p.class() != PolicyClass::Do {
                return invariant("sensors must run distortion-optimal policies");
            }
            p.validate(&s.env)?;
        }
        Ok(())
    }
}

/// Outcome of a multi-sensor check or synthesis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiReport {
    pub feasible: bool,
    pub policy: Option<SchedulePolicy>,
    pub per_sensor: Vec<FeasibilityReport>,
}

impl MultiReport {
    fn infeasible(n: usize) -> Self {
        MultiReport { feasible: false, policy: None, per_sensor: vec![FeasibilityReport::infeasible(PolicyClass::Do); n] }
    }

    /// Smallest of each margin across sensors.
    pub fn worst_margins(&self) -> Margins {
        let min_opt = |f: fn(&Margins) -> Option<f64>| {
            self.per_sensor.iter().map(|r| f(&r.margins)).try_fold(f64::INFINITY, |m, x| x.map(|x| m.min(x)))
        };
        Margins {
            rate: min_opt(|m| m.rate),
            distortion: self.per_sensor.iter().map(|r| r.margins.distortion).fold(f64::INFINITY, f64::min),
            energy_source: min_opt(|m| m.energy_source),
            energy_channel: min_opt(|m| m.energy_channel),
        }
    }
}

/// Per-sensor conditions with the channel rate and channel energy weighted
/// by how often the sensor is scheduled in each of its channel states.
pub fn check_multi(policy: &SchedulePolicy, spec: &MultiSensorSpec) -> Result<MultiReport, ScheduleError> {
    spec.validate()?;
    policy.validate(spec)?;
    let rows = policy.beta_rows(spec.joint_states().len());
    let mut per_sensor = Vec::with_capacity(spec.len());
    for (l, (s, params)) in spec.sensors.iter().zip(policy.per_sensor()).enumerate() {
        let PolicyParams::Do { d_per_q, ts_per_q, tt_per_h, alpha, epsilon } = params else {
            unreachable!("validated above")
        };
        let w = spec.channel_weights(l, &rows);
        let env = &s.env;
        let e = env.mean_energy();
        let mean_f = expect_over(&env.q_pmf, |i| rate_or_inf(s, d_per_q[i], ts_per_q[i], env.q_support[i]));
        let mean_g = expect_over(&w, |j| s.channel_rate(env.h_support[j], tt_per_h[j]));
        per_sensor.push(report(
            PolicyClass::Do,
            params,
            mean_f,
            mean_g,
            spec.d_bar[l] - dot(&env.q_pmf, d_per_q),
            Some((1.0 - alpha) * e - epsilon - dot(&env.q_pmf, ts_per_q)),
            Some(alpha * e - epsilon - dot(&w, tt_per_h)),
        ));
    }
    let feasible = per_sensor.iter().all(|r| r.feasible);
    Ok(MultiReport { feasible, policy: feasible.then(|| policy.clone()), per_sensor })
}

/// Number of steps of the scheduling-probability grid (11 levels).
pub const BETA_STEPS: usize = 10;

/// Refuse searches beyond this many candidate schedules.
pub const MAX_SCHEDULES: usize = 2_000_000;

/// All ways to split `steps` among `n` sensors.
fn compositions(n: usize, steps: usize) -> Vec<Vec<usize>> {
    if n == 1 {
        return vec![vec![steps]];
    }
    (0..=steps)
        .flat_map(|k| {
            compositions(n - 1, steps - k).into_iter().map(move |mut rest| {
                rest.insert(0, k);
                rest
            })
        })
        .collect()
}

/// Best channel share for a sensor given its scheduling weights; returns
/// the margin and the witness.
fn best_share(
    s: &SensorSpec,
    alphas: &[f64],
    src: &[Option<SourceAllocation>],
    w: &[f64],
) -> Option<(f64, PolicyParams)> {
    let env = &s.env;
    let e = env.mean_energy();
    let eps = s.epsilon();
    let mut best: Option<(f64, usize, Vec<f64>)> = None;
    for (k, a) in alphas.iter().enumerate() {
        let Some(sa) = &src[k] else { continue };
        let budget = a * e - eps;
        let mut tt = waterfill_lenient(&env.h_support, w, budget);
        fit_budget(w, &mut tt, budget);
        let g = expect_over(w, |j| s.channel_rate(env.h_support[j], tt[j]));
        let m = if sa.mean_rate == 0.0 { g.max(0.0) } else { g - sa.mean_rate };
        if best.as_ref().is_none_or(|b| m > b.0) {
            best = Some((m, k, tt));
        }
    }
    let (m, k, tt) = best?;
    let sa = src[k].as_ref().unwrap();
    let feasible = rate_condition(sa.mean_rate, sa.mean_rate + m);
    feasible.then(|| {
        (
            m,
            PolicyParams::Do {
                d_per_q: sa.d.clone(),
                ts_per_q: sa.ts.clone(),
                tt_per_h: tt,
                alpha: alphas[k],
                epsilon: eps,
            },
        )
    })
}

/// Source frontiers of every sensor, reusable across schedule searches.
pub fn source_frontiers(spec: &MultiSensorSpec, opts: &SynthOptions) -> Vec<Vec<Option<SourceAllocation>>> {
    let alphas = opts.alphas();
    spec.sensors.iter().zip(&spec.d_bar).map(|(s, d)| do_source_frontier(s, *d, &alphas)).collect()
}

/// Channel side of one sensor, prepared for repeated rate evaluations.
struct FastSide {
    /// State indices by decreasing gain.
    order: Vec<usize>,
    inv_gain: Vec<f64>,
    scale: f64,
    /// Channel budget and needed source rate per channel share.
    shares: Vec<(f64, f64)>,
}

impl FastSide {
    fn new(s: &SensorSpec, alphas: &[f64], src: &[Option<SourceAllocation>]) -> Self {
        let env = &s.env;
        let mut order: Vec<usize> = (0..env.h_support.len()).filter(|&j| env.h_support[j] > 0.0).collect();
        order.sort_by(|&a, &b| env.h_support[b].total_cmp(&env.h_support[a]));
        let e = env.mean_energy();
        let shares = alphas
            .iter()
            .zip(src)
            .filter_map(|(a, sa)| sa.as_ref().map(|sa| (a * e - s.epsilon(), sa.mean_rate)))
            .collect();
        FastSide {
            inv_gain: env.h_support.iter().map(|h| 1.0 / h).collect(),
            order,
            scale: s.geometry.channel_uses() / std::f64::consts::LN_2,
            shares,
        }
    }

    /// Water-filled mean channel rate under weights `w`.
    fn rate(&self, w: &[f64], budget: f64) -> f64 {
        if !(budget > 0.0) {
            return 0.0;
        }
        let (mut wsum, mut wfloor) = (0.0, 0.0);
        let mut active = 0;
        let mut level = 0.0;
        for (k, &j) in self.order.iter().enumerate() {
            if w[j] <= 0.0 {
                continue;
            }
            wsum += w[j];
            wfloor += w[j] * self.inv_gain[j];
            active = k + 1;
            level = (budget + wfloor) / wsum;
            let next = self.order[k + 1..].iter().find(|&&i| w[i] > 0.0);
            if next.is_none_or(|&i| level <= self.inv_gain[i]) {
                break;
            }
        }
        self.order[..active]
            .iter()
            .filter(|&&j| w[j] > 0.0 && level > self.inv_gain[j])
            .map(|&j| w[j] * (level / self.inv_gain[j]).ln())
            .sum::<f64>()
            * self.scale
    }

    /// Largest rate margin over the channel shares that satisfy the rate
    /// condition.
    fn margin(&self, w: &[f64]) -> Option<f64> {
        self.shares
            .iter()
            .filter_map(|&(budget, f)| {
                let g = self.rate(w, budget);
                rate_condition(f, g).then_some(g - f)
            })
            .max_by(f64::total_cmp)
    }
}

fn search(
    spec: &MultiSensorSpec,
    opts: &SynthOptions,
    src: &[Vec<Option<SourceAllocation>>],
    fixed: bool,
) -> Result<MultiReport, ScheduleError> {
    spec.validate()?;
    let n = spec.len();
    let states = spec.joint_states();
    let pmf = spec.joint_pmf();
    let n_joint = states.len();
    let levels = compositions(n, BETA_STEPS);
    let per_state = if fixed { 1 } else { n_joint };
    let total = levels.len().checked_pow(per_state as u32).filter(|t| *t <= MAX_SCHEDULES);
    let Some(total) = total else {
        return invariant(format!("{} sensors over {n_joint} channel states is too many schedules to search", n));
    };
    let alphas = opts.alphas();
    let sides: Vec<FastSide> = spec.sensors.iter().zip(src).map(|(s, f)| FastSide::new(s, &alphas, f)).collect();
    let mut w: Vec<Vec<f64>> = spec.sensors.iter().map(|s| vec![0.0; s.env.h_support.len()]).collect();
    let decode = |mut code: usize| -> Vec<Vec<f64>> {
        let mut rows = Vec::with_capacity(per_state);
        for _ in 0..per_state {
            rows.push(levels[code % levels.len()].iter().map(|&k| k as f64 / BETA_STEPS as f64).collect());
            code /= levels.len();
        }
        rows
    };
    let weights = |rows: &[Vec<f64>], l: usize, w: &mut Vec<f64>| {
        w.iter_mut().for_each(|x| *x = 0.0);
        for (k, (js, p)) in states.iter().zip(&pmf).enumerate() {
            w[js[l]] += p * rows[if fixed { 0 } else { k }][l];
        }
    };
    // Rank schedules by their worst sensor margin.
    let mut ranked: Vec<(f64, usize)> = Vec::new();
    for code in 0..total {
        let rows = decode(code);
        let mut worst = f64::INFINITY;
        for l in 0..n {
            weights(&rows, l, &mut w[l]);
            match sides[l].margin(&w[l]) {
                Some(m) => worst = worst.min(m),
                None => {
                    worst = f64::NEG_INFINITY;
                    break;
                }
            }
        }
        if worst > f64::NEG_INFINITY {
            ranked.push((worst, code));
        }
    }
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    for (_, code) in ranked {
        let rows = decode(code);
        let mut per_sensor = Vec::with_capacity(n);
        for l in 0..n {
            weights(&rows, l, &mut w[l]);
            match best_share(&spec.sensors[l], &alphas, &src[l], &w[l]) {
                Some((_, p)) => per_sensor.push(p),
                None => break,
            }
        }
        if per_sensor.len() < n {
            continue;
        }
        let policy = if fixed {
            SchedulePolicy::Fixed { beta: rows[0].clone(), per_sensor }
        } else {
            SchedulePolicy::Opportunistic { beta: rows, per_sensor }
        };
        let r = check_multi(&policy, spec)?;
        if r.feasible {
            return Ok(r);
        }
    }
    Ok(MultiReport::infeasible(n))
}

/// Searches the opportunistic class over an 11-level grid of scheduling
/// probabilities per joint channel state. Schedules are ranked by the
/// smallest rate margin across sensors and the best one that certifies is
/// returned; each sensor takes the channel share with its largest margin.
pub fn synthesize_schedule(spec: &MultiSensorSpec, opts: &SynthOptions) -> Result<MultiReport, ScheduleError> {
    search(spec, opts, &source_frontiers(spec, opts), false)
}

/// As [`synthesize_schedule`] with probabilities that ignore the channel.
pub fn synthesize_fixed_schedule(spec: &MultiSensorSpec, opts: &SynthOptions) -> Result<MultiReport, ScheduleError> {
    search(spec, opts, &source_frontiers(spec, opts), true)
}

/// Per-sensor traces and how many slots each sensor was given.
#[derive(Debug, Clone, PartialEq)]
pub struct TdmaRun {
    pub traces: Vec<Trace>,
    pub scheduled: Vec<u64>,
}

/// Simulates all sensors slot by slot. Sensor `l` draws energy and
/// observation quality from streams `4l` and `4l + 1`; the joint channel
/// uses stream 2 and the scheduler stream 3, so one sensor reproduces the
/// single-sensor simulator exactly.
pub fn simulate_tdma(
    spec: &MultiSensorSpec,
    policy: &SchedulePolicy,
    horizon: u64,
    seed: u64,
    keep_records: bool,
) -> Result<TdmaRun, ScheduleError> {
    if horizon == 0 {
        return Err(SimError::ZeroHorizon.into());
    }
    spec.validate()?;
    policy.validate(spec)?;
    let states = spec.joint_states();
    let pmf = spec.joint_pmf();
    let rows = policy.beta_rows(states.len());
    let n = spec.len();
    let mut energy_rng: Vec<_> = (0..n).map(|l| stream(seed, 4 * l as u64)).collect();
    let mut q_rng: Vec<_> = (0..n).map(|l| stream(seed, 4 * l as u64 + 1)).collect();
    let mut h_rng = stream(seed, 2);
    let mut sched_rng = stream(seed, 3);
    let mut rts: Vec<_> = spec.sensors.iter().map(|s| SensorRuntime::new(s, horizon, keep_records)).collect();
    let mut scheduled = vec![0u64; n];
    for _ in 0..horizon {
        let arrivals: Vec<f64> =
            spec.sensors.iter().zip(&mut energy_rng).map(|(s, r)| s.env.energy.sample(r.gen::<f64>())).collect();
        let qs: Vec<usize> = spec.sensors.iter().zip(&mut q_rng).map(|(s, r)| sample_index(&s.env.q_pmf, r.gen::<f64>())).collect();
        let k = sample_index(&pmf, h_rng.gen::<f64>());
        let who = if n == 1 { 0 } else { sample_index(&rows[k], sched_rng.gen::<f64>()) };
        scheduled[who] += 1;
        for l in 0..n {
            rts[l].advance(&spec.sensors[l], &policy.per_sensor()[l], arrivals[l], qs[l], states[k][l], l == who)?;
        }
    }
    Ok(TdmaRun { traces: rts.into_iter().map(|rt| rt.finish(seed)).collect(), scheduled })
}

/// Three regions over the first sensor's worse-state probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoSensorRegions {
    pub opportunistic: RegionGrid,
    pub fixed: RegionGrid,
    /// First sensor alone.
    pub outer: RegionGrid,
}

/// Sweeps the first sensor's worse-state probabilities over `pw_values` on
/// both axes, with every other sensor as in the template. The first
/// sensor's state values are taken from its template environment (two
/// states each, worse first); channels must be independent.
pub fn region_sweep_two_sensors(
    template: &MultiSensorSpec,
    pw_values: &[f64],
    opts: &SynthOptions,
    jobs: usize,
) -> Result<TwoSensorRegions, ScheduleError> {
    template.validate()?;
    if template.joint_h_pmf.is_some() {
        return invariant("sweeps need independent channels");
    }
    let env0 = &template.sensors[0].env;
    if env0.q_support.len() != 2 || env0.h_support.len() != 2 {
        return invariant("the swept sensor needs two observation and two channel states");
    }
    let qs = (env0.q_support[0], env0.q_support[1]);
    let hs = (env0.h_support[0], env0.h_support[1]);
    let n = pw_values.len();
    let mut specs = Vec::with_capacity(n * n);
    for &pq in pw_values {
        for &ph in pw_values {
            let mut s = template.clone();
            s.sensors[0].env = Environment::two_state(qs, pq, hs, ph, env0.energy.clone())?;
            specs.push(s);
        }
    }
    let alphas = opts.alphas();
    // The first sensor's source side depends only on its observation law,
    // the others' not at all.
    let rest: Vec<_> = source_frontiers(template, opts).into_iter().skip(1).collect();
    let first: Vec<_> = par_map(n, jobs, |i| do_source_frontier(&specs[i * n].sensors[0], template.d_bar[0], &alphas));
    let frontiers = |k: usize| {
        let mut v = vec![first[k / n].clone()];
        v.extend(rest.iter().cloned());
        v
    };
    let results = par_map(n * n, jobs, |k| -> Result<[MultiReport; 3], ScheduleError> {
        let src = frontiers(k);
        let opp = search(&specs[k], opts, &src, false)?;
        let fixed = search(&specs[k], opts, &src, true)?;
        let alone = MultiSensorSpec::independent(vec![specs[k].sensors[0].clone()], vec![template.d_bar[0]]);
        let outer = search(&alone, opts, &src[..1], false)?;
        Ok([opp, fixed, outer])
    });
    let mut grids: Vec<Vec<RegionCell>> = vec![Vec::with_capacity(n * n); 3];
    for (k, r) in results.into_iter().enumerate() {
        for (g, rep) in grids.iter_mut().zip(r?) {
            g.push(RegionCell {
                axis1: pw_values[k / n],
                axis2: pw_values[k % n],
                feasible: rep.feasible,
                margins: rep.worst_margins(),
            });
        }
    }
    let mk = |label: &str, cells: Vec<RegionCell>| RegionGrid {
        label: label.to_string(),
        d_bar: template.d_bar[0],
        axis1: pw_values.to_vec(),
        axis2: pw_values.to_vec(),
        cells,
    };
    let mut it = grids.into_iter();
    Ok(TwoSensorRegions {
        opportunistic: mk("opportunistic", it.next().unwrap()),
        fixed: mk("fixed", it.next().unwrap()),
        outer: mk("single_sensor", it.next().unwrap()),
    })
}
