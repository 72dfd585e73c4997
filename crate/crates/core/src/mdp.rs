//! Discounted finite-state control of a sensor with small data and energy
//! buffers, trading average distortion against average queue length.
//!
//! Energy is counted in integer units of `energy_unit`, queue contents in
//! codewords. Produced codewords are `ceil(f / M)` and served ones
//! `floor(g / N)`. Bits that would overflow the data buffer are dropped and
//! the slot is charged `d_max`.
//!
//! The decision state is (carried battery, arrival, queue, q, h): the
//! arrival of the current slot is known when deciding, so it is part of the
//! state internally. Reports project back to (battery, queue, q, h).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::feasibility::region::par_map;
use crate::models::{check_pmf, ModelError, SlotGeometry, SourceModel};

#[derive(Debug, Error)]
pub enum MdpError {
    #[error("invalid specification: {0}")]
    Spec(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn spec_err<T>(msg: impl Into<String>) -> Result<T, MdpError> {
    Err(MdpError::Spec(msg.into()))
}

/// Rounding slack for the codeword counts: rates within this many codewords
/// of an integer count as that integer.
pub const ROUNDING_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscreteSpec {
    pub geometry: SlotGeometry,
    pub source: SourceModel,
    /// Largest queue length in codewords; levels are `0..=queue_capacity`.
    pub queue_capacity: u32,
    /// Largest carried-over battery level in energy units.
    pub battery_capacity: u32,
    /// Joule per channel use in one energy unit.
    pub energy_unit: f64,
    pub energy_arrivals: Vec<u32>,
    pub energy_pmf: Vec<f64>,
    pub q_support: Vec<f64>,
    pub q_pmf: Vec<f64>,
    pub h_support: Vec<f64>,
    pub h_pmf: Vec<f64>,
    pub d_levels: Vec<f64>,
    pub ts_levels: Vec<u32>,
    pub tt_levels: Vec<u32>,
    /// Discount factor in `[0, 1)`.
    pub lambda: f64,
}

fn sorted_unique<T: PartialOrd>(v: &[T]) -> bool {
    v.windows(2).all(|w| w[0] < w[1])
}

impl DiscreteSpec {
    pub fn validate(&self) -> Result<(), MdpError> {
        self.source.validate()?;
        if self.energy_arrivals.len() != self.energy_pmf.len()
            || self.q_support.len() != self.q_pmf.len()
            || self.h_support.len() != self.h_pmf.len()
        {
            return spec_err("support and pmf lengths differ");
        }
        check_pmf(&self.energy_pmf)?;
        check_pmf(&self.q_pmf)?;
        check_pmf(&self.h_pmf)?;
        if !(self.energy_unit > 0.0 && self.energy_unit.is_finite()) {
            return spec_err("energy_unit must be positive");
        }
        if self.d_levels.is_empty() || self.ts_levels.is_empty() || self.tt_levels.is_empty() {
            return spec_err("action level lists must be nonempty");
        }
        if !sorted_unique(&self.d_levels)
            || !sorted_unique(&self.ts_levels)
            || !sorted_unique(&self.tt_levels)
            || !sorted_unique(&self.energy_arrivals)
        {
            return spec_err("level lists must be sorted without repeats");
        }
        if self.d_levels.iter().any(|d| !(*d > 0.0)) {
            return spec_err("distortion levels must be positive");
        }
        if *self.d_levels.last().unwrap() != self.source.d_max() {
            return spec_err("the largest distortion level must be d_max");
        }
        if self.ts_levels[0] != 0 || self.tt_levels[0] != 0 {
            return spec_err("energy levels must include 0");
        }
        if self.h_support.iter().any(|h| !(*h >= 0.0)) {
            return spec_err("channel SNRs must be nonnegative");
        }
        if !(0.0..1.0).contains(&self.lambda) {
            return spec_err("lambda must lie in [0, 1)");
        }
        Ok(())
    }

    pub fn d_max(&self) -> f64 {
        self.source.d_max()
    }

    /// Codewords produced at distortion `d` with `ts` units; `None` when
    /// the rate is undefined.
    pub fn produced(&self, d: f64, ts: u32, q: f64) -> Option<u32> {
        if d >= self.d_max() {
            return Some(0);
        }
        let f = self.source.rate(&self.geometry, d, ts as f64 * self.energy_unit, q).ok()?;
        let cw = f / self.geometry.source_samples();
        Some((cw - ROUNDING_TOL).ceil().max(0.0) as u32)
    }

    /// Codewords the channel carries with `tt` units.
    pub fn served(&self, tt: u32, h: f64) -> u32 {
        let g = crate::models::channel_rate_awgn(&self.geometry, h, tt as f64 * self.energy_unit).unwrap_or(0.0);
        let cw = g / self.geometry.channel_uses();
        (cw + ROUNDING_TOL).floor().max(0.0) as u32
    }

    /// States excluding the arrival: battery × queue × q × h.
    pub fn nominal_state_count(&self) -> usize {
        (self.battery_capacity as usize + 1) * (self.queue_capacity as usize + 1) * self.q_support.len() * self.h_support.len()
    }
}

/// Queue after serving `served` and adding `produced`, and whether the
/// buffer overflowed (the produced codewords are then dropped).
pub fn queue_update(x: u32, served: u32, produced: u32, capacity: u32) -> (u32, bool) {
    let left = x - x.min(served);
    if left + produced > capacity {
        (left, true)
    } else {
        (left + produced, false)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MdpAction {
    pub d: f64,
    pub ts: u32,
    pub tt: u32,
}

/// One admissible action of one state: cost parts and successor law.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionRow {
    pub action: MdpAction,
    /// Distortion charged this slot.
    pub distortion: f64,
    /// Queue length at decision time.
    pub queue: f64,
    pub next: Vec<(usize, f64)>,
}

impl ActionRow {
    pub fn cost(&self, gamma: f64) -> f64 {
        gamma * self.distortion + (1.0 - gamma) * self.queue
    }
}

/// Finite MDP with costs split into distortion and queue parts so one build
/// serves every weight.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMdp {
    pub rows: Vec<Vec<ActionRow>>,
    /// Initial law used for long-run averages.
    pub initial: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionState {
    pub battery: u32,
    pub arrival_index: usize,
    pub queue: u32,
    pub q_index: usize,
    pub h_index: usize,
}

/// Index layout of the decision states of a [`DiscreteSpec`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateLayout {
    pub batteries: usize,
    pub arrivals: usize,
    pub queues: usize,
    pub qs: usize,
    pub hs: usize,
}

impl StateLayout {
    pub fn of(spec: &DiscreteSpec) -> Self {
        StateLayout {
            batteries: spec.battery_capacity as usize + 1,
            arrivals: spec.energy_arrivals.len(),
            queues: spec.queue_capacity as usize + 1,
            qs: spec.q_support.len(),
            hs: spec.h_support.len(),
        }
    }

    pub fn len(&self) -> usize {
        self.batteries * self.arrivals * self.queues * self.qs * self.hs
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, s: DecisionState) -> usize {
        (((s.battery as usize * self.arrivals + s.arrival_index) * self.queues + s.queue as usize) * self.qs + s.q_index)
            * self.hs
            + s.h_index
    }

    pub fn state(&self, mut k: usize) -> DecisionState {
        let h_index = k % self.hs;
        k /= self.hs;
        let q_index = k % self.qs;
        k /= self.qs;
        let queue = (k % self.queues) as u32;
        k /= self.queues;
        let arrival_index = k % self.arrivals;
        let battery = (k / self.arrivals) as u32;
        DecisionState { battery, arrival_index, queue, q_index, h_index }
    }
}

/// Exogenous successor law: `(arrival, q, h)` index triples with weights.
fn exogenous(e_pmf: &[f64], q_pmf: &[f64], h_pmf: &[f64]) -> Vec<(usize, usize, usize, f64)> {
    let mut out = Vec::new();
    for (e, pe) in e_pmf.iter().enumerate() {
        for (q, pq) in q_pmf.iter().enumerate() {
            for (h, ph) in h_pmf.iter().enumerate() {
                let p = pe * pq * ph;
                if p > 0.0 {
                    out.push((e, q, h, p));
                }
            }
        }
    }
    out
}

/// Builds the joint model. Actions must fit the energy on hand
/// (carried battery plus arrival); `d_max` is only paired with zero source
/// energy, and other distortions only with energies where the rate is
/// defined. Leftover energy above the battery capacity is lost.
pub fn build_mdp(spec: &DiscreteSpec) -> Result<FiniteMdp, MdpError> {
    spec.validate()?;
    let lay = StateLayout::of(spec);
    let exo = exogenous(&spec.energy_pmf, &spec.q_pmf, &spec.h_pmf);
    let d_max = spec.d_max();
    let mut rows = Vec::with_capacity(lay.len());
    for k in 0..lay.len() {
        let s = lay.state(k);
        let avail = s.battery + spec.energy_arrivals[s.arrival_index];
        let (q, h) = (spec.q_support[s.q_index], spec.h_support[s.h_index]);
        let mut acts = Vec::new();
        for &d in &spec.d_levels {
            for &ts in &spec.ts_levels {
                if (d >= d_max) != (ts == 0) {
                    continue;
                }
                let Some(produced) = spec.produced(d, ts, q) else { continue };
                for &tt in &spec.tt_levels {
                    if ts + tt > avail {
                        continue;
                    }
                    let (x1, overflow) = queue_update(s.queue, spec.served(tt, h), produced, spec.queue_capacity);
                    let battery = (avail - ts - tt).min(spec.battery_capacity);
                    let next = exo
                        .iter()
                        .map(|&(e, qi, hi, p)| {
                            let n = DecisionState { battery, arrival_index: e, queue: x1, q_index: qi, h_index: hi };
                            (lay.index(n), p)
                        })
                        .collect();
                    acts.push(ActionRow {
                        action: MdpAction { d, ts, tt },
                        distortion: if overflow { d_max } else { d },
                        queue: s.queue as f64,
                        next,
                    });
                }
            }
        }
        if !acts.iter().any(|a| a.action.d >= d_max && a.action.ts == 0 && a.action.tt == 0) {
            return spec_err("the idle action is not admissible");
        }
        rows.push(acts);
    }
    let mut initial = vec![0.0; lay.len()];
    for &(e, qi, hi, p) in &exo {
        initial[lay.index(DecisionState { battery: 0, arrival_index: e, queue: 0, q_index: qi, h_index: hi })] += p;
    }
    Ok(FiniteMdp { rows, initial })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolvedPolicy {
    pub value: Vec<f64>,
    /// Index into the state's admissible actions.
    pub choice: Vec<usize>,
    pub iterations: usize,
    pub residual: f64,
    /// Sup-norm change of every backup, in order.
    pub residuals: Vec<f64>,
}

/// Default stopping tolerance of [`value_iteration`].
pub const VI_TOL: f64 = 1e-10;
const VI_MAX_ITER: usize = 100_000;

fn q_value(row: &ActionRow, gamma: f64, lambda: f64, v: &[f64]) -> f64 {
    row.cost(gamma) + lambda * row.next.iter().map(|&(j, p)| p * v[j]).sum::<f64>()
}

/// Lowest-cost action; exact ties (within 1e-12 relative) go to the first
/// listed action, which is the smallest `(d, ts, tt)`.
fn argmin(rows: &[ActionRow], gamma: f64, lambda: f64, v: &[f64]) -> (usize, f64) {
    let vals: Vec<f64> = rows.iter().map(|r| q_value(r, gamma, lambda, v)).collect();
    let best = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let tol = 1e-12 * best.abs().max(1.0);
    let k = vals.iter().position(|&x| x <= best + tol).expect("nonempty action set");
    (k, best)
}

/// Bellman iteration from zero until the sup-norm change drops below `tol`.
pub fn value_iteration(mdp: &FiniteMdp, gamma: f64, lambda: f64, tol: f64) -> SolvedPolicy {
    let n = mdp.rows.len();
    let mut v = vec![0.0; n];
    let mut residuals = Vec::new();
    let mut iterations = 0;
    loop {
        let nv: Vec<f64> = mdp.rows.iter().map(|r| argmin(r, gamma, lambda, &v).1).collect();
        let r = nv.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = nv;
        iterations += 1;
        residuals.push(r);
        if r < tol || iterations >= VI_MAX_ITER {
            break;
        }
    }
    let choice = mdp.rows.iter().map(|r| argmin(r, gamma, lambda, &v).0).collect();
    SolvedPolicy { value: v, choice, iterations, residual: *residuals.last().unwrap(), residuals }
}

/// Discounted value of a fixed policy, by iterating its evaluation operator.
pub fn policy_evaluation(mdp: &FiniteMdp, choice: &[usize], gamma: f64, lambda: f64, tol: f64) -> Vec<f64> {
    let mut v = vec![0.0; mdp.rows.len()];
    for _ in 0..VI_MAX_ITER {
        let nv: Vec<f64> = mdp.rows.iter().zip(choice).map(|(r, &a)| q_value(&r[a], gamma, lambda, &v)).collect();
        let r = nv.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        v = nv;
        if r < tol {
            break;
        }
    }
    v
}

/// Tolerance (L1) of the stationary-law iteration.
pub const STATIONARY_TOL: f64 = 1e-12;

/// Limiting state law of the chain induced by `choice`, started from the
/// model's initial law. Averaging each step with the previous law keeps
/// periodic chains converging to the same limit.
pub fn stationary(mdp: &FiniteMdp, choice: &[usize]) -> Vec<f64> {
    let n = mdp.rows.len();
    let mut pi = mdp.initial.clone();
    for _ in 0..1_000_000 {
        let mut next = vec![0.0; n];
        for (i, p) in pi.iter().enumerate() {
            if *p == 0.0 {
                continue;
            }
            for &(j, w) in &mdp.rows[i][choice[i]].next {
                next[j] += p * w;
            }
        }
        let mut diff = 0.0;
        for (a, b) in next.iter_mut().zip(&pi) {
            *a = 0.5 * (*a + b);
            diff += (*a - b).abs();
        }
        pi = next;
        if diff < STATIONARY_TOL {
            break;
        }
    }
    pi
}

/// Long-run `(average queue, average distortion)` under a policy.
pub fn long_run_averages(mdp: &FiniteMdp, choice: &[usize]) -> (f64, f64) {
    let pi = stationary(mdp, choice);
    let mut x = 0.0;
    let mut d = 0.0;
    for (i, p) in pi.iter().enumerate() {
        let r = &mdp.rows[i][choice[i]];
        x += p * r.queue;
        d += p * r.distortion;
    }
    (x, d)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeoffPoint {
    pub gamma: f64,
    pub avg_queue: f64,
    pub avg_distortion: f64,
    pub iterations: usize,
    pub residual: f64,
}

pub const TRADEOFF_CSV_HEADER: &str = "gamma,avg_queue,avg_distortion,iterations,residual";

pub fn write_tradeoff_csv<W: std::io::Write>(mut w: W, points: &[TradeoffPoint]) -> std::io::Result<()> {
    writeln!(w, "{TRADEOFF_CSV_HEADER}")?;
    for p in points {
        writeln!(w, "{},{},{},{},{}", p.gamma, p.avg_queue, p.avg_distortion, p.iterations, p.residual)?;
    }
    Ok(())
}

/// `n` evenly spaced weights on `[0, 1]`.
pub fn gamma_grid(n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![0.0];
    }
    (0..n).map(|k| k as f64 / (n - 1) as f64).collect()
}

/// Joint optimum for each weight, summarized by its long-run averages.
pub fn tradeoff_curve(spec: &DiscreteSpec, gammas: &[f64], jobs: usize) -> Result<Vec<TradeoffPoint>, MdpError> {
    if gammas.iter().any(|g| !(0.0..=1.0).contains(g)) {
        return spec_err("weights must lie in [0, 1]");
    }
    let mdp = build_mdp(spec)?;
    Ok(par_map(gammas.len(), jobs, |k| {
        let gamma = gammas[k];
        let sol = value_iteration(&mdp, gamma, spec.lambda, VI_TOL);
        let (avg_queue, avg_distortion) = long_run_averages(&mdp, &sol.choice);
        TradeoffPoint { gamma, avg_queue, avg_distortion, iterations: sol.iterations, residual: sol.residual }
    }))
}

/// Candidate grids of the separable baseline. Energies of the two split
/// buffers are counted in `1 / quanta_per_unit` of the joint energy unit;
/// actions use the same levels as the joint model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeparableGrid {
    /// Share of each arrival charged to the source buffer.
    pub alphas: Vec<f64>,
    /// Constant service the source side plans for, in codewords.
    pub g_bars: Vec<u32>,
    /// Constant arrivals the channel side plans for, in codewords.
    pub f_bars: Vec<u32>,
    pub quanta_per_unit: u32,
}

impl SeparableGrid {
    /// Shares of one quarter, service up to the queue capacity and arrivals
    /// up to the largest codeword count any action produces.
    pub fn default_for(spec: &DiscreteSpec) -> Self {
        let max_f = spec
            .d_levels
            .iter()
            .flat_map(|&d| {
                spec.q_support.iter().flat_map(move |&q| spec.ts_levels.iter().filter_map(move |&ts| spec.produced(d, ts, q)))
            })
            .max()
            .unwrap_or(0);
        SeparableGrid {
            alphas: vec![0.25, 0.5, 0.75],
            g_bars: (0..=spec.queue_capacity).collect(),
            f_bars: (0..=max_f).collect(),
            quanta_per_unit: 4,
        }
    }

    fn validate(&self) -> Result<(), MdpError> {
        if self.alphas.is_empty() || self.g_bars.is_empty() || self.f_bars.is_empty() {
            return spec_err("empty separable candidate grid");
        }
        if self.quanta_per_unit == 0 {
            return spec_err("quanta_per_unit must be positive");
        }
        for a in &self.alphas {
            let s = a * self.quanta_per_unit as f64;
            if !(*a > 0.0 && *a < 1.0) || (s - s.round()).abs() > 1e-9 {
                return spec_err(format!("share {a} is not a positive multiple of a quantum below 1"));
            }
        }
        Ok(())
    }
}

/// Split of energy into the two buffers for one share, in quanta.
#[derive(Debug, Clone, Copy)]
struct Split {
    per_unit: u32,
    src_per_unit: u32,
    ch_per_unit: u32,
    src_cap: u32,
    ch_cap: u32,
    quantum: f64,
}

impl Split {
    fn new(spec: &DiscreteSpec, grid: &SeparableGrid, alpha: f64) -> Self {
        let k = grid.quanta_per_unit;
        let src_per_unit = (alpha * k as f64).round() as u32;
        Split {
            per_unit: k,
            src_per_unit,
            ch_per_unit: k - src_per_unit,
            src_cap: src_per_unit * spec.battery_capacity,
            ch_cap: (k - src_per_unit) * spec.battery_capacity,
            quantum: spec.energy_unit / k as f64,
        }
    }
}

/// Spec with energy counted in quanta of the split.
fn quantized(spec: &DiscreteSpec, sp: &Split) -> DiscreteSpec {
    DiscreteSpec { energy_unit: sp.quantum, ..spec.clone() }
}

/// Source side: state (battery, arrival, queue, q); actions (d, ts) with a
/// constant service of `g_bar`.
fn source_mdp(spec: &DiscreteSpec, sp: &Split, g_bar: u32) -> FiniteMdp {
    let qs = quantized(spec, sp);
    let (nb, ne, nx, nq) =
        (sp.src_cap as usize + 1, spec.energy_arrivals.len(), spec.queue_capacity as usize + 1, spec.q_support.len());
    let idx = |b: u32, e: usize, x: u32, q: usize| ((b as usize * ne + e) * nx + x as usize) * nq + q;
    let d_max = spec.d_max();
    let mut rows = vec![Vec::new(); nb * ne * nx * nq];
    for b in 0..=sp.src_cap {
        for e in 0..ne {
            let avail = b + spec.energy_arrivals[e] * sp.src_per_unit;
            for x in 0..=spec.queue_capacity {
                for qi in 0..nq {
                    let mut acts = Vec::new();
                    for &d in &spec.d_levels {
                        let ts_range: Vec<u32> = if d >= d_max {
                            vec![0]
                        } else {
                            spec.ts_levels.iter().map(|l| l * sp.per_unit).filter(|&t| t > 0 && t <= avail).collect()
                        };
                        for ts in ts_range {
                            let Some(produced) = qs.produced(d, ts, spec.q_support[qi]) else { continue };
                            let (x1, overflow) = queue_update(x, g_bar, produced, spec.queue_capacity);
                            let b1 = (avail - ts).min(sp.src_cap);
                            let mut next = Vec::new();
                            for (e1, pe) in spec.energy_pmf.iter().enumerate() {
                                for (q1, pq) in spec.q_pmf.iter().enumerate() {
                                    if pe * pq > 0.0 {
                                        next.push((idx(b1, e1, x1, q1), pe * pq));
                                    }
                                }
                            }
                            acts.push(ActionRow {
                                action: MdpAction { d, ts, tt: 0 },
                                distortion: if overflow { d_max } else { d },
                                queue: x as f64,
                                next,
                            });
                        }
                    }
                    rows[idx(b, e, x, qi)] = acts;
                }
            }
        }
    }
    FiniteMdp { rows, initial: Vec::new() }
}

/// Channel side: state (battery, arrival, queue, h); action tt with a
/// constant arrival of `f_bar`.
fn channel_mdp(spec: &DiscreteSpec, sp: &Split, f_bar: u32) -> FiniteMdp {
    let qs = quantized(spec, sp);
    let (nb, ne, nx, nh) =
        (sp.ch_cap as usize + 1, spec.energy_arrivals.len(), spec.queue_capacity as usize + 1, spec.h_support.len());
    let idx = |b: u32, e: usize, x: u32, h: usize| ((b as usize * ne + e) * nx + x as usize) * nh + h;
    let mut rows = vec![Vec::new(); nb * ne * nx * nh];
    for b in 0..=sp.ch_cap {
        for e in 0..ne {
            let avail = b + spec.energy_arrivals[e] * sp.ch_per_unit;
            for x in 0..=spec.queue_capacity {
                for hi in 0..nh {
                    let acts = spec
                        .tt_levels
                        .iter()
                        .map(|l| l * sp.per_unit)
                        .filter(|&tt| tt <= avail)
                        .map(|tt| {
                            let (x1, _) = queue_update(x, qs.served(tt, spec.h_support[hi]), f_bar, spec.queue_capacity);
                            let b1 = (avail - tt).min(sp.ch_cap);
                            let mut next = Vec::new();
                            for (e1, pe) in spec.energy_pmf.iter().enumerate() {
                                for (h1, ph) in spec.h_pmf.iter().enumerate() {
                                    if pe * ph > 0.0 {
                                        next.push((idx(b1, e1, x1, h1), pe * ph));
                                    }
                                }
                            }
                            ActionRow { action: MdpAction { d: 0.0, ts: 0, tt }, distortion: 0.0, queue: x as f64, next }
                        })
                        .collect();
                    rows[idx(b, e, x, hi)] = acts;
                }
            }
        }
    }
    FiniteMdp { rows, initial: Vec::new() }
}

/// The two side policies run together on the true coupled dynamics, as a
/// single-action chain over (source battery, channel battery, arrival,
/// queue, q, h).
fn coupled_chain(
    spec: &DiscreteSpec,
    sp: &Split,
    src: (&FiniteMdp, &[usize]),
    ch: (&FiniteMdp, &[usize]),
) -> FiniteMdp {
    let qs = quantized(spec, sp);
    let (ne, nx, nq, nh) =
        (spec.energy_arrivals.len(), spec.queue_capacity as usize + 1, spec.q_support.len(), spec.h_support.len());
    let (ns, nc) = (sp.src_cap as usize + 1, sp.ch_cap as usize + 1);
    let idx = |bs: u32, bc: u32, e: usize, x: u32, q: usize, h: usize| {
        ((((bs as usize * nc + bc as usize) * ne + e) * nx + x as usize) * nq + q) * nh + h
    };
    let s_idx = |b: u32, e: usize, x: u32, q: usize| ((b as usize * ne + e) * nx + x as usize) * nq + q;
    let c_idx = |b: u32, e: usize, x: u32, h: usize| ((b as usize * ne + e) * nx + x as usize) * nh + h;
    let d_max = spec.d_max();
    let exo = exogenous(&spec.energy_pmf, &spec.q_pmf, &spec.h_pmf);
    let mut rows = vec![Vec::new(); ns * nc * ne * nx * nq * nh];
    let mut initial = vec![0.0; rows.len()];
    for &(e, qi, hi, p) in &exo {
        initial[idx(0, 0, e, 0, qi, hi)] += p;
    }
    for bs in 0..=sp.src_cap {
        for bc in 0..=sp.ch_cap {
            for e in 0..ne {
                for x in 0..=spec.queue_capacity {
                    for qi in 0..nq {
                        for hi in 0..nh {
                            let k = s_idx(bs, e, x, qi);
                            let sa = src.0.rows[k][src.1[k]].action;
                            let k = c_idx(bc, e, x, hi);
                            let tt = ch.0.rows[k][ch.1[k]].action.tt;
                            let produced = qs.produced(sa.d, sa.ts, spec.q_support[qi]).expect("admissible action");
                            let served = qs.served(tt, spec.h_support[hi]);
                            let (x1, overflow) = queue_update(x, served, produced, spec.queue_capacity);
                            let arr = spec.energy_arrivals[e];
                            let bs1 = (bs + arr * sp.src_per_unit - sa.ts).min(sp.src_cap);
                            let bc1 = (bc + arr * sp.ch_per_unit - tt).min(sp.ch_cap);
                            let next = exo.iter().map(|&(e1, q1, h1, p)| (idx(bs1, bc1, e1, x1, q1, h1), p)).collect();
                            rows[idx(bs, bc, e, x, qi, hi)] = vec![ActionRow {
                                action: MdpAction { d: sa.d, ts: sa.ts, tt },
                                distortion: if overflow { d_max } else { sa.d },
                                queue: x as f64,
                                next,
                            }];
                        }
                    }
                }
            }
        }
    }
    FiniteMdp { rows, initial }
}

/// Best separable point for one weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeparablePoint {
    pub gamma: f64,
    pub alpha: f64,
    pub g_bar: u32,
    pub f_bar: u32,
    pub avg_queue: f64,
    pub avg_distortion: f64,
}

/// Separable baseline: for each weight, every `(alpha, g_bar, f_bar)`
/// triple's pair of side policies is run on the coupled dynamics, and the
/// triple with the lowest long-run weighted cost is kept.
pub fn separable_curve(
    spec: &DiscreteSpec,
    grid: &SeparableGrid,
    gammas: &[f64],
    jobs: usize,
) -> Result<Vec<SeparablePoint>, MdpError> {
    spec.validate()?;
    grid.validate()?;
    // Side policies of the channel do not depend on the weight.
    let mut sides = Vec::new();
    for &alpha in &grid.alphas {
        let sp = Split::new(spec, grid, alpha);
        let channels: Vec<(FiniteMdp, Vec<usize>)> = grid
            .f_bars
            .iter()
            .map(|&f| {
                let m = channel_mdp(spec, &sp, f);
                let sol = value_iteration(&m, 0.0, spec.lambda, VI_TOL);
                (m, sol.choice)
            })
            .collect();
        let sources: Vec<FiniteMdp> = grid.g_bars.iter().map(|&g| source_mdp(spec, &sp, g)).collect();
        sides.push((alpha, sp, sources, channels));
    }
    // Source policies per (share, service, weight); many weights share one.
    let mut tasks: Vec<(usize, usize, Vec<usize>)> = Vec::new();
    let mut task_of = vec![vec![vec![0usize; gammas.len()]; grid.g_bars.len()]; sides.len()];
    let solved = par_map(sides.len() * grid.g_bars.len() * gammas.len(), jobs, |k| {
        let (ai, rest) = (k / (grid.g_bars.len() * gammas.len()), k % (grid.g_bars.len() * gammas.len()));
        let (gi, wi) = (rest / gammas.len(), rest % gammas.len());
        value_iteration(&sides[ai].2[gi], gammas[wi], spec.lambda, VI_TOL).choice
    });
    for (k, choice) in solved.into_iter().enumerate() {
        let (ai, rest) = (k / (grid.g_bars.len() * gammas.len()), k % (grid.g_bars.len() * gammas.len()));
        let (gi, wi) = (rest / gammas.len(), rest % gammas.len());
        let t = match tasks.iter().position(|t| t.0 == ai && t.1 == gi && t.2 == choice) {
            Some(t) => t,
            None => {
                tasks.push((ai, gi, choice));
                tasks.len() - 1
            }
        };
        task_of[ai][gi][wi] = t;
    }
    let nf = grid.f_bars.len();
    let averages = par_map(tasks.len() * nf, jobs, |k| {
        let (ai, gi, choice) = &tasks[k / nf];
        let (_, sp, sources, channels) = &sides[*ai];
        let (ch, ch_choice) = &channels[k % nf];
        let chain = coupled_chain(spec, sp, (&sources[*gi], choice), (ch, ch_choice));
        long_run_averages(&chain, &vec![0; chain.rows.len()])
    });
    Ok(gammas
        .iter()
        .enumerate()
        .map(|(wi, &gamma)| {
            let mut best: Option<(f64, SeparablePoint)> = None;
            for (ai, side) in sides.iter().enumerate() {
                for gi in 0..grid.g_bars.len() {
                    for fi in 0..nf {
                        let (x, d) = averages[task_of[ai][gi][wi] * nf + fi];
                        let cost = gamma * d + (1.0 - gamma) * x;
                        if best.is_none_or(|b| cost < b.0 - 1e-12) {
                            let point = SeparablePoint {
                                gamma,
                                alpha: side.0,
                                g_bar: grid.g_bars[gi],
                                f_bar: grid.f_bars[fi],
                                avg_queue: x,
                                avg_distortion: d,
                            };
                            best = Some((cost, point));
                        }
                    }
                }
            }
            best.expect("nonempty candidate grid").1
        })
        .collect())
}

pub const SEPARABLE_CSV_HEADER: &str = "gamma,alpha,g_bar,f_bar,avg_queue,avg_distortion";

pub fn write_separable_csv<W: std::io::Write>(mut w: W, points: &[SeparablePoint]) -> std::io::Result<()> {
    writeln!(w, "{SEPARABLE_CSV_HEADER}")?;
    for p in points {
        writeln!(w, "{},{},{},{},{},{}", p.gamma, p.alpha, p.g_bar, p.f_bar, p.avg_queue, p.avg_distortion)?;
    }
    Ok(())
}

/// True when `a` has strictly lower queue and strictly lower distortion.
pub fn strictly_dominates(a: (f64, f64), b: (f64, f64)) -> bool {
    a.0 < b.0 - 1e-9 && a.1 < b.1 - 1e-9
}
