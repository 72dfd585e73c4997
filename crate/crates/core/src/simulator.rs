//! Slot-by-slot simulation of the coupled energy buffer and data queue.
//!
//! Within a slot: the harvest is added to the buffer, the states are
//! observed, the policy decides, the channel serves the queue, and the bits
//! produced by the source encoder are appended. Bits produced in a slot
//! cannot leave in that slot.
//!
//! The energy buffer is kept as an integer count of 2^-64 J ticks so the
//! conservation and nonnegativity checks are exact.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::models::{analog_mmse, sample_index, ModelError, SensorSpec};
use crate::policies::{Action, DecisionInput, PolicyError, PolicyParams};

/// Energy resolution of the simulated buffer, in ticks per Joule.
pub const TICKS_PER_UNIT: f64 = 18_446_744_073_709_551_616.0;

/// Shortest trace accepted by [`stability_estimate`].
pub const MIN_STABILITY_SLOTS: usize = 10_000;

const STREAM_ENERGY: u64 = 0;
const STREAM_Q: u64 = 1;
const STREAM_H: u64 = 2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("action spends {spent} but only {available} is buffered")]
    EnergyViolation { spent: f64, available: f64 },
    #[error("horizon must be at least one slot")]
    ZeroHorizon,
    #[error("trace has {0} slots; at least {MIN_STABILITY_SLOTS} are needed")]
    TooShort(usize),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Buffer contents at decision time and the current state indices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotState {
    pub energy: f64,
    pub queue_bits: f64,
    pub q_index: usize,
    pub h_index: usize,
}

/// What the next slot brings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arrivals {
    pub energy: f64,
    pub q_index: usize,
    pub h_index: usize,
}

/// Physical outcome of applying an action to one slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotOutcome {
    pub bits_in: f64,
    pub bits_out: f64,
    /// Channel rate offered in the slot, whether or not the queue filled it.
    pub capacity: f64,
    pub distortion: f64,
    /// The configured distortion was not attainable at the chosen source
    /// energy; nothing was compressed and `d_max` was accrued.
    pub skipped: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub slot: u64,
    pub energy: f64,
    pub queue_bits: f64,
    pub q: f64,
    pub h: f64,
    pub d: Option<f64>,
    pub ts: f64,
    pub tt: f64,
    pub bits_in: f64,
    pub bits_out: f64,
    pub capacity: f64,
    pub distortion: f64,
    pub skipped: bool,
}

/// Bits produced, bits served and distortion for `action` at the queue
/// level `queue_bits`.
pub fn slot_outcome(
    spec: &SensorSpec,
    queue_bits: f64,
    q_index: usize,
    h_index: usize,
    action: &Action,
) -> SlotOutcome {
    let q = spec.env.q_support[q_index];
    let h = spec.env.h_support[h_index];
    let d_max = spec.source.d_max();
    let capacity = spec.channel_rate(h, action.tt);
    match action.d {
        None => {
            let distortion = analog_mmse(&spec.geometry, action.tt, q, h, d_max).unwrap_or(d_max);
            SlotOutcome {
                bits_in: 0.0,
                bits_out: queue_bits.min(capacity),
                capacity,
                distortion,
                skipped: false,
            }
        }
        Some(d) => {
            let (bits_in, distortion, skipped) = match spec.source_rate(d, action.ts, q) {
                Ok(f) => (f, d, false),
                Err(_) => (0.0, d_max, true),
            };
            SlotOutcome {
                bits_in,
                bits_out: queue_bits.min(capacity),
                capacity,
                distortion,
                skipped,
            }
        }
    }
}

/// One slot of the queue and buffer recursions on plain floating-point state.
pub fn step(
    spec: &SensorSpec,
    state: &SlotState,
    action: &Action,
    next: &Arrivals,
) -> Result<(SlotState, SlotOutcome), SimError> {
    let spent = action.ts + action.tt;
    if !(action.ts >= 0.0 && action.tt >= 0.0) || spent > state.energy * (1.0 + 1e-12) {
        return Err(SimError::EnergyViolation { spent, available: state.energy });
    }
    let out = slot_outcome(spec, state.queue_bits, state.q_index, state.h_index, action);
    let queue = (state.queue_bits - out.capacity).max(0.0) + out.bits_in;
    let energy = (state.energy - spent).max(0.0) + next.energy;
    Ok((
        SlotState { energy, queue_bits: queue, q_index: next.q_index, h_index: next.h_index },
        out,
    ))
}

fn to_ticks(x: f64) -> i128 {
    if x > 0.0 {
        (x * TICKS_PER_UNIT).floor() as i128
    } else {
        0
    }
}

fn from_ticks(t: i128) -> f64 {
    t as f64 / TICKS_PER_UNIT
}

/// Running statistics kept while a trace is produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub slots: u64,
    pub horizon: u64,
    pub sum_distortion: f64,
    pub sum_queue: f64,
    pub sum_queue_first_half: f64,
    pub sum_queue_second_half: f64,
    pub sum_bits_in: f64,
    pub sum_bits_out: f64,
    pub sum_capacity: f64,
    pub sum_ts: f64,
    pub sum_tt: f64,
    pub sum_ts_by_q: Vec<f64>,
    pub count_by_q: Vec<u64>,
    pub sum_tt_by_h: Vec<f64>,
    pub count_by_h: Vec<u64>,
    pub skipped_slots: u64,
    /// Exact harvested and spent energy, in ticks.
    pub harvested_ticks: i128,
    pub spent_ticks: i128,
    pub final_energy_ticks: i128,
    pub min_energy_ticks: i128,
    pub min_queue_bits: f64,
    pub max_queue_bits: f64,
    pub queue_ever_positive: bool,
    pub bits_ever_produced: bool,
    /// Means of `bits_in - capacity` over consecutive blocks of the second half.
    pub drift_block_means: Vec<f64>,
    pub sum_drift_second_half: f64,
    #[serde(skip)]
    block_len: u64,
    #[serde(skip)]
    block_sum: f64,
    #[serde(skip)]
    block_n: u64,
    #[serde(skip)]
    queue_log: Vec<f32>,
}

const DRIFT_BLOCKS: u64 = 200;

impl TraceSummary {
    fn new(horizon: u64, nq: usize, nh: usize) -> Self {
        let half = horizon - horizon / 2;
        TraceSummary {
            slots: 0,
            horizon,
            sum_distortion: 0.0,
            sum_queue: 0.0,
            sum_queue_first_half: 0.0,
            sum_queue_second_half: 0.0,
            sum_bits_in: 0.0,
            sum_bits_out: 0.0,
            sum_capacity: 0.0,
            sum_ts: 0.0,
            sum_tt: 0.0,
            sum_ts_by_q: vec![0.0; nq],
            count_by_q: vec![0; nq],
            sum_tt_by_h: vec![0.0; nh],
            count_by_h: vec![0; nh],
            skipped_slots: 0,
            harvested_ticks: 0,
            spent_ticks: 0,
            final_energy_ticks: 0,
            min_energy_ticks: 0,
            min_queue_bits: 0.0,
            max_queue_bits: 0.0,
            queue_ever_positive: false,
            bits_ever_produced: false,
            drift_block_means: Vec::new(),
            sum_drift_second_half: 0.0,
            block_len: (half / DRIFT_BLOCKS).max(1),
            block_sum: 0.0,
            block_n: 0,
            queue_log: Vec::with_capacity(horizon.min(1 << 24) as usize),
        }
    }

    fn push(&mut self, r: &SlotRecord, q_index: usize, h_index: usize) {
        let first_half = self.slots < self.horizon / 2;
        self.slots += 1;
        self.sum_distortion += r.distortion;
        self.sum_queue += r.queue_bits;
        if first_half {
            self.sum_queue_first_half += r.queue_bits;
        } else {
            self.sum_queue_second_half += r.queue_bits;
            let drift = r.bits_in - r.capacity;
            self.sum_drift_second_half += drift;
            self.block_sum += drift;
            self.block_n += 1;
            if self.block_n == self.block_len {
                self.drift_block_means.push(self.block_sum / self.block_len as f64);
                self.block_sum = 0.0;
                self.block_n = 0;
            }
        }
        self.sum_bits_in += r.bits_in;
        self.sum_bits_out += r.bits_out;
        self.sum_capacity += r.capacity;
        self.sum_ts += r.ts;
        self.sum_tt += r.tt;
        self.sum_ts_by_q[q_index] += r.ts;
        self.count_by_q[q_index] += 1;
        self.sum_tt_by_h[h_index] += r.tt;
        self.count_by_h[h_index] += 1;
        self.skipped_slots += r.skipped as u64;
        if self.slots == 1 || r.queue_bits < self.min_queue_bits {
            self.min_queue_bits = r.queue_bits;
        }
        self.max_queue_bits = self.max_queue_bits.max(r.queue_bits);
        self.queue_ever_positive |= r.queue_bits > 0.0;
        self.bits_ever_produced |= r.bits_in > 0.0;
        self.queue_log.push(r.queue_bits as f32);
    }

    fn n(&self) -> f64 {
        self.slots.max(1) as f64
    }

    pub fn mean_distortion(&self) -> f64 {
        self.sum_distortion / self.n()
    }

    pub fn mean_queue(&self) -> f64 {
        self.sum_queue / self.n()
    }

    pub fn mean_bits_in(&self) -> f64 {
        self.sum_bits_in / self.n()
    }

    pub fn mean_bits_out(&self) -> f64 {
        self.sum_bits_out / self.n()
    }

    pub fn mean_ts(&self) -> f64 {
        self.sum_ts / self.n()
    }

    pub fn mean_tt(&self) -> f64 {
        self.sum_tt / self.n()
    }

    /// Mean source energy over slots with observation state `q_index`.
    pub fn mean_ts_given_q(&self, q_index: usize) -> f64 {
        self.sum_ts_by_q[q_index] / self.count_by_q[q_index].max(1) as f64
    }

    /// Mean transmit energy over slots with channel state `h_index`.
    pub fn mean_tt_given_h(&self, h_index: usize) -> f64 {
        self.sum_tt_by_h[h_index] / self.count_by_h[h_index].max(1) as f64
    }

    /// Cumulative spending never exceeded the cumulative harvest and the
    /// buffer never went negative. Exact integer comparison.
    pub fn conservation_holds(&self) -> bool {
        self.spent_ticks <= self.harvested_ticks
            && self.spent_ticks + self.final_energy_ticks == self.harvested_ticks
            && self.min_energy_ticks >= 0
    }

    pub fn nonnegativity_holds(&self) -> bool {
        self.min_energy_ticks >= 0 && self.min_queue_bits >= 0.0
    }
}

/// A simulated run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub seed: u64,
    /// Per-slot records; empty when the run was asked for a summary only.
    pub records: Vec<SlotRecord>,
    pub summary: TraceSummary,
}

impl Trace {
    /// Builds a trace from given records, as if they had been simulated.
    pub fn from_records(seed: u64, records: Vec<SlotRecord>) -> Self {
        let mut s = TraceSummary::new(records.len() as u64, 1, 1);
        for r in &records {
            s.push(r, 0, 0);
        }
        Trace { seed, records, summary: s }
    }

    pub fn len(&self) -> usize {
        self.summary.slots as usize
    }

    pub fn is_empty(&self) -> bool {
        self.summary.slots == 0
    }

    pub const CSV_HEADER: &'static str =
        "slot,energy,queue_bits,q,h,d,ts,tt,bits_in,bits_out,distortion";

    /// Writes the per-slot records as CSV. Analog slots leave `d` empty.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for r in &self.records {
            let d = r.d.map(|d| d.to_string()).unwrap_or_default();
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.slot, r.energy, r.queue_bits, r.q, r.h, d, r.ts, r.tt, r.bits_in, r.bits_out, r.distortion
            )?;
        }
        Ok(())
    }
}

/// One sensor's buffers while a run is in progress.
#[derive(Debug, Clone)]
pub(crate) struct SensorRuntime {
    energy: i128,
    queue: f64,
    slot: u64,
    pub(crate) summary: TraceSummary,
    pub(crate) records: Vec<SlotRecord>,
    keep_records: bool,
}

impl SensorRuntime {
    pub(crate) fn new(spec: &SensorSpec, horizon: u64, keep_records: bool) -> Self {
        SensorRuntime {
            energy: 0,
            queue: 0.0,
            slot: 0,
            summary: TraceSummary::new(horizon, spec.env.q_support.len(), spec.env.h_support.len()),
            records: if keep_records { Vec::with_capacity(horizon as usize) } else { Vec::new() },
            keep_records,
        }
    }

    /// Runs one slot. With `transmit == false` the channel encoder stays off.
    pub(crate) fn advance(
        &mut self,
        spec: &SensorSpec,
        params: &PolicyParams,
        arrival: f64,
        q_index: usize,
        h_index: usize,
        transmit: bool,
    ) -> Result<(), SimError> {
        let e = to_ticks(arrival);
        self.energy += e;
        self.summary.harvested_ticks += e;
        let energy = from_ticks(self.energy);
        let input = DecisionInput { energy, arrival: from_ticks(e), q_index, h_index };
        let mut action = params.decide(&input)?;
        if !transmit {
            action.tt = 0.0;
        }
        let mut ts = to_ticks(action.ts);
        let mut tt = to_ticks(action.tt);
        let over = ts + tt - self.energy;
        if over > 0 {
            // Rounding in the decision rule; anything beyond that is a policy bug.
            if (over as f64) > 1e-9 * (self.energy as f64) + 1e6 {
                return Err(SimError::EnergyViolation {
                    spent: action.ts + action.tt,
                    available: energy,
                });
            }
            let cut = over.min(tt);
            tt -= cut;
            ts -= over - cut;
        }
        action.ts = from_ticks(ts);
        action.tt = from_ticks(tt);
        let out = slot_outcome(spec, self.queue, q_index, h_index, &action);
        let rec = SlotRecord {
            slot: self.slot,
            energy,
            queue_bits: self.queue,
            q: spec.env.q_support[q_index],
            h: spec.env.h_support[h_index],
            d: action.d,
            ts: action.ts,
            tt: action.tt,
            bits_in: out.bits_in,
            bits_out: out.bits_out,
            capacity: out.capacity,
            distortion: out.distortion,
            skipped: out.skipped,
        };
        self.summary.push(&rec, q_index, h_index);
        if self.keep_records {
            self.records.push(rec);
        }
        self.queue = (self.queue - out.capacity).max(0.0) + out.bits_in;
        self.energy -= ts + tt;
        self.summary.spent_ticks += ts + tt;
        self.summary.min_energy_ticks = self.summary.min_energy_ticks.min(self.energy);
        self.summary.final_energy_ticks = self.energy;
        self.slot += 1;
        Ok(())
    }

    pub(crate) fn finish(self, seed: u64) -> Trace {
        Trace { seed, records: self.records, summary: self.summary }
    }
}

pub(crate) fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Simulates `horizon` slots from empty buffers, keeping every record.
pub fn run(spec: &SensorSpec, params: &PolicyParams, horizon: u64, seed: u64) -> Result<Trace, SimError> {
    run_with(spec, params, horizon, seed, true)
}

/// As [`run`], but keeps only the running summary (for long horizons).
pub fn run_summary(
    spec: &SensorSpec,
    params: &PolicyParams,
    horizon: u64,
    seed: u64,
) -> Result<Trace, SimError> {
    run_with(spec, params, horizon, seed, false)
}

fn run_with(
    spec: &SensorSpec,
    params: &PolicyParams,
    horizon: u64,
    seed: u64,
    keep_records: bool,
) -> Result<Trace, SimError> {
    if horizon == 0 {
        return Err(SimError::ZeroHorizon);
    }
    spec.validate()?;
    params.validate(&spec.env)?;
    let mut re = stream(seed, STREAM_ENERGY);
    let mut rq = stream(seed, STREAM_Q);
    let mut rh = stream(seed, STREAM_H);
    let mut rt = SensorRuntime::new(spec, horizon, keep_records);
    for _ in 0..horizon {
        let e = spec.env.energy.sample(re.gen::<f64>());
        let qi = sample_index(&spec.env.q_pmf, rq.gen::<f64>());
        let hi = sample_index(&spec.env.h_pmf, rh.gen::<f64>());
        rt.advance(spec, params, e, qi, hi, true)?;
    }
    Ok(rt.finish(seed))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Stable,
    Unstable,
    Inconclusive,
}

/// Empirical stability surrogate built from the queue drift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityVerdict {
    pub verdict: Verdict,
    /// Mean of offered-arrivals minus channel rate over the second half.
    pub drift_estimate: f64,
    /// 99% block-bootstrap interval of the drift.
    pub drift_ci: (f64, f64),
    /// Fraction of slots with queue above 90% of its maximum.
    pub tail_fraction: f64,
    pub first_half_queue: f64,
    pub second_half_queue: f64,
}

/// Growth allowed between first- and second-half mean queue for `Stable`.
pub const QUEUE_GROWTH_RATIO: f64 = 1.05;
const BOOTSTRAP_REPS: usize = 2000;

pub fn stability_estimate(trace: &Trace) -> Result<StabilityVerdict, SimError> {
    let s = &trace.summary;
    let n = s.slots as usize;
    if n < MIN_STABILITY_SLOTS {
        return Err(SimError::TooShort(n));
    }
    let n_first = s.horizon / 2;
    let n_second = s.slots - n_first;
    let first = s.sum_queue_first_half / n_first as f64;
    let second = s.sum_queue_second_half / n_second as f64;
    let drift = s.sum_drift_second_half / n_second as f64;

    let blocks = &s.drift_block_means;
    let mut rng = stream(trace.seed ^ 0x5eed_b007, 7);
    let mut means: Vec<f64> = (0..BOOTSTRAP_REPS)
        .map(|_| {
            let sum: f64 = (0..blocks.len()).map(|_| blocks[rng.gen_range(0..blocks.len())]).sum();
            sum / blocks.len() as f64
        })
        .collect();
    means.sort_by(f64::total_cmp);
    let lo = means[(0.005 * BOOTSTRAP_REPS as f64) as usize];
    let hi = means[((0.995 * BOOTSTRAP_REPS as f64) as usize).min(BOOTSTRAP_REPS - 1)];

    let cut = 0.9 * s.max_queue_bits as f32;
    let tail = if s.max_queue_bits > 0.0 {
        s.queue_log.iter().filter(|x| **x > cut).count() as f64 / n as f64
    } else {
        0.0
    };

    let verdict = if !s.queue_ever_positive && !s.bits_ever_produced {
        Verdict::Stable
    } else if hi < 0.0 && second <= QUEUE_GROWTH_RATIO * first {
        Verdict::Stable
    } else if lo > 0.0 {
        Verdict::Unstable
    } else {
        Verdict::Inconclusive
    };
    Ok(StabilityVerdict {
        verdict,
        drift_estimate: drift,
        drift_ci: (lo, hi),
        tail_fraction: tail,
        first_half_queue: first,
        second_half_queue: second,
    })
}
