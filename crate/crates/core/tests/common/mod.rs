//! Independent oracles shared by the integration tests. Rate laws are
//! re-derived here from scratch rather than calling the library.
#![allow(dead_code)]

use energy_neutral::mdp::FiniteMdp;
use nalgebra::{DMatrix, DVector};

/// Plain i.i.d. Gaussian instance used by the grid oracle.
#[derive(Debug, Clone, Copy)]
pub struct Instance {
    pub n: f64,
    pub m: f64,
    pub q: f64,
    pub h: f64,
    pub mean_e: f64,
    pub eps: f64,
    pub d_bar: f64,
    pub d_max: f64,
    pub ts_max: f64,
    pub zeta: f64,
    pub eta: f64,
}

pub fn iid_rate(x: &Instance, d: f64, ts: f64) -> f64 {
    let dm = 1.0 / (1.0 / x.d_max + x.q);
    let f1 = ((x.d_max - dm) / (d - dm)).log2();
    if f1 <= 0.0 {
        return 0.0;
    }
    let b = x.n / x.m;
    let ratio = b * ts / x.ts_max;
    let f2 = if ratio >= 1.0 { x.zeta } else { x.zeta * ratio.powf(-1.0 / x.eta) };
    x.m * f1 * f2
}

pub fn awgn_rate(n: f64, h: f64, tt: f64) -> f64 {
    n * (1.0 + h * tt).log2()
}

pub const ORACLE_LEVELS: usize = 16;

#[derive(Debug, Clone, Copy)]
pub struct OracleVerdict {
    pub feasible: bool,
    /// Best `g - f` over the grid.
    pub margin: f64,
    /// Largest margin change between the best point and a grid neighbour.
    pub step: f64,
}

/// Exhaustive 16-level grid over `(alpha, d, ts, tt)` for a single-state
/// instance.
pub fn do_grid_oracle(x: &Instance) -> OracleVerdict {
    let l = ORACLE_LEVELS;
    let dm = 1.0 / (1.0 / x.d_max + x.q);
    let d_top = x.d_bar.min(x.d_max);
    if d_top <= dm {
        return OracleVerdict { feasible: false, margin: f64::NEG_INFINITY, step: 0.0 };
    }
    let margin_at = |i: usize, j: usize, k: usize, m: usize| -> Option<(f64, bool)> {
        let alpha = (i as f64 + 0.5) / l as f64;
        let d = dm + (j as f64 + 1.0) / l as f64 * (d_top - dm);
        let src = (1.0 - alpha) * x.mean_e - x.eps;
        let ch = alpha * x.mean_e - x.eps;
        if src <= 0.0 || ch < 0.0 {
            return None;
        }
        let ts = (k as f64 + 1.0) / l as f64 * src;
        let tt = (m as f64 + 1.0) / l as f64 * ch;
        let f = iid_rate(x, d, ts);
        let g = awgn_rate(x.n, x.h, tt);
        Some((g - f, f == 0.0 || g - f > 1e-12))
    };
    let mut best: Option<(f64, [usize; 4])> = None;
    let mut feasible = false;
    for i in 0..l {
        for j in 0..l {
            for k in 0..l {
                for m in 0..l {
                    if let Some((g, ok)) = margin_at(i, j, k, m) {
                        feasible |= ok;
                        if best.is_none_or(|b| g > b.0) {
                            best = Some((g, [i, j, k, m]));
                        }
                    }
                }
            }
        }
    }
    let Some((margin, at)) = best else {
        return OracleVerdict { feasible: false, margin: f64::NEG_INFINITY, step: 0.0 };
    };
    let mut step: f64 = 0.0;
    for axis in 0..4 {
        for delta in [-1i64, 1] {
            let mut p = at;
            let v = p[axis] as i64 + delta;
            if v < 0 || v >= l as i64 {
                continue;
            }
            p[axis] = v as usize;
            if let Some((g, _)) = margin_at(p[0], p[1], p[2], p[3]) {
                step = step.max((g - margin).abs());
            }
        }
    }
    OracleVerdict { feasible, margin, step }
}

/// Discounted value of a deterministic policy by a direct linear solve.
pub fn solve_policy(mdp: &FiniteMdp, choice: &[usize], gamma: f64, lambda: f64) -> Vec<f64> {
    let n = mdp.rows.len();
    let mut a = DMatrix::<f64>::identity(n, n);
    let mut c = DVector::<f64>::zeros(n);
    for (s, (rows, &k)) in mdp.rows.iter().zip(choice).enumerate() {
        let row = &rows[k];
        c[s] = row.cost(gamma);
        for &(t, p) in &row.next {
            a[(s, t)] -= lambda * p;
        }
    }
    let v = a.lu().solve(&c).expect("I - lambda P is invertible for lambda < 1");
    v.iter().copied().collect()
}

/// Componentwise minimum of the discounted value over every deterministic
/// stationary policy, and how many policies were enumerated.
pub fn enumerate_policies(mdp: &FiniteMdp, gamma: f64, lambda: f64) -> (Vec<f64>, usize) {
    let n = mdp.rows.len();
    let sizes: Vec<usize> = mdp.rows.iter().map(|r| r.len()).collect();
    let mut choice = vec![0usize; n];
    let mut best = vec![f64::INFINITY; n];
    let mut count = 0;
    loop {
        let v = solve_policy(mdp, &choice, gamma, lambda);
        for (b, x) in best.iter_mut().zip(&v) {
            *b = b.min(*x);
        }
        count += 1;
        let mut s = 0;
        loop {
            if s == n {
                return (best, count);
            }
            choice[s] += 1;
            if choice[s] < sizes[s] {
                break;
            }
            choice[s] = 0;
            s += 1;
        }
    }
}

/// Trade-off model cut down to 8 decision states: one arrival level, one
/// channel state, battery and queue of capacity 1.
pub fn reduced_spec() -> energy_neutral::mdp::DiscreteSpec {
    let mut s = energy_neutral::presets::tradeoff_spec(0.3);
    s.queue_capacity = 1;
    s.battery_capacity = 1;
    s.energy_arrivals = vec![1];
    s.energy_pmf = vec![1.0];
    s.h_support = vec![10.0];
    s.h_pmf = vec![1.0];
    s.d_levels = vec![0.55, 1.0];
    s.ts_levels = vec![0, 1];
    s.tt_levels = vec![0, 1];
    s
}
