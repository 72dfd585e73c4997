//! Per-observation-state distortion and source-energy allocation that
//! minimizes the mean compression rate under an average distortion target
//! and an average energy budget.
//!
//! The rate is convex in distortion and in energy separately, so the solver
//! alternates exact one-block minimizations (each a multiplier bisection on
//! a closed-form stationarity condition) from several starting points.

use std::f64::consts::LN_2;

use crate::models::{GaussMarkovSource, GaussianIidSource, SensorSpec, SourceModel};

#[derive(Debug, Clone, PartialEq)]
pub struct SourceAllocation {
    pub d: Vec<f64>,
    pub ts: Vec<f64>,
    /// Mean rate in bits per slot, evaluated with the model itself.
    pub mean_rate: f64,
}

const MAX_SWEEPS: usize = 300;
const OBJ_TOL: f64 = 1e-8;

pub(crate) fn dot(p: &[f64], v: &[f64]) -> f64 {
    p.iter().zip(v).map(|(p, v)| p * v).sum()
}

/// Largest `x` in a decreasing-sum bisection such that `sum(x) <= target`,
/// searched in log space between `lo` and `hi`.
fn bisect_decreasing(mut lo: f64, mut hi: f64, target: f64, sum: impl Fn(f64) -> f64) -> f64 {
    // Invariant: sum(lo) > target >= sum(hi).
    for _ in 0..400 {
        let mid = (lo * hi).sqrt();
        if !(mid > lo && mid < hi) {
            break;
        }
        if sum(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Brackets a multiplier so that `sum(lo) > target >= sum(hi)` for a sum
/// that decreases in the multiplier.
fn bracket(target: f64, sum: &impl Fn(f64) -> f64) -> Option<(f64, f64)> {
    let mut lo = 1.0;
    let mut hi = 1.0;
    let mut n = 0;
    while sum(lo) <= target {
        lo *= 1e-4;
        n += 1;
        if n > 200 {
            return None;
        }
    }
    n = 0;
    while sum(hi) > target {
        hi *= 1e4;
        n += 1;
        if n > 200 {
            return None;
        }
    }
    Some((lo, hi))
}

/// Best allocation with `sum p D <= d_bar` and `sum p T <= budget`, or
/// `None` when no allocation has a finite rate.
pub fn allocate_source(spec: &SensorSpec, d_bar: f64, budget: f64) -> Option<SourceAllocation> {
    let alloc = match &spec.source {
        SourceModel::GaussianIid(m) => iid::solve(m, spec, d_bar, budget)?,
        SourceModel::GaussMarkov(m) => markov::solve(m, spec, d_bar, budget)?,
    };
    let (mut d, mut ts) = alloc;
    fit_budget(&spec.env.q_pmf, &mut d, d_bar);
    fit_budget(&spec.env.q_pmf, &mut ts, budget);
    finish(spec, d, ts)
}

/// Scales `v` down until `sum p v <= budget` holds in floating point.
pub(crate) fn fit_budget(p: &[f64], v: &mut [f64], budget: f64) {
    let budget = budget.max(0.0);
    let mut used = dot(p, v);
    let mut shrink = 1.0;
    while used > budget {
        let s = if used > 0.0 { budget / used * (1.0 - shrink * f64::EPSILON) } else { 0.0 };
        v.iter_mut().for_each(|x| *x *= s);
        used = dot(p, v);
        shrink *= 2.0;
    }
}

fn finish(spec: &SensorSpec, d: Vec<f64>, ts: Vec<f64>) -> Option<SourceAllocation> {
    let env = &spec.env;
    let mut mean = 0.0;
    for (i, p) in env.q_pmf.iter().enumerate() {
        if *p == 0.0 {
            continue;
        }
        match spec.source_rate(d[i], ts[i], env.q_support[i]) {
            Ok(f) => mean += p * f,
            Err(_) => return None,
        }
    }
    Some(SourceAllocation { d, ts, mean_rate: mean })
}

mod iid {
    use super::*;

    struct Ctx<'a> {
        p: &'a [f64],
        dm: Vec<f64>,
        d_max: f64,
        t_sat: f64,
        kappa: f64,
        eta: f64,
        b: f64,
        m: &'a GaussianIidSource,
    }

    impl Ctx<'_> {
        fn phi(&self, t: f64) -> f64 {
            let x = self.b * t / self.m.ts_max;
            if x >= 1.0 {
                self.m.zeta
            } else {
                self.m.zeta * x.powf(-1.0 / self.eta)
            }
        }

        fn a(&self, i: usize, d: f64) -> f64 {
            ((self.d_max - self.dm[i]) / (d - self.dm[i])).log2().max(0.0)
        }

        fn objective(&self, d: &[f64], t: &[f64]) -> f64 {
            (0..self.p.len())
                .filter(|&i| self.p[i] > 0.0)
                .map(|i| {
                    let a = self.a(i, d[i]);
                    if a == 0.0 {
                        0.0
                    } else {
                        self.p[i] * a * self.phi(t[i])
                    }
                })
                .sum()
        }

        fn d_of(&self, i: usize, phi: f64, nu: f64) -> f64 {
            (self.dm[i] + phi / (nu * LN_2)).min(self.d_max)
        }

        fn d_step(&self, t: &[f64], d_bar: f64) -> Vec<f64> {
            let phis: Vec<f64> = t.iter().map(|&t| self.phi(t)).collect();
            let n = self.p.len();
            let sum = |nu: f64| (0..n).map(|i| self.p[i] * self.d_of(i, phis[i], nu)).sum::<f64>();
            if sum(1e-300) <= d_bar {
                return vec![self.d_max; n];
            }
            let (lo, hi) = bracket(d_bar, &sum).expect("distortion target above the estimation floor");
            let nu = bisect_decreasing(lo, hi, d_bar, sum);
            (0..n).map(|i| self.d_of(i, phis[i], nu)).collect()
        }

        fn t_of(&self, a: f64, mu: f64) -> f64 {
            if a == 0.0 {
                0.0
            } else {
                (a * self.kappa / mu).powf(self.eta / (self.eta + 1.0)).min(self.t_sat)
            }
        }

        fn t_step(&self, d: &[f64], budget: f64) -> Vec<f64> {
            let n = self.p.len();
            let a: Vec<f64> = (0..n).map(|i| self.a(i, d[i])).collect();
            let sum = |mu: f64| (0..n).map(|i| self.p[i] * self.t_of(a[i], mu)).sum::<f64>();
            if sum(1e-300) <= budget {
                return (0..n).map(|i| self.t_of(a[i], 1e-300)).collect();
            }
            match bracket(budget, &sum) {
                Some((lo, hi)) => {
                    let mu = bisect_decreasing(lo, hi, budget, sum);
                    (0..n).map(|i| self.t_of(a[i], mu)).collect()
                }
                None => vec![0.0; n],
            }
        }
    }

    pub(super) fn solve(
        m: &GaussianIidSource,
        spec: &SensorSpec,
        d_bar: f64,
        budget: f64,
    ) -> Option<(Vec<f64>, Vec<f64>)> {
        let env = &spec.env;
        let n = env.q_support.len();
        let p = &env.q_pmf;
        let dm: Vec<f64> = env.q_support.iter().map(|&q| m.d_mmse(q.max(0.0))).collect();
        if env.q_support.iter().any(|q| *q < 0.0) {
            return None;
        }
        if m.d_max <= d_bar {
            return Some((vec![m.d_max; n], vec![0.0; n]));
        }
        if dot(p, &dm) >= d_bar || !(budget > 0.0) {
            return None;
        }
        let b = spec.geometry.bandwidth_ratio();
        let ctx = Ctx {
            p,
            dm: dm.clone(),
            d_max: m.d_max,
            t_sat: m.ts_max / b,
            kappa: m.zeta * (b / m.ts_max).powf(-1.0 / m.eta) / m.eta,
            eta: m.eta,
            b,
            m,
        };
        let cap = |t: f64| t.min(ctx.t_sat);
        let worst = (0..n).max_by(|&i, &j| dm[i].total_cmp(&dm[j])).unwrap_or(0);
        let best = (0..n).min_by(|&i, &j| dm[i].total_cmp(&dm[j])).unwrap_or(0);
        let tilted = |k: usize| -> Vec<f64> {
            // Three quarters of the budget on state k, the rest spread.
            (0..n)
                .map(|i| {
                    let share = if i == k && p[k] > 0.0 { 0.75 * budget / p[k] } else { 0.0 };
                    cap(share + 0.25 * budget)
                })
                .collect()
        };
        let inits = vec![
            vec![cap(budget); n],
            tilted(worst),
            tilted(best),
            (0..n).map(|i| cap(budget * dm[i] / dot(p, &dm).max(1e-300))).collect(),
        ];
        let mut best_sol: Option<(f64, Vec<f64>, Vec<f64>)> = None;
        for t0 in inits {
            let mut t = t0;
            let mut d = ctx.d_step(&t, d_bar);
            let mut obj = ctx.objective(&d, &t);
            for _ in 0..MAX_SWEEPS {
                t = ctx.t_step(&d, budget);
                d = ctx.d_step(&t, d_bar);
                let next = ctx.objective(&d, &t);
                let done = (obj - next).abs() <= OBJ_TOL * next.abs().max(1e-12);
                obj = next;
                if done {
                    break;
                }
            }
            if best_sol.as_ref().is_none_or(|b| obj < b.0) {
                best_sol = Some((obj, d, t));
            }
        }
        best_sol.map(|(_, d, t)| (d, t))
    }
}

mod markov {
    use super::*;

    pub(super) fn solve(
        m: &GaussMarkovSource,
        spec: &SensorSpec,
        d_bar: f64,
        budget: f64,
    ) -> Option<(Vec<f64>, Vec<f64>)> {
        let env = &spec.env;
        let n = env.q_support.len();
        let p = &env.q_pmf;
        if env.q_support.iter().any(|q| !(0.0..1.0).contains(q)) {
            return None;
        }
        let floor = m.min_energy(&spec.geometry);
        let t_min = (floor * (1.0 + 1e-9)).max(1e-12);
        if !(budget >= t_min) || !(d_bar > 0.0) {
            return None;
        }
        let c: Vec<f64> = env.q_support.iter().map(|q| (1.0 - q * q).log2()).collect();
        let zd = m.zeta * m.d_max;
        let ub = |i: usize, t: f64| zd * (c[i] * (1.0 - floor / t)).exp2();

        let objective = |d: &[f64], t: &[f64]| -> f64 {
            (0..n)
                .filter(|&i| p[i] > 0.0)
                .map(|i| p[i] * ((zd / d[i]).log2() + c[i] * (1.0 - floor / t[i])).max(0.0))
                .sum()
        };
        let d_step = |t: &[f64]| -> Vec<f64> {
            let ubs: Vec<f64> = (0..n).map(|i| ub(i, t[i])).collect();
            let d_of = |i: usize, nu: f64| (1.0 / (nu * LN_2)).min(ubs[i]);
            let sum = |nu: f64| (0..n).map(|i| p[i] * d_of(i, nu)).sum::<f64>();
            if dot(p, &ubs) <= d_bar {
                return ubs;
            }
            let (lo, hi) = bracket(d_bar, &sum).expect("positive distortion target");
            let nu = bisect_decreasing(lo, hi, d_bar, sum);
            (0..n).map(|i| d_of(i, nu)).collect()
        };
        let t_step = |d: &[f64]| -> Vec<f64> {
            let a: Vec<f64> = (0..n).map(|i| (zd / d[i]).log2() + c[i]).collect();
            let r: Vec<f64> = (0..n).map(|i| -c[i] * floor).collect();
            let cap: Vec<f64> = (0..n)
                .map(|i| if a[i] < 0.0 { (r[i] / -a[i]).max(t_min) } else { f64::INFINITY })
                .collect();
            let t_of = |i: usize, mu: f64| {
                if r[i] <= 0.0 {
                    t_min
                } else {
                    (r[i] / mu).sqrt().clamp(t_min, cap[i])
                }
            };
            let sum = |mu: f64| (0..n).map(|i| p[i] * t_of(i, mu)).sum::<f64>();
            if sum(1e-300) <= budget {
                return (0..n).map(|i| t_of(i, 1e-300)).collect();
            }
            match bracket(budget, &sum) {
                Some((lo, hi)) => {
                    let mu = bisect_decreasing(lo, hi, budget, sum);
                    (0..n).map(|i| t_of(i, mu)).collect()
                }
                None => vec![t_min; n],
            }
        };
        let inits = [vec![budget; n], vec![(0.5 * budget).max(t_min); n]];
        let mut best: Option<(f64, Vec<f64>, Vec<f64>)> = None;
        for t0 in inits {
            let mut t = t0;
            let mut d = d_step(&t);
            let mut obj = objective(&d, &t);
            for _ in 0..MAX_SWEEPS {
                t = t_step(&d);
                d = d_step(&t);
                let next = objective(&d, &t);
                let done = (obj - next).abs() <= OBJ_TOL * next.abs().max(1e-12);
                obj = next;
                if done {
                    break;
                }
            }
            if best.as_ref().is_none_or(|b| obj < b.0) {
                best = Some((obj, d, t));
            }
        }
        best.map(|(_, d, t)| (d, t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{EnergyDistribution, Environment, SlotGeometry};

    fn iid_spec(qs: Vec<f64>, pq: Vec<f64>) -> SensorSpec {
        SensorSpec::new(
            SlotGeometry::new(100, 100).unwrap(),
            SourceModel::GaussianIid(GaussianIidSource::new(1.0, 1.0, 1.0, 1.5).unwrap()),
            Environment::new(qs, pq, vec![1.0], vec![1.0], EnergyDistribution::point(1.0)).unwrap(),
        )
    }

    #[test]
    fn single_state_uses_full_budget_and_target() {
        let s = iid_spec(vec![10.0], vec![1.0]);
        let a = allocate_source(&s, 0.8, 0.4).unwrap();
        assert!((a.d[0] - 0.8).abs() < 1e-9 && a.d[0] <= 0.8);
        assert!((a.ts[0] - 0.4).abs() < 1e-9 && a.ts[0] <= 0.4);
    }

    #[test]
    fn infeasible_below_estimation_floor() {
        let s = iid_spec(vec![0.1, 100.0], vec![0.9, 0.1]);
        assert!(allocate_source(&s, 0.8, 1.0).is_none());
    }

    #[test]
    fn zero_rate_at_d_max() {
        let s = iid_spec(vec![0.5, 3.0], vec![0.5, 0.5]);
        let a = allocate_source(&s, 1.0, 0.3).unwrap();
        assert_eq!(a.mean_rate, 0.0);
    }

    // Two-state brute force over a fine grid of (D_0, T_0); the other state
    // takes whatever remains of both budgets.
    #[test]
    fn two_state_matches_grid_search() {
        let s = iid_spec(vec![0.631, 1.0], vec![0.3, 0.7]);
        let (d_bar, budget) = (0.8, 0.45);
        let a = allocate_source(&s, d_bar, budget).unwrap();
        assert!(dot(&s.env.q_pmf, &a.d) <= d_bar + 1e-12);
        assert!(dot(&s.env.q_pmf, &a.ts) <= budget + 1e-12);
        let (p0, p1) = (0.3, 0.7);
        let mut best = f64::INFINITY;
        let n = 600;
        for i in 1..n {
            let d0 = 0.62 + (1.0 - 0.62) * i as f64 / n as f64;
            let d1 = (d_bar - p0 * d0) / p1;
            if d1 <= 0.5 || d1 > 1.0 {
                continue;
            }
            for j in 1..n {
                let t0 = budget / p0 * j as f64 / n as f64;
                let t1 = (budget - p0 * t0) / p1;
                if t1 <= 0.0 {
                    continue;
                }
                let r = p0 * s.source_rate(d0, t0, 0.631).unwrap() + p1 * s.source_rate(d1, t1, 1.0).unwrap();
                best = best.min(r);
            }
        }
        assert!(a.mean_rate <= best * (1.0 + 1e-3), "{} vs grid {}", a.mean_rate, best);
    }

    #[test]
    fn gauss_markov_allocation_respects_constraints() {
        let s = SensorSpec::new(
            SlotGeometry::new(100, 100).unwrap(),
            SourceModel::GaussMarkov(GaussMarkovSource::new(1.0, 1.0, 0.1).unwrap()),
            Environment::new(vec![0.1, 0.5], vec![0.5, 0.5], vec![1.0], vec![1.0], EnergyDistribution::point(1.0))
                .unwrap(),
        );
        let a = allocate_source(&s, 0.3, 0.5).unwrap();
        assert!(dot(&s.env.q_pmf, &a.d) <= 0.3 + 1e-12);
        assert!(dot(&s.env.q_pmf, &a.ts) <= 0.5 + 1e-12);
        assert!(a.ts.iter().all(|t| *t > 0.1));
        assert!(a.mean_rate > 0.0);
        // Too little energy to reach the compressor's floor.
        assert!(allocate_source(&s, 0.3, 0.05).is_none());
    }
}
