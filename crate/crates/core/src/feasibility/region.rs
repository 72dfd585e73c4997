//! Achievable-region sweeps over constant `(q, h)` pairs or over the
//! worse-state probabilities of two-state processes.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use super::{
    combine_do, combine_hybrid1, combine_hybrid2, do_channel_frontier, do_source_frontier, hybrid1_source_frontier,
    hybrid2_channel_frontier, synthesize_with, FeasibilityReport, Margins, SynthOptions,
};
use crate::models::{Environment, ModelError, SensorSpec};
use crate::policies::PolicyClass;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SweepAxes {
    /// Constant states: axis 1 is `q`, axis 2 is `h`.
    ConstantState { q_values: Vec<f64>, h_values: Vec<f64> },
    /// Two-state processes with fixed state values (worse first): axis 1 is
    /// the worse observation probability, axis 2 the worse channel one.
    TwoState { q_states: (f64, f64), h_states: (f64, f64), pw_q_values: Vec<f64>, pw_h_values: Vec<f64> },
}

impl SweepAxes {
    /// `n` log-spaced points per axis on `[lo, hi]`.
    pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        if n == 1 {
            return vec![lo];
        }
        let (a, b) = (lo.ln(), hi.ln());
        (0..n).map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp()).collect()
    }

    /// `n` evenly spaced points on `[lo, hi]`.
    pub fn linear_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        if n == 1 {
            return vec![lo];
        }
        (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
    }

    pub fn constant_state(lo: f64, hi: f64, n: usize) -> Self {
        let v = Self::log_grid(lo, hi, n);
        SweepAxes::ConstantState { q_values: v.clone(), h_values: v }
    }

    pub fn two_state(q_states: (f64, f64), h_states: (f64, f64), n: usize) -> Self {
        let v = Self::linear_grid(0.0, 1.0, n);
        SweepAxes::TwoState { q_states, h_states, pw_q_values: v.clone(), pw_h_values: v }
    }

    pub fn axis1(&self) -> &[f64] {
        match self {
            SweepAxes::ConstantState { q_values, .. } => q_values,
            SweepAxes::TwoState { pw_q_values, .. } => pw_q_values,
        }
    }

    pub fn axis2(&self) -> &[f64] {
        match self {
            SweepAxes::ConstantState { h_values, .. } => h_values,
            SweepAxes::TwoState { pw_h_values, .. } => pw_h_values,
        }
    }

    /// Sensor at grid point `(i, j)`; everything but the environment is
    /// taken from the template.
    pub fn spec_at(&self, template: &SensorSpec, i: usize, j: usize) -> Result<SensorSpec, ModelError> {
        let energy = template.env.energy.clone();
        let env = match self {
            SweepAxes::ConstantState { q_values, h_values } => Environment::constant(q_values[i], h_values[j], energy)?,
            SweepAxes::TwoState { q_states, h_states, pw_q_values, pw_h_values } => {
                Environment::two_state(*q_states, pw_q_values[i], *h_states, pw_h_values[j], energy)?
            }
        };
        Ok(SensorSpec { env, ..template.clone() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub synth: SynthOptions,
    /// Worker threads; 0 or 1 runs on the calling thread.
    pub jobs: usize,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions { synth: SynthOptions::default(), jobs: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionCell {
    pub axis1: f64,
    pub axis2: f64,
    pub feasible: bool,
    pub margins: Margins,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionGrid {
    /// Policy class (or other region) the grid describes.
    pub label: String,
    pub d_bar: f64,
    pub axis1: Vec<f64>,
    pub axis2: Vec<f64>,
    /// Row-major, axis 1 outer.
    pub cells: Vec<RegionCell>,
}

impl RegionGrid {
    pub const CSV_HEADER: &'static str =
        "axis1,axis2,feasible,rate_margin,dist_margin,energy_margin_src,energy_margin_ch";

    pub fn cell(&self, i: usize, j: usize) -> &RegionCell {
        &self.cells[i * self.axis2.len() + j]
    }

    pub fn feasible_count(&self) -> usize {
        self.cells.iter().filter(|c| c.feasible).count()
    }

    /// True when every point feasible here is feasible in `other`.
    pub fn is_subset_of(&self, other: &RegionGrid) -> bool {
        self.cells.len() == other.cells.len() && self.cells.iter().zip(&other.cells).all(|(a, b)| !a.feasible || b.feasible)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        fn opt(x: Option<f64>) -> String {
            x.map(|v| v.to_string()).unwrap_or_default()
        }
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for c in &self.cells {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                c.axis1,
                c.axis2,
                c.feasible,
                opt(c.margins.rate),
                c.margins.distortion,
                opt(c.margins.energy_source),
                opt(c.margins.energy_channel)
            )?;
        }
        Ok(())
    }
}

/// Runs `f` over `0..n`, on `jobs` scoped threads when asked, and returns
/// results in index order.
pub(crate) fn par_map<T: Send>(n: usize, jobs: usize, f: impl Fn(usize) -> T + Sync) -> Vec<T> {
    if jobs <= 1 || n <= 1 {
        return (0..n).map(f).collect();
    }
    let jobs = jobs.min(n);
    let mut out: Vec<Option<T>> = (0..n).map(|_| None).collect();
    std::thread::scope(|s| {
        let f = &f;
        let chunks: Vec<_> = out.chunks_mut(n.div_ceil(jobs)).enumerate().collect();
        let size = n.div_ceil(jobs);
        for (c, chunk) in chunks {
            s.spawn(move || {
                for (k, slot) in chunk.iter_mut().enumerate() {
                    *slot = Some(f(c * size + k));
                }
            });
        }
    });
    out.into_iter().map(|x| x.expect("every index evaluated")).collect()
}

/// Feasibility of `class` at every grid point.
///
/// Classes whose synthesis separates into an observation part and a channel
/// part share those parts across rows and columns.
pub fn region_sweep(
    template: &SensorSpec,
    axes: &SweepAxes,
    d_bar: f64,
    class: PolicyClass,
    opts: &SweepOptions,
) -> Result<RegionGrid, ModelError> {
    template.validate()?;
    let (n1, n2) = (axes.axis1().len(), axes.axis2().len());
    let mut specs = Vec::with_capacity(n1 * n2);
    for i in 0..n1 {
        for j in 0..n2 {
            specs.push(axes.spec_at(template, i, j)?);
        }
    }
    let alphas = opts.synth.alphas();
    let jobs = opts.jobs;
    let row = |i: usize| &specs[i * n2];
    let col = |j: usize| &specs[j];
    let reports: Vec<FeasibilityReport> = match class {
        PolicyClass::Do => {
            let src = par_map(n1, jobs, |i| do_source_frontier(row(i), d_bar, &alphas));
            let ch = par_map(n2, jobs, |j| do_channel_frontier(col(j), &alphas));
            par_map(n1 * n2, jobs, |k| combine_do(&specs[k], d_bar, &alphas, &src[k / n2], &ch[k % n2]))
        }
        PolicyClass::Hybrid1 => {
            let src = par_map(n1, jobs, |i| hybrid1_source_frontier(row(i), d_bar, &alphas));
            let ch = par_map(n2, jobs, |j| do_channel_frontier(col(j), &alphas));
            par_map(n1 * n2, jobs, |k| combine_hybrid1(&specs[k], d_bar, &alphas, &src[k / n2], &ch[k % n2]))
        }
        PolicyClass::Hybrid2 => {
            let src = par_map(n1, jobs, |i| do_source_frontier(row(i), d_bar, &alphas));
            let ch = par_map(n2, jobs, |j| hybrid2_channel_frontier(col(j), &alphas));
            par_map(n1 * n2, jobs, |k| combine_hybrid2(&specs[k], d_bar, &alphas, &src[k / n2], &ch[k % n2]))
        }
        _ => par_map(n1 * n2, jobs, |k| synthesize_with(class, &specs[k], d_bar, &opts.synth)),
    };
    let cells = reports
        .iter()
        .enumerate()
        .map(|(k, r)| RegionCell {
            axis1: axes.axis1()[k / n2],
            axis2: axes.axis2()[k % n2],
            feasible: r.feasible,
            margins: r.margins,
        })
        .collect();
    Ok(RegionGrid { label: class.name().to_string(), d_bar, axis1: axes.axis1().to_vec(), axis2: axes.axis2().to_vec(), cells })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feasibility::synthesize;
    use crate::models::{EnergyDistribution, GaussianIidSource, SlotGeometry, SourceModel};

    fn template() -> SensorSpec {
        SensorSpec::new(
            SlotGeometry::new(100, 100).unwrap(),
            SourceModel::GaussianIid(GaussianIidSource::new(1.0, 1.0, 1.0, 1.5).unwrap()),
            Environment::constant(1.0, 1.0, EnergyDistribution::Uniform { lo: 0.0, hi: 2.0 }).unwrap(),
        )
    }

    #[test]
    fn grids() {
        let g = SweepAxes::log_grid(0.1, 1000.0, 5);
        assert!((g[0] - 0.1).abs() < 1e-15 && (g[4] - 1000.0).abs() < 1e-9);
        assert!((g[2] - 10.0).abs() < 1e-12);
        assert_eq!(SweepAxes::linear_grid(0.0, 1.0, 3), vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn cached_sweep_matches_direct_synthesis() {
        let axes = SweepAxes::constant_state(0.5, 50.0, 4);
        let t = template();
        for class in [PolicyClass::Do, PolicyClass::Hybrid1, PolicyClass::Hybrid2] {
            let grid = region_sweep(&t, &axes, 0.8, class, &SweepOptions::default()).unwrap();
            for i in 0..4 {
                for j in 0..4 {
                    let direct = synthesize(class, &axes.spec_at(&t, i, j).unwrap(), 0.8);
                    assert_eq!(grid.cell(i, j).feasible, direct.feasible, "{class} {i} {j}");
                    assert_eq!(grid.cell(i, j).margins, direct.margins);
                }
            }
        }
    }

    #[test]
    fn parallel_matches_serial() {
        let axes = SweepAxes::two_state((0.1, 100.0), (0.1, 100.0), 5);
        let t = template();
        let a = region_sweep(&t, &axes, 0.8, PolicyClass::Do, &SweepOptions::default()).unwrap();
        let b = region_sweep(&t, &axes, 0.8, PolicyClass::Do, &SweepOptions { jobs: 3, ..Default::default() }).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn csv_layout() {
        let axes = SweepAxes::constant_state(1.0, 10.0, 2);
        let grid = region_sweep(&template(), &axes, 0.8, PolicyClass::Analog, &SweepOptions::default()).unwrap();
        let mut buf = Vec::new();
        grid.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], RegionGrid::CSV_HEADER);
        assert_eq!(lines.len(), 5);
        for l in &lines[1..] {
            let f: Vec<_> = l.split(',').collect();
            assert_eq!(f.len(), 7);
            assert_eq!(f[3], "");
            assert_eq!(f[5], "");
        }
    }
}
