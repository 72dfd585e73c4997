use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use energy_neutral::feasibility::region::{region_sweep, RegionGrid, SweepAxes, SweepOptions};
use energy_neutral::feasibility::{check, synthesize, SynthOptions};
use energy_neutral::mdp::{
    gamma_grid, separable_curve, tradeoff_curve, write_separable_csv, write_tradeoff_csv, SeparableGrid,
};
use energy_neutral::models::Environment;
use energy_neutral::scheduling::{region_sweep_two_sensors, MultiSensorSpec};
use energy_neutral::simulator::{run, run_summary, stability_estimate};
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::config::{Experiment, ExperimentConfig};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{0}")]
    Model(String),
    #[error("writing {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

fn model<E: std::fmt::Display>(e: E) -> RunError {
    RunError::Model(e.to_string())
}

fn create(path: &Path) -> Result<BufWriter<File>, RunError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|source| RunError::Io { path: dir.display().to_string(), source })?;
    }
    File::create(path).map(BufWriter::new).map_err(|source| RunError::Io { path: path.display().to_string(), source })
}

fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), RunError> {
    let mut w = create(path)?;
    f(&mut w).and_then(|_| w.flush()).map_err(|source| RunError::Io { path: path.display().to_string(), source })
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), RunError> {
    write_with(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w)
    })
}

#[derive(Serialize)]
struct Histogram {
    edges: Vec<f64>,
    counts: Vec<usize>,
}

const HISTOGRAM_BINS: usize = 10;

/// Rate margins of every cell that has one, in equal-width bins.
fn margin_histogram(g: &RegionGrid) -> Option<Histogram> {
    let xs: Vec<f64> = g.cells.iter().filter_map(|c| c.margins.rate).filter(|m| m.is_finite()).collect();
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if xs.is_empty() {
        return None;
    }
    let width = (hi - lo) / HISTOGRAM_BINS as f64;
    let mut counts = vec![0; HISTOGRAM_BINS];
    for x in xs {
        let k = if width > 0.0 { ((x - lo) / width) as usize } else { 0 };
        counts[k.min(HISTOGRAM_BINS - 1)] += 1;
    }
    Some(Histogram { edges: (0..=HISTOGRAM_BINS).map(|k| lo + k as f64 * width).collect(), counts })
}

fn grid_summary(g: &RegionGrid) -> serde_json::Value {
    json!({
        "label": g.label,
        "points": [g.axis1.len(), g.axis2.len()],
        "feasible": g.feasible_count(),
        "rate_margin_histogram": margin_histogram(g),
    })
}

fn header(cfg: &ExperimentConfig) -> serde_json::Value {
    json!({ "kind": cfg.experiment.kind(), "seed": cfg.seed, "config_sha256": cfg.hash() })
}

/// Runs an experiment and writes its files under `out`; returns a one-line
/// report.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path, jobs: usize) -> Result<String, RunError> {
    let seed = cfg.seed.unwrap_or(0);
    match &cfg.experiment {
        Experiment::Region { sensor, axes, d_bar, classes } => {
            let opts = SweepOptions { synth: SynthOptions::default(), jobs };
            let mut grids = Vec::new();
            for &class in classes {
                let g = region_sweep(sensor, axes, *d_bar, class, &opts).map_err(model)?;
                write_with(&out.join(format!("{}.csv", g.label)), |w| g.write_csv(w))?;
                grids.push(g);
            }
            let summary = json!({
                "header": header(cfg),
                "d_bar": d_bar,
                "grids": grids.iter().map(grid_summary).collect::<Vec<_>>(),
            });
            write_json(&out.join("summary.json"), &summary)?;
            let counts: Vec<String> = grids.iter().map(|g| format!("{} {}", g.label, g.feasible_count())).collect();
            Ok(format!("feasible points: {}", counts.join(", ")))
        }
        Experiment::Tradeoff { spec, gamma_points, separable } => {
            let gammas = gamma_grid(*gamma_points);
            let joint = tradeoff_curve(spec, &gammas, jobs).map_err(model)?;
            write_with(&out.join("joint.csv"), |w| write_tradeoff_csv(w, &joint))?;
            let mut rows: Vec<(&str, f64, f64, f64)> =
                joint.iter().map(|p| ("joint", p.gamma, p.avg_queue, p.avg_distortion)).collect();
            let sep = if *separable {
                let s = separable_curve(spec, &SeparableGrid::default_for(spec), &gammas, jobs).map_err(model)?;
                write_with(&out.join("separable.csv"), |w| write_separable_csv(w, &s))?;
                rows.extend(s.iter().map(|p| ("separable", p.gamma, p.avg_queue, p.avg_distortion)));
                Some(s)
            } else {
                None
            };
            write_with(&out.join("tradeoff.csv"), |w| {
                writeln!(w, "method,gamma,avg_queue,avg_distortion")?;
                for (m, g, q, d) in &rows {
                    writeln!(w, "{m},{g},{q},{d}")?;
                }
                Ok(())
            })?;
            write_json(&out.join("summary.json"), &json!({ "header": header(cfg), "joint": joint.len(), "separable": sep.map(|s| s.len()) }))?;
            Ok(format!("{} weights written", gammas.len()))
        }
        Experiment::Simulate { sensor, d_bar, class, policy, horizon, records } => {
            let params = match policy {
                Some(p) => p.clone(),
                None => synthesize(*class, sensor, *d_bar)
                    .witness
                    .ok_or_else(|| RunError::Model(format!("no feasible {} policy for this sensor", class.name())))?,
            };
            let report = check(&params, sensor, *d_bar).map_err(model)?;
            let trace = if *records { run(sensor, &params, *horizon, seed) } else { run_summary(sensor, &params, *horizon, seed) }
                .map_err(model)?;
            if *records {
                write_with(&out.join("trace.csv"), |w| trace.write_csv(w))?;
            }
            let verdict = stability_estimate(&trace).ok();
            let s = &trace.summary;
            write_json(
                &out.join("summary.json"),
                &json!({
                    "header": header(cfg),
                    "policy": params,
                    "certified": report.feasible,
                    "slots": s.slots,
                    "mean_distortion": s.mean_distortion(),
                    "mean_queue_bits": s.mean_queue(),
                    "mean_bits_in": s.mean_bits_in(),
                    "mean_bits_out": s.mean_bits_out(),
                    "conservation": s.conservation_holds(),
                    "nonnegative": s.nonnegativity_holds(),
                    "stability": verdict,
                }),
            )?;
            Ok(format!(
                "mean distortion {:.4}, mean queue {:.1} bits, verdict {:?}",
                s.mean_distortion(),
                s.mean_queue(),
                verdict.map(|v| v.verdict)
            ))
        }
        Experiment::Schedule { sensors, points, cases } => {
            let pw = SweepAxes::linear_grid(0.0, 1.0, *points);
            let specs: Vec<MultiSensorSpec> = if cases.is_empty() {
                vec![sensors.clone()]
            } else {
                cases.iter().map(|c| with_second(sensors, *c)).collect::<Result<_, _>>()?
            };
            let mut summaries = Vec::new();
            for (k, spec) in specs.iter().enumerate() {
                let r = region_sweep_two_sensors(spec, &pw, &SynthOptions::default(), jobs).map_err(model)?;
                let dir = out.join(format!("case-{k}"));
                for g in [&r.opportunistic, &r.fixed, &r.outer] {
                    write_with(&dir.join(format!("{}.csv", g.label)), |w| g.write_csv(w))?;
                }
                let e = &spec.sensors.get(1).map(|s| s.env.clone());
                summaries.push(json!({
                    "second_sensor": e.as_ref().map(|e| [e.q_pmf[0], e.h_pmf[0]]),
                    "grids": [grid_summary(&r.opportunistic), grid_summary(&r.fixed), grid_summary(&r.outer)],
                    "fixed_inside_opportunistic": r.fixed.is_subset_of(&r.opportunistic),
                    "opportunistic_inside_single_sensor": r.opportunistic.is_subset_of(&r.outer),
                }));
            }
            write_json(&out.join("summary.json"), &json!({ "header": header(cfg), "cases": summaries }))?;
            Ok(format!("{} sweeps of {}x{} points", specs.len(), points, points))
        }
    }
}

/// The template with the second sensor's worse-state probabilities replaced.
fn with_second(template: &MultiSensorSpec, [pq, ph]: [f64; 2]) -> Result<MultiSensorSpec, RunError> {
    let mut s = template.clone();
    let second = s.sensors.get_mut(1).ok_or_else(|| RunError::Model("cases need a second sensor".into()))?;
    let e = &second.env;
    if e.q_support.len() != 2 || e.h_support.len() != 2 {
        return Err(RunError::Model("cases need two observation and two channel states".into()));
    }
    second.env = Environment::two_state(
        (e.q_support[0], e.q_support[1]),
        pq,
        (e.h_support[0], e.h_support[1]),
        ph,
        e.energy.clone(),
    )
    .map_err(model)?;
    Ok(s)
}
