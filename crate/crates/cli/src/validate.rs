//! Quick consistency checks on a coarse version of an experiment.

use energy_neutral::feasibility::region::{region_sweep, RegionGrid, SweepAxes, SweepOptions};
use energy_neutral::feasibility::{check, synthesize, SynthOptions};
use energy_neutral::mdp::{gamma_grid, separable_curve, strictly_dominates, tradeoff_curve, SeparableGrid};
use energy_neutral::policies::PolicyClass;
use energy_neutral::scheduling::region_sweep_two_sensors;
use energy_neutral::simulator::run_summary;

use crate::config::{ConfigError, Experiment, ExperimentConfig};

/// Grid size used unless overridden.
pub const COARSE_POINTS: usize = 6;
/// Simulations are cut to this many slots.
pub const COARSE_HORIZON: u64 = 20_000;

pub struct Check {
    pub name: String,
    pub ok: bool,
    pub detail: String,
}

fn check_of(name: impl Into<String>, ok: bool, detail: impl Into<String>) -> Check {
    Check { name: name.into(), ok, detail: detail.into() }
}

fn containment(grids: &[RegionGrid], inner: PolicyClass, outer: PolicyClass) -> Option<Check> {
    let find = |c: PolicyClass| grids.iter().find(|g| g.label == c.name());
    let (a, b) = (find(inner)?, find(outer)?);
    Some(check_of(
        format!("{} inside {}", a.label, b.label),
        a.is_subset_of(b),
        format!("{} of {} points", a.feasible_count(), b.feasible_count()),
    ))
}

/// Runs the checks for one config. The config is coarsened first unless
/// `resolution` is given.
pub fn validate(cfg: &ExperimentConfig, resolution: Option<usize>) -> Result<Vec<Check>, ConfigError> {
    let mut cfg = cfg.clone();
    if !matches!(cfg.experiment, Experiment::Simulate { .. }) {
        cfg.experiment.set_resolution(resolution.unwrap_or(COARSE_POINTS))?;
    }
    let invalid = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
    let mut out = Vec::new();
    match &cfg.experiment {
        Experiment::Region { sensor, axes, d_bar, classes } => {
            let mut grids = Vec::new();
            let mut rechecked = 0;
            let mut bad = Vec::new();
            for &class in classes {
                let g = region_sweep(sensor, axes, *d_bar, class, &SweepOptions::default()).map_err(|e| invalid(&e))?;
                for i in 0..axes.axis1().len() {
                    for j in 0..axes.axis2().len() {
                        if !g.cell(i, j).feasible {
                            continue;
                        }
                        let s = axes.spec_at(sensor, i, j).map_err(|e| invalid(&e))?;
                        let ok = synthesize(class, &s, *d_bar)
                            .witness
                            .and_then(|w| check(&w, &s, *d_bar).ok())
                            .is_some_and(|r| r.feasible);
                        rechecked += 1;
                        if !ok {
                            bad.push(format!("{} at ({i},{j})", class.name()));
                        }
                    }
                }
                grids.push(g);
            }
            out.push(check_of("witnesses recheck", bad.is_empty(), format!("{rechecked} witnesses, failing: {bad:?}")));
            for (a, b) in [
                (PolicyClass::Hybrid1, PolicyClass::Do),
                (PolicyClass::Hybrid2, PolicyClass::Do),
                (PolicyClass::GreedyFixed, PolicyClass::Greedy),
            ] {
                out.extend(containment(&grids, a, b));
            }
        }
        Experiment::Tradeoff { spec, gamma_points, separable } => {
            let gammas = gamma_grid(*gamma_points);
            let joint = tradeoff_curve(spec, &gammas, 1).map_err(|e| invalid(&e))?;
            let finite = joint.iter().all(|p| p.avg_queue.is_finite() && p.avg_distortion.is_finite());
            out.push(check_of("joint curve finite", finite, format!("{} points", joint.len())));
            if *separable {
                let sep = separable_curve(spec, &SeparableGrid::default_for(spec), &gammas, 1).map_err(|e| invalid(&e))?;
                let beaten = sep
                    .iter()
                    .flat_map(|s| joint.iter().map(move |j| ((s.avg_queue, s.avg_distortion), (j.avg_queue, j.avg_distortion))))
                    .filter(|&(s, j)| strictly_dominates(s, j))
                    .count();
                out.push(check_of("no separable point dominates the joint curve", beaten == 0, format!("{beaten} dominations")));
            }
        }
        Experiment::Simulate { sensor, d_bar, class, policy, horizon, .. } => {
            let params = match policy {
                Some(p) => Some(p.clone()),
                None => synthesize(*class, sensor, *d_bar).witness,
            };
            out.push(check_of("policy available", params.is_some(), class.name()));
            if let Some(p) = params {
                let t = run_summary(sensor, &p, (*horizon).min(COARSE_HORIZON), cfg.seed.unwrap_or(0))
                    .map_err(|e| invalid(&e))?;
                out.push(check_of("energy conserved", t.summary.conservation_holds(), format!("{} slots", t.summary.slots)));
                out.push(check_of("levels nonnegative", t.summary.nonnegativity_holds(), ""));
            }
        }
        Experiment::Schedule { sensors, points, .. } => {
            let pw = SweepAxes::linear_grid(0.0, 1.0, *points);
            let r = region_sweep_two_sensors(sensors, &pw, &SynthOptions::default(), 1).map_err(|e| invalid(&e))?;
            let counts = |a: &RegionGrid, b: &RegionGrid| format!("{} of {}", a.feasible_count(), b.feasible_count());
            out.push(check_of("fixed inside opportunistic", r.fixed.is_subset_of(&r.opportunistic), counts(&r.fixed, &r.opportunistic)));
            out.push(check_of(
                "opportunistic inside single sensor",
                r.opportunistic.is_subset_of(&r.outer),
                counts(&r.opportunistic, &r.outer),
            ));
        }
    }
    Ok(out)
}
