use energy_neutral::feasibility::{check, check_do, synthesize, synthesize_do};
use energy_neutral::mdp::{build_mdp, value_iteration, VI_TOL};
use energy_neutral::models::{EnergyDistribution, Environment, SensorSpec};
use energy_neutral::policies::{PolicyClass, PolicyParams};
use energy_neutral::presets;
use energy_neutral::scheduling::{check_multi, MultiSensorSpec, SchedulePolicy};
use energy_neutral::simulator::run;
use proptest::prelude::*;

fn two_state(n: u32, m: u32, q: (f64, f64), pq: f64, h: (f64, f64), ph: f64, hi: f64) -> SensorSpec {
    let env = Environment::two_state(q, pq, h, ph, EnergyDistribution::Uniform { lo: 0.0, hi }).unwrap();
    presets::sensor(n, m, env)
}

fn sensor_strategy() -> impl Strategy<Value = SensorSpec> {
    (
        prop::sample::select(vec![(201u32, 1000u32), (100, 100), (500, 100)]),
        0.1f64..100.0,
        1.0f64..10.0,
        0.0f64..=1.0,
        0.1f64..100.0,
        1.0f64..10.0,
        0.0f64..=1.0,
        0.5f64..4.0,
    )
        .prop_map(|((n, m), q, qs, pq, h, hs, ph, hi)| two_state(n, m, (q, q * qs), pq, (h, h * hs), ph, hi))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn witnesses_pass_their_checkers(spec in sensor_strategy(), d_bar in 0.6f64..0.95) {
        for class in PolicyClass::ALL {
            let r = synthesize(class, &spec, d_bar);
            if let Some(w) = &r.witness {
                let again = check(w, &spec, d_bar).unwrap();
                prop_assert!(again.feasible, "{:?}", class);
                prop_assert!(again.margins.distortion >= 0.0);
            }
        }
    }

    #[test]
    fn class_containment_per_point(spec in sensor_strategy(), d_bar in 0.6f64..0.95) {
        let ok = |c| synthesize(c, &spec, d_bar).feasible;
        let d = ok(PolicyClass::Do);
        prop_assert!(d || !ok(PolicyClass::Hybrid1));
        prop_assert!(d || !ok(PolicyClass::Hybrid2));
        prop_assert!(ok(PolicyClass::Greedy) || !ok(PolicyClass::GreedyFixed));
    }

    #[test]
    fn simulated_traces_conserve_energy(
        spec in sensor_strategy(),
        d in 0.7f64..1.0, ts in 0.0f64..2.0, tt in 0.0f64..2.0, alpha in 0.01f64..0.99,
        seed in any::<u64>(),
    ) {
        let p = PolicyParams::Do {
            d_per_q: vec![d; 2],
            ts_per_q: vec![ts, 0.5 * ts],
            tt_per_h: vec![tt, 2.0 * tt],
            alpha,
            epsilon: spec.epsilon(),
        };
        let trace = run(&spec, &p, 2_000, seed).unwrap();
        prop_assert!(trace.summary.conservation_holds());
        prop_assert!(trace.summary.nonnegativity_holds());
        for r in &trace.records {
            prop_assert!(r.energy >= 0.0 && r.queue_bits >= 0.0);
        }
    }

    #[test]
    fn single_sensor_schedule_reduces(spec in sensor_strategy(), d_bar in 0.6f64..0.95, scale in 0.2f64..2.0) {
        let Some(w) = synthesize_do(&spec, d_bar).witness else { return Ok(()) };
        // Perturb the witness so both verdicts get exercised.
        let PolicyParams::Do { d_per_q, ts_per_q, tt_per_h, alpha, epsilon } = w else { unreachable!() };
        let p = PolicyParams::Do { d_per_q, ts_per_q, tt_per_h: tt_per_h.iter().map(|t| t * scale).collect(), alpha, epsilon };
        let multi = MultiSensorSpec::independent(vec![spec.clone()], vec![d_bar]);
        let sched = SchedulePolicy::Opportunistic { beta: vec![vec![1.0]; 2], per_sensor: vec![p.clone()] };
        prop_assert_eq!(&check_multi(&sched, &multi).unwrap().per_sensor[0], &check_do(&p, &spec, d_bar).unwrap());
    }

    #[test]
    fn schedule_rows_must_be_distributions(a in 0.0f64..1.0, b in 0.0f64..1.0) {
        prop_assume!((a + b - 1.0).abs() > 1e-6);
        let json = format!(r#"{{"variant":"fixed","beta":[{a},{b}],"per_sensor":[]}}"#);
        prop_assert!(serde_json::from_str::<SchedulePolicy>(&json).is_err());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn mdp_kernel_and_backups(pw in 0.05f64..0.95, gamma in 0.0f64..=1.0) {
        let spec = presets::tradeoff_spec(pw);
        let mdp = build_mdp(&spec).unwrap();
        for rows in &mdp.rows {
            for r in rows {
                let total: f64 = r.next.iter().map(|(_, p)| p).sum();
                prop_assert!((total - 1.0).abs() < 1e-12);
            }
        }
        let sol = value_iteration(&mdp, gamma, spec.lambda, VI_TOL);
        for w in sol.residuals.windows(2) {
            prop_assert!(w[1] <= spec.lambda * w[0] + 1e-12);
        }
        // One more backup keeps the greedy action map.
        let again = value_iteration(&mdp, gamma, spec.lambda, VI_TOL * 1e-2);
        let q = |s: usize, k: usize| {
            let r = &mdp.rows[s][k];
            r.cost(gamma) + spec.lambda * r.next.iter().map(|&(j, p)| p * again.value[j]).sum::<f64>()
        };
        for s in 0..mdp.rows.len() {
            prop_assert!((q(s, sol.choice[s]) - q(s, again.choice[s])).abs() < 1e-8);
        }
    }
}
