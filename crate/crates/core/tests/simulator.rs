use std::sync::Arc;

use ergodic_core::simulator::{step_warnings, FnPolicy, NeverOrder, ReflectionScheme};
use ergodic_core::{
    make_ss_policy, regenerative_cycle_stats, simulate, simulate_coupled, simulate_reflected,
    stationary_cdf, Coefficient, DemandModel, Error, HoldingCost, ImpulsePolicy, OrderingCost,
    SimConfig,
};

fn cfg(dt: f64, horizon: f64, replications: usize) -> SimConfig {
    SimConfig {
        dt,
        horizon,
        replications,
        ..SimConfig::default()
    }
}

fn baseline() -> (DemandModel, HoldingCost, OrderingCost) {
    (
        DemandModel::baseline(),
        HoldingCost::absolute(),
        OrderingCost::fixed(1.0).unwrap(),
    )
}

#[test]
fn regenerative_cycles_match_closed_forms() {
    let (m, h, _) = baseline();
    let est = regenerative_cycle_stats(&m, &h, 0.0, 2.0, &cfg(1e-3, 2e3, 4)).unwrap();
    assert!(est.cycles > 3000);
    let t = est.cycle_time;
    let c = est.cycle_cost;
    assert!((t.mean - 2.0).abs() <= 4.0 * t.std_error + 0.01, "{t:?}");
    assert!((c.mean - 4.0).abs() <= 4.0 * c.std_error + 0.02, "{c:?}");
}

#[test]
fn replication_streams_are_independent_of_count() {
    let (m, h, c) = baseline();
    let p = make_ss_policy(-1.0, 1.0).unwrap();
    let one = simulate(&m, &h, &c, &p, &cfg(1e-2, 100.0, 1), 0.0).unwrap();
    let three = simulate(&m, &h, &c, &p, &cfg(1e-2, 100.0, 3), 0.0).unwrap();
    assert_eq!(one.replication_costs[0], three.replication_costs[0]);
    assert_ne!(three.replication_costs[1], three.replication_costs[2]);
    let other = SimConfig {
        seed: 7,
        ..cfg(1e-2, 100.0, 1)
    };
    let reseeded = simulate(&m, &h, &c, &p, &other, 0.0).unwrap();
    assert_ne!(reseeded.replication_costs[0], one.replication_costs[0]);
}

#[test]
fn order_events_follow_the_policy() {
    let (m, h, c) = baseline();
    let p = make_ss_policy(-1.0, 1.0).unwrap();
    let t = simulate(&m, &h, &c, &p, &cfg(1e-3, 50.0, 1), 0.0).unwrap();
    assert_eq!(t.order_count as usize, t.order_events.len());
    assert!((t.order_cost_total - t.order_count as f64).abs() < 1e-12);
    for e in &t.order_events {
        // Orders start from at or below s and at most a few σ√dt beyond it.
        assert!(e.quantity >= 2.0 && e.quantity < 2.2, "{e:?}");
    }
}

#[test]
fn never_ordering_drifts_away() {
    let (m, h, c) = baseline();
    let t = simulate(&m, &h, &c, &NeverOrder, &cfg(1e-2, 100.0, 1), 0.0).unwrap();
    assert_eq!(t.order_count, 0);
    assert!(t.final_state < -50.0);
}

#[test]
fn divergence_is_reported() {
    let (m, h, c) = baseline();
    let p = FnPolicy::new("flood", |_| 1e13);
    assert!(matches!(
        simulate(&m, &h, &c, &p, &cfg(1e-2, 1.0, 1), 0.0),
        Err(Error::Simulation { step: 0, .. })
    ));
}

#[test]
fn bad_configs_are_rejected() {
    let (m, h, c) = baseline();
    let p = make_ss_policy(-1.0, 1.0).unwrap();
    for bad in [cfg(0.0, 10.0, 1), cfg(1e-2, 0.05, 1), cfg(1e-2, 10.0, 0)] {
        assert!(matches!(
            simulate(&m, &h, &c, &p, &bad, 0.0),
            Err(Error::Invalid(_))
        ));
    }
    assert!(!step_warnings(&m, &cfg(0.5, 100.0, 1)).is_empty());
    assert!(step_warnings(&m, &cfg(1e-3, 100.0, 1)).is_empty());
}

#[test]
fn coupling_holds_for_irregular_base_policies() {
    let (m, h, c) = baseline();
    let jumpy: Arc<dyn ImpulsePolicy> = Arc::new(FnPolicy::new("jumpy", |ctx| {
        if ctx.state <= -1.0 {
            3.0 + 10.0 * (ctx.time * 0.37).sin().abs()
        } else if ctx.state < 0.5 && (ctx.time * 10.0).fract() < 0.01 {
            7.0
        } else {
            0.0
        }
    }));
    for j in [1.0, 4.0, 15.0] {
        let run =
            simulate_coupled(&m, &h, &c, jumpy.clone(), j, &cfg(1e-2, 300.0, 2), 2.0).unwrap();
        assert!(run.max_truncated_post_order <= j + 1e-12);
        assert_eq!(run.truncated.policy, format!("truncate[j={j}](jumpy)"));
    }
}

#[test]
fn truncation_costs_more_than_its_base_here() {
    let m = DemandModel::baseline();
    let h = HoldingCost::linear(0.01, 0.01).unwrap();
    let c = OrderingCost::fixed(100.0).unwrap();
    let base: Arc<dyn ImpulsePolicy> = Arc::new(make_ss_policy(0.0, 100.0).unwrap());
    let run = simulate_coupled(&m, &h, &c, base, 10.0, &cfg(1e-2, 2e3, 2), 100.0).unwrap();
    assert!(run.gap.mean > 0.0);
    let direct = run.truncated.average_cost - run.base.average_cost;
    assert!((direct - run.gap.mean).abs() < 1e-9 * direct.abs().max(1.0));
}

#[test]
fn stationary_cdf_of_a_variable_model() {
    let m = DemandModel::new(
        Coefficient::Tanh {
            base: 1.0,
            amplitude: 0.4,
            center: 1.0,
            scale: 1.0,
        },
        Coefficient::Constant(1.0),
        (0.6, 1.4),
        (1.0, 1.0),
    )
    .unwrap();
    // Density ∝ exp(-∫_0^z 2μ), normalised by trapezoid.
    let step = 1e-4;
    let n = 300_000;
    let mut i_acc = 0.0;
    let mut dens = vec![1.0];
    for k in 1..=n {
        let u = k as f64 * step;
        i_acc += 0.5 * (2.0 * m.mu(u - step) + 2.0 * m.mu(u)) * step;
        dens.push((-i_acc).exp());
    }
    let total: f64 = dens.windows(2).map(|w| 0.5 * (w[0] + w[1]) * step).sum();
    let mut acc = 0.0;
    for k in 1..=n {
        acc += 0.5 * (dens[k - 1] + dens[k]) * step;
        if k % 50_000 == 0 {
            let z = k as f64 * step;
            let f = stationary_cdf(&m, 0.0, z).unwrap();
            assert!(
                (f - acc / total).abs() < 1e-7,
                "{z}: {f} vs {}",
                acc / total
            );
        }
    }
}

#[test]
fn reflection_schemes() {
    let m = DemandModel::baseline();
    let c = cfg(1e-3, 2e3, 2);
    let bridge =
        simulate_reflected(&m, 0.0, &c, 1.0, 8.0, 80, ReflectionScheme::BridgeMinimum).unwrap();
    let proj = simulate_reflected(&m, 0.0, &c, 1.0, 8.0, 80, ReflectionScheme::Projection).unwrap();
    assert!(bridge.ks_distance < 0.03);
    // Projection pushes less than the true local time over each step.
    assert!(proj.mean.mean < bridge.mean.mean);
    let mass: f64 = bridge.histogram.iter().map(|b| b.mass).sum::<f64>() + bridge.mass_above;
    assert!((mass - 1.0).abs() < 1e-12);
    assert!(matches!(
        simulate_reflected(&m, 0.0, &c, -1.0, 8.0, 80, ReflectionScheme::BridgeMinimum),
        Err(Error::Domain(_))
    ));
}

#[test]
fn refined_configs_share_noise() {
    let (m, h, c) = baseline();
    let p = make_ss_policy(-2.0, 0.3).unwrap();
    let (coarse, fine) = cfg(2e-3, 200.0, 2).refined().unwrap();
    let a = simulate(&m, &h, &c, &p, &coarse, 0.0).unwrap();
    let b = simulate(&m, &h, &c, &p, &fine, 0.0).unwrap();
    assert_eq!(coarse.steps() * 2, fine.steps());
    let spread = 3.0 * a.std_error.hypot(b.std_error);
    assert!(
        (a.average_cost - b.average_cost).abs() < spread,
        "{} vs {}",
        a.average_cost,
        b.average_cost
    );
}
