//! Acceptance run: one PASS/FAIL line per criterion. Exits nonzero if any
//! criterion fails.

use std::sync::Arc;
use std::time::Instant;

use ergodic_core::cost::CostTable;
use ergodic_core::simulator::ReflectionScheme;
use ergodic_core::{
    alpha, cycle_stats, decompose, eval_g_ell, make_ss_policy, optimize, simulate,
    simulate_coupled, simulate_reflected, Coefficient, CycleKernel, DemandModel, Error,
    HoldingCost, ImpulsePolicy, Optimizer, OptimizerOptions, OrderingCost, SimConfig, Verifier,
    VerifierOptions,
};

const SQRT2: f64 = std::f64::consts::SQRT_2;

struct Outcome {
    ok: bool,
    detail: String,
}

type Check = fn() -> Result<Outcome, Error>;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

fn baseline() -> (DemandModel, HoldingCost, OrderingCost) {
    (
        DemandModel::baseline(),
        HoldingCost::absolute(),
        OrderingCost::fixed(1.0).unwrap(),
    )
}

fn closed_forms() -> Result<Outcome, Error> {
    let started = Instant::now();
    let (m, h, c) = baseline();
    let mut worst: f64 = 0.0;
    for i in 0..=40 {
        let z = -5.0 + 0.25 * i as f64;
        let v = eval_g_ell(&m, &h, z)?;
        worst = worst.max(rel_err(v.ell, 1.0));
        if z >= 0.0 {
            worst = worst.max(rel_err(v.g, z + 1.0));
        }
    }
    let (cost, time) = cycle_stats(&m, &h, 0.0, 2.0)?;
    worst = worst.max(rel_err(time, 2.0)).max(rel_err(cost, 4.0));
    let a = alpha(&m, &h, &c, 0.0, SQRT2)?.alpha;
    worst = worst.max(rel_err(a, 1.0 + SQRT2));
    let secs = started.elapsed().as_secs_f64();
    Ok(Outcome {
        ok: worst <= 1e-8 && secs < 1.0,
        detail: format!("max rel err {worst:.2e} (tol 1e-8), {secs:.3}s (limit 1s)"),
    })
}

fn hjb_certificate() -> Result<Outcome, Error> {
    let (m, h, c) = baseline();
    let opt = optimize(&m, &h, &c, OptimizerOptions::default())?;
    let started = Instant::now();
    let ver = Verifier::new(&m, &h, &c, &opt, VerifierOptions::default())?;
    let cert = ver.certify()?;
    let secs = started.elapsed().as_secs_f64();
    let us = cert.underline_s;
    let above = cert
        .residuals
        .iter()
        .filter(|r| r.z >= us)
        .map(|r| r.residual.abs())
        .fold(0.0, f64::max);
    let below = cert
        .residuals
        .iter()
        .filter(|r| r.z < us)
        .map(|r| r.residual)
        .fold(f64::INFINITY, f64::min);
    let has_below = cert.residuals.iter().any(|r| r.z < us);
    let ok = above <= 1e-7
        && has_below
        && below >= -1e-7
        && cert.intervention_min_slack >= -1e-7
        && secs < 10.0;
    Ok(Outcome {
        ok,
        detail: format!(
            "s_ = {us:.6}, max|res| above {above:.2e}, min res below {below:.2e}, \
             min intervention slack {:.2e} (tol 1e-7), {secs:.2}s (limit 10s)",
            cert.intervention_min_slack
        ),
    })
}

fn axis(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
        .collect()
}

fn optimizer_soundness() -> Result<Outcome, Error> {
    let (m, h, c) = baseline();
    let mut o = Optimizer::new(&m, &h, &c, OptimizerOptions::default())?;
    let br = o.bracket()?;
    let opt = o.optimize_in(br)?;

    // Independent search: plain 21×21 grid over (s, S), refined twice in a
    // window of one pitch around the best point, with direct quadrature.
    let n = 21;
    let eval =
        |s: f64, big_s: f64| -> Result<f64, Error> { Ok(alpha(&m, &h, &c, s, big_s)?.alpha) };
    let mut best = (f64::INFINITY, 0.0, 0.0);
    let mut min_seen = f64::INFINITY;
    let mut centre = (0.0, 0.0);
    let mut half = br.b1;
    for round in 0..3 {
        let (ss, bs) = if round == 0 {
            (axis(-br.b1, br.b1, n), axis(-br.b1, br.b1, n))
        } else {
            (
                axis(centre.0 - half, centre.0 + half, n),
                axis(centre.1 - half, centre.1 + half, n),
            )
        };
        for &s in &ss {
            for &big_s in &bs {
                if big_s - s < br.b2 || s < -br.b1 || big_s > br.b1 {
                    continue;
                }
                let a = eval(s, big_s)?;
                min_seen = min_seen.min(a);
                if a < best.0 {
                    best = (a, s, big_s);
                }
            }
        }
        centre = (best.1, best.2);
        half = 2.0 * half / (n - 1) as f64;
    }
    let agree = (best.0 - opt.alpha_star).abs();
    let beaten = min_seen < opt.alpha_star - 1e-9;
    let ok = agree <= 1e-5 && !beaten && opt.alpha_star <= 1.0 + SQRT2;
    Ok(Outcome {
        ok,
        detail: format!(
            "alpha* = {:.10} at ({:.6}, {:.6}); grid oracle {:.10} at ({:.6}, {:.6}); |diff| {agree:.2e} (tol 1e-5); \
             grid min - alpha* = {:.2e}",
            opt.alpha_star,
            opt.s_star,
            opt.big_s_star,
            best.0,
            best.1,
            best.2,
            min_seen - opt.alpha_star
        ),
    })
}

fn simulation_consistency() -> Result<Outcome, Error> {
    let (m, h, c) = baseline();
    let opt = optimize(&m, &h, &c, OptimizerOptions::default())?;
    let policy = make_ss_policy(opt.s_star, opt.big_s_star)?;
    let cfg = SimConfig {
        dt: 1e-3,
        horizon: 1e4,
        replications: 32,
        ..SimConfig::default()
    };
    let started = Instant::now();
    let trace = simulate(&m, &h, &c, &policy, &cfg, opt.big_s_star)?;
    let secs = started.elapsed().as_secs_f64();
    let dev = (trace.average_cost - opt.alpha_star).abs();
    Ok(Outcome {
        ok: dev <= 3.0 * trace.std_error,
        detail: format!(
            "simulated {:.5} vs alpha* {:.5}: |diff| {dev:.2e} <= 3 SE = {:.2e}; {secs:.1}s",
            trace.average_cost,
            opt.alpha_star,
            3.0 * trace.std_error
        ),
    })
}

fn stationary_density() -> Result<Outcome, Error> {
    let m = DemandModel::baseline();
    let cfg = SimConfig {
        dt: 1e-3,
        horizon: 1e4,
        replications: 8,
        ..SimConfig::default()
    };
    let run = simulate_reflected(
        &m,
        0.0,
        &cfg,
        1.0,
        10.0,
        200,
        ReflectionScheme::BridgeMinimum,
    )?;
    // Closed-form exponential CDF, independent of the library's quadrature.
    let mut cum = 0.0;
    let mut ks: f64 = 0.0;
    for b in &run.histogram {
        cum += b.mass;
        ks = ks.max((cum - (1.0 - (-b.bin_right).exp())).abs());
    }
    let dev = (run.mean.mean - 1.0).abs();
    Ok(Outcome {
        ok: ks < 0.02 && dev <= 3.0 * run.mean.std_error,
        detail: format!(
            "KS {ks:.4} (limit 0.02), mean {:.4} with |mean-1| {dev:.2e} <= 3 SE = {:.2e}",
            run.mean.mean,
            3.0 * run.mean.std_error
        ),
    })
}

fn truncation_gap() -> Result<Outcome, Error> {
    let m = DemandModel::baseline();
    let h = HoldingCost::linear(0.01, 0.01)?;
    let c = OrderingCost::fixed(100.0)?;
    let dec = decompose(&c, 1e4)?;
    let base: Arc<dyn ImpulsePolicy> = Arc::new(make_ss_policy(0.0, 100.0)?);
    let cfg = SimConfig {
        dt: 1e-2,
        horizon: 2e4,
        replications: 16,
        ..SimConfig::default()
    };
    let constant = m.truncation_constant();
    let mut ok = true;
    let mut parts = Vec::new();
    let mut prev: Option<(f64, f64)> = None;
    for j in [10.0, 20.0, 40.0] {
        let run = simulate_coupled(&m, &h, &c, base.clone(), j, &cfg, 100.0)?;
        let bound = constant * dec.sup_setup_over(j)? / j;
        let g = run.gap;
        ok &= g.mean <= bound + 3.0 * g.std_error;
        ok &= run.max_truncated_post_order <= j * (1.0 + 1e-12);
        if let Some((pm, pse)) = prev {
            ok &= g.mean <= pm + 3.0 * (pse * pse + g.std_error * g.std_error).sqrt();
        }
        prev = Some((g.mean, g.std_error));
        parts.push(format!(
            "j={j}: gap {:.3} ± {:.3} (bound {bound:.1})",
            g.mean, g.std_error
        ));
    }
    Ok(Outcome {
        ok,
        detail: parts.join("; "),
    })
}

fn decomposition_laws() -> Result<Outcome, Error> {
    let families: Vec<(OrderingCost, f64)> = vec![
        (OrderingCost::setup_plus_linear(2.0, 1.0)?, 2.5e3),
        (
            OrderingCost::all_unit_discount(5.0, vec![10.0, 50.0], vec![3.0, 2.5, 2.0])?,
            1e5,
        ),
        (
            OrderingCost::incremental_discount(5.0, vec![10.0, 50.0], vec![3.0, 2.5, 2.0])?,
            1e5,
        ),
        (
            OrderingCost::quantity_dependent_setup(vec![10.0], vec![1.0, 3.0], 0.5)?,
            4e3,
        ),
        (OrderingCost::power(1.0, 2.0, 0.5)?, 1e7),
        (
            OrderingCost::table(CostTable::new(
                2.0,
                vec![1.0, 4.0, 10.0],
                vec![3.0, 6.0, 11.0],
                vec![3.0, 5.5, 11.0],
                1.0,
            )?)?,
            2e4,
        ),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (c, threshold) in &families {
        let dec = decompose(c, 1e6)?;
        let mut ulps: f64 = 0.0;
        let mut min_k = f64::INFINITY;
        for i in 0..=2000 {
            let xi = 1e-3 * 1.01f64.powi(i);
            let kpart = dec.setup_part(xi)?;
            let cx = c.eval(xi)?;
            ulps = ulps.max((dec.k * xi + kpart - cx).abs() / (f64::EPSILON * cx.abs()));
            min_k = min_k.min(kpart);
        }
        let ratio = dec.sup_setup_over(*threshold)? / threshold;
        ok &= ulps <= 4.0 && min_k >= 0.0 && ratio < 1e-3;
        parts.push(format!(
            "{}: k={:.3}, recompose {ulps:.1} ulp, min K {min_k:.2e}, sup K/j at {threshold:.0e} = {ratio:.2e}",
            c.family_name(),
            dec.k
        ));
    }
    Ok(Outcome {
        ok,
        detail: parts.join("; "),
    })
}

fn reference_invariance() -> Result<Outcome, Error> {
    let drift = Coefficient::Tanh {
        base: 1.0,
        amplitude: 0.4,
        center: 0.5,
        scale: 1.5,
    };
    let vol = Coefficient::Tanh {
        base: 1.2,
        amplitude: -0.2,
        center: 0.0,
        scale: 2.0,
    };
    let m0 = DemandModel::new(drift, vol, (0.6, 1.4), (1.0, 1.4))?;
    let m5 = m0.clone().with_ref_point(5.0);
    let h = HoldingCost::linear(1.0, 3.0)?;
    let c = OrderingCost::setup_plus_linear(2.0, 0.3)?;
    let k0 = CycleKernel::new(&m0, &h);
    let k5 = CycleKernel::new(&m5, &h);
    let mut worst: f64 = 0.0;
    for (s, big_s) in [(-2.0, 1.0), (-0.5, 0.5), (0.3, 3.0), (-4.0, -1.0)] {
        let a0 = k0.alpha(&c, s, big_s)?.alpha;
        let a5 = k5.alpha(&c, s, big_s)?.alpha;
        worst = worst.max(rel_err(a5, a0));
    }

    let (m, h, c) = baseline();
    let opt = optimize(&m, &h, &c, OptimizerOptions::default())?;
    let policy = make_ss_policy(opt.s_star, opt.big_s_star)?;
    let fine = SimConfig {
        dt: 1e-3,
        horizon: 1e4,
        replications: 8,
        ..SimConfig::default()
    };
    let coarse = SimConfig {
        dt: 2e-3,
        noise_substeps: 2,
        ..fine
    };
    let a_coarse = simulate(&m, &h, &c, &policy, &coarse, opt.big_s_star)?;
    let a_fine = simulate(&m, &h, &c, &policy, &fine, opt.big_s_star)?;
    let shift = (a_coarse.average_cost - a_fine.average_cost).abs();
    Ok(Outcome {
        ok: worst <= 1e-9 && shift < a_coarse.ci_halfwidth,
        detail: format!(
            "max rel diff a=0 vs a=5 {worst:.2e} (tol 1e-9); dt-halving shift {shift:.2e} < CI {:.2e}",
            a_coarse.ci_halfwidth
        ),
    })
}

fn main() {
    let checks: [(&str, Check); 8] = [
        ("closed forms for constant coefficients", closed_forms),
        ("HJB certificate on the baseline", hjb_certificate),
        ("optimizer against a dense grid", optimizer_soundness),
        ("simulated cost of the optimal pair", simulation_consistency),
        (
            "stationary law of the reflected process",
            stationary_density,
        ),
        ("truncation cost gap", truncation_gap),
        ("setup cost decomposition", decomposition_laws),
        (
            "reference point and step size invariance",
            reference_invariance,
        ),
    ];
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let started = Instant::now();
        let (ok, detail) = match check() {
            Ok(o) => (o.ok, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !ok {
            failed += 1;
        }
        println!(
            "{} [{}] {name}: {detail} ({:.1}s)",
            if ok { "PASS" } else { "FAIL" },
            i + 1,
            started.elapsed().as_secs_f64()
        );
    }
    println!(
        "{} of {} criteria passed",
        checks.len() - failed,
        checks.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
