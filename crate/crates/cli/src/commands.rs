use std::fmt::Write as _;
use std::sync::Arc;

use ergodic_core::cost::decompose;
use ergodic_core::simulator::{HistogramBin, NeverOrder, ReflectedRun};
use ergodic_core::verifier::ResidualSample;
use ergodic_core::{
    alpha, make_ss_policy, optimize, simulate, simulate_coupled, simulate_reflected,
    stationary_cdf, CostTrace, ImpulsePolicy, Optimum, PolicyEvaluation, SimConfig,
    ValueCertificate, Verifier,
};
use serde::Serialize;

use crate::config::{PolicySpec, Problem, RunConfig};
use crate::output::{ascii_plot, OutDir};
use crate::CliError;

pub struct Context {
    cfg: RunConfig,
    problem: Problem,
    out: OutDir,
}

/// Outcome of `simulate` for either policy kind.
pub enum Simulated {
    Policy {
        x0: f64,
        theory: Option<PolicyEvaluation>,
        trace: CostTrace,
    },
    Reflected {
        x0: f64,
        run: ReflectedRun,
    },
}

#[derive(Serialize)]
struct PolicySimulation<'a> {
    x0: f64,
    /// Long-run cost from the cycle formula, for `(s, S)` policies.
    theory: Option<&'a PolicyEvaluation>,
    within_3se: Option<bool>,
    trace: &'a CostTrace,
}

#[derive(Serialize)]
struct ReflectedSimulation<'a> {
    x0: f64,
    #[serde(flatten)]
    run: &'a ReflectedRun,
}

#[derive(Serialize)]
struct HistogramRow {
    bin_left: f64,
    bin_right: f64,
    mass: f64,
    stationary_mass: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareRow {
    pub j: f64,
    pub base_cost: f64,
    pub truncated_cost: f64,
    pub gap: f64,
    pub gap_se: f64,
    pub gap_ci: f64,
    pub bound: f64,
    pub within_bound: bool,
    pub max_post_order: f64,
    pub coalescences: u64,
}

#[derive(Serialize)]
struct CompareOutput<'a> {
    base_s: f64,
    #[serde(rename = "base_S")]
    base_big_s: f64,
    x0: f64,
    truncation_constant: f64,
    proportional_rate: f64,
    rows: &'a [CompareRow],
}

/// Path samples kept when `record_every` is not configured.
const DEFAULT_PATH_POINTS: usize = 2000;

impl Context {
    pub fn new(cfg: RunConfig) -> Result<Self, CliError> {
        let problem = cfg.problem()?;
        let out = OutDir::create(&cfg.out_dir)?;
        out.text("config.toml", &cfg.to_toml())?;
        Ok(Self { cfg, problem, out })
    }

    pub fn solve(&self) -> Result<Optimum, CliError> {
        let p = &self.problem;
        let o = optimize(&p.model, &p.holding, &p.ordering, self.cfg.optimizer)?;
        self.out.json("optimum.json", &o)?;
        self.out.csv("evaluations.csv", &o.trace)?;
        println!(
            "s* = {:.10}  S* = {:.10}  alpha* = {:.12}  ({} evaluations)",
            o.s_star, o.big_s_star, o.alpha_star, o.grid_stats.evaluations
        );
        Ok(o)
    }

    pub fn verify(&self) -> Result<ValueCertificate, CliError> {
        let o = self.solve()?;
        let (cert, _) = self.certify(&o)?;
        if !cert.pass {
            return Err(failed(&cert));
        }
        Ok(cert)
    }

    fn certify(&self, o: &Optimum) -> Result<(ValueCertificate, Verifier), CliError> {
        let scale = self.cfg.run.alpha_scale;
        if !(scale.is_finite() && scale > 0.0) {
            return Err(CliError::config(format!(
                "run.alpha_scale must be positive, got {scale}"
            )));
        }
        let p = &self.problem;
        let v = Verifier::new(&p.model, &p.holding, &p.ordering, o, self.cfg.verify)?;
        let cert = v.certify_against(scale * o.alpha_star)?;
        self.out.json("certificate.json", &cert)?;
        self.out.csv("residuals.csv", &cert.residuals)?;
        println!(
            "certificate {}: underline s = {:.6}, z_bar = {:.6}, max |HJB| above = {:.3e}, min slack = {:.3e}",
            if cert.pass { "PASS" } else { "FAIL" },
            cert.underline_s,
            cert.z_bar,
            cert.hjb_max_abs_residual_above,
            cert.intervention_min_slack
        );
        Ok((cert, v))
    }

    pub fn simulate(&self) -> Result<Simulated, CliError> {
        let optimum = match self.cfg.policy {
            PolicySpec::Optimal => Some(self.solve()?),
            _ => None,
        };
        self.simulate_with(optimum.as_ref())
    }

    fn sim_config(&self) -> SimConfig {
        let mut cfg = self.cfg.simulation;
        if cfg.record_every.is_none() {
            cfg.record_every = Some((cfg.steps() / DEFAULT_PATH_POINTS as u64).max(1) as usize);
        }
        cfg
    }

    fn simulate_with(&self, optimum: Option<&Optimum>) -> Result<Simulated, CliError> {
        let p = &self.problem;
        let cfg = self.sim_config();
        let pair = match (&self.cfg.policy, optimum) {
            (PolicySpec::Optimal, Some(o)) => Some((o.s_star, o.big_s_star)),
            (PolicySpec::Optimal, None) => unreachable!("optimal policy needs a solved optimum"),
            (PolicySpec::Ss { s, big_s }, _) => Some((*s, *big_s)),
            (PolicySpec::Never, _) => None,
            (
                &PolicySpec::Reflected {
                    barrier,
                    span,
                    bins,
                    scheme,
                },
                _,
            ) => {
                let x0 = self.cfg.run.x0.unwrap_or(barrier);
                let run =
                    simulate_reflected(&p.model, barrier, &cfg, x0, span, bins, scheme.into())?;
                self.write_reflected(x0, &run)?;
                return Ok(Simulated::Reflected { x0, run });
            }
        };
        let (x0, theory, trace) = match pair {
            Some((s, big_s)) => {
                let policy = make_ss_policy(s, big_s)?;
                let x0 = self.cfg.run.x0.unwrap_or(big_s);
                let theory = alpha(&p.model, &p.holding, &p.ordering, s, big_s)?;
                (
                    x0,
                    Some(theory),
                    simulate(&p.model, &p.holding, &p.ordering, &policy, &cfg, x0)?,
                )
            }
            None => {
                let x0 = self.cfg.run.x0.unwrap_or(0.0);
                (
                    x0,
                    None,
                    simulate(&p.model, &p.holding, &p.ordering, &NeverOrder, &cfg, x0)?,
                )
            }
        };
        let within = theory
            .as_ref()
            .map(|t| (trace.average_cost - t.alpha).abs() <= 3.0 * trace.std_error);
        self.out.json(
            "simulation.json",
            &PolicySimulation {
                x0,
                theory: theory.as_ref(),
                within_3se: within,
                trace: &trace,
            },
        )?;
        self.out.csv("trace.csv", &trace.path)?;
        self.out.csv("orders.csv", &trace.order_events)?;
        print!(
            "{}: average cost {:.6} ± {:.6} (CI half-width {:.6})",
            trace.policy, trace.average_cost, trace.std_error, trace.ci_halfwidth
        );
        match &theory {
            Some(t) => println!(", cycle formula {:.6}", t.alpha),
            None => println!(),
        }
        for w in &trace.warnings {
            eprintln!("warning: {w}");
        }
        Ok(Simulated::Policy { x0, theory, trace })
    }

    fn write_reflected(&self, x0: f64, run: &ReflectedRun) -> Result<(), CliError> {
        let m = &self.problem.model;
        let rows = run
            .histogram
            .iter()
            .map(|b: &HistogramBin| {
                let lo = stationary_cdf(m, run.barrier, b.bin_left)?;
                let hi = stationary_cdf(m, run.barrier, b.bin_right)?;
                Ok(HistogramRow {
                    bin_left: b.bin_left,
                    bin_right: b.bin_right,
                    mass: b.mass,
                    stationary_mass: hi - lo,
                })
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        self.out
            .json("simulation.json", &ReflectedSimulation { x0, run })?;
        self.out.csv("histogram.csv", rows)?;
        println!(
            "reflected at {}: mean {:.6} ± {:.6}, KS distance {:.5} at {:.4}",
            run.barrier, run.mean.mean, run.mean.std_error, run.ks_distance, run.ks_at
        );
        Ok(())
    }

    pub fn compare(&self) -> Result<Vec<CompareRow>, CliError> {
        let cmp = &self.cfg.compare;
        let base = cmp
            .base
            .ok_or_else(|| CliError::config("compare needs compare.base = { s = .., S = .. }"))?;
        if cmp.j.is_empty() || cmp.j.iter().any(|j| !(j.is_finite() && *j > 0.0)) {
            return Err(CliError::config(format!(
                "compare.j must be positive levels, got {:?}",
                cmp.j
            )));
        }
        let p = &self.problem;
        let policy: Arc<dyn ImpulsePolicy> = Arc::new(make_ss_policy(base.s, base.big_s)?);
        let dec = decompose(&p.ordering, cmp.xi_max)?;
        let constant = p.model.truncation_constant();
        let x0 = cmp.x0.or(self.cfg.run.x0).unwrap_or(base.big_s);
        let cfg = self.cfg.simulation;
        let mut rows = Vec::with_capacity(cmp.j.len());
        for &j in &cmp.j {
            let run = simulate_coupled(
                &p.model,
                &p.holding,
                &p.ordering,
                policy.clone(),
                j,
                &cfg,
                x0,
            )?;
            let bound = constant * dec.sup_setup_over(j)? / j;
            let g = run.gap;
            let row = CompareRow {
                j,
                base_cost: run.base.average_cost,
                truncated_cost: run.truncated.average_cost,
                gap: g.mean,
                gap_se: g.std_error,
                gap_ci: g.ci_halfwidth,
                bound,
                within_bound: g.mean <= bound + 3.0 * g.std_error,
                max_post_order: run.max_truncated_post_order,
                coalescences: run.coalescences,
            };
            println!(
                "j = {j}: gap {:.6} ± {:.6}, bound {:.6} ({})",
                row.gap,
                row.gap_se,
                row.bound,
                if row.within_bound {
                    "within"
                } else {
                    "EXCEEDED"
                }
            );
            rows.push(row);
        }
        self.out.csv("compare.csv", &rows)?;
        self.out.json(
            "compare.json",
            &CompareOutput {
                base_s: base.s,
                base_big_s: base.big_s,
                x0,
                truncation_constant: constant,
                proportional_rate: dec.k,
                rows: &rows,
            },
        )?;
        Ok(rows)
    }

    pub fn report(&self) -> Result<(), CliError> {
        let o = self.solve()?;
        let (cert, verifier) = self.certify(&o)?;
        let sim = self.simulate_with(Some(&o))?;
        let cmp = match self.cfg.compare.base {
            Some(_) => Some(self.compare()?),
            None => None,
        };
        let profile = value_profile(&o, &cert, &verifier)?;
        self.out.csv("value.csv", &profile)?;
        self.out.text(
            "summary.md",
            &summary(&o, &cert, &profile, &sim, cmp.as_deref()),
        )?;
        println!("wrote {}", self.out.path("summary.md").display());
        if !cert.pass {
            return Err(failed(&cert));
        }
        Ok(())
    }
}

fn failed(cert: &ValueCertificate) -> CliError {
    CliError::certificate(format!(
        "certificate failed at tolerance {:e}: min HJB residual {:.3e}, max |HJB| above {:.3e}, min slack {:.3e}",
        cert.cert_tol, cert.hjb_min_residual, cert.hjb_max_abs_residual_above, cert.intervention_min_slack
    ))
}

/// `V`, `V'` and the HJB residual on a uniform grid around the optimal band.
fn value_profile(
    o: &Optimum,
    cert: &ValueCertificate,
    verifier: &Verifier,
) -> Result<Vec<ResidualSample>, CliError> {
    const POINTS: usize = 321;
    let span = o.big_s_star - o.s_star;
    let lo = o.s_star - span;
    let hi = o.big_s_star.max(if cert.z_bar.is_finite() {
        cert.z_bar
    } else {
        o.big_s_star
    }) + span;
    let v = verifier.build_v(o.alpha_star, cert.underline_s)?;
    (0..POINTS)
        .map(|i| {
            let z = lo + (hi - lo) * i as f64 / (POINTS - 1) as f64;
            Ok(ResidualSample {
                z,
                v: v.value(z)?,
                v_prime: v.derivative(z)?,
                residual: v.hjb_residual(z, cert.alpha_checked)?,
            })
        })
        .collect()
}

fn summary(
    o: &Optimum,
    cert: &ValueCertificate,
    profile: &[ResidualSample],
    sim: &Simulated,
    cmp: Option<&[CompareRow]>,
) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# Run summary\n");
    let _ = writeln!(s, "## Optimal policy\n");
    let _ = writeln!(s, "| quantity | value |\n|---|---|");
    let _ = writeln!(s, "| s* | {:.10} |", o.s_star);
    let _ = writeln!(s, "| S* | {:.10} |", o.big_s_star);
    let _ = writeln!(s, "| alpha* | {:.12} |", o.alpha_star);
    let _ = writeln!(s, "| B1, B2 | {:.4}, {:.4e} |", o.bracket.b1, o.bracket.b2);
    let _ = writeln!(s, "| evaluations | {} |", o.grid_stats.evaluations);
    let _ = writeln!(s, "| final pitch | {:.3e} |\n", o.grid_stats.final_pitch);

    let _ = writeln!(
        s,
        "## Certificate: {}\n",
        if cert.pass { "PASS" } else { "FAIL" }
    );
    let _ = writeln!(s, "| check | value |\n|---|---|");
    let _ = writeln!(s, "| tolerance | {:.3e} |", cert.cert_tol);
    let _ = writeln!(s, "| alpha checked | {:.12} |", cert.alpha_checked);
    let _ = writeln!(s, "| underline s | {:.6} |", cert.underline_s);
    let _ = writeln!(s, "| z bar | {:.6} |", cert.z_bar);
    let _ = writeln!(
        s,
        "| max abs HJB residual above underline s | {:.3e} |",
        cert.hjb_max_abs_residual_above
    );
    let _ = writeln!(
        s,
        "| min HJB residual | {:.3e} at {:.4} |",
        cert.hjb_min_residual, cert.hjb_min_residual_at
    );
    let _ = writeln!(
        s,
        "| min intervention slack | {:.3e} at ({:.4}, {:.4}) |",
        cert.intervention_min_slack, cert.intervention_min_at.0, cert.intervention_min_at.1
    );
    let _ = writeln!(s, "| V' bound | {:.4} |", cert.vprime_bound);
    let _ = writeln!(
        s,
        "| growth | degree {}, coefficient {:.4} |\n",
        cert.poly_growth.degree, cert.poly_growth.coeff
    );

    let zs: Vec<f64> = profile.iter().map(|r| r.z).collect();
    let vs: Vec<f64> = profile.iter().map(|r| r.v).collect();
    let rs: Vec<f64> = profile.iter().map(|r| r.residual).collect();
    let (a, b) = (
        zs.first().copied().unwrap_or(0.0),
        zs.last().copied().unwrap_or(0.0),
    );
    let _ = writeln!(s, "Profiles on [{a:.4}, {b:.4}]; values in value.csv.\n");
    let _ = writeln!(
        s,
        "### Relative value V(z)\n\n```\n{}```\n",
        ascii_plot(&zs, &vs, 64, 16)
    );
    let _ = writeln!(
        s,
        "### HJB residual\n\n```\n{}```\n",
        ascii_plot(&zs, &rs, 64, 12)
    );

    let _ = writeln!(s, "## Simulation\n");
    match sim {
        Simulated::Policy { x0, theory, trace } => {
            let _ = writeln!(
                s,
                "Policy `{}` from x0 = {x0}, {} replications of horizon {}.\n",
                trace.policy, trace.replications, trace.horizon
            );
            let _ = writeln!(s, "| quantity | value |\n|---|---|");
            let _ = writeln!(s, "| average cost | {:.6} |", trace.average_cost);
            let _ = writeln!(s, "| standard error | {:.6} |", trace.std_error);
            let _ = writeln!(s, "| CI half-width | {:.6} |", trace.ci_halfwidth);
            let _ = writeln!(s, "| orders | {} |", trace.order_count);
            if let Some(t) = theory {
                let _ = writeln!(s, "| cycle formula | {:.6} |", t.alpha);
                let _ = writeln!(
                    s,
                    "| within 3 SE | {} |",
                    (trace.average_cost - t.alpha).abs() <= 3.0 * trace.std_error
                );
            }
            for w in &trace.warnings {
                let _ = writeln!(s, "\nWarning: {w}");
            }
        }
        Simulated::Reflected { x0, run } => {
            let _ = writeln!(s, "Reflected at {} from x0 = {x0}.\n", run.barrier);
            let _ = writeln!(s, "| quantity | value |\n|---|---|");
            let _ = writeln!(
                s,
                "| mean | {:.6} ± {:.6} |",
                run.mean.mean, run.mean.std_error
            );
            let _ = writeln!(
                s,
                "| KS distance | {:.5} at {:.4} |",
                run.ks_distance, run.ks_at
            );
        }
    }
    if let Some(rows) = cmp {
        let _ = writeln!(s, "\n## Truncation\n");
        let _ = writeln!(
            s,
            "| j | gap | SE | bound | within |\n|---|---|---|---|---|"
        );
        for r in rows {
            let _ = writeln!(
                s,
                "| {} | {:.6} | {:.6} | {:.6} | {} |",
                r.j, r.gap, r.gap_se, r.bound, r.within_bound
            );
        }
    }
    s
}
