//! Run orchestration: solve a scenario, assemble bounds, and execute the
//! enabled verification suites.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::coagulation::{coag_moment_identity, CoagTables};
use crate::config::{Scenario, ScenarioConfig, Suite};
use crate::evolution::{
    duhamel_solve, pde_residual, regularization_probe, solve, Observables, Scheme, SolverConfig, Trajectory,
};
use crate::fragmentation::{build_daughter_matrix, frag_moment_identity};
use crate::grid::{project, weighted_norm_values, DensityField, WeightSpec};
use crate::kernels::{validate_kernel_set, SamplePlan};
use crate::moment_bounds::{
    bound_system, check_domination, global_conditions, top_order, BoundOutcome, BoundTrajectory, MomentBoundParams,
};
use crate::report::{CheckRow, RunReport};
use crate::transport::{laplace_consistency, lemma21_check, resolvent_apply, transport_apply, SpectralParams};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trajectory: Trajectory,
    pub duhamel: Option<Trajectory>,
    pub bounds: Option<BoundTrajectory>,
    pub params: Option<MomentBoundParams>,
}

fn wants(cfg: &ScenarioConfig, s: Suite) -> bool {
    cfg.checks.suites.contains(&s)
}

fn integrate(sc: &Scenario) -> Result<Trajectory> {
    match sc.cfg.scheme {
        Scheme::Duhamel => duhamel_solve(&sc.f0, &sc.cfg, &sc.ks),
        _ => solve(&sc.f0, &sc.cfg, &sc.ks),
    }
}

/// Moment-bound parameters for the scenario's initial datum.
fn identity_orders(m: f64) -> Vec<f64> {
    let mut v = vec![0.0, 1.0, 2.0];
    if !v.contains(&m) {
        v.push(m);
    }
    v
}

pub fn bound_params(sc: &Scenario) -> Result<MomentBoundParams> {
    let cond = global_conditions(&sc.ks, sc.grid.xmin.max(1e-12), sc.grid.xmax);
    let top = top_order(sc.cfg.m);
    let init: Vec<f64> = (0..=top).map(|i| sc.f0.moment(i as f64)).collect();
    let dm = build_daughter_matrix(&sc.ks.b, &sc.grid)?;
    MomentBoundParams::new(&sc.ks, cond, sc.cfg.m, &init, sc.cfg.t_end, Some(&dm))
}

pub fn bounds(sc: &Scenario) -> Result<(MomentBoundParams, BoundOutcome)> {
    let p = bound_params(sc)?;
    let out = bound_system(&p, sc.cfg.dt)?;
    Ok((p, out))
}

pub fn run(cfg: &ScenarioConfig) -> Result<RunOutput> {
    let sc = cfg.build()?;
    let trajectory = integrate(&sc)?;
    let duhamel = if cfg.solver.cross_check && sc.cfg.scheme != Scheme::Duhamel {
        let dcfg = SolverConfig {
            scheme: Scheme::Duhamel,
            ..sc.cfg.clone()
        };
        dcfg.validate(&sc.ks, &sc.grid)?;
        Some(duhamel_solve(&sc.f0, &dcfg, &sc.ks)?)
    } else {
        None
    };
    let (params, bounds) = if wants(cfg, Suite::Domination) {
        match bounds(&sc)? {
            (p, BoundOutcome::Bounds(b)) => (Some(p), Some(b)),
            (p, BoundOutcome::Refused(_)) => (Some(p), None),
        }
    } else {
        (None, None)
    };
    Ok(RunOutput {
        trajectory,
        duhamel,
        bounds,
        params,
    })
}

struct Rows {
    suite: &'static str,
    rows: Vec<CheckRow>,
}

impl Rows {
    fn push(&mut self, name: impl Into<String>, measured: f64, bound: f64, tol: f64, pass: bool, detail: impl Into<String>) {
        self.rows.push(CheckRow {
            suite: self.suite.into(),
            name: name.into(),
            measured,
            bound,
            tol,
            pass,
            detail: detail.into(),
        });
    }

    /// `measured <= bound (1 + tol)`
    fn below(&mut self, name: impl Into<String>, measured: f64, bound: f64, tol: f64) {
        let pass = measured <= bound * (1.0 + tol);
        self.push(name, measured, bound, tol, pass, "");
    }
}

fn default_lambda(sc: &Scenario) -> f64 {
    let omega = 2.0 * sc.cfg.m * sc.ks.r.rtilde();
    if omega > 0.0 {
        3.0 * omega
    } else {
        1.0
    }
}

fn norm(f: &DensityField, m: f64) -> f64 {
    weighted_norm_values(&f.grid, &f.values, WeightSpec::shifted(m))
}

/// Executes the scenario and every enabled suite.
pub fn verify(cfg: &ScenarioConfig) -> Result<(RunReport, RunOutput)> {
    let start = Instant::now();
    let sc = cfg.build()?;
    let ch = &cfg.checks;
    let mut rows: Vec<CheckRow> = Vec::new();
    let m = sc.cfg.m;
    let lambda = ch.lambda.unwrap_or_else(|| default_lambda(&sc));
    let needs_run = cfg.checks.suites.iter().any(|s| {
        matches!(
            s,
            Suite::MassBudget | Suite::Positivity | Suite::Residual | Suite::CrossValidation | Suite::Domination
        )
    });
    if wants(cfg, Suite::Resolvent) || wants(cfg, Suite::Laplace) || wants(cfg, Suite::Lemma21) {
        SpectralParams::new(m, sc.ks.r.rtilde(), lambda)?;
    }

    for &suite in &cfg.checks.suites {
        let mut r = Rows {
            suite: suite.name(),
            rows: Vec::new(),
        };
        match suite {
            Suite::KernelValidation => {
                let mut plan = SamplePlan::geometric(sc.grid.xmin, sc.grid.xmax, 50, m);
                plan.liminf_order = cfg.kernel.m0;
                for e in validate_kernel_set(&sc.ks, &plan).entries {
                    r.push(e.name, e.worst, 0.0, 0.0, e.pass, e.detail);
                }
            }
            Suite::Lemma21 => {
                let omega = 2.0 * m * sc.ks.r.rtilde();
                let lambdas = if omega > 0.0 { [1.5 * omega, 3.0 * omega] } else { [lambda, 2.0 * lambda] };
                for lam in lambdas {
                    for alpha in [0.5, 1.0, 5.0] {
                        let b = lemma21_check(alpha, lam, m, &sc.ks)?;
                        let name = format!("alpha={alpha},lambda={lam:.4}");
                        r.push(format!("I {name}"), b.i_upper, b.i_bound, 0.0, b.i_upper <= b.i_bound, "");
                        r.push(format!("J {name}"), b.j_upper, b.j_bound, 0.0, b.j_upper <= b.j_bound, "");
                    }
                }
            }
            Suite::Resolvent => {
                let sp = SpectralParams::new(m, sc.ks.r.rtilde(), lambda)?;
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                for s in 0..ch.resolvent_samples {
                    let vals: Vec<f64> = sc
                        .grid
                        .centers
                        .iter()
                        .map(|x| rng.gen::<f64>() * (-x).exp())
                        .collect();
                    let g = DensityField::from_values(sc.grid.clone(), vals);
                    let rg = resolvent_apply(&g, &sp, &sc.ks)?;
                    r.below(format!("norm-bound sample {s}"), norm(&rg, m), norm(&g, m) / (lambda - sp.omega_rm), 0.0);
                }
            }
            Suite::Laplace => {
                let sp = SpectralParams::new(m, sc.ks.r.rtilde(), lambda)?;
                let g = project(|x| (-x).exp(), &sc.grid)?;
                let tmax = 14.0 / (lambda - sp.omega_rm);
                let d = laplace_consistency(&g, &sp, &sc.ks, tmax, 8 * sc.grid.len())?;
                r.below("relative discrepancy", d, 1e-3, 0.0);
            }
            Suite::FragIdentity => {
                let dm = build_daughter_matrix(&sc.ks.b, &sc.grid)?;
                for i in identity_orders(m) {
                    let rep = frag_moment_identity(&sc.f0, i, &sc.ks, &dm)?;
                    let pass = rep.rel_discrepancy <= ch.identity_tol && rep.upper_holds != Some(false);
                    r.push(format!("order {i}"), rep.rel_discrepancy, 0.0, ch.identity_tol, pass, "");
                }
            }
            Suite::CoagIdentity => {
                let ct = CoagTables::new(&sc.ks.k, &sc.grid);
                for i in identity_orders(m) {
                    let rep = coag_moment_identity(&sc.f0, i, &ct);
                    let tol = if i <= 1.0 { ch.identity_tol } else { ch.placement_tol };
                    r.push(format!("order {i}"), rep.rel_discrepancy, 0.0, tol, rep.rel_discrepancy <= tol, "");
                }
            }
            Suite::TransportGrowth => {
                let w = 2.0 * m * sc.ks.r.rtilde();
                let n0 = norm(&sc.f0, m);
                for k in 0..=8 {
                    let t = 0.25 * k as f64;
                    let st = transport_apply(&sc.f0, t, &sc.ks)?;
                    r.below(format!("t={t}"), norm(&st, m), (w * t).exp() * n0, 1e-6);
                }
            }
            _ => {}
        }
        rows.extend(r.rows);
    }

    let out = if needs_run {
        run(cfg)?
    } else {
        RunOutput {
            trajectory: Trajectory::empty(m),
            duhamel: None,
            bounds: None,
            params: None,
        }
    };
    let traj = &out.trajectory;

    for &suite in &cfg.checks.suites {
        let mut r = Rows {
            suite: suite.name(),
            rows: Vec::new(),
        };
        match suite {
            Suite::MassBudget => {
                let first = &traj.observables[0];
                let scale = first.m1.max(f64::MIN_POSITIVE);
                let worst = |g: &dyn Fn(&Observables) -> f64| {
                    traj.observables.iter().map(|o| g(o).abs() / scale).fold(0.0, f64::max)
                };
                let budget = worst(&|o| o.m1 + o.escaped_mass - first.m1 - o.growth_input);
                r.push("M1 + escaped - growth input", budget, 0.0, ch.mass_tol, budget <= ch.mass_tol, "");
                let quad = worst(&|o| o.growth_input - o.growth_quadrature);
                r.push("growth input vs int r f", quad, 0.0, ch.growth_tol, quad <= ch.growth_tol, "");
            }
            Suite::Positivity => {
                let min = traj.min_density();
                r.push("min density", min, 0.0, 0.0, min >= 0.0, "");
            }
            Suite::Residual => {
                let dm = build_daughter_matrix(&sc.ks.b, &sc.grid)?;
                let ct = (!sc.ks.k.is_zero()).then(|| CoagTables::new(&sc.ks.k, &sc.grid));
                let p = sc.cfg.p.unwrap_or(1.0);
                let rep = pde_residual(traj, &sc.ks, &dm, ct.as_ref(), p);
                r.push(
                    "relative residual",
                    rep.max_relative,
                    0.0,
                    ch.residual_tol,
                    rep.max_relative <= ch.residual_tol,
                    "",
                );
            }
            Suite::CrossValidation => match &out.duhamel {
                Some(d) => {
                    let worst = cross_discrepancy(traj, d, m)?;
                    r.push("split vs duhamel", worst, 0.0, ch.cross_tol, worst <= ch.cross_tol, "");
                }
                None => r.push("split vs duhamel", f64::NAN, 0.0, ch.cross_tol, false, "solver.cross_check is off"),
            },
            Suite::RegularizationProbe => {
                let spec = cfg.probe_spec()?;
                let rep = regularization_probe(&sc.ks, &sc.grid, &spec, sc.cfg.dt)?;
                r.push("variation", rep.variation, 0.25, 0.0, rep.pass, format!("sup {:.6e}", rep.base.sup_product));
                r.push(
                    "membership growth",
                    rep.membership_growth,
                    10.0,
                    0.0,
                    rep.membership_growth >= 10.0,
                    "",
                );
            }
            Suite::Domination => match (&out.bounds, &out.params) {
                (Some(b), Some(p)) => {
                    let rep = check_domination(traj, b, p, ch.domination_tol);
                    for e in rep.entries {
                        r.push(
                            e.name,
                            e.worst_ratio,
                            1.0,
                            ch.domination_tol,
                            e.pass,
                            format!("worst at t = {}", e.worst_t),
                        );
                    }
                    if let Some(rt) = p.rtilde {
                        let m10 = traj.observables[0].m1;
                        let worst = traj
                            .observables
                            .iter()
                            .map(|o| o.m1 / (m10 * (rt * o.t).exp()))
                            .fold(0.0, f64::max);
                        r.below("M1 growth envelope", worst, 1.0, 1e-9);
                    }
                }
                _ => r.push("certified", 0.0, 1.0, 0.0, false, "neither global condition holds"),
            },
            _ => {}
        }
        rows.extend(r.rows);
    }

    // report rows in the order the suites were listed
    let order = |s: &str| cfg.checks.suites.iter().position(|x| x.name() == s).unwrap_or(usize::MAX);
    rows.sort_by_key(|row| order(&row.suite));
    let report = RunReport {
        scenario: cfg.clone(),
        checks: rows,
        elapsed_seconds: start.elapsed().as_secs_f64(),
        files: Vec::new(),
    };
    Ok((report, out))
}

/// Largest relative `[0,m]` distance between two trajectories at shared times.
pub fn cross_discrepancy(a: &Trajectory, b: &Trajectory, m: f64) -> Result<f64> {
    if a.times.len() != b.times.len() {
        return Err(Error::Numerical {
            t: *a.times.last().unwrap_or(&0.0),
            detail: format!("output counts differ: {} vs {}", a.times.len(), b.times.len()),
        });
    }
    let mut worst: f64 = 0.0;
    for (fa, fb) in a.snapshots.iter().zip(&b.snapshots) {
        let diff: Vec<f64> = fa.values.iter().zip(&fb.values).map(|(x, y)| x - y).collect();
        let d = weighted_norm_values(&fa.grid, &diff, WeightSpec::shifted(m));
        let s = norm(fa, m);
        if s > 0.0 {
            worst = worst.max(d / s);
        } else {
            worst = worst.max(d);
        }
    }
    Ok(worst)
}
