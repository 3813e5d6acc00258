//! Acceptance suite: one line per criterion, non-zero exit on any failure.

use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gfc_core::coagulation::{apply_coag, CoagTables};
use gfc_core::config::Suite;
use gfc_core::evolution::{regularization_probe, solve, PositivityPolicy, SolverConfig};
use gfc_core::fragmentation::build_daughter_matrix;
use gfc_core::grid::{project, weighted_norm_values, DensityField, SizeGrid, WeightSpec};
use gfc_core::kernels::{
    daughter_moment_quadrature, geomspace, moment_deficit, CoagulationKernel, DaughterDistribution,
    FragmentationRate, GrowthRate, KernelSet,
};
use gfc_core::presets::{preset, preset_names};
use gfc_core::report::trajectory_csv;
use gfc_core::runner::{cross_discrepancy, run, verify};
use gfc_core::transport::{
    laplace_consistency, lemma21_check, resolvent_apply, resolvent_residual_norm, transport_apply, SpectralParams,
};

const DAUGHTER_MASS_TOL: f64 = 1e-8;
const COLUMN_MASS_TOL: f64 = 1e-12;
const DEFICIT_TOL: f64 = 1e-10;
const RESOLVENT_TOL: f64 = 5e-3;
const RESIDUAL_DECAY: f64 = 1.8;
const LEMMA_CLOSED_TOL: f64 = 1e-6;
const TRANSPORT_SLACK: f64 = 1e-6;
const LAPLACE_TOL: f64 = 1e-3;
const RICCATI_TOL: f64 = 0.01;
const COAG_MASS_TOL: f64 = 1e-10;
const AB_TOL: f64 = 0.02;
const AB_MASS_TOL: f64 = 1e-8;
const CROSS_TOL: f64 = 0.02;
const PROBE_VARIATION: f64 = 0.25;
const DOMINATION_FACTOR: f64 = 1.05;
const ENVELOPE_TOL: f64 = 1e-9;

type Outcome = Result<String, String>;

struct Suite13 {
    failed: usize,
}

impl Suite13 {
    fn record(&mut self, n: usize, name: &str, f: impl FnOnce() -> Outcome) {
        let start = Instant::now();
        let res = std::panic::catch_unwind(std::panic::AssertUnwindSafe(f))
            .unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match res {
            Ok(d) => println!("PASS criterion {n:>2} {name:<34} {d} ({secs:.1}s)"),
            Err(d) => {
                self.failed += 1;
                println!("FAIL criterion {n:>2} {name:<34} {d} ({secs:.1}s)");
            }
        }
    }
}

fn ensure(cond: bool, msg: String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg)
    }
}

fn e(err: gfc_core::Error) -> String {
    err.to_string()
}

fn pure_transport(r: GrowthRate) -> KernelSet {
    KernelSet::new(
        FragmentationRate::zero(1.0),
        DaughterDistribution::uniform_binary(),
        r,
        CoagulationKernel::zero(0.5),
        1.0,
    )
}

fn rel_norm(approx: &DensityField, exact: &DensityField, m: f64, keep: impl Fn(f64) -> bool) -> f64 {
    let g = &approx.grid;
    let diff: Vec<f64> = (0..g.len())
        .map(|i| if keep(g.centers[i]) { approx.values[i] - exact.values[i] } else { 0.0 })
        .collect();
    let ex: Vec<f64> = (0..g.len()).map(|i| if keep(g.centers[i]) { exact.values[i] } else { 0.0 }).collect();
    weighted_norm_values(g, &diff, WeightSpec::shifted(m)) / weighted_norm_values(g, &ex, WeightSpec::shifted(m))
}

fn daughters() -> Vec<(String, DaughterDistribution)> {
    let mut v = vec![("uniform-binary".to_string(), DaughterDistribution::uniform_binary())];
    for nu in [0.0, 1.0, 2.0] {
        v.push((format!("power-law nu={nu}"), DaughterDistribution::power_law(nu).unwrap()));
    }
    v
}

fn c1() -> Outcome {
    let ys = geomspace(1e-3, 1e3, 50);
    let g = Arc::new(SizeGrid::geometric(1e-4, 100.0, 512).map_err(e)?);
    let mut worst: f64 = 0.0;
    let mut worst_col: f64 = 0.0;
    for (name, b) in daughters() {
        for &y in &ys {
            let m1 = daughter_moment_quadrature(&b, 1.0, y).map_err(e)?;
            let d = (m1 - y).abs() / y;
            worst = worst.max(d);
            ensure(d <= DAUGHTER_MASS_TOL, format!("{name}: y = {y}, defect {d:e}"))?;
        }
        let dm = build_daughter_matrix(&b, &g).map_err(e)?;
        let col = dm.mass_defect();
        worst_col = worst_col.max(col);
        ensure(col <= COLUMN_MASS_TOL, format!("{name}: column defect {col:e}"))?;
    }
    Ok(format!("kernel defect {worst:.2e}, column defect {worst_col:.2e}"))
}

fn c2() -> Outcome {
    let ys = geomspace(1e-3, 1e3, 50);
    let ms: Vec<f64> = (0..=12).map(|k| 0.25 * k as f64).collect();
    let mut n1: f64 = 0.0;
    for (name, b) in daughters() {
        for &y in &ys {
            let d1 = moment_deficit(&b, 1.0, y).map_err(e)? / y;
            n1 = n1.max(d1.abs());
            ensure(d1.abs() <= DEFICIT_TOL, format!("{name}: N1({y}) / y = {d1:e}"))?;
            let d0 = moment_deficit(&b, 0.0, y).map_err(e)?;
            let d2 = moment_deficit(&b, 2.0, y).map_err(e)?;
            ensure(d0 < 0.0 && d2 > 0.0, format!("{name}: N0 = {d0}, N2 = {d2} at y = {y}"))?;
            let mut last = f64::NEG_INFINITY;
            for &m in &ms {
                let v = moment_deficit(&b, m, y).map_err(e)? / y.powf(m);
                ensure(v >= last - DEFICIT_TOL, format!("{name}: N_m / y^m decreases at m = {m}, y = {y}"))?;
                last = v;
            }
        }
    }
    Ok(format!("max |N1| / y {n1:.2e}"))
}

fn c3() -> Outcome {
    let ks = pure_transport(GrowthRate::constant(1.0));
    let sp = SpectralParams::new(1.0, 1.0, 3.0).map_err(e)?;
    let mut residuals = Vec::new();
    let mut err512 = f64::NAN;
    for cells in [512, 1024] {
        let g = Arc::new(SizeGrid::geometric(1e-4, 40.0, cells).map_err(e)?);
        let src = project(|y| (-y).exp(), &g).map_err(e)?;
        let f = resolvent_apply(&src, &sp, &ks).map_err(e)?;
        if cells == 512 {
            let exact = project(|x| 0.5 * ((-x).exp() - (-3.0 * x).exp()), &g).map_err(e)?;
            err512 = rel_norm(&f, &exact, 1.0, |_| true);
        }
        residuals.push(resolvent_residual_norm(&f, &src, &sp, &ks));
    }
    ensure(err512 <= RESOLVENT_TOL, format!("closed form error {err512:e}"))?;
    let decay = residuals[0] / residuals[1];
    ensure(decay >= RESIDUAL_DECAY, format!("residual decay {decay:.3}"))?;

    let g = Arc::new(SizeGrid::geometric(1e-3, 50.0, 256).map_err(e)?);
    let m = 2.0;
    let ks = pure_transport(GrowthRate::affine(0.5, 0.5));
    let sp = SpectralParams::new(m, ks.r.rtilde(), 4.0).map_err(e)?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let vals: Vec<f64> = (0..g.len()).map(|i| rng.gen::<f64>() * (-g.centers[i]).exp()).collect();
        let src = DensityField::from_values(g.clone(), vals);
        let out = resolvent_apply(&src, &sp, &ks).map_err(e)?;
        let ratio = out.norm0m(m) / (src.norm0m(m) / (sp.lambda - sp.omega_rm));
        worst = worst.max(ratio);
    }
    ensure(worst < 1.0, format!("norm ratio {worst:.4}"))?;
    Ok(format!("error {err512:.2e}, residual decay {decay:.2}, norm ratio {worst:.3}"))
}

fn c4() -> Outcome {
    let closed = lemma21_check(1.0, 4.0, 1.0, &pure_transport(GrowthRate::constant(1.0))).map_err(e)?;
    let d = (closed.i_value - 9.0 / 16.0).abs();
    ensure(d <= LEMMA_CLOSED_TOL, format!("closed case I = {}", closed.i_value))?;
    let mut cases = 0;
    for r in [GrowthRate::constant(1.0), GrowthRate::linear(1.0), GrowthRate::affine(1.0, 1.0)] {
        let ks = pure_transport(r);
        for m in [1.0, 2.0] {
            let omega = 2.0 * m * ks.r.rtilde();
            for lf in [1.5, 3.0] {
                for alpha in [0.5, 1.0, 5.0] {
                    let rep = lemma21_check(alpha, lf * omega, m, &ks).map_err(e)?;
                    ensure(
                        rep.pass && rep.i_upper <= rep.i_bound && rep.j_upper <= rep.j_bound,
                        format!("m = {m}, lambda = {lf} omega, alpha = {alpha}: {rep:?}"),
                    )?;
                    cases += 1;
                }
            }
        }
    }
    Ok(format!("{cases} cases, closed case |I - 9/16| = {d:.1e}"))
}

fn c5() -> Outcome {
    let mut worst: f64 = 0.0;
    for name in preset_names() {
        let cfg = preset(name).map_err(e)?;
        let sc = cfg.build().map_err(e)?;
        let m = sc.cfg.m;
        let n0 = sc.f0.norm0m(m);
        for k in 0..=8 {
            let t = 0.25 * k as f64;
            let out = transport_apply(&sc.f0, t, &sc.ks).map_err(e)?;
            let ratio = out.norm0m(m) / ((2.0 * m * sc.ks.r.rtilde() * t).exp() * n0);
            worst = worst.max(ratio);
            ensure(ratio <= 1.0 + TRANSPORT_SLACK, format!("{name}: t = {t}, ratio {ratio}"))?;
        }
    }
    Ok(format!("worst ratio {worst:.6}"))
}

fn c6() -> Outcome {
    let ks = pure_transport(GrowthRate::constant(1.0));
    let sp = SpectralParams::new(1.0, 1.0, 3.0).map_err(e)?;
    let tmax = 14.0 / (sp.lambda - sp.omega_rm);
    let mut ds = Vec::new();
    for cells in [256, 512] {
        let g = Arc::new(SizeGrid::geometric(1e-4, 40.0, cells).map_err(e)?);
        let src = project(|y| (-y).exp(), &g).map_err(e)?;
        ds.push(laplace_consistency(&src, &sp, &ks, tmax, 8 * cells).map_err(e)?);
    }
    ensure(ds[1] <= LAPLACE_TOL, format!("discrepancy {:e} at 512 cells", ds[1]))?;
    ensure(ds[1] < ds[0], format!("no decay: {:e} -> {:e}", ds[0], ds[1]))?;
    Ok(format!("discrepancy {:.2e} -> {:.2e}", ds[0], ds[1]))
}

fn c7() -> Outcome {
    let cfg = preset("constant-coag").map_err(e)?.with_overrides(Some(512), Some(1e-3), None);
    let sc = cfg.build().map_err(e)?;
    let k0 = sc.ks.k.k0;
    let tr = solve(&sc.f0, &sc.cfg, &sc.ks).map_err(e)?;
    let first = tr.observables[0];
    let last = tr.observables.last().unwrap();
    let oracle = first.m0 / (1.0 + k0 * first.m0 * last.t / 2.0);
    let rel = (last.m0 - oracle).abs() / oracle;
    ensure((last.t - 1.0).abs() < 1e-12, format!("ended at t = {}", last.t))?;
    ensure(rel <= RICCATI_TOL, format!("M0 {} vs {oracle}", last.m0))?;
    let mass = tr
        .observables
        .iter()
        .map(|o| (o.m1 + o.escaped_mass - first.m1).abs() / first.m1)
        .fold(0.0, f64::max);
    ensure(mass <= COAG_MASS_TOL, format!("mass drift {mass:e}"))?;

    let g = Arc::new(SizeGrid::uniform(0.0, 4.0, 1000).map_err(e)?);
    let ct = CoagTables::new(&CoagulationKernel::constant(2.0, 0.5), &g);
    let f = project(|x| if x <= 1.0 { 1.0 } else { 0.0 }, &g).map_err(e)?;
    let out = apply_coag(&f, &ct);
    let h = g.max_width();
    let mut pw: f64 = 0.0;
    for (i, &x) in g.centers.iter().enumerate() {
        if (x - 1.0).abs() <= 2.0 * h || (x - 2.0).abs() <= 2.0 * h {
            continue;
        }
        let expect = if x < 1.0 {
            x - 2.0
        } else if x < 2.0 {
            2.0 - x
        } else {
            0.0
        };
        pw = pw.max((out.values[i] - expect).abs() / h);
    }
    ensure(pw <= 4.0, format!("pointwise error {pw:.2} h"))?;
    Ok(format!("M0 rel {rel:.2e}, mass drift {mass:.2e}, pointwise {pw:.2} h"))
}

fn c8() -> Outcome {
    let sc = preset("aizenman-bak-frag").map_err(e)?.build().map_err(e)?;
    let tr = solve(&sc.f0, &sc.cfg, &sc.ks).map_err(e)?;
    let last = tr.snapshots.last().unwrap();
    let t = *tr.times.last().unwrap();
    let exact = project(|x| (1.0 + t).powi(2) * (-x * (1.0 + t)).exp(), &sc.grid).map_err(e)?;
    let rel = rel_norm(last, &exact, 1.0, |x| x <= 20.0);
    ensure((t - 1.0).abs() < 1e-12, format!("ended at t = {t}"))?;
    ensure(rel <= AB_TOL, format!("error {rel:e}"))?;
    let m10 = tr.observables[0].m1;
    let drift = tr.observables.iter().map(|o| (o.m1 - m10).abs() / m10).fold(0.0, f64::max);
    ensure(drift <= AB_MASS_TOL, format!("mass drift {drift:e}"))?;
    Ok(format!("error {rel:.2e}, mass drift {drift:.2e}"))
}

fn c9() -> Outcome {
    let mut snaps = 0;
    for name in preset_names() {
        let out = run(&preset(name).map_err(e)?).map_err(e)?;
        for s in &out.trajectory.snapshots {
            ensure(s.min_value() >= 0.0, format!("{name}: min {}", s.min_value()))?;
            snaps += 1;
        }
        if let Some(d) = &out.duhamel {
            ensure(d.min_density() >= 0.0, format!("{name} (duhamel): min {}", d.min_density()))?;
        }
    }
    let g = Arc::new(SizeGrid::geometric(1e-3, 20.0, 64).map_err(e)?);
    let ks = KernelSet::new(
        FragmentationRate::zero(1.0),
        DaughterDistribution::uniform_binary(),
        GrowthRate::none(),
        CoagulationKernel::constant(50.0, 0.5),
        1.0,
    );
    let f0 = project(|x| (-x).exp(), &g).map_err(e)?;
    let off = SolverConfig { dt: 0.05, t_end: 0.2, positivity: PositivityPolicy::None, output_every: 1, ..Default::default() };
    let neg = solve(&f0, &off, &ks).map_err(e)?.min_density();
    ensure(neg < 0.0, format!("negative control stayed nonnegative ({neg})"))?;
    let on = SolverConfig { positivity: PositivityPolicy::BetaShift, ..off };
    let pos = solve(&f0, &on, &ks).map_err(e)?.min_density();
    ensure(pos >= 0.0, format!("stress scenario with shift: min {pos}"))?;
    Ok(format!("{snaps} snapshots nonnegative, control min {neg:.2e}"))
}

fn c10() -> Outcome {
    let cfg = preset("gfc-global-ii").map_err(e)?;
    let out = run(&cfg).map_err(e)?;
    let d = out.duhamel.as_ref().ok_or("no duhamel trajectory")?;
    let disc = cross_discrepancy(&out.trajectory, d, out.trajectory.m).map_err(e)?;
    ensure(disc <= CROSS_TOL, format!("discrepancy {disc:e}"))?;
    Ok(format!("discrepancy {disc:.2e} over {} outputs", d.times.len()))
}

fn c11() -> Outcome {
    let cfg = preset("regularization-probe").map_err(e)?;
    let sc = cfg.build().map_err(e)?;
    let spec = cfg.probe_spec().map_err(e)?;
    let rep = regularization_probe(&sc.ks, &sc.grid, &spec, sc.cfg.dt).map_err(e)?;
    let finite = rep.base.sup_product.is_finite() && rep.refined.sup_product.is_finite();
    ensure(finite, "supremum not finite".into())?;
    ensure(rep.variation < PROBE_VARIATION, format!("variation {:.4}", rep.variation))?;
    ensure(rep.pass, "probe rejected its datum".into())?;
    Ok(format!("sup {:.4e}, variation {:.4}", rep.base.sup_product, rep.variation))
}

fn c12() -> Outcome {
    let mut certified = 0;
    let mut worst: f64 = 0.0;
    let mut envelope_seen = false;
    for name in preset_names() {
        let cfg = preset(name).map_err(e)?;
        if !cfg.checks.suites.contains(&Suite::Domination) {
            continue;
        }
        let (rep, _) = verify(&cfg).map_err(e)?;
        for row in rep.checks.iter().filter(|r| r.suite == "domination") {
            if row.name == "M1 growth envelope" {
                envelope_seen = true;
                ensure(row.measured <= 1.0 + ENVELOPE_TOL, format!("{name}: envelope ratio {}", row.measured))?;
            } else {
                worst = worst.max(row.measured);
                ensure(row.measured <= DOMINATION_FACTOR, format!("{name}: {} ratio {}", row.name, row.measured))?;
            }
            ensure(row.pass, format!("{name}: {} failed ({})", row.name, row.detail))?;
        }
        certified += 1;
    }
    ensure(certified >= 2 && envelope_seen, format!("{certified} certified presets, envelope {envelope_seen}"))?;
    Ok(format!("{certified} presets, worst ratio {worst:.3}"))
}

fn c13() -> Outcome {
    let mut checked = Vec::new();
    for name in ["gfc-global-ii", "gfc-global-i"] {
        let cfg = preset(name).map_err(e)?;
        let mut csvs = Vec::new();
        for threads in [1, 4, 4] {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(|x| x.to_string())?;
            let out = pool.install(|| run(&cfg)).map_err(e)?;
            let mut s = trajectory_csv(&out.trajectory, None);
            if let Some(d) = &out.duhamel {
                s.push_str(&trajectory_csv(d, None));
            }
            for f in &out.trajectory.snapshots {
                for v in &f.values {
                    s.push_str(&format!("{:016x}", v.to_bits()));
                }
            }
            csvs.push(s);
        }
        ensure(csvs.iter().all(|c| *c == csvs[0]), format!("{name}: outputs differ across runs"))?;
        checked.push(name);
    }
    Ok(format!("bit-identical with 1 and 4 workers: {}", checked.join(", ")))
}

fn main() -> ExitCode {
    let mut s = Suite13 { failed: 0 };
    s.record(1, "daughter mass conservation", c1);
    s.record(2, "moment deficit signs", c2);
    s.record(3, "resolvent", c3);
    s.record(4, "transport integral bounds", c4);
    s.record(5, "transport quasi-contractivity", c5);
    s.record(6, "laplace consistency", c6);
    s.record(7, "coagulation oracles", c7);
    s.record(8, "fragmentation oracle", c8);
    s.record(9, "positivity", c9);
    s.record(10, "solver cross-validation", c10);
    s.record(11, "regularization probe", c11);
    s.record(12, "moment-bound domination", c12);
    s.record(13, "determinism", c13);
    println!("{} of 13 criteria failed", s.failed);
    if s.failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
