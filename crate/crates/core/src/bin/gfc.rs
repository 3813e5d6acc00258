use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use gfc_core::config::ScenarioConfig;
use gfc_core::evolution::regularization_probe;
use gfc_core::moment_bounds::BoundOutcome;
use gfc_core::presets::list_presets;
use gfc_core::report::{bounds_csv, trajectory_csv, RunReport};
use gfc_core::runner::{bounds, verify};
use gfc_core::Result;

/// Growth-fragmentation-coagulation solver.
#[derive(Parser)]
#[command(name = "gfc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a scenario, write the trajectory CSV and run its checks
    Run(Common),
    /// Run every enabled check and print the report
    Verify(Common),
    /// Moment regularization probe
    ProbeRegularization(Common),
    /// A priori moment bounds
    Bounds(Common),
    /// Built-in scenarios
    ListPresets,
}

#[derive(Args)]
struct Common {
    /// Scenario file, or preset:NAME
    #[arg(long)]
    config: String,
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the grid cell count
    #[arg(long)]
    cells: Option<usize>,
    /// Override the time step
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> Result<ScenarioConfig> {
        Ok(ScenarioConfig::load(&self.config)?.with_overrides(self.cells, self.dt, self.seed))
    }
}

fn write(dir: &Path, name: &str, body: &str, files: &mut Vec<String>) -> Result<()> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, body)?;
    files.push(path.display().to_string());
    Ok(())
}

fn finish(report: &RunReport) -> ExitCode {
    let failed = report.failures().count();
    println!("{} checks, {} failed", report.checks.len(), failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    }
}

fn run(c: &Common, print_table: bool) -> Result<ExitCode> {
    let cfg = c.load()?;
    let (mut report, out) = verify(&cfg)?;
    let mut files = Vec::new();
    if !out.trajectory.times.is_empty() {
        write(&c.out, "trajectory.csv", &trajectory_csv(&out.trajectory, out.bounds.as_ref()), &mut files)?;
    }
    if let Some(d) = &out.duhamel {
        write(&c.out, "duhamel.csv", &trajectory_csv(d, None), &mut files)?;
    }
    report.files = files.clone();
    write(&c.out, "report.toml", &report.to_toml_string(), &mut files)?;
    if print_table {
        print!("{}", report.table());
    }
    for f in &files {
        println!("wrote {f}");
    }
    Ok(finish(&report))
}

fn probe(c: &Common) -> Result<ExitCode> {
    let cfg = c.load()?;
    let sc = cfg.build()?;
    let spec = cfg.probe_spec()?;
    let rep = regularization_probe(&sc.ks, &sc.grid, &spec, sc.cfg.dt)?;
    println!("exponent (m - n)/gamma0  {}", rep.exponent);
    println!("membership growth        {:.6e}", rep.membership_growth);
    for (name, run) in [("base", &rep.base), ("refined", &rep.refined)] {
        println!(
            "{name:<8} cells {:>5}  xmax {:>10.3e}  theta {:>12.5e}  sup {:>12.5e}",
            run.cells, run.xmax, run.theta_hat, run.sup_product
        );
    }
    println!("variation                {:.4}", rep.variation);
    let mut csv = String::from("t,base,refined\n");
    for (k, t) in rep.times.iter().enumerate() {
        csv.push_str(&format!("{t:.16e},{:.16e},{:.16e}\n", rep.base.products[k], rep.refined.products[k]));
    }
    let mut files = Vec::new();
    write(&c.out, "probe.csv", &csv, &mut files)?;
    println!("wrote {}", files[0]);
    Ok(if rep.pass { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn show_bounds(c: &Common) -> Result<ExitCode> {
    let cfg = c.load()?;
    let sc = cfg.build()?;
    let (p, outcome) = bounds(&sc)?;
    let cond = &p.conditions;
    println!(
        "condition (i)  {}  m0 = {:.6e}  m1 = {:.6e}",
        cond.cond_i, cond.m0, cond.m1
    );
    println!("condition (ii) {}  sup r/x = {:.6e}", cond.cond_ii, cond.r_over_x_sup);
    match outcome {
        BoundOutcome::Refused(why) => {
            println!("{why}");
            Ok(ExitCode::from(2))
        }
        BoundOutcome::Bounds(b) => {
            println!("M1max {:.6e}  kappa {:.6}", p.m1max, p.kappa);
            for oc in &p.orders {
                println!(
                    "i = {}  delta {:.4e}  nu {:.4e}  K {:.4e}  eps {:.4e}  D = ({:.4e}, {:.4e}, {:.4e}, {:.4e})",
                    oc.i, oc.delta, oc.nu, oc.k_i, oc.eps, oc.d0, oc.d1, oc.d2, oc.d3
                );
            }
            let mut files = Vec::new();
            write(&c.out, "bounds.csv", &bounds_csv(&b), &mut files)?;
            println!("wrote {}", files[0]);
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Run(c) => run(c, false),
        Command::Verify(c) => run(c, true),
        Command::ProbeRegularization(c) => probe(c),
        Command::Bounds(c) => show_bounds(c),
        Command::ListPresets => {
            print!("{}", list_presets());
            Ok(ExitCode::SUCCESS)
        }
    };
    res.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        ExitCode::from(1)
    })
}
