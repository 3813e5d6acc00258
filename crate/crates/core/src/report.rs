//! Run reports and CSV output.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::evolution::Trajectory;
use crate::moment_bounds::BoundTrajectory;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckRow {
    pub suite: String,
    pub name: String,
    pub measured: f64,
    pub bound: f64,
    pub tol: f64,
    pub pass: bool,
    #[serde(default)]
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunReport {
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub checks: Vec<CheckRow>,
    #[serde(default)]
    pub elapsed_seconds: f64,
    #[serde(default)]
    pub files: Vec<String>,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckRow> {
        self.checks.iter().filter(|c| !c.pass)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("report serializes")
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Aligned pass/fail table.
    pub fn table(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let _ = writeln!(
                out,
                "{:<4} {:<20} {:<28} measured {:>12.5e}  bound {:>12.5e}  tol {:>9.2e}  {}",
                if c.pass { "ok" } else { "FAIL" },
                c.suite,
                c.name,
                c.measured,
                c.bound,
                c.tol,
                c.detail
            );
        }
        out
    }
}

/// Full-precision decimal.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn trajectory_csv(traj: &Trajectory, bounds: Option<&BoundTrajectory>) -> String {
    let mut out = String::from("t,M0,M1,M2,Mm,norm0m,min_density,escaped_mass");
    let bound_cols: Vec<&str> = match bounds {
        Some(b) => {
            let mut v = Vec::new();
            if b.m0.is_some() {
                v.push("M0");
            }
            v.extend(["M1", "M2", "Mm"]);
            v
        }
        None => Vec::new(),
    };
    for c in &bound_cols {
        let _ = write!(out, ",bound_{c}");
    }
    out.push('\n');
    for o in &traj.observables {
        let row = [o.t, o.m0, o.m1, o.m2, o.mm, o.norm0m, o.min_density, o.escaped_mass];
        let mut line: Vec<String> = row.iter().map(|v| fmt17(*v)).collect();
        if let Some(b) = bounds {
            for c in &bound_cols {
                line.push(fmt17(b.at(c, o.t).unwrap_or(f64::NAN)));
            }
        }
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn bounds_csv(b: &BoundTrajectory) -> String {
    let mut out = String::from("t");
    if b.m0.is_some() {
        out.push_str(",bound_M0");
    }
    out.push_str(",bound_M1");
    for (i, _) in &b.orders {
        let _ = write!(out, ",bound_M{i}");
    }
    out.push_str(",bound_Mm");
    if b.phi.is_some() {
        out.push_str(",bound_Phi");
    }
    out.push('\n');
    for k in 0..b.times.len() {
        let mut line = vec![fmt17(b.times[k])];
        if let Some(m0) = &b.m0 {
            line.push(fmt17(m0[k]));
        }
        line.push(fmt17(b.m1[k]));
        for (_, v) in &b.orders {
            line.push(fmt17(v[k]));
        }
        line.push(fmt17(b.mm[k]));
        if let Some(p) = &b.phi {
            line.push(fmt17(p[k]));
        }
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}
