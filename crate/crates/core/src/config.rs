//! Scenario configuration: a strict TOML schema and its conversion into
//! kernels, grid, solver settings and initial data.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::evolution::{PositivityPolicy, ProbeSpec, Scheme, SolverConfig};
use crate::grid::{project, DensityField, SizeGrid, Spacing};
use crate::kernels::{
    CoagForm, CoagulationKernel, DaughterDistribution, FragmentationRate, GrowthRate, KernelClass, KernelSet,
    RateForm, Table,
};
use crate::presets;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default)]
    pub seed: u64,
    pub kernel: KernelSection,
    pub grid: GridSection,
    pub time: TimeSection,
    #[serde(default)]
    pub solver: SolverSection,
    pub initial: InitialSpec,
    #[serde(default)]
    pub checks: ChecksSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe: Option<ProbeSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    pub a: RateSpec,
    pub b: DaughterSpec,
    pub r: GrowthSpec,
    pub k: CoagSpec,
    #[serde(default = "one")]
    pub ball_radius: f64,
    /// order of the liminf check on `N_m0(y) / y^m0`
    #[serde(default = "two")]
    pub m0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum RateSpec {
    PowerLaw {
        amp: f64,
        exp: f64,
        #[serde(default = "one")]
        x0: f64,
    },
    Linear {
        c0: f64,
        c1: f64,
        a0: f64,
        gamma0: f64,
        #[serde(default = "one")]
        x0: f64,
    },
    Table {
        xs: Vec<f64>,
        ys: Vec<f64>,
        a0: f64,
        gamma0: f64,
        #[serde(default = "one")]
        x0: f64,
    },
    Zero {
        #[serde(default = "one")]
        gamma0: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DaughterSpec {
    UniformBinary {},
    PowerLaw { nu: f64 },
    Monomial { coef: f64, nu: f64 },
    /// profile `h(z)` on `[0, 1]`
    Table { zs: Vec<f64>, hs: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GrowthSpec {
    None {},
    Constant { c: f64 },
    Linear { c: f64 },
    Affine { r0: f64, r1: f64 },
    Table { xs: Vec<f64>, ys: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CoagSpec {
    Zero {
        #[serde(default = "half")]
        alpha: f64,
    },
    Constant {
        value: f64,
        #[serde(default = "half")]
        alpha: f64,
    },
    Product { amp: f64, exp: f64 },
    SumPower { amp: f64, exp: f64 },
    Table {
        xs: Vec<f64>,
        values: Vec<Vec<f64>>,
        alpha: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum GridSpacing {
    #[default]
    Geometric,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default)]
    pub spacing: GridSpacing,
    pub xmin: f64,
    pub xmax: f64,
    pub cells: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    pub dt: f64,
    pub t_end: f64,
    #[serde(default = "ten")]
    pub output_every: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub scheme: Scheme,
    pub m: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    pub positivity: PositivityPolicy,
    pub cfl_safety: f64,
    pub blowup_factor: f64,
    pub picard_tol: f64,
    pub picard_max_iter: usize,
    /// also run the Duhamel solver and compare
    pub cross_check: bool,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SolverConfig::default();
        Self {
            scheme: d.scheme,
            m: d.m,
            n: None,
            p: None,
            positivity: d.positivity,
            cfl_safety: d.cfl_safety,
            blowup_factor: d.blowup_factor,
            picard_tol: d.picard_tol,
            picard_max_iter: d.picard_max_iter,
            cross_check: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialSpec {
    /// `amp exp(-rate x)`
    Exp {
        #[serde(default = "one")]
        amp: f64,
        #[serde(default = "one")]
        rate: f64,
    },
    /// `amp exp(-((x - center)/width)^2)`
    Gaussian { amp: f64, center: f64, width: f64 },
    /// `amp` on `[lo, hi]`
    Indicator { amp: f64, lo: f64, hi: f64 },
    /// `amp (1 + x)^(-exponent)`
    PowerDecay {
        #[serde(default = "one")]
        amp: f64,
        exponent: f64,
    },
    Zero {},
    Table { xs: Vec<f64>, ys: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    KernelValidation,
    Lemma21,
    Resolvent,
    Laplace,
    FragIdentity,
    CoagIdentity,
    MassBudget,
    Positivity,
    TransportGrowth,
    Residual,
    CrossValidation,
    RegularizationProbe,
    Domination,
}

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Suite::KernelValidation => "kernel-validation",
            Suite::Lemma21 => "lemma21",
            Suite::Resolvent => "resolvent",
            Suite::Laplace => "laplace",
            Suite::FragIdentity => "frag-identity",
            Suite::CoagIdentity => "coag-identity",
            Suite::MassBudget => "mass-budget",
            Suite::Positivity => "positivity",
            Suite::TransportGrowth => "transport-growth",
            Suite::Residual => "residual",
            Suite::CrossValidation => "cross-validation",
            Suite::RegularizationProbe => "regularization-probe",
            Suite::Domination => "domination",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChecksSection {
    pub suites: Vec<Suite>,
    /// resolvent parameter; defaults to `3 omega_(r,m)` (or 1 without growth)
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    pub domination_tol: f64,
    pub mass_tol: f64,
    /// growth input against the quadrature of `r f`, relative to `M1(0)`
    pub growth_tol: f64,
    pub identity_tol: f64,
    /// coagulation identity above order 1
    pub placement_tol: f64,
    pub cross_tol: f64,
    pub residual_tol: f64,
    pub resolvent_samples: usize,
}

impl Default for ChecksSection {
    fn default() -> Self {
        Self {
            suites: Vec::new(),
            lambda: None,
            domination_tol: 0.05,
            mass_tol: 1e-8,
            growth_tol: 1e-4,
            identity_tol: 1e-10,
            placement_tol: 1e-2,
            cross_tol: 0.02,
            residual_tol: 0.05,
            resolvent_samples: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeSection {
    pub eta: f64,
    pub t_min: f64,
    pub t_max: f64,
    pub points: usize,
}

impl Default for ProbeSection {
    fn default() -> Self {
        Self {
            eta: 0.5,
            t_min: 1e-2,
            t_max: 1.0,
            points: 12,
        }
    }
}

fn one() -> f64 {
    1.0
}
fn two() -> f64 {
    2.0
}
fn half() -> f64 {
    0.5
}
fn ten() -> usize {
    10
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.check_fields()?;
        Ok(cfg)
    }

    /// Reads a file, or an embedded preset when `source` is `preset:NAME`.
    pub fn load(source: &str) -> Result<Self> {
        if let Some(name) = source.strip_prefix("preset:") {
            return presets::preset(name);
        }
        let text = std::fs::read_to_string(Path::new(source)).map_err(|e| Error::Io(format!("{source}: {e}")))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario config serializes")
    }

    pub fn with_overrides(mut self, cells: Option<usize>, dt: Option<f64>, seed: Option<u64>) -> Self {
        if let Some(c) = cells {
            self.grid.cells = c;
        }
        if let Some(d) = dt {
            self.time.dt = d;
        }
        if let Some(s) = seed {
            self.seed = s;
        }
        self
    }

    fn check_fields(&self) -> Result<()> {
        let pos = |v: f64, what: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{what} must be positive and finite, got {v}")))
            }
        };
        pos(self.grid.xmin, "grid.xmin")?;
        pos(self.grid.xmax, "grid.xmax")?;
        pos(self.time.dt, "time.dt")?;
        if self.grid.cells < 2 {
            return Err(Error::Config(format!("grid.cells must be at least 2, got {}", self.grid.cells)));
        }
        if self.kernel.ball_radius < 0.0 {
            return Err(Error::Config("kernel.ball_radius must be nonnegative".into()));
        }
        let mut seen = self.checks.suites.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.checks.suites.len() {
            return Err(Error::Config("checks.suites lists a suite twice".into()));
        }
        Ok(())
    }

    pub fn kernel_set(&self) -> Result<KernelSet> {
        let k = &self.kernel;
        let a = match &k.a {
            RateSpec::PowerLaw { amp, exp, x0 } => FragmentationRate {
                x0: *x0,
                ..FragmentationRate::power_law(*amp, *exp)
            },
            RateSpec::Linear { c0, c1, a0, gamma0, x0 } => FragmentationRate {
                form: RateForm::Linear { c0: *c0, c1: *c1 },
                a0: *a0,
                gamma0: *gamma0,
                x0: *x0,
            },
            RateSpec::Table { xs, ys, a0, gamma0, x0 } => FragmentationRate {
                form: RateForm::Table(Table::new(xs.clone(), ys.clone())?),
                a0: *a0,
                gamma0: *gamma0,
                x0: *x0,
            },
            RateSpec::Zero { gamma0 } => FragmentationRate::zero(*gamma0),
        };
        let b = match &k.b {
            DaughterSpec::UniformBinary {} => DaughterDistribution::uniform_binary(),
            DaughterSpec::PowerLaw { nu } => DaughterDistribution::power_law(*nu)?,
            DaughterSpec::Monomial { coef, nu } => DaughterDistribution::monomial(*coef, *nu)?,
            DaughterSpec::Table { zs, hs } => DaughterDistribution::table(Table::new(zs.clone(), hs.clone())?)?,
        };
        let r = match &k.r {
            GrowthSpec::None {} => GrowthRate::none(),
            GrowthSpec::Constant { c } => GrowthRate::constant(*c),
            GrowthSpec::Linear { c } => GrowthRate::linear(*c),
            GrowthSpec::Affine { r0, r1 } => GrowthRate::affine(*r0, *r1),
            GrowthSpec::Table { xs, ys } => GrowthRate::table(Table::new(xs.clone(), ys.clone())?),
        };
        let kk = match &k.k {
            CoagSpec::Zero { alpha } => CoagulationKernel::zero(*alpha),
            CoagSpec::Constant { value, alpha } => CoagulationKernel::constant(*value, *alpha),
            CoagSpec::Product { amp, exp } => CoagulationKernel::product(*amp, *exp),
            CoagSpec::SumPower { amp, exp } => CoagulationKernel::sum_power(*amp, *exp),
            CoagSpec::Table { xs, values, alpha } => {
                if values.len() != xs.len() || values.iter().any(|row| row.len() != xs.len()) {
                    return Err(Error::Config("kernel.k table must be square on its knots".into()));
                }
                let k0 = values.iter().flatten().fold(0.0, |m: f64, v| m.max(*v));
                CoagulationKernel {
                    form: CoagForm::Table {
                        xs: xs.clone(),
                        values: values.clone(),
                    },
                    k0,
                    alpha: *alpha,
                    class: KernelClass::Global,
                }
            }
        };
        Ok(KernelSet::new(a, b, r, kk, k.ball_radius))
    }

    pub fn grid(&self) -> Result<Arc<SizeGrid>> {
        let spacing = match self.grid.spacing {
            GridSpacing::Geometric => Spacing::Geometric,
            GridSpacing::Uniform => Spacing::Uniform,
        };
        Ok(Arc::new(SizeGrid::new(spacing, self.grid.xmin, self.grid.xmax, self.grid.cells)?))
    }

    pub fn solver_config(&self) -> SolverConfig {
        let s = &self.solver;
        SolverConfig {
            dt: self.time.dt,
            t_end: self.time.t_end,
            scheme: s.scheme,
            m: s.m,
            n: s.n,
            p: s.p,
            output_every: self.time.output_every,
            positivity: s.positivity,
            cfl_safety: s.cfl_safety,
            blowup_factor: s.blowup_factor,
            picard_tol: s.picard_tol,
            picard_max_iter: s.picard_max_iter,
        }
    }

    pub fn initial_field(&self, grid: &Arc<SizeGrid>) -> Result<DensityField> {
        match &self.initial {
            InitialSpec::Exp { amp, rate } => project(|x| amp * (-rate * x).exp(), grid),
            InitialSpec::Gaussian { amp, center, width } => {
                project(|x| amp * (-((x - center) / width).powi(2)).exp(), grid)
            }
            InitialSpec::Indicator { amp, lo, hi } => {
                let vals = (0..grid.len())
                    .map(|i| {
                        let (a, b) = (grid.edges[i].max(*lo), grid.edges[i + 1].min(*hi));
                        amp * (b - a).max(0.0) / grid.widths[i]
                    })
                    .collect();
                Ok(DensityField::from_values(grid.clone(), vals))
            }
            InitialSpec::PowerDecay { amp, exponent } => project(|x| amp * (1.0 + x).powf(-exponent), grid),
            InitialSpec::Zero {} => Ok(DensityField::zeros(grid.clone())),
            InitialSpec::Table { xs, ys } => {
                let t = Table::new(xs.clone(), ys.clone())?;
                project(|x| t.eval(x).max(0.0), grid)
            }
        }
    }

    pub fn probe_spec(&self) -> Result<ProbeSpec> {
        let pr = self.probe.clone().unwrap_or_default();
        let s = &self.solver;
        match (s.n, s.p) {
            (Some(n), Some(p)) => Ok(ProbeSpec {
                m: s.m,
                n,
                p,
                eta: pr.eta,
                t_min: pr.t_min,
                t_max: pr.t_max,
                points: pr.points,
            }),
            _ => Err(Error::Config("the regularization probe needs solver.n and solver.p".into())),
        }
    }

    /// Every cross-field constraint, checked before any run.
    pub fn build(&self) -> Result<Scenario> {
        let ks = self.kernel_set()?;
        let grid = self.grid()?;
        let cfg = self.solver_config();
        cfg.validate(&ks, &grid)?;
        let f0 = self.initial_field(&grid)?;
        Ok(Scenario { ks, grid, cfg, f0 })
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub ks: KernelSet,
    pub grid: Arc<SizeGrid>,
    pub cfg: SolverConfig,
    pub f0: DensityField,
}
