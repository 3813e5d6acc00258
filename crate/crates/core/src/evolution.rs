//! Time integration: positivity-preserving operator splitting, an
//! independent Duhamel/Picard solver for the mild formulation, the
//! regularization probe and a discrete PDE residual.

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::coagulation::{apply_coag, coag_parts, CoagTables};
use crate::error::{Error, Result};
use crate::fragmentation::{apply_frag, DaughterMatrix};
use crate::grid::{project, weighted_norm_values, DensityField, SizeGrid, WeightSpec};
use crate::kernels::{compute_beta, KernelSet};
use crate::quadrature::{compensated_sum, FixedRule};
use crate::transport::TransportPlan;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    LieSplit,
    StrangSplit,
    Duhamel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PositivityPolicy {
    /// absorption `a1 = beta (1 + x^alpha)` in the transport substep, re-added
    /// before the coagulation step, whose loss rate is then dominated by `a1`;
    /// coagulation sub-steps obey `h max a1 <= 1` and `beta` is widened when the
    /// iterate leaves the ball
    BetaShift,
    /// no shift and no step restriction
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub dt: f64,
    pub t_end: f64,
    pub scheme: Scheme,
    pub m: f64,
    pub n: Option<f64>,
    pub p: Option<f64>,
    pub output_every: usize,
    pub positivity: PositivityPolicy,
    pub cfl_safety: f64,
    pub blowup_factor: f64,
    pub picard_tol: f64,
    pub picard_max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_end: 1.0,
            scheme: Scheme::StrangSplit,
            m: 2.0,
            n: None,
            p: None,
            output_every: 10,
            positivity: PositivityPolicy::BetaShift,
            cfl_safety: 1.0,
            blowup_factor: 1e6,
            picard_tol: 1e-10,
            picard_max_iter: 30,
        }
    }
}

impl SolverConfig {
    pub fn steps(&self) -> usize {
        (self.t_end / self.dt - 1e-9).ceil().max(0.0) as usize
    }

    pub fn validate(&self, ks: &KernelSet, grid: &SizeGrid) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end >= 0.0) {
            return Err(Error::Config(format!("t_end must be nonnegative, got {}", self.t_end)));
        }
        if self.output_every == 0 {
            return Err(Error::Config("output_every must be at least 1".into()));
        }
        if self.m < 0.0 {
            return Err(Error::Config(format!("weight order m must be nonnegative, got {}", self.m)));
        }
        if !ks.r.is_none() {
            let limit = (0..grid.len())
                .map(|i| grid.widths[i] / ks.r.eval(grid.edges[i + 1]))
                .fold(f64::INFINITY, f64::min);
            if self.dt > self.cfl_safety * limit {
                return Err(Error::Config(format!(
                    "CFL violated: dt = {} exceeds {} * min dx/r = {}",
                    self.dt,
                    self.cfl_safety,
                    self.cfl_safety * limit
                )));
            }
        }
        if self.scheme == Scheme::Duhamel {
            let (n, p) = match (self.n, self.p) {
                (Some(n), Some(p)) => (n, p),
                _ => return Err(Error::Config("the duhamel scheme needs secondary orders n and p".into())),
            };
            let floor = 1f64.max(ks.b.l);
            if !(floor < n && n < p && p < self.m) {
                return Err(Error::Config(format!(
                    "orders must satisfy max(1,l) = {floor} < n = {n} < p = {p} < m = {}",
                    self.m
                )));
            }
            if ((p - (self.m - ks.alpha())) / p).abs() > 1e-9 {
                return Err(Error::Config(format!(
                    "p must equal m - alpha = {}, got {p}",
                    self.m - ks.alpha()
                )));
            }
            if (self.m - n) / ks.a.gamma0 >= 1.0 {
                return Err(Error::Config(format!(
                    "(m - n)/gamma0 = {} must be below 1",
                    (self.m - n) / ks.a.gamma0
                )));
            }
        }
        Ok(())
    }
}

/// Scalar observables recorded at each output time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observables {
    pub t: f64,
    pub m0: f64,
    pub m1: f64,
    pub m2: f64,
    pub mm: f64,
    pub norm0m: f64,
    pub min_density: f64,
    pub escaped_mass: f64,
    /// mass added by the transport steps, counted along the characteristics
    pub growth_input: f64,
    /// `int_0^t sum r f dx ds` by the trapezoid rule over steps
    pub growth_quadrature: f64,
    /// `int_0^t int_{x0}^inf a x^2 f dx ds`
    pub dissipation2: f64,
}

fn observe(f: &DensityField, t: f64, m: f64, growth: (f64, f64), dissipation2: f64) -> Observables {
    Observables {
        t,
        m0: f.moment(0.0),
        m1: f.moment(1.0),
        m2: f.moment(2.0),
        mm: f.moment(m),
        norm0m: f.norm0m(m),
        min_density: f.min_value(),
        escaped_mass: f.escaped_mass,
        growth_input: growth.0,
        growth_quadrature: growth.1,
        dissipation2,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Completed,
    /// `||f||_[0,m]` passed the ceiling
    BlowUp { t: f64, norm: f64 },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepDiagnostics {
    /// steps where the ball radius had to be widened
    pub ball_exits: usize,
    pub max_beta: f64,
    /// largest number of coagulation sub-steps within one step
    pub max_substeps: usize,
    /// Duhamel only
    pub picard_iterations: usize,
    pub contraction_factor: f64,
    pub contraction_window: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub m: f64,
    pub times: Vec<f64>,
    pub snapshots: Vec<DensityField>,
    pub observables: Vec<Observables>,
    pub outcome: Outcome,
    pub diagnostics: StepDiagnostics,
}

impl Trajectory {
    pub fn empty(m: f64) -> Self {
        Self {
            m,
            times: Vec::new(),
            snapshots: Vec::new(),
            observables: Vec::new(),
            outcome: Outcome::Completed,
            diagnostics: StepDiagnostics::default(),
        }
    }

    fn push(&mut self, f: &DensityField, t: f64, growth: (f64, f64), diss: f64) {
        self.times.push(t);
        self.observables.push(observe(f, t, self.m, growth, diss));
        self.snapshots.push(f.clone());
    }

    pub fn min_density(&self) -> f64 {
        self.observables.iter().map(|o| o.min_density).fold(f64::INFINITY, f64::min)
    }
}

fn check_finite(f: &[f64], t: f64) -> Result<()> {
    if let Some((i, v)) = f.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(Error::Numerical {
            t,
            detail: format!("non-finite density {v} in cell {i}"),
        });
    }
    Ok(())
}

// ---------------------------------------------------------------- split

/// Shared operator state for split stepping.
pub struct Stepper {
    pub ks: KernelSet,
    pub dm: DaughterMatrix,
    pub ct: Option<CoagTables>,
    pub cfg: SolverConfig,
    plans: HashMap<(u64, u64), TransportPlan>,
    pub diagnostics: StepDiagnostics,
    /// mass added by transport so far
    pub growth_added: f64,
}

impl Stepper {
    pub fn new(ks: &KernelSet, grid: &Arc<SizeGrid>, cfg: &SolverConfig) -> Result<Self> {
        cfg.validate(ks, grid)?;
        let dm = crate::fragmentation::build_daughter_matrix(&ks.b, grid)?;
        let ct = (!ks.k.is_zero()).then(|| CoagTables::new(&ks.k, grid));
        let mut ks = ks.clone();
        if cfg.positivity == PositivityPolicy::None || ks.k.is_zero() {
            ks = ks.with_beta(0.0);
        }
        Ok(Self {
            ks,
            dm,
            ct,
            cfg: cfg.clone(),
            plans: HashMap::new(),
            diagnostics: StepDiagnostics::default(),
            growth_added: 0.0,
        })
    }

    fn plan(&mut self, tau: f64, beta: f64) -> Result<&TransportPlan> {
        let key = (tau.to_bits(), beta.to_bits());
        if !self.plans.contains_key(&key) {
            let ks = self.ks.with_beta(beta);
            let plan = TransportPlan::new(&self.dm.grid, &ks, tau)?;
            self.plans.insert(key, plan);
        }
        Ok(&self.plans[&key])
    }

    /// Absorption level for the next step: the nominal value while the iterate
    /// stays in the ball, widened in 10% increments otherwise.
    fn beta_for(&mut self, f: &DensityField, h: f64) -> f64 {
        let base = self.ks.beta();
        if base == 0.0 {
            return 0.0;
        }
        let radius = 1.0 + self.ks.ball_radius;
        let omega = 2.0 * self.cfg.m.max(1.0) * self.ks.r.rtilde();
        let need = 1.01 * (omega * h).exp() * f.norm0m(self.cfg.m.max(1.0));
        let beta = if need <= radius {
            base
        } else {
            self.diagnostics.ball_exits += 1;
            let k = ((need / radius).ln() / 1.1f64.ln()).ceil();
            base * 1.1f64.powf(k)
        };
        self.diagnostics.max_beta = self.diagnostics.max_beta.max(beta);
        beta
    }

    /// Transport over `tau` followed by the re-injection of the absorbed
    /// density: `a`-losses through the daughter matrix, `a1`-losses in place
    /// when `readd` is set.
    fn transport_flush(&mut self, f: &[f64], tau: f64, beta: f64, readd: bool) -> Result<(Vec<f64>, f64)> {
        let out = self.plan(tau, beta)?.apply(f);
        self.growth_added += out.growth;
        let gain = self.dm.redistribute(&out.lost_a);
        let mut v = out.transported;
        for i in 0..v.len() {
            v[i] += gain[i];
            if readd {
                v[i] += out.lost_a1[i];
            }
        }
        Ok((v, out.escaped_raw))
    }

    /// Explicit coagulation over `h`: `f (1 - h S(f)) + h gain(f)`, returning
    /// the overflow mass. Under the shift policy the step is sub-cycled so that
    /// every sub-step satisfies `h' max a1 <= 1`; on the ball the loss rate is
    /// dominated by `a1`, which keeps each sub-step nonnegative.
    fn react(&mut self, f: &mut [f64], h: f64, beta: f64) -> f64 {
        let ct = match &self.ct {
            Some(ct) => ct,
            None => return 0.0,
        };
        let sub = match self.cfg.positivity {
            PositivityPolicy::BetaShift => {
                let top = beta * (1.0 + ct.grid.xmax.powf(self.ks.alpha()));
                (h * top - 1e-12).ceil().max(1.0) as usize
            }
            PositivityPolicy::None => 1,
        };
        self.diagnostics.max_substeps = self.diagnostics.max_substeps.max(sub);
        let hs = h / sub as f64;
        let mut over = 0.0;
        for _ in 0..sub {
            let field = DensityField::from_values(ct.grid.clone(), f.to_vec());
            let p = coag_parts(&field, ct);
            for i in 0..f.len() {
                f[i] = f[i] * (1.0 - hs * p.loss_rate[i]) + hs * p.gain[i];
            }
            over += hs * p.overflow_mass;
        }
        over
    }

    pub fn step(&mut self, f: &DensityField, t: f64) -> Result<DensityField> {
        let h = self.cfg.dt;
        let beta = self.beta_for(f, h);
        let (values, escaped) = match self.cfg.scheme {
            Scheme::LieSplit | Scheme::Duhamel => {
                let (mut v, esc) = self.transport_flush(&f.values, h, beta, true)?;
                let over = self.react(&mut v, h, beta);
                (v, esc + over)
            }
            Scheme::StrangSplit => {
                let (mut v, esc1) = self.transport_flush(&f.values, 0.5 * h, beta, true)?;
                let over = self.react(&mut v, h, beta);
                let (v, esc2) = self.transport_flush(&v, 0.5 * h, beta, true)?;
                (v, esc1 + over + esc2)
            }
        };
        check_finite(&values, t + h)?;
        Ok(DensityField {
            grid: f.grid.clone(),
            values,
            escaped_mass: f.escaped_mass + escaped,
        })
    }
}

/// One split step from a fresh operator state.
pub fn step_split(f: &DensityField, dt: f64, ks: &KernelSet, cfg: &SolverConfig) -> Result<DensityField> {
    let cfg = SolverConfig { dt, ..cfg.clone() };
    Stepper::new(ks, &f.grid, &cfg)?.step(f, 0.0)
}

fn growth_rate_integral(f: &DensityField, ks: &KernelSet) -> f64 {
    if ks.r.is_none() {
        return 0.0;
    }
    let g = &f.grid;
    compensated_sum((0..g.len()).map(|i| ks.r.eval(g.centers[i]) * f.values[i] * g.widths[i]))
}

fn dissipation_rate(f: &DensityField, ks: &KernelSet) -> f64 {
    let g = &f.grid;
    compensated_sum(
        (0..g.len())
            .filter(|&i| g.centers[i] >= ks.a.x0)
            .map(|i| ks.a.eval(g.centers[i]) * g.centers[i].powi(2) * f.values[i] * g.widths[i]),
    )
}

pub fn solve(f0: &DensityField, cfg: &SolverConfig, ks: &KernelSet) -> Result<Trajectory> {
    if cfg.scheme == Scheme::Duhamel {
        return duhamel_solve(f0, cfg, ks);
    }
    let mut st = Stepper::new(ks, &f0.grid, cfg)?;
    let mut traj = Trajectory::empty(cfg.m);
    let steps = cfg.steps();
    let ceiling = cfg.blowup_factor * f0.norm0m(cfg.m).max(f64::MIN_POSITIVE);
    let mut f = f0.clone();
    let (mut growth, mut diss) = (0.0, 0.0);
    let (mut gr_prev, mut di_prev) = (growth_rate_integral(&f, ks), dissipation_rate(&f, ks));
    traj.push(&f, 0.0, (0.0, growth), diss);
    for s in 0..steps {
        let t = s as f64 * cfg.dt;
        f = st.step(&f, t)?;
        let t1 = (s + 1) as f64 * cfg.dt;
        let (gr, di) = (growth_rate_integral(&f, ks), dissipation_rate(&f, ks));
        growth += 0.5 * cfg.dt * (gr + gr_prev);
        diss += 0.5 * cfg.dt * (di + di_prev);
        gr_prev = gr;
        di_prev = di;
        let norm = f.norm0m(cfg.m);
        if norm > ceiling {
            traj.push(&f, t1, (st.growth_added, growth), diss);
            traj.outcome = Outcome::BlowUp { t: t1, norm };
            break;
        }
        if (s + 1) % cfg.output_every == 0 || s + 1 == steps {
            traj.push(&f, t1, (st.growth_added, growth), diss);
        }
    }
    traj.diagnostics = st.diagnostics.clone();
    Ok(traj)
}

// ---------------------------------------------------------------- Duhamel

/// Linear propagator `S(t)`: transport with `q = a + a1` and fragmentation
/// gain, advanced in substeps no longer than `dt`.
struct Propagator {
    ks: KernelSet,
    dm: DaughterMatrix,
    dt: f64,
    plans: HashMap<u64, TransportPlan>,
}

impl Propagator {
    fn apply(&mut self, f: &[f64], sigma: f64) -> Result<Vec<f64>> {
        if sigma <= 0.0 {
            return Ok(f.to_vec());
        }
        let k = (sigma / self.dt - 1e-9).ceil().max(1.0) as usize;
        let tau = sigma / k as f64;
        let key = tau.to_bits();
        if !self.plans.contains_key(&key) {
            self.plans.insert(key, TransportPlan::new(&self.dm.grid, &self.ks, tau)?);
        }
        let plan = &self.plans[&key];
        let mut v = f.to_vec();
        for _ in 0..k {
            let out = plan.apply(&v);
            let gain = self.dm.redistribute(&out.lost_a);
            v = out.transported;
            for i in 0..v.len() {
                v[i] += gain[i];
            }
        }
        Ok(v)
    }
}

/// Graded product rule on `[0, H]`, refined geometrically toward `sigma = 0`.
fn graded_rule(h: f64) -> Vec<(f64, f64)> {
    let rule = FixedRule::new(3);
    let mut edges = vec![0.0];
    for j in (0..5).rev() {
        edges.push(h / 2f64.powi(j));
    }
    let mut out = Vec::new();
    for w in edges.windows(2) {
        out.extend(rule.mapped(w[0], w[1]));
    }
    out
}

pub fn duhamel_solve(f0: &DensityField, cfg: &SolverConfig, ks: &KernelSet) -> Result<Trajectory> {
    let grid = f0.grid.clone();
    let mut dcfg = cfg.clone();
    dcfg.scheme = Scheme::Duhamel;
    dcfg.validate(ks, &grid)?;
    let n = grid.len();
    let m = cfg.m;
    let beta = compute_beta(ks.k.k0, ks.ball_radius);
    let ksb = ks.with_beta(if ks.k.is_zero() { 0.0 } else { beta });
    let dm = crate::fragmentation::build_daughter_matrix(&ks.b, &grid)?;
    let ct = (!ks.k.is_zero()).then(|| CoagTables::new(&ks.k, &grid));
    let mut prop = Propagator {
        ks: ksb.clone(),
        dm,
        dt: cfg.dt,
        plans: HashMap::new(),
    };
    let h = cfg.dt * cfg.output_every as f64;
    let nodes = (cfg.t_end / h - 1e-9).ceil().max(0.0) as usize;
    let h = if nodes > 0 { cfg.t_end / nodes as f64 } else { h };
    let quad = graded_rule(h);

    let alpha = ksb.alpha();
    let a1: Vec<f64> = grid.centers.iter().map(|&x| ksb.absorption.eval(x)).collect();
    let integrand = |f: &[f64]| -> Vec<f64> {
        let mut out = match &ct {
            Some(ct) => apply_coag(&DensityField::from_values(grid.clone(), f.to_vec()), ct).values,
            None => vec![0.0; n],
        };
        let _ = alpha;
        for i in 0..n {
            out[i] += a1[i] * f[i];
        }
        out
    };

    // free evolution S(t_k) f0
    let mut free = vec![f0.values.clone()];
    for _ in 0..nodes {
        let next = prop.apply(free.last().unwrap(), h)?;
        free.push(next);
    }
    let w = WeightSpec::shifted(m);
    let norm = |v: &[f64]| weighted_norm_values(&grid, v, w);
    let mut iterate = free.clone();
    let mut diffs: Vec<Vec<f64>> = Vec::new();
    let mut converged = ks.k.is_zero();
    let mut iterations = if converged { 1 } else { 0 };
    while !converged && iterations < cfg.picard_max_iter {
        let g: Vec<Vec<f64>> = iterate.iter().map(|f| integrand(f)).collect();
        let mut next = vec![free[0].clone()];
        let mut acc = vec![0.0; n];
        for k in 0..nodes {
            let mut inc = prop.apply(&acc, h)?;
            for &(sigma, wt) in &quad {
                let th = sigma / h;
                let mix: Vec<f64> = (0..n).map(|i| th * g[k][i] + (1.0 - th) * g[k + 1][i]).collect();
                let s = prop.apply(&mix, sigma)?;
                for i in 0..n {
                    inc[i] += wt * s[i];
                }
            }
            acc = inc;
            let f: Vec<f64> = (0..n).map(|i| free[k + 1][i] + acc[i]).collect();
            check_finite(&f, (k + 1) as f64 * h)?;
            next.push(f);
        }
        let d: Vec<f64> = next
            .iter()
            .zip(&iterate)
            .map(|(a, b)| norm(&a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>()))
            .collect();
        iterations += 1;
        let sup = d.iter().cloned().fold(0.0, f64::max);
        let scale = next.iter().map(|v| norm(v)).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        iterate = next;
        diffs.push(d);
        if sup <= cfg.picard_tol * scale {
            converged = true;
        }
    }

    let mut diag = StepDiagnostics {
        picard_iterations: iterations,
        max_beta: ksb.beta(),
        ..Default::default()
    };
    // contraction factor over the whole horizon and the longest prefix on
    // which every successive ratio stayed below one
    let mut factor: f64 = 0.0;
    let mut window = cfg.t_end;
    for pair in diffs.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        let sa = a.iter().cloned().fold(0.0, f64::max);
        let sb = b.iter().cloned().fold(0.0, f64::max);
        if sa > 0.0 && sb > 1e-300 {
            factor = factor.max(sb / sa);
        }
        let mut run_a: f64 = 0.0;
        let mut run_b: f64 = 0.0;
        for k in 0..a.len() {
            run_a = run_a.max(a[k]);
            run_b = run_b.max(b[k]);
            if run_b > run_a && run_b > 1e-300 {
                window = window.min(k as f64 * h);
                break;
            }
        }
    }
    diag.contraction_factor = factor;
    diag.contraction_window = window;
    if !converged {
        return Err(Error::Numerical {
            t: cfg.t_end,
            detail: format!(
                "Picard iteration did not contract within {} iterations (factor {factor:.3e})",
                cfg.picard_max_iter
            ),
        });
    }

    let mut traj = Trajectory::empty(m);
    for (k, v) in iterate.into_iter().enumerate() {
        let f = DensityField::from_values(grid.clone(), v);
        traj.push(&f, k as f64 * h, (f64::NAN, f64::NAN), f64::NAN);
    }
    traj.diagnostics = diag;
    Ok(traj)
}

// ---------------------------------------------------------------- probe

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSpec {
    pub m: f64,
    pub n: f64,
    pub p: f64,
    pub eta: f64,
    pub t_min: f64,
    pub t_max: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeRun {
    pub cells: usize,
    pub xmax: f64,
    pub norms: Vec<f64>,
    pub products: Vec<f64>,
    pub theta_hat: f64,
    pub sup_product: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeReport {
    pub times: Vec<f64>,
    pub exponent: f64,
    pub base: ProbeRun,
    pub refined: ProbeRun,
    /// relative change of the supremum under grid and `xmax` doubling
    pub variation: f64,
    /// growth factor of `||f0||_[0,m]` over the doubling sequence
    pub membership_growth: f64,
    pub pass: bool,
}

fn probe_profile(spec: &ProbeSpec) -> impl Fn(f64) -> f64 {
    let e = spec.p + 1.0 + spec.eta;
    move |x: f64| (1.0 + x).powf(-e)
}

/// Membership of the probe datum: `||f0||_[0,m]` must keep growing under
/// repeated doubling of `xmax` (at least tenfold within four doublings) while
/// the increments of `||f0||_[0,p]` shrink.
pub fn probe_membership(spec: &ProbeSpec, grid: &SizeGrid) -> Result<f64> {
    let f = probe_profile(spec);
    let norm = |order: f64, xmax: f64| -> Result<f64> {
        crate::quadrature::integrate(
            |s: f64| {
                let x = s.exp();
                f(x) * (1.0 + x.powf(order)) * x
            },
            grid.xmin.ln(),
            xmax.ln(),
        )
    };
    let mut nm = vec![norm(spec.m, grid.xmax)?];
    let mut np = vec![norm(spec.p, grid.xmax)?];
    for k in 1..=4 {
        let x = grid.xmax * 2f64.powi(k);
        nm.push(norm(spec.m, x)?);
        np.push(norm(spec.p, x)?);
    }
    let growth = nm[4] / nm[0];
    let inc = |v: &[f64], k: usize| v[k + 1] - v[k];
    let p_shrinks = (0..3).all(|k| inc(&np, k + 1) < inc(&np, k));
    let m_grows = (0..3).all(|k| inc(&nm, k + 1) > inc(&nm, k));
    if !(growth >= 10.0 && p_shrinks && m_grows) {
        return Err(Error::ProbeSetup(format!(
            "initial profile fails the membership test: ||f0||_[0,m] grows {growth:.3}x over four xmax doublings \
             (need >= 10), p-increments shrinking: {p_shrinks}, m-increments growing: {m_grows}"
        )));
    }
    Ok(growth)
}

fn probe_times(spec: &ProbeSpec, dt: f64) -> Vec<f64> {
    let mut ts: Vec<f64> = crate::kernels::geomspace(spec.t_min, spec.t_max, spec.points)
        .into_iter()
        .map(|t| (t / dt).round().max(1.0) * dt)
        .collect();
    ts.dedup();
    ts
}

fn probe_run(ks: &KernelSet, grid: &Arc<SizeGrid>, spec: &ProbeSpec, dt: f64, times: &[f64]) -> Result<ProbeRun> {
    let ks = ks.with_beta(0.0);
    let cfg = SolverConfig {
        dt,
        t_end: *times.last().unwrap(),
        m: spec.m,
        cfl_safety: f64::INFINITY,
        ..SolverConfig::default()
    };
    let mut st = Stepper::new(&ks, grid, &cfg)?;
    let mut f = project(probe_profile(spec), grid)?;
    let mut norms = Vec::with_capacity(times.len());
    let mut step = 0usize;
    for &t in times {
        let target = (t / dt).round() as usize;
        while step < target {
            f = st.step(&f, step as f64 * dt)?;
            step += 1;
        }
        norms.push(f.norm0m(spec.m));
    }
    let k = times.len();
    let theta_hat = if k >= 3 {
        ((norms[k - 1].ln() - norms[k - 3].ln()) / (times[k - 1] - times[k - 3])).max(0.0)
    } else {
        0.0
    };
    let exponent = (spec.m - spec.n) / ks.a.gamma0;
    let products: Vec<f64> = times
        .iter()
        .zip(&norms)
        .map(|(&t, &nv)| t.powf(exponent) * (-theta_hat * t).exp() * nv)
        .collect();
    let sup_product = products.iter().cloned().fold(0.0, f64::max);
    Ok(ProbeRun {
        cells: grid.len(),
        xmax: grid.xmax,
        norms,
        products,
        theta_hat,
        sup_product,
    })
}

/// Empirical check of the smoothing estimate
/// `||S(t) f||_[0,m] <= C e^{theta t} t^{(n-m)/gamma0} ||f||_[0,p]`.
pub fn regularization_probe(ks: &KernelSet, grid: &Arc<SizeGrid>, spec: &ProbeSpec, dt: f64) -> Result<ProbeReport> {
    if !ks.k.is_zero() {
        return Err(Error::ProbeSetup("the probe evolves the linear part only; set k = 0".into()));
    }
    let floor = 1f64.max(ks.b.l);
    if !(floor < spec.n && spec.n < spec.p && spec.p <= spec.m) {
        return Err(Error::ProbeSetup(format!(
            "orders must satisfy max(1,l) = {floor} < n = {} < p = {} <= m = {}",
            spec.n, spec.p, spec.m
        )));
    }
    let membership_growth = if spec.m > spec.p + spec.eta {
        probe_membership(spec, grid)?
    } else {
        1.0
    };
    let times = probe_times(spec, dt);
    let base = probe_run(ks, grid, spec, dt, &times)?;
    let fine = Arc::new(SizeGrid::new(grid.spacing, grid.xmin, 2.0 * grid.xmax, 2 * grid.len())?);
    let refined = probe_run(ks, &fine, spec, dt, &times)?;
    let variation = (refined.sup_product - base.sup_product).abs() / base.sup_product.max(f64::MIN_POSITIVE);
    let pass = base.sup_product.is_finite() && variation < 0.25;
    Ok(ProbeReport {
        times,
        exponent: (spec.m - spec.n) / ks.a.gamma0,
        base,
        refined,
        variation,
        membership_growth,
        pass,
    })
}

// ---------------------------------------------------------------- residual

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    pub times: Vec<f64>,
    /// `||residual||_[0,p]` at each interior output time
    pub norms: Vec<f64>,
    pub max_norm: f64,
    /// the same normalized by `||d f/dt||_[0,p] + ||rhs||_[0,p]`
    pub max_relative: f64,
}

/// Right-hand side `-(r f)' - a f + gain + K f` at cell centers, with a
/// three-point nonuniform derivative and zero at the two end cells.
pub fn rhs(f: &DensityField, ks: &KernelSet, dm: &DaughterMatrix, ct: Option<&CoagTables>) -> Vec<f64> {
    let g = &f.grid;
    let n = g.len();
    let x = &g.centers;
    let mut out = apply_frag(f, ks, dm).values;
    if let Some(ct) = ct {
        let k = apply_coag(f, ct);
        for i in 0..n {
            out[i] += k.values[i];
        }
    }
    if !ks.r.is_none() {
        let rf: Vec<f64> = (0..n).map(|i| ks.r.eval(x[i]) * f.values[i]).collect();
        out[0] = 0.0;
        out[n - 1] = 0.0;
        for i in 1..n - 1 {
            let h1 = x[i] - x[i - 1];
            let h2 = x[i + 1] - x[i];
            let d = -h2 / (h1 * (h1 + h2)) * rf[i - 1] + (h2 - h1) / (h1 * h2) * rf[i] + h1 / (h2 * (h1 + h2)) * rf[i + 1];
            out[i] -= d;
        }
    }
    out
}

pub fn pde_residual(traj: &Trajectory, ks: &KernelSet, dm: &DaughterMatrix, ct: Option<&CoagTables>, p: f64) -> ResidualReport {
    let w = WeightSpec::shifted(p);
    let mut times = Vec::new();
    let mut norms = Vec::new();
    let mut max_relative: f64 = 0.0;
    for k in 1..traj.snapshots.len().saturating_sub(1) {
        let (a, b, c) = (&traj.snapshots[k - 1], &traj.snapshots[k], &traj.snapshots[k + 1]);
        let dt = traj.times[k + 1] - traj.times[k - 1];
        let g = &b.grid;
        let r = rhs(b, ks, dm, ct);
        let n = g.len();
        let lo = if ks.r.is_none() { 0 } else { 1 };
        let hi = if ks.r.is_none() { n } else { n - 1 };
        let mut res = vec![0.0; n];
        let mut dfdt = vec![0.0; n];
        for i in lo..hi {
            dfdt[i] = (c.values[i] - a.values[i]) / dt;
            res[i] = dfdt[i] - r[i];
        }
        let nr = weighted_norm_values(g, &res, w);
        let scale = weighted_norm_values(g, &dfdt, w) + weighted_norm_values(g, &r, w);
        if scale > 0.0 {
            max_relative = max_relative.max(nr / scale);
        }
        times.push(traj.times[k]);
        norms.push(nr);
    }
    let max_norm = norms.iter().cloned().fold(0.0, f64::max);
    ResidualReport {
        times,
        norms,
        max_norm,
        max_relative,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{CoagulationKernel, DaughterDistribution, FragmentationRate, GrowthRate};
    use crate::transport::transport_apply;

    fn ks(a: FragmentationRate, r: GrowthRate, k: CoagulationKernel) -> KernelSet {
        KernelSet::new(a, DaughterDistribution::uniform_binary(), r, k, 1.0)
    }

    #[test]
    fn pure_translation_matches_transport() {
        let g = Arc::new(SizeGrid::uniform(0.0, 8.0, 400).unwrap());
        let k = ks(FragmentationRate::zero(1.0), GrowthRate::constant(1.0), CoagulationKernel::zero(0.5));
        let f = project(|x| if (1.0..=2.0).contains(&x) { 1.0 } else { 0.0 }, &g).unwrap();
        // two cells per step, so both half steps of the symmetric scheme are whole shifts
        for scheme in [Scheme::LieSplit, Scheme::StrangSplit] {
            let cfg = SolverConfig { dt: 0.04, scheme, cfl_safety: 4.0, ..Default::default() };
            let a = step_split(&f, 0.04, &k, &cfg).unwrap();
            let b = transport_apply(&f, 0.04, &k).unwrap();
            for (x, y) in a.values.iter().zip(&b.values) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_initial_condition() {
        let g = Arc::new(SizeGrid::geometric(1e-3, 50.0, 64).unwrap());
        let k = ks(FragmentationRate::power_law(1.0, 1.0), GrowthRate::linear(0.5), CoagulationKernel::sum_power(0.5, 0.5));
        let cfg = SolverConfig { t_end: 0.1, ..Default::default() };
        let tr = solve(&DensityField::zeros(g), &cfg, &k).unwrap();
        assert!(tr.snapshots.iter().all(|s| s.values.iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn riccati_coagulation() {
        let g = Arc::new(SizeGrid::geometric(1e-4, 200.0, 256).unwrap());
        let k = ks(FragmentationRate::zero(1.0), GrowthRate::none(), CoagulationKernel::constant(2.0, 0.5));
        let f0 = project(|x| (-x).exp(), &g).unwrap();
        let m00 = f0.moment(0.0);
        let cfg = SolverConfig { dt: 1e-3, t_end: 1.0, output_every: 100, ..Default::default() };
        let tr = solve(&f0, &cfg, &k).unwrap();
        let last = tr.observables.last().unwrap();
        let oracle = m00 / (1.0 + m00);
        assert!((last.m0 - oracle).abs() < 0.01 * oracle, "{} vs {oracle}", last.m0);
        let mass = last.m1 + last.escaped_mass;
        assert!((mass - f0.moment(1.0)).abs() < 1e-10 * f0.moment(1.0));
        assert!(tr.min_density() >= 0.0);
    }

    #[test]
    fn aizenman_bak_oracle_and_mass() {
        let g = Arc::new(SizeGrid::geometric(1e-4, 60.0, 512).unwrap());
        let k = ks(FragmentationRate::power_law(1.0, 1.0), GrowthRate::none(), CoagulationKernel::zero(0.5));
        let f0 = project(|x| (-x).exp(), &g).unwrap();
        let cfg = SolverConfig { dt: 1e-3, t_end: 1.0, output_every: 100, ..Default::default() };
        let tr = solve(&f0, &cfg, &k).unwrap();
        let f1 = tr.snapshots.last().unwrap();
        let exact = project(|x| 4.0 * (-2.0 * x).exp(), &g).unwrap();
        let diff: Vec<f64> = (0..g.len())
            .map(|i| if g.centers[i] <= 20.0 { f1.values[i] - exact.values[i] } else { 0.0 })
            .collect();
        let rel = weighted_norm_values(&g, &diff, WeightSpec::shifted(1.0)) / exact.norm0m(1.0);
        assert!(rel < 0.02, "{rel}");
        for o in &tr.observables {
            assert!((o.m1 - f0.moment(1.0)).abs() < 1e-8 * f0.moment(1.0));
        }
    }

    #[test]
    fn linear_growth_envelope() {
        let g = Arc::new(SizeGrid::geometric(1e-3, 100.0, 256).unwrap());
        let k = ks(FragmentationRate::power_law(1.0, 1.5), GrowthRate::linear(0.5), CoagulationKernel::sum_power(0.5, 0.5));
        let f0 = project(|x| 0.2 * (-x).exp(), &g).unwrap();
        let cfg = SolverConfig { dt: 1e-3, t_end: 0.5, output_every: 50, m: 2.5, ..Default::default() };
        let tr = solve(&f0, &cfg, &k).unwrap();
        for o in &tr.observables {
            assert!(o.m1 <= f0.moment(1.0) * (0.5 * o.t).exp() * (1.0 + 1e-9));
            assert!(o.min_density >= 0.0);
        }
    }

    #[test]
    fn negative_control_undershoots() {
        let g = Arc::new(SizeGrid::geometric(1e-3, 20.0, 64).unwrap());
        let k = ks(FragmentationRate::zero(1.0), GrowthRate::none(), CoagulationKernel::constant(50.0, 0.5));
        let f0 = project(|x| (-x).exp(), &g).unwrap();
        let off = SolverConfig { dt: 0.05, t_end: 0.2, positivity: PositivityPolicy::None, output_every: 1, ..Default::default() };
        assert!(solve(&f0, &off, &k).unwrap().min_density() < 0.0);
        let on = SolverConfig { positivity: PositivityPolicy::BetaShift, ..off };
        assert!(solve(&f0, &on, &k).unwrap().min_density() >= 0.0);
    }

    #[test]
    fn duhamel_linear_one_iteration() {
        let g = Arc::new(SizeGrid::geometric(1e-3, 50.0, 64).unwrap());
        let k = ks(FragmentationRate::power_law(1.0, 1.5), GrowthRate::linear(0.5), CoagulationKernel::zero(0.5));
        let f0 = project(|x| 0.2 * (-x).exp(), &g).unwrap();
        let cfg = SolverConfig { dt: 1e-2, t_end: 0.2, m: 2.5, n: Some(1.5), p: Some(2.0), output_every: 2, ..Default::default() };
        let tr = duhamel_solve(&f0, &cfg, &k).unwrap();
        assert_eq!(tr.diagnostics.picard_iterations, 1);
    }

    #[test]
    fn duhamel_rejects_bad_orders() {
        let g = Arc::new(SizeGrid::geometric(1e-3, 50.0, 16).unwrap());
        let k = ks(FragmentationRate::power_law(1.0, 1.0), GrowthRate::none(), CoagulationKernel::constant(1.0, 0.5));
        let f0 = DensityField::zeros(g);
        let cfg = SolverConfig { scheme: Scheme::Duhamel, m: 3.5, n: Some(1.5), p: Some(2.0), ..Default::default() };
        assert!(matches!(duhamel_solve(&f0, &cfg, &k), Err(Error::Config(_))));
    }

    #[test]
    fn residual_of_zero_state() {
        let g = Arc::new(SizeGrid::geometric(1e-3, 50.0, 32).unwrap());
        let k = ks(FragmentationRate::power_law(1.0, 1.0), GrowthRate::none(), CoagulationKernel::zero(0.5));
        let cfg = SolverConfig { t_end: 0.05, ..Default::default() };
        let tr = solve(&DensityField::zeros(g.clone()), &cfg, &k).unwrap();
        let dm = crate::fragmentation::build_daughter_matrix(&k.b, &g).unwrap();
        assert_eq!(pde_residual(&tr, &k, &dm, None, 1.5).max_norm, 0.0);
    }
}
