//! A priori moment bounds and the global-existence conditions.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use crate::evolution::Trajectory;
use crate::fragmentation::{frag_constants, DaughterMatrix};
use crate::kernels::{geomspace, KernelSet};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionReport {
    /// `(n0 - 1) a <= m0 + m1 x` at every sample.
    pub cond_i: bool,
    pub m0: f64,
    pub m1: f64,
    /// Largest sampled excess of `(n0 - 1) a` over the fitted majorant.
    pub cond_i_excess: f64,
    /// `r <= rtilde x`.
    pub cond_ii: bool,
    pub r_over_x_sup: f64,
    pub samples: usize,
}

impl ConditionReport {
    pub fn any(&self) -> bool {
        self.cond_i || self.cond_ii
    }
}

pub fn global_conditions(ks: &KernelSet, xlo: f64, xmax: f64) -> ConditionReport {
    let n0 = ks.b.moment_ratio(0.0).unwrap_or(f64::INFINITY);
    let g = |x: f64| (n0 - 1.0) * ks.a.eval(x);
    let fit_xs = geomspace(xlo, xmax, 200);
    let mut xs = fit_xs.clone();
    xs.extend(geomspace(xmax, 10.0 * xmax, 100).into_iter().skip(1));

    // least squares on the fit range, then shifted up to majorize it
    let n = fit_xs.len() as f64;
    let (sx, sy) = fit_xs.iter().fold((0.0, 0.0), |(a, b), &x| (a + x, b + g(x)));
    let (mx, my) = (sx / n, sy / n);
    let (sxy, sxx) = fit_xs
        .iter()
        .fold((0.0, 0.0), |(a, b), &x| (a + (x - mx) * (g(x) - my), b + (x - mx) * (x - mx)));
    let m1 = if sxx > 0.0 { (sxy / sxx).max(0.0) } else { 0.0 };
    let mut m0 = my - m1 * mx;
    let shift = fit_xs.iter().map(|&x| g(x) - (m0 + m1 * x)).fold(f64::NEG_INFINITY, f64::max);
    m0 += shift.max(0.0);
    if (m0 - 0.0).abs() < 1e-12 * (1.0 + m1) {
        m0 = 0.0;
    }
    let excess = xs
        .iter()
        .map(|&x| {
            let v = g(x);
            (v - (m0 + m1 * x)) / (1.0 + v.abs())
        })
        .fold(f64::NEG_INFINITY, f64::max);
    let cond_i = excess.is_finite() && excess <= 1e-9;

    let r_over_x_sup = xs.iter().map(|&x| ks.r.eval(x) / x).fold(0.0, f64::max);
    ConditionReport {
        cond_i,
        m0,
        m1,
        cond_i_excess: excess,
        cond_ii: ks.r.r0 == 0.0,
        r_over_x_sup,
        samples: xs.len(),
    }
}

/// Smallest `C` with `(x+y)^i - x^i - y^i <= C (x y^(i-1) + x^(i-1) y)`.
pub fn binary_constant(i: u32) -> f64 {
    static CACHE: OnceLock<Mutex<HashMap<u32, f64>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(c) = cache.lock().map(|c| c.get(&i).copied()).ok().flatten() {
        return c;
    }
    let p = i as f64;
    let mut c = 0.0f64;
    if i >= 2 {
        let n = 20_000;
        for k in 1..n {
            let t = k as f64 / n as f64;
            let s = 1.0 - t;
            let num = 1.0 - t.powf(p) - s.powf(p);
            let den = t * s.powf(p - 1.0) + t.powf(p - 1.0) * s;
            c = c.max(num / den);
        }
    }
    if let Ok(mut m) = cache.lock() {
        m.insert(i, c);
    }
    c
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderConstants {
    pub i: u32,
    pub delta_prime: f64,
    pub delta: f64,
    pub nu: f64,
    pub c_i: f64,
    pub k_i: f64,
    pub eps: f64,
    pub d0: f64,
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentBoundParams {
    pub m: f64,
    pub conditions: ConditionReport,
    /// Logarithmic norm of the `(M0, M1)` system when (i) holds.
    pub mu: Option<f64>,
    /// Growth constant when (ii) holds.
    pub rtilde: Option<f64>,
    pub alpha: f64,
    pub gamma0: f64,
    pub c_alpha: f64,
    pub kappa: f64,
    pub m1max: f64,
    pub delta_scale: f64,
    pub orders: Vec<OrderConstants>,
    /// Order-2 constants with the halved dissipation of the Phi route.
    pub phi: Option<PhiConstants>,
    pub init: Vec<f64>,
    pub t_end: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiConstants {
    pub order: OrderConstants,
    pub a_tilde: f64,
    pub b0: f64,
    pub x0: f64,
}

/// Highest integer order needed to control `M_m`.
pub fn top_order(m: f64) -> u32 {
    if m.fract() == 0.0 {
        (m as u32).max(2)
    } else {
        (m.floor() as u32 + 1).max(2)
    }
}

impl MomentBoundParams {
    /// `init` holds `M_0(0), M_1(0), ..., M_top(0)`.
    pub fn new(
        ks: &KernelSet,
        conditions: ConditionReport,
        m: f64,
        init: &[f64],
        t_end: f64,
        dm: Option<&DaughterMatrix>,
    ) -> Result<Self> {
        Self::with_delta_scale(ks, conditions, m, init, t_end, dm, 1.0)
    }

    /// As `new` with every `delta_i` multiplied by `scale` inside the Young constraint.
    pub fn with_delta_scale(
        ks: &KernelSet,
        conditions: ConditionReport,
        m: f64,
        init: &[f64],
        t_end: f64,
        dm: Option<&DaughterMatrix>,
        scale: f64,
    ) -> Result<Self> {
        let top = top_order(m);
        if init.len() < top as usize + 1 {
            return Err(Error::ParameterDomain(format!(
                "need initial moments up to order {top}, got {}",
                init.len()
            )));
        }
        let alpha = ks.alpha();
        let gamma0 = ks.a.gamma0;
        let k0 = ks.k.k0;
        if k0 > 0.0 && alpha >= gamma0 {
            return Err(Error::InfeasibleParams(format!(
                "alpha = {alpha} must be below gamma0 = {gamma0}"
            )));
        }
        let mu = conditions.cond_i.then(|| {
            let (r0, r1) = (ks.r.r0, ks.r.r1);
            (conditions.m0 + conditions.m1.abs()).max(r1 + r0.abs())
        });
        let rtilde = conditions.cond_ii.then(|| ks.r.rtilde());
        let mut params = Self {
            m,
            conditions,
            mu,
            rtilde,
            alpha,
            gamma0,
            c_alpha: 1.0,
            kappa: if k0 > 0.0 { (2.0 * gamma0 - alpha) / (gamma0 - alpha) } else { 1.0 },
            m1max: 0.0,
            delta_scale: scale,
            orders: Vec::new(),
            phi: None,
            init: init.to_vec(),
            t_end,
        };
        if !params.conditions.any() {
            return Ok(params);
        }
        params.m1max = params.m1_envelope(0.0).max(params.m1_envelope(t_end));
        let growth = ks.r.rtilde();
        for i in 2..=top {
            let fc = frag_constants(ks, i as f64, dm)?;
            let oc = params.assemble(i, fc.delta_prime, fc.delta, fc.nu, k0, growth, scale)?;
            params.orders.push(oc);
        }
        if params.rtilde.is_some() {
            let first = params.orders[0];
            if first.delta_prime > 0.0 {
                let half = params.assemble(2, first.delta_prime, first.delta, first.nu, k0, growth, 0.5 * scale)?;
                let x0 = ks.a.x0;
                let a_tilde = 2.0
                    * ks.b.b0
                    * (0..=256)
                        .map(|j| {
                            let x = x0 * j as f64 / 256.0;
                            ks.a.eval(x) * (1.0 + x * x)
                        })
                        .fold(0.0, f64::max);
                params.phi = Some(PhiConstants {
                    order: half,
                    a_tilde,
                    b0: ks.b.b0,
                    x0,
                });
            }
        }
        Ok(params)
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        &self,
        i: u32,
        delta_prime: f64,
        delta: f64,
        nu: f64,
        k0: f64,
        growth: f64,
        scale: f64,
    ) -> Result<OrderConstants> {
        let c_i = binary_constant(i);
        let k_i = c_i * k0;
        let (a, g) = (self.alpha, self.gamma0);
        let budget = scale * delta;
        let (eps, y) = if k_i > 0.0 {
            if budget <= 0.0 {
                return Err(Error::InfeasibleParams(format!(
                    "order {i}: no dissipation (delta = {delta}) to absorb coagulation"
                )));
            }
            let eps = 0.9 * (budget * g / (a * k_i * (self.m1max + 1.0))).powf(a / g);
            (eps, (g - a) / g * eps.powf(-g / (g - a)))
        } else {
            (1.0, 0.0)
        };
        let ca = self.c_alpha;
        let p = i as f64;
        let mm = self.m1max;
        let oc = OrderConstants {
            i,
            delta_prime,
            delta,
            nu,
            c_i,
            k_i,
            eps,
            d0: k_i * ca * mm * mm,
            d1: nu + p * growth,
            d2: p * growth + k_i * (mm + y * mm + ca * mm),
            d3: k_i * y,
        };
        if ![oc.d0, oc.d1, oc.d2, oc.d3].iter().all(|d| d.is_finite() && *d >= 0.0) {
            return Err(Error::InfeasibleParams(format!("order {i}: constants {oc:?}")));
        }
        Ok(oc)
    }

    pub fn certified(&self) -> bool {
        self.conditions.any()
    }

    fn case_i_envelope(&self, t: f64) -> Option<f64> {
        self.mu.map(|mu| self.init[0].max(self.init[1]) * (mu * t).exp())
    }

    pub fn m1_envelope(&self, t: f64) -> f64 {
        let a = self.case_i_envelope(t).unwrap_or(f64::INFINITY);
        let b = self.rtilde.map_or(f64::INFINITY, |r| self.init[1] * (r * t).exp());
        a.min(b)
    }

    /// Right-hand side of the order-`i` bound at the given moments.
    pub fn order_rhs(&self, oc: &OrderConstants, m_prev: f64, m_i: f64) -> f64 {
        oc.d0 + oc.d1 * m_i + oc.d2 * m_prev + oc.d3 * m_prev.max(0.0).powf(self.kappa)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BoundOutcome {
    Bounds(BoundTrajectory),
    Refused(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundTrajectory {
    pub times: Vec<f64>,
    pub m0: Option<Vec<f64>>,
    pub m1: Vec<f64>,
    /// `(i, bound_i(t))` for `i = 2, 3, ...`
    pub orders: Vec<(u32, Vec<f64>)>,
    pub mm: Vec<f64>,
    /// Gronwall envelope of `Phi(t)`.
    pub phi: Option<Vec<f64>>,
    pub m: f64,
}

fn interp(times: &[f64], v: &[f64], t: f64) -> f64 {
    let n = times.len();
    if n == 1 || t <= times[0] {
        return v[0];
    }
    if t >= times[n - 1] {
        return v[n - 1];
    }
    let k = times.partition_point(|s| *s <= t).min(n - 1);
    let (t0, t1) = (times[k - 1], times[k]);
    let w = (t - t0) / (t1 - t0);
    v[k - 1] * (1.0 - w) + v[k] * w
}

impl BoundTrajectory {
    pub fn order(&self, i: u32) -> Option<&[f64]> {
        self.orders.iter().find(|(j, _)| *j == i).map(|(_, v)| v.as_slice())
    }

    /// Bound for `M_i` at time `t` (linear between steps).
    pub fn at(&self, name: &str, t: f64) -> Option<f64> {
        let v = match name {
            "M0" => self.m0.as_deref()?,
            "M1" => &self.m1,
            "Mm" => &self.mm,
            "Phi" => self.phi.as_deref()?,
            _ => self.order(name.strip_prefix('M')?.parse().ok()?)?,
        };
        Some(interp(&self.times, v, t))
    }
}

pub fn bound_system(params: &MomentBoundParams, dt: f64) -> Result<BoundOutcome> {
    if !params.certified() {
        return Ok(BoundOutcome::Refused(
            "neither global condition holds; no bounds assembled".into(),
        ));
    }
    if !(dt > 0.0) {
        return Err(Error::ParameterDomain(format!("dt must be positive, got {dt}")));
    }
    let steps = ((params.t_end / dt).round() as usize).max(1);
    let h = params.t_end / steps as f64;
    let no = params.orders.len();
    let phi = params.phi;

    // state: B_2 .. B_top, then the Phi source integral
    let rhs = |t: f64, y: &[f64]| -> Vec<f64> {
        let mut d = vec![0.0; y.len()];
        let b1 = params.m1_envelope(t);
        for (k, oc) in params.orders.iter().enumerate() {
            let prev = if k == 0 { b1 } else { y[k - 1] };
            d[k] = params.order_rhs(oc, prev, y[k]);
        }
        if let Some(p) = phi {
            let oc = p.order;
            let theta = oc.d2 * b1 + oc.d3 * b1.powf(params.kappa);
            d[no] = theta * (-oc.d1 * t).exp();
        }
        d
    };
    let mut y: Vec<f64> = params.init[2..2 + no].to_vec();
    if phi.is_some() {
        y.push(0.0);
    }
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    times.push(0.0);
    states.push(y.clone());
    for s in 0..steps {
        let t = s as f64 * h;
        let k1 = rhs(t, &y);
        let y2: Vec<f64> = y.iter().zip(&k1).map(|(a, b)| a + 0.5 * h * b).collect();
        let k2 = rhs(t + 0.5 * h, &y2);
        let y3: Vec<f64> = y.iter().zip(&k2).map(|(a, b)| a + 0.5 * h * b).collect();
        let k3 = rhs(t + 0.5 * h, &y3);
        let y4: Vec<f64> = y.iter().zip(&k3).map(|(a, b)| a + h * b).collect();
        let k4 = rhs(t + h, &y4);
        for j in 0..y.len() {
            y[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::Numerical {
                t: t + h,
                detail: "moment bound cascade overflowed".into(),
            });
        }
        times.push(if s + 1 == steps { params.t_end } else { t + h });
        states.push(y.clone());
    }

    let m1: Vec<f64> = times.iter().map(|&t| params.m1_envelope(t)).collect();
    let orders: Vec<(u32, Vec<f64>)> = params
        .orders
        .iter()
        .enumerate()
        .map(|(k, oc)| (oc.i, states.iter().map(|s| s[k]).collect()))
        .collect();
    let phi_env: Option<Vec<f64>> = phi.map(|p| {
        let oc = p.order;
        times
            .iter()
            .zip(&states)
            .map(|(&t, s)| {
                let forcing = if oc.d1 > 0.0 {
                    oc.d0 / oc.d1 * (1.0 - (-oc.d1 * t).exp())
                } else {
                    oc.d0 * t
                };
                (oc.d1 * t).exp() * (params.init[2] + forcing + s[no])
            })
            .collect()
    });
    let m0_ii: Option<Vec<f64>> = match (phi, &phi_env) {
        (Some(p), Some(env)) => {
            let x0 = p.x0;
            let lift = (1.0 + x0.powi(-2)) * 2.0 / p.order.delta_prime;
            Some(
                times
                    .iter()
                    .zip(env)
                    .map(|(&t, e)| (p.a_tilde * t).exp() * (params.init[0] + 2.0 * p.b0 * lift * e))
                    .collect(),
            )
        }
        _ => None,
    };
    let m0_i: Option<Vec<f64>> = params
        .mu
        .map(|_| times.iter().map(|&t| params.case_i_envelope(t).unwrap_or(f64::INFINITY)).collect());
    let m0 = match (m0_i, m0_ii) {
        (Some(a), Some(b)) => Some(a.iter().zip(&b).map(|(x, y)| x.min(*y)).collect()),
        (a, b) => a.or(b),
    };
    let m = params.m;
    let mm: Vec<f64> = if m.fract() == 0.0 {
        match m as u32 {
            0 => m0.clone().unwrap_or_else(|| vec![f64::INFINITY; times.len()]),
            1 => m1.clone(),
            k => orders.iter().find(|(j, _)| *j == k).map(|(_, v)| v.clone()).unwrap_or_default(),
        }
    } else {
        let hi = m.floor() as u32 + 1;
        let top = &orders.iter().find(|(j, _)| *j == hi.max(2)).expect("top order tracked").1;
        m1.iter().zip(top).map(|(a, b)| a + b).collect()
    };
    Ok(BoundOutcome::Bounds(BoundTrajectory {
        times,
        m0,
        m1,
        orders,
        mm,
        phi: phi_env,
        m,
    }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DominationEntry {
    pub name: String,
    pub worst_ratio: f64,
    pub worst_t: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DominationReport {
    pub tol: f64,
    pub entries: Vec<DominationEntry>,
}

impl DominationReport {
    pub fn pass(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }

    pub fn get(&self, name: &str) -> Option<&DominationEntry> {
        self.entries.iter().find(|e| e.name == name)
    }
}

/// Checks `M(t) <= bound(t) (1 + tol)` at every output time. `phi_delta_prime`
/// is `delta'_2` for the measured `Phi`; it is taken from the bounds' own constants.
pub fn check_domination(
    traj: &Trajectory,
    bounds: &BoundTrajectory,
    params: &MomentBoundParams,
    tol: f64,
) -> DominationReport {
    let mut names: Vec<String> = vec!["M1".into()];
    if bounds.m0.is_some() {
        names.insert(0, "M0".into());
    }
    for (i, _) in &bounds.orders {
        names.push(format!("M{i}"));
    }
    names.push("Mm".into());
    if bounds.phi.is_some() {
        names.push("Phi".into());
    }
    let dp = params.phi.map(|p| p.order.delta_prime).unwrap_or(0.0);
    let entries = names
        .into_iter()
        .map(|name| {
            let mut worst = (f64::NEG_INFINITY, 0.0);
            for ((&t, obs), snap) in traj.times.iter().zip(&traj.observables).zip(&traj.snapshots) {
                let measured = match name.as_str() {
                    "M0" => obs.m0,
                    "M1" => obs.m1,
                    "M2" => obs.m2,
                    "Mm" => obs.mm,
                    "Phi" => obs.m2 + 0.5 * dp * obs.dissipation2,
                    other => snap.moment(other[1..].parse::<f64>().unwrap_or(f64::NAN)),
                };
                let b = bounds.at(&name, t).unwrap_or(f64::INFINITY);
                let ratio = if b > 0.0 {
                    measured / b
                } else if measured <= 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                };
                if ratio > worst.0 || ratio.is_nan() {
                    worst = (ratio, t);
                }
            }
            DominationEntry {
                pass: worst.0 <= 1.0 + tol,
                name,
                worst_ratio: worst.0,
                worst_t: worst.1,
            }
        })
        .collect();
    DominationReport { tol, entries }
}

/// Largest normalized excess of the measured `dM_i/dt` over the bound right-hand
/// side at the measured moments, sampled by central differences.
pub fn comparison_excess(traj: &Trajectory, params: &MomentBoundParams) -> f64 {
    let n = traj.times.len();
    let mut worst = f64::NEG_INFINITY;
    for k in 1..n.saturating_sub(1) {
        let dt = traj.times[k + 1] - traj.times[k - 1];
        for (idx, oc) in params.orders.iter().enumerate() {
            let p = oc.i as f64;
            let mom = |j: usize, q: f64| traj.snapshots[j].moment(q);
            let measured = (mom(k + 1, p) - mom(k - 1, p)) / dt;
            let prev = if idx == 0 { traj.observables[k].m1 } else { mom(k, p - 1.0) };
            let rhs = params.order_rhs(oc, prev, mom(k, p));
            let scale = 1.0 + rhs.abs().max(measured.abs());
            worst = worst.max((measured - rhs) / scale);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{CoagulationKernel, DaughterDistribution, FragmentationRate, GrowthRate};

    fn ab() -> KernelSet {
        KernelSet::new(
            FragmentationRate::power_law(1.0, 1.0),
            DaughterDistribution::uniform_binary(),
            GrowthRate::none(),
            CoagulationKernel::zero(0.5),
            1.0,
        )
    }

    #[test]
    fn aizenman_bak_condition_i() {
        let c = global_conditions(&ab(), 1e-3, 50.0);
        assert!(c.cond_i);
        assert!(c.m0.abs() < 1e-9 && (c.m1 - 1.0).abs() < 1e-9, "{c:?}");
    }

    #[test]
    fn linear_growth_condition_ii() {
        let mut ks = ab();
        ks.r = GrowthRate::linear(0.7);
        assert!(global_conditions(&ks, 1e-3, 50.0).cond_ii);
    }

    #[test]
    fn neither_condition() {
        let ks = KernelSet::new(
            FragmentationRate::power_law(1.0, 2.0),
            DaughterDistribution::uniform_binary(),
            GrowthRate::affine(1.0, 1.0),
            CoagulationKernel::zero(0.5),
            1.0,
        );
        let c = global_conditions(&ks, 1e-3, 50.0);
        assert!(!c.cond_i && !c.cond_ii);
        let p = MomentBoundParams::new(&ks, c, 2.0, &[1.0, 1.0, 2.0], 1.0, None).unwrap();
        assert!(matches!(bound_system(&p, 1e-3).unwrap(), BoundOutcome::Refused(_)));
    }

    #[test]
    fn binary_constants() {
        assert!((binary_constant(2) - 1.0).abs() < 1e-12);
        assert!((binary_constant(3) - 3.0).abs() < 1e-9);
        assert!((binary_constant(4) - 7.0).abs() < 1e-6);
    }

    fn bounds_for(ks: &KernelSet, init: &[f64], m: f64, t_end: f64) -> BoundTrajectory {
        let c = global_conditions(ks, 1e-3, 50.0);
        let p = MomentBoundParams::new(ks, c, m, init, t_end, None).unwrap();
        match bound_system(&p, 1e-3).unwrap() {
            BoundOutcome::Bounds(b) => b,
            BoundOutcome::Refused(r) => panic!("{r}"),
        }
    }

    #[test]
    fn mass_envelope_under_linear_growth() {
        let mut ks = ab();
        ks.r = GrowthRate::linear(1.0);
        let b = bounds_for(&ks, &[1.0, 0.5, 1.0], 2.0, 1.0);
        let last = *b.m1.last().unwrap();
        assert!((last - 0.5 * std::f64::consts::E).abs() < 1e-12 * last);
    }

    #[test]
    fn pure_fragmentation_is_exponential() {
        let ks = ab();
        let fc = frag_constants(&ks, 2.0, None).unwrap();
        let b = bounds_for(&ks, &[1.0, 1.0, 2.0], 2.0, 1.0);
        let last = *b.order(2).unwrap().last().unwrap();
        let want = 2.0 * fc.nu.exp();
        assert!((last - want).abs() < 1e-10 * want, "{last} vs {want}");
    }

    #[test]
    fn zero_data_is_forcing_driven() {
        let mut ks = ab();
        ks.k = CoagulationKernel::sum_power(0.5, 0.5);
        ks.r = GrowthRate::linear(0.3);
        let c = global_conditions(&ks, 1e-3, 50.0);
        let p = MomentBoundParams::new(&ks, c, 2.0, &[0.0; 3], 1.0, None).unwrap();
        let BoundOutcome::Bounds(b) = bound_system(&p, 1e-3).unwrap() else { panic!() };
        let oc = p.orders[0];
        for (&t, v) in b.times.iter().zip(b.order(2).unwrap()) {
            let cap = oc.d0 / oc.d1 * ((oc.d1 * t).exp() - 1.0);
            assert!(*v <= cap * (1.0 + 1e-9) + 1e-300, "t = {t}");
        }
    }

    #[test]
    fn monotone_in_k0_and_delta() {
        let mut ks = ab();
        ks.r = GrowthRate::linear(0.3);
        ks.k = CoagulationKernel::sum_power(0.2, 0.5);
        let init = [1.0, 1.0, 2.0, 6.0];
        let c = global_conditions(&ks, 1e-3, 50.0);
        let base = MomentBoundParams::new(&ks, c.clone(), 2.5, &init, 1.0, None).unwrap();
        let stressed = MomentBoundParams::with_delta_scale(&ks, c.clone(), 2.5, &init, 1.0, None, 0.5).unwrap();
        let mut big = ks.clone();
        big.k = CoagulationKernel::sum_power(0.4, 0.5);
        let bigp = MomentBoundParams::new(&big, c, 2.5, &init, 1.0, None).unwrap();
        let get = |p: &MomentBoundParams| match bound_system(p, 1e-3).unwrap() {
            BoundOutcome::Bounds(b) => b,
            _ => panic!(),
        };
        let (b0, b1, b2) = (get(&base), get(&stressed), get(&bigp));
        for k in 0..b0.times.len() {
            for i in [2u32, 3] {
                let v = b0.order(i).unwrap()[k];
                assert!(b1.order(i).unwrap()[k] >= v);
                assert!(b2.order(i).unwrap()[k] >= v);
            }
            assert!(b1.mm[k] >= b0.mm[k]);
        }
    }

    #[test]
    fn case_ii_mass_bound_ignores_other_moments() {
        let mut ks = ab();
        ks.r = GrowthRate::linear(0.4);
        let a = bounds_for(&ks, &[1.0, 1.0, 2.0], 2.0, 1.0);
        let b = bounds_for(&ks, &[9.0, 1.0, 50.0], 2.0, 1.0);
        assert_eq!(a.m1, b.m1);
    }

    #[test]
    fn coagulation_without_fragmentation_is_infeasible() {
        let ks = KernelSet::new(
            FragmentationRate::zero(1.0),
            DaughterDistribution::uniform_binary(),
            GrowthRate::linear(0.5),
            CoagulationKernel::constant(1.0, 0.5),
            1.0,
        );
        let c = global_conditions(&ks, 1e-3, 50.0);
        let r = MomentBoundParams::new(&ks, c, 2.0, &[1.0, 1.0, 2.0], 1.0, None);
        assert!(matches!(r, Err(Error::InfeasibleParams(_))));
    }
}
