//! Transport-absorption generator `-(r f)' - q f` with `q = a + a1`:
//! characteristics, the exact semigroup, the explicit resolvent and the
//! checks of its norm estimates.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{weighted_norm_values, DensityField, SizeGrid, Spacing, WeightSpec};
use crate::kernels::{Flow, GrowthRate, KernelSet, OriginClass};
use crate::quadrature::{integrate, FixedRule};

/// Characteristic through `x0`, followed for time `t` (negative allowed).
pub fn flow_map(r: &GrowthRate, t: f64, x0: f64) -> Flow {
    r.flow(t, x0)
}

/// `R(x) = int_1^x ds/r` and `Q(x) = int_1^x q/r`.
#[derive(Debug, Clone)]
pub struct Antiderivatives<'a> {
    ks: &'a KernelSet,
}

impl<'a> Antiderivatives<'a> {
    pub fn new(ks: &'a KernelSet) -> Result<Self> {
        if ks.r.is_none() {
            return Err(Error::ParameterDomain("antiderivatives need a positive growth rate".into()));
        }
        Ok(Self { ks })
    }

    pub fn big_r(&self, x: f64) -> f64 {
        self.ks.r.big_r(x)
    }

    pub fn big_q(&self, x: f64) -> Result<f64> {
        let ks = self.ks;
        integrate(|s| ks.q(s) / ks.r.eval(s), 1.0, x)
    }

    /// `ln v_lambda(x) = -lambda R(x) - Q(x) - ln r(x)`.
    pub fn ln_v_lambda(&self, lambda: f64, x: f64) -> Result<f64> {
        Ok(-lambda * self.big_r(x) - self.big_q(x)? - self.ks.r.eval(x).ln())
    }

    /// `(m_R, M_R)`: limits of `R` at `0+` and at infinity.
    pub fn r_limits(&self) -> (f64, f64) {
        (self.ks.r.big_r_origin(), f64::INFINITY)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralParams {
    pub m: f64,
    pub omega_rm: f64,
    pub lambda: f64,
}

impl SpectralParams {
    pub fn new(m: f64, rtilde: f64, lambda: f64) -> Result<Self> {
        let omega_rm = 2.0 * m * rtilde;
        if lambda <= omega_rm || !lambda.is_finite() {
            return Err(Error::ParameterDomain(format!(
                "lambda = {lambda} must exceed omega_(r,m) = 2 m rtilde = {omega_rm}"
            )));
        }
        Ok(Self { m, omega_rm, lambda })
    }
}

// ---------------------------------------------------------------- semigroup

/// Where the number carried from one source cell lands: at most two cells
/// (weights already divided by the target width) plus the mass per unit
/// number pushed past the last cell.
#[derive(Debug, Clone, Copy)]
struct Deposit {
    lo: usize,
    w_lo: f64,
    hi: usize,
    w_hi: f64,
    escape: f64,
    /// size gained per unit number
    shift: f64,
}

/// Precomputed exact transport over a fixed time `tau`. Each source cell is
/// carried along the characteristic through its center; its number lands on
/// the two cells bracketing the image, split so that number and mass are both
/// preserved. Absorption is integrated along the same characteristic.
#[derive(Debug, Clone)]
pub struct TransportPlan {
    pub tau: f64,
    deposits: Vec<Deposit>,
    /// `exp(-int q)` along the characteristic leaving each center
    atten: Vec<f64>,
    /// share of the absorbed density due to `a` (rest is `a1`)
    frac_a: Vec<f64>,
    widths: Vec<f64>,
}

/// Result of one application of a [`TransportPlan`].
#[derive(Debug, Clone)]
pub struct TransportOutcome {
    /// attenuated transported density
    pub transported: Vec<f64>,
    /// density removed by `a` along the way, located at the arrival cell
    pub lost_a: Vec<f64>,
    /// density removed by `a1`
    pub lost_a1: Vec<f64>,
    /// mass carried past `xmax` before attenuation
    pub escaped_raw: f64,
    /// mass carried past `xmax` after attenuation
    pub escaped: f64,
    /// mass added by growth, escaped part included
    pub growth: f64,
}

fn node_coord(grid: &SizeGrid, x: f64) -> f64 {
    match grid.spacing {
        Spacing::Geometric => (x / grid.centers[0]).ln() / grid.step.ln(),
        Spacing::Uniform => (x - grid.centers[0]) / grid.step,
    }
}

fn virtual_center(grid: &SizeGrid, j: isize) -> f64 {
    if j >= 0 && (j as usize) < grid.len() {
        return grid.centers[j as usize];
    }
    match grid.spacing {
        Spacing::Geometric => grid.centers[0] * grid.step.powi(j as i32),
        Spacing::Uniform => grid.centers[0] + grid.step * j as f64,
    }
}

impl TransportPlan {
    pub fn new(grid: &SizeGrid, ks: &KernelSet, tau: f64) -> Result<Self> {
        let n = grid.len();
        let mut plan = Self {
            tau,
            deposits: Vec::with_capacity(n),
            atten: Vec::with_capacity(n),
            frac_a: Vec::with_capacity(n),
            widths: grid.widths.clone(),
        };
        for j in 0..n {
            let (dep, att, fa) = Self::entry(grid, ks, tau, j)?;
            plan.deposits.push(dep);
            plan.atten.push(att);
            plan.frac_a.push(fa);
        }
        Ok(plan)
    }

    fn entry(grid: &SizeGrid, ks: &KernelSet, tau: f64, j: usize) -> Result<(Deposit, f64, f64)> {
        let n = grid.len();
        let x = grid.centers[j];
        let moving = !ks.r.is_none() && tau > 0.0;
        let (da, da1) = if !moving {
            (ks.a.eval(x) * tau, ks.absorption.eval(x) * tau)
        } else {
            let along = |s: f64, g: &dyn Fn(f64) -> f64| match ks.r.flow(s, x) {
                Flow::At(y) => g(y),
                Flow::HitOrigin => 0.0,
            };
            let da = if ks.a.is_zero() {
                0.0
            } else {
                integrate(|s| along(s, &|y| ks.a.eval(y)), 0.0, tau)?
            };
            let da1 = if ks.absorption.beta == 0.0 {
                0.0
            } else {
                integrate(|s| along(s, &|y| ks.absorption.eval(y)), 0.0, tau)?
            };
            (da, da1)
        };
        let dq = da + da1;
        let att = (-dq).exp();
        let fa = if dq > 0.0 { da / dq } else { 0.0 };
        let stay = Deposit {
            lo: j,
            w_lo: 1.0 / grid.widths[j],
            hi: j,
            w_hi: 0.0,
            escape: 0.0,
            shift: 0.0,
        };
        if !moving {
            return Ok((stay, att, fa));
        }
        let image = match ks.r.flow(tau, x) {
            Flow::At(y) => y,
            Flow::HitOrigin => return Ok((stay, att, fa)),
        };
        let k = (node_coord(grid, image).floor() as isize).max(j as isize);
        let (c0, c1) = (virtual_center(grid, k), virtual_center(grid, k + 1));
        let theta = ((image - c0) / (c1 - c0)).clamp(0.0, 1.0);
        let mut dep = Deposit {
            lo: n,
            w_lo: 0.0,
            hi: n,
            w_hi: 0.0,
            escape: 0.0,
            shift: (1.0 - theta) * c0 + theta * c1 - x,
        };
        for (idx, w, c) in [(k, 1.0 - theta, c0), (k + 1, theta, c1)] {
            if (idx as usize) < n {
                if idx == k {
                    dep.lo = idx as usize;
                    dep.w_lo = w / grid.widths[idx as usize];
                } else {
                    dep.hi = idx as usize;
                    dep.w_hi = w / grid.widths[idx as usize];
                }
            } else {
                dep.escape += w * c;
            }
        }
        Ok((dep, att, fa))
    }

    pub fn apply(&self, f: &[f64]) -> TransportOutcome {
        let n = f.len();
        let mut transported = vec![0.0; n];
        let mut lost_a = vec![0.0; n];
        let mut lost_a1 = vec![0.0; n];
        let mut escaped_raw = 0.0;
        let mut escaped = 0.0;
        let mut growth = 0.0;
        for j in 0..n {
            let number = f[j] * self.widths[j];
            if number == 0.0 {
                continue;
            }
            let d = &self.deposits[j];
            let kept = number * self.atten[j];
            let lost = number - kept;
            let la = lost * self.frac_a[j];
            let la1 = lost - la;
            for (idx, w) in [(d.lo, d.w_lo), (d.hi, d.w_hi)] {
                if idx < n && w != 0.0 {
                    transported[idx] += kept * w;
                    lost_a[idx] += la * w;
                    lost_a1[idx] += la1 * w;
                }
            }
            escaped_raw += number * d.escape;
            escaped += kept * d.escape;
            growth += number * d.shift;
        }
        TransportOutcome {
            transported,
            lost_a,
            lost_a1,
            escaped_raw,
            escaped,
            growth,
        }
    }
}

/// Exact transport-absorption semigroup `S_T(t) f0` on the grid.
pub fn transport_apply(f0: &DensityField, t: f64, ks: &KernelSet) -> Result<DensityField> {
    if t < 0.0 {
        return Err(Error::ParameterDomain(format!("transport time must be nonnegative, got {t}")));
    }
    if t == 0.0 {
        return Ok(f0.clone());
    }
    let plan = TransportPlan::new(&f0.grid, ks, t)?;
    let out = plan.apply(&f0.values);
    Ok(DensityField {
        grid: f0.grid.clone(),
        values: out.transported,
        escaped_mass: f0.escaped_mass + out.escaped,
    })
}

// ---------------------------------------------------------------- resolvent

/// `[R(lambda) g](x) = (1/r(x)) int_0^x exp(-(Phi(x) - Phi(y))) g(y) dy`
/// with `Phi = lambda R + Q`, evaluated in log space by cumulative quadrature.
pub fn resolvent_apply(g: &DensityField, sp: &SpectralParams, ks: &KernelSet) -> Result<DensityField> {
    let grid = &g.grid;
    let n = grid.len();
    let lambda = sp.lambda;
    if ks.r.is_none() {
        let values = (0..n)
            .map(|i| g.values[i] / (lambda + ks.q(grid.centers[i])))
            .collect();
        return Ok(DensityField::from_values(grid.clone(), values));
    }
    let rule = FixedRule::new(8);
    let dphi = |a: f64, b: f64| rule.integrate(|s| (lambda + ks.q(s)) / ks.r.eval(s), a, b);
    let mut values = Vec::with_capacity(n);
    let mut acc = 0.0;
    let mut prev = grid.xmin;
    for i in 0..n {
        let c = grid.centers[i];
        let decay = (-dphi(prev, c)).exp();
        let mut local = 0.0;
        for (y, w) in rule.mapped(prev, c) {
            let gy = if i == 0 {
                g.values[0]
            } else {
                let t = (y - prev) / (c - prev);
                (1.0 - t) * g.values[i - 1] + t * g.values[i]
            };
            local += w * (-dphi(y, c)).exp() * gy;
        }
        acc = acc * decay + local;
        values.push(acc / ks.r.eval(c));
        prev = c;
    }
    Ok(DensityField::from_values(grid.clone(), values))
}

/// Pointwise residual `lambda f + (r f)' + q f - g` at interior centers,
/// with a three-point nonuniform derivative; zero at the two end cells.
pub fn resolvent_residual(f: &DensityField, g: &DensityField, lambda: f64, ks: &KernelSet) -> Vec<f64> {
    let grid = &f.grid;
    let x = &grid.centers;
    let n = grid.len();
    let rf: Vec<f64> = (0..n).map(|i| ks.r.eval(x[i]) * f.values[i]).collect();
    let mut res = vec![0.0; n];
    for i in 1..n - 1 {
        let h1 = x[i] - x[i - 1];
        let h2 = x[i + 1] - x[i];
        let d = -h2 / (h1 * (h1 + h2)) * rf[i - 1] + (h2 - h1) / (h1 * h2) * rf[i] + h1 / (h2 * (h1 + h2)) * rf[i + 1];
        res[i] = lambda * f.values[i] + d + ks.q(x[i]) * f.values[i] - g.values[i];
    }
    res
}

pub fn resolvent_residual_norm(f: &DensityField, g: &DensityField, sp: &SpectralParams, ks: &KernelSet) -> f64 {
    let res = resolvent_residual(f, g, sp.lambda, ks);
    weighted_norm_values(&f.grid, &res, WeightSpec::shifted(sp.m))
}

// ---------------------------------------------------------------- integral bounds

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    /// computed `I_{0,m}(alpha, inf)` (truncated part only)
    pub i_value: f64,
    /// truncated part plus the analytic tail bound
    pub i_upper: f64,
    pub i_bound: f64,
    pub j_value: f64,
    pub j_upper: f64,
    pub j_bound: f64,
    pub pass: bool,
}

/// Evaluate `I_{0,m}(alpha, inf)` and `J_{0,m}(alpha, inf)` along the
/// characteristic through `alpha`, with the tail beyond the truncation point
/// bounded analytically.
pub fn lemma21_check(alpha: f64, lambda: f64, m: f64, ks: &KernelSet) -> Result<BoundReport> {
    if alpha <= 0.0 {
        return Err(Error::ParameterDomain(format!("alpha must be positive, got {alpha}")));
    }
    let anti = Antiderivatives::new(ks)?;
    let sp = SpectralParams::new(m, ks.r.rtilde(), lambda)?;
    let w = WeightSpec::shifted(m);
    let gap = lambda - sp.omega_rm;
    let pos = |v: f64| match ks.r.flow(v, alpha) {
        Flow::At(y) => y,
        Flow::HitOrigin => 0.0,
    };
    let h = |v: f64| (-lambda * v).exp() * w.eval(pos(v));
    // truncation point: integrand below 1e-14 of its running peak
    let mut peak = h(0.0);
    let mut vt = 0.0;
    let step = 0.25 / lambda;
    loop {
        vt += step;
        let hv = h(vt);
        peak = peak.max(hv);
        if hv < 1e-14 * peak || vt > 1e4 / lambda {
            break;
        }
    }
    let i_trunc = integrate(h, 0.0, vt)?;
    let i_tail = h(vt) / gap;
    let scale_i = (-lambda * anti.big_r(alpha)).exp();
    let i_bound_unit = w.eval(alpha) / gap;

    let qint = |v: f64| -> f64 {
        if v == 0.0 {
            0.0
        } else {
            integrate(|s| ks.q(pos(s)), 0.0, v).unwrap_or(f64::NAN)
        }
    };
    let hj = |v: f64| (lambda + ks.q(pos(v))) * (-lambda * v - qint(v)).exp() * w.eval(pos(v));
    let j_trunc = integrate(hj, 0.0, vt)?;
    let j_tail = (-lambda * vt - qint(vt)).exp() * w.eval(pos(vt)) * lambda / gap;
    let scale_j = (-lambda * anti.big_r(alpha) - anti.big_q(alpha)?).exp();
    let j_bound_unit = lambda * w.eval(alpha) / gap;

    let i_upper = (i_trunc + i_tail) * scale_i;
    let j_upper = (j_trunc + j_tail) * scale_j;
    let i_bound = i_bound_unit * scale_i;
    let j_bound = j_bound_unit * scale_j;
    Ok(BoundReport {
        i_value: i_trunc * scale_i,
        i_upper,
        i_bound,
        j_value: j_trunc * scale_j,
        j_upper,
        j_bound,
        pass: i_trunc + i_tail <= i_bound_unit * (1.0 + 1e-12) && j_trunc + j_tail <= j_bound_unit * (1.0 + 1e-12),
    })
}

// ---------------------------------------------------------------- Lemma 2.2

#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceReport {
    pub class: OriginClass,
    pub eps: Vec<f64>,
    /// `int_eps^1 v_lambda w_m` (unreachable) or `r v_lambda` at `eps` (reachable)
    pub values: Vec<f64>,
    pub monotone: bool,
    /// fitted exponent of `values ~ eps^(-rate)` over the smallest three `eps`
    pub fitted_rate: f64,
    /// limit of `r v_lambda` at the origin (reachable case)
    pub boundary_limit: Option<f64>,
    /// `v_lambda` fails to lie in `X_{0,m}` (unreachable) or violates the
    /// boundary condition (reachable)
    pub certified: bool,
}

pub fn v_lambda_diagnostics(sp: &SpectralParams, ks: &KernelSet) -> Result<DivergenceReport> {
    let anti = Antiderivatives::new(ks)?;
    let class = ks.r.origin_class().expect("growth present");
    let eps: Vec<f64> = (1..=8).map(|k| 10f64.powi(-k)).collect();
    let w = WeightSpec::shifted(sp.m);
    let lambda = sp.lambda;
    let mut values = Vec::with_capacity(eps.len());
    match class {
        OriginClass::Unreachable => {
            // substitute x = e^s; accumulate decade by decade
            let mut acc = 0.0;
            let mut upper = 1.0f64;
            for &e in &eps {
                let piece = integrate(
                    |s| {
                        let x = s.exp();
                        anti.ln_v_lambda(lambda, x).map(|lv| lv.exp()).unwrap_or(f64::NAN) * w.eval(x) * x
                    },
                    e.ln(),
                    upper.ln(),
                )?;
                acc += piece;
                values.push(acc);
                upper = e;
            }
        }
        OriginClass::Reachable => {
            for &e in &eps {
                values.push((-lambda * anti.big_r(e) - anti.big_q(e)?).exp());
            }
        }
    }
    let monotone = values.windows(2).all(|p| p[1] >= p[0]);
    let k = values.len();
    let fit = |i: usize| ((values[i].ln()), (1.0 / eps[i]).ln());
    let (y0, x0) = fit(k - 3);
    let (y1, x1) = fit(k - 1);
    let fitted_rate = (y1 - y0) / (x1 - x0);
    let (boundary_limit, certified) = match class {
        OriginClass::Unreachable => (None, monotone && fitted_rate > 0.05),
        OriginClass::Reachable => {
            let lim = values[k - 1];
            let settled = ((values[k - 1] - values[k - 2]) / lim).abs() < 1e-3;
            (Some(lim), settled && lim > 0.0)
        }
    };
    Ok(DivergenceReport {
        class,
        eps,
        values,
        monotone,
        fitted_rate,
        boundary_limit,
        certified,
    })
}

// ---------------------------------------------------------------- Laplace

/// Relative `[0,m]` discrepancy between `int_0^tmax e^{-lambda t} S_T(t) g dt`
/// (composite 4-point Gauss in `t` over `panels` panels) and `R(lambda) g`.
pub fn laplace_consistency(
    g: &DensityField,
    sp: &SpectralParams,
    ks: &KernelSet,
    tmax: f64,
    panels: usize,
) -> Result<f64> {
    if ((sp.omega_rm - sp.lambda) * tmax).exp() >= 1e-6 {
        return Err(Error::ParameterDomain(format!(
            "tmax = {tmax} too short: exp((omega - lambda) tmax) must fall below 1e-6"
        )));
    }
    let grid: &Arc<SizeGrid> = &g.grid;
    let n = grid.len();
    let res = resolvent_apply(g, sp, ks)?;
    let w = WeightSpec::shifted(sp.m);
    let denom = weighted_norm_values(grid, &res.values, w);
    if denom == 0.0 {
        return Ok(0.0);
    }
    let rule = FixedRule::new(4);
    let h = tmax / panels as f64;
    let mut acc = vec![0.0; n];
    for p in 0..panels {
        let (a, b) = (p as f64 * h, (p + 1) as f64 * h);
        for (t, wt) in rule.mapped(a, b) {
            let st = transport_apply(g, t, ks)?;
            let c = wt * (-sp.lambda * t).exp();
            for i in 0..n {
                acc[i] += c * st.values[i];
            }
        }
    }
    let diff: Vec<f64> = acc.iter().zip(&res.values).map(|(a, b)| a - b).collect();
    Ok(weighted_norm_values(grid, &diff, w) / denom)
}
