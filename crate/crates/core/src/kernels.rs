//! Model coefficients: fragmentation rate `a`, daughter distribution `b`,
//! growth rate `r`, coagulation kernel `k` and the absorption `a1`.

use crate::error::{Error, Result};
use crate::quadrature::integrate;

/// Piecewise-linear table with linear extrapolation from the end segments,
/// clamped at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl Table {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() < 2 || xs.len() != ys.len() {
            return Err(Error::Config(format!(
                "table needs at least two knots with matching values (got {} knots, {} values)",
                xs.len(),
                ys.len()
            )));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("table knots must be strictly increasing".into()));
        }
        if ys.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Config("table values must be finite and nonnegative".into()));
        }
        Ok(Self { xs, ys })
    }

    pub fn knots(&self) -> &[f64] {
        &self.xs
    }

    pub fn values(&self) -> &[f64] {
        &self.ys
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        let k = match self.xs.partition_point(|&v| v <= x) {
            0 => 0,
            p if p >= n => n - 2,
            p => p - 1,
        };
        let (x0, x1) = (self.xs[k], self.xs[k + 1]);
        let (y0, y1) = (self.ys[k], self.ys[k + 1]);
        (y0 + (y1 - y0) * (x - x0) / (x1 - x0)).max(0.0)
    }
}

// ---------------------------------------------------------------- a(x)

#[derive(Debug, Clone, PartialEq)]
pub enum RateForm {
    /// `amp * x^exp`
    PowerLaw { amp: f64, exp: f64 },
    /// `c0 + c1 x`
    Linear { c0: f64, c1: f64 },
    Table(Table),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FragmentationRate {
    pub form: RateForm,
    pub a0: f64,
    pub gamma0: f64,
    pub x0: f64,
}

impl FragmentationRate {
    pub fn power_law(amp: f64, exp: f64) -> Self {
        Self {
            form: RateForm::PowerLaw { amp, exp },
            a0: amp,
            gamma0: exp,
            x0: 1.0,
        }
    }

    pub fn zero(gamma0: f64) -> Self {
        Self {
            form: RateForm::PowerLaw { amp: 0.0, exp: gamma0 },
            a0: 0.0,
            gamma0,
            x0: 1.0,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match &self.form {
            RateForm::PowerLaw { amp, exp } => {
                if *amp == 0.0 {
                    0.0
                } else {
                    amp * x.powf(*exp)
                }
            }
            RateForm::Linear { c0, c1 } => c0 + c1 * x,
            RateForm::Table(t) => t.eval(x),
        }
    }

    pub fn is_zero(&self) -> bool {
        match &self.form {
            RateForm::PowerLaw { amp, .. } => *amp == 0.0,
            RateForm::Linear { c0, c1 } => *c0 == 0.0 && *c1 == 0.0,
            RateForm::Table(t) => t.values().iter().all(|v| *v == 0.0),
        }
    }

    /// Sampled supremum of `a` on `[0, x]`.
    pub fn sup_below(&self, x: f64) -> f64 {
        (0..=256)
            .map(|i| self.eval(x * i as f64 / 256.0))
            .fold(0.0, f64::max)
    }
}

// ---------------------------------------------------------------- b(x,y)

#[derive(Debug, Clone, PartialEq)]
pub enum DaughterForm {
    /// `2 / y`
    UniformBinary,
    /// `(nu + 2) x^nu / y^(nu + 1)`
    PowerLaw { nu: f64 },
    /// `coef x^nu / y^(nu + 1)`; mass-conserving only when `coef = nu + 2`.
    Monomial { coef: f64, nu: f64 },
    /// `scale * h(x / y) / y` with `h` tabulated on `[0, 1]`, `scale` fixed so
    /// that `int_0^1 z h(z) dz * scale = 1`.
    Table { profile: Table, scale: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DaughterDistribution {
    pub form: DaughterForm,
    pub b0: f64,
    pub l: f64,
}

impl DaughterDistribution {
    pub fn uniform_binary() -> Self {
        Self {
            form: DaughterForm::UniformBinary,
            b0: 2.0,
            l: 0.0,
        }
    }

    pub fn power_law(nu: f64) -> Result<Self> {
        if nu <= -1.0 {
            return Err(Error::ParameterDomain(format!("power-law daughter needs nu > -1, got {nu}")));
        }
        Ok(Self {
            form: DaughterForm::PowerLaw { nu },
            b0: (nu + 2.0) / (nu + 1.0),
            l: 0.0,
        })
    }

    pub fn monomial(coef: f64, nu: f64) -> Result<Self> {
        if nu <= -1.0 || coef < 0.0 {
            return Err(Error::ParameterDomain(format!(
                "monomial daughter needs nu > -1 and coef >= 0, got nu = {nu}, coef = {coef}"
            )));
        }
        Ok(Self {
            form: DaughterForm::Monomial { coef, nu },
            b0: coef / (nu + 1.0),
            l: 0.0,
        })
    }

    pub fn table(profile: Table) -> Result<Self> {
        let zs = profile.knots();
        if zs[0] < 0.0 || *zs.last().unwrap() > 1.0 {
            return Err(Error::Config("daughter profile knots must lie in [0, 1]".into()));
        }
        let p = profile.clone();
        let mass = integrate(|z| z * p.eval(z), 0.0, 1.0)?;
        if mass <= 0.0 {
            return Err(Error::Config("daughter profile carries no mass".into()));
        }
        let scale = 1.0 / mass;
        let p = profile.clone();
        let n0 = scale * integrate(|z| p.eval(z), 0.0, 1.0)?;
        Ok(Self {
            form: DaughterForm::Table { profile, scale },
            b0: n0,
            l: 0.0,
        })
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        if x > y || x < 0.0 || y <= 0.0 {
            return 0.0;
        }
        match &self.form {
            DaughterForm::UniformBinary => 2.0 / y,
            DaughterForm::PowerLaw { nu } => (nu + 2.0) * x.powf(*nu) / y.powf(nu + 1.0),
            DaughterForm::Monomial { coef, nu } => coef * x.powf(*nu) / y.powf(nu + 1.0),
            DaughterForm::Table { profile, scale } => scale * profile.eval(x / y) / y,
        }
    }

    /// `n_m(y) / y^m`, which is independent of `y` for every built-in form.
    pub fn moment_ratio(&self, m: f64) -> Result<f64> {
        match &self.form {
            DaughterForm::UniformBinary => Ok(2.0 / (m + 1.0)),
            DaughterForm::PowerLaw { nu } => Ok((nu + 2.0) / (nu + m + 1.0)),
            DaughterForm::Monomial { coef, nu } => Ok(coef / (nu + m + 1.0)),
            DaughterForm::Table { profile, scale } => {
                Ok(scale * integrate(|z| z.powf(m) * profile.eval(z), 0.0, 1.0)?)
            }
        }
    }
}

/// `n_m(y) = int_0^y b(x,y) x^m dx`.
pub fn daughter_moment(b: &DaughterDistribution, m: f64, y: f64) -> Result<f64> {
    if y <= 0.0 || m < 0.0 {
        return Err(Error::ParameterDomain(format!("daughter moment needs y > 0, m >= 0 (y = {y}, m = {m})")));
    }
    Ok(b.moment_ratio(m)? * y.powf(m))
}

/// `n_m(y)` by direct adaptive quadrature, independent of the closed forms.
pub fn daughter_moment_quadrature(b: &DaughterDistribution, m: f64, y: f64) -> Result<f64> {
    integrate(|x| b.eval(x, y) * x.powf(m), 0.0, y)
}

/// `N_m(y) = y^m - n_m(y)`.
pub fn moment_deficit(b: &DaughterDistribution, m: f64, y: f64) -> Result<f64> {
    Ok(y.powf(m) - daughter_moment(b, m, y)?)
}

// ---------------------------------------------------------------- r(x)

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OriginClass {
    /// `int_0+ dx / r < inf`: characteristics reach `x = 0`.
    Reachable,
    Unreachable,
}

#[derive(Debug, Clone, PartialEq)]
pub enum GrowthForm {
    None,
    Constant { c: f64 },
    /// `c x`
    Linear { c: f64 },
    Affine { r0: f64, r1: f64 },
    Table(Table),
}

/// Outcome of following a characteristic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Flow {
    At(f64),
    /// The backward characteristic left through the origin.
    HitOrigin,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrowthRate {
    pub form: GrowthForm,
    pub r0: f64,
    pub r1: f64,
}

impl GrowthRate {
    pub fn none() -> Self {
        Self {
            form: GrowthForm::None,
            r0: 0.0,
            r1: 0.0,
        }
    }

    pub fn constant(c: f64) -> Self {
        Self {
            form: GrowthForm::Constant { c },
            r0: c,
            r1: 0.0,
        }
    }

    pub fn linear(c: f64) -> Self {
        Self {
            form: GrowthForm::Linear { c },
            r0: 0.0,
            r1: c,
        }
    }

    pub fn affine(r0: f64, r1: f64) -> Self {
        Self {
            form: GrowthForm::Affine { r0, r1 },
            r0,
            r1,
        }
    }

    /// Table growth with an affine majorant fitted to the knots.
    pub fn table(t: Table) -> Self {
        let xs = t.knots();
        let ys = t.values();
        let n = xs.len();
        let tail = ((ys[n - 1] - ys[n - 2]) / (xs[n - 1] - xs[n - 2])).max(0.0);
        let r1 = xs
            .iter()
            .zip(ys)
            .filter(|(x, _)| **x >= 1.0)
            .map(|(x, y)| y / x)
            .fold(tail, f64::max);
        let r0 = xs
            .iter()
            .zip(ys)
            .map(|(x, y)| y - r1 * x)
            .fold(ys[0], f64::max)
            .max(0.0);
        Self {
            form: GrowthForm::Table(t),
            r0,
            r1,
        }
    }

    pub fn rtilde(&self) -> f64 {
        self.r0.max(self.r1)
    }

    pub fn is_none(&self) -> bool {
        match &self.form {
            GrowthForm::None => true,
            GrowthForm::Constant { c } | GrowthForm::Linear { c } => *c == 0.0,
            GrowthForm::Affine { r0, r1 } => *r0 == 0.0 && *r1 == 0.0,
            GrowthForm::Table(t) => t.values().iter().all(|v| *v == 0.0),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match &self.form {
            GrowthForm::None => 0.0,
            GrowthForm::Constant { c } => *c,
            GrowthForm::Linear { c } => c * x,
            GrowthForm::Affine { r0, r1 } => r0 + r1 * x,
            GrowthForm::Table(t) => t.eval(x),
        }
    }

    /// `None` for the zero growth rate, which has no characteristics.
    pub fn origin_class(&self) -> Option<OriginClass> {
        if self.is_none() {
            return None;
        }
        Some(match &self.form {
            GrowthForm::Linear { .. } => OriginClass::Unreachable,
            GrowthForm::Affine { r0, .. } if *r0 == 0.0 => OriginClass::Unreachable,
            GrowthForm::Table(t) if t.values()[0] == 0.0 && t.knots()[0] <= 0.0 => OriginClass::Unreachable,
            _ => OriginClass::Reachable,
        })
    }

    /// `R(x) = int_1^x ds / r(s)`.
    pub fn big_r(&self, x: f64) -> f64 {
        match &self.form {
            GrowthForm::None => f64::NAN,
            GrowthForm::Constant { c } => (x - 1.0) / c,
            GrowthForm::Linear { c } => x.ln() / c,
            GrowthForm::Affine { r0, r1 } => {
                if *r1 == 0.0 {
                    (x - 1.0) / r0
                } else {
                    ((r0 + r1 * x) / (r0 + r1)).ln() / r1
                }
            }
            GrowthForm::Table(_) => integrate(|s| 1.0 / self.eval(s), 1.0, x).unwrap_or(f64::NAN),
        }
    }

    /// `R(0+)`, finite exactly when the origin is reachable.
    pub fn big_r_origin(&self) -> f64 {
        match self.origin_class() {
            Some(OriginClass::Reachable) => match &self.form {
                GrowthForm::Constant { c } => -1.0 / c,
                GrowthForm::Affine { r0, r1 } => {
                    if *r1 == 0.0 {
                        -1.0 / r0
                    } else {
                        (r0 / (r0 + r1)).ln() / r1
                    }
                }
                _ => -integrate(|s| 1.0 / self.eval(s), 0.0, 1.0).unwrap_or(f64::INFINITY),
            },
            _ => f64::NEG_INFINITY,
        }
    }

    /// Position at time `t` of the characteristic through `x0` at time 0.
    pub fn flow(&self, t: f64, x0: f64) -> Flow {
        let out = match &self.form {
            GrowthForm::None => x0,
            GrowthForm::Constant { c } => x0 + c * t,
            GrowthForm::Linear { c } => x0 * (c * t).exp(),
            GrowthForm::Affine { r0, r1 } => {
                if *r1 == 0.0 {
                    x0 + r0 * t
                } else {
                    let s = r0 / r1;
                    (x0 + s) * (r1 * t).exp() - s
                }
            }
            GrowthForm::Table(_) => return self.flow_numeric(t, x0),
        };
        if out <= 0.0 {
            Flow::HitOrigin
        } else {
            Flow::At(out)
        }
    }

    fn flow_numeric(&self, t: f64, x0: f64) -> Flow {
        if t == 0.0 {
            return Flow::At(x0);
        }
        let target = self.big_r(x0) + t;
        if target <= self.big_r_origin() {
            return Flow::HitOrigin;
        }
        // bracket then bisect on the increasing map R
        let (mut lo, mut hi) = if t > 0.0 { (x0, x0.max(1e-300) * 2.0 + 1.0) } else { (0.0, x0) };
        if t > 0.0 {
            while self.big_r(hi) < target {
                lo = hi;
                hi *= 2.0;
                if !hi.is_finite() {
                    return Flow::At(f64::INFINITY);
                }
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.big_r(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * hi {
                break;
            }
        }
        Flow::At(0.5 * (lo + hi))
    }
}

// ---------------------------------------------------------------- k(x,y)

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelClass {
    /// `k <= k0 (1 + x^alpha)(1 + y^alpha)`
    Local,
    /// `k <= k0 (1 + x^alpha + y^alpha)`
    Global,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CoagForm {
    Constant { value: f64 },
    /// `amp (1 + x^exp)(1 + y^exp)`
    Product { amp: f64, exp: f64 },
    /// `amp (1 + x^exp + y^exp)`
    SumPower { amp: f64, exp: f64 },
    /// Symmetric bilinear table on shared knots; `values[i][j] = k(xs[i], xs[j])`.
    Table { xs: Vec<f64>, values: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoagulationKernel {
    pub form: CoagForm,
    pub k0: f64,
    pub alpha: f64,
    pub class: KernelClass,
}

impl CoagulationKernel {
    pub fn zero(alpha: f64) -> Self {
        Self {
            form: CoagForm::Constant { value: 0.0 },
            k0: 0.0,
            alpha,
            class: KernelClass::Global,
        }
    }

    pub fn constant(value: f64, alpha: f64) -> Self {
        Self {
            form: CoagForm::Constant { value },
            k0: value,
            alpha,
            class: KernelClass::Global,
        }
    }

    pub fn product(amp: f64, exp: f64) -> Self {
        Self {
            form: CoagForm::Product { amp, exp },
            k0: amp,
            alpha: exp,
            class: KernelClass::Local,
        }
    }

    pub fn sum_power(amp: f64, exp: f64) -> Self {
        Self {
            form: CoagForm::SumPower { amp, exp },
            k0: amp,
            alpha: exp,
            class: KernelClass::Global,
        }
    }

    pub fn is_zero(&self) -> bool {
        match &self.form {
            CoagForm::Constant { value } => *value == 0.0,
            CoagForm::Product { amp, .. } | CoagForm::SumPower { amp, .. } => *amp == 0.0,
            CoagForm::Table { values, .. } => values.iter().flatten().all(|v| *v == 0.0),
        }
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match &self.form {
            CoagForm::Constant { value } => *value,
            CoagForm::Product { amp, exp } => amp * ((1.0 + x.powf(*exp)) * (1.0 + y.powf(*exp))),
            CoagForm::SumPower { amp, exp } => amp * (1.0 + (x.powf(*exp) + y.powf(*exp))),
            CoagForm::Table { xs, values } => {
                let locate = |v: f64| -> (usize, f64) {
                    let n = xs.len();
                    if v <= xs[0] {
                        return (0, 0.0);
                    }
                    if v >= xs[n - 1] {
                        return (n - 2, 1.0);
                    }
                    let p = xs.partition_point(|&s| s <= v) - 1;
                    (p, (v - xs[p]) / (xs[p + 1] - xs[p]))
                };
                let (i, u) = locate(x);
                let (j, w) = locate(y);
                (1.0 - u) * (1.0 - w) * values[i][j]
                    + u * (1.0 - w) * values[i + 1][j]
                    + (1.0 - u) * w * values[i][j + 1]
                    + u * w * values[i + 1][j + 1]
            }
        }
    }

    /// Right-hand side of the declared growth bound.
    pub fn class_bound(&self, x: f64, y: f64) -> f64 {
        let (xa, ya) = (x.powf(self.alpha), y.powf(self.alpha));
        match self.class {
            KernelClass::Local => self.k0 * (1.0 + xa) * (1.0 + ya),
            KernelClass::Global => self.k0 * (1.0 + xa + ya),
        }
    }
}

// ---------------------------------------------------------------- a1(x)

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AbsorptionRate {
    pub beta: f64,
    pub alpha: f64,
}

impl AbsorptionRate {
    pub fn eval(&self, x: f64) -> f64 {
        if self.beta == 0.0 {
            0.0
        } else {
            self.beta * (1.0 + x.powf(self.alpha))
        }
    }
}

/// Shift constant `beta = 2 k0 (1 + b)` for a ball of radius `b`.
pub fn compute_beta(k0: f64, ball_radius: f64) -> f64 {
    2.0 * k0 * (1.0 + ball_radius)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelSet {
    pub a: FragmentationRate,
    pub b: DaughterDistribution,
    pub r: GrowthRate,
    pub k: CoagulationKernel,
    pub absorption: AbsorptionRate,
    pub ball_radius: f64,
}

impl KernelSet {
    pub fn new(
        a: FragmentationRate,
        b: DaughterDistribution,
        r: GrowthRate,
        k: CoagulationKernel,
        ball_radius: f64,
    ) -> Self {
        let absorption = AbsorptionRate {
            beta: compute_beta(k.k0, ball_radius),
            alpha: k.alpha,
        };
        Self {
            a,
            b,
            r,
            k,
            absorption,
            ball_radius,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.k.alpha
    }

    pub fn beta(&self) -> f64 {
        self.absorption.beta
    }

    /// Same kernels with the absorption replaced by `beta`.
    pub fn with_beta(&self, beta: f64) -> Self {
        let mut ks = self.clone();
        ks.absorption.beta = beta;
        ks
    }

    /// Total absorption `q = a + a1`.
    pub fn q(&self, x: f64) -> f64 {
        self.a.eval(x) + self.absorption.eval(x)
    }
}

// ---------------------------------------------------------------- validation

#[derive(Debug, Clone)]
pub struct SamplePlan {
    pub sizes: Vec<f64>,
    pub weight_m: f64,
    pub liminf_order: f64,
    pub liminf_threshold: f64,
    pub y_probe: f64,
}

impl SamplePlan {
    pub fn geometric(lo: f64, hi: f64, count: usize, weight_m: f64) -> Self {
        Self {
            sizes: geomspace(lo, hi, count),
            weight_m,
            liminf_order: 2.0,
            liminf_threshold: 0.01,
            y_probe: 10.0,
        }
    }
}

pub fn geomspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let ratio = (hi / lo).ln() / (count - 1) as f64;
    (0..count).map(|i| lo * (ratio * i as f64).exp()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckEntry {
    pub name: String,
    pub pass: bool,
    pub worst: f64,
    pub detail: String,
    /// Per-sample `(size, residual)` where meaningful.
    pub samples: Vec<(f64, f64)>,
}

impl CheckEntry {
    fn new(name: &str, pass: bool, worst: f64, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            pass,
            worst,
            detail: detail.into(),
            samples: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub entries: Vec<CheckEntry>,
}

impl ValidationReport {
    pub fn all_pass(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }

    pub fn get(&self, name: &str) -> Option<&CheckEntry> {
        self.entries.iter().find(|e| e.name == name)
    }
}

/// Probe every hypothesis on the sampled sizes.
pub fn validate_kernel_set(ks: &KernelSet, plan: &SamplePlan) -> ValidationReport {
    let mut rep = ValidationReport::default();
    let xs = &plan.sizes;

    // a >= 0 and the power lower bound beyond x0
    let neg = xs.iter().map(|&x| (-ks.a.eval(x)).max(0.0)).fold(0.0, f64::max);
    rep.entries.push(CheckEntry::new("a-nonnegative", neg == 0.0, neg, ""));
    let lower = xs
        .iter()
        .filter(|&&x| x >= ks.a.x0)
        .map(|&x| {
            let need = ks.a.a0 * x.powf(ks.a.gamma0);
            ((need - ks.a.eval(x)) / need.max(f64::MIN_POSITIVE)).max(0.0)
        })
        .fold(0.0, f64::max);
    rep.entries.push(CheckEntry::new(
        "a-lower-bound",
        lower <= 1e-12,
        lower,
        format!("a >= {} x^{} for x >= {}", ks.a.a0, ks.a.gamma0, ks.a.x0),
    ));

    // local mass conservation by quadrature
    let mut worst = 0.0f64;
    let mut samples = Vec::with_capacity(xs.len());
    let mut quad_ok = true;
    for &y in xs {
        match daughter_moment_quadrature(&ks.b, 1.0, y) {
            Ok(v) => {
                let res = (v - y).abs();
                worst = worst.max(res / y);
                samples.push((y, res));
            }
            Err(_) => quad_ok = false,
        }
    }
    let mut e = CheckEntry::new(
        "b-mass-conservation",
        quad_ok && worst <= 1e-8,
        worst,
        "relative |int x b dx - y| / y",
    );
    e.samples = samples;
    rep.entries.push(e);

    let b0v = xs
        .iter()
        .map(|&y| {
            let n0 = daughter_moment(&ks.b, 0.0, y).unwrap_or(f64::INFINITY);
            (n0 - ks.b.b0 * (1.0 + y.powf(ks.b.l))).max(0.0)
        })
        .fold(0.0, f64::max);
    rep.entries.push(CheckEntry::new(
        "b-n0-bound",
        b0v <= 1e-12,
        b0v,
        format!("n0 <= {} (1 + y^{})", ks.b.b0, ks.b.l),
    ));

    let m0 = plan.liminf_order;
    let liminf = geomspace(plan.y_probe, 100.0 * plan.y_probe, 16)
        .into_iter()
        .map(|y| moment_deficit(&ks.b, m0, y).map(|v| v / y.powf(m0)).unwrap_or(f64::NEG_INFINITY))
        .fold(f64::INFINITY, f64::min);
    rep.entries.push(CheckEntry::new(
        "b-liminf",
        liminf >= plan.liminf_threshold,
        liminf,
        format!("min N_{m0}(y)/y^{m0} over [{}, {}]", plan.y_probe, 100.0 * plan.y_probe),
    ));

    // growth
    match ks.r.origin_class() {
        None => rep
            .entries
            .push(CheckEntry::new("r-positive", true, 0.0, "no growth term")),
        Some(class) => {
            let minr = xs.iter().map(|&x| ks.r.eval(x)).fold(f64::INFINITY, f64::min);
            rep.entries.push(CheckEntry::new("r-positive", minr > 0.0, minr, ""));
            let over = xs
                .iter()
                .map(|&x| (ks.r.eval(x) - (ks.r.r0 + ks.r.r1 * x)).max(0.0) / (1.0 + x))
                .fold(0.0, f64::max);
            rep.entries.push(CheckEntry::new(
                "r-affine-bound",
                over <= 1e-12,
                over,
                format!("r <= {} + {} x, rtilde = {}", ks.r.r0, ks.r.r1, ks.r.rtilde()),
            ));
            let numeric = classify_origin_numeric(&ks.r);
            rep.entries.push(CheckEntry::new(
                "r-origin-class",
                numeric == Some(class),
                0.0,
                format!("declared {class:?}, numeric {numeric:?}"),
            ));
        }
    }

    // coagulation
    let mut asym = 0.0f64;
    let mut negk = 0.0f64;
    let mut over = 0.0f64;
    for &x in xs.iter().step_by(3) {
        for &y in xs.iter().step_by(3) {
            let kxy = ks.k.eval(x, y);
            asym = asym.max((kxy - ks.k.eval(y, x)).abs());
            negk = negk.max(-kxy);
            let bound = ks.k.class_bound(x, y);
            over = over.max((kxy - bound) / bound.max(f64::MIN_POSITIVE));
        }
    }
    rep.entries.push(CheckEntry::new(
        "k-symmetric-nonnegative",
        asym <= 1e-12 && negk <= 0.0,
        asym.max(negk),
        "",
    ));
    rep.entries.push(CheckEntry::new(
        "k-class-bound",
        over <= 1e-12,
        over.max(0.0),
        format!("{:?} class with k0 = {}, alpha = {}", ks.k.class, ks.k.k0, ks.k.alpha),
    ));

    let alpha = ks.alpha();
    rep.entries.push(CheckEntry::new(
        "alpha-below-gamma0",
        alpha > 0.0 && alpha < ks.a.gamma0,
        alpha,
        format!("0 < alpha = {alpha} < gamma0 = {}", ks.a.gamma0),
    ));
    rep.entries.push(CheckEntry::new(
        "beta-nonnegative",
        ks.beta() >= 0.0,
        ks.beta(),
        "",
    ));

    let lmax = ks.b.l.max(1.0);
    let m = plan.weight_m;
    rep.entries.push(CheckEntry::new(
        "weight-order",
        m > lmax,
        m,
        format!("m = {m} > max(1, l) = {lmax}"),
    ));
    rep.entries.push(CheckEntry::new(
        "weight-order-coagulation",
        ks.k.is_zero() || m > alpha + lmax,
        m,
        format!("m = {m} > alpha + max(1, l) = {}", alpha + lmax),
    ));
    rep
}

/// Decide reachability from the decay of `int_eps^1 dx / r` over shrinking `eps`.
pub fn classify_origin_numeric(r: &GrowthRate) -> Option<OriginClass> {
    if r.is_none() {
        return None;
    }
    let eps: Vec<f64> = (1..=12).map(|k| 10f64.powi(-k)).collect();
    let mut incs = Vec::new();
    for w in eps.windows(2) {
        let v = integrate(|x| 1.0 / r.eval(x), w[1], w[0]).ok()?;
        incs.push(v.max(f64::MIN_POSITIVE).log10());
    }
    // slope of log10(increment) per decade
    let n = incs.len() as f64;
    let mx = (n - 1.0) / 2.0;
    let my = incs.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, v) in incs.iter().enumerate() {
        sxy += (i as f64 - mx) * (v - my);
        sxx += (i as f64 - mx).powi(2);
    }
    Some(if sxy / sxx < -0.05 {
        OriginClass::Reachable
    } else {
        OriginClass::Unreachable
    })
}

/// Diagnostic `(y_m, c_m)`: first sampled `y` from which `n_m(y)/y^m` stays
/// below one, and the supremum of the ratio from there on.
pub fn daughter_ratio_onset(b: &DaughterDistribution, m: f64, ys: &[f64]) -> Option<(f64, f64)> {
    let ratios: Vec<f64> = ys
        .iter()
        .map(|&y| daughter_moment(b, m, y).map(|v| v / y.powf(m)).unwrap_or(f64::INFINITY))
        .collect();
    let start = (0..ratios.len()).find(|&i| ratios[i..].iter().all(|&v| v < 1.0))?;
    let sup = ratios[start..].iter().copied().fold(0.0, f64::max);
    Some((ys[start], sup))
}
