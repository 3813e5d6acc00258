//! Truncated size axis, cell-averaged densities and weighted norms.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::quadrature::{FixedRule, Neumaier};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Spacing {
    Geometric,
    Uniform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SizeGrid {
    pub xmin: f64,
    pub xmax: f64,
    pub edges: Vec<f64>,
    pub centers: Vec<f64>,
    pub widths: Vec<f64>,
    pub spacing: Spacing,
    /// Edge ratio for geometric grids, edge step for uniform ones.
    pub step: f64,
}

impl SizeGrid {
    /// Geometric partition of `[xmin, xmax]`; centers are geometric means of
    /// the cell edges.
    pub fn geometric(xmin: f64, xmax: f64, cells: usize) -> Result<Self> {
        if !(xmin > 0.0 && xmax > xmin && cells >= 2) {
            return Err(Error::Config(format!(
                "geometric grid needs 0 < xmin < xmax and cells >= 2 (xmin = {xmin}, xmax = {xmax}, cells = {cells})"
            )));
        }
        let lr = (xmax / xmin).ln() / cells as f64;
        let mut edges: Vec<f64> = (0..=cells).map(|i| xmin * (lr * i as f64).exp()).collect();
        edges[cells] = xmax;
        let centers = edges.windows(2).map(|w| (w[0] * w[1]).sqrt()).collect();
        let widths = edges.windows(2).map(|w| w[1] - w[0]).collect();
        Ok(Self {
            xmin,
            xmax,
            edges,
            centers,
            widths,
            spacing: Spacing::Geometric,
            step: lr.exp(),
        })
    }

    pub fn uniform(xmin: f64, xmax: f64, cells: usize) -> Result<Self> {
        if !(xmin >= 0.0 && xmax > xmin && cells >= 2) {
            return Err(Error::Config(format!(
                "uniform grid needs 0 <= xmin < xmax and cells >= 2 (xmin = {xmin}, xmax = {xmax}, cells = {cells})"
            )));
        }
        let h = (xmax - xmin) / cells as f64;
        let mut edges: Vec<f64> = (0..=cells).map(|i| xmin + h * i as f64).collect();
        edges[cells] = xmax;
        let centers = edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        let widths = edges.windows(2).map(|w| w[1] - w[0]).collect();
        Ok(Self {
            xmin,
            xmax,
            edges,
            centers,
            widths,
            spacing: Spacing::Uniform,
            step: h,
        })
    }

    pub fn new(spacing: Spacing, xmin: f64, xmax: f64, cells: usize) -> Result<Self> {
        match spacing {
            Spacing::Geometric => Self::geometric(xmin, xmax, cells),
            Spacing::Uniform => Self::uniform(xmin, xmax, cells),
        }
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn max_width(&self) -> f64 {
        self.widths.iter().copied().fold(0.0, f64::max)
    }

    /// Index of the cell containing `x`, if any.
    pub fn locate(&self, x: f64) -> Option<usize> {
        if x < self.xmin || x > self.xmax {
            return None;
        }
        Some(self.edges.partition_point(|&e| e <= x).saturating_sub(1).min(self.len() - 1))
    }

    /// Structural invariants: increasing edges, positive widths, centers inside
    /// cells and a constant step.
    pub fn check(&self) -> bool {
        let inc = self.edges.windows(2).all(|w| w[1] > w[0]);
        let inside = self
            .centers
            .iter()
            .enumerate()
            .all(|(i, &c)| c > self.edges[i] && c < self.edges[i + 1]);
        let steady = self.edges.windows(2).all(|w| {
            let s = match self.spacing {
                Spacing::Geometric => w[1] / w[0],
                Spacing::Uniform => w[1] - w[0],
            };
            (s - self.step).abs() <= 1e-12 * self.step.abs().max(1.0)
        });
        inc && inside && steady && self.widths.iter().all(|&w| w > 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    pub grid: Arc<SizeGrid>,
    pub values: Vec<f64>,
    pub escaped_mass: f64,
}

impl DensityField {
    pub fn zeros(grid: Arc<SizeGrid>) -> Self {
        let n = grid.len();
        Self {
            grid,
            values: vec![0.0; n],
            escaped_mass: 0.0,
        }
    }

    pub fn from_values(grid: Arc<SizeGrid>, values: Vec<f64>) -> Self {
        assert_eq!(grid.len(), values.len(), "field length must match grid");
        Self {
            grid,
            values,
            escaped_mass: 0.0,
        }
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite()) && self.escaped_mass.is_finite()
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= c);
        out.escaped_mass *= c;
        out
    }

    pub fn moment(&self, m: f64) -> f64 {
        weighted_integral(self, WeightSpec::pure(m))
    }

    /// `||f||_{[0,m]}` with absolute values.
    pub fn norm0m(&self, m: f64) -> f64 {
        weighted_norm(self, WeightSpec::shifted(m))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightForm {
    /// `x^m`
    Pure,
    /// `1 + x^m`
    Shifted,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightSpec {
    pub order: f64,
    pub form: WeightForm,
}

impl WeightSpec {
    pub fn pure(order: f64) -> Self {
        Self {
            order,
            form: WeightForm::Pure,
        }
    }

    pub fn shifted(order: f64) -> Self {
        Self {
            order,
            form: WeightForm::Shifted,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let p = if self.order == 0.0 { 1.0 } else { x.powf(self.order) };
        match self.form {
            WeightForm::Pure => p,
            WeightForm::Shifted => 1.0 + p,
        }
    }
}

/// Midpoint-rule `sum f_i w(x_i) dx_i` with compensated summation.
pub fn weighted_integral(f: &DensityField, w: WeightSpec) -> f64 {
    let g = &f.grid;
    let mut acc = Neumaier::default();
    for i in 0..g.len() {
        acc.add(f.values[i] * w.eval(g.centers[i]) * g.widths[i]);
    }
    acc.sum()
}

/// As [`weighted_integral`] on `|f|`.
pub fn weighted_norm(f: &DensityField, w: WeightSpec) -> f64 {
    let g = &f.grid;
    let mut acc = Neumaier::default();
    for i in 0..g.len() {
        acc.add(f.values[i].abs() * w.eval(g.centers[i]) * g.widths[i]);
    }
    acc.sum()
}

/// Weighted norm of an arbitrary value vector on `grid`.
pub fn weighted_norm_values(grid: &SizeGrid, values: &[f64], w: WeightSpec) -> f64 {
    let mut acc = Neumaier::default();
    for i in 0..grid.len() {
        acc.add(values[i].abs() * w.eval(grid.centers[i]) * grid.widths[i]);
    }
    acc.sum()
}

/// Cell averages of `g` by 5-point Gauss-Legendre per cell.
pub fn project<G: Fn(f64) -> f64>(g: G, grid: &Arc<SizeGrid>) -> Result<DensityField> {
    let rule = FixedRule::new(5);
    let mut values = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let (a, b) = (grid.edges[i], grid.edges[i + 1]);
        let mut s = 0.0;
        for (x, w) in rule.mapped(a, b) {
            let v = g(x);
            if v < 0.0 || v.is_nan() {
                return Err(Error::NegativeProjection { x, value: v });
            }
            s += w * v;
        }
        values.push(s / (b - a));
    }
    Ok(DensityField::from_values(grid.clone(), values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fine() -> Arc<SizeGrid> {
        Arc::new(SizeGrid::geometric(1e-4, 40.0, 1024).unwrap())
    }

    #[test]
    fn grids_satisfy_invariants() {
        assert!(SizeGrid::geometric(1e-3, 1e3, 300).unwrap().check());
        assert!(SizeGrid::uniform(0.0, 3.0, 64).unwrap().check());
    }

    #[test]
    fn shifted_first_moment_of_indicator() {
        let g = Arc::new(SizeGrid::uniform(0.0, 4.0, 400).unwrap());
        let f = project(|x| if (1.0..=2.0).contains(&x) { 1.0 } else { 0.0 }, &g).unwrap();
        let v = weighted_integral(&f, WeightSpec::shifted(1.0));
        assert!((v - 2.5).abs() < 1e-12, "{v}");
    }

    #[test]
    fn zero_field() {
        let f = DensityField::zeros(fine());
        assert_eq!(weighted_integral(&f, WeightSpec::shifted(2.0)), 0.0);
    }

    #[test]
    fn projected_first_moment_of_exponential() {
        let g = fine();
        let f = project(|x| (-x).exp(), &g).unwrap();
        let (a, b) = (g.xmin, g.xmax);
        let exact = (1.0 + a) * (-a).exp() - (1.0 + b) * (-b).exp();
        let m1 = f.moment(1.0);
        assert!((m1 - exact).abs() / exact < 1e-3, "{m1} vs {exact}");
    }

    #[test]
    fn single_cell_indicator() {
        let g = Arc::new(SizeGrid::geometric(0.1, 10.0, 16).unwrap());
        let (lo, hi) = (g.edges[5], g.edges[6]);
        let f = project(|x| if x >= lo && x <= hi { 1.0 } else { 0.0 }, &g).unwrap();
        for (i, v) in f.values.iter().enumerate() {
            assert_eq!(*v, if i == 5 { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn negative_projection_rejected() {
        let g = fine();
        assert!(matches!(project(|x| x - 1.0, &g), Err(Error::NegativeProjection { .. })));
    }

    #[test]
    fn normalized_zeroth_moment() {
        let g = fine();
        let f = project(|x| (-x).exp(), &g).unwrap();
        let f = f.scaled(1.0 / f.moment(0.0));
        assert!((weighted_integral(&f, WeightSpec::pure(0.0)) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn refinement_is_second_order() {
        let g = |x: f64| x * (-x).exp();
        let exact = |a: f64, b: f64| {
            // int x^2 e^{-x}
            let p = |x: f64| -(x * x + 2.0 * x + 2.0) * (-x).exp();
            p(b) - p(a)
        };
        let mut errs = Vec::new();
        for n in [64, 128, 256] {
            let grid = Arc::new(SizeGrid::uniform(0.0, 10.0, n).unwrap());
            // point samples at centers isolate the midpoint-rule error
            let vals = grid.centers.iter().map(|&x| g(x)).collect();
            let f = DensityField::from_values(grid, vals);
            errs.push((f.moment(1.0) - exact(0.0, 10.0)).abs());
        }
        assert!(errs[0] / errs[1] > 3.5 && errs[1] / errs[2] > 3.5, "{errs:?}");
    }

    proptest! {
        #[test]
        fn linear_and_monotone(
            a in proptest::collection::vec(0.0f64..5.0, 32),
            b in proptest::collection::vec(0.0f64..5.0, 32),
            c in -3.0f64..3.0,
            m in 0.0f64..4.0,
        ) {
            let g = Arc::new(SizeGrid::geometric(0.01, 100.0, 32).unwrap());
            let w = WeightSpec::shifted(m);
            let fa = DensityField::from_values(g.clone(), a.clone());
            let fb = DensityField::from_values(g.clone(), b.clone());
            let comb: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + c * y).collect();
            let fc = DensityField::from_values(g.clone(), comb);
            let lhs = weighted_integral(&fc, w);
            let rhs = weighted_integral(&fa, w) + c * weighted_integral(&fb, w);
            prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
            let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
            let fs = DensityField::from_values(g, sum);
            prop_assert!(weighted_integral(&fs, w) >= weighted_integral(&fa, w));
        }

        #[test]
        fn higher_moments_smaller_on_unit_support(
            vals in proptest::collection::vec(0.0f64..5.0, 24),
            m1 in 0.0f64..3.0,
            dm in 0.0f64..3.0,
        ) {
            let g = Arc::new(SizeGrid::geometric(1e-3, 1.0, 24).unwrap());
            let f = DensityField::from_values(g, vals);
            let lo = weighted_integral(&f, WeightSpec::pure(m1));
            let hi = weighted_integral(&f, WeightSpec::pure(m1 + dm));
            prop_assert!(hi <= lo * (1.0 + 1e-14) + 1e-300);
        }
    }
}
