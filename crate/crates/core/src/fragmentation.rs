//! Conservative sectional fragmentation: daughter matrix, the operator
//! `F f = -a f + int_x^inf a(y) b(x,y) f(y) dy` and its moment identities.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::Result;
use crate::grid::{DensityField, SizeGrid};
use crate::kernels::{geomspace, moment_deficit, DaughterDistribution, DaughterForm, KernelSet};
use crate::quadrature::{compensated_sum, integrate};

/// `int_0^z h(s) ds` for `b(x,y) = h(x/y)/y`.
fn cumulative_number(b: &DaughterDistribution, z: f64) -> Result<f64> {
    let z = z.clamp(0.0, 1.0);
    Ok(match &b.form {
        DaughterForm::UniformBinary => 2.0 * z,
        DaughterForm::PowerLaw { nu } => (nu + 2.0) / (nu + 1.0) * z.powf(nu + 1.0),
        DaughterForm::Monomial { coef, nu } => coef / (nu + 1.0) * z.powf(nu + 1.0),
        DaughterForm::Table { profile, scale } => scale * integrate(|s| profile.eval(s), 0.0, z)?,
    })
}

/// `int_0^z s h(s) ds`.
fn cumulative_mass(b: &DaughterDistribution, z: f64) -> Result<f64> {
    let z = z.clamp(0.0, 1.0);
    Ok(match &b.form {
        DaughterForm::UniformBinary => z * z,
        DaughterForm::PowerLaw { nu } => z.powf(nu + 2.0),
        DaughterForm::Monomial { coef, nu } => coef / (nu + 2.0) * z.powf(nu + 2.0),
        DaughterForm::Table { profile, scale } => scale * integrate(|s| s * profile.eval(s), 0.0, z)?,
    })
}

/// Upper-triangular matrix `w[i][j]`: number of daughters landing in cell
/// `i` per fragmenting parent of size `x_j`.
#[derive(Debug, Clone)]
pub struct DaughterMatrix {
    pub grid: Arc<SizeGrid>,
    n: usize,
    /// row-major, `w[i * n + j]`, zero for `i > j`
    w: Vec<f64>,
    /// column scale applied to restore `sum_i x_i w_ij = x_j`
    pub scale: Vec<f64>,
    /// share of the parent mass falling below `xmin`, lumped into cell 0
    pub lumped_fraction: Vec<f64>,
    /// columns whose raw daughter mass vanished on the grid
    pub flagged: Vec<bool>,
}

impl DaughterMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.w[i * self.n + j]
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// `sum_i x_i^m w_ij`
    pub fn column_moment(&self, j: usize, m: f64) -> f64 {
        let x = &self.grid.centers;
        compensated_sum((0..=j).map(|i| x[i].powf(m) * self.get(i, j)))
    }

    /// Largest relative column mass defect `|sum_i x_i w_ij - x_j| / x_j`.
    pub fn mass_defect(&self) -> f64 {
        let x = &self.grid.centers;
        (0..self.n)
            .map(|j| {
                let s: f64 = (0..=j).map(|i| x[i] * self.get(i, j)).sum();
                (s - x[j]).abs() / x[j]
            })
            .fold(0.0, f64::max)
    }

    /// Gain density `(D l)_i = sum_j w_ij l_j dx_j / dx_i` for a lost density `l`.
    pub fn redistribute(&self, lost: &[f64]) -> Vec<f64> {
        let dx = &self.grid.widths;
        let n = self.n;
        let src: Vec<f64> = lost.iter().zip(dx).map(|(l, d)| l * d).collect();
        (0..n)
            .into_par_iter()
            .map(|i| {
                let row = &self.w[i * n..(i + 1) * n];
                let mut s = 0.0;
                for j in i..n {
                    s += row[j] * src[j];
                }
                s / dx[i]
            })
            .collect()
    }
}

pub fn build_daughter_matrix(b: &DaughterDistribution, grid: &Arc<SizeGrid>) -> Result<DaughterMatrix> {
    let n = grid.len();
    let x = &grid.centers;
    let e = &grid.edges;
    let mut w = vec![0.0; n * n];
    let mut scale = vec![1.0; n];
    let mut lumped_fraction = vec![0.0; n];
    let mut flagged = vec![false; n];
    for j in 0..n {
        let y = x[j];
        for i in 0..=j {
            let hi = if i == j { y } else { e[i + 1] };
            w[i * n + j] = cumulative_number(b, hi / y)? - cumulative_number(b, e[i] / y)?;
        }
        let below = y * cumulative_mass(b, e[0] / y)?;
        w[j] += below / x[0];
        lumped_fraction[j] = below / y;
        let mass = compensated_sum((0..=j).map(|i| x[i] * w[i * n + j]));
        if mass > 0.0 {
            let s = y / mass;
            scale[j] = s;
            for i in 0..=j {
                w[i * n + j] *= s;
            }
        } else {
            flagged[j] = true;
            for i in 0..=j {
                w[i * n + j] = 0.0;
            }
            w[j] = y / x[0];
            lumped_fraction[j] = 1.0;
        }
    }
    Ok(DaughterMatrix {
        grid: grid.clone(),
        n,
        w,
        scale,
        lumped_fraction,
        flagged,
    })
}

/// `F f = -a f + D(a f)`.
pub fn apply_frag(f: &DensityField, ks: &KernelSet, dm: &DaughterMatrix) -> DensityField {
    let x = &f.grid.centers;
    let af: Vec<f64> = f.values.iter().zip(x).map(|(v, &xi)| ks.a.eval(xi) * v).collect();
    let gain = dm.redistribute(&af);
    let values = gain.iter().zip(&af).map(|(g, l)| g - l).collect();
    DensityField::from_values(f.grid.clone(), values)
}

/// `(delta'_i, delta_i, nu_i)` of the fragmentation moment estimate
/// `int x^i F f <= -delta_i ||f||_[i+gamma0] + nu_i ||f||_[i]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FragConstants {
    pub delta_prime: f64,
    pub delta: f64,
    pub nu: f64,
}

pub fn frag_constants(ks: &KernelSet, i: f64, dm: Option<&DaughterMatrix>) -> Result<FragConstants> {
    let a = &ks.a;
    let x0 = a.x0;
    let mut dp = f64::INFINITY;
    for y in geomspace(x0.max(1e-12), x0.max(1e-12) * 1e4, 64) {
        dp = dp.min(moment_deficit(&ks.b, i, y)? / y.powf(i));
    }
    if let Some(dm) = dm {
        let xs = &dm.grid.centers;
        for j in 0..dm.len() {
            if xs[j] >= x0 {
                dp = dp.min((xs[j].powf(i) - dm.column_moment(j, i)) / xs[j].powf(i));
            }
        }
    }
    let delta = dp * a.a0;
    let nu = delta * a.sup_below(x0).max(x0.powf(a.gamma0));
    Ok(FragConstants {
        delta_prime: dp,
        delta,
        nu,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentityReport {
    pub order: f64,
    /// `sum x^i (op f) dx`
    pub lhs: f64,
    /// the moment-identity right-hand side, discretized consistently
    pub rhs: f64,
    pub rel_discrepancy: f64,
    /// upper estimate, where one applies
    pub upper: Option<f64>,
    pub upper_holds: Option<bool>,
}

pub fn frag_moment_identity(f: &DensityField, i: f64, ks: &KernelSet, dm: &DaughterMatrix) -> Result<IdentityReport> {
    let g = &f.grid;
    let x = &g.centers;
    let ff = apply_frag(f, ks, dm);
    let lhs = compensated_sum((0..g.len()).map(|k| x[k].powf(i) * ff.values[k] * g.widths[k]));
    let rhs = -compensated_sum((0..g.len()).map(|j| {
        let deficit = x[j].powf(i) - dm.column_moment(j, i);
        deficit * ks.a.eval(x[j]) * f.values[j] * g.widths[j]
    }));
    let gross = compensated_sum((0..g.len()).map(|j| x[j].powf(i) * ks.a.eval(x[j]) * f.values[j].abs() * g.widths[j]));
    let scale = lhs.abs().max(rhs.abs()).max(gross);
    let rel_discrepancy = if scale == 0.0 { 0.0 } else { (lhs - rhs).abs() / scale };
    let (upper, upper_holds) = if i > 1.0 {
        let c = frag_constants(ks, i, Some(dm))?;
        let u = -c.delta * f.moment(i + ks.a.gamma0) + c.nu * f.moment(i);
        (Some(u), Some(lhs <= u + 1e-12 * lhs.abs().max(u.abs())))
    } else {
        (None, None)
    };
    Ok(IdentityReport {
        order: i,
        lhs,
        rhs,
        rel_discrepancy,
        upper,
        upper_holds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::project;
    use crate::kernels::{CoagulationKernel, FragmentationRate, GrowthRate};
    use proptest::prelude::*;

    fn grid(n: usize) -> Arc<SizeGrid> {
        Arc::new(SizeGrid::geometric(1e-4, 60.0, n).unwrap())
    }

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
    fn columns_conserve_mass() {
        for b in [
            DaughterDistribution::uniform_binary(),
            DaughterDistribution::power_law(1.0).unwrap(),
            DaughterDistribution::power_law(2.0).unwrap(),
        ] {
            let dm = build_daughter_matrix(&b, &grid(256)).unwrap();
            assert!(dm.mass_defect() <= 1e-13, "{}", dm.mass_defect());
            assert!(dm.flagged.iter().all(|f| !f));
        }
    }

    #[test]
    fn zeroth_and_second_column_moments() {
        let g = Arc::new(SizeGrid::geometric(1e-4, 60.0, 2048).unwrap());
        let dm = build_daughter_matrix(&DaughterDistribution::uniform_binary(), &g).unwrap();
        let j = g.locate(10.0).unwrap();
        assert!((dm.column_moment(j, 0.0) - 2.0).abs() < 0.02);
        let dm = build_daughter_matrix(&DaughterDistribution::power_law(1.0).unwrap(), &g).unwrap();
        let y = g.centers[j];
        assert!((dm.column_moment(j, 2.0) / (y * y) - 0.75).abs() < 0.0075);
    }

    #[test]
    fn zero_rate_gives_zero() {
        let g = grid(64);
        let ks = KernelSet::new(
            FragmentationRate::zero(1.0),
            DaughterDistribution::uniform_binary(),
            GrowthRate::none(),
            CoagulationKernel::zero(0.5),
            1.0,
        );
        let dm = build_daughter_matrix(&ks.b, &g).unwrap();
        let f = project(|x| (-x).exp(), &g).unwrap();
        assert!(apply_frag(&f, &ks, &dm).values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn indicator_pointwise() {
        let g = Arc::new(SizeGrid::uniform(0.0, 2.0, 2000).unwrap());
        let ks = ab();
        let dm = build_daughter_matrix(&ks.b, &g).unwrap();
        let f = project(|x| if x <= 1.0 { 1.0 } else { 0.0 }, &g).unwrap();
        let out = apply_frag(&f, &ks, &dm);
        let i = g.locate(0.5).unwrap();
        assert!((out.values[i] - 0.5).abs() < 5e-3, "{}", out.values[i]);
    }

    #[test]
    fn moment_identities_on_indicator() {
        let g = Arc::new(SizeGrid::uniform(0.0, 2.0, 2000).unwrap());
        let ks = ab();
        let dm = build_daughter_matrix(&ks.b, &g).unwrap();
        let f = project(|x| if x <= 1.0 { 1.0 } else { 0.0 }, &g).unwrap();
        let r1 = frag_moment_identity(&f, 1.0, &ks, &dm).unwrap();
        assert!(r1.lhs.abs() < 1e-12);
        let r0 = frag_moment_identity(&f, 0.0, &ks, &dm).unwrap();
        assert!((r0.lhs - 0.5).abs() < 5e-3);
        assert!(r0.rel_discrepancy < 1e-12);
        let r2 = frag_moment_identity(&f, 2.0, &ks, &dm).unwrap();
        assert!(r2.lhs < 0.0);
        assert_eq!(r2.upper_holds, Some(true));
    }

    #[test]
    fn delta_for_binary_split() {
        let c = frag_constants(&ab(), 2.0, None).unwrap();
        assert!((c.delta_prime - 1.0 / 3.0).abs() < 1e-12);
        assert!((c.nu - c.delta).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn mass_neutral_and_gain_positive(vals in proptest::collection::vec(0.0f64..5.0, 96), nu in 0.0f64..2.0) {
            let g = Arc::new(SizeGrid::geometric(1e-3, 50.0, 96).unwrap());
            let mut ks = ab();
            ks.b = DaughterDistribution::power_law(nu).unwrap();
            let dm = build_daughter_matrix(&ks.b, &g).unwrap();
            let f = DensityField::from_values(g.clone(), vals);
            let out = apply_frag(&f, &ks, &dm);
            let m1: f64 = compensated_sum((0..g.len()).map(|i| g.centers[i] * out.values[i] * g.widths[i]));
            let scale: f64 = (0..g.len()).map(|i| g.centers[i] * ks.a.eval(g.centers[i]) * f.values[i] * g.widths[i]).sum();
            prop_assert!(m1.abs() <= 1e-12 * scale.max(1e-300));
            let af: Vec<f64> = (0..g.len()).map(|i| ks.a.eval(g.centers[i]) * f.values[i]).collect();
            prop_assert!(dm.redistribute(&af).iter().all(|v| *v >= 0.0));
        }
    }
}
