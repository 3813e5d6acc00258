//! Pair-based mass-conserving coagulation operator and its moment identities.

use std::sync::Arc;

use rayon::prelude::*;

use crate::fragmentation::IdentityReport;
use crate::grid::{DensityField, SizeGrid};
use crate::kernels::CoagulationKernel;
use crate::quadrature::compensated_sum;

const CHUNK: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Target {
    /// split between cells `c` and `c + 1` with weight `theta` on `c + 1`
    Split { c: u32, theta: f64 },
    /// beyond the last center but inside `xmax`: mass-exact deposit in the last cell
    Top,
    /// past `xmax`
    Overflow,
}

#[derive(Debug, Clone)]
pub struct CoagTables {
    pub grid: Arc<SizeGrid>,
    n: usize,
    /// `k(x_i, x_j)`, row-major
    k: Vec<f64>,
    /// targets for `i <= j`, packed by row
    targets: Vec<Target>,
    row_start: Vec<usize>,
}

impl CoagTables {
    pub fn new(kernel: &CoagulationKernel, grid: &Arc<SizeGrid>) -> Self {
        let n = grid.len();
        let x = &grid.centers;
        let mut k = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                k[i * n + j] = kernel.eval(x[i], x[j]);
            }
        }
        let mut targets = Vec::with_capacity(n * (n + 1) / 2);
        let mut row_start = Vec::with_capacity(n);
        for i in 0..n {
            row_start.push(targets.len());
            for j in i..n {
                let s = x[i] + x[j];
                let t = if s > grid.xmax {
                    Target::Overflow
                } else if s >= x[n - 1] {
                    Target::Top
                } else {
                    let c = x.partition_point(|&v| v <= s) - 1;
                    Target::Split {
                        c: c as u32,
                        theta: (s - x[c]) / (x[c + 1] - x[c]),
                    }
                };
                targets.push(t);
            }
        }
        Self {
            grid: grid.clone(),
            n,
            k,
            targets,
            row_start,
        }
    }

    pub fn kernel(&self, i: usize, j: usize) -> f64 {
        self.k[i * self.n + j]
    }

    /// Mass-placement check: every split target reproduces `x_i + x_j`.
    pub fn max_placement_error(&self) -> f64 {
        let x = &self.grid.centers;
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for j in i..self.n {
                if let Target::Split { c, theta } = self.targets[self.row_start[i] + j - i] {
                    let c = c as usize;
                    let placed = (1.0 - theta) * x[c] + theta * x[c + 1];
                    let s = x[i] + x[j];
                    worst = worst.max((placed - s).abs() / s);
                }
            }
        }
        worst
    }
}

/// Gain density, loss rate `S_i = sum_j k_ij f_j dx_j`, and the mass rate
/// routed past `xmax`.
#[derive(Debug, Clone)]
pub struct CoagParts {
    pub gain: Vec<f64>,
    pub loss_rate: Vec<f64>,
    pub overflow_mass: f64,
}

pub fn coag_parts(f: &DensityField, ct: &CoagTables) -> CoagParts {
    let n = ct.n;
    let x = &ct.grid.centers;
    let dx = &ct.grid.widths;
    let fd: Vec<f64> = f.values.iter().zip(dx).map(|(v, d)| v * d).collect();
    let loss_rate: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let row = &ct.k[i * n..(i + 1) * n];
            let mut s = 0.0;
            for j in 0..n {
                s += row[j] * fd[j];
            }
            s
        })
        .collect();
    // number rates deposited per cell, accumulated per fixed chunk of rows
    let partials: Vec<(Vec<f64>, f64)> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|ch| {
            let mut dep = vec![0.0; n];
            let mut over = 0.0;
            for i in ch * CHUNK..((ch + 1) * CHUNK).min(n) {
                if fd[i] == 0.0 {
                    continue;
                }
                let base = ct.row_start[i];
                for j in i..n {
                    let mut rate = ct.k[i * n + j] * fd[i] * fd[j];
                    if rate == 0.0 {
                        continue;
                    }
                    if i == j {
                        rate *= 0.5;
                    }
                    match ct.targets[base + j - i] {
                        Target::Split { c, theta } => {
                            let c = c as usize;
                            dep[c] += (1.0 - theta) * rate;
                            dep[c + 1] += theta * rate;
                        }
                        Target::Top => dep[n - 1] += rate * (x[i] + x[j]) / x[n - 1],
                        Target::Overflow => over += rate * (x[i] + x[j]),
                    }
                }
            }
            (dep, over)
        })
        .collect();
    let mut gain = vec![0.0; n];
    let mut overflow_mass = 0.0;
    for (dep, over) in partials {
        for (g, d) in gain.iter_mut().zip(dep) {
            *g += d;
        }
        overflow_mass += over;
    }
    for (g, d) in gain.iter_mut().zip(dx) {
        *g /= d;
    }
    CoagParts {
        gain,
        loss_rate,
        overflow_mass,
    }
}

/// `K f`; `escaped_mass` of the result carries the overflow mass rate.
pub fn apply_coag(f: &DensityField, ct: &CoagTables) -> DensityField {
    let p = coag_parts(f, ct);
    let values = (0..ct.n).map(|i| p.gain[i] - f.values[i] * p.loss_rate[i]).collect();
    DensityField {
        grid: f.grid.clone(),
        values,
        escaped_mass: p.overflow_mass,
    }
}

/// `K_beta f = beta (1 + x^alpha) f + K f`.
pub fn apply_coag_beta(f: &DensityField, ct: &CoagTables, beta: f64, alpha: f64) -> DensityField {
    let mut out = apply_coag(f, ct);
    if beta != 0.0 {
        for (i, v) in out.values.iter_mut().enumerate() {
            *v += beta * (1.0 + ct.grid.centers[i].powf(alpha)) * f.values[i];
        }
    }
    out
}

/// Compare `sum x^i (K f) dx` (with pairs routed past `xmax` counted at their
/// true size) against `1/2 sum sum ((x+y)^i - x^i - y^i) k f f dx dy`.
pub fn coag_moment_identity(f: &DensityField, i: f64, ct: &CoagTables) -> IdentityReport {
    let n = ct.n;
    let x = &ct.grid.centers;
    let dx = &ct.grid.widths;
    let kf = apply_coag(f, ct);
    let mut over = Vec::new();
    let mut terms = Vec::with_capacity(n * n);
    let mut gross = Vec::with_capacity(n * n);
    for a in 0..n {
        for b in 0..n {
            let rate = 0.5 * ct.kernel(a, b) * f.values[a] * f.values[b] * dx[a] * dx[b];
            let s = x[a] + x[b];
            terms.push((s.powf(i) - x[a].powf(i) - x[b].powf(i)) * rate);
            gross.push((s.powf(i) + x[a].powf(i) + x[b].powf(i)) * rate.abs());
            if s > ct.grid.xmax {
                over.push(s.powf(i) * rate);
            }
        }
    }
    let lhs = compensated_sum((0..n).map(|k| x[k].powf(i) * kf.values[k] * dx[k]).chain(over));
    let rhs = compensated_sum(terms);
    let scale = lhs.abs().max(rhs.abs()).max(compensated_sum(gross));
    IdentityReport {
        order: i,
        lhs,
        rhs,
        rel_discrepancy: if scale == 0.0 { 0.0 } else { (lhs - rhs).abs() / scale },
        upper: None,
        upper_holds: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::project;
    use proptest::prelude::*;

    fn uniform(n: usize, xmax: f64) -> Arc<SizeGrid> {
        Arc::new(SizeGrid::uniform(0.0, xmax, n).unwrap())
    }

    #[test]
    fn zero_field() {
        let g = uniform(32, 4.0);
        let ct = CoagTables::new(&CoagulationKernel::constant(2.0, 0.5), &g);
        let out = apply_coag(&DensityField::zeros(g), &ct);
        assert!(out.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn placement_is_mass_exact() {
        let g = Arc::new(SizeGrid::geometric(1e-3, 100.0, 128).unwrap());
        let ct = CoagTables::new(&CoagulationKernel::sum_power(0.5, 0.5), &g);
        assert!(ct.max_placement_error() < 1e-14);
    }

    #[test]
    fn indicator_closed_form() {
        let g = uniform(1000, 4.0);
        let ct = CoagTables::new(&CoagulationKernel::constant(2.0, 0.5), &g);
        let f = project(|x| if x <= 1.0 { 1.0 } else { 0.0 }, &g).unwrap();
        let out = apply_coag(&f, &ct);
        let h = g.max_width();
        for (i, &x) in g.centers.iter().enumerate() {
            let expect = if x < 1.0 {
                x - 2.0
            } else if x < 2.0 {
                2.0 - x
            } else {
                0.0
            };
            if (x - 1.0).abs() > 2.0 * h && (x - 2.0).abs() > 2.0 * h {
                assert!((out.values[i] - expect).abs() < 4.0 * h, "x = {x}: {} vs {expect}", out.values[i]);
            }
        }
    }

    #[test]
    fn moment_identities() {
        let g = Arc::new(SizeGrid::geometric(1e-3, 200.0, 128).unwrap());
        let ct = CoagTables::new(&CoagulationKernel::constant(1.0, 0.5), &g);
        let mut f = project(|x| (-x).exp(), &g).unwrap();
        let m0 = f.moment(0.0);
        f = f.scaled(1.0 / m0);
        let r0 = coag_moment_identity(&f, 0.0, &ct);
        assert!((r0.rhs + 0.5).abs() < 1e-12, "{}", r0.rhs);
        assert!(r0.rel_discrepancy < 1e-12);
        let r1 = coag_moment_identity(&f, 1.0, &ct);
        assert!(r1.lhs.abs() < 1e-14 && r1.rhs.abs() < 1e-14);
        let r2 = coag_moment_identity(&f, 2.0, &ct);
        let m1 = f.moment(1.0);
        assert!((r2.rhs - m1 * m1).abs() < 1e-12 * m1 * m1);
    }

    #[test]
    fn beta_zero_matches_plain() {
        let g = Arc::new(SizeGrid::geometric(1e-3, 20.0, 48).unwrap());
        let ct = CoagTables::new(&CoagulationKernel::sum_power(1.0, 0.5), &g);
        let f = project(|x| x * (-x).exp(), &g).unwrap();
        assert_eq!(apply_coag_beta(&f, &ct, 0.0, 0.5).values, apply_coag(&f, &ct).values);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn mass_neutral_and_quadratic(vals in proptest::collection::vec(0.0f64..2.0, 40), c in 0.1f64..3.0) {
            let g = Arc::new(SizeGrid::geometric(1e-2, 30.0, 40).unwrap());
            let ct = CoagTables::new(&CoagulationKernel::product(0.7, 0.4), &g);
            let f = DensityField::from_values(g.clone(), vals);
            let out = apply_coag(&f, &ct);
            let m1 = compensated_sum((0..g.len()).map(|i| g.centers[i] * out.values[i] * g.widths[i]));
            let gross: f64 = (0..g.len()).map(|i| g.centers[i] * f.values[i] * g.widths[i]).sum::<f64>().powi(2) + 1e-300;
            prop_assert!((m1 + out.escaped_mass).abs() <= 1e-12 * gross * 10.0);
            let scaled = apply_coag(&f.scaled(c), &ct);
            for (a, b) in scaled.values.iter().zip(&out.values) {
                prop_assert!((a - c * c * b).abs() <= 1e-12 * (a.abs() + 1e-12));
            }
        }

        #[test]
        fn bilinear_cross_terms(u in proptest::collection::vec(0.0f64..1.0, 24), v in proptest::collection::vec(0.0f64..1.0, 24)) {
            let g = Arc::new(SizeGrid::geometric(1e-2, 30.0, 24).unwrap());
            let ct = CoagTables::new(&CoagulationKernel::sum_power(1.0, 0.5), &g);
            let fu = DensityField::from_values(g.clone(), u);
            let fv = DensityField::from_values(g.clone(), v);
            let sum = DensityField::from_values(g.clone(), fu.values.iter().zip(&fv.values).map(|(a, b)| a + b).collect());
            let diff = DensityField::from_values(g.clone(), fu.values.iter().zip(&fv.values).map(|(a, b)| a - b).collect());
            // polarization: K(u+v) + K(u-v) = 2K(u) + 2K(v)
            let ks = apply_coag(&sum, &ct);
            let kd = apply_coag(&diff, &ct);
            let ku = apply_coag(&fu, &ct);
            let kv = apply_coag(&fv, &ct);
            for i in 0..g.len() {
                let lhs = ks.values[i] + kd.values[i];
                let rhs = 2.0 * ku.values[i] + 2.0 * kv.values[i];
                prop_assert!((lhs - rhs).abs() <= 1e-10 * (lhs.abs() + rhs.abs() + 1e-12));
            }
        }

        #[test]
        fn loss_rate_bound(vals in proptest::collection::vec(0.0f64..2.0, 40)) {
            let g = Arc::new(SizeGrid::geometric(1e-2, 30.0, 40).unwrap());
            let k = CoagulationKernel::product(0.7, 0.4);
            let ct = CoagTables::new(&k, &g);
            let f = DensityField::from_values(g.clone(), vals);
            let p = coag_parts(&f, &ct);
            for i in 0..g.len() {
                let bound = 2.0 * k.k0 * (1.0 + g.centers[i].powf(k.alpha)) * f.norm0m(k.alpha.max(1.0));
                prop_assert!(p.loss_rate[i] <= bound * (1.0 + 1e-12));
            }
        }
    }
}
