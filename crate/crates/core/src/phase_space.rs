//! Phase-space grid, the distribution field, and the weighted norms and
//! moments evaluated on it.
//!
//! All quadratures are midpoint sums over cell centres with cell volume
//! `dx * dv^2`. Reductions are computed as one sequential partial sum per
//! x-slice followed by an in-order sum of the partials, so results do not
//! depend on the number of worker threads.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// A real field sampled on the x cell centres.
pub type ScalarField = Vec<f64>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseGrid {
    pub nx: usize,
    pub x_len: f64,
    pub nv: usize,
    pub v_max: f64,
    pub dx: f64,
    pub dv: f64,
}

impl PhaseGrid {
    pub fn new(nx: usize, x_len: f64, nv: usize, v_max: f64) -> Result<Self> {
        if nx == 0 || !nx.is_power_of_two() {
            return Err(Error::InvalidGrid(format!("nx = {nx} must be a power of two")));
        }
        if nv < 2 || !nv.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "nv = {nv} must be a power of two >= 2"
            )));
        }
        if !(x_len.is_finite() && x_len > 0.0) {
            return Err(Error::InvalidGrid(format!("x_len = {x_len} must be positive")));
        }
        if !(v_max.is_finite() && v_max > 0.0) {
            return Err(Error::InvalidGrid(format!("v_max = {v_max} must be positive")));
        }
        Ok(Self {
            nx,
            x_len,
            nv,
            v_max,
            dx: x_len / nx as f64,
            dv: 2.0 * v_max / nv as f64,
        })
    }

    /// Centre of x-cell `i`.
    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.dx
    }

    /// Centre of velocity cell `k` along either axis; symmetric about zero.
    #[inline]
    pub fn v(&self, k: usize) -> f64 {
        -self.v_max + (k as f64 + 0.5) * self.dv
    }

    pub fn velocities(&self) -> Vec<f64> {
        (0..self.nv).map(|k| self.v(k)).collect()
    }

    #[inline]
    pub fn slice_len(&self) -> usize {
        self.nv * self.nv
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nx * self.slice_len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat index of node `(ix, k1, k2)`; `v2` is the fastest axis.
    #[inline]
    pub fn index(&self, ix: usize, k1: usize, k2: usize) -> usize {
        (ix * self.nv + k1) * self.nv + k2
    }

    #[inline]
    pub fn cell_volume(&self) -> f64 {
        self.dx * self.dv * self.dv
    }

    /// Largest speed |v| reachable anywhere inside the velocity box.
    pub fn box_corner_speed(&self) -> f64 {
        self.v_max * std::f64::consts::SQRT_2
    }

    /// Table of `kernel(v1, v2)` over the velocity nodes, laid out like a slice.
    pub fn velocity_table(&self, kernel: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        let vs = self.velocities();
        let mut out = Vec::with_capacity(self.slice_len());
        for &v1 in &vs {
            for &v2 in &vs {
                out.push(kernel(v1, v2));
            }
        }
        out
    }

    pub fn check_same(&self, other: &PhaseGrid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!("{self:?} vs {other:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistField {
    pub grid: PhaseGrid,
    pub values: Vec<f64>,
}

impl DistField {
    pub fn zeros(grid: PhaseGrid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn from_fn(grid: PhaseGrid, f: impl Fn(f64, f64, f64) -> f64) -> Self {
        let mut out = Self::zeros(grid);
        for ix in 0..grid.nx {
            let x = grid.x(ix);
            for k1 in 0..grid.nv {
                let v1 = grid.v(k1);
                for k2 in 0..grid.nv {
                    out.values[grid.index(ix, k1, k2)] = f(x, v1, grid.v(k2));
                }
            }
        }
        out
    }

    #[inline]
    pub fn slice(&self, ix: usize) -> &[f64] {
        let n = self.grid.slice_len();
        &self.values[ix * n..(ix + 1) * n]
    }

    #[inline]
    pub fn slice_mut(&mut self, ix: usize) -> &mut [f64] {
        let n = self.grid.slice_len();
        &mut self.values[ix * n..(ix + 1) * n]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }

    pub fn sub(&self, other: &DistField) -> Self {
        debug_assert_eq!(self.grid, other.grid);
        Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn add(&self, other: &DistField) -> Self {
        debug_assert_eq!(self.grid, other.grid);
        Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    /// Centered periodic x-derivative.
    pub fn dx_centered(&self) -> Self {
        let g = self.grid;
        let n = g.slice_len();
        let mut out = Self::zeros(g);
        let inv = 0.5 / g.dx;
        out.values
            .par_chunks_mut(n)
            .enumerate()
            .for_each(|(ix, dst)| {
                let ip = (ix + 1) % g.nx;
                let im = (ix + g.nx - 1) % g.nx;
                let right = self.slice(ip);
                let left = self.slice(im);
                for k in 0..n {
                    dst[k] = (right[k] - left[k]) * inv;
                }
            });
        out
    }
}

/// Sum of `f(ix)` over x-slices: parallel partials, summed in slice order.
pub fn slice_sum<F>(nx: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let partials: Vec<f64> = (0..nx).into_par_iter().map(f).collect();
    partials.iter().sum()
}

/// Maximum of `f(ix)` over x-slices.
pub fn slice_max<F>(nx: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let partials: Vec<f64> = (0..nx).into_par_iter().map(f).collect();
    partials.iter().copied().fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightSpec {
    /// `v0^gamma` with `v0 = sqrt(1 + |v|^2)`.
    V0Power(f64),
    /// `R(v2)^p` with `R(s) = sqrt(1 + s^2)`.
    RV2Power(f64),
}

impl WeightSpec {
    #[inline]
    pub fn eval(&self, v1: f64, v2: f64) -> f64 {
        match *self {
            WeightSpec::V0Power(gamma) => weight_v0(v1, v2, gamma),
            WeightSpec::RV2Power(p) => (1.0 + v2 * v2).powf(0.5 * p),
        }
    }
}

#[inline]
pub fn weight_v0(v1: f64, v2: f64, gamma: f64) -> f64 {
    (1.0 + v1 * v1 + v2 * v2).powf(0.5 * gamma)
}

/// The exponents `a`, `eps`, `delta` and the quantities derived from them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentSet {
    pub a: f64,
    pub eps: f64,
    pub delta: f64,
}

impl Default for ExponentSet {
    fn default() -> Self {
        Self {
            a: 9.0,
            eps: 0.5,
            delta: 12.0,
        }
    }
}

impl ExponentSet {
    pub fn new(a: f64, eps: f64, delta: f64) -> Result<Self> {
        let set = Self { a, eps, delta };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a.is_finite() && self.a > 8.0) {
            return Err(Error::HypothesisViolation(format!("a > 8 (got a = {})", self.a)));
        }
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return Err(Error::HypothesisViolation(format!(
                "eps > 0 (got eps = {})",
                self.eps
            )));
        }
        let bound = self.alpha();
        if !(self.delta.is_finite() && self.delta > bound) {
            return Err(Error::HypothesisViolation(format!(
                "δ > a+2+ε = {bound} (got δ = {})",
                self.delta
            )));
        }
        Ok(())
    }

    pub fn b(&self) -> f64 {
        self.a - 4.0
    }

    pub fn alpha(&self) -> f64 {
        self.a + 2.0 + self.eps
    }

    pub fn beta(&self) -> f64 {
        self.b() + 2.0 + self.eps
    }
}

fn weighted_sq_sum(f: &DistField, w2: &[f64]) -> f64 {
    let g = f.grid;
    slice_sum(g.nx, |ix| {
        f.slice(ix)
            .iter()
            .zip(w2)
            .map(|(v, w)| w * v * v)
            .sum::<f64>()
    }) * g.cell_volume()
}

/// `( sum w(v)^2 f^2 dx dv^2 )^(1/2)`.
pub fn weighted_l2_norm(f: &DistField, w: WeightSpec) -> f64 {
    let w2 = f.grid.velocity_table(|v1, v2| {
        let x = w.eval(v1, v2);
        x * x
    });
    weighted_sq_sum(f, &w2).sqrt()
}

/// `|| v0^(a/2) f ||_2 + || v0^(b/2) d_x f ||_2`.
pub fn f_norm(f: &DistField, exps: &ExponentSet) -> f64 {
    weighted_l2_norm(f, WeightSpec::V0Power(0.5 * exps.a))
        + weighted_l2_norm(&f.dx_centered(), WeightSpec::V0Power(0.5 * exps.b()))
}

/// Per-x velocity integral `sum kernel(v) f dv^2`. No background subtraction.
pub fn moment_density(f: &DistField, kernel: impl Fn(f64, f64) -> f64) -> ScalarField {
    let g = f.grid;
    let table = g.velocity_table(kernel);
    let dv2 = g.dv * g.dv;
    (0..g.nx)
        .into_par_iter()
        .map(|ix| {
            f.slice(ix)
                .iter()
                .zip(&table)
                .map(|(v, k)| v * k)
                .sum::<f64>()
                * dv2
        })
        .collect()
}

/// `max w(v) |f|` over all nodes.
pub fn sup_norm_weighted(f: &DistField, w: WeightSpec) -> f64 {
    let g = f.grid;
    let table = g.velocity_table(|v1, v2| w.eval(v1, v2));
    slice_max(g.nx, |ix| {
        f.slice(ix)
            .iter()
            .zip(&table)
            .map(|(v, w)| w * v.abs())
            .fold(0.0, f64::max)
    })
}

/// Total mass `sum f dx dv^2`.
pub fn total_mass(f: &DistField) -> f64 {
    slice_sum(f.grid.nx, |ix| f.slice(ix).iter().sum::<f64>()) * f.grid.cell_volume()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid() -> PhaseGrid {
        PhaseGrid::new(8, 2.0, 16, 4.0).unwrap()
    }

    fn maxwellian(x_len: f64) -> impl Fn(f64, f64, f64) -> f64 {
        move |_x, v1, v2| (-(v1 * v1 + v2 * v2) / 2.0).exp() / (2.0 * PI) / x_len
    }

    #[test]
    fn grid_rejects_non_powers_of_two() {
        assert!(PhaseGrid::new(6, 1.0, 16, 4.0).is_err());
        assert!(PhaseGrid::new(8, 1.0, 12, 4.0).is_err());
        assert!(PhaseGrid::new(8, -1.0, 16, 4.0).is_err());
    }

    #[test]
    fn velocity_nodes_are_symmetric() {
        let g = grid();
        for k in 0..g.nv {
            assert_eq!(g.v(k), -g.v(g.nv - 1 - k));
        }
        assert!((g.dx - 0.25).abs() < 1e-15);
        assert!((g.dv - 0.5).abs() < 1e-15);
    }

    #[test]
    fn weight_v0_examples() {
        assert_eq!(weight_v0(0.0, 0.0, 2.0), 1.0);
        assert_eq!(weight_v0(1.0, 0.0, 2.0), 2.0);
        assert!((weight_v0(3.0, 4.0, 1.0) - 26f64.sqrt()).abs() < 1e-14);
        assert!((weight_v0(3.0, 4.0, 1.0) - 5.0990).abs() < 1e-4);
    }

    #[test]
    fn weighted_l2_single_cell() {
        let g = grid();
        let mut f = DistField::zeros(g);
        assert_eq!(weighted_l2_norm(&f, WeightSpec::V0Power(0.0)), 0.0);
        f.values[g.index(3, 5, 9)] = 2.5;
        let got = weighted_l2_norm(&f, WeightSpec::V0Power(0.0));
        assert!((got - 2.5 * g.cell_volume().sqrt()).abs() < 1e-14);
    }

    #[test]
    fn weighted_l2_maxwellian_matches_refined_quadrature() {
        // ||M||_2^2 = x_len * int M^2 dv / x_len^2 = 1/(4 pi x_len) on R^2.
        let x_len = 2.0;
        let exact = (1.0 / (4.0 * PI * x_len)).sqrt();
        let mut prev = f64::NAN;
        for nv in [32usize, 64, 128] {
            let g = PhaseGrid::new(4, x_len, nv, 8.0).unwrap();
            let f = DistField::from_fn(g, maxwellian(x_len));
            let got = weighted_l2_norm(&f, WeightSpec::V0Power(0.0));
            if prev.is_finite() {
                assert!((got - prev).abs() < 1e-8);
            }
            prev = got;
        }
        assert!((prev - exact).abs() < 1e-8);
    }

    #[test]
    fn f_norm_reduces_for_homogeneous_data() {
        let g = grid();
        let exps = ExponentSet::default();
        let f = DistField::from_fn(g, maxwellian(g.x_len));
        assert_eq!(f_norm(&DistField::zeros(g), &exps), 0.0);
        let lhs = f_norm(&f, &exps);
        let rhs = weighted_l2_norm(&f, WeightSpec::V0Power(exps.a / 2.0));
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn f_norm_perturbed_maxwellian_matches_independent_quadrature() {
        // Oracle: direct triple loop with analytic d_x f.
        let x_len = 2.0 * PI;
        let exps = ExponentSet::default();
        let k = 2.0 * PI / x_len;
        let fx = move |x: f64, v1: f64, v2: f64| {
            (1.0 + 0.1 * (k * x).cos()) * (-(v1 * v1 + v2 * v2) / 2.0).exp() / (2.0 * PI)
        };
        let dfx = move |x: f64, v1: f64, v2: f64| {
            -0.1 * k * (k * x).sin() * (-(v1 * v1 + v2 * v2) / 2.0).exp() / (2.0 * PI)
        };
        let oracle = |nx: usize, nv: usize| {
            let g = PhaseGrid::new(nx, x_len, nv, 8.0).unwrap();
            let (mut s1, mut s2) = (0.0, 0.0);
            for i in 0..nx {
                for a in 0..nv {
                    for b in 0..nv {
                        let (x, v1, v2) = (g.x(i), g.v(a), g.v(b));
                        let w = 1.0 + v1 * v1 + v2 * v2;
                        s1 += w.powf(exps.a / 2.0) * fx(x, v1, v2).powi(2);
                        s2 += w.powf(exps.b() / 2.0) * dfx(x, v1, v2).powi(2);
                    }
                }
            }
            let vol = g.cell_volume();
            (s1 * vol).sqrt() + (s2 * vol).sqrt()
        };
        let reference = oracle(64, 128);
        let g = PhaseGrid::new(32, x_len, 64, 8.0).unwrap();
        let got = f_norm(&DistField::from_fn(g, fx), &exps);
        // Centered differences at 32 cells: relative error ~ (k dx)^2 / 6 on the derivative term.
        assert!(((got - reference) / reference).abs() < 2e-3, "{got} vs {reference}");
    }

    #[test]
    fn moment_density_examples() {
        let g = grid();
        let zero = moment_density(&DistField::zeros(g), |_, _| 1.0);
        assert!(zero.iter().all(|&v| v == 0.0));
        let f = DistField::from_fn(g, maxwellian(g.x_len));
        let j1 = moment_density(&f, |v1, _| v1);
        assert!(j1.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn maxwellian_energy_moment_is_twice_density() {
        let g = PhaseGrid::new(4, 1.0, 64, 8.0).unwrap();
        let f = DistField::from_fn(g, |_, v1, v2| (-(v1 * v1 + v2 * v2) / 2.0).exp() / (2.0 * PI));
        let n = moment_density(&f, |_, _| 1.0);
        let e = moment_density(&f, |v1, v2| v1 * v1 + v2 * v2);
        for (n, e) in n.iter().zip(&e) {
            assert!((e - 2.0 * n).abs() < 1e-10);
        }
    }

    #[test]
    fn sup_norm_examples() {
        let g = grid();
        assert_eq!(sup_norm_weighted(&DistField::zeros(g), WeightSpec::V0Power(4.0)), 0.0);
        let f = DistField::from_fn(g, maxwellian(1.0));
        let got = sup_norm_weighted(&f, WeightSpec::V0Power(4.0));
        // Dense radial scan oracle restricted to radii realised by grid nodes.
        let mut best: f64 = 0.0;
        for a in 0..g.nv {
            for b in 0..g.nv {
                let r2 = g.v(a).powi(2) + g.v(b).powi(2);
                best = best.max((1.0 + r2).powi(2) * (-r2 / 2.0).exp() / (2.0 * PI));
            }
        }
        assert!((got - best).abs() < 1e-15);
        // Continuum maximum of (1+r^2)^2 e^{-r^2/2}: at r^2 = 3.
        let cont = 16.0 * (-1.5f64).exp() / (2.0 * PI);
        assert!(got <= cont + 1e-15);
        assert!(got > 0.95 * cont);
    }

    #[test]
    fn exponent_defaults_and_hypotheses() {
        let e = ExponentSet::default();
        assert_eq!((e.b(), e.alpha(), e.beta()), (5.0, 11.5, 7.5));
        assert!(ExponentSet::new(7.0, 0.5, 12.0).is_err());
        assert!(ExponentSet::new(9.0, 0.5, 10.0).is_err());
    }

    #[test]
    fn mass_of_kernel_one_moment_matches_total_mass() {
        let g = grid();
        let f = DistField::from_fn(g, |x, v1, v2| (1.0 + 0.3 * x.sin()) * (-(v1 * v1 + v2 * v2)).exp());
        let n = moment_density(&f, |_, _| 1.0);
        let from_moment: f64 = n.iter().sum::<f64>() * g.dx;
        assert!((from_moment - total_mass(&f)).abs() < 1e-14 * total_mass(&f));
    }
}
