//! Electromagnetic state on the periodic x-grid.
//!
//! `E1` is advanced with `d_t E1 = -j1` and the Gauss constraint is only
//! monitored. `(E2, B)` are advanced along the characteristics `E2 ± B`,
//! which travel exactly one cell per step when `dt == dx`.
//!
//! The discrete antiderivative used for `E1` and for the potential `A` is
//! the trapezoidal prefix sum `F[i+1] - F[i] = dx (g[i] + g[i+1]) / 2`
//! with the additive constant fixed by zero mean. Its exact left inverse
//! is the operator used by [`gauss_residual`].

use crate::error::{Error, Result};
use crate::phase_space::ScalarField;

#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub e1: ScalarField,
    pub e2: ScalarField,
    pub b: ScalarField,
}

impl FieldState {
    pub fn zeros(nx: usize) -> Self {
        Self {
            e1: vec![0.0; nx],
            e2: vec![0.0; nx],
            b: vec![0.0; nx],
        }
    }

    pub fn nx(&self) -> usize {
        self.e1.len()
    }

    pub fn is_finite(&self) -> bool {
        self.e1
            .iter()
            .chain(&self.e2)
            .chain(&self.b)
            .all(|v| v.is_finite())
    }

    /// Pointwise average of two states.
    pub fn midpoint(&self, other: &FieldState) -> FieldState {
        let avg = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect();
        FieldState {
            e1: avg(&self.e1, &other.e1),
            e2: avg(&self.e2, &other.e2),
            b: avg(&self.b, &other.b),
        }
    }

    pub fn sup_e(&self) -> f64 {
        self.e1
            .iter()
            .zip(&self.e2)
            .map(|(a, b)| a.hypot(*b))
            .fold(0.0, f64::max)
    }

    pub fn sup_b(&self) -> f64 {
        self.b.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Fixed neutralizing background charge density.
#[derive(Debug, Clone, PartialEq)]
pub struct Background {
    pub phi: ScalarField,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PotentialA {
    pub a: ScalarField,
}

fn check_zero_sum(g: &[f64], dx: f64, tol: f64) -> std::result::Result<(), f64> {
    let total: f64 = g.iter().sum::<f64>() * dx;
    if total.abs() > tol {
        Err(total)
    } else {
        Ok(())
    }
}

/// Trapezoidal periodic antiderivative with zero mean. Assumes `sum(g) = 0`.
pub fn periodic_antiderivative(g: &[f64], dx: f64) -> ScalarField {
    let n = g.len();
    let mut out = Vec::with_capacity(n);
    let mut acc = 0.0;
    out.push(acc);
    for i in 0..n - 1 {
        acc += 0.5 * dx * (g[i] + g[i + 1]);
        out.push(acc);
    }
    let mean = out.iter().sum::<f64>() / n as f64;
    for v in &mut out {
        *v -= mean;
    }
    out
}

/// `E1` from the charge density, the periodic analogue of integrating
/// `rho` from minus infinity.
pub fn e1_from_density(rho: &[f64], dx: f64, neutral_tol: f64) -> Result<ScalarField> {
    check_zero_sum(rho, dx, neutral_tol).map_err(|total| Error::NonNeutralCharge {
        total,
        tol: neutral_tol,
    })?;
    Ok(periodic_antiderivative(rho, dx))
}

/// `max_i |(E1[i+1] - E1[i]) / dx - (rho[i] + rho[i+1]) / 2|`, periodic.
pub fn gauss_residual(fs: &FieldState, rho: &[f64], dx: f64) -> f64 {
    let n = rho.len();
    (0..n)
        .map(|i| {
            let ip = (i + 1) % n;
            ((fs.e1[ip] - fs.e1[i]) / dx - 0.5 * (rho[i] + rho[ip])).abs()
        })
        .fold(0.0, f64::max)
}

/// Potential with `d_x A = B`, zero mean. Requires `sum(B) dx = 0`.
pub fn potential_a(b: &[f64], dx: f64, tol: f64) -> Result<PotentialA> {
    check_zero_sum(b, dx, tol).map_err(|total| Error::NonZeroMeanB { total, tol })?;
    Ok(PotentialA {
        a: periodic_antiderivative(b, dx),
    })
}

/// `sum (E1^2 + E2^2 + B^2) dx`.
pub fn field_energy(fs: &FieldState, dx: f64) -> f64 {
    (0..fs.nx())
        .map(|i| fs.e1[i] * fs.e1[i] + fs.e2[i] * fs.e2[i] + fs.b[i] * fs.b[i])
        .sum::<f64>()
        * dx
}

/// Exact-shift Maxwell update. `j1`, `j2` are the currents at the step
/// midpoint; `j2` is sampled on the face each characteristic crosses.
pub fn maxwell_step(fs: &FieldState, j1: &[f64], j2: &[f64], dt: f64, dx: f64) -> Result<FieldState> {
    if ((dt - dx) / dx).abs() > 1e-12 {
        return Err(Error::StepMismatch { dt, dx });
    }
    let n = fs.nx();
    let mut out = FieldState::zeros(n);
    for i in 0..n {
        let im = (i + n - 1) % n;
        let ip = (i + 1) % n;
        let plus = fs.e2[im] + fs.b[im] - dt * 0.5 * (j2[im] + j2[i]);
        let minus = fs.e2[ip] - fs.b[ip] - dt * 0.5 * (j2[i] + j2[ip]);
        out.e2[i] = 0.5 * (plus + minus);
        out.b[i] = 0.5 * (plus - minus);
        out.e1[i] = fs.e1[i] - dt * j1[i];
    }
    Ok(out)
}

/// `A(t_n)` from the d'Alembert representation of `(d_t^2 - d_x^2) A = j2`
/// on the circle, with `t_n = n dx`:
///
/// `A = (A0(x-t) + A0(x+t))/2 - (1/2) int_{x-t}^{x+t} E2_0 + (1/2) int_0^t int_{x-t+s}^{x+t-s} j2`.
///
/// `j2_mid[m]` is the current at `(m + 1/2) dx`. The result is returned with
/// its mean removed so it can be compared with [`potential_a`].
pub fn dalembert_potential(a0: &[f64], e2_0: &[f64], j2_mid: &[ScalarField], dx: f64) -> ScalarField {
    let n = a0.len();
    let steps = j2_mid.len();
    let wrap = |i: isize| i.rem_euclid(n as isize) as usize;
    let mut out = vec![0.0; n];
    for (i, slot) in out.iter_mut().enumerate() {
        let ii = i as isize;
        let s = steps as isize;
        let mut value = 0.5 * (a0[wrap(ii - s)] + a0[wrap(ii + s)]);
        if steps > 0 {
            let mut e2_int = 0.5 * (e2_0[wrap(ii - s)] + e2_0[wrap(ii + s)]);
            for q in (ii - s + 1)..(ii + s) {
                e2_int += e2_0[wrap(q)];
            }
            value -= 0.5 * dx * e2_int;
        }
        let mut source = 0.0;
        for (m, j2) in j2_mid.iter().enumerate() {
            let half = (steps - m) as isize - 1;
            let mut inner = 0.0;
            for q in (ii - half)..=(ii + half) {
                inner += j2[wrap(q)];
            }
            source += inner * dx;
        }
        value += 0.5 * dx * source;
        *slot = value;
    }
    let mean = out.iter().sum::<f64>() / n as f64;
    out.iter_mut().for_each(|v| *v -= mean);
    out
}
