//! Split evolution of the distribution function.
//!
//! Every substep is a conservative one-dimensional remap (see
//! [`crate::remap`]): x-transport is a periodic shift per velocity node, the
//! Lorentz force is an exact rotation about the drift centre realised as
//! three shears, the cutoff force uses variable-speed directional sweeps,
//! diffusion is a separable discrete Gaussian convolution and friction is a
//! radial stretch. Mass that leaves the velocity box is returned as leak in
//! physical units and never renormalised.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fields::{maxwell_step, Background, FieldState};
use crate::phase_space::{moment_density, DistField, PhaseGrid, ScalarField};
use crate::picard::cutoff_psi;
use crate::remap::{Boundary, LineWork};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForceOptions {
    /// Multiply the magnetic force by `psi(|v| - R)`.
    pub cutoff_r: Option<f64>,
    pub friction: bool,
    /// Largest admissible `max|K| dt / dv`.
    pub cfl_guard: f64,
}

impl Default for ForceOptions {
    fn default() -> Self {
        Self {
            cutoff_r: None,
            friction: false,
            cfl_guard: 1.0,
        }
    }
}

impl ForceOptions {
    /// The cutoff radius if it changes the force somewhere in the box.
    pub fn active_cutoff(&self, grid: &PhaseGrid) -> Option<f64> {
        self.cutoff_r
            .filter(|r| r - 1.0 < grid.box_corner_speed())
    }

    #[inline]
    pub fn magnetic_factor(&self, v1: f64, v2: f64) -> f64 {
        match self.cutoff_r {
            Some(r) => cutoff_psi(v1.hypot(v2) - r),
            None => 1.0,
        }
    }
}

/// Field values at one x-cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalField {
    pub e1: f64,
    pub e2: f64,
    pub b: f64,
}

impl FieldState {
    pub fn at(&self, ix: usize) -> LocalField {
        LocalField {
            e1: self.e1[ix],
            e2: self.e2[ix],
            b: self.b[ix],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub t: f64,
    pub f: DistField,
    pub fields: FieldState,
    pub bg: Background,
    /// Mass lost through the velocity boundary so far.
    pub v_leak: f64,
}

/// `K = E + c B (v2, -v1)`, `c = psi^R(v)` with a cutoff and 1 otherwise.
pub fn lorentz_force(fs: LocalField, v1: f64, v2: f64, opts: &ForceOptions) -> (f64, f64) {
    let c = opts.magnetic_factor(v1, v2);
    (fs.e1 + c * v2 * fs.b, fs.e2 - c * v1 * fs.b)
}

/// Periodic transport `d_t f + v1 d_x f = 0` over `dt`.
pub fn advect_x(f: &DistField, dt: f64) -> DistField {
    let g = f.grid;
    let nv = g.nv;
    let columns: Vec<Vec<f64>> = (0..nv)
        .into_par_iter()
        .map(|k1| {
            let shift = g.v(k1) * dt / g.dx;
            let mut work = LineWork::new(g.nx);
            let mut block = vec![0.0; g.nx * nv];
            for k2 in 0..nv {
                for ix in 0..g.nx {
                    work.line[ix] = f.values[g.index(ix, k1, k2)];
                }
                work.shift(shift, Boundary::Periodic);
                for ix in 0..g.nx {
                    block[ix * nv + k2] = work.out[ix];
                }
            }
            block
        })
        .collect();
    let mut out = DistField::zeros(g);
    for (k1, block) in columns.iter().enumerate() {
        for ix in 0..g.nx {
            let dst = g.index(ix, k1, 0);
            out.values[dst..dst + nv].copy_from_slice(&block[ix * nv..(ix + 1) * nv]);
        }
    }
    out
}

/// Largest `|K| dt` over slices that carry particles.
fn courant(f: &DistField, fs: &FieldState, dt: f64, opts: &ForceOptions) -> f64 {
    let g = f.grid;
    let vs = g.velocities();
    let per_slice: Vec<f64> = (0..g.nx)
        .into_par_iter()
        .map(|ix| {
            if f.slice(ix).iter().all(|&v| v == 0.0) {
                return 0.0;
            }
            let lf = fs.at(ix);
            let mut m: f64 = 0.0;
            for &v1 in &vs {
                for &v2 in &vs {
                    let (k1, k2) = lorentz_force(lf, v1, v2, opts);
                    m = m.max(k1.hypot(k2));
                }
            }
            m * dt
        })
        .collect();
    per_slice.into_iter().fold(0.0, f64::max)
}

fn check_cfl(f: &DistField, fs: &FieldState, dt: f64, opts: &ForceOptions) -> Result<()> {
    let c = courant(f, fs, dt, opts);
    let limit = opts.cfl_guard * f.grid.dv;
    if c > limit {
        return Err(Error::CflViolation { courant: c, limit });
    }
    Ok(())
}

/// `tan(B tau / 2) / B`, finite as `B -> 0`.
fn half_tan_over_b(b: f64, tau: f64) -> f64 {
    let h = 0.5 * b * tau;
    if h.abs() < 1e-6 {
        0.5 * tau * (1.0 + h * h / 3.0)
    } else {
        h.tan() / b
    }
}

/// `sin(B tau) / B`, finite as `B -> 0`.
fn sin_over_b(b: f64, tau: f64) -> f64 {
    let x = b * tau;
    if x.abs() < 1e-6 {
        tau * (1.0 - x * x / 6.0)
    } else {
        x.sin() / b
    }
}

/// Shift each line along `v1` (fixed `k2`) by `shift(k2)` cells.
fn shear_v1(slice: &mut [f64], nv: usize, work: &mut LineWork, shift: impl Fn(usize) -> f64) -> f64 {
    let mut leak = 0.0;
    for k2 in 0..nv {
        for k1 in 0..nv {
            work.line[k1] = slice[k1 * nv + k2];
        }
        leak += work.shift(shift(k2), Boundary::Open);
        for k1 in 0..nv {
            slice[k1 * nv + k2] = work.out[k1];
        }
    }
    leak
}

/// Shift each line along `v2` (fixed `k1`) by `shift(k1)` cells.
fn shear_v2(slice: &mut [f64], nv: usize, work: &mut LineWork, shift: impl Fn(usize) -> f64) -> f64 {
    let mut leak = 0.0;
    for k1 in 0..nv {
        let row = &mut slice[k1 * nv..(k1 + 1) * nv];
        work.line.copy_from_slice(row);
        leak += work.shift(shift(k1), Boundary::Open);
        row.copy_from_slice(&work.out);
    }
    leak
}

/// Exact affine Lorentz flow over `tau` as the shear sequence
/// `v1 += tan(B tau/2)/B K1`, `v2 += sin(B tau)/B K2`, `v1 += tan(B tau/2)/B K1`.
fn rotate_slice(slice: &mut [f64], grid: &PhaseGrid, lf: LocalField, tau: f64, work: &mut LineWork) -> f64 {
    let nv = grid.nv;
    let a = half_tan_over_b(lf.b, tau);
    let s = sin_over_b(lf.b, tau);
    let k1 = |k2: usize| lf.e1 + lf.b * grid.v(k2);
    let k2 = |k1: usize| lf.e2 - lf.b * grid.v(k1);
    let mut leak = shear_v1(slice, nv, work, |q| a * k1(q) / grid.dv);
    leak += shear_v2(slice, nv, work, |q| s * k2(q) / grid.dv);
    leak += shear_v1(slice, nv, work, |q| a * k1(q) / grid.dv);
    leak
}

/// Departure point of `y' = speed(y)` traced backward over `tau`.
fn trace_back(y: f64, tau: f64, speed: impl Fn(f64) -> f64) -> f64 {
    const SUB: usize = 2;
    let h = -tau / SUB as f64;
    let mut y = y;
    for _ in 0..SUB {
        let a = speed(y);
        let b = speed(y + 0.5 * h * a);
        let c = speed(y + 0.5 * h * b);
        let d = speed(y + h * c);
        y += h * (a + 2.0 * b + 2.0 * c + d) / 6.0;
    }
    y
}

/// Conservative sweep along one velocity axis with position dependent
/// speed; `speed(k_other, v)` is the force component along the axis.
fn sweep(
    slice: &mut [f64],
    grid: &PhaseGrid,
    along_v1: bool,
    tau: f64,
    work: &mut LineWork,
    speed: impl Fn(f64, f64) -> f64,
) -> f64 {
    let nv = grid.nv;
    let mut faces = vec![0.0; nv + 1];
    let mut leak = 0.0;
    for other in 0..nv {
        let w = grid.v(other);
        for (i, z) in faces.iter_mut().enumerate() {
            let v = -grid.v_max + i as f64 * grid.dv;
            let dep = trace_back(v, tau, |y| speed(y, w));
            *z = (dep + grid.v_max) / grid.dv;
        }
        for k in 0..nv {
            work.line[k] = if along_v1 { slice[k * nv + other] } else { slice[other * nv + k] };
        }
        leak += work.remap(&faces, Boundary::Open);
        for k in 0..nv {
            let dst = if along_v1 { k * nv + other } else { other * nv + k };
            slice[dst] = work.out[k];
        }
    }
    leak
}

/// Strang sweeps `v1(tau/2) v2(tau) v1(tau/2)` for the cut-off force, whose
/// divergence in `v` vanishes so each sweep is in conservation form.
fn cutoff_slice(
    slice: &mut [f64],
    grid: &PhaseGrid,
    lf: LocalField,
    tau: f64,
    opts: &ForceOptions,
    work: &mut LineWork,
) -> f64 {
    let k1 = |v1: f64, v2: f64| lorentz_force(lf, v1, v2, opts).0;
    let k2 = |v2: f64, v1: f64| lorentz_force(lf, v1, v2, opts).1;
    let mut leak = sweep(slice, grid, true, 0.5 * tau, work, k1);
    leak += sweep(slice, grid, false, tau, work, k2);
    leak += sweep(slice, grid, true, 0.5 * tau, work, k1);
    leak
}

/// Transport `d_t f + K . grad_v f = 0` over `dt` with fields frozen at `fs`.
/// Returns the new field and the leaked mass.
pub fn accelerate_v(f: &DistField, fs: &FieldState, dt: f64, opts: &ForceOptions) -> Result<(DistField, f64)> {
    let g = f.grid;
    check_cfl(f, fs, dt, opts)?;
    let cutoff = opts.active_cutoff(&g);
    let mut out = f.clone();
    let leaks: Vec<f64> = out
        .values
        .par_chunks_mut(g.slice_len())
        .enumerate()
        .map(|(ix, slice)| {
            if slice.iter().all(|&v| v == 0.0) {
                return 0.0;
            }
            let mut work = LineWork::new(g.nv);
            let lf = fs.at(ix);
            match cutoff {
                None => rotate_slice(slice, &g, lf, dt, &mut work),
                Some(_) => cutoff_slice(slice, &g, lf, dt, opts, &mut work),
            }
        })
        .collect();
    let leak = leaks.iter().sum::<f64>() * g.dv * g.dv * g.dx;
    Ok((out, leak))
}

/// One-axis weights of the heat kernel over `dt`, offsets `0..`, truncated
/// after `cap`.
///
/// The weights are nonnegative, sum to one and have variance exactly
/// `2 dt`. Below one cell squared of variance they also carry the
/// Gaussian fourth moment `3 (2 dt)^2` where a nonnegative five-point
/// stencil allows it, and otherwise the three-point stencil. From one cell
/// squared upward they are a sampled Gaussian whose width is adjusted to
/// the exact variance.
pub fn heat_weights(dt: f64, dv: f64, cap: usize) -> Vec<f64> {
    let target = 2.0 * dt / (dv * dv);
    let mut w = if target < 1.0 / 3.0 {
        vec![1.0 - target, 0.5 * target]
    } else if target < 1.0 {
        let w2 = (3.0 * target * target - target) / 24.0;
        let w1 = (4.0 * target - 3.0 * target * target) / 6.0;
        vec![1.0 - 2.0 * (w1 + w2), w1, w2]
    } else {
        sampled_gaussian(target)
    };
    w.truncate(cap + 1);
    w
}

/// Normalised sampled Gaussian with discrete variance `target` (cells^2).
fn sampled_gaussian(target: f64) -> Vec<f64> {
    let weights_for = |s: f64| -> Vec<f64> {
        let reach = (s * (2.0 * 17.0 * std::f64::consts::LN_10).sqrt()).ceil() as usize + 1;
        (0..=reach)
            .map(|m| (-(m as f64).powi(2) / (2.0 * s * s)).exp())
            .collect()
    };
    let variance = |w: &[f64]| -> f64 {
        let total: f64 = w[0] + 2.0 * w[1..].iter().sum::<f64>();
        2.0 * w.iter().enumerate().map(|(m, x)| (m * m) as f64 * x).sum::<f64>() / total
    };
    let s = if target >= 4.0 {
        target.sqrt()
    } else {
        let (mut lo, mut hi) = (0.5, 3.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if variance(&weights_for(mid)) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let raw = weights_for(s);
    let total: f64 = raw[0] + 2.0 * raw[1..].iter().sum::<f64>();
    raw.iter().map(|w| w / total).collect()
}

/// Convolve `line` with symmetric one-sided weights `w`, zero outside.
/// Returns the weight that fell outside, times the source values.
fn convolve_line(line: &[f64], w: &[f64], out: &mut [f64]) -> f64 {
    let n = line.len() as isize;
    let reach = w.len() as isize - 1;
    out.iter_mut().for_each(|o| *o = 0.0);
    let mut kept = 0.0;
    let mut total = 0.0;
    for (j, &u) in line.iter().enumerate() {
        if u == 0.0 {
            continue;
        }
        total += u;
        let j = j as isize;
        let lo = (j - reach).max(0);
        let hi = (j + reach).min(n - 1);
        for i in lo..=hi {
            let c = u * w[(i - j).unsigned_abs()];
            out[i as usize] += c;
            kept += c;
        }
    }
    total - kept
}

/// `d_t f = Laplacian_v f` over `dt`: separable discrete heat kernel per slice.
pub fn diffuse_v(f: &DistField, dt: f64) -> (DistField, f64) {
    let g = f.grid;
    let nv = g.nv;
    let w = heat_weights(dt, g.dv, nv);
    let mut out = f.clone();
    let leaks: Vec<f64> = out
        .values
        .par_chunks_mut(g.slice_len())
        .map(|slice| {
            if slice.iter().all(|&v| v == 0.0) {
                return 0.0;
            }
            let mut line = vec![0.0; nv];
            let mut res = vec![0.0; nv];
            let mut leak = 0.0;
            for k2 in 0..nv {
                for k1 in 0..nv {
                    line[k1] = slice[k1 * nv + k2];
                }
                leak += convolve_line(&line, &w, &mut res);
                for k1 in 0..nv {
                    slice[k1 * nv + k2] = res[k1];
                }
            }
            for k1 in 0..nv {
                let row = &mut slice[k1 * nv..(k1 + 1) * nv];
                leak += convolve_line(row, &w, &mut res);
                row.copy_from_slice(&res);
            }
            leak
        })
        .collect();
    let leak = leaks.iter().sum::<f64>() * g.cell_volume();
    (out, leak)
}

/// `d_t f = div_v (v f)` over `dt`: `f(v) <- e^{2 dt} f(e^{dt} v)` by a
/// conservative stretch along each axis.
pub fn friction_step(f: &DistField, dt: f64) -> (DistField, f64) {
    let g = f.grid;
    let nv = g.nv;
    let stretch = dt.exp();
    let faces: Vec<f64> = (0..=nv)
        .map(|i| {
            let v = -g.v_max + i as f64 * g.dv;
            (v * stretch + g.v_max) / g.dv
        })
        .collect();
    let mut out = f.clone();
    let leaks: Vec<f64> = out
        .values
        .par_chunks_mut(g.slice_len())
        .map(|slice| {
            if slice.iter().all(|&v| v == 0.0) {
                return 0.0;
            }
            let mut work = LineWork::new(nv);
            let mut leak = 0.0;
            for k2 in 0..nv {
                for k1 in 0..nv {
                    work.line[k1] = slice[k1 * nv + k2];
                }
                leak += work.remap(&faces, Boundary::Open);
                for k1 in 0..nv {
                    slice[k1 * nv + k2] = work.out[k1];
                }
            }
            for k1 in 0..nv {
                let row = &mut slice[k1 * nv..(k1 + 1) * nv];
                work.line.copy_from_slice(row);
                leak += work.remap(&faces, Boundary::Open);
                row.copy_from_slice(&work.out);
            }
            leak
        })
        .collect();
    let leak = leaks.iter().sum::<f64>() * g.cell_volume();
    (out, leak)
}

/// Charge density `rho = int f dv - phi` and current `j = int v f dv`.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub rho: ScalarField,
    pub j1: ScalarField,
    pub j2: ScalarField,
}

pub fn charge_current(f: &DistField, bg: &Background) -> Moments {
    let density = moment_density(f, |_, _| 1.0);
    Moments {
        rho: density.iter().zip(&bg.phi).map(|(n, p)| n - p).collect(),
        j1: moment_density(f, |v1, _| v1),
        j2: moment_density(f, |_, v2| v2),
    }
}

/// The velocity block `V(dt/2) D(dt) [friction(dt)] V(dt/2)` with frozen fields.
pub fn velocity_block(f: &DistField, fs: &FieldState, dt: f64, opts: &ForceOptions) -> Result<(DistField, f64)> {
    let (f, mut leak) = accelerate_v(f, fs, 0.5 * dt, opts)?;
    let (f, l) = diffuse_v(&f, dt);
    leak += l;
    let f = if opts.friction {
        let (f, l) = friction_step(&f, dt);
        leak += l;
        f
    } else {
        f
    };
    let (f, l) = accelerate_v(&f, fs, 0.5 * dt, opts)?;
    Ok((f, leak + l))
}

/// Kinetic Strang step with frozen fields: `X(dt/2) V D V X(dt/2)`.
pub fn linear_step(f: &DistField, fs: &FieldState, dt: f64, opts: &ForceOptions) -> Result<(DistField, f64)> {
    let f1 = advect_x(f, 0.5 * dt);
    let (f2, leak) = velocity_block(&f1, fs, dt, opts)?;
    Ok((advect_x(&f2, 0.5 * dt), leak))
}

/// Current at the middle of the velocity block. Starting from the current
/// after the first x half-step, the change of `j` across the block is
/// `int K f dv` at midpoint fields, so a few fixed-point sweeps on the
/// one-dimensional field update resolve the implicit coupling.
fn midpoint_current(
    f1: &DistField,
    bg: &Background,
    fs: &FieldState,
    dt: f64,
    dx: f64,
    opts: &ForceOptions,
) -> Result<(Moments, FieldState, FieldState)> {
    let m = charge_current(f1, bg);
    let density = moment_density(f1, |_, _| 1.0);
    let (b1, b2) = if opts.cutoff_r.is_some() {
        (
            moment_density(f1, |v1, v2| opts.magnetic_factor(v1, v2) * v2),
            moment_density(f1, |v1, v2| opts.magnetic_factor(v1, v2) * v1),
        )
    } else {
        (m.j2.clone(), m.j1.clone())
    };
    let mut cur = m.clone();
    let mut next = maxwell_step(fs, &cur.j1, &cur.j2, dt, dx)?;
    for _ in 0..3 {
        let mid = fs.midpoint(&next);
        for i in 0..fs.nx() {
            cur.j1[i] = m.j1[i] + 0.5 * dt * (mid.e1[i] * density[i] + mid.b[i] * b1[i]);
            cur.j2[i] = m.j2[i] + 0.5 * dt * (mid.e2[i] * density[i] - mid.b[i] * b2[i]);
        }
        next = maxwell_step(fs, &cur.j1, &cur.j2, dt, dx)?;
    }
    let mid = fs.midpoint(&next);
    Ok((cur, next, mid))
}

/// One full coupled step.
pub fn vmfp_step(s: &SimState, dt: f64, opts: &ForceOptions) -> Result<SimState> {
    let g = s.f.grid;
    if ((dt - g.dx) / g.dx).abs() > 1e-12 {
        return Err(Error::StepMismatch { dt, dx: g.dx });
    }
    let f1 = advect_x(&s.f, 0.5 * dt);
    let (_, next, mid) = midpoint_current(&f1, &s.bg, &s.fields, dt, g.dx, opts)?;
    let (f2, leak) = velocity_block(&f1, &mid, dt, opts)?;
    let f3 = advect_x(&f2, 0.5 * dt);
    Ok(SimState {
        t: s.t + dt,
        f: f3,
        fields: next,
        bg: s.bg.clone(),
        v_leak: s.v_leak + leak,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase_space::total_mass;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn grid(nx: usize, x_len: f64, nv: usize, v_max: f64) -> PhaseGrid {
        PhaseGrid::new(nx, x_len, nv, v_max).unwrap()
    }

    fn gauss2(v1: f64, v2: f64, c1: f64, c2: f64, var: f64) -> f64 {
        (-((v1 - c1).powi(2) + (v2 - c2).powi(2)) / (2.0 * var)).exp() / (2.0 * PI * var)
    }

    fn velocity_moment(f: &DistField, k: impl Fn(f64, f64) -> f64) -> f64 {
        moment_density(f, k).iter().sum::<f64>() * f.grid.dx
    }

    fn fields(nx: usize, e1: f64, e2: f64, b: f64) -> FieldState {
        FieldState {
            e1: vec![e1; nx],
            e2: vec![e2; nx],
            b: vec![b; nx],
        }
    }

    #[test]
    fn advect_homogeneous_unchanged() {
        let g = grid(8, 2.0, 8, 4.0);
        let f = DistField::from_fn(g, |_, v1, v2| gauss2(v1, v2, 0.0, 0.0, 1.0));
        let out = advect_x(&f, 0.3);
        for (a, b) in out.values.iter().zip(&f.values) {
            assert!((a - b).abs() <= 4.0 * f64::EPSILON * b);
        }
    }

    #[test]
    fn advect_integer_shift_is_bit_exact() {
        let g = grid(16, 4.0, 4, 2.0);
        // v = -1.5, -0.5, 0.5, 1.5; dx = 0.25; dt = 0.5 gives shifts -3, -1, 1, 3 cells.
        let f = DistField::from_fn(g, |x, v1, v2| 1.0 + (x * 1.7).sin() * (v1 + 0.3 * v2).cos());
        let out = advect_x(&f, 0.5);
        for ix in 0..16 {
            for k1 in 0..4 {
                let s = (2.0 * g.v(k1)) as isize;
                let src = (ix as isize - s).rem_euclid(16) as usize;
                for k2 in 0..4 {
                    assert_eq!(out.values[g.index(ix, k1, k2)], f.values[g.index(src, k1, k2)]);
                }
            }
        }
    }

    #[test]
    fn advect_gaussian_bump_centroid() {
        // Velocity nodes include v1 = 1 exactly: v_max = 4, nv = 8, dv = 1 gives centres at -3.5..3.5,
        // so use nv = 4, v_max = 2 and pick the node at v1 = 1.5 with dt = 0.25 / 1.5.
        let g = grid(128, 8.0, 4, 2.0);
        let dt = 0.25 / 1.5;
        let f = DistField::from_fn(g, |x, _, _| (-(x - 3.0).powi(2) / (2.0 * 0.25)).exp());
        let out = advect_x(&f, dt);
        let k1 = 3;
        assert_eq!(g.v(k1), 1.5);
        let centroid = |d: &DistField| {
            let (mut m0, mut m1) = (0.0, 0.0);
            for ix in 0..g.nx {
                let u = d.values[g.index(ix, k1, 0)];
                m0 += u;
                m1 += u * g.x(ix);
            }
            m1 / m0
        };
        let moved = centroid(&out) - centroid(&f);
        assert!((moved - 0.25).abs() <= g.dx * g.dx, "{moved}");
    }

    #[test]
    fn lorentz_examples() {
        let opts = ForceOptions::default();
        let lf = LocalField { e1: 0.3, e2: -0.2, b: 0.0 };
        assert_eq!(lorentz_force(lf, 5.0, -7.0, &opts), (0.3, -0.2));
        let lf = LocalField { e1: 0.0, e2: 0.0, b: 1.0 };
        assert_eq!(lorentz_force(lf, 0.0, 1.0, &opts), (1.0, 0.0));
        let cut = ForceOptions { cutoff_r: Some(2.0), ..opts };
        let (k1, k2) = lorentz_force(lf, 0.6 * 2.0, 0.8 * 2.0, &cut);
        assert_eq!((k1, k2), (0.0, 0.0));
    }

    #[test]
    fn zero_force_is_identity() {
        let g = grid(4, 1.0, 16, 4.0);
        let f = DistField::from_fn(g, |x, v1, v2| gauss2(v1, v2, x, 0.0, 1.0));
        let (out, leak) = accelerate_v(&f, &FieldState::zeros(4), 0.1, &ForceOptions::default()).unwrap();
        assert_eq!(out, f);
        assert_eq!(leak, 0.0);
    }

    #[test]
    fn constant_e_translates_centroid() {
        let g = grid(2, 1.0, 64, 6.0);
        let f = DistField::from_fn(g, |_, v1, v2| gauss2(v1, v2, 0.0, 0.0, 0.5));
        let (e1, dt) = (0.8, 0.15);
        let (out, leak) = accelerate_v(&f, &fields(2, e1, 0.0, 0.0), dt, &ForceOptions::default()).unwrap();
        let mass = total_mass(&f);
        assert!((total_mass(&out) + leak - mass).abs() < 1e-14);
        let c = velocity_moment(&out, |v1, _| v1) / mass;
        assert!((c - e1 * dt).abs() < g.dv * g.dv, "{c}");
        let c2 = velocity_moment(&out, |_, v2| v2) / mass;
        assert!(c2.abs() < 1e-14);
    }

    #[test]
    fn magnetic_rotation_preserves_energy_and_rotates_mean() {
        let run = |nv: usize| {
            let g = grid(1, 1.0, nv, 6.0);
            let f = DistField::from_fn(g, |_, v1, v2| gauss2(v1, v2, 1.5, 0.0, 0.4));
            let (b, dt) = (1.0, 0.05);
            let fs = fields(1, 0.0, 0.0, b);
            let mut cur = f.clone();
            for _ in 0..10 {
                // The shear splitting is exact for any step; only the guard is relaxed.
                let opts = ForceOptions { cfl_guard: 10.0, ..Default::default() };
                cur = accelerate_v(&cur, &fs, dt, &opts).unwrap().0;
            }
            let mass = total_mass(&f);
            let e0 = velocity_moment(&f, |a, b| a * a + b * b);
            let e1 = velocity_moment(&cur, |a, b| a * a + b * b);
            // Rotation by angle -B t: (1.5, 0) -> (1.5 cos(0.5), -1.5 sin(0.5)).
            let m1 = velocity_moment(&cur, |a, _| a) / mass;
            let m2 = velocity_moment(&cur, |_, b| b) / mass;
            let err_mean = (m1 - 1.5 * 0.5f64.cos()).abs() + (m2 + 1.5 * 0.5f64.sin()).abs();
            ((e1 - e0).abs() / e0, err_mean)
        };
        let (de, dm) = run(64);
        let (de2, dm2) = run(128);
        assert!(de < 1e-3 && dm < 1e-3, "{de} {dm}");
        assert!(de2 < de / 3.0 || de2 < 1e-9, "{de} {de2}");
        assert!(dm2 < dm / 3.0 || dm2 < 1e-9, "{dm} {dm2}");
    }

    #[test]
    fn cfl_violation_is_reported() {
        let g = grid(2, 1.0, 8, 4.0);
        let f = DistField::from_fn(g, |_, _, _| 1.0);
        let err = accelerate_v(&f, &fields(2, 10.0, 0.0, 0.0), 1.0, &ForceOptions::default()).unwrap_err();
        assert!(matches!(err, Error::CflViolation { .. }));
    }

    #[test]
    fn inactive_cutoff_is_bit_identical() {
        let g = grid(2, 1.0, 32, 4.0);
        let f = DistField::from_fn(g, |_, v1, v2| gauss2(v1, v2, 1.0, -0.5, 0.7));
        let fs = fields(2, 0.05, -0.03, 0.2);
        let plain = accelerate_v(&f, &fs, 0.1, &ForceOptions::default()).unwrap();
        let cut = ForceOptions { cutoff_r: Some(4.0 * 2f64.sqrt() + 1.0), ..Default::default() };
        assert_eq!(accelerate_v(&f, &fs, 0.1, &cut).unwrap(), plain);
    }

    #[test]
    fn cutoff_sweeps_conserve_mass() {
        let g = grid(2, 1.0, 32, 4.0);
        let f = DistField::from_fn(g, |_, v1, v2| gauss2(v1, v2, 0.5, 0.0, 1.0));
        let fs = fields(2, 0.01, 0.0, 0.5);
        let cut = ForceOptions { cutoff_r: Some(2.0), ..Default::default() };
        let (out, leak) = accelerate_v(&f, &fs, 0.2, &cut).unwrap();
        assert!((total_mass(&out) + leak - total_mass(&f)).abs() < 1e-14);
        assert!(out.min() >= 0.0);
    }

    #[test]
    fn heat_weights_have_exact_variance() {
        for &(dt, dv) in &[(1e-3, 0.25), (0.01, 0.25), (0.2, 0.25), (1.0, 0.1)] {
            let w = heat_weights(dt, dv, 10_000);
            let total = w[0] + 2.0 * w[1..].iter().sum::<f64>();
            assert!((total - 1.0).abs() < 1e-14);
            let var: f64 = 2.0 * w.iter().enumerate().map(|(m, x)| (m * m) as f64 * x).sum::<f64>();
            assert!((var * dv * dv - 2.0 * dt).abs() < 1e-12 * dt.max(1e-3), "{dt} {var}");
        }
    }

    #[test]
    fn heat_weights_match_gaussian_fourth_moment() {
        // Fourth moment of a centred Gaussian of variance s2 is 3 s2^2.
        for &(dt, dv) in &[(0.011, 0.25), (0.02, 0.25), (0.03, 0.25), (0.035, 0.25), (0.2, 0.25), (1.0, 0.1)] {
            let w = heat_weights(dt, dv, 10_000);
            assert!(w.iter().all(|&x| x >= 0.0));
            let s2 = 2.0 * dt / (dv * dv);
            let m4: f64 = 2.0 * w.iter().enumerate().map(|(m, x)| (m as f64).powi(4) * x).sum::<f64>();
            assert!((m4 - 3.0 * s2 * s2).abs() < 1e-6 * s2 * s2, "{dt}: {m4} vs {}", 3.0 * s2 * s2);
        }
        // Below a third of a cell squared only the three-point stencil is nonnegative.
        assert_eq!(heat_weights(1e-3, 0.25, 10).len(), 2);
    }

    #[test]
    fn diffusion_delta_limit() {
        let g = grid(2, 1.0, 32, 4.0);
        let f = DistField::from_fn(g, |_, v1, v2| gauss2(v1, v2, 0.3, 0.0, 0.5) + if v1.abs() < 0.2 { 1.0 } else { 0.0 });
        let (out, _) = diffuse_v(&f, 1e-8);
        let d = out.values.iter().zip(&f.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(d <= 1e-6, "{d}");
    }

    #[test]
    fn diffusion_semigroup_against_heat_kernel() {
        // Heat kernel at time s is a Gaussian of variance 2s per axis.
        let err = |nv: usize| {
            let g = grid(1, 1.0, nv, 6.0);
            let (s, dt) = (0.3, 0.2);
            let f = DistField::from_fn(g, |_, v1, v2| gauss2(v1, v2, 0.0, 0.0, 2.0 * s));
            let exact = DistField::from_fn(g, |_, v1, v2| gauss2(v1, v2, 0.0, 0.0, 2.0 * (s + dt)));
            let (out, _) = diffuse_v(&f, dt);
            out.values.iter().zip(&exact.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        };
        // Matched-variance discrete Gaussians compose to the sampled Gaussian.
        for nv in [32, 64] {
            let e = err(nv);
            assert!(e < 1e-12, "{nv}: {e}");
        }
    }

    #[test]
    fn diffusion_second_moment_growth() {
        let g = grid(2, 1.0, 64, 8.0);
        let f = DistField::from_fn(g, |_, v1, v2| gauss2(v1, v2, 0.0, 0.5, 1.0));
        let dt = 0.05;
        let (out, leak) = diffuse_v(&f, dt);
        let mass = total_mass(&f);
        assert!(leak < 1e-12);
        let m2 = |d: &DistField| velocity_moment(d, |a, b| a * a + b * b);
        let growth = m2(&out) - m2(&f);
        assert!((growth - 4.0 * dt * mass).abs() < 1e-9 * mass, "{growth}");
    }

    #[test]
    fn friction_contracts_gaussian() {
        let g = grid(1, 1.0, 128, 8.0);
        let var = 1.5;
        let dt = 0.1;
        let f = DistField::from_fn(g, |_, v1, v2| gauss2(v1, v2, 0.0, 0.0, var));
        let (out, leak) = friction_step(&f, dt);
        let mass = total_mass(&f);
        assert_eq!(leak, 0.0);
        assert!((total_mass(&out) - mass).abs() < 1e-13);
        let v1_var = velocity_moment(&out, |a, _| a * a) / mass;
        let exact = velocity_moment(&f, |a, _| a * a) / mass * (-2.0 * dt).exp();
        assert!((v1_var - exact).abs() < 1e-3, "{v1_var} {exact}");
        let zero = DistField::zeros(g);
        assert_eq!(friction_step(&zero, dt).0, zero);
    }

    #[test]
    fn friction_moves_point_mass_inward() {
        let g = grid(1, 1.0, 64, 4.0);
        let k = 56;
        let v0 = g.v(k);
        let mut f = DistField::zeros(g);
        f.values[g.index(0, k, 32)] = 1.0;
        let dt = 0.05;
        let (out, _) = friction_step(&f, dt);
        let mass = total_mass(&out);
        let c = velocity_moment(&out, |a, _| a) / mass;
        assert!((c - v0 * (-dt).exp()).abs() < g.dv * 0.5, "{c}");
    }

    #[test]
    fn moments_examples() {
        let g = grid(4, 1.0, 32, 6.0);
        let f = DistField::from_fn(g, |x, v1, v2| (1.0 + 0.1 * x) * gauss2(v1, v2, 0.0, 0.0, 1.0));
        let bg = Background { phi: moment_density(&f, |_, _| 1.0) };
        let m = charge_current(&f, &bg);
        assert!(m.rho.iter().all(|&r| r == 0.0));
        assert!(m.j1.iter().chain(&m.j2).all(|&j| j.abs() < 1e-15));
        let g = grid(4, 1.0, 64, 12.0);
        let beam = DistField::from_fn(g, |_, v1, v2| gauss2(v1, v2, 0.0, 1.0, 1.0));
        let m = charge_current(&beam, &Background { phi: vec![0.0; 4] });
        for i in 0..4 {
            assert!((m.j2[i] - 1.0).abs() < 1e-9);
            assert!((m.rho[i] - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn step_rejects_wrong_dt() {
        let g = grid(4, 1.0, 8, 4.0);
        let s = SimState {
            t: 0.0,
            f: DistField::zeros(g),
            fields: FieldState::zeros(4),
            bg: Background { phi: vec![0.0; 4] },
            v_leak: 0.0,
        };
        assert!(matches!(vmfp_step(&s, 0.5, &ForceOptions::default()), Err(Error::StepMismatch { .. })));
    }

    #[test]
    fn homogeneous_step_is_pure_diffusion() {
        let g = grid(4, 0.4, 64, 10.0);
        let f = DistField::from_fn(g, |_, v1, v2| gauss2(v1, v2, 0.0, 0.0, 1.0));
        let bg = Background { phi: moment_density(&f, |_, _| 1.0) };
        let mut s = SimState { t: 0.0, f: f.clone(), fields: FieldState::zeros(4), bg, v_leak: 0.0 };
        let opts = ForceOptions::default();
        let m2 = |d: &DistField| velocity_moment(d, |a, b| a * a + b * b);
        let mass = total_mass(&f);
        for _ in 0..5 {
            s = vmfp_step(&s, g.dx, &opts).unwrap();
        }
        assert!(s.fields.e1.iter().chain(&s.fields.e2).chain(&s.fields.b).all(|&v| v.abs() < 1e-15));
        let slope = (m2(&s.f) - m2(&f)) / s.t;
        assert!((slope - 4.0 * mass).abs() < 1e-6 * mass, "{slope}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn step_conserves_mass_and_bounds(
            amp in 0.0f64..0.5,
            drift in -1.0f64..1.0,
            b0 in -0.05f64..0.05,
            e0 in -0.05f64..0.05,
        ) {
            let g = grid(8, 0.8, 16, 5.0);
            let f = DistField::from_fn(g, |x, v1, v2| {
                (1.0 + amp * (2.0 * PI * x / 0.8).cos()) * gauss2(v1, v2, 0.0, drift, 1.0)
            });
            let bg = Background { phi: moment_density(&f, |_, _| 1.0) };
            let mut fs = FieldState::zeros(8);
            for i in 0..8 {
                let x = g.x(i);
                fs.e2[i] = e0 * (2.0 * PI * x / 0.8).sin();
                fs.b[i] = b0 * (2.0 * PI * x / 0.8).cos();
            }
            let s = SimState { t: 0.0, f: f.clone(), fields: fs, bg, v_leak: 0.0 };
            let next = vmfp_step(&s, g.dx, &ForceOptions::default()).unwrap();
            let m0 = total_mass(&f);
            prop_assert!((total_mass(&next.f) + next.v_leak - m0).abs() <= 1e-12 * m0);
            prop_assert!(next.f.min() >= -1e-12 * f.max());
            prop_assert!(next.f.max() <= f.max() * (1.0 + 1e-12));
        }

        #[test]
        fn advect_commutes_with_x_translation(shift in 0usize..8, dt in 0.01f64..0.5) {
            let g = grid(8, 1.0, 8, 3.0);
            let f = DistField::from_fn(g, |x, v1, v2| (x * 3.0).sin().abs() + gauss2(v1, v2, 0.2, 0.0, 1.0));
            let roll = |d: &DistField| {
                let mut out = DistField::zeros(g);
                for ix in 0..8 {
                    out.slice_mut((ix + shift) % 8).copy_from_slice(d.slice(ix));
                }
                out
            };
            prop_assert_eq!(advect_x(&roll(&f), dt), roll(&advect_x(&f, dt)));
            prop_assert_eq!(diffuse_v(&roll(&f), dt).0, roll(&diffuse_v(&f, dt).0));
        }
    }
}
