//! The fundamental solution of `d_t f + v1 d_x f = Laplacian_v f` and the
//! grid operators built from it.
//!
//! For elapsed time `s` the kernel factors into a velocity Gaussian of
//! variance `2s` per axis and, conditional on `(v1, w1)`, an x-Gaussian of
//! variance `s^3/6` centred at `y + s (v1 + w1)/2`. On the grid the velocity
//! factor is the normalised discrete Gaussian of matching variance (the same
//! weights the diffusion substep uses) and the x factor is integrated exactly
//! against the limited parabolic reconstruction of each source line, using
//!
//! ```text
//! int Phi       = z Phi + phi
//! int z Phi     = ((z^2 - 1) Phi + z phi) / 2
//! int z^2 Phi   = (z^3 Phi + (z^2 + 2) phi) / 3
//! ```
//!
//! where `Phi`, `phi` are the standard normal distribution and density.

use std::f64::consts::{PI, SQRT_2};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fields::FieldState;
use crate::kinetic::{heat_weights, lorentz_force, ForceOptions};
use crate::phase_space::{weighted_l2_norm, DistField, WeightSpec};
use crate::remap::{Boundary, Parabolas};

/// One evaluation point of the kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelEval {
    /// Elapsed time `t - tau`.
    pub s: f64,
    pub x: f64,
    pub v: (f64, f64),
    pub y: f64,
    pub w: (f64, f64),
}

/// Selects the kernel formula. `DoubledVelocityElapsed` replaces `s` by
/// `2s` in the velocity exponent only and exists as a negative control.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KernelVariant {
    #[default]
    Exact,
    DoubledVelocityElapsed,
}

fn check_elapsed(s: f64) -> Result<()> {
    if s > 0.0 && s.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveElapsed(s))
    }
}

#[inline]
fn transport_offset(ke: &KernelEval) -> f64 {
    ke.x - ke.y - 0.5 * ke.s * (ke.v.0 + ke.w.0)
}

#[inline]
fn kernel_value(ke: &KernelEval, variant: KernelVariant) -> f64 {
    let s = ke.s;
    let sv = match variant {
        KernelVariant::Exact => s,
        KernelVariant::DoubledVelocityElapsed => 2.0 * s,
    };
    let dv2 = (ke.v.0 - ke.w.0).powi(2) + (ke.v.1 - ke.w.1).powi(2);
    let u = transport_offset(ke);
    (-dv2 / (4.0 * sv)).exp() / (4.0 * PI * s) * (PI * s * s * s / 3.0).powf(-0.5) * (-3.0 * u * u / (s * s * s)).exp()
}

pub fn eval_g(ke: &KernelEval) -> Result<f64> {
    eval_g_variant(ke, KernelVariant::Exact)
}

pub fn eval_g_variant(ke: &KernelEval, variant: KernelVariant) -> Result<f64> {
    check_elapsed(ke.s)?;
    Ok(kernel_value(ke, variant))
}

/// `grad_w G = G ((v1 - w1)/(2s) + 3u/s^2, (v2 - w2)/(2s))`.
pub fn grad_w_g(ke: &KernelEval) -> Result<(f64, f64)> {
    check_elapsed(ke.s)?;
    let g = kernel_value(ke, KernelVariant::Exact);
    let s = ke.s;
    let u = transport_offset(ke);
    Ok((
        g * ((ke.v.0 - ke.w.0) / (2.0 * s) + 3.0 * u / (s * s)),
        g * (ke.v.1 - ke.w.1) / (2.0 * s),
    ))
}

#[inline]
fn norm_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / SQRT_2)
}

#[inline]
fn norm_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// Antiderivatives of `z^k Phi(z)`, `k = 0, 1, 2`.
fn phi_moments(z: f64) -> [f64; 3] {
    let (c, d) = (norm_cdf(z), norm_pdf(z));
    [
        z * c + d,
        0.5 * ((z * z - 1.0) * c + z * d),
        (z * z * z * c + (z * z + 2.0) * d) / 3.0,
    ]
}

/// Antiderivatives of `z^k phi(z)`, `k = 0, 1, 2`.
fn pdf_moments(z: f64) -> [f64; 3] {
    let (c, d) = (norm_cdf(z), norm_pdf(z));
    [c, -d, c - z * d]
}

/// What the x-operator returns for each target cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum XMode {
    /// Cell average of the smoothed, shifted profile.
    Average,
    /// Point value at the left face of the cell.
    LeftFace,
}

/// Periodic x-operator for one shift: `out[i] = sum_r sum_k w[r][k] c_k[i - r]`
/// where `c_0 + c_1 xi + c_2 xi^2` is the parabola of a source cell.
#[derive(Debug, Clone)]
struct XStencil {
    r0: isize,
    w: Vec<[f64; 3]>,
}

const TAIL: f64 = 9.0;

impl XStencil {
    /// Shift `delta` and Gaussian width `sigma`, both in cells.
    fn new(delta: f64, sigma: f64, mode: XMode) -> Self {
        let sharp = sigma < 1e-3;
        let reach = if sharp { 0.0 } else { TAIL * sigma };
        let (lo, hi) = match mode {
            XMode::Average => ((delta - 1.0 - reach).floor(), (delta + 1.0 + reach).ceil()),
            XMode::LeftFace => ((delta - reach).floor(), (delta + 1.0 + reach).ceil()),
        };
        let r0 = lo as isize;
        let w = (r0..=hi as isize)
            .map(|r| {
                let b = r as f64 - delta;
                match (mode, sharp) {
                    (XMode::Average, true) => {
                        let lo = b.clamp(0.0, 1.0);
                        let hi = (b + 1.0).clamp(0.0, 1.0);
                        [hi - lo, (hi * hi - lo * lo) / 2.0, (hi.powi(3) - lo.powi(3)) / 3.0]
                    }
                    (XMode::LeftFace, true) => {
                        if (0.0..1.0).contains(&b) {
                            [1.0, b, b * b]
                        } else {
                            [0.0; 3]
                        }
                    }
                    (XMode::Average, false) => {
                        let hi = smoothed_moments(b + 1.0, sigma);
                        let lo = smoothed_moments(b, sigma);
                        [hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]]
                    }
                    (XMode::LeftFace, false) => face_moments(b, sigma),
                }
            })
            .collect();
        Self { r0, w }
    }

    fn apply(&self, c: &[Vec<f64>; 3], out: &mut [f64], scale: f64) {
        let n = out.len() as isize;
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (q, wk) in self.w.iter().enumerate() {
                let j = (i as isize - self.r0 - q as isize).rem_euclid(n) as usize;
                let part = wk[0] * c[0][j] + wk[1] * c[1][j] + wk[2] * c[2][j];
                acc += part.max(0.0);
            }
            *o += scale * acc;
        }
    }

    fn apply_signed(&self, c: &[Vec<f64>; 3], out: &mut [f64], scale: f64) {
        let n = out.len() as isize;
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (q, wk) in self.w.iter().enumerate() {
                let j = (i as isize - self.r0 - q as isize).rem_euclid(n) as usize;
                acc += wk[0] * c[0][j] + wk[1] * c[1][j] + wk[2] * c[2][j];
            }
            *o += scale * acc;
        }
    }
}

/// `int_0^1 xi^k Phi((b - xi)/sigma) d xi` for `k = 0, 1, 2`.
fn smoothed_moments(b: f64, sigma: f64) -> [f64; 3] {
    let (z1, z0) = (b / sigma, (b - 1.0) / sigma);
    let (m1, m0) = (phi_moments(z1), phi_moments(z0));
    let j = [m1[0] - m0[0], m1[1] - m0[1], m1[2] - m0[2]];
    [
        sigma * j[0],
        sigma * (b * j[0] - sigma * j[1]),
        sigma * (b * b * j[0] - 2.0 * b * sigma * j[1] + sigma * sigma * j[2]),
    ]
}

/// `int_0^1 xi^k phi((b - xi)/sigma) / sigma d xi` for `k = 0, 1, 2`.
fn face_moments(b: f64, sigma: f64) -> [f64; 3] {
    let (z1, z0) = (b / sigma, (b - 1.0) / sigma);
    let (m1, m0) = (pdf_moments(z1), pdf_moments(z0));
    let j = [m1[0] - m0[0], m1[1] - m0[1], m1[2] - m0[2]];
    [
        j[0],
        b * j[0] - sigma * j[1],
        b * b * j[0] - 2.0 * b * sigma * j[1] + sigma * sigma * j[2],
    ]
}

/// Velocity kernel over signed offsets `-half..=half`, stored at `m + half`.
#[derive(Debug, Clone)]
struct VKernel {
    half: usize,
    w: Vec<f64>,
}

impl VKernel {
    fn gaussian(s: f64, dv: f64, nv: usize) -> Self {
        let one = heat_weights(s, dv, nv - 1);
        let half = one.len() - 1;
        let w = (0..=2 * half)
            .map(|q| one[(q as isize - half as isize).unsigned_abs()])
            .collect();
        Self { half, w }
    }

    /// `g(m) (m dv) / (2s)`, the discrete `d/dw` of the Gaussian factor.
    fn derivative(s: f64, dv: f64, nv: usize) -> Self {
        let mut k = Self::gaussian(s, dv, nv);
        let half = k.half as isize;
        for (q, w) in k.w.iter_mut().enumerate() {
            *w *= (q as isize - half) as f64 * dv / (2.0 * s);
        }
        k
    }

    #[inline]
    fn at(&self, m: isize) -> f64 {
        if m.unsigned_abs() > self.half {
            0.0
        } else {
            self.w[(m + self.half as isize) as usize]
        }
    }
}

/// `out(x, v) = sum_w a(v1 - w1) b(v2 - w2) X_{v1 + w1}[src(., w)](x)` where
/// `X` shifts by `s (v1 + w1)/2` and smooths with variance `s^3/6`.
fn kinetic_convolve(src: &DistField, s: f64, a: &VKernel, b: &VKernel, mode: XMode) -> DistField {
    let g = src.grid;
    let (nx, nv) = (g.nx, g.nv);
    // Convolve along v2 first: tmp[(j1, k2)] is an x-line.
    let lines: Vec<[Vec<f64>; 3]> = (0..nv * nv)
        .into_par_iter()
        .map(|q| {
            let (j1, k2) = (q / nv, q % nv);
            let line: Vec<f64> = (0..nx)
                .map(|ix| {
                    let mut acc = 0.0;
                    for j2 in 0..nv {
                        let w = b.at(k2 as isize - j2 as isize);
                        if w != 0.0 {
                            acc += w * src.values[g.index(ix, j1, j2)];
                        }
                    }
                    acc
                })
                .collect();
            let p = Parabolas::new(&line, Boundary::Periodic);
            let c1: Vec<f64> = p.da.iter().zip(&p.a6).map(|(d, a6)| d + a6).collect();
            let c2: Vec<f64> = p.a6.iter().map(|a6| -a6).collect();
            [p.al.clone(), c1, c2]
        })
        .collect();
    let sigma = (s * s * s / 6.0).sqrt() / g.dx;
    let stencils: Vec<XStencil> = (0..2 * nv - 1)
        .map(|m| {
            // v1 + w1 for index sum m.
            let vsum = 2.0 * (-g.v_max) + (m as f64 + 1.0) * g.dv;
            XStencil::new(0.5 * s * vsum / g.dx, sigma, mode)
        })
        .collect();
    let nonneg = mode == XMode::Average && a.w.iter().chain(&b.w).all(|&w| w >= 0.0);
    let blocks: Vec<Vec<f64>> = (0..nv)
        .into_par_iter()
        .map(|k1| {
            let mut block = vec![0.0; nv * nx];
            for j1 in 0..nv {
                let wa = a.at(k1 as isize - j1 as isize);
                if wa == 0.0 {
                    continue;
                }
                let st = &stencils[k1 + j1];
                for k2 in 0..nv {
                    let dst = &mut block[k2 * nx..(k2 + 1) * nx];
                    if nonneg {
                        st.apply(&lines[j1 * nv + k2], dst, wa);
                    } else {
                        st.apply_signed(&lines[j1 * nv + k2], dst, wa);
                    }
                }
            }
            block
        })
        .collect();
    let mut out = DistField::zeros(g);
    for (k1, block) in blocks.iter().enumerate() {
        for k2 in 0..nv {
            for ix in 0..nx {
                out.values[g.index(ix, k1, k2)] = block[k2 * nx + ix];
            }
        }
    }
    out
}

/// `H(t) = int int G(t, x, v, 0, y, w) f0(y, w) dw dy` on the grid.
pub fn apply_h(f0: &DistField, t: f64) -> Result<DistField> {
    check_elapsed(t)?;
    let g = f0.grid;
    let k = VKernel::gaussian(t, g.dv, g.nv);
    Ok(kinetic_convolve(f0, t, &k, &k, XMode::Average))
}

/// `int int grad_w G(s) . h dw dy` for a vector density `h = (h1, h2)`.
fn gradient_term(h1: &DistField, h2: &DistField, s: f64) -> DistField {
    let g = h1.grid;
    let gauss = VKernel::gaussian(s, g.dv, g.nv);
    let deriv = VKernel::derivative(s, g.dv, g.nv);
    let a = kinetic_convolve(h1, s, &deriv, &gauss, XMode::Average);
    let c = kinetic_convolve(h2, s, &gauss, &deriv, XMode::Average);
    let faces = kinetic_convolve(h1, s, &gauss, &gauss, XMode::LeftFace);
    let mut out = a.add(&c);
    // 3u/s^2 G = -(s/2) d_x G: cell average of the derivative from face values.
    let factor = -0.5 * s / g.dx;
    for ix in 0..g.nx {
        let ip = (ix + 1) % g.nx;
        for k in 0..g.slice_len() {
            let n = g.slice_len();
            out.values[ix * n + k] += factor * (faces.values[ip * n + k] - faces.values[ix * n + k]);
        }
    }
    out
}

fn force_density(f: &DistField, fs: &FieldState, opts: &ForceOptions) -> (DistField, DistField) {
    let g = f.grid;
    let mut h1 = DistField::zeros(g);
    let mut h2 = DistField::zeros(g);
    for ix in 0..g.nx {
        let lf = fs.at(ix);
        for k1 in 0..g.nv {
            for k2 in 0..g.nv {
                let idx = g.index(ix, k1, k2);
                let (a, b) = lorentz_force(lf, g.v(k1), g.v(k2), opts);
                h1.values[idx] = a * f.values[idx];
                h2.values[idx] = b * f.values[idx];
            }
        }
    }
    (h1, h2)
}

/// Right side `H + int_0^t int int grad_w G . (K f)` at the last sample time.
///
/// The time integral uses one node per sample interval: the kernel at the
/// interval midpoint and `K f` averaged over the interval endpoints, so the
/// integrable `(t - tau)^(-1/2)` endpoint is never evaluated.
pub fn duhamel_rhs(
    f_path: &[DistField],
    field_path: &[FieldState],
    times: &[f64],
    opts: &ForceOptions,
) -> Result<DistField> {
    if f_path.len() < 3 || field_path.len() != f_path.len() || times.len() != f_path.len() {
        return Err(Error::InsufficientSamples {
            needed: 3,
            got: f_path.len().min(field_path.len()).min(times.len()),
        });
    }
    let t = *times.last().unwrap();
    let mut rhs = apply_h(&f_path[0], t - times[0])?;
    let forces: Vec<(DistField, DistField)> = f_path
        .iter()
        .zip(field_path)
        .map(|(f, fs)| force_density(f, fs, opts))
        .collect();
    for k in 0..f_path.len() - 1 {
        let dtau = times[k + 1] - times[k];
        let s = t - 0.5 * (times[k] + times[k + 1]);
        let h1 = forces[k].0.add(&forces[k + 1].0).scaled(0.5);
        let h2 = forces[k].1.add(&forces[k + 1].1).scaled(0.5);
        let term = gradient_term(&h1, &h2, s);
        rhs = rhs.add(&term.scaled(dtau));
    }
    Ok(rhs)
}

/// `|| f(t) - rhs ||_2` for a sampled trajectory.
pub fn duhamel_residual(
    f_path: &[DistField],
    field_path: &[FieldState],
    times: &[f64],
    opts: &ForceOptions,
) -> Result<f64> {
    let rhs = duhamel_rhs(f_path, field_path, times, opts)?;
    Ok(weighted_l2_norm(&f_path.last().unwrap().sub(&rhs), WeightSpec::V0Power(0.0)))
}

const QUAD_TOL: f64 = 1e-11;

/// Integrate `g` over `[a, b]`, splitting at the listed interior points.
fn integrate_split(g: impl Fn(f64) -> f64, a: f64, b: f64, cuts: &[f64], tol: f64) -> f64 {
    let mut pts = vec![a];
    pts.extend(cuts.iter().copied().filter(|c| *c > a && *c < b));
    pts.push(b);
    pts.windows(2)
        .map(|w| quadrature::integrate(&g, w[0], w[1], tol).integral)
        .sum()
}

/// `int int kernel(y, w) dw dy` by nested adaptive quadrature over the
/// Gaussian supports, with the y-window following the transport centre.
fn nested_integral(s: f64, variant: KernelVariant, integrand: impl Fn(&KernelEval) -> f64 + Sync) -> f64 {
    let (x, v) = (0.0, (0.0, 0.0));
    let sv = match variant {
        KernelVariant::Exact => s,
        KernelVariant::DoubledVelocityElapsed => 2.0 * s,
    };
    let wr = 14.0 * (2.0 * sv).sqrt();
    let yr = 14.0 * (s * s * s / 6.0).sqrt();
    let inner = |w1: f64, w2: f64| {
        let centre = x - 0.5 * s * (v.0 + w1);
        integrate_split(
            |y| integrand(&KernelEval { s, x, v, y, w: (w1, w2) }),
            centre - yr,
            centre + yr,
            &[centre],
            QUAD_TOL,
        )
    };
    let middle = |w1: f64| integrate_split(|w2| inner(w1, w2), v.1 - wr, v.1 + wr, &[v.1], QUAD_TOL);
    integrate_split(middle, v.0 - wr, v.0 + wr, &[v.0], QUAD_TOL)
}

/// `int int G dw dy` by adaptive quadrature; equals 1 for the exact kernel.
pub fn kernel_mass(s: f64, variant: KernelVariant) -> Result<f64> {
    check_elapsed(s)?;
    Ok(nested_integral(s, variant, |ke| kernel_value(ke, variant)))
}

/// `int int |grad_w G| dw dy` by adaptive quadrature.
pub fn grad_g_mass(s: f64) -> Result<f64> {
    check_elapsed(s)?;
    Ok(nested_integral(s, KernelVariant::Exact, |ke| {
        let (a, b) = grad_w_g(ke).unwrap_or((0.0, 0.0));
        a.hypot(b)
    }))
}
