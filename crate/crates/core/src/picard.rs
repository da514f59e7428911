//! Cutoff Picard construction.
//!
//! The linearised map takes a sampled field path, evolves `f` with the force
//! frozen to that path and the magnetic term cut off at radius `R`, and
//! returns the fields generated by the resulting charge and current. The
//! iteration applies the map with `R_n = 2^n` starting from the field data
//! held constant in time.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fields::{e1_from_density, maxwell_step, Background, FieldState};
use crate::kinetic::{charge_current, linear_step, ForceOptions};
use crate::phase_space::{f_norm, DistField, ExponentSet};

/// Quintic smoothstep cutoff: 1 for `s <= -1`, 0 for `s >= 0`.
pub fn cutoff_psi(s: f64) -> f64 {
    if s <= -1.0 {
        1.0
    } else if s >= 0.0 {
        0.0
    } else {
        let u = s + 1.0;
        1.0 - u * u * u * (10.0 + u * (-15.0 + 6.0 * u))
    }
}

/// A trajectory sampled at the step times `t_n = n dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct Path1 {
    pub dt: f64,
    pub f: Vec<DistField>,
    pub fields: Vec<FieldState>,
    pub v_leak: f64,
}

impl Path1 {
    pub fn steps(&self) -> usize {
        self.fields.len() - 1
    }
}

/// `sqrt( sum [dE2^2 + dB^2 + (D+ dE2)^2 + (D+ dB)^2] dx )`.
pub fn h1_diff(a: &FieldState, b: &FieldState, dx: f64) -> Result<f64> {
    let n = a.nx();
    if b.nx() != n || a.e2.len() != n || a.b.len() != n || b.e2.len() != n || b.b.len() != n {
        return Err(Error::GridMismatch(format!("field lengths {} and {}", n, b.nx())));
    }
    let de2: Vec<f64> = a.e2.iter().zip(&b.e2).map(|(p, q)| p - q).collect();
    let db: Vec<f64> = a.b.iter().zip(&b.b).map(|(p, q)| p - q).collect();
    let mut acc = 0.0;
    for i in 0..n {
        let ip = (i + 1) % n;
        let d1 = (de2[ip] - de2[i]) / dx;
        let d2 = (db[ip] - db[i]) / dx;
        acc += de2[i] * de2[i] + db[i] * db[i] + d1 * d1 + d2 * d2;
    }
    Ok((acc * dx).sqrt())
}

/// Knobs shared by every application of the linearised map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearConfig {
    pub dt: f64,
    pub friction: bool,
    pub cfl_guard: f64,
    pub neutral_tol: f64,
}

/// The map `(E, B) -> (f~, E~, B~)` for cutoff radius `r` (`None`: no cutoff).
///
/// `field_path[n]` is the input field at `t_n`; the force over step `n` uses
/// the average of `field_path[n]` and `field_path[n + 1]`. `E1~` is the
/// antiderivative of `rho~` at each sample; `(E2~, B~)` are advanced from
/// `(E2_0, B_0)` with the current of `f~` at step midpoints.
pub fn linearized_solve(
    field_path: &[FieldState],
    r: Option<f64>,
    f0: &DistField,
    bg: &Background,
    cfg: &LinearConfig,
) -> Result<Path1> {
    let g = f0.grid;
    let opts = ForceOptions {
        cutoff_r: r,
        friction: cfg.friction,
        cfl_guard: cfg.cfl_guard,
    };
    let steps = field_path.len() - 1;
    let mut f = vec![f0.clone()];
    let mut leak = vec![0.0];
    for n in 0..steps {
        let mid = field_path[n].midpoint(&field_path[n + 1]);
        let (next, l) = linear_step(&f[n], &mid, cfg.dt, &opts)?;
        leak.push(leak[n] + l);
        f.push(next);
    }
    let moments: Vec<_> = f.iter().map(|fk| charge_current(fk, bg)).collect();
    let mut fields = Vec::with_capacity(steps + 1);
    let mut cur = field_path[0].clone();
    cur.e1 = e1_from_density(&moments[0].rho, g.dx, cfg.neutral_tol)?;
    // Mass carried out through the velocity boundary is an exact charge deficit.
    fields.push(cur.clone());
    for n in 0..steps {
        let j1: Vec<f64> = moments[n].j1.iter().zip(&moments[n + 1].j1).map(|(a, b)| 0.5 * (a + b)).collect();
        let j2: Vec<f64> = moments[n].j2.iter().zip(&moments[n + 1].j2).map(|(a, b)| 0.5 * (a + b)).collect();
        cur = maxwell_step(&cur, &j1, &j2, cfg.dt, g.dx)?;
        cur.e1 = e1_from_density(&moments[n + 1].rho, g.dx, cfg.neutral_tol + leak[n + 1])?;
        fields.push(cur.clone());
    }
    Ok(Path1 {
        dt: cfg.dt,
        f,
        fields,
        v_leak: leak[steps],
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PicardRow {
    pub n: usize,
    pub r_n: f64,
    pub f_diff: f64,
    pub field_diff: f64,
    /// `sup_t (f-norm difference + H1 difference)`.
    pub metric: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PicardReport {
    pub rows: Vec<PicardRow>,
    pub converged: bool,
}

impl PicardReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("n,R_n,f_diff,field_diff,ratio\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                r.n, r.r_n, r.f_diff, r.field_diff, r.ratio
            ));
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(self.to_csv().as_bytes()).map_err(|e| Error::io(path, e))
    }

    /// `NoConvergence` unless converged or the last ratio is below one.
    pub fn verdict(&self) -> Result<()> {
        let ratio = self.rows.last().map_or(f64::NAN, |r| r.ratio);
        if self.converged || ratio < 1.0 {
            Ok(())
        } else {
            Err(Error::NoConvergence {
                iterations: self.rows.len(),
                ratio,
            })
        }
    }
}

/// Differences between two iterates, maximised over the sample times.
fn path_difference(a: &Path1, b: &Path1, exps: &ExponentSet, dx: f64) -> Result<(f64, f64, f64)> {
    let (mut fd, mut hd, mut total) = (0.0f64, 0.0f64, 0.0f64);
    for k in 0..a.fields.len() {
        let df = f_norm(&a.f[k].sub(&b.f[k]), exps);
        let dh = h1_diff(&a.fields[k], &b.fields[k], dx)?;
        fd = fd.max(df);
        hd = hd.max(dh);
        total = total.max(df + dh);
    }
    Ok((fd, hd, total))
}

/// Outcome of [`picard_iterate`]: the report and the last iterate.
#[derive(Debug, Clone)]
pub struct PicardOutcome {
    pub report: PicardReport,
    pub last: Path1,
}

/// Iterate `(f^{n+1}, E^{n+1}, B^{n+1}) = L^{2^n}(E^n, B^n)` over `[0, T]`
/// with `T = steps * dt`. Row `n` compares iterate `n + 1` with iterate `n`,
/// iterate 0 being `(f0, fields0)` held constant in time.
#[allow(clippy::too_many_arguments)]
pub fn picard_sequence(
    f0: &DistField,
    bg: &Background,
    fields0: &FieldState,
    steps: usize,
    cfg: &LinearConfig,
    exps: &ExponentSet,
    n_max: usize,
    tol: f64,
) -> Result<PicardOutcome> {
    let dx = f0.grid.dx;
    let mut prev = Path1 {
        dt: cfg.dt,
        f: vec![f0.clone(); steps + 1],
        fields: vec![fields0.clone(); steps + 1],
        v_leak: 0.0,
    };
    let mut rows: Vec<PicardRow> = Vec::new();
    for n in 0..n_max {
        let r_n = 2f64.powi(n as i32);
        let next = linearized_solve(&prev.fields, Some(r_n), f0, bg, cfg)?;
        let (f_diff, field_diff, metric) = path_difference(&next, &prev, exps, dx)?;
        let ratio = rows.last().map_or(f64::NAN, |r| metric / r.metric);
        rows.push(PicardRow { n, r_n, f_diff, field_diff, metric, ratio });
        prev = next;
        if metric < tol {
            return Ok(PicardOutcome {
                report: PicardReport { rows, converged: true },
                last: prev,
            });
        }
    }
    Ok(PicardOutcome {
        report: PicardReport { rows, converged: false },
        last: prev,
    })
}

/// [`picard_sequence`], failing with `NoConvergence` when `n_max` iterations
/// end without a contracting last ratio.
#[allow(clippy::too_many_arguments)]
pub fn picard_iterate(
    f0: &DistField,
    bg: &Background,
    fields0: &FieldState,
    steps: usize,
    cfg: &LinearConfig,
    exps: &ExponentSet,
    n_max: usize,
    tol: f64,
) -> Result<PicardOutcome> {
    let out = picard_sequence(f0, bg, fields0, steps, cfg, exps, n_max, tol)?;
    out.report.verdict()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase_space::{moment_density, weight_v0, PhaseGrid};
    use std::f64::consts::PI;

    #[test]
    fn psi_examples() {
        assert_eq!(cutoff_psi(-2.0), 1.0);
        assert_eq!(cutoff_psi(0.5), 0.0);
        assert!((cutoff_psi(-0.5) - 0.5).abs() < 1e-15);
        assert_eq!(cutoff_psi(-1.0), 1.0);
        assert_eq!(cutoff_psi(0.0), 0.0);
    }

    #[test]
    fn psi_monotone_and_c1() {
        let mut last = 1.0;
        for q in 0..=1000 {
            let s = -1.2 + 1.4 * q as f64 / 1000.0;
            let v = cutoff_psi(s);
            assert!(v <= last + 1e-15);
            assert!((0.0..=1.0).contains(&v));
            last = v;
        }
        let h = 1e-7;
        for s in [-1.0, 0.0] {
            let d = (cutoff_psi(s + h) - cutoff_psi(s - h)) / (2.0 * h);
            assert!(d.abs() < 1e-6, "{s}: {d}");
        }
    }

    #[test]
    fn psi_sandwich_and_decay_bound() {
        let g = PhaseGrid::new(1, 1.0, 128, 8.0).unwrap();
        let eps = 0.5;
        for r in [4.0, 8.0] {
            let mut worst: f64 = 0.0;
            for &v1 in &g.velocities() {
                for &v2 in &g.velocities() {
                    let s = v1.hypot(v2);
                    let (a, b) = (cutoff_psi(s - r), cutoff_psi(s - 2.0 * r));
                    assert!(a <= b);
                    if a != b {
                        assert!(s >= r - 1.0 && s <= 2.0 * r);
                    }
                    worst = worst.max((b - a) / weight_v0(v1, v2, 1.0 + eps / 2.0));
                }
            }
            assert!(worst <= r.powf(-eps / 2.0), "{r}: {worst}");
        }
    }

    #[test]
    fn h1_examples() {
        let n = 64;
        let len = 2.0;
        let dx = len / n as f64;
        let a = FieldState::zeros(n);
        assert_eq!(h1_diff(&a, &a, dx).unwrap(), 0.0);
        let mut b = FieldState::zeros(n);
        b.e2 = vec![0.3; n];
        assert!((h1_diff(&a, &b, dx).unwrap() - 0.3 * len.sqrt()).abs() < 1e-14);
        let k = 2.0 * PI / len;
        b.e2 = (0..n).map(|i| (k * (i as f64 + 0.5) * dx).sin()).collect();
        // int sin^2 + k^2 cos^2 over one period = (1 + k^2) L / 2.
        let exact = ((1.0 + k * k) * len / 2.0).sqrt();
        assert!((h1_diff(&a, &b, dx).unwrap() - exact).abs() < dx * dx * exact, "{}", h1_diff(&a, &b, dx).unwrap());
        assert!(matches!(h1_diff(&a, &FieldState::zeros(8), dx), Err(Error::GridMismatch(_))));
    }

    fn setup(nx: usize, x_len: f64, nv: usize, amp: f64) -> (DistField, Background, LinearConfig) {
        let g = PhaseGrid::new(nx, x_len, nv, 6.0).unwrap();
        let f = DistField::from_fn(g, |x, v1, v2| {
            (1.0 + amp * (2.0 * PI * x / x_len).cos()) * (-(v1 * v1 + (v2 - 0.5).powi(2)) / 2.0).exp() / (2.0 * PI)
        });
        let phi = vec![moment_density(&f, |_, _| 1.0).iter().sum::<f64>() / nx as f64; nx];
        let cfg = LinearConfig { dt: g.dx, friction: false, cfl_guard: 1.0, neutral_tol: 1e-10 };
        (f, Background { phi }, cfg)
    }

    #[test]
    fn zero_particles_give_vacuum_fields() {
        let (f, _, cfg) = setup(16, 1.6, 16, 0.0);
        let zero = DistField::zeros(f.grid);
        let bg0 = Background { phi: vec![0.0; 16] };
        let mut fs = FieldState::zeros(16);
        for i in 0..16 {
            let x = (i as f64 + 0.5) * cfg.dt;
            fs.e2[i] = (2.0 * PI * x / 1.6).sin();
            fs.b[i] = 0.5 * (2.0 * PI * x / 1.6).cos();
        }
        let out = picard_iterate(&zero, &bg0, &fs, 4, &cfg, &ExponentSet::default(), 5, 1e-8).unwrap();
        assert!(out.report.converged);
        assert_eq!(out.report.rows.len(), 2);
        assert_eq!(out.report.rows[1].metric, 0.0);
        assert!(out.last.f.iter().all(|f| f.values.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn everything_zero_gives_zero_iterates() {
        let (f, _, cfg) = setup(8, 0.8, 8, 0.0);
        let zero = DistField::zeros(f.grid);
        let bg0 = Background { phi: vec![0.0; 8] };
        let out = picard_iterate(&zero, &bg0, &FieldState::zeros(8), 3, &cfg, &ExponentSet::default(), 4, 1e-8).unwrap();
        assert!(out.report.rows.iter().all(|r| r.metric == 0.0));
        assert_eq!(out.report.rows.len(), 1);
    }

    #[test]
    fn zero_input_fields_give_force_free_evolution() {
        let (f, bg, cfg) = setup(16, 1.6, 16, 0.2);
        let path = vec![FieldState::zeros(16); 4];
        let cut = linearized_solve(&path, Some(1.0), &f, &bg, &cfg).unwrap();
        let free = linearized_solve(&path, None, &f, &bg, &cfg).unwrap();
        assert_eq!(cut.f, free.f);
        for k in 0..4 {
            let rho = charge_current(&cut.f[k], &bg).rho;
            let e1 = e1_from_density(&rho, cfg.dt, 1e-10 + cut.v_leak).unwrap();
            assert_eq!(cut.fields[k].e1, e1);
        }
    }

    #[test]
    fn inactive_cutoff_bit_identical() {
        let (f, bg, cfg) = setup(16, 1.6, 16, 0.2);
        let mut fs = FieldState::zeros(16);
        fs.b = (0..16).map(|i| 0.01 * (i as f64).sin()).collect();
        let path = vec![fs; 3];
        let r = 6.0 * 2f64.sqrt() + 1.0;
        assert_eq!(
            linearized_solve(&path, Some(r), &f, &bg, &cfg).unwrap(),
            linearized_solve(&path, None, &f, &bg, &cfg).unwrap()
        );
    }

    #[test]
    fn iteration_contracts_and_fixed_point_holds() {
        let (f, bg, cfg) = setup(32, 1.6, 32, 0.2);
        let rho = charge_current(&f, &bg).rho;
        let mut fs = FieldState::zeros(32);
        fs.e1 = e1_from_density(&rho, cfg.dt, 1e-10).unwrap();
        let exps = ExponentSet::default();
        let out = picard_iterate(&f, &bg, &fs, 4, &cfg, &exps, 12, 1e-8).unwrap();
        eprintln!("{:?}", out.report.rows);
        assert!(out.report.converged, "{:?}", out.report.rows);
        for r in out.report.rows.iter().skip(2) {
            assert!(r.ratio <= 0.8, "{:?}", out.report.rows);
        }
        let r = 2f64.powi(out.report.rows.len() as i32);
        let again = linearized_solve(&out.last.fields, Some(r), &f, &bg, &cfg).unwrap();
        let (_, _, metric) = path_difference(&again, &out.last, &exps, cfg.dt).unwrap();
        assert!(metric < 1e-8, "{metric}");
    }

    #[test]
    fn verdict_follows_last_ratio() {
        let row = |n, ratio| PicardRow { n, r_n: 1.0, f_diff: 1.0, field_diff: 1.0, metric: 2.0, ratio };
        let mut report = PicardReport { rows: vec![row(0, f64::NAN), row(1, 0.5)], converged: false };
        assert!(report.verdict().is_ok());
        report.rows.push(row(2, 1.5));
        assert!(matches!(report.verdict(), Err(Error::NoConvergence { iterations: 3, .. })));
        report.converged = true;
        assert!(report.verdict().is_ok());
        let single = PicardReport { rows: vec![row(0, f64::NAN)], converged: false };
        assert!(single.verdict().is_err());
    }

    #[test]
    fn report_csv_layout() {
        let report = PicardReport {
            rows: vec![PicardRow { n: 0, r_n: 1.0, f_diff: 0.5, field_diff: 0.25, metric: 0.75, ratio: f64::NAN }],
            converged: false,
        };
        let csv = report.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "n,R_n,f_diff,field_diff,ratio");
        assert_eq!(lines.len(), 2);
        assert!(lines[1].starts_with("0,1.0000000000000000e0,"));
    }
}
