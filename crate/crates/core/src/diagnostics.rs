//! Conserved quantities, norms and identity residuals, recorded as time series.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fields::{field_energy, gauss_residual, FieldState};
use crate::kinetic::{charge_current, SimState};
use crate::phase_space::{
    f_norm, moment_density, slice_sum, sup_norm_weighted, total_mass, weighted_l2_norm, DistField, ExponentSet,
    ScalarField, WeightSpec,
};

/// `sum f dx dv^2`.
pub fn mass(f: &DistField) -> f64 {
    total_mass(f)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyReport {
    pub total: f64,
    pub kinetic: f64,
    pub field: f64,
}

pub fn kinetic_energy(f: &DistField) -> f64 {
    let dens = moment_density(f, |v1, v2| v1 * v1 + v2 * v2);
    dens.iter().sum::<f64>() * f.grid.dx
}

pub fn energy_report(s: &SimState) -> EnergyReport {
    let kinetic = kinetic_energy(&s.f);
    let field = field_energy(&s.fields, s.f.grid.dx);
    EnergyReport {
        total: kinetic + field,
        kinetic,
        field,
    }
}

/// Energy density `int |v|^2 f dv + |E|^2 + B^2` per cell.
fn energy_density(f: &DistField, fs: &FieldState) -> ScalarField {
    let kin = moment_density(f, |v1, v2| v1 * v1 + v2 * v2);
    kin.iter()
        .enumerate()
        .map(|(i, k)| k + fs.e1[i] * fs.e1[i] + fs.e2[i] * fs.e2[i] + fs.b[i] * fs.b[i])
        .collect()
}

/// Energy flux `int v1 |v|^2 f dv + 2 E2 B` per cell.
fn energy_flux(f: &DistField, fs: &FieldState) -> ScalarField {
    let q = moment_density(f, |v1, v2| v1 * (v1 * v1 + v2 * v2));
    q.iter().enumerate().map(|(i, m)| m + 2.0 * fs.e2[i] * fs.b[i]).collect()
}

fn last_pair(history: &[SimState]) -> Result<(&SimState, &SimState, f64)> {
    if history.len() < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: history.len(),
        });
    }
    let (a, b) = (&history[history.len() - 2], &history[history.len() - 1]);
    let dt = b.t - a.t;
    if !(dt > 0.0) {
        return Err(Error::NonPositiveElapsed(dt));
    }
    a.f.grid.check_same(&b.f.grid)?;
    Ok((a, b, dt))
}

/// Residual of `d_t e + d_x m - 4 int f dv` between the last two states,
/// located at their time midpoint.
pub fn local_energy_residual(history: &[SimState]) -> Result<ScalarField> {
    let (a, b, dt) = last_pair(history)?;
    let g = a.f.grid;
    let (ea, eb) = (energy_density(&a.f, &a.fields), energy_density(&b.f, &b.fields));
    let (ma, mb) = (energy_flux(&a.f, &a.fields), energy_flux(&b.f, &b.fields));
    let (na, nb) = (moment_density(&a.f, |_, _| 1.0), moment_density(&b.f, |_, _| 1.0));
    let n = g.nx;
    Ok((0..n)
        .map(|i| {
            let (ip, im) = ((i + 1) % n, (i + n - 1) % n);
            let dm = 0.5 * (ma[ip] + mb[ip] - ma[im] - mb[im]) / (2.0 * g.dx);
            (eb[i] - ea[i]) / dt + dm - 2.0 * (na[i] + nb[i])
        })
        .collect())
}

/// `||grad_v f||_2^2` with centred differences, zero outside the box.
pub fn dissipation(f: &DistField) -> f64 {
    let g = f.grid;
    let nv = g.nv;
    let inv = 1.0 / (2.0 * g.dv);
    let at = |s: &[f64], k1: isize, k2: isize| -> f64 {
        if k1 < 0 || k2 < 0 || k1 >= nv as isize || k2 >= nv as isize {
            0.0
        } else {
            s[k1 as usize * nv + k2 as usize]
        }
    };
    slice_sum(g.nx, |ix| {
        let s = f.slice(ix);
        let mut acc = 0.0;
        for k1 in 0..nv as isize {
            for k2 in 0..nv as isize {
                let d1 = (at(s, k1 + 1, k2) - at(s, k1 - 1, k2)) * inv;
                let d2 = (at(s, k1, k2 + 1) - at(s, k1, k2 - 1)) * inv;
                acc += d1 * d1 + d2 * d2;
            }
        }
        acc
    }) * g.cell_volume()
}

/// `||f||_2`.
pub fn l2_norm(f: &DistField) -> f64 {
    weighted_l2_norm(f, WeightSpec::V0Power(0.0))
}

/// `| (||f_b||^2 - ||f_a||^2) / dt + 2 ||grad_v f||^2 |` for the last two
/// states, the gradient term averaged over both ends.
pub fn dissipation_residual(history: &[SimState]) -> Result<f64> {
    let (a, b, dt) = last_pair(history)?;
    let la = l2_norm(&a.f);
    let lb = l2_norm(&b.f);
    let d = 0.5 * (dissipation(&a.f) + dissipation(&b.f));
    Ok(((lb * lb - la * la) / dt + 2.0 * d).abs())
}

/// `sum f^2 + t |grad_v f|^2 + t^2/2 |hess_v f|^2`, with 3-point second
/// derivatives and a doubly centred mixed derivative.
pub fn regularity_functional(f: &DistField, t: f64) -> f64 {
    let g = f.grid;
    let nv = g.nv;
    let (dv, dv2) = (g.dv, g.dv * g.dv);
    let at = |s: &[f64], k1: isize, k2: isize| -> f64 {
        if k1 < 0 || k2 < 0 || k1 >= nv as isize || k2 >= nv as isize {
            0.0
        } else {
            s[k1 as usize * nv + k2 as usize]
        }
    };
    slice_sum(g.nx, |ix| {
        let s = f.slice(ix);
        let mut acc = 0.0;
        for k1 in 0..nv as isize {
            for k2 in 0..nv as isize {
                let c = at(s, k1, k2);
                let (e, w) = (at(s, k1 + 1, k2), at(s, k1 - 1, k2));
                let (n, so) = (at(s, k1, k2 + 1), at(s, k1, k2 - 1));
                let d1 = (e - w) / (2.0 * dv);
                let d2 = (n - so) / (2.0 * dv);
                let h11 = (e - 2.0 * c + w) / dv2;
                let h22 = (n - 2.0 * c + so) / dv2;
                let h12 = (at(s, k1 + 1, k2 + 1) - at(s, k1 + 1, k2 - 1) - at(s, k1 - 1, k2 + 1)
                    + at(s, k1 - 1, k2 - 1))
                    / (4.0 * dv2);
                acc += c * c
                    + t * (d1 * d1 + d2 * d2)
                    + 0.5 * t * t * (h11 * h11 + 2.0 * h12 * h12 + h22 * h22);
            }
        }
        acc
    }) * g.cell_volume()
}

/// `max (1 + v2^2)^(p/2) |f|`.
pub fn v2_moment_sup(f: &DistField, p: f64) -> f64 {
    sup_norm_weighted(f, WeightSpec::RV2Power(p))
}

pub const COLUMNS: [&str; 22] = [
    "t",
    "mass",
    "v_leak",
    "e_kin",
    "e_field",
    "e_total",
    "e_slope_res",
    "l2_f",
    "diss",
    "diss_res",
    "wl2_g0",
    "wl2_ga2",
    "wl2_gal2",
    "sup_d",
    "sup_rv2_p2",
    "sup_rv2_p4",
    "sup_E",
    "sup_B",
    "gauss_res",
    "f_norm",
    "reg_func",
    "loc_e_res_max",
];

/// One row of the diagnostics time series. Residual columns compare with
/// the previous record and are zero on the first one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub mass: f64,
    pub v_leak: f64,
    pub e_kin: f64,
    pub e_field: f64,
    pub e_total: f64,
    pub e_slope_res: f64,
    pub l2_f: f64,
    pub diss: f64,
    pub diss_res: f64,
    pub wl2_g0: f64,
    pub wl2_ga2: f64,
    pub wl2_gal2: f64,
    pub sup_d: f64,
    pub sup_rv2_p2: f64,
    pub sup_rv2_p4: f64,
    pub sup_e: f64,
    pub sup_b: f64,
    pub gauss_res: f64,
    pub f_norm: f64,
    pub reg_func: f64,
    pub loc_e_res_max: f64,
}

impl DiagnosticsRecord {
    /// Diagnostics of `s`, with residuals against `prev` (the previous
    /// recorded state and its record) when given.
    pub fn compute(s: &SimState, prev: Option<(&SimState, &DiagnosticsRecord)>, exps: &ExponentSet) -> Result<Self> {
        let g = s.f.grid;
        let energy = energy_report(s);
        let l2 = l2_norm(&s.f);
        let diss = dissipation(&s.f);
        let rho = charge_current(&s.f, &s.bg).rho;
        let mass = mass(&s.f);
        let (e_slope_res, diss_res, loc_e_res_max) = match prev {
            None => (0.0, 0.0, 0.0),
            Some((ps, pr)) => {
                let pair = [ps.clone(), s.clone()];
                let dt = s.t - ps.t;
                let loc = local_energy_residual(&pair)?;
                let slope = (energy.total - pr.e_total) / dt - 2.0 * (mass + pr.mass);
                (slope, dissipation_residual(&pair)?, loc.iter().fold(0.0, |m: f64, v| m.max(v.abs())))
            }
        };
        Ok(Self {
            t: s.t,
            mass,
            v_leak: s.v_leak,
            e_kin: energy.kinetic,
            e_field: energy.field,
            e_total: energy.total,
            e_slope_res,
            l2_f: l2,
            diss,
            diss_res,
            wl2_g0: l2,
            wl2_ga2: weighted_l2_norm(&s.f, WeightSpec::V0Power(0.5 * exps.a)),
            wl2_gal2: weighted_l2_norm(&s.f, WeightSpec::V0Power(0.5 * exps.alpha())),
            sup_d: sup_norm_weighted(&s.f, WeightSpec::V0Power(exps.delta)),
            sup_rv2_p2: v2_moment_sup(&s.f, 2.0),
            sup_rv2_p4: v2_moment_sup(&s.f, 4.0),
            sup_e: s.fields.sup_e(),
            sup_b: s.fields.sup_b(),
            gauss_res: gauss_residual(&s.fields, &rho, g.dx),
            f_norm: f_norm(&s.f, exps),
            reg_func: regularity_functional(&s.f, s.t),
            loc_e_res_max,
        })
    }

    pub fn values(&self) -> [f64; 22] {
        [
            self.t,
            self.mass,
            self.v_leak,
            self.e_kin,
            self.e_field,
            self.e_total,
            self.e_slope_res,
            self.l2_f,
            self.diss,
            self.diss_res,
            self.wl2_g0,
            self.wl2_ga2,
            self.wl2_gal2,
            self.sup_d,
            self.sup_rv2_p2,
            self.sup_rv2_p4,
            self.sup_e,
            self.sup_b,
            self.gauss_res,
            self.f_norm,
            self.reg_func,
            self.loc_e_res_max,
        ]
    }

    pub fn from_values(v: [f64; 22]) -> Self {
        Self {
            t: v[0],
            mass: v[1],
            v_leak: v[2],
            e_kin: v[3],
            e_field: v[4],
            e_total: v[5],
            e_slope_res: v[6],
            l2_f: v[7],
            diss: v[8],
            diss_res: v[9],
            wl2_g0: v[10],
            wl2_ga2: v[11],
            wl2_gal2: v[12],
            sup_d: v[13],
            sup_rv2_p2: v[14],
            sup_rv2_p4: v[15],
            sup_e: v[16],
            sup_b: v[17],
            gauss_res: v[18],
            f_norm: v[19],
            reg_func: v[20],
            loc_e_res_max: v[21],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values().iter().all(|v| v.is_finite())
    }
}

/// Header plus one `{:.16e}` row per record, LF line endings.
pub fn to_csv(records: &[DiagnosticsRecord]) -> String {
    let mut s = COLUMNS.join(",");
    s.push('\n');
    for r in records {
        let row: Vec<String> = r.values().iter().map(|v| format!("{v:.16e}")).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

pub fn emit_csv(records: &[DiagnosticsRecord], path: &Path) -> Result<()> {
    if records.is_empty() {
        return Err(Error::InsufficientSamples { needed: 1, got: 0 });
    }
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(to_csv(records).as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn parse_csv(text: &str) -> Result<Vec<DiagnosticsRecord>> {
    let mut lines = text.lines().enumerate();
    let header = lines.next().map(|(_, l)| l).unwrap_or("");
    if header != COLUMNS.join(",") {
        return Err(Error::Parse {
            line: 1,
            field: "header".into(),
            message: "unexpected diagnostics columns".into(),
        });
    }
    lines
        .map(|(ln, line)| {
            let mut vals = [0.0; 22];
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != 22 {
                return Err(Error::Parse {
                    line: ln + 1,
                    field: "row".into(),
                    message: format!("expected 22 columns, found {}", cells.len()),
                });
            }
            for (k, c) in cells.iter().enumerate() {
                vals[k] = c.parse().map_err(|_| Error::Parse {
                    line: ln + 1,
                    field: COLUMNS[k].into(),
                    message: format!("not a number: {c}"),
                })?;
            }
            Ok(DiagnosticsRecord::from_values(vals))
        })
        .collect()
}

/// Least-squares line `y = slope x + intercept`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (sxy, sxx) = xs
        .iter()
        .zip(ys)
        .fold((0.0, 0.0), |(a, b), (x, y)| (a + (x - mx) * (y - my), b + (x - mx) * (x - mx)));
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}
