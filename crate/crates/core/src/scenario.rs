//! Run configuration, initial data and snapshot files.

use std::f64::consts::PI;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fields::{e1_from_density, Background, FieldState};
use crate::kinetic::{ForceOptions, SimState};
use crate::phase_space::{moment_density, total_mass, DistField, ExponentSet, PhaseGrid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub nx: usize,
    pub x_len: f64,
    pub nv: usize,
    pub v_max: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            nx: 64,
            x_len: 8.0 * PI,
            nv: 64,
            v_max: 8.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExponentConfig {
    pub a: f64,
    pub eps: f64,
    pub delta: f64,
}

impl Default for ExponentConfig {
    fn default() -> Self {
        let e = ExponentSet::default();
        Self {
            a: e.a,
            eps: e.eps,
            delta: e.delta,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// One of `maxwellian`, `beam`, `vacuum-wave`, `steep`.
    pub name: String,
    /// Density modulation `A_p` in `n(x) = 1 + A_p cos(2 pi k x / L)`.
    pub amplitude: f64,
    pub mode: u32,
    pub theta: f64,
    /// Beam drift in `v2`.
    pub drift: f64,
    /// Amplitude of `E2` and `B` in the vacuum wave.
    pub wave_amplitude: f64,
    /// Radius and width of the `steep` plateau edge.
    pub radius: f64,
    pub width: f64,
    /// x-independent background (only globally neutral) instead of the
    /// cell-wise neutral one.
    pub static_background: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            name: "maxwellian".into(),
            amplitude: 0.0,
            mode: 1,
            theta: 1.0,
            drift: 1.0,
            wave_amplitude: 0.1,
            radius: 2.0,
            width: 0.05,
            static_background: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub t_end: f64,
    /// Steps between diagnostics records.
    pub output_every: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            t_end: 1.0,
            output_every: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptionsConfig {
    pub friction: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cutoff_r: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToleranceConfig {
    pub neutral_tol: f64,
    pub gauss_tol: f64,
    pub cfl_guard: f64,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        Self {
            neutral_tol: 1e-10,
            gauss_tol: 1e-8,
            cfl_guard: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PicardConfig {
    pub t_end: f64,
    pub n_max: usize,
    pub tol: f64,
}

impl Default for PicardConfig {
    fn default() -> Self {
        Self {
            t_end: 0.1,
            n_max: 12,
            tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub grid: GridConfig,
    pub exponents: ExponentConfig,
    pub scenario: ScenarioConfig,
    pub run: RunConfig,
    pub options: OptionsConfig,
    pub tolerances: ToleranceConfig,
    pub picard: PicardConfig,
}

impl Config {
    pub fn grid(&self) -> Result<PhaseGrid> {
        let g = &self.grid;
        PhaseGrid::new(g.nx, g.x_len, g.nv, g.v_max)
    }

    pub fn exponents(&self) -> ExponentSet {
        ExponentSet {
            a: self.exponents.a,
            eps: self.exponents.eps,
            delta: self.exponents.delta,
        }
    }

    pub fn force_options(&self) -> ForceOptions {
        ForceOptions {
            cutoff_r: self.options.cutoff_r,
            friction: self.options.friction,
            cfl_guard: self.tolerances.cfl_guard,
        }
    }

    /// Time step `dt = dx`.
    pub fn dt(&self) -> f64 {
        self.grid.x_len / self.grid.nx as f64
    }

    /// Number of steps covering `[0, t_end]`, rounded to the nearest integer.
    pub fn steps(&self) -> usize {
        ((self.run.t_end / self.dt()).round() as usize).max(1)
    }

    pub fn picard_steps(&self) -> usize {
        ((self.picard.t_end / self.dt()).round() as usize).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, n) in [("grid.nx", self.grid.nx), ("grid.nv", self.grid.nv)] {
            if !n.is_power_of_two() {
                return Err(Error::HypothesisViolation(format!("{name} must be a power of two (got {n})")));
            }
        }
        self.grid()?;
        self.exponents().validate()?;
        let positive = [
            ("run.t_end", self.run.t_end),
            ("scenario.theta", self.scenario.theta),
            ("scenario.width", self.scenario.width),
            ("tolerances.neutral_tol", self.tolerances.neutral_tol),
            ("tolerances.gauss_tol", self.tolerances.gauss_tol),
            ("tolerances.cfl_guard", self.tolerances.cfl_guard),
            ("picard.t_end", self.picard.t_end),
            ("picard.tol", self.picard.tol),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::HypothesisViolation(format!("{name} > 0 (got {v})")));
            }
        }
        if self.run.output_every == 0 {
            return Err(Error::HypothesisViolation("run.output_every >= 1".into()));
        }
        if self.picard.n_max == 0 {
            return Err(Error::HypothesisViolation("picard.n_max >= 1".into()));
        }
        if let Some(r) = self.options.cutoff_r {
            if !(r.is_finite() && r > 0.0) {
                return Err(Error::HypothesisViolation(format!("options.cutoff_r > 0 (got {r})")));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical serialisation, hex encoded.
    pub fn hash(&self) -> String {
        let text = toml::to_string(self).unwrap_or_default();
        Sha256::digest(text.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// The `section.key` on the given 1-based line of a config file.
fn field_at_line(text: &str, line: usize) -> String {
    let mut section = String::new();
    for (k, l) in text.lines().enumerate() {
        let l = l.trim();
        if l.starts_with('[') {
            section = l.trim_matches(|c| c == '[' || c == ']').trim().to_string();
        }
        if k + 1 == line {
            return match l.split_once('=') {
                Some((key, _)) if section.is_empty() => key.trim().to_string(),
                Some((key, _)) => format!("{section}.{}", key.trim()),
                None => section,
            };
        }
    }
    String::new()
}

fn parse_error(text: &str, e: toml::de::Error) -> Error {
    let line = e.span().map_or(0, |s| text[..s.start.min(text.len())].matches('\n').count() + 1);
    let mut field = field_at_line(text, line);
    if let Some(rest) = e.message().strip_prefix("unknown field `") {
        if let Some(name) = rest.split('`').next() {
            if !field.ends_with(name) {
                field = name.to_string();
            }
        }
    }
    Error::Parse {
        line,
        field,
        message: e.message().trim().to_string(),
    }
}

pub fn parse_config(text: &str) -> Result<Config> {
    parse_config_with(text, &[])
}

/// Parse and validate, then apply `section.key=value` overrides.
pub fn parse_config_with(text: &str, overrides: &[String]) -> Result<Config> {
    let cfg: Config = toml::from_str(text).map_err(|e| parse_error(text, e))?;
    let cfg = apply_overrides(cfg, overrides)?;
    cfg.validate()?;
    Ok(cfg)
}

fn override_error(key: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        line: 0,
        field: key.to_string(),
        message: message.into(),
    }
}

pub fn apply_overrides(mut cfg: Config, overrides: &[String]) -> Result<Config> {
    for item in overrides {
        let (key, raw) = item
            .split_once('=')
            .ok_or_else(|| override_error(item, "expected KEY=VALUE"))?;
        let key = key.trim();
        let (section, name) = key
            .split_once('.')
            .ok_or_else(|| override_error(key, "expected section.key"))?;
        let value = format!("v = {}", raw.trim())
            .parse::<toml::Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
        let mut table = toml::Table::try_from(&cfg).map_err(|e| override_error(key, e.to_string()))?;
        table
            .entry(section.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| override_error(key, "not a section"))?
            .insert(name.to_string(), value);
        cfg = Config::deserialize(toml::Value::Table(table)).map_err(|e| override_error(key, e.message().trim()))?;
    }
    Ok(cfg)
}

fn profile(cfg: &Config, x: f64) -> f64 {
    let s = &cfg.scenario;
    1.0 + s.amplitude * (2.0 * PI * s.mode as f64 * x / cfg.grid.x_len).cos()
}

/// Initial state for the configured scenario. `f` is scaled to unit mass;
/// `phi` equals `int f dv` cell by cell unless a static background is
/// requested, in which case it is the uniform density of equal mass.
pub fn make_initial(cfg: &Config) -> Result<SimState> {
    let g = cfg.grid()?;
    let s = &cfg.scenario;
    let th = s.theta;
    let gauss = move |v1: f64, v2: f64| (-(v1 * v1 + v2 * v2) / (2.0 * th)).exp() / (2.0 * PI * th);
    let mut fields = FieldState::zeros(g.nx);
    let f = match s.name.as_str() {
        "maxwellian" => DistField::from_fn(g, |x, v1, v2| profile(cfg, x) * gauss(v1, v2)),
        "beam" => DistField::from_fn(g, |x, v1, v2| profile(cfg, x) * gauss(v1, v2 - s.drift)),
        "steep" => DistField::from_fn(g, |x, v1, v2| {
            profile(cfg, x) * 0.5 * (1.0 - ((v1.hypot(v2) - s.radius) / s.width).tanh())
        }),
        "vacuum-wave" => {
            let k = 2.0 * PI * s.mode as f64 / g.x_len;
            let wave: Vec<f64> = (0..g.nx).map(|i| s.wave_amplitude * (k * g.x(i)).sin()).collect();
            let mean = wave.iter().sum::<f64>() / g.nx as f64;
            fields.e2 = wave.iter().map(|w| w - mean).collect();
            fields.b = fields.e2.clone();
            DistField::zeros(g)
        }
        other => return Err(Error::UnknownScenario(other.to_string())),
    };
    let m = total_mass(&f);
    let f = if m > 0.0 { f.scaled(1.0 / m) } else { f };
    let density = moment_density(&f, |_, _| 1.0);
    let phi = if s.static_background {
        vec![density.iter().sum::<f64>() / g.nx as f64; g.nx]
    } else {
        density.clone()
    };
    let rho: Vec<f64> = density.iter().zip(&phi).map(|(n, p)| n - p).collect();
    fields.e1 = e1_from_density(&rho, g.dx, cfg.tolerances.neutral_tol)?;
    Ok(SimState {
        t: 0.0,
        f,
        fields,
        bg: Background { phi },
        v_leak: 0.0,
    })
}

const MAGIC: &str = "VMFP";
const VERSION: &str = "1";

/// A saved state with the metadata needed to interpret it.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub state: SimState,
    pub exponents: ExponentSet,
    pub scenario_hash: String,
}

/// Payload order: `f`, `E1`, `E2`, `B`, `phi`.
pub fn payload_len(nx: usize, nv: usize) -> usize {
    nx * nv * nv + 4 * nx
}

pub fn encode_snapshot(snap: &Snapshot) -> Vec<u8> {
    let s = &snap.state;
    let g = s.f.grid;
    let e = snap.exponents;
    let n = payload_len(g.nx, g.nv);
    let mut out = format!(
        "{MAGIC}{VERSION}\nversion = {VERSION}\nnx = {}\nx_len = {:?}\nnv = {}\nv_max = {:?}\n\
         a = {:?}\neps = {:?}\ndelta = {:?}\nt = {:?}\nv_leak = {:?}\nscenario_hash = {}\n\
         payload = f,E1,E2,B,phi\npayload_len = {n}\n\n",
        g.nx, g.x_len, g.nv, g.v_max, e.a, e.eps, e.delta, s.t, s.v_leak, snap.scenario_hash
    )
    .into_bytes();
    out.reserve(8 * n);
    let parts: [&[f64]; 5] = [&s.f.values, &s.fields.e1, &s.fields.e2, &s.fields.b, &s.bg.phi];
    for part in parts {
        for v in part {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_snapshot(bytes: &[u8]) -> Result<Snapshot> {
    let corrupt = |m: &str| Error::CorruptPayload(m.to_string());
    if bytes.len() < MAGIC.len() + 1 || &bytes[..MAGIC.len()] != MAGIC.as_bytes() {
        return Err(corrupt("missing magic bytes"));
    }
    let split = bytes
        .windows(2)
        .position(|w| w == b"\n\n")
        .ok_or_else(|| corrupt("unterminated header"))?;
    let header = std::str::from_utf8(&bytes[..split]).map_err(|_| corrupt("header is not UTF-8"))?;
    let mut lines = header.lines();
    let magic = lines.next().unwrap_or("");
    if magic != format!("{MAGIC}{VERSION}") {
        return Err(Error::VersionMismatch {
            expected: format!("{MAGIC}{VERSION}"),
            found: magic.to_string(),
        });
    }
    let mut kv = std::collections::HashMap::new();
    for l in lines {
        let (k, v) = l.split_once('=').ok_or_else(|| corrupt("malformed header line"))?;
        kv.insert(k.trim().to_string(), v.trim().to_string());
    }
    let get = |k: &str| kv.get(k).ok_or_else(|| corrupt(&format!("header lacks `{k}`")));
    let num = |k: &str| -> Result<f64> { get(k)?.parse().map_err(|_| corrupt(&format!("bad `{k}`"))) };
    let int = |k: &str| -> Result<usize> { get(k)?.parse().map_err(|_| corrupt(&format!("bad `{k}`"))) };
    if get("version")? != VERSION {
        return Err(Error::VersionMismatch {
            expected: VERSION.into(),
            found: get("version")?.clone(),
        });
    }
    let grid = PhaseGrid::new(int("nx")?, num("x_len")?, int("nv")?, num("v_max")?)
        .map_err(|e| Error::CorruptPayload(e.to_string()))?;
    let n = payload_len(grid.nx, grid.nv);
    if int("payload_len")? != n {
        return Err(corrupt("header grid does not match payload length"));
    }
    let body = &bytes[split + 2..];
    if body.len() != 8 * n {
        return Err(Error::CorruptPayload(format!("expected {} payload bytes, found {}", 8 * n, body.len())));
    }
    let mut vals = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let mut take = |k: usize| -> Vec<f64> { vals.by_ref().take(k).collect() };
    let f = DistField {
        grid,
        values: take(grid.len()),
    };
    let fields = FieldState {
        e1: take(grid.nx),
        e2: take(grid.nx),
        b: take(grid.nx),
    };
    let phi = take(grid.nx);
    Ok(Snapshot {
        state: SimState {
            t: num("t")?,
            f,
            fields,
            bg: Background { phi },
            v_leak: num("v_leak")?,
        },
        exponents: ExponentSet {
            a: num("a")?,
            eps: num("eps")?,
            delta: num("delta")?,
        },
        scenario_hash: get("scenario_hash")?.clone(),
    })
}

/// Write to a temporary sibling, then rename over `path`.
pub fn save_snapshot(snap: &Snapshot, path: &Path) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = std::path::PathBuf::from(tmp);
    let write = || -> std::io::Result<()> {
        let mut file = fs::File::create(&tmp)?;
        file.write_all(&encode_snapshot(snap))?;
        file.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

pub fn load_snapshot(path: &Path) -> Result<Snapshot> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_snapshot(&bytes)
}
