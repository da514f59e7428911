//! End-to-end runs checked against stored output and closed-form identities.
//! Set `VMFP_BLESS=1` to rewrite the stored CSV after an intended change.

use std::path::PathBuf;

use vmfp_core::diagnostics::{parse_csv, to_csv};
use vmfp_core::driver::simulate;
use vmfp_core::scenario::{parse_config, Config};

fn beam_config() -> Config {
    parse_config(
        r#"
[grid]
nx = 8
x_len = 2.0
nv = 16
v_max = 8.0

[scenario]
name = "beam"
amplitude = 0.2

[run]
t_end = 1.0
output_every = 2
"#,
    )
    .unwrap()
}

#[test]
fn beam_diagnostics_match_golden_csv() {
    let csv = to_csv(&simulate(&beam_config(), |_, _| {}).unwrap().records);
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/beam_small.csv");
    if std::env::var_os("VMFP_BLESS").is_some() {
        std::fs::write(&path, &csv).unwrap();
    }
    let golden = std::fs::read_to_string(&path).unwrap();
    assert_eq!(csv, golden, "diagnostics drifted from {}", path.display());
    assert_eq!(parse_csv(&golden).unwrap().len(), 3);
}

#[test]
fn force_free_energy_grows_at_four_times_mass() {
    let mut c = Config::default();
    c.grid.nx = 16;
    c.grid.x_len = 4.0;
    c.grid.nv = 64;
    c.grid.v_max = 10.0;
    c.run.t_end = 1.0;
    let out = simulate(&c, |_, _| {}).unwrap();
    let first = out.records[0];
    for r in &out.records[1..] {
        let expected = 4.0 * first.mass * r.t;
        let got = r.e_total - first.e_total;
        assert!((got - expected).abs() <= 0.01 * expected, "t = {}: {got} vs {expected}", r.t);
    }
}

#[test]
fn vacuum_wave_energy_is_constant() {
    let mut c = Config::default();
    c.grid.nx = 32;
    c.grid.x_len = 4.0;
    c.grid.nv = 8;
    c.scenario.name = "vacuum-wave".into();
    c.run.t_end = 4.0;
    let out = simulate(&c, |_, _| {}).unwrap();
    let e0 = out.records[0].e_total;
    assert!(e0 > 0.0);
    assert!(out.records.iter().all(|r| (r.e_total - e0).abs() <= 1e-12));
    assert_eq!(out.records.len(), 33);
}
