use proptest::prelude::*;

use vmfp_core::diagnostics::{mass, parse_csv, to_csv, DiagnosticsRecord};
use vmfp_core::fields::{gauss_residual, maxwell_step, FieldState};
use vmfp_core::greens::apply_h;
use vmfp_core::kinetic::{charge_current, heat_weights, vmfp_step};
use vmfp_core::phase_space::{DistField, PhaseGrid};
use vmfp_core::picard::cutoff_psi;
use vmfp_core::scenario::{decode_snapshot, encode_snapshot, make_initial, parse_config_with, Config, Snapshot};

const SCENARIOS: [&str; 4] = ["maxwellian", "beam", "vacuum-wave", "steep"];

fn small(name: &str, amplitude: f64, mode: u32) -> Config {
    let mut c = Config::default();
    c.grid.nx = 8;
    c.grid.x_len = 2.0;
    c.grid.nv = 16;
    c.grid.v_max = 10.0;
    c.scenario.name = name.into();
    c.scenario.amplitude = amplitude;
    c.scenario.mode = mode;
    c
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn steps_conserve_mass_bounds_and_gauss(
        which in 0usize..4,
        amplitude in 0.0f64..0.5,
        mode in 1u32..3,
    ) {
        let c = small(SCENARIOS[which], amplitude, mode);
        let mut s = make_initial(&c).unwrap();
        let (m0, hi) = (mass(&s.f), s.f.max());
        let dx = s.f.grid.dx;
        // Charge leaves through the velocity boundary uniformly, and E1 follows
        // the cell-centred current, so Gauss holds up to both effects.
        let kdx = 2.0 * std::f64::consts::PI * mode as f64 / c.grid.x_len * dx;
        let truncation = 0.1 * amplitude * kdx * kdx;
        for _ in 0..4 {
            s = vmfp_step(&s, dx, &c.force_options()).unwrap();
            prop_assert!((mass(&s.f) + s.v_leak - m0).abs() <= 1e-12 * m0.max(1.0));
            prop_assert!(s.f.min() >= -1e-12 * hi);
            prop_assert!(s.f.max() <= hi * (1.0 + 1e-12));
            let rho = charge_current(&s.f, &s.bg).rho;
            let allowed = c.tolerances.gauss_tol + s.v_leak / c.grid.x_len + truncation;
            prop_assert!(gauss_residual(&s.fields, &rho, dx) <= allowed);
        }
    }

    #[test]
    fn snapshot_round_trip_is_bit_exact(which in 0usize..4, amplitude in 0.0f64..1.0, t in 0.0f64..10.0) {
        let c = small(SCENARIOS[which], amplitude, 1);
        let mut state = make_initial(&c).unwrap();
        state.t = t;
        state.v_leak = amplitude * 1e-9;
        let snap = Snapshot { state, exponents: c.exponents(), scenario_hash: c.hash() };
        prop_assert_eq!(decode_snapshot(&encode_snapshot(&snap)).unwrap(), snap);
    }

    #[test]
    fn csv_round_trip_is_bit_exact(rows in proptest::collection::vec(proptest::array::uniform22(-1e6f64..1e6), 1..5)) {
        let records: Vec<DiagnosticsRecord> = rows.into_iter().map(DiagnosticsRecord::from_values).collect();
        prop_assert_eq!(parse_csv(&to_csv(&records)).unwrap(), records);
    }

    #[test]
    fn overrides_match_direct_edits(log_nx in 2u32..7, amplitude in 0.0f64..1.0, theta in 0.1f64..4.0) {
        let nx = 1usize << log_nx;
        let sets = vec![
            format!("grid.nx={nx}"),
            format!("scenario.amplitude={amplitude:?}"),
            format!("scenario.theta={theta:?}"),
        ];
        let parsed = parse_config_with("", &sets).unwrap();
        let mut direct = Config::default();
        direct.grid.nx = nx;
        direct.scenario.amplitude = amplitude;
        direct.scenario.theta = theta;
        prop_assert_eq!(&parsed, &direct);
        prop_assert_eq!(parsed.hash(), direct.hash());
    }

    #[test]
    fn heat_weights_are_a_probability_kernel_with_exact_variance(dt in 1e-4f64..1.0, dv in 0.05f64..0.5) {
        let w = heat_weights(dt, dv, 4096);
        prop_assert!(w.iter().all(|&x| x >= 0.0));
        let total = w[0] + 2.0 * w[1..].iter().sum::<f64>();
        prop_assert!((total - 1.0).abs() <= 1e-13);
        let var: f64 = w.iter().enumerate().skip(1).map(|(m, x)| 2.0 * x * (m * m) as f64).sum();
        let target = 2.0 * dt / (dv * dv);
        prop_assert!((var - target).abs() <= 1e-9 * target.max(1.0), "{} vs {}", var, target);
    }

    #[test]
    fn propagator_keeps_sign_and_mass(t in 0.01f64..1.0, amplitude in 0.0f64..0.9) {
        let g = PhaseGrid::new(8, 4.0, 32, 12.0).unwrap();
        let f0 = DistField::from_fn(g, |x, v1, v2| {
            (1.0 + amplitude * (std::f64::consts::PI * x / 2.0).sin()) * (-(v1 * v1 + v2 * v2) / 2.0).exp()
        });
        let h = apply_h(&f0, t).unwrap();
        prop_assert!(h.min() >= 0.0);
        prop_assert!((mass(&h) - mass(&f0)).abs() <= 1e-6 * mass(&f0));
    }

    #[test]
    fn vacuum_fields_travel_by_exact_shifts(
        e2 in proptest::collection::vec(-1.0f64..1.0, 16),
        b in proptest::collection::vec(-1.0f64..1.0, 16),
        steps in 1usize..40,
    ) {
        let n = 16;
        let dx = 0.25;
        let mean = b.iter().sum::<f64>() / n as f64;
        let mut fs = FieldState::zeros(n);
        fs.e2 = e2.clone();
        fs.b = b.iter().map(|x| x - mean).collect();
        let zero = vec![0.0; n];
        let start = fs.clone();
        for _ in 0..steps {
            fs = maxwell_step(&fs, &zero, &zero, dx, dx).unwrap();
        }
        for i in 0..n {
            let r = (i + n - steps % n) % n;
            let l = (i + steps) % n;
            let plus = 0.5 * (start.e2[r] + start.b[r]);
            let minus = 0.5 * (start.e2[l] - start.b[l]);
            prop_assert!((fs.e2[i] - (plus + minus)).abs() <= 1e-12);
            prop_assert!((fs.b[i] - (plus - minus)).abs() <= 1e-12);
        }
    }

    #[test]
    fn cutoff_profiles_are_nested(s in 0.0f64..40.0, r in 1.0f64..16.0) {
        let (a, b) = (cutoff_psi(s - r), cutoff_psi(s - 2.0 * r));
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!(a <= b);
    }
}
