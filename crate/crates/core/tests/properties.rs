use std::f64::consts::{FRAC_PI_2, PI};

use levkit::dynamics::{simulate, FeedbackParams, OscillatorParams, SimConfig};
use levkit::fitting::{fit_delayed, synthetic_spectrum, FitConstraints, FitOptions, FitParams, Param};
use levkit::levitation::{dimensionless_energy, find_preset, EnergyOptions, NondimensionalScales};
use levkit::magnetostatics::{unit_array_field, unit_cube_field_with, MagnetArraySpec, ARRAY_LAYOUT, DEFAULT_EDGE_EPS};
use levkit::orchestration::ExperimentConfig;
use levkit::signal::{apply_filter, design_bandpass, welch_psd, WelchOptions};
use levkit::spectra::{psd_delayed, psd_thermal};
use levkit::trajectory::Trajectory;
use proptest::prelude::*;

fn outside_array() -> impl Strategy<Value = [f64; 3]> {
    (-2.0f64..2.0, -2.0f64..2.0, 0.1f64..2.0).prop_map(|(x, y, z)| [x, y, z])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn array_field_is_sum_of_magnets(r in outside_array()) {
        let total = unit_array_field(r, DEFAULT_EDGE_EPS).unwrap();
        let mut sum = [0.0; 3];
        for (c, pol) in ARRAY_LAYOUT {
            let b = unit_cube_field_with([r[0] - c[0], r[1] - c[1], r[2] - c[2]], DEFAULT_EDGE_EPS).unwrap();
            for k in 0..3 {
                sum[k] += pol.sign() * b[k];
            }
        }
        for k in 0..3 {
            prop_assert!((total[k] - sum[k]).abs() <= 1e-14 * (1.0 + sum[k].abs()));
        }
    }

    #[test]
    fn array_field_is_divergence_and_curl_free(r in outside_array()) {
        let h = 1e-4;
        let b = |dx: usize, s: f64| {
            let mut p = r;
            p[dx] += s * h;
            unit_array_field(p, DEFAULT_EDGE_EPS).unwrap()
        };
        let d = |i: usize, j: usize| (b(j, 1.0)[i] - b(j, -1.0)[i]) / (2.0 * h);
        let scale = unit_array_field(r, DEFAULT_EDGE_EPS).unwrap().iter().map(|v| v.abs()).fold(0.0, f64::max) / r[2].max(0.1);
        let tol = 1e-5 * scale.max(1e-3);
        prop_assert!((d(0, 0) + d(1, 1) + d(2, 2)).abs() < tol);
        prop_assert!((d(2, 1) - d(1, 2)).abs() < tol);
        prop_assert!((d(0, 2) - d(2, 0)).abs() < tol);
        prop_assert!((d(1, 0) - d(0, 1)).abs() < tol);
    }

    #[test]
    fn array_scaling_matches_dimensionless(side in 1e-3f64..0.05, m in 1e5f64..2e6, r in outside_array()) {
        let spec = MagnetArraySpec::new(side, m);
        let si = spec.field([r[0] * side, r[1] * side, r[2] * side]).unwrap();
        let unit = unit_array_field(r, DEFAULT_EDGE_EPS).unwrap();
        for k in 0..3 {
            prop_assert!((si[k] - spec.field_scale() * unit[k]).abs() <= 1e-12 * spec.field_scale() * (1.0 + unit[k].abs()));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn energy_has_quarter_turn_period(z in 0.05f64..0.4, phi in 0.0f64..FRAC_PI_2, l in 0.4f64..1.2) {
        let scales = NondimensionalScales::with_hopg_reference(&find_preset("hopg_supp").unwrap().plate, &MagnetArraySpec::default()).unwrap();
        let opts = EnergyOptions::with_order(16);
        let a = dimensionless_energy(l, z, phi, &scales, &opts).unwrap();
        let b = dimensionless_energy(l, z, phi + FRAC_PI_2, &scales, &opts).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1e-12));
    }

    #[test]
    fn seeded_simulation_is_deterministic(seed in any::<u64>(), tau in 0.0f64..1.2) {
        let osc = OscillatorParams::from_tilde(0.01, 18.9, 50e-6, 300.0);
        let fb = FeedbackParams::from_tilde(0.0, 0.1, tau, 18.9);
        let cfg = SimConfig::new(18.9, 20.0 / 18.9, seed);
        let a = simulate(&osc, &fb, &cfg).unwrap();
        let b = simulate(&osc, &fb, &cfg).unwrap();
        prop_assert_eq!(a.trajectory.x, b.trajectory.x);
    }

    #[test]
    fn welch_grid_and_values_are_well_formed(seed in any::<u64>(), nperseg in 16usize..256) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..4096).map(|_| rng.random_range(-1.0..1.0)).collect();
        let s = welch_psd(&Trajectory::new(100.0, x), &WelchOptions::new(nperseg)).unwrap();
        prop_assert_eq!(s.frequencies[0], 0.0);
        prop_assert!((s.frequencies[s.len() - 1] - 50.0).abs() < 50.0 / nperseg as f64 + 1e-9);
        prop_assert!(s.frequencies.windows(2).all(|w| w[1] > w[0]));
        prop_assert!(s.values.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn filtering_commutes_with_integer_delay(seed in any::<u64>(), lag in 1usize..40) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let fs = 1250.0;
        let f = design_bandpass(101, fs, 18.0, 23.0).unwrap();
        let x: Vec<f64> = (0..2000).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut shifted = vec![0.0; lag];
        shifted.extend_from_slice(&x[..x.len() - lag]);
        let a = apply_filter(&f, &Trajectory::new(fs, x), lag as f64, 1.0, 0.0).unwrap();
        let b = apply_filter(&f, &Trajectory::new(fs, shifted), 0.0, 1.0, 0.0).unwrap();
        for i in a.valid_from..a.len() {
            prop_assert!((a.x[i] - b.x[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_delay_psd_is_thermal_with_summed_damping(g in 1e-3f64..0.1, gv in 0.0f64..1.0, w in 1.0f64..300.0) {
        let osc = OscillatorParams::from_tilde(g, 18.9, 50e-6, 300.0);
        let fb = FeedbackParams::from_tilde(0.0, gv, 0.0, 18.9);
        let merged = OscillatorParams { gamma_hz: osc.gamma_hz + fb.gamma_v_hz, ..osc };
        let delayed = psd_delayed(w, &osc, &fb, osc.scale()).value;
        let thermal = psd_thermal(w, &merged) * osc.gamma_hz / merged.gamma_hz;
        prop_assert!((delayed / thermal - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fit_respects_constraints(seed in 0u64..1000, gv in 0.2f64..0.8, tau in 0.85f64..1.15) {
        let f0 = 18.9;
        let truth = FitParams {
            scale: 1e-10,
            gamma_hz: 0.01 * f0,
            f0_hz: f0,
            tau_s: tau / f0,
            gamma_v_hz: gv * f0,
        };
        let c = FitConstraints::delayed_protocol(truth.gamma_hz, 1.0 / f0, f0);
        let init = FitParams { gamma_v_hz: 0.5 * f0, tau_s: 1.0 / f0, ..truth };
        let s = synthetic_spectrum(&truth, 0.01, 40.0, 0.05, seed);
        let fit = fit_delayed(&s, (f0 - 5.0, f0 + 5.0), &c, init, &FitOptions::default()).unwrap();
        prop_assert_eq!(fit.params.gamma_hz.to_bits(), truth.gamma_hz.to_bits());
        for (p, (lo, hi)) in &c.bounds {
            let v = fit.params.get(*p);
            prop_assert!(v >= *lo && v <= *hi, "{p:?} = {v} outside [{lo}, {hi}]");
        }
        prop_assert!(fit.cost_history.windows(2).all(|w| w[1] <= w[0]));
        prop_assert!(fit.area > 0.0);
        prop_assert!(!fit.free.contains(&Param::Gamma));
    }

    #[test]
    fn config_round_trips_through_json(seed in any::<u64>(), g in 1e-3f64..0.1, gv in 0.01f64..1.0) {
        let mut cfg = ExperimentConfig::default();
        cfg.seed = seed;
        cfg.gamma_tilde = g;
        cfg.cooling.gamma_v_tilde = gv;
        let text = serde_json::to_string(&cfg).unwrap();
        let back = ExperimentConfig::from_json(&text).unwrap();
        prop_assert_eq!(serde_json::to_string(&back).unwrap(), text);
        prop_assert_eq!(back.config_hash(), cfg.config_hash());
    }
}

#[test]
fn quarter_turn_constant_is_consistent() {
    assert!((4.0 * FRAC_PI_2 - 2.0 * PI).abs() < 1e-15);
}
