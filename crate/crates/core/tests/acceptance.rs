//! Acceptance suite. Each criterion prints one PASS/FAIL line; the process
//! fails if any criterion fails.

use std::f64::consts::{FRAC_PI_4, PI};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use levkit::dynamics::{fit_ringdown, ringdown, simulate, FeedbackParams, OscillatorParams, SimConfig};
use levkit::fitting::{fit_delayed, synthetic_spectrum, FitConstraints, FitOptions, FitParams};
use levkit::levitation::{
    angular_distance_mod_quarter, equilibrium, find_preset, landscape, total_energy, EnergyOptions,
    NondimensionalScales, PlateConfiguration, SearchBox,
};
use levkit::magnetostatics::{unit_cube_field, MagnetArraySpec, DEFAULT_MAGNETIZATION, DEFAULT_MAGNET_SIDE};
use levkit::signal::{apply_filter, design_bandpass, group_delay_periods, measure_tone_delay, welch_psd, WelchOptions};
use levkit::spectra::{effective_temperature, normalized_area, AnalyticPsdParams};
use levkit::trajectory::Trajectory;
use rand::{Rng, SeedableRng};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn array() -> MagnetArraySpec {
    MagnetArraySpec::new(DEFAULT_MAGNET_SIDE, DEFAULT_MAGNETIZATION)
}

fn orientation() -> Outcome {
    let cases = [
        ("hopg_supp", FRAC_PI_4),
        ("hopg_main", FRAC_PI_4),
        ("composite", 0.0),
        ("composite_hopg_density", 0.0),
    ];
    let opts = EnergyOptions::with_order(32);
    let mut worst = 0.0_f64;
    let mut slowest = Duration::ZERO;
    let mut lines = Vec::new();
    for (name, target) in cases {
        let scales = NondimensionalScales::with_hopg_reference(&find_preset(name).unwrap().plate, &array()).unwrap();
        for l in [0.5, 0.75, 1.0] {
            let t = Instant::now();
            let eq = equilibrium(&scales, l, &SearchBox::default(), &opts).map_err(|e| format!("{name} L̃={l}: {e}"))?;
            slowest = slowest.max(t.elapsed());
            let d = angular_distance_mod_quarter(eq.phi, target);
            worst = worst.max(d);
            lines.push(format!("{name}@{l}: φ*={:.4} z̃*={:.4}", eq.phi, eq.z_tilde));
        }
    }
    check(
        worst <= 1e-2 && slowest < Duration::from_secs(120),
        format!("max class deviation {worst:.2e} rad, slowest case {slowest:.2?}; {}", lines.join(", ")),
    )
}

fn thickness_independence() -> Outcome {
    let base = find_preset("hopg_supp").unwrap().plate;
    let thick = levkit::levitation::PlateSpec {
        thickness: 10.0 * base.thickness,
        ..base
    };
    let opts = EnergyOptions::with_order(16);
    let l_tilde = base.side_length / DEFAULT_MAGNET_SIDE;
    let (zr, pr, res) = ((0.3, 0.6), (0.0, PI / 2.0), (6, 5));

    // Dimensionless landscape built from each plate's own scales.
    let s1 = NondimensionalScales::with_hopg_reference(&base, &array()).unwrap();
    let s10 = NondimensionalScales::with_hopg_reference(&thick, &array()).unwrap();
    let a = landscape(&s1, "thin", l_tilde, zr, pr, res, &opts).unwrap();
    let b = landscape(&s10, "thick", l_tilde, zr, pr, res, &opts).unwrap();
    let mut worst = 0.0_f64;
    for (u, v) in a.values.iter().zip(&b.values) {
        worst = worst.max(((u - v) / u).abs());
    }

    // SI energies divided by each plate's energy scale; heights clear the
    // thicker plate's half-thickness.
    let d = DEFAULT_MAGNET_SIDE;
    for z in [0.3, 0.45, 0.6] {
        for phi in [0.0, 0.4, FRAC_PI_4] {
            let cfg = PlateConfiguration {
                height: z * d,
                rotation: phi,
            };
            let u1 = total_energy(&base, &cfg, &array(), &opts).unwrap() / s1.energy_scale;
            let u10 = total_energy(&thick, &cfg, &array(), &opts).unwrap() / s10.energy_scale;
            worst = worst.max(((u1 - u10) / u1).abs());
        }
    }
    check(worst <= 1e-6, format!("max relative difference δ vs 10δ: {worst:.2e}"))
}

fn filter_delay() -> Outcome {
    let filter = design_bandpass(1001, 1250.0, 18.0, 23.0).unwrap();
    let periods = group_delay_periods(&filter, 19.0);
    let fs = 1250.0;
    let n = (60.0 * fs) as usize;
    let on = (10.0 * fs) as usize;
    let x: Vec<f64> = (0..n)
        .map(|i| if i < on { 0.0 } else { (2.0 * PI * 18.9 * (i - on) as f64 / fs).sin() })
        .collect();
    let input = Trajectory::new(fs, x);
    let output = apply_filter(&filter, &input, 0.0, 1.0, 0.0).unwrap();
    let measured = measure_tone_delay(&input, &output, 18.9).unwrap();
    let expected = group_delay_periods(&filter, 18.9);
    check(
        periods == 7.6 && (measured - expected).abs() <= 0.05,
        format!("formula at 19 Hz = {periods}; 18.9 Hz tone measured {measured:.4} vs {expected:.4} periods"),
    )
}

fn q_factor() -> Outcome {
    let kappa = 3.7e-4;
    let f0 = 18.961;
    let osc = OscillatorParams {
        f0_hz: f0,
        gamma_hz: 2.0 * kappa,
        mass_kg: 1.0,
        temperature_k: 0.0,
    };
    let traj = ringdown(&osc, 1e-6, 3000.0 / f0, 1.0 / (100.0 * f0)).unwrap();
    let fit = fit_ringdown(&traj).unwrap();
    let rel = fit.q / 1.58e5 - 1.0;
    check(
        rel.abs() <= 0.03,
        format!("κ = {:.5e} Hz, Q = {:.4e} ({:+.2}% from 1.58e5)", fit.kappa_hz, fit.q, 100.0 * rel),
    )
}

fn psd_agreement() -> Outcome {
    let f0 = 18.9;
    let osc = OscillatorParams::from_tilde(0.01, f0, 50e-6, 300.0);
    let band = (f0 - 5.0, f0 + 5.0);
    let mut worst = 0.0_f64;
    let mut slowest = Duration::ZERO;
    let mut parts = Vec::new();
    for (i, tau) in [0.0, 1.0, 2.0, 3.0].into_iter().enumerate() {
        let t = Instant::now();
        let fb = FeedbackParams::from_tilde(0.0, 0.5, tau, f0);
        let periods = 20_000.0;
        let out = simulate(&osc, &fb, &SimConfig::new(f0, periods / f0, 100 + i as u64)).unwrap();
        if out.blew_up() {
            return Err(format!("τ̃ = {tau} blew up"));
        }
        let traj = out.trajectory.skip((2000.0 * 100.0) as usize);
        let s = welch_psd(&traj, &WelchOptions::new((20.0 * traj.fs).round() as usize)).unwrap();
        let sim = s.band_power(band.0, band.1);
        let theory = AnalyticPsdParams::new(osc, fb).one_sided_area(band.0, band.1);
        let rel = sim / theory - 1.0;
        worst = worst.max(rel.abs());
        slowest = slowest.max(t.elapsed());
        parts.push(format!("τ̃={tau}: {:+.1}%", 100.0 * rel));
    }
    check(
        worst <= 0.10 && slowest < Duration::from_secs(300),
        format!("{}; slowest point {slowest:.2?}", parts.join(", ")),
    )
}

fn stability_map() -> Outcome {
    let f0 = 18.9;
    let osc = OscillatorParams::from_tilde(0.01, f0, 50e-6, 300.0);
    let mut parts = Vec::new();
    let mut ok = true;
    for (tau, should_blow) in [(0.5, true), (1.5, true), (0.8, false), (1.0, false), (1.2, false)] {
        let fb = FeedbackParams::from_tilde(0.0, 0.5, tau, f0);
        let cfg = SimConfig {
            output_every: 10,
            ..SimConfig::new(f0, 2e4 / f0, 1)
        };
        let out = simulate(&osc, &fb, &cfg).unwrap();
        ok &= out.blew_up() == should_blow;
        parts.push(format!("τ̃={tau}: {}", if out.blew_up() { "blew up" } else { "completed" }));
    }
    check(ok, parts.join(", "))
}

fn equipartition() -> Outcome {
    let t = Instant::now();
    let f0 = 18.9;
    let osc = OscillatorParams::from_tilde(0.01, f0, 50e-6, 300.0);
    let cfg = SimConfig {
        output_every: 10,
        ..SimConfig::new(f0, 1e6 / f0, 7)
    };
    let out = simulate(&osc, &FeedbackParams::none(), &cfg).unwrap();
    let x = &out.trajectory.x[(2000.0 * 10.0) as usize..];
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / x.len() as f64;
    let expected = levkit::constants::BOLTZMANN * 300.0 / (50e-6 * (2.0 * PI * f0).powi(2));
    let ratio = var / expected;
    let elapsed = t.elapsed();
    check(
        (ratio - 1.0).abs() <= 0.05 && elapsed < Duration::from_secs(120),
        format!("⟨x²⟩/(k_BT/mω₀²) = {ratio:.4}, runtime {elapsed:.2?}"),
    )
}

/// `∫₀^∞ 𝕊̃ dω̃` by Simpson's rule after `ω̃ = 2π + w·tan θ`, which spreads
/// the resonance of half-width `w` evenly over `θ`.
fn unit_area_oracle(gamma: f64, gamma_v: f64) -> f64 {
    let w = PI * (gamma + gamma_v);
    let lo = (-2.0 * PI / w).atan();
    let hi = PI / 2.0;
    let n = 200_000;
    let h = (hi - lo) / n as f64;
    let f = |theta: f64| {
        let c = theta.cos();
        if c <= 0.0 {
            return 0.0;
        }
        let omega = 2.0 * PI + w * theta.tan();
        levkit::spectra::normalized_psd(omega, gamma, gamma_v, 0.0) * w / (c * c)
    };
    let mut s = f(lo) + f(hi);
    for i in 1..n {
        s += f(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

fn unit_area() -> Outcome {
    let mut worst = 0.0_f64;
    for g in [0.001, 0.01, 0.1] {
        for gv in [0.0, 0.1, 1.0] {
            let lib = normalized_area(g, gv, 0.0, (0.0, 2.0 * PI * 1e4));
            let oracle = unit_area_oracle(g, gv);
            worst = worst.max((lib - 1.0).abs()).max((oracle - 1.0).abs());
        }
    }
    check(worst <= 1e-3, format!("max |area − 1| over 9 grid points: {worst:.2e}"))
}

fn millikelvin() -> Outcome {
    let t = effective_temperature(2.94e-16, 2.76e-13, 300.0).map_err(|e| e.to_string())?;
    check((t - 0.320).abs() <= 0.005, format!("T_eff = {t:.4} K"))
}

fn fit_recovery() -> Outcome {
    let t = Instant::now();
    let f0 = 18.9;
    let truth = FitParams {
        scale: 2.0 * levkit::constants::BOLTZMANN * 300.0 / 50e-6,
        gamma_hz: 0.01 * f0,
        f0_hz: f0,
        tau_s: 1.0 / f0,
        gamma_v_hz: 0.5 * f0,
    };
    let band = (f0 - 5.0, f0 + 5.0);
    let constraints = FitConstraints::delayed_protocol(truth.gamma_hz, truth.tau_s, f0);
    let init = FitParams {
        f0_hz: f0 + 0.05,
        tau_s: 1.02 / f0,
        gamma_v_hz: 0.45 * f0,
        scale: 1.2 * truth.scale,
        ..truth
    };
    let mut hits = [0usize; 3];
    let mut failures = 0;
    for seed in 0..100u64 {
        let s = synthetic_spectrum(&truth, 0.01, 40.0, 0.05, seed);
        let Ok(fit) = fit_delayed(&s, band, &constraints, init, &FitOptions::default()) else {
            failures += 1;
            continue;
        };
        let within = |v: f64, t: f64, e: f64| (v - t).abs() <= 2.0 * e;
        hits[0] += within(fit.params.f0_hz, truth.f0_hz, fit.std_errors.f0_hz) as usize;
        hits[1] += within(fit.params.gamma_v_hz, truth.gamma_v_hz, fit.std_errors.gamma_v_hz) as usize;
        hits[2] += within(fit.params.tau_s, truth.tau_s, fit.std_errors.tau_s) as usize;
    }
    let elapsed = t.elapsed();
    check(
        hits.iter().all(|&h| h >= 95) && elapsed < Duration::from_secs(300),
        format!(
            "within 2σ: f₀ {}/100, Γ_v {}/100, τ {}/100; {failures} fits failed; runtime {elapsed:.2?}",
            hits[0], hits[1], hits[2]
        ),
    )
}

/// Field of a unit cube as the sum of `n³` point dipoles at cell centres.
fn dipole_grid_field(r: [f64; 3], n: usize) -> [f64; 3] {
    let h = 1.0 / n as f64;
    let m = h * h * h / (4.0 * PI);
    let centres: Vec<f64> = (0..n).map(|i| -0.5 + (i as f64 + 0.5) * h).collect();
    let mut b = [0.0; 3];
    for &x in &centres {
        let dx = r[0] - x;
        for &y in &centres {
            let dy = r[1] - y;
            let rho2 = dx * dx + dy * dy;
            for &z in &centres {
                let dz = r[2] - z;
                let d2 = rho2 + dz * dz;
                let inv = 1.0 / (d2 * d2.sqrt());
                let k = 3.0 * dz / d2;
                b[0] += m * k * dx * inv;
                b[1] += m * k * dy * inv;
                b[2] += m * (k * dz - 1.0) * inv;
            }
        }
    }
    b
}

fn distance_to_unit_cube(r: [f64; 3]) -> f64 {
    r.iter().map(|c| (c.abs() - 0.5).max(0.0).powi(2)).sum::<f64>().sqrt()
}

fn field_oracle() -> Outcome {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
    let mut points = Vec::new();
    while points.len() < 20 {
        let p = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
        if distance_to_unit_cube(p) >= 1.0 {
            points.push(p);
        }
    }
    let mut worst = 0.0_f64;
    for p in &points {
        let exact = unit_cube_field(*p).unwrap();
        let oracle = dipole_grid_field(*p, 100);
        let diff = (0..3).map(|i| (exact[i] - oracle[i]).powi(2)).sum::<f64>().sqrt();
        let norm = oracle.iter().map(|v| v * v).sum::<f64>().sqrt();
        worst = worst.max(diff / norm);
    }
    // Point-dipole asymptote with unit moment.
    let z = 10.0;
    let far = unit_cube_field([0.0, 0.0, z]).unwrap()[2];
    let dipole = 2.0 / (4.0 * PI * z * z * z);
    let far_rel = (far / dipole - 1.0).abs();
    check(
        worst <= 1e-4 && far_rel <= 0.01,
        format!("max relative deviation from 100³ dipole grid at 20 points: {worst:.2e}; far field at z̃=10: {far_rel:.2e}"),
    )
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 11] = [
        (1, "orientation reproduction", orientation),
        (2, "thickness independence", thickness_independence),
        (3, "filter delay", filter_delay),
        (4, "Q-factor arithmetic", q_factor),
        (5, "simulation-theory PSD agreement", psd_agreement),
        (6, "stability map", stability_map),
        (7, "equipartition", equipartition),
        (8, "unit-area normalization", unit_area),
        (9, "320 mK reproduction", millikelvin),
        (10, "fit recovery", fit_recovery),
        (11, "field oracle", field_oracle),
    ];
    let mut failed = 0;
    for (n, name, f) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(d) => println!("PASS  {n:>2} {name}: {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL  {n:>2} {name}: {d}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 11 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
