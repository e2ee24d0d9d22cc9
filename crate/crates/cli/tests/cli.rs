use std::f64::consts::FRAC_PI_4;
use std::path::Path;
use std::process::{Command, Output};

fn levkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_levkit"))
        .args(args)
        .env_remove("LEVKIT_CONFIG_DIR")
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "{e}\nstdout: {}\nstderr: {}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn equilibrium_reports_quarter_turn_for_hopg() {
    let out = levkit(&["equilibrium", "--material", "hopg_supp", "--L-tilde", "0.75"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert!((v["phi"].as_f64().unwrap() - FRAC_PI_4).abs() < 1e-2);
    assert_eq!(v["phi_class"], "pi/4");
}

#[test]
fn equilibrium_csv_format() {
    let out = levkit(&["equilibrium", "--material", "composite", "--L-tilde", "0.5", "--format", "csv", "--quad-order", "16"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    let header: Vec<&str> = lines[0].split(',').collect();
    let row: Vec<&str> = lines[1].split(',').collect();
    let class = header.iter().position(|h| *h == "phi_class").unwrap();
    assert_eq!(row[class], "0");
}

#[test]
fn filter_design_delay_is_exact() {
    let out = levkit(&["filter-design", "--n", "1001", "--fs", "1250", "--band", "18:23", "--report-delay-at", "19"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["delay_periods"].as_f64(), Some(7.6));
    assert!(String::from_utf8_lossy(&out.stdout).contains("\"delay_periods\": 7.6"));
}

#[test]
fn unstable_delay_exits_with_numeric_failure() {
    let out = levkit(&["simulate", "--gamma-tilde", "0.01", "--gammav-tilde", "0.5", "--tau-tilde", "0.5", "--seed", "3"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json(&out)["status"], "blew_up");
}

#[test]
fn usage_errors_exit_one_and_help_exits_zero() {
    assert_eq!(levkit(&["simulate", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(levkit(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(levkit(&["simulate", "--gamma-tilde", "abc"]).status.code(), Some(1));
    assert_eq!(levkit(&["--help"]).status.code(), Some(0));
    assert_eq!(levkit(&["--version"]).status.code(), Some(0));
    assert_eq!(levkit(&["equilibrium", "--material", "unobtainium", "--L-tilde", "1"]).status.code(), Some(1));
    assert_eq!(levkit(&["filter-design", "--band", "23:18"]).status.code(), Some(1));
}

#[test]
fn print_config_round_trips_through_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cases: [&[&str]; 4] = [
        &["simulate", "--gamma-tilde", "0.0123", "--tau-tilde", "0.1", "--seed", "9"],
        &["filter-design", "--n", "801", "--fs", "1220", "--band", "17.5:22.25"],
        &["equilibrium", "--material", "composite", "--L-tilde", "0.6"],
        &["fit", "--input", "x.csv", "--model", "delayed", "--fix", "gamma=0.0007", "--bound", "tau=0.4:0.45"],
    ];
    for (i, args) in cases.iter().enumerate() {
        let mut a = args.to_vec();
        a.push("--print-config");
        let first = levkit(&a);
        assert_eq!(first.status.code(), Some(0), "{}", String::from_utf8_lossy(&first.stderr));
        let path = dir.path().join(format!("c{i}.json"));
        std::fs::write(&path, &first.stdout).unwrap();
        let second = levkit(&[args[0], "--config", p(&path), "--print-config"]);
        assert_eq!(second.status.code(), Some(0), "{}", String::from_utf8_lossy(&second.stderr));
        assert_eq!(first.stdout, second.stdout);
    }
}

#[test]
fn command_line_overrides_config_and_unknown_keys_fail() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.json");
    std::fs::write(&path, r#"{"seed": 5, "tau_tilde": 0.2}"#).unwrap();
    let v = json(&levkit(&["simulate", "--config", p(&path), "--seed", "6", "--print-config"]));
    assert_eq!(v["seed"], 6);
    assert_eq!(v["tau_tilde"], 0.2);
    std::fs::write(&path, r#"{"sed": 5}"#).unwrap();
    assert_eq!(levkit(&["simulate", "--config", p(&path)]).status.code(), Some(1));
}

#[test]
fn simulate_psd_fit_temperature_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, extra: &[&str]| {
        let traj = dir.path().join(format!("{name}.csv"));
        let mut args = vec!["simulate", "--duration-periods", "8000", "--seed", "2", "-o", p(&traj)];
        args.extend_from_slice(extra);
        assert_eq!(levkit(&args).status.code(), Some(0));
        assert!(dir.path().join(format!("{name}.json")).exists());
        let psd = dir.path().join(format!("{name}_psd.csv"));
        let out = levkit(&["psd", "-i", p(&traj), "--segment-s", "40", "--burn-in-s", "100", "-o", p(&psd)]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        psd
    };
    let psd_off = run("off", &[]);
    let psd_on = run("on", &["--gammav-tilde", "0.08", "--tau-tilde", "8"]);

    let fit_off = dir.path().join("fit_off.json");
    let out = levkit(&["fit", "-i", p(&psd_off), "--band", "13.9:23.9", "-o", p(&fit_off)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let off: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&fit_off).unwrap()).unwrap();
    assert!((off["f0_hz"].as_f64().unwrap() - 18.9).abs() < 0.05);

    let gamma = off["gamma_hz"].as_f64().unwrap();
    let tau = 8.0 / 18.9;
    let fit_on = dir.path().join("fit_on.json");
    let fix = format!("gamma={gamma}");
    let bound = format!("tau={}:{}", tau - 1.0 / 18.9, tau + 1.0 / 18.9);
    let init = format!("tau={tau}");
    let out = levkit(&[
        "fit", "-i", p(&psd_on), "--model", "delayed", "--band", "13.9:23.9", "--fix", &fix, "--bound", &bound,
        "--bound", "gamma_v=0:100", "--init", &init, "--init", "gamma_v=1.5", "-o", p(&fit_on),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let on: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&fit_on).unwrap()).unwrap();
    assert!((on["tau_periods"].as_f64().unwrap() - 8.0).abs() < 0.1);

    let t = json(&levkit(&["temperature", "--fit", p(&fit_on), "--ref-fit", p(&fit_off), "--t-ref", "300"]));
    let t_eff = t["t_eff_k"].as_f64().unwrap();
    // Analytic expectation for this gain and delay is about 45 K.
    assert!((30.0..60.0).contains(&t_eff), "{t_eff}");
}

#[test]
fn temperature_from_areas() {
    let v = json(&levkit(&["temperature", "--area", "2.94e-16", "--area-ref", "2.76e-13"]));
    assert!((v["t_eff_k"].as_f64().unwrap() - 0.3196).abs() < 1e-3);
    assert_eq!(levkit(&["temperature", "--area", "1e-16"]).status.code(), Some(1));
}

#[test]
fn ringdown_recovers_quality_factor() {
    let v = json(&levkit(&["ringdown", "--duration-periods", "3000"]));
    let q = v["q"].as_f64().unwrap();
    assert!((q / 1.58e5 - 1.0).abs() < 0.03, "{q}");
}

#[test]
fn field_and_landscape_write_csv() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("field.csv");
    assert_eq!(levkit(&["field", "--x", "0:0.5:3", "--y", "0:0:1", "--z", "0.2:0.4:2", "-o", p(&f)]).status.code(), Some(0));
    let text = std::fs::read_to_string(&f).unwrap();
    assert_eq!(text.lines().next(), Some("x,y,z,Bx,By,Bz,units"));
    assert_eq!(text.lines().count(), 7);

    let l = dir.path().join("land.csv");
    let out = levkit(&[
        "landscape", "--material", "hopg_supp", "--L-tilde", "1", "--resolution", "4:3", "--quad-order", "8", "-o", p(&l),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(&l).unwrap();
    assert_eq!(text.lines().next(), Some("z_tilde,phi,U_tilde"));
    assert_eq!(text.lines().count(), 13);
}

#[test]
fn filter_apply_marks_warm_up() {
    let dir = tempfile::tempdir().unwrap();
    let traj = dir.path().join("t.csv");
    let args = ["simulate", "--duration-periods", "300", "--steps-per-period", "100", "-o", p(&traj)];
    assert_eq!(levkit(&args).status.code(), Some(0));
    let out_path = dir.path().join("f.csv");
    let out = levkit(&["filter-apply", "-i", p(&traj), "--n", "201", "--band", "17:21", "-o", p(&out_path)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let side: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("f.json")).unwrap()).unwrap();
    assert_eq!(side["valid_from"], 200);
}

#[test]
fn presets_from_config_dir() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("mine.json"),
        r#"[{"name": "heavy_hopg", "side_length": 0.0124, "thickness": 0.0007, "density": 4000.0,
             "chi": [-85e-6, -85e-6, -450e-6]}]"#,
    )
    .unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_levkit"))
        .args(["equilibrium", "--material", "heavy_hopg", "--L-tilde", "1", "--quad-order", "16"])
        .env("LEVKIT_CONFIG_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(json(&out)["phi_class"], "pi/4");
}

#[test]
fn study_outputs_are_reproducible_and_tagged() {
    let cfg_dir = tempfile::tempdir().unwrap();
    let cfg = cfg_dir.path().join("sweep.json");
    std::fs::write(&cfg, r#"{"sweep": {"tau_max": 1.0, "marker_step": 0.5, "duration_periods": 1000}}"#).unwrap();
    let run = || {
        let out_dir = tempfile::tempdir().unwrap();
        let out = levkit(&["sweep-delay", "--config", p(&cfg), "--output-dir", p(out_dir.path()), "--jobs", "1"]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        let hash = json(&out)["config_hash"].as_str().unwrap().to_string();
        let files: Vec<(String, Vec<u8>)> = ["t_ratio.csv", "t_ratio_markers.csv", "delay_sweep.json"]
            .iter()
            .map(|f| (f.to_string(), std::fs::read(out_dir.path().join(f)).unwrap()))
            .collect();
        (hash, files)
    };
    let (h1, f1) = run();
    let (h2, f2) = run();
    assert_eq!(h1, h2);
    assert_eq!(f1, f2);
    for (name, bytes) in &f1 {
        assert!(String::from_utf8_lossy(bytes).contains(&h1), "{name} lacks the config hash");
    }
    let markers = String::from_utf8_lossy(&f1[1].1).into_owned();
    assert!(markers.contains("\n0.5,,true\n"), "{markers}");
}
