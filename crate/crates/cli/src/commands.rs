use std::f64::consts::FRAC_PI_2;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Map, Value};

use levkit::dynamics::{fit_ringdown, ringdown as synth_ringdown, FeedbackParams, OscillatorParams, SimConfig};
use levkit::fitting::{
    fit_delayed, fit_thermal, initial_guess, write_report_csv, FitConstraints, FitOptions, FitParams, FitReportRow,
    Param, ResidualKind,
};
use levkit::levitation::{
    angular_distance_mod_quarter, equilibrium as find_equilibrium, find_preset, landscape as energy_landscape,
    EnergyOptions, NondimensionalScales, SearchBox,
};
use levkit::magnetostatics::{field_map, write_field_csv, FieldUnits, Grid, MagnetArraySpec};
use levkit::orchestration::{run_cooling_study, run_delay_sweep, run_orientation_study, ExperimentConfig};
use levkit::signal::{apply_filter, decimate, design_bandpass, group_delay_periods, welch_psd, Spectrum, WelchOptions, Window};
use levkit::spectra::effective_temperature;
use levkit::trajectory::Trajectory;

use crate::error::CliError;
use crate::{
    EquilibriumArgs, FieldArgs, FilterApplyArgs, FilterDesignArgs, FitArgs, Format, LandscapeArgs, ModelArg, PsdArgs,
    ResidualArg, RingdownArgs, SimulateArgs, StudyArgs, TemperatureArgs,
};

pub struct Context {
    pub format: Format,
    pub print_config: bool,
}

impl Context {
    /// Handles `--print-config`; returns true when the command should stop.
    fn echo<T: Serialize>(&self, args: &T) -> Result<bool, CliError> {
        if self.print_config {
            println!("{}", serde_json::to_string_pretty(args)?);
        }
        Ok(self.print_config)
    }

    /// Prints a JSON object, or a header and one row with `--format csv`.
    fn emit(&self, value: &Value) -> Result<(), CliError> {
        let out = std::io::stdout();
        let mut w = out.lock();
        match self.format {
            Format::Json => writeln!(w, "{}", serde_json::to_string_pretty(value)?)?,
            Format::Csv => {
                let obj = value.as_object().cloned().unwrap_or_default();
                let keys: Vec<&String> = obj.keys().collect();
                let cells: Vec<String> = obj
                    .values()
                    .map(|v| match v {
                        Value::Null => String::new(),
                        Value::String(s) => s.clone(),
                        other => other.to_string(),
                    })
                    .collect();
                writeln!(w, "{}", keys.iter().map(|k| k.as_str()).collect::<Vec<_>>().join(","))?;
                writeln!(w, "{}", cells.join(","))?;
            }
        }
        Ok(())
    }
}

/// Runs `f` against the output file or stdout.
fn with_output(path: Option<&Path>, f: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<(), CliError> {
    match path {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p).map_err(|e| CliError::Validation(format!("{}: {e}", p.display())))?);
            f(&mut w)?;
            w.flush()?;
        }
        None => {
            let out = std::io::stdout();
            let mut w = out.lock();
            f(&mut w)?;
        }
    }
    Ok(())
}

fn parse_f64(s: &str, what: &str) -> Result<f64, CliError> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| CliError::Validation(format!("{what}: `{s}` is not a number")))
}

fn parse_pair(s: &str, what: &str) -> Result<(f64, f64), CliError> {
    match s.split(':').collect::<Vec<_>>()[..] {
        [a, b] => Ok((parse_f64(a, what)?, parse_f64(b, what)?)),
        _ => Err(CliError::Validation(format!("{what}: expected `lo:hi`, got `{s}`"))),
    }
}

fn parse_axis(s: &str, what: &str) -> Result<Vec<f64>, CliError> {
    match s.split(':').collect::<Vec<_>>()[..] {
        [a, b, n] => {
            let n: usize = n
                .trim()
                .parse()
                .map_err(|_| CliError::Validation(format!("{what}: bad point count `{n}`")))?;
            if n == 0 {
                return Err(CliError::Validation(format!("{what}: need at least one point")));
            }
            Ok(Grid::linspace(parse_f64(a, what)?, parse_f64(b, what)?, n))
        }
        _ => Err(CliError::Validation(format!("{what}: expected `lo:hi:n`, got `{s}`"))),
    }
}

fn parse_param(name: &str) -> Result<Param, CliError> {
    serde_json::from_value(Value::String(name.trim().to_string()))
        .map_err(|_| CliError::Validation(format!("unknown parameter `{name}` (scale, gamma, f0, tau, gamma_v)")))
}

fn split_assignment<'a>(s: &'a str, flag: &str) -> Result<(Param, &'a str), CliError> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| CliError::Validation(format!("--{flag}: expected `name=value`, got `{s}`")))?;
    Ok((parse_param(k)?, v))
}

fn need<T: Clone>(v: &Option<T>, flag: &str) -> Result<T, CliError> {
    v.clone().ok_or_else(|| CliError::Validation(format!("{flag} is required")))
}

fn preset_scales(material: &str) -> Result<NondimensionalScales, CliError> {
    let preset = find_preset(material)?;
    let array = MagnetArraySpec::new(
        levkit::magnetostatics::DEFAULT_MAGNET_SIDE,
        levkit::magnetostatics::DEFAULT_MAGNETIZATION,
    );
    Ok(NondimensionalScales::with_hopg_reference(&preset.plate, &array)?)
}

pub fn field(ctx: &Context, a: FieldArgs) -> Result<(), CliError> {
    if ctx.echo(&a)? {
        return Ok(());
    }
    let units = match a.units.to_ascii_lowercase().as_str() {
        "dimensionless" => FieldUnits::Dimensionless,
        "si" => FieldUnits::Si,
        other => return Err(CliError::Validation(format!("unknown units `{other}`"))),
    };
    if !(a.magnet_side > 0.0 && a.magnetization.is_finite()) {
        return Err(CliError::Validation("magnet side must be positive".into()));
    }
    let grid = Grid {
        xs: parse_axis(&a.x, "--x")?,
        ys: parse_axis(&a.y, "--y")?,
        zs: parse_axis(&a.z, "--z")?,
    };
    let samples = field_map(&MagnetArraySpec::new(a.magnet_side, a.magnetization), &grid, units);
    with_output(a.output.as_deref(), |w| write_field_csv(w, &samples))
}

pub fn landscape(ctx: &Context, a: LandscapeArgs) -> Result<(), CliError> {
    if ctx.echo(&a)? {
        return Ok(());
    }
    let material = need(&a.material, "--material")?;
    let l_tilde = need(&a.l_tilde, "--L-tilde")?;
    let scales = preset_scales(&material)?;
    let (nz, nphi) = parse_pair(&a.resolution, "--resolution")?;
    if nz.fract() != 0.0 || nphi.fract() != 0.0 || nz < 0.0 || nphi < 0.0 {
        return Err(CliError::Validation("--resolution must be `n_z:n_phi` integers".into()));
    }
    let land = energy_landscape(
        &scales,
        &material,
        l_tilde,
        parse_pair(&a.z_range, "--z-range")?,
        parse_pair(&a.phi_range, "--phi-range")?,
        (nz as usize, nphi as usize),
        &EnergyOptions::with_order(a.quad_order),
    )?;
    with_output(a.output.as_deref(), |w| land.write_csv(w))
}

pub fn equilibrium(ctx: &Context, a: EquilibriumArgs) -> Result<(), CliError> {
    if ctx.echo(&a)? {
        return Ok(());
    }
    let material = need(&a.material, "--material")?;
    let l_tilde = need(&a.l_tilde, "--L-tilde")?;
    let scales = preset_scales(&material)?;
    let search = SearchBox {
        z_range: parse_pair(&a.z_range, "--z-range")?,
        ..SearchBox::default()
    };
    let eq = find_equilibrium(&scales, l_tilde, &search, &EnergyOptions::with_order(a.quad_order))?;
    let class = if angular_distance_mod_quarter(eq.phi, FRAC_PI_2 / 2.0) < angular_distance_mod_quarter(eq.phi, 0.0) {
        "pi/4"
    } else {
        "0"
    };
    ctx.emit(&json!({
        "material": material,
        "l_tilde": l_tilde,
        "z_tilde": eq.z_tilde,
        "phi": eq.phi,
        "phi_deg": eq.phi.to_degrees(),
        "phi_class": class,
        "U_tilde": eq.energy,
        "evaluations": eq.evaluations,
    }))
}

fn simulate_params(a: &SimulateArgs) -> (OscillatorParams, FeedbackParams, SimConfig) {
    let osc = OscillatorParams::from_tilde(a.gamma_tilde, a.f0_hz, a.mass_kg, a.temperature_k);
    let fb = FeedbackParams::from_tilde(a.gammax_tilde, a.gammav_tilde, a.tau_tilde, a.f0_hz);
    let cfg = SimConfig {
        dt_s: 1.0 / (a.steps_per_period * a.f0_hz),
        output_every: a.output_every,
        record_velocity: a.record_velocity,
        ..SimConfig::new(a.f0_hz, a.duration_periods / a.f0_hz, a.seed)
    };
    (osc, fb, cfg)
}

pub fn simulate(ctx: &Context, a: SimulateArgs) -> Result<(), CliError> {
    if ctx.echo(&a)? {
        return Ok(());
    }
    let (osc, fb, cfg) = simulate_params(&a);
    let out = levkit::dynamics::simulate(&osc, &fb, &cfg)?;
    if let Some(p) = &a.output {
        out.trajectory.save(p, serde_json::to_value(&a)?)?;
    }
    let mut v = serde_json::to_value(out.status)?;
    let obj = v.as_object_mut().expect("status is an object");
    obj.insert("seed".into(), json!(a.seed));
    obj.insert("steps".into(), json!(out.diagnostics.steps));
    obj.insert("samples".into(), json!(out.trajectory.len()));
    obj.insert("max_abs_x_tilde".into(), json!(out.diagnostics.max_abs_x_tilde));
    obj.insert("length_scale_m".into(), json!(out.diagnostics.length_scale));
    ctx.emit(&v)?;
    if out.blew_up() {
        return Err(CliError::Numeric("simulation blew up".into()));
    }
    Ok(())
}

fn ringdown_trajectory(a: &RingdownArgs) -> Result<Trajectory, CliError> {
    if let Some(p) = &a.input {
        return Ok(Trajectory::load(p)?);
    }
    if !(a.f0_hz > 0.0 && a.kappa_hz >= 0.0 && a.steps_per_period >= 50.0) {
        return Err(CliError::Validation("need f0 > 0, kappa ≥ 0 and at least 50 steps per period".into()));
    }
    let osc = OscillatorParams {
        f0_hz: a.f0_hz,
        gamma_hz: 2.0 * a.kappa_hz,
        mass_kg: 1.0,
        temperature_k: 0.0,
    };
    Ok(synth_ringdown(&osc, a.x0, a.duration_periods / a.f0_hz, 1.0 / (a.steps_per_period * a.f0_hz))?)
}

pub fn ringdown(ctx: &Context, a: RingdownArgs) -> Result<(), CliError> {
    if ctx.echo(&a)? {
        return Ok(());
    }
    let traj = ringdown_trajectory(&a)?;
    if let (Some(p), None) = (&a.output, &a.input) {
        traj.save(p, serde_json::to_value(&a)?)?;
    }
    let fit = fit_ringdown(&traj)?;
    ctx.emit(&json!({
        "amplitude": fit.amplitude,
        "kappa_hz": fit.kappa_hz,
        "f0_hz": fit.f0_hz,
        "q": if fit.q.is_finite() { json!(fit.q) } else { json!("inf") },
        "undamped": fit.undamped,
        "peaks_used": fit.peaks_used,
    }))
}

pub fn psd(ctx: &Context, a: PsdArgs) -> Result<(), CliError> {
    if ctx.echo(&a)? {
        return Ok(());
    }
    let traj = Trajectory::load(&need(&a.input, "--input")?)?;
    let traj = traj.skip((a.burn_in_s * traj.fs).round().max(0.0) as usize);
    let nperseg = a.nperseg.unwrap_or((a.segment_s * traj.fs).round() as usize);
    let opts = WelchOptions {
        nperseg,
        overlap: a.overlap,
        window: a.window.parse::<Window>()?,
        detrend: !a.no_detrend,
    };
    let s = welch_psd(&traj, &opts)?;
    with_output(a.output.as_deref(), |w| s.write_csv(w))
}

pub fn filter_design(ctx: &Context, a: FilterDesignArgs) -> Result<(), CliError> {
    if ctx.echo(&a)? {
        return Ok(());
    }
    let (lo, hi) = parse_pair(&a.band, "--band")?;
    let filter = design_bandpass(a.n, a.fs, lo, hi)?;
    if let Some(p) = &a.output {
        with_output(Some(p), |w| filter.write_coefficients_csv(w))?;
    }
    let mut v = serde_json::to_value(filter.metadata())?;
    if let Some(f) = a.report_delay_at {
        if !(f > 0.0) {
            return Err(CliError::Validation("--report-delay-at must be positive".into()));
        }
        v["delay_periods"] = json!(group_delay_periods(&filter, f));
        v["delay_reference_hz"] = json!(f);
    }
    ctx.emit(&v)
}

pub fn filter_apply(ctx: &Context, a: FilterApplyArgs) -> Result<(), CliError> {
    if ctx.echo(&a)? {
        return Ok(());
    }
    let mut traj = Trajectory::load(&need(&a.input, "--input")?)?;
    if let Some(k) = a.decimate {
        traj = decimate(&traj, k)?;
    }
    let (lo, hi) = parse_pair(&a.band, "--band")?;
    let filter = design_bandpass(a.n, traj.fs, lo, hi)?;
    let out = apply_filter(&filter, &traj, a.extra_delay, a.gain, a.dc_shift)?;
    match &a.output {
        Some(p) => {
            let side = json!({ "filter": filter.metadata(), "extra_delay": a.extra_delay, "gain": a.gain, "dc_shift": a.dc_shift });
            out.save(p, side)?;
            Ok(())
        }
        None => with_output(None, |w| out.write_csv(w)),
    }
}

pub fn fit(ctx: &Context, a: FitArgs) -> Result<(), CliError> {
    if ctx.echo(&a)? {
        return Ok(());
    }
    let input = need(&a.input, "--input")?;
    let spectrum = Spectrum::read_csv(File::open(&input).map_err(|e| CliError::Validation(format!("{}: {e}", input.display())))?)?;
    let band = match &a.band {
        Some(b) => parse_pair(b, "--band")?,
        None => {
            let peak = spectrum
                .peak_frequency(spectrum.bin_width(), f64::INFINITY)
                .ok_or_else(|| CliError::Validation("empty spectrum".into()))?;
            ((peak - 5.0).max(0.0), peak + 5.0)
        }
    };
    let opts = FitOptions {
        residuals: match a.residuals {
            ResidualArg::Log10 => ResidualKind::Log10,
            ResidualArg::Linear => ResidualKind::Linear,
        },
        ..FitOptions::default()
    };
    let mut constraints = FitConstraints::default();
    for s in &a.fix {
        let (p, v) = split_assignment(s, "fix")?;
        constraints = constraints.fix(p, parse_f64(v, "--fix")?);
    }
    for s in &a.bound {
        let (p, v) = split_assignment(s, "bound")?;
        let (lo, hi) = parse_pair(v, "--bound")?;
        constraints = constraints.bound(p, lo, hi);
    }
    constraints.validate()?;
    let mut init: FitParams = initial_guess(&spectrum, band)?;
    if a.model == ModelArg::Delayed {
        for (p, &(lo, hi)) in &constraints.bounds {
            let v = init.get(*p);
            if !(v >= lo && v <= hi) {
                let mid = if lo.is_finite() && hi.is_finite() { 0.5 * (lo + hi) } else if lo.is_finite() { lo } else { hi };
                init.set(*p, mid);
            }
        }
    }
    for s in &a.init {
        let (p, v) = split_assignment(s, "init")?;
        init.set(p, parse_f64(v, "--init")?);
    }
    let result = match a.model {
        ModelArg::Thermal => {
            if !constraints.fixed.is_empty() || !constraints.bounds.is_empty() {
                return Err(CliError::Validation("--fix/--bound apply to the delayed model only".into()));
            }
            fit_thermal(&spectrum, band, Some(init), &opts)?
        }
        ModelArg::Delayed => fit_delayed(&spectrum, band, &constraints, init, &opts)?,
    };
    let row = FitReportRow::from(&result);
    let mut v = serde_json::to_value(&row)?;
    let obj: &mut Map<String, Value> = v.as_object_mut().expect("row is an object");
    obj.insert("model".into(), serde_json::to_value(result.model)?);
    obj.insert("band_hz".into(), json!([band.0, band.1]));
    obj.insert("residual_norm".into(), json!(result.residual_norm));
    obj.insert("iterations".into(), json!(result.iterations));
    obj.insert("converged".into(), json!(result.converged));
    if let Some(p) = &a.output {
        let path = p.clone();
        match ctx.format {
            Format::Csv => with_output(Some(&path), |w| write_report_csv(w, &[row]).map_err(std::io::Error::other))?,
            Format::Json => with_output(Some(&path), |w| writeln!(w, "{}", serde_json::to_string_pretty(&v)?))?,
        }
        return Ok(());
    }
    match ctx.format {
        Format::Csv => with_output(None, |w| write_report_csv(w, &[row]).map_err(std::io::Error::other)),
        Format::Json => ctx.emit(&v),
    }
}

fn area_from(file: &Path) -> Result<f64, CliError> {
    let text = std::fs::read_to_string(file).map_err(|e| CliError::Validation(format!("{}: {e}", file.display())))?;
    let v: Value = serde_json::from_str(&text)?;
    v.get("area")
        .and_then(Value::as_f64)
        .ok_or_else(|| CliError::Validation(format!("{}: no numeric `area` field", file.display())))
}

pub fn temperature(ctx: &Context, a: TemperatureArgs) -> Result<(), CliError> {
    if ctx.echo(&a)? {
        return Ok(());
    }
    let pick = |direct: Option<f64>, file: &Option<std::path::PathBuf>, what: &str| -> Result<f64, CliError> {
        match (direct, file) {
            (Some(v), _) => Ok(v),
            (None, Some(p)) => area_from(p),
            (None, None) => Err(CliError::Validation(format!("{what} is required"))),
        }
    };
    let area = pick(a.area, &a.fit, "--area or --fit")?;
    let area_ref = pick(a.area_ref, &a.ref_fit, "--area-ref or --ref-fit")?;
    let t = effective_temperature(area, area_ref, a.t_ref)?;
    ctx.emit(&json!({
        "area": area,
        "area_ref": area_ref,
        "t_ref_k": a.t_ref,
        "t_ratio": (area / area_ref).log10(),
        "t_eff_k": t,
    }))
}

#[derive(Debug, Clone, Copy)]
pub enum Study {
    Orientation,
    Cooling,
    Sweep,
}

pub fn study(ctx: &Context, which: Study, a: StudyArgs, config: Option<&str>) -> Result<(), CliError> {
    let mut cfg = match config {
        Some(text) => serde_json::from_str::<ExperimentConfig>(text).map_err(|e| CliError::Validation(format!("config: {e}")))?,
        None => ExperimentConfig::default(),
    };
    if let Some(d) = a.output_dir {
        cfg.output_dir = d;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if a.high_q {
        cfg = cfg.with_high_q();
    }
    cfg.validate()?;
    if ctx.echo(&cfg)? {
        return Ok(());
    }
    let summary = match which {
        Study::Orientation => serde_json::to_value(run_orientation_study(&cfg)?)?,
        Study::Cooling => {
            let r = run_cooling_study(&cfg)?;
            json!({
                "config_hash": r.config_hash,
                "output_dir": cfg.output_dir,
                "rows": r.rows.iter().map(|row| json!({
                    "scenario": row.scenario,
                    "status": row.status,
                    "t_eff_k": row.t_eff_k,
                    "t_eff_theory_k": row.t_eff_theory_k,
                })).collect::<Vec<_>>(),
            })
        }
        Study::Sweep => {
            let s = run_delay_sweep(&cfg)?;
            json!({
                "config_hash": s.config_hash,
                "output_dir": cfg.output_dir,
                "curve_points": s.curve.len(),
                "markers": s.markers,
            })
        }
    };
    match ctx.format {
        Format::Json => ctx.emit(&summary),
        Format::Csv => {
            println!("config_hash,output_dir");
            println!("{},{}", summary["config_hash"].as_str().unwrap_or_default(), cfg.output_dir.display());
            Ok(())
        }
    }
}
