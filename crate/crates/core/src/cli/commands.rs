use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::json;

use volcd::analysis::{
    expected_lambda_minimizer, expected_mixture_variance, expected_sigmad_profile, TransitionSpec,
};
use volcd::cafcd::{Cafcd, CafcdConfig};
use volcd::eval::{
    calibrate_mu, evaluate as evaluate_scenarios, log_grid, protocol_scenarios, stationary_event_rate,
    DetectorSpec, MatchConfig, MetricsAccumulator, MetricsReport,
};
use volcd::glr::{merge_channel_events, GlrBank};
use volcd::io::{event_line, list_sample_files, read_samples, sidecar_path, write_atomic, write_scenario, GroundTruth};
use volcd::plot::LinePlot;
use volcd::synth::{first_difference, gen_piecewise_gaussian, gen_stationary, SynthConfig};
use volcd::vce::{annotate_events, channel_sigma_d};
use volcd::{Afcd, DetectionEvent, Detector, WeightScheme, WeightVector};

use super::config::{DetectorKind, Preprocess, RunConfig};
use super::{AnalyzeArgs, CalibrateArgs, CliError, DetectArgs, EvaluateArgs, SimulateArgs};

fn runtime(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

fn read_input(path: &Path) -> Result<Vec<Vec<f64>>, CliError> {
    let rows = if path.as_os_str() == "-" {
        volcd::io::parse_samples(std::io::stdin().lock())
    } else {
        read_samples(path)
    };
    // read failures are input errors regardless of their kind
    rows.map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

/// Applies preprocessing; returns the rows and the index shift mapping
/// processed rows back to input rows.
fn preprocess(rows: Vec<Vec<f64>>, p: Preprocess) -> Result<(Vec<Vec<f64>>, usize), CliError> {
    match p {
        Preprocess::None => Ok((rows, 0)),
        // y_t = x_{t+1} - x_t first reflects a change at x_tau in y_{tau-1}
        Preprocess::FirstDifference => Ok((first_difference(&rows)?, 1)),
    }
}

/// Runs the configured detector. Multichannel GLR events are fused unless
/// `per_channel` is set.
fn run_detector(rc: &RunConfig, rows: &[Vec<f64>], per_channel: bool) -> Result<Vec<DetectionEvent>, CliError> {
    let n_channels = rows.first().map_or(0, Vec::len);
    let mut events = match rc.detector {
        DetectorKind::Afcd => {
            if n_channels != 1 {
                return Err(CliError::Input(format!(
                    "afcd expects 1 column, got {n_channels}; use --detector cafcd or glr"
                )));
            }
            Afcd::new(rc.afcd.clone())?.run(&rows.iter().map(|r| r[0]).collect::<Vec<_>>())?
        }
        DetectorKind::Cafcd => Cafcd::new(CafcdConfig::uniform(&rc.afcd, n_channels)?)?.run(rows)?,
        DetectorKind::Glr => {
            let raw = GlrBank::new(rc.glr, n_channels)?.run(rows)?;
            return Ok(if per_channel || n_channels == 1 {
                raw
            } else {
                merge_channel_events(&raw, rc.glr.window)
            });
        }
    };
    if let Some(v) = &rc.vce {
        let sd = channel_sigma_d(rows, v.window)?;
        annotate_events(&mut events, &sd, v, false);
    }
    Ok(events)
}

fn shift(events: &mut [DetectionEvent], by: usize) {
    for e in events {
        e.detect_time += by;
        e.location_estimate = e.location_estimate.map(|l| l + by);
    }
}

fn check_arity(rc_channels: Option<usize>, rows: &[Vec<f64>]) -> Result<(), CliError> {
    let got = rows.first().map_or(0, Vec::len);
    match rc_channels {
        Some(expected) if expected != got => Err(CliError::Input(format!(
            "expected {expected} column(s) per row, input has {got}"
        ))),
        _ => Ok(()),
    }
}

pub fn detect(a: DetectArgs) -> Result<(), CliError> {
    let params = a.params.load()?;
    let rc = params.resolve()?;
    let rows = read_input(&a.input)?;
    check_arity(params.channels, &rows)?;
    let (rows, offset) = preprocess(rows, rc.preprocess)?;
    let mut events = run_detector(&rc, &rows, true)?;
    shift(&mut events, offset);
    let mut text = String::new();
    for e in &events {
        text.push_str(&event_line(e));
        text.push('\n');
    }
    match &a.output {
        Some(p) => write_atomic(p, text.as_bytes()).map_err(|e| runtime(p, e))?,
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Runtime(e.to_string()))?,
    }
    eprintln!("{} event(s) from {} sample(s)", events.len(), rows.len() + offset);
    Ok(())
}

pub fn simulate(a: SimulateArgs) -> Result<(), CliError> {
    let mut cfg = SynthConfig::default().with_channels(a.channels, a.correlation);
    if let Some(lo) = a.min_total {
        cfg.total_range.0 = lo;
    }
    if let Some(hi) = a.max_total {
        cfg.total_range.1 = hi;
    }
    cfg.validate()?;
    std::fs::create_dir_all(&a.output_dir).map_err(|e| runtime(&a.output_dir, e))?;
    let mut out = std::io::stdout().lock();
    for i in 0..a.count {
        let scenario = gen_piecewise_gaussian(&cfg.clone().with_seed(a.seed.wrapping_add(i as u64)))?;
        let name = if a.count == 1 {
            a.prefix.clone()
        } else {
            format!("{}_{i:04}", a.prefix)
        };
        let path = write_scenario(&a.output_dir, &name, &scenario).map_err(|e| CliError::Runtime(e.to_string()))?;
        writeln!(out, "{}", path.display()).map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    Ok(())
}

fn collect_inputs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    let mut files = Vec::new();
    for p in inputs {
        if p.is_dir() {
            files.extend(list_sample_files(p).map_err(|e| CliError::Input(e.to_string()))?);
        } else if p.is_file() {
            files.push(p.clone());
        } else {
            return Err(CliError::Input(format!("{}: no such file or directory", p.display())));
        }
    }
    if files.is_empty() {
        return Err(CliError::Input("no sample files found".into()));
    }
    Ok(files)
}

pub fn evaluate(a: EvaluateArgs) -> Result<(), CliError> {
    let rc = a.params.resolve()?;
    if a.match_window == 0 {
        return Err(CliError::Input("match-window must be > 0".into()));
    }
    let mc = MatchConfig {
        match_window: a.match_window,
    };
    let files = collect_inputs(&a.input)?;
    let mut total = MetricsAccumulator::default();
    let (mut used, mut skipped) = (0usize, 0usize);
    let mut out = std::io::stdout().lock();
    for file in &files {
        let side = sidecar_path(file);
        if !side.is_file() {
            eprintln!("warning: {}: missing {}; skipped", file.display(), side.display());
            skipped += 1;
            continue;
        }
        let truth = GroundTruth::read(&side).map_err(|e| CliError::Input(e.to_string()))?;
        let rows = read_input(file)?;
        if rows.len() != truth.n_samples {
            eprintln!(
                "warning: {}: {} rows but sidecar says {}; skipped",
                file.display(),
                rows.len(),
                truth.n_samples
            );
            skipped += 1;
            continue;
        }
        let (rows, offset) = preprocess(rows, rc.preprocess)?;
        let per_channel = a.per_channel && rc.detector == DetectorKind::Glr;
        let mut events = run_detector(&rc, &rows, per_channel)?;
        shift(&mut events, offset);
        let mut acc = MetricsAccumulator::default();
        if per_channel {
            for c in 0..rows.first().map_or(0, Vec::len) {
                let ch: Vec<DetectionEvent> = events.iter().filter(|e| e.channel == c).copied().collect();
                acc.add(&ch, &truth.change_times, &mc);
            }
        } else {
            acc.add(&events, &truth.change_times, &mc);
        }
        let line = json!({ "file": file.display().to_string(), "report": acc.report() });
        writeln!(out, "{line}").map_err(|e| CliError::Runtime(e.to_string()))?;
        total = total.merge(acc);
        used += 1;
    }
    if used == 0 {
        return Err(CliError::Input(format!("all {skipped} scenario(s) skipped")));
    }
    let report: MetricsReport = total.report();
    let line = json!({ "aggregate": report, "scenarios": used, "skipped": skipped });
    writeln!(out, "{line}").map_err(|e| CliError::Runtime(e.to_string()))?;
    if let Some(p) = &a.report {
        let text = toml::to_string(&report).map_err(|e| CliError::Runtime(e.to_string()))?;
        write_atomic(p, text.as_bytes()).map_err(|e| runtime(p, e))?;
    }
    Ok(())
}

pub fn analyze(a: AnalyzeArgs) -> Result<(), CliError> {
    let spec = TransitionSpec {
        sigma1: a.sigma1,
        sigma2: a.sigma2,
        fast_window: a.fast_window,
        slow_window: a.slow_window,
        diff_window: a.diff_window,
    };
    spec.validate()?;
    let span = a.desired_window + 2;
    let wd = WeightVector::averaging(span)?;
    let schemes = [WeightScheme::Triangular, WeightScheme::Uniform];
    let pairs = schemes
        .iter()
        .map(|s| Ok((s.fast(a.fast_window)?, s.slow(a.slow_window)?)))
        .collect::<volcd::Result<Vec<_>>>()?;
    let max_offset = a.max_offset.unwrap_or(2 * a.fast_window);

    let mut text = String::from("# expected_lambda\nt_rel\ttriangular\tuniform\n");
    let mut lam: Vec<Vec<(f64, f64)>> = vec![Vec::new(); 2];
    for t_rel in 0..=max_offset {
        text.push_str(&t_rel.to_string());
        for (i, (wf, ws)) in pairs.iter().enumerate() {
            let v = expected_lambda_minimizer(&spec, wf, ws, &wd, t_rel, a.n_mc, a.seed, a.layout)?;
            text.push_str(&format!("\t{v:.6}"));
            lam[i].push((t_rel as f64, v));
        }
        text.push('\n');
    }

    text.push_str("\n# mixture_variance (fast filter)\nt_rel\ttriangular\tuniform\n");
    let mut mix: Vec<Vec<(f64, f64)>> = vec![Vec::new(); 2];
    for t_rel in 0..=a.fast_window {
        text.push_str(&t_rel.to_string());
        for (i, (wf, _)) in pairs.iter().enumerate() {
            let v = expected_mixture_variance(&spec, wf, t_rel)?;
            text.push_str(&format!("\t{v:.6}"));
            mix[i].push((t_rel as f64, v));
        }
        text.push('\n');
    }

    text.push_str("\n# sigma_d_profile\nk\tclosed_form\n");
    let tl = a.diff_window as i64;
    let mut prof = Vec::new();
    for k in -tl..=tl {
        let v = expected_sigmad_profile(&spec, k)?;
        text.push_str(&format!("{k}\t{v:.6}\n"));
        prof.push((k as f64, v));
    }
    std::io::stdout()
        .write_all(text.as_bytes())
        .map_err(|e| CliError::Runtime(e.to_string()))?;

    if let Some(dir) = &a.plot_dir {
        std::fs::create_dir_all(dir).map_err(|e| runtime(dir, e))?;
        let plots = [
            (
                "lambda.svg",
                LinePlot::new("Optimal convex weight after the change", "post-change samples", "E{lambda}")
                    .add("triangular", lam[0].clone())
                    .add("uniform", lam[1].clone()),
            ),
            (
                "mixture.svg",
                LinePlot::new("Fast-filter expected variance", "post-change samples", "E{sigma_f^2}")
                    .add("triangular", mix[0].clone())
                    .add("uniform", mix[1].clone()),
            ),
            (
                "sigma_d.svg",
                LinePlot::new("Differenced volatility profile", "offset from tau + T_l - 1", "E{sigma_D}")
                    .add("closed form", prof),
            ),
        ];
        for (name, plot) in plots {
            let p = dir.join(name);
            write_atomic(&p, plot.to_svg().as_bytes()).map_err(|e| runtime(&p, e))?;
        }
    }
    Ok(())
}

pub fn calibrate(a: CalibrateArgs) -> Result<(), CliError> {
    let rc = a.params.resolve()?;
    let channels = a.params.load()?.channels.unwrap_or(1);
    let seed = rc.afcd.rng_seed;
    let spec = match rc.detector {
        DetectorKind::Afcd if channels == 1 => DetectorSpec::Afcd(rc.afcd.clone()),
        DetectorKind::Afcd => {
            return Err(CliError::Input("afcd is univariate; use --detector cafcd with --channels > 1".into()))
        }
        DetectorKind::Cafcd => DetectorSpec::Cafcd(rc.afcd.clone()),
        DetectorKind::Glr => return Err(CliError::Input("glr has no learning rate to calibrate".into())),
    };
    if a.scenarios == 0 {
        return Err(CliError::Input("scenarios must be >= 1".into()));
    }
    let grid = log_grid(a.grid_lo, a.grid_hi, a.grid_n)?;
    let mc = MatchConfig {
        match_window: a.match_window,
    };
    let result = if a.stationary {
        let scenarios = (0..a.scenarios as u64)
            .map(|i| gen_stationary(5000, channels, 1.0, seed.wrapping_add(i)))
            .collect::<volcd::Result<Vec<_>>>()?;
        let c = calibrate_mu(&grid, a.target, |mu| {
            Ok(stationary_event_rate(&spec.with_mu(mu), &scenarios)? * 5000.0)
        })?;
        json!({ "mu": c.mu, "events_per_5000": c.rate })
    } else {
        let template = SynthConfig::default().with_channels(channels, a.correlation);
        let scenarios = protocol_scenarios(&template, a.scenarios, seed)?;
        let c = calibrate_mu(&grid, a.target, |mu| {
            Ok(evaluate_scenarios(&spec.with_mu(mu), &scenarios, &mc, None)?.report().fp_proportion)
        })?;
        let report = evaluate_scenarios(&spec.with_mu(c.mu), &scenarios, &mc, None)?.report();
        json!({ "mu": c.mu, "fp_proportion": c.rate, "tp_proportion": report.tp_proportion })
    };
    println!("{result}");
    Ok(())
}
