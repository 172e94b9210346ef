//! Command-line front end.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::camera::{calibrate, CalibrationSet, GroundPoint, ImagePoint};
use crate::fuzzy::config::{load_controller, ConfigError};
use crate::fuzzy::{validate_rulebase, ControllerInputs, FuzzyController, Severity, OUTPUT_NAMES};
use crate::scenario::{
    compute_metrics, event, load_scenario, run_simulation, Metrics, Overrides, Scenario, Termination,
    TrajectoryRecord, TrajectoryRow,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_FAILURE_EVENTS: i32 = 2;

/// Environment variable holding the default output directory.
pub const OUT_ENV: &str = "LFSIM_OUT";

#[derive(Debug, Parser)]
#[command(
    name = "lfsim",
    version,
    about = "Line-following vehicle simulator",
    after_help = "Settings are resolved as: command-line flags > scenario file > built-in defaults.\n\
                  Exit status: 0 ok, 1 invalid input, 2 the vehicle crossed the line or collided."
)]
pub struct Cli {
    /// Output directory [default: ./out for `run`, the trajectory's directory for `plot-data`]
    #[arg(long, global = true, env = OUT_ENV)]
    pub out: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one or more scenarios; each writes into <out>/<scenario name>/
    Run(RunArgs),
    /// Fit camera coefficients from a correspondence file
    Calibrate {
        /// Lines of `xg yg zg xpi ypi [weight]`; `#` starts a comment
        points: PathBuf,
    },
    /// Evaluate the controller once
    #[command(allow_negative_numbers = true)]
    FuzzyEval(FuzzyEvalArgs),
    /// Turn a trajectory CSV into plot-ready series
    PlotData {
        trajectory: PathBuf,
    },
    /// Check scenario or rule-base files
    Validate {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(required = true)]
    pub scenarios: Vec<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Physics step, s
    #[arg(long)]
    pub dt: Option<f64>,
    /// Simulated time, s
    #[arg(long)]
    pub duration: Option<f64>,
    /// Scenarios run concurrently
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct FuzzyEvalArgs {
    /// Rule-base file [default: the built-in rule base]
    #[arg(long)]
    pub rules: Option<PathBuf>,
    /// Line offset, m
    pub offset: f64,
    /// Line angle, rad
    pub angle: f64,
    /// m
    pub sonar_left: f64,
    /// m
    pub sonar_center: f64,
    /// m
    pub sonar_right: f64,
    /// Reference speed, m/s
    pub speed: f64,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let sink: &mut dyn Write = if e.use_stderr() { err } else { out };
            let _ = write!(sink, "{}", e.render());
            return code;
        }
    };
    match dispatch(&cli, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e:#}");
            EXIT_INVALID
        }
    }
}

fn dispatch(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    match &cli.command {
        Command::Run(a) => {
            let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("out"));
            let ov = Overrides {
                seed: a.seed,
                dt: a.dt,
                duration: a.duration,
            };
            cmd_run_batch(&a.scenarios, &dir, &ov, a.jobs, out, err)
        }
        Command::Calibrate { points } => cmd_calibrate(points, out),
        Command::FuzzyEval(a) => cmd_fuzzy_eval(a, out),
        Command::PlotData { trajectory } => {
            let dir = match &cli.out {
                Some(d) => d.clone(),
                None => trajectory.parent().map(Path::to_path_buf).unwrap_or_default(),
            };
            let files = cmd_plotdata(trajectory, &dir)?;
            for f in files {
                writeln!(out, "wrote {}", f.display())?;
            }
            Ok(EXIT_OK)
        }
        Command::Validate { files } => cmd_validate(files, out),
    }
}

/// Writes `path` through a temporary file in the same directory that is
/// renamed into place only after `fill` succeeds.
pub fn write_atomic<F>(path: &Path, fill: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).with_context(|| format!("{}: cannot create directory", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("{}: cannot create temp file", dir.display()))?;
    {
        let mut w = io::BufWriter::new(tmp.as_file_mut());
        fill(&mut w).with_context(|| format!("{}: write failed", path.display()))?;
        w.flush()?;
    }
    tmp.persist(path).map_err(|e| anyhow!("{}: {}", path.display(), e.error))?;
    Ok(())
}

pub fn write_trajectory_csv(rec: &TrajectoryRecord, w: &mut dyn Write) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(TrajectoryRow::HEADER)?;
    for row in &rec.rows {
        csv.write_record(row.to_fields())?;
    }
    csv.flush()?;
    Ok(())
}

pub fn read_trajectory_csv(path: &Path) -> Result<Vec<TrajectoryRow>> {
    let shown = path.display();
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("{shown}: cannot open trajectory"))?;
    let header = rdr.headers().with_context(|| format!("{shown}: cannot read header"))?.clone();
    if header.iter().ne(TrajectoryRow::HEADER.iter().copied()) {
        bail!("{shown}:1: unexpected header; expected {}", TrajectoryRow::HEADER.join(","));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.with_context(|| format!("{shown}:{line}: malformed row"))?;
        let fields: Vec<&str> = rec.iter().collect();
        rows.push(TrajectoryRow::from_fields(&fields).map_err(|m| anyhow!("{shown}:{line}: {m}"))?);
    }
    Ok(rows)
}

/// `x` rounded to `sig` significant figures, shortest representation.
pub fn format_sig(x: f64, sig: usize) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return "0".into();
    }
    let rounded: f64 = format!("{:.*e}", sig.saturating_sub(1), x).parse().unwrap_or(x);
    if rounded.abs() < 1e-4 || rounded.abs() >= 1e15 {
        format!("{rounded:e}")
    } else {
        rounded.to_string()
    }
}

fn settling_text(m: &Metrics) -> String {
    m.settling_time.map_or_else(|| "not settled".into(), |t| format_sig(t, 4))
}

/// Structured key/value summary followed by a one-row metrics table.
pub fn metrics_text(s: &Scenario, rec: &TrajectoryRecord, m: &Metrics) -> String {
    let last = rec.rows.last().copied().unwrap_or_default();
    let termination = match rec.termination {
        Termination::Duration => "duration",
        Termination::PathComplete => "path_complete",
        Termination::Collision => "collision",
    };
    let mut t = String::new();
    let mut kv = |k: &str, v: String| t.push_str(&format!("{k} = {v}\n"));
    kv("scenario", s.name.clone());
    kv("controller", s.controller_source.clone());
    kv("seed", s.seed.to_string());
    kv("dt_s", format_sig(s.dt, 4));
    kv("duration_s", format_sig(s.duration, 4));
    kv("ticks", rec.rows.len().to_string());
    kv("termination", termination.into());
    kv("starting_time_s", format_sig(m.starting_time, 4));
    kv("settling_angle_deg", format_sig(m.settling_angle, 4));
    kv("settling_time_s", settling_text(m));
    kv("max_cross_track_m", format_sig(m.max_cross_track, 4));
    kv("line_cross", m.line_cross.to_string());
    kv("collision", m.collision.to_string());
    kv("track_lost", m.track_lost.to_string());
    kv("final_x_m", format_sig(last.x, 4));
    kv("final_y_m", format_sig(last.y, 4));
    let width = s.name.len().max(8);
    t.push('\n');
    t.push_str(&format!(
        "{:<width$}  {:>17}  {:>20}  {:>17}\n",
        "Case", "Starting Time sec.", "Settling angle deg", "Settling time sec."
    ));
    t.push_str(&format!(
        "{:<width$}  {:>17}  {:>20}  {:>17}\n",
        s.name,
        format_sig(m.starting_time, 4),
        format_sig(m.settling_angle, 4),
        settling_text(m)
    ));
    t
}

pub fn events_log(rec: &TrajectoryRecord) -> String {
    let mut out = String::new();
    for r in rec.rows.iter().filter(|r| r.events != 0) {
        for name in event::names(r.events) {
            out.push_str(&format!("{}\t{}\n", format_sig(r.t, 10), name));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub trajectory: PathBuf,
    pub metrics: PathBuf,
    pub events: PathBuf,
    pub exit_status: i32,
    /// The metrics block also written to `metrics`.
    pub summary: String,
}

/// Runs one scenario file and writes `trajectory.csv`, `metrics.txt` and
/// `events.log` into `out_dir`.
pub fn cmd_run(scenario_path: &Path, out_dir: &Path, overrides: &Overrides) -> Result<RunOutput> {
    let s = load_scenario(scenario_path, overrides)?;
    let rec = run_simulation(&s).map_err(|e| anyhow!("{}: {e}", scenario_path.display()))?;
    let m = compute_metrics(&rec, &s);
    let summary = metrics_text(&s, &rec, &m);
    let out = RunOutput {
        trajectory: out_dir.join("trajectory.csv"),
        metrics: out_dir.join("metrics.txt"),
        events: out_dir.join("events.log"),
        exit_status: if m.failed() { EXIT_FAILURE_EVENTS } else { EXIT_OK },
        summary,
    };
    write_atomic(&out.trajectory, |w| write_trajectory_csv(&rec, w))?;
    write_atomic(&out.metrics, |w| Ok(w.write_all(out.summary.as_bytes())?))?;
    let log = events_log(&rec);
    write_atomic(&out.events, |w| Ok(w.write_all(log.as_bytes())?))?;
    Ok(out)
}

fn scenario_stem(p: &Path) -> String {
    p.file_stem().map_or_else(|| "scenario".into(), |s| s.to_string_lossy().into_owned())
}

fn cmd_run_batch(
    scenarios: &[PathBuf],
    out_dir: &Path,
    ov: &Overrides,
    jobs: usize,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<i32> {
    let stems: Vec<String> = scenarios.iter().map(|p| scenario_stem(p)).collect();
    for (i, a) in stems.iter().enumerate() {
        if stems[..i].contains(a) {
            bail!("two scenarios share the output directory name `{a}`");
        }
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build()?;
    let results: Vec<Result<RunOutput>> = pool.install(|| {
        scenarios
            .par_iter()
            .zip(stems.par_iter())
            .map(|(p, stem)| cmd_run(p, &out_dir.join(stem), ov))
            .collect()
    });
    let mut code = EXIT_OK;
    for r in results {
        match r {
            Ok(o) => {
                writeln!(out, "{}", o.summary)?;
                writeln!(out, "wrote {}", o.trajectory.display())?;
                if o.exit_status == EXIT_FAILURE_EVENTS && code == EXIT_OK {
                    code = EXIT_FAILURE_EVENTS;
                }
            }
            Err(e) => {
                writeln!(err, "error: {e:#}")?;
                code = EXIT_INVALID;
            }
        }
    }
    Ok(code)
}

/// Parses a correspondence file: one `xg yg zg xpi ypi [weight]` per line,
/// weights (if given) must be 1, `#` begins a comment.
pub fn parse_correspondences(src: &str, path: &str) -> Result<CalibrationSet, ConfigError> {
    let mut points = Vec::new();
    for (i, raw) in src.lines().enumerate() {
        let err = |message: String| ConfigError {
            path: path.to_string(),
            line: Some(i + 1),
            message,
        };
        let text = raw.split('#').next().unwrap_or("").trim();
        if text.is_empty() {
            continue;
        }
        let vals: Vec<f64> = text
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| err(format!("`{t}` is not a number"))))
            .collect::<Result<_, _>>()?;
        if !(5..=6).contains(&vals.len()) {
            return Err(err(format!("expected `xg yg zg xpi ypi [weight]`, found {} values", vals.len())));
        }
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(err("values must be finite".into()));
        }
        if vals.len() == 6 && vals[5] != 1.0 {
            return Err(err(format!("weight must be 1 (got {})", vals[5])));
        }
        points.push((
            GroundPoint {
                xg: vals[0],
                yg: vals[1],
                zg: vals[2],
            },
            ImagePoint {
                xpi: vals[3],
                ypi: vals[4],
            },
        ));
    }
    Ok(CalibrationSet { points })
}

fn cmd_calibrate(points: &Path, out: &mut dyn Write) -> Result<i32> {
    let shown = points.display().to_string();
    let src = fs::read_to_string(points).with_context(|| format!("{shown}: cannot read correspondences"))?;
    let set = parse_correspondences(&src, &shown)?;
    let model = calibrate(&set).map_err(|e| anyhow!("{shown}: {e}"))?;
    let names = ["a11", "a12", "a13", "a14", "a21", "a22", "a23", "a24"];
    for (n, v) in names.iter().zip(model.coefficients()) {
        writeln!(out, "{n} = {v:.11e}")?;
    }
    writeln!(out, "\npoint  residual_xpi  residual_ypi")?;
    for (i, (dx, dy)) in set.residuals(&model).iter().enumerate() {
        writeln!(out, "{:>5}  {:>12}  {:>12}", i + 1, format_sig(*dx, 4), format_sig(*dy, 4))?;
    }
    writeln!(out, "rms = {}", format_sig(set.rms_residual(&model), 4))?;
    Ok(EXIT_OK)
}

fn cmd_fuzzy_eval(a: &FuzzyEvalArgs, out: &mut dyn Write) -> Result<i32> {
    let ctrl = match &a.rules {
        Some(p) => load_controller(p)?,
        None => FuzzyController::default_controller(),
    };
    let r = ctrl.infer(&ControllerInputs {
        offset: a.offset,
        angle: a.angle,
        sonar_left: a.sonar_left,
        sonar_center: a.sonar_center,
        sonar_right: a.sonar_right,
        speed_ref: a.speed,
    });
    writeln!(out, "steer_bias = {}", r.steer())?;
    writeln!(out, "left_speed = {}", r.left())?;
    writeln!(out, "right_speed = {}", r.right())?;
    let flags: Vec<String> = OUTPUT_NAMES
        .iter()
        .zip(r.no_rule_fired)
        .map(|(n, f)| format!("{n}:{f}"))
        .collect();
    writeln!(out, "no_rule_fired = {}", flags.join(" "))?;
    Ok(EXIT_OK)
}

/// Writes `path_xy.csv`, `heading_error_t.csv` and `wheel_speeds_t.csv`.
pub fn cmd_plotdata(trajectory: &Path, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let rows = read_trajectory_csv(trajectory)?;
    let files = [
        out_dir.join("path_xy.csv"),
        out_dir.join("heading_error_t.csv"),
        out_dir.join("wheel_speeds_t.csv"),
    ];
    write_atomic(&files[0], |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["x", "y", "path_x", "path_y"])?;
        for r in &rows {
            // nearest path point: step back along the path normal
            let tangent = r.heading - r.heading_error;
            let px = r.x + r.cross_track * tangent.sin();
            let py = r.y - r.cross_track * tangent.cos();
            csv.write_record([r.x.to_string(), r.y.to_string(), px.to_string(), py.to_string()])?;
        }
        csv.flush()?;
        Ok(())
    })?;
    write_atomic(&files[1], |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["t", "heading_error_deg"])?;
        for r in &rows {
            csv.write_record([r.t.to_string(), r.heading_error.to_degrees().to_string()])?;
        }
        csv.flush()?;
        Ok(())
    })?;
    write_atomic(&files[2], |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["t", "left_speed", "right_speed"])?;
        for r in &rows {
            csv.write_record([r.t.to_string(), r.left_speed.to_string(), r.right_speed.to_string()])?;
        }
        csv.flush()?;
        Ok(())
    })?;
    Ok(files.to_vec())
}

fn is_rulebase(src: &str) -> bool {
    src.lines().any(|l| {
        let l = l.trim();
        l.starts_with("[[input]]") || l.starts_with("[rulebase]")
    })
}

fn report_rulebase(ctrl: &FuzzyController, label: &str, out: &mut dyn Write) -> Result<bool> {
    let diags = validate_rulebase(ctrl);
    for d in &diags {
        writeln!(out, "{label}: {d}")?;
    }
    Ok(diags.iter().any(|d| d.severity == Severity::Error))
}

fn cmd_validate(files: &[PathBuf], out: &mut dyn Write) -> Result<i32> {
    let mut code = EXIT_OK;
    for f in files {
        let shown = f.display().to_string();
        let src = match fs::read_to_string(f) {
            Ok(s) => s,
            Err(e) => {
                writeln!(out, "{shown}: cannot read: {e}")?;
                code = EXIT_INVALID;
                continue;
            }
        };
        let failed = if is_rulebase(&src) {
            match load_controller(f) {
                Ok(ctrl) => report_rulebase(&ctrl, &shown, out)?,
                Err(e) => {
                    writeln!(out, "{e}")?;
                    true
                }
            }
        } else {
            match load_scenario(f, &Overrides::default()) {
                Ok(s) => report_rulebase(&s.controller, &s.controller_source, out)?,
                Err(e) => {
                    writeln!(out, "{e}")?;
                    true
                }
            }
        };
        if failed {
            code = EXIT_INVALID;
        } else {
            writeln!(out, "{shown}: ok")?;
        }
    }
    Ok(code)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig_figs() {
        assert_eq!(format_sig(0.0, 4), "0");
        assert_eq!(format_sig(19.0, 4), "19");
        assert_eq!(format_sig(2.2, 4), "2.2");
        assert_eq!(format_sig(0.0123456, 4), "0.01235");
        assert_eq!(format_sig(-35.00001, 4), "-35");
        assert_eq!(format_sig(123456.0, 4), "123500");
        assert_eq!(format_sig(1.4210854715202004e-13, 4), "1.421e-13");
    }

    #[test]
    fn atomic_write_leaves_nothing_on_failure() {
        let dir = tempfile::tempdir().unwrap();
        let target = dir.path().join("x.csv");
        let r = write_atomic(&target, |w| {
            w.write_all(b"partial,")?;
            bail!("interrupted")
        });
        assert!(r.is_err());
        assert!(!target.exists());
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);

        fs::write(&target, "old").unwrap();
        let _ = write_atomic(&target, |_| bail!("interrupted"));
        assert_eq!(fs::read_to_string(&target).unwrap(), "old");
        write_atomic(&target, |w| Ok(w.write_all(b"new")?)).unwrap();
        assert_eq!(fs::read_to_string(&target).unwrap(), "new");
    }

    #[test]
    fn correspondence_parsing() {
        let src = "# header\n1 2 0 10 20\n\n3 4 0.5 30 40 1 # trailing\n";
        let set = parse_correspondences(src, "p.txt").unwrap();
        assert_eq!(set.points.len(), 2);
        assert_eq!(set.points[1].0.zg, 0.5);
        let e = parse_correspondences("1 2 0 10 20\n1 2 0 10 20 0.5\n", "p.txt").unwrap_err();
        assert_eq!(e.line, Some(2));
        let e = parse_correspondences("1 2 0 x 20\n", "p.txt").unwrap_err();
        assert_eq!(e.to_string(), "p.txt:1: `x` is not a number");
        let e = parse_correspondences("1 2 0 20\n", "p.txt").unwrap_err();
        assert_eq!(e.line, Some(1));
    }

    #[test]
    fn events_are_logged_by_name() {
        let rec = TrajectoryRecord {
            rows: vec![
                TrajectoryRow { t: 0.0, ..Default::default() },
                TrajectoryRow {
                    t: 0.5,
                    events: event::LINE_CROSS | event::TRACK_LOST,
                    ..Default::default()
                },
            ],
            ..Default::default()
        };
        assert_eq!(events_log(&rec), "0.5\tline_cross\n0.5\ttrack_lost\n");
    }
}
