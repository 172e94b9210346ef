//! Scenario files.
//!
//! A scenario is a TOML document:
//!
//! ```toml
//! name = "curved"
//! controller = "../rules/default.toml"   # relative to this file; optional
//! dt = 0.01
//! duration = 40.0
//! seed = 7
//! speed_ref = 0.4
//!
//! [path]
//! start = { x = 0.0, y = 0.0, heading_deg = 0.0 }
//! segments = [
//!     { straight = 3.0 },
//!     { arc = { radius = 5.0, sweep_deg = 90.0 } },
//!     { polyline = [[8.0, 5.0], [8.0, 9.0], [4.0, 12.0]] },
//! ]
//!
//! [start]                      # optional, defaults to the path start
//! x = 0.0
//! y = 0.3
//! heading_deg = 10.0
//!
//! [vehicle]                    # any of the VehicleParams fields
//! [vision]                     # pixel_noise_sigma, dropout_probability, rate, ...
//! [sonar]                      # bearings_deg, cone_half_angle_deg, ranges, rate, noise_sigma
//!
//! [[obstacle]]
//! center = [6.0, 4.0]
//! radius = 0.2
//! active = [5.0, 20.0]         # optional activation window, s
//! ```

use std::path::{Path as FsPath, PathBuf};

use serde::Deserialize;
use toml::Spanned;

use super::{PathSpec, Scenario, SegmentSpec};
use crate::camera::CameraModel;
use crate::fuzzy::config::{line_of, load_controller, toml_error, ConfigError};
use crate::fuzzy::FuzzyController;
use crate::geom2d::Point2;
use crate::sensors::{Obstacle, SonarConfig, VisionConfig};
use crate::vehicle::{VehicleParams, MAX_DT};

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub dt: Option<f64>,
    pub duration: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    name: Option<String>,
    controller: Option<Spanned<String>>,
    dt: Option<Spanned<f64>>,
    duration: Spanned<f64>,
    #[serde(default)]
    seed: u64,
    speed_ref: Option<Spanned<f64>>,
    control_rate: Option<Spanned<f64>>,
    path: Spanned<PathDef>,
    start: Option<Spanned<PoseDef>>,
    vehicle: Option<Spanned<VehicleParams>>,
    vision: Option<Spanned<VisionDef>>,
    sonar: Option<Spanned<SonarDef>>,
    #[serde(default)]
    obstacle: Vec<Spanned<ObstacleDef>>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct PoseDef {
    #[serde(default)]
    x: f64,
    #[serde(default)]
    y: f64,
    #[serde(default)]
    heading_deg: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PathDef {
    #[serde(default)]
    start: PoseDef,
    segments: Vec<Spanned<SegmentDef>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "lowercase")]
enum SegmentDef {
    Straight(f64),
    Arc { radius: f64, sweep_deg: f64 },
    Polyline(Vec<[f64; 2]>),
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct VisionDef {
    camera: Option<CameraModel>,
    window_near_row: Option<u32>,
    window_far_row: Option<u32>,
    sensor_width: Option<u32>,
    sensor_height: Option<u32>,
    pixel_noise_sigma: Option<f64>,
    dropout_probability: Option<f64>,
    rate: Option<f64>,
    quantize: Option<bool>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct SonarDef {
    bearings_deg: Option<[f64; 6]>,
    cone_half_angle_deg: Option<f64>,
    min_range: Option<f64>,
    max_range: Option<f64>,
    rate: Option<f64>,
    noise_sigma: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObstacleDef {
    center: [f64; 2],
    radius: f64,
    active: Option<[f64; 2]>,
}

struct Ctx<'a> {
    src: &'a str,
    path: &'a str,
}

impl Ctx<'_> {
    fn at<T>(&self, spanned: &Spanned<T>, message: impl Into<String>) -> ConfigError {
        ConfigError {
            path: self.path.to_string(),
            line: Some(line_of(self.src, spanned.span().start)),
            message: message.into(),
        }
    }

    fn plain(&self, message: impl Into<String>) -> ConfigError {
        ConfigError {
            path: self.path.to_string(),
            line: None,
            message: message.into(),
        }
    }
}

pub fn load_scenario(path: &FsPath, overrides: &Overrides) -> Result<Scenario, ConfigError> {
    let shown = path.display().to_string();
    let src = std::fs::read_to_string(path).map_err(|e| ConfigError {
        path: shown.clone(),
        line: None,
        message: format!("cannot read scenario: {e}"),
    })?;
    let base = path.parent().map(FsPath::to_path_buf).unwrap_or_default();
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned());
    parse_scenario(&src, &shown, &base, stem.as_deref(), overrides)
}

/// Parses and validates a scenario document. Relative controller paths are
/// resolved against `base_dir`; `path` is only used in messages.
pub fn parse_scenario(
    src: &str,
    path: &str,
    base_dir: &FsPath,
    default_name: Option<&str>,
    overrides: &Overrides,
) -> Result<Scenario, ConfigError> {
    let cx = Ctx { src, path };
    let file: ScenarioFile = toml::from_str(src).map_err(|e| toml_error(src, path, &e))?;

    let path_spec = path_spec(&cx, &file.path)?;
    let mut s = Scenario::with_path(
        file.name.clone().or(default_name.map(String::from)).unwrap_or_else(|| "scenario".into()),
        path_spec,
    );

    if let Some(c) = &file.controller {
        let p: PathBuf = base_dir.join(c.get_ref());
        s.controller = load_controller(&p).map_err(|e| cx.at(c, format!("controller: {e}")))?;
        s.controller_source = p.display().to_string();
    } else {
        s.controller = FuzzyController::default_controller();
    }

    if let Some(dt) = &file.dt {
        let v = *dt.get_ref();
        if !(v > 0.0 && v <= MAX_DT) {
            return Err(cx.at(dt, format!("dt must lie in (0, {MAX_DT}] s (got {v})")));
        }
        s.dt = v;
    }
    let d = *file.duration.get_ref();
    if !(d > 0.0 && d.is_finite()) {
        return Err(cx.at(&file.duration, format!("duration must be > 0 s (got {d})")));
    }
    s.duration = d;
    s.seed = file.seed;
    if let Some(v) = &file.speed_ref {
        if !(v.get_ref().is_finite() && *v.get_ref() >= 0.0) {
            return Err(cx.at(v, "speed_ref must be finite and >= 0"));
        }
        s.speed_ref = *v.get_ref();
    }
    if let Some(v) = &file.control_rate {
        if !(*v.get_ref() > 0.0 && v.get_ref().is_finite()) {
            return Err(cx.at(v, "control_rate must be > 0"));
        }
        s.control_rate = *v.get_ref();
    }
    if let Some(p) = &file.start {
        let p0 = p.get_ref();
        s.start = (p0.x, p0.y, p0.heading_deg.to_radians());
    }
    if let Some(v) = &file.vehicle {
        v.get_ref().validate().map_err(|m| cx.at(v, format!("vehicle: {m}")))?;
        s.vehicle = *v.get_ref();
    }
    if let Some(v) = &file.vision {
        s.vision = vision_config(v.get_ref());
        s.vision.validate().map_err(|m| cx.at(v, format!("vision: {m}")))?;
    }
    if let Some(v) = &file.sonar {
        s.sonar = sonar_config(v.get_ref());
        s.sonar.validate().map_err(|m| cx.at(v, format!("sonar: {m}")))?;
    }
    for o in &file.obstacle {
        let d = o.get_ref();
        let center = Point2::new(d.center[0], d.center[1]);
        if !(center.is_finite() && d.radius > 0.0 && d.radius.is_finite()) {
            return Err(cx.at(o, "obstacle needs a finite centre and radius > 0"));
        }
        let mut obstacle = Obstacle::new(center, d.radius);
        if let Some([on, off]) = d.active {
            if on.is_nan() || off.is_nan() || on > off {
                return Err(cx.at(o, format!("obstacle activation window [{on}, {off}] is reversed")));
            }
            obstacle.active = Some((on, off));
        }
        s.obstacles.push(obstacle);
    }

    apply_overrides(&cx, &mut s, overrides)?;
    s.validate().map_err(|e| cx.plain(e.to_string()))?;
    Ok(s)
}

fn apply_overrides(cx: &Ctx, s: &mut Scenario, o: &Overrides) -> Result<(), ConfigError> {
    if let Some(seed) = o.seed {
        s.seed = seed;
    }
    if let Some(dt) = o.dt {
        if !(dt > 0.0 && dt <= MAX_DT) {
            return Err(cx.plain(format!("--dt must lie in (0, {MAX_DT}] s (got {dt})")));
        }
        s.dt = dt;
    }
    if let Some(d) = o.duration {
        if !(d > 0.0 && d.is_finite()) {
            return Err(cx.plain(format!("--duration must be > 0 s (got {d})")));
        }
        s.duration = d;
    }
    Ok(())
}

fn path_spec(cx: &Ctx, def: &Spanned<PathDef>) -> Result<PathSpec, ConfigError> {
    let d = def.get_ref();
    if d.segments.is_empty() {
        return Err(cx.at(def, "path needs at least one segment"));
    }
    let spec = PathSpec {
        start: Point2::new(d.start.x, d.start.y),
        start_heading: d.start.heading_deg.to_radians(),
        segments: d
            .segments
            .iter()
            .map(|seg| match seg.get_ref() {
                SegmentDef::Straight(length) => SegmentSpec::Straight { length: *length },
                SegmentDef::Arc { radius, sweep_deg } => SegmentSpec::Arc {
                    radius: *radius,
                    sweep: sweep_deg.to_radians(),
                },
                SegmentDef::Polyline(points) => SegmentSpec::Polyline {
                    points: points.iter().map(|p| Point2::new(p[0], p[1])).collect(),
                },
            })
            .collect(),
    };
    // build segment by segment so an error points at the offending one
    for k in 1..=spec.segments.len() {
        let prefix = PathSpec {
            segments: spec.segments[..k].to_vec(),
            ..spec.clone()
        };
        if let Err(m) = super::Path::build(&prefix) {
            return Err(cx.at(&d.segments[k - 1], format!("path: {m}")));
        }
    }
    Ok(spec)
}

fn vision_config(d: &VisionDef) -> VisionConfig {
    let mut v = VisionConfig::default();
    if let Some(c) = d.camera {
        v.camera = c;
    }
    v.window_near_row = d.window_near_row.unwrap_or(v.window_near_row);
    v.window_far_row = d.window_far_row.unwrap_or(v.window_far_row);
    v.sensor_width = d.sensor_width.unwrap_or(v.sensor_width);
    v.sensor_height = d.sensor_height.unwrap_or(v.sensor_height);
    v.pixel_noise_sigma = d.pixel_noise_sigma.unwrap_or(v.pixel_noise_sigma);
    v.dropout_probability = d.dropout_probability.unwrap_or(v.dropout_probability);
    v.rate = d.rate.unwrap_or(v.rate);
    v.quantize = d.quantize.unwrap_or(v.quantize);
    v
}

fn sonar_config(d: &SonarDef) -> SonarConfig {
    let mut s = SonarConfig::default();
    if let Some(b) = d.bearings_deg {
        s.bearings = b.map(f64::to_radians);
    }
    if let Some(a) = d.cone_half_angle_deg {
        s.cone_half_angle = a.to_radians();
    }
    s.min_range = d.min_range.unwrap_or(s.min_range);
    s.max_range = d.max_range.unwrap_or(s.max_range);
    s.rate = d.rate.unwrap_or(s.rate);
    s.noise_sigma = d.noise_sigma.unwrap_or(s.noise_sigma);
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
duration = 5.0

[path]
segments = [{ straight = 10.0 }]
"#;

    fn parse(src: &str) -> Result<Scenario, ConfigError> {
        parse_scenario(src, "test.toml", FsPath::new("."), Some("test"), &Overrides::default())
    }

    #[test]
    fn minimal_file_uses_defaults() {
        let s = parse(MINIMAL).unwrap();
        assert_eq!(s.name, "test");
        assert_eq!(s.duration, 5.0);
        assert_eq!(s.dt, 0.01);
        assert_eq!(s.start, (0.0, 0.0, 0.0));
        assert_eq!(s.sonar.rate, 16.0);
        assert_eq!(s.vision.rate, 10.0);
    }

    #[test]
    fn zero_duration_is_rejected_with_line() {
        let e = parse("\n\nduration = 0.0\n[path]\nsegments = [{ straight = 1.0 }]\n").unwrap_err();
        assert_eq!(e.line, Some(3), "{e}");
        assert!(e.to_string().starts_with("test.toml:3:"));
    }

    #[test]
    fn override_duration_zero_is_rejected() {
        let o = Overrides {
            duration: Some(0.0),
            ..Default::default()
        };
        assert!(parse_scenario(MINIMAL, "t", FsPath::new("."), None, &o).is_err());
        let o = Overrides {
            duration: Some(2.0),
            seed: Some(9),
            dt: Some(0.005),
        };
        let s = parse_scenario(MINIMAL, "t", FsPath::new("."), None, &o).unwrap();
        assert_eq!((s.duration, s.seed, s.dt), (2.0, 9, 0.005));
    }

    #[test]
    fn discontinuous_polyline_points_at_its_line() {
        let src = "duration = 1.0\n[path]\nsegments = [\n  { straight = 2.0 },\n  { polyline = [[5.0, 0.0], [6.0, 0.0]] },\n]\n";
        let e = parse(src).unwrap_err();
        assert_eq!(e.line, Some(5), "{e}");
    }

    #[test]
    fn unknown_key_is_reported() {
        let e = parse("duration = 1.0\nwarp = 9\n[path]\nsegments = [{ straight = 1.0 }]\n").unwrap_err();
        assert_eq!(e.line, Some(2), "{e}");
    }

    #[test]
    fn sections_parse() {
        let src = r#"
name = "full"
duration = 3.0
dt = 0.005
seed = 11
speed_ref = 0.3

[path]
start = { x = 1.0, y = 2.0, heading_deg = 90.0 }
segments = [{ straight = 2.0 }, { arc = { radius = 3.0, sweep_deg = -45.0 } }]

[start]
x = 1.1
y = 2.0
heading_deg = 80.0

[vehicle]
wheel_base = 0.4

[vision]
dropout_probability = 0.1
pixel_noise_sigma = 1.5

[sonar]
noise_sigma = 0.02
cone_half_angle_deg = 10.0

[[obstacle]]
center = [1.0, 5.0]
radius = 0.25
active = [1.0, 2.0]
"#;
        let s = parse(src).unwrap();
        assert_eq!(s.name, "full");
        assert_eq!(s.seed, 11);
        assert_eq!(s.vehicle.wheel_base, 0.4);
        assert_eq!(s.vision.dropout_probability, 0.1);
        assert!((s.sonar.cone_half_angle - 10f64.to_radians()).abs() < 1e-15);
        assert_eq!(s.obstacles.len(), 1);
        assert_eq!(s.obstacles[0].active, Some((1.0, 2.0)));
        assert!((s.start.2 - 80f64.to_radians()).abs() < 1e-15);
        assert!(matches!(s.path.segments[1], SegmentSpec::Arc { radius, .. } if radius == 3.0));
    }

    #[test]
    fn bad_vision_section_points_at_section() {
        let src = "duration = 1.0\n[path]\nsegments = [{ straight = 1.0 }]\n[vision]\ndropout_probability = 1.5\n";
        let e = parse(src).unwrap_err();
        assert!(e.line.is_some(), "{e}");
        assert!(e.message.contains("vision"), "{e}");
    }
}
