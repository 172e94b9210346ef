//! World definition, the fixed-step closed-loop driver, event detection and
//! run metrics.

pub mod file;
pub mod metrics;
pub mod path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::fuzzy::{ControllerInputs, FuzzyController};
use crate::geom2d::normalize_angle;
use crate::sensors::{sonar_scan, vision_sample, Obstacle, SonarConfig, SonarReading, VisionConfig};
use crate::vehicle::{kinematics_step, mix_commands, motor_step, VehicleParams, VehicleState, MAX_DT};

pub use file::{load_scenario, parse_scenario, Overrides};
pub use metrics::{compute_metrics, Metrics, SETTLING_BAND_DEG};
pub use path::{Path, PathSpec, Projection, SegmentSpec};

/// Consecutive invalid vision samples tolerated before the track is lost.
pub const TRACK_LOST_SAMPLES: u32 = 10;

/// Wheel target, as a fraction of `max_wheel_speed`, used after the track is lost.
pub const FALLBACK_SPEED_FRACTION: f64 = 0.2;

/// Event bits recorded per tick.
pub mod event {
    pub const LINE_CROSS: u8 = 1;
    pub const COLLISION: u8 = 2;
    pub const TRACK_LOST: u8 = 4;

    pub fn names(mask: u8) -> Vec<&'static str> {
        let mut out = Vec::new();
        if mask & LINE_CROSS != 0 {
            out.push("line_cross");
        }
        if mask & COLLISION != 0 {
            out.push("collision");
        }
        if mask & TRACK_LOST != 0 {
            out.push("track_lost");
        }
        out
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub path: PathSpec,
    pub obstacles: Vec<Obstacle>,
    pub vehicle: VehicleParams,
    /// `(x, y, heading)`, heading in radians.
    pub start: (f64, f64, f64),
    pub vision: VisionConfig,
    pub sonar: SonarConfig,
    pub controller: FuzzyController,
    /// Where the controller was loaded from, for reports.
    pub controller_source: String,
    /// Reference speed fed to the controller, m/s.
    pub speed_ref: f64,
    /// Hz
    pub control_rate: f64,
    /// s
    pub dt: f64,
    /// s
    pub duration: f64,
    pub seed: u64,
}

impl Scenario {
    /// Default sensors, vehicle and controller on the given path, starting at
    /// the path's start pose.
    pub fn with_path(name: impl Into<String>, path: PathSpec) -> Self {
        let start = (path.start.x, path.start.y, path.start_heading);
        Scenario {
            name: name.into(),
            path,
            obstacles: Vec::new(),
            vehicle: VehicleParams::default(),
            start,
            vision: VisionConfig::default(),
            sonar: SonarConfig::default(),
            controller: FuzzyController::default_controller(),
            controller_source: "<builtin>".into(),
            speed_ref: 0.4,
            control_rate: 10.0,
            dt: 0.01,
            duration: 30.0,
            seed: 0,
        }
    }

    /// Checks everything `run_simulation` relies on. A zero duration is
    /// accepted here (it yields a single-row record); scenario files and the
    /// command line require a positive one.
    pub fn validate(&self) -> Result<Path, ScenarioError> {
        let bad = |m: String| ScenarioError::Invalid(m);
        if !(self.dt > 0.0 && self.dt <= MAX_DT) {
            return Err(bad(format!("dt must lie in (0, {MAX_DT}] s (got {})", self.dt)));
        }
        if !(self.duration >= 0.0 && self.duration.is_finite()) {
            return Err(bad(format!("duration must be >= 0 s (got {})", self.duration)));
        }
        if !(self.control_rate > 0.0 && self.control_rate.is_finite()) {
            return Err(bad("control rate must be > 0".into()));
        }
        if !(self.speed_ref.is_finite()) {
            return Err(bad("speed_ref must be finite".into()));
        }
        let (x, y, h) = self.start;
        if ![x, y, h].iter().all(|v| v.is_finite()) {
            return Err(bad("start pose must be finite".into()));
        }
        self.vehicle.validate().map_err(bad)?;
        self.vision.validate().map_err(bad)?;
        self.sonar.validate().map_err(bad)?;
        for (i, o) in self.obstacles.iter().enumerate() {
            if !(o.radius > 0.0 && o.center.is_finite()) {
                return Err(bad(format!("obstacle {}: needs a finite centre and radius > 0", i + 1)));
            }
        }
        Path::build(&self.path).map_err(bad)
    }

    pub fn tick_count(&self) -> usize {
        (self.duration / self.dt + 1e-9).floor() as usize + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrajectoryRow {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub left_speed: f64,
    pub right_speed: f64,
    pub left_cmd: f64,
    pub right_cmd: f64,
    /// Held line offset the controller is using, m.
    pub derived_offset: f64,
    /// Held line angle the controller is using, rad.
    pub derived_angle: f64,
    /// Validity of the most recent vision sample.
    pub vision_valid: bool,
    pub sonar_left: f64,
    pub sonar_center: f64,
    pub sonar_right: f64,
    /// Ground-truth signed distance from the path, positive to its left, m.
    pub cross_track: f64,
    /// Ground-truth heading minus local path tangent, rad.
    pub heading_error: f64,
    /// Arc-length of the nearest path point, m.
    pub path_s: f64,
    pub events: u8,
}

impl TrajectoryRow {
    pub const HEADER: [&'static str; 18] = [
        "t",
        "x",
        "y",
        "heading",
        "left_speed",
        "right_speed",
        "left_cmd",
        "right_cmd",
        "derived_offset",
        "derived_angle",
        "vision_valid",
        "sonar_left",
        "sonar_center",
        "sonar_right",
        "cross_track",
        "heading_error",
        "path_s",
        "events",
    ];

    /// Fields in [`Self::HEADER`] order, shortest round-trip formatting.
    pub fn to_fields(&self) -> [String; 18] {
        [
            self.t.to_string(),
            self.x.to_string(),
            self.y.to_string(),
            self.heading.to_string(),
            self.left_speed.to_string(),
            self.right_speed.to_string(),
            self.left_cmd.to_string(),
            self.right_cmd.to_string(),
            self.derived_offset.to_string(),
            self.derived_angle.to_string(),
            u8::from(self.vision_valid).to_string(),
            self.sonar_left.to_string(),
            self.sonar_center.to_string(),
            self.sonar_right.to_string(),
            self.cross_track.to_string(),
            self.heading_error.to_string(),
            self.path_s.to_string(),
            self.events.to_string(),
        ]
    }

    pub fn from_fields(fields: &[&str]) -> Result<Self, String> {
        if fields.len() != 18 {
            return Err(format!("expected 18 columns, found {}", fields.len()));
        }
        let f = |i: usize| -> Result<f64, String> {
            fields[i]
                .trim()
                .parse::<f64>()
                .map_err(|e| format!("column {}: {e}", Self::HEADER[i]))
        };
        let flag = fields[10].trim();
        let events = fields[17]
            .trim()
            .parse::<u8>()
            .map_err(|e| format!("column events: {e}"))?;
        Ok(TrajectoryRow {
            t: f(0)?,
            x: f(1)?,
            y: f(2)?,
            heading: f(3)?,
            left_speed: f(4)?,
            right_speed: f(5)?,
            left_cmd: f(6)?,
            right_cmd: f(7)?,
            derived_offset: f(8)?,
            derived_angle: f(9)?,
            vision_valid: match flag {
                "1" => true,
                "0" => false,
                other => return Err(format!("column vision_valid: expected 0 or 1, found {other}")),
            },
            sonar_left: f(11)?,
            sonar_center: f(12)?,
            sonar_right: f(13)?,
            cross_track: f(14)?,
            heading_error: f(15)?,
            path_s: f(16)?,
            events,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryRecord {
    pub rows: Vec<TrajectoryRow>,
    /// Why the loop stopped.
    pub termination: Termination,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Termination {
    #[default]
    Duration,
    PathComplete,
    Collision,
}

impl TrajectoryRecord {
    pub fn event_count(&self, bit: u8) -> usize {
        self.rows.iter().filter(|r| r.events & bit != 0).count()
    }
}

/// Per-tick inputs to the event detector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TickState {
    pub cross_track: f64,
    /// Distance from the vehicle centre to the nearest active obstacle's
    /// surface plus the body radius; negative means overlap.
    pub obstacle_clearance: f64,
    /// `Some(valid)` on ticks where a vision sample was taken.
    pub vision_sample: Option<bool>,
}

/// Stateful event detection across ticks.
///
/// A line crossing is counted when the vehicle, having been more than
/// `half_width` to one side of the line, is next seen more than `half_width`
/// to the other side; straddling the line does not count.
#[derive(Debug, Clone)]
pub struct EventDetector {
    half_width: f64,
    side: Option<bool>,
    invalid_run: u32,
}

impl EventDetector {
    pub fn new(half_width: f64) -> Self {
        EventDetector {
            half_width,
            side: None,
            invalid_run: 0,
        }
    }

    pub fn invalid_run(&self) -> u32 {
        self.invalid_run
    }

    pub fn track_lost(&self) -> bool {
        self.invalid_run >= TRACK_LOST_SAMPLES
    }

    pub fn detect(&mut self, tick: &TickState) -> u8 {
        let mut mask = 0;
        if tick.cross_track.abs() > self.half_width {
            let left = tick.cross_track > 0.0;
            if self.side.is_some_and(|s| s != left) {
                mask |= event::LINE_CROSS;
            }
            self.side = Some(left);
        }
        if tick.obstacle_clearance < 0.0 {
            mask |= event::COLLISION;
        }
        match tick.vision_sample {
            Some(true) => self.invalid_run = 0,
            Some(false) => {
                self.invalid_run += 1;
                if self.invalid_run == TRACK_LOST_SAMPLES {
                    mask |= event::TRACK_LOST;
                }
            }
            None => {}
        }
        mask
    }
}

/// Sample index scheduler: fires on the first tick at or after each `i / rate`.
#[derive(Debug, Clone)]
struct Schedule {
    rate: f64,
    next: u64,
}

impl Schedule {
    fn new(rate: f64) -> Self {
        Schedule { rate, next: 0 }
    }

    fn due(&mut self, t: f64) -> bool {
        if t + 1e-9 >= self.next as f64 / self.rate {
            // one sample per tick even if the rate exceeds the tick rate
            while t + 1e-9 >= self.next as f64 / self.rate {
                self.next += 1;
            }
            true
        } else {
            false
        }
    }
}

fn clearance(s: &Scenario, t: f64, state: &VehicleState) -> f64 {
    s.obstacles
        .iter()
        .filter(|o| o.is_active(t))
        .map(|o| state.position().distance(o.center) - o.radius - s.vehicle.body_radius)
        .fold(f64::INFINITY, f64::min)
}

/// Runs the closed loop from the scenario's start pose.
///
/// Every tick: sample due sensors (zero-order hold in between, holding the
/// last valid line pose through vision dropouts), run the controller when due,
/// record, then integrate kinematics at the current wheel speeds and advance
/// the wheel servos toward their targets. Stops at `duration`, at path
/// completion, or on collision.
pub fn run_simulation(s: &Scenario) -> Result<TrajectoryRecord, ScenarioError> {
    let path = s.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let (x0, y0, h0) = s.start;
    let mut state = VehicleState::at_pose(x0, y0, h0);
    let mut detector = EventDetector::new(s.vehicle.body_radius);
    let mut vision_clock = Schedule::new(s.vision.rate);
    let mut sonar_clock = Schedule::new(s.sonar.rate);
    let mut control_clock = Schedule::new(s.control_rate);

    let mut held_pose = (0.0, 0.0);
    let mut last_valid = false;
    let mut sonar = SonarReading::clear(&s.sonar);
    let mut s_hint = path.project(state.position()).s;

    let ticks = s.tick_count();
    let mut record = TrajectoryRecord {
        rows: Vec::with_capacity(ticks),
        termination: Termination::Duration,
    };

    for k in 0..ticks {
        let t = k as f64 * s.dt;

        let mut sampled = None;
        if vision_clock.due(t) {
            let v = vision_sample(&s.vision, &path, &state, &mut rng);
            if v.valid {
                held_pose = (v.derived_offset, v.derived_angle);
            }
            last_valid = v.valid;
            sampled = Some(v.valid);
        }
        if sonar_clock.due(t) {
            sonar = sonar_scan(&s.sonar, &s.obstacles, t, &state, &mut rng);
        }

        let proj = path.project_near(state.position(), s_hint);
        s_hint = proj.s;
        let mut events = detector.detect(&TickState {
            cross_track: proj.cross_track,
            obstacle_clearance: clearance(s, t, &state),
            vision_sample: sampled,
        });
        // collisions are reported once, at the tick that ends the run
        let collided = events & event::COLLISION != 0;
        if !collided {
            events &= !event::COLLISION;
        }

        if control_clock.due(t) {
            let (left, right) = if detector.track_lost() {
                let v = FALLBACK_SPEED_FRACTION * s.vehicle.max_wheel_speed;
                (v, v)
            } else {
                let out = s.controller.infer(&ControllerInputs {
                    offset: held_pose.0,
                    angle: held_pose.1,
                    sonar_left: sonar.zone_left,
                    sonar_center: sonar.zone_center,
                    sonar_right: sonar.zone_right,
                    speed_ref: s.speed_ref,
                });
                mix_commands(out.steer(), out.left(), out.right(), &s.vehicle)
            };
            state.left.target = left;
            state.right.target = right;
        }

        record.rows.push(TrajectoryRow {
            t,
            x: state.x,
            y: state.y,
            heading: state.heading,
            left_speed: state.left.speed,
            right_speed: state.right.speed,
            left_cmd: state.left.target,
            right_cmd: state.right.target,
            derived_offset: held_pose.0,
            derived_angle: held_pose.1,
            vision_valid: last_valid,
            sonar_left: sonar.zone_left,
            sonar_center: sonar.zone_center,
            sonar_right: sonar.zone_right,
            cross_track: proj.cross_track,
            heading_error: normalize_angle(state.heading - proj.tangent),
            path_s: proj.s,
            events,
        });

        if collided {
            record.termination = Termination::Collision;
            break;
        }
        if proj.s >= path.total_length() - 1e-9 {
            record.termination = Termination::PathComplete;
            break;
        }
        if k + 1 == ticks {
            break;
        }
        state = kinematics_step(state, &s.vehicle, s.dt);
        state.left = motor_step(state.left, &s.vehicle, s.dt);
        state.right = motor_step(state.right, &s.vehicle, s.dt);
    }
    Ok(record)
}
