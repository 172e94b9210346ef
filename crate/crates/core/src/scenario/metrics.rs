//! Run summary: disturbance onset, peak heading deviation, settling time.

use super::{event, Scenario, TrajectoryRecord, TrajectoryRow};
use crate::fuzzy::{FuzzyController, MembershipFunction};

/// Half-width of the heading-error settling band, degrees.
pub const SETTLING_BAND_DEG: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    /// Disturbance onset, s: first tick where any sonar zone reads below its
    /// FAR threshold; 0 when nothing is ever detected.
    pub starting_time: f64,
    /// Largest |heading error| from onset on, degrees. Zero when the error
    /// never leaves the settling band.
    pub settling_angle: f64,
    /// Time from onset until |heading error| enters the band for good, s.
    /// `None` when it is outside the band at the last tick.
    pub settling_time: Option<f64>,
    /// Largest |cross-track| over the run, m.
    pub max_cross_track: f64,
    pub line_cross: usize,
    pub collision: usize,
    pub track_lost: usize,
}

impl Metrics {
    pub fn failed(&self) -> bool {
        self.line_cross > 0 || self.collision > 0
    }
}

/// Per-zone distance below which an object counts as detected: where the FAR
/// term of each sonar input reaches full membership.
pub fn far_thresholds(ctrl: &FuzzyController) -> [f64; 3] {
    ["sonar_left", "sonar_center", "sonar_right"].map(|name| {
        ctrl.input(name)
            .and_then(|v| v.terms.iter().find(|t| t.label.eq_ignore_ascii_case("FAR")))
            .map(|t| match t.mf {
                MembershipFunction::Triangular { b, .. } => b,
                MembershipFunction::Trapezoidal { b, .. } => b,
            })
            .unwrap_or(f64::INFINITY)
    })
}

fn detected(row: &TrajectoryRow, thresholds: &[f64; 3]) -> bool {
    row.sonar_left < thresholds[0] || row.sonar_center < thresholds[1] || row.sonar_right < thresholds[2]
}

pub fn compute_metrics(tr: &TrajectoryRecord, s: &Scenario) -> Metrics {
    metrics_with_thresholds(tr, &far_thresholds(&s.controller))
}

pub fn metrics_with_thresholds(tr: &TrajectoryRecord, thresholds: &[f64; 3]) -> Metrics {
    let rows = &tr.rows;
    let onset_idx = rows.iter().position(|r| detected(r, thresholds));
    let starting_time = onset_idx.map_or(0.0, |i| rows[i].t);
    let from = onset_idx.unwrap_or(0);
    let tail = &rows[from..];

    let err_deg = |r: &TrajectoryRow| r.heading_error.to_degrees().abs();
    let peak = tail.iter().map(err_deg).fold(0.0, f64::max);
    let (settling_angle, settling_time) = if peak < SETTLING_BAND_DEG {
        (0.0, Some(0.0))
    } else {
        let settled = match tail.iter().rposition(|r| err_deg(r) >= SETTLING_BAND_DEG) {
            Some(last_out) if last_out + 1 < tail.len() => Some(tail[last_out + 1].t - starting_time),
            Some(_) => None,
            None => Some(0.0),
        };
        (peak, settled)
    };

    Metrics {
        starting_time,
        settling_angle,
        settling_time,
        max_cross_track: rows.iter().map(|r| r.cross_track.abs()).fold(0.0, f64::max),
        line_cross: tr.event_count(event::LINE_CROSS),
        collision: tr.event_count(event::COLLISION),
        track_lost: tr.event_count(event::TRACK_LOST),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FAR: [f64; 3] = [2.0, 2.0, 2.0];

    fn trace(n: usize, dt: f64, f: impl Fn(f64) -> (f64, f64)) -> TrajectoryRecord {
        TrajectoryRecord {
            rows: (0..n)
                .map(|k| {
                    let t = k as f64 * dt;
                    let (err_deg, sonar) = f(t);
                    TrajectoryRow {
                        t,
                        heading_error: err_deg.to_radians(),
                        sonar_left: 10.0,
                        sonar_center: sonar,
                        sonar_right: 10.0,
                        ..Default::default()
                    }
                })
                .collect(),
            ..Default::default()
        }
    }

    /// 35 degree triangle starting at 2.2 s, peaking at 4.2 s and falling
    /// linearly so it crosses 2 degrees at 21.2 s.
    fn pulse(t: f64) -> f64 {
        let rise_end = 4.2;
        let slope = (35.0 - 2.0) / (21.2 - rise_end);
        if t < 2.2 {
            0.0
        } else if t <= rise_end {
            35.0 * (t - 2.2) / (rise_end - 2.2)
        } else {
            (35.0 - slope * (t - rise_end)).max(0.0)
        }
    }

    #[test]
    fn synthetic_pulse() {
        let tr = trace(3001, 0.01, |t| (pulse(t), if t >= 2.2 - 1e-9 { 1.0 } else { 10.0 }));
        let m = metrics_with_thresholds(&tr, &FAR);
        assert!((m.starting_time - 2.2).abs() < 1e-9, "{m:?}");
        assert!((m.settling_angle - 35.0).abs() < 1e-9, "{m:?}");
        assert!((m.settling_time.unwrap() - 19.0).abs() <= 0.01 + 1e-9, "{m:?}");
    }

    #[test]
    fn never_settles() {
        let tr = trace(500, 0.01, |t| (5.0 + t, 10.0));
        let m = metrics_with_thresholds(&tr, &FAR);
        assert_eq!(m.starting_time, 0.0);
        assert_eq!(m.settling_time, None);
        assert!(m.settling_angle > 5.0);
    }

    #[test]
    fn quiet_run_is_all_zero() {
        let tr = trace(500, 0.01, |_| (0.5, 10.0));
        let m = metrics_with_thresholds(&tr, &FAR);
        assert_eq!((m.starting_time, m.settling_angle, m.settling_time), (0.0, 0.0, Some(0.0)));
    }

    #[test]
    fn appending_settled_ticks_is_neutral() {
        let short = trace(2500, 0.01, |t| (pulse(t), if t >= 2.2 - 1e-9 { 1.0 } else { 10.0 }));
        let long = trace(6000, 0.01, |t| (pulse(t), if t >= 2.2 - 1e-9 { 1.0 } else { 10.0 }));
        let (a, b) = (metrics_with_thresholds(&short, &FAR), metrics_with_thresholds(&long, &FAR));
        assert_eq!(a.starting_time, b.starting_time);
        assert_eq!(a.settling_angle, b.settling_angle);
        assert_eq!(a.settling_time, b.settling_time);
    }

    #[test]
    fn default_far_thresholds() {
        assert_eq!(far_thresholds(&FuzzyController::default_controller()), [2.0; 3]);
    }
}
