//! Followed-line geometry: straight, arc and polyline segments chained into one
//! arc-length parameterised path.

use std::f64::consts::PI;

use crate::geom2d::{normalize_angle, Point2};

/// Segment endpoints must meet within this distance.
pub const CONTINUITY_TOL: f64 = 1e-9;

/// Arc-length window searched around the previous projection.
const PROJECTION_WINDOW: f64 = 2.5;

#[derive(Debug, Clone, PartialEq)]
pub enum SegmentSpec {
    Straight { length: f64 },
    /// Positive sweep turns left (counter-clockwise). Radians.
    Arc { radius: f64, sweep: f64 },
    /// World-frame vertices; the first must coincide with the current end point.
    Polyline { points: Vec<Point2> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathSpec {
    pub start: Point2,
    /// rad
    pub start_heading: f64,
    pub segments: Vec<SegmentSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Piece {
    Line {
        start: Point2,
        dir: Point2,
        length: f64,
    },
    Arc {
        center: Point2,
        radius: f64,
        /// polar angle of the start point about the center
        start_angle: f64,
        /// signed sweep, rad
        sweep: f64,
    },
}

impl Piece {
    fn length(&self) -> f64 {
        match *self {
            Piece::Line { length, .. } => length,
            Piece::Arc { radius, sweep, .. } => radius * sweep.abs(),
        }
    }

    fn point_at(&self, s: f64) -> Point2 {
        match *self {
            Piece::Line { start, dir, .. } => start + dir * s,
            Piece::Arc {
                center,
                radius,
                start_angle,
                sweep,
            } => {
                let phi = start_angle + sweep.signum() * s / radius;
                center + Point2::from_angle(phi) * radius
            }
        }
    }

    fn tangent_angle(&self, s: f64) -> f64 {
        match *self {
            Piece::Line { dir, .. } => dir.y.atan2(dir.x),
            Piece::Arc {
                radius,
                start_angle,
                sweep,
                ..
            } => {
                let phi = start_angle + sweep.signum() * s / radius;
                normalize_angle(phi + sweep.signum() * PI / 2.0)
            }
        }
    }

    /// Closest local arc-length to `p`.
    fn closest(&self, p: Point2) -> f64 {
        match *self {
            Piece::Line { start, dir, length } => (p - start).dot(dir).clamp(0.0, length),
            Piece::Arc {
                center,
                radius,
                start_angle,
                sweep,
            } => {
                let v = p - center;
                let len = radius * sweep.abs();
                if v.norm() == 0.0 {
                    return 0.0;
                }
                let phi = v.y.atan2(v.x);
                // angular distance travelled from the start, in the sweep direction
                let rel = (sweep.signum() * (phi - start_angle)).rem_euclid(2.0 * PI);
                let s = rel * radius;
                if s <= len {
                    s
                } else {
                    // beyond the end: nearer endpoint
                    let (a, b) = (self.point_at(0.0), self.point_at(len));
                    if p.distance(a) <= p.distance(b) {
                        0.0
                    } else {
                        len
                    }
                }
            }
        }
    }

    /// Local arc-lengths where the infinite line `origin + t*dir` meets this piece.
    fn intersect_line(&self, origin: Point2, dir: Point2) -> Vec<f64> {
        match *self {
            Piece::Line { start, dir: d, length } => {
                let denom = dir.cross(d);
                if denom.abs() < 1e-15 {
                    return vec![];
                }
                // origin + t dir = start + u d
                let u = (start - origin).cross(dir) / denom;
                if (-1e-12..=length + 1e-12).contains(&u) {
                    vec![u.clamp(0.0, length)]
                } else {
                    vec![]
                }
            }
            Piece::Arc {
                center,
                radius,
                start_angle,
                sweep,
            } => {
                let dn = dir * (1.0 / dir.norm());
                let oc = origin - center;
                let b = oc.dot(dn);
                let c = oc.dot(oc) - radius * radius;
                let disc = b * b - c;
                if disc < 0.0 {
                    return vec![];
                }
                let root = disc.sqrt();
                let len = radius * sweep.abs();
                let mut out = Vec::new();
                for t in [-b - root, -b + root] {
                    let p = origin + dn * t - center;
                    let phi = p.y.atan2(p.x);
                    let s = (sweep.signum() * (phi - start_angle)).rem_euclid(2.0 * PI) * radius;
                    if s <= len + 1e-12 {
                        out.push(s.min(len));
                    }
                }
                out
            }
        }
    }
}

/// Nearest path point to a query position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    /// Arc-length along the path, m.
    pub s: f64,
    pub point: Point2,
    /// Path direction at `point`, rad.
    pub tangent: f64,
    /// Signed distance of the query from the path, positive to the path's left.
    pub cross_track: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pieces: Vec<Piece>,
    /// cumulative arc-length at the start of each piece
    offsets: Vec<f64>,
    total: f64,
}

impl Path {
    pub fn build(spec: &PathSpec) -> Result<Path, String> {
        if !spec.start.is_finite() || !spec.start_heading.is_finite() {
            return Err("path start pose must be finite".into());
        }
        let mut pieces = Vec::new();
        let mut cursor = spec.start;
        let mut heading = spec.start_heading;
        for (i, seg) in spec.segments.iter().enumerate() {
            match seg {
                SegmentSpec::Straight { length } => {
                    if !(*length > 0.0 && length.is_finite()) {
                        return Err(format!("segment {}: straight length must be > 0", i + 1));
                    }
                    let dir = Point2::from_angle(heading);
                    pieces.push(Piece::Line {
                        start: cursor,
                        dir,
                        length: *length,
                    });
                    cursor = cursor + dir * *length;
                }
                SegmentSpec::Arc { radius, sweep } => {
                    if !(*radius > 0.0 && radius.is_finite()) || !(sweep.is_finite() && *sweep != 0.0) {
                        return Err(format!("segment {}: arc needs radius > 0 and a nonzero sweep", i + 1));
                    }
                    if sweep.abs() >= 2.0 * PI {
                        return Err(format!("segment {}: arc sweep must be below 360 degrees", i + 1));
                    }
                    let side = sweep.signum();
                    let normal = Point2::from_angle(heading + side * PI / 2.0);
                    let center = cursor + normal * *radius;
                    let start_angle = (cursor - center).y.atan2((cursor - center).x);
                    let piece = Piece::Arc {
                        center,
                        radius: *radius,
                        start_angle,
                        sweep: *sweep,
                    };
                    cursor = piece.point_at(piece.length());
                    heading += sweep;
                    pieces.push(piece);
                }
                SegmentSpec::Polyline { points } => {
                    if points.len() < 2 {
                        return Err(format!("segment {}: polyline needs at least two points", i + 1));
                    }
                    if points[0].distance(cursor) > CONTINUITY_TOL {
                        return Err(format!(
                            "segment {}: polyline starts at ({}, {}) but the path is at ({}, {})",
                            i + 1,
                            points[0].x,
                            points[0].y,
                            cursor.x,
                            cursor.y
                        ));
                    }
                    for w in points.windows(2) {
                        let d = w[1] - w[0];
                        let length = d.norm();
                        if !(length > 0.0 && length.is_finite()) {
                            return Err(format!("segment {}: repeated polyline vertex", i + 1));
                        }
                        pieces.push(Piece::Line {
                            start: w[0],
                            dir: d * (1.0 / length),
                            length,
                        });
                        heading = d.y.atan2(d.x);
                    }
                    cursor = *points.last().unwrap();
                }
            }
        }
        if pieces.is_empty() {
            return Err("path has no segments".into());
        }
        let mut offsets = Vec::with_capacity(pieces.len());
        let mut total = 0.0;
        for p in &pieces {
            offsets.push(total);
            total += p.length();
        }
        Ok(Path { pieces, offsets, total })
    }

    pub fn total_length(&self) -> f64 {
        self.total
    }

    fn locate(&self, s: f64) -> (usize, f64) {
        let s = s.clamp(0.0, self.total);
        let i = match self.offsets.binary_search_by(|o| o.total_cmp(&s)) {
            Ok(i) => i,
            Err(i) => i - 1,
        };
        (i, s - self.offsets[i])
    }

    pub fn point_at(&self, s: f64) -> Point2 {
        let (i, local) = self.locate(s);
        self.pieces[i].point_at(local)
    }

    pub fn tangent_at(&self, s: f64) -> f64 {
        let (i, local) = self.locate(s);
        self.pieces[i].tangent_angle(local)
    }

    pub fn end_point(&self) -> Point2 {
        self.point_at(self.total)
    }

    /// Nearest point over the whole path.
    pub fn project(&self, p: Point2) -> Projection {
        self.project_in(p, 0.0, self.total)
    }

    /// Nearest point among pieces within a window around `s_hint`, so that
    /// nearby but distant-along-the-path parts of the course are ignored.
    pub fn project_near(&self, p: Point2, s_hint: f64) -> Projection {
        self.project_in(p, s_hint - PROJECTION_WINDOW, s_hint + PROJECTION_WINDOW)
    }

    fn project_in(&self, p: Point2, lo: f64, hi: f64) -> Projection {
        let mut best: Option<(f64, usize, f64)> = None;
        for (i, piece) in self.pieces.iter().enumerate() {
            let start = self.offsets[i];
            let end = start + piece.length();
            if end < lo || start > hi {
                continue;
            }
            let local = piece.closest(p);
            let d = p.distance(piece.point_at(local));
            if best.is_none_or(|(bd, _, _)| d < bd) {
                best = Some((d, i, local));
            }
        }
        let (_, i, local) = best.expect("window always overlaps at least one piece");
        let piece = &self.pieces[i];
        let point = piece.point_at(local);
        let tangent = piece.tangent_angle(local);
        let t = Point2::from_angle(tangent);
        let cross_track = t.cross(p - point);
        Projection {
            s: self.offsets[i] + local,
            point,
            tangent,
            cross_track,
        }
    }

    /// Path arc-lengths where the infinite line `origin + t*dir` crosses the path.
    pub fn intersect_line(&self, origin: Point2, dir: Point2) -> Vec<f64> {
        let mut out = Vec::new();
        for (i, piece) in self.pieces.iter().enumerate() {
            for local in piece.intersect_line(origin, dir) {
                out.push(self.offsets[i] + local);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn spec(segments: Vec<SegmentSpec>) -> PathSpec {
        PathSpec {
            start: Point2::ORIGIN,
            start_heading: 0.0,
            segments,
        }
    }

    #[test]
    fn straight_then_left_arc() {
        let p = Path::build(&spec(vec![
            SegmentSpec::Straight { length: 2.0 },
            SegmentSpec::Arc {
                radius: 1.0,
                sweep: FRAC_PI_2,
            },
        ]))
        .unwrap();
        assert!((p.total_length() - (2.0 + FRAC_PI_2)).abs() < 1e-12);
        let end = p.end_point();
        assert!((end.x - 3.0).abs() < 1e-12 && (end.y - 1.0).abs() < 1e-12);
        assert!((p.tangent_at(p.total_length()) - FRAC_PI_2).abs() < 1e-12);
        let pr = p.project(Point2::new(1.0, 0.5));
        assert!((pr.s - 1.0).abs() < 1e-12);
        assert!((pr.cross_track - 0.5).abs() < 1e-12);
        // inside the arc: left of the path
        let pr = p.project(Point2::new(2.0 + 0.5f64.sqrt() * 0.5, 1.0 - 0.5f64.sqrt() * 0.5));
        assert!(pr.cross_track > 0.0);
    }

    #[test]
    fn right_arc_geometry() {
        let p = Path::build(&spec(vec![SegmentSpec::Arc {
            radius: 2.0,
            sweep: -FRAC_PI_2,
        }]))
        .unwrap();
        let end = p.end_point();
        assert!((end.x - 2.0).abs() < 1e-12 && (end.y + 2.0).abs() < 1e-12);
        assert!((p.tangent_at(p.total_length()) + FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn polyline_continuity_enforced() {
        let ok = Path::build(&spec(vec![
            SegmentSpec::Straight { length: 1.0 },
            SegmentSpec::Polyline {
                points: vec![Point2::new(1.0, 0.0), Point2::new(2.0, 1.0)],
            },
        ]));
        assert!(ok.is_ok());
        let bad = Path::build(&spec(vec![
            SegmentSpec::Straight { length: 1.0 },
            SegmentSpec::Polyline {
                points: vec![Point2::new(1.1, 0.0), Point2::new(2.0, 1.0)],
            },
        ]));
        assert!(bad.is_err());
        assert!(Path::build(&spec(vec![])).is_err());
    }

    #[test]
    fn line_intersections() {
        let p = Path::build(&spec(vec![
            SegmentSpec::Straight { length: 2.0 },
            SegmentSpec::Arc {
                radius: 1.0,
                sweep: FRAC_PI_2,
            },
        ]))
        .unwrap();
        let hits = p.intersect_line(Point2::new(0.5, -1.0), Point2::new(0.0, 1.0));
        assert_eq!(hits.len(), 1);
        assert!((hits[0] - 0.5).abs() < 1e-12);
        // vertical line through the arc at x = 2.5
        let hits = p.intersect_line(Point2::new(2.5, 5.0), Point2::new(0.0, -1.0));
        assert_eq!(hits.len(), 1);
        let q = p.point_at(hits[0]);
        assert!((q.x - 2.5).abs() < 1e-12);
    }

    #[test]
    fn windowed_projection_ignores_far_parts() {
        // hairpin: out along +x, back along -x one metre higher
        let p = Path::build(&spec(vec![
            SegmentSpec::Straight { length: 10.0 },
            SegmentSpec::Arc { radius: 0.5, sweep: PI },
            SegmentSpec::Straight { length: 10.0 },
        ]))
        .unwrap();
        let q = Point2::new(1.0, 0.6);
        assert!(p.project(q).s > 10.0);
        assert!(p.project_near(q, 1.0).s < 2.0);
    }
}
