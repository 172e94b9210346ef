//! Emulated vision tracker and ultrasonic ring.
//!
//! The tracker finds where the followed line crosses two fixed image rows,
//! quantises and perturbs those image points, back-projects them through the
//! camera model, and reduces them to a line angle and offset. The sonar ring
//! reports, per transducer, the nearest obstacle point inside its cone.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::camera::{back_project, line_pose_from_points, project, CameraModel, GroundPoint, ImagePoint};
use crate::geom2d::{Point2, Transform2};
use crate::scenario::path::Path;
use crate::vehicle::VehicleState;

/// Calibrated model of the bundled forward-looking camera (640x480).
pub fn default_camera() -> CameraModel {
    CameraModel::from_rows([5.0, -160.0, 10.0, 320.0], [-120.0, 4.0, -60.0, 600.0], -0.25)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VisionConfig {
    pub camera: CameraModel,
    /// Lower image row (closer to the vehicle).
    pub window_near_row: u32,
    pub window_far_row: u32,
    pub sensor_width: u32,
    pub sensor_height: u32,
    pub pixel_noise_sigma: f64,
    pub dropout_probability: f64,
    /// Hz
    pub rate: f64,
    /// Round image points to whole pixels before noise. Off only in tests.
    pub quantize: bool,
}

impl Default for VisionConfig {
    fn default() -> Self {
        VisionConfig {
            camera: default_camera(),
            window_near_row: 420,
            window_far_row: 300,
            sensor_width: 640,
            sensor_height: 480,
            pixel_noise_sigma: 0.0,
            dropout_probability: 0.0,
            rate: 10.0,
            quantize: true,
        }
    }
}

impl VisionConfig {
    pub fn validate(&self) -> Result<(), String> {
        self.camera.check_invertible().map_err(|e| e.to_string())?;
        if self.sensor_width == 0 || self.sensor_height == 0 {
            return Err("sensor size must be positive".into());
        }
        if self.window_near_row >= self.sensor_height || self.window_far_row >= self.sensor_height {
            return Err("window rows must lie inside the sensor".into());
        }
        if self.window_near_row <= self.window_far_row {
            return Err("window_near_row must be below (greater than) window_far_row".into());
        }
        if !(self.pixel_noise_sigma >= 0.0 && self.pixel_noise_sigma.is_finite()) {
            return Err("pixel_noise_sigma must be >= 0".into());
        }
        if !(0.0..1.0).contains(&self.dropout_probability) {
            return Err("dropout_probability must lie in [0, 1)".into());
        }
        if !(self.rate > 0.0 && self.rate.is_finite()) {
            return Err("vision rate must be > 0".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VisionSample {
    pub valid: bool,
    pub near: ImagePoint,
    pub far: ImagePoint,
    /// rad
    pub derived_angle: f64,
    /// m, positive when the line is on the vehicle's left
    pub derived_offset: f64,
}

/// Vehicle-frame ground line of all points imaging onto `row` at the fixed height:
/// returns a point on it and its direction.
fn row_preimage(cam: &CameraModel, row: f64) -> (Point2, Point2) {
    let n = Point2::new(cam.a21, cam.a22);
    let k = row - cam.a24 - cam.a23 * cam.zg_fixed;
    let nn = n.dot(n);
    (n * (k / nn), Point2::new(-n.y, n.x))
}

/// Image point where the line crosses `row`, choosing the crossing nearest
/// the image centre column.
fn window_point(cfg: &VisionConfig, path: &Path, to_world: &Transform2, to_vehicle: &Transform2, row: u32) -> Option<ImagePoint> {
    let (p0, dir) = row_preimage(&cfg.camera, row as f64);
    let origin = to_world.apply(p0);
    let wdir = to_world.apply_vector(dir);
    let centre = cfg.sensor_width as f64 / 2.0;
    path.intersect_line(origin, wdir)
        .into_iter()
        .map(|s| {
            let local = to_vehicle.apply(path.point_at(s));
            project(&cfg.camera, GroundPoint::new(local.x, local.y, cfg.camera.zg_fixed))
        })
        .filter(|ip| ip.xpi >= 0.0 && ip.xpi < cfg.sensor_width as f64)
        .min_by(|a, b| (a.xpi - centre).abs().total_cmp(&(b.xpi - centre).abs()))
}

fn in_sensor(cfg: &VisionConfig, ip: &ImagePoint) -> bool {
    ip.xpi >= 0.0 && ip.xpi < cfg.sensor_width as f64 && ip.ypi >= 0.0 && ip.ypi < cfg.sensor_height as f64
}

/// One tracker sample. Always consumes the same number of random draws.
pub fn vision_sample<R: Rng + ?Sized>(cfg: &VisionConfig, path: &Path, pose: &VehicleState, rng: &mut R) -> VisionSample {
    let dropout_draw: f64 = rng.random();
    let noise = Normal::new(0.0, cfg.pixel_noise_sigma).expect("sigma validated");
    let jitter: [f64; 4] = std::array::from_fn(|_| noise.sample(rng));

    let invalid = VisionSample::default();
    let to_world = Transform2::rigid(pose.position(), pose.heading);
    let Some(to_vehicle) = to_world.inverse() else {
        return invalid;
    };
    let (Some(mut near), Some(mut far)) = (
        window_point(cfg, path, &to_world, &to_vehicle, cfg.window_near_row),
        window_point(cfg, path, &to_world, &to_vehicle, cfg.window_far_row),
    ) else {
        return invalid;
    };
    if cfg.quantize {
        near = ImagePoint::new(near.xpi.round(), near.ypi.round());
        far = ImagePoint::new(far.xpi.round(), far.ypi.round());
    }
    near.xpi += jitter[0];
    near.ypi += jitter[1];
    far.xpi += jitter[2];
    far.ypi += jitter[3];
    if dropout_draw < cfg.dropout_probability || !in_sensor(cfg, &near) || !in_sensor(cfg, &far) {
        return VisionSample { near, far, ..invalid };
    }
    let (Ok(gn), Ok(gf)) = (back_project(&cfg.camera, near), back_project(&cfg.camera, far)) else {
        return VisionSample { near, far, ..invalid };
    };
    match line_pose_from_points(gn, gf) {
        Ok((angle, offset)) => VisionSample {
            valid: true,
            near,
            far,
            derived_angle: angle,
            derived_offset: offset,
        },
        Err(_) => VisionSample { near, far, ..invalid },
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Obstacle {
    pub center: Point2,
    pub radius: f64,
    /// Active interval `[on, off]` in seconds; always active when `None`.
    pub active: Option<(f64, f64)>,
}

impl Obstacle {
    pub fn new(center: Point2, radius: f64) -> Self {
        Obstacle {
            center,
            radius,
            active: None,
        }
    }

    pub fn is_active(&self, t: f64) -> bool {
        match self.active {
            None => true,
            Some((on, off)) => t >= on && t <= off,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SonarConfig {
    /// Transducer axes in the vehicle frame, rad, ordered left to right.
    pub bearings: [f64; 6],
    /// rad
    pub cone_half_angle: f64,
    pub min_range: f64,
    pub max_range: f64,
    /// Hz
    pub rate: f64,
    pub noise_sigma: f64,
}

impl Default for SonarConfig {
    fn default() -> Self {
        let b = |deg: f64| deg.to_radians();
        SonarConfig {
            bearings: [b(75.0), b(45.0), b(15.0), b(-15.0), b(-45.0), b(-75.0)],
            cone_half_angle: b(12.5),
            min_range: 0.15,
            max_range: 10.0,
            rate: 16.0,
            noise_sigma: 0.0,
        }
    }
}

impl SonarConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.min_range >= 0.0 && self.min_range < self.max_range && self.max_range.is_finite()) {
            return Err("sonar ranges need 0 <= min_range < max_range".into());
        }
        if !(self.cone_half_angle > 0.0 && self.cone_half_angle < std::f64::consts::FRAC_PI_2) {
            return Err("cone_half_angle must lie in (0, 90) degrees".into());
        }
        if !(self.rate > 0.0 && self.rate.is_finite()) {
            return Err("sonar rate must be > 0".into());
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err("sonar noise_sigma must be >= 0".into());
        }
        if self.bearings.iter().any(|b| !b.is_finite()) {
            return Err("sonar bearings must be finite".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SonarReading {
    pub distances: [f64; 6],
    pub zone_left: f64,
    pub zone_center: f64,
    pub zone_right: f64,
}

impl SonarReading {
    /// Reading with nothing in range.
    pub fn clear(cfg: &SonarConfig) -> Self {
        Self::from_distances([cfg.max_range; 6])
    }

    pub fn from_distances(distances: [f64; 6]) -> Self {
        SonarReading {
            distances,
            zone_left: distances[0].min(distances[1]),
            zone_center: distances[2].min(distances[3]),
            zone_right: distances[4].min(distances[5]),
        }
    }
}

/// Distance along the ray `dir` (unit) from the origin to a disk, if it is hit.
fn ray_disk(dir: Point2, center: Point2, radius: f64) -> Option<f64> {
    let b = dir.dot(center);
    let disc = b * b - (center.dot(center) - radius * radius);
    if disc < 0.0 {
        return None;
    }
    let t = b - disc.sqrt();
    if t >= 0.0 {
        Some(t)
    } else if b + disc.sqrt() >= 0.0 {
        Some(0.0)
    } else {
        None
    }
}

/// Nearest point of a disk (vehicle-frame centre) inside a cone about `axis`.
pub fn cone_disk_distance(axis: f64, half_angle: f64, center: Point2, radius: f64) -> Option<f64> {
    let d = center.norm();
    if d <= radius {
        return Some(0.0);
    }
    let bearing = center.y.atan2(center.x);
    if crate::geom2d::normalize_angle(bearing - axis).abs() <= half_angle {
        return Some(d - radius);
    }
    // unconstrained nearest point lies outside the cone, so the constrained
    // one lies on a boundary ray
    [axis - half_angle, axis + half_angle]
        .into_iter()
        .filter_map(|a| ray_disk(Point2::from_angle(a), center, radius))
        .min_by(f64::total_cmp)
}

/// One ring scan. Draws exactly six normal variates.
pub fn sonar_scan<R: Rng + ?Sized>(
    cfg: &SonarConfig,
    obstacles: &[Obstacle],
    t: f64,
    pose: &VehicleState,
    rng: &mut R,
) -> SonarReading {
    let noise = Normal::new(0.0, cfg.noise_sigma).expect("sigma validated");
    let to_vehicle = Transform2::rigid(pose.position(), pose.heading)
        .inverse()
        .expect("rigid transforms invert");
    let local: Vec<(Point2, f64)> = obstacles
        .iter()
        .filter(|o| o.is_active(t))
        .map(|o| (to_vehicle.apply(o.center), o.radius))
        .collect();
    let distances = std::array::from_fn(|k| {
        let jitter = noise.sample(rng);
        let echo = local
            .iter()
            .filter_map(|&(c, r)| cone_disk_distance(cfg.bearings[k], cfg.cone_half_angle, c, r))
            .filter(|&d| d <= cfg.max_range)
            .min_by(f64::total_cmp);
        match echo {
            Some(d) => (d.clamp(cfg.min_range, cfg.max_range) + jitter).clamp(cfg.min_range, cfg.max_range),
            None => cfg.max_range,
        }
    });
    SonarReading::from_distances(distances)
}
