//! Affine ground-to-image camera model, its least-squares calibration, and
//! fixed-height back-projection.
//!
//! Ground coordinates are in the vehicle-centroid frame (x forward, y left,
//! z up). The model is
//!
//! ```text
//! xpi = a11*xg + a12*yg + a13*zg + a14
//! ypi = a21*xg + a22*yg + a23*zg + a24
//! ```
//!
//! Back-projection holds `zg` at the model's fixed ground height and solves
//! the 2x2 system `Q [xg yg]^T = B` with `Q = [[a11 a12] [a21 a22]]`.

use std::f64::consts::PI;

use thiserror::Error;

use crate::geom2d::Point2;

/// Ground points closer than this are treated as coincident.
pub const MIN_POINT_SEPARATION: f64 = 1e-6;

/// Relative threshold on `|det Q|`, scaled by the square of the largest `|a_ij|` in Q.
pub const SINGULARITY_RATIO: f64 = 1e-12;

/// Relative tolerance for declaring a design-matrix column dependent.
const RANK_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CameraError {
    #[error("insufficient calibration points: need at least 4, got {found}")]
    InsufficientPoints { found: usize },
    #[error("degenerate calibration: design matrix has rank {rank} (need 4); ground points must not be coplanar")]
    DegenerateCalibration { rank: usize },
    #[error("singular view geometry: |det Q| = {det:e} is below threshold {threshold:e}")]
    SingularViewGeometry { det: f64, threshold: f64 },
    #[error("coincident points: separation {separation:e} m is below {MIN_POINT_SEPARATION:e} m")]
    CoincidentPoints { separation: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GroundPoint {
    pub xg: f64,
    pub yg: f64,
    pub zg: f64,
}

impl GroundPoint {
    pub const fn new(xg: f64, yg: f64, zg: f64) -> Self {
        GroundPoint { xg, yg, zg }
    }

    pub fn planar(&self) -> Point2 {
        Point2::new(self.xg, self.yg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ImagePoint {
    pub xpi: f64,
    pub ypi: f64,
}

impl ImagePoint {
    pub const fn new(xpi: f64, ypi: f64) -> Self {
        ImagePoint { xpi, ypi }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct CameraModel {
    pub a11: f64,
    pub a12: f64,
    pub a13: f64,
    pub a14: f64,
    pub a21: f64,
    pub a22: f64,
    pub a23: f64,
    pub a24: f64,
    #[serde(default)]
    pub zg_fixed: f64,
}

impl CameraModel {
    pub fn from_rows(row1: [f64; 4], row2: [f64; 4], zg_fixed: f64) -> Self {
        CameraModel {
            a11: row1[0],
            a12: row1[1],
            a13: row1[2],
            a14: row1[3],
            a21: row2[0],
            a22: row2[1],
            a23: row2[2],
            a24: row2[3],
            zg_fixed,
        }
    }

    pub fn row1(&self) -> [f64; 4] {
        [self.a11, self.a12, self.a13, self.a14]
    }

    pub fn row2(&self) -> [f64; 4] {
        [self.a21, self.a22, self.a23, self.a24]
    }

    pub fn coefficients(&self) -> [f64; 8] {
        let (r1, r2) = (self.row1(), self.row2());
        [r1[0], r1[1], r1[2], r1[3], r2[0], r2[1], r2[2], r2[3]]
    }

    pub fn with_ground_height(mut self, zg_fixed: f64) -> Self {
        self.zg_fixed = zg_fixed;
        self
    }

    pub fn det_q(&self) -> f64 {
        self.a11 * self.a22 - self.a12 * self.a21
    }

    /// Scale-aware singularity threshold for `|det Q|`.
    pub fn singularity_threshold(&self) -> f64 {
        let m = [self.a11, self.a12, self.a21, self.a22]
            .iter()
            .fold(0.0_f64, |acc, v| acc.max(v.abs()));
        SINGULARITY_RATIO * m * m
    }

    pub fn check_invertible(&self) -> Result<(), CameraError> {
        let det = self.det_q();
        let threshold = self.singularity_threshold();
        if det.abs() <= threshold || !det.is_finite() {
            return Err(CameraError::SingularViewGeometry { det, threshold });
        }
        Ok(())
    }

    pub fn project(&self, g: GroundPoint) -> ImagePoint {
        project(self, g)
    }

    pub fn back_project(&self, ip: ImagePoint) -> Result<GroundPoint, CameraError> {
        back_project(self, ip)
    }
}

pub fn project(model: &CameraModel, g: GroundPoint) -> ImagePoint {
    ImagePoint {
        xpi: model.a11 * g.xg + model.a12 * g.yg + model.a13 * g.zg + model.a14,
        ypi: model.a21 * g.xg + model.a22 * g.yg + model.a23 * g.zg + model.a24,
    }
}

/// Recovers the ground point at `model.zg_fixed` that images to `ip`.
pub fn back_project(model: &CameraModel, ip: ImagePoint) -> Result<GroundPoint, CameraError> {
    model.check_invertible()?;
    let z = model.zg_fixed;
    let b1 = ip.xpi - model.a14 - model.a13 * z;
    let b2 = ip.ypi - model.a24 - model.a23 * z;
    let det = model.det_q();
    let xg = (model.a22 * b1 - model.a12 * b2) / det;
    let yg = (model.a11 * b2 - model.a21 * b1) / det;
    Ok(GroundPoint { xg, yg, zg: z })
}

/// Ordered ground/image correspondences used for calibration.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CalibrationSet {
    pub points: Vec<(GroundPoint, ImagePoint)>,
}

impl CalibrationSet {
    pub fn new(points: Vec<(GroundPoint, ImagePoint)>) -> Self {
        CalibrationSet { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Rows `[xg, yg, zg, 1]`.
    pub fn design_matrix(&self) -> Vec<[f64; 4]> {
        self.points
            .iter()
            .map(|(g, _)| [g.xg, g.yg, g.zg, 1.0])
            .collect()
    }

    /// Per-point `(dx, dy)` reprojection residuals, observed minus predicted.
    pub fn residuals(&self, model: &CameraModel) -> Vec<(f64, f64)> {
        self.points
            .iter()
            .map(|(g, ip)| {
                let p = model.project(*g);
                (ip.xpi - p.xpi, ip.ypi - p.ypi)
            })
            .collect()
    }

    /// Root-mean-square of the per-point residual norms, in pixels.
    pub fn rms_residual(&self, model: &CameraModel) -> f64 {
        let r = self.residuals(model);
        if r.is_empty() {
            return 0.0;
        }
        let ss: f64 = r.iter().map(|(dx, dy)| dx * dx + dy * dy).sum();
        (ss / r.len() as f64).sqrt()
    }
}

/// Least-squares fit of both coefficient rows.
///
/// Solves the same minimiser as the normal equations `(C^T C)^-1 C^T X`, via a
/// Householder QR of the design matrix. The returned model has `zg_fixed = 0`;
/// use [`CameraModel::with_ground_height`] to set it.
pub fn calibrate(set: &CalibrationSet) -> Result<CameraModel, CameraError> {
    if set.len() < 4 {
        return Err(CameraError::InsufficientPoints { found: set.len() });
    }
    let design = set.design_matrix();
    let qr = HouseholderQr::factor(&design);
    let rank = qr.rank();
    if rank < 4 {
        return Err(CameraError::DegenerateCalibration { rank });
    }
    let xs: Vec<f64> = set.points.iter().map(|(_, ip)| ip.xpi).collect();
    let ys: Vec<f64> = set.points.iter().map(|(_, ip)| ip.ypi).collect();
    let row1 = qr.solve(&xs);
    let row2 = qr.solve(&ys);
    Ok(CameraModel::from_rows(row1, row2, 0.0))
}

/// Thin Householder QR for an `n x 4` matrix.
struct HouseholderQr {
    /// Column-major working copy; below-diagonal entries hold the reflectors.
    cols: [Vec<f64>; 4],
    /// Reflector leading coefficients.
    betas: [f64; 4],
    /// Diagonal of R.
    diag: [f64; 4],
    /// Original column norms, for the rank test.
    col_norms: [f64; 4],
}

#[allow(clippy::needless_range_loop)]
impl HouseholderQr {
    fn factor(rows: &[[f64; 4]]) -> Self {
        let n = rows.len();
        let mut cols: [Vec<f64>; 4] = std::array::from_fn(|j| rows.iter().map(|r| r[j]).collect());
        let col_norms: [f64; 4] =
            std::array::from_fn(|j| cols[j].iter().map(|v| v * v).sum::<f64>().sqrt());
        let mut betas = [0.0; 4];
        let mut diag = [0.0; 4];
        for k in 0..4 {
            let norm = cols[k][k..].iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                diag[k] = 0.0;
                betas[k] = 0.0;
                continue;
            }
            let alpha = if cols[k][k] > 0.0 { -norm } else { norm };
            // v = x - alpha e1, stored in place; beta = 2 / (v^T v)
            cols[k][k] -= alpha;
            let vtv: f64 = cols[k][k..].iter().map(|v| v * v).sum();
            let beta = if vtv == 0.0 { 0.0 } else { 2.0 / vtv };
            for j in (k + 1)..4 {
                let s: f64 = (k..n).map(|i| cols[k][i] * cols[j][i]).sum::<f64>() * beta;
                for i in k..n {
                    let vk = cols[k][i];
                    cols[j][i] -= s * vk;
                }
            }
            betas[k] = beta;
            diag[k] = alpha;
        }
        HouseholderQr {
            cols,
            betas,
            diag,
            col_norms,
        }
    }

    fn rank(&self) -> usize {
        let scale = self.col_norms.iter().fold(0.0_f64, |a, &b| a.max(b));
        (0..4)
            .filter(|&k| {
                let reference = self.col_norms[k].max(RANK_TOLERANCE * scale);
                self.diag[k].abs() > RANK_TOLERANCE * reference && reference > 0.0
            })
            .count()
    }

    fn r(&self, i: usize, j: usize) -> f64 {
        if i == j {
            self.diag[i]
        } else {
            self.cols[j][i]
        }
    }

    fn solve(&self, rhs: &[f64]) -> [f64; 4] {
        let n = rhs.len();
        let mut b = rhs.to_vec();
        for k in 0..4 {
            let beta = self.betas[k];
            if beta == 0.0 {
                continue;
            }
            let s: f64 = (k..n).map(|i| self.cols[k][i] * b[i]).sum::<f64>() * beta;
            for i in k..n {
                b[i] -= s * self.cols[k][i];
            }
        }
        let mut x = [0.0; 4];
        for i in (0..4).rev() {
            let mut acc = b[i];
            for j in (i + 1)..4 {
                acc -= self.r(i, j) * x[j];
            }
            x[i] = acc / self.r(i, i);
        }
        x
    }
}

/// Line direction and signed perpendicular offset from the vehicle centroid.
///
/// `angle` is the direction of `far - near` relative to the vehicle's +x axis,
/// in `(-pi, pi]`. `offset` is the signed distance from the origin to the
/// infinite line through both points; it is positive when the line passes to
/// the left of the origin as seen looking along `near -> far`, so a
/// forward-running line on the vehicle's +y side has positive offset.
/// Swapping the points turns the angle by pi and flips the offset sign.
pub fn line_pose_from_points(near: GroundPoint, far: GroundPoint) -> Result<(f64, f64), CameraError> {
    let a = near.planar();
    let b = far.planar();
    let d = b - a;
    let separation = d.norm();
    if separation.is_nan() || separation < MIN_POINT_SEPARATION {
        return Err(CameraError::CoincidentPoints { separation });
    }
    let mut angle = d.y.atan2(d.x);
    if angle <= -PI {
        angle = PI;
    }
    let offset = d.cross(a) / separation;
    Ok((angle, offset))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn truth() -> CameraModel {
        CameraModel::from_rows([5.0, -160.0, 10.0, 320.0], [-120.0, 4.0, -60.0, 600.0], -0.25)
    }

    /// Three heights by four planar positions.
    fn rig() -> Vec<GroundPoint> {
        let mut pts = Vec::new();
        for &z in &[-0.25, 0.0, 0.25] {
            for &(x, y) in &[(1.5, -0.8), (1.5, 0.8), (3.0, -1.2), (3.0, 1.2)] {
                pts.push(GroundPoint::new(x, y, z));
            }
        }
        pts
    }

    fn synth(model: &CameraModel, ground: &[GroundPoint]) -> CalibrationSet {
        CalibrationSet::new(ground.iter().map(|g| (*g, model.project(*g))).collect())
    }

    /// Literal normal-equation route, solved by Gauss-Jordan elimination.
    #[allow(clippy::needless_range_loop)]
    fn normal_equations(set: &CalibrationSet) -> ([f64; 4], [f64; 4]) {
        let c = set.design_matrix();
        let mut ata = [[0.0; 4]; 4];
        let mut atx = [0.0; 4];
        let mut aty = [0.0; 4];
        for (row, (_, ip)) in c.iter().zip(&set.points) {
            for i in 0..4 {
                for j in 0..4 {
                    ata[i][j] += row[i] * row[j];
                }
                atx[i] += row[i] * ip.xpi;
                aty[i] += row[i] * ip.ypi;
            }
        }
        let solve = |mut m: [[f64; 4]; 4], mut v: [f64; 4]| {
            for col in 0..4 {
                let piv = (col..4).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs())).unwrap();
                m.swap(col, piv);
                v.swap(col, piv);
                for r in 0..4 {
                    if r != col {
                        let f = m[r][col] / m[col][col];
                        for k in 0..4 {
                            m[r][k] -= f * m[col][k];
                        }
                        v[r] -= f * v[col];
                    }
                }
            }
            std::array::from_fn(|i| v[i] / m[i][i])
        };
        (solve(ata, atx), solve(ata, aty))
    }

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
    }

    #[test]
    fn project_single_term_and_constant_models() {
        let m = CameraModel::from_rows([1.0, 0.0, 0.0, 0.0], [0.0; 4], 0.0);
        assert_eq!(m.project(GroundPoint::new(5.0, 0.0, 0.0)).xpi, 5.0);
        let c = CameraModel::from_rows([0.0, 0.0, 0.0, 100.0], [0.0, 0.0, 0.0, 200.0], 0.0);
        assert_eq!(c.project(GroundPoint::new(3.0, -2.0, 9.0)), ImagePoint::new(100.0, 200.0));
    }

    #[test]
    fn project_matches_dot_product() {
        let m = truth();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let g = [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-1.0..1.0), 1.0];
            let dot = |r: [f64; 4]| r.iter().zip(g.iter()).map(|(a, b)| a * b).sum::<f64>();
            let ip = m.project(GroundPoint::new(g[0], g[1], g[2]));
            assert!((ip.xpi - dot(m.row1())).abs() < 1e-9);
            assert!((ip.ypi - dot(m.row2())).abs() < 1e-9);
        }
    }

    #[test]
    fn calibrate_recovers_noiseless_model() {
        let m = truth();
        let got = calibrate(&synth(&m, &rig())).unwrap();
        for (a, b) in got.coefficients().iter().zip(m.coefficients()) {
            assert!(rel_close(*a, b, 1e-9), "{a} vs {b}");
        }
        let set = synth(&m, &rig());
        assert!(set.rms_residual(&got) < 1e-9);
    }

    #[test]
    fn calibrate_agrees_with_normal_equations() {
        let m = truth();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let noise = Normal::new(0.0, 0.5).unwrap();
        let mut set = synth(&m, &rig());
        for (_, ip) in &mut set.points {
            ip.xpi += noise.sample(&mut rng);
            ip.ypi += noise.sample(&mut rng);
        }
        let got = calibrate(&set).unwrap();
        let (r1, r2) = normal_equations(&set);
        for i in 0..4 {
            assert!(rel_close(got.row1()[i], r1[i], 1e-8));
            assert!(rel_close(got.row2()[i], r2[i], 1e-8));
        }
    }

    #[test]
    fn calibrate_with_noise_reprojects_held_out_points() {
        let m = truth();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let sigma = 0.5;
        let noise = Normal::new(0.0, sigma).unwrap();
        let mut set = synth(&m, &rig());
        for (_, ip) in &mut set.points {
            ip.xpi += noise.sample(&mut rng);
            ip.ypi += noise.sample(&mut rng);
        }
        let got = calibrate(&set).unwrap();
        assert!(set.rms_residual(&got) <= 3.0 * sigma);
        for _ in 0..50 {
            let g = GroundPoint::new(rng.random_range(1.5..3.0), rng.random_range(-1.2..1.2), rng.random_range(-0.25..0.25));
            let (a, b) = (m.project(g), got.project(g));
            assert!((a.xpi - b.xpi).hypot(a.ypi - b.ypi) < 3.0);
        }
    }

    #[test]
    fn calibrate_rejects_coplanar_and_short_sets() {
        let flat: Vec<GroundPoint> = (0..12)
            .map(|i| GroundPoint::new(1.0 + (i % 4) as f64, (i / 4) as f64 - 1.0, 0.0))
            .collect();
        assert_eq!(
            calibrate(&synth(&truth(), &flat)),
            Err(CameraError::DegenerateCalibration { rank: 3 })
        );
        let raised: Vec<GroundPoint> = flat.iter().map(|g| GroundPoint::new(g.xg, g.yg, 0.4)).collect();
        assert!(matches!(
            calibrate(&synth(&truth(), &raised)),
            Err(CameraError::DegenerateCalibration { .. })
        ));
        let three = synth(&truth(), &rig()[..3]);
        assert_eq!(calibrate(&three), Err(CameraError::InsufficientPoints { found: 3 }));
    }

    #[test]
    fn calibration_is_order_invariant_and_offset_linear() {
        let m = truth();
        let set = synth(&m, &rig());
        let mut rev = set.clone();
        rev.points.reverse();
        let a = calibrate(&set).unwrap();
        let b = calibrate(&rev).unwrap();
        for (x, y) in a.coefficients().iter().zip(b.coefficients()) {
            assert!(rel_close(*x, y, 1e-9));
        }
        let mut shifted = set.clone();
        for (_, ip) in &mut shifted.points {
            ip.xpi += 17.0;
            ip.ypi -= 3.0;
        }
        let s = calibrate(&shifted).unwrap();
        assert!(rel_close(s.a14, a.a14 + 17.0, 1e-9));
        assert!(rel_close(s.a24, a.a24 - 3.0, 1e-9));
        for (x, y) in [(s.a11, a.a11), (s.a12, a.a12), (s.a13, a.a13), (s.a21, a.a21), (s.a22, a.a22), (s.a23, a.a23)] {
            assert!(rel_close(x, y, 1e-9));
        }
    }

    #[test]
    fn back_project_round_trip() {
        let m = truth();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let g = GroundPoint::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), m.zg_fixed);
            let back = m.back_project(m.project(g)).unwrap();
            assert!((back.xg - g.xg).abs() < 1e-9 && (back.yg - g.yg).abs() < 1e-9);
            assert_eq!(back.zg, m.zg_fixed);
        }
    }

    #[test]
    fn back_project_identity_and_singular() {
        let id = CameraModel::from_rows([1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], 0.0);
        assert_eq!(id.back_project(ImagePoint::new(3.0, 4.0)).unwrap(), GroundPoint::new(3.0, 4.0, 0.0));
        let rank1 = CameraModel::from_rows([2.0, 2.0, 1.0, 5.0], [2.0, 2.0, 0.0, 1.0], 0.0);
        assert!(matches!(
            rank1.back_project(ImagePoint::new(1.0, 1.0)),
            Err(CameraError::SingularViewGeometry { .. })
        ));
    }

    #[test]
    fn line_pose_examples() {
        let (a, o) = line_pose_from_points(GroundPoint::new(1.0, 0.0, 0.0), GroundPoint::new(2.0, 0.0, 0.0)).unwrap();
        assert_eq!((a, o), (0.0, 0.0));
        let (a, o) = line_pose_from_points(GroundPoint::new(1.0, 1.0, 0.0), GroundPoint::new(2.0, 1.0, 0.0)).unwrap();
        assert_eq!(a, 0.0);
        assert!((o - 1.0).abs() < 1e-12);
        assert!(matches!(
            line_pose_from_points(GroundPoint::new(1.0, 1.0, 0.0), GroundPoint::new(1.0, 1.0 + 1e-9, 0.0)),
            Err(CameraError::CoincidentPoints { .. })
        ));
    }

    /// Dense sampling along the line; sign from which side of the directed line the origin falls.
    fn brute_force_offset(near: Point2, far: Point2) -> f64 {
        let d = far - near;
        let mut best = f64::INFINITY;
        let mut best_pt = near;
        for i in -200_000..=200_000 {
            let p = near + d * (i as f64 * 1e-4);
            let dist = p.norm();
            if dist < best {
                best = dist;
                best_pt = p;
            }
        }
        // origin on the right of near->far  <=>  line on the left
        let to_origin = Point2::ORIGIN - best_pt;
        let side = d.x * to_origin.y - d.y * to_origin.x;
        if side < 0.0 {
            best
        } else {
            -best
        }
    }

    #[test]
    fn line_pose_matches_point_to_line_oracle() {
        let near = Point2::new(1.0, 0.0);
        let far = Point2::new(1.0, 1.0);
        let (a, o) = line_pose_from_points(GroundPoint::new(1.0, 0.0, 0.0), GroundPoint::new(1.0, 1.0, 0.0)).unwrap();
        assert!((a - PI / 2.0).abs() < 1e-12);
        let oracle = brute_force_offset(near, far);
        assert!((oracle + 1.0).abs() < 1e-3);
        assert!((o - oracle).abs() < 1e-3);

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let n = Point2::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            let f = Point2::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            if n.distance(f) < 0.5 {
                continue;
            }
            let (_, o) = line_pose_from_points(GroundPoint::new(n.x, n.y, 0.0), GroundPoint::new(f.x, f.y, 0.0)).unwrap();
            assert!((o - brute_force_offset(n, f)).abs() < 1e-3);
        }
    }

    #[test]
    fn line_pose_swap_and_origin_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let n = GroundPoint::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), 0.0);
            let f = GroundPoint::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), 0.0);
            let (a1, o1) = line_pose_from_points(n, f).unwrap();
            let (a2, o2) = line_pose_from_points(f, n).unwrap();
            let turn = crate::geom2d::normalize_angle(a2 - a1 - PI);
            assert!(turn.abs() < 1e-12);
            assert!((o1 + o2).abs() < 1e-12);
            // line through origin
            let k: f64 = rng.random_range(0.5..2.0);
            let (_, o) = line_pose_from_points(n, GroundPoint::new(n.xg * k, n.yg * k, 0.0)).unwrap_or((0.0, 0.0));
            assert!(o.abs() < 1e-9);
        }
    }
}
