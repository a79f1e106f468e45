//! Camera models, projection, undistortion, and two-ray midpoint triangulation.
//!
//! World units are meters and image units are pixels. Rotations map world
//! coordinates into the camera frame: `p_cam = R * p_world + t`.

use nalgebra::{Matrix3, Vector2, Vector3};
use thiserror::Error;

pub type Vec2 = Vector2<f64>;
pub type Vec3 = Vector3<f64>;

/// Minimum camera-frame depth for a point to be projectable.
pub const MIN_DEPTH: f64 = 1e-6;
/// Iteration cap for distortion inversion.
pub const UNDISTORT_MAX_ITERS: usize = 10;
/// Early-exit step size for distortion inversion, in normalized units.
pub const UNDISTORT_TOL: f64 = 1e-6;
/// Residual above which an undistorted point is rejected, in normalized units.
pub const UNDISTORT_MAX_RESIDUAL: f64 = 1e-3;
/// Rays whose directions satisfy `|1 - |a.b|| <= PARALLEL_EPS` are rejected.
pub const PARALLEL_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("point has non-positive depth {0} in camera frame")]
    NonPositiveDepth(f64),
    #[error("undistortion did not converge (residual {0:e})")]
    NonConvergence(f64),
    #[error("rays are parallel")]
    ParallelRays,
    #[error("invalid calibration for camera '{camera}': {reason}")]
    InvalidCalibration { camera: String, reason: String },
}

/// Lens distortion applied to normalized image coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Distortion {
    #[default]
    None,
    /// Brown-Conrady model with coefficients `k1, k2, p1, p2, k3`.
    RadialTangential {
        k1: f64,
        k2: f64,
        p1: f64,
        p2: f64,
        k3: f64,
    },
    /// Equidistant fisheye model with coefficients `k1..k4` on the incidence angle.
    FisheyeEquidistant { k1: f64, k2: f64, k3: f64, k4: f64 },
}

impl Distortion {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Distortion::None => "none",
            Distortion::RadialTangential { .. } => "radial_tangential",
            Distortion::FisheyeEquidistant { .. } => "fisheye_equidistant",
        }
    }

    pub fn coefficients(&self) -> Vec<f64> {
        match *self {
            Distortion::None => Vec::new(),
            Distortion::RadialTangential { k1, k2, p1, p2, k3 } => vec![k1, k2, p1, p2, k3],
            Distortion::FisheyeEquidistant { k1, k2, k3, k4 } => vec![k1, k2, k3, k4],
        }
    }

    /// Builds a model from its kind name and coefficient list.
    pub fn from_parts(kind: &str, coefficients: &[f64]) -> Result<Self, String> {
        let expect = |n: usize| {
            if coefficients.len() == n {
                Ok(())
            } else {
                Err(format!(
                    "distortion kind '{kind}' takes {n} coefficients, got {}",
                    coefficients.len()
                ))
            }
        };
        match kind {
            "none" => {
                if coefficients.iter().any(|c| *c != 0.0) {
                    return Err("distortion kind 'none' must have no non-zero coefficients".into());
                }
                Ok(Distortion::None)
            }
            "radial_tangential" => {
                expect(5)?;
                let c = coefficients;
                Ok(Distortion::RadialTangential {
                    k1: c[0],
                    k2: c[1],
                    p1: c[2],
                    p2: c[3],
                    k3: c[4],
                })
            }
            "fisheye_equidistant" => {
                expect(4)?;
                let c = coefficients;
                Ok(Distortion::FisheyeEquidistant {
                    k1: c[0],
                    k2: c[1],
                    k3: c[2],
                    k4: c[3],
                })
            }
            other => Err(format!("unsupported distortion kind '{other}'")),
        }
    }

    /// Maps an undistorted normalized point to its distorted location.
    pub fn distort(&self, p: Vec2) -> Vec2 {
        match *self {
            Distortion::None => p,
            Distortion::RadialTangential { k1, k2, p1, p2, k3 } => {
                let (x, y) = (p.x, p.y);
                let r2 = x * x + y * y;
                let radial = 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3));
                let dx = 2.0 * p1 * x * y + p2 * (r2 + 2.0 * x * x);
                let dy = p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * x * y;
                Vec2::new(x * radial + dx, y * radial + dy)
            }
            Distortion::FisheyeEquidistant { k1, k2, k3, k4 } => {
                let r = p.norm();
                if r < 1e-12 {
                    return p;
                }
                let theta = r.atan();
                let t2 = theta * theta;
                let theta_d = theta * (1.0 + t2 * (k1 + t2 * (k2 + t2 * (k3 + t2 * k4))));
                p * (theta_d / r)
            }
        }
    }

    /// Inverts [`Distortion::distort`] by fixed-point iteration.
    pub fn undistort(&self, d: Vec2) -> Result<Vec2, GeometryError> {
        let p = match *self {
            Distortion::None => return Ok(d),
            Distortion::RadialTangential { k1, k2, p1, p2, k3 } => {
                let mut p = d;
                for _ in 0..UNDISTORT_MAX_ITERS {
                    let (x, y) = (p.x, p.y);
                    let r2 = x * x + y * y;
                    let radial = 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3));
                    let dx = 2.0 * p1 * x * y + p2 * (r2 + 2.0 * x * x);
                    let dy = p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * x * y;
                    let next = Vec2::new((d.x - dx) / radial, (d.y - dy) / radial);
                    let step = (next - p).norm();
                    p = next;
                    if step < UNDISTORT_TOL {
                        break;
                    }
                }
                p
            }
            Distortion::FisheyeEquidistant { k1, k2, k3, k4 } => {
                let theta_d = d.norm();
                if theta_d < 1e-12 {
                    return Ok(d);
                }
                let mut theta = theta_d;
                for _ in 0..UNDISTORT_MAX_ITERS {
                    let t2 = theta * theta;
                    let next = theta_d / (1.0 + t2 * (k1 + t2 * (k2 + t2 * (k3 + t2 * k4))));
                    let step = (next - theta).abs();
                    theta = next;
                    if step < UNDISTORT_TOL {
                        break;
                    }
                }
                if !(0.0..std::f64::consts::FRAC_PI_2).contains(&theta) {
                    return Err(GeometryError::NonConvergence(f64::INFINITY));
                }
                d * (theta.tan() / theta_d)
            }
        };
        let residual = (self.distort(p) - d).norm();
        if residual.is_finite() && residual <= UNDISTORT_MAX_RESIDUAL {
            Ok(p)
        } else {
            Err(GeometryError::NonConvergence(residual))
        }
    }
}

/// A calibrated pinhole camera with optional lens distortion.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraCalib {
    pub id: String,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// World-to-camera rotation.
    pub rotation: Matrix3<f64>,
    /// World-to-camera translation, meters.
    pub translation: Vec3,
    pub distortion: Distortion,
    pub image_width: u32,
    pub image_height: u32,
}

impl CameraCalib {
    /// Checks the orthonormality, focal length, and image size invariants.
    pub fn validate(&self) -> Result<(), GeometryError> {
        let fail = |reason: String| GeometryError::InvalidCalibration {
            camera: self.id.clone(),
            reason,
        };
        let finite = [self.fx, self.fy, self.cx, self.cy]
            .iter()
            .chain(self.rotation.iter())
            .chain(self.translation.iter())
            .chain(self.distortion.coefficients().iter())
            .all(|v| v.is_finite());
        if !finite {
            return Err(fail("non-finite parameter".into()));
        }
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(fail(format!(
                "focal lengths must be positive (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        if self.image_width == 0 || self.image_height == 0 {
            return Err(fail("image size must be positive".into()));
        }
        let ortho = self.rotation.transpose() * self.rotation - Matrix3::identity();
        let worst = ortho.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if worst >= 1e-9 {
            return Err(fail(format!("rotation is not orthonormal (|R^T R - I| = {worst:e})")));
        }
        let det = self.rotation.determinant();
        if (det - 1.0).abs() > 1e-9 {
            return Err(fail(format!("rotation determinant is {det}, expected +1")));
        }
        Ok(())
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vec3 {
        -(self.rotation.transpose() * self.translation)
    }

    pub fn to_camera(&self, point: &Vec3) -> Vec3 {
        self.rotation * point + self.translation
    }

    /// Converts a normalized camera-plane point to pixels (with distortion).
    pub fn normalized_to_pixel(&self, n: Vec2) -> Vec2 {
        let d = self.distortion.distort(n);
        Vec2::new(self.fx * d.x + self.cx, self.fy * d.y + self.cy)
    }

    /// Rigidly moves the camera: a world point `p` becomes `rot * p + shift`.
    pub fn transformed(&self, rot: &Matrix3<f64>, shift: &Vec3) -> CameraCalib {
        let rotation = self.rotation * rot.transpose();
        let translation = self.translation - rotation * shift;
        CameraCalib {
            rotation,
            translation,
            ..self.clone()
        }
    }

    /// Builds a camera at `eye` looking at `target` with world `up` pointing to image-up.
    pub fn look_at(
        id: impl Into<String>,
        eye: Vec3,
        target: Vec3,
        up: Vec3,
        intrinsics: (f64, f64, f64, f64),
        image_size: (u32, u32),
    ) -> CameraCalib {
        let z = (target - eye).normalize();
        let x = z.cross(&up).normalize();
        let y = z.cross(&x);
        let rotation = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
        let translation = -(rotation * eye);
        let (fx, fy, cx, cy) = intrinsics;
        CameraCalib {
            id: id.into(),
            fx,
            fy,
            cx,
            cy,
            rotation,
            translation,
            distortion: Distortion::None,
            image_width: image_size.0,
            image_height: image_size.1,
        }
    }

    pub fn contains_pixel(&self, px: &Vec2) -> bool {
        px.x >= 0.0
            && px.y >= 0.0
            && px.x <= self.image_width as f64
            && px.y <= self.image_height as f64
    }
}

/// A half-line in world space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray3 {
    pub origin: Vec3,
    /// Unit length.
    pub direction: Vec3,
}

impl Ray3 {
    /// Normalizes `direction`.
    pub fn new(origin: Vec3, direction: Vec3) -> Self {
        Ray3 {
            origin,
            direction: direction.normalize(),
        }
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }
}

/// Projects a world point to pixel coordinates.
pub fn project(point: &Vec3, cam: &CameraCalib) -> Result<Vec2, GeometryError> {
    let pc = cam.to_camera(point);
    if !(pc.z > MIN_DEPTH) {
        return Err(GeometryError::NonPositiveDepth(pc.z));
    }
    Ok(cam.normalized_to_pixel(Vec2::new(pc.x / pc.z, pc.y / pc.z)))
}

/// Converts a pixel to undistorted normalized image coordinates.
pub fn undistort_point(pixel: &Vec2, cam: &CameraCalib) -> Result<Vec2, GeometryError> {
    let d = Vec2::new((pixel.x - cam.cx) / cam.fx, (pixel.y - cam.cy) / cam.fy);
    cam.distortion.undistort(d)
}

/// Undistorts every point; failures are reported per point.
pub fn undistort_points(
    points: &[Vec2],
    cam: &CameraCalib,
) -> Vec<Result<Vec2, GeometryError>> {
    points.iter().map(|p| undistort_point(p, cam)).collect()
}

/// World-frame unit direction through an undistorted normalized point.
pub fn normalized_to_direction(n: &Vec2, cam: &CameraCalib) -> Vec3 {
    (cam.rotation.transpose() * Vec3::new(n.x, n.y, 1.0)).normalize()
}

/// Back-projects a pixel into a world ray starting at the camera center.
pub fn pixel_to_ray(pixel: &Vec2, cam: &CameraCalib) -> Result<Ray3, GeometryError> {
    let n = undistort_point(pixel, cam)?;
    Ok(Ray3 {
        origin: cam.center(),
        direction: normalized_to_direction(&n, cam),
    })
}

/// Midpoint of the shortest segment between two forward half-lines, and that segment's length.
///
/// The result does not depend on argument order.
pub fn midpoint_triangulate(a: &Ray3, b: &Ray3) -> Result<(Vec3, f64), GeometryError> {
    midpoint_between(&a.origin, &a.direction, &b.origin, &b.direction)
}

#[inline]
pub(crate) fn midpoint_between(
    oa: &Vec3,
    da: &Vec3,
    ob: &Vec3,
    db: &Vec3,
) -> Result<(Vec3, f64), GeometryError> {
    let b = da.dot(db);
    if (1.0 - b.abs()).abs() <= PARALLEL_EPS {
        return Err(GeometryError::ParallelRays);
    }
    let aa = da.dot(da);
    let cc = db.dot(db);
    let w0 = oa - ob;
    let d = da.dot(&w0);
    let e = db.dot(&w0);
    let denom = aa * cc - b * b;
    let s = (b * e - cc * d) / denom;
    let t = (aa * e - b * d) / denom;

    let (s, t) = if s >= 0.0 && t >= 0.0 {
        (s, t)
    } else {
        // Minimum lies on a boundary of the quadrant; take the better edge.
        let cand_a = (0.0, (e / cc).max(0.0));
        let cand_b = ((-d / aa).max(0.0), 0.0);
        let dist = |(s, t): (f64, f64)| (oa + da * s - ob - db * t).norm_squared();
        let (qa, qb) = (dist(cand_a), dist(cand_b));
        if qa < qb {
            cand_a
        } else if qb < qa {
            cand_b
        } else {
            let mid = |(s, t): (f64, f64)| ((oa + da * s) + (ob + db * t)) * 0.5;
            let (ma, mb) = (mid(cand_a), mid(cand_b));
            if (ma.x, ma.y, ma.z) <= (mb.x, mb.y, mb.z) {
                cand_a
            } else {
                cand_b
            }
        }
    };
    let pa = oa + da * s;
    let pb = ob + db * t;
    Ok(((pa + pb) * 0.5, (pa - pb).norm()))
}
