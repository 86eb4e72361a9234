//! Lifting 2D visual traces to 3D: depth lookup, naive back-projection,
//! fixed-endpoint path-length minimization over depths, and SE(3) waypoints.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::{backproject, CameraError, CameraModel, DepthMap, Point3D};
use crate::coordsys::{from_norm, ImageShape, NormPoint};
use crate::scenegraph::median_sorted;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LiftError {
    #[error("no valid depth near trace point {index}")]
    MissingDepth { index: usize },
    #[error("trace has {points} points but {depths} depths")]
    LengthMismatch { points: usize, depths: usize },
    #[error("trace needs at least two points")]
    TooShort,
    #[error("orientation is not a unit quaternion")]
    NonUnitQuaternion,
    #[error("invalid lift configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("point {index}: {source}")]
    Camera { index: usize, source: CameraError },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LiftConfig {
    /// Initial step of each descent iteration, in meters per unit gradient.
    pub step_size: f64,
    pub max_iters: usize,
    /// Relative objective change below which descent stops.
    pub tol: f64,
    /// Half-width in pixels of the window searched when a depth sample is invalid.
    pub neighborhood: u32,
}

impl Default for LiftConfig {
    fn default() -> Self {
        Self { step_size: 1e-2, max_iters: 2000, tol: 1e-8, neighborhood: 5 }
    }
}

impl LiftConfig {
    pub fn validate(&self) -> Result<(), LiftError> {
        if !(self.step_size.is_finite() && self.step_size > 0.0) {
            return Err(LiftError::InvalidConfig("step_size must be positive"));
        }
        if self.max_iters == 0 {
            return Err(LiftError::InvalidConfig("max_iters must be positive"));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(LiftError::InvalidConfig("tol must be positive"));
        }
        if self.neighborhood == 0 {
            return Err(LiftError::InvalidConfig("neighborhood must be positive"));
        }
        Ok(())
    }
}

/// Pixel that a normalized trace point falls in.
fn pixel_of(p: NormPoint, depth: &DepthMap) -> (u32, u32) {
    let px = from_norm(p, depth.shape());
    let x = (px.u.floor().max(0.0) as u32).min(depth.width() - 1);
    let y = (px.v.floor().max(0.0) as u32).min(depth.height() - 1);
    (x, y)
}

/// Raw depth under each trace point; an invalid sample is replaced by the
/// median of valid samples in the surrounding window.
pub fn lookup_depths(trace: &[NormPoint], depth: &DepthMap, neighborhood: u32) -> Result<Vec<f64>, LiftError> {
    trace
        .iter()
        .enumerate()
        .map(|(index, &p)| {
            let (x, y) = pixel_of(p, depth);
            let d = depth.get(x, y);
            if d > 0 {
                return Ok(f64::from(d));
            }
            let mut window = Vec::new();
            for wy in y.saturating_sub(neighborhood)..=(y + neighborhood).min(depth.height() - 1) {
                for wx in x.saturating_sub(neighborhood)..=(x + neighborhood).min(depth.width() - 1) {
                    let v = depth.get(wx, wy);
                    if v > 0 {
                        window.push(v);
                    }
                }
            }
            if window.is_empty() {
                return Err(LiftError::MissingDepth { index });
            }
            window.sort_unstable();
            Ok(median_sorted(&window))
        })
        .collect()
}

/// Viewing rays (z = 1) through the pixel centers of the trace points.
pub fn trace_rays(trace: &[NormPoint], shape: ImageShape, cam: &CameraModel) -> Vec<Point3D> {
    trace.iter().map(|&p| cam.ray(from_norm(p, shape))).collect()
}

/// Back-projects every trace point at its raw depth.
pub fn lift_naive(
    trace: &[NormPoint],
    shape: ImageShape,
    depths: &[f64],
    cam: &CameraModel,
) -> Result<Vec<Point3D>, LiftError> {
    if trace.len() != depths.len() {
        return Err(LiftError::LengthMismatch { points: trace.len(), depths: depths.len() });
    }
    trace
        .iter()
        .zip(depths)
        .enumerate()
        .map(|(index, (&p, &d))| {
            backproject(from_norm(p, shape), d, cam).map_err(|source| LiftError::Camera { index, source })
        })
        .collect()
}

/// Total path length `Σ ‖z_i r_i − z_{i+1} r_{i+1}‖` with `z = d / depth_scale`.
pub fn path_objective(rays: &[Point3D], depths: &[f64], depth_scale: f64) -> f64 {
    let pts: Vec<Point3D> = rays.iter().zip(depths).map(|(r, d)| r.scale(d / depth_scale)).collect();
    polyline_length(&pts)
}

pub fn polyline_length(points: &[Point3D]) -> f64 {
    points.windows(2).map(|w| w[0].distance(&w[1])).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeResult {
    pub depths: Vec<f64>,
    /// Objective before the first iteration and after each accepted step.
    pub history: Vec<f64>,
    pub iterations: usize,
    /// True when there were no free depths (T ≤ 2).
    pub skipped: bool,
}

impl OptimizeResult {
    pub fn initial_objective(&self) -> f64 {
        self.history[0]
    }

    pub fn final_objective(&self) -> f64 {
        *self.history.last().unwrap()
    }
}

const MAX_HALVINGS: u32 = 60;

/// Gradient descent on the interior depths with the endpoints held fixed.
/// Each iteration starts from the larger of `step_size` and twice the last
/// accepted step, then halves until the objective decreases; depths are
/// clamped at one raw unit.
pub fn optimize_depths(
    rays: &[Point3D],
    depths: &[f64],
    cam: &CameraModel,
    config: &LiftConfig,
) -> Result<OptimizeResult, LiftError> {
    config.validate()?;
    if rays.len() != depths.len() {
        return Err(LiftError::LengthMismatch { points: rays.len(), depths: depths.len() });
    }
    if let Some(index) = depths.iter().position(|d| !(d.is_finite() && *d > 0.0)) {
        return Err(LiftError::MissingDepth { index });
    }
    let scale = cam.depth_scale;
    let f0 = path_objective(rays, depths, scale);
    let t = depths.len();
    if t <= 2 {
        return Ok(OptimizeResult { depths: depths.to_vec(), history: vec![f0], iterations: 0, skipped: true });
    }

    let min_z = 1.0 / scale;
    let mut z: Vec<f64> = depths.iter().map(|d| d / scale).collect();
    let objective = |z: &[f64]| -> f64 {
        rays.windows(2).zip(z.windows(2)).map(|(r, z)| r[0].scale(z[0]).distance(&r[1].scale(z[1]))).sum()
    };
    let mut f = objective(&z);
    let mut history = vec![f0];
    let mut iterations = 0;
    let mut grad = vec![0.0; t];
    let mut trial = z.clone();
    let mut start_step = config.step_size;
    while iterations < config.max_iters {
        iterations += 1;
        grad.iter_mut().for_each(|g| *g = 0.0);
        for i in 0..t - 1 {
            let diff = rays[i].scale(z[i]).sub(&rays[i + 1].scale(z[i + 1]));
            let n = diff.norm();
            if n > 0.0 {
                grad[i] += rays[i].dot(&diff) / n;
                grad[i + 1] -= rays[i + 1].dot(&diff) / n;
            }
        }
        if grad[1..t - 1].iter().all(|g| *g == 0.0) {
            break;
        }
        let mut step = start_step;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            for i in 1..t - 1 {
                trial[i] = (z[i] - step * grad[i]).max(min_z);
            }
            let ft = objective(&trial);
            if ft < f {
                accepted = Some(ft);
                break;
            }
            step *= 0.5;
        }
        let Some(f_new) = accepted else { break };
        start_step = (2.0 * step).max(config.step_size);
        z[1..t - 1].copy_from_slice(&trial[1..t - 1]);
        let rel = (f - f_new) / f.max(f64::MIN_POSITIVE);
        f = f_new;
        history.push(f);
        if rel < config.tol {
            break;
        }
    }
    let mut out = depths.to_vec();
    for i in 1..t - 1 {
        out[i] = z[i] * scale;
    }
    Ok(OptimizeResult { depths: out, history, iterations, skipped: false })
}

/// Unit quaternion `w + xi + yj + zk`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct Quaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl From<[f64; 4]> for Quaternion {
    fn from([w, x, y, z]: [f64; 4]) -> Self {
        Self { w, x, y, z }
    }
}

impl From<Quaternion> for [f64; 4] {
    fn from(q: Quaternion) -> Self {
        [q.w, q.x, q.y, q.z]
    }
}

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self { w, x, y, z }
    }

    /// Rotation by `angle` radians about a unit `axis`.
    pub fn from_axis_angle(axis: [f64; 3], angle: f64) -> Self {
        let (s, c) = (angle / 2.0).sin_cos();
        Self { w: c, x: axis[0] * s, y: axis[1] * s, z: axis[2] * s }
    }

    pub fn dot(&self, o: &Quaternion) -> f64 {
        self.w * o.w + self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn normalized(&self) -> Quaternion {
        let n = self.norm();
        Quaternion { w: self.w / n, x: self.x / n, y: self.y / n, z: self.z / n }
    }

    fn neg(&self) -> Quaternion {
        Quaternion { w: -self.w, x: -self.x, y: -self.y, z: -self.z }
    }

    /// Rotation angle from `self` to `o`, in [0, π].
    pub fn angle_to(&self, o: &Quaternion) -> f64 {
        2.0 * self.dot(o).abs().min(1.0).acos()
    }

    /// Spherical interpolation along the shorter arc.
    pub fn slerp(&self, o: &Quaternion, t: f64) -> Quaternion {
        let mut end = *o;
        let mut cos = self.dot(o);
        if cos < 0.0 {
            end = end.neg();
            cos = -cos;
        }
        let (a, b) = if cos > 1.0 - 1e-12 {
            (1.0 - t, t)
        } else {
            let theta = cos.min(1.0).acos();
            let s = theta.sin();
            (((1.0 - t) * theta).sin() / s, (t * theta).sin() / s)
        };
        Quaternion {
            w: a * self.w + b * end.w,
            x: a * self.x + b * end.x,
            y: a * self.y + b * end.y,
            z: a * self.z + b * end.z,
        }
        .normalized()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub position: Point3D,
    pub orientation: Quaternion,
}

/// Cumulative arc-length fractions, 0 at the first point and 1 at the last.
/// A zero-length path spreads fractions evenly by index.
pub fn arc_fractions(points: &[Point3D]) -> Vec<f64> {
    let mut cum = vec![0.0];
    for w in points.windows(2) {
        cum.push(cum.last().unwrap() + w[0].distance(&w[1]));
    }
    let total = *cum.last().unwrap();
    let n = points.len();
    if total > 0.0 {
        cum.iter().map(|c| c / total).collect()
    } else if n == 1 {
        vec![0.0]
    } else {
        (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
    }
}

/// Positions from the trace with orientations slerped by arc-length fraction.
pub fn se3_waypoints(points: &[Point3D], start: Quaternion, end: Quaternion) -> Result<Vec<Waypoint>, LiftError> {
    if points.len() < 2 {
        return Err(LiftError::TooShort);
    }
    for q in [start, end] {
        if (q.norm() - 1.0).abs().is_nan() || (q.norm() - 1.0).abs() > 1e-6 {
            return Err(LiftError::NonUnitQuaternion);
        }
    }
    let (start, end) = (start.normalized(), end.normalized());
    let fr = arc_fractions(points);
    Ok(points.iter().zip(fr).map(|(&position, s)| Waypoint { position, orientation: start.slerp(&end, s) }).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LiftOutput {
    pub raw_depths: Vec<f64>,
    pub depths: Vec<f64>,
    pub points: Vec<Point3D>,
    pub optimization: Option<OptimizeResult>,
}

/// Lookup, optional optimization, then back-projection.
pub fn lift_trace(
    trace: &[NormPoint],
    depth: &DepthMap,
    cam: &CameraModel,
    config: &LiftConfig,
    optimize: bool,
) -> Result<LiftOutput, LiftError> {
    if trace.len() < 2 {
        return Err(LiftError::TooShort);
    }
    config.validate()?;
    let raw_depths = lookup_depths(trace, depth, config.neighborhood)?;
    lift_with_depths(trace, depth.shape(), &raw_depths, cam, config, optimize)
}

/// Optional optimization and back-projection from per-point raw depths.
pub fn lift_with_depths(
    trace: &[NormPoint],
    shape: ImageShape,
    raw_depths: &[f64],
    cam: &CameraModel,
    config: &LiftConfig,
    optimize: bool,
) -> Result<LiftOutput, LiftError> {
    if trace.len() < 2 {
        return Err(LiftError::TooShort);
    }
    if trace.len() != raw_depths.len() {
        return Err(LiftError::LengthMismatch { points: trace.len(), depths: raw_depths.len() });
    }
    if let Some(index) = raw_depths.iter().position(|d| !(d.is_finite() && *d > 0.0)) {
        return Err(LiftError::MissingDepth { index });
    }
    let (depths, optimization) = if optimize {
        let r = optimize_depths(&trace_rays(trace, shape, cam), raw_depths, cam, config)?;
        (r.depths.clone(), Some(r))
    } else {
        (raw_depths.to_vec(), None)
    };
    let points = lift_naive(trace, shape, &depths, cam)?;
    Ok(LiftOutput { raw_depths: raw_depths.to_vec(), depths, points, optimization })
}
