//! Pinhole camera geometry in the camera frame (no distortion, no extrinsics).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coordsys::{ImageShape, PixelPoint};
use crate::mask::BinaryMask;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CameraError {
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(&'static str),
    #[error("invalid raw depth {0}")]
    InvalidDepth(f64),
    #[error("point with z = {0} is not in front of the camera")]
    BehindCamera(f64),
    #[error("depth map is {got_w}x{got_h}, expected {want_w}x{want_h}")]
    ShapeMismatch { want_w: u32, want_h: u32, got_w: u32, got_h: u32 },
    #[error("depth grid has {got} samples, expected {expected}")]
    SampleCount { expected: usize, got: usize },
}

/// Intrinsics plus the raw-depth scale (raw units per meter).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCamera")]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub depth_scale: f64,
}

#[derive(Deserialize)]
struct RawCamera {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    depth_scale: f64,
}

impl TryFrom<RawCamera> for CameraModel {
    type Error = CameraError;
    fn try_from(r: RawCamera) -> Result<Self, Self::Error> {
        CameraModel::new(r.fx, r.fy, r.cx, r.cy, r.depth_scale)
    }
}

impl CameraModel {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, depth_scale: f64) -> Result<Self, CameraError> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(fx) || !positive(fy) {
            return Err(CameraError::InvalidIntrinsics("focal lengths must be positive"));
        }
        if !positive(depth_scale) {
            return Err(CameraError::InvalidIntrinsics("depth_scale must be positive"));
        }
        if !cx.is_finite() || !cy.is_finite() {
            return Err(CameraError::InvalidIntrinsics("principal point must be finite"));
        }
        Ok(Self { fx, fy, cx, cy, depth_scale })
    }

    /// Direction of the pixel's viewing ray, scaled so that z = 1.
    pub fn ray(&self, p: PixelPoint) -> Point3D {
        Point3D { x: (p.u - self.cx) / self.fx, y: (p.v - self.cy) / self.fy, z: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point3D {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3D {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn scale(&self, s: f64) -> Point3D {
        Point3D { x: self.x * s, y: self.y * s, z: self.z * s }
    }

    pub fn sub(&self, o: &Point3D) -> Point3D {
        Point3D { x: self.x - o.x, y: self.y - o.y, z: self.z - o.z }
    }

    pub fn dot(&self, o: &Point3D) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn distance(&self, o: &Point3D) -> f64 {
        self.sub(o).norm()
    }

    pub fn to_array(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

/// Raw depth grid, row-major; 0 marks an invalid sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DepthMap {
    shape: ImageShape,
    samples: Vec<u32>,
}

impl DepthMap {
    pub fn new(shape: ImageShape, samples: Vec<u32>) -> Result<Self, CameraError> {
        let expected = shape.pixel_count() as usize;
        if samples.len() != expected {
            return Err(CameraError::SampleCount { expected, got: samples.len() });
        }
        Ok(Self { shape, samples })
    }

    pub fn constant(shape: ImageShape, value: u32) -> Self {
        Self { shape, samples: vec![value; shape.pixel_count() as usize] }
    }

    pub fn shape(&self) -> ImageShape {
        self.shape
    }

    pub fn width(&self) -> u32 {
        self.shape.width
    }

    pub fn height(&self) -> u32 {
        self.shape.height
    }

    pub fn get(&self, x: u32, y: u32) -> u32 {
        self.samples[y as usize * self.shape.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, value: u32) {
        let i = y as usize * self.shape.width as usize + x as usize;
        self.samples[i] = value;
    }

    pub fn samples(&self) -> &[u32] {
        &self.samples
    }

    pub fn valid_count(&self) -> usize {
        self.samples.iter().filter(|&&d| d > 0).count()
    }

    pub fn ensure_shape(&self, shape: ImageShape) -> Result<(), CameraError> {
        if self.shape != shape {
            return Err(CameraError::ShapeMismatch {
                want_w: shape.width,
                want_h: shape.height,
                got_w: self.shape.width,
                got_h: self.shape.height,
            });
        }
        Ok(())
    }
}

/// Back-projects a pixel with raw depth `d` into the camera frame.
pub fn backproject(p: PixelPoint, d: f64, cam: &CameraModel) -> Result<Point3D, CameraError> {
    if !(d.is_finite() && d > 0.0) {
        return Err(CameraError::InvalidDepth(d));
    }
    let s = d / cam.depth_scale;
    Ok(Point3D { x: s * (p.u - cam.cx) / cam.fx, y: s * (p.v - cam.cy) / cam.fy, z: s })
}

/// Projects a camera-frame point to a pixel and its raw depth.
pub fn project(p: Point3D, cam: &CameraModel) -> Result<(PixelPoint, f64), CameraError> {
    if !(p.z.is_finite() && p.z > 0.0) {
        return Err(CameraError::BehindCamera(p.z));
    }
    let px = PixelPoint { u: cam.fx * p.x / p.z + cam.cx, v: cam.fy * p.y / p.z + cam.cy };
    Ok((px, p.z * cam.depth_scale))
}

/// Back-projects every valid pixel (optionally restricted to `mask`) in
/// row-major order. Pixel `(col, row)` is taken at coordinates `(col, row)`.
pub fn cloud_from_depth(
    depth: &DepthMap,
    cam: &CameraModel,
    mask: Option<&BinaryMask>,
) -> Result<Vec<Point3D>, CameraError> {
    if let Some(m) = mask {
        depth.ensure_shape(m.shape())?;
    }
    let mut cloud = Vec::new();
    for y in 0..depth.height() {
        for x in 0..depth.width() {
            let d = depth.get(x, y);
            if d == 0 || mask.is_some_and(|m| !m.get(x, y)) {
                continue;
            }
            cloud.push(backproject(PixelPoint::new(f64::from(x), f64::from(y)), f64::from(d), cam)?);
        }
    }
    Ok(cloud)
}
