//! Pixel and padded-square normalized coordinate frames.
//!
//! Normalized coordinates are integers in `[0, 999]` measured in a square
//! frame obtained by centering the image inside a `side × side` canvas,
//! where `side = max(width, height)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest normalized coordinate value.
pub const NORM_MAX: u16 = 999;
/// Number of discrete cells per normalized axis.
pub const NORM_CELLS: f64 = 1000.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoordError {
    #[error("image dimensions must be positive, got {width}x{height}")]
    EmptyImage { width: u32, height: u32 },
    #[error("normalized coordinate {0} outside [0, 999]")]
    OutOfRange(u32),
    #[error("box corners out of order: ({x1}, {y1}, {x2}, {y2})")]
    InvertedBox { x1: u16, y1: u16, x2: u16, y2: u16 },
    #[error("pixel ({u}, {v}) lies outside a {width}x{height} image")]
    OutOfBounds { u: f64, v: f64, width: u32, height: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawShape")]
pub struct ImageShape {
    pub width: u32,
    pub height: u32,
}

#[derive(Deserialize)]
struct RawShape {
    width: u32,
    height: u32,
}

impl TryFrom<RawShape> for ImageShape {
    type Error = CoordError;
    fn try_from(raw: RawShape) -> Result<Self, Self::Error> {
        ImageShape::new(raw.width, raw.height)
    }
}

impl ImageShape {
    pub fn new(width: u32, height: u32) -> Result<Self, CoordError> {
        if width == 0 || height == 0 {
            return Err(CoordError::EmptyImage { width, height });
        }
        Ok(Self { width, height })
    }

    /// Side of the padded square.
    pub fn side(&self) -> u32 {
        self.width.max(self.height)
    }

    pub fn pixel_count(&self) -> u64 {
        u64::from(self.width) * u64::from(self.height)
    }

    pub fn diagonal(&self) -> f64 {
        f64::from(self.width).hypot(f64::from(self.height))
    }

    pub fn contains(&self, p: PixelPoint) -> bool {
        p.u.is_finite()
            && p.v.is_finite()
            && p.u >= 0.0
            && p.v >= 0.0
            && p.u <= f64::from(self.width)
            && p.v <= f64::from(self.height)
    }

    /// Clamps a pixel into the closed image rectangle. Non-finite components
    /// collapse to the origin.
    pub fn clamp(&self, p: PixelPoint) -> PixelPoint {
        let fix = |c: f64, hi: u32| if c.is_finite() { c.clamp(0.0, f64::from(hi)) } else { 0.0 };
        PixelPoint { u: fix(p.u, self.width), v: fix(p.v, self.height) }
    }
}

/// Placement of the image inside its padded square.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PadSpec {
    pub side: u32,
    pub offset_x: u32,
    pub offset_y: u32,
}

/// A point in pixel coordinates, `u` to the right and `v` downwards.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PixelPoint {
    pub u: f64,
    pub v: f64,
}

impl PixelPoint {
    pub fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    pub fn distance(&self, other: &PixelPoint) -> f64 {
        (self.u - other.u).hypot(self.v - other.v)
    }
}

/// A point in the normalized frame. Serialized as `[x, y]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "[u32; 2]", into = "[u16; 2]")]
pub struct NormPoint {
    pub x: u16,
    pub y: u16,
}

impl NormPoint {
    pub fn new(x: u16, y: u16) -> Result<Self, CoordError> {
        check_norm(u32::from(x))?;
        check_norm(u32::from(y))?;
        Ok(Self { x, y })
    }

    pub fn as_f64(&self) -> [f64; 2] {
        [f64::from(self.x), f64::from(self.y)]
    }
}

impl TryFrom<[u32; 2]> for NormPoint {
    type Error = CoordError;
    fn try_from([x, y]: [u32; 2]) -> Result<Self, Self::Error> {
        check_norm(x)?;
        check_norm(y)?;
        Ok(Self { x: x as u16, y: y as u16 })
    }
}

impl From<NormPoint> for [u16; 2] {
    fn from(p: NormPoint) -> Self {
        [p.x, p.y]
    }
}

/// An axis-aligned box in the normalized frame. Serialized as `[x1, y1, x2, y2]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "[u32; 4]", into = "[u16; 4]")]
pub struct NormBox {
    pub x1: u16,
    pub y1: u16,
    pub x2: u16,
    pub y2: u16,
}

impl NormBox {
    pub fn new(x1: u16, y1: u16, x2: u16, y2: u16) -> Result<Self, CoordError> {
        Self::try_from([x1, y1, x2, y2].map(u32::from))
    }

    pub fn center(&self) -> [f64; 2] {
        [(f64::from(self.x1) + f64::from(self.x2)) / 2.0, (f64::from(self.y1) + f64::from(self.y2)) / 2.0]
    }

    /// Inclusive containment.
    pub fn contains(&self, p: NormPoint) -> bool {
        self.x1 <= p.x && p.x <= self.x2 && self.y1 <= p.y && p.y <= self.y2
    }

    pub fn contains_f64(&self, [x, y]: [f64; 2]) -> bool {
        f64::from(self.x1) <= x && x <= f64::from(self.x2) && f64::from(self.y1) <= y && y <= f64::from(self.y2)
    }
}

impl TryFrom<[u32; 4]> for NormBox {
    type Error = CoordError;
    fn try_from([x1, y1, x2, y2]: [u32; 4]) -> Result<Self, Self::Error> {
        for c in [x1, y1, x2, y2] {
            check_norm(c)?;
        }
        let b = NormBox { x1: x1 as u16, y1: y1 as u16, x2: x2 as u16, y2: y2 as u16 };
        if x1 > x2 || y1 > y2 {
            return Err(CoordError::InvertedBox { x1: b.x1, y1: b.y1, x2: b.x2, y2: b.y2 });
        }
        Ok(b)
    }
}

impl From<NormBox> for [u16; 4] {
    fn from(b: NormBox) -> Self {
        [b.x1, b.y1, b.x2, b.y2]
    }
}

fn check_norm(c: u32) -> Result<(), CoordError> {
    if c > u32::from(NORM_MAX) {
        Err(CoordError::OutOfRange(c))
    } else {
        Ok(())
    }
}

/// Centered square padding; the shorter axis gets `floor((side - len) / 2)`.
pub fn pad_spec(shape: ImageShape) -> PadSpec {
    let side = shape.side();
    PadSpec { side, offset_x: (side - shape.width) / 2, offset_y: (side - shape.height) / 2 }
}

fn discretize(coord: f64, offset: u32, side: u32) -> u16 {
    // (c + off) * 1000 / side keeps exact integers exact.
    let n = ((coord + f64::from(offset)) * NORM_CELLS / f64::from(side)).floor();
    n.clamp(0.0, f64::from(NORM_MAX)) as u16
}

/// Pixel to normalized coordinates. The pixel must lie in the closed image
/// rectangle `[0, width] × [0, height]`.
pub fn to_norm(p: PixelPoint, shape: ImageShape) -> Result<NormPoint, CoordError> {
    if !shape.contains(p) {
        return Err(CoordError::OutOfBounds { u: p.u, v: p.v, width: shape.width, height: shape.height });
    }
    Ok(to_norm_clamped(p, shape))
}

/// Like [`to_norm`] but clamps the pixel into the image first.
pub fn to_norm_clamped(p: PixelPoint, shape: ImageShape) -> NormPoint {
    let p = shape.clamp(p);
    let pad = pad_spec(shape);
    NormPoint { x: discretize(p.u, pad.offset_x, pad.side), y: discretize(p.v, pad.offset_y, pad.side) }
}

/// Normalized to pixel coordinates at the cell center, clamped into the image.
pub fn from_norm(n: NormPoint, shape: ImageShape) -> PixelPoint {
    from_norm_f64([f64::from(n.x), f64::from(n.y)], shape)
}

/// Continuous variant of [`from_norm`] for interpolated normalized points.
pub fn from_norm_f64([x, y]: [f64; 2], shape: ImageShape) -> PixelPoint {
    let pad = pad_spec(shape);
    let side = f64::from(pad.side);
    let p = PixelPoint {
        u: (x + 0.5) * side / NORM_CELLS - f64::from(pad.offset_x),
        v: (y + 0.5) * side / NORM_CELLS - f64::from(pad.offset_y),
    };
    shape.clamp(p)
}
