use image::{ImageFormat, Rgb, RgbImage};

use crate::coordsys::{from_norm, ImageShape, NormPoint};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverlayStyle {
    pub line: Rgb<u8>,
    pub start: Rgb<u8>,
    pub end: Rgb<u8>,
    /// Marker radius as a fraction of the longer image side.
    pub marker_frac: f64,
    /// Line half-width as a fraction of the longer image side.
    pub line_frac: f64,
}

impl Default for OverlayStyle {
    fn default() -> Self {
        Self {
            line: Rgb([0, 200, 0]),
            start: Rgb([255, 0, 0]),
            end: Rgb([0, 0, 255]),
            marker_frac: 0.015,
            line_frac: 0.003,
        }
    }
}

pub fn blank_canvas(width: u32, height: u32) -> RgbImage {
    RgbImage::from_pixel(width, height, Rgb([255, 255, 255]))
}

fn fill_where(img: &mut RgbImage, cx: f64, cy: f64, r: f64, color: Rgb<u8>, inside: impl Fn(f64, f64) -> bool) {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let x0 = ((cx - r).floor() as i64).max(0);
    let x1 = ((cx + r).ceil() as i64).min(w - 1);
    let y0 = ((cy - r).floor() as i64).max(0);
    let y1 = ((cy + r).ceil() as i64).min(h - 1);
    for y in y0..=y1 {
        for x in x0..=x1 {
            let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
            if inside(dx, dy) {
                img.put_pixel(x as u32, y as u32, color);
            }
        }
    }
}

fn disk(img: &mut RgbImage, cx: f64, cy: f64, r: f64, color: Rgb<u8>) {
    fill_where(img, cx, cy, r, color, |dx, dy| dx * dx + dy * dy <= r * r);
}

fn diamond(img: &mut RgbImage, cx: f64, cy: f64, r: f64, color: Rgb<u8>) {
    fill_where(img, cx, cy, r, color, |dx, dy| dx.abs() + dy.abs() <= r);
}

/// Draws the trace as a polyline with a filled circle on the first point and
/// a filled diamond on the last.
pub fn render_overlay(image: &RgbImage, trace: &[NormPoint], style: &OverlayStyle) -> RgbImage {
    let mut img = image.clone();
    let Ok(shape) = ImageShape::new(img.width(), img.height()) else { return img };
    if trace.is_empty() {
        return img;
    }
    let side = f64::from(shape.side());
    let marker = (style.marker_frac * side).max(1.0);
    let half = (style.line_frac * side).max(0.5);
    let px: Vec<(f64, f64)> = trace
        .iter()
        .map(|&p| {
            let q = from_norm(p, shape);
            (q.u, q.v)
        })
        .collect();
    for w in px.windows(2) {
        let ((ax, ay), (bx, by)) = (w[0], w[1]);
        let len = (bx - ax).hypot(by - ay);
        let steps = (len / (half * 0.5)).ceil().max(1.0) as usize;
        for s in 0..=steps {
            let t = s as f64 / steps as f64;
            disk(&mut img, ax + t * (bx - ax), ay + t * (by - ay), half, style.line);
        }
    }
    let (ex, ey) = *px.last().unwrap();
    diamond(&mut img, ex, ey, marker, style.end);
    let (sx, sy) = px[0];
    disk(&mut img, sx, sy, marker, style.start);
    img
}

pub fn encode_png(img: &RgbImage) -> Vec<u8> {
    let mut buf = std::io::Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png).expect("in-memory PNG encoding");
    buf.into_inner()
}
