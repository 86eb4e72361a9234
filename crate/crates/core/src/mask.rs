//! Binary masks at image resolution.

use thiserror::Error;

use crate::coordsys::ImageShape;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MaskError {
    #[error("mask data has {got} samples, expected {expected}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("mask is {got_w}x{got_h}, expected {want_w}x{want_h}")]
    ShapeMismatch { want_w: u32, want_h: u32, got_w: u32, got_h: u32 },
}

/// Row-major foreground flags.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    shape: ImageShape,
    data: Vec<bool>,
}

/// Inclusive pixel extents of a mask's foreground.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelBounds {
    pub min_x: u32,
    pub min_y: u32,
    pub max_x: u32,
    pub max_y: u32,
}

impl BinaryMask {
    pub fn new(shape: ImageShape, data: Vec<bool>) -> Result<Self, MaskError> {
        let expected = shape.pixel_count() as usize;
        if data.len() != expected {
            return Err(MaskError::SizeMismatch { expected, got: data.len() });
        }
        Ok(Self { shape, data })
    }

    pub fn empty(shape: ImageShape) -> Self {
        Self { shape, data: vec![false; shape.pixel_count() as usize] }
    }

    pub fn full(shape: ImageShape) -> Self {
        Self { shape, data: vec![true; shape.pixel_count() as usize] }
    }

    pub fn from_fn(shape: ImageShape, mut f: impl FnMut(u32, u32) -> bool) -> Self {
        let mut data = Vec::with_capacity(shape.pixel_count() as usize);
        for y in 0..shape.height {
            for x in 0..shape.width {
                data.push(f(x, y));
            }
        }
        Self { shape, data }
    }

    pub fn shape(&self) -> ImageShape {
        self.shape
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        x < self.shape.width && y < self.shape.height && self.data[self.index(x, y)]
    }

    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        let i = self.index(x, y);
        self.data[i] = value;
    }

    fn index(&self, x: u32, y: u32) -> usize {
        y as usize * self.shape.width as usize + x as usize
    }

    pub fn area(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    /// Foreground pixels in row-major order.
    pub fn pixels(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let w = self.shape.width;
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| ((i % w as usize) as u32, (i / w as usize) as u32))
    }

    pub fn bounds(&self) -> Option<PixelBounds> {
        let mut it = self.pixels();
        let (x0, y0) = it.next()?;
        let mut b = PixelBounds { min_x: x0, min_y: y0, max_x: x0, max_y: y0 };
        for (x, y) in it {
            b.min_x = b.min_x.min(x);
            b.max_x = b.max_x.max(x);
            b.min_y = b.min_y.min(y);
            b.max_y = b.max_y.max(y);
        }
        Some(b)
    }

    pub fn ensure_shape(&self, shape: ImageShape) -> Result<(), MaskError> {
        if self.shape != shape {
            return Err(MaskError::ShapeMismatch {
                want_w: shape.width,
                want_h: shape.height,
                got_w: self.shape.width,
                got_h: self.shape.height,
            });
        }
        Ok(())
    }

    /// Erosion by the disk `{(dx, dy) : dx² + dy² ≤ radius²}`. Pixels outside
    /// the image count as background.
    pub fn erode_disk(&self, radius: u32) -> BinaryMask {
        let r2 = u64::from(radius) * u64::from(radius);
        let dist = self.background_sq_distance();
        let data = dist.into_iter().map(|d| d > r2).collect();
        BinaryMask { shape: self.shape, data }
    }

    /// Exact squared Euclidean distance from every pixel to the nearest
    /// background pixel, with a one-pixel background frame around the image.
    fn background_sq_distance(&self) -> Vec<u64> {
        let w = self.shape.width as usize + 2;
        let h = self.shape.height as usize + 2;
        let inf = u64::MAX / 4;
        let mut grid = vec![inf; w * h];
        for y in 0..h {
            for x in 0..w {
                let inside = x >= 1 && y >= 1 && x <= self.shape.width as usize && y <= self.shape.height as usize;
                if !inside || !self.data[(y - 1) * self.shape.width as usize + (x - 1)] {
                    grid[y * w + x] = 0;
                }
            }
        }
        let mut buf = vec![0u64; w.max(h)];
        let mut out = vec![0u64; w.max(h)];
        for x in 0..w {
            for y in 0..h {
                buf[y] = grid[y * w + x];
            }
            distance_1d(&buf[..h], &mut out[..h]);
            for y in 0..h {
                grid[y * w + x] = out[y];
            }
        }
        for y in 0..h {
            buf[..w].copy_from_slice(&grid[y * w..(y + 1) * w]);
            distance_1d(&buf[..w], &mut out[..w]);
            grid[y * w..(y + 1) * w].copy_from_slice(&out[..w]);
        }
        let mut result = Vec::with_capacity(self.data.len());
        for y in 1..=self.shape.height as usize {
            for x in 1..=self.shape.width as usize {
                result.push(grid[y * w + x]);
            }
        }
        result
    }
}

/// One-dimensional squared distance transform (lower envelope of parabolas).
fn distance_1d(f: &[u64], d: &mut [u64]) {
    let n = f.len();
    let inf = u64::MAX / 4;
    let sites: Vec<usize> = (0..n).filter(|&q| f[q] < inf).collect();
    if sites.is_empty() {
        d.fill(inf);
        return;
    }
    let fi = |q: usize| f[q] as f64 + (q * q) as f64;
    let mut v: Vec<usize> = Vec::with_capacity(sites.len());
    let mut z: Vec<f64> = Vec::with_capacity(sites.len() + 1);
    v.push(sites[0]);
    z.push(f64::NEG_INFINITY);
    z.push(f64::INFINITY);
    for &q in &sites[1..] {
        loop {
            let p = *v.last().unwrap();
            let s = (fi(q) - fi(p)) / (2.0 * (q as f64 - p as f64));
            // z[0] is -inf, so the first parabola is never popped
            if s <= z[v.len() - 1] {
                v.pop();
                z.pop();
                continue;
            }
            *z.last_mut().unwrap() = s;
            v.push(q);
            z.push(f64::INFINITY);
            break;
        }
    }
    let mut k = 0;
    for (q, out) in d.iter_mut().enumerate().take(n) {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let dq = q.abs_diff(p) as u64;
        *out = dq * dq + f[p];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_erode(m: &BinaryMask, r: u32) -> BinaryMask {
        let s = m.shape();
        let r = r as i64;
        BinaryMask::from_fn(s, |x, y| {
            for dy in -r..=r {
                for dx in -r..=r {
                    if dx * dx + dy * dy > r * r {
                        continue;
                    }
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if nx < 0 || ny < 0 || nx >= s.width as i64 || ny >= s.height as i64 {
                        return false;
                    }
                    if !m.get(nx as u32, ny as u32) {
                        return false;
                    }
                }
            }
            true
        })
    }

    #[test]
    fn bounds_and_area() {
        let s = ImageShape::new(10, 8).unwrap();
        let m = BinaryMask::from_fn(s, |x, y| (2..5).contains(&x) && (3..7).contains(&y));
        assert_eq!(m.area(), 12);
        assert_eq!(m.bounds(), Some(PixelBounds { min_x: 2, min_y: 3, max_x: 4, max_y: 6 }));
        assert_eq!(BinaryMask::empty(s).bounds(), None);
    }

    #[test]
    fn erosion_of_square() {
        let s = ImageShape::new(20, 20).unwrap();
        let m = BinaryMask::from_fn(s, |x, y| (5..15).contains(&x) && (5..15).contains(&y));
        let e = m.erode_disk(1);
        assert_eq!(e.bounds(), Some(PixelBounds { min_x: 6, min_y: 6, max_x: 13, max_y: 13 }));
        assert_eq!(e, brute_erode(&m, 1));
    }

    #[test]
    fn full_mask_erodes_from_the_frame() {
        let s = ImageShape::new(5, 5).unwrap();
        let e = BinaryMask::full(s).erode_disk(1);
        assert_eq!(e.area(), 9);
    }

    proptest! {
        #[test]
        fn erosion_matches_brute_force(w in 1u32..14, h in 1u32..14, r in 0u32..5, bits in prop::collection::vec(prop::bool::weighted(0.8), 196)) {
            let s = ImageShape::new(w, h).unwrap();
            let m = BinaryMask::from_fn(s, |x, y| bits[(y * 14 + x) as usize]);
            let fast = m.erode_disk(r);
            prop_assert_eq!(&fast, &brute_erode(&m, r));
            // erosion is a subset of the mask
            for (x, y) in fast.pixels() {
                prop_assert!(m.get(x, y));
            }
        }
    }
}
