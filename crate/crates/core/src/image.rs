//! Row-major image buffers.

use crate::error::CoreError;

#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuf<P> {
    width: usize,
    height: usize,
    data: Vec<P>,
}

/// Linear RGB, components in `[0, 1]`.
pub type RgbImage = ImageBuf<[f32; 3]>;
/// Single-channel float image (depth in meters, opacity, gray).
pub type DepthImage = ImageBuf<f32>;

impl<P: Copy> ImageBuf<P> {
    pub fn filled(width: usize, height: usize, value: P) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<P>) -> Result<Self, CoreError> {
        if data.len() != width * height {
            return Err(CoreError::DimensionMismatch {
                expected: (width, height),
                actual: (data.len(), 1),
            });
        }
        Ok(Self { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> P) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> P {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: P) {
        self.data[y * self.width + x] = v;
    }

    pub fn pixels(&self) -> &[P] {
        &self.data
    }

    pub fn pixels_mut(&mut self) -> &mut [P] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<P> {
        self.data
    }

    pub fn map<Q: Copy>(&self, f: impl Fn(P) -> Q) -> ImageBuf<Q> {
        ImageBuf {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&p| f(p)).collect(),
        }
    }

    pub fn ensure_dims(&self, width: usize, height: usize) -> Result<(), CoreError> {
        if self.dims() != (width, height) {
            return Err(CoreError::DimensionMismatch {
                expected: (width, height),
                actual: self.dims(),
            });
        }
        Ok(())
    }

    /// Nearest-neighbour resample sampling at pixel centers.
    pub fn resize_nearest(&self, width: usize, height: usize) -> Self {
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        Self::from_fn(width, height, |x, y| {
            let u = (((x as f64 + 0.5) * sx) as usize).min(self.width - 1);
            let v = (((y as f64 + 0.5) * sy) as usize).min(self.height - 1);
            self.get(u, v)
        })
    }
}

/// Pixel types that support linear blending.
pub trait Blend: Copy {
    fn lerp4(p: [Self; 4], w: [f32; 4]) -> Self;
}

impl Blend for f32 {
    fn lerp4(p: [f32; 4], w: [f32; 4]) -> f32 {
        p[0] * w[0] + p[1] * w[1] + p[2] * w[2] + p[3] * w[3]
    }
}

impl Blend for [f32; 3] {
    fn lerp4(p: [[f32; 3]; 4], w: [f32; 4]) -> [f32; 3] {
        let mut out = [0.0; 3];
        for (c, o) in out.iter_mut().enumerate() {
            *o = p[0][c] * w[0] + p[1][c] * w[1] + p[2][c] * w[2] + p[3][c] * w[3];
        }
        out
    }
}

impl<P: Blend> ImageBuf<P> {
    /// Bilinear sample at continuous pixel coordinates (pixel centers at
    /// `i + 0.5`), clamping to the border.
    pub fn sample_bilinear(&self, u: f64, v: f64) -> P {
        let fx = (u - 0.5).clamp(0.0, (self.width - 1) as f64);
        let fy = (v - 0.5).clamp(0.0, (self.height - 1) as f64);
        let x0 = fx.floor() as usize;
        let y0 = fy.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let ax = (fx - x0 as f64) as f32;
        let ay = (fy - y0 as f64) as f32;
        P::lerp4(
            [self.get(x0, y0), self.get(x1, y0), self.get(x0, y1), self.get(x1, y1)],
            [(1.0 - ax) * (1.0 - ay), ax * (1.0 - ay), (1.0 - ax) * ay, ax * ay],
        )
    }

    /// Bilinear resample to `width`×`height` with pixel-center alignment.
    pub fn resize_bilinear(&self, width: usize, height: usize) -> Self {
        if (width, height) == self.dims() {
            return self.clone();
        }
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        Self::from_fn(width, height, |x, y| {
            self.sample_bilinear((x as f64 + 0.5) * sx, (y as f64 + 0.5) * sy)
        })
    }
}

impl RgbImage {
    /// ITU-R BT.601 luma: `0.299 R + 0.587 G + 0.114 B`.
    pub fn to_gray(&self) -> ImageBuf<f64> {
        self.map(|[r, g, b]| 0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64)
    }

    pub fn to_rgb8(&self) -> Vec<u8> {
        self.data
            .iter()
            .flat_map(|p| p.map(|c| (c.clamp(0.0, 1.0) * 255.0).round() as u8))
            .collect()
    }

    pub fn from_rgb8(width: usize, height: usize, bytes: &[u8]) -> Result<Self, CoreError> {
        if bytes.len() != width * height * 3 {
            return Err(CoreError::DimensionMismatch {
                expected: (width, height),
                actual: (bytes.len() / 3, 1),
            });
        }
        let data = bytes
            .chunks_exact(3)
            .map(|c| [c[0] as f32 / 255.0, c[1] as f32 / 255.0, c[2] as f32 / 255.0])
            .collect();
        Ok(Self { width, height, data })
    }
}
