//! Depth-correct merging of renders with overlay scene elements.
//!
//! Overlays (robot markers, sensor glyphs) carry eye-space depth. Occlusion
//! is decided in normalized z-buffer space `[0, 1]`, the same space an
//! OpenGL-style viewer uses, via [`depth_to_zbuffer`].

use crate::error::CoreError;
use crate::image::{DepthImage, ImageBuf, RgbImage};
use crate::product::RenderProduct;

/// Overlay-vs-render ties within this z-buffer distance go to the overlay.
pub const TIE_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct OverlayLayer {
    pub rgb: RgbImage,
    pub mask: ImageBuf<bool>,
    /// Eye-space depth in meters, meaningful where `mask` is set.
    pub depth: DepthImage,
}

impl OverlayLayer {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            rgb: RgbImage::filled(width, height, [0.0; 3]),
            mask: ImageBuf::filled(width, height, false),
            depth: DepthImage::filled(width, height, 0.0),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.rgb.dims()
    }

    fn check(&self, render: &RenderProduct) -> Result<(), CoreError> {
        let (w, h) = render.dims();
        self.rgb.ensure_dims(w, h)?;
        self.mask.ensure_dims(w, h)?;
        self.depth.ensure_dims(w, h)
    }
}

fn check_range(near: f64, far: f64) -> Result<(), CoreError> {
    if !(near > 0.0 && near < far && far.is_finite()) {
        return Err(CoreError::InvalidDepthRange { near, far });
    }
    Ok(())
}

/// Eye-space depth to normalized z-buffer depth:
/// `d = far·(z − near) / (z·(far − near))`, with `z` clamped to `[near, far]`.
pub fn depth_to_zbuffer(z_eye: f64, near: f64, far: f64) -> Result<f64, CoreError> {
    check_range(near, far)?;
    let z = z_eye.clamp(near, far);
    Ok(far * (z - near) / (z * (far - near)))
}

/// Inverse of [`depth_to_zbuffer`]: `z = far·near / (far − d·(far − near))`.
pub fn zbuffer_to_depth(d: f64, near: f64, far: f64) -> Result<f64, CoreError> {
    check_range(near, far)?;
    let d = d.clamp(0.0, 1.0);
    Ok(far * near / (far - d * (far - near)))
}

/// Overlay pixels win where they are nearer than the render (ties included).
pub fn composite_occlude(
    render: &RenderProduct,
    overlay: &OverlayLayer,
    near: f64,
    far: f64,
) -> Result<RgbImage, CoreError> {
    check_range(near, far)?;
    overlay.check(render)?;
    let (w, h) = render.dims();
    let mut out = render.rgb.clone();
    for y in 0..h {
        for x in 0..w {
            if !overlay.mask.get(x, y) {
                continue;
            }
            let d_overlay = depth_to_zbuffer(overlay.depth.get(x, y) as f64, near, far)?;
            let d_render = depth_to_zbuffer(render.depth.get(x, y) as f64, near, far)?;
            if d_overlay < d_render || (d_overlay - d_render).abs() <= TIE_EPSILON {
                out.set(x, y, overlay.rgb.get(x, y));
            }
        }
    }
    Ok(out)
}

/// Overlay always drawn on top of the render, ignoring depth.
pub fn composite_cutout(render: &RenderProduct, overlay: &OverlayLayer) -> Result<RgbImage, CoreError> {
    overlay.check(render)?;
    let (w, h) = render.dims();
    let mut out = render.rgb.clone();
    for y in 0..h {
        for x in 0..w {
            if overlay.mask.get(x, y) {
                out.set(x, y, overlay.rgb.get(x, y));
            }
        }
    }
    Ok(out)
}
