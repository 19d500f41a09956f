use rfnode_core::{DepthImage, FrameSample, RgbImage};

/// Removes radial-tangential distortion by inverse mapping.
///
/// Each output pixel is pushed through the distortion model to find its
/// source location; color is sampled bilinearly and depth by nearest
/// neighbour (blending would mix valid and invalid depths). The returned
/// frame carries the same intrinsics marked rectified.
pub fn rectify_frame(frame: &FrameSample) -> FrameSample {
    let cam = frame.camera;
    if cam.rectified() || cam.distortion() == [0.0; 4] {
        let mut out = frame.clone();
        out.camera = cam.as_rectified();
        return out;
    }
    let (w, h) = (cam.width() as usize, cam.height() as usize);
    let source_of = |x: usize, y: usize| {
        let xn = (x as f64 + 0.5 - cam.cx()) / cam.fx();
        let yn = (y as f64 + 0.5 - cam.cy()) / cam.fy();
        let (xd, yd) = cam.distort_normalized(xn, yn);
        (cam.fx() * xd + cam.cx(), cam.fy() * yd + cam.cy())
    };
    let rgb = RgbImage::from_fn(w, h, |x, y| {
        let (u, v) = source_of(x, y);
        if u < 0.0 || v < 0.0 || u >= w as f64 || v >= h as f64 {
            [0.0; 3]
        } else {
            frame.rgb.sample_bilinear(u, v)
        }
    });
    let depth = frame.depth.as_ref().map(|d| {
        DepthImage::from_fn(w, h, |x, y| {
            let (u, v) = source_of(x, y);
            if u < 0.0 || v < 0.0 || u >= w as f64 || v >= h as f64 {
                0.0
            } else {
                d.get(u as usize, v as usize)
            }
        })
    });
    FrameSample {
        rgb,
        depth,
        camera: cam.as_rectified(),
        ..frame.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rfnode_core::{PinholeCamera, Pose};

    #[test]
    fn zero_distortion_is_identity() {
        let cam = PinholeCamera::with_distortion(8.0, 8.0, 4.0, 4.0, 8, 8, [0.0; 4], false).unwrap();
        let rgb = RgbImage::from_fn(8, 8, |x, y| [x as f32 / 8.0, y as f32 / 8.0, 0.0]);
        let f = FrameSample::new("c", 0, 0.0, rgb.clone(), None, Pose::identity(), cam).unwrap();
        let r = rectify_frame(&f);
        assert!(r.camera.rectified());
        assert_eq!(r.rgb, rgb);
    }

    #[test]
    fn distorted_center_is_preserved() {
        let cam = PinholeCamera::with_distortion(20.0, 20.0, 10.0, 10.0, 20, 20, [0.2, 0.05, 0.0, 0.0], false).unwrap();
        let rgb = RgbImage::from_fn(20, 20, |x, y| [x as f32 / 20.0, y as f32 / 20.0, 0.5]);
        let depth = DepthImage::filled(20, 20, 2.0);
        let f = FrameSample::new("c", 0, 0.0, rgb, Some(depth), Pose::identity(), cam).unwrap();
        let r = rectify_frame(&f);
        assert_eq!(r.camera.distortion(), [0.0; 4]);
        // near the principal point distortion is negligible
        let c = r.rgb.get(10, 10);
        assert!((c[0] - 10.0 / 20.0).abs() < 0.02);
        // barrel distortion pulls corner samples from further out
        let corner = r.rgb.get(1, 1);
        assert!(corner[0] < 1.0 / 20.0 + 1e-6);
        assert_eq!(r.depth.unwrap().get(10, 10), 2.0);
    }
}
