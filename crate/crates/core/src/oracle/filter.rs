use super::frame::{Frame, FrameError, GrayImage, Mask, Raster};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlurParams {
    /// Odd kernel side length.
    pub kernel: usize,
    pub sigma: f32,
    pub passes: usize,
}

impl Default for BlurParams {
    fn default() -> Self {
        Self {
            kernel: 5,
            sigma: 1.4,
            passes: 2,
        }
    }
}

pub fn gaussian_kernel(size: usize, sigma: f32) -> Vec<f32> {
    assert!(size % 2 == 1, "kernel size must be odd");
    let half = (size / 2) as f32;
    let w: Vec<f32> = (0..size)
        .map(|i| {
            let d = i as f32 - half;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f32 = w.iter().sum();
    w.into_iter().map(|v| v / sum).collect()
}

/// Separable Gaussian blur of an RGB frame with replicated borders.
pub fn gaussian_blur(frame: &Frame, kernel: &[f32]) -> Frame {
    let (w, h) = (frame.width(), frame.height());
    let half = (kernel.len() / 2) as isize;
    let src = frame.pixels();
    let mut tmp = vec![0f32; w * h * 3];
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0f32; 3];
            for (k, wt) in kernel.iter().enumerate() {
                let sx = (x as isize + k as isize - half).clamp(0, w as isize - 1) as usize;
                let i = (y * w + sx) * 3;
                for c in 0..3 {
                    acc[c] += wt * src[i + c] as f32;
                }
            }
            tmp[(y * w + x) * 3..][..3].copy_from_slice(&acc);
        }
    }
    let mut out = vec![0u8; w * h * 3];
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0f32; 3];
            for (k, wt) in kernel.iter().enumerate() {
                let sy = (y as isize + k as isize - half).clamp(0, h as isize - 1) as usize;
                let i = (sy * w + x) * 3;
                for c in 0..3 {
                    acc[c] += wt * tmp[i + c];
                }
            }
            for c in 0..3 {
                out[(y * w + x) * 3 + c] = acc[c].round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    Frame::new(w, h, out).expect("same dimensions as a valid frame")
}

pub fn luminance([r, g, b]: [u8; 3]) -> u8 {
    (0.299 * r as f32 + 0.587 * g as f32 + 0.114 * b as f32)
        .round()
        .clamp(0.0, 255.0) as u8
}

/// Blurs the frame `passes` times, keeps only pixels under `mask` and
/// converts the result to luminance.
pub fn masked_gray(frame: &Frame, mask: &Mask, blur: &BlurParams) -> Result<GrayImage, FrameError> {
    if frame.width() != mask.width() || frame.height() != mask.height() {
        return Err(FrameError::DimensionMismatch(
            frame.width(),
            frame.height(),
            mask.width(),
            mask.height(),
        ));
    }
    let kernel = gaussian_kernel(blur.kernel, blur.sigma);
    let mut blurred = frame.clone();
    for _ in 0..blur.passes {
        blurred = gaussian_blur(&blurred, &kernel);
    }
    let (w, h) = (frame.width(), frame.height());
    let mut gray = Raster::filled(w, h, 0u8);
    for y in 0..h {
        for x in 0..w {
            if *mask.get(x, y) {
                gray.set(x, y, luminance(blurred.rgb(x, y)));
            }
        }
    }
    Ok(gray)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_is_normalized_and_symmetric() {
        let k = gaussian_kernel(5, 1.4);
        assert!((k.iter().sum::<f32>() - 1.0).abs() < 1e-6);
        assert_eq!(k[0], k[4]);
        assert!(k[2] > k[1]);
    }

    #[test]
    fn empty_mask_gives_black() {
        let f = Frame::filled(40, 40, [200, 100, 10]).unwrap();
        let mask = Raster::filled(40, 40, false);
        let g = masked_gray(&f, &mask, &BlurParams::default()).unwrap();
        assert!(g.data().iter().all(|&v| v == 0));
    }

    #[test]
    fn full_mask_on_constant_frame_is_constant() {
        let f = Frame::filled(40, 40, [200, 100, 10]).unwrap();
        let mask = Raster::filled(40, 40, true);
        let g = masked_gray(&f, &mask, &BlurParams::default()).unwrap();
        let v = luminance([200, 100, 10]);
        assert!(g.data().iter().all(|&p| p == v));
    }

    #[test]
    fn mask_shape_must_match() {
        let f = Frame::filled(40, 40, [0; 3]).unwrap();
        let mask = Raster::filled(41, 40, true);
        assert!(matches!(
            masked_gray(&f, &mask, &BlurParams::default()),
            Err(FrameError::DimensionMismatch(..))
        ));
    }
}
