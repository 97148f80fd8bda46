//! Canny edge detection: Sobel gradients, non-maximum suppression along the
//! quantized gradient direction, then double-threshold hysteresis.

use thiserror::Error;

use super::frame::{EdgeMap, GrayImage, Raster};

#[derive(Debug, Error, Clone, PartialEq)]
#[error("canny thresholds must satisfy low < high (got {low} and {high})")]
pub struct ThresholdError {
    pub low: f32,
    pub high: f32,
}

/// Sobel gradient `(gx, gy)` per pixel; the one-pixel border is left at zero.
pub fn sobel(gray: &GrayImage) -> (Raster<f32>, Raster<f32>) {
    let (w, h) = (gray.width(), gray.height());
    let mut gx = Raster::filled(w, h, 0f32);
    let mut gy = Raster::filled(w, h, 0f32);
    let p = |x: usize, y: usize| *gray.get(x, y) as f32;
    for y in 1..h.saturating_sub(1) {
        for x in 1..w.saturating_sub(1) {
            let dx = (p(x + 1, y - 1) + 2.0 * p(x + 1, y) + p(x + 1, y + 1))
                - (p(x - 1, y - 1) + 2.0 * p(x - 1, y) + p(x - 1, y + 1));
            let dy = (p(x - 1, y + 1) + 2.0 * p(x, y + 1) + p(x + 1, y + 1))
                - (p(x - 1, y - 1) + 2.0 * p(x, y - 1) + p(x + 1, y - 1));
            gx.set(x, y, dx);
            gy.set(x, y, dy);
        }
    }
    (gx, gy)
}

// negated compares so NaN thresholds are rejected
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn canny(gray: &GrayImage, low: f32, high: f32) -> Result<EdgeMap, ThresholdError> {
    if !(low < high) {
        return Err(ThresholdError { low, high });
    }
    let (w, h) = (gray.width(), gray.height());
    let (gx, gy) = sobel(gray);
    let mag = Raster::from_vec(
        w,
        h,
        gx.data()
            .iter()
            .zip(gy.data())
            .map(|(a, b)| (a * a + b * b).sqrt())
            .collect(),
    );

    let mut thin = Raster::filled(w, h, 0f32);
    for y in 1..h.saturating_sub(1) {
        for x in 1..w.saturating_sub(1) {
            let m = *mag.get(x, y);
            if m == 0.0 {
                continue;
            }
            let angle = gy
                .get(x, y)
                .atan2(*gx.get(x, y))
                .to_degrees()
                .rem_euclid(180.0);
            let (ax, ay, bx, by) = if !(22.5..157.5).contains(&angle) {
                (x + 1, y, x - 1, y)
            } else if angle < 67.5 {
                (x + 1, y + 1, x - 1, y - 1)
            } else if angle < 112.5 {
                (x, y + 1, x, y - 1)
            } else {
                (x - 1, y + 1, x + 1, y - 1)
            };
            // ties break towards the later neighbour so plateaus keep one pixel
            if m >= *mag.get(ax, ay) && m > *mag.get(bx, by) {
                thin.set(x, y, m);
            }
        }
    }

    let mut edges = Raster::filled(w, h, false);
    let mut stack: Vec<(usize, usize)> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if *thin.get(x, y) >= high {
                edges.set(x, y, true);
                stack.push((x, y));
            }
        }
    }
    while let Some((x, y)) = stack.pop() {
        for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
            for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                if !*edges.get(nx, ny) && *thin.get(nx, ny) >= low {
                    edges.set(nx, ny, true);
                    stack.push((nx, ny));
                }
            }
        }
    }
    Ok(edges)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_has_no_edges() {
        let g = Raster::filled(40, 40, 123u8);
        assert_eq!(canny(&g, 50.0, 150.0).unwrap().count_set(), 0);
    }

    #[test]
    fn thresholds_must_be_ordered() {
        let g = Raster::filled(40, 40, 0u8);
        assert!(canny(&g, 150.0, 50.0).is_err());
        assert!(canny(&g, 50.0, 50.0).is_err());
    }

    #[test]
    fn step_edge_is_one_pixel_wide() {
        let mut g = Raster::filled(40, 40, 0u8);
        for y in 0..40 {
            for x in 20..40 {
                g.set(x, y, 200);
            }
        }
        let e = canny(&g, 50.0, 150.0).unwrap();
        for y in 2..38 {
            let row: Vec<usize> = (0..40).filter(|&x| *e.get(x, y)).collect();
            assert_eq!(row.len(), 1, "row {y}: {row:?}");
            assert!((19..=20).contains(&row[0]));
        }
    }

    #[test]
    fn weak_edges_survive_only_when_connected() {
        // left half: strong step; right half: a faint isolated ridge
        let mut g = Raster::filled(60, 40, 0u8);
        for y in 0..40 {
            for x in 10..30 {
                g.set(x, y, 200);
            }
            g.set(45, y, 20);
        }
        let e = canny(&g, 50.0, 150.0).unwrap();
        assert!((0..40).all(|y| !*e.get(45, y) && !*e.get(44, y) && !*e.get(46, y)));
        assert!(e.count_set() > 0);
    }
}
