//! Circle Hough transform over a `(cx, cy, r)` accumulator at one-pixel
//! resolution.

use std::collections::BTreeSet;

use super::frame::EdgeMap;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HoughParams {
    pub r_min: usize,
    pub r_max: usize,
    /// Minimum fraction of a candidate circle's perimeter pixels that must be
    /// edge pixels.
    pub vote_threshold: f32,
    /// Detections closer than this to a stronger one are suppressed.
    pub min_center_dist: f32,
}

impl Default for HoughParams {
    fn default() -> Self {
        Self {
            r_min: 8,
            r_max: 16,
            vote_threshold: 0.4,
            min_center_dist: 12.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircleDetection {
    pub cx: usize,
    pub cy: usize,
    pub r: usize,
    pub votes: u32,
    /// `votes` divided by the number of perimeter offsets for `r`.
    pub support: f32,
}

/// Distinct integer offsets lying on a circle of radius `r`.
pub fn circle_offsets(r: usize) -> Vec<(isize, isize)> {
    let steps = (8.0 * std::f64::consts::PI * r as f64).ceil() as usize;
    let set: BTreeSet<(isize, isize)> = (0..steps)
        .map(|i| {
            let t = i as f64 / steps as f64 * std::f64::consts::TAU;
            (
                (r as f64 * t.cos()).round() as isize,
                (r as f64 * t.sin()).round() as isize,
            )
        })
        .collect();
    set.into_iter().collect()
}

pub fn hough_circles(edges: &EdgeMap, params: &HoughParams) -> Vec<CircleDetection> {
    let (w, h) = (edges.width(), edges.height());
    if params.r_min > params.r_max || w == 0 || h == 0 {
        return Vec::new();
    }
    let radii: Vec<usize> = (params.r_min..=params.r_max).collect();
    let offsets: Vec<Vec<(isize, isize)>> = radii.iter().map(|&r| circle_offsets(r)).collect();
    let points: Vec<(isize, isize)> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .filter(|&(x, y)| *edges.get(x, y))
        .map(|(x, y)| (x as isize, y as isize))
        .collect();
    if points.is_empty() {
        return Vec::new();
    }

    let plane = w * h;
    let mut acc = vec![0u32; plane * radii.len()];
    for (ri, offs) in offsets.iter().enumerate() {
        let layer = &mut acc[ri * plane..(ri + 1) * plane];
        for &(px, py) in &points {
            for &(dx, dy) in offs {
                let cx = px - dx;
                let cy = py - dy;
                if cx >= 0 && cy >= 0 && (cx as usize) < w && (cy as usize) < h {
                    layer[cy as usize * w + cx as usize] += 1;
                }
            }
        }
    }

    let score = |ri: usize, x: usize, y: usize| {
        acc[ri * plane + y * w + x] as f32 / offsets[ri].len() as f32
    };
    let mut candidates = Vec::new();
    for (ri, &r) in radii.iter().enumerate() {
        for y in 0..h {
            for x in 0..w {
                let s = score(ri, x, y);
                if s < params.vote_threshold {
                    continue;
                }
                let mut is_peak = true;
                'nbhd: for nr in ri.saturating_sub(1)..=(ri + 1).min(radii.len() - 1) {
                    for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                        for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                            if (nr, nx, ny) != (ri, x, y) && score(nr, nx, ny) > s {
                                is_peak = false;
                                break 'nbhd;
                            }
                        }
                    }
                }
                if is_peak {
                    candidates.push(CircleDetection {
                        cx: x,
                        cy: y,
                        r,
                        votes: acc[ri * plane + y * w + x],
                        support: s,
                    });
                }
            }
        }
    }

    candidates.sort_by(|a, b| {
        b.support
            .total_cmp(&a.support)
            .then(b.votes.cmp(&a.votes))
            .then((a.cy, a.cx, a.r).cmp(&(b.cy, b.cx, b.r)))
    });
    let min_d2 = params.min_center_dist * params.min_center_dist;
    let mut kept: Vec<CircleDetection> = Vec::new();
    for c in candidates {
        let clear = kept.iter().all(|k| {
            let dx = k.cx as f32 - c.cx as f32;
            let dy = k.cy as f32 - c.cy as f32;
            dx * dx + dy * dy >= min_d2
        });
        if clear {
            kept.push(c);
        }
    }
    kept
}
