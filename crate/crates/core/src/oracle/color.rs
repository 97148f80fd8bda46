//! Hexcone RGB/HSV conversion and the orange colour mask.

use super::frame::{Frame, Mask, Raster};

/// Hue in degrees `[0, 360)`, saturation and value in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hsv {
    pub h: f32,
    pub s: f32,
    pub v: f32,
}

pub type HsvFrame = Raster<Hsv>;

pub fn rgb_to_hsv_pixel([r, g, b]: [u8; 3]) -> Hsv {
    let (r, g, b) = (r as f32 / 255.0, g as f32 / 255.0, b as f32 / 255.0);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    let s = if max == 0.0 { 0.0 } else { delta / max };
    Hsv {
        h: if h >= 360.0 { h - 360.0 } else { h },
        s,
        v: max,
    }
}

pub fn hsv_to_rgb_pixel(Hsv { h, s, v }: Hsv) -> [u8; 3] {
    let c = v * s;
    let hp = h / 60.0;
    let x = c * (1.0 - (hp.rem_euclid(2.0) - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    let q = |u: f32| ((u + m) * 255.0).round().clamp(0.0, 255.0) as u8;
    [q(r), q(g), q(b)]
}

pub fn rgb_to_hsv(frame: &Frame) -> HsvFrame {
    let data = frame
        .pixels()
        .chunks_exact(3)
        .map(|p| rgb_to_hsv_pixel([p[0], p[1], p[2]]))
        .collect();
    Raster::from_vec(frame.width(), frame.height(), data)
}

/// Inclusive HSV acceptance band for the ball colour.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HueBand {
    pub hue_min: f32,
    pub hue_max: f32,
    pub sat_min: f32,
    pub val_min: f32,
}

impl Default for HueBand {
    fn default() -> Self {
        Self {
            hue_min: 10.0,
            hue_max: 35.0,
            sat_min: 0.45,
            val_min: 0.35,
        }
    }
}

impl HueBand {
    pub fn contains(&self, px: &Hsv) -> bool {
        (self.hue_min..=self.hue_max).contains(&px.h)
            && px.s >= self.sat_min
            && px.v >= self.val_min
    }
}

pub fn orange_mask(hsv: &HsvFrame, band: &HueBand) -> Mask {
    hsv.map(|px| band.contains(px))
}
