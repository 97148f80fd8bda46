//! Synthetic camera: renders the pick zone with orange balls on a noisy
//! background. Stands in for the physical camera so runs are reproducible.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::frame::{Frame, FrameError, Mask, Raster};

/// Free border around the pick zone, in pixels.
pub const PICK_MARGIN: f32 = 2.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("at most {max} balls fit the pick zone, got {got}")]
    TooManyBalls { got: usize, max: usize },
    #[error("ball {0} is not fully inside the pick zone")]
    OutOfBounds(usize),
    #[error("balls {0} and {1} overlap")]
    Overlap(usize, usize),
    #[error("could not place {0} balls without overlap")]
    Placement(usize),
    #[error(transparent)]
    Frame(#[from] FrameError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ball {
    pub cx: f32,
    pub cy: f32,
    pub r: f32,
}

impl Ball {
    fn covers(&self, x: usize, y: usize) -> Option<f32> {
        let dx = x as f32 + 0.5 - self.cx;
        let dy = y as f32 + 0.5 - self.cy;
        let d2 = dx * dx + dy * dy;
        (d2 <= self.r * self.r).then(|| d2 / (self.r * self.r))
    }
}

/// Look of the rendered scene, independent of ball placement.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneStyle {
    pub width: usize,
    pub height: usize,
    pub background: [u8; 3],
    /// Conveyor band across the top of the frame.
    pub track: [u8; 3],
    pub track_rows: usize,
    pub ball_color: [u8; 3],
    pub radius_min: f32,
    pub radius_max: f32,
    /// Uniform per-channel noise amplitude.
    pub noise: u8,
}

impl Default for SceneStyle {
    fn default() -> Self {
        Self {
            width: 160,
            height: 120,
            background: [45, 70, 125],
            track: [95, 95, 100],
            track_rows: 30,
            ball_color: [240, 110, 20],
            radius_min: 10.0,
            radius_max: 13.0,
            noise: 12,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub style: SceneStyle,
    pub balls: Vec<Ball>,
    pub seed: u64,
}

/// Largest number of balls a scene may hold.
pub const MAX_SCENE_BALLS: usize = 3;

impl SceneSpec {
    pub fn new(style: SceneStyle, balls: Vec<Ball>, seed: u64) -> Result<Self, SceneError> {
        let spec = Self { style, balls, seed };
        spec.validate()?;
        Ok(spec)
    }

    /// Places `count` balls at seeded random non-overlapping positions.
    pub fn random(style: &SceneStyle, count: usize, seed: u64) -> Result<Self, SceneError> {
        if count > MAX_SCENE_BALLS {
            return Err(SceneError::TooManyBalls {
                got: count,
                max: MAX_SCENE_BALLS,
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5ce7_e5ce_7e5c_e7e5);
        let (w, h) = (style.width as f32, style.height as f32);
        let mut balls: Vec<Ball> = Vec::with_capacity(count);
        let mut attempts = 0;
        while balls.len() < count {
            attempts += 1;
            if attempts > 10_000 {
                return Err(SceneError::Placement(count));
            }
            let r = rng.gen_range(style.radius_min..=style.radius_max);
            let lo = PICK_MARGIN + r;
            if w - lo <= lo || h - lo <= lo {
                return Err(SceneError::Placement(count));
            }
            let cand = Ball {
                cx: rng.gen_range(lo..w - lo),
                cy: rng.gen_range(lo..h - lo),
                r,
            };
            // keep a couple of pixels between balls so rims stay distinct
            let clear = balls.iter().all(|b| {
                let d = ((b.cx - cand.cx).powi(2) + (b.cy - cand.cy).powi(2)).sqrt();
                d >= b.r + cand.r + 2.0
            });
            if clear {
                balls.push(cand);
            }
        }
        Self::new(style.clone(), balls, seed)
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        if self.balls.len() > MAX_SCENE_BALLS {
            return Err(SceneError::TooManyBalls {
                got: self.balls.len(),
                max: MAX_SCENE_BALLS,
            });
        }
        let (w, h) = (self.style.width as f32, self.style.height as f32);
        for (i, b) in self.balls.iter().enumerate() {
            if b.r <= 0.0
                || b.cx - b.r < PICK_MARGIN
                || b.cy - b.r < PICK_MARGIN
                || b.cx + b.r > w - PICK_MARGIN
                || b.cy + b.r > h - PICK_MARGIN
            {
                return Err(SceneError::OutOfBounds(i));
            }
            for (j, o) in self.balls.iter().enumerate().skip(i + 1) {
                let d = ((b.cx - o.cx).powi(2) + (b.cy - o.cy).powi(2)).sqrt();
                if d < b.r + o.r {
                    return Err(SceneError::Overlap(i, j));
                }
            }
        }
        Ok(())
    }

    pub fn ball_count(&self) -> usize {
        self.balls.len()
    }

    /// Exactly the pixels the renderer paints as ball.
    pub fn disc_mask(&self) -> Mask {
        let (w, h) = (self.style.width, self.style.height);
        let mut m = Raster::filled(w, h, false);
        for y in 0..h {
            for x in 0..w {
                if self.balls.iter().any(|b| b.covers(x, y).is_some()) {
                    m.set(x, y, true);
                }
            }
        }
        m
    }

    pub fn render(&self) -> Result<Frame, SceneError> {
        self.validate()?;
        let s = &self.style;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut pixels = Vec::with_capacity(s.width * s.height * 3);
        let amp = s.noise as i16;
        for y in 0..s.height {
            for x in 0..s.width {
                let base = if y < s.track_rows {
                    s.track
                } else {
                    s.background
                };
                let shade = self.balls.iter().find_map(|b| b.covers(x, y));
                let rgb = match shade {
                    // mild radial darkening towards the rim
                    Some(d2) => s
                        .ball_color
                        .map(|c| (c as f32 * (1.0 - 0.2 * d2)).round() as i16),
                    None => base.map(i16::from),
                };
                for c in rgb {
                    let n = if amp > 0 {
                        rng.gen_range(-amp..=amp)
                    } else {
                        0
                    };
                    pixels.push((c + n).clamp(0, 255) as u8);
                }
            }
        }
        Ok(Frame::new(s.width, s.height, pixels)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_specs_identical_frames() {
        let style = SceneStyle::default();
        let a = SceneSpec::random(&style, 2, 7).unwrap().render().unwrap();
        let b = SceneSpec::random(&style, 2, 7).unwrap().render().unwrap();
        assert_eq!(a, b);
        let c = SceneSpec::random(&style, 2, 8).unwrap().render().unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn overlap_and_bounds_rejected() {
        let style = SceneStyle::default();
        let overlap = vec![
            Ball {
                cx: 50.0,
                cy: 50.0,
                r: 12.0,
            },
            Ball {
                cx: 60.0,
                cy: 50.0,
                r: 12.0,
            },
        ];
        assert_eq!(
            SceneSpec::new(style.clone(), overlap, 0),
            Err(SceneError::Overlap(0, 1))
        );
        let edge = vec![Ball {
            cx: 5.0,
            cy: 50.0,
            r: 12.0,
        }];
        assert_eq!(
            SceneSpec::new(style, edge, 0),
            Err(SceneError::OutOfBounds(0))
        );
    }

    #[test]
    fn four_balls_rejected() {
        assert!(matches!(
            SceneSpec::random(&SceneStyle::default(), 4, 0),
            Err(SceneError::TooManyBalls { .. })
        ));
    }

    #[test]
    fn random_placement_respects_invariants() {
        let style = SceneStyle::default();
        for seed in 0..200 {
            let s = SceneSpec::random(&style, 3, seed).unwrap();
            s.validate().unwrap();
            assert_eq!(s.ball_count(), 3);
        }
    }
}
