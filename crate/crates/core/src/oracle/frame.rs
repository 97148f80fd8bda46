//! Rasters and the portable-pixmap frame format.

use thiserror::Error;

/// Smallest width or height the pipeline accepts.
pub const MIN_SIDE: usize = 32;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FrameError {
    #[error("frame {width}x{height} is smaller than {MIN_SIDE}x{MIN_SIDE}")]
    TooSmall { width: usize, height: usize },
    #[error("pixel buffer holds {got} bytes, expected {expected}")]
    BadLength { got: usize, expected: usize },
    #[error("ppm: {0}")]
    Ppm(String),
    #[error("raster dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
}

/// Row-major raster of `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Clone> Raster<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }
}

impl<T> Raster<T> {
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), width * height, "raster buffer length");
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn same_shape<U>(&self, other: &Raster<U>) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn get(&self, x: usize, y: usize) -> &T {
        &self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: T) {
        self.data[y * self.width + x] = v;
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Raster<U> {
        Raster {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(f).collect(),
        }
    }
}

pub type Mask = Raster<bool>;
pub type GrayImage = Raster<u8>;
pub type EdgeMap = Raster<bool>;

impl Raster<bool> {
    pub fn count_set(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }
}

/// An 8-bit RGB camera frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl Frame {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, FrameError> {
        if width < MIN_SIDE || height < MIN_SIDE {
            return Err(FrameError::TooSmall { width, height });
        }
        let expected = width * height * 3;
        if pixels.len() != expected {
            return Err(FrameError::BadLength {
                got: pixels.len(),
                expected,
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Result<Self, FrameError> {
        let pixels = rgb
            .iter()
            .copied()
            .cycle()
            .take(width * height * 3)
            .collect();
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn rgb(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn set_rgb(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    /// Binary (P6) pixmap.
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    /// ASCII (P3) pixmap.
    pub fn to_ppm_ascii(&self) -> String {
        let mut out = format!("P3\n{} {}\n255\n", self.width, self.height);
        for row in self.pixels.chunks(self.width * 3) {
            let line: Vec<String> = row.iter().map(u8::to_string).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    /// Parses a P3 or P6 pixmap. Samples with a maxval below 255 are
    /// rescaled to the 8-bit range.
    pub fn from_ppm(bytes: &[u8]) -> Result<Self, FrameError> {
        let mut p = PpmHeader { bytes, pos: 0 };
        let magic = p.token()?;
        let binary = match magic.as_str() {
            "P6" => true,
            "P3" => false,
            other => return Err(FrameError::Ppm(format!("unsupported magic {other:?}"))),
        };
        let width = p.number()?;
        let height = p.number()?;
        let maxval = p.number()?;
        if maxval == 0 || maxval > 255 {
            return Err(FrameError::Ppm(format!("maxval {maxval} not in 1..=255")));
        }
        let n = width
            .checked_mul(height)
            .and_then(|v| v.checked_mul(3))
            .ok_or_else(|| FrameError::Ppm("dimensions overflow".into()))?;
        let raw: Vec<u8> = if binary {
            // exactly one whitespace byte separates the header from the data
            let start = p.pos + 1;
            let data = bytes
                .get(start..start + n)
                .ok_or_else(|| FrameError::Ppm(format!("expected {n} data bytes")))?;
            data.to_vec()
        } else {
            (0..n)
                .map(|_| {
                    let v = p.number()?;
                    if v > maxval {
                        return Err(FrameError::Ppm(format!("sample {v} exceeds maxval")));
                    }
                    Ok(v as u8)
                })
                .collect::<Result<_, _>>()?
        };
        let pixels = if maxval == 255 {
            raw
        } else {
            raw.iter()
                .map(|&v| ((v as usize * 255 + maxval / 2) / maxval) as u8)
                .collect()
        };
        Self::new(width, height, pixels)
    }
}

struct PpmHeader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl PpmHeader<'_> {
    fn skip_space(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> Result<String, FrameError> {
        self.skip_space();
        let start = self.pos;
        while self
            .bytes
            .get(self.pos)
            .is_some_and(|b| !b.is_ascii_whitespace() && *b != b'#')
        {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(FrameError::Ppm("unexpected end of header".into()));
        }
        Ok(String::from_utf8_lossy(&self.bytes[start..self.pos]).into_owned())
    }

    fn number(&mut self) -> Result<usize, FrameError> {
        let t = self.token()?;
        t.parse()
            .map_err(|_| FrameError::Ppm(format!("expected a number, got {t:?}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient() -> Frame {
        let mut f = Frame::filled(32, 33, [0, 0, 0]).unwrap();
        for y in 0..33 {
            for x in 0..32 {
                f.set_rgb(x, y, [x as u8 * 7, y as u8 * 5, (x + y) as u8]);
            }
        }
        f
    }

    #[test]
    fn rejects_small_frames() {
        assert!(matches!(
            Frame::filled(31, 40, [0; 3]),
            Err(FrameError::TooSmall { .. })
        ));
    }

    #[test]
    fn binary_and_ascii_roundtrip() {
        let f = gradient();
        assert_eq!(Frame::from_ppm(&f.to_ppm()).unwrap(), f);
        assert_eq!(Frame::from_ppm(f.to_ppm_ascii().as_bytes()).unwrap(), f);
    }

    #[test]
    fn header_comments_and_maxval_scaling() {
        let mut text = String::from("P3\n# a comment\n32 32 # trailing\n1\n");
        for _ in 0..32 * 32 {
            text.push_str("1 0 1\n");
        }
        let f = Frame::from_ppm(text.as_bytes()).unwrap();
        assert_eq!(f.rgb(5, 5), [255, 0, 255]);
    }

    #[test]
    fn truncated_binary_is_an_error() {
        let bytes = gradient().to_ppm();
        assert!(Frame::from_ppm(&bytes[..bytes.len() - 1]).is_err());
        assert!(Frame::from_ppm(b"P5\n32 32\n255\n").is_err());
    }
}
