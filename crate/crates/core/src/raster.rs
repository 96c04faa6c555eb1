//! 8-bit raster container and the geometric primitives the preprocessing
//! pipeline is built on.
//!
//! All operations are pure: they borrow their input and return a new raster.

use std::io::Cursor;
use std::path::Path;

use image::{ImageFormat, ImageReader};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("expected {expected} channel(s), got {actual}")]
    InvalidChannels { expected: usize, actual: usize },
    #[error("data length {actual} does not match {height}x{width}x{channels}")]
    DataLength {
        height: usize,
        width: usize,
        channels: usize,
        actual: usize,
    },
    #[error("rectangle {rect:?} exceeds {height}x{width} raster")]
    OutOfBounds {
        rect: AxisRect,
        height: usize,
        width: usize,
    },
    #[error("raster must be non-empty")]
    Empty,
    #[error("image decode failed: {0}")]
    Decode(String),
    #[error("image encode failed: {0}")]
    Encode(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Height x width x channels grid of 8-bit intensities, row-major,
/// interleaved RGB for three channels.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Raster {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<u8>,
}

impl std::fmt::Debug for Raster {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Raster")
            .field("height", &self.height)
            .field("width", &self.width)
            .field("channels", &self.channels)
            .finish_non_exhaustive()
    }
}

impl Raster {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<u8>) -> Result<Self, RasterError> {
        if channels != 1 && channels != 3 {
            return Err(RasterError::InvalidChannels {
                expected: 3,
                actual: channels,
            });
        }
        if data.len() != height * width * channels {
            return Err(RasterError::DataLength {
                height,
                width,
                channels,
                actual: data.len(),
            });
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    /// A raster with every sample set to `value`.
    pub fn filled(height: usize, width: usize, channels: usize, value: u8) -> Self {
        assert!(channels == 1 || channels == 3, "channels must be 1 or 3");
        Self {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn is_empty(&self) -> bool {
        self.height == 0 || self.width == 0
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, ch: usize) -> u8 {
        self.data[(row * self.width + col) * self.channels + ch]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, ch: usize, value: u8) {
        self.data[(row * self.width + col) * self.channels + ch] = value;
    }

    #[inline]
    pub fn pixel(&self, row: usize, col: usize) -> &[u8] {
        let i = (row * self.width + col) * self.channels;
        &self.data[i..i + self.channels]
    }

    /// Full-frame rectangle.
    pub fn bounds(&self) -> AxisRect {
        AxisRect {
            x0: 0,
            y0: 0,
            width: self.width,
            height: self.height,
        }
    }

    fn require_channels(&self, expected: usize) -> Result<(), RasterError> {
        if self.channels != expected {
            return Err(RasterError::InvalidChannels {
                expected,
                actual: self.channels,
            });
        }
        Ok(())
    }

    /// Decodes PNG or JPEG bytes (format sniffed from content) to RGB.
    pub fn decode(bytes: &[u8]) -> Result<Self, RasterError> {
        let img = ImageReader::new(Cursor::new(bytes))
            .with_guessed_format()?
            .decode()
            .map_err(|e| RasterError::Decode(e.to_string()))?;
        let rgb = img.to_rgb8();
        let (w, h) = rgb.dimensions();
        Self::new(h as usize, w as usize, 3, rgb.into_raw())
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Self, RasterError> {
        let bytes = std::fs::read(path)?;
        Self::decode(&bytes)
    }

    /// PNG encoding (grayscale or RGB, 8-bit).
    pub fn encode_png(&self) -> Result<Vec<u8>, RasterError> {
        let mut out = Cursor::new(Vec::new());
        let (w, h) = (self.width as u32, self.height as u32);
        let res = if self.channels == 1 {
            image::GrayImage::from_raw(w, h, self.data.clone())
                .expect("length checked at construction")
                .write_to(&mut out, ImageFormat::Png)
        } else {
            image::RgbImage::from_raw(w, h, self.data.clone())
                .expect("length checked at construction")
                .write_to(&mut out, ImageFormat::Png)
        };
        res.map_err(|e| RasterError::Encode(e.to_string()))?;
        Ok(out.into_inner())
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<(), RasterError> {
        std::fs::write(path, self.encode_png()?)?;
        Ok(())
    }
}

/// Axis-aligned pixel rectangle; `(x0, y0)` is the inclusive top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct AxisRect {
    pub x0: usize,
    pub y0: usize,
    pub width: usize,
    pub height: usize,
}

impl AxisRect {
    pub fn new(x0: usize, y0: usize, width: usize, height: usize) -> Self {
        Self { x0, y0, width, height }
    }

    pub fn fits_within(&self, height: usize, width: usize) -> bool {
        self.width >= 1 && self.height >= 1 && self.x0 + self.width <= width && self.y0 + self.height <= height
    }
}

/// Rec. 601 luma weights.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

#[inline]
pub fn luma_of(r: u8, g: u8, b: u8) -> f64 {
    LUMA_WEIGHTS[0] * r as f64 + LUMA_WEIGHTS[1] * g as f64 + LUMA_WEIGHTS[2] * b as f64
}

#[inline]
pub(crate) fn round_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Single-channel luma plane of an RGB raster.
pub fn to_luma(img: &Raster) -> Result<Raster, RasterError> {
    img.require_channels(3)?;
    let data = img
        .data
        .chunks_exact(3)
        .map(|p| round_u8(luma_of(p[0], p[1], p[2])))
        .collect();
    Ok(Raster {
        height: img.height,
        width: img.width,
        channels: 1,
        data,
    })
}

/// Copies the pixels inside `rect`.
pub fn crop(img: &Raster, rect: AxisRect) -> Result<Raster, RasterError> {
    if !rect.fits_within(img.height, img.width) {
        return Err(RasterError::OutOfBounds {
            rect,
            height: img.height,
            width: img.width,
        });
    }
    let c = img.channels;
    let mut data = Vec::with_capacity(rect.width * rect.height * c);
    for row in rect.y0..rect.y0 + rect.height {
        let start = (row * img.width + rect.x0) * c;
        data.extend_from_slice(&img.data[start..start + rect.width * c]);
    }
    Ok(Raster {
        height: rect.height,
        width: rect.width,
        channels: c,
        data,
    })
}

/// Rotates counter-clockwise (as displayed) by `angle` degrees about the
/// image center. The output covers the rotated bounding box; uncovered
/// samples take `fill`. Multiples of 90 degrees are exact index permutations.
pub fn rotate(img: &Raster, angle: f64, fill: u8) -> Raster {
    let quarter = angle / 90.0;
    if quarter.fract() == 0.0 && quarter.is_finite() {
        let turns = (quarter as i64).rem_euclid(4) as u8;
        return rotate_quarter_turns(img, turns);
    }
    rotate_bilinear(img, angle, fill)
}

/// Exact counter-clockwise rotation by `turns` x 90 degrees.
pub fn rotate_quarter_turns(img: &Raster, turns: u8) -> Raster {
    let (h, w, c) = (img.height, img.width, img.channels);
    let turns = turns % 4;
    if turns == 0 {
        return img.clone();
    }
    let (oh, ow) = if turns == 2 { (h, w) } else { (w, h) };
    let mut data = vec![0u8; img.data.len()];
    for r in 0..oh {
        for col in 0..ow {
            let (sr, sc) = match turns {
                1 => (col, w - 1 - r),
                2 => (h - 1 - r, w - 1 - col),
                _ => (h - 1 - col, r),
            };
            let src = (sr * w + sc) * c;
            let dst = (r * ow + col) * c;
            data[dst..dst + c].copy_from_slice(&img.data[src..src + c]);
        }
    }
    Raster {
        height: oh,
        width: ow,
        channels: c,
        data,
    }
}

fn rotate_bilinear(img: &Raster, angle: f64, fill: u8) -> Raster {
    let (h, w, c) = (img.height, img.width, img.channels);
    let theta = angle.to_radians();
    let (sin, cos) = theta.sin_cos();
    let ow = ((w as f64) * cos.abs() + (h as f64) * sin.abs() - 1e-6).ceil().max(1.0) as usize;
    let oh = ((w as f64) * sin.abs() + (h as f64) * cos.abs() - 1e-6).ceil().max(1.0) as usize;
    let (icx, icy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let (ocx, ocy) = ((ow as f64 - 1.0) / 2.0, (oh as f64 - 1.0) / 2.0);
    let mut data = vec![fill; oh * ow * c];
    let sample = |r: isize, col: isize, ch: usize| -> f64 {
        if r < 0 || col < 0 || r >= h as isize || col >= w as isize {
            fill as f64
        } else {
            img.data[(r as usize * w + col as usize) * c + ch] as f64
        }
    };
    for r in 0..oh {
        let dy = r as f64 - ocy;
        for col in 0..ow {
            let dx = col as f64 - ocx;
            // inverse mapping: rotate the output offset by -angle
            let sx = dx * cos - dy * sin + icx;
            let sy = dx * sin + dy * cos + icy;
            if sx <= -1.0 || sy <= -1.0 || sx >= w as f64 || sy >= h as f64 {
                continue;
            }
            let (x0, y0) = (sx.floor(), sy.floor());
            let (fx, fy) = (sx - x0, sy - y0);
            let (x0, y0) = (x0 as isize, y0 as isize);
            for ch in 0..c {
                let top = sample(y0, x0, ch) * (1.0 - fx) + sample(y0, x0 + 1, ch) * fx;
                let bottom = sample(y0 + 1, x0, ch) * (1.0 - fx) + sample(y0 + 1, x0 + 1, ch) * fx;
                data[(r * ow + col) * c + ch] = round_u8(top * (1.0 - fy) + bottom * fy);
            }
        }
    }
    Raster {
        height: oh,
        width: ow,
        channels: c,
        data,
    }
}

/// Bilinear resize with half-pixel centers and edge clamping.
pub fn resize_bilinear(img: &Raster, out_h: usize, out_w: usize) -> Raster {
    let (h, w, c) = (img.height, img.width, img.channels);
    if h == out_h && w == out_w {
        return img.clone();
    }
    let sy = h as f64 / out_h as f64;
    let sx = w as f64 / out_w as f64;
    let axis = |dst: usize, scale: f64, extent: usize| -> (usize, usize, f64) {
        let src = ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, (extent - 1) as f64);
        let i0 = src.floor() as usize;
        let i1 = (i0 + 1).min(extent - 1);
        (i0, i1, src - i0 as f64)
    };
    let cols: Vec<_> = (0..out_w).map(|x| axis(x, sx, w)).collect();
    let mut data = vec![0u8; out_h * out_w * c];
    for r in 0..out_h {
        let (y0, y1, fy) = axis(r, sy, h);
        for (col, &(x0, x1, fx)) in cols.iter().enumerate() {
            for ch in 0..c {
                let p = |y: usize, x: usize| img.data[(y * w + x) * c + ch] as f64;
                let top = p(y0, x0) * (1.0 - fx) + p(y0, x1) * fx;
                let bottom = p(y1, x0) * (1.0 - fx) + p(y1, x1) * fx;
                data[(r * out_w + col) * c + ch] = round_u8(top * (1.0 - fy) + bottom * fy);
            }
        }
    }
    Raster {
        height: out_h,
        width: out_w,
        channels: c,
        data,
    }
}

/// Centers the image on a zero canvas of side `max(h, w)`, then resizes to
/// `side x side`.
pub fn pad_square_resize(img: &Raster, side: usize) -> Result<Raster, RasterError> {
    if img.is_empty() || side == 0 {
        return Err(RasterError::Empty);
    }
    let (h, w, c) = (img.height, img.width, img.channels);
    let s = h.max(w);
    let (top, left) = ((s - h) / 2, (s - w) / 2);
    let mut canvas = Raster::filled(s, s, c, 0);
    for row in 0..h {
        let src = row * w * c;
        let dst = ((row + top) * s + left) * c;
        canvas.data[dst..dst + w * c].copy_from_slice(&img.data[src..src + w * c]);
    }
    Ok(resize_bilinear(&canvas, side, side))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(h: usize, w: usize, c: usize) -> Raster {
        let data = (0..h * w * c).map(|i| (i * 7 % 256) as u8).collect();
        Raster::new(h, w, c, data).unwrap()
    }

    #[test]
    fn luma_examples() {
        let img = Raster::new(1, 3, 3, vec![255, 255, 255, 0, 0, 0, 255, 0, 0]).unwrap();
        let l = to_luma(&img).unwrap();
        // scalar oracle for the red pixel
        let red = (0.299f64 * 255.0).round() as u8;
        assert_eq!(l.data(), &[255, 0, red]);
        assert_eq!(red, 76);
    }

    #[test]
    fn luma_rejects_gray() {
        let g = Raster::filled(2, 2, 1, 9);
        assert!(matches!(to_luma(&g), Err(RasterError::InvalidChannels { .. })));
    }

    #[test]
    fn rotate_zero_is_identity() {
        let img = ramp(5, 7, 3);
        assert_eq!(rotate(&img, 0.0, 0), img);
    }

    #[test]
    fn rotate_90_matches_permutation() {
        // 2x3 single channel: [[a b c], [d e f]]
        let img = Raster::new(2, 3, 1, vec![1, 2, 3, 4, 5, 6]).unwrap();
        let r = rotate(&img, 90.0, 0);
        assert_eq!((r.height(), r.width()), (3, 2));
        // counter-clockwise: right column becomes the top row
        let mut expect = vec![0u8; 6];
        for i in 0..3 {
            for j in 0..2 {
                expect[i * 2 + j] = img.get(j, 2 - i, 0);
            }
        }
        assert_eq!(r.data(), &expect[..]);
        assert_eq!(r.data(), &[3, 6, 2, 5, 1, 4]);
    }

    #[test]
    fn rotate_180_involution_and_negative_turns() {
        let img = ramp(4, 9, 3);
        assert_eq!(rotate(&rotate(&img, 180.0, 0), 180.0, 0), img);
        assert_eq!(rotate(&rotate(&img, 270.0, 0), -270.0, 0), img);
        assert_eq!(rotate(&img, -90.0, 0), rotate(&img, 270.0, 0));
    }

    #[test]
    fn rotate_arbitrary_grows_bounds() {
        let img = Raster::filled(10, 20, 1, 200);
        let r = rotate(&img, 30.0, 0);
        let c = 30f64.to_radians().cos();
        let s = 30f64.to_radians().sin();
        assert_eq!(r.width(), (20.0 * c + 10.0 * s).ceil() as usize);
        assert_eq!(r.height(), (20.0 * s + 10.0 * c).ceil() as usize);
        // center keeps its value, corners are fill
        assert_eq!(r.get(r.height() / 2, r.width() / 2, 0), 200);
        assert_eq!(r.get(0, 0, 0), 0);
    }

    #[test]
    fn crop_cases() {
        let img = ramp(6, 8, 3);
        assert_eq!(crop(&img, img.bounds()).unwrap(), img);
        let one = crop(&img, AxisRect::new(0, 0, 1, 1)).unwrap();
        assert_eq!(one.data(), img.pixel(0, 0));
        let part = crop(&img, AxisRect::new(2, 1, 3, 4)).unwrap();
        assert_eq!((part.height(), part.width()), (4, 3));
        assert_eq!(part.pixel(3, 2), img.pixel(4, 4));
        assert!(matches!(
            crop(&img, AxisRect::new(6, 0, 3, 1)),
            Err(RasterError::OutOfBounds { .. })
        ));
    }

    #[test]
    fn pad_square_identity_when_already_target() {
        let img = ramp(150, 150, 3);
        assert_eq!(pad_square_resize(&img, 150).unwrap(), img);
    }

    #[test]
    fn pad_square_centers_wide_image() {
        // 150 tall, 300 wide: 75 zero rows above and below before resize
        let img = Raster::filled(150, 300, 1, 255);
        let out = pad_square_resize(&img, 300).unwrap();
        assert_eq!((out.height(), out.width()), (300, 300));
        for r in 0..300 {
            let expect = if (75..225).contains(&r) { 255 } else { 0 };
            assert_eq!(out.get(r, 10, 0), expect, "row {r}");
        }
    }

    #[test]
    fn pad_square_resize_keeps_aspect_band() {
        // 50 tall, 100 wide -> content fills a 150x75 central band
        let img = Raster::filled(50, 100, 3, 255);
        let out = pad_square_resize(&img, 150).unwrap();
        assert_eq!((out.height(), out.width(), out.channels()), (150, 150, 3));
        assert_eq!(out.get(0, 0, 0), 0);
        assert_eq!(out.get(149, 149, 2), 0);
        assert_eq!(out.get(36, 75, 0), 0);
        assert_eq!(out.get(39, 75, 0), 255);
        assert_eq!(out.get(110, 75, 0), 255);
        assert_eq!(out.get(113, 75, 0), 0);
        // the band edges land half a source pixel off the grid: measure its mass
        let mass: f64 = (0..150).map(|r| out.get(r, 75, 0) as f64 / 255.0).sum();
        assert!((mass - 75.0).abs() < 0.05, "{mass}");
    }

    #[test]
    fn png_round_trip() {
        let img = ramp(5, 4, 3);
        let bytes = img.encode_png().unwrap();
        assert_eq!(Raster::decode(&bytes).unwrap(), img);
    }

    #[test]
    fn decode_garbage_fails() {
        assert!(Raster::decode(b"not an image").is_err());
    }
}
