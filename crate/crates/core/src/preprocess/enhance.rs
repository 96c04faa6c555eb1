//! Sobel sharpening and luma histogram equalization.

use crate::raster::{luma_of, round_u8, to_luma, Raster};

use super::canny::sobel_magnitude;
use super::PreprocessError;

/// Adds `gain` times the luma Sobel magnitude to every channel, clamped.
pub fn sobel_sharpen(img: &Raster, gain: f64) -> Result<Raster, PreprocessError> {
    if img.channels() != 3 {
        return Err(PreprocessError::InvalidChannels {
            expected: 3,
            actual: img.channels(),
        });
    }
    let mut out = img.clone();
    if gain == 0.0 {
        return Ok(out);
    }
    let luma = to_luma(img)?;
    let mag = sobel_magnitude(&luma);
    for (px, m) in out.data_mut().chunks_exact_mut(3).zip(mag) {
        if m == 0.0 {
            continue;
        }
        for v in px.iter_mut() {
            *v = round_u8(*v as f64 + gain * m);
        }
    }
    Ok(out)
}

/// Luma histogram normalised to a total mass of 255, with its exclusive
/// prefix integral used as the equalization lookup table.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub counts: [u64; 256],
    pub normalized: [f64; 256],
    pub integral: [f64; 256],
}

impl Histogram {
    pub fn of_luma(luma: &[u8]) -> Self {
        let mut counts = [0u64; 256];
        for &v in luma {
            counts[v as usize] += 1;
        }
        let total = luma.len() as f64;
        let mut normalized = [0.0; 256];
        for (n, &c) in normalized.iter_mut().zip(counts.iter()) {
            *n = c as f64 * 255.0 / total;
        }
        let mut integral = [0.0; 256];
        let mut acc = 0.0;
        for i in 0..256 {
            integral[i] = acc;
            acc += normalized[i];
        }
        Self {
            counts,
            normalized,
            integral,
        }
    }

    /// Rounded lookup table `old luma -> new luma`.
    pub fn lut(&self) -> [u8; 256] {
        let mut lut = [0u8; 256];
        for (l, &v) in lut.iter_mut().zip(self.integral.iter()) {
            *l = round_u8(v);
        }
        lut
    }
}

/// Equalizes the luma channel in YCbCr space; chroma is left unchanged.
pub fn equalize_hist_luma(img: &Raster) -> Result<Raster, PreprocessError> {
    if img.channels() != 3 {
        return Err(PreprocessError::InvalidChannels {
            expected: 3,
            actual: img.channels(),
        });
    }
    if img.is_empty() {
        return Ok(img.clone());
    }
    let luma = to_luma(img)?;
    let lut = Histogram::of_luma(luma.data()).lut();
    let mut out = img.clone();
    for (px, &l) in out.data_mut().chunks_exact_mut(3).zip(luma.data()) {
        let y = luma_of(px[0], px[1], px[2]);
        let shift = lut[l as usize] as f64 - y;
        // R, G, B each equal Y plus a chroma-only term, so swapping Y shifts all three
        for v in px.iter_mut() {
            *v = round_u8(*v as f64 + shift);
        }
    }
    Ok(out)
}
