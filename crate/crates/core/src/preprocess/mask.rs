use crate::raster::Raster;

use super::PreprocessError;

/// One bit per pixel, foreground = true.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl std::fmt::Debug for BinaryMask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "BinaryMask {}x{}", self.height, self.width)?;
        for r in 0..self.height {
            let line: String = (0..self.width)
                .map(|c| if self.get(r, c) { '#' } else { '.' })
                .collect();
            writeln!(f, "{line}")?;
        }
        Ok(())
    }
}

impl BinaryMask {
    pub fn new(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            bits: vec![false; height * width],
        }
    }

    pub fn from_bits(height: usize, width: usize, bits: Vec<bool>) -> Self {
        assert_eq!(bits.len(), height * width, "mask length mismatch");
        Self { height, width, bits }
    }

    /// Builds a mask from `f(row, col)`.
    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                bits.push(f(r, c));
            }
        }
        Self { height, width, bits }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.bits[row * self.width + col] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// Foreground pixels as (row, col), row-major.
    pub fn foreground(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| (i / w, i % w))
    }

    /// 0/255 grayscale rendering, used for stage dumps.
    pub fn to_raster(&self) -> Raster {
        let data = self.bits.iter().map(|&b| if b { 255 } else { 0 }).collect();
        Raster::new(self.height, self.width, 1, data).expect("mask dimensions are consistent")
    }
}

/// Otsu threshold of a grayscale raster: the level `t` maximising the
/// between-class variance of `{<= t}` and `{> t}`; first maximum wins.
pub fn otsu_threshold(gray: &Raster) -> Result<u8, PreprocessError> {
    if gray.channels() != 1 {
        return Err(PreprocessError::InvalidChannels {
            expected: 1,
            actual: gray.channels(),
        });
    }
    if gray.is_empty() {
        return Err(PreprocessError::DegenerateImage);
    }
    let mut hist = [0u64; 256];
    for &v in gray.data() {
        hist[v as usize] += 1;
    }
    let total = gray.data().len() as f64;
    let sum_all: f64 = hist.iter().enumerate().map(|(i, &n)| i as f64 * n as f64).sum();

    let mut best: Option<(u8, f64)> = None;
    let (mut w0, mut sum0) = (0.0f64, 0.0f64);
    for t in 0..255usize {
        w0 += hist[t] as f64;
        sum0 += t as f64 * hist[t] as f64;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let mean0 = sum0 / w0;
        let mean1 = (sum_all - sum0) / w1;
        let between = w0 * w1 * (mean0 - mean1) * (mean0 - mean1);
        if best.map_or(true, |(_, b)| between > b) {
            best = Some((t as u8, between));
        }
    }
    best.map(|(t, _)| t).ok_or(PreprocessError::DegenerateImage)
}

/// Otsu binarization; foreground is strictly above the threshold.
pub fn foreground_mask(gray: &Raster) -> Result<BinaryMask, PreprocessError> {
    let t = otsu_threshold(gray)?;
    Ok(BinaryMask {
        height: gray.height(),
        width: gray.width(),
        bits: gray.data().iter().map(|&v| v > t).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Exhaustive oracle: between-class variance from explicit class lists.
    fn oracle_mask(gray: &Raster) -> Option<Vec<bool>> {
        let px: Vec<f64> = gray.data().iter().map(|&v| v as f64).collect();
        let mut best: Option<(u8, f64)> = None;
        for t in 0u8..=254 {
            let lo: Vec<f64> = px.iter().copied().filter(|&v| v <= t as f64).collect();
            let hi: Vec<f64> = px.iter().copied().filter(|&v| v > t as f64).collect();
            if lo.is_empty() || hi.is_empty() {
                continue;
            }
            let n = px.len() as f64;
            let (w0, w1) = (lo.len() as f64 / n, hi.len() as f64 / n);
            let m0 = lo.iter().sum::<f64>() / lo.len() as f64;
            let m1 = hi.iter().sum::<f64>() / hi.len() as f64;
            let var = w0 * w1 * (m0 - m1).powi(2);
            if best.map_or(true, |(_, b)| var > b + 1e-9) {
                best = Some((t, var));
            }
        }
        best.map(|(t, _)| gray.data().iter().map(|&v| v > t).collect())
    }

    #[test]
    fn half_black_half_white() {
        let data: Vec<u8> = (0..64).map(|i| if i % 2 == 0 { 0 } else { 255 }).collect();
        let gray = Raster::new(8, 8, 1, data.clone()).unwrap();
        let m = foreground_mask(&gray).unwrap();
        let expect: Vec<bool> = data.iter().map(|&v| v == 255).collect();
        assert_eq!(m.bits(), &expect[..]);
        assert_eq!(Some(expect), oracle_mask(&gray));
    }

    #[test]
    fn constant_is_degenerate() {
        let gray = Raster::filled(5, 5, 1, 77);
        assert!(matches!(foreground_mask(&gray), Err(PreprocessError::DegenerateImage)));
    }

    #[test]
    fn bright_square_on_dark_field() {
        let mut data = vec![0u8; 20 * 20];
        for (i, v) in data.iter_mut().enumerate() {
            let (r, c) = (i / 20, i % 20);
            *v = if (5..12).contains(&r) && (6..15).contains(&c) {
                200 + (i % 7) as u8
            } else {
                10 + (i % 11) as u8
            };
        }
        let gray = Raster::new(20, 20, 1, data).unwrap();
        let m = foreground_mask(&gray).unwrap();
        let square = BinaryMask::from_fn(20, 20, |r, c| (5..12).contains(&r) && (6..15).contains(&c));
        assert_eq!(m, square);
        assert_eq!(Some(square.bits().to_vec()), oracle_mask(&gray));
    }

    #[test]
    fn otsu_matches_oracle_on_random_images() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let n = rng.random_range(2..40);
            let data: Vec<u8> = (0..n).map(|_| rng.random()).collect();
            let gray = Raster::new(1, n, 1, data).unwrap();
            match foreground_mask(&gray) {
                Ok(m) => assert_eq!(Some(m.bits().to_vec()), oracle_mask(&gray)),
                Err(_) => assert_eq!(oracle_mask(&gray), None),
            }
        }
    }
}
