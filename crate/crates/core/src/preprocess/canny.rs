//! Sobel gradients and Canny edge detection (no pre-blur).

use crate::raster::Raster;

use super::mask::BinaryMask;
use super::PreprocessError;

/// Horizontal and vertical 3x3 Sobel responses with replicated borders.
/// `gx` is positive for intensity increasing to the right, `gy` for
/// intensity increasing downwards.
pub fn sobel(gray: &Raster) -> (Vec<f64>, Vec<f64>) {
    let (h, w) = (gray.height(), gray.width());
    let d = gray.data();
    let px = |r: isize, c: isize| {
        let r = r.clamp(0, h as isize - 1) as usize;
        let c = c.clamp(0, w as isize - 1) as usize;
        d[r * w + c] as f64
    };
    let mut gx = vec![0.0; h * w];
    let mut gy = vec![0.0; h * w];
    for r in 0..h as isize {
        for c in 0..w as isize {
            let i = r as usize * w + c as usize;
            gx[i] = (px(r - 1, c + 1) + 2.0 * px(r, c + 1) + px(r + 1, c + 1))
                - (px(r - 1, c - 1) + 2.0 * px(r, c - 1) + px(r + 1, c - 1));
            gy[i] = (px(r + 1, c - 1) + 2.0 * px(r + 1, c) + px(r + 1, c + 1))
                - (px(r - 1, c - 1) + 2.0 * px(r - 1, c) + px(r - 1, c + 1));
        }
    }
    (gx, gy)
}

/// Euclidean Sobel gradient magnitude.
pub fn sobel_magnitude(gray: &Raster) -> Vec<f64> {
    let (gx, gy) = sobel(gray);
    gx.iter().zip(&gy).map(|(x, y)| x.hypot(*y)).collect()
}

// tan(22.5 deg) and tan(67.5 deg)
const TAN_22_5: f64 = 0.414_213_562_373_095_03;
const TAN_67_5: f64 = 2.414_213_562_373_095;

/// Offset (d_row, d_col) of the neighbour along the quantised gradient.
fn gradient_step(gx: f64, gy: f64) -> (isize, isize) {
    let (ax, ay) = (gx.abs(), gy.abs());
    if ay <= ax * TAN_22_5 {
        (0, if gx >= 0.0 { 1 } else { -1 })
    } else if ay > ax * TAN_67_5 {
        (if gy >= 0.0 { 1 } else { -1 }, 0)
    } else {
        // diagonal: follow the sign of both components
        (if gy >= 0.0 { 1 } else { -1 }, if gx >= 0.0 { 1 } else { -1 })
    }
}

/// Non-maximum suppression along the quantised gradient direction. A pixel
/// survives when it is strictly greater than the neighbour behind it and
/// not smaller than the one ahead, so plateaus two pixels wide keep one.
pub fn non_max_suppression(mag: &[f64], gx: &[f64], gy: &[f64], h: usize, w: usize) -> Vec<f64> {
    let get = |r: isize, c: isize| {
        if r < 0 || c < 0 || r >= h as isize || c >= w as isize {
            0.0
        } else {
            mag[r as usize * w + c as usize]
        }
    };
    let mut out = vec![0.0; h * w];
    for r in 0..h as isize {
        for c in 0..w as isize {
            let i = r as usize * w + c as usize;
            let m = mag[i];
            if m == 0.0 {
                continue;
            }
            let (dr, dc) = gradient_step(gx[i], gy[i]);
            let ahead = get(r + dr, c + dc);
            let behind = get(r - dr, c - dc);
            if m > behind && m >= ahead {
                out[i] = m;
            }
        }
    }
    out
}

/// Keeps pixels `>= high` and pixels `>= low` 8-connected to a kept pixel.
pub fn hysteresis(strength: &[f64], h: usize, w: usize, low: f64, high: f64) -> BinaryMask {
    let mut out = BinaryMask::new(h, w);
    let mut stack = Vec::new();
    for r in 0..h {
        for c in 0..w {
            if strength[r * w + c] >= high && !out.get(r, c) {
                out.set(r, c, true);
                stack.push((r, c));
                while let Some((pr, pc)) = stack.pop() {
                    for dr in -1isize..=1 {
                        for dc in -1isize..=1 {
                            let (nr, nc) = (pr as isize + dr, pc as isize + dc);
                            if nr < 0 || nc < 0 || nr >= h as isize || nc >= w as isize {
                                continue;
                            }
                            let (nr, nc) = (nr as usize, nc as usize);
                            if !out.get(nr, nc) && strength[nr * w + nc] >= low {
                                out.set(nr, nc, true);
                                stack.push((nr, nc));
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Canny edges on the raw Sobel magnitude scale (a 0-255 step has
/// magnitude 1020).
pub fn canny(gray: &Raster, low: f64, high: f64) -> Result<BinaryMask, PreprocessError> {
    if gray.channels() != 1 {
        return Err(PreprocessError::InvalidChannels {
            expected: 1,
            actual: gray.channels(),
        });
    }
    if !(low < high) {
        return Err(PreprocessError::InvalidThresholds { low, high });
    }
    let (h, w) = (gray.height(), gray.width());
    let (gx, gy) = sobel(gray);
    let mag: Vec<f64> = gx.iter().zip(&gy).map(|(x, y)| x.hypot(*y)).collect();
    let thin = non_max_suppression(&mag, &gx, &gy, h, w);
    Ok(hysteresis(&thin, h, w, low, high))
}
