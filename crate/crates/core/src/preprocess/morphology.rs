//! Binary closing with a rectangular structuring element.

use super::mask::BinaryMask;

/// Side of the closing element.
pub const CLOSE_KERNEL: usize = 7;

/// Dilation by a `k x k` rectangle centred on each pixel; outside is background.
pub fn dilate(mask: &BinaryMask, k: usize) -> BinaryMask {
    sweep(mask, k, false)
}

/// Erosion by a `k x k` rectangle; outside counts as foreground.
pub fn erode(mask: &BinaryMask, k: usize) -> BinaryMask {
    sweep(mask, k, true)
}

// Separable pass: a rectangle is the Minkowski sum of a row and a column.
fn sweep(mask: &BinaryMask, k: usize, erode: bool) -> BinaryMask {
    let (h, w) = (mask.height(), mask.width());
    let r = (k / 2) as isize;
    let combine = |acc: bool, v: bool| if erode { acc && v } else { acc || v };
    let mut horiz = vec![false; h * w];
    for row in 0..h {
        for c in 0..w as isize {
            let mut acc = erode;
            for d in -r..=r {
                let cc = c + d;
                let v = if cc < 0 || cc >= w as isize {
                    erode
                } else {
                    mask.get(row, cc as usize)
                };
                acc = combine(acc, v);
            }
            horiz[row * w + c as usize] = acc;
        }
    }
    let mut out = BinaryMask::new(h, w);
    for row in 0..h as isize {
        for c in 0..w {
            let mut acc = erode;
            for d in -r..=r {
                let rr = row + d;
                let v = if rr < 0 || rr >= h as isize {
                    erode
                } else {
                    horiz[rr as usize * w + c]
                };
                acc = combine(acc, v);
            }
            out.set(row as usize, c, acc);
        }
    }
    out
}

/// Dilation followed by erosion with the 7x7 rectangle.
pub fn morph_close(mask: &BinaryMask) -> BinaryMask {
    close_with(mask, CLOSE_KERNEL)
}

pub fn close_with(mask: &BinaryMask, k: usize) -> BinaryMask {
    erode(&dilate(mask, k), k)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_stays_empty() {
        assert!(morph_close(&BinaryMask::new(10, 12)).is_empty());
    }

    #[test]
    fn three_pixel_gap_is_bridged() {
        let m = BinaryMask::from_fn(20, 30, |r, c| {
            (6..12).contains(&r) && ((5..10).contains(&c) || (13..19).contains(&c))
        });
        let closed = morph_close(&m);
        let expect = BinaryMask::from_fn(20, 30, |r, c| (6..12).contains(&r) && (5..19).contains(&c));
        assert_eq!(closed, expect);
    }

    #[test]
    fn shape_near_border_extends_to_it() {
        // dilation reaches the frame and erosion treats outside as foreground
        let m = BinaryMask::from_fn(20, 20, |r, c| (2..8).contains(&r) && (8..12).contains(&c));
        let closed = morph_close(&m);
        assert!(closed.get(0, 9));
        assert!(!closed.get(0, 5));
    }

    #[test]
    fn border_touching_block_is_preserved() {
        let m = BinaryMask::from_fn(8, 8, |r, c| r < 4 && c < 4);
        assert_eq!(morph_close(&m), m);
    }
}
