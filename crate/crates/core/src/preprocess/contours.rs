//! Outer-border following on binary masks (Suzuki-Abe), one contour per
//! 8-connected foreground component.

use super::mask::BinaryMask;

/// Ordered outer-border pixels of a component as (row, col).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Contour {
    pub points: Vec<(usize, usize)>,
}

// Neighbour offsets (d_row, d_col), counter-clockwise as displayed starting east.
const DIRS: [(isize, isize); 8] = [(0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1), (1, 0), (1, 1)];

fn dir_index(dr: isize, dc: isize) -> usize {
    DIRS.iter()
        .position(|&d| d == (dr, dc))
        .expect("offset between 8-neighbours")
}

/// Traces the outer border of every 8-connected foreground component.
/// Hole borders are followed to label the image but are not reported.
pub fn find_contours(mask: &BinaryMask) -> Vec<Contour> {
    let (h, w) = (mask.height(), mask.width());
    // one-pixel background frame so every neighbour lookup is in range
    let (ph, pw) = (h + 2, w + 2);
    let mut f = vec![0i32; ph * pw];
    for (r, c) in mask.foreground() {
        f[(r + 1) * pw + c + 1] = 1;
    }
    let at = |r: isize, c: isize| (r as usize) * pw + c as usize;

    let mut contours = Vec::new();
    let mut nbd: i32 = 1;
    for i in 1..(ph - 1) as isize {
        for j in 1..(pw - 1) as isize {
            let v = f[at(i, j)];
            if v == 0 {
                continue;
            }
            let (is_outer, start_from) = if v == 1 && f[at(i, j - 1)] == 0 {
                (true, (i, j - 1))
            } else if v >= 1 && f[at(i, j + 1)] == 0 {
                (false, (i, j + 1))
            } else {
                continue;
            };
            nbd += 1;
            let mut points = Vec::new();

            // clockwise search around (i, j) starting at start_from
            let d0 = dir_index(start_from.0 - i, start_from.1 - j);
            let first = (0..8)
                .map(|k| (d0 + 8 - k) % 8)
                .map(|d| (i + DIRS[d].0, j + DIRS[d].1))
                .find(|&(r, c)| f[at(r, c)] != 0);
            let Some((i1, j1)) = first else {
                f[at(i, j)] = -nbd;
                if is_outer {
                    contours.push(Contour {
                        points: vec![(i as usize - 1, j as usize - 1)],
                    });
                }
                continue;
            };

            let (mut i2, mut j2) = (i1, j1);
            let (mut i3, mut j3) = (i, j);
            loop {
                points.push((i3 as usize - 1, j3 as usize - 1));
                // counter-clockwise search around (i3, j3), starting after (i2, j2)
                let d2 = dir_index(i2 - i3, j2 - j3);
                let mut east_examined_zero = false;
                let mut next = None;
                for k in 1..=8 {
                    let d = (d2 + k) % 8;
                    let (r, c) = (i3 + DIRS[d].0, j3 + DIRS[d].1);
                    if f[at(r, c)] != 0 {
                        next = Some((r, c));
                        break;
                    }
                    if d == 0 {
                        east_examined_zero = true;
                    }
                }
                let (i4, j4) = next.expect("border pixel has a nonzero neighbour");
                if east_examined_zero {
                    f[at(i3, j3)] = -nbd;
                } else if f[at(i3, j3)] == 1 {
                    f[at(i3, j3)] = nbd;
                }
                if (i4, j4) == (i, j) && (i3, j3) == (i1, j1) {
                    break;
                }
                (i2, j2) = (i3, j3);
                (i3, j3) = (i4, j4);
            }
            if is_outer {
                contours.push(Contour { points });
            }
        }
    }
    contours
}
