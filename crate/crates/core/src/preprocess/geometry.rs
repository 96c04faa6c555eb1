//! Convex hulls, orientation from second moments and minimum-area rotated
//! rectangles.
//!
//! Points are `(x, y)` with `x` = column and `y` = row (image axes, y down)
//! unless stated otherwise.

use super::contours::Contour;
use super::mask::BinaryMask;
use super::PreprocessError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }

    fn dot(self, o: Point) -> f64 {
        self.x * o.x + self.y * o.y
    }
}

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Andrew's monotone chain. Returns hull vertices without collinear points,
/// counter-clockwise in a y-up frame. Degenerate inputs yield 1 or 2 points.
pub fn convex_hull(points: &[Point]) -> Vec<Point> {
    let mut pts: Vec<Point> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() <= 2 {
        return pts;
    }
    let mut lower: Vec<Point> = Vec::with_capacity(pts.len());
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Point> = Vec::with_capacity(pts.len());
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    if lower.len() == 2 && lower[0] == lower[1] {
        lower.pop();
    }
    lower
}

/// Convex hull of the foreground pixel centers of a mask. Only the
/// leftmost and rightmost pixel of each row can be hull vertices.
pub fn mask_hull(mask: &BinaryMask) -> Vec<Point> {
    let mut pts = Vec::new();
    for r in 0..mask.height() {
        let row = &mask.bits()[r * mask.width()..(r + 1) * mask.width()];
        if let Some(first) = row.iter().position(|&b| b) {
            let last = row.iter().rposition(|&b| b).unwrap();
            pts.push(Point::new(first as f64, r as f64));
            if last != first {
                pts.push(Point::new(last as f64, r as f64));
            }
        }
    }
    convex_hull(&pts)
}

/// Pixels whose centers lie inside or on the convex polygon `hull`.
pub fn fill_hull(hull: &[Point], height: usize, width: usize) -> BinaryMask {
    let mut out = BinaryMask::new(height, width);
    if hull.is_empty() {
        return out;
    }
    const TOL: f64 = 1e-9;
    let ymin = hull.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
    let ymax = hull.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
    let r0 = (ymin - TOL).ceil().max(0.0) as usize;
    let r1 = ((ymax + TOL).floor() as usize).min(height.saturating_sub(1));
    for r in r0..=r1 {
        let y = r as f64;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..hull.len() {
            let a = hull[i];
            let b = hull[(i + 1) % hull.len()];
            let (ya, yb) = (a.y.min(b.y), a.y.max(b.y));
            if y < ya - TOL || y > yb + TOL {
                continue;
            }
            if (b.y - a.y).abs() < TOL {
                lo = lo.min(a.x.min(b.x));
                hi = hi.max(a.x.max(b.x));
            } else {
                let x = a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y);
                lo = lo.min(x);
                hi = hi.max(x);
            }
        }
        if lo > hi {
            continue;
        }
        let c0 = (lo - TOL).ceil().max(0.0) as usize;
        let c1 = (hi + TOL).floor();
        if c1 < 0.0 {
            continue;
        }
        let c1 = (c1 as usize).min(width.saturating_sub(1));
        for c in c0..=c1 {
            out.set(r, c, true);
        }
    }
    out
}

/// Orientation of the foreground's convex hull region in degrees,
/// counter-clockwise as displayed, in (-90, 90]. Isotropic shapes give 0.
pub fn orientation_angle(mask: &BinaryMask) -> Result<f64, PreprocessError> {
    if mask.is_empty() {
        return Err(PreprocessError::NoForeground);
    }
    let region = fill_hull(&mask_hull(mask), mask.height(), mask.width());
    // y axis points up so that the angle reads counter-clockwise
    let pts: Vec<(f64, f64)> = region.foreground().map(|(r, c)| (c as f64, -(r as f64))).collect();
    let n = pts.len() as f64;
    let (mx, my) = pts.iter().fold((0.0, 0.0), |(sx, sy), &(x, y)| (sx + x, sy + y));
    let (mx, my) = (mx / n, my / n);
    let (mut mu20, mut mu02, mut mu11) = (0.0, 0.0, 0.0);
    for &(x, y) in &pts {
        let (dx, dy) = (x - mx, y - my);
        mu20 += dx * dx;
        mu02 += dy * dy;
        mu11 += dx * dy;
    }
    let tol = 1e-9 * n * n;
    if (mu20 - mu02).abs() < tol && mu11.abs() < tol {
        return Ok(0.0);
    }
    let theta = 0.5 * (2.0 * mu11).atan2(mu20 - mu02);
    let mut deg = theta.to_degrees();
    if deg <= -90.0 {
        deg += 180.0;
    }
    Ok(deg)
}

/// Rotated rectangle in pixel coordinates. `len_a` runs along `angle`
/// (degrees counter-clockwise from the +column axis, in [0, 90)), `len_b`
/// perpendicular to it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotatedRect {
    pub center_row: f64,
    pub center_col: f64,
    pub len_a: f64,
    pub len_b: f64,
    pub angle: f64,
}

impl RotatedRect {
    pub fn diagonal(&self) -> f64 {
        self.len_a.hypot(self.len_b)
    }

    pub fn area(&self) -> f64 {
        self.len_a * self.len_b
    }

    /// Corners as (row, col).
    pub fn corners(&self) -> [(f64, f64); 4] {
        let t = self.angle.to_radians();
        // unit vectors in (col, row) with row pointing down
        let u = (t.cos(), -t.sin());
        let v = (t.sin(), t.cos());
        let (ha, hb) = (self.len_a / 2.0, self.len_b / 2.0);
        let mut out = [(0.0, 0.0); 4];
        for (i, (sa, sb)) in [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)].iter().enumerate() {
            let col = self.center_col + sa * ha * u.0 + sb * hb * v.0;
            let row = self.center_row + sa * ha * u.1 + sb * hb * v.1;
            out[i] = (row, col);
        }
        out
    }
}

fn rect_from_frame(origin: Point, u: Point, min_u: f64, max_u: f64, max_n: f64) -> RotatedRect {
    // inward normal of a counter-clockwise (y-up) hull edge
    let n = Point::new(-u.y, u.x);
    let mid_u = 0.5 * (min_u + max_u);
    let cx = origin.x + u.x * mid_u + n.x * max_n * 0.5;
    let cy = origin.y + u.y * mid_u + n.y * max_n * 0.5;
    let along = max_u - min_u;
    // direction of u as displayed (row axis flipped)
    let mut angle = (-u.y).atan2(u.x).to_degrees();
    let (mut len_a, mut len_b) = (along, max_n.abs());
    angle = angle.rem_euclid(180.0);
    if angle >= 90.0 {
        angle -= 90.0;
        std::mem::swap(&mut len_a, &mut len_b);
    }
    if angle > 90.0 - 1e-9 {
        angle = 0.0;
        std::mem::swap(&mut len_a, &mut len_b);
    }
    RotatedRect {
        center_row: cy,
        center_col: cx,
        len_a,
        len_b,
        angle,
    }
}

/// Minimum-area enclosing rectangle of a point set (x = col, y = row) by
/// rotating calipers over its convex hull.
pub fn min_area_rect_points(points: &[Point]) -> RotatedRect {
    assert!(!points.is_empty(), "min_area_rect needs at least one point");
    let hull = convex_hull(points);
    match hull.len() {
        1 => RotatedRect {
            center_row: hull[0].y,
            center_col: hull[0].x,
            len_a: 0.0,
            len_b: 0.0,
            angle: 0.0,
        },
        2 => {
            let d = hull[1].sub(hull[0]);
            let len = d.dot(d).sqrt();
            let u = Point::new(d.x / len, d.y / len);
            rect_from_frame(hull[0], u, 0.0, len, 0.0)
        }
        h => {
            let at = |i: usize| hull[i % h];
            let mut best: Option<(f64, RotatedRect)> = None;
            let (mut far, mut right, mut left) = (1usize, 1usize, 0usize);
            for i in 0..h {
                let a = at(i);
                let d = at(i + 1).sub(a);
                let len = d.dot(d).sqrt();
                let u = Point::new(d.x / len, d.y / len);
                let n = Point::new(-u.y, u.x);
                let proj_u = |k: usize| at(k).sub(a).dot(u);
                let proj_n = |k: usize| at(k).sub(a).dot(n);
                let mut steps = 0;
                while steps < h && proj_n(far + 1) >= proj_n(far) {
                    far += 1;
                    steps += 1;
                }
                steps = 0;
                while steps < h && proj_u(right + 1) >= proj_u(right) {
                    right += 1;
                    steps += 1;
                }
                if i == 0 {
                    left = far;
                }
                steps = 0;
                while steps < h && proj_u(left + 1) <= proj_u(left) {
                    left += 1;
                    steps += 1;
                }
                let (min_u, max_u, max_n) = (proj_u(left), proj_u(right), proj_n(far));
                let area = (max_u - min_u) * max_n;
                if best.as_ref().map_or(true, |(b, _)| area < *b) {
                    best = Some((area, rect_from_frame(a, u, min_u, max_u, max_n)));
                }
            }
            best.expect("hull has edges").1
        }
    }
}

/// Minimum-area rectangle around a contour's pixel centers.
pub fn min_area_rect(contour: &Contour) -> RotatedRect {
    let pts: Vec<Point> = contour
        .points
        .iter()
        .map(|&(r, c)| Point::new(c as f64, r as f64))
        .collect();
    min_area_rect_points(&pts)
}

/// The rectangle with the longest diagonal; earliest index wins ties.
pub fn select_main_object(rects: &[RotatedRect]) -> Result<RotatedRect, PreprocessError> {
    let mut best: Option<&RotatedRect> = None;
    for r in rects {
        if best.map_or(true, |b| r.diagonal() > b.diagonal()) {
            best = Some(r);
        }
    }
    best.copied().ok_or(PreprocessError::NoObject)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{rotate, Raster};

    fn rect_mask(h: usize, w: usize, r0: usize, c0: usize, rh: usize, rw: usize) -> BinaryMask {
        BinaryMask::from_fn(h, w, |r, c| (r0..r0 + rh).contains(&r) && (c0..c0 + rw).contains(&c))
    }

    #[test]
    fn hull_of_square_with_interior_and_collinear_points() {
        let mut pts = vec![];
        for x in 0..=4 {
            for y in 0..=4 {
                pts.push(Point::new(x as f64, y as f64));
            }
        }
        let hull = convex_hull(&pts);
        assert_eq!(hull.len(), 4);
        let line = convex_hull(&[Point::new(0.0, 0.0), Point::new(1.0, 1.0), Point::new(2.0, 2.0)]);
        assert_eq!(line, vec![Point::new(0.0, 0.0), Point::new(2.0, 2.0)]);
    }

    #[test]
    fn axis_aligned_rectangle_has_zero_angle() {
        let m = rect_mask(60, 80, 20, 10, 10, 40);
        let a = orientation_angle(&m).unwrap();
        assert!(a.abs() <= 0.5, "{a}");
    }

    #[test]
    fn rotated_rectangle_angle_is_recovered() {
        let m = rect_mask(60, 80, 25, 20, 10, 40);
        for angle in [30.0, -30.0, 60.0, 12.5] {
            let rotated = rotate(&m.to_raster(), angle, 0);
            let rm = BinaryMask::from_fn(rotated.height(), rotated.width(), |r, c| rotated.get(r, c, 0) > 127);
            let est = orientation_angle(&rm).unwrap();
            assert!((est - angle).abs() <= 1.0, "{angle} -> {est}");
        }
    }

    #[test]
    fn disk_is_isotropic() {
        let m = BinaryMask::from_fn(41, 41, |r, c| {
            let (dr, dc) = (r as f64 - 20.0, c as f64 - 20.0);
            dr * dr + dc * dc <= 15.0 * 15.0
        });
        assert_eq!(orientation_angle(&m).unwrap(), 0.0);
    }

    #[test]
    fn empty_mask_has_no_orientation() {
        assert!(matches!(
            orientation_angle(&BinaryMask::new(4, 4)),
            Err(PreprocessError::NoForeground)
        ));
    }

    #[test]
    fn thin_line_orientation() {
        let img = Raster::filled(1, 30, 1, 255);
        let r = rotate(&img, 45.0, 0);
        let m = BinaryMask::from_fn(r.height(), r.width(), |y, x| r.get(y, x, 0) > 60);
        let a = orientation_angle(&m).unwrap();
        assert!((a - 45.0).abs() < 2.0, "{a}");
    }

    #[test]
    fn fill_hull_of_triangle() {
        let hull = convex_hull(&[Point::new(0.0, 0.0), Point::new(4.0, 0.0), Point::new(0.0, 4.0)]);
        let m = fill_hull(&hull, 5, 5);
        for r in 0..5 {
            for c in 0..5 {
                assert_eq!(m.get(r, c), r + c <= 4, "({r},{c})");
            }
        }
    }

    fn square_contour(side: usize) -> Contour {
        // border of a square whose corner points span `side`
        let mut pts = vec![];
        for c in 0..side {
            pts.push((0, c));
        }
        for r in 0..side {
            pts.push((r, side));
        }
        for c in (1..=side).rev() {
            pts.push((side, c));
        }
        for r in (1..=side).rev() {
            pts.push((r, 0));
        }
        Contour { points: pts }
    }

    #[test]
    fn square_rect() {
        let r = min_area_rect(&square_contour(10));
        assert!((r.len_a - 10.0).abs() <= 0.5 && (r.len_b - 10.0).abs() <= 0.5, "{r:?}");
        assert!((r.diagonal() - 200f64.sqrt()).abs() < 0.01);
        assert!((r.center_row - 5.0).abs() < 1e-9 && (r.center_col - 5.0).abs() < 1e-9);
        assert!(r.angle.abs() < 1e-9);
    }

    #[test]
    fn rotated_square_rect() {
        let s = 10.0 / 2f64.sqrt();
        let pts: Vec<Point> = [(0.0, -s), (s, 0.0), (0.0, s), (-s, 0.0)]
            .iter()
            .map(|&(x, y)| Point::new(x + 20.0, y + 20.0))
            .collect();
        let r = min_area_rect_points(&pts);
        assert!((r.len_a - 10.0).abs() <= 1.0 && (r.len_b - 10.0).abs() <= 1.0, "{r:?}");
        assert!((r.angle - 45.0).abs() < 1e-6, "{r:?}");
    }

    #[test]
    fn rect_corners_contain_points() {
        let pts = [
            Point::new(1.0, 2.0),
            Point::new(7.0, 3.0),
            Point::new(5.0, 9.0),
            Point::new(2.0, 6.0),
        ];
        let r = min_area_rect_points(&pts);
        let corners = r.corners();
        // every point lies inside the rectangle (same side of all edges)
        for p in pts {
            for i in 0..4 {
                let (r0, c0) = corners[i];
                let (r1, c1) = corners[(i + 1) % 4];
                let side = (c1 - c0) * (p.y - r0) - (r1 - r0) * (p.x - c0);
                let (rn, cn) = corners[(i + 2) % 4];
                let ref_side = (c1 - c0) * (rn - r0) - (r1 - r0) * (cn - c0);
                assert!(side * ref_side >= -1e-6);
            }
        }
    }

    #[test]
    fn degenerate_rects() {
        let one = min_area_rect(&Contour { points: vec![(3, 4)] });
        assert_eq!((one.len_a, one.len_b), (0.0, 0.0));
        assert_eq!((one.center_row, one.center_col), (3.0, 4.0));
        let two = min_area_rect(&Contour {
            points: vec![(0, 0), (0, 6)],
        });
        assert_eq!(two.len_b, 0.0);
        assert!((two.len_a - 6.0).abs() < 1e-12);
    }

    fn with_diag(d: f64) -> RotatedRect {
        RotatedRect {
            center_row: 0.0,
            center_col: 0.0,
            len_a: d,
            len_b: 0.0,
            angle: 0.0,
        }
    }

    #[test]
    fn select_longest_diagonal() {
        let a = with_diag(14.1);
        let b = with_diag(50.0);
        assert_eq!(select_main_object(&[a, b]).unwrap(), b);
        let mut c = with_diag(50.0);
        c.center_row = 9.0;
        assert_eq!(select_main_object(&[b, c]).unwrap(), b);
        assert_eq!(select_main_object(&[a]).unwrap(), a);
        assert!(matches!(select_main_object(&[]), Err(PreprocessError::NoObject)));
    }
}
