//! Generated corpus of coloured geometric shapes on a dark belt, one shape
//! and colour per item, for checks that need a learnable dataset without
//! the photographic corpus.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{Catalog, CatalogItem, DatasetError};
use crate::raster::Raster;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Disk,
    Square,
    Triangle,
    Cross,
    Ring,
    Hexagon,
    Flower,
    Bar,
    Ell,
    HalfDisk,
}

impl Shape {
    pub const ALL: [Shape; 10] = [
        Shape::Disk,
        Shape::Square,
        Shape::Triangle,
        Shape::Cross,
        Shape::Ring,
        Shape::Hexagon,
        Shape::Flower,
        Shape::Bar,
        Shape::Ell,
        Shape::HalfDisk,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Shape::Disk => "disk",
            Shape::Square => "square",
            Shape::Triangle => "triangle",
            Shape::Cross => "cross",
            Shape::Ring => "ring",
            Shape::Hexagon => "hexagon",
            Shape::Flower => "flower",
            Shape::Bar => "bar",
            Shape::Ell => "ell",
            Shape::HalfDisk => "half-disk",
        }
    }

    /// Membership in shape coordinates, unit circumradius, `v` up.
    pub fn contains(self, u: f64, v: f64) -> bool {
        let r2 = u * u + v * v;
        let s3 = 3f64.sqrt();
        match self {
            Shape::Disk => r2 <= 0.81,
            Shape::Square => u.abs() <= 0.7 && v.abs() <= 0.7,
            Shape::Triangle => v >= -0.5 && s3 * u + v <= 1.0 && -s3 * u + v <= 1.0,
            Shape::Cross => (u.abs() <= 0.28 && v.abs() <= 0.95) || (v.abs() <= 0.28 && u.abs() <= 0.95),
            Shape::Ring => (0.3025..=0.9025).contains(&r2),
            Shape::Hexagon => {
                let (a, b) = (u.abs(), v.abs());
                b <= 0.95 * s3 / 2.0 && s3 * a + b <= s3 * 0.95
            }
            Shape::Flower => r2.sqrt() <= 0.55 + 0.4 * (5.0 * v.atan2(u)).cos(),
            Shape::Bar => u.abs() <= 0.95 && v.abs() <= 0.33,
            Shape::Ell => {
                let leg = |a: f64, b: f64| (-0.8..=-0.25).contains(&a) && (-0.8..=0.8).contains(&b);
                leg(u, v) || leg(v, u)
            }
            Shape::HalfDisk => r2 <= 0.9025 && v >= -0.1,
        }
    }
}

const COLORS: [[f64; 3]; 10] = [
    [210.0, 45.0, 40.0],
    [45.0, 180.0, 65.0],
    [55.0, 85.0, 225.0],
    [225.0, 205.0, 45.0],
    [205.0, 55.0, 190.0],
    [45.0, 195.0, 205.0],
    [235.0, 135.0, 35.0],
    [225.0, 225.0, 225.0],
    [125.0, 65.0, 175.0],
    [160.0, 100.0, 55.0],
];

pub const MAX_CLASSES: usize = 10;

/// Frame geometry of generated images.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameSize {
    pub height: usize,
    pub width: usize,
}

impl Default for FrameSize {
    fn default() -> Self {
        Self {
            height: 120,
            width: 160,
        }
    }
}

/// One frame of item `class`: random pose, scale, brightness and noise.
pub fn render_frame<R: Rng + ?Sized>(class: usize, size: FrameSize, rng: &mut R) -> Raster {
    assert!(class < MAX_CLASSES, "at most {MAX_CLASSES} generated classes");
    let shape = Shape::ALL[class];
    let (h, w) = (size.height, size.width);
    let short = h.min(w) as f64;
    let scale = rng.random_range(0.2..0.3) * short;
    let margin = scale + 8.0;
    let cy = rng.random_range(margin..(h as f64 - margin).max(margin + 1e-3));
    let cx = rng.random_range(margin..(w as f64 - margin).max(margin + 1e-3));
    let theta: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let (sin, cos) = theta.sin_cos();
    let gain = rng.random_range(0.85..1.1);
    let base = rng.random_range(18.0..35.0);
    let color = COLORS[class].map(|c| c * gain);

    let mut data = Vec::with_capacity(h * w * 3);
    for r in 0..h {
        for c in 0..w {
            // 2x2 supersampled coverage
            let mut hits = 0;
            for (dy, dx) in [(-0.25, -0.25), (-0.25, 0.25), (0.25, -0.25), (0.25, 0.25)] {
                let x = (c as f64 + dx - cx) / scale;
                let y = -(r as f64 + dy - cy) / scale;
                let (u, v) = (cos * x + sin * y, -sin * x + cos * y);
                hits += shape.contains(u, v) as u32;
            }
            let cover = hits as f64 / 4.0;
            for ch in color {
                let noise = rng.random_range(-5.0..5.0);
                let v = base * (1.0 - cover) + ch * cover + noise;
                data.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    Raster::new(h, w, 3, data).expect("buffer sized above")
}

/// `per_class` frames of each of the first `classes` items, class-major.
pub fn generate(classes: usize, per_class: usize, size: FrameSize, seed: u64) -> Vec<(Raster, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..classes)
        .flat_map(|c| (0..per_class).map(move |_| c))
        .map(|c| (render_frame(c, size, &mut rng), c))
        .collect()
}

pub fn catalog(classes: usize) -> Catalog {
    let items = (0..classes.min(MAX_CLASSES))
        .map(|c| CatalogItem {
            id: c,
            dir: format!("{c:02}_{}", Shape::ALL[c].name()),
            name: format!("{} {}", color_name(c), Shape::ALL[c].name()),
            unit_price: 150 + 95 * c as u64,
        })
        .collect();
    Catalog::new("USD", items).expect("generated catalog is valid")
}

fn color_name(c: usize) -> &'static str {
    [
        "red", "green", "blue", "yellow", "magenta", "cyan", "orange", "white", "purple", "brown",
    ][c]
}

/// Writes `root/<dir>/<nnnn>.png` for every generated frame plus
/// `root/catalog.json`, returning the catalog.
pub fn write_corpus(
    root: impl AsRef<Path>,
    classes: usize,
    per_class: usize,
    size: FrameSize,
    seed: u64,
) -> Result<Catalog, DatasetError> {
    let root = root.as_ref();
    let cat = catalog(classes);
    let mut counters = vec![0usize; classes];
    for (img, c) in generate(classes, per_class, size, seed) {
        let dir = root.join(&cat.items[c].dir);
        std::fs::create_dir_all(&dir).map_err(|e| DatasetError::io(&dir, e))?;
        let path = dir.join(format!("{:04}.png", counters[c]));
        counters[c] += 1;
        img.save_png(&path).map_err(|e| DatasetError::Example {
            path: path.clone(),
            reason: e.to_string(),
        })?;
    }
    cat.save(root.join("catalog.json"))?;
    Ok(cat)
}
