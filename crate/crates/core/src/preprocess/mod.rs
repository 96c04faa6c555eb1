//! Frame-to-network-input pipeline.
//!
//! Six stages, in order: belt crop, orientation correction, object
//! segmentation and crop, Sobel sharpening, luma histogram equalization,
//! zero-pad to square and resize. Each stage is also exposed on its own.

pub mod canny;
pub mod contours;
pub mod enhance;
pub mod geometry;
pub mod mask;
pub mod morphology;

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::raster::{self, AxisRect, Raster, RasterError};

pub use canny::canny;
pub use contours::{find_contours, Contour};
pub use enhance::{equalize_hist_luma, sobel_sharpen, Histogram};
pub use geometry::{min_area_rect, orientation_angle, select_main_object, RotatedRect};
pub use mask::{foreground_mask, BinaryMask};
pub use morphology::morph_close;

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error("expected {expected} channel(s), got {actual}")]
    InvalidChannels { expected: usize, actual: usize },
    #[error("image has zero intensity variance")]
    DegenerateImage,
    #[error("mask has no foreground pixels")]
    NoForeground,
    #[error("no object found in frame")]
    NoObject,
    #[error("invalid canny thresholds: low {low} must be below high {high}")]
    InvalidThresholds { low: f64, high: f64 },
    #[error("invalid pipeline config: {0}")]
    Config(String),
    #[error(transparent)]
    Raster(#[from] RasterError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Region of the frame covering the conveyor belt.
    pub belt_crop: AxisRect,
    pub canny_low: f64,
    pub canny_high: f64,
    /// Side of the square closing element.
    pub close_kernel: usize,
    pub sharpen_gain: f64,
    pub target_side: usize,
    pub rotation_correction: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            belt_crop: AxisRect::new(0, 0, 640, 480),
            canny_low: 50.0,
            canny_high: 150.0,
            close_kernel: morphology::CLOSE_KERNEL,
            sharpen_gain: 1.0,
            target_side: 150,
            rotation_correction: true,
        }
    }
}

impl PipelineConfig {
    /// Default parameters with the belt crop covering a whole `height x width` frame.
    pub fn for_frame(height: usize, width: usize) -> Self {
        Self {
            belt_crop: AxisRect::new(0, 0, width, height),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), PreprocessError> {
        if !(self.canny_low < self.canny_high) {
            return Err(PreprocessError::InvalidThresholds {
                low: self.canny_low,
                high: self.canny_high,
            });
        }
        if self.target_side == 0 {
            return Err(PreprocessError::Config("target_side must be at least 1".into()));
        }
        if self.close_kernel == 0 || self.close_kernel % 2 == 0 {
            return Err(PreprocessError::Config("close_kernel must be odd".into()));
        }
        if self.belt_crop.width == 0 || self.belt_crop.height == 0 {
            return Err(PreprocessError::Config("belt_crop must be non-empty".into()));
        }
        if !self.sharpen_gain.is_finite() {
            return Err(PreprocessError::Config("sharpen_gain must be finite".into()));
        }
        Ok(())
    }

    /// Stable content hash, used to key preprocessed-image caches.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}

/// Every intermediate product of one pipeline run.
#[derive(Debug, Clone)]
pub struct PipelineTrace {
    pub cropped: Raster,
    /// Estimated orientation in degrees, `None` when correction was off or skipped.
    pub angle: Option<f64>,
    pub rotated: Raster,
    pub edges: BinaryMask,
    pub closed: BinaryMask,
    pub rects: Vec<RotatedRect>,
    pub object: RotatedRect,
    pub segmented: Raster,
    pub sharpened: Raster,
    pub equalized: Raster,
    pub output: Raster,
}

impl PipelineTrace {
    /// The six stage outputs with their dump file names.
    pub fn stages(&self) -> [(&'static str, &Raster); 6] {
        [
            ("01_crop.png", &self.cropped),
            ("02_rotate.png", &self.rotated),
            ("03_segment.png", &self.segmented),
            ("04_sharpen.png", &self.sharpened),
            ("05_equalize.png", &self.equalized),
            ("06_resize.png", &self.output),
        ]
    }

    /// Writes the six stage PNGs into `dir`.
    pub fn dump(&self, dir: &Path) -> Result<(), PreprocessError> {
        std::fs::create_dir_all(dir).map_err(RasterError::from)?;
        for (name, img) in self.stages() {
            img.save_png(dir.join(name))?;
        }
        Ok(())
    }
}

/// Orientation estimate of the cropped frame, or `None` if the frame has no
/// usable foreground.
pub fn estimate_orientation(img: &Raster) -> Result<Option<f64>, PreprocessError> {
    let gray = raster::to_luma(img)?;
    match foreground_mask(&gray) {
        Ok(mask) => Ok(Some(orientation_angle(&mask)?)),
        Err(PreprocessError::DegenerateImage) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Axis-aligned pixel box covering a rotated rectangle, clipped to the image.
pub fn bounding_box(rect: &RotatedRect, height: usize, width: usize) -> AxisRect {
    let corners = rect.corners();
    let fold = |f: fn(f64, f64) -> f64, init: f64, sel: fn(&(f64, f64)) -> f64| corners.iter().map(sel).fold(init, f);
    let rmin = fold(f64::min, f64::INFINITY, |p| p.0);
    let rmax = fold(f64::max, f64::NEG_INFINITY, |p| p.0);
    let cmin = fold(f64::min, f64::INFINITY, |p| p.1);
    let cmax = fold(f64::max, f64::NEG_INFINITY, |p| p.1);
    // corners are pixel centres; tolerance absorbs trig round-off
    let r0 = (rmin + 1e-6).floor().clamp(0.0, (height - 1) as f64) as usize;
    let r1 = (rmax - 1e-6).ceil().clamp(0.0, (height - 1) as f64) as usize;
    let c0 = (cmin + 1e-6).floor().clamp(0.0, (width - 1) as f64) as usize;
    let c1 = (cmax - 1e-6).ceil().clamp(0.0, (width - 1) as f64) as usize;
    AxisRect::new(c0, r0, c1 - c0 + 1, r1 - r0 + 1)
}

/// Clears edge pixels whose Sobel support reaches into the zero fill that
/// rotating a `height x width` crop by `-theta` leaves in the corners.
fn drop_fill_edges(edges: &mut BinaryMask, height: usize, width: usize, theta: f64) {
    let coverage = raster::rotate(&Raster::filled(height, width, 1, 255), -theta, 0);
    let covered = BinaryMask::from_fn(coverage.height(), coverage.width(), |r, c| coverage.get(r, c, 0) == 255);
    let inner = morphology::erode(&covered, 5);
    for r in 0..edges.height() {
        for c in 0..edges.width() {
            if !inner.get(r, c) {
                edges.set(r, c, false);
            }
        }
    }
}

/// Runs all six stages and keeps the intermediates.
pub fn run_pipeline(frame: &Raster, cfg: &PipelineConfig) -> Result<PipelineTrace, PreprocessError> {
    cfg.validate()?;
    if frame.channels() != 3 {
        return Err(PreprocessError::InvalidChannels {
            expected: 3,
            actual: frame.channels(),
        });
    }
    let cropped = raster::crop(frame, cfg.belt_crop)?;

    let (angle, rotated) = if cfg.rotation_correction {
        match estimate_orientation(&cropped)? {
            Some(theta) => (Some(theta), raster::rotate(&cropped, -theta, 0)),
            None => {
                log::debug!("zero-variance crop, orientation correction skipped");
                (None, cropped.clone())
            }
        }
    } else {
        (None, cropped.clone())
    };

    let gray = raster::to_luma(&rotated)?;
    let mut edges = canny(&gray, cfg.canny_low, cfg.canny_high)?;
    if let Some(theta) = angle {
        drop_fill_edges(&mut edges, cropped.height(), cropped.width(), theta);
    }
    let closed = morphology::close_with(&edges, cfg.close_kernel);
    let rects: Vec<RotatedRect> = find_contours(&closed).iter().map(min_area_rect).collect();
    let object = select_main_object(&rects)?;
    let bbox = bounding_box(&object, rotated.height(), rotated.width());
    let segmented = raster::crop(&rotated, bbox)?;

    let sharpened = sobel_sharpen(&segmented, cfg.sharpen_gain)?;
    let equalized = equalize_hist_luma(&sharpened)?;
    let output = raster::pad_square_resize(&equalized, cfg.target_side)?;

    Ok(PipelineTrace {
        cropped,
        angle,
        rotated,
        edges,
        closed,
        rects,
        object,
        segmented,
        sharpened,
        equalized,
        output,
    })
}

/// Frame to `target_side x target_side x 3` network input.
pub fn preprocess(frame: &Raster, cfg: &PipelineConfig) -> Result<Raster, PreprocessError> {
    run_pipeline(frame, cfg).map(|t| t.output)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame_with_box(h: usize, w: usize) -> Raster {
        let mut img = Raster::filled(h, w, 3, 15);
        for r in 30..70 {
            for c in 50..130 {
                img.set(r, c, 0, 200);
                img.set(r, c, 1, 60 + (c % 40) as u8);
                img.set(r, c, 2, 30);
            }
        }
        img
    }

    #[test]
    fn output_is_target_square() {
        let frame = frame_with_box(120, 180);
        let cfg = PipelineConfig::for_frame(120, 180);
        let out = preprocess(&frame, &cfg).unwrap();
        assert_eq!((out.height(), out.width(), out.channels()), (150, 150, 3));
    }

    #[test]
    fn black_frame_has_no_object() {
        let frame = Raster::filled(60, 80, 3, 0);
        let cfg = PipelineConfig::for_frame(60, 80);
        assert!(matches!(preprocess(&frame, &cfg), Err(PreprocessError::NoObject)));
    }

    #[test]
    fn deterministic() {
        let frame = frame_with_box(120, 180);
        let cfg = PipelineConfig::for_frame(120, 180);
        assert_eq!(preprocess(&frame, &cfg).unwrap(), preprocess(&frame, &cfg).unwrap());
    }

    #[test]
    fn crop_larger_than_frame_fails() {
        let frame = frame_with_box(120, 180);
        let cfg = PipelineConfig::default();
        assert!(matches!(
            preprocess(&frame, &cfg),
            Err(PreprocessError::Raster(RasterError::OutOfBounds { .. }))
        ));
    }

    #[test]
    fn segment_crop_tracks_object() {
        let frame = frame_with_box(120, 180);
        let cfg = PipelineConfig {
            rotation_correction: false,
            ..PipelineConfig::for_frame(120, 180)
        };
        let t = run_pipeline(&frame, &cfg).unwrap();
        let (h, w) = (t.segmented.height(), t.segmented.width());
        // box is 40x80; closing and edge placement move the border by a pixel at most
        assert!((39..=42).contains(&h), "{h}");
        assert!((79..=82).contains(&w), "{w}");
    }

    #[test]
    fn rotated_frame_border_is_not_an_object() {
        use rand::SeedableRng;
        let size = crate::synth::FrameSize::default();
        let cfg = PipelineConfig::for_frame(size.height, size.width);
        for seed in 0..20 {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let frame = crate::synth::render_frame(seed as usize % 10, size, &mut rng);
            let t = run_pipeline(&frame, &cfg).unwrap();
            let seg = t.segmented.height() * t.segmented.width();
            let rot = t.rotated.height() * t.rotated.width();
            assert!(2 * seg < rot, "seed {seed}: {seg} of {rot} pixels, angle {:?}", t.angle);
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = PipelineConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.canny_low = 200.0;
        assert!(cfg.validate().is_err());
        let cfg = PipelineConfig {
            target_side: 0,
            ..PipelineConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn fingerprint_changes_with_config() {
        let a = PipelineConfig::default();
        let b = PipelineConfig {
            sharpen_gain: 0.5,
            ..a.clone()
        };
        assert_eq!(a.fingerprint(), a.clone().fingerprint());
        assert_ne!(a.fingerprint(), b.fingerprint());
    }
}
