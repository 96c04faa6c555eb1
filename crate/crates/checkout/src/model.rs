//! Frame-to-probabilities identification.

use arc_core::dataset::images_to_tensor;
use arc_core::nn::{Network, NnError};
use arc_core::preprocess::{preprocess, PipelineConfig, PreprocessError};
use arc_core::Raster;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("no object found: {0}")]
    NoObject(String),
    #[error("unusable frame: {0}")]
    BadFrame(String),
    #[error("classification failed: {0}")]
    Failed(String),
}

/// Maps a raw frame to one probability per catalog item.
pub trait Classifier: Send + Sync {
    fn classes(&self) -> usize;
    fn classify(&self, frame: &Raster) -> Result<Vec<f64>, ClassifyError>;
}

/// The preprocessing pipeline followed by the trained network.
pub struct NetworkClassifier {
    net: Network<f32>,
    /// Fixed pipeline; when absent each frame is taken whole.
    pipeline: Option<PipelineConfig>,
}

impl NetworkClassifier {
    pub fn new(net: Network<f32>, pipeline: Option<PipelineConfig>) -> Result<Self, ClassifyError> {
        let [c, h, w] = net.spec().input;
        if c != 3 || h != w {
            return Err(ClassifyError::Failed(format!("unsupported network input {c}x{h}x{w}")));
        }
        if let Some(p) = &pipeline {
            p.validate().map_err(|e| ClassifyError::Failed(e.to_string()))?;
            if p.target_side != h {
                return Err(ClassifyError::Failed(format!(
                    "pipeline output side {} differs from network input side {h}",
                    p.target_side
                )));
            }
        }
        Ok(Self { net, pipeline })
    }

    fn pipeline_for(&self, frame: &Raster) -> PipelineConfig {
        self.pipeline.clone().unwrap_or_else(|| PipelineConfig {
            target_side: self.net.spec().input[1],
            ..PipelineConfig::for_frame(frame.height(), frame.width())
        })
    }
}

impl Classifier for NetworkClassifier {
    fn classes(&self) -> usize {
        self.net.spec().classes
    }

    fn classify(&self, frame: &Raster) -> Result<Vec<f64>, ClassifyError> {
        let frame = match frame.channels() {
            3 => frame.clone(),
            1 => {
                let data = frame.data().iter().flat_map(|&v| [v, v, v]).collect();
                Raster::new(frame.height(), frame.width(), 3, data).map_err(|e| ClassifyError::Failed(e.to_string()))?
            }
            c => return Err(ClassifyError::BadFrame(format!("unsupported channel count {c}"))),
        };
        let img = preprocess(&frame, &self.pipeline_for(&frame)).map_err(|e| match e {
            PreprocessError::Raster(_) | PreprocessError::InvalidChannels { .. } => {
                ClassifyError::BadFrame(e.to_string())
            }
            e => ClassifyError::NoObject(e.to_string()),
        })?;
        let probs = self
            .net
            .infer(&images_to_tensor::<f32>(&[&img]))
            .map_err(|e: NnError| ClassifyError::Failed(e.to_string()))?;
        Ok(probs.data().iter().map(|&p| p as f64).collect())
    }
}
