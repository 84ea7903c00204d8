//! End-to-end text spotter: shared conv backbone, dense detection head
//! regressing rectification control points, differentiable rectification of
//! per-instance features, and a parallel recognition branch. Recognition
//! gradients can reach the detection offsets through the rectification warp.

mod eval;
mod infer;
mod model;
mod train;

pub use eval::{
    evaluate, feature_shift_diagnostic, frechet_distance, iou_bin_analysis, BinAccuracy,
    EvalItem, Metrics,
};
pub use infer::{decode_columns, infer, TextPrediction};
pub use model::{
    backbone_backward, backbone_forward, detection_backward, detection_forward, init_params,
    recognition_backward, recognition_forward, BackboneCache, DetLevel, DetectionCache,
    DetectionOut, RecCache,
};
pub use train::{
    column_labels, compute_gradients, train, train_step, LossComponents, TrainSchedule,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpotError {
    #[error("numerics: {0}")]
    Nn(#[from] crate::nn::NnError),
    #[error("rectification: {0}")]
    Rect(#[from] crate::rectify::RectError),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("need at least {needed} instances, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("duplicate image id '{0}'")]
    DuplicateImage(String),
}

/// Which parts of the graph the recognition loss reaches, mirroring the
/// three ablation configurations: feature path only (control points are
/// ground truth), full back-propagation with the offset regression loss
/// disabled, and the full joint objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainMode {
    GtExtract,
    RecBpNoRcp,
    Joint,
}

impl TrainMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            TrainMode::GtExtract => "gt-extract",
            TrainMode::RecBpNoRcp => "rec-bp-no-rcp",
            TrainMode::Joint => "joint",
        }
    }

    /// Whether the rectifier consumes predicted control points.
    pub fn uses_predicted_points(&self) -> bool {
        !matches!(self, TrainMode::GtExtract)
    }

    pub fn lambda_rcp(&self, configured: f64) -> f64 {
        match self {
            TrainMode::RecBpNoRcp => 0.0,
            _ => configured,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpotterConfig {
    pub n_rcp: usize,
    /// Positive pixels sampled per image for the recognition branch.
    pub n_text: usize,
    pub lambda_det: f64,
    pub lambda_rec: f64,
    pub lambda_rcp: f64,
    pub charset: String,
    pub max_len: usize,
    pub strides: Vec<usize>,
    pub channels: usize,
    pub arm_out: (usize, usize),
    pub det_thresh: f64,
    pub rec_thresh: f64,
    pub nms_iou: f64,
}

impl Default for SpotterConfig {
    fn default() -> Self {
        SpotterConfig {
            n_rcp: 8,
            n_text: 64,
            lambda_det: 1.0,
            lambda_rec: 1.0,
            lambda_rcp: 0.5,
            charset: crate::synth::CHARSET.to_string(),
            max_len: 32,
            strides: vec![4, 8, 16],
            channels: 16,
            arm_out: (8, 32),
            det_thresh: 0.4,
            rec_thresh: 0.9,
            nms_iou: 0.5,
        }
    }
}

impl SpotterConfig {
    /// Charset size plus the pad class.
    pub fn n_class(&self) -> usize {
        self.charset.chars().count() + 1
    }

    pub fn pad_class(&self) -> usize {
        self.charset.chars().count()
    }

    pub fn validate(&self) -> Result<(), SpotError> {
        if self.n_rcp < 2 {
            return Err(SpotError::Config("n_rcp must be >= 2".into()));
        }
        if self.arm_out.1 < self.max_len {
            return Err(SpotError::Config(format!(
                "rectified width {} cannot decode max_len {}",
                self.arm_out.1, self.max_len
            )));
        }
        if self.arm_out.0 % 4 != 0 {
            return Err(SpotError::Config(
                "rectified height must be divisible by 4".into(),
            ));
        }
        if self.strides.is_empty() || self.strides.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SpotError::Config("strides must be ascending".into()));
        }
        if self.strides[0] < 4 || self.strides.iter().any(|s| !s.is_power_of_two()) {
            return Err(SpotError::Config(
                "strides must be powers of two, minimum 4".into(),
            ));
        }
        for t in [self.det_thresh, self.rec_thresh, self.nms_iou] {
            if !(0.0..=1.0).contains(&t) {
                return Err(SpotError::Config("thresholds must be in [0, 1]".into()));
            }
        }
        Ok(())
    }

    pub fn level_specs(&self) -> Vec<crate::targets::LevelSpec> {
        crate::targets::default_levels(&self.strides)
    }
}
