//! Differentiable rectification: predicted control points define a
//! thin-plate-spline warp whose sampling grid is a fixed linear map of the
//! points, followed by bilinear sampling of the feature map. Gradients flow
//! to both the features and the control points.

mod sampler;
mod tps;

pub use sampler::{bilinear_sample, bilinear_sample_backward};
pub use tps::{build_tps_basis, gen_grid, gen_grid_backward, tps_basis_rows, SamplingGrid, TpsBasis};

use thiserror::Error;

use crate::geometry::{Point2, RectCtrlPoints};
use crate::nn::Tensor;

#[derive(Debug, Error)]
pub enum RectError {
    #[error("singular thin-plate-spline system: {0}")]
    SingularSystem(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("argument out of domain: {0}")]
    Domain(String),
}

/// Pick the pyramid level whose stride best matches the instance scale:
/// one output row of the rectified crop should cover about one feature cell.
pub fn select_level(strides: &[usize], mean_height_px: f64, h_out: usize) -> usize {
    let want = mean_height_px / h_out as f64;
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, &s) in strides.iter().enumerate() {
        let d = (s as f64 - want).abs();
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

/// Convert image-pixel coordinates into the coordinate frame of a feature map
/// with the given stride (cell centers at (col + 0.5) * stride).
pub fn to_feature_frame(p: Point2, stride: usize) -> Point2 {
    Point2::new(p.x / stride as f64 - 0.5, p.y / stride as f64 - 0.5)
}

/// Rectify one instance from a feature pyramid: select a level, rescale the
/// control points into that level's frame, generate the grid and sample.
/// Returns the selected level index, the grid (needed for backward) and the
/// rectified C x H_out x W_out feature.
pub fn arm_extract_one(
    pyramid: &[(usize, &Tensor)],
    points: &RectCtrlPoints,
    basis: &TpsBasis,
) -> Result<(usize, SamplingGrid, Tensor), RectError> {
    if points.n_rcp() != basis.n_rcp {
        return Err(RectError::Shape(format!(
            "instance has {} control points per side, basis expects {}",
            points.n_rcp(),
            basis.n_rcp
        )));
    }
    let strides: Vec<usize> = pyramid.iter().map(|(s, _)| *s).collect();
    let level = select_level(&strides, points.mean_height(), basis.out_size.0);
    let stride = pyramid[level].0;
    let scaled: Vec<Point2> = points
        .flat()
        .iter()
        .map(|&p| to_feature_frame(p, stride))
        .collect();
    let grid = gen_grid(basis, &scaled)?;
    let out = bilinear_sample(pyramid[level].1, &grid)?;
    Ok((level, grid, out))
}

/// Batch convenience over instances; levels are selected independently.
pub fn arm_extract(
    pyramid: &[(usize, &Tensor)],
    instances: &[RectCtrlPoints],
    basis: &TpsBasis,
) -> Result<Vec<Tensor>, RectError> {
    instances
        .iter()
        .map(|inst| arm_extract_one(pyramid, inst, basis).map(|(_, _, t)| t))
        .collect()
}
