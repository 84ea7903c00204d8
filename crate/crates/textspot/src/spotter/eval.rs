//! Evaluation: detection / end-to-end precision-recall-F, recognition
//! accuracy per detection-quality bin, and a feature-distribution shift
//! diagnostic between ground-truth and predicted rectification conditions.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};

use super::infer::TextPrediction;
use super::model::{backbone_forward, detection_forward};
use super::{SpotError, SpotterConfig};
use crate::geometry::{polygon_iou, TextPolygon};
use crate::nn::{ParamStore, Tensor};
use crate::rectify::{arm_extract_one, build_tps_basis};
use crate::synth::Sample;
use crate::targets::make_targets;

const IOU_RASTER: usize = 128;
const MATCH_IOU: f64 = 0.5;

#[derive(Debug, Clone)]
pub struct EvalItem {
    pub image_id: String,
    pub predictions: Vec<TextPrediction>,
    pub annotations: Vec<TextPolygon>,
}

#[derive(Debug, Clone, Copy)]
pub struct Metrics {
    pub det_precision: f64,
    pub det_recall: f64,
    pub det_f: f64,
    pub e2e_precision: f64,
    pub e2e_recall: f64,
    pub e2e_f: f64,
    pub n_pred: usize,
    pub n_gt: usize,
}

fn prf(tp: usize, n_pred: usize, n_gt: usize) -> (f64, f64, f64) {
    let p = if n_pred > 0 { tp as f64 / n_pred as f64 } else { 0.0 };
    let r = if n_gt > 0 { tp as f64 / n_gt as f64 } else { 0.0 };
    let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    (p, r, f)
}

/// Greedy one-to-one matching by descending IoU above the match threshold.
/// Returns (pred index, gt index, iou, exact transcript match).
fn match_pairs(
    predictions: &[TextPrediction],
    annotations: &[TextPolygon],
) -> Vec<(usize, usize, f64, bool)> {
    let mut pairs = Vec::new();
    for (pi, p) in predictions.iter().enumerate() {
        for (gi, g) in annotations.iter().enumerate() {
            let iou = polygon_iou(&p.polygon, &g.outline(), IOU_RASTER).iou;
            if iou > MATCH_IOU {
                pairs.push((pi, gi, iou));
            }
        }
    }
    pairs.sort_by(|a, b| b.2.total_cmp(&a.2));
    let mut used_p = vec![false; predictions.len()];
    let mut used_g = vec![false; annotations.len()];
    let mut out = Vec::new();
    for (pi, gi, iou) in pairs {
        if used_p[pi] || used_g[gi] {
            continue;
        }
        used_p[pi] = true;
        used_g[gi] = true;
        let text_ok = predictions[pi].transcript == annotations[gi].transcript;
        out.push((pi, gi, iou, text_ok));
    }
    out
}

/// Detection and end-to-end metrics at IoU 0.5 with greedy matching;
/// end-to-end additionally requires case-sensitive transcript equality.
/// Predictions with a blanked transcript (recognition below threshold)
/// count toward detection but are excluded from the end-to-end prediction
/// pool, mirroring the usual spotting protocol.
pub fn evaluate(items: &[EvalItem]) -> Result<Metrics, SpotError> {
    let mut seen = BTreeSet::new();
    for item in items {
        if !seen.insert(&item.image_id) {
            return Err(SpotError::DuplicateImage(item.image_id.clone()));
        }
    }
    let mut n_pred = 0;
    let mut n_read = 0;
    let mut n_gt = 0;
    let mut det_tp = 0;
    let mut e2e_tp = 0;
    for item in items {
        n_pred += item.predictions.len();
        n_read += item
            .predictions
            .iter()
            .filter(|p| !p.transcript.is_empty())
            .count();
        n_gt += item.annotations.len();
        for (_, _, _, text_ok) in match_pairs(&item.predictions, &item.annotations) {
            det_tp += 1;
            if text_ok {
                e2e_tp += 1;
            }
        }
    }
    let (det_p, det_r, det_f) = prf(det_tp, n_pred, n_gt);
    let (e2e_p, e2e_r, e2e_f) = prf(e2e_tp, n_read, n_gt);
    Ok(Metrics {
        det_precision: det_p,
        det_recall: det_r,
        det_f,
        e2e_precision: e2e_p,
        e2e_recall: e2e_r,
        e2e_f,
        n_pred,
        n_gt,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct BinAccuracy {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    /// None when the bin is empty.
    pub accuracy: Option<f64>,
}

/// Recognition accuracy of matched predictions, split by detection IoU bin.
/// `edges` are ascending within [0, 1]; bin i covers [edges[i], edges[i+1])
/// with the last bin closed at the top.
pub fn iou_bin_analysis(items: &[EvalItem], edges: &[f64]) -> Result<Vec<BinAccuracy>, SpotError> {
    if edges.len() < 2 || edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(SpotError::Config("bin edges must be ascending".into()));
    }
    if edges[0] < 0.0 || *edges.last().unwrap() > 1.0 + 1e-12 {
        return Err(SpotError::Config("bin edges must lie in [0, 1]".into()));
    }
    let n_bins = edges.len() - 1;
    let mut counts = vec![0usize; n_bins];
    let mut correct = vec![0usize; n_bins];
    for item in items {
        for (_, _, iou, text_ok) in match_pairs(&item.predictions, &item.annotations) {
            let mut bin = None;
            for i in 0..n_bins {
                let top_ok = if i + 1 == n_bins {
                    iou <= edges[i + 1] + 1e-12
                } else {
                    iou < edges[i + 1]
                };
                if iou >= edges[i] && top_ok {
                    bin = Some(i);
                    break;
                }
            }
            if let Some(i) = bin {
                counts[i] += 1;
                if text_ok {
                    correct[i] += 1;
                }
            }
        }
    }
    Ok((0..n_bins)
        .map(|i| BinAccuracy {
            lo: edges[i],
            hi: edges[i + 1],
            count: counts[i],
            accuracy: (counts[i] > 0).then(|| correct[i] as f64 / counts[i] as f64),
        })
        .collect())
}

/// Symmetric PSD square root via the eigendecomposition, clamping tiny
/// negative eigenvalues from round-off.
fn sqrtm_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let sqrt_vals = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|&l| l.max(0.0).sqrt()),
    );
    &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals) * eig.eigenvectors.transpose()
}

fn mean_and_cov(set: &[Vec<f64>]) -> (DVector<f64>, DMatrix<f64>) {
    let n = set.len();
    let d = set[0].len();
    let mut mu = DVector::zeros(d);
    for v in set {
        for i in 0..d {
            mu[i] += v[i];
        }
    }
    mu /= n as f64;
    let mut cov = DMatrix::zeros(d, d);
    for v in set {
        let x = DVector::from_column_slice(v) - &mu;
        cov += &x * x.transpose();
    }
    cov /= n as f64;
    (mu, cov)
}

/// Fréchet-style divergence between two sets of feature vectors:
/// squared mean distance plus the covariance transport term.
pub fn frechet_distance(xs: &[Vec<f64>], ys: &[Vec<f64>]) -> Result<f64, SpotError> {
    if xs.len() < 2 || ys.len() < 2 {
        return Err(SpotError::InsufficientData {
            needed: 2,
            got: xs.len().min(ys.len()),
        });
    }
    let (mu1, s1) = mean_and_cov(xs);
    let (mu2, s2) = mean_and_cov(ys);
    let s1h = sqrtm_psd(&s1);
    let inner = &s1h * &s2 * &s1h;
    let sym = (&inner + inner.transpose()) * 0.5;
    let tr_sqrt: f64 = sym
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .map(|&l| l.max(0.0).sqrt())
        .sum();
    let diff = &mu1 - &mu2;
    Ok(diff.norm_squared() + s1.trace() + s2.trace() - 2.0 * tr_sqrt)
}

/// Per-instance mean rectified feature vector under one extraction condition.
fn crop_mean_vector(crop: &Tensor) -> Vec<f64> {
    let (c, h, w) = (crop.shape[0], crop.shape[1], crop.shape[2]);
    (0..c)
        .map(|ch| crop.data[ch * h * w..(ch + 1) * h * w].iter().sum::<f64>() / (h * w) as f64)
        .collect()
}

/// Compares the distribution of rectified features extracted with
/// ground-truth control points against features extracted with the model's
/// predicted control points (taken at each instance's highest-centerness
/// positive cell). Large values mean recognition sees a different feature
/// distribution at test time than it saw during ground-truth training.
pub fn feature_shift_diagnostic(
    store: &ParamStore,
    cfg: &SpotterConfig,
    samples: &[Sample],
) -> Result<f64, SpotError> {
    let basis = build_tps_basis(cfg.n_rcp, cfg.arm_out)?;
    let mut gt_vecs = Vec::new();
    let mut pred_vecs = Vec::new();
    for sample in samples {
        let bb = backbone_forward(&sample.image, store, cfg)?;
        let pyramid_refs = bb.pyramid();
        let (_, det) = detection_forward(&pyramid_refs, store, cfg)?;
        let pyramid_3d: Vec<Tensor> = pyramid_refs
            .iter()
            .map(|t| Tensor::from_vec(&t.shape[1..], t.data.clone()))
            .collect();
        let arm_pyramid: Vec<(usize, &Tensor)> = cfg
            .strides
            .iter()
            .copied()
            .zip(pyramid_3d.iter())
            .collect();
        let (maps, infos) = make_targets(
            &sample.instances,
            (sample.image.shape[1], sample.image.shape[2]),
            &cfg.level_specs(),
            cfg.n_rcp,
        );
        for (id, info) in infos.iter().enumerate() {
            if info.empty {
                continue;
            }
            // Highest-centerness positive cell owned by this instance.
            let mut best: Option<(f64, usize, usize, usize)> = None;
            for (lvl, map) in maps.iter().enumerate() {
                for (r, c, cell_id) in map.positives() {
                    if cell_id as usize != id {
                        continue;
                    }
                    let ctr = map.ctr[r * map.w + c];
                    if best.map_or(true, |(b, ..)| ctr > b) {
                        best = Some((ctr, lvl, r, c));
                    }
                }
            }
            let Some((_, lvl, r, c)) = best else { continue };
            let (_, _, gt_crop) = arm_extract_one(&arm_pyramid, &info.rcp, &basis)?;
            let pred_points = det.points_at(lvl, r, c, cfg.n_rcp);
            let (_, _, pred_crop) = arm_extract_one(&arm_pyramid, &pred_points, &basis)?;
            gt_vecs.push(crop_mean_vector(&gt_crop));
            pred_vecs.push(crop_mean_vector(&pred_crop));
        }
    }
    frechet_distance(&gt_vecs, &pred_vecs)
}
