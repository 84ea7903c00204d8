//! Loss assembly and SGD training. The total objective is
//! `lambda_det * (L_cls + L_ctr + lambda_rcp * L_rcp) + lambda_rec * L_rec`
//! with focal classification, binary cross-entropy centerness, smooth-L1
//! control point offsets over positive cells, and per-column cross-entropy
//! for recognition on rectified crops.

use std::collections::BTreeMap;

use super::model::{
    backbone_backward, backbone_forward, detection_backward, detection_forward,
    recognition_backward, recognition_forward,
};
use super::{SpotError, SpotterConfig, TrainMode};
use crate::geometry::RectCtrlPoints;
use crate::nn::{
    bce_with_logits, clip_grad_norm, cross_entropy, focal_loss, sgd_momentum_step, smooth_l1,
    ParamStore, Tensor,
};
use crate::rectify::{arm_extract_one, build_tps_basis, gen_grid_backward, bilinear_sample_backward};
use crate::synth::{Sample, GLYPH_FILL};
use crate::targets::{make_targets, sample_positive_pixels, DenseTargetMaps};

#[derive(Debug, Clone, Copy)]
pub struct LossComponents {
    pub total: f64,
    pub cls: f64,
    pub ctr: f64,
    pub rcp: f64,
    pub rec: f64,
    pub n_pos: usize,
    /// True when the image had no positive cells; the step is skipped.
    pub no_positives: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSchedule {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub seed: u64,
}

use serde::{Deserialize, Serialize};

impl Default for TrainSchedule {
    fn default() -> Self {
        TrainSchedule {
            steps: 3000,
            batch_size: 8,
            lr: 0.05,
            momentum: 0.9,
            seed: 0,
        }
    }
}

/// Per-column recognition labels: a rectified crop spans the instance's
/// parameter range, so character `j` of an `L`-character transcript occupies
/// the columns within half an ink width of its center `(j + 0.5) / L`; all
/// other columns carry the pad class. Decoding collapses non-pad runs.
pub fn column_labels(transcript: &str, width: usize, charset: &str) -> Vec<usize> {
    let classes: BTreeMap<char, usize> = charset
        .chars()
        .enumerate()
        .map(|(i, c)| (c, i))
        .collect();
    let pad = classes.len();
    let chars: Vec<char> = transcript.chars().collect();
    let l = chars.len();
    if l == 0 {
        return vec![pad; width];
    }
    (0..width)
        .map(|col| {
            let t = col as f64 / (width - 1) as f64;
            let j = ((t * l as f64) as usize).min(l - 1);
            let center = (j as f64 + 0.5) / l as f64;
            if (t - center).abs() <= GLYPH_FILL / (2.0 * l as f64) {
                *classes.get(&chars[j]).unwrap_or(&pad)
            } else {
                pad
            }
        })
        .collect()
}

struct RecGroup {
    weight: f64,
    points: RectCtrlPoints,
    instance_id: usize,
    /// Detection cell the points came from; None when using ground truth.
    cell: Option<(usize, usize, usize)>,
}

fn count_positives(maps: &[DenseTargetMaps]) -> usize {
    maps.iter().map(|m| m.positives().count()).sum()
}

/// Runs one full forward/backward pass for a single image and leaves the
/// gradients in `store` (previous gradients are cleared). Does not update
/// parameters.
pub fn compute_gradients(
    sample: &Sample,
    store: &mut ParamStore,
    cfg: &SpotterConfig,
    mode: TrainMode,
    step_seed: u64,
) -> Result<LossComponents, SpotError> {
    store.zero_grad();
    accumulate_gradients(sample, store, cfg, mode, step_seed, 1.0, cfg.n_text, 1.0)
}

/// Adds one image's gradient contribution, scaled by `weight`, on top of
/// whatever is already in `store`. `n_text_quota` caps the positive pixels
/// sampled for this image so a batch shares the configured budget.
fn accumulate_gradients(
    sample: &Sample,
    store: &mut ParamStore,
    cfg: &SpotterConfig,
    mode: TrainMode,
    step_seed: u64,
    weight: f64,
    n_text_quota: usize,
    warp_gain: f64,
) -> Result<LossComponents, SpotError> {
    cfg.validate()?;
    let lambda_rcp = mode.lambda_rcp(cfg.lambda_rcp);
    let (img_h, img_w) = (sample.image.shape[1], sample.image.shape[2]);

    let bb = backbone_forward(&sample.image, store, cfg)?;
    let pyramid_refs = bb.pyramid();
    let (det_cache, det_out) = detection_forward(&pyramid_refs, store, cfg)?;
    let (maps, infos) = make_targets(
        &sample.instances,
        (img_h, img_w),
        &cfg.level_specs(),
        cfg.n_rcp,
    );
    let n_pos = count_positives(&maps);
    if n_pos == 0 {
        return Ok(LossComponents {
            total: 0.0,
            cls: 0.0,
            ctr: 0.0,
            rcp: 0.0,
            rec: 0.0,
            n_pos: 0,
            no_positives: true,
        });
    }

    // Flatten pyramid levels to C x H x W views for the rectifier.
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

    // ---- detection losses ----
    let mut loss_cls = 0.0;
    let mut dcls_levels = Vec::new();
    for (level, map) in maps.iter().enumerate() {
        let l = &det_out.levels[level];
        let logits = Tensor::from_vec(&[map.h * map.w], l.cls.data.clone());
        let targets = Tensor::from_vec(&[map.h * map.w], map.cls.clone());
        let valid = Tensor::from_vec(&[map.h * map.w], map.valid_mask.clone());
        let (loss, grad) = focal_loss(&logits, &targets, &valid, 0.25, 2.0, n_pos as f64)?;
        loss_cls += loss;
        dcls_levels.push(Tensor::from_vec(&l.cls.shape, grad.data));
    }

    // Centerness and offsets over positive cells only, gathered across levels.
    let positives: Vec<(usize, usize, usize, i64)> = maps
        .iter()
        .enumerate()
        .flat_map(|(lvl, m)| m.positives().map(move |(r, c, id)| (lvl, r, c, id)))
        .collect();
    let mut ctr_logits = Vec::with_capacity(n_pos);
    let mut ctr_targets = Vec::with_capacity(n_pos);
    let mut off_pred = Vec::with_capacity(n_pos * 4 * cfg.n_rcp);
    let mut off_target = Vec::with_capacity(n_pos * 4 * cfg.n_rcp);
    for &(lvl, r, c, _) in &positives {
        let map = &maps[lvl];
        let l = &det_out.levels[lvl];
        let (h, w) = (map.h, map.w);
        ctr_logits.push(l.ctr.data[r * w + c]);
        ctr_targets.push(map.ctr[r * w + c]);
        for ch in 0..4 * cfg.n_rcp {
            off_pred.push(l.off.data[(ch * h + r) * w + c] * map.stride as f64);
            off_target.push(map.rcp_offsets[(ch * h + r) * w + c]);
        }
    }
    let (loss_ctr, dctr_gather) = bce_with_logits(
        &Tensor::from_vec(&[n_pos], ctr_logits),
        &Tensor::from_vec(&[n_pos], ctr_targets),
    )?;
    let (loss_rcp, doff_gather) = smooth_l1(
        &Tensor::from_vec(&[n_pos * 4 * cfg.n_rcp], off_pred),
        &Tensor::from_vec(&[n_pos * 4 * cfg.n_rcp], off_target),
        1.0,
    )?;

    // ---- recognition loss over sampled positive pixels ----
    let (pix, _) = sample_positive_pixels(&maps, n_text_quota, step_seed);
    let mut groups_map: BTreeMap<(usize, usize, usize, usize), RecGroup> = BTreeMap::new();
    for p in &pix {
        let key = if mode.uses_predicted_points() {
            (1, p.level, p.cell.0, p.cell.1)
        } else {
            (0, p.instance_id, 0, 0)
        };
        let entry = groups_map.entry(key).or_insert_with(|| {
            let points = if mode.uses_predicted_points() {
                det_out.points_at(p.level, p.cell.0, p.cell.1, cfg.n_rcp)
            } else {
                infos[p.instance_id].rcp.clone()
            };
            RecGroup {
                weight: 0.0,
                points,
                instance_id: p.instance_id,
                cell: mode
                    .uses_predicted_points()
                    .then_some((p.level, p.cell.0, p.cell.1)),
            }
        });
        entry.weight += 1.0;
    }
    let groups: Vec<RecGroup> = groups_map.into_values().collect();
    let total_weight: f64 = groups.iter().map(|g| g.weight).sum();

    let basis = build_tps_basis(cfg.n_rcp, cfg.arm_out)?;
    let (oh, ow) = cfg.arm_out;
    let g_count = groups.len();
    let mut crops = Tensor::zeros(&[g_count, cfg.channels, oh, ow]);
    let mut grids = Vec::with_capacity(g_count);
    let mut sel_levels = Vec::with_capacity(g_count);
    let crop_len = cfg.channels * oh * ow;
    for (gi, g) in groups.iter().enumerate() {
        let (sel, grid, crop) = arm_extract_one(&arm_pyramid, &g.points, &basis)?;
        crops.data[gi * crop_len..(gi + 1) * crop_len].copy_from_slice(&crop.data);
        grids.push(grid);
        sel_levels.push(sel);
    }
    let (rec_cache, logits) = recognition_forward(&crops, store, cfg)?;
    let n_class = cfg.n_class();
    let mut loss_rec = 0.0;
    let mut dlogits = Tensor::zeros(&logits.shape);
    for (gi, g) in groups.iter().enumerate() {
        let labels = column_labels(
            &sample.instances[g.instance_id].transcript,
            ow,
            &cfg.charset,
        );
        let mut rows = Tensor::zeros(&[ow, n_class]);
        for pos in 0..ow {
            let src = (pos * g_count + gi) * n_class;
            rows.data[pos * n_class..(pos + 1) * n_class]
                .copy_from_slice(&logits.data[src..src + n_class]);
        }
        let (l, dg) = cross_entropy(&rows, &labels, None)?;
        let scale = g.weight / total_weight;
        loss_rec += scale * l;
        for pos in 0..ow {
            let dst = (pos * g_count + gi) * n_class;
            for j in 0..n_class {
                dlogits.data[dst + j] +=
                    weight * cfg.lambda_rec * scale * dg.data[pos * n_class + j];
            }
        }
    }

    // ---- backward ----
    let dcrops = recognition_backward(&rec_cache, store, &dlogits)?;
    let mut dpyramid: Vec<Tensor> = pyramid_refs
        .iter()
        .map(|t| Tensor::zeros(&t.shape))
        .collect();
    // Extra offset-head gradients from the recognition path, per level.
    let mut doff_rec: Vec<Tensor> = det_out
        .levels
        .iter()
        .map(|l| Tensor::zeros(&l.off.shape))
        .collect();
    for (gi, g) in groups.iter().enumerate() {
        let dcrop = Tensor::from_vec(
            &[cfg.channels, oh, ow],
            dcrops.data[gi * crop_len..(gi + 1) * crop_len].to_vec(),
        );
        let sel = sel_levels[gi];
        let (dfeat, dgrid) = bilinear_sample_backward(&pyramid_3d[sel], &grids[gi], &dcrop)?;
        for (a, b) in dpyramid[sel].data.iter_mut().zip(dfeat.data.iter()) {
            *a += b;
        }
        if let Some((lvl, r, c)) = g.cell {
            // Chain: feature-frame points -> pixels -> head output units.
            let dpoints = gen_grid_backward(&basis, &dgrid);
            let sel_stride = cfg.strides[sel] as f64;
            let det_stride = cfg.strides[lvl] as f64;
            let l = &det_out.levels[lvl];
            let (h, w) = (l.off.shape[2], l.off.shape[3]);
            for (k, dp) in dpoints.iter().enumerate() {
                let dx_px = dp.x / sel_stride;
                let dy_px = dp.y / sel_stride;
                doff_rec[lvl].data[((2 * k) * h + r) * w + c] += warp_gain * dx_px * det_stride;
                doff_rec[lvl].data[((2 * k + 1) * h + r) * w + c] +=
                    warp_gain * dy_px * det_stride;
            }
        }
    }

    // Scatter gathered centerness/offset gradients and weight everything.
    let mut dlevels = Vec::new();
    for (level, map) in maps.iter().enumerate() {
        let l = &det_out.levels[level];
        let mut dcls = dcls_levels[level].clone();
        for v in &mut dcls.data {
            *v *= weight * cfg.lambda_det;
        }
        let mut dctr = Tensor::zeros(&l.ctr.shape);
        let mut doff = doff_rec[level].clone();
        let (h, w) = (map.h, map.w);
        for (pi, &(lvl, r, c, _)) in positives.iter().enumerate() {
            if lvl != level {
                continue;
            }
            dctr.data[r * w + c] = weight * cfg.lambda_det * dctr_gather.data[pi];
            for ch in 0..4 * cfg.n_rcp {
                doff.data[(ch * h + r) * w + c] += weight
                    * cfg.lambda_det
                    * lambda_rcp
                    * doff_gather.data[pi * 4 * cfg.n_rcp + ch]
                    * map.stride as f64;
            }
        }
        dlevels.push((dcls, dctr, doff));
    }
    let det_dpyr = detection_backward(&det_cache, store, &dlevels)?;
    for (acc, d) in dpyramid.iter_mut().zip(det_dpyr.iter()) {
        for (a, b) in acc.data.iter_mut().zip(d.data.iter()) {
            *a += b;
        }
    }
    backbone_backward(&bb, store, &dpyramid)?;

    let total = cfg.lambda_det * (loss_cls + loss_ctr + lambda_rcp * loss_rcp)
        + cfg.lambda_rec * loss_rec;
    Ok(LossComponents {
        total,
        cls: loss_cls,
        ctr: loss_ctr,
        rcp: loss_rcp,
        rec: loss_rec,
        n_pos,
        no_positives: false,
    })
}

/// Global gradient-norm cap. Focal loss can produce near-singular gradients
/// on confidently wrong positives; without a cap a single bad step can wipe
/// out the ReLU features and training never recovers.
const GRAD_CLIP_NORM: f64 = 5.0;

/// One SGD-momentum update on a batch of images: gradients are averaged over
/// the batch and the recognition sampling budget is shared across it.
/// `warp_gain` scales only the recognition gradient that reaches the offset
/// head through the rectification warp (see [`warp_gain_at`]). Skips the
/// update (returning the flagged record) when no image in the batch has
/// positive cells.
pub fn train_step(
    batch: &[&Sample],
    store: &mut ParamStore,
    cfg: &SpotterConfig,
    mode: TrainMode,
    lr: f64,
    momentum: f64,
    step_seed: u64,
    warp_gain: f64,
) -> Result<LossComponents, SpotError> {
    if batch.is_empty() {
        return Err(SpotError::InsufficientData { needed: 1, got: 0 });
    }
    store.zero_grad();
    let weight = 1.0 / batch.len() as f64;
    let quota = cfg.n_text.div_ceil(batch.len()).max(1);
    let mut acc = LossComponents {
        total: 0.0,
        cls: 0.0,
        ctr: 0.0,
        rcp: 0.0,
        rec: 0.0,
        n_pos: 0,
        no_positives: true,
    };
    let mut contributing = 0usize;
    for (i, sample) in batch.iter().enumerate() {
        let rec = accumulate_gradients(
            sample,
            store,
            cfg,
            mode,
            step_seed.wrapping_add(i as u64),
            weight,
            quota,
            warp_gain,
        )?;
        if rec.no_positives {
            continue;
        }
        contributing += 1;
        acc.total += rec.total;
        acc.cls += rec.cls;
        acc.ctr += rec.ctr;
        acc.rcp += rec.rcp;
        acc.rec += rec.rec;
        acc.n_pos += rec.n_pos;
    }
    if contributing == 0 {
        return Ok(acc);
    }
    let inv = 1.0 / contributing as f64;
    acc.total *= inv;
    acc.cls *= inv;
    acc.ctr *= inv;
    acc.rcp *= inv;
    acc.rec *= inv;
    acc.no_positives = false;
    clip_grad_norm(store, GRAD_CLIP_NORM)?;
    sgd_momentum_step(store, lr, momentum)?;
    Ok(acc)
}

/// Cosine learning-rate decay from the configured peak down to this fraction
/// of it at the final step; the late low-lr phase settles the offset
/// regression and recognition confidence.
const LR_FLOOR_FRAC: f64 = 0.05;

fn lr_at(schedule: &TrainSchedule, step: usize) -> f64 {
    let t = step as f64 / schedule.steps.max(1) as f64;
    let ramp = 0.5 * (1.0 + (std::f64::consts::PI * t).cos());
    schedule.lr * (LR_FLOOR_FRAC + (1.0 - LR_FLOOR_FRAC) * ramp)
}

/// Warm-up for the recognition gradient flowing into the offset head through
/// the warp. While the recognizer is still near chance that gradient does
/// not point toward better alignment — its cheapest descent direction is to
/// push the crop off the feature map entirely, where zero padding makes the
/// input featureless. Holding the gain at zero for the first tenth of
/// training and ramping to one by 40% lets the recognizer learn to read the
/// template-aligned crops first, after which moving a crop off its text
/// raises the loss and the alignment gradient becomes corrective.
fn warp_gain_at(schedule: &TrainSchedule, step: usize) -> f64 {
    let t = step as f64 / schedule.steps.max(1) as f64;
    ((t - 0.1) / 0.3).clamp(0.0, 1.0)
}

/// Full training loop cycling over the dataset in order with cosine
/// learning-rate decay. Returns the final parameters and the per-step loss
/// records.
pub fn train(
    samples: &[Sample],
    cfg: &SpotterConfig,
    schedule: &TrainSchedule,
    mode: TrainMode,
) -> Result<(ParamStore, Vec<LossComponents>), SpotError> {
    if samples.is_empty() {
        return Err(SpotError::InsufficientData { needed: 1, got: 0 });
    }
    if schedule.batch_size == 0 {
        return Err(SpotError::Config("batch_size must be positive".into()));
    }
    let mut store = init_params_for_train(cfg, schedule.seed);
    let mut log = Vec::with_capacity(schedule.steps);
    let b = schedule.batch_size;
    for step in 0..schedule.steps {
        let batch: Vec<&Sample> = (0..b)
            .map(|j| &samples[(step * b + j) % samples.len()])
            .collect();
        let rec = train_step(
            &batch,
            &mut store,
            cfg,
            mode,
            lr_at(schedule, step),
            schedule.momentum,
            schedule.seed.wrapping_add((step * b) as u64),
            warp_gain_at(schedule, step),
        )?;
        log.push(rec);
    }
    Ok((store, log))
}

fn init_params_for_train(cfg: &SpotterConfig, seed: u64) -> ParamStore {
    super::model::init_params(cfg, seed)
}
