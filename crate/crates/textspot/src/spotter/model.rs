//! Network definition: parameter initialization plus forward/backward passes
//! for the backbone, detection head and recognition branch. Every forward
//! returns a cache holding the activations its backward needs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{SpotError, SpotterConfig};
use crate::nn::{
    avg_over_height, avg_over_height_backward, channel_norm, channel_norm_backward, conv2d,
    conv2d_backward, linear, linear_backward, relu, relu_backward, self_attention,
    self_attention_backward, ParamStore, Tensor,
};

fn conv_init(rng: &mut ChaCha8Rng, co: usize, ci: usize, k: usize) -> Tensor {
    let std = (2.0 / (ci * k * k) as f64).sqrt();
    Tensor::randn(&[co, ci, k, k], std, rng)
}

/// Fresh parameters for the full model. The classification bias starts
/// negative so the dense head begins near the background prior, and the
/// offset bias starts at an axis-aligned template box so early predicted
/// control points describe a plausible instance.
pub fn init_params(cfg: &SpotterConfig, seed: u64) -> ParamStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = cfg.channels;
    let mut store = ParamStore::new();

    // Slightly positive conv biases keep ReLU units alive early in training.
    let bias0 = 0.05;
    store.insert("backbone.conv1.w", conv_init(&mut rng, c, 3, 3));
    store.insert("backbone.conv1.b", Tensor::full(&[c], bias0));
    store.insert("backbone.conv2.w", conv_init(&mut rng, c, c, 3));
    store.insert("backbone.conv2.b", Tensor::full(&[c], bias0));
    for &s in cfg.strides.iter().skip(1) {
        store.insert(&format!("backbone.down{s}.w"), conv_init(&mut rng, c, c, 3));
        store.insert(&format!("backbone.down{s}.b"), Tensor::full(&[c], bias0));
    }

    store.insert("det.tower1.w", conv_init(&mut rng, c, c, 3));
    store.insert("det.tower1.b", Tensor::full(&[c], bias0));
    store.insert("det.tower2.w", conv_init(&mut rng, c, c, 3));
    store.insert("det.tower2.b", Tensor::full(&[c], bias0));
    store.insert("det.cls.w", conv_init(&mut rng, 1, c, 3));
    store.insert("det.cls.b", Tensor::full(&[1], -2.0));
    store.insert("det.ctr.w", conv_init(&mut rng, 1, c, 3));
    store.insert("det.ctr.b", Tensor::zeros(&[1]));
    // The offset conv starts at zero so predicted control points begin
    // exactly at the template bias, independent of how the shared tower's
    // features move during training; only an explicit gradient on the
    // offsets (regression loss or the warp path) deforms them.
    store.insert("det.off.w", Tensor::zeros(&[4 * cfg.n_rcp, c, 3, 3]));
    store.insert("det.off.b", offset_template_bias(cfg));

    store.insert("rec.conv1.w", conv_init(&mut rng, c, c, 3));
    for i in 2..=6 {
        store.insert(&format!("rec.conv{i}.w"), conv_init(&mut rng, c, c, 3));
    }
    for i in 1..=6 {
        store.insert(&format!("rec.conv{i}.b"), Tensor::full(&[c], bias0));
    }
    let attn_std = 0.5 / (c as f64).sqrt();
    store.insert("rec.attn.wq", Tensor::randn(&[c, c], attn_std, &mut rng));
    store.insert("rec.attn.wk", Tensor::randn(&[c, c], attn_std, &mut rng));
    store.insert("rec.attn.wv", Tensor::randn(&[c, c], attn_std, &mut rng));
    store.insert(
        "rec.fc.w",
        Tensor::randn(&[cfg.n_class(), c], (1.0 / c as f64).sqrt(), &mut rng),
    );
    store.insert("rec.fc.b", Tensor::zeros(&[cfg.n_class()]));
    store
}

/// Axis-aligned template: control points spread horizontally with a modest
/// height, expressed in units of the finest stride (the head output is
/// multiplied by the stride to give pixels).
fn offset_template_bias(cfg: &SpotterConfig) -> Tensor {
    let n = cfg.n_rcp;
    let s = cfg.strides[0] as f64;
    let (half_w, half_h) = (24.0, 9.0);
    let mut b = Tensor::zeros(&[4 * n]);
    for k in 0..2 * n {
        let i = k % n;
        let x = (i as f64 / (n - 1) as f64 * 2.0 - 1.0) * half_w;
        let y = if k < n { -half_h } else { half_h };
        b.data[2 * k] = x / s;
        b.data[2 * k + 1] = y / s;
    }
    b
}

pub struct BackboneCache {
    input: Tensor,
    pre1: Tensor,
    nrm1: Tensor,
    act1: Tensor,
    /// (conv output, normalized, activation) per pyramid level, finest first.
    levels: Vec<(Tensor, Tensor, Tensor)>,
    extra_names: Vec<String>,
}

impl BackboneCache {
    pub fn pyramid(&self) -> Vec<&Tensor> {
        self.levels.iter().map(|(_, _, a)| a).collect()
    }
}

/// Small conv stem: two stride-2 convs to the finest level, then one
/// stride-2 conv per additional configured level. Each conv is followed by
/// per-channel normalization and a ReLU; the normalization keeps deep
/// feature scales stable so no pyramid level can saturate or die.
pub fn backbone_forward(
    image: &Tensor,
    store: &ParamStore,
    cfg: &SpotterConfig,
) -> Result<BackboneCache, SpotError> {
    if image.shape.len() != 3 || image.shape[0] != 3 {
        return Err(SpotError::Config("image must be 3 x H x W".into()));
    }
    let max_stride = *cfg.strides.last().unwrap();
    if image.shape[1] % max_stride != 0 || image.shape[2] % max_stride != 0 {
        return Err(SpotError::Config(format!(
            "image size {}x{} not divisible by stride {max_stride}",
            image.shape[1], image.shape[2]
        )));
    }
    // Center pixel values so the first conv sees zero-mean inputs.
    let input = Tensor::from_vec(
        &[1, 3, image.shape[1], image.shape[2]],
        image.data.iter().map(|v| v - 0.5).collect(),
    );
    let pre1 = conv2d(
        &input,
        store.get("backbone.conv1.w"),
        store.get("backbone.conv1.b"),
        (2, 2),
        (1, 1),
    )?;
    let nrm1 = channel_norm(&pre1)?;
    let act1 = relu(&nrm1);
    let pre2 = conv2d(
        &act1,
        store.get("backbone.conv2.w"),
        store.get("backbone.conv2.b"),
        (2, 2),
        (1, 1),
    )?;
    let nrm2 = channel_norm(&pre2)?;
    let act2 = relu(&nrm2);
    let mut levels = vec![(pre2, nrm2, act2)];
    let mut extra_names = Vec::new();
    for &s in cfg.strides.iter().skip(1) {
        let name = format!("backbone.down{s}");
        let prev = &levels.last().unwrap().2;
        let pre = conv2d(
            prev,
            store.get(&format!("{name}.w")),
            store.get(&format!("{name}.b")),
            (2, 2),
            (1, 1),
        )?;
        let nrm = channel_norm(&pre)?;
        let act = relu(&nrm);
        levels.push((pre, nrm, act));
        extra_names.push(name);
    }
    Ok(BackboneCache {
        input,
        pre1,
        nrm1,
        act1,
        levels,
        extra_names,
    })
}

/// Accumulates parameter gradients from per-level feature gradients.
pub fn backbone_backward(
    cache: &BackboneCache,
    store: &mut ParamStore,
    dpyramid: &[Tensor],
) -> Result<(), SpotError> {
    assert_eq!(dpyramid.len(), cache.levels.len());
    // Walk the extra levels coarsest-first, folding gradients down.
    let mut carry: Option<Tensor> = None;
    for i in (1..cache.levels.len()).rev() {
        let mut d = dpyramid[i].clone();
        if let Some(c) = carry.take() {
            for (a, b) in d.data.iter_mut().zip(c.data.iter()) {
                *a += b;
            }
        }
        let dnrm = relu_backward(&cache.levels[i].1, &d);
        let dpre = channel_norm_backward(&cache.levels[i].0, &dnrm);
        let name = &cache.extra_names[i - 1];
        let (dprev, dw, db) = conv2d_backward(
            &cache.levels[i - 1].2,
            store.get(&format!("{name}.w")),
            (2, 2),
            (1, 1),
            &dpre,
        )?;
        store.accumulate_grad(&format!("{name}.w"), &dw);
        store.accumulate_grad(&format!("{name}.b"), &db);
        carry = Some(dprev);
    }
    let mut d2 = dpyramid[0].clone();
    if let Some(c) = carry {
        for (a, b) in d2.data.iter_mut().zip(c.data.iter()) {
            *a += b;
        }
    }
    let dnrm2 = relu_backward(&cache.levels[0].1, &d2);
    let dpre2 = channel_norm_backward(&cache.levels[0].0, &dnrm2);
    let (dact1, dw2, db2) = conv2d_backward(
        &cache.act1,
        store.get("backbone.conv2.w"),
        (2, 2),
        (1, 1),
        &dpre2,
    )?;
    store.accumulate_grad("backbone.conv2.w", &dw2);
    store.accumulate_grad("backbone.conv2.b", &db2);
    let dnrm1 = relu_backward(&cache.nrm1, &dact1);
    let dpre1 = channel_norm_backward(&cache.pre1, &dnrm1);
    let (_, dw1, db1) = conv2d_backward(
        &cache.input,
        store.get("backbone.conv1.w"),
        (2, 2),
        (1, 1),
        &dpre1,
    )?;
    store.accumulate_grad("backbone.conv1.w", &dw1);
    store.accumulate_grad("backbone.conv1.b", &db1);
    Ok(())
}

/// One level of raw head outputs. Offsets are in stride units: multiply by
/// the level stride to get pixel displacements from the cell center.
pub struct DetLevel {
    pub stride: usize,
    pub cls: Tensor,
    pub ctr: Tensor,
    pub off: Tensor,
}

pub struct DetectionOut {
    pub levels: Vec<DetLevel>,
}

impl DetectionOut {
    /// Predicted control points (pixels) for one cell.
    pub fn points_at(
        &self,
        level: usize,
        row: usize,
        col: usize,
        n_rcp: usize,
    ) -> crate::geometry::RectCtrlPoints {
        let l = &self.levels[level];
        let (h, w) = (l.off.shape[2], l.off.shape[3]);
        let s = l.stride as f64;
        let cx = (col as f64 + 0.5) * s;
        let cy = (row as f64 + 0.5) * s;
        let pts: Vec<crate::geometry::Point2> = (0..2 * n_rcp)
            .map(|k| {
                let dx = l.off.data[((2 * k) * h + row) * w + col] * s;
                let dy = l.off.data[((2 * k + 1) * h + row) * w + col] * s;
                crate::geometry::Point2::new(cx + dx, cy + dy)
            })
            .collect();
        crate::geometry::RectCtrlPoints::from_flat(&pts)
    }
}

pub struct DetectionCache {
    // Per level: (input, pre1, nrm1, act1, pre2, nrm2, act2) of the two
    // tower convs, each followed by channel normalization and ReLU.
    #[allow(clippy::type_complexity)]
    towers: Vec<(Tensor, Tensor, Tensor, Tensor, Tensor, Tensor, Tensor)>,
}

pub fn detection_forward(
    pyramid: &[&Tensor],
    store: &ParamStore,
    cfg: &SpotterConfig,
) -> Result<(DetectionCache, DetectionOut), SpotError> {
    if pyramid.len() != cfg.strides.len() {
        return Err(SpotError::Config("pyramid does not match strides".into()));
    }
    let mut towers = Vec::new();
    let mut levels = Vec::new();
    for (feat, &stride) in pyramid.iter().zip(cfg.strides.iter()) {
        let pre1 = conv2d(
            feat,
            store.get("det.tower1.w"),
            store.get("det.tower1.b"),
            (1, 1),
            (1, 1),
        )?;
        let nrm1 = channel_norm(&pre1)?;
        let act1 = relu(&nrm1);
        let pre2 = conv2d(
            &act1,
            store.get("det.tower2.w"),
            store.get("det.tower2.b"),
            (1, 1),
            (1, 1),
        )?;
        let nrm2 = channel_norm(&pre2)?;
        let act2 = relu(&nrm2);
        let cls = conv2d(&act2, store.get("det.cls.w"), store.get("det.cls.b"), (1, 1), (1, 1))?;
        let ctr = conv2d(&act2, store.get("det.ctr.w"), store.get("det.ctr.b"), (1, 1), (1, 1))?;
        let off = conv2d(&act2, store.get("det.off.w"), store.get("det.off.b"), (1, 1), (1, 1))?;
        towers.push(((*feat).clone(), pre1, nrm1, act1, pre2, nrm2, act2));
        levels.push(DetLevel {
            stride,
            cls,
            ctr,
            off,
        });
    }
    Ok((DetectionCache { towers }, DetectionOut { levels }))
}

/// Gradients w.r.t. the pyramid features from per-level head gradients.
pub fn detection_backward(
    cache: &DetectionCache,
    store: &mut ParamStore,
    dlevels: &[(Tensor, Tensor, Tensor)], // (dcls, dctr, doff)
) -> Result<Vec<Tensor>, SpotError> {
    let mut dpyramid = Vec::new();
    for ((input, pre1, nrm1, act1, pre2, nrm2, act2), (dcls, dctr, doff)) in
        cache.towers.iter().zip(dlevels.iter())
    {
        let mut dact2 = Tensor::zeros(&act2.shape);
        for (head, dout) in [("det.cls", dcls), ("det.ctr", dctr), ("det.off", doff)] {
            let (dx, dw, db) =
                conv2d_backward(act2, store.get(&format!("{head}.w")), (1, 1), (1, 1), dout)?;
            store.accumulate_grad(&format!("{head}.w"), &dw);
            store.accumulate_grad(&format!("{head}.b"), &db);
            for (a, b) in dact2.data.iter_mut().zip(dx.data.iter()) {
                *a += b;
            }
        }
        let dnrm2 = relu_backward(nrm2, &dact2);
        let dpre2 = channel_norm_backward(pre2, &dnrm2);
        let (dact1, dw2, db2) =
            conv2d_backward(act1, store.get("det.tower2.w"), (1, 1), (1, 1), &dpre2)?;
        store.accumulate_grad("det.tower2.w", &dw2);
        store.accumulate_grad("det.tower2.b", &db2);
        let dnrm1 = relu_backward(nrm1, &dact1);
        let dpre1 = channel_norm_backward(pre1, &dnrm1);
        let (dinput, dw1, db1) =
            conv2d_backward(input, store.get("det.tower1.w"), (1, 1), (1, 1), &dpre1)?;
        store.accumulate_grad("det.tower1.w", &dw1);
        store.accumulate_grad("det.tower1.b", &db1);
        dpyramid.push(dinput);
    }
    Ok(dpyramid)
}

pub struct RecCache {
    convs: Vec<(Tensor, Tensor)>, // (input, pre) per conv
    last_act: Tensor,
    seq: Tensor,      // (w, n, c) after height average
    attn_out: Tensor, // (w, n, c)
}

const REC_STRIDES: [(usize, usize); 6] = [(1, 1), (1, 1), (2, 1), (1, 1), (2, 1), (1, 1)];

/// Recognition branch over a batch of rectified crops N x C x H x W:
/// six convs (two halving the height), height average to a length-W
/// sequence, one self-attention block, then a per-position classifier.
/// Logits come back as [W * N, n_class] with row index `pos * N + instance`.
pub fn recognition_forward(
    crops: &Tensor,
    store: &ParamStore,
    cfg: &SpotterConfig,
) -> Result<(RecCache, Tensor), SpotError> {
    if crops.shape.len() != 4 || crops.shape[2] % 4 != 0 {
        return Err(SpotError::Config(
            "rectified crops must be N x C x H x W with H divisible by 4".into(),
        ));
    }
    if crops.shape[3] < cfg.max_len {
        return Err(SpotError::Config(format!(
            "crop width {} shorter than max_len {}",
            crops.shape[3], cfg.max_len
        )));
    }
    let mut convs = Vec::new();
    let mut x = crops.clone();
    for (i, stride) in REC_STRIDES.iter().enumerate() {
        let name = format!("rec.conv{}", i + 1);
        let pre = conv2d(
            &x,
            store.get(&format!("{name}.w")),
            store.get(&format!("{name}.b")),
            *stride,
            (1, 1),
        )?;
        let act = relu(&pre);
        convs.push((x, pre));
        x = act;
    }
    let seq = avg_over_height(&x)?;
    let attn_out = self_attention(
        &seq,
        store.get("rec.attn.wq"),
        store.get("rec.attn.wk"),
        store.get("rec.attn.wv"),
    )?;
    let (w, n, c) = (attn_out.shape[0], attn_out.shape[1], attn_out.shape[2]);
    let flat = Tensor::from_vec(&[w * n, c], attn_out.data.clone());
    let logits = linear(&flat, store.get("rec.fc.w"), store.get("rec.fc.b"))?;
    Ok((
        RecCache {
            convs,
            last_act: x,
            seq,
            attn_out,
        },
        logits,
    ))
}

/// Gradient w.r.t. the rectified crop batch.
pub fn recognition_backward(
    cache: &RecCache,
    store: &mut ParamStore,
    dlogits: &Tensor,
) -> Result<Tensor, SpotError> {
    let (w, n, c) = (
        cache.attn_out.shape[0],
        cache.attn_out.shape[1],
        cache.attn_out.shape[2],
    );
    let flat = Tensor::from_vec(&[w * n, c], cache.attn_out.data.clone());
    let (dflat, dw, db) = linear_backward(&flat, store.get("rec.fc.w"), dlogits)?;
    store.accumulate_grad("rec.fc.w", &dw);
    store.accumulate_grad("rec.fc.b", &db);
    let dattn = Tensor::from_vec(&[w, n, c], dflat.data);
    let (dseq, dwq, dwk, dwv) = self_attention_backward(
        &cache.seq,
        store.get("rec.attn.wq"),
        store.get("rec.attn.wk"),
        store.get("rec.attn.wv"),
        &dattn,
    )?;
    store.accumulate_grad("rec.attn.wq", &dwq);
    store.accumulate_grad("rec.attn.wk", &dwk);
    store.accumulate_grad("rec.attn.wv", &dwv);
    let mut dx = avg_over_height_backward(&cache.last_act.shape, &dseq);
    for i in (0..6).rev() {
        let name = format!("rec.conv{}", i + 1);
        let (input, pre) = &cache.convs[i];
        let dpre = relu_backward(pre, &dx);
        let (dinput, dw, db) =
            conv2d_backward(input, store.get(&format!("{name}.w")), REC_STRIDES[i], (1, 1), &dpre)?;
        store.accumulate_grad(&format!("{name}.w"), &dw);
        store.accumulate_grad(&format!("{name}.b"), &db);
        dx = dinput;
    }
    Ok(dx)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_cfg() -> SpotterConfig {
        SpotterConfig {
            channels: 4,
            ..SpotterConfig::default()
        }
    }

    fn zero_backbone(store: &mut ParamStore, cfg: &SpotterConfig) {
        let mut names = vec![
            "backbone.conv1.w".to_string(),
            "backbone.conv1.b".to_string(),
            "backbone.conv2.w".to_string(),
            "backbone.conv2.b".to_string(),
        ];
        for &s in cfg.strides.iter().skip(1) {
            names.push(format!("backbone.down{s}.w"));
            names.push(format!("backbone.down{s}.b"));
        }
        for n in names {
            store.get_mut(&n).data.fill(0.0);
        }
    }

    #[test]
    fn backbone_shape_contract() {
        let cfg = toy_cfg();
        let store = init_params(&cfg, 1);
        let image = Tensor::zeros(&[3, 64, 128]);
        let cache = backbone_forward(&image, &store, &cfg).unwrap();
        let pyr = cache.pyramid();
        assert_eq!(pyr.len(), 3);
        assert_eq!(pyr[0].shape, vec![1, cfg.channels, 16, 32]);
        assert_eq!(pyr[2].shape, vec![1, cfg.channels, 4, 8]);
    }

    #[test]
    fn backbone_zero_weights_zero_features() {
        let cfg = toy_cfg();
        let mut store = init_params(&cfg, 1);
        zero_backbone(&mut store, &cfg);
        let image = Tensor::zeros(&[3, 64, 128]);
        let cache = backbone_forward(&image, &store, &cfg).unwrap();
        assert!(cache.pyramid()[0].data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backbone_deterministic() {
        let cfg = toy_cfg();
        let store = init_params(&cfg, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let image = Tensor::randn(&[3, 64, 128], 1.0, &mut rng);
        let a = backbone_forward(&image, &store, &cfg).unwrap();
        let b = backbone_forward(&image, &store, &cfg).unwrap();
        assert_eq!(a.pyramid()[0].data, b.pyramid()[0].data);
    }

    #[test]
    fn backbone_rejects_indivisible_size() {
        let cfg = toy_cfg();
        let store = init_params(&cfg, 1);
        assert!(backbone_forward(&Tensor::zeros(&[3, 63, 128]), &store, &cfg).is_err());
    }

    #[test]
    fn detection_offset_channels() {
        let cfg = toy_cfg();
        assert_eq!(cfg.n_rcp, 8);
        let store = init_params(&cfg, 1);
        let image = Tensor::zeros(&[3, 64, 128]);
        let bb = backbone_forward(&image, &store, &cfg).unwrap();
        let (_, det) = detection_forward(&bb.pyramid(), &store, &cfg).unwrap();
        assert_eq!(det.levels[0].off.shape, vec![1, 32, 16, 32]);
        assert_eq!(det.levels[0].cls.shape, vec![1, 1, 16, 32]);
    }

    #[test]
    fn detection_two_levels() {
        let cfg = SpotterConfig {
            channels: 4,
            strides: vec![4, 8],
            ..SpotterConfig::default()
        };
        let store = init_params(&cfg, 1);
        let image = Tensor::zeros(&[3, 64, 128]);
        let bb = backbone_forward(&image, &store, &cfg).unwrap();
        let (_, det) = detection_forward(&bb.pyramid(), &store, &cfg).unwrap();
        assert_eq!(det.levels.len(), 2);
        assert_eq!(det.levels[1].cls.shape, vec![1, 1, 8, 16]);
    }

    #[test]
    fn recognition_shape_and_finite() {
        let cfg = toy_cfg();
        let store = init_params(&cfg, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let crops = Tensor::randn(&[3, cfg.channels, 8, 32], 1.0, &mut rng);
        let (_, logits) = recognition_forward(&crops, &store, &cfg).unwrap();
        assert_eq!(logits.shape, vec![32 * 3, 13]);
        assert!(logits.all_finite());
        let probs = crate::nn::softmax(&logits);
        for row in probs.data.chunks(13) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn recognition_identical_inputs_identical_logits() {
        let cfg = toy_cfg();
        let store = init_params(&cfg, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let one = Tensor::randn(&[1, cfg.channels, 8, 32], 1.0, &mut rng);
        let mut two = Tensor::zeros(&[2, cfg.channels, 8, 32]);
        two.data[..one.len()].copy_from_slice(&one.data);
        two.data[one.len()..].copy_from_slice(&one.data);
        let (_, logits) = recognition_forward(&two, &store, &cfg).unwrap();
        // Rows pos*N+0 and pos*N+1 must agree.
        for pos in 0..32 {
            let a = &logits.data[(pos * 2) * 13..(pos * 2) * 13 + 13];
            let b = &logits.data[(pos * 2 + 1) * 13..(pos * 2 + 1) * 13 + 13];
            assert_eq!(a, b);
        }
    }

    #[test]
    fn predicted_points_follow_template_bias_at_zero_features() {
        let cfg = toy_cfg();
        let mut store = init_params(&cfg, 1);
        zero_backbone(&mut store, &cfg);
        for n in ["det.tower1.w", "det.tower1.b", "det.tower2.w", "det.tower2.b"] {
            store.get_mut(n).data.fill(0.0);
        }
        let image = Tensor::zeros(&[3, 64, 128]);
        let bb = backbone_forward(&image, &store, &cfg).unwrap();
        let (_, det) = detection_forward(&bb.pyramid(), &store, &cfg).unwrap();
        let pts = det.points_at(0, 4, 8, cfg.n_rcp);
        // Zero features -> head output equals the bias template.
        let cx = (8.0 + 0.5) * 4.0;
        let cy = (4.0 + 0.5) * 4.0;
        assert!((pts.top[0].x - (cx - 24.0)).abs() < 1e-9);
        assert!((pts.top[0].y - (cy - 9.0)).abs() < 1e-9);
        assert!((pts.bottom[cfg.n_rcp - 1].x - (cx + 24.0)).abs() < 1e-9);
        assert!((pts.bottom[cfg.n_rcp - 1].y - (cy + 9.0)).abs() < 1e-9);
    }
}
