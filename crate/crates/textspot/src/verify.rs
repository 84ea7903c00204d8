//! Finite-difference verification of every analytic gradient in the crate,
//! plus one composed check that differentiates the full path from control
//! points through the rectification warp and recognition branch to a loss.
//!
//! Each check reduces the op output to a scalar with fixed random weights,
//! runs the op's backward pass with those weights as the upstream gradient,
//! and compares against central differences. Probe points are drawn away
//! from ReLU and Huber kinks so the comparison is meaningful.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::geometry::{Point2, RectCtrlPoints};
use crate::nn::{
    avg_over_height, avg_over_height_backward, bce_with_logits, channel_norm,
    channel_norm_backward, conv2d, conv2d_backward, cross_entropy, focal_loss, grad_check, linear,
    linear_backward, relu, relu_backward, self_attention, self_attention_backward, smooth_l1,
    softmax, softmax_backward, Tensor,
};
use crate::rectify::{
    bilinear_sample, bilinear_sample_backward, build_tps_basis, gen_grid, gen_grid_backward,
    SamplingGrid,
};
use crate::spotter::{
    init_params, recognition_backward, recognition_forward, SpotError, SpotterConfig,
};

/// Maximum relative error accepted between analytic and finite-difference
/// gradients.
pub const GRAD_TOL: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct OpCheck {
    pub name: &'static str,
    pub max_rel_err: f64,
}

impl OpCheck {
    pub fn pass(&self) -> bool {
        self.max_rel_err.is_finite() && self.max_rel_err <= GRAD_TOL
    }
}

fn randn(rng: &mut impl Rng, n: usize, std: f64) -> Vec<f64> {
    let t = Tensor::randn(&[n], std, rng);
    t.data
}

/// Weighted scalar reduction so every output element influences the check.
fn reduce(out: &Tensor, weights: &[f64]) -> f64 {
    out.data.iter().zip(weights).map(|(a, b)| a * b).sum()
}

fn check_conv2d(rng: &mut impl Rng) -> Result<OpCheck, SpotError> {
    let (ishape, wshape) = ([1usize, 2, 5, 6], [3usize, 2, 3, 3]);
    let (ni, nw, nb) = (60, 54, 3);
    let x: Vec<f64> = randn(rng, ni + nw + nb, 0.7);
    let wts = randn(rng, 3 * 5 * 6, 1.0);
    let split = |v: &[f64]| {
        (
            Tensor::from_vec(&ishape, v[..ni].to_vec()),
            Tensor::from_vec(&wshape, v[ni..ni + nw].to_vec()),
            Tensor::from_vec(&[nb], v[ni + nw..].to_vec()),
        )
    };
    let fwd = |v: &[f64]| {
        let (i, w, b) = split(v);
        reduce(&conv2d(&i, &w, &b, (1, 1), (1, 1)).unwrap(), &wts)
    };
    let (i, w, _) = split(&x);
    let dout = Tensor::from_vec(&[1, 3, 5, 6], wts.clone());
    let (di, dw, db) = conv2d_backward(&i, &w, (1, 1), (1, 1), &dout)?;
    let analytic: Vec<f64> = di
        .data
        .iter()
        .chain(dw.data.iter())
        .chain(db.data.iter())
        .copied()
        .collect();
    let err = grad_check(fwd, &x, &analytic, 1e-3)?;
    Ok(OpCheck { name: "conv2d", max_rel_err: err })
}

fn check_linear(rng: &mut impl Rng) -> Result<OpCheck, SpotError> {
    let (m, fin, fout) = (4, 5, 3);
    let x = randn(rng, m * fin + fout * fin + fout, 0.8);
    let wts = randn(rng, m * fout, 1.0);
    let split = |v: &[f64]| {
        (
            Tensor::from_vec(&[m, fin], v[..m * fin].to_vec()),
            Tensor::from_vec(&[fout, fin], v[m * fin..m * fin + fout * fin].to_vec()),
            Tensor::from_vec(&[fout], v[m * fin + fout * fin..].to_vec()),
        )
    };
    let fwd = |v: &[f64]| {
        let (i, w, b) = split(v);
        reduce(&linear(&i, &w, &b).unwrap(), &wts)
    };
    let (i, w, _) = split(&x);
    let dout = Tensor::from_vec(&[m, fout], wts.clone());
    let (di, dw, db) = linear_backward(&i, &w, &dout)?;
    let analytic: Vec<f64> = di
        .data
        .iter()
        .chain(dw.data.iter())
        .chain(db.data.iter())
        .copied()
        .collect();
    let err = grad_check(fwd, &x, &analytic, 1e-3)?;
    Ok(OpCheck { name: "linear", max_rel_err: err })
}

fn check_relu(rng: &mut impl Rng) -> Result<OpCheck, SpotError> {
    // Keep probes off the kink at zero.
    let x: Vec<f64> = randn(rng, 24, 1.0)
        .into_iter()
        .map(|v| if v.abs() < 0.05 { 0.5 } else { v })
        .collect();
    let wts = randn(rng, 24, 1.0);
    let fwd = |v: &[f64]| reduce(&relu(&Tensor::from_vec(&[24], v.to_vec())), &wts);
    let input = Tensor::from_vec(&[24], x.clone());
    let dout = Tensor::from_vec(&[24], wts.clone());
    let analytic = relu_backward(&input, &dout);
    let err = grad_check(fwd, &x, &analytic.data, 1e-3)?;
    Ok(OpCheck { name: "relu", max_rel_err: err })
}

fn check_channel_norm(rng: &mut impl Rng) -> Result<OpCheck, SpotError> {
    let shape = [1usize, 3, 4, 5];
    let x = randn(rng, 60, 1.0);
    let wts = randn(rng, 60, 1.0);
    let fwd = |v: &[f64]| {
        let out = channel_norm(&Tensor::from_vec(&shape, v.to_vec())).unwrap();
        reduce(&out, &wts)
    };
    let input = Tensor::from_vec(&shape, x.clone());
    let dout = Tensor::from_vec(&shape, wts.clone());
    let analytic = channel_norm_backward(&input, &dout);
    let err = grad_check(fwd, &x, &analytic.data, 1e-3)?;
    Ok(OpCheck { name: "channel_norm", max_rel_err: err })
}

fn check_softmax(rng: &mut impl Rng) -> Result<OpCheck, SpotError> {
    let x = randn(rng, 15, 1.0);
    let wts = randn(rng, 15, 1.0);
    let fwd = |v: &[f64]| reduce(&softmax(&Tensor::from_vec(&[3, 5], v.to_vec())), &wts);
    let probs = softmax(&Tensor::from_vec(&[3, 5], x.clone()));
    let dout = Tensor::from_vec(&[3, 5], wts.clone());
    let analytic = softmax_backward(&probs, &dout);
    let err = grad_check(fwd, &x, &analytic.data, 1e-3)?;
    Ok(OpCheck { name: "softmax", max_rel_err: err })
}

fn check_avg_over_height(rng: &mut impl Rng) -> Result<OpCheck, SpotError> {
    let shape = [2usize, 3, 4, 5];
    let x = randn(rng, 120, 1.0);
    let wts = randn(rng, 30, 1.0);
    let fwd = |v: &[f64]| {
        reduce(
            &avg_over_height(&Tensor::from_vec(&shape, v.to_vec())).unwrap(),
            &wts,
        )
    };
    let dout = Tensor::from_vec(&[5, 2, 3], wts.clone());
    let analytic = avg_over_height_backward(&shape, &dout);
    let err = grad_check(fwd, &x, &analytic.data, 1e-3)?;
    Ok(OpCheck { name: "avg_over_height", max_rel_err: err })
}

fn check_self_attention(rng: &mut impl Rng) -> Result<OpCheck, SpotError> {
    let (w, n, c) = (5usize, 2, 4);
    let nx = w * n * c;
    let x = randn(rng, nx + 3 * c * c, 0.6);
    let wts = randn(rng, nx, 1.0);
    let split = |v: &[f64]| {
        (
            Tensor::from_vec(&[w, n, c], v[..nx].to_vec()),
            Tensor::from_vec(&[c, c], v[nx..nx + c * c].to_vec()),
            Tensor::from_vec(&[c, c], v[nx + c * c..nx + 2 * c * c].to_vec()),
            Tensor::from_vec(&[c, c], v[nx + 2 * c * c..].to_vec()),
        )
    };
    let fwd = |v: &[f64]| {
        let (i, wq, wk, wv) = split(v);
        reduce(&self_attention(&i, &wq, &wk, &wv).unwrap(), &wts)
    };
    let (i, wq, wk, wv) = split(&x);
    let dout = Tensor::from_vec(&[w, n, c], wts.clone());
    let (di, dwq, dwk, dwv) = self_attention_backward(&i, &wq, &wk, &wv, &dout)?;
    let analytic: Vec<f64> = di
        .data
        .iter()
        .chain(dwq.data.iter())
        .chain(dwk.data.iter())
        .chain(dwv.data.iter())
        .copied()
        .collect();
    let err = grad_check(fwd, &x, &analytic, 1e-3)?;
    Ok(OpCheck { name: "self_attention", max_rel_err: err })
}

fn check_bilinear_sample(rng: &mut impl Rng) -> Result<OpCheck, SpotError> {
    let fshape = [2usize, 6, 8];
    let nf = 96;
    let npts = 12;
    let feat = randn(rng, nf, 0.8);
    // Fractional parts well inside (0, 1) keep probes off sampler kinks.
    let coords: Vec<f64> = (0..npts)
        .flat_map(|i| {
            let x = 0.4 + (i % 5) as f64 * 1.37;
            let y = 0.6 + (i / 5) as f64 * 1.51;
            [x, y]
        })
        .collect();
    let wts = randn(rng, 2 * npts, 1.0);
    let x: Vec<f64> = feat.iter().chain(coords.iter()).copied().collect();
    let to_grid = |v: &[f64]| SamplingGrid {
        out_size: (1, npts),
        coords: v.chunks(2).map(|p| Point2::new(p[0], p[1])).collect(),
    };
    let fwd = |v: &[f64]| {
        let f = Tensor::from_vec(&fshape, v[..nf].to_vec());
        let g = to_grid(&v[nf..]);
        reduce(&bilinear_sample(&f, &g).unwrap(), &wts)
    };
    let f = Tensor::from_vec(&fshape, feat.clone());
    let g = to_grid(&coords);
    let dout = Tensor::from_vec(&[2, 1, npts], wts.clone());
    let (df, dcoords) = bilinear_sample_backward(&f, &g, &dout)?;
    let analytic: Vec<f64> = df
        .data
        .iter()
        .copied()
        .chain(dcoords.iter().flat_map(|p| [p.x, p.y]))
        .collect();
    let err = grad_check(fwd, &x, &analytic, 1e-3)?;
    Ok(OpCheck { name: "bilinear_sample", max_rel_err: err })
}

fn check_tps_grid(rng: &mut impl Rng) -> Result<OpCheck, SpotError> {
    let n_rcp = 4;
    let basis = build_tps_basis(n_rcp, (3, 10))?;
    let x: Vec<f64> = (0..2 * n_rcp)
        .flat_map(|i| {
            let col = (i % n_rcp) as f64;
            let top = i < n_rcp;
            [
                1.0 + 3.0 * col + rng.gen_range(-0.3..0.3),
                if top { 2.0 } else { 8.0 } + rng.gen_range(-0.3..0.3),
            ]
        })
        .collect();
    let wts = randn(rng, 2 * 30, 1.0);
    let fwd = |v: &[f64]| {
        let pts: Vec<Point2> = v.chunks(2).map(|p| Point2::new(p[0], p[1])).collect();
        let grid = gen_grid(&basis, &pts).unwrap();
        grid.coords
            .iter()
            .enumerate()
            .map(|(i, p)| wts[2 * i] * p.x + wts[2 * i + 1] * p.y)
            .sum()
    };
    let dgrid: Vec<Point2> = wts.chunks(2).map(|c| Point2::new(c[0], c[1])).collect();
    let dpoints = gen_grid_backward(&basis, &dgrid);
    let analytic: Vec<f64> = dpoints.iter().flat_map(|p| [p.x, p.y]).collect();
    let err = grad_check(fwd, &x, &analytic, 1e-3)?;
    Ok(OpCheck { name: "tps_grid", max_rel_err: err })
}

fn check_focal_loss(rng: &mut impl Rng) -> Result<OpCheck, SpotError> {
    let n = 12;
    let x = randn(rng, n, 1.5);
    let targets = Tensor::from_vec(
        &[n],
        (0..n).map(|i| if i % 3 == 0 { 1.0 } else { 0.0 }).collect(),
    );
    let valid = Tensor::from_vec(
        &[n],
        (0..n).map(|i| if i == 5 { 0.0 } else { 1.0 }).collect(),
    );
    let fwd = |v: &[f64]| {
        focal_loss(
            &Tensor::from_vec(&[n], v.to_vec()),
            &targets,
            &valid,
            0.25,
            2.0,
            3.0,
        )
        .unwrap()
        .0
    };
    let (_, grad) = focal_loss(
        &Tensor::from_vec(&[n], x.clone()),
        &targets,
        &valid,
        0.25,
        2.0,
        3.0,
    )?;
    let err = grad_check(fwd, &x, &grad.data, 1e-3)?;
    Ok(OpCheck { name: "focal_loss", max_rel_err: err })
}

fn check_bce(rng: &mut impl Rng) -> Result<OpCheck, SpotError> {
    let n = 10;
    let x = randn(rng, n, 1.2);
    let targets = Tensor::from_vec(&[n], (0..n).map(|i| i as f64 / (n - 1) as f64).collect());
    let fwd = |v: &[f64]| {
        bce_with_logits(&Tensor::from_vec(&[n], v.to_vec()), &targets)
            .unwrap()
            .0
    };
    let (_, grad) = bce_with_logits(&Tensor::from_vec(&[n], x.clone()), &targets)?;
    let err = grad_check(fwd, &x, &grad.data, 1e-3)?;
    Ok(OpCheck { name: "bce_with_logits", max_rel_err: err })
}

fn check_smooth_l1(rng: &mut impl Rng) -> Result<OpCheck, SpotError> {
    let n = 14;
    // Residuals kept clear of the quadratic/linear switch at |x| = beta.
    let x: Vec<f64> = (0..n)
        .map(|i| {
            let r: f64 = rng.gen_range(-2.0..2.0);
            if (r.abs() - 1.0).abs() < 0.15 {
                0.4 * (i as f64 % 2.0 * 2.0 - 1.0)
            } else {
                r
            }
        })
        .collect();
    let target = Tensor::zeros(&[n]);
    let fwd = |v: &[f64]| {
        smooth_l1(&Tensor::from_vec(&[n], v.to_vec()), &target, 1.0)
            .unwrap()
            .0
    };
    let (_, grad) = smooth_l1(&Tensor::from_vec(&[n], x.clone()), &target, 1.0)?;
    let err = grad_check(fwd, &x, &grad.data, 1e-3)?;
    Ok(OpCheck { name: "smooth_l1", max_rel_err: err })
}

fn check_cross_entropy(rng: &mut impl Rng) -> Result<OpCheck, SpotError> {
    let (m, k) = (5, 7);
    let x = randn(rng, m * k, 1.0);
    let labels = vec![0usize, 3, 99, 6, 2];
    let fwd = |v: &[f64]| {
        cross_entropy(&Tensor::from_vec(&[m, k], v.to_vec()), &labels, Some(99))
            .unwrap()
            .0
    };
    let (_, grad) = cross_entropy(&Tensor::from_vec(&[m, k], x.clone()), &labels, Some(99))?;
    let err = grad_check(fwd, &x, &grad.data, 1e-3)?;
    Ok(OpCheck { name: "cross_entropy", max_rel_err: err })
}

/// Composed check: control points -> TPS grid -> bilinear sampling of a
/// feature map -> recognition branch -> cross-entropy, differentiated with
/// respect to the control points.
fn check_rectify_recognize_chain(seed: u64) -> Result<OpCheck, SpotError> {
    let cfg = SpotterConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (oh, ow) = cfg.arm_out;
    let c = cfg.channels;
    let fshape = [c, 12, 20];
    let feat = Tensor::randn(&fshape, 0.6, &mut rng);
    let store = init_params(&cfg, seed);
    let basis = build_tps_basis(cfg.n_rcp, (oh, ow))?;
    let labels: Vec<usize> = (0..ow)
        .map(|i| if i % 4 == 0 { i % cfg.n_class() } else { cfg.pad_class() })
        .collect();
    // A gently curved ribbon well inside the feature map.
    let x: Vec<f64> = (0..2 * cfg.n_rcp)
        .flat_map(|i| {
            let k = (i % cfg.n_rcp) as f64 / (cfg.n_rcp - 1) as f64;
            let top = i < cfg.n_rcp;
            let px = 2.3 + 14.0 * k;
            let py = if top { 3.1 } else { 8.4 } + 1.1 * (k * std::f64::consts::PI).sin();
            [px, py]
        })
        .collect();

    let run_fwd = |v: &[f64]| -> (SamplingGrid, Tensor, f64) {
        let pts: Vec<Point2> = v.chunks(2).map(|p| Point2::new(p[0], p[1])).collect();
        let grid = gen_grid(&basis, &pts).unwrap();
        let crop3 = bilinear_sample(&feat, &grid).unwrap();
        let crop = Tensor::from_vec(&[1, c, oh, ow], crop3.data.clone());
        let (_, logits) = recognition_forward(&crop, &store, &cfg).unwrap();
        let (loss, _) = cross_entropy(&logits, &labels, None).unwrap();
        (grid, crop, loss)
    };
    let fwd = |v: &[f64]| run_fwd(v).2;

    let pts: Vec<Point2> = x.chunks(2).map(|p| Point2::new(p[0], p[1])).collect();
    let grid = gen_grid(&basis, &pts)?;
    let crop3 = bilinear_sample(&feat, &grid)?;
    let crop = Tensor::from_vec(&[1, c, oh, ow], crop3.data.clone());
    let (cache, logits) = recognition_forward(&crop, &store, &cfg)?;
    let (_, dlogits) = cross_entropy(&logits, &labels, None)?;
    let mut store_bw = store.clone();
    store_bw.zero_grad();
    let dcrop = recognition_backward(&cache, &mut store_bw, &dlogits)?;
    let dcrop3 = Tensor::from_vec(&[c, oh, ow], dcrop.data.clone());
    let (_, dcoords) = bilinear_sample_backward(&feat, &grid, &dcrop3)?;
    let dpoints = gen_grid_backward(&basis, &dcoords);
    let analytic: Vec<f64> = dpoints.iter().flat_map(|p| [p.x, p.y]).collect();
    // The composed path crosses hundreds of sampler cell boundaries and ReLU
    // pre-activations, so the kink-free margin that holds for single ops at
    // eps = 1e-3 cannot be guaranteed here; a smaller eps keeps the probe
    // interval inside one smooth piece while staying above roundoff.
    let err = grad_check(fwd, &x, &analytic, 1e-5)?;
    Ok(OpCheck { name: "rectify_recognize_chain", max_rel_err: err })
}

// RectCtrlPoints is only referenced so the chain check mirrors the training
// path's data layout; keep the import honest.
#[allow(dead_code)]
fn _layout(points: &RectCtrlPoints) -> usize {
    points.n_rcp()
}

/// Run every gradient check with a fixed seed and return one record per op.
pub fn gradient_report(seed: u64) -> Result<Vec<OpCheck>, SpotError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(vec![
        check_conv2d(&mut rng)?,
        check_linear(&mut rng)?,
        check_relu(&mut rng)?,
        check_channel_norm(&mut rng)?,
        check_softmax(&mut rng)?,
        check_avg_over_height(&mut rng)?,
        check_self_attention(&mut rng)?,
        check_bilinear_sample(&mut rng)?,
        check_tps_grid(&mut rng)?,
        check_focal_loss(&mut rng)?,
        check_bce(&mut rng)?,
        check_smooth_l1(&mut rng)?,
        check_cross_entropy(&mut rng)?,
        check_rectify_recognize_chain(seed)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_gradients_match_finite_differences() {
        let report = gradient_report(7).unwrap();
        assert!(report.len() >= 10);
        for op in &report {
            assert!(op.pass(), "{} rel err {}", op.name, op.max_rel_err);
        }
    }
}
