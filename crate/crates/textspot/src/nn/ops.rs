use ndarray::{Array2, ArrayView2};

use super::{NnError, Tensor};

fn conv_out_dim(input: usize, k: usize, s: usize, p: usize) -> usize {
    (input + 2 * p - k) / s + 1
}

fn im2col(
    input: &[f64],
    (ci, h, w): (usize, usize, usize),
    (kh, kw): (usize, usize),
    (sh, sw): (usize, usize),
    (ph, pw): (usize, usize),
    (oh, ow): (usize, usize),
) -> Array2<f64> {
    let mut cols = Array2::<f64>::zeros((ci * kh * kw, oh * ow));
    for c in 0..ci {
        for ki in 0..kh {
            for kj in 0..kw {
                let row = (c * kh + ki) * kw + kj;
                for oy in 0..oh {
                    let iy = (oy * sh + ki) as isize - ph as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let base = (c * h + iy as usize) * w;
                    for ox in 0..ow {
                        let ix = (ox * sw + kj) as isize - pw as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        cols[(row, oy * ow + ox)] = input[base + ix as usize];
                    }
                }
            }
        }
    }
    cols
}

fn col2im_add(
    cols: &Array2<f64>,
    dinput: &mut [f64],
    (ci, h, w): (usize, usize, usize),
    (kh, kw): (usize, usize),
    (sh, sw): (usize, usize),
    (ph, pw): (usize, usize),
    (oh, ow): (usize, usize),
) {
    for c in 0..ci {
        for ki in 0..kh {
            for kj in 0..kw {
                let row = (c * kh + ki) * kw + kj;
                for oy in 0..oh {
                    let iy = (oy * sh + ki) as isize - ph as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let base = (c * h + iy as usize) * w;
                    for ox in 0..ow {
                        let ix = (ox * sw + kj) as isize - pw as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        dinput[base + ix as usize] += cols[(row, oy * ow + ox)];
                    }
                }
            }
        }
    }
}

/// 2-d cross-correlation. Input NCHW, weight OIHW, bias O.
pub fn conv2d(
    input: &Tensor,
    weight: &Tensor,
    bias: &Tensor,
    stride: (usize, usize),
    pad: (usize, usize),
) -> Result<Tensor, NnError> {
    let [n, ci, h, w] = dims4(input, "conv2d input")?;
    let [co, wi, kh, kw] = dims4(weight, "conv2d weight")?;
    if wi != ci {
        return Err(NnError::Shape(format!(
            "conv2d channels: input {ci} vs weight {wi}"
        )));
    }
    if bias.shape != [co] {
        return Err(NnError::Shape("conv2d bias shape".into()));
    }
    if h + 2 * pad.0 < kh || w + 2 * pad.1 < kw {
        return Err(NnError::Shape("conv2d kernel larger than padded input".into()));
    }
    let oh = conv_out_dim(h, kh, stride.0, pad.0);
    let ow = conv_out_dim(w, kw, stride.1, pad.1);
    let wmat = ArrayView2::from_shape((co, ci * kh * kw), &weight.data).unwrap();
    let mut out = Tensor::zeros(&[n, co, oh, ow]);
    let item = ci * h * w;
    let out_item = co * oh * ow;
    for b in 0..n {
        let cols = im2col(
            &input.data[b * item..(b + 1) * item],
            (ci, h, w),
            (kh, kw),
            stride,
            pad,
            (oh, ow),
        );
        let y = wmat.dot(&cols);
        let dst = &mut out.data[b * out_item..(b + 1) * out_item];
        for o in 0..co {
            let bo = bias.data[o];
            for p in 0..oh * ow {
                dst[o * oh * ow + p] = y[(o, p)] + bo;
            }
        }
    }
    Ok(out)
}

/// Gradients of conv2d w.r.t. input, weight and bias.
pub fn conv2d_backward(
    input: &Tensor,
    weight: &Tensor,
    stride: (usize, usize),
    pad: (usize, usize),
    dout: &Tensor,
) -> Result<(Tensor, Tensor, Tensor), NnError> {
    let [n, ci, h, w] = dims4(input, "conv2d input")?;
    let [co, _, kh, kw] = dims4(weight, "conv2d weight")?;
    let oh = conv_out_dim(h, kh, stride.0, pad.0);
    let ow = conv_out_dim(w, kw, stride.1, pad.1);
    if dout.shape != [n, co, oh, ow] {
        return Err(NnError::Shape("conv2d_backward dout shape".into()));
    }
    let wmat = ArrayView2::from_shape((co, ci * kh * kw), &weight.data).unwrap();
    let mut dinput = Tensor::zeros(&input.shape);
    let mut dweight_mat = Array2::<f64>::zeros((co, ci * kh * kw));
    let mut dbias = Tensor::zeros(&[co]);
    let item = ci * h * w;
    let out_item = co * oh * ow;
    for b in 0..n {
        let cols = im2col(
            &input.data[b * item..(b + 1) * item],
            (ci, h, w),
            (kh, kw),
            stride,
            pad,
            (oh, ow),
        );
        let dy = ArrayView2::from_shape(
            (co, oh * ow),
            &dout.data[b * out_item..(b + 1) * out_item],
        )
        .unwrap();
        dweight_mat += &dy.dot(&cols.t());
        for o in 0..co {
            dbias.data[o] += dy.row(o).sum();
        }
        let dcols = wmat.t().dot(&dy);
        col2im_add(
            &dcols,
            &mut dinput.data[b * item..(b + 1) * item],
            (ci, h, w),
            (kh, kw),
            stride,
            pad,
            (oh, ow),
        );
    }
    let dweight = Tensor::from_vec(&weight.shape, dweight_mat.into_raw_vec_and_offset().0);
    Ok((dinput, dweight, dbias))
}

fn dims4(t: &Tensor, what: &str) -> Result<[usize; 4], NnError> {
    if t.shape.len() != 4 {
        return Err(NnError::Shape(format!("{what} must be rank 4")));
    }
    Ok([t.shape[0], t.shape[1], t.shape[2], t.shape[3]])
}

/// Fully connected layer: input [m, in], weight [out, in], bias [out].
pub fn linear(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor, NnError> {
    let (m, fin) = dims2(input, "linear input")?;
    let (fout, wi) = dims2(weight, "linear weight")?;
    if wi != fin || bias.shape != [fout] {
        return Err(NnError::Shape("linear shapes disagree".into()));
    }
    let x = ArrayView2::from_shape((m, fin), &input.data).unwrap();
    let wt = ArrayView2::from_shape((fout, fin), &weight.data).unwrap();
    let mut y = x.dot(&wt.t());
    for mut row in y.rows_mut() {
        for (v, b) in row.iter_mut().zip(bias.data.iter()) {
            *v += b;
        }
    }
    Ok(Tensor::from_vec(&[m, fout], y.into_raw_vec_and_offset().0))
}

pub fn linear_backward(
    input: &Tensor,
    weight: &Tensor,
    dout: &Tensor,
) -> Result<(Tensor, Tensor, Tensor), NnError> {
    let (m, fin) = dims2(input, "linear input")?;
    let (fout, _) = dims2(weight, "linear weight")?;
    if dout.shape != [m, fout] {
        return Err(NnError::Shape("linear_backward dout shape".into()));
    }
    let x = ArrayView2::from_shape((m, fin), &input.data).unwrap();
    let wt = ArrayView2::from_shape((fout, fin), &weight.data).unwrap();
    let dy = ArrayView2::from_shape((m, fout), &dout.data).unwrap();
    let dx = dy.dot(&wt);
    let dw = dy.t().dot(&x);
    let mut db = Tensor::zeros(&[fout]);
    for o in 0..fout {
        db.data[o] = dy.column(o).sum();
    }
    Ok((
        Tensor::from_vec(&input.shape, dx.into_raw_vec_and_offset().0),
        Tensor::from_vec(&weight.shape, dw.into_raw_vec_and_offset().0),
        db,
    ))
}

fn dims2(t: &Tensor, what: &str) -> Result<(usize, usize), NnError> {
    if t.shape.len() != 2 {
        return Err(NnError::Shape(format!("{what} must be rank 2")));
    }
    Ok((t.shape[0], t.shape[1]))
}

pub fn relu(input: &Tensor) -> Tensor {
    Tensor::from_vec(
        &input.shape,
        input.data.iter().map(|&v| v.max(0.0)).collect(),
    )
}

pub fn relu_backward(input: &Tensor, dout: &Tensor) -> Tensor {
    Tensor::from_vec(
        &input.shape,
        input
            .data
            .iter()
            .zip(dout.data.iter())
            .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
            .collect(),
    )
}

pub(crate) const NORM_EPS: f64 = 1e-5;

/// Per-channel spatial normalization for N x C x H x W tensors: each (n, c)
/// plane is shifted to zero mean and scaled to unit variance over H x W.
/// Keeps feature magnitudes bounded regardless of how deep the layer sits,
/// which prevents whole channels from saturating or dying during training.
pub fn channel_norm(input: &Tensor) -> Result<Tensor, NnError> {
    if input.shape.len() != 4 {
        return Err(NnError::Shape("channel_norm input must be N x C x H x W".into()));
    }
    let hw = input.shape[2] * input.shape[3];
    let mut out = input.clone();
    for plane in out.data.chunks_mut(hw) {
        let mean = plane.iter().sum::<f64>() / hw as f64;
        let var = plane.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / hw as f64;
        let inv = 1.0 / (var + NORM_EPS).sqrt();
        for v in plane.iter_mut() {
            *v = (*v - mean) * inv;
        }
    }
    Ok(out)
}

/// VJP of `channel_norm` w.r.t. its input.
pub fn channel_norm_backward(input: &Tensor, dout: &Tensor) -> Tensor {
    let hw = input.shape[2] * input.shape[3];
    let mut din = Tensor::zeros(&input.shape);
    for ((x, g), d) in input
        .data
        .chunks(hw)
        .zip(dout.data.chunks(hw))
        .zip(din.data.chunks_mut(hw))
    {
        let n = hw as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let inv = 1.0 / (var + NORM_EPS).sqrt();
        let g_mean = g.iter().sum::<f64>() / n;
        let gy_mean = x
            .iter()
            .zip(g.iter())
            .map(|(&xi, &gi)| gi * (xi - mean) * inv)
            .sum::<f64>()
            / n;
        for i in 0..hw {
            let y = (x[i] - mean) * inv;
            d[i] = inv * (g[i] - g_mean - y * gy_mean);
        }
    }
    din
}

/// Softmax over the last axis.
pub fn softmax(input: &Tensor) -> Tensor {
    let width = *input.shape.last().expect("softmax needs rank >= 1");
    let mut out = input.clone();
    for row in out.data.chunks_mut(width) {
        softmax_row(row);
    }
    out
}

pub(crate) fn softmax_row(row: &mut [f64]) {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - m).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// VJP of softmax given its output `probs`.
pub fn softmax_backward(probs: &Tensor, dout: &Tensor) -> Tensor {
    let width = *probs.shape.last().unwrap();
    let mut din = Tensor::zeros(&probs.shape);
    for ((p, g), d) in probs
        .data
        .chunks(width)
        .zip(dout.data.chunks(width))
        .zip(din.data.chunks_mut(width))
    {
        let dot: f64 = p.iter().zip(g.iter()).map(|(a, b)| a * b).sum();
        for i in 0..width {
            d[i] = p[i] * (g[i] - dot);
        }
    }
    din
}

/// Average over the height axis of an NCHW map, then permute to a
/// sequence-major (w, n, c) layout.
pub fn avg_over_height(input: &Tensor) -> Result<Tensor, NnError> {
    let [n, c, h, w] = dims4(input, "avg_over_height input")?;
    let mut out = Tensor::zeros(&[w, n, c]);
    for b in 0..n {
        for ch in 0..c {
            for x in 0..w {
                let mut acc = 0.0;
                for y in 0..h {
                    acc += input.data[((b * c + ch) * h + y) * w + x];
                }
                out.data[(x * n + b) * c + ch] = acc / h as f64;
            }
        }
    }
    Ok(out)
}

pub fn avg_over_height_backward(input_shape: &[usize], dout: &Tensor) -> Tensor {
    let (n, c, h, w) = (
        input_shape[0],
        input_shape[1],
        input_shape[2],
        input_shape[3],
    );
    let mut din = Tensor::zeros(input_shape);
    for b in 0..n {
        for ch in 0..c {
            for x in 0..w {
                let g = dout.data[(x * n + b) * c + ch] / h as f64;
                for y in 0..h {
                    din.data[((b * c + ch) * h + y) * w + x] += g;
                }
            }
        }
    }
    din
}

/// Single-head self-attention with residual connection over a (w, n, c)
/// sequence: out = softmax(Q K^T / sqrt(c)) V + X per batch element.
pub fn self_attention(
    input: &Tensor,
    wq: &Tensor,
    wk: &Tensor,
    wv: &Tensor,
) -> Result<Tensor, NnError> {
    let (w, n, c) = seq_dims(input)?;
    check_proj(wq, c)?;
    check_proj(wk, c)?;
    check_proj(wv, c)?;
    let mut out = Tensor::zeros(&[w, n, c]);
    for b in 0..n {
        let x = gather_batch(input, b);
        let q = x.dot(&proj(wq, c));
        let k = x.dot(&proj(wk, c));
        let v = x.dot(&proj(wv, c));
        let mut scores = q.dot(&k.t());
        scores.mapv_inplace(|s| s / (c as f64).sqrt());
        for mut row in scores.rows_mut() {
            softmax_row(row.as_slice_mut().unwrap());
        }
        let y = scores.dot(&v) + &x;
        scatter_batch(&mut out, b, &y);
    }
    Ok(out)
}

pub fn self_attention_backward(
    input: &Tensor,
    wq: &Tensor,
    wk: &Tensor,
    wv: &Tensor,
    dout: &Tensor,
) -> Result<(Tensor, Tensor, Tensor, Tensor), NnError> {
    let (w, n, c) = seq_dims(input)?;
    if dout.shape != input.shape {
        return Err(NnError::Shape("self_attention_backward dout shape".into()));
    }
    let scale = 1.0 / (c as f64).sqrt();
    let mut din = Tensor::zeros(&input.shape);
    let mut dwq = Array2::<f64>::zeros((c, c));
    let mut dwk = Array2::<f64>::zeros((c, c));
    let mut dwv = Array2::<f64>::zeros((c, c));
    for b in 0..n {
        let x = gather_batch(input, b);
        let dy = gather_batch(dout, b);
        let pq = proj(wq, c);
        let pk = proj(wk, c);
        let pv = proj(wv, c);
        let q = x.dot(&pq);
        let k = x.dot(&pk);
        let v = x.dot(&pv);
        let mut attn = q.dot(&k.t());
        attn.mapv_inplace(|s| s * scale);
        for mut row in attn.rows_mut() {
            softmax_row(row.as_slice_mut().unwrap());
        }
        let dv = attn.t().dot(&dy);
        let dattn = dy.dot(&v.t());
        // Softmax VJP per row.
        let mut dscores = Array2::<f64>::zeros((w, w));
        for i in 0..w {
            let dot: f64 = (0..w).map(|j| attn[(i, j)] * dattn[(i, j)]).sum();
            for j in 0..w {
                dscores[(i, j)] = attn[(i, j)] * (dattn[(i, j)] - dot) * scale;
            }
        }
        let dq = dscores.dot(&k);
        let dk = dscores.t().dot(&q);
        let dx = dy.clone() + dq.dot(&pq.t()) + dk.dot(&pk.t()) + dv.dot(&pv.t());
        dwq += &x.t().dot(&dq);
        dwk += &x.t().dot(&dk);
        dwv += &x.t().dot(&dv);
        scatter_batch(&mut din, b, &dx);
    }
    Ok((
        din,
        Tensor::from_vec(&[c, c], dwq.into_raw_vec_and_offset().0),
        Tensor::from_vec(&[c, c], dwk.into_raw_vec_and_offset().0),
        Tensor::from_vec(&[c, c], dwv.into_raw_vec_and_offset().0),
    ))
}

fn seq_dims(t: &Tensor) -> Result<(usize, usize, usize), NnError> {
    if t.shape.len() != 3 {
        return Err(NnError::Shape("sequence must be (w, n, c)".into()));
    }
    Ok((t.shape[0], t.shape[1], t.shape[2]))
}

fn check_proj(wp: &Tensor, c: usize) -> Result<(), NnError> {
    if wp.shape != [c, c] {
        return Err(NnError::Shape("attention projection must be (c, c)".into()));
    }
    Ok(())
}

fn proj(wp: &Tensor, c: usize) -> ArrayView2<'_, f64> {
    ArrayView2::from_shape((c, c), &wp.data).unwrap()
}

fn gather_batch(t: &Tensor, b: usize) -> Array2<f64> {
    let (w, n, c) = (t.shape[0], t.shape[1], t.shape[2]);
    Array2::from_shape_fn((w, c), |(i, j)| t.data[(i * n + b) * c + j])
}

fn scatter_batch(t: &mut Tensor, b: usize, m: &Array2<f64>) {
    let (w, n, c) = (t.shape[0], t.shape[1], t.shape[2]);
    for i in 0..w {
        for j in 0..c {
            t.data[(i * n + b) * c + j] = m[(i, j)];
        }
    }
}
