use super::{RectError, SamplingGrid};
use crate::geometry::Point2;
use crate::nn::Tensor;

/// Bilinear sampling of a C x H x W feature map at grid coordinates.
/// Coordinates outside [0, W-1] x [0, H-1] sample a zero-padded border.
pub fn bilinear_sample(features: &Tensor, grid: &SamplingGrid) -> Result<Tensor, RectError> {
    let [c, h, w] = feat_dims(features)?;
    let (oh, ow) = grid.out_size;
    if grid.coords.len() != oh * ow {
        return Err(RectError::Shape("grid coordinate count".into()));
    }
    let mut out = Tensor::zeros(&[c, oh, ow]);
    for (p, q) in grid.coords.iter().enumerate() {
        let xf = q.x.floor();
        let yf = q.y.floor();
        let tx = q.x - xf;
        let ty = q.y - yf;
        let (ix, iy) = (xf as isize, yf as isize);
        for ch in 0..c {
            let tap = |dx: isize, dy: isize| -> f64 {
                let x = ix + dx;
                let y = iy + dy;
                if x < 0 || y < 0 || x >= w as isize || y >= h as isize {
                    0.0
                } else {
                    features.data[(ch * h + y as usize) * w + x as usize]
                }
            };
            out.data[ch * oh * ow + p] = tap(0, 0) * (1.0 - tx) * (1.0 - ty)
                + tap(1, 0) * tx * (1.0 - ty)
                + tap(0, 1) * (1.0 - tx) * ty
                + tap(1, 1) * tx * ty;
        }
    }
    Ok(out)
}

/// Gradients w.r.t. the feature map (scatter of bilinear weights) and the
/// grid coordinates (feature spatial differences).
pub fn bilinear_sample_backward(
    features: &Tensor,
    grid: &SamplingGrid,
    dout: &Tensor,
) -> Result<(Tensor, Vec<Point2>), RectError> {
    let [c, h, w] = feat_dims(features)?;
    let (oh, ow) = grid.out_size;
    if dout.shape != [c, oh, ow] {
        return Err(RectError::Shape("bilinear backward dout shape".into()));
    }
    let mut dfeat = Tensor::zeros(&features.shape);
    let mut dgrid = vec![Point2::new(0.0, 0.0); oh * ow];
    for (p, q) in grid.coords.iter().enumerate() {
        let xf = q.x.floor();
        let yf = q.y.floor();
        let tx = q.x - xf;
        let ty = q.y - yf;
        let (ix, iy) = (xf as isize, yf as isize);
        let inside = |dx: isize, dy: isize| -> Option<usize> {
            let x = ix + dx;
            let y = iy + dy;
            if x < 0 || y < 0 || x >= w as isize || y >= h as isize {
                None
            } else {
                Some(y as usize * w + x as usize)
            }
        };
        let taps = [
            (0, 0, (1.0 - tx) * (1.0 - ty)),
            (1, 0, tx * (1.0 - ty)),
            (0, 1, (1.0 - tx) * ty),
            (1, 1, tx * ty),
        ];
        for ch in 0..c {
            let g = dout.data[ch * oh * ow + p];
            if g == 0.0 {
                continue;
            }
            let val = |dx: isize, dy: isize| -> f64 {
                inside(dx, dy).map_or(0.0, |i| features.data[ch * h * w + i])
            };
            for &(dx, dy, wgt) in &taps {
                if let Some(i) = inside(dx, dy) {
                    dfeat.data[ch * h * w + i] += g * wgt;
                }
            }
            // d(out)/d(x) and d(out)/d(y) by differentiating the weights.
            let dvx = (val(1, 0) - val(0, 0)) * (1.0 - ty) + (val(1, 1) - val(0, 1)) * ty;
            let dvy = (val(0, 1) - val(0, 0)) * (1.0 - tx) + (val(1, 1) - val(1, 0)) * tx;
            dgrid[p].x += g * dvx;
            dgrid[p].y += g * dvy;
        }
    }
    Ok((dfeat, dgrid))
}

fn feat_dims(t: &Tensor) -> Result<[usize; 3], RectError> {
    if t.shape.len() != 3 {
        return Err(RectError::Shape("features must be C x H x W".into()));
    }
    Ok([t.shape[0], t.shape[1], t.shape[2]])
}
