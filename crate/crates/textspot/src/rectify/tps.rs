use nalgebra::DMatrix;

use super::RectError;
use crate::geometry::Point2;

/// Precomputed linear map from 2 * n_rcp control point coordinates to dense
/// grid coordinates. Destination control sites are fixed on the top and
/// bottom rows of the output rectangle, so the thin-plate-spline solve
/// happens once and the per-instance warp is exactly linear in the points.
#[derive(Debug, Clone)]
pub struct TpsBasis {
    pub n_rcp: usize,
    /// (H_out, W_out)
    pub out_size: (usize, usize),
    /// Row-major (H_out * W_out) x (2 * n_rcp).
    pub basis: Vec<f64>,
}

/// Thin-plate radial kernel U(r) = r^2 log(r^2), with U(0) = 0.
fn tps_kernel(r2: f64) -> f64 {
    if r2 <= 0.0 {
        0.0
    } else {
        r2 * r2.ln()
    }
}

/// Destination control sites in output-pixel coordinates: n_rcp evenly spaced
/// sites on the top row (y = 0) then n_rcp on the bottom row (y = H_out - 1).
pub(crate) fn destination_sites(n_rcp: usize, out_size: (usize, usize)) -> Vec<Point2> {
    let (h, w) = out_size;
    let mut sites = Vec::with_capacity(2 * n_rcp);
    for row_y in [0.0, (h - 1) as f64] {
        for k in 0..n_rcp {
            let x = k as f64 / (n_rcp - 1) as f64 * (w - 1) as f64;
            sites.push(Point2::new(x, row_y));
        }
    }
    sites
}

/// Basis rows for arbitrary query points in destination coordinates. Each row
/// holds the 2 * n_rcp weights such that the warped coordinate at that query
/// is the weighted sum of the source control points.
pub fn tps_basis_rows(
    n_rcp: usize,
    out_size: (usize, usize),
    queries: &[Point2],
) -> Result<Vec<f64>, RectError> {
    let (h, w) = out_size;
    if n_rcp < 3 {
        return Err(RectError::Domain(format!(
            "TPS needs at least 3 sites per side, got n_rcp = {n_rcp}"
        )));
    }
    if h < 2 || w < 2 {
        return Err(RectError::SingularSystem(
            "output size must be at least 2x2 (collinear destination sites)".into(),
        ));
    }
    let sites = destination_sites(n_rcp, out_size);
    let m = 2 * n_rcp;

    // Standard interpolating TPS system L = [[K, P], [P^T, 0]].
    let dim = m + 3;
    let mut l = DMatrix::<f64>::zeros(dim, dim);
    for i in 0..m {
        for j in 0..m {
            let d = sites[i] - sites[j];
            l[(i, j)] = tps_kernel(d.x * d.x + d.y * d.y);
        }
        l[(i, m)] = 1.0;
        l[(i, m + 1)] = sites[i].x;
        l[(i, m + 2)] = sites[i].y;
        l[(m, i)] = 1.0;
        l[(m + 1, i)] = sites[i].x;
        l[(m + 2, i)] = sites[i].y;
    }
    let inv = l
        .lu()
        .try_inverse()
        .ok_or_else(|| RectError::SingularSystem("TPS system is not invertible".into()))?;

    // basis row at q = k(q)^T L^{-1}, truncated to the site columns (the
    // affine rows of the RHS are zero).
    let mut basis = vec![0.0; queries.len() * m];
    let mut kvec = vec![0.0; dim];
    for (qi, q) in queries.iter().enumerate() {
        for (j, s) in sites.iter().enumerate() {
            let d = *q - *s;
            kvec[j] = tps_kernel(d.x * d.x + d.y * d.y);
        }
        kvec[m] = 1.0;
        kvec[m + 1] = q.x;
        kvec[m + 2] = q.y;
        let row = &mut basis[qi * m..(qi + 1) * m];
        for (col, val) in row.iter_mut().enumerate() {
            *val = (0..dim).map(|r| kvec[r] * inv[(r, col)]).sum();
        }
    }
    Ok(basis)
}

pub fn build_tps_basis(n_rcp: usize, out_size: (usize, usize)) -> Result<TpsBasis, RectError> {
    let (h, w) = out_size;
    let queries: Vec<Point2> = (0..h)
        .flat_map(|py| (0..w).map(move |px| Point2::new(px as f64, py as f64)))
        .collect();
    let basis = tps_basis_rows(n_rcp, out_size, &queries)?;
    Ok(TpsBasis {
        n_rcp,
        out_size,
        basis,
    })
}

/// Dense sampling grid: one source coordinate per output pixel, row-major.
#[derive(Debug, Clone)]
pub struct SamplingGrid {
    pub out_size: (usize, usize),
    pub coords: Vec<Point2>,
}

/// grid = basis . points. `points` is the flat top-then-bottom control point
/// list matching the destination site order.
pub fn gen_grid(basis: &TpsBasis, points: &[Point2]) -> Result<SamplingGrid, RectError> {
    let m = 2 * basis.n_rcp;
    if points.len() != m {
        return Err(RectError::Shape(format!(
            "expected {m} control points, got {}",
            points.len()
        )));
    }
    let (h, w) = basis.out_size;
    let mut coords = Vec::with_capacity(h * w);
    for p in 0..h * w {
        let row = &basis.basis[p * m..(p + 1) * m];
        let mut x = 0.0;
        let mut y = 0.0;
        for (wgt, pt) in row.iter().zip(points.iter()) {
            x += wgt * pt.x;
            y += wgt * pt.y;
        }
        coords.push(Point2::new(x, y));
    }
    Ok(SamplingGrid {
        out_size: basis.out_size,
        coords,
    })
}

/// Gradient w.r.t. the control points: the transpose of the fixed linear map.
pub fn gen_grid_backward(basis: &TpsBasis, dgrid: &[Point2]) -> Vec<Point2> {
    let m = 2 * basis.n_rcp;
    let mut dpoints = vec![Point2::new(0.0, 0.0); m];
    for (p, g) in dgrid.iter().enumerate() {
        let row = &basis.basis[p * m..(p + 1) * m];
        for (dp, wgt) in dpoints.iter_mut().zip(row.iter()) {
            dp.x += wgt * g.x;
            dp.y += wgt * g.y;
        }
    }
    dpoints
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn basis_rows_sum_to_one() {
        let b = build_tps_basis(4, (8, 32)).unwrap();
        let m = 8;
        for p in 0..8 * 32 {
            let s: f64 = b.basis[p * m..(p + 1) * m].iter().sum();
            assert!((s - 1.0).abs() <= 1e-12, "row {p} sums to {s}");
        }
    }

    #[test]
    fn basis_row_at_site_is_unit_vector() {
        let b = build_tps_basis(4, (8, 32)).unwrap();
        let m = 8;
        let sites = destination_sites(4, (8, 32));
        for (k, s) in sites.iter().enumerate() {
            let p = s.y as usize * 32 + s.x.round() as usize;
            // Only exact-integer sites land on grid pixels.
            if (s.x - s.x.round()).abs() > 1e-9 {
                continue;
            }
            let row = &b.basis[p * m..(p + 1) * m];
            for (j, &v) in row.iter().enumerate() {
                let want = if j == k { 1.0 } else { 0.0 };
                assert!((v - want).abs() <= 1e-9, "site {k} col {j}: {v}");
            }
        }
    }

    #[test]
    fn identity_grid_from_destination_sites() {
        let b = build_tps_basis(4, (8, 32)).unwrap();
        let sites = destination_sites(4, (8, 32));
        let grid = gen_grid(&b, &sites).unwrap();
        for py in 0..8 {
            for px in 0..32 {
                let g = grid.coords[py * 32 + px];
                assert!((g.x - px as f64).abs() <= 1e-9);
                assert!((g.y - py as f64).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn tps_exactness_random_points() {
        // The warp evaluated at the destination control sites must reproduce
        // the predicted points exactly.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(33);
        let sites = destination_sites(8, (8, 32));
        let rows = tps_basis_rows(8, (8, 32), &sites).unwrap();
        let m = 16;
        for _ in 0..100 {
            let points: Vec<Point2> = (0..16)
                .map(|_| Point2::new(rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0)))
                .collect();
            for (k, want) in points.iter().enumerate() {
                let row = &rows[k * m..(k + 1) * m];
                let x: f64 = row.iter().zip(points.iter()).map(|(w, p)| w * p.x).sum();
                let y: f64 = row.iter().zip(points.iter()).map(|(w, p)| w * p.y).sum();
                assert!((x - want.x).abs() <= 1e-9 && (y - want.y).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn translation_equivariance() {
        let b = build_tps_basis(4, (8, 32)).unwrap();
        let sites = destination_sites(4, (8, 32));
        let shifted: Vec<Point2> = sites.iter().map(|p| *p + Point2::new(5.0, -3.0)).collect();
        let g0 = gen_grid(&b, &sites).unwrap();
        let g1 = gen_grid(&b, &shifted).unwrap();
        for (a, c) in g0.coords.iter().zip(g1.coords.iter()) {
            assert!((c.x - a.x - 5.0).abs() <= 1e-9);
            assert!((c.y - a.y + 3.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn affine_images_reproduce_affinely() {
        let b = build_tps_basis(4, (8, 32)).unwrap();
        let sites = destination_sites(4, (8, 32));
        let (sx, sy, tx, ty) = (1.5, 2.0, 7.0, -4.0);
        let mapped: Vec<Point2> = sites
            .iter()
            .map(|p| Point2::new(p.x * sx + tx, p.y * sy + ty))
            .collect();
        let grid = gen_grid(&b, &mapped).unwrap();
        for py in 0..8 {
            for px in 0..32 {
                let g = grid.coords[py * 32 + px];
                assert!((g.x - (px as f64 * sx + tx)).abs() <= 1e-8);
                assert!((g.y - (py as f64 * sy + ty)).abs() <= 1e-8);
            }
        }
    }

    #[test]
    fn affine_combination_linearity() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let b = build_tps_basis(4, (8, 16)).unwrap();
        let rand_pts = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<Point2> {
            (0..8)
                .map(|_| Point2::new(rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0)))
                .collect()
        };
        let p = rand_pts(&mut rng);
        let q = rand_pts(&mut rng);
        let (a, c) = (0.3, 0.7);
        let mix: Vec<Point2> = p
            .iter()
            .zip(q.iter())
            .map(|(u, v)| *u * a + *v * c)
            .collect();
        let gp = gen_grid(&b, &p).unwrap();
        let gq = gen_grid(&b, &q).unwrap();
        let gm = gen_grid(&b, &mix).unwrap();
        for i in 0..gm.coords.len() {
            let want = gp.coords[i] * a + gq.coords[i] * c;
            assert!((gm.coords[i].x - want.x).abs() <= 1e-9);
            assert!((gm.coords[i].y - want.y).abs() <= 1e-9);
        }
    }

    #[test]
    fn point_gradient_matches_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(19);
        let b = build_tps_basis(4, (4, 8)).unwrap();
        let points: Vec<Point2> = (0..8)
            .map(|_| Point2::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)))
            .collect();
        // Scalar loss: weighted sum of grid coordinates.
        let weights: Vec<f64> = (0..4 * 8 * 2).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let flat = |pts: &[Point2]| -> Vec<f64> {
            pts.iter().flat_map(|p| [p.x, p.y]).collect()
        };
        let unflat = |v: &[f64]| -> Vec<Point2> {
            v.chunks(2).map(|c| Point2::new(c[0], c[1])).collect()
        };
        let forward = |v: &[f64]| -> f64 {
            let g = gen_grid(&b, &unflat(v)).unwrap();
            g.coords
                .iter()
                .enumerate()
                .map(|(i, p)| weights[2 * i] * p.x + weights[2 * i + 1] * p.y)
                .sum()
        };
        let dgrid: Vec<Point2> = (0..4 * 8)
            .map(|i| Point2::new(weights[2 * i], weights[2 * i + 1]))
            .collect();
        let dpoints = gen_grid_backward(&b, &dgrid);
        let analytic = flat(&dpoints);
        let err =
            crate::nn::grad_check(forward, &flat(&points), &analytic, 1e-3).unwrap();
        assert!(err <= 1e-6, "err {err}");
    }

    #[test]
    fn degenerate_output_size_is_singular() {
        assert!(build_tps_basis(4, (1, 32)).is_err());
        assert!(build_tps_basis(2, (8, 32)).is_err());
    }
}
