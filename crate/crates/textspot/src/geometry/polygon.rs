use super::Point2;

/// Signed shoelace area (positive for counter-clockwise in a y-up frame).
pub fn polygon_area(poly: &[Point2]) -> f64 {
    let n = poly.len();
    let mut acc = 0.0;
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        acc += a.x * b.y - b.x * a.y;
    }
    acc / 2.0
}

/// Even-odd containment test.
pub fn point_in_polygon(p: Point2, poly: &[Point2]) -> bool {
    let n = poly.len();
    let mut inside = false;
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if p.x < x {
                inside = !inside;
            }
        }
    }
    inside
}

#[derive(Debug, Clone, Copy)]
pub struct IouResult {
    pub iou: f64,
    pub degenerate: bool,
}

/// Intersection-over-union of two simple polygons, estimated by even-odd
/// rasterization on a `raster_px` x `raster_px` grid over the joint bounding
/// box. Deterministic for fixed `raster_px`.
pub fn polygon_iou(a: &[Point2], b: &[Point2], raster_px: usize) -> IouResult {
    assert!(raster_px >= 64, "raster_px must be >= 64");
    if polygon_area(a).abs() < 1e-12 || polygon_area(b).abs() < 1e-12 {
        return IouResult {
            iou: 0.0,
            degenerate: true,
        };
    }
    let mut min = Point2::new(f64::INFINITY, f64::INFINITY);
    let mut max = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in a.iter().chain(b.iter()) {
        min.x = min.x.min(p.x);
        min.y = min.y.min(p.y);
        max.x = max.x.max(p.x);
        max.y = max.y.max(p.y);
    }
    let w = (max.x - min.x).max(1e-9);
    let h = (max.y - min.y).max(1e-9);
    let cell_w = w / raster_px as f64;
    let cell_h = h / raster_px as f64;

    let mut inter = 0u64;
    let mut union = 0u64;
    let mut row_a = vec![false; raster_px];
    let mut row_b = vec![false; raster_px];
    for r in 0..raster_px {
        let y = min.y + (r as f64 + 0.5) * cell_h;
        rasterize_row(a, y, min.x, cell_w, &mut row_a);
        rasterize_row(b, y, min.x, cell_w, &mut row_b);
        for c in 0..raster_px {
            if row_a[c] && row_b[c] {
                inter += 1;
            }
            if row_a[c] || row_b[c] {
                union += 1;
            }
        }
    }
    let iou = if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    };
    IouResult {
        iou,
        degenerate: false,
    }
}

fn rasterize_row(poly: &[Point2], y: f64, x0: f64, cell_w: f64, row: &mut [bool]) {
    row.fill(false);
    // Even-odd scanline: collect edge crossings with this row's center line.
    let n = poly.len();
    let mut xs: Vec<f64> = Vec::with_capacity(8);
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        if (a.y > y) != (b.y > y) {
            xs.push(a.x + (y - a.y) / (b.y - a.y) * (b.x - a.x));
        }
    }
    xs.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let len = row.len();
    for pair in xs.chunks_exact(2) {
        let lo = ((pair[0] - x0) / cell_w - 0.5).ceil().max(0.0) as usize;
        let hi = ((pair[1] - x0) / cell_w - 0.5).floor().min(len as f64 - 1.0);
        if hi < 0.0 {
            continue;
        }
        for cell in row.iter_mut().take(hi as usize + 1).skip(lo) {
            *cell = true;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(x: f64, y: f64, s: f64) -> Vec<Point2> {
        vec![
            Point2::new(x, y),
            Point2::new(x + s, y),
            Point2::new(x + s, y + s),
            Point2::new(x, y + s),
        ]
    }

    #[test]
    fn iou_identical_squares() {
        let a = square(0.0, 0.0, 2.0);
        let r = polygon_iou(&a, &a, 256);
        assert!((r.iou - 1.0).abs() < 1e-12);
        assert!(!r.degenerate);
    }

    #[test]
    fn iou_offset_unit_squares() {
        // Analytic value 0.25 / 1.75 = 1/7.
        let a = square(0.0, 0.0, 1.0);
        let b = square(0.5, 0.5, 1.0);
        let r = polygon_iou(&a, &b, 1024);
        assert!((r.iou - 0.142857).abs() < 0.01, "iou {}", r.iou);
    }

    #[test]
    fn iou_random_quads_vs_high_res_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            // Random convex quadrilateral: jittered box corners.
            let quad = |rng: &mut rand_chacha::ChaCha8Rng, cx: f64, cy: f64| {
                vec![
                    Point2::new(cx + rng.gen_range(0.0..3.0), cy + rng.gen_range(0.0..3.0)),
                    Point2::new(cx + 10.0 - rng.gen_range(0.0..3.0), cy + rng.gen_range(0.0..3.0)),
                    Point2::new(
                        cx + 10.0 - rng.gen_range(0.0..3.0),
                        cy + 10.0 - rng.gen_range(0.0..3.0),
                    ),
                    Point2::new(cx + rng.gen_range(0.0..3.0), cy + 10.0 - rng.gen_range(0.0..3.0)),
                ]
            };
            let a = quad(&mut rng, 0.0, 0.0);
            let b = quad(&mut rng, 3.0, 2.0);
            let est = polygon_iou(&a, &b, 512).iou;
            let oracle = polygon_iou(&a, &b, 4096).iou;
            assert!((est - oracle).abs() < 0.005, "est {est} oracle {oracle}");
        }
    }

    #[test]
    fn iou_degenerate_polygon() {
        let a = square(0.0, 0.0, 1.0);
        let line = vec![
            Point2::new(0.0, 0.0),
            Point2::new(1.0, 0.0),
            Point2::new(2.0, 0.0),
        ];
        let r = polygon_iou(&a, &line, 128);
        assert_eq!(r.iou, 0.0);
        assert!(r.degenerate);
    }

    #[test]
    fn iou_symmetry() {
        let a = square(0.0, 0.0, 3.0);
        let b = square(1.0, 1.0, 3.0);
        let ab = polygon_iou(&a, &b, 256).iou;
        let ba = polygon_iou(&b, &a, 256).iou;
        assert_eq!(ab, ba);
    }

    #[test]
    fn point_in_polygon_basic() {
        let sq = square(0.0, 0.0, 2.0);
        assert!(point_in_polygon(Point2::new(1.0, 1.0), &sq));
        assert!(!point_in_polygon(Point2::new(3.0, 1.0), &sq));
    }

    #[test]
    fn area_square() {
        let sq = square(0.0, 0.0, 2.0);
        assert!((polygon_area(&sq).abs() - 4.0).abs() < 1e-12);
    }
}
