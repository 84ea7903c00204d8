//! Conversion of polygon annotations into dense per-pixel training targets
//! (classification, centerness, control point offsets) plus positive-pixel
//! sampling for the recognition branch.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geometry::{
    fit_cubic_bezier, point_in_polygon, polygon_area, sample_rcp, CubicBezier, Parameterization,
    Point2, RectCtrlPoints, TextPolygon,
};

#[derive(Debug, Error)]
pub enum TargetError {
    #[error("degenerate polygon: central region is empty")]
    EmptyRegion,
    #[error("annotation side has fewer than 2 points")]
    BadAnnotation,
}

/// One pyramid level: feature stride and the (lo, hi] instance-size range
/// admitted at this level. Ranges of consecutive levels partition (0, inf).
#[derive(Debug, Clone, Copy)]
pub struct LevelSpec {
    pub stride: usize,
    pub size_range: (f64, f64),
}

impl LevelSpec {
    pub fn admits(&self, max_side: f64) -> bool {
        max_side > self.size_range.0 && max_side <= self.size_range.1
    }
}

/// Default level layout: each level admits instances up to roughly the
/// receptive field of its tower, so offset regression never has to point
/// outside what the cell can see. Size bound for level i is 8 * stride_i.
pub fn default_levels(strides: &[usize]) -> Vec<LevelSpec> {
    let bounds: Vec<f64> = strides.iter().map(|&s| 8.0 * s as f64).collect();
    let mut lo = 0.0;
    strides
        .iter()
        .enumerate()
        .map(|(i, &stride)| {
            let hi = if i + 1 == strides.len() {
                f64::INFINITY
            } else {
                bounds.get(i).copied().unwrap_or(f64::INFINITY)
            };
            let spec = LevelSpec {
                stride,
                size_range: (lo, hi),
            };
            lo = hi;
            spec
        })
        .collect()
}

/// Dense per-level target maps. Offsets are stored channel-major
/// (4 * n_rcp, H/S, W/S) to match the detection head layout.
#[derive(Debug, Clone)]
pub struct DenseTargetMaps {
    pub stride: usize,
    pub h: usize,
    pub w: usize,
    pub n_rcp: usize,
    pub cls: Vec<f64>,
    pub ctr: Vec<f64>,
    pub rcp_offsets: Vec<f64>,
    pub valid_mask: Vec<f64>,
    /// Instance index per positive cell, -1 elsewhere.
    pub instance_id: Vec<i64>,
}

impl DenseTargetMaps {
    fn new(stride: usize, h: usize, w: usize, n_rcp: usize) -> Self {
        DenseTargetMaps {
            stride,
            h,
            w,
            n_rcp,
            cls: vec![0.0; h * w],
            ctr: vec![0.0; h * w],
            rcp_offsets: vec![0.0; 4 * n_rcp * h * w],
            valid_mask: vec![1.0; h * w],
            instance_id: vec![-1; h * w],
        }
    }

    pub fn cell_center(&self, row: usize, col: usize) -> Point2 {
        Point2::new(
            (col as f64 + 0.5) * self.stride as f64,
            (row as f64 + 0.5) * self.stride as f64,
        )
    }

    pub fn positives(&self) -> impl Iterator<Item = (usize, usize, i64)> + '_ {
        (0..self.h).flat_map(move |r| {
            (0..self.w).filter_map(move |c| {
                let id = self.instance_id[r * self.w + c];
                (id >= 0).then_some((r, c, id))
            })
        })
    }

    pub fn offset_at(&self, ch: usize, row: usize, col: usize) -> f64 {
        self.rcp_offsets[(ch * self.h + row) * self.w + col]
    }
}

/// Per-instance intermediates kept next to the dense maps.
#[derive(Debug, Clone)]
pub struct InstanceTargets {
    pub level: usize,
    pub rcp: RectCtrlPoints,
    pub central: Vec<Point2>,
    pub area: f64,
    pub empty: bool,
}

/// One sampled positive pixel for the recognition branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PositiveSample {
    pub level: usize,
    pub cell: (usize, usize),
    pub instance_id: usize,
}

/// Resample a polyline to `m` points uniformly by arc length.
fn resample_chain(chain: &[Point2], m: usize) -> Vec<Point2> {
    let n = chain.len();
    let mut cum = vec![0.0; n];
    for i in 1..n {
        cum[i] = cum[i - 1] + chain[i].dist(&chain[i - 1]);
    }
    let total = cum[n - 1];
    if total <= 0.0 {
        return vec![chain[0]; m];
    }
    let mut out = Vec::with_capacity(m);
    let mut seg = 0usize;
    for k in 0..m {
        let d = k as f64 / (m - 1) as f64 * total;
        while seg + 2 < n && cum[seg + 1] < d {
            seg += 1;
        }
        let span = (cum[seg + 1] - cum[seg]).max(1e-12);
        let t = (d - cum[seg]) / span;
        out.push(chain[seg] + (chain[seg + 1] - chain[seg]) * t.clamp(0.0, 1.0));
    }
    out
}

/// Fit the two side curves of an instance.
pub fn fit_sides(polygon: &TextPolygon) -> Result<(CubicBezier, CubicBezier), TargetError> {
    if polygon.top.len() < 2 || polygon.bottom.len() < 2 {
        return Err(TargetError::BadAnnotation);
    }
    let fit = |chain: &[Point2]| -> Result<CubicBezier, TargetError> {
        let pts = resample_chain(chain, chain.len().max(8));
        fit_cubic_bezier(&pts, Parameterization::ChordLength).map_err(|_| TargetError::EmptyRegion)
    };
    Ok((fit(&polygon.top)?, fit(&polygon.bottom)?))
}

const CENTRAL_SAMPLES: usize = 24;

/// The band between `mid + shrink (top - mid)` and `mid + shrink (bottom - mid)`
/// with a fraction `end_trim` of the parameter range removed at each end.
pub fn central_region(
    polygon: &TextPolygon,
    shrink: f64,
    end_trim: f64,
) -> Result<Vec<Point2>, TargetError> {
    assert!(shrink > 0.0 && shrink <= 1.0);
    assert!((0.0..0.5).contains(&end_trim));
    let (top, bottom) = fit_sides(polygon)?;
    let mut upper = Vec::with_capacity(CENTRAL_SAMPLES);
    let mut lower = Vec::with_capacity(CENTRAL_SAMPLES);
    for k in 0..CENTRAL_SAMPLES {
        let t = end_trim
            + (1.0 - 2.0 * end_trim) * k as f64 / (CENTRAL_SAMPLES - 1) as f64;
        let pt = top.eval(t);
        let pb = bottom.eval(t);
        let mid = (pt + pb) * 0.5;
        upper.push(mid + (pt - mid) * shrink);
        lower.push(mid + (pb - mid) * shrink);
    }
    let mut poly = upper;
    poly.extend(lower.into_iter().rev());
    if polygon_area(&poly).abs() < 1e-9 {
        return Err(TargetError::EmptyRegion);
    }
    Ok(poly)
}

/// Index of the unique level whose size range contains the polygon's longest
/// bounding-box side.
pub fn assign_level(polygon: &TextPolygon, levels: &[LevelSpec]) -> usize {
    let side = polygon.max_side();
    levels
        .iter()
        .position(|l| l.admits(side))
        .unwrap_or(levels.len() - 1)
}

/// Locate the band parameters (u, v) of a query point: u is the normalized
/// longitudinal position in the trimmed band, v the normalized transverse
/// position, both in [-1, 1].
fn band_params(
    q: Point2,
    top: &CubicBezier,
    bottom: &CubicBezier,
    shrink: f64,
    end_trim: f64,
) -> (f64, f64) {
    const STEPS: usize = 200;
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for k in 0..=STEPS {
        let t = end_trim + (1.0 - 2.0 * end_trim) * k as f64 / STEPS as f64;
        let pt = top.eval(t);
        let pb = bottom.eval(t);
        let mid = (pt + pb) * 0.5;
        let d = (pt - mid) * shrink;
        let len2 = (d.x * d.x + d.y * d.y).max(1e-12);
        let s = (((q.x - mid.x) * d.x + (q.y - mid.y) * d.y) / len2).clamp(-1.0, 1.0);
        let on_seg = mid + d * s;
        let dist = q.dist(&on_seg);
        if dist < best.0 {
            let u = 2.0 * (t - end_trim) / (1.0 - 2.0 * end_trim) - 1.0;
            best = (dist, u, s);
        }
    }
    (best.1, best.2)
}

pub const DEFAULT_SHRINK: f64 = 0.5;
pub const DEFAULT_END_TRIM: f64 = 0.15;

/// Build dense target maps for all levels plus per-instance intermediates.
/// Overlapping central regions resolve to the smaller-area instance.
pub fn make_targets(
    instances: &[TextPolygon],
    image_size: (usize, usize),
    levels: &[LevelSpec],
    n_rcp: usize,
) -> (Vec<DenseTargetMaps>, Vec<InstanceTargets>) {
    let (ih, iw) = image_size;
    let mut maps: Vec<DenseTargetMaps> = levels
        .iter()
        .map(|l| DenseTargetMaps::new(l.stride, ih / l.stride, iw / l.stride, n_rcp))
        .collect();

    let mut infos: Vec<InstanceTargets> = Vec::with_capacity(instances.len());
    for polygon in instances {
        let level = assign_level(polygon, levels);
        let sides = fit_sides(polygon);
        let (rcp, central, empty) = match &sides {
            Ok((top, bottom)) => {
                let rcp = sample_rcp(top, bottom, n_rcp).expect("n_rcp >= 2");
                match central_region(polygon, DEFAULT_SHRINK, DEFAULT_END_TRIM) {
                    Ok(c) => (rcp, c, false),
                    Err(_) => (rcp, Vec::new(), true),
                }
            }
            Err(_) => (
                RectCtrlPoints {
                    top: vec![Point2::new(0.0, 0.0); n_rcp],
                    bottom: vec![Point2::new(0.0, 0.0); n_rcp],
                },
                Vec::new(),
                true,
            ),
        };
        infos.push(InstanceTargets {
            level,
            rcp,
            central,
            area: polygon_area(&polygon.outline()).abs(),
            empty,
        });
    }

    for (id, (polygon, info)) in instances.iter().zip(infos.iter()).enumerate() {
        let map = &mut maps[info.level];
        if info.empty {
            // No positives; mark the whole polygon invalid for classification.
            let outline = polygon.outline();
            for r in 0..map.h {
                for c in 0..map.w {
                    if point_in_polygon(map.cell_center(r, c), &outline) {
                        map.valid_mask[r * map.w + c] = 0.0;
                    }
                }
            }
            continue;
        }
        let (top, bottom) = fit_sides(polygon).expect("checked above");
        let (bmin, bmax) = polygon.bbox();
        let s = map.stride as f64;
        let r0 = ((bmin.y / s).floor().max(0.0)) as usize;
        let r1 = ((bmax.y / s).ceil() as usize).min(map.h);
        let c0 = ((bmin.x / s).floor().max(0.0)) as usize;
        let c1 = ((bmax.x / s).ceil() as usize).min(map.w);
        for r in r0..r1 {
            for c in c0..c1 {
                let q = map.cell_center(r, c);
                if !point_in_polygon(q, &info.central) {
                    continue;
                }
                let cell = r * map.w + c;
                if let Some(prev) = usize::try_from(map.instance_id[cell]).ok() {
                    if infos[prev].area <= info.area {
                        continue; // smaller-area instance wins
                    }
                }
                let (u, v) = band_params(q, &top, &bottom, DEFAULT_SHRINK, DEFAULT_END_TRIM);
                map.instance_id[cell] = id as i64;
                map.cls[cell] = 1.0;
                map.ctr[cell] = ((1.0 - u.abs()) * (1.0 - v.abs())).max(0.0).sqrt();
                for (k, p) in info.rcp.flat().iter().enumerate() {
                    let dx = p.x - q.x;
                    let dy = p.y - q.y;
                    map.rcp_offsets[((2 * k) * map.h + r) * map.w + c] = dx;
                    map.rcp_offsets[((2 * k + 1) * map.h + r) * map.w + c] = dy;
                }
            }
        }
    }
    (maps, infos)
}

/// Stratified positive-pixel sampling: every instance with at least one
/// positive first receives floor(n_text / #instances) samples, the remainder
/// is filled uniformly at random. Deterministic for a fixed seed.
/// Returns the samples and a warning flag when there are no positives.
pub fn sample_positive_pixels(
    maps: &[DenseTargetMaps],
    n_text: usize,
    rng_seed: u64,
) -> (Vec<PositiveSample>, bool) {
    assert!(n_text >= 1);
    let mut per_instance: std::collections::BTreeMap<usize, Vec<PositiveSample>> =
        Default::default();
    for (level, map) in maps.iter().enumerate() {
        for (r, c, id) in map.positives() {
            per_instance.entry(id as usize).or_default().push(PositiveSample {
                level,
                cell: (r, c),
                instance_id: id as usize,
            });
        }
    }
    if per_instance.is_empty() {
        return (Vec::new(), true);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let quota = n_text / per_instance.len();
    let mut chosen = Vec::new();
    let mut leftovers = Vec::new();
    for cells in per_instance.values_mut() {
        cells.shuffle(&mut rng);
        let take = quota.min(cells.len());
        chosen.extend_from_slice(&cells[..take]);
        leftovers.extend_from_slice(&cells[take..]);
    }
    let remaining = n_text.saturating_sub(chosen.len());
    if remaining > 0 && !leftovers.is_empty() {
        leftovers.shuffle(&mut rng);
        chosen.extend_from_slice(&leftovers[..remaining.min(leftovers.len())]);
    }
    (chosen, false)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect_polygon(x0: f64, y0: f64, w: f64, h: f64, text: &str) -> TextPolygon {
        let pts = |y: f64| -> Vec<Point2> {
            (0..6)
                .map(|k| Point2::new(x0 + k as f64 / 5.0 * w, y))
                .collect()
        };
        TextPolygon {
            top: pts(y0),
            bottom: pts(y0 + h),
            transcript: text.to_string(),
        }
    }

    fn toy_levels() -> Vec<LevelSpec> {
        vec![LevelSpec {
            stride: 4,
            size_range: (0.0, f64::INFINITY),
        }]
    }

    #[test]
    fn central_region_of_rectangle() {
        let p = rect_polygon(0.0, 0.0, 100.0, 20.0, "x");
        let region = central_region(&p, 0.5, 0.15).unwrap();
        let xs: Vec<f64> = region.iter().map(|q| q.x).collect();
        let ys: Vec<f64> = region.iter().map(|q| q.y).collect();
        let fmin = |v: &[f64]| v.iter().cloned().fold(f64::INFINITY, f64::min);
        let fmax = |v: &[f64]| v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!((fmin(&xs) - 15.0).abs() < 1e-6);
        assert!((fmax(&xs) - 85.0).abs() < 1e-6);
        assert!((fmin(&ys) - 5.0).abs() < 1e-6);
        assert!((fmax(&ys) - 15.0).abs() < 1e-6);
    }

    #[test]
    fn central_region_identity_settings() {
        let p = rect_polygon(0.0, 0.0, 60.0, 20.0, "x");
        let region = central_region(&p, 1.0, 0.0).unwrap();
        for q in &region {
            assert!(q.x >= -1e-6 && q.x <= 60.0 + 1e-6);
            assert!(q.y >= -1e-6 && q.y <= 20.0 + 1e-6);
        }
        let area = polygon_area(&region).abs();
        assert!((area - 1200.0).abs() < 1e-3, "area {area}");
    }

    #[test]
    fn central_region_vertices_inside_original() {
        // Curved instance; oracle is the even-odd containment test.
        let top: Vec<Point2> = (0..8)
            .map(|k| {
                let x = k as f64 / 7.0 * 100.0;
                Point2::new(x, 30.0 - 20.0 * (std::f64::consts::PI * x / 100.0).sin())
            })
            .collect();
        let bottom: Vec<Point2> = top
            .iter()
            .map(|p| Point2::new(p.x, p.y + 22.0))
            .collect();
        let poly = TextPolygon {
            top,
            bottom,
            transcript: "abc".into(),
        };
        let region = central_region(&poly, 0.5, 0.15).unwrap();
        let outline = poly.outline();
        for q in &region {
            assert!(point_in_polygon(*q, &outline), "vertex {q:?} escaped");
        }
    }

    #[test]
    fn assign_level_ranges() {
        let p50 = rect_polygon(0.0, 0.0, 50.0, 10.0, "x");
        let p64 = rect_polygon(0.0, 0.0, 64.0, 10.0, "x");
        let p200 = rect_polygon(0.0, 0.0, 200.0, 10.0, "x");
        let levels = vec![
            LevelSpec { stride: 8, size_range: (0.0, 64.0) },
            LevelSpec { stride: 16, size_range: (64.0, 128.0) },
            LevelSpec { stride: 32, size_range: (128.0, f64::INFINITY) },
        ];
        assert_eq!(assign_level(&p50, &levels), 0);
        assert_eq!(assign_level(&p64, &levels), 0); // half-open (lo, hi]
        assert_eq!(assign_level(&p200, &levels), 2);
    }

    #[test]
    fn default_levels_partition() {
        let levels = default_levels(&[8, 16, 32, 64, 128]);
        for side in [1.0, 63.9, 64.0, 64.1, 500.0, 513.0, 1e6] {
            let n = levels.iter().filter(|l| l.admits(side)).count();
            assert_eq!(n, 1, "side {side} admitted by {n} levels");
        }
    }

    #[test]
    fn offsets_follow_definition() {
        // A cell center at (10, 20) and control point (13, 24) gives (3, 4).
        let p = rect_polygon(4.0, 12.0, 72.0, 16.0, "x");
        let (maps, infos) = make_targets(
            &[p],
            (64, 128),
            &toy_levels(),
            4,
        );
        let map = &maps[0];
        let mut found = 0;
        for (r, c, id) in map.positives() {
            let q = map.cell_center(r, c);
            for (k, pt) in infos[id as usize].rcp.flat().iter().enumerate() {
                assert!((map.offset_at(2 * k, r, c) - (pt.x - q.x)).abs() < 1e-9);
                assert!((map.offset_at(2 * k + 1, r, c) - (pt.y - q.y)).abs() < 1e-9);
            }
            found += 1;
        }
        assert!(found > 0, "no positive cells");
    }

    #[test]
    fn reconstruction_round_trip() {
        // center + offsets must reproduce sample_rcp output.
        let p = rect_polygon(8.0, 16.0, 96.0, 24.0, "abc");
        let (maps, infos) = make_targets(&[p], (64, 128), &toy_levels(), 8);
        let map = &maps[0];
        for (r, c, id) in map.positives() {
            let q = map.cell_center(r, c);
            for (k, pt) in infos[id as usize].rcp.flat().iter().enumerate() {
                let rx = q.x + map.offset_at(2 * k, r, c);
                let ry = q.y + map.offset_at(2 * k + 1, r, c);
                assert!((rx - pt.x).abs() <= 1e-6 && (ry - pt.y).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn positives_subset_of_central_region() {
        let p = rect_polygon(8.0, 16.0, 96.0, 24.0, "abc");
        let (maps, infos) = make_targets(&[p.clone()], (64, 128), &toy_levels(), 4);
        let map = &maps[0];
        for (r, c, _) in map.positives() {
            assert!(point_in_polygon(map.cell_center(r, c), &infos[0].central));
        }
    }

    #[test]
    fn centerness_range_and_interior_peak() {
        let p = rect_polygon(8.0, 16.0, 96.0, 24.0, "abc");
        let (maps, _) = make_targets(&[p], (64, 128), &toy_levels(), 4);
        let map = &maps[0];
        let mut max_ctr: f64 = 0.0;
        for (r, c, _) in map.positives() {
            let v = map.ctr[r * map.w + c];
            assert!((0.0..=1.0).contains(&v));
            max_ctr = max_ctr.max(v);
        }
        assert!(max_ctr > 0.7, "peak centerness {max_ctr}");
    }

    #[test]
    fn overlap_smaller_area_wins() {
        let big = rect_polygon(0.0, 8.0, 120.0, 48.0, "big");
        let small = rect_polygon(30.0, 24.0, 60.0, 16.0, "small");
        let (maps, _) = make_targets(&[big, small], (64, 128), &toy_levels(), 4);
        let map = &maps[0];
        // Cells in the small instance's central region must belong to it.
        let mut small_cells = 0;
        for (_, _, id) in map.positives() {
            if id == 1 {
                small_cells += 1;
            }
        }
        assert!(small_cells > 0);
        // The center of the small box is contested; the smaller one owns it.
        let center_cell = map.instance_id[(32 / 4) * map.w + (60 / 4)];
        assert_eq!(center_cell, 1);
    }

    #[test]
    fn determinism_bit_exact() {
        let p = rect_polygon(8.0, 16.0, 96.0, 24.0, "abc");
        let (m1, _) = make_targets(&[p.clone()], (64, 128), &toy_levels(), 8);
        let (m2, _) = make_targets(&[p], (64, 128), &toy_levels(), 8);
        assert_eq!(m1[0].cls, m2[0].cls);
        assert_eq!(m1[0].ctr, m2[0].ctr);
        assert_eq!(m1[0].rcp_offsets, m2[0].rcp_offsets);
        let (s1, _) = sample_positive_pixels(&m1, 16, 99);
        let (s2, _) = sample_positive_pixels(&m2, 16, 99);
        assert_eq!(s1, s2);
    }

    #[test]
    fn sampling_clamps_without_duplicates() {
        let p = rect_polygon(8.0, 16.0, 96.0, 24.0, "abc");
        let (maps, _) = make_targets(&[p], (64, 128), &toy_levels(), 4);
        let n_pos = maps[0].positives().count();
        let (samples, warned) = sample_positive_pixels(&maps, 64, 7);
        assert!(!warned);
        assert_eq!(samples.len(), n_pos.min(64));
        let mut seen: Vec<_> = samples.iter().map(|s| s.cell).collect();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), samples.len(), "duplicate samples");
    }

    #[test]
    fn sampling_stratifies_evenly() {
        let mut instances = Vec::new();
        for i in 0..4 {
            instances.push(rect_polygon(4.0, 4.0 + 30.0 * i as f64, 110.0, 20.0, "x"));
        }
        let (maps, _) = make_targets(&instances, (128, 128), &toy_levels(), 4);
        let (samples, _) = sample_positive_pixels(&maps, 8, 3);
        assert_eq!(samples.len(), 8);
        for id in 0..4 {
            let n = samples.iter().filter(|s| s.instance_id == id).count();
            assert_eq!(n, 2, "instance {id} got {n} samples");
        }
    }

    #[test]
    fn no_positives_warns() {
        let maps = vec![DenseTargetMaps::new(4, 8, 8, 4)];
        let (samples, warned) = sample_positive_pixels(&maps, 8, 1);
        assert!(samples.is_empty());
        assert!(warned);
    }
}
