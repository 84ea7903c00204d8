//! Deterministic synthetic curved-text generator: toy glyph strings rendered
//! along random cubic Bezier ribbons, with polygon + transcript annotations.

mod ppm;

pub use ppm::{read_ppm, write_ppm};

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{CubicBezier, Point2, TextPolygon};
use crate::nn::Tensor;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed annotation at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("format error: {0}")]
    Format(String),
}

/// The toy character set: 12 glyph symbols. The recognition head adds a pad
/// class on top of these.
pub const CHARSET: &str = "ACEFHILOTUXZ";

pub const GLYPH_ROWS: usize = 7;
pub const GLYPH_COLS: usize = 5;

/// Fraction of the per-character advance occupied by ink; the rest is
/// inter-glyph gap, which keeps adjacent glyphs separable.
pub const GLYPH_FILL: f64 = 0.625;

/// Fixed-size binary bitmaps for every charset symbol.
#[derive(Debug, Clone)]
pub struct GlyphAtlas {
    glyphs: BTreeMap<char, [u8; GLYPH_ROWS * GLYPH_COLS]>,
}

impl GlyphAtlas {
    pub fn toy() -> Self {
        let patterns: [(char, [&str; GLYPH_ROWS]); 12] = [
            ('A', [".###.", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"]),
            ('C', [".####", "#....", "#....", "#....", "#....", "#....", ".####"]),
            ('E', ["#####", "#....", "#....", "####.", "#....", "#....", "#####"]),
            ('F', ["#####", "#....", "#....", "####.", "#....", "#....", "#...."]),
            ('H', ["#...#", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"]),
            ('I', ["#####", "..#..", "..#..", "..#..", "..#..", "..#..", "#####"]),
            ('L', ["#....", "#....", "#....", "#....", "#....", "#....", "#####"]),
            ('O', [".###.", "#...#", "#...#", "#...#", "#...#", "#...#", ".###."]),
            ('T', ["#####", "..#..", "..#..", "..#..", "..#..", "..#..", "..#.."]),
            ('U', ["#...#", "#...#", "#...#", "#...#", "#...#", "#...#", ".###."]),
            ('X', ["#...#", "#...#", ".#.#.", "..#..", ".#.#.", "#...#", "#...#"]),
            ('Z', ["#####", "....#", "...#.", "..#..", ".#...", "#....", "#####"]),
        ];
        let mut glyphs = BTreeMap::new();
        for (ch, rows) in patterns {
            let mut bits = [0u8; GLYPH_ROWS * GLYPH_COLS];
            for (r, row) in rows.iter().enumerate() {
                for (c, cell) in row.bytes().enumerate() {
                    bits[r * GLYPH_COLS + c] = (cell == b'#') as u8;
                }
            }
            glyphs.insert(ch, bits);
        }
        GlyphAtlas { glyphs }
    }

    pub fn bitmap(&self, symbol: char) -> Option<&[u8; GLYPH_ROWS * GLYPH_COLS]> {
        self.glyphs.get(&symbol)
    }

    pub fn symbols(&self) -> impl Iterator<Item = char> + '_ {
        self.glyphs.keys().copied()
    }
}

/// Generation parameters; all ranges are inclusive.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub image_size: (usize, usize),
    pub instances_per_image: (usize, usize),
    pub text_len: (usize, usize),
    /// Max control-point deviation as a fraction of the text length.
    pub curvature: f64,
    pub height_px: (f64, f64),
    pub rotation_deg: (f64, f64),
    pub noise_std: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            image_size: (128, 256),
            instances_per_image: (1, 3),
            text_len: (3, 8),
            curvature: 0.25,
            height_px: (16.0, 28.0),
            rotation_deg: (-20.0, 20.0),
            noise_std: 0.02,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let ok = self.instances_per_image.0 <= self.instances_per_image.1
            && self.instances_per_image.0 >= 1
            && self.text_len.0 <= self.text_len.1
            && self.text_len.0 >= 1
            && self.height_px.0 <= self.height_px.1
            && self.height_px.0 > 0.0
            && self.rotation_deg.0 <= self.rotation_deg.1
            && self.rotation_deg.0 >= -45.0
            && self.rotation_deg.1 <= 45.0
            && self.curvature >= 0.0
            && self.noise_std >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(SynthError::Format("invalid synthesis spec".into()))
        }
    }
}

/// One generated image with its annotations.
#[derive(Debug, Clone)]
pub struct Sample {
    pub image: Tensor,
    pub instances: Vec<TextPolygon>,
}

const ANNOTATION_POINTS: usize = 10;
const PLACEMENT_RETRIES: usize = 20;
const MIDLINE_SAMPLES: usize = 64;

struct Ribbon {
    midline: CubicBezier,
    height: f64,
}

impl Ribbon {
    /// Point offset from the midline: v = -1 top edge, +1 bottom edge.
    fn at(&self, t: f64, v: f64) -> Point2 {
        let m = self.midline.eval(t);
        let n = self.normal_up(t);
        m + n * (-v * self.height * 0.5)
    }

    /// Unit normal pointing toward the top side (negative y for level text).
    fn normal_up(&self, t: f64) -> Point2 {
        let dt = 1e-4;
        let a = self.midline.eval((t - dt).max(0.0));
        let b = self.midline.eval((t + dt).min(1.0));
        let tang = b - a;
        let len = (tang.x * tang.x + tang.y * tang.y).sqrt().max(1e-12);
        Point2::new(tang.y / len, -tang.x / len)
    }
}

fn try_place_ribbon(spec: &SynthSpec, rng: &mut ChaCha8Rng, len: usize) -> Option<(Ribbon, f64)> {
    let (img_h, img_w) = spec.image_size;
    let height = rng.gen_range(spec.height_px.0..=spec.height_px.1);
    let arc = len as f64 * height * 0.8;
    let theta = rng
        .gen_range(spec.rotation_deg.0..=spec.rotation_deg.1)
        .to_radians();
    let u = Point2::new(theta.cos(), theta.sin());
    let n = Point2::new(theta.sin(), -theta.cos());
    let margin = height * 0.75 + 2.0;
    if img_w as f64 <= 2.0 * margin + arc.min(img_w as f64 * 0.9) * 0.1 {
        return None;
    }
    let p0 = Point2::new(
        rng.gen_range(margin..(img_w as f64 - margin)),
        rng.gen_range(margin..(img_h as f64 - margin)),
    );
    let d1 = rng.gen_range(-spec.curvature..=spec.curvature) * arc;
    let d2 = rng.gen_range(-spec.curvature..=spec.curvature) * arc;
    let midline = CubicBezier::new([
        p0,
        p0 + u * (arc / 3.0) + n * d1,
        p0 + u * (2.0 * arc / 3.0) + n * d2,
        p0 + u * arc,
    ]);
    let ribbon = Ribbon { midline, height };
    // Whole ribbon must stay inside the image.
    for k in 0..=MIDLINE_SAMPLES {
        let t = k as f64 / MIDLINE_SAMPLES as f64;
        for v in [-1.0, 1.0] {
            let p = ribbon.at(t, v);
            if p.x < 1.0 || p.y < 1.0 || p.x > img_w as f64 - 2.0 || p.y > img_h as f64 - 2.0 {
                return None;
            }
        }
    }
    Some((ribbon, arc))
}

fn bboxes_overlap(a: (Point2, Point2), b: (Point2, Point2), pad: f64) -> bool {
    a.0.x - pad < b.1.x && b.0.x - pad < a.1.x && a.0.y - pad < b.1.y && b.0.y - pad < a.1.y
}

fn paint_glyph(
    image: &mut Tensor,
    bits: &[u8; GLYPH_ROWS * GLYPH_COLS],
    center: Point2,
    u: Point2,
    n_up: Point2,
    gw: f64,
    gh: f64,
    ink: [f64; 3],
) {
    let (h, w) = (image.shape[1], image.shape[2]);
    let half = 0.5 * (gw * gw + gh * gh).sqrt() + 1.0;
    let r0 = ((center.y - half).floor().max(0.0)) as usize;
    let r1 = (((center.y + half).ceil() as usize) + 1).min(h);
    let c0 = ((center.x - half).floor().max(0.0)) as usize;
    let c1 = (((center.x + half).ceil() as usize) + 1).min(w);
    for r in r0..r1 {
        for c in c0..c1 {
            let p = Point2::new(c as f64 + 0.5, r as f64 + 0.5) - center;
            let a = (p.x * u.x + p.y * u.y) / gw + 0.5;
            let b = -(p.x * n_up.x + p.y * n_up.y) / gh + 0.5;
            if !(0.0..1.0).contains(&a) || !(0.0..1.0).contains(&b) {
                continue;
            }
            let col = ((a * GLYPH_COLS as f64) as usize).min(GLYPH_COLS - 1);
            let row = ((b * GLYPH_ROWS as f64) as usize).min(GLYPH_ROWS - 1);
            if bits[row * GLYPH_COLS + col] == 1 {
                for (ch, &v) in ink.iter().enumerate() {
                    image.data[(ch * h + r) * w + c] = v;
                }
            }
        }
    }
}

/// Render one sample. Deterministic for a fixed seed. Instances that fail to
/// fit after a bounded number of retries are silently dropped (fewer
/// instances than drawn from the range).
pub fn render_sample(spec: &SynthSpec, seed: u64) -> Result<Sample, SynthError> {
    spec.validate()?;
    let atlas = GlyphAtlas::toy();
    let charset: Vec<char> = CHARSET.chars().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (img_h, img_w) = spec.image_size;
    let mut image = Tensor::zeros(&[3, img_h, img_w]);
    for ch in 0..3 {
        let bg = rng.gen_range(0.55..0.85);
        image.data[ch * img_h * img_w..(ch + 1) * img_h * img_w].fill(bg);
    }

    let want = rng.gen_range(spec.instances_per_image.0..=spec.instances_per_image.1);
    let mut instances: Vec<TextPolygon> = Vec::new();
    let mut placed_boxes: Vec<(Point2, Point2)> = Vec::new();
    for _ in 0..want {
        let mut placed = false;
        for _retry in 0..PLACEMENT_RETRIES {
            let len = rng.gen_range(spec.text_len.0..=spec.text_len.1);
            let Some((ribbon, arc)) = try_place_ribbon(spec, &mut rng, len) else {
                continue;
            };
            let top: Vec<Point2> = (0..ANNOTATION_POINTS)
                .map(|k| ribbon.at(k as f64 / (ANNOTATION_POINTS - 1) as f64, -1.0))
                .collect();
            let bottom: Vec<Point2> = (0..ANNOTATION_POINTS)
                .map(|k| ribbon.at(k as f64 / (ANNOTATION_POINTS - 1) as f64, 1.0))
                .collect();
            let poly = TextPolygon {
                top,
                bottom,
                transcript: String::new(),
            };
            let bbox = poly.bbox();
            if placed_boxes.iter().any(|b| bboxes_overlap(*b, bbox, 3.0)) {
                continue;
            }
            let transcript: String = (0..len)
                .map(|_| charset[rng.gen_range(0..charset.len())])
                .collect();
            let ink = [
                rng.gen_range(0.0..0.25),
                rng.gen_range(0.0..0.25),
                rng.gen_range(0.0..0.25),
            ];
            for (j, symbol) in transcript.chars().enumerate() {
                let tc = (j as f64 + 0.5) / len as f64;
                let center = ribbon.midline.eval(tc);
                let n_up = ribbon.normal_up(tc);
                let u = Point2::new(-n_up.y, n_up.x);
                let advance = arc / len as f64;
                paint_glyph(
                    &mut image,
                    atlas.bitmap(symbol).expect("charset symbol"),
                    center,
                    u,
                    n_up,
                    GLYPH_FILL * advance,
                    ribbon.height * 0.8,
                    ink,
                );
            }
            placed_boxes.push(bbox);
            instances.push(TextPolygon { transcript, ..poly });
            placed = true;
            break;
        }
        if !placed {
            continue;
        }
    }

    if spec.noise_std > 0.0 {
        let noise = Tensor::randn(&image.shape, spec.noise_std, &mut rng);
        for (v, n) in image.data.iter_mut().zip(noise.data.iter()) {
            *v += n;
        }
    }
    for v in &mut image.data {
        *v = v.clamp(0.0, 1.0);
    }
    Ok(Sample { image, instances })
}

fn image_name(index: usize) -> String {
    format!("img_{index:05}.ppm")
}

#[derive(Serialize, Deserialize)]
struct AnnotationLine {
    image: String,
    instances: Vec<TextPolygon>,
}

/// Write samples as PPM images plus an `annotations.jsonl` index.
pub fn write_dataset(samples: &[Sample], dir: &Path) -> Result<(), SynthError> {
    fs::create_dir_all(dir)?;
    let mut jsonl = fs::File::create(dir.join("annotations.jsonl"))?;
    for (i, sample) in samples.iter().enumerate() {
        let name = image_name(i);
        write_ppm(&dir.join(&name), &sample.image)?;
        let line = AnnotationLine {
            image: name,
            instances: sample.instances.clone(),
        };
        let json = serde_json::to_string(&line)
            .map_err(|e| SynthError::Format(format!("annotation encode: {e}")))?;
        writeln!(jsonl, "{json}")?;
    }
    Ok(())
}

pub fn read_dataset(dir: &Path) -> Result<Vec<Sample>, SynthError> {
    let file = fs::File::open(dir.join("annotations.jsonl"))?;
    let mut samples = Vec::new();
    for (idx, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ann: AnnotationLine = serde_json::from_str(&line).map_err(|e| SynthError::Parse {
            line: idx + 1,
            msg: e.to_string(),
        })?;
        let image = read_ppm(&dir.join(&ann.image))?;
        samples.push(Sample {
            image,
            instances: ann.instances,
        });
    }
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{fit_cubic_bezier, Parameterization};
    use std::collections::hash_map::DefaultHasher;
    use std::hash::{Hash, Hasher};

    fn straight_spec() -> SynthSpec {
        SynthSpec {
            instances_per_image: (1, 1),
            curvature: 0.0,
            rotation_deg: (0.0, 0.0),
            noise_std: 0.0,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn atlas_complete_and_distinct() {
        let atlas = GlyphAtlas::toy();
        let symbols: Vec<char> = atlas.symbols().collect();
        assert_eq!(symbols.len(), 12);
        for ch in CHARSET.chars() {
            assert!(atlas.bitmap(ch).is_some(), "missing {ch}");
        }
        for (i, a) in symbols.iter().enumerate() {
            for b in &symbols[i + 1..] {
                assert_ne!(atlas.bitmap(*a), atlas.bitmap(*b), "{a} == {b}");
            }
        }
    }

    #[test]
    fn straight_text_annotation_is_rectangle() {
        let sample = render_sample(&straight_spec(), 11).unwrap();
        assert_eq!(sample.instances.len(), 1);
        let poly = &sample.instances[0];
        let ty = poly.top[0].y;
        let by = poly.bottom[0].y;
        for p in &poly.top {
            assert!((p.y - ty).abs() <= 0.5);
        }
        for p in &poly.bottom {
            assert!((p.y - by).abs() <= 0.5);
        }
        assert!(by > ty);
    }

    #[test]
    fn same_seed_bit_identical() {
        let spec = SynthSpec::default();
        let a = render_sample(&spec, 123).unwrap();
        let b = render_sample(&spec, 123).unwrap();
        assert_eq!(a.image.data, b.image.data);
        assert_eq!(a.instances.len(), b.instances.len());
        for (x, y) in a.instances.iter().zip(b.instances.iter()) {
            assert_eq!(x.transcript, y.transcript);
            assert_eq!(x.top, y.top);
        }
    }

    #[test]
    fn distinct_seeds_distinct_images() {
        let spec = SynthSpec::default();
        let mut hashes = std::collections::HashSet::new();
        for seed in 0..100u64 {
            let s = render_sample(&spec, seed).unwrap();
            let bytes: Vec<u8> = s
                .image
                .data
                .iter()
                .map(|v| (v * 255.0).round() as u8)
                .collect();
            let mut h = DefaultHasher::new();
            bytes.hash(&mut h);
            hashes.insert(h.finish());
        }
        assert_eq!(hashes.len(), 100);
    }

    #[test]
    fn polygons_inside_image() {
        let spec = SynthSpec::default();
        for seed in 0..20u64 {
            let s = render_sample(&spec, seed).unwrap();
            for poly in &s.instances {
                for p in poly.top.iter().chain(poly.bottom.iter()) {
                    assert!(p.x >= 0.0 && p.x <= spec.image_size.1 as f64);
                    assert!(p.y >= 0.0 && p.y <= spec.image_size.0 as f64);
                }
                assert!(!poly.transcript.is_empty());
                for ch in poly.transcript.chars() {
                    assert!(CHARSET.contains(ch));
                }
            }
        }
    }

    #[test]
    fn glyph_run_count_matches_transcript_length() {
        // Noise-free straight render: project the ink mask onto x and count
        // maximal runs of inked columns — one per glyph.
        let sample = render_sample(&straight_spec(), 7).unwrap();
        let poly = &sample.instances[0];
        let (h, w) = (sample.image.shape[1], sample.image.shape[2]);
        // Ink is darker than 0.3 on every channel; background >= 0.55.
        let mut col_has_ink = vec![false; w];
        for r in 0..h {
            for c in 0..w {
                let dark = (0..3).all(|ch| sample.image.data[(ch * h + r) * w + c] < 0.35);
                if dark {
                    col_has_ink[c] = true;
                }
            }
        }
        let mut runs = 0;
        let mut inside = false;
        for &v in &col_has_ink {
            if v && !inside {
                runs += 1;
            }
            inside = v;
        }
        assert_eq!(runs, poly.transcript.chars().count());
    }

    #[test]
    fn fitted_sides_reconstruct_ribbon() {
        // Closing the loop with the curve-fitting module: fitting the emitted
        // annotation chains must reproduce the chains within 1 px mean error.
        let spec = SynthSpec::default();
        for seed in [3u64, 4, 5] {
            let s = render_sample(&spec, seed).unwrap();
            for poly in &s.instances {
                for chain in [&poly.top, &poly.bottom] {
                    let curve =
                        fit_cubic_bezier(chain, Parameterization::ChordLength).unwrap();
                    let mean: f64 = chain
                        .iter()
                        .map(|p| {
                            // Nearest point on the curve, dense search.
                            (0..=200)
                                .map(|j| curve.eval(j as f64 / 200.0).dist(p))
                                .fold(f64::INFINITY, f64::min)
                        })
                        .sum::<f64>()
                        / chain.len() as f64;
                    assert!(mean <= 1.0, "seed {seed}: mean deviation {mean}");
                }
            }
        }
    }

    #[test]
    fn dataset_round_trip() {
        let spec = SynthSpec::default();
        let samples: Vec<Sample> = (0..3).map(|s| render_sample(&spec, s).unwrap()).collect();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&samples, dir.path()).unwrap();
        let back = read_dataset(dir.path()).unwrap();
        assert_eq!(back.len(), samples.len());
        for (a, b) in samples.iter().zip(back.iter()) {
            assert_eq!(a.instances.len(), b.instances.len());
            for (x, y) in a.instances.iter().zip(b.instances.iter()) {
                assert_eq!(x.transcript, y.transcript);
                for (p, q) in x.top.iter().zip(y.top.iter()) {
                    assert!((p.x - q.x).abs() <= 1e-6 && (p.y - q.y).abs() <= 1e-6);
                }
            }
            for (p, q) in a.image.data.iter().zip(b.image.data.iter()) {
                assert!((p - q).abs() <= 1.0 / 255.0 + 1e-12);
            }
        }
    }

    #[test]
    fn malformed_annotation_names_line() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("annotations.jsonl"),
            "{\"image\": \"a.ppm\", \"instances\": []}\nnot json\n",
        )
        .unwrap();
        // First line is valid JSON but references a missing image only after
        // parse; write the image so the failure is the parse on line 2.
        write_ppm(&dir.path().join("a.ppm"), &Tensor::zeros(&[3, 2, 2])).unwrap();
        match read_dataset(dir.path()) {
            Err(SynthError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
