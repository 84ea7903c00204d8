//! Bezier/Bernstein math, curve fitting to annotation sides, control point
//! sampling and polygon utilities.

mod bezier;
mod polygon;

pub use bezier::{bernstein, bezier_eval, fit_cubic_bezier, CubicBezier, Parameterization};
pub use polygon::{polygon_area, polygon_iou, point_in_polygon, IouResult};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeomError {
    #[error("argument out of domain: {0}")]
    Domain(String),
    #[error("need at least {needed} points, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("degenerate least-squares fit: interior parameters coincide")]
    DegenerateFit,
}

/// A 2-d point in image pixels, origin top-left, y downward.
/// Serializes as a two-element `[x, y]` array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "(f64, f64)", into = "(f64, f64)")]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl From<(f64, f64)> for Point2 {
    fn from((x, y): (f64, f64)) -> Self {
        Point2 { x, y }
    }
}

impl From<Point2> for (f64, f64) {
    fn from(p: Point2) -> Self {
        (p.x, p.y)
    }
}

impl Point2 {
    pub fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn dist(&self, other: &Point2) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }
}

impl std::ops::Add for Point2 {
    type Output = Point2;
    fn add(self, rhs: Point2) -> Point2 {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl std::ops::Sub for Point2 {
    type Output = Point2;
    fn sub(self, rhs: Point2) -> Point2 {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl std::ops::Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, s: f64) -> Point2 {
        Point2::new(self.x * s, self.y * s)
    }
}

/// A text instance: ordered top and bottom point chains (both left to right)
/// plus the transcription.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TextPolygon {
    pub top: Vec<Point2>,
    pub bottom: Vec<Point2>,
    #[serde(rename = "text")]
    pub transcript: String,
}

impl TextPolygon {
    /// Closed outline: top chain left to right, then bottom chain right to left.
    pub fn outline(&self) -> Vec<Point2> {
        let mut out = self.top.clone();
        out.extend(self.bottom.iter().rev().copied());
        out
    }

    pub fn bbox(&self) -> (Point2, Point2) {
        let mut min = Point2::new(f64::INFINITY, f64::INFINITY);
        let mut max = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in self.top.iter().chain(self.bottom.iter()) {
            min.x = min.x.min(p.x);
            min.y = min.y.min(p.y);
            max.x = max.x.max(p.x);
            max.y = max.y.max(p.y);
        }
        (min, max)
    }

    /// Longest bounding-box side, used for pyramid level assignment.
    pub fn max_side(&self) -> f64 {
        let (min, max) = self.bbox();
        (max.x - min.x).max(max.y - min.y)
    }
}

/// The 2 * n_rcp rectification control points of one instance, n_rcp per side,
/// both rows ordered left to right along the curve parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct RectCtrlPoints {
    pub top: Vec<Point2>,
    pub bottom: Vec<Point2>,
}

impl RectCtrlPoints {
    pub fn n_rcp(&self) -> usize {
        debug_assert_eq!(self.top.len(), self.bottom.len());
        self.top.len()
    }

    /// Flat view in head-channel order: top points then bottom points.
    pub fn flat(&self) -> Vec<Point2> {
        let mut v = self.top.clone();
        v.extend_from_slice(&self.bottom);
        v
    }

    pub fn from_flat(points: &[Point2]) -> Self {
        let n = points.len() / 2;
        RectCtrlPoints {
            top: points[..n].to_vec(),
            bottom: points[n..].to_vec(),
        }
    }

    /// Closed outline through the control points.
    pub fn outline(&self) -> Vec<Point2> {
        let mut out = self.top.clone();
        out.extend(self.bottom.iter().rev().copied());
        out
    }

    pub fn mean_height(&self) -> f64 {
        let n = self.n_rcp();
        self.top
            .iter()
            .zip(self.bottom.iter())
            .map(|(t, b)| t.dist(b))
            .sum::<f64>()
            / n as f64
    }
}

/// Uniformly sample `n_rcp` points per side in Bezier parameter space,
/// t_k = k / (n_rcp - 1), endpoints included.
pub fn sample_rcp(
    top: &CubicBezier,
    bottom: &CubicBezier,
    n_rcp: usize,
) -> Result<RectCtrlPoints, GeomError> {
    if n_rcp < 2 {
        return Err(GeomError::Domain(format!("n_rcp must be >= 2, got {n_rcp}")));
    }
    let sample = |c: &CubicBezier| -> Vec<Point2> {
        (0..n_rcp)
            .map(|k| {
                let t = k as f64 / (n_rcp - 1) as f64;
                c.eval(t)
            })
            .collect()
    };
    Ok(RectCtrlPoints {
        top: sample(top),
        bottom: sample(bottom),
    })
}
