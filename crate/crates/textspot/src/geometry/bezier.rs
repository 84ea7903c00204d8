use super::{GeomError, Point2};

/// Bernstein basis polynomial B_{i,n}(t) = C(n,i) t^i (1-t)^(n-i).
pub fn bernstein(i: usize, n: usize, t: f64) -> Result<f64, GeomError> {
    if i > n {
        return Err(GeomError::Domain(format!("bernstein index {i} > degree {n}")));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(GeomError::Domain(format!("bernstein t {t} outside [0,1]")));
    }
    Ok(binomial(n, i) * t.powi(i as i32) * (1.0 - t).powi((n - i) as i32))
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    let mut acc = 1.0;
    for j in 0..k {
        acc = acc * (n - j) as f64 / (j + 1) as f64;
    }
    acc
}

/// A cubic Bezier curve with four control points.
#[derive(Debug, Clone, PartialEq)]
pub struct CubicBezier {
    pub control: [Point2; 4],
}

impl CubicBezier {
    pub fn new(control: [Point2; 4]) -> Self {
        CubicBezier { control }
    }

    pub fn eval(&self, t: f64) -> Point2 {
        // De Casteljau; exact at endpoints and numerically stable.
        let [a, b, c, d] = self.control;
        let ab = lerp(a, b, t);
        let bc = lerp(b, c, t);
        let cd = lerp(c, d, t);
        let abc = lerp(ab, bc, t);
        let bcd = lerp(bc, cd, t);
        lerp(abc, bcd, t)
    }

    /// Polyline length at `samples` segments, used as a cheap arc length.
    pub fn approx_length(&self, samples: usize) -> f64 {
        let mut len = 0.0;
        let mut prev = self.eval(0.0);
        for k in 1..=samples {
            let p = self.eval(k as f64 / samples as f64);
            len += prev.dist(&p);
            prev = p;
        }
        len
    }
}

fn lerp(a: Point2, b: Point2, t: f64) -> Point2 {
    Point2::new(a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t)
}

/// Checked evaluation with the domain contract on t.
pub fn bezier_eval(curve: &CubicBezier, t: f64) -> Result<Point2, GeomError> {
    if !(0.0..=1.0).contains(&t) {
        return Err(GeomError::Domain(format!("bezier t {t} outside [0,1]")));
    }
    Ok(curve.eval(t))
}

/// How parameter values are assigned to the input chain before solving.
#[derive(Debug, Clone)]
pub enum Parameterization {
    ChordLength,
    Uniform,
    Given(Vec<f64>),
}

/// Least-squares cubic Bezier fit with the first and last control points
/// pinned to the chain endpoints. Only the two interior control points are
/// solved, per coordinate, from the 2x2 normal equations.
pub fn fit_cubic_bezier(
    points: &[Point2],
    parameterization: Parameterization,
) -> Result<CubicBezier, GeomError> {
    let n = points.len();
    if n < 4 {
        return Err(GeomError::InsufficientData { needed: 4, got: n });
    }
    let ts: Vec<f64> = match parameterization {
        Parameterization::Given(ts) => {
            if ts.len() != n {
                return Err(GeomError::Domain(
                    "given parameter count must match point count".into(),
                ));
            }
            ts
        }
        Parameterization::Uniform => (0..n).map(|i| i as f64 / (n - 1) as f64).collect(),
        Parameterization::ChordLength => {
            let mut acc = vec![0.0; n];
            for i in 1..n {
                acc[i] = acc[i - 1] + points[i].dist(&points[i - 1]);
            }
            let total = acc[n - 1];
            if total <= 0.0 {
                return Err(GeomError::DegenerateFit);
            }
            acc.iter().map(|a| a / total).collect()
        }
    };

    let p0 = points[0];
    let p3 = points[n - 1];

    // Residual target: D_j = P_j - B0(t_j) p0 - B3(t_j) p3, model B1 c1 + B2 c2.
    let mut a11 = 0.0;
    let mut a12 = 0.0;
    let mut a22 = 0.0;
    let mut bx = [0.0; 2];
    let mut by = [0.0; 2];
    for (j, p) in points.iter().enumerate() {
        let t = ts[j].clamp(0.0, 1.0);
        let b0 = bernstein(0, 3, t).unwrap();
        let b1 = bernstein(1, 3, t).unwrap();
        let b2 = bernstein(2, 3, t).unwrap();
        let b3 = bernstein(3, 3, t).unwrap();
        let dx = p.x - b0 * p0.x - b3 * p3.x;
        let dy = p.y - b0 * p0.y - b3 * p3.y;
        a11 += b1 * b1;
        a12 += b1 * b2;
        a22 += b2 * b2;
        bx[0] += b1 * dx;
        bx[1] += b2 * dx;
        by[0] += b1 * dy;
        by[1] += b2 * dy;
    }
    let det = a11 * a22 - a12 * a12;
    if det.abs() < 1e-12 {
        return Err(GeomError::DegenerateFit);
    }
    let solve = |b: [f64; 2]| -> (f64, f64) {
        (
            (a22 * b[0] - a12 * b[1]) / det,
            (a11 * b[1] - a12 * b[0]) / det,
        )
    };
    let (c1x, c2x) = solve(bx);
    let (c1y, c2y) = solve(by);
    Ok(CubicBezier::new([
        p0,
        Point2::new(c1x, c1y),
        Point2::new(c2x, c2y),
        p3,
    ]))
}
