//! Bjøntegaard delta rate with shape-preserving piecewise cubic Hermite
//! interpolation (Fritsch–Carlson) of log10(rate) over quality.

use super::RDPoint;
use crate::error::{NvcError, Result};

/// Monotone piecewise cubic Hermite interpolant through `(x, y)` knots.
#[derive(Debug, Clone)]
pub struct Pchip {
    x: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
}

fn end_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let m = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if m.signum() != d0.signum() {
        0.0
    } else if d0.signum() != d1.signum() && m.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        m
    }
}

impl Pchip {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let n = x.len();
        if n < 2 || y.len() != n {
            return Err(NvcError::Argument(format!("interpolant needs >= 2 knots, got {n}")));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) || x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(NvcError::Argument("knots must be finite with strictly increasing x".into()));
        }
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let d: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
        let mut m = vec![0.0; n];
        if n == 2 {
            m = vec![d[0], d[0]];
        } else {
            for k in 1..n - 1 {
                if d[k - 1] * d[k] > 0.0 {
                    let w1 = 2.0 * h[k] + h[k - 1];
                    let w2 = h[k] + 2.0 * h[k - 1];
                    m[k] = (w1 + w2) / (w1 / d[k - 1] + w2 / d[k]);
                }
            }
            m[0] = end_slope(h[0], h[1], d[0], d[1]);
            m[n - 1] = end_slope(h[n - 2], h[n - 3], d[n - 2], d[n - 3]);
        }
        Ok(Self { x, y, m })
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.x[0], self.x[self.x.len() - 1])
    }

    fn segment(&self, v: f64) -> usize {
        self.x.partition_point(|&k| k <= v).clamp(1, self.x.len() - 1) - 1
    }

    pub fn eval(&self, v: f64) -> f64 {
        let k = self.segment(v);
        let h = self.x[k + 1] - self.x[k];
        let t = (v - self.x[k]) / h;
        let (t2, t3) = (t * t, t * t * t);
        (2.0 * t3 - 3.0 * t2 + 1.0) * self.y[k]
            + (t3 - 2.0 * t2 + t) * h * self.m[k]
            + (-2.0 * t3 + 3.0 * t2) * self.y[k + 1]
            + (t3 - t2) * h * self.m[k + 1]
    }

    /// Integral over `[x_k, x_k + t h]` of segment k.
    fn partial(&self, k: usize, t: f64) -> f64 {
        let h = self.x[k + 1] - self.x[k];
        let (t2, t3, t4) = (t * t, t * t * t, t * t * t * t);
        h * (self.y[k] * (t - t3 + t4 / 2.0)
            + h * self.m[k] * (t2 / 2.0 - 2.0 * t3 / 3.0 + t4 / 4.0)
            + self.y[k + 1] * (t3 - t4 / 2.0)
            + h * self.m[k + 1] * (t4 / 4.0 - t3 / 3.0))
    }

    fn antiderivative(&self, v: f64) -> f64 {
        let k = self.segment(v);
        let whole: f64 = (0..k).map(|j| self.partial(j, 1.0)).sum();
        whole + self.partial(k, (v - self.x[k]) / (self.x[k + 1] - self.x[k]))
    }

    /// Exact integral over `[a, b]` inside the domain.
    pub fn integrate(&self, a: f64, b: f64) -> f64 {
        self.antiderivative(b) - self.antiderivative(a)
    }
}

/// Integral of the interpolant through `(x, y)` over `[a, b]`.
pub fn pchip_integral(x: &[f64], y: &[f64], a: f64, b: f64) -> Result<f64> {
    Ok(Pchip::new(x.to_vec(), y.to_vec())?.integrate(a, b))
}

/// log10(bpp) as a function of quality. Points with equal quality are
/// merged by averaging their log-rates.
fn log_rate_curve(points: &[RDPoint], name: &str) -> Result<Pchip> {
    let mut kept: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.psnr.is_finite())
        .map(|p| {
            if p.bpp > 0.0 && p.bpp.is_finite() {
                Ok((p.psnr, p.bpp.log10()))
            } else {
                Err(NvcError::Argument(format!("{name} curve has non-positive bpp {}", p.bpp)))
            }
        })
        .collect::<Result<_>>()?;
    if kept.len() < 4 {
        return Err(NvcError::Argument(format!("{name} curve needs at least 4 finite points, got {}", kept.len())));
    }
    kept.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut x: Vec<f64> = Vec::new();
    let mut y: Vec<f64> = Vec::new();
    let mut count = 0.0;
    for (q, r) in kept {
        if x.last() == Some(&q) {
            let last = y.len() - 1;
            y[last] = (y[last] * count + r) / (count + 1.0);
            count += 1.0;
        } else {
            x.push(q);
            y.push(r);
            count = 1.0;
        }
    }
    if x.len() < 2 {
        return Err(NvcError::Eval(format!("{name} curve spans no quality range")));
    }
    Pchip::new(x, y)
}

/// Percent rate change of `test` against `anchor` at equal quality;
/// negative numbers are savings.
pub fn bd_rate(anchor: &[RDPoint], test: &[RDPoint]) -> Result<f64> {
    let a = log_rate_curve(anchor, "anchor")?;
    let t = log_rate_curve(test, "test")?;
    let (a_lo, a_hi) = a.domain();
    let (t_lo, t_hi) = t.domain();
    let (lo, hi) = (a_lo.max(t_lo), a_hi.min(t_hi));
    if !(hi > lo) {
        return Err(NvcError::Eval(format!(
            "quality ranges do not overlap ([{a_lo:.3}, {a_hi:.3}] vs [{t_lo:.3}, {t_hi:.3}])"
        )));
    }
    let avg = (t.integrate(lo, hi) - a.integrate(lo, hi)) / (hi - lo);
    Ok((10f64.powf(avg) - 1.0) * 100.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(points: &[(f64, f64)]) -> Vec<RDPoint> {
        points.iter().map(|&(bpp, psnr)| RDPoint::new("c", None, bpp, psnr)).collect()
    }

    fn anchor() -> Vec<RDPoint> {
        curve(&[(0.05, 30.1), (0.09, 32.4), (0.16, 34.6), (0.3, 36.5), (0.52, 38.1)])
    }

    fn scaled(c: &[RDPoint], f: f64) -> Vec<RDPoint> {
        c.iter().map(|p| RDPoint { bpp: p.bpp * f, ..p.clone() }).collect()
    }

    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn identical_halved_and_doubled() {
        let a = anchor();
        assert!(bd_rate(&a, &a).unwrap().abs() < 1e-9);
        assert!((bd_rate(&a, &scaled(&a, 0.5)).unwrap() + 50.0).abs() < 0.1);
        assert!((bd_rate(&a, &scaled(&a, 2.0)).unwrap() - 100.0).abs() < 0.2);
    }

    #[test]
    fn interpolant_passes_through_knots_and_integrates_exactly() {
        let x = vec![0.0, 0.7, 1.5, 2.0, 3.4];
        let y = vec![1.0, 1.3, 2.9, 3.0, 4.4];
        let p = Pchip::new(x.clone(), y.clone()).unwrap();
        for (xi, yi) in x.iter().zip(&y) {
            assert!((p.eval(*xi) - yi).abs() < 1e-12);
        }
        for (a, b) in [(0.0, 3.4), (0.3, 2.2), (1.6, 1.9)] {
            let oracle = simpson(|v| p.eval(v), a, b, 20_000);
            assert!((p.integrate(a, b) - oracle).abs() < 1e-9, "[{a}, {b}]");
        }
    }

    #[test]
    fn interpolant_preserves_monotonicity() {
        let p = Pchip::new(vec![0.0, 1.0, 2.0, 3.0, 4.0], vec![0.0, 0.1, 2.0, 2.05, 4.0]).unwrap();
        let mut prev = p.eval(0.0);
        for i in 1..=400 {
            let v = p.eval(i as f64 * 0.01);
            assert!(v >= prev - 1e-12);
            prev = v;
        }
    }

    #[test]
    fn rejects_short_curves_and_disjoint_ranges() {
        let a = anchor();
        assert!(matches!(bd_rate(&a[..3], &a), Err(NvcError::Argument(_))));
        let far = curve(&[(0.05, 50.0), (0.1, 51.0), (0.2, 52.0), (0.4, 53.0)]);
        assert!(matches!(bd_rate(&a, &far), Err(NvcError::Eval(_))));
    }

    #[test]
    fn infinite_quality_points_are_dropped() {
        let mut a = anchor();
        let base = bd_rate(&a, &scaled(&a, 0.8)).unwrap();
        a.push(RDPoint::new("c", None, 2.0, f64::INFINITY));
        assert!((bd_rate(&a, &scaled(&a, 0.8)).unwrap() - base).abs() < 1e-12);
    }

    #[test]
    fn antisymmetry() {
        let a = anchor();
        let b = curve(&[(0.04, 30.0), (0.08, 32.6), (0.15, 34.9), (0.27, 36.7), (0.5, 38.6)]);
        let x = bd_rate(&a, &b).unwrap() / 100.0;
        let y = bd_rate(&b, &a).unwrap() / 100.0;
        assert!(((1.0 + x) * (1.0 + y) - 1.0).abs() < 0.005, "{x} {y}");
    }

    #[test]
    fn collinear_point_changes_little() {
        let a = anchor();
        let b = curve(&[(0.04, 30.0), (0.08, 32.6), (0.15, 34.9), (0.27, 36.7), (0.5, 38.6)]);
        let base = bd_rate(&a, &b).unwrap();
        // midpoint of the third segment in (quality, log-rate)
        let (p, q) = (&b[2], &b[3]);
        let psnr = 0.5 * (p.psnr + q.psnr);
        let bpp = 10f64.powf(0.5 * (p.bpp.log10() + q.bpp.log10()));
        let mut b2 = b.clone();
        b2.insert(3, RDPoint::new("c", None, bpp, psnr));
        assert!((bd_rate(&a, &b2).unwrap() - base).abs() < 0.2);
    }

    proptest::proptest! {
        #[test]
        fn constant_factor_gives_exact_percent(f in 0.3f64..3.0) {
            let a = anchor();
            let got = bd_rate(&a, &scaled(&a, f)).unwrap();
            proptest::prop_assert!((got - (f - 1.0) * 100.0).abs() < 1e-6);
        }
    }
}
