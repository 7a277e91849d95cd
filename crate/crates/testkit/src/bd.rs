//! Fine-grid BD-rate oracle.

use srnerv_core::metrics::RDPoint;

use crate::Lcg;

/// Shape-preserving cubic through the points, evaluated directly from its
/// piecewise polynomial form.
struct Interp {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl Interp {
    fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        let n = x.len();
        let h: Vec<f64> = (0..n - 1).map(|i| x[i + 1] - x[i]).collect();
        let del: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
        let mut d = vec![0.0; n];
        for i in 1..n - 1 {
            if del[i - 1] > 0.0 && del[i] > 0.0 || del[i - 1] < 0.0 && del[i] < 0.0 {
                // weighted harmonic mean
                let a = (h[i - 1] + 2.0 * h[i]) / (3.0 * (h[i - 1] + h[i]));
                let b = 1.0 - a;
                d[i] = 1.0 / (a / del[i - 1] + b / del[i]);
            }
        }
        let end = |h0: f64, h1: f64, d0: f64, d1: f64| {
            let s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
            if s.signum() != d0.signum() || s == 0.0 || d0 == 0.0 {
                0.0
            } else if d0.signum() != d1.signum() && s.abs() > 3.0 * d0.abs() {
                3.0 * d0
            } else {
                s
            }
        };
        if n == 2 {
            d.fill(del[0]);
        } else {
            d[0] = end(h[0], h[1], del[0], del[1]);
            d[n - 1] = end(h[n - 2], h[n - 3], del[n - 2], del[n - 3]);
        }
        Self { x, y, d }
    }

    fn eval(&self, t: f64) -> f64 {
        let i = (0..self.x.len() - 1)
            .rfind(|&i| self.x[i] <= t)
            .unwrap_or(0);
        let h = self.x[i + 1] - self.x[i];
        let del = (self.y[i + 1] - self.y[i]) / h;
        let c2 = (3.0 * del - 2.0 * self.d[i] - self.d[i + 1]) / h;
        let c3 = (self.d[i] + self.d[i + 1] - 2.0 * del) / (h * h);
        let s = t - self.x[i];
        self.y[i] + s * (self.d[i] + s * (c2 + s * c3))
    }
}

/// BD-rate in percent by trapezoid integration on 200k intervals.
pub fn oracle_bd_rate(anchor: &[RDPoint], test: &[RDPoint]) -> f64 {
    let curve = |pts: &[RDPoint]| {
        let mut p = pts.to_vec();
        p.sort_by(|a, b| a.psnr.total_cmp(&b.psnr));
        Interp::new(
            p.iter().map(|q| q.psnr).collect(),
            p.iter().map(|q| q.bpp.log10()).collect(),
        )
    };
    let (a, t) = (curve(anchor), curve(test));
    let lo = a.x[0].max(t.x[0]);
    let hi = a.x.last().unwrap().min(*t.x.last().unwrap());
    let n = 200_000;
    let step = (hi - lo) / n as f64;
    let mut sum = 0.0;
    for k in 0..=n {
        let p = lo + k as f64 * step;
        let w = if k == 0 || k == n { 0.5 } else { 1.0 };
        sum += w * (t.eval(p) - a.eval(p));
    }
    100.0 * (10f64.powf(sum * step / (hi - lo)) - 1.0)
}

/// Increasing RD curve with 4 to 6 points.
pub fn random_curve(r: &mut Lcg) -> Vec<RDPoint> {
    let mut bpp = 0.02 + r.uniform().abs() * 0.1;
    let mut q = 25.0 + r.uniform() * 5.0;
    (0..4 + r.below(3))
        .map(|_| {
            bpp *= 1.3 + r.uniform().abs() * 1.5;
            q += 0.5 + r.uniform().abs() * 3.0;
            RDPoint::new(bpp, q)
        })
        .collect()
}
