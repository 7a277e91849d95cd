//! Quality and rate measures: PSNR, SSIM, bits per pixel, BD-rate.

use std::fmt::Write as _;

use crate::media::VideoTensor;
use crate::scalar::Scalar;
use crate::tensor::{kernels, Tensor};

/// PSNR reported for identical inputs.
pub const PSNR_CAP: f64 = 100.0;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("dimension mismatch: {0}")]
    Dimensions(String),
    #[error("frame {h}x{w} is smaller than the {k}x{k} window")]
    WindowTooLarge { h: usize, w: usize, k: usize },
    #[error("curve has {0} points, at least 4 are needed")]
    TooFewPoints(usize),
    #[error("RD curves do not overlap in PSNR")]
    NoOverlap,
    #[error("invalid RD point: {0}")]
    InvalidPoint(String),
    #[error("csv line {line}: {reason}")]
    Csv { line: usize, reason: String },
}

/// PSNR of mean squared error `mse` at peak 1, capped at [`PSNR_CAP`].
pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        PSNR_CAP
    } else {
        (10.0 * (1.0 / mse).log10()).min(PSNR_CAP)
    }
}

pub fn mse_slices(a: &[f32], b: &[f32]) -> f64 {
    let sum: f64 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    sum / a.len() as f64
}

pub fn psnr(a: &VideoTensor, b: &VideoTensor) -> Result<f64, MetricsError> {
    if a.dims() != b.dims() {
        return Err(MetricsError::Dimensions(format!(
            "{:?} vs {:?}",
            a.dims(),
            b.dims()
        )));
    }
    Ok(psnr_from_mse(mse_slices(a.data(), b.data())))
}

/// PSNR between two tensors of equal shape.
pub fn psnr_tensor<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>) -> Result<f64, MetricsError> {
    if a.shape() != b.shape() {
        return Err(MetricsError::Dimensions(format!(
            "{:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (x.f64() - y.f64()).powi(2))
        .sum();
    Ok(psnr_from_mse(sum / a.len() as f64))
}

/// Mean SSIM over pixels and channels of two `[H, W, C]` frames, with
/// Gaussian windows and reflect padding.
pub fn ssim<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>) -> Result<f64, MetricsError> {
    if a.shape() != b.shape() || a.rank() != 3 {
        return Err(MetricsError::Dimensions(format!(
            "{:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let (h, w) = (a.shape()[0], a.shape()[1]);
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(MetricsError::WindowTooLarge {
            h,
            w,
            k: SSIM_WINDOW,
        });
    }
    let (a, b) = (a.cast::<f64>(), b.cast::<f64>());
    let blur = |t: &Tensor<f64>| kernels::gaussian_blur(t, SSIM_SIGMA, SSIM_WINDOW).unwrap();
    let prod = |x: &Tensor<f64>, y: &Tensor<f64>| {
        Tensor::new(
            x.shape().to_vec(),
            x.data().iter().zip(y.data()).map(|(p, q)| p * q).collect(),
        )
        .unwrap()
    };
    let (mu1, mu2) = (blur(&a), blur(&b));
    let (e11, e22, e12) = (
        blur(&prod(&a, &a)),
        blur(&prod(&b, &b)),
        blur(&prod(&a, &b)),
    );
    let (c1, c2) = (SSIM_K1 * SSIM_K1, SSIM_K2 * SSIM_K2);
    let mut sum = 0.0;
    for i in 0..a.len() {
        let (m1, m2) = (mu1.data()[i], mu2.data()[i]);
        let s11 = e11.data()[i] - m1 * m1;
        let s22 = e22.data()[i] - m2 * m2;
        let s12 = e12.data()[i] - m1 * m2;
        let num = (2.0 * m1 * m2 + c1) * (2.0 * s12 + c2);
        let den = (m1 * m1 + m2 * m2 + c1) * (s11 + s22 + c2);
        sum += num / den;
    }
    Ok(sum / a.len() as f64)
}

/// Mean per-frame SSIM of two videos.
pub fn ssim_video(a: &VideoTensor, b: &VideoTensor) -> Result<f64, MetricsError> {
    if a.dims() != b.dims() {
        return Err(MetricsError::Dimensions(format!(
            "{:?} vs {:?}",
            a.dims(),
            b.dims()
        )));
    }
    let mut sum = 0.0;
    for t in 0..a.frames() {
        sum += ssim(&a.frame::<f64>(t), &b.frame::<f64>(t))?;
    }
    Ok(sum / a.frames() as f64)
}

pub fn bpp(total_bits: u64, frames: usize, height: usize, width: usize) -> f64 {
    total_bits as f64 / (frames * height * width) as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RDPoint {
    pub bpp: f64,
    pub psnr: f64,
}

impl RDPoint {
    pub fn new(bpp: f64, psnr: f64) -> Self {
        Self { bpp, psnr }
    }
}

/// `bpp,psnr` with a header row. Values use shortest round-trip formatting.
pub fn write_rd_csv(points: &[RDPoint]) -> String {
    let mut s = String::from("bpp,psnr\n");
    for p in points {
        writeln!(s, "{},{}", p.bpp, p.psnr).unwrap();
    }
    s
}

pub fn read_rd_csv(text: &str) -> Result<Vec<RDPoint>, MetricsError> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, header)) if header.trim() == "bpp,psnr" => {}
        Some((i, _)) => {
            return Err(MetricsError::Csv {
                line: i + 1,
                reason: "expected header `bpp,psnr`".into(),
            })
        }
        None => {
            return Err(MetricsError::Csv {
                line: 1,
                reason: "empty file".into(),
            })
        }
    }
    lines
        .map(|(i, l)| {
            let err = |reason: String| MetricsError::Csv {
                line: i + 1,
                reason,
            };
            let mut cols = l.split(',').map(str::trim);
            let mut num = |what: &str| -> Result<f64, MetricsError> {
                let v = cols.next().ok_or_else(|| err(format!("missing {what}")))?;
                v.parse().map_err(|_| err(format!("bad {what} `{v}`")))
            };
            let p = RDPoint::new(num("bpp")?, num("psnr")?);
            if cols.next().is_some() {
                return Err(err("too many columns".into()));
            }
            Ok(p)
        })
        .collect()
}

/// Monotone piecewise-cubic Hermite interpolant through `(x, y)`, with
/// strictly increasing `x` and Fritsch-Carlson slopes.
#[derive(Debug, Clone)]
pub struct Pchip {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl Pchip {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        assert!(x.len() >= 2 && x.len() == y.len());
        assert!(x.windows(2).all(|w| w[1] > w[0]), "x must increase");
        let n = x.len();
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let m: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
        let mut d = vec![0.0; n];
        if n == 2 {
            d.fill(m[0]);
            return Self { x, y, d };
        }
        for k in 1..n - 1 {
            let (m0, m1) = (m[k - 1], m[k]);
            if m0 * m1 <= 0.0 {
                continue;
            }
            let w1 = 2.0 * h[k] + h[k - 1];
            let w2 = h[k] + 2.0 * h[k - 1];
            d[k] = (w1 + w2) / (w1 / m0 + w2 / m1);
        }
        d[0] = edge_slope(h[0], h[1], m[0], m[1]);
        d[n - 1] = edge_slope(h[n - 2], h[n - 3], m[n - 2], m[n - 3]);
        Self { x, y, d }
    }

    fn piece(&self, t: f64) -> usize {
        self.x
            .partition_point(|&v| v <= t)
            .clamp(1, self.x.len() - 1)
            - 1
    }

    pub fn eval(&self, t: f64) -> f64 {
        let k = self.piece(t);
        let h = self.x[k + 1] - self.x[k];
        let s = (t - self.x[k]) / h;
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        h00 * self.y[k] + h10 * h * self.d[k] + h01 * self.y[k + 1] + h11 * h * self.d[k + 1]
    }

    /// Exact integral over `[a, b]` within the data range. Simpson's rule is
    /// exact on each cubic piece.
    pub fn integrate(&self, a: f64, b: f64) -> f64 {
        let simpson = |lo: f64, hi: f64| {
            (hi - lo) / 6.0 * (self.eval(lo) + 4.0 * self.eval(0.5 * (lo + hi)) + self.eval(hi))
        };
        let mut total = 0.0;
        let mut lo = a;
        for &knot in self.x.iter().filter(|&&v| v > a && v < b) {
            total += simpson(lo, knot);
            lo = knot;
        }
        total + simpson(lo, b)
    }
}

/// One-sided three-point end slope, limited to keep the shape monotone.
fn edge_slope(h0: f64, h1: f64, m0: f64, m1: f64) -> f64 {
    // sign with sign(0) = 0
    let sign = |v: f64| (v > 0.0) as i8 - (v < 0.0) as i8;
    let d = ((2.0 * h0 + h1) * m0 - h0 * m1) / (h0 + h1);
    if sign(d) != sign(m0) {
        0.0
    } else if sign(m0) != sign(m1) && d.abs() > 3.0 * m0.abs() {
        3.0 * m0
    } else {
        d
    }
}

fn log_rate_curve(points: &[RDPoint]) -> Result<Pchip, MetricsError> {
    if points.len() < 4 {
        return Err(MetricsError::TooFewPoints(points.len()));
    }
    if let Some(p) = points
        .iter()
        .find(|p| !(p.bpp > 0.0 && p.bpp.is_finite() && p.psnr.is_finite()))
    {
        return Err(MetricsError::InvalidPoint(format!("{p:?}")));
    }
    let mut by_bpp = points.to_vec();
    by_bpp.sort_by(|a, b| a.bpp.total_cmp(&b.bpp));
    if by_bpp.windows(2).any(|w| w[1].psnr <= w[0].psnr) {
        log::warn!("RD curve is not monotone in PSNR; interpolating over PSNR-sorted points");
    }
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.psnr.total_cmp(&b.psnr));
    if sorted.windows(2).any(|w| w[1].psnr == w[0].psnr) {
        return Err(MetricsError::InvalidPoint("repeated PSNR value".into()));
    }
    Ok(Pchip::new(
        sorted.iter().map(|p| p.psnr).collect(),
        sorted.iter().map(|p| p.bpp.log10()).collect(),
    ))
}

/// Mean difference of `log10(bpp)` (test minus anchor) over the shared
/// PSNR interval.
pub fn bd_log_delta(anchor: &[RDPoint], test: &[RDPoint]) -> Result<f64, MetricsError> {
    let ca = log_rate_curve(anchor)?;
    let ct = log_rate_curve(test)?;
    let lo = ca.x[0].max(ct.x[0]);
    let hi = ca.x[ca.x.len() - 1].min(ct.x[ct.x.len() - 1]);
    if hi <= lo {
        return Err(MetricsError::NoOverlap);
    }
    Ok((ct.integrate(lo, hi) - ca.integrate(lo, hi)) / (hi - lo))
}

/// Average rate change of `test` against `anchor` in percent at equal
/// PSNR. Negative means `test` needs fewer bits.
pub fn bd_rate(anchor: &[RDPoint], test: &[RDPoint]) -> Result<f64, MetricsError> {
    let delta = bd_log_delta(anchor, test)?;
    Ok(100.0 * (10f64.powf(delta) - 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(r: &[f64], p: &[f64]) -> Vec<RDPoint> {
        r.iter().zip(p).map(|(&b, &q)| RDPoint::new(b, q)).collect()
    }

    #[test]
    fn psnr_closed_forms() {
        let a = VideoTensor::new(1, 2, 2, vec![0.5; 12]).unwrap();
        assert_eq!(psnr(&a, &a).unwrap(), 100.0);
        let b = VideoTensor::new(1, 2, 2, vec![0.6; 12]).unwrap();
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-5);
        let c = VideoTensor::new(2, 2, 2, vec![0.6; 24]).unwrap();
        assert!(psnr(&a, &c).is_err());
    }

    #[test]
    fn ssim_closed_forms() {
        let a = Tensor::full(&[16, 16, 3], 0.5f64);
        let b = Tensor::full(&[16, 16, 3], 0.6f64);
        let c1 = 1e-4;
        let lum = (2.0 * 0.5 * 0.6 + c1) / (0.25 + 0.36 + c1);
        assert!((ssim(&a, &b).unwrap() - lum).abs() < 1e-9);
        assert!((lum - 0.9837).abs() < 1e-4);
        let z = Tensor::full(&[12, 12, 3], 0.0f64);
        let o = Tensor::full(&[12, 12, 3], 1.0f64);
        assert!((ssim(&z, &o).unwrap() - c1 / (1.0 + c1)).abs() < 1e-12);
        assert_eq!(ssim(&a, &a).unwrap(), 1.0);
        let small = Tensor::full(&[8, 16, 3], 0.5f64);
        assert!(matches!(
            ssim(&small, &small),
            Err(MetricsError::WindowTooLarge { .. })
        ));
    }

    #[test]
    fn bpp_examples() {
        assert_eq!(bpp(6000, 10, 32, 32), 0.5859375);
        assert_eq!(bpp(0, 10, 32, 32), 0.0);
        assert_eq!(bpp(12000, 10, 32, 32), 2.0 * bpp(6000, 10, 32, 32));
    }

    #[test]
    fn csv_roundtrip() {
        let pts = curve(&[0.1, 0.123456789012345], &[30.0, 33.3333333333]);
        assert_eq!(read_rd_csv(&write_rd_csv(&pts)).unwrap(), pts);
        assert!(read_rd_csv("psnr,bpp\n1,2\n").is_err());
        assert!(matches!(
            read_rd_csv("bpp,psnr\n0.1,x\n"),
            Err(MetricsError::Csv { line: 2, .. })
        ));
    }

    #[test]
    fn pchip_reproduces_lines_and_knots() {
        let p = Pchip::new(vec![0.0, 1.0, 3.0, 4.0], vec![1.0, 3.0, 7.0, 9.0]);
        assert!((p.eval(2.0) - 5.0).abs() < 1e-12);
        assert!((p.integrate(0.5, 3.5) - (3.5f64.powi(2) - 0.25 + 3.0)).abs() < 1e-12);
        let q = Pchip::new(vec![0.0, 1.0, 2.0, 5.0], vec![0.0, 2.0, 1.0, 4.0]);
        for (x, y) in [(0.0, 0.0), (1.0, 2.0), (2.0, 1.0), (5.0, 4.0)] {
            assert!((q.eval(x) - y).abs() < 1e-12);
        }
    }

    #[test]
    fn bd_rate_matches_frozen_reference_values() {
        // computed with scipy.interpolate.PchipInterpolator(...).integrate
        let a = curve(&[0.05, 0.11, 0.23, 0.47], &[28.1, 31.4, 34.0, 36.2]);
        let t = curve(&[0.04, 0.09, 0.21, 0.40], &[28.6, 31.9, 34.3, 36.9]);
        assert!((bd_rate(&a, &t).unwrap() - -25.074522007869493).abs() < 1e-9);
        let a = curve(&[0.1, 0.2, 0.25, 0.8, 1.0], &[30.0, 32.0, 32.2, 38.0, 38.5]);
        let t = curve(
            &[0.12, 0.18, 0.3, 0.5, 0.9],
            &[30.5, 31.5, 33.8, 36.0, 39.0],
        );
        assert!((bd_rate(&a, &t).unwrap() - -8.970833429356507).abs() < 1e-9);
    }

    #[test]
    fn bd_rate_errors() {
        let a = curve(&[0.1, 0.2, 0.3, 0.4], &[30.0, 31.0, 32.0, 33.0]);
        let far = curve(&[0.1, 0.2, 0.3, 0.4], &[40.0, 41.0, 42.0, 43.0]);
        assert_eq!(bd_rate(&a, &far), Err(MetricsError::NoOverlap));
        assert_eq!(bd_rate(&a[..3], &a), Err(MetricsError::TooFewPoints(3)));
        assert_eq!(bd_rate(&a, &a).unwrap(), 0.0);
    }
}
