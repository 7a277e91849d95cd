//! Forward and adjoint kernels over `[H, W, C]` feature maps.
//!
//! Every function here is pure. The adjoints take the upstream gradient and
//! accumulate into caller-provided buffers so that fan-out sums fall out of
//! the tape for free.

use super::{shape_err, Tensor, TensorError};
use crate::scalar::Scalar;

fn hwc(op: &'static str, t: &Tensor<impl Scalar>) -> Result<(usize, usize, usize), TensorError> {
    match *t.shape() {
        [h, w, c] => Ok((h, w, c)),
        ref s => Err(shape_err(op, format!("expected [H, W, C], got {s:?}"))),
    }
}

pub fn depthwise_conv2d<S: Scalar>(
    x: &Tensor<S>,
    k: &Tensor<S>,
    b: &Tensor<S>,
) -> Result<Tensor<S>, TensorError> {
    let (h, w, c) = hwc("depthwise_conv2d", x)?;
    let ks = match *k.shape() {
        [ka, kb, kc] if ka == kb && kc == c && ka % 2 == 1 => ka,
        ref s => {
            return Err(shape_err(
                "depthwise_conv2d",
                format!("kernel {s:?} incompatible with {c} channels (need odd K x K x C)"),
            ))
        }
    };
    if b.shape() != [c] {
        return Err(shape_err(
            "depthwise_conv2d",
            format!("bias {:?} != [{c}]", b.shape()),
        ));
    }
    let r = ks / 2;
    let (xd, kd, bd) = (x.data(), k.data(), b.data());
    let mut out = vec![S::zero(); h * w * c];
    for y in 0..h {
        for xx in 0..w {
            let o = &mut out[(y * w + xx) * c..(y * w + xx + 1) * c];
            o.copy_from_slice(bd);
            for u in 0..ks {
                let Some(sy) = (y + u).checked_sub(r).filter(|&v| v < h) else {
                    continue;
                };
                for v in 0..ks {
                    let Some(sx) = (xx + v).checked_sub(r).filter(|&v| v < w) else {
                        continue;
                    };
                    let src = &xd[(sy * w + sx) * c..(sy * w + sx + 1) * c];
                    let tap = &kd[(u * ks + v) * c..(u * ks + v + 1) * c];
                    for ((o, &s), &t) in o.iter_mut().zip(src).zip(tap) {
                        *o += s * t;
                    }
                }
            }
        }
    }
    Tensor::new(vec![h, w, c], out)
}

/// Adjoint of [`depthwise_conv2d`]. Any of the output buffers may be `None`
/// when that input does not need a gradient.
pub(crate) fn depthwise_conv2d_backward<S: Scalar>(
    x: &Tensor<S>,
    k: &Tensor<S>,
    dy: &[S],
    dx: Option<&mut [S]>,
    dk: Option<&mut [S]>,
    db: Option<&mut [S]>,
) {
    let (h, w, c) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let ks = k.shape()[0];
    let r = ks / 2;
    let (xd, kd) = (x.data(), k.data());
    if let Some(db) = db {
        let mut acc = vec![0f64; c];
        for px in dy.chunks_exact(c) {
            for (a, &g) in acc.iter_mut().zip(px) {
                *a += g.f64();
            }
        }
        for (d, a) in db.iter_mut().zip(acc) {
            *d += S::lit(a);
        }
    }
    let mut dk_acc = dk.as_ref().map(|_| vec![0f64; ks * ks * c]);
    let mut dx = dx;
    for y in 0..h {
        for xx in 0..w {
            let g = &dy[(y * w + xx) * c..(y * w + xx + 1) * c];
            for u in 0..ks {
                let Some(sy) = (y + u).checked_sub(r).filter(|&v| v < h) else {
                    continue;
                };
                for v in 0..ks {
                    let Some(sx) = (xx + v).checked_sub(r).filter(|&v| v < w) else {
                        continue;
                    };
                    let base = (sy * w + sx) * c;
                    let tap = (u * ks + v) * c;
                    if let Some(dx) = dx.as_deref_mut() {
                        let dst = &mut dx[base..base + c];
                        for ((d, &gg), &t) in dst.iter_mut().zip(g).zip(&kd[tap..tap + c]) {
                            *d += gg * t;
                        }
                    }
                    if let Some(acc) = dk_acc.as_mut() {
                        let dst = &mut acc[tap..tap + c];
                        for ((d, &gg), &s) in dst.iter_mut().zip(g).zip(&xd[base..base + c]) {
                            *d += (gg * s).f64();
                        }
                    }
                }
            }
        }
    }
    if let (Some(dk), Some(acc)) = (dk, dk_acc) {
        for (d, a) in dk.iter_mut().zip(acc) {
            *d += S::lit(a);
        }
    }
}

/// Per-row affine map over the last axis: `y = x W^T + b` with `W` of shape
/// `[Cout, Cin]`.
pub fn pointwise_linear<S: Scalar>(
    x: &Tensor<S>,
    w: &Tensor<S>,
    b: &Tensor<S>,
) -> Result<Tensor<S>, TensorError> {
    let cin = x.channels();
    let (cout, wcin) = match *w.shape() {
        [o, i] => (o, i),
        ref s => {
            return Err(shape_err(
                "pointwise_linear",
                format!("weight {s:?} not 2-D"),
            ))
        }
    };
    if x.rank() == 0 || wcin != cin {
        return Err(shape_err(
            "pointwise_linear",
            format!("input {:?} vs weight {:?}", x.shape(), w.shape()),
        ));
    }
    if b.shape() != [cout] {
        return Err(shape_err(
            "pointwise_linear",
            format!("bias {:?} != [{cout}]", b.shape()),
        ));
    }
    let rows = x.len() / cin;
    let mut out = Vec::with_capacity(rows * cout);
    for _ in 0..rows {
        out.extend_from_slice(b.data());
    }
    S::gemm(
        rows,
        cin,
        cout,
        S::one(),
        x.data(),
        cin,
        1,
        w.data(),
        1,
        cin,
        S::one(),
        &mut out,
        cout,
        1,
    );
    let mut shape = x.shape().to_vec();
    *shape.last_mut().unwrap() = cout;
    Tensor::new(shape, out)
}

pub(crate) fn pointwise_linear_backward<S: Scalar>(
    x: &Tensor<S>,
    w: &Tensor<S>,
    dy: &[S],
    dx: Option<&mut [S]>,
    dw: Option<&mut [S]>,
    db: Option<&mut [S]>,
) {
    let cin = x.channels();
    let cout = w.shape()[0];
    let rows = x.len() / cin;
    if let Some(dx) = dx {
        S::gemm(
            rows,
            cout,
            cin,
            S::one(),
            dy,
            cout,
            1,
            w.data(),
            cin,
            1,
            S::one(),
            dx,
            cin,
            1,
        );
    }
    if let Some(dw) = dw {
        S::gemm(
            cout,
            rows,
            cin,
            S::one(),
            dy,
            1,
            cout,
            x.data(),
            cin,
            1,
            S::one(),
            dw,
            cin,
            1,
        );
    }
    if let Some(db) = db {
        let mut acc = vec![0f64; cout];
        for row in dy.chunks_exact(cout) {
            for (a, &g) in acc.iter_mut().zip(row) {
                *a += g.f64();
            }
        }
        for (d, a) in db.iter_mut().zip(acc) {
            *d += S::lit(a);
        }
    }
}

/// Source taps for one output coordinate of a x2 half-pixel upsample:
/// `(i0, i1, w1)` such that `out = in[i0] + w1 * (in[i1] - in[i0])`.
fn upsample_taps<S: Scalar>(n: usize) -> Vec<(usize, usize, S)> {
    let quarter = S::lit(0.25);
    (0..2 * n)
        .map(|p| {
            let q = p / 2;
            // the nearer tap is the base, so the weight on the other is 1/4:
            // even p samples q - 0.25, odd p samples q + 0.25
            let other = if p % 2 == 0 {
                q.saturating_sub(1)
            } else {
                (q + 1).min(n - 1)
            };
            let w = if other == q { S::zero() } else { quarter };
            (q, other, w)
        })
        .collect()
}

/// Bilinear x2 upsampling with half-pixel centres and clamped borders.
pub fn bilinear_upsample2<S: Scalar>(x: &Tensor<S>) -> Result<Tensor<S>, TensorError> {
    let (h, w, c) = hwc("bilinear_upsample2", x)?;
    if h == 0 || w == 0 {
        return Err(shape_err("bilinear_upsample2", "empty spatial extent"));
    }
    let tx = upsample_taps::<S>(w);
    let ty = upsample_taps::<S>(h);
    let xd = x.data();
    // horizontal pass: [h, 2w, c]
    let mut mid = vec![S::zero(); h * 2 * w * c];
    for y in 0..h {
        for (ox, &(a, b, wt)) in tx.iter().enumerate() {
            let dst = &mut mid[(y * 2 * w + ox) * c..(y * 2 * w + ox + 1) * c];
            let pa = &xd[(y * w + a) * c..(y * w + a + 1) * c];
            let pb = &xd[(y * w + b) * c..(y * w + b + 1) * c];
            for ((d, &va), &vb) in dst.iter_mut().zip(pa).zip(pb) {
                *d = va + wt * (vb - va);
            }
        }
    }
    let row = 2 * w * c;
    let mut out = vec![S::zero(); 2 * h * row];
    for (oy, &(a, b, wt)) in ty.iter().enumerate() {
        let dst = &mut out[oy * row..(oy + 1) * row];
        let ra = &mid[a * row..(a + 1) * row];
        let rb = &mid[b * row..(b + 1) * row];
        for ((d, &va), &vb) in dst.iter_mut().zip(ra).zip(rb) {
            *d = va + wt * (vb - va);
        }
    }
    Tensor::new(vec![2 * h, 2 * w, c], out)
}

pub(crate) fn bilinear_upsample2_backward<S: Scalar>(shape: &[usize], dy: &[S], dx: &mut [S]) {
    let (h, w, c) = (shape[0], shape[1], shape[2]);
    let tx = upsample_taps::<S>(w);
    let ty = upsample_taps::<S>(h);
    let row = 2 * w * c;
    let mut dmid = vec![S::zero(); h * row];
    for (oy, &(a, b, wt)) in ty.iter().enumerate() {
        let g = &dy[oy * row..(oy + 1) * row];
        for (i, &gv) in g.iter().enumerate() {
            dmid[a * row + i] += gv - wt * gv;
            dmid[b * row + i] += wt * gv;
        }
    }
    for y in 0..h {
        for (ox, &(a, b, wt)) in tx.iter().enumerate() {
            let g = &dmid[(y * 2 * w + ox) * c..(y * 2 * w + ox + 1) * c];
            for (ch, &gv) in g.iter().enumerate() {
                dx[(y * w + a) * c + ch] += gv - wt * gv;
                dx[(y * w + b) * c + ch] += wt * gv;
            }
        }
    }
}

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Exact-erf GELU. Returns the output and the saved normal CDF values.
pub(crate) fn gelu_with_cdf<S: Scalar>(x: &Tensor<S>) -> (Tensor<S>, Vec<S>) {
    let half = S::lit(0.5);
    let k = S::lit(FRAC_1_SQRT_2);
    let cdf: Vec<S> = x
        .data()
        .iter()
        .map(|&v| half * (S::one() + (v * k).erf()))
        .collect();
    let out = x.data().iter().zip(&cdf).map(|(&v, &p)| v * p).collect();
    (Tensor::new(x.shape().to_vec(), out).unwrap(), cdf)
}

pub fn gelu<S: Scalar>(x: &Tensor<S>) -> Tensor<S> {
    gelu_with_cdf(x).0
}

pub(crate) fn gelu_backward<S: Scalar>(x: &[S], cdf: &[S], dy: &[S], dx: &mut [S]) {
    let half = S::lit(-0.5);
    let norm = S::lit(INV_SQRT_2PI);
    for (((d, &v), &p), &g) in dx.iter_mut().zip(x).zip(cdf).zip(dy) {
        let pdf = norm * (half * v * v).exp();
        *d += g * (p + v * pdf);
    }
}

/// Per-position statistics saved by [`layer_norm_fwd`] for the adjoint.
pub(crate) struct NormStats<S> {
    pub xhat: Vec<S>,
    pub rstd: Vec<S>,
}

pub(crate) fn layer_norm_fwd<S: Scalar>(
    x: &Tensor<S>,
    gamma: &Tensor<S>,
    beta: &Tensor<S>,
    eps: f64,
) -> Result<(Tensor<S>, NormStats<S>), TensorError> {
    let c = x.channels();
    if x.rank() == 0 || gamma.shape() != [c] || beta.shape() != [c] {
        return Err(shape_err(
            "layer_norm",
            format!(
                "input {:?}, gamma {:?}, beta {:?}",
                x.shape(),
                gamma.shape(),
                beta.shape()
            ),
        ));
    }
    if !(eps > 0.0) {
        return Err(TensorError::Invalid {
            op: "layer_norm",
            detail: format!("eps must be positive, got {eps}"),
        });
    }
    let rows = x.len() / c;
    let mut out = Vec::with_capacity(x.len());
    let mut xhat = Vec::with_capacity(x.len());
    let mut rstd = Vec::with_capacity(rows);
    for px in x.data().chunks_exact(c) {
        let mean = px.iter().map(|v| v.f64()).sum::<f64>() / c as f64;
        let var = px
            .iter()
            .map(|v| {
                let d = v.f64() - mean;
                d * d
            })
            .sum::<f64>()
            / c as f64;
        let rs = 1.0 / (var + eps).sqrt();
        rstd.push(S::lit(rs));
        for ((&v, &g), &b) in px.iter().zip(gamma.data()).zip(beta.data()) {
            let n = S::lit((v.f64() - mean) * rs);
            xhat.push(n);
            out.push(n * g + b);
        }
    }
    Ok((
        Tensor::new(x.shape().to_vec(), out)?,
        NormStats { xhat, rstd },
    ))
}

/// Layer normalization over the channel axis followed by a per-channel affine.
pub fn layer_norm<S: Scalar>(
    x: &Tensor<S>,
    gamma: &Tensor<S>,
    beta: &Tensor<S>,
    eps: f64,
) -> Result<Tensor<S>, TensorError> {
    layer_norm_fwd(x, gamma, beta, eps).map(|(t, _)| t)
}

pub(crate) fn layer_norm_backward<S: Scalar>(
    gamma: &[S],
    stats: &NormStats<S>,
    dy: &[S],
    dx: Option<&mut [S]>,
    dgamma: Option<&mut [S]>,
    dbeta: Option<&mut [S]>,
) {
    let c = gamma.len();
    if let Some(dx) = dx {
        for (((dxr, gr), xr), &rs) in dx
            .chunks_exact_mut(c)
            .zip(dy.chunks_exact(c))
            .zip(stats.xhat.chunks_exact(c))
            .zip(&stats.rstd)
        {
            let mut m1 = 0f64;
            let mut m2 = 0f64;
            for ((&g, &gm), &xh) in gr.iter().zip(gamma).zip(xr) {
                let dxh = (g * gm).f64();
                m1 += dxh;
                m2 += dxh * xh.f64();
            }
            m1 /= c as f64;
            m2 /= c as f64;
            let rs = rs.f64();
            for (((d, &g), &gm), &xh) in dxr.iter_mut().zip(gr).zip(gamma).zip(xr) {
                let dxh = (g * gm).f64();
                *d += S::lit(rs * (dxh - m1 - xh.f64() * m2));
            }
        }
    }
    if dgamma.is_some() || dbeta.is_some() {
        let mut ag = vec![0f64; c];
        let mut ab = vec![0f64; c];
        for (gr, xr) in dy.chunks_exact(c).zip(stats.xhat.chunks_exact(c)) {
            for ch in 0..c {
                ag[ch] += (gr[ch] * xr[ch]).f64();
                ab[ch] += gr[ch].f64();
            }
        }
        if let Some(dg) = dgamma {
            for (d, a) in dg.iter_mut().zip(ag) {
                *d += S::lit(a);
            }
        }
        if let Some(db) = dbeta {
            for (d, a) in db.iter_mut().zip(ab) {
                *d += S::lit(a);
            }
        }
    }
}

/// Normalized, sampled 1-D Gaussian of odd length `k`.
pub fn gaussian_kernel(sigma: f64, k: usize) -> Vec<f64> {
    let r = (k / 2) as f64;
    let raw: Vec<f64> = (0..k)
        .map(|i| {
            let d = i as f64 - r;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / sum).collect()
}

/// Mirror index without edge repetition (`d c b | a b c d | c b a`).
#[inline]
fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut m = i.rem_euclid(period);
    if m >= n as isize {
        m = period - m;
    }
    m as usize
}

fn check_blur(op: &'static str, x: &Tensor<impl Scalar>, k: usize) -> Result<(), TensorError> {
    hwc(op, x)?;
    if k % 2 == 0 {
        return Err(TensorError::Invalid {
            op,
            detail: format!("kernel size {k} must be odd"),
        });
    }
    Ok(())
}

/// Separable Gaussian filter with reflect padding, applied per channel.
pub fn gaussian_blur<S: Scalar>(
    x: &Tensor<S>,
    sigma: f64,
    k: usize,
) -> Result<Tensor<S>, TensorError> {
    check_blur("gaussian_blur", x, k)?;
    let taps: Vec<S> = gaussian_kernel(sigma, k).into_iter().map(S::lit).collect();
    Ok(blur_with(x, &taps))
}

pub(crate) fn blur_with<S: Scalar>(x: &Tensor<S>, taps: &[S]) -> Tensor<S> {
    let (h, w, c) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let r = (taps.len() / 2) as isize;
    let xd = x.data();
    let mut mid = vec![S::zero(); xd.len()];
    for y in 0..h {
        for xx in 0..w {
            let dst = &mut mid[(y * w + xx) * c..(y * w + xx + 1) * c];
            for (t, &tap) in taps.iter().enumerate() {
                let sx = reflect(xx as isize + t as isize - r, w);
                let src = &xd[(y * w + sx) * c..(y * w + sx + 1) * c];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d += tap * s;
                }
            }
        }
    }
    let mut out = vec![S::zero(); xd.len()];
    let row = w * c;
    for y in 0..h {
        let dst = &mut out[y * row..(y + 1) * row];
        for (t, &tap) in taps.iter().enumerate() {
            let sy = reflect(y as isize + t as isize - r, h);
            let src = &mid[sy * row..(sy + 1) * row];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d += tap * s;
            }
        }
    }
    Tensor::new(x.shape().to_vec(), out).unwrap()
}

pub(crate) fn blur_backward<S: Scalar>(shape: &[usize], taps: &[S], dy: &[S], dx: &mut [S]) {
    let (h, w, c) = (shape[0], shape[1], shape[2]);
    let r = (taps.len() / 2) as isize;
    let row = w * c;
    let mut dmid = vec![S::zero(); dy.len()];
    for y in 0..h {
        let g = &dy[y * row..(y + 1) * row];
        for (t, &tap) in taps.iter().enumerate() {
            let sy = reflect(y as isize + t as isize - r, h);
            let dst = &mut dmid[sy * row..(sy + 1) * row];
            for (d, &gv) in dst.iter_mut().zip(g) {
                *d += tap * gv;
            }
        }
    }
    for y in 0..h {
        for xx in 0..w {
            let g = &dmid[(y * w + xx) * c..(y * w + xx + 1) * c];
            for (t, &tap) in taps.iter().enumerate() {
                let sx = reflect(xx as isize + t as isize - r, w);
                let dst = &mut dx[(y * w + sx) * c..(y * w + sx + 1) * c];
                for (d, &gv) in dst.iter_mut().zip(g) {
                    *d += tap * gv;
                }
            }
        }
    }
}

pub fn sigmoid<S: Scalar>(x: &Tensor<S>) -> Tensor<S> {
    x.map(|v| S::one() / (S::one() + (-v).exp()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
        Tensor::new(shape.to_vec(), v.to_vec()).unwrap()
    }

    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        ((*seed >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    }

    #[test]
    fn conv_all_ones_counts_neighbours() {
        let x = Tensor::<f64>::full(&[3, 3, 1], 1.0);
        let k = Tensor::<f64>::full(&[3, 3, 1], 1.0);
        let b = Tensor::<f64>::zeros(&[1]);
        let y = depthwise_conv2d(&x, &k, &b).unwrap();
        assert_eq!(y.data()[4], 9.0);
        assert_eq!(y.data()[0], 4.0);
        assert_eq!(y.data()[8], 4.0);
        assert_eq!(y.data()[1], 6.0);
    }

    #[test]
    fn conv_identity_kernel() {
        let mut s = 7;
        let x = Tensor::from_fn(&[4, 5, 3], |_| lcg(&mut s));
        let mut k = Tensor::<f64>::zeros(&[3, 3, 3]);
        for c in 0..3 {
            k.data_mut()[4 * 3 + c] = 1.0;
        }
        let y = depthwise_conv2d(&x, &k, &Tensor::zeros(&[3])).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn conv_matches_loop_oracle() {
        let mut s = 11;
        let (h, w, c, ks) = (5usize, 5usize, 2usize, 3usize);
        let x = Tensor::from_fn(&[h, w, c], |_| lcg(&mut s));
        let k = Tensor::from_fn(&[ks, ks, c], |_| lcg(&mut s));
        let b = Tensor::from_fn(&[c], |_| lcg(&mut s));
        let y = depthwise_conv2d(&x, &k, &b).unwrap();
        let at = |yy: isize, xx: isize, ch: usize| -> f64 {
            if yy < 0 || xx < 0 || yy >= h as isize || xx >= w as isize {
                0.0
            } else {
                x.data()[(yy as usize * w + xx as usize) * c + ch]
            }
        };
        for yy in 0..h {
            for xx in 0..w {
                for ch in 0..c {
                    let mut acc = b.data()[ch];
                    for u in 0..ks {
                        for v in 0..ks {
                            acc += at(
                                yy as isize + u as isize - 1,
                                xx as isize + v as isize - 1,
                                ch,
                            ) * k.data()[(u * ks + v) * c + ch];
                        }
                    }
                    let got = y.data()[(yy * w + xx) * c + ch];
                    assert!((got - acc).abs() < 1e-12, "{got} vs {acc}");
                }
            }
        }
    }

    #[test]
    fn conv_rejects_channel_mismatch() {
        let x = Tensor::<f64>::zeros(&[3, 3, 2]);
        let k = Tensor::<f64>::zeros(&[3, 3, 3]);
        assert!(matches!(
            depthwise_conv2d(&x, &k, &Tensor::zeros(&[2])),
            Err(TensorError::Shape { .. })
        ));
        let k = Tensor::<f64>::zeros(&[3, 3, 2]);
        assert!(depthwise_conv2d(&x, &k, &Tensor::zeros(&[3])).is_err());
    }

    #[test]
    fn linear_cases() {
        let x = t(&[1, 1, 2], &[2.0, 3.0]);
        let w = t(&[1, 2], &[1.0, 1.0]);
        let y = pointwise_linear(&x, &w, &Tensor::zeros(&[1])).unwrap();
        assert_eq!(y.data(), &[5.0]);
        assert_eq!(y.shape(), &[1, 1, 1]);

        let mut s = 3;
        let x = Tensor::from_fn(&[2, 3, 4], |_| lcg(&mut s));
        let eye = Tensor::from_fn(&[4, 4], |i| if i / 4 == i % 4 { 1.0 } else { 0.0 });
        let y = pointwise_linear(&x, &eye, &Tensor::zeros(&[4])).unwrap();
        assert_eq!(y, x);

        let w = Tensor::from_fn(&[3, 4], |_| lcg(&mut s));
        let b = Tensor::from_fn(&[3], |_| lcg(&mut s));
        let y = pointwise_linear(&x, &w, &b).unwrap();
        for p in 0..6 {
            for o in 0..3 {
                let mut acc = b.data()[o];
                for i in 0..4 {
                    acc += w.data()[o * 4 + i] * x.data()[p * 4 + i];
                }
                assert!((acc - y.data()[p * 3 + o]).abs() < 1e-12);
            }
        }
        assert!(pointwise_linear(&x, &Tensor::zeros(&[3, 5]), &b).is_err());
    }

    #[test]
    fn upsample_half_pixel_row() {
        let x = t(&[1, 2, 1], &[0.0, 1.0]);
        let y = bilinear_upsample2(&x).unwrap();
        assert_eq!(y.shape(), &[2, 4, 1]);
        assert_eq!(&y.data()[..4], &[0.0, 0.25, 0.75, 1.0]);
        assert_eq!(&y.data()[4..], &[0.0, 0.25, 0.75, 1.0]);
    }

    #[test]
    fn upsample_2x2_matches_sampling_oracle() {
        let x = t(&[2, 2, 1], &[0.0, 1.0, 2.0, 3.0]);
        let y = bilinear_upsample2(&x).unwrap();
        // scalar oracle: sample at ((p + 0.5) / 2 - 0.5), clamped
        let sample = |sy: f64, sx: f64| {
            let c = |v: f64| v.clamp(0.0, 1.0);
            let (y0, x0) = (sy.floor(), sx.floor());
            let (fy, fx) = (sy - y0, sx - x0);
            let g = |yy: f64, xx: f64| x.data()[(c(yy) as usize) * 2 + c(xx) as usize];
            (1.0 - fy) * ((1.0 - fx) * g(y0, x0) + fx * g(y0, x0 + 1.0))
                + fy * ((1.0 - fx) * g(y0 + 1.0, x0) + fx * g(y0 + 1.0, x0 + 1.0))
        };
        for py in 0..4 {
            for px in 0..4 {
                let e = sample((py as f64 + 0.5) / 2.0 - 0.5, (px as f64 + 0.5) / 2.0 - 0.5);
                assert!((y.data()[py * 4 + px] - e).abs() < 1e-15, "({py},{px})");
            }
        }
        assert_eq!(&y.data()[..4], &[0.0, 0.25, 0.75, 1.0]);
        assert_eq!(&y.data()[4..8], &[0.5, 0.75, 1.25, 1.5]);
    }

    #[test]
    fn upsample_constant_is_exact() {
        let x = Tensor::<f32>::full(&[3, 5, 2], 0.123_456_7);
        let y = bilinear_upsample2(&x).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.123_456_7));
    }

    #[test]
    fn gelu_reference_values() {
        let x = t(&[3], &[0.0, 10.0, 1.0]);
        let y = gelu(&x);
        assert_eq!(y.data()[0], 0.0);
        assert!((y.data()[1] - 10.0).abs() < 1e-6);
        // 0.5 * (1 + erf(1/sqrt 2))
        assert!((y.data()[2] - 0.841_344_746_068_542_9).abs() < 1e-5);
    }

    #[test]
    fn layer_norm_cases() {
        let one = Tensor::<f64>::full(&[2], 1.0);
        let zero = Tensor::<f64>::zeros(&[2]);
        let y = layer_norm(&t(&[1, 1, 2], &[1.0, 3.0]), &one, &zero, 1e-12).unwrap();
        assert!((y.data()[0] + 1.0).abs() < 1e-9 && (y.data()[1] - 1.0).abs() < 1e-9);
        let y = layer_norm(&t(&[1, 1, 2], &[4.0, 4.0]), &one, &zero, 1e-6).unwrap();
        assert_eq!(y.data(), &[0.0, 0.0]);

        let mut s = 5;
        let x = Tensor::from_fn(&[3, 2, 5], |_| lcg(&mut s));
        let g = Tensor::from_fn(&[5], |_| lcg(&mut s));
        let b = Tensor::from_fn(&[5], |_| lcg(&mut s));
        let y = layer_norm(&x, &g, &b, 1e-6).unwrap();
        for (px, out) in x.data().chunks(5).zip(y.data().chunks(5)) {
            let mean = px.iter().sum::<f64>() / 5.0;
            let var = px.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 5.0;
            for ch in 0..5 {
                let e = (px[ch] - mean) / (var + 1e-6).sqrt() * g.data()[ch] + b.data()[ch];
                assert!((e - out[ch]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gaussian_kernel_sums_to_one() {
        for &sigma in &[0.3, 0.8, 1.5, 4.0, 17.0] {
            for k in [1, 3, 7, 11, 21] {
                let s: f64 = gaussian_kernel(sigma, k).iter().sum();
                assert!((s - 1.0).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn blur_impulse_gives_sampled_gaussian() {
        // 21x21 keeps reflected taps away from the impulse
        let mut x = Tensor::<f64>::zeros(&[21, 21, 1]);
        x.data_mut()[10 * 21 + 10] = 1.0;
        let y = gaussian_blur(&x, 1.5, 11).unwrap();
        // closed-form oracle: outer product of normalized exp(-d^2 / (2 sigma^2))
        let z: f64 = (-5..=5).map(|d: i32| (-(d * d) as f64 / 4.5).exp()).sum();
        let g = |d: f64| {
            if d.abs() > 5.0 {
                0.0
            } else {
                (-(d * d) / 4.5).exp() / z
            }
        };
        for i in 0..21 {
            for j in 0..21 {
                let e = g(i as f64 - 10.0) * g(j as f64 - 10.0);
                assert!((y.data()[i * 21 + j] - e).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn blur_constant_and_reflect() {
        let x = Tensor::<f64>::full(&[12, 13, 3], 0.25);
        let y = gaussian_blur(&x, 1.5, 11).unwrap();
        assert!(y.data().iter().all(|v| (v - 0.25).abs() < 1e-15));
        assert_eq!(reflect(-1, 5), 1);
        assert_eq!(reflect(-2, 5), 2);
        assert_eq!(reflect(5, 5), 3);
        assert_eq!(reflect(6, 5), 2);
        assert_eq!(reflect(3, 1), 0);
        assert!(gaussian_blur(&x, 1.5, 4).is_err());
    }
}
