use crate::metrics::{self, SSIM_K1, SSIM_K2, SSIM_SIGMA, SSIM_WINDOW};
use crate::scalar::Scalar;
use crate::tensor::{Graph, Tensor, TensorError, Var};

/// `mean |pred - target| + lambda * (1 - SSIM(pred, target))` recorded on `g`.
///
/// SSIM is only built when `lambda > 0`; it needs frames of at least the
/// window size.
pub fn loss_graph<S: Scalar>(
    g: &mut Graph<S>,
    pred: Var,
    target: Var,
    lambda: f64,
) -> Result<Var, TensorError> {
    let diff = g.sub(pred, target)?;
    let abs = g.abs(diff);
    let l1 = g.mean(abs);
    if lambda == 0.0 {
        return Ok(l1);
    }
    let s = ssim_graph(g, pred, target)?;
    let term = g.scale(s, S::lit(-lambda));
    let term = g.add_scalar(term, S::lit(lambda));
    g.add(l1, term)
}

/// Mean SSIM of two `[H, W, C]` nodes.
pub fn ssim_graph<S: Scalar>(g: &mut Graph<S>, a: Var, b: Var) -> Result<Var, TensorError> {
    let shape = g.value(a).shape().to_vec();
    if shape.len() != 3 || shape[0] < SSIM_WINDOW || shape[1] < SSIM_WINDOW {
        return Err(TensorError::Invalid {
            op: "ssim",
            detail: format!(
                "frame {shape:?} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window"
            ),
        });
    }
    let blur = |g: &mut Graph<S>, x: Var| g.gaussian_blur(x, SSIM_SIGMA, SSIM_WINDOW);
    let mu1 = blur(g, a)?;
    let mu2 = blur(g, b)?;
    let aa = g.mul(a, a)?;
    let bb = g.mul(b, b)?;
    let ab = g.mul(a, b)?;
    let e11 = blur(g, aa)?;
    let e22 = blur(g, bb)?;
    let e12 = blur(g, ab)?;
    let mu11 = g.mul(mu1, mu1)?;
    let mu22 = g.mul(mu2, mu2)?;
    let mu12 = g.mul(mu1, mu2)?;
    let s11 = g.sub(e11, mu11)?;
    let s22 = g.sub(e22, mu22)?;
    let s12 = g.sub(e12, mu12)?;
    let (c1, c2) = (S::lit(SSIM_K1 * SSIM_K1), S::lit(SSIM_K2 * SSIM_K2));
    let n1 = g.scale(mu12, S::lit(2.0));
    let n1 = g.add_scalar(n1, c1);
    let n2 = g.scale(s12, S::lit(2.0));
    let n2 = g.add_scalar(n2, c2);
    let num = g.mul(n1, n2)?;
    let d1 = g.add(mu11, mu22)?;
    let d1 = g.add_scalar(d1, c1);
    let d2 = g.add(s11, s22)?;
    let d2 = g.add_scalar(d2, c2);
    let den = g.mul(d1, d2)?;
    let map = g.div(num, den)?;
    Ok(g.mean(map))
}

/// Plain evaluation of the training loss.
pub fn loss_value<S: Scalar>(
    pred: &Tensor<S>,
    target: &Tensor<S>,
    lambda: f64,
) -> Result<f64, TensorError> {
    if pred.shape() != target.shape() {
        return Err(TensorError::Shape {
            op: "loss",
            detail: format!("{:?} vs {:?}", pred.shape(), target.shape()),
        });
    }
    let l1: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| (p.f64() - t.f64()).abs())
        .sum::<f64>()
        / pred.len() as f64;
    if lambda == 0.0 {
        return Ok(l1);
    }
    let s = metrics::ssim(pred, target).map_err(|e| TensorError::Invalid {
        op: "ssim",
        detail: e.to_string(),
    })?;
    Ok(l1 + lambda * (1.0 - s))
}
