use super::kernels::{self, NormStats};
use super::{shape_err, Tensor, TensorError};
use crate::codec::quant;
use crate::scalar::Scalar;

/// Handle to a value recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op<S> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, S),
    AddScalar(Var),
    Abs(Var),
    Sum(Var),
    Mean(Var),
    Sigmoid(Var),
    Gelu {
        x: Var,
        cdf: Vec<S>,
    },
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        stats: NormStats<S>,
    },
    DepthwiseConv {
        x: Var,
        k: Var,
        b: Var,
    },
    Linear {
        x: Var,
        w: Var,
        b: Var,
    },
    Upsample(Var),
    Blur {
        x: Var,
        taps: Vec<S>,
    },
    LerpSlices {
        x: Var,
        lo: usize,
        hi: usize,
        w: S,
    },
    FakeQuant(Var),
}

struct Node<S> {
    value: Tensor<S>,
    op: Op<S>,
    requires_grad: bool,
    grad: Option<Vec<S>>,
}

/// Tape of executed operations. Nodes are appended in execution order, which
/// is already a topological order, so the reverse pass is a single sweep.
pub struct Graph<S> {
    nodes: Vec<Node<S>>,
    consumed: bool,
}

impl<S: Scalar> Default for Graph<S> {
    fn default() -> Self {
        Self::new()
    }
}

/// Removes the gradient buffer of `v` for in-place accumulation, allocating
/// zeros on first touch. Pair with [`give_back`].
fn take<S: Scalar>(nodes: &mut [Node<S>], v: Var) -> Option<Vec<S>> {
    let node = &mut nodes[v.0];
    if !node.requires_grad {
        return None;
    }
    Some(
        node.grad
            .take()
            .unwrap_or_else(|| vec![S::zero(); node.value.len()]),
    )
}

fn give_back<S: Scalar>(nodes: &mut [Node<S>], v: Var, buf: Option<Vec<S>>) {
    let Some(buf) = buf else { return };
    let node = &mut nodes[v.0];
    match node.grad.as_mut() {
        // the same var was taken twice (used in two argument slots)
        Some(existing) => {
            for (e, b) in existing.iter_mut().zip(buf) {
                *e += b;
            }
        }
        None => node.grad = Some(buf),
    }
}

fn accumulate<S: Scalar>(nodes: &mut [Node<S>], v: Var, f: impl Fn(usize) -> S) {
    if let Some(mut buf) = take(nodes, v) {
        for (i, b) in buf.iter_mut().enumerate() {
            *b += f(i);
        }
        give_back(nodes, v, Some(buf));
    }
}

impl<S: Scalar> Graph<S> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            consumed: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<S>, op: Op<S>, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a leaf whose gradient will be populated by [`Graph::backward`].
    pub fn param(&mut self, value: Tensor<S>) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: true,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor<S>) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: false,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<S> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the loss with respect to a leaf, available after backward.
    pub fn grad(&self, v: Var) -> Option<Tensor<S>> {
        let node = &self.nodes[v.0];
        match &node.grad {
            Some(g) => Some(Tensor::new(node.value.shape().to_vec(), g.clone()).unwrap()),
            None if node.requires_grad && self.consumed => Some(Tensor::zeros(node.value.shape())),
            None => None,
        }
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), TensorError> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(shape_err(op, format!("{sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    fn zip_map(&self, a: Var, b: Var, f: impl Fn(S, S) -> S) -> Tensor<S> {
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Tensor::new(ta.shape().to_vec(), data).unwrap()
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.same_shape("add", a, b)?;
        let v = self.zip_map(a, b, |x, y| x + y);
        Ok(self.push(v, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.same_shape("sub", a, b)?;
        let v = self.zip_map(a, b, |x, y| x - y);
        Ok(self.push(v, Op::Sub(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.same_shape("mul", a, b)?;
        let v = self.zip_map(a, b, |x, y| x * y);
        Ok(self.push(v, Op::Mul(a, b), &[a, b]))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.same_shape("div", a, b)?;
        let v = self.zip_map(a, b, |x, y| x / y);
        Ok(self.push(v, Op::Div(a, b), &[a, b]))
    }

    pub fn scale(&mut self, x: Var, alpha: S) -> Var {
        let v = self.value(x).scaled(alpha);
        self.push(v, Op::Scale(x, alpha), &[x])
    }

    pub fn add_scalar(&mut self, x: Var, c: S) -> Var {
        let v = self.value(x).map(|e| e + c);
        self.push(v, Op::AddScalar(x), &[x])
    }

    pub fn abs(&mut self, x: Var) -> Var {
        let v = self.value(x).map(|e| e.abs());
        self.push(v, Op::Abs(x), &[x])
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s: f64 = self.value(x).data().iter().map(|v| v.f64()).sum();
        self.push(Tensor::scalar(S::lit(s)), Op::Sum(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let s: f64 = t.data().iter().map(|v| v.f64()).sum::<f64>() / t.len().max(1) as f64;
        self.push(Tensor::scalar(S::lit(s)), Op::Mean(x), &[x])
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let v = kernels::sigmoid(self.value(x));
        self.push(v, Op::Sigmoid(x), &[x])
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        let (v, cdf) = kernels::gelu_with_cdf(self.value(x));
        self.push(v, Op::Gelu { x, cdf }, &[x])
    }

    pub fn layer_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        eps: f64,
    ) -> Result<Var, TensorError> {
        let (v, stats) =
            kernels::layer_norm_fwd(self.value(x), self.value(gamma), self.value(beta), eps)?;
        Ok(self.push(
            v,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                stats,
            },
            &[x, gamma, beta],
        ))
    }

    pub fn depthwise_conv2d(&mut self, x: Var, k: Var, b: Var) -> Result<Var, TensorError> {
        let v = kernels::depthwise_conv2d(self.value(x), self.value(k), self.value(b))?;
        Ok(self.push(v, Op::DepthwiseConv { x, k, b }, &[x, k, b]))
    }

    pub fn pointwise_linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var, TensorError> {
        let v = kernels::pointwise_linear(self.value(x), self.value(w), self.value(b))?;
        Ok(self.push(v, Op::Linear { x, w, b }, &[x, w, b]))
    }

    pub fn bilinear_upsample2(&mut self, x: Var) -> Result<Var, TensorError> {
        let v = kernels::bilinear_upsample2(self.value(x))?;
        Ok(self.push(v, Op::Upsample(x), &[x]))
    }

    pub fn gaussian_blur(&mut self, x: Var, sigma: f64, k: usize) -> Result<Var, TensorError> {
        let v = kernels::gaussian_blur(self.value(x), sigma, k)?;
        let taps = kernels::gaussian_kernel(sigma, k)
            .into_iter()
            .map(S::lit)
            .collect();
        Ok(self.push(v, Op::Blur { x, taps }, &[x]))
    }

    /// `(1 - w) * x[lo] + w * x[hi]` over leading-axis slices. `w == 0`
    /// returns slice `lo` bit-exactly.
    pub fn lerp_slices(&mut self, x: Var, lo: usize, hi: usize, w: S) -> Result<Var, TensorError> {
        let t = self.value(x);
        let a = t.slice0(lo)?;
        let v = if w == S::zero() {
            a
        } else {
            let b = t.slice0(hi)?;
            let one_minus = S::one() - w;
            let data = a
                .data()
                .iter()
                .zip(b.data())
                .map(|(&p, &q)| one_minus * p + w * q)
                .collect();
            Tensor::new(a.shape().to_vec(), data)?
        };
        Ok(self.push(v, Op::LerpSlices { x, lo, hi, w }, &[x]))
    }

    /// Symmetric uniform fake-quantization with a straight-through gradient.
    pub fn fake_quant(&mut self, x: Var, bits: u32) -> Var {
        let v = quant::fake_quantize(self.value(x), bits);
        self.push(v, Op::FakeQuant(x), &[x])
    }

    /// Reverse sweep from a scalar `loss`. Leaf gradients are retained;
    /// intermediate buffers are released once propagated.
    pub fn backward(&mut self, loss: Var) -> Result<(), TensorError> {
        if self.consumed {
            return Err(TensorError::Consumed);
        }
        let shape = self.value(loss).shape().to_vec();
        if self.value(loss).len() != 1 {
            return Err(TensorError::NotScalar(shape));
        }
        self.consumed = true;
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        self.nodes[loss.0].grad = Some(vec![S::one()]);
        for i in (0..=loss.0).rev() {
            let (before, rest) = self.nodes.split_at_mut(i);
            let node = &mut rest[0];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = node.grad.take() else { continue };
            backprop(before, &node.op, &node.value, &g);
        }
        Ok(())
    }
}

fn backprop<S: Scalar>(nodes: &mut [Node<S>], op: &Op<S>, out: &Tensor<S>, g: &[S]) {
    match *op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            accumulate(nodes, a, |i| g[i]);
            accumulate(nodes, b, |i| g[i]);
        }
        Op::Sub(a, b) => {
            accumulate(nodes, a, |i| g[i]);
            accumulate(nodes, b, |i| -g[i]);
        }
        Op::Mul(a, b) => {
            let (va, vb) = (
                nodes[a.0].value.data().to_vec(),
                nodes[b.0].value.data().to_vec(),
            );
            accumulate(nodes, a, |i| g[i] * vb[i]);
            accumulate(nodes, b, |i| g[i] * va[i]);
        }
        Op::Div(a, b) => {
            let vb = nodes[b.0].value.data().to_vec();
            let o = out.data();
            accumulate(nodes, a, |i| g[i] / vb[i]);
            accumulate(nodes, b, |i| -g[i] * o[i] / vb[i]);
        }
        Op::Scale(x, alpha) => accumulate(nodes, x, |i| g[i] * alpha),
        Op::AddScalar(x) => accumulate(nodes, x, |i| g[i]),
        Op::Abs(x) => {
            let vx = nodes[x.0].value.data().to_vec();
            accumulate(nodes, x, |i| {
                let s = vx[i];
                if s > S::zero() {
                    g[i]
                } else if s < S::zero() {
                    -g[i]
                } else {
                    S::zero()
                }
            });
        }
        Op::Sum(x) => accumulate(nodes, x, |_| g[0]),
        Op::Mean(x) => {
            let n = S::lit(nodes[x.0].value.len().max(1) as f64);
            let gv = g[0] / n;
            accumulate(nodes, x, |_| gv);
        }
        Op::Sigmoid(x) => {
            // from the input: o * (1 - o) is exactly zero once o rounds to 1
            if let Some(mut dx) = take(nodes, x) {
                for (d, (&v, &gi)) in dx.iter_mut().zip(nodes[x.0].value.data().iter().zip(g)) {
                    let e = (-v.abs()).exp();
                    let s = S::one() + e;
                    *d += gi * e / (s * s);
                }
                give_back(nodes, x, Some(dx));
            }
        }
        Op::Gelu { x, ref cdf } => {
            if let Some(mut dx) = take(nodes, x) {
                kernels::gelu_backward(nodes[x.0].value.data(), cdf, g, &mut dx);
                give_back(nodes, x, Some(dx));
            }
        }
        Op::LayerNorm {
            x,
            gamma,
            beta,
            ref stats,
        } => {
            let mut dx = take(nodes, x);
            let mut dg = take(nodes, gamma);
            let mut db = take(nodes, beta);
            kernels::layer_norm_backward(
                nodes[gamma.0].value.data(),
                stats,
                g,
                dx.as_deref_mut(),
                dg.as_deref_mut(),
                db.as_deref_mut(),
            );
            give_back(nodes, x, dx);
            give_back(nodes, gamma, dg);
            give_back(nodes, beta, db);
        }
        Op::DepthwiseConv { x, k, b } => {
            let mut dx = take(nodes, x);
            let mut dk = take(nodes, k);
            let mut db = take(nodes, b);
            kernels::depthwise_conv2d_backward(
                &nodes[x.0].value,
                &nodes[k.0].value,
                g,
                dx.as_deref_mut(),
                dk.as_deref_mut(),
                db.as_deref_mut(),
            );
            give_back(nodes, x, dx);
            give_back(nodes, k, dk);
            give_back(nodes, b, db);
        }
        Op::Linear { x, w, b } => {
            let mut dx = take(nodes, x);
            let mut dw = take(nodes, w);
            let mut db = take(nodes, b);
            kernels::pointwise_linear_backward(
                &nodes[x.0].value,
                &nodes[w.0].value,
                g,
                dx.as_deref_mut(),
                dw.as_deref_mut(),
                db.as_deref_mut(),
            );
            give_back(nodes, x, dx);
            give_back(nodes, w, dw);
            give_back(nodes, b, db);
        }
        Op::Upsample(x) => {
            if let Some(mut dx) = take(nodes, x) {
                let shape = nodes[x.0].value.shape().to_vec();
                kernels::bilinear_upsample2_backward(&shape, g, &mut dx);
                give_back(nodes, x, Some(dx));
            }
        }
        Op::Blur { x, ref taps } => {
            if let Some(mut dx) = take(nodes, x) {
                let shape = nodes[x.0].value.shape().to_vec();
                kernels::blur_backward(&shape, taps, g, &mut dx);
                give_back(nodes, x, Some(dx));
            }
        }
        Op::LerpSlices { x, lo, hi, w } => {
            if let Some(mut dx) = take(nodes, x) {
                let step = g.len();
                let one_minus = S::one() - w;
                for (i, &gv) in g.iter().enumerate() {
                    dx[lo * step + i] += one_minus * gv;
                }
                if w != S::zero() {
                    for (i, &gv) in g.iter().enumerate() {
                        dx[hi * step + i] += w * gv;
                    }
                }
                give_back(nodes, x, Some(dx));
            }
        }
        Op::FakeQuant(x) => accumulate(nodes, x, |i| g[i]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_squares_gradient() {
        let mut g = Graph::<f64>::new();
        let x = g.param(Tensor::new(vec![3], vec![1.0, -2.0, 0.5]).unwrap());
        let sq = g.mul(x, x).unwrap();
        let l = g.sum(sq);
        g.backward(l).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[2.0, -4.0, 1.0]);
    }

    #[test]
    fn fan_out_accumulates() {
        let mut g = Graph::<f64>::new();
        let x = g.param(Tensor::full(&[2, 2], 0.3));
        let a = g.sum(x);
        let b = g.sum(x);
        let l = g.add(a, b).unwrap();
        g.backward(l).unwrap();
        assert!(g.grad(x).unwrap().data().iter().all(|&v| v == 2.0));
    }

    #[test]
    fn backward_errors() {
        let mut g = Graph::<f64>::new();
        let x = g.param(Tensor::full(&[2], 1.0));
        assert!(matches!(g.backward(x), Err(TensorError::NotScalar(_))));
        let l = g.sum(x);
        g.backward(l).unwrap();
        assert_eq!(g.backward(l), Err(TensorError::Consumed));
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut g = Graph::<f64>::new();
        let x = g.param(Tensor::full(&[2], 1.0));
        let c = g.constant(Tensor::full(&[2], 3.0));
        let p = g.mul(x, c).unwrap();
        let l = g.sum(p);
        g.backward(l).unwrap();
        assert!(g.grad(c).is_none());
        assert_eq!(g.grad(x).unwrap().data(), &[3.0, 3.0]);
    }

    #[test]
    fn fake_quant_is_straight_through() {
        let mut g = Graph::<f32>::new();
        let w = g.param(Tensor::new(vec![4], vec![0.11, -0.7, 0.33, 0.05]).unwrap());
        let q = g.fake_quant(w, 6);
        let l = g.sum(q);
        g.backward(l).unwrap();
        assert!(g.grad(w).unwrap().data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn lerp_at_node_is_exact_slice() {
        let mut g = Graph::<f32>::new();
        let x = g.param(Tensor::from_fn(&[3, 2, 2], |i| i as f32 * 0.1));
        let s = g.lerp_slices(x, 1, 2, 0.0).unwrap();
        assert_eq!(g.value(s), &g.value(x).slice0(1).unwrap());
    }
}
