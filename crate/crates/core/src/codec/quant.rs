//! Symmetric per-tensor uniform quantization.

use super::freq::FreqTable;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Largest symbol magnitude at `bits`: `2^(bits-1) - 1`.
pub fn qmax(bits: u32) -> i32 {
    (1i32 << (bits - 1)) - 1
}

/// Number of distinct symbols at `bits`: `2^bits - 1`.
pub fn alphabet_size(bits: u32) -> usize {
    2 * qmax(bits) as usize + 1
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub scale: f32,
    pub bits: u32,
    /// One symbol per unmasked entry, in row-major order.
    pub symbols: Vec<i32>,
    /// `true` marks a pruned entry that carries no symbol.
    pub mask: Option<Vec<bool>>,
    pub table: FreqTable,
}

impl QuantizedTensor {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn masked_count(&self) -> usize {
        self.mask
            .as_ref()
            .map_or(0, |m| m.iter().filter(|&&b| b).count())
    }
}

/// The f32 step for a tensor whose largest magnitude is `maxabs`.
///
/// Starts from the rounded quotient and nudges it by a few ulps so that
/// `f32(step * qmax) == f32(maxabs)` whenever such a step exists. The
/// largest entry then dequantizes back to itself in f32.
pub fn lattice_scale(maxabs: f64, qmax: i32) -> f32 {
    if maxabs == 0.0 {
        return 0.0;
    }
    let base = (maxabs / qmax as f64) as f32;
    let target = maxabs as f32;
    let hits = |s: f32| ((s as f64) * qmax as f64) as f32 == target;
    for d in 0..=4u32 {
        for s in [
            base.to_bits().wrapping_add(d),
            base.to_bits().wrapping_sub(d),
        ] {
            let s = f32::from_bits(s);
            if s.is_finite() && s > 0.0 && hits(s) {
                return s;
            }
        }
    }
    base
}

/// `round_half_away(w / scale)` clamped to `[-qmax, qmax]`.
pub fn symbol_of(w: f64, scale: f32, qmax: i32) -> i32 {
    if scale == 0.0 {
        return 0;
    }
    let q = (w / scale as f64).round();
    q.clamp(-(qmax as f64), qmax as f64) as i32
}

pub fn dequantize_value<S: Scalar>(symbol: i32, scale: f32) -> S {
    S::lit(scale as f64 * symbol as f64)
}

fn max_abs_unmasked<S: Scalar>(w: &Tensor<S>, mask: Option<&[bool]>) -> f64 {
    w.data()
        .iter()
        .enumerate()
        .filter(|(i, _)| mask.is_none_or(|m| !m[*i]))
        .map(|(_, v)| v.f64().abs())
        .fold(0.0, f64::max)
}

/// Quantizes `w` at `bits`, skipping masked entries. Panics unless
/// `2 <= bits <= 8` and the mask length matches.
pub fn quantize_tensor<S: Scalar>(
    name: &str,
    w: &Tensor<S>,
    mask: Option<&[bool]>,
    bits: u32,
) -> QuantizedTensor {
    assert!((2..=8).contains(&bits), "bits must lie in [2, 8]");
    if let Some(m) = mask {
        assert_eq!(m.len(), w.len(), "mask length");
    }
    let q = qmax(bits);
    let scale = lattice_scale(max_abs_unmasked(w, mask), q);
    let symbols: Vec<i32> = w
        .data()
        .iter()
        .enumerate()
        .filter(|(i, _)| mask.is_none_or(|m| !m[*i]))
        .map(|(_, v)| symbol_of(v.f64(), scale, q))
        .collect();
    let table = FreqTable::from_symbols(bits, &symbols);
    QuantizedTensor {
        name: name.to_string(),
        shape: w.shape().to_vec(),
        scale,
        bits,
        symbols,
        mask: mask.map(<[bool]>::to_vec),
        table,
    }
}

/// Masked entries come back as exact zeros.
pub fn dequantize<S: Scalar>(q: &QuantizedTensor) -> Tensor<S> {
    let mut data = Vec::with_capacity(q.len());
    let mut syms = q.symbols.iter();
    for i in 0..q.len() {
        let masked = q.mask.as_ref().is_some_and(|m| m[i]);
        data.push(if masked {
            S::zero()
        } else {
            dequantize_value(*syms.next().expect("symbol count"), q.scale)
        });
    }
    Tensor::new(q.shape.clone(), data).expect("shape")
}

/// `dequantize(quantize(w))` with a fresh scale from the current max-abs.
pub fn fake_quantize<S: Scalar>(w: &Tensor<S>, bits: u32) -> Tensor<S> {
    let q = qmax(bits);
    let scale = lattice_scale(max_abs_unmasked(w, None), q);
    w.map(|v| dequantize_value(symbol_of(v.f64(), scale, q), scale))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn maxabs_maps_to_top_symbol() {
        let w = Tensor::new(vec![4], vec![0.1f32, -0.7, 0.33, 0.05]).unwrap();
        let q = quantize_tensor("w", &w, None, 6);
        assert_eq!(q.symbols[1], -31);
        let d = dequantize::<f32>(&q);
        assert_eq!(d.data()[1], -0.7f32);
    }

    #[test]
    fn zero_tensor() {
        let w = Tensor::<f32>::zeros(&[3, 2]);
        let q = quantize_tensor("z", &w, None, 6);
        assert_eq!(q.scale, 0.0);
        assert!(q.symbols.iter().all(|&s| s == 0));
        assert_eq!(dequantize::<f32>(&q), w);
    }

    #[test]
    fn masked_entries_are_skipped() {
        let w = Tensor::new(vec![4], vec![5.0f64, 0.5, -0.25, 1.0]).unwrap();
        let mask = [true, false, false, false];
        let q = quantize_tensor("m", &w, Some(&mask), 4);
        assert_eq!(q.symbols.len(), 3);
        assert_eq!(q.symbols[2], 7);
        let d = dequantize::<f64>(&q);
        assert_eq!(d.data()[0], 0.0);
        assert!((d.data()[3] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn rounds_half_away_from_zero() {
        assert_eq!(symbol_of(2.5, 1.0, 31), 3);
        assert_eq!(symbol_of(-2.5, 1.0, 31), -3);
        assert_eq!(symbol_of(40.0, 1.0, 31), 31);
        assert_eq!(symbol_of(-40.0, 1.0, 31), -31);
    }

    #[test]
    fn alphabet() {
        assert_eq!(qmax(6), 31);
        assert_eq!(alphabet_size(6), 63);
        assert_eq!(alphabet_size(2), 3);
        assert_eq!(alphabet_size(8), 255);
    }

    #[test]
    fn fake_quant_is_a_fixed_point_on_the_lattice() {
        let w = Tensor::from_fn(&[50], |i| ((i as f32) * 0.731).sin() * 0.3);
        let once = fake_quantize(&w, 6);
        assert_eq!(fake_quantize(&once, 6), once);
    }
}
