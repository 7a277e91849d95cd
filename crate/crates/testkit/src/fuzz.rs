//! Random quantized models and corrupted streams.

use srnerv_core::codec::{
    decode_video, dequantize_store, encode_bitstream, parse, quantize_store, serialize,
    QuantizedModel,
};
use srnerv_core::model::{render_video, ParameterStore, ShareMode};

use crate::models::{randomize, tiny_config};
use crate::Lcg;

/// A random store with some all-zero and some masked tensors, quantized at
/// a random bit depth in `[2, 8]`.
pub fn random_model(seed: u64) -> (ParameterStore<f32>, QuantizedModel) {
    let mut r = Lcg(seed);
    let mode = ShareMode::ALL[r.below(3)];
    let cfg = tiny_config(&mut r, mode);
    let mut store = ParameterStore::<f32>::build(&cfg, seed).unwrap();
    randomize(&mut store, seed ^ 0x77, 0.1 + r.uniform().abs() * 4.0);
    for i in 0..store.params().len() {
        match r.below(5) {
            0 => store.param_mut(i).value.data_mut().fill(0.0),
            1 => {
                let n = store.param(i).value.len();
                let mask: Vec<bool> = (0..n).map(|_| r.below(3) == 0).collect();
                let p = store.param_mut(i);
                p.mask = Some(mask);
                p.apply_mask();
            }
            _ => {}
        }
    }
    let bits = 2 + r.below(7) as u32;
    let q = quantize_store(&store, bits);
    (store, q)
}

/// serialize, parse and dequantize one random model; every weight must come
/// back as exactly `scale * symbol` (zero where masked).
pub fn roundtrip(seed: u64) -> Result<(), String> {
    let (_, q) = random_model(seed);
    let bytes = serialize(&q);
    let back = parse(&bytes).map_err(|e| format!("seed {seed}: {e}"))?;
    if back != q {
        return Err(format!("seed {seed}: parsed model differs"));
    }
    if serialize(&back) != bytes {
        return Err(format!("seed {seed}: reserialized bytes differ"));
    }
    let a = dequantize_store::<f32>(&q).map_err(|e| e.to_string())?;
    let b = dequantize_store::<f32>(&back).map_err(|e| e.to_string())?;
    for ((pa, pb), qt) in a.params().iter().zip(b.params()).zip(&q.tensors) {
        let mut syms = qt.symbols.iter();
        for (j, (x, y)) in pa.value.data().iter().zip(pb.value.data()).enumerate() {
            let want = if qt.mask.as_ref().is_some_and(|m| m[j]) {
                0.0
            } else {
                (qt.scale as f64 * *syms.next().unwrap() as f64) as f32
            };
            if x.to_bits() != y.to_bits() || x.to_bits() != want.to_bits() {
                return Err(format!("seed {seed}: {}[{j}] = {y}, want {want}", pa.name));
            }
        }
    }
    Ok(())
}

/// Decoding the stream of a random model must equal rendering its
/// dequantized weights locally, bit for bit.
pub fn decode_matches(seed: u64) -> Result<(), String> {
    let (store, q) = random_model(seed);
    let bytes = encode_bitstream(&store, q.bits);
    let decoded = decode_video::<f32>(&bytes).map_err(|e| format!("seed {seed}: {e}"))?;
    let local = dequantize_store::<f32>(&q).map_err(|e| e.to_string())?;
    let local = render_video(&local).map_err(|e| e.to_string())?;
    if decoded != local {
        return Err(format!("seed {seed}: decoded video differs"));
    }
    Ok(())
}

/// Rewrites the trailing checksum so corruption reaches the later checks.
pub fn reseal(bytes: &mut [u8]) {
    let n = bytes.len();
    if n < 4 {
        return;
    }
    let crc = crc32fast::hash(&bytes[..n - 4]);
    bytes[n - 4..].copy_from_slice(&crc.to_le_bytes());
}

/// Parses and decodes `bytes`. A panic propagates; `Err` reports parse and
/// decode disagreeing about validity.
pub fn exercise(bytes: &[u8]) -> Result<(), String> {
    let parsed = parse(bytes);
    let decoded = decode_video::<f32>(bytes);
    match (&parsed, &decoded) {
        (Err(_), Ok(_)) => Err("decode accepted a stream parse rejected".into()),
        _ => Ok(()),
    }
}

/// Truncations, bit flips (raw and resealed) and junk around a valid stream.
pub fn corrupt_all(good: &[u8], r: &mut Lcg, flips: usize) -> Result<(), String> {
    for cut in 0..good.len() {
        if parse(&good[..cut]).is_ok() {
            return Err(format!("prefix of {cut} bytes parsed"));
        }
    }
    for _ in 0..flips {
        let mut bad = good.to_vec();
        for _ in 0..1 + r.below(4) {
            let i = r.below(bad.len());
            bad[i] ^= 1 << r.below(8);
        }
        exercise(&bad)?;
        reseal(&mut bad);
        exercise(&bad)?;
    }
    Ok(())
}

/// Random byte strings, half of them starting with a valid magic and version.
pub fn junk(r: &mut Lcg, trials: usize) -> Result<(), String> {
    for _ in 0..trials {
        let n = r.below(200);
        let mut bytes: Vec<u8> = (0..n).map(|_| r.next_u64() as u8).collect();
        if n >= 5 && r.below(2) == 0 {
            bytes[..5].copy_from_slice(b"SRNV\x01");
        }
        exercise(&bytes)?;
    }
    Ok(())
}
