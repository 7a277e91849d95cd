//! The compressed-model container.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! "SRNV" | version:u8 | config block | bits:u16 | count:u16
//! per tensor: name_len:u8 name | rank:u8 extents:u32* | scale:f32
//!             mask_flag:u8 [runs:var run:var*] | counts:u32 * (2^bits - 1)
//! payload_len:u64 payload | crc32:u32
//! ```
//!
//! Mask runs alternate unmasked/masked starting with unmasked; `var` is an
//! unsigned LEB128 integer of at most 32 bits. The payload
//! is one range-coder stream; each tensor's symbols use that tensor's table.

use super::freq::FreqTable;
use super::quant::{alphabet_size, dequantize, qmax, quantize_tensor, QuantizedTensor};
use super::range_coder::{CodingTable, Decoder, Encoder};
use crate::media::VideoTensor;
use crate::model::{
    render_video, tensor_specs, ModelConfig, ModelError, Param, ParameterStore, Partition,
};
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 4] = b"SRNV";
pub const VERSION: u8 = 1;
/// Largest scalar count a stream may declare.
const MAX_SCALARS: u64 = 1 << 28;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BitstreamError {
    #[error("not a compressed model (bad magic)")]
    BadMagic,
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u8),
    #[error("checksum mismatch (stored {stored:08x}, computed {computed:08x})")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error("truncated stream")]
    Truncated,
    #[error("malformed stream: {0}")]
    Malformed(String),
}

fn malformed<T>(msg: impl Into<String>) -> Result<T, BitstreamError> {
    Err(BitstreamError::Malformed(msg.into()))
}

/// Every tensor of a model, quantized, with the config needed to rebuild it.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedModel {
    pub config: ModelConfig,
    pub bits: u32,
    pub tensors: Vec<QuantizedTensor>,
}

/// Ideal code lengths in bits, split by partition.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RateReport {
    pub sm_bits: f64,
    pub cm_bits: f64,
    pub other_bits: f64,
    pub total_bits: f64,
}

pub fn quantize_store<S: Scalar>(store: &ParameterStore<S>, bits: u32) -> QuantizedModel {
    QuantizedModel {
        config: store.config().clone(),
        bits,
        tensors: store
            .params()
            .iter()
            .map(|p| quantize_tensor(&p.name, &p.value, p.mask.as_deref(), bits))
            .collect(),
    }
}

/// Rebuilds a store from dequantized weights.
pub fn dequantize_store<S: Scalar>(q: &QuantizedModel) -> Result<ParameterStore<S>, ModelError> {
    let specs = tensor_specs(&q.config);
    let params = q
        .tensors
        .iter()
        .zip(specs)
        .map(|(t, (_, kind, _))| Param {
            name: t.name.clone(),
            kind,
            value: dequantize(t),
            mask: t.mask.clone(),
        })
        .collect();
    ParameterStore::from_params(&q.config, params)
}

/// Sum of `-log2 p(symbol)` over every coded symbol.
pub fn estimate_rate(q: &QuantizedModel) -> RateReport {
    let mut r = RateReport::default();
    for t in &q.tensors {
        let off = qmax(t.bits);
        let bits: f64 = t
            .symbols
            .iter()
            .map(|&s| {
                t.table
                    .cost_bits((s + off) as usize)
                    .expect("symbol in table")
            })
            .sum();
        match Partition::of_name(&t.name) {
            Partition::SpatialMixing => r.sm_bits += bits,
            Partition::ChannelMixing => r.cm_bits += bits,
            Partition::Other => r.other_bits += bits,
        }
    }
    r.total_bits = r.sm_bits + r.cm_bits + r.other_bits;
    r
}

fn rle(mask: &[bool]) -> Vec<u32> {
    let mut runs = Vec::new();
    let mut current = false;
    let mut n = 0u32;
    for &m in mask {
        if m == current {
            n += 1;
        } else {
            runs.push(n);
            current = m;
            n = 1;
        }
    }
    runs.push(n);
    runs
}

fn put_varint(out: &mut Vec<u8>, mut v: u32) {
    while v >= 0x80 {
        out.push((v as u8) | 0x80);
        v >>= 7;
    }
    out.push(v as u8);
}

/// The range-coded symbol stream alone, as embedded in [`serialize`].
pub fn encode_payload(q: &QuantizedModel) -> Vec<u8> {
    let mut enc = Encoder::new();
    for t in &q.tensors {
        let table = CodingTable::new(&t.table);
        let off = qmax(t.bits);
        for &s in &t.symbols {
            enc.encode((s + off) as usize, &table);
        }
    }
    enc.finish()
}

/// Canonical byte form of a quantized model.
pub fn serialize(q: &QuantizedModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend(MAGIC);
    out.push(VERSION);
    q.config.write_binary(&mut out);
    out.extend((q.bits as u16).to_le_bytes());
    out.extend((q.tensors.len() as u16).to_le_bytes());
    for t in &q.tensors {
        assert!(t.name.len() <= u8::MAX as usize, "tensor name too long");
        out.push(t.name.len() as u8);
        out.extend(t.name.as_bytes());
        out.push(t.shape.len() as u8);
        for &d in &t.shape {
            out.extend((d as u32).to_le_bytes());
        }
        out.extend(t.scale.to_le_bytes());
        match &t.mask {
            None => out.push(0),
            Some(m) => {
                out.push(1);
                let runs = rle(m);
                put_varint(&mut out, runs.len() as u32);
                for r in runs {
                    put_varint(&mut out, r);
                }
            }
        }
        for &c in t.table.counts() {
            out.extend(c.to_le_bytes());
        }
    }
    let body = encode_payload(q);
    out.extend((body.len() as u64).to_le_bytes());
    out.extend(&body);
    let crc = crc32fast::hash(&out);
    out.extend(crc.to_le_bytes());
    out
}

pub fn encode_bitstream<S: Scalar>(store: &ParameterStore<S>, bits: u32) -> Vec<u8> {
    serialize(&quantize_store(store, bits))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], BitstreamError> {
        let end = self.pos.checked_add(n).ok_or(BitstreamError::Truncated)?;
        let s = self
            .bytes
            .get(self.pos..end)
            .ok_or(BitstreamError::Truncated)?;
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, BitstreamError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, BitstreamError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, BitstreamError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn varint(&mut self) -> Result<u32, BitstreamError> {
        let mut v = 0u64;
        for shift in (0..35).step_by(7) {
            let b = self.u8()?;
            v |= ((b & 0x7F) as u64) << shift;
            if b & 0x80 == 0 {
                return u32::try_from(v)
                    .map_err(|_| BitstreamError::Malformed("varint exceeds 32 bits".into()));
            }
        }
        Err(BitstreamError::Malformed(
            "varint longer than 5 bytes".into(),
        ))
    }

    fn u64(&mut self) -> Result<u64, BitstreamError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

struct RawTensor<'a> {
    name: &'a [u8],
    shape: Vec<u32>,
    scale: f32,
    runs: Option<Vec<u32>>,
    counts: Vec<u32>,
}

/// Parses and fully decodes a stream.
///
/// Checks run in order: magic, version, structure (truncation), checksum,
/// then semantic validation and payload decoding.
pub fn parse(bytes: &[u8]) -> Result<QuantizedModel, BitstreamError> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(4)? != MAGIC {
        return Err(BitstreamError::BadMagic);
    }
    let version = c.u8()?;
    if version != VERSION {
        return Err(BitstreamError::UnsupportedVersion(version));
    }
    let config_bytes: &[u8; ModelConfig::BINARY_LEN] =
        c.take(ModelConfig::BINARY_LEN)?.try_into().unwrap();
    let bits = c.u16()? as u32;
    if !(2..=8).contains(&bits) {
        return malformed(format!("bit depth {bits} outside [2, 8]"));
    }
    let alphabet = alphabet_size(bits);
    let count = c.u16()? as usize;
    let mut raw = Vec::new();
    for _ in 0..count {
        let len = c.u8()? as usize;
        let name = c.take(len)?;
        let rank = c.u8()? as usize;
        let shape = (0..rank).map(|_| c.u32()).collect::<Result<Vec<_>, _>>()?;
        let scale = f32::from_le_bytes(c.take(4)?.try_into().unwrap());
        let runs = match c.u8()? {
            0 => None,
            1 => {
                let n = c.varint()? as usize;
                let mut runs = Vec::new();
                for _ in 0..n {
                    runs.push(c.varint()?);
                }
                Some(runs)
            }
            f => return malformed(format!("mask flag {f}")),
        };
        let counts = (0..alphabet)
            .map(|_| c.u32())
            .collect::<Result<Vec<_>, _>>()?;
        raw.push(RawTensor {
            name,
            shape,
            scale,
            runs,
            counts,
        });
    }
    let payload_len = c.u64()?;
    let payload_len = usize::try_from(payload_len).map_err(|_| BitstreamError::Truncated)?;
    let payload = c.take(payload_len)?;
    let checked = c.pos;
    let stored = c.u32()?;
    if c.pos != bytes.len() {
        return malformed(format!("{} trailing bytes", bytes.len() - c.pos));
    }
    let computed = crc32fast::hash(&bytes[..checked]);
    if stored != computed {
        return Err(BitstreamError::ChecksumMismatch { stored, computed });
    }

    let config = ModelConfig::read_binary(config_bytes)
        .ok_or_else(|| BitstreamError::Malformed("unknown share mode".into()))?;
    config
        .validate()
        .map_err(|e| BitstreamError::Malformed(e.to_string()))?;
    // decoded video and the widest per-frame activation must stay allocatable
    let video = [config.frames, config.height, config.width, 3]
        .iter()
        .try_fold(1u64, |a, &d| a.checked_mul(d as u64));
    let activation = [config.height, config.width, config.hidden().max(3)]
        .iter()
        .try_fold(1u64, |a, &d| a.checked_mul(d as u64));
    if !matches!((video, activation), (Some(v), Some(a)) if v <= MAX_SCALARS && a <= MAX_SCALARS) {
        return malformed("output too large");
    }
    let specs = tensor_specs(&config);
    if specs.len() != raw.len() {
        return malformed(format!(
            "expected {} tensors, found {}",
            specs.len(),
            raw.len()
        ));
    }
    let mut total_scalars = 0u64;
    for ((name, _, shape), r) in specs.iter().zip(&raw) {
        let shape_ok = shape.len() == r.shape.len()
            && shape
                .iter()
                .zip(&r.shape)
                .all(|(&a, &b)| a as u64 == b as u64);
        if r.name != name.as_bytes() || !shape_ok {
            return malformed(format!(
                "directory entry `{}` {:?} does not match `{name}` {shape:?}",
                String::from_utf8_lossy(r.name),
                r.shape
            ));
        }
        total_scalars += shape.iter().map(|&d| d as u64).product::<u64>();
        if total_scalars > MAX_SCALARS {
            return malformed("model too large");
        }
    }

    let mut dec = Decoder::new(payload).map_err(|_| BitstreamError::Truncated)?;
    let q = qmax(bits);
    let mut tensors = Vec::with_capacity(raw.len());
    for ((name, _, shape), r) in specs.into_iter().zip(raw) {
        let n: usize = shape.iter().product();
        if !r.scale.is_finite() || r.scale < 0.0 {
            return malformed(format!("scale {} on `{name}`", r.scale));
        }
        let mask = match r.runs {
            None => None,
            Some(runs) => {
                let sum: u64 = runs.iter().map(|&v| v as u64).sum();
                if sum != n as u64 {
                    return malformed(format!("mask runs cover {sum} of {n} entries on `{name}`"));
                }
                let mut m = Vec::with_capacity(n);
                for (i, &len) in runs.iter().enumerate() {
                    m.extend(std::iter::repeat_n(i % 2 == 1, len as usize));
                }
                Some(m)
            }
        };
        let table = FreqTable::from_counts(r.counts)
            .ok_or_else(|| BitstreamError::Malformed(format!("zero count in table of `{name}`")))?;
        let coding = CodingTable::new(&table);
        let kept = n - mask
            .as_ref()
            .map_or(0, |m| m.iter().filter(|&&b| b).count());
        let mut symbols = Vec::with_capacity(kept);
        for _ in 0..kept {
            let s = dec.decode(&coding).map_err(|_| BitstreamError::Truncated)?;
            symbols.push(s as i32 - q);
        }
        tensors.push(QuantizedTensor {
            name,
            shape,
            scale: r.scale,
            bits,
            symbols,
            mask,
            table,
        });
    }
    Ok(QuantizedModel {
        config,
        bits,
        tensors,
    })
}

#[derive(Debug, thiserror::Error)]
pub enum DecodeError {
    #[error(transparent)]
    Bitstream(#[from] BitstreamError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Parses a stream and renders every frame from the dequantized weights.
pub fn decode_video<S: Scalar>(bytes: &[u8]) -> Result<VideoTensor, DecodeError> {
    let q = parse(bytes)?;
    let store = dequantize_store::<S>(&q)?;
    Ok(render_video(&store)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ShareMode;

    fn store(mode: ShareMode) -> ParameterStore<f32> {
        let cfg = ModelConfig::dyadic(2, 2, 6, (2, 2, 2, 4), 3, mode);
        let mut s = ParameterStore::build(&cfg, 11).unwrap();
        // give the zero-initialized tensors some content
        for (k, p) in s.params_mut().iter_mut().enumerate() {
            for (i, v) in p.value.data_mut().iter_mut().enumerate() {
                *v += ((i * 7 + k * 13) as f32 * 0.37).sin() * 0.05;
            }
        }
        let p = s.find_mut("stem.weight").unwrap();
        let mut m = vec![false; p.value.len()];
        m[0] = true;
        m[1] = true;
        m[5] = true;
        p.mask = Some(m);
        p.apply_mask();
        s
    }

    #[test]
    fn rle_runs_start_unmasked() {
        assert_eq!(rle(&[true, true, false]), [0, 2, 1]);
        assert_eq!(rle(&[false, false]), [2]);
        assert_eq!(rle(&[]), [0]);
    }

    #[test]
    fn varints() {
        for v in [0u32, 1, 127, 128, 300, 16_383, 16_384, u32::MAX] {
            let mut b = Vec::new();
            put_varint(&mut b, v);
            let mut c = Cursor { bytes: &b, pos: 0 };
            assert_eq!(c.varint().unwrap(), v);
            assert_eq!(c.pos, b.len());
        }
        let mut c = Cursor {
            bytes: &[0xFF, 0xFF, 0xFF, 0xFF, 0x7F],
            pos: 0,
        };
        assert!(matches!(c.varint(), Err(BitstreamError::Malformed(_))));
        let mut c = Cursor {
            bytes: &[0x80],
            pos: 0,
        };
        assert_eq!(c.varint(), Err(BitstreamError::Truncated));
    }

    #[test]
    fn header_prefix() {
        let bytes = encode_bitstream(&store(ShareMode::Hybrid), 6);
        assert_eq!(&bytes[..4], b"SRNV");
        assert_eq!(bytes[4], 1);
        assert_eq!(u16::from_le_bytes([bytes[47], bytes[48]]), 6);
    }

    #[test]
    fn roundtrip_is_canonical() {
        for mode in ShareMode::ALL {
            let q = quantize_store(&store(mode), 6);
            let bytes = serialize(&q);
            let parsed = parse(&bytes).unwrap();
            assert_eq!(parsed, q);
            assert_eq!(serialize(&parsed), bytes);
        }
    }

    #[test]
    fn distinct_errors() {
        let bytes = encode_bitstream(&store(ShareMode::Hybrid), 6);
        let mut b = bytes.clone();
        b[0] = b'X';
        assert_eq!(parse(&b), Err(BitstreamError::BadMagic));
        let mut b = bytes.clone();
        b[4] = 2;
        assert_eq!(parse(&b), Err(BitstreamError::UnsupportedVersion(2)));
        assert_eq!(
            parse(&bytes[..bytes.len() - 1]),
            Err(BitstreamError::Truncated)
        );
        assert_eq!(parse(&bytes[..30]), Err(BitstreamError::Truncated));
        let mut b = bytes.clone();
        let n = b.len();
        b[n - 10] ^= 0x40;
        assert!(matches!(
            parse(&b),
            Err(BitstreamError::ChecksumMismatch { .. })
        ));
    }

    #[test]
    fn decoded_render_matches_encoder_side() {
        let s = store(ShareMode::Full);
        let q = quantize_store(&s, 6);
        let encoder_side = render_video(&dequantize_store::<f32>(&q).unwrap()).unwrap();
        let decoded = decode_video::<f32>(&serialize(&q)).unwrap();
        assert_eq!(encoder_side, decoded);
    }

    #[test]
    fn rate_partitions_sum() {
        let q = quantize_store(&store(ShareMode::None), 6);
        let r = estimate_rate(&q);
        assert!((r.sm_bits + r.cm_bits + r.other_bits - r.total_bits).abs() < 1e-6);
        assert!(r.sm_bits > 0.0 && r.cm_bits > 0.0 && r.other_bits > 0.0);
    }
}
