//! Lossless float snapshots of a parameter store.
//!
//! ```text
//! "SRNC" | width:u8 (4 or 8) | config block | count:u32
//! per tensor: name_len:u16 name | rank:u8 extents:u32* | mask_flag:u8 [mask bytes]
//!             values (width bytes each, little-endian)
//! ```

use crate::model::{tensor_specs, ModelConfig, ModelError, Param, ParameterStore};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SRNC";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CheckpointError {
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("checkpoint truncated")]
    Truncated,
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub fn save_checkpoint<S: Scalar>(store: &ParameterStore<S>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend(CHECKPOINT_MAGIC);
    out.push(S::WIDTH);
    store.config().write_binary(&mut out);
    out.extend((store.params().len() as u32).to_le_bytes());
    for p in store.params() {
        out.extend((p.name.len() as u16).to_le_bytes());
        out.extend(p.name.as_bytes());
        out.push(p.value.rank() as u8);
        for &d in p.value.shape() {
            out.extend((d as u32).to_le_bytes());
        }
        match &p.mask {
            None => out.push(0),
            Some(m) => {
                out.push(1);
                out.extend(m.iter().map(|&b| b as u8));
            }
        }
        for v in p.value.data() {
            match S::WIDTH {
                4 => out.extend((v.f64() as f32).to_le_bytes()),
                _ => out.extend(v.f64().to_le_bytes()),
            }
        }
    }
    out
}

struct Reader<'a> {
    b: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).ok_or(CheckpointError::Truncated)?;
        let s = self
            .b
            .get(self.pos..end)
            .ok_or(CheckpointError::Truncated)?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Loads a checkpoint written at either precision, converting to `S`.
pub fn load_checkpoint<S: Scalar>(bytes: &[u8]) -> Result<ParameterStore<S>, CheckpointError> {
    let mut r = Reader { b: bytes, pos: 0 };
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let width = r.take(1)?[0];
    if width != 4 && width != 8 {
        return Err(CheckpointError::Malformed(format!("value width {width}")));
    }
    let block: &[u8; ModelConfig::BINARY_LEN] =
        r.take(ModelConfig::BINARY_LEN)?.try_into().unwrap();
    let config = ModelConfig::read_binary(block)
        .ok_or_else(|| CheckpointError::Malformed("unknown share mode".into()))?;
    config.validate().map_err(ModelError::from)?;
    let specs = tensor_specs(&config);
    let count = r.u32()? as usize;
    if count != specs.len() {
        return Err(CheckpointError::Malformed(format!(
            "expected {} tensors, found {count}",
            specs.len()
        )));
    }
    let mut params = Vec::with_capacity(count);
    for (_, kind, shape) in specs {
        let len = u16::from_le_bytes(r.take(2)?.try_into().unwrap()) as usize;
        let name = String::from_utf8(r.take(len)?.to_vec())
            .map_err(|_| CheckpointError::Malformed("tensor name is not UTF-8".into()))?;
        let rank = r.take(1)?[0] as usize;
        let stored: Vec<usize> = (0..rank)
            .map(|_| r.u32().map(|d| d as usize))
            .collect::<Result<_, _>>()?;
        if stored != shape {
            return Err(CheckpointError::Malformed(format!(
                "`{name}` has shape {stored:?}, expected {shape:?}"
            )));
        }
        let n: usize = shape.iter().product();
        let mask = match r.take(1)?[0] {
            0 => None,
            1 => Some(r.take(n)?.iter().map(|&b| b != 0).collect()),
            f => return Err(CheckpointError::Malformed(format!("mask flag {f}"))),
        };
        let raw = r.take(n * width as usize)?;
        let data = raw
            .chunks_exact(width as usize)
            .map(|c| match width {
                4 => S::lit(f32::from_le_bytes(c.try_into().unwrap()) as f64),
                _ => S::lit(f64::from_le_bytes(c.try_into().unwrap())),
            })
            .collect();
        params.push(Param {
            name,
            kind,
            value: Tensor::new(shape, data).expect("shape checked"),
            mask,
        });
    }
    if r.pos != bytes.len() {
        return Err(CheckpointError::Malformed("trailing bytes".into()));
    }
    Ok(ParameterStore::from_params(&config, params)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ShareMode;

    #[test]
    fn roundtrip_both_widths() {
        let cfg = ModelConfig::dyadic(2, 1, 3, (2, 2, 2, 2), 3, ShareMode::None);
        let mut s = ParameterStore::<f64>::build(&cfg, 1).unwrap();
        let p = s.find_mut("stem.weight").unwrap();
        p.mask = Some((0..p.value.len()).map(|i| i % 3 == 0).collect());
        p.apply_mask();
        let bytes = save_checkpoint(&s);
        assert_eq!(load_checkpoint::<f64>(&bytes).unwrap(), s);
        let s32 = s.cast::<f32>();
        let b32 = save_checkpoint(&s32);
        assert_eq!(b32[4], 4);
        assert_eq!(load_checkpoint::<f32>(&b32).unwrap(), s32);
    }

    #[test]
    fn errors() {
        let cfg = ModelConfig::dyadic(1, 1, 2, (1, 2, 2, 2), 1, ShareMode::Full);
        let bytes = save_checkpoint(&ParameterStore::<f32>::build(&cfg, 0).unwrap());
        assert_eq!(
            load_checkpoint::<f32>(b"nope"),
            Err(CheckpointError::BadMagic)
        );
        assert_eq!(
            load_checkpoint::<f32>(&bytes[..bytes.len() - 2]),
            Err(CheckpointError::Truncated)
        );
    }
}
