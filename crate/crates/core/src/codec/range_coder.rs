//! Carry-propagating range coder with a 32-bit range and byte output.

use super::freq::FreqTable;

const TOP: u32 = 1 << 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("range-coded payload ended early")]
pub struct Truncated;

/// Cumulative view of a table, ready for coding.
#[derive(Debug, Clone)]
pub struct CodingTable {
    cum: Vec<u32>,
}

impl CodingTable {
    pub fn new(table: &FreqTable) -> Self {
        let mut cum = Vec::with_capacity(table.len() + 1);
        cum.push(0);
        let mut acc = 0u32;
        for c in table.coding_counts() {
            acc += c;
            cum.push(acc);
        }
        Self { cum }
    }

    fn total(&self) -> u32 {
        *self.cum.last().unwrap()
    }

    fn len(&self) -> usize {
        self.cum.len() - 1
    }

    /// Symbol whose cumulative interval contains `v`.
    fn find(&self, v: u32) -> usize {
        self.cum.partition_point(|&c| c <= v) - 1
    }
}

pub struct Encoder {
    low: u64,
    range: u32,
    cache: u8,
    cache_size: u64,
    out: Vec<u8>,
}

impl Default for Encoder {
    fn default() -> Self {
        Self::new()
    }
}

impl Encoder {
    pub fn new() -> Self {
        Self {
            low: 0,
            range: u32::MAX,
            cache: 0,
            cache_size: 1,
            out: Vec::new(),
        }
    }

    /// Panics if `symbol` is outside the table.
    pub fn encode(&mut self, symbol: usize, table: &CodingTable) {
        assert!(symbol < table.len(), "symbol outside the alphabet");
        let (lo, hi) = (table.cum[symbol], table.cum[symbol + 1]);
        let r = self.range / table.total();
        self.low += r as u64 * lo as u64;
        self.range = r * (hi - lo);
        while self.range < TOP {
            self.range <<= 8;
            self.shift_low();
        }
    }

    fn shift_low(&mut self) {
        if (self.low as u32) < 0xFF00_0000 || (self.low >> 32) != 0 {
            let carry = (self.low >> 32) as u8;
            let mut byte = self.cache;
            loop {
                self.out.push(byte.wrapping_add(carry));
                byte = 0xFF;
                self.cache_size -= 1;
                if self.cache_size == 0 {
                    break;
                }
            }
            self.cache = (self.low >> 24) as u8;
        }
        self.cache_size += 1;
        self.low = (self.low & 0x00FF_FFFF) << 8;
    }

    pub fn finish(mut self) -> Vec<u8> {
        for _ in 0..5 {
            self.shift_low();
        }
        self.out
    }
}

pub struct Decoder<'a> {
    bytes: &'a [u8],
    pos: usize,
    range: u32,
    code: u32,
}

impl<'a> Decoder<'a> {
    pub fn new(bytes: &'a [u8]) -> Result<Self, Truncated> {
        let mut d = Self {
            bytes,
            pos: 0,
            range: u32::MAX,
            code: 0,
        };
        for _ in 0..5 {
            d.code = (d.code << 8) | d.next()? as u32;
        }
        Ok(d)
    }

    fn next(&mut self) -> Result<u8, Truncated> {
        let b = *self.bytes.get(self.pos).ok_or(Truncated)?;
        self.pos += 1;
        Ok(b)
    }

    pub fn decode(&mut self, table: &CodingTable) -> Result<usize, Truncated> {
        let r = self.range / table.total();
        // corrupt input can land past the last interval
        let v = (self.code / r).min(table.total() - 1);
        let s = table.find(v);
        let (lo, hi) = (table.cum[s], table.cum[s + 1]);
        self.code = self.code.wrapping_sub(r * lo);
        self.range = r * (hi - lo);
        while self.range < TOP {
            self.range <<= 8;
            self.code = (self.code << 8) | self.next()? as u32;
        }
        Ok(s)
    }

    /// Bytes consumed so far.
    pub fn position(&self) -> usize {
        self.pos
    }
}

/// Codes alphabet indices under one table.
pub fn arith_encode(symbols: &[usize], table: &FreqTable) -> Vec<u8> {
    let t = CodingTable::new(table);
    let mut enc = Encoder::new();
    for &s in symbols {
        enc.encode(s, &t);
    }
    enc.finish()
}

pub fn arith_decode(bytes: &[u8], table: &FreqTable, n: usize) -> Result<Vec<usize>, Truncated> {
    let t = CodingTable::new(table);
    let mut dec = Decoder::new(bytes)?;
    (0..n).map(|_| dec.decode(&t)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn roundtrip_small() {
        let t = FreqTable::from_counts(vec![3, 1, 7, 2]).unwrap();
        let syms = [0, 2, 2, 1, 3, 2, 0, 0, 2];
        let bytes = arith_encode(&syms, &t);
        assert_eq!(arith_decode(&bytes, &t, syms.len()).unwrap(), syms);
    }

    #[test]
    fn empty_sequence() {
        let t = FreqTable::uniform(5);
        let bytes = arith_encode(&[], &t);
        assert_eq!(bytes.len(), 5);
        assert!(arith_decode(&bytes, &t, 0).unwrap().is_empty());
    }

    #[test]
    fn decoding_past_end_is_truncated() {
        let t = FreqTable::uniform(64);
        let bytes = arith_encode(&[1, 2, 3, 4, 5, 6, 7, 8], &t);
        assert_eq!(
            arith_decode(&bytes[..bytes.len() - 1], &t, 8),
            Err(Truncated)
        );
        assert_eq!(arith_decode(&bytes[..3], &t, 1), Err(Truncated));
        assert_eq!(arith_decode(&bytes, &t, 1000).err(), Some(Truncated));
    }

    #[test]
    fn carries_propagate() {
        // a near-certain symbol drives `low` toward long 0xFF runs
        let t = FreqTable::from_counts(vec![65_000, 1, 535]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let syms: Vec<usize> = (0..200_000)
            .map(|_| match rng.random_range(0..1000) {
                0 => 1,
                1..=8 => 2,
                _ => 0,
            })
            .collect();
        let bytes = arith_encode(&syms, &t);
        assert_eq!(arith_decode(&bytes, &t, syms.len()).unwrap(), syms);
    }

    #[test]
    fn uniform_payload_near_entropy() {
        let t = FreqTable::uniform(64);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let syms: Vec<usize> = (0..4096).map(|_| rng.random_range(0..64)).collect();
        let bytes = arith_encode(&syms, &t);
        let entropy_bytes = 4096 * 6 / 8;
        assert!(
            bytes.len() >= entropy_bytes && bytes.len() <= entropy_bytes + 16,
            "{}",
            bytes.len()
        );
    }

    #[test]
    fn skewed_source_within_two_percent() {
        let mut counts = vec![1u32; 63];
        counts[31] = 9 * 62;
        let t = FreqTable::from_counts(counts).unwrap();
        let p = 0.9;
        let q = 0.1 / 62.0;
        let entropy = -(p * f64::log2(p) + 62.0 * q * f64::log2(q));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 100_000;
        let syms: Vec<usize> = (0..n)
            .map(|_| {
                if rng.random_bool(p) {
                    31
                } else {
                    let k = rng.random_range(0..62);
                    if k >= 31 {
                        k + 1
                    } else {
                        k
                    }
                }
            })
            .collect();
        let bits = arith_encode(&syms, &t).len() as f64 * 8.0;
        let ideal = entropy * n as f64;
        assert!((bits - ideal).abs() / ideal < 0.02, "{bits} vs {ideal}");
    }
}
