use super::quant::{alphabet_size, qmax};

/// Largest total a coding table may carry.
pub const CODING_TOTAL_LIMIT: u64 = 1 << 16;

/// Add-one smoothed symbol counts over an alphabet indexed from 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FreqTable {
    counts: Vec<u32>,
    total: u64,
}

impl FreqTable {
    /// `None` if the alphabet is empty or any count is zero.
    pub fn from_counts(counts: Vec<u32>) -> Option<Self> {
        if counts.is_empty() || counts.contains(&0) {
            return None;
        }
        let total = counts.iter().map(|&c| c as u64).sum();
        Some(Self { counts, total })
    }

    pub fn uniform(n: usize) -> Self {
        Self::from_counts(vec![1; n]).expect("non-empty alphabet")
    }

    /// Histogram of `bits`-bit symbols plus one per alphabet entry.
    pub fn from_symbols(bits: u32, symbols: &[i32]) -> Self {
        let q = qmax(bits);
        let mut counts = vec![1u32; alphabet_size(bits)];
        for &s in symbols {
            counts[(s + q) as usize] += 1;
        }
        Self::from_counts(counts).unwrap()
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn probability(&self, index: usize) -> f64 {
        self.counts[index] as f64 / self.total as f64
    }

    /// Ideal code length of one symbol in bits; `None` outside the alphabet.
    pub fn cost_bits(&self, index: usize) -> Option<f64> {
        let c = *self.counts.get(index)?;
        Some(-(c as f64 / self.total as f64).log2())
    }

    /// Counts as used by the range coder: unchanged when the total fits in
    /// 16 bits, otherwise rescaled as `1 + floor(c * (2^16 - n) / total)`.
    pub fn coding_counts(&self) -> Vec<u32> {
        if self.total <= CODING_TOTAL_LIMIT {
            return self.counts.clone();
        }
        let spare = CODING_TOTAL_LIMIT - self.counts.len() as u64;
        self.counts
            .iter()
            .map(|&c| 1 + (c as u64 * spare / self.total) as u32)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smoothing() {
        let t = FreqTable::from_symbols(2, &[0, 0, 1]);
        assert_eq!(t.counts(), [1, 3, 2]);
        assert_eq!(t.total(), 6);
        assert!((t.cost_bits(1).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(t.cost_bits(3), None);
    }

    #[test]
    fn rejects_zero_counts() {
        assert!(FreqTable::from_counts(vec![1, 0]).is_none());
        assert!(FreqTable::from_counts(vec![]).is_none());
    }

    #[test]
    fn coding_counts_fit() {
        let t = FreqTable::from_counts(vec![1, 70_000, 3, 900_000]).unwrap();
        let c = t.coding_counts();
        assert!(c.iter().all(|&v| v >= 1));
        assert!(c.iter().map(|&v| v as u64).sum::<u64>() <= CODING_TOTAL_LIMIT);
        let small = FreqTable::from_counts(vec![5, 7]).unwrap();
        assert_eq!(small.coding_counts(), [5, 7]);
    }
}
