//! Oracles and random instances shared by the integration and acceptance
//! tests. Nothing here calls the gradient, coding or interpolation code it
//! is used to check.

pub mod bd;
pub mod fuzz;
pub mod gradcheck;
pub mod models;

/// Small deterministic generator, independent of the crate's own RNG use.
pub struct Lcg(pub u64);

impl Lcg {
    pub fn next_u64(&mut self) -> u64 {
        self.0 = self
            .0
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        self.0 >> 11
    }

    /// Uniform in `[-1, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    }

    pub fn below(&mut self, n: usize) -> usize {
        (self.next_u64() % n as u64) as usize
    }

    pub fn tensor(&mut self, shape: &[usize], scale: f64) -> srnerv_core::Tensor64 {
        srnerv_core::Tensor64::from_fn(shape, |_| self.uniform() * scale)
    }
}
