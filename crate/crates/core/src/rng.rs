//! Seeded input generation.
//!
//! A fixed 64-bit LCG is used instead of a general-purpose RNG so that other
//! implementations can regenerate the exact same fixtures:
//!
//! ```text
//! state <- state * 6364136223846793005 + 1442695040888963407   (mod 2^64)
//! output = state >> 32
//! ```
//!
//! The state is advanced before each output, starting from `state = seed`.
//! Integer values are drawn as `(output % 17) - 8`, i.e. uniform in `[-8, 8]`.
//! Tensors fill in storage order; [`Lcg::tensor`] is `(h, w, c)` and
//! [`Lcg::kernel`] is `(i, j, c, m)`.

use crate::tensor::{Element, Kernel4, KernelShape, Tensor3};

const MULTIPLIER: u64 = 6364136223846793005;
const INCREMENT: u64 = 1442695040888963407;

#[derive(Clone, Debug)]
pub struct Lcg {
    state: u64,
}

impl Lcg {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u32(&mut self) -> u32 {
        self.state = self.state.wrapping_mul(MULTIPLIER).wrapping_add(INCREMENT);
        (self.state >> 32) as u32
    }

    /// Uniform integer in `[-8, 8]`.
    pub fn small_int(&mut self) -> i64 {
        (self.next_u32() % 17) as i64 - 8
    }

    pub fn tensor<T: Element>(&mut self, h: usize, w: usize, c: usize) -> Tensor3<T> {
        Tensor3::from_fn(h, w, c, |_, _, _| T::from_i64(self.small_int()))
    }

    pub fn kernel<T: Element>(&mut self, shape: KernelShape) -> Kernel4<T> {
        Kernel4::from_fn(shape, |_, _, _, _| T::from_i64(self.small_int()))
    }
}
