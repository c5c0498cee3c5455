//! The operand-planning PRNG. Emitted runtimes carry the same generator, so
//! the constants here must not change.

pub const LCG_MULTIPLIER: u64 = 6364136228273018565;
pub const LCG_INCREMENT: u64 = 1442695040888963407;

/// 64-bit LCG; each draw yields the top 31 bits of the new state.
#[derive(Debug, Clone)]
pub struct Lcg {
    state: u64,
}

impl Lcg {
    pub fn new(seed: u64) -> Self {
        Lcg { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_mul(LCG_MULTIPLIER).wrapping_add(LCG_INCREMENT);
        self.state >> 33
    }

    /// `next_u64() % bound`; `bound` must be nonzero.
    pub fn below(&mut self, bound: u64) -> u64 {
        self.next_u64() % bound
    }
}
