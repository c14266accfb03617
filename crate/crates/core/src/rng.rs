//! SplitMix64 streams and deterministic seed derivation.
//!
//! Every random quantity in a run (task payload chains, hidden-target
//! instances, injected faults) comes from a SplitMix64 stream, so runs are
//! reproducible bit-for-bit across implementations.

/// Additive constant of SplitMix64, also used as the iteration multiplier
/// in [`derive_task_seed`].
pub const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// Odd multiplier applied to the task index in [`derive_task_seed`].
pub const TASK_MULTIPLIER: u64 = 0xBF58_476D_1CE4_E5B9;

/// Iteration tag reserved for per-combination seeds of a parameter sweep.
pub const SWEEP_TAG: u32 = 0xFFFF;

/// Iteration tag reserved for the starting configuration of a run.
pub const INITIAL_CONFIG_TAG: u32 = 0xFFFE;

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One SplitMix64 step applied to `x`: the first output of a generator
/// whose state is `x`.
#[inline]
pub fn splitmix64(x: u64) -> u64 {
    mix(x.wrapping_add(GOLDEN_GAMMA))
}

/// Seed of task `task_index` in burst `iteration` of a run seeded with
/// `master_seed`.
pub fn derive_task_seed(master_seed: u64, iteration: u32, task_index: u32) -> u64 {
    splitmix64(
        master_seed
            ^ u64::from(iteration).wrapping_mul(GOLDEN_GAMMA)
            ^ u64::from(task_index).wrapping_mul(TASK_MULTIPLIER),
    )
}

/// Sequential SplitMix64 generator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix(self.state)
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, n)` by multiply-high; `n` must be non-zero.
    pub fn next_index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((u128::from(self.next_u64()) * n as u128) >> 64) as usize
    }

    /// Pair of independent standard normals (Box-Muller, two uniform draws).
    pub fn next_gaussian_pair(&mut self) -> (f64, f64) {
        // 1 - u lies in (0, 1], keeping ln finite.
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = std::f64::consts::TAU * u2;
        (radius * angle.cos(), radius * angle.sin())
    }
}
