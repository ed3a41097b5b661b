//! Interrupted Poisson arrivals and the random streams that drive them.
//!
//! Every random quantity in a simulation is drawn from an [`RngStream`]. A
//! stream is a ChaCha8 generator whose 256-bit key is expanded from a 64-bit
//! base seed with SplitMix64 and whose 64-bit ChaCha stream id is the trial
//! index, so `split_stream(seed, i)` is a pure function of `(seed, i)`.
//!
//! Poisson variates are drawn by inversion and consume exactly one uniform
//! each, which keeps the draw count of [`ArrivalModel::sample`] fixed:
//!
//! - one uniform for the per-slot event gate (always),
//! - one more uniform when the gate is open and `lambda > 0`.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};

/// Poisson means below this are sampled by sequential search from zero;
/// larger means use a precomputed cumulative table and binary search.
pub const SEQUENTIAL_SEARCH_LIMIT: f64 = 10.0;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const LANE_MULT: u64 = 0xD1B5_4A32_D192_ED03;

/// One step of SplitMix64. Advances `state` and returns the mixed output.
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(GOLDEN_GAMMA);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn expand_key(seed: u64) -> [u8; 32] {
    let mut state = seed;
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    key
}

/// A deterministic, single-owner random stream.
#[derive(Debug, Clone)]
pub struct RngStream {
    inner: ChaCha8Rng,
    base_seed: u64,
    index: u64,
    lane: u64,
}

/// Derive stream `index` of `base_seed`.
pub fn split_stream(base_seed: u64, index: u64) -> RngStream {
    RngStream::with_lane(base_seed, index, 0)
}

impl RngStream {
    fn with_lane(base_seed: u64, index: u64, lane: u64) -> Self {
        let mut inner = ChaCha8Rng::from_seed(expand_key(base_seed ^ lane.wrapping_mul(LANE_MULT)));
        inner.set_stream(index);
        Self {
            inner,
            base_seed,
            index,
            lane,
        }
    }

    /// An independent sibling of this stream with the same `(seed, index)`
    /// provenance. Lane 0 is the stream itself, freshly rewound.
    pub fn lane(&self, lane: u64) -> Self {
        Self::with_lane(self.base_seed, self.index, lane)
    }

    pub fn provenance(&self) -> (u64, u64) {
        (self.base_seed, self.index)
    }

    pub fn lane_id(&self) -> u64 {
        self.lane
    }

    /// Uniform draw in `[0, 1)` with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Bernoulli-gated Poisson arrivals: with probability `theta` an event fires
/// in a slot and triggers `Poisson(lambda)` devices, otherwise nobody arrives.
#[derive(Debug, Clone)]
pub struct ArrivalModel {
    theta: f64,
    lambda: f64,
    // Cumulative Poisson table, only for lambda >= SEQUENTIAL_SEARCH_LIMIT.
    cdf: Option<Vec<f64>>,
}

impl PartialEq for ArrivalModel {
    fn eq(&self, other: &Self) -> bool {
        self.theta == other.theta && self.lambda == other.lambda
    }
}

impl ArrivalModel {
    pub fn new(theta: f64, lambda: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&theta) {
            return Err(invalid(format!("theta must lie in [0, 1], got {theta}")));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(invalid(format!("lambda must be finite and >= 0, got {lambda}")));
        }
        let cdf = (lambda >= SEQUENTIAL_SEARCH_LIMIT).then(|| poisson_cdf_table(lambda));
        Ok(Self { theta, lambda, cdf })
    }

    /// Plain Poisson arrivals (`theta = 1`).
    pub fn poisson(lambda: f64) -> Result<Self> {
        Self::new(1.0, lambda)
    }

    /// Model with long-run rate `lambda_bar` and event probability `theta`.
    pub fn from_rate(lambda_bar: f64, theta: f64) -> Result<Self> {
        if lambda_bar == 0.0 {
            return Self::new(theta, 0.0);
        }
        if !(theta > 0.0) {
            return Err(invalid("a positive arrival rate needs theta > 0"));
        }
        Self::new(theta, lambda_bar / theta)
    }

    /// No arrivals at all.
    pub fn silent() -> Self {
        Self {
            theta: 0.0,
            lambda: 0.0,
            cdf: None,
        }
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Long-run arrival rate per slot, `theta * lambda`.
    pub fn lambda_bar(&self) -> f64 {
        self.theta * self.lambda
    }

    /// Variance of the per-slot arrival count.
    pub fn variance(&self) -> f64 {
        let lb = self.lambda_bar();
        lb * (1.0 + self.lambda - lb)
    }

    /// Number of devices triggered in one slot.
    pub fn sample(&self, rng: &mut RngStream) -> u64 {
        let gate = rng.uniform();
        if gate >= self.theta || self.lambda == 0.0 {
            return 0;
        }
        let u = rng.uniform();
        match &self.cdf {
            Some(table) => table.partition_point(|&c| c <= u).min(table.len() - 1) as u64,
            None => poisson_sequential(self.lambda, u),
        }
    }
}

/// Free-function form of [`ArrivalModel::sample`].
pub fn sample_arrivals(model: &ArrivalModel, rng: &mut RngStream) -> u64 {
    model.sample(rng)
}

/// Inversion by sequential search from zero.
fn poisson_sequential(lambda: f64, u: f64) -> u64 {
    let mut k = 0u64;
    let mut p = (-lambda).exp();
    let mut cdf = p;
    while u >= cdf {
        k += 1;
        p *= lambda / k as f64;
        let next = cdf + p;
        // cdf saturated below 1.0 by rounding; u is in the last ulp of mass
        if next == cdf {
            break;
        }
        cdf = next;
    }
    k
}

/// Cumulative Poisson probabilities up to `lambda + 12 sqrt(lambda) + 20`,
/// with each pmf term evaluated in log space so small leading terms underflow
/// to zero instead of poisoning the recursion.
fn poisson_cdf_table(lambda: f64) -> Vec<f64> {
    let k_max = (lambda + 12.0 * lambda.sqrt() + 20.0).ceil() as usize;
    let ln_lambda = lambda.ln();
    let mut log_pmf = -lambda;
    let mut acc = 0.0;
    let mut table = Vec::with_capacity(k_max + 1);
    for k in 0..=k_max {
        if k > 0 {
            log_pmf += ln_lambda - (k as f64).ln();
        }
        acc += log_pmf.exp();
        table.push(acc);
    }
    table
}
