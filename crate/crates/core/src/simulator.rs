//! Slotted collision channel with a closed estimation loop.
//!
//! Each slot `t` of a closed-loop run:
//!
//! 1. the estimator (or the oracle, which reads `N_t`) sets `p_t`,
//! 2. the `N_t` backlogged devices contend, the number of transmitters is a
//!    single `Binomial(N_t, p_t)` draw,
//! 3. on a success one backlogged device, chosen uniformly, leaves,
//! 4. `A_t` new devices arrive and join the backlog; they first transmit in
//!    slot `t + 1`,
//! 5. the estimator observes the outcome.
//!
//! so `N_{t+1} = N_t + A_t - 1{Z_t = success}`. Arrivals and channel draws
//! come from two lanes of the trial stream, so every scheme run with the same
//! `(seed, trial)` sees the same arrival sequence.

use rand::Rng;
use rand_distr::{Binomial, Distribution};

use crate::estimators::{EstimatorState, SchemeParams, SlotOutcome};
use crate::traffic::{split_stream, ArrivalModel, RngStream};

const ARRIVAL_LANE: u64 = 0;
const CHANNEL_LANE: u64 = 1;

/// One slot of a trace. `n_hat` and `k` are the estimator state at the start
/// of the slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotRecord {
    pub t: u64,
    pub n: u64,
    pub n_hat: f64,
    pub k: i32,
    pub p: f64,
    pub z: SlotOutcome,
    pub arrivals: u64,
    pub expected_throughput: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DelaySample {
    pub arrival_slot: u64,
    pub success_slot: u64,
}

impl DelaySample {
    pub fn delay(&self) -> u64 {
        self.success_slot - self.arrival_slot
    }
}

/// Arrival slots of the devices currently waiting.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Backlog {
    arrivals: Vec<u64>,
}

impl Backlog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_arrival_slots(slots: Vec<u64>) -> Self {
        Self { arrivals: slots }
    }

    pub fn len(&self) -> u64 {
        self.arrivals.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.arrivals.is_empty()
    }

    pub fn push(&mut self, arrival_slot: u64, count: u64) {
        self.arrivals
            .extend(std::iter::repeat_n(arrival_slot, count as usize));
    }

    /// Remove a uniformly chosen device and return its arrival slot.
    pub fn remove_random(&mut self, rng: &mut RngStream) -> Option<u64> {
        if self.arrivals.is_empty() {
            return None;
        }
        let i = rng.random_range(0..self.arrivals.len());
        Some(self.arrivals.swap_remove(i))
    }

    pub fn arrival_slots(&self) -> &[u64] {
        &self.arrivals
    }
}

/// `n p (1-p)^(n-1)`, the probability of a success.
pub fn expected_throughput(n: u64, p: f64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    n as f64 * p * (1.0 - p).powf((n - 1) as f64)
}

/// One contention round among `n` devices each transmitting with probability `p`.
pub fn contend(n: u64, p: f64, rng: &mut RngStream) -> (SlotOutcome, u64) {
    debug_assert!((0.0..=1.0).contains(&p), "p = {p}");
    let transmitters = if n == 0 || p <= 0.0 {
        0
    } else if p >= 1.0 {
        n
    } else {
        Binomial::new(n, p)
            .expect("p checked to lie in (0, 1)")
            .sample(rng)
    };
    (SlotOutcome::from_transmitters(transmitters), transmitters)
}

/// Closed-loop channel state for one trial.
#[derive(Debug, Clone)]
pub struct ClosedLoop {
    model: ArrivalModel,
    estimator: EstimatorState,
    backlog: Backlog,
    arrivals_rng: RngStream,
    channel_rng: RngStream,
    t: u64,
    delays: Vec<DelaySample>,
    total_arrivals: u64,
}

impl ClosedLoop {
    pub fn new(model: ArrivalModel, scheme: SchemeParams, seed: u64, trial_index: u64) -> Self {
        let stream = split_stream(seed, trial_index);
        Self {
            model,
            estimator: EstimatorState::new(scheme),
            backlog: Backlog::new(),
            arrivals_rng: stream.lane(ARRIVAL_LANE),
            channel_rng: stream.lane(CHANNEL_LANE),
            t: 0,
            delays: Vec::new(),
            total_arrivals: 0,
        }
    }

    /// Start with devices already waiting. They count as arrivals.
    pub fn with_initial_backlog(mut self, backlog: Backlog) -> Self {
        self.total_arrivals += backlog.len();
        self.backlog = backlog;
        self
    }

    pub fn slot(&self) -> u64 {
        self.t
    }

    pub fn backlog(&self) -> &Backlog {
        &self.backlog
    }

    pub fn estimator(&self) -> &EstimatorState {
        &self.estimator
    }

    pub fn delays(&self) -> &[DelaySample] {
        &self.delays
    }

    pub fn total_arrivals(&self) -> u64 {
        self.total_arrivals
    }

    pub fn completed(&self) -> u64 {
        self.delays.len() as u64
    }

    pub fn step(&mut self) -> SlotRecord {
        let t = self.t;
        let n = self.backlog.len();
        let n_hat = self.estimator.n_hat;
        let k = self.estimator.k;
        let p = self
            .estimator
            .tx_probability(Some(n))
            .expect("true backlog is always supplied");
        let (z, transmitters) = contend(n, p, &mut self.channel_rng);
        debug_assert_eq!(SlotOutcome::from_transmitters(transmitters), z);
        if z == SlotOutcome::Success {
            let arrival_slot = self
                .backlog
                .remove_random(&mut self.channel_rng)
                .expect("a success needs a backlogged device");
            self.delays.push(DelaySample {
                arrival_slot,
                success_slot: t,
            });
        }
        let arrivals = self.model.sample(&mut self.arrivals_rng);
        self.backlog.push(t, arrivals);
        self.total_arrivals += arrivals;
        self.estimator.observe(z);
        self.t += 1;
        debug_assert_eq!(self.backlog.len() + self.completed(), self.total_arrivals);
        SlotRecord {
            t,
            n,
            n_hat,
            k,
            p,
            z,
            arrivals,
            expected_throughput: expected_throughput(n, p),
        }
    }

    pub fn into_parts(self) -> (Vec<DelaySample>, Backlog) {
        (self.delays, self.backlog)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopRun {
    pub trace: Vec<SlotRecord>,
    pub delays: Vec<DelaySample>,
    pub residual: Backlog,
    pub total_arrivals: u64,
}

pub fn run_closed_loop(
    model: &ArrivalModel,
    scheme: SchemeParams,
    horizon: u64,
    seed: u64,
    trial_index: u64,
) -> ClosedLoopRun {
    run_closed_loop_from(model, scheme, Backlog::new(), horizon, seed, trial_index)
}

/// As [`run_closed_loop`], starting from a non-empty backlog.
pub fn run_closed_loop_from(
    model: &ArrivalModel,
    scheme: SchemeParams,
    initial: Backlog,
    horizon: u64,
    seed: u64,
    trial_index: u64,
) -> ClosedLoopRun {
    let mut sim = ClosedLoop::new(model.clone(), scheme, seed, trial_index).with_initial_backlog(initial);
    let trace = (0..horizon).map(|_| sim.step()).collect();
    let total_arrivals = sim.total_arrivals();
    let (delays, residual) = sim.into_parts();
    ClosedLoopRun {
        trace,
        delays,
        residual,
        total_arrivals,
    }
}

/// Step response: `n` devices are backlogged from slot 0 on and stay
/// backlogged, successes do not deplete them.
pub fn run_step_response(
    n: u64,
    scheme: SchemeParams,
    horizon: u64,
    seed: u64,
    trial_index: u64,
) -> Vec<SlotRecord> {
    let mut rng = split_stream(seed, trial_index).lane(CHANNEL_LANE);
    let mut est = EstimatorState::new(scheme);
    (0..horizon)
        .map(|t| {
            let n_hat = est.n_hat;
            let k = est.k;
            let p = est.tx_probability(Some(n)).expect("true backlog supplied");
            let (z, _) = contend(n, p, &mut rng);
            est.observe(z);
            SlotRecord {
                t,
                n,
                n_hat,
                k,
                p,
                z,
                arrivals: 0,
                expected_throughput: expected_throughput(n, p),
            }
        })
        .collect()
}

/// Default slot cap for a single event of `n` devices: `ceil(100 e n)`.
pub fn default_single_event_cap(n: u64) -> u64 {
    (100.0 * std::f64::consts::E * n as f64).ceil() as u64
}

#[derive(Debug, Clone, PartialEq)]
pub struct SingleEventOutcome {
    /// Access delays of the served devices, in service order.
    pub delays: Vec<u64>,
    /// Slots simulated.
    pub slots: u64,
    /// The cap was hit before the backlog emptied.
    pub truncated: bool,
}

/// `n` devices arrive together at slot 0, nobody arrives later. Runs until
/// the backlog empties or `max_slots` (default [`default_single_event_cap`])
/// have elapsed.
pub fn run_single_event(
    n: u64,
    scheme: SchemeParams,
    seed: u64,
    trial_index: u64,
    max_slots: Option<u64>,
) -> SingleEventOutcome {
    let cap = max_slots.unwrap_or_else(|| default_single_event_cap(n));
    let mut initial = Backlog::new();
    initial.push(0, n);
    let mut sim = ClosedLoop::new(ArrivalModel::silent(), scheme, seed, trial_index)
        .with_initial_backlog(initial);
    while !sim.backlog().is_empty() && sim.slot() < cap {
        sim.step();
    }
    SingleEventOutcome {
        delays: sim.delays().iter().map(DelaySample::delay).collect(),
        slots: sim.slot(),
        truncated: !sim.backlog().is_empty(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepetitiveOutcome {
    /// Slots simulated.
    pub horizon: u64,
    /// Mean delay of served devices that arrived at or after the warmup;
    /// `None` when there are none.
    pub mean_delay: Option<f64>,
    /// Number of delay samples behind `mean_delay`.
    pub measured: u64,
    /// All served devices.
    pub completed: u64,
    /// Devices still waiting at the horizon.
    pub residual: u64,
    pub total_arrivals: u64,
}

/// Long-run delay under interrupted Poisson traffic.
pub fn run_repetitive(
    model: &ArrivalModel,
    scheme: SchemeParams,
    horizon: u64,
    warmup: u64,
    seed: u64,
    trial_index: u64,
) -> RepetitiveOutcome {
    run_repetitive_checkpoints(model, scheme, &[horizon], warmup, seed, trial_index)
        .pop()
        .expect("one checkpoint")
}

/// One run observed at several horizons; the outcome at each checkpoint is
/// what [`run_repetitive`] would return with that horizon.
pub fn run_repetitive_checkpoints(
    model: &ArrivalModel,
    scheme: SchemeParams,
    checkpoints: &[u64],
    warmup: u64,
    seed: u64,
    trial_index: u64,
) -> Vec<RepetitiveOutcome> {
    let mut sorted = checkpoints.to_vec();
    sorted.sort_unstable();
    let mut sim = ClosedLoop::new(model.clone(), scheme, seed, trial_index);
    let mut out = Vec::with_capacity(sorted.len());
    let mut sum = 0u64;
    let mut measured = 0u64;
    let mut seen = 0usize;
    for &horizon in &sorted {
        while sim.slot() < horizon {
            sim.step();
        }
        for s in &sim.delays()[seen..] {
            if s.arrival_slot >= warmup {
                sum += s.delay();
                measured += 1;
            }
        }
        seen = sim.delays().len();
        out.push(RepetitiveOutcome {
            horizon,
            mean_delay: (measured > 0).then(|| sum as f64 / measured as f64),
            measured,
            completed: sim.completed(),
            residual: sim.backlog().len(),
            total_arrivals: sim.total_arrivals(),
        });
    }
    out
}
