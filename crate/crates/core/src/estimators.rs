//! Backlog estimators.
//!
//! Each estimator keeps a real-valued estimate `n_hat` of the number of
//! backlogged devices, broadcasts `p = min(1, 1/n_hat)` and updates the
//! estimate from the ternary feedback of the slot. The oracle instead reads
//! the true backlog.
//!
//! Scheme strings select an estimator:
//!
//! ```text
//! fasa:eta=1,nu=2,km=20    km defaults to 20
//! pb:lh=0.3679             lh defaults to 1/e
//! qplus:z0=1.1892,zc=1.2746
//! kelly:a0=-0.63,a1=-0.63,ac=1.76
//! oracle
//! ```

use std::fmt;
use std::str::FromStr;

use crate::analysis::{make_design, next_streak, FasaDesign};
use crate::error::{Error, Result};
use crate::{COLLISION_STEP, INV_E};

/// Streak cap used when a FASA scheme string omits `km`.
pub const DEFAULT_K_M: u32 = 20;

/// Ternary channel feedback.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SlotOutcome {
    Idle,
    Success,
    Collision,
}

impl SlotOutcome {
    pub fn from_transmitters(count: u64) -> Self {
        match count {
            0 => SlotOutcome::Idle,
            1 => SlotOutcome::Success,
            _ => SlotOutcome::Collision,
        }
    }

    /// `0`, `1` or `c`.
    pub fn symbol(self) -> char {
        match self {
            SlotOutcome::Idle => '0',
            SlotOutcome::Success => '1',
            SlotOutcome::Collision => 'c',
        }
    }

    fn sign(self) -> i8 {
        match self {
            SlotOutcome::Idle => -1,
            SlotOutcome::Success => 0,
            SlotOutcome::Collision => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SchemeParams {
    Fasa(FasaDesign),
    Pb { lambda_hat: f64 },
    Kelly { a0: f64, a1: f64, ac: f64 },
    QPlus { zeta0: f64, zetac: f64 },
    Oracle,
}

impl SchemeParams {
    pub fn fasa(eta: f64, nu: f64, k_m: u32) -> Result<Self> {
        Ok(SchemeParams::Fasa(make_design(eta, nu, k_m)?))
    }

    pub fn pb() -> Self {
        SchemeParams::Pb { lambda_hat: INV_E }
    }

    pub fn qplus() -> Self {
        SchemeParams::QPlus {
            zeta0: 2f64.powf(0.25),
            zetac: 2f64.powf(0.35),
        }
    }

    pub fn is_oracle(&self) -> bool {
        matches!(self, SchemeParams::Oracle)
    }

    /// Lowest value the estimate can take.
    pub fn floor(&self) -> f64 {
        match self {
            SchemeParams::Pb { lambda_hat } => *lambda_hat,
            _ => 1.0,
        }
    }
}

impl fmt::Display for SchemeParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SchemeParams::Fasa(d) => write!(f, "fasa:eta={},nu={},km={}", d.eta, d.nu, d.k_m),
            SchemeParams::Pb { lambda_hat } => write!(f, "pb:lh={lambda_hat}"),
            SchemeParams::Kelly { a0, a1, ac } => write!(f, "kelly:a0={a0},a1={a1},ac={ac}"),
            SchemeParams::QPlus { zeta0, zetac } => write!(f, "qplus:z0={zeta0},zc={zetac}"),
            SchemeParams::Oracle => f.write_str("oracle"),
        }
    }
}

impl FromStr for SchemeParams {
    type Err = Error;

    fn from_str(input: &str) -> Result<Self> {
        let fail = |reason: String| Error::Scheme {
            input: input.to_string(),
            reason,
        };
        let trimmed = input.trim();
        let (name, rest) = match trimmed.split_once(':') {
            Some((n, r)) => (n, Some(r)),
            None => (trimmed, None),
        };

        let mut pairs: Vec<(&str, f64)> = Vec::new();
        if let Some(rest) = rest {
            for item in rest.split(',') {
                let (key, value) = item
                    .split_once('=')
                    .ok_or_else(|| fail(format!("expected key=value, got `{item}`")))?;
                let key = key.trim();
                let value: f64 = value
                    .trim()
                    .parse()
                    .map_err(|_| fail(format!("value of `{key}` is not a number")))?;
                if !value.is_finite() {
                    return Err(fail(format!("value of `{key}` is not finite")));
                }
                if pairs.iter().any(|(k, _)| *k == key) {
                    return Err(fail(format!("duplicate key `{key}`")));
                }
                pairs.push((key, value));
            }
        }

        let allowed: &[&str] = match name {
            "fasa" => &["eta", "nu", "km"],
            "pb" => &["lh"],
            "qplus" => &["z0", "zc"],
            "kelly" => &["a0", "a1", "ac"],
            "oracle" => &[],
            other => return Err(fail(format!("unknown scheme `{other}`"))),
        };
        if let Some((key, _)) = pairs.iter().find(|(k, _)| !allowed.contains(k)) {
            return Err(fail(format!("unknown key `{key}` for scheme `{name}`")));
        }
        let get = |key: &str| pairs.iter().find(|(k, _)| *k == key).map(|(_, v)| *v);
        let need = |key: &str| get(key).ok_or_else(|| fail(format!("missing key `{key}`")));

        let scheme = match name {
            "fasa" => {
                let km = get("km").unwrap_or(DEFAULT_K_M as f64);
                if km.fract() != 0.0 || km < 2.0 || km > u32::MAX as f64 {
                    return Err(fail(format!("km must be an integer > 1, got {km}")));
                }
                SchemeParams::fasa(need("eta")?, need("nu")?, km as u32)
                    .map_err(|e| fail(e.to_string()))?
            }
            "pb" => {
                let lambda_hat = get("lh").unwrap_or(INV_E);
                if lambda_hat <= 0.0 {
                    return Err(fail("lh must be positive".into()));
                }
                SchemeParams::Pb { lambda_hat }
            }
            "qplus" => {
                let defaults = SchemeParams::qplus();
                let SchemeParams::QPlus { zeta0, zetac } = defaults else {
                    unreachable!()
                };
                let zeta0 = get("z0").unwrap_or(zeta0);
                let zetac = get("zc").unwrap_or(zetac);
                if zeta0 <= 1.0 || zetac <= 1.0 {
                    return Err(fail("z0 and zc must exceed 1".into()));
                }
                SchemeParams::QPlus { zeta0, zetac }
            }
            "kelly" => SchemeParams::Kelly {
                a0: need("a0")?,
                a1: need("a1")?,
                ac: need("ac")?,
            },
            _ => {
                if rest.is_some() {
                    return Err(fail("oracle takes no parameters".into()));
                }
                SchemeParams::Oracle
            }
        };
        Ok(scheme)
    }
}

/// Estimate plus streak memory. Baselines leave `k` at zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorState {
    pub n_hat: f64,
    pub k: i32,
    pub params: SchemeParams,
}

impl EstimatorState {
    /// Initial state `(n_hat, k) = (1, 0)`.
    pub fn new(params: SchemeParams) -> Self {
        Self {
            n_hat: 1.0,
            k: 0,
            params,
        }
    }

    pub fn tx_probability(&self, true_n: Option<u64>) -> Result<f64> {
        tx_probability(self, true_n)
    }

    /// Feed one slot's outcome.
    pub fn observe(&mut self, z: SlotOutcome) {
        *self = match self.params {
            SchemeParams::Fasa(_) => fasa_observe(*self, z),
            SchemeParams::Pb { .. } => pb_observe(*self, z),
            SchemeParams::Kelly { .. } => kelly_observe(*self, z),
            SchemeParams::QPlus { .. } => qplus_observe(*self, z),
            SchemeParams::Oracle => *self,
        };
    }
}

/// Transmission probability for the next slot. The oracle uses `1/n` and
/// returns 1 when at most one device is backlogged.
pub fn tx_probability(state: &EstimatorState, true_n: Option<u64>) -> Result<f64> {
    match state.params {
        SchemeParams::Oracle => {
            let n = true_n
                .ok_or_else(|| Error::Contract("oracle policy needs the true backlog".into()))?;
            Ok(if n <= 1 { 1.0 } else { 1.0 / n as f64 })
        }
        _ => Ok((1.0 / state.n_hat).min(1.0)),
    }
}

/// FASA update: the streak moves first, then the estimate steps by an
/// amount that grows with the new streak length.
pub fn fasa_observe(state: EstimatorState, z: SlotOutcome) -> EstimatorState {
    let SchemeParams::Fasa(design) = state.params else {
        panic!("fasa_observe called with {:?}", state.params);
    };
    let k = next_streak(state.k, z.sign(), design.k_m);
    let n_hat = match z {
        SlotOutcome::Idle => (state.n_hat - design.idle_step(k.unsigned_abs())).max(1.0),
        SlotOutcome::Success => state.n_hat,
        SlotOutcome::Collision => state.n_hat + design.collision_step(k as u32),
    };
    EstimatorState { n_hat, k, ..state }
}

/// Pseudo-Bayesian update with arrival estimate `lambda_hat`.
pub fn pb_observe(state: EstimatorState, z: SlotOutcome) -> EstimatorState {
    let SchemeParams::Pb { lambda_hat } = state.params else {
        panic!("pb_observe called with {:?}", state.params);
    };
    let n_hat = match z {
        SlotOutcome::Idle | SlotOutcome::Success => (state.n_hat + lambda_hat - 1.0).max(lambda_hat),
        SlotOutcome::Collision => state.n_hat + lambda_hat + COLLISION_STEP,
    };
    EstimatorState { n_hat, ..state }
}

pub fn kelly_observe(state: EstimatorState, z: SlotOutcome) -> EstimatorState {
    let SchemeParams::Kelly { a0, a1, ac } = state.params else {
        panic!("kelly_observe called with {:?}", state.params);
    };
    let step = match z {
        SlotOutcome::Idle => a0,
        SlotOutcome::Success => a1,
        SlotOutcome::Collision => ac,
    };
    EstimatorState {
        n_hat: (state.n_hat + step).max(1.0),
        ..state
    }
}

pub fn qplus_observe(state: EstimatorState, z: SlotOutcome) -> EstimatorState {
    let SchemeParams::QPlus { zeta0, zetac } = state.params else {
        panic!("qplus_observe called with {:?}", state.params);
    };
    let n_hat = match z {
        SlotOutcome::Idle => (state.n_hat / zeta0).max(1.0),
        SlotOutcome::Success => state.n_hat,
        SlotOutcome::Collision => (state.n_hat * zetac).max(1.0),
    };
    EstimatorState { n_hat, ..state }
}
