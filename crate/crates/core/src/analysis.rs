//! Drift analysis of additive backlog estimators.
//!
//! All quantities are functions of the offered load `rho = n / n_hat` in the
//! large-backlog limit, where a slot is idle with probability `e^-rho`, a
//! success with probability `rho e^-rho` and a collision otherwise.
//!
//! The streak chain tracks the signed length of the current run of idle
//! (negative) or collision (positive) slots, capped at `k_m`, under i.i.d.
//! slot outcomes. Its stationary law reproduces the truncated streak moments
//! used by [`mu`], and it mixes exactly after `k_m` steps.

use crate::error::{invalid, Result};
use crate::{COLLISION_STEP, INV_E};

/// Idle probability at the optimal load, `e^-1`.
pub const Q0_STAR: f64 = INV_E;
/// Collision probability at the optimal load, `1 - 2 e^-1`.
pub const QC_STAR: f64 = 1.0 - 2.0 * INV_E;

/// Default offered-load grid for drift curves: 0.01 to 6.00 in steps of 0.01.
pub fn default_rho_grid() -> Vec<f64> {
    (1..=600).map(|i| i as f64 / 100.0).collect()
}

/// Slot outcome probabilities at a given offered load.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OfferedLoadPoint {
    pub rho: f64,
    pub q0: f64,
    pub q1: f64,
    pub qc: f64,
}

impl OfferedLoadPoint {
    pub fn new(rho: f64) -> Self {
        let q0 = (-rho).exp();
        let q1 = rho * q0;
        let qc = (1.0 - q0 - q1).max(0.0);
        Self { rho, q0, q1, qc }
    }
}

/// Truncated `nu`-th moment of a streak whose continuation probability is `q`:
///
/// `sum_{k=1}^{k_m-1} k^nu q^{k-1} (1-q) + k_m^nu q^{k_m-1}`
///
/// with `q^0 = 1` at `q = 0`.
pub fn mu(nu: f64, q: f64, k_m: u32) -> Result<f64> {
    if !(nu >= 0.0 && nu.is_finite()) {
        return Err(invalid(format!("nu must be finite and >= 0, got {nu}")));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(invalid(format!("q must lie in [0, 1], got {q}")));
    }
    if k_m < 2 {
        return Err(invalid(format!("k_m must exceed 1, got {k_m}")));
    }
    Ok(mu_unchecked(nu, q, k_m))
}

fn mu_unchecked(nu: f64, q: f64, k_m: u32) -> f64 {
    let mut sum = 0.0;
    let mut q_pow = 1.0; // q^{k-1}
    for k in 1..k_m {
        sum += (k as f64).powf(nu) * q_pow * (1.0 - q);
        q_pow *= q;
    }
    sum + (k_m as f64).powf(nu) * q_pow
}

/// FASA parameters together with the idle/collision normalizers that put the
/// zero of the approximate drift at `rho = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FasaDesign {
    pub eta: f64,
    pub nu: f64,
    pub k_m: u32,
    pub h0: f64,
    pub hc: f64,
}

pub fn make_design(eta: f64, nu: f64, k_m: u32) -> Result<FasaDesign> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(invalid(format!("eta must be finite and > 0, got {eta}")));
    }
    let mu0 = mu(nu, Q0_STAR, k_m)?;
    let muc = mu(nu, QC_STAR, k_m)?;
    Ok(FasaDesign {
        eta,
        nu,
        k_m,
        h0: eta / (Q0_STAR * mu0),
        hc: eta / (QC_STAR * muc),
    })
}

impl FasaDesign {
    pub fn new(eta: f64, nu: f64, k_m: u32) -> Result<Self> {
        make_design(eta, nu, k_m)
    }

    /// Estimate decrement on an idle slot that ends an idle run of `streak`.
    pub fn idle_step(&self, streak: u32) -> f64 {
        1.0 + self.h0 * (streak.min(self.k_m) as f64).powf(self.nu)
    }

    /// Estimate increment on a collision slot that ends a collision run of `streak`.
    pub fn collision_step(&self, streak: u32) -> f64 {
        COLLISION_STEP + self.hc * (streak.min(self.k_m) as f64).powf(self.nu)
    }

    /// Change of the estimate when the streak state after the slot is `k`.
    /// `k < 0` means the slot was idle, `k > 0` a collision, `k = 0` a success.
    fn increment(&self, k: i32) -> f64 {
        match k.signum() {
            -1 => -self.idle_step(k.unsigned_abs()),
            1 => self.collision_step(k as u32),
            _ => 0.0,
        }
    }
}

/// Approximate one-slot drift of the FASA estimate at offered load `rho`.
pub fn drift_phi(design: &FasaDesign, rho: f64) -> f64 {
    let p = OfferedLoadPoint::new(rho);
    let idle = 1.0 + design.h0 * mu_unchecked(design.nu, p.q0, design.k_m);
    let coll = COLLISION_STEP + design.hc * mu_unchecked(design.nu, p.qc, design.k_m);
    -p.q0 * idle + p.qc * coll
}

/// Approximate one-slot drift of the estimation error `n_hat - n` under
/// arrival rate `lambda_bar`.
pub fn drift_psi(design: &FasaDesign, rho: f64, lambda_bar: f64) -> f64 {
    drift_phi(design, rho) - (lambda_bar - rho * (-rho).exp())
}

/// Tolerance on `|psi|` at the returned root.
pub const OMEGA_TOLERANCE: f64 = 1e-10;

/// The unique `rho` in `(0, 1]` where `psi(rho, lambda_bar) = 0`, by bisection.
pub fn omega_root(design: &FasaDesign, lambda_bar: f64) -> Result<f64> {
    if !(lambda_bar > 0.0 && lambda_bar <= INV_E) {
        return Err(invalid(format!(
            "lambda_bar must lie in (0, 1/e], got {lambda_bar}"
        )));
    }
    let psi = |rho: f64| drift_psi(design, rho, lambda_bar);
    let mut hi = 1.0;
    if psi(hi).abs() < OMEGA_TOLERANCE {
        return Ok(hi);
    }
    let mut lo = 0.5;
    while psi(lo) >= 0.0 {
        hi = lo;
        lo *= 0.5;
        if lo < 1e-300 {
            return Err(invalid("no sign change of psi found near zero"));
        }
    }
    loop {
        let mid = 0.5 * (lo + hi);
        let v = psi(mid);
        if v.abs() < OMEGA_TOLERANCE || mid == lo || mid == hi {
            return Ok(mid);
        }
        if v < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
}

/// Fixed-step (Kelly) drift `(a0 - ac) e^-rho + (a1 - ac) rho e^-rho + ac`.
pub fn kelly_drift(a0: f64, a1: f64, ac: f64, rho: f64) -> f64 {
    let q0 = (-rho).exp();
    (a0 - ac) * q0 + (a1 - ac) * rho * q0 + ac
}

/// Kelly coefficients `(a0, a1, ac)` equivalent to PB-ALOHA with arrival
/// estimate `lambda_hat`.
pub fn pb_kelly_coefficients(lambda_hat: f64) -> (f64, f64, f64) {
    (lambda_hat - 1.0, lambda_hat - 1.0, lambda_hat + COLLISION_STEP)
}

/// Dense row-major square matrix, only as much as the streak chain needs.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    dim: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn mul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.dim, other.dim);
        let n = self.dim;
        let mut out = Matrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn pow(&self, exp: u32) -> Matrix {
        (0..exp).fold(Matrix::identity(self.dim), |acc, _| acc.mul(self))
    }

    /// Row vector times matrix.
    pub fn left_mul(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.dim);
        let mut out = vec![0.0; self.dim];
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            for (o, &p) in out.iter_mut().zip(self.row(i)) {
                *o += vi * p;
            }
        }
        out
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.dim + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.dim + j]
    }
}

/// Next streak state after an outcome, capped at `k_m` in magnitude.
/// `outcome` is `-1` for idle, `0` for success and `1` for collision.
pub fn next_streak(k: i32, outcome: i8, k_m: u32) -> i32 {
    let cap = k_m as i32;
    match outcome {
        -1 if k < 0 => (k - 1).max(-cap),
        -1 => -1,
        1 if k > 0 => (k + 1).min(cap),
        1 => 1,
        _ => 0,
    }
}

/// The streak chain over states `-k_m..=k_m` at a fixed offered load.
/// State `k` lives at index `k + k_m`.
#[derive(Debug, Clone, PartialEq)]
pub struct StreakChain {
    pub rho: f64,
    pub k_m: u32,
    pub transition: Matrix,
    pub pi: Vec<f64>,
}

impl StreakChain {
    pub fn index(&self, k: i32) -> usize {
        (k + self.k_m as i32) as usize
    }

    pub fn state(&self, index: usize) -> i32 {
        index as i32 - self.k_m as i32
    }

    pub fn states(&self) -> impl Iterator<Item = i32> {
        let cap = self.k_m as i32;
        -cap..=cap
    }
}

pub fn build_streak_chain(rho: f64, k_m: u32) -> Result<StreakChain> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(invalid(format!("rho must be finite and > 0, got {rho}")));
    }
    if k_m < 2 {
        return Err(invalid(format!("k_m must exceed 1, got {k_m}")));
    }
    let p = OfferedLoadPoint::new(rho);
    let cap = k_m as i32;
    let dim = 2 * k_m as usize + 1;
    let idx = |k: i32| (k + cap) as usize;

    let mut transition = Matrix::zeros(dim);
    for k in -cap..=cap {
        for (outcome, prob) in [(-1i8, p.q0), (0, p.q1), (1, p.qc)] {
            transition[(idx(k), idx(next_streak(k, outcome, k_m)))] += prob;
        }
    }

    let mut pi = vec![0.0; dim];
    for k in -cap..=cap {
        let m = k.unsigned_abs() as i32;
        pi[idx(k)] = match k {
            0 => p.q1,
            _ if k == -cap => p.q0.powi(cap),
            _ if k == cap => p.qc.powi(cap),
            _ if k < 0 => p.q0.powi(m) * (1.0 - p.q0),
            _ => p.qc.powi(m) * (1.0 - p.qc),
        };
    }

    Ok(StreakChain {
        rho,
        k_m,
        transition,
        pi,
    })
}

/// Exact `T`-slot drifts of the virtual chain started from streak state `k0`.
#[derive(Debug, Clone, PartialEq)]
pub struct VirtualDrifts {
    /// Expected change of the backlog, `T (lambda_bar - rho e^-rho)`.
    pub d_n: f64,
    /// Expected change of the estimate.
    pub d_nhat: f64,
    /// `d_nhat - d_n`.
    pub d_tilde: f64,
    /// Expected estimate change in each of the `T` slots.
    pub per_slot: Vec<f64>,
}

/// Propagates the streak distribution through the chain for `horizon` slots
/// and accumulates the expected estimate increments. The estimate of the
/// virtual chain is not floored, and its backlog may go negative.
pub fn virtual_drifts(
    design: &FasaDesign,
    rho: f64,
    lambda_bar: f64,
    k0: i32,
    horizon: u32,
) -> Result<VirtualDrifts> {
    let chain = build_streak_chain(rho, design.k_m)?;
    let cap = design.k_m as i32;
    if !(-cap..=cap).contains(&k0) {
        return Err(invalid(format!("k0 must lie in [-{cap}, {cap}], got {k0}")));
    }
    if horizon == 0 {
        return Err(invalid("horizon must be positive"));
    }
    let p = OfferedLoadPoint::new(rho);
    // expected increment from each starting streak state
    let slot_drift: Vec<f64> = chain
        .states()
        .map(|k| {
            [(-1i8, p.q0), (0, p.q1), (1, p.qc)]
                .iter()
                .map(|&(z, q)| q * design.increment(next_streak(k, z, design.k_m)))
                .sum()
        })
        .collect();

    let mut dist = vec![0.0; chain.pi.len()];
    dist[chain.index(k0)] = 1.0;
    let mut per_slot = Vec::with_capacity(horizon as usize);
    for _ in 0..horizon {
        per_slot.push(dist.iter().zip(&slot_drift).map(|(a, b)| a * b).sum());
        dist = chain.transition.left_mul(&dist);
    }
    let d_nhat = per_slot.iter().sum();
    let d_n = horizon as f64 * (lambda_bar - rho * (-rho).exp());
    Ok(VirtualDrifts {
        d_n,
        d_nhat,
        d_tilde: d_nhat - d_n,
        per_slot,
    })
}

/// A named drift curve source.
#[derive(Debug, Clone, PartialEq)]
pub enum DriftSource {
    Fasa(FasaDesign),
    Kelly { a0: f64, a1: f64, ac: f64 },
}

impl DriftSource {
    pub fn drift(&self, rho: f64) -> f64 {
        match self {
            DriftSource::Fasa(d) => drift_phi(d, rho),
            DriftSource::Kelly { a0, a1, ac } => kelly_drift(*a0, *a1, *ac, rho),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftRow {
    pub scheme: String,
    pub rho: f64,
    pub drift: f64,
}

/// Tabulate every labelled source over `rho_grid`, source-major.
pub fn emit_drift_curves(sources: &[(String, DriftSource)], rho_grid: &[f64]) -> Result<Vec<DriftRow>> {
    if let Some(bad) = rho_grid.iter().find(|r| !(**r > 0.0 && r.is_finite())) {
        return Err(invalid(format!("rho grid must be positive, found {bad}")));
    }
    Ok(sources
        .iter()
        .flat_map(|(label, src)| {
            rho_grid.iter().map(move |&rho| DriftRow {
                scheme: label.clone(),
                rho,
                drift: src.drift(rho),
            })
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    #[test]
    fn mu_edge_values() {
        assert!((mu(0.0, 0.5, 20).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(mu(2.5, 0.0, 7).unwrap(), 1.0);
        assert_eq!(mu(2.0, 1.0, 5).unwrap(), 25.0);
        assert!(mu(1.0, 0.5, 1).is_err());
        assert!(mu(-1.0, 0.5, 4).is_err());
        assert!(mu(1.0, 1.5, 4).is_err());
    }

    #[test]
    fn design_at_nu_zero() {
        let d = make_design(1.0, 0.0, 20).unwrap();
        assert!((d.h0 - E).abs() < 1e-12);
        assert!((d.hc - 1.0 / (1.0 - 2.0 / E)).abs() < 1e-12);
        assert!((d.hc - 3.784423).abs() < 1e-6);
        assert!(make_design(1.0, 1.0, 1).is_err());
        assert!(make_design(0.0, 1.0, 4).is_err());
    }

    #[test]
    fn design_scales_with_eta() {
        let a = make_design(1.0, 2.0, 20).unwrap();
        let b = make_design(2.0, 2.0, 20).unwrap();
        assert!((b.h0 - 2.0 * a.h0).abs() < 1e-12);
        assert!((b.hc - 2.0 * a.hc).abs() < 1e-12);
    }

    #[test]
    fn normalizers_are_exact() {
        let d = make_design(0.5, 3.0, 5).unwrap();
        let mu0 = mu(3.0, Q0_STAR, 5).unwrap();
        let muc = mu(3.0, QC_STAR, 5).unwrap();
        assert_eq!(d.h0, 0.5 / (Q0_STAR * mu0));
        assert_eq!(d.hc, 0.5 / (QC_STAR * muc));
    }

    #[test]
    fn phi_small_rho_limit() {
        for (eta, nu, km) in [(1.0, 2.0, 20), (0.5, 1.0, 5), (2.0, 0.0, 3)] {
            let d = make_design(eta, nu, km).unwrap();
            let limit = -(1.0 + d.h0 * (km as f64).powf(nu));
            assert!((drift_phi(&d, 1e-12) - limit).abs() < 1e-6 * limit.abs());
        }
    }

    #[test]
    fn psi_is_negative_near_zero() {
        let d = make_design(1.0, 2.0, 20).unwrap();
        for lb in [0.01, 0.2, INV_E] {
            assert!(drift_psi(&d, 1e-9, lb) < 0.0);
        }
    }

    #[test]
    fn omega_rejects_out_of_range() {
        let d = make_design(1.0, 2.0, 20).unwrap();
        assert!(omega_root(&d, 0.0).is_err());
        assert!(omega_root(&d, 0.4).is_err());
        assert!((omega_root(&d, INV_E).unwrap() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn kelly_limits_and_constant() {
        assert_eq!(kelly_drift(-2.0, 0.5, 3.0, 0.0), -2.0);
        assert!((kelly_drift(-2.0, 0.5, 3.0, 800.0) - 3.0).abs() < 1e-12);
        for rho in [0.0, 0.7, 5.0] {
            assert!((kelly_drift(1.5, 1.5, 1.5, rho) - 1.5).abs() < 1e-15);
        }
    }

    #[test]
    fn streak_automaton() {
        assert_eq!(next_streak(0, -1, 3), -1);
        assert_eq!(next_streak(-3, -1, 3), -3);
        assert_eq!(next_streak(2, -1, 3), -1);
        assert_eq!(next_streak(-2, 1, 3), 1);
        assert_eq!(next_streak(3, 1, 3), 3);
        assert_eq!(next_streak(-2, 0, 3), 0);
    }

    #[test]
    fn chain_rejects_bad_input() {
        assert!(build_streak_chain(0.0, 4).is_err());
        assert!(build_streak_chain(1.0, 1).is_err());
        let d = make_design(1.0, 2.0, 4).unwrap();
        assert!(virtual_drifts(&d, 1.0, 0.2, 5, 10).is_err());
        assert!(virtual_drifts(&d, 1.0, 0.2, 0, 0).is_err());
    }

    #[test]
    fn drift_curves_reject_nonpositive_grid() {
        let src = vec![("x".to_string(), DriftSource::Kelly { a0: 0.0, a1: 0.0, ac: 0.0 })];
        assert!(emit_drift_curves(&src, &[0.5, 0.0]).is_err());
        assert_eq!(emit_drift_curves(&src, &[0.5, 1.0]).unwrap().len(), 2);
    }

    #[test]
    fn default_grid_shape() {
        let g = default_rho_grid();
        assert_eq!(g.len(), 600);
        assert_eq!(g[0], 0.01);
        assert_eq!(g[599], 6.0);
    }
}
