//! Self-check of the analytic model and a short conservation smoke run.

use fasa_core::analysis::{
    build_streak_chain, default_rho_grid, drift_phi, kelly_drift, mu, omega_root,
    pb_kelly_coefficients, virtual_drifts, FasaDesign, Matrix,
};
use fasa_core::estimators::{SchemeParams, SlotOutcome};
use fasa_core::simulator::run_closed_loop;
use fasa_core::traffic::ArrivalModel;
use fasa_core::INV_E;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, failures: Vec<String>, ok_detail: String) -> Self {
        let passed = failures.is_empty();
        let detail = if passed {
            ok_detail
        } else {
            let shown: Vec<_> = failures.iter().take(3).cloned().collect();
            format!("{} failure(s): {}", failures.len(), shown.join("; "))
        };
        Check { name, passed, detail }
    }
}

pub const ETAS: [f64; 3] = [0.5, 1.0, 2.0];
pub const NUS: [f64; 4] = [0.0, 1.0, 2.0, 3.0];
pub const K_MS: [u32; 3] = [2, 5, 20];
pub const LAMBDA_BARS: [f64; 7] = [0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.35];
const CHAIN_RHOS: [f64; 6] = [0.05, 0.5, 1.0, 1.7, 3.0, 6.0];
const EXACT: f64 = 1e-12;

fn designs() -> Vec<FasaDesign> {
    let mut v = Vec::new();
    for &eta in &ETAS {
        for &nu in &NUS {
            for &k_m in &K_MS {
                v.push(FasaDesign::new(eta, nu, k_m).expect("valid design"));
            }
        }
    }
    v
}

fn label(d: &FasaDesign) -> String {
    format!("eta={},nu={},km={}", d.eta, d.nu, d.k_m)
}

pub fn phi_zero_at_one() -> Check {
    let mut worst = 0f64;
    let mut fails = Vec::new();
    for d in designs() {
        let v = drift_phi(&d, 1.0);
        worst = worst.max(v.abs());
        if v.abs() > EXACT {
            fails.push(format!("{}: phi(1)={v:e}", label(&d)));
        }
    }
    Check::new("phi(1) = 0", fails, format!("max |phi(1)| = {worst:e} over 36 designs"))
}

pub fn phi_increasing() -> Check {
    let grid = default_rho_grid();
    let mut fails = Vec::new();
    for d in designs() {
        let vals: Vec<f64> = grid.iter().map(|&r| drift_phi(&d, r)).collect();
        if let Some(i) = vals.windows(2).position(|w| w[1] <= w[0]) {
            fails.push(format!("{} at rho={}", label(&d), grid[i + 1]));
        }
    }
    Check::new("phi strictly increasing", fails, format!("{} grid points", grid.len()))
}

pub fn phi_signs() -> Check {
    let grid = default_rho_grid();
    let mut fails = Vec::new();
    for d in designs() {
        for &r in &grid {
            let v = drift_phi(&d, r);
            let ok = if r < 1.0 - 1e-9 {
                v < 0.0
            } else if r > 1.0 + 1e-9 {
                v > 0.0
            } else {
                true
            };
            if !ok {
                fails.push(format!("{} rho={r} phi={v}", label(&d)));
            }
        }
    }
    Check::new("phi < 0 below rho=1, > 0 above", fails, "all designs".to_string())
}

pub fn mu_monotone() -> Check {
    let mut fails = Vec::new();
    for &nu in &[0.0, 0.5, 1.0, 2.0, 3.0] {
        for &k_m in &K_MS {
            let vals: Vec<f64> = (0..=1000)
                .map(|i| mu(nu, i as f64 / 1000.0, k_m).expect("valid mu"))
                .collect();
            if let Some(i) = vals.windows(2).position(|w| w[1] < w[0] - EXACT) {
                fails.push(format!("nu={nu},km={k_m} at q={}", (i + 1) as f64 / 1000.0));
            }
        }
    }
    Check::new("mu nondecreasing in q", fails, "q grid of 1001 points".to_string())
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn stationary_distribution() -> Check {
    let mut fails = Vec::new();
    let mut worst = 0f64;
    for &k_m in &K_MS {
        for &rho in &CHAIN_RHOS {
            let chain = build_streak_chain(rho, k_m).expect("valid chain");
            let sum: f64 = chain.pi.iter().sum();
            let fixed = max_abs_diff(&chain.transition.left_mul(&chain.pi), &chain.pi);
            let power: Matrix = chain.transition.pow(k_m);
            let rows = (0..power.dim())
                .map(|i| max_abs_diff(power.row(i), &chain.pi))
                .fold(0.0, f64::max);
            worst = worst.max((sum - 1.0).abs()).max(fixed).max(rows);
            if (sum - 1.0).abs() > EXACT || fixed > EXACT || rows > EXACT {
                fails.push(format!(
                    "km={k_m} rho={rho}: |sum-1|={:e} |piP-pi|={fixed:e} |P^km-pi|={rows:e}",
                    (sum - 1.0).abs()
                ));
            }
        }
    }
    Check::new(
        "pi sums to 1, pi P = pi, rows of P^km = pi",
        fails,
        format!("max deviation {worst:e}"),
    )
}

pub fn omega_properties() -> Check {
    let mut fails = Vec::new();
    for d in designs() {
        match omega_root(&d, INV_E) {
            Ok(w) if (w - 1.0).abs() <= 1e-8 => {}
            Ok(w) => fails.push(format!("{}: omega(1/e)={w}", label(&d))),
            Err(e) => fails.push(format!("{}: {e}", label(&d))),
        }
        for &lb in &LAMBDA_BARS {
            match omega_root(&d, lb) {
                Ok(w) if w * (-w).exp() > lb && w <= 1.0 => {}
                Ok(w) => fails.push(format!("{} lambda_bar={lb}: omega={w}", label(&d))),
                Err(e) => fails.push(format!("{} lambda_bar={lb}: {e}", label(&d))),
            }
        }
    }
    Check::new(
        "omega(1/e) = 1 and omega e^-omega > lambda_bar",
        fails,
        format!("36 designs x {} rates", LAMBDA_BARS.len()),
    )
}

pub fn virtual_drift_matches_phi() -> Check {
    let mut fails = Vec::new();
    let mut worst = 0f64;
    for d in designs() {
        let cap = d.k_m as i32;
        for &rho in &CHAIN_RHOS {
            let phi = drift_phi(&d, rho);
            for k0 in [-cap, -1, 0, 1, cap] {
                let v = virtual_drifts(&d, rho, 0.2, k0, 2 * d.k_m + 3).expect("valid");
                for (s, x) in v.per_slot.iter().enumerate().skip(d.k_m as usize) {
                    let err = (x - phi).abs() / phi.abs().max(1.0);
                    worst = worst.max(err);
                    if err > EXACT {
                        fails.push(format!("{} rho={rho} k0={k0} s={s}: {x} vs {phi}", label(&d)));
                    }
                }
            }
        }
    }
    Check::new(
        "virtual estimate drift = phi for s >= km",
        fails,
        format!("max relative deviation {worst:e}"),
    )
}

pub fn kelly_limits() -> Check {
    let mut fails = Vec::new();
    let (a0, a1, ac) = pb_kelly_coefficients(INV_E);
    let root = kelly_drift(a0, a1, ac, 1.0);
    if root.abs() > 1e-15 {
        fails.push(format!("PB drift at rho=1 is {root:e}"));
    }
    for &(a0, a1, ac) in &[(a0, a1, ac), (-1.0, 0.0, 1.0), (-2.0, 0.5, 3.0)] {
        let low = kelly_drift(a0, a1, ac, 1e-9);
        let high = kelly_drift(a0, a1, ac, 60.0);
        if (low - a0).abs() > 1e-6 || (high - ac).abs() > 1e-6 {
            fails.push(format!("({a0},{a1},{ac}): limits {low}, {high}"));
        }
    }
    Check::new(
        "Kelly drift limits and PB root at rho=1",
        fails,
        format!("PB drift at rho=1 is {root:e}"),
    )
}

pub fn conservation_smoke() -> Check {
    const SLOTS: u64 = 10_000;
    let model = ArrivalModel::from_rate(0.3, 0.01).expect("valid model");
    let schemes = [
        SchemeParams::fasa(1.0, 2.0, 20).expect("valid"),
        SchemeParams::pb(),
        SchemeParams::qplus(),
        SchemeParams::Oracle,
    ];
    let mut fails = Vec::new();
    for s in schemes {
        let run = run_closed_loop(&model, s, SLOTS, 99, 0);
        let completed = run.delays.len() as u64;
        if run.total_arrivals != completed + run.residual.len() {
            fails.push(format!(
                "{s}: arrivals {} != served {completed} + residual {}",
                run.total_arrivals,
                run.residual.len()
            ));
        }
        for w in run.trace.windows(2) {
            let served = u64::from(w[0].z == SlotOutcome::Success);
            if w[1].n != w[0].n + w[0].arrivals - served {
                fails.push(format!("{s}: backlog jump at slot {}", w[1].t));
                break;
            }
        }
    }
    Check::new(
        "backlog conservation over 10^4 slots",
        fails,
        "fasa, pb, qplus, oracle".to_string(),
    )
}

/// Runs every check in a fixed order.
pub fn run_suite() -> Vec<Check> {
    vec![
        phi_zero_at_one(),
        phi_increasing(),
        phi_signs(),
        mu_monotone(),
        stationary_distribution(),
        omega_properties(),
        virtual_drift_matches_phi(),
        kelly_limits(),
        conservation_smoke(),
    ]
}
