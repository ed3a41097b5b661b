//! Exit criteria. Each test writes one `PASS`/`FAIL` line to stderr,
//! bypassing the harness's output capture, then asserts.

use std::io::Write;
use std::sync::OnceLock;
use std::time::Instant;

use fasa_core::estimators::SchemeParams;
use fasa_core::simulator::run_repetitive;
use fasa_core::traffic::ArrivalModel;
use fasa_experiments::validate::run_suite;
use fasa_experiments::{parse_campaign, run_campaign, write_outputs, CampaignOutput};

const VALIDATE_BUDGET_SECS: f64 = 10.0;

const PB_RISE_50: f64 = 237.0;
const PB_RISE_TOL: f64 = 0.10;
const FASA12_RISE_50: f64 = 12.0;
const FASA12_RISE_TOL: f64 = 0.15;
const QPLUS_RISE_50: f64 = 26.6;
const QPLUS_RISE_TOL: f64 = 0.15;

const FASA12_THROUGHPUT: f64 = 0.3675;
const QPLUS_THROUGHPUT: f64 = 0.3521;
const PB_THROUGHPUT: f64 = 0.3684;
const THROUGHPUT_TOL: f64 = 0.003;
const FASA_OVER_QPLUS: f64 = 0.01;

const ORACLE_P50: f64 = 1351.9;
const ORACLE_P50_TOL: f64 = 0.02;
const FASA12_P10: f64 = 290.8;
const FASA12_P10_TOL: f64 = 0.05;
const PB_P10: f64 = 542.4;
const PB_P10_TOL: f64 = 0.05;
const FASA12_P90: f64 = 2484.1;
const FASA12_P90_TOL: f64 = 0.02;
const FASA_PB_P10_RATIO: f64 = 0.6;

const FASA_DIVERGENCE_MAX: f64 = 0.05;
const PB_DIVERGENCE_RANGE: (f64, f64) = (0.15, 0.30);

const STABLE_LAMBDA_BAR: f64 = 0.35;
const STABLE_SEEDS: u64 = 20;
const STABLE_HORIZON: u64 = 1_000_000;
const RESIDUAL_EVENT_MULTIPLE: f64 = 10.0;
const FASA_OVER_ORACLE_RESIDUAL: f64 = 1.25;
const UNSTABLE_LAMBDA_BAR: f64 = 0.36;
const MIN_LATE_GROWTH: f64 = 0.002;

const DESK_THETA: f64 = 0.001;

fn report(id: &str, pass: bool, detail: &str) {
    let tag = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr().lock(), "{tag} criterion {id}: {detail}");
}

fn workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn label(scheme: &str) -> String {
    scheme.parse::<SchemeParams>().unwrap().to_string()
}

fn value(out: &CampaignOutput, scheme: &str, param_prefix: &str, metric: &str) -> f64 {
    let scheme = label(scheme);
    out.rows
        .iter()
        .find(|r| r.scheme == scheme && r.param.starts_with(param_prefix) && r.metric == metric)
        .and_then(|r| r.value)
        .unwrap_or_else(|| panic!("no value for {scheme} {param_prefix} {metric}"))
}

fn within(v: f64, target: f64, rel: f64) -> bool {
    (v - target).abs() <= rel * target
}

fn run(doc: &str) -> CampaignOutput {
    run_campaign(&parse_campaign(doc).unwrap(), workers()).unwrap()
}

#[test]
fn criterion_1_analytic_suite() {
    let start = Instant::now();
    let checks = run_suite();
    let secs = start.elapsed().as_secs_f64();
    let failed: Vec<_> = checks.iter().filter(|c| !c.passed).map(|c| c.name).collect();
    let pass = failed.is_empty() && secs < VALIDATE_BUDGET_SECS;
    report(
        "1",
        pass,
        &format!("{} checks, failed {failed:?}, {secs:.2}s (budget {VALIDATE_BUDGET_SECS}s)", checks.len()),
    );
    assert!(pass);
}

fn step_run() -> &'static CampaignOutput {
    static OUT: OnceLock<CampaignOutput> = OnceLock::new();
    OUT.get_or_init(|| {
        run(r#"{
            "name": "acceptance_step", "kind": "step",
            "schemes": ["pb", "qplus", "fasa:eta=1,nu=1", "fasa:eta=1,nu=3", "fasa:eta=1,nu=2"],
            "n": 1000, "trials": 1000, "horizon": 10000, "trajectory_slots": 1
        }"#)
    })
}

#[test]
fn criterion_2_rising_time() {
    let out = step_run();
    let rise = |s: &str| value(out, s, "n=1000", "rising_time_50");
    let (pb, q, f11, f13, f12) = (
        rise("pb"),
        rise("qplus"),
        rise("fasa:eta=1,nu=1"),
        rise("fasa:eta=1,nu=3"),
        rise("fasa:eta=1,nu=2"),
    );
    let checks = [
        within(pb, PB_RISE_50, PB_RISE_TOL),
        within(f12, FASA12_RISE_50, FASA12_RISE_TOL),
        within(q, QPLUS_RISE_50, QPLUS_RISE_TOL),
        f13 < f12 && f12 < f11,
    ];
    let pass = checks.iter().all(|&c| c);
    report(
        "2",
        pass,
        &format!(
            "0-50% rising time PB {pb:.1} (237.0±10%), FASA(1,2) {f12:.2} (12.0±15%), Q+ {q:.2} (26.6±15%), FASA(1,3) {f13:.2} < FASA(1,2) < FASA(1,1) {f11:.2}: {checks:?}"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_3_stationary_throughput() {
    let out = step_run();
    let thr = |s: &str| value(out, s, "n=1000", "stationary_throughput");
    let (f12, q, pb) = (thr("fasa:eta=1,nu=2"), thr("qplus"), thr("pb"));
    let checks = [
        (f12 - FASA12_THROUGHPUT).abs() <= THROUGHPUT_TOL,
        (q - QPLUS_THROUGHPUT).abs() <= THROUGHPUT_TOL,
        (pb - PB_THROUGHPUT).abs() <= THROUGHPUT_TOL,
        f12 >= q + FASA_OVER_QPLUS,
    ];
    let pass = checks.iter().all(|&c| c);
    report(
        "3",
        pass,
        &format!(
            "FASA(1,2) {f12:.5} (0.3675±0.003), Q+ {q:.5} (0.3521±0.003), PB {pb:.5} (0.3684±0.003), FASA >= Q+ + 0.01: {checks:?}"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_4_single_event_delay() {
    let out = run(r#"{
        "name": "acceptance_single_event", "kind": "single_event",
        "schemes": ["oracle", "pb", "fasa:eta=1,nu=2"],
        "n": 1000, "trials": 500
    }"#);
    let d = |s: &str, m: &str| value(&out, s, "n=1000", m);
    let oracle50 = d("oracle", "delay_p50");
    let f10 = d("fasa:eta=1,nu=2", "delay_p10");
    let f90 = d("fasa:eta=1,nu=2", "delay_p90");
    let pb10 = d("pb", "delay_p10");
    let checks = [
        within(oracle50, ORACLE_P50, ORACLE_P50_TOL),
        within(f10, FASA12_P10, FASA12_P10_TOL),
        within(pb10, PB_P10, PB_P10_TOL),
        within(f90, FASA12_P90, FASA12_P90_TOL),
        f10 < FASA_PB_P10_RATIO * pb10,
    ];
    let pass = checks.iter().all(|&c| c);
    report(
        "4",
        pass,
        &format!(
            "Oracle p50 {oracle50:.1} (1351.9±2%), FASA(1,2) p10 {f10:.1} (290.8±5%), PB p10 {pb10:.1} (542.4±5%), FASA(1,2) p90 {f90:.1} (2484.1±2%), FASA p10 < 0.6 PB p10: {checks:?}"
        ),
    );
    assert!(pass);
}

fn divergences(theta: f64, lambda_bars: &[f64], trials: u64) -> Vec<(f64, f64, f64)> {
    let doc = format!(
        r#"{{
            "name": "acceptance_divergence", "kind": "repetitive",
            "schemes": ["oracle", "pb", "fasa:eta=1,nu=2"],
            "lambda_bar": {lambda_bars:?}, "theta": {theta},
            "trials": {trials}, "horizon": 1000000, "warmup": 100000
        }}"#
    );
    let out = run(&doc);
    lambda_bars
        .iter()
        .map(|lb| {
            let p = format!("lambda_bar={lb};");
            (
                *lb,
                value(&out, "fasa:eta=1,nu=2", &p, "divergence"),
                value(&out, "pb", &p, "divergence"),
            )
        })
        .collect()
}

fn divergence_ok(rows: &[(f64, f64, f64)]) -> (bool, String) {
    let mut pass = true;
    let mut parts = Vec::new();
    for &(lb, fasa, pb) in rows {
        let ok = fasa <= FASA_DIVERGENCE_MAX
            && (PB_DIVERGENCE_RANGE.0..=PB_DIVERGENCE_RANGE.1).contains(&pb);
        pass &= ok;
        parts.push(format!("lambda_bar={lb}: FASA {fasa:.4} (<=0.05), PB {pb:.4} (in [0.15, 0.30])"));
    }
    (pass, parts.join("; "))
}

#[test]
fn criterion_5_divergence() {
    let rows = divergences(DESK_THETA, &[0.15, 0.25], 24);
    let (pass, detail) = divergence_ok(&rows);
    report("5", pass, &format!("theta={DESK_THETA}, 24 trials x 1e6 slots: {detail}"));
    assert!(pass);
}

#[test]
fn criterion_5_divergence_at_reference_theta() {
    let rows = divergences(1e-4, &[0.15], 24);
    let (pass, detail) = divergence_ok(&rows);
    report("5 (supplementary)", pass, &format!("theta=1e-4, 24 trials x 1e6 slots: {detail}"));
    assert!(pass);
}

fn residuals(lambda_bar: f64, scheme: SchemeParams) -> Vec<u64> {
    let model = ArrivalModel::from_rate(lambda_bar, DESK_THETA).unwrap();
    (0..STABLE_SEEDS)
        .map(|seed| run_repetitive(&model, scheme, STABLE_HORIZON, STABLE_HORIZON / 10, seed + 1, 0).residual)
        .collect()
}

#[test]
fn criterion_6a_bounded_backlog() {
    let model = ArrivalModel::from_rate(STABLE_LAMBDA_BAR, DESK_THETA).unwrap();
    let bound = RESIDUAL_EVENT_MULTIPLE * model.lambda();
    let fasa = residuals(STABLE_LAMBDA_BAR, SchemeParams::fasa(1.0, 2.0, 20).unwrap());
    let worst = *fasa.iter().max().unwrap();
    let above = fasa.iter().filter(|&&r| r as f64 >= bound).count();
    let pass = above == 0;
    report(
        "6a",
        pass,
        &format!(
            "FASA(1,2) at lambda_bar={STABLE_LAMBDA_BAR}, theta={DESK_THETA}, horizon 1e6: max residual {worst} over {STABLE_SEEDS} seeds, {above} at or above {bound:.0}"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_6a_backlog_matches_oracle() {
    let mean = |v: &[u64]| v.iter().sum::<u64>() as f64 / v.len() as f64;
    let fasa = mean(&residuals(STABLE_LAMBDA_BAR, SchemeParams::fasa(1.0, 2.0, 20).unwrap()));
    let oracle = mean(&residuals(STABLE_LAMBDA_BAR, SchemeParams::Oracle));
    let pass = fasa <= FASA_OVER_ORACLE_RESIDUAL * oracle;
    report(
        "6a (supplementary)",
        pass,
        &format!("mean residual FASA(1,2) {fasa:.1} vs Oracle {oracle:.1} on the same seeds (bound 1.25x)"),
    );
    assert!(pass);
}

fn qplus_growth() -> &'static Vec<(u64, f64)> {
    static OUT: OnceLock<Vec<(u64, f64)>> = OnceLock::new();
    OUT.get_or_init(|| {
        let doc = format!(
            r#"{{
                "name": "acceptance_scan", "kind": "stability_scan",
                "schemes": ["qplus"], "lambda_bar": {UNSTABLE_LAMBDA_BAR}, "theta": {DESK_THETA},
                "trials": 20, "horizons": [100000, 300000, 1000000]
            }}"#
        );
        let out = run(&doc);
        let scheme = label("qplus");
        [100_000u64, 300_000, 1_000_000]
            .iter()
            .map(|&h| {
                let r = out
                    .rows
                    .iter()
                    .find(|r| {
                        r.scheme == scheme
                            && r.param.ends_with(&format!(";horizon={h}"))
                            && r.metric == "residual_backlog"
                    })
                    .and_then(|r| r.value)
                    .unwrap();
                (h, r)
            })
            .collect()
    })
}

#[test]
fn criterion_6b_superlinear_growth() {
    let g = qplus_growth();
    let rates: Vec<f64> = g.iter().map(|&(h, r)| r / h as f64).collect();
    let pass = rates.windows(2).all(|w| w[1] >= w[0]);
    report(
        "6b",
        pass,
        &format!("Q+ at lambda_bar={UNSTABLE_LAMBDA_BAR}: residual by horizon {g:?}, residual/horizon {rates:.4?} (superlinear needs nondecreasing)"),
    );
    assert!(pass);
}

#[test]
fn criterion_6b_unbounded_growth() {
    let g = qplus_growth();
    let increasing = g.windows(2).all(|w| w[1].1 > w[0].1);
    let late = (g[2].1 - g[1].1) / (g[2].0 - g[1].0) as f64;
    let pass = increasing && late > MIN_LATE_GROWTH;
    report(
        "6b (supplementary)",
        pass,
        &format!("Q+ residual increasing {increasing}, late growth {late:.5} per slot (> {MIN_LATE_GROWTH})"),
    );
    assert!(pass);
}

#[test]
fn criterion_7_determinism() {
    let docs = [
        r#"{"name": "d_drift", "kind": "drift", "schemes": ["pb", "fasa:eta=1,nu=2"]}"#,
        r#"{"name": "d_step", "kind": "step", "schemes": ["qplus", "fasa:eta=1,nu=2"], "n": [200, 500], "trials": 40, "horizon": 2000, "trace_trials": 2}"#,
        r#"{"name": "d_single", "kind": "single_event", "schemes": ["oracle", "pb"], "n": 300, "trials": 40}"#,
        r#"{"name": "d_rep", "kind": "repetitive", "schemes": ["oracle", "qplus", "fasa:eta=1,nu=2"], "lambda_bar": [0.1, 0.3], "theta": 0.01, "trials": 12, "horizon": 50000}"#,
        r#"{"name": "d_scan", "kind": "stability_scan", "schemes": ["pb"], "lambda_bar": 0.36, "theta": 0.01, "trials": 12, "horizons": [10000, 30000]}"#,
    ];
    let mut mismatched = Vec::new();
    for doc in docs {
        let c = parse_campaign(doc).unwrap();
        let bytes: Vec<Vec<u8>> = [1usize, 4]
            .iter()
            .map(|&w| {
                let dir = tempfile::tempdir().unwrap();
                let out = run_campaign(&c, w).unwrap();
                write_outputs(&c, &out, dir.path()).unwrap();
                std::fs::read(dir.path().join("summary.csv")).unwrap()
            })
            .collect();
        if bytes[0] != bytes[1] || bytes[0].is_empty() {
            mismatched.push(c.name.clone());
        }
    }
    let pass = mismatched.is_empty();
    report(
        "7",
        pass,
        &format!("summary.csv at workers 1 and 4 for {} campaigns, differing: {mismatched:?}", docs.len()),
    );
    assert!(pass);
}
