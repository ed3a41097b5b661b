//! Fans trials of a [`Campaign`] across a worker pool and reduces them to
//! summary rows, in trial order.

use fasa_core::analysis::{emit_drift_curves, pb_kelly_coefficients, DriftRow, DriftSource};
use fasa_core::estimators::SchemeParams;
use fasa_core::metrics::{
    nearest_rank, paired_divergence_summary, rising_time, stationary_throughput, MetricKind,
    MetricSummary, Z95,
};
use fasa_core::simulator::{
    run_closed_loop, run_closed_loop_from, run_repetitive, run_repetitive_checkpoints,
    run_single_event, run_step_response, Backlog, RepetitiveOutcome, SlotRecord,
};
use fasa_core::traffic::splitmix64;
use rayon::prelude::*;
use rayon::ThreadPool;

use crate::config::{Campaign, Plan, Reference, TrafficPoint};

/// Event probability of the reference repetitive-event setup.
pub const REFERENCE_THETA: f64 = 1e-4;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("worker pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Model(#[from] fasa_core::Error),
}

/// One line of `summary.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub experiment: String,
    pub scheme: String,
    pub param: String,
    pub metric: String,
    /// `None` when no trial produced a value.
    pub value: Option<f64>,
    pub ci95: Option<f64>,
    pub trials: u64,
}

/// Across-trial mean of the step response at one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub scheme: String,
    pub n: u64,
    pub t: u64,
    pub n_hat: f64,
    pub k: f64,
    pub throughput: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceDump {
    pub scheme_index: usize,
    pub point_index: usize,
    pub trial: u64,
    pub records: Vec<SlotRecord>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CampaignOutput {
    pub rows: Vec<ResultRow>,
    pub drift: Vec<DriftRow>,
    pub trajectories: Vec<TrajectoryRow>,
    pub traces: Vec<TraceDump>,
    pub deviations: Vec<String>,
}

impl CampaignOutput {
    /// First row matching scheme label, parameter label and metric name.
    pub fn find(&self, scheme: &str, param: &str, metric: &str) -> Option<&ResultRow> {
        self.rows
            .iter()
            .find(|r| r.scheme == scheme && r.param == param && r.metric == metric)
    }
}

/// Seed of the Oracle reference runs when they must not share randomness
/// with the schemes under test.
pub fn independent_reference_seed(base_seed: u64) -> u64 {
    let mut s = base_seed ^ 0x5EED_0F0E_AC1E_0000;
    splitmix64(&mut s)
}

pub fn run_campaign(c: &Campaign, workers: usize) -> Result<CampaignOutput, RunError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| RunError::Pool(e.to_string()))?;
    let runner = Runner { c, pool: &pool };
    let mut out = match &c.plan {
        Plan::Drift { rho_grid } => runner.drift(rho_grid)?,
        Plan::Step {
            n,
            horizon,
            x_percent,
            trajectory_slots,
        } => runner.step(n, *horizon, x_percent, *trajectory_slots),
        Plan::SingleEvent {
            n,
            y_percent,
            max_slots,
        } => runner.single_event(n, y_percent, *max_slots),
        Plan::Repetitive {
            points,
            horizon,
            warmup,
            reference,
        } => runner.repetitive(points, *horizon, *warmup, *reference),
        Plan::StabilityScan {
            points,
            horizons,
            warmup,
        } => runner.scan(points, horizons, *warmup),
    };
    out.deviations = deviations(c);
    Ok(out)
}

/// Departures from the reference setup that a reader of the outputs
/// should know about.
pub fn deviations(c: &Campaign) -> Vec<String> {
    let mut d = Vec::new();
    match &c.plan {
        Plan::Step { .. } => d.push(
            "rising time is the per-trial count of slots up to and including the first slot at the level, averaged over trials"
                .to_string(),
        ),
        Plan::SingleEvent { .. } => d.push(
            "delay percentiles are taken over trials that emptied the backlog; capped trials count towards unstable_fraction"
                .to_string(),
        ),
        Plan::Repetitive { points, reference, .. } => {
            theta_deviation(points, &mut d);
            if *reference == Reference::Common {
                d.push(
                    "divergence reference is the Oracle driven by the same per-trial arrival stream (common random numbers), not independent seeds"
                        .to_string(),
                );
            }
        }
        Plan::StabilityScan { points, .. } => theta_deviation(points, &mut d),
        Plan::Drift { .. } => {}
    }
    d.extend(c.notes.iter().cloned());
    d
}

fn theta_deviation(points: &[TrafficPoint], d: &mut Vec<String>) {
    let mut thetas: Vec<f64> = points
        .iter()
        .map(|p| p.theta)
        .filter(|t| *t != REFERENCE_THETA)
        .collect();
    thetas.dedup();
    for t in thetas {
        d.push(format!(
            "event probability theta={t} used instead of {REFERENCE_THETA}, event size lambda scaled to keep lambda_bar"
        ));
    }
}

struct Runner<'a> {
    c: &'a Campaign,
    pool: &'a ThreadPool,
}

fn fraction_summary(hits: u64, total: u64) -> (f64, f64) {
    let f = hits as f64 / total as f64;
    (f, Z95 * (f * (1.0 - f) / total as f64).sqrt())
}

impl Runner<'_> {
    fn trials<T, F>(&self, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(u64) -> T + Sync + Send,
    {
        self.pool
            .install(|| (0..self.c.trials).into_par_iter().map(f).collect())
    }

    fn row(&self, scheme: &SchemeParams, param: &str, metric: &str, s: &MetricSummary) -> ResultRow {
        ResultRow {
            experiment: self.c.name.clone(),
            scheme: scheme.to_string(),
            param: param.to_string(),
            metric: metric.to_string(),
            value: s.value,
            ci95: s.value.map(|_| s.ci95_halfwidth),
            trials: s.trials as u64,
        }
    }

    fn fraction_row(&self, scheme: &SchemeParams, param: &str, hits: u64, total: u64) -> ResultRow {
        let (f, half) = fraction_summary(hits, total);
        ResultRow {
            experiment: self.c.name.clone(),
            scheme: scheme.to_string(),
            param: param.to_string(),
            metric: "unstable_fraction".to_string(),
            value: Some(f),
            ci95: Some(half),
            trials: total,
        }
    }

    fn drift(&self, rho_grid: &[f64]) -> Result<CampaignOutput, RunError> {
        let sources: Vec<(String, DriftSource)> = self
            .c
            .schemes
            .iter()
            .map(|s| {
                let src = match *s {
                    SchemeParams::Fasa(d) => DriftSource::Fasa(d),
                    SchemeParams::Pb { lambda_hat } => {
                        let (a0, a1, ac) = pb_kelly_coefficients(lambda_hat);
                        DriftSource::Kelly { a0, a1, ac }
                    }
                    SchemeParams::Kelly { a0, a1, ac } => DriftSource::Kelly { a0, a1, ac },
                    SchemeParams::QPlus { .. } | SchemeParams::Oracle => {
                        unreachable!("rejected when the campaign was parsed")
                    }
                };
                (s.to_string(), src)
            })
            .collect();
        let drift = emit_drift_curves(&sources, rho_grid)?;
        let rows = self
            .c
            .schemes
            .iter()
            .zip(&sources)
            .map(|(s, (_, src))| ResultRow {
                experiment: self.c.name.clone(),
                scheme: s.to_string(),
                param: "rho=1".to_string(),
                metric: "drift".to_string(),
                value: Some(src.drift(1.0)),
                ci95: Some(0.0),
                trials: 1,
            })
            .collect();
        Ok(CampaignOutput {
            rows,
            drift,
            ..Default::default()
        })
    }

    fn step(&self, ns: &[u64], horizon: u64, x_percent: &[f64], traj_slots: u64) -> CampaignOutput {
        struct Trial {
            rising: Vec<Option<f64>>,
            stationary: Option<f64>,
            head: Vec<(f64, f64, f64)>,
            trace: Option<Vec<SlotRecord>>,
        }
        let c = self.c;
        let mut out = CampaignOutput::default();
        for (si, scheme) in c.schemes.iter().enumerate() {
            for (pi, &n) in ns.iter().enumerate() {
                let results = self.trials(|i| {
                    let trace = run_step_response(n, *scheme, horizon, c.base_seed, i);
                    let thr: Vec<f64> = trace.iter().map(|r| r.expected_throughput).collect();
                    Trial {
                        rising: x_percent
                            .iter()
                            .map(|&x| rising_time(&thr, x).map(|t| (t + 1) as f64))
                            .collect(),
                        stationary: stationary_throughput(&thr),
                        head: trace
                            .iter()
                            .take(traj_slots as usize)
                            .map(|r| (r.n_hat, r.k as f64, r.expected_throughput))
                            .collect(),
                        trace: (i < c.trace_trials).then_some(trace),
                    }
                });
                let param = format!("n={n}");
                for (xi, x) in x_percent.iter().enumerate() {
                    let samples: Vec<f64> = results.iter().filter_map(|t| t.rising[xi]).collect();
                    let s = MetricSummary::from_samples(MetricKind::RisingTime, &samples);
                    out.rows.push(self.row(scheme, &param, &format!("rising_time_{x}"), &s));
                }
                let samples: Vec<f64> = results.iter().filter_map(|t| t.stationary).collect();
                let s = MetricSummary::from_samples(MetricKind::StationaryThroughput, &samples);
                out.rows.push(self.row(scheme, &param, "stationary_throughput", &s));
                let unreached = results.iter().filter(|t| t.stationary.is_none()).count() as u64;
                out.rows.push(self.fraction_row(scheme, &param, unreached, c.trials));

                let trials = results.len() as f64;
                for t in 0..traj_slots as usize {
                    let (mut a, mut b, mut d) = (0.0, 0.0, 0.0);
                    for r in &results {
                        let (x, y, z) = r.head[t];
                        a += x;
                        b += y;
                        d += z;
                    }
                    out.trajectories.push(TrajectoryRow {
                        scheme: scheme.to_string(),
                        n,
                        t: t as u64,
                        n_hat: a / trials,
                        k: b / trials,
                        throughput: d / trials,
                    });
                }
                for (i, r) in results.into_iter().enumerate() {
                    if let Some(records) = r.trace {
                        out.traces.push(TraceDump {
                            scheme_index: si,
                            point_index: pi,
                            trial: i as u64,
                            records,
                        });
                    }
                }
            }
        }
        out
    }

    fn single_event(&self, ns: &[u64], y_percent: &[f64], max_slots: Option<u64>) -> CampaignOutput {
        let c = self.c;
        let mut out = CampaignOutput::default();
        for (si, scheme) in c.schemes.iter().enumerate() {
            for (pi, &n) in ns.iter().enumerate() {
                let results = self.trials(|i| {
                    let mut o = run_single_event(n, *scheme, c.base_seed, i, max_slots);
                    o.delays.sort_unstable();
                    o
                });
                let param = format!("n={n}");
                let complete: Vec<_> = results.iter().filter(|o| !o.truncated).collect();
                for y in y_percent {
                    let samples: Vec<f64> = complete
                        .iter()
                        .map(|o| nearest_rank(&o.delays, *y) as f64)
                        .collect();
                    let s = MetricSummary::from_samples(MetricKind::DelayPercentile, &samples);
                    out.rows.push(self.row(scheme, &param, &format!("delay_p{y}"), &s));
                }
                let truncated = (results.len() - complete.len()) as u64;
                out.rows.push(self.fraction_row(scheme, &param, truncated, c.trials));
                for (i, o) in results.iter().enumerate().take(c.trace_trials as usize) {
                    let mut initial = Backlog::new();
                    initial.push(0, n);
                    let run = run_closed_loop_from(
                        &fasa_core::traffic::ArrivalModel::silent(),
                        *scheme,
                        initial,
                        o.slots,
                        c.base_seed,
                        i as u64,
                    );
                    out.traces.push(TraceDump {
                        scheme_index: si,
                        point_index: pi,
                        trial: i as u64,
                        records: run.trace,
                    });
                }
            }
        }
        out
    }

    fn repetitive(
        &self,
        points: &[TrafficPoint],
        horizon: u64,
        warmup: u64,
        reference: Reference,
    ) -> CampaignOutput {
        let c = self.c;
        let run = |point: &TrafficPoint, scheme: SchemeParams, seed: u64| -> Vec<RepetitiveOutcome> {
            self.trials(|i| run_repetitive(&point.model, scheme, horizon, warmup, seed, i))
        };
        let mut results: Vec<Vec<Vec<RepetitiveOutcome>>> = Vec::with_capacity(points.len());
        let mut references: Vec<Option<Vec<RepetitiveOutcome>>> = Vec::with_capacity(points.len());
        let needs_reference = c.schemes.iter().any(|s| !s.is_oracle());
        for point in points {
            let per_scheme: Vec<_> = c.schemes.iter().map(|s| run(point, *s, c.base_seed)).collect();
            let reference_runs = if !needs_reference {
                None
            } else {
                let reused = (reference == Reference::Common)
                    .then(|| c.schemes.iter().position(|s| s.is_oracle()))
                    .flatten();
                Some(match reused {
                    Some(oi) => per_scheme[oi].clone(),
                    None => {
                        let seed = match reference {
                            Reference::Common => c.base_seed,
                            Reference::Independent => independent_reference_seed(c.base_seed),
                        };
                        run(point, SchemeParams::Oracle, seed)
                    }
                })
            };
            results.push(per_scheme);
            references.push(reference_runs);
        }

        let mut out = CampaignOutput::default();
        for (si, scheme) in c.schemes.iter().enumerate() {
            for (pi, point) in points.iter().enumerate() {
                let runs = &results[pi][si];
                let param = point.label();
                let delays: Vec<f64> = runs.iter().filter_map(|r| r.mean_delay).collect();
                let s = MetricSummary::from_samples(MetricKind::MeanDelay, &delays);
                out.rows.push(self.row(scheme, &param, "mean_delay", &s));
                let residual: Vec<f64> = runs.iter().map(|r| r.residual as f64).collect();
                let s = MetricSummary::from_samples(MetricKind::MeanDelay, &residual);
                out.rows.push(self.row(scheme, &param, "residual_backlog", &s));
                if scheme.is_oracle() {
                    continue;
                }
                let Some(refs) = &references[pi] else { continue };
                let s = match reference {
                    Reference::Common => {
                        let (d, d_star): (Vec<f64>, Vec<f64>) = runs
                            .iter()
                            .zip(refs)
                            .filter_map(|(a, b)| Some((a.mean_delay?, b.mean_delay?)))
                            .unzip();
                        paired_divergence_summary(&d, &d_star)
                    }
                    Reference::Independent => {
                        let star: Vec<f64> = refs.iter().filter_map(|r| r.mean_delay).collect();
                        let star = MetricSummary::from_samples(MetricKind::MeanDelay, &star);
                        let own = MetricSummary::from_samples(MetricKind::MeanDelay, &delays);
                        fasa_core::metrics::divergence_summary(&own, &star)
                    }
                };
                let s = s.unwrap_or(MetricSummary {
                    value: None,
                    ci95_halfwidth: 0.0,
                    trials: 0,
                    kind: MetricKind::Divergence,
                });
                out.rows.push(self.row(scheme, &param, "divergence", &s));
            }
        }
        for (si, scheme) in c.schemes.iter().enumerate() {
            for (pi, point) in points.iter().enumerate() {
                for trial in 0..c.trace_trials {
                    let r = run_closed_loop(&point.model, *scheme, horizon, c.base_seed, trial);
                    out.traces.push(TraceDump {
                        scheme_index: si,
                        point_index: pi,
                        trial,
                        records: r.trace,
                    });
                }
            }
        }
        out
    }

    fn scan(&self, points: &[TrafficPoint], horizons: &[u64], warmup: u64) -> CampaignOutput {
        let c = self.c;
        let mut out = CampaignOutput::default();
        for scheme in &c.schemes {
            for point in points {
                let runs = self.trials(|i| {
                    run_repetitive_checkpoints(&point.model, *scheme, horizons, warmup, c.base_seed, i)
                });
                for (hi, h) in horizons.iter().enumerate() {
                    let param = format!("{};horizon={h}", point.label());
                    let delays: Vec<f64> = runs.iter().filter_map(|r| r[hi].mean_delay).collect();
                    let s = MetricSummary::from_samples(MetricKind::MeanDelay, &delays);
                    out.rows.push(self.row(scheme, &param, "mean_delay", &s));
                    let residual: Vec<f64> = runs.iter().map(|r| r[hi].residual as f64).collect();
                    let s = MetricSummary::from_samples(MetricKind::MeanDelay, &residual);
                    out.rows.push(self.row(scheme, &param, "residual_backlog", &s));
                }
            }
        }
        out
    }
}
