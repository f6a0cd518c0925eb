//! End-to-end two-phase simulation: MAC with compression at the relay, then
//! broadcast and per-user decoding.
//!
//! A stream is delivered when its estimate is within `1e-6` of the sent
//! symbol, relative to `max(|s|, 1)`.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{sample_channels, DataSwitchMatrix, Model, Pair, SystemConfig};
use crate::error::{Error, Result};
use crate::linalg::{complex_gaussian, condition_number, ComplexMatrix, ComplexVector, TolerancePolicy};
use crate::relay::{relay_transmit, user_decode};
use crate::route::{design_extended, exact_route, design_for_target, Design, RouteKind};

pub use crate::channel::deactivate_antennas;

pub const DELIVERY_TOL: f64 = 1e-6;

const SYMBOL_SALT: u64 = 0x2545_f491_4f6c_dd1d;
const NOISE_SALT: u64 = 0xd6e8_feb8_6659_fd93;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    pub noise_variance: f64,
    pub tol: TolerancePolicy,
    /// Only try this route, without fallback.
    pub route: Option<RouteKind>,
    /// Treat the switch matrix as streams over a `t`-slot extension.
    pub extension: Option<usize>,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            noise_variance: 0.0,
            tol: TolerancePolicy::default(),
            route: None,
            extension: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairResidual {
    pub pair: Pair,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub k: usize,
    pub m: usize,
    pub n: usize,
    pub model: Option<Model>,
    pub d: DataSwitchMatrix,
    pub seed: u64,
    pub noise_variance: f64,
    /// Route label; `None` when no design was built.
    pub route: Option<String>,
    pub fallback: bool,
    pub extension: usize,
    pub pair_residuals: Vec<PairResidual>,
    pub max_residual: f64,
    pub b_condition: f64,
    /// Largest `|ĉ - c|` over the network-coded symbols at the relay.
    pub relay_error: f64,
    /// Largest relative recovery error per user, node order.
    pub user_errors: Vec<f64>,
    pub streams_attempted: usize,
    pub streams_delivered: usize,
    pub dof_per_channel_use: f64,
    /// Whether the requested switch matrix meets a route's conditions as
    /// given, before any channel is drawn.
    pub expected_feasible: bool,
    pub error: Option<String>,
}

impl SimReport {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }

    pub fn max_user_error(&self) -> f64 {
        self.user_errors.iter().copied().fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// [`run_with`] with default route selection.
pub fn run_once(
    cfg: &SystemConfig,
    d: &DataSwitchMatrix,
    model: Option<Model>,
    seed: u64,
    noise_variance: f64,
    tol: &TolerancePolicy,
) -> SimReport {
    let opts = SimOptions {
        noise_variance,
        tol: *tol,
        ..SimOptions::default()
    };
    run_with(cfg, d, model, seed, &opts)
}

/// One seeded run. Construction failures are carried in the report.
pub fn run_with(
    cfg: &SystemConfig,
    d: &DataSwitchMatrix,
    model: Option<Model>,
    seed: u64,
    opts: &SimOptions,
) -> SimReport {
    let mut report = SimReport {
        k: cfg.k,
        m: cfg.m,
        n: cfg.n,
        model,
        d: d.clone(),
        seed,
        noise_variance: opts.noise_variance,
        route: None,
        fallback: false,
        extension: opts.extension.unwrap_or(1),
        pair_residuals: Vec::new(),
        max_residual: 0.0,
        b_condition: f64::INFINITY,
        relay_error: f64::INFINITY,
        user_errors: Vec::new(),
        streams_attempted: d.d_total(),
        streams_delivered: 0,
        dof_per_channel_use: 0.0,
        expected_feasible: expected_feasible(cfg, d, model, opts),
        error: None,
    };
    if let Err(e) = simulate(cfg, d, model, seed, opts, &mut report) {
        report.error = Some(e.to_string());
    }
    report
}

/// Whether the request itself, without fallback, meets a route's conditions.
fn expected_feasible(cfg: &SystemConfig, d: &DataSwitchMatrix, model: Option<Model>, opts: &SimOptions) -> bool {
    if d.k() != cfg.k {
        return false;
    }
    let t = opts.extension.unwrap_or(1).max(1);
    exact_route(d, model, t * cfg.m, t * cfg.n, None)
        .is_some_and(|p| opts.route.is_none_or(|forced| forced == p.kind))
}

fn simulate(
    cfg: &SystemConfig,
    d: &DataSwitchMatrix,
    model: Option<Model>,
    seed: u64,
    opts: &SimOptions,
    report: &mut SimReport,
) -> Result<()> {
    if !(opts.noise_variance >= 0.0 && opts.noise_variance.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "noise variance must be finite and >= 0, got {}",
            opts.noise_variance
        )));
    }
    if d.k() != cfg.k {
        return Err(Error::LengthMismatch {
            what: "switch matrix size".into(),
            got: d.k(),
            expected: cfg.k,
        });
    }
    let tol = &opts.tol;
    let ch = sample_channels(cfg, seed);
    let design = match opts.extension {
        Some(t) if t > 1 => design_extended(&ch, d, model, t, tol)?,
        _ => design_for_target(&ch, d, model, tol, opts.route)?,
    };
    report.route = Some(design.route.clone());
    report.fallback = design.plan.fallback;
    report.extension = design.plan.extension;
    report.streams_attempted = design.plan.streams();
    let work = design.channel();
    report.pair_residuals = design
        .uplink
        .alignment_residuals(work)
        .into_iter()
        .map(|(pair, residual)| PairResidual { pair, residual })
        .collect();
    report.max_residual = report.pair_residuals.iter().map(|r| r.residual).fold(0.0, f64::max);
    report.b_condition = condition_number(&design.uplink.b);

    let outcome = transmit(&design, seed, opts.noise_variance, tol)?;
    report.relay_error = outcome.relay_error;
    report.user_errors = outcome.user_errors;
    report.streams_delivered = outcome.delivered;
    report.dof_per_channel_use = outcome.delivered as f64 / design.plan.extension as f64;
    Ok(())
}

struct Outcome {
    relay_error: f64,
    user_errors: Vec<f64>,
    delivered: usize,
}

fn column(m: ComplexMatrix) -> ComplexVector {
    m.column(0).into_owned()
}

/// Sends one symbol vector per directed pair through both phases.
fn transmit(design: &Design, seed: u64, noise_variance: f64, tol: &TolerancePolicy) -> Result<Outcome> {
    let ch = design.channel();
    let d = &design.plan.d;
    let (k, n, m) = (ch.k(), ch.n(), ch.m());
    let mut sym_rng = ChaCha8Rng::seed_from_u64(seed ^ SYMBOL_SALT);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(seed ^ NOISE_SALT);
    let sigma = noise_variance.sqrt();

    // s[(i, j)]: symbols node i sends to node j
    let mut symbols: BTreeMap<(usize, usize), ComplexVector> = BTreeMap::new();
    for pair in &design.uplink.pair_order {
        let w = d.streams(pair.i, pair.j);
        symbols.insert((pair.i, pair.j), column(complex_gaussian(w, 1, &mut sym_rng)));
        symbols.insert((pair.j, pair.i), column(complex_gaussian(w, 1, &mut sym_rng)));
    }

    let mut y_r = ComplexVector::zeros(n);
    for (&(i, j), s) in &symbols {
        y_r += ch.h(i) * (&design.uplink.precoders[&(i, j)] * s);
    }
    y_r += column(complex_gaussian(n, 1, &mut noise_rng)) * num_complex::Complex64::from(sigma);

    let coded: ComplexVector = {
        let parts: Vec<ComplexVector> = design
            .uplink
            .pair_order
            .iter()
            .map(|p| &symbols[&(p.i, p.j)] + &symbols[&(p.j, p.i)])
            .collect();
        let flat: Vec<_> = parts.iter().flat_map(|v| v.iter().copied()).collect();
        ComplexVector::from_vec(flat)
    };
    let compressed = &design.uplink.p * &y_r;
    let lu = design.uplink.b.clone().lu();
    let estimate = lu.solve(&compressed).ok_or_else(|| Error::RankDeficient {
        what: "effective matrix B".into(),
        rank: 0,
        expected: design.uplink.b.nrows(),
    })?;
    let relay_error = (&estimate - &coded).iter().map(|z| z.norm()).fold(0.0, f64::max);

    let x_r = relay_transmit(&design.bc, &estimate)?;
    let mut user_errors = vec![0.0; k];
    let mut delivered = 0;
    for node in 1..=k {
        let mut y = ch.g(node) * &x_r;
        y += column(complex_gaussian(m, 1, &mut noise_rng)) * num_complex::Complex64::from(sigma);
        let own: BTreeMap<Pair, ComplexVector> = d
            .partners(node)
            .into_iter()
            .map(|j| (Pair::new(node, j), symbols[&(node, j)].clone()))
            .collect();
        if own.is_empty() {
            continue;
        }
        let recovered = user_decode(node, ch, &design.bc, d, &y, &own, tol)?;
        for (pair, est) in recovered {
            let from = pair.partner(node).expect("own pair");
            let truth = &symbols[&(from, node)];
            for (a, b) in est.iter().zip(truth.iter()) {
                let err = (a - b).norm() / b.norm().max(1.0);
                user_errors[node - 1] = f64::max(user_errors[node - 1], err);
                if err < DELIVERY_TOL {
                    delivered += 1;
                }
            }
        }
    }
    Ok(Outcome {
        relay_error,
        user_errors,
        delivered,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

impl Summary {
    /// `None` for an empty sample. NaN values sort last.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(|a, b| a.total_cmp(b));
        let mid = v.len() / 2;
        let median = if v.len().is_multiple_of(2) {
            (v[mid - 1] + v[mid]) / 2.0
        } else {
            v[mid]
        };
        Some(Self {
            min: v[0],
            median,
            max: v[v.len() - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub runs: Vec<SimReport>,
    pub residual: Summary,
    pub relay_error: Summary,
    pub delivered: Summary,
    /// Most common delivered count; ties go to the larger count.
    pub modal_delivered: usize,
    /// Seeds whose delivered count differs from the mode.
    pub deviating_seeds: Vec<u64>,
    pub failed_seeds: Vec<u64>,
}

/// One CSV row per seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRow {
    pub seed: u64,
    pub route: String,
    pub extension: usize,
    pub streams_attempted: usize,
    pub streams_delivered: usize,
    pub dof_per_channel_use: f64,
    pub max_residual: f64,
    pub b_condition: f64,
    pub relay_error: f64,
    pub max_user_error: f64,
    pub error: String,
}

impl BatchReport {
    pub fn rows(&self) -> Vec<SeedRow> {
        self.runs
            .iter()
            .map(|r| SeedRow {
                seed: r.seed,
                route: r.route.clone().unwrap_or_default(),
                extension: r.extension,
                streams_attempted: r.streams_attempted,
                streams_delivered: r.streams_delivered,
                dof_per_channel_use: r.dof_per_channel_use,
                max_residual: r.max_residual,
                b_condition: r.b_condition,
                relay_error: r.relay_error,
                max_user_error: r.max_user_error(),
                error: r.error.clone().unwrap_or_default(),
            })
            .collect()
    }

    /// Seeds that failed although some route was expected to apply.
    pub fn unexpected_failures(&self) -> Vec<u64> {
        self.runs
            .iter()
            .filter(|r| r.failed() && r.expected_feasible)
            .map(|r| r.seed)
            .collect()
    }
}

/// [`run_with`] over every seed in parallel. Results keep seed order.
pub fn run_batch(
    cfg: &SystemConfig,
    d: &DataSwitchMatrix,
    model: Option<Model>,
    seeds: &[u64],
    opts: &SimOptions,
) -> Result<BatchReport> {
    if seeds.is_empty() {
        return Err(Error::InvalidConfig("seed list is empty".into()));
    }
    let runs: Vec<SimReport> = seeds
        .par_iter()
        .map(|&seed| run_with(cfg, d, model, seed, opts))
        .collect();
    let pick = |f: fn(&SimReport) -> f64| -> Summary {
        Summary::of(&runs.iter().map(f).collect::<Vec<_>>()).expect("nonempty")
    };
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for r in &runs {
        *counts.entry(r.streams_delivered).or_default() += 1;
    }
    let modal_delivered = counts
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then(a.0.cmp(b.0)))
        .map(|(&v, _)| v)
        .unwrap_or(0);
    Ok(BatchReport {
        residual: pick(|r| r.max_residual),
        relay_error: pick(|r| r.relay_error),
        delivered: pick(|r| r.streams_delivered as f64),
        modal_delivered,
        deviating_seeds: runs
            .iter()
            .filter(|r| r.streams_delivered != modal_delivered)
            .map(|r| r.seed)
            .collect(),
        failed_seeds: runs.iter().filter(|r| r.failed()).map(|r| r.seed).collect(),
        runs,
    })
}
