//! `gsa-lab`: bounds, achievable DoF, designs and seeded simulations from the
//! command line.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use gsa_core::achievable::{achievable_per_m_exact, model_points, TightRegion};
use gsa_core::bounds::{cutset_bound, PiecewiseBound, Shape};
use gsa_core::channel::ScenarioConfig;
use gsa_core::rational::{parse_exact, to_f64, Rational};
use gsa_core::route::{design_extended, design_for_target, exact_route, RouteKind};
use gsa_core::sim::{run_batch, SimOptions, Summary};
use gsa_core::{sample_channels, DataSwitchMatrix, Model, Pattern, SystemConfig, TolerancePolicy};
use serde::{Deserialize, Serialize};

pub const DOFPLANE_HEADER: &str = "# gsa-lab dofplane v1";

#[derive(Debug, Parser)]
#[command(name = "gsa-lab", version, about = "Signal alignment designs and DoF bounds for MIMO two-way relay networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Piecewise-linear DoF upper bound, as segments or evaluated at (M, N).
    Bounds {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long = "M", alias = "m")]
        m: Option<usize>,
        #[arg(long = "N", alias = "n")]
        n: Option<usize>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Corner points of the achievable region in the (N/M, DoF/M) plane.
    Points {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Achievable DoF next to the upper and cut-set bounds at (M, N).
    Achievable {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long = "M", alias = "m")]
        m: usize,
        #[arg(long = "N", alias = "n")]
        n: usize,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Build one design (P, precoders, B, U) for a seeded channel draw.
    Construct {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, env = "GSA_LAB_SEED")]
        seed: Option<u64>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Run the full uplink/relay/downlink chain over a list of seeds.
    Simulate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// `a..b`, `a..=b` or a comma list; defaults to the single `--seed`.
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long, env = "GSA_LAB_SEED")]
        seed: Option<u64>,
        /// Noise variance per receive antenna.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        /// Writes `<out>.json` (summary) and `<out>.csv` (one row per seed).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Format for stdout when `--out` is absent.
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Upper bound and achievable DoF per M sampled on a ratio grid.
    Dofplane {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long = "ratio-min", default_value = "0.5")]
        ratio_min: String,
        #[arg(long = "ratio-max", default_value = "6")]
        ratio_max: String,
        #[arg(long, default_value_t = 1101)]
        samples: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// y, pairwise or x.
    #[arg(long, value_parser = parse_model)]
    pub model: Model,
    #[arg(long = "K", alias = "k")]
    pub k: usize,
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, Clone, Args)]
pub struct ScenarioArgs {
    /// JSON scenario file; explicit flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// y, pairwise, x or l-cluster.
    #[arg(long, value_parser = parse_pattern)]
    pub model: Option<Pattern>,
    #[arg(long = "K", alias = "k")]
    pub k: Option<usize>,
    #[arg(long = "M", alias = "m")]
    pub m: Option<usize>,
    #[arg(long = "N", alias = "n")]
    pub n: Option<usize>,
    /// Streams per connected pair.
    #[arg(long)]
    pub streams: Option<usize>,
    /// Cluster count for the l-cluster pattern.
    #[arg(long = "L", alias = "l")]
    pub l: Option<usize>,
    /// Only try this route (generic, beta or direct), without fallback.
    #[arg(long, value_parser = parse_route)]
    pub route: Option<RouteKind>,
    /// Symbol extension factor applied to the switch matrix.
    #[arg(long)]
    pub extension: Option<usize>,
    #[arg(long = "tol-rank", default_value_t = 1e-8)]
    pub tol_rank: f64,
    #[arg(long = "tol-residual", default_value_t = 1e-8)]
    pub tol_residual: f64,
}

fn parse_model(s: &str) -> Result<Model, gsa_core::Error> {
    s.parse()
}

fn parse_pattern(s: &str) -> Result<Pattern, gsa_core::Error> {
    s.parse()
}

fn parse_route(s: &str) -> Result<RouteKind, gsa_core::Error> {
    s.parse()
}

/// Scenario after merging the config file with command-line flags.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub scenario: ScenarioConfig,
    pub cfg: SystemConfig,
    pub d: DataSwitchMatrix,
    pub model: Option<Model>,
    pub tol: TolerancePolicy,
}

impl ScenarioArgs {
    pub fn resolve(&self) -> Result<Resolved> {
        let mut sc = match &self.config {
            Some(path) => load_scenario(path)?,
            None => ScenarioConfig {
                k: self.k.context("--K is required without --config")?,
                m: self.m.context("--M is required without --config")?,
                n: self.n.context("--N is required without --config")?,
                pattern: Some(self.model.context("--model is required without --config")?),
                explicit_d: None,
                per_pair_streams: Some(1),
                l: None,
                seed: None,
            },
        };
        if let Some(k) = self.k {
            sc.k = k;
        }
        if let Some(m) = self.m {
            sc.m = m;
        }
        if let Some(n) = self.n {
            sc.n = n;
        }
        if let Some(p) = self.model {
            sc.pattern = Some(p);
            sc.explicit_d = None;
        }
        if let Some(s) = self.streams {
            sc.per_pair_streams = Some(s);
        }
        if let Some(l) = self.l {
            sc.l = Some(l);
        }
        let (cfg, d) = sc.resolve()?;
        let model = match sc.pattern {
            Some(p) => p.model().or_else(|| d.detect_model()),
            None => d.detect_model(),
        };
        let tol = TolerancePolicy::new(self.tol_rank, self.tol_residual)?;
        Ok(Resolved {
            scenario: sc,
            cfg,
            d,
            model,
            tol,
        })
    }
}

pub fn load_scenario(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config file {}", path.display()))?;
    ScenarioConfig::from_json(&text).with_context(|| format!("invalid config file {}", path.display()))
}

/// Parses `a..b`, `a..=b`, a comma list, or a single seed.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let t = text.trim();
    let seeds: Vec<u64> = if let Some((a, b)) = t.split_once("..=") {
        (a.trim().parse()?..=b.trim().parse()?).collect()
    } else if let Some((a, b)) = t.split_once("..") {
        (a.trim().parse()?..b.trim().parse()?).collect()
    } else {
        t.split(',')
            .map(|s| s.trim().parse::<u64>().with_context(|| format!("bad seed '{s}'")))
            .collect::<Result<_>>()?
    };
    if seeds.is_empty() {
        bail!("seed list '{text}' is empty");
    }
    Ok(seeds)
}

fn sink(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(path) => Box::new(BufWriter::new(
            File::create(path).with_context(|| format!("cannot create {}", path.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn emit<T: Serialize>(rows: &[T], output: &OutputArgs) -> Result<()> {
    let mut w = sink(output.out.as_deref())?;
    match output.format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut w, rows)?;
            writeln!(w)?;
        }
        Format::Csv => {
            let mut csv = csv::Writer::from_writer(&mut w);
            for r in rows {
                csv.serialize(r)?;
            }
            csv.flush()?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct SegmentRow {
    start: f64,
    end: Option<f64>,
    shape: &'static str,
    coefficient: f64,
    start_exact: String,
    end_exact: String,
    coefficient_exact: String,
}

#[derive(Debug, Serialize)]
struct BoundRow {
    model: String,
    k: usize,
    m: usize,
    n: usize,
    upper: f64,
    cutset: f64,
}

#[derive(Debug, Serialize)]
struct PointRow {
    ratio: f64,
    dof_per_m: f64,
    ratio_exact: String,
    dof_per_m_exact: String,
}

#[derive(Debug, Serialize)]
struct AchievableRow {
    model: String,
    k: usize,
    m: usize,
    n: usize,
    achievable: f64,
    upper: f64,
    cutset: f64,
    tight: bool,
}

/// One sample of the DoF plane. Floats carry at most 12 significant digits,
/// so a CSV written from these rows parses back to identical values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DofPlaneRow {
    pub ratio: f64,
    pub upper_dof_per_m: f64,
    pub achievable_dof_per_m: f64,
    pub tight_flag: bool,
}

/// Rounds to 12 significant digits.
pub fn round12(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.11e}").parse().expect("formatted float parses")
}

/// Samples `samples` evenly spaced ratios in `[lo, hi]`. The grid and the
/// tightness test are exact.
pub fn dofplane(model: Model, k: usize, lo: Rational, hi: Rational, samples: usize) -> Result<Vec<DofPlaneRow>> {
    if samples < 2 {
        bail!("--samples must be at least 2, got {samples}");
    }
    if !(lo > Rational::from_integer(0) && hi > lo) {
        bail!("ratio range must satisfy 0 < ratio-min < ratio-max, got [{lo}, {hi}]");
    }
    let bound = PiecewiseBound::for_model(model, k)?;
    let points = model_points(model, k)?;
    let steps = Rational::from_integer(samples as i128 - 1);
    Ok((0..samples)
        .map(|i| {
            let r = lo + (hi - lo) * Rational::from_integer(i as i128) / steps;
            let upper = bound.per_m_exact(r);
            let ach = achievable_per_m_exact(&points, r);
            DofPlaneRow {
                ratio: round12(to_f64(r)),
                upper_dof_per_m: round12(to_f64(upper)),
                achievable_dof_per_m: round12(to_f64(ach)),
                tight_flag: upper == ach,
            }
        })
        .collect())
}

#[derive(Debug, Serialize)]
struct ConstructOutput<'a> {
    scenario: &'a ScenarioConfig,
    seed: u64,
    expected_feasible: bool,
    b_condition: f64,
    max_leakage: f64,
    design: &'a gsa_core::route::Design,
}

/// Summary written next to the per-seed CSV.
#[derive(Debug, Serialize)]
pub struct SimulateSummary {
    pub scenario: ScenarioConfig,
    pub seeds: Vec<u64>,
    pub noise_variance: f64,
    pub route: Option<String>,
    pub extension: Option<usize>,
    pub expected_feasible: bool,
    pub routes_used: Vec<String>,
    pub max_residual: Summary,
    pub relay_error: Summary,
    pub delivered: Summary,
    pub modal_delivered: usize,
    pub modal_dof_per_channel_use: f64,
    pub deviating_seeds: Vec<u64>,
    pub failed_seeds: Vec<u64>,
    pub unexpected_failures: Vec<u64>,
}

pub fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Bounds { model, m, n, output } => {
            let bound = PiecewiseBound::for_model(model.model, model.k)?;
            match (m, n) {
                (Some(m), Some(n)) => {
                    let row = BoundRow {
                        model: model.model.to_string(),
                        k: model.k,
                        m,
                        n,
                        upper: bound.evaluate(m as f64, n as f64),
                        cutset: cutset_bound(model.k, m as f64, n as f64),
                    };
                    emit(&[row], &output)?;
                }
                (None, None) => {
                    let rows: Vec<SegmentRow> = bound
                        .segments()
                        .iter()
                        .map(|s| {
                            let (shape, c) = match s.shape {
                                Shape::Flat(c) => ("flat", c),
                                Shape::Proportional(c) => ("proportional", c),
                            };
                            SegmentRow {
                                start: to_f64(s.start),
                                end: s.end.map(to_f64),
                                shape,
                                coefficient: to_f64(c),
                                start_exact: s.start.to_string(),
                                end_exact: s.end.map(|e| e.to_string()).unwrap_or_else(|| "inf".into()),
                                coefficient_exact: c.to_string(),
                            }
                        })
                        .collect();
                    emit(&rows, &output)?;
                }
                _ => bail!("give both --M and --N, or neither"),
            }
        }
        Command::Points { model, output } => {
            let rows: Vec<PointRow> = model_points(model.model, model.k)?
                .iter()
                .map(|p| PointRow {
                    ratio: p.ratio_f64(),
                    dof_per_m: p.dof_per_m_f64(),
                    ratio_exact: p.ratio.to_string(),
                    dof_per_m_exact: p.dof_per_m.to_string(),
                })
                .collect();
            emit(&rows, &output)?;
        }
        Command::Achievable { model, m, n, output } => {
            if m == 0 || n == 0 {
                bail!("--M and --N must be positive");
            }
            let points = model_points(model.model, model.k)?;
            let bound = PiecewiseBound::for_model(model.model, model.k)?;
            let r = Rational::new(n as i128, m as i128);
            let ach = achievable_per_m_exact(&points, r);
            let upper = bound.per_m_exact(r);
            let scale = Rational::from_integer(m as i128);
            let row = AchievableRow {
                model: model.model.to_string(),
                k: model.k,
                m,
                n,
                achievable: to_f64(ach * scale),
                upper: to_f64(upper * scale),
                cutset: cutset_bound(model.k, m as f64, n as f64),
                tight: ach == upper,
            };
            emit(&[row], &output)?;
        }
        Command::Construct { scenario, seed, output } => {
            let res = scenario.resolve()?;
            let seed = seed.or(res.scenario.seed).unwrap_or(0);
            let ch = sample_channels(&res.cfg, seed);
            let design = match scenario.extension {
                Some(t) if scenario.route.is_none() => design_extended(&ch, &res.d, res.model, t, &res.tol)?,
                Some(_) => bail!("--extension and --route cannot be combined"),
                None => design_for_target(&ch, &res.d, res.model, &res.tol, scenario.route)?,
            };
            let out = ConstructOutput {
                scenario: &res.scenario,
                seed,
                expected_feasible: exact_route(&res.d, res.model, res.cfg.m, res.cfg.n, scenario.route).is_some(),
                b_condition: gsa_core::linalg::condition_number(&design.uplink.b),
                max_leakage: design.bc.max_leakage(design.channel()),
                design: &design,
            };
            if output.format == Format::Csv {
                bail!("construct writes JSON only");
            }
            let mut w = sink(output.out.as_deref())?;
            serde_json::to_writer_pretty(&mut w, &out)?;
            writeln!(w)?;
            w.flush()?;
        }
        Command::Simulate {
            scenario,
            seeds,
            seed,
            noise,
            out,
            format,
        } => {
            if !(noise >= 0.0 && noise.is_finite()) {
                bail!("--noise must be a finite non-negative variance, got {noise}");
            }
            let res = scenario.resolve()?;
            let seeds = match seeds {
                Some(s) => parse_seeds(&s)?,
                None => vec![seed.or(res.scenario.seed).unwrap_or(0)],
            };
            let opts = SimOptions {
                noise_variance: noise,
                tol: res.tol,
                route: scenario.route,
                extension: scenario.extension,
            };
            let batch = run_batch(&res.cfg, &res.d, res.model, &seeds, &opts)?;
            let unexpected = batch.unexpected_failures();
            let mut routes_used: Vec<String> = batch.runs.iter().filter_map(|r| r.route.clone()).collect();
            routes_used.sort();
            routes_used.dedup();
            let modal_dof = batch
                .runs
                .iter()
                .find(|r| r.streams_delivered == batch.modal_delivered)
                .map_or(0.0, |r| r.dof_per_channel_use);
            let summary = SimulateSummary {
                scenario: res.scenario.clone(),
                seeds: seeds.clone(),
                noise_variance: noise,
                route: scenario.route.map(|r| r.to_string()),
                extension: scenario.extension,
                expected_feasible: batch.runs.first().is_some_and(|r| r.expected_feasible),
                routes_used,
                max_residual: batch.residual,
                relay_error: batch.relay_error,
                delivered: batch.delivered,
                modal_delivered: batch.modal_delivered,
                modal_dof_per_channel_use: modal_dof,
                deviating_seeds: batch.deviating_seeds.clone(),
                failed_seeds: batch.failed_seeds.clone(),
                unexpected_failures: unexpected.clone(),
            };
            let rows = batch.rows();
            match out {
                Some(prefix) => {
                    let json_path = prefix.with_extension("json");
                    let csv_path = prefix.with_extension("csv");
                    let mut w = sink(Some(&json_path))?;
                    serde_json::to_writer_pretty(&mut w, &summary)?;
                    writeln!(w)?;
                    w.flush()?;
                    emit(
                        &rows,
                        &OutputArgs {
                            out: Some(csv_path),
                            format: Format::Csv,
                        },
                    )?;
                }
                None => match format {
                    Format::Json => {
                        let mut w = sink(None)?;
                        serde_json::to_writer_pretty(&mut w, &summary)?;
                        writeln!(w)?;
                        w.flush()?;
                    }
                    Format::Csv => emit(&rows, &OutputArgs { out: None, format })?,
                },
            }
            eprintln!(
                "{} seeds, modal delivered {} streams ({} per channel use), {} failed, {} unexpected",
                seeds.len(),
                batch.modal_delivered,
                modal_dof,
                batch.failed_seeds.len(),
                unexpected.len()
            );
            let forced_failure = scenario.route.is_some() && !batch.failed_seeds.is_empty();
            if !unexpected.is_empty() || forced_failure {
                return Ok(ExitCode::from(1));
            }
        }
        Command::Dofplane {
            model,
            ratio_min,
            ratio_max,
            samples,
            out,
            format,
        } => {
            let lo = parse_exact(&ratio_min).with_context(|| format!("bad --ratio-min '{ratio_min}'"))?;
            let hi = parse_exact(&ratio_max).with_context(|| format!("bad --ratio-max '{ratio_max}'"))?;
            let rows = dofplane(model.model, model.k, lo, hi, samples)?;
            match format {
                Format::Json => emit(&rows, &OutputArgs { out, format })?,
                Format::Csv => {
                    let mut w = sink(out.as_deref())?;
                    let region = TightRegion::for_model(model.model, model.k)?;
                    writeln!(
                        w,
                        "{DOFPLANE_HEADER} model={} K={} samples={samples} tight=(0,{}]U[{},inf)",
                        model.model, model.k, region.low_end, region.high_start
                    )?;
                    let mut csv = csv::Writer::from_writer(&mut w);
                    for r in &rows {
                        csv.serialize(r)?;
                    }
                    csv.flush()?;
                    drop(csv);
                    w.flush()?;
                }
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

/// Reads a dofplane CSV back, skipping the header comment.
pub fn read_dofplane(path: &Path) -> Result<Vec<DofPlaneRow>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    Ok(rdr.deserialize().collect::<std::result::Result<_, _>>()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use gsa_core::rational::ratio;

    #[test]
    fn seed_lists() {
        assert_eq!(parse_seeds("0..3").unwrap(), vec![0, 1, 2]);
        assert_eq!(parse_seeds("2..=4").unwrap(), vec![2, 3, 4]);
        assert_eq!(parse_seeds("7, 9,11").unwrap(), vec![7, 9, 11]);
        assert_eq!(parse_seeds("5").unwrap(), vec![5]);
        assert!(parse_seeds("3..3").is_err());
        assert!(parse_seeds("x").is_err());
    }

    #[test]
    fn round12_keeps_twelve_digits() {
        assert_eq!(round12(1.0 / 3.0), 0.333333333333);
        assert_eq!(round12(2.2), 2.2);
        assert_eq!(round12(0.0), 0.0);
        let x = round12(std::f64::consts::PI * 1e5);
        assert_eq!(x.to_string().parse::<f64>().unwrap(), x);
    }

    #[test]
    fn dofplane_rejects_bad_grids() {
        assert!(dofplane(Model::Y, 5, ratio(1, 2), ratio(6, 1), 1).is_err());
        assert!(dofplane(Model::Y, 5, ratio(6, 1), ratio(1, 2), 5).is_err());
        assert!(dofplane(Model::Y, 3, ratio(1, 2), ratio(6, 1), 5).is_err());
    }
}
