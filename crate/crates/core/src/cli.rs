// Copyright 2026 The bangoff Contributors
// SPDX-License-Identifier: Apache-2.0

//! The `bangoff` command-line driver.
//!
//! Every run writes `<command>-<hash>.summary.json` plus CSV (and, with
//! `--svg`, SVG) files named `<command>-<hash>.<name>.<ext>` into `--out`.
//! `<hash>` is the SHA-256 prefix of the resolved configuration, which
//! excludes `--out`, `--svg` and `--threads` since they do not change any
//! result.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::analysis::{
    cluster_minima, distance_distribution, landscape, loglog_slope, robustness, robustness_csv, Axis, Constraint,
    LandscapeGrid, LandscapeSpec, LandscapeValue, PerturbationMode, DEFAULT_LANDSCAPE_CAP,
};
use crate::controls::{random_durations, BangOffControl, BangOffType, Control, PiecewiseControl};
use crate::model::{ControlSystem, SystemFile};
use crate::objective::{evaluate, BangOffEvaluator};
use crate::optimize::{
    crab_optimize, multi_start, one_flip_sd, polish, quasi_newton_with, sd_durations_with, traces_csv, CrabConfig,
    FlipConfig, OptimizationResult, QuasiNewtonConfig, ResultRecord, SdConfig,
};
use crate::qsl::{
    critical_time, estimate_qsl, fidelity_vs_t, sweep_csv, CriticalTimeConfig, QslConfig, SearchConfig, Searcher,
    DEFAULT_CRITICAL_EPSILON,
};
use crate::rng::stream;
use crate::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_RESOURCE: i32 = 2;
pub const EXIT_NO_CONVERGENCE: i32 = 3;

/// Characters of the hex config hash used in file names.
const HASH_LEN: usize = 16;

#[derive(Debug, Parser)]
#[command(name = "bangoff", version, about = "Quantum speed limits and bang-off controls")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// System definition file (TOML).
    #[arg(long)]
    pub system: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Also render SVG plots.
    #[arg(long)]
    pub svg: bool,
    /// Worker threads (default: machine parallelism).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Stochastic descent over the durations of one type.
    Sd,
    /// Stochastic descent followed by a quasi-Newton polish.
    SdQn,
    /// Quasi-Newton from a random point of the simplex.
    Qn,
    /// 1-flip descent over second-class slot values.
    Flip,
    /// CRAB Fourier pulses.
    Crab,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ValueKind {
    Fidelity,
    Log10Bures,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ModeArg {
    Durations,
    Bound,
    Both,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fidelity and Bures distance of one control.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Bang-off type word, e.g. `P0N`.
        #[arg(long = "type", requires = "durations", conflicts_with = "values")]
        kind: Option<String>,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        durations: Option<Vec<f64>>,
        /// Second-class slot values (needs `--T`).
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        values: Option<Vec<f64>>,
        #[arg(long = "T")]
        total: Option<f64>,
    },
    /// Multi-start optimisation at fixed `T`.
    Optimize {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = Method::SdQn)]
        method: Method,
        /// Bang-off type word (sd, sd-qn, qn).
        #[arg(long = "type")]
        kind: Option<String>,
        #[arg(long = "T")]
        total: f64,
        /// Starts (CRAB: restarts).
        #[arg(long, default_value_t = 20)]
        points: usize,
        /// Iterations per start (CRAB: objective evaluations).
        #[arg(long, default_value_t = 10_000)]
        iters: usize,
        /// Time slots for `flip`.
        #[arg(long, default_value_t = 40)]
        slots: usize,
        /// Frequency cutoff for `crab`.
        #[arg(long, default_value_t = 5)]
        cutoff: usize,
    },
    /// Quantum speed limit estimate.
    Qsl {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1e-9)]
        delta: f64,
        /// Largest switch count searched.
        #[arg(long = "Ns", default_value_t = 5)]
        ns: usize,
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
        /// SD starts per type and probe.
        #[arg(long, default_value_t = 20)]
        points: usize,
        #[arg(long, default_value_t = 4000)]
        iters: usize,
    },
    /// Critical time below which one switch does not help.
    Tc {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = DEFAULT_CRITICAL_EPSILON)]
        epsilon: f64,
        #[arg(long, default_value_t = 0.5)]
        lo: f64,
        #[arg(long, default_value_t = 1.0)]
        hi: f64,
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
        #[arg(long, default_value_t = 20)]
        points: usize,
        #[arg(long, default_value_t = 4000)]
        iters: usize,
    },
    /// Best fidelity at a fixed switch count over a grid of `T`.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long = "Ns", default_value_t = 1)]
        ns: usize,
        #[arg(long)]
        from: f64,
        #[arg(long)]
        to: f64,
        /// Grid points.
        #[arg(long, default_value_t = 21)]
        points: usize,
        #[arg(long, default_value_t = 20)]
        starts: usize,
        #[arg(long, default_value_t = 4000)]
        iters: usize,
    },
    /// Fidelity landscape over the first two durations.
    Landscape {
        #[command(flatten)]
        common: Common,
        #[arg(long = "type")]
        kind: String,
        /// Fixed total for three-segment types; omit for two-segment types.
        #[arg(long = "T")]
        total: Option<f64>,
        /// Axis maximum (default: `T`, or 2 without `--T`).
        #[arg(long)]
        tmax: Option<f64>,
        /// Points per axis.
        #[arg(long, default_value_t = 101)]
        points: usize,
        #[arg(long, value_enum, default_value_t = ValueKind::Log10Bures)]
        value: ValueKind,
    },
    /// Sensitivity of a perfect-fidelity control to noise.
    Robustness {
        #[command(flatten)]
        common: Common,
        #[arg(long = "type")]
        kind: String,
        /// Nominal durations; without them the type is optimised at `--T`.
        #[arg(long, value_delimiter = ',')]
        durations: Option<Vec<f64>>,
        #[arg(long = "T")]
        total: Option<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = [1e-3, 3e-3, 1e-2, 3e-2, 1e-1])]
        sigmas: Vec<f64>,
        /// Samples per scale.
        #[arg(long, default_value_t = 10_000)]
        points: usize,
        #[arg(long, value_enum, default_value_t = ModeArg::Both)]
        mode: ModeArg,
    },
    /// Pairwise distances of a 1-flip ensemble.
    Distances {
        #[command(flatten)]
        common: Common,
        #[arg(long = "T")]
        total: f64,
        #[arg(long, default_value_t = 40)]
        slots: usize,
        /// Runs.
        #[arg(long, default_value_t = 1000)]
        points: usize,
        #[arg(long, default_value_t = 10_000)]
        iters: usize,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Evaluate { .. } => "evaluate",
            Command::Optimize { .. } => "optimize",
            Command::Qsl { .. } => "qsl",
            Command::Tc { .. } => "tc",
            Command::Sweep { .. } => "sweep",
            Command::Landscape { .. } => "landscape",
            Command::Robustness { .. } => "robustness",
            Command::Distances { .. } => "distances",
        }
    }

    pub fn common(&self) -> &Common {
        match self {
            Command::Evaluate { common, .. }
            | Command::Optimize { common, .. }
            | Command::Qsl { common, .. }
            | Command::Tc { common, .. }
            | Command::Sweep { common, .. }
            | Command::Landscape { common, .. }
            | Command::Robustness { common, .. }
            | Command::Distances { common, .. } => common,
        }
    }
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::ResourceLimit(_) => EXIT_RESOURCE,
        Error::Bracketing(_) | Error::NumericalFailure(_) => EXIT_NO_CONVERGENCE,
        _ => EXIT_INVALID,
    }
}

/// What a run produced.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub config_hash: String,
    pub summary: PathBuf,
    pub files: Vec<PathBuf>,
    pub converged: bool,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.converged {
            EXIT_OK
        } else {
            EXIT_NO_CONVERGENCE
        }
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return EXIT_OK;
            }
            let msg = e.to_string();
            eprintln!("error: {}", first_line(&msg));
            return EXIT_INVALID;
        }
    };
    match run(&cli.command) {
        Ok(outcome) => {
            println!("{}", outcome.summary.display());
            outcome.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn first_line(msg: &str) -> &str {
    let msg = msg.trim_start_matches("error: ");
    msg.lines().next().unwrap_or("").trim()
}

pub fn run(command: &Command) -> Result<RunOutcome> {
    let common = command.common();
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(Error::invalid("--threads must be at least 1"));
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::ResourceLimit(format!("cannot build thread pool: {e}")))?;
        return pool.install(|| run_inner(command));
    }
    run_inner(command)
}

fn run_inner(command: &Command) -> Result<RunOutcome> {
    let common = command.common();
    let text = fs::read_to_string(&common.system)
        .map_err(|e| Error::invalid(format!("cannot read {}: {e}", common.system.display())))?;
    let file = SystemFile::parse(&text)?;
    let sys = file.build()?;
    let (params, output) = execute(command, &sys)?;
    let config = json!({
        "command": command.name(),
        "system": file,
        "seed": common.seed,
        "params": params,
    });
    let hash = config_hash(&config);
    let mut writer = Writer::new(&common.out, command.name(), &hash)?;
    for (name, body) in &output.csv {
        writer.write(name, "csv", body)?;
    }
    if common.svg {
        for (name, body) in &output.svg {
            writer.write(name, "svg", body)?;
        }
    }
    let summary = json!({
        "command": command.name(),
        "config_hash": hash,
        "version": env!("CARGO_PKG_VERSION"),
        "config": config,
        "converged": output.converged,
        "files": writer.names(),
        "result": output.result,
    });
    let mut body = serde_json::to_string_pretty(&summary).map_err(|e| Error::invalid(e.to_string()))?;
    body.push('\n');
    let path = writer.write("summary", "json", &body)?;
    Ok(RunOutcome {
        config_hash: hash,
        summary: path,
        files: writer.files,
        converged: output.converged,
    })
}

/// Hex SHA-256 prefix of the canonical JSON form of `config`.
pub fn config_hash(config: &Value) -> String {
    let bytes = serde_json::to_vec(config).expect("JSON values serialise");
    let digest = Sha256::digest(&bytes);
    let mut hex = String::with_capacity(64);
    for b in digest {
        write!(hex, "{b:02x}").unwrap();
    }
    hex.truncate(HASH_LEN);
    hex
}

struct Writer {
    dir: PathBuf,
    prefix: String,
    files: Vec<PathBuf>,
}

impl Writer {
    fn new(dir: &Path, command: &str, hash: &str) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            prefix: format!("{command}-{hash}"),
            files: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, ext: &str, body: &str) -> Result<PathBuf> {
        let path = self.dir.join(format!("{}.{name}.{ext}", self.prefix));
        fs::write(&path, body)?;
        self.files.push(path.clone());
        Ok(path)
    }

    fn names(&self) -> Vec<String> {
        self.files
            .iter()
            .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .collect()
    }
}

#[derive(Default)]
struct Output {
    result: Value,
    csv: Vec<(String, String)>,
    svg: Vec<(String, String)>,
    converged: bool,
}

fn to_json<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("result types serialise")
}

fn parse_type(word: &str) -> Result<BangOffType> {
    word.parse()
}

fn execute(command: &Command, sys: &ControlSystem) -> Result<(Value, Output)> {
    let seed = command.common().seed;
    match command {
        Command::Evaluate {
            kind,
            durations,
            values,
            total,
            ..
        } => {
            let control: Control = match (kind, durations, values) {
                (Some(k), Some(d), None) => BangOffControl::new(parse_type(k)?, d.clone(), sys.bound())?.into(),
                (None, None, Some(v)) => {
                    let t = total.ok_or_else(|| Error::invalid("--values needs --T"))?;
                    if !(t > 0.0) {
                        return Err(Error::invalid("--T must be positive"));
                    }
                    PiecewiseControl::new(v.clone(), t / v.len() as f64, sys.bound())?.into()
                }
                _ => return Err(Error::invalid("evaluate needs --type with --durations, or --values with --T")),
            };
            let t = control.total();
            let report = evaluate(sys, &control, t)?;
            let mut out = Output {
                result: json!({ "control": to_json(&control), "evaluation": to_json(&report) }),
                converged: true,
                ..Output::default()
            };
            if t > 0.0 {
                let pw = control.to_piecewise(400)?;
                out.csv.push(("control".into(), pw.to_csv()));
                out.svg.push(("control".into(), step_plot_svg(&pw)));
            }
            Ok((json!({ "type": kind, "durations": durations, "values": values, "T": total }), out))
        }
        Command::Optimize {
            method,
            kind,
            total,
            points,
            iters,
            slots,
            cutoff,
            ..
        } => {
            let params = json!({
                "method": method, "type": kind, "T": total, "points": points,
                "iters": iters, "slots": slots, "cutoff": cutoff,
            });
            if *points == 0 || *iters == 0 {
                return Err(Error::invalid("--points and --iters must be at least 1"));
            }
            let out = run_optimize(sys, *method, kind.as_deref(), *total, *points, *iters, *slots, *cutoff, seed)?;
            Ok((params, out))
        }
        Command::Qsl {
            delta,
            ns,
            tol,
            points,
            iters,
            ..
        } => {
            let config = QslConfig {
                delta: *delta,
                ns_max: *ns,
                tol: *tol,
                search: search_config(*points, *iters, seed),
                ..QslConfig::default()
            };
            config.search.validate()?;
            let report = estimate_qsl(sys, &config)?;
            let mut csv = String::from("Ns,T_min,witness_type,witness_durations\n");
            for (n, t) in &report.t_min_by_ns {
                let w = report.witnesses.get(n);
                csv.push_str(&format!(
                    "{},{},{},{}\n",
                    n,
                    t.map(|x| x.to_string()).unwrap_or_default(),
                    w.map(|w| w.kind.to_string()).unwrap_or_default(),
                    w.map(|w| join(&w.durations, ";")).unwrap_or_default(),
                ));
            }
            let mut out = Output {
                converged: report.converged,
                csv: vec![("tmin".into(), csv)],
                ..Output::default()
            };
            if let (Some(t), Some(n)) = (report.qsl_estimate, report.ns_star) {
                if let Some(w) = report.witnesses.get(&n) {
                    let pw = w.control(sys.bound())?.to_piecewise(400)?;
                    debug_assert!(t > 0.0);
                    out.csv.push(("witness".into(), pw.to_csv()));
                    out.svg.push(("witness".into(), step_plot_svg(&pw)));
                }
            }
            out.result = to_json(&report);
            Ok((to_json(&config), out))
        }
        Command::Tc {
            epsilon,
            lo,
            hi,
            tol,
            points,
            iters,
            ..
        } => {
            let config = CriticalTimeConfig {
                epsilon: *epsilon,
                bracket: (*lo, *hi),
                tol: *tol,
                search: search_config(*points, *iters, seed),
            };
            config.search.validate()?;
            let report = critical_time(sys, &config)?;
            Ok((
                to_json(&config),
                Output {
                    result: to_json(&report),
                    converged: true,
                    ..Output::default()
                },
            ))
        }
        Command::Sweep {
            ns,
            from,
            to,
            points,
            starts,
            iters,
            ..
        } => {
            if *points < 2 || !(from < to) {
                return Err(Error::invalid("sweep needs --from < --to and at least two points"));
            }
            let grid: Vec<f64> = (0..*points)
                .map(|k| from + (to - from) * k as f64 / (*points - 1) as f64)
                .collect();
            let search = search_config(*starts, *iters, seed);
            search.validate()?;
            let pts = fidelity_vs_t(sys, *ns, &grid, &search)?;
            let params = json!({ "Ns": ns, "grid": grid, "search": to_json(&search) });
            Ok((
                params,
                Output {
                    result: json!({ "points": pts.len() }),
                    csv: vec![("sweep".into(), sweep_csv(&pts))],
                    converged: true,
                    ..Output::default()
                },
            ))
        }
        Command::Landscape {
            kind,
            total,
            tmax,
            points,
            value,
            ..
        } => {
            let k = parse_type(kind)?;
            let (constraint, default_max) = match total {
                Some(t) => (Constraint::FixedTotal { total: *t }, *t),
                None => (Constraint::FreeTotal, 2.0),
            };
            let max = tmax.unwrap_or(default_max);
            let axis = Axis::new(0.0, max, *points)?;
            let spec = LandscapeSpec {
                axis1: axis,
                axis2: axis,
                constraint,
                value: match value {
                    ValueKind::Fidelity => LandscapeValue::Fidelity,
                    ValueKind::Log10Bures => LandscapeValue::Log10Bures,
                },
            };
            let grid = landscape(sys, &k, &spec, DEFAULT_LANDSCAPE_CAP)?;
            let mut minima = String::from("t1,t2,value\n");
            let extrema = grid.local_extrema();
            for &(i, j, v) in &extrema {
                minima.push_str(&format!("{},{},{}\n", axis.value(i), axis.value(j), v));
            }
            let out = Output {
                result: json!({ "type": k, "cells": grid.values.len(), "local_extrema": extrema.len() }),
                csv: vec![("landscape".into(), grid.to_csv()), ("extrema".into(), minima)],
                svg: vec![("landscape".into(), heatmap_svg(&grid))],
                converged: true,
            };
            Ok((to_json(&spec), out))
        }
        Command::Robustness {
            kind,
            durations,
            total,
            sigmas,
            points,
            mode,
            ..
        } => {
            let k = parse_type(kind)?;
            let nominal = match (durations, total) {
                (Some(d), _) => BangOffControl::new(k, d.clone(), sys.bound())?,
                (None, Some(t)) => {
                    let searcher = Searcher::new(sys, SearchConfig { seed, ..SearchConfig::default() })?;
                    searcher.optimize_type(&k, *t)?.control(sys.bound())?
                }
                (None, None) => return Err(Error::invalid("robustness needs --durations or --T")),
            };
            let modes: &[PerturbationMode] = match mode {
                ModeArg::Durations => &[PerturbationMode::Durations],
                ModeArg::Bound => &[PerturbationMode::Bound],
                ModeArg::Both => &[PerturbationMode::Durations, PerturbationMode::Bound],
            };
            let mut stats = Vec::new();
            let mut slopes = serde_json::Map::new();
            for &m in modes {
                let s = robustness(sys, &nominal, m, sigmas, *points, seed)?;
                let pairs: Vec<(f64, f64)> = s.iter().map(|x| (x.sigma, x.mean_error)).collect();
                slopes.insert(m.to_string(), loglog_slope(&pairs).ok().into());
                stats.extend(s);
            }
            let params = json!({
                "type": kind, "durations": nominal.durations(), "sigmas": sigmas,
                "samples": points, "mode": mode,
            });
            Ok((
                params,
                Output {
                    result: json!({ "stats": to_json(&stats), "loglog_slope": slopes }),
                    csv: vec![("robustness".into(), robustness_csv(&stats))],
                    converged: true,
                    ..Output::default()
                },
            ))
        }
        Command::Distances {
            total,
            slots,
            points,
            iters,
            ..
        } => {
            if *points < 2 {
                return Err(Error::invalid("distances needs at least two runs"));
            }
            let runs = multi_start(*points, seed, |_, s| {
                one_flip_sd(sys, *total, *slots, &FlipConfig { iterations: *iters, seed: s })
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
            let controls: Vec<PiecewiseControl> = runs
                .iter()
                .map(|r| r.best_control.to_piecewise(*slots))
                .collect::<Result<_>>()?;
            let dist = distance_distribution(&controls)?;
            let best = best_of(&runs);
            let best_pw = best.best_control.to_piecewise(*slots)?;
            let mut hist = String::from("lo,hi,count\n");
            for (b, c) in dist.histogram.counts.iter().enumerate() {
                hist.push_str(&format!("{},{},{}\n", dist.histogram.edges[b], dist.histogram.edges[b + 1], c));
            }
            let params = json!({ "T": total, "slots": slots, "runs": points, "iters": iters });
            Ok((
                params,
                Output {
                    result: json!({
                        "best": to_json(&ResultRecord::from(best)),
                        "peaks": dist.peaks,
                        "pairs": dist.pairs.len(),
                    }),
                    csv: vec![
                        ("distances".into(), dist.to_csv()),
                        ("histogram".into(), hist),
                        ("results".into(), results_csv(&runs)),
                        ("best".into(), best_pw.to_csv()),
                    ],
                    svg: vec![("best".into(), step_plot_svg(&best_pw))],
                    converged: runs.iter().any(|r| r.converged),
                },
            ))
        }
    }
}

fn search_config(starts: usize, iters: usize, seed: u64) -> SearchConfig {
    SearchConfig {
        starts,
        sd: SdConfig::default().with_iterations(iters),
        seed,
        ..SearchConfig::default()
    }
}

fn best_of(runs: &[OptimizationResult]) -> &OptimizationResult {
    runs.iter()
        .reduce(|b, r| if r.best_infidelity < b.best_infidelity { r } else { b })
        .expect("at least one run")
}

fn join(xs: &[f64], sep: &str) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(sep)
}

/// One row per start: `point_id,type,durations,fidelity,infidelity,d_B,seed,converged`.
fn results_csv(runs: &[OptimizationResult]) -> String {
    let mut out = String::from("point_id,type,durations,fidelity,infidelity,d_B,seed,converged\n");
    for (i, r) in runs.iter().enumerate() {
        let rec = ResultRecord::from(r);
        let params = rec.durations.as_deref().or(rec.values.as_deref()).unwrap_or(&[]);
        out.push_str(&format!(
            "{},{},{},{},{:e},{:e},{},{}\n",
            i,
            rec.kind.as_deref().unwrap_or(""),
            join(params, ";"),
            rec.fidelity,
            rec.infidelity,
            rec.bures,
            rec.seed,
            rec.converged_flag
        ));
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn run_optimize(
    sys: &ControlSystem,
    method: Method,
    kind: Option<&str>,
    total: f64,
    points: usize,
    iters: usize,
    slots: usize,
    cutoff: usize,
    seed: u64,
) -> Result<Output> {
    let runs: Vec<OptimizationResult> = match method {
        Method::Sd | Method::SdQn | Method::Qn => {
            let k = parse_type(kind.ok_or_else(|| Error::invalid("--type is required for this method"))?)?;
            let ev = BangOffEvaluator::new(sys)?;
            let qn = QuasiNewtonConfig::default();
            multi_start(points, seed, |_, s| {
                let sd_cfg = SdConfig::default().with_iterations(iters).with_seed(s);
                match method {
                    Method::Sd => sd_durations_with(&ev, &k, total, None, &sd_cfg),
                    Method::SdQn => polish(&ev, &k, total, sd_durations_with(&ev, &k, total, None, &sd_cfg)?),
                    _ => {
                        if !(total.is_finite() && total > 0.0) {
                            return Err(Error::invalid("--T must be positive"));
                        }
                        let start = random_durations(k.len(), total, &mut stream(s));
                        let mut r = quasi_newton_with(&ev, &k, total, &start, &QuasiNewtonConfig { max_iterations: iters, ..qn })?;
                        r.seed = s;
                        Ok(r)
                    }
                }
            })
            .into_iter()
            .collect::<Result<_>>()?
        }
        Method::Flip => multi_start(points, seed, |_, s| {
            one_flip_sd(sys, total, slots, &FlipConfig { iterations: iters, seed: s })
        })
        .into_iter()
        .collect::<Result<_>>()?,
        Method::Crab => vec![crab_optimize(
            sys,
            total,
            &CrabConfig {
                cutoff,
                restarts: points,
                evaluations: iters,
                seed,
                ..CrabConfig::default()
            },
        )?],
    };
    let best = best_of(&runs);
    let mut out = Output {
        converged: runs.iter().any(|r| r.converged),
        ..Output::default()
    };
    let mut result = json!({ "best": to_json(&ResultRecord::from(best)), "runs": runs.len() });
    if let Some(b) = best.bangoff() {
        let points: Vec<(Vec<f64>, f64)> = runs
            .iter()
            .filter_map(|r| r.bangoff().map(|c| (c.durations().to_vec(), r.best_infidelity)))
            .collect();
        let clusters = cluster_minima(&points, 1e-3 * total);
        let mut csv = String::from("minimum,count,durations,infidelity,log10_d_B\n");
        for (i, c) in clusters.iter().enumerate() {
            csv.push_str(&format!(
                "{},{},{},{:e},{}\n",
                i,
                c.count,
                join(&c.durations, ";"),
                c.infidelity,
                c.log10_bures
            ));
        }
        out.csv.push(("minima".into(), csv));
        result["minima"] = to_json(&clusters);
        debug_assert!(b.total() > 0.0);
    }
    let best_pw = best.best_control.to_piecewise(if method == Method::Flip { slots } else { 400 })?;
    out.csv.push(("results".into(), results_csv(&runs)));
    out.csv.push(("traces".into(), traces_csv(&runs)));
    out.csv.push(("best".into(), best_pw.to_csv()));
    out.svg.push(("best".into(), step_plot_svg(&best_pw)));
    out.result = result;
    Ok(out)
}

const SVG_W: f64 = 480.0;
const SVG_H: f64 = 480.0;
const MARGIN: f64 = 40.0;

/// Linear ramp from dark blue through teal to yellow.
fn ramp(x: f64) -> (u8, u8, u8) {
    let stops = [(68.0, 1.0, 84.0), (33.0, 145.0, 140.0), (253.0, 231.0, 37.0)];
    let x = x.clamp(0.0, 1.0) * 2.0;
    let (a, b, f) = if x < 1.0 { (stops[0], stops[1], x) } else { (stops[1], stops[2], x - 1.0) };
    let mix = |p: f64, q: f64| (p + (q - p) * f).round() as u8;
    (mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

/// Heatmap with `t1` on the horizontal and `t2` on the vertical axis.
pub fn heatmap_svg(grid: &LandscapeGrid) -> String {
    let (rows, cols) = (grid.rows(), grid.cols());
    let vals: Vec<f64> = grid.values.iter().flatten().copied().collect();
    let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let cw = (SVG_W - 2.0 * MARGIN) / rows as f64;
    let ch = (SVG_H - 2.0 * MARGIN) / cols as f64;
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SVG_W}\" height=\"{SVG_H}\" viewBox=\"0 0 {SVG_W} {SVG_H}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    );
    for i in 0..rows {
        for j in 0..cols {
            let Some(v) = grid.get(i, j) else { continue };
            let (r, g, b) = ramp((v - lo) / span);
            let x = MARGIN + i as f64 * cw;
            let y = SVG_H - MARGIN - (j + 1) as f64 * ch;
            writeln!(
                s,
                "<rect x=\"{x:.3}\" y=\"{y:.3}\" width=\"{:.3}\" height=\"{:.3}\" fill=\"rgb({r},{g},{b})\"/>",
                cw + 0.05,
                ch + 0.05
            )
            .unwrap();
        }
    }
    let a = grid.spec.axis1;
    writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">t1 [{}, {}]</text>",
        SVG_W / 2.0,
        SVG_H - 12.0,
        a.min,
        a.max
    )
    .unwrap();
    writeln!(
        s,
        "<text x=\"14\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 14 {})\">t2</text>",
        SVG_H / 2.0,
        SVG_H / 2.0
    )
    .unwrap();
    writeln!(
        s,
        "<text x=\"{}\" y=\"24\" font-size=\"12\" text-anchor=\"middle\">{} range [{lo:.4}, {hi:.4}]</text>",
        SVG_W / 2.0,
        grid.kind
    )
    .unwrap();
    s.push_str("</svg>\n");
    s
}

/// Step plot of a piecewise control against `t`.
pub fn step_plot_svg(control: &PiecewiseControl) -> String {
    let (w, h) = (SVG_W + 160.0, SVG_H / 2.0);
    let m = control.bound();
    let total = control.total();
    let px = |t: f64| MARGIN + (w - 2.0 * MARGIN) * t / total;
    let py = |u: f64| h / 2.0 - (h / 2.0 - MARGIN) * u / m.max(1e-300);
    let mut path = format!("M{:.3},{:.3}", px(0.0), py(control.values()[0]));
    for (k, &u) in control.values().iter().enumerate() {
        let t0 = k as f64 * control.dt();
        let t1 = (k + 1) as f64 * control.dt();
        write!(path, " L{:.3},{:.3} L{:.3},{:.3}", px(t0), py(u), px(t1), py(u)).unwrap();
    }
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <line x1=\"{x0:.3}\" y1=\"{y0:.3}\" x2=\"{x1:.3}\" y2=\"{y0:.3}\" stroke=\"#999\"/>\n\
         <path d=\"{path}\" fill=\"none\" stroke=\"#1f4e9c\" stroke-width=\"1.5\"/>\n\
         <text x=\"{x1:.3}\" y=\"{yl:.3}\" font-size=\"12\" text-anchor=\"end\">T = {total}</text>\n\
         <text x=\"4\" y=\"{yt:.3}\" font-size=\"12\">+M</text>\n\
         <text x=\"4\" y=\"{yb:.3}\" font-size=\"12\">-M</text>\n\
         </svg>\n",
        x0 = px(0.0),
        x1 = px(total),
        y0 = py(0.0),
        yl = h - 8.0,
        yt = py(m) + 4.0,
        yb = py(-m) + 4.0,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_is_stable_and_short() {
        let a = config_hash(&json!({ "a": 1, "b": [1.5, 2.0] }));
        assert_eq!(a.len(), HASH_LEN);
        assert_eq!(a, config_hash(&json!({ "a": 1, "b": [1.5, 2.0] })));
        assert_ne!(a, config_hash(&json!({ "a": 2, "b": [1.5, 2.0] })));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::invalid("x")), EXIT_INVALID);
        assert_eq!(exit_code(&Error::Parse("x".into())), EXIT_INVALID);
        assert_eq!(exit_code(&Error::ResourceLimit("x".into())), EXIT_RESOURCE);
        assert_eq!(exit_code(&Error::Bracketing("x".into())), EXIT_NO_CONVERGENCE);
        assert_eq!(main_with(["bangoff", "frobnicate"]), EXIT_INVALID);
        assert_eq!(main_with(["bangoff", "qsl"]), EXIT_INVALID);
    }

    #[test]
    fn flags_parse() {
        let cli = Cli::try_parse_from([
            "bangoff", "qsl", "--system", "s.toml", "--delta", "1e-8", "--Ns", "3", "--seed", "4", "--threads", "2",
        ])
        .unwrap();
        match cli.command {
            Command::Qsl { delta, ns, common, .. } => {
                assert_eq!((delta, ns, common.seed, common.threads), (1e-8, 3, 4, Some(2)));
            }
            _ => panic!("wrong command"),
        }
        let cli = Cli::try_parse_from([
            "bangoff", "evaluate", "--system", "s.toml", "--type", "P0N", "--durations", "0.1,0.2,0.3",
        ])
        .unwrap();
        assert!(matches!(cli.command, Command::Evaluate { durations: Some(ref d), .. } if d.len() == 3));
    }

    #[test]
    fn svg_renderers() {
        let pw = PiecewiseControl::new(vec![1.0, -1.0, 0.0], 0.5, 1.0).unwrap();
        let s = step_plot_svg(&pw);
        assert!(s.starts_with("<svg") && s.trim_end().ends_with("</svg>"));
        assert_eq!(ramp(0.0), (68, 1, 84));
        assert_eq!(ramp(1.0), (253, 231, 37));
    }
}
