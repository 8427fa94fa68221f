// Copyright 2026 The bangoff Contributors
// SPDX-License-Identifier: Apache-2.0

//! Optimisers.
//!
//! - [`sd_durations`]: strict-improvement stochastic descent over the
//!   durations of a fixed bang-off type, on the simplex `Σ t_i = T`.
//! - [`quasi_newton`]: projected BFGS with central finite differences.
//! - [`one_flip_sd`]: stochastic descent over second-class slot values.
//! - [`crab_optimize`]: Nelder-Mead over CRAB coefficients.
//! - [`multi_start`]: indexed-seed fan-out over a worker pool.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controls::{random_durations, BangOffControl, BangOffType, Control, CrabControl, PiecewiseControl};
use crate::linalg::{UnitaryPropagator, C64};
use crate::model::ControlSystem;
use crate::objective::{bures_from_infidelity, infidelity_with_slices, raw_infidelity, BangOffEvaluator, DEFAULT_CRAB_SLICES};
use crate::rng::{derive_seed, stream};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdConfig {
    pub iterations: usize,
    /// Standard deviation of the first proposals; `None` means `T/20`.
    pub initial_step: Option<f64>,
    pub step_decay: f64,
    /// Consecutive rejections before the step shrinks.
    pub patience: usize,
    pub min_step: f64,
    pub seed: u64,
}

impl Default for SdConfig {
    fn default() -> Self {
        Self {
            iterations: 10_000,
            initial_step: None,
            step_decay: 0.5,
            patience: 200,
            min_step: 1e-10,
            seed: 0,
        }
    }
}

impl SdConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_iterations(mut self, iterations: usize) -> Self {
        self.iterations = iterations;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::invalid("SD needs at least one iteration"));
        }
        if !(self.step_decay > 0.0 && self.step_decay < 1.0) {
            return Err(Error::invalid("step_decay must lie in (0, 1)"));
        }
        if !(self.min_step > 0.0) {
            return Err(Error::invalid("min_step must be positive"));
        }
        if let Some(s) = self.initial_step {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::invalid("initial_step must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub iteration: usize,
    pub bures: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub best_control: Control,
    pub best_fidelity: f64,
    /// `1 − F`, computed without cancellation.
    pub best_infidelity: f64,
    /// `(iteration, d_B)` at the start and after every accepted move.
    pub trace: Vec<TracePoint>,
    pub iterations_used: usize,
    pub seed: u64,
    /// `false` when the run was still improving as its budget ran out.
    pub converged: bool,
}

impl OptimizationResult {
    pub fn best_bures(&self) -> f64 {
        bures_from_infidelity(self.best_infidelity)
    }

    pub fn bangoff(&self) -> Option<&BangOffControl> {
        match &self.best_control {
            Control::BangOff(c) => Some(c),
            _ => None,
        }
    }
}

/// Improvements ceased for the last 20% of the budget.
fn stalled_tail(trace: &[TracePoint], used: usize) -> bool {
    let last = trace.last().map_or(0, |p| p.iteration);
    (last as f64) <= 0.8 * used as f64
}

fn check_total(total: f64) -> Result<()> {
    if !(total.is_finite() && total > 0.0) {
        return Err(Error::invalid(format!("total duration must be positive, got {total}")));
    }
    Ok(())
}

/// Places the rounding residue of `Σ t = total` on the largest coordinate.
fn fix_sum(t: &mut [f64], total: f64) {
    let resid = total - t.iter().sum::<f64>();
    if resid != 0.0 {
        let imax = (0..t.len()).max_by(|&a, &b| t[a].total_cmp(&t[b])).unwrap();
        t[imax] = (t[imax] + resid).max(0.0);
    }
}

pub fn sd_durations(
    sys: &ControlSystem,
    kind: &BangOffType,
    total: f64,
    config: &SdConfig,
) -> Result<OptimizationResult> {
    let ev = BangOffEvaluator::new(sys)?;
    sd_durations_with(&ev, kind, total, None, config)
}

/// Stochastic descent from `start` (or a uniform simplex draw).
pub fn sd_durations_with(
    ev: &BangOffEvaluator,
    kind: &BangOffType,
    total: f64,
    start: Option<&[f64]>,
    config: &SdConfig,
) -> Result<OptimizationResult> {
    config.validate()?;
    check_total(total)?;
    let mut rng = stream(config.seed);
    let k = kind.len();
    let mut t = match start {
        Some(s) => {
            check_simplex(s, k, total)?;
            s.to_vec()
        }
        None => random_durations(k, total, &mut rng),
    };
    let mut f = ev.infidelity(kind, &t);
    let mut trace = vec![TracePoint {
        iteration: 0,
        bures: bures_from_infidelity(f),
    }];

    let mut step = config.initial_step.unwrap_or(total / 20.0);
    let mut stale = 0usize;
    let mut used = 0usize;
    let mut stopped_early = k == 1;
    let mut cand = t.clone();
    let unit = Normal::new(0.0, 1.0).unwrap();

    if k > 1 {
        while used < config.iterations {
            used += 1;
            let i = rng.random_range(0..k);
            let delta = step * unit.sample(&mut rng);
            if propose_shift(&t, i, delta, total, &mut cand) {
                let fc = ev.infidelity(kind, &cand);
                if fc < f {
                    std::mem::swap(&mut t, &mut cand);
                    f = fc;
                    stale = 0;
                    trace.push(TracePoint {
                        iteration: used,
                        bures: bures_from_infidelity(f),
                    });
                    continue;
                }
            }
            stale += 1;
            if stale >= config.patience {
                stale = 0;
                step *= config.step_decay;
                if step < config.min_step {
                    stopped_early = true;
                    break;
                }
            }
        }
    }

    let converged = stopped_early || stalled_tail(&trace, used);
    Ok(OptimizationResult {
        best_control: BangOffControl::new(kind.clone(), t, ev.bound())?.into(),
        best_fidelity: 1.0 - f,
        best_infidelity: f,
        trace,
        iterations_used: used,
        seed: config.seed,
        converged,
    })
}

fn check_simplex(t: &[f64], k: usize, total: f64) -> Result<()> {
    if t.len() != k {
        return Err(Error::invalid(format!("expected {k} durations, got {}", t.len())));
    }
    if t.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::invalid("durations must be finite and non-negative"));
    }
    if (t.iter().sum::<f64>() - total).abs() > 1e-10 * total.max(1.0) {
        return Err(Error::invalid("durations do not sum to the total duration"));
    }
    Ok(())
}

/// Moves coordinate `i` by `delta` and compensates proportionally on the
/// others. Returns `false` when the move would leave the simplex.
fn propose_shift(t: &[f64], i: usize, delta: f64, total: f64, out: &mut [f64]) -> bool {
    let ti = t[i] + delta;
    if ti < 0.0 || ti > total {
        return false;
    }
    let rest = total - t[i];
    let new_rest = total - ti;
    let k = t.len();
    if rest > 0.0 {
        let scale = new_rest / rest;
        for (j, (o, &x)) in out.iter_mut().zip(t).enumerate() {
            *o = if j == i { ti } else { x * scale };
        }
    } else {
        let share = new_rest / (k - 1) as f64;
        for (j, o) in out.iter_mut().enumerate() {
            *o = if j == i { ti } else { share };
        }
    }
    fix_sum(out, total);
    out.iter().all(|&x| x >= 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuasiNewtonConfig {
    pub max_iterations: usize,
    pub fd_step: f64,
    pub gradient_tol: f64,
    /// Segments shorter than this fraction of `T` are probed at zero.
    pub face_threshold: f64,
}

impl Default for QuasiNewtonConfig {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            fd_step: 1e-7,
            gradient_tol: 1e-12,
            face_threshold: 0.05,
        }
    }
}

/// Central-difference gradient of the infidelity `1 − F` with respect to
/// every duration (the propagator is analytic in each duration, so the
/// stencil may step across zero).
pub fn infidelity_gradient(ev: &BangOffEvaluator, kind: &BangOffType, t: &[f64], h: f64) -> Vec<f64> {
    let mut x = t.to_vec();
    (0..t.len())
        .map(|i| {
            x[i] = t[i] + h;
            let fp = ev.infidelity(kind, &x);
            x[i] = t[i] - h;
            let fm = ev.infidelity(kind, &x);
            x[i] = t[i];
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

/// Euclidean projection onto `{x ≥ 0, Σ x = total}`.
pub fn project_simplex(v: &[f64], total: f64) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cum += uj;
        let th = (cum - total) / (j + 1) as f64;
        if uj - th > 0.0 {
            theta = th;
        }
    }
    let mut out: Vec<f64> = v.iter().map(|&x| (x - theta).max(0.0)).collect();
    fix_sum(&mut out, total);
    out
}

fn free_set(t: &[f64], g: &[f64], locked: &[bool]) -> Vec<bool> {
    let mut free: Vec<bool> = t.iter().zip(locked).map(|(&x, &l)| x > 0.0 && !l).collect();
    loop {
        let n = free.iter().filter(|&&b| b).count().max(1);
        let mean = g.iter().zip(&free).filter(|(_, &b)| b).map(|(x, _)| x).sum::<f64>() / n as f64;
        let mut changed = false;
        for i in 0..t.len() {
            if !free[i] && !locked[i] && g[i] < mean {
                free[i] = true;
                changed = true;
            }
        }
        if !changed {
            return free;
        }
    }
}

fn projected_gradient(g: &[f64], free: &[bool]) -> Vec<f64> {
    let n = free.iter().filter(|&&b| b).count();
    if n == 0 {
        return vec![0.0; g.len()];
    }
    let mean = g.iter().zip(free).filter(|(_, &b)| b).map(|(x, _)| x).sum::<f64>() / n as f64;
    g.iter()
        .zip(free)
        .map(|(&x, &b)| if b { x - mean } else { 0.0 })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Projected BFGS on the duration simplex, maximising fidelity.
pub fn quasi_newton(
    sys: &ControlSystem,
    kind: &BangOffType,
    total: f64,
    start: &[f64],
) -> Result<OptimizationResult> {
    let ev = BangOffEvaluator::new(sys)?;
    quasi_newton_with(&ev, kind, total, start, &QuasiNewtonConfig::default())
}

pub fn quasi_newton_with(
    ev: &BangOffEvaluator,
    kind: &BangOffType,
    total: f64,
    start: &[f64],
    config: &QuasiNewtonConfig,
) -> Result<OptimizationResult> {
    quasi_newton_on_face(ev, kind, total, start, config, &vec![false; kind.len()])
}

/// Quasi-Newton with the `pinned` durations held at zero.
pub fn quasi_newton_on_face(
    ev: &BangOffEvaluator,
    kind: &BangOffType,
    total: f64,
    start: &[f64],
    config: &QuasiNewtonConfig,
    pinned: &[bool],
) -> Result<OptimizationResult> {
    check_total(total)?;
    let k = kind.len();
    if pinned.len() != k || pinned.iter().all(|&p| p) {
        return Err(Error::invalid("pinned mask must match the type and leave one segment free"));
    }
    let start = project_face(start, total, pinned);
    check_simplex(&start, k, total)?;
    let mut locked = pinned.to_vec();
    let start = start.as_slice();
    let mut run = qn_run(ev, kind, total, start, config, &locked);

    // Face probes: a short segment is retried pinned at exactly zero, with the
    // rest re-solved on that face. Near a collapsing segment the objective can
    // be too flat for interior steps to resolve.
    'probe: loop {
        let mut small: Vec<usize> = (0..k)
            .filter(|&i| !locked[i] && run.t[i] > 0.0 && run.t[i] <= config.face_threshold * total)
            .collect();
        small.sort_by(|&a, &b| run.t[a].total_cmp(&run.t[b]));
        for i in small {
            let mut lock = locked.clone();
            lock[i] = true;
            if lock.iter().all(|&b| b) {
                continue;
            }
            let face_start = project_face(&run.t, total, &lock);
            let face = qn_run(ev, kind, total, &face_start, config, &lock);
            if face.f < run.f {
                let offset = run.used;
                let mut trace = std::mem::take(&mut run.trace);
                trace.extend(face.trace.iter().map(|p| TracePoint {
                    iteration: offset + p.iteration.max(1),
                    bures: p.bures,
                }));
                run = QnRun {
                    trace,
                    used: offset + face.used.max(1),
                    ..face
                };
                locked = lock;
                continue 'probe;
            }
        }
        break;
    }
    dedup_trace(&mut run.trace);

    Ok(OptimizationResult {
        best_control: BangOffControl::new(kind.clone(), run.t, ev.bound())?.into(),
        best_fidelity: 1.0 - run.f,
        best_infidelity: run.f,
        trace: run.trace,
        iterations_used: run.used,
        seed: 0,
        converged: run.converged,
    })
}

/// Keeps the last entry per iteration so iteration numbers stay strictly increasing.
fn dedup_trace(trace: &mut Vec<TracePoint>) {
    let mut out: Vec<TracePoint> = Vec::with_capacity(trace.len());
    for p in trace.drain(..) {
        match out.last_mut() {
            Some(last) if last.iteration >= p.iteration => {
                last.bures = p.bures.min(last.bures);
            }
            _ => out.push(p),
        }
    }
    *trace = out;
}

struct QnRun {
    t: Vec<f64>,
    f: f64,
    trace: Vec<TracePoint>,
    used: usize,
    converged: bool,
}

/// Zeroes the locked coordinates and projects the rest onto the simplex.
fn project_face(t: &[f64], total: f64, locked: &[bool]) -> Vec<f64> {
    let open: Vec<f64> = t.iter().zip(locked).filter(|(_, &l)| !l).map(|(&x, _)| x).collect();
    let mut proj = project_simplex(&open, total).into_iter();
    locked
        .iter()
        .map(|&l| if l { 0.0 } else { proj.next().unwrap() })
        .collect()
}

fn qn_run(
    ev: &BangOffEvaluator,
    kind: &BangOffType,
    total: f64,
    start: &[f64],
    config: &QuasiNewtonConfig,
    locked: &[bool],
) -> QnRun {
    let k = kind.len();
    let mut t = start.to_vec();
    let mut f = ev.infidelity(kind, &t);
    let mut trace = vec![TracePoint {
        iteration: 0,
        bures: bures_from_infidelity(f),
    }];
    let mut used = 0;
    let n_open = locked.iter().filter(|&&l| !l).count();
    let mut converged = n_open <= 1;

    let identity = |k: usize| -> Vec<f64> {
        let mut m = vec![0.0; k * k];
        for i in 0..k {
            m[i * k + i] = 1.0;
        }
        m
    };
    let mut hinv = identity(k);
    let mut g = infidelity_gradient(ev, kind, &t, config.fd_step);
    let mut free = free_set(&t, &g, locked);

    while n_open > 1 && used < config.max_iterations {
        used += 1;
        let pg = projected_gradient(&g, &free);
        if dot(&pg, &pg).sqrt() < config.gradient_tol {
            converged = true;
            break;
        }
        let mut fresh = false;
        let mut accepted = None;
        for _attempt in 0..2 {
            // d = −H·pg, restricted to the free coordinates and the tangent of Σ t = T.
            let d: Vec<f64> = (0..k)
                .map(|i| if free[i] { -(0..k).map(|j| hinv[i * k + j] * pg[j]).sum::<f64>() } else { 0.0 })
                .collect();
            let mut d = projected_gradient(&d, &free);
            if dot(&d, &pg) >= 0.0 {
                hinv = identity(k);
                d = pg.iter().map(|x| -x).collect();
                fresh = true;
            }
            let mut alpha = 1.0;
            while alpha > 1e-20 {
                let trial: Vec<f64> = t.iter().zip(&d).map(|(x, di)| x + alpha * di).collect();
                let cand = project_face(&trial, total, locked);
                let fc = ev.infidelity(kind, &cand);
                if fc < f {
                    accepted = Some((cand, fc));
                    break;
                }
                alpha *= 0.5;
            }
            if accepted.is_some() || fresh {
                break;
            }
            hinv = identity(k);
            fresh = true;
        }
        let Some((cand, fc)) = accepted else {
            // No descent even along the projected gradient: precision floor reached.
            converged = true;
            break;
        };
        let g_new = infidelity_gradient(ev, kind, &cand, config.fd_step);
        let hit_boundary = cand.iter().zip(&t).any(|(&c, &o)| c == 0.0 && o > 0.0);
        let free_new = free_set(&cand, &g_new, locked);
        if hit_boundary || free_new != free {
            hinv = identity(k);
        } else {
            let s: Vec<f64> = cand.iter().zip(&t).map(|(a, b)| a - b).collect();
            let y: Vec<f64> = projected_gradient(&g_new, &free_new)
                .iter()
                .zip(&pg)
                .map(|(a, b)| a - b)
                .collect();
            let sy = dot(&s, &y);
            if sy > 1e-18 {
                bfgs_update(&mut hinv, &s, &y, sy);
            }
        }
        t = cand;
        f = fc;
        g = g_new;
        free = free_new;
        trace.push(TracePoint {
            iteration: used,
            bures: bures_from_infidelity(f),
        });
    }
    QnRun {
        t,
        f,
        trace,
        used,
        converged,
    }
}

/// `H ← (I − ρ s yᵀ) H (I − ρ y sᵀ) + ρ s sᵀ`.
fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64) {
    let k = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..k).map(|i| (0..k).map(|j| h[i * k + j] * y[j]).sum()).collect();
    let yhy = dot(y, &hy);
    for i in 0..k {
        for j in 0..k {
            h[i * k + j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}

/// Stochastic descent then a quasi-Newton polish of the result.
pub fn sd_then_polish(
    ev: &BangOffEvaluator,
    kind: &BangOffType,
    total: f64,
    config: &SdConfig,
) -> Result<OptimizationResult> {
    let sd = sd_durations_with(ev, kind, total, None, config)?;
    polish(ev, kind, total, sd)
}

/// Runs quasi-Newton from an SD result, appending its trace.
pub fn polish(
    ev: &BangOffEvaluator,
    kind: &BangOffType,
    total: f64,
    sd: OptimizationResult,
) -> Result<OptimizationResult> {
    let start = sd.bangoff().expect("bang-off result").durations().to_vec();
    let qn = quasi_newton_with(ev, kind, total, &start, &QuasiNewtonConfig::default())?;
    if qn.best_infidelity >= sd.best_infidelity {
        return Ok(sd);
    }
    let offset = sd.iterations_used;
    let mut trace = sd.trace;
    trace.extend(qn.trace.iter().skip(1).map(|p| TracePoint {
        iteration: offset + p.iteration,
        bures: p.bures,
    }));
    Ok(OptimizationResult {
        best_control: qn.best_control,
        best_fidelity: qn.best_fidelity,
        best_infidelity: qn.best_infidelity,
        trace,
        iterations_used: offset + qn.iterations_used,
        seed: sd.seed,
        converged: qn.converged,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlipConfig {
    pub iterations: usize,
    pub seed: u64,
}

impl Default for FlipConfig {
    fn default() -> Self {
        Self {
            iterations: 10_000,
            seed: 0,
        }
    }
}

struct SlotPropagation {
    levels: [UnitaryPropagator; 3],
    initial: Vec<C64>,
    target: Vec<C64>,
}

impl SlotPropagation {
    fn infidelity(&self, idx: &[u8]) -> f64 {
        let n = self.initial.len();
        let mut psi = self.initial.clone();
        let mut next = vec![C64::new(0.0, 0.0); n];
        for &s in idx {
            let u = self.levels[s as usize].entries();
            for (r, out) in next.iter_mut().enumerate() {
                *out = (0..n).map(|c| u[r * n + c] * psi[c]).sum();
            }
            std::mem::swap(&mut psi, &mut next);
        }
        raw_infidelity(&self.target, &psi)
    }
}

/// Level index (0: +M, 1: −M, 2: 0) of the `alt`-th value other than `cur`.
fn other_level(cur: u8, alt: u8) -> u8 {
    let mut others = (0..3u8).filter(|&v| v != cur);
    others.nth(alt as usize).unwrap()
}

/// 1-flip stochastic descent over second-class controls with `slots` slots.
pub fn one_flip_sd(sys: &ControlSystem, total: f64, slots: usize, config: &FlipConfig) -> Result<OptimizationResult> {
    check_total(total)?;
    if slots == 0 {
        return Err(Error::invalid("need at least one time slot"));
    }
    if config.iterations == 0 {
        return Err(Error::invalid("1-flip SD needs at least one iteration"));
    }
    let ev = BangOffEvaluator::new(sys)?;
    let dt = total / slots as f64;
    let prop = SlotPropagation {
        levels: ev.slot_propagators(dt),
        initial: ev.initial().to_vec(),
        target: ev.target().to_vec(),
    };
    let mut rng = stream(config.seed);
    let mut idx: Vec<u8> = (0..slots).map(|_| rng.random_range(0..3u8)).collect();
    let mut f = prop.infidelity(&idx);
    let mut trace = vec![TracePoint {
        iteration: 0,
        bures: bures_from_infidelity(f),
    }];
    // tested[2k + a]: flip (slot k, alternative a) already rejected against the incumbent.
    let mut tested = vec![false; 2 * slots];
    let mut n_tested = 0;
    let mut used = 0;
    let mut certified = false;

    while used < config.iterations {
        if n_tested == tested.len() {
            certified = true;
            break;
        }
        used += 1;
        let k = rng.random_range(0..slots);
        let a = rng.random_range(0..2u8);
        let key = 2 * k + a as usize;
        if tested[key] {
            continue;
        }
        let old = idx[k];
        idx[k] = other_level(old, a);
        let fc = prop.infidelity(&idx);
        if fc < f {
            f = fc;
            tested.iter_mut().for_each(|b| *b = false);
            n_tested = 0;
            trace.push(TracePoint {
                iteration: used,
                bures: bures_from_infidelity(f),
            });
        } else {
            idx[k] = old;
            tested[key] = true;
            n_tested += 1;
        }
    }
    if !certified {
        certified = n_tested == tested.len() || (0..slots).all(|k| {
            (0..2u8).all(|a| {
                if tested[2 * k + a as usize] {
                    return true;
                }
                let mut trial = idx.clone();
                trial[k] = other_level(idx[k], a);
                prop.infidelity(&trial) >= f
            })
        });
    }

    let m = sys.bound();
    let values = idx
        .iter()
        .map(|&s| match s {
            0 => m,
            1 => -m,
            _ => 0.0,
        })
        .collect();
    Ok(OptimizationResult {
        best_control: PiecewiseControl::new(values, dt, m)?.into(),
        best_fidelity: 1.0 - f,
        best_infidelity: f,
        trace,
        iterations_used: used,
        seed: config.seed,
        converged: certified,
    })
}

/// Whether no single-slot flip of `control` improves its fidelity.
pub fn is_flip_local_optimum(sys: &ControlSystem, control: &PiecewiseControl) -> Result<bool> {
    let ev = BangOffEvaluator::new(sys)?;
    let prop = SlotPropagation {
        levels: ev.slot_propagators(control.dt()),
        initial: ev.initial().to_vec(),
        target: ev.target().to_vec(),
    };
    let m = control.bound();
    let idx: Vec<u8> = control
        .values()
        .iter()
        .map(|&v| if v == m { 0 } else if v == -m { 1 } else { 2 })
        .collect();
    let f = prop.infidelity(&idx);
    Ok((0..idx.len()).all(|k| {
        (0..2u8).all(|a| {
            let mut trial = idx.clone();
            trial[k] = other_level(idx[k], a);
            prop.infidelity(&trial) >= f
        })
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrabConfig {
    pub cutoff: usize,
    pub restarts: usize,
    pub evaluations: usize,
    pub slices: usize,
    pub seed: u64,
}

impl Default for CrabConfig {
    fn default() -> Self {
        Self {
            cutoff: 5,
            restarts: 20,
            evaluations: 2000,
            slices: DEFAULT_CRAB_SLICES,
            seed: 0,
        }
    }
}

/// Best CRAB pulse over `restarts` randomised bases.
pub fn crab_optimize(sys: &ControlSystem, total: f64, config: &CrabConfig) -> Result<OptimizationResult> {
    check_total(total)?;
    if config.cutoff == 0 || config.restarts == 0 || config.evaluations == 0 || config.slices == 0 {
        return Err(Error::invalid("CRAB needs N_c, restarts, evaluations and slices >= 1"));
    }
    let runs = multi_start(config.restarts, config.seed, |_, seed| crab_restart(sys, total, config, seed));
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(runs
        .into_iter()
        .reduce(|best, r| if r.best_infidelity < best.best_infidelity { r } else { best })
        .unwrap())
}

fn crab_restart(sys: &ControlSystem, total: f64, config: &CrabConfig, seed: u64) -> Result<OptimizationResult> {
    let mut rng = stream(seed);
    let m = sys.bound();
    let nc = config.cutoff;
    let freqs = CrabControl::random_frequencies(nc, total, &mut rng);
    let x0: Vec<f64> = (0..2 * nc).map(|_| rng.random_range(-m..=m) / nc as f64).collect();
    let build = |x: &[f64]| -> Result<CrabControl> {
        CrabControl::new(x.chunks(2).map(|p| (p[0], p[1])).collect(), freqs.clone(), total, m)
    };
    let objective = |x: &[f64]| -> f64 {
        let c: Control = build(x).expect("valid CRAB parameters").into();
        infidelity_with_slices(sys, &c, total, config.slices).unwrap_or(1.0)
    };
    let nm = nelder_mead(objective, &x0, 0.5 * m / nc as f64, config.evaluations);
    Ok(OptimizationResult {
        best_control: build(&nm.x)?.into(),
        best_fidelity: 1.0 - nm.value,
        best_infidelity: nm.value,
        trace: nm
            .improvements
            .iter()
            .map(|&(it, v)| TracePoint {
                iteration: it,
                bures: bures_from_infidelity(v),
            })
            .collect(),
        iterations_used: nm.evaluations,
        seed,
        converged: nm.collapsed,
    })
}

struct NelderMeadOutcome {
    x: Vec<f64>,
    value: f64,
    evaluations: usize,
    improvements: Vec<(usize, f64)>,
    collapsed: bool,
}

/// Standard Nelder-Mead (reflection 1, expansion 2, contraction ½, shrink ½).
fn nelder_mead(f: impl Fn(&[f64]) -> f64, x0: &[f64], step: f64, budget: usize) -> NelderMeadOutcome {
    let n = x0.len();
    let mut evals = 0usize;
    let mut best = f64::INFINITY;
    let mut improvements = Vec::new();
    let mut eval = |x: &[f64], evals: &mut usize| -> f64 {
        *evals += 1;
        let v = f(x);
        if v < best {
            best = v;
            improvements.push((*evals, v));
        }
        v
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let v0 = eval(x0, &mut evals);
    simplex.push((x0.to_vec(), v0));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += step;
        let v = eval(&x, &mut evals);
        simplex.push((x, v));
    }
    let mut collapsed = false;
    while evals < budget {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let spread = simplex[n].1 - simplex[0].1;
        let size = simplex[1..]
            .iter()
            .map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if spread <= 1e-17 && size <= 1e-12 {
            collapsed = true;
            break;
        }
        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|(x, _)| x[j]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n].0)
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };
        let xr = along(1.0);
        let fr = eval(&xr, &mut evals);
        if fr < simplex[0].1 {
            let xe = along(2.0);
            let fe = eval(&xe, &mut evals);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr < simplex[n].1 {
                let xc = along(0.5);
                let fc = eval(&xc, &mut evals);
                (xc, fc)
            } else {
                let xc = along(-0.5);
                let fc = eval(&xc, &mut evals);
                (xc, fc)
            };
            if fc < simplex[n].1.min(fr) {
                simplex[n] = (xc, fc);
            } else {
                let x_best = simplex[0].0.clone();
                for vertex in simplex.iter_mut().skip(1) {
                    let xs: Vec<f64> = x_best.iter().zip(&vertex.0).map(|(b, x)| b + 0.5 * (x - b)).collect();
                    let fs = eval(&xs, &mut evals);
                    *vertex = (xs, fs);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, value) = simplex.swap_remove(0);
    NelderMeadOutcome {
        x,
        value,
        evaluations: evals,
        improvements,
        collapsed,
    }
}

/// Runs `worker(i, seed_i)` for `i in 0..n_points` with
/// `seed_i = derive_seed(master_seed, i)`; results come back in index order.
pub fn multi_start<T, F>(n_points: usize, master_seed: u64, worker: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, u64) -> T + Sync + Send,
{
    (0..n_points)
        .into_par_iter()
        .map(|i| worker(i, derive_seed(master_seed, i as u64)))
        .collect()
}

/// Multi-start stochastic descent over one bang-off type.
pub fn multi_start_sd(
    sys: &ControlSystem,
    kind: &BangOffType,
    total: f64,
    n_points: usize,
    config: &SdConfig,
) -> Result<Vec<OptimizationResult>> {
    if n_points == 0 {
        return Err(Error::invalid("multi-start needs at least one point"));
    }
    let ev = BangOffEvaluator::new(sys)?;
    multi_start(n_points, config.seed, |_, seed| {
        sd_durations_with(&ev, kind, total, None, &config.with_seed(seed))
    })
    .into_iter()
    .collect()
}

/// CSV with columns `point_id,iteration,d_B`.
pub fn traces_csv(results: &[OptimizationResult]) -> String {
    let mut out = String::from("point_id,iteration,d_B\n");
    for (i, r) in results.iter().enumerate() {
        for p in &r.trace {
            out.push_str(&format!("{},{},{:e}\n", i, p.iteration, p.bures));
        }
    }
    out
}

/// Flat record for result export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    #[serde(rename = "type")]
    pub kind: Option<String>,
    pub durations: Option<Vec<f64>>,
    pub values: Option<Vec<f64>>,
    pub fidelity: f64,
    pub infidelity: f64,
    pub bures: f64,
    pub seed: u64,
    pub iterations_used: usize,
    pub converged_flag: bool,
}

impl From<&OptimizationResult> for ResultRecord {
    fn from(r: &OptimizationResult) -> Self {
        let (kind, durations, values) = match &r.best_control {
            Control::BangOff(c) => (Some(c.kind().to_string()), Some(c.durations().to_vec()), None),
            Control::Piecewise(c) => (None, None, Some(c.values().to_vec())),
            Control::Crab(c) => (
                None,
                None,
                Some(c.coefficients().iter().flat_map(|&(a, b)| [a, b]).collect()),
            ),
        };
        Self {
            kind,
            durations,
            values,
            fidelity: r.best_fidelity,
            infidelity: r.best_infidelity,
            bures: r.best_bures(),
            seed: r.seed,
            iterations_used: r.iterations_used,
            converged_flag: r.converged,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::StateVector;
    use crate::model::{analytic_case1, three_level, two_level};
    use proptest::prelude::*;

    fn case1() -> ControlSystem {
        two_level(1.0, 4.0 / 3.0, StateVector::basis(2, 1)).unwrap()
    }

    #[test]
    fn sd_from_optimum_accepts_nothing() {
        let sys = case1();
        let a = analytic_case1(1.0, 4.0 / 3.0).unwrap();
        let ev = BangOffEvaluator::new(&sys).unwrap();
        let kind: BangOffType = "PN".parse().unwrap();
        let start = [a.t1, a.t_qsl - a.t1];
        let i0 = ev.infidelity(&kind, &start);
        let r = sd_durations_with(&ev, &kind, a.t_qsl, Some(&start), &SdConfig::default().with_iterations(2000)).unwrap();
        assert!(r.best_infidelity <= i0);
        assert!(r.best_infidelity < 1e-20);
    }

    #[test]
    fn qn_from_optimum_is_stationary() {
        let sys = case1();
        let a = analytic_case1(1.0, 4.0 / 3.0).unwrap();
        let kind: BangOffType = "PN".parse().unwrap();
        let start = [a.t1, a.t_qsl - a.t1];
        let r = quasi_newton(&sys, &kind, a.t_qsl, &start).unwrap();
        let d = r.bangoff().unwrap().durations();
        assert!((d[0] - a.t1).abs() < 1e-7);
        assert!(r.converged);
    }

    #[test]
    fn qn_case1_from_nearby() {
        let sys = case1();
        let a = analytic_case1(1.0, 4.0 / 3.0).unwrap();
        let kind: BangOffType = "PN".parse().unwrap();
        let r = quasi_newton(&sys, &kind, a.t_qsl, &[0.6, a.t_qsl - 0.6]).unwrap();
        assert!(r.best_fidelity >= 1.0 - 1e-12, "{}", 1.0 - r.best_fidelity);
        let d = r.bangoff().unwrap().durations();
        assert!((d[0] - a.t1).abs() < 1e-6 && (d[1] - a.t2).abs() < 1e-6, "{d:?}");
    }

    #[test]
    fn qn_case1_pzn_collapses() {
        let sys = case1();
        let a = analytic_case1(1.0, 4.0 / 3.0).unwrap();
        let kind: BangOffType = "P0N".parse().unwrap();
        let r = quasi_newton(&sys, &kind, a.t_qsl, &[0.6, 0.05, a.t_qsl - 0.65]).unwrap();
        let d = r.bangoff().unwrap().durations();
        assert!(r.best_infidelity < 1e-20, "{}", r.best_infidelity);
        assert!(d[1] < 1e-6, "{d:?}");
        assert!((d[0] - a.t1).abs() < 1e-5 && (d[2] - a.t2).abs() < 1e-5, "{d:?}");
    }

    #[test]
    fn simplex_projection() {
        let p = project_simplex(&[0.5, -0.2, 1.0], 1.0);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(p.iter().all(|&x| x >= 0.0));
        assert_eq!(p[1], 0.0);
        let q = project_simplex(&[0.2, 0.3, 0.5], 1.0);
        assert!((q[0] - 0.2).abs() < 1e-15 && (q[2] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn fd_gradient_richardson_check() {
        // h = 1e-7 central differences against a Richardson-extrapolated h = 1e-5 stencil.
        let sys = three_level(1.0, 1.0, 2.0, 1.0).unwrap();
        let ev = BangOffEvaluator::new(&sys).unwrap();
        let kind: BangOffType = "P0NPN".parse().unwrap();
        let mut rng = stream(77);
        for _ in 0..20 {
            let t = random_durations(kind.len(), 2.5, &mut rng);
            let g = infidelity_gradient(&ev, &kind, &t, 1e-7);
            let g1 = infidelity_gradient(&ev, &kind, &t, 1e-5);
            let g2 = infidelity_gradient(&ev, &kind, &t, 2e-5);
            let rich: Vec<f64> = g1.iter().zip(&g2).map(|(a, b)| (4.0 * a - b) / 3.0).collect();
            let scale = rich.iter().map(|x| x.abs()).fold(0.0, f64::max).max(1e-3);
            for (a, b) in g.iter().zip(&rich) {
                assert!((a - b).abs() <= 1e-4 * scale, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn one_flip_trivial_case() {
        let sys = case1().with_target(StateVector::basis(2, 0)).unwrap();
        // Target equals the initial drift eigenstate; a tiny T keeps every slot near identity.
        let r = one_flip_sd(&sys, 1e-9, 1, &FlipConfig::default()).unwrap();
        assert!(r.best_fidelity > 1.0 - 1e-15);
    }

    #[test]
    fn one_flip_certificate() {
        let sys = case1();
        let a = analytic_case1(1.0, 4.0 / 3.0).unwrap();
        for seed in 0..5 {
            let r = one_flip_sd(&sys, a.t_qsl, 12, &FlipConfig { iterations: 10_000, seed }).unwrap();
            let Control::Piecewise(p) = &r.best_control else { panic!() };
            assert!(p.is_bang_off());
            if r.converged {
                assert!(is_flip_local_optimum(&sys, p).unwrap());
            }
        }
    }

    #[test]
    fn multi_start_is_ordered_and_deterministic() {
        let a = multi_start(16, 3, |i, s| (i, s));
        assert!(a.iter().enumerate().all(|(i, &(j, s))| i == j && s == derive_seed(3, i as u64)));
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| multi_start(16, 3, |i, s| (i, s)));
        assert_eq!(a, b);
    }

    #[test]
    fn multi_start_single_point_equals_direct_call() {
        let sys = case1();
        let kind: BangOffType = "PN".parse().unwrap();
        let cfg = SdConfig::default().with_iterations(500).with_seed(10);
        let ms = multi_start_sd(&sys, &kind, 1.8, 1, &cfg).unwrap();
        let direct = sd_durations(&sys, &kind, 1.8, &cfg.with_seed(derive_seed(10, 0))).unwrap();
        assert_eq!(ms[0], direct);
    }

    #[test]
    fn crab_runs_and_respects_bound() {
        let sys = case1();
        let cfg = CrabConfig {
            cutoff: 2,
            restarts: 2,
            evaluations: 200,
            slices: 100,
            seed: 1,
        };
        let r = crab_optimize(&sys, 1.885, &cfg).unwrap();
        let Control::Crab(c) = &r.best_control else { panic!() };
        let p = c.to_piecewise(100).unwrap();
        assert!(p.values().iter().all(|v| v.abs() <= sys.bound()));
        assert!(r.trace.windows(2).all(|w| w[1].bures <= w[0].bures));
    }

    #[test]
    fn traces_csv_layout() {
        let sys = case1();
        let kind: BangOffType = "PN".parse().unwrap();
        let rs = multi_start_sd(&sys, &kind, 1.0, 2, &SdConfig::default().with_iterations(50)).unwrap();
        let csv = traces_csv(&rs);
        assert!(csv.starts_with("point_id,iteration,d_B\n0,0,"));
        let rec = ResultRecord::from(&rs[0]);
        assert_eq!(rec.kind.as_deref(), Some("PN"));
    }

    #[test]
    fn config_validation() {
        let sys = case1();
        let kind: BangOffType = "PN".parse().unwrap();
        let bad = SdConfig {
            step_decay: 1.0,
            ..SdConfig::default()
        };
        assert!(sd_durations(&sys, &kind, 1.0, &bad).is_err());
        assert!(sd_durations(&sys, &kind, 0.0, &SdConfig::default()).is_err());
        assert!(one_flip_sd(&sys, 1.0, 0, &FlipConfig::default()).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn sd_traces_monotone_and_simplex(seed in any::<u64>(), total in 0.2f64..3.0) {
            let sys = three_level(1.0, 1.0, 2.0, 1.0).unwrap();
            let kind: BangOffType = "PN0P".parse().unwrap();
            let r = sd_durations(&sys, &kind, total, &SdConfig::default().with_iterations(800).with_seed(seed)).unwrap();
            prop_assert!(r.trace.windows(2).all(|w| w[1].bures <= w[0].bures));
            prop_assert!(r.trace.windows(2).all(|w| w[1].iteration > w[0].iteration));
            let d = r.bangoff().unwrap().durations();
            prop_assert!(d.iter().all(|&x| x >= 0.0));
            prop_assert!((d.iter().sum::<f64>() - total).abs() < 1e-10);
            prop_assert!((r.trace.last().unwrap().bures - r.best_bures()).abs() < 1e-12);
        }

        #[test]
        fn sd_is_deterministic(seed in any::<u64>()) {
            let sys = case1();
            let kind: BangOffType = "P0N".parse().unwrap();
            let cfg = SdConfig::default().with_iterations(300).with_seed(seed);
            prop_assert_eq!(sd_durations(&sys, &kind, 1.5, &cfg).unwrap(), sd_durations(&sys, &kind, 1.5, &cfg).unwrap());
        }

        #[test]
        fn one_flip_traces_monotone(seed in any::<u64>()) {
            let sys = case1();
            let r = one_flip_sd(&sys, 1.885, 10, &FlipConfig { iterations: 2000, seed }).unwrap();
            prop_assert!(r.trace.windows(2).all(|w| w[1].bures < w[0].bures));
        }
    }
}
