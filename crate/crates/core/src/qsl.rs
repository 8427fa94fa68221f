// Copyright 2026 The bangoff Contributors
// SPDX-License-Identifier: Apache-2.0

//! Minimal-duration search over switch counts, the QSL estimate, the
//! critical time of the single-bang regime, and a brute-force grid oracle.
//!
//! Bisections run on an integer lattice `T_j = base + j·h` with `h ≤ tol`, so
//! minimal durations found for different switch counts land on the same grid
//! and can be compared exactly.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::controls::{enumerate_types, BangOffControl, BangOffType, PruneRules};
use crate::model::ControlSystem;
use crate::objective::{BangOffEvaluator, DEFAULT_DELTA};
use crate::optimize::{polish, quasi_newton_on_face, sd_durations_with, QuasiNewtonConfig, SdConfig};
use crate::rng::derive_seed;
use crate::{Error, Result};

/// Per-probe optimisation budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SearchConfig {
    /// SD starts per type.
    pub starts: usize,
    pub sd: SdConfig,
    /// Best SD results per type handed to the quasi-Newton polish.
    pub polish_top: usize,
    pub qn: QuasiNewtonConfig,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            starts: 20,
            sd: SdConfig::default().with_iterations(4000),
            polish_top: 3,
            qn: QuasiNewtonConfig::default(),
            seed: 0,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.starts == 0 || self.polish_top == 0 {
            return Err(Error::invalid("search needs at least one start and one polish"));
        }
        self.sd.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TypeOutcome {
    #[serde(rename = "type")]
    pub kind: BangOffType,
    pub durations: Vec<f64>,
    pub fidelity: f64,
    pub infidelity: f64,
}

impl TypeOutcome {
    pub fn control(&self, bound: f64) -> Result<BangOffControl> {
        BangOffControl::new(self.kind.clone(), self.durations.clone(), bound)
    }

    pub fn min_duration(&self) -> f64 {
        self.durations.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Best result per type at one `(N_s, T)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Probe {
    pub ns: usize,
    pub total: f64,
    /// Lexicographic by type word; mirror partners are included.
    pub outcomes: Vec<TypeOutcome>,
}

impl Probe {
    /// Lowest infidelity; ties go to the lexicographically first type.
    pub fn best(&self) -> &TypeOutcome {
        self.outcomes
            .iter()
            .reduce(|b, o| if o.infidelity < b.infidelity { o } else { b })
            .expect("probe has at least one type")
    }

    pub fn feasible(&self, delta: f64) -> bool {
        self.best().infidelity <= delta
    }

    /// Types reaching `F ≥ 1 − delta`.
    pub fn optimal(&self, delta: f64) -> Vec<&TypeOutcome> {
        self.outcomes.iter().filter(|o| o.infidelity <= delta).collect()
    }
}

/// Optimiser state shared by all probes on one system.
pub struct Searcher<'a> {
    sys: &'a ControlSystem,
    ev: BangOffEvaluator,
    rules: PruneRules,
    config: SearchConfig,
}

impl<'a> Searcher<'a> {
    pub fn new(sys: &'a ControlSystem, config: SearchConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            sys,
            ev: BangOffEvaluator::new(sys)?,
            rules: PruneRules::for_system(sys),
            config,
        })
    }

    pub fn system(&self) -> &ControlSystem {
        self.sys
    }

    pub fn evaluator(&self) -> &BangOffEvaluator {
        &self.ev
    }

    pub fn rules(&self) -> PruneRules {
        self.rules
    }

    pub fn config(&self) -> &SearchConfig {
        &self.config
    }

    /// Optimises every (pruned) type with `ns` switches at duration `total`.
    pub fn probe(&self, ns: usize, total: f64) -> Result<Probe> {
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::invalid(format!("probe duration must be positive, got {total}")));
        }
        let types = enumerate_types(ns, self.rules);
        let outcomes = self.optimize_types(&types, ns, total)?;
        let mut all = outcomes;
        if self.rules.mirror_representatives {
            let partners: Vec<TypeOutcome> = all
                .iter()
                .filter(|o| o.kind.negate() != o.kind)
                .map(|o| self.outcome(o.kind.negate(), o.durations.clone()))
                .collect();
            all.extend(partners);
        }
        all.sort_by(|a, b| a.kind.cmp(&b.kind));
        Ok(Probe {
            ns,
            total,
            outcomes: all,
        })
    }

    /// Optimises one type word.
    pub fn optimize_type(&self, kind: &BangOffType, total: f64) -> Result<TypeOutcome> {
        let ns = kind.switches();
        let index = enumerate_types(ns, PruneRules::none())
            .iter()
            .position(|w| w == kind)
            .unwrap_or(0);
        self.optimize_one(kind, index, ns, total)
    }

    fn outcome(&self, kind: BangOffType, durations: Vec<f64>) -> TypeOutcome {
        let infidelity = self.ev.infidelity(&kind, &durations);
        TypeOutcome {
            kind,
            durations,
            fidelity: 1.0 - infidelity,
            infidelity,
        }
    }

    fn optimize_types(&self, types: &[BangOffType], ns: usize, total: f64) -> Result<Vec<TypeOutcome>> {
        let all = enumerate_types(ns, PruneRules::none());
        types
            .par_iter()
            .map(|kind| {
                let index = all.iter().position(|w| w == kind).unwrap_or(0);
                self.optimize_one(kind, index, ns, total)
            })
            .collect()
    }

    fn optimize_one(&self, kind: &BangOffType, index: usize, ns: usize, total: f64) -> Result<TypeOutcome> {
        if kind.len() == 1 {
            return Ok(self.outcome(kind.clone(), vec![total]));
        }
        let master = derive_seed(derive_seed(self.config.seed, ns as u64), index as u64);
        let mut runs = (0..self.config.starts)
            .into_par_iter()
            .map(|i| {
                let cfg = self.config.sd.with_seed(derive_seed(master, i as u64));
                sd_durations_with(&self.ev, kind, total, None, &cfg)
            })
            .collect::<Result<Vec<_>>>()?;
        runs.sort_by(|a, b| a.best_infidelity.total_cmp(&b.best_infidelity));
        runs.truncate(self.config.polish_top);
        let polished = runs
            .into_par_iter()
            .map(|r| polish(&self.ev, kind, total, r))
            .collect::<Result<Vec<_>>>()?;
        let best = polished
            .into_iter()
            .reduce(|b, r| if r.best_infidelity < b.best_infidelity { r } else { b })
            .unwrap();
        let durations = best.bangoff().expect("bang-off result").durations().to_vec();
        Ok(self.outcome(kind.clone(), durations))
    }

    /// Repeatedly pins the shortest segment at zero while the re-optimised
    /// face still reaches `F ≥ 1 − delta`.
    pub fn simplify(&self, witness: &TypeOutcome, delta: f64) -> Result<TypeOutcome> {
        let total: f64 = witness.durations.iter().sum();
        let mut current = witness.clone();
        loop {
            let mut order: Vec<usize> = (0..current.durations.len())
                .filter(|&i| current.durations[i] > 0.0 && current.durations[i] <= self.config.qn.face_threshold * total)
                .collect();
            order.sort_by(|&a, &b| current.durations[a].total_cmp(&current.durations[b]));
            let mut changed = false;
            for i in order {
                if current.durations.iter().filter(|&&d| d > 0.0).count() <= 1 {
                    break;
                }
                let face = self.reoptimize_on_face(&current.kind, total, &current.durations, i)?;
                if face.infidelity <= delta {
                    current = face;
                    changed = true;
                    break;
                }
            }
            if !changed {
                return Ok(current);
            }
        }
    }

    fn reoptimize_on_face(&self, kind: &BangOffType, total: f64, start: &[f64], pinned: usize) -> Result<TypeOutcome> {
        let mut mask: Vec<bool> = start.iter().map(|&d| d == 0.0).collect();
        mask[pinned] = true;
        let qn = quasi_newton_on_face(&self.ev, kind, total, start, &self.config.qn, &mask)?;
        Ok(self.outcome(kind.clone(), qn.bangoff().expect("bang-off result").durations().to_vec()))
    }
}

/// `T_j = base + j·h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Lattice {
    pub base: f64,
    pub step: f64,
}

impl Lattice {
    /// Finest dyadic subdivision of `[lo, hi]` with spacing `≤ tol`; `hi`
    /// sits at index `2^n`.
    pub fn spanning(lo: f64, hi: f64, tol: f64) -> Result<(Self, u64)> {
        if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && hi > lo) {
            return Err(Error::invalid(format!("invalid bracket ({lo}, {hi})")));
        }
        if !(tol.is_finite() && tol > 0.0) {
            return Err(Error::invalid("bisection tolerance must be positive"));
        }
        let mut n = 0u32;
        while (hi - lo) / f64::from(2u32).powi(n as i32) > tol {
            n += 1;
            if n > 60 {
                return Err(Error::ResourceLimit("bisection lattice too fine".into()));
            }
        }
        let cells = 1u64 << n;
        Ok((
            Self {
                base: lo,
                step: (hi - lo) / cells as f64,
            },
            cells,
        ))
    }

    pub fn at(&self, j: u64) -> f64 {
        self.base + j as f64 * self.step
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinDuration {
    pub ns: usize,
    pub t_min: f64,
    /// Best control at `t_min`, with collapsible segments pinned at zero.
    pub witness: TypeOutcome,
    /// Every type reaching `F ≥ 1 − delta` at `t_min`.
    pub optimal: Vec<TypeOutcome>,
    pub probes: usize,
}

fn lattice_bisect(
    searcher: &Searcher<'_>,
    ns: usize,
    delta: f64,
    lattice: Lattice,
    mut lo: u64,
    mut hi: u64,
    mut hi_probe: Probe,
) -> Result<MinDuration> {
    let mut probes = 0;
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        let p = searcher.probe(ns, lattice.at(mid))?;
        probes += 1;
        if p.feasible(delta) {
            hi = mid;
            hi_probe = p;
        } else {
            lo = mid;
        }
    }
    let witness = searcher.simplify(hi_probe.best(), delta)?;
    Ok(MinDuration {
        ns,
        t_min: lattice.at(hi),
        witness,
        optimal: hi_probe.optimal(delta).into_iter().cloned().collect(),
        probes,
    })
}

fn degenerate_witness(sys: &ControlSystem, ns: usize) -> MinDuration {
    let kind = enumerate_types(0, PruneRules::none()).remove(0);
    let f = sys.trivial_fidelity();
    let w = TypeOutcome {
        kind,
        durations: vec![0.0],
        fidelity: f,
        infidelity: 1.0 - f,
    };
    MinDuration {
        ns,
        t_min: 0.0,
        witness: w.clone(),
        optimal: vec![w],
        probes: 0,
    }
}

/// Smallest lattice duration in `bracket` at which `ns` switches reach
/// `F ≥ 1 − delta`.
pub fn min_duration(
    sys: &ControlSystem,
    ns: usize,
    delta: f64,
    bracket: (f64, f64),
    tol: f64,
    config: &SearchConfig,
) -> Result<MinDuration> {
    check_delta(delta)?;
    if 1.0 - sys.trivial_fidelity() <= delta {
        return Ok(degenerate_witness(sys, ns));
    }
    let (lattice, cells) = Lattice::spanning(bracket.0, bracket.1, tol)?;
    let searcher = Searcher::new(sys, *config)?;
    let hi_probe = searcher.probe(ns, bracket.1)?;
    if !hi_probe.feasible(delta) {
        return Err(Error::Bracketing(format!(
            "{ns} switches do not reach 1 - {delta:e} at T = {}",
            bracket.1
        )));
    }
    if bracket.0 > 0.0 && searcher.probe(ns, bracket.0)?.feasible(delta) {
        return Err(Error::Bracketing(format!(
            "{ns} switches already reach 1 - {delta:e} at T = {}",
            bracket.0
        )));
    }
    let mut out = lattice_bisect(&searcher, ns, delta, lattice, 0, cells, hi_probe)?;
    out.probes += 2;
    Ok(out)
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta.is_finite() && delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!("delta must lie in (0, 1), got {delta}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QslConfig {
    pub delta: f64,
    pub ns_max: usize,
    pub tol: f64,
    /// Witness durations at or below this count as collapsed.
    pub zero_threshold: f64,
    /// First duration of the doubling scan for an upper bracket.
    pub scan_start: f64,
    /// Largest duration the scan may try.
    pub scan_limit: f64,
    pub search: SearchConfig,
}

impl Default for QslConfig {
    fn default() -> Self {
        Self {
            delta: DEFAULT_DELTA,
            ns_max: 5,
            tol: 1e-4,
            zero_threshold: 1e-6,
            scan_start: 0.25,
            scan_limit: 64.0,
            search: SearchConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QslReport {
    /// `N_s → T_i^min`; `None` when `N_s` never reached `1 − delta`.
    pub t_min_by_ns: BTreeMap<usize, Option<f64>>,
    pub qsl_estimate: Option<f64>,
    /// Switch count at which the estimate stabilised.
    pub ns_star: Option<usize>,
    pub optimal_types: Vec<BangOffType>,
    pub optimal_durations: Vec<Vec<f64>>,
    /// Witness of every switch count that was searched.
    pub witnesses: BTreeMap<usize, TypeOutcome>,
    pub delta: f64,
    pub tol: f64,
    pub zero_threshold: f64,
    pub bracket: (f64, f64),
    pub probes: usize,
    /// `false` when `ns_max` ran out before the stopping rule fired.
    pub converged: bool,
}

pub fn estimate_qsl(sys: &ControlSystem, config: &QslConfig) -> Result<QslReport> {
    check_delta(config.delta)?;
    if config.ns_max < 1 {
        return Err(Error::invalid("ns_max must be at least 1"));
    }
    if !(config.zero_threshold >= 0.0) || !(config.scan_start > 0.0) || !(config.scan_limit >= config.scan_start) {
        return Err(Error::invalid("invalid QSL scan settings"));
    }
    let delta = config.delta;
    let mut report = QslReport {
        t_min_by_ns: BTreeMap::new(),
        qsl_estimate: None,
        ns_star: None,
        optimal_types: Vec::new(),
        optimal_durations: Vec::new(),
        witnesses: BTreeMap::new(),
        delta,
        tol: config.tol,
        zero_threshold: config.zero_threshold,
        bracket: (0.0, 0.0),
        probes: 0,
        converged: false,
    };
    if 1.0 - sys.trivial_fidelity() <= delta {
        let d = degenerate_witness(sys, 0);
        report.t_min_by_ns.insert(0, Some(0.0));
        report.qsl_estimate = Some(0.0);
        report.ns_star = Some(0);
        report.optimal_types = vec![d.witness.kind.clone()];
        report.optimal_durations = vec![d.witness.durations.clone()];
        report.witnesses.insert(0, d.witness);
        report.converged = true;
        return Ok(report);
    }

    let searcher = Searcher::new(sys, config.search)?;
    // Doubling scan with the most capable switch count for a feasible upper end.
    let mut lo = 0.0;
    let mut hi = config.scan_start;
    let top_probe = loop {
        let p = searcher.probe(config.ns_max, hi)?;
        report.probes += 1;
        if p.feasible(delta) {
            break Some(p);
        }
        lo = hi;
        hi *= 2.0;
        if hi > config.scan_limit {
            break None;
        }
    };
    let Some(top_probe) = top_probe else {
        report.bracket = (lo, hi / 2.0);
        return Ok(report);
    };
    report.bracket = (lo, hi);
    let (lattice, cells) = Lattice::spanning(lo, hi, config.tol)?;

    // Fewer switches can be feasible only in a window around their minimum, so
    // the search runs downward: each N_s is tried at the minimum found for
    // N_s + 1 and one lattice step below it.
    let mut results: BTreeMap<usize, MinDuration> = BTreeMap::new();
    let top = lattice_bisect(&searcher, config.ns_max, delta, lattice, 0, cells, top_probe)?;
    report.probes += top.probes;
    let mut upper = index_of(lattice, top.t_min);
    results.insert(config.ns_max, top);
    for ns in (0..config.ns_max).rev() {
        let at_upper = searcher.probe(ns, lattice.at(upper))?;
        report.probes += 1;
        if !at_upper.feasible(delta) {
            break;
        }
        let md = if upper == 0 {
            lattice_bisect(&searcher, ns, delta, lattice, 0, 0, at_upper)?
        } else {
            let below = searcher.probe(ns, lattice.at(upper - 1))?;
            report.probes += 1;
            if below.feasible(delta) {
                lattice_bisect(&searcher, ns, delta, lattice, 0, upper - 1, below)?
            } else {
                lattice_bisect(&searcher, ns, delta, lattice, upper - 1, upper, at_upper)?
            }
        };
        report.probes += md.probes;
        upper = index_of(lattice, md.t_min);
        results.insert(ns, md);
    }
    for ns in 0..=config.ns_max {
        let md = results.get(&ns);
        report.t_min_by_ns.insert(ns, md.map(|m| m.t_min));
        if let Some(m) = md {
            report.witnesses.insert(ns, m.witness.clone());
        }
    }

    let stop = (0..config.ns_max).find(|&i| match (results.get(&i), results.get(&(i + 1))) {
        (Some(a), Some(b)) => {
            (a.t_min - b.t_min).abs() <= config.tol * (1.0 + 1e-9) && b.witness.min_duration() <= config.zero_threshold
        }
        _ => false,
    });
    let chosen = match stop {
        Some(i) => {
            report.converged = true;
            Some(i)
        }
        // No stabilisation: report the lowest switch count at the smallest duration.
        None => results
            .iter()
            .min_by(|a, b| a.1.t_min.total_cmp(&b.1.t_min).then(a.0.cmp(b.0)))
            .map(|(&ns, _)| ns),
    };
    if let Some(i) = chosen {
        let md = &results[&i];
        report.qsl_estimate = Some(md.t_min);
        report.ns_star = Some(i);
        report.optimal_types = md.optimal.iter().map(|o| o.kind.clone()).collect();
        report.optimal_durations = md.optimal.iter().map(|o| o.durations.clone()).collect();
    }
    Ok(report)
}

fn index_of(lattice: Lattice, t: f64) -> u64 {
    ((t - lattice.base) / lattice.step).round() as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CriticalTimeConfig {
    pub epsilon: f64,
    pub bracket: (f64, f64),
    pub tol: f64,
    pub search: SearchConfig,
}

/// Default threshold on `F₁ − F₀`: a numerical zero for the improvement.
pub const DEFAULT_CRITICAL_EPSILON: f64 = 1e-12;

impl Default for CriticalTimeConfig {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_CRITICAL_EPSILON,
            bracket: (0.5, 1.0),
            tol: 1e-4,
            search: SearchConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriticalTimeReport {
    pub t_c: f64,
    pub epsilon: f64,
    pub bracket: (f64, f64),
    /// `F₁ − F₀` at the two bracket ends.
    pub gain_low: f64,
    pub gain_high: f64,
    pub probes: usize,
}

/// `F₁(T) − F₀(T)`, computed from infidelities.
pub fn single_switch_gain(searcher: &Searcher<'_>, total: f64) -> Result<f64> {
    let f0 = searcher.probe(0, total)?;
    let f1 = searcher.probe(1, total)?;
    Ok(f0.best().infidelity - f1.best().infidelity)
}

/// Bisection for the onset of `F₁ − F₀ > epsilon`.
pub fn critical_time(sys: &ControlSystem, config: &CriticalTimeConfig) -> Result<CriticalTimeReport> {
    if !(config.epsilon.is_finite() && config.epsilon >= 0.0) {
        return Err(Error::invalid("epsilon must be non-negative"));
    }
    let (a, b) = config.bracket;
    if !(a > 0.0) {
        return Err(Error::invalid("critical-time bracket must start above zero"));
    }
    let (lattice, cells) = Lattice::spanning(a, b, config.tol)?;
    let searcher = Searcher::new(sys, config.search)?;
    let mut gain_low = single_switch_gain(&searcher, a)?;
    let mut gain_high = single_switch_gain(&searcher, b)?;
    if gain_low > config.epsilon || gain_high <= config.epsilon {
        return Err(Error::Bracketing(format!(
            "F1 - F0 is {gain_low:e} at T = {a} and {gain_high:e} at T = {b}; epsilon = {:e}",
            config.epsilon
        )));
    }
    let (mut lo, mut hi) = (0u64, cells);
    let mut probes = 2;
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        let g = single_switch_gain(&searcher, lattice.at(mid))?;
        probes += 1;
        if g > config.epsilon {
            hi = mid;
            gain_high = g;
        } else {
            lo = mid;
            gain_low = g;
        }
    }
    Ok(CriticalTimeReport {
        t_c: lattice.at(hi),
        epsilon: config.epsilon,
        bracket: (lattice.at(lo), lattice.at(hi)),
        gain_low,
        gain_high,
        probes,
    })
}

/// Default cap on the number of grid-oracle cells.
pub const DEFAULT_GRID_CAP: u64 = 100_000_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridOptimum {
    pub fidelity: f64,
    pub infidelity: f64,
    pub durations: Vec<f64>,
    pub cells: u64,
}

/// Number of compositions `k_1 + … + k_free ≤ resolution`.
pub fn grid_cells(free_axes: usize, resolution: u64) -> Option<u64> {
    // C(resolution + free, free), computed incrementally.
    let mut c: u128 = 1;
    for i in 1..=free_axes as u128 {
        c = c * (resolution as u128 + i) / i;
        if c > u64::MAX as u128 {
            return None;
        }
    }
    Some(c as u64)
}

/// Exhaustive scan of `t_i = k_i·T/resolution` over the free axes, the last
/// duration taking the remainder.
pub fn grid_oracle(
    sys: &ControlSystem,
    kind: &BangOffType,
    total: f64,
    resolution: u64,
    cap: u64,
) -> Result<GridOptimum> {
    if !(total.is_finite() && total > 0.0) {
        return Err(Error::invalid("grid oracle needs T > 0"));
    }
    let free = kind.len() - 1;
    if free > 0 && resolution < 2 {
        return Err(Error::invalid("grid resolution must be at least 2"));
    }
    let cells = grid_cells(free, resolution).unwrap_or(u64::MAX);
    if cells > cap {
        return Err(Error::ResourceLimit(format!("grid has {cells} cells, cap is {cap}")));
    }
    let ev = BangOffEvaluator::new(sys)?;
    if free == 0 {
        let i = ev.infidelity(kind, &[total]);
        return Ok(GridOptimum {
            fidelity: 1.0 - i,
            infidelity: i,
            durations: vec![total],
            cells: 1,
        });
    }
    let h = total / resolution as f64;
    // Parallel over the first axis; each worker walks the remaining compositions.
    let best = (0..=resolution)
        .into_par_iter()
        .map(|k0| {
            let mut idx = vec![0u64; free];
            idx[0] = k0;
            let mut t = vec![0.0; free + 1];
            let mut best = (f64::INFINITY, Vec::new());
            loop {
                let used: u64 = idx.iter().sum();
                for (ti, &k) in t.iter_mut().zip(&idx) {
                    *ti = k as f64 * h;
                }
                t[free] = (resolution - used) as f64 * h;
                let i = ev.infidelity(kind, &t);
                if i < best.0 {
                    best = (i, t.clone());
                }
                // Odometer over axes 1.. with Σ ≤ resolution.
                let mut axis = free;
                loop {
                    axis -= 1;
                    if axis == 0 {
                        return best;
                    }
                    let used: u64 = idx.iter().sum();
                    if used < resolution {
                        idx[axis] += 1;
                        break;
                    }
                    idx[axis] = 0;
                }
            }
        })
        .collect::<Vec<_>>()
        .into_iter()
        .reduce(|a, b| if b.0 < a.0 { b } else { a })
        .unwrap();
    Ok(GridOptimum {
        fidelity: 1.0 - best.0,
        infidelity: best.0,
        durations: best.1,
        cells,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub total: f64,
    pub best_fidelity: f64,
    pub best_infidelity: f64,
    pub best_type: BangOffType,
}

pub fn fidelity_vs_t(sys: &ControlSystem, ns: usize, grid: &[f64], config: &SearchConfig) -> Result<Vec<SweepPoint>> {
    if grid.is_empty() || grid[0] <= 0.0 || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("sweep grid must be positive and strictly increasing"));
    }
    let searcher = Searcher::new(sys, *config)?;
    grid.iter()
        .map(|&t| {
            let p = searcher.probe(ns, t)?;
            let b = p.best();
            Ok(SweepPoint {
                total: t,
                best_fidelity: b.fidelity,
                best_infidelity: b.infidelity,
                best_type: b.kind.clone(),
            })
        })
        .collect()
}

/// CSV with columns `T,best_F,best_type` (plus the exact infidelity).
pub fn sweep_csv(points: &[SweepPoint]) -> String {
    let mut out = String::from("T,best_F,best_type,infidelity\n");
    for p in points {
        out.push_str(&format!("{},{},{},{:e}\n", p.total, p.best_fidelity, p.best_type, p.best_infidelity));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::StateVector;
    use crate::model::{analytic_case1, three_level, two_level};

    fn case1() -> ControlSystem {
        two_level(1.0, 4.0 / 3.0, StateVector::basis(2, 1)).unwrap()
    }

    fn quick() -> SearchConfig {
        SearchConfig {
            starts: 6,
            sd: SdConfig::default().with_iterations(1500),
            polish_top: 2,
            ..SearchConfig::default()
        }
    }

    #[test]
    fn lattice_spacing() {
        let (l, cells) = Lattice::spanning(0.0, 1.0, 1e-3).unwrap();
        assert_eq!(cells, 1024);
        assert!(l.step <= 1e-3);
        assert_eq!(l.at(cells), 1.0);
        assert!(Lattice::spanning(1.0, 1.0, 1e-3).is_err());
    }

    #[test]
    fn rabi_ceiling_with_no_switch() {
        let sys = case1();
        let t = 0.3 * std::f64::consts::PI;
        let s = Searcher::new(&sys, quick()).unwrap();
        let p = s.probe(0, t).unwrap();
        assert!((p.best().fidelity - 0.64).abs() < 1e-12);
        // P, N and a lone off segment, which leaves the drift eigenstate alone.
        assert_eq!(p.outcomes.len(), 3);
        assert!((p.outcomes[0].fidelity - p.outcomes[1].fidelity).abs() < 1e-14);
        assert!(p.outcomes[2].fidelity < 1e-12);
    }

    #[test]
    fn probe_includes_mirror_partners() {
        let sys = three_level(1.0, 1.0, 2.0, 1.0).unwrap();
        let s = Searcher::new(&sys, quick()).unwrap();
        let p = s.probe(1, 1.0).unwrap();
        for o in &p.outcomes {
            let partner = p.outcomes.iter().find(|x| x.kind == o.kind.negate()).unwrap();
            assert!((partner.infidelity - o.infidelity).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_target_gives_zero() {
        let sys = case1().with_target(StateVector::basis(2, 0)).unwrap();
        let md = min_duration(&sys, 1, 1e-9, (0.1, 1.0), 1e-4, &quick()).unwrap();
        assert_eq!(md.t_min, 0.0);
        let r = estimate_qsl(&sys, &QslConfig::default()).unwrap();
        assert_eq!(r.qsl_estimate, Some(0.0));
    }

    #[test]
    fn min_duration_case1_single_switch() {
        let sys = case1();
        let a = analytic_case1(1.0, 4.0 / 3.0).unwrap();
        let md = min_duration(&sys, 1, 1e-9, (1.0, a.t_qsl), 1e-4, &quick()).unwrap();
        assert!((md.t_min - a.t_qsl).abs() < 1e-3, "{}", md.t_min);
        assert!(md.witness.infidelity <= 1e-9);
    }

    #[test]
    fn bracket_errors() {
        let sys = case1();
        // One switch cannot absorb spare time, so T = 2.5 is infeasible as well.
        assert!(min_duration(&sys, 1, 1e-9, (1.0, 2.5), 1e-4, &quick()).is_err());
        let e = min_duration(&sys, 1, 1e-9, (0.1, 0.5), 1e-4, &quick()).unwrap_err();
        assert!(matches!(e, Error::Bracketing(_)));
        let e = min_duration(&sys, 1, 1e-9, (2.0, 2.5), 1e-4, &quick()).unwrap_err();
        assert!(matches!(e, Error::Bracketing(_)));
    }

    #[test]
    fn grid_oracle_case1() {
        let sys = case1();
        let a = analytic_case1(1.0, 4.0 / 3.0).unwrap();
        let kind: BangOffType = "PN".parse().unwrap();
        let g = grid_oracle(&sys, &kind, a.t_qsl, 2000, DEFAULT_GRID_CAP).unwrap();
        let h = a.t_qsl / 2000.0;
        let t1 = g.durations[0];
        assert!((t1 - a.t1).abs() <= h || (t1 - a.t2).abs() <= h, "{t1}");
        let below = grid_oracle(&sys, &kind, a.t_qsl / 2.0, 2000, DEFAULT_GRID_CAP).unwrap();
        assert!(below.fidelity < 1.0 - 1e-3);
    }

    #[test]
    fn grid_oracle_limits() {
        let sys = case1();
        let one: BangOffType = "P".parse().unwrap();
        let g = grid_oracle(&sys, &one, 1.0, 2, DEFAULT_GRID_CAP).unwrap();
        assert_eq!(g.cells, 1);
        assert_eq!(g.durations, vec![1.0]);
        let big: BangOffType = "PNPNP".parse().unwrap();
        assert!(matches!(
            grid_oracle(&sys, &big, 1.0, 2000, DEFAULT_GRID_CAP),
            Err(Error::ResourceLimit(_))
        ));
        assert_eq!(grid_cells(2, 2), Some(6));
    }

    #[test]
    fn sweep_rejects_bad_grid() {
        let sys = case1();
        assert!(fidelity_vs_t(&sys, 0, &[1.0, 0.5], &quick()).is_err());
        let pts = fidelity_vs_t(&sys, 0, &[1e-6], &quick()).unwrap();
        assert!(pts[0].best_fidelity < 1e-10);
        assert!(sweep_csv(&pts).starts_with("T,best_F,best_type"));
    }

    #[test]
    fn estimate_case1() {
        let sys = case1();
        let a = analytic_case1(1.0, 4.0 / 3.0).unwrap();
        let cfg = QslConfig {
            ns_max: 2,
            search: quick(),
            ..QslConfig::default()
        };
        let r = estimate_qsl(&sys, &cfg).unwrap();
        assert!(r.converged, "{r:?}");
        assert_eq!(r.ns_star, Some(1));
        assert!((r.qsl_estimate.unwrap() - a.t_qsl).abs() < 1e-3);
        let words: Vec<String> = r.optimal_types.iter().map(|t| t.to_string()).collect();
        assert!(words.contains(&"PN".to_string()) && words.contains(&"NP".to_string()), "{words:?}");
    }
}
