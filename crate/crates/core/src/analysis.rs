// Copyright 2026 The bangoff Contributors
// SPDX-License-Identifier: Apache-2.0

//! Landscape grids, robustness sampling, pairwise control distances and
//! clustering of optimiser end points.

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controls::{distance, BangOffControl, BangOffType, PiecewiseControl, Symbol};
use crate::model::ControlSystem;
use crate::objective::{bures_from_infidelity, propagate_raw, state_infidelity, BangOffEvaluator};
use crate::rng::{derive_seed, stream};
use crate::{Error, Result};

/// Floor applied to `d_B` before taking `log₁₀`.
pub const BURES_FLOOR: f64 = 1e-16;

/// Default cap on landscape cells.
pub const DEFAULT_LANDSCAPE_CAP: usize = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl Axis {
    pub fn new(min: f64, max: f64, points: usize) -> Result<Self> {
        if !(min.is_finite() && max.is_finite() && min >= 0.0 && max >= min) {
            return Err(Error::invalid(format!("invalid axis range [{min}, {max}]")));
        }
        if points < 2 && max > min || points == 0 {
            return Err(Error::invalid("an axis needs at least two points"));
        }
        Ok(Self { min, max, points })
    }

    pub fn value(&self, i: usize) -> f64 {
        if self.points == 1 {
            return self.min;
        }
        if i + 1 == self.points {
            return self.max;
        }
        self.min + (self.max - self.min) * i as f64 / (self.points - 1) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Constraint {
    /// Two-segment types; `t₁` and `t₂` independent.
    FreeTotal,
    /// Three-segment types; `t₃ = T − t₁ − t₂`.
    FixedTotal { total: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LandscapeValue {
    Fidelity,
    Log10Bures,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LandscapeSpec {
    pub axis1: Axis,
    pub axis2: Axis,
    pub constraint: Constraint,
    pub value: LandscapeValue,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LandscapeGrid {
    pub kind: BangOffType,
    pub spec: LandscapeSpec,
    /// Row-major over `(axis1, axis2)`; `None` marks infeasible cells.
    pub values: Vec<Option<f64>>,
}

impl LandscapeGrid {
    pub fn rows(&self) -> usize {
        self.spec.axis1.points
    }

    pub fn cols(&self) -> usize {
        self.spec.axis2.points
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.values[i * self.cols() + j]
    }

    /// Columns `t1,t2,value`; infeasible cells omitted.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t1,t2,value\n");
        for i in 0..self.rows() {
            for j in 0..self.cols() {
                if let Some(v) = self.get(i, j) {
                    out.push_str(&format!("{},{},{}\n", self.spec.axis1.value(i), self.spec.axis2.value(j), v));
                }
            }
        }
        out
    }

    /// Cells whose value is below every feasible 8-neighbour (for
    /// `Log10Bures`) or above it (for `Fidelity`). Cells at the edge of the
    /// feasible region count as long as the comparison holds for the
    /// neighbours that exist.
    pub fn local_extrema(&self) -> Vec<(usize, usize, f64)> {
        let better = |a: f64, b: f64| match self.spec.value {
            LandscapeValue::Fidelity => a > b,
            LandscapeValue::Log10Bures => a < b,
        };
        let (r, c) = (self.rows() as isize, self.cols() as isize);
        let mut out = Vec::new();
        for i in 0..r {
            for j in 0..c {
                let Some(v) = self.get(i as usize, j as usize) else { continue };
                let mut is_ext = true;
                'nb: for di in -1..=1 {
                    for dj in -1..=1 {
                        if di == 0 && dj == 0 {
                            continue;
                        }
                        let (a, b) = (i + di, j + dj);
                        if a < 0 || b < 0 || a >= r || b >= c {
                            continue;
                        }
                        if let Some(w) = self.get(a as usize, b as usize) {
                            if !better(v, w) {
                                is_ext = false;
                                break 'nb;
                            }
                        }
                    }
                }
                if is_ext {
                    out.push((i as usize, j as usize, v));
                }
            }
        }
        out
    }
}

pub fn landscape(sys: &ControlSystem, kind: &BangOffType, spec: &LandscapeSpec, cap: usize) -> Result<LandscapeGrid> {
    let cells = spec.axis1.points.saturating_mul(spec.axis2.points);
    if cells > cap {
        return Err(Error::ResourceLimit(format!("landscape has {cells} cells, cap is {cap}")));
    }
    let needed = match spec.constraint {
        Constraint::FreeTotal => 2,
        Constraint::FixedTotal { total } => {
            if !(total.is_finite() && total > 0.0) {
                return Err(Error::invalid("fixed-total landscape needs T > 0"));
            }
            3
        }
    };
    if kind.len() != needed {
        return Err(Error::invalid(format!(
            "type {kind} has {} segments, this landscape needs {needed}",
            kind.len()
        )));
    }
    let ev = BangOffEvaluator::new(sys)?;
    let cols = spec.axis2.points;
    let values = (0..cells)
        .into_par_iter()
        .map(|idx| {
            let (t1, t2) = (spec.axis1.value(idx / cols), spec.axis2.value(idx % cols));
            let durations = match spec.constraint {
                Constraint::FreeTotal => vec![t1, t2],
                Constraint::FixedTotal { total } => {
                    let rest = total - t1 - t2;
                    if rest < -1e-12 * total {
                        return None;
                    }
                    vec![t1, t2, rest.max(0.0)]
                }
            };
            Some(cell_value(&ev, kind, &durations, spec.value))
        })
        .collect();
    Ok(LandscapeGrid {
        kind: kind.clone(),
        spec: *spec,
        values,
    })
}

/// Value of one landscape cell.
pub fn cell_value(ev: &BangOffEvaluator, kind: &BangOffType, durations: &[f64], value: LandscapeValue) -> f64 {
    let i = ev.infidelity(kind, durations);
    match value {
        LandscapeValue::Fidelity => 1.0 - i,
        LandscapeValue::Log10Bures => bures_from_infidelity(i).max(BURES_FLOOR).log10(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationMode {
    /// Every duration drawn from `N(t_i, σ²)`, negative draws clipped to 0.
    Durations,
    /// Bang levels drawn from `N(+M, σ²)` and `N(−M, σ²)` once per sample.
    Bound,
}

impl std::fmt::Display for PerturbationMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PerturbationMode::Durations => "durations",
            PerturbationMode::Bound => "bound",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RobustnessStats {
    pub sigma: f64,
    pub mode: PerturbationMode,
    pub n_samples: usize,
    pub mean_error: f64,
    pub std_error: f64,
}

/// Infidelity threshold a control must meet before it is perturbed.
pub const ROBUSTNESS_NOMINAL_DELTA: f64 = 1e-9;

pub fn robustness(
    sys: &ControlSystem,
    control: &BangOffControl,
    mode: PerturbationMode,
    sigmas: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<Vec<RobustnessStats>> {
    if n_samples == 0 {
        return Err(Error::invalid("robustness needs at least one sample"));
    }
    if sigmas.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(Error::invalid("perturbation scales must be positive"));
    }
    if (control.amplitude() - sys.bound()).abs() > 1e-12 * sys.bound() {
        return Err(Error::invalid("control amplitude differs from the system bound"));
    }
    let ev = BangOffEvaluator::new(sys)?;
    let nominal = ev.infidelity(control.kind(), control.durations());
    if nominal > ROBUSTNESS_NOMINAL_DELTA {
        return Err(Error::invalid(format!(
            "nominal control has infidelity {nominal:e}; robustness needs a perfect-fidelity control"
        )));
    }
    let unit = Normal::new(0.0, 1.0).unwrap();
    sigmas
        .iter()
        .enumerate()
        .map(|(k, &sigma)| {
            let master = derive_seed(seed, k as u64);
            let errors = (0..n_samples)
                .into_par_iter()
                .map(|i| {
                    let mut rng = stream(derive_seed(master, i as u64));
                    match mode {
                        PerturbationMode::Durations => {
                            let d: Vec<f64> = control
                                .durations()
                                .iter()
                                .map(|&t| (t + sigma * unit.sample(&mut rng)).max(0.0))
                                .collect();
                            Ok(ev.infidelity(control.kind(), &d))
                        }
                        PerturbationMode::Bound => {
                            let m = control.amplitude();
                            let up = m + sigma * unit.sample(&mut rng);
                            let down = -m + sigma * unit.sample(&mut rng);
                            let segs: Vec<(f64, f64)> = control
                                .kind()
                                .symbols()
                                .iter()
                                .zip(control.durations())
                                .map(|(s, &t)| {
                                    let u = match s {
                                        Symbol::P => up,
                                        Symbol::N => down,
                                        Symbol::Z => 0.0,
                                    };
                                    (u, t)
                                })
                                .collect();
                            let psi = propagate_raw(sys, &segs)?;
                            Ok(state_infidelity(sys.target(), &psi))
                        }
                    }
                })
                .collect::<Result<Vec<f64>>>()?;
            let (mean, std) = mean_std(&errors);
            Ok(RobustnessStats {
                sigma,
                mode,
                n_samples,
                mean_error: mean,
                std_error: std,
            })
        })
        .collect()
}

/// Mean and sample standard deviation (`n − 1` denominator; 0 for `n = 1`).
fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Columns `sigma,mode,mean_error,std_error,n`.
pub fn robustness_csv(stats: &[RobustnessStats]) -> String {
    let mut out = String::from("sigma,mode,mean_error,std_error,n\n");
    for s in stats {
        out.push_str(&format!(
            "{:e},{},{:e},{:e},{}\n",
            s.sigma, s.mode, s.mean_error, s.std_error, s.n_samples
        ));
    }
    out
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.len() < 3 {
        return Err(Error::invalid("log-log slope needs at least three points"));
    }
    if pairs.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite())) {
        return Err(Error::invalid("log-log slope needs positive finite values"));
    }
    let n = pairs.len() as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = pairs.iter().map(|&(x, y)| (x.ln(), y.ln())).unzip();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("log-log slope needs at least two distinct x values"));
    }
    Ok(sxy / sxx)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    /// `counts.len() + 1` bin edges.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    /// Freedman–Diaconis bin width `2·IQR·n^(−1/3)` with `n` the sample
    /// size; a single bin when the spread or IQR is zero.
    pub fn freedman_diaconis(values: &[f64]) -> Result<Self> {
        Self::freedman_diaconis_with(values, values.len(), None)
    }

    /// Freedman–Diaconis with an explicit effective sample size. With
    /// `lattice = Some(q)` the values are multiples of `q`: the width is
    /// rounded up to whole lattice steps and edges sit halfway between
    /// lattice points, so no bin is structurally empty.
    pub fn freedman_diaconis_with(values: &[f64], n_eff: usize, lattice: Option<f64>) -> Result<Self> {
        if values.is_empty() || n_eff == 0 {
            return Err(Error::invalid("histogram of an empty sample"));
        }
        if let Some(q) = lattice {
            if !(q.is_finite() && q > 0.0) {
                return Err(Error::invalid("lattice spacing must be positive"));
            }
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let (lo, hi) = (v[0], v[v.len() - 1]);
        let iqr = quantile(&v, 0.75) - quantile(&v, 0.25);
        let mut width = 2.0 * iqr / (n_eff as f64).cbrt();
        let mut base = lo;
        if let Some(q) = lattice {
            width = q * (width / q - 1e-9).ceil().max(1.0);
            base = (lo / q).round() * q - 0.5 * q;
        }
        if hi == lo || !(width > 0.0) {
            return Ok(Self {
                edges: vec![lo, hi],
                counts: vec![v.len()],
            });
        }
        let bins = ((hi - base) / width).floor() as usize + 1;
        let edges: Vec<f64> = (0..=bins).map(|b| base + b as f64 * width).collect();
        let mut counts = vec![0usize; bins];
        for &x in &v {
            let b = (((x - base) / width).max(0.0) as usize).min(bins - 1);
            counts[b] += 1;
        }
        while counts.len() > 1 && *counts.last().unwrap() == 0 {
            counts.pop();
        }
        let edges = edges[..=counts.len()].to_vec();
        Ok(Self { edges, counts })
    }

    /// Local maxima (plateaus counted once) holding more than `fraction` of
    /// the modal count.
    pub fn peaks(&self, fraction: f64) -> Vec<usize> {
        let max = *self.counts.iter().max().unwrap_or(&0);
        let floor = fraction * max as f64;
        let n = self.counts.len();
        let mut out = Vec::new();
        let mut i = 0;
        while i < n {
            let mut j = i;
            while j + 1 < n && self.counts[j + 1] == self.counts[i] {
                j += 1;
            }
            let left = if i == 0 { 0 } else { self.counts[i - 1] };
            let right = if j + 1 == n { 0 } else { self.counts[j + 1] };
            let c = self.counts[i];
            if c as f64 > floor && c > left && c > right {
                out.push((i + j) / 2);
            }
            i = j + 1;
        }
        out
    }
}

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (a, frac) = (pos.floor() as usize, pos.fract());
    if a + 1 >= sorted.len() {
        return sorted[a];
    }
    sorted[a] + frac * (sorted[a + 1] - sorted[a])
}

/// Peaks must exceed this fraction of the modal bin.
pub const PEAK_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistanceDistribution {
    /// `(i, j, D_ij)` for `i < j`.
    pub pairs: Vec<(usize, usize, f64)>,
    pub histogram: Histogram,
    pub peaks: usize,
}

impl DistanceDistribution {
    /// Columns `i,j,D`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("i,j,D\n");
        for &(i, j, d) in &self.pairs {
            out.push_str(&format!("{i},{j},{d}\n"));
        }
        out
    }
}

pub fn distance_distribution(controls: &[PiecewiseControl]) -> Result<DistanceDistribution> {
    if controls.len() < 2 {
        return Err(Error::invalid("distance distribution needs at least two controls"));
    }
    let n = controls.len();
    let pairs = (0..n)
        .into_par_iter()
        .map(|i| {
            ((i + 1)..n)
                .map(|j| distance(&controls[i], &controls[j]).map(|d| (i, j, d)))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect::<Vec<_>>();
    let ds: Vec<f64> = pairs.iter().map(|p| p.2).collect();
    // Distances between second-class bang-off controls are multiples of M/N_T.
    let (m, slots) = (controls[0].bound(), controls[0].slots());
    let lattice = controls
        .iter()
        .all(|c| c.is_bang_off() && c.bound() == m)
        .then(|| m / slots as f64);
    // The pairs share their N controls, so N is the sample size.
    let histogram = Histogram::freedman_diaconis_with(&ds, n, lattice)?;
    let peaks = histogram.peaks(PEAK_FRACTION).len();
    Ok(DistanceDistribution { pairs, histogram, peaks })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinimumCluster {
    pub durations: Vec<f64>,
    pub infidelity: f64,
    pub log10_bures: f64,
    /// Number of end points in the cluster.
    pub count: usize,
}

/// Groups optimiser end points whose durations lie within `tol` (max-norm)
/// of a cluster's best member. Clusters are ordered by depth.
pub fn cluster_minima(points: &[(Vec<f64>, f64)], tol: f64) -> Vec<MinimumCluster> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[a].1.total_cmp(&points[b].1));
    let mut clusters: Vec<MinimumCluster> = Vec::new();
    for i in order {
        let (d, inf) = &points[i];
        let hit = clusters.iter_mut().find(|c| {
            c.durations.len() == d.len() && c.durations.iter().zip(d).all(|(a, b)| (a - b).abs() <= tol)
        });
        match hit {
            Some(c) => c.count += 1,
            None => clusters.push(MinimumCluster {
                durations: d.clone(),
                infidelity: *inf,
                log10_bures: bures_from_infidelity(*inf).max(BURES_FLOOR).log10(),
                count: 1,
            }),
        }
    }
    clusters
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
    fn free_total_landscape_is_periodic() {
        let sys = case1();
        let q = analytic_case1(1.0, 4.0 / 3.0).unwrap().t_qsl;
        // Two periods per axis with an even point count, so shifting by half the grid moves by q.
        let axis = Axis::new(0.0, 2.0 * q, 41).unwrap();
        let spec = LandscapeSpec {
            axis1: axis,
            axis2: axis,
            constraint: Constraint::FreeTotal,
            value: LandscapeValue::Fidelity,
        };
        let g = landscape(&sys, &"PN".parse().unwrap(), &spec, DEFAULT_LANDSCAPE_CAP).unwrap();
        for i in 0..20 {
            for j in 0..20 {
                let v = g.get(i, j).unwrap();
                assert!((g.get(i + 20, j).unwrap() - v).abs() < 1e-10);
                assert!((g.get(i, j + 20).unwrap() - v).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn fixed_total_marks_infeasible_cells() {
        let sys = case1();
        let axis = Axis::new(0.0, 1.0, 11).unwrap();
        let spec = LandscapeSpec {
            axis1: axis,
            axis2: axis,
            constraint: Constraint::FixedTotal { total: 1.0 },
            value: LandscapeValue::Log10Bures,
        };
        let g = landscape(&sys, &"P0N".parse().unwrap(), &spec, DEFAULT_LANDSCAPE_CAP).unwrap();
        assert!(g.get(10, 10).is_none());
        assert!(g.get(5, 5).is_some());
        assert_eq!(g.values.iter().filter(|v| v.is_some()).count(), 66);
        let csv = g.to_csv();
        assert_eq!(csv.lines().count(), 67);
        assert!(landscape(&sys, &"PN".parse().unwrap(), &spec, DEFAULT_LANDSCAPE_CAP).is_err());
        assert!(matches!(
            landscape(&sys, &"P0N".parse().unwrap(), &spec, 10),
            Err(Error::ResourceLimit(_))
        ));
    }

    #[test]
    fn landscape_cells_match_direct_calls() {
        let sys = three_level(1.0, 1.0, 2.0, 1.0).unwrap();
        let kind: BangOffType = "P0N".parse().unwrap();
        let spec = LandscapeSpec {
            axis1: Axis::new(0.0, 2.0, 30).unwrap(),
            axis2: Axis::new(0.0, 2.0, 30).unwrap(),
            constraint: Constraint::FixedTotal { total: 2.0 },
            value: LandscapeValue::Log10Bures,
        };
        let g = landscape(&sys, &kind, &spec, DEFAULT_LANDSCAPE_CAP).unwrap();
        let ev = BangOffEvaluator::new(&sys).unwrap();
        let mut rng = stream(5);
        use rand::Rng;
        let mut checked = 0;
        while checked < 100 {
            let (i, j) = (rng.random_range(0..30), rng.random_range(0..30));
            if let Some(v) = g.get(i, j) {
                let (t1, t2) = (spec.axis1.value(i), spec.axis2.value(j));
                let d = [t1, t2, (2.0 - t1 - t2).max(0.0)];
                assert_eq!(v, cell_value(&ev, &kind, &d, LandscapeValue::Log10Bures));
                checked += 1;
            }
        }
        // Mirror symmetry of the three-level system, cell by cell.
        let m = landscape(&sys, &kind.negate(), &spec, DEFAULT_LANDSCAPE_CAP).unwrap();
        for (a, b) in g.values.iter().zip(&m.values) {
            match (a, b) {
                (Some(a), Some(b)) => assert!((a - b).abs() < 1e-12),
                (None, None) => {}
                _ => panic!("feasibility differs"),
            }
        }
    }

    #[test]
    fn local_extrema_of_a_bowl() {
        let g = LandscapeGrid {
            kind: "P0N".parse().unwrap(),
            spec: LandscapeSpec {
                axis1: Axis::new(0.0, 1.0, 5).unwrap(),
                axis2: Axis::new(0.0, 1.0, 5).unwrap(),
                constraint: Constraint::FreeTotal,
                value: LandscapeValue::Log10Bures,
            },
            values: (0..25)
                .map(|k| {
                    let (i, j) = ((k / 5) as f64, (k % 5) as f64);
                    Some((i - 1.0).powi(2) + (j - 1.0).powi(2))
                })
                .collect(),
        };
        assert_eq!(g.local_extrema(), vec![(1, 1, 0.0)]);
    }

    #[test]
    fn robustness_zero_limit_and_errors() {
        let sys = case1();
        let a = analytic_case1(1.0, 4.0 / 3.0).unwrap();
        let c = BangOffControl::new("PN".parse().unwrap(), vec![a.t1, a.t2], 4.0 / 3.0).unwrap();
        let s = robustness(&sys, &c, PerturbationMode::Durations, &[1e-8], 200, 1).unwrap();
        assert!(s[0].mean_error < 1e-14);
        let s = robustness(&sys, &c, PerturbationMode::Bound, &[1e-8], 200, 1).unwrap();
        assert!(s[0].mean_error < 1e-14 && s[0].std_error >= 0.0);
        let bad = BangOffControl::new("PN".parse().unwrap(), vec![0.5, 1.0], 4.0 / 3.0).unwrap();
        assert!(robustness(&sys, &bad, PerturbationMode::Durations, &[1e-3], 10, 1).is_err());
        assert!(robustness(&sys, &c, PerturbationMode::Durations, &[0.0], 10, 1).is_err());
        let csv = robustness_csv(&s);
        assert!(csv.starts_with("sigma,mode,mean_error,std_error,n\n1e-8,bound,"));
    }

    #[test]
    fn robustness_is_seeded() {
        let sys = case1();
        let a = analytic_case1(1.0, 4.0 / 3.0).unwrap();
        let c = BangOffControl::new("PN".parse().unwrap(), vec![a.t1, a.t2], 4.0 / 3.0).unwrap();
        let x = robustness(&sys, &c, PerturbationMode::Durations, &[1e-2, 1e-1], 300, 9).unwrap();
        let y = robustness(&sys, &c, PerturbationMode::Durations, &[1e-2, 1e-1], 300, 9).unwrap();
        assert_eq!(x, y);
        assert!(x[1].mean_error > x[0].mean_error);
    }

    #[test]
    fn slopes() {
        let quad: Vec<(f64, f64)> = [1e-3, 1e-2, 1e-1].iter().map(|&s| (s, 3.0 * s * s)).collect();
        assert!((loglog_slope(&quad).unwrap() - 2.0).abs() < 1e-12);
        let lin: Vec<(f64, f64)> = [1.0, 2.0, 4.0, 8.0].iter().map(|&s| (s, 0.5 * s)).collect();
        assert!((loglog_slope(&lin).unwrap() - 1.0).abs() < 1e-12);
        assert!(loglog_slope(&quad[..2]).is_err());
        assert!(loglog_slope(&[(1.0, 1.0), (2.0, 0.0), (3.0, 1.0)]).is_err());
    }

    #[test]
    fn identical_controls_give_a_single_atom() {
        let p = PiecewiseControl::new(vec![1.0, -1.0, 0.0, 1.0], 0.25, 1.0).unwrap();
        let d = distance_distribution(&[p.clone(), p.clone(), p]).unwrap();
        assert_eq!(d.pairs.len(), 3);
        assert!(d.pairs.iter().all(|x| x.2 == 0.0));
        assert_eq!(d.histogram.counts, vec![3]);
        assert_eq!(d.peaks, 1);
        assert!(d.to_csv().starts_with("i,j,D\n0,1,0\n"));
    }

    #[test]
    fn mixed_grids_are_rejected() {
        let a = PiecewiseControl::new(vec![1.0, -1.0], 0.5, 1.0).unwrap();
        let b = PiecewiseControl::new(vec![1.0, -1.0, 0.0], 0.5, 1.0).unwrap();
        assert!(distance_distribution(&[a, b]).is_err());
    }

    #[test]
    fn histogram_peaks() {
        let h = Histogram {
            edges: (0..=7).map(f64::from).collect(),
            counts: vec![1, 10, 2, 0, 6, 6, 1],
        };
        assert_eq!(h.peaks(0.05), vec![1, 4]);
        assert_eq!(h.peaks(0.7), vec![1]);
        let fd = Histogram::freedman_diaconis(&[0.0, 0.0, 1.0, 1.0, 1.0, 2.0, 2.0, 3.0]).unwrap();
        assert_eq!(fd.counts.iter().sum::<usize>(), 8);
    }

    #[test]
    fn lattice_histogram_has_no_comb() {
        // Multiples of 0.1; the raw width (2·1.5/46) is below the spacing.
        let v: Vec<f64> = (0..100_000).map(|k| ((k * 7919) % 31) as f64 * 0.1).collect();
        let raw = Histogram::freedman_diaconis(&v).unwrap();
        assert!(raw.counts.iter().any(|&c| c == 0));
        let h = Histogram::freedman_diaconis_with(&v, v.len(), Some(0.1)).unwrap();
        assert!(h.counts.iter().all(|&c| c > 0));
        assert_eq!(h.counts.iter().sum::<usize>(), 100_000);
        let w = h.edges[1] - h.edges[0];
        assert!(((w / 0.1).round() - w / 0.1).abs() < 1e-9);
        assert!((h.edges[0] + 0.05).abs() < 1e-12);
        let coarse = Histogram::freedman_diaconis_with(&v, 8, Some(0.1)).unwrap();
        assert!(coarse.counts.len() < h.counts.len());
    }

    #[test]
    fn clustering() {
        let pts = vec![
            (vec![0.65, 1.23], 1e-20),
            (vec![0.6501, 1.2299], 1e-18),
            (vec![1.23, 0.65], 1e-19),
            (vec![0.9, 0.9], 1e-2),
        ];
        let c = cluster_minima(&pts, 1e-3);
        assert_eq!(c.len(), 3);
        assert_eq!(c[0].count, 2);
        assert_eq!(c[2].durations, vec![0.9, 0.9]);
        assert!((c[2].log10_bures - bures_from_infidelity(1e-2).log10()).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn distance_matrix_is_symmetric(seed in any::<u64>()) {
            use rand::Rng;
            let mut rng = stream(seed);
            let controls: Vec<PiecewiseControl> = (0..5)
                .map(|_| {
                    let v = (0..8).map(|_| [-1.0, 0.0, 1.0][rng.random_range(0..3)]).collect();
                    PiecewiseControl::new(v, 0.1, 1.0).unwrap()
                })
                .collect();
            let d = distance_distribution(&controls).unwrap();
            prop_assert_eq!(d.pairs.len(), 10);
            for &(i, j, dij) in &d.pairs {
                prop_assert!(i < j);
                prop_assert_eq!(dij, distance(&controls[j], &controls[i]).unwrap());
                prop_assert_eq!(distance(&controls[i], &controls[i]).unwrap(), 0.0);
            }
        }
    }
}
