// Copyright 2026 The bangoff Contributors
// SPDX-License-Identifier: Apache-2.0

//! Control-field parameterisations.
//!
//! - [`BangOffControl`]: a type word over `{P, N, 0}` plus free segment durations.
//! - [`PiecewiseControl`]: per-slot values on a uniform grid (`δt = T/N_T`).
//! - [`CrabControl`]: a clamped, randomised truncated Fourier series.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::model::ControlSystem;
use crate::{Error, Result};

/// One letter of a bang-off type word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Symbol {
    /// `u = +M`
    P,
    /// `u = −M`
    N,
    /// `u = 0`, printed `0`.
    Z,
}

impl Symbol {
    pub const ALL: [Symbol; 3] = [Symbol::P, Symbol::N, Symbol::Z];

    pub fn level(self, bound: f64) -> f64 {
        match self {
            Symbol::P => bound,
            Symbol::N => -bound,
            Symbol::Z => 0.0,
        }
    }

    pub fn negate(self) -> Symbol {
        match self {
            Symbol::P => Symbol::N,
            Symbol::N => Symbol::P,
            Symbol::Z => Symbol::Z,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Symbol::P => 'P',
            Symbol::N => 'N',
            Symbol::Z => '0',
        }
    }
}

/// A sequence of distinct-neighbour symbols; `switches() = len − 1`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BangOffType(Vec<Symbol>);

impl BangOffType {
    pub fn new(word: Vec<Symbol>) -> Result<Self> {
        if word.is_empty() {
            return Err(Error::invalid("type word must contain at least one symbol"));
        }
        if word.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid(format!(
                "type word {} repeats a symbol across a switch",
                word.iter().map(|s| s.as_char()).collect::<String>()
            )));
        }
        Ok(Self(word))
    }

    pub fn symbols(&self) -> &[Symbol] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn switches(&self) -> usize {
        self.0.len() - 1
    }

    pub fn negate(&self) -> Self {
        Self(self.0.iter().map(|s| s.negate()).collect())
    }
}

impl fmt::Display for BangOffType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.0 {
            write!(f, "{}", s.as_char())?;
        }
        Ok(())
    }
}

impl FromStr for BangOffType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let word = s
            .trim()
            .chars()
            .map(|ch| match ch {
                'P' | 'p' => Ok(Symbol::P),
                'N' | 'n' => Ok(Symbol::N),
                'Z' | 'z' | '0' => Ok(Symbol::Z),
                other => Err(Error::Parse(format!("unknown control symbol {other:?} in {s:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(word)
    }
}

impl Serialize for BangOffType {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BangOffType {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Type-enumeration pruning.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PruneRules {
    /// Initial state is a drift eigenstate: a leading off segment only adds a phase.
    pub drop_leading_off: bool,
    /// Target state is a drift eigenstate: a trailing off segment only adds a phase.
    pub drop_trailing_off: bool,
    /// `F(u) = F(−u)`: keep only the lexicographically smaller of `w`, `negate(w)`.
    pub mirror_representatives: bool,
}

impl PruneRules {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn for_system(sys: &ControlSystem) -> Self {
        Self {
            drop_leading_off: sys.initial_is_drift_eigenstate(),
            drop_trailing_off: sys.target_is_drift_eigenstate(),
            mirror_representatives: sys.has_mirror_symmetry(),
        }
    }
}

/// All type words with `ns` switches, in lexicographic order (`P < N < 0`).
pub fn enumerate_types(ns: usize, rules: PruneRules) -> Vec<BangOffType> {
    let mut out = Vec::with_capacity(3 << ns.min(20));
    let mut word = Vec::with_capacity(ns + 1);
    extend_words(ns + 1, &mut word, &mut out);
    out.into_iter()
        .filter(|w| {
            let syms = w.symbols();
            let lead_ok = !(rules.drop_leading_off && syms[0] == Symbol::Z && syms.len() > 1);
            let trail_ok = !(rules.drop_trailing_off && syms[syms.len() - 1] == Symbol::Z && syms.len() > 1);
            let mirror_ok = !rules.mirror_representatives || *w <= w.negate();
            lead_ok && trail_ok && mirror_ok
        })
        .collect()
}

fn extend_words(len: usize, word: &mut Vec<Symbol>, out: &mut Vec<BangOffType>) {
    if word.len() == len {
        out.push(BangOffType(word.clone()));
        return;
    }
    for s in Symbol::ALL {
        if word.last() != Some(&s) {
            word.push(s);
            extend_words(len, word, out);
            word.pop();
        }
    }
}

fn check_time(t: f64, total: f64) -> Result<()> {
    if !(t.is_finite() && t >= 0.0 && t <= total) {
        return Err(Error::invalid(format!("sample time {t} outside [0, {total}]")));
    }
    Ok(())
}

/// First-class bang-off control.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BangOffControl {
    kind: BangOffType,
    durations: Vec<f64>,
    amplitude: f64,
}

impl BangOffControl {
    pub fn new(kind: BangOffType, durations: Vec<f64>, amplitude: f64) -> Result<Self> {
        if durations.len() != kind.len() {
            return Err(Error::invalid(format!(
                "type {kind} has {} segments but {} durations were given",
                kind.len(),
                durations.len()
            )));
        }
        if durations.iter().any(|d| !d.is_finite() || *d < 0.0) {
            return Err(Error::invalid("durations must be finite and non-negative"));
        }
        if !(amplitude.is_finite() && amplitude > 0.0) {
            return Err(Error::invalid("bang amplitude must be positive"));
        }
        Ok(Self {
            kind,
            durations,
            amplitude,
        })
    }

    pub fn kind(&self) -> &BangOffType {
        &self.kind
    }

    pub fn durations(&self) -> &[f64] {
        &self.durations
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn total(&self) -> f64 {
        self.durations.iter().sum()
    }

    /// `(u, duration)` in time order.
    pub fn segments(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.kind
            .symbols()
            .iter()
            .zip(&self.durations)
            .map(|(s, &d)| (s.level(self.amplitude), d))
    }

    pub fn sample(&self, t: f64) -> Result<f64> {
        let total = self.total();
        check_time(t, total)?;
        let mut start = 0.0;
        let mut last_positive = None;
        for (i, &d) in self.durations.iter().enumerate() {
            let end = start + d;
            if d > 0.0 {
                if t >= start && t < end {
                    return Ok(self.kind.symbols()[i].level(self.amplitude));
                }
                last_positive = Some(i);
            }
            start = end;
        }
        let i = last_positive.unwrap_or(self.durations.len() - 1);
        Ok(self.kind.symbols()[i].level(self.amplitude))
    }

    pub fn negate(&self) -> Self {
        Self {
            kind: self.kind.negate(),
            durations: self.durations.clone(),
            amplitude: self.amplitude,
        }
    }

    pub fn to_piecewise(&self, slots: usize) -> Result<PiecewiseControl> {
        to_piecewise_with(self.total(), slots, self.amplitude, |t| self.sample(t))
    }
}

/// Second-class control: one value per uniform time slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseControl {
    values: Vec<f64>,
    dt: f64,
    bound: f64,
}

impl PiecewiseControl {
    pub fn new(values: Vec<f64>, dt: f64, bound: f64) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("piecewise control needs at least one slot"));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::invalid(format!("slot width must be positive, got {dt}")));
        }
        if !(bound.is_finite() && bound > 0.0) {
            return Err(Error::invalid("bound must be positive"));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || v.abs() > bound + 1e-12) {
            return Err(Error::invalid(format!("slot value {v} exceeds bound {bound}")));
        }
        Ok(Self { values, dt, bound })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn slots(&self) -> usize {
        self.values.len()
    }

    pub fn total(&self) -> f64 {
        self.dt * self.values.len() as f64
    }

    pub fn segments(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.values.iter().map(move |&u| (u, self.dt))
    }

    pub fn sample(&self, t: f64) -> Result<f64> {
        check_time(t, self.total())?;
        let k = ((t / self.dt).floor() as usize).min(self.values.len() - 1);
        Ok(self.values[k])
    }

    pub fn negate(&self) -> Self {
        Self {
            values: self.values.iter().map(|v| -v).collect(),
            dt: self.dt,
            bound: self.bound,
        }
    }

    /// Whether every slot sits exactly on `{−M, 0, +M}`.
    pub fn is_bang_off(&self) -> bool {
        self.values
            .iter()
            .all(|&v| v == 0.0 || v == self.bound || v == -self.bound)
    }

    /// `t,u` rows at slot midpoints.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,u\n");
        for (k, v) in self.values.iter().enumerate() {
            out.push_str(&format!("{},{}\n", (k as f64 + 0.5) * self.dt, v));
        }
        out
    }
}

/// Mean absolute slot difference, `(1/N_T)·Σ|u_i[k] − u_j[k]|`.
pub fn distance(a: &PiecewiseControl, b: &PiecewiseControl) -> Result<f64> {
    if a.slots() != b.slots() || (a.dt - b.dt).abs() > 1e-12 * a.dt.max(b.dt) {
        return Err(Error::invalid(format!(
            "distance between controls on different grids ({} x {}, {} x {})",
            a.slots(),
            a.dt,
            b.slots(),
            b.dt
        )));
    }
    let sum: f64 = a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()).sum();
    Ok(sum / a.slots() as f64)
}

/// Chopped-random-basis pulse:
/// `u(t) = clamp(Σ_n a_n sin(ω_n t) + b_n cos(ω_n t), −M, M)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrabControl {
    /// `(a_n, b_n)` for n = 1..=N_c.
    coefficients: Vec<(f64, f64)>,
    frequencies: Vec<f64>,
    total: f64,
    bound: f64,
}

impl CrabControl {
    pub fn new(coefficients: Vec<(f64, f64)>, frequencies: Vec<f64>, total: f64, bound: f64) -> Result<Self> {
        if coefficients.is_empty() || coefficients.len() != frequencies.len() {
            return Err(Error::invalid("CRAB needs one frequency per coefficient pair and N_c >= 1"));
        }
        if !(total.is_finite() && total >= 0.0) || !(bound.is_finite() && bound > 0.0) {
            return Err(Error::invalid("CRAB total duration must be >= 0 and bound > 0"));
        }
        Ok(Self {
            coefficients,
            frequencies,
            total,
            bound,
        })
    }

    /// `ω_n = (2πn/T)(1 + r_n)`, `r_n ~ U[−0.5, 0.5]`.
    pub fn random_frequencies<R: Rng + ?Sized>(cutoff: usize, total: f64, rng: &mut R) -> Vec<f64> {
        (1..=cutoff)
            .map(|n| {
                let r: f64 = rng.random_range(-0.5..=0.5);
                2.0 * std::f64::consts::PI * n as f64 / total * (1.0 + r)
            })
            .collect()
    }

    pub fn cutoff(&self) -> usize {
        self.coefficients.len()
    }

    pub fn coefficients(&self) -> &[(f64, f64)] {
        &self.coefficients
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    fn raw(&self, t: f64) -> f64 {
        self.coefficients
            .iter()
            .zip(&self.frequencies)
            .map(|((a, b), w)| {
                let (s, c) = (w * t).sin_cos();
                a * s + b * c
            })
            .sum()
    }

    pub fn sample(&self, t: f64) -> Result<f64> {
        check_time(t, self.total)?;
        Ok(self.raw(t).clamp(-self.bound, self.bound))
    }

    pub fn negate(&self) -> Self {
        Self {
            coefficients: self.coefficients.iter().map(|(a, b)| (-a, -b)).collect(),
            frequencies: self.frequencies.clone(),
            total: self.total,
            bound: self.bound,
        }
    }

    pub fn to_piecewise(&self, slots: usize) -> Result<PiecewiseControl> {
        to_piecewise_with(self.total, slots, self.bound, |t| self.sample(t))
    }
}

fn to_piecewise_with(
    total: f64,
    slots: usize,
    bound: f64,
    sample: impl Fn(f64) -> Result<f64>,
) -> Result<PiecewiseControl> {
    if slots == 0 {
        return Err(Error::invalid("need at least one slot"));
    }
    if total <= 0.0 {
        return Err(Error::invalid("cannot slice a control of zero duration"));
    }
    let dt = total / slots as f64;
    let values = (0..slots)
        .map(|k| sample(((k as f64 + 0.5) * dt).min(total)))
        .collect::<Result<Vec<_>>>()?;
    PiecewiseControl::new(values, dt, bound)
}

/// Any of the three parameterisations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum Control {
    BangOff(BangOffControl),
    Piecewise(PiecewiseControl),
    Crab(CrabControl),
}

impl Control {
    pub fn total(&self) -> f64 {
        match self {
            Control::BangOff(c) => c.total(),
            Control::Piecewise(c) => c.total(),
            Control::Crab(c) => c.total(),
        }
    }

    pub fn sample(&self, t: f64) -> Result<f64> {
        match self {
            Control::BangOff(c) => c.sample(t),
            Control::Piecewise(c) => c.sample(t),
            Control::Crab(c) => c.sample(t),
        }
    }

    pub fn negate(&self) -> Self {
        match self {
            Control::BangOff(c) => Control::BangOff(c.negate()),
            Control::Piecewise(c) => Control::Piecewise(c.negate()),
            Control::Crab(c) => Control::Crab(c.negate()),
        }
    }

    pub fn to_piecewise(&self, slots: usize) -> Result<PiecewiseControl> {
        match self {
            Control::BangOff(c) => c.to_piecewise(slots),
            Control::Piecewise(c) => Ok(c.clone()),
            Control::Crab(c) => c.to_piecewise(slots),
        }
    }
}

impl From<BangOffControl> for Control {
    fn from(c: BangOffControl) -> Self {
        Control::BangOff(c)
    }
}

impl From<PiecewiseControl> for Control {
    fn from(c: PiecewiseControl) -> Self {
        Control::Piecewise(c)
    }
}

impl From<CrabControl> for Control {
    fn from(c: CrabControl) -> Self {
        Control::Crab(c)
    }
}

/// Durations drawn uniformly from the simplex `{t_i ≥ 0, Σ t_i = total}`.
pub fn random_durations<R: Rng + ?Sized>(segments: usize, total: f64, rng: &mut R) -> Vec<f64> {
    if segments == 1 {
        return vec![total];
    }
    let spacings: Vec<f64> = (0..segments).map(|_| Exp1.sample(rng)).collect();
    let sum: f64 = spacings.iter().sum();
    let mut t: Vec<f64> = spacings.iter().map(|e| e / sum * total).collect();
    // Put the rounding residue in the largest coordinate so the sum is exact to ulp.
    let resid = total - t.iter().sum::<f64>();
    let imax = (0..segments).max_by(|&a, &b| t[a].total_cmp(&t[b])).unwrap();
    t[imax] += resid;
    t
}

pub fn random_bangoff<R: Rng + ?Sized>(
    kind: &BangOffType,
    total: f64,
    amplitude: f64,
    rng: &mut R,
) -> Result<BangOffControl> {
    if !(total.is_finite() && total > 0.0) {
        return Err(Error::invalid(format!("total duration must be positive, got {total}")));
    }
    BangOffControl::new(kind.clone(), random_durations(kind.len(), total, rng), amplitude)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::*;

    fn words(v: &[BangOffType]) -> Vec<String> {
        v.iter().map(|w| w.to_string()).collect()
    }

    #[test]
    fn one_switch_unpruned() {
        let ws = enumerate_types(1, PruneRules::none());
        assert_eq!(words(&ws), ["PN", "P0", "NP", "N0", "0P", "0N"]);
    }

    #[test]
    fn drift_eigenstate_pruning() {
        let rules = PruneRules {
            drop_leading_off: true,
            drop_trailing_off: true,
            mirror_representatives: false,
        };
        assert_eq!(words(&enumerate_types(1, rules)), ["PN", "NP"]);
        let two = words(&enumerate_types(2, rules));
        assert_eq!(two.len(), 6);
        for w in ["P0N", "N0P", "PNP", "NPN", "P0P", "N0N"] {
            assert!(two.contains(&w.to_string()), "{w} missing from {two:?}");
        }
    }

    #[test]
    fn leading_only_pruning_gives_four() {
        let rules = PruneRules {
            drop_leading_off: true,
            ..PruneRules::none()
        };
        assert_eq!(words(&enumerate_types(1, rules)), ["PN", "P0", "NP", "N0"]);
    }

    #[test]
    fn mirror_pruning_halves() {
        let rules = PruneRules {
            mirror_representatives: true,
            ..PruneRules::none()
        };
        for ns in 1..6 {
            let ws = enumerate_types(ns, rules);
            assert_eq!(ws.len(), 3 << (ns - 1));
            for w in &ws {
                assert!(!ws.contains(&w.negate()) || w.negate() == *w);
            }
        }
    }

    #[test]
    fn parse_and_print() {
        let w: BangOffType = "P0NPN".parse().unwrap();
        assert_eq!(w.to_string(), "P0NPN");
        assert_eq!(w.negate().to_string(), "N0PNP");
        assert_eq!("PZN".parse::<BangOffType>().unwrap().to_string(), "P0N");
        assert!("PPN".parse::<BangOffType>().is_err());
        assert!("PXN".parse::<BangOffType>().is_err());
        assert!("".parse::<BangOffType>().is_err());
        assert_eq!(w.switches(), 4);
    }

    #[test]
    fn bangoff_sampling_boundaries() {
        let m = 4.0 / 3.0;
        let c = BangOffControl::new("PN".parse().unwrap(), vec![1.0, 2.0], m).unwrap();
        assert_eq!(c.sample(0.5).unwrap(), m);
        assert_eq!(c.sample(1.0).unwrap(), -m);
        assert_eq!(c.sample(3.0).unwrap(), -m);
        assert_eq!(c.sample(0.0).unwrap(), m);
        assert!(c.sample(3.0001).is_err());
        assert!(c.sample(-0.1).is_err());
        let z = BangOffControl::new("0".parse().unwrap(), vec![2.0], m).unwrap();
        assert_eq!(z.sample(1.3).unwrap(), 0.0);
        // Trailing zero-duration segment: t = T belongs to the last non-empty one.
        let c = BangOffControl::new("PN".parse().unwrap(), vec![1.0, 0.0], m).unwrap();
        assert_eq!(c.sample(1.0).unwrap(), m);
    }

    #[test]
    fn crab_clamps() {
        let c = CrabControl::new(vec![(10.0, 0.0)], vec![1.0], 3.0, 1.0).unwrap();
        assert_eq!(c.sample(std::f64::consts::FRAC_PI_2).unwrap(), 1.0);
        assert_eq!(c.sample(0.0).unwrap(), 0.0);
        let n = c.negate();
        assert_eq!(n.sample(std::f64::consts::FRAC_PI_2).unwrap(), -1.0);
    }

    #[test]
    fn negation() {
        let c = BangOffControl::new("P0N".parse().unwrap(), vec![0.1, 0.2, 0.3], 1.0).unwrap();
        let n = c.negate();
        assert_eq!(n.kind().to_string(), "N0P");
        assert_eq!(n.durations(), c.durations());
        let z = PiecewiseControl::new(vec![0.0; 4], 0.25, 1.0).unwrap();
        assert_eq!(z.negate().values(), z.values());
    }

    #[test]
    fn piecewise_conversion() {
        let c = BangOffControl::new("PN".parse().unwrap(), vec![1.0, 1.0], 2.0).unwrap();
        assert_eq!(c.to_piecewise(2).unwrap().values(), &[2.0, -2.0]);
        let z = BangOffControl::new("0".parse().unwrap(), vec![1.7], 2.0).unwrap();
        assert!(z.to_piecewise(7).unwrap().values().iter().all(|&v| v == 0.0));

        // Midpoint rule: slot k is +M while (k + 1/2)·T/40 < T1, i.e. k ≤ 13.
        let a = crate::model::analytic_case1(1.0, 4.0 / 3.0).unwrap();
        let c = BangOffControl::new("PN".parse().unwrap(), vec![a.t1, a.t2], 4.0 / 3.0).unwrap();
        let p = c.to_piecewise(40).unwrap();
        let plus = p.values().iter().filter(|&&v| v > 0.0).count();
        assert_eq!(plus, 14);
        assert!(p.values()[..14].iter().all(|&v| v > 0.0));
        assert!(p.values()[14..].iter().all(|&v| v < 0.0));
        assert!((p.total() - a.t_qsl).abs() < 1e-12);
        assert!(p.is_bang_off());
    }

    #[test]
    fn distances() {
        let m = 4.0 / 3.0;
        let a = PiecewiseControl::new(vec![m; 5], 0.1, m).unwrap();
        let b = PiecewiseControl::new(vec![-m; 5], 0.1, m).unwrap();
        assert_eq!(distance(&a, &a).unwrap(), 0.0);
        assert!((distance(&a, &b).unwrap() - 8.0 / 3.0).abs() < 1e-15);
        let c = PiecewiseControl::new(vec![m, 0.0], 0.1, m).unwrap();
        let d = PiecewiseControl::new(vec![0.0, 0.0], 0.1, m).unwrap();
        assert!((distance(&c, &d).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!(distance(&a, &c).is_err());
    }

    #[test]
    fn piecewise_rejects_out_of_bound() {
        assert!(PiecewiseControl::new(vec![1.1], 0.1, 1.0).is_err());
        assert!(PiecewiseControl::new(vec![], 0.1, 1.0).is_err());
        assert!(PiecewiseControl::new(vec![0.0], 0.0, 1.0).is_err());
    }

    #[test]
    fn random_bangoff_single_segment() {
        let c = random_bangoff(&"P".parse().unwrap(), 2.5, 1.0, &mut stream(3)).unwrap();
        assert_eq!(c.durations(), &[2.5]);
    }

    #[test]
    fn random_bangoff_reproducible() {
        let k: BangOffType = "P0NP".parse().unwrap();
        let a = random_bangoff(&k, 1.0, 1.0, &mut stream(99)).unwrap();
        let b = random_bangoff(&k, 1.0, 1.0, &mut stream(99)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn random_bangoff_uniform_mean() {
        // For a uniform point on the 1-simplex of length 1, E[t1] = 1/2 and sd = 1/√12.
        let k: BangOffType = "PN".parse().unwrap();
        let mut rng = stream(2024);
        let n = 100_000;
        let mean = (0..n)
            .map(|_| random_bangoff(&k, 1.0, 1.0, &mut rng).unwrap().durations()[0])
            .sum::<f64>()
            / n as f64;
        assert!((mean - 0.5).abs() < 0.01, "mean {mean}");
    }

    proptest! {
        #[test]
        fn type_count_and_adjacency(ns in 0usize..=10) {
            let ws = enumerate_types(ns, PruneRules::none());
            prop_assert_eq!(ws.len(), 3usize << ns);
            for w in &ws {
                prop_assert_eq!(w.len(), ns + 1);
                prop_assert!(w.symbols().windows(2).all(|p| p[0] != p[1]));
            }
            prop_assert!(ws.windows(2).all(|p| p[0] < p[1]));
        }

        #[test]
        fn bangoff_samples_are_levels(seed in any::<u64>(), t_frac in 0.0f64..=1.0) {
            let k: BangOffType = "P0NPN".parse().unwrap();
            let c = random_bangoff(&k, 2.0, 0.7, &mut stream(seed)).unwrap();
            let u = c.sample((t_frac * c.total()).min(c.total())).unwrap();
            prop_assert!(u == 0.7 || u == -0.7 || u == 0.0);
        }

        #[test]
        fn simplex_draws(seed in any::<u64>(), segs in 1usize..8, total in 0.01f64..10.0) {
            let t = random_durations(segs, total, &mut stream(seed));
            prop_assert!(t.iter().all(|&x| x >= 0.0));
            prop_assert!((t.iter().sum::<f64>() - total).abs() < 1e-12 * total.max(1.0));
        }

        #[test]
        fn distance_is_pseudometric(
            a in proptest::collection::vec(-1.0f64..=1.0, 12),
            b in proptest::collection::vec(-1.0f64..=1.0, 12),
            c in proptest::collection::vec(-1.0f64..=1.0, 12),
        ) {
            let mk = |v: Vec<f64>| PiecewiseControl::new(v, 0.1, 1.0).unwrap();
            let (a, b, c) = (mk(a), mk(b), mk(c));
            let ab = distance(&a, &b).unwrap();
            prop_assert!((ab - distance(&b, &a).unwrap()).abs() < 1e-15);
            prop_assert_eq!(distance(&a, &a).unwrap(), 0.0);
            prop_assert!(ab <= distance(&a, &c).unwrap() + distance(&c, &b).unwrap() + 1e-12);
        }

        #[test]
        fn negate_is_involution(seed in any::<u64>(), vals in proptest::collection::vec(-1.0f64..=1.0, 1..10)) {
            let k: BangOffType = "NP0N".parse().unwrap();
            let b = random_bangoff(&k, 1.5, 1.0, &mut stream(seed)).unwrap();
            prop_assert_eq!(b.negate().negate(), b);
            let p = PiecewiseControl::new(vals.clone(), 0.2, 1.0).unwrap();
            prop_assert_eq!(p.negate().negate(), p);
            let pairs: Vec<(f64, f64)> = vals.iter().map(|&v| (v, -0.5 * v)).collect();
            let freqs = vec![1.0; pairs.len()];
            let cr = CrabControl::new(pairs, freqs, 2.0, 1.0).unwrap();
            prop_assert_eq!(cr.negate().negate(), cr);
        }
    }
}
