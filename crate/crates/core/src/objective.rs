// Copyright 2026 The bangoff Contributors
// SPDX-License-Identifier: Apache-2.0

//! Time-ordered propagation and the two objectives, fidelity
//! `F = |⟨ψ_t|ψ_f⟩|²` and Bures distance `d_B = √(2(1 − √F))`.

use serde::Serialize;

use crate::controls::{BangOffType, Control, CrabControl, Symbol};
use crate::linalg::{apply, expm_hermitian, SpectralPropagator, StateVector, UnitaryPropagator, C64};
use crate::model::ControlSystem;
use crate::{Error, Result};

/// Slices used to propagate a continuous (CRAB) pulse.
pub const DEFAULT_CRAB_SLICES: usize = 1000;

/// Default perfect-fidelity slack: a run counts as perfect when `F ≥ 1 − δ`.
pub const DEFAULT_DELTA: f64 = 1e-9;

fn check_total(control_total: f64, total: f64) -> Result<()> {
    if !(total.is_finite() && total >= 0.0) {
        return Err(Error::invalid(format!("total duration must be >= 0, got {total}")));
    }
    if (control_total - total).abs() > 1e-12 * total.max(1.0) {
        return Err(Error::invalid(format!(
            "control lasts {control_total} but total duration is {total}"
        )));
    }
    Ok(())
}

fn propagate_segments(
    sys: &ControlSystem,
    segments: impl Iterator<Item = (f64, f64)>,
) -> Result<StateVector> {
    let mut psi = sys.initial().clone();
    for (u, dt) in segments {
        if dt == 0.0 {
            continue;
        }
        let step = expm_hermitian(&sys.hamiltonian(u), dt)?;
        psi = apply(&step, &psi)?;
    }
    Ok(psi)
}

/// Final state `𝒯 exp(−i∫H dt)|ψ_i⟩`. Segments act in time order.
pub fn propagate(sys: &ControlSystem, control: &Control, total: f64) -> Result<StateVector> {
    propagate_with_slices(sys, control, total, DEFAULT_CRAB_SLICES)
}

pub fn propagate_with_slices(
    sys: &ControlSystem,
    control: &Control,
    total: f64,
    crab_slices: usize,
) -> Result<StateVector> {
    check_total(control.total(), total)?;
    if total == 0.0 {
        return Ok(sys.initial().clone());
    }
    match control {
        Control::BangOff(c) => propagate_segments(sys, c.segments()),
        Control::Piecewise(c) => propagate_segments(sys, c.segments()),
        Control::Crab(c) => {
            if crab_slices == 0 {
                return Err(Error::invalid("CRAB propagation needs at least one slice"));
            }
            propagate_segments(sys, magnus4_segments(c, crab_slices)?.into_iter())
        }
    }
}

/// Fourth-order commutator-free Magnus step per slice. With `H = H_d + u·H_c`
/// each of the two exponentials is a half-slice at a blended amplitude of the
/// two Gauss-node samples.
fn magnus4_segments(c: &CrabControl, slices: usize) -> Result<Vec<(f64, f64)>> {
    let dt = c.total() / slices as f64;
    let r3 = 3f64.sqrt();
    let (a1, a2) = ((3.0 - 2.0 * r3) / 12.0, (3.0 + 2.0 * r3) / 12.0);
    let (c1, c2) = (0.5 - r3 / 6.0, 0.5 + r3 / 6.0);
    let mut out = Vec::with_capacity(2 * slices);
    for k in 0..slices {
        let t0 = k as f64 * dt;
        let u1 = c.sample((t0 + c1 * dt).min(c.total()))?;
        let u2 = c.sample((t0 + c2 * dt).min(c.total()))?;
        out.push((2.0 * (a2 * u1 + a1 * u2), 0.5 * dt));
        out.push((2.0 * (a1 * u1 + a2 * u2), 0.5 * dt));
    }
    Ok(out)
}

/// Raw `(u, dt)` segments, bypassing the parameterisations (used for
/// perturbed amplitudes).
pub fn propagate_raw(sys: &ControlSystem, segments: &[(f64, f64)]) -> Result<StateVector> {
    if segments.iter().any(|(u, dt)| !u.is_finite() || !dt.is_finite() || *dt < 0.0) {
        return Err(Error::invalid("segments need finite values and non-negative durations"));
    }
    propagate_segments(sys, segments.iter().copied())
}

pub fn state_fidelity(target: &StateVector, psi: &StateVector) -> f64 {
    target
        .overlap(psi)
        .map(|o| o.norm_sqr().clamp(0.0, 1.0))
        .unwrap_or(0.0)
}

/// `1 − F` from the component of `psi` orthogonal to `target`, which keeps
/// full relative precision when `F` is within rounding of one.
pub fn raw_infidelity(target: &[C64], psi: &[C64]) -> f64 {
    let ov: C64 = target.iter().zip(psi).map(|(t, p)| t.conj() * p).sum();
    let mut resid = 0.0;
    let mut norm = 0.0;
    for (t, p) in target.iter().zip(psi) {
        resid += (p - ov * t).norm_sqr();
        norm += p.norm_sqr();
    }
    (resid / norm).clamp(0.0, 1.0)
}

pub fn state_infidelity(target: &StateVector, psi: &StateVector) -> f64 {
    if target.dim() != psi.dim() {
        return 1.0;
    }
    raw_infidelity(target.amplitudes(), psi.amplitudes())
}

pub fn fidelity(sys: &ControlSystem, control: &Control, total: f64) -> Result<f64> {
    let psi = propagate(sys, control, total)?;
    Ok(state_fidelity(sys.target(), &psi))
}

pub fn fidelity_with_slices(sys: &ControlSystem, control: &Control, total: f64, slices: usize) -> Result<f64> {
    let psi = propagate_with_slices(sys, control, total, slices)?;
    Ok(state_fidelity(sys.target(), &psi))
}

pub fn infidelity(sys: &ControlSystem, control: &Control, total: f64) -> Result<f64> {
    let psi = propagate(sys, control, total)?;
    Ok(state_infidelity(sys.target(), &psi))
}

pub fn infidelity_with_slices(sys: &ControlSystem, control: &Control, total: f64, slices: usize) -> Result<f64> {
    let psi = propagate_with_slices(sys, control, total, slices)?;
    Ok(state_infidelity(sys.target(), &psi))
}

/// `d_B` written in terms of `I = 1 − F` as `√(2I / (1 + √(1 − I)))`.
pub fn bures_from_infidelity(infidelity: f64) -> f64 {
    let i = infidelity.clamp(0.0, 1.0);
    (2.0 * i / (1.0 + (1.0 - i).sqrt())).sqrt()
}

pub fn bures(f: f64) -> Result<f64> {
    if !(f.is_finite() && (-1e-12..=1.0 + 1e-12).contains(&f)) {
        return Err(Error::invalid(format!("fidelity {f} outside [0, 1]")));
    }
    Ok(bures_clamped(f))
}

pub(crate) fn bures_clamped(f: f64) -> f64 {
    (2.0 * (1.0 - f.clamp(0.0, 1.0).sqrt())).max(0.0).sqrt()
}

#[derive(Debug, Clone, Serialize)]
pub struct EvaluationReport {
    pub final_state: Vec<[f64; 2]>,
    pub fidelity: f64,
    pub infidelity: f64,
    pub bures: f64,
    pub total: f64,
}

pub fn evaluate(sys: &ControlSystem, control: &Control, total: f64) -> Result<EvaluationReport> {
    let psi = propagate(sys, control, total)?;
    let f = state_fidelity(sys.target(), &psi);
    let i = state_infidelity(sys.target(), &psi);
    Ok(EvaluationReport {
        final_state: psi.amplitudes().iter().map(|a| [a.re, a.im]).collect(),
        fidelity: f,
        infidelity: i,
        bures: bures_from_infidelity(i),
        total,
    })
}

/// Fidelity of bang-off controls with the three segment Hamiltonians
/// (`u = +M, −M, 0`) diagonalised once.
#[derive(Debug, Clone)]
pub struct BangOffEvaluator {
    levels: [SpectralPropagator; 3],
    initial: Vec<C64>,
    target: Vec<C64>,
    bound: f64,
}

fn symbol_index(s: Symbol) -> usize {
    match s {
        Symbol::P => 0,
        Symbol::N => 1,
        Symbol::Z => 2,
    }
}

impl BangOffEvaluator {
    pub fn new(sys: &ControlSystem) -> Result<Self> {
        let m = sys.bound();
        Ok(Self {
            levels: [
                SpectralPropagator::new(&sys.hamiltonian(m))?,
                SpectralPropagator::new(&sys.hamiltonian(-m))?,
                SpectralPropagator::new(&sys.hamiltonian(0.0))?,
            ],
            initial: sys.initial().amplitudes().to_vec(),
            target: sys.target().amplitudes().to_vec(),
            bound: m,
        })
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn final_state(&self, kind: &BangOffType, durations: &[f64]) -> Vec<C64> {
        debug_assert_eq!(kind.len(), durations.len());
        let mut psi = self.initial.clone();
        for (s, &d) in kind.symbols().iter().zip(durations) {
            if d != 0.0 {
                self.levels[symbol_index(*s)].apply_in_place(d, &mut psi);
            }
        }
        psi
    }

    pub fn fidelity(&self, kind: &BangOffType, durations: &[f64]) -> f64 {
        let psi = self.final_state(kind, durations);
        let ov: C64 = self.target.iter().zip(&psi).map(|(t, p)| t.conj() * p).sum();
        ov.norm_sqr().clamp(0.0, 1.0)
    }

    pub fn infidelity(&self, kind: &BangOffType, durations: &[f64]) -> f64 {
        raw_infidelity(&self.target, &self.final_state(kind, durations))
    }

    /// Propagators of one slot of width `dt` at `+M`, `−M`, `0`.
    pub fn slot_propagators(&self, dt: f64) -> [UnitaryPropagator; 3] {
        [
            self.levels[0].propagator(dt),
            self.levels[1].propagator(dt),
            self.levels[2].propagator(dt),
        ]
    }

    pub fn initial(&self) -> &[C64] {
        &self.initial
    }

    pub fn target(&self) -> &[C64] {
        &self.target
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controls::{random_bangoff, BangOffControl, CrabControl, PiecewiseControl};
    use crate::model::{analytic_case1, equatorial_target, three_level, two_level};
    use crate::rng::stream;
    use proptest::prelude::*;
    use rand::Rng;

    fn case1() -> ControlSystem {
        two_level(1.0, 4.0 / 3.0, StateVector::basis(2, 1)).unwrap()
    }

    fn bang(word: &str, d: Vec<f64>, m: f64) -> Control {
        BangOffControl::new(word.parse().unwrap(), d, m).unwrap().into()
    }

    #[test]
    fn zero_duration_returns_initial() {
        let sys = case1();
        let c = bang("P", vec![0.0], 4.0 / 3.0);
        assert_eq!(propagate(&sys, &c, 0.0).unwrap(), *sys.initial());
        let same = sys.with_target(StateVector::basis(2, 0)).unwrap();
        assert_eq!(fidelity(&same, &c, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn single_bang_matches_rabi_formula() {
        // |⟨1|ψ⟩|² = (M²/Ω²) sin²(ΩT) with Ω = 5/3.
        let sys = case1();
        for t in [0.1, 0.4, 0.3 * std::f64::consts::PI, 1.3, 2.9] {
            let f = fidelity(&sys, &bang("P", vec![t], 4.0 / 3.0), t).unwrap();
            let oracle = 0.64 * (5.0 * t / 3.0).sin().powi(2);
            assert!((f - oracle).abs() < 1e-13, "t={t}: {f} vs {oracle}");
        }
    }

    #[test]
    fn analytic_switch_reaches_target() {
        let sys = case1();
        let a = analytic_case1(1.0, 4.0 / 3.0).unwrap();
        let f = fidelity(&sys, &bang("PN", vec![a.t1, a.t2], 4.0 / 3.0), a.t_qsl).unwrap();
        assert!(f >= 1.0 - 1e-12, "{f}");
        let rounded = fidelity(&sys, &bang("PN", vec![0.6505, 1.2345], 4.0 / 3.0), 1.885).unwrap();
        assert!(rounded >= 1.0 - 1e-6, "{rounded}");
    }

    #[test]
    fn duration_mismatch_is_rejected() {
        let sys = case1();
        assert!(propagate(&sys, &bang("PN", vec![0.5, 0.5], 4.0 / 3.0), 1.2).is_err());
        assert!(propagate(&sys, &bang("PN", vec![0.5, 0.5], 4.0 / 3.0), -1.0).is_err());
    }

    #[test]
    fn bures_values() {
        assert_eq!(bures(1.0).unwrap(), 0.0);
        assert!((bures(0.0).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert!((bures(0.25).unwrap() - 1.0).abs() < 1e-15);
        assert!(bures(1.1).is_err());
        assert!(bures(-0.1).is_err());
        assert!(bures(f64::NAN).is_err());
    }

    #[test]
    fn evaluator_matches_reference_path() {
        let systems = [
            case1(),
            two_level(1.0, 4.0 / 3.0, equatorial_target()).unwrap(),
            three_level(1.0, 1.0, 2.0, 1.0).unwrap(),
        ];
        let kind: BangOffType = "P0NPN".parse().unwrap();
        for sys in &systems {
            let ev = BangOffEvaluator::new(sys).unwrap();
            let mut rng = stream(5);
            for _ in 0..50 {
                let c = random_bangoff(&kind, 2.3, sys.bound(), &mut rng).unwrap();
                let a = ev.fidelity(&kind, c.durations());
                let b = fidelity(sys, &c.clone().into(), c.total()).unwrap();
                assert!((a - b).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn evaluation_report_consistency() {
        let sys = case1();
        let r = evaluate(&sys, &bang("PN", vec![0.4, 0.9], 4.0 / 3.0), 1.3).unwrap();
        assert!((r.bures - (2.0 * (1.0 - r.fidelity.sqrt())).sqrt()).abs() < 1e-12);
        assert!((0.0..=1.0).contains(&r.fidelity));
    }

    #[test]
    fn crab_slicing_converges() {
        let sys = case1();
        let mut rng = stream(8);
        for _ in 0..5 {
            let coeffs: Vec<(f64, f64)> = (0..3)
                .map(|_| (rng.random_range(-0.4..0.4), rng.random_range(-0.4..0.4)))
                .collect();
            let freqs = CrabControl::random_frequencies(3, 1.9, &mut rng);
            let c: Control = CrabControl::new(coeffs, freqs, 1.9, 4.0 / 3.0).unwrap().into();
            let f1 = fidelity_with_slices(&sys, &c, 1.9, 1000).unwrap();
            let f2 = fidelity_with_slices(&sys, &c, 1.9, 2000).unwrap();
            assert!((f1 - f2).abs() < 1e-8, "{f1} vs {f2}");
        }
    }

    #[test]
    fn piecewise_matches_bangoff() {
        let sys = case1();
        let c = BangOffControl::new("PN".parse().unwrap(), vec![0.5, 1.5], 4.0 / 3.0).unwrap();
        let p = c.to_piecewise(4).unwrap();
        let fb = fidelity(&sys, &c.into(), 2.0).unwrap();
        let fp = fidelity(&sys, &p.into(), 2.0).unwrap();
        assert!((fb - fp).abs() < 1e-13);
    }

    proptest! {
        #[test]
        fn norm_is_preserved(seed in any::<u64>(), total in 0.0f64..5.0) {
            let sys = three_level(1.0, 1.0, 2.0, 1.0).unwrap();
            let mut rng = stream(seed);
            let kind: BangOffType = "PN0P".parse().unwrap();
            if total > 0.0 {
                let c = random_bangoff(&kind, total, 1.0, &mut rng).unwrap();
                let psi = propagate(&sys, &c.clone().into(), c.total()).unwrap();
                prop_assert!((psi.norm() - 1.0).abs() < 1e-12);
                let p = c.to_piecewise(17).unwrap();
                let psi = propagate(&sys, &p.into(), c.total()).unwrap();
                prop_assert!((psi.norm() - 1.0).abs() < 1e-12);
            }
            let crab = CrabControl::new(vec![(0.3, -0.2), (0.1, 0.5)], vec![1.0, 2.5], total, 1.0).unwrap();
            let psi = propagate_with_slices(&sys, &crab.into(), total, 200).unwrap();
            prop_assert!((psi.norm() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn splitting_a_segment_is_invisible(seed in any::<u64>(), frac in 0.0f64..=1.0) {
            let sys = two_level(1.0, 4.0 / 3.0, equatorial_target()).unwrap();
            let kind: BangOffType = "P0N".parse().unwrap();
            let c = random_bangoff(&kind, 1.5, 4.0 / 3.0, &mut stream(seed)).unwrap();
            let d = c.durations();
            let f = fidelity(&sys, &c.clone().into(), c.total()).unwrap();
            let a = frac * d[2];
            let segs = [(4.0 / 3.0, d[0]), (0.0, d[1]), (-4.0 / 3.0, a), (-4.0 / 3.0, d[2] - a)];
            let psi = propagate_raw(&sys, &segs).unwrap();
            prop_assert!((state_fidelity(sys.target(), &psi) - f).abs() < 1e-12);
        }

        #[test]
        fn mirror_symmetry(seed in any::<u64>(), ns in 0usize..6, total in 0.1f64..4.0) {
            let sys = three_level(1.0, 1.0, 2.0, 1.0).unwrap();
            let mut rng = stream(seed);
            let words = crate::controls::enumerate_types(ns, crate::controls::PruneRules::none());
            let kind = &words[rng.random_range(0..words.len())];
            let c = random_bangoff(kind, total, 1.0, &mut rng).unwrap();
            let f = fidelity(&sys, &c.clone().into(), total).unwrap();
            let g = fidelity(&sys, &c.negate().into(), total).unwrap();
            prop_assert!((f - g).abs() < 1e-12);
        }

        #[test]
        fn infidelity_matches_one_minus_fidelity(seed in any::<u64>(), total in 0.1f64..4.0) {
            let sys = three_level(1.0, 1.0, 2.0, 1.0).unwrap();
            let mut rng = stream(seed);
            let c = random_bangoff(&"PN0P".parse().unwrap(), total, 1.0, &mut rng).unwrap();
            let r = evaluate(&sys, &c.into(), total).unwrap();
            prop_assert!((r.infidelity - (1.0 - r.fidelity)).abs() < 1e-14);
            prop_assert!((bures_from_infidelity(r.infidelity) - bures(r.fidelity).unwrap()).abs() < 1e-7);
        }

        #[test]
        fn bures_fidelity_consistency(f in 0.0f64..=1.0) {
            let d = bures(f).unwrap();
            prop_assert!((0.0..=2f64.sqrt() + 1e-15).contains(&d));
            // Inverse: F = (1 − d²/2)².
            prop_assert!(((1.0 - d * d / 2.0).powi(2) - f).abs() < 1e-12);
        }

        #[test]
        fn bures_is_monotone(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(bures(lo).unwrap() >= bures(hi).unwrap());
        }
    }

    #[test]
    fn piecewise_zero_value_control() {
        let sys = case1();
        let p = PiecewiseControl::new(vec![0.0; 3], 0.5, 4.0 / 3.0).unwrap();
        // The initial state is a drift eigenstate, so nothing moves.
        assert!(fidelity(&sys, &p.into(), 1.5).unwrap() < 1e-30);
    }
}
