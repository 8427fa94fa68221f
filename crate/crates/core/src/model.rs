// Copyright 2026 The bangoff Contributors
// SPDX-License-Identifier: Apache-2.0

//! Control systems `H(t) = drift + u(t)·control` with `|u(t)| ≤ M`, and the
//! closed-form time-optimal references for the two-level problem.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::linalg::{HermitianOperator, StateVector, C64};
use crate::{Error, Result};

/// Duration of the final bang of the two-level `|0⟩ → |ψ_E⟩` optimum.
/// There is no closed form for it; it is checked numerically.
pub const CASE2_TAU3: f64 = 0.2978;

/// Physical parameters a system was built from, kept for reporting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SystemParams {
    TwoLevel {
        energy: f64,
        bound: f64,
    },
    ThreeLevel {
        energy: f64,
        mu1: f64,
        mu2: f64,
        bound: f64,
    },
    Custom,
}

#[derive(Debug, Clone)]
pub struct ControlSystem {
    drift: HermitianOperator,
    control: HermitianOperator,
    bound: f64,
    initial: StateVector,
    target: StateVector,
    params: SystemParams,
}

impl ControlSystem {
    pub fn new(
        drift: HermitianOperator,
        control: HermitianOperator,
        bound: f64,
        initial: StateVector,
        target: StateVector,
    ) -> Result<Self> {
        Self::with_params(drift, control, bound, initial, target, SystemParams::Custom)
    }

    fn with_params(
        drift: HermitianOperator,
        control: HermitianOperator,
        bound: f64,
        initial: StateVector,
        target: StateVector,
        params: SystemParams,
    ) -> Result<Self> {
        if !(bound.is_finite() && bound > 0.0) {
            return Err(Error::invalid(format!("control bound must be positive, got {bound}")));
        }
        let n = drift.dim();
        if control.dim() != n || initial.dim() != n || target.dim() != n {
            return Err(Error::invalid("system operators and states must share a dimension"));
        }
        Ok(Self {
            drift,
            control,
            bound,
            initial,
            target,
            params,
        })
    }

    pub fn dim(&self) -> usize {
        self.drift.dim()
    }

    pub fn drift(&self) -> &HermitianOperator {
        &self.drift
    }

    pub fn control(&self) -> &HermitianOperator {
        &self.control
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn initial(&self) -> &StateVector {
        &self.initial
    }

    pub fn target(&self) -> &StateVector {
        &self.target
    }

    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    /// `drift + u·control`.
    pub fn hamiltonian(&self, u: f64) -> HermitianOperator {
        self.drift
            .add_scaled(&self.control, u)
            .expect("dimensions checked at construction")
    }

    pub fn with_target(&self, target: StateVector) -> Result<Self> {
        Self::with_params(
            self.drift.clone(),
            self.control.clone(),
            self.bound,
            self.initial.clone(),
            target,
            self.params.clone(),
        )
    }

    /// `|⟨target|initial⟩|²`, the fidelity reached with zero total duration.
    pub fn trivial_fidelity(&self) -> f64 {
        self.target.overlap(&self.initial).unwrap().norm_sqr()
    }

    pub fn initial_is_drift_eigenstate(&self) -> bool {
        is_eigenstate(&self.drift, &self.initial)
    }

    pub fn target_is_drift_eigenstate(&self) -> bool {
        is_eigenstate(&self.drift, &self.target)
    }

    /// Whether `⟨t|H(u)^k|i⟩ = s·⟨t|H(−u)^k|i⟩` with one sign `s = ±1` for
    /// k = 1..=6 at several amplitudes. When it holds, `F(u) = F(−u)`.
    pub fn has_mirror_symmetry(&self) -> bool {
        let amps = [self.bound, 0.5 * self.bound, 0.173 * self.bound];
        [1.0, -1.0].iter().any(|&sign| {
            amps.iter().all(|&u| {
                let hp = self.hamiltonian(u);
                let hm = self.hamiltonian(-u);
                (1..=6).all(|k| {
                    let a = hp.power_element(&self.target, &self.initial, k);
                    let b = hm.power_element(&self.target, &self.initial, k);
                    let scale = a.norm().max(b.norm()).max(1.0);
                    (a - b * sign).norm() <= 1e-12 * scale
                })
            })
        })
    }
}

fn is_eigenstate(h: &HermitianOperator, psi: &StateVector) -> bool {
    let hpsi = h.apply(psi).unwrap();
    let expect: C64 = psi.overlap(&hpsi).unwrap();
    let resid: f64 = hpsi
        .amplitudes()
        .iter()
        .zip(psi.amplitudes())
        .map(|(a, b)| (a - b * expect).norm_sqr())
        .sum::<f64>()
        .sqrt();
    resid <= 1e-12
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if !(v.is_finite() && v > 0.0) {
        return Err(Error::invalid(format!("{name} must be finite and positive, got {v}")));
    }
    Ok(())
}

/// `H = −E σ_z + u σ_x`, starting in `|0⟩ = (1, 0)`.
pub fn two_level(energy: f64, bound: f64, target: StateVector) -> Result<ControlSystem> {
    check_positive("E", energy)?;
    check_positive("M", bound)?;
    if target.dim() != 2 {
        return Err(Error::invalid("two-level target must have two amplitudes"));
    }
    ControlSystem::with_params(
        HermitianOperator::pauli_z().scale(-energy),
        HermitianOperator::pauli_x(),
        bound,
        StateVector::basis(2, 0),
        target,
        SystemParams::TwoLevel { energy, bound },
    )
}

/// `(|0⟩ + e^{i·9π/10}|1⟩)/√2`, the equatorial target of the second two-level problem.
pub fn equatorial_target() -> StateVector {
    StateVector::new(vec![C64::new(1.0, 0.0), C64::from_polar(1.0, 0.9 * PI)]).unwrap()
}

/// `H = −E·H0 + μ1·H1 + μ2·u·H2` on a ladder, from `|1⟩` to `|3⟩`.
pub fn three_level(energy: f64, mu1: f64, mu2: f64, bound: f64) -> Result<ControlSystem> {
    for (name, v) in [("E", energy), ("mu1", mu1), ("mu2", mu2)] {
        if !v.is_finite() {
            return Err(Error::invalid(format!("{name} must be finite, got {v}")));
        }
    }
    check_positive("M", bound)?;
    let h0 = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0];
    let h1 = [0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
    let h2 = [0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0];
    let drift: Vec<f64> = (0..9).map(|i| -energy * h0[i] + mu1 * h1[i]).collect();
    let control: Vec<f64> = h2.iter().map(|x| mu2 * x).collect();
    ControlSystem::with_params(
        HermitianOperator::from_real(3, &drift)?,
        HermitianOperator::from_real(3, &control)?,
        bound,
        StateVector::basis(3, 0),
        StateVector::basis(3, 2),
        SystemParams::ThreeLevel {
            energy,
            mu1,
            mu2,
            bound,
        },
    )
}

/// `α = arctan(M/E)`.
pub fn alpha(energy: f64, bound: f64) -> f64 {
    (bound / energy).atan()
}

/// Closed-form optimum of the two-level `|0⟩ → |1⟩` transfer (bang-bang, one switch).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnalyticCase1 {
    pub t1: f64,
    pub t2: f64,
    pub t_qsl: f64,
    pub alpha: f64,
}

pub fn analytic_case1(energy: f64, bound: f64) -> Result<AnalyticCase1> {
    check_positive("E", energy)?;
    check_positive("M", bound)?;
    let a = alpha(energy, bound);
    if a <= PI / 4.0 {
        return Err(Error::OutOfRegime(format!(
            "alpha = {a} <= pi/4; the one-switch formulas require M > E"
        )));
    }
    let omega = energy.hypot(bound);
    let cot2 = (energy / bound).powi(2);
    let acos = cot2.acos();
    Ok(AnalyticCase1 {
        t1: (PI - acos) / (2.0 * omega),
        t2: (PI + acos) / (2.0 * omega),
        t_qsl: PI / omega,
        alpha: a,
    })
}

/// Closed-form pieces of the two-level `|0⟩ → |ψ_E⟩` optimum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnalyticCase2 {
    pub beta: f64,
    pub tau1: f64,
    pub tau2: f64,
    /// Off-segment length of the one-switch `P·0` control that also reaches
    /// the target (at a slightly longer total time).
    pub lambda: f64,
}

pub fn analytic_case2(energy: f64, bound: f64) -> Result<AnalyticCase2> {
    check_positive("E", energy)?;
    check_positive("M", bound)?;
    if bound <= energy {
        return Err(Error::OutOfRegime(format!(
            "M = {bound} <= E = {energy}; arccos(E/M) undefined"
        )));
    }
    let beta = (energy / bound).acos();
    let tau1 = analytic_case1(energy, bound)?.t1;
    Ok(AnalyticCase2 {
        beta,
        tau1,
        tau2: (beta - PI / 10.0) / (2.0 * energy),
        lambda: (beta + PI / 10.0) / (2.0 * energy),
    })
}

/// On-disk system definition (TOML).
///
/// ```toml
/// kind = "two_level"
/// E = 1.0
/// M = 1.3333333333333333
/// target = [[0.0, 0.0], [1.0, 0.0]]   # [re, im] per amplitude
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemFile {
    pub kind: SystemKind,
    #[serde(rename = "E")]
    pub energy: f64,
    #[serde(rename = "M")]
    pub bound: f64,
    #[serde(default)]
    pub mu1: Option<f64>,
    #[serde(default)]
    pub mu2: Option<f64>,
    #[serde(default)]
    pub target: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemKind {
    TwoLevel,
    ThreeLevel,
}

impl SystemFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.message().to_string()))
    }

    pub fn build(&self) -> Result<ControlSystem> {
        let target = self
            .target
            .as_ref()
            .map(|t| StateVector::new(t.iter().map(|[re, im]| C64::new(*re, *im)).collect()))
            .transpose()?;
        match self.kind {
            SystemKind::TwoLevel => {
                let target = target.ok_or_else(|| Error::invalid("two_level system needs a target"))?;
                two_level(self.energy, self.bound, target)
            }
            SystemKind::ThreeLevel => {
                let sys = three_level(
                    self.energy,
                    self.mu1.unwrap_or(1.0),
                    self.mu2.unwrap_or(2.0),
                    self.bound,
                )?;
                match target {
                    Some(t) => sys.with_target(t),
                    None => Ok(sys),
                }
            }
        }
    }
}

pub fn load_system(text: &str) -> Result<ControlSystem> {
    SystemFile::parse(text)?.build()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn case1() -> ControlSystem {
        two_level(1.0, 4.0 / 3.0, StateVector::basis(2, 1)).unwrap()
    }

    #[test]
    fn alpha_values() {
        assert!((alpha(1.0, 4.0 / 3.0) - 0.9273).abs() < 5e-5);
        assert!((alpha(1.0, 1.0) - PI / 4.0).abs() < 1e-15);
    }

    #[test]
    fn two_level_operators() {
        let sys = case1();
        assert_eq!(sys.drift().get(0, 0).re, -1.0);
        assert_eq!(sys.drift().get(1, 1).re, 1.0);
        assert_eq!(sys.control().get(0, 1).re, 1.0);
        assert_eq!(sys.initial(), &StateVector::basis(2, 0));
        assert!(sys.initial_is_drift_eigenstate());
        assert!(sys.target_is_drift_eigenstate());
        let sys2 = two_level(1.0, 4.0 / 3.0, equatorial_target()).unwrap();
        assert!(!sys2.target_is_drift_eigenstate());
        let amps = equatorial_target();
        let phase = (amps.amplitudes()[1] / amps.amplitudes()[0]).arg();
        assert!((phase - 0.9 * PI).abs() < 1e-14);
    }

    #[test]
    fn two_level_rejects_bad_parameters() {
        assert!(two_level(0.0, 1.0, StateVector::basis(2, 1)).is_err());
        assert!(two_level(1.0, -1.0, StateVector::basis(2, 1)).is_err());
        assert!(two_level(1.0, 1.0, StateVector::basis(3, 1)).is_err());
        assert!(three_level(1.0, 1.0, 2.0, 0.0).is_err());
    }

    #[test]
    fn three_level_operators() {
        let sys = three_level(1.0, 1.0, 2.0, 1.0).unwrap();
        assert_eq!(sys.bound(), 1.0);
        assert_eq!(sys.drift().get(0, 1).re, 1.0);
        assert_eq!(sys.drift().get(0, 0).re, -1.0);
        assert_eq!(sys.drift().get(2, 2).re, 1.0);
        assert_eq!(sys.control().get(1, 2).re, 2.0);
        assert_eq!(sys.target(), &StateVector::basis(3, 2));
        let decoupled = three_level(1.0, 1.0, 0.0, 1.0).unwrap();
        assert!(decoupled.control().is_zero());
    }

    #[test]
    fn three_level_mirror_identity() {
        let sys = three_level(1.0, 1.0, 2.0, 1.0).unwrap();
        assert!(sys.has_mirror_symmetry());
        let mut rng = crate::rng::stream(11);
        for _ in 0..100 {
            let u: f64 = rng.random_range(-1.0..=1.0);
            let hp = sys.hamiltonian(u);
            let hm = sys.hamiltonian(-u);
            for k in 1..=6 {
                let a = hp.power_element(sys.target(), sys.initial(), k);
                let b = hm.power_element(sys.target(), sys.initial(), k);
                assert!((a + b).norm() < 1e-12, "k={k} u={u}");
            }
        }
        assert!(!two_level(1.0, 4.0 / 3.0, equatorial_target()).unwrap().has_mirror_symmetry());
    }

    #[test]
    fn case1_reference_values() {
        let a = analytic_case1(1.0, 4.0 / 3.0).unwrap();
        assert!((a.t1 - 0.6505).abs() < 5e-5);
        assert!((a.t2 - 1.2345).abs() < 5e-5);
        assert!((a.t_qsl - 0.6 * PI).abs() < 1e-14);
        assert!((a.t1 + a.t2 - a.t_qsl).abs() < 1e-12);
        assert!(a.t1 <= a.t2);
    }

    #[test]
    fn case1_m2_by_direct_formula() {
        // E=1, M=2: Ω = √5, cot²α = 1/4.
        let a = analytic_case1(1.0, 2.0).unwrap();
        let omega = 5f64.sqrt();
        let ac = 0.25f64.acos();
        assert!((a.t1 - (PI - ac) / (2.0 * omega)).abs() < 1e-15);
        assert!((a.t2 - (PI + ac) / (2.0 * omega)).abs() < 1e-15);
        assert!((a.t1 - 0.407_741_759_259).abs() < 1e-11);
        assert!((a.t2 - 0.997_221_186_949).abs() < 1e-11);
    }

    #[test]
    fn case1_out_of_regime() {
        assert!(matches!(analytic_case1(1.0, 1.0), Err(Error::OutOfRegime(_))));
        assert!(matches!(analytic_case1(1.0, 0.5), Err(Error::OutOfRegime(_))));
    }

    #[test]
    fn case2_reference_values() {
        let a = analytic_case2(1.0, 4.0 / 3.0).unwrap();
        assert!((a.beta - 0.7227).abs() < 5e-5);
        assert!((a.tau2 - 0.2043).abs() < 5e-5);
        assert!((a.lambda - 0.5184).abs() < 5e-5);
        assert!((a.tau1 + a.lambda - 1.1689).abs() < 1e-4);
        assert!((a.tau1 + a.tau2 + CASE2_TAU3 - 1.1525).abs() < 1e-4);
        assert!(matches!(analytic_case2(1.0, 1.0), Err(Error::OutOfRegime(_))));
        let far = analytic_case2(1.0, 1e9).unwrap();
        assert!((far.beta - PI / 2.0).abs() < 1e-8);
    }

    #[test]
    fn system_file_round_trip() {
        let text = r#"
kind = "two_level"
E = 1.0
M = 1.3333333333333333
target = [[0.0, 0.0], [1.0, 0.0]]
"#;
        let sys = load_system(text).unwrap();
        assert_eq!(sys.dim(), 2);
        assert_eq!(sys.target(), &StateVector::basis(2, 1));
        let three = load_system("kind = \"three_level\"\nE = 1.0\nM = 1.0\nmu1 = 1.0\nmu2 = 2.0\n").unwrap();
        assert_eq!(three.dim(), 3);
        assert!(load_system("kind = \"two_level\"\nE = 1.0\nM = 1.0\n").is_err());
        assert!(load_system("kind = \"five_level\"\nE = 1.0\nM = 1.0\n").is_err());
        assert!(load_system("kind = \"two_level\"\nE = 1.0\nM = 1.0\nbogus = 3\n").is_err());
    }
}
