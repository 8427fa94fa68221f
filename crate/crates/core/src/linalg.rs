// Copyright 2026 The bangoff Contributors
// SPDX-License-Identifier: Apache-2.0

//! Dense complex linear algebra for small systems (n = 2 or 3 in practice).
//!
//! Matrices are stored row-major in a flat `Vec<C64>`. Propagators of
//! constant Hamiltonians are computed exactly: a closed form for 2×2, and a
//! spectral decomposition (complex Jacobi) for everything else.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub type C64 = Complex64;

const HERMITIAN_TOL: f64 = 1e-14;
const JACOBI_MAX_SWEEPS: usize = 64;
const JACOBI_TOL: f64 = 1e-14;
const MAX_CACHED_DIM: usize = 8;

#[inline]
fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// A normalised pure state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    amps: Vec<C64>,
}

impl StateVector {
    /// Builds a state from raw amplitudes, normalising them.
    pub fn new(amps: Vec<C64>) -> Result<Self> {
        if amps.is_empty() {
            return Err(Error::invalid("state vector must have at least one amplitude"));
        }
        if amps.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(Error::invalid("state vector has non-finite amplitudes"));
        }
        let norm = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::invalid("state vector has zero norm"));
        }
        Ok(Self {
            amps: amps.into_iter().map(|a| a / norm).collect(),
        })
    }

    /// Computational basis state `|k⟩` of an `n`-dimensional space.
    pub fn basis(n: usize, k: usize) -> Self {
        assert!(k < n, "basis index {k} out of range for dimension {n}");
        let mut amps = vec![C64::new(0.0, 0.0); n];
        amps[k] = C64::new(1.0, 0.0);
        Self { amps }
    }

    pub(crate) fn from_raw(amps: Vec<C64>) -> Self {
        Self { amps }
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `⟨self|other⟩`, conjugate-linear in `self`.
    pub fn overlap(&self, other: &StateVector) -> Result<C64> {
        overlap(self, other)
    }
}

pub fn overlap(a: &StateVector, b: &StateVector) -> Result<C64> {
    if a.dim() != b.dim() {
        return Err(Error::invalid(format!(
            "overlap of states with dimensions {} and {}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(a.amps.iter().zip(&b.amps).map(|(x, y)| x.conj() * y).sum())
}

fn check_square(n: usize, len: usize) -> Result<()> {
    if n == 0 || len != n * n {
        return Err(Error::invalid(format!(
            "expected {n}x{n} matrix data, got {len} entries"
        )));
    }
    Ok(())
}

/// A Hermitian operator (Hamiltonian term), ħ = 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HermitianOperator {
    n: usize,
    data: Vec<C64>,
}

impl HermitianOperator {
    pub fn new(n: usize, data: Vec<C64>) -> Result<Self> {
        check_square(n, data.len())?;
        if data.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(Error::invalid("operator has non-finite entries"));
        }
        let scale = data.iter().map(|a| a.norm()).fold(1.0, f64::max);
        for j in 0..n {
            for k in j..n {
                let d = data[j * n + k] - data[k * n + j].conj();
                if d.norm() > HERMITIAN_TOL * scale {
                    return Err(Error::invalid(format!(
                        "operator is not Hermitian at ({j}, {k})"
                    )));
                }
            }
        }
        Ok(Self { n, data })
    }

    pub fn from_real(n: usize, data: &[f64]) -> Result<Self> {
        Self::new(n, data.iter().map(|&x| c(x, 0.0)).collect())
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![c(0.0, 0.0); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut h = Self::zeros(n);
        for i in 0..n {
            h.data[i * n + i] = c(1.0, 0.0);
        }
        h
    }

    pub fn pauli_x() -> Self {
        Self::from_real(2, &[0.0, 1.0, 1.0, 0.0]).unwrap()
    }

    pub fn pauli_y() -> Self {
        Self::new(2, vec![c(0.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(0.0, 0.0)]).unwrap()
    }

    pub fn pauli_z() -> Self {
        Self::from_real(2, &[1.0, 0.0, 0.0, -1.0]).unwrap()
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, j: usize, k: usize) -> C64 {
        self.data[j * self.n + k]
    }

    pub fn entries(&self) -> &[C64] {
        &self.data
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().map(|a| a * s).collect(),
        }
    }

    /// `self + s·other`.
    pub fn add_scaled(&self, other: &HermitianOperator, s: f64) -> Result<Self> {
        if self.n != other.n {
            return Err(Error::invalid("operator dimension mismatch"));
        }
        Ok(Self {
            n: self.n,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b * s).collect(),
        })
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|a| a.norm() == 0.0)
    }

    /// `⟨b| self^p |a⟩`.
    pub fn power_element(&self, b: &StateVector, a: &StateVector, p: usize) -> C64 {
        let mut v = a.amps.clone();
        for _ in 0..p {
            v = matvec(self.n, &self.data, &v);
        }
        b.amps.iter().zip(&v).map(|(x, y)| x.conj() * y).sum()
    }

    pub fn apply(&self, psi: &StateVector) -> Result<StateVector> {
        if psi.dim() != self.n {
            return Err(Error::invalid("operator/state dimension mismatch"));
        }
        Ok(StateVector::from_raw(matvec(self.n, &self.data, &psi.amps)))
    }
}

fn matvec(n: usize, m: &[C64], v: &[C64]) -> Vec<C64> {
    (0..n)
        .map(|j| (0..n).map(|k| m[j * n + k] * v[k]).sum())
        .collect()
}

fn matmul(n: usize, a: &[C64], b: &[C64]) -> Vec<C64> {
    let mut out = vec![c(0.0, 0.0); n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            for j in 0..n {
                out[i * n + j] += aik * b[k * n + j];
            }
        }
    }
    out
}

/// A unitary matrix, typically `exp(-i H dt)`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitaryPropagator {
    n: usize,
    data: Vec<C64>,
}

impl UnitaryPropagator {
    pub fn identity(n: usize) -> Self {
        let mut data = vec![c(0.0, 0.0); n * n];
        for i in 0..n {
            data[i * n + i] = c(1.0, 0.0);
        }
        Self { n, data }
    }

    /// Wraps raw data without checking unitarity.
    pub fn from_raw(n: usize, data: Vec<C64>) -> Result<Self> {
        check_square(n, data.len())?;
        Ok(Self { n, data })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, j: usize, k: usize) -> C64 {
        self.data[j * self.n + k]
    }

    pub fn entries(&self) -> &[C64] {
        &self.data
    }

    /// Matrix product `self · rhs` (rhs acts first).
    pub fn then_after(&self, rhs: &UnitaryPropagator) -> Self {
        assert_eq!(self.n, rhs.n, "propagator dimension mismatch");
        Self {
            n: self.n,
            data: matmul(self.n, &self.data, &rhs.data),
        }
    }

    pub fn adjoint(&self) -> Self {
        let n = self.n;
        let mut data = vec![c(0.0, 0.0); n * n];
        for j in 0..n {
            for k in 0..n {
                data[k * n + j] = self.data[j * n + k].conj();
            }
        }
        Self { n, data }
    }

    /// `max |(U†U − I)_{jk}|`.
    pub fn unitarity_defect(&self) -> f64 {
        let p = self.adjoint().then_after(self);
        max_deviation_from_identity(self.n, &p.data)
    }

    pub fn max_abs_diff(&self, other: &UnitaryPropagator) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

fn max_deviation_from_identity(n: usize, m: &[C64]) -> f64 {
    let mut worst = 0.0f64;
    for j in 0..n {
        for k in 0..n {
            let id = if j == k { c(1.0, 0.0) } else { c(0.0, 0.0) };
            worst = worst.max((m[j * n + k] - id).norm());
        }
    }
    worst
}

pub fn apply(u: &UnitaryPropagator, psi: &StateVector) -> Result<StateVector> {
    if u.n != psi.dim() {
        return Err(Error::invalid(format!(
            "propagator of dimension {} applied to state of dimension {}",
            u.n,
            psi.dim()
        )));
    }
    Ok(StateVector::from_raw(matvec(u.n, &u.data, &psi.amps)))
}

fn check_dt(dt: f64) -> Result<()> {
    if !dt.is_finite() || dt < 0.0 {
        return Err(Error::invalid(format!("time step must be finite and >= 0, got {dt}")));
    }
    Ok(())
}

/// `exp(-i H dt)`.
pub fn expm_hermitian(h: &HermitianOperator, dt: f64) -> Result<UnitaryPropagator> {
    check_dt(dt)?;
    if h.n == 2 {
        Ok(expm_pauli(h, dt))
    } else {
        expm_spectral(h, dt)
    }
}

/// Closed form for 2×2: `H = c0·I + c·σ`, `U = e^{-i c0 dt}(cos(|c|dt) I − i sin(|c|dt) ĉ·σ)`.
fn expm_pauli(h: &HermitianOperator, dt: f64) -> UnitaryPropagator {
    let (a, b, d) = (h.get(0, 0).re, h.get(0, 1), h.get(1, 1).re);
    let c0 = 0.5 * (a + d);
    let cz = 0.5 * (a - d);
    let cx = b.re;
    let cy = -b.im;
    let r = (cx * cx + cy * cy + cz * cz).sqrt();
    let phase = C64::from_polar(1.0, -c0 * dt);
    if r == 0.0 {
        return UnitaryPropagator {
            n: 2,
            data: vec![phase, c(0.0, 0.0), c(0.0, 0.0), phase],
        };
    }
    let (s, co) = (r * dt).sin_cos();
    let (nx, ny, nz) = (cx / r, cy / r, cz / r);
    // -i s (n·σ) = -i s [[nz, nx - i ny], [nx + i ny, -nz]]
    let m00 = c(co, -s * nz);
    let m11 = c(co, s * nz);
    let m01 = c(-s * ny, -s * nx);
    let m10 = c(s * ny, -s * nx);
    UnitaryPropagator {
        n: 2,
        data: vec![phase * m00, phase * m01, phase * m10, phase * m11],
    }
}

/// Spectral exponentiation, usable for any dimension (including 2).
pub fn expm_spectral(h: &HermitianOperator, dt: f64) -> Result<UnitaryPropagator> {
    check_dt(dt)?;
    Ok(SpectralPropagator::new(h)?.propagator(dt))
}

/// Eigen-decomposition `H = V diag(λ) V†` with ascending eigenvalues.
#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: Vec<f64>,
    /// Column-major in the sense that `vectors[k]` is the k-th eigenvector.
    pub vectors: Vec<Vec<C64>>,
}

impl Eigen {
    pub fn reconstruct(&self) -> Vec<C64> {
        let n = self.values.len();
        let mut out = vec![c(0.0, 0.0); n * n];
        for (lam, v) in self.values.iter().zip(&self.vectors) {
            for j in 0..n {
                for k in 0..n {
                    out[j * n + k] += v[j] * v[k].conj() * *lam;
                }
            }
        }
        out
    }

    /// `max |(V†V − I)_{jk}|`.
    pub fn orthonormality_defect(&self) -> f64 {
        let n = self.values.len();
        let mut g = vec![c(0.0, 0.0); n * n];
        for a in 0..n {
            for b in 0..n {
                g[a * n + b] = self.vectors[a]
                    .iter()
                    .zip(&self.vectors[b])
                    .map(|(x, y)| x.conj() * y)
                    .sum();
            }
        }
        max_deviation_from_identity(n, &g)
    }
}

/// Cyclic complex Jacobi diagonalisation.
pub fn eigh(h: &HermitianOperator) -> Result<Eigen> {
    let n = h.n;
    let mut a = h.data.clone();
    let mut v = UnitaryPropagator::identity(n).data;
    let fro = a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    if !fro.is_finite() {
        return Err(Error::NumericalFailure("non-finite operator in eigh".into()));
    }
    let target = JACOBI_TOL * fro.max(1.0);
    let off = |a: &[C64]| -> f64 {
        let mut s = 0.0;
        for j in 0..n {
            for k in 0..n {
                if j != k {
                    s += a[j * n + k].norm_sqr();
                }
            }
        }
        s.sqrt()
    };

    let mut converged = off(&a) <= target;
    let mut sweeps = 0;
    while !converged {
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(Error::NumericalFailure(format!(
                "Jacobi iteration did not converge in {JACOBI_MAX_SWEEPS} sweeps"
            )));
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                let mag = apq.norm();
                if mag == 0.0 {
                    continue;
                }
                let app = a[p * n + p].re;
                let aqq = a[q * n + q].re;
                let theta = 0.5 * (2.0 * mag).atan2(app - aqq);
                let (s, co) = theta.sin_cos();
                let ph = apq.conj() / mag; // e^{-iφ}
                // G acts on the (p, q) plane: G_pp = c, G_pq = -s, G_qp = e^{-iφ} s, G_qq = e^{-iφ} c.
                let (gpp, gpq, gqp, gqq) = (c(co, 0.0), c(-s, 0.0), ph * s, ph * co);
                for r in 0..n {
                    let (x, y) = (a[r * n + p], a[r * n + q]);
                    a[r * n + p] = x * gpp + y * gqp;
                    a[r * n + q] = x * gpq + y * gqq;
                }
                for r in 0..n {
                    let (x, y) = (a[p * n + r], a[q * n + r]);
                    a[p * n + r] = gpp.conj() * x + gqp.conj() * y;
                    a[q * n + r] = gpq.conj() * x + gqq.conj() * y;
                }
                a[p * n + q] = c(0.0, 0.0);
                a[q * n + p] = c(0.0, 0.0);
                for r in 0..n {
                    let (x, y) = (v[r * n + p], v[r * n + q]);
                    v[r * n + p] = x * gpp + y * gqp;
                    v[r * n + q] = x * gpq + y * gqq;
                }
            }
        }
        converged = off(&a) <= target;
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| a[x * n + x].re.total_cmp(&a[y * n + y].re));
    let values: Vec<f64> = order.iter().map(|&i| a[i * n + i].re).collect();
    let mut vectors: Vec<Vec<C64>> = order
        .iter()
        .map(|&i| (0..n).map(|r| v[r * n + i]).collect())
        .collect();

    // Modified Gram-Schmidt; a no-op up to rounding except inside degenerate blocks.
    for k in 0..n {
        for j in 0..k {
            let proj: C64 = vectors[j]
                .iter()
                .zip(&vectors[k])
                .map(|(x, y)| x.conj() * y)
                .sum();
            let vj = vectors[j].clone();
            for (x, y) in vectors[k].iter_mut().zip(&vj) {
                *x -= proj * y;
            }
        }
        let norm = vectors[k].iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::NumericalFailure("degenerate eigenbasis".into()));
        }
        for x in vectors[k].iter_mut() {
            *x /= norm;
        }
    }
    Ok(Eigen { values, vectors })
}

/// A cached spectral decomposition of a constant Hamiltonian.
///
/// Once built, `exp(-i H dt)` for any `dt` costs `n` phase evaluations
/// and two small matrix-vector products.
#[derive(Debug, Clone)]
pub struct SpectralPropagator {
    n: usize,
    values: Vec<f64>,
    /// Row-major V (columns are eigenvectors).
    v: Vec<C64>,
}

impl SpectralPropagator {
    pub fn new(h: &HermitianOperator) -> Result<Self> {
        let n = h.n;
        if n > MAX_CACHED_DIM {
            return Err(Error::invalid(format!(
                "cached propagation supports dimensions up to {MAX_CACHED_DIM}, got {n}"
            )));
        }
        let eig = eigh(h)?;
        let mut v = vec![c(0.0, 0.0); n * n];
        for (k, vec) in eig.vectors.iter().enumerate() {
            for r in 0..n {
                v[r * n + k] = vec[r];
            }
        }
        Ok(Self {
            n,
            values: eig.values,
            v,
        })
    }

    pub fn propagator(&self, dt: f64) -> UnitaryPropagator {
        let n = self.n;
        let phases: Vec<C64> = self.values.iter().map(|l| C64::from_polar(1.0, -l * dt)).collect();
        let mut data = vec![c(0.0, 0.0); n * n];
        for j in 0..n {
            for k in 0..n {
                data[j * n + k] = (0..n)
                    .map(|m| self.v[j * n + m] * phases[m] * self.v[k * n + m].conj())
                    .sum();
            }
        }
        UnitaryPropagator { n, data }
    }

    /// Applies `exp(-i H dt)` to `psi` in place. `psi.len()` must equal the dimension.
    pub fn apply_in_place(&self, dt: f64, psi: &mut [C64]) {
        let n = self.n;
        debug_assert_eq!(psi.len(), n);
        let mut buf = [c(0.0, 0.0); MAX_CACHED_DIM];
        let coef = &mut buf[..n];
        for m in 0..n {
            let proj: C64 = (0..n).map(|r| self.v[r * n + m].conj() * psi[r]).sum();
            coef[m] = proj * C64::from_polar(1.0, -self.values[m] * dt);
        }
        for (r, out) in psi.iter_mut().enumerate() {
            *out = (0..n).map(|m| self.v[r * n + m] * coef[m]).sum();
        }
    }
}
