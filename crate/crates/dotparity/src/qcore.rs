//! Dense complex linear algebra on small labeled Hilbert spaces.
//!
//! Basis states are addressed by string label rather than by position so that
//! the decoupled subspace blocks and the hole-mixing basis cannot be silently
//! confused. Dimensions stay below ~16, so everything is dense `Complex64`.

use ndarray::{Array1, Array2};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Max-abs deviation allowed from exact Hermiticity.
pub const HERMITICITY_TOL: f64 = 1e-12;
/// Tolerance on `|Tr ρ − 1|` for normalized density matrices.
pub const TRACE_TOL: f64 = 1e-10;
/// Eigenvalue floor for the on-demand positivity check.
pub const PSD_TOL: f64 = 1e-10;
/// Traces below this are treated as an impossible conditioning branch.
pub const TRACE_FLOOR: f64 = 1e-300;

/// An ordered registry of basis-state names defining a Hilbert space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BasisRegistry {
    labels: Vec<String>,
}

impl BasisRegistry {
    /// Registers the given labels in order. Fails on duplicates.
    pub fn new<I, S>(labels: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(Error::DuplicateLabel(l.clone()));
            }
        }
        Ok(Self { labels })
    }

    /// Two-qubit computational basis `{00, 01, 10, 11}`.
    pub fn computational() -> Self {
        Self::new(["00", "01", "10", "11"]).expect("static labels")
    }

    /// Full coupled-dot space: computational, single-trion and double-trion
    /// levels `{00, 01, 0X, 10, X0, 11, 1X, X1, XX}`.
    pub fn cqd_full() -> Self {
        Self::new(["00", "01", "0X", "10", "X0", "11", "1X", "X1", "XX"]).expect("static labels")
    }

    /// Odd-parity subspace with its single-exciton levels `{01, 0X, 10, X0}`.
    pub fn odd_block() -> Self {
        Self::new(["01", "0X", "10", "X0"]).expect("static labels")
    }

    /// The `{11, 1X, X1, XX}` subspace of the doubly occupied dots.
    pub fn h11_block() -> Self {
        Self::new(["11", "1X", "X1", "XX"]).expect("static labels")
    }

    /// Delocalized-exciton eigenbasis of the 11-subspace at zero drive,
    /// ordered `{11, psi+, psi-, XX}`.
    pub fn foerster_block() -> Self {
        Self::new(["11", "psi+", "psi-", "XX"]).expect("static labels")
    }

    /// Same eigenbasis ordered `{11, psi-, psi+, XX}`, as used for the
    /// detuned-dot rotation.
    pub fn detuned_foerster_block() -> Self {
        Self::new(["11", "psi-", "psi+", "XX"]).expect("static labels")
    }

    /// Odd subspace with hole-mixed trion levels `{01, 0X-, X+1, X+X-}`.
    pub fn hole_mixing_block() -> Self {
        Self::new(["01", "0X-", "X+1", "X+X-"]).expect("static labels")
    }

    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, index: usize) -> &str {
        &self.labels[index]
    }

    /// Index of `label`, or an error if it is not registered.
    pub fn index_of(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::MissingLabel(label.to_string()))
    }

    pub fn contains(&self, label: &str) -> bool {
        self.labels.iter().any(|l| l == label)
    }

    fn describe(&self) -> String {
        self.labels.join(",")
    }
}

pub(crate) fn check_same_basis(a: &BasisRegistry, b: &BasisRegistry) -> Result<()> {
    if a != b {
        return Err(Error::BasisMismatch {
            left: a.describe(),
            right: b.describe(),
        });
    }
    Ok(())
}

/// A pure state: complex amplitudes over a labeled basis.
#[derive(Debug, Clone)]
pub struct PureState {
    basis: BasisRegistry,
    amplitudes: Array1<C64>,
}

impl PureState {
    pub fn new(basis: BasisRegistry, amplitudes: Array1<C64>) -> Result<Self> {
        if amplitudes.len() != basis.dim() {
            return Err(Error::DimensionMismatch {
                expected: basis.dim(),
                got: amplitudes.len(),
            });
        }
        Ok(Self { basis, amplitudes })
    }

    /// The basis state `|label⟩`.
    pub fn basis_state(basis: BasisRegistry, label: &str) -> Result<Self> {
        let idx = basis.index_of(label)?;
        let mut amplitudes = Array1::zeros(basis.dim());
        amplitudes[idx] = C64::new(1.0, 0.0);
        Ok(Self { basis, amplitudes })
    }

    pub fn basis(&self) -> &BasisRegistry {
        &self.basis
    }

    pub fn amplitudes(&self) -> &Array1<C64> {
        &self.amplitudes
    }

    pub fn amplitude(&self, label: &str) -> Result<C64> {
        Ok(self.amplitudes[self.basis.index_of(label)?])
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes
            .iter()
            .map(|a| a.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm().powi(2) - 1.0).abs() < 1e-12
    }

    /// Rescales to unit norm; errors if the norm vanishes.
    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm();
        if n.powi(2) <= TRACE_FLOOR {
            return Err(Error::ImpossibleBranch { trace: n.powi(2) });
        }
        Ok(Self {
            basis: self.basis.clone(),
            amplitudes: self.amplitudes.mapv(|a| a / n),
        })
    }

    pub fn population(&self, label: &str) -> Result<f64> {
        Ok(self.amplitude(label)?.norm_sqr())
    }
}

/// A density matrix over a labeled basis; Hermitian by construction.
///
/// Normalized (`Tr ρ = 1`) and unnormalized (`0 < Tr ρ̃ ≤ 1`) variants share
/// this type; the trace bookkeeping is the caller's contract.
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    basis: BasisRegistry,
    elements: Array2<C64>,
}

impl DensityMatrix {
    pub fn new(basis: BasisRegistry, elements: Array2<C64>) -> Result<Self> {
        if elements.nrows() != basis.dim() || elements.ncols() != basis.dim() {
            return Err(Error::DimensionMismatch {
                expected: basis.dim(),
                got: elements.nrows().max(elements.ncols()),
            });
        }
        let dev = hermiticity_deviation(&elements);
        if dev > HERMITICITY_TOL {
            return Err(Error::NonHermitian { deviation: dev });
        }
        Ok(Self { basis, elements })
    }

    /// Skips the Hermiticity check; for internal integrator output whose
    /// symmetry is enforced separately.
    pub(crate) fn new_unchecked(basis: BasisRegistry, elements: Array2<C64>) -> Self {
        Self { basis, elements }
    }

    pub fn basis(&self) -> &BasisRegistry {
        &self.basis
    }

    pub fn matrix(&self) -> &Array2<C64> {
        &self.elements
    }

    pub fn trace(&self) -> f64 {
        self.elements.diag().iter().map(|c| c.re).sum()
    }

    pub fn is_normalized(&self) -> bool {
        (self.trace() - 1.0).abs() < TRACE_TOL
    }

    /// Diagonal entry for `label` (a population for normalized states).
    pub fn population(&self, label: &str) -> Result<f64> {
        let i = self.basis.index_of(label)?;
        Ok(self.elements[[i, i]].re)
    }

    /// Off-diagonal element `⟨a|ρ|b⟩`.
    pub fn coherence(&self, a: &str, b: &str) -> Result<C64> {
        let i = self.basis.index_of(a)?;
        let j = self.basis.index_of(b)?;
        Ok(self.elements[[i, j]])
    }

    /// Eigenvalues in ascending order (cyclic Jacobi; exact enough for the
    /// ≤ 16-dimensional spaces used here).
    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigen(&self.elements).0
    }

    /// On-demand positive-semidefiniteness check.
    pub fn is_positive_semidefinite(&self) -> bool {
        self.eigenvalues().iter().all(|&e| e > -PSD_TOL)
    }
}

/// A square operator on a labeled basis. Hamiltonians carry energies in meV;
/// projectors and jump structures are dimensionless.
#[derive(Debug, Clone)]
pub struct Operator {
    basis: BasisRegistry,
    elements: Array2<C64>,
}

impl Operator {
    pub fn new(basis: BasisRegistry, elements: Array2<C64>) -> Result<Self> {
        if elements.nrows() != basis.dim() || elements.ncols() != basis.dim() {
            return Err(Error::DimensionMismatch {
                expected: basis.dim(),
                got: elements.nrows().max(elements.ncols()),
            });
        }
        Ok(Self { basis, elements })
    }

    pub fn identity(basis: BasisRegistry) -> Self {
        let elements = Array2::eye(basis.dim());
        Self { basis, elements }
    }

    /// Builds `Σ v |row⟩⟨col|` from labeled entries.
    pub fn from_entries(basis: BasisRegistry, entries: &[(&str, &str, C64)]) -> Result<Self> {
        let mut elements = Array2::zeros((basis.dim(), basis.dim()));
        for &(row, col, v) in entries {
            let i = basis.index_of(row)?;
            let j = basis.index_of(col)?;
            elements[[i, j]] += v;
        }
        Ok(Self { basis, elements })
    }

    pub fn basis(&self) -> &BasisRegistry {
        &self.basis
    }

    pub fn matrix(&self) -> &Array2<C64> {
        &self.elements
    }

    pub fn adjoint(&self) -> Self {
        Self {
            basis: self.basis.clone(),
            elements: adjoint(&self.elements),
        }
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        hermiticity_deviation(&self.elements) <= tol
    }

    /// Matrix product `self · other`.
    pub fn compose(&self, other: &Operator) -> Result<Operator> {
        check_same_basis(&self.basis, &other.basis)?;
        Ok(Operator {
            basis: self.basis.clone(),
            elements: self.elements.dot(&other.elements),
        })
    }
}

/// `ρ = |ψ⟩⟨ψ|` (rank one, trace `‖ψ‖²`).
pub fn density_from_pure(psi: &PureState) -> DensityMatrix {
    let n = psi.amplitudes.len();
    let mut elements = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            elements[[i, j]] = psi.amplitudes[i] * psi.amplitudes[j].conj();
        }
    }
    DensityMatrix {
        basis: psi.basis.clone(),
        elements,
    }
}

/// `Tr(ρ · obs)` for a Hermitian observable. The imaginary residual is
/// checked against 1e−10 and discarded.
pub fn expectation(rho: &DensityMatrix, obs: &Operator) -> Result<f64> {
    check_same_basis(&rho.basis, &obs.basis)?;
    if !obs.is_hermitian(HERMITICITY_TOL) {
        return Err(Error::NonHermitian {
            deviation: hermiticity_deviation(&obs.elements),
        });
    }
    let mut tr = C64::new(0.0, 0.0);
    let n = rho.basis.dim();
    for i in 0..n {
        for j in 0..n {
            tr += rho.elements[[i, j]] * obs.elements[[j, i]];
        }
    }
    debug_assert!(tr.im.abs() < 1e-10, "imaginary residual {}", tr.im);
    if tr.im.abs() >= 1e-10 {
        return Err(Error::NonHermitian { deviation: tr.im.abs() });
    }
    Ok(tr.re)
}

/// `K ρ K†` for a Kraus element, jump operator, or unitary `K`.
pub fn apply_operator(rho: &DensityMatrix, k: &Operator) -> Result<DensityMatrix> {
    check_same_basis(&rho.basis, &k.basis)?;
    let out = k.elements.dot(&rho.elements).dot(&adjoint(&k.elements));
    Ok(DensityMatrix {
        basis: rho.basis.clone(),
        elements: symmetrize(out),
    })
}

/// Rescales `ρ̃` to unit trace, returning the normalized state and `Tr ρ̃`.
pub fn normalize(rho: &DensityMatrix) -> Result<(DensityMatrix, f64)> {
    let tr = rho.trace();
    if tr <= TRACE_FLOOR {
        return Err(Error::ImpossibleBranch { trace: tr });
    }
    let elements = rho.elements.mapv(|c| c / tr);
    Ok((
        DensityMatrix {
            basis: rho.basis.clone(),
            elements,
        },
        tr,
    ))
}

pub(crate) fn adjoint(m: &Array2<C64>) -> Array2<C64> {
    m.t().mapv(|c| c.conj())
}

pub(crate) fn hermiticity_deviation(m: &Array2<C64>) -> f64 {
    let n = m.nrows();
    let mut dev: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            dev = dev.max((m[[i, j]] - m[[j, i]].conj()).norm());
        }
    }
    dev
}

/// Replaces `m` by its Hermitian part, squashing integrator round-off.
pub(crate) fn symmetrize(m: Array2<C64>) -> Array2<C64> {
    let adj = adjoint(&m);
    (m + adj).mapv(|c| c * 0.5)
}

/// Eigendecomposition of a Hermitian matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in ascending order together with the matching
/// eigenvector columns.
pub(crate) fn hermitian_eigen(m: &Array2<C64>) -> (Vec<f64>, Array2<C64>) {
    let n = m.nrows();
    let mut a = m.clone();
    let mut v: Array2<C64> = Array2::eye(n);
    let scale: f64 = m
        .iter()
        .map(|c| c.norm())
        .fold(0.0_f64, f64::max)
        .max(1e-300);

    for _sweep in 0..60 {
        let mut off: f64 = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off = off.max(a[[p, q]].norm());
            }
        }
        if off <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[[p, q]];
                let mag = apq.norm();
                if mag <= 1e-18 * scale {
                    continue;
                }
                let phase = apq / mag; // e^{iφ}
                let app = a[[p, p]].re;
                let aqq = a[[q, q]].re;
                let tau = (aqq - app) / (2.0 * mag);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                // R differs from the identity only in the (p,q) block:
                //   R[p][p] = c, R[p][q] = s·e^{iφ}, R[q][p] = −s·e^{−iφ}, R[q][q] = c.
                let spq = phase * s;
                for i in 0..n {
                    let aip = a[[i, p]];
                    let aiq = a[[i, q]];
                    a[[i, p]] = aip * c - aiq * spq.conj();
                    a[[i, q]] = aip * spq + aiq * c;
                }
                for j in 0..n {
                    let apj = a[[p, j]];
                    let aqj = a[[q, j]];
                    a[[p, j]] = apj * c - aqj * spq;
                    a[[q, j]] = apj * spq.conj() + aqj * c;
                }
                for i in 0..n {
                    let vip = v[[i, p]];
                    let viq = v[[i, q]];
                    v[[i, p]] = vip * c - viq * spq.conj();
                    v[[i, q]] = vip * spq + viq * c;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let evals: Vec<f64> = (0..n).map(|i| a[[i, i]].re).collect();
    order.sort_by(|&i, &j| evals[i].partial_cmp(&evals[j]).expect("finite eigenvalues"));
    let sorted_vals: Vec<f64> = order.iter().map(|&i| evals[i]).collect();
    let mut sorted_vecs = Array2::zeros((n, n));
    for (col, &i) in order.iter().enumerate() {
        for row in 0..n {
            sorted_vecs[[row, col]] = v[[row, i]];
        }
    }
    (sorted_vals, sorted_vecs)
}
