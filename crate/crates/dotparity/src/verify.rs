//! Experimental verification of the parity measurement: a partially dephased
//! parity projection, a global Hadamard, and a second parity measurement.
//! The odd-outcome probability of the second measurement, (1−α)/2, reads out
//! the coherence α left by the first — the dots are only globally
//! addressable, so everything is built from parity clicks and global
//! rotations.

use ndarray::linalg::kron;
use ndarray::{array, Array2};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::parity::{parity_projectors, StateAmplitudes};
use crate::qcore::{
    apply_operator, check_same_basis, density_from_pure, BasisRegistry,
    DensityMatrix, Operator,
};

/// Residual odd-span coherence after a parity measurement; 1 for
/// indistinguishable dots.
#[derive(Debug, Clone, Copy)]
pub struct CoherenceFactor(f64);

impl CoherenceFactor {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidParam("coherence factor must lie in [0, 1]".into()));
        }
        Ok(Self(alpha))
    }

    pub fn value(&self) -> f64 {
        self.0
    }
}

/// The four Bell states.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BellId {
    /// (|01⟩ + |10⟩)/√2 — stabilized by −Z₁Z₂ and X₁X₂.
    PsiPlus,
    /// (|01⟩ − |10⟩)/√2 — stabilized by −Z₁Z₂ and −X₁X₂.
    PsiMinus,
    /// (|00⟩ + |11⟩)/√2 — stabilized by Z₁Z₂ and X₁X₂.
    PhiPlus,
    /// (|00⟩ − |11⟩)/√2 — stabilized by Z₁Z₂ and −X₁X₂.
    PhiMinus,
}

impl BellId {
    pub fn state(&self, basis: &BasisRegistry) -> Result<DensityMatrix> {
        let r = 1.0 / 2.0_f64.sqrt();
        let amplitudes = match self {
            BellId::PsiPlus => StateAmplitudes::from_reals(0.0, r, r, 0.0),
            BellId::PsiMinus => StateAmplitudes::from_reals(0.0, r, -r, 0.0),
            BellId::PhiPlus => StateAmplitudes::from_reals(r, 0.0, 0.0, r),
            BellId::PhiMinus => StateAmplitudes::from_reals(r, 0.0, 0.0, -r),
        }?;
        Ok(density_from_pure(&amplitudes.to_pure_state(basis)?))
    }

    /// Expected signs of (⟨Z₁Z₂⟩, ⟨X₁X₂⟩).
    pub fn stabilizer_signs(&self) -> (f64, f64) {
        match self {
            BellId::PsiPlus => (-1.0, 1.0),
            BellId::PsiMinus => (-1.0, -1.0),
            BellId::PhiPlus => (1.0, 1.0),
            BellId::PhiMinus => (1.0, -1.0),
        }
    }
}

/// `Z₁Z₂` on the computational basis.
pub fn zz_operator(basis: &BasisRegistry) -> Result<Operator> {
    Operator::from_entries(
        basis.clone(),
        &[
            ("00", "00", C64::new(1.0, 0.0)),
            ("01", "01", C64::new(-1.0, 0.0)),
            ("10", "10", C64::new(-1.0, 0.0)),
            ("11", "11", C64::new(1.0, 0.0)),
        ],
    )
}

/// `X₁X₂` on the computational basis.
pub fn xx_operator(basis: &BasisRegistry) -> Result<Operator> {
    Operator::from_entries(
        basis.clone(),
        &[
            ("00", "11", C64::new(1.0, 0.0)),
            ("11", "00", C64::new(1.0, 0.0)),
            ("01", "10", C64::new(1.0, 0.0)),
            ("10", "01", C64::new(1.0, 0.0)),
        ],
    )
}

fn hadamard_pair(basis: &BasisRegistry) -> Result<Operator> {
    let r = 1.0 / 2.0_f64.sqrt();
    let h1 = array![[C64::new(r, 0.0), C64::new(r, 0.0)], [C64::new(r, 0.0), C64::new(-r, 0.0)]];
    Operator::new(basis.clone(), kron(&h1, &h1))
}

/// Splits a computational state by the dephased parity channel: the odd
/// branch keeps only a fraction α of its cross coherence,
///
/// `odd ∝ P₀₁ρP₀₁ + α(P₀₁ρP₁₀ + P₁₀ρP₀₁) + P₁₀ρP₁₀`,
///
/// while the even branch stays fully coherent. Returns both normalized
/// branches and the odd-branch probability.
pub fn dephased_parity_apply(
    rho: &DensityMatrix,
    alpha: CoherenceFactor,
) -> Result<(DensityMatrix, DensityMatrix, f64)> {
    check_same_basis(rho.basis(), &BasisRegistry::computational())?;
    let basis = rho.basis().clone();
    let a = alpha.value();
    let i01 = basis.index_of("01")?;
    let i10 = basis.index_of("10")?;

    let mut odd: Array2<C64> = Array2::zeros((4, 4));
    odd[[i01, i01]] = rho.matrix()[[i01, i01]];
    odd[[i10, i10]] = rho.matrix()[[i10, i10]];
    odd[[i01, i10]] = rho.matrix()[[i01, i10]] * a;
    odd[[i10, i01]] = rho.matrix()[[i10, i01]] * a;
    let p_odd = (odd[[i01, i01]] + odd[[i10, i10]]).re;
    if p_odd <= 1e-15 {
        return Err(Error::ImpossibleBranch { trace: p_odd });
    }

    let (_, p_even_proj) = parity_projectors(&basis)?;
    let even = apply_operator(rho, &p_even_proj)?;
    let p_even = even.trace();
    if p_even <= 1e-15 {
        return Err(Error::ImpossibleBranch { trace: p_even });
    }

    let odd_branch = DensityMatrix::new(basis.clone(), odd.mapv(|v| v / C64::new(p_odd, 0.0)))?;
    let even_branch = DensityMatrix::new(
        basis,
        even.matrix().mapv(|v| v / C64::new(p_even, 0.0)),
    )?;
    Ok((odd_branch, even_branch, p_odd))
}

/// `(H⊗H) ρ (H⊗H)` — the global Hadamard rotation (its own inverse).
pub fn global_hadamard(rho: &DensityMatrix) -> Result<DensityMatrix> {
    check_same_basis(rho.basis(), &BasisRegistry::computational())?;
    apply_operator(rho, &hadamard_pair(rho.basis())?)
}

/// Full verification pipeline for a given coherence factor: uniform input →
/// dephased parity (odd branch) → global Hadamard → second parity
/// measurement. Returns the odd-outcome probability of the second
/// measurement, which equals (1−α)/2.
pub fn verification_probability(alpha: CoherenceFactor) -> Result<f64> {
    let basis = BasisRegistry::computational();
    let rho0 = density_from_pure(&StateAmplitudes::uniform().to_pure_state(&basis)?);
    let (odd_branch, _, _) = dephased_parity_apply(&rho0, alpha)?;
    let rotated = global_hadamard(&odd_branch)?;
    let (p_odd_proj, _) = parity_projectors(&basis)?;
    let projected = apply_operator(&rotated, &p_odd_proj)?;
    Ok(projected.trace())
}

/// Identifies a Bell state from sharp (or thresholded) ZZ and XX
/// expectations; values inside (−0.5, 0.5) are indeterminate.
pub fn bell_discriminate(zz: f64, xx: f64) -> Result<BellId> {
    let small = zz.abs().min(xx.abs());
    if small < 0.5 {
        return Err(Error::IndeterminateOutcome(small));
    }
    Ok(match (zz > 0.0, xx > 0.0) {
        (false, true) => BellId::PsiPlus,
        (false, false) => BellId::PsiMinus,
        (true, true) => BellId::PhiPlus,
        (true, false) => BellId::PhiMinus,
    })
}
