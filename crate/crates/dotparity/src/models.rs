//! Rotating-frame Hamiltonian builders for the coupled-dot system.
//!
//! All energies are in meV with ħ = 1, so times are in ħ/meV (≈ 0.658 ps).
//! The lab-frame drive `Ω cos ω_l t` is replaced by time-independent `Ω/2`
//! couplings in the frame rotating at the laser frequency, which removes the
//! ~2 eV exciton scale from the integrators; detunings `δ = ω₀ − ω_l` carry
//! what is left of it.

use ndarray::{array, Array2};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::qcore::{hermiticity_deviation, BasisRegistry, Operator, HERMITICITY_TOL};

fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// Physical parameters of the ideal coupled-dot system (all meV).
#[derive(Debug, Clone, Copy)]
pub struct CqdParams {
    /// Exciton creation energy ω₀ (same for both dots).
    pub omega0_mev: f64,
    /// Laser frequency ω_l.
    pub omega_l_mev: f64,
    /// Laser coupling Ω.
    pub rabi_mev: f64,
    /// Resonant (Förster) exciton-transfer coupling V_F.
    pub v_f_mev: f64,
    /// Static biexciton shift V_XX.
    pub v_xx_mev: f64,
    /// Radiative decay rate Γ_X.
    pub gamma_x_mev: f64,
}

impl CqdParams {
    /// The canonical parameter set: V_F = 0.85 meV, V_XX = 5 meV,
    /// ω₀ = 2 eV, Ω = 0.1 meV, Γ_X = 4 μeV, resonant laser.
    pub fn canonical() -> Self {
        Self {
            omega0_mev: 2000.0,
            omega_l_mev: 2000.0,
            rabi_mev: 0.1,
            v_f_mev: 0.85,
            v_xx_mev: 5.0,
            gamma_x_mev: 0.004,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rabi_mev < 0.0 {
            return Err(Error::InvalidParam("rabi must be non-negative".into()));
        }
        if self.gamma_x_mev <= 0.0 {
            return Err(Error::InvalidParam("gamma_x must be positive".into()));
        }
        Ok(())
    }

    /// Laser detuning from the exciton line, δ = ω₀ − ω_l.
    pub fn delta_mev(&self) -> f64 {
        self.omega0_mev - self.omega_l_mev
    }
}

/// Valence-band mixing parameters.
#[derive(Debug, Clone, Copy)]
pub struct HoleMixingParams {
    /// Light/heavy-hole mixing factor ε.
    pub epsilon: f64,
    /// Exciton-transfer matrix element between heavy-hole trions, M_{hh,hh}.
    pub m_hhhh_mev: f64,
    /// Cross matrix element M_{lh,hh}.
    pub m_lhhh_mev: f64,
    /// Electron/light-hole overlap length l_lh.
    pub l_lh_nm: f64,
    /// Electron/heavy-hole overlap length l_hh.
    pub l_hh_nm: f64,
}

impl HoleMixingParams {
    /// The matched choice used for leakage scans: M_{hh,hh} = M_{lh,hh} = V_F
    /// and l_hh = l_lh.
    pub fn matched(epsilon: f64, v_f_mev: f64) -> Self {
        Self {
            epsilon,
            m_hhhh_mev: v_f_mev,
            m_lhhh_mev: v_f_mev,
            l_lh_nm: 1.0,
            l_hh_nm: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.epsilon) {
            return Err(Error::InvalidParam("epsilon must lie in [0, 1)".into()));
        }
        if self.l_lh_nm <= 0.0 || self.l_hh_nm <= 0.0 {
            return Err(Error::InvalidParam("overlap lengths must be positive".into()));
        }
        Ok(())
    }

    /// Effective mixing angle ε̃ = ε·l_lh/(√3·l_hh).
    pub fn epsilon_tilde(&self) -> f64 {
        self.epsilon * self.l_lh_nm / (3.0_f64.sqrt() * self.l_hh_nm)
    }

    /// Mixing-induced transfer coupling Ṽ_F = 2 ε̃ M_{lh,hh}.
    pub fn v_f_tilde_mev(&self) -> f64 {
        2.0 * self.epsilon_tilde() * self.m_lhhh_mev
    }
}

/// Per-dot exciton energies and decay rates for inhomogeneous dots.
#[derive(Debug, Clone, Copy)]
pub struct DetuningParams {
    pub omega_a_mev: f64,
    pub omega_b_mev: f64,
    pub omega_l_mev: f64,
    pub gamma_a_mev: f64,
    pub gamma_b_mev: f64,
}

impl DetuningParams {
    /// Laser tuned to the midpoint of the two exciton lines, so that
    /// δ_A = −δ_B = (ω_A − ω_B)/2.
    pub fn midpoint(omega_a_mev: f64, omega_b_mev: f64, gamma_mev: f64) -> Self {
        Self {
            omega_a_mev,
            omega_b_mev,
            omega_l_mev: 0.5 * (omega_a_mev + omega_b_mev),
            gamma_a_mev: gamma_mev,
            gamma_b_mev: gamma_mev,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.gamma_a_mev <= 0.0 || self.gamma_b_mev <= 0.0 {
            return Err(Error::InvalidParam("decay rates must be positive".into()));
        }
        Ok(())
    }

    pub fn delta_a_mev(&self) -> f64 {
        self.omega_a_mev - self.omega_l_mev
    }

    pub fn delta_b_mev(&self) -> f64 {
        self.omega_b_mev - self.omega_l_mev
    }

    /// Exciton line splitting Δω = ω_A − ω_B.
    pub fn delta_omega_mev(&self) -> f64 {
        self.omega_a_mev - self.omega_b_mev
    }
}

/// Frame tag carried by every Hamiltonian this module builds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Frame {
    RotatingAtLaser,
}

/// A Hamiltonian block: Hermitian operator (meV) plus its frame tag.
#[derive(Debug, Clone)]
pub struct HamiltonianModel {
    op: Operator,
    frame: Frame,
}

impl HamiltonianModel {
    pub fn new(op: Operator, frame: Frame) -> Result<Self> {
        let dev = hermiticity_deviation(op.matrix());
        if dev > HERMITICITY_TOL {
            return Err(Error::NonHermitian { deviation: dev });
        }
        Ok(Self { op, frame })
    }

    pub fn basis(&self) -> &BasisRegistry {
        self.op.basis()
    }

    pub fn matrix(&self) -> &Array2<C64> {
        self.op.matrix()
    }

    pub fn operator(&self) -> &Operator {
        &self.op
    }

    pub fn frame(&self) -> Frame {
        self.frame
    }
}

fn model_from(basis: BasisRegistry, m: Array2<C64>) -> Result<HamiltonianModel> {
    HamiltonianModel::new(Operator::new(basis, m)?, Frame::RotatingAtLaser)
}

/// The four decoupled rotating-frame blocks of the ideal system.
#[derive(Debug, Clone)]
pub struct IdealBlocks {
    /// `{00}`: optically inactive.
    pub h00: HamiltonianModel,
    /// `{01, 0X}`: resonant two-level drive.
    pub h01: HamiltonianModel,
    /// `{10, X0}`: identical two-level drive.
    pub h10: HamiltonianModel,
    /// `{11, 1X, X1, XX}`: driven pair with Förster and biexciton couplings.
    pub h11: HamiltonianModel,
}

/// Builds the rotating-frame, rotating-wave blocks of the ideal Hamiltonian.
pub fn build_ideal_blocks(p: &CqdParams) -> Result<IdealBlocks> {
    p.validate()?;
    let delta = p.delta_mev();
    let half_rabi = 0.5 * p.rabi_mev;

    let h00 = model_from(
        BasisRegistry::new(["00"])?,
        Array2::zeros((1, 1)),
    )?;

    let two_level = array![[re(0.0), re(half_rabi)], [re(half_rabi), re(delta)]];
    let h01 = model_from(
        BasisRegistry::new(["01", "0X"])?,
        two_level.clone(),
    )?;
    let h10 = model_from(BasisRegistry::new(["10", "X0"])?, two_level)?;

    let h11 = model_from(BasisRegistry::h11_block(), h11_matrix(p, delta, delta))?;

    Ok(IdealBlocks { h00, h01, h10, h11 })
}

/// `{11, 1X, X1, XX}` matrix with independent per-dot detunings. `|X1⟩`
/// carries the dot-A exciton (detuning δ_A) and `|1X⟩` the dot-B one (δ_B).
fn h11_matrix(p: &CqdParams, delta_a: f64, delta_b: f64) -> Array2<C64> {
    let hr = 0.5 * p.rabi_mev;
    array![
        [re(0.0), re(hr), re(hr), re(0.0)],
        [re(hr), re(delta_b), re(p.v_f_mev), re(hr)],
        [re(hr), re(p.v_f_mev), re(delta_a), re(hr)],
        [re(0.0), re(hr), re(hr), re(delta_a + delta_b + p.v_xx_mev)],
    ]
}

/// Rewrites an `{11, 1X, X1, XX}` block in the zero-drive eigenbasis
/// `{11, ψ+, ψ-, XX}` with ψ± = (|1X⟩ ± |X1⟩)/√2.
///
/// Valid only for identical dots (equal detuning on `|1X⟩` and `|X1⟩`);
/// the drive couples `|11⟩` only to ψ+, with strength Ω′/2 = √2·Ω/2.
pub fn transform_h11_to_foerster_basis(
    h11: &HamiltonianModel,
    p: &CqdParams,
) -> Result<HamiltonianModel> {
    let m = h11.matrix();
    if m.nrows() != 4 {
        return Err(Error::DimensionMismatch {
            expected: 4,
            got: m.nrows(),
        });
    }
    if (m[[1, 1]] - m[[2, 2]]).norm() > 1e-12 {
        return Err(Error::InvalidParam(
            "Förster eigenbasis requires equal detunings on the two single-exciton levels".into(),
        ));
    }
    let delta = m[[1, 1]].re;
    let coupling = 2.0_f64.sqrt() * 0.5 * p.rabi_mev; // Ω′/2 with Ω′ = √2 Ω
    let out = array![
        [re(0.0), re(coupling), re(0.0), re(0.0)],
        [
            re(coupling),
            re(delta + p.v_f_mev),
            re(0.0),
            re(coupling)
        ],
        [re(0.0), re(0.0), re(delta - p.v_f_mev), re(0.0)],
        [re(0.0), re(coupling), re(0.0), m[[3, 3]]],
    ];
    model_from(BasisRegistry::foerster_block(), out)
}

/// Safety margin of the spin-selective excitation condition,
/// `min(|V_F|, |V_XX|) / (|Ω′|/2)` with Ω′ = √2 Ω. Values ≳ 10 mean the
/// even-parity states are not excited to first order. Returns +∞ at Ω = 0.
pub fn pauli_blocking_margin(p: &CqdParams) -> f64 {
    if p.rabi_mev == 0.0 {
        return f64::INFINITY;
    }
    let half_omega_prime = 2.0_f64.sqrt() * p.rabi_mev.abs() / 2.0;
    p.v_f_mev.abs().min(p.v_xx_mev.abs()) / half_omega_prime
}

/// Odd-subspace block with hole mixing, in the basis `{01, 0X-, X+1, X+X-}`.
pub fn build_hole_mixing_odd_block(
    p: &CqdParams,
    hm: &HoleMixingParams,
    delta_mev: f64,
) -> Result<HamiltonianModel> {
    p.validate()?;
    hm.validate()?;
    let hr = 0.5 * p.rabi_mev;
    let leak = hm.epsilon_tilde() * hr;
    let vft = hm.v_f_tilde_mev();
    let m = array![
        [re(0.0), re(hr), re(leak), re(0.0)],
        [re(hr), re(delta_mev), re(vft), re(leak)],
        [re(leak), re(vft), re(delta_mev), re(hr)],
        [re(0.0), re(leak), re(hr), re(2.0 * delta_mev + p.v_xx_mev)],
    ];
    model_from(BasisRegistry::hole_mixing_block(), m)
}

/// `{11, 1X, X1, XX}` block for dots with unequal exciton energies.
pub fn build_detuned_h11(p: &CqdParams, d: &DetuningParams) -> Result<HamiltonianModel> {
    p.validate()?;
    d.validate()?;
    model_from(
        BasisRegistry::h11_block(),
        h11_matrix(p, d.delta_a_mev(), d.delta_b_mev()),
    )
}

/// The detuned 11-block rewritten in its zero-drive eigenbasis, together
/// with the rotation angle and effective couplings.
#[derive(Debug, Clone)]
pub struct DetunedFoersterFrame {
    /// Block in the basis `{11, ψ-, ψ+, XX}`.
    pub hamiltonian: HamiltonianModel,
    /// Mixing angle of `{|1X⟩, |X1⟩}`; tan 2θ = 2V_F/(δ_A − δ_B).
    pub theta: f64,
    /// Ω₊ = Ω(cos θ + sin θ), the drive coupling to ψ+.
    pub omega_plus_mev: f64,
    /// Ω₋ = Ω(cos θ − sin θ), the drive coupling to ψ-.
    pub omega_minus_mev: f64,
    /// δ′_A = δ_A cos²θ + δ_B sin²θ + V_F sin 2θ (the ψ+ level).
    pub delta_a_prime_mev: f64,
    /// δ′_B = δ_A sin²θ + δ_B cos²θ − V_F sin 2θ (the ψ- level).
    pub delta_b_prime_mev: f64,
    /// δ_A + δ_B + V_XX, the detuning of the doubly excited level.
    pub biexciton_detuning_mev: f64,
}

impl DetunedFoersterFrame {
    /// How far the drive is from exciting the transformed levels:
    /// `min(|δ′_A|, |δ′_B|, |δ_A+δ_B+V_XX|) / max(|Ω±|/2)`. Large values
    /// mean transitions out of `|11⟩` stay suppressed.
    pub fn suppression_margin(&self) -> f64 {
        let drive = 0.5 * self.omega_plus_mev.abs().max(self.omega_minus_mev.abs());
        let gap = self
            .delta_a_prime_mev
            .abs()
            .min(self.delta_b_prime_mev.abs())
            .min(self.biexciton_detuning_mev.abs());
        if drive == 0.0 {
            return f64::INFINITY;
        }
        gap / drive
    }
}

/// Diagonalizes the single-exciton pair of the detuned 11-block.
///
/// Uses ψ- = cos θ|1X⟩ − sin θ|X1⟩ and ψ+ = sin θ|1X⟩ + cos θ|X1⟩ with
/// θ = ½·atan2(2V_F, δ_A − δ_B), which zeroes the ψ-↔ψ+ coupling; the
/// identical-dot limit then lands on θ = π/4 and Ω₊ = √2 Ω. At V_F = 0 the
/// pair is already diagonal and θ = 0. Fails when V_F = 0 and δ_A = δ_B
/// (the angle is undefined on a degenerate uncoupled pair).
pub fn transform_detuned_h11(
    h: &HamiltonianModel,
    p: &CqdParams,
    d: &DetuningParams,
) -> Result<DetunedFoersterFrame> {
    let delta_a = d.delta_a_mev();
    let delta_b = d.delta_b_mev();
    let split = delta_a - delta_b;
    if p.v_f_mev == 0.0 && split == 0.0 {
        return Err(Error::InvalidParam(
            "mixing angle undefined: V_F = 0 and equal detunings".into(),
        ));
    }
    let theta = if p.v_f_mev == 0.0 {
        0.0
    } else {
        0.5 * (2.0 * p.v_f_mev).atan2(split)
    };
    let (sin_t, cos_t) = theta.sin_cos();
    let sin_2t = (2.0 * theta).sin();
    let omega_plus = p.rabi_mev * (cos_t + sin_t);
    let omega_minus = p.rabi_mev * (cos_t - sin_t);
    let delta_a_prime = delta_a * cos_t * cos_t + delta_b * sin_t * sin_t + p.v_f_mev * sin_2t;
    let delta_b_prime = delta_a * sin_t * sin_t + delta_b * cos_t * cos_t - p.v_f_mev * sin_2t;
    let biexciton = h.matrix()[[3, 3]].re;

    let (hp, hm) = (0.5 * omega_plus, 0.5 * omega_minus);
    let m = array![
        [re(0.0), re(hm), re(hp), re(0.0)],
        [re(hm), re(delta_b_prime), re(0.0), re(hm)],
        [re(hp), re(0.0), re(delta_a_prime), re(hp)],
        [re(0.0), re(hm), re(hp), re(biexciton)],
    ];
    Ok(DetunedFoersterFrame {
        hamiltonian: model_from(BasisRegistry::detuned_foerster_block(), m)?,
        theta,
        omega_plus_mev: omega_plus,
        omega_minus_mev: omega_minus,
        delta_a_prime_mev: delta_a_prime,
        delta_b_prime_mev: delta_b_prime,
        biexciton_detuning_mev: biexciton,
    })
}

/// The two decoupled odd-subspace blocks for detuned dots.
///
/// The exciton on dot A (state `|X0⟩`) carries δ_A and the one on dot B
/// (state `|0X⟩`) carries δ_B, matching the level assignment of the
/// detuned 11-block.
#[derive(Debug, Clone)]
pub struct DetunedOddBlocks {
    /// `{01, 0X}` with detuning δ_B.
    pub h01: HamiltonianModel,
    /// `{10, X0}` with detuning δ_A.
    pub h10: HamiltonianModel,
}

pub fn build_detuned_odd_blocks(p: &CqdParams, d: &DetuningParams) -> Result<DetunedOddBlocks> {
    p.validate()?;
    d.validate()?;
    let hr = 0.5 * p.rabi_mev;
    let block = |delta: f64| array![[re(0.0), re(hr)], [re(hr), re(delta)]];
    Ok(DetunedOddBlocks {
        h01: model_from(BasisRegistry::new(["01", "0X"])?, block(d.delta_b_mev()))?,
        h10: model_from(BasisRegistry::new(["10", "X0"])?, block(d.delta_a_mev()))?,
    })
}

/// Assembles the full nine-level rotating-frame Hamiltonian on
/// [`BasisRegistry::cqd_full`]. With `with_drive = false` only the detunings
/// and the exciton-exciton couplings remain (the relaxation-period frame).
pub fn assemble_full(p: &CqdParams, with_drive: bool) -> Result<HamiltonianModel> {
    p.validate()?;
    let basis = BasisRegistry::cqd_full();
    let n = basis.dim();
    let delta = p.delta_mev();
    let mut m: Array2<C64> = Array2::zeros((n, n));

    let mut set_diag = |label: &str, v: f64| -> Result<()> {
        let i = basis.index_of(label)?;
        m[[i, i]] = re(v);
        Ok(())
    };
    set_diag("0X", delta)?;
    set_diag("X0", delta)?;
    set_diag("1X", delta)?;
    set_diag("X1", delta)?;
    set_diag("XX", 2.0 * delta + p.v_xx_mev)?;

    let mut couple = |a: &str, b: &str, v: f64| -> Result<()> {
        let i = basis.index_of(a)?;
        let j = basis.index_of(b)?;
        m[[i, j]] += re(v);
        m[[j, i]] += re(v);
        Ok(())
    };
    couple("1X", "X1", p.v_f_mev)?;
    if with_drive {
        let hr = 0.5 * p.rabi_mev;
        couple("01", "0X", hr)?;
        couple("10", "X0", hr)?;
        couple("11", "1X", hr)?;
        couple("11", "X1", hr)?;
        couple("1X", "XX", hr)?;
        couple("X1", "XX", hr)?;
    }
    model_from(basis, m)
}
