//! Time-evolution engines: unitary Schrödinger propagation, unconditional
//! Lindblad evolution, the linear unnormalized no-detection master equation,
//! and seeded photon-counting quantum-jump trajectories.
//!
//! Trajectories are sampled by the waiting-time construction: the norm of the
//! no-emission state is integrated until it crosses a uniform draw, which is
//! statistically exact (no dt-Bernoulli stepping). An emission is then
//! detected with probability η; missed emissions still apply the jump
//! operator, so the trajectory mean reproduces the unconditional master
//! equation and the no-click sub-ensemble reproduces the unnormalized
//! conditional equation.

use ndarray::linalg::kron;
use ndarray::{Array, Array1, Array2, Dimension};
use num_complex::Complex64 as C64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::models::HamiltonianModel;
use crate::qcore::{
    adjoint, check_same_basis, density_from_pure, hermitian_eigen, symmetrize, BasisRegistry,
    DensityMatrix, Operator, PureState,
};

/// A monitored decay channel: dimensionless jump structure, rate (meV), and
/// the efficiency of the detector watching it.
#[derive(Debug, Clone)]
pub struct LindbladChannel {
    operator: Operator,
    rate_mev: f64,
    efficiency: f64,
}

impl LindbladChannel {
    pub fn new(operator: Operator, rate_mev: f64, efficiency: f64) -> Result<Self> {
        if rate_mev < 0.0 {
            return Err(Error::InvalidParam("channel rate must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&efficiency) {
            return Err(Error::InvalidParam("efficiency must lie in [0, 1]".into()));
        }
        Ok(Self {
            operator,
            rate_mev,
            efficiency,
        })
    }

    /// The collective radiative channel `c = √Γ (|01⟩⟨0X| + |10⟩⟨X0|)` on any
    /// basis containing those labels.
    pub fn collective_radiative(
        basis: BasisRegistry,
        gamma_mev: f64,
        efficiency: f64,
    ) -> Result<Self> {
        let one = C64::new(1.0, 0.0);
        let op = Operator::from_entries(basis, &[("01", "0X", one), ("10", "X0", one)])?;
        Self::new(op, gamma_mev, efficiency)
    }

    pub fn operator(&self) -> &Operator {
        &self.operator
    }

    pub fn rate_mev(&self) -> f64 {
        self.rate_mev
    }

    pub fn efficiency(&self) -> f64 {
        self.efficiency
    }

    /// `c = √rate · operator`.
    pub fn scaled_matrix(&self) -> Array2<C64> {
        self.operator
            .matrix()
            .mapv(|v| v * C64::new(self.rate_mev.sqrt(), 0.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntegratorMethod {
    Rk4Fixed,
    Rk45Adaptive,
}

/// Step-size and tolerance knobs for the integrators.
#[derive(Debug, Clone, Copy)]
pub struct IntegratorConfig {
    /// Hard cap on the step size (ħ/meV).
    pub dt_max: f64,
    /// Relative tolerance for the adaptive method; also sets the fixed step
    /// count heuristic for RK4.
    pub rel_tol: f64,
    pub method: IntegratorMethod,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            dt_max: f64::INFINITY,
            rel_tol: 1e-9,
            method: IntegratorMethod::Rk45Adaptive,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dt_max <= 0.0 {
            return Err(Error::InvalidParam("dt_max must be positive".into()));
        }
        if !(self.rel_tol > 0.0 && self.rel_tol <= 1e-3) {
            return Err(Error::InvalidParam("rel_tol must lie in (0, 1e-3]".into()));
        }
        Ok(())
    }
}

const ATOL: f64 = 1e-12;

/// One Dormand–Prince 5(4) step; returns the 5th-order solution and the
/// scaled error estimate (≤ 1 means acceptable).
fn dopri5_step<D, F>(rhs: &F, t: f64, y: &Array<C64, D>, h: f64, rel_tol: f64) -> (Array<C64, D>, f64)
where
    D: Dimension,
    F: Fn(f64, &Array<C64, D>) -> Array<C64, D>,
{
    fn stage<D: Dimension>(
        y: &Array<C64, D>,
        h: f64,
        terms: &[(f64, &Array<C64, D>)],
    ) -> Array<C64, D> {
        let mut out = y.clone();
        for &(c, k) in terms {
            let w = C64::new(h * c, 0.0);
            out.zip_mut_with(k, |o, &kv| *o += kv * w);
        }
        out
    }

    let k1 = rhs(t, y);
    let k2 = rhs(t + h / 5.0, &stage(y, h, &[(1.0 / 5.0, &k1)]));
    let k3 = rhs(
        t + 3.0 * h / 10.0,
        &stage(y, h, &[(3.0 / 40.0, &k1), (9.0 / 40.0, &k2)]),
    );
    let k4 = rhs(
        t + 4.0 * h / 5.0,
        &stage(
            y,
            h,
            &[(44.0 / 45.0, &k1), (-56.0 / 15.0, &k2), (32.0 / 9.0, &k3)],
        ),
    );
    let k5 = rhs(
        t + 8.0 * h / 9.0,
        &stage(
            y,
            h,
            &[
                (19372.0 / 6561.0, &k1),
                (-25360.0 / 2187.0, &k2),
                (64448.0 / 6561.0, &k3),
                (-212.0 / 729.0, &k4),
            ],
        ),
    );
    let k6 = rhs(
        t + h,
        &stage(
            y,
            h,
            &[
                (9017.0 / 3168.0, &k1),
                (-355.0 / 33.0, &k2),
                (46732.0 / 5247.0, &k3),
                (49.0 / 176.0, &k4),
                (-5103.0 / 18656.0, &k5),
            ],
        ),
    );
    let y5 = stage(
        y,
        h,
        &[
            (35.0 / 384.0, &k1),
            (500.0 / 1113.0, &k3),
            (125.0 / 192.0, &k4),
            (-2187.0 / 6784.0, &k5),
            (11.0 / 84.0, &k6),
        ],
    );
    let k7 = rhs(t + h, &y5);

    // b − b̂ weights of the embedded 4th-order solution.
    let err_vec = stage(
        &Array::zeros(y.raw_dim()),
        h,
        &[
            (71.0 / 57600.0, &k1),
            (-71.0 / 16695.0, &k3),
            (71.0 / 1920.0, &k4),
            (-17253.0 / 339200.0, &k5),
            (22.0 / 525.0, &k6),
            (-1.0 / 40.0, &k7),
        ],
    );
    let mut err: f64 = 0.0;
    for ((e, a), b) in err_vec.iter().zip(y.iter()).zip(y5.iter()) {
        let scale = ATOL + rel_tol * a.norm().max(b.norm());
        err = err.max(e.norm() / scale);
    }
    (y5, err)
}

fn rk4_step<D, F>(rhs: &F, t: f64, y: &Array<C64, D>, h: f64) -> Array<C64, D>
where
    D: Dimension,
    F: Fn(f64, &Array<C64, D>) -> Array<C64, D>,
{
    let k1 = rhs(t, y);
    let half = C64::new(0.5 * h, 0.0);
    let mut y2 = y.clone();
    y2.zip_mut_with(&k1, |o, &k| *o += k * half);
    let k2 = rhs(t + 0.5 * h, &y2);
    let mut y3 = y.clone();
    y3.zip_mut_with(&k2, |o, &k| *o += k * half);
    let k3 = rhs(t + 0.5 * h, &y3);
    let mut y4 = y.clone();
    y4.zip_mut_with(&k3, |o, &k| *o += k * C64::new(h, 0.0));
    let k4 = rhs(t + h, &y4);

    let w = h / 6.0;
    let mut out = y.clone();
    out.zip_mut_with(&k1, |o, &k| *o += k * C64::new(w, 0.0));
    out.zip_mut_with(&k2, |o, &k| *o += k * C64::new(2.0 * w, 0.0));
    out.zip_mut_with(&k3, |o, &k| *o += k * C64::new(2.0 * w, 0.0));
    out.zip_mut_with(&k4, |o, &k| *o += k * C64::new(w, 0.0));
    out
}

/// Integrates `dy/dt = rhs(t, y)` from 0 to `t_total`.
pub(crate) fn integrate<D, F>(
    y0: &Array<C64, D>,
    rhs: &F,
    t_total: f64,
    cfg: &IntegratorConfig,
) -> Result<Array<C64, D>>
where
    D: Dimension,
    F: Fn(f64, &Array<C64, D>) -> Array<C64, D>,
{
    cfg.validate()?;
    if t_total == 0.0 {
        return Ok(y0.clone());
    }
    if t_total < 0.0 {
        return Err(Error::InvalidParam("integration time must be non-negative".into()));
    }
    match cfg.method {
        IntegratorMethod::Rk45Adaptive => {
            let mut t = 0.0;
            let mut y = y0.clone();
            let mut h = (1e-2 * t_total).min(cfg.dt_max);
            while t < t_total {
                let h_eff = h.min(cfg.dt_max).min(t_total - t);
                let (y_new, err) = dopri5_step(rhs, t, &y, h_eff, cfg.rel_tol);
                if err <= 1.0 {
                    t += h_eff;
                    y = y_new;
                    let grow = if err == 0.0 {
                        5.0
                    } else {
                        (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                    };
                    h = h_eff * grow;
                } else {
                    h = h_eff * (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
                    if h < 1e-14 * t_total.max(1.0) {
                        return Err(Error::StepSizeUnderflow { t });
                    }
                }
            }
            Ok(y)
        }
        IntegratorMethod::Rk4Fixed => {
            if !cfg.dt_max.is_finite() {
                return Err(Error::InvalidParam(
                    "rk4_fixed requires a finite dt_max".into(),
                ));
            }
            let n = (t_total / cfg.dt_max).ceil().max(1.0) as usize;
            let h = t_total / n as f64;
            let mut y = y0.clone();
            let mut t = 0.0;
            for _ in 0..n {
                y = rk4_step(rhs, t, &y, h);
                t += h;
            }
            Ok(y)
        }
    }
}

/// `ψ(t) = exp(−iHt) ψ(0)` by direct integration of the Schrödinger equation.
pub fn evolve_unitary(
    psi: &PureState,
    h: &HamiltonianModel,
    t: f64,
    cfg: &IntegratorConfig,
) -> Result<PureState> {
    check_same_basis(psi.basis(), h.basis())?;
    if t < 0.0 {
        return Err(Error::InvalidParam("evolution time must be non-negative".into()));
    }
    let hm = h.matrix().clone();
    let minus_i = C64::new(0.0, -1.0);
    let rhs = move |_t: f64, y: &Array1<C64>| hm.dot(y).mapv(|v| v * minus_i);
    let out = integrate(psi.amplitudes(), &rhs, t, cfg)?;
    PureState::new(psi.basis().clone(), out)
}

fn prepare_channels(
    basis: &BasisRegistry,
    channels: &[LindbladChannel],
) -> Result<(Vec<Array2<C64>>, Vec<f64>, Array2<C64>)> {
    let n = basis.dim();
    let mut cs = Vec::with_capacity(channels.len());
    let mut etas = Vec::with_capacity(channels.len());
    let mut k_total: Array2<C64> = Array2::zeros((n, n));
    for ch in channels {
        check_same_basis(basis, ch.operator().basis())?;
        let c = ch.scaled_matrix();
        k_total = k_total + adjoint(&c).dot(&c);
        cs.push(c);
        etas.push(ch.efficiency());
    }
    Ok((cs, etas, k_total))
}

/// Master-equation right-hand side `−i[H,ρ] + Σ w_j c_j ρ c_j† − ½{K, ρ}`,
/// with per-channel jump weights `w_j` (1 for the unconditional equation,
/// `1−η_j` for the no-detection one).
struct MasterEqRhs {
    h: Array2<C64>,
    cs: Vec<Array2<C64>>,
    weights: Vec<f64>,
    k_total: Array2<C64>,
}

impl MasterEqRhs {
    fn eval(&self, rho: &Array2<C64>) -> Array2<C64> {
        let minus_i = C64::new(0.0, -1.0);
        let comm = self.h.dot(rho) - rho.dot(&self.h);
        let mut out = comm.mapv(|v| v * minus_i);
        for (c, &w) in self.cs.iter().zip(&self.weights) {
            if w != 0.0 {
                let jump = c.dot(rho).dot(&adjoint(c));
                out.zip_mut_with(&jump, |o, &j| *o += j * C64::new(w, 0.0));
            }
        }
        let anti = self.k_total.dot(rho) + rho.dot(&self.k_total);
        out.zip_mut_with(&anti, |o, &a| *o -= a * C64::new(0.5, 0.0));
        out
    }
}

fn evolve_master(
    rho: &DensityMatrix,
    h: &HamiltonianModel,
    channels: &[LindbladChannel],
    weights: Vec<f64>,
    t: f64,
    cfg: &IntegratorConfig,
) -> Result<DensityMatrix> {
    check_same_basis(rho.basis(), h.basis())?;
    let (cs, _etas, k_total) = prepare_channels(rho.basis(), channels)?;
    let rhs_data = MasterEqRhs {
        h: h.matrix().clone(),
        cs,
        weights,
        k_total,
    };
    let rhs = move |_t: f64, y: &Array2<C64>| rhs_data.eval(y);
    let out = integrate(rho.matrix(), &rhs, t, cfg)?;
    Ok(DensityMatrix::new_unchecked(
        rho.basis().clone(),
        symmetrize(out),
    ))
}

/// Unconditional Lindblad evolution (trace preserving, detector-independent).
pub fn evolve_lindblad(
    rho: &DensityMatrix,
    h: &HamiltonianModel,
    channels: &[LindbladChannel],
    t: f64,
    cfg: &IntegratorConfig,
) -> Result<DensityMatrix> {
    let weights = vec![1.0; channels.len()];
    evolve_master(rho, h, channels, weights, t, cfg)
}

/// Linear, unnormalized no-detection evolution
/// `dρ̃/dt = −i[H,ρ̃] + Σ_j { (1−η_j) c_j ρ̃ c_j† − ½{c_j†c_j, ρ̃} }`.
///
/// The trace of the result is the no-detection probability; it is
/// non-increasing whenever some η_j > 0, and the equation reduces to the
/// unconditional one at η = 0.
pub fn evolve_cme_unnormalized(
    rho: &DensityMatrix,
    h: &HamiltonianModel,
    channels: &[LindbladChannel],
    t: f64,
    cfg: &IntegratorConfig,
) -> Result<DensityMatrix> {
    let weights = channels.iter().map(|c| 1.0 - c.efficiency()).collect();
    evolve_master(rho, h, channels, weights, t, cfg)
}

/// Probability that no photon has been detected up to `t`, i.e. the trace of
/// the unnormalized no-detection state.
pub fn no_photon_probability(
    rho: &DensityMatrix,
    h: &HamiltonianModel,
    channels: &[LindbladChannel],
    t: f64,
    cfg: &IntegratorConfig,
) -> Result<f64> {
    Ok(evolve_cme_unnormalized(rho, h, channels, t, cfg)?.trace())
}

/// Jump part of a master equation as an explicit operator-sandwich sum
/// `ρ ↦ Σ w · L ρ R†`.
#[derive(Debug, Clone)]
pub struct JumpSuperop {
    basis: BasisRegistry,
    terms: Vec<(f64, Array2<C64>, Array2<C64>)>,
}

impl JumpSuperop {
    pub fn new(basis: BasisRegistry, terms: Vec<(f64, Operator, Operator)>) -> Result<Self> {
        let mut prepared = Vec::with_capacity(terms.len());
        for (w, l, r) in terms {
            check_same_basis(&basis, l.basis())?;
            check_same_basis(&basis, r.basis())?;
            prepared.push((w, l.matrix().clone(), r.matrix().clone()));
        }
        Ok(Self {
            basis,
            terms: prepared,
        })
    }

    /// `ρ ↦ c ρ c†` for a single monitored channel.
    pub fn from_channel(ch: &LindbladChannel) -> Self {
        let c = ch.scaled_matrix();
        Self {
            basis: ch.operator().basis().clone(),
            terms: vec![(1.0, c.clone(), c)],
        }
    }

    pub fn basis(&self) -> &BasisRegistry {
        &self.basis
    }

    pub fn apply_matrix(&self, rho: &Array2<C64>) -> Array2<C64> {
        let n = self.basis.dim();
        let mut out = Array2::zeros((n, n));
        for (w, l, r) in &self.terms {
            let term = l.dot(rho).dot(&adjoint(r));
            out.zip_mut_with(&term, |o, &v| *o += v * C64::new(*w, 0.0));
        }
        out
    }

    pub fn apply(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        check_same_basis(&self.basis, rho.basis())?;
        Ok(DensityMatrix::new_unchecked(
            self.basis.clone(),
            symmetrize(self.apply_matrix(rho.matrix())),
        ))
    }

    /// Column-stacked matrix representation `Σ w · conj(R) ⊗ L`.
    pub fn to_matrix(&self) -> Array2<C64> {
        let n = self.basis.dim();
        let mut out = Array2::zeros((n * n, n * n));
        for (w, l, r) in &self.terms {
            let term = kron(&r.mapv(|v| v.conj()), l);
            out.zip_mut_with(&term, |o, &v| *o += v * C64::new(*w, 0.0));
        }
        out
    }
}

/// Damping part `ρ ↦ ½{K, ρ}` of a master equation.
#[derive(Debug, Clone)]
pub struct DampSuperop {
    basis: BasisRegistry,
    k: Array2<C64>,
}

impl DampSuperop {
    pub fn new(basis: BasisRegistry, k: Operator) -> Result<Self> {
        check_same_basis(&basis, k.basis())?;
        Ok(Self {
            basis,
            k: k.matrix().clone(),
        })
    }

    /// `K = c†c` for a single channel.
    pub fn from_channel(ch: &LindbladChannel) -> Self {
        let c = ch.scaled_matrix();
        Self {
            basis: ch.operator().basis().clone(),
            k: adjoint(&c).dot(&c),
        }
    }

    pub fn basis(&self) -> &BasisRegistry {
        &self.basis
    }

    pub fn apply_matrix(&self, rho: &Array2<C64>) -> Array2<C64> {
        (self.k.dot(rho) + rho.dot(&self.k)).mapv(|v| v * C64::new(0.5, 0.0))
    }

    pub fn to_matrix(&self) -> Array2<C64> {
        let n = self.basis.dim();
        let eye: Array2<C64> = Array2::eye(n);
        (kron(&eye, &self.k) + kron(&self.k.t().to_owned(), &eye)).mapv(|v| v * C64::new(0.5, 0.0))
    }
}

/// Evolves `dρ̃/dt = −i[H,ρ̃] + (1−η)·J(ρ̃) − A(ρ̃)` for explicit jump and
/// damping superoperators; `eta = 0` gives the unconditional equation.
pub fn evolve_cme_superop(
    rho: &DensityMatrix,
    h: &HamiltonianModel,
    jump: &JumpSuperop,
    damp: &DampSuperop,
    eta: f64,
    t: f64,
    cfg: &IntegratorConfig,
) -> Result<DensityMatrix> {
    check_same_basis(rho.basis(), h.basis())?;
    check_same_basis(rho.basis(), jump.basis())?;
    check_same_basis(rho.basis(), damp.basis())?;
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::InvalidParam("efficiency must lie in [0, 1]".into()));
    }
    let hm = h.matrix().clone();
    let jump = jump.clone();
    let damp = damp.clone();
    let minus_i = C64::new(0.0, -1.0);
    let w = C64::new(1.0 - eta, 0.0);
    let rhs = move |_t: f64, y: &Array2<C64>| {
        let mut out = (hm.dot(y) - y.dot(&hm)).mapv(|v| v * minus_i);
        if w.re != 0.0 {
            out.zip_mut_with(&jump.apply_matrix(y), |o, &v| *o += v * w);
        }
        out.zip_mut_with(&damp.apply_matrix(y), |o, &v| *o -= v);
        out
    };
    let out = integrate(rho.matrix(), &rhs, t, cfg)?;
    Ok(DensityMatrix::new_unchecked(
        rho.basis().clone(),
        symmetrize(out),
    ))
}

/// Record of one monitored-relaxation trajectory.
#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    /// Master seed of the run.
    pub seed: u64,
    /// Per-trajectory stream index.
    pub stream: u64,
    /// Detection times (missed emissions are not detections).
    pub jump_times: Vec<f64>,
    /// Total number of detections, `Σ dN`.
    pub dn_total: usize,
    /// Normalized state at the horizon.
    pub final_state: DensityMatrix,
    /// Norm of the unnormalized no-emission state at the horizon, relative to
    /// the last emission (or the start).
    pub no_jump_norm: f64,
}

fn norm_sqr(y: &Array1<C64>) -> f64 {
    y.iter().map(|v| v.norm_sqr()).sum()
}

struct JumpEngine {
    /// No-emission generator `G = −iH − ½ Σ c_j†c_j`.
    g: Array2<C64>,
    cs: Vec<Array2<C64>>,
    etas: Vec<f64>,
}

impl JumpEngine {
    fn new(h: &HamiltonianModel, channels: &[LindbladChannel]) -> Result<Self> {
        let (cs, etas, k_total) = prepare_channels(h.basis(), channels)?;
        let minus_i = C64::new(0.0, -1.0);
        let g = h.matrix().mapv(|v| v * minus_i) - k_total.mapv(|v| v * C64::new(0.5, 0.0));
        Ok(Self { g, cs, etas })
    }

    /// Runs one trajectory from a normalized pure state, consuming `rng`.
    fn run<R: Rng>(
        &self,
        psi0: Array1<C64>,
        horizon: f64,
        cfg: &IntegratorConfig,
        rng: &mut R,
    ) -> Result<(Vec<f64>, Array1<C64>, f64)> {
        let g = self.g.clone();
        let rhs = move |_t: f64, y: &Array1<C64>| g.dot(y);

        let mut t = 0.0;
        let mut y = psi0;
        let mut jump_times = Vec::new();
        let mut u: f64 = rng.random();
        let mut h_step = (1e-2 * horizon).min(cfg.dt_max);

        while t < horizon {
            let h_eff = h_step.min(cfg.dt_max).min(horizon - t);
            let (y_new, err) = dopri5_step(&rhs, t, &y, h_eff, cfg.rel_tol);
            if err > 1.0 {
                h_step = h_eff * (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
                if h_step < 1e-14 * horizon.max(1.0) {
                    return Err(Error::StepSizeUnderflow { t });
                }
                continue;
            }
            if norm_sqr(&y_new) > u {
                t += h_eff;
                y = y_new;
                let grow = if err == 0.0 {
                    5.0
                } else {
                    (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                };
                h_step = h_eff * grow;
                continue;
            }

            // The survival norm crossed u inside (t, t + h_eff]: bisect the
            // emission time on the monotone norm function.
            let mut lo = 0.0_f64;
            let mut hi = h_eff;
            let mut y_emit = y_new.clone();
            for _ in 0..200 {
                if hi - lo <= 1e-10 * (t + hi).max(1.0) {
                    break;
                }
                let mid = 0.5 * (lo + hi);
                let y_mid = integrate(&y, &rhs, mid, cfg)?;
                if norm_sqr(&y_mid) > u {
                    lo = mid;
                } else {
                    hi = mid;
                    y_emit = y_mid;
                }
            }
            let t_emit = t + hi;

            // Emission: pick the channel, then thin by detector efficiency.
            let weights: Vec<f64> = self.cs.iter().map(|c| norm_sqr(&c.dot(&y_emit))).collect();
            let total: f64 = weights.iter().sum();
            if total <= 0.0 {
                return Err(Error::ImpossibleBranch { trace: total });
            }
            let j = if self.cs.len() == 1 {
                0
            } else {
                let mut x: f64 = rng.random::<f64>() * total;
                let mut idx = self.cs.len() - 1;
                for (k, w) in weights.iter().enumerate() {
                    if x < *w {
                        idx = k;
                        break;
                    }
                    x -= w;
                }
                idx
            };
            let jumped = self.cs[j].dot(&y_emit);
            let n = norm_sqr(&jumped).sqrt();
            y = jumped.mapv(|v| v / n);
            if rng.random::<f64>() < self.etas[j] {
                jump_times.push(t_emit);
            }
            t = t_emit;
            u = rng.random();
        }

        let no_jump_norm = norm_sqr(&y);
        if no_jump_norm <= 0.0 {
            return Err(Error::ImpossibleBranch { trace: no_jump_norm });
        }
        let scale = no_jump_norm.sqrt();
        let psi_final = y.mapv(|v| v / scale);
        Ok((jump_times, psi_final, no_jump_norm))
    }
}

/// Draws a pure state from the eigendecomposition of `rho0`: deterministic
/// for (numerically) rank-one inputs, otherwise one weighted draw from `rng`.
fn initial_pure<R: Rng>(rho0: &DensityMatrix, rng: &mut R) -> Array1<C64> {
    let (vals, vecs) = hermitian_eigen(rho0.matrix());
    let n = vals.len();
    if vals[n - 1] >= 1.0 - 1e-9 {
        return vecs.column(n - 1).to_owned();
    }
    let total: f64 = vals.iter().map(|v| v.max(0.0)).sum();
    let mut x: f64 = rng.random::<f64>() * total;
    for k in (0..n).rev() {
        let w = vals[k].max(0.0);
        if x < w {
            return vecs.column(k).to_owned();
        }
        x -= w;
    }
    vecs.column(n - 1).to_owned()
}

/// Samples one photon-counting trajectory with the stream-seeded generator
/// `(seed, stream)`; identical inputs give a bit-identical record.
pub fn sample_trajectory(
    rho0: &DensityMatrix,
    h: &HamiltonianModel,
    channels: &[LindbladChannel],
    horizon: f64,
    cfg: &IntegratorConfig,
    seed: u64,
    stream: u64,
) -> Result<TrajectoryRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    sample_trajectory_with_rng(rho0, h, channels, horizon, cfg, &mut rng, seed, stream)
}

/// As [`sample_trajectory`], but drawing from a caller-owned generator so a
/// protocol can chain several monitored periods on one stream.
#[allow(clippy::too_many_arguments)]
pub fn sample_trajectory_with_rng<R: Rng>(
    rho0: &DensityMatrix,
    h: &HamiltonianModel,
    channels: &[LindbladChannel],
    horizon: f64,
    cfg: &IntegratorConfig,
    rng: &mut R,
    seed: u64,
    stream: u64,
) -> Result<TrajectoryRecord> {
    if horizon <= 0.0 {
        return Err(Error::InvalidParam("horizon must be positive".into()));
    }
    check_same_basis(rho0.basis(), h.basis())?;
    cfg.validate()?;
    let engine = JumpEngine::new(h, channels)?;
    let psi0 = initial_pure(rho0, rng);
    let (jump_times, psi_final, no_jump_norm) = engine.run(psi0, horizon, cfg, rng)?;
    let final_state = density_from_pure(&PureState::new(rho0.basis().clone(), psi_final)?);
    Ok(TrajectoryRecord {
        seed,
        stream,
        dn_total: jump_times.len(),
        jump_times,
        final_state,
        no_jump_norm,
    })
}

/// Runs `n` trajectories on streams `0..n` of `master_seed`, in parallel,
/// returned in stream order.
pub fn sample_ensemble(
    rho0: &DensityMatrix,
    h: &HamiltonianModel,
    channels: &[LindbladChannel],
    horizon: f64,
    cfg: &IntegratorConfig,
    master_seed: u64,
    n: usize,
) -> Result<Vec<TrajectoryRecord>> {
    (0..n)
        .into_par_iter()
        .map(|i| sample_trajectory(rho0, h, channels, horizon, cfg, master_seed, i as u64))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{assemble_full, build_detuned_h11, CqdParams, DetuningParams, Frame};
    use ndarray::array;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn two_level(rabi: f64, delta: f64) -> HamiltonianModel {
        let basis = BasisRegistry::new(["g", "e"]).unwrap();
        let m = array![
            [c(0.0, 0.0), c(0.5 * rabi, 0.0)],
            [c(0.5 * rabi, 0.0), c(delta, 0.0)]
        ];
        HamiltonianModel::new(Operator::new(basis, m).unwrap(), Frame::RotatingAtLaser).unwrap()
    }

    fn decay_channel(basis: &BasisRegistry, gamma: f64, eta: f64) -> LindbladChannel {
        let op =
            Operator::from_entries(basis.clone(), &[("g", "e", c(1.0, 0.0))]).unwrap();
        LindbladChannel::new(op, gamma, eta).unwrap()
    }

    /// Dense matrix exponential by scaling-and-squaring with a Taylor core;
    /// independent of the integrator path it checks.
    fn expm(a: &Array2<C64>) -> Array2<C64> {
        let n = a.nrows();
        let norm: f64 = a.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let s = if norm > 0.25 {
            (norm / 0.25).log2().ceil() as u32
        } else {
            0
        };
        let scaled = a.mapv(|v| v / C64::new(2f64.powi(s as i32), 0.0));
        let mut result: Array2<C64> = Array2::eye(n);
        let mut term: Array2<C64> = Array2::eye(n);
        for k in 1..=24 {
            term = term.dot(&scaled).mapv(|v| v / C64::new(k as f64, 0.0));
            result = result + &term;
        }
        for _ in 0..s {
            result = result.dot(&result);
        }
        result
    }

    #[test]
    fn resonant_pi_pulse_transfers_population() {
        let rabi = 0.1;
        let h = two_level(rabi, 0.0);
        let psi = PureState::basis_state(h.basis().clone(), "g").unwrap();
        let t = std::f64::consts::PI / rabi;
        let out = evolve_unitary(&psi, &h, t, &IntegratorConfig::default()).unwrap();
        assert!(out.population("e").unwrap() > 1.0 - 1e-9);
        assert!((out.norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn diagonal_hamiltonian_only_rotates_phases() {
        let basis = BasisRegistry::new(["g", "e"]).unwrap();
        let m = array![[c(0.3, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(-0.7, 0.0)]];
        let h = HamiltonianModel::new(Operator::new(basis.clone(), m).unwrap(), Frame::RotatingAtLaser)
            .unwrap();
        let amps = array![c(0.6, 0.0), c(0.0, 0.8)];
        let psi = PureState::new(basis, amps).unwrap();
        let t = 7.3;
        let out = evolve_unitary(&psi, &h, t, &IntegratorConfig::default()).unwrap();
        let expect_g = c(0.6, 0.0) * (c(0.0, -0.3 * t)).exp();
        let expect_e = c(0.0, 0.8) * (c(0.0, 0.7 * t)).exp();
        assert!((out.amplitude("g").unwrap() - expect_g).norm() < 1e-9);
        assert!((out.amplitude("e").unwrap() - expect_e).norm() < 1e-9);
    }

    #[test]
    fn unitary_matches_matrix_exponential_oracle() {
        let p = CqdParams::canonical();
        let d = DetuningParams::midpoint(2000.4, 1999.8, p.gamma_x_mev);
        let h = build_detuned_h11(&p, &d).unwrap();
        let t = 3.7;
        let u = expm(&h.matrix().mapv(|v| v * c(0.0, -t)));
        let psi0 = PureState::basis_state(h.basis().clone(), "11").unwrap();
        let got = evolve_unitary(&psi0, &h, t, &IntegratorConfig::default()).unwrap();
        let want = u.dot(psi0.amplitudes());
        for (a, b) in got.amplitudes().iter().zip(want.iter()) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn lindblad_without_channels_is_unitary() {
        let h = two_level(0.1, 0.05);
        let psi = PureState::basis_state(h.basis().clone(), "g").unwrap();
        let rho = density_from_pure(&psi);
        let t = 40.0;
        let me = evolve_lindblad(&rho, &h, &[], t, &IntegratorConfig::default()).unwrap();
        let uni = evolve_unitary(&psi, &h, t, &IntegratorConfig::default()).unwrap();
        let target = density_from_pure(&uni);
        for (a, b) in me.matrix().iter().zip(target.matrix().iter()) {
            assert!((a - b).norm() < 1e-8);
        }
    }

    #[test]
    fn excited_state_decays_exponentially() {
        let basis = BasisRegistry::new(["g", "e"]).unwrap();
        let h = HamiltonianModel::new(
            Operator::new(basis.clone(), Array2::zeros((2, 2))).unwrap(),
            Frame::RotatingAtLaser,
        )
        .unwrap();
        let gamma = 0.004;
        let ch = decay_channel(&basis, gamma, 1.0);
        let rho = density_from_pure(&PureState::basis_state(basis, "e").unwrap());
        let t = 500.0;
        let out = evolve_lindblad(&rho, &h, &[ch], t, &IntegratorConfig::default()).unwrap();
        assert!((out.population("e").unwrap() - (-gamma * t).exp()).abs() < 1e-9);
        assert!((out.trace() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn cme_at_zero_efficiency_equals_lindblad() {
        let basis = BasisRegistry::new(["g", "e"]).unwrap();
        let h = two_level(0.02, 0.0);
        let ch = decay_channel(&basis, 0.004, 0.0);
        let rho = density_from_pure(&PureState::basis_state(basis, "e").unwrap());
        let t = 300.0;
        let cfg = IntegratorConfig::default();
        let lind = evolve_lindblad(&rho, &h, std::slice::from_ref(&ch), t, &cfg).unwrap();
        let cme = evolve_cme_unnormalized(&rho, &h, &[ch], t, &cfg).unwrap();
        assert!((cme.trace() - 1.0).abs() < 1e-9);
        for (a, b) in cme.matrix().iter().zip(lind.matrix().iter()) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn cme_trace_is_exponential_survival_for_perfect_detector() {
        // Independent scalar oracle for dy/dt = −Γ y.
        let gamma = 0.004;
        let t_total = 700.0;
        let mut y = 1.0_f64;
        let n = 70_000;
        let dt = t_total / n as f64;
        for _ in 0..n {
            let k1 = -gamma * y;
            let k2 = -gamma * (y + 0.5 * dt * k1);
            let k3 = -gamma * (y + 0.5 * dt * k2);
            let k4 = -gamma * (y + dt * k3);
            y += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }

        let basis = BasisRegistry::odd_block();
        let h = HamiltonianModel::new(
            Operator::new(basis.clone(), Array2::zeros((4, 4))).unwrap(),
            Frame::RotatingAtLaser,
        )
        .unwrap();
        let ch = LindbladChannel::collective_radiative(basis.clone(), gamma, 1.0).unwrap();
        let rho = density_from_pure(&PureState::basis_state(basis, "0X").unwrap());
        let tr = no_photon_probability(&rho, &h, &[ch], t_total, &IntegratorConfig::default())
            .unwrap();
        assert!((tr - y).abs() < 1e-9);
        assert!((tr - (-gamma * t_total).exp()).abs() < 1e-9);
    }

    fn uniform_post_pulse() -> (DensityMatrix, HamiltonianModel, CqdParams) {
        let p = CqdParams::canonical();
        let h = assemble_full(&p, false).unwrap();
        let basis = h.basis().clone();
        let mut amps = Array1::zeros(basis.dim());
        for l in ["00", "0X", "X0", "11"] {
            amps[basis.index_of(l).unwrap()] = c(0.5, 0.0);
        }
        let rho = density_from_pure(&PureState::new(basis, amps).unwrap());
        (rho, h, p)
    }

    #[test]
    fn even_weight_of_conditioned_state_follows_closed_form() {
        let (rho, h, p) = uniform_post_pulse();
        let eta = 0.4;
        let gamma = p.gamma_x_mev;
        let ch =
            LindbladChannel::collective_radiative(h.basis().clone(), gamma, eta).unwrap();
        let cfg = IntegratorConfig::default();
        for t in [100.0, 500.0, 1500.0] {
            let rho_t = evolve_cme_unnormalized(&rho, &h, std::slice::from_ref(&ch), t, &cfg)
                .unwrap();
            let even = rho_t.population("00").unwrap() + rho_t.population("11").unwrap();
            let p_even = even / rho_t.trace();
            let expect = 0.5 / (1.0 + eta * 0.5 * ((-gamma * t).exp() - 1.0));
            assert!((p_even - expect).abs() < 1e-8, "t={t}: {p_even} vs {expect}");
            let expect_tr = 1.0 + eta * 0.5 * ((-gamma * t).exp() - 1.0);
            assert!((rho_t.trace() - expect_tr).abs() < 1e-8);
        }
    }

    #[test]
    fn no_photon_probability_limits() {
        let (rho, h, p) = uniform_post_pulse();
        let cfg = IntegratorConfig::default();
        let ch = LindbladChannel::collective_radiative(h.basis().clone(), p.gamma_x_mev, 0.5)
            .unwrap();
        assert!(
            (no_photon_probability(&rho, &h, std::slice::from_ref(&ch), 0.0, &cfg).unwrap() - 1.0)
                .abs()
                < 1e-12
        );
        let t_long = 20.0 / p.gamma_x_mev;
        let p_nc = no_photon_probability(&rho, &h, &[ch], t_long, &cfg).unwrap();
        assert!((p_nc - 0.75).abs() < 1e-7);
    }

    #[test]
    fn trajectory_from_dark_state_never_jumps() {
        let (_, h, p) = uniform_post_pulse();
        let basis = h.basis().clone();
        let rho = density_from_pure(&PureState::basis_state(basis.clone(), "00").unwrap());
        let ch = LindbladChannel::collective_radiative(basis, p.gamma_x_mev, 1.0).unwrap();
        let rec = sample_trajectory(&rho, &h, &[ch], 2500.0, &IntegratorConfig::default(), 7, 0)
            .unwrap();
        assert_eq!(rec.dn_total, 0);
        assert!((rec.no_jump_norm - 1.0).abs() < 1e-9);
        assert!((rec.final_state.population("00").unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn zero_efficiency_records_no_detections() {
        let (rho, h, p) = uniform_post_pulse();
        let ch = LindbladChannel::collective_radiative(h.basis().clone(), p.gamma_x_mev, 0.0)
            .unwrap();
        for stream in 0..20 {
            let rec = sample_trajectory(
                &rho,
                &h,
                std::slice::from_ref(&ch),
                2500.0,
                &IntegratorConfig::default(),
                11,
                stream,
            )
            .unwrap();
            assert_eq!(rec.dn_total, 0);
            assert!(rec.jump_times.is_empty());
        }
    }

    #[test]
    fn identical_seed_and_stream_reproduce_bit_identical_records() {
        let (rho, h, p) = uniform_post_pulse();
        let ch = LindbladChannel::collective_radiative(h.basis().clone(), p.gamma_x_mev, 0.5)
            .unwrap();
        let cfg = IntegratorConfig::default();
        let a = sample_trajectory(&rho, &h, std::slice::from_ref(&ch), 2500.0, &cfg, 42, 3)
            .unwrap();
        let b = sample_trajectory(&rho, &h, std::slice::from_ref(&ch), 2500.0, &cfg, 42, 3)
            .unwrap();
        assert_eq!(a.jump_times.len(), b.jump_times.len());
        for (x, y) in a.jump_times.iter().zip(b.jump_times.iter()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        assert_eq!(a.no_jump_norm.to_bits(), b.no_jump_norm.to_bits());
        for (x, y) in a
            .final_state
            .matrix()
            .iter()
            .zip(b.final_state.matrix().iter())
        {
            assert_eq!(x.re.to_bits(), y.re.to_bits());
            assert_eq!(x.im.to_bits(), y.im.to_bits());
        }
    }

    #[test]
    fn emission_times_are_exponential() {
        // Kolmogorov–Smirnov check of the waiting-time law from a bright state.
        let basis = BasisRegistry::odd_block();
        let h = HamiltonianModel::new(
            Operator::new(basis.clone(), Array2::zeros((4, 4))).unwrap(),
            Frame::RotatingAtLaser,
        )
        .unwrap();
        let gamma = 0.004;
        let ch = LindbladChannel::collective_radiative(basis.clone(), gamma, 1.0).unwrap();
        let rho = density_from_pure(&PureState::basis_state(basis, "0X").unwrap());
        let n = 4000;
        let recs = sample_ensemble(
            &rho,
            &h,
            &[ch],
            20.0 / gamma,
            &IntegratorConfig::default(),
            2024,
            n,
        )
        .unwrap();
        let mut times: Vec<f64> = recs
            .iter()
            .filter_map(|r| r.jump_times.first().copied())
            .collect();
        assert!(times.len() > n - 5, "essentially every trajectory emits");
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let m = times.len() as f64;
        let mut d: f64 = 0.0;
        for (i, t) in times.iter().enumerate() {
            let cdf = 1.0 - (-gamma * t).exp();
            d = d.max((cdf - i as f64 / m).abs());
            d = d.max(((i + 1) as f64 / m - cdf).abs());
        }
        // 1% critical value of the KS statistic.
        assert!(d < 1.63 / m.sqrt(), "KS statistic {d}");
        let mean: f64 = times.iter().sum::<f64>() / m;
        assert!((mean - 1.0 / gamma).abs() < 4.0 * (1.0 / gamma) / m.sqrt());
    }

    #[test]
    fn detection_fraction_matches_closed_form() {
        let (rho, h, p) = uniform_post_pulse();
        let eta = 0.5;
        let ch = LindbladChannel::collective_radiative(h.basis().clone(), p.gamma_x_mev, eta)
            .unwrap();
        let horizon = 10.0 / p.gamma_x_mev;
        let n = 2000;
        let recs =
            sample_ensemble(&rho, &h, &[ch], horizon, &IntegratorConfig::default(), 5, n).unwrap();
        let detected = recs.iter().filter(|r| r.dn_total > 0).count() as f64;
        let p_click = eta * 0.5 * (1.0 - (-p.gamma_x_mev * horizon).exp());
        let sigma = (p_click * (1.0 - p_click) / n as f64).sqrt();
        assert!((detected / n as f64 - p_click).abs() < 3.0 * sigma);
    }

    #[test]
    fn ensemble_mean_matches_unconditional_master_equation() {
        let (rho, h, p) = uniform_post_pulse();
        let eta = 0.5;
        let ch = LindbladChannel::collective_radiative(h.basis().clone(), p.gamma_x_mev, eta)
            .unwrap();
        let horizon = 4.0 / p.gamma_x_mev;
        let cfg = IntegratorConfig::default();
        let n = 1500;
        let recs =
            sample_ensemble(&rho, &h, std::slice::from_ref(&ch), horizon, &cfg, 17, n).unwrap();
        let dim = rho.basis().dim();
        let mut mean: Array2<C64> = Array2::zeros((dim, dim));
        for r in &recs {
            mean = mean + r.final_state.matrix();
        }
        mean = mean.mapv(|v| v / C64::new(n as f64, 0.0));
        let me = evolve_lindblad(&rho, &h, &[ch], horizon, &cfg).unwrap();
        // Monte Carlo error of a bounded per-trajectory observable.
        let tol = 4.0 / (n as f64).sqrt() + 1e-9;
        for (a, b) in mean.iter().zip(me.matrix().iter()) {
            assert!((a - b).norm() < tol, "{a} vs {b}");
        }
    }

    #[test]
    fn superop_matrices_match_direct_application() {
        let basis = BasisRegistry::odd_block();
        let ch = LindbladChannel::collective_radiative(basis.clone(), 0.004, 0.3).unwrap();
        let jump = JumpSuperop::from_channel(&ch);
        let damp = DampSuperop::from_channel(&ch);
        let mut amps = Array1::zeros(4);
        amps[1] = c(0.8, 0.0);
        amps[3] = c(0.0, 0.6);
        let rho = density_from_pure(&PureState::new(basis, amps).unwrap());
        let jm = jump.to_matrix();
        let dm = damp.to_matrix();
        // vec(ρ) in column-stacking order.
        let n = 4;
        let mut vec_rho = Array1::zeros(n * n);
        for j in 0..n {
            for i in 0..n {
                vec_rho[j * n + i] = rho.matrix()[[i, j]];
            }
        }
        let jv = jm.dot(&vec_rho);
        let dv = dm.dot(&vec_rho);
        let japp = jump.apply_matrix(rho.matrix());
        let dapp = damp.apply_matrix(rho.matrix());
        for j in 0..n {
            for i in 0..n {
                assert!((jv[j * n + i] - japp[[i, j]]).norm() < 1e-13);
                assert!((dv[j * n + i] - dapp[[i, j]]).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn rk4_fixed_agrees_with_adaptive() {
        let h = two_level(0.1, 0.02);
        let psi = PureState::basis_state(h.basis().clone(), "g").unwrap();
        let cfg4 = IntegratorConfig {
            dt_max: 0.05,
            rel_tol: 1e-9,
            method: IntegratorMethod::Rk4Fixed,
        };
        let t = 25.0;
        let a = evolve_unitary(&psi, &h, t, &cfg4).unwrap();
        let b = evolve_unitary(&psi, &h, t, &IntegratorConfig::default()).unwrap();
        for (x, y) in a.amplitudes().iter().zip(b.amplitudes().iter()) {
            assert!((x - y).norm() < 1e-8);
        }
    }
}
