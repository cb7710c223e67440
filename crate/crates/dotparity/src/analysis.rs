//! State-space averages of the even-projection fidelity over all real
//! computational input states, parameterized by hyperspherical angles on the
//! amplitude 3-sphere.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::parity::{fidelity_even_repeated, StateAmplitudes};

/// Angles (φ₁, φ₂ ∈ [0,π], φ₃ ∈ [0,2π]) of a point on the amplitude 3-sphere.
#[derive(Debug, Clone, Copy)]
pub struct HypersphericalCoords {
    pub phi1: f64,
    pub phi2: f64,
    pub phi3: f64,
}

impl HypersphericalCoords {
    pub fn new(phi1: f64, phi2: f64, phi3: f64) -> Result<Self> {
        if !(0.0..=std::f64::consts::PI).contains(&phi1)
            || !(0.0..=std::f64::consts::PI).contains(&phi2)
            || !(0.0..=2.0 * std::f64::consts::PI).contains(&phi3)
        {
            return Err(Error::InvalidParam("hyperspherical angle out of range".into()));
        }
        Ok(Self { phi1, phi2, phi3 })
    }
}

/// Real amplitudes α₀₀ = sin φ₁ sin φ₂ cos φ₃, α₀₁ = cos φ₁,
/// α₁₀ = sin φ₁ cos φ₂, α₁₁ = sin φ₁ sin φ₂ sin φ₃; normalized by the trig
/// identity.
pub fn amplitudes_from_hypersphere(c: &HypersphericalCoords) -> StateAmplitudes {
    let (s1, c1) = c.phi1.sin_cos();
    let (s2, c2) = c.phi2.sin_cos();
    let (s3, c3) = c.phi3.sin_cos();
    StateAmplitudes::from_reals(s1 * s2 * c3, c1, s1 * c2, s1 * s2 * s3)
        .expect("hyperspherical parameterization is normalized")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadratureRule {
    GaussLegendre,
    Trapezoid,
}

/// Quadrature settings for the 3-sphere average.
#[derive(Debug, Clone, Copy)]
pub struct QuadratureConfig {
    pub rule: QuadratureRule,
    pub points_per_axis: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            rule: QuadratureRule::GaussLegendre,
            points_per_axis: 64,
        }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.points_per_axis < 8 {
            return Err(Error::InvalidParam(
                "quadrature needs at least 8 points per axis".into(),
            ));
        }
        Ok(())
    }
}

/// Gauss–Legendre nodes and weights on [-1, 1], by Newton iteration on the
/// Legendre recurrence.
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Chebyshev-based initial guess.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Evaluate P_n and P_n' at x via the three-term recurrence.
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Nodes/weights for ∫ over [a, b].
fn axis_rule(rule: QuadratureRule, n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    match rule {
        QuadratureRule::GaussLegendre => {
            let (x, w) = gauss_legendre(n);
            let mid = 0.5 * (a + b);
            let half = 0.5 * (b - a);
            (
                x.iter().map(|&t| mid + half * t).collect(),
                w.iter().map(|&t| half * t).collect(),
            )
        }
        QuadratureRule::Trapezoid => {
            let h = (b - a) / (n - 1) as f64;
            let nodes: Vec<f64> = (0..n).map(|i| a + h * i as f64).collect();
            let mut weights = vec![h; n];
            weights[0] = 0.5 * h;
            weights[n - 1] = 0.5 * h;
            (nodes, weights)
        }
    }
}

fn average_once(eta: f64, r: usize, rule: QuadratureRule, n: usize) -> f64 {
    let pi = std::f64::consts::PI;
    let (x1, w1) = axis_rule(rule, n, 0.0, pi);
    let (x2, w2) = axis_rule(rule, n, 0.0, pi);
    let (x3, w3) = axis_rule(rule, n, 0.0, 2.0 * pi);
    let trig = |xs: &[f64]| -> Vec<(f64, f64)> { xs.iter().map(|&x| x.sin_cos()).collect() };
    let (t1, t2, t3) = (trig(&x1), trig(&x2), trig(&x3));

    // The area element is sin²φ₁ sin φ₂ dφ₁ dφ₂ dφ₃; numerator and the
    // normalizing denominator share it.
    let partials: Vec<(f64, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let (s1, c1) = t1[i];
            let wa = w1[i] * s1 * s1;
            let mut num = 0.0;
            let mut den = 0.0;
            for j in 0..n {
                let (s2, c2) = t2[j];
                let wb = wa * w2[j] * s2;
                for k in 0..n {
                    let (s3, c3) = t3[k];
                    let a = StateAmplitudes::from_reals(s1 * s2 * c3, c1, s1 * c2, s1 * s2 * s3)
                        .expect("hyperspherical chart is normalized");
                    let f = fidelity_even_repeated(&a, eta, r);
                    num += wb * w3[k] * f;
                    den += wb * w3[k];
                }
            }
            (num, den)
        })
        .collect();
    let (num, den) = partials
        .iter()
        .fold((0.0, 0.0), |acc, p| (acc.0 + p.0, acc.1 + p.1));
    num / den
}

/// The even-projection fidelity after `r` rounds averaged over all real
/// input states, `∫ F_E^r dA / ∫ dA`.
///
/// Evaluated at the configured resolution and at double resolution; errors
/// if the refinement shifts the value by more than 1e−6.
pub fn average_even_fidelity(eta: f64, r: usize, q: &QuadratureConfig) -> Result<f64> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::InvalidParam("efficiency must lie in [0, 1]".into()));
    }
    if r == 0 {
        return Err(Error::InvalidParam("repetitions must be at least 1".into()));
    }
    q.validate()?;
    let coarse = average_once(eta, r, q.rule, q.points_per_axis);
    let fine = average_once(eta, r, q.rule, 2 * q.points_per_axis);
    let delta = (fine - coarse).abs();
    if delta > 1e-6 {
        return Err(Error::QuadratureDiverged { delta });
    }
    Ok(fine)
}

/// One row of the efficiency sweep.
#[derive(Debug, Clone, Copy)]
pub struct SweepRow {
    pub eta: f64,
    pub r: usize,
    pub avg_fidelity: f64,
}

/// Tabulates the averaged fidelity over an (η, r) grid, row-major in r then η.
pub fn sweep_efficiency(
    r_list: &[usize],
    eta_grid: &[f64],
    q: &QuadratureConfig,
) -> Result<Vec<SweepRow>> {
    if r_list.is_empty() || eta_grid.is_empty() {
        return Err(Error::InvalidParam("sweep grids must be nonempty".into()));
    }
    let mut rows = Vec::with_capacity(r_list.len() * eta_grid.len());
    for &r in r_list {
        for &eta in eta_grid {
            rows.push(SweepRow {
                eta,
                r,
                avg_fidelity: average_even_fidelity(eta, r, q)?,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn coordinate_chart_corners() {
        let a = amplitudes_from_hypersphere(
            &HypersphericalCoords::new(0.0, 0.3, 1.0).unwrap(),
        );
        assert!((a.a01.re - 1.0).abs() < 1e-15);
        assert!(a.a00.norm() < 1e-15 && a.a10.norm() < 1e-15 && a.a11.norm() < 1e-15);

        let half_pi = std::f64::consts::FRAC_PI_2;
        let b = amplitudes_from_hypersphere(
            &HypersphericalCoords::new(half_pi, half_pi, 0.0).unwrap(),
        );
        assert!((b.a00.re - 1.0).abs() < 1e-15);
        assert!(b.a01.norm() < 1e-15 && b.a10.norm() < 1e-15 && b.a11.norm() < 1e-12);
    }

    #[test]
    fn coordinate_chart_is_normalized() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let c = HypersphericalCoords::new(
                rng.random::<f64>() * std::f64::consts::PI,
                rng.random::<f64>() * std::f64::consts::PI,
                rng.random::<f64>() * 2.0 * std::f64::consts::PI,
            )
            .unwrap();
            let a = amplitudes_from_hypersphere(&c);
            assert!((a.norm_sqr() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn gauss_legendre_matches_reference_tables() {
        let (x, w) = gauss_legendre(5);
        let x_ref = [
            -0.9061798459386640,
            -0.5384693101056831,
            0.0,
            0.5384693101056831,
            0.9061798459386640,
        ];
        let w_ref = [
            0.2369268850561891,
            0.4786286704993665,
            0.5688888888888889,
            0.4786286704993665,
            0.2369268850561891,
        ];
        for i in 0..5 {
            assert!((x[i] - x_ref[i]).abs() < 1e-14);
            assert!((w[i] - w_ref[i]).abs() < 1e-14);
        }
        // Exact for polynomials of degree ≤ 2n−1.
        let (x, w) = gauss_legendre(8);
        let integral: f64 = x.iter().zip(&w).map(|(&t, &wt)| wt * t.powi(14)).sum();
        assert!((integral - 2.0 / 15.0).abs() < 1e-14);
    }

    #[test]
    fn blind_detector_average_is_one_half() {
        // Analytic oracle: ⟨α₀₀²+α₁₁²⟩ = (∫sin⁴/∫sin²)(∫sin³/∫sin) = (3/4)(2/3).
        let q = QuadratureConfig::default();
        for r in [1, 3] {
            let f = average_even_fidelity(0.0, r, &q).unwrap();
            assert!((f - 0.5).abs() < 1e-9, "r={r}: {f}");
        }
    }

    #[test]
    fn perfect_detector_average_is_one() {
        let q = QuadratureConfig::default();
        let f = average_even_fidelity(1.0, 1, &q).unwrap();
        assert!((f - 1.0).abs() < 1e-9);
    }

    #[test]
    fn average_grows_with_repetitions() {
        let q = QuadratureConfig::default();
        let mut last = 0.0;
        for r in [1, 2, 3, 5, 10] {
            let f = average_even_fidelity(0.5, r, &q).unwrap();
            assert!(f > last, "r={r}: {f} ≤ {last}");
            last = f;
        }
        assert!(last > 0.99, "r=10 approaches unit fidelity: {last}");
    }

    #[test]
    fn refinement_is_converged() {
        let q = QuadratureConfig::default();
        let coarse = average_once(0.5, 1, QuadratureRule::GaussLegendre, 64);
        let fine = average_once(0.5, 1, QuadratureRule::GaussLegendre, 128);
        assert!((coarse - fine).abs() < 1e-6);
        let _ = average_even_fidelity(0.5, 1, &q).unwrap();
    }

    #[test]
    fn trapezoid_rule_agrees_with_gauss() {
        // Trapezoid converges only quadratically here, so compare single
        // resolutions instead of going through the refinement gate.
        let a = average_once(0.4, 2, QuadratureRule::Trapezoid, 128);
        let b = average_once(0.4, 2, QuadratureRule::GaussLegendre, 32);
        assert!((a - b).abs() < 1e-3, "{a} vs {b}");
    }

    #[test]
    fn weighted_monte_carlo_cross_check() {
        // Uniform box sampling with the area-element density as weights.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 100_000;
        let (eta, r) = (0.5, 1);
        let mut samples = Vec::with_capacity(n);
        for _ in 0..n {
            let phi1 = rng.random::<f64>() * std::f64::consts::PI;
            let phi2 = rng.random::<f64>() * std::f64::consts::PI;
            let phi3 = rng.random::<f64>() * 2.0 * std::f64::consts::PI;
            let w = phi1.sin().powi(2) * phi2.sin();
            let a = amplitudes_from_hypersphere(&HypersphericalCoords { phi1, phi2, phi3 });
            samples.push((w, fidelity_even_repeated(&a, eta, r)));
        }
        let wsum: f64 = samples.iter().map(|(w, _)| w).sum();
        let mc: f64 = samples.iter().map(|(w, f)| w * f).sum::<f64>() / wsum;
        // Delta-method error of the ratio estimator: Var(w(f−μ)) / (n·w̄²).
        let mean_w = wsum / n as f64;
        let var: f64 = samples
            .iter()
            .map(|(w, f)| (w * (f - mc)).powi(2))
            .sum::<f64>()
            / n as f64;
        let sigma = (var / n as f64).sqrt() / mean_w;
        let quad = average_even_fidelity(eta, r, &QuadratureConfig::default()).unwrap();
        assert!((mc - quad).abs() < 3.0 * sigma, "{mc} vs {quad} (σ = {sigma})");
    }

    #[test]
    fn sweep_covers_grid() {
        let q = QuadratureConfig {
            points_per_axis: 16,
            ..Default::default()
        };
        let rows = sweep_efficiency(&[1, 2], &[0.0, 0.5, 1.0], &q).unwrap();
        assert_eq!(rows.len(), 6);
        for row in &rows {
            assert!((0.5 - 1e-6..=1.0 + 1e-9).contains(&row.avg_fidelity));
        }
        let single = sweep_efficiency(&[2], &[0.5], &q).unwrap();
        assert!((single[0].avg_fidelity - average_even_fidelity(0.5, 2, &q).unwrap()).abs() < 1e-12);
    }
}
