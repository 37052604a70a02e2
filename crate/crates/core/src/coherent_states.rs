//! Spin coherent states on the Bloch sphere.
//!
//! A coherent state is stored as a normalized spinor `(u, v)` of the
//! fundamental representation; the spin-j state is its `2j`-fold symmetric
//! power, with amplitude `sqrt(C(2j, j+m)) u^(j-m) v^(j+m)` on `|j, m>`.
//! Keeping the projective pair rather than a stereographic coordinate keeps
//! the north pole `u = 0` regular.
//!
//! The stereographic coordinate is `tau = conj(v / u)`. With this orientation
//! the Q-symbols of the generators take the familiar form
//!
//! ```text
//! Q[J_x] = j (tau + tau*) / (1 + |tau|^2)
//! Q[J_y] = j (tau - tau*) / (i (1 + |tau|^2))
//! Q[J_z] = j (|tau|^2 - 1) / (1 + |tau|^2)
//! ```
//!
//! for the standard generators `J_y = (J_+ - J_-) / 2i`.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lie_algebra::{Spin, SpinRep};
use crate::state_analysis::PureState;

/// Generators of the spin-1/2 representation in the `(|-1/2>, |+1/2>)` basis.
fn fundamental_generators() -> [Matrix2<Complex64>; 3] {
    let z = Complex64::new(0.0, 0.0);
    let h = Complex64::new(0.5, 0.0);
    let ih = Complex64::new(0.0, 0.5);
    [
        Matrix2::new(z, h, h, z),
        Matrix2::new(z, ih, -ih, z),
        Matrix2::new(-h, z, z, h),
    ]
}

/// A point on the Bloch sphere, labelling a spin coherent state.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CoherentParam {
    u: Complex64,
    v: Complex64,
}

impl CoherentParam {
    /// Normalizes `(u, v)`; rejects the zero pair.
    pub fn new(u: Complex64, v: Complex64) -> Result<Self> {
        let n = (u.norm_sqr() + v.norm_sqr()).sqrt();
        if !n.is_finite() || n == 0.0 {
            return Err(invalid("coherent param", "pair must be finite and nonzero"));
        }
        Ok(CoherentParam { u: u / n, v: v / n })
    }

    /// The lowest weight state `|j, -j>`, `tau = 0`.
    pub fn lowest_weight() -> Self {
        CoherentParam {
            u: Complex64::new(1.0, 0.0),
            v: Complex64::new(0.0, 0.0),
        }
    }

    /// The highest weight state `|j, +j>`, `tau = infinity`.
    pub fn highest_weight() -> Self {
        CoherentParam {
            u: Complex64::new(0.0, 0.0),
            v: Complex64::new(1.0, 0.0),
        }
    }

    pub fn from_stereographic(tau: Complex64) -> Result<Self> {
        if !tau.re.is_finite() || !tau.im.is_finite() {
            return Err(invalid("tau", "must be finite; use highest_weight() for infinity"));
        }
        CoherentParam::new(Complex64::new(1.0, 0.0), tau.conj())
    }

    /// Coherent state whose mean spin points along `(sin t cos p, sin t sin p, cos t)`.
    pub fn from_angles(theta: f64, phi: f64) -> Self {
        CoherentParam {
            u: Complex64::new((theta / 2.0).sin(), 0.0),
            v: Complex64::from_polar((theta / 2.0).cos(), -phi),
        }
    }

    pub fn u(&self) -> Complex64 {
        self.u
    }

    pub fn v(&self) -> Complex64 {
        self.v
    }

    /// `None` at the north pole.
    pub fn stereographic(&self) -> Option<Complex64> {
        if self.u.norm() < 1e-300 {
            None
        } else {
            Some((self.v / self.u).conj())
        }
    }

    /// Unit Bloch vector `n`, with `<J> = j n`.
    pub fn direction(&self) -> [f64; 3] {
        let uv = self.u.conj() * self.v;
        [2.0 * uv.re, -2.0 * uv.im, self.v.norm_sqr() - self.u.norm_sqr()]
    }

    /// Projective comparison: equal up to a global phase.
    pub fn approx_eq(&self, other: &CoherentParam, tol: f64) -> bool {
        (1.0 - (self.u.conj() * other.u + self.v.conj() * other.v).norm()).abs() <= tol
    }

    fn spinor(&self) -> Vector2<Complex64> {
        Vector2::new(self.u, self.v)
    }
}

/// `ln C(n, k)` via a running sum, exact enough for `n` up to a few thousand.
fn ln_binomial(n: u32, k: u32) -> f64 {
    let k = k.min(n - k);
    (0..k).map(|i| (f64::from(n - i) / f64::from(i + 1)).ln()).sum()
}

/// Amplitudes of the coherent state in the `J_z` basis, `m = -j..j`.
///
/// Computed in log-magnitude/phase form so that large `j` does not
/// underflow intermediate powers.
pub fn amplitudes(rep: &SpinRep, p: &CoherentParam) -> PureState {
    let twice = rep.spin().twice();
    let (ru, pu) = (p.u.norm(), p.u.arg());
    let (rv, pv) = (p.v.norm(), p.v.arg());
    let data: Vec<Complex64> = (0..=twice)
        .map(|k| {
            // k = j + m factors of v, 2j - k factors of u
            let nu = twice - k;
            if (nu > 0 && ru == 0.0) || (k > 0 && rv == 0.0) {
                return Complex64::new(0.0, 0.0);
            }
            let mut log_mag = 0.5 * ln_binomial(twice, k);
            if nu > 0 {
                log_mag += f64::from(nu) * ru.ln();
            }
            if k > 0 {
                log_mag += f64::from(k) * rv.ln();
            }
            Complex64::from_polar(log_mag.exp(), f64::from(nu) * pu + f64::from(k) * pv)
        })
        .collect();
    PureState::from_normalized_unchecked(DVector::from_vec(data))
}

/// `<p1|p2> = (u1* u2 + v1* v2)^(2j)`.
pub fn overlap(p1: &CoherentParam, p2: &CoherentParam, spin: Spin) -> Complex64 {
    let base = p1.u.conj() * p2.u + p1.v.conj() * p2.v;
    base.powu(spin.twice())
}

/// `(<J_x>, <J_y>, <J_z>)` in the coherent state, from the Q-symbols.
pub fn q_expectations(p: &CoherentParam, spin: Spin) -> [f64; 3] {
    let j = spin.value();
    let n = p.direction();
    [j * n[0], j * n[1], j * n[2]]
}

/// Logarithm of a complex scale factor, kept as magnitude and phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogFactor {
    pub log_magnitude: f64,
    /// Phase in `(-pi, pi]`.
    pub phase: f64,
}

impl LogFactor {
    pub fn value(&self) -> Complex64 {
        Complex64::from_polar(self.log_magnitude.exp(), self.phase)
    }
}

/// `exp(A)` for a traceless 2x2 `A` with `A^2 = k^2 I`:
/// `cosh(k) I + sinh(k)/k A`.
fn exp_traceless_2x2(a: &Matrix2<Complex64>) -> Matrix2<Complex64> {
    let k2 = (a * a)[(0, 0)];
    let k = k2.sqrt();
    let (ch, shc) = if k.norm() < 1e-4 {
        // even series in k
        (
            1.0 + k2 / 2.0 + k2 * k2 / 24.0 + k2 * k2 * k2 / 720.0,
            1.0 + k2 / 6.0 + k2 * k2 / 120.0 + k2 * k2 * k2 / 5040.0,
        )
    } else {
        (k.cosh(), k.sinh() / k)
    };
    Matrix2::identity() * ch + a * shc
}

/// Action of the (generally non-unitary) group element `exp(sum_i c_i J_i)` on
/// a coherent state.
///
/// Returns `(p', lambda)` with `exp(sum c_i J_i) |p> = e^lambda |p'>`. The
/// element acts on the spinor through the fundamental representation and the
/// spin-j state follows as its symmetric power, so the scale is the spinor
/// norm raised to `2j`. The returned spinor is rephased so that its first
/// nonzero component is real and positive.
pub fn nonunitary_group_action(
    p: &CoherentParam,
    c: &[Complex64; 3],
    spin: Spin,
) -> Result<(CoherentParam, LogFactor)> {
    if c.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(invalid("c", "generator coefficients must be finite"));
    }
    let g = fundamental_generators();
    let a = g[0] * c[0] + g[1] * c[1] + g[2] * c[2];
    let m = exp_traceless_2x2(&a);
    let w = m * p.spinor();
    let r = w.norm();
    let twice = f64::from(spin.twice());
    let log_magnitude = twice * r.ln();
    if !r.is_finite() || r == 0.0 || !log_magnitude.is_finite() {
        return Err(Error::Overflow(log_magnitude));
    }
    let w = w / Complex64::new(r, 0.0);
    let lead = if w[0].norm() > 1e-12 { w[0] } else { w[1] };
    let theta = lead.arg();
    let rot = Complex64::from_polar(1.0, -theta);
    let p_new = CoherentParam {
        u: w[0] * rot,
        v: w[1] * rot,
    };
    let phase = wrap_phase(twice * theta);
    Ok((
        p_new,
        LogFactor {
            log_magnitude,
            phase,
        },
    ))
}

fn wrap_phase(x: f64) -> f64 {
    use std::f64::consts::PI;
    let mut y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y -= 2.0 * PI;
    }
    y
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub(crate) fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    use std::f64::consts::PI;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            // P_n(x) and P_n'(x) via the three-term recurrence
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// Max-entry deviation from the identity of the coherent-state resolution
/// `(2j+1)/(4 pi) * integral dOmega |n><n|`, evaluated with `order`
/// Gauss-Legendre nodes in `cos(theta)` times `order` uniform nodes in `phi`.
///
/// The rule is exact once `order >= 2j + 1`.
pub fn resolution_check(spin: Spin, order: usize) -> Result<f64> {
    use std::f64::consts::PI;
    if order == 0 {
        return Err(invalid("quadrature_order", "must be at least 1"));
    }
    if spin.twice() > 16 {
        return Err(invalid("j", "dense resolution check is limited to j <= 8"));
    }
    let rep = SpinRep::new(spin);
    let dim = rep.dim();
    let (nodes, weights) = gauss_legendre(order);
    let mut acc: DMatrix<Complex64> = DMatrix::zeros(dim, dim);
    let pref = (2.0 * spin.value() + 1.0) / (4.0 * PI);
    let dphi = 2.0 * PI / order as f64;
    for (x, w) in nodes.iter().zip(&weights) {
        let theta = x.clamp(-1.0, 1.0).acos();
        for k in 0..order {
            let phi = k as f64 * dphi;
            let psi = amplitudes(&rep, &CoherentParam::from_angles(theta, phi));
            let a = psi.amplitudes();
            acc += a * a.adjoint() * Complex64::new(pref * w * dphi, 0.0);
        }
    }
    let dev = acc - DMatrix::<Complex64>::identity(dim, dim);
    Ok(dev.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// Number of coherent states needed to represent a state of normalized
/// generalized purity `purity`: `(2j+1)(1 - sqrt(P))`.
///
/// Meaningful only for `P >> 1/j`.
pub fn estimate_num_configs(purity: f64, spin: Spin) -> Result<f64> {
    if !(purity > 0.0 && purity <= 1.0) {
        return Err(invalid("purity", format!("must lie in (0, 1], got {purity}")));
    }
    Ok((2.0 * spin.value() + 1.0) * (1.0 - purity.sqrt()))
}

/// Upper bound `M (K + 2)` on the real parameters of an `M`-term coherent
/// state expansion, with `K = 3` for su(2).
pub fn max_parameter_count(configs: f64) -> f64 {
    configs * 5.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spin(j: f64) -> Spin {
        Spin::new(j).unwrap()
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_param(rng: &mut impl Rng) -> CoherentParam {
        CoherentParam::new(
            c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
            c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
        )
        .unwrap()
    }

    fn dense_expectation(rep: &SpinRep, psi: &PureState, i: usize) -> f64 {
        let a = psi.amplitudes();
        (a.adjoint() * rep.generator(i).entries() * a)[(0, 0)].re
    }

    #[test]
    fn poles_are_extreme_weights() {
        for j in [0.5, 3.0, 64.0] {
            let rep = SpinRep::new(spin(j));
            let low = amplitudes(&rep, &CoherentParam::lowest_weight());
            assert_eq!(low.amplitudes()[0], c(1.0, 0.0));
            assert!(low.amplitudes().iter().skip(1).all(|z| z.norm() == 0.0));
            let high = amplitudes(&rep, &CoherentParam::highest_weight());
            assert_eq!(high.amplitudes()[rep.dim() - 1], c(1.0, 0.0));
        }
    }

    #[test]
    fn spin_half_equator_state() {
        let rep = SpinRep::new(spin(0.5));
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let p = CoherentParam::new(c(s, 0.0), c(s, 0.0)).unwrap();
        let psi = amplitudes(&rep, &p);
        assert_abs_diff_eq!(psi.amplitudes()[0].re, s, epsilon = 1e-15);
        assert_abs_diff_eq!(psi.amplitudes()[1].re, s, epsilon = 1e-15);
        assert_abs_diff_eq!(dense_expectation(&rep, &psi, 0), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn amplitudes_are_normalized_for_large_spin() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for j in [0.5, 7.5, 64.0, 256.0] {
            let rep = SpinRep::new(spin(j));
            for _ in 0..5 {
                let psi = amplitudes(&rep, &random_param(&mut rng));
                assert_abs_diff_eq!(psi.amplitudes().norm(), 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn overlap_examples() {
        let s = spin(1.0);
        let p0 = CoherentParam::lowest_weight();
        assert_abs_diff_eq!(overlap(&p0, &p0, s).re, 1.0, epsilon = 1e-15);
        assert_eq!(overlap(&p0, &CoherentParam::highest_weight(), s).norm(), 0.0);
        let p1 = CoherentParam::from_stereographic(c(1.0, 0.0)).unwrap();
        assert_abs_diff_eq!(overlap(&p0, &p1, s).re, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn overlap_matches_amplitude_inner_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for j in [0.5, 1.0, 5.0, 16.0] {
            let rep = SpinRep::new(spin(j));
            for _ in 0..100 {
                let (p1, p2) = (random_param(&mut rng), random_param(&mut rng));
                let a1 = amplitudes(&rep, &p1);
                let a2 = amplitudes(&rep, &p2);
                let ip = a1.amplitudes().dotc(a2.amplitudes());
                let ov = overlap(&p1, &p2, spin(j));
                assert!((ip - ov).norm() < 1e-10, "j={j}");
            }
        }
    }

    #[test]
    fn q_expectation_examples() {
        let s = spin(2.5);
        let at = |tau| q_expectations(&CoherentParam::from_stereographic(tau).unwrap(), s);
        let e0 = at(c(0.0, 0.0));
        assert_eq!(e0, [0.0, 0.0, -2.5]);
        let e1 = at(c(1.0, 0.0));
        assert_abs_diff_eq!(e1[0], 2.5, epsilon = 1e-15);
        assert_abs_diff_eq!(e1[1], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(e1[2], 0.0, epsilon = 1e-15);
        let ei = at(c(0.0, 1.0));
        assert_abs_diff_eq!(ei[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(ei[1], 2.5, epsilon = 1e-15);
        assert_abs_diff_eq!(ei[2], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn q_expectations_follow_stereographic_formulas() {
        let s = spin(3.0);
        let j = 3.0;
        for tau in [c(0.3, -1.2), c(-2.0, 0.5), c(10.0, 7.0)] {
            let e = q_expectations(&CoherentParam::from_stereographic(tau).unwrap(), s);
            let d = 1.0 + tau.norm_sqr();
            assert_abs_diff_eq!(e[0], j * (tau + tau.conj()).re / d, epsilon = 1e-12);
            assert_abs_diff_eq!(e[1], (j * (tau - tau.conj()) / c(0.0, d)).re, epsilon = 1e-12);
            assert_abs_diff_eq!(e[2], j * (tau.norm_sqr() - 1.0) / d, epsilon = 1e-12);
        }
    }

    #[test]
    fn q_expectations_match_dense_and_saturate() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for j in [0.5, 2.0, 9.5] {
            let rep = SpinRep::new(spin(j));
            for _ in 0..50 {
                let p = random_param(&mut rng);
                let e = q_expectations(&p, spin(j));
                let psi = amplitudes(&rep, &p);
                for (i, ei) in e.iter().enumerate() {
                    assert_abs_diff_eq!(*ei, dense_expectation(&rep, &psi, i), epsilon = 1e-10);
                }
                let len2: f64 = e.iter().map(|x| x * x).sum();
                assert_abs_diff_eq!(len2, j * j, epsilon = 1e-10 * j * j);
            }
        }
    }

    #[test]
    fn from_angles_points_along_direction() {
        let p = CoherentParam::from_angles(1.1, -0.4);
        let n = p.direction();
        assert_abs_diff_eq!(n[0], 1.1f64.sin() * (-0.4f64).cos(), epsilon = 1e-15);
        assert_abs_diff_eq!(n[1], 1.1f64.sin() * (-0.4f64).sin(), epsilon = 1e-15);
        assert_abs_diff_eq!(n[2], 1.1f64.cos(), epsilon = 1e-15);
    }

    #[test]
    fn group_action_identity() {
        let p = CoherentParam::from_stereographic(c(0.4, -0.9)).unwrap();
        let (q, lf) = nonunitary_group_action(&p, &[c(0.0, 0.0); 3], spin(4.0)).unwrap();
        assert!(q.approx_eq(&p, 1e-14));
        assert_abs_diff_eq!(lf.log_magnitude, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn group_action_on_lowest_weight_along_z() {
        let s = 0.37;
        let (q, lf) = nonunitary_group_action(
            &CoherentParam::lowest_weight(),
            &[c(0.0, 0.0), c(0.0, 0.0), c(s, 0.0)],
            spin(6.0),
        )
        .unwrap();
        assert!(q.approx_eq(&CoherentParam::lowest_weight(), 1e-15));
        assert_abs_diff_eq!(lf.log_magnitude, -6.0 * s, epsilon = 1e-14);
        assert_abs_diff_eq!(lf.phase, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn group_action_large_spin_keeps_log_form() {
        let (_, lf) = nonunitary_group_action(
            &CoherentParam::highest_weight(),
            &[c(0.0, 0.0), c(0.0, 0.0), c(3.0, 0.0)],
            spin(400.0),
        )
        .unwrap();
        assert_abs_diff_eq!(lf.log_magnitude, 1200.0, epsilon = 1e-9);
        assert!(lf.value().re.is_infinite());
    }

    #[test]
    fn group_action_overflow_is_an_error() {
        let err = nonunitary_group_action(
            &CoherentParam::highest_weight(),
            &[c(0.0, 0.0), c(0.0, 0.0), c(2000.0, 0.0)],
            spin(1.0),
        );
        assert!(matches!(err, Err(Error::Overflow(_))));
        assert!(nonunitary_group_action(
            &CoherentParam::lowest_weight(),
            &[c(f64::NAN, 0.0), c(0.0, 0.0), c(0.0, 0.0)],
            spin(1.0)
        )
        .is_err());
    }

    #[test]
    fn group_action_matches_dense_exponential() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for j in [0.5, 1.0, 3.5, 8.0, 16.0] {
            let rep = SpinRep::new(spin(j));
            for _ in 0..20 {
                let p = random_param(&mut rng);
                let coeffs: [Complex64; 3] =
                    std::array::from_fn(|_| c(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)));
                let mut a = DMatrix::zeros(rep.dim(), rep.dim());
                for (ci, g) in coeffs.iter().zip(rep.generators()) {
                    a += g.entries() * *ci;
                }
                let dense = a.exp() * amplitudes(&rep, &p).amplitudes();
                let (q, lf) = nonunitary_group_action(&p, &coeffs, spin(j)).unwrap();
                let predicted = amplitudes(&rep, &q).amplitudes() * lf.value();
                let fid = dense.dotc(&predicted).norm_sqr() / (dense.norm_squared() * predicted.norm_squared());
                assert!(fid >= 1.0 - 1e-10, "j={j} fidelity {fid}");
                assert!((&dense - &predicted).norm() <= 1e-8 * dense.norm(), "j={j}");
            }
        }
    }

    #[test]
    fn group_action_composes_along_one_axis() {
        let p = CoherentParam::from_stereographic(c(0.7, 0.2)).unwrap();
        let axis = [c(0.3, 0.1), c(-0.2, 0.0), c(0.5, -0.3)];
        let s = spin(5.0);
        let (a, la) = nonunitary_group_action(&p, &axis.map(|z| z * 0.4), s).unwrap();
        let (b, lb) = nonunitary_group_action(&a, &axis.map(|z| z * 0.6), s).unwrap();
        let (d, ld) = nonunitary_group_action(&p, &axis, s).unwrap();
        assert!(b.approx_eq(&d, 1e-10));
        assert_abs_diff_eq!(la.log_magnitude + lb.log_magnitude, ld.log_magnitude, epsilon = 1e-10);
        assert_abs_diff_eq!(wrap_phase(la.phase + lb.phase - ld.phase), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(5);
        let total: f64 = w.iter().sum();
        assert_abs_diff_eq!(total, 2.0, epsilon = 1e-14);
        let x8: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(8)).sum();
        assert_abs_diff_eq!(x8, 2.0 / 9.0, epsilon = 1e-14);
    }

    #[test]
    fn resolution_of_identity() {
        assert!(resolution_check(spin(0.5), 4).unwrap() <= 1e-6);
        assert!(resolution_check(spin(1.0), 4).unwrap() <= 1e-6);
        assert!(resolution_check(spin(8.0), 17).unwrap() <= 1e-6);
        assert!(resolution_check(spin(0.5), 1).unwrap() >= 0.5);
        assert!(resolution_check(spin(3.0), 3).unwrap() > 1e-3);
        assert!(resolution_check(spin(9.0), 20).is_err());
    }

    #[test]
    fn config_count_estimates() {
        let s = spin(64.0);
        assert_eq!(estimate_num_configs(1.0, s).unwrap(), 0.0);
        let many = estimate_num_configs(0.06, s).unwrap();
        assert!((97.0..98.0).contains(&many), "{many}");
        let few = estimate_num_configs(0.92, s).unwrap();
        assert!((5.0..5.5).contains(&few), "{few}");
        assert!(estimate_num_configs(0.0, s).is_err());
        assert!(estimate_num_configs(1.5, s).is_err());
        assert!(estimate_num_configs(f64::NAN, s).is_err());
        assert!(max_parameter_count(few) / few < 5.0 + 1e-12);
    }
}
