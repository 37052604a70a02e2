//! Spin-j irreducible representation of su(2) and Lie-algebraic Hamiltonians.
//!
//! Basis ordering is fixed as `m = -j, ..., +j` ascending, so the lowest
//! weight state `|j, -j>` is the first basis vector.
//!
//! Every operator built here is a polynomial of degree at most two in the
//! generators and therefore has bandwidth at most two in this basis.
//! [`OperatorMatrix`] records the bandwidth so that products with dense
//! matrices and vectors cost `O(dim^2)` and `O(dim)` respectively.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// A positive half-integer spin, stored as `2j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Spin(u32);

impl Spin {
    pub fn from_twice(twice: u32) -> Result<Self> {
        if twice == 0 {
            return Err(Error::InvalidSpin(0.0));
        }
        Ok(Spin(twice))
    }

    pub fn new(j: f64) -> Result<Self> {
        let twice = 2.0 * j;
        if !j.is_finite() || j <= 0.0 || (twice - twice.round()).abs() > 1e-9 || twice > 1e6 {
            return Err(Error::InvalidSpin(j));
        }
        Ok(Spin(twice.round() as u32))
    }

    pub fn twice(self) -> u32 {
        self.0
    }

    pub fn value(self) -> f64 {
        f64::from(self.0) / 2.0
    }

    pub fn dim(self) -> usize {
        self.0 as usize + 1
    }

    /// `j(j+1)`, the Casimir eigenvalue on the irrep.
    pub fn casimir(self) -> f64 {
        let j = self.value();
        j * (j + 1.0)
    }
}

impl TryFrom<f64> for Spin {
    type Error = Error;
    fn try_from(j: f64) -> Result<Self> {
        Spin::new(j)
    }
}

impl From<Spin> for f64 {
    fn from(s: Spin) -> f64 {
        s.value()
    }
}

impl fmt::Display for Spin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_multiple_of(2) {
            write!(f, "{}", self.0 / 2)
        } else {
            write!(f, "{}/2", self.0)
        }
    }
}

/// Dense complex operator with a known bandwidth.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    entries: DMatrix<Complex64>,
    bandwidth: usize,
}

impl OperatorMatrix {
    pub fn new(entries: DMatrix<Complex64>) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(Error::DimensionMismatch {
                expected: entries.nrows(),
                found: entries.ncols(),
            });
        }
        if entries.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(invalid("entries", "non-finite matrix entry"));
        }
        let n = entries.nrows();
        let mut bandwidth = 0;
        for c in 0..n {
            for r in 0..n {
                if entries[(r, c)] != ZERO {
                    bandwidth = bandwidth.max(r.abs_diff(c));
                }
            }
        }
        Ok(OperatorMatrix { entries, bandwidth })
    }

    pub fn zeros(dim: usize) -> Self {
        OperatorMatrix {
            entries: DMatrix::zeros(dim, dim),
            bandwidth: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    pub fn entries(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    pub fn into_entries(self) -> DMatrix<Complex64> {
        self.entries
    }

    /// Largest entry of `A - A^dagger` in modulus.
    pub fn hermiticity_error(&self) -> f64 {
        let a = &self.entries;
        let mut worst: f64 = 0.0;
        for c in 0..a.ncols() {
            for r in 0..=c {
                worst = worst.max((a[(r, c)] - a[(c, r)].conj()).norm());
            }
        }
        worst
    }

    pub fn apply(&self, v: &DVector<Complex64>) -> DVector<Complex64> {
        let n = self.dim();
        let b = self.bandwidth;
        DVector::from_fn(n, |r, _| {
            let lo = r.saturating_sub(b);
            let hi = (r + b).min(n - 1);
            (lo..=hi).map(|k| self.entries[(r, k)] * v[k]).sum()
        })
    }

    /// `out = self * m`, exploiting the band.
    pub fn left_mul_into(&self, m: &DMatrix<Complex64>, out: &mut DMatrix<Complex64>) {
        let n = self.dim();
        let b = self.bandwidth;
        let a = self.entries.as_slice();
        let src = m.as_slice();
        let dst = out.as_mut_slice();
        for c in 0..n {
            let col = &src[c * n..(c + 1) * n];
            let out_col = &mut dst[c * n..(c + 1) * n];
            for (r, o) in out_col.iter_mut().enumerate() {
                let lo = r.saturating_sub(b);
                let hi = (r + b).min(n - 1);
                let mut acc = ZERO;
                for k in lo..=hi {
                    acc += a[k * n + r] * col[k];
                }
                *o = acc;
            }
        }
    }

    /// `out = m * self`, exploiting the band.
    pub fn right_mul_into(&self, m: &DMatrix<Complex64>, out: &mut DMatrix<Complex64>) {
        let n = self.dim();
        let b = self.bandwidth;
        let a = self.entries.as_slice();
        let src = m.as_slice();
        let dst = out.as_mut_slice();
        for c in 0..n {
            let out_col = &mut dst[c * n..(c + 1) * n];
            out_col.fill(ZERO);
            let lo = c.saturating_sub(b);
            let hi = (c + b).min(n - 1);
            for k in lo..=hi {
                let w = a[c * n + k];
                if w == ZERO {
                    continue;
                }
                let col = &src[k * n..(k + 1) * n];
                for (o, x) in out_col.iter_mut().zip(col) {
                    *o += x * w;
                }
            }
        }
    }

    pub fn commutes_with(&self, other: &OperatorMatrix, tol: f64) -> bool {
        let ab = &self.entries * &other.entries;
        let ba = &other.entries * &self.entries;
        (ab - ba).iter().all(|z| z.norm() <= tol)
    }
}

/// Coefficients of `H = sum_i a_i J_i + sum_ij b_ij J_i J_j`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianSpec {
    pub linear: [f64; 3],
    pub quadratic: [[f64; 3]; 3],
}

impl HamiltonianSpec {
    pub fn zero() -> Self {
        HamiltonianSpec {
            linear: [0.0; 3],
            quadratic: [[0.0; 3]; 3],
        }
    }

    pub fn linear(a: [f64; 3]) -> Self {
        HamiltonianSpec {
            linear: a,
            quadratic: [[0.0; 3]; 3],
        }
    }

    /// Two-mode Bose-Hubbard dimer, `H = -omega J_x + U J_z^2`.
    pub fn bose_hubbard(omega: f64, interaction: f64) -> Self {
        let mut spec = HamiltonianSpec::linear([-omega, 0.0, 0.0]);
        spec.quadratic[2][2] = interaction;
        spec
    }

    pub fn is_linear(&self) -> bool {
        self.quadratic.iter().flatten().all(|&b| b == 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self
            .linear
            .iter()
            .chain(self.quadratic.iter().flatten())
            .any(|x| !x.is_finite())
        {
            return Err(invalid("hamiltonian", "non-finite coefficient"));
        }
        for i in 0..3 {
            for k in 0..i {
                if self.quadratic[i][k] != self.quadratic[k][i] {
                    return Err(invalid("quadratic", "matrix must be symmetric"));
                }
            }
        }
        Ok(())
    }
}

/// The spin-j irreducible representation of su(2).
///
/// Besides dense generator matrices, the diagonal of `J_z` and the ladder
/// elements `<m+1|J_+|m>` are kept for `O(dim)` generator actions.
#[derive(Debug, Clone)]
pub struct SpinRep {
    spin: Spin,
    generators: [OperatorMatrix; 3],
    m_values: Vec<f64>,
    ladder: Vec<f64>,
}

/// Builds the spin-j irrep in the `J_z` eigenbasis, `m` ascending.
pub fn build_spin_rep(j: f64) -> Result<SpinRep> {
    Ok(SpinRep::new(Spin::new(j)?))
}

impl SpinRep {
    pub fn new(spin: Spin) -> Self {
        let j = spin.value();
        let dim = spin.dim();
        let m_values: Vec<f64> = (0..dim).map(|k| k as f64 - j).collect();
        let ladder: Vec<f64> = m_values[..dim - 1]
            .iter()
            .map(|&m| (j * (j + 1.0) - m * (m + 1.0)).sqrt())
            .collect();

        let mut jx = DMatrix::zeros(dim, dim);
        let mut jy = DMatrix::zeros(dim, dim);
        let mut jz = DMatrix::zeros(dim, dim);
        for k in 0..dim {
            jz[(k, k)] = Complex64::new(m_values[k], 0.0);
        }
        for (k, &l) in ladder.iter().enumerate() {
            // J_+ |k> = l |k+1>
            jx[(k + 1, k)] = Complex64::new(0.5 * l, 0.0);
            jx[(k, k + 1)] = Complex64::new(0.5 * l, 0.0);
            jy[(k + 1, k)] = Complex64::new(0.0, -0.5 * l);
            jy[(k, k + 1)] = Complex64::new(0.0, 0.5 * l);
        }
        let generators = [jx, jy, jz].map(|m| OperatorMatrix::new(m).expect("finite generator"));
        SpinRep {
            spin,
            generators,
            m_values,
            ladder,
        }
    }

    pub fn spin(&self) -> Spin {
        self.spin
    }

    pub fn j(&self) -> f64 {
        self.spin.value()
    }

    pub fn dim(&self) -> usize {
        self.spin.dim()
    }

    pub fn generators(&self) -> &[OperatorMatrix; 3] {
        &self.generators
    }

    pub fn generator(&self, i: usize) -> &OperatorMatrix {
        &self.generators[i]
    }

    pub fn m_values(&self) -> &[f64] {
        &self.m_values
    }

    /// `<m+1|J_+|m>` for `m = -j, ..., j-1`.
    pub fn ladder(&self) -> &[f64] {
        &self.ladder
    }

    pub fn casimir_value(&self) -> f64 {
        self.spin.casimir()
    }

    /// Casimir of su(2) in the adjoint representation.
    pub fn adjoint_casimir(&self) -> f64 {
        2.0
    }

    pub fn casimir_matrix(&self) -> DMatrix<Complex64> {
        self.generators
            .iter()
            .map(|g| g.entries() * g.entries())
            .fold(DMatrix::zeros(self.dim(), self.dim()), |acc, m| acc + m)
    }

    pub fn check_dim(&self, found: usize) -> Result<()> {
        if found != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found,
            });
        }
        Ok(())
    }

    /// `sum_i c_i J_i v` in `O(dim)`.
    pub fn apply_combination(&self, c: &[Complex64; 3], v: &[Complex64], out: &mut [Complex64]) {
        let n = self.dim();
        // sum_i c_i J_i = c_z J_z + (c_x - i c_y)/2 J_+ + (c_x + i c_y)/2 J_-
        let i = Complex64::i();
        let up = 0.5 * (c[0] - i * c[1]);
        let down = 0.5 * (c[0] + i * c[1]);
        let (m, l) = (&self.m_values[..n], &self.ladder[..n - 1]);
        let (v, out) = (&v[..n], &mut out[..n]);
        for r in 0..n {
            out[r] = c[2] * (m[r] * v[r]);
        }
        for r in 1..n {
            out[r] += up * (l[r - 1] * v[r - 1]);
            out[r - 1] += down * (l[r - 1] * v[r]);
        }
    }

    /// Action of `exp(sum_i c_i J_i)` on `v` by a scaled truncated Taylor
    /// series. Each of the `s` sub-steps has `||A/s|| <= 1/2`.
    pub fn exp_action(&self, c: &[Complex64; 3], v: &DVector<Complex64>) -> DVector<Complex64> {
        let n = self.dim();
        let bound = self.j() * c.iter().map(|z| z.norm()).sum::<f64>();
        let steps = ((bound / 0.5).ceil() as usize).max(1);
        let scaled = c.map(|z| z / steps as f64);
        let mut result = v.clone();
        let mut term = vec![ZERO; n];
        let mut next = vec![ZERO; n];
        for _ in 0..steps {
            term.copy_from_slice(result.as_slice());
            let scale_sqr = result.iter().map(|z| z.norm_sqr()).fold(0.0, f64::max);
            for k in 1..=60 {
                self.apply_combination(&scaled, &term, &mut next);
                let inv = 1.0 / k as f64;
                let mut largest_sqr: f64 = 0.0;
                for (t, x) in term.iter_mut().zip(&next) {
                    *t = x * inv;
                    largest_sqr = largest_sqr.max(t.norm_sqr());
                }
                for (r, t) in result.iter_mut().zip(&term) {
                    *r += t;
                }
                if largest_sqr <= 1e-36 * scale_sqr {
                    break;
                }
            }
        }
        result
    }

    /// `(<J_x>, <J_y>, <J_z>)` for a (not necessarily normalized) vector,
    /// divided by `<v|v>`.
    pub fn expectations(&self, v: &[Complex64]) -> [f64; 3] {
        let n = self.dim();
        let mut norm2 = 0.0;
        let mut jz = 0.0;
        let mut jplus = ZERO;
        for r in 0..n {
            norm2 += v[r].norm_sqr();
            jz += self.m_values[r] * v[r].norm_sqr();
            if r + 1 < n {
                // <v|J_+|v> = sum_r conj(v_{r+1}) l_r v_r
                jplus += v[r + 1].conj() * v[r] * self.ladder[r];
            }
        }
        // <J_+> = <J_x> + i <J_y>
        [jplus.re / norm2, jplus.im / norm2, jz / norm2]
    }

    /// `(<J_x^2>, <J_y^2>, <J_z^2>)` divided by `<v|v>`.
    pub fn second_moments(&self, v: &[Complex64]) -> [f64; 3] {
        let mut buf = vec![ZERO; self.dim()];
        let norm2: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        let mut out = [0.0; 3];
        for (i, o) in out.iter_mut().enumerate() {
            let mut c = [ZERO; 3];
            c[i] = Complex64::new(1.0, 0.0);
            self.apply_combination(&c, v, &mut buf);
            *o = buf.iter().map(|z| z.norm_sqr()).sum::<f64>() / norm2;
        }
        out
    }
}

/// Levi-Civita tensor: the su(2) structure constants in `[J_i, J_j] = i eps_ijk J_k`.
pub fn structure_constants() -> [[[f64; 3]; 3]; 3] {
    let mut eps = [[[0.0; 3]; 3]; 3];
    for (i, j, k) in [(0, 1, 2), (1, 2, 0), (2, 0, 1)] {
        eps[i][j][k] = 1.0;
        eps[j][i][k] = -1.0;
    }
    eps
}

/// `H = sum_i a_i J_i + 1/2 sum_ij b_ij (J_i J_j + J_j J_i)`.
pub fn build_hamiltonian(rep: &SpinRep, spec: &HamiltonianSpec) -> Result<OperatorMatrix> {
    spec.validate()?;
    let dim = rep.dim();
    let mut h: DMatrix<Complex64> = DMatrix::zeros(dim, dim);
    for (a, g) in spec.linear.iter().zip(rep.generators()) {
        if *a != 0.0 {
            h += g.entries() * Complex64::new(*a, 0.0);
        }
    }
    let mut product = DMatrix::zeros(dim, dim);
    for i in 0..3 {
        for k in 0..3 {
            let b = spec.quadratic[i][k];
            if b == 0.0 {
                continue;
            }
            // symmetrized: b_ik/2 (J_i J_k + J_k J_i) summed over both orders
            rep.generator(k).right_mul_into(rep.generator(i).entries(), &mut product);
            h += &product * Complex64::new(0.5 * b, 0.0);
            rep.generator(i).right_mul_into(rep.generator(k).entries(), &mut product);
            h += &product * Complex64::new(0.5 * b, 0.0);
        }
    }
    OperatorMatrix::new(h)
}

pub(crate) fn max_abs(m: &DMatrix<Complex64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}
