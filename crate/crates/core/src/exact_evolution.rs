//! Exact propagation of the weak-measurement Lindblad equation
//! `d rho/dt = -i[H, rho] - gamma sum_i [J_i, [J_i, rho]]` and the closed-form
//! expectation dynamics for linear Hamiltonians.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lie_algebra::{build_hamiltonian, max_abs, HamiltonianSpec, OperatorMatrix, SpinRep};
use crate::state_analysis::PureState;

/// Largest Hilbert-space dimension accepted by [`propagate_master`].
pub const MAX_MASTER_DIM: usize = 512;

pub const TRACE_TOLERANCE: f64 = 1e-10;
pub const HERMITICITY_TOLERANCE: f64 = 1e-10;
pub const POSITIVITY_TOLERANCE: f64 = 1e-8;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Hermitian, unit-trace, positive semidefinite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    entries: DMatrix<Complex64>,
}

impl DensityMatrix {
    /// Validates Hermiticity, trace and positivity within the module tolerances.
    pub fn new(entries: DMatrix<Complex64>) -> Result<Self> {
        if !entries.is_square() {
            return Err(Error::DimensionMismatch {
                expected: entries.nrows(),
                found: entries.ncols(),
            });
        }
        let rho = DensityMatrix { entries };
        rho.check_invariants(0.0)?;
        Ok(rho)
    }

    pub fn from_pure(state: &PureState) -> Self {
        let v = state.amplitudes();
        DensityMatrix {
            entries: v * v.adjoint(),
        }
    }

    /// `sum_k w_k |psi_k><psi_k|` with weights normalized to sum to one.
    pub fn mixture(states: &[PureState], weights: &[f64]) -> Result<Self> {
        if states.is_empty() || states.len() != weights.len() {
            return Err(invalid("weights", "need one weight per state"));
        }
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|w| !(*w >= 0.0)) || !(total > 0.0) {
            return Err(invalid("weights", "must be non-negative with positive sum"));
        }
        let dim = states[0].dim();
        let mut entries = DMatrix::zeros(dim, dim);
        for (s, w) in states.iter().zip(weights) {
            if s.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: s.dim(),
                });
            }
            let v = s.amplitudes();
            entries += v * v.adjoint() * Complex64::new(w / total, 0.0);
        }
        DensityMatrix::new(entries)
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    pub fn trace(&self) -> Complex64 {
        self.entries.trace()
    }

    /// `tr(rho^2)`
    pub fn purity(&self) -> f64 {
        // tr(rho^2) = sum |rho_rc|^2 for Hermitian rho
        self.entries.iter().map(|z| z.norm_sqr()).sum()
    }

    /// `tr(rho J_i)` for each generator.
    pub fn expectations(&self, rep: &SpinRep) -> Result<[f64; 3]> {
        rep.check_dim(self.dim())?;
        let rho = &self.entries;
        let ladder = rep.ladder();
        let mut jz = 0.0;
        let mut jplus = ZERO;
        for (r, m) in rep.m_values().iter().enumerate() {
            jz += m * rho[(r, r)].re;
            if r + 1 < self.dim() {
                // tr(rho J_+) = sum_r rho_{r, r+1} l_r
                jplus += rho[(r, r + 1)] * ladder[r];
            }
        }
        Ok([jplus.re, jplus.im, jz])
    }

    /// `sum_i tr(rho J_i)^2 / j^2`
    pub fn generalized_purity(&self, rep: &SpinRep) -> Result<f64> {
        let e = self.expectations(rep)?;
        Ok(e.iter().map(|x| x * x).sum::<f64>() / (rep.j() * rep.j()))
    }

    /// `tr(rho A)` for a Hermitian operator.
    pub fn expectation_of(&self, op: &OperatorMatrix) -> Result<f64> {
        if op.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: op.dim(),
            });
        }
        Ok(self.entries.component_mul(&op.entries().transpose()).sum().re)
    }

    pub fn hermiticity_error(&self) -> f64 {
        max_abs(&(&self.entries - self.entries.adjoint()))
    }

    /// True when `rho + tol I` admits a Cholesky factorization with
    /// strictly positive pivots.
    pub fn is_positive_within(&self, tol: f64) -> bool {
        let n = self.dim();
        let a = &self.entries;
        let mut l = DMatrix::<Complex64>::zeros(n, n);
        for k in 0..n {
            let mut d = a[(k, k)].re + tol;
            for p in 0..k {
                d -= l[(k, p)].norm_sqr();
            }
            if !(d > 0.0) {
                return false;
            }
            let d = d.sqrt();
            l[(k, k)] = Complex64::new(d, 0.0);
            for i in k + 1..n {
                let mut x = a[(i, k)];
                for p in 0..k {
                    x -= l[(i, p)] * l[(k, p)].conj();
                }
                l[(i, k)] = x / d;
            }
        }
        true
    }

    fn check_invariants(&self, time: f64) -> Result<()> {
        let trace_err = (self.trace() - Complex64::new(1.0, 0.0)).norm();
        if !(trace_err <= TRACE_TOLERANCE) {
            return Err(Error::InvariantViolation {
                invariant: "unit trace",
                time,
                value: trace_err,
            });
        }
        let herm = self.hermiticity_error();
        if !(herm <= HERMITICITY_TOLERANCE) {
            return Err(Error::InvariantViolation {
                invariant: "hermiticity",
                time,
                value: herm,
            });
        }
        if !self.is_positive_within(POSITIVITY_TOLERANCE) {
            return Err(Error::InvariantViolation {
                invariant: "positivity",
                time,
                value: -POSITIVITY_TOLERANCE,
            });
        }
        Ok(())
    }
}

/// Sampled observables of a master-equation run. Expectations are divided by `j`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub times: Vec<f64>,
    pub jx: Vec<f64>,
    pub jy: Vec<f64>,
    pub jz: Vec<f64>,
    pub purity_generalized: Vec<f64>,
    pub purity_state: Vec<f64>,
    pub trace_error: Vec<f64>,
}

impl TimeSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// `(jx, jy, jz)` at sample `k`.
    pub fn expectations_at(&self, k: usize) -> [f64; 3] {
        [self.jx[k], self.jy[k], self.jz[k]]
    }

    fn push(&mut self, t: f64, rho: &DensityMatrix, rep: &SpinRep) -> Result<()> {
        let e = rho.expectations(rep)?;
        let j = rep.j();
        self.times.push(t);
        self.jx.push(e[0] / j);
        self.jy.push(e[1] / j);
        self.jz.push(e[2] / j);
        self.purity_generalized
            .push(e.iter().map(|x| x * x).sum::<f64>() / (j * j));
        self.purity_state.push(rho.purity());
        self.trace_error
            .push((rho.trace() - Complex64::new(1.0, 0.0)).norm());
        Ok(())
    }
}

/// Right-hand side of the master equation for Hermitian `rho`, using the
/// band structure of `H` and of the generators. Only the upper triangle is
/// computed; the lower one is filled by Hermitian conjugation.
struct LindbladGenerator<'a> {
    bandwidth: usize,
    /// `diagonals[b + k][r] = H[r, r + k]`, zero outside the matrix.
    diagonals: Vec<Vec<Complex64>>,
    m_values: &'a [f64],
    ladder: &'a [f64],
    gamma: f64,
    casimir: f64,
    column: Vec<Complex64>,
}

impl<'a> LindbladGenerator<'a> {
    fn new(h: &'a OperatorMatrix, rep: &'a SpinRep, gamma: f64) -> Self {
        let n = rep.dim();
        let b = h.bandwidth();
        let diagonals = (0..=2 * b)
            .map(|idx| {
                let k = idx as isize - b as isize;
                (0..n)
                    .map(|r| {
                        let c = r as isize + k;
                        if (0..n as isize).contains(&c) {
                            h.entries()[(r, c as usize)]
                        } else {
                            ZERO
                        }
                    })
                    .collect()
            })
            .collect();
        LindbladGenerator {
            bandwidth: b,
            diagonals,
            m_values: rep.m_values(),
            ladder: rep.ladder(),
            gamma,
            casimir: rep.casimir_value(),
            column: vec![ZERO; n],
        }
    }

    /// `out = -i[H, rho] - 2 gamma c_H rho
    ///        + 2 gamma (J_z rho J_z + (J_+ rho J_- + J_- rho J_+)/2)`
    fn apply(&mut self, rho: &DMatrix<Complex64>, out: &mut DMatrix<Complex64>) {
        let n = rho.nrows();
        let b = self.bandwidth as isize;
        let g2 = 2.0 * self.gamma;
        let diag = -g2 * self.casimir;
        let src = rho.as_slice();
        let col = |c: usize| &src[c * n..(c + 1) * n];
        let acc = &mut self.column;
        for c in 0..n {
            let rows = c + 1;
            let acc = &mut acc[..rows];
            let rho_c = col(c);
            acc.fill(ZERO);
            // (H rho)_{rc} = sum_k H[r, r+k] rho[r+k, c]
            for k in -b..=b {
                let d = &self.diagonals[(k + b) as usize];
                let lo = (-k).max(0) as usize;
                let hi = rows.min((n as isize - k) as usize);
                if lo >= hi {
                    continue;
                }
                let shifted = &rho_c[(lo as isize + k) as usize..(hi as isize + k) as usize];
                for ((a, h), x) in acc[lo..hi].iter_mut().zip(&d[lo..hi]).zip(shifted) {
                    *a += h * x;
                }
            }
            // (rho H)_{rc} = sum_k rho[r, c+k] H[c+k, c]
            for k in -b..=b {
                let ck = c as isize + k;
                if !(0..n as isize).contains(&ck) {
                    continue;
                }
                let ck = ck as usize;
                let h = self.diagonals[(b - k) as usize][ck];
                for (a, x) in acc.iter_mut().zip(&col(ck)[..rows]) {
                    *a -= h * x;
                }
            }
            let out_c = &mut out.as_mut_slice()[c * n..c * n + rows];
            let mc = self.m_values[c];
            for (r, ((o, a), x)) in out_c.iter_mut().zip(acc.iter()).zip(&rho_c[..rows]).enumerate() {
                *o = Complex64::new(a.im, -a.re) + x * (diag + g2 * self.m_values[r] * mc);
            }
            // J_+ rho J_- and J_- rho J_+ shift along the diagonal
            if c > 0 {
                let w = self.gamma * self.ladder[c - 1];
                let prev = &col(c - 1)[..rows - 1];
                for ((o, x), l) in out_c[1..].iter_mut().zip(prev).zip(self.ladder) {
                    *o += x * (w * l);
                }
            }
            if c + 1 < n {
                let w = self.gamma * self.ladder[c];
                let next = &col(c + 1)[1..rows + 1];
                for ((o, x), l) in out_c.iter_mut().zip(next).zip(self.ladder) {
                    *o += x * (w * l);
                }
            }
        }
        let dst = out.as_mut_slice();
        for c in 0..n {
            for r in c + 1..n {
                dst[c * n + r] = dst[r * n + c].conj();
            }
        }
    }
}

/// `-i[H, rho] - gamma sum_i [J_i, [J_i, rho]]`
pub fn lindblad_rhs(
    rho: &DensityMatrix,
    h: &OperatorMatrix,
    rep: &SpinRep,
    gamma: f64,
) -> Result<DMatrix<Complex64>> {
    rep.check_dim(rho.dim())?;
    rep.check_dim(h.dim())?;
    if !(gamma >= 0.0) {
        return Err(invalid("gamma", "must be non-negative"));
    }
    let mut out = DMatrix::zeros(rho.dim(), rho.dim());
    LindbladGenerator::new(h, rep, gamma).apply(rho.entries(), &mut out);
    Ok(out)
}

/// Largest Bohr frequency `E_max - E_min` of `H`.
pub fn bohr_bandwidth(h: &OperatorMatrix) -> f64 {
    let e = h.entries().clone().symmetric_eigenvalues();
    e.max() - e.min()
}

/// `min(1e-3, 0.05/omega, 0.05/(gamma j(j+1)))` with `omega` the largest
/// Bohr frequency of the Hamiltonian.
pub fn default_dt(spec: &HamiltonianSpec, rep: &SpinRep, gamma: f64) -> Result<f64> {
    let omega = bohr_bandwidth(&build_hamiltonian(rep, spec)?);
    let mut dt: f64 = 1e-3;
    if omega > 0.0 {
        dt = dt.min(0.05 / omega);
    }
    if gamma > 0.0 {
        dt = dt.min(0.05 / (gamma * rep.casimir_value()));
    }
    Ok(dt)
}

/// Number of fixed steps covering `[0, t_final]`; the step is shrunk so the
/// grid ends exactly at `t_final`.
pub fn step_count(dt: f64, t_final: f64) -> Result<(usize, f64)> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(invalid("dt", "must be positive and finite"));
    }
    if !(t_final >= dt) || !t_final.is_finite() {
        return Err(invalid("t_final", format!("must be finite and at least dt = {dt}")));
    }
    let steps = (t_final / dt - 1e-9).ceil().max(1.0) as usize;
    Ok((steps, t_final / steps as f64))
}

/// Classical RK4 propagation of the master equation, sampling every
/// `sample_stride` steps and at `t_final`. Invariants are checked at every
/// sample. For `gamma = 0` the samples are computed by exact unitary
/// conjugation on the same time grid.
pub fn propagate_master(
    rho0: &DensityMatrix,
    h: &OperatorMatrix,
    rep: &SpinRep,
    gamma: f64,
    dt: f64,
    t_final: f64,
    sample_stride: usize,
) -> Result<TimeSeries> {
    propagate_master_observed(rho0, h, rep, gamma, dt, t_final, sample_stride, |_, _| {})
}

/// [`propagate_master`] that also hands every sampled state to `observer`.
#[allow(clippy::too_many_arguments)]
pub fn propagate_master_observed(
    rho0: &DensityMatrix,
    h: &OperatorMatrix,
    rep: &SpinRep,
    gamma: f64,
    dt: f64,
    t_final: f64,
    sample_stride: usize,
    mut observer: impl FnMut(f64, &DensityMatrix),
) -> Result<TimeSeries> {
    let n = rep.dim();
    if n > MAX_MASTER_DIM {
        return Err(Error::TooLarge {
            dim: n,
            cap: MAX_MASTER_DIM,
        });
    }
    rep.check_dim(rho0.dim())?;
    rep.check_dim(h.dim())?;
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(invalid("gamma", "must be non-negative and finite"));
    }
    if sample_stride == 0 {
        return Err(invalid("sample_stride", "must be at least 1"));
    }
    let (steps, dt) = step_count(dt, t_final)?;
    let sampled = |step: usize| step.is_multiple_of(sample_stride) || step == steps;

    if gamma == 0.0 {
        // closed system: rho(t) = V exp(-iEt) V^dag rho0 V exp(iEt) V^dag
        let eig = h.entries().clone().symmetric_eigen();
        let v = &eig.eigenvectors;
        let rotated = v.adjoint() * rho0.entries() * v;
        let mut series = TimeSeries::default();
        for step in (0..=steps).filter(|&s| s == 0 || sampled(s)) {
            let t = step as f64 * dt;
            let phases: Vec<Complex64> = eig
                .eigenvalues
                .iter()
                .map(|&e| Complex64::from_polar(1.0, -e * t))
                .collect();
            let evolved = DMatrix::from_fn(n, n, |a, b| rotated[(a, b)] * phases[a] * phases[b].conj());
            let rho = DensityMatrix {
                entries: v * evolved * v.adjoint(),
            };
            if step > 0 {
                rho.check_invariants(t)?;
            }
            series.push(t, &rho, rep)?;
            observer(t, &rho);
        }
        return Ok(series);
    }

    let mut generator = LindbladGenerator::new(h, rep, gamma);
    let mut rho = rho0.clone();
    let mut k = DMatrix::zeros(n, n);
    let mut acc = DMatrix::zeros(n, n);
    let mut stage = DMatrix::zeros(n, n);
    let mut series = TimeSeries::default();

    series.push(0.0, &rho, rep)?;
    observer(0.0, &rho);
    for step in 1..=steps {
        let y = &rho.entries;
        generator.apply(y, &mut k);
        acc.copy_from(&k);
        stage.copy_from(y);
        add_scaled(&mut stage, 0.5 * dt, &k);

        generator.apply(&stage, &mut k);
        add_scaled(&mut acc, 2.0, &k);
        stage.copy_from(y);
        add_scaled(&mut stage, 0.5 * dt, &k);

        generator.apply(&stage, &mut k);
        add_scaled(&mut acc, 2.0, &k);
        stage.copy_from(y);
        add_scaled(&mut stage, dt, &k);

        generator.apply(&stage, &mut k);
        acc += &k;
        add_scaled(&mut rho.entries, dt / 6.0, &acc);

        if sampled(step) {
            let t = step as f64 * dt;
            rho.check_invariants(t)?;
            series.push(t, &rho, rep)?;
            observer(t, &rho);
        }
    }
    Ok(series)
}

/// `y += a x`
fn add_scaled(y: &mut DMatrix<Complex64>, a: f64, x: &DMatrix<Complex64>) {
    for (yi, xi) in y.as_mut_slice().iter_mut().zip(x.as_slice()) {
        *yi += xi * a;
    }
}

/// Closed-form `<J(t)>` for `H = a . J`: rotation about `a` by angle `|a| t`,
/// damped by `exp(-2 gamma t)`.
pub fn analytic_linear_solution(a: [f64; 3], gamma: f64, init: [f64; 3], t: f64) -> [f64; 3] {
    let damping = (-2.0 * gamma * t).exp();
    let norm = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
    if norm == 0.0 {
        return init.map(|x| x * damping);
    }
    let k = a.map(|x| x / norm);
    let (s, c) = (norm * t).sin_cos();
    let cross = [
        k[1] * init[2] - k[2] * init[1],
        k[2] * init[0] - k[0] * init[2],
        k[0] * init[1] - k[1] * init[0],
    ];
    let along = k[0] * init[0] + k[1] * init[1] + k[2] * init[2];
    std::array::from_fn(|i| damping * (init[i] * c + cross[i] * s + k[i] * along * (1.0 - c)))
}
