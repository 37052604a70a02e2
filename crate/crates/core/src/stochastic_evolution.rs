//! Stochastic nonlinear Schrödinger trajectories whose noise average obeys
//! the weak-measurement master equation, their ensembles, and the
//! ensemble-versus-master consistency check.
//!
//! One step of size `dt` maps `psi` to
//! `exp(sum_i J_i (4 gamma e_i dt + xi_i)) exp(-i H dt) psi`, renormalized,
//! where `e_i = <J_i>` in the state after the unitary factor and the `xi_i`
//! are independent `N(0, 2 gamma dt)` increments.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::SimConfig;
use crate::error::{invalid, Error, Result};
use crate::exact_evolution::{propagate_master, DensityMatrix, TimeSeries};
use crate::lie_algebra::{build_hamiltonian, OperatorMatrix, SpinRep};
use crate::state_analysis::PureState;

/// Smallest pre-renormalization norm accepted before a trajectory is aborted.
pub const MIN_NORM: f64 = 1e-150;

/// Deviation tolerance used when the ensemble standard error vanishes.
pub const ZERO_SPREAD_TOLERANCE: f64 = 1e-6;

/// Gaussian source for one trajectory: ChaCha8 keyed by
/// `seed_from_u64(master_seed)` and positioned on stream `trajectory_index`,
/// so each `(master_seed, trajectory_index)` pair owns a disjoint,
/// reproducible sequence.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    master_seed: u64,
    trajectory_index: u64,
    rng: ChaCha8Rng,
}

impl NoiseStream {
    pub fn new(master_seed: u64, trajectory_index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(trajectory_index);
        NoiseStream {
            master_seed,
            trajectory_index,
            rng,
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn trajectory_index(&self) -> u64 {
        self.trajectory_index
    }

    pub fn standard_normals(&mut self) -> [f64; 3] {
        std::array::from_fn(|_| self.rng.sample(StandardNormal))
    }
}

/// Three independent `N(0, 2 gamma dt)` samples.
pub fn draw_increments(stream: &mut NoiseStream, dt: f64, gamma: f64) -> [f64; 3] {
    let scale = (2.0 * gamma * dt).sqrt();
    stream.standard_normals().map(|z| z * scale)
}

/// Supplier of the Wiener increments consumed by one trajectory.
pub trait IncrementSource {
    fn increments(&mut self, dt: f64, gamma: f64) -> [f64; 3];
}

impl IncrementSource for NoiseStream {
    fn increments(&mut self, dt: f64, gamma: f64) -> [f64; 3] {
        draw_increments(self, dt, gamma)
    }
}

/// Sums `factor` consecutive increments of step `dt / factor` from the
/// underlying stream. A run at step `dt` driven by this source sees the same
/// Brownian path as a run at step `dt / factor` driven by the stream itself.
#[derive(Debug, Clone)]
pub struct CoarsenedStream {
    fine: NoiseStream,
    factor: usize,
}

impl CoarsenedStream {
    pub fn new(fine: NoiseStream, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(invalid("factor", "must be at least 1"));
        }
        Ok(CoarsenedStream { fine, factor })
    }
}

impl IncrementSource for CoarsenedStream {
    fn increments(&mut self, dt: f64, gamma: f64) -> [f64; 3] {
        let sub = dt / self.factor as f64;
        let mut total = [0.0; 3];
        for _ in 0..self.factor {
            let xi = draw_increments(&mut self.fine, sub, gamma);
            for (t, x) in total.iter_mut().zip(xi) {
                *t += x;
            }
        }
        total
    }
}

/// Scaling of the noise strength relative to the drift, used to build
/// deliberately miscalibrated unravelings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseCalibration {
    /// The increments are drawn with rate `noise_gamma_scale * gamma`.
    pub noise_gamma_scale: f64,
}

impl Default for NoiseCalibration {
    fn default() -> Self {
        NoiseCalibration {
            noise_gamma_scale: 1.0,
        }
    }
}

/// `exp(-i H dt)` by a scaled Taylor series followed by repeated squaring,
/// stored row-wise over the band of entries above [`PROPAGATOR_CUTOFF`].
#[derive(Debug, Clone)]
pub struct UnitaryPropagator {
    matrix: DMatrix<Complex64>,
    /// Row-major real and imaginary parts of `matrix` with entries at or
    /// below [`PROPAGATOR_CUTOFF`] set to zero.
    rows_re: Vec<f64>,
    rows_im: Vec<f64>,
    /// Column range `lo..hi` of each row holding its retained entries.
    row_ranges: Vec<(usize, usize)>,
    dt: f64,
}

/// Magnitude below which entries of the unitary factor are dropped.
pub const PROPAGATOR_CUTOFF: f64 = 1e-18;

impl UnitaryPropagator {
    pub fn new(h: &OperatorMatrix, dt: f64) -> Result<Self> {
        if !dt.is_finite() {
            return Err(invalid("dt", "must be finite"));
        }
        let matrix = unitary_exponential(h.entries(), dt);
        let n = h.dim();
        let kept = |z: &Complex64| z.norm() > PROPAGATOR_CUTOFF;
        let rows = matrix.transpose().map(|z| if kept(&z) { z } else { Complex64::new(0.0, 0.0) });
        let row_ranges = (0..n)
            .map(|r| {
                let row = &rows.as_slice()[r * n..(r + 1) * n];
                let lo = row.iter().position(kept).unwrap_or(0);
                let hi = row.iter().rposition(kept).map_or(lo, |c| c + 1);
                (lo, hi)
            })
            .collect();
        Ok(UnitaryPropagator {
            rows_re: rows.iter().map(|z| z.re).collect(),
            rows_im: rows.iter().map(|z| z.im).collect(),
            row_ranges,
            matrix,
            dt,
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn apply_into(&self, v: &DVector<Complex64>, out: &mut DVector<Complex64>) {
        let n = self.dim();
        let (v_re, v_im): (Vec<f64>, Vec<f64>) = v.iter().map(|z| (z.re, z.im)).unzip();
        for (r, (o, &(lo, hi))) in out.iter_mut().zip(&self.row_ranges).enumerate() {
            let row = r * n + lo..r * n + hi;
            *o = complex_dot(
                &self.rows_re[row.clone()],
                &self.rows_im[row],
                &v_re[lo..hi],
                &v_im[lo..hi],
            );
        }
    }
}

/// `exp(-i H dt)` for Hermitian `H`. The argument is halved until its
/// 1-norm is at most 1/2, expanded to round-off and squared back.
fn unitary_exponential(h: &DMatrix<Complex64>, dt: f64) -> DMatrix<Complex64> {
    let n = h.nrows();
    let a = h * Complex64::new(0.0, -dt);
    let norm1 = (0..n)
        .map(|c| a.column(c).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max);
    let squarings = if norm1 > 0.5 { (norm1 / 0.5).log2().ceil() as i32 } else { 0 };
    let a = a.unscale(f64::powi(2.0, squarings));
    let mut sum = DMatrix::<Complex64>::identity(n, n);
    let mut term = sum.clone();
    for k in 1..=40 {
        term = &term * &a / Complex64::new(k as f64, 0.0);
        sum += &term;
        if term.iter().all(|z| z.norm() <= 1e-20) {
            break;
        }
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// `sum_k a_k v_k` over split real and imaginary parts, in fixed-width
/// lanes so the loop vectorizes.
fn complex_dot(a_re: &[f64], a_im: &[f64], v_re: &[f64], v_im: &[f64]) -> Complex64 {
    const LANES: usize = 8;
    let mut re = [0.0; LANES];
    let mut im = [0.0; LANES];
    let chunks = a_re
        .chunks_exact(LANES)
        .zip(a_im.chunks_exact(LANES))
        .zip(v_re.chunks_exact(LANES).zip(v_im.chunks_exact(LANES)));
    for ((ar, ai), (vr, vi)) in chunks {
        let lanes = |x: &[f64]| -> [f64; LANES] { x.try_into().expect("exact chunk") };
        let (ar, ai, vr, vi) = (lanes(ar), lanes(ai), lanes(vr), lanes(vi));
        for l in 0..LANES {
            re[l] += ar[l] * vr[l] - ai[l] * vi[l];
            im[l] += ar[l] * vi[l] + ai[l] * vr[l];
        }
    }
    let tail = a_re.len() - a_re.len() % LANES;
    let mut sum = Complex64::new(re.iter().sum(), im.iter().sum());
    for k in tail..a_re.len() {
        sum += Complex64::new(a_re[k], a_im[k]) * Complex64::new(v_re[k], v_im[k]);
    }
    sum
}

/// In-place step. With `A = sum_i c_i J_i` applied to the unit vector `phi`,
/// returns `|ln ||exp(A) phi|| - <A> - Var(A)|`, the part of the norm change
/// beyond its second-order cumulant expansion.
#[allow(clippy::too_many_arguments)]
fn step_in_place(
    unitary: &UnitaryPropagator,
    rep: &SpinRep,
    gamma: f64,
    dt: f64,
    xi: [f64; 3],
    psi: &mut DVector<Complex64>,
    scratch: &mut DVector<Complex64>,
    step: usize,
) -> Result<f64> {
    unitary.apply_into(psi, scratch);
    let e = rep.expectations(scratch.as_slice());
    let c: [f64; 3] = std::array::from_fn(|i| 4.0 * gamma * e[i] * dt + xi[i]);
    let next = rep.exp_action(&c.map(|x| Complex64::new(x, 0.0)), scratch);
    let norm = next.norm();
    if !norm.is_finite() || norm < MIN_NORM {
        return Err(Error::NormCollapse { step, norm });
    }
    let mean: f64 = c.iter().zip(e).map(|(ci, ei)| ci * ei).sum();
    rep.apply_combination(&c.map(|x| Complex64::new(x, 0.0)), scratch.as_slice(), psi.as_mut_slice());
    let variance = psi.norm_squared() - mean * mean;
    psi.copy_from(&next);
    psi.unscale_mut(norm);
    Ok((norm.ln() - mean - variance).abs())
}

/// One exponential-splitting step with given increments `xi`.
pub fn snlse_step(
    psi: &PureState,
    unitary: &UnitaryPropagator,
    rep: &SpinRep,
    gamma: f64,
    xi: [f64; 3],
) -> Result<PureState> {
    rep.check_dim(psi.dim())?;
    rep.check_dim(unitary.dim())?;
    let mut v = psi.amplitudes().clone();
    let mut scratch = DVector::zeros(v.len());
    step_in_place(unitary, rep, gamma, unitary.dt(), xi, &mut v, &mut scratch, 0)?;
    Ok(PureState::from_normalized_unchecked(v))
}

/// Sampled observables of one trajectory. Expectations are divided by `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryResult {
    pub trajectory_index: u64,
    pub times: Vec<f64>,
    pub jx: Vec<f64>,
    pub jy: Vec<f64>,
    pub jz: Vec<f64>,
    pub purity_generalized: Vec<f64>,
    /// `| ||psi|| - 1 |` at each sample.
    pub norm_drift: Vec<f64>,
    /// Largest per-step norm change beyond its second-order cumulant expansion.
    pub max_prenorm_drift: f64,
    pub final_state: PureState,
}

impl TrajectoryResult {
    fn with_capacity(index: u64, n: usize, state: PureState) -> Self {
        TrajectoryResult {
            trajectory_index: index,
            times: Vec::with_capacity(n),
            jx: Vec::with_capacity(n),
            jy: Vec::with_capacity(n),
            jz: Vec::with_capacity(n),
            purity_generalized: Vec::with_capacity(n),
            norm_drift: Vec::with_capacity(n),
            max_prenorm_drift: 0.0,
            final_state: state,
        }
    }

    fn record(&mut self, t: f64, psi: &DVector<Complex64>, rep: &SpinRep) {
        let e = rep.expectations(psi.as_slice());
        let j = rep.j();
        self.times.push(t);
        self.jx.push(e[0] / j);
        self.jy.push(e[1] / j);
        self.jz.push(e[2] / j);
        self.purity_generalized
            .push(e.iter().map(|x| x * x).sum::<f64>() / (j * j));
        self.norm_drift.push((psi.norm() - 1.0).abs());
    }

    pub fn observables(&self) -> [&[f64]; 4] {
        [&self.jx, &self.jy, &self.jz, &self.purity_generalized]
    }
}

/// Precomputed propagator and time grid shared by all trajectories of a run.
#[derive(Debug, Clone)]
pub struct TrajectoryEngine {
    rep: SpinRep,
    unitary: UnitaryPropagator,
    gamma: f64,
    dt: f64,
    steps: usize,
    sample_stride: usize,
    calibration: NoiseCalibration,
}

impl TrajectoryEngine {
    pub fn new(config: &SimConfig) -> Result<Self> {
        config.validate()?;
        let rep = config.rep();
        let h = build_hamiltonian(&rep, &config.hamiltonian())?;
        let (steps, dt) = config.time_grid()?;
        Ok(TrajectoryEngine {
            unitary: UnitaryPropagator::new(&h, dt)?,
            rep,
            gamma: config.gamma,
            dt,
            steps,
            sample_stride: config.sample_stride,
            calibration: NoiseCalibration::default(),
        })
    }

    pub fn with_calibration(mut self, calibration: NoiseCalibration) -> Self {
        self.calibration = calibration;
        self
    }

    pub fn rep(&self) -> &SpinRep {
        &self.rep
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn sample_count(&self) -> usize {
        self.steps / self.sample_stride + 1 + usize::from(!self.steps.is_multiple_of(self.sample_stride))
    }

    /// Runs one trajectory driven by `source`.
    pub fn run_with(
        &self,
        psi0: &PureState,
        index: u64,
        source: &mut impl IncrementSource,
    ) -> Result<TrajectoryResult> {
        self.rep.check_dim(psi0.dim())?;
        let noise_gamma = self.gamma * self.calibration.noise_gamma_scale;
        let mut psi = psi0.amplitudes().clone();
        let mut scratch = DVector::zeros(psi.len());
        let mut out = TrajectoryResult::with_capacity(index, self.sample_count(), psi0.clone());
        out.record(0.0, &psi, &self.rep);
        for step in 1..=self.steps {
            let xi = source.increments(self.dt, noise_gamma);
            let drift = step_in_place(
                &self.unitary,
                &self.rep,
                self.gamma,
                self.dt,
                xi,
                &mut psi,
                &mut scratch,
                step,
            )
            .map_err(|e| Error::TrajectoryAborted {
                index,
                source: Box::new(e),
            })?;
            out.max_prenorm_drift = out.max_prenorm_drift.max(drift);
            if step % self.sample_stride == 0 || step == self.steps {
                out.record(step as f64 * self.dt, &psi, &self.rep);
            }
        }
        out.final_state = PureState::from_normalized_unchecked(psi);
        Ok(out)
    }

    /// Runs trajectory `index` with its own [`NoiseStream`].
    pub fn run(&self, psi0: &PureState, master_seed: u64, index: u64) -> Result<TrajectoryResult> {
        self.run_with(psi0, index, &mut NoiseStream::new(master_seed, index))
    }

    /// Runs trajectories `0..n_traj` in parallel and reduces them in index order.
    pub fn run_ensemble(&self, psi0: &PureState, master_seed: u64, n_traj: usize) -> Result<EnsembleResult> {
        self.run_ensemble_with(psi0, master_seed, n_traj, |_| Ok(()))
    }

    /// [`run_ensemble`](Self::run_ensemble) that also hands every trajectory,
    /// in index order, to `visit`.
    pub fn run_ensemble_with(
        &self,
        psi0: &PureState,
        master_seed: u64,
        n_traj: usize,
        mut visit: impl FnMut(&TrajectoryResult) -> Result<()>,
    ) -> Result<EnsembleResult> {
        if n_traj == 0 {
            return Err(invalid("n_traj", "must be at least 1"));
        }
        let mut acc: Option<EnsembleAccumulator> = None;
        let chunk = 256usize;
        for start in (0..n_traj).step_by(chunk) {
            let end = (start + chunk).min(n_traj);
            let results: Vec<Result<TrajectoryResult>> = (start..end)
                .into_par_iter()
                .map(|k| self.run(psi0, master_seed, k as u64))
                .collect();
            for r in results {
                let r = r?;
                visit(&r)?;
                acc.get_or_insert_with(|| EnsembleAccumulator::new(&r.times)).add(&r);
            }
        }
        Ok(acc.expect("n_traj >= 1").finish())
    }
}

/// Runs trajectory `index` of `config` from the configured initial state.
pub fn run_trajectory(psi0: &PureState, config: &SimConfig, index: u64) -> Result<TrajectoryResult> {
    TrajectoryEngine::new(config)?.run(psi0, config.seed, index)
}

/// Means and standard errors over trajectories. Expectations are divided by `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleResult {
    pub times: Vec<f64>,
    pub jx: Vec<f64>,
    pub jy: Vec<f64>,
    pub jz: Vec<f64>,
    pub purity_generalized: Vec<f64>,
    /// Standard errors `s / sqrt(n)`; `None` when `n_traj = 1`.
    pub jx_se: Option<Vec<f64>>,
    pub jy_se: Option<Vec<f64>>,
    pub jz_se: Option<Vec<f64>>,
    pub purity_generalized_se: Option<Vec<f64>>,
    pub n_traj: usize,
}

impl EnsembleResult {
    pub fn means(&self) -> [&[f64]; 3] {
        [&self.jx, &self.jy, &self.jz]
    }

    pub fn standard_errors(&self) -> Option<[&[f64]; 3]> {
        Some([
            self.jx_se.as_deref()?,
            self.jy_se.as_deref()?,
            self.jz_se.as_deref()?,
        ])
    }
}

/// Welford accumulation of the four observables at every sample.
struct EnsembleAccumulator {
    times: Vec<f64>,
    n: usize,
    mean: [Vec<f64>; 4],
    m2: [Vec<f64>; 4],
}

impl EnsembleAccumulator {
    fn new(times: &[f64]) -> Self {
        let zeros = || vec![0.0; times.len()];
        EnsembleAccumulator {
            times: times.to_vec(),
            n: 0,
            mean: std::array::from_fn(|_| zeros()),
            m2: std::array::from_fn(|_| zeros()),
        }
    }

    fn add(&mut self, r: &TrajectoryResult) {
        self.n += 1;
        let n = self.n as f64;
        for (q, series) in r.observables().into_iter().enumerate() {
            for (k, &x) in series.iter().enumerate() {
                let delta = x - self.mean[q][k];
                self.mean[q][k] += delta / n;
                self.m2[q][k] += delta * (x - self.mean[q][k]);
            }
        }
    }

    fn finish(self) -> EnsembleResult {
        let n = self.n;
        let se = |m2: &Vec<f64>| {
            (n > 1).then(|| {
                m2.iter()
                    .map(|s| (s / (n - 1) as f64).sqrt() / (n as f64).sqrt())
                    .collect::<Vec<f64>>()
            })
        };
        let [sx, sy, sz, sp] = [&self.m2[0], &self.m2[1], &self.m2[2], &self.m2[3]].map(se);
        let [jx, jy, jz, purity] = self.mean;
        EnsembleResult {
            times: self.times,
            jx,
            jy,
            jz,
            purity_generalized: purity,
            jx_se: sx,
            jy_se: sy,
            jz_se: sz,
            purity_generalized_se: sp,
            n_traj: n,
        }
    }
}

/// Ensemble of `config.n_traj` trajectories from the configured initial state.
pub fn run_ensemble(config: &SimConfig) -> Result<EnsembleResult> {
    let engine = TrajectoryEngine::new(config)?;
    let psi0 = config.initial_state(engine.rep())?;
    engine.run_ensemble(&psi0, config.seed, config.n_traj)
}

/// Ensemble-versus-master comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnravelingReport {
    pub times: Vec<f64>,
    /// `|mean - exact|` of `<J_i>/j` at every sample.
    pub deviation: [Vec<f64>; 3],
    /// Deviation in units of the ensemble standard error.
    pub z_score: [Vec<f64>; 3],
    pub max_abs_deviation: [f64; 3],
    pub max_z_score: [f64; 3],
    pub sigma_threshold: f64,
    pub abs_threshold: f64,
    pub n_traj: usize,
    pub pass: bool,
    pub ensemble: EnsembleResult,
    pub exact: TimeSeries,
}

pub const SIGMA_THRESHOLD: f64 = 3.0;
pub const ABS_THRESHOLD: f64 = 0.05;

/// Runs the ensemble and the master equation on the same configuration.
/// Passes iff every deviation is within [`SIGMA_THRESHOLD`] standard errors
/// and within [`ABS_THRESHOLD`].
pub fn verify_unraveling(config: &SimConfig) -> Result<UnravelingReport> {
    verify_unraveling_with(config, NoiseCalibration::default())
}

/// [`verify_unraveling`] with the trajectory noise drawn under `calibration`.
pub fn verify_unraveling_with(config: &SimConfig, calibration: NoiseCalibration) -> Result<UnravelingReport> {
    let engine = TrajectoryEngine::new(config)?.with_calibration(calibration);
    let rep = engine.rep();
    let psi0 = config.initial_state(rep)?;
    let ensemble = engine.run_ensemble(&psi0, config.seed, config.n_traj)?;
    let h = build_hamiltonian(rep, &config.hamiltonian())?;
    let exact = propagate_master(
        &DensityMatrix::from_pure(&psi0),
        &h,
        rep,
        config.gamma,
        config.dt,
        config.t_final,
        config.sample_stride,
    )?;
    Ok(compare(ensemble, exact))
}

fn compare(ensemble: EnsembleResult, exact: TimeSeries) -> UnravelingReport {
    let exact_series = [&exact.jx, &exact.jy, &exact.jz];
    let se = ensemble.standard_errors();
    let mut deviation: [Vec<f64>; 3] = Default::default();
    let mut z_score: [Vec<f64>; 3] = Default::default();
    for q in 0..3 {
        for (k, (&m, &x)) in ensemble.means()[q].iter().zip(exact_series[q]).enumerate() {
            let dev = (m - x).abs();
            let s = se.map_or(0.0, |s| s[q][k]);
            let z = if s > 1e-12 {
                dev / s
            } else if dev <= ZERO_SPREAD_TOLERANCE {
                0.0
            } else {
                f64::INFINITY
            };
            deviation[q].push(dev);
            z_score[q].push(z);
        }
    }
    let max = |v: &Vec<f64>| v.iter().copied().fold(0.0, f64::max);
    let max_abs_deviation = [0, 1, 2].map(|q| max(&deviation[q]));
    let max_z_score = [0, 1, 2].map(|q| max(&z_score[q]));
    let pass = max_abs_deviation.iter().all(|&d| d <= ABS_THRESHOLD)
        && max_z_score.iter().all(|&z| z <= SIGMA_THRESHOLD);
    UnravelingReport {
        times: ensemble.times.clone(),
        deviation,
        z_score,
        max_abs_deviation,
        max_z_score,
        sigma_threshold: SIGMA_THRESHOLD,
        abs_threshold: ABS_THRESHOLD,
        n_traj: ensemble.n_traj,
        pass,
        ensemble,
        exact,
    }
}
