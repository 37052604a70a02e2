//! Scalar diagnostics of pure states with respect to su(2): total
//! uncertainty, generalized purity, purity-loss rate, classicality ratios,
//! time-scale separation and the sampling-count bound.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::lie_algebra::{Spin, SpinRep};

/// Normalized state vector in the `J_z` basis.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    amplitudes: DVector<Complex64>,
}

impl PureState {
    /// Normalizes `amplitudes`; rejects zero or non-finite vectors.
    pub fn new(amplitudes: DVector<Complex64>) -> Result<Self> {
        let n = amplitudes.norm();
        if !n.is_finite() || n == 0.0 {
            return Err(invalid("amplitudes", "vector must be finite and nonzero"));
        }
        Ok(PureState {
            amplitudes: amplitudes.unscale(n),
        })
    }

    pub(crate) fn from_normalized_unchecked(amplitudes: DVector<Complex64>) -> Self {
        PureState { amplitudes }
    }

    /// `|j, m>` with `m = -j + index`.
    pub fn basis(rep: &SpinRep, index: usize) -> Result<Self> {
        if index >= rep.dim() {
            return Err(invalid("index", format!("{index} out of range for dim {}", rep.dim())));
        }
        let mut v = DVector::zeros(rep.dim());
        v[index] = Complex64::new(1.0, 0.0);
        Ok(PureState { amplitudes: v })
    }

    /// `|j, m>` for a weight `m` in `-j..=j`.
    pub fn weight(rep: &SpinRep, m: f64) -> Result<Self> {
        let k = m + rep.j();
        if (k - k.round()).abs() > 1e-9 || k < -1e-9 {
            return Err(invalid("m", format!("{m} is not a weight of spin {}", rep.spin())));
        }
        PureState::basis(rep, k.round() as usize)
    }

    /// Haar-random state (normalized complex Gaussian vector).
    pub fn random(dim: usize, rng: &mut impl Rng) -> Self {
        let v = DVector::from_fn(dim, |_, _| {
            Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
        });
        PureState::new(v).expect("gaussian vector is nonzero")
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &DVector<Complex64> {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> DVector<Complex64> {
        self.amplitudes
    }

    pub fn expectations(&self, rep: &SpinRep) -> Result<[f64; 3]> {
        rep.check_dim(self.dim())?;
        Ok(rep.expectations(self.amplitudes.as_slice()))
    }

    /// Per-generator dispersions `<J_i^2> - <J_i>^2`.
    pub fn dispersions(&self, rep: &SpinRep) -> Result<[f64; 3]> {
        let e = self.expectations(rep)?;
        let s = rep.second_moments(self.amplitudes.as_slice());
        Ok(std::array::from_fn(|i| s[i] - e[i] * e[i]))
    }

    pub fn fidelity(&self, other: &PureState) -> f64 {
        self.amplitudes.dotc(&other.amplitudes).norm_sqr()
    }
}

/// `sum_i (<J_i^2> - <J_i>^2)`, between `j` and `j(j+1)`.
pub fn total_uncertainty(state: &PureState, rep: &SpinRep) -> Result<f64> {
    // sum_i <J_i^2> is the Casimir eigenvalue
    Ok(rep.casimir_value() - generalized_purity(state, rep, false)?)
}

/// `sum_i <J_i>^2`, divided by `j^2` when `normalized`.
pub fn generalized_purity(state: &PureState, rep: &SpinRep, normalized: bool) -> Result<f64> {
    let e = state.expectations(rep)?;
    let raw: f64 = e.iter().map(|x| x * x).sum();
    Ok(if normalized { raw / (rep.j() * rep.j()) } else { raw })
}

/// `d tr(rho^2)/dt` at a pure state under the weak-measurement master
/// equation: `-4 gamma Delta(psi)`.
pub fn purity_loss_rate(state: &PureState, rep: &SpinRep, gamma: f64) -> Result<f64> {
    if !(gamma >= 0.0) {
        return Err(invalid("gamma", "must be non-negative"));
    }
    Ok(-4.0 * gamma * total_uncertainty(state, rep)?)
}

/// Casimir data of the totally symmetric `[N]` irrep of su(n).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BecClassicality {
    pub casimir: f64,
    pub min_uncertainty: f64,
    pub adjoint_casimir: f64,
    /// `min_uncertainty / casimir = n / (N + n)`.
    pub ratio: f64,
}

/// Classicality ratio for the single-particle su(n) algebra of an `n`-mode
/// condensate of `atoms` bosons.
pub fn classicality_ratio_bec(atoms: u64, modes: u64) -> Result<BecClassicality> {
    if atoms < 1 {
        return Err(invalid("N", "need at least one atom"));
    }
    if modes < 2 {
        return Err(invalid("n", "need at least two modes"));
    }
    let (big_n, n) = (atoms as f64, modes as f64);
    let casimir = (n - 1.0) / (2.0 * n) * big_n * (big_n + n);
    let min_uncertainty = 0.5 * big_n * (n - 1.0);
    Ok(BecClassicality {
        casimir,
        min_uncertainty,
        adjoint_casimir: n,
        ratio: n / (big_n + n),
    })
}

/// Classicality ratio `d / (d + 1)` of the local algebra of `d`-level systems.
pub fn classicality_ratio_local(levels: u64) -> Result<f64> {
    if levels < 2 {
        return Err(invalid("d", "need at least two levels"));
    }
    let d = levels as f64;
    Ok(d / (d + 1.0))
}

/// Minimum separation factor that counts as `<<`.
pub const SEPARATION_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimescaleReport {
    /// `1 / (gamma j(j+1))`
    pub decoherence_time: f64,
    /// `1 / omega_i`
    pub oscillation_times: Vec<f64>,
    /// `1 / (2 gamma)`
    pub relaxation_time: f64,
    /// `min_i(1/omega_i) / decoherence_time`
    pub first_link_factor: f64,
    /// `relaxation_time / max_i(1/omega_i)`
    pub second_link_factor: f64,
    pub chain_satisfied: bool,
}

/// Compares decoherence, oscillation and relaxation times. The chain holds
/// when both links are separated by at least [`SEPARATION_FACTOR`].
pub fn timescale_report(spin: Spin, omegas: &[f64], gamma: f64) -> Result<TimescaleReport> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(invalid("gamma", "must be positive"));
    }
    if omegas.is_empty() || omegas.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
        return Err(invalid("omegas", "need at least one positive frequency"));
    }
    let decoherence_time = 1.0 / (gamma * spin.casimir());
    let relaxation_time = 1.0 / (gamma * 2.0);
    let oscillation_times: Vec<f64> = omegas.iter().map(|w| 1.0 / w).collect();
    let fastest = oscillation_times.iter().copied().fold(f64::INFINITY, f64::min);
    let slowest = oscillation_times.iter().copied().fold(0.0, f64::max);
    let first_link_factor = fastest / decoherence_time;
    let second_link_factor = relaxation_time / slowest;
    Ok(TimescaleReport {
        decoherence_time,
        oscillation_times,
        relaxation_time,
        first_link_factor,
        second_link_factor,
        chain_satisfied: first_link_factor >= SEPARATION_FACTOR
            && second_link_factor >= SEPARATION_FACTOR,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizationBound {
    /// `D_i / epsilon^2` for each generator.
    pub per_observable_n: [f64; 3],
    /// `|sum_i D_i - (c_H - sum_i <J_i>^2)|`
    pub sum_identity_check: f64,
    /// `3 max_i n_i`, the bound on the number of stochastic realizations.
    pub stochastic_bound: f64,
}

impl RealizationBound {
    pub fn total(&self) -> f64 {
        self.per_observable_n.iter().sum()
    }
}

/// Number of samples needed to estimate each `<J_i>` to absolute accuracy
/// `epsilon`, from the exact dispersions of `state`.
pub fn realization_bound(epsilon: f64, rep: &SpinRep, state: &PureState) -> Result<RealizationBound> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(invalid("epsilon", "must be positive"));
    }
    let d = state.dispersions(rep)?;
    let e = state.expectations(rep)?;
    let purity: f64 = e.iter().map(|x| x * x).sum();
    let sum_d: f64 = d.iter().sum();
    let per_observable_n = d.map(|di| di / (epsilon * epsilon));
    let largest = per_observable_n.iter().copied().fold(0.0, f64::max);
    Ok(RealizationBound {
        per_observable_n,
        sum_identity_check: (sum_d - (rep.casimir_value() - purity)).abs(),
        stochastic_bound: 3.0 * largest,
    })
}
