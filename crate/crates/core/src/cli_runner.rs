//! Execution of configured runs and named presets, with CSV and JSON output.
//!
//! Every written file `name.ext` is accompanied by `name.meta.json` holding
//! the full configuration, the seed, the crate version and the wall time.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::coherent_states::estimate_num_configs;
use crate::config::{
    bose_hubbard_config, fig1_config, linear_config, classicality_config, ConfigError, Mode,
    SimConfig, FIG2_SPINS, FIG2_TRAJECTORIES,
};
use crate::error::Error;
use crate::exact_evolution::{analytic_linear_solution, propagate_master, DensityMatrix, TimeSeries};
use crate::lie_algebra::build_hamiltonian;
use crate::state_analysis::{
    classicality_ratio_bec, classicality_ratio_local, timescale_report, BecClassicality,
    TimescaleReport,
};
use crate::stochastic_evolution::{verify_unraveling, EnsembleResult, TrajectoryEngine, TrajectoryResult};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const ENSEMBLE_HEADER: [&str; 9] = [
    "t", "jx", "jy", "jz", "jx_se", "jy_se", "jz_se", "purity_g", "purity_g_se",
];
pub const EXACT_HEADER: [&str; 7] = ["t", "jx", "jy", "jz", "purity_g", "purity_state", "trace_err"];
pub const TRAJECTORY_HEADER: [&str; 6] = ["t", "jx", "jy", "jz", "purity_g", "norm_drift"];

/// Start of the window over which single-trajectory purity is summarized.
pub const TRANSIENT_END: f64 = 2.0;
/// Time window over which late-time purities are averaged in the size sweep.
pub const LATE_WINDOW: (f64, f64) = (5.0, 10.0);
/// Smallest spin entering the `1 - f/j` fit of the size sweep.
pub const FIT_MIN_J: f64 = 16.0;
/// Accepted max-abs error of the linear-Hamiltonian closed-form check.
pub const LINEAR_ORACLE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Simulation(#[from] Error),
    #[error("cannot write {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot serialize {}: {message}", path.display())]
    Serialize { path: PathBuf, message: String },
    #[error("unknown mode or preset `{0}`")]
    UnknownTarget(String),
}

pub type RunResult<T> = std::result::Result<T, RunError>;

/// Named experiment with its own output layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Fig1,
    Fig2,
    Linear,
    Classicality,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::Fig1, Preset::Fig2, Preset::Linear, Preset::Classicality];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Fig1 => "fig1",
            Preset::Fig2 => "fig2",
            Preset::Linear => "linear",
            Preset::Classicality => "classicality",
        }
    }

    /// Base configuration; for the size sweep the per-spin physics is
    /// rebuilt at every point and only the run settings are taken from it.
    pub fn config(self) -> SimConfig {
        match self {
            Preset::Fig1 => fig1_config(),
            Preset::Fig2 => SimConfig {
                mode: Mode::Stochastic,
                n_traj: FIG2_TRAJECTORIES,
                ..bose_hubbard_config(FIG2_SPINS[0])
            },
            Preset::Linear => linear_config(),
            Preset::Classicality => classicality_config(),
        }
    }
}

impl FromStr for Preset {
    type Err = RunError;

    fn from_str(s: &str) -> RunResult<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| RunError::UnknownTarget(s.to_string()))
    }
}

/// What the command line asked for. A name that is both a mode and a preset
/// (`classicality`) is read as a mode when a configuration file is given.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Mode(Mode),
    Preset(Preset),
}

impl Target {
    pub fn resolve(name: &str, has_config: bool) -> RunResult<Target> {
        let mode = Mode::from_str(name).ok();
        let preset = Preset::from_str(name).ok();
        match (mode, preset) {
            (Some(m), Some(_)) if has_config => Ok(Target::Mode(m)),
            (_, Some(p)) => Ok(Target::Preset(p)),
            (Some(m), None) => Ok(Target::Mode(m)),
            (None, None) => Err(RunError::UnknownTarget(name.to_string())),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Write one CSV per trajectory in stochastic runs.
    pub emit_trajectories: bool,
}

/// Files written by a run, and the verdict of runs that check something.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub passed: Option<bool>,
}

#[derive(Serialize)]
struct Sidecar<'a> {
    file: String,
    target: &'a str,
    config: &'a SimConfig,
    seed: u64,
    version: &'static str,
    wall_time_seconds: f64,
}

/// Output directory plus the bookkeeping shared by every file of one run.
struct Sink<'a> {
    dir: PathBuf,
    target: &'a str,
    started: Instant,
    outcome: Outcome,
}

impl<'a> Sink<'a> {
    fn new(dir: &Path, target: &'a str) -> RunResult<Self> {
        fs::create_dir_all(dir).map_err(|source| RunError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        Ok(Sink {
            dir: dir.to_path_buf(),
            target,
            started: Instant::now(),
            outcome: Outcome::default(),
        })
    }

    fn csv(&mut self, name: &str, config: &SimConfig, header: &[&str], rows: Vec<Vec<String>>) -> RunResult<()> {
        let path = self.dir.join(name);
        let csv_error = |e: csv::Error| RunError::Serialize {
            path: path.clone(),
            message: e.to_string(),
        };
        let mut writer = csv::Writer::from_path(&path).map_err(csv_error)?;
        writer.write_record(header).map_err(csv_error)?;
        for row in rows {
            writer.write_record(&row).map_err(csv_error)?;
        }
        writer.flush().map_err(|source| RunError::Io {
            path: path.clone(),
            source,
        })?;
        self.finish(path, config)
    }

    fn json<T: Serialize>(&mut self, name: &str, config: &SimConfig, value: &T) -> RunResult<()> {
        let path = self.dir.join(name);
        write_json(&path, value)?;
        self.finish(path, config)
    }

    fn finish(&mut self, path: PathBuf, config: &SimConfig) -> RunResult<()> {
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("output");
        let sidecar = Sidecar {
            file: path.file_name().and_then(|s| s.to_str()).unwrap_or_default().to_string(),
            target: self.target,
            config,
            seed: config.seed,
            version: VERSION,
            wall_time_seconds: self.started.elapsed().as_secs_f64(),
        };
        write_json(&self.dir.join(format!("{stem}.meta.json")), &sidecar)?;
        self.outcome.files.push(path);
        Ok(())
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> RunResult<()> {
    let io_error = |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut writer = BufWriter::new(File::create(path).map_err(io_error)?);
    serde_json::to_writer_pretty(&mut writer, value).map_err(|e| RunError::Serialize {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    writer.write_all(b"\n").map_err(io_error)?;
    writer.flush().map_err(io_error)
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn optional_column(values: Option<&Vec<f64>>, k: usize) -> String {
    values.map(|v| format_float(v[k])).unwrap_or_default()
}

pub fn exact_rows(series: &TimeSeries) -> Vec<Vec<String>> {
    (0..series.len())
        .map(|k| {
            [
                series.times[k],
                series.jx[k],
                series.jy[k],
                series.jz[k],
                series.purity_generalized[k],
                series.purity_state[k],
                series.trace_error[k],
            ]
            .map(format_float)
            .to_vec()
        })
        .collect()
}

pub fn ensemble_rows(ensemble: &EnsembleResult) -> Vec<Vec<String>> {
    (0..ensemble.times.len())
        .map(|k| {
            vec![
                format_float(ensemble.times[k]),
                format_float(ensemble.jx[k]),
                format_float(ensemble.jy[k]),
                format_float(ensemble.jz[k]),
                optional_column(ensemble.jx_se.as_ref(), k),
                optional_column(ensemble.jy_se.as_ref(), k),
                optional_column(ensemble.jz_se.as_ref(), k),
                format_float(ensemble.purity_generalized[k]),
                optional_column(ensemble.purity_generalized_se.as_ref(), k),
            ]
        })
        .collect()
}

pub fn trajectory_rows(trajectory: &TrajectoryResult) -> Vec<Vec<String>> {
    (0..trajectory.times.len())
        .map(|k| {
            [
                trajectory.times[k],
                trajectory.jx[k],
                trajectory.jy[k],
                trajectory.jz[k],
                trajectory.purity_generalized[k],
                trajectory.norm_drift[k],
            ]
            .map(format_float)
            .to_vec()
        })
        .collect()
}

/// Exact master-equation run of `config`.
pub fn exact_series(config: &SimConfig) -> RunResult<TimeSeries> {
    config.validate()?;
    let rep = config.rep();
    let h = build_hamiltonian(&rep, &config.hamiltonian())?;
    let rho0 = DensityMatrix::from_pure(&config.initial_state(&rep)?);
    Ok(propagate_master(
        &rho0,
        &h,
        &rep,
        config.gamma,
        config.dt,
        config.t_final,
        config.sample_stride,
    )?)
}

/// Runs `config` in its own mode, writing into `config.output`.
pub fn run(config: &SimConfig, options: &RunOptions) -> RunResult<Outcome> {
    config.validate()?;
    let mut sink = Sink::new(&config.output, config.mode.name())?;
    match config.mode {
        Mode::Exact => {
            let series = exact_series(config)?;
            sink.csv("exact.csv", config, &EXACT_HEADER, exact_rows(&series))?;
        }
        Mode::Stochastic => {
            let engine = TrajectoryEngine::new(config)?;
            let psi0 = config.initial_state(engine.rep())?;
            let mut pending: Option<RunError> = None;
            let ensemble = engine.run_ensemble_with(&psi0, config.seed, config.n_traj, |trajectory| {
                if options.emit_trajectories && pending.is_none() {
                    let name = format!("trajectory_{:05}.csv", trajectory.trajectory_index);
                    if let Err(e) = sink.csv(&name, config, &TRAJECTORY_HEADER, trajectory_rows(trajectory)) {
                        pending = Some(e);
                    }
                }
                Ok(())
            })?;
            if let Some(e) = pending {
                return Err(e);
            }
            sink.csv("ensemble.csv", config, &ENSEMBLE_HEADER, ensemble_rows(&ensemble))?;
        }
        Mode::Compare => {
            let report = verify_unraveling(config)?;
            sink.csv("ensemble.csv", config, &ENSEMBLE_HEADER, ensemble_rows(&report.ensemble))?;
            sink.csv("exact.csv", config, &EXACT_HEADER, exact_rows(&report.exact))?;
            sink.json("compare.json", config, &report)?;
            sink.outcome.passed = Some(report.pass);
        }
        Mode::Classicality => {
            sink.json("classicality.json", config, &classicality_report(config)?)?;
        }
        Mode::Timescales => {
            let report = timescale_report(config.j, &config.oscillation_frequencies(), config.gamma)?;
            sink.json("timescales.json", config, &report)?;
        }
    }
    Ok(sink.outcome)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassicalityReport {
    pub bec_atoms: u64,
    pub bec_modes: u64,
    pub bec: BecClassicality,
    pub local_levels: u64,
    pub local_ratio: f64,
    /// Present when the measurement rate is positive.
    pub timescales: Option<TimescaleReport>,
}

/// Condensate and local-algebra ratios plus the time-scale chain of `config`.
/// The atom count defaults to `2j`, mode count and local dimension to 2.
pub fn classicality_report(config: &SimConfig) -> RunResult<ClassicalityReport> {
    let atoms = config.bec_atoms.unwrap_or((2.0 * config.j.value()).round() as u64);
    let modes = config.bec_modes.unwrap_or(2);
    let levels = config.local_levels.unwrap_or(2);
    let timescales = if config.gamma > 0.0 {
        Some(timescale_report(config.j, &config.oscillation_frequencies(), config.gamma)?)
    } else {
        None
    };
    Ok(ClassicalityReport {
        bec_atoms: atoms,
        bec_modes: modes,
        bec: classicality_ratio_bec(atoms, modes)?,
        local_levels: levels,
        local_ratio: classicality_ratio_local(levels)?,
        timescales,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationSummary {
    /// Max-abs difference of `<J_i>/j` between open and closed evolution.
    pub open_closed_max_deviation: f64,
    pub min_unitary_purity: f64,
    pub min_unitary_purity_time: f64,
    pub transient_end: f64,
    /// Median single-trajectory purity over `t >= transient_end`.
    pub trajectory_median_purity: f64,
    pub localization_ratio: f64,
    pub unitary_num_configs: f64,
    pub trajectory_num_configs: f64,
}

/// Median of the samples of `values` taken at `times >= from`.
pub fn median_after(times: &[f64], values: &[f64], from: f64) -> Option<f64> {
    let mut late: Vec<f64> = times
        .iter()
        .zip(values)
        .filter(|(t, _)| **t >= from)
        .map(|(_, v)| *v)
        .collect();
    if late.is_empty() {
        return None;
    }
    late.sort_by(f64::total_cmp);
    let mid = late.len() / 2;
    Some(if late.len() % 2 == 1 {
        late[mid]
    } else {
        0.5 * (late[mid - 1] + late[mid])
    })
}

pub fn localization_summary(
    config: &SimConfig,
    open: &TimeSeries,
    closed: &TimeSeries,
    trajectory: &TrajectoryResult,
) -> RunResult<LocalizationSummary> {
    let mut deviation: f64 = 0.0;
    for (a, b) in [(&open.jx, &closed.jx), (&open.jy, &closed.jy), (&open.jz, &closed.jz)] {
        for (x, y) in a.iter().zip(b.iter()) {
            deviation = deviation.max((x - y).abs());
        }
    }
    let (k_min, &min_purity) = closed
        .purity_generalized
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .ok_or_else(|| Error::InvalidArgument {
            name: "closed",
            reason: "empty series".into(),
        })?;
    let median = median_after(&trajectory.times, &trajectory.purity_generalized, TRANSIENT_END)
        .ok_or_else(|| Error::InvalidArgument {
            name: "t_final",
            reason: format!("must exceed the transient end {TRANSIENT_END}"),
        })?;
    Ok(LocalizationSummary {
        open_closed_max_deviation: deviation,
        min_unitary_purity: min_purity,
        min_unitary_purity_time: closed.times[k_min],
        transient_end: TRANSIENT_END,
        trajectory_median_purity: median,
        localization_ratio: median / min_purity,
        unitary_num_configs: estimate_num_configs(min_purity, config.j)?,
        trajectory_num_configs: estimate_num_configs(median, config.j)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub j: f64,
    pub n_traj: usize,
    /// Ensemble-mean purity averaged over the late window.
    pub late_purity: f64,
    /// `j (1 - late_purity)`
    pub deficit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub window: [f64; 2],
    pub fit_min_j: f64,
    pub points: Vec<SweepPoint>,
    /// Least-squares `f` of `late_purity = 1 - f / j` over `j >= fit_min_j`.
    pub fitted_f: Option<f64>,
}

/// Mean of `values` at samples with `times` inside `[lo, hi]`.
pub fn window_mean(times: &[f64], values: &[f64], (lo, hi): (f64, f64)) -> Option<f64> {
    let inside: Vec<f64> = times
        .iter()
        .zip(values)
        .filter(|(t, _)| (lo..=hi).contains(*t))
        .map(|(_, v)| *v)
        .collect();
    (!inside.is_empty()).then(|| inside.iter().sum::<f64>() / inside.len() as f64)
}

/// Least-squares `f` minimizing `sum_k (P_k - 1 + f / j_k)^2`.
pub fn fit_inverse_j(points: &[(f64, f64)]) -> Option<f64> {
    let denominator: f64 = points.iter().map(|(j, _)| 1.0 / (j * j)).sum();
    (denominator > 0.0).then(|| points.iter().map(|(j, p)| (1.0 - p) / j).sum::<f64>() / denominator)
}

/// Sweep point of the size study: the dimer at spin `j` with the run
/// settings (horizon, trajectories, seed, initial state) of `base`.
pub fn sweep_config(base: &SimConfig, j: f64) -> SimConfig {
    SimConfig {
        mode: Mode::Stochastic,
        t_final: base.t_final,
        n_traj: base.n_traj,
        seed: base.seed,
        initial: base.initial,
        output: base.output.clone(),
        ..bose_hubbard_config(j)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearOracleReport {
    /// Max-abs error of `<J_i>` against the damped rotation.
    pub max_abs_error: f64,
    pub tolerance: f64,
    pub samples: usize,
    pub pass: bool,
}

pub fn linear_oracle(config: &SimConfig, series: &TimeSeries) -> RunResult<LinearOracleReport> {
    if config.quadratic.iter().flatten().any(|&x| x != 0.0) {
        return Err(Error::InvalidArgument {
            name: "quadratic",
            reason: "the closed form needs a linear Hamiltonian".into(),
        }
        .into());
    }
    let rep = config.rep();
    let init = config.initial_state(&rep)?.expectations(&rep)?;
    let j = rep.j();
    let mut max_abs_error: f64 = 0.0;
    for k in 0..series.len() {
        let analytic = analytic_linear_solution(config.linear, config.gamma, init, series.times[k]);
        let numeric = series.expectations_at(k).map(|x| x * j);
        for (a, b) in analytic.iter().zip(numeric) {
            max_abs_error = max_abs_error.max((a - b).abs());
        }
    }
    Ok(LinearOracleReport {
        max_abs_error,
        tolerance: LINEAR_ORACLE_TOLERANCE,
        samples: series.len(),
        pass: max_abs_error <= LINEAR_ORACLE_TOLERANCE,
    })
}

/// Runs a named preset from `config`, writing into `config.output`.
pub fn run_preset(preset: Preset, config: &SimConfig, options: &RunOptions) -> RunResult<Outcome> {
    config.validate()?;
    let mut sink = Sink::new(&config.output, preset.name())?;
    match preset {
        Preset::Fig1 => {
            let open = exact_series(config)?;
            let closed_config = SimConfig {
                gamma: 0.0,
                ..config.clone()
            };
            let closed = exact_series(&closed_config)?;
            let engine = TrajectoryEngine::new(config)?;
            let psi0 = config.initial_state(engine.rep())?;
            let trajectory = engine.run(&psi0, config.seed, 0)?;
            sink.csv("fig1_open.csv", config, &EXACT_HEADER, exact_rows(&open))?;
            sink.csv("fig1_closed.csv", &closed_config, &EXACT_HEADER, exact_rows(&closed))?;
            sink.csv("fig1_trajectory.csv", config, &TRAJECTORY_HEADER, trajectory_rows(&trajectory))?;
            let summary = localization_summary(config, &open, &closed, &trajectory)?;
            sink.json("fig1_summary.json", config, &summary)?;
        }
        Preset::Fig2 => {
            let mut points = Vec::with_capacity(FIG2_SPINS.len());
            for &j in &FIG2_SPINS {
                let point = sweep_config(config, j);
                let engine = TrajectoryEngine::new(&point)?;
                let psi0 = point.initial_state(engine.rep())?;
                let mut trajectories = Vec::new();
                let ensemble = engine.run_ensemble_with(&psi0, point.seed, point.n_traj, |t| {
                    if options.emit_trajectories {
                        trajectories.push(t.clone());
                    }
                    Ok(())
                })?;
                for t in &trajectories {
                    let name = format!("fig2_j{j}_trajectory_{:05}.csv", t.trajectory_index);
                    sink.csv(&name, &point, &TRAJECTORY_HEADER, trajectory_rows(t))?;
                }
                sink.csv(&format!("fig2_j{j}.csv"), &point, &ENSEMBLE_HEADER, ensemble_rows(&ensemble))?;
                let late_purity = window_mean(&ensemble.times, &ensemble.purity_generalized, LATE_WINDOW)
                    .ok_or_else(|| Error::InvalidArgument {
                        name: "t_final",
                        reason: format!("no samples inside the late window {LATE_WINDOW:?}"),
                    })?;
                points.push(SweepPoint {
                    j,
                    n_traj: point.n_traj,
                    late_purity,
                    deficit: j * (1.0 - late_purity),
                });
            }
            let fit_points: Vec<(f64, f64)> = points
                .iter()
                .filter(|p| p.j >= FIT_MIN_J)
                .map(|p| (p.j, p.late_purity))
                .collect();
            let summary = SweepSummary {
                window: [LATE_WINDOW.0, LATE_WINDOW.1],
                fit_min_j: FIT_MIN_J,
                points,
                fitted_f: fit_inverse_j(&fit_points),
            };
            sink.json("fig2_summary.json", config, &summary)?;
        }
        Preset::Linear => {
            let series = exact_series(config)?;
            let report = linear_oracle(config, &series)?;
            sink.csv("linear.csv", config, &EXACT_HEADER, exact_rows(&series))?;
            sink.json("linear_oracle.json", config, &report)?;
            sink.outcome.passed = Some(report.pass);
        }
        Preset::Classicality => {
            sink.json("classicality.json", config, &classicality_report(config)?)?;
        }
    }
    Ok(sink.outcome)
}
