//! Experiment description shared by the engines and the command-line runner.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::coherent_states::{amplitudes, CoherentParam};
use crate::error::{invalid, Result};
use crate::exact_evolution::default_dt;
use crate::lie_algebra::{HamiltonianSpec, Spin, SpinRep};
use crate::state_analysis::PureState;

pub const DEFAULT_T_FINAL: f64 = 10.0;
pub const DEFAULT_SAMPLE_STRIDE: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Exact,
    Stochastic,
    Compare,
    Classicality,
    Timescales,
}

impl Mode {
    pub const ALL: [Mode; 5] = [
        Mode::Exact,
        Mode::Stochastic,
        Mode::Compare,
        Mode::Classicality,
        Mode::Timescales,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Exact => "exact",
            Mode::Stochastic => "stochastic",
            Mode::Compare => "compare",
            Mode::Classicality => "classicality",
            Mode::Timescales => "timescales",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown mode `{s}`"))
    }
}

/// Initial pure state of a run.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialState {
    /// `|j, -j>`
    #[default]
    Lowest,
    /// `|j, +j>`
    Highest,
    /// Coherent state with stereographic coordinate `re + i im`.
    Tau([f64; 2]),
    /// `J_z` eigenstate `|j, m>`.
    M(f64),
}

impl InitialState {
    pub fn build(&self, rep: &SpinRep) -> Result<PureState> {
        match *self {
            InitialState::Lowest => Ok(amplitudes(rep, &CoherentParam::lowest_weight())),
            InitialState::Highest => Ok(amplitudes(rep, &CoherentParam::highest_weight())),
            InitialState::Tau([re, im]) => {
                let p = CoherentParam::from_stereographic(Complex64::new(re, im))?;
                Ok(amplitudes(rep, &p))
            }
            InitialState::M(m) => PureState::weight(rep, m),
        }
    }
}

/// Complete, validated experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub mode: Mode,
    pub j: Spin,
    pub linear: [f64; 3],
    pub quadratic: [[f64; 3]; 3],
    pub gamma: f64,
    pub dt: f64,
    pub t_final: f64,
    pub sample_stride: usize,
    pub n_traj: usize,
    pub seed: u64,
    pub initial: InitialState,
    pub output: PathBuf,
    /// Atom count `N` for the condensate classicality ratio; defaults to `2j`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bec_atoms: Option<u64>,
    /// Mode count `n` for the condensate classicality ratio; defaults to 2.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bec_modes: Option<u64>,
    /// Local dimension `d` for the local-algebra ratio; defaults to 2.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub local_levels: Option<u64>,
    /// Oscillation frequencies for the time-scale report; defaults to `|a|`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omegas: Option<Vec<f64>>,
}

/// Document as written by the user: everything but the required keys may be omitted.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    preset: Option<String>,
    mode: Option<Mode>,
    j: Option<Spin>,
    linear: Option<[f64; 3]>,
    quadratic: Option<[[f64; 3]; 3]>,
    gamma: Option<f64>,
    dt: Option<f64>,
    t_final: Option<f64>,
    sample_stride: Option<usize>,
    n_traj: Option<usize>,
    seed: Option<u64>,
    initial: Option<InitialState>,
    output: Option<PathBuf>,
    bec_atoms: Option<u64>,
    bec_modes: Option<u64>,
    local_levels: Option<u64>,
    omegas: Option<Vec<f64>>,
}

pub const REQUIRED_KEYS: [&str; 4] = ["mode", "j", "linear", "gamma"];

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("missing required keys: {}", .0.join(", "))]
    MissingKeys(Vec<&'static str>),
    #[error("{0}")]
    Syntax(String),
    #[error(transparent)]
    Constraint(#[from] crate::error::Error),
}

impl SimConfig {
    pub fn hamiltonian(&self) -> HamiltonianSpec {
        HamiltonianSpec {
            linear: self.linear,
            quadratic: self.quadratic,
        }
    }

    pub fn rep(&self) -> SpinRep {
        SpinRep::new(self.j)
    }

    pub fn initial_state(&self, rep: &SpinRep) -> Result<PureState> {
        self.initial.build(rep)
    }

    /// Frequencies for the time-scale report.
    pub fn oscillation_frequencies(&self) -> Vec<f64> {
        self.omegas.clone().unwrap_or_else(|| {
            vec![self.linear.iter().map(|x| x * x).sum::<f64>().sqrt()]
        })
    }

    /// Number of steps and the step actually used.
    pub fn time_grid(&self) -> Result<(usize, f64)> {
        crate::exact_evolution::step_count(self.dt, self.t_final)
    }

    pub fn validate(&self) -> Result<()> {
        self.hamiltonian().validate()?;
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(invalid("gamma", "must be finite and non-negative"));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(invalid("dt", "must be finite and positive"));
        }
        if !(self.t_final > 0.0) || !self.t_final.is_finite() {
            return Err(invalid("t_final", "must be finite and positive"));
        }
        if self.dt > self.t_final {
            return Err(invalid("dt", "must not exceed t_final"));
        }
        if self.sample_stride == 0 {
            return Err(invalid("sample_stride", "must be at least 1"));
        }
        if self.n_traj == 0 {
            return Err(invalid("n_traj", "must be at least 1"));
        }
        if let Some(w) = &self.omegas {
            if w.is_empty() || w.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
                return Err(invalid("omegas", "need positive finite frequencies"));
            }
        }
        self.initial.build(&self.rep())?;
        Ok(())
    }

    /// Serializes to the same key-value format accepted by [`parse_config`].
    pub fn to_config_text(&self) -> std::result::Result<String, toml::ser::Error> {
        toml::to_string(self)
    }

    fn from_raw(raw: RawConfig) -> std::result::Result<SimConfig, ConfigError> {
        let base = match raw.preset.as_deref() {
            Some(name) => Some(preset(name).ok_or_else(|| {
                ConfigError::Syntax(format!(
                    "unknown preset `{name}` (expected one of: {})",
                    PRESETS.join(", ")
                ))
            })?),
            None => None,
        };
        let missing: Vec<&'static str> = if base.is_some() {
            Vec::new()
        } else {
            [
                raw.mode.is_none(),
                raw.j.is_none(),
                raw.linear.is_none(),
                raw.gamma.is_none(),
            ]
            .iter()
            .zip(REQUIRED_KEYS)
            .filter_map(|(absent, key)| absent.then_some(key))
            .collect()
        };
        if !missing.is_empty() {
            return Err(ConfigError::MissingKeys(missing));
        }
        let base = base.unwrap_or_else(|| SimConfig {
            mode: raw.mode.expect("checked above"),
            j: raw.j.expect("checked above"),
            linear: raw.linear.expect("checked above"),
            quadratic: [[0.0; 3]; 3],
            gamma: raw.gamma.expect("checked above"),
            dt: f64::NAN,
            t_final: DEFAULT_T_FINAL,
            sample_stride: DEFAULT_SAMPLE_STRIDE,
            n_traj: 1,
            seed: 0,
            initial: InitialState::default(),
            output: PathBuf::from("out"),
            bec_atoms: None,
            bec_modes: None,
            local_levels: None,
            omegas: None,
        });
        let mut cfg = SimConfig {
            mode: raw.mode.unwrap_or(base.mode),
            j: raw.j.unwrap_or(base.j),
            linear: raw.linear.unwrap_or(base.linear),
            quadratic: raw.quadratic.unwrap_or(base.quadratic),
            gamma: raw.gamma.unwrap_or(base.gamma),
            dt: f64::NAN,
            t_final: raw.t_final.unwrap_or(base.t_final),
            sample_stride: raw.sample_stride.unwrap_or(base.sample_stride),
            n_traj: raw.n_traj.unwrap_or(base.n_traj),
            seed: raw.seed.unwrap_or(base.seed),
            initial: raw.initial.unwrap_or(base.initial),
            output: raw.output.unwrap_or(base.output),
            bec_atoms: raw.bec_atoms.or(base.bec_atoms),
            bec_modes: raw.bec_modes.or(base.bec_modes),
            local_levels: raw.local_levels.or(base.local_levels),
            omegas: raw.omegas.or(base.omegas),
        };
        cfg.hamiltonian().validate()?;
        cfg.dt = match raw.dt {
            Some(dt) => dt,
            None => default_dt(&cfg.hamiltonian(), &cfg.rep(), cfg.gamma)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parses a `key = value` document (TOML syntax, `#` comments). Missing
/// optional keys take their defaults; a `preset = "<name>"` key supplies
/// every key not given explicitly.
pub fn parse_config(text: &str) -> std::result::Result<SimConfig, ConfigError> {
    SimConfig::from_raw(parse_raw(text)?)
}

/// [`parse_config`] with `preset` as the base when the document names none.
pub fn parse_config_for_preset(text: &str, preset: &str) -> std::result::Result<SimConfig, ConfigError> {
    let mut raw = parse_raw(text)?;
    raw.preset.get_or_insert_with(|| preset.to_string());
    SimConfig::from_raw(raw)
}

fn parse_raw(text: &str) -> std::result::Result<RawConfig, ConfigError> {
    toml::from_str(text).map_err(|e| {
        let position = e.span().map(|span| {
            let line = text[..span.start].matches('\n').count() + 1;
            format!("line {line}: ")
        });
        ConfigError::Syntax(format!("{}{}", position.unwrap_or_default(), e.message()))
    })
}

pub const PRESETS: [&str; 4] = ["fig1", "fig2", "linear", "classicality"];

/// Approximate time between samples in the Bose-Hubbard presets.
pub const PRESET_SAMPLE_SPACING: f64 = 0.01;

/// Bose-Hubbard dimer at spin `j` with `omega = 15`, `U = omega/2j` and
/// `gamma = 0.05/j`, started in `|j, -j>`.
pub fn bose_hubbard_config(j: f64) -> SimConfig {
    let spin = Spin::new(j).expect("preset spin");
    let omega = 15.0;
    let spec = HamiltonianSpec::bose_hubbard(omega, omega / (2.0 * j));
    let gamma = 0.05 / j;
    let dt = default_dt(&spec, &SpinRep::new(spin), gamma).expect("preset Hamiltonian");
    SimConfig {
        mode: Mode::Compare,
        j: spin,
        linear: spec.linear,
        quadratic: spec.quadratic,
        gamma,
        dt,
        t_final: DEFAULT_T_FINAL,
        sample_stride: ((PRESET_SAMPLE_SPACING / dt).round() as usize).max(1),
        n_traj: 64,
        seed: 0,
        initial: InitialState::Lowest,
        output: PathBuf::from("out"),
        bec_atoms: None,
        bec_modes: None,
        local_levels: None,
        omegas: None,
    }
}

pub fn fig1_config() -> SimConfig {
    bose_hubbard_config(64.0)
}

pub const FIG2_SPINS: [f64; 7] = [2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0];
pub const FIG2_TRAJECTORIES: usize = 10;

pub fn fig2_configs() -> Vec<SimConfig> {
    FIG2_SPINS
        .iter()
        .map(|&j| SimConfig {
            mode: Mode::Stochastic,
            n_traj: FIG2_TRAJECTORIES,
            ..bose_hubbard_config(j)
        })
        .collect()
}

/// `H = -omega J_x` at `j = 8` with `gamma = 0.01` over `[0, 2]`.
pub fn linear_config() -> SimConfig {
    let spin = Spin::new(8.0).expect("preset spin");
    let spec = HamiltonianSpec::linear([-15.0, 0.0, 0.0]);
    SimConfig {
        mode: Mode::Exact,
        linear: spec.linear,
        quadratic: spec.quadratic,
        gamma: 0.01,
        dt: default_dt(&spec, &SpinRep::new(spin), 0.01).expect("preset Hamiltonian"),
        t_final: 2.0,
        sample_stride: DEFAULT_SAMPLE_STRIDE,
        n_traj: 1,
        j: spin,
        ..fig1_config()
    }
}

pub fn classicality_config() -> SimConfig {
    SimConfig {
        mode: Mode::Classicality,
        bec_atoms: Some(128),
        bec_modes: Some(2),
        local_levels: Some(2),
        omegas: Some(vec![15.0]),
        n_traj: 1,
        ..fig1_config()
    }
}

/// Base configuration of a named preset (the first entry for sweeps).
pub fn preset(name: &str) -> Option<SimConfig> {
    match name {
        "fig1" => Some(fig1_config()),
        "fig2" => fig2_configs().into_iter().next(),
        "linear" => Some(linear_config()),
        "classicality" => Some(classicality_config()),
        _ => None,
    }
}
