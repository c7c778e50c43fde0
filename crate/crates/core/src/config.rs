//! Run configuration: TOML sections `[physics]`, `[grid]`, `[time]`, `[output]`, `[mode]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::ops::Physics;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    ImexEuler,
    ImexBdf2,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstraintMode {
    /// Renormalize `m` to the unit sphere after every step.
    Projected,
    /// Leave `|m| = 1` unenforced and record its drift.
    Monitored,
    /// Ginzburg-Landau penalized system.
    Penalized,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DtPolicy {
    Fixed,
    Cfl,
}

/// Named initial data; see [`crate::lab::initial_state`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialCondition {
    /// `(0, 0, m_star)`.
    Equilibrium,
    /// Smooth seeded perturbation of `(0, 0, m_star)` with the given amplitude.
    Perturbed,
    /// O(1) smooth data exercising every coupling term.
    Smooth,
    /// `u = 0`, `F = 0`, `m` varying along the first axis only.
    Planar,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicsSection {
    #[serde(default = "one")]
    pub mu_s: f64,
    #[serde(default = "one")]
    pub kappa: f64,
    #[serde(default = "one")]
    pub alpha: f64,
    #[serde(default = "half")]
    pub beta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
}

impl Default for PhysicsSection {
    fn default() -> Self {
        PhysicsSection {
            mu_s: 1.0,
            kappa: 1.0,
            alpha: 1.0,
            beta: 0.5,
            epsilon: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub extents: Vec<usize>,
    /// Box side lengths; unit box when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lengths: Option<Vec<f64>>,
    #[serde(default)]
    pub periodic: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    #[serde(default = "default_policy")]
    pub dt_policy: DtPolicy,
    /// Step size for the fixed policy.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default = "default_dt_max")]
    pub dt_max: f64,
    #[serde(default = "default_c_cfl")]
    pub c_cfl: f64,
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    /// Relative tolerance of every linear solve.
    #[serde(default = "default_solver_tol")]
    pub solver_tol: f64,
}

impl Default for TimeSection {
    fn default() -> Self {
        TimeSection {
            scheme: default_scheme(),
            dt_policy: default_policy(),
            dt: None,
            dt_max: default_dt_max(),
            c_cfl: default_c_cfl(),
            t_end: default_t_end(),
            solver_tol: default_solver_tol(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_dir")]
    pub dir: String,
    /// Keep a state (and write a snapshot) every `cadence` steps.
    #[serde(default = "default_cadence")]
    pub cadence: usize,
    #[serde(default)]
    pub snapshots: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: default_dir(),
            cadence: default_cadence(),
            snapshots: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeSection {
    #[serde(default = "default_constraint")]
    pub constraint: ConstraintMode,
    #[serde(default = "default_initial")]
    pub initial: InitialCondition,
    #[serde(default = "default_m_star")]
    pub m_star: [f64; 3],
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    #[serde(default)]
    pub seed: u64,
    /// Strictly decreasing list of penalty parameters for sweeps.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sweep: Vec<f64>,
}

impl Default for ModeSection {
    fn default() -> Self {
        ModeSection {
            constraint: default_constraint(),
            initial: default_initial(),
            m_star: default_m_star(),
            amplitude: default_amplitude(),
            seed: 0,
            sweep: Vec::new(),
        }
    }
}

/// A complete, validated run description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    #[serde(default)]
    pub physics: PhysicsSection,
    pub grid: GridSection,
    #[serde(default)]
    pub time: TimeSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub mode: ModeSection,
}

fn one() -> f64 {
    1.0
}
fn half() -> f64 {
    0.5
}
fn default_scheme() -> Scheme {
    Scheme::ImexEuler
}
fn default_policy() -> DtPolicy {
    DtPolicy::Cfl
}
fn default_dt_max() -> f64 {
    1e-3
}
fn default_c_cfl() -> f64 {
    0.4
}
fn default_t_end() -> f64 {
    5.0
}
fn default_solver_tol() -> f64 {
    1e-10
}
fn default_dir() -> String {
    "out".into()
}
fn default_cadence() -> usize {
    100
}
fn default_constraint() -> ConstraintMode {
    ConstraintMode::Projected
}
fn default_initial() -> InitialCondition {
    InitialCondition::Perturbed
}
fn default_m_star() -> [f64; 3] {
    [0.0, 0.0, 1.0]
}
fn default_amplitude() -> f64 {
    1e-2
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be positive, got {v}")))
    }
}

impl SimConfig {
    /// Defaults everywhere except the grid.
    pub fn with_grid(extents: &[usize]) -> Self {
        SimConfig {
            physics: PhysicsSection::default(),
            grid: GridSection {
                extents: extents.to_vec(),
                lengths: None,
                periodic: false,
            },
            time: TimeSection::default(),
            output: OutputSection::default(),
            mode: ModeSection::default(),
        }
    }

    pub fn physics(&self) -> Physics {
        Physics {
            mu_s: self.physics.mu_s,
            kappa: self.physics.kappa,
            alpha: self.physics.alpha,
            beta: self.physics.beta,
        }
    }

    pub fn make_grid(&self) -> Result<Grid> {
        let dim = self.grid.extents.len();
        let lengths = self.grid.lengths.clone().unwrap_or_else(|| vec![1.0; dim]);
        Grid::new(dim, &self.grid.extents, &lengths, [0.0; 3], self.grid.periodic)
    }

    /// Checks every documented constraint; messages name the offending key.
    pub fn validate(&self) -> Result<()> {
        let p = &self.physics;
        positive("mu_s", p.mu_s)?;
        positive("kappa", p.kappa)?;
        positive("alpha", p.alpha)?;
        positive("beta", p.beta)?;
        if let Some(e) = p.epsilon {
            positive("epsilon", e)?;
        }
        self.make_grid().map_err(|e| Error::Config(e.to_string()))?;
        let t = &self.time;
        positive("dt_max", t.dt_max)?;
        positive("c_cfl", t.c_cfl)?;
        positive("t_end", t.t_end)?;
        positive("solver_tol", t.solver_tol)?;
        match (t.dt_policy, t.dt) {
            (DtPolicy::Fixed, None) => return Err(Error::Config("dt is required when dt_policy = \"fixed\"".into())),
            (_, Some(dt)) => positive("dt", dt)?,
            _ => {}
        }
        if self.output.cadence == 0 {
            return Err(Error::Config("cadence must be positive, got 0".into()));
        }
        let m = &self.mode;
        let norm = m.m_star.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!("m_star must be a unit vector, has norm {norm}")));
        }
        if !(m.amplitude >= 0.0 && m.amplitude.is_finite()) {
            return Err(Error::Config(format!("amplitude must be non-negative, got {}", m.amplitude)));
        }
        for &e in &m.sweep {
            positive("sweep entry", e)?;
        }
        if m.sweep.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Config("sweep must be strictly decreasing".into()));
        }
        if m.constraint == ConstraintMode::Penalized && p.epsilon.is_none() && m.sweep.is_empty() {
            return Err(Error::Config("epsilon is required in penalized mode".into()));
        }
        Ok(())
    }
}

/// Parses and validates a TOML run description. Unknown keys are rejected.
pub fn parse_config(text: &str) -> Result<SimConfig> {
    let cfg: SimConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}
