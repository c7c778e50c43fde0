//! Output formats: binary snapshots, CSV tables and run manifests.
//!
//! Snapshot layout (all integers and floats little-endian):
//!
//! | bytes | content |
//! |---|---|
//! | 4 | magic `MGVS` |
//! | 4 | `u32` version (currently 1) |
//! | 4 | `u32` dimension |
//! | 4 | `u32` periodic flag |
//! | 24 | `3 x u64` cell counts (unused axes 1) |
//! | 24 | `3 x f64` box lengths (unused axes 1) |
//! | 8 | `f64` time |
//! | 4 | `u32` parameter count `p` |
//! | 8p | `mu_s, kappa, alpha, beta, epsilon` (`NaN` when unset) |
//! | rest | `f64` node-major data of `u`, `F`, `m`, `pi` |

use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use crate::config::{ConstraintMode, SimConfig};
use crate::energetics::{self, EnergyRecord};
use crate::error::{Error, Result};
use crate::field::{Field, State};
use crate::gl::DeviationRow;
use crate::grid::{FieldRole, Grid};
use crate::integrator::{self, Trajectory};
use crate::lab;
use crate::ops::Physics;

pub const MAGIC: [u8; 4] = *b"MGVS";
pub const VERSION: u32 = 1;
const MAX_PARAMS: u32 = 64;

/// A decoded snapshot: the state plus the parameters it was produced with.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub state: State,
    pub physics: Physics,
    pub epsilon: Option<f64>,
}

pub fn encode_snapshot(state: &State, physics: &Physics, epsilon: Option<f64>) -> Vec<u8> {
    let g = state.grid();
    let mut out = Vec::with_capacity(96 + 8 * (state.u.data().len() + state.f.data().len() + state.m.data().len() + state.pi.data().len()));
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(g.dim() as u32).to_le_bytes());
    out.extend_from_slice(&u32::from(g.is_periodic()).to_le_bytes());
    for a in 0..3 {
        let e = if a < g.dim() { g.extents()[a] } else { 1 };
        out.extend_from_slice(&(e as u64).to_le_bytes());
    }
    for a in 0..3 {
        let l = if a < g.dim() { g.lengths()[a] } else { 1.0 };
        out.extend_from_slice(&l.to_le_bytes());
    }
    out.extend_from_slice(&state.t.to_le_bytes());
    let params = [physics.mu_s, physics.kappa, physics.alpha, physics.beta, epsilon.unwrap_or(f64::NAN)];
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for p in params {
        out.extend_from_slice(&p.to_le_bytes());
    }
    for f in [&state.u, &state.f, &state.m, &state.pi] {
        for v in f.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len()).ok_or(Error::Truncated {
            needed: self.pos.saturating_add(n),
            have: self.bytes.len(),
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode_snapshot(bytes: &[u8]) -> Result<Snapshot> {
    let mut r = Reader { bytes, pos: 0 };
    let magic: [u8; 4] = r.take(4)?.try_into().unwrap();
    if magic != MAGIC {
        return Err(Error::BadMagic(magic));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let dim = r.u32()? as usize;
    let periodic = match r.u32()? {
        0 => false,
        1 => true,
        p => return Err(Error::Snapshot(format!("periodic flag must be 0 or 1, got {p}"))),
    };
    if dim != 2 && dim != 3 {
        return Err(Error::Snapshot(format!("dimension must be 2 or 3, got {dim}")));
    }
    let mut extents = [0usize; 3];
    for e in &mut extents {
        *e = usize::try_from(r.u64()?).map_err(|_| Error::Snapshot("cell count overflows".into()))?;
    }
    let mut lengths = [0.0; 3];
    for l in &mut lengths {
        *l = r.f64()?;
    }
    let t = r.f64()?;
    if !t.is_finite() {
        return Err(Error::Snapshot(format!("time {t} is not finite")));
    }
    let n_params = r.u32()?;
    if !(4..=MAX_PARAMS).contains(&n_params) {
        return Err(Error::Snapshot(format!("parameter count {n_params} out of range")));
    }
    let mut params = Vec::with_capacity(n_params as usize);
    for _ in 0..n_params {
        params.push(r.f64()?);
    }
    let physics = Physics {
        mu_s: params[0],
        kappa: params[1],
        alpha: params[2],
        beta: params[3],
    };
    let epsilon = params.get(4).copied().filter(|e| !e.is_nan());

    let nodes = (0..dim)
        .try_fold(1usize, |acc, a| {
            let n = if periodic { extents[a] } else { extents[a].checked_add(1)? };
            acc.checked_mul(n)
        })
        .ok_or_else(|| Error::Snapshot("node count overflows".into()))?;
    let comps = dim + dim * dim + 3 + 1;
    let needed = nodes
        .checked_mul(comps)
        .and_then(|v| v.checked_mul(8))
        .and_then(|v| v.checked_add(r.pos))
        .ok_or_else(|| Error::Snapshot("payload size overflows".into()))?;
    if bytes.len() < needed {
        return Err(Error::Truncated {
            needed,
            have: bytes.len(),
        });
    }
    if bytes.len() > needed {
        return Err(Error::Snapshot(format!("{} trailing bytes", bytes.len() - needed)));
    }
    let grid = Grid::new(dim, &extents[..dim], &lengths[..dim], [0.0; 3], periodic)?;
    let mut read_field = |role: FieldRole| -> Result<Field> {
        let shape = role.shape(dim);
        let n = nodes * shape[0] * shape[1];
        let data = r.take(8 * n)?.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Field::from_vec(&grid, shape, grid.tag_for(role), data)
    };
    let u = read_field(FieldRole::Velocity)?;
    let f = read_field(FieldRole::Deformation)?;
    let m = read_field(FieldRole::Magnetization)?;
    let pi = read_field(FieldRole::Pressure)?;
    Ok(Snapshot {
        state: State { t, u, f, m, pi },
        physics,
        epsilon,
    })
}

pub fn write_snapshot(state: &State, physics: &Physics, epsilon: Option<f64>, path: &Path) -> Result<()> {
    std::fs::write(path, encode_snapshot(state, physics, epsilon)).map_err(|e| Error::io(path, e))
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_snapshot(&bytes)
}

pub const ENERGY_HEADER: &str = "t,kinetic,elastic,exchange,total,D_u,D_F,D_m,dE_dt";
pub const DEVIATION_HEADER: &str = "epsilon,t,l2_dev,linf_constraint";

fn csv_row(out: &mut String, values: &[f64]) {
    for (k, v) in values.iter().enumerate() {
        if k > 0 {
            out.push(',');
        }
        write!(out, "{v:.16e}").unwrap();
    }
    out.push('\n');
}

pub fn energy_csv(records: &[EnergyRecord]) -> String {
    let mut s = format!("{ENERGY_HEADER}\n");
    for r in records {
        csv_row(&mut s, &[r.t, r.kinetic, r.elastic, r.exchange, r.total, r.d_u, r.d_f, r.d_m, r.de_dt]);
    }
    s
}

pub fn deviation_csv(rows: &[DeviationRow]) -> String {
    let mut s = format!("{DEVIATION_HEADER}\n");
    for r in rows {
        csv_row(&mut s, &[r.epsilon, r.t, r.l2_dev, r.linf_constraint]);
    }
    s
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Outcome of one in-run assertion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub value: f64,
    pub threshold: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub grid: String,
    pub scheme: String,
    pub started: f64,
    pub finished: f64,
    pub steps: usize,
    pub outputs: Vec<String>,
    pub checks: Vec<Check>,
    pub config: SimConfig,
}

impl RunManifest {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let m: RunManifest = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        m.config.validate()?;
        Ok(m)
    }

    /// `(name, pass)` pairs, the part a rerun must reproduce.
    pub fn summary(&self) -> Vec<(String, bool)> {
        self.checks.iter().map(|c| (c.name.clone(), c.pass)).collect()
    }
}

fn unix_seconds() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

/// Energy and constraint assertions applicable to `cfg`.
pub fn run_checks(cfg: &SimConfig, traj: &Trajectory) -> Vec<Check> {
    let mut checks = Vec::new();
    let e0 = traj.energies.first().map_or(0.0, |r| r.total.abs());
    let slack = 1e-12 * e0.max(1e-300);
    let rise = traj.energies.windows(2).map(|w| w[1].total - w[0].total).fold(f64::NEG_INFINITY, f64::max);
    let ok = energetics::first_energy_increase(&traj.energies, slack).is_none();
    checks.push(Check {
        name: "energy-nonincreasing".into(),
        pass: ok,
        value: if rise.is_finite() { rise } else { 0.0 },
        threshold: slack,
    });
    if cfg.mode.constraint == ConstraintMode::Projected {
        let drift = traj.diagnostics.iter().map(|d| d.constraint_drift).fold(0.0, f64::max);
        checks.push(Check {
            name: "unit-constraint".into(),
            pass: drift <= 1e-12,
            value: drift,
            threshold: 1e-12,
        });
    }
    checks
}

pub struct RunOutcome {
    pub manifest: RunManifest,
    pub trajectory: Trajectory,
    pub manifest_path: PathBuf,
}

/// Integrates `cfg` from its preset initial state and writes `energy.csv`,
/// optional snapshots and `manifest.toml` into `out_dir`.
pub fn run_to_dir(cfg: &SimConfig, out_dir: &Path) -> Result<RunOutcome> {
    cfg.validate()?;
    let started = unix_seconds();
    let s0 = lab::initial_state(cfg)?;
    let traj = integrator::run(cfg, &s0)?;
    let finished = unix_seconds();
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut outputs = Vec::new();
    let energy = out_dir.join("energy.csv");
    write_text(&energy, &energy_csv(&traj.energies))?;
    outputs.push("energy.csv".to_string());
    if cfg.output.snapshots {
        let physics = cfg.physics();
        for (k, s) in traj.states.iter().enumerate() {
            let name = format!("snapshot_{k:05}.mgvs");
            write_snapshot(s, &physics, cfg.physics.epsilon, &out_dir.join(&name))?;
            outputs.push(name);
        }
    }
    let g = s0.grid();
    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        grid: format!(
            "{}{}",
            g.extents().iter().map(|e| e.to_string()).collect::<Vec<_>>().join("x"),
            if g.is_periodic() { " periodic" } else { "" }
        ),
        scheme: format!("{:?}", cfg.time.scheme),
        started,
        finished,
        steps: traj.diagnostics.len(),
        outputs,
        checks: run_checks(cfg, &traj),
        config: cfg.clone(),
    };
    let manifest_path = out_dir.join("manifest.toml");
    write_text(&manifest_path, &manifest.to_toml())?;
    Ok(RunOutcome {
        manifest,
        trajectory: traj,
        manifest_path,
    })
}
