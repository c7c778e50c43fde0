//! Ginzburg-Landau penalized magnetization: `|m| = 1` is replaced by the
//! penalty `1/(4 eps^2) int (|m|^2 - 1)^2` and the m-equation becomes
//! `d_t m + u . grad m = lap m - eps^-2 (|m|^2 - 1) m`.

use serde::Serialize;

use crate::config::{ConstraintMode, SimConfig};
use crate::energetics::{self, constraint_field, edge_gradient_sq, EnergyRecord};
use crate::error::{Error, Result};
use crate::field::{inner_product_l2, sphere_deviation, Field, State};
use crate::integrator::{self, Trajectory};
use crate::ops::{self, Physics};

/// A base run plus the penalty parameter and an optional sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct GLConfig {
    pub base: SimConfig,
    pub epsilon: f64,
    /// Strictly decreasing.
    pub sweep: Vec<f64>,
}

impl GLConfig {
    pub fn new(base: SimConfig, epsilon: f64, sweep: Vec<f64>) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::Config(format!("epsilon must be positive, got {epsilon}")));
        }
        if sweep.iter().any(|e| !(*e > 0.0)) || sweep.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Config("sweep must be positive and strictly decreasing".into()));
        }
        Ok(GLConfig { base, epsilon, sweep })
    }

    /// Reads `epsilon` and `sweep` from a parsed configuration.
    pub fn from_sim(cfg: &SimConfig) -> Result<Self> {
        let sweep = cfg.mode.sweep.clone();
        let epsilon = cfg
            .physics
            .epsilon
            .or_else(|| sweep.first().copied())
            .ok_or_else(|| Error::Config("epsilon is required in penalized mode".into()))?;
        GLConfig::new(cfg.clone(), epsilon, sweep)
    }

    /// The base configuration switched to penalized mode at `epsilon`.
    pub fn penalized(&self, epsilon: f64) -> SimConfig {
        let mut c = self.base.clone();
        c.mode.constraint = ConstraintMode::Penalized;
        c.physics.epsilon = Some(epsilon);
        c
    }
}

/// `lap m - eps^-2 (|m|^2 - 1) m - u . grad m`.
pub fn gl_rhs(m: &Field, u: &Field, epsilon: f64) -> Field {
    let mut out = ops::laplacian(m);
    let phi = constraint_field(m);
    let adv = ops::advect(u, m);
    let k = 1.0 / (epsilon * epsilon);
    for n in 0..m.grid().node_count() {
        let p = phi.data()[n];
        let mn = m.node_vec3(n);
        let a = adv.node_vec3(n);
        let o = out.node_mut(n);
        for c in 0..3 {
            o[c] -= k * p * mn[c] + a[c];
        }
    }
    out
}

/// `1/(4 eps^2) int (|m|^2 - 1)^2` with trapezoid weights.
pub fn penalty_energy(m: &Field, epsilon: f64) -> f64 {
    let phi = constraint_field(m);
    let g = m.grid();
    let s: f64 = (0..g.node_count())
        .map(|n| {
            let w = if g.is_periodic() { 1.0 } else { g.trapezoid_weight(n) };
            w * phi.data()[n].powi(2)
        })
        .sum();
    s * g.cell_volume() / (4.0 * epsilon * epsilon)
}

/// Discrete GL energy of the magnetization: exchange plus penalty.
pub fn gl_energy(m: &Field, epsilon: f64) -> f64 {
    0.5 * edge_gradient_sq(m) + penalty_energy(m, epsilon)
}

/// Energy record of the penalized system; `d_m` is `|lap m - eps^-2 phi m|^2`.
pub fn gl_energy_record(state: &State, physics: &Physics, epsilon: f64) -> EnergyRecord {
    let mut r = energetics::energy(state, physics);
    r.penalty = penalty_energy(&state.m, epsilon);
    r.total += r.penalty;
    let zero = state.u.zeros_like();
    let h = gl_rhs(&state.m, &zero, epsilon);
    let g = state.grid();
    let s: f64 = (0..g.node_count())
        .map(|n| {
            let w = if g.is_periodic() { 1.0 } else { g.trapezoid_weight(n) };
            w * h.node(n).iter().map(|v| v * v).sum::<f64>()
        })
        .sum();
    r.d_m = s * g.cell_volume();
    r
}

/// Relative discrepancy between `gl_rhs(m, 0, eps)` and minus the
/// finite-difference gradient of [`gl_energy`], over the listed entries.
///
/// Each entry `(node, comp)` is perturbed by `+-delta` and the central
/// difference is scaled by the nodal quadrature weight.
pub fn gl_gradient_check(m: &Field, epsilon: f64, entries: &[(usize, usize)], delta: f64) -> f64 {
    let g = *m.grid();
    let zero = Field::vector(&g, g.dim(), g.tag_for(crate::grid::FieldRole::Velocity));
    let rhs = gl_rhs(m, &zero, epsilon);
    let mut num = 0.0;
    let mut den = 0.0;
    let mut p = m.clone();
    for &(n, c) in entries {
        let v = m.get(n, c);
        p.set(n, c, v + delta);
        let ep = gl_energy(&p, epsilon);
        p.set(n, c, v - delta);
        let em = gl_energy(&p, epsilon);
        p.set(n, c, v);
        let w = if g.is_periodic() { 1.0 } else { g.trapezoid_weight(n) } * g.cell_volume();
        let fd = -(ep - em) / (2.0 * delta) / w;
        num += (fd - rhs.get(n, c)).powi(2);
        den += rhs.get(n, c).powi(2);
    }
    (num / den.max(f64::MIN_POSITIVE)).sqrt()
}

/// Integrates the penalized system at `cfg.epsilon`.
pub fn run_gl(cfg: &GLConfig, state0: &State) -> Result<Trajectory> {
    integrator::run(&cfg.penalized(cfg.epsilon), state0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DeviationRow {
    pub epsilon: f64,
    pub t: f64,
    /// `|m_eps - m|_2`.
    pub l2_dev: f64,
    /// `| |m_eps| - 1 |_inf`.
    pub linf_constraint: f64,
}

/// Deviation of a penalized trajectory from the constrained one at matching output times.
pub fn compare_constrained(gl_traj: &Trajectory, constrained: &Trajectory, epsilon: f64) -> Result<Vec<DeviationRow>> {
    if gl_traj.states.len() != constrained.states.len() {
        return Err(Error::Cadence(format!(
            "{} penalized states against {} constrained states",
            gl_traj.states.len(),
            constrained.states.len()
        )));
    }
    gl_traj
        .states
        .iter()
        .zip(&constrained.states)
        .map(|(a, b)| {
            if (a.t - b.t).abs() > 1e-9 * a.t.abs().max(1.0) {
                return Err(Error::Cadence(format!("output times {} and {} differ", a.t, b.t)));
            }
            let mut d = a.m.clone();
            d.check_compatible(&b.m)?;
            d.axpy(-1.0, &b.m);
            Ok(DeviationRow {
                epsilon,
                t: a.t,
                l2_dev: inner_product_l2(&d, &d)?.sqrt(),
                linf_constraint: sphere_deviation(&a.m),
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepReport {
    pub rows: Vec<DeviationRow>,
    /// `(epsilon, ||m_eps| - 1|_inf at the final time)` per sweep entry.
    pub final_constraint: Vec<(f64, f64)>,
    /// Final constraint deviation strictly decreases along the sweep.
    pub monotone: bool,
}

/// Runs the constrained reference and every sweep entry (concurrently) and compares them.
pub fn gl_sweep(cfg: &GLConfig, state0: &State) -> Result<SweepReport> {
    let eps: Vec<f64> = if cfg.sweep.is_empty() { vec![cfg.epsilon] } else { cfg.sweep.clone() };
    let mut reference_cfg = cfg.base.clone();
    reference_cfg.mode.constraint = ConstraintMode::Projected;
    reference_cfg.physics.epsilon = None;
    // the reference must share the step sizes of the penalized runs
    let base_dt = match (cfg.base.time.dt_policy, cfg.base.time.dt) {
        (crate::config::DtPolicy::Fixed, Some(dt)) => dt,
        _ => integrator::cfl_dt(state0, &reference_cfg),
    };
    let dt = eps.iter().fold(base_dt, |d, e| d.min(integrator::PENALTY_DT_FACTOR * e * e));
    reference_cfg.time.dt_policy = crate::config::DtPolicy::Fixed;
    reference_cfg.time.dt = Some(dt);
    let runs: Vec<Result<Trajectory>> = std::thread::scope(|s| {
        let handles: Vec<_> = eps
            .iter()
            .map(|&e| {
                let mut c = cfg.penalized(e);
                c.time.dt_policy = crate::config::DtPolicy::Fixed;
                c.time.dt = Some(dt);
                s.spawn(move || integrator::run(&c, state0))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("sweep worker panicked")).collect()
    });
    let reference = integrator::run(&reference_cfg, state0)?;
    let mut rows = Vec::new();
    let mut final_constraint = Vec::new();
    for (e, traj) in eps.iter().zip(runs) {
        let traj = traj?;
        let r = compare_constrained(&traj, &reference, *e)?;
        final_constraint.push((*e, r.last().map_or(0.0, |r| r.linf_constraint)));
        rows.extend(r);
    }
    let monotone = final_constraint.windows(2).all(|w| w[1].1 < w[0].1);
    Ok(SweepReport {
        rows,
        final_constraint,
        monotone,
    })
}
