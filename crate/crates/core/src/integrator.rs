//! IMEX time stepping of the coupled system.
//!
//! Each step advances `F` and `m` first, then the velocity, which sees the
//! stresses of the updated `F` and `m`, and finally projects the velocity onto
//! discretely solenoidal fields. Diffusion is implicit; transport, stretching,
//! the exchange nonlinearity and the stresses are explicit. The gyromagnetic
//! coefficient `alpha I - beta M(m)` is frozen at the old (or, for BDF2,
//! extrapolated) magnetization, so every implicit solve is linear.

use serde::Serialize;

use crate::config::{ConstraintMode, DtPolicy, Scheme, SimConfig};
use crate::energetics::{self, EnergyRecord};
use crate::error::{Error, Result};
use crate::field::{project_to_sphere_in_place, sphere_deviation, Field, State};
use crate::gl;
use crate::grid::{BcTag, Grid};
use crate::leray::{PoissonOptions, Projector};
use crate::linalg::{bicgstab, cg, LinearOperator, Preconditioner, SolverOptions};
use crate::ops::{self, Mat3, Physics};

/// Penalized runs need `dt <= PENALTY_DT_FACTOR * epsilon^2`.
pub const PENALTY_DT_FACTOR: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StepDiagnostics {
    pub step: usize,
    pub t: f64,
    pub dt: f64,
    pub scheme: Scheme,
    pub iters_f: usize,
    pub iters_m: usize,
    pub iters_u: usize,
    pub iters_p: usize,
    /// Max-norm of the discrete divergence of the new velocity.
    pub divergence: f64,
    /// Max nodal `||m| - 1|` of the new magnetization.
    pub constraint_drift: f64,
}

/// States at the output cadence plus per-step records.
#[derive(Clone, Debug, Default)]
pub struct Trajectory {
    pub states: Vec<State>,
    /// One record for the initial state and one per step.
    pub energies: Vec<EnergyRecord>,
    pub diagnostics: Vec<StepDiagnostics>,
}

impl Trajectory {
    pub fn final_state(&self) -> Option<&State> {
        self.states.last()
    }
}

/// Explicit terms of one time level, kept for the BDF2 extrapolation.
#[derive(Clone, Debug)]
struct History {
    state: State,
    nf: Field,
    nm: Field,
    nu: Field,
    dt: f64,
}

#[derive(Clone, Debug)]
pub struct Integrator {
    grid: Grid,
    physics: Physics,
    epsilon: Option<f64>,
    scheme: Scheme,
    constraint: ConstraintMode,
    dt_policy: DtPolicy,
    dt_fixed: Option<f64>,
    dt_max: f64,
    c_cfl: f64,
    opts: SolverOptions,
    projector: Projector,
    history: Option<History>,
}

/// `(I - c lap)` on one field, with identity rows on Dirichlet faces.
struct HelmholtzOp<'a> {
    template: &'a Field,
    c: f64,
}

impl LinearOperator for HelmholtzOp<'_> {
    fn len(&self) -> usize {
        self.template.data().len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let g = self.template.grid();
        let mut f = Field::from_vec(g, self.template.shape(), self.template.bc(), x.to_vec()).expect("shape");
        f.enforce_bc();
        let lap = ops::laplacian(&f);
        for ((y, v), l) in y.iter_mut().zip(f.data()).zip(lap.data()) {
            *y = v - self.c * l;
        }
        if self.template.bc() == BcTag::DirichletZero {
            let nc = self.template.ncomp();
            for n in (0..g.node_count()).filter(|&n| g.is_boundary(n)) {
                y[n * nc..(n + 1) * nc].copy_from_slice(&x[n * nc..(n + 1) * nc]);
            }
        }
    }
}

/// `(I - c C_i lap + c p_i)` on the magnetization, with nodal 3x3 coefficients `C_i`
/// and an optional nodal penalty `p_i`.
struct MagnetizationOp<'a> {
    template: &'a Field,
    coef: Vec<Mat3>,
    penalty: Option<Vec<f64>>,
    c: f64,
}

impl LinearOperator for MagnetizationOp<'_> {
    fn len(&self) -> usize {
        self.template.data().len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let g = self.template.grid();
        let f = Field::from_vec(g, [3, 1], self.template.bc(), x.to_vec()).expect("shape");
        let lap = ops::laplacian(&f);
        for n in 0..g.node_count() {
            let cl = ops::mat3_vec(&self.coef[n], lap.node_vec3(n));
            let p = self.penalty.as_ref().map_or(0.0, |p| p[n]);
            for k in 0..3 {
                y[3 * n + k] = x[3 * n + k] * (1.0 + self.c * p) - self.c * cl[k];
            }
        }
    }
}

/// Inverse nodal diagonal blocks of [`MagnetizationOp`].
struct BlockJacobi {
    inv: Vec<Mat3>,
}

impl BlockJacobi {
    fn new(op: &MagnetizationOp<'_>) -> Self {
        let g = op.template.grid();
        // diagonal entry of the compact Laplacian, identical at faces and interior
        let s: f64 = (0..g.dim()).map(|a| 2.0 / g.spacing(a).powi(2)).sum();
        let inv = (0..g.node_count())
            .map(|n| {
                let p = op.penalty.as_ref().map_or(0.0, |p| p[n]);
                let mut a = [[0.0; 3]; 3];
                for i in 0..3 {
                    for j in 0..3 {
                        a[i][j] = op.c * s * op.coef[n][i][j];
                    }
                    a[i][i] += 1.0 + op.c * p;
                }
                invert3(&a)
            })
            .collect();
        BlockJacobi { inv }
    }
}

impl Preconditioner for BlockJacobi {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        for (n, inv) in self.inv.iter().enumerate() {
            let v = ops::mat3_vec(inv, [r[3 * n], r[3 * n + 1], r[3 * n + 2]]);
            z[3 * n..3 * n + 3].copy_from_slice(&v);
        }
    }
}

fn invert3(a: &Mat3) -> Mat3 {
    let c = |i: usize, j: usize| {
        let (i1, i2) = ((i + 1) % 3, (i + 2) % 3);
        let (j1, j2) = ((j + 1) % 3, (j + 2) % 3);
        a[i1][j1] * a[i2][j2] - a[i1][j2] * a[i2][j1]
    };
    let det = a[0][0] * c(0, 0) + a[0][1] * c(0, 1) + a[0][2] * c(0, 2);
    let mut inv = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            inv[i][j] = c(j, i) / det;
        }
    }
    inv
}

/// Solves `A x = b` as a correction to the guess `x0`, so the solver
/// tolerance is relative to the size of the update.
fn solve_update<S>(a: &dyn LinearOperator, b: &[f64], x0: &[f64], solve: S) -> Result<(Vec<f64>, usize)>
where
    S: FnOnce(&dyn LinearOperator, &[f64], &mut [f64]) -> Result<usize>,
{
    let mut r = vec![0.0; b.len()];
    a.apply(x0, &mut r);
    for (r, b) in r.iter_mut().zip(b) {
        *r = b - *r;
    }
    let mut dx = vec![0.0; b.len()];
    let iters = solve(a, &r, &mut dx)?;
    Ok((x0.iter().zip(&dx).map(|(x, d)| x + d).collect(), iters))
}

impl Integrator {
    pub fn from_config(cfg: &SimConfig) -> Result<Self> {
        cfg.validate()?;
        let grid = cfg.make_grid()?;
        let opts = SolverOptions {
            tol: cfg.time.solver_tol,
            max_iter: 10 * grid.node_count() * 9,
        };
        let projector = Projector::new(
            &grid,
            PoissonOptions {
                tol: cfg.time.solver_tol,
                max_iter: None,
            },
        );
        Ok(Integrator {
            grid,
            physics: cfg.physics(),
            epsilon: cfg.physics.epsilon,
            scheme: cfg.time.scheme,
            constraint: cfg.mode.constraint,
            dt_policy: cfg.time.dt_policy,
            dt_fixed: cfg.time.dt,
            dt_max: cfg.time.dt_max,
            c_cfl: cfg.time.c_cfl,
            opts,
            projector,
            history: None,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn physics(&self) -> &Physics {
        &self.physics
    }

    pub fn projector(&self) -> &Projector {
        &self.projector
    }

    fn epsilon(&self) -> Result<f64> {
        self.epsilon
            .ok_or_else(|| Error::Config("epsilon is required in penalized mode".into()))
    }

    /// Step size for the next step from the configured policy.
    pub fn next_dt(&self, state: &State) -> f64 {
        let mut dt = match self.dt_policy {
            DtPolicy::Fixed => self.dt_fixed.unwrap_or(self.dt_max),
            DtPolicy::Cfl => cfl_bound(state, self.c_cfl, self.dt_max),
        };
        if let (ConstraintMode::Penalized, Some(e), DtPolicy::Cfl) = (self.constraint, self.epsilon, self.dt_policy) {
            dt = dt.min(PENALTY_DT_FACTOR * e * e);
        }
        dt
    }

    /// Energy record appropriate to the constraint mode.
    pub fn record(&self, state: &State) -> EnergyRecord {
        match (self.constraint, self.epsilon) {
            (ConstraintMode::Penalized, Some(e)) => gl::gl_energy_record(state, &self.physics, e),
            _ => energetics::energy(state, &self.physics),
        }
    }

    /// Forgets the BDF2 history; the next step is an IMEX-Euler step.
    pub fn reset(&mut self) {
        self.history = None;
    }

    fn check_dt(&self, state: &State, dt: f64) -> Result<()> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {dt}")));
        }
        let umax = state.u.max_node_norm();
        if umax > 0.0 {
            let bound = self.grid.min_spacing() / umax;
            if dt > bound {
                return Err(Error::CflViolation { dt, bound });
            }
        }
        if self.constraint == ConstraintMode::Penalized {
            let e = self.epsilon()?;
            let cap = PENALTY_DT_FACTOR * e * e;
            if dt > cap * (1.0 + 1e-12) {
                return Err(Error::PenaltyStiffness { dt, cap });
            }
        }
        Ok(())
    }

    fn explicit_terms(&self, s: &State) -> (Field, Field, Field) {
        let mut nf = ops::stretch(&s.u, &s.f);
        nf.axpy(-1.0, &ops::advect(&s.u, &s.f));
        nf.enforce_bc();
        let mut nm = ops::advect(&s.u, &s.m);
        nm.scale(-1.0);
        if self.constraint != ConstraintMode::Penalized {
            let gsq = ops::grad_sq(&s.m);
            for n in 0..self.grid.node_count() {
                let g = self.physics.alpha * gsq.data()[n];
                let mn = s.m.node_vec3(n);
                let o = nm.node_mut(n);
                for k in 0..3 {
                    o[k] += g * mn[k];
                }
            }
        }
        let nm = nm.with_bc(s.m.bc());
        let mut nu = ops::advect(&s.u, &s.u);
        nu.scale(-1.0);
        let mut nu = nu.with_bc(s.u.bc());
        nu.enforce_bc();
        (nf, nm, nu)
    }

    /// Advances `state` by `dt`. Uses BDF2 when configured and the previous
    /// step had the same `dt`, IMEX-Euler otherwise.
    pub fn step(&mut self, state: &State, dt: f64) -> Result<(State, StepDiagnostics)> {
        state.validate()?;
        if state.grid() != &self.grid {
            return Err(Error::GridMismatch);
        }
        self.check_dt(state, dt)?;
        let (nf, nm, nu) = self.explicit_terms(state);
        let hist = match (self.scheme, &self.history) {
            (Scheme::ImexBdf2, Some(h)) if (h.dt - dt).abs() <= 1e-12 * dt => Some(h),
            _ => None,
        };
        let scheme = if hist.is_some() { Scheme::ImexBdf2 } else { Scheme::ImexEuler };

        // combination helpers: level value and explicit term
        let combine = |cur: &Field, prev: Option<&Field>| -> Field {
            match prev {
                Some(p) => {
                    let mut out = cur.clone();
                    out.scale(4.0 / 3.0);
                    out.axpy(-1.0 / 3.0, p);
                    out
                }
                None => cur.clone(),
            }
        };
        let extrapolate = |cur: &Field, prev: Option<&Field>| -> Field {
            match prev {
                Some(p) => {
                    let mut out = cur.clone();
                    out.scale(2.0);
                    out.axpy(-1.0, p);
                    out
                }
                None => cur.clone(),
            }
        };
        let c = if hist.is_some() { 2.0 * dt / 3.0 } else { dt };
        let prev = hist.map(|h| &h.state);

        // (1) deformation
        let mut rhs_f = combine(&state.f, prev.map(|p| &p.f));
        rhs_f.axpy(c, &extrapolate(&nf, hist.map(|h| &h.nf)));
        rhs_f.enforce_bc();
        let op_f = HelmholtzOp {
            template: &state.f,
            c: c * self.physics.kappa,
        };
        let (f_new, iters_f) = solve_update(&op_f, rhs_f.data(), state.f.data(), |a, b, x| {
            cg(a, b, x, None, self.opts).map(|s| s.iterations)
        })?;
        let f_new = Field::from_vec(&self.grid, state.f.shape(), state.f.bc(), f_new)?;

        // (2) magnetization
        let m_frozen = extrapolate(&state.m, prev.map(|p| &p.m));
        let mut rhs_m = combine(&state.m, prev.map(|p| &p.m));
        rhs_m.axpy(c, &extrapolate(&nm, hist.map(|h| &h.nm)));
        let (coef, penalty) = match self.constraint {
            ConstraintMode::Penalized => {
                let e = self.epsilon()?;
                let phi = energetics::constraint_field(&m_frozen);
                let ident = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
                (vec![ident; self.grid.node_count()], Some(phi.data().iter().map(|p| p / (e * e)).collect()))
            }
            _ => {
                let (a, b) = (self.physics.alpha, self.physics.beta);
                let coef = (0..self.grid.node_count())
                    .map(|n| {
                        let mut k = ops::cross_matrix(m_frozen.node_vec3(n));
                        for (i, row) in k.iter_mut().enumerate() {
                            for v in row.iter_mut() {
                                *v *= -b;
                            }
                            row[i] += a;
                        }
                        k
                    })
                    .collect();
                (coef, None)
            }
        };
        let op_m = MagnetizationOp {
            template: &state.m,
            coef,
            penalty,
            c,
        };
        let pre = BlockJacobi::new(&op_m);
        let (m_new, iters_m) = solve_update(&op_m, rhs_m.data(), state.m.data(), |a, b, x| {
            bicgstab(a, &pre, b, x, self.opts).map(|s| s.iterations)
        })?;
        let mut m_new = Field::from_vec(&self.grid, [3, 1], state.m.bc(), m_new)?;
        if self.constraint == ConstraintMode::Projected {
            project_to_sphere_in_place(&mut m_new)?;
        }

        // (3) provisional velocity
        let mut rhs_u = combine(&state.u, prev.map(|p| &p.u));
        let mut force = extrapolate(&nu, hist.map(|h| &h.nu));
        force.axpy(-1.0, &ops::magnetic_stress_div(&m_new));
        force.axpy(1.0, &ops::elastic_stress_div(&f_new));
        if hist.is_some() {
            force.axpy(-1.0, &self.projector.gradient(&state.pi));
        }
        rhs_u.axpy(c, &force);
        rhs_u.enforce_bc();
        let op_u = HelmholtzOp {
            template: &state.u,
            c: c * self.physics.mu_s,
        };
        let (u_star, iters_u) = solve_update(&op_u, rhs_u.data(), state.u.data(), |a, b, x| {
            cg(a, b, x, None, self.opts).map(|s| s.iterations)
        })?;
        let u_star = Field::from_vec(&self.grid, state.u.shape(), state.u.bc(), u_star)?;

        // (4) projection and pressure
        let (u_new, pi_new, iters_p) = if hist.is_some() {
            let pr = self.projector.helmholtz_project(&u_star)?;
            let mut pi = state.pi.clone();
            pi.axpy(1.0 / c, &pr.psi);
            (pr.sigma, pi, pr.stats.iterations)
        } else {
            let mut guess = state.pi.clone();
            guess.scale(dt);
            let pr = self.projector.project_with_guess(&u_star, Some(&guess))?;
            let mut pi = pr.psi;
            pi.scale(1.0 / dt);
            (pr.sigma, pi, pr.stats.iterations)
        };

        let new = State {
            t: state.t + dt,
            u: u_new,
            f: f_new,
            m: m_new,
            pi: pi_new,
        };
        let diag = StepDiagnostics {
            step: 0,
            t: new.t,
            dt,
            scheme,
            iters_f,
            iters_m,
            iters_u,
            iters_p,
            divergence: self.projector.divergence(&new.u).linf(),
            constraint_drift: sphere_deviation(&new.m),
        };
        self.history = Some(History {
            state: state.clone(),
            nf,
            nm,
            nu,
            dt,
        });
        Ok((new, diag))
    }
}

/// `min(dt_max, c_cfl h / |u|_inf)`; `dt_max` when `u` vanishes.
pub fn cfl_bound(state: &State, c_cfl: f64, dt_max: f64) -> f64 {
    let umax = state.u.max_node_norm();
    if umax == 0.0 {
        return dt_max;
    }
    (c_cfl * state.grid().min_spacing() / umax).min(dt_max)
}

/// CFL step size for `state` under `cfg`, including the penalty cap in penalized mode.
pub fn cfl_dt(state: &State, cfg: &SimConfig) -> f64 {
    let mut dt = cfl_bound(state, cfg.time.c_cfl, cfg.time.dt_max);
    if let (ConstraintMode::Penalized, Some(e)) = (cfg.mode.constraint, cfg.physics.epsilon) {
        dt = dt.min(PENALTY_DT_FACTOR * e * e);
    }
    dt
}

/// Checks the preconditions of [`run`] on the initial state.
pub fn check_initial(state: &State, cfg: &SimConfig) -> Result<()> {
    state.validate()?;
    if cfg.mode.constraint != ConstraintMode::Penalized {
        let dev = sphere_deviation(&state.m);
        if dev > 1e-10 {
            return Err(Error::Config(format!(
                "initial magnetization deviates from the unit sphere by {dev:.3e} in a constrained mode"
            )));
        }
    }
    let g = state.grid();
    let nonzero_face = |f: &Field| (0..g.node_count()).filter(|&n| g.is_boundary(n)).any(|n| f.node(n).iter().any(|v| *v != 0.0));
    if nonzero_face(&state.u) || nonzero_face(&state.f) {
        return Err(Error::Config("initial velocity and deformation must vanish on the boundary".into()));
    }
    Ok(())
}

/// Integrates `state0` to `t_end`, recording energy every step and keeping
/// states every `cadence` steps (and at the end).
pub fn run(cfg: &SimConfig, state0: &State) -> Result<Trajectory> {
    let mut integ = Integrator::from_config(cfg)?;
    check_initial(state0, cfg)?;
    let t_end = cfg.time.t_end;
    let cadence = cfg.output.cadence;
    let mut traj = Trajectory {
        states: vec![state0.clone()],
        energies: vec![integ.record(state0)],
        diagnostics: Vec::new(),
    };
    let mut state = state0.clone();
    let mut k = 0;
    while state.t < t_end * (1.0 - 1e-12) {
        let mut dt = integ.next_dt(&state);
        let remaining = t_end - state.t;
        if dt >= remaining * (1.0 - 1e-9) {
            dt = remaining;
        }
        let (next, mut diag) = integ.step(&state, dt).map_err(|e| Error::Step {
            step: k + 1,
            t: state.t,
            source: Box::new(e),
        })?;
        k += 1;
        diag.step = k;
        traj.diagnostics.push(diag);
        traj.energies.push(integ.record(&next));
        state = next;
        if k % cadence == 0 {
            traj.states.push(state.clone());
        }
    }
    if k % cadence != 0 {
        traj.states.push(state);
    }
    energetics::fill_energy_rates(&mut traj.energies);
    Ok(traj)
}
