//! Linearization about equilibria `(0, 0, m*)`, its spectrum and kernel, and
//! exponential decay fits of trajectories.
//!
//! At an equilibrium all coupling terms vanish, so the generator is block
//! diagonal: `mu_s P lap_D` on solenoidal velocities, `kappa lap_D` on each
//! deformation component and `(alpha I - beta M(m*)) lap_N` on the
//! magnetization. The velocity block is represented in an orthonormal basis
//! of the discretely solenoidal subspace; there it is symmetric negative
//! definite and carries no spurious zero modes from the gradient part.

use faer::{Mat, Side};
use serde::Serialize;

use crate::energetics::constraint_field;
use crate::error::{Error, Result};
use crate::field::{inner_product_l2, Field, State};
use crate::grid::{BcTag, FieldRole, Grid};
use crate::integrator::Trajectory;
use crate::leray::{PoissonOptions, Projector};
use crate::linalg::DisjointSets;
use crate::ops::{self, Mat3, Physics};

pub const DOF_BUDGET: usize = 10_000;
pub const ZERO_TOL: f64 = 1e-8;
pub const RANK_RTOL: f64 = 1e-8;
pub const MIN_RANK_GAP: f64 = 1e2;

/// Compressed sparse rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Csr {
    pub n: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl Csr {
    /// Builds from `(row, col, value)` triplets, summing duplicates.
    pub fn from_triplets(n: usize, mut t: Vec<(usize, usize, f64)>) -> Self {
        t.sort_by_key(|&(i, j, _)| (i, j));
        let mut indptr = vec![0; n + 1];
        let mut indices: Vec<usize> = Vec::with_capacity(t.len());
        let mut values: Vec<f64> = Vec::with_capacity(t.len());
        let mut last = None;
        for (i, j, v) in t {
            if last == Some((i, j)) {
                *values.last_mut().expect("entry") += v;
                continue;
            }
            last = Some((i, j));
            indices.push(j);
            values.push(v);
            indptr[i + 1] = indices.len();
        }
        for i in 0..n {
            indptr[i + 1] = indptr[i + 1].max(indptr[i]);
        }
        Csr { n, indptr, indices, values }
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.indptr[i]..self.indptr[i + 1]).map(move |k| (self.indices[k], self.values[k]))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).filter(|&(c, _)| c == j).map(|(_, v)| v).sum()
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.n).all(|i| self.row(i).all(|(j, v)| (v - self.get(j, i)).abs() <= tol * v.abs().max(1.0)))
    }

    /// Connected components of the symmetrized sparsity graph.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut sets = DisjointSets::new(self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                if v != 0.0 {
                    sets.union(i, j);
                }
            }
        }
        let (labels, count) = sets.labels();
        let mut comps = vec![Vec::new(); count];
        for (i, l) in labels.into_iter().enumerate() {
            comps[l].push(i);
        }
        comps
    }

    /// Dense principal submatrix on `idx`.
    pub fn dense_block(&self, idx: &[usize]) -> Mat<f64> {
        let mut pos = vec![usize::MAX; self.n];
        for (k, &i) in idx.iter().enumerate() {
            pos[i] = k;
        }
        let mut m = Mat::<f64>::zeros(idx.len(), idx.len());
        for (k, &i) in idx.iter().enumerate() {
            for (j, v) in self.row(i) {
                if pos[j] != usize::MAX {
                    m[(k, pos[j])] += v;
                }
            }
        }
        m
    }

    pub fn to_dense(&self) -> Mat<f64> {
        self.dense_block(&(0..self.n).collect::<Vec<_>>())
    }
}

/// Compact Laplacian of a scalar field with tag `bc`, restricted to active nodes.
fn laplacian_csr(grid: &Grid, bc: BcTag, active: &[usize]) -> Csr {
    let mut pos = vec![usize::MAX; grid.node_count()];
    for (k, &n) in active.iter().enumerate() {
        pos[n] = k;
    }
    let mut t = Vec::new();
    // probe the stencil with unit vectors on a small support: the Laplacian is local,
    // so one application per node recovers its column
    let mut f = Field::scalar(grid, bc);
    for (col, &n) in active.iter().enumerate() {
        f.data_mut()[n] = 1.0;
        let l = ops::laplacian(&f);
        f.data_mut()[n] = 0.0;
        let ijk = grid.multi_index(n);
        for k in neighbourhood(grid, ijk) {
            let v = l.data()[k];
            if v != 0.0 && pos[k] != usize::MAX {
                t.push((pos[k], col, v));
            }
        }
    }
    Csr::from_triplets(active.len(), t)
}

/// Nodes within distance two of `ijk` (the reach of every compact stencil closure).
fn neighbourhood(grid: &Grid, ijk: [usize; 3]) -> Vec<usize> {
    let s = grid.shape();
    let mut out = Vec::new();
    let range = |a: usize| -> Vec<usize> {
        if s[a] == 1 {
            return vec![0];
        }
        (-2i64..=2)
            .map(|d| (ijk[a] as i64 + d).rem_euclid(s[a] as i64) as usize)
            .collect()
    };
    for i in range(0) {
        for j in range(1) {
            for k in range(2) {
                out.push(grid.index([i, j, k]));
            }
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}

/// `alpha I - beta M(m*)`, the nodal coefficient of the generator's magnetization block.
pub fn nodal_coefficient(m_star: [f64; 3], physics: &Physics) -> Mat3 {
    let mut c = ops::cross_matrix(m_star);
    for (i, row) in c.iter_mut().enumerate() {
        for v in row.iter_mut() {
            *v *= -physics.beta;
        }
        row[i] += physics.alpha;
    }
    c
}

/// The generator `-A_*` about `(0, 0, m*)`, assembled block by block.
#[derive(Clone, Debug)]
pub struct LinearizedOperator {
    pub grid: Grid,
    pub m_star: [f64; 3],
    pub physics: Physics,
    /// Velocity unknown nodes (interior, or all when periodic); `dim` unknowns each.
    pub u_nodes: Vec<usize>,
    /// Orthonormal basis of discretely solenoidal velocities, `n_u x n_sigma`.
    pub u_basis: Mat<f64>,
    /// `mu_s Q^T lap_D Q`.
    pub u_block: Mat<f64>,
    /// `kappa lap_D`, acting on each of the `dim^2` deformation components.
    pub f_block: Csr,
    /// `(alpha I - beta M(m*)) lap_N` on all nodes, three unknowns per node.
    pub m_block: Csr,
    /// Max-norm of the stress coupling `B(m*) h` over probe fields `h`.
    pub coupling_norm: f64,
}

impl LinearizedOperator {
    pub fn dofs(&self) -> usize {
        self.u_basis.nrows() + self.f_block.n + self.m_block.n
    }

    /// `P lap_D` in full velocity coordinates, `mu_s Q (Q^T lap Q) Q^T`.
    pub fn projected_velocity_block(&self) -> Mat<f64> {
        let q = &self.u_basis;
        q * &self.u_block * q.transpose()
    }
}

/// Assembles the linearization about `(0, 0, m*)` on `grid`.
pub fn assemble_linearization(grid: &Grid, m_star: [f64; 3], physics: &Physics) -> Result<LinearizedOperator> {
    let norm = m_star.iter().map(|v| v * v).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-10 {
        return Err(Error::Config(format!("equilibrium magnetization must be a unit vector, has norm {norm}")));
    }
    let d = grid.dim();
    let nn = grid.node_count();
    let u_nodes: Vec<usize> = (0..nn).filter(|&n| grid.is_periodic() || !grid.is_boundary(n)).collect();
    let n_u = u_nodes.len() * d;
    let n_f = u_nodes.len() * d * d;
    let n_m = 3 * nn;
    let dofs = n_u + n_f + n_m;
    if dofs > DOF_BUDGET {
        return Err(Error::DofBudget {
            dofs,
            budget: DOF_BUDGET,
        });
    }

    let dir = grid.tag_for(FieldRole::Velocity);
    let neu = grid.tag_for(FieldRole::Magnetization);
    let lap_d = laplacian_csr(grid, dir, &u_nodes);
    let all: Vec<usize> = (0..nn).collect();
    let lap_n = laplacian_csr(grid, neu, &all);

    // velocity: gradient matrix of the projection, then the kernel of its transpose
    let projector = Projector::new(grid, PoissonOptions::default());
    let mut gmat = Mat::<f64>::zeros(n_u, nn);
    let mut psi = Field::for_role(grid, FieldRole::Pressure);
    for p in 0..nn {
        psi.data_mut()[p] = 1.0;
        let gp = projector.gradient(&psi);
        psi.data_mut()[p] = 0.0;
        let ijk = grid.multi_index(p);
        for n in neighbourhood(grid, ijk) {
            for k in 0..d {
                let v = gp.get(n, k);
                if v != 0.0 {
                    let row = u_nodes.binary_search(&n).expect("gradient lives on velocity nodes");
                    gmat[(row * d + k, p)] = v;
                }
            }
        }
    }
    let svd = gmat.svd().map_err(|e| Error::Eigensolver(format!("{e:?}")))?;
    let s: Vec<f64> = svd.S().column_vector().iter().copied().collect();
    let smax = s.first().copied().unwrap_or(0.0);
    let rank = s.iter().filter(|&&v| v > RANK_RTOL * smax).count();
    let n_sigma = n_u - rank;
    let u_full = svd.U();
    let q = Mat::<f64>::from_fn(n_u, n_sigma, |i, j| u_full[(i, rank + j)]);
    // scalar Dirichlet Laplacian acting componentwise on velocities
    let qt_lap_q = {
        let mut lq = Mat::<f64>::zeros(n_u, n_sigma);
        for j in 0..n_sigma {
            for r in 0..u_nodes.len() {
                for (c, v) in lap_d.row(r) {
                    for k in 0..d {
                        lq[(r * d + k, j)] += v * q[(c * d + k, j)];
                    }
                }
            }
        }
        let mut b = q.transpose() * &lq;
        for i in 0..n_sigma {
            for j in 0..i {
                let avg = 0.5 * (b[(i, j)] + b[(j, i)]);
                b[(i, j)] = avg;
                b[(j, i)] = avg;
            }
        }
        b * physics.mu_s
    };

    // deformation: kappa lap_D per component
    let mut tf = Vec::with_capacity(lap_d.nnz() * d * d);
    let dd = d * d;
    for r in 0..u_nodes.len() {
        for (c, v) in lap_d.row(r) {
            for k in 0..dd {
                tf.push((r * dd + k, c * dd + k, physics.kappa * v));
            }
        }
    }
    let f_block = Csr::from_triplets(n_f, tf);

    // magnetization: C lap_N with the 3x3 nodal coefficient C
    let coef = nodal_coefficient(m_star, physics);
    let mut tm = Vec::with_capacity(lap_n.nnz() * 9);
    for r in 0..nn {
        for (c, v) in lap_n.row(r) {
            for i in 0..3 {
                for j in 0..3 {
                    if coef[i][j] != 0.0 {
                        tm.push((3 * r + i, 3 * c + j, coef[i][j] * v));
                    }
                }
            }
        }
    }
    let m_block = Csr::from_triplets(n_m, tm);

    // coupling: the stress operator B(m*) h must vanish for every h
    let mstar_field = State::equilibrium(grid, m_star).m;
    let mut coupling_norm: f64 = 0.0;
    for probe in 0..3 {
        let h = crate::field::sample(grid, FieldRole::Magnetization, |x, v| {
            let p = probe as f64 + 1.0;
            v.copy_from_slice(&[(p * x[0]).sin() + x[1], (p * x[1]).cos() * x[0], (p * (x[0] + x[1] + x[2])).sin()]);
        });
        coupling_norm = coupling_norm.max(ops::b_operator(&mstar_field, &h).linf());
    }

    Ok(LinearizedOperator {
        grid: *grid,
        m_star,
        physics: *physics,
        u_nodes,
        u_basis: q,
        u_block: qt_lap_q,
        f_block,
        m_block,
        coupling_norm,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Eigenvalue {
    pub re: f64,
    pub im: f64,
}

impl Eigenvalue {
    pub fn abs(&self) -> f64 {
        self.re.hypot(self.im)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SemisimplicityReport {
    pub dim_kernel: usize,
    pub dim_kernel_sq: usize,
    /// Smallest retained over largest discarded singular value, for `A` and `A^2`.
    pub gap: f64,
    pub gap_sq: f64,
    pub semisimple: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpectrumReport {
    pub dim: usize,
    pub extents: Vec<usize>,
    pub m_star: [f64; 3],
    pub physics: Physics,
    pub seed: Option<u64>,
    pub dofs: usize,
    /// Generator eigenvalues sorted by real part, ascending.
    pub eigenvalues: Vec<Eigenvalue>,
    pub zero_tol: f64,
    pub near_zero_count: usize,
    pub max_real: f64,
    pub min_real: f64,
    /// `min(-Re lambda)` over eigenvalues with `|lambda| > zero_tol`.
    pub spectral_gap: f64,
    pub kernel: SemisimplicityReport,
    /// Largest principal angle between the computed kernel and the constant magnetizations.
    pub kernel_angle: f64,
    pub coupling_norm: f64,
}

/// Per-block dense pieces: each is a connected component of a sparse block.
fn sparse_components(a: &Csr) -> Vec<(Vec<usize>, Mat<f64>, bool)> {
    a.components()
        .into_iter()
        .map(|idx| {
            let m = a.dense_block(&idx);
            let sym = is_symmetric(&m);
            (idx, m, sym)
        })
        .collect()
}

fn is_symmetric(m: &Mat<f64>) -> bool {
    let n = m.nrows();
    (0..n).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= 1e-14 * (m[(i, j)].abs().max(1.0))))
}

fn eigenvalues_of(m: &Mat<f64>, symmetric: bool) -> Result<Vec<Eigenvalue>> {
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    if symmetric {
        let ev = m.self_adjoint_eigenvalues(Side::Lower).map_err(|e| Error::Eigensolver(format!("{e:?}")))?;
        Ok(ev.into_iter().map(|re| Eigenvalue { re, im: 0.0 }).collect())
    } else {
        let ev = m.eigenvalues().map_err(|e| Error::Eigensolver(format!("{e:?}")))?;
        Ok(ev.into_iter().map(|z| Eigenvalue { re: z.re, im: z.im }).collect())
    }
}

fn singular_values_of(m: &Mat<f64>) -> Result<Vec<f64>> {
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    m.singular_values().map_err(|e| Error::Eigensolver(format!("{e:?}")))
}

/// Numerical kernel dimension and gap from a list of singular values.
fn kernel_from_singular_values(mut s: Vec<f64>) -> (usize, f64) {
    s.sort_by(|a, b| b.total_cmp(a));
    let smax = s.first().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return (s.len(), f64::INFINITY);
    }
    let thr = RANK_RTOL * smax;
    let rank = s.iter().filter(|&&v| v > thr).count();
    let gap = match (rank.checked_sub(1).map(|r| s[r]), s.get(rank)) {
        (Some(kept), Some(&dropped)) if dropped > 0.0 => kept / dropped,
        _ => f64::INFINITY,
    };
    (s.len() - rank, gap)
}

/// Kernel dimensions of a dense matrix and of its square.
pub fn semisimplicity_dense(a: &Mat<f64>) -> Result<SemisimplicityReport> {
    let (dim_kernel, gap) = kernel_from_singular_values(singular_values_of(a)?);
    let a2 = a * a;
    let (dim_kernel_sq, gap_sq) = kernel_from_singular_values(singular_values_of(&a2)?);
    Ok(SemisimplicityReport {
        dim_kernel,
        dim_kernel_sq,
        gap,
        gap_sq,
        semisimple: dim_kernel == dim_kernel_sq && gap >= MIN_RANK_GAP && gap_sq >= MIN_RANK_GAP,
    })
}

/// Kernel dimensions of the generator and its square over all blocks.
pub fn semisimplicity_check(op: &LinearizedOperator) -> Result<SemisimplicityReport> {
    let mut s1 = singular_values_of(&op.u_block)?;
    let mut s2 = singular_values_of(&(&op.u_block * &op.u_block))?;
    for block in [&op.f_block, &op.m_block] {
        for (_, m, _) in sparse_components(block) {
            s1.extend(singular_values_of(&m)?);
            s2.extend(singular_values_of(&(&m * &m))?);
        }
    }
    let (dim_kernel, gap) = kernel_from_singular_values(s1);
    let (dim_kernel_sq, gap_sq) = kernel_from_singular_values(s2);
    Ok(SemisimplicityReport {
        dim_kernel,
        dim_kernel_sq,
        gap,
        gap_sq,
        semisimple: dim_kernel == dim_kernel_sq && gap >= MIN_RANK_GAP && gap_sq >= MIN_RANK_GAP,
    })
}

/// Largest principal angle between the numerical kernel of the magnetization block
/// and the span of the three constant magnetizations.
fn kernel_angle(m_block: &Csr) -> Result<f64> {
    let a = m_block.to_dense();
    let n = a.nrows();
    let svd = a.svd().map_err(|e| Error::Eigensolver(format!("{e:?}")))?;
    let s: Vec<f64> = svd.S().column_vector().iter().copied().collect();
    let smax = s.first().copied().unwrap_or(0.0);
    let rank = s.iter().filter(|&&v| v > RANK_RTOL * smax).count();
    let k = n - rank;
    if k != 3 {
        return Ok(std::f64::consts::FRAC_PI_2);
    }
    let v = svd.V();
    let nodes = n / 3;
    let c = 1.0 / (nodes as f64).sqrt();
    // residual of the kernel basis after removing its constant-mode component
    let mut r = Mat::<f64>::zeros(n, k);
    for j in 0..k {
        let mut proj = [0.0; 3];
        for i in 0..n {
            proj[i % 3] += v[(i, rank + j)] * c;
        }
        for i in 0..n {
            r[(i, j)] = v[(i, rank + j)] - proj[i % 3] * c;
        }
    }
    let sr = singular_values_of(&r)?;
    Ok(sr.first().copied().unwrap_or(0.0).min(1.0).asin())
}

/// Full generator spectrum, kernel diagnostics and spectral gap.
pub fn spectrum(op: &LinearizedOperator, seed: Option<u64>) -> Result<SpectrumReport> {
    let mut ev = eigenvalues_of(&op.u_block, true)?;
    for block in [&op.f_block, &op.m_block] {
        for (_, m, sym) in sparse_components(block) {
            ev.extend(eigenvalues_of(&m, sym)?);
        }
    }
    ev.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    let near_zero_count = ev.iter().filter(|e| e.abs() <= ZERO_TOL).count();
    let max_real = ev.iter().map(|e| e.re).fold(f64::NEG_INFINITY, f64::max);
    let min_real = ev.iter().map(|e| e.re).fold(f64::INFINITY, f64::min);
    let spectral_gap = ev
        .iter()
        .filter(|e| e.abs() > ZERO_TOL)
        .map(|e| -e.re)
        .fold(f64::INFINITY, f64::min);
    let kernel = semisimplicity_check(op)?;
    let kernel_angle = kernel_angle(&op.m_block)?;
    Ok(SpectrumReport {
        dim: op.grid.dim(),
        extents: op.grid.extents().to_vec(),
        m_star: op.m_star,
        physics: op.physics,
        seed,
        dofs: op.dofs(),
        eigenvalues: ev,
        zero_tol: ZERO_TOL,
        near_zero_count,
        max_real,
        min_real,
        spectral_gap,
        kernel,
        kernel_angle,
        coupling_norm: op.coupling_norm,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EquilibriumEstimate {
    pub m_star: [f64; 3],
    /// `|u|_2 + |F|_2 + |m - m_star|_2`.
    pub distance: f64,
    pub within_tol: bool,
}

/// Nearest equilibrium `(0, 0, mean(m)/|mean(m)|)` and the distance to it.
pub fn detect_equilibrium(state: &State, tol: f64) -> Result<EquilibriumEstimate> {
    let mean = state.m.mean();
    let norm = mean.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm > 1e-8) {
        return Err(Error::NoEquilibrium(norm));
    }
    let m_star = [mean[0] / norm, mean[1] / norm, mean[2] / norm];
    let mut dm = state.m.clone();
    for n in 0..state.grid().node_count() {
        let v = dm.node_mut(n);
        for k in 0..3 {
            v[k] -= m_star[k];
        }
    }
    let distance = state.u.norm_l2() + state.f.norm_l2() + inner_product_l2(&dm, &dm)?.max(0.0).sqrt();
    Ok(EquilibriumEstimate {
        m_star,
        distance,
        within_tol: distance <= tol,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DecayFit {
    /// Slope of `ln(distance)` against time.
    pub rate: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
    pub t_first: f64,
    pub t_last: f64,
    pub decaying: bool,
}

/// Lower cut-off for fitted distances.
pub const DISTANCE_FLOOR: f64 = 10.0 * f64::EPSILON;

/// Least-squares fit of `ln d = intercept + rate t` over samples with
/// `t >= t_start` and `d > floor`; the window ends at the first sample below the floor.
pub fn fit_decay_series(t: &[f64], d: &[f64], t_start: f64, floor: f64) -> Result<DecayFit> {
    let floor = floor.max(DISTANCE_FLOOR);
    let pts: Vec<(f64, f64)> = t
        .iter()
        .zip(d)
        .filter(|(t, _)| **t >= t_start)
        .take_while(|(_, d)| **d > floor)
        .map(|(t, d)| (*t, d.ln()))
        .collect();
    if pts.len() < 20 {
        return Err(Error::TooFewRecords {
            needed: 20,
            have: pts.len(),
        });
    }
    let n = pts.len() as f64;
    let (mt, my) = pts.iter().fold((0.0, 0.0), |(a, b), (t, y)| (a + t / n, b + y / n));
    let (sxx, sxy, syy) = pts.iter().fold((0.0, 0.0, 0.0), |(xx, xy, yy), (t, y)| {
        (xx + (t - mt).powi(2), xy + (t - mt) * (y - my), yy + (y - my).powi(2))
    });
    let rate = sxy / sxx;
    let intercept = my - rate * mt;
    let ss_res: f64 = pts.iter().map(|(t, y)| (y - intercept - rate * t).powi(2)).sum();
    let r_squared = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    Ok(DecayFit {
        rate,
        intercept,
        r_squared,
        points: pts.len(),
        t_first: pts[0].0,
        t_last: pts[pts.len() - 1].0,
        decaying: rate < -1e-12,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayReport {
    pub fit: DecayFit,
    pub times: Vec<f64>,
    pub distances: Vec<f64>,
    pub final_distance: f64,
    /// Mean of the final magnetization.
    pub m_inf: [f64; 3],
    /// `||m_inf| - 1|`.
    pub m_inf_deviation: f64,
    /// Largest nodal `||m| - 1|` of the final state.
    pub final_constraint: f64,
}

/// Fits the decay of the distance to the nearest equilibrium along `traj`.
pub fn fit_decay_rate(traj: &Trajectory, t_start: f64, floor: f64) -> Result<DecayReport> {
    let mut times = Vec::with_capacity(traj.states.len());
    let mut distances = Vec::with_capacity(traj.states.len());
    for s in &traj.states {
        times.push(s.t);
        distances.push(detect_equilibrium(s, 0.0)?.distance);
    }
    let fit = fit_decay_series(&times, &distances, t_start, floor)?;
    let last = traj
        .states
        .last()
        .ok_or(Error::TooFewRecords { needed: 1, have: 0 })?;
    let mean = last.m.mean();
    let m_inf = [mean[0], mean[1], mean[2]];
    let m_inf_deviation = (m_inf.iter().map(|v| v * v).sum::<f64>().sqrt() - 1.0).abs();
    Ok(DecayReport {
        fit,
        final_distance: *distances.last().expect("nonempty"),
        times,
        distances,
        m_inf,
        m_inf_deviation,
        final_constraint: constraint_field(&last.m).linf(),
    })
}
