//! Discrete Helmholtz projection on the collocated grid.
//!
//! The pressure gradient `G` is the centred difference evaluated at velocity
//! unknowns, and the discrete divergence is its negative adjoint with respect
//! to the velocity and pressure quadratures, `D = -W_p^{-1} G^T`. The normal
//! equations `D G psi = D v` therefore give an exactly orthogonal projection
//! `v - G psi` onto the kernel of `D`. The kernel of `G` is spanned by
//! indicators of the node classes the wide stencil couples (the interleaved
//! sub-lattices plus any nodes no stencil reaches), so the projection pins
//! the mean of `psi` on every class.
//!
//! Standalone pressure problems use the compact Neumann Laplacian instead,
//! whose kernel is the constants.

use crate::error::Result;
use crate::field::Field;
use crate::grid::{FieldRole, Grid};
use crate::linalg::{cg, DisjointSets, LinearOperator, SolveStats, SolverOptions};
use crate::ops;

pub const DEFAULT_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoissonOptions {
    /// Relative residual target of the pressure solve.
    pub tol: f64,
    /// Iteration cap; `None` means ten times the unknown count.
    pub max_iter: Option<usize>,
}

impl Default for PoissonOptions {
    fn default() -> Self {
        PoissonOptions {
            tol: DEFAULT_TOL,
            max_iter: None,
        }
    }
}

/// Wide-stencil pressure solver and projector for one grid.
#[derive(Clone, Debug)]
pub struct Projector {
    grid: Grid,
    opts: PoissonOptions,
    /// Kernel class of each pressure node.
    class: Vec<usize>,
    classes: usize,
    /// Velocity-unknown mask (interior nodes, or all nodes when periodic).
    active: Vec<bool>,
    /// Pressure quadrature weights relative to the cell volume.
    weights: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct Projection {
    pub sigma: Field,
    pub grad_psi: Field,
    pub psi: Field,
    pub stats: SolveStats,
}

#[derive(Clone, Debug)]
pub struct PoissonSolution {
    pub psi: Field,
    pub stats: SolveStats,
    /// Largest class mean removed from the right-hand side.
    pub removed_mean: f64,
    pub warning: Option<String>,
}

/// `-D G = W^{-1} G^T G`, self-adjoint and semidefinite in the weighted inner product.
struct NormalOperator<'a> {
    p: &'a Projector,
}

impl LinearOperator for NormalOperator<'_> {
    fn len(&self) -> usize {
        self.p.grid.node_count()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let g = self.p.apply_grad(x);
        self.p.apply_grad_t(&g, y);
        for (y, w) in y.iter_mut().zip(&self.p.weights) {
            *y /= w;
        }
    }
}

/// Negative compact Neumann (or periodic) Laplacian.
struct CompactOperator<'a> {
    grid: &'a Grid,
}

impl LinearOperator for CompactOperator<'_> {
    fn len(&self) -> usize {
        self.grid.node_count()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let f = Field::from_vec(self.grid, [1, 1], self.grid.tag_for(FieldRole::Pressure), x.to_vec()).expect("scalar");
        for (y, l) in y.iter_mut().zip(ops::laplacian(&f).data()) {
            *y = -l;
        }
    }
}

impl Projector {
    pub fn new(grid: &Grid, opts: PoissonOptions) -> Self {
        let n = grid.node_count();
        let active: Vec<bool> = (0..n).map(|k| grid.is_periodic() || !grid.is_boundary(k)).collect();
        let mut sets = DisjointSets::new(n);
        let dim = grid.dim();
        for a in (0..n).filter(|&a| active[a]) {
            for k in 0..dim {
                let (lo, hi) = neighbours(grid, a, k);
                sets.union(lo, hi);
            }
        }
        let (class, classes) = sets.labels();
        let weights = (0..n).map(|k| grid.weight(k, grid.tag_for(FieldRole::Pressure))).collect();
        Projector {
            grid: *grid,
            opts,
            class,
            classes,
            active,
            weights,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Number of independent kernel modes of the projection's pressure gradient.
    pub fn kernel_dimension(&self) -> usize {
        self.classes
    }

    fn options(&self) -> SolverOptions {
        SolverOptions {
            tol: self.opts.tol,
            max_iter: self.opts.max_iter.unwrap_or(10 * self.grid.node_count()),
        }
    }

    /// `G psi`: centred pressure gradient at velocity unknowns, flat `[node * dim + k]`.
    fn apply_grad(&self, psi: &[f64]) -> Vec<f64> {
        let g = &self.grid;
        let d = g.dim();
        let mut out = vec![0.0; g.node_count() * d];
        for a in (0..g.node_count()).filter(|&a| self.active[a]) {
            for k in 0..d {
                let (lo, hi) = neighbours(g, a, k);
                out[a * d + k] = (psi[hi] - psi[lo]) * 0.5 / g.spacing(k);
            }
        }
        out
    }

    /// `G^T v` on pressure nodes.
    fn apply_grad_t(&self, v: &[f64], out: &mut [f64]) {
        let g = &self.grid;
        let d = g.dim();
        out.fill(0.0);
        for a in (0..g.node_count()).filter(|&a| self.active[a]) {
            for k in 0..d {
                let (lo, hi) = neighbours(g, a, k);
                let c = v[a * d + k] * 0.5 / g.spacing(k);
                out[hi] += c;
                out[lo] -= c;
            }
        }
    }

    /// Pressure gradient `G psi` as a velocity field.
    pub fn gradient(&self, psi: &Field) -> Field {
        let data = self.apply_grad(psi.data());
        Field::from_vec(&self.grid, FieldRole::Velocity.shape(self.grid.dim()), self.grid.tag_for(FieldRole::Velocity), data)
            .expect("shape fixed by grid")
    }

    /// Discrete divergence `D v = -W_p^{-1} G^T v`, the negative adjoint of [`Self::gradient`].
    pub fn divergence(&self, v: &Field) -> Field {
        let mut out = vec![0.0; self.grid.node_count()];
        self.apply_grad_t(v.data(), &mut out);
        for (o, w) in out.iter_mut().zip(&self.weights) {
            *o = -*o / w;
        }
        Field::from_vec(&self.grid, [1, 1], self.grid.tag_for(FieldRole::Pressure), out).expect("scalar")
    }

    /// Weighted mean of `values` on each class of `labels`.
    fn class_means(&self, values: &[f64], labels: Option<(&[usize], usize)>) -> Vec<f64> {
        let (labels, count) = labels.unwrap_or((&self.class, self.classes));
        let class = |n: usize| if labels.is_empty() { 0 } else { labels[n] };
        let mut s = vec![0.0; count];
        let mut w = vec![0.0; count];
        for (n, v) in values.iter().enumerate() {
            s[class(n)] += self.weights[n] * v;
            w[class(n)] += self.weights[n];
        }
        s.iter().zip(&w).map(|(s, w)| s / w).collect()
    }

    fn remove_class_means(&self, values: &mut [f64], labels: Option<(&[usize], usize)>) -> Vec<f64> {
        let means = self.class_means(values, labels);
        let (lab, _) = labels.unwrap_or((&self.class, self.classes));
        for (n, v) in values.iter_mut().enumerate() {
            *v -= means[if lab.is_empty() { 0 } else { lab[n] }];
        }
        means
    }

    /// Solves the compact Neumann (or periodic) problem `lap psi = rhs`.
    ///
    /// The right-hand side is made compatible by removing its weighted mean,
    /// and `psi` is returned with zero mean.
    pub fn pressure_poisson(&self, rhs: &Field) -> Result<PoissonSolution> {
        let n = self.grid.node_count();
        let constants: Option<(&[usize], usize)> = Some((&[], 1));
        let mut b: Vec<f64> = rhs.data().iter().map(|v| -v).collect();
        let removed_mean = self.remove_class_means(&mut b, constants)[0].abs();
        let scale = rhs.linf().max(f64::MIN_POSITIVE);
        let warning = (removed_mean > 1e3 * f64::EPSILON * scale).then(|| {
            format!("right-hand side mean {removed_mean:.3e} removed for compatibility")
        });
        let mut psi = vec![0.0; n];
        let stats = cg(&CompactOperator { grid: &self.grid }, &b, &mut psi, Some(&self.weights), self.options())?;
        self.remove_class_means(&mut psi, constants);
        let psi = Field::from_vec(&self.grid, [1, 1], self.grid.tag_for(FieldRole::Pressure), psi)?;
        Ok(PoissonSolution {
            psi,
            stats,
            removed_mean,
            warning,
        })
    }

    /// Splits `v` into its discretely solenoidal part and a pressure gradient.
    pub fn helmholtz_project(&self, v: &Field) -> Result<Projection> {
        self.project_with_guess(v, None)
    }

    /// As [`Self::helmholtz_project`], starting the pressure solve from `guess`.
    pub fn project_with_guess(&self, v: &Field, guess: Option<&Field>) -> Result<Projection> {
        let n = self.grid.node_count();
        let mut b = vec![0.0; n];
        let mut vv = v.data().to_vec();
        for (k, a) in self.active.iter().enumerate() {
            if !a {
                let d = self.grid.dim();
                vv[k * d..(k + 1) * d].fill(0.0);
            }
        }
        self.apply_grad_t(&vv, &mut b);
        for (b, w) in b.iter_mut().zip(&self.weights) {
            *b /= w;
        }
        // exact in arithmetic; removes rounding outside the range
        self.remove_class_means(&mut b, None);
        let mut psi = match guess {
            Some(g) => g.data().to_vec(),
            None => vec![0.0; n],
        };
        let stats = cg(&NormalOperator { p: self }, &b, &mut psi, Some(&self.weights), self.options())?;
        self.remove_class_means(&mut psi, None);
        let psi = Field::from_vec(&self.grid, [1, 1], self.grid.tag_for(FieldRole::Pressure), psi)?;
        let grad_psi = self.gradient(&psi);
        let mut sigma = Field::from_vec(&self.grid, v.shape(), v.bc(), vv)?;
        sigma.axpy(-1.0, &grad_psi);
        Ok(Projection {
            sigma,
            grad_psi,
            psi,
            stats,
        })
    }
}

/// Lower and upper neighbours of node `a` along `axis` (wrapping on periodic grids).
fn neighbours(g: &Grid, a: usize, axis: usize) -> (usize, usize) {
    let s = g.stride(axis);
    let i = g.multi_index(a)[axis];
    let n = g.nodes_on_axis(axis);
    let lo = if i == 0 { a + (n - 1) * s } else { a - s };
    let hi = if i + 1 == n { a - (n - 1) * s } else { a + s };
    (lo, hi)
}
