//! Nodal field containers, the coupled state, and quadrature.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{BcTag, FieldRole, Grid};

/// Norm below which a magnetization vector is considered degenerate.
pub const DEGENERATE_NORM: f64 = 1e-8;

/// Values of a scalar, vector or matrix quantity at every grid node.
///
/// Storage is node-major: component `c` of node `n` lives at `n * ncomp + c`.
/// Matrix components are row-major, so entry `(i, j)` is component `i * cols + j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Field {
    grid: Grid,
    shape: [usize; 2],
    bc: BcTag,
    data: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: &Grid, shape: [usize; 2], bc: BcTag) -> Self {
        Field {
            grid: *grid,
            shape,
            bc,
            data: vec![0.0; grid.node_count() * shape[0] * shape[1]],
        }
    }

    pub fn scalar(grid: &Grid, bc: BcTag) -> Self {
        Self::zeros(grid, [1, 1], bc)
    }

    pub fn vector(grid: &Grid, n: usize, bc: BcTag) -> Self {
        Self::zeros(grid, [n, 1], bc)
    }

    pub fn tensor(grid: &Grid, rows: usize, cols: usize, bc: BcTag) -> Self {
        Self::zeros(grid, [rows, cols], bc)
    }

    pub fn for_role(grid: &Grid, role: FieldRole) -> Self {
        Self::zeros(grid, role.shape(grid.dim()), grid.tag_for(role))
    }

    pub fn from_vec(grid: &Grid, shape: [usize; 2], bc: BcTag, data: Vec<f64>) -> Result<Self> {
        let expected = grid.node_count() * shape[0] * shape[1];
        if data.len() != expected {
            return Err(Error::ComponentMismatch {
                expected,
                found: data.len(),
            });
        }
        Ok(Field {
            grid: *grid,
            shape,
            bc,
            data,
        })
    }

    /// Same grid, shape and tag, with zero values.
    pub fn zeros_like(&self) -> Self {
        Field::zeros(&self.grid, self.shape, self.bc)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn shape(&self) -> [usize; 2] {
        self.shape
    }

    pub fn ncomp(&self) -> usize {
        self.shape[0] * self.shape[1]
    }

    pub fn bc(&self) -> BcTag {
        self.bc
    }

    pub fn with_bc(mut self, bc: BcTag) -> Self {
        self.bc = bc;
        self
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, node: usize, comp: usize) -> f64 {
        self.data[node * self.ncomp() + comp]
    }

    #[inline]
    pub fn set(&mut self, node: usize, comp: usize, v: f64) {
        let nc = self.ncomp();
        self.data[node * nc + comp] = v;
    }

    #[inline]
    pub fn node(&self, node: usize) -> &[f64] {
        let nc = self.ncomp();
        &self.data[node * nc..(node + 1) * nc]
    }

    #[inline]
    pub fn node_mut(&mut self, node: usize) -> &mut [f64] {
        let nc = self.ncomp();
        &mut self.data[node * nc..(node + 1) * nc]
    }

    pub fn node_vec3(&self, node: usize) -> [f64; 3] {
        let v = self.node(node);
        [v[0], v[1], v[2]]
    }

    /// Zeroes every boundary node of a Dirichlet field.
    pub fn enforce_bc(&mut self) {
        if self.bc != BcTag::DirichletZero {
            return;
        }
        let nc = self.ncomp();
        for n in 0..self.grid.node_count() {
            if self.grid.is_boundary(n) {
                self.data[n * nc..(n + 1) * nc].fill(0.0);
            }
        }
    }

    pub fn check_compatible(&self, other: &Field) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        if self.ncomp() != other.ncomp() {
            return Err(Error::ComponentMismatch {
                expected: self.ncomp(),
                found: other.ncomp(),
            });
        }
        Ok(())
    }

    pub fn axpy(&mut self, a: f64, x: &Field) {
        for (y, x) in self.data.iter_mut().zip(&x.data) {
            *y += a * x;
        }
    }

    pub fn scale(&mut self, a: f64) {
        self.data.iter_mut().for_each(|v| *v *= a);
    }

    pub fn linf(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Maximum over nodes of the Euclidean norm of the node value.
    pub fn max_node_norm(&self) -> f64 {
        (0..self.grid.node_count())
            .map(|n| self.node(n).iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    pub fn norm_l2(&self) -> f64 {
        inner_product_l2(self, self).expect("self-compatible").max(0.0).sqrt()
    }

    /// Quadrature-weighted mean of each component.
    pub fn mean(&self) -> Vec<f64> {
        let nc = self.ncomp();
        let mut acc = vec![0.0; nc];
        let mut wsum = 0.0;
        for n in 0..self.grid.node_count() {
            let w = self.grid.weight(n, self.bc);
            wsum += w;
            for c in 0..nc {
                acc[c] += w * self.get(n, c);
            }
        }
        acc.iter().map(|a| a / wsum).collect()
    }
}

/// `(f|g)` with composite quadrature: trapezoid weights for Neumann and free
/// fields, interior-only sums for Dirichlet fields, unit weights when periodic.
pub fn inner_product_l2(f: &Field, g: &Field) -> Result<f64> {
    f.check_compatible(g)?;
    let grid = f.grid();
    let mut s = 0.0;
    for n in 0..grid.node_count() {
        let w = grid.weight(n, f.bc);
        if w == 0.0 {
            continue;
        }
        let dot: f64 = f.node(n).iter().zip(g.node(n)).map(|(a, b)| a * b).sum();
        s += w * dot;
    }
    Ok(s * grid.cell_volume())
}

/// Evaluates `closed_form` at every node; Dirichlet boundary values are zeroed.
pub fn sample<F>(grid: &Grid, role: FieldRole, closed_form: F) -> Field
where
    F: Fn([f64; 3], &mut [f64]),
{
    let mut f = Field::for_role(grid, role);
    sample_into(&mut f, closed_form);
    f
}

/// Like [`sample`] with an explicit shape and tag.
pub fn sample_with<F>(grid: &Grid, shape: [usize; 2], bc: BcTag, closed_form: F) -> Field
where
    F: Fn([f64; 3], &mut [f64]),
{
    let mut f = Field::zeros(grid, shape, bc);
    sample_into(&mut f, closed_form);
    f
}

fn sample_into<F>(f: &mut Field, closed_form: F)
where
    F: Fn([f64; 3], &mut [f64]),
{
    let grid = *f.grid();
    for n in 0..grid.node_count() {
        let x = grid.coords(n);
        closed_form(x, f.node_mut(n));
    }
    f.enforce_bc();
}

/// Divides every node value by its norm.
pub fn project_to_sphere(m: &Field) -> Result<Field> {
    let mut out = m.clone();
    project_to_sphere_in_place(&mut out)?;
    Ok(out)
}

pub fn project_to_sphere_in_place(m: &mut Field) -> Result<()> {
    if m.ncomp() != 3 {
        return Err(Error::ComponentMismatch {
            expected: 3,
            found: m.ncomp(),
        });
    }
    for n in 0..m.grid().node_count() {
        let v = m.node_mut(n);
        let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if !(norm >= DEGENERATE_NORM) {
            return Err(Error::DegenerateMagnetization { node: n, norm });
        }
        v.iter_mut().for_each(|c| *c /= norm);
    }
    Ok(())
}

/// Largest nodal deviation `||m| - 1|`.
pub fn sphere_deviation(m: &Field) -> f64 {
    (0..m.grid().node_count())
        .map(|n| {
            let v = m.node(n);
            ((v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt() - 1.0).abs()
        })
        .fold(0.0, f64::max)
}

/// The unknowns `(u, F, m)` and the pressure at one time instant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub t: f64,
    pub u: Field,
    pub f: Field,
    pub m: Field,
    pub pi: Field,
}

impl State {
    /// `(0, 0, m_star, 0)` on `grid`.
    pub fn equilibrium(grid: &Grid, m_star: [f64; 3]) -> Self {
        let mut m = Field::for_role(grid, FieldRole::Magnetization);
        for n in 0..grid.node_count() {
            m.node_mut(n).copy_from_slice(&m_star);
        }
        State {
            t: 0.0,
            u: Field::for_role(grid, FieldRole::Velocity),
            f: Field::for_role(grid, FieldRole::Deformation),
            m,
            pi: Field::for_role(grid, FieldRole::Pressure),
        }
    }

    pub fn grid(&self) -> &Grid {
        self.u.grid()
    }

    pub fn validate(&self) -> Result<()> {
        let g = self.grid();
        let d = g.dim();
        for (f, role) in [
            (&self.u, FieldRole::Velocity),
            (&self.f, FieldRole::Deformation),
            (&self.m, FieldRole::Magnetization),
            (&self.pi, FieldRole::Pressure),
        ] {
            if f.grid() != g {
                return Err(Error::GridMismatch);
            }
            let s = role.shape(d);
            if f.shape() != s {
                return Err(Error::ComponentMismatch {
                    expected: s[0] * s[1],
                    found: f.ncomp(),
                });
            }
        }
        Ok(())
    }
}
