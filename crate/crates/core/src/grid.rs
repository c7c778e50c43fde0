//! Uniform Cartesian box grids with node-centred storage.
//!
//! A box grid with `n` cells along an axis carries `n + 1` nodes on that
//! axis, the first and last lying on the faces. A periodic grid carries `n`
//! nodes and identifies node `n` with node `0`. Unused axes of a 2D grid
//! have a single node.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Boundary condition attached to a field.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BcTag {
    DirichletZero,
    NeumannZero,
    Periodic,
    /// Derived quantity without a boundary condition: one-sided stencils at faces.
    Free,
}

/// How a first or second difference is closed at a face node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Closure {
    OneSided,
    Reflect,
    Wrap,
}

impl BcTag {
    pub(crate) fn closure(self) -> Closure {
        match self {
            BcTag::DirichletZero | BcTag::Free => Closure::OneSided,
            BcTag::NeumannZero => Closure::Reflect,
            BcTag::Periodic => Closure::Wrap,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    extents: [usize; 3],
    lengths: [f64; 3],
    origin: [f64; 3],
    periodic: bool,
}

pub const MIN_EXTENT: usize = 4;

/// Builds a box grid over `[origin, origin + lengths]`.
pub fn make_grid(dim: usize, extents: &[usize], lengths: &[f64]) -> Result<Grid> {
    Grid::new(dim, extents, lengths, [0.0; 3], false)
}

impl Grid {
    pub fn new(
        dim: usize,
        extents: &[usize],
        lengths: &[f64],
        origin: [f64; 3],
        periodic: bool,
    ) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::InvalidGrid(format!("dimension must be 2 or 3, got {dim}")));
        }
        if extents.len() != dim || lengths.len() != dim {
            return Err(Error::InvalidGrid(format!(
                "expected {dim} extents and box lengths, got {} and {}",
                extents.len(),
                lengths.len()
            )));
        }
        let mut e = [1usize; 3];
        let mut l = [1.0; 3];
        for a in 0..dim {
            if extents[a] < MIN_EXTENT {
                return Err(Error::InvalidGrid(format!(
                    "extent {} on axis {a} is below the minimum {MIN_EXTENT}",
                    extents[a]
                )));
            }
            if !(lengths[a] > 0.0 && lengths[a].is_finite()) {
                return Err(Error::InvalidGrid(format!(
                    "box length {} on axis {a} must be positive",
                    lengths[a]
                )));
            }
            e[a] = extents[a];
            l[a] = lengths[a];
        }
        let g = Grid {
            dim,
            extents: e,
            lengths: l,
            origin,
            periodic,
        };
        Ok(g)
    }

    /// Square (2D) or cubic (3D) unit box with `n` cells per axis.
    pub fn unit(dim: usize, n: usize) -> Result<Self> {
        make_grid(dim, &vec![n; dim], &vec![1.0; dim])
    }

    pub fn periodic(dim: usize, extents: &[usize], lengths: &[f64]) -> Result<Self> {
        Grid::new(dim, extents, lengths, [0.0; 3], true)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_periodic(&self) -> bool {
        self.periodic
    }

    pub fn extents(&self) -> &[usize] {
        &self.extents[..self.dim]
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths[..self.dim]
    }

    pub fn origin(&self) -> [f64; 3] {
        self.origin
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.lengths[axis] / self.extents[axis] as f64
    }

    pub fn min_spacing(&self) -> f64 {
        (0..self.dim).map(|a| self.spacing(a)).fold(f64::INFINITY, f64::min)
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim).map(|a| self.spacing(a)).product()
    }

    /// Nodes along `axis` (1 for the unused axis of a 2D grid).
    pub fn nodes_on_axis(&self, axis: usize) -> usize {
        if axis >= self.dim {
            1
        } else if self.periodic {
            self.extents[axis]
        } else {
            self.extents[axis] + 1
        }
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.nodes_on_axis(0), self.nodes_on_axis(1), self.nodes_on_axis(2)]
    }

    pub fn node_count(&self) -> usize {
        let s = self.shape();
        s[0] * s[1] * s[2]
    }

    #[inline]
    pub fn index(&self, ijk: [usize; 3]) -> usize {
        let s = self.shape();
        ijk[0] + s[0] * (ijk[1] + s[1] * ijk[2])
    }

    #[inline]
    pub fn multi_index(&self, node: usize) -> [usize; 3] {
        let s = self.shape();
        [node % s[0], (node / s[0]) % s[1], node / (s[0] * s[1])]
    }

    /// Index stride between neighbouring nodes along `axis`.
    #[inline]
    pub fn stride(&self, axis: usize) -> usize {
        let s = self.shape();
        match axis {
            0 => 1,
            1 => s[0],
            _ => s[0] * s[1],
        }
    }

    pub fn coords(&self, node: usize) -> [f64; 3] {
        let ijk = self.multi_index(node);
        let mut x = [0.0; 3];
        for a in 0..self.dim {
            x[a] = self.origin[a] + ijk[a] as f64 * self.spacing(a);
        }
        x
    }

    /// True if `node` sits on a face of a box grid along `axis`.
    #[inline]
    pub fn on_face(&self, node: usize, axis: usize) -> bool {
        if self.periodic || axis >= self.dim {
            return false;
        }
        let i = self.multi_index(node)[axis];
        i == 0 || i == self.extents[axis]
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        (0..self.dim).any(|a| self.on_face(node, a))
    }

    /// Composite trapezoid weight of `node`, relative to the cell volume.
    pub fn trapezoid_weight(&self, node: usize) -> f64 {
        (0..self.dim)
            .map(|a| if self.on_face(node, a) { 0.5 } else { 1.0 })
            .product()
    }

    /// Quadrature weight (relative to cell volume) of `node` for a field with `bc`.
    pub fn weight(&self, node: usize, bc: BcTag) -> f64 {
        match bc {
            BcTag::DirichletZero => {
                if self.is_boundary(node) {
                    0.0
                } else {
                    1.0
                }
            }
            BcTag::Periodic => 1.0,
            BcTag::NeumannZero | BcTag::Free => self.trapezoid_weight(node),
        }
    }

    /// Number of unknowns per component for a field with `bc`.
    pub fn dof_count(&self, bc: BcTag) -> usize {
        match bc {
            BcTag::DirichletZero if !self.periodic => (0..self.dim)
                .map(|a| self.extents[a] - 1)
                .product(),
            _ => self.node_count(),
        }
    }

    /// Boundary tag used for a field of role `role` on this grid.
    pub fn tag_for(&self, role: FieldRole) -> BcTag {
        if self.periodic {
            return BcTag::Periodic;
        }
        match role {
            FieldRole::Velocity | FieldRole::Deformation => BcTag::DirichletZero,
            FieldRole::Magnetization | FieldRole::Pressure => BcTag::NeumannZero,
        }
    }
}

/// Physical role of a field; fixes its boundary tag and component count.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldRole {
    Velocity,
    Deformation,
    Magnetization,
    Pressure,
}

impl FieldRole {
    pub fn shape(self, dim: usize) -> [usize; 2] {
        match self {
            FieldRole::Velocity => [dim, 1],
            FieldRole::Deformation => [dim, dim],
            FieldRole::Magnetization => [3, 1],
            FieldRole::Pressure => [1, 1],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn spacing_is_side_over_extent() {
        let g = make_grid(2, &[32, 32], &[1.0, 1.0]).unwrap();
        assert_eq!(g.spacing(0), 1.0 / 32.0);
        assert_eq!(g.spacing(1), 1.0 / 32.0);
        assert_eq!(g.node_count(), 33 * 33);

        let g = make_grid(3, &[16, 16, 16], &[2.0 * PI; 3]).unwrap();
        for a in 0..3 {
            assert_eq!(g.spacing(a), 2.0 * PI / 16.0);
        }
    }

    #[test]
    fn rejects_small_extents() {
        assert!(make_grid(2, &[2, 2], &[1.0, 1.0]).is_err());
        assert!(make_grid(2, &[8, 3], &[1.0, 1.0]).is_err());
        assert!(make_grid(2, &[8, 8], &[1.0, -1.0]).is_err());
        assert!(make_grid(4, &[8; 4], &[1.0; 4]).is_err());
    }

    #[test]
    fn index_round_trip_and_coords() {
        let g = make_grid(3, &[4, 5, 6], &[1.0, 2.0, 3.0]).unwrap();
        for n in 0..g.node_count() {
            assert_eq!(g.index(g.multi_index(n)), n);
        }
        let last = g.node_count() - 1;
        let x = g.coords(last);
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 2.0).abs() < 1e-15 && (x[2] - 3.0).abs() < 1e-15);
    }

    #[test]
    fn trapezoid_weights_sum_to_volume() {
        let g = make_grid(2, &[7, 9], &[1.5, 0.5]).unwrap();
        let s: f64 = (0..g.node_count()).map(|n| g.trapezoid_weight(n)).sum();
        assert!((s * g.cell_volume() - 0.75).abs() < 1e-14);
        assert_eq!(g.dof_count(BcTag::DirichletZero), 6 * 8);
    }
}
