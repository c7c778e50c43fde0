//! Finite-difference simulation and verification of magnetoviscoelastic flow.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord, clippy::len_without_is_empty)]

pub mod config;
pub mod energetics;
pub mod error;
pub mod field;
pub mod gl;
pub mod grid;
pub mod integrator;
pub mod io;
pub mod lab;
pub mod leray;
pub mod linalg;
pub mod ops;
pub mod stability;

pub use config::{parse_config, ConstraintMode, DtPolicy, InitialCondition, Scheme, SimConfig};
pub use energetics::{energy, EnergyRecord};
pub use error::{Error, Result};
pub use field::{inner_product_l2, project_to_sphere, sample, Field, State};
pub use grid::{make_grid, BcTag, FieldRole, Grid};
pub use integrator::{run, Integrator, Trajectory};
pub use ops::Physics;
