//! Discrete energy, dissipation and constraint diagnostics.
//!
//! Gradient energies are sums over grid edges of squared forward differences,
//! weighted by the trapezoid rule in the transverse directions. With this
//! choice the variational derivative of the exchange energy is exactly
//! `-W lap_h m` for the compact Neumann Laplacian, so the energy and the
//! implicit magnetization solve share one discrete structure.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{inner_product_l2, Field, State};
use crate::grid::Grid;
use crate::ops::{self, Physics};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct EnergyRecord {
    pub t: f64,
    pub kinetic: f64,
    pub elastic: f64,
    pub exchange: f64,
    /// Ginzburg-Landau penalty `1/(4 eps^2) int (|m|^2 - 1)^2`; zero for constrained runs.
    pub penalty: f64,
    pub total: f64,
    pub d_u: f64,
    pub d_f: f64,
    pub d_m: f64,
    /// Finite-difference rate of `total`; NaN until neighbours are known.
    pub de_dt: f64,
}

impl EnergyRecord {
    pub fn dissipation(&self) -> f64 {
        self.d_u + self.d_f + self.d_m
    }
}

/// `sum over edges of |f_j - f_i|^2 / h^2` with transverse trapezoid weights, times the cell volume.
pub fn edge_gradient_sq(f: &Field) -> f64 {
    let g = f.grid();
    let nc = f.ncomp();
    let d = g.dim();
    let data = f.data();
    let mut total = 0.0;
    for a in 0..d {
        let h2 = g.spacing(a).powi(2);
        let n_a = g.nodes_on_axis(a);
        let s = g.stride(a);
        let mut sum = 0.0;
        for node in 0..g.node_count() {
            let i = g.multi_index(node)[a];
            let next = if i + 1 < n_a {
                node + s
            } else if g.is_periodic() {
                node - i * s
            } else {
                continue;
            };
            let tw: f64 = (0..d)
                .filter(|&b| b != a)
                .map(|b| if g.on_face(node, b) { 0.5 } else { 1.0 })
                .product();
            let e: f64 = (0..nc).map(|c| (data[next * nc + c] - data[node * nc + c]).powi(2)).sum();
            sum += tw * e;
        }
        total += sum / h2;
    }
    total * g.cell_volume()
}

fn trapezoid_integral(g: &Grid, values: impl Fn(usize) -> f64) -> f64 {
    let s: f64 = (0..g.node_count())
        .map(|n| {
            let w = if g.is_periodic() { 1.0 } else { g.trapezoid_weight(n) };
            w * values(n)
        })
        .sum();
    s * g.cell_volume()
}

/// Energy components and dissipation terms of `state`.
pub fn energy(state: &State, physics: &Physics) -> EnergyRecord {
    let kinetic = 0.5 * inner_product_l2(&state.u, &state.u).expect("self");
    let elastic = 0.5 * inner_product_l2(&state.f, &state.f).expect("self");
    let exchange = 0.5 * edge_gradient_sq(&state.m);
    let d_u = physics.mu_s * edge_gradient_sq(&state.u);
    let d_f = physics.kappa * edge_gradient_sq(&state.f);
    let tau = ops::tension(&state.m);
    let d_m = physics.alpha * trapezoid_integral(state.grid(), |n| tau.node(n).iter().map(|v| v * v).sum());
    EnergyRecord {
        t: state.t,
        kinetic,
        elastic,
        exchange,
        penalty: 0.0,
        total: kinetic + elastic + exchange,
        d_u,
        d_f,
        d_m,
        de_dt: f64::NAN,
    }
}

/// Fills `de_dt` by centred differences (one-sided at the ends).
pub fn fill_energy_rates(records: &mut [EnergyRecord]) {
    let n = records.len();
    if n < 2 {
        return;
    }
    for k in 0..n {
        let (a, b) = match k {
            0 => (0, 1),
            k if k + 1 == n => (k - 1, k),
            k => (k - 1, k + 1),
        };
        records[k].de_dt = (records[b].total - records[a].total) / (records[b].t - records[a].t);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BalancePoint {
    pub t: f64,
    pub de_dt: f64,
    pub dissipation: f64,
    /// `|dE/dt + D| / max(D, floor)`.
    pub rel_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BalanceReport {
    pub points: Vec<BalancePoint>,
    pub worst: f64,
    pub worst_t: f64,
}

impl BalanceReport {
    /// Worst relative error over points after the first `skip` records.
    pub fn worst_after(&self, skip: usize) -> f64 {
        self.points.iter().skip(skip.saturating_sub(1)).fold(0.0, |m, p| m.max(p.rel_error))
    }
}

pub const DISSIPATION_FLOOR: f64 = 1e-10;

/// Compares centred `dE/dt` at interior records with `-(D_u + D_F + D_m)` there.
pub fn dissipation_balance(records: &[EnergyRecord]) -> Result<BalanceReport> {
    if records.len() < 3 {
        return Err(Error::TooFewRecords {
            needed: 3,
            have: records.len(),
        });
    }
    let points: Vec<BalancePoint> = records
        .windows(3)
        .map(|w| {
            let de_dt = (w[2].total - w[0].total) / (w[2].t - w[0].t);
            let dissipation = w[1].dissipation();
            BalancePoint {
                t: w[1].t,
                de_dt,
                dissipation,
                rel_error: (de_dt + dissipation).abs() / dissipation.max(DISSIPATION_FLOOR),
            }
        })
        .collect();
    let (worst, worst_t) = points
        .iter()
        .fold((0.0, records[1].t), |(m, t), p| if p.rel_error > m { (p.rel_error, p.t) } else { (m, t) });
    Ok(BalanceReport { points, worst, worst_t })
}

/// Index of the first record whose energy exceeds its predecessor by more than `slack`.
pub fn first_energy_increase(records: &[EnergyRecord], slack: f64) -> Option<usize> {
    records.windows(2).position(|w| w[1].total > w[0].total + slack).map(|k| k + 1)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ConstraintReport {
    pub t: f64,
    pub phi_inf: f64,
    pub phi_l2: f64,
    /// Discrete residual of `d_t phi + u . grad phi - alpha lap phi - 2 alpha |grad m|^2 phi`.
    pub residual_inf: f64,
    pub residual_l2: f64,
}

/// `phi = |m|^2 - 1` as a Neumann scalar field.
pub fn constraint_field(m: &Field) -> Field {
    let g = *m.grid();
    let mut phi = Field::scalar(&g, m.bc());
    for n in 0..g.node_count() {
        let v = m.node(n);
        phi.data_mut()[n] = v.iter().map(|c| c * c).sum::<f64>() - 1.0;
    }
    phi
}

/// Norms of `phi` at `state` and the residual of its evolution law between `prev` and `state`.
pub fn constraint_report(state: &State, prev: &State, alpha: f64) -> ConstraintReport {
    let phi = constraint_field(&state.m);
    let phi_prev = constraint_field(&prev.m);
    let dt = state.t - prev.t;
    let lap = ops::laplacian(&phi);
    let adv = ops::advect(&state.u, &phi);
    let gsq = ops::grad_sq(&state.m);
    let mut res = phi.zeros_like();
    for n in 0..state.grid().node_count() {
        let p = phi.data()[n];
        let dphi = if dt > 0.0 { (p - phi_prev.data()[n]) / dt } else { 0.0 };
        res.data_mut()[n] = dphi + adv.data()[n] - alpha * lap.data()[n] - 2.0 * alpha * gsq.data()[n] * p;
    }
    ConstraintReport {
        t: state.t,
        phi_inf: phi.linf(),
        phi_l2: phi.norm_l2(),
        residual_inf: res.linf(),
        residual_l2: res.norm_l2(),
    }
}

/// `int |grad m|^2 (m . lap m)`, the term whose sign is indefinite off the sphere.
pub fn gl_energy_caveat(state: &State) -> f64 {
    caveat_integral(&state.m)
}

pub(crate) fn caveat_integral(m: &Field) -> f64 {
    let lap = ops::laplacian(m);
    let gsq = ops::grad_sq(m);
    trapezoid_integral(m.grid(), |n| gsq.data()[n] * ops::dot3(m.node_vec3(n), lap.node_vec3(n)))
}

/// `int |grad m|^4` with the nodal centred gradient.
pub fn grad_fourth_integral(m: &Field) -> f64 {
    let gsq = ops::grad_sq(m);
    trapezoid_integral(m.grid(), |n| gsq.data()[n].powi(2))
}

/// Unit-free distance of `state` to the equilibrium set: `|u|_inf + |F|_inf + |grad m|_inf`.
pub fn equilibrium_gap(state: &State) -> f64 {
    state.u.linf() + state.f.linf() + ops::gradient(&state.m).linf()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{sample, sample_with};
    use crate::grid::{BcTag, FieldRole};
    use std::f64::consts::PI;

    #[test]
    fn equilibrium_has_no_energy() {
        let g = Grid::unit(2, 8).unwrap();
        let s = State::equilibrium(&g, [0.0, 0.6, 0.8]);
        let r = energy(&s, &Physics::default());
        assert_eq!(r.total, 0.0);
        assert_eq!(r.dissipation(), 0.0);
        assert_eq!(gl_energy_caveat(&s), 0.0);
    }

    #[test]
    fn periodic_winding_exchange() {
        // theta = 2 pi x winds once around the circle on the periodic unit square
        let mut errs = Vec::new();
        for n in [16, 32, 64] {
            let g = Grid::periodic(2, &[n, n], &[1.0, 1.0]).unwrap();
            let m = sample_with(&g, [3, 1], BcTag::Periodic, |x, v| {
                let th = 2.0 * PI * x[0];
                v.copy_from_slice(&[th.cos(), th.sin(), 0.0]);
            });
            errs.push((0.5 * edge_gradient_sq(&m) - 2.0 * PI * PI).abs());
        }
        assert!(errs[2] < 2e-2, "{errs:?}");
        assert!(errs[0] / errs[1] > 3.5 && errs[1] / errs[2] > 3.5, "{errs:?}");
    }

    #[test]
    fn exchange_variation_is_weighted_laplacian() {
        let g = Grid::unit(2, 6).unwrap();
        let m = sample(&g, FieldRole::Magnetization, |x, v| {
            v.copy_from_slice(&[(x[0] * 2.0).sin() + x[1], x[0] * x[1], (x[1] * 3.0).cos()]);
        });
        let lap = ops::laplacian(&m);
        let base = edge_gradient_sq(&m);
        for node in [0, 7, 20, 48] {
            for c in 0..3 {
                let mut p = m.clone();
                let h = 1e-6;
                p.set(node, c, m.get(node, c) + h);
                let deriv = (0.5 * edge_gradient_sq(&p) - 0.5 * base) / h;
                let expected = -g.trapezoid_weight(node) * g.cell_volume() * lap.get(node, c);
                assert!((deriv - expected).abs() < 1e-5, "{node} {c}: {deriv} vs {expected}");
            }
        }
    }

    #[test]
    fn caveat_is_minus_grad_fourth_on_sphere() {
        let g = Grid::unit(2, 64).unwrap();
        let m = sample(&g, FieldRole::Magnetization, |x, v| {
            let th = (PI * x[0]).cos() * (PI * x[1]).cos();
            v.copy_from_slice(&[th.sin(), 0.0, th.cos()]);
        });
        let a = caveat_integral(&m);
        let b = grad_fourth_integral(&m);
        assert!(a < 0.0);
        assert!((a + b).abs() < 1e-2 * b, "{a} {b}");
    }

    #[test]
    fn balance_needs_three_records() {
        let g = Grid::unit(2, 4).unwrap();
        let r = energy(&State::equilibrium(&g, [0.0, 0.0, 1.0]), &Physics::default());
        assert!(matches!(dissipation_balance(&[r, r]), Err(Error::TooFewRecords { .. })));
        let mut recs = [r, r, r];
        for (k, r) in recs.iter_mut().enumerate() {
            r.t = k as f64;
        }
        let b = dissipation_balance(&recs).unwrap();
        assert_eq!(b.worst, 0.0);
        assert_eq!(first_energy_increase(&recs, 0.0), None);
    }

    #[test]
    fn constraint_report_of_unit_field() {
        let g = Grid::unit(2, 8).unwrap();
        let s = State::equilibrium(&g, [1.0, 0.0, 0.0]);
        let mut s2 = s.clone();
        s2.t = 0.1;
        let r = constraint_report(&s2, &s, 1.0);
        assert!(r.phi_inf < 1e-15 && r.residual_inf < 1e-13);
    }
}
