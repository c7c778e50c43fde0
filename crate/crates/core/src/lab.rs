//! Initial-data presets and the verification experiments driven by the CLI.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::f64::consts::PI;

use crate::config::{InitialCondition, SimConfig};
use crate::energetics;
use crate::error::Result;
use crate::field::{sample, sample_with, Field, State};
use crate::grid::{BcTag, FieldRole, Grid};
use crate::integrator;
use crate::leray::{PoissonOptions, Projector};
use crate::ops;
use crate::stability::{self, DecayReport, SpectrumReport};

/// Sum of products of cosines `c * prod_a cos(k_a pi x_a / L_a + p_a)`.
///
/// With zero phases every term is even about each face, so sampled fields
/// satisfy reflected-ghost Neumann conditions to all orders.
#[derive(Clone, Debug)]
pub struct TrigSum {
    terms: Vec<(f64, [f64; 3], [f64; 3])>,
    lengths: [f64; 3],
}

impl TrigSum {
    pub fn random(rng: &mut ChaCha8Rng, grid: &Grid, terms: usize, max_k: u32, phases: bool) -> Self {
        let mut lengths = [1.0; 3];
        lengths[..grid.dim()].copy_from_slice(grid.lengths());
        let step = if grid.is_periodic() { 2.0 } else { 1.0 };
        let terms = (0..terms)
            .map(|_| {
                let c = rng.random_range(-1.0..1.0);
                let mut k = [0.0; 3];
                let mut p = [0.0; 3];
                for a in 0..grid.dim() {
                    k[a] = step * rng.random_range(0..=max_k) as f64;
                    if phases {
                        p[a] = rng.random_range(0.0..2.0 * PI);
                    }
                }
                (c, k, p)
            })
            .collect();
        TrigSum { terms, lengths }
    }

    pub fn eval(&self, x: [f64; 3]) -> f64 {
        self.terms
            .iter()
            .map(|(c, k, p)| c * (0..3).map(|a| (k[a] * PI * x[a] / self.lengths[a] + p[a]).cos()).product::<f64>())
            .sum()
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `sin^2(pi x / L)` on a box (vanishing with its derivative at both faces), `sin(2 pi x / L)` when periodic.
fn wall(grid: &Grid, a: usize, x: f64) -> (f64, f64) {
    let l = grid.lengths()[a];
    if grid.is_periodic() {
        let w = 2.0 * PI / l;
        ((w * x).sin(), w * (w * x).cos())
    } else {
        let w = PI / l;
        ((w * x).sin().powi(2), w * (2.0 * w * x).sin())
    }
}

/// Velocity from a stream function (2D) or vector potential (3D) built from [`wall`] profiles,
/// then projected to be discretely solenoidal.
pub fn solenoidal_velocity(grid: &Grid, amplitude: f64, coeffs: [f64; 3]) -> Result<Field> {
    let g = *grid;
    let u = sample(&g, FieldRole::Velocity, |x, v| {
        let w: Vec<(f64, f64)> = (0..g.dim()).map(|a| wall(&g, a, x[a])).collect();
        if g.dim() == 2 {
            // u = (d_y psi, -d_x psi), psi = s(x) s(y)
            v[0] = amplitude * coeffs[0] * w[0].0 * w[1].1;
            v[1] = -amplitude * coeffs[0] * w[0].1 * w[1].0;
        } else {
            // u = curl(c psi) with psi = s(x) s(y) s(z)
            let grad = [w[0].1 * w[1].0 * w[2].0, w[0].0 * w[1].1 * w[2].0, w[0].0 * w[1].0 * w[2].1];
            let c = coeffs;
            v[0] = amplitude * (grad[1] * c[2] - grad[2] * c[1]);
            v[1] = amplitude * (grad[2] * c[0] - grad[0] * c[2]);
            v[2] = amplitude * (grad[0] * c[1] - grad[1] * c[0]);
        }
    });
    Ok(Projector::new(&g, PoissonOptions::default()).helmholtz_project(&u)?.sigma)
}

/// Deformation `amplitude * prod_a sin(pi x_a / L_a) * C` with a fixed matrix pattern `C`.
fn deformation(grid: &Grid, amplitude: f64, pattern: &[f64]) -> Field {
    let g = *grid;
    sample(&g, FieldRole::Deformation, |x, v| {
        let s: f64 = (0..g.dim())
            .map(|a| {
                let k = if g.is_periodic() { 2.0 } else { 1.0 };
                (k * PI * x[a] / g.lengths()[a]).sin()
            })
            .product();
        for (v, c) in v.iter_mut().zip(pattern) {
            *v = amplitude * s * c;
        }
    })
}

/// Unit magnetization `normalize(m_star + amplitude * (f_1, f_2, f_3))` with even cosine sums.
pub fn perturbed_magnetization(grid: &Grid, m_star: [f64; 3], amplitude: f64, seed: u64) -> Result<Field> {
    let mut r = rng(seed);
    let f: Vec<TrigSum> = (0..3).map(|_| TrigSum::random(&mut r, grid, 4, 2, false)).collect();
    let m = sample(grid, FieldRole::Magnetization, |x, v| {
        for k in 0..3 {
            v[k] = m_star[k] + amplitude * f[k].eval(x);
        }
    });
    crate::field::project_to_sphere(&m)
}

/// Initial state named by `cfg.mode.initial` on the configured grid.
pub fn initial_state(cfg: &SimConfig) -> Result<State> {
    let g = cfg.make_grid()?;
    let m_star = cfg.mode.m_star;
    let a = cfg.mode.amplitude;
    let seed = cfg.mode.seed;
    let d = g.dim();
    let mut s = State::equilibrium(&g, m_star);
    match cfg.mode.initial {
        InitialCondition::Equilibrium => {}
        InitialCondition::Perturbed => {
            let mut r = rng(seed.wrapping_add(1));
            let c = [r.random_range(0.5..1.0), r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)];
            s.u = solenoidal_velocity(&g, a, c)?;
            let pattern: Vec<f64> = (0..d * d).map(|_| r.random_range(-1.0..1.0)).collect();
            s.f = deformation(&g, a, &pattern);
            s.m = perturbed_magnetization(&g, m_star, a, seed)?;
        }
        InitialCondition::Smooth => {
            s.u = solenoidal_velocity(&g, 0.5, [1.0, 0.6, -0.4])?;
            s.f = deformation(&g, 0.5, &[0.8, -0.3, 0.4, 0.6, 0.2, -0.5, 0.1, 0.3, 0.7][..d * d]);
            s.m = smooth_unit_magnetization(&g, 0.8);
        }
        InitialCondition::Planar => {
            s.m = planar_magnetization(&g, 0.8);
        }
    }
    Ok(s)
}

/// `m = (sin th cos ph, sin th sin ph, cos th)` with `th = a cos(pi x) cos(pi y) + 0.3`,
/// `ph = cos(pi x) + 0.5 cos(pi y)`; even about every face.
pub fn smooth_unit_magnetization(grid: &Grid, a: f64) -> Field {
    let g = *grid;
    let k = if g.is_periodic() { 2.0 } else { 1.0 };
    sample(&g, FieldRole::Magnetization, |x, v| {
        let c = |a: usize| if a < g.dim() { (k * PI * x[a] / g.lengths()[a]).cos() } else { 1.0 };
        let th = a * c(0) * c(1) * c(2) + 0.3;
        let ph = c(0) + 0.5 * c(1);
        v.copy_from_slice(&[th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()]);
    })
}

/// Unit magnetization depending on the first coordinate only.
pub fn planar_magnetization(grid: &Grid, a: f64) -> Field {
    let g = *grid;
    let k = if g.is_periodic() { 2.0 } else { 1.0 };
    sample(&g, FieldRole::Magnetization, |x, v| {
        let c = (k * PI * x[0] / g.lengths()[0]).cos();
        let th = a * c + 0.2;
        let ph = 0.7 * (2.0 * k * PI * x[0] / g.lengths()[0]).cos();
        v.copy_from_slice(&[th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()]);
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IdentityRow {
    pub name: String,
    pub residuals: Vec<f64>,
    /// `log2` ratios of consecutive residuals.
    pub orders: Vec<f64>,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NodalCheck {
    pub name: String,
    pub residual: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IdentityReport {
    pub grids: Vec<usize>,
    pub rows: Vec<IdentityRow>,
    pub nodal: Vec<NodalCheck>,
    pub order_window: (f64, f64),
    pub nodal_tol: f64,
}

impl IdentityReport {
    pub fn pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass) && self.nodal.iter().all(|n| n.pass)
    }

    /// Plain-text order-of-convergence table.
    pub fn table(&self) -> String {
        let mut s = format!("{:<28}", "identity");
        for n in &self.grids {
            s += &format!(" {:>12}", format!("{n}^2"));
        }
        for w in self.grids.windows(2) {
            s += &format!(" {:>9}", format!("p{}/{}", w[0], w[1]));
        }
        s += "  status\n";
        for r in &self.rows {
            s += &format!("{:<28}", r.name);
            for v in &r.residuals {
                s += &format!(" {v:>12.4e}");
            }
            for p in &r.orders {
                s += &format!(" {p:>9.3}");
            }
            s += if r.pass { "  pass\n" } else { "  FAIL\n" };
        }
        for n in &self.nodal {
            s += &format!("{:<28} {:>12.4e}  {}\n", n.name, n.residual, if n.pass { "pass" } else { "FAIL" });
        }
        s
    }
}

fn max_abs(f: &Field) -> f64 {
    f.linf()
}

/// Residuals of the differential identities on one grid, in row order.
fn identity_residuals(n: usize, seed: u64) -> Result<Vec<f64>> {
    let g = Grid::unit(2, n)?;
    let mut r = rng(seed);
    let a_terms: Vec<TrigSum> = (0..4).map(|_| TrigSum::random(&mut r, &g, 3, 2, true)).collect();
    let u_terms: Vec<TrigSum> = (0..2).map(|_| TrigSum::random(&mut r, &g, 3, 2, true)).collect();
    let a = sample_with(&g, [2, 2], BcTag::Free, |x, v| {
        for (v, t) in v.iter_mut().zip(&a_terms) {
            *v = t.eval(x);
        }
    });
    let u = sample_with(&g, [2, 1], BcTag::Free, |x, v| {
        for (v, t) in v.iter_mut().zip(&u_terms) {
            *v = t.eval(x);
        }
    });
    // (div A) . u - div(A u) + A : grad u
    let div_a = ops::divergence_matrix(&a);
    let mut au = u.zeros_like();
    for k in 0..g.node_count() {
        let an = a.node(k);
        let un = u.node(k);
        au.node_mut(k).copy_from_slice(&[an[0] * un[0] + an[1] * un[1], an[2] * un[0] + an[3] * un[1]]);
    }
    let div_au = ops::divergence_vector(&au);
    let gu = ops::gradient(&u);
    let mut product = Field::scalar(&g, BcTag::Free);
    for k in 0..g.node_count() {
        let lhs = div_a.node(k)[0] * u.node(k)[0] + div_a.node(k)[1] * u.node(k)[1];
        product.data_mut()[k] = lhs - div_au.data()[k] + ops::frobenius(a.node(k), gu.node(k));
    }
    let r_product = max_abs(&product);

    // m x (m x lap m) + lap m + |grad m|^2 m for unit m
    let m = smooth_unit_magnetization(&g, 0.8);
    let mut dc = ops::double_cross(&m);
    dc.axpy(1.0, &ops::tension(&m).with_bc(BcTag::Free));
    let r_double = max_abs(&dc);

    // B(m) m against div(grad m . grad m^T), and the split form
    let b = ops::magnetic_stress_div(&m);
    let direct = ops::magnetic_stress_div_direct(&m);
    let split = ops::magnetic_stress_div_split(&m);
    let mut d1 = b.clone();
    d1.axpy(-1.0, &direct);
    let mut d2 = direct.clone();
    d2.axpy(-1.0, &split);
    Ok(vec![r_product, r_double, max_abs(&d1), max_abs(&d2)])
}

pub const IDENTITY_NAMES: [&str; 4] = [
    "product rule for div A",
    "double cross product",
    "B(m)m vs div(grad m grad m)",
    "stress split identity",
];

fn nodal_checks(seed: u64, tol: f64) -> Result<Vec<NodalCheck>> {
    let g = Grid::unit(2, 16)?;
    let mut r = rng(seed ^ 0x5eed);
    let mut skew: f64 = 0.0;
    let mut kills: f64 = 0.0;
    for _ in 0..200 {
        let m = [r.random_range(-2.0..2.0), r.random_range(-2.0..2.0), r.random_range(-2.0..2.0)];
        let k = ops::cross_matrix(m);
        for i in 0..3 {
            for j in 0..3 {
                skew = skew.max((k[i][j] + k[j][i]).abs());
            }
        }
        kills = kills.max(ops::mat3_vec(&k, m).iter().fold(0.0, |a, v| a.max(v.abs())));
    }
    let terms: Vec<TrigSum> = (0..6).map(|_| TrigSum::random(&mut r, &g, 3, 2, true)).collect();
    let u = sample(&g, FieldRole::Velocity, |x, v| {
        v[0] = terms[0].eval(x);
        v[1] = terms[1].eval(x);
    });
    let f = sample_with(&g, [2, 2], BcTag::DirichletZero, |x, v| {
        for (i, v) in v.iter_mut().enumerate() {
            *v = terms[2 + i].eval(x);
        }
    });
    let st = ops::stretch(&u, &f);
    let ff = ops::outer_self(&f);
    let gu = ops::gradient(&u);
    let mut contraction: f64 = 0.0;
    for k in 0..g.node_count() {
        let a = ops::frobenius(st.node(k), f.node(k));
        let b = ops::frobenius(ff.node(k), gu.node(k));
        contraction = contraction.max((a - b).abs() / a.abs().max(b.abs()).max(1.0));
    }
    Ok([("M(m) skew", skew), ("M(m) m = 0", kills), ("stretch contraction", contraction)]
        .into_iter()
        .map(|(n, v)| NodalCheck {
            name: n.into(),
            residual: v,
            pass: v <= tol,
        })
        .collect())
}

/// Runs the identity suite on `n x n` unit-square grids.
pub fn identity_suite(grids: &[usize], seed: u64) -> Result<IdentityReport> {
    let order_window = (1.7, 2.3);
    let per_grid: Vec<Vec<f64>> = grids.iter().map(|&n| identity_residuals(n, seed)).collect::<Result<_>>()?;
    let rows = IDENTITY_NAMES
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let residuals: Vec<f64> = per_grid.iter().map(|r| r[k]).collect();
            let orders: Vec<f64> = residuals.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
            let pass = !orders.is_empty() && orders.iter().all(|p| *p >= order_window.0 && *p <= order_window.1);
            IdentityRow {
                name: (*name).into(),
                residuals,
                orders,
                pass,
            }
        })
        .collect();
    let nodal_tol = 1e-12;
    Ok(IdentityReport {
        grids: grids.to_vec(),
        rows,
        nodal: nodal_checks(seed, nodal_tol)?,
        order_window,
        nodal_tol,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayOutcome {
    pub decay: DecayReport,
    pub spectrum: SpectrumReport,
    /// `-fitted rate / spectral gap`.
    pub rate_ratio: f64,
}

/// Runs a perturbation of `(0, 0, m_star)` and fits its decay against the spectral gap
/// of the linearization on the same grid.
pub fn decay_experiment(cfg: &SimConfig, t_start: f64, floor: f64) -> Result<DecayOutcome> {
    let mut cfg = cfg.clone();
    cfg.mode.initial = InitialCondition::Perturbed;
    let s0 = initial_state(&cfg)?;
    let traj = integrator::run(&cfg, &s0)?;
    let decay = stability::fit_decay_rate(&traj, t_start, floor)?;
    let op = stability::assemble_linearization(s0.grid(), cfg.mode.m_star, &cfg.physics())?;
    let spectrum = stability::spectrum(&op, Some(cfg.mode.seed))?;
    let rate_ratio = -decay.fit.rate / spectrum.spectral_gap;
    Ok(DecayOutcome {
        decay,
        spectrum,
        rate_ratio,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CaveatSample {
    pub index: usize,
    pub amplitude: f64,
    pub value: f64,
}

/// Searches `m = (1 + a cos(pi x), a sum_k b_k cos(k pi x), 0)` for seeded `a, b_k`
/// for a field with `int |grad m|^2 (m . lap m) > 0`. The sign is fixed (negative)
/// on the sphere and for fields of one fixed direction.
pub fn caveat_search(grid: &Grid, samples: usize, seed: u64) -> Option<CaveatSample> {
    let mut r = rng(seed);
    let g = *grid;
    (0..samples).find_map(|index| {
        let amplitude: f64 = r.random_range(0.02..0.3);
        let b: [f64; 3] = std::array::from_fn(|_| r.random_range(-1.0..1.0));
        let m = sample(&g, FieldRole::Magnetization, |x, v| {
            let s = PI * x[0] / g.lengths()[0];
            let tail: f64 = b.iter().enumerate().map(|(k, b)| b * ((k + 1) as f64 * s).cos()).sum();
            v.copy_from_slice(&[1.0 + amplitude * s.cos(), amplitude * tail, 0.0]);
        });
        let value = energetics::caveat_integral(&m);
        (value > 0.0).then_some(CaveatSample { index, amplitude, value })
    })
}

/// Uniformly distributed unit vectors from `seed`.
pub fn random_unit_vectors(seed: u64, count: usize) -> Vec<[f64; 3]> {
    let mut r = rng(seed);
    (0..count)
        .map(|_| {
            let z: f64 = r.random_range(-1.0..1.0);
            let phi: f64 = r.random_range(0.0..2.0 * PI);
            let s = (1.0 - z * z).sqrt();
            [s * phi.cos(), s * phi.sin(), z]
        })
        .collect()
}
