//! Discrete right-hand sides against exact derivatives of closed-form fields.
//! The exact values come from a second-order jet (value, gradient, Hessian)
//! carried through the closed forms, independent of any stencil.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};

use magvisc::field::{sample, Field};
use magvisc::grid::{FieldRole, Grid};
use magvisc::ops;

#[derive(Clone, Copy, Debug)]
struct Jet {
    v: f64,
    g: [f64; 2],
    h: [[f64; 2]; 2],
}

impl Jet {
    fn c(v: f64) -> Jet {
        Jet { v, g: [0.0; 2], h: [[0.0; 2]; 2] }
    }

    fn coord(a: usize, x: f64) -> Jet {
        let mut j = Jet::c(x);
        j.g[a] = 1.0;
        j
    }

    /// `f(self)` given `f, f', f''` at the value.
    fn chain(self, f: f64, df: f64, d2f: f64) -> Jet {
        let mut out = Jet::c(f);
        for a in 0..2 {
            out.g[a] = df * self.g[a];
            for b in 0..2 {
                out.h[a][b] = df * self.h[a][b] + d2f * self.g[a] * self.g[b];
            }
        }
        out
    }

    fn sin(self) -> Jet {
        self.chain(self.v.sin(), self.v.cos(), -self.v.sin())
    }

    fn cos(self) -> Jet {
        self.chain(self.v.cos(), -self.v.sin(), -self.v.cos())
    }

    fn lap(&self) -> f64 {
        self.h[0][0] + self.h[1][1]
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        let mut r = self;
        r.v += o.v;
        for a in 0..2 {
            r.g[a] += o.g[a];
            for b in 0..2 {
                r.h[a][b] += o.h[a][b];
            }
        }
        r
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        self + o * Jet::c(-1.0)
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        let mut r = Jet::c(self.v * o.v);
        for a in 0..2 {
            r.g[a] = self.g[a] * o.v + self.v * o.g[a];
            for b in 0..2 {
                r.h[a][b] = self.h[a][b] * o.v + self.g[a] * o.g[b] + self.g[b] * o.g[a] + self.v * o.h[a][b];
            }
        }
        r
    }
}

fn k(v: f64) -> Jet {
    Jet::c(v)
}

struct Manufactured {
    u: [Jet; 2],
    f: [Jet; 4],
    m: [Jet; 3],
    pi: Jet,
}

/// Closed forms: `u`, `F` vanish on the faces of the unit square, `m` and `pi` are even about them.
fn manufactured(x: [f64; 3]) -> Manufactured {
    let px = Jet::coord(0, x[0]) * k(PI);
    let py = Jet::coord(1, x[1]) * k(PI);
    let bubble = px.sin() * py.sin();
    Manufactured {
        u: [bubble * (k(1.0) + k(0.3) * px.cos()), bubble * k(0.5) * (py * k(2.0)).cos()],
        f: [
            bubble * k(0.7),
            bubble * px.sin() * k(0.4),
            bubble * py.cos() * k(-0.6),
            bubble * (k(0.2) + px.cos() * py.cos()),
        ],
        m: [px.cos() * py.cos() * k(0.5), (px * k(2.0)).cos() * k(0.3), k(1.0) + py.cos() * k(0.2)],
        pi: px.cos() * (py * k(2.0)).cos(),
    }
}

fn fields(g: &Grid) -> (Field, Field, Field, Field) {
    let u = sample(g, FieldRole::Velocity, |x, v| {
        let s = manufactured(x);
        v[0] = s.u[0].v;
        v[1] = s.u[1].v;
    });
    let f = sample(g, FieldRole::Deformation, |x, v| {
        let s = manufactured(x);
        for (v, j) in v.iter_mut().zip(&s.f) {
            *v = j.v;
        }
    });
    let m = sample(g, FieldRole::Magnetization, |x, v| {
        let s = manufactured(x);
        for (v, j) in v.iter_mut().zip(&s.m) {
            *v = j.v;
        }
    });
    let pi = sample(g, FieldRole::Pressure, |x, v| v[0] = manufactured(x).pi.v);
    (u, f, m, pi)
}

fn exact_momentum(s: &Manufactured, mu_s: f64) -> [f64; 2] {
    let mut out = [0.0; 2];
    for i in 0..2 {
        let adv: f64 = (0..2).map(|kk| s.u[kk].v * s.u[i].g[kk]).sum();
        // [div(grad m grad m^T)]_i = sum_c (lap m_c d_i m_c + d_j m_c d_ij m_c)
        let mag: f64 = s.m.iter().map(|mc| mc.lap() * mc.g[i] + (0..2).map(|j| mc.g[j] * mc.h[i][j]).sum::<f64>()).sum();
        // [div(F F^T)]_i = sum_jk d_j(F_jk F_ik)
        let el: f64 = (0..2)
            .flat_map(|j| (0..2).map(move |kk| (j, kk)))
            .map(|(j, kk)| s.f[j * 2 + kk].g[j] * s.f[i * 2 + kk].v + s.f[j * 2 + kk].v * s.f[i * 2 + kk].g[j])
            .sum();
        out[i] = mu_s * s.u[i].lap() - adv - s.pi.g[i] - mag + el;
    }
    out
}

fn exact_deformation(s: &Manufactured, kappa: f64) -> [f64; 4] {
    let mut out = [0.0; 4];
    for i in 0..2 {
        for j in 0..2 {
            let f = &s.f[i * 2 + j];
            let stretch: f64 = (0..2).map(|kk| s.u[i].g[kk] * s.f[kk * 2 + j].v).sum();
            let adv: f64 = (0..2).map(|kk| s.u[kk].v * f.g[kk]).sum();
            out[i * 2 + j] = kappa * f.lap() + stretch - adv;
        }
    }
    out
}

fn exact_llg(s: &Manufactured, alpha: f64, beta: f64) -> [f64; 3] {
    let m = [s.m[0].v, s.m[1].v, s.m[2].v];
    let lap = [s.m[0].lap(), s.m[1].lap(), s.m[2].lap()];
    let gsq: f64 = s.m.iter().map(|c| c.g[0] * c.g[0] + c.g[1] * c.g[1]).sum();
    let cross = ops::cross(m, lap);
    std::array::from_fn(|c| {
        let adv: f64 = (0..2).map(|a| s.u[a].v * s.m[c].g[a]).sum();
        alpha * lap[c] - beta * cross[c] + alpha * gsq * m[c] - adv
    })
}

/// Max residual over interior nodes for each grid, and the observed orders.
fn refinement<R>(grids: &[usize], residual: R) -> (Vec<f64>, Vec<f64>)
where
    R: Fn(&Grid) -> f64,
{
    let r: Vec<f64> = grids.iter().map(|&n| residual(&Grid::unit(2, n).unwrap())).collect();
    let p = r.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    (r, p)
}

fn interior_max<E>(g: &Grid, discrete: &Field, exact: E) -> f64
where
    E: Fn([f64; 3]) -> Vec<f64>,
{
    (0..g.node_count())
        .filter(|&n| !g.is_boundary(n))
        .map(|n| {
            let e = exact(g.coords(n));
            discrete.node(n).iter().zip(&e).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

fn assert_second_order(name: &str, r: &[f64], p: &[f64]) {
    assert!(p.iter().all(|p| (1.7..=2.3).contains(p)), "{name}: residuals {r:?} orders {p:?}");
}

#[test]
fn momentum_rhs_manufactured_second_order() {
    let (r, p) = refinement(&[16, 32, 64], |g| {
        let (u, f, m, pi) = fields(g);
        let rhs = ops::momentum_rhs(&u, &f, &m, &pi, 0.8);
        interior_max(g, &rhs, |x| exact_momentum(&manufactured(x), 0.8).to_vec())
    });
    assert_second_order("momentum", &r, &p);
}

#[test]
fn deformation_rhs_manufactured_second_order() {
    let (r, p) = refinement(&[16, 32, 64], |g| {
        let (u, f, _, _) = fields(g);
        let rhs = ops::deformation_rhs(&f, &u, 1.3);
        interior_max(g, &rhs, |x| exact_deformation(&manufactured(x), 1.3).to_vec())
    });
    assert_second_order("deformation", &r, &p);
}

#[test]
fn llg_rhs_manufactured_second_order() {
    let (r, p) = refinement(&[16, 32, 64], |g| {
        let (u, _, m, _) = fields(g);
        let rhs = ops::llg_rhs(&m, &u, 1.0, 0.5);
        // the Neumann field is second order up to and including the faces
        (0..g.node_count())
            .map(|n| {
                let e = exact_llg(&manufactured(g.coords(n)), 1.0, 0.5);
                (0..3).map(|c| (rhs.get(n, c) - e[c]).abs()).fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    });
    assert_second_order("llg", &r, &p);
}

#[test]
fn magnetic_stress_matches_exact_divergence() {
    let (r, p) = refinement(&[16, 32, 64], |g| {
        let (_, _, m, _) = fields(g);
        let b = ops::magnetic_stress_div(&m);
        interior_max(g, &b, |x| {
            let s = manufactured(x);
            (0..2)
                .map(|i| s.m.iter().map(|mc| mc.lap() * mc.g[i] + (0..2).map(|j| mc.g[j] * mc.h[i][j]).sum::<f64>()).sum())
                .collect()
        })
    });
    assert_second_order("B(m)m", &r, &p);
}

#[test]
fn llg_forms_agree_for_unit_fields() {
    // (alpha - beta m x) lap m + alpha |grad m|^2 m against -alpha m x (m x lap m) - beta m x lap m
    let (r, p) = refinement(&[16, 32, 64], |g| {
        let m = magvisc::lab::smooth_unit_magnetization(g, 0.8);
        let zero = Field::for_role(g, FieldRole::Velocity);
        let a = ops::llg_rhs(&m, &zero, 1.0, 0.5);
        let dc = ops::double_cross(&m);
        let lap = ops::laplacian(&m);
        (0..g.node_count())
            .map(|n| {
                let mc = ops::cross(m.node_vec3(n), lap.node_vec3(n));
                (0..3).map(|c| (a.get(n, c) + dc.get(n, c) + 0.5 * mc[c]).abs()).fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    });
    assert_second_order("llg forms", &r, &p);
}

#[test]
fn elastic_stress_linear_entry() {
    // F_11 = x gives div(F F^T) = (2x, 0)
    let g = Grid::unit(2, 16).unwrap();
    let f = magvisc::field::sample_with(&g, [2, 2], magvisc::BcTag::Free, |x, v| v[0] = x[0]);
    let s = ops::elastic_stress_div(&f);
    for n in (0..g.node_count()).filter(|&n| !g.is_boundary(n)) {
        let x = g.coords(n);
        assert!((s.get(n, 0) - 2.0 * x[0]).abs() < 1e-12);
        assert!(s.get(n, 1).abs() < 1e-12);
    }
}

#[test]
fn operators_are_linear() {
    let g = Grid::unit(2, 12).unwrap();
    let (u, f, m, _) = fields(&g);
    let m2 = magvisc::lab::smooth_unit_magnetization(&g, 0.5);
    let (a, b) = (0.7, -1.9);
    let mut comb = m.clone();
    comb.scale(a);
    comb.axpy(b, &m2);
    for op in [ops::laplacian as fn(&Field) -> Field, ops::gradient] {
        let lhs = op(&comb);
        let mut rhs = op(&m);
        rhs.scale(a);
        rhs.axpy(b, &op(&m2));
        let scale = lhs.linf().max(1.0);
        assert!(lhs.data().iter().zip(rhs.data()).all(|(x, y)| (x - y).abs() <= 1e-12 * scale));
    }
    let mut fu = f.clone();
    fu.scale(a);
    let d = ops::divergence_matrix(&fu);
    let mut d0 = ops::divergence_matrix(&f);
    d0.scale(a);
    assert!(d.data().iter().zip(d0.data()).all(|(x, y)| (x - y).abs() <= 1e-12 * d.linf().max(1.0)));
    let mut uu = u.clone();
    uu.scale(b);
    let v = ops::divergence_vector(&uu);
    let mut v0 = ops::divergence_vector(&u);
    v0.scale(b);
    assert!(v.data().iter().zip(v0.data()).all(|(x, y)| (x - y).abs() <= 1e-12 * v.linf().max(1.0)));
}
