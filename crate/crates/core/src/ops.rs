//! Second-order finite-difference operators on nodal fields.
//!
//! Index conventions: `[grad u]_ij = d_i u_j`, `[div A]_i = d_j A_ji`.
//! Centred differences are used at interior nodes. At faces, first and second
//! differences are closed according to the field's [`BcTag`]: ghost
//! reflection for Neumann fields, one-sided second-order formulas for
//! Dirichlet and derived fields, wrap-around for periodic grids.

use crate::field::Field;
use crate::grid::{BcTag, Closure, Grid};

pub type Mat3 = [[f64; 3]; 3];

/// Physical coefficients of the coupled system.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Physics {
    pub mu_s: f64,
    pub kappa: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl Default for Physics {
    fn default() -> Self {
        Physics {
            mu_s: 1.0,
            kappa: 1.0,
            alpha: 1.0,
            beta: 0.5,
        }
    }
}

/// A 1D difference stencil: absolute indices along one axis with weights.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct Stencil {
    pub idx: [usize; 4],
    pub w: [f64; 4],
    pub len: usize,
}

impl Stencil {
    fn push(&mut self, i: usize, w: f64) {
        self.idx[self.len] = i;
        self.w[self.len] = w;
        self.len += 1;
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.idx[..self.len].iter().copied().zip(self.w[..self.len].iter().copied())
    }
}

pub(crate) fn d1_stencil(i: usize, n: usize, h: f64, closure: Closure) -> Stencil {
    let mut s = Stencil::default();
    let c = 0.5 / h;
    match closure {
        Closure::Wrap => {
            s.push((i + 1) % n, c);
            s.push((i + n - 1) % n, -c);
        }
        _ if i > 0 && i + 1 < n => {
            s.push(i + 1, c);
            s.push(i - 1, -c);
        }
        // reflected ghost cancels the neighbour: zero normal derivative
        Closure::Reflect => {}
        Closure::OneSided if i == 0 => {
            s.push(0, -3.0 * c);
            s.push(1, 4.0 * c);
            s.push(2, -c);
        }
        Closure::OneSided => {
            s.push(n - 1, 3.0 * c);
            s.push(n - 2, -4.0 * c);
            s.push(n - 3, c);
        }
    }
    s
}

pub(crate) fn d2_stencil(i: usize, n: usize, h: f64, closure: Closure) -> Stencil {
    let mut s = Stencil::default();
    let c = 1.0 / (h * h);
    match closure {
        Closure::Wrap => {
            s.push((i + 1) % n, c);
            s.push(i, -2.0 * c);
            s.push((i + n - 1) % n, c);
        }
        _ if i > 0 && i + 1 < n => {
            s.push(i + 1, c);
            s.push(i, -2.0 * c);
            s.push(i - 1, c);
        }
        Closure::Reflect if i == 0 => {
            s.push(1, 2.0 * c);
            s.push(0, -2.0 * c);
        }
        Closure::Reflect => {
            s.push(n - 2, 2.0 * c);
            s.push(n - 1, -2.0 * c);
        }
        Closure::OneSided if i == 0 => {
            s.push(0, 2.0 * c);
            s.push(1, -5.0 * c);
            s.push(2, 4.0 * c);
            s.push(3, -c);
        }
        Closure::OneSided => {
            s.push(n - 1, 2.0 * c);
            s.push(n - 2, -5.0 * c);
            s.push(n - 3, 4.0 * c);
            s.push(n - 4, -c);
        }
    }
    s
}

fn closure_for(grid: &Grid, bc: BcTag) -> Closure {
    if grid.is_periodic() {
        Closure::Wrap
    } else {
        bc.closure()
    }
}

fn axis_stencils(grid: &Grid, axis: usize, closure: Closure, second: bool) -> Vec<Stencil> {
    let n = grid.nodes_on_axis(axis);
    let h = grid.spacing(axis);
    (0..n)
        .map(|i| {
            if second {
                d2_stencil(i, n, h, closure)
            } else {
                d1_stencil(i, n, h, closure)
            }
        })
        .collect()
}

/// Applies a 1D stencil family along `axis` to every component of `src`.
fn apply_axis(src: &[f64], nc: usize, grid: &Grid, axis: usize, st: &[Stencil], out: &mut [f64]) {
    let stride = grid.stride(axis);
    for node in 0..grid.node_count() {
        let i = grid.multi_index(node)[axis];
        let base = node - i * stride;
        let o = &mut out[node * nc..(node + 1) * nc];
        o.fill(0.0);
        for (j, w) in st[i].iter() {
            let nb = (base + j * stride) * nc;
            for c in 0..nc {
                o[c] += w * src[nb + c];
            }
        }
    }
}

/// First derivative along `axis` of every component, closed per `bc`.
pub(crate) fn d1(f: &Field, axis: usize, bc: BcTag) -> Vec<f64> {
    let grid = f.grid();
    let st = axis_stencils(grid, axis, closure_for(grid, bc), false);
    let mut out = vec![0.0; f.data().len()];
    apply_axis(f.data(), f.ncomp(), grid, axis, &st, &mut out);
    out
}

/// Second derivative along `axis` of every component, closed per `bc`.
pub(crate) fn d2(f: &Field, axis: usize, bc: BcTag) -> Vec<f64> {
    let grid = f.grid();
    let st = axis_stencils(grid, axis, closure_for(grid, bc), true);
    let mut out = vec![0.0; f.data().len()];
    apply_axis(f.data(), f.ncomp(), grid, axis, &st, &mut out);
    out
}

/// Mixed derivative `d_a d_b` (a != b) as the tensor product of first differences.
pub(crate) fn d_mixed(f: &Field, a: usize, b: usize, bc: BcTag) -> Vec<f64> {
    let grid = f.grid();
    let closure = closure_for(grid, bc);
    let sa = axis_stencils(grid, a, closure, false);
    let sb = axis_stencils(grid, b, closure, false);
    let nc = f.ncomp();
    let mut tmp = vec![0.0; f.data().len()];
    apply_axis(f.data(), nc, grid, b, &sb, &mut tmp);
    let mut out = vec![0.0; f.data().len()];
    apply_axis(&tmp, nc, grid, a, &sa, &mut out);
    out
}

/// All first derivatives: entry `[axis]` holds `d_axis f` for every component.
fn first_derivatives(f: &Field) -> Vec<Vec<f64>> {
    (0..f.grid().dim()).map(|a| d1(f, a, f.bc())).collect()
}

/// `[grad f]_(i, c) = d_i f_c`; the result has shape `[dim, ncomp(f)]`.
pub fn gradient(f: &Field) -> Field {
    let grid = *f.grid();
    let d = grid.dim();
    let nc = f.ncomp();
    let parts = first_derivatives(f);
    let mut out = Field::tensor(&grid, d, nc, free_tag(&grid));
    for n in 0..grid.node_count() {
        let o = out.node_mut(n);
        for i in 0..d {
            o[i * nc..(i + 1) * nc].copy_from_slice(&parts[i][n * nc..(n + 1) * nc]);
        }
    }
    out
}

fn free_tag(grid: &Grid) -> BcTag {
    if grid.is_periodic() {
        BcTag::Periodic
    } else {
        BcTag::Free
    }
}

/// `[div A]_i = d_j A_ji` for a tensor with `dim` rows.
pub fn divergence_matrix(a: &Field) -> Field {
    let grid = *a.grid();
    let d = grid.dim();
    let [rows, cols] = a.shape();
    assert_eq!(rows, d, "divergence expects a tensor with one row per axis");
    let mut out = Field::vector(&grid, cols, free_tag(&grid));
    for j in 0..d {
        let dj = d1(a, j, a.bc());
        for n in 0..grid.node_count() {
            let o = out.node_mut(n);
            for i in 0..cols {
                o[i] += dj[n * rows * cols + j * cols + i];
            }
        }
    }
    out
}

/// Scalar divergence `d_i v_i` of a vector field with `dim` components.
pub fn divergence_vector(v: &Field) -> Field {
    let grid = *v.grid();
    let d = grid.dim();
    assert_eq!(v.ncomp(), d);
    let mut out = Field::scalar(&grid, free_tag(&grid));
    for i in 0..d {
        let di = d1(v, i, v.bc());
        for n in 0..grid.node_count() {
            out.data_mut()[n] += di[n * d + i];
        }
    }
    out
}

/// Compact Laplacian (5-point in 2D, 7-point in 3D) closed according to the field's tag.
///
/// Dirichlet fields get zero output on faces; Neumann fields use reflected ghosts.
pub fn laplacian(f: &Field) -> Field {
    let grid = *f.grid();
    let mut out = f.zeros_like();
    for a in 0..grid.dim() {
        let da = d2(f, a, f.bc());
        for (o, v) in out.data_mut().iter_mut().zip(&da) {
            *o += v;
        }
    }
    out.enforce_bc();
    out
}

/// Directional derivative `(u . grad) f` of any field.
pub fn advect(u: &Field, f: &Field) -> Field {
    let grid = *f.grid();
    let d = grid.dim();
    let nc = f.ncomp();
    let parts = first_derivatives(f);
    let mut out = Field::zeros(&grid, f.shape(), free_tag(&grid));
    for n in 0..grid.node_count() {
        let un = u.node(n);
        let o = out.node_mut(n);
        for i in 0..d {
            if un[i] == 0.0 {
                continue;
            }
            for c in 0..nc {
                o[c] += un[i] * parts[i][n * nc + c];
            }
        }
    }
    out
}

/// Nodal squared gradient norm `|grad f|^2 = sum_i |d_i f|^2`.
pub fn grad_sq(f: &Field) -> Field {
    let grid = *f.grid();
    let nc = f.ncomp();
    let parts = first_derivatives(f);
    let mut out = Field::scalar(&grid, free_tag(&grid));
    for n in 0..grid.node_count() {
        let mut s = 0.0;
        for p in &parts {
            for c in 0..nc {
                s += p[n * nc + c] * p[n * nc + c];
            }
        }
        out.data_mut()[n] = s;
    }
    out
}

#[inline]
pub fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// The skew matrix with `cross_matrix(m) v = m x v`.
pub fn cross_matrix(m: [f64; 3]) -> Mat3 {
    [[0.0, -m[2], m[1]], [m[2], 0.0, -m[0]], [-m[1], m[0], 0.0]]
}

/// Nodal skew matrices of a magnetization field.
pub fn cross_matrix_field(m: &Field) -> Vec<Mat3> {
    (0..m.grid().node_count()).map(|n| cross_matrix(m.node_vec3(n))).collect()
}

#[inline]
pub fn mat3_vec(a: &Mat3, v: [f64; 3]) -> [f64; 3] {
    [
        a[0][0] * v[0] + a[0][1] * v[1] + a[0][2] * v[2],
        a[1][0] * v[0] + a[1][1] * v[1] + a[1][2] * v[2],
        a[2][0] * v[0] + a[2][1] * v[1] + a[2][2] * v[2],
    ]
}

/// `[B(m) h]_i = d_i m . lap h + grad m : d_i grad h`, the linear operator whose
/// value at `h = m` is the magnetic stress divergence.
pub fn b_operator(m: &Field, h: &Field) -> Field {
    let grid = *m.grid();
    let d = grid.dim();
    let dm = first_derivatives(m);
    let lap_h = laplacian(h);
    // second derivatives d_i d_j h, stored for i <= j
    let mut dd: Vec<Vec<Vec<f64>>> = vec![vec![Vec::new(); d]; d];
    for i in 0..d {
        for j in i..d {
            dd[i][j] = if i == j {
                d2(h, i, h.bc())
            } else {
                d_mixed(h, i, j, h.bc())
            };
        }
    }
    let mut out = Field::vector(&grid, d, free_tag(&grid));
    for n in 0..grid.node_count() {
        let lh = lap_h.node(n);
        for i in 0..d {
            let mut s = 0.0;
            for k in 0..3 {
                s += dm[i][n * 3 + k] * lh[k];
            }
            for j in 0..d {
                let second = if i <= j { &dd[i][j] } else { &dd[j][i] };
                for k in 0..3 {
                    s += dm[j][n * 3 + k] * second[n * 3 + k];
                }
            }
            out.set(n, i, s);
        }
    }
    out
}

/// `B(m) m`, equal to `div(grad m . grad m^T)`.
pub fn magnetic_stress_div(m: &Field) -> Field {
    b_operator(m, m)
}

/// `div(grad m . grad m^T)` assembled from the nodal tensor `d_i m . d_j m`.
pub fn magnetic_stress_div_direct(m: &Field) -> Field {
    let grid = *m.grid();
    let d = grid.dim();
    let g = gradient(m);
    let mut t = Field::tensor(&grid, d, d, free_tag(&grid));
    for n in 0..grid.node_count() {
        let gn = g.node(n);
        let tn = t.node_mut(n);
        for i in 0..d {
            for j in 0..d {
                tn[i * d + j] = (0..3).map(|k| gn[i * 3 + k] * gn[j * 3 + k]).sum();
            }
        }
    }
    divergence_matrix(&t)
}

/// `grad m lap m + 1/2 grad |grad m|^2`, a third route to the magnetic stress divergence.
pub fn magnetic_stress_div_split(m: &Field) -> Field {
    let grid = *m.grid();
    let d = grid.dim();
    let g = gradient(m);
    let lap = laplacian(m);
    let gsq = grad_sq(m);
    let ggsq = gradient(&gsq);
    let mut out = Field::vector(&grid, d, free_tag(&grid));
    for n in 0..grid.node_count() {
        let gn = g.node(n);
        let ln = lap.node(n);
        for i in 0..d {
            let a: f64 = (0..3).map(|k| gn[i * 3 + k] * ln[k]).sum();
            out.set(n, i, a + 0.5 * ggsq.get(n, i));
        }
    }
    out
}

/// Nodal `A A^T` of a square tensor field.
pub fn outer_self(f: &Field) -> Field {
    let grid = *f.grid();
    let [r, c] = f.shape();
    let mut out = Field::tensor(&grid, r, r, free_tag(&grid));
    for n in 0..grid.node_count() {
        let a = f.node(n);
        let o = out.node_mut(n);
        for i in 0..r {
            for j in 0..r {
                o[i * r + j] = (0..c).map(|k| a[i * c + k] * a[j * c + k]).sum();
            }
        }
    }
    out
}

/// `div(F F^T)`.
pub fn elastic_stress_div(f: &Field) -> Field {
    divergence_matrix(&outer_self(f))
}

/// `m x (m x lap m)` by two nodal cross products.
pub fn double_cross(m: &Field) -> Field {
    let lap = laplacian(m);
    let mut out = m.zeros_like().with_bc(free_tag(m.grid()));
    for n in 0..m.grid().node_count() {
        let mn = m.node_vec3(n);
        let v = cross(mn, cross(mn, lap.node_vec3(n)));
        out.node_mut(n).copy_from_slice(&v);
    }
    out
}

/// Tension field `lap m + |grad m|^2 m`.
pub fn tension(m: &Field) -> Field {
    let mut lap = laplacian(m);
    let gsq = grad_sq(m);
    for n in 0..m.grid().node_count() {
        let g = gsq.data()[n];
        let mn = m.node_vec3(n);
        let o = lap.node_mut(n);
        for k in 0..3 {
            o[k] += g * mn[k];
        }
    }
    lap
}

/// `(alpha I - beta M(m)) lap m + alpha |grad m|^2 m - u . grad m`.
pub fn llg_rhs(m: &Field, u: &Field, alpha: f64, beta: f64) -> Field {
    let grid = *m.grid();
    let lap = laplacian(m);
    let gsq = grad_sq(m);
    let adv = advect(u, m);
    let mut out = m.zeros_like();
    for n in 0..grid.node_count() {
        let mn = m.node_vec3(n);
        let l = lap.node_vec3(n);
        let mxl = cross(mn, l);
        let g = gsq.data()[n];
        let a = adv.node(n);
        let o = out.node_mut(n);
        for k in 0..3 {
            o[k] = alpha * l[k] - beta * mxl[k] + alpha * g * mn[k] - a[k];
        }
    }
    out
}

/// Velocity right-hand side
/// `mu_s lap u - u . grad u - grad pi - div(grad m . grad m^T) + div(F F^T)`
/// with zero output on faces.
pub fn momentum_rhs(u: &Field, f: &Field, m: &Field, pi: &Field, mu_s: f64) -> Field {
    let mut out = laplacian(u);
    out.scale(mu_s);
    out.axpy(-1.0, &advect(u, u));
    out.axpy(-1.0, &pressure_gradient(pi));
    out.axpy(-1.0, &magnetic_stress_div(m));
    out.axpy(1.0, &elastic_stress_div(f));
    out.enforce_bc();
    out
}

/// Centred gradient of a scalar as a velocity-shaped field.
pub fn pressure_gradient(pi: &Field) -> Field {
    let grid = *pi.grid();
    let d = grid.dim();
    let mut out = Field::vector(&grid, d, free_tag(&grid));
    for a in 0..d {
        let da = d1(pi, a, pi.bc());
        for n in 0..grid.node_count() {
            out.set(n, a, da[n]);
        }
    }
    out
}

/// Nodal `(grad u)^T F`, i.e. `sum_k d_k u_i F_kj`.
pub fn stretch(u: &Field, f: &Field) -> Field {
    let grid = *f.grid();
    let d = grid.dim();
    let gu = gradient(u);
    let mut out = f.zeros_like();
    for n in 0..grid.node_count() {
        let g = gu.node(n);
        let fnode = f.node(n);
        let o = out.node_mut(n);
        for i in 0..d {
            for j in 0..d {
                o[i * d + j] = (0..d).map(|k| g[k * d + i] * fnode[k * d + j]).sum();
            }
        }
    }
    out
}

/// Deformation right-hand side `kappa lap F + (grad u)^T F - u . grad F` with zero output on faces.
pub fn deformation_rhs(f: &Field, u: &Field, kappa: f64) -> Field {
    let mut out = laplacian(f);
    out.scale(kappa);
    out.axpy(1.0, &stretch(u, f));
    out.axpy(-1.0, &advect(u, f));
    out.enforce_bc();
    out
}

/// Nodal Frobenius product `A : B = tr(A B^T)` of two tensors of equal shape.
pub fn frobenius(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{sample, sample_with};
    use crate::grid::{FieldRole, Grid};
    use std::f64::consts::PI;

    fn max_interior(f: &Field) -> f64 {
        let g = f.grid();
        (0..g.node_count())
            .filter(|&n| !g.is_boundary(n))
            .flat_map(|n| f.node(n).to_vec())
            .fold(0.0, |m, v: f64| m.max(v.abs()))
    }

    #[test]
    fn gradient_of_linear_field_is_exact() {
        let g = Grid::unit(2, 8).unwrap();
        let u = sample_with(&g, [2, 1], BcTag::Free, |x, v| v.copy_from_slice(&[x[1], 0.0]));
        let gu = gradient(&u);
        // [grad u]_ij = d_i u_j: only entry (1, 0) is one
        for n in 0..g.node_count() {
            let e = gu.node(n);
            assert!((e[0]).abs() < 1e-13 && (e[1]).abs() < 1e-13);
            assert!((e[2] - 1.0).abs() < 1e-13 && e[3].abs() < 1e-13);
        }
        let c = sample_with(&g, [3, 1], BcTag::NeumannZero, |_, v| v.copy_from_slice(&[1.0, 2.0, 3.0]));
        assert_eq!(gradient(&c).linf(), 0.0);
    }

    #[test]
    fn periodic_gradient_converges() {
        let errs: Vec<f64> = [16, 32, 64]
            .iter()
            .map(|&n| {
                let g = Grid::periodic(2, &[n, n], &[2.0 * PI, 2.0 * PI]).unwrap();
                let u = sample_with(&g, [2, 1], BcTag::Periodic, |x, v| v.copy_from_slice(&[x[0].sin(), 0.0]));
                let gu = gradient(&u);
                (0..g.node_count())
                    .map(|k| (gu.get(k, 0) - g.coords(k)[0].cos()).abs())
                    .fold(0.0, f64::max)
            })
            .collect();
        for w in errs.windows(2) {
            let p = (w[0] / w[1]).log2();
            assert!((1.9..2.1).contains(&p), "order {p}");
        }
    }

    #[test]
    fn divergence_matrix_examples() {
        let g = Grid::unit(2, 8).unwrap();
        let id = sample_with(&g, [2, 2], BcTag::Free, |_, v| v.copy_from_slice(&[1.0, 0.0, 0.0, 1.0]));
        assert_eq!(divergence_matrix(&id).linf(), 0.0);
        let a = sample_with(&g, [2, 2], BcTag::Free, |x, v| v.copy_from_slice(&[x[0], 0.0, 0.0, 0.0]));
        let da = divergence_matrix(&a);
        for n in 0..g.node_count() {
            assert!((da.get(n, 0) - 1.0).abs() < 1e-12 && da.get(n, 1).abs() < 1e-12);
        }
    }

    #[test]
    fn laplacian_eigenfunctions() {
        let mut dir = Vec::new();
        let mut neu = Vec::new();
        for n in [16, 32, 64] {
            let g = Grid::unit(2, n).unwrap();
            let f = sample_with(&g, [1, 1], BcTag::DirichletZero, |x, v| {
                v[0] = (PI * x[0]).sin() * (PI * x[1]).sin()
            });
            let lf = laplacian(&f);
            let e = (0..g.node_count())
                .map(|k| (lf.get(k, 0) + 2.0 * PI * PI * f.get(k, 0)).abs())
                .fold(0.0, f64::max);
            dir.push(e);
            let c = sample_with(&g, [1, 1], BcTag::NeumannZero, |x, v| v[0] = (PI * x[0]).cos());
            let lc = laplacian(&c);
            let e = (0..g.node_count())
                .map(|k| (lc.get(k, 0) + PI * PI * c.get(k, 0)).abs())
                .fold(0.0, f64::max);
            neu.push(e);
        }
        for errs in [&dir, &neu] {
            for w in errs.windows(2) {
                let p = (w[0] / w[1]).log2();
                assert!((1.9..2.1).contains(&p), "order {p} from {errs:?}");
            }
        }
        let g = Grid::unit(3, 6).unwrap();
        let c = sample(&g, FieldRole::Magnetization, |_, v| v.copy_from_slice(&[0.3, -0.2, 0.9]));
        assert!(laplacian(&c).linf() < 1e-12);
    }

    #[test]
    fn cross_matrix_identities() {
        let e3 = [0.0, 0.0, 1.0];
        assert_eq!(mat3_vec(&cross_matrix(e3), [1.0, 0.0, 0.0]), [0.0, 1.0, 0.0]);
        let m = [0.3, -1.2, 0.7];
        let mm = cross_matrix(m);
        let z = mat3_vec(&mm, m);
        assert!(z.iter().all(|v| v.abs() < 1e-15));
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(mm[i][j], -mm[j][i]);
            }
        }
    }

    #[test]
    fn elastic_stress_examples() {
        let g = Grid::unit(2, 16).unwrap();
        let zero = Field::for_role(&g, FieldRole::Deformation);
        assert_eq!(elastic_stress_div(&zero).linf(), 0.0);
        let c = sample_with(&g, [2, 2], BcTag::Free, |_, v| v.copy_from_slice(&[1.0, 2.0, -1.0, 0.5]));
        assert!(elastic_stress_div(&c).linf() < 1e-12);
        let f = sample_with(&g, [2, 2], BcTag::Free, |x, v| v.copy_from_slice(&[x[0], 0.0, 0.0, 0.0]));
        let s = elastic_stress_div(&f);
        // FF^T = diag(x^2, 0): quadratic, so centred differences are exact
        assert!(max_interior(&{
            let mut r = s.clone();
            for n in 0..g.node_count() {
                let x = g.coords(n)[0];
                r.set(n, 0, s.get(n, 0) - 2.0 * x);
            }
            r
        }) < 1e-12);
    }

    #[test]
    fn double_cross_needs_unit_length() {
        let g = Grid::unit(2, 16).unwrap();
        let c = sample(&g, FieldRole::Magnetization, |_, v| v.copy_from_slice(&[0.0, 0.6, 0.8]));
        assert!(double_cross(&c).linf() < 1e-12);
        // m = (0, 0, 2 + cos pi x): lap m is parallel to m, so the double cross
        // vanishes while -(lap m + |grad m|^2 m) does not
        let m = sample(&g, FieldRole::Magnetization, |x, v| {
            v.copy_from_slice(&[0.0, 0.0, 2.0 + (PI * x[0]).cos()])
        });
        let mut r = double_cross(&m);
        r.axpy(1.0, &tension(&m));
        assert!(r.linf() > 1.0);
    }

    #[test]
    fn llg_rhs_reductions() {
        let g = Grid::unit(2, 16).unwrap();
        let u0 = Field::for_role(&g, FieldRole::Velocity);
        let c = sample(&g, FieldRole::Magnetization, |_, v| v.copy_from_slice(&[0.0, 0.0, 1.0]));
        assert!(llg_rhs(&c, &u0, 1.0, 0.5).linf() < 1e-12);
        let m = sample(&g, FieldRole::Magnetization, |x, v| {
            let th = 0.4 * (PI * x[0]).cos() * (PI * x[1]).cos();
            v.copy_from_slice(&[th.sin(), 0.0, th.cos()])
        });
        let mut t = tension(&m);
        t.scale(0.7);
        let r = llg_rhs(&m, &u0, 0.7, 0.0);
        for (a, b) in r.data().iter().zip(t.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn deformation_rhs_reductions() {
        let g = Grid::unit(2, 16).unwrap();
        let u = sample(&g, FieldRole::Velocity, |x, v| {
            v.copy_from_slice(&[(PI * x[0]).sin() * (PI * x[1]).cos(), x[0] * x[1]])
        });
        let zero_f = Field::for_role(&g, FieldRole::Deformation);
        assert_eq!(deformation_rhs(&zero_f, &u, 1.0).linf(), 0.0);

        let u0 = Field::for_role(&g, FieldRole::Velocity);
        let f = sample(&g, FieldRole::Deformation, |x, v| {
            v.copy_from_slice(&[(PI * x[0]).sin(), 0.0, 0.0, 0.0])
        });
        let mut l = laplacian(&f);
        l.scale(0.3);
        assert_eq!(deformation_rhs(&f, &u0, 0.3), l);
    }

    #[test]
    fn stretch_contraction_identity() {
        // (grad u)^T F : F = F F^T : grad u at every node
        let g = Grid::unit(3, 6).unwrap();
        let u = sample(&g, FieldRole::Velocity, |x, v| {
            v.copy_from_slice(&[(x[1] * 3.0).sin(), x[0] * x[2], (x[0] + x[1]).cos()])
        });
        let f = sample(&g, FieldRole::Deformation, |x, v| {
            for (k, e) in v.iter_mut().enumerate() {
                *e = ((k as f64 + 1.0) * x[0] - x[1] * x[2]).sin();
            }
        });
        let s = stretch(&u, &f);
        let gu = gradient(&u);
        let ff = outer_self(&f);
        for n in 0..g.node_count() {
            let lhs = frobenius(s.node(n), f.node(n));
            let rhs = frobenius(ff.node(n), gu.node(n));
            assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
        }
    }

    #[test]
    fn constant_magnetization_has_no_stress() {
        let g = Grid::unit(2, 8).unwrap();
        let c = sample(&g, FieldRole::Magnetization, |_, v| v.copy_from_slice(&[0.6, 0.0, 0.8]));
        assert_eq!(magnetic_stress_div(&c).linf(), 0.0);
        assert_eq!(magnetic_stress_div_direct(&c).linf(), 0.0);
    }

    #[test]
    fn momentum_rhs_vanishes_at_equilibrium() {
        let g = Grid::unit(2, 8).unwrap();
        let u = Field::for_role(&g, FieldRole::Velocity);
        let f = Field::for_role(&g, FieldRole::Deformation);
        let m = sample(&g, FieldRole::Magnetization, |_, v| v.copy_from_slice(&[0.0, 0.0, 1.0]));
        let mut pi = Field::for_role(&g, FieldRole::Pressure);
        assert_eq!(momentum_rhs(&u, &f, &Field::for_role(&g, FieldRole::Magnetization), &pi, 1.0).linf(), 0.0);
        pi.data_mut().fill(3.5);
        assert_eq!(momentum_rhs(&u, &f, &m, &pi, 1.0).linf(), 0.0);
    }
}
