//! Matrix-free Krylov solvers on flat `f64` slices.

use crate::error::{Error, Result};

pub trait LinearOperator {
    fn len(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

/// Right preconditioner `z = P^{-1} r`.
pub trait Preconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]);
}

pub struct Identity;

impl Preconditioner for Identity {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn wdot(w: Option<&[f64]>, a: &[f64], b: &[f64]) -> f64 {
    match w {
        None => dot(a, b),
        Some(w) => w.iter().zip(a.iter().zip(b)).map(|(w, (x, y))| w * x * y).sum(),
    }
}

/// Conjugate gradients for an operator self-adjoint and positive
/// (semi-)definite in the inner product with diagonal weights `w`.
///
/// `x` holds the initial guess on entry. Converges when
/// `|b - A x|_w <= tol |b|_w`; a zero right-hand side returns immediately.
pub fn cg<A: LinearOperator + ?Sized>(
    a: &A,
    b: &[f64],
    x: &mut [f64],
    weights: Option<&[f64]>,
    opts: SolverOptions,
) -> Result<SolveStats> {
    let n = a.len();
    let bnorm = wdot(weights, b, b).sqrt();
    if bnorm == 0.0 {
        x.fill(0.0);
        return Ok(SolveStats {
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let mut r = vec![0.0; n];
    a.apply(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut rr = wdot(weights, &r, &r);
    let mut it = 0;
    while rr.sqrt() > opts.tol * bnorm {
        if it >= opts.max_iter {
            return Err(Error::SolverDiverged {
                solver: "conjugate gradient",
                iterations: it,
                residual: rr.sqrt() / bnorm,
            });
        }
        a.apply(&p, &mut ap);
        let pap = wdot(weights, &p, &ap);
        if !(pap > 0.0) {
            return Err(Error::SolverDiverged {
                solver: "conjugate gradient",
                iterations: it,
                residual: rr.sqrt() / bnorm,
            });
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = wdot(weights, &r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        it += 1;
    }
    Ok(SolveStats {
        iterations: it,
        relative_residual: rr.sqrt() / bnorm,
    })
}

/// Right-preconditioned BiCGStab for general nonsingular operators.
pub fn bicgstab<A: LinearOperator + ?Sized, P: Preconditioner + ?Sized>(
    a: &A,
    precond: &P,
    b: &[f64],
    x: &mut [f64],
    opts: SolverOptions,
) -> Result<SolveStats> {
    let n = a.len();
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        x.fill(0.0);
        return Ok(SolveStats {
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let mut r = vec![0.0; n];
    a.apply(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let r_hat = r.clone();
    let mut rho = 1.0;
    let mut alpha = 1.0;
    let mut omega = 1.0;
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut res = dot(&r, &r).sqrt();
    let mut it = 0;
    let fail = |it, res: f64| Error::SolverDiverged {
        solver: "BiCGStab",
        iterations: it,
        residual: res / bnorm,
    };
    while res > opts.tol * bnorm {
        if it >= opts.max_iter {
            return Err(fail(it, res));
        }
        let rho_new = dot(&r_hat, &r);
        if rho_new == 0.0 || !rho_new.is_finite() {
            return Err(fail(it, res));
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        precond.apply(&p, &mut y);
        a.apply(&y, &mut v);
        let rv = dot(&r_hat, &v);
        if rv == 0.0 {
            return Err(fail(it, res));
        }
        alpha = rho / rv;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        let snorm = dot(&s, &s).sqrt();
        if snorm <= opts.tol * bnorm {
            for i in 0..n {
                x[i] += alpha * y[i];
            }
            res = snorm;
            it += 1;
            break;
        }
        precond.apply(&s, &mut z);
        a.apply(&z, &mut t);
        let tt = dot(&t, &t);
        if tt == 0.0 {
            return Err(fail(it, res));
        }
        omega = dot(&t, &s) / tt;
        for i in 0..n {
            x[i] += alpha * y[i] + omega * z[i];
            r[i] = s[i] - omega * t[i];
        }
        res = dot(&r, &r).sqrt();
        it += 1;
        if omega == 0.0 {
            return Err(fail(it, res));
        }
    }
    Ok(SolveStats {
        iterations: it,
        relative_residual: res / bnorm,
    })
}

/// Union-find with path halving.
pub(crate) struct DisjointSets {
    parent: Vec<usize>,
}

impl DisjointSets {
    pub fn new(n: usize) -> Self {
        DisjointSets {
            parent: (0..n).collect(),
        }
    }

    pub fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    pub fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }

    /// Component label per element, labels numbered by first appearance.
    pub fn labels(&mut self) -> (Vec<usize>, usize) {
        let n = self.parent.len();
        let mut map = vec![usize::MAX; n];
        let mut labels = vec![0; n];
        let mut count = 0;
        for i in 0..n {
            let r = self.find(i);
            if map[r] == usize::MAX {
                map[r] = count;
                count += 1;
            }
            labels[i] = map[r];
        }
        (labels, count)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Dense(Vec<Vec<f64>>);

    impl LinearOperator for Dense {
        fn len(&self) -> usize {
            self.0.len()
        }
        fn apply(&self, x: &[f64], y: &mut [f64]) {
            for (yi, row) in y.iter_mut().zip(&self.0) {
                *yi = dot(row, x);
            }
        }
    }

    const OPTS: SolverOptions = SolverOptions {
        tol: 1e-12,
        max_iter: 100,
    };

    #[test]
    fn cg_solves_spd_system() {
        let a = Dense(vec![vec![4.0, 1.0, 0.0], vec![1.0, 3.0, -1.0], vec![0.0, -1.0, 2.0]]);
        let b = [1.0, 2.0, 3.0];
        let mut x = [0.0; 3];
        let st = cg(&a, &b, &mut x, None, OPTS).unwrap();
        assert!(st.iterations <= 3);
        let mut ax = [0.0; 3];
        a.apply(&x, &mut ax);
        for i in 0..3 {
            assert!((ax[i] - b[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn bicgstab_solves_nonsymmetric_system() {
        let a = Dense(vec![vec![3.0, -1.0, 0.5], vec![2.0, 4.0, 0.0], vec![0.0, -3.0, 5.0]]);
        let b = [1.0, -2.0, 0.5];
        let mut x = [0.0; 3];
        bicgstab(&a, &Identity, &b, &mut x, OPTS).unwrap();
        let mut ax = [0.0; 3];
        a.apply(&x, &mut ax);
        for i in 0..3 {
            assert!((ax[i] - b[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_rhs_and_iteration_cap() {
        let a = Dense(vec![vec![1.0, 0.0], vec![0.0, 1e-6]]);
        let mut x = [5.0, 5.0];
        cg(&a, &[0.0, 0.0], &mut x, None, OPTS).unwrap();
        assert_eq!(x, [0.0, 0.0]);
        let mut x = [0.0, 0.0];
        let err = cg(&a, &[1.0, 1.0], &mut x, None, SolverOptions { tol: 1e-14, max_iter: 1 });
        assert!(matches!(err, Err(Error::SolverDiverged { .. })));
    }

    #[test]
    fn disjoint_set_labels() {
        let mut d = DisjointSets::new(5);
        d.union(0, 3);
        d.union(4, 3);
        let (labels, count) = d.labels();
        assert_eq!(count, 3);
        assert_eq!(labels, vec![0, 1, 2, 0, 0]);
    }
}
