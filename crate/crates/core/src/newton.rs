//! Damped Newton iteration on real vector fields.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub struct NewtonOptions {
    pub max_iter: usize,
    /// Convergence threshold on the caller's residual measure.
    pub tol: f64,
    /// Smallest damping factor tried by the backtracking line search.
    pub min_damping: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions { max_iter: 100, tol: 1e-10, min_damping: 1.0 / 1024.0 }
    }
}

#[derive(Debug, Clone)]
pub struct NewtonResult {
    pub x: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Problem definition: residual F(x), a scalar measure of ‖F‖ used for
/// convergence, and an optional feasibility test that rejects trial points
/// (e.g. negative photon numbers). The line search works on ½‖F‖², so F
/// should already be scaled.
pub trait NewtonProblem {
    fn dim(&self) -> usize;
    fn residual(&self, x: &[f64], f: &mut [f64]);
    fn measure(&self, x: &[f64], f: &[f64]) -> f64;
    fn feasible(&self, _x: &[f64]) -> bool {
        true
    }
    /// Step used for the forward-difference column j.
    fn fd_step(&self, x: &[f64], j: usize) -> f64 {
        f64::EPSILON.sqrt() * x[j].abs().max(1e-8)
    }
    fn jacobian(&self, _x: &[f64], _jac: &mut DMatrix<f64>) -> bool {
        false
    }
}

fn jacobian<P: NewtonProblem>(p: &P, x: &[f64], f0: &[f64], jac: &mut DMatrix<f64>) {
    if p.jacobian(x, jac) {
        return;
    }
    let n = x.len();
    let mut xp = x.to_vec();
    let mut fp = vec![0.0; f0.len()];
    for j in 0..n {
        let h = p.fd_step(x, j);
        xp[j] = x[j] + h;
        let hj = xp[j] - x[j];
        p.residual(&xp, &mut fp);
        for i in 0..f0.len() {
            jac[(i, j)] = (fp[i] - f0[i]) / hj;
        }
        xp[j] = x[j];
    }
}

pub fn solve<P: NewtonProblem>(p: &P, x0: &[f64], opts: &NewtonOptions) -> NewtonResult {
    let n = p.dim();
    let mut x = x0.to_vec();
    let mut f = vec![0.0; n];
    p.residual(&x, &mut f);
    let mut r = p.measure(&x, &f);
    let mut merit = sq(&f);
    let mut jac = DMatrix::<f64>::zeros(n, n);
    let mut trial = vec![0.0; n];
    let mut ft = vec![0.0; n];
    let mut iterations = 0;
    while iterations < opts.max_iter && r.is_finite() && r > opts.tol {
        iterations += 1;
        jacobian(p, &x, &f, &mut jac);
        let rhs = -DVector::from_column_slice(&f);
        let step = match jac.clone().lu().solve(&rhs) {
            Some(s) if s.iter().all(|v| v.is_finite()) => s,
            _ => match jac.clone().svd(true, true).solve(&rhs, 1e-14) {
                Ok(s) => s,
                Err(_) => break,
            },
        };
        let mut lambda = 1.0;
        let mut accepted = false;
        while lambda >= opts.min_damping {
            for i in 0..n {
                trial[i] = x[i] + lambda * step[i];
            }
            if p.feasible(&trial) {
                p.residual(&trial, &mut ft);
                let mt = sq(&ft);
                if mt.is_finite() && (mt < merit || (mt <= merit * (1.0 + 1e-12) && lambda == 1.0)) {
                    x.copy_from_slice(&trial);
                    f.copy_from_slice(&ft);
                    merit = mt;
                    r = p.measure(&x, &f);
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    NewtonResult { converged: r <= opts.tol, x, residual: r, iterations }
}

fn sq(f: &[f64]) -> f64 {
    f.iter().map(|v| v * v).sum()
}

/// Brent's method on a bracketing interval [a, b] with f(a)·f(b) ≤ 0.
pub fn brent<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, xtol: f64) -> Option<f64> {
    let mut fa = f(a);
    let mut fb = f(b);
    if fa == 0.0 {
        return Some(a);
    }
    if fb == 0.0 {
        return Some(b);
    }
    if fa.signum() == fb.signum() || !fa.is_finite() || !fb.is_finite() {
        return None;
    }
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for _ in 0..300 {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol = 2.0 * f64::EPSILON * b.abs() + 0.5 * xtol;
        let m = 0.5 * (c - b);
        if m.abs() <= tol || fb == 0.0 {
            return Some(b);
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = f(b);
    }
    Some(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Circle;
    impl NewtonProblem for Circle {
        fn dim(&self) -> usize {
            2
        }
        fn residual(&self, x: &[f64], f: &mut [f64]) {
            f[0] = x[0] * x[0] + x[1] * x[1] - 4.0;
            f[1] = x[0] - x[1];
        }
        fn measure(&self, _x: &[f64], f: &[f64]) -> f64 {
            f[0].abs().max(f[1].abs())
        }
    }

    #[test]
    fn newton_on_circle() {
        let r = solve(&Circle, &[3.0, 0.5], &NewtonOptions::default());
        assert!(r.converged);
        assert!((r.x[0] - 2f64.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn brent_cubic() {
        let root = brent(|x| x * x * x - 2.0, 0.0, 2.0, 1e-15).unwrap();
        assert!((root - 2f64.cbrt()).abs() < 1e-14);
        assert!(brent(|x| x * x + 1.0, -1.0, 1.0, 1e-12).is_none());
    }
}
