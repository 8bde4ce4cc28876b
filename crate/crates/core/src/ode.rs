//! Adaptive integrators for real-valued first-order systems.
//!
//! Complex-valued moments are packed as (re, im) pairs by the callers.
//! Two steppers are provided: the explicit Dormand-Prince 5(4) pair for
//! non-stiff problems, and the L-stable Rosenbrock 2(3) scheme of Shampine
//! and Reichelt for stiff ones. The latter needs a Jacobian; systems may
//! supply one, otherwise forward differences are used.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};

pub trait OdeSystem {
    fn dim(&self) -> usize;

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]);

    /// Writes ∂f/∂y into `jac` and returns true, or returns false to request
    /// a finite-difference approximation.
    fn jacobian(&self, _t: f64, _y: &[f64], _jac: &mut DMatrix<f64>) -> bool {
        false
    }

    /// Hook applied to every accepted state, e.g. to restore a symmetry.
    fn project(&self, _y: &mut [f64]) {}
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Method {
    Dopri5,
    Rosenbrock23,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Record {
    /// Every accepted step.
    Steps,
    /// Only the initial and final states.
    Final,
    /// Cubic Hermite interpolation at the given (increasing) times.
    Times(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct OdeOptions {
    pub method: Method,
    pub rtol: f64,
    pub atol: f64,
    pub initial_step: Option<f64>,
    pub max_step: f64,
    pub max_steps: usize,
    pub record: Record,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            method: Method::Rosenbrock23,
            rtol: 1e-8,
            atol: 1e-12,
            initial_step: None,
            max_step: f64::INFINITY,
            max_steps: 2_000_000,
            record: Record::Steps,
        }
    }
}

impl OdeOptions {
    pub fn new(method: Method, rtol: f64) -> Self {
        OdeOptions { method, rtol, ..Default::default() }
    }

    pub fn atol(mut self, atol: f64) -> Self {
        self.atol = atol;
        self
    }

    pub fn record(mut self, record: Record) -> Self {
        self.record = record;
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct OdeReport {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
    pub jacobian_evals: usize,
    /// Largest normalized local error over accepted steps (≤ 1 means the
    /// requested tolerance was met on every step).
    pub max_error_ratio: f64,
    pub last_step: f64,
}

#[derive(Debug, Clone)]
pub struct OdeSolution {
    pub t: Vec<f64>,
    pub y: Vec<Vec<f64>>,
    pub report: OdeReport,
}

impl OdeSolution {
    pub fn last(&self) -> &[f64] {
        self.y.last().expect("solution holds at least the initial state")
    }
}

fn error_norm(err: &[f64], y0: &[f64], y1: &[f64], rtol: f64, atol: f64) -> f64 {
    let n = err.len().max(1) as f64;
    let s: f64 = err
        .iter()
        .zip(y0.iter().zip(y1))
        .map(|(e, (a, b))| {
            let sc = atol + rtol * a.abs().max(b.abs());
            (e / sc).powi(2)
        })
        .sum();
    (s / n).sqrt()
}

fn hermite(t0: f64, y0: &[f64], f0: &[f64], t1: f64, y1: &[f64], f1: &[f64], t: f64) -> Vec<f64> {
    let h = t1 - t0;
    let s = (t - t0) / h;
    let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
    let h10 = s * (1.0 - s) * (1.0 - s);
    let h01 = s * s * (3.0 - 2.0 * s);
    let h11 = s * s * (s - 1.0);
    (0..y0.len()).map(|i| h00 * y0[i] + h10 * h * f0[i] + h01 * y1[i] + h11 * h * f1[i]).collect()
}

struct Recorder {
    mode: Record,
    next: usize,
    t: Vec<f64>,
    y: Vec<Vec<f64>>,
}

impl Recorder {
    fn new(mode: Record, t0: f64, y0: &[f64]) -> Self {
        let mut r = Recorder { mode, next: 0, t: Vec::new(), y: Vec::new() };
        match &r.mode {
            Record::Times(ts) => {
                while r.next < ts.len() && ts[r.next] <= t0 {
                    r.t.push(ts[r.next]);
                    r.y.push(y0.to_vec());
                    r.next += 1;
                }
            }
            _ => {
                r.t.push(t0);
                r.y.push(y0.to_vec());
            }
        }
        r
    }

    #[allow(clippy::too_many_arguments)]
    fn step(&mut self, t0: f64, y0: &[f64], f0: &[f64], t1: f64, y1: &[f64], f1: &[f64], last: bool) {
        match &self.mode {
            Record::Steps => {
                self.t.push(t1);
                self.y.push(y1.to_vec());
            }
            Record::Final => {
                if last {
                    self.t.push(t1);
                    self.y.push(y1.to_vec());
                }
            }
            Record::Times(ts) => {
                while self.next < ts.len() && ts[self.next] <= t1 {
                    let tq = ts[self.next];
                    let yq = if tq == t1 { y1.to_vec() } else { hermite(t0, y0, f0, t1, y1, f1, tq) };
                    self.t.push(tq);
                    self.y.push(yq);
                    self.next += 1;
                }
            }
        }
    }
}

fn initial_step<S: OdeSystem>(sys: &S, t0: f64, y0: &[f64], f0: &[f64], order: i32, opts: &OdeOptions, evals: &mut usize) -> f64 {
    let n = y0.len();
    let sc: Vec<f64> = y0.iter().map(|v| opts.atol + opts.rtol * v.abs()).collect();
    let d0 = (y0.iter().zip(&sc).map(|(v, s)| (v / s).powi(2)).sum::<f64>() / n as f64).sqrt();
    let d1 = (f0.iter().zip(&sc).map(|(v, s)| (v / s).powi(2)).sum::<f64>() / n as f64).sqrt();
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, f)| y + h0 * f).collect();
    let mut f1 = vec![0.0; n];
    sys.rhs(t0 + h0, &y1, &mut f1);
    *evals += 1;
    let d2 = (f1.iter().zip(f0).zip(&sc).map(|((a, b), s)| ((a - b) / s).powi(2)).sum::<f64>() / n as f64).sqrt() / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(1.0 / (order as f64 + 1.0))
    };
    (100.0 * h0).min(h1)
}

pub fn integrate<S: OdeSystem>(sys: &S, t0: f64, y0: &[f64], t_end: f64, opts: &OdeOptions) -> Result<OdeSolution> {
    if y0.len() != sys.dim() {
        return Err(Error::Invariant(format!("state has {} entries, system expects {}", y0.len(), sys.dim())));
    }
    if !(t_end > t0) {
        return Err(Error::InvalidParameter { name: "t_end".into(), reason: "must exceed the start time".into() });
    }
    if !(opts.rtol > 0.0) {
        return Err(Error::InvalidParameter { name: "rtol".into(), reason: "must be positive".into() });
    }
    match opts.method {
        Method::Dopri5 => dopri5(sys, t0, y0, t_end, opts),
        Method::Rosenbrock23 => rosenbrock23(sys, t0, y0, t_end, opts),
    }
}

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn dopri5<S: OdeSystem>(sys: &S, t0: f64, y0: &[f64], t_end: f64, opts: &OdeOptions) -> Result<OdeSolution> {
    let n = y0.len();
    let mut report = OdeReport::default();
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k1 = vec![0.0; n];
    sys.rhs(t, &y, &mut k1);
    report.rhs_evals += 1;
    let mut h = opts
        .initial_step
        .unwrap_or_else(|| initial_step(sys, t, &y, &k1, 5, opts, &mut report.rhs_evals))
        .min(opts.max_step)
        .min(t_end - t0);
    let mut rec = Recorder::new(opts.record.clone(), t0, y0);
    let (mut k2, mut k3, mut k4, mut k5, mut k6, mut k7) =
        (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut tmp = vec![0.0; n];
    let mut y1 = vec![0.0; n];
    let mut err = vec![0.0; n];
    let mut rejected_last = false;

    loop {
        if report.accepted + report.rejected >= opts.max_steps {
            return Err(Error::StepBudget { steps: opts.max_steps, t, last_state: y });
        }
        let last = t + h >= t_end;
        if last {
            h = t_end - t;
        }
        if h <= 16.0 * f64::EPSILON * t.abs().max(1e-300) {
            return Err(Error::StepUnderflow { t, h, last_state: y });
        }
        for i in 0..n {
            tmp[i] = y[i] + h * A21 * k1[i];
        }
        sys.rhs(t + h / 5.0, &tmp, &mut k2);
        for i in 0..n {
            tmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        sys.rhs(t + 0.3 * h, &tmp, &mut k3);
        for i in 0..n {
            tmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        sys.rhs(t + 0.8 * h, &tmp, &mut k4);
        for i in 0..n {
            tmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        sys.rhs(t + 8.0 / 9.0 * h, &tmp, &mut k5);
        for i in 0..n {
            tmp[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        sys.rhs(t + h, &tmp, &mut k6);
        for i in 0..n {
            y1[i] = y[i] + h * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i]);
        }
        sys.rhs(t + h, &y1, &mut k7);
        report.rhs_evals += 6;
        for i in 0..n {
            err[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        }
        let en = error_norm(&err, &y, &y1, opts.rtol, opts.atol);
        if !en.is_finite() {
            if h < 1e-300 {
                return Err(Error::NonFinite { t });
            }
            h *= 0.1;
            report.rejected += 1;
            rejected_last = true;
            continue;
        }
        if en <= 1.0 {
            tmp.copy_from_slice(&y1);
            sys.project(&mut y1);
            if y1 != tmp {
                // projection moved the state; keep the FSAL derivative consistent
                sys.rhs(t + h, &y1, &mut k7);
                report.rhs_evals += 1;
            }
            let t1 = if last { t_end } else { t + h };
            rec.step(t, &y, &k1, t1, &y1, &k7, last);
            report.accepted += 1;
            report.max_error_ratio = report.max_error_ratio.max(en);
            report.last_step = h;
            t = t1;
            std::mem::swap(&mut y, &mut y1);
            std::mem::swap(&mut k1, &mut k7);
            if last {
                break;
            }
            let mut fac = 0.9 * en.max(1e-10).powf(-0.2);
            fac = fac.clamp(0.2, if rejected_last { 1.0 } else { 5.0 });
            h = (h * fac).min(opts.max_step);
            rejected_last = false;
        } else {
            report.rejected += 1;
            h *= (0.9 * en.powf(-0.2)).max(0.2);
            rejected_last = true;
        }
    }
    Ok(OdeSolution { t: rec.t, y: rec.y, report })
}

fn fd_jacobian<S: OdeSystem>(sys: &S, t: f64, y: &[f64], f0: &[f64], jac: &mut DMatrix<f64>, evals: &mut usize) {
    let n = y.len();
    let mut yp = y.to_vec();
    let mut fp = vec![0.0; n];
    for j in 0..n {
        let delta = f64::EPSILON.sqrt() * y[j].abs().max(1.0);
        yp[j] = y[j] + delta;
        let dj = yp[j] - y[j];
        sys.rhs(t, &yp, &mut fp);
        *evals += 1;
        for i in 0..n {
            jac[(i, j)] = (fp[i] - f0[i]) / dj;
        }
        yp[j] = y[j];
    }
}

fn rosenbrock23<S: OdeSystem>(sys: &S, t0: f64, y0: &[f64], t_end: f64, opts: &OdeOptions) -> Result<OdeSolution> {
    let n = y0.len();
    let d = 1.0 / (2.0 + std::f64::consts::SQRT_2);
    let e32 = 6.0 + std::f64::consts::SQRT_2;
    let mut report = OdeReport::default();
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut f0 = vec![0.0; n];
    sys.rhs(t, &y, &mut f0);
    report.rhs_evals += 1;
    let mut h = opts
        .initial_step
        .unwrap_or_else(|| initial_step(sys, t, &y, &f0, 2, opts, &mut report.rhs_evals))
        .min(opts.max_step)
        .min(t_end - t0);
    let mut rec = Recorder::new(opts.record.clone(), t0, y0);
    let mut jac = DMatrix::<f64>::zeros(n, n);
    let mut jac_fresh = false;
    let mut f1 = vec![0.0; n];
    let mut f2 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    let mut rejected_last = false;

    loop {
        if report.accepted + report.rejected >= opts.max_steps {
            return Err(Error::StepBudget { steps: opts.max_steps, t, last_state: y });
        }
        if !jac_fresh {
            if !sys.jacobian(t, &y, &mut jac) {
                fd_jacobian(sys, t, &y, &f0, &mut jac, &mut report.rhs_evals);
            }
            report.jacobian_evals += 1;
            jac_fresh = true;
        }
        let last = t + h >= t_end;
        if last {
            h = t_end - t;
        }
        if h <= 16.0 * f64::EPSILON * t.abs().max(1e-300) {
            return Err(Error::StepUnderflow { t, h, last_state: y });
        }
        let mut w = DMatrix::<f64>::identity(n, n);
        w -= &jac * (h * d);
        let lu = w.lu();
        let solve = |rhs: &[f64]| -> Option<DVector<f64>> { lu.solve(&DVector::from_column_slice(rhs)) };
        let Some(k1) = solve(&f0) else {
            h *= 0.25;
            report.rejected += 1;
            continue;
        };
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * h * k1[i];
        }
        sys.rhs(t + 0.5 * h, &tmp, &mut f1);
        let r2: Vec<f64> = (0..n).map(|i| f1[i] - k1[i]).collect();
        let k2 = solve(&r2).expect("factorization already succeeded") + &k1;
        let y1: Vec<f64> = (0..n).map(|i| y[i] + h * k2[i]).collect();
        sys.rhs(t + h, &y1, &mut f2);
        let r3: Vec<f64> = (0..n).map(|i| f2[i] - e32 * (k2[i] - f1[i]) - 2.0 * (k1[i] - f0[i])).collect();
        let k3 = solve(&r3).expect("factorization already succeeded");
        report.rhs_evals += 2;
        let err: Vec<f64> = (0..n).map(|i| h / 6.0 * (k1[i] - 2.0 * k2[i] + k3[i])).collect();
        let en = error_norm(&err, &y, &y1, opts.rtol, opts.atol);
        if !en.is_finite() {
            if h < 1e-300 {
                return Err(Error::NonFinite { t });
            }
            h *= 0.1;
            report.rejected += 1;
            rejected_last = true;
            continue;
        }
        if en <= 1.0 {
            let mut y1 = y1;
            sys.project(&mut y1);
            sys.rhs(t + h, &y1, &mut f2);
            report.rhs_evals += 1;
            let t1 = if last { t_end } else { t + h };
            rec.step(t, &y, &f0, t1, &y1, &f2, last);
            report.accepted += 1;
            report.max_error_ratio = report.max_error_ratio.max(en);
            report.last_step = h;
            t = t1;
            y = y1;
            std::mem::swap(&mut f0, &mut f2);
            jac_fresh = false;
            if last {
                break;
            }
            let mut fac = 0.8 * en.max(1e-10).powf(-1.0 / 3.0);
            fac = fac.clamp(0.2, if rejected_last { 1.0 } else { 5.0 });
            h = (h * fac).min(opts.max_step);
            rejected_last = false;
        } else {
            report.rejected += 1;
            h *= (0.8 * en.powf(-1.0 / 3.0)).max(0.2);
            rejected_last = true;
        }
    }
    Ok(OdeSolution { t: rec.t, y: rec.y, report })
}
