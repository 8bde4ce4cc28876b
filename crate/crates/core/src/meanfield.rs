//! Identical-spin second-order mean-field model.
//!
//! The closed moment set is ⟨a†a⟩, ⟨σ†a⟩, ⟨σz⟩ and the pair correlation
//! ⟨σ_k†σ_k'⟩ (k ≠ k'). The resonator amplitude ⟨a⟩ vanishes, so the only
//! third-order term, ⟨a†aσz⟩, factorizes as ⟨a†a⟩⟨σz⟩.
//!
//! All frequencies enter through the detuning Δ = ω_s − ω_c; ω_c itself only
//! sets the thermal occupations.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{derive_rates, DerivedRates, SystemParams};
use crate::newton::{self, NewtonOptions, NewtonProblem};
use crate::ode::{self, Method, OdeOptions, OdeReport, OdeSystem, Record};

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldState {
    pub photon_number: f64,
    pub spin_photon: Complex64,
    pub inversion: f64,
    pub spin_spin: Complex64,
}

impl MeanFieldState {
    pub const DIM: usize = 6;

    /// Resonator vacuum and all spins in the lower level.
    pub fn ground() -> Self {
        MeanFieldState { photon_number: 0.0, spin_photon: Complex64::new(0.0, 0.0), inversion: -1.0, spin_spin: Complex64::new(0.0, 0.0) }
    }

    /// Fixed point of the uncoupled (g = 0) equations.
    pub fn uncoupled(params: &SystemParams, rates: &DerivedRates) -> Self {
        let gp = params.gamma * (2.0 * rates.n_k_th + 1.0);
        let denom = gp + params.eta;
        let inversion = if denom > 0.0 { (params.eta - params.gamma) / denom } else { -1.0 };
        MeanFieldState {
            photon_number: rates.n_c_th,
            spin_photon: Complex64::new(0.0, 0.0),
            inversion,
            spin_spin: Complex64::new(0.0, 0.0),
        }
    }

    pub fn to_vec(&self) -> [f64; 6] {
        [self.photon_number, self.spin_photon.re, self.spin_photon.im, self.inversion, self.spin_spin.re, self.spin_spin.im]
    }

    pub fn from_slice(y: &[f64]) -> Self {
        MeanFieldState {
            photon_number: y[0],
            spin_photon: Complex64::new(y[1], y[2]),
            inversion: y[3],
            spin_spin: Complex64::new(y[4], y[5]),
        }
    }

    pub fn conj(&self) -> Self {
        MeanFieldState { spin_photon: self.spin_photon.conj(), spin_spin: self.spin_spin.conj(), ..*self }
    }

    /// Photon number non-negative, inversion inside [−1, 1], |pair correlation| ≤ 1,
    /// each up to `slack`.
    pub fn check_invariants(&self, slack: f64) -> Result<()> {
        if !(self.photon_number >= -slack * (1.0 + self.photon_number.abs())) {
            return Err(Error::Invariant(format!("negative photon number {}", self.photon_number)));
        }
        if !(self.inversion.abs() <= 1.0 + slack) {
            return Err(Error::Invariant(format!("inversion {} outside [-1, 1]", self.inversion)));
        }
        if !(self.spin_spin.norm() <= 1.0 + slack) {
            return Err(Error::Invariant(format!("pair correlation {} exceeds unit modulus", self.spin_spin)));
        }
        Ok(())
    }
}

/// Time derivative of the moment set, returned in the same shape as the state.
pub fn rhs_identical(state: &MeanFieldState, params: &SystemParams) -> Result<MeanFieldState> {
    let rates = derive_rates(params)?;
    Ok(rhs_with_rates(state, params, &rates))
}

/// [`rhs_identical`] with precomputed rates. No validation: callers may pass
/// sign-flipped couplings, e.g. to build the complex-conjugated system.
pub fn rhs_with_rates(state: &MeanFieldState, params: &SystemParams, rates: &DerivedRates) -> MeanFieldState {
    let n = state.photon_number;
    let c = state.spin_photon;
    let s = state.inversion;
    let p = state.spin_spin;
    let g = params.g;
    let big_n = params.n_spins;
    let lambda = rates.lambda_s;
    let big_gamma = lambda + 0.5 * params.kappa_c;
    let delta = params.detuning();

    let dn = -params.kappa_c * n + params.kappa_c * rates.n_c_th + (I * big_n * g * (c - c.conj())).re;
    let dc = Complex64::new(-big_gamma, delta) * c - I * g * n * s - I * (0.5 * g) * (s + 1.0) - I * ((big_n - 1.0) * g) * p;
    let ds = (-I * 2.0 * g * (c - c.conj())).re - params.gamma * ((2.0 * rates.n_k_th + 1.0) * s + 1.0) - params.eta * (s - 1.0);
    let dp = -2.0 * lambda * p + I * g * s * (c - c.conj());
    MeanFieldState { photon_number: dn, spin_photon: dc, inversion: ds, spin_spin: dp }
}

/// Sum of the absolute sizes of the terms in each equation, used to turn the
/// raw residual into a relative one.
fn term_scales(state: &MeanFieldState, params: &SystemParams, rates: &DerivedRates) -> [f64; 6] {
    let n = state.photon_number;
    let (x, y) = (state.spin_photon.re, state.spin_photon.im);
    let s = state.inversion;
    let (pr, pi) = (state.spin_spin.re, state.spin_spin.im);
    let g = params.g;
    let nn = params.n_spins;
    let lambda = rates.lambda_s;
    let big_gamma = lambda + 0.5 * params.kappa_c;
    let delta = params.detuning().abs();
    let gp = params.gamma * (2.0 * rates.n_k_th + 1.0);
    [
        params.kappa_c * n.abs() + params.kappa_c * rates.n_c_th + 2.0 * nn * g * y.abs(),
        big_gamma * x.abs() + delta * y.abs() + (nn - 1.0) * g * pi.abs(),
        delta * x.abs() + big_gamma * y.abs() + g * (n * s).abs() + 0.5 * g * (s + 1.0).abs() + (nn - 1.0) * g * pr.abs(),
        4.0 * g * y.abs() + gp * s.abs() + params.gamma + params.eta * (s - 1.0).abs(),
        2.0 * lambda * pr.abs() + 2.0 * g * (s * y).abs(),
        2.0 * lambda * pi.abs(),
    ]
}

/// Largest component of |dX/dt| divided by the size of the terms producing it.
pub fn scaled_residual(state: &MeanFieldState, params: &SystemParams, rates: &DerivedRates) -> f64 {
    let d = rhs_with_rates(state, params, rates).to_vec();
    let sc = term_scales(state, params, rates);
    d.iter().zip(sc).map(|(r, s)| if s > 0.0 { r.abs() / s } else { r.abs() }).fold(0.0, f64::max)
}

/// ODE adapter for the six real components (n, Re c, Im c, σz, Re p, Im p).
pub struct IdenticalSystem {
    pub params: SystemParams,
    pub rates: DerivedRates,
}

impl IdenticalSystem {
    pub fn new(params: &SystemParams) -> Result<Self> {
        Ok(IdenticalSystem { params: *params, rates: derive_rates(params)? })
    }
}

impl OdeSystem for IdenticalSystem {
    fn dim(&self) -> usize {
        MeanFieldState::DIM
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        let d = rhs_with_rates(&MeanFieldState::from_slice(y), &self.params, &self.rates).to_vec();
        dy.copy_from_slice(&d);
    }

    fn jacobian(&self, _t: f64, y: &[f64], jac: &mut DMatrix<f64>) -> bool {
        let p = &self.params;
        let (n, yc, s) = (y[0], y[2], y[3]);
        let (pr, pi) = (y[4], y[5]);
        let g = p.g;
        let nn = p.n_spins;
        let lambda = self.rates.lambda_s;
        let big_gamma = lambda + 0.5 * p.kappa_c;
        let delta = p.detuning();
        let gp = p.gamma * (2.0 * self.rates.n_k_th + 1.0);
        let _ = pr;
        jac.fill(0.0);
        jac[(0, 0)] = -p.kappa_c;
        jac[(0, 2)] = -2.0 * nn * g;
        jac[(1, 1)] = -big_gamma;
        jac[(1, 2)] = -delta;
        jac[(1, 5)] = (nn - 1.0) * g;
        jac[(2, 0)] = -g * s;
        jac[(2, 1)] = delta;
        jac[(2, 2)] = -big_gamma;
        jac[(2, 3)] = -g * n - 0.5 * g;
        jac[(2, 4)] = -(nn - 1.0) * g;
        jac[(3, 2)] = 4.0 * g;
        jac[(3, 3)] = -gp - p.eta;
        jac[(4, 2)] = -2.0 * g * s;
        jac[(4, 3)] = -2.0 * g * yc;
        jac[(4, 4)] = -2.0 * lambda;
        jac[(5, 5)] = -2.0 * lambda;
        let _ = pi;
        true
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub states: Vec<MeanFieldState>,
    pub report: OdeReport,
}

impl Trajectory {
    pub fn last(&self) -> &MeanFieldState {
        self.states.last().expect("trajectory holds the initial state")
    }
}

#[derive(Debug, Clone)]
pub struct EvolveOptions {
    pub method: Method,
    pub tol: f64,
    pub atol: f64,
    pub record: Record,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        EvolveOptions { method: Method::Rosenbrock23, tol: 1e-8, atol: 1e-14, record: Record::Steps }
    }
}

pub fn evolve(initial: &MeanFieldState, params: &SystemParams, t_end: f64, tol: f64) -> Result<Trajectory> {
    evolve_with(initial, params, t_end, &EvolveOptions { tol, ..Default::default() })
}

pub fn evolve_with(initial: &MeanFieldState, params: &SystemParams, t_end: f64, opts: &EvolveOptions) -> Result<Trajectory> {
    if !(opts.tol > 0.0 && opts.tol <= 1e-2) {
        return Err(invalid("tol", "must lie in (0, 1e-2]"));
    }
    if !(t_end > 0.0) {
        return Err(invalid("t_end", "must be positive"));
    }
    let sys = IdenticalSystem::new(params)?;
    let mut o = OdeOptions::new(opts.method, opts.tol).atol(opts.atol).record(opts.record.clone());
    o.max_steps = 5_000_000;
    let sol = ode::integrate(&sys, 0.0, &initial.to_vec(), t_end, &o)?;
    let states = sol.y.iter().map(|y| MeanFieldState::from_slice(y)).collect();
    Ok(Trajectory { t: sol.t, states, report: sol.report })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SteadyMethod {
    Uncoupled,
    Newton,
    ScalarReduction,
    Integration,
}

#[derive(Debug, Clone)]
pub struct SteadyOptions {
    pub tol: f64,
    pub integrator_tol: f64,
    pub max_newton: usize,
}

impl Default for SteadyOptions {
    fn default() -> Self {
        SteadyOptions { tol: 1e-10, integrator_tol: 1e-8, max_newton: 60 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SteadyReport {
    pub state: MeanFieldState,
    pub residual: f64,
    pub method: SteadyMethod,
    /// Photon numbers of every physical fixed point located by the scalar
    /// bracketing (empty when it was not needed).
    pub roots: Vec<f64>,
}

impl SteadyReport {
    pub fn multistable(&self) -> bool {
        self.roots.len() > 1
    }
}

pub fn steady_state(params: &SystemParams, guess: Option<&MeanFieldState>) -> Result<MeanFieldState> {
    steady_state_with(params, guess, &SteadyOptions::default()).map(|r| r.state)
}

struct Reduced<'a> {
    params: &'a SystemParams,
    rates: &'a DerivedRates,
    scale: [f64; 5],
}

impl Reduced<'_> {
    fn state(&self, z: &[f64]) -> MeanFieldState {
        MeanFieldState {
            photon_number: z[0] * self.scale[0],
            spin_photon: Complex64::new(z[1] * self.scale[1], z[2] * self.scale[2]),
            inversion: z[3] * self.scale[3],
            spin_spin: Complex64::new(z[4] * self.scale[4], 0.0),
        }
    }
}

impl NewtonProblem for Reduced<'_> {
    fn dim(&self) -> usize {
        5
    }

    fn residual(&self, z: &[f64], f: &mut [f64]) {
        let st = self.state(z);
        let d = rhs_with_rates(&st, self.params, self.rates).to_vec();
        f.copy_from_slice(&d[..5]);
    }

    fn measure(&self, z: &[f64], _f: &[f64]) -> f64 {
        scaled_residual(&self.state(z), self.params, self.rates)
    }

    fn feasible(&self, z: &[f64]) -> bool {
        let st = self.state(z);
        st.photon_number >= 0.0 && st.inversion.abs() <= 1.0 + 1e-12
    }

    fn jacobian(&self, z: &[f64], jac: &mut DMatrix<f64>) -> bool {
        let sys = IdenticalSystem { params: *self.params, rates: *self.rates };
        let mut full = DMatrix::zeros(6, 6);
        let y = self.state(z).to_vec();
        sys.jacobian(0.0, &y, &mut full);
        for i in 0..5 {
            for j in 0..5 {
                jac[(i, j)] = full[(i, j)] * self.scale[j];
            }
        }
        true
    }
}

fn newton_polish(params: &SystemParams, rates: &DerivedRates, start: &MeanFieldState, opts: &SteadyOptions) -> (MeanFieldState, f64) {
    let scale = [rates.n_c_th + 1.0, 1.0, 1.0, 1.0, 1.0];
    let prob = Reduced { params, rates, scale };
    let z0 = [
        start.photon_number / scale[0],
        start.spin_photon.re,
        start.spin_photon.im,
        start.inversion,
        start.spin_spin.re,
    ];
    let nopts = NewtonOptions { max_iter: opts.max_newton, tol: opts.tol * 1e-3, ..Default::default() };
    let res = newton::solve(&prob, &z0, &nopts);
    let st = prob.state(&res.x);
    let r = scaled_residual(&st, params, rates);
    (st, r)
}

/// Exact reduction of the steady state to one equation in Im⟨σ†a⟩.
///
/// With y = Im c fixed, the photon, inversion and pair equations are linear
/// and give n, σz, p and Re c directly; what remains is the imaginary part
/// of the spin-photon equation.
struct ScalarReduction<'a> {
    params: &'a SystemParams,
    rates: &'a DerivedRates,
}

impl ScalarReduction<'_> {
    fn state_from_y(&self, y: f64) -> MeanFieldState {
        let p = self.params;
        let gp = p.gamma * (2.0 * self.rates.n_k_th + 1.0);
        let lambda = self.rates.lambda_s;
        let big_gamma = lambda + 0.5 * p.kappa_c;
        let n = self.rates.n_c_th - 2.0 * p.n_spins * p.g * y / p.kappa_c;
        let s = (p.eta - p.gamma + 4.0 * p.g * y) / (gp + p.eta);
        let pr = -p.g * s * y / lambda;
        let x = -p.detuning() * y / big_gamma;
        MeanFieldState { photon_number: n, spin_photon: Complex64::new(x, y), inversion: s, spin_spin: Complex64::new(pr, 0.0) }
    }

    fn y_from_n(&self, n: f64) -> f64 {
        (self.rates.n_c_th - n) * self.params.kappa_c / (2.0 * self.params.n_spins * self.params.g)
    }

    fn f(&self, y: f64) -> f64 {
        let st = self.state_from_y(y);
        rhs_with_rates(&st, self.params, self.rates).spin_photon.im
    }

    /// Photon-number interval on which σz stays inside [−1, 1].
    fn n_range(&self) -> (f64, f64) {
        let p = self.params;
        let gp = p.gamma * (2.0 * self.rates.n_k_th + 1.0);
        let k = p.n_spins / (2.0 * p.kappa_c);
        let lo = (self.rates.n_c_th - k * (gp + p.gamma)).max(0.0);
        let hi = self.rates.n_c_th + k * (gp + 2.0 * p.eta - p.gamma);
        (lo, hi)
    }

    fn roots(&self) -> Vec<MeanFieldState> {
        let (lo, hi) = self.n_range();
        if !(hi > lo) {
            return Vec::new();
        }
        let samples = 3000;
        let mut ns = Vec::with_capacity(samples + 1);
        ns.push(lo);
        for i in 0..samples {
            let u = 10f64.powf(-40.0 + 40.0 * i as f64 / (samples - 1) as f64);
            ns.push(lo + (hi - lo) * u);
        }
        let mut ys: Vec<f64> = ns.iter().map(|&n| self.y_from_n(n)).collect();
        ys.dedup();
        let fs: Vec<f64> = ys.iter().map(|&y| self.f(y)).collect();
        let mut out = Vec::new();
        for i in 0..ys.len() {
            if fs[i] == 0.0 {
                out.push(self.state_from_y(ys[i]));
                continue;
            }
            if i + 1 < ys.len() && fs[i].signum() != fs[i + 1].signum() && fs[i + 1] != 0.0 {
                if let Some(y) = newton::brent(|y| self.f(y), ys[i], ys[i + 1], 0.0) {
                    out.push(self.state_from_y(y));
                }
            }
        }
        out
    }
}

pub fn steady_state_with(params: &SystemParams, guess: Option<&MeanFieldState>, opts: &SteadyOptions) -> Result<SteadyReport> {
    let rates = derive_rates(params)?;
    if params.g == 0.0 || params.n_spins == 0.0 {
        let state = MeanFieldState::uncoupled(params, &rates);
        let residual = scaled_residual(&state, params, &rates);
        return Ok(SteadyReport { state, residual, method: SteadyMethod::Uncoupled, roots: vec![] });
    }
    if !(rates.lambda_s > 0.0) || !(params.kappa_c > 0.0) {
        return Err(invalid("lambda_s/kappa_c", "a coupled steady state needs non-zero spin dephasing and resonator loss"));
    }

    let accept = |st: &MeanFieldState, r: f64| r <= opts.tol && st.check_invariants(1e-9).is_ok();

    if let Some(g0) = guess {
        let (st, r) = newton_polish(params, &rates, g0, opts);
        if accept(&st, r) {
            return Ok(SteadyReport { state: st, residual: r, method: SteadyMethod::Newton, roots: vec![] });
        }
    }

    let red = ScalarReduction { params, rates: &rates };
    let candidates = red.roots();
    let roots: Vec<f64> = candidates.iter().map(|s| s.photon_number).collect();
    let chosen = match guess {
        Some(g0) => candidates.iter().min_by(|a, b| {
            let da = (a.photon_number + 1e-300).ln() - (g0.photon_number + 1e-300).ln();
            let db = (b.photon_number + 1e-300).ln() - (g0.photon_number + 1e-300).ln();
            da.abs().total_cmp(&db.abs())
        }),
        None => candidates.iter().max_by(|a, b| a.photon_number.total_cmp(&b.photon_number)),
    };
    if let Some(st0) = chosen {
        let r0 = scaled_residual(st0, params, &rates);
        let (st1, r1) = newton_polish(params, &rates, st0, opts);
        let (st, r) = if r1 < r0 && st1.check_invariants(1e-9).is_ok() { (st1, r1) } else { (*st0, r0) };
        if accept(&st, r) {
            return Ok(SteadyReport { state: st, residual: r, method: SteadyMethod::ScalarReduction, roots });
        }
    }

    // Fallback: relax in time from the guess (or the uncoupled state) and polish.
    let start = guess.copied().unwrap_or_else(|| MeanFieldState::uncoupled(params, &rates));
    let slowest = (params.gamma * (2.0 * rates.n_k_th + 1.0) + params.eta).min(params.kappa_c).max(1e-12);
    let t_end = (60.0 / slowest).min(1e6);
    let traj = evolve_with(&start, params, t_end, &EvolveOptions { tol: opts.integrator_tol, record: Record::Final, ..Default::default() });
    let mut best = f64::INFINITY;
    if let Ok(traj) = traj {
        let (st, r) = newton_polish(params, &rates, traj.last(), opts);
        best = r;
        if accept(&st, r) {
            return Ok(SteadyReport { state: st, residual: r, method: SteadyMethod::Integration, roots });
        }
    }
    Err(Error::NoConvergence { residual: best, detail: format!("{} bracketed roots", roots.len()) })
}

/// Photon number of the quadratic approximation that keeps only stimulated
/// processes: ⟨a†a⟩ ≈ −B/A.
pub fn stimulated_photon_estimate(params: &SystemParams) -> Result<f64> {
    let r = derive_rates(params)?;
    let a = 2.0 * r.k_eet;
    let b = params.gamma * (2.0 * r.n_k_th + 1.0) + params.eta
        - (2.0 * r.n_c_th + params.n_spins * (params.eta - params.gamma) / params.kappa_c) * r.k_eet;
    Ok(-b / a)
}

/// CSV header shared by trajectory and steady-state exports.
pub const CSV_COLUMNS: [&str; 6] = ["n", "re_c", "im_c", "sigma_z", "re_ss", "im_ss"];

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet(p: SystemParams) -> SystemParams {
        SystemParams { g: 0.0, eta: 0.0, temperature: 0.0, ..p }
    }

    #[test]
    fn decoupled_decay_rates() {
        let p = quiet(SystemParams::reference());
        let st = MeanFieldState { photon_number: 5.0, inversion: 0.3, ..MeanFieldState::ground() };
        let d = rhs_identical(&st, &p).unwrap();
        assert!((d.photon_number + p.kappa_c * 5.0).abs() < 1e-6);
        assert!((d.inversion + p.gamma * 1.3).abs() < 1e-12);
    }

    #[test]
    fn ground_is_stationary_at_zero_temperature() {
        let p = SystemParams { eta: 0.0, temperature: 0.0, ..SystemParams::reference() };
        let d = rhs_identical(&MeanFieldState::ground(), &p).unwrap();
        assert_eq!(d.to_vec(), [0.0; 6]);
    }

    #[test]
    fn uncoupled_steady_state() {
        let p = SystemParams { g: 0.0, eta: 3.0, ..SystemParams::reference() };
        let r = derive_rates(&p).unwrap();
        let st = steady_state(&p, None).unwrap();
        assert_eq!(st.photon_number, r.n_c_th);
        let expect = (p.eta - p.gamma) / (p.gamma * (2.0 * r.n_k_th + 1.0) + p.eta);
        assert!((st.inversion - expect).abs() < 1e-15);
    }

    #[test]
    fn analytic_jacobian_matches_differences() {
        let p = SystemParams { eta: 20.0, temperature: 0.5, ..SystemParams::reference() }.with_detuning(3e5);
        let sys = IdenticalSystem::new(&p).unwrap();
        let y = [12.0, 1e-4, -3e-4, 0.2, 1e-6, 2e-7];
        let mut ja = DMatrix::zeros(6, 6);
        assert!(sys.jacobian(0.0, &y, &mut ja));
        let mut f0 = [0.0; 6];
        sys.rhs(0.0, &y, &mut f0);
        for j in 0..6 {
            let mut yp = y;
            let h = 1e-7 * y[j].abs().max(1e-9);
            yp[j] += h;
            let mut f1 = [0.0; 6];
            sys.rhs(0.0, &yp, &mut f1);
            for i in 0..6 {
                let fd = (f1[i] - f0[i]) / h;
                let tol = 1e-5 * ja[(i, j)].abs().max(1.0) + 1e-6 * f0[i].abs() / h;
                assert!((fd - ja[(i, j)]).abs() <= tol, "({i},{j}) fd {fd} vs {}", ja[(i, j)]);
            }
        }
    }

    #[test]
    fn lasing_steady_state_is_a_root() {
        let p = SystemParams { eta: 1e3 * 0.157, temperature: 0.025, ..SystemParams::reference() };
        let rep = steady_state_with(&p, None, &SteadyOptions::default()).unwrap();
        assert!(rep.residual <= 1e-10, "{}", rep.residual);
        assert!(rep.state.photon_number > 1e8);
        assert_eq!(rep.roots.len(), 1);
    }
}
