//! Exact Lindblad dynamics for a handful of spins, a truncated resonator and
//! an optional filter mode, on a dense density matrix.
//!
//! Everything is written in the frame rotating at ω_c, so only detunings
//! appear in the Hamiltonian. Thermal occupations are stored explicitly,
//! which lets fixtures use rescaled rates of order one.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::meanfield::{IdenticalSystem, MeanFieldState};
use crate::model::{derive_rates, DerivedRates, SystemParams};
use crate::ode::{self, Method, OdeOptions, OdeSystem, Record};

type CMat = DMatrix<Complex64>;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

pub const MAX_SPINS: usize = 4;
pub const MAX_FOCK: usize = 30;
pub const MAX_FILTER_FOCK: usize = 5;
pub const MAX_DIM: usize = 1 << 14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FilterMode {
    pub cutoff: usize,
    /// ω_f − ω_c
    pub detuning: f64,
    pub coupling: f64,
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExactModel {
    pub n_spins: usize,
    pub fock_cutoff: usize,
    pub kappa_c: f64,
    pub n_c_th: f64,
    /// ω_k − ω_c for every spin.
    pub detunings: Vec<f64>,
    pub g: f64,
    pub gamma: f64,
    pub n_k_th: f64,
    pub eta: f64,
    pub chi: f64,
    pub filter: Option<FilterMode>,
}

impl ExactModel {
    /// Identical spins with the rates and thermal occupations of `params`.
    pub fn from_params(params: &SystemParams, n_spins: usize, fock_cutoff: usize) -> Result<Self> {
        let r = derive_rates(params)?;
        let m = ExactModel {
            n_spins,
            fock_cutoff,
            kappa_c: params.kappa_c,
            n_c_th: r.n_c_th,
            detunings: vec![params.detuning(); n_spins],
            g: params.g,
            gamma: params.gamma,
            n_k_th: r.n_k_th,
            eta: params.eta,
            chi: params.chi,
            filter: None,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn with_filter(mut self, filter: FilterMode) -> Result<Self> {
        self.filter = Some(filter);
        self.validate()?;
        Ok(self)
    }

    pub fn spin_dim(&self) -> usize {
        1 << self.n_spins
    }

    pub fn fock_dim(&self) -> usize {
        self.fock_cutoff + 1
    }

    pub fn filter_dim(&self) -> usize {
        self.filter.map_or(1, |f| f.cutoff + 1)
    }

    pub fn dim(&self) -> usize {
        self.spin_dim() * self.fock_dim() * self.filter_dim()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_spins > MAX_SPINS {
            return Err(invalid("n_spins", format!("at most {MAX_SPINS} spins")));
        }
        if self.fock_cutoff > MAX_FOCK {
            return Err(invalid("fock_cutoff", format!("at most {MAX_FOCK}")));
        }
        if let Some(f) = &self.filter {
            if f.cutoff > MAX_FILTER_FOCK {
                return Err(invalid("filter.cutoff", format!("at most {MAX_FILTER_FOCK}")));
            }
            if !(f.kappa >= 0.0) || !f.coupling.is_finite() || !f.detuning.is_finite() {
                return Err(invalid("filter", "rates must be finite and non-negative"));
            }
        }
        if self.detunings.len() != self.n_spins {
            return Err(invalid("detunings", "one entry per spin"));
        }
        for (name, v) in [
            ("kappa_c", self.kappa_c),
            ("n_c_th", self.n_c_th),
            ("gamma", self.gamma),
            ("n_k_th", self.n_k_th),
            ("eta", self.eta),
            ("chi", self.chi),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(invalid(name, "must be finite and non-negative"));
            }
        }
        if !self.g.is_finite() || self.detunings.iter().any(|d| !d.is_finite()) {
            return Err(invalid("g/detunings", "must be finite"));
        }
        if self.dim() > MAX_DIM {
            return Err(invalid("dim", format!("Hilbert dimension {} exceeds {MAX_DIM}", self.dim())));
        }
        Ok(())
    }

    /// The model with Δ → −Δ and g → −g, whose moments are the complex
    /// conjugates of the original ones.
    pub fn conjugated(&self) -> Self {
        let mut c = self.clone();
        c.g = -c.g;
        for d in &mut c.detunings {
            *d = -*d;
        }
        if let Some(f) = &mut c.filter {
            f.detuning = -f.detuning;
            f.coupling = -f.coupling;
        }
        c
    }
}

fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

fn eye(n: usize) -> CMat {
    CMat::identity(n, n)
}

fn annihilation(dim: usize) -> CMat {
    let mut a = CMat::zeros(dim, dim);
    for n in 1..dim {
        a[(n - 1, n)] = Complex64::new((n as f64).sqrt(), 0.0);
    }
    a
}

/// Single-spin operators in the basis (lower, upper).
fn lowering() -> CMat {
    let mut s = CMat::zeros(2, 2);
    s[(0, 1)] = ONE;
    s
}

fn pauli_z() -> CMat {
    let mut s = CMat::zeros(2, 2);
    s[(0, 0)] = -ONE;
    s[(1, 1)] = ONE;
    s
}

/// Operators embedded in the full space spins ⊗ resonator ⊗ filter.
#[derive(Debug, Clone)]
pub struct Operators {
    pub a: CMat,
    pub b: Option<CMat>,
    pub sigma_minus: Vec<CMat>,
    pub sigma_z: Vec<CMat>,
}

impl Operators {
    pub fn new(model: &ExactModel) -> Self {
        let ns = model.n_spins;
        let spin_dim = model.spin_dim();
        let fd = model.fock_dim();
        let bd = model.filter_dim();
        let id2 = eye(2);
        let embed_spin = |op: &CMat, k: usize| -> CMat {
            let mut m = eye(1);
            for j in 0..ns {
                m = kron(&m, if j == k { op } else { &id2 });
            }
            kron(&kron(&m, &eye(fd)), &eye(bd))
        };
        let a = kron(&kron(&eye(spin_dim), &annihilation(fd)), &eye(bd));
        let b = model.filter.map(|_| kron(&kron(&eye(spin_dim), &eye(fd)), &annihilation(bd)));
        let sm = lowering();
        let sz = pauli_z();
        Operators {
            a,
            b,
            sigma_minus: (0..ns).map(|k| embed_spin(&sm, k)).collect(),
            sigma_z: (0..ns).map(|k| embed_spin(&sz, k)).collect(),
        }
    }
}

/// Lindblad channel rate·𝒟[L].
#[derive(Debug, Clone)]
pub struct Channel {
    pub label: String,
    pub rate: f64,
    pub op: CMat,
}

/// Generator pieces: the Hamiltonian and every dissipative channel.
#[derive(Debug, Clone)]
pub struct Liouvillian {
    pub hamiltonian: CMat,
    pub channels: Vec<Channel>,
    /// H − (i/2) Σ rate L†L
    effective: CMat,
}

impl Liouvillian {
    pub fn new(model: &ExactModel) -> Result<Self> {
        model.validate()?;
        let ops = Operators::new(model);
        let d = model.dim();
        let mut h = CMat::zeros(d, d);
        for k in 0..model.n_spins {
            h += &ops.sigma_z[k] * Complex64::new(0.5 * model.detunings[k], 0.0);
            let sp = ops.sigma_minus[k].adjoint();
            h += (&sp * &ops.a + ops.a.adjoint() * &ops.sigma_minus[k]) * Complex64::new(model.g, 0.0);
        }
        let mut channels = vec![
            Channel { label: "resonator_emission".into(), rate: model.kappa_c * (model.n_c_th + 1.0), op: ops.a.clone() },
            Channel { label: "resonator_absorption".into(), rate: model.kappa_c * model.n_c_th, op: ops.a.adjoint() },
        ];
        for k in 0..model.n_spins {
            let sm = &ops.sigma_minus[k];
            channels.push(Channel { label: format!("spin{k}_decay"), rate: model.gamma * (model.n_k_th + 1.0), op: sm.clone() });
            channels.push(Channel { label: format!("spin{k}_thermal_excitation"), rate: model.gamma * model.n_k_th, op: sm.adjoint() });
            channels.push(Channel { label: format!("spin{k}_pump"), rate: model.eta, op: sm.adjoint() });
            channels.push(Channel { label: format!("spin{k}_dephasing"), rate: 0.5 * model.chi, op: ops.sigma_z[k].clone() });
        }
        if let (Some(f), Some(b)) = (&model.filter, &ops.b) {
            h += b.adjoint() * b * Complex64::new(f.detuning, 0.0);
            h += (ops.a.adjoint() * b + b.adjoint() * &ops.a) * Complex64::new(f.coupling, 0.0);
            channels.push(Channel { label: "filter_loss".into(), rate: f.kappa, op: b.clone() });
        }
        channels.retain(|c| c.rate != 0.0);
        Ok(Self::from_parts(h, channels))
    }

    pub fn from_parts(hamiltonian: CMat, channels: Vec<Channel>) -> Self {
        let mut effective = hamiltonian.clone();
        for c in &channels {
            effective -= (c.op.adjoint() * &c.op) * Complex64::new(0.0, 0.5 * c.rate);
        }
        Liouvillian { hamiltonian, channels, effective }
    }

    /// dρ/dt = −i[H, ρ] − Σ rate·(½{L†L, ρ} − LρL†).
    pub fn apply(&self, rho: &CMat) -> CMat {
        let hr = &self.effective * rho;
        let mut out = (&hr - hr.adjoint()) * -I;
        for c in &self.channels {
            out += (&c.op * rho * c.op.adjoint()) * Complex64::new(c.rate, 0.0);
        }
        out
    }
}

fn pack(rho: &CMat, y: &mut [f64]) {
    for (k, v) in rho.iter().enumerate() {
        y[2 * k] = v.re;
        y[2 * k + 1] = v.im;
    }
}

fn unpack(y: &[f64], d: usize) -> CMat {
    CMat::from_iterator(d, d, (0..d * d).map(|k| Complex64::new(y[2 * k], y[2 * k + 1])))
}

struct DensitySystem<'a> {
    l: &'a Liouvillian,
    d: usize,
}

impl OdeSystem for DensitySystem<'_> {
    fn dim(&self) -> usize {
        2 * self.d * self.d
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        let rho = unpack(y, self.d);
        pack(&self.l.apply(&rho), dy);
    }

    fn project(&self, y: &mut [f64]) {
        let rho = unpack(y, self.d);
        let sym = (&rho + rho.adjoint()) * Complex64::new(0.5, 0.0);
        pack(&sym, y);
    }
}

/// Smallest eigenvalue of the Hermitian part of `rho`.
pub fn min_eigenvalue(rho: &CMat) -> f64 {
    let h = (rho + rho.adjoint()) * Complex64::new(0.5, 0.0);
    h.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

pub fn trace_distance(a: &CMat, b: &CMat) -> f64 {
    let d = a - b;
    let h = (&d + d.adjoint()) * Complex64::new(0.5, 0.0);
    0.5 * h.symmetric_eigenvalues().iter().map(|v| v.abs()).sum::<f64>()
}

/// Checks trace, Hermiticity and positivity of a density matrix.
pub fn validate_density(rho: &CMat, tol: f64) -> Result<()> {
    if !rho.is_square() {
        return Err(invalid("rho", "must be square"));
    }
    let tr = rho.trace();
    if (tr - ONE).norm() > tol {
        return Err(Error::Invariant(format!("trace {tr} differs from 1")));
    }
    let herm = (rho - rho.adjoint()).iter().map(|v| v.norm()).fold(0.0, f64::max);
    if herm > tol {
        return Err(Error::Invariant(format!("not Hermitian ({herm:e})")));
    }
    let m = min_eigenvalue(rho);
    if m < -tol {
        return Err(Error::Positivity { min_eigenvalue: m });
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct ExactTrajectory {
    pub t: Vec<f64>,
    pub rho: Vec<CMat>,
    pub trace_error: f64,
    pub min_eigenvalue: f64,
}

impl ExactTrajectory {
    pub fn last(&self) -> &CMat {
        self.rho.last().expect("trajectory holds the initial state")
    }
}

/// Integrates the master equation, recording ρ at `times` (the final time is
/// always included). Aborts when an eigenvalue drops below −1e-6.
pub fn exact_evolve(model: &ExactModel, rho0: &CMat, t_end: f64, tol: f64) -> Result<CMat> {
    exact_evolve_at(model, rho0, &[t_end], tol).map(|tr| tr.last().clone())
}

pub fn exact_evolve_at(model: &ExactModel, rho0: &CMat, times: &[f64], tol: f64) -> Result<ExactTrajectory> {
    let l = Liouvillian::new(model)?;
    evolve_liouvillian(&l, rho0, times, tol)
}

pub fn evolve_liouvillian(l: &Liouvillian, rho0: &CMat, times: &[f64], tol: f64) -> Result<ExactTrajectory> {
    let d = l.hamiltonian.nrows();
    if rho0.nrows() != d || rho0.ncols() != d {
        return Err(invalid("rho0", format!("expected a {d}×{d} matrix")));
    }
    validate_density(rho0, 1e-9)?;
    if !(tol > 0.0 && tol <= 1e-2) {
        return Err(invalid("tol", "must lie in (0, 1e-2]"));
    }
    let t_end = match times.last() {
        Some(&t) if t > 0.0 => t,
        _ => return Err(invalid("times", "need at least one positive time")),
    };
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("times", "must be strictly increasing"));
    }
    let sys = DensitySystem { l, d };
    let mut y0 = vec![0.0; 2 * d * d];
    pack(rho0, &mut y0);
    let opts = OdeOptions::new(Method::Dopri5, tol).atol(tol * 1e-3).record(Record::Times(times.to_vec()));
    let sol = ode::integrate(&sys, 0.0, &y0, t_end, &opts)?;
    let mut out = ExactTrajectory { t: Vec::new(), rho: Vec::new(), trace_error: 0.0, min_eigenvalue: f64::INFINITY };
    for (t, y) in sol.t.iter().zip(&sol.y) {
        let rho = unpack(y, d);
        let rho = (&rho + rho.adjoint()) * Complex64::new(0.5, 0.0);
        out.trace_error = out.trace_error.max((rho.trace() - ONE).norm());
        let m = min_eigenvalue(&rho);
        out.min_eigenvalue = out.min_eigenvalue.min(m);
        if m < -1e-6 {
            return Err(Error::Positivity { min_eigenvalue: m });
        }
        out.t.push(*t);
        out.rho.push(rho);
    }
    Ok(out)
}

fn fock_state(dim: usize, n: usize) -> CMat {
    let mut m = CMat::zeros(dim, dim);
    m[(n, n)] = ONE;
    m
}

fn thermal_fock(dim: usize, nth: f64) -> CMat {
    let mut m = CMat::zeros(dim, dim);
    if nth == 0.0 {
        m[(0, 0)] = ONE;
        return m;
    }
    let q = nth / (nth + 1.0);
    let mut total = 0.0;
    for n in 0..dim {
        let p = q.powi(n as i32);
        m[(n, n)] = Complex64::new(p, 0.0);
        total += p;
    }
    m / Complex64::new(total, 0.0)
}

/// Single-spin state with inversion `s` and no coherence.
fn spin_mixed(s: f64) -> CMat {
    let mut m = CMat::zeros(2, 2);
    m[(0, 0)] = Complex64::new(0.5 * (1.0 - s), 0.0);
    m[(1, 1)] = Complex64::new(0.5 * (1.0 + s), 0.0);
    m
}

/// Product state: every spin with inversion `s` (diagonal), resonator in
/// Fock state `n`, filter empty.
pub fn product_state(model: &ExactModel, inversion: f64, photons: usize) -> Result<CMat> {
    if !(inversion.abs() <= 1.0) {
        return Err(invalid("inversion", "must lie in [-1, 1]"));
    }
    if photons > model.fock_cutoff {
        return Err(invalid("photons", "exceeds the Fock cutoff"));
    }
    let mut m = eye(1);
    for _ in 0..model.n_spins {
        m = kron(&m, &spin_mixed(inversion));
    }
    Ok(kron(&kron(&m, &fock_state(model.fock_dim(), photons)), &fock_state(model.filter_dim(), 0)))
}

/// Uncoupled Gibbs state: resonator at n_c^th (truncated), spins at the
/// inversion −1/(2n_k^th + 1), filter empty.
pub fn gibbs_state(model: &ExactModel) -> CMat {
    let s = -1.0 / (2.0 * model.n_k_th + 1.0);
    let mut m = eye(1);
    for _ in 0..model.n_spins {
        m = kron(&m, &spin_mixed(s));
    }
    kron(&kron(&m, &thermal_fock(model.fock_dim(), model.n_c_th)), &fock_state(model.filter_dim(), 0))
}

/// Spin k in (|lower⟩ + |upper⟩)/√2, others lower, resonator and filter empty.
pub fn coherent_spin_state(model: &ExactModel, k: usize) -> Result<CMat> {
    if k >= model.n_spins {
        return Err(invalid("k", "no such spin"));
    }
    let plus = CMat::from_element(2, 2, Complex64::new(0.5, 0.0));
    let down = fock_state(2, 0);
    let mut m = eye(1);
    for j in 0..model.n_spins {
        m = kron(&m, if j == k { &plus } else { &down });
    }
    Ok(kron(&kron(&m, &fock_state(model.fock_dim(), 0)), &fock_state(model.filter_dim(), 0)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExactObservables {
    pub photon_number: f64,
    pub inversion: Vec<f64>,
    /// ⟨σ_k†a⟩ per spin.
    pub spin_photon: Vec<Complex64>,
    /// ⟨a†σ_k⟩ per spin.
    pub photon_spin: Vec<Complex64>,
    /// ⟨σ_k†σ_l⟩, zero on the diagonal.
    pub spin_spin: Vec<Vec<Complex64>>,
    /// ⟨σ_k⟩ per spin.
    pub coherence: Vec<Complex64>,
    pub filter_photon: Option<f64>,
}

impl ExactObservables {
    /// Spin-averaged moments in the identical-spin layout.
    pub fn averaged(&self) -> MeanFieldState {
        let n = self.inversion.len().max(1) as f64;
        let mut pair = ZERO;
        let mut pairs = 0.0;
        for k in 0..self.inversion.len() {
            for l in 0..self.inversion.len() {
                if k != l {
                    pair += self.spin_spin[k][l];
                    pairs += 1.0;
                }
            }
        }
        MeanFieldState {
            photon_number: self.photon_number,
            spin_photon: self.spin_photon.iter().sum::<Complex64>() / n,
            inversion: self.inversion.iter().sum::<f64>() / n,
            spin_spin: if pairs > 0.0 { pair / pairs } else { ZERO },
        }
    }
}

fn expect(rho: &CMat, op: &CMat) -> Complex64 {
    (rho * op).trace()
}

pub fn exact_observables(rho: &CMat, model: &ExactModel) -> ExactObservables {
    let ops = Operators::new(model);
    let ns = model.n_spins;
    let n_op = ops.a.adjoint() * &ops.a;
    let mut spin_spin = vec![vec![ZERO; ns]; ns];
    for k in 0..ns {
        for l in 0..ns {
            if k != l {
                spin_spin[k][l] = expect(rho, &(ops.sigma_minus[k].adjoint() * &ops.sigma_minus[l]));
            }
        }
    }
    ExactObservables {
        photon_number: expect(rho, &n_op).re,
        inversion: ops.sigma_z.iter().map(|z| expect(rho, z).re).collect(),
        spin_photon: ops.sigma_minus.iter().map(|s| expect(rho, &(s.adjoint() * &ops.a))).collect(),
        photon_spin: ops.sigma_minus.iter().map(|s| expect(rho, &(ops.a.adjoint() * s))).collect(),
        spin_spin,
        coherence: ops.sigma_minus.iter().map(|s| expect(rho, s)).collect(),
        filter_photon: ops.b.as_ref().map(|b| expect(rho, &(b.adjoint() * b)).re),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentDiscrepancy {
    pub max_abs: f64,
    /// Relative to the largest exact magnitude over the horizon.
    pub max_rel: f64,
    pub final_abs: f64,
    /// Growth exponent p of the early discrepancy, d(t) ∝ t^p.
    pub early_exponent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscrepancyReport {
    pub times: Vec<f64>,
    pub exact: Vec<MeanFieldState>,
    pub meanfield: Vec<MeanFieldState>,
    pub photon_number: MomentDiscrepancy,
    pub spin_photon: MomentDiscrepancy,
    pub inversion: MomentDiscrepancy,
    pub spin_spin: MomentDiscrepancy,
    /// Some moment departs linearly from t = 0, which a truncation error
    /// cannot do from an uncorrelated start.
    pub sign_suspect: bool,
    pub tol_report: f64,
}

/// Mean-field rates matching the explicit occupations of an exact model.
pub fn matched_rates(model: &ExactModel) -> DerivedRates {
    let lambda_s = 0.5 * (model.gamma * (2.0 * model.n_k_th + 1.0) + model.eta) + model.chi;
    let g2 = model.g * model.g;
    let big_gamma = lambda_s + 0.5 * model.kappa_c;
    let delta = model.detunings.first().copied().unwrap_or(0.0);
    let k_eet = if g2 == 0.0 { 0.0 } else { 2.0 * g2 * big_gamma / (delta * delta + big_gamma * big_gamma) };
    DerivedRates {
        n_c_th: model.n_c_th,
        n_k_th: model.n_k_th,
        lambda_s,
        gamma_purcell: if model.kappa_c > 0.0 { 4.0 * g2 / model.kappa_c } else { f64::INFINITY },
        k_eet,
        cooperativity: if model.kappa_c > 0.0 { 2.0 * k_eet / model.kappa_c } else { f64::INFINITY },
    }
}

/// Mean-field parameters for the identical-spin equations with the exact
/// model's rates. ω_c only fixes the frame; the occupations come from
/// [`matched_rates`].
pub fn matched_params(model: &ExactModel) -> SystemParams {
    let omega_c = 1.0;
    SystemParams {
        omega_c,
        kappa_c: model.kappa_c,
        n_spins: model.n_spins as f64,
        omega_s: omega_c + model.detunings.first().copied().unwrap_or(0.0),
        g: model.g,
        gamma: model.gamma,
        chi: model.chi,
        eta: model.eta,
        temperature: 0.0,
        filter_g: 0.0,
        filter_kappa: 0.0,
    }
}

fn discrepancy(times: &[f64], exact: &[f64], mf: &[f64]) -> MomentDiscrepancy {
    let diffs: Vec<f64> = exact.iter().zip(mf).map(|(a, b)| (a - b).abs()).collect();
    let max_abs = diffs.iter().copied().fold(0.0, f64::max);
    let scale = exact.iter().map(|v| v.abs()).fold(0.0, f64::max);
    // first two samples after t = 0 with a measurable difference
    let early: Vec<(f64, f64)> = times.iter().zip(&diffs).filter(|(t, d)| **t > 0.0 && **d > 0.0).take(2).map(|(t, d)| (*t, *d)).collect();
    let early_exponent = if early.len() == 2 { (early[1].1 / early[0].1).ln() / (early[1].0 / early[0].0).ln() } else { f64::NAN };
    MomentDiscrepancy {
        max_abs,
        max_rel: if scale > 0.0 { max_abs / scale } else { max_abs },
        final_abs: diffs.last().copied().unwrap_or(0.0),
        early_exponent,
    }
}

/// Runs the exact and the identical-spin mean-field dynamics from `rho0`
/// (which must be symmetric under spin exchange) and compares the moments
/// at `samples` evenly spaced times up to `horizon`, with a log-spaced
/// block of early times for the growth-exponent test.
pub fn compare_meanfield(model: &ExactModel, rho0: &CMat, horizon: f64, samples: usize, tol_report: f64) -> Result<DiscrepancyReport> {
    if model.detunings.windows(2).any(|w| w[0] != w[1]) {
        return Err(invalid("detunings", "the mean-field comparison needs identical spins"));
    }
    if model.n_spins == 0 {
        return Err(invalid("n_spins", "need at least one spin"));
    }
    let mut times: Vec<f64> = (0..6).map(|k| horizon * 1e-4 * 2f64.powi(k)).collect();
    times.extend((1..=samples.max(1)).map(|k| horizon * k as f64 / samples.max(1) as f64));
    times.sort_by(|a, b| a.total_cmp(b));
    times.dedup();
    let tol = (tol_report * 1e-3).clamp(1e-12, 1e-6);
    let ex = exact_evolve_at(model, rho0, &times, tol)?;
    let exact: Vec<MeanFieldState> = ex.rho.iter().map(|r| exact_observables(r, model).averaged()).collect();

    let sys = IdenticalSystem { params: matched_params(model), rates: matched_rates(model) };
    let start = exact_observables(rho0, model).averaged();
    let opts = OdeOptions::new(Method::Dopri5, tol).atol(tol * 1e-3).record(Record::Times(times.clone()));
    let sol = ode::integrate(&sys, 0.0, &start.to_vec(), horizon, &opts)?;
    let meanfield: Vec<MeanFieldState> = sol.y.iter().map(|y| MeanFieldState::from_slice(y)).collect();
    let t = &ex.t;

    let pick = |f: &dyn Fn(&MeanFieldState) -> f64, v: &[MeanFieldState]| -> Vec<f64> { v.iter().map(f).collect() };
    let photon = discrepancy(t, &pick(&|s| s.photon_number, &exact), &pick(&|s| s.photon_number, &meanfield));
    let inversion = discrepancy(t, &pick(&|s| s.inversion, &exact), &pick(&|s| s.inversion, &meanfield));
    let sp_abs = |s: &MeanFieldState| s.spin_photon.norm();
    let mut spin_photon = discrepancy(t, &pick(&sp_abs, &exact), &pick(&sp_abs, &meanfield));
    let sp_diff: Vec<f64> = exact.iter().zip(&meanfield).map(|(a, b)| (a.spin_photon - b.spin_photon).norm()).collect();
    spin_photon.max_abs = sp_diff.iter().copied().fold(0.0, f64::max);
    spin_photon.final_abs = sp_diff.last().copied().unwrap_or(0.0);
    let ss_diff: Vec<f64> = exact.iter().zip(&meanfield).map(|(a, b)| (a.spin_spin - b.spin_spin).norm()).collect();
    let ss_mag: Vec<f64> = exact.iter().map(|a| a.spin_spin.norm()).collect();
    let mut spin_spin = discrepancy(t, &ss_mag, &ss_mag);
    spin_spin.max_abs = ss_diff.iter().copied().fold(0.0, f64::max);
    spin_spin.final_abs = ss_diff.last().copied().unwrap_or(0.0);
    let ss_scale = ss_mag.iter().copied().fold(0.0, f64::max);
    spin_spin.max_rel = if ss_scale > 0.0 { spin_spin.max_abs / ss_scale } else { spin_spin.max_abs };
    spin_spin.early_exponent = discrepancy(t, &ss_diff, &vec![0.0; ss_diff.len()]).early_exponent;

    let sign_suspect = [&photon, &inversion].iter().any(|d| d.max_abs > tol_report && d.early_exponent < 1.5);
    Ok(DiscrepancyReport {
        times: t.clone(),
        exact,
        meanfield,
        photon_number: photon,
        spin_photon,
        inversion,
        spin_spin,
        sign_suspect,
        tol_report,
    })
}
