//! Standard small-system checks of the exact solver and of the mean-field
//! closure: single Lindblad channels against their closed-form decays, the
//! decoupled limits in which the closure is exact, and the weak-pump,
//! strongly dephased two-spin case where it should stay accurate.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::Result;
use crate::oracle::{coherent_spin_state, compare_meanfield, exact_evolve_at, exact_observables, product_state, ExactModel, ExactObservables, FilterMode, Operators};

type CMat = nalgebra::DMatrix<Complex64>;

#[derive(Debug, Clone, Serialize)]
pub struct FixtureReport {
    pub name: &'static str,
    pub description: &'static str,
    /// Largest deviation found; relative unless stated in the description.
    pub measured: f64,
    pub bound: f64,
    pub pass: bool,
}

fn report(name: &'static str, description: &'static str, measured: f64, bound: f64) -> FixtureReport {
    FixtureReport { name, description, measured, bound, pass: measured <= bound }
}

fn bare(n_spins: usize, cutoff: usize) -> ExactModel {
    ExactModel {
        n_spins,
        fock_cutoff: cutoff,
        kappa_c: 0.0,
        n_c_th: 0.0,
        detunings: vec![0.0; n_spins],
        g: 0.0,
        gamma: 0.0,
        n_k_th: 0.0,
        eta: 0.0,
        chi: 0.0,
        filter: None,
    }
}

fn times(n: usize, dt: f64) -> Vec<f64> {
    (1..=n).map(|k| k as f64 * dt).collect()
}

fn re(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

fn worst_deviation(
    m: &ExactModel,
    rho0: &CMat,
    ts: &[f64],
    observe: impl Fn(&ExactObservables) -> Complex64,
    want: impl Fn(f64) -> Complex64,
) -> Result<f64> {
    let tr = exact_evolve_at(m, rho0, ts, 1e-11)?;
    let mut worst: f64 = 0.0;
    for (t, rho) in tr.t.iter().zip(&tr.rho) {
        let w = want(*t);
        worst = worst.max((observe(&exact_observables(rho, m)) - w).norm() / w.norm().max(1e-3));
    }
    Ok(worst)
}

/// Each dissipative channel of the master equation on its own.
pub fn lindblad_terms() -> Result<Vec<FixtureReport>> {
    let mut out = Vec::new();

    let mut m = bare(1, 0);
    m.gamma = 0.8;
    m.n_k_th = 0.35;
    let s_inf = -1.0 / (2.0 * m.n_k_th + 1.0);
    let rate = m.gamma * (2.0 * m.n_k_th + 1.0);
    let d = worst_deviation(&m, &product_state(&m, 1.0, 0)?, &times(8, 0.5), |o| re(o.inversion[0]), |t| re(s_inf + (1.0 - s_inf) * (-rate * t).exp()))?;
    out.push(report("spin_relaxation", "thermal spin relaxation, ⟨σz⟩ against its exponential", d, 1e-6));

    let mut m = bare(1, 0);
    m.eta = 1.7;
    let d = worst_deviation(&m, &product_state(&m, -1.0, 0)?, &times(8, 0.25), |o| re(o.inversion[0]), |t| re(1.0 - 2.0 * (-1.7 * t).exp()))?;
    out.push(report("pump", "incoherent pump from the ground state", d, 1e-6));

    let mut m = bare(1, 0);
    m.chi = 0.9;
    m.detunings = vec![2.5];
    let d = worst_deviation(&m, &coherent_spin_state(&m, 0)?, &times(8, 0.3), |o| o.coherence[0], |t| Complex64::new(0.0, -2.5 * t).exp() * (0.5 * (-0.9 * t).exp()))?;
    out.push(report("dephasing", "pure dephasing of a precessing coherence", d, 1e-6));

    let mut m = bare(0, 30);
    m.kappa_c = 1.3;
    m.n_c_th = 0.2;
    let d = worst_deviation(&m, &product_state(&m, -1.0, 3)?, &times(8, 0.4), |o| re(o.photon_number), |t| {
        let e = (-1.3 * t).exp();
        re(3.0 * e + 0.2 * (1.0 - e))
    })?;
    out.push(report("resonator_loss", "resonator relaxation towards its thermal occupation", d, 1e-6));

    let mut m = bare(0, 1);
    m.filter = Some(FilterMode { cutoff: 1, detuning: 0.0, coupling: 0.0, kappa: 0.6 });
    let b = Operators::new(&m).b.expect("filter present");
    let vac = product_state(&m, -1.0, 0)?;
    let one = b.adjoint() * &vac * &b;
    let d = worst_deviation(&m, &one, &times(6, 0.5), |o| re(o.filter_photon.unwrap_or(f64::NAN)), |t| re((-0.6 * t).exp()))?;
    out.push(report("filter_loss", "filter photon decay", d, 1e-6));
    Ok(out)
}

/// Mean field against the exact solution where the closure is exact, and in
/// the weak-pump, strong-dephasing regime where it should be close.
pub fn closure_checks() -> Result<Vec<FixtureReport>> {
    let mut out = Vec::new();

    let mut m = bare(2, 20);
    m.kappa_c = 1.0;
    m.n_c_th = 0.3;
    m.gamma = 0.4;
    m.n_k_th = 0.2;
    m.eta = 0.3;
    m.chi = 2.0;
    let r = compare_meanfield(&m, &product_state(&m, 0.6, 2)?, 6.0, 30, 1e-7)?;
    let d = r.photon_number.max_abs.max(r.inversion.max_abs).max(r.spin_photon.max_abs);
    out.push(report("decoupled_pair", "two uncoupled spins and a thermal resonator (absolute)", d, 1e-7));

    let mut m = bare(1, 30);
    m.kappa_c = 0.7;
    m.n_c_th = 0.5;
    m.gamma = 0.3;
    m.eta = 0.9;
    let r = compare_meanfield(&m, &product_state(&m, -0.2, 1)?, 6.0, 30, 1e-7)?;
    let d = r.photon_number.max_abs.max(r.inversion.max_abs);
    out.push(report("decoupled_single", "one pumped spin, uncoupled (absolute)", d, 1e-7));

    let mut m = bare(2, 6);
    m.kappa_c = 1.0;
    m.g = 0.5;
    m.gamma = 0.1;
    m.eta = 0.2;
    m.chi = 20.0;
    let r = compare_meanfield(&m, &product_state(&m, -1.0, 0)?, 5.0, 200, 1e-6)?;
    out.push(report("weak_pump_dephased_pair", "two spins, χ ≫ g, weak pump: photon number over 5/κ_c", r.photon_number.max_rel, 0.1));
    Ok(out)
}

pub fn standard_suite() -> Result<Vec<FixtureReport>> {
    let mut all = lindblad_terms()?;
    all.extend(closure_checks()?);
    Ok(all)
}
