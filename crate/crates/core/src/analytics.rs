//! Closed-form diagnostics: masing threshold, complex peak frequencies,
//! Dicke coordinates, dressed-state frequencies, regime labels and the
//! cavity pulling factor.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::meanfield::{self, MeanFieldState};
use crate::model::{derive_rates, SystemParams};
use crate::spectrum::{self, IdenticalResponse, ScanOptions};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Threshold {
    /// Pump rate (rad/s) above which stimulated emission dominates.
    Reachable(f64),
    /// N𝒞 ≤ 1: no pump rate satisfies the condition.
    Unreachable,
}

impl Threshold {
    pub fn rate(&self) -> Option<f64> {
        match self {
            Threshold::Reachable(r) => Some(*r),
            Threshold::Unreachable => None,
        }
    }
}

fn threshold_at(params: &SystemParams, eta: f64) -> Result<Threshold> {
    let r = derive_rates(&params.with_eta(eta))?;
    let nc = params.n_spins * r.cooperativity;
    if nc <= 1.0 {
        return Ok(Threshold::Unreachable);
    }
    Ok(Threshold::Reachable(params.gamma * (2.0 * r.n_k_th + 1.0 + nc) / (nc - 1.0)))
}

/// η threshold η/γ = (2n_k^th + 1 + N𝒞)/(N𝒞 − 1), with the dephasing inside
/// 𝒞 evaluated without pumping.
pub fn masing_threshold(params: &SystemParams) -> Result<Threshold> {
    threshold_at(params, 0.0)
}

/// Same condition with λ_s evaluated at the threshold pump rate itself,
/// found by fixed-point iteration.
pub fn masing_threshold_self_consistent(params: &SystemParams) -> Result<Threshold> {
    let mut eta = 0.0;
    for _ in 0..200 {
        match threshold_at(params, eta)? {
            Threshold::Unreachable => return Ok(Threshold::Unreachable),
            Threshold::Reachable(next) => {
                if (next - eta).abs() <= 1e-13 * next {
                    return Ok(Threshold::Reachable(next));
                }
                eta = next;
            }
        }
    }
    Ok(Threshold::Reachable(eta))
}

/// Large-cooperativity form of the threshold, η/γ ≈ (2n_k^th + 1)/(N𝒞) + 1.
pub fn masing_threshold_estimate(params: &SystemParams) -> Result<Threshold> {
    let r = derive_rates(&params.with_eta(0.0))?;
    let nc = params.n_spins * r.cooperativity;
    if nc <= 1.0 {
        return Ok(Threshold::Unreachable);
    }
    Ok(Threshold::Reachable(params.gamma * ((2.0 * r.n_k_th + 1.0) / nc + 1.0)))
}

/// Complex peak positions relative to ω_c, (ω̃₊, ω̃₋). The square root is
/// taken on the branch with non-negative real part.
pub fn peak_offsets(params: &SystemParams, inversion: f64) -> Result<(Complex64, Complex64)> {
    let r = derive_rates(params)?;
    let wk = Complex64::new(params.detuning(), r.lambda_s);
    let wc = Complex64::new(0.0, 0.5 * params.kappa_c);
    let disc = (wk - wc) * (wk - wc) - 4.0 * params.n_spins * params.g * params.g * inversion;
    let mut root = disc.sqrt();
    if root.re < 0.0 || (root.re == 0.0 && root.im < 0.0) {
        root = -root;
    }
    Ok(((wk + wc + root) / 2.0, (wk + wc - root) / 2.0))
}

/// Absolute complex peak frequencies (rad/s).
pub fn peak_frequencies(params: &SystemParams, inversion: f64) -> Result<(Complex64, Complex64)> {
    let (a, b) = peak_offsets(params, inversion)?;
    Ok((a + params.omega_c, b + params.omega_c))
}

/// R = (λ_s − κ_c/2)² + 4Ng²⟨σz⟩.
pub fn resonant_r(params: &SystemParams, inversion: f64) -> Result<f64> {
    let r = derive_rates(params)?;
    let d = r.lambda_s - 0.5 * params.kappa_c;
    Ok(d * d + 4.0 * params.n_spins * params.g * params.g * inversion)
}

/// R expressed through the Dicke number M = N⟨σz⟩/2: (λ_s − κ_c/2)² + 8g²M.
pub fn resonant_r_from_m(params: &SystemParams, m: f64) -> Result<f64> {
    let r = derive_rates(params)?;
    let d = r.lambda_s - 0.5 * params.kappa_c;
    Ok(d * d + 8.0 * params.g * params.g * m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DickeCoordinates {
    pub j: f64,
    pub m: f64,
    pub j_over_n: f64,
    pub m_over_n: f64,
    /// The radicand of J was slightly negative and clipped to zero.
    pub clipped: bool,
    /// |Im⟨σ†σ'⟩| exceeded 1e-6.
    pub asymmetric: bool,
}

pub fn dicke_numbers(inversion: f64, spin_spin: Complex64, n_spins: f64) -> Result<DickeCoordinates> {
    let m = 0.5 * n_spins * inversion;
    let radicand = 0.75 * n_spins + n_spins * (n_spins - 1.0) * (spin_spin.re + 0.25 * inversion * inversion);
    if radicand < -1e-9 * n_spins * n_spins {
        return Err(Error::Invariant(format!("negative J² = {radicand:e}")));
    }
    let clipped = radicand < 0.0;
    let j = radicand.max(0.0).sqrt();
    Ok(DickeCoordinates {
        j,
        m,
        j_over_n: j / n_spins,
        m_over_n: m / n_spins,
        clipped,
        asymmetric: spin_spin.im.abs() > 1e-6,
    })
}

/// Dressed transition frequencies ½[ω_c + ω_s ± √(8J g² + (ω_c − ω_s)²)].
pub fn dressed_frequencies(j: f64, g_s: f64, omega_c: f64, omega_s: f64) -> (f64, f64) {
    let root = (8.0 * j * g_s * g_s + (omega_c - omega_s).powi(2)).sqrt();
    let mid = 0.5 * (omega_c + omega_s);
    (mid + 0.5 * root, mid - 0.5 * root)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeLabel {
    Thermal,
    Superradiance,
    SuperradiantMaser,
}

pub fn classify_regime(params: &SystemParams, steady: &MeanFieldState) -> Result<RegimeLabel> {
    let r = derive_rates(params)?;
    let n = steady.photon_number;
    let above = match masing_threshold(params)? {
        Threshold::Reachable(t) => params.eta >= t,
        Threshold::Unreachable => false,
    };
    if above && n > 1f64.max(2.0 * r.n_c_th) {
        Ok(RegimeLabel::SuperradiantMaser)
    } else if n > 1.0 && r.n_c_th >= 1.0 {
        Ok(RegimeLabel::Thermal)
    } else {
        Ok(RegimeLabel::Superradiance)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PullingFit {
    pub slope: f64,
    /// (Δω, masing peak offset from ω_c) pairs used in the fit.
    pub points: Vec<(f64, f64)>,
    /// Detunings skipped because no masing peak was found.
    pub excluded: Vec<f64>,
}

/// Slope of the narrowest-peak position against detuning, fitted through
/// the origin-free least-squares line.
pub fn pulling_factor(params: &SystemParams, deltas: &[f64]) -> Result<PullingFit> {
    let mut points = Vec::new();
    let mut excluded = Vec::new();
    let mut guess: Option<MeanFieldState> = None;
    for &d in deltas {
        let p = params.with_detuning(d);
        let st = match meanfield::steady_state(&p, guess.as_ref()) {
            Ok(s) => s,
            Err(_) => {
                excluded.push(d);
                continue;
            }
        };
        guess = Some(st);
        if classify_regime(&p, &st)? != RegimeLabel::SuperradiantMaser {
            excluded.push(d);
            continue;
        }
        let resp = IdenticalResponse::new(&p, &st)?;
        let result = spectrum::scan_spectrum(&resp, None, &ScanOptions::from_params(&p))?;
        match result.narrowest() {
            Some(pk) => points.push((d, pk.center)),
            None => excluded.push(d),
        }
    }
    if points.len() < 2 {
        return Err(Error::NoConvergence { residual: f64::NAN, detail: "fewer than two masing detunings".into() });
    }
    let k = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / k;
    let my = points.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(PullingFit { slope: sxy / sxx, points, excluded })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decoupled_roots_are_bare_frequencies() {
        let p = SystemParams { g: 0.0, ..SystemParams::reference() }.with_detuning(1e5);
        let r = derive_rates(&p).unwrap();
        let (a, b) = peak_offsets(&p, -0.5).unwrap();
        let wk = Complex64::new(1e5, r.lambda_s);
        let wc = Complex64::new(0.0, 0.5 * p.kappa_c);
        assert!(((a - wk).norm() < 1e-6 && (b - wc).norm() < 1e-6) || ((a - wc).norm() < 1e-6 && (b - wk).norm() < 1e-6));
    }

    #[test]
    fn unreachable_threshold() {
        let mut p = SystemParams::reference();
        let r = derive_rates(&p).unwrap();
        p.n_spins = 0.5 / r.cooperativity;
        assert_eq!(masing_threshold(&p).unwrap(), Threshold::Unreachable);
    }

    #[test]
    fn dicke_extremes() {
        let n = 1e6;
        let g = dicke_numbers(-1.0, Complex64::new(0.0, 0.0), n).unwrap();
        assert!((g.j - (n * (n + 2.0)).sqrt() / 2.0).abs() < 1e-6 * n);
        assert_eq!(g.m, -n / 2.0);
        let u = dicke_numbers(0.0, Complex64::new(0.0, 0.0), n).unwrap();
        assert!((u.j - (3.0 * n).sqrt() / 2.0).abs() < 1e-9);
        assert!(dicke_numbers(0.0, Complex64::new(-0.5, 0.0), n).is_err());
    }

    #[test]
    fn dressed_reduce_to_bare() {
        let (a, b) = dressed_frequencies(0.0, 1.0, 10.0, 7.0);
        assert_eq!((a, b), (10.0, 7.0));
    }
}
