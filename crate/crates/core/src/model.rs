//! Physical parameters, derived rates, experimental presets and the NV level scheme.
//!
//! Every frequency and rate is stored as an angular quantity (rad/s). The
//! catalog values from the literature are ordinary frequencies and are
//! multiplied by 2π on construction.

use std::f64::consts::{LN_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub const TWO_PI: f64 = 2.0 * PI;
/// Reduced Planck constant, J·s.
pub const HBAR: f64 = 1.054_571_817e-34;
/// Boltzmann constant, J/K.
pub const K_B: f64 = 1.380_649e-23;
/// Bohr magneton, J/T.
pub const MU_E: f64 = 9.274e-24;
/// Nuclear magneton, J/T.
pub const MU_N: f64 = MU_E / 1837.0;
/// Electron g-factor.
pub const G_E: f64 = 2.0;
/// Nuclear g-factor of 14N (not quoted alongside the other constants, literature value).
pub const G_N: f64 = 0.403_761;
/// Zero-field splitting of the NV ground triplet, rad/s.
pub const ZERO_FIELD_SPLITTING: f64 = TWO_PI * 2.87e9;
/// Perpendicular hyperfine constant, rad/s.
pub const A_PERP: f64 = TWO_PI * -2.7e6;
/// Parallel hyperfine constant, rad/s.
pub const A_PAR: f64 = TWO_PI * -2.1e6;
/// Spin relaxation rate used when a source does not quote one, rad/s.
pub const DEFAULT_GAMMA: f64 = 0.157;

/// Physical parameters of resonator, spins, pump, bath and filter.
///
/// `n_spins` is a float: ensembles of 1e17 spins exceed the exactly
/// representable integers of some formats, and the equations only ever use
/// N multiplicatively.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub omega_c: f64,
    pub kappa_c: f64,
    pub n_spins: f64,
    pub omega_s: f64,
    pub g: f64,
    pub gamma: f64,
    pub chi: f64,
    pub eta: f64,
    pub temperature: f64,
    pub filter_g: f64,
    pub filter_kappa: f64,
}

impl SystemParams {
    /// Parameters used throughout the numerical study: g = 0.7, κ_c = 1.9e6,
    /// χ = 4e6, γ = 0.157 (all rad/s), N = 4e13 spins resonant with a
    /// 9.22 GHz resonator at room temperature.
    pub fn reference() -> Self {
        let omega_c = TWO_PI * 9.22e9;
        SystemParams {
            omega_c,
            kappa_c: 1.9e6,
            n_spins: 4e13,
            omega_s: omega_c,
            g: 0.7,
            gamma: DEFAULT_GAMMA,
            chi: 4e6,
            eta: 0.0,
            temperature: 293.0,
            filter_g: 10.0,
            filter_kappa: 1e3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("omega_c", self.omega_c),
            ("kappa_c", self.kappa_c),
            ("n_spins", self.n_spins),
            ("omega_s", self.omega_s),
            ("g", self.g),
            ("gamma", self.gamma),
            ("chi", self.chi),
            ("eta", self.eta),
            ("temperature", self.temperature),
            ("filter_g", self.filter_g),
            ("filter_kappa", self.filter_kappa),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                return Err(invalid(name, "must be finite"));
            }
            if v < 0.0 {
                return Err(invalid(name, "must be non-negative"));
            }
        }
        if self.omega_c <= 0.0 {
            return Err(invalid("omega_c", "must be positive"));
        }
        if self.n_spins < 1.0 {
            return Err(invalid("n_spins", "must be at least 1"));
        }
        Ok(())
    }

    /// Spin-resonator detuning ω_s − ω_c.
    pub fn detuning(&self) -> f64 {
        self.omega_s - self.omega_c
    }

    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = eta;
        self
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn with_detuning(mut self, detuning: f64) -> Self {
        self.omega_s = self.omega_c + detuning;
        self
    }

    pub fn with_n_spins(mut self, n: f64) -> Self {
        self.n_spins = n;
        self
    }
}

/// Rates that follow from [`SystemParams`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedRates {
    pub n_c_th: f64,
    pub n_k_th: f64,
    /// Total pseudo-spin dephasing rate λ_s.
    pub lambda_s: f64,
    /// Purcell rate 4g²/κ_c.
    pub gamma_purcell: f64,
    /// Energy transfer rate from a spin into the resonator.
    pub k_eet: f64,
    pub cooperativity: f64,
}

/// Bose-Einstein occupation of a mode at `omega` (rad/s) and `temperature` (K).
pub fn thermal_occupation(omega: f64, temperature: f64) -> Result<f64> {
    if !omega.is_finite() || !temperature.is_finite() {
        return Err(invalid("omega/temperature", "must be finite"));
    }
    if omega <= 0.0 {
        return Err(invalid("omega", "must be positive"));
    }
    if temperature < 0.0 {
        return Err(invalid("temperature", "must be non-negative"));
    }
    if temperature == 0.0 {
        return Ok(0.0);
    }
    let x = HBAR * omega / (K_B * temperature);
    Ok(1.0 / x.exp_m1())
}

/// Temperature at which a mode at `omega` holds exactly one thermal quantum.
pub fn unit_occupation_temperature(omega: f64) -> f64 {
    HBAR * omega / (K_B * LN_2)
}

pub fn spin_dephasing(params: &SystemParams, n_k_th: f64) -> f64 {
    0.5 * (params.gamma * (2.0 * n_k_th + 1.0) + params.eta) + params.chi
}

pub fn derive_rates(params: &SystemParams) -> Result<DerivedRates> {
    params.validate()?;
    let n_c_th = thermal_occupation(params.omega_c, params.temperature)?;
    let n_k_th = if params.omega_s > 0.0 {
        thermal_occupation(params.omega_s, params.temperature)?
    } else {
        return Err(invalid("omega_s", "must be positive"));
    };
    let lambda_s = spin_dephasing(params, n_k_th);
    let g2 = params.g * params.g;
    let gamma_purcell = if params.kappa_c > 0.0 { 4.0 * g2 / params.kappa_c } else { f64::INFINITY };
    let big_gamma = lambda_s + 0.5 * params.kappa_c;
    let delta = params.detuning();
    let denom = delta * delta + big_gamma * big_gamma;
    let k_eet = if g2 == 0.0 {
        0.0
    } else if denom == 0.0 {
        f64::INFINITY
    } else {
        2.0 * g2 * big_gamma / denom
    };
    let cooperativity = if k_eet == 0.0 {
        0.0
    } else if params.kappa_c > 0.0 {
        2.0 * k_eet / params.kappa_c
    } else {
        f64::INFINITY
    };
    Ok(DerivedRates { n_c_th, n_k_th, lambda_s, gamma_purcell, k_eet, cooperativity })
}

/// Collective coupling √N·g.
pub fn collective_coupling(params: &SystemParams) -> f64 {
    params.n_spins.sqrt() * params.g
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingRegime {
    Strong,
    Weak,
}

impl CouplingRegime {
    /// Strong iff √N·g exceeds both κ_c and χ.
    pub fn classify(params: &SystemParams) -> Self {
        if collective_coupling(params) > params.kappa_c.max(params.chi) {
            CouplingRegime::Strong
        } else {
            CouplingRegime::Weak
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPreset {
    pub name: &'static str,
    pub params: SystemParams,
    pub coupling_regime: CouplingRegime,
    /// Tabulated Purcell rate Γ_c/2π and collective coupling Ω/2π, in Hz.
    pub tabulated_purcell: f64,
    pub tabulated_omega: f64,
    /// Fields not reported by the source and filled with assumed values.
    pub assumed: Vec<&'static str>,
}

struct CatalogEntry {
    name: &'static str,
    omega_c_hz: f64,
    kappa_c_hz: f64,
    n_spins: f64,
    chi_hz: Option<f64>,
    g_hz: f64,
    purcell_hz: f64,
    omega_hz: f64,
    regime: CouplingRegime,
}

/// Dephasing assumed for the one source that does not report it, Hz.
pub const TYPICAL_CHI_HZ: f64 = 3e6;

const CATALOG: [CatalogEntry; 6] = [
    CatalogEntry {
        name: "breeze2018",
        omega_c_hz: 9.22e9,
        kappa_c_hz: 0.3e6,
        n_spins: 4e13,
        chi_hz: Some(0.64e6),
        g_hz: 0.11,
        purcell_hz: 1.04e-6,
        omega_hz: 0.70e6,
        regime: CouplingRegime::Strong,
    },
    CatalogEntry {
        name: "angerer2018",
        omega_c_hz: 3.18e9,
        kappa_c_hz: 13.8e6,
        n_spins: 1.5e16,
        chi_hz: Some(4.7e6),
        g_hz: 0.051,
        purcell_hz: 7.5e-10,
        omega_hz: 6.12e6,
        regime: CouplingRegime::Weak,
    },
    CatalogEntry {
        name: "putz",
        omega_c_hz: 2.69e9,
        kappa_c_hz: 0.8e6,
        n_spins: 2.5e12,
        chi_hz: Some(2.6e6),
        g_hz: 12.0,
        purcell_hz: 7.2e-4,
        omega_hz: 19e6,
        regime: CouplingRegime::Strong,
    },
    CatalogEntry {
        name: "amsuss",
        omega_c_hz: 2.90e9,
        kappa_c_hz: 0.8e6,
        n_spins: 1e12,
        chi_hz: None,
        g_hz: 12.0,
        purcell_hz: 7.2e-4,
        omega_hz: 12e6,
        regime: CouplingRegime::Strong,
    },
    CatalogEntry {
        name: "kubo",
        omega_c_hz: 2.87e9,
        kappa_c_hz: 1.5e6,
        n_spins: 1e12,
        chi_hz: Some(3e6),
        g_hz: 12.0,
        purcell_hz: 3.84e-4,
        omega_hz: 12e6,
        regime: CouplingRegime::Strong,
    },
    CatalogEntry {
        name: "angerer2018b",
        omega_c_hz: 3.12e9,
        kappa_c_hz: 3.82e6,
        n_spins: 1e17,
        chi_hz: Some(3e6),
        g_hz: 0.07,
        purcell_hz: 5.13e-9,
        omega_hz: 12e6,
        regime: CouplingRegime::Strong,
    },
];

pub fn preset_names() -> Vec<&'static str> {
    CATALOG.iter().map(|e| e.name).collect()
}

pub fn load_preset(name: &str) -> Result<ExperimentPreset> {
    let entry = CATALOG
        .iter()
        .find(|e| e.name.eq_ignore_ascii_case(name))
        .ok_or_else(|| Error::UnknownPreset(name.to_string()))?;
    let mut assumed = vec!["gamma"];
    let chi_hz = match entry.chi_hz {
        Some(c) => c,
        None => {
            assumed.push("chi");
            TYPICAL_CHI_HZ
        }
    };
    let omega_c = TWO_PI * entry.omega_c_hz;
    let params = SystemParams {
        omega_c,
        kappa_c: TWO_PI * entry.kappa_c_hz,
        n_spins: entry.n_spins,
        omega_s: omega_c,
        g: TWO_PI * entry.g_hz,
        gamma: DEFAULT_GAMMA,
        chi: TWO_PI * chi_hz,
        eta: 0.0,
        temperature: 293.0,
        filter_g: 10.0,
        filter_kappa: 1e3,
    };
    Ok(ExperimentPreset {
        name: entry.name,
        params,
        coupling_regime: entry.regime,
        tabulated_purcell: entry.purcell_hz,
        tabulated_omega: entry.omega_hz,
        assumed,
    })
}

pub fn presets() -> Vec<ExperimentPreset> {
    CATALOG.iter().map(|e| load_preset(e.name).expect("catalog entry")).collect()
}

/// NV ground-state levels for a field along the quantization axis, rad/s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelStructure {
    pub field: f64,
    pub omega_0: f64,
    pub omega_plus: f64,
    pub omega_minus: f64,
    pub omega_00: f64,
    pub omega_0p1: f64,
    pub omega_0m1: f64,
    pub omega_m10: f64,
    pub omega_m1p1: f64,
    pub omega_m1m1: f64,
    pub hyperfine_perp: f64,
    pub hyperfine_par: f64,
    /// Set when |−1⟩ has dropped below |0⟩.
    pub inverted_order: bool,
    /// Spin-conserving |0,m⟩ ↔ |−1,m⟩ transitions.
    pub transitions: Vec<(String, f64)>,
}

pub fn nv_level_structure(field: f64) -> Result<LevelStructure> {
    if !field.is_finite() || field < 0.0 {
        return Err(invalid("B", "must be finite and non-negative"));
    }
    let zeeman_e = G_E * MU_E * field / HBAR;
    let zeeman_n = G_N * MU_N * field / HBAR;
    let d = ZERO_FIELD_SPLITTING;
    let omega_0 = -2.0 / 3.0 * d;
    let omega_plus = d / 3.0 + zeeman_e;
    let omega_minus = d / 3.0 - zeeman_e;
    let nuclear_minus = zeeman_n - A_PAR;
    let omega_0p1 = omega_0 - zeeman_n;
    let omega_0m1 = omega_0 + zeeman_n;
    let omega_m1p1 = omega_minus + nuclear_minus;
    let omega_m1m1 = omega_minus - nuclear_minus;
    let transitions = vec![
        ("|0,+1> <-> |-1,+1>".to_string(), (omega_m1p1 - omega_0p1).abs()),
        ("|0,0> <-> |-1,0>".to_string(), (omega_minus - omega_0).abs()),
        ("|0,-1> <-> |-1,-1>".to_string(), (omega_m1m1 - omega_0m1).abs()),
    ];
    Ok(LevelStructure {
        field,
        omega_0,
        omega_plus,
        omega_minus,
        omega_00: omega_0,
        omega_0p1,
        omega_0m1,
        omega_m10: omega_minus,
        omega_m1p1,
        omega_m1m1,
        hyperfine_perp: A_PERP,
        hyperfine_par: A_PAR,
        inverted_order: omega_minus < omega_0,
        transitions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_temperature_has_no_quanta() {
        assert_eq!(thermal_occupation(1e9, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(thermal_occupation(f64::NAN, 1.0).is_err());
        assert!(thermal_occupation(-1.0, 1.0).is_err());
        assert!(thermal_occupation(1.0, -1.0).is_err());
        assert!(nv_level_structure(-0.1).is_err());
    }

    #[test]
    fn unknown_preset() {
        assert!(matches!(load_preset("nope"), Err(Error::UnknownPreset(_))));
    }

    #[test]
    fn resonant_transfer_rate() {
        let p = SystemParams::reference();
        let r = derive_rates(&p).unwrap();
        let big = r.lambda_s + p.kappa_c / 2.0;
        assert!((r.k_eet - 2.0 * p.g * p.g / big).abs() <= 1e-15 * r.k_eet);
        let c = 4.0 * p.g * p.g / (big * p.kappa_c);
        assert!((r.cooperativity - c).abs() <= 1e-14 * c);
    }

    #[test]
    fn far_detuned_transfer_vanishes() {
        let p = SystemParams::reference();
        let k0 = derive_rates(&p).unwrap().k_eet;
        let far = derive_rates(&p.with_detuning(1e15)).unwrap().k_eet;
        assert!(far < 1e-15 * k0);
    }

    #[test]
    fn level_scheme_at_zero_field() {
        let l = nv_level_structure(0.0).unwrap();
        assert!((l.omega_plus - l.omega_0 - ZERO_FIELD_SPLITTING).abs() < 1e-3);
        assert!((l.omega_minus - l.omega_0 - ZERO_FIELD_SPLITTING).abs() < 1e-3);
        assert!(!l.inverted_order);
    }

    #[test]
    fn level_inversion_flag() {
        let crossing = ZERO_FIELD_SPLITTING * HBAR / (G_E * MU_E);
        assert!(!nv_level_structure(0.99 * crossing).unwrap().inverted_order);
        assert!(nv_level_structure(1.01 * crossing).unwrap().inverted_order);
    }

    #[test]
    fn nuclear_splitting_of_lower_level() {
        let b = 0.4;
        let l = nv_level_structure(b).unwrap();
        let expect = 2.0 * (G_N * MU_N * b / HBAR - A_PAR);
        assert!((l.omega_m1p1 - l.omega_m1m1 - expect).abs() < 1e-6 * expect.abs());
    }
}
