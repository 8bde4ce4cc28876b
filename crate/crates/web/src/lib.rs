//! Browser bindings. Every entry point takes plain numbers, returns a JSON
//! string and reports errors as a thrown string. Frequencies on the JS side
//! are in Hz.

use nvmaser::analytics::{classify_regime, masing_threshold, RegimeLabel};
use nvmaser::meanfield::{steady_state_with, MeanFieldState, SteadyOptions};
use nvmaser::model::{derive_rates, load_preset, preset_names, SystemParams, TWO_PI};
use nvmaser::spectrum::{scan_identical, ScanOptions};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Preset (or the reference set for an empty name) with the slider values applied.
pub fn point(preset: &str, eta_over_gamma: f64, temperature: f64, n_spins: f64) -> Result<SystemParams, String> {
    let base = if preset.is_empty() { SystemParams::reference() } else { load_preset(preset).map_err(|e| e.to_string())?.params };
    let p = base.with_temperature(temperature).with_n_spins(n_spins);
    let p = p.with_eta(eta_over_gamma * p.gamma);
    p.validate().map_err(|e| e.to_string())?;
    Ok(p)
}

fn solve(p: &SystemParams, guess: Option<&MeanFieldState>) -> Result<MeanFieldState, String> {
    steady_state_with(p, guess, &SteadyOptions::default()).map(|r| r.state).map_err(|e| e.to_string())
}

#[derive(Serialize)]
pub struct SteadyView {
    pub photon_number: f64,
    pub inversion: f64,
    pub thermal_photons: f64,
    pub threshold_over_gamma: Option<f64>,
    pub cooperativity: f64,
    pub regime: RegimeLabel,
}

pub fn steady(preset: &str, eta_over_gamma: f64, temperature: f64, n_spins: f64) -> Result<SteadyView, String> {
    let p = point(preset, eta_over_gamma, temperature, n_spins)?;
    let r = derive_rates(&p).map_err(|e| e.to_string())?;
    let st = solve(&p, None)?;
    Ok(SteadyView {
        photon_number: st.photon_number,
        inversion: st.inversion,
        thermal_photons: r.n_c_th,
        threshold_over_gamma: masing_threshold(&p).map_err(|e| e.to_string())?.rate().map(|t| t / p.gamma),
        cooperativity: r.cooperativity,
        regime: classify_regime(&p, &st).map_err(|e| e.to_string())?,
    })
}

#[derive(Serialize)]
pub struct PeakView {
    pub center_hz: f64,
    pub fwhm_hz: f64,
    pub resolved: bool,
}

#[derive(Serialize)]
pub struct SpectrumView {
    pub offset_hz: Vec<f64>,
    pub normalized: Vec<f64>,
    pub peaks: Vec<PeakView>,
}

pub fn spectrum(preset: &str, eta_over_gamma: f64, temperature: f64, n_spins: f64) -> Result<SpectrumView, String> {
    let p = point(preset, eta_over_gamma, temperature, n_spins)?;
    let st = solve(&p, None)?;
    let res = scan_identical(&p, &st, &ScanOptions::from_params(&p)).map_err(|e| e.to_string())?;
    Ok(SpectrumView {
        offset_hz: res.samples.iter().map(|s| s.offset / TWO_PI).collect(),
        normalized: res.normalized(),
        peaks: res.peaks.iter().map(|k| PeakView { center_hz: k.center / TWO_PI, fwhm_hz: k.fwhm / TWO_PI, resolved: k.resolved }).collect(),
    })
}

#[derive(Serialize)]
pub struct RegimeMap {
    pub eta_over_gamma: Vec<f64>,
    pub n_spins: Vec<f64>,
    /// `regime[j][i]` belongs to `n_spins[j]` and `eta_over_gamma[i]`; null where the solver failed.
    pub regime: Vec<Vec<Option<RegimeLabel>>>,
    pub photon_number: Vec<Vec<Option<f64>>>,
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| (lo.ln() + (hi.ln() - lo.ln()) * k as f64 / (n - 1) as f64).exp()).collect()
}

/// Regimes over η/γ ∈ [1e-3, 1e5] and N ∈ [1e11, 1e17], `points` per axis,
/// continuing along η for each N.
pub fn regime_map(preset: &str, temperature: f64, points: usize) -> Result<RegimeMap, String> {
    let points = points.clamp(2, 40);
    let etas = log_grid(1e-3, 1e5, points);
    let ns = log_grid(1e11, 1e17, points);
    let (mut regime, mut photons) = (Vec::new(), Vec::new());
    for &n in &ns {
        let (mut rr, mut pr) = (Vec::new(), Vec::new());
        let mut guess: Option<MeanFieldState> = None;
        for &e in &etas {
            let p = point(preset, e, temperature, n)?;
            match solve(&p, guess.as_ref()).or_else(|_| solve(&p, None)) {
                Ok(st) => {
                    rr.push(classify_regime(&p, &st).ok());
                    pr.push(Some(st.photon_number));
                    guess = Some(st);
                }
                Err(_) => {
                    rr.push(None);
                    pr.push(None);
                    guess = None;
                }
            }
        }
        regime.push(rr);
        photons.push(pr);
    }
    Ok(RegimeMap { eta_over_gamma: etas, n_spins: ns, regime, photon_number: photons })
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsValue> {
    r.and_then(|v| serde_json::to_string(&v).map_err(|e| e.to_string())).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = presetNames)]
pub fn preset_names_js() -> String {
    serde_json::to_string(&preset_names()).unwrap_or_default()
}

#[wasm_bindgen(js_name = steadyState)]
pub fn steady_js(preset: &str, eta_over_gamma: f64, temperature: f64, n_spins: f64) -> Result<String, JsValue> {
    to_js(steady(preset, eta_over_gamma, temperature, n_spins))
}

#[wasm_bindgen(js_name = emissionSpectrum)]
pub fn spectrum_js(preset: &str, eta_over_gamma: f64, temperature: f64, n_spins: f64) -> Result<String, JsValue> {
    to_js(spectrum(preset, eta_over_gamma, temperature, n_spins))
}

#[wasm_bindgen(js_name = regimeMap)]
pub fn regime_map_js(preset: &str, temperature: f64, points: usize) -> Result<String, JsValue> {
    to_js(regime_map(preset, temperature, points))
}
