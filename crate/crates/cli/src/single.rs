use std::path::Path;

use nvmaser::analytics::{
    classify_regime, dicke_numbers, masing_threshold, masing_threshold_self_consistent, peak_offsets, DickeCoordinates, RegimeLabel,
};
use nvmaser::meanfield::{evolve_with, steady_state_with, EvolveOptions, MeanFieldState, SteadyMethod, SteadyOptions};
use nvmaser::model::{derive_rates, DerivedRates, SystemParams};
use nvmaser::ode::Record;
use nvmaser::spectrum::{scan_identical, ScanOptions, SpectrumResult};
use serde::Serialize;

use crate::output::{num, write_json, Table};
use crate::settings::Settings;
use crate::Result;

#[derive(Debug, Clone, Serialize)]
pub struct PeakRow {
    pub center: f64,
    pub fwhm: f64,
    pub height: f64,
    pub resolved: bool,
    pub blended: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub config_hash: String,
    pub units: String,
    /// Internal parameters, rad/s.
    pub params: SystemParams,
    pub rates: DerivedRates,
    pub steady: MeanFieldState,
    pub residual: f64,
    pub method: SteadyMethod,
    /// Photon numbers of all fixed points found.
    pub roots: Vec<f64>,
    pub multistable: bool,
    /// η at threshold over γ, closed form and with the pump-dependent λ_s.
    pub threshold_over_gamma: Option<f64>,
    pub threshold_self_consistent_over_gamma: Option<f64>,
    pub regime: RegimeLabel,
    pub dicke: DickeCoordinates,
    /// Roots ω̃± relative to ω_c as (real, imaginary), output units.
    pub complex_peaks: [(f64, f64); 2],
    pub peaks: Vec<PeakRow>,
    /// FWHM of the narrowest resolved peak, output units.
    pub linewidth: Option<f64>,
}

pub fn peak_rows(s: &Settings, res: &SpectrumResult) -> Vec<PeakRow> {
    res.peaks
        .iter()
        .map(|p| PeakRow { center: s.out_freq(p.center), fwhm: s.out_freq(p.fwhm), height: p.height, resolved: p.resolved, blended: p.blended })
        .collect()
}

pub fn spectrum_table(dir: &Path, name: &str, s: &Settings, res: &SpectrumResult) -> Result<()> {
    let mut t = Table::create(dir, name, s, &["offset", "b_dag_b", "density", "normalized", "kappa_f", "filter_g"])?;
    for (x, n) in res.samples.iter().zip(res.normalized()) {
        t.row([num(s.out_freq(x.offset)), num(x.b_dag_b), num(x.density), num(n), num(s.out_freq(x.kappa_f)), num(s.out_freq(x.filter_g))])?;
    }
    t.finish()
}

pub const STATE_COLUMNS: [&str; 6] = ["photon_number", "re_spin_photon", "im_spin_photon", "inversion", "re_spin_spin", "im_spin_spin"];

pub fn state_fields(st: &MeanFieldState) -> Vec<String> {
    st.to_vec().iter().map(|v| num(*v)).collect()
}

/// Steady state, spectrum and diagnostics of one parameter point. With
/// `t_end` set, the trajectory from the uncoupled state is written as well.
pub fn run_single(s: &Settings, out: &Path) -> Result<Summary> {
    let p = s.params()?;
    let rates = derive_rates(&p)?;
    let rep = steady_state_with(&p, None, &SteadyOptions::default())?;
    let st = rep.state;
    let scan = scan_identical(&p, &st, &ScanOptions::from_params(&p))?;
    let (a, b) = peak_offsets(&p, st.inversion)?;
    let summary = Summary {
        config_hash: s.hash.clone(),
        units: s.units().to_string(),
        params: p,
        rates,
        steady: st,
        residual: rep.residual,
        method: rep.method,
        multistable: rep.multistable(),
        roots: rep.roots.clone(),
        threshold_over_gamma: masing_threshold(&p)?.rate().map(|t| t / p.gamma),
        threshold_self_consistent_over_gamma: masing_threshold_self_consistent(&p)?.rate().map(|t| t / p.gamma),
        regime: classify_regime(&p, &st)?,
        dicke: dicke_numbers(st.inversion, st.spin_spin, p.n_spins)?,
        complex_peaks: [(s.out_freq(a.re), s.out_freq(a.im)), (s.out_freq(b.re), s.out_freq(b.im))],
        peaks: peak_rows(s, &scan),
        linewidth: scan.narrowest().map(|pk| s.out_freq(pk.fwhm)),
    };
    write_json(out, "summary.json", &summary)?;
    write_json(out, "peaks.json", &summary.peaks)?;
    spectrum_table(out, "spectrum.csv", s, &scan)?;

    let mut cols = vec!["eta"];
    cols.extend(STATE_COLUMNS);
    let mut t = Table::create(out, "steady.csv", s, &cols)?;
    let mut row = vec![num(s.out_freq(p.eta))];
    row.extend(state_fields(&st));
    t.row(row)?;
    t.finish()?;

    if let Some(t_end) = s.config.get_f64("t_end")? {
        let tol = s.f64_or("tol", 1e-8)?;
        let samples = s.usize_or("samples", 200)?.max(2);
        let times: Vec<f64> = (1..=samples).map(|k| t_end * k as f64 / samples as f64).collect();
        let opts = EvolveOptions { tol, record: Record::Times(times), ..Default::default() };
        let tr = evolve_with(&MeanFieldState::uncoupled(&p, &rates), &p, t_end, &opts)?;
        let mut cols = vec!["t"];
        cols.extend(STATE_COLUMNS);
        let mut t = Table::create(out, "trajectory.csv", s, &cols)?;
        for (time, state) in tr.t.iter().zip(&tr.states) {
            let mut row = vec![num(*time)];
            row.extend(state_fields(state));
            t.row(row)?;
        }
        t.finish()?;
    }
    Ok(summary)
}
