//! Spectra of a Gaussian-broadened ensemble split into frequency classes,
//! over a list of pump rates, plus the optional central-class splitting study.

use std::path::Path;

use nvmaser::analytics::DickeCoordinates;
use nvmaser::model::{SystemParams, TWO_PI};
use nvmaser::spectrum::{scan_spectrum, ScanOptions, SpectrumResult};
use nvmaser::subensemble::{
    dicke_per_class, discretize_gaussian_with, split_class, split_state, steady_state_subensembles_with, GridLayout, SubEnsembleModel, SubEnsembleState,
    SubSteadyOptions,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::output::{num, write_json, Table};
use crate::settings::Settings;
use crate::single::{peak_rows, PeakRow};
use crate::{check_failures, CliError, Result};

#[derive(Debug, Clone, Serialize)]
pub struct Fig2Setup {
    pub classes: usize,
    /// Rad/s.
    pub chi_inh: f64,
    pub n_spins: f64,
    pub temperature: f64,
    pub layout: GridLayout,
    pub span_sigmas: f64,
    pub eta_over_gamma: Vec<f64>,
}

impl Fig2Setup {
    pub fn from_settings(s: &Settings) -> Result<Fig2Setup> {
        let layout = match s.config.get("layout").unwrap_or("symmetric") {
            "symmetric" => GridLayout::Symmetric,
            "include_center" => GridLayout::IncludeCenter,
            other => return Err(CliError::Config(format!("layout must be symmetric or include_center, got `{other}`"))),
        };
        let etas = s.list("eta_over_gamma_list")?.unwrap_or_else(|| (0..9).map(|k| 10f64.powi(k - 3)).collect());
        if etas.is_empty() || etas.iter().any(|e| !(*e >= 0.0)) {
            return Err(CliError::Config("eta_over_gamma_list needs non-negative values".into()));
        }
        let classes = s.usize_or("classes", 50)?;
        if !(1..=100).contains(&classes) {
            return Err(CliError::Config("classes must be between 1 and 100".into()));
        }
        Ok(Fig2Setup {
            classes,
            chi_inh: s.f64_or("chi_inh", 4e6)?,
            n_spins: s.f64_or("n_spins", 4e13)?,
            temperature: s.f64_or("temperature", 0.025)?,
            layout,
            span_sigmas: s.f64_or("span_sigmas", 2.5)?,
            eta_over_gamma: etas,
        })
    }

    fn base(&self, s: &Settings) -> Result<SystemParams> {
        Ok(SystemParams { temperature: self.temperature, ..s.params()? }.with_n_spins(self.n_spins))
    }

    pub fn model(&self, s: &Settings, eta_over_gamma: f64, n_spins: f64, layout: GridLayout) -> Result<SubEnsembleModel> {
        let b = self.base(s)?;
        let b = b.with_eta(eta_over_gamma * b.gamma);
        Ok(discretize_gaussian_with(&b, n_spins, self.chi_inh, self.classes, b.omega_c, layout, self.span_sigmas)?)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Fig2Entry {
    pub eta_over_gamma: f64,
    pub status: String,
    pub photon_number: Option<f64>,
    /// Photon numbers of every root found; the largest is used.
    pub roots: Vec<f64>,
    pub residual: Option<f64>,
    pub peaks: Vec<PeakRow>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SplitEntry {
    /// Spread of the subclasses, output units.
    pub width: f64,
    pub linewidth: Option<f64>,
    pub relative_change: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SplitStudy {
    pub n_spins: f64,
    pub eta_over_gamma: f64,
    pub parts: usize,
    pub linewidth: Option<f64>,
    pub entries: Vec<SplitEntry>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Fig2Report {
    pub config_hash: String,
    pub units: String,
    pub setup: Fig2Setup,
    pub spectra: Vec<Fig2Entry>,
    pub split: Option<SplitStudy>,
}

type Solved = std::result::Result<(SubEnsembleState, Vec<f64>, f64, SpectrumResult), String>;

fn solve(m: &SubEnsembleModel, guess: Option<&SubEnsembleState>, opts: &ScanOptions) -> Solved {
    let rep = steady_state_subensembles_with(m, guess, &SubSteadyOptions::default()).map_err(|e| e.to_string())?;
    let res = rep.state.response(m).and_then(|r| scan_spectrum(&r, None, opts)).map_err(|e| e.to_string())?;
    Ok((rep.state, rep.roots, rep.residual, res))
}

pub fn run_fig2(s: &Settings, out: &Path) -> Result<Fig2Report> {
    let setup = Fig2Setup::from_settings(s)?;
    let opts = ScanOptions::from_params(&setup.base(s)?);
    let models: Vec<SubEnsembleModel> =
        setup.eta_over_gamma.iter().map(|&e| setup.model(s, e, setup.n_spins, setup.layout)).collect::<Result<_>>()?;
    let solved: Vec<Solved> = models.par_iter().map(|m| solve(m, None, &opts)).collect();

    let mut spectra = Table::create(out, "fig2_spectra.csv", s, &["eta_over_gamma", "offset", "b_dag_b", "density", "normalized", "kappa_f"])?;
    let mut classes = Table::create(
        out,
        "fig2_classes.csv",
        s,
        &["eta_over_gamma", "class", "offset", "count", "inversion", "re_spin_photon", "im_spin_photon", "dicke_j_over_n", "dicke_m_over_n"],
    )?;
    let mut entries = Vec::new();
    let mut failed = 0;
    for ((&e, m), r) in setup.eta_over_gamma.iter().zip(&models).zip(&solved) {
        match r {
            Ok((st, roots, residual, res)) => {
                for (x, n) in res.samples.iter().zip(res.normalized()) {
                    spectra.row([num(e), num(s.out_freq(x.offset)), num(x.b_dag_b), num(x.density), num(n), num(s.out_freq(x.kappa_f))])?;
                }
                let dicke: Vec<DickeCoordinates> = dicke_per_class(st, m)?;
                for (a, c) in m.classes.iter().enumerate() {
                    classes.row([
                        num(e),
                        a.to_string(),
                        num(s.out_freq(c.omega - m.omega_c)),
                        num(c.count),
                        num(st.inversion[a]),
                        num(st.spin_photon[a].re),
                        num(st.spin_photon[a].im),
                        num(dicke[a].j_over_n),
                        num(dicke[a].m_over_n),
                    ])?;
                }
                entries.push(Fig2Entry {
                    eta_over_gamma: e,
                    status: "ok".into(),
                    photon_number: Some(st.photon_number),
                    roots: roots.clone(),
                    residual: Some(*residual),
                    peaks: peak_rows(s, res),
                });
            }
            Err(msg) => {
                failed += 1;
                entries.push(Fig2Entry { eta_over_gamma: e, status: format!("failed: {msg}"), photon_number: None, roots: vec![], residual: None, peaks: vec![] });
            }
        }
    }
    spectra.finish()?;
    classes.finish()?;

    let split = if s.bool_or("split_study", false)? { Some(split_study(s, &setup, &opts)?) } else { None };
    let report = Fig2Report { config_hash: s.hash.clone(), units: s.units().to_string(), setup, spectra: entries, split };
    write_json(out, "fig2_peaks.json", &report)?;
    check_failures(failed, solved.len())?;
    Ok(report)
}

/// Splits the resonant class of a grid that has one at ω_c into `split_parts`
/// subclasses over each width in `split_width` and compares the narrowest
/// linewidth with the unsplit model.
fn split_study(s: &Settings, setup: &Fig2Setup, opts: &ScanOptions) -> Result<SplitStudy> {
    let n = s.f64_or("split_n_spins", 8e13)?;
    let e = s.f64_or("split_eta_over_gamma", 1e3)?;
    let parts = s.usize_or("split_parts", 5)?;
    let widths = s.list("split_width")?.unwrap_or_else(|| vec![TWO_PI * 0.02, TWO_PI * 0.002]);
    let m0 = setup.model(s, e, n, GridLayout::IncludeCenter)?;
    let centre = m0
        .classes
        .iter()
        .position(|c| c.omega == m0.omega_c)
        .ok_or_else(|| CliError::Config("no class at the resonator frequency".into()))?;
    let narrowest = |r: &SpectrumResult| r.narrowest().map(|p| p.fwhm);
    let unsplit = solve(&m0, None, opts).ok();
    let w0 = unsplit.as_ref().and_then(|u| narrowest(&u.3));
    // split models continue from the unsplit fixed point
    let guess = unsplit.as_ref().map(|u| split_state(&u.0, centre, parts)).transpose()?;
    let models: Vec<SubEnsembleModel> = widths.iter().map(|&w| split_class(&m0, centre, parts, w)).collect::<nvmaser::Result<_>>()?;
    let found: Vec<Option<f64>> = models.par_iter().map(|m| solve(m, guess.as_ref(), opts).ok().and_then(|u| narrowest(&u.3))).collect();
    let entries = widths
        .iter()
        .zip(found)
        .map(|(&w, f)| SplitEntry {
            width: s.out_freq(w),
            linewidth: f.map(|x| s.out_freq(x)),
            relative_change: f.zip(w0).map(|(a, b)| (a - b).abs() / b),
        })
        .collect();
    Ok(SplitStudy { n_spins: n, eta_over_gamma: e, parts, linewidth: w0.map(|x| s.out_freq(x)), entries })
}
