//! Two-dimensional parameter grids. Each row of axis 2 is one continuation
//! run along axis 1, warm-starting every point from its neighbour; rows run
//! in parallel.

use std::collections::BTreeSet;
use std::path::Path;

use nvmaser::analytics::{classify_regime, dicke_numbers, masing_threshold, peak_offsets};
use nvmaser::meanfield::{steady_state, MeanFieldState};
use nvmaser::model::{derive_rates, SystemParams};
use nvmaser::spectrum::{scan_identical, ScanOptions};
use rayon::prelude::*;
use serde::Serialize;

use crate::output::{num, opt, write_json, Table};
use crate::settings::Settings;
use crate::{check_failures, CliError, Result};

pub const AXIS_NAMES: &[&str] =
    &["eta", "eta_over_gamma", "n_spins", "temperature", "detuning", "detuning_over_chi", "omega_s", "g", "gamma", "chi", "kappa_c"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Linear,
    Log,
}

#[derive(Debug, Clone, Serialize)]
pub struct Axis {
    pub name: String,
    pub scale: Scale,
    /// Bounds as written in the configuration.
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl Axis {
    /// `name scale min max points`, e.g. `eta_over_gamma log 1e-3 1e5 17`.
    pub fn parse(text: &str) -> Result<Axis> {
        let bad = |why: &str| CliError::Config(format!("axis `{text}`: {why}"));
        let f: Vec<&str> = text.split_whitespace().collect();
        if f.len() != 5 {
            return Err(bad("expected `name linear|log min max points`"));
        }
        let name = f[0].to_ascii_lowercase();
        if !AXIS_NAMES.contains(&name.as_str()) {
            return Err(bad(&format!("unknown parameter, expected one of {}", AXIS_NAMES.join(", "))));
        }
        let scale = match f[1] {
            "linear" | "lin" => Scale::Linear,
            "log" => Scale::Log,
            _ => return Err(bad("scale must be linear or log")),
        };
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(&format!("`{s}` is not a number")));
        let (min, max) = (num(f[2])?, num(f[3])?);
        let points: usize = f[4].parse().map_err(|_| bad("points must be an integer"))?;
        if points < 2 {
            return Err(bad("need at least 2 points"));
        }
        if !(min.is_finite() && max.is_finite()) || min == max {
            return Err(bad("bounds must be finite and distinct"));
        }
        if scale == Scale::Log && !(min > 0.0 && max > 0.0) {
            return Err(bad("log axes need positive bounds"));
        }
        Ok(Axis { name, scale, min, max, points })
    }

    pub fn values(&self) -> Vec<f64> {
        let n = self.points - 1;
        (0..self.points)
            .map(|k| {
                let u = k as f64 / n as f64;
                match self.scale {
                    Scale::Linear => self.min + u * (self.max - self.min),
                    Scale::Log => (self.min.ln() + u * (self.max.ln() - self.min.ln())).exp(),
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Output {
    PhotonNumber,
    Linewidth,
    Inversion,
    Dicke,
    Spectrum,
    Regime,
}

impl Output {
    fn parse(s: &str) -> Result<Output> {
        Ok(match s.trim() {
            "photon_number" => Output::PhotonNumber,
            "linewidth" => Output::Linewidth,
            "inversion" => Output::Inversion,
            "dicke" => Output::Dicke,
            "spectrum" => Output::Spectrum,
            "regime" => Output::Regime,
            other => return Err(CliError::Config(format!("unknown output `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSpec {
    pub axis1: Axis,
    pub axis2: Axis,
    pub outputs: BTreeSet<Output>,
    /// Repeat each row in descending order and flag disagreements.
    pub hysteresis: bool,
}

/// Reduced grids of the three parameter-plane figures.
pub fn template(name: &str) -> Result<(&'static str, &'static str, &'static [(&'static str, &'static str)])> {
    Ok(match name {
        "fig3" => ("eta_over_gamma log 1e-3 1e5 17", "n_spins log 1e11 1e17 13", &[("temperature", "0.025")]),
        "fig4" => ("eta_over_gamma log 1e-3 1e5 17", "temperature log 0.025 300 13", &[("n_spins", "4e13")]),
        "fig5" => ("eta_over_gamma log 1e-3 1e5 17", "detuning_over_chi linear 0 5 11", &[("temperature", "0.025"), ("n_spins", "4e13")]),
        other => return Err(CliError::Config(format!("unknown template `{other}` (fig3, fig4, fig5)"))),
    })
}

impl SweepSpec {
    /// Reads `axis1`, `axis2`, `outputs` and `hysteresis`; a `template` key
    /// supplies defaults for all of them and for its fixed parameters.
    pub fn from_settings(s: &mut Settings) -> Result<SweepSpec> {
        if let Some(name) = s.config.get("template").map(str::to_owned) {
            let (a1, a2, fixed) = template(&name)?;
            let mut cfg = s.config.clone();
            for (k, v) in fixed.iter().chain(&[("axis1", a1), ("axis2", a2)]) {
                if cfg.get(k).is_none() {
                    cfg.set(k, *v);
                }
            }
            *s = Settings::from_config(cfg);
        }
        let axis = |key: &str| -> Result<Axis> {
            let text = s.config.get(key).ok_or_else(|| CliError::Config(format!("missing `{key}`")))?;
            Axis::parse(text)
        };
        let (axis1, axis2) = (axis("axis1")?, axis("axis2")?);
        if axis1.name == axis2.name {
            return Err(CliError::Config("both axes vary the same parameter".into()));
        }
        let outputs = match s.config.get("outputs") {
            Some(list) => list.split(',').map(Output::parse).collect::<Result<_>>()?,
            None => [Output::PhotonNumber, Output::Linewidth, Output::Inversion, Output::Dicke, Output::Regime].into_iter().collect(),
        };
        let hysteresis = s.bool_or("hysteresis", true)?;
        Ok(SweepSpec { axis1, axis2, outputs, hysteresis })
    }
}

fn set_axis(s: &Settings, p: SystemParams, name: &str, v: f64) -> SystemParams {
    let v = s.config.to_internal(name, v);
    match name {
        "eta" => p.with_eta(v),
        "eta_over_gamma" => p.with_eta(v * p.gamma),
        "n_spins" => p.with_n_spins(v),
        "temperature" => p.with_temperature(v),
        "detuning" => p.with_detuning(v),
        "detuning_over_chi" => p.with_detuning(v * p.chi),
        "omega_s" => SystemParams { omega_s: v, ..p },
        "g" => SystemParams { g: v, ..p },
        "gamma" => SystemParams { gamma: v, ..p },
        "chi" => SystemParams { chi: v, ..p },
        "kappa_c" => SystemParams { kappa_c: v, ..p },
        _ => unreachable!("axis names are validated"),
    }
}

/// Ratio parameters are applied last so that they see the final γ and χ.
fn point(s: &Settings, base: SystemParams, spec: &SweepSpec, v1: f64, v2: f64) -> SystemParams {
    let mut axes = [(&spec.axis1.name, v1), (&spec.axis2.name, v2)];
    axes.sort_by_key(|(n, _)| n.contains("_over_"));
    axes.iter().fold(base, |p, (n, v)| set_axis(s, p, n, *v))
}

#[derive(Debug, Clone)]
struct Solved {
    params: SystemParams,
    state: std::result::Result<MeanFieldState, String>,
}

fn solve_sequence(params: &[SystemParams], order: impl Iterator<Item = usize>) -> Vec<Option<Solved>> {
    let mut out: Vec<Option<Solved>> = vec![None; params.len()];
    let mut guess: Option<MeanFieldState> = None;
    for i in order {
        let p = params[i];
        let st = steady_state(&p, guess.as_ref()).or_else(|_| steady_state(&p, None)).map_err(|e| e.to_string());
        if let Ok(s) = &st {
            guess = Some(*s);
        }
        out[i] = Some(Solved { params: p, state: st });
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepMeta {
    pub config_hash: String,
    pub units: String,
    pub spec: SweepSpec,
    pub points: usize,
    pub failed: usize,
    /// (axis1, axis2) values where ascending and descending continuation
    /// disagree by more than 1% in photon number.
    pub hysteresis_points: Vec<(f64, f64)>,
}

pub fn run_sweep(s: &Settings, spec: &SweepSpec, out: &Path) -> Result<SweepMeta> {
    let base = s.params()?;
    let v1 = spec.axis1.values();
    let v2 = spec.axis2.values();
    for &a in &v1 {
        for &b in &v2 {
            point(s, base, spec, a, b).validate()?;
        }
    }
    let want = |o: Output| spec.outputs.contains(&o);
    let scan = want(Output::Linewidth) || want(Output::Spectrum);

    let rows: Vec<Vec<Vec<String>>> = v2
        .par_iter()
        .map(|&b| {
            let params: Vec<SystemParams> = v1.iter().map(|&a| point(s, base, spec, a, b)).collect();
            let up = solve_sequence(&params, 0..params.len());
            let down = if spec.hysteresis { solve_sequence(&params, (0..params.len()).rev()) } else { vec![None; params.len()] };
            up.into_iter()
                .zip(down)
                .zip(&v1)
                .map(|((u, d), &a)| row_fields(s, spec, scan, a, b, u.expect("every point solved"), d))
                .collect()
        })
        .collect();

    let mut cols: Vec<String> = vec![spec.axis1.name.clone(), spec.axis2.name.clone(), "status".into(), "error".into()];
    let mut extend = |c: &[&str]| cols.extend(c.iter().map(|x| x.to_string()));
    if want(Output::PhotonNumber) {
        extend(&["photon_number"]);
        if spec.hysteresis {
            extend(&["photon_number_descending", "hysteresis"]);
        }
    }
    if want(Output::Inversion) {
        extend(&["inversion"]);
    }
    if want(Output::Dicke) {
        extend(&["dicke_j_over_n", "dicke_m_over_n"]);
    }
    if want(Output::Regime) {
        extend(&["regime"]);
    }
    if want(Output::Linewidth) {
        extend(&["linewidth"]);
    }
    if want(Output::Spectrum) {
        extend(&["peak_count", "peak_low", "peak_high"]);
    }
    extend(&["n_c_th", "threshold_over_gamma", "peak_re_plus", "peak_im_plus", "peak_re_minus", "peak_im_minus"]);
    let col_refs: Vec<&str> = cols.iter().map(String::as_str).collect();

    let flag_col = cols.iter().position(|c| c == "hysteresis");
    let mut table = Table::create(out, "sweep.csv", s, &col_refs)?;
    let mut failed = 0;
    let mut hysteresis_points = Vec::new();
    // rows are already in (axis2, axis1) order
    for (j, row) in rows.iter().enumerate() {
        for (i, fields) in row.iter().enumerate() {
            if fields[2] != "ok" {
                failed += 1;
            }
            if flag_col.is_some_and(|k| fields[k] == "true") {
                hysteresis_points.push((v1[i], v2[j]));
            }
            table.row(fields.iter().cloned())?;
        }
    }
    table.finish()?;
    let meta = SweepMeta {
        config_hash: s.hash.clone(),
        units: s.units().to_string(),
        spec: spec.clone(),
        points: v1.len() * v2.len(),
        failed,
        hysteresis_points,
    };
    write_json(out, "sweep_meta.json", &meta)?;
    check_failures(failed, meta.points)?;
    Ok(meta)
}

fn row_fields(s: &Settings, spec: &SweepSpec, scan: bool, a: f64, b: f64, up: Solved, down: Option<Solved>) -> Vec<String> {
    let want = |o: Output| spec.outputs.contains(&o);
    let p = up.params;
    let mut f = vec![num(a), num(b)];
    let (st, err) = match &up.state {
        Ok(st) => (Some(*st), String::new()),
        Err(e) => (None, e.clone()),
    };
    let spectrum = st.filter(|_| scan).map(|st| scan_identical(&p, &st, &ScanOptions::from_params(&p)).map_err(|e| e.to_string()));
    let err = match &spectrum {
        Some(Err(e)) if err.is_empty() => format!("spectrum: {e}"),
        _ => err,
    };
    f.push(if err.is_empty() { "ok".into() } else { "failed".into() });
    f.push(err);
    let field = |x: Option<f64>| opt(x);
    if want(Output::PhotonNumber) {
        f.push(field(st.map(|s| s.photon_number)));
        if spec.hysteresis {
            let dn = down.and_then(|d| d.state.ok()).map(|s| s.photon_number);
            f.push(field(dn));
            let flag = match (st, dn) {
                (Some(u), Some(d)) => (u.photon_number - d).abs() > 0.01 * u.photon_number.max(d).max(1e-300),
                _ => false,
            };
            f.push(flag.to_string());
        }
    }
    if want(Output::Inversion) {
        f.push(field(st.map(|s| s.inversion)));
    }
    if want(Output::Dicke) {
        let d = st.and_then(|st| dicke_numbers(st.inversion, st.spin_spin, p.n_spins).ok());
        f.push(field(d.map(|d| d.j_over_n)));
        f.push(field(d.map(|d| d.m_over_n)));
    }
    if want(Output::Regime) {
        let r = st.and_then(|st| classify_regime(&p, &st).ok());
        f.push(r.map(|r| serde_json::to_value(r).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default()).unwrap_or_default());
    }
    let res = spectrum.and_then(|r| r.ok());
    if want(Output::Linewidth) {
        f.push(field(res.as_ref().and_then(|r| r.narrowest()).map(|pk| s.out_freq(pk.fwhm))));
    }
    if want(Output::Spectrum) {
        f.push(res.as_ref().map(|r| r.peaks.len().to_string()).unwrap_or_default());
        f.push(field(res.as_ref().and_then(|r| r.peaks.first()).map(|pk| s.out_freq(pk.center))));
        f.push(field(res.as_ref().and_then(|r| r.peaks.last()).map(|pk| s.out_freq(pk.center))));
    }
    let rates = derive_rates(&p).ok();
    f.push(field(rates.map(|r| r.n_c_th)));
    f.push(field(masing_threshold(&p).ok().and_then(|t| t.rate()).map(|t| t / p.gamma)));
    let roots = st.and_then(|st| peak_offsets(&p, st.inversion).ok());
    for z in [roots.map(|r| r.0), roots.map(|r| r.1)] {
        f.push(field(z.map(|z| s.out_freq(z.re))));
        f.push(field(z.map(|z| s.out_freq(z.im))));
    }
    f
}
