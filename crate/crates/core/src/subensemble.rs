//! Inhomogeneous broadening through discrete frequency classes.
//!
//! Each class α holds N_α identical spins at ω_α. The moments are ⟨a†a⟩,
//! c_α = ⟨σ_α†a⟩, s_α = ⟨σ_α^z⟩ and the Hermitian matrix
//! P_αα' = ⟨σ_α†σ_α'⟩ of pair correlations between distinct spins (the
//! diagonal is the within-class correlation).

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::analytics::{dicke_numbers, DickeCoordinates};
use crate::error::{invalid, Error, Result};
use crate::meanfield::MeanFieldState;
use crate::model::{thermal_occupation, SystemParams};
use crate::newton::{self, NewtonOptions, NewtonProblem};
use crate::ode::{self, Method, OdeOptions, OdeReport, OdeSystem, Record};
use crate::spectrum::{ClassTerm, SubEnsembleResponse};

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpinClass {
    pub count: f64,
    pub omega: f64,
    pub g: f64,
    pub gamma: f64,
    pub chi: f64,
    pub eta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubEnsembleModel {
    pub omega_c: f64,
    pub kappa_c: f64,
    pub temperature: f64,
    pub filter_g: f64,
    pub filter_kappa: f64,
    pub classes: Vec<SpinClass>,
}

/// Per-class rates derived once from the model.
#[derive(Debug, Clone)]
struct ClassRates {
    n_c_th: f64,
    detuning: Vec<f64>,
    lambda: Vec<f64>,
    /// γ_α(2n_α^th + 1)
    gamma_th: Vec<f64>,
}

impl SubEnsembleModel {
    /// One class carrying every spin of `params`.
    pub fn single(params: &SystemParams) -> Self {
        let class = SpinClass {
            count: params.n_spins,
            omega: params.omega_s,
            g: params.g,
            gamma: params.gamma,
            chi: params.chi,
            eta: params.eta,
        };
        Self::from_classes(params, vec![class])
    }

    /// Resonator, bath and filter settings from `params`, spins from `classes`.
    pub fn from_classes(params: &SystemParams, classes: Vec<SpinClass>) -> Self {
        SubEnsembleModel {
            omega_c: params.omega_c,
            kappa_c: params.kappa_c,
            temperature: params.temperature,
            filter_g: params.filter_g,
            filter_kappa: params.filter_kappa,
            classes,
        }
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn total_spins(&self) -> f64 {
        self.classes.iter().map(|c| c.count).sum()
    }

    pub fn with_eta(mut self, eta: f64) -> Self {
        for c in &mut self.classes {
            c.eta = eta;
        }
        self
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(invalid("classes", "at least one class is required"));
        }
        for (name, v) in [("omega_c", self.omega_c), ("kappa_c", self.kappa_c), ("temperature", self.temperature)] {
            if !v.is_finite() || v < 0.0 {
                return Err(invalid(name, "must be finite and non-negative"));
            }
        }
        if self.omega_c <= 0.0 {
            return Err(invalid("omega_c", "must be positive"));
        }
        for (i, c) in self.classes.iter().enumerate() {
            if !(c.count > 0.0) || !c.count.is_finite() {
                return Err(invalid("classes", format!("class {i} has a non-positive spin count")));
            }
            for v in [c.omega, c.g, c.gamma, c.chi, c.eta] {
                if !v.is_finite() || v < 0.0 {
                    return Err(invalid("classes", format!("class {i} has a negative or non-finite rate")));
                }
            }
            if c.omega <= 0.0 {
                return Err(invalid("classes", format!("class {i} has a non-positive frequency")));
            }
            if i > 0 && !(c.omega > self.classes[i - 1].omega) {
                return Err(invalid("classes", "class frequencies must be strictly increasing"));
            }
        }
        Ok(())
    }

    fn rates(&self) -> Result<ClassRates> {
        self.validate()?;
        let n_c_th = thermal_occupation(self.omega_c, self.temperature)?;
        let mut detuning = Vec::with_capacity(self.len());
        let mut lambda = Vec::with_capacity(self.len());
        let mut gamma_th = Vec::with_capacity(self.len());
        for c in &self.classes {
            let nk = thermal_occupation(c.omega, self.temperature)?;
            let gt = c.gamma * (2.0 * nk + 1.0);
            detuning.push(c.omega - self.omega_c);
            lambda.push(0.5 * (gt + c.eta) + c.chi);
            gamma_th.push(gt);
        }
        Ok(ClassRates { n_c_th, detuning, lambda, gamma_th })
    }

    /// Class with spin count and rates of the identical-spin model, for
    /// comparing the two descriptions.
    pub fn class_params(&self, index: usize) -> SystemParams {
        let c = &self.classes[index];
        SystemParams {
            omega_c: self.omega_c,
            kappa_c: self.kappa_c,
            n_spins: c.count,
            omega_s: c.omega,
            g: c.g,
            gamma: c.gamma,
            chi: c.chi,
            eta: c.eta,
            temperature: self.temperature,
            filter_g: self.filter_g,
            filter_kappa: self.filter_kappa,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridLayout {
    /// M points from −span to +span.
    Symmetric,
    /// Spacing of the symmetric grid, shifted so that one class sits exactly
    /// at the center (for even M the grid then has one more point below).
    IncludeCenter,
}

/// Gaussian with FWHM `chi_inh` split into `n_classes` frequency classes on a
/// uniform grid spanning ±2.5σ. Counts follow the Gaussian weights, rounded
/// with the largest-remainder rule so they sum exactly to `n_total`; each
/// class gets dephasing χ = 2·chi_inh/n_classes. Pump, g and γ come from `base`.
pub fn discretize_gaussian(base: &SystemParams, n_total: f64, chi_inh: f64, n_classes: usize, center: f64) -> Result<SubEnsembleModel> {
    discretize_gaussian_with(base, n_total, chi_inh, n_classes, center, GridLayout::Symmetric, 2.5)
}

pub fn discretize_gaussian_with(
    base: &SystemParams,
    n_total: f64,
    chi_inh: f64,
    n_classes: usize,
    center: f64,
    layout: GridLayout,
    span_sigmas: f64,
) -> Result<SubEnsembleModel> {
    if n_classes == 0 {
        return Err(invalid("n_classes", "must be at least 1"));
    }
    if !(chi_inh > 0.0) {
        return Err(invalid("chi_inh", "must be positive"));
    }
    if !(span_sigmas > 0.0) {
        return Err(invalid("span_sigmas", "must be positive"));
    }
    if !(n_total >= n_classes as f64) || n_total.fract() != 0.0 {
        return Err(invalid("n_total", "must be a whole number no smaller than the class count"));
    }
    let m = n_classes;
    let sigma = chi_inh / (2.0 * (2.0 * std::f64::consts::LN_2).sqrt());
    let h = if m > 1 { 2.0 * span_sigmas * sigma / (m - 1) as f64 } else { 0.0 };
    let offsets: Vec<f64> = (0..m)
        .map(|j| match layout {
            GridLayout::Symmetric => (j as f64 - 0.5 * (m - 1) as f64) * h,
            GridLayout::IncludeCenter => (j as f64 - (m / 2) as f64) * h,
        })
        .collect();
    let weights: Vec<f64> = offsets.iter().map(|x| (-0.5 * (x / sigma).powi(2)).exp()).collect();
    let counts = largest_remainder(&weights, n_total);
    if counts.iter().any(|&c| c <= 0.0) {
        return Err(invalid("n_total", "too few spins to populate every class"));
    }
    let chi = 2.0 * chi_inh / m as f64;
    let classes = offsets
        .iter()
        .zip(&counts)
        .map(|(&x, &count)| SpinClass { count, omega: center + x, g: base.g, gamma: base.gamma, chi, eta: base.eta })
        .collect();
    let model = SubEnsembleModel::from_classes(base, classes);
    model.validate()?;
    Ok(model)
}

/// Whole-number apportionment of `total` in proportion to `weights`.
/// Ties in the fractional remainder go first to classes closer to the
/// middle of the list, then to lower indices.
pub fn largest_remainder(weights: &[f64], total: f64) -> Vec<f64> {
    let sum: f64 = weights.iter().sum();
    let quotas: Vec<f64> = weights.iter().map(|w| w / sum * total).collect();
    let mut counts: Vec<f64> = quotas.iter().map(|q| q.floor()).collect();
    let assigned: f64 = counts.iter().sum();
    let mut left = (total - assigned).round().max(0.0) as usize;
    let mid = 0.5 * (weights.len() as f64 - 1.0);
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - counts[a];
        let rb = quotas[b] - counts[b];
        rb.total_cmp(&ra)
            .then((a as f64 - mid).abs().total_cmp(&(b as f64 - mid).abs()))
            .then(a.cmp(&b))
    });
    // Equal quotas (mirror pairs of a symmetric grid) are awarded
    // together when possible so that symmetric weights give symmetric counts.
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for &i in &order {
        match groups.last_mut() {
            Some(gr) if quotas[gr[0]] == quotas[i] => gr.push(i),
            _ => groups.push(vec![i]),
        }
    }
    let mut awarded = vec![false; weights.len()];
    let mut award = |gr: &Vec<usize>, left: &mut usize, counts: &mut Vec<f64>| {
        if gr.len() <= *left && !awarded[gr[0]] {
            for &i in gr {
                counts[i] += 1.0;
                awarded[i] = true;
            }
            *left -= gr.len();
        }
    };
    // An odd leftover goes to the best unpaired class first; pairs are then
    // handed out, and remaining singles last.
    if left % 2 == 1 {
        if let Some(gr) = groups.iter().find(|g| g.len() == 1) {
            award(gr, &mut left, &mut counts);
        }
    }
    for gr in groups.iter().filter(|g| g.len() > 1) {
        award(gr, &mut left, &mut counts);
    }
    for gr in groups.iter().filter(|g| g.len() == 1) {
        award(gr, &mut left, &mut counts);
    }
    for &i in &order {
        if left == 0 {
            break;
        }
        if !awarded[i] {
            counts[i] += 1.0;
            left -= 1;
        }
    }
    counts
}

/// Replaces class `index` by `parts` classes spread uniformly over `width`
/// (rad/s) around its frequency, sharing its spins as evenly as possible.
pub fn split_class(model: &SubEnsembleModel, index: usize, parts: usize, width: f64) -> Result<SubEnsembleModel> {
    if index >= model.len() {
        return Err(invalid("index", "no such class"));
    }
    if parts == 0 {
        return Err(invalid("parts", "must be at least 1"));
    }
    if parts > 1 && !(width > 0.0) {
        return Err(invalid("width", "must be positive when splitting"));
    }
    let base = model.classes[index];
    let counts = largest_remainder(&vec![1.0; parts], base.count.round());
    let mut classes = Vec::with_capacity(model.len() + parts - 1);
    classes.extend_from_slice(&model.classes[..index]);
    for (k, &count) in counts.iter().enumerate() {
        let x = if parts > 1 { -0.5 * width + width * k as f64 / (parts - 1) as f64 } else { 0.0 };
        classes.push(SpinClass { count, omega: base.omega + x, ..base });
    }
    classes.extend_from_slice(&model.classes[index + 1..]);
    let out = SubEnsembleModel { classes, ..model.clone() };
    out.validate()?;
    Ok(out)
}

/// State matching [`split_class`]: every subclass starts with the moments of
/// the class it came from. Useful as a warm start for the split model.
pub fn split_state(state: &SubEnsembleState, index: usize, parts: usize) -> Result<SubEnsembleState> {
    if index >= state.len() || parts == 0 {
        return Err(invalid("index/parts", "no such class or zero parts"));
    }
    let src: Vec<usize> = (0..state.len()).flat_map(|a| if a == index { vec![a; parts] } else { vec![a] }).collect();
    Ok(SubEnsembleState {
        photon_number: state.photon_number,
        spin_photon: src.iter().map(|&a| state.spin_photon[a]).collect(),
        inversion: src.iter().map(|&a| state.inversion[a]).collect(),
        spin_spin: DMatrix::from_fn(src.len(), src.len(), |i, j| state.spin_spin[(src[i], src[j])]),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubEnsembleState {
    pub photon_number: f64,
    pub spin_photon: Vec<Complex64>,
    pub inversion: Vec<f64>,
    /// Row α, column α' holds ⟨σ_α†σ_α'⟩.
    #[serde(serialize_with = "rows")]
    pub spin_spin: DMatrix<Complex64>,
}

fn rows<S: serde::Serializer>(m: &DMatrix<Complex64>, ser: S) -> std::result::Result<S::Ok, S::Error> {
    let v: Vec<Vec<Complex64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
    v.serialize(ser)
}

impl SubEnsembleState {
    /// Thermal resonator, uncorrelated spins at their pumped inversion.
    pub fn uncoupled(model: &SubEnsembleModel) -> Result<Self> {
        let r = model.rates()?;
        let m = model.len();
        let inversion = model
            .classes
            .iter()
            .zip(&r.gamma_th)
            .map(|(c, gt)| if gt + c.eta > 0.0 { (c.eta - c.gamma) / (gt + c.eta) } else { -1.0 })
            .collect();
        Ok(SubEnsembleState {
            photon_number: r.n_c_th,
            spin_photon: vec![Complex64::new(0.0, 0.0); m],
            inversion,
            spin_spin: DMatrix::zeros(m, m),
        })
    }

    pub fn ground(m: usize) -> Self {
        SubEnsembleState {
            photon_number: 0.0,
            spin_photon: vec![Complex64::new(0.0, 0.0); m],
            inversion: vec![-1.0; m],
            spin_spin: DMatrix::zeros(m, m),
        }
    }

    pub fn len(&self) -> usize {
        self.inversion.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inversion.is_empty()
    }

    /// Real packing: n, (Re c, Im c) per class, s per class, the real
    /// diagonal of P, then (Re, Im) of the strict upper triangle row by row.
    pub fn to_vec(&self) -> Vec<f64> {
        let m = self.len();
        let mut y = Vec::with_capacity(packed_dim(m));
        y.push(self.photon_number);
        for c in &self.spin_photon {
            y.push(c.re);
            y.push(c.im);
        }
        y.extend_from_slice(&self.inversion);
        for a in 0..m {
            y.push(self.spin_spin[(a, a)].re);
        }
        for a in 0..m {
            for b in a + 1..m {
                y.push(self.spin_spin[(a, b)].re);
                y.push(self.spin_spin[(a, b)].im);
            }
        }
        y
    }

    pub fn from_slice(y: &[f64], m: usize) -> Self {
        let spin_photon = (0..m).map(|a| Complex64::new(y[1 + 2 * a], y[2 + 2 * a])).collect();
        let inversion = y[1 + 2 * m..1 + 3 * m].to_vec();
        let mut p = DMatrix::zeros(m, m);
        let d0 = 1 + 3 * m;
        for a in 0..m {
            p[(a, a)] = Complex64::new(y[d0 + a], 0.0);
        }
        let mut k = d0 + m;
        for a in 0..m {
            for b in a + 1..m {
                let v = Complex64::new(y[k], y[k + 1]);
                p[(a, b)] = v;
                p[(b, a)] = v.conj();
                k += 2;
            }
        }
        SubEnsembleState { photon_number: y[0], spin_photon, inversion, spin_spin: p }
    }

    /// Largest |P_αα' − conj(P_α'α)|.
    pub fn hermiticity_error(&self) -> f64 {
        let m = self.len();
        let mut e: f64 = 0.0;
        for a in 0..m {
            for b in 0..m {
                e = e.max((self.spin_spin[(a, b)] - self.spin_spin[(b, a)].conj()).norm());
            }
        }
        e
    }

    pub fn check_invariants(&self, slack: f64) -> Result<()> {
        if !(self.photon_number >= -slack * (1.0 + self.photon_number.abs())) {
            return Err(Error::Invariant(format!("negative photon number {}", self.photon_number)));
        }
        if let Some(s) = self.inversion.iter().find(|s| !(s.abs() <= 1.0 + slack)) {
            return Err(Error::Invariant(format!("inversion {s} outside [-1, 1]")));
        }
        let h = self.hermiticity_error();
        if !(h <= slack) {
            return Err(Error::Invariant(format!("pair-correlation matrix not Hermitian ({h:e})")));
        }
        Ok(())
    }

    /// Moments of class `index` in the identical-spin layout.
    pub fn class_view(&self, index: usize) -> MeanFieldState {
        MeanFieldState {
            photon_number: self.photon_number,
            spin_photon: self.spin_photon[index],
            inversion: self.inversion[index],
            spin_spin: self.spin_spin[(index, index)],
        }
    }

    /// Closed-form filter input for this state.
    pub fn response(&self, model: &SubEnsembleModel) -> Result<SubEnsembleResponse> {
        let r = model.rates()?;
        let classes = model
            .classes
            .iter()
            .enumerate()
            .map(|(a, c)| ClassTerm {
                count: c.count,
                g: c.g,
                detuning: r.detuning[a],
                lambda_s: r.lambda[a],
                spin_photon: self.spin_photon[a],
                inversion: self.inversion[a],
            })
            .collect();
        Ok(SubEnsembleResponse { omega_c: model.omega_c, kappa_c: model.kappa_c, photon_number: self.photon_number, classes })
    }
}

pub fn packed_dim(m: usize) -> usize {
    1 + 3 * m + m * m
}

fn derivatives(model: &SubEnsembleModel, r: &ClassRates, st: &SubEnsembleState) -> SubEnsembleState {
    let m = model.len();
    let kappa = model.kappa_c;
    let n = st.photon_number;
    let p = &st.spin_spin;
    let mut dn = -kappa * n + kappa * r.n_c_th;
    let mut dc = vec![Complex64::new(0.0, 0.0); m];
    let mut ds = vec![0.0; m];
    for (a, cl) in model.classes.iter().enumerate() {
        let c = st.spin_photon[a];
        let s = st.inversion[a];
        let g = cl.g;
        dn -= 2.0 * cl.count * g * c.im;
        let mut sum = Complex64::new(0.0, 0.0);
        for (b, cb) in model.classes.iter().enumerate() {
            sum += cb.count * cb.g * p[(a, b)];
        }
        let gamma_a = r.lambda[a] + 0.5 * kappa;
        dc[a] = Complex64::new(-gamma_a, r.detuning[a]) * c - I * g * n * s - I * (0.5 * g) * (s + 1.0) + I * g * p[(a, a)] - I * sum;
        ds[a] = 4.0 * g * c.im - r.gamma_th[a] * s - cl.gamma - cl.eta * (s - 1.0);
    }
    let mut dp = DMatrix::zeros(m, m);
    for a in 0..m {
        for b in a..m {
            let w = Complex64::new(r.detuning[a] - r.detuning[b], r.lambda[a] + r.lambda[b]);
            let forcing = st.spin_photon[a] * model.classes[b].g * st.inversion[b]
                - model.classes[a].g * st.inversion[a] * st.spin_photon[b].conj();
            let v = I * w * p[(a, b)] + I * forcing;
            dp[(a, b)] = v;
            dp[(b, a)] = v.conj();
        }
    }
    SubEnsembleState { photon_number: dn, spin_photon: dc, inversion: ds, spin_spin: dp }
}

/// Time derivative of every moment.
pub fn rhs_subensembles(state: &SubEnsembleState, model: &SubEnsembleModel) -> Result<SubEnsembleState> {
    let r = model.rates()?;
    if state.len() != model.len() {
        return Err(invalid("state", "class count differs from the model"));
    }
    Ok(derivatives(model, &r, state))
}

/// Largest |dX/dt| over the sum of the magnitudes of the terms producing it.
pub fn scaled_residual(state: &SubEnsembleState, model: &SubEnsembleModel) -> Result<f64> {
    let r = model.rates()?;
    let d = derivatives(model, &r, state);
    let m = model.len();
    let kappa = model.kappa_c;
    let n = state.photon_number;
    let p = &state.spin_spin;
    let mut worst: f64 = 0.0;
    let mut ratio = |v: f64, scale: f64| {
        let q = if scale > 0.0 { v / scale } else { v };
        worst = worst.max(q);
    };
    let photon_scale = kappa * (n.abs() + r.n_c_th)
        + model.classes.iter().zip(&state.spin_photon).map(|(c, sp)| 2.0 * c.count * c.g * sp.im.abs()).sum::<f64>();
    ratio(d.photon_number.abs(), photon_scale);
    for (a, cl) in model.classes.iter().enumerate() {
        let c = state.spin_photon[a];
        let s = state.inversion[a];
        let g = cl.g;
        let cross: f64 = model.classes.iter().enumerate().map(|(b, cb)| cb.count * cb.g * p[(a, b)].norm()).sum();
        let cs = (r.lambda[a] + 0.5 * kappa + r.detuning[a].abs()) * c.norm()
            + g * (n * s).abs()
            + 0.5 * g * (s + 1.0).abs()
            + g * p[(a, a)].norm()
            + cross;
        ratio(d.spin_photon[a].norm(), cs);
        let ss = 4.0 * g * c.im.abs() + r.gamma_th[a] * s.abs() + cl.gamma + cl.eta * (s - 1.0).abs();
        ratio(d.inversion[a].abs(), ss);
    }
    for a in 0..m {
        for b in a..m {
            let w = Complex64::new(r.detuning[a] - r.detuning[b], r.lambda[a] + r.lambda[b]);
            let fs = w.norm() * p[(a, b)].norm()
                + model.classes[b].g * (state.spin_photon[a] * state.inversion[b]).norm()
                + model.classes[a].g * (state.spin_photon[b] * state.inversion[a]).norm();
            ratio(d.spin_spin[(a, b)].norm(), fs);
        }
    }
    Ok(worst)
}

pub struct SubEnsembleSystem {
    model: SubEnsembleModel,
    rates: ClassRates,
}

impl SubEnsembleSystem {
    pub fn new(model: &SubEnsembleModel) -> Result<Self> {
        Ok(SubEnsembleSystem { rates: model.rates()?, model: model.clone() })
    }
}

impl OdeSystem for SubEnsembleSystem {
    fn dim(&self) -> usize {
        packed_dim(self.model.len())
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        let st = SubEnsembleState::from_slice(y, self.model.len());
        let d = derivatives(&self.model, &self.rates, &st).to_vec();
        dy.copy_from_slice(&d);
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SubTrajectory {
    pub t: Vec<f64>,
    pub states: Vec<SubEnsembleState>,
    pub report: OdeReport,
}

impl SubTrajectory {
    pub fn last(&self) -> &SubEnsembleState {
        self.states.last().expect("trajectory holds the initial state")
    }
}

pub fn evolve_subensembles(model: &SubEnsembleModel, initial: &SubEnsembleState, t_end: f64, tol: f64) -> Result<SubTrajectory> {
    evolve_subensembles_with(model, initial, t_end, tol, Record::Steps)
}

pub fn evolve_subensembles_with(
    model: &SubEnsembleModel,
    initial: &SubEnsembleState,
    t_end: f64,
    tol: f64,
    record: Record,
) -> Result<SubTrajectory> {
    if !(tol > 0.0 && tol <= 1e-2) {
        return Err(invalid("tol", "must lie in (0, 1e-2]"));
    }
    if !(t_end > 0.0) {
        return Err(invalid("t_end", "must be positive"));
    }
    if initial.len() != model.len() {
        return Err(invalid("initial", "class count differs from the model"));
    }
    let sys = SubEnsembleSystem::new(model)?;
    // Dense Jacobians stop paying off once the moment set grows past a few
    // hundred reals.
    let method = if packed_dim(model.len()) > 500 { Method::Dopri5 } else { Method::Rosenbrock23 };
    let mut o = OdeOptions::new(method, tol).atol(1e-14).record(record);
    o.max_steps = 5_000_000;
    let sol = ode::integrate(&sys, 0.0, &initial.to_vec(), t_end, &o)?;
    let m = model.len();
    let states = sol.y.iter().map(|y| SubEnsembleState::from_slice(y, m)).collect();
    Ok(SubTrajectory { t: sol.t, states, report: sol.report })
}

/// Steady-state equations in the unknowns z = (ln n, Re u_α, Im u_α) with
/// u_α = c_α / n. Inversions and pair correlations are eliminated exactly.
struct Reduced<'a> {
    model: &'a SubEnsembleModel,
    rates: &'a ClassRates,
}

struct Eliminated {
    n: f64,
    u: Vec<Complex64>,
    s: Vec<f64>,
    /// P / n
    q: DMatrix<Complex64>,
}

impl Reduced<'_> {
    fn eliminate(&self, z: &[f64]) -> Eliminated {
        let m = self.model.len();
        let n = z[0].exp();
        let u: Vec<Complex64> = (0..m).map(|a| Complex64::new(z[1 + a], z[1 + m + a])).collect();
        let s: Vec<f64> = self
            .model
            .classes
            .iter()
            .enumerate()
            .map(|(a, c)| (c.eta - c.gamma + 4.0 * c.g * n * u[a].im) / (self.rates.gamma_th[a] + c.eta))
            .collect();
        let mut q = DMatrix::zeros(m, m);
        for a in 0..m {
            for b in a..m {
                let (ga, gb) = (self.model.classes[a].g, self.model.classes[b].g);
                let w = Complex64::new(self.rates.detuning[a] - self.rates.detuning[b], self.rates.lambda[a] + self.rates.lambda[b]);
                let v = (ga * s[a] * u[b].conj() - gb * s[b] * u[a]) / w;
                q[(a, b)] = v;
                q[(b, a)] = v.conj();
            }
        }
        Eliminated { n, u, s, q }
    }

    fn state(&self, z: &[f64]) -> SubEnsembleState {
        let e = self.eliminate(z);
        let mut p = e.q.map(|v| v * e.n);
        for a in 0..self.model.len() {
            p[(a, a)] = Complex64::new(p[(a, a)].re, 0.0);
        }
        SubEnsembleState { photon_number: e.n, spin_photon: e.u.iter().map(|u| u * e.n).collect(), inversion: e.s, spin_spin: p }
    }

    /// Residual components with fixed row weights; returns the largest
    /// component relative to the size of the terms producing it.
    fn evaluate(&self, z: &[f64], f: &mut [f64]) -> f64 {
        let m = self.model.len();
        let e = self.eliminate(z);
        let kappa = self.model.kappa_c;
        let mut photon = self.rates.n_c_th / e.n - 1.0;
        let mut photon_scale = self.rates.n_c_th / e.n + 1.0;
        for (a, c) in self.model.classes.iter().enumerate() {
            photon -= 2.0 / kappa * c.count * c.g * e.u[a].im;
            photon_scale += 2.0 / kappa * (c.count * c.g * e.u[a].im).abs();
        }
        f[0] = photon;
        let mut worst = photon.abs() / photon_scale;
        for (a, c) in self.model.classes.iter().enumerate() {
            let gamma_a = self.rates.lambda[a] + 0.5 * kappa;
            let mut sum = Complex64::new(0.0, 0.0);
            let mut sum_scale = 0.0;
            for (b, cb) in self.model.classes.iter().enumerate() {
                let t = cb.count * cb.g * e.q[(a, b)];
                sum += t;
                sum_scale += t.norm();
            }
            let v = Complex64::new(-gamma_a, self.rates.detuning[a]) * e.u[a] - I * c.g * e.s[a] - I * (0.5 * c.g) * (e.s[a] + 1.0) / e.n
                + I * c.g * e.q[(a, a)]
                - I * sum;
            let scale = (gamma_a + self.rates.detuning[a].abs()) * e.u[a].norm()
                + c.g * e.s[a].abs()
                + 0.5 * c.g * (e.s[a] + 1.0).abs() / e.n
                + c.g * e.q[(a, a)].norm()
                + sum_scale;
            worst = worst.max(if scale > 0.0 { v.norm() / scale } else { v.norm() });
            let v = v / (gamma_a + self.rates.detuning[a].abs());
            f[1 + a] = v.re;
            f[1 + m + a] = v.im;
        }
        worst
    }
}

impl NewtonProblem for Reduced<'_> {
    fn dim(&self) -> usize {
        1 + 2 * self.model.len()
    }

    fn residual(&self, z: &[f64], f: &mut [f64]) {
        self.evaluate(z, f);
    }

    fn measure(&self, z: &[f64], _f: &[f64]) -> f64 {
        let mut tmp = vec![0.0; self.dim()];
        self.evaluate(z, &mut tmp)
    }

    fn feasible(&self, z: &[f64]) -> bool {
        z.iter().all(|v| v.is_finite()) && self.eliminate(z).s.iter().all(|s| s.abs() <= 1.0 + 1e-12)
    }

    fn fd_step(&self, z: &[f64], j: usize) -> f64 {
        if j == 0 {
            1e-7
        } else {
            f64::EPSILON.sqrt() * z[j].abs().max(1e-12)
        }
    }
}

#[derive(Debug, Clone)]
pub struct SubSteadyOptions {
    pub tol: f64,
    pub max_newton: usize,
    /// Photon numbers used to seed the search.
    pub seed_photons: Vec<f64>,
    /// Number of logarithmic pump steps tried when no seed converges directly.
    pub continuation_steps: usize,
}

impl Default for SubSteadyOptions {
    fn default() -> Self {
        SubSteadyOptions {
            tol: 1e-9,
            max_newton: 200,
            seed_photons: (0..=14).step_by(2).map(|k| 10f64.powi(k)).collect(),
            continuation_steps: 24,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SubSteadyReport {
    pub state: SubEnsembleState,
    pub residual: f64,
    /// Photon numbers of every distinct physical root found.
    pub roots: Vec<f64>,
    /// One state per entry of `roots`.
    #[serde(skip)]
    pub root_states: Vec<SubEnsembleState>,
    /// Pump rate at which continuation stopped, when it was needed.
    pub continuation_eta: Option<f64>,
}

fn seed(model: &SubEnsembleModel, r: &ClassRates, n: f64) -> Vec<f64> {
    let m = model.len();
    let mut z = vec![0.0; 1 + 2 * m];
    z[0] = n.ln();
    for (a, c) in model.classes.iter().enumerate() {
        let gamma_a = r.lambda[a] + 0.5 * model.kappa_c;
        let k = 2.0 * c.g * c.g * gamma_a / (r.detuning[a].powi(2) + gamma_a * gamma_a);
        let s = (c.eta - c.gamma) / (2.0 * k * n + r.gamma_th[a] + c.eta);
        let u = c.g * s / Complex64::new(r.detuning[a], gamma_a);
        z[1 + a] = u.re;
        z[1 + m + a] = u.im;
    }
    z
}

fn z_from_state(st: &SubEnsembleState) -> Vec<f64> {
    let m = st.len();
    let mut z = vec![0.0; 1 + 2 * m];
    z[0] = st.photon_number.max(1e-300).ln();
    for a in 0..m {
        let u = st.spin_photon[a] / st.photon_number.max(1e-300);
        z[1 + a] = u.re;
        z[1 + m + a] = u.im;
    }
    z
}

pub fn steady_state_subensembles(model: &SubEnsembleModel) -> Result<SubEnsembleState> {
    steady_state_subensembles_with(model, None, &SubSteadyOptions::default()).map(|r| r.state)
}

/// Self-consistent steady state. Seeds are built from the rate-equation
/// approximation at several photon numbers (plus `guess`), each refined by
/// damped Newton; among the physical roots the one with the largest photon
/// number is returned. If none converges, the pump is ramped up from a
/// fraction of its value with warm starts.
pub fn steady_state_subensembles_with(
    model: &SubEnsembleModel,
    guess: Option<&SubEnsembleState>,
    opts: &SubSteadyOptions,
) -> Result<SubSteadyReport> {
    let r = model.rates()?;
    if model.classes.iter().all(|c| c.g == 0.0) {
        let state = SubEnsembleState::uncoupled(model)?;
        let residual = scaled_residual(&state, model)?;
        return Ok(SubSteadyReport { state, residual, roots: vec![], root_states: vec![], continuation_eta: None });
    }
    if !(model.kappa_c > 0.0) || r.lambda.iter().any(|l| !(*l > 0.0)) {
        return Err(invalid("lambda/kappa_c", "a coupled steady state needs non-zero spin dephasing and resonator loss"));
    }
    let mut seeds: Vec<Vec<f64>> = Vec::new();
    if let Some(g0) = guess {
        if g0.len() == model.len() && g0.photon_number > 0.0 {
            seeds.push(z_from_state(g0));
        }
    }
    seeds.extend(opts.seed_photons.iter().map(|&n| seed(model, &r, n)));
    let found = solve_from_seeds(model, &r, &seeds, opts);
    if let Some(best) = pick(&found, guess) {
        let root_states = distinct_roots(&found);
        let roots = root_states.iter().map(|s| s.photon_number).collect();
        return Ok(SubSteadyReport { state: best.0.clone(), residual: best.1, roots, root_states, continuation_eta: None });
    }

    // Continuation in the pump rate.
    let target: Vec<f64> = model.classes.iter().map(|c| c.eta).collect();
    let steps = opts.continuation_steps.max(1);
    let mut z: Option<Vec<f64>> = None;
    let mut reached = None;
    for k in 0..=steps {
        let frac = 10f64.powf(-3.0 * (steps - k) as f64 / steps as f64);
        let mut sub = model.clone();
        for (c, t) in sub.classes.iter_mut().zip(&target) {
            c.eta = t * frac;
        }
        let sr = sub.rates()?;
        let mut local: Vec<Vec<f64>> = Vec::new();
        if let Some(prev) = &z {
            local.push(prev.clone());
        }
        local.extend(opts.seed_photons.iter().map(|&n| seed(&sub, &sr, n)));
        let found = solve_from_seeds(&sub, &sr, &local, opts);
        match pick(&found, None) {
            Some((st, _)) => {
                z = Some(z_from_state(st));
                reached = Some(frac);
            }
            None => break,
        }
    }
    if reached == Some(1.0) {
        if let Some(zz) = z {
            let prob = Reduced { model, rates: &r };
            let st = prob.state(&zz);
            let residual = scaled_residual(&st, model)?;
            return Ok(SubSteadyReport {
                roots: vec![st.photon_number],
                root_states: vec![st.clone()],
                state: st,
                residual,
                continuation_eta: Some(target[0]),
            });
        }
    }
    let eta_reached = reached.map(|f| f * target[0]).unwrap_or(0.0);
    Err(Error::NoConvergence {
        residual: f64::NAN,
        detail: format!("pump continuation stopped at eta = {eta_reached:e} of {:e}", target[0]),
    })
}

fn solve_from_seeds(model: &SubEnsembleModel, r: &ClassRates, seeds: &[Vec<f64>], opts: &SubSteadyOptions) -> Vec<(SubEnsembleState, f64)> {
    let prob = Reduced { model, rates: r };
    let nopts = NewtonOptions { max_iter: opts.max_newton, tol: opts.tol * 1e-3, min_damping: 1.0 / 4096.0 };
    let mut out = Vec::new();
    for z0 in seeds {
        if !prob.feasible(z0) {
            continue;
        }
        let res = newton::solve(&prob, z0, &nopts);
        let st = prob.state(&res.x);
        let Ok(resid) = scaled_residual(&st, model) else { continue };
        if resid <= opts.tol && st.check_invariants(1e-9).is_ok() {
            out.push((st, resid));
        }
    }
    out
}

fn pick<'a>(found: &'a [(SubEnsembleState, f64)], guess: Option<&SubEnsembleState>) -> Option<&'a (SubEnsembleState, f64)> {
    match guess {
        Some(g0) if g0.photon_number > 0.0 => found.iter().min_by(|a, b| {
            let da = (a.0.photon_number / g0.photon_number).ln().abs();
            let db = (b.0.photon_number / g0.photon_number).ln().abs();
            da.total_cmp(&db)
        }),
        _ => found.iter().max_by(|a, b| a.0.photon_number.total_cmp(&b.0.photon_number)),
    }
}

fn distinct_roots(found: &[(SubEnsembleState, f64)]) -> Vec<SubEnsembleState> {
    let mut states: Vec<SubEnsembleState> = found.iter().map(|f| f.0.clone()).collect();
    states.sort_by(|a, b| a.photon_number.total_cmp(&b.photon_number));
    states.dedup_by(|a, b| (a.photon_number - b.photon_number).abs() <= 1e-6 * b.photon_number.abs());
    states
}

/// Largest real part among the eigenvalues of the linearized moment
/// equations at `state`. Negative means linearly stable. The right-hand side
/// is quadratic in the moments, so central differences give the Jacobian
/// up to rounding.
pub fn stability_exponent(state: &SubEnsembleState, model: &SubEnsembleModel) -> Result<f64> {
    if state.len() != model.len() {
        return Err(invalid("state", "class count differs from the model"));
    }
    let r = model.rates()?;
    let m = model.len();
    let y = state.to_vec();
    let d = y.len();
    let typical = y.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-30);
    let mut jac = DMatrix::<f64>::zeros(d, d);
    let mut yp = y.clone();
    for j in 0..d {
        let h = 1e-3 * y[j].abs().max(1e-9 * typical);
        yp[j] = y[j] + h;
        let fp = derivatives(model, &r, &SubEnsembleState::from_slice(&yp, m)).to_vec();
        yp[j] = y[j] - h;
        let fm = derivatives(model, &r, &SubEnsembleState::from_slice(&yp, m)).to_vec();
        yp[j] = y[j];
        for i in 0..d {
            jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    Ok(jac.complex_eigenvalues().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max))
}

/// (J_α, M_α) for every class, from its inversion and within-class correlation.
pub fn dicke_per_class(state: &SubEnsembleState, model: &SubEnsembleModel) -> Result<Vec<DickeCoordinates>> {
    if state.len() != model.len() {
        return Err(invalid("state", "class count differs from the model"));
    }
    model
        .classes
        .iter()
        .enumerate()
        .map(|(a, c)| dicke_numbers(state.inversion[a], state.spin_spin[(a, a)], c.count))
        .collect()
}

pub const CLASS_CSV_COLUMNS: [&str; 8] = ["class", "count", "offset", "re_c", "im_c", "sigma_z", "dicke_j", "dicke_m"];
