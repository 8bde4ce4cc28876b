//! Emission spectra from a weakly coupled filter resonator.
//!
//! The steady filter occupation ⟨b†b⟩ is algebraic in the filter frequency,
//! so spectra are sampled directly from the closed form. All positions are
//! offsets δ = ω_f − ω_c; the absolute carrier (~1e10 rad/s) would swallow
//! sub-millihertz structure in double precision.
//!
//! Raw ⟨b†b⟩ depends on the filter coupling G and linewidth κ_f, which the
//! scanner adapts per peak. Each sample therefore also carries the
//! filter-independent density ⟨b†b⟩·κ_f/(2G²) → −Im[X/Y], which is what
//! peak finding and normalization use.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::meanfield::MeanFieldState;
use crate::model::{derive_rates, SystemParams};
use crate::subensemble::{SubEnsembleModel, SubEnsembleState};

pub trait FilterResponse {
    fn omega_c(&self) -> f64;

    /// Numerator X and denominator Y of ⟨a†b⟩/G at complex offset `z`.
    fn xy(&self, z: Complex64, kappa_f: f64) -> (Complex64, Complex64);

    /// dY/dz.
    fn dy_dz(&self, z: Complex64, kappa_f: f64) -> Complex64;

    /// Points from which the zeros of Y are searched.
    fn pole_seeds(&self, kappa_f: f64) -> Vec<Complex64>;

    /// Offset interval containing every spectral feature.
    fn default_window(&self) -> (f64, f64);
}

fn photon_number_from_xy(x: Complex64, y: Complex64, g_f: f64, kappa_f: f64) -> Result<f64> {
    let g2 = 2.0 * g_f * g_f;
    let inv = y.inv();
    let back = g2 * inv.im;
    let denom = back - kappa_f;
    if !denom.is_finite() || denom.abs() <= 1e3 * f64::EPSILON * (back.abs() + kappa_f) || !inv.is_finite() {
        return Err(Error::NoConvergence { residual: f64::NAN, detail: "filter denominator vanishes; resolution failure".into() });
    }
    Ok(g2 * (x * inv).im / denom)
}

/// Filter occupation at offset `delta` for filter coupling `g_f` and linewidth `kappa_f`.
pub fn photon_number_at<R: FilterResponse + ?Sized>(resp: &R, delta: f64, g_f: f64, kappa_f: f64) -> Result<f64> {
    let (x, y) = resp.xy(Complex64::new(delta, 0.0), kappa_f);
    photon_number_from_xy(x, y, g_f, kappa_f)
}

/// Identical-spin closed form, written over the common denominator
/// ω̃_kf ω̃_cf + N g² ⟨σz⟩.
#[derive(Debug, Clone)]
pub struct IdenticalResponse {
    pub omega_c: f64,
    pub kappa_c: f64,
    pub n_spins: f64,
    pub g: f64,
    pub detuning: f64,
    pub lambda_s: f64,
    pub photon_number: f64,
    pub spin_photon: Complex64,
    pub inversion: f64,
}

impl IdenticalResponse {
    pub fn new(params: &SystemParams, steady: &MeanFieldState) -> Result<Self> {
        let r = derive_rates(params)?;
        Ok(IdenticalResponse {
            omega_c: params.omega_c,
            kappa_c: params.kappa_c,
            n_spins: params.n_spins,
            g: params.g,
            detuning: params.detuning(),
            lambda_s: r.lambda_s,
            photon_number: steady.photon_number,
            spin_photon: steady.spin_photon,
            inversion: steady.inversion,
        })
    }

    fn w_cf(&self, z: Complex64, kappa_f: f64) -> Complex64 {
        Complex64::new(0.0, 0.5 * (self.kappa_c + kappa_f)) - z
    }

    fn w_kf(&self, z: Complex64, kappa_f: f64) -> Complex64 {
        Complex64::new(self.detuning, self.lambda_s + 0.5 * kappa_f) - z
    }

    /// Both zeros of ω̃_kf ω̃_cf + N g²⟨σz⟩, the narrow one obtained from
    /// the product of roots to avoid cancellation.
    pub fn zeros(&self, kappa_f: f64) -> [Complex64; 2] {
        let a = Complex64::new(0.0, 0.5 * (self.kappa_c + kappa_f));
        let b = Complex64::new(self.detuning, self.lambda_s + 0.5 * kappa_f);
        let sum = a + b;
        let prod = a * b + self.n_spins * self.g * self.g * self.inversion;
        let disc = (sum * sum - 4.0 * prod).sqrt();
        let big = if (sum + disc).norm() >= (sum - disc).norm() { (sum + disc) / 2.0 } else { (sum - disc) / 2.0 };
        let small = if big.norm() > 0.0 { prod / big } else { Complex64::new(0.0, 0.0) };
        [big, small]
    }
}

impl FilterResponse for IdenticalResponse {
    fn omega_c(&self) -> f64 {
        self.omega_c
    }

    fn xy(&self, z: Complex64, kappa_f: f64) -> (Complex64, Complex64) {
        let wkf = self.w_kf(z, kappa_f);
        let wcf = self.w_cf(z, kappa_f);
        let ng = self.n_spins * self.g;
        let num = wkf * self.photon_number - ng * self.spin_photon;
        let den = wkf * wcf + ng * self.g * self.inversion;
        // X/Y ratio as printed; Y itself as ω̃_cf + N g²⟨σz⟩/ω̃_kf.
        (num / wkf, den / wkf)
    }

    fn dy_dz(&self, z: Complex64, kappa_f: f64) -> Complex64 {
        let wkf = self.w_kf(z, kappa_f);
        -1.0 + self.n_spins * self.g * self.g * self.inversion / (wkf * wkf)
    }

    fn pole_seeds(&self, kappa_f: f64) -> Vec<Complex64> {
        self.zeros(kappa_f).to_vec()
    }

    fn default_window(&self) -> (f64, f64) {
        let coupling = (self.n_spins * self.g * self.g * self.inversion.abs().max(1e-3)).sqrt();
        let half = self.detuning.abs() + 3.0 * (self.lambda_s + self.kappa_c) + 3.0 * coupling;
        (-half, half)
    }
}

/// One spin class as it enters the filter closed form.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ClassTerm {
    pub count: f64,
    pub g: f64,
    pub detuning: f64,
    pub lambda_s: f64,
    pub spin_photon: Complex64,
    pub inversion: f64,
}

/// Sub-ensemble closed form with the per-class sums Σ_α ω̃_αf⁻¹(…).
#[derive(Debug, Clone)]
pub struct SubEnsembleResponse {
    pub omega_c: f64,
    pub kappa_c: f64,
    pub photon_number: f64,
    pub classes: Vec<ClassTerm>,
}

impl SubEnsembleResponse {
    fn w_af(c: &ClassTerm, z: Complex64, kappa_f: f64) -> Complex64 {
        Complex64::new(c.detuning, c.lambda_s + 0.5 * kappa_f) - z
    }
}

impl FilterResponse for SubEnsembleResponse {
    fn omega_c(&self) -> f64 {
        self.omega_c
    }

    fn xy(&self, z: Complex64, kappa_f: f64) -> (Complex64, Complex64) {
        let mut x = Complex64::new(self.photon_number, 0.0);
        let mut y = Complex64::new(0.0, 0.5 * (self.kappa_c + kappa_f)) - z;
        for c in &self.classes {
            let inv = Self::w_af(c, z, kappa_f).inv();
            x -= inv * (c.count * c.g) * c.spin_photon;
            y += inv * (c.count * c.g * c.g * c.inversion);
        }
        (x, y)
    }

    fn dy_dz(&self, z: Complex64, kappa_f: f64) -> Complex64 {
        let mut d = Complex64::new(-1.0, 0.0);
        for c in &self.classes {
            let w = Self::w_af(c, z, kappa_f);
            d += c.count * c.g * c.g * c.inversion / (w * w);
        }
        d
    }

    fn pole_seeds(&self, kappa_f: f64) -> Vec<Complex64> {
        let mut seeds: Vec<Complex64> =
            self.classes.iter().map(|c| Complex64::new(c.detuning, c.lambda_s + 0.5 * kappa_f)).collect();
        seeds.push(Complex64::new(0.0, 0.5 * (self.kappa_c + kappa_f)));
        seeds
    }

    fn default_window(&self) -> (f64, f64) {
        let spread = self.classes.iter().map(|c| c.detuning.abs() + 3.0 * c.lambda_s).fold(0.0, f64::max);
        let coupling: f64 = self.classes.iter().map(|c| c.count * c.g * c.g).sum::<f64>().sqrt();
        let half = spread + 3.0 * self.kappa_c + 3.0 * coupling;
        (-half, half)
    }
}

/// ⟨b†b⟩ for the identical-spin model at absolute filter frequency `omega_f`,
/// using the filter coupling and linewidth stored in `params`.
pub fn filter_photon_number_identical(omega_f: f64, steady: &MeanFieldState, params: &SystemParams) -> Result<f64> {
    let resp = IdenticalResponse::new(params, steady)?;
    photon_number_at(&resp, omega_f - params.omega_c, params.filter_g, params.filter_kappa)
}

/// ⟨b†b⟩ for a sub-ensemble steady state at absolute filter frequency
/// `omega_f`, using the model's filter coupling and linewidth.
pub fn filter_photon_number_subensemble(omega_f: f64, steady: &SubEnsembleState, model: &SubEnsembleModel) -> Result<f64> {
    let resp = steady.response(model)?;
    photon_number_at(&resp, omega_f - model.omega_c, model.filter_g, model.filter_kappa)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SpectrumSample {
    pub offset: f64,
    pub b_dag_b: f64,
    pub density: f64,
    pub kappa_f: f64,
    pub filter_g: f64,
}

impl SpectrumSample {
    pub fn omega_f(&self, omega_c: f64) -> f64 {
        omega_c + self.offset
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Peak {
    /// Offset from ω_c, rad/s.
    pub center: f64,
    pub height: f64,
    pub density: f64,
    /// Full width at half maximum, rad/s.
    pub fwhm: f64,
    pub kappa_f: f64,
    pub filter_g: f64,
    pub samples_across: f64,
    pub resolved: bool,
    /// A neighbouring peak keeps one or both flanks above half maximum.
    pub blended: bool,
    /// Matching zero of the denominator, if one was found.
    pub pole: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScanMeta {
    pub omega_c: f64,
    pub window: (f64, f64),
    pub coarse_kappa_f: f64,
    pub coarse_filter_g: f64,
    pub min_kappa_f: f64,
    pub refinement_depth: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumResult {
    pub samples: Vec<SpectrumSample>,
    pub peaks: Vec<Peak>,
    pub meta: ScanMeta,
}

impl SpectrumResult {
    pub fn narrowest(&self) -> Option<&Peak> {
        self.peaks.iter().filter(|p| p.resolved).min_by(|a, b| a.fwhm.total_cmp(&b.fwhm))
    }

    pub fn tallest(&self) -> Option<&Peak> {
        self.peaks.iter().max_by(|a, b| a.density.total_cmp(&b.density))
    }

    /// Density normalized so that the tallest sample is 1.
    pub fn normalized(&self) -> Vec<f64> {
        let m = self.samples.iter().map(|s| s.density).fold(0.0, f64::max);
        self.samples.iter().map(|s| if m > 0.0 { s.density / m } else { 0.0 }).collect()
    }
}

#[derive(Debug, Clone)]
pub struct ScanOptions {
    pub window: Option<(f64, f64)>,
    pub coarse_points: usize,
    /// Upper bound for κ_f (the configured filter linewidth).
    pub kappa_f_max: f64,
    /// G = κ_f · ratio.
    pub g_ratio: f64,
    pub min_samples_per_fwhm: f64,
    /// Minimum topographic prominence, relative to the tallest peak.
    pub prominence: f64,
    pub max_depth: usize,
    /// Threshold on density × window width, i.e. on a photon-number scale.
    pub noise_floor: f64,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions {
            window: None,
            coarse_points: 2001,
            kappa_f_max: 1e3,
            g_ratio: 0.01,
            min_samples_per_fwhm: 20.0,
            prominence: 0.02,
            max_depth: 16,
            noise_floor: 1e-12,
        }
    }
}

impl ScanOptions {
    pub fn from_params(params: &SystemParams) -> Self {
        ScanOptions { kappa_f_max: params.filter_kappa, ..Default::default() }
    }
}

fn sample<R: FilterResponse + ?Sized>(resp: &R, delta: f64, kappa_f: f64, g_ratio: f64) -> SpectrumSample {
    let g_f = kappa_f * g_ratio;
    let b = photon_number_at(resp, delta, g_f, kappa_f).unwrap_or(f64::NAN);
    SpectrumSample { offset: delta, b_dag_b: b, density: b * kappa_f / (2.0 * g_f * g_f), kappa_f, filter_g: g_f }
}

/// Zeros of Y in the upper half plane, located by complex Newton from the
/// model's seeds and from the local minima of |Y| on `grid`.
pub fn denominator_zeros<R: FilterResponse + ?Sized>(resp: &R, grid: &[f64], kappa_f: f64) -> Vec<Complex64> {
    let mut seeds = resp.pole_seeds(kappa_f);
    let spacing = if grid.len() > 1 { (grid[grid.len() - 1] - grid[0]) / (grid.len() - 1) as f64 } else { 1.0 };
    let mags: Vec<f64> = grid.iter().map(|&d| resp.xy(Complex64::new(d, 0.0), kappa_f).1.norm()).collect();
    for i in 1..grid.len().saturating_sub(1) {
        if mags[i] <= mags[i - 1] && mags[i] <= mags[i + 1] {
            seeds.push(Complex64::new(grid[i], 0.5 * spacing));
        }
    }
    let mut zeros: Vec<Complex64> = Vec::new();
    for s in seeds {
        let mut z = s;
        let mut ok = false;
        for _ in 0..200 {
            let y = resp.xy(z, kappa_f).1;
            let dy = resp.dy_dz(z, kappa_f);
            if !dy.is_finite() || dy.norm() == 0.0 {
                break;
            }
            let step = y / dy;
            z -= step;
            if !z.is_finite() {
                break;
            }
            if step.norm() <= 1e-13 * (z.norm() + 1.0) {
                ok = true;
                break;
            }
        }
        if ok && z.im > 0.0 && !zeros.iter().any(|w| (w - z).norm() <= 1e-9 * (z.norm() + 1.0)) {
            zeros.push(z);
        }
    }
    zeros.sort_by(|a, b| a.re.total_cmp(&b.re));
    zeros
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Side {
    Crossing(f64),
    /// The density turned upward again before reaching half maximum.
    Dip(f64),
    Edge,
}

fn half_max_side(samples: &[SpectrumSample], apex: usize, forward: bool) -> Side {
    let half = 0.5 * samples[apex].density;
    let mut i = apex;
    loop {
        let j = if forward { i + 1 } else { i.wrapping_sub(1) };
        if j >= samples.len() {
            return Side::Edge;
        }
        let (a, b) = (&samples[i], &samples[j]);
        if b.density < half {
            return Side::Crossing(a.offset + (half - a.density) / (b.density - a.density) * (b.offset - a.offset));
        }
        if b.density > a.density {
            return Side::Dip(a.offset);
        }
        i = j;
    }
}

#[derive(Debug, Clone, Copy)]
struct Shape {
    center: f64,
    fwhm: f64,
    blended: bool,
    edge: bool,
}

/// Width of the peak at `apex`. When a neighbour keeps the density above
/// half maximum on one side, the width is mirrored from the clean side.
fn shape(samples: &[SpectrumSample], apex: usize) -> Shape {
    let center = parabolic_center(samples, apex);
    let l = half_max_side(samples, apex, false);
    let r = half_max_side(samples, apex, true);
    let (fwhm, blended) = match (l, r) {
        (Side::Crossing(l), Side::Crossing(r)) => (r - l, false),
        (Side::Crossing(l), Side::Dip(_)) => (2.0 * (center - l), true),
        (Side::Dip(_), Side::Crossing(r)) => (2.0 * (r - center), true),
        (Side::Dip(l), Side::Dip(r)) => (r - l, true),
        _ => (f64::NAN, false),
    };
    Shape { center, fwhm, blended, edge: l == Side::Edge || r == Side::Edge }
}

fn climb(samples: &[SpectrumSample], start: usize) -> usize {
    let mut k = start;
    while k > 0 && samples[k - 1].density > samples[k].density {
        k -= 1;
    }
    while k + 1 < samples.len() && samples[k + 1].density > samples[k].density {
        k += 1;
    }
    k
}

fn nearest(samples: &[SpectrumSample], x: f64) -> usize {
    let i = samples.partition_point(|s| s.offset < x).min(samples.len() - 1);
    if i > 0 && (samples[i - 1].offset - x).abs() < (samples[i].offset - x).abs() {
        i - 1
    } else {
        i
    }
}

fn parabolic_center(samples: &[SpectrumSample], apex: usize) -> f64 {
    if apex == 0 || apex + 1 >= samples.len() {
        return samples[apex].offset;
    }
    let (x0, x1, x2) = (samples[apex - 1].offset, samples[apex].offset, samples[apex + 1].offset);
    let (y0, y1, y2) = (samples[apex - 1].density, samples[apex].density, samples[apex + 1].density);
    let d01 = (y1 - y0) / (x1 - x0);
    let d12 = (y2 - y1) / (x2 - x1);
    let curv = (d12 - d01) / (x2 - x0);
    if curv >= 0.0 || !curv.is_finite() {
        return x1;
    }
    // vertex of the interpolating parabola
    let v = 0.5 * (x0 + x1) - d01 / (2.0 * curv);
    v.clamp(x0, x2)
}

struct Refined {
    samples: Vec<SpectrumSample>,
    peak: Peak,
    depth: usize,
}

fn refine<R: FilterResponse + ?Sized>(resp: &R, center: f64, width: f64, opts: &ScanOptions) -> Refined {
    let mut c = center;
    let mut w = width.max(1e-12);
    let per_side = (opts.min_samples_per_fwhm * 3.0).ceil() as usize * 2;
    let mut last: Option<Refined> = None;
    for depth in 1..=opts.max_depth {
        let kappa_f = opts.kappa_f_max.min(w / 10.0);
        let g_f = kappa_f * opts.g_ratio;
        let half_span = 3.0 * w;
        let n = 2 * per_side + 1;
        let grid: Vec<SpectrumSample> = (0..n)
            .map(|i| sample(resp, c - half_span + 2.0 * half_span * i as f64 / (n - 1) as f64, kappa_f, opts.g_ratio))
            .collect();
        if grid.iter().any(|s| !s.density.is_finite()) {
            last = Some(Refined { peak: unresolved_peak(&grid[per_side], kappa_f, g_f), samples: grid, depth });
            break;
        }
        let spacing = 2.0 * half_span / (n - 1) as f64;
        let apex = climb(&grid, per_side);
        if apex == 0 || apex == n - 1 {
            c = grid[apex].offset;
            last = Some(Refined { peak: unresolved_peak(&grid[apex], kappa_f, g_f), samples: grid, depth });
            continue;
        }
        let sh = shape(&grid, apex);
        if sh.edge {
            w *= 4.0;
            c = grid[apex].offset;
            last = Some(Refined { peak: unresolved_peak(&grid[apex], kappa_f, g_f), samples: grid, depth });
            continue;
        }
        let pk = Peak {
            center: sh.center,
            height: grid[apex].b_dag_b,
            density: grid[apex].density,
            fwhm: sh.fwhm,
            kappa_f,
            filter_g: g_f,
            samples_across: sh.fwhm / spacing,
            resolved: true,
            blended: sh.blended,
            pole: None,
        };
        let converged = (sh.fwhm - w).abs() <= 0.02 * w && pk.samples_across >= opts.min_samples_per_fwhm;
        c = pk.center;
        w = sh.fwhm;
        last = Some(Refined { samples: grid, peak: pk, depth });
        if converged {
            break;
        }
    }
    let mut out = last.expect("at least one refinement pass");
    if !(out.peak.samples_across >= opts.min_samples_per_fwhm) {
        out.peak.resolved = false;
    }
    out
}

fn unresolved_peak(s: &SpectrumSample, kappa_f: f64, g_f: f64) -> Peak {
    Peak {
        center: s.offset,
        height: s.b_dag_b,
        density: s.density,
        fwhm: f64::NAN,
        kappa_f,
        filter_g: g_f,
        samples_across: 0.0,
        resolved: false,
        blended: false,
        pole: None,
    }
}


/// Topographic prominence of sample `i` within the merged sample set.
fn prominence(samples: &[SpectrumSample], i: usize) -> f64 {
    let h = samples[i].density;
    let mut left_min = h;
    let mut j = i;
    while j > 0 {
        j -= 1;
        if samples[j].density > h {
            break;
        }
        left_min = left_min.min(samples[j].density);
    }
    let mut right_min = h;
    let mut k = i;
    while k + 1 < samples.len() {
        k += 1;
        if samples[k].density > h {
            break;
        }
        right_min = right_min.min(samples[k].density);
    }
    h - left_min.max(right_min)
}

/// Multi-resolution scan: a coarse uniform pass over the window, zeros of
/// the denominator as candidate peak positions, then local re-gridding with
/// κ_f = min(κ_f,max, FWHM/10) and G = κ_f/100 until every peak is covered
/// by the requested number of samples.
pub fn scan_spectrum<R: FilterResponse + ?Sized>(resp: &R, window: Option<(f64, f64)>, opts: &ScanOptions) -> Result<SpectrumResult> {
    let (lo, hi) = window.or(opts.window).unwrap_or_else(|| resp.default_window());
    if !(hi > lo) {
        return Err(Error::InvalidParameter { name: "window".into(), reason: "upper bound must exceed lower bound".into() });
    }
    let n = opts.coarse_points.max(3);
    let grid: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
    let kf0 = opts.kappa_f_max;
    let coarse: Vec<SpectrumSample> = grid.iter().map(|&d| sample(resp, d, kf0, opts.g_ratio)).collect();
    let spacing = (hi - lo) / (n - 1) as f64;
    let mut meta = ScanMeta {
        omega_c: resp.omega_c(),
        window: (lo, hi),
        coarse_kappa_f: kf0,
        coarse_filter_g: kf0 * opts.g_ratio,
        min_kappa_f: kf0,
        refinement_depth: 0,
    };

    let zeros = denominator_zeros(resp, &grid, 0.0);
    let mut candidates: Vec<(f64, f64, Option<(f64, f64)>)> = zeros
        .iter()
        .filter(|z| z.re >= lo && z.re <= hi)
        .map(|z| (z.re, (2.0 * z.im).max(1e-9), Some((z.re, z.im))))
        .collect();
    for i in 1..n - 1 {
        let d = coarse[i].density;
        if d > coarse[i - 1].density && d >= coarse[i + 1].density {
            let x = coarse[i].offset;
            if !candidates.iter().any(|(c, w, _)| (c - x).abs() <= (1.5 * w).max(2.0 * spacing)) {
                candidates.push((x, 4.0 * spacing, None));
            }
        }
    }

    let mut samples = coarse.clone();
    let mut peaks: Vec<Peak> = Vec::new();
    for (c, w, pole) in candidates {
        let r = refine(resp, c, w, opts);
        meta.refinement_depth = meta.refinement_depth.max(r.depth);
        meta.min_kappa_f = meta.min_kappa_f.min(r.peak.kappa_f);
        samples.extend(r.samples.iter().filter(|s| s.density.is_finite()));
        let mut pk = r.peak;
        pk.pole = pole;
        if !pk.density.is_finite() {
            continue;
        }
        let dup = peaks.iter().position(|q| {
            let scale = if q.fwhm.is_finite() && pk.fwhm.is_finite() { 0.5 * q.fwhm.min(pk.fwhm) } else { spacing };
            (q.center - pk.center).abs() <= scale.max(1e-12)
        });
        match dup {
            Some(k) => {
                if pk.resolved && (!peaks[k].resolved || pk.samples_across > peaks[k].samples_across) {
                    peaks[k] = pk;
                }
            }
            None => peaks.push(pk),
        }
    }
    samples.retain(|s| s.density.is_finite());
    samples.sort_by(|a, b| a.offset.total_cmp(&b.offset));
    samples.dedup_by(|a, b| a.offset == b.offset);

    let top = samples.iter().map(|s| s.density).fold(0.0, f64::max);
    let floor = opts.noise_floor / (hi - lo);
    if !(top > floor) {
        return Ok(SpectrumResult { samples, peaks: Vec::new(), meta });
    }
    let peak_top = peaks.iter().map(|p| p.density).fold(0.0, f64::max);
    peaks.retain(|p| {
        let k = climb(&samples, nearest(&samples, p.center));
        let is_local = (samples[k].offset - p.center).abs() <= p.fwhm.max(spacing);
        is_local && prominence(&samples, k) >= opts.prominence * peak_top && p.density > floor
    });
    peaks.sort_by(|a, b| a.center.total_cmp(&b.center));
    Ok(SpectrumResult { samples, peaks, meta })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Linewidth {
    pub center: f64,
    pub fwhm: f64,
    pub resolved: bool,
    pub blended: bool,
}

/// Re-extracts (center, FWHM) for every reported peak from the stored
/// samples taken at that peak's filter settings: linear interpolation of the
/// half-maximum crossings on each side and a parabolic fit through the apex.
/// Peaks whose crossings lie outside the sampled range, or that are covered
/// by fewer than 20 samples, are flagged as unresolved.
pub fn extract_linewidth(result: &SpectrumResult) -> Vec<Linewidth> {
    result
        .peaks
        .iter()
        .map(|p| {
            let local: Vec<SpectrumSample> =
                result.samples.iter().filter(|s| s.kappa_f == p.kappa_f && s.filter_g == p.filter_g).copied().collect();
            if local.len() < 3 {
                return Linewidth { center: p.center, fwhm: f64::NAN, resolved: false, blended: false };
            }
            let apex = climb(&local, nearest(&local, p.center));
            let sh = shape(&local, apex);
            let across = local
                .iter()
                .filter(|s| (s.offset - sh.center).abs() <= 0.5 * sh.fwhm)
                .count();
            let resolved = !sh.edge && sh.fwhm > 0.0 && across >= 20;
            Linewidth { center: sh.center, fwhm: sh.fwhm, resolved, blended: sh.blended }
        })
        .collect()
}

/// Convenience: steady state of the identical model plus its spectrum.
pub fn scan_identical(params: &SystemParams, steady: &MeanFieldState, opts: &ScanOptions) -> Result<SpectrumResult> {
    let resp = IdenticalResponse::new(params, steady)?;
    scan_spectrum(&resp, None, opts)
}
