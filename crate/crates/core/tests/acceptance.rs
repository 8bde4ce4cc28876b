//! Acceptance criteria, one PASS/FAIL line each. A failing criterion is
//! reported, not raised: the process exits successfully either way.

use std::time::{Duration, Instant};

use num_complex::Complex64;
use nvmaser::analytics::*;
use nvmaser::meanfield::{self, rhs_with_rates, steady_state, steady_state_with, EvolveOptions, MeanFieldState, SteadyOptions};
use nvmaser::model::*;
use nvmaser::ode::Record;
use nvmaser::spectrum::*;
use nvmaser::subensemble::*;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome { pass, detail: detail.into() }
    }

    fn error(e: nvmaser::Error) -> Self {
        Outcome::new(false, format!("error: {e}"))
    }
}

type Criterion = fn() -> Outcome;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn cold(eta_over_gamma: f64) -> SystemParams {
    let p = SystemParams { temperature: 0.025, ..SystemParams::reference() };
    p.with_eta(eta_over_gamma * p.gamma)
}

fn hz(w: f64) -> f64 {
    w / TWO_PI
}

fn derived_rates() -> Outcome {
    let p = SystemParams::reference();
    let n = thermal_occupation(p.omega_c, 293.0).unwrap();
    let r = derive_rates(&p).unwrap();
    let omega = collective_coupling(&p);
    let checks = [rel(n, 662.0), rel(r.gamma_purcell, 1.03e-6), rel(omega, 4.42e6)];
    Outcome::new(
        checks.iter().all(|c| *c <= 0.01),
        format!("n_th = {n:.2}, Γ_c = {:.4e}, √N·g = {omega:.4e} (deviations {:.2}%, {:.2}%, {:.2}%)", r.gamma_purcell, 100.0 * checks[0], 100.0 * checks[1], 100.0 * checks[2]),
    )
}

/// Closed form, and independently the pump at which the steady-state photon
/// number first exceeds max(1, 2 n_c^th).
fn threshold_ratio() -> Outcome {
    let run = || -> nvmaser::Result<Outcome> {
        let p = SystemParams::reference();
        let t = masing_threshold(&p)?.rate().unwrap_or(f64::INFINITY);
        let ratio = t / p.gamma;
        let r = derive_rates(&p)?;
        let level = 1f64.max(2.0 * r.n_c_th);
        let mut guess = None;
        let mut crossing = f64::NAN;
        for k in 0..=200 {
            let eta = p.gamma * 10f64.powf(0.02 * k as f64);
            let st = steady_state(&p.with_eta(eta), guess.as_ref())?;
            guess = Some(st);
            if st.photon_number > level {
                crossing = eta / p.gamma;
                break;
            }
        }
        let limit = cold(0.0).with_n_spins(4e16);
        let low = masing_threshold(&limit)?.rate().unwrap_or(f64::INFINITY) / limit.gamma;
        let pass = rel(ratio, 160.0) <= 0.1 && (low - 1.0).abs() <= 0.1 && crossing / ratio < 2.0 && ratio / crossing < 2.0;
        Ok(Outcome::new(
            pass,
            format!("293 K: η_th = {ratio:.1}γ (target 160γ ±10%, off by {:.1}%), photon crossing at {crossing:.1}γ; 25 mK, N = 4e16: η_th = {low:.4}γ", 100.0 * rel(ratio, 160.0)),
        ))
    };
    run().unwrap_or_else(Outcome::error)
}

fn masing_linewidth() -> Outcome {
    let run = || -> nvmaser::Result<Outcome> {
        let p = cold(1e3);
        let st = steady_state(&p, None)?;
        let res = scan_identical(&p, &st, &ScanOptions::from_params(&p))?;
        let Some(pk) = res.narrowest() else {
            return Ok(Outcome::new(false, "no resolved peak"));
        };
        let below_kappa = (p.kappa_c / pk.fwhm).log10();
        let below_chi = (p.chi / pk.fwhm).log10();
        Ok(Outcome::new(
            hz(pk.fwhm) < 1e-3 && below_kappa >= 8.0 && below_chi >= 8.0,
            format!("FWHM = {:.3e} Hz, {below_kappa:.2} decades below κ_c, {below_chi:.2} below the 4 MHz broadening", hz(pk.fwhm)),
        ))
    };
    run().unwrap_or_else(Outcome::error)
}

fn describe_peaks(res: &SpectrumResult) -> String {
    let parts: Vec<String> = res.peaks.iter().map(|p| format!("{:+.4e} Hz (FWHM {:.3e} Hz)", hz(p.center), hz(p.fwhm))).collect();
    format!("[{}]", parts.join(", "))
}

fn gaussian_ensemble() -> Outcome {
    let run = || -> nvmaser::Result<Outcome> {
        let fig2 = |e: f64| -> nvmaser::Result<(SubSteadyReport, SubEnsembleModel)> {
            let b = cold(e);
            let m = discretize_gaussian(&b, 4e13, 4e6, 50, b.omega_c)?;
            Ok((steady_state_subensembles_with(&m, None, &SubSteadyOptions::default())?, m))
        };
        let (strong, m) = fig2(1e5)?;
        let opts = ScanOptions::from_params(&cold(1e5));
        let hi = scan_spectrum(&strong.state.response(&m)?, None, &opts)?;
        let pk = hi.tallest().copied();
        let (weak, m) = fig2(1e-3)?;
        let lo = scan_spectrum(&weak.state.response(&m)?, None, &opts)?;
        let single = hi.peaks.len() == 1;
        let (fwhm, shift) = pk.map(|p| (hz(p.fwhm), hz(p.center).abs())).unwrap_or((f64::NAN, f64::NAN));
        let mhz_decade = (1e-3..1e-2).contains(&fwhm);
        let shift_decade = (1e5..1e6).contains(&shift);
        let two = lo.peaks.len() == 2 && lo.peaks.iter().all(|p| p.resolved);
        Ok(Outcome::new(
            single && mhz_decade && shift_decade && two,
            format!(
                "η = 1e5γ: root n = {:.4e}, peaks {} (single: {single}, mHz decade: {mhz_decade}, 1e5 Hz shift: {shift_decade}); η = 1e-3γ: {} resolved peaks {}",
                strong.state.photon_number,
                describe_peaks(&hi),
                lo.peaks.len(),
                describe_peaks(&lo)
            ),
        ))
    };
    run().unwrap_or_else(Outcome::error)
}

/// Largest distance of a resolved peak from the nearer Re ω̃±, relative to the
/// separation of the two roots.
fn center_error(p: &SystemParams, st: &MeanFieldState, res: &SpectrumResult) -> nvmaser::Result<f64> {
    let (a, b) = peak_offsets(p, st.inversion)?;
    let sep = (a.re - b.re).abs();
    let mut worst: f64 = 0.0;
    for pk in res.peaks.iter().filter(|q| q.resolved) {
        let d = (pk.center - a.re).abs().min((pk.center - b.re).abs());
        worst = worst.max(d / sep);
    }
    Ok(worst)
}

fn spectral_transitions() -> Outcome {
    let run = || -> nvmaser::Result<Outcome> {
        let mut worst = (0.0, String::new());
        let mut counts = |ps: Vec<SystemParams>| -> nvmaser::Result<Vec<usize>> {
            let mut out = Vec::new();
            let mut guess = None;
            for p in ps {
                let st = steady_state(&p, guess.as_ref())?;
                guess = Some(st);
                let res = scan_identical(&p, &st, &ScanOptions::from_params(&p))?;
                if res.peaks.len() == 2 {
                    let e = center_error(&p, &st, &res)?;
                    if e > worst.0 {
                        worst = (e, format!("N = {:.0e}, η = {:.0e}γ", p.n_spins, p.eta / p.gamma));
                    }
                }
                out.push(res.peaks.len());
            }
            Ok(out)
        };
        let etas = [1e-3, 1e-2, 0.1, 1.0, 10.0, 1e2, 1e3];
        let a = counts(etas.iter().map(|&e| cold(e)).collect())?;
        let ns = [1e11, 1e12, 1e13, 3e13, 1e14, 1e15];
        let b = counts(ns.iter().map(|&n| cold(0.01).with_n_spins(n)).collect())?;
        let switches = |v: &[usize], from: usize, to: usize| v.first() == Some(&from) && v.last() == Some(&to) && v.windows(2).filter(|w| w[0] != w[1]).count() == 1;
        let pa = switches(&a, 2, 1);
        let pb = switches(&b, 1, 2);
        Ok(Outcome::new(
            pa && pb && worst.0 <= 0.02,
            format!("peaks vs η/γ {etas:?}: {a:?}; vs N {ns:?}: {b:?}; worst resolved center offset {:.2}% of the separation ({})", 100.0 * worst.0, worst.1),
        ))
    };
    run().unwrap_or_else(Outcome::error)
}

fn pulling() -> Outcome {
    let p = cold(10.0);
    let deltas: Vec<f64> = (0..=16).map(|k| k as f64 * p.chi / 8.0).collect();
    match pulling_factor(&p, &deltas) {
        Ok(fit) => Outcome::new(
            (fit.slope - 0.25).abs() <= 0.1,
            format!("slope {:.4} over {} detunings up to {:.1e} rad/s ({} without masing peak)", fit.slope, fit.points.len(), deltas[16], fit.excluded.len()),
        ),
        Err(e) => Outcome::error(e),
    }
}

fn thermal_boundary() -> Outcome {
    let run = || -> nvmaser::Result<Outcome> {
        let base = SystemParams::reference();
        let temps: Vec<f64> = (0..=24).map(|k| 0.025 * 10f64.powf(k as f64 * (300f64 / 0.025).log10() / 24.0)).collect();
        let thermal: Vec<bool> = temps.iter().map(|&t| thermal_occupation(base.omega_c, t).map(|n| n >= 1.0)).collect::<nvmaser::Result<_>>()?;
        let mut worst = 0usize;
        let mut notes = Vec::new();
        for e in [1e-3, 10f64.powf(-2.5), 1e-2] {
            let mut guess = None;
            let mut bright = Vec::new();
            for &t in &temps {
                let p = base.with_temperature(t).with_eta(e * base.gamma);
                let st = steady_state(&p, guess.as_ref())?;
                guess = Some(st);
                bright.push(st.photon_number > 1.0);
            }
            // mismatching cells must sit next to the boundary
            let first_thermal = thermal.iter().position(|x| *x).unwrap_or(temps.len());
            let off = bright
                .iter()
                .zip(&thermal)
                .enumerate()
                .filter(|(_, (a, b))| a != b)
                .map(|(i, _)| if i < first_thermal { first_thermal - i } else { i + 1 - first_thermal })
                .max()
                .unwrap_or(0);
            worst = worst.max(off);
            let first_bright = bright.iter().position(|x| *x).map(|i| temps[i]).unwrap_or(f64::NAN);
            notes.push(format!("η = {e:.1e}γ: n > 1 from {first_bright:.3} K"));
        }
        let first = thermal.iter().position(|x| *x).map(|i| temps[i]).unwrap_or(f64::NAN);
        Ok(Outcome::new(
            worst <= 1,
            format!("n_c^th ≥ 1 from {first:.3} K; {}; largest boundary distance {worst} cell(s) on a 25-point log grid 25 mK…300 K", notes.join(", ")),
        ))
    };
    run().unwrap_or_else(Outcome::error)
}

fn oracle_suite() -> Outcome {
    let start = Instant::now();
    match nvmaser::fixtures::standard_suite() {
        Ok(all) => {
            let elapsed = start.elapsed();
            let listed: Vec<String> = all.iter().map(|f| format!("{} {:.1e} (≤ {:.0e})", f.name, f.measured, f.bound)).collect();
            Outcome::new(
                all.iter().all(|f| f.pass) && elapsed < Duration::from_secs(120),
                format!("{}; {:.1} s", listed.join(", "), elapsed.as_secs_f64()),
            )
        }
        Err(e) => Outcome::error(e),
    }
}

fn invariant_suite() -> Outcome {
    let start = Instant::now();
    let run = || -> nvmaser::Result<Outcome> {
        let mut failures = Vec::new();
        let mut points = 0;
        let mut worst_dip: f64 = 0.0;
        for preset in presets() {
            for e in [0.1, 10.0, 1e3] {
                points += 1;
                let p = preset.params.with_eta(e * preset.params.gamma);
                let tag = format!("{} η={e}γ", preset.name);
                let rep = steady_state_with(&p, None, &SteadyOptions::default())?;
                let st = rep.state;
                if let Err(err) = st.check_invariants(1e-9) {
                    failures.push(format!("{tag}: {err}"));
                }
                // determinism
                let again = steady_state_with(&p, None, &SteadyOptions::default())?.state;
                if again != st {
                    failures.push(format!("{tag}: repeated solve differs"));
                }
                // conjugated model
                let r = derive_rates(&p)?;
                let flipped = SystemParams { g: -p.g, omega_s: 2.0 * p.omega_c - p.omega_s, ..p };
                let probe = MeanFieldState { spin_photon: st.spin_photon + Complex64::new(0.1, 0.2) * st.spin_photon.norm().max(1e-6), ..st };
                let d = rhs_with_rates(&probe, &p, &r);
                let dc = rhs_with_rates(&probe.conj(), &flipped, &r).conj();
                let herm = (d.spin_photon - dc.spin_photon).norm() / d.spin_photon.norm().max(1e-300) + (d.photon_number - dc.photon_number).abs() / d.photon_number.abs().max(1e-300);
                if herm > 1e-12 {
                    failures.push(format!("{tag}: conjugation mismatch {herm:e}"));
                }
                // positivity and inversion bounds along the approach to the root
                let slowest = (p.gamma * (2.0 * r.n_k_th + 1.0) + p.eta).min(p.kappa_c);
                let opts = EvolveOptions { tol: 1e-8, record: Record::Steps, ..Default::default() };
                let tr = meanfield::evolve_with(&MeanFieldState::uncoupled(&p, &r), &p, 20.0 / slowest, &opts)?;
                // the integrator controls error relative to the state's size, and
                // local errors accumulate over up to ~1e6 steps
                let peak = tr.states.iter().map(|s| s.photon_number).fold(1.0, f64::max);
                let dip = tr.states.iter().map(|s| -s.photon_number / peak).fold(0.0, f64::max);
                worst_dip = worst_dip.max(dip);
                if dip > 100.0 * opts.tol {
                    failures.push(format!("{tag}: photon number dips to {:e} of its peak", -dip));
                }
                if let Some(bad) = tr.states.iter().find(|s| s.inversion.abs() > 1.0 + 1e-8) {
                    failures.push(format!("{tag}: inversion {} out of bounds", bad.inversion));
                }
                // Dicke bounds
                let dk = dicke_numbers(st.inversion, st.spin_spin, p.n_spins)?;
                if dk.m.abs() > dk.j + 0.5 || dk.j > 0.5 * p.n_spins + 1.0 {
                    failures.push(format!("{tag}: Dicke bounds |M| {:e}, J {:e}", dk.m.abs(), dk.j));
                }
                // filter insensitivity of the extracted linewidths
                let so = ScanOptions::from_params(&p);
                let a = scan_identical(&p, &st, &so)?;
                let half_g = scan_identical(&p, &st, &ScanOptions { g_ratio: 0.5 * so.g_ratio, ..so.clone() })?;
                let half_k = scan_identical(&p, &st, &ScanOptions { kappa_f_max: 0.5 * so.kappa_f_max, ..so.clone() })?;
                if a.peaks.len() != half_g.peaks.len() || a.peaks.len() != half_k.peaks.len() {
                    failures.push(format!("{tag}: peak count changes with the filter"));
                } else {
                    for ((x, y), z) in a.peaks.iter().zip(&half_g.peaks).zip(&half_k.peaks) {
                        if rel(y.fwhm, x.fwhm) > 1e-3 || (x.center - y.center).abs() > 1e-3 * x.fwhm {
                            failures.push(format!("{tag}: halving G moves a peak"));
                        }
                        if (x.fwhm - z.fwhm).abs() >= x.kappa_f {
                            failures.push(format!("{tag}: halving κ_f changes FWHM by {:e}", (x.fwhm - z.fwhm).abs()));
                        }
                    }
                }
            }
        }
        Ok(Outcome::new(
            failures.is_empty(),
            format!("{points} preset/pump points, {} violations{}; largest negative photon excursion {worst_dip:.1e} of the trajectory peak; {:.1} s", failures.len(), if failures.is_empty() { String::new() } else { format!(" ({})", failures.join("; ")) }, start.elapsed().as_secs_f64()),
        ))
    };
    run().unwrap_or_else(Outcome::error)
}

fn synchronization() -> Outcome {
    let run = || -> nvmaser::Result<Outcome> {
        let b = cold(1e3);
        let m0 = discretize_gaussian_with(&b, 8e13, 4e6, 50, b.omega_c, GridLayout::IncludeCenter, 2.5)?;
        let centre = m0.classes.iter().position(|c| c.omega == m0.omega_c).expect("resonant class");
        // split models continue from the unsplit fixed point
        let solve = |m: &SubEnsembleModel, guess: Option<&SubEnsembleState>| -> nvmaser::Result<(SubEnsembleState, f64)> {
            let st = steady_state_subensembles_with(m, guess, &SubSteadyOptions::default())?.state;
            let res = scan_spectrum(&st.response(m)?, None, &ScanOptions::from_params(&b))?;
            Ok((st, res.narrowest().map(|p| p.fwhm).unwrap_or(f64::NAN)))
        };
        let (s0, w0) = solve(&m0, None)?;
        let guess = split_state(&s0, centre, 5)?;
        let mut changes = Vec::new();
        for spread in [0.02, 0.002] {
            let (_, w) = solve(&split_class(&m0, centre, 5, TWO_PI * spread)?, Some(&guess))?;
            changes.push((spread, rel(w, w0)));
        }
        let listed: Vec<String> = changes.iter().map(|(s, c)| format!("{:.0} mHz: {:.2e}", 1e3 * s, c)).collect();
        Ok(Outcome::new(
            w0.is_finite() && changes.iter().all(|c| c.1 < 0.1),
            format!("unsplit FWHM {:.4e} Hz; relative change after splitting the resonant class in 5: {}", hz(w0), listed.join(", ")),
        ))
    };
    run().unwrap_or_else(Outcome::error)
}

fn main() {
    // libtest arguments (filters, --nocapture) are accepted and ignored
    let criteria: [(&str, Criterion); 10] = [
        ("derived rates", derived_rates),
        ("threshold ratio", threshold_ratio),
        ("masing linewidth", masing_linewidth),
        ("Gaussian ensemble spectra", gaussian_ensemble),
        ("spectral-shape transitions", spectral_transitions),
        ("pulling factor", pulling),
        ("thermal regime boundary", thermal_boundary),
        ("oracle suite", oracle_suite),
        ("invariant suite", invariant_suite),
        ("synchronization robustness", synchronization),
    ];
    let results: Vec<(Outcome, Duration)> = std::thread::scope(|s| {
        let handles: Vec<_> = criteria
            .iter()
            .map(|(_, f)| {
                s.spawn(move || {
                    let t = Instant::now();
                    let out = std::panic::catch_unwind(f).unwrap_or_else(|_| Outcome::new(false, "panicked"));
                    (out, t.elapsed())
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("criterion thread")).collect()
    });
    let mut passed = 0;
    for (k, ((name, _), (out, dt))) in criteria.iter().zip(&results).enumerate() {
        passed += out.pass as usize;
        println!("{} criterion {:>2} {name}: {} [{:.1} s]", if out.pass { "PASS" } else { "FAIL" }, k + 1, out.detail, dt.as_secs_f64());
    }
    println!("acceptance: {passed}/{} criteria pass", criteria.len());
}
