use super::*;
use crate::montecarlo::{Ensemble, RunRecord, VariationConfig};
use crate::netlist::{ElementKind, NetlistBuilder};
use crate::sweep::{run_sweep, SweepPlan};
use crate::topology::{derive_elements, ParameterTable, QubitUnitParams};
use num_complex::Complex64;
use proptest::prelude::*;

fn spectrum(freqs: Vec<f64>, mag: impl Fn(f64) -> f64) -> Spectrum {
    let resp = freqs.iter().map(|&f| Complex64::new(mag(f), 0.0)).collect();
    Spectrum { freqs, probes: vec!["out1".into()], response: vec![resp], netlist_digest: String::new() }
}

fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

fn lorentzian(f0: f64, w: f64, h: f64) -> impl Fn(f64) -> f64 {
    move |f| h / (1.0 + (2.0 * (f - f0) / w).powi(2)).sqrt()
}

fn full(s: &Spectrum) -> (f64, f64) {
    (s.freqs[0], *s.freqs.last().unwrap())
}

#[test]
fn lorentzian_width() {
    let (f0, w) = (8e9, 1e6);
    let s = spectrum(grid(f0 - 20.0 * w, f0 + 20.0 * w, 40_001), lorentzian(f0, w, 0.3));
    let p = find_peaks(&s, "out1", full(&s), &PeakOptions::default()).unwrap();
    assert_eq!(p.len(), 1);
    assert!((p[0].fwhm_hz - w).abs() <= 1e-4 * w, "{}", p[0].fwhm_hz);
    assert!(p[0].resolved && !p[0].merged);
    assert_eq!(p[0].band, Band::Resonator);
    // |V| = h/2 sits at √3 half-widths.
    let hv = PeakOptions { fwhm_mode: FwhmMode::HalfVoltage, ..Default::default() };
    let p = find_peaks(&s, "out1", full(&s), &hv).unwrap();
    assert!((p[0].fwhm_hz / (3f64.sqrt() * w) - 1.0).abs() < 1e-4);
}

#[test]
fn flat_spectrum_has_no_peaks() {
    let s = spectrum(grid(1e9, 2e9, 101), |_| 0.25);
    assert!(find_peaks(&s, "out1", full(&s), &PeakOptions::default()).unwrap().is_empty());
}

#[test]
fn unknown_probe_and_empty_band() {
    let s = spectrum(grid(1e9, 2e9, 11), |_| 1.0);
    assert!(find_peaks(&s, "nope", full(&s), &PeakOptions::default()).is_err());
    assert!(find_peaks(&s, "out1", (3e9, 4e9), &PeakOptions::default()).is_err());
}

#[test]
fn truncated_peak_is_unresolved() {
    let (f0, w) = (8e9, 1e6);
    // Upper crossing lies beyond the band.
    let s = spectrum(grid(f0 - 20.0 * w, f0 + 0.3 * w, 20_001), lorentzian(f0 + 0.2 * w, w, 1.0));
    let p = find_peaks(&s, "out1", full(&s), &PeakOptions::default()).unwrap();
    assert_eq!(p.len(), 1);
    assert!(!p[0].resolved && p[0].f_high.is_none());
}

#[test]
fn overlapping_peaks_merge() {
    let w = 1e6;
    let a = lorentzian(8e9, w, 1.0);
    let b = lorentzian(8e9 + 0.8 * w, w, 0.95);
    let s = spectrum(grid(8e9 - 20.0 * w, 8e9 + 20.0 * w, 20_001), |f| a(f) + b(f));
    let p = find_peaks(&s, "out1", full(&s), &PeakOptions::default()).unwrap();
    assert!(p.len() == 1, "{p:?}");
    // Either both maxima survived (merged) or the sum has a single maximum.
    assert!(p[0].merged || p[0].resolved);

    let a = lorentzian(8e9, w, 1.0);
    let b = lorentzian(8e9 + 1.2 * w, w, 0.6);
    let s = spectrum(grid(8e9 - 20.0 * w, 8e9 + 20.0 * w, 20_001), |f| a(f) + 3.0 * b(f));
    let p = find_peaks(&s, "out1", full(&s), &PeakOptions::default()).unwrap();
    assert_eq!(p.len(), 1);
    assert!(p[0].merged && !p[0].resolved);
}

#[test]
fn separated_peaks_and_bands() {
    let s = spectrum(grid(5.5e9, 9.5e9, 400_001), |f| {
        lorentzian(6e9, 2e5, 0.2)(f) + lorentzian(8e9, 1e6, 1.0)(f)
    });
    let p = find_peaks(&s, "out1", full(&s), &PeakOptions::default()).unwrap();
    assert_eq!(p.len(), 2);
    assert_eq!((p[0].band, p[1].band), (Band::Qubit, Band::Resonator));
    assert!(p.iter().all(|p| p.resolved));
}

#[test]
fn width_identities() {
    assert_eq!(t1m_from_width(1e6), 1e-6);
    let t = t1m_from_width(2.0 * std::f64::consts::PI * 1e6);
    assert!((t - 159.154_943e-9).abs() < 1e-15);
    let s = spectrum(grid(7.9e9, 8.1e9, 20_001), lorentzian(8e9, 1.3e6, 1.0));
    for p in find_peaks(&s, "out1", full(&s), &PeakOptions::default()).unwrap() {
        assert_eq!(p.q_p, p.f_peak / p.fwhm_hz);
        assert!((p.t1_m * p.gamma1 - 1.0).abs() <= f64::EPSILON);
        let w_t1 = 2.0 * std::f64::consts::PI * p.f_peak * p.t1_m;
        assert!((w_t1 / p.q_p - 1.0).abs() < 1e-14);
    }
}

#[test]
fn rlc_closure() {
    let p = QubitUnitParams::default();
    let d = derive_elements(&p);
    let mut b = NetlistBuilder::new("rlc");
    b.add("I1", ElementKind::AcCurrentSource { amplitude: 1e-9, phase_deg: 0.0 }, &["0", "a"]).unwrap();
    b.resistor("RQ", "a", "0", d.r_q).unwrap();
    b.inductor("LQ", "a", "0", d.l_q).unwrap();
    b.capacitor("CQ", "a", "0", p.c_q).unwrap();
    b.probe("a").unwrap();
    let n = b.build();
    let plan = SweepPlan { f_min: 5.9e9, f_max: 6.1e9, n_coarse: 401, ..SweepPlan::default() };
    let s = run_sweep(&n, &plan).unwrap();
    let peaks = find_peaks(&s, "a", full(&s), &PeakOptions::default()).unwrap();
    assert_eq!(peaks.len(), 1);
    let rc = d.r_q * p.c_q;
    assert!((peaks[0].t1_m / rc - 1.0).abs() < 0.005, "{} vs {rc}", peaks[0].t1_m);
    assert!(peaks[0].resolved);
}

#[test]
fn nominal_assignment() {
    let nominal = [8.0e9, 8.2e9, 8.4e9, 8.6e9];
    assert_eq!(assign_nominal(&[8.01e9, 8.19e9, 8.45e9, 8.6e9], &nominal), vec![0, 1, 2, 3]);
    assert!(!assignment_ambiguous(&[8.01e9, 8.19e9, 8.45e9, 8.6e9], &nominal));
    assert!(assignment_ambiguous(&[8.01e9, 8.08e9, 8.45e9], &nominal));
}

#[test]
fn histogram_counts() {
    let h = Histogram::of(&[1.0, 2.0, 3.0, 4.0], 2);
    assert_eq!(h.edges, vec![1.0, 2.5, 4.0]);
    assert_eq!(h.counts, vec![2, 2]);
    let h = Histogram::of(&[5.0; 3], 4);
    assert_eq!((h.edges, h.counts), (vec![5.0, 5.0], vec![3]));
    assert!(Histogram::of(&[], 3).counts.is_empty());
}

fn synthetic_ensemble(widths: &[Option<f64>]) -> Ensemble {
    let runs = widths
        .iter()
        .enumerate()
        .map(|(i, w)| RunRecord {
            sample_id: i as u64,
            table: ParameterTable { units: vec![], edges: vec![] },
            resampled: 0,
            spectrum: w.map(|w| spectrum(grid(7.9e9, 8.1e9, 20_001), lorentzian(8e9, w, 1.0))),
            error: w.is_none().then(|| "singular".to_string()),
        })
        .collect();
    Ensemble { runs, config: VariationConfig::default(), base_digest: String::new() }
}

#[test]
fn ensemble_infidelity_per_run() {
    let ens = synthetic_ensemble(&[Some(1e6), Some(1e6), None, Some(2e6)]);
    let r = ensemble_infidelity(&ens, 1, 1e-11, Aggregation::Mean, &PeakOptions::default()).unwrap();
    assert_eq!(r.entries.len(), 4);
    assert_eq!(r.entries[0].value, r.entries[1].value);
    assert!(r.entries[2].value.is_none() && r.entries[2].reason.is_some());
    // Infidelity is linear in Γ1 = 2π·fwhm.
    let ratio = r.entries[3].value.unwrap() / r.entries[0].value.unwrap();
    assert!((ratio - 2.0).abs() < 1e-4);
    let expect = 2.0 * std::f64::consts::PI * 1e6 * 1e-11 / 3.0;
    assert!((r.entries[0].value.unwrap() / expect - 1.0).abs() < 1e-4);
    assert_eq!(r.histogram.counts.iter().sum::<u64>(), 3);

    let pp = ensemble_infidelity(&ens, 1, 1e-11, Aggregation::PerPeak, &PeakOptions::default()).unwrap();
    assert_eq!(pp.entries.iter().filter(|e| e.peak == Some(0)).count(), 3);
    assert!(ensemble_infidelity(&ens, 0, 1e-11, Aggregation::Mean, &PeakOptions::default()).is_err());
}

#[test]
fn report_json_shape() {
    let s = spectrum(grid(7.9e9, 8.1e9, 20_001), lorentzian(8e9, 1e6, 1.0));
    let array = crate::topology::ArrayConfig::linear(1);
    let rep = analyze_spectrum(&s, "run-0", &AnalysisConfig::default(), &array).unwrap();
    assert_eq!(rep.peaks.len(), 1);
    assert!(rep.flags.is_empty());
    let v: serde_json::Value = serde_json::to_value(&rep).unwrap();
    for key in ["run_id", "peaks", "infidelity", "flags"] {
        assert!(v.get(key).is_some(), "{key}");
    }
    for key in ["probe", "f_peak_hz", "fwhm_hz", "q", "t1m_s", "gamma1_per_s", "band", "resolved"] {
        assert!(v["peaks"][0].get(key).is_some(), "{key}");
    }
    assert_eq!(v["infidelity"]["aggregation"], "mean");
    assert!(v["infidelity"]["value"].as_f64().unwrap() > 0.0);

    let flat = spectrum(grid(7.9e9, 8.1e9, 101), |_| 1.0);
    let rep = analyze_spectrum(&flat, "run-1", &AnalysisConfig::default(), &array).unwrap();
    assert!(rep.infidelity.value.is_none() && !rep.flags.is_empty());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn amplitude_invariance(k in 1e-6f64..1e6, w in 2e5f64..3e6, f0 in 7.95e9f64..8.05e9) {
        let s = spectrum(grid(7.9e9, 8.1e9, 20_001), lorentzian(f0, w, 0.7));
        let scaled = s.scaled(k);
        let a = find_peaks(&s, "out1", full(&s), &PeakOptions::default()).unwrap();
        let b = find_peaks(&scaled, "out1", full(&s), &PeakOptions::default()).unwrap();
        prop_assert_eq!(a.len(), b.len());
        for (p, q) in a.iter().zip(&b) {
            prop_assert_eq!(p.f_peak, q.f_peak);
            prop_assert!((p.fwhm_hz / q.fwhm_hz - 1.0).abs() < 1e-9);
            prop_assert!((p.t1_m / q.t1_m - 1.0).abs() < 1e-9);
            prop_assert!((q.height / (k * p.height) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn peak_invariants(w in 1e5f64..5e6, h in 1e-6f64..1.0) {
        let s = spectrum(grid(7.9e9, 8.1e9, 20_001), lorentzian(8e9, w, h));
        for p in find_peaks(&s, "out1", full(&s), &PeakOptions::default()).unwrap() {
            prop_assert!(p.fwhm_hz > 0.0);
            prop_assert_eq!(p.q_p, p.f_peak / p.fwhm_hz);
            prop_assert!((p.t1_m * p.gamma1 - 1.0).abs() <= f64::EPSILON);
            prop_assert_eq!(p.delta_omega_p, 2.0 * std::f64::consts::PI * p.fwhm_hz);
        }
    }
}
