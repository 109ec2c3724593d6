use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{band_boundary, fidelity, find_peaks, AnalysisError, Band, FidelityInput, FwhmMode, Peak, PeakOptions};
use crate::montecarlo::Ensemble;
use crate::sweep::{SweepError, Spectrum};
use crate::topology::ArrayConfig;

/// How per-peak `Γ1` values of one run enter the fidelity formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    #[default]
    Mean,
    Max,
    PerPeak,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct Bands {
    /// Qubit/resonator split; defaults to the midpoint of the nominal ranges.
    pub boundary_hz: Option<f64>,
    /// Restrict peak search to this range; defaults to the whole spectrum.
    pub search_hz: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    pub tau_op_s: f64,
    /// Defaults to the array size.
    pub n_qubits_for_fidelity: Option<u64>,
    pub aggregation: Aggregation,
    pub fwhm_mode: FwhmMode,
    pub prominence: f64,
    pub min_points_per_fwhm: usize,
    pub bands: Bands,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        let p = PeakOptions::default();
        Self {
            tau_op_s: 1e-11,
            n_qubits_for_fidelity: None,
            aggregation: Aggregation::Mean,
            fwhm_mode: p.fwhm_mode,
            prominence: p.prominence,
            min_points_per_fwhm: p.min_points,
            bands: Bands::default(),
        }
    }
}

impl AnalysisConfig {
    pub fn peak_options(&self, array: &ArrayConfig) -> PeakOptions {
        PeakOptions {
            fwhm_mode: self.fwhm_mode,
            prominence: self.prominence,
            min_points: self.min_points_per_fwhm,
            band_boundary: self.bands.boundary_hz.unwrap_or_else(|| band_boundary(array)),
        }
    }

    pub fn n_qubits(&self, array: &ArrayConfig) -> u64 {
        self.n_qubits_for_fidelity.unwrap_or(array.n_qubits as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakRecord {
    pub probe: String,
    pub f_peak_hz: f64,
    pub fwhm_hz: f64,
    pub q: f64,
    pub t1m_s: f64,
    pub gamma1_per_s: f64,
    pub band: Band,
    pub resolved: bool,
}

impl From<&Peak> for PeakRecord {
    fn from(p: &Peak) -> Self {
        Self {
            probe: p.probe.clone(),
            f_peak_hz: p.f_peak,
            fwhm_hz: p.fwhm_hz,
            q: p.q_p,
            t1m_s: p.t1_m,
            gamma1_per_s: p.gamma1,
            band: p.band,
            resolved: p.resolved,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfidelitySummary {
    pub n_qubits: u64,
    pub tau_op_s: f64,
    pub aggregation: Aggregation,
    /// `None` when the run has no resolved resonator-band peak.
    pub value: Option<f64>,
    /// One value per resolved resonator peak, for `per_peak` aggregation.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub per_peak: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub run_id: String,
    pub peaks: Vec<PeakRecord>,
    pub infidelity: InfidelitySummary,
    pub flags: Vec<String>,
}

/// Peaks on every probe of `spec`, in probe order.
pub fn all_peaks(spec: &Spectrum, opts: &PeakOptions, search: Option<(f64, f64)>) -> Result<Vec<Peak>, AnalysisError> {
    let band = match search {
        Some(b) => b,
        None => match (spec.freqs.first(), spec.freqs.last()) {
            (Some(&lo), Some(&hi)) => (lo, hi),
            _ => return Err(SweepError::EmptyBand(f64::NAN, f64::NAN).into()),
        },
    };
    let mut out = Vec::new();
    for probe in &spec.probes {
        out.extend(find_peaks(spec, probe, band, opts)?);
    }
    Ok(out)
}

struct RunInfidelity {
    value: Option<f64>,
    per_peak: Vec<f64>,
    reason: Option<String>,
    saturated: bool,
}

fn run_infidelity(peaks: &[Peak], n: u64, tau_op: f64, agg: Aggregation) -> Result<RunInfidelity, AnalysisError> {
    let gammas: Vec<f64> =
        peaks.iter().filter(|p| p.resolved && p.band == Band::Resonator).map(|p| p.gamma1).collect();
    if gammas.is_empty() {
        return Ok(RunInfidelity {
            value: None,
            per_peak: vec![],
            reason: Some("no resolved resonator-band peak".into()),
            saturated: false,
        });
    }
    let eval = |g: f64| fidelity(&FidelityInput { n_qubits: n, tau_op, gamma1: g, gamma2: None });
    let mut saturated = false;
    let mut per_peak = Vec::with_capacity(gammas.len());
    for &g in &gammas {
        let r = eval(g)?;
        saturated |= r.saturated;
        per_peak.push(r.infidelity);
    }
    let g = match agg {
        Aggregation::Mean | Aggregation::PerPeak => gammas.iter().sum::<f64>() / gammas.len() as f64,
        Aggregation::Max => gammas.iter().copied().fold(f64::MIN, f64::max),
    };
    let r = eval(g)?;
    saturated |= r.saturated;
    Ok(RunInfidelity { value: Some(r.infidelity), per_peak, reason: None, saturated })
}

/// Peaks, linewidths and the run's infidelity.
pub fn analyze_spectrum(
    spec: &Spectrum,
    run_id: &str,
    cfg: &AnalysisConfig,
    array: &ArrayConfig,
) -> Result<AnalysisReport, AnalysisError> {
    super::positive("tau_op_s", cfg.tau_op_s)?;
    let opts = cfg.peak_options(array);
    let peaks = all_peaks(spec, &opts, cfg.bands.search_hz)?;
    let n = cfg.n_qubits(array);
    let run = run_infidelity(&peaks, n, cfg.tau_op_s, cfg.aggregation)?;

    let mut flags = Vec::new();
    for p in &peaks {
        if p.merged {
            flags.push(format!("merged peak on {} at {:.6e} Hz", p.probe, p.f_peak));
        } else if !p.resolved {
            flags.push(format!("unresolved peak on {} at {:.6e} Hz", p.probe, p.f_peak));
        }
    }
    if let Some(r) = &run.reason {
        flags.push(r.clone());
    }
    if run.saturated {
        flags.push("fidelity saturated".into());
    }
    Ok(AnalysisReport {
        run_id: run_id.to_string(),
        peaks: peaks.iter().map(PeakRecord::from).collect(),
        infidelity: InfidelitySummary {
            n_qubits: n,
            tau_op_s: cfg.tau_op_s,
            aggregation: cfg.aggregation,
            value: run.value,
            per_peak: (cfg.aggregation == Aggregation::PerPeak && run.value.is_some()).then_some(run.per_peak),
        },
        flags,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfidelityEntry {
    pub sample_id: u64,
    /// Index among the run's resolved resonator peaks (per-peak mode only).
    pub peak: Option<usize>,
    pub value: Option<f64>,
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    /// `bins` equal-width bins spanning the finite values; one degenerate
    /// bin when all values coincide.
    pub fn of(values: &[f64], bins: usize) -> Self {
        let v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
        if v.is_empty() {
            return Self { edges: vec![], counts: vec![] };
        }
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if lo == hi || bins <= 1 {
            return Self { edges: vec![lo, hi], counts: vec![v.len() as u64] };
        }
        let edges: Vec<f64> = (0..=bins).map(|k| lo + (hi - lo) * k as f64 / bins as f64).collect();
        let mut counts = vec![0u64; bins];
        for x in v {
            let k = (((x - lo) / (hi - lo)) * bins as f64) as usize;
            counts[k.min(bins - 1)] += 1;
        }
        Self { edges, counts }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleInfidelity {
    pub entries: Vec<InfidelityEntry>,
    pub histogram: Histogram,
}

impl EnsembleInfidelity {
    pub fn values(&self) -> Vec<f64> {
        self.entries.iter().filter_map(|e| e.value).collect()
    }

    /// `max − min` over the non-null values.
    pub fn spread(&self) -> Option<f64> {
        let v = self.values();
        let lo = v.iter().copied().reduce(f64::min)?;
        let hi = v.iter().copied().reduce(f64::max)?;
        Some(hi - lo)
    }
}

/// Infidelity per run (or per peak), ordered by sample id.
pub fn ensemble_infidelity(
    ens: &Ensemble,
    n_qubits: u64,
    tau_op: f64,
    aggregation: Aggregation,
    opts: &PeakOptions,
) -> Result<EnsembleInfidelity, AnalysisError> {
    super::positive("tau_op", tau_op)?;
    if n_qubits == 0 {
        return Err(AnalysisError::NotPositive { field: "n_qubits", value: 0.0 });
    }
    let per_run: Vec<Vec<InfidelityEntry>> = ens
        .runs
        .par_iter()
        .map(|run| -> Result<Vec<InfidelityEntry>, AnalysisError> {
            let id = run.sample_id;
            let null = |reason: String| vec![InfidelityEntry { sample_id: id, peak: None, value: None, reason: Some(reason) }];
            let Some(spec) = &run.spectrum else {
                return Ok(null(format!("run failed: {}", run.error.as_deref().unwrap_or("unknown error"))));
            };
            let peaks = all_peaks(spec, opts, None)?;
            let r = run_infidelity(&peaks, n_qubits, tau_op, aggregation)?;
            Ok(match (r.reason, aggregation) {
                (Some(reason), _) => null(reason),
                (None, Aggregation::PerPeak) => r
                    .per_peak
                    .iter()
                    .enumerate()
                    .map(|(k, &v)| InfidelityEntry { sample_id: id, peak: Some(k), value: Some(v), reason: None })
                    .collect(),
                (None, _) => vec![InfidelityEntry { sample_id: id, peak: None, value: r.value, reason: None }],
            })
        })
        .collect::<Result<_, _>>()?;
    let mut entries: Vec<InfidelityEntry> = per_run.into_iter().flatten().collect();
    entries.sort_by_key(|e| (e.sample_id, e.peak));
    let values: Vec<f64> = entries.iter().filter_map(|e| e.value).collect();
    let bins = (values.len() as f64).sqrt().ceil().max(1.0) as usize;
    Ok(EnsembleInfidelity { histogram: Histogram::of(&values, bins), entries })
}

/// Index of the nearest nominal frequency for each peak frequency.
pub fn assign_nominal(peaks_hz: &[f64], nominal_hz: &[f64]) -> Vec<usize> {
    peaks_hz
        .iter()
        .map(|&f| {
            (0..nominal_hz.len())
                .min_by(|&a, &b| (nominal_hz[a] - f).abs().total_cmp(&(nominal_hz[b] - f).abs()))
                .unwrap_or(0)
        })
        .collect()
}

/// True when two peaks map to the same nominal resonance, i.e. the peaks
/// can no longer be attributed one-to-one.
pub fn assignment_ambiguous(peaks_hz: &[f64], nominal_hz: &[f64]) -> bool {
    let mut seen = vec![false; nominal_hz.len()];
    for k in assign_nominal(peaks_hz, nominal_hz) {
        if std::mem::replace(&mut seen[k], true) {
            return true;
        }
    }
    false
}
