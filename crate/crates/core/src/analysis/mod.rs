//! Peaks, linewidths and the quantities derived from them: `T1^(m)`, `Γ1`,
//! circuit fidelity, and Bloch–Redfield rate extraction.

mod fidelity;
mod rb;
mod report;

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sweep::{band_select, local_maxima, weighted_median, Spectrum, SweepError};

pub use fidelity::{fidelity, prefactor, FidelityInput, FidelityResult};
pub use rb::{rb_extract, synthesize_rb_state, RbDensityMatrix, RbRates};
pub use report::{
    all_peaks, analyze_spectrum, assign_nominal, assignment_ambiguous, ensemble_infidelity, Aggregation,
    AnalysisConfig, AnalysisReport, Bands, EnsembleInfidelity, Histogram, InfidelityEntry, InfidelitySummary,
    PeakRecord,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error(transparent)]
    Spectrum(#[from] SweepError),
    #[error("{field} must be positive and finite, got {value}")]
    NotPositive { field: &'static str, value: f64 },
    #[error("unphysical density matrix: {0}")]
    Unphysical(String),
}

pub(crate) fn positive(field: &'static str, value: f64) -> Result<(), AnalysisError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(AnalysisError::NotPositive { field, value })
    }
}

/// Level at which a peak's width is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FwhmMode {
    /// `|V| = peak/√2`, i.e. half of `|V|²`. For a Lorentzian resonance
    /// this is the linewidth `ω/Q`.
    #[default]
    HalfPower,
    /// `|V| = peak/2`; √3 times wider than half power for a Lorentzian.
    HalfVoltage,
}

impl FwhmMode {
    pub fn level(self, height: f64) -> f64 {
        match self {
            FwhmMode::HalfPower => height / SQRT_2,
            FwhmMode::HalfVoltage => height / 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Band {
    Qubit,
    Resonator,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PeakOptions {
    pub fwhm_mode: FwhmMode,
    /// A maximum counts when it exceeds this multiple of the band's
    /// (frequency-weighted) median magnitude.
    pub prominence: f64,
    /// Samples inside the width needed for `resolved`.
    pub min_points: usize,
    /// Peaks below this frequency are qubit-band, the rest resonator-band.
    pub band_boundary: f64,
}

impl Default for PeakOptions {
    fn default() -> Self {
        Self { fwhm_mode: FwhmMode::HalfPower, prominence: 3.0, min_points: 20, band_boundary: 7e9 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub probe: String,
    pub f_peak: f64,
    pub height: f64,
    pub fwhm_hz: f64,
    /// `2π·fwhm_hz`.
    pub delta_omega_p: f64,
    pub q_p: f64,
    pub t1_m: f64,
    pub gamma1: f64,
    pub band: Band,
    /// Both crossings found and at least `min_points` samples inside.
    pub resolved: bool,
    /// Several maxima shared one above-threshold region.
    pub merged: bool,
    /// Interpolated crossing frequencies, when found.
    pub f_low: Option<f64>,
    pub f_high: Option<f64>,
}

/// `T1^(m) = 1/δω_p`.
pub fn t1m_from_width(delta_omega_p: f64) -> f64 {
    1.0 / delta_omega_p
}

fn crossing(f: &[f64], mag: &[f64], inside: usize, outside: usize, level: f64) -> f64 {
    let (f0, f1, m0, m1) = (f[inside], f[outside], mag[inside], mag[outside]);
    f0 + (f1 - f0) * (m0 - level) / (m0 - m1)
}

/// Peaks of `|response|` at `probe` within `band`, lowest frequency first.
pub fn find_peaks(spec: &Spectrum, probe: &str, band: (f64, f64), opts: &PeakOptions) -> Result<Vec<Peak>, AnalysisError> {
    let sub = band_select(spec, band)?;
    let mag = sub.magnitude(probe)?;
    let f = &sub.freqs;
    let threshold = opts.prominence * weighted_median(f, &mag);
    let maxima = local_maxima(&mag, threshold);

    // Group maxima sharing one region above the highest member's level.
    let mut peaks: Vec<Peak> = Vec::new();
    let mut order = maxima.clone();
    order.sort_by(|&a, &b| mag[b].total_cmp(&mag[a]).then(a.cmp(&b)));
    let mut regions: Vec<(usize, usize, usize, usize)> = Vec::new(); // (l, r, peak, members)
    for &i in &order {
        if regions.iter().any(|&(l, r, _, _)| l <= i && i <= r) {
            let g = regions.iter_mut().find(|(l, r, _, _)| *l <= i && i <= *r).unwrap();
            g.3 += 1;
            continue;
        }
        let level = opts.fwhm_mode.level(mag[i]);
        let mut l = i;
        while l > 0 && mag[l - 1] >= level {
            l -= 1;
        }
        let mut r = i;
        while r + 1 < mag.len() && mag[r + 1] >= level {
            r += 1;
        }
        regions.push((l, r, i, 1));
    }
    regions.sort_by_key(|&(_, _, i, _)| i);

    for (l, r, i, members) in regions {
        let height = mag[i];
        let level = opts.fwhm_mode.level(height);
        let f_low = (l > 0).then(|| crossing(f, &mag, l, l - 1, level));
        let f_high = (r + 1 < mag.len()).then(|| crossing(f, &mag, r, r + 1, level));
        let fwhm_hz = match (f_low, f_high) {
            (Some(a), Some(b)) => b - a,
            (Some(a), None) => 2.0 * (f[i] - a).max(f[r] - f[i]),
            (None, Some(b)) => 2.0 * (b - f[i]).max(f[i] - f[l]),
            (None, None) => f[r] - f[l],
        };
        if !(fwhm_hz > 0.0) {
            continue;
        }
        let inside = r - l + 1;
        let delta_omega_p = 2.0 * PI * fwhm_hz;
        peaks.push(Peak {
            probe: probe.to_string(),
            f_peak: f[i],
            height,
            fwhm_hz,
            delta_omega_p,
            q_p: f[i] / fwhm_hz,
            t1_m: t1m_from_width(delta_omega_p),
            gamma1: 1.0 / t1m_from_width(delta_omega_p),
            band: if f[i] < opts.band_boundary { Band::Qubit } else { Band::Resonator },
            resolved: f_low.is_some() && f_high.is_some() && inside >= opts.min_points && members == 1,
            merged: members > 1,
            f_low,
            f_high,
        });
    }
    Ok(peaks)
}

/// Midpoint between the highest nominal qubit frequency and the lowest
/// nominal resonator frequency of an array.
pub fn band_boundary(cfg: &crate::topology::ArrayConfig) -> f64 {
    let (mut q_hi, mut r_lo) = (f64::MIN, f64::MAX);
    for i in 0..cfg.n_qubits.min(4) {
        let (q, r) = cfg.unit_frequencies(i);
        q_hi = q_hi.max(q);
        r_lo = r_lo.min(r);
    }
    0.5 * (q_hi + r_lo)
}

#[cfg(test)]
mod tests;
