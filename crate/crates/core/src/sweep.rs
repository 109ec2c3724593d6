//! Frequency sweeps with adaptive refinement around resonances.

use std::collections::BTreeSet;
use std::f64::consts::{PI, SQRT_2};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mna::{MnaError, Solver};
use crate::netlist::Netlist;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SweepError {
    #[error("invalid sweep plan: {0}")]
    Plan(String),
    #[error("no probes")]
    NoProbes,
    #[error("solver failed at {freq_hz:e} Hz: {source}")]
    Solve {
        freq_hz: f64,
        #[source]
        source: MnaError,
    },
    #[error(transparent)]
    Setup(#[from] MnaError),
    #[error("band [{0:e}, {1:e}] Hz contains no samples")]
    EmptyBand(f64, f64),
    #[error("unknown probe `{0}`")]
    UnknownProbe(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    #[default]
    Linear,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RefineOptions {
    pub enabled: bool,
    /// Samples wanted inside each peak's half-power interval.
    pub min_points_per_fwhm: usize,
    /// Maximum number of bisection rounds.
    pub max_depth: usize,
    /// A local maximum is refined when it exceeds this multiple of the
    /// probe's median magnitude.
    pub prominence: u32,
}

impl Default for RefineOptions {
    fn default() -> Self {
        Self { enabled: true, min_points_per_fwhm: 20, max_depth: 8, prominence: 3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepPlan {
    pub f_min: f64,
    pub f_max: f64,
    pub n_coarse: usize,
    pub spacing: Spacing,
    pub refine: RefineOptions,
}

impl Default for SweepPlan {
    fn default() -> Self {
        Self { f_min: 5.5e9, f_max: 9.5e9, n_coarse: 4001, spacing: Spacing::Linear, refine: RefineOptions::default() }
    }
}

impl SweepPlan {
    /// Uniform grid without refinement.
    pub fn linear(f_min: f64, f_max: f64, n_coarse: usize) -> Self {
        Self {
            f_min,
            f_max,
            n_coarse,
            spacing: Spacing::Linear,
            refine: RefineOptions { enabled: false, ..RefineOptions::default() },
        }
    }

    pub fn with_refinement(mut self) -> Self {
        self.refine.enabled = true;
        self
    }

    pub fn without_refinement(mut self) -> Self {
        self.refine.enabled = false;
        self
    }

    pub fn validate(&self) -> Result<(), SweepError> {
        if !(self.f_min > 0.0 && self.f_min.is_finite() && self.f_max.is_finite()) {
            return Err(SweepError::Plan("frequencies must be positive and finite".into()));
        }
        if !(self.f_min < self.f_max) {
            return Err(SweepError::Plan(format!("f_min {} must be below f_max {}", self.f_min, self.f_max)));
        }
        if self.n_coarse < 2 {
            return Err(SweepError::Plan("n_coarse must be at least 2".into()));
        }
        Ok(())
    }

    /// Coarse grid, ascending, ending exactly on `f_max`.
    pub fn coarse_grid(&self) -> Vec<f64> {
        let last = (self.n_coarse - 1) as f64;
        let mut grid: Vec<f64> = (0..self.n_coarse)
            .map(|i| {
                let t = i as f64 / last;
                match self.spacing {
                    Spacing::Linear => self.f_min + (self.f_max - self.f_min) * t,
                    Spacing::Log => self.f_min * (self.f_max / self.f_min).powf(t),
                }
            })
            .collect();
        grid[0] = self.f_min;
        *grid.last_mut().unwrap() = self.f_max;
        grid.dedup();
        grid
    }
}

/// Complex response at each probe over an ascending frequency grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub freqs: Vec<f64>,
    pub probes: Vec<String>,
    /// `response[p][k]` is probe `p` at `freqs[k]`.
    pub response: Vec<Vec<Complex64>>,
    pub netlist_digest: String,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }

    pub fn probe_index(&self, probe: &str) -> Option<usize> {
        self.probes.iter().position(|p| p == probe)
    }

    pub fn magnitude(&self, probe: &str) -> Result<Vec<f64>, SweepError> {
        let p = self.probe_index(probe).ok_or_else(|| SweepError::UnknownProbe(probe.to_string()))?;
        Ok(self.response[p].iter().map(|v| v.norm()).collect())
    }

    /// Every response multiplied by `k`.
    pub fn scaled(&self, k: f64) -> Spectrum {
        Spectrum {
            response: self.response.iter().map(|r| r.iter().map(|v| v * k).collect()).collect(),
            ..self.clone()
        }
    }
}

/// Restriction of `spec` to `band` (inclusive).
pub fn band_select(spec: &Spectrum, band: (f64, f64)) -> Result<Spectrum, SweepError> {
    let (lo, hi) = band;
    let start = spec.freqs.partition_point(|&f| f < lo);
    let end = spec.freqs.partition_point(|&f| f <= hi);
    if start >= end {
        return Err(SweepError::EmptyBand(lo, hi));
    }
    Ok(Spectrum {
        freqs: spec.freqs[start..end].to_vec(),
        probes: spec.probes.clone(),
        response: spec.response.iter().map(|r| r[start..end].to_vec()).collect(),
        netlist_digest: spec.netlist_digest.clone(),
    })
}

pub fn run_sweep(netlist: &Netlist, plan: &SweepPlan) -> Result<Spectrum, SweepError> {
    let solver = Solver::new(netlist)?;
    run_sweep_with(&solver, netlist, plan)
}

/// Sweep reusing `solver`'s topology analysis; `netlist` may differ from
/// the solver's template in element values only.
pub fn run_sweep_with(solver: &Solver, netlist: &Netlist, plan: &SweepPlan) -> Result<Spectrum, SweepError> {
    plan.validate()?;
    if netlist.probe_indices().is_empty() {
        return Err(SweepError::NoProbes);
    }
    if !solver.accepts(netlist) {
        return Err(SweepError::Setup(MnaError::TopologyMismatch));
    }
    let probes = netlist.probe_indices().to_vec();
    let solve_all = |freqs: &[f64]| -> Result<Vec<Vec<Complex64>>, SweepError> {
        freqs
            .par_iter()
            .map(|&f| {
                let sol = solver
                    .solve_at_unchecked(netlist, 2.0 * PI * f)
                    .map_err(|source| SweepError::Solve { freq_hz: f, source })?;
                Ok(probes.iter().map(|&p| sol.voltage(p)).collect())
            })
            .collect()
    };

    let mut freqs = plan.coarse_grid();
    let mut rows = solve_all(&freqs)?;

    if plan.refine.enabled {
        for _ in 0..plan.refine.max_depth {
            let new = refinement_points(&freqs, &rows, probes.len(), &plan.refine);
            if new.is_empty() {
                break;
            }
            let new_rows = solve_all(&new)?;
            let (f, r) = merge(&freqs, rows, &new, new_rows);
            freqs = f;
            rows = r;
        }
    }

    let response = (0..probes.len()).map(|p| rows.iter().map(|r| r[p]).collect()).collect();
    Ok(Spectrum {
        freqs,
        probes: probes.iter().map(|&p| netlist.node_name(p).to_string()).collect(),
        response,
        netlist_digest: netlist.digest(),
    })
}

fn merge(
    freqs: &[f64],
    rows: Vec<Vec<Complex64>>,
    new: &[f64],
    new_rows: Vec<Vec<Complex64>>,
) -> (Vec<f64>, Vec<Vec<Complex64>>) {
    let mut out_f = Vec::with_capacity(freqs.len() + new.len());
    let mut out_r = Vec::with_capacity(freqs.len() + new.len());
    let mut a = freqs.iter().copied().zip(rows).peekable();
    let mut b = new.iter().copied().zip(new_rows).peekable();
    loop {
        let take_a = match (a.peek(), b.peek()) {
            (Some(x), Some(y)) => x.0 < y.0,
            (Some(_), None) => true,
            (None, Some(_)) => false,
            (None, None) => break,
        };
        let (f, r) = if take_a { a.next().unwrap() } else { b.next().unwrap() };
        out_f.push(f);
        out_r.push(r);
    }
    (out_f, out_r)
}

pub(crate) fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median of `values` weighted by the frequency span each sample covers,
/// so the result does not depend on where refinement packed samples.
pub(crate) fn weighted_median(freqs: &[f64], values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return median(values);
    }
    let width = |k: usize| {
        let lo = if k == 0 { freqs[0] } else { 0.5 * (freqs[k - 1] + freqs[k]) };
        let hi = if k + 1 == n { freqs[n - 1] } else { 0.5 * (freqs[k] + freqs[k + 1]) };
        hi - lo
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let total = freqs[n - 1] - freqs[0];
    let mut acc = 0.0;
    for k in order {
        acc += width(k);
        if acc >= 0.5 * total {
            return values[k];
        }
    }
    values[n - 1]
}

/// Indices of interior local maxima of `mag` exceeding `threshold`. A
/// plateau counts once, at its first sample; samples at either end never
/// count.
pub(crate) fn local_maxima(mag: &[f64], threshold: f64) -> Vec<usize> {
    let n = mag.len();
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && mag[j + 1] == mag[i] {
            j += 1;
        }
        let left_ok = i > 0 && mag[i - 1] < mag[i];
        let right_ok = j + 1 < n && mag[j + 1] < mag[i];
        if left_ok && right_ok && mag[i] > threshold {
            out.push(i);
        }
        i = j + 1;
    }
    out
}

/// Sample indices bracketing the half-power region around the maximum at
/// `peak`: the last sample below `mag[peak]/√2` on each side, clamped to
/// the ends.
pub(crate) fn half_power_bracket(mag: &[f64], peak: usize) -> (usize, usize) {
    let half = mag[peak] / SQRT_2;
    let mut l = peak;
    while l > 0 && mag[l] >= half {
        l -= 1;
    }
    let mut r = peak;
    while r + 1 < mag.len() && mag[r] >= half {
        r += 1;
    }
    (l, r)
}

fn refinement_points(freqs: &[f64], rows: &[Vec<Complex64>], n_probes: usize, opts: &RefineOptions) -> Vec<f64> {
    let mut intervals = BTreeSet::new();
    for p in 0..n_probes {
        let mag: Vec<f64> = rows.iter().map(|r| r[p].norm()).collect();
        let threshold = opts.prominence as f64 * weighted_median(freqs, &mag);
        for peak in local_maxima(&mag, threshold) {
            let (l, r) = half_power_bracket(&mag, peak);
            let inside = (l..=r).filter(|&k| mag[k] >= mag[peak] / SQRT_2).count();
            if inside < opts.min_points_per_fwhm {
                intervals.extend(l..r);
            }
        }
    }
    intervals
        .into_iter()
        .filter_map(|k| {
            let mid = 0.5 * (freqs[k] + freqs[k + 1]);
            (mid > freqs[k] && mid < freqs[k + 1]).then_some(mid)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netlist::parse_netlist;
    use crate::topology::{build_unit, DriveSpec, QubitUnitParams};

    #[test]
    fn grids() {
        let g = SweepPlan::linear(1.0, 2.0, 5).coarse_grid();
        assert_eq!(g, vec![1.0, 1.25, 1.5, 1.75, 2.0]);
        let plan = SweepPlan { spacing: Spacing::Log, ..SweepPlan::linear(1e6, 1e9, 4) };
        let g = plan.coarse_grid();
        assert_eq!(g[0], 1e6);
        assert_eq!(g[3], 1e9);
        assert!((g[1] / 1e7 - 1.0).abs() < 1e-12);
        assert!(SweepPlan::linear(2.0, 1.0, 5).validate().is_err());
        assert!(SweepPlan::linear(1.0, 2.0, 1).validate().is_err());
    }

    #[test]
    fn maxima_and_brackets() {
        let m = [0.0, 1.0, 3.0, 1.0, 0.5, 2.0, 2.0, 0.1];
        assert_eq!(local_maxima(&m, 0.0), vec![2, 5]);
        assert_eq!(local_maxima(&m, 2.5), vec![2]);
        assert_eq!(half_power_bracket(&m, 2), (1, 3));
        assert_eq!(median(&[3.0, 1.0, 2.0, 10.0]), 2.5);
        // End samples carry half weight.
        assert_eq!(weighted_median(&[0.0, 1.0, 2.0, 3.0, 4.0], &[5.0, 1.0, 4.0, 2.0, 3.0]), 2.0);
        // Packing samples near one value does not move the weighted median.
        let f = [0.0, 1.0, 1.01, 1.02, 1.03, 2.0, 3.0, 4.0];
        let v = [1.0, 9.0, 9.0, 9.0, 9.0, 2.0, 3.0, 4.0];
        assert_eq!(weighted_median(&f, &v), 3.0);
        assert!(local_maxima(&[1.0; 5], 0.0).is_empty());
        assert!(local_maxima(&[3.0, 2.0, 1.0, 2.0], 0.0).is_empty());
    }

    fn rc_tank() -> Netlist {
        // Parallel RLC at 1/(2π√(LC)) ≈ 5.03 MHz behind a weak coupling.
        parse_netlist("I1 0 a AC 1\nR1 a 0 1k\nL1 a 0 1u\nC1 a 0 1n\n.probe a").unwrap()
    }

    #[test]
    fn refinement_keeps_coarse_values() {
        let n = rc_tank();
        let plain = run_sweep(&n, &SweepPlan::linear(4e6, 6e6, 21)).unwrap();
        let refined = run_sweep(&n, &SweepPlan::linear(4e6, 6e6, 21).with_refinement()).unwrap();
        assert!(refined.len() > plain.len());
        for (k, f) in plain.freqs.iter().enumerate() {
            let j = refined.freqs.iter().position(|g| g == f).unwrap();
            assert_eq!(refined.response[0][j], plain.response[0][k]);
        }
        assert!(refined.freqs.windows(2).all(|w| w[0] < w[1]));
        // Enough samples inside the half-power band around the peak.
        let mag = refined.magnitude("a").unwrap();
        let peak = mag.iter().cloned().fold(0.0, f64::max);
        assert!(mag.iter().filter(|&&m| m >= peak / SQRT_2).count() >= 20);
    }

    #[test]
    fn band_selection() {
        let s = run_sweep(&rc_tank(), &SweepPlan::linear(1e6, 9e6, 9)).unwrap();
        assert_eq!(band_select(&s, (1e6, 9e6)).unwrap(), s);
        let b = band_select(&s, (2.5e6, 5e6)).unwrap();
        assert_eq!(b.freqs, vec![3e6, 4e6, 5e6]);
        assert_eq!(b.response[0].len(), 3);
        assert!(matches!(band_select(&s, (2.1e6, 2.2e6)), Err(SweepError::EmptyBand(..))));
    }

    #[test]
    fn sweep_errors() {
        let no_probe = parse_netlist("I1 0 a AC 1\nR1 a 0 1").unwrap();
        let err = run_sweep(&no_probe, &SweepPlan::linear(1.0, 2.0, 3)).unwrap_err();
        assert_eq!(err.to_string(), "no probes");
        let lc = parse_netlist("I1 0 a AC 1\nL1 a 0 1\nC1 a 0 1\n.probe a").unwrap();
        let f0 = 1.0 / (2.0 * PI);
        let err = run_sweep(&lc, &SweepPlan::linear(f0 / 2.0, f0, 2)).unwrap_err();
        assert!(matches!(err, SweepError::Solve { freq_hz, .. } if freq_hz == f0));
    }

    #[test]
    fn unit_spectrum_is_deterministic_and_finite() {
        let n = build_unit(&QubitUnitParams::default(), &DriveSpec::default()).unwrap();
        let plan = SweepPlan::linear(7.9e9, 8.1e9, 201).with_refinement();
        let a = run_sweep(&n, &plan).unwrap();
        let b = run_sweep(&n, &plan).unwrap();
        assert_eq!(a, b);
        assert!(a.response[0].iter().all(|v| v.is_finite()));
        assert_eq!(a.netlist_digest, n.digest());
    }
}
