//! Circuit architectures built from physical device parameters.
//!
//! Every builder goes through a [`ParameterTable`]: one [`QubitUnitParams`]
//! per unit plus the list of capacitive coupling edges. Monte Carlo
//! perturbs that table and rebuilds, so nominal and perturbed netlists
//! share a topology by construction.
//!
//! A unit is wired in transmission: the input feed couples through `c_c`
//! into the tank, and the tank couples through a second `c_c` into the
//! output feed, so each tank resonance appears as a transmission peak at
//! the output probe. The qubit hangs off the tank through `c_g`.
//!
//! ```text
//!  in ──c_c── t ──c_c── out ── r_term ── 0
//!             │
//!            c_g        t: l_r ‖ c_r ‖ r_r to ground
//!             │
//!             q         q: l_q ‖ c_q ‖ r_q to ground
//! ```

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netlist::{ElementKind, Netlist, NetlistBuilder, NetlistError};
use crate::HBAR;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("{field} must be positive and finite, got {value}")]
    NotPositive { field: &'static str, value: f64 },
    #[error("{field} must be non-negative and finite, got {value}")]
    Negative { field: &'static str, value: f64 },
    #[error("resonator frequency {f_r} Hz must exceed qubit frequency {f_q} Hz")]
    FrequencyOrder { f_q: f64, f_r: f64 },
    #[error("{0}")]
    Arrangement(String),
    #[error(transparent)]
    Netlist(#[from] NetlistError),
}

fn positive(field: &'static str, value: f64) -> Result<(), TopologyError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(TopologyError::NotPositive { field, value })
    }
}

fn non_negative(field: &'static str, value: f64) -> Result<(), TopologyError> {
    if value >= 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(TopologyError::Negative { field, value })
    }
}

/// Physical parameters of one qubit + readout-tank unit. SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QubitUnitParams {
    pub f_q: f64,
    pub f_r: f64,
    pub t1_q: f64,
    pub c_q: f64,
    pub c_r: f64,
    /// Qubit–tank coupling.
    pub c_g: f64,
    /// Tank–feedline coupling (each side).
    pub c_c: f64,
    /// Tank quality factor setting its parallel loss.
    pub q_r: f64,
}

impl Default for QubitUnitParams {
    fn default() -> Self {
        Self {
            f_q: 6e9,
            f_r: 8e9,
            t1_q: 1e-6,
            c_q: 30e-15,
            c_r: 20e-15,
            c_g: 0.1e-15,
            c_c: 0.1e-15,
            q_r: 8000.0,
        }
    }
}

impl QubitUnitParams {
    /// Every field positive and finite.
    pub fn check_positive(&self) -> Result<(), TopologyError> {
        positive("f_q", self.f_q)?;
        positive("f_r", self.f_r)?;
        positive("t1_q", self.t1_q)?;
        positive("c_q", self.c_q)?;
        positive("c_r", self.c_r)?;
        positive("c_g", self.c_g)?;
        positive("c_c", self.c_c)?;
        positive("q_r", self.q_r)
    }

    pub fn validate(&self) -> Result<(), TopologyError> {
        self.check_positive()?;
        if self.f_r <= self.f_q {
            return Err(TopologyError::FrequencyOrder { f_q: self.f_q, f_r: self.f_r });
        }
        Ok(())
    }
}

/// Element values implied by a unit's physical parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivedElements {
    pub r_q: f64,
    pub l_q: f64,
    pub r_r: f64,
    pub l_r: f64,
}

pub fn derive_elements(p: &QubitUnitParams) -> DerivedElements {
    let w_q = 2.0 * PI * p.f_q;
    let w_r = 2.0 * PI * p.f_r;
    DerivedElements {
        r_q: p.t1_q / p.c_q,
        l_q: 1.0 / (p.c_q * w_q * w_q),
        r_r: p.q_r / (w_r * p.c_r),
        l_r: 1.0 / (p.c_r * w_r * w_r),
    }
}

/// Qubit–tank coupling `g/2π` in Hz: `½·c_g/√(c_q c_r)·√(f_q f_r)`.
pub fn coupling_strength(c_g: f64, c_q: f64, c_r: f64, f_q: f64, f_r: f64) -> f64 {
    0.5 * c_g / (c_q * c_r).sqrt() * (f_q * f_r).sqrt()
}

pub const DEFAULT_DISPERSIVE_THRESHOLD: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Dispersive {
    /// Detuning `|f_r − f_q|` in Hz.
    pub delta: f64,
    pub ratio: f64,
    pub ok: bool,
}

pub fn check_dispersive(g_over_2pi: f64, f_q: f64, f_r: f64) -> Dispersive {
    check_dispersive_with(g_over_2pi, f_q, f_r, DEFAULT_DISPERSIVE_THRESHOLD)
}

pub fn check_dispersive_with(g_over_2pi: f64, f_q: f64, f_r: f64, threshold: f64) -> Dispersive {
    let delta = (f_r - f_q).abs();
    let ratio = g_over_2pi / delta;
    Dispersive { delta, ratio, ok: ratio < threshold }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AmplitudeMode {
    /// 1 V behind `r0`.
    #[default]
    UnitVolt,
    /// Norton current source of [`drive_current`] amplitude in parallel
    /// with `r0`.
    PaperCurrent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FrequencyConvention {
    #[default]
    PlainHz,
    Angular,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DriveSpec {
    pub f_cv: f64,
    pub kappa: f64,
    pub r0: f64,
    pub amplitude_mode: AmplitudeMode,
    pub frequency_convention: FrequencyConvention,
}

impl Default for DriveSpec {
    fn default() -> Self {
        Self {
            f_cv: 3e9,
            kappa: 1e6,
            r0: 50.0,
            amplitude_mode: AmplitudeMode::UnitVolt,
            frequency_convention: FrequencyConvention::PlainHz,
        }
    }
}

impl DriveSpec {
    pub fn validate(&self) -> Result<(), TopologyError> {
        positive("f_cv", self.f_cv)?;
        positive("kappa", self.kappa)?;
        positive("r0", self.r0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DriveLevel {
    /// Amperes.
    pub i: f64,
    /// Watts.
    pub p: f64,
    pub n_photons: f64,
}

/// Drive current `√(ħ ω_cv κ / R0)`, power `R0 I²` and photon number
/// `P/(κ ħ ω_r)` for a resonator at `f_r`.
pub fn drive_current(d: &DriveSpec, f_r: f64) -> DriveLevel {
    let scale = match d.frequency_convention {
        FrequencyConvention::PlainHz => 1.0,
        FrequencyConvention::Angular => 2.0 * PI,
    };
    let (f_cv, kappa, f_r) = (scale * d.f_cv, scale * d.kappa, scale * f_r);
    let i = (HBAR * f_cv * kappa / d.r0).sqrt();
    let p = d.r0 * i * i;
    DriveLevel { i, p, n_photons: p / (kappa * HBAR * f_r) }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Arrangement {
    #[default]
    Linear,
    SquareUnit,
    SquareTiled,
}

/// Which nodes a nearest-neighbour `c_qq` joins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingSite {
    Qubit,
    Resonator,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IoLines {
    pub z0: f64,
    pub delay: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArrayConfig {
    pub arrangement: Arrangement,
    pub n_qubits: usize,
    pub f_q_base: f64,
    pub f_q_step: f64,
    pub f_r_base: f64,
    pub f_r_step: f64,
    pub c_qq: f64,
    /// `None` picks qubit nodes for linear chains and tank nodes for
    /// square arrangements.
    pub coupling_site: Option<CouplingSite>,
    pub io_lines: Option<IoLines>,
    pub termination: f64,
}

impl Default for ArrayConfig {
    fn default() -> Self {
        Self {
            arrangement: Arrangement::Linear,
            n_qubits: 4,
            f_q_base: 6e9,
            f_q_step: 0.2e9,
            f_r_base: 8e9,
            f_r_step: 0.2e9,
            c_qq: 0.1e-15,
            coupling_site: None,
            io_lines: None,
            termination: 50.0,
        }
    }
}

impl ArrayConfig {
    pub fn square_unit() -> Self {
        Self { arrangement: Arrangement::SquareUnit, ..Self::default() }
    }

    pub fn square_tiled(n_qubits: usize) -> Self {
        Self { arrangement: Arrangement::SquareTiled, n_qubits, ..Self::default() }
    }

    pub fn linear(n_qubits: usize) -> Self {
        Self { n_qubits, ..Self::default() }
    }

    pub fn site(&self) -> CouplingSite {
        self.coupling_site.unwrap_or(match self.arrangement {
            Arrangement::Linear => CouplingSite::Qubit,
            _ => CouplingSite::Resonator,
        })
    }

    pub fn validate(&self) -> Result<(), TopologyError> {
        if self.n_qubits == 0 {
            return Err(TopologyError::Arrangement("n_qubits must be positive".into()));
        }
        match self.arrangement {
            Arrangement::SquareUnit if self.n_qubits != 4 => {
                return Err(TopologyError::Arrangement(format!(
                    "square_unit needs exactly 4 qubits, got {}",
                    self.n_qubits
                )))
            }
            Arrangement::SquareTiled if self.n_qubits % 4 != 0 => {
                return Err(TopologyError::Arrangement(format!(
                    "square_tiled needs a multiple of 4 qubits, got {}",
                    self.n_qubits
                )))
            }
            _ => {}
        }
        positive("f_q_base", self.f_q_base)?;
        positive("f_r_base", self.f_r_base)?;
        if !self.f_q_step.is_finite() || !self.f_r_step.is_finite() {
            return Err(TopologyError::Arrangement("frequency steps must be finite".into()));
        }
        non_negative("c_qq", self.c_qq)?;
        positive("termination", self.termination)?;
        if let Some(l) = self.io_lines {
            positive("io_lines.z0", l.z0)?;
            positive("io_lines.delay", l.delay)?;
        }
        Ok(())
    }

    /// Nominal `(f_q, f_r)` of unit `i` (0-based).
    pub fn unit_frequencies(&self, i: usize) -> (f64, f64) {
        match self.arrangement {
            Arrangement::Linear => {
                let k = (i % 4) as f64;
                (self.f_q_base + k * self.f_q_step, self.f_r_base + k * self.f_r_step)
            }
            _ => (self.f_q_base, self.f_r_base),
        }
    }
}

/// Nearest-neighbour coupling capacitor between units `a` and `b` (0-based).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub c_qq: f64,
}

/// Everything that varies between Monte Carlo samples of one topology.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterTable {
    pub units: Vec<QubitUnitParams>,
    pub edges: Vec<Edge>,
}

/// Tiles per row of a square tiling with `tiles` tiles.
pub fn tile_columns(tiles: usize) -> usize {
    (1..=tiles).find(|c| c * c >= tiles).unwrap_or(1)
}

/// Coupling edges of a square tiling, as 0-based unit indices. Within a
/// tile units are 0 = upper-left, 1 = upper-right, 2 = lower-right,
/// 3 = lower-left, coupled in a ring.
fn square_edges(tiles: usize) -> Vec<(usize, usize)> {
    let cols = tile_columns(tiles);
    let mut edges = Vec::new();
    for t in 0..tiles {
        let u = |k: usize| 4 * t + k;
        edges.extend([(u(0), u(1)), (u(1), u(2)), (u(2), u(3)), (u(3), u(0))]);
        let right = t + 1;
        if right < tiles && right % cols != 0 {
            edges.push((u(1), 4 * right));
            edges.push((u(2), 4 * right + 3));
        }
        let below = t + cols;
        if below < tiles {
            edges.push((u(3), 4 * below));
            edges.push((u(2), 4 * below + 1));
        }
    }
    edges
}

/// Nominal parameter table: `p` supplies everything except the unit
/// frequencies, which come from the array staggering.
pub fn parameter_table(cfg: &ArrayConfig, p: &QubitUnitParams) -> Result<ParameterTable, TopologyError> {
    cfg.validate()?;
    let units: Vec<QubitUnitParams> = (0..cfg.n_qubits)
        .map(|i| {
            let (f_q, f_r) = cfg.unit_frequencies(i);
            QubitUnitParams { f_q, f_r, ..*p }
        })
        .collect();
    for u in &units {
        u.validate()?;
    }
    let pairs: Vec<(usize, usize)> = match cfg.arrangement {
        Arrangement::Linear => (1..cfg.n_qubits).map(|i| (i - 1, i)).collect(),
        _ => square_edges(cfg.n_qubits / 4),
    };
    let edges = if cfg.c_qq > 0.0 {
        pairs.into_iter().map(|(a, b)| Edge { a, b, c_qq: cfg.c_qq }).collect()
    } else {
        Vec::new()
    };
    Ok(ParameterTable { units, edges })
}

fn add_unit(
    b: &mut NetlistBuilder,
    k: usize,
    p: &QubitUnitParams,
    input: &str,
    output: &str,
) -> Result<(), TopologyError> {
    let d = derive_elements(p);
    let (t, q) = (format!("t{k}"), format!("q{k}"));
    b.capacitor(&format!("CCI{k}"), input, &t, p.c_c)?;
    b.inductor(&format!("LR{k}"), &t, "0", d.l_r)?;
    b.capacitor(&format!("CR{k}"), &t, "0", p.c_r)?;
    b.resistor(&format!("RR{k}"), &t, "0", d.r_r)?;
    b.capacitor(&format!("CG{k}"), &t, &q, p.c_g)?;
    b.inductor(&format!("LQ{k}"), &q, "0", d.l_q)?;
    b.capacitor(&format!("CQ{k}"), &q, "0", p.c_q)?;
    b.resistor(&format!("RQ{k}"), &q, "0", d.r_q)?;
    b.capacitor(&format!("CCO{k}"), &t, output, p.c_c)?;
    Ok(())
}

/// Source (per amplitude mode) feeding `node` through `r0`.
fn add_source(b: &mut NetlistBuilder, d: &DriveSpec, f_r: f64, node: &str) -> Result<(), TopologyError> {
    match d.amplitude_mode {
        AmplitudeMode::UnitVolt => {
            b.add("V1", ElementKind::AcVoltageSource { amplitude: 1.0, phase_deg: 0.0 }, &["src", "0"])?;
            b.resistor("RS1", "src", node, d.r0)?;
        }
        AmplitudeMode::PaperCurrent => {
            let amplitude = drive_current(d, f_r).i;
            b.add("I1", ElementKind::AcCurrentSource { amplitude, phase_deg: 0.0 }, &["0", node])?;
            b.resistor("RS1", node, "0", d.r0)?;
        }
    }
    Ok(())
}

fn add_line(b: &mut NetlistBuilder, label: &str, from: &str, to: &str, lines: &IoLines) -> Result<(), TopologyError> {
    b.add(label, ElementKind::LosslessLine { z0: lines.z0, delay: lines.delay }, &[from, "0", to, "0"])?;
    Ok(())
}

fn add_edges(b: &mut NetlistBuilder, table: &ParameterTable, site: CouplingSite) -> Result<(), TopologyError> {
    let prefix = match site {
        CouplingSite::Qubit => "q",
        CouplingSite::Resonator => "t",
    };
    for e in &table.edges {
        let (a, bb) = (e.a + 1, e.b + 1);
        b.capacitor(&format!("CQQ{a}_{bb}"), &format!("{prefix}{a}"), &format!("{prefix}{bb}"), e.c_qq)?;
    }
    Ok(())
}

fn check_table(cfg: &ArrayConfig, table: &ParameterTable, d: &DriveSpec) -> Result<(), TopologyError> {
    cfg.validate()?;
    d.validate()?;
    if table.units.len() != cfg.n_qubits {
        return Err(TopologyError::Arrangement(format!(
            "parameter table has {} units, config has {}",
            table.units.len(),
            cfg.n_qubits
        )));
    }
    for u in &table.units {
        u.check_positive()?;
    }
    for e in &table.edges {
        positive("c_qq", e.c_qq)?;
    }
    Ok(())
}

/// Builds the netlist for `cfg`'s arrangement from an explicit table.
pub fn build_from_table(cfg: &ArrayConfig, table: &ParameterTable, d: &DriveSpec) -> Result<Netlist, TopologyError> {
    check_table(cfg, table, d)?;
    let n = cfg.n_qubits;
    let site = cfg.site();
    let first_fr = table.units[0].f_r;
    match cfg.arrangement {
        Arrangement::Linear => {
            let mut b = NetlistBuilder::new(format!("linear array, {n} qubits"));
            let (input, output) = match cfg.io_lines {
                Some(_) => ("in", "tap"),
                None => ("in", "out1"),
            };
            match &cfg.io_lines {
                Some(l) => {
                    add_source(&mut b, d, first_fr, "line_in")?;
                    add_line(&mut b, "TIN", "line_in", input, l)?;
                }
                None => add_source(&mut b, d, first_fr, input)?,
            }
            for (i, u) in table.units.iter().enumerate() {
                add_unit(&mut b, i + 1, u, input, output)?;
            }
            add_edges(&mut b, table, site)?;
            if let Some(l) = &cfg.io_lines {
                add_line(&mut b, "TOUT", output, "out1", l)?;
            }
            b.resistor("RT1", "out1", "0", cfg.termination)?;
            b.probe("out1")?;
            Ok(b.build())
        }
        Arrangement::SquareUnit | Arrangement::SquareTiled => {
            let title = match cfg.arrangement {
                Arrangement::SquareUnit => "square unit, 4 qubits".to_string(),
                _ => format!("square tiling, {n} qubits in {} tiles", n / 4),
            };
            let mut b = NetlistBuilder::new(title);
            for (i, u) in table.units.iter().enumerate() {
                let k = i + 1;
                let (input, output) = (format!("in{k}"), format!("out{k}"));
                let probed = k <= 4;
                let tap = if probed && cfg.io_lines.is_some() { format!("tap{k}") } else { output.clone() };
                if k == 1 {
                    match &cfg.io_lines {
                        Some(l) => {
                            add_source(&mut b, d, first_fr, "line_in")?;
                            add_line(&mut b, "TIN", "line_in", &input, l)?;
                        }
                        None => add_source(&mut b, d, first_fr, &input)?,
                    }
                } else {
                    b.resistor(&format!("RI{k}"), &input, "0", cfg.termination)?;
                }
                add_unit(&mut b, k, u, &input, &tap)?;
                if let (true, Some(l)) = (probed, &cfg.io_lines) {
                    add_line(&mut b, &format!("TOUT{k}"), &tap, &output, l)?;
                }
                b.resistor(&format!("RT{k}"), &output, "0", cfg.termination)?;
            }
            add_edges(&mut b, table, site)?;
            for k in 1..=4 {
                b.probe(&format!("out{k}"))?;
            }
            Ok(b.build())
        }
    }
}

/// One qubit + tank unit driven from the input feed, probed at `out1`.
pub fn build_unit(p: &QubitUnitParams, d: &DriveSpec) -> Result<Netlist, TopologyError> {
    p.validate()?;
    let cfg = ArrayConfig {
        n_qubits: 1,
        f_q_base: p.f_q,
        f_r_base: p.f_r,
        termination: d.r0,
        ..ArrayConfig::default()
    };
    build_linear_array(&cfg, p, d)
}

pub fn build_linear_array(cfg: &ArrayConfig, p: &QubitUnitParams, d: &DriveSpec) -> Result<Netlist, TopologyError> {
    if cfg.arrangement != Arrangement::Linear {
        return Err(TopologyError::Arrangement("build_linear_array needs arrangement = linear".into()));
    }
    build_from_table(cfg, &parameter_table(cfg, p)?, d)
}

pub fn build_square_array(cfg: &ArrayConfig, p: &QubitUnitParams, d: &DriveSpec) -> Result<Netlist, TopologyError> {
    if cfg.arrangement == Arrangement::Linear {
        return Err(TopologyError::Arrangement(
            "build_square_array needs arrangement = square_unit or square_tiled".into(),
        ));
    }
    build_from_table(cfg, &parameter_table(cfg, p)?, d)
}

/// Dispatches on `cfg.arrangement`.
pub fn build_array(cfg: &ArrayConfig, p: &QubitUnitParams, d: &DriveSpec) -> Result<Netlist, TopologyError> {
    build_from_table(cfg, &parameter_table(cfg, p)?, d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netlist::{validate, ElementKind};
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn derived_elements() {
        let d = derive_elements(&QubitUnitParams::default());
        // T1/C = 1e-6 / 30e-15
        assert!(rel(d.r_q, 3.3333e7) < 1e-4);
        // 1/(C ω²) with ω = 2π·6e9: 1/(30e-15 · 1.42122e21)
        assert!(rel(d.l_q, 2.3453e-8) < 1e-4);
        let w_r = 2.0 * PI * 8e9;
        assert_eq!(d.l_r, 1.0 / (20e-15 * w_r * w_r));
        // Q = ω R C for a parallel tank.
        assert!(rel(d.r_r * w_r * 20e-15, 8000.0) < 1e-14);
        let ten_ff = QubitUnitParams { c_q: 10e-15, ..Default::default() };
        assert!(rel(1.0 / derive_elements(&ten_ff).r_q, 1e-8) < 1e-12);
    }

    #[test]
    fn coupling_and_dispersive() {
        let g = coupling_strength(0.1e-15, 30e-15, 20e-15, 6e9, 8e9);
        assert!(rel(g, 0.0141e9) < 0.005);
        assert!(rel(g, 1.41421e7) < 1e-5);
        assert_eq!(coupling_strength(0.0, 30e-15, 20e-15, 6e9, 8e9), 0.0);
        let c = check_dispersive(g, 6e9, 8e9);
        assert_eq!(c.delta, 2e9);
        assert!(rel(c.ratio, 0.00707) < 1e-3 && c.ok);
        assert!(check_dispersive(0.0, 6e9, 8e9).ok);
        let same = check_dispersive(2e9, 6e9, 8e9);
        assert_eq!(same.ratio, 1.0);
        assert!(!same.ok);
    }

    #[test]
    fn drive_levels() {
        let d = DriveSpec::default();
        let plain = drive_current(&d, 8e9);
        assert!(rel(plain.i, 0.08e-9) < 0.01);
        assert!(rel(plain.i, 7.95e-11) < 1e-3);
        assert!(rel(plain.p, 50.0 * plain.i * plain.i) < 1e-15);
        assert!(rel(plain.n_photons, 3e9 / 8e9) < 1e-12);
        let angular = drive_current(&DriveSpec { frequency_convention: FrequencyConvention::Angular, ..d }, 8e9);
        assert!(rel(angular.i, 5.0e-10) < 2e-3);
        assert!(rel(angular.i, plain.i * 2.0 * PI) < 1e-12);
        let tiny = drive_current(&DriveSpec { kappa: 1e-30, ..d }, 8e9);
        assert!(tiny.i < 1e-20);
    }

    #[test]
    fn parameter_validation() {
        let bad = QubitUnitParams { f_q: 9e9, ..Default::default() };
        assert!(matches!(bad.validate(), Err(TopologyError::FrequencyOrder { .. })));
        let bad = QubitUnitParams { c_g: 0.0, ..Default::default() };
        assert!(matches!(bad.validate(), Err(TopologyError::NotPositive { field: "c_g", .. })));
        assert!(ArrayConfig { n_qubits: 5, ..ArrayConfig::square_unit() }.validate().is_err());
        assert!(ArrayConfig::square_tiled(6).validate().is_err());
        assert!(ArrayConfig { c_qq: -1.0, ..Default::default() }.validate().is_err());
        assert!(ArrayConfig { c_qq: 0.0, ..Default::default() }.validate().is_ok());
    }

    fn count(n: &Netlist, letter: char) -> usize {
        n.elements().iter().filter(|e| e.kind.letter() == letter).count()
    }

    #[test]
    fn unit_structure() {
        let n = build_unit(&QubitUnitParams::default(), &DriveSpec::default()).unwrap();
        assert!(validate(&n).is_empty());
        assert_eq!(n.elements().len(), 12);
        assert_eq!((count(&n, 'R'), count(&n, 'L'), count(&n, 'C'), count(&n, 'V')), (4, 2, 5, 1));
        assert_eq!(n.probes()[0].name, "out1");
        let d = derive_elements(&QubitUnitParams::default());
        assert_eq!(n.element("RQ1").unwrap().kind, ElementKind::Resistor { ohms: d.r_q });
        assert_eq!(n.element("LR1").unwrap().kind, ElementKind::Inductor { henries: d.l_r });
    }

    #[test]
    fn paper_current_mode() {
        let d = DriveSpec { amplitude_mode: AmplitudeMode::PaperCurrent, ..Default::default() };
        let n = build_unit(&QubitUnitParams::default(), &d).unwrap();
        assert!(validate(&n).is_empty());
        let ElementKind::AcCurrentSource { amplitude, .. } = n.element("I1").unwrap().kind else { panic!() };
        assert!(rel(amplitude, 7.95e-11) < 1e-3);
        assert_eq!(n.elements().len(), 12);
    }

    #[test]
    fn linear_of_one_matches_unit() {
        let p = QubitUnitParams::default();
        let d = DriveSpec::default();
        let unit = build_unit(&p, &d).unwrap();
        let arr = build_linear_array(&ArrayConfig::linear(1), &p, &d).unwrap();
        let mut a: Vec<String> = unit.elements().iter().map(|e| format!("{} {:?}", e.label, e.kind)).collect();
        let mut b: Vec<String> = arr.elements().iter().map(|e| format!("{} {:?}", e.label, e.kind)).collect();
        a.sort();
        b.sort();
        assert_eq!(a, b);
        assert!(unit.same_topology(&arr));
    }

    #[test]
    fn linear_four() {
        let n = build_linear_array(&ArrayConfig::default(), &QubitUnitParams::default(), &DriveSpec::default()).unwrap();
        assert!(validate(&n).is_empty());
        // 4 × (3 tank + 3 qubit + c_g + 2 c_c) + 3 c_qq + V + RS + RT
        assert_eq!(n.elements().len(), 4 * 9 + 3 + 3);
        assert_eq!(count(&n, 'L'), 8);
        assert_eq!(count(&n, 'V') + count(&n, 'I'), 1);
        let w = |k: usize| {
            let ElementKind::Inductor { henries } = n.element(&format!("LR{k}")).unwrap().kind else { panic!() };
            1.0 / (2.0 * PI * (henries * 20e-15).sqrt())
        };
        for (k, f) in [(1, 8.0e9), (2, 8.2e9), (3, 8.4e9), (4, 8.6e9)] {
            assert!(rel(w(k), f) < 1e-12);
        }
        let lines = ArrayConfig { io_lines: Some(IoLines { z0: 50.0, delay: 10e-9 }), ..Default::default() };
        let n = build_linear_array(&lines, &QubitUnitParams::default(), &DriveSpec::default()).unwrap();
        assert!(validate(&n).is_empty());
        assert_eq!(count(&n, 'T'), 2);
    }

    #[test]
    fn linear_staggering_repeats() {
        let cfg = ArrayConfig::linear(9);
        assert_eq!(cfg.unit_frequencies(4), cfg.unit_frequencies(0));
        assert_eq!(cfg.unit_frequencies(7), (6.6e9, 8.6e9));
    }

    #[test]
    fn square_unit_structure() {
        let n = build_square_array(&ArrayConfig::square_unit(), &QubitUnitParams::default(), &DriveSpec::default())
            .unwrap();
        assert!(validate(&n).is_empty());
        let probes: Vec<String> = n.probes().into_iter().map(|p| p.name).collect();
        assert_eq!(probes, ["out1", "out2", "out3", "out4"]);
        assert_eq!(count(&n, 'V'), 1);
        let ring: Vec<&str> = n
            .elements()
            .iter()
            .filter(|e| e.label.starts_with("CQQ"))
            .map(|e| e.label.as_str())
            .collect();
        assert_eq!(ring, ["CQQ1_2", "CQQ2_3", "CQQ3_4", "CQQ4_1"]);
        // Square couplings join tanks by default.
        let e = n.element("CQQ1_2").unwrap();
        assert_eq!(n.node_name(e.terminals[0]), "t1");
        let off = ArrayConfig { c_qq: 0.0, ..ArrayConfig::square_unit() };
        let n = build_square_array(&off, &QubitUnitParams::default(), &DriveSpec::default()).unwrap();
        assert!(validate(&n).is_empty());
        assert_eq!(n.elements().iter().filter(|e| e.label.starts_with("CQQ")).count(), 0);
    }

    #[test]
    fn tiling_edges() {
        assert_eq!(tile_columns(1), 1);
        assert_eq!(tile_columns(2), 2);
        assert_eq!(tile_columns(5), 3);
        assert_eq!(tile_columns(2500), 50);
        // 2×2 tiles: 4 rings + 2 horizontal pairs ×2 + 2 vertical pairs ×2.
        let e = square_edges(4);
        assert_eq!(e.len(), 16 + 8);
        assert!(e.contains(&(1, 4)) && e.contains(&(2, 7)));
        assert!(e.contains(&(3, 8)) && e.contains(&(2, 9)));
        // Row wrap must not couple the end of one row to the next row.
        let e = square_edges(3);
        assert!(!e.contains(&(5, 8)));
    }

    #[test]
    fn tiled_build_scales() {
        let cfg = ArrayConfig::square_tiled(400);
        let n = build_square_array(&cfg, &QubitUnitParams::default(), &DriveSpec::default()).unwrap();
        assert!(validate(&n).is_empty());
        assert_eq!(n.probes().len(), 4);
        assert_eq!(n.node_count(), 1 + 1 + 4 * 400);
    }

    proptest! {
        #[test]
        fn coupling_homogeneity(c_g in 1e-18f64..1e-14, f_q in 1e9f64..1e10, f_r in 1e9f64..1e10, k in 0.1f64..10.0) {
            let g = coupling_strength(c_g, 30e-15, 20e-15, f_q, f_r);
            prop_assert!(rel(coupling_strength(k * c_g, 30e-15, 20e-15, f_q, f_r), k * g) < 1e-12);
            prop_assert!(rel(coupling_strength(c_g, 30e-15, 20e-15, k * f_q, f_r), k.sqrt() * g) < 1e-12);
            prop_assert!(rel(coupling_strength(c_g, 30e-15, 20e-15, f_q, k * f_r), k.sqrt() * g) < 1e-12);
        }

        #[test]
        fn builders_validate(n in 1usize..12, tiles in 1usize..10, lines in any::<bool>(), site in any::<bool>()) {
            let io_lines = lines.then_some(IoLines { z0: 50.0, delay: 1.37e-9 });
            let coupling_site = Some(if site { CouplingSite::Qubit } else { CouplingSite::Resonator });
            let p = QubitUnitParams::default();
            let d = DriveSpec::default();
            let lin = build_array(&ArrayConfig { n_qubits: n, io_lines, coupling_site, ..Default::default() }, &p, &d).unwrap();
            prop_assert!(validate(&lin).is_empty());
            let sq = build_array(&ArrayConfig { io_lines, coupling_site, ..ArrayConfig::square_tiled(4 * tiles) }, &p, &d).unwrap();
            prop_assert!(validate(&sq).is_empty());
        }
    }
}
