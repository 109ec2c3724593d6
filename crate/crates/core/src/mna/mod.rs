//! Complex nodal admittance analysis.
//!
//! Voltage sources are folded into Norton equivalents with their series
//! resistor, so the unknowns are node voltages only and the system matrix is
//! complex symmetric. The sparsity pattern, fill-reducing ordering and
//! elimination tree are computed once per topology ([`Solver::new`]) and
//! shared by every frequency and every Monte Carlo sample with that
//! topology.

mod ldl;
mod ordering;

use std::sync::Arc;

use num_complex::Complex64;
use thiserror::Error;

use crate::netlist::{self, Diagnostic, ElementKind, Netlist};
use crate::netlist::validate::{norton_pair, NortonPair};

pub use ordering::minimum_degree;

/// Default transmission-line attenuation (nepers per pass).
pub const DEFAULT_LINE_LOSS: f64 = 1e-9;

/// Below this `|sin ωτ|` an unregularized line is rejected.
const LINE_SINGULAR_FLOOR: f64 = 1e-12;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MnaError {
    #[error("netlist is not solvable: {}", join(.0))]
    Invalid(Vec<Diagnostic>),
    #[error("angular frequency must be positive and finite, got {0}")]
    BadOmega(f64),
    #[error("line `{label}` is singular at ω = {omega:e} rad/s and regularization is off")]
    SingularLine { label: String, omega: f64 },
    #[error("admittance matrix is numerically singular at ω = {omega:e} rad/s (pivot {pivot})")]
    Singular { omega: f64, pivot: usize },
    #[error("relative residual {residual:e} above tolerance at ω = {omega:e} rad/s")]
    Residual { omega: f64, residual: f64 },
    #[error("netlist topology differs from the one this solver was built for")]
    TopologyMismatch,
}

fn join(d: &[Diagnostic]) -> String {
    d.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Attenuation `ε` added to every lossless line's propagation constant,
    /// `γ = ε + jωτ`. Zero gives the exact lossless two-port.
    pub line_loss: f64,
    /// Relative residual bound `‖b − Yv‖ ≤ tol·‖b‖`.
    pub residual_tol: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { line_loss: DEFAULT_LINE_LOSS, residual_tol: 1e-10 }
    }
}

/// Which admittance an entry of a stamp takes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Part {
    Self_,
    Transfer,
    /// Input admittance of a line whose far port is open.
    Open,
}

#[derive(Debug, Clone, Copy)]
struct Stamp {
    slot: usize,
    element: usize,
    part: Part,
    sign: f64,
}

#[derive(Debug, Clone, Copy)]
struct Injection {
    unknown: usize,
    element: usize,
    /// Multiplies the source phasor (divided by the series resistance for
    /// Norton sources).
    sign: f64,
}

/// Line whose far port has a terminal touching nothing else. That node is
/// eliminated and the line stamps its open-circuit input admittance, which
/// stays well conditioned where the two-port admittances diverge.
#[derive(Debug, Clone, Copy)]
struct OpenLine {
    element: usize,
    /// Terminal position (0..4) of the eliminated node.
    dangling: usize,
}

impl OpenLine {
    fn driven_port(&self) -> usize {
        1 - self.dangling / 2
    }
}

/// Grounded line with a private midpoint unknown. Near `ωτ ≡ 0 (mod π)`
/// the line is stamped as two exact cascaded segments whose split keeps
/// both away from their own singular points; elsewhere it is stamped
/// directly and the midpoint row is an identity placeholder.
#[derive(Debug, Clone, Copy)]
struct SplitLine {
    element: usize,
    /// Slots of (a,a), (b,b), (a,b), (a,m), (m,b), (m,m).
    slots: [usize; 6],
}

/// Below this `|sin ωτ|` a split line is stamped as two segments.
const SPLIT_BELOW: f64 = 0.5;

/// Fraction of a line of electrical length `theta ≥ π` assigned to the
/// first segment so that neither segment's length is within `π/4` of a
/// multiple of `π`.
fn split_fraction(theta: f64) -> f64 {
    use std::f64::consts::PI;
    let turns = (theta / PI).floor();
    let r = theta - turns * PI;
    let x = if r >= PI / 2.0 { r / 2.0 } else { r / 2.0 + PI / 2.0 };
    let max_m = if x > r { turns - 1.0 } else { turns };
    let m = ((theta / 2.0 - x) / PI).round().clamp(0.0, max_m);
    (m * PI + x) / theta
}

/// Topology-only analysis shared by all systems with the same netlist shape.
#[derive(Debug)]
pub struct Structure {
    template: Netlist,
    /// Permuted unknown index per netlist node.
    unknown: Vec<Option<usize>>,
    norton: Vec<NortonPair>,
    open_lines: Vec<OpenLine>,
    split_lines: Vec<SplitLine>,
    n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    stamps: Vec<Stamp>,
    injections: Vec<Injection>,
    /// Norton series resistor per voltage source element.
    series: Vec<Option<usize>>,
    symbolic: ldl::Symbolic,
}

impl Structure {
    fn analyze(netlist: &Netlist) -> Result<Self, MnaError> {
        let diagnostics: Vec<Diagnostic> = netlist::validate(netlist)
            .into_iter()
            .filter(|d| !matches!(d, Diagnostic::BadProbe(_)))
            .collect();
        if !diagnostics.is_empty() {
            return Err(MnaError::Invalid(diagnostics));
        }
        let elements = netlist.elements();
        let incidence = netlist.incidence();
        let mut series = vec![None; elements.len()];
        let mut norton = Vec::new();
        let mut remap: Vec<usize> = (0..netlist.node_count()).collect();
        let mut internal = vec![false; netlist.node_count()];
        for (i, e) in elements.iter().enumerate() {
            if let ElementKind::AcVoltageSource { .. } = e.kind {
                let pair = norton_pair(netlist, &incidence, i)
                    .ok_or_else(|| MnaError::Invalid(vec![Diagnostic::UnbackedVoltageSource(e.label.clone())]))?;
                series[i] = Some(pair.resistor);
                internal[pair.internal] = true;
                remap[pair.internal] = pair.reference;
                norton.push(pair);
            }
        }
        let mut open_lines = Vec::new();
        for (i, e) in elements.iter().enumerate() {
            if !matches!(e.kind, ElementKind::LosslessLine { .. }) {
                continue;
            }
            let t = &e.terminals;
            let lone = |k: usize| t[k] != 0 && !internal[t[k]] && incidence[t[k]].len() == 1;
            let Some(dangling) = (0..4).find(|&k| lone(k)) else { continue };
            let port = dangling / 2;
            let partner = dangling ^ 1;
            let driven = 1 - port;
            if lone(partner) || lone(2 * driven) || lone(2 * driven + 1) {
                continue;
            }
            internal[t[dangling]] = true;
            open_lines.push(OpenLine { element: i, dangling });
        }

        // Unknowns in natural order, then the fill-reducing permutation.
        let mut natural = vec![None; netlist.node_count()];
        let mut count = 0;
        for node in 1..netlist.node_count() {
            if !internal[node] {
                natural[node] = Some(count);
                count += 1;
            }
        }
        let unknown_nodes = |e: &netlist::Element| -> Vec<Option<usize>> {
            e.terminals.iter().map(|&t| natural[remap[t]]).collect()
        };
        // (element, natural midpoint index) for lines eligible for splitting.
        let mut midpoints = Vec::new();
        for (i, e) in elements.iter().enumerate() {
            let t = &e.terminals;
            if matches!(e.kind, ElementKind::LosslessLine { .. })
                && !open_lines.iter().any(|o| o.element == i)
                && t[1] == 0
                && t[3] == 0
                && t[0] != t[2]
                && natural[remap[t[0]]].is_some()
                && natural[remap[t[2]]].is_some()
            {
                midpoints.push((i, count));
                count += 1;
            }
        }
        let mut adjacency = vec![Vec::new(); count];
        for e in elements {
            if e.kind.is_source() {
                continue;
            }
            let u = unknown_nodes(e);
            for a in u.iter().flatten() {
                for b in u.iter().flatten() {
                    if a != b {
                        adjacency[*a].push(*b);
                    }
                }
            }
        }
        for &(i, m) in &midpoints {
            let u = unknown_nodes(&elements[i]);
            for end in [u[0].unwrap(), u[2].unwrap()] {
                adjacency[end].push(m);
                adjacency[m].push(end);
            }
        }
        let perm = ordering::minimum_degree(&adjacency);
        let mut inverse = vec![0; count];
        for (new, &old) in perm.iter().enumerate() {
            inverse[old] = new;
        }
        let unknown: Vec<Option<usize>> = (0..netlist.node_count())
            .map(|node| natural[remap[node]].map(|u| inverse[u]))
            .collect();

        // Upper-triangle pattern, column by column.
        let mut columns: Vec<Vec<usize>> = (0..count).map(|k| vec![k]).collect();
        for (a, nbrs) in adjacency.iter().enumerate() {
            for &b in nbrs {
                let (i, j) = (inverse[a], inverse[b]);
                if i < j {
                    columns[j].push(i);
                }
            }
        }
        let mut col_ptr = Vec::with_capacity(count + 1);
        let mut row_idx = Vec::new();
        col_ptr.push(0);
        for col in &mut columns {
            col.sort_unstable();
            col.dedup();
            row_idx.extend_from_slice(col);
            col_ptr.push(row_idx.len());
        }
        let slot = |i: usize, j: usize| -> usize {
            let (r, c) = if i <= j { (i, j) } else { (j, i) };
            let rows = &row_idx[col_ptr[c]..col_ptr[c + 1]];
            col_ptr[c] + rows.binary_search(&r).expect("pattern covers every stamp")
        };

        let mut stamps = Vec::new();
        let mut injections = Vec::new();
        let split_lines: Vec<SplitLine> = midpoints
            .iter()
            .map(|&(ei, m)| {
                let t = &elements[ei].terminals;
                let (a, b, m) = (unknown[t[0]].unwrap(), unknown[t[2]].unwrap(), inverse[m]);
                SplitLine {
                    element: ei,
                    slots: [slot(a, a), slot(b, b), slot(a, b), slot(a, m), slot(m, b), slot(m, m)],
                }
            })
            .collect();
        for (ei, e) in elements.iter().enumerate() {
            let terms: Vec<Option<usize>> = e.terminals.iter().map(|&t| unknown[t]).collect();
            if split_lines.iter().any(|l| l.element == ei) {
                continue;
            }
            match e.kind {
                ElementKind::AcCurrentSource { .. } => {
                    // SPICE convention: current flows n+ -> source -> n-.
                    if let Some(u) = terms[0] {
                        injections.push(Injection { unknown: u, element: ei, sign: -1.0 });
                    }
                    if let Some(u) = terms[1] {
                        injections.push(Injection { unknown: u, element: ei, sign: 1.0 });
                    }
                }
                ElementKind::AcVoltageSource { .. } => {
                    let pair = norton.iter().find(|p| p.source == ei).unwrap();
                    let s = if pair.internal_is_plus { 1.0 } else { -1.0 };
                    if let Some(u) = unknown[pair.outer] {
                        injections.push(Injection { unknown: u, element: ei, sign: s });
                    }
                    if let Some(u) = unknown[pair.reference] {
                        injections.push(Injection { unknown: u, element: ei, sign: -s });
                    }
                }
                ElementKind::LosslessLine { .. } if open_lines.iter().any(|o| o.element == ei) => {
                    let open = open_lines.iter().find(|o| o.element == ei).unwrap();
                    let p = open.driven_port();
                    let (a, b) = (terms[2 * p], terms[2 * p + 1]);
                    if let Some(i) = a {
                        stamps.push(Stamp { slot: slot(i, i), element: ei, part: Part::Open, sign: 1.0 });
                    }
                    if let Some(j) = b {
                        stamps.push(Stamp { slot: slot(j, j), element: ei, part: Part::Open, sign: 1.0 });
                    }
                    if let (Some(i), Some(j)) = (a, b) {
                        stamps.push(Stamp { slot: slot(i, j), element: ei, part: Part::Open, sign: -1.0 });
                    }
                }
                ElementKind::LosslessLine { .. } => {
                    // Port p has terminals (2p, 2p+1) with signs (+, -).
                    for a in 0..4 {
                        for b in 0..4 {
                            let (Some(i), Some(j)) = (terms[a], terms[b]) else { continue };
                            if i > j {
                                continue;
                            }
                            let part = if a / 2 == b / 2 { Part::Self_ } else { Part::Transfer };
                            let sign = if a % 2 == b % 2 { 1.0 } else { -1.0 };
                            stamps.push(Stamp { slot: slot(i, j), element: ei, part, sign });
                        }
                    }
                }
                _ => {
                    let (a, b) = (terms[0], terms[1]);
                    if a.is_some() && a == b {
                        continue;
                    }
                    if let Some(i) = a {
                        stamps.push(Stamp { slot: slot(i, i), element: ei, part: Part::Self_, sign: 1.0 });
                    }
                    if let Some(j) = b {
                        stamps.push(Stamp { slot: slot(j, j), element: ei, part: Part::Self_, sign: 1.0 });
                    }
                    if let (Some(i), Some(j)) = (a, b) {
                        stamps.push(Stamp { slot: slot(i, j), element: ei, part: Part::Self_, sign: -1.0 });
                    }
                }
            }
        }

        let symbolic = ldl::Symbolic::analyze(count, &col_ptr, &row_idx);
        Ok(Self {
            template: netlist.clone(),
            unknown,
            norton,
            open_lines,
            split_lines,
            n: count,
            col_ptr,
            row_idx,
            stamps,
            injections,
            series,
            symbolic,
        })
    }

    /// Number of unknowns: non-ground nodes, minus eliminated source and
    /// open-line nodes, plus one midpoint per grounded line.
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Nonzeros in the strict lower factor; a fill-in measure.
    pub fn factor_nnz(&self) -> usize {
        self.symbolic.factor_nnz()
    }

    fn matvec(&self, values: &[Complex64], x: &[Complex64], out: &mut [Complex64]) {
        out.iter_mut().for_each(|o| *o = ZERO);
        for c in 0..self.n {
            for p in self.col_ptr[c]..self.col_ptr[c + 1] {
                let r = self.row_idx[p];
                out[r] += values[p] * x[c];
                if r != c {
                    out[c] += values[p] * x[r];
                }
            }
        }
    }
}

/// Admittances of one element at one frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Admittance {
    own: Complex64,
    transfer: Complex64,
    /// Lines only: input admittance with the far port open.
    open: Complex64,
    /// Lines only: far-port over near-port voltage with the far port open.
    open_gain: Complex64,
}

impl Admittance {
    fn simple(y: Complex64) -> Self {
        Self { own: y, transfer: ZERO, open: ZERO, open_gain: ZERO }
    }
}

/// Self and transfer admittance of a line segment of electrical length
/// `theta` and attenuation `loss`.
fn line_admittance(z0: f64, theta: f64, loss: f64) -> (Complex64, Complex64) {
    let j = Complex64::i();
    if loss == 0.0 {
        let (s, c) = theta.sin_cos();
        (-j * (c / s / z0), j / (z0 * s))
    } else {
        let sinh = Complex64::new(loss, theta).sinh();
        (Complex64::new(loss, theta).cosh() / sinh / z0, -1.0 / (sinh * z0))
    }
}

/// Admittances of every element at `omega`. Voltage sources carry none;
/// their series resistor stays in place, remapped onto the source's
/// reference node.
fn element_admittances(netlist: &Netlist, omega: f64, line_loss: f64) -> Result<Vec<Admittance>, MnaError> {
    let j = Complex64::i();
    netlist
        .elements()
        .iter()
        .map(|e| {
            let y = match e.kind {
                ElementKind::Resistor { ohms } => Admittance::simple(Complex64::new(1.0 / ohms, 0.0)),
                ElementKind::Capacitor { farads } => Admittance::simple(j * (omega * farads)),
                ElementKind::Inductor { henries } => Admittance::simple(-j / (omega * henries)),
                ElementKind::LosslessLine { z0, delay } => {
                    let theta = omega * delay;
                    if line_loss == 0.0 {
                        let (s, c) = theta.sin_cos();
                        if s.abs() < LINE_SINGULAR_FLOOR {
                            return Err(MnaError::SingularLine { label: e.label.clone(), omega });
                        }
                        let (own, transfer) = line_admittance(z0, theta, 0.0);
                        Admittance {
                            own,
                            transfer,
                            open: j * (s / c / z0),
                            open_gain: Complex64::new(1.0 / c, 0.0),
                        }
                    } else {
                        let gamma = Complex64::new(line_loss, theta);
                        let (sinh, cosh) = (gamma.sinh(), gamma.cosh());
                        let (own, transfer) = line_admittance(z0, theta, line_loss);
                        Admittance {
                            own,
                            transfer,
                            open: sinh / cosh / z0,
                            open_gain: 1.0 / cosh,
                        }
                    }
                }
                ElementKind::AcVoltageSource { .. } | ElementKind::AcCurrentSource { .. } => Admittance::simple(ZERO),
            };
            Ok(y)
        })
        .collect()
}

/// Complex nodal system `Y v = i` at one angular frequency.
#[derive(Debug, Clone)]
pub struct AcSystem {
    structure: Arc<Structure>,
    /// Upper triangle of `Y` in permuted compressed-column order.
    values: Vec<Complex64>,
    rhs: Vec<Complex64>,
    pub omega: f64,
}

impl AcSystem {
    pub fn dim(&self) -> usize {
        self.structure.n
    }

    /// `Y[a][b]` addressed by netlist node index; zero for ground or
    /// entries outside the pattern.
    pub fn entry(&self, a: usize, b: usize) -> Complex64 {
        let s = &self.structure;
        let (Some(i), Some(j)) = (s.unknown[a], s.unknown[b]) else { return ZERO };
        let (r, c) = if i <= j { (i, j) } else { (j, i) };
        let rows = &s.row_idx[s.col_ptr[c]..s.col_ptr[c + 1]];
        match rows.binary_search(&r) {
            Ok(p) => self.values[s.col_ptr[c] + p],
            Err(_) => ZERO,
        }
    }

    /// Source current injected at a netlist node.
    pub fn injection(&self, node: usize) -> Complex64 {
        self.structure.unknown[node].map_or(ZERO, |u| self.rhs[u])
    }

    /// Iterates the stored upper-triangle entries as `(row, col, value)` in
    /// solver (permuted) numbering.
    pub fn upper_entries(&self) -> impl Iterator<Item = (usize, usize, Complex64)> + '_ {
        let s = &self.structure;
        (0..s.n).flat_map(move |c| {
            (s.col_ptr[c]..s.col_ptr[c + 1]).map(move |p| (s.row_idx[p], c, self.values[p]))
        })
    }
}

/// Node voltages at one frequency; ground is index 0 and always zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub v: Vec<Complex64>,
    pub omega: f64,
}

impl Solution {
    pub fn voltage(&self, node: usize) -> Complex64 {
        self.v[node]
    }
}

/// Topology analysis plus options, reusable across frequencies and samples.
#[derive(Debug, Clone)]
pub struct Solver {
    structure: Arc<Structure>,
    options: SolveOptions,
}

impl Solver {
    pub fn new(netlist: &Netlist) -> Result<Self, MnaError> {
        Self::with_options(netlist, SolveOptions::default())
    }

    pub fn with_options(netlist: &Netlist, options: SolveOptions) -> Result<Self, MnaError> {
        Ok(Self { structure: Arc::new(Structure::analyze(netlist)?), options })
    }

    pub fn options(&self) -> &SolveOptions {
        &self.options
    }

    pub fn structure(&self) -> &Structure {
        &self.structure
    }

    /// True when `netlist` differs from the analysed one in values only.
    pub fn accepts(&self, netlist: &Netlist) -> bool {
        self.structure.template.same_topology(netlist)
    }

    pub fn stamp(&self, netlist: &Netlist, omega: f64) -> Result<AcSystem, MnaError> {
        if !self.accepts(netlist) {
            return Err(MnaError::TopologyMismatch);
        }
        self.stamp_unchecked(netlist, omega)
    }

    /// Stamp without re-checking the topology; callers must have checked
    /// [`Solver::accepts`] for this netlist.
    pub(crate) fn stamp_unchecked(&self, netlist: &Netlist, omega: f64) -> Result<AcSystem, MnaError> {
        if !(omega > 0.0 && omega.is_finite()) {
            return Err(MnaError::BadOmega(omega));
        }
        self.assemble(netlist, omega)
    }

    fn assemble(&self, netlist: &Netlist, omega: f64) -> Result<AcSystem, MnaError> {
        let s = &self.structure;
        let y = element_admittances(netlist, omega, self.options.line_loss)?;
        let mut values = vec![ZERO; s.row_idx.len()];
        for st in &s.stamps {
            let a = &y[st.element];
            let v = match st.part {
                Part::Self_ => a.own,
                Part::Transfer => a.transfer,
                Part::Open => {
                    if !a.open.is_finite() {
                        return Err(MnaError::SingularLine { label: netlist.elements()[st.element].label.clone(), omega });
                    }
                    a.open
                }
            };
            values[st.slot] += v * st.sign;
        }
        for line in &s.split_lines {
            let ElementKind::LosslessLine { z0, delay } = netlist.elements()[line.element].kind else {
                unreachable!()
            };
            let [aa, bb, ab, am, mb, mm] = line.slots;
            let theta = omega * delay;
            if theta < std::f64::consts::PI || theta.sin().abs() >= SPLIT_BELOW {
                let a = &y[line.element];
                values[aa] += a.own;
                values[bb] += a.own;
                values[ab] += a.transfer;
                values[mm] += Complex64::new(1.0, 0.0);
            } else {
                let alpha = split_fraction(theta);
                let first = line_admittance(z0, alpha * theta, alpha * self.options.line_loss);
                let second = line_admittance(z0, (1.0 - alpha) * theta, (1.0 - alpha) * self.options.line_loss);
                values[aa] += first.0;
                values[mm] += first.0 + second.0;
                values[bb] += second.0;
                values[am] += first.1;
                values[mb] += second.1;
            }
        }
        let mut rhs = vec![ZERO; s.n];
        let elements = netlist.elements();
        for inj in &s.injections {
            let e = &elements[inj.element];
            let mut phasor = e.kind.phasor().unwrap();
            if let Some(r) = s.series[inj.element] {
                if let ElementKind::Resistor { ohms } = elements[r].kind {
                    phasor /= ohms;
                }
            }
            rhs[inj.unknown] += phasor * inj.sign;
        }
        Ok(AcSystem { structure: self.structure.clone(), values, rhs, omega })
    }

    pub fn solve(&self, sys: &AcSystem) -> Result<Solution, MnaError> {
        solve_with(sys, &self.options, None)
    }

    /// Stamp and solve in one step, reconstructing source-internal nodes
    /// from `netlist`.
    pub fn solve_at(&self, netlist: &Netlist, omega: f64) -> Result<Solution, MnaError> {
        let sys = self.stamp(netlist, omega)?;
        solve_with(&sys, &self.options, Some(netlist))
    }

    pub(crate) fn solve_at_unchecked(&self, netlist: &Netlist, omega: f64) -> Result<Solution, MnaError> {
        let sys = self.stamp_unchecked(netlist, omega)?;
        solve_with(&sys, &self.options, Some(netlist))
    }
}

/// Builds the nodal system for `netlist` at `omega` (rad/s) with default
/// options. For repeated use build a [`Solver`] once instead.
pub fn stamp(netlist: &Netlist, omega: f64) -> Result<AcSystem, MnaError> {
    Solver::new(netlist)?.stamp_unchecked(netlist, omega)
}

/// Solves a stamped system with default options.
pub fn solve(sys: &AcSystem) -> Result<Solution, MnaError> {
    solve_with(sys, &SolveOptions::default(), None)
}

fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

fn solve_with(sys: &AcSystem, options: &SolveOptions, netlist: Option<&Netlist>) -> Result<Solution, MnaError> {
    let s = &sys.structure;
    let omega = sys.omega;
    let factor = ldl::factor(&s.symbolic, &s.col_ptr, &s.row_idx, &sys.values)
        .map_err(|pivot| MnaError::Singular { omega, pivot })?;

    let mut x = sys.rhs.clone();
    factor.solve_in_place(&s.symbolic, &mut x);

    let b_norm = norm(&sys.rhs);
    let mut residual = vec![ZERO; s.n];
    let relative = |x: &[Complex64], residual: &mut Vec<Complex64>| {
        s.matvec(&sys.values, x, residual);
        for (r, b) in residual.iter_mut().zip(&sys.rhs) {
            *r = *b - *r;
        }
        if b_norm == 0.0 { norm(residual) } else { norm(residual) / b_norm }
    };
    let mut rel = relative(&x, &mut residual);
    if !(rel <= options.residual_tol) {
        // One step of iterative refinement.
        let mut dx = residual.clone();
        factor.solve_in_place(&s.symbolic, &mut dx);
        for (xi, d) in x.iter_mut().zip(&dx) {
            *xi += *d;
        }
        rel = relative(&x, &mut residual);
        if !(rel <= options.residual_tol) {
            return Err(MnaError::Residual { omega, residual: rel });
        }
    }

    let template = netlist.unwrap_or(&s.template);
    let mut v = vec![ZERO; s.unknown.len()];
    // Midpoint unknowns of split lines are not netlist nodes.
    for (node, u) in s.unknown.iter().enumerate() {
        if let Some(u) = u {
            v[node] = x[*u];
        }
    }
    for pair in &s.norton {
        let phasor = template.elements()[pair.source].kind.phasor().unwrap();
        let sign = if pair.internal_is_plus { 1.0 } else { -1.0 };
        v[pair.internal] = v[pair.reference] + phasor * sign;
    }
    if !s.open_lines.is_empty() {
        let y = element_admittances(template, omega, options.line_loss)?;
        for open in &s.open_lines {
            let t = &template.elements()[open.element].terminals;
            let p = open.driven_port();
            let far = (v[t[2 * p]] - v[t[2 * p + 1]]) * y[open.element].open_gain;
            let d = open.dangling;
            v[t[d]] = if d % 2 == 0 { v[t[d + 1]] + far } else { v[t[d - 1]] - far };
        }
    }
    Ok(Solution { v, omega })
}

/// Time-average power bookkeeping for one solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerBalance {
    /// Power delivered by all sources.
    pub delivered: f64,
    /// Power dissipated in resistors.
    pub resistive: f64,
    /// Power absorbed by (regularized) transmission lines.
    pub lines: f64,
}

/// Energy bookkeeping used to check passivity: for a lossless-line-free
/// circuit `delivered == resistive`.
pub fn power_balance(netlist: &Netlist, solution: &Solution, line_loss: f64) -> Result<PowerBalance, MnaError> {
    let y = element_admittances(netlist, solution.omega, line_loss)?;
    let v = &solution.v;
    let mut balance = PowerBalance { delivered: 0.0, resistive: 0.0, lines: 0.0 };
    let incidence = netlist.incidence();
    for (i, e) in netlist.elements().iter().enumerate() {
        let t = &e.terminals;
        match e.kind {
            ElementKind::Resistor { ohms } => {
                balance.resistive += 0.5 * (v[t[0]] - v[t[1]]).norm_sqr() / ohms;
            }
            ElementKind::LosslessLine { .. } => {
                let Admittance { own, transfer, .. } = y[i];
                let v1 = v[t[0]] - v[t[1]];
                let v2 = v[t[2]] - v[t[3]];
                let i1 = own * v1 + transfer * v2;
                let i2 = transfer * v1 + own * v2;
                balance.lines += 0.5 * (v1 * i1.conj() + v2 * i2.conj()).re;
            }
            ElementKind::AcCurrentSource { .. } => {
                // Current leaves the source at n-.
                let current = e.kind.phasor().unwrap();
                balance.delivered += 0.5 * ((v[t[1]] - v[t[0]]) * current.conj()).re;
            }
            ElementKind::AcVoltageSource { .. } => {
                let pair = norton_pair(netlist, &incidence, i).ok_or_else(|| {
                    MnaError::Invalid(vec![Diagnostic::UnbackedVoltageSource(e.label.clone())])
                })?;
                let ElementKind::Resistor { ohms } = netlist.elements()[pair.resistor].kind else {
                    unreachable!()
                };
                // Current out of the internal node through the series resistor.
                let current = (v[pair.internal] - v[pair.outer]) / ohms;
                let sign = if pair.internal_is_plus { 1.0 } else { -1.0 };
                let phasor = e.kind.phasor().unwrap();
                balance.delivered += 0.5 * (phasor * (current * sign).conj()).re;
            }
            _ => {}
        }
    }
    Ok(balance)
}
