//! Circuit data model plus the native `.cir` reader/writer and an LTspice
//! exporter.
//!
//! A [`Netlist`] is built once (by [`NetlistBuilder`] or [`parse_netlist`])
//! and is immutable afterwards. Nodes are numbered in order of first
//! appearance with ground (`0`) fixed at index 0, so a netlist emitted in the
//! native dialect parses back to an identical value.

mod emit;
mod parse;
pub(crate) mod validate;

use std::collections::{HashMap, HashSet};
use std::fmt;

use thiserror::Error;

pub use emit::{emit_netlist, AcDirective, Dialect};
pub use parse::{parse_netlist, ParseError};
pub use validate::{validate, Diagnostic};

/// Name of the reference node.
pub const GROUND: &str = "0";

/// A named circuit node. Index 0 is always ground.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NodeId {
    pub name: String,
    pub index: usize,
}

impl NodeId {
    pub fn is_ground(&self) -> bool {
        self.index == 0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ElementKind {
    Resistor { ohms: f64 },
    Capacitor { farads: f64 },
    Inductor { henries: f64 },
    /// Ideal TEM line; terminals are port1+, port1-, port2+, port2-.
    LosslessLine { z0: f64, delay: f64 },
    /// Phase is kept in degrees, the unit the netlist text uses, so text
    /// round trips stay exact. See [`ElementKind::phasor`].
    AcVoltageSource { amplitude: f64, phase_deg: f64 },
    AcCurrentSource { amplitude: f64, phase_deg: f64 },
}

impl ElementKind {
    /// SPICE card letter.
    pub fn letter(&self) -> char {
        match self {
            ElementKind::Resistor { .. } => 'R',
            ElementKind::Capacitor { .. } => 'C',
            ElementKind::Inductor { .. } => 'L',
            ElementKind::LosslessLine { .. } => 'T',
            ElementKind::AcVoltageSource { .. } => 'V',
            ElementKind::AcCurrentSource { .. } => 'I',
        }
    }

    pub fn terminal_count(&self) -> usize {
        match self {
            ElementKind::LosslessLine { .. } => 4,
            _ => 2,
        }
    }

    pub fn is_source(&self) -> bool {
        matches!(
            self,
            ElementKind::AcVoltageSource { .. } | ElementKind::AcCurrentSource { .. }
        )
    }

    /// Complex source amplitude `A·e^{jφ}`; `None` for passive elements.
    pub fn phasor(&self) -> Option<num_complex::Complex64> {
        match *self {
            ElementKind::AcVoltageSource { amplitude, phase_deg }
            | ElementKind::AcCurrentSource { amplitude, phase_deg } => Some(
                num_complex::Complex64::from_polar(amplitude, phase_deg.to_radians()),
            ),
            _ => None,
        }
    }

    fn check(&self, label: &str) -> Result<(), NetlistError> {
        let positive = |field: &'static str, value: f64| {
            if value > 0.0 && value.is_finite() {
                Ok(())
            } else {
                Err(NetlistError::NonPositive { label: label.to_string(), field, value })
            }
        };
        match *self {
            ElementKind::Resistor { ohms } => positive("resistance", ohms),
            ElementKind::Capacitor { farads } => positive("capacitance", farads),
            ElementKind::Inductor { henries } => positive("inductance", henries),
            ElementKind::LosslessLine { z0, delay } => {
                positive("z0", z0)?;
                positive("delay", delay)
            }
            ElementKind::AcVoltageSource { amplitude, phase_deg }
            | ElementKind::AcCurrentSource { amplitude, phase_deg } => {
                positive("amplitude", amplitude)?;
                if phase_deg.is_finite() {
                    Ok(())
                } else {
                    Err(NetlistError::NonFinitePhase(label.to_string()))
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Element {
    pub label: String,
    pub kind: ElementKind,
    /// Node indices into the owning netlist.
    pub terminals: Vec<usize>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetlistError {
    #[error("duplicate element label `{0}`")]
    DuplicateLabel(String),
    #[error("element `{label}`: {field} must be positive and finite, got {value}")]
    NonPositive { label: String, field: &'static str, value: f64 },
    #[error("element `{0}`: phase must be finite")]
    NonFinitePhase(String),
    #[error("element `{label}` needs {expected} terminals, got {got}")]
    TerminalCount { label: String, expected: usize, got: usize },
    #[error("element label `{label}` must start with `{letter}`")]
    LabelKind { label: String, letter: char },
    #[error("probe node `{0}` is not defined")]
    UndefinedProbe(String),
    #[error("node name must be non-empty and free of whitespace")]
    BadNodeName,
}

/// Element-level circuit graph with named nodes and output probes.
#[derive(Debug, Clone)]
pub struct Netlist {
    title: String,
    nodes: Vec<String>,
    node_index: HashMap<String, usize>,
    elements: Vec<Element>,
    probes: Vec<usize>,
}

impl PartialEq for Netlist {
    fn eq(&self, other: &Self) -> bool {
        self.title == other.title
            && self.nodes == other.nodes
            && self.elements == other.elements
            && self.probes == other.probes
    }
}

impl Netlist {
    pub fn title(&self) -> &str {
        &self.title
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn node_name(&self, index: usize) -> &str {
        &self.nodes[index]
    }

    pub fn node(&self, name: &str) -> Option<NodeId> {
        self.node_index
            .get(name)
            .map(|&index| NodeId { name: name.to_string(), index })
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .map(|(index, name)| NodeId { name: name.clone(), index })
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn element(&self, label: &str) -> Option<&Element> {
        self.elements.iter().find(|e| e.label == label)
    }

    pub fn probes(&self) -> Vec<NodeId> {
        self.probes
            .iter()
            .map(|&index| NodeId { name: self.nodes[index].clone(), index })
            .collect()
    }

    pub fn probe_indices(&self) -> &[usize] {
        &self.probes
    }

    /// Two netlists share a topology when they have the same nodes and the
    /// same element kinds on the same terminals; only values may differ.
    pub fn same_topology(&self, other: &Netlist) -> bool {
        self.nodes == other.nodes
            && self.elements.len() == other.elements.len()
            && self.elements.iter().zip(&other.elements).all(|(a, b)| {
                std::mem::discriminant(&a.kind) == std::mem::discriminant(&b.kind)
                    && a.terminals == b.terminals
            })
    }

    /// Stable SHA-256 of the native text form.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let text = emit_netlist(self, Dialect::Native);
        let hash = Sha256::digest(text.as_bytes());
        hash.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Element indices incident to each node.
    pub(crate) fn incidence(&self) -> Vec<Vec<usize>> {
        let mut inc = vec![Vec::new(); self.nodes.len()];
        for (i, e) in self.elements.iter().enumerate() {
            for &t in &e.terminals {
                if inc[t].last() != Some(&i) {
                    inc[t].push(i);
                }
            }
        }
        inc
    }
}

fn sanitize_title(title: String) -> String {
    title.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Incrementally assembles a [`Netlist`], enforcing element invariants.
#[derive(Debug)]
pub struct NetlistBuilder {
    netlist: Netlist,
    labels: HashSet<String>,
}

impl NetlistBuilder {
    pub fn new(title: impl Into<String>) -> Self {
        let mut node_index = HashMap::new();
        node_index.insert(GROUND.to_string(), 0);
        Self {
            netlist: Netlist {
                title: sanitize_title(title.into()),
                nodes: vec![GROUND.to_string()],
                node_index,
                elements: Vec::new(),
                probes: Vec::new(),
            },
            labels: HashSet::new(),
        }
    }

    fn intern(&mut self, name: &str) -> Result<usize, NetlistError> {
        if name.is_empty() || name.chars().any(char::is_whitespace) {
            return Err(NetlistError::BadNodeName);
        }
        if let Some(&i) = self.netlist.node_index.get(name) {
            return Ok(i);
        }
        let i = self.netlist.nodes.len();
        self.netlist.nodes.push(name.to_string());
        self.netlist.node_index.insert(name.to_string(), i);
        Ok(i)
    }

    pub fn add(
        &mut self,
        label: impl Into<String>,
        kind: ElementKind,
        terminals: &[&str],
    ) -> Result<&mut Self, NetlistError> {
        let label = label.into();
        let first = label.chars().next().map(|c| c.to_ascii_uppercase());
        if first != Some(kind.letter()) {
            return Err(NetlistError::LabelKind { label, letter: kind.letter() });
        }
        if terminals.len() != kind.terminal_count() {
            return Err(NetlistError::TerminalCount {
                label,
                expected: kind.terminal_count(),
                got: terminals.len(),
            });
        }
        kind.check(&label)?;
        if self.labels.contains(&label) {
            return Err(NetlistError::DuplicateLabel(label));
        }
        let terminals = terminals
            .iter()
            .map(|n| self.intern(n))
            .collect::<Result<Vec<_>, _>>()?;
        self.labels.insert(label.clone());
        self.netlist.elements.push(Element { label, kind, terminals });
        Ok(self)
    }

    pub fn resistor(&mut self, label: &str, a: &str, b: &str, ohms: f64) -> Result<&mut Self, NetlistError> {
        self.add(label, ElementKind::Resistor { ohms }, &[a, b])
    }

    pub fn capacitor(&mut self, label: &str, a: &str, b: &str, farads: f64) -> Result<&mut Self, NetlistError> {
        self.add(label, ElementKind::Capacitor { farads }, &[a, b])
    }

    pub fn inductor(&mut self, label: &str, a: &str, b: &str, henries: f64) -> Result<&mut Self, NetlistError> {
        self.add(label, ElementKind::Inductor { henries }, &[a, b])
    }

    /// Adds a probe on an already-defined node. Duplicates are ignored.
    pub fn probe(&mut self, node: &str) -> Result<&mut Self, NetlistError> {
        let index = *self
            .netlist
            .node_index
            .get(node)
            .ok_or_else(|| NetlistError::UndefinedProbe(node.to_string()))?;
        if !self.netlist.probes.contains(&index) {
            self.netlist.probes.push(index);
        }
        Ok(self)
    }

    pub fn build(self) -> Netlist {
        self.netlist
    }
}
