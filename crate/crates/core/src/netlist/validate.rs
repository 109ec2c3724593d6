use std::fmt;

use super::{ElementKind, Netlist};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Diagnostic {
    /// No AC source anywhere in the circuit.
    NoSource,
    /// Node with no finite-admittance path to ground.
    FloatingNode(String),
    /// Probe placed on the ground node.
    BadProbe(String),
    /// Voltage source without a dedicated series resistor, which the nodal
    /// formulation needs for its Norton equivalent.
    UnbackedVoltageSource(String),
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::NoSource => write!(f, "no source"),
            Diagnostic::FloatingNode(n) => write!(f, "floating node `{n}`"),
            Diagnostic::BadProbe(n) => write!(f, "bad probe `{n}`: probes must be non-ground nodes"),
            Diagnostic::UnbackedVoltageSource(l) => {
                write!(f, "voltage source `{l}` has no series resistor on a private node")
            }
        }
    }
}

/// Series resistor paired with a voltage source: the source terminal that
/// touches nothing but the source and one resistor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct NortonPair {
    pub source: usize,
    /// Node shared only by the source and the resistor.
    pub internal: usize,
    /// The other source terminal.
    pub reference: usize,
    /// Resistor terminal away from the source.
    pub outer: usize,
    pub resistor: usize,
    /// Whether the internal node is the source's positive terminal.
    pub internal_is_plus: bool,
}

pub(crate) fn norton_pair(netlist: &Netlist, incidence: &[Vec<usize>], source: usize) -> Option<NortonPair> {
    let e = &netlist.elements[source];
    for (pos, &node) in e.terminals.iter().enumerate() {
        if node == 0 || e.terminals[0] == e.terminals[1] {
            continue;
        }
        let others: Vec<usize> = incidence[node].iter().copied().filter(|&i| i != source).collect();
        if others.len() != 1 {
            continue;
        }
        let r = &netlist.elements[others[0]];
        if !matches!(r.kind, ElementKind::Resistor { .. }) {
            continue;
        }
        let outer = if r.terminals[0] == node { r.terminals[1] } else { r.terminals[0] };
        if outer == node {
            continue;
        }
        return Some(NortonPair {
            source,
            internal: node,
            reference: e.terminals[1 - pos],
            outer,
            resistor: others[0],
            internal_is_plus: pos == 0,
        });
    }
    None
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Checks the structural invariants a netlist needs before it can be
/// solved. Returns one diagnostic per violation; empty means valid.
pub fn validate(netlist: &Netlist) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let incidence = netlist.incidence();

    if !netlist.elements.iter().any(|e| e.kind.is_source()) {
        out.push(Diagnostic::NoSource);
    }

    let mut parent: Vec<usize> = (0..netlist.node_count()).collect();
    for (i, e) in netlist.elements.iter().enumerate() {
        match e.kind {
            // Ideal current sources have zero admittance.
            ElementKind::AcCurrentSource { .. } => continue,
            ElementKind::AcVoltageSource { .. } => {
                if norton_pair(netlist, &incidence, i).is_none() {
                    out.push(Diagnostic::UnbackedVoltageSource(e.label.clone()));
                }
            }
            _ => {}
        }
        let first = e.terminals[0];
        for &t in &e.terminals[1..] {
            let (a, b) = (find(&mut parent, first), find(&mut parent, t));
            parent[a] = b;
        }
    }
    let ground = find(&mut parent, 0);
    for node in 1..netlist.node_count() {
        if find(&mut parent, node) != ground {
            out.push(Diagnostic::FloatingNode(netlist.nodes[node].clone()));
        }
    }

    for &p in &netlist.probes {
        if p == 0 {
            out.push(Diagnostic::BadProbe(netlist.nodes[p].clone()));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netlist::parse_netlist;

    #[test]
    fn valid_divider() {
        let n = parse_netlist("V1 s 0 AC 1\nR1 s out 50\nR2 out 0 50\n.probe out").unwrap();
        assert!(validate(&n).is_empty());
    }

    #[test]
    fn floating_node() {
        let n = parse_netlist("V1 s 0 AC 1\nR1 s a 50\nR2 a 0 50\nC1 x y 1p").unwrap();
        let d = validate(&n);
        assert_eq!(
            d,
            vec![Diagnostic::FloatingNode("x".into()), Diagnostic::FloatingNode("y".into())]
        );
        assert_eq!(d[0].to_string(), "floating node `x`");
    }

    #[test]
    fn current_source_is_not_a_path() {
        let n = parse_netlist("I1 0 a AC 1\nR1 b 0 1").unwrap();
        assert_eq!(validate(&n), vec![Diagnostic::FloatingNode("a".into())]);
    }

    #[test]
    fn no_source() {
        let n = parse_netlist("R1 a 0 50").unwrap();
        let d = validate(&n);
        assert_eq!(d, vec![Diagnostic::NoSource]);
        assert_eq!(d[0].to_string(), "no source");
    }

    #[test]
    fn ground_probe() {
        let n = parse_netlist("I1 0 a AC 1\nR1 a 0 50\n.probe 0").unwrap();
        assert_eq!(validate(&n), vec![Diagnostic::BadProbe("0".into())]);
    }

    #[test]
    fn voltage_source_needs_series_resistor() {
        let n = parse_netlist("V1 a 0 AC 1\nR1 a 0 50\nR2 a 0 50").unwrap();
        assert_eq!(validate(&n), vec![Diagnostic::UnbackedVoltageSource("V1".into())]);
        let n = parse_netlist("V1 a 0 AC 1\nC1 a b 1p\nR2 b 0 50").unwrap();
        assert_eq!(validate(&n), vec![Diagnostic::UnbackedVoltageSource("V1".into())]);
    }

    #[test]
    fn norton_pair_orientation() {
        let n = parse_netlist("V1 0 s AC 1\nR1 s a 50\nR2 a 0 50").unwrap();
        let inc = n.incidence();
        let p = norton_pair(&n, &inc, 0).unwrap();
        assert_eq!(p.internal, n.node("s").unwrap().index);
        assert_eq!(p.outer, n.node("a").unwrap().index);
        assert_eq!(p.reference, 0);
        assert!(!p.internal_is_plus);
    }
}
