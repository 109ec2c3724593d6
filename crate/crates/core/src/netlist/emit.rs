use std::fmt::Write;

use super::{ElementKind, Netlist};
use crate::units::format_value;

/// `.ac lin <points> <f_start> <f_stop>` parameters for exported decks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcDirective {
    pub points: usize,
    pub f_start: f64,
    pub f_stop: f64,
}

impl Default for AcDirective {
    fn default() -> Self {
        Self { points: 4001, f_start: 5.5e9, f_stop: 9.5e9 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Dialect {
    /// Canonical text accepted by [`super::parse_netlist`].
    Native,
    /// Deck for LTspice: title line, `Zo=` line cards, `.ac` and `.save`.
    Ltspice { ac: AcDirective },
}

impl Dialect {
    pub fn ltspice() -> Self {
        Dialect::Ltspice { ac: AcDirective::default() }
    }
}

pub fn emit_netlist(netlist: &Netlist, dialect: Dialect) -> String {
    let mut out = String::new();
    let ltspice = matches!(dialect, Dialect::Ltspice { .. });
    if ltspice {
        // SPICE always treats the first line as the title.
        let title = if netlist.title.is_empty() { "qsim export" } else { &netlist.title };
        writeln!(out, "* {title}").unwrap();
    } else if !netlist.title.is_empty() {
        writeln!(out, ".title {}", netlist.title).unwrap();
    }

    for e in &netlist.elements {
        out.push_str(&e.label);
        for &t in &e.terminals {
            out.push(' ');
            out.push_str(&netlist.nodes[t]);
        }
        match e.kind {
            ElementKind::Resistor { ohms: v }
            | ElementKind::Capacitor { farads: v }
            | ElementKind::Inductor { henries: v } => {
                write!(out, " {}", format_value(v)).unwrap();
            }
            ElementKind::LosslessLine { z0, delay } => {
                let key = if ltspice { "Zo" } else { "Z0" };
                write!(out, " {key}={} Td={}", format_value(z0), format_value(delay)).unwrap();
            }
            ElementKind::AcVoltageSource { amplitude, phase_deg }
            | ElementKind::AcCurrentSource { amplitude, phase_deg } => {
                write!(out, " AC {}", format_value(amplitude)).unwrap();
                if phase_deg != 0.0 || ltspice {
                    write!(out, " {}", format_value(phase_deg)).unwrap();
                }
            }
        }
        out.push('\n');
    }

    if !netlist.probes.is_empty() {
        if ltspice {
            out.push_str(".save");
            for &p in &netlist.probes {
                write!(out, " V({})", netlist.nodes[p]).unwrap();
            }
        } else {
            out.push_str(".probe");
            for &p in &netlist.probes {
                write!(out, " {}", netlist.nodes[p]).unwrap();
            }
        }
        out.push('\n');
    }
    if let Dialect::Ltspice { ac } = dialect {
        writeln!(
            out,
            ".ac lin {} {} {}",
            ac.points,
            format_value(ac.f_start),
            format_value(ac.f_stop)
        )
        .unwrap();
    }
    out.push_str(".end\n");
    out
}
