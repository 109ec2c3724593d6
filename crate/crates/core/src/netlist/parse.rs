use thiserror::Error;

use super::{ElementKind, Netlist, NetlistBuilder, NetlistError};
use crate::units::parse_value;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unknown element kind `{kind}`")]
    UnknownKind { line: usize, kind: String },
    #[error("line {line}: {source}")]
    Invalid {
        line: usize,
        #[source]
        source: NetlistError,
    },
}

impl ParseError {
    pub fn line(&self) -> usize {
        match self {
            ParseError::Syntax { line, .. }
            | ParseError::UnknownKind { line, .. }
            | ParseError::Invalid { line, .. } => *line,
        }
    }
}

fn syntax(line: usize, message: impl Into<String>) -> ParseError {
    ParseError::Syntax { line, message: message.into() }
}

fn value(line: usize, token: &str) -> Result<f64, ParseError> {
    parse_value(token).ok_or_else(|| syntax(line, format!("bad numeric value `{token}`")))
}

/// Reads the native netlist grammar:
///
/// ```text
/// * comment
/// .title <text>
/// R<label> n+ n- <value>
/// C<label> n+ n- <value>
/// L<label> n+ n- <value>
/// T<label> p1+ p1- p2+ p2- Z0=<value> Td=<value>
/// V<label> n+ n- AC <amplitude> [<phase_deg>]
/// I<label> n+ n- AC <amplitude> [<phase_deg>]
/// .probe n1 [n2 ...]
/// .end
/// ```
///
/// Kinds, keywords and directives are case-insensitive; labels and node
/// names are kept verbatim. Anything after `;` on a line is ignored.
pub fn parse_netlist(text: &str) -> Result<Netlist, ParseError> {
    let mut builder = NetlistBuilder::new("");
    let mut title = None;
    let mut probes: Vec<(usize, String)> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split(';').next().unwrap_or("").trim();
        if content.is_empty() || content.starts_with('*') {
            continue;
        }
        let tokens: Vec<&str> = content.split_whitespace().collect();
        let head = tokens[0];

        if let Some(directive) = head.strip_prefix('.') {
            match directive.to_ascii_lowercase().as_str() {
                "end" => break,
                "title" => {
                    title = Some(content[head.len()..].trim().to_string());
                }
                "probe" => {
                    if tokens.len() < 2 {
                        return Err(syntax(line, ".probe needs at least one node"));
                    }
                    probes.extend(tokens[1..].iter().map(|t| (line, t.to_string())));
                }
                other => return Err(syntax(line, format!("unsupported directive `.{other}`"))),
            }
            continue;
        }

        let letter = head.chars().next().unwrap().to_ascii_uppercase();
        let kind = match letter {
            'R' | 'C' | 'L' => {
                if tokens.len() != 4 {
                    return Err(syntax(line, format!("`{head}` expects 2 nodes and a value")));
                }
                let v = value(line, tokens[3])?;
                match letter {
                    'R' => ElementKind::Resistor { ohms: v },
                    'C' => ElementKind::Capacitor { farads: v },
                    _ => ElementKind::Inductor { henries: v },
                }
            }
            'T' => {
                if tokens.len() != 7 {
                    return Err(syntax(line, format!("`{head}` expects 4 nodes, Z0= and Td=")));
                }
                let (mut z0, mut td) = (None, None);
                for param in &tokens[5..] {
                    let (key, val) = param
                        .split_once('=')
                        .ok_or_else(|| syntax(line, format!("expected key=value, got `{param}`")))?;
                    match key.to_ascii_lowercase().as_str() {
                        "z0" => z0 = Some(value(line, val)?),
                        "td" => td = Some(value(line, val)?),
                        _ => return Err(syntax(line, format!("unknown line parameter `{key}`"))),
                    }
                }
                match (z0, td) {
                    (Some(z0), Some(delay)) => ElementKind::LosslessLine { z0, delay },
                    _ => return Err(syntax(line, "line needs both Z0= and Td=")),
                }
            }
            'V' | 'I' => {
                if !(5..=6).contains(&tokens.len()) || !tokens[3].eq_ignore_ascii_case("ac") {
                    return Err(syntax(line, format!("`{head}` expects: n+ n- AC <amp> [<phase>]")));
                }
                let amplitude = value(line, tokens[4])?;
                let phase_deg = match tokens.get(5) {
                    Some(t) => value(line, t)?,
                    None => 0.0,
                };
                if letter == 'V' {
                    ElementKind::AcVoltageSource { amplitude, phase_deg }
                } else {
                    ElementKind::AcCurrentSource { amplitude, phase_deg }
                }
            }
            _ => {
                return Err(ParseError::UnknownKind { line, kind: letter.to_string() });
            }
        };
        let n = kind.terminal_count();
        builder
            .add(head, kind, &tokens[1..1 + n])
            .map_err(|source| ParseError::Invalid { line, source })?;
    }

    for (line, node) in probes {
        builder
            .probe(&node)
            .map_err(|source| ParseError::Invalid { line, source })?;
    }
    let mut netlist = builder.build();
    if let Some(t) = title {
        netlist.title = super::sanitize_title(t);
    }
    Ok(netlist)
}
