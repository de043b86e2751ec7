use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use super::{Element, ElementKind, Netlist, NetlistError, Sinusoid, SourceSpec};

struct PendingRef {
    line: usize,
    element: usize,
}

/// Parses and validates a netlist.
pub fn parse_netlist(text: &str) -> Result<Netlist, NetlistError> {
    let mut nodes: Vec<String> = Vec::new();
    let mut elements: Vec<Element> = Vec::new();
    let mut sources = BTreeMap::new();
    let mut fields = BTreeMap::new();
    let mut names = HashSet::new();
    let mut pending = Vec::new();

    let node_id = |name: &str, nodes: &mut Vec<String>| -> usize {
        match nodes.iter().position(|n| n == name) {
            Some(i) => i,
            None => {
                nodes.push(name.to_string());
                nodes.len() - 1
            }
        }
    };

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let syntax = |message: String| NetlistError::Syntax { line, message };

        if let Some(directive) = content.strip_prefix('.') {
            let mut parts = directive.splitn(2, char::is_whitespace);
            let keyword = parts.next().unwrap_or("").to_ascii_lowercase();
            let rest = parts.next().unwrap_or("").trim();
            match keyword.as_str() {
                "source" => {
                    let (id, spec) = parse_source(rest).map_err(syntax)?;
                    if sources.insert(id.clone(), spec).is_some() {
                        return Err(NetlistError::DuplicateDirective { line, id });
                    }
                }
                "field" => {
                    let toks: Vec<&str> = rest.split_whitespace().collect();
                    if toks.len() != 2 {
                        return Err(syntax("expected `.field <id> <builtin-or-path>`".into()));
                    }
                    if fields.insert(toks[0].to_string(), toks[1].to_string()).is_some() {
                        return Err(NetlistError::DuplicateDirective { line, id: toks[0].to_string() });
                    }
                }
                other => return Err(syntax(format!("unknown directive `.{other}`"))),
            }
            continue;
        }

        let toks: Vec<&str> = content.split_whitespace().collect();
        if toks.len() != 4 {
            return Err(syntax(format!("expected `<NAME> <node+> <node-> <value>`, found {} fields", toks.len())));
        }
        let name = toks[0];
        let prefix = name.chars().next().map(|c| c.to_ascii_uppercase());
        let value = toks[3];
        let positive = |v: &str| -> Result<f64, NetlistError> {
            let x: f64 = v.parse().map_err(|_| syntax(format!("cannot parse value `{v}` of `{name}`")))?;
            if !(x.is_finite() && x > 0.0) {
                return Err(NetlistError::NonPositiveValue { line, name: name.to_string(), value: x });
            }
            Ok(x)
        };
        let kind = match prefix {
            Some('R') => ElementKind::Resistor(positive(value)?),
            Some('C') => ElementKind::Capacitor(positive(value)?),
            Some('L') => ElementKind::Inductor(positive(value)?),
            Some('V') => ElementKind::VoltageSource(value.to_string()),
            Some('I') => ElementKind::CurrentSource(value.to_string()),
            Some('M') => {
                let (field, coil) = match value.split_once(':') {
                    Some((f, c)) => {
                        (f, c.parse::<usize>().map_err(|_| syntax(format!("bad coil index `{c}` in `{value}`")))?)
                    }
                    None => (value, 0),
                };
                if field.is_empty() {
                    return Err(syntax(format!("empty field reference in `{name}`")));
                }
                ElementKind::FieldPort { field: field.to_string(), coil }
            }
            _ => return Err(syntax(format!("unknown element kind in name `{name}`"))),
        };
        if !names.insert(name.to_string()) {
            return Err(NetlistError::DuplicateElement { line, name: name.to_string() });
        }
        let from = node_id(toks[1], &mut nodes);
        let to = node_id(toks[2], &mut nodes);
        if from == to && !matches!(kind, ElementKind::FieldPort { .. }) {
            return Err(NetlistError::SelfLoop { line, name: name.to_string(), node: toks[1].to_string() });
        }
        if matches!(kind, ElementKind::VoltageSource(_) | ElementKind::CurrentSource(_) | ElementKind::FieldPort { .. })
        {
            pending.push(PendingRef { line, element: elements.len() });
        }
        elements.push(Element { name: name.to_string(), kind, from, to });
    }

    if elements.is_empty() {
        return Err(NetlistError::Empty);
    }
    for p in pending {
        let e = &elements[p.element];
        match &e.kind {
            ElementKind::VoltageSource(id) | ElementKind::CurrentSource(id) if !sources.contains_key(id) => {
                return Err(NetlistError::UnknownSource { line: p.line, name: e.name.clone(), id: id.clone() });
            }
            ElementKind::FieldPort { field, .. } if !fields.contains_key(field) => {
                return Err(NetlistError::UnknownField { line: p.line, name: e.name.clone(), id: field.clone() });
            }
            _ => {}
        }
    }

    let netlist = Netlist { nodes, elements, sources, fields };
    netlist.check_connected()?;
    Ok(netlist)
}

fn parse_source(rest: &str) -> Result<(String, SourceSpec), String> {
    let mut it = rest.splitn(3, char::is_whitespace);
    let id = it.next().filter(|s| !s.is_empty()).ok_or("`.source` needs an id")?;
    let offset_tok = it.next().ok_or("`.source` needs an offset")?;
    let offset: f64 = offset_tok.parse().map_err(|_| format!("cannot parse source offset `{offset_tok}`"))?;
    let mut terms = Vec::new();
    let mut tail = it.next().unwrap_or("").trim();
    while !tail.is_empty() {
        let open = tail.strip_prefix('(').ok_or_else(|| format!("expected `(` at `{tail}`"))?;
        let close = open.find(')').ok_or("unterminated sinusoid term")?;
        let nums: Result<Vec<f64>, _> = open[..close].split(',').map(|s| s.trim().parse::<f64>()).collect();
        let nums = nums.map_err(|_| format!("bad sinusoid term `({})`", &open[..close]))?;
        if nums.len() != 3 {
            return Err(format!("sinusoid term needs 3 numbers, got {}", nums.len()));
        }
        if nums.iter().any(|v| !v.is_finite()) || !offset.is_finite() {
            return Err("source parameters must be finite".into());
        }
        terms.push(Sinusoid { amplitude: nums[0], omega: nums[1], phase: nums[2] });
        tail = open[close + 1..].trim_start();
    }
    if !offset.is_finite() {
        return Err("source offset must be finite".into());
    }
    Ok((id.to_string(), SourceSpec { offset, terms }))
}

/// Emits netlist text that [`parse_netlist`] maps back to an equal value.
pub fn serialize_netlist(netlist: &Netlist) -> String {
    let mut out = String::new();
    for (id, spec) in &netlist.sources {
        let _ = write!(out, ".source {id} {}", spec.offset);
        for t in &spec.terms {
            let _ = write!(out, " ({},{},{})", t.amplitude, t.omega, t.phase);
        }
        out.push('\n');
    }
    for (id, target) in &netlist.fields {
        let _ = writeln!(out, ".field {id} {target}");
    }
    for e in &netlist.elements {
        let value = match &e.kind {
            ElementKind::Resistor(v) | ElementKind::Capacitor(v) | ElementKind::Inductor(v) => v.to_string(),
            ElementKind::VoltageSource(id) | ElementKind::CurrentSource(id) => id.clone(),
            ElementKind::FieldPort { field, coil: 0 } => field.clone(),
            ElementKind::FieldPort { field, coil } => format!("{field}:{coil}"),
        };
        let _ = writeln!(out, "{} {} {} {}", e.name, netlist.nodes[e.from], netlist.nodes[e.to], value);
    }
    out
}
