use super::{Phase, StrategyTemplate, Tactic, TemplateKind};
use crate::error::{Error, Result};

const ACCEPT: &str = "accept iff U_u(ω_t^o) ≥ ";
const BID: &str = "bid best of {";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    /// Fixed number of decimals.
    Fixed(usize),
    /// Shortest text that parses back to the same value.
    Exact,
}

/// Rule listing with four decimals.
pub fn render(template: &StrategyTemplate) -> String {
    render_with(template, Precision::Fixed(4))
}

pub fn render_with(template: &StrategyTemplate, precision: Precision) -> String {
    let num = |x: f64| match precision {
        Precision::Fixed(d) => format!("{x:.d$}"),
        Precision::Exact => format!("{x:?}"),
    };
    let linear = |a: f64, b: f64| format!("{}·t + {}", num(a), num(b));
    let mut out = String::new();
    let last = template.phases.len() - 1;
    for (i, phase) in template.phases.iter().enumerate() {
        let close = if i == last { ']' } else { ')' };
        let terms: Vec<String> = phase
            .tactics
            .iter()
            .map(|t| match *t {
                Tactic::NextBid => "U_u(ω_t)".to_string(),
                Tactic::Quantile { a, b } => format!("Q({})", linear(a, b)),
                Tactic::Dynamic => "ū_t".to_string(),
                Tactic::Fixed => "u".to_string(),
                Tactic::Boulware => "b_Boulware".to_string(),
                Tactic::Pareto { a, b } => format!("PS({})", linear(a, b)),
                Tactic::Greedy => "b_opp(ω_t^o)".to_string(),
                Tactic::RandomAbove => "ω ~ U(Ω≥ū_t)".to_string(),
            })
            .collect();
        let rhs = match template.kind {
            TemplateKind::Acceptance if terms.len() == 1 => format!("{ACCEPT}{}", terms[0]),
            TemplateKind::Acceptance => format!("{ACCEPT}max({})", terms.join(", ")),
            TemplateKind::Bidding => format!("{BID}{}}}", terms.join(", ")),
        };
        out.push_str(&format!(
            "t ∈ [{}, {}{close} → {rhs}\n",
            num(phase.start),
            num(phase.end)
        ));
    }
    out
}

/// Parses a rule listing back into a template. Blank lines and lines
/// starting with `#` are skipped.
pub fn parse(text: &str) -> Result<StrategyTemplate> {
    let mut kind = None;
    let mut phases = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: &str| Error::Decode(format!("line {}: {msg}: '{line}'", no + 1));
        let (range, rhs) = line.split_once(" → ").ok_or_else(|| err("missing '→'"))?;
        let range = range
            .strip_prefix("t ∈ [")
            .ok_or_else(|| err("expected 't ∈ ['"))?;
        let range = range
            .strip_suffix([')', ']'])
            .ok_or_else(|| err("unterminated interval"))?;
        let (start, end) = range
            .split_once(", ")
            .ok_or_else(|| err("malformed interval"))?;
        let start: f64 = start.trim().parse().map_err(|_| err("bad phase start"))?;
        let end: f64 = end.trim().parse().map_err(|_| err("bad phase end"))?;

        let (line_kind, body) = if let Some(body) = rhs.strip_prefix(ACCEPT) {
            let body = body
                .strip_prefix("max(")
                .and_then(|b| b.strip_suffix(')'))
                .unwrap_or(body);
            (TemplateKind::Acceptance, body)
        } else if let Some(body) = rhs.strip_prefix(BID).and_then(|b| b.strip_suffix('}')) {
            (TemplateKind::Bidding, body)
        } else {
            return Err(err("unrecognized rule"));
        };
        if kind.is_some_and(|k| k != line_kind) {
            return Err(err("mixes acceptance and bidding rules"));
        }
        kind = Some(line_kind);
        let tactics = body
            .split(", ")
            .map(|term| {
                parse_term(term.trim()).ok_or_else(|| err(&format!("unknown tactic '{term}'")))
            })
            .collect::<Result<Vec<_>>>()?;
        phases.push(Phase {
            start,
            end,
            tactics,
        });
    }
    let kind = kind.ok_or_else(|| Error::Decode("no rules found".into()))?;
    StrategyTemplate::new(kind, phases)
}

fn parse_linear(s: &str) -> Option<(f64, f64)> {
    let (a, b) = s.split_once("·t + ")?;
    Some((a.trim().parse().ok()?, b.trim().parse().ok()?))
}

fn parse_term(term: &str) -> Option<Tactic> {
    Some(match term {
        "U_u(ω_t)" => Tactic::NextBid,
        "ū_t" => Tactic::Dynamic,
        "u" => Tactic::Fixed,
        "b_Boulware" => Tactic::Boulware,
        "b_opp(ω_t^o)" => Tactic::Greedy,
        "ω ~ U(Ω≥ū_t)" => Tactic::RandomAbove,
        _ => {
            if let Some(inner) = term.strip_prefix("Q(").and_then(|t| t.strip_suffix(')')) {
                let (a, b) = parse_linear(inner)?;
                Tactic::Quantile { a, b }
            } else if let Some(inner) = term.strip_prefix("PS(").and_then(|t| t.strip_suffix(')')) {
                let (a, b) = parse_linear(inner)?;
                Tactic::Pareto { a, b }
            } else {
                return None;
            }
        }
    })
}
