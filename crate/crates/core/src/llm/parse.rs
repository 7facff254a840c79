//! Parsers for untrusted model completions.
//!
//! Nothing here trusts the model: every label is checked against the
//! taxonomy and every quote must be found in the source text. Entries that
//! fail are dropped with a reason, never repaired beyond whitespace.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::findings::{Demand, Finding, Locale, MoralizationFinding, RoleMention, Severity, SourceText};
use crate::gateway::RawModelOutput;
use crate::taxonomy::Taxonomy;

pub const DEFAULT_LLM_CONFIDENCE: f64 = 0.7;

/// Upper bound on bracket positions tried when no fenced block parses.
const MAX_SCAN_CANDIDATES: usize = 256;
const FRAGMENT_CHARS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DropReason {
    UnknownLabel,
    UngroundableQuote,
    MalformedEntry,
}

impl DropReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DropReason::UnknownLabel => "unknown-label",
            DropReason::UngroundableQuote => "ungroundable-quote",
            DropReason::MalformedEntry => "malformed-entry",
        }
    }
}

impl fmt::Display for DropReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedEntry {
    pub reason: DropReason,
    pub fragment: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParseReport<T> {
    pub accepted: Vec<T>,
    pub dropped: Vec<DroppedEntry>,
    /// Non-fatal coercions applied to accepted entries.
    pub notes: Vec<String>,
    /// Number of entries the model emitted; always `accepted + dropped`.
    pub emitted: usize,
}

impl<T> Default for ParseReport<T> {
    fn default() -> Self {
        Self {
            accepted: Vec::new(),
            dropped: Vec::new(),
            notes: Vec::new(),
            emitted: 0,
        }
    }
}

impl<T> ParseReport<T> {
    fn drop_entry(&mut self, reason: DropReason, entry: &Value) {
        self.dropped.push(DroppedEntry {
            reason,
            fragment: fragment(entry),
        });
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("unparseable: {0}")]
    Unparseable(String),
}

fn fragment(v: &Value) -> String {
    let s = v.to_string();
    if s.chars().count() <= FRAGMENT_CHARS {
        s
    } else {
        s.chars().take(FRAGMENT_CHARS).collect::<String>() + "…"
    }
}

fn fenced_blocks(raw: &str) -> impl Iterator<Item = &str> {
    let mut rest = raw;
    std::iter::from_fn(move || {
        let open = rest.find("```")?;
        let after = &rest[open + 3..];
        // skip the info string (e.g. `json`) up to the end of the line
        let body_start = after.find('\n').map_or(after.len(), |i| i + 1);
        let info = &after[..body_start];
        let body_start = if info.trim_start().starts_with(['[', '{']) {
            0
        } else {
            body_start
        };
        let body = &after[body_start..];
        let close = body.find("```")?;
        rest = &body[close + 3..];
        Some(&body[..close])
    })
}

fn structured(v: Value) -> Option<Value> {
    matches!(v, Value::Array(_) | Value::Object(_)).then_some(v)
}

/// Locates the structured payload in a completion: the first fenced block
/// that parses as a JSON array or object, otherwise the first array or object
/// that parses starting at a bracket in the raw text.
pub fn find_payload(raw: &str) -> Option<Value> {
    for block in fenced_blocks(raw) {
        if let Some(v) = serde_json::from_str::<Value>(block.trim())
            .ok()
            .and_then(structured)
        {
            return Some(v);
        }
    }
    raw.match_indices(['[', '{'])
        .take(MAX_SCAN_CANDIDATES)
        .find_map(|(i, _)| {
            let mut stream = serde_json::Deserializer::from_str(&raw[i..]).into_iter::<Value>();
            stream.next()?.ok().and_then(structured)
        })
}

fn str_field<'a>(obj: &'a Map<String, Value>, names: &[&str]) -> Option<&'a str> {
    names.iter().find_map(|n| obj.get(*n).and_then(Value::as_str))
}

/// Accepts a bare array, an object wrapping an array, or a single entry.
fn entry_list(payload: Value) -> Vec<Value> {
    match payload {
        Value::Array(items) => items,
        Value::Object(mut obj) => {
            for key in ["findings", "techniques", "labels", "entries", "results", "items"] {
                if let Some(Value::Array(items)) = obj.remove(key) {
                    return items;
                }
            }
            vec![Value::Object(obj)]
        }
        other => vec![other],
    }
}

/// Parses a production-mode completion into validated findings for
/// `plugin_id`. Fails only when no structured payload exists at all.
pub fn parse_cbt_output(
    raw: &RawModelOutput,
    taxonomy: &Taxonomy,
    source: &str,
    plugin_id: &str,
) -> Result<ParseReport<Finding>, ParseError> {
    let payload = find_payload(&raw.text)
        .ok_or_else(|| ParseError::Unparseable("no structured payload found".into()))?;
    let source_text = SourceText::new(source);
    let mut report = ParseReport::default();
    for entry in entry_list(payload) {
        report.emitted += 1;
        let Some(obj) = entry.as_object() else {
            report.drop_entry(DropReason::MalformedEntry, &entry);
            continue;
        };
        let Some(label) = str_field(obj, &["label", "technique", "trigger"]) else {
            report.drop_entry(DropReason::MalformedEntry, &entry);
            continue;
        };
        let Some(trigger) = taxonomy.trigger_ci(label) else {
            report.drop_entry(DropReason::UnknownLabel, &entry);
            continue;
        };
        let quote = str_field(obj, &["quote", "excerpt", "span", "text"]).unwrap_or("");
        let explanation = str_field(obj, &["explanation", "rationale"])
            .unwrap_or("")
            .trim();
        if quote.trim().is_empty() || explanation.is_empty() {
            report.drop_entry(DropReason::MalformedEntry, &entry);
            continue;
        }
        let span = match source_text.ground(quote) {
            Ok(span) => span,
            Err(_) => {
                report.drop_entry(DropReason::UngroundableQuote, &entry);
                continue;
            }
        };

        let severity = match obj.get("severity") {
            None | Some(Value::Null) => trigger.default_severity,
            Some(v) => match v.as_str().and_then(|s| s.trim().parse::<Severity>().ok()) {
                Some(s) => s,
                None => {
                    report.notes.push(format!(
                        "{}: severity {} coerced to {}",
                        DropReason::MalformedEntry,
                        v,
                        trigger.default_severity.as_str()
                    ));
                    trigger.default_severity
                }
            },
        };
        let confidence = match obj.get("confidence") {
            None | Some(Value::Null) => DEFAULT_LLM_CONFIDENCE,
            Some(v) => match v.as_f64().filter(|c| (0.0..=1.0).contains(c)) {
                Some(c) => c,
                None => {
                    report.notes.push(format!(
                        "{}: confidence {} replaced by {}",
                        DropReason::MalformedEntry,
                        v,
                        DEFAULT_LLM_CONFIDENCE
                    ));
                    DEFAULT_LLM_CONFIDENCE
                }
            },
        };
        if let Some(bias) = str_field(obj, &["bias"]) {
            if !bias.trim().eq_ignore_ascii_case(&trigger.bias_triggered) {
                report.notes.push(format!(
                    "bias `{}` for {} replaced by `{}`",
                    bias, trigger.id, trigger.bias_triggered
                ));
            }
        }

        let index = report.accepted.len();
        report.accepted.push(Finding {
            id: format!("{plugin_id}#{index}"),
            plugin_id: plugin_id.to_string(),
            trigger_type_id: trigger.id.clone(),
            bias_triggered: trigger.bias_triggered.clone(),
            severity,
            span,
            explanation: explanation.to_string(),
            confidence,
        });
    }
    Ok(report)
}

/// Parses a benchmark-mode completion into a label set. Unknown labels are
/// reported as dropped entries.
pub fn parse_benchmark_labels(
    raw: &str,
    taxonomy: &Taxonomy,
) -> Result<(BTreeSet<String>, ParseReport<String>), ParseError> {
    let payload = find_payload(raw)
        .ok_or_else(|| ParseError::Unparseable("no structured payload found".into()))?;
    let mut report = ParseReport::default();
    let mut labels = BTreeSet::new();
    for entry in entry_list(payload) {
        report.emitted += 1;
        let label = match &entry {
            Value::String(s) => Some(s.as_str()),
            Value::Object(obj) => str_field(obj, &["label", "technique", "trigger"]),
            _ => None,
        };
        match label.map(|l| taxonomy.trigger_ci(l)) {
            None => report.drop_entry(DropReason::MalformedEntry, &entry),
            Some(None) => report.drop_entry(DropReason::UnknownLabel, &entry),
            Some(Some(t)) => {
                labels.insert(t.id.clone());
                report.accepted.push(t.id.clone());
            }
        }
    }
    Ok((labels, report))
}

fn decision_word(s: &str) -> Option<bool> {
    match s.trim().to_lowercase().as_str() {
        "yes" | "ja" | "true" | "1" | "moralizing" | "moralisierend" => Some(true),
        "no" | "nein" | "false" | "0" | "not moralizing" | "nicht moralisierend" => Some(false),
        _ => None,
    }
}

fn decision_from_value(v: &Value) -> Option<bool> {
    match v {
        Value::Bool(b) => Some(*b),
        Value::String(s) => decision_word(s),
        Value::Number(n) => match n.as_u64() {
            Some(1) => Some(true),
            Some(0) => Some(false),
            _ => None,
        },
        _ => None,
    }
}

fn decision_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r#"(?i)\b(?:decision|entscheidung|moralizing|moralisierend)\b["']?\s*[:=]\s*["']?(yes|no|ja|nein|true|false)\b"#)
            .expect("static pattern")
    })
}

/// Outcome of parsing a moralization completion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoralizationParse {
    pub is_moralizing: bool,
    pub details: Option<MoralizationFinding>,
    pub report: ParseReport<MoralizationFinding>,
}

/// Extracts the binary decision and, for positive answers, validated details.
/// A positive decision whose details fail validation stays positive.
pub fn parse_moralization_output(
    raw: &RawModelOutput,
    taxonomy: &Taxonomy,
    source: &str,
    locale: Locale,
) -> Result<MoralizationParse, ParseError> {
    let payload = find_payload(&raw.text).and_then(|v| match v {
        Value::Object(obj) => Some(obj),
        Value::Array(items) => items.into_iter().find_map(|i| match i {
            Value::Object(obj) => Some(obj),
            _ => None,
        }),
        _ => None,
    });
    let from_payload = payload.as_ref().and_then(|obj| {
        ["decision", "entscheidung", "is_moralizing", "moralizing", "moralization"]
            .iter()
            .find_map(|k| obj.get(*k).and_then(decision_from_value))
    });
    let decision = from_payload.or_else(|| {
        decision_regex()
            .captures(&raw.text)
            .and_then(|c| decision_word(&c[1]))
    });
    let Some(is_moralizing) = decision else {
        return Err(ParseError::Unparseable("no moralization decision found".into()));
    };

    let mut report = ParseReport::default();
    if !is_moralizing {
        return Ok(MoralizationParse {
            is_moralizing,
            details: None,
            report,
        });
    }
    let Some(obj) = payload else {
        return Ok(MoralizationParse {
            is_moralizing,
            details: None,
            report,
        });
    };
    let has_details = ["quote", "moral_values", "values", "demand", "roles"]
        .iter()
        .any(|k| obj.contains_key(*k));
    if !has_details {
        return Ok(MoralizationParse {
            is_moralizing,
            details: None,
            report,
        });
    }
    report.emitted = 1;
    let entry = Value::Object(obj.clone());
    match moralization_details(&obj, taxonomy, source, locale, &mut report.notes) {
        Ok(finding) => {
            report.accepted.push(finding.clone());
            Ok(MoralizationParse {
                is_moralizing,
                details: Some(finding),
                report,
            })
        }
        Err(reason) => {
            report.drop_entry(reason, &entry);
            Ok(MoralizationParse {
                is_moralizing,
                details: None,
                report,
            })
        }
    }
}

fn moralization_details(
    obj: &Map<String, Value>,
    taxonomy: &Taxonomy,
    source: &str,
    locale: Locale,
    notes: &mut Vec<String>,
) -> Result<MoralizationFinding, DropReason> {
    let source_text = SourceText::new(source);
    let quote = str_field(obj, &["quote", "excerpt"]).ok_or(DropReason::MalformedEntry)?;
    if quote.trim().is_empty() {
        return Err(DropReason::MalformedEntry);
    }
    let span = source_text
        .ground(quote)
        .map_err(|_| DropReason::UngroundableQuote)?;

    let values = obj
        .get("moral_values")
        .or_else(|| obj.get("values"))
        .and_then(Value::as_array)
        .ok_or(DropReason::MalformedEntry)?;
    let mut moral_values = Vec::with_capacity(values.len());
    for v in values {
        let id = v.as_str().ok_or(DropReason::MalformedEntry)?.trim().to_lowercase();
        if !taxonomy.has_moral_category(&id) {
            return Err(DropReason::UnknownLabel);
        }
        if !moral_values.contains(&id) {
            moral_values.push(id);
        }
    }
    if moral_values.is_empty() {
        return Err(DropReason::MalformedEntry);
    }

    let demand = match obj.get("demand") {
        None | Some(Value::Null) => Demand::None,
        Some(Value::String(s)) => s.parse().map_err(|_| DropReason::MalformedEntry)?,
        Some(_) => return Err(DropReason::MalformedEntry),
    };

    let mut roles = Vec::new();
    if let Some(list) = obj.get("roles") {
        let list = list.as_array().ok_or(DropReason::MalformedEntry)?;
        for item in list {
            let Some(role_obj) = item.as_object() else {
                notes.push(format!("role entry {} is not an object", fragment(item)));
                continue;
            };
            let role = str_field(role_obj, &["role", "role_id"]).map(|r| r.trim().to_lowercase());
            let role_quote = str_field(role_obj, &["quote", "excerpt", "name"]);
            match (role, role_quote) {
                (Some(role), Some(q)) if taxonomy.has_role(&role) && !q.trim().is_empty() => {
                    match source_text.ground(q) {
                        Ok(span) => roles.push(RoleMention { span, role_id: role }),
                        Err(_) => notes.push(format!(
                            "{}: role quote {:?} not found",
                            DropReason::UngroundableQuote,
                            q
                        )),
                    }
                }
                (Some(role), _) if !taxonomy.has_role(&role) => {
                    notes.push(format!("{}: role `{role}`", DropReason::UnknownLabel))
                }
                _ => notes.push(format!(
                    "{}: role entry {}",
                    DropReason::MalformedEntry,
                    fragment(item)
                )),
            }
        }
    }

    Ok(MoralizationFinding {
        span,
        moral_values,
        demand,
        roles,
        locale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn raw(text: &str) -> RawModelOutput {
        RawModelOutput {
            text: text.to_string(),
            model_id: "m".into(),
            elapsed_ms: 0.0,
        }
    }

    const SOURCE: &str = "They are a total disaster and everyone knows it.";

    #[test]
    fn well_formed_entry_accepted() {
        let tax = Taxonomy::shipped();
        let out = raw(
            "Here you go:\n```json\n[{\"label\": \"loaded-language\", \"quote\": \"total disaster\", \
             \"bias\": \"affect heuristic\", \"severity\": \"high\", \"explanation\": \"Charged wording.\", \
             \"confidence\": 0.9}]\n```\nAnything else?",
        );
        let r = parse_cbt_output(&out, &tax, SOURCE, "cbt-llm").unwrap();
        assert_eq!(r.accepted.len(), 1);
        assert!(r.dropped.is_empty());
        let f = &r.accepted[0];
        assert_eq!((f.span.start, f.span.end), (11, 25));
        assert_eq!(f.span.excerpt, "total disaster");
        assert_eq!(f.severity, Severity::High);
        assert_eq!(f.confidence, 0.9);
        assert_eq!(f.bias_triggered, "affect heuristic");
        assert!(r.notes.is_empty());
    }

    #[test]
    fn unknown_label_dropped() {
        let tax = Taxonomy::shipped();
        let out = raw(r#"[{"label": "sarcasm", "quote": "total disaster", "explanation": "x"}]"#);
        let r = parse_cbt_output(&out, &tax, SOURCE, "cbt-llm").unwrap();
        assert!(r.accepted.is_empty());
        assert_eq!(r.dropped[0].reason, DropReason::UnknownLabel);
        assert_eq!(r.emitted, 1);
    }

    #[test]
    fn prose_is_unparseable() {
        let tax = Taxonomy::shipped();
        let out = raw("I could not find any propaganda in this text, sorry.");
        assert!(matches!(
            parse_cbt_output(&out, &tax, SOURCE, "cbt-llm"),
            Err(ParseError::Unparseable(_))
        ));
    }

    #[test]
    fn mixed_entries_partition() {
        let tax = Taxonomy::shipped();
        let out = raw(
            r#"[
              {"label": "Loaded-Language", "quote": "total   disaster", "explanation": "a", "severity": "extreme"},
              {"label": "doubt", "quote": "not in the text", "explanation": "b"},
              {"label": "doubt", "explanation": "c"},
              "junk",
              {"label": "bandwagon-reductio-ad-hitlerum", "quote": "everyone knows it", "explanation": "d", "confidence": 7}
            ]"#,
        );
        let r = parse_cbt_output(&out, &tax, SOURCE, "cbt-llm").unwrap();
        assert_eq!(r.emitted, 5);
        assert_eq!(r.accepted.len() + r.dropped.len(), 5);
        assert_eq!(r.accepted.len(), 2);
        let reasons: Vec<_> = r.dropped.iter().map(|d| d.reason).collect();
        assert_eq!(
            reasons,
            vec![
                DropReason::UngroundableQuote,
                DropReason::MalformedEntry,
                DropReason::MalformedEntry
            ]
        );
        // severity coerced to the type default, with a note
        assert_eq!(r.accepted[0].severity, tax.trigger("loaded-language").unwrap().default_severity);
        assert_eq!(r.accepted[0].confidence, DEFAULT_LLM_CONFIDENCE);
        assert_eq!(r.accepted[1].confidence, DEFAULT_LLM_CONFIDENCE);
        assert_eq!(r.notes.len(), 2);
        assert!(r.notes[0].starts_with("malformed-entry"));
    }

    #[test]
    fn payload_selection() {
        assert_eq!(find_payload("```\nnot json\n```\n```json\n[1]\n```"), Some(serde_json::json!([1])));
        assert_eq!(find_payload("prefix [oops {\"a\": 1} tail"), Some(serde_json::json!({"a": 1})));
        assert_eq!(find_payload("```json [2]```"), Some(serde_json::json!([2])));
        assert_eq!(find_payload("nothing here"), None);
        assert_eq!(find_payload("\"just a string\""), None);
    }

    #[test]
    fn wrapped_object_payload() {
        let tax = Taxonomy::shipped();
        let out = raw(r#"{"findings": [{"label": "doubt", "quote": "everyone knows", "explanation": "x"}]}"#);
        let r = parse_cbt_output(&out, &tax, SOURCE, "cbt-llm").unwrap();
        assert_eq!(r.accepted.len(), 1);
    }

    #[test]
    fn benchmark_labels() {
        let tax = Taxonomy::shipped();
        let (labels, report) =
            parse_benchmark_labels("```json\n[\"Doubt\", \"slogans\", \"sarcasm\", \"doubt\"]\n```", &tax).unwrap();
        assert_eq!(labels.into_iter().collect::<Vec<_>>(), vec!["doubt", "slogans"]);
        assert_eq!(report.dropped.len(), 1);
        assert_eq!(report.emitted, 4);
        let (empty, _) = parse_benchmark_labels("[]", &tax).unwrap();
        assert!(empty.is_empty());
    }

    const MORAL_SOURCE: &str = "We owe it to our children to protect them. The minister must act now.";

    #[test]
    fn moralization_negative() {
        let tax = Taxonomy::shipped();
        let p = parse_moralization_output(&raw("decision: no"), &tax, MORAL_SOURCE, Locale::En).unwrap();
        assert!(!p.is_moralizing);
        assert!(p.details.is_none());
    }

    #[test]
    fn moralization_positive_with_details() {
        let tax = Taxonomy::shipped();
        let out = raw(
            r#"```json
{"decision": "yes", "quote": "We owe it to our children to protect them.",
 "moral_values": ["care-virtue"], "demand": "implicit",
 "roles": [{"role": "affected-party", "quote": "our children"}]}
```"#,
        );
        let p = parse_moralization_output(&out, &tax, MORAL_SOURCE, Locale::En).unwrap();
        assert!(p.is_moralizing);
        let d = p.details.unwrap();
        assert_eq!(d.moral_values, vec!["care-virtue"]);
        assert_eq!(d.demand, Demand::Implicit);
        assert_eq!(d.roles.len(), 1);
        assert_eq!(d.roles[0].span.excerpt, "our children");
        assert_eq!((d.span.start, d.span.end), (0, 42));
        d.validate(&SourceText::new(MORAL_SOURCE), &tax).unwrap();
    }

    #[test]
    fn moralization_unknown_value_keeps_decision() {
        let tax = Taxonomy::shipped();
        let out = raw(
            r#"{"decision": "yes", "quote": "The minister must act now.", "moral_values": ["honesty-virtue"], "demand": "explicit"}"#,
        );
        let p = parse_moralization_output(&out, &tax, MORAL_SOURCE, Locale::En).unwrap();
        assert!(p.is_moralizing);
        assert!(p.details.is_none());
        assert_eq!(p.report.dropped[0].reason, DropReason::UnknownLabel);
        assert_eq!(p.report.emitted, 1);
    }

    #[test]
    fn moralization_german_decision_and_unparseable() {
        let tax = Taxonomy::shipped();
        let p = parse_moralization_output(&raw("Entscheidung: ja"), &tax, MORAL_SOURCE, Locale::De).unwrap();
        assert!(p.is_moralizing);
        assert!(parse_moralization_output(&raw("hmm"), &tax, MORAL_SOURCE, Locale::En).is_err());
    }

    proptest! {
        #[test]
        fn parsers_total_on_noise(noise in proptest::collection::vec(any::<u8>(), 0..400)) {
            let tax = Taxonomy::shipped();
            let text = String::from_utf8_lossy(&noise).into_owned();
            let out = raw(&text);
            if let Ok(r) = parse_cbt_output(&out, &tax, SOURCE, "cbt-llm") {
                prop_assert_eq!(r.accepted.len() + r.dropped.len(), r.emitted);
                for f in &r.accepted {
                    prop_assert!(SOURCE.contains(&f.span.excerpt));
                }
            }
            let _ = parse_moralization_output(&out, &tax, MORAL_SOURCE, Locale::En);
            let _ = parse_benchmark_labels(&text, &tax);
        }

        #[test]
        fn accepted_quotes_are_verbatim(
            picks in proptest::collection::vec((0usize..48, 1usize..12, 0usize..14), 0..8)
        ) {
            let tax = Taxonomy::shipped();
            let chars: Vec<char> = SOURCE.chars().collect();
            let labels: Vec<&str> = tax.trigger_ids().collect();
            let entries: Vec<Value> = picks.iter().map(|&(s, l, t)| {
                let s = s.min(chars.len() - 1);
                let e = (s + l).min(chars.len());
                let quote: String = chars[s..e].iter().collect();
                serde_json::json!({"label": labels[t], "quote": quote, "explanation": "x"})
            }).collect();
            let out = raw(&Value::Array(entries).to_string());
            let r = parse_cbt_output(&out, &tax, SOURCE, "cbt-llm").unwrap();
            prop_assert_eq!(r.accepted.len() + r.dropped.len(), picks.len());
            for f in &r.accepted {
                prop_assert_eq!(SourceText::new(SOURCE).slice(f.span.start, f.span.end), Some(f.span.excerpt.as_str()));
                f.validate(&SourceText::new(SOURCE), &tax).unwrap();
            }
        }
    }
}
