//! Rewriting flagged text: full rewrites, alternative phrasings and an
//! advisory check of the result. Inputs are never modified.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::findings::{Finding, Locale, SourceText};
use crate::gateway::{BackendConfig, Gateway, GatewayError};
use crate::llm::{embed_text, find_payload, DetectionPrompt};

pub const MIN_LENGTH_RATIO: f64 = 0.5;
pub const MAX_LENGTH_RATIO: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Disposition {
    Neutralized,
    Unchanged,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FindingDisposition {
    pub finding_id: String,
    pub disposition: Disposition,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewriteResult {
    pub rewritten: String,
    pub dispositions: Vec<FindingDisposition>,
    pub rationale: String,
    pub model_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlternativesResult {
    pub variants: Vec<String>,
    pub requested: usize,
    /// How many fewer distinct variants came back than were requested.
    pub shortfall: usize,
    pub model_id: String,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum MitigationError {
    #[error(transparent)]
    Backend(#[from] GatewayError),
    #[error("empty rewrite")]
    EmptyRewrite,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("finding `{0}` does not match the text")]
    InvalidFinding(String),
}

fn check_findings(text: &str, findings: &[Finding]) -> Result<(), MitigationError> {
    let source = SourceText::new(text);
    for f in findings {
        source
            .validate(&f.span)
            .map_err(|_| MitigationError::InvalidFinding(f.id.clone()))?;
    }
    Ok(())
}

fn findings_block(findings: &[Finding]) -> String {
    let mut out = String::new();
    for f in findings {
        let _ = writeln!(
            out,
            "- \"{}\" ({}, triggers {}): {}",
            f.span.excerpt, f.trigger_type_id, f.bias_triggered, f.explanation
        );
    }
    out
}

const REWRITE_SYSTEM: &str = "You rewrite short texts so that they no longer use manipulative \
rhetoric, while keeping every factual claim and the author's position.";

pub fn build_rewrite_prompt(text: &str, findings: &[Finding]) -> DetectionPrompt {
    let mut user = String::from(
        "Rewrite the text between the TEXT markers in neutral language. These passages were \
flagged:\n",
    );
    user.push_str(&findings_block(findings));
    user.push_str(
        "\nKeep the meaning, the language and roughly the length of the original. Answer with \
one fenced ```json block holding an object with \"rewritten\" (the full new text) and \
\"rationale\" (one sentence).\n\n",
    );
    user.push_str(&embed_text(text));
    DetectionPrompt {
        system_text: REWRITE_SYSTEM.to_string(),
        user_text: user,
        output_contract: json!({
            "type": "object",
            "required": ["rewritten"],
            "properties": {
                "rewritten": {"type": "string", "minLength": 1},
                "rationale": {"type": "string"},
            },
        }),
        locale: Locale::En,
    }
}

pub fn build_alternatives_prompt(text: &str, findings: &[Finding], k: usize) -> DetectionPrompt {
    let mut user = format!(
        "Write {k} different neutral reformulations of the text between the TEXT markers. These \
passages were flagged:\n"
    );
    user.push_str(&findings_block(findings));
    user.push_str(
        "\nEach reformulation keeps the meaning of the original. Answer with one fenced ```json \
block holding a JSON array of strings.\n\n",
    );
    user.push_str(&embed_text(text));
    DetectionPrompt {
        system_text: REWRITE_SYSTEM.to_string(),
        user_text: user,
        output_contract: json!({
            "type": "array",
            "minItems": k,
            "items": {"type": "string", "minLength": 1},
        }),
        locale: Locale::En,
    }
}

fn strip_fences(raw: &str) -> &str {
    let t = raw.trim();
    match t.strip_prefix("```") {
        Some(rest) => {
            let rest = rest.split_once('\n').map_or("", |(_, body)| body);
            rest.trim_end().strip_suffix("```").unwrap_or(rest).trim()
        }
        None => t,
    }
}

fn dispositions(rewritten: &str, findings: &[Finding]) -> Vec<FindingDisposition> {
    findings
        .iter()
        .map(|f| FindingDisposition {
            finding_id: f.id.clone(),
            disposition: if rewritten.contains(&f.span.excerpt) {
                Disposition::Unchanged
            } else {
                Disposition::Neutralized
            },
        })
        .collect()
}

/// Produces a full replacement for `text`. With no findings the original is
/// returned as is and no backend call is made.
pub fn rewrite(
    gateway: &Gateway,
    text: &str,
    findings: &[Finding],
    config: &BackendConfig,
) -> Result<RewriteResult, MitigationError> {
    check_findings(text, findings)?;
    if findings.is_empty() {
        return Ok(RewriteResult {
            rewritten: text.to_string(),
            dispositions: Vec::new(),
            rationale: "no findings to neutralize".to_string(),
            model_id: String::new(),
        });
    }
    let prompt = build_rewrite_prompt(text, findings);
    let raw = gateway.complete(&prompt.to_chat(), config)?;
    let (rewritten, rationale) = match find_payload(&raw.text) {
        Some(Value::Object(obj)) => {
            let body = ["rewritten", "text", "rewrite"]
                .iter()
                .find_map(|k| obj.get(*k).and_then(Value::as_str))
                .unwrap_or("")
                .to_string();
            let rationale = obj
                .get("rationale")
                .and_then(Value::as_str)
                .unwrap_or("")
                .to_string();
            (body, rationale)
        }
        _ => (strip_fences(&raw.text).to_string(), String::new()),
    };
    if rewritten.trim().is_empty() {
        return Err(MitigationError::EmptyRewrite);
    }
    Ok(RewriteResult {
        dispositions: dispositions(&rewritten, findings),
        rewritten,
        rationale,
        model_id: raw.model_id,
    })
}

/// Asks for `k` reformulations. Exact duplicates (after trimming) are
/// collapsed and the shortfall is reported rather than padded.
pub fn alternatives(
    gateway: &Gateway,
    text: &str,
    findings: &[Finding],
    k: usize,
    config: &BackendConfig,
) -> Result<AlternativesResult, MitigationError> {
    if k == 0 {
        return Err(MitigationError::InvalidK);
    }
    check_findings(text, findings)?;
    let prompt = build_alternatives_prompt(text, findings, k);
    let raw = gateway.complete(&prompt.to_chat(), config)?;
    let candidates: Vec<String> = match find_payload(&raw.text) {
        Some(Value::Array(items)) => items
            .iter()
            .filter_map(|v| match v {
                Value::String(s) => Some(s.clone()),
                Value::Object(o) => ["text", "rewritten"]
                    .iter()
                    .find_map(|k| o.get(*k).and_then(Value::as_str))
                    .map(str::to_string),
                _ => None,
            })
            .collect(),
        Some(Value::Object(o)) => o
            .get("alternatives")
            .or_else(|| o.get("variants"))
            .and_then(Value::as_array)
            .map(|a| a.iter().filter_map(Value::as_str).map(str::to_string).collect())
            .unwrap_or_default(),
        _ => {
            let single = strip_fences(&raw.text);
            if single.is_empty() {
                Vec::new()
            } else {
                vec![single.to_string()]
            }
        }
    };
    let mut variants: Vec<String> = Vec::new();
    for c in candidates {
        let c = c.trim();
        if !c.is_empty() && !variants.iter().any(|v| v == c) {
            variants.push(c.to_string());
        }
    }
    variants.truncate(k);
    if variants.is_empty() {
        return Err(MitigationError::EmptyRewrite);
    }
    Ok(AlternativesResult {
        shortfall: k - variants.len(),
        requested: k,
        variants,
        model_id: raw.model_id,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExcerptCheck {
    pub finding_id: String,
    pub excerpt: String,
    /// True when the excerpt no longer appears verbatim.
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub excerpt_checks: Vec<ExcerptCheck>,
    pub length_ratio: f64,
    pub length_ok: bool,
    /// True when the rewrite differs from the original, or there was nothing to change.
    pub differs_ok: bool,
    pub all_passed: bool,
}

/// Advisory checks on a rewrite. Never blocks anything.
pub fn verify_rewrite(original: &str, result: &RewriteResult, findings: &[Finding]) -> VerificationReport {
    let excerpt_checks: Vec<ExcerptCheck> = findings
        .iter()
        .map(|f| ExcerptCheck {
            finding_id: f.id.clone(),
            excerpt: f.span.excerpt.clone(),
            passed: !result.rewritten.contains(&f.span.excerpt),
        })
        .collect();
    let original_len = original.chars().count();
    let rewritten_len = result.rewritten.chars().count();
    let length_ratio = if original_len == 0 {
        if rewritten_len == 0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        rewritten_len as f64 / original_len as f64
    };
    let length_ok = (MIN_LENGTH_RATIO..=MAX_LENGTH_RATIO).contains(&length_ratio);
    let differs_ok = findings.is_empty() || result.rewritten != original;
    let all_passed = length_ok && differs_ok && excerpt_checks.iter().all(|c| c.passed);
    VerificationReport {
        excerpt_checks,
        length_ratio,
        length_ok,
        differs_ok,
        all_passed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::findings::{ground_span, Severity};
    use crate::gateway::{transcript_hash, FnTransport, HttpResponse, Transcript, TranscriptTransport, TransportError};
    use std::sync::Arc;

    const TEXT: &str = "This disastrous plan will destroy everything we love.";

    fn finding(quote: &str) -> Finding {
        Finding {
            id: format!("cbt-regex#{quote}"),
            plugin_id: "cbt-regex".into(),
            trigger_type_id: "loaded-language".into(),
            bias_triggered: "affect heuristic".into(),
            severity: Severity::Medium,
            span: ground_span(TEXT, quote).unwrap(),
            explanation: "charged".into(),
            confidence: 1.0,
        }
    }

    fn backend() -> BackendConfig {
        BackendConfig::local_api("http://mock", "mock-model")
    }

    fn gateway_with(prompt: &DetectionPrompt, completion: &str) -> Gateway {
        let mut t = Transcript::default();
        t.push(transcript_hash("mock-model", &prompt.to_chat()), completion);
        Gateway::new(Arc::new(TranscriptTransport::new(t)))
    }

    #[test]
    fn rewrite_from_mock() {
        let findings = vec![finding("disastrous"), finding("destroy everything")];
        let neutral = "This plan would change many things we value.";
        let g = gateway_with(
            &build_rewrite_prompt(TEXT, &findings),
            &format!("```json\n{{\"rewritten\": \"{neutral}\", \"rationale\": \"toned down\"}}\n```"),
        );
        let r = rewrite(&g, TEXT, &findings, &backend()).unwrap();
        assert_eq!(r.rewritten, neutral);
        assert_eq!(r.rationale, "toned down");
        assert_eq!(r.dispositions.len(), 2);
        assert!(r.dispositions.iter().all(|d| d.disposition == Disposition::Neutralized));
        let report = verify_rewrite(TEXT, &r, &findings);
        assert!(report.all_passed, "{report:?}");
    }

    #[test]
    fn zero_findings_returns_original_without_backend() {
        let g = Gateway::new(Arc::new(FnTransport(|_: &crate::gateway::HttpRequest| -> Result<HttpResponse, TransportError> {
            panic!("no call expected")
        })));
        let r = rewrite(&g, TEXT, &[], &backend()).unwrap();
        assert_eq!(r.rewritten, TEXT);
        assert!(r.dispositions.is_empty());
    }

    #[test]
    fn timeout_propagates() {
        let g = Gateway::new(Arc::new(FnTransport(|_: &crate::gateway::HttpRequest| Err(TransportError::Timeout))));
        let err = rewrite(&g, TEXT, &[finding("disastrous")], &backend()).unwrap_err();
        assert_eq!(err, MitigationError::Backend(GatewayError::Timeout));
    }

    #[test]
    fn blank_rewrite_is_an_error() {
        let findings = vec![finding("disastrous")];
        let g = gateway_with(&build_rewrite_prompt(TEXT, &findings), "   ");
        assert_eq!(rewrite(&g, TEXT, &findings, &backend()), Err(MitigationError::EmptyRewrite));
    }

    #[test]
    fn alternatives_dedupe_and_shortfall() {
        let findings = vec![finding("disastrous")];
        let g = gateway_with(
            &build_alternatives_prompt(TEXT, &findings, 3),
            r#"["A calmer version.", "A calmer version.", "Another version."]"#,
        );
        let r = alternatives(&g, TEXT, &findings, 3, &backend()).unwrap();
        assert_eq!(r.variants, vec!["A calmer version.", "Another version."]);
        assert_eq!(r.shortfall, 1);

        let g = gateway_with(&build_alternatives_prompt(TEXT, &findings, 1), r#"["Only one."]"#);
        assert_eq!(alternatives(&g, TEXT, &findings, 1, &backend()).unwrap().variants.len(), 1);
        assert_eq!(alternatives(&g, TEXT, &findings, 0, &backend()), Err(MitigationError::InvalidK));
    }

    #[test]
    fn verify_flags_leftovers_and_identity() {
        let findings = vec![finding("disastrous")];
        let same = RewriteResult {
            rewritten: TEXT.to_string(),
            dispositions: dispositions(TEXT, &findings),
            rationale: String::new(),
            model_id: "m".into(),
        };
        let report = verify_rewrite(TEXT, &same, &findings);
        assert!(!report.excerpt_checks[0].passed);
        assert!(!report.differs_ok);
        assert!(report.length_ok);
        assert!(!report.all_passed);

        let short = RewriteResult {
            rewritten: "Bad.".into(),
            ..same
        };
        let report = verify_rewrite(TEXT, &short, &findings);
        assert!(!report.length_ok);
    }

    #[test]
    fn mismatched_finding_rejected() {
        let mut f = finding("disastrous");
        f.span.excerpt = "other".into();
        let g = Gateway::new(Arc::new(crate::gateway::NullTransport));
        assert!(matches!(
            rewrite(&g, TEXT, &[f], &backend()),
            Err(MitigationError::InvalidFinding(_))
        ));
    }
}
