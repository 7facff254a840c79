//! Model-backed detectors: `cbt-llm` and `moralization-llm`.

pub mod chunk;
pub mod parse;
pub mod prompt;

use sha2::{Digest, Sha256};

use crate::findings::Locale;
use crate::gateway::Tier;
use crate::plugin::{
    DetectContext, Diagnostics, MoralizationOutcome, Plugin, PluginDescriptor, PluginError,
    PluginKind, PluginOutput, TriggerDomain,
};

pub use chunk::{chunk_text, Chunk};
pub use parse::{
    find_payload, parse_benchmark_labels, parse_cbt_output, parse_moralization_output, DropReason,
    DroppedEntry, MoralizationParse, ParseError, ParseReport, DEFAULT_LLM_CONFIDENCE,
};
pub use prompt::{
    build_cbt_prompt, build_moralization_prompt, embed_text, extract_embedded_text,
    DetectionPrompt, PromptMode,
};

pub const CBT_PLUGIN_ID: &str = "cbt-llm";
pub const MORALIZATION_PLUGIN_ID: &str = "moralization-llm";
pub const DEFAULT_CHUNK_CHARS: usize = 6000;

fn digest_of(parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.as_bytes());
        h.update([0]);
    }
    hex::encode(&h.finalize()[..8])
}

/// Technique detection through a chat-completion backend.
#[derive(Debug, Clone)]
pub struct CbtLlmPlugin {
    descriptor: PluginDescriptor,
    chunk_chars: usize,
}

impl Default for CbtLlmPlugin {
    fn default() -> Self {
        Self::new()
    }
}

impl CbtLlmPlugin {
    pub fn new() -> Self {
        Self {
            descriptor: PluginDescriptor {
                id: CBT_PLUGIN_ID.to_string(),
                kind: PluginKind::InProcess,
                display_name: "Cognitive bias triggers (LLM)".to_string(),
                trigger_domains: vec![TriggerDomain::CognitiveBias],
                locales: vec![Locale::En, Locale::De],
                required_tier: Tier::InBrowser,
                version: env!("CARGO_PKG_VERSION").to_string(),
            },
            chunk_chars: DEFAULT_CHUNK_CHARS,
        }
    }

    pub fn with_chunk_chars(mut self, chars: usize) -> Self {
        self.chunk_chars = chars.max(1);
        self
    }
}

impl Plugin for CbtLlmPlugin {
    fn descriptor(&self) -> &PluginDescriptor {
        &self.descriptor
    }

    fn detect(&self, ctx: &DetectContext<'_>) -> Result<PluginOutput, PluginError> {
        let mut output = PluginOutput::default();
        let chunks = chunk_text(ctx.text, self.chunk_chars);
        let mut unparseable = 0;
        for chunk in &chunks {
            let prompt = build_cbt_prompt(chunk.text, ctx.taxonomy, ctx.sensitivity, PromptMode::Production);
            let raw = ctx.gateway.complete(&prompt.to_chat(), ctx.backend)?;
            output.diagnostics.model_id = Some(raw.model_id.clone());
            let report = match parse_cbt_output(&raw, ctx.taxonomy, chunk.text, CBT_PLUGIN_ID) {
                Ok(r) => r,
                Err(e) => {
                    unparseable += 1;
                    output
                        .diagnostics
                        .notes
                        .push(format!("chunk at {}: {e}", chunk.offset));
                    continue;
                }
            };
            merge_report_diagnostics(&mut output.diagnostics, &report.dropped, report.notes);
            output.findings.extend(report.accepted.into_iter().map(|mut f| {
                f.span = f.span.shifted(chunk.offset);
                f
            }));
        }
        if unparseable == chunks.len() {
            return Err(PluginError::Unparseable(
                "no structured payload in any model response".into(),
            ));
        }
        Ok(output)
    }

    fn config_digest(&self) -> String {
        digest_of(&[&self.descriptor.version, &self.chunk_chars.to_string(), "production"])
    }
}

fn merge_report_diagnostics(diag: &mut Diagnostics, dropped: &[DroppedEntry], notes: Vec<String>) {
    for d in dropped {
        diag.record_drop(d.reason.as_str());
    }
    diag.notes.extend(notes);
}

/// Binary moralization detection with values, demand and roles.
#[derive(Debug, Clone)]
pub struct MoralizationLlmPlugin {
    descriptor: PluginDescriptor,
}

impl Default for MoralizationLlmPlugin {
    fn default() -> Self {
        Self::new()
    }
}

impl MoralizationLlmPlugin {
    pub fn new() -> Self {
        Self {
            descriptor: PluginDescriptor {
                id: MORALIZATION_PLUGIN_ID.to_string(),
                kind: PluginKind::InProcess,
                display_name: "Moralization (LLM)".to_string(),
                trigger_domains: vec![TriggerDomain::Moralization],
                locales: vec![Locale::En, Locale::De],
                required_tier: Tier::InBrowser,
                version: env!("CARGO_PKG_VERSION").to_string(),
            },
        }
    }
}

impl Plugin for MoralizationLlmPlugin {
    fn descriptor(&self) -> &PluginDescriptor {
        &self.descriptor
    }

    fn detect(&self, ctx: &DetectContext<'_>) -> Result<PluginOutput, PluginError> {
        let prompt = build_moralization_prompt(ctx.text, ctx.locale, ctx.taxonomy);
        let raw = ctx.gateway.complete(&prompt.to_chat(), ctx.backend)?;
        let parsed = parse_moralization_output(&raw, ctx.taxonomy, ctx.text, ctx.locale)
            .map_err(|e| PluginError::Unparseable(e.to_string()))?;
        let mut diagnostics = Diagnostics {
            model_id: Some(raw.model_id),
            ..Diagnostics::default()
        };
        merge_report_diagnostics(&mut diagnostics, &parsed.report.dropped, parsed.report.notes);
        Ok(PluginOutput {
            findings: Vec::new(),
            moralization: Some(MoralizationOutcome {
                is_moralizing: parsed.is_moralizing,
                details: parsed.details,
            }),
            diagnostics,
        })
    }

    fn config_digest(&self) -> String {
        digest_of(&[&self.descriptor.version, "moralization"])
    }
}
