//! Keyword and phrase matching against the trigger taxonomy.
//!
//! Rules are literal words or phrases. A trailing `*` allows any further
//! letters or digits at the end of the final word (inflection wildcard).
//! Whitespace inside a pattern matches any run of whitespace in the text.
//! Matches never start or end inside a word, where a word character is a
//! Unicode letter or digit.
//!
//! All rules are compiled into two character tries (case-folded and
//! case-sensitive) that are walked once from every admissible start offset.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::findings::{Finding, Locale, Severity, SourceText};
use crate::gateway::Tier;
use crate::plugin::{
    DetectContext, Plugin, PluginDescriptor, PluginError, PluginKind, PluginOutput, TriggerDomain,
};
use crate::taxonomy::Taxonomy;

pub const SHIPPED_RULES: &str = include_str!("../data/rules.json");
pub const PLUGIN_ID: &str = "cbt-regex";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleKind {
    Keyword,
    Phrase,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatternRule {
    pub trigger_type_id: String,
    pub kind: RuleKind,
    pub pattern: String,
    #[serde(default = "default_true")]
    pub case_insensitive: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub severity: Option<Severity>,
    pub explanation_template: String,
}

impl PatternRule {
    /// The pattern with its wildcard removed and whitespace collapsed.
    pub fn literal_text(&self) -> String {
        let body = self.pattern.trim().trim_end_matches('*');
        body.split_whitespace().collect::<Vec<_>>().join(" ")
    }

    pub fn has_wildcard(&self) -> bool {
        self.pattern.trim().ends_with('*')
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RuleError {
    #[error("empty rule set")]
    EmptyRuleSet,
    #[error("rule {index}: unknown trigger type `{trigger}`")]
    UnknownTrigger { index: usize, trigger: String },
    #[error("rule {index}: {reason}")]
    InvalidPattern { index: usize, reason: String },
    #[error("malformed rule file: {0}")]
    Malformed(String),
}

pub fn parse_rules(source: &str) -> Result<Vec<PatternRule>, RuleError> {
    serde_json::from_str(source).map_err(|e| RuleError::Malformed(e.to_string()))
}

pub(crate) fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

/// Single-char case folding so that folded and original texts share offsets.
pub(crate) fn fold(c: char) -> char {
    let mut lower = c.to_lowercase();
    match (lower.next(), lower.next()) {
        (Some(l), None) => l,
        _ => c,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Edge {
    Char(char),
    Space,
}

#[derive(Debug, Default)]
struct Node {
    children: HashMap<Edge, usize>,
    /// (rule index, wildcard)
    accepts: Vec<(usize, bool)>,
}

#[derive(Debug)]
struct Trie {
    nodes: Vec<Node>,
}

impl Trie {
    fn new() -> Self {
        Self {
            nodes: vec![Node::default()],
        }
    }

    fn is_empty(&self) -> bool {
        self.nodes.len() == 1
    }

    fn insert(&mut self, edges: impl Iterator<Item = Edge>, rule: usize, wildcard: bool) {
        let mut at = 0;
        for edge in edges {
            at = match self.nodes[at].children.get(&edge) {
                Some(&next) => next,
                None => {
                    self.nodes.push(Node::default());
                    let next = self.nodes.len() - 1;
                    self.nodes[at].children.insert(edge, next);
                    next
                }
            };
        }
        self.nodes[at].accepts.push((rule, wildcard));
    }

    /// Every `(rule, end)` whose pattern matches starting at `start`.
    fn walk(&self, chars: &[char], raw: &[char], start: usize, out: &mut Vec<(usize, usize)>) {
        let n = chars.len();
        let mut at = 0;
        let mut i = start;
        loop {
            for &(rule, wildcard) in &self.nodes[at].accepts {
                let mut end = i;
                if wildcard {
                    while end < n && is_word_char(raw[end]) {
                        end += 1;
                    }
                }
                if end > start && boundary_at_end(raw, end) {
                    out.push((rule, end));
                }
            }
            if i >= n {
                break;
            }
            let node = &self.nodes[at];
            if raw[i].is_whitespace() {
                match node.children.get(&Edge::Space) {
                    Some(&next) => {
                        while i < n && raw[i].is_whitespace() {
                            i += 1;
                        }
                        at = next;
                        continue;
                    }
                    None => break,
                }
            }
            match node.children.get(&Edge::Char(chars[i])) {
                Some(&next) => {
                    at = next;
                    i += 1;
                }
                None => break,
            }
        }
    }
}

pub(crate) fn boundary_at_start(raw: &[char], start: usize) -> bool {
    start == 0 || start >= raw.len() || !(is_word_char(raw[start - 1]) && is_word_char(raw[start]))
}

pub(crate) fn boundary_at_end(raw: &[char], end: usize) -> bool {
    end == 0 || end >= raw.len() || !(is_word_char(raw[end - 1]) && is_word_char(raw[end]))
}

fn pattern_edges(literal: &str, case_insensitive: bool) -> impl Iterator<Item = Edge> + '_ {
    literal.chars().map(move |c| {
        if c == ' ' {
            Edge::Space
        } else if case_insensitive {
            Edge::Char(fold(c))
        } else {
            Edge::Char(c)
        }
    })
}

#[derive(Debug)]
struct CompiledRule {
    rule: PatternRule,
    severity: Severity,
    bias: String,
}

/// Immutable matcher over a validated rule set.
#[derive(Debug)]
pub struct CompiledMatcher {
    rules: Vec<CompiledRule>,
    folded: Trie,
    exact: Trie,
}

/// A raw match before it becomes a [`Finding`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RuleMatch {
    pub rule: usize,
    pub start: usize,
    pub end: usize,
}

fn validate_rule(index: usize, rule: &PatternRule, taxonomy: &Taxonomy) -> Result<(), RuleError> {
    let invalid = |reason: &str| RuleError::InvalidPattern {
        index,
        reason: reason.to_string(),
    };
    if taxonomy.trigger(&rule.trigger_type_id).is_none() {
        return Err(RuleError::UnknownTrigger {
            index,
            trigger: rule.trigger_type_id.clone(),
        });
    }
    let pattern = rule.pattern.trim();
    let body = pattern.strip_suffix('*').unwrap_or(pattern);
    if body.trim().is_empty() {
        return Err(invalid("pattern is empty"));
    }
    if body.contains('*') {
        return Err(invalid("wildcard is only allowed at the end of the pattern"));
    }
    if rule.has_wildcard() && !body.chars().last().is_some_and(is_word_char) {
        return Err(invalid("wildcard must follow a word character"));
    }
    let words = body.split_whitespace().count();
    match rule.kind {
        RuleKind::Keyword if words != 1 => Err(invalid("keyword rules hold a single word")),
        RuleKind::Phrase if words < 2 => Err(invalid("phrase rules hold at least two words")),
        _ => Ok(()),
    }?;
    if rule.explanation_template.trim().is_empty() {
        return Err(invalid("explanation template is empty"));
    }
    Ok(())
}

pub fn compile_rules(taxonomy: &Taxonomy, rules: &[PatternRule]) -> Result<CompiledMatcher, RuleError> {
    if rules.is_empty() {
        return Err(RuleError::EmptyRuleSet);
    }
    let mut compiled = Vec::with_capacity(rules.len());
    let mut folded = Trie::new();
    let mut exact = Trie::new();
    for (index, rule) in rules.iter().enumerate() {
        validate_rule(index, rule, taxonomy)?;
        let trigger = taxonomy.trigger(&rule.trigger_type_id).expect("validated");
        let literal = rule.literal_text();
        let trie = if rule.case_insensitive {
            &mut folded
        } else {
            &mut exact
        };
        trie.insert(
            pattern_edges(&literal, rule.case_insensitive),
            index,
            rule.has_wildcard(),
        );
        compiled.push(CompiledRule {
            rule: rule.clone(),
            severity: rule.severity.unwrap_or(trigger.default_severity),
            bias: trigger.bias_triggered.clone(),
        });
    }
    Ok(CompiledMatcher {
        rules: compiled,
        folded,
        exact,
    })
}

impl CompiledMatcher {
    pub fn rule_count(&self) -> usize {
        self.rules.len()
    }

    pub fn rule(&self, index: usize) -> &PatternRule {
        &self.rules[index].rule
    }

    pub fn rules(&self) -> impl Iterator<Item = &PatternRule> {
        self.rules.iter().map(|r| &r.rule)
    }

    /// All matches, ordered by start offset then rule index. Per rule, the
    /// occurrences are non-overlapping and chosen leftmost first.
    pub fn find_matches(&self, text: &str) -> Vec<RuleMatch> {
        let raw: Vec<char> = text.chars().collect();
        let folded: Vec<char> = raw.iter().map(|&c| fold(c)).collect();
        let mut hits = Vec::new();
        let mut scratch = Vec::new();
        let mut last_end: Vec<usize> = vec![0; self.rules.len()];
        for start in 0..raw.len() {
            if !boundary_at_start(&raw, start) {
                continue;
            }
            scratch.clear();
            if !self.folded.is_empty() {
                self.folded.walk(&folded, &raw, start, &mut scratch);
            }
            if !self.exact.is_empty() {
                self.exact.walk(&raw, &raw, start, &mut scratch);
            }
            scratch.sort_unstable();
            for &(rule, end) in &scratch {
                if start >= last_end[rule] {
                    last_end[rule] = end;
                    hits.push(RuleMatch { rule, start, end });
                }
            }
        }
        hits
    }

    /// One finding per match occurrence, confidence 1.0.
    pub fn detect(&self, text: &str) -> Vec<Finding> {
        let source = SourceText::new(text);
        self.find_matches(text)
            .into_iter()
            .enumerate()
            .map(|(i, m)| {
                let compiled = &self.rules[m.rule];
                let excerpt = source.slice(m.start, m.end).unwrap_or_default().to_string();
                Finding {
                    id: format!("{PLUGIN_ID}#{i}"),
                    plugin_id: PLUGIN_ID.to_string(),
                    trigger_type_id: compiled.rule.trigger_type_id.clone(),
                    bias_triggered: compiled.bias.clone(),
                    severity: compiled.severity,
                    explanation: compiled.rule.explanation_template.replace("{match}", &excerpt),
                    span: crate::findings::TextSpan {
                        start: m.start,
                        end: m.end,
                        excerpt,
                    },
                    confidence: 1.0,
                }
            })
            .collect()
    }
}

/// The `cbt-regex` plugin. Never touches the gateway.
pub struct PatternPlugin {
    descriptor: PluginDescriptor,
    matcher: CompiledMatcher,
    digest: String,
}

impl PatternPlugin {
    pub fn new(matcher: CompiledMatcher) -> Self {
        let mut h = Sha256::new();
        for r in matcher.rules() {
            h.update(serde_json::to_vec(r).unwrap_or_default());
        }
        Self {
            descriptor: PluginDescriptor {
                id: PLUGIN_ID.to_string(),
                kind: PluginKind::InProcess,
                display_name: "Pattern matcher".to_string(),
                trigger_domains: vec![TriggerDomain::CognitiveBias],
                locales: vec![Locale::En, Locale::De],
                required_tier: Tier::Pattern,
                version: env!("CARGO_PKG_VERSION").to_string(),
            },
            matcher,
            digest: hex::encode(h.finalize()),
        }
    }

    /// Compiles the shipped rule file against `taxonomy`.
    pub fn shipped(taxonomy: &Taxonomy) -> Result<Self, RuleError> {
        let rules = parse_rules(SHIPPED_RULES)?;
        Ok(Self::new(compile_rules(taxonomy, &rules)?))
    }

    pub fn matcher(&self) -> &CompiledMatcher {
        &self.matcher
    }
}

impl Plugin for PatternPlugin {
    fn descriptor(&self) -> &PluginDescriptor {
        &self.descriptor
    }

    fn detect(&self, ctx: &DetectContext<'_>) -> Result<PluginOutput, PluginError> {
        Ok(PluginOutput {
            findings: self.matcher.detect(ctx.text),
            ..PluginOutput::default()
        })
    }

    fn config_digest(&self) -> String {
        self.digest.clone()
    }
}
