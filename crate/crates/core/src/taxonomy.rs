//! The trigger/moral-value catalog shared by detection, evaluation and display.
//!
//! A [`Taxonomy`] is loaded once from its canonical JSON document and is
//! immutable afterwards. The canonical form sorts every list by `id` and is
//! pretty-printed with a trailing newline, so that `serialize(load(x))` is
//! byte-identical for any canonical `x`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::findings::Severity;

/// The catalog shipped with the crate.
pub const SHIPPED_TAXONOMY: &str = include_str!("../data/taxonomy.json");

pub const SHIPPED_TRIGGER_COUNT: usize = 14;
pub const SHIPPED_MORAL_CATEGORY_COUNT: usize = 12;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TaxonomyError {
    #[error("malformed taxonomy document: {0}")]
    Malformed(String),
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("missing required field: {0}")]
    MissingField(String),
    #[error("invalid id `{0}`: ids are non-empty lowercase-kebab strings")]
    InvalidId(String),
    #[error("expected {expected} {what}, found {found}")]
    WrongCount {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("duplicate moral foundation/polarity pair ({0}, {1})")]
    DuplicateFoundation(String, Polarity),
    #[error("unknown trigger `{0}`")]
    UnknownTrigger(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TriggerType {
    pub id: String,
    pub display_name: String,
    pub bias_triggered: String,
    pub definition: String,
    pub default_severity: Severity,
    pub locale_labels: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Virtue,
    Vice,
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Polarity::Virtue => "virtue",
            Polarity::Vice => "vice",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MoralCategory {
    pub id: String,
    pub foundation: String,
    pub polarity: Polarity,
    pub locale_labels: BTreeMap<String, String>,
}

/// Demand kinds are fixed and not part of the catalog document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DemandKind {
    Explicit,
    Implicit,
}

impl DemandKind {
    pub const ALL: [DemandKind; 2] = [DemandKind::Explicit, DemandKind::Implicit];

    pub fn as_str(self) -> &'static str {
        match self {
            DemandKind::Explicit => "explicit",
            DemandKind::Implicit => "implicit",
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TaxonomyDocument {
    version: Option<String>,
    trigger_types: Option<Vec<TriggerType>>,
    moral_categories: Option<Vec<MoralCategory>>,
    protagonist_roles: Option<Vec<String>>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Require exactly 14 trigger types and 12 moral categories.
    pub strict_counts: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Taxonomy {
    version: String,
    trigger_types: Vec<TriggerType>,
    moral_categories: Vec<MoralCategory>,
    protagonist_roles: Vec<String>,
    trigger_index: HashMap<String, usize>,
}

fn is_kebab_id(id: &str) -> bool {
    !id.is_empty()
        && !id.starts_with('-')
        && !id.ends_with('-')
        && !id.contains("--")
        && id
            .chars()
            .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '-')
}

fn check_ids<'a>(ids: impl Iterator<Item = &'a str>) -> Result<(), TaxonomyError> {
    let mut seen = HashSet::new();
    for id in ids {
        if !is_kebab_id(id) {
            return Err(TaxonomyError::InvalidId(id.to_string()));
        }
        if !seen.insert(id) {
            return Err(TaxonomyError::DuplicateId(id.to_string()));
        }
    }
    Ok(())
}

impl Taxonomy {
    /// Parses and validates a taxonomy document. Unknown fields are rejected.
    pub fn load(source: &[u8], options: LoadOptions) -> Result<Self, TaxonomyError> {
        let text = std::str::from_utf8(source)
            .map_err(|e| TaxonomyError::Malformed(format!("not UTF-8: {e}")))?;
        if text.trim().is_empty() {
            return Err(TaxonomyError::Malformed("empty document".into()));
        }
        let doc: TaxonomyDocument = serde_json::from_str(text).map_err(|e| {
            let msg = e.to_string();
            match msg.strip_prefix("missing field ") {
                Some(field) => TaxonomyError::MissingField(field.to_string()),
                None => TaxonomyError::Malformed(msg),
            }
        })?;

        let version = doc
            .version
            .ok_or_else(|| TaxonomyError::MissingField("version".into()))?;
        let mut trigger_types = doc
            .trigger_types
            .ok_or_else(|| TaxonomyError::MissingField("trigger_types".into()))?;
        let mut moral_categories = doc
            .moral_categories
            .ok_or_else(|| TaxonomyError::MissingField("moral_categories".into()))?;
        let mut protagonist_roles = doc
            .protagonist_roles
            .ok_or_else(|| TaxonomyError::MissingField("protagonist_roles".into()))?;

        if version.trim().is_empty() {
            return Err(TaxonomyError::MissingField("version".into()));
        }

        check_ids(trigger_types.iter().map(|t| t.id.as_str()))?;
        for t in &trigger_types {
            if t.bias_triggered.trim().is_empty() {
                return Err(TaxonomyError::MissingField(format!(
                    "trigger_types[{}].bias_triggered",
                    t.id
                )));
            }
            if !t.locale_labels.contains_key("en") {
                return Err(TaxonomyError::MissingField(format!(
                    "trigger_types[{}].locale_labels.en",
                    t.id
                )));
            }
        }

        check_ids(moral_categories.iter().map(|m| m.id.as_str()))?;
        let mut pairs = HashSet::new();
        for m in &moral_categories {
            if m.foundation.trim().is_empty() {
                return Err(TaxonomyError::MissingField(format!(
                    "moral_categories[{}].foundation",
                    m.id
                )));
            }
            for locale in ["en", "de"] {
                if !m.locale_labels.contains_key(locale) {
                    return Err(TaxonomyError::MissingField(format!(
                        "moral_categories[{}].locale_labels.{locale}",
                        m.id
                    )));
                }
            }
            if !pairs.insert((m.foundation.clone(), m.polarity)) {
                return Err(TaxonomyError::DuplicateFoundation(
                    m.foundation.clone(),
                    m.polarity,
                ));
            }
        }

        check_ids(protagonist_roles.iter().map(String::as_str))?;

        if options.strict_counts {
            if trigger_types.len() != SHIPPED_TRIGGER_COUNT {
                return Err(TaxonomyError::WrongCount {
                    what: "trigger types",
                    expected: SHIPPED_TRIGGER_COUNT,
                    found: trigger_types.len(),
                });
            }
            if moral_categories.len() != SHIPPED_MORAL_CATEGORY_COUNT {
                return Err(TaxonomyError::WrongCount {
                    what: "moral categories",
                    expected: SHIPPED_MORAL_CATEGORY_COUNT,
                    found: moral_categories.len(),
                });
            }
        }

        trigger_types.sort_by(|a, b| a.id.cmp(&b.id));
        moral_categories.sort_by(|a, b| a.id.cmp(&b.id));
        protagonist_roles.sort();

        let trigger_index = trigger_types
            .iter()
            .enumerate()
            .map(|(i, t)| (t.id.clone(), i))
            .collect();

        Ok(Self {
            version,
            trigger_types,
            moral_categories,
            protagonist_roles,
            trigger_index,
        })
    }

    /// The shipped catalog, loaded with strict counts.
    pub fn shipped() -> Self {
        Self::load(
            SHIPPED_TAXONOMY.as_bytes(),
            LoadOptions {
                strict_counts: true,
            },
        )
        .expect("shipped taxonomy is valid")
    }

    /// Canonical serialization: pretty JSON, lists sorted by id, trailing newline.
    pub fn to_canonical_json(&self) -> String {
        let doc = TaxonomyDocument {
            version: Some(self.version.clone()),
            trigger_types: Some(self.trigger_types.clone()),
            moral_categories: Some(self.moral_categories.clone()),
            protagonist_roles: Some(self.protagonist_roles.clone()),
        };
        let mut out = serde_json::to_string_pretty(&doc).expect("taxonomy serializes");
        out.push('\n');
        out
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn trigger_types(&self) -> &[TriggerType] {
        &self.trigger_types
    }

    pub fn moral_categories(&self) -> &[MoralCategory] {
        &self.moral_categories
    }

    pub fn protagonist_roles(&self) -> &[String] {
        &self.protagonist_roles
    }

    pub fn trigger(&self, id: &str) -> Option<&TriggerType> {
        self.trigger_index.get(id).map(|&i| &self.trigger_types[i])
    }

    /// Case-insensitive lookup, used for labels coming back from models.
    pub fn trigger_ci(&self, label: &str) -> Option<&TriggerType> {
        let label = label.trim();
        self.trigger(label).or_else(|| {
            let lower = label.to_lowercase();
            self.trigger(&lower)
        })
    }

    pub fn bias_for(&self, trigger_id: &str) -> Result<&str, TaxonomyError> {
        self.trigger(trigger_id)
            .map(|t| t.bias_triggered.as_str())
            .ok_or_else(|| TaxonomyError::UnknownTrigger(trigger_id.to_string()))
    }

    pub fn has_moral_category(&self, id: &str) -> bool {
        self.moral_categories.iter().any(|m| m.id == id)
    }

    pub fn has_role(&self, id: &str) -> bool {
        self.protagonist_roles.iter().any(|r| r == id)
    }

    pub fn trigger_ids(&self) -> impl Iterator<Item = &str> {
        self.trigger_types.iter().map(|t| t.id.as_str())
    }
}
