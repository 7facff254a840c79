//! Evaluation inputs: span-annotated technique datasets and binary
//! moralization instances.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::metrics::ArticleLabelSet;
use crate::findings::Locale;
use crate::taxonomy::Taxonomy;

pub const SHIPPED_ALIASES: &str = include_str!("../../data/semeval_aliases.json");

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("label `{0}` does not resolve to a trigger type")]
    UnresolvableLabel(String),
    #[error("alias `{alias}` points to unknown trigger `{target}`")]
    BadAlias { alias: String, target: String },
    #[error("article `{0}` has no text file")]
    MissingArticle(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Format(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// One annotated span. `technique` is the label as spelled in the dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldAnnotation {
    pub article_id: String,
    pub technique: String,
    pub start: usize,
    pub end: usize,
}

/// Parses `article_id<TAB>technique<TAB>start<TAB>end` rows. Blank lines are
/// skipped.
pub fn parse_gold_tsv(source: &str) -> Result<Vec<GoldAnnotation>, DatasetError> {
    let mut rows = Vec::new();
    for (i, line) in source.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |reason: String| DatasetError::MalformedRow {
            line: line_no,
            reason,
        };
        let cols: Vec<&str> = line.split('\t').map(str::trim).collect();
        if cols.len() != 4 {
            return Err(malformed(format!("expected 4 tab-separated columns, got {}", cols.len())));
        }
        if cols[0].is_empty() || cols[1].is_empty() {
            return Err(malformed("empty article id or technique".into()));
        }
        let start: usize = cols[2]
            .parse()
            .map_err(|_| malformed(format!("bad start offset `{}`", cols[2])))?;
        let end: usize = cols[3]
            .parse()
            .map_err(|_| malformed(format!("bad end offset `{}`", cols[3])))?;
        if end <= start {
            return Err(malformed(format!("end {end} is not after start {start}")));
        }
        rows.push(GoldAnnotation {
            article_id: cols[0].to_string(),
            technique: cols[1].to_string(),
            start,
            end,
        });
    }
    Ok(rows)
}

/// Maps dataset label spellings to trigger ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AliasTable {
    exact: BTreeMap<String, String>,
    folded: BTreeMap<String, String>,
    ids: BTreeSet<String>,
}

impl AliasTable {
    pub fn new(aliases: BTreeMap<String, String>, taxonomy: &Taxonomy) -> Result<Self, DatasetError> {
        for (alias, target) in &aliases {
            if taxonomy.trigger(target).is_none() {
                return Err(DatasetError::BadAlias {
                    alias: alias.clone(),
                    target: target.clone(),
                });
            }
        }
        let folded = aliases
            .iter()
            .map(|(k, v)| (k.to_lowercase(), v.clone()))
            .collect();
        Ok(Self {
            exact: aliases,
            folded,
            ids: taxonomy.trigger_ids().map(str::to_string).collect(),
        })
    }

    pub fn parse(json: &str, taxonomy: &Taxonomy) -> Result<Self, DatasetError> {
        let aliases: BTreeMap<String, String> =
            serde_json::from_str(json).map_err(|e| DatasetError::Format(e.to_string()))?;
        Self::new(aliases, taxonomy)
    }

    pub fn shipped(taxonomy: &Taxonomy) -> Result<Self, DatasetError> {
        Self::parse(SHIPPED_ALIASES, taxonomy)
    }

    /// Exact alias, then case-insensitive alias, then a trigger id.
    pub fn resolve(&self, label: &str) -> Option<&str> {
        let label = label.trim();
        if let Some(id) = self.exact.get(label) {
            return Some(id);
        }
        let lower = label.to_lowercase();
        self.folded
            .get(&lower)
            .map(String::as_str)
            .or_else(|| self.ids.get(&lower).map(String::as_str))
    }

    pub fn len(&self) -> usize {
        self.exact.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exact.is_empty()
    }
}

/// Collapses span annotations into one label set per article. Articles in
/// `index` without annotations get an empty set.
pub fn aggregate_to_article_labels(
    annotations: &[GoldAnnotation],
    index: &[String],
    aliases: &AliasTable,
) -> Result<Vec<ArticleLabelSet>, DatasetError> {
    let mut sets: BTreeMap<String, BTreeSet<String>> = index
        .iter()
        .map(|id| (id.clone(), BTreeSet::new()))
        .collect();
    for a in annotations {
        if a.end <= a.start {
            return Err(DatasetError::Format(format!(
                "annotation in article {} ends at {} before it starts at {}",
                a.article_id, a.end, a.start
            )));
        }
        let id = aliases
            .resolve(&a.technique)
            .ok_or_else(|| DatasetError::UnresolvableLabel(a.technique.clone()))?;
        sets.entry(a.article_id.clone())
            .or_default()
            .insert(id.to_string());
    }
    Ok(sets
        .into_iter()
        .map(|(article_id, labels)| ArticleLabelSet { article_id, labels })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Article {
    pub id: String,
    pub text: String,
}

/// Articles with their gold label sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TechniqueDataset {
    pub articles: Vec<Article>,
    pub gold: Vec<ArticleLabelSet>,
}

fn article_id_from_file(name: &str) -> Option<&str> {
    name.strip_suffix(".txt")
        .map(|stem| stem.strip_prefix("article").unwrap_or(stem))
        .filter(|id| !id.is_empty())
}

/// Loads a dataset from a label file and a directory of `article<ID>.txt`
/// files. `manifest` restricts the run to the listed ids; without it every
/// article file in the directory is used.
pub fn load_technique_dataset(
    labels_path: &Path,
    articles_dir: &Path,
    manifest: Option<&[String]>,
    aliases: &AliasTable,
) -> Result<TechniqueDataset, DatasetError> {
    let raw = fs::read_to_string(labels_path).map_err(io_err(labels_path))?;
    let annotations = parse_gold_tsv(&raw)?;

    let mut files: BTreeMap<String, PathBuf> = BTreeMap::new();
    for entry in fs::read_dir(articles_dir).map_err(io_err(articles_dir))? {
        let entry = entry.map_err(io_err(articles_dir))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(id) = article_id_from_file(&name) {
            files.insert(id.to_string(), entry.path());
        }
    }
    let index: Vec<String> = match manifest {
        Some(ids) => ids.to_vec(),
        None => files.keys().cloned().collect(),
    };
    let wanted: BTreeSet<&str> = index.iter().map(String::as_str).collect();
    let annotations: Vec<GoldAnnotation> = annotations
        .into_iter()
        .filter(|a| wanted.contains(a.article_id.as_str()))
        .collect();
    let gold = aggregate_to_article_labels(&annotations, &index, aliases)?;

    let mut articles = Vec::with_capacity(gold.len());
    for set in &gold {
        let path = files
            .get(&set.article_id)
            .ok_or_else(|| DatasetError::MissingArticle(set.article_id.clone()))?;
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        articles.push(Article {
            id: set.article_id.clone(),
            text,
        });
    }
    Ok(TechniqueDataset { articles, gold })
}

/// Reads a manifest: one article id per line, `#` comments allowed.
pub fn parse_manifest(source: &str) -> Vec<String> {
    source
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoralizationInstance {
    pub id: String,
    pub text: String,
    #[serde(default)]
    pub locale: Locale,
    /// Gold decision, 0 or 1.
    pub label: u8,
    /// Individual annotator decisions, when available.
    #[serde(default)]
    pub annotators: Vec<u8>,
}

/// Parses one JSON object per line.
pub fn parse_moralization_jsonl(source: &str) -> Result<Vec<MoralizationInstance>, DatasetError> {
    let mut out = Vec::new();
    for (i, line) in source.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let inst: MoralizationInstance =
            serde_json::from_str(line).map_err(|e| DatasetError::MalformedRow {
                line: i + 1,
                reason: e.to_string(),
            })?;
        if inst.label > 1 || inst.annotators.iter().any(|&a| a > 1) {
            return Err(DatasetError::MalformedRow {
                line: i + 1,
                reason: "labels must be 0 or 1".into(),
            });
        }
        out.push(inst);
    }
    Ok(out)
}
