//! End-to-end evaluation runs against a model backend.

use std::collections::BTreeSet;

use serde::Serialize;
use thiserror::Error;

use super::dataset::{DatasetError, MoralizationInstance, TechniqueDataset};
use super::metrics::{aggregate_pabak, macro_f1_binary, micro_f1, AgreementReport, ArticleLabelSet, MetricError, MetricReport};
use crate::gateway::{BackendConfig, Gateway, GatewayError};
use crate::llm::{
    build_cbt_prompt, build_moralization_prompt, parse_benchmark_labels, parse_cbt_output,
    parse_moralization_output, PromptMode, CBT_PLUGIN_ID,
};
use crate::taxonomy::Taxonomy;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("backend failure: {0}")]
    Backend(#[from] GatewayError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArticleOutcome {
    pub article_id: String,
    pub gold: BTreeSet<String>,
    pub predicted: BTreeSet<String>,
    pub dropped: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CbtEvalReport {
    pub mode: PromptMode,
    pub model_id: String,
    pub metrics: MetricReport,
    pub articles: Vec<ArticleOutcome>,
}

/// Prompts the backend once per article, parses the label set and scores
/// it against gold with micro-F1. A response that cannot be parsed counts as
/// an empty prediction and is logged on the article; backend failures abort.
pub fn run_cbt_eval(
    dataset: &TechniqueDataset,
    taxonomy: &Taxonomy,
    gateway: &Gateway,
    backend: &BackendConfig,
    mode: PromptMode,
) -> Result<CbtEvalReport, EvalError> {
    let mut outcomes = Vec::with_capacity(dataset.articles.len());
    let mut predictions = Vec::with_capacity(dataset.articles.len());
    let mut model_id = backend.model_id.clone();
    for (article, gold) in dataset.articles.iter().zip(&dataset.gold) {
        let prompt = build_cbt_prompt(&article.text, taxonomy, 0.0, mode);
        let raw = gateway.complete(&prompt.to_chat(), backend)?;
        model_id = raw.model_id.clone();
        let parsed = match mode {
            PromptMode::Benchmark => parse_benchmark_labels(&raw.text, taxonomy)
                .map(|(labels, report)| (labels, report.dropped.len())),
            PromptMode::Production => {
                parse_cbt_output(&raw, taxonomy, &article.text, CBT_PLUGIN_ID).map(|report| {
                    let labels = report
                        .accepted
                        .iter()
                        .map(|f| f.trigger_type_id.clone())
                        .collect();
                    (labels, report.dropped.len())
                })
            }
        };
        let (predicted, dropped, error) = match parsed {
            Ok((labels, dropped)) => (labels, dropped, None),
            Err(e) => (BTreeSet::new(), 0, Some(e.to_string())),
        };
        predictions.push(ArticleLabelSet {
            article_id: article.id.clone(),
            labels: predicted.clone(),
        });
        outcomes.push(ArticleOutcome {
            article_id: article.id.clone(),
            gold: gold.labels.clone(),
            predicted,
            dropped,
            error,
        });
    }
    let metrics = micro_f1(&dataset.gold, &predictions)?;
    Ok(CbtEvalReport {
        mode,
        model_id,
        metrics,
        articles: outcomes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InstanceOutcome {
    pub id: String,
    pub gold: bool,
    pub predicted: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MoralizationEvalReport {
    pub model_id: String,
    pub metrics: MetricReport,
    /// Present when every instance carries the same number of annotator labels.
    pub agreement: Option<AgreementReport>,
    pub instances: Vec<InstanceOutcome>,
}

/// Binary moralization detection scored with macro-F1, plus PABAK against
/// individual annotators when their labels are available.
pub fn run_moralization_eval(
    instances: &[MoralizationInstance],
    taxonomy: &Taxonomy,
    gateway: &Gateway,
    backend: &BackendConfig,
) -> Result<MoralizationEvalReport, EvalError> {
    let mut outcomes = Vec::with_capacity(instances.len());
    let mut model_id = backend.model_id.clone();
    for inst in instances {
        let prompt = build_moralization_prompt(&inst.text, inst.locale, taxonomy);
        let raw = gateway.complete(&prompt.to_chat(), backend)?;
        model_id = raw.model_id.clone();
        let (predicted, error) = match parse_moralization_output(&raw, taxonomy, &inst.text, inst.locale) {
            Ok(p) => (p.is_moralizing, None),
            Err(e) => (false, Some(e.to_string())),
        };
        outcomes.push(InstanceOutcome {
            id: inst.id.clone(),
            gold: inst.label == 1,
            predicted,
            error,
        });
    }
    let gold: Vec<bool> = outcomes.iter().map(|o| o.gold).collect();
    let pred: Vec<bool> = outcomes.iter().map(|o| o.predicted).collect();
    let metrics = macro_f1_binary(&gold, &pred)?;

    let raters = instances.first().map_or(0, |i| i.annotators.len());
    let agreement = if raters > 0 && instances.iter().all(|i| i.annotators.len() == raters) {
        let columns: Vec<Vec<bool>> = (0..raters)
            .map(|r| instances.iter().map(|i| i.annotators[r] == 1).collect())
            .collect();
        Some(aggregate_pabak(&pred, &columns)?)
    } else {
        None
    };
    Ok(MoralizationEvalReport {
        model_id,
        metrics,
        agreement,
        instances: outcomes,
    })
}
