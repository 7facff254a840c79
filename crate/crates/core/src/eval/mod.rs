//! Evaluation harness: technique detection scored with micro-F1,
//! moralization scored with macro-F1 and PABAK, and latency benchmarks.

pub mod dataset;
pub mod latency;
pub mod metrics;
pub mod runner;

pub use dataset::{
    aggregate_to_article_labels, load_technique_dataset, parse_gold_tsv, parse_manifest,
    parse_moralization_jsonl, AliasTable, Article, DatasetError, GoldAnnotation,
    MoralizationInstance, TechniqueDataset,
};
pub use latency::{
    bench_latency, median_and_p95, percentile_nearest_rank, BenchCorpus, BenchError, BenchOptions,
    BinThresholds, LatencyReport, LengthBin,
};
pub use metrics::{
    aggregate_pabak, macro_f1_binary, micro_f1, observed_agreement, pabak, pabak_from_agreement,
    to_f64, to_flags, AgreementReport, ArticleLabelSet, LabelCounts, MetricError, MetricReport,
    Rational,
};
pub use runner::{run_cbt_eval, run_moralization_eval, CbtEvalReport, EvalError, MoralizationEvalReport};
