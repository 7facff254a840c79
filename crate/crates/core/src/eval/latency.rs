//! Latency benchmark over a small corpus split into length bins.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{BackendConfig, ResultCache, Tier};
use crate::plugin::{AnalysisRequest, AnalyzeError, Analyzer};

pub const SHIPPED_BENCH_CORPUS: &str = include_str!("../../data/bench_corpus.json");
pub const TEXTS_PER_BIN: usize = 5;
pub const PATTERN_REPETITIONS: usize = 50;
pub const SERVER_REPETITIONS: usize = 20;

/// Value at nearest rank `ceil(pct/100 · N)` of an ascending sample.
/// Uses integer arithmetic so ranks are exact. `pct` is clamped to 1..=100.
pub fn percentile_nearest_rank(sorted: &[f64], pct: u32) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let pct = pct.clamp(1, 100) as usize;
    let rank = (pct * sorted.len()).div_ceil(100).max(1);
    Some(sorted[rank - 1])
}

pub fn median_and_p95(samples: &[f64]) -> Option<(f64, f64)> {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    Some((
        percentile_nearest_rank(&sorted, 50)?,
        percentile_nearest_rank(&sorted, 95)?,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LengthBin {
    Short,
    Medium,
    Long,
}

impl fmt::Display for LengthBin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LengthBin::Short => "short",
            LengthBin::Medium => "medium",
            LengthBin::Long => "long",
        })
    }
}

/// Character thresholds separating the bins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinThresholds {
    /// Texts up to this many characters are short.
    pub short_max_chars: usize,
    /// Texts up to this many characters (and above short) are medium.
    pub medium_max_chars: usize,
}

impl Default for BinThresholds {
    fn default() -> Self {
        Self {
            short_max_chars: 280,
            medium_max_chars: 1200,
        }
    }
}

impl BinThresholds {
    pub fn bin(&self, text: &str) -> LengthBin {
        let n = text.chars().count();
        if n <= self.short_max_chars {
            LengthBin::Short
        } else if n <= self.medium_max_chars {
            LengthBin::Medium
        } else {
            LengthBin::Long
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchText {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchCorpus {
    #[serde(default)]
    pub thresholds: BinThresholds,
    pub texts: Vec<BenchText>,
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("corpus must hold {TEXTS_PER_BIN} texts per bin, found {0:?}")]
    Unbalanced(BTreeMap<LengthBin, usize>),
    #[error("malformed corpus: {0}")]
    Malformed(String),
    #[error("repetitions must be at least 1")]
    NoRepetitions,
    #[error("analysis failed: {0}")]
    Analysis(#[from] AnalyzeError),
}

impl BenchCorpus {
    pub fn parse(json: &str) -> Result<Self, BenchError> {
        let corpus: Self = serde_json::from_str(json).map_err(|e| BenchError::Malformed(e.to_string()))?;
        corpus.validate()?;
        Ok(corpus)
    }

    pub fn shipped() -> Self {
        Self::parse(SHIPPED_BENCH_CORPUS).expect("shipped bench corpus is valid")
    }

    pub fn with_thresholds(mut self, thresholds: BinThresholds) -> Result<Self, BenchError> {
        self.thresholds = thresholds;
        self.validate()?;
        Ok(self)
    }

    pub fn bin_counts(&self) -> BTreeMap<LengthBin, usize> {
        let mut counts = BTreeMap::from([(LengthBin::Short, 0), (LengthBin::Medium, 0), (LengthBin::Long, 0)]);
        for t in &self.texts {
            *counts.entry(self.thresholds.bin(&t.text)).or_default() += 1;
        }
        counts
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let counts = self.bin_counts();
        if counts.values().all(|&c| c == TEXTS_PER_BIN) {
            Ok(())
        } else {
            Err(BenchError::Unbalanced(counts))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinLatency {
    pub bin: LengthBin,
    pub n: usize,
    pub median_ms: f64,
    pub p95_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassLatency {
    pub n: usize,
    pub median_ms: f64,
    pub p95_ms: f64,
    pub bins: Vec<BinLatency>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub tier: Tier,
    pub plugin_id: String,
    pub texts: usize,
    pub repetitions: usize,
    /// Cache disabled.
    pub uncached: PassLatency,
    /// Every request answered from a warmed cache.
    pub cached: Option<PassLatency>,
}

fn summarize(samples: &[(LengthBin, f64)]) -> PassLatency {
    let all: Vec<f64> = samples.iter().map(|s| s.1).collect();
    let (median_ms, p95_ms) = median_and_p95(&all).unwrap_or((0.0, 0.0));
    let bins = [LengthBin::Short, LengthBin::Medium, LengthBin::Long]
        .into_iter()
        .filter_map(|bin| {
            let values: Vec<f64> = samples.iter().filter(|s| s.0 == bin).map(|s| s.1).collect();
            let (median_ms, p95_ms) = median_and_p95(&values)?;
            Some(BinLatency {
                bin,
                n: values.len(),
                median_ms,
                p95_ms,
            })
        })
        .collect();
    PassLatency {
        n: all.len(),
        median_ms,
        p95_ms,
        bins,
    }
}

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub plugin_id: String,
    pub repetitions: usize,
    pub cached_pass: bool,
}

impl BenchOptions {
    /// Defaults: 50 repetitions at the pattern tier, 20 otherwise.
    pub fn for_tier(plugin_id: impl Into<String>, tier: Tier) -> Self {
        Self {
            plugin_id: plugin_id.into(),
            repetitions: if tier == Tier::Pattern {
                PATTERN_REPETITIONS
            } else {
                SERVER_REPETITIONS
            },
            cached_pass: true,
        }
    }
}

fn time_request(
    analyzer: &Analyzer,
    request: &AnalysisRequest,
    backend: &BackendConfig,
) -> Result<f64, BenchError> {
    let started = Instant::now();
    let result = analyzer.analyze_with_backend(request, Some(backend))?;
    let ms = started.elapsed().as_secs_f64() * 1000.0;
    if let Some(err) = result.plugins.iter().find_map(|p| p.diagnostics.error.clone()) {
        return Err(BenchError::Malformed(err));
    }
    Ok(ms)
}

/// Times `analyze` for every text `repetitions` times with the cache
/// disabled, then optionally again against a warmed cache.
pub fn bench_latency(
    analyzer: &Analyzer,
    corpus: &BenchCorpus,
    backend: &BackendConfig,
    options: &BenchOptions,
) -> Result<LatencyReport, BenchError> {
    if options.repetitions == 0 {
        return Err(BenchError::NoRepetitions);
    }
    corpus.validate()?;
    let requests: Vec<(LengthBin, AnalysisRequest)> = corpus
        .texts
        .iter()
        .map(|t| {
            (
                corpus.thresholds.bin(&t.text),
                AnalysisRequest::new(t.id.clone(), t.text.clone(), &[options.plugin_id.as_str()]),
            )
        })
        .collect();

    let uncached_analyzer = analyzer.clone().without_cache();
    let mut samples = Vec::with_capacity(requests.len() * options.repetitions);
    for (bin, request) in &requests {
        for _ in 0..options.repetitions {
            samples.push((*bin, time_request(&uncached_analyzer, request, backend)?));
        }
    }
    let uncached = summarize(&samples);

    let cached = if options.cached_pass {
        let cached_analyzer = analyzer.clone().with_cache(Arc::new(ResultCache::default()));
        for (_, request) in &requests {
            time_request(&cached_analyzer, request, backend)?;
        }
        let mut samples = Vec::with_capacity(samples.capacity());
        for (bin, request) in &requests {
            for _ in 0..options.repetitions {
                samples.push((*bin, time_request(&cached_analyzer, request, backend)?));
            }
        }
        Some(summarize(&samples))
    } else {
        None
    };

    Ok(LatencyReport {
        tier: backend.tier,
        plugin_id: options.plugin_id.clone(),
        texts: requests.len(),
        repetitions: options.repetitions,
        uncached,
        cached,
    })
}
