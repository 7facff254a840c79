//! Plugin contract, registry and the analysis fan-out.

pub mod remote;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::findings::{dedupe_findings, Finding, Locale, MoralizationFinding, SourceText};
use crate::gateway::{BackendConfig, CacheKeyParts, Gateway, GatewayError, ResultCache, Tier};
use crate::taxonomy::Taxonomy;

pub use remote::{discover_remote_plugins, RemotePlugin};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PluginKind {
    InProcess,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TriggerDomain {
    CognitiveBias,
    Moralization,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PluginDescriptor {
    pub id: String,
    pub kind: PluginKind,
    pub display_name: String,
    pub trigger_domains: Vec<TriggerDomain>,
    pub locales: Vec<Locale>,
    pub required_tier: Tier,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisRequest {
    pub content_id: String,
    pub text: String,
    #[serde(default)]
    pub locale: Locale,
    #[serde(default)]
    pub sensitivity: f64,
    pub plugin_ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backend: Option<BackendConfig>,
}

impl AnalysisRequest {
    pub fn new(content_id: impl Into<String>, text: impl Into<String>, plugin_ids: &[&str]) -> Self {
        Self {
            content_id: content_id.into(),
            text: text.into(),
            locale: Locale::En,
            sensitivity: 0.0,
            plugin_ids: plugin_ids.iter().map(|s| s.to_string()).collect(),
            backend: None,
        }
    }

    pub fn validate(&self) -> Result<(), AnalyzeError> {
        if self.text.is_empty() {
            return Err(AnalyzeError::InvalidRequest("text is empty".into()));
        }
        if !(0.0..=1.0).contains(&self.sensitivity) {
            return Err(AnalyzeError::InvalidRequest(format!(
                "sensitivity {} outside [0, 1]",
                self.sensitivity
            )));
        }
        if self.plugin_ids.is_empty() {
            return Err(AnalyzeError::InvalidRequest("plugin_ids is empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoralizationOutcome {
    pub is_moralizing: bool,
    pub details: Option<MoralizationFinding>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Model entries or findings discarded during parsing/validation.
    pub dropped: usize,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub dropped_reasons: BTreeMap<String, usize>,
    /// Findings removed by the sensitivity threshold.
    pub filtered: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl Diagnostics {
    pub fn record_drop(&mut self, reason: &str) {
        self.dropped += 1;
        *self.dropped_reasons.entry(reason.to_string()).or_default() += 1;
    }
}

/// What a plugin's detect function returns.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PluginOutput {
    pub findings: Vec<Finding>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub moralization: Option<MoralizationOutcome>,
    #[serde(default)]
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PluginResult {
    pub plugin_id: String,
    pub findings: Vec<Finding>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub moralization: Option<MoralizationOutcome>,
    pub elapsed_ms: f64,
    pub from_cache: bool,
    pub diagnostics: Diagnostics,
}

impl PluginResult {
    pub fn failed(&self) -> bool {
        self.diagnostics.error.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisResult {
    pub content_id: String,
    pub plugins: Vec<PluginResult>,
}

impl AnalysisResult {
    pub fn plugin(&self, id: &str) -> Option<&PluginResult> {
        self.plugins.iter().find(|p| p.plugin_id == id)
    }

    pub fn all_findings(&self) -> impl Iterator<Item = &Finding> {
        self.plugins.iter().flat_map(|p| p.findings.iter())
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum PluginError {
    #[error(transparent)]
    Backend(#[from] GatewayError),
    #[error("model output unparseable: {0}")]
    Unparseable(String),
    #[error("plugin requires tier {required} but backend is {actual}")]
    TierTooLow { required: Tier, actual: Tier },
    #[error("locale {0} not supported")]
    UnsupportedLocale(Locale),
    #[error("{0}")]
    Failed(String),
}

pub struct DetectContext<'a> {
    pub text: &'a str,
    pub locale: Locale,
    pub sensitivity: f64,
    pub backend: &'a BackendConfig,
    pub gateway: &'a Gateway,
    pub taxonomy: &'a Taxonomy,
}

pub trait Plugin: Send + Sync {
    fn descriptor(&self) -> &PluginDescriptor;

    fn detect(&self, ctx: &DetectContext<'_>) -> Result<PluginOutput, PluginError>;

    /// Digest of plugin configuration that affects its output (cache key input).
    fn config_digest(&self) -> String {
        self.descriptor().version.clone()
    }
}

/// A plugin built from a descriptor and a closure.
pub struct FnPlugin<F> {
    descriptor: PluginDescriptor,
    detect: F,
}

impl<F> FnPlugin<F>
where
    F: Fn(&DetectContext<'_>) -> Result<PluginOutput, PluginError> + Send + Sync,
{
    pub fn new(descriptor: PluginDescriptor, detect: F) -> Self {
        Self { descriptor, detect }
    }
}

impl<F> Plugin for FnPlugin<F>
where
    F: Fn(&DetectContext<'_>) -> Result<PluginOutput, PluginError> + Send + Sync,
{
    fn descriptor(&self) -> &PluginDescriptor {
        &self.descriptor
    }

    fn detect(&self, ctx: &DetectContext<'_>) -> Result<PluginOutput, PluginError> {
        (self.detect)(ctx)
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum RegistryError {
    #[error("plugin `{0}` is already registered")]
    Duplicate(String),
    #[error("plugin id is empty")]
    EmptyId,
}

#[derive(Default, Clone)]
pub struct PluginRegistry {
    plugins: Vec<Arc<dyn Plugin>>,
    index: HashMap<String, usize>,
}

impl fmt::Debug for PluginRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list()
            .entries(self.plugins.iter().map(|p| &p.descriptor().id))
            .finish()
    }
}

impl PluginRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, plugin: Arc<dyn Plugin>) -> Result<(), RegistryError> {
        let id = plugin.descriptor().id.clone();
        if id.is_empty() {
            return Err(RegistryError::EmptyId);
        }
        if self.index.contains_key(&id) {
            return Err(RegistryError::Duplicate(id));
        }
        self.index.insert(id, self.plugins.len());
        self.plugins.push(plugin);
        Ok(())
    }

    pub fn register_fn<F>(&mut self, descriptor: PluginDescriptor, detect: F) -> Result<(), RegistryError>
    where
        F: Fn(&DetectContext<'_>) -> Result<PluginOutput, PluginError> + Send + Sync + 'static,
    {
        self.register(Arc::new(FnPlugin::new(descriptor, detect)))
    }

    pub fn get(&self, id: &str) -> Option<&Arc<dyn Plugin>> {
        self.index.get(id).map(|&i| &self.plugins[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn list_plugins(&self) -> Vec<PluginDescriptor> {
        self.plugins.iter().map(|p| p.descriptor().clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.plugins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.plugins.is_empty()
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum AnalyzeError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("unknown plugin `{0}`")]
    UnknownPlugin(String),
    #[error("all plugins failed")]
    AllPluginsFailed(AnalysisResult),
}

/// Runs requests against a registry. Cheap to clone; safe to share.
#[derive(Clone)]
pub struct Analyzer {
    taxonomy: Arc<Taxonomy>,
    registry: Arc<PluginRegistry>,
    gateway: Gateway,
    default_backend: BackendConfig,
    cache: Option<Arc<ResultCache>>,
}

impl fmt::Debug for Analyzer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Analyzer")
            .field("registry", &self.registry)
            .field("default_backend", &self.default_backend)
            .field("cached", &self.cache.is_some())
            .finish()
    }
}

impl Analyzer {
    pub fn new(taxonomy: Arc<Taxonomy>, registry: Arc<PluginRegistry>, gateway: Gateway) -> Self {
        Self {
            taxonomy,
            registry,
            gateway,
            default_backend: BackendConfig::pattern(),
            cache: None,
        }
    }

    pub fn with_backend(mut self, backend: BackendConfig) -> Self {
        self.default_backend = backend;
        self
    }

    pub fn with_cache(mut self, cache: Arc<ResultCache>) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn without_cache(mut self) -> Self {
        self.cache = None;
        self
    }

    pub fn taxonomy(&self) -> &Arc<Taxonomy> {
        &self.taxonomy
    }

    pub fn registry(&self) -> &Arc<PluginRegistry> {
        &self.registry
    }

    pub fn gateway(&self) -> &Gateway {
        &self.gateway
    }

    pub fn default_backend(&self) -> &BackendConfig {
        &self.default_backend
    }

    pub fn cache(&self) -> Option<&Arc<ResultCache>> {
        self.cache.as_ref()
    }

    /// Fans the request out to every requested plugin. Plugins run
    /// concurrently; results keep the order of `request.plugin_ids`. A failing
    /// plugin is reported in its diagnostics and does not affect the others.
    pub fn analyze(&self, request: &AnalysisRequest) -> Result<AnalysisResult, AnalyzeError> {
        self.analyze_with_backend(request, request.backend.as_ref())
    }

    /// Like [`analyze`](Self::analyze) but ignores the request's own backend in
    /// favour of `backend` (or the analyzer default when `None`).
    pub fn analyze_with_backend(
        &self,
        request: &AnalysisRequest,
        backend: Option<&BackendConfig>,
    ) -> Result<AnalysisResult, AnalyzeError> {
        request.validate()?;
        let plugins = request
            .plugin_ids
            .iter()
            .map(|id| {
                self.registry
                    .get(id)
                    .cloned()
                    .ok_or_else(|| AnalyzeError::UnknownPlugin(id.clone()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let backend = backend.unwrap_or(&self.default_backend);

        let results: Vec<PluginResult> = if plugins.len() == 1 {
            vec![self.run_plugin(plugins[0].as_ref(), request, backend)]
        } else {
            std::thread::scope(|scope| {
                let handles: Vec<_> = plugins
                    .iter()
                    .map(|p| scope.spawn(move || self.run_plugin(p.as_ref(), request, backend)))
                    .collect();
                handles
                    .into_iter()
                    .zip(&plugins)
                    .map(|(h, p)| {
                        h.join().unwrap_or_else(|_| PluginResult {
                            plugin_id: p.descriptor().id.clone(),
                            findings: Vec::new(),
                            moralization: None,
                            elapsed_ms: 0.0,
                            from_cache: false,
                            diagnostics: Diagnostics {
                                error: Some("plugin panicked".into()),
                                ..Diagnostics::default()
                            },
                        })
                    })
                    .collect()
            })
        };

        let result = AnalysisResult {
            content_id: request.content_id.clone(),
            plugins: results,
        };
        if result.plugins.iter().all(PluginResult::failed) {
            return Err(AnalyzeError::AllPluginsFailed(result));
        }
        Ok(result)
    }

    fn run_plugin(
        &self,
        plugin: &dyn Plugin,
        request: &AnalysisRequest,
        backend: &BackendConfig,
    ) -> PluginResult {
        let descriptor = plugin.descriptor();
        let started = Instant::now();
        let outcome = self.produce(plugin, request, backend);
        let elapsed_ms = started.elapsed().as_secs_f64() * 1000.0;

        let (output, from_cache) = match outcome {
            Ok(v) => v,
            Err(e) => {
                return PluginResult {
                    plugin_id: descriptor.id.clone(),
                    findings: Vec::new(),
                    moralization: None,
                    elapsed_ms,
                    from_cache: false,
                    diagnostics: Diagnostics {
                        error: Some(e.to_string()),
                        ..Diagnostics::default()
                    },
                }
            }
        };

        let PluginOutput {
            findings,
            mut moralization,
            mut diagnostics,
        } = output;
        let source = SourceText::new(&request.text);
        let mut valid = Vec::with_capacity(findings.len());
        for f in findings {
            match f.validate(&source, &self.taxonomy) {
                Ok(()) => valid.push(f),
                Err(_) => diagnostics.record_drop("invalid-finding"),
            }
        }
        if let Some(MoralizationOutcome {
            details: details @ Some(_),
            ..
        }) = moralization.as_mut()
        {
            if details
                .as_ref()
                .is_some_and(|d| d.validate(&source, &self.taxonomy).is_err())
            {
                *details = None;
                diagnostics.record_drop("invalid-finding");
            }
        }

        let deduped = dedupe_findings(valid);
        let deduped_len = deduped.len();
        let mut findings: Vec<Finding> = deduped
            .into_iter()
            .filter(|f| f.confidence >= request.sensitivity)
            .collect();
        diagnostics.filtered += deduped_len - findings.len();
        for (i, f) in findings.iter_mut().enumerate() {
            f.id = format!("{}#{}", descriptor.id, i);
            f.plugin_id = descriptor.id.clone();
        }

        PluginResult {
            plugin_id: descriptor.id.clone(),
            findings,
            moralization,
            elapsed_ms,
            from_cache,
            diagnostics,
        }
    }

    fn produce(
        &self,
        plugin: &dyn Plugin,
        request: &AnalysisRequest,
        backend: &BackendConfig,
    ) -> Result<(PluginOutput, bool), PluginError> {
        let descriptor = plugin.descriptor();
        if backend.tier < descriptor.required_tier {
            return Err(PluginError::TierTooLow {
                required: descriptor.required_tier,
                actual: backend.tier,
            });
        }
        if !descriptor.locales.contains(&request.locale) {
            return Err(PluginError::UnsupportedLocale(request.locale));
        }
        let ctx = DetectContext {
            text: &request.text,
            locale: request.locale,
            sensitivity: request.sensitivity,
            backend,
            gateway: &self.gateway,
            taxonomy: &self.taxonomy,
        };
        match &self.cache {
            None => plugin.detect(&ctx).map(|o| (o, false)),
            Some(cache) => {
                let config_digest = format!(
                    "{}|{}|{:.4}|{}",
                    plugin.config_digest(),
                    request.locale,
                    request.sensitivity,
                    backend.digest()
                );
                let parts = CacheKeyParts {
                    text: &request.text,
                    plugin_id: &descriptor.id,
                    plugin_config_digest: &config_digest,
                    model_id: &backend.model_id,
                };
                cache.cached_analyze(&parts, || plugin.detect(&ctx))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::findings::{Severity, TextSpan};
    use crate::gateway::NullTransport;

    fn descriptor(id: &str) -> PluginDescriptor {
        PluginDescriptor {
            id: id.into(),
            kind: PluginKind::InProcess,
            display_name: id.into(),
            trigger_domains: vec![TriggerDomain::CognitiveBias],
            locales: vec![Locale::En, Locale::De],
            required_tier: Tier::Pattern,
            version: "1".into(),
        }
    }

    fn ll_finding(text: &str, quote: &str, confidence: f64) -> Finding {
        let span = crate::findings::ground_span(text, quote).unwrap();
        Finding {
            id: String::new(),
            plugin_id: String::new(),
            trigger_type_id: "loaded-language".into(),
            bias_triggered: "affect heuristic".into(),
            severity: Severity::Medium,
            span,
            explanation: "charged".into(),
            confidence,
        }
    }

    fn analyzer(reg: PluginRegistry) -> Analyzer {
        Analyzer::new(
            Arc::new(Taxonomy::shipped()),
            Arc::new(reg),
            Gateway::new(Arc::new(NullTransport)),
        )
    }

    fn fixed(confidences: &'static [f64]) -> impl Fn(&DetectContext<'_>) -> Result<PluginOutput, PluginError> {
        move |ctx: &DetectContext<'_>| {
            Ok(PluginOutput {
                findings: confidences
                    .iter()
                    .map(|&c| ll_finding(ctx.text, "disaster", c))
                    .collect(),
                ..PluginOutput::default()
            })
        }
    }

    #[test]
    fn register_and_list() {
        let mut reg = PluginRegistry::new();
        reg.register_fn(descriptor("cbt-regex"), fixed(&[])).unwrap();
        assert_eq!(reg.list_plugins()[0].id, "cbt-regex");
        assert_eq!(
            reg.register_fn(descriptor("cbt-regex"), fixed(&[])),
            Err(RegistryError::Duplicate("cbt-regex".into()))
        );
    }

    #[test]
    fn unknown_plugin_rejected_before_dispatch() {
        let mut reg = PluginRegistry::new();
        reg.register_fn(descriptor("a"), |_: &DetectContext<'_>| panic!("must not run"))
            .unwrap();
        let req = AnalysisRequest::new("c", "text", &["a", "missing"]);
        assert_eq!(
            analyzer(reg).analyze(&req),
            Err(AnalyzeError::UnknownPlugin("missing".into()))
        );
    }

    #[test]
    fn request_validation() {
        let a = analyzer(PluginRegistry::new());
        let mut req = AnalysisRequest::new("c", "", &["a"]);
        assert!(matches!(a.analyze(&req), Err(AnalyzeError::InvalidRequest(_))));
        req.text = "x".into();
        req.sensitivity = 1.5;
        assert!(matches!(a.analyze(&req), Err(AnalyzeError::InvalidRequest(_))));
        req.sensitivity = f64::NAN;
        assert!(matches!(a.analyze(&req), Err(AnalyzeError::InvalidRequest(_))));
        req.sensitivity = 0.5;
        req.plugin_ids.clear();
        assert!(matches!(a.analyze(&req), Err(AnalyzeError::InvalidRequest(_))));
    }

    #[test]
    fn sensitivity_filters_and_counts() {
        let mut reg = PluginRegistry::new();
        reg.register_fn(descriptor("p"), |ctx: &DetectContext<'_>| {
            Ok(PluginOutput {
                findings: vec![
                    ll_finding(ctx.text, "disaster", 0.4),
                    ll_finding(ctx.text, "awful", 0.9),
                ],
                ..PluginOutput::default()
            })
        })
        .unwrap();
        let a = analyzer(reg);
        let mut req = AnalysisRequest::new("c", "a disaster, an awful one", &["p"]);
        req.sensitivity = 1.0;
        let r = a.analyze(&req).unwrap();
        assert!(r.plugins[0].findings.is_empty());
        assert_eq!(r.plugins[0].diagnostics.filtered, 2);
        assert!(!r.plugins[0].from_cache);

        req.sensitivity = 0.5;
        let r = a.analyze(&req).unwrap();
        assert_eq!(r.plugins[0].findings.len(), 1);
        assert_eq!(r.plugins[0].findings[0].span.excerpt, "awful");
        assert_eq!(r.plugins[0].findings[0].id, "p#0");
    }

    #[test]
    fn failing_plugin_isolated() {
        let mut reg = PluginRegistry::new();
        reg.register_fn(descriptor("bad"), |_: &DetectContext<'_>| {
            Err(PluginError::Failed("boom".into()))
        })
        .unwrap();
        reg.register_fn(descriptor("good"), fixed(&[0.8])).unwrap();
        let a = analyzer(reg);
        let req = AnalysisRequest::new("c", "a disaster", &["bad", "good"]);
        let r = a.analyze(&req).unwrap();
        assert_eq!(r.plugins[0].plugin_id, "bad");
        assert_eq!(r.plugins[0].diagnostics.error.as_deref(), Some("boom"));
        assert_eq!(r.plugins[1].findings.len(), 1);

        let only_bad = AnalysisRequest::new("c", "a disaster", &["bad"]);
        assert!(matches!(a.analyze(&only_bad), Err(AnalyzeError::AllPluginsFailed(_))));
    }

    #[test]
    fn panicking_plugin_isolated() {
        let mut reg = PluginRegistry::new();
        reg.register_fn(descriptor("panics"), |_: &DetectContext<'_>| panic!("bug"))
            .unwrap();
        reg.register_fn(descriptor("good"), fixed(&[0.8])).unwrap();
        let r = analyzer(reg)
            .analyze(&AnalysisRequest::new("c", "a disaster", &["panics", "good"]))
            .unwrap();
        assert!(r.plugins[0].failed());
        assert_eq!(r.plugins[1].findings.len(), 1);
    }

    #[test]
    fn invalid_findings_dropped() {
        let mut reg = PluginRegistry::new();
        reg.register_fn(descriptor("p"), |ctx: &DetectContext<'_>| {
            let mut bad = ll_finding(ctx.text, "disaster", 0.9);
            bad.span = TextSpan {
                start: 0,
                end: 3,
                excerpt: "zzz".into(),
            };
            Ok(PluginOutput {
                findings: vec![bad, ll_finding(ctx.text, "disaster", 0.9)],
                ..PluginOutput::default()
            })
        })
        .unwrap();
        let r = analyzer(reg)
            .analyze(&AnalysisRequest::new("c", "a disaster", &["p"]))
            .unwrap();
        assert_eq!(r.plugins[0].findings.len(), 1);
        assert_eq!(r.plugins[0].diagnostics.dropped, 1);
    }

    #[test]
    fn tier_gate() {
        let mut reg = PluginRegistry::new();
        let mut d = descriptor("llm");
        d.required_tier = Tier::InBrowser;
        reg.register_fn(d, |_: &DetectContext<'_>| panic!("must not run"))
            .unwrap();
        reg.register_fn(descriptor("regex"), fixed(&[1.0])).unwrap();
        let r = analyzer(reg)
            .analyze(&AnalysisRequest::new("c", "a disaster", &["llm", "regex"]))
            .unwrap();
        assert!(r.plugins[0]
            .diagnostics
            .error
            .as_deref()
            .unwrap()
            .contains("requires tier in-browser"));
    }

    #[test]
    fn cache_marks_second_run() {
        let mut reg = PluginRegistry::new();
        reg.register_fn(descriptor("p"), fixed(&[0.8])).unwrap();
        let a = analyzer(reg).with_cache(Arc::new(ResultCache::default()));
        let req = AnalysisRequest::new("c", "a disaster", &["p"]);
        let first = a.analyze(&req).unwrap();
        let second = a.analyze(&req).unwrap();
        assert!(!first.plugins[0].from_cache);
        assert!(second.plugins[0].from_cache);
        assert_eq!(first.plugins[0].findings, second.plugins[0].findings);
    }

    #[test]
    fn descriptor_json() {
        let d = descriptor("moralization-llm");
        let v = serde_json::to_value(&d).unwrap();
        assert_eq!(v["kind"], "in-process");
        assert_eq!(v["required_tier"], "pattern");
        assert_eq!(v["trigger_domains"][0], "cognitive-bias");
        let back: PluginDescriptor = serde_json::from_value(v).unwrap();
        assert_eq!(back, d);
    }
}
