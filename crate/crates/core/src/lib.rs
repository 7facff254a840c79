//! Detection of cognitive-bias triggers and moralization in text.
//!
//! The crate is organised around a shared taxonomy, a universal
//! [`findings::Finding`] record and a plugin framework. Detectors include a
//! pattern matcher that never leaves the process and model-backed detectors
//! routed through a privacy-tiered inference gateway. An HTTP service, a
//! mitigation layer and an evaluation harness sit on top.

pub mod eval;
pub mod findings;
pub mod gateway;
pub mod llm;
pub mod mitigation;
pub mod patterns;
pub mod plugin;
pub mod service;
pub mod taxonomy;

pub use findings::{Finding, Locale, MoralizationFinding, Severity, TextSpan};
pub use gateway::{BackendConfig, Gateway, Tier};
pub use plugin::{AnalysisRequest, AnalysisResult, Analyzer, PluginRegistry};
pub use taxonomy::Taxonomy;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
