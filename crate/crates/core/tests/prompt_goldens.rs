//! Prompts are part of the evaluation protocol, so any change to their
//! wording must be deliberate. Regenerate with `UPDATE_GOLDENS=1`.

mod common;

use std::fs;

use triggerscope::findings::ground_span;
use triggerscope::llm::{build_cbt_prompt, build_moralization_prompt, extract_embedded_text, DetectionPrompt, PromptMode};
use triggerscope::mitigation::{build_alternatives_prompt, build_rewrite_prompt};
use triggerscope::{Finding, Locale, Severity, Taxonomy};

use common::fixture;

const SAMPLE_EN: &str = "Everyone knows the minister is a traitor. Stop the betrayal now!";
const SAMPLE_DE: &str = "Wer jetzt schweigt, macht sich mitschuldig an diesem Unrecht.";

fn render(p: &DetectionPrompt) -> String {
    format!(
        "=== system ===\n{}\n=== user ===\n{}\n=== contract ===\n{}\n",
        p.system_text,
        p.user_text,
        serde_json::to_string_pretty(&p.output_contract).unwrap()
    )
}

fn check(name: &str, prompt: &DetectionPrompt, text: &str) {
    assert_eq!(extract_embedded_text(&prompt.user_text), Some(text));
    assert_eq!(prompt.user_text.matches(text).count(), 1);
    let path = fixture(&format!("prompts/{name}.txt"));
    let rendered = render(prompt);
    if std::env::var_os("UPDATE_GOLDENS").is_some() {
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(&path, &rendered).unwrap();
    }
    let golden = fs::read_to_string(&path).unwrap_or_else(|_| panic!("missing golden {}", path.display()));
    assert_eq!(rendered, golden, "prompt {name} drifted from its golden file");
}

fn finding(text: &str, quote: &str) -> Finding {
    Finding {
        id: "f1".into(),
        plugin_id: "cbt-regex".into(),
        trigger_type_id: "name-calling-labeling".into(),
        bias_triggered: "horn effect".into(),
        severity: Severity::High,
        span: ground_span(text, quote).unwrap(),
        explanation: "labels a person instead of arguing".into(),
        confidence: 1.0,
    }
}

#[test]
fn cbt_benchmark_prompt() {
    let tax = Taxonomy::shipped();
    check("cbt_benchmark", &build_cbt_prompt(SAMPLE_EN, &tax, 0.0, PromptMode::Benchmark), SAMPLE_EN);
}

#[test]
fn cbt_production_prompt() {
    let tax = Taxonomy::shipped();
    let p = build_cbt_prompt(SAMPLE_EN, &tax, 0.4, PromptMode::Production);
    for t in tax.trigger_types() {
        assert!(p.system_text.contains(&t.id) || p.user_text.contains(&t.id), "{} missing", t.id);
    }
    check("cbt_production", &p, SAMPLE_EN);
}

#[test]
fn moralization_prompts() {
    let tax = Taxonomy::shipped();
    check("moralization_en", &build_moralization_prompt(SAMPLE_EN, Locale::En, &tax), SAMPLE_EN);
    check("moralization_de", &build_moralization_prompt(SAMPLE_DE, Locale::De, &tax), SAMPLE_DE);
}

#[test]
fn mitigation_prompts() {
    let findings = [finding(SAMPLE_EN, "traitor")];
    check("rewrite", &build_rewrite_prompt(SAMPLE_EN, &findings), SAMPLE_EN);
    check("alternatives", &build_alternatives_prompt(SAMPLE_EN, &findings, 3), SAMPLE_EN);
}
