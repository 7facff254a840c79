//! Prompt construction for the model-backed detectors.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::findings::Locale;
use crate::gateway::ChatPrompt;
use crate::taxonomy::Taxonomy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptMode {
    /// Ask only for the set of technique labels (evaluation protocol).
    Benchmark,
    /// Ask for grounded findings with quotes and explanations.
    Production,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionPrompt {
    pub system_text: String,
    pub user_text: String,
    pub output_contract: Value,
    pub locale: Locale,
}

impl DetectionPrompt {
    pub fn to_chat(&self) -> ChatPrompt {
        ChatPrompt {
            system: self.system_text.clone(),
            user: self.user_text.clone(),
        }
    }
}

const OPEN: &str = "[[TEXT";
const CLOSE: &str = "[[/TEXT";

fn tags(suffix: Option<u32>) -> (String, String) {
    match suffix {
        None => (format!("{OPEN}]]"), format!("{CLOSE}]]")),
        Some(n) => (format!("{OPEN}#{n}]]"), format!("{CLOSE}#{n}]]")),
    }
}

/// Wraps `text` in marker lines that do not occur inside it. The text itself
/// is never altered, so [`extract_embedded_text`] recovers it exactly.
pub fn embed_text(text: &str) -> String {
    let mut suffix = None;
    loop {
        let (open, close) = tags(suffix);
        if !text.contains(&open) && !text.contains(&close) {
            return format!("{open}\n{text}\n{close}");
        }
        suffix = Some(suffix.map_or(1, |n| n + 1));
    }
}

/// Inverse of [`embed_text`]: returns the first embedded text in `prompt`.
pub fn extract_embedded_text(prompt: &str) -> Option<&str> {
    let at = prompt.find(OPEN)?;
    let rest = &prompt[at + OPEN.len()..];
    let (suffix, body) = if let Some(body) = rest.strip_prefix("]]") {
        (String::new(), body)
    } else {
        let rest = rest.strip_prefix('#')?;
        let digits = rest.find("]]")?;
        let n = &rest[..digits];
        if n.is_empty() || !n.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        (format!("#{n}"), &rest[digits + 2..])
    };
    let body = body.strip_prefix('\n')?;
    let close = format!("\n{CLOSE}{suffix}]]");
    let end = body.find(&close)?;
    Some(&body[..end])
}

fn label_enum(taxonomy: &Taxonomy) -> Vec<Value> {
    taxonomy.trigger_ids().map(|id| json!(id)).collect()
}

fn cbt_contract(taxonomy: &Taxonomy, mode: PromptMode) -> Value {
    match mode {
        PromptMode::Benchmark => json!({
            "type": "array",
            "uniqueItems": true,
            "items": {"enum": label_enum(taxonomy)},
        }),
        PromptMode::Production => json!({
            "type": "array",
            "items": {
                "type": "object",
                "required": ["label", "quote", "explanation"],
                "properties": {
                    "label": {"enum": label_enum(taxonomy)},
                    "quote": {"type": "string", "minLength": 1},
                    "bias": {"type": "string"},
                    "severity": {"enum": ["low", "medium", "high"]},
                    "explanation": {"type": "string", "minLength": 1},
                    "confidence": {"type": "number", "minimum": 0, "maximum": 1},
                },
            },
        }),
    }
}

const CBT_SYSTEM: &str = "You are a careful media analyst. You identify propaganda techniques that \
exploit cognitive biases. You only use the labels you are given and you never invent text that is \
not in the input.";

/// Builds the prompt for technique detection. Every label in the taxonomy is
/// listed; the analyzed text is embedded verbatim once.
pub fn build_cbt_prompt(
    text: &str,
    taxonomy: &Taxonomy,
    sensitivity: f64,
    mode: PromptMode,
) -> DetectionPrompt {
    let mut user = String::new();
    match mode {
        PromptMode::Benchmark => {
            user.push_str(
                "Read the news article between the TEXT markers and decide which of the \
following propaganda techniques it uses anywhere.\n\nLabels:\n",
            );
            for t in taxonomy.trigger_types() {
                let _ = writeln!(user, "- {}: {}", t.id, t.definition);
            }
            user.push_str(
                "\nAnswer with one fenced ```json block holding a JSON array of the labels that \
apply, for example [\"doubt\", \"slogans\"]. Use [] if none apply. Do not add other text.\n\n",
            );
        }
        PromptMode::Production => {
            user.push_str(
                "Find every passage in the text between the TEXT markers that uses one of the \
following propaganda techniques. Each technique is listed with the cognitive bias it \
triggers.\n\nLabels:\n",
            );
            for t in taxonomy.trigger_types() {
                let _ = writeln!(
                    user,
                    "- {} (bias: {}): {}",
                    t.id, t.bias_triggered, t.definition
                );
            }
            let _ = write!(
                user,
                "\nAnswer with one fenced ```json block holding a JSON array. Each element is an \
object with these fields:\n\
- \"label\": one of the labels above\n\
- \"quote\": the exact passage, copied character for character from the text\n\
- \"bias\": the bias listed for the label\n\
- \"severity\": \"low\", \"medium\" or \"high\"\n\
- \"explanation\": one sentence on how the passage uses the technique\n\
- \"confidence\": a number from 0 to 1\n\
Leave out findings with confidence below {sensitivity:.2}. Use [] if there are none.\n\n"
            );
        }
    }
    user.push_str(&embed_text(text));
    DetectionPrompt {
        system_text: CBT_SYSTEM.to_string(),
        user_text: user,
        output_contract: cbt_contract(taxonomy, mode),
        locale: Locale::En,
    }
}

fn moralization_contract(taxonomy: &Taxonomy) -> Value {
    let values: Vec<Value> = taxonomy
        .moral_categories()
        .iter()
        .map(|m| json!(m.id))
        .collect();
    let roles: Vec<Value> = taxonomy.protagonist_roles().iter().map(|r| json!(r)).collect();
    json!({
        "type": "object",
        "required": ["decision"],
        "properties": {
            "decision": {"enum": ["yes", "no"]},
            "quote": {"type": "string"},
            "moral_values": {"type": "array", "items": {"enum": values}},
            "demand": {"enum": ["explicit", "implicit", "none"]},
            "roles": {
                "type": "array",
                "items": {
                    "type": "object",
                    "required": ["role", "quote"],
                    "properties": {
                        "role": {"enum": roles},
                        "quote": {"type": "string"},
                    },
                },
            },
        },
    })
}

struct MoralizationWording {
    system: &'static str,
    task: &'static str,
    values_heading: &'static str,
    roles_heading: &'static str,
    answer: &'static str,
}

const MORALIZATION_EN: MoralizationWording = MoralizationWording {
    system: "You are an expert annotator of moralizing language in public discourse.",
    task: "Decide whether the text between the TEXT markers is moralizing: it appeals to moral \
values in order to justify a demand, either stated outright (explicit) or left for the reader to \
infer (implicit).",
    values_heading: "Moral values (use the ids):",
    roles_heading: "Protagonist roles (use the ids):",
    answer: "Answer with one fenced ```json block holding a JSON object with the fields \
\"decision\" (\"yes\" or \"no\"). If the decision is \"yes\", also give \"quote\" (the moralizing \
passage, copied exactly), \"moral_values\" (list of value ids), \"demand\" (\"explicit\" or \
\"implicit\") and \"roles\" (list of objects with \"role\" and an exact \"quote\" naming the \
protagonist). Do not add other text.",
};

const MORALIZATION_DE: MoralizationWording = MoralizationWording {
    system: "Du bist eine erfahrene Fachperson für die Annotation moralisierender Sprache im öffentlichen Diskurs.",
    task: "Entscheide, ob der Text zwischen den TEXT-Markierungen moralisiert: Er beruft sich auf \
moralische Werte, um eine Forderung zu begründen, die entweder ausdrücklich gestellt wird \
(explicit) oder sich nur erschließen lässt (implicit).",
    values_heading: "Moralische Werte (verwende die IDs):",
    roles_heading: "Rollen der Akteure (verwende die IDs):",
    answer: "Antworte mit genau einem ```json-Block, der ein JSON-Objekt mit dem Feld \
\"decision\" (\"yes\" oder \"no\") enthält. Lautet die Entscheidung \"yes\", gib zusätzlich \
\"quote\" (die moralisierende Passage, wörtlich kopiert), \"moral_values\" (Liste von Wert-IDs), \
\"demand\" (\"explicit\" oder \"implicit\") und \"roles\" (Liste von Objekten mit \"role\" und \
einem wörtlichen \"quote\", das den Akteur nennt) an. Füge keinen weiteren Text hinzu.",
};

fn role_label(role: &str, locale: Locale) -> &'static str {
    match (role, locale) {
        ("addressee", Locale::En) => "the party the demand is addressed to",
        ("addressee", Locale::De) => "an wen sich die Forderung richtet",
        ("affected-party", Locale::En) => "who is affected by the issue",
        ("affected-party", Locale::De) => "wer von dem Thema betroffen ist",
        ("beneficiary", Locale::En) => "who would benefit from the demand",
        ("beneficiary", Locale::De) => "wer von der Forderung profitieren würde",
        ("demander", Locale::En) => "who makes the demand",
        ("demander", Locale::De) => "wer die Forderung stellt",
        ("malefactor", Locale::En) => "who is blamed",
        ("malefactor", Locale::De) => "wer beschuldigt wird",
        (_, _) => "",
    }
}

/// Builds the moralization prompt in the requested language. Both locales
/// enumerate the same catalog ids; only the wording and labels differ.
pub fn build_moralization_prompt(text: &str, locale: Locale, taxonomy: &Taxonomy) -> DetectionPrompt {
    let wording = match locale {
        Locale::En => &MORALIZATION_EN,
        Locale::De => &MORALIZATION_DE,
    };
    let mut user = String::new();
    user.push_str(wording.task);
    user.push_str("\n\n");
    user.push_str(wording.values_heading);
    user.push('\n');
    for m in taxonomy.moral_categories() {
        let label = m
            .locale_labels
            .get(locale.as_str())
            .or_else(|| m.locale_labels.get("en"))
            .map(String::as_str)
            .unwrap_or(&m.id);
        let _ = writeln!(user, "- {}: {}", m.id, label);
    }
    user.push('\n');
    user.push_str(wording.roles_heading);
    user.push('\n');
    for r in taxonomy.protagonist_roles() {
        let gloss = role_label(r, locale);
        if gloss.is_empty() {
            let _ = writeln!(user, "- {r}");
        } else {
            let _ = writeln!(user, "- {r}: {gloss}");
        }
    }
    user.push('\n');
    user.push_str(wording.answer);
    user.push_str("\n\n");
    user.push_str(&embed_text(text));
    DetectionPrompt {
        system_text: wording.system.to_string(),
        user_text: user,
        output_contract: moralization_contract(taxonomy),
        locale,
    }
}
