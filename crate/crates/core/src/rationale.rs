//! Rationale generation: prompt templates, LLM calls and response parsing.
//!
//! Implicit rationales are requested one per line as
//! `<label> | <favor>,<against>,<neutral> | <span>`. The score field may be
//! empty (`favor | | span`) or omitted (`favor | span`); `NONE` on its own
//! line means the model found nothing.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, ErrorPolicy, Result};
use crate::model::{ExplicitRationale, ImplicitRationale, Sample, StanceLabel};
use crate::providers::{LlmProvider, LlmRequest};

pub const DEFAULT_IMPLICIT_TEMPLATE: &str = include_str!("../templates/implicit.txt");
pub const DEFAULT_EXPLICIT_TEMPLATE: &str = include_str!("../templates/explicit.txt");

const EMPTY_MARKER: &str = "NONE";

/// A system prompt and a user prompt with `{text}` / `{target}` slots.
///
/// On disk the two parts are separated by a line containing only `---`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub name: String,
    pub system: String,
    pub user: String,
}

impl PromptTemplate {
    pub fn parse(name: impl Into<String>, contents: &str) -> Result<Self> {
        let name = name.into();
        let contents = contents.replace("\r\n", "\n");
        let mut system = Vec::new();
        let mut user = Vec::new();
        let mut in_user = false;
        for line in contents.lines() {
            if !in_user && line.trim() == "---" {
                in_user = true;
                continue;
            }
            if in_user {
                user.push(line);
            } else {
                system.push(line);
            }
        }
        if !in_user {
            return Err(Error::Config(format!("template `{name}` has no `---` line separating system and user prompts")));
        }
        let tpl = PromptTemplate {
            name,
            system: system.join("\n").trim().to_string(),
            user: user.join("\n").trim().to_string(),
        };
        for slot in ["{text}", "{target}"] {
            if !tpl.user.contains(slot) {
                return Err(Error::Config(format!("template `{}` user prompt lacks the {slot} placeholder", tpl.name)));
            }
        }
        if tpl.system.is_empty() {
            return Err(Error::Config(format!("template `{}` has an empty system prompt", tpl.name)));
        }
        Ok(tpl)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let contents = fs::read_to_string(path).map_err(|e| Error::io(format!("reading template {}", path.display()), e))?;
        let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        Self::parse(name, &contents)
    }

    pub fn default_implicit() -> Self {
        Self::parse("implicit", DEFAULT_IMPLICIT_TEMPLATE).expect("bundled implicit template is valid")
    }

    pub fn default_explicit() -> Self {
        Self::parse("explicit", DEFAULT_EXPLICIT_TEMPLATE).expect("bundled explicit template is valid")
    }

    pub fn render(&self, sample: &Sample) -> (String, String) {
        let fill = |s: &str| s.replace("{text}", &sample.text).replace("{target}", &sample.target);
        (fill(&self.system), fill(&self.user))
    }
}

/// Decoding settings shared by both rationale prompts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmSettings {
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for LlmSettings {
    fn default() -> Self {
        LlmSettings {
            model: "mock".into(),
            temperature: 0.0,
            max_tokens: 1024,
        }
    }
}

impl LlmSettings {
    fn request(&self, tpl: &PromptTemplate, sample: &Sample) -> LlmRequest {
        let (system, user) = tpl.render(sample);
        LlmRequest {
            model_id: self.model.clone(),
            system_prompt: system,
            user_prompt: user,
            temperature: self.temperature,
            max_tokens: self.max_tokens,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RationaleSet {
    pub sample_id: String,
    pub implicit: Vec<ImplicitRationale>,
    pub explicit: ExplicitRationale,
    /// Normalized favor/against/neutral scores, one triple per implicit
    /// rationale; absent unless every rationale carried scores.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub llm_stance_scores: Option<Vec<[f64; 3]>>,
}

impl RationaleSet {
    pub fn new(sample_id: impl Into<String>, implicit: Vec<ImplicitRationale>, explicit: ExplicitRationale) -> Self {
        let llm_stance_scores = normalized_scores(&implicit);
        RationaleSet {
            sample_id: sample_id.into(),
            implicit,
            explicit,
            llm_stance_scores,
        }
    }
}

fn normalized_scores(implicit: &[ImplicitRationale]) -> Option<Vec<[f64; 3]>> {
    if implicit.is_empty() {
        return None;
    }
    implicit
        .iter()
        .map(|r| {
            let s = r.llm_scores?;
            let total: f64 = s.iter().sum();
            (total > 0.0).then(|| [s[0] / total, s[1] / total, s[2] / total])
        })
        .collect()
}

/// Canonical sample record with its rationale set appended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RationaleRecord {
    #[serde(flatten)]
    pub sample: Sample,
    pub rationales: RationaleSet,
}

fn strip_list_marker(s: &str) -> &str {
    let s = s.trim_start();
    if let Some(rest) = s.strip_prefix("- ").or_else(|| s.strip_prefix("* ")) {
        return rest;
    }
    let digits = s.bytes().take_while(u8::is_ascii_digit).count();
    if digits > 0 {
        let rest = &s[digits..];
        if let Some(r) = rest.strip_prefix(". ").or_else(|| rest.strip_prefix(") ")) {
            return r;
        }
    }
    s
}

fn parse_scores(s: &str) -> Option<[f64; 3]> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return None;
    }
    let mut out = [0.0; 3];
    for (o, p) in out.iter_mut().zip(&parts) {
        let v: f64 = p.parse().ok()?;
        if !v.is_finite() || v < 0.0 {
            return None;
        }
        *o = v;
    }
    Some(out)
}

fn unquote(s: &str) -> &str {
    let s = s.trim();
    if s.len() >= 2 && s.starts_with('"') && s.ends_with('"') {
        &s[1..s.len() - 1]
    } else {
        s
    }
}

/// Parses an implicit-rationale response. Lines without a `|` are ignored
/// (models like to add preambles); a response with no rationale lines and
/// no `NONE` marker is an error.
pub fn parse_implicit(raw: &str, sample: &Sample) -> Result<Vec<ImplicitRationale>> {
    let mut out = Vec::new();
    let mut saw_marker = false;
    for line in raw.lines() {
        let line = line.trim();
        if line.eq_ignore_ascii_case(EMPTY_MARKER) {
            saw_marker = true;
            continue;
        }
        if !line.contains('|') {
            continue;
        }
        let line = strip_list_marker(line);
        let parts: Vec<&str> = line.split('|').collect();
        let label_part = parts[0].trim();
        let (scores, text) = if parts.len() >= 3 {
            let middle = parts[1].trim();
            if middle.is_empty() {
                (None, parts[2..].join("|"))
            } else if let Some(s) = parse_scores(middle) {
                (Some(s), parts[2..].join("|"))
            } else {
                (None, parts[1..].join("|"))
            }
        } else {
            (None, parts[1].to_string())
        };
        let text = unquote(&text).to_string();
        if text.is_empty() {
            continue;
        }
        let llm_label = label_part.parse::<StanceLabel>().ok();
        out.push(ImplicitRationale {
            rationale_id: format!("r{}", out.len() + 1),
            verbatim: sample.text.contains(&text),
            text,
            source_sample: sample.id.clone(),
            llm_label,
            llm_scores: scores,
        });
    }
    if out.is_empty() && !saw_marker {
        return Err(Error::UnparseableResponse {
            message: "no `<label> | <scores> | <span>` lines".into(),
            raw: raw.to_string(),
        });
    }
    Ok(out)
}

/// Inverse of [`parse_implicit`] for well-formed rationale lists.
pub fn format_implicit(rationales: &[ImplicitRationale]) -> String {
    if rationales.is_empty() {
        return EMPTY_MARKER.to_string();
    }
    rationales
        .iter()
        .map(|r| {
            let label = r.llm_label.map(StanceLabel::as_str).unwrap_or("-");
            match r.llm_scores {
                Some([f, a, n]) => format!("{label} | {f},{a},{n} | {}", r.text),
                None => format!("{label} | | {}", r.text),
            }
        })
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn gen_implicit(
    sample: &Sample,
    tpl: &PromptTemplate,
    llm: &dyn LlmProvider,
    settings: &LlmSettings,
    policy: ErrorPolicy,
) -> Result<Vec<ImplicitRationale>> {
    let result = llm.complete(&settings.request(tpl, sample)).and_then(|raw| parse_implicit(&raw, sample));
    match (result, policy) {
        (Ok(r), _) => Ok(r),
        (Err(e), ErrorPolicy::Degrade) => {
            log::warn!("implicit rationales for `{}` degraded to empty: {e}", sample.id);
            Ok(Vec::new())
        }
        (Err(e), ErrorPolicy::Strict) => Err(e),
    }
}

pub fn gen_explicit(sample: &Sample, tpl: &PromptTemplate, llm: &dyn LlmProvider, settings: &LlmSettings, policy: ErrorPolicy) -> Result<ExplicitRationale> {
    let result = llm.complete(&settings.request(tpl, sample)).and_then(|raw| {
        let text = raw.trim().to_string();
        if text.is_empty() {
            Err(Error::UnparseableResponse {
                message: "empty explicit rationale".into(),
                raw,
            })
        } else {
            Ok(text)
        }
    });
    let text = match (result, policy) {
        (Ok(t), _) => t,
        (Err(e), ErrorPolicy::Degrade) => {
            log::warn!("explicit rationale for `{}` degraded to empty: {e}", sample.id);
            String::new()
        }
        (Err(e), ErrorPolicy::Strict) => return Err(e),
    };
    Ok(ExplicitRationale {
        text,
        source_sample: sample.id.clone(),
    })
}

pub fn generate(
    sample: &Sample,
    implicit_tpl: &PromptTemplate,
    explicit_tpl: &PromptTemplate,
    llm: &dyn LlmProvider,
    settings: &LlmSettings,
    policy: ErrorPolicy,
) -> Result<RationaleSet> {
    let implicit = gen_implicit(sample, implicit_tpl, llm, settings, policy)?;
    let explicit = gen_explicit(sample, explicit_tpl, llm, settings, policy)?;
    Ok(RationaleSet::new(sample.id.clone(), implicit, explicit))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::TableLlm;
    use proptest::prelude::*;

    fn sample(text: &str) -> Sample {
        Sample::new("s1", text, "topic", None).unwrap()
    }

    const GINSBURG_TEXT: &str = "If any of the dire prediction of a Trump presidency turning into a fascist dictatorship should start to occur... I do not find Justice Ginsburg's comments any less dignified..justices were to condemn Ms. Clinton's trustworthiness over her lies... The dignity of the court.. is lessened when..political maelstrom.";

    #[test]
    fn bundled_templates_parse() {
        let imp = PromptTemplate::default_implicit();
        let exp = PromptTemplate::default_explicit();
        assert!(imp.system.to_lowercase().contains("implicit"));
        assert!(!exp.system.to_lowercase().contains("implicit"));
        let (_, user) = imp.render(&sample("hello there"));
        assert!(user.contains("Text: hello there") && user.contains("Target: topic"));
    }

    #[test]
    fn template_requires_placeholders() {
        assert!(PromptTemplate::parse("x", "sys\n---\nText: {text}").is_err());
        assert!(PromptTemplate::parse("x", "sys only {text} {target}").is_err());
        assert!(PromptTemplate::parse("x", "sys\n---\n{text} / {target}").is_ok());
    }

    #[test]
    fn worked_example_yields_five_rationales() {
        let response = "\
favor | 0.85,0.05,0.10 | I do not find Justice Ginsburg's comments any less dignified
against | 0.05,0.75,0.20 | less dignified than if one of the more conservative justices were to condemn Ms. Clinton's trustworthiness
against | 0.25,0.55,0.20 | The dignity of the court, as well as the appearance of impartiality, is lessened when the justices lower themselves into the political maelstrom.
neutral | 0.3,0.2,0.5 | than if one of the more conservative justices were to condemn
favor | 0.4,0.3,0.3 | I do not find Justice Ginsburg's comments";
        let llm = TableLlm::new().with_fallback(response);
        let s = Sample::new("vast-ex", GINSBURG_TEXT, "Justice Ginsburg", Some(StanceLabel::Against)).unwrap();
        let out = gen_implicit(&s, &PromptTemplate::default_implicit(), &llm, &LlmSettings::default(), ErrorPolicy::Strict).unwrap();
        assert_eq!(out.len(), 5);
        assert_eq!(
            out[2].text,
            "The dignity of the court, as well as the appearance of impartiality, is lessened when the justices lower themselves into the political maelstrom."
        );
        // the post as quoted is elided, so the longer spans are paraphrase-flagged
        assert!(!out[2].verbatim);
        assert!(out[4].verbatim);
        assert_eq!(out[0].llm_scores, Some([0.85, 0.05, 0.10]));
        let ids: Vec<_> = out.iter().map(|r| r.rationale_id.as_str()).collect();
        assert_eq!(ids, ["r1", "r2", "r3", "r4", "r5"]);
    }

    #[test]
    fn explicit_passthrough() {
        let canned = "The post exhibits low empathy, as it criticizes Justice Ginsburg's comments without considering her perspective or feelings.";
        let llm = TableLlm::new().with_fallback(canned);
        let er = gen_explicit(
            &sample(GINSBURG_TEXT),
            &PromptTemplate::default_explicit(),
            &llm,
            &LlmSettings::default(),
            ErrorPolicy::Strict,
        )
        .unwrap();
        assert_eq!(er.text, canned);
        assert!(er
            .text
            .starts_with("The post exhibits low empathy, as it criticizes Justice Ginsburg's comments"));
    }

    #[test]
    fn empty_marker_and_ordering() {
        let s = sample("a b c");
        assert!(parse_implicit("NONE", &s).unwrap().is_empty());
        let three = parse_implicit("favor | | a\nagainst | | b\nneutral | | c", &s).unwrap();
        let texts: Vec<_> = three.iter().map(|r| r.text.as_str()).collect();
        assert_eq!(texts, ["a", "b", "c"]);
        assert!(three.iter().all(|r| r.verbatim && r.llm_scores.is_none()));
    }

    #[test]
    fn tolerant_line_shapes() {
        let s = sample("we love it | truly");
        let raw = "Here are the rationales:\n1. favor | 0.9, 0.05, 0.05 | \"we love it\"\n- against | we love it | truly\n* neutral | we";
        let out = parse_implicit(raw, &s).unwrap();
        assert_eq!(out.len(), 3);
        assert_eq!(out[0].text, "we love it");
        assert_eq!(out[0].llm_label, Some(StanceLabel::Favor));
        assert_eq!(out[1].text, "we love it | truly");
        assert_eq!(out[1].llm_scores, None);
        assert_eq!(out[2].text, "we");
    }

    #[test]
    fn unparseable_response_strict_vs_degrade() {
        let s = sample("text");
        assert!(matches!(parse_implicit("I cannot help with that.", &s), Err(Error::UnparseableResponse { .. })));
        let llm = TableLlm::new().with_fallback("no rationale lines here");
        let tpl = PromptTemplate::default_implicit();
        assert!(gen_implicit(&s, &tpl, &llm, &LlmSettings::default(), ErrorPolicy::Strict).is_err());
        assert!(gen_implicit(&s, &tpl, &llm, &LlmSettings::default(), ErrorPolicy::Degrade).unwrap().is_empty());
    }

    #[test]
    fn degrade_records_empty_explicit() {
        let llm = TableLlm::new();
        let er = gen_explicit(
            &sample("x"),
            &PromptTemplate::default_explicit(),
            &llm,
            &LlmSettings::default(),
            ErrorPolicy::Degrade,
        )
        .unwrap();
        assert_eq!(er.text, "");
    }

    #[test]
    fn stance_scores_normalized_only_when_complete() {
        let s = sample("a b");
        let full = parse_implicit("favor | 2,1,1 | a\nagainst | 0.1,0.7,0.2 | b", &s).unwrap();
        let set = RationaleSet::new(
            "s1",
            full,
            ExplicitRationale {
                text: "e".into(),
                source_sample: "s1".into(),
            },
        );
        let scores = set.llm_stance_scores.unwrap();
        assert_eq!(scores[0], [0.5, 0.25, 0.25]);
        for t in &scores {
            assert!((t.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
        let partial = parse_implicit("favor | 2,1,1 | a\nagainst | | b", &s).unwrap();
        let set = RationaleSet::new(
            "s1",
            partial,
            ExplicitRationale {
                text: "e".into(),
                source_sample: "s1".into(),
            },
        );
        assert!(set.llm_stance_scores.is_none());
    }

    fn arb_rationale() -> impl Strategy<Value = (Option<StanceLabel>, Option<[f64; 3]>, String)> {
        (
            prop::option::of(prop::sample::select(StanceLabel::ALL.to_vec())),
            prop::option::of(prop::array::uniform3(0.0f64..10.0)),
            "[a-zA-Z][a-zA-Z ,.'|]{0,40}[a-zA-Z.]",
        )
    }

    proptest! {
        #[test]
        fn format_parse_format_is_identity(items in prop::collection::vec(arb_rationale(), 0..6)) {
            let s = sample("source text");
            let rs: Vec<ImplicitRationale> = items
                .into_iter()
                .enumerate()
                .map(|(i, (label, scores, text))| ImplicitRationale {
                    rationale_id: format!("r{}", i + 1),
                    verbatim: s.text.contains(&text),
                    text,
                    source_sample: s.id.clone(),
                    llm_label: label,
                    llm_scores: scores,
                })
                .collect();
            let once = format_implicit(&rs);
            let parsed = parse_implicit(&once, &s).unwrap();
            prop_assert_eq!(&parsed, &rs);
            prop_assert_eq!(format_implicit(&parsed), once);
        }
    }
}
