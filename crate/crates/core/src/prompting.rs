//! Prompt rendering.
//!
//! Templates are plain text files with `{{name}}` placeholders. The shipped set
//! lives in `data/templates/` and is compiled in; [`TemplateSet::from_dir`]
//! loads an alternative set with the same file names. Optional fragments (the
//! audience-age clause, the section-hints sentence) are computed here and
//! substituted as whole placeholders, so a template never contains conditional
//! logic.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Genre, Passage};
use crate::digest::{json_digest, sha256_hex};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum PromptError {
    #[error("invalid prompt spec: field `{field}` {reason}")]
    InvalidSpec { field: &'static str, reason: String },
    #[error(
        "prompt needs about {needed} tokens but the context budget allows {available} \
         (context {context}, reserved for completion {reserved})"
    )]
    OverBudget { needed: usize, available: usize, context: usize, reserved: usize },
    #[error("template `{template}` references unknown placeholder `{name}`")]
    UnknownPlaceholder { template: String, name: String },
    #[error("template `{template}` has an unterminated placeholder")]
    Unterminated { template: String },
    #[error("cannot read template `{name}`: {message}")]
    Load { name: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptMode {
    OneShotInitial,
    OneShotDetailed,
    ZeroShotDetailed,
    Continuation,
}

impl PromptMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PromptMode::OneShotInitial => "one_shot_initial",
            PromptMode::OneShotDetailed => "one_shot_detailed",
            PromptMode::ZeroShotDetailed => "zero_shot_detailed",
            PromptMode::Continuation => "continuation",
        }
    }

    fn is_one_shot(self) -> bool {
        matches!(self, PromptMode::OneShotInitial | PromptMode::OneShotDetailed)
    }

    fn is_detailed(self) -> bool {
        matches!(self, PromptMode::OneShotDetailed | PromptMode::ZeroShotDetailed)
    }
}

/// Example passage embedded in a one-shot prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exemplar {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub passage_id: Option<String>,
    pub title: String,
    pub text: String,
}

impl From<&Passage> for Exemplar {
    fn from(p: &Passage) -> Self {
        Exemplar { passage_id: Some(p.id.clone()), title: p.title.clone(), text: p.text.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub mode: PromptMode,
    pub genre: Genre,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topic: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub section_hints: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audience_age: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exemplar: Option<Exemplar>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior_text: Option<String>,
}

impl PromptSpec {
    fn base(mode: PromptMode, genre: Genre) -> Self {
        PromptSpec {
            mode,
            genre,
            topic: None,
            section_hints: None,
            audience_age: None,
            exemplar: None,
            prior_text: None,
        }
    }

    pub fn one_shot_initial(genre: Genre, exemplar: Exemplar) -> Self {
        PromptSpec { exemplar: Some(exemplar), ..Self::base(PromptMode::OneShotInitial, genre) }
    }

    pub fn one_shot_detailed(genre: Genre, topic: impl Into<String>, exemplar: Exemplar) -> Self {
        PromptSpec {
            topic: Some(topic.into()),
            exemplar: Some(exemplar),
            ..Self::base(PromptMode::OneShotDetailed, genre)
        }
    }

    pub fn zero_shot_detailed(genre: Genre, topic: impl Into<String>) -> Self {
        PromptSpec { topic: Some(topic.into()), ..Self::base(PromptMode::ZeroShotDetailed, genre) }
    }

    pub fn continuation(genre: Genre, prior_text: impl Into<String>) -> Self {
        PromptSpec { prior_text: Some(prior_text.into()), ..Self::base(PromptMode::Continuation, genre) }
    }

    pub fn with_age(mut self, age: u32) -> Self {
        self.audience_age = Some(age);
        self
    }

    pub fn with_section_hints(mut self, hints: impl Into<String>) -> Self {
        self.section_hints = Some(hints.into());
        self
    }

    pub fn digest(&self) -> String {
        json_digest(self)
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        let invalid = |field, reason: &str| Err(PromptError::InvalidSpec { field, reason: reason.to_owned() });
        let mode = self.mode;
        if mode.is_one_shot() && self.exemplar.is_none() {
            return invalid("exemplar", "is required for one-shot modes");
        }
        if !mode.is_one_shot() && self.exemplar.is_some() {
            return invalid("exemplar", "is only allowed in one-shot modes");
        }
        if let Some(ex) = &self.exemplar {
            if ex.text.trim().is_empty() {
                return invalid("exemplar", "has empty text");
            }
        }
        let has_topic = self.topic.as_deref().is_some_and(|t| !t.trim().is_empty());
        if mode.is_detailed() && !has_topic {
            return invalid("topic", "is required for detailed modes");
        }
        if !mode.is_detailed() && self.topic.is_some() {
            return invalid("topic", "is only allowed in detailed modes");
        }
        if !mode.is_detailed() && self.section_hints.is_some() {
            return invalid("section_hints", "is only allowed in detailed modes");
        }
        if self.audience_age == Some(0) {
            return invalid("audience_age", "must be positive");
        }
        match (mode, &self.prior_text) {
            (PromptMode::Continuation, None) => invalid("prior_text", "is required for continuation"),
            (PromptMode::Continuation, Some(t)) if t.trim().is_empty() => invalid("prior_text", "must not be empty"),
            (PromptMode::Continuation, Some(_)) => Ok(()),
            (_, Some(_)) => invalid("prior_text", "is only allowed in continuation mode"),
            (_, None) => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub text: String,
    pub spec_digest: String,
    pub template_version: String,
}

/// Token budget of the provider's context window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextBudget {
    pub context_tokens: usize,
    /// Tokens held back for the completion itself.
    pub reserved_for_completion: usize,
}

impl ContextBudget {
    pub const UNBOUNDED: ContextBudget = ContextBudget { context_tokens: usize::MAX, reserved_for_completion: 0 };

    pub fn available(&self) -> usize {
        self.context_tokens.saturating_sub(self.reserved_for_completion)
    }

    pub fn check(&self, prompt: &str) -> Result<usize, PromptError> {
        let needed = estimate_tokens(prompt);
        if needed > self.available() {
            return Err(PromptError::OverBudget {
                needed,
                available: self.available(),
                context: self.context_tokens,
                reserved: self.reserved_for_completion,
            });
        }
        Ok(needed)
    }
}

impl Default for ContextBudget {
    /// 4097-token window of the completion models this pipeline targets.
    fn default() -> Self {
        ContextBudget { context_tokens: 4097, reserved_for_completion: 0 }
    }
}

/// Approximate BPE token count.
///
/// Letter runs cost one token per started group of four letters, digit runs one
/// per started group of three digits, and every other non-space character one
/// token. This overestimates short common words slightly, which is the safe
/// direction for budget checks.
pub fn estimate_tokens(text: &str) -> usize {
    #[derive(PartialEq, Clone, Copy)]
    enum Run {
        None,
        Alpha,
        Digit,
    }
    let mut total = 0;
    let mut run = Run::None;
    let mut run_len = 0usize;
    let flush = |run: Run, len: usize| match run {
        Run::None => 0,
        Run::Alpha => len.div_ceil(4),
        Run::Digit => len.div_ceil(3),
    };
    for c in text.chars() {
        let class = if c.is_alphabetic() {
            Run::Alpha
        } else if c.is_ascii_digit() {
            Run::Digit
        } else {
            Run::None
        };
        if class != run {
            total += flush(run, run_len);
            run = class;
            run_len = 0;
        }
        match class {
            Run::None if !c.is_whitespace() => total += 1,
            Run::None => {}
            _ => run_len += 1,
        }
    }
    total + flush(run, run_len)
}

const TEMPLATE_NAMES: [&str; 7] = [
    "informational_one_shot_initial",
    "informational_one_shot_detailed",
    "informational_zero_shot_detailed",
    "literary_one_shot_initial",
    "literary_one_shot_detailed",
    "literary_zero_shot_detailed",
    "continuation",
];

/// A versioned set of prompt templates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    version: String,
    templates: BTreeMap<String, String>,
}

impl Default for TemplateSet {
    fn default() -> Self {
        let builtin = [
            include_str!("../data/templates/informational_one_shot_initial.txt"),
            include_str!("../data/templates/informational_one_shot_detailed.txt"),
            include_str!("../data/templates/informational_zero_shot_detailed.txt"),
            include_str!("../data/templates/literary_one_shot_initial.txt"),
            include_str!("../data/templates/literary_one_shot_detailed.txt"),
            include_str!("../data/templates/literary_zero_shot_detailed.txt"),
            include_str!("../data/templates/continuation.txt"),
        ];
        TemplateSet {
            version: include_str!("../data/templates/VERSION").trim().to_owned(),
            templates: TEMPLATE_NAMES
                .iter()
                .zip(builtin)
                .map(|(name, body)| ((*name).to_owned(), body.to_owned()))
                .collect(),
        }
    }
}

impl TemplateSet {
    /// Loads `<name>.txt` for every template plus a `VERSION` file from `dir`.
    pub fn from_dir(dir: impl AsRef<Path>) -> Result<Self, PromptError> {
        let dir = dir.as_ref();
        let read = |name: &str| {
            fs::read_to_string(dir.join(name))
                .map_err(|e| PromptError::Load { name: name.to_owned(), message: e.to_string() })
        };
        let version = read("VERSION")?.trim().to_owned();
        let mut templates = BTreeMap::new();
        for name in TEMPLATE_NAMES {
            templates.insert(name.to_owned(), read(&format!("{name}.txt"))?);
        }
        Ok(TemplateSet { version, templates })
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    /// Digest over every template body, in name order.
    pub fn content_digest(&self) -> String {
        let mut joined = String::new();
        for (name, body) in &self.templates {
            joined.push_str(name);
            joined.push('\0');
            joined.push_str(body);
            joined.push('\0');
        }
        sha256_hex(joined)
    }

    fn template_for(&self, mode: PromptMode, genre: Genre) -> (&str, &str) {
        let name = match mode {
            PromptMode::Continuation => "continuation".to_owned(),
            _ => format!("{}_{}", genre.as_str(), mode.as_str()),
        };
        let (k, v) = self.templates.get_key_value(&name).expect("template set holds every mode/genre combination");
        (k.as_str(), v.as_str())
    }

    pub fn render(&self, spec: &PromptSpec) -> Result<RenderedPrompt, PromptError> {
        if spec.mode == PromptMode::Continuation {
            return self.render_continuation(spec, &ContextBudget::UNBOUNDED);
        }
        spec.validate()?;
        let mut vars: BTreeMap<&str, String> = BTreeMap::new();
        vars.insert("age_clause", age_clause(spec.audience_age));
        if let Some(topic) = &spec.topic {
            vars.insert("topic", topic.clone());
        }
        vars.insert(
            "sections_sentence",
            match (&spec.section_hints, spec.genre) {
                (None, _) => String::new(),
                (Some(h), Genre::Informational) => format!(" It includes sections about {h}."),
                (Some(h), Genre::Literary) => format!(" The story includes {h}."),
            },
        );
        if let Some(ex) = &spec.exemplar {
            vars.insert("exemplar_title", ex.title.clone());
            vars.insert("exemplar_text", ex.text.clone());
        }
        let (name, template) = self.template_for(spec.mode, spec.genre);
        Ok(RenderedPrompt {
            text: substitute(name, template, &vars)?,
            spec_digest: spec.digest(),
            template_version: self.version.clone(),
        })
    }

    pub fn render_continuation(
        &self,
        spec: &PromptSpec,
        budget: &ContextBudget,
    ) -> Result<RenderedPrompt, PromptError> {
        if spec.mode != PromptMode::Continuation {
            return Err(PromptError::InvalidSpec {
                field: "mode",
                reason: format!("is {}, expected continuation", spec.mode.as_str()),
            });
        }
        spec.validate()?;
        let prior = spec.prior_text.clone().unwrap_or_default();
        let vars = BTreeMap::from([("prior_text", prior)]);
        let (name, template) = self.template_for(spec.mode, spec.genre);
        let text = substitute(name, template, &vars)?;
        budget.check(&text)?;
        Ok(RenderedPrompt { text, spec_digest: spec.digest(), template_version: self.version.clone() })
    }
}

/// Renders with the built-in template set.
pub fn render_prompt(spec: &PromptSpec) -> Result<RenderedPrompt, PromptError> {
    TemplateSet::default().render(spec)
}

/// Renders a continuation prompt with the built-in template set, failing if it
/// would not fit `budget`.
pub fn render_continuation(spec: &PromptSpec, budget: &ContextBudget) -> Result<RenderedPrompt, PromptError> {
    TemplateSet::default().render_continuation(spec, budget)
}

fn age_clause(age: Option<u32>) -> String {
    age.map(|a| format!(" for a {a}-year-old")).unwrap_or_default()
}

fn substitute(name: &str, template: &str, vars: &BTreeMap<&str, String>) -> Result<String, PromptError> {
    let mut out = String::with_capacity(template.len() + 256);
    let mut rest = template;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let end = after.find("}}").ok_or_else(|| PromptError::Unterminated { template: name.to_owned() })?;
        let key = after[..end].trim();
        let value = vars
            .get(key)
            .ok_or_else(|| PromptError::UnknownPlaceholder { template: name.to_owned(), name: key.to_owned() })?;
        out.push_str(value);
        rest = &after[end + 2..];
    }
    out.push_str(rest);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ants() -> Exemplar {
        Exemplar { passage_id: None, title: "Ants".into(), text: "Small and Strong\n\nAnts are small insects.".into() }
    }

    #[test]
    fn zero_shot_with_exemplar_names_field() {
        let mut spec = PromptSpec::zero_shot_detailed(Genre::Informational, "Bees");
        spec.exemplar = Some(ants());
        let err = render_prompt(&spec).unwrap_err();
        assert!(matches!(err, PromptError::InvalidSpec { field: "exemplar", .. }));
    }

    #[test]
    fn one_shot_requires_exemplar() {
        let mut spec = PromptSpec::one_shot_detailed(Genre::Informational, "Bees", ants());
        spec.exemplar = None;
        assert!(matches!(render_prompt(&spec), Err(PromptError::InvalidSpec { field: "exemplar", .. })));
    }

    #[test]
    fn initial_forbids_topic() {
        let mut spec = PromptSpec::one_shot_initial(Genre::Informational, ants());
        spec.topic = Some("Bees".into());
        assert!(matches!(render_prompt(&spec), Err(PromptError::InvalidSpec { field: "topic", .. })));
    }

    #[test]
    fn detailed_requires_topic() {
        let mut spec = PromptSpec::zero_shot_detailed(Genre::Informational, " ");
        assert!(render_prompt(&spec).is_err());
        spec.topic = None;
        assert!(matches!(render_prompt(&spec), Err(PromptError::InvalidSpec { field: "topic", .. })));
    }

    #[test]
    fn digest_is_deterministic_and_input_sensitive() {
        let spec = PromptSpec::zero_shot_detailed(Genre::Informational, "Bees").with_age(10);
        let a = render_prompt(&spec).unwrap();
        let b = render_prompt(&spec).unwrap();
        assert_eq!(a, b);
        let other = render_prompt(&PromptSpec::zero_shot_detailed(Genre::Informational, "Wasps")).unwrap();
        assert_ne!(a.spec_digest, other.spec_digest);
    }

    #[test]
    fn literary_zero_shot() {
        let spec = PromptSpec::zero_shot_detailed(Genre::Literary, "a brave rabbit")
            .with_age(9)
            .with_section_hints("friendship and kindness");
        let text = render_prompt(&spec).unwrap().text;
        assert_eq!(
            text,
            "This is a story generator.\nGenerate a story about a brave rabbit for a 9-year-old. \
             The story includes friendship and kindness.\nThe story should be engaging for a 9-year-old."
        );
    }

    #[test]
    fn continuation_ends_with_prior_text() {
        let prior = "One.\n\nTwo.\n\nThree.";
        let r =
            render_continuation(&PromptSpec::continuation(Genre::Literary, prior), &ContextBudget::default()).unwrap();
        assert!(r.text.ends_with(prior));
        assert!(r.text.starts_with("Continue the story below without repeating earlier text."));
    }

    #[test]
    fn continuation_rejects_empty_prior() {
        let spec = PromptSpec::continuation(Genre::Literary, "   ");
        assert!(matches!(
            render_continuation(&spec, &ContextBudget::default()),
            Err(PromptError::InvalidSpec { field: "prior_text", .. })
        ));
    }

    #[test]
    fn token_estimate_hand_counted() {
        // "The"=1, "cat"=1, "sat"=1, "."=1
        assert_eq!(estimate_tokens("The cat sat."), 4);
        // "generator"=3 (9 letters), "2023"=2, ","=1, "ok"=1
        assert_eq!(estimate_tokens("generator 2023, ok"), 7);
        assert_eq!(estimate_tokens(""), 0);
        assert_eq!(estimate_tokens("bees' body"), 1 + 1 + 1);
    }

    #[test]
    fn unknown_placeholder_reported() {
        let vars = BTreeMap::new();
        assert!(matches!(substitute("t", "a {{missing}} b", &vars), Err(PromptError::UnknownPlaceholder { .. })));
        assert!(matches!(substitute("t", "a {{open", &vars), Err(PromptError::Unterminated { .. })));
    }
}
