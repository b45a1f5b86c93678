mod common;

use passage_core::corpus::Genre;
use passage_core::prompting::{render_prompt, PromptSpec, TemplateSet};

#[test]
fn renders_goldens_byte_for_byte() {
    for (file, spec) in common::golden_cases() {
        let rendered = render_prompt(&spec).unwrap();
        assert_eq!(rendered.text, common::fixture(file), "{file}");
    }
}

#[test]
fn age_clause_only_when_requested() {
    for (file, spec) in common::golden_cases() {
        let text = render_prompt(&spec).unwrap().text;
        let clauses = text.matches("for a 10-year-old").count();
        let expected = match (file.contains("age10"), file.contains("one_shot_initial")) {
            (false, _) => 0,
            (true, true) => 1,
            (true, false) => 2,
        };
        assert_eq!(clauses, expected, "{file}");
    }
}

/// Editing a template means bumping VERSION and this pin together.
#[test]
fn template_set_is_pinned() {
    let set = TemplateSet::default();
    assert_eq!(set.version(), "1");
    assert_eq!(set.content_digest(), "493d8a0626cc8d0e59b9b4adfd7fbe52b161190dbf8031e700c75d3da244ea8f");
}

#[test]
fn spec_digest_is_stable_and_distinguishes_age() {
    let a = PromptSpec::zero_shot_detailed(Genre::Informational, "Bees");
    let b = a.clone().with_age(10);
    assert_eq!(a.digest(), a.clone().digest());
    assert_ne!(a.digest(), b.digest());
    assert_eq!(render_prompt(&a).unwrap().spec_digest, a.digest());
}
