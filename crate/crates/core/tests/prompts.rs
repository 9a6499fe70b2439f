//! Prompt library contents and overrides.

use dtkg_core::llm::{PromptLibrary, PromptName, PromptTemplate};
use dtkg_core::Error;

const CLASSIFY: &str = r#"Strictly evaluate whether this question requires multi-hop reasoning 
through shared entities. Rules:
    1. Answer ONLY with "yes" or "no"
    2. Only classify as "yes" if it requires connecting facts 
    through shared intermediary entities (A→B→C)
    3. Explicitly classify as "no" for these cases:
       - Direct single-entity attribute queries (age, birthplace)
       - Comparisons between independent entities (who is taller/older)
       - Multiple independent facts about the same entity
       - Simple relations that can be answered with one triplet (A→B)
    Examples:
    Q: "Where was the CEO of Microsoft born?" → yes 
    (Microsoft→CEO→birthplace)
    Q: "Who is older: Elon Musk or Jeff Bezos?" → no 
    (independent age checks)
    Q: "Which university did the inventor of Python attend?" → yes 
    (Python→inventor→university)
    Q: "What is the capital and population of France?" → no 
    (independent facts)
    Q: "Who directed Inception and what other films did they make?" → no 
    (subject stays constant)
    Q: "What is the tallest mountain and who first climbed it?" → no 
    (Independent facts with direct relations)

    Question: "{question}"
    Judgment (yes/no): "#;

#[test]
fn classification_prompt_is_verbatim() {
    let lib = PromptLibrary::builtin();
    assert_eq!(lib.get(PromptName::Classify).body(), CLASSIFY);
}

#[test]
fn classification_prompt_substitutes_only_the_question() {
    let q = "Who founded {the} company that makes the iPhone?";
    let rendered = PromptLibrary::builtin()
        .get(PromptName::Classify)
        .render([("question", q)])
        .unwrap();
    assert_eq!(rendered, CLASSIFY.replace("{question}", q));
}

#[test]
fn every_builtin_prompt_renders_with_its_placeholders() {
    let lib = PromptLibrary::builtin();
    for name in PromptName::ALL {
        let bindings: Vec<(&str, &str)> = name.placeholders().iter().map(|p| (*p, "X")).collect();
        let out = lib.get(name).render(bindings).unwrap();
        assert!(!out.contains('{'), "{name:?} left a placeholder");
    }
}

#[test]
fn overrides_replace_single_prompts() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("judge.txt"), "Claim: {fact}\nEvidence: {evidence}\nOK?").unwrap();
    let lib = PromptLibrary::load_dir(dir.path()).unwrap();
    assert_eq!(lib.get(PromptName::Judge).body(), "Claim: {fact}\nEvidence: {evidence}\nOK?");
    assert_eq!(lib.get(PromptName::Classify).body(), CLASSIFY);
}

#[test]
fn overrides_with_unknown_placeholders_are_rejected() {
    let mut lib = PromptLibrary::builtin();
    let bad = PromptTemplate::new("judge", "Claim: {fact} about {topic}");
    assert!(matches!(lib.set(PromptName::Judge, bad), Err(Error::InvalidConfig(_))));
}
