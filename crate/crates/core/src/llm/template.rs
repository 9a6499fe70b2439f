use std::collections::{BTreeSet, HashMap};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Text(String),
    Slot(String),
}

/// A text template with `{name}` placeholders.
///
/// Brace handling follows Python's `str.format`: `{{` and `}}` render as a
/// single literal brace, and `{identifier}` is a placeholder. Any other brace
/// is copied through unchanged. Every placeholder is required.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    name: String,
    body: String,
    segments: Vec<Segment>,
    required: BTreeSet<String>,
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn parse(body: &str) -> Vec<Segment> {
    let mut segments = Vec::new();
    let mut text = String::new();
    let mut rest = body;
    while let Some(c) = rest.chars().next() {
        match c {
            '{' if rest.starts_with("{{") => {
                text.push('{');
                rest = &rest[2..];
            }
            '}' if rest.starts_with("}}") => {
                text.push('}');
                rest = &rest[2..];
            }
            '{' => match rest[1..].find('}') {
                Some(end) if is_ident(&rest[1..1 + end]) => {
                    if !text.is_empty() {
                        segments.push(Segment::Text(std::mem::take(&mut text)));
                    }
                    segments.push(Segment::Slot(rest[1..1 + end].to_string()));
                    rest = &rest[end + 2..];
                }
                _ => {
                    text.push('{');
                    rest = &rest[1..];
                }
            },
            _ => {
                text.push(c);
                rest = &rest[c.len_utf8()..];
            }
        }
    }
    if !text.is_empty() {
        segments.push(Segment::Text(text));
    }
    segments
}

impl PromptTemplate {
    pub fn new(name: impl Into<String>, body: impl Into<String>) -> Self {
        let body = body.into();
        let segments = parse(&body);
        let required = segments
            .iter()
            .filter_map(|s| match s {
                Segment::Slot(n) => Some(n.clone()),
                Segment::Text(_) => None,
            })
            .collect();
        Self {
            name: name.into(),
            body,
            segments,
            required,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn body(&self) -> &str {
        &self.body
    }

    pub fn required_placeholders(&self) -> &BTreeSet<String> {
        &self.required
    }

    /// Substitute every placeholder. Extra bindings are ignored.
    pub fn render<'a, I>(&self, bindings: I) -> Result<String>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let bindings: HashMap<&str, &str> = bindings.into_iter().collect();
        let mut out = String::with_capacity(self.body.len());
        for seg in &self.segments {
            match seg {
                Segment::Text(t) => out.push_str(t),
                Segment::Slot(name) => match bindings.get(name.as_str()) {
                    Some(v) => out.push_str(v),
                    None => return Err(Error::MissingPlaceholder(name.clone())),
                },
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn substitutes_named_slots() {
        let t = PromptTemplate::new("t", "Question: \"{question}\"\nJudgment:");
        assert_eq!(
            t.render([("question", "Q1")]).unwrap(),
            "Question: \"Q1\"\nJudgment:"
        );
    }

    #[test]
    fn missing_binding_is_an_error() {
        let t = PromptTemplate::new("t", "Question: {question}");
        match t.render([("other", "x")]) {
            Err(Error::MissingPlaceholder(n)) => assert_eq!(n, "question"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn no_placeholders_is_identity() {
        let t = PromptTemplate::new("t", "plain text, nothing to fill");
        assert!(t.required_placeholders().is_empty());
        assert_eq!(t.render([]).unwrap(), "plain text, nothing to fill");
    }

    #[test]
    fn doubled_braces_collapse() {
        let t = PromptTemplate::new("t", "SELECT ?x WHERE {{\n  wd:{id} ?p ?x.\n}} LIMIT 1");
        assert_eq!(
            t.render([("id", "Q42")]).unwrap(),
            "SELECT ?x WHERE {\n  wd:Q42 ?p ?x.\n} LIMIT 1"
        );
    }

    #[test]
    fn non_identifier_braces_pass_through() {
        let t = PromptTemplate::new("t", "json {\"a\": 1} and { spaced }");
        assert!(t.required_placeholders().is_empty());
        assert_eq!(t.render([]).unwrap(), "json {\"a\": 1} and { spaced }");
    }

    #[test]
    fn values_are_not_reinterpreted() {
        let t = PromptTemplate::new("t", "{a}-{b}");
        assert_eq!(t.render([("a", "{b}"), ("b", "x")]).unwrap(), "{b}-x");
    }

    fn literal_text() -> impl Strategy<Value = String> {
        "[a-zA-Z0-9 .,:?\"\n-]{0,12}"
    }

    proptest! {
        #[test]
        fn render_is_pure_and_exact(
            parts in prop::collection::vec((literal_text(), "[a-z]{1,6}", "[^{}]{0,10}"), 0..6)
        ) {
            let mut body = String::new();
            let mut expected = String::new();
            let mut bindings: Vec<(String, String)> = Vec::new();
            for (i, (lit, name, value)) in parts.iter().enumerate() {
                let name = format!("{name}{i}");
                body.push_str(lit);
                body.push_str(&format!("{{{name}}}"));
                expected.push_str(lit);
                expected.push_str(value);
                bindings.push((name, value.clone()));
            }
            let t = PromptTemplate::new("p", body);
            let b = bindings.iter().map(|(k, v)| (k.as_str(), v.as_str()));
            let first = t.render(b.clone()).unwrap();
            prop_assert_eq!(&first, &expected);
            prop_assert_eq!(t.render(b).unwrap(), first);
            prop_assert_eq!(t.required_placeholders().len(), parts.len());
        }
    }
}
