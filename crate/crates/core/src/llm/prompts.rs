use std::collections::HashMap;
use std::path::Path;

use super::PromptTemplate;
use crate::error::{Error, Result};

/// Every prompt the pipeline sends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PromptName {
    Classify,
    Draft,
    Decompose,
    Judge,
    Rewrite,
    Synthesize,
    ExtractEntity,
    SelectRelations,
    Sufficiency,
    Generate,
    Necessity,
}

impl PromptName {
    pub const ALL: [PromptName; 11] = [
        PromptName::Classify,
        PromptName::Draft,
        PromptName::Decompose,
        PromptName::Judge,
        PromptName::Rewrite,
        PromptName::Synthesize,
        PromptName::ExtractEntity,
        PromptName::SelectRelations,
        PromptName::Sufficiency,
        PromptName::Generate,
        PromptName::Necessity,
    ];

    /// File stem inside a prompts directory.
    pub fn file_stem(self) -> &'static str {
        match self {
            PromptName::Classify => "classify",
            PromptName::Draft => "draft",
            PromptName::Decompose => "decompose",
            PromptName::Judge => "judge",
            PromptName::Rewrite => "rewrite",
            PromptName::Synthesize => "synthesize",
            PromptName::ExtractEntity => "extract_entity",
            PromptName::SelectRelations => "select_relations",
            PromptName::Sufficiency => "sufficiency",
            PromptName::Generate => "generate",
            PromptName::Necessity => "necessity",
        }
    }

    fn builtin(self) -> &'static str {
        match self {
            PromptName::Classify => include_str!("../../prompts/classify.txt"),
            PromptName::Draft => include_str!("../../prompts/draft.txt"),
            PromptName::Decompose => include_str!("../../prompts/decompose.txt"),
            PromptName::Judge => include_str!("../../prompts/judge.txt"),
            PromptName::Rewrite => include_str!("../../prompts/rewrite.txt"),
            PromptName::Synthesize => include_str!("../../prompts/synthesize.txt"),
            PromptName::ExtractEntity => include_str!("../../prompts/extract_entity.txt"),
            PromptName::SelectRelations => include_str!("../../prompts/select_relations.txt"),
            PromptName::Sufficiency => include_str!("../../prompts/sufficiency.txt"),
            PromptName::Generate => include_str!("../../prompts/generate.txt"),
            PromptName::Necessity => include_str!("../../prompts/necessity.txt"),
        }
    }

    /// Placeholders the pipeline binds for this prompt.
    pub fn placeholders(self) -> &'static [&'static str] {
        match self {
            PromptName::Classify | PromptName::Draft | PromptName::ExtractEntity => &["question"],
            PromptName::Decompose => &["response"],
            PromptName::Judge | PromptName::Rewrite => &["fact", "evidence"],
            PromptName::Synthesize => &["question", "draft", "report"],
            PromptName::SelectRelations => &["question", "entity", "candidates"],
            PromptName::Sufficiency => &["question", "path"],
            PromptName::Generate => &["question", "triples"],
            PromptName::Necessity => &["relation", "question"],
        }
    }
}

/// The prompt set, built-in or loaded from a directory of `<name>.txt` files.
#[derive(Debug, Clone)]
pub struct PromptLibrary {
    templates: HashMap<PromptName, PromptTemplate>,
}

impl Default for PromptLibrary {
    fn default() -> Self {
        Self::builtin()
    }
}

impl PromptLibrary {
    pub fn builtin() -> Self {
        let templates = PromptName::ALL
            .iter()
            .map(|&n| (n, PromptTemplate::new(n.file_stem(), n.builtin())))
            .collect();
        Self { templates }
    }

    /// Built-in prompts overridden by any `<name>.txt` present in `dir`.
    ///
    /// An override must not require placeholders the pipeline never binds.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let mut lib = Self::builtin();
        for name in PromptName::ALL {
            let path = dir.as_ref().join(format!("{}.txt", name.file_stem()));
            if !path.exists() {
                continue;
            }
            let body = std::fs::read_to_string(&path)?;
            lib.set(name, PromptTemplate::new(name.file_stem(), body))?;
        }
        Ok(lib)
    }

    pub fn set(&mut self, name: PromptName, template: PromptTemplate) -> Result<()> {
        if let Some(extra) = template
            .required_placeholders()
            .iter()
            .find(|p| !name.placeholders().contains(&p.as_str()))
        {
            return Err(Error::InvalidConfig(format!(
                "prompt `{}` uses unknown placeholder `{extra}`",
                name.file_stem()
            )));
        }
        self.templates.insert(name, template);
        Ok(())
    }

    pub fn get(&self, name: PromptName) -> &PromptTemplate {
        &self.templates[&name]
    }
}
