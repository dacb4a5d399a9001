//! Versioned prompt templates with `{{name}}` placeholders.
//!
//! Each template file holds the system prompt, a `=== user ===` separator line
//! and the user prompt. Rendering is a pure function of the variables.

use std::collections::BTreeMap;

use crate::gateway::ChatMessage;

pub const PROMPT_VERSION: &str = "v1";

const SEPARATOR: &str = "\n=== user ===\n";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Template {
    pub name: &'static str,
    pub source: &'static str,
}

pub const DETECTOR: Template = Template {
    name: "detector.v1",
    source: include_str!("../../prompts/detector.v1.txt"),
};
pub const EXTRACTOR: Template = Template {
    name: "extractor.v1",
    source: include_str!("../../prompts/extractor.v1.txt"),
};
pub const JUDGE: Template = Template {
    name: "judge.v1",
    source: include_str!("../../prompts/judge.v1.txt"),
};
pub const TRANSLATOR: Template = Template {
    name: "translator.v1",
    source: include_str!("../../prompts/translator.v1.txt"),
};
pub const CONSIS: Template = Template {
    name: "consis.v1",
    source: include_str!("../../prompts/consis.v1.txt"),
};

pub const ALL: [Template; 5] = [DETECTOR, EXTRACTOR, JUDGE, TRANSLATOR, CONSIS];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TemplateError {
    #[error("template {template} has no `=== user ===` separator")]
    MissingSeparator { template: &'static str },
    #[error("template {template} needs a value for `{name}`")]
    MissingVariable { template: &'static str, name: String },
    #[error("template {template} was given unused variable `{name}`")]
    UnusedVariable { template: &'static str, name: String },
}

impl Template {
    /// Placeholder names in order of first appearance.
    pub fn placeholders(&self) -> Vec<String> {
        let mut names = Vec::new();
        for part in scan(self.source) {
            if let Part::Var(name) = part {
                if !names.iter().any(|n| n == name) {
                    names.push(name.to_string());
                }
            }
        }
        names
    }

    /// Renders to a system + user message pair. Every placeholder must be
    /// bound and every binding used.
    pub fn render(&self, vars: &BTreeMap<&str, String>) -> Result<Vec<ChatMessage>, TemplateError> {
        let (system, user) = self
            .source
            .split_once(SEPARATOR)
            .ok_or(TemplateError::MissingSeparator { template: self.name })?;
        let placeholders = self.placeholders();
        if let Some(unused) = vars.keys().find(|k| !placeholders.iter().any(|p| p == *k)) {
            return Err(TemplateError::UnusedVariable {
                template: self.name,
                name: unused.to_string(),
            });
        }
        Ok(vec![
            ChatMessage::system(self.fill(system, vars)?.trim_end()),
            ChatMessage::user(self.fill(user, vars)?.trim_end()),
        ])
    }

    fn fill(&self, text: &str, vars: &BTreeMap<&str, String>) -> Result<String, TemplateError> {
        let mut out = String::with_capacity(text.len());
        for part in scan(text) {
            match part {
                Part::Lit(s) => out.push_str(s),
                Part::Var(name) => {
                    let value = vars.get(name).ok_or_else(|| TemplateError::MissingVariable {
                        template: self.name,
                        name: name.to_string(),
                    })?;
                    out.push_str(value);
                }
            }
        }
        Ok(out)
    }
}

enum Part<'a> {
    Lit(&'a str),
    Var(&'a str),
}

/// Splits on `{{identifier}}`; anything else is literal text.
fn scan(text: &str) -> Vec<Part<'_>> {
    let mut parts = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find("{{") {
        let after = &rest[open + 2..];
        let close = after.find("}}");
        let name = close.map(|c| &after[..c]);
        match name {
            Some(n) if !n.is_empty() && n.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') => {
                parts.push(Part::Lit(&rest[..open]));
                parts.push(Part::Var(n));
                rest = &after[n.len() + 2..];
            }
            _ => {
                parts.push(Part::Lit(&rest[..open + 2]));
                rest = after;
            }
        }
    }
    parts.push(Part::Lit(rest));
    parts
}
