//! Declarative extraction rules for the lexical provider.
//!
//! Rules are plain data (JSON or TOML) so each fixture or deployment can
//! ship its own. A [`TextRule`] is a regex; its output is the `value`
//! template expanded against the captures (`$1`, `${name}`), or capture
//! group 1, or the whole match.

use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};

use super::ProviderError;
use crate::value::{KeyName, ValueKind};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtractionRules {
    /// Tried in order; the first match names the segment's meta topic.
    #[serde(default)]
    pub meta: Vec<TextRule>,
    /// Tried in order; the first match names the segment's primary entity.
    #[serde(default)]
    pub entity: Vec<TextRule>,
    #[serde(default)]
    pub keys: Vec<KeyRule>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TextRule {
    pub pattern: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub case_sensitive: bool,
}

impl TextRule {
    pub fn new(pattern: &str) -> Self {
        TextRule {
            pattern: pattern.to_string(),
            value: None,
            case_sensitive: false,
        }
    }

    pub fn with_value(pattern: &str, value: &str) -> Self {
        TextRule {
            value: Some(value.to_string()),
            ..TextRule::new(pattern)
        }
    }
}

/// Where a key's value comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeySource {
    #[default]
    Text,
    /// The experience's receive time.
    ReceivedAt,
    /// The experience's source tag.
    SourceTag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeyRule {
    pub key: KeyName,
    #[serde(default)]
    pub kind: ValueKind,
    #[serde(default)]
    pub source: KeySource,
    #[serde(default)]
    pub patterns: Vec<TextRule>,
}

#[derive(Debug, Clone)]
pub(crate) struct CompiledRule {
    regex: Regex,
    value: Option<String>,
}

impl CompiledRule {
    fn compile(rule: &TextRule) -> Result<Self, ProviderError> {
        let regex = RegexBuilder::new(&rule.pattern)
            .case_insensitive(!rule.case_sensitive)
            .build()
            .map_err(|e| ProviderError::InvalidRules(format!("`{}`: {e}", rule.pattern)))?;
        Ok(CompiledRule {
            regex,
            value: rule.value.clone(),
        })
    }

    /// Output of this rule on `text`, if it matches.
    pub(crate) fn apply(&self, text: &str) -> Option<String> {
        let caps = self.regex.captures(text)?;
        let out = match &self.value {
            Some(template) => {
                let mut out = String::new();
                caps.expand(template, &mut out);
                out
            }
            None => caps
                .get(1)
                .or_else(|| caps.get(0))
                .map(|m| m.as_str().to_string())
                .unwrap_or_default(),
        };
        let out = out.trim().to_string();
        (!out.is_empty()).then_some(out)
    }
}

#[derive(Debug, Clone)]
pub(crate) struct CompiledKeyRule {
    pub key: KeyName,
    pub kind: ValueKind,
    pub source: KeySource,
    pub patterns: Vec<CompiledRule>,
}

#[derive(Debug, Clone)]
pub(crate) struct CompiledRules {
    pub meta: Vec<CompiledRule>,
    pub entity: Vec<CompiledRule>,
    pub keys: Vec<CompiledKeyRule>,
}

pub(crate) fn first_match(rules: &[CompiledRule], text: &str) -> Option<String> {
    rules.iter().find_map(|r| r.apply(text))
}

impl ExtractionRules {
    pub(crate) fn compile(&self) -> Result<CompiledRules, ProviderError> {
        let all = |rules: &[TextRule]| rules.iter().map(CompiledRule::compile).collect::<Result<Vec<_>, _>>();
        Ok(CompiledRules {
            meta: all(&self.meta)?,
            entity: all(&self.entity)?,
            keys: self
                .keys
                .iter()
                .map(|k| {
                    Ok(CompiledKeyRule {
                        key: k.key.clone(),
                        kind: k.kind,
                        source: k.source,
                        patterns: all(&k.patterns)?,
                    })
                })
                .collect::<Result<Vec<_>, ProviderError>>()?,
        })
    }

    pub fn from_json(text: &str) -> Result<Self, ProviderError> {
        serde_json::from_str(text).map_err(|e| ProviderError::InvalidRules(e.to_string()))
    }

    /// Concatenates two rule sets; `self`'s rules take precedence.
    pub fn merged(mut self, other: ExtractionRules) -> Self {
        self.meta.extend(other.meta);
        self.entity.extend(other.entity);
        self.keys.extend(other.keys);
        self
    }
}
