//! Known-component mapping table.

use std::sync::OnceLock;

use regex::{Regex, RegexSet};
use serde::Deserialize;

use super::InventoryError;

const BUILTIN: &str = include_str!("../../data/known_components.v1.json");

/// Which part of the tree a rule's pattern is applied to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleStrategy {
    /// opkg/dpkg package name.
    Package,
    /// Printable-ASCII run inside a file.
    VersionString,
    /// File name of a shared library.
    LibraryName,
    /// Full path inside the tree.
    Path,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KnownComponentRule {
    pub strategy: RuleStrategy,
    pub pattern: String,
    pub vendor: String,
    pub product: String,
    /// Capture group holding the version; 0 means the rule carries none.
    pub version_group: usize,
}

#[derive(Debug)]
pub(crate) struct CompiledRule {
    pub rule: KnownComponentRule,
    pub regex: Regex,
}

impl CompiledRule {
    /// Returns (version, matched text) for the first match in `haystack`.
    pub fn apply<'h>(&self, haystack: &'h str) -> Option<(String, &'h str)> {
        let caps = self.regex.captures(haystack)?;
        let whole = caps.get(0)?.as_str();
        let version = match self.rule.version_group {
            0 => String::new(),
            g => caps.get(g).map(|m| m.as_str().to_owned()).unwrap_or_default(),
        };
        Some((version, whole))
    }
}

#[derive(Debug)]
pub struct KnownComponentTable {
    pub(crate) rules: Vec<CompiledRule>,
    /// Indices into `rules` of the version-string rules, parallel to `version_set`.
    pub(crate) version_rules: Vec<usize>,
    pub(crate) version_set: RegexSet,
}

impl KnownComponentTable {
    pub fn from_json(text: &str) -> Result<Self, InventoryError> {
        let rules: Vec<KnownComponentRule> =
            serde_json::from_str(text).map_err(|e| InventoryError::RuleTable(e.to_string()))?;
        Self::new(rules)
    }

    pub fn new(rules: Vec<KnownComponentRule>) -> Result<Self, InventoryError> {
        let mut compiled = Vec::with_capacity(rules.len());
        for rule in rules {
            let regex = Regex::new(&rule.pattern)
                .map_err(|e| InventoryError::RuleTable(format!("pattern {:?}: {e}", rule.pattern)))?;
            if rule.version_group >= regex.captures_len() {
                return Err(InventoryError::RuleTable(format!(
                    "pattern {:?} has no group {}",
                    rule.pattern, rule.version_group
                )));
            }
            if rule.vendor.trim().is_empty() || rule.product.trim().is_empty() {
                return Err(InventoryError::RuleTable(format!("empty vendor/product for {:?}", rule.pattern)));
            }
            compiled.push(CompiledRule { rule, regex });
        }
        let version_rules: Vec<usize> = compiled
            .iter()
            .enumerate()
            .filter(|(_, c)| c.rule.strategy == RuleStrategy::VersionString)
            .map(|(i, _)| i)
            .collect();
        let version_set = RegexSet::new(version_rules.iter().map(|&i| &compiled[i].rule.pattern))
            .map_err(|e| InventoryError::RuleTable(e.to_string()))?;
        Ok(KnownComponentTable { rules: compiled, version_rules, version_set })
    }

    /// The table shipped with the crate.
    pub fn builtin() -> &'static KnownComponentTable {
        static TABLE: OnceLock<KnownComponentTable> = OnceLock::new();
        TABLE.get_or_init(|| KnownComponentTable::from_json(BUILTIN).expect("builtin component table is valid"))
    }

    pub(crate) fn with_strategy(&self, strategy: RuleStrategy) -> impl Iterator<Item = &CompiledRule> {
        self.rules.iter().filter(move |c| c.rule.strategy == strategy)
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }
}
