use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MemoryClass {
    NotMemory,
    Spatial,
    Temporal,
    OtherMemory,
}

impl MemoryClass {
    pub const ALL: [MemoryClass; 4] = [Self::NotMemory, Self::Spatial, Self::Temporal, Self::OtherMemory];

    pub fn is_memory_related(self) -> bool {
        self != Self::NotMemory
    }

    /// The label used in reports and in classifier responses.
    pub fn label(self) -> &'static str {
        match self {
            Self::NotMemory => "not-memory-related",
            Self::Spatial => "spatial-memory-related",
            Self::Temporal => "temporal-memory-related",
            Self::OtherMemory => "other-memory-related",
        }
    }

    pub fn short_label(self) -> &'static str {
        match self {
            Self::NotMemory => "not-memory",
            Self::Spatial => "spatial",
            Self::Temporal => "temporal",
            Self::OtherMemory => "other",
        }
    }

    /// Accepts only the four full labels.
    pub fn from_label(label: &str) -> Option<Self> {
        let l = label.trim();
        Self::ALL.into_iter().find(|c| c.label().eq_ignore_ascii_case(l))
    }
}

impl fmt::Display for MemoryClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for MemoryClass {
    type Err = String;

    /// Full or short label.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let l = s.trim();
        Self::from_label(l)
            .or_else(|| Self::ALL.into_iter().find(|c| c.short_label().eq_ignore_ascii_case(l)))
            .ok_or_else(|| format!("unknown memory class {s:?}"))
    }
}

impl Serialize for MemoryClass {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.label())
    }
}

impl<'de> Deserialize<'de> for MemoryClass {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassificationSource {
    RuleTable,
    Keyword,
    Llm,
    Default,
}

impl ClassificationSource {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::RuleTable => "rule-table",
            Self::Keyword => "keyword",
            Self::Llm => "llm",
            Self::Default => "default",
        }
    }
}

impl FromStr for ClassificationSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [Self::RuleTable, Self::Keyword, Self::Llm, Self::Default]
            .into_iter()
            .find(|v| v.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown classification source {s:?}"))
    }
}

impl fmt::Display for ClassificationSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Confidence {
    High,
    Low,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassificationResult {
    pub class: MemoryClass,
    pub source: ClassificationSource,
    pub reasoning: String,
    pub confidence: Confidence,
}
