//! CWE rule table and keyword fallback.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::OnceLock;

use serde::de::{MapAccess, Visitor};
use serde::Deserializer;

use super::class::{ClassificationResult, ClassificationSource, Confidence, MemoryClass};
use super::ClassifyError;
use crate::vulndb::CweRef;

const BUILTIN: &str = include_str!("../../data/memory_rules.v1.json");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleTable {
    entries: BTreeMap<u32, MemoryClass>,
}

struct Entries;

impl<'de> Visitor<'de> for Entries {
    type Value = Vec<(String, String)>;

    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str("an object mapping CWE ids to memory classes")
    }

    fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<Self::Value, A::Error> {
        let mut out = Vec::new();
        while let Some(entry) = map.next_entry::<String, String>()? {
            out.push(entry);
        }
        Ok(out)
    }
}

impl RuleTable {
    /// Parses `{"CWE-125": "spatial", ...}`. A CWE listed twice is rejected
    /// even when both entries agree.
    pub fn from_json(text: &str) -> Result<Self, ClassifyError> {
        let mut de = serde_json::Deserializer::from_str(text);
        let raw = de
            .deserialize_map(Entries)
            .and_then(|v| de.end().map(|_| v))
            .map_err(|e| ClassifyError::RuleTable(e.to_string()))?;
        let mut entries = BTreeMap::new();
        for (key, label) in raw {
            let id = match key.parse::<CweRef>() {
                Ok(CweRef::Id(n)) => n,
                _ => return Err(ClassifyError::RuleTable(format!("bad CWE key {key:?}"))),
            };
            let class = label.parse::<MemoryClass>().map_err(ClassifyError::RuleTable)?;
            if entries.insert(id, class).is_some() {
                return Err(ClassifyError::RuleTable(format!("CWE-{id} listed more than once")));
            }
        }
        Ok(RuleTable { entries })
    }

    pub fn builtin() -> &'static RuleTable {
        static TABLE: OnceLock<RuleTable> = OnceLock::new();
        TABLE.get_or_init(|| RuleTable::from_json(BUILTIN).expect("builtin rule table is valid"))
    }

    pub fn get(&self, cwe: u32) -> Option<MemoryClass> {
        self.entries.get(&cwe).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, MemoryClass)> + '_ {
        self.entries.iter().map(|(k, v)| (*k, *v))
    }

    pub(crate) fn lookup(&self, cwe: CweRef) -> Option<ClassificationResult> {
        let CweRef::Id(n) = cwe else { return None };
        self.get(n).map(|class| ClassificationResult {
            class,
            source: ClassificationSource::RuleTable,
            reasoning: format!("CWE-{n} maps to {class} in the rule table"),
            confidence: Confidence::High,
        })
    }
}

/// Rule-table lookup for a textual `CWE-<n>` id. `Ok(None)` means the id is
/// well-formed but not in the table.
pub fn classify_cwe(id: &str, table: &RuleTable) -> Result<Option<ClassificationResult>, ClassifyError> {
    let t = id.trim();
    let n = t
        .strip_prefix("CWE-")
        .filter(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()))
        .and_then(|d| d.parse::<u32>().ok())
        .ok_or_else(|| ClassifyError::MalformedCweId(id.to_owned()))?;
    Ok(table.lookup(CweRef::Id(n)))
}

/// Trigger phrases in precedence order.
pub const KEYWORD_TRIGGERS: [(MemoryClass, &[&str]); 3] = [
    (MemoryClass::Temporal, &["use after free", "use-after-free", "double free", "dangling"]),
    (
        MemoryClass::Spatial,
        &["out-of-bounds", "buffer overflow", "buffer over-read", "stack overflow", "heap overflow", "bounds"],
    ),
    (
        MemoryClass::OtherMemory,
        &["null pointer dereference", "memory leak", "uninitialized memory", "memory corruption"],
    ),
];

/// Keyword classification of a free-text description.
pub fn classify_description(text: &str) -> Result<ClassificationResult, ClassifyError> {
    if text.trim().is_empty() {
        return Err(ClassifyError::EmptyDescription);
    }
    let lower = text.to_lowercase();
    for (class, triggers) in KEYWORD_TRIGGERS {
        if let Some(hit) = triggers.iter().find(|t| lower.contains(*t)) {
            return Ok(ClassificationResult {
                class,
                source: ClassificationSource::Keyword,
                reasoning: format!("description mentions \"{hit}\""),
                confidence: Confidence::High,
            });
        }
    }
    Ok(ClassificationResult {
        class: MemoryClass::NotMemory,
        source: ClassificationSource::Keyword,
        reasoning: "no memory-safety keyword in description".into(),
        confidence: Confidence::Low,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_table_contents() {
        let t = RuleTable::builtin();
        let ids = |class| t.iter().filter(|(_, c)| *c == class).map(|(n, _)| n).collect::<Vec<_>>();
        assert_eq!(ids(MemoryClass::Spatial), [119, 120, 121, 122, 125, 131, 193, 786, 787, 788, 823]);
        assert_eq!(ids(MemoryClass::Temporal), [415, 416, 562, 825]);
        assert_eq!(ids(MemoryClass::OtherMemory), [401, 459, 476, 590, 761, 824, 908]);
        assert_eq!(
            ids(MemoryClass::NotMemory),
            [20, 22, 78, 79, 89, 94, 200, 287, 295, 319, 327, 352, 362, 400, 502, 601, 776, 835, 918]
        );
    }

    #[test]
    fn duplicate_keys_rejected() {
        assert!(RuleTable::from_json(r#"{"CWE-1": "spatial", "CWE-1": "temporal"}"#).is_err());
        assert!(RuleTable::from_json(r#"{"CWE-1": "spatial", "CWE-01": "spatial"}"#).is_err());
        assert!(RuleTable::from_json(r#"{"CWE-1": "bogus"}"#).is_err());
        assert!(RuleTable::from_json(r#"{"CWE-1": "spatial"} x"#).is_err());
        let t = RuleTable::from_json(r#"{"CWE-1": "spatial-memory-related"}"#).unwrap();
        assert_eq!(t.get(1), Some(MemoryClass::Spatial));
    }

    #[test]
    fn cwe_lookup() {
        let t = RuleTable::builtin();
        assert_eq!(classify_cwe("CWE-125", t).unwrap().unwrap().class, MemoryClass::Spatial);
        assert_eq!(classify_cwe("CWE-416", t).unwrap().unwrap().class, MemoryClass::Temporal);
        assert_eq!(classify_cwe("CWE-22", t).unwrap().unwrap().class, MemoryClass::NotMemory);
        assert_eq!(classify_cwe("CWE-99999", t).unwrap(), None);
        for bad in ["125", "CWE-", "CWE-12a", "NVD-CWE-noinfo"] {
            assert!(matches!(classify_cwe(bad, t), Err(ClassifyError::MalformedCweId(_))), "{bad}");
        }
    }

    #[test]
    fn keyword_precedence() {
        let r = classify_description("heap-based buffer overflow in the parser").unwrap();
        assert_eq!((r.class, r.confidence), (MemoryClass::Spatial, Confidence::High));
        let r = classify_description("use-after-free leading to buffer overflow").unwrap();
        assert_eq!(r.class, MemoryClass::Temporal);
        let r = classify_description("A NULL pointer dereference in foo").unwrap();
        assert_eq!(r.class, MemoryClass::OtherMemory);
        let r = classify_description("allows remote attackers to execute arbitrary code via a crafted DNS response")
            .unwrap();
        assert_eq!((r.class, r.confidence), (MemoryClass::NotMemory, Confidence::Low));
        assert!(matches!(classify_description("  "), Err(ClassifyError::EmptyDescription)));
    }
}
