//! Memory-safety classification of CVEs.

mod class;
pub mod llm;
mod rules;

use std::sync::atomic::{AtomicU64, Ordering};

pub use class::{ClassificationResult, ClassificationSource, Confidence, MemoryClass};
pub use llm::{LlmClient, LlmConfig, LlmError};
pub use rules::{classify_cwe, classify_description, RuleTable, KEYWORD_TRIGGERS};

use crate::vulndb::CveRecord;

#[derive(Debug, thiserror::Error)]
pub enum ClassifyError {
    #[error("malformed CWE id {0:?}")]
    MalformedCweId(String),
    #[error("empty description")]
    EmptyDescription,
    #[error("{cve}: CWEs map to conflicting classes {classes:?}")]
    Conflict { cve: String, classes: Vec<MemoryClass> },
    #[error("rule table: {0}")]
    RuleTable(String),
    #[error(transparent)]
    Llm(#[from] LlmError),
}

/// CVE classifier: rule table first, then the description (remote model or
/// keywords), then a NotMemory default.
#[derive(Debug)]
pub struct Classifier<'t> {
    table: &'t RuleTable,
    llm: Option<LlmClient>,
    llm_fallback: bool,
    strict: bool,
    description_calls: AtomicU64,
}

impl<'t> Classifier<'t> {
    pub fn new(table: &'t RuleTable) -> Self {
        Classifier { table, llm: None, llm_fallback: true, strict: false, description_calls: AtomicU64::new(0) }
    }

    pub fn with_llm(mut self, client: LlmClient) -> Self {
        self.llm = Some(client);
        self
    }

    /// Whether an LLM failure falls back to keywords (default) or is returned.
    pub fn llm_fallback(mut self, enabled: bool) -> Self {
        self.llm_fallback = enabled;
        self
    }

    /// Report CVEs whose table-listed CWEs disagree instead of taking the first.
    pub fn strict(mut self, enabled: bool) -> Self {
        self.strict = enabled;
        self
    }

    pub fn llm(&self) -> Option<&LlmClient> {
        self.llm.as_ref()
    }

    pub fn table(&self) -> &RuleTable {
        self.table
    }

    /// Times the description path (model or keywords) has been consulted.
    pub fn description_calls(&self) -> u64 {
        self.description_calls.load(Ordering::Relaxed)
    }

    pub fn classify_cve(&self, record: &CveRecord) -> Result<ClassificationResult, ClassifyError> {
        let mut hits = record.cwe_ids.iter().filter_map(|cwe| self.table.lookup(*cwe));
        if let Some(first) = hits.next() {
            if self.strict {
                let mut classes = vec![first.class];
                for other in hits {
                    if !classes.contains(&other.class) {
                        classes.push(other.class);
                    }
                }
                if classes.len() > 1 {
                    return Err(ClassifyError::Conflict { cve: record.id.to_string(), classes });
                }
            }
            return Ok(first);
        }
        if record.description.trim().is_empty() {
            return Ok(ClassificationResult {
                class: MemoryClass::NotMemory,
                source: ClassificationSource::Default,
                reasoning: "no classified CWE and no description".into(),
                confidence: Confidence::Low,
            });
        }
        self.description_calls.fetch_add(1, Ordering::Relaxed);
        if let Some(client) = &self.llm {
            match client.classify(&record.description) {
                Ok(r) => return Ok(r),
                Err(e) if self.llm_fallback => log::warn!("{}: classifier failed, using keywords: {e}", record.id),
                Err(e) => return Err(e.into()),
            }
        }
        classify_description(&record.description)
    }
}

/// Classification with the built-in rule table and no remote model.
pub fn classify_cve(record: &CveRecord, table: &RuleTable) -> ClassificationResult {
    Classifier::new(table).classify_cve(record).expect("offline classification is total")
}
