//! CycloneDX 1.5 JSON emission, validation and re-reading.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::cpe::Cpe23;
use super::identify::{Component, EvidenceSource};

pub const SPEC_VERSION: &str = "1.5";
pub const TOOL_NAME: &str = "firmscan";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const REPRODUCIBLE_TIMESTAMP: &str = "1970-01-01T00:00:00Z";

const BOM_SCHEMA: &str = include_str!("../../schema/bom-1.5.schema.json");
const SPDX_SCHEMA: &str = include_str!("../../schema/spdx.schema.json");
const JSF_SCHEMA: &str = include_str!("../../schema/jsf-0.82.schema.json");

#[derive(Debug, thiserror::Error)]
pub enum SbomError {
    #[error("serialization failed: {0}")]
    Serialization(String),
    #[error("document violates the CycloneDX 1.5 schema: {}", .0.join("; "))]
    SchemaViolation(Vec<String>),
    #[error("not a CycloneDX document: {0}")]
    Parse(String),
}

/// Identity of the firmware image the SBOM describes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FirmwareMeta {
    pub name: String,
    pub digest: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EmitOptions {
    /// Fixed timestamp and content-derived serial number.
    pub reproducible: bool,
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
struct Bom<'a> {
    bom_format: &'static str,
    spec_version: &'static str,
    serial_number: String,
    version: u32,
    metadata: Metadata<'a>,
    components: Vec<BomComponent>,
}

#[derive(Debug, Serialize)]
struct Metadata<'a> {
    timestamp: String,
    tools: Tools,
    component: FirmwareComponent<'a>,
}

#[derive(Debug, Serialize)]
struct Tools {
    components: [ToolComponent; 1],
}

#[derive(Debug, Serialize)]
struct ToolComponent {
    #[serde(rename = "type")]
    kind: &'static str,
    name: &'static str,
    version: &'static str,
}

#[derive(Debug, Serialize)]
struct FirmwareComponent<'a> {
    #[serde(rename = "type")]
    kind: &'static str,
    #[serde(rename = "bom-ref")]
    bom_ref: &'static str,
    name: &'a str,
    hashes: [Hash<'a>; 1],
}

#[derive(Debug, Serialize, Deserialize)]
struct Hash<'a> {
    alg: &'a str,
    content: &'a str,
}

#[derive(Debug, Serialize)]
struct BomComponent {
    #[serde(rename = "type")]
    kind: &'static str,
    #[serde(rename = "bom-ref")]
    bom_ref: String,
    name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    version: Option<String>,
    cpe: String,
    evidence: BomEvidence,
    properties: Vec<Property>,
}

#[derive(Debug, Serialize)]
struct BomEvidence {
    occurrences: Vec<Occurrence>,
}

#[derive(Debug, Serialize)]
struct Occurrence {
    location: String,
}

#[derive(Debug, Serialize)]
struct Property {
    name: &'static str,
    value: String,
}

fn source_label(source: EvidenceSource) -> &'static str {
    match source {
        EvidenceSource::OpkgStatus => "opkg-status",
        EvidenceSource::VersionString => "version-string",
        EvidenceSource::SharedLibraryName => "shared-library-name",
        EvidenceSource::KnownPath => "known-path",
    }
}

fn bom_component(c: &Component) -> BomComponent {
    let cpe = c.cpe.to_string();
    let is_library = c.evidence.iter().any(|e| e.source == EvidenceSource::SharedLibraryName);
    let mut locations: Vec<String> = c.evidence.iter().map(|e| e.path.to_string()).collect();
    locations.sort();
    locations.dedup();
    BomComponent {
        kind: if is_library { "library" } else { "application" },
        bom_ref: cpe.clone(),
        name: c.display_name.clone(),
        version: c.cpe.version.literal().map(str::to_owned),
        cpe,
        evidence: BomEvidence { occurrences: locations.into_iter().map(|location| Occurrence { location }).collect() },
        properties: c
            .evidence
            .iter()
            .map(|e| Property { name: "firmscan:evidence", value: format!("{}:{}", source_label(e.source), e.path) })
            .collect(),
    }
}

fn serial_number(meta: &FirmwareMeta, cpes: &[&str], reproducible: bool) -> String {
    let id = if reproducible {
        let mut h = Sha256::new();
        h.update(b"firmscan-sbom\0");
        h.update(meta.digest.as_bytes());
        for cpe in cpes {
            h.update(b"\0");
            h.update(cpe.as_bytes());
        }
        let bytes: [u8; 16] = h.finalize()[..16].try_into().expect("16 bytes");
        uuid::Builder::from_random_bytes(bytes).into_uuid()
    } else {
        uuid::Uuid::new_v4()
    };
    id.urn().to_string()
}

/// Serializes the components as a CycloneDX 1.5 JSON document. Components
/// sharing a CPE string are emitted once.
pub fn emit_cyclonedx(components: &[Component], meta: &FirmwareMeta, opts: EmitOptions) -> Result<String, SbomError> {
    let mut items: Vec<BomComponent> = components.iter().map(bom_component).collect();
    items.sort_by(|a, b| a.cpe.cmp(&b.cpe));
    items.dedup_by(|a, b| a.cpe == b.cpe);
    let cpes: Vec<&str> = items.iter().map(|c| c.cpe.as_str()).collect();
    let serial = serial_number(meta, &cpes, opts.reproducible);
    let timestamp = if opts.reproducible {
        REPRODUCIBLE_TIMESTAMP.to_owned()
    } else {
        chrono::Utc::now().format("%Y-%m-%dT%H:%M:%SZ").to_string()
    };
    let bom = Bom {
        bom_format: "CycloneDX",
        spec_version: SPEC_VERSION,
        serial_number: serial,
        version: 1,
        metadata: Metadata {
            timestamp,
            tools: Tools { components: [ToolComponent { kind: "application", name: TOOL_NAME, version: TOOL_VERSION }] },
            component: FirmwareComponent {
                kind: "firmware",
                bom_ref: "firmware",
                name: &meta.name,
                hashes: [Hash { alg: "SHA-256", content: &meta.digest }],
            },
        },
        components: items,
    };
    let mut text = serde_json::to_string_pretty(&bom).map_err(|e| SbomError::Serialization(e.to_string()))?;
    text.push('\n');
    Ok(text)
}

fn validator() -> &'static jsonschema::Validator {
    static REGISTRY: OnceLock<jsonschema::Registry<'static>> = OnceLock::new();
    static VALIDATOR: OnceLock<jsonschema::Validator> = OnceLock::new();
    let parse = |text: &str| serde_json::from_str::<Value>(text).expect("vendored schema is JSON");
    let registry = REGISTRY.get_or_init(|| {
        jsonschema::Registry::new()
            .add("http://cyclonedx.org/schema/spdx.schema.json", parse(SPDX_SCHEMA))
            .and_then(|b| b.add("http://cyclonedx.org/schema/jsf-0.82.schema.json", parse(JSF_SCHEMA)))
            .and_then(|b| b.prepare())
            .expect("vendored schemas register")
    });
    VALIDATOR.get_or_init(|| {
        jsonschema::options()
            .offline()
            .with_registry(registry)
            .should_validate_formats(true)
            .build(&parse(BOM_SCHEMA))
            .expect("vendored CycloneDX schema compiles")
    })
}

/// Checks a parsed document against the vendored CycloneDX 1.5 schema.
pub fn validate_sbom(doc: &Value) -> Result<(), SbomError> {
    let errors: Vec<String> = validator()
        .iter_errors(doc)
        .map(|e| format!("{}: {}", e.instance_path(), e))
        .collect();
    if errors.is_empty() {
        Ok(())
    } else {
        Err(SbomError::SchemaViolation(errors))
    }
}

pub fn validate_sbom_str(text: &str) -> Result<(), SbomError> {
    let doc: Value = serde_json::from_str(text).map_err(|e| SbomError::Parse(e.to_string()))?;
    validate_sbom(&doc)
}

/// A component read back from an SBOM.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SbomEntry {
    pub name: String,
    pub version: Option<String>,
    pub cpe: Option<Cpe23>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedSbom {
    pub firmware_name: Option<String>,
    pub firmware_digest: Option<String>,
    pub components: Vec<SbomEntry>,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct InBom {
    bom_format: String,
    spec_version: String,
    #[serde(default)]
    metadata: Option<InMetadata>,
    #[serde(default)]
    components: Vec<InComponent>,
}

#[derive(Deserialize)]
struct InMetadata {
    component: Option<InFirmware>,
}

#[derive(Deserialize)]
struct InFirmware {
    name: Option<String>,
    #[serde(default)]
    hashes: Vec<InHash>,
}

#[derive(Deserialize)]
struct InHash {
    alg: String,
    content: String,
}

#[derive(Deserialize)]
struct InComponent {
    name: String,
    version: Option<String>,
    cpe: Option<String>,
}

/// Reads a CycloneDX JSON document, keeping only what vulnerability matching
/// needs. Components with unparsable CPEs keep `cpe: None`.
pub fn parse_sbom(text: &str) -> Result<ParsedSbom, SbomError> {
    let bom: InBom = serde_json::from_str(text).map_err(|e| SbomError::Parse(e.to_string()))?;
    if bom.bom_format != "CycloneDX" {
        return Err(SbomError::Parse(format!("bomFormat {:?}", bom.bom_format)));
    }
    if !bom.spec_version.starts_with("1.") {
        return Err(SbomError::Parse(format!("specVersion {:?}", bom.spec_version)));
    }
    let firmware = bom.metadata.and_then(|m| m.component);
    let firmware_digest = firmware
        .as_ref()
        .and_then(|f| f.hashes.iter().find(|h| h.alg == "SHA-256").map(|h| h.content.clone()));
    Ok(ParsedSbom {
        firmware_name: firmware.and_then(|f| f.name),
        firmware_digest,
        components: bom
            .components
            .into_iter()
            .map(|c| SbomEntry { cpe: c.cpe.as_deref().and_then(|t| Cpe23::parse(t).ok()), name: c.name, version: c.version })
            .collect(),
    })
}
