//! Software component identification, CPE naming and SBOM output.

pub mod cpe;
mod identify;
pub mod known;
pub mod opkg;
pub mod sbom;

pub use cpe::{format_cpe, parse_cpe, to_cpe, Cpe23, CpeError, CpeValue, ParseMode, Part};
pub use identify::{
    identify_components, identify_components_with, normalize_version, printable_runs, Component, Evidence,
    EvidenceSource, MAX_SCAN_BYTES,
};
pub use known::{KnownComponentRule, KnownComponentTable, RuleStrategy};
pub use opkg::{parse_opkg_status, OpkgPackage, OpkgStatus};
pub use sbom::{emit_cyclonedx, parse_sbom, validate_sbom, validate_sbom_str, EmitOptions, FirmwareMeta, ParsedSbom, SbomError};

#[derive(Debug, thiserror::Error)]
pub enum InventoryError {
    #[error("component rule table: {0}")]
    RuleTable(String),
}
