//! Per-input work shared by `scan`, `analyze` and `corpus`.

use std::fs;
use std::io::Write;
use std::path::Path;

use firmscan_core::analytics::{
    build_occurrences, memory_histogram, memory_share, severity_histogram, top_cwes, write_occurrences_csv,
    ClassCounts, CweCount, FirmwareLedger, SeverityCounts,
};
use firmscan_core::classify::{Classifier, LlmClient, LlmConfig, RuleTable};
use firmscan_core::firmware::cache::{self, ExtractionManifest};
use firmscan_core::firmware::tree::sha256_hex;
use firmscan_core::firmware::{extract_root_filesystem, load_tree_from_archive, RawFirmware, RootFs};
use firmscan_core::inventory::{emit_cyclonedx, identify_components, parse_sbom, Cpe23, EmitOptions, FirmwareMeta};
use firmscan_core::vulndb::{load_index, VulnIndex};
use serde::Serialize;

use crate::args::ClassifierMode;
use crate::config::RunConfig;
use crate::error::CliError;

/// Writes through a sibling temp file so readers never see partial output.
pub fn write_atomic(path: &Path, data: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir.display(), e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir.display(), e))?;
    tmp.write_all(data).map_err(|e| CliError::io(path.display(), e))?;
    tmp.persist(path).map_err(|e| CliError::io(path.display(), e.error))?;
    Ok(())
}

pub fn file_label(path: &Path) -> String {
    path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| path.display().to_string())
}

pub fn open_index(cfg: &RunConfig) -> Result<VulnIndex, CliError> {
    load_index(cfg.index_path()).map_err(|e| match e {
        firmscan_core::vulndb::IndexError::Io(io) => CliError::Io(format!(
            "index {}: {io} (run `firmscan feed ingest` first)",
            cfg.index_path().display()
        )),
        other => other.into(),
    })
}

pub fn build_classifier<'t>(cfg: &RunConfig, table: &'t RuleTable) -> Classifier<'t> {
    let classifier = Classifier::new(table);
    match (cfg.classifier_mode, &cfg.llm_endpoint, &cfg.llm_api_key) {
        (ClassifierMode::RuleThenLlm, Some(endpoint), Some(key)) => {
            classifier.with_llm(LlmClient::new(LlmConfig::new(endpoint.clone(), cfg.llm_model.clone(), key.clone())))
        }
        _ => classifier,
    }
}

fn is_archive_path(path: &Path) -> bool {
    let name = file_label(path).to_ascii_lowercase();
    name.ends_with(".tar") || name.ends_with(".tar.gz") || name.ends_with(".tgz")
}

/// Looks like a JSON document rather than a firmware image.
pub fn is_sbom_path(path: &Path) -> bool {
    path.is_file() && file_label(path).to_ascii_lowercase().ends_with(".json")
}

pub struct Scanned {
    pub firmware_id: String,
    pub name: String,
    pub sbom: String,
}

fn extract(cfg: &RunConfig, path: &Path) -> Result<(ExtractionManifest, RootFs), CliError> {
    let name = file_label(path);
    if path.is_dir() || is_archive_path(path) {
        let rootfs = load_tree_from_archive(path)?;
        let tree_json = serde_json::to_vec(&rootfs.tree).map_err(|e| CliError::Parse(e.to_string()))?;
        let digest = sha256_hex(&tree_json);
        return Ok((ExtractionManifest::new(&digest, &name, None, rootfs.tree.clone()), rootfs));
    }
    let bytes = fs::read(path).map_err(|e| CliError::io(path.display(), e))?;
    let image = RawFirmware::new(name.clone(), bytes);
    if let Some(hit) = cache::load(&cfg.cache_dir, image.digest()) {
        log::info!("{name}: using cached extraction");
        return Ok(hit);
    }
    let (rootfs, hit) = extract_root_filesystem(&image).map_err(|e| {
        let e = CliError::from(e);
        match e {
            CliError::Extraction(m) => CliError::Extraction(format!("{name}: {m}")),
            other => other,
        }
    })?;
    let manifest = ExtractionManifest::new(image.digest(), &name, Some(hit), rootfs.tree.clone());
    if let Err(e) = cache::store(&cfg.cache_dir, &manifest, &rootfs.contents) {
        log::warn!("{name}: could not cache extraction: {e}");
    }
    Ok((manifest, rootfs))
}

/// Extracts, inventories and writes `<out>/<digest>/{sbom.cdx.json,manifest.json}`.
pub fn scan(cfg: &RunConfig, path: &Path, write_files: bool) -> Result<Scanned, CliError> {
    let (manifest, rootfs) = extract(cfg, path)?;
    let components = identify_components(&rootfs.tree, &rootfs.contents);
    let meta = FirmwareMeta { name: manifest.source_id.clone(), digest: manifest.image_digest.clone() };
    let sbom = emit_cyclonedx(&components, &meta, EmitOptions { reproducible: cfg.reproducible })?;
    if write_files {
        let dir = cfg.firmware_out_dir(&manifest.image_digest);
        write_atomic(&dir.join("sbom.cdx.json"), sbom.as_bytes())?;
        let mut json = serde_json::to_vec_pretty(&manifest).map_err(|e| CliError::Parse(e.to_string()))?;
        json.push(b'\n');
        write_atomic(&dir.join("manifest.json"), &json)?;
    }
    log::info!("{}: {} components", meta.name, components.len());
    Ok(Scanned { firmware_id: manifest.image_digest, name: meta.name, sbom })
}

pub struct SbomInput {
    pub firmware_id: String,
    pub name: String,
    pub components: Vec<Cpe23>,
}

pub fn read_sbom(text: &str, fallback_name: &str) -> Result<SbomInput, CliError> {
    let parsed = parse_sbom(text)?;
    let mut components: Vec<Cpe23> = Vec::new();
    for entry in parsed.components {
        match entry.cpe {
            Some(cpe) => components.push(cpe),
            None => log::warn!("{fallback_name}: component {} has no CPE; skipped", entry.name),
        }
    }
    Ok(SbomInput {
        firmware_id: parsed.firmware_digest.unwrap_or_else(|| sha256_hex(text.as_bytes())),
        name: parsed.firmware_name.unwrap_or_else(|| fallback_name.to_owned()),
        components,
    })
}

/// SBOM file or firmware input, reduced to its component CPEs.
pub fn components_of(cfg: &RunConfig, path: &Path, write_files: bool) -> Result<SbomInput, CliError> {
    if is_sbom_path(path) {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path.display(), e))?;
        return read_sbom(&text, &file_label(path));
    }
    let scanned = scan(cfg, path, write_files)?;
    read_sbom(&scanned.sbom, &scanned.name)
}

#[derive(Debug, Serialize)]
pub struct FirmwareReport<'a> {
    pub firmware_id: &'a str,
    pub name: &'a str,
    pub component_count: usize,
    pub occurrence_count: usize,
    pub severity_histogram: SeverityCounts,
    pub memory_histogram: ClassCounts,
    pub memory_share: Option<f64>,
    pub top_cwes: Vec<CweCount>,
    pub warnings: &'a [String],
}

pub fn analyze(input: &SbomInput, index: &VulnIndex, classifier: &Classifier<'_>) -> Result<FirmwareLedger, CliError> {
    let ledger = build_occurrences(&input.firmware_id, &input.components, index, classifier)?;
    log::info!("{}: {} occurrences", input.name, ledger.occurrences.len());
    Ok(ledger)
}

pub fn firmware_report<'a>(input: &'a SbomInput, ledger: &'a FirmwareLedger) -> FirmwareReport<'a> {
    let occ = &ledger.occurrences;
    FirmwareReport {
        firmware_id: &input.firmware_id,
        name: &input.name,
        component_count: input.components.len(),
        occurrence_count: occ.len(),
        severity_histogram: severity_histogram(occ),
        memory_histogram: memory_histogram(occ),
        memory_share: memory_share(occ).ok(),
        top_cwes: top_cwes(occ, 10),
        warnings: &ledger.warnings,
    }
}

pub fn occurrences_csv(ledger_occurrences: &[firmscan_core::analytics::Occurrence]) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    write_occurrences_csv(&mut buf, ledger_occurrences)?;
    Ok(buf)
}

pub fn pretty_json<T: Serialize>(value: &T) -> Result<Vec<u8>, CliError> {
    let mut v = serde_json::to_vec_pretty(value).map_err(|e| CliError::Parse(e.to_string()))?;
    v.push(b'\n');
    Ok(v)
}
