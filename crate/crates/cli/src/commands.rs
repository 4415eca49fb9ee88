use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use firmscan_core::analytics::{
    corpus_json, corpus_summary, estimate_sbd_impact, estimate_sbd_impact_over, impact_json, memory_share,
    read_occurrences_csv, write_top_cpes_by_class_csv, write_top_cpes_by_severity_csv, write_top_cwes_csv,
    CorpusExtras, FirmwareLedger, ImpactReport, Occurrence,
};
use firmscan_core::classify::RuleTable;
use firmscan_core::vulndb::fetch::{fetch_nvd_pages, FetchError, FetchOptions};
use firmscan_core::vulndb::{ingest_nvd_feed, save_index, IngestOptions, SeverityBucket};
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::pipeline::{
    analyze, build_classifier, components_of, file_label, firmware_report, occurrences_csv, open_index, pretty_json,
    scan, write_atomic, SbomInput,
};

const FIXED_TIMESTAMP: &str = "1970-01-01T00:00:00Z";
const VENDOR_MANIFEST: &str = "manifest.csv";

fn stdout_write(data: &[u8]) -> Result<(), CliError> {
    std::io::stdout().lock().write_all(data).map_err(|e| CliError::io("stdout", e))
}

fn ingest_options(cfg: &RunConfig) -> IngestOptions {
    IngestOptions { ingested_at: cfg.reproducible.then(|| FIXED_TIMESTAMP.to_owned()), ..IngestOptions::default() }
}

pub fn feed_ingest(cfg: &RunConfig, feeds: &[PathBuf]) -> Result<(), CliError> {
    let paths = if feeds.is_empty() { &cfg.nvd_feed_paths[..] } else { feeds };
    if paths.is_empty() {
        return Err(CliError::Config("no feed files given (arguments or nvd_feeds)".into()));
    }
    let docs = paths
        .iter()
        .map(|p| fs::read(p).map_err(|e| CliError::io(p.display(), e)))
        .collect::<Result<Vec<_>, _>>()?;
    let index = ingest_nvd_feed(&docs, &ingest_options(cfg))?;
    save_index(&index, cfg.index_path())?;
    if index.duplicate_count() > 0 {
        eprintln!("{} duplicate records replaced", index.duplicate_count());
    }
    eprintln!("ingested {} records", index.len());
    Ok(())
}

pub fn feed_fetch(
    cfg: &RunConfig,
    cpe_name: Option<&str>,
    keyword: Option<&str>,
    url: Option<&str>,
) -> Result<(), CliError> {
    if cfg.offline {
        return Err(CliError::Config("feed fetch needs --online".into()));
    }
    let mut query = Vec::new();
    if let Some(c) = cpe_name {
        query.push(("cpeName".to_owned(), c.to_owned()));
    }
    if let Some(k) = keyword {
        query.push(("keywordSearch".to_owned(), k.to_owned()));
    }
    let mut opts = FetchOptions { query, api_key: cfg.nvd_api_key.clone(), ..FetchOptions::default() };
    if let Some(u) = url {
        opts.base_url = u.to_owned();
    }
    if opts.api_key.is_some() {
        opts.page_delay = Duration::from_millis(600);
    }
    let pages = fetch_nvd_pages(&opts).map_err(|e| match e {
        FetchError::Malformed(m) => CliError::Parse(format!("NVD response: {m}")),
        other => CliError::Io(format!("NVD fetch: {other}")),
    })?;
    let feed_dir = cfg.cache_dir.join("feeds");
    for (i, page) in pages.iter().enumerate() {
        write_atomic(&feed_dir.join(format!("nvd-page-{i:04}.json")), page)?;
    }
    let index = ingest_nvd_feed(&pages, &ingest_options(cfg))?;
    save_index(&index, cfg.index_path())?;
    eprintln!("ingested {} records", index.len());
    Ok(())
}

pub fn scan_cmd(cfg: &RunConfig, image: &Path) -> Result<(), CliError> {
    let scanned = scan(cfg, image, !cfg.stdout)?;
    if cfg.stdout {
        stdout_write(scanned.sbom.as_bytes())?;
    } else {
        eprintln!("wrote {}", cfg.firmware_out_dir(&scanned.firmware_id).join("sbom.cdx.json").display());
    }
    Ok(())
}

fn write_firmware_outputs(cfg: &RunConfig, input: &SbomInput, ledger: &FirmwareLedger) -> Result<(), CliError> {
    let dir = cfg.firmware_out_dir(&input.firmware_id);
    write_atomic(&dir.join("occurrences.csv"), &occurrences_csv(&ledger.occurrences)?)?;
    write_atomic(&dir.join("report.json"), &pretty_json(&firmware_report(input, ledger))?)
}

pub fn analyze_cmd(cfg: &RunConfig, input_path: &Path) -> Result<(), CliError> {
    let index = open_index(cfg)?;
    let classifier = build_classifier(cfg, RuleTable::builtin());
    let input = components_of(cfg, input_path, !cfg.stdout)?;
    let ledger = analyze(&input, &index, &classifier)?;
    if cfg.stdout {
        stdout_write(&occurrences_csv(&ledger.occurrences)?)?;
    } else {
        write_firmware_outputs(cfg, &input, &ledger)?;
    }
    let related = ledger.occurrences.iter().filter(|o| o.mem_class.is_memory_related()).count();
    eprintln!(
        "{}: {} components, {} occurrences, {} memory-related",
        input.name,
        input.components.len(),
        ledger.occurrences.len(),
        related
    );
    Ok(())
}

fn corpus_inputs(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut inputs = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| CliError::io(dir.display(), e))? {
        let entry = entry.map_err(|e| CliError::io(dir.display(), e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.starts_with('.') || name == VENDOR_MANIFEST {
            continue;
        }
        inputs.push(entry.path());
    }
    inputs.sort();
    Ok(inputs)
}

/// `path,vendor` rows; paths are relative to the corpus directory.
fn read_vendor_manifest(path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
    let mut out = BTreeMap::new();
    for row in reader.deserialize::<(String, String)>() {
        let (p, vendor) = row.map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
        out.insert(p.trim().trim_start_matches("./").to_owned(), vendor.trim().to_owned());
    }
    Ok(out)
}

struct Analyzed {
    label: String,
    input: SbomInput,
    ledger: FirmwareLedger,
}

pub fn corpus_cmd(cfg: &RunConfig, dir: &Path, top_cwes: usize, top_cpes: usize) -> Result<(), CliError> {
    let inputs = corpus_inputs(dir)?;
    if inputs.is_empty() {
        return Err(CliError::Extraction(format!("{}: no inputs", dir.display())));
    }
    let vendors = {
        let manifest = dir.join(VENDOR_MANIFEST);
        if manifest.is_file() { read_vendor_manifest(&manifest)? } else { BTreeMap::new() }
    };
    let index = open_index(cfg)?;
    let classifier = build_classifier(cfg, RuleTable::builtin());
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallelism)
        .build()
        .map_err(|e| CliError::Config(format!("worker pool: {e}")))?;

    let results: Vec<(String, Result<Analyzed, CliError>)> = pool.install(|| {
        inputs
            .par_iter()
            .map(|path| {
                let label = file_label(path);
                let outcome = components_of(cfg, path, true).and_then(|input| {
                    let ledger = analyze(&input, &index, &classifier)?;
                    write_firmware_outputs(cfg, &input, &ledger)?;
                    Ok(Analyzed { label: label.clone(), input, ledger })
                });
                (label, outcome)
            })
            .collect()
    });

    let mut warnings = Vec::new();
    let mut analyzed = Vec::new();
    for (label, outcome) in results {
        match outcome {
            Ok(a) => analyzed.push(a),
            Err(e) => {
                log::warn!("{label}: {e}");
                warnings.push(format!("{label}: {e}"));
            }
        }
    }
    if analyzed.is_empty() {
        return Err(CliError::Extraction(format!("all {} inputs failed", inputs.len())));
    }
    analyzed.sort_by(|a, b| (&a.input.firmware_id, &a.label).cmp(&(&b.input.firmware_id, &b.label)));

    let ledgers: Vec<FirmwareLedger> = analyzed.iter().map(|a| a.ledger.clone()).collect();
    let report = corpus_summary(&ledgers);
    let all: Vec<Occurrence> = ledgers.iter().flat_map(|l| l.occurrences.iter().cloned()).collect();

    let mut by_vendor: BTreeMap<&str, Vec<Occurrence>> = BTreeMap::new();
    for a in &analyzed {
        if let Some(vendor) = vendors.get(&a.label) {
            by_vendor.entry(vendor).or_default().extend(a.ledger.occurrences.iter().cloned());
        }
    }
    let extras = CorpusExtras {
        top_cwes,
        top_cpes,
        memory_share_by_group: by_vendor
            .into_iter()
            .filter_map(|(v, occ)| memory_share(&occ).ok().map(|s| (v.to_owned(), s)))
            .collect(),
        warnings,
        skipped_components: analyzed.iter().flat_map(|a| a.ledger.warnings.iter().cloned()).collect(),
    };

    let out = &cfg.out_dir;
    write_atomic(&out.join("occurrences.csv"), &occurrences_csv(&all)?)?;
    let mut buf = Vec::new();
    write_top_cwes_csv(&mut buf, report.top_cwes(top_cwes))?;
    write_atomic(&out.join("top_cwes.csv"), &buf)?;
    buf.clear();
    write_top_cpes_by_severity_csv(&mut buf, report.top_cpes(top_cpes))?;
    write_atomic(&out.join("top_cpes_by_severity.csv"), &buf)?;
    buf.clear();
    write_top_cpes_by_class_csv(&mut buf, report.top_cpes(top_cpes))?;
    write_atomic(&out.join("top_cpes_by_class.csv"), &buf)?;

    let corpus = corpus_json(&report, &extras)?;
    if cfg.stdout {
        stdout_write(corpus.as_bytes())?;
    } else {
        write_atomic(&out.join("corpus.json"), corpus.as_bytes())?;
    }
    match estimate_sbd_impact_over(&all, report.firmware_count) {
        Ok(impact) => {
            write_atomic(&out.join("impact.json"), impact_json(&impact)?.as_bytes())?;
            eprintln!(
                "corpus: {} of {} inputs analyzed, {} occurrences, reduction factor {}",
                analyzed.len(),
                inputs.len(),
                report.occurrence_total,
                impact.reduction_factor
            );
        }
        Err(_) => {
            log::warn!("no occurrences in corpus; impact.json not written");
            eprintln!("corpus: {} of {} inputs analyzed, 0 occurrences", analyzed.len(), inputs.len());
        }
    }
    Ok(())
}

fn print_impact_table(r: &ImpactReport) {
    eprintln!("{:<10} {:>8} {:>8} {:>12} {:>12}", "severity", "before", "after", "mean before", "mean after");
    for b in SeverityBucket::ALL.iter().rev() {
        eprintln!(
            "{:<10} {:>8} {:>8} {:>12.2} {:>12.2}",
            b.as_str(),
            r.before[b],
            r.after[b],
            r.per_firmware_before[b],
            r.per_firmware_after[b]
        );
    }
    let n = r.firmware_count.max(1) as f64;
    eprintln!(
        "{:<10} {:>8} {:>8} {:>12.2} {:>12.2}",
        "total",
        r.before_total,
        r.after_total,
        r.before_total as f64 / n,
        r.after_total as f64 / n
    );
    eprintln!("firmware images: {}", r.firmware_count);
    eprintln!("eliminated share: {:.2}%", r.eliminated_share * 100.0);
    eprintln!("reduction factor: {}", r.reduction_factor);
}

pub fn impact_cmd(cfg: &RunConfig, csv_path: &Path, firmware_count: Option<u64>) -> Result<(), CliError> {
    let file = fs::File::open(csv_path).map_err(|e| CliError::io(csv_path.display(), e))?;
    let occurrences =
        read_occurrences_csv(file).map_err(|e| CliError::from(e).prefixed(&csv_path.display().to_string()))?;
    let report = match firmware_count {
        Some(n) => estimate_sbd_impact_over(&occurrences, n),
        None => estimate_sbd_impact(&occurrences),
    }
    .map_err(|e| CliError::Parse(format!("{}: {e}", csv_path.display())))?;
    print_impact_table(&report);
    let json = impact_json(&report)?;
    if cfg.stdout {
        stdout_write(json.as_bytes())
    } else {
        write_atomic(&cfg.out_dir.join("impact.json"), json.as_bytes())
    }
}
