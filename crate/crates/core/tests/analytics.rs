use std::collections::{BTreeMap, HashMap};

use firmscan_core::analytics::{
    build_occurrences, corpus_json, corpus_summary, estimate_sbd_impact, estimate_sbd_impact_over, impact_json,
    memory_share, memory_share_by_component, read_occurrences_csv, top_cpes, top_cwes, write_occurrences_csv,
    write_top_cpes_by_class_csv, write_top_cpes_by_severity_csv, write_top_cwes_csv, AnalyticsError, CorpusExtras,
    CorpusReport, FirmwareLedger, Occurrence, ReductionFactor,
};
use firmscan_core::classify::{ClassificationSource, Classifier, MemoryClass, RuleTable};
use firmscan_core::inventory::Cpe23;
use firmscan_core::vulndb::{ingest_nvd_feed, IngestOptions, SeverityBucket, VulnIndex};
use firmscan_fixtures as fx;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn fixture_index() -> VulnIndex {
    ingest_nvd_feed(&[fx::NVD_BUSYBOX_FEED], &IngestOptions::default()).unwrap()
}

fn occ(fw: &str, cpe: &str, cve: &str, cwe: Option<&str>, severity: SeverityBucket, class: MemoryClass) -> Occurrence {
    Occurrence {
        firmware_id: fw.into(),
        component_cpe: cpe.into(),
        cve_id: cve.into(),
        cwe_id: cwe.map(str::to_owned),
        severity,
        mem_class: class,
        classification_source: ClassificationSource::RuleTable,
    }
}

fn random_occurrences(rng: &mut impl Rng, n: usize) -> Vec<Occurrence> {
    (0..n)
        .map(|i| Occurrence {
            firmware_id: format!("fw{}", rng.gen_range(0..40)),
            component_cpe: format!("cpe:2.3:a:v{0}:p{0}:1.{1}:*:*:*:*:*:*:*", rng.gen_range(0..12), rng.gen_range(0..3)),
            cve_id: format!("CVE-2020-{}", 1000 + i),
            cwe_id: match rng.gen_range(0..10) {
                0 => None,
                1 => Some("CWE-noinfo".into()),
                k => Some(format!("CWE-{}", [20, 22, 79, 119, 125, 416, 476, 787][k - 2])),
            },
            severity: SeverityBucket::ALL[rng.gen_range(0..5)],
            mem_class: MemoryClass::ALL[rng.gen_range(0..4)],
            classification_source: ClassificationSource::RuleTable,
        })
        .collect()
}

// Naive rescans used as oracles.

fn naive_count<F: Fn(&Occurrence) -> bool>(occ: &[Occurrence], f: F) -> u64 {
    occ.iter().filter(|o| f(o)).count() as u64
}

fn naive_cwe_ranking(occ: &[Occurrence]) -> Vec<(String, u64)> {
    let mut ids: Vec<String> = occ.iter().filter_map(|o| o.cwe_id.clone()).collect();
    ids.sort();
    ids.dedup();
    let mut rows: Vec<(String, u64)> =
        ids.into_iter().map(|id| { let n = naive_count(occ, |o| o.cwe_id.as_deref() == Some(&id)); (id, n) }).collect();
    let key = |id: &str| -> (u8, u32) {
        match id.strip_prefix("CWE-").and_then(|n| n.parse().ok()) {
            Some(n) => (0, n),
            None => (1, 0),
        }
    };
    rows.sort_by(|a, b| b.1.cmp(&a.1).then(key(&a.0).cmp(&key(&b.0))).then(a.0.cmp(&b.0)));
    rows
}

#[test]
fn figure_one_ledger() {
    let index = fixture_index();
    let table = RuleTable::builtin();
    let classifier = Classifier::new(table);
    let cpe = Cpe23::parse("cpe:2.3:a:busybox:busybox:1.33.2:*:*:*:*:*:*:*").unwrap();
    let ledger = build_occurrences("fw-a", &[cpe], &index, &classifier).unwrap();
    let got: Vec<(&str, Option<&str>, MemoryClass)> =
        ledger.occurrences.iter().map(|o| (o.cve_id.as_str(), o.cwe_id.as_deref(), o.mem_class)).collect();
    assert_eq!(
        got,
        vec![
            ("CVE-2021-42376", Some("CWE-476"), MemoryClass::OtherMemory),
            ("CVE-2022-28391", Some("CWE-noinfo"), MemoryClass::NotMemory),
            ("CVE-2022-48174", Some("CWE-787"), MemoryClass::Spatial),
            ("CVE-2023-39810", Some("CWE-22"), MemoryClass::NotMemory),
        ]
    );
    assert!(ledger.warnings.is_empty());
    assert_eq!(memory_share(&ledger.occurrences).unwrap(), 0.5);
}

#[test]
fn shared_cve_counted_per_component() {
    let index = fixture_index();
    let classifier = Classifier::new(RuleTable::builtin());
    let a = Cpe23::parse("cpe:2.3:a:busybox:busybox:1.33.2:*:*:*:*:*:*:*").unwrap();
    let b = Cpe23::parse("cpe:2.3:a:busybox:busybox:1.36.0:*:*:*:*:*:*:*").unwrap();
    let ledger = build_occurrences("fw", &[a, b], &index, &classifier).unwrap();
    let shared = ledger.occurrences.iter().filter(|o| o.cve_id == "CVE-2023-39810").count();
    assert_eq!(shared, 2);
    assert_eq!(ledger.occurrences.len(), 5);
}

#[test]
fn empty_and_unresolved_components() {
    let index = fixture_index();
    let classifier = Classifier::new(RuleTable::builtin());
    let empty = build_occurrences("fw", &[], &index, &classifier).unwrap();
    assert!(empty.occurrences.is_empty());

    let unversioned = Cpe23::parse("cpe:2.3:a:busybox:busybox:*:*:*:*:*:*:*:*").unwrap();
    let good = Cpe23::parse("cpe:2.3:a:busybox:busybox:1.36.0:*:*:*:*:*:*:*").unwrap();
    let ledger = build_occurrences("fw", &[unversioned, good], &index, &classifier).unwrap();
    assert_eq!(ledger.occurrences.len(), 1);
    assert_eq!(ledger.warnings.len(), 1);
}

#[test]
fn top_cwes_ranking_and_truncation() {
    let mut occs = Vec::new();
    for (cwe, n) in [("CWE-787", 3), ("CWE-22", 5), ("CWE-416", 2)] {
        for i in 0..n {
            occs.push(occ("fw", "cpe:x", &format!("CVE-1-{cwe}-{i}"), Some(cwe), SeverityBucket::High, MemoryClass::Spatial));
        }
    }
    let counts: Vec<u64> = top_cwes(&occs, 10).iter().map(|r| r.count).collect();
    assert_eq!(counts, vec![5, 3, 2]);
    assert_eq!(top_cwes(&occs, 2).len(), 2);
    assert_eq!(top_cwes(&occs, 1)[0].cwe_id, "CWE-22");
}

#[test]
fn top_cwes_ties_and_missing_cwe() {
    let occs = vec![
        occ("fw", "c", "a", Some("CWE-noinfo"), SeverityBucket::Low, MemoryClass::NotMemory),
        occ("fw", "c", "b", Some("CWE-787"), SeverityBucket::Low, MemoryClass::Spatial),
        occ("fw", "c", "c", Some("CWE-79"), SeverityBucket::Low, MemoryClass::NotMemory),
        occ("fw", "c", "d", None, SeverityBucket::Low, MemoryClass::NotMemory),
    ];
    let ids: Vec<String> = top_cwes(&occs, 10).into_iter().map(|r| r.cwe_id).collect();
    assert_eq!(ids, ["CWE-79", "CWE-787", "CWE-noinfo"]);
}

#[test]
fn zipf_generator_ranking() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut ids: Vec<u32> = (1..=1300).collect();
    ids.shuffle(&mut rng);
    let truth: Vec<(String, u64)> = (1..=25u64).map(|rank| (format!("CWE-{}", ids[rank as usize]), 2000 / rank)).collect();
    let mut occs = Vec::new();
    for (cwe, n) in &truth {
        for i in 0..*n {
            occs.push(occ("fw", "cpe:x", &format!("{cwe}-{i}"), Some(cwe), SeverityBucket::Medium, MemoryClass::Spatial));
        }
    }
    occs.shuffle(&mut rng);
    let got: Vec<(String, u64)> = top_cwes(&occs, 25).into_iter().map(|r| (r.cwe_id, r.count)).collect();
    assert_eq!(got, truth);
}

#[test]
fn grouped_memory_share() {
    let mut occs = Vec::new();
    for (product, related) in [("openssl", 5813u32), ("busybox", 8213), ("tcpdump", 10000)] {
        let cpe = format!("cpe:2.3:a:{product}:{product}:1.0:*:*:*:*:*:*:*");
        for i in 0..10000u32 {
            let class = if i < related { MemoryClass::Spatial } else { MemoryClass::NotMemory };
            occs.push(occ("fw", &cpe, &format!("CVE-{product}-{i}"), None, SeverityBucket::High, class));
        }
    }
    let shares = memory_share_by_component(&occs).unwrap();
    let get = |p: &str| shares[&format!("cpe:2.3:a:{p}:{p}:1.0:*:*:*:*:*:*:*")];
    assert!((get("openssl") - 0.5813).abs() < 1e-12);
    assert!((get("busybox") - 0.8213).abs() < 1e-12);
    assert_eq!(get("tcpdump"), 1.0);
    let all_spatial: Vec<Occurrence> = occs.iter().filter(|o| o.mem_class == MemoryClass::Spatial).cloned().collect();
    assert_eq!(memory_share(&all_spatial).unwrap(), 1.0);
    assert!(matches!(memory_share(&[]), Err(AnalyticsError::EmptyLedger)));
}

/// 502 images whose per-bucket totals give the published per-image means.
fn five_hundred_two_corpus() -> Vec<Occurrence> {
    const IMAGES: usize = 502;
    let plan = [
        (SeverityBucket::Critical, 1004, 0),
        (SeverityBucket::High, 4016, 703),
        (SeverityBucket::Medium, 11797, 3815),
        (SeverityBucket::Low, 1004, 502),
    ];
    let mut out = Vec::new();
    for (bucket, before, after) in plan {
        for i in 0..before {
            let class = if i < after { MemoryClass::NotMemory } else { MemoryClass::Temporal };
            out.push(occ(&format!("fw{:03}", i % IMAGES), "cpe:x", &format!("{bucket}-{i}"), None, bucket, class));
        }
    }
    out
}

#[test]
fn impact_per_firmware_means() {
    let occs = five_hundred_two_corpus();
    let r = estimate_sbd_impact(&occs).unwrap();
    assert_eq!(r.firmware_count, 502);
    let near = |m: &BTreeMap<SeverityBucket, f64>, b, v: f64| (m[&b] - v).abs() < 0.01;
    assert!(near(&r.per_firmware_before, SeverityBucket::Critical, 2.0));
    assert!(near(&r.per_firmware_before, SeverityBucket::High, 8.0));
    assert!(near(&r.per_firmware_before, SeverityBucket::Medium, 23.5));
    assert!(near(&r.per_firmware_before, SeverityBucket::Low, 2.0));
    assert!(near(&r.per_firmware_after, SeverityBucket::Critical, 0.0));
    assert!(near(&r.per_firmware_after, SeverityBucket::High, 1.4));
    assert!(near(&r.per_firmware_after, SeverityBucket::Medium, 7.6));
    assert!(near(&r.per_firmware_after, SeverityBucket::Low, 1.0));
    let expected = (2.0 + 8.0 + 23.5 + 2.0) / (0.0 + 1.4 + 7.6 + 1.0);
    assert!((r.reduction_factor.value() - expected).abs() < 0.01);
    assert_eq!(format!("{}", r.reduction_factor), "3.55");
}

#[test]
fn impact_seventy_four_percent() {
    let occs: Vec<Occurrence> = (0..1000)
        .map(|i| {
            let class = if i < 740 { MemoryClass::Spatial } else { MemoryClass::NotMemory };
            occ(&format!("fw{}", i % 7), "cpe:x", &i.to_string(), None, SeverityBucket::High, class)
        })
        .collect();
    let r = estimate_sbd_impact(&occs).unwrap();
    assert!((r.eliminated_share - 0.74).abs() < 1e-3);
    assert!((r.reduction_factor.value() - 1.0 / (1.0 - 0.74)).abs() < 0.01);
}

#[test]
fn impact_identity_and_infinity() {
    let none: Vec<Occurrence> =
        (0..10).map(|i| occ("fw", "c", &i.to_string(), None, SeverityBucket::Low, MemoryClass::NotMemory)).collect();
    let r = estimate_sbd_impact(&none).unwrap();
    assert_eq!(r.before, r.after);
    assert_eq!(r.reduction_factor, ReductionFactor::Finite(1.0));
    assert_eq!(r.eliminated_share, 0.0);

    let all: Vec<Occurrence> =
        (0..10).map(|i| occ("fw", "c", &i.to_string(), None, SeverityBucket::Low, MemoryClass::Spatial)).collect();
    let r = estimate_sbd_impact(&all).unwrap();
    assert_eq!(r.reduction_factor, ReductionFactor::Infinite);
    let json: serde_json::Value = serde_json::from_str(&impact_json(&r).unwrap()).unwrap();
    assert_eq!(json["reduction_factor"], "inf");
    assert!(matches!(estimate_sbd_impact(&[]), Err(AnalyticsError::EmptyLedger)));
}

#[test]
fn impact_over_explicit_firmware_count() {
    let occs = vec![occ("fw", "c", "1", None, SeverityBucket::Low, MemoryClass::NotMemory)];
    let r = estimate_sbd_impact_over(&occs, 4).unwrap();
    assert_eq!(r.per_firmware_before[&SeverityBucket::Low], 0.25);
}

#[test]
fn corpus_mean_over_502_images() {
    const TOTAL: usize = 17_341;
    let ledgers: Vec<FirmwareLedger> = (0..502)
        .map(|f| FirmwareLedger {
            firmware_id: format!("fw{f:03}"),
            occurrences: (0..TOTAL)
                .filter(|i| i % 502 == f)
                .map(|i| occ(&format!("fw{f:03}"), "c", &i.to_string(), None, SeverityBucket::Medium, MemoryClass::NotMemory))
                .collect(),
            warnings: vec![],
        })
        .collect();
    let report = corpus_summary(&ledgers);
    assert_eq!(report.firmware_count, 502);
    assert_eq!(report.occurrence_total, TOTAL as u64);
    let expected = TOTAL as f64 / 502.0;
    assert!((report.mean_occurrences_per_firmware() - expected).abs() < 1e-12);
    let json: serde_json::Value = serde_json::from_str(&corpus_json(&report, &CorpusExtras::default()).unwrap()).unwrap();
    assert_eq!(json["mean_occurrences_per_firmware"], 34.54);
}

#[test]
fn single_firmware_summary_equals_own_report() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut occs = random_occurrences(&mut rng, 200);
    for o in &mut occs {
        o.firmware_id = "only".into();
    }
    let ledger = FirmwareLedger { firmware_id: "only".into(), occurrences: occs, warnings: vec![] };
    assert_eq!(corpus_summary(std::slice::from_ref(&ledger)), CorpusReport::from_ledger(&ledger));
}

#[test]
fn occurrences_csv_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let occs = random_occurrences(&mut rng, 300);
    let mut buf = Vec::new();
    write_occurrences_csv(&mut buf, &occs).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(text.starts_with("firmware_id,component_cpe,cve_id,cwe_id,severity,mem_class,classification_source\n"));
    assert!(!text.contains('\r'));
    assert_eq!(read_occurrences_csv(buf.as_slice()).unwrap(), occs);

    let bad = "firmware_id,component_cpe,cve_id,cwe_id,severity,mem_class,classification_source\nfw,c,x,,severe,spatial-memory-related,rule-table\n";
    assert!(matches!(read_occurrences_csv(bad.as_bytes()), Err(AnalyticsError::Format { line: 2, .. })));
}

#[test]
fn ranking_csvs() {
    let occs = vec![
        occ("fw", "cpe:a", "1", Some("CWE-787"), SeverityBucket::Critical, MemoryClass::Spatial),
        occ("fw", "cpe:a", "2", Some("CWE-22"), SeverityBucket::Low, MemoryClass::NotMemory),
        occ("fw", "cpe:b", "3", Some("CWE-787"), SeverityBucket::High, MemoryClass::Spatial),
    ];
    let mut buf = Vec::new();
    write_top_cwes_csv(&mut buf, &top_cwes(&occs, 10)).unwrap();
    assert_eq!(
        String::from_utf8(buf).unwrap(),
        "rank,cwe_id,count,mem_class\n1,CWE-787,2,spatial-memory-related\n2,CWE-22,1,not-memory-related\n"
    );
    let mut buf = Vec::new();
    write_top_cpes_by_severity_csv(&mut buf, &top_cpes(&occs, 5)).unwrap();
    assert_eq!(
        String::from_utf8(buf).unwrap(),
        "rank,cpe,total,none,low,medium,high,critical\n1,cpe:a,2,0,1,0,0,1\n2,cpe:b,1,0,0,0,1,0\n"
    );
    let mut buf = Vec::new();
    write_top_cpes_by_class_csv(&mut buf, &top_cpes(&occs, 1)).unwrap();
    assert_eq!(
        String::from_utf8(buf).unwrap(),
        "rank,cpe,total,not-memory-related,spatial-memory-related,temporal-memory-related,other-memory-related\n1,cpe:a,2,1,1,0,0\n"
    );
}

fn report_of(occs: &[Occurrence]) -> CorpusReport {
    let mut by_fw: BTreeMap<&str, Vec<Occurrence>> = BTreeMap::new();
    for o in occs {
        by_fw.entry(&o.firmware_id).or_default().push(o.clone());
    }
    let ledgers: Vec<FirmwareLedger> = by_fw
        .into_iter()
        .map(|(id, occurrences)| FirmwareLedger { firmware_id: id.into(), occurrences, warnings: vec![] })
        .collect();
    corpus_summary(&ledgers)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn conservation_on_ten_thousand(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let occs = random_occurrences(&mut rng, 10_000);
        let report = report_of(&occs);
        prop_assert_eq!(report.severity_histogram.values().sum::<u64>(), 10_000);
        prop_assert_eq!(report.memory_histogram.values().sum::<u64>(), 10_000);
        prop_assert_eq!(report.occurrence_total, 10_000);
        let impact = estimate_sbd_impact(&occs).unwrap();
        if impact.after_total > 0 {
            let identity = 1.0 / (1.0 - impact.eliminated_share);
            prop_assert!((impact.reduction_factor.value() - identity).abs() < 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn aggregates_match_naive_rescan(seed in any::<u64>(), n in 1usize..400) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let occs = random_occurrences(&mut rng, n);
        let report = report_of(&occs);

        for b in SeverityBucket::ALL {
            prop_assert_eq!(report.severity_histogram[&b], naive_count(&occs, |o| o.severity == b));
        }
        for c in MemoryClass::ALL {
            prop_assert_eq!(report.memory_histogram[&c], naive_count(&occs, |o| o.mem_class == c));
        }
        let fw: std::collections::BTreeSet<&str> = occs.iter().map(|o| o.firmware_id.as_str()).collect();
        prop_assert_eq!(report.firmware_count, fw.len() as u64);

        let ranked: Vec<(String, u64)> = report.cwes.iter().map(|r| (r.cwe_id.clone(), r.count)).collect();
        prop_assert_eq!(&ranked, &naive_cwe_ranking(&occs));
        prop_assert_eq!(top_cwes(&occs, 3).len(), ranked.len().min(3));

        let mut cpe_counts: HashMap<&str, u64> = HashMap::new();
        for o in &occs {
            *cpe_counts.entry(&o.component_cpe).or_default() += 1;
        }
        for row in &report.cpes {
            prop_assert_eq!(row.count, cpe_counts[row.cpe.as_str()]);
            prop_assert_eq!(row.by_severity.values().sum::<u64>(), row.count);
            for c in MemoryClass::ALL {
                prop_assert_eq!(row.by_class[&c], naive_count(&occs, |o| o.component_cpe == row.cpe && o.mem_class == c));
            }
        }
        prop_assert!(report.cpes.windows(2).all(|w| w[0].count > w[1].count || (w[0].count == w[1].count && w[0].cpe < w[1].cpe)));

        let related = naive_count(&occs, |o| o.mem_class != MemoryClass::NotMemory);
        prop_assert_eq!(memory_share(&occs).unwrap(), related as f64 / n as f64);

        let snapshot = occs.clone();
        let impact = estimate_sbd_impact(&occs).unwrap();
        prop_assert_eq!(&occs, &snapshot);
        for b in SeverityBucket::ALL {
            let after = naive_count(&occs, |o| o.severity == b && o.mem_class == MemoryClass::NotMemory);
            prop_assert_eq!(impact.after[&b], after);
            prop_assert!(impact.after[&b] <= impact.before[&b]);
        }
        prop_assert_eq!(impact.after_total, n as u64 - related);
    }

    #[test]
    fn merge_is_associative_and_commutative(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = report_of(&random_occurrences(&mut rng, 60));
        let b = report_of(&random_occurrences(&mut rng, 60));
        let c = report_of(&random_occurrences(&mut rng, 60));
        prop_assert_eq!(a.merge(&b).merge(&c), a.merge(&b.merge(&c)));
        prop_assert_eq!(a.merge(&b), b.merge(&a));
        let ab = a.merge(&b);
        prop_assert_eq!(ab.occurrence_total, a.occurrence_total + b.occurrence_total);
        prop_assert_eq!(ab.firmware_count, a.firmware_count + b.firmware_count);
    }
}
