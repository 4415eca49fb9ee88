use std::collections::BTreeSet;

use firmscan_core::firmware::tree::TreeBuilder;
use firmscan_core::firmware::{extract_squashfs, ByteString, ContentStore, FsEntry, RootFs};
use firmscan_core::inventory::{
    emit_cyclonedx, identify_components, parse_sbom, validate_sbom_str, Component, Cpe23, CpeValue, EmitOptions,
    EvidenceSource, FirmwareMeta, Part,
};
use firmscan_fixtures::{self as fx, Compression, Node};
use proptest::prelude::*;

fn rootfs(nodes: &[Node]) -> RootFs {
    let mut builder = TreeBuilder::new();
    let mut contents = ContentStore::new();
    for node in nodes {
        let entry = match node {
            Node::Dir { path, mode } => FsEntry::dir(path.as_str().into(), *mode),
            Node::File { path, data, mode } => {
                let digest = contents.insert(data.clone());
                FsEntry::file(path.as_str().into(), *mode, data.len() as u64, digest)
            }
            Node::Symlink { path, target } => FsEntry::symlink(path.as_str().into(), 0o777, target.as_str().into()),
        };
        builder.insert(entry);
    }
    RootFs { tree: builder.finish("test"), contents }
}

fn identify(nodes: &[Node]) -> Vec<Component> {
    let fs = rootfs(nodes);
    identify_components(&fs.tree, &fs.contents)
}

fn find<'a>(components: &'a [Component], product: &str) -> &'a Component {
    components.iter().find(|c| c.product() == product).unwrap_or_else(|| panic!("{product} not found"))
}

#[test]
fn opkg_status_stanza_yields_busybox() {
    let status = "Package: busybox\nVersion: 1.33.2-1\nArchitecture: mips_24kc\nStatus: install user installed\n";
    let components = identify(&[Node::file("usr/lib/opkg/status", status)]);
    assert_eq!(components.len(), 1);
    let bb = &components[0];
    assert_eq!(bb.cpe.to_string(), "cpe:2.3:a:busybox:busybox:1.33.2:*:*:*:*:*:*:*");
    assert_eq!(bb.version_raw, "1.33.2-1");
    assert_eq!(bb.evidence[0].source, EvidenceSource::OpkgStatus);
    assert_eq!(bb.evidence[0].path.to_string(), "usr/lib/opkg/status");
}

#[test]
fn version_string_in_binary_yields_busybox() {
    let binary = fx::busybox_binary();
    // manual search of the fixture for the banner
    let needle = b"BusyBox v1.33.2 (2021-06-30";
    assert!(binary.windows(needle.len()).any(|w| w == needle));

    let components = identify(&[Node::exec("bin/sh-impl", binary)]);
    let bb = find(&components, "busybox");
    assert_eq!(bb.cpe.version, CpeValue::Value("1.33.2".into()));
    assert_eq!(bb.evidence.len(), 1);
    assert_eq!(bb.evidence[0].source, EvidenceSource::VersionString);
    assert!(bb.evidence[0].excerpt.starts_with("BusyBox v1.33.2"));
    assert!(bb.evidence[0].excerpt.chars().count() <= 120);
}

#[test]
fn shared_library_name_yields_openssl() {
    let components = identify(&[Node::file("lib/libcrypto.so.0.9.3", vec![0u8; 64])]);
    assert_eq!(components.len(), 1);
    let ssl = &components[0];
    assert_eq!(ssl.cpe.to_string(), "cpe:2.3:a:openssl:openssl:0.9.3:*:*:*:*:*:*:*");
    assert_eq!(ssl.evidence[0].source, EvidenceSource::SharedLibraryName);
}

#[test]
fn higher_precedence_evidence_wins() {
    let components = identify(&[
        Node::file("usr/lib/opkg/status", "Package: busybox\nVersion: 1.36.1-r2\n"),
        Node::exec("bin/busybox", fx::busybox_binary()),
    ]);
    let bb = find(&components, "busybox");
    assert_eq!(bb.version_raw, "1.36.1-r2");
    assert_eq!(bb.cpe.version, CpeValue::Value("1.36.1".into()));
    let sources: BTreeSet<_> = bb.evidence.iter().map(|e| e.source).collect();
    assert!(sources.contains(&EvidenceSource::OpkgStatus));
    assert!(sources.contains(&EvidenceSource::KnownPath));
    assert!(!sources.contains(&EvidenceSource::VersionString));
}

#[test]
fn empty_tree_has_no_components() {
    assert!(identify(&[]).is_empty());
}

#[test]
fn router_image_sbom_names_busybox_and_openssl() {
    let image = fx::squashfs_image(&fx::router_rootfs(), Compression::Gzip);
    let fs = extract_squashfs(&image).unwrap();
    let components = identify_components(&fs.tree, &fs.contents);
    let products: Vec<_> = components.iter().map(|c| c.product()).collect();
    assert_eq!(products, ["busybox", "openssl"]);

    let meta = FirmwareMeta { name: "router.bin".into(), digest: "0f".repeat(32) };
    let text = emit_cyclonedx(&components, &meta, EmitOptions { reproducible: true }).unwrap();
    validate_sbom_str(&text).unwrap();
    let doc: serde_json::Value = serde_json::from_str(&text).unwrap();
    let cpes: Vec<_> = doc["components"].as_array().unwrap().iter().map(|c| c["cpe"].as_str().unwrap()).collect();
    assert_eq!(
        cpes,
        ["cpe:2.3:a:busybox:busybox:1.33.2:*:*:*:*:*:*:*", "cpe:2.3:a:openssl:openssl:0.9.3:*:*:*:*:*:*:*"]
    );
    assert_eq!(doc["metadata"]["component"]["hashes"][0]["content"], meta.digest);
    assert_eq!(doc["metadata"]["timestamp"], "1970-01-01T00:00:00Z");

    let again = emit_cyclonedx(&components, &meta, EmitOptions { reproducible: true }).unwrap();
    assert_eq!(text, again);

    let parsed = parse_sbom(&text).unwrap();
    assert_eq!(parsed.firmware_digest.as_deref(), Some(meta.digest.as_str()));
    let reparsed: Vec<_> = parsed.components.iter().map(|c| c.cpe.clone().unwrap()).collect();
    assert_eq!(reparsed, components.iter().map(|c| c.cpe.clone()).collect::<Vec<_>>());
}

fn attr() -> impl Strategy<Value = CpeValue> {
    prop_oneof![
        1 => Just(CpeValue::Any),
        1 => Just(CpeValue::Na),
        1 => Just(CpeValue::Value("-".into())),
        6 => "[a-z0-9._\\-:*?!\\\\ ~()éß]{1,12}".prop_map(CpeValue::Value),
    ]
}

fn arb_cpe() -> impl Strategy<Value = Cpe23> {
    let part = prop_oneof![Just(Part::Application), Just(Part::OperatingSystem), Just(Part::Hardware)];
    (part, proptest::collection::vec(attr(), 10)).prop_map(|(part, v)| Cpe23 {
        part,
        vendor: v[0].clone(),
        product: v[1].clone(),
        version: v[2].clone(),
        update: v[3].clone(),
        edition: v[4].clone(),
        language: v[5].clone(),
        sw_edition: v[6].clone(),
        target_sw: v[7].clone(),
        target_hw: v[8].clone(),
        other: v[9].clone(),
    })
}

/// Counts fields the way a reader unaware of CPE semantics would: split on
/// colons not preceded by an odd run of backslashes.
fn field_count(text: &str) -> usize {
    let mut count = 1;
    let mut backslashes = 0;
    for c in text.chars() {
        match c {
            '\\' => backslashes += 1,
            ':' if backslashes % 2 == 0 => {
                count += 1;
                backslashes = 0;
            }
            _ => backslashes = 0,
        }
    }
    count
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn cpe_round_trip(cpe in arb_cpe()) {
        let text = cpe.to_string();
        prop_assert_eq!(field_count(&text), 13);
        prop_assert_eq!(&Cpe23::parse_strict(&text).unwrap(), &cpe);
        prop_assert_eq!(Cpe23::parse(&text).unwrap().to_string(), text);
    }
}

fn evidence_pool() -> Vec<Node> {
    vec![
        Node::exec("bin/busybox", fx::busybox_binary()),
        Node::file("lib/libcrypto.so.0.9.3", vec![1u8; 32]),
        Node::file("lib/libz.so.1.2.11", b"\0inflate 1.2.11 Copyright 1995-2017 Mark Adler\0".to_vec()),
        Node::exec("usr/sbin/dnsmasq", b"\0\0dnsmasq-2.80\0".to_vec()),
        Node::exec("usr/sbin/dropbear", Vec::new()),
        Node::file("usr/lib/opkg/status", "Package: tcpdump\nVersion: 4.9.3-4\n\nPackage: curl\nVersion: 7.66.0-1\n"),
        Node::file("lib/libuClibc-0.9.33.2.so", vec![2u8; 16]),
        Node::file("etc/banner", fx::noise(2048, 9)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn adding_a_file_never_removes_a_component(mask in 0u32..256, extra in 0usize..8) {
        let pool = evidence_pool();
        let base: Vec<Node> = pool.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, n)| n.clone()).collect();
        let mut grown = base.clone();
        if !grown.iter().any(|n| n.path() == pool[extra].path()) {
            grown.push(pool[extra].clone());
        }
        let before: BTreeSet<_> = identify(&base).iter().map(|c| (c.vendor().to_owned(), c.product().to_owned())).collect();
        let after: BTreeSet<_> = identify(&grown).iter().map(|c| (c.vendor().to_owned(), c.product().to_owned())).collect();
        prop_assert!(before.is_subset(&after));
    }

    #[test]
    fn evidence_paths_exist_and_sbom_is_valid(mask in 0u32..256) {
        let pool = evidence_pool();
        let nodes: Vec<Node> = pool.into_iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, n)| n).collect();
        let fs = rootfs(&nodes);
        let components = identify_components(&fs.tree, &fs.contents);
        for c in &components {
            prop_assert!(!c.evidence.is_empty());
            for e in &c.evidence {
                prop_assert!(fs.tree.contains(e.path.as_bytes()), "{}", e.path);
            }
        }
        let products: Vec<_> = components.iter().map(|c| c.product().to_owned()).collect();
        let mut sorted = products.clone();
        sorted.sort();
        prop_assert_eq!(products, sorted);
        let meta = FirmwareMeta { name: "p".into(), digest: "1".repeat(64) };
        let text = emit_cyclonedx(&components, &meta, EmitOptions::default()).unwrap();
        prop_assert!(validate_sbom_str(&text).is_ok());
    }
}

#[test]
fn evidence_path_type_is_tree_path() {
    let components = identify(&[Node::file("lib/libcrypto.so.0.9.3", vec![0u8; 8])]);
    assert_eq!(components[0].evidence[0].path, ByteString::from("lib/libcrypto.so.0.9.3"));
}
