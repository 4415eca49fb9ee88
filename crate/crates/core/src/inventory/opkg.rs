//! opkg/dpkg status database parsing.

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpkgPackage {
    pub package: String,
    pub version: String,
    pub architecture: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OpkgStatus {
    pub packages: Vec<OpkgPackage>,
    /// Stanzas that had fields but lacked `Package:` or `Version:`.
    pub skipped_count: usize,
}

/// Parses RFC-822-like stanzas separated by blank lines. Continuation lines
/// (leading whitespace) are ignored, as are packages whose `Status:` says
/// they are not installed.
pub fn parse_opkg_status(text: &str) -> OpkgStatus {
    let mut out = OpkgStatus::default();
    let mut stanza: Vec<(&str, &str)> = Vec::new();
    for line in text.lines().chain(std::iter::once("")) {
        if line.trim().is_empty() {
            if !stanza.is_empty() {
                finish_stanza(&stanza, &mut out);
                stanza.clear();
            }
            continue;
        }
        if line.starts_with([' ', '\t']) {
            continue;
        }
        match line.split_once(':') {
            Some((key, value)) => stanza.push((key.trim(), value.trim())),
            None => stanza.push(("", line.trim())),
        }
    }
    out
}

fn finish_stanza(fields: &[(&str, &str)], out: &mut OpkgStatus) {
    let field = |name: &str| {
        fields
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| *v)
            .filter(|v| !v.is_empty())
    };
    let (Some(package), Some(version)) = (field("Package"), field("Version")) else {
        out.skipped_count += 1;
        return;
    };
    if let Some(status) = field("Status") {
        if status.contains("not-installed") || status.contains("config-files") {
            return;
        }
    }
    out.packages.push(OpkgPackage {
        package: package.to_owned(),
        version: version.to_owned(),
        architecture: field("Architecture").map(str::to_owned),
    });
}
