//! CPE 2.3 formatted-string binding.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

const PREFIX: &str = "cpe:2.3:";
const FIELD_COUNT: usize = 13;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CpeError {
    #[error("malformed CPE {text:?}: {reason}")]
    Malformed { text: String, reason: String },
    #[error("invalid CPE attribute {0:?}")]
    InvalidAttribute(String),
}

fn malformed(text: &str, reason: impl Into<String>) -> CpeError {
    CpeError::Malformed { text: text.to_owned(), reason: reason.into() }
}

/// A single attribute value: a literal, ANY (`*`) or NA (`-`).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CpeValue {
    Any,
    Na,
    Value(String),
}

impl CpeValue {
    pub fn literal(&self) -> Option<&str> {
        match self {
            CpeValue::Value(v) => Some(v),
            _ => None,
        }
    }

    pub fn is_any(&self) -> bool {
        matches!(self, CpeValue::Any)
    }

    fn from_literal(s: &str) -> Self {
        if s.is_empty() {
            CpeValue::Any
        } else {
            CpeValue::Value(s.to_owned())
        }
    }

    fn write_bound(&self, out: &mut String) {
        match self {
            CpeValue::Any => out.push('*'),
            CpeValue::Na => out.push('-'),
            CpeValue::Value(v) if v == "-" => out.push_str("\\-"),
            CpeValue::Value(v) => {
                for c in v.chars() {
                    if c.is_ascii() && !(c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '-')) {
                        out.push('\\');
                    }
                    out.push(c);
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Part {
    Application,
    OperatingSystem,
    Hardware,
}

impl Part {
    fn code(self) -> char {
        match self {
            Part::Application => 'a',
            Part::OperatingSystem => 'o',
            Part::Hardware => 'h',
        }
    }
}

/// How tolerant [`Cpe23::parse_with`] is of abbreviated input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseMode {
    /// Exactly 13 fields, none empty.
    Strict,
    /// Empty or missing trailing fields read as ANY.
    Lenient,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cpe23 {
    pub part: Part,
    pub vendor: CpeValue,
    pub product: CpeValue,
    pub version: CpeValue,
    pub update: CpeValue,
    pub edition: CpeValue,
    pub language: CpeValue,
    pub sw_edition: CpeValue,
    pub target_sw: CpeValue,
    pub target_hw: CpeValue,
    pub other: CpeValue,
}

impl Cpe23 {
    /// Application CPE with lowercased vendor/product/version and every other
    /// attribute ANY.
    pub fn application(vendor: &str, product: &str, version: &str) -> Result<Self, CpeError> {
        for attr in [vendor, product, version] {
            if attr.chars().any(char::is_control) {
                return Err(CpeError::InvalidAttribute(attr.to_owned()));
            }
        }
        if vendor.trim().is_empty() || product.trim().is_empty() {
            return Err(CpeError::InvalidAttribute(format!("{vendor}:{product}")));
        }
        Ok(Cpe23 {
            part: Part::Application,
            vendor: CpeValue::from_literal(&vendor.to_lowercase()),
            product: CpeValue::from_literal(&product.to_lowercase()),
            version: CpeValue::from_literal(&version.to_lowercase()),
            update: CpeValue::Any,
            edition: CpeValue::Any,
            language: CpeValue::Any,
            sw_edition: CpeValue::Any,
            target_sw: CpeValue::Any,
            target_hw: CpeValue::Any,
            other: CpeValue::Any,
        })
    }

    pub fn parse(text: &str) -> Result<Self, CpeError> {
        Self::parse_with(text, ParseMode::Lenient)
    }

    pub fn parse_strict(text: &str) -> Result<Self, CpeError> {
        Self::parse_with(text, ParseMode::Strict)
    }

    pub fn parse_with(text: &str, mode: ParseMode) -> Result<Self, CpeError> {
        let body = text.strip_prefix(PREFIX).ok_or_else(|| malformed(text, "missing cpe:2.3: prefix"))?;
        let mut fields = split_fields(body).map_err(|reason| malformed(text, reason))?;
        let total = fields.len() + 2;
        if total > FIELD_COUNT {
            return Err(malformed(text, format!("{total} fields")));
        }
        if mode == ParseMode::Strict && total < FIELD_COUNT {
            return Err(malformed(text, format!("{total} fields, expected {FIELD_COUNT}")));
        }
        if fields.len() < 3 {
            return Err(malformed(text, "part, vendor and product are required"));
        }
        fields.resize(FIELD_COUNT - 2, String::new());
        let part = match fields[0].as_str() {
            "a" => Part::Application,
            "o" => Part::OperatingSystem,
            "h" => Part::Hardware,
            other => return Err(malformed(text, format!("unknown part {other:?}"))),
        };
        let mut values = Vec::with_capacity(10);
        for field in &fields[1..] {
            values.push(parse_value(field, mode).map_err(|reason| malformed(text, reason))?);
        }
        let mut it = values.into_iter();
        let mut next = || it.next().expect("ten attribute values");
        Ok(Cpe23 {
            part,
            vendor: next(),
            product: next(),
            version: next(),
            update: next(),
            edition: next(),
            language: next(),
            sw_edition: next(),
            target_sw: next(),
            target_hw: next(),
            other: next(),
        })
    }

    fn attributes(&self) -> [&CpeValue; 10] {
        [
            &self.vendor,
            &self.product,
            &self.version,
            &self.update,
            &self.edition,
            &self.language,
            &self.sw_edition,
            &self.target_sw,
            &self.target_hw,
            &self.other,
        ]
    }

    pub fn vendor_str(&self) -> &str {
        self.vendor.literal().unwrap_or("*")
    }

    pub fn product_str(&self) -> &str {
        self.product.literal().unwrap_or("*")
    }
}

/// Splits on unescaped colons, keeping escape sequences intact.
fn split_fields(body: &str) -> Result<Vec<String>, String> {
    let mut fields = Vec::new();
    let mut cur = String::new();
    let mut chars = body.chars();
    while let Some(c) = chars.next() {
        match c {
            '\\' => {
                let escaped = chars.next().ok_or("dangling escape")?;
                cur.push('\\');
                cur.push(escaped);
            }
            ':' => fields.push(std::mem::take(&mut cur)),
            _ => cur.push(c),
        }
    }
    fields.push(cur);
    Ok(fields)
}

fn parse_value(field: &str, mode: ParseMode) -> Result<CpeValue, String> {
    match field {
        "*" => return Ok(CpeValue::Any),
        "-" => return Ok(CpeValue::Na),
        "" if mode == ParseMode::Lenient => return Ok(CpeValue::Any),
        "" => return Err("empty attribute".into()),
        _ => {}
    }
    let mut out = String::with_capacity(field.len());
    let mut chars = field.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            out.push(chars.next().ok_or("dangling escape")?);
        } else if c.is_control() {
            return Err(format!("control character {c:?}"));
        } else {
            out.push(c);
        }
    }
    Ok(CpeValue::Value(out))
}

impl fmt::Display for Cpe23 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::from(PREFIX);
        out.push(self.part.code());
        for value in self.attributes() {
            out.push(':');
            value.write_bound(&mut out);
        }
        f.write_str(&out)
    }
}

impl FromStr for Cpe23 {
    type Err = CpeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Cpe23::parse(s)
    }
}

impl Serialize for Cpe23 {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Cpe23 {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        Cpe23::parse(&text).map_err(serde::de::Error::custom)
    }
}

pub fn to_cpe(vendor: &str, product: &str, version: &str) -> Result<Cpe23, CpeError> {
    Cpe23::application(vendor, product, version)
}

pub fn format_cpe(cpe: &Cpe23) -> String {
    cpe.to_string()
}

pub fn parse_cpe(text: &str) -> Result<Cpe23, CpeError> {
    Cpe23::parse(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn openssl_canonical_form() {
        let cpe = to_cpe("openssl", "openssl", "0.9.3").unwrap();
        assert_eq!(cpe.to_string(), "cpe:2.3:a:openssl:openssl:0.9.3:*:*:*:*:*:*:*");
    }

    #[test]
    fn busybox_canonical_form() {
        let cpe = to_cpe("BusyBox", "busybox", "1.33.2").unwrap();
        assert_eq!(cpe.to_string(), "cpe:2.3:a:busybox:busybox:1.33.2:*:*:*:*:*:*:*");
    }

    #[test]
    fn colon_in_version_is_escaped() {
        let cpe = to_cpe("x", "y", "1.0:beta").unwrap();
        assert_eq!(cpe.to_string(), "cpe:2.3:a:x:y:1.0\\:beta:*:*:*:*:*:*:*");
        assert_eq!(Cpe23::parse(&cpe.to_string()).unwrap(), cpe);
    }

    #[test]
    fn control_characters_are_rejected() {
        assert!(matches!(to_cpe("a\u{7}", "b", "1"), Err(CpeError::InvalidAttribute(_))));
        assert!(matches!(to_cpe("", "b", "1"), Err(CpeError::InvalidAttribute(_))));
    }

    #[test]
    fn parses_canonical_busybox() {
        let cpe = Cpe23::parse_strict("cpe:2.3:a:busybox:busybox:1.33.2:*:*:*:*:*:*:*").unwrap();
        assert_eq!(cpe.part, Part::Application);
        assert_eq!(cpe.vendor, CpeValue::Value("busybox".into()));
        assert_eq!(cpe.version, CpeValue::Value("1.33.2".into()));
        assert!(cpe.attributes()[3..].iter().all(|v| v.is_any()));
    }

    #[test]
    fn lax_openssl_string() {
        let text = "cpe:2.3:a:openssl:openssl:0.9.3:-::::::";
        let cpe = Cpe23::parse(text).unwrap();
        assert_eq!(cpe.version, CpeValue::Value("0.9.3".into()));
        assert_eq!(cpe.update, CpeValue::Na);
        assert!(cpe.attributes()[4..].iter().all(|v| v.is_any()));
        assert!(Cpe23::parse_strict(text).is_err());
        assert_eq!(cpe.to_string(), "cpe:2.3:a:openssl:openssl:0.9.3:-:*:*:*:*:*:*");
    }

    #[test]
    fn short_forms() {
        let cpe = Cpe23::parse("cpe:2.3:a:busybox:busybox:1.33.2").unwrap();
        assert_eq!(cpe.to_string(), "cpe:2.3:a:busybox:busybox:1.33.2:*:*:*:*:*:*:*");
        assert!(Cpe23::parse_strict("cpe:2.3:a:busybox:busybox:1.33.2").is_err());
    }

    #[test]
    fn malformed_inputs() {
        for bad in [
            "cpe:/a:openssl:openssl:0.9.3",
            "cpe:2.3:x:openssl:openssl:1",
            "cpe:2.3:a:v:p:1:*:*:*:*:*:*:*:extra",
            "cpe:2.3:a:v:p:1\\",
            "cpe:2.3:a",
        ] {
            assert!(Cpe23::parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn literal_dash_round_trips() {
        let mut cpe = to_cpe("v", "p", "1").unwrap();
        cpe.update = CpeValue::Value("-".into());
        let text = cpe.to_string();
        assert!(text.contains(":\\-:"));
        assert_eq!(Cpe23::parse(&text).unwrap(), cpe);
    }
}
