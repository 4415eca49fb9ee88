//! Segmented, numeric-aware version comparison.

use std::cmp::Ordering;

#[derive(Debug, PartialEq, Eq)]
enum Segment<'a> {
    /// Digits with leading zeros removed.
    Number(&'a str),
    Text(String),
}

impl<'a> Segment<'a> {
    fn new(raw: &'a str) -> Self {
        if raw.is_empty() {
            Segment::Number("")
        } else if raw.bytes().all(|b| b.is_ascii_digit()) {
            Segment::Number(raw.trim_start_matches('0'))
        } else {
            Segment::Text(raw.to_lowercase())
        }
    }
}

impl Ord for Segment<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Segment::Number(a), Segment::Number(b)) => a.len().cmp(&b.len()).then_with(|| a.cmp(b)),
            (Segment::Number(_), Segment::Text(_)) => Ordering::Less,
            (Segment::Text(_), Segment::Number(_)) => Ordering::Greater,
            (Segment::Text(a), Segment::Text(b)) => a.cmp(b),
        }
    }
}

impl PartialOrd for Segment<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Compares versions segment by segment after splitting on `.` and `-`.
/// All-digit segments compare numerically and sort before alphanumeric
/// ones, which compare lexically (case-insensitive). Missing segments count
/// as zero, so `1.2` equals `1.2.0`.
pub fn compare_versions(a: &str, b: &str) -> Ordering {
    let mut left = a.trim().split(['.', '-']);
    let mut right = b.trim().split(['.', '-']);
    loop {
        match (left.next(), right.next()) {
            (None, None) => return Ordering::Equal,
            (l, r) => {
                let ord = Segment::new(l.unwrap_or("")).cmp(&Segment::new(r.unwrap_or("")));
                if ord != Ordering::Equal {
                    return ord;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use Ordering::*;

    #[test]
    fn numeric_segments() {
        assert_eq!(compare_versions("1.33.2", "1.33.2"), Equal);
        assert_eq!(compare_versions("1.9", "1.10"), Less);
        assert_eq!(compare_versions("1.33.2", "1.35.0"), Less);
        assert_eq!(compare_versions("2.0", "10.0"), Less);
        assert_eq!(compare_versions("01.2", "1.2"), Equal);
    }

    #[test]
    fn missing_segments_are_zero() {
        assert_eq!(compare_versions("1.2", "1.2.0"), Equal);
        assert_eq!(compare_versions("1.2", "1.2.1"), Less);
        assert_eq!(compare_versions("", "0"), Equal);
    }

    #[test]
    fn alpha_after_numeric() {
        assert_eq!(compare_versions("1.0.2", "1.0.2k"), Less);
        assert_eq!(compare_versions("1.0.2k", "1.0.2l"), Less);
        assert_eq!(compare_versions("1.0-rc1", "1.0-RC1"), Equal);
        assert_eq!(compare_versions("1.0.beta", "1.0.5"), Greater);
    }
}
