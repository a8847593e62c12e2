//! Slide cohort description: labels, mutation variants and the manifest CSV.
//!
//! Labels are never read from disk. Every record carries a [`Variant`] and
//! the binary [`Label`] is derived from it, so a manifest cannot contradict
//! itself.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Column names of the manifest header, in order.
pub const MANIFEST_HEADER: [&str; 5] = ["slide_id", "image_uri", "variant", "magnification", "mpp"];

/// Binary prediction target.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Label {
    EgfrPos,
    EgfrNeg,
}

impl Label {
    /// 1.0 for `EgfrPos`, 0.0 otherwise.
    pub fn target(self) -> f64 {
        match self {
            Label::EgfrPos => 1.0,
            Label::EgfrNeg => 0.0,
        }
    }

    pub fn is_positive(self) -> bool {
        self == Label::EgfrPos
    }

    pub fn flipped(self) -> Label {
        match self {
            Label::EgfrPos => Label::EgfrNeg,
            Label::EgfrNeg => Label::EgfrPos,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::EgfrPos => "EGFR_POS",
            Label::EgfrNeg => "EGFR_NEG",
        })
    }
}

/// Driver mutation recorded for a slide.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Variant {
    Egfr,
    Alk,
    Ros1,
    TripleNeg,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Egfr, Variant::Alk, Variant::Ros1, Variant::TripleNeg];

    pub fn label(self) -> Label {
        match self {
            Variant::Egfr => Label::EgfrPos,
            Variant::Alk | Variant::Ros1 | Variant::TripleNeg => Label::EgfrNeg,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Egfr => "EGFR",
            Variant::Alk => "ALK",
            Variant::Ros1 => "ROS1",
            Variant::TripleNeg => "TRIPLE_NEG",
        }
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| format!("unknown variant {s:?}"))
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlideRecord {
    pub slide_id: String,
    pub image_uri: PathBuf,
    pub variant: Variant,
    pub label: Label,
    pub magnification: f64,
    pub microns_per_pixel: f64,
}

impl SlideRecord {
    pub fn new(
        slide_id: impl Into<String>,
        image_uri: impl Into<PathBuf>,
        variant: Variant,
        magnification: f64,
        microns_per_pixel: f64,
    ) -> Self {
        SlideRecord {
            slide_id: slide_id.into(),
            image_uri: image_uri.into(),
            variant,
            label: variant.label(),
            magnification,
            microns_per_pixel,
        }
    }
}

/// Per-class slide counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub pos: usize,
    pub neg: usize,
}

impl ClassCounts {
    pub fn get(&self, label: Label) -> usize {
        match label {
            Label::EgfrPos => self.pos,
            Label::EgfrNeg => self.neg,
        }
    }

    pub fn total(&self) -> usize {
        self.pos + self.neg
    }

    pub fn from_labels(labels: impl IntoIterator<Item = Label>) -> Self {
        labels.into_iter().fold(ClassCounts::default(), |mut acc, l| {
            match l {
                Label::EgfrPos => acc.pos += 1,
                Label::EgfrNeg => acc.neg += 1,
            }
            acc
        })
    }

    pub fn as_map(&self) -> BTreeMap<Label, usize> {
        BTreeMap::from([(Label::EgfrPos, self.pos), (Label::EgfrNeg, self.neg)])
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SlideManifest {
    records: Vec<SlideRecord>,
    class_counts: ClassCounts,
}

impl SlideManifest {
    /// Builds a manifest, rejecting duplicate ids and re-deriving labels.
    pub fn from_records(records: Vec<SlideRecord>) -> Result<Self> {
        let mut seen = HashSet::new();
        for (i, r) in records.iter().enumerate() {
            if r.slide_id.is_empty() {
                return Err(Error::validation(None, format!("record {i} has an empty slide_id")));
            }
            if !seen.insert(r.slide_id.as_str()) {
                return Err(Error::validation(None, format!("duplicate slide_id {:?}", r.slide_id)));
            }
        }
        let records: Vec<SlideRecord> = records
            .into_iter()
            .map(|r| SlideRecord {
                label: r.variant.label(),
                ..r
            })
            .collect();
        let class_counts = ClassCounts::from_labels(records.iter().map(|r| r.label));
        Ok(SlideManifest {
            records,
            class_counts,
        })
    }

    pub fn records(&self) -> &[SlideRecord] {
        &self.records
    }

    pub fn class_counts(&self) -> ClassCounts {
        self.class_counts
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, slide_id: &str) -> Option<&SlideRecord> {
        self.records.iter().find(|r| r.slide_id == slide_id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.records.iter().map(|r| r.slide_id.as_str())
    }

    /// Writes the manifest in the same CSV form accepted by [`parse_manifest`].
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{}", MANIFEST_HEADER.join(","))?;
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{},{}",
                r.slide_id,
                r.image_uri.display(),
                r.variant,
                r.magnification,
                r.microns_per_pixel
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("manifest fields are UTF-8")
    }
}

/// Parses a manifest CSV with the fixed header
/// `slide_id,image_uri,variant,magnification,mpp`.
///
/// Line numbers in errors are 1-based and count the header as line 1.
pub fn parse_manifest<R: Read>(text: R) -> Result<SlideManifest> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::None)
        .from_reader(text);

    let mut rows = reader.records();
    let header = match rows.next() {
        Some(h) => h.map_err(|e| csv_error(1, e))?,
        None => return Err(Error::Parse { line: 1, message: "missing header row".into() }),
    };
    if header.iter().ne(MANIFEST_HEADER.iter().copied()) {
        return Err(Error::Parse {
            line: 1,
            message: format!(
                "expected header {:?}, found {:?}",
                MANIFEST_HEADER.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }

    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for row in rows {
        let row = row.map_err(|e| csv_error(0, e))?;
        let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
        if row.len() != MANIFEST_HEADER.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", MANIFEST_HEADER.len(), row.len()),
            });
        }
        let slide_id = &row[0];
        if slide_id.is_empty() {
            return Err(Error::Parse { line, message: "empty slide_id".into() });
        }
        let variant: Variant = row[2].parse().map_err(|e| Error::validation(Some(line), e))?;
        let magnification = parse_positive(&row[3], "magnification", line)?;
        let mpp = parse_positive(&row[4], "mpp", line)?;
        if !seen.insert(slide_id.to_string()) {
            return Err(Error::validation(Some(line), format!("duplicate slide_id {slide_id:?}")));
        }
        records.push(SlideRecord::new(slide_id, &row[1], variant, magnification, mpp));
    }
    SlideManifest::from_records(records)
}

fn parse_positive(field: &str, name: &str, line: usize) -> Result<f64> {
    let v: f64 = field.parse().map_err(|_| Error::Parse {
        line,
        message: format!("{name} {field:?} is not a decimal number"),
    })?;
    if !(v.is_finite() && v > 0.0) {
        return Err(Error::validation(Some(line), format!("{name} must be positive, got {v}")));
    }
    Ok(v)
}

fn csv_error(fallback_line: usize, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(fallback_line);
    Error::Parse { line, message: e.to_string() }
}

/// Result of [`validate_cohort`]: the filtered manifest plus exclusion ids
/// that did not match any record.
#[derive(Clone, Debug, PartialEq)]
pub struct CohortValidation {
    pub manifest: SlideManifest,
    pub warnings: Vec<String>,
}

/// Removes excluded slides (e.g. multi-mutation cases) from a manifest.
pub fn validate_cohort(manifest: &SlideManifest, exclusion: &[String]) -> CohortValidation {
    let excluded: HashSet<&str> = exclusion.iter().map(String::as_str).collect();
    let warnings = exclusion
        .iter()
        .filter(|id| manifest.get(id).is_none())
        .map(|id| format!("exclusion id {id:?} not present in manifest"))
        .collect();
    let records = manifest
        .records
        .iter()
        .filter(|r| !excluded.contains(r.slide_id.as_str()))
        .cloned()
        .collect();
    let manifest = SlideManifest::from_records(records).expect("subset of a valid manifest is valid");
    CohortValidation { manifest, warnings }
}

/// Reads an exclusion sidecar: one slide id per line, blank lines and `#`
/// comments ignored.
pub fn parse_exclusion_list<R: Read>(mut text: R) -> Result<Vec<String>> {
    let mut s = String::new();
    text.read_to_string(&mut s)?;
    Ok(s.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const HEADER: &str = "slide_id,image_uri,variant,magnification,mpp\n";

    fn table1_csv() -> String {
        let mut s = String::from(HEADER);
        let variants = [(Variant::Egfr, 110), (Variant::Alk, 60), (Variant::Ros1, 20), (Variant::TripleNeg, 10)];
        let mut i = 0;
        for (v, n) in variants {
            for _ in 0..n {
                s.push_str(&format!("S{i:03},slides/S{i:03}.png,{v},40,0.23\n"));
                i += 1;
            }
        }
        s
    }

    #[test]
    fn table1_class_counts() {
        let m = parse_manifest(table1_csv().as_bytes()).unwrap();
        assert_eq!(m.len(), 200);
        assert_eq!(m.class_counts(), ClassCounts { pos: 110, neg: 90 });
        let map = m.class_counts().as_map();
        assert_eq!(map[&Label::EgfrPos], 110);
        assert_eq!(map[&Label::EgfrNeg], 90);
    }

    #[test]
    fn header_only_is_empty() {
        let m = parse_manifest(HEADER.as_bytes()).unwrap();
        assert!(m.is_empty());
        assert_eq!(m.class_counts(), ClassCounts::default());
    }

    #[test]
    fn unknown_variant_names_line() {
        let text = format!("{HEADER}a,a.png,EGFR,40,0.23\nb,b.png,KRAS,40,0.23\n");
        match parse_manifest(text.as_bytes()) {
            Err(Error::Validation { line: Some(3), message }) => assert!(message.contains("KRAS")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_id_rejected() {
        let text = format!("{HEADER}a,a.png,EGFR,40,0.23\na,b.png,ALK,40,0.23\n");
        assert!(matches!(
            parse_manifest(text.as_bytes()),
            Err(Error::Validation { line: Some(3), .. })
        ));
    }

    #[test]
    fn malformed_rows() {
        let short = format!("{HEADER}a,a.png,EGFR,40\n");
        assert!(matches!(parse_manifest(short.as_bytes()), Err(Error::Parse { line: 2, .. })));
        let bad_num = format!("{HEADER}a,a.png,EGFR,forty,0.23\n");
        assert!(matches!(parse_manifest(bad_num.as_bytes()), Err(Error::Parse { line: 2, .. })));
        let extra_col = "slide_id,image_uri,variant,magnification,mpp,age\n";
        assert!(matches!(parse_manifest(extra_col.as_bytes()), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_manifest("".as_bytes()), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn exclusion() {
        let m = parse_manifest(table1_csv().as_bytes()).unwrap();
        let same = validate_cohort(&m, &[]);
        assert_eq!(same.manifest, m);
        assert!(same.warnings.is_empty());

        let unknown = validate_cohort(&m, &["nope".to_string()]);
        assert_eq!(unknown.manifest, m);
        assert_eq!(unknown.warnings.len(), 1);

        let five = SlideManifest::from_records(m.records()[108..113].to_vec()).unwrap();
        assert_eq!(five.class_counts(), ClassCounts { pos: 2, neg: 3 });
        let out = validate_cohort(&five, &["S109".into(), "S111".into()]);
        let ids: Vec<_> = out.manifest.ids().collect();
        assert_eq!(ids, ["S108", "S110", "S112"]);
        assert_eq!(out.manifest.class_counts(), ClassCounts { pos: 1, neg: 2 });
    }

    #[test]
    fn exclusion_sidecar() {
        let ids = parse_exclusion_list("# multi\nS1\n\n  S2 \n".as_bytes()).unwrap();
        assert_eq!(ids, ["S1", "S2"]);
    }

    fn arb_record() -> impl Strategy<Value = SlideRecord> {
        (
            "[A-Za-z0-9_-]{1,12}",
            "[a-z/]{1,10}\\.png",
            prop::sample::select(Variant::ALL.to_vec()),
            1e-3f64..200.0,
            1e-3f64..5.0,
        )
            .prop_map(|(id, uri, v, mag, mpp)| SlideRecord::new(id, uri, v, mag, mpp))
    }

    proptest! {
        #[test]
        fn csv_round_trip(records in prop::collection::vec(arb_record(), 0..20)) {
            let mut seen = HashSet::new();
            let records: Vec<_> = records.into_iter().filter(|r| seen.insert(r.slide_id.clone())).collect();
            let m = SlideManifest::from_records(records).unwrap();
            let back = parse_manifest(m.to_csv_string().as_bytes()).unwrap();
            prop_assert_eq!(&back, &m);
            prop_assert_eq!(back.class_counts().total(), back.len());
            let relabeled = SlideManifest::from_records(back.records().to_vec()).unwrap();
            prop_assert_eq!(relabeled, back);
        }
    }
}
