//! Clinical CSV ingestion and cohort filtering.

use std::fmt;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Column names of the clinical CSV, in the order they are written.
pub const CLINICAL_COLUMNS: [&str; 12] = [
    "patient_id",
    "centre_id",
    "age",
    "gcs_motor",
    "pupils",
    "hypoxia",
    "hypotension",
    "marshall",
    "gose",
    "mask_path",
    "pre_scan_surgery",
    "timestamps_complete",
];

/// GOS-E of 4 or below is an unfavourable outcome.
pub const UNFAVOURABLE_MAX_GOSE: u8 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PupilReactivity {
    Both,
    One,
    None,
}

impl PupilReactivity {
    /// Ordinal severity code: both → 0, one → 1, none → 2.
    pub fn code(self) -> u8 {
        match self {
            PupilReactivity::Both => 0,
            PupilReactivity::One => 1,
            PupilReactivity::None => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PupilReactivity::Both => "both",
            PupilReactivity::One => "one",
            PupilReactivity::None => "none",
        }
    }
}

impl FromStr for PupilReactivity {
    type Err = ();

    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        match s.trim().to_ascii_lowercase().as_str() {
            "both" | "0" => Ok(PupilReactivity::Both),
            "one" | "1" => Ok(PupilReactivity::One),
            "none" | "2" => Ok(PupilReactivity::None),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IssueKind {
    Missing,
    Invalid,
}

impl fmt::Display for IssueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IssueKind::Missing => "missing",
            IssueKind::Invalid => "invalid",
        })
    }
}

/// A field that was empty or could not be parsed. The field is left `None`
/// on the record rather than coerced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldIssue {
    pub field: String,
    pub kind: IssueKind,
    pub raw: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PatientRecord {
    pub patient_id: String,
    pub centre_id: Option<String>,
    pub age: Option<f64>,
    pub gcs_motor: Option<u8>,
    pub pupils: Option<PupilReactivity>,
    pub hypoxia: Option<bool>,
    pub hypotension: Option<bool>,
    pub marshall: Option<u8>,
    pub gose: Option<u8>,
    pub mask_path: Option<PathBuf>,
    pub pre_scan_surgery: Option<bool>,
    pub timestamps_complete: Option<bool>,
    pub issues: Vec<FieldIssue>,
}

impl PatientRecord {
    pub fn issue(&self, field: &str) -> Option<IssueKind> {
        self.issues.iter().find(|i| i.field == field).map(|i| i.kind)
    }

    /// `None` while GOS-E is missing or invalid.
    pub fn unfavourable(&self) -> Option<bool> {
        self.gose.map(label_unfavourable)
    }

    /// Clinical block in schema order: age, gcs_motor, pupils, hypoxia, hypotension.
    pub fn clinical_values(&self) -> Option<[f64; 5]> {
        Some([
            self.age?,
            f64::from(self.gcs_motor?),
            f64::from(self.pupils?.code()),
            f64::from(u8::from(self.hypoxia?)),
            f64::from(u8::from(self.hypotension?)),
        ])
    }
}

pub fn label_unfavourable(gose: u8) -> bool {
    gose <= UNFAVOURABLE_MAX_GOSE
}

fn parse_bool(s: &str) -> Option<bool> {
    match s.to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "y" => Some(true),
        "0" | "false" | "no" | "n" => Some(false),
        _ => None,
    }
}

fn parse_int_in(s: &str, lo: u8, hi: u8) -> Option<u8> {
    s.parse::<u8>().ok().filter(|v| (lo..=hi).contains(v))
}

fn parse_age(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|v| v.is_finite() && *v >= 0.0)
}

struct RowParser<'a> {
    issues: Vec<FieldIssue>,
    row: &'a csv::StringRecord,
}

impl RowParser<'_> {
    fn field<T>(&mut self, name: &str, col: usize, parse: impl Fn(&str) -> Option<T>) -> Option<T> {
        let raw = self.row.get(col).unwrap_or("").trim();
        if raw.is_empty() {
            self.issues.push(FieldIssue { field: name.into(), kind: IssueKind::Missing, raw: String::new() });
            return None;
        }
        let v = parse(raw);
        if v.is_none() {
            self.issues.push(FieldIssue { field: name.into(), kind: IssueKind::Invalid, raw: raw.into() });
        }
        v
    }
}

/// Parse clinical records. Column order is free; every column in
/// [`CLINICAL_COLUMNS`] must be present.
pub fn read_clinical_csv<R: Read>(reader: R) -> Result<Vec<PatientRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut cols = [0usize; CLINICAL_COLUMNS.len()];
    for (slot, name) in cols.iter_mut().zip(CLINICAL_COLUMNS) {
        *slot = headers.iter().position(|h| h == name).ok_or_else(|| Error::MissingColumn(name.to_string()))?;
    }
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for (n, row) in rdr.records().enumerate() {
        let row = row?;
        let patient_id = row.get(cols[0]).unwrap_or("").trim().to_string();
        if patient_id.is_empty() {
            return Err(Error::MissingField { patient: format!("data row {}", n + 1), field: "patient_id".into() });
        }
        if !seen.insert(patient_id.clone()) {
            return Err(Error::DuplicatePatient(patient_id));
        }
        let mut p = RowParser { issues: Vec::new(), row: &row };
        let record = PatientRecord {
            centre_id: p.field("centre_id", cols[1], |s| Some(s.to_string())),
            age: p.field("age", cols[2], parse_age),
            gcs_motor: p.field("gcs_motor", cols[3], |s| parse_int_in(s, 1, 6)),
            pupils: p.field("pupils", cols[4], |s| s.parse().ok()),
            hypoxia: p.field("hypoxia", cols[5], parse_bool),
            hypotension: p.field("hypotension", cols[6], parse_bool),
            marshall: p.field("marshall", cols[7], |s| parse_int_in(s, 1, 6)),
            gose: p.field("gose", cols[8], |s| parse_int_in(s, 1, 8)),
            mask_path: p.field("mask_path", cols[9], |s| Some(PathBuf::from(s))),
            pre_scan_surgery: p.field("pre_scan_surgery", cols[10], parse_bool),
            timestamps_complete: p.field("timestamps_complete", cols[11], parse_bool),
            issues: p.issues,
            patient_id,
        };
        out.push(record);
    }
    Ok(out)
}

pub fn load_clinical_csv(path: impl AsRef<Path>) -> Result<Vec<PatientRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(Error::at(path))?;
    read_clinical_csv(std::io::BufReader::new(file))
}

/// Write records back out in the canonical column order. Missing and invalid
/// fields are written empty.
pub fn write_clinical_csv<W: Write>(records: &[PatientRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CLINICAL_COLUMNS)?;
    let b = |v: Option<bool>| v.map_or(String::new(), |v| u8::from(v).to_string());
    let n = |v: Option<u8>| v.map_or(String::new(), |v| v.to_string());
    for r in records {
        w.write_record([
            r.patient_id.clone(),
            r.centre_id.clone().unwrap_or_default(),
            r.age.map_or(String::new(), |v| v.to_string()),
            n(r.gcs_motor),
            r.pupils.map_or(String::new(), |p| p.name().to_string()),
            b(r.hypoxia),
            b(r.hypotension),
            n(r.marshall),
            n(r.gose),
            r.mask_path.as_ref().map_or(String::new(), |p| p.display().to_string()),
            b(r.pre_scan_surgery),
            b(r.timestamps_complete),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Why a patient left the cohort.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exclusion {
    pub patient_id: String,
    pub reason: String,
}

/// Reason codes in the order the filter applies them. `missing_*` and
/// `invalid_*` codes for the clinical fields and Marshall score follow the
/// same pattern; `mask_unreadable` is raised later, during extraction.
pub const EXCLUSION_STAGES: [&str; 17] = [
    "missing_timestamps",
    "missing_gose",
    "invalid_gose",
    "missing_scan",
    "missing_surgery_status",
    "surgery_before_scan",
    "missing_centre_id",
    "missing_age",
    "invalid_age",
    "missing_gcs_motor",
    "invalid_gcs_motor",
    "missing_pupils",
    "invalid_pupils",
    "missing_hypoxia",
    "missing_hypotension",
    "missing_marshall",
    "invalid_marshall",
];

pub const MASK_UNREADABLE: &str = "mask_unreadable";

/// First reason (in flow-chart order) a record cannot enter modelling.
pub fn exclusion_reason(r: &PatientRecord) -> Option<String> {
    if r.timestamps_complete != Some(true) {
        return Some("missing_timestamps".into());
    }
    let field = |name: &str, present: bool| -> Option<String> {
        if present {
            None
        } else {
            Some(format!("{}_{name}", r.issue(name).unwrap_or(IssueKind::Missing)))
        }
    };
    if let Some(reason) = field("gose", r.gose.is_some()) {
        return Some(reason);
    }
    if r.mask_path.is_none() {
        return Some("missing_scan".into());
    }
    match r.pre_scan_surgery {
        None => return Some("missing_surgery_status".into()),
        Some(true) => return Some("surgery_before_scan".into()),
        Some(false) => {}
    }
    field("centre_id", r.centre_id.is_some())
        .or_else(|| field("age", r.age.is_some()))
        .or_else(|| field("gcs_motor", r.gcs_motor.is_some()))
        .or_else(|| field("pupils", r.pupils.is_some()))
        .or_else(|| field("hypoxia", r.hypoxia.is_some()))
        .or_else(|| field("hypotension", r.hypotension.is_some()))
        .or_else(|| field("marshall", r.marshall.is_some()))
}

/// Split records into those eligible for modelling and a log of the rest.
pub fn filter_cohort(records: Vec<PatientRecord>) -> (Vec<PatientRecord>, Vec<Exclusion>) {
    let mut kept = Vec::new();
    let mut log = Vec::new();
    for r in records {
        match exclusion_reason(&r) {
            Some(reason) => log.push(Exclusion { patient_id: r.patient_id, reason }),
            None => kept.push(r),
        }
    }
    (kept, log)
}

/// Exclusion counts per reason, in flow-chart order, skipping zeros.
pub fn exclusion_counts(log: &[Exclusion]) -> Vec<(String, usize)> {
    let mut order: Vec<&str> = EXCLUSION_STAGES.to_vec();
    order.push(MASK_UNREADABLE);
    for e in log {
        if !order.contains(&e.reason.as_str()) {
            order.push(&e.reason);
        }
    }
    order
        .into_iter()
        .map(|r| (r.to_string(), log.iter().filter(|e| e.reason == r).count()))
        .filter(|(_, n)| *n > 0)
        .collect()
}

pub fn write_exclusion_log<W: Write>(log: &[Exclusion], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["patient_id", "reason"])?;
    for e in log {
        w.write_record([&e.patient_id, &e.reason])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str =
        "patient_id,centre_id,age,gcs_motor,pupils,hypoxia,hypotension,marshall,gose,mask_path,pre_scan_surgery,timestamps_complete\n";

    fn parse(rows: &str) -> Result<Vec<PatientRecord>> {
        read_clinical_csv(format!("{HEADER}{rows}").as_bytes())
    }

    #[test]
    fn valid_row() {
        let r = parse("P1,C1,56.6,5,both,0,1,3,4,m/P1.nii.gz,0,1\n").unwrap().remove(0);
        assert_eq!(r.age, Some(56.6));
        assert_eq!(r.gcs_motor, Some(5));
        assert_eq!(r.pupils, Some(PupilReactivity::Both));
        assert_eq!((r.hypoxia, r.hypotension), (Some(false), Some(true)));
        assert_eq!(r.marshall, Some(3));
        assert_eq!(r.unfavourable(), Some(true));
        assert!(r.issues.is_empty());
        assert_eq!(r.clinical_values(), Some([56.6, 5.0, 0.0, 0.0, 1.0]));
        assert_eq!(exclusion_reason(&r), None);
    }

    #[test]
    fn out_of_range_is_flagged_not_coerced() {
        let r = parse("P1,C1,56.6,7,sideways,2,yes,0,9,m.nii,no,1\n").unwrap().remove(0);
        assert_eq!(r.gose, None);
        assert_eq!(r.issue("gose"), Some(IssueKind::Invalid));
        assert_eq!(r.issue("gcs_motor"), Some(IssueKind::Invalid));
        assert_eq!(r.issue("pupils"), Some(IssueKind::Invalid));
        assert_eq!(r.issue("hypoxia"), Some(IssueKind::Invalid));
        assert_eq!(r.hypotension, Some(true));
        assert_eq!(r.issue("marshall"), Some(IssueKind::Invalid));
        assert_eq!(exclusion_reason(&r).as_deref(), Some("invalid_gose"));
    }

    #[test]
    fn header_only_and_missing_columns() {
        assert!(parse("").unwrap().is_empty());
        let err = read_clinical_csv("patient_id,centre_id\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::MissingColumn(c) if c == "age"));
        let dup = parse("P1,C1,1,1,one,0,0,1,1,a,0,1\nP1,C1,1,1,one,0,0,1,1,a,0,1\n");
        assert!(matches!(dup, Err(Error::DuplicatePatient(p)) if p == "P1"));
    }

    #[test]
    fn gose_rule() {
        assert!(label_unfavourable(4));
        assert!(!label_unfavourable(5));
        assert!(label_unfavourable(1));
        for g in 1..8 {
            assert!(label_unfavourable(g) >= label_unfavourable(g + 1));
        }
    }

    #[test]
    fn reasons_follow_flow_chart_order() {
        let rows = "\
A,C1,40,6,both,0,0,,6,a.nii,0,1
B,C1,40,6,both,0,0,2,6,b.nii,1,1
C,C1,40,6,both,0,0,2,6,,0,1
D,C1,40,6,both,0,0,2,,d.nii,0,0
E,C1,,6,both,0,0,2,6,e.nii,0,1
F,C1,40,6,both,0,0,2,6,f.nii,0,1
";
        let (kept, log) = filter_cohort(parse(rows).unwrap());
        let reasons: Vec<_> = log.iter().map(|e| (e.patient_id.as_str(), e.reason.as_str())).collect();
        assert_eq!(
            reasons,
            [
                ("A", "missing_marshall"),
                ("B", "surgery_before_scan"),
                ("C", "missing_scan"),
                ("D", "missing_timestamps"),
                ("E", "missing_age")
            ]
        );
        assert_eq!(kept.len(), 1);
        let (again, none) = filter_cohort(kept.clone());
        assert_eq!(again, kept);
        assert!(none.is_empty());
        for (reason, _) in exclusion_counts(&log) {
            assert!(EXCLUSION_STAGES.contains(&reason.as_str()));
        }
    }

    #[test]
    fn csv_round_trip() {
        let records = parse("P1,C1,56.6,5,none,0,1,3,4,m/P1.nii.gz,0,1\nP2,C2,,1,one,1,0,6,8,,1,0\n").unwrap();
        let mut buf = Vec::new();
        write_clinical_csv(&records, &mut buf).unwrap();
        let back = read_clinical_csv(buf.as_slice()).unwrap();
        assert_eq!(back, records);
    }
}
