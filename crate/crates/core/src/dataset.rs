//! NSL-KDD record parsing and the attack taxonomy.
//!
//! Input files are the 43-column comma-separated distribution format
//! (`KDDTrain+.txt`, `KDDTest+.txt`): 41 connection features, the attack
//! label and a difficulty score, no header.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_FEATURES: usize = 41;
pub const NUM_NUMERIC: usize = 38;
/// Feature columns plus attack label and difficulty.
pub const NUM_FIELDS: usize = 43;

/// Column positions (0-based) of the categorical features.
pub const PROTOCOL_COLUMN: usize = 1;
pub const SERVICE_COLUMN: usize = 2;
pub const FLAG_COLUMN: usize = 3;

/// All 41 feature names in file column order.
pub const FEATURE_NAMES: [&str; NUM_FEATURES] = [
    "duration",
    "protocol_type",
    "service",
    "flag",
    "src_bytes",
    "dst_bytes",
    "land",
    "wrong_fragment",
    "urgent",
    "hot",
    "num_failed_logins",
    "logged_in",
    "num_compromised",
    "root_shell",
    "su_attempted",
    "num_root",
    "num_file_creations",
    "num_shells",
    "num_access_files",
    "num_outbound_cmds",
    "is_host_login",
    "is_guest_login",
    "count",
    "srv_count",
    "serror_rate",
    "srv_serror_rate",
    "rerror_rate",
    "srv_rerror_rate",
    "same_srv_rate",
    "diff_srv_rate",
    "srv_diff_host_rate",
    "dst_host_count",
    "dst_host_srv_count",
    "dst_host_same_srv_rate",
    "dst_host_diff_srv_rate",
    "dst_host_same_src_port_rate",
    "dst_host_srv_diff_host_rate",
    "dst_host_serror_rate",
    "dst_host_srv_serror_rate",
    "dst_host_rerror_rate",
    "dst_host_srv_rerror_rate",
];

/// Name of the `i`-th numeric feature (0..38), skipping the categorical columns.
pub fn numeric_feature_name(i: usize) -> &'static str {
    let column = if i == 0 { 0 } else { i + 3 };
    FEATURE_NAMES[column]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackCategory {
    Normal,
    DoS,
    R2L,
    U2R,
    Probe,
}

impl AttackCategory {
    pub const ALL: [AttackCategory; 5] = [
        AttackCategory::Normal,
        AttackCategory::DoS,
        AttackCategory::Probe,
        AttackCategory::R2L,
        AttackCategory::U2R,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AttackCategory::Normal => "Normal",
            AttackCategory::DoS => "DoS",
            AttackCategory::R2L => "R2L",
            AttackCategory::U2R => "U2R",
            AttackCategory::Probe => "Probe",
        }
    }
}

impl fmt::Display for AttackCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

const DOS_ATTACKS: [&str; 6] = ["back", "land", "neptune", "pod", "smurf", "teardrop"];
const R2L_ATTACKS: [&str; 8] = [
    "ftp_write",
    "guess_passwd",
    "imap",
    "multihop",
    "phf",
    "spy",
    "warezclient",
    "warezmaster",
];
const U2R_ATTACKS: [&str; 4] = ["buffer_overflow", "loadmodule", "perl", "rootkit"];
const PROBE_ATTACKS: [&str; 4] = ["ipsweep", "nmap", "portsweep", "satan"];

/// Looks up the category of an attack label. Labels are compared after
/// trimming and lowercasing; labels outside the taxonomy map to `None`.
pub fn categorize(label: &str) -> Option<AttackCategory> {
    let label = label.trim().to_ascii_lowercase();
    let label = label.as_str();
    if label == "normal" {
        Some(AttackCategory::Normal)
    } else if DOS_ATTACKS.contains(&label) {
        Some(AttackCategory::DoS)
    } else if R2L_ATTACKS.contains(&label) {
        Some(AttackCategory::R2L)
    } else if U2R_ATTACKS.contains(&label) {
        Some(AttackCategory::U2R)
    } else if PROBE_ATTACKS.contains(&label) {
        Some(AttackCategory::Probe)
    } else {
        None
    }
}

/// Every attack name the taxonomy knows, excluding "normal".
pub fn known_attacks() -> impl Iterator<Item = &'static str> {
    DOS_ATTACKS
        .iter()
        .chain(R2L_ATTACKS.iter())
        .chain(U2R_ATTACKS.iter())
        .chain(PROBE_ATTACKS.iter())
        .copied()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

/// One connection record.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    /// The 38 numeric features in column order (categorical columns removed).
    pub numeric: [f64; NUM_NUMERIC],
    pub protocol: String,
    pub service: String,
    pub flag: String,
    /// Lowercased, trimmed attack label. Absent only for unlabeled scoring input.
    pub attack_label: Option<String>,
    pub difficulty: Option<i64>,
}

/// Parses one comma-separated line.
///
/// With `require_label` the line must have all 43 fields. Otherwise 41
/// (features only), 42 (features + label) or 43 fields are accepted.
pub fn parse_record(line: &str, require_label: bool) -> std::result::Result<RawRecord, String> {
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    let n = fields.len();
    let ok = if require_label {
        n == NUM_FIELDS
    } else {
        (NUM_FEATURES..=NUM_FIELDS).contains(&n)
    };
    if !ok {
        let expected = if require_label {
            format!("{NUM_FIELDS}")
        } else {
            format!("{NUM_FEATURES}..={NUM_FIELDS}")
        };
        return Err(format!("expected {expected} fields, found {n}"));
    }

    let mut numeric = [0.0; NUM_NUMERIC];
    let mut slot = 0;
    for (column, raw) in fields[..NUM_FEATURES].iter().enumerate() {
        if matches!(column, PROTOCOL_COLUMN | SERVICE_COLUMN | FLAG_COLUMN) {
            if raw.is_empty() {
                return Err(format!("empty categorical value in column {}", column + 1));
            }
            continue;
        }
        let value: f64 = raw.parse().map_err(|_| {
            format!(
                "non-numeric value {raw:?} in column {} ({})",
                column + 1,
                FEATURE_NAMES[column]
            )
        })?;
        if !value.is_finite() {
            return Err(format!("non-finite value in column {}", column + 1));
        }
        numeric[slot] = value;
        slot += 1;
    }
    debug_assert_eq!(slot, NUM_NUMERIC);

    let attack_label = fields
        .get(NUM_FEATURES)
        .map(|s| s.to_ascii_lowercase())
        .filter(|s| !s.is_empty());
    if require_label && attack_label.is_none() {
        return Err("empty attack label".to_string());
    }
    let difficulty = match fields.get(NUM_FEATURES + 1) {
        Some(raw) => Some(
            raw.parse::<i64>()
                .map_err(|_| format!("non-integer difficulty {raw:?}"))?,
        ),
        None => None,
    };

    Ok(RawRecord {
        numeric,
        protocol: fields[PROTOCOL_COLUMN].to_string(),
        service: fields[SERVICE_COLUMN].to_string(),
        flag: fields[FLAG_COLUMN].to_string(),
        attack_label,
        difficulty,
    })
}

/// A parsed split. `categories[i]` is `None` for labels outside the taxonomy
/// (novel test-set attacks).
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub records: Vec<RawRecord>,
    pub categories: Vec<Option<AttackCategory>>,
    pub split: Split,
}

impl LabeledDataset {
    pub fn new(records: Vec<RawRecord>, split: Split) -> Self {
        let categories = records
            .iter()
            .map(|r| r.attack_label.as_deref().and_then(categorize))
            .collect();
        LabeledDataset {
            records,
            categories,
            split,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&RawRecord, Option<AttackCategory>)> {
        self.records.iter().zip(self.categories.iter().copied())
    }

    /// Keeps the records for which `keep` returns true.
    pub fn retain<F>(self, mut keep: F) -> Self
    where
        F: FnMut(&RawRecord, Option<AttackCategory>) -> bool,
    {
        let split = self.split;
        let (records, categories) = self
            .records
            .into_iter()
            .zip(self.categories)
            .filter(|(r, c)| keep(r, *c))
            .unzip();
        LabeledDataset {
            records,
            categories,
            split,
        }
    }

    pub fn unknown_count(&self) -> usize {
        self.categories.iter().filter(|c| c.is_none()).count()
    }
}

pub fn parse_split(path: impl AsRef<Path>, split: Split) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_reader(file, &path.display().to_string(), split)
}

pub fn parse_reader<R: Read>(reader: R, source: &str, split: Split) -> Result<LabeledDataset> {
    let mut records = Vec::new();
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(source, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = parse_record(&line, true).map_err(|message| Error::Parse {
            path: source.to_string(),
            line: line_no,
            message,
        })?;
        records.push(record);
    }
    if records.is_empty() {
        return Err(Error::data(format!("{source}: no records")));
    }
    Ok(LabeledDataset::new(records, split))
}

/// Removes records whose label is outside the taxonomy. Only meaningful on
/// the test split.
pub fn filter_novel_test_attacks(ds: LabeledDataset) -> Result<LabeledDataset> {
    if ds.split != Split::Test {
        return Err(Error::data(
            "novel-attack filtering applies to the test split only",
        ));
    }
    Ok(ds.retain(|_, c| c.is_some()))
}

pub fn drop_category(ds: LabeledDataset, cat: AttackCategory) -> LabeledDataset {
    ds.retain(|_, c| c != Some(cat))
}

/// Per-category record counts. `unknown` holds labels outside the taxonomy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassHistogram {
    pub counts: BTreeMap<AttackCategory, usize>,
    pub unknown: usize,
}

impl ClassHistogram {
    pub fn get(&self, cat: AttackCategory) -> usize {
        self.counts.get(&cat).copied().unwrap_or(0)
    }

    pub fn total(&self) -> usize {
        self.counts.values().sum::<usize>() + self.unknown
    }
}

pub fn class_histogram(ds: &LabeledDataset) -> ClassHistogram {
    let mut counts: BTreeMap<AttackCategory, usize> =
        AttackCategory::ALL.iter().map(|&c| (c, 0)).collect();
    let mut unknown = 0;
    for c in &ds.categories {
        match c {
            Some(c) => *counts.entry(*c).or_default() += 1,
            None => unknown += 1,
        }
    }
    ClassHistogram { counts, unknown }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(protocol: &str, label: &str) -> String {
        let mut fields = vec!["0".to_string(); NUM_FEATURES];
        fields[PROTOCOL_COLUMN] = protocol.into();
        fields[SERVICE_COLUMN] = "http".into();
        fields[FLAG_COLUMN] = "SF".into();
        fields.push(label.into());
        fields.push("21".into());
        fields.join(",")
    }

    #[test]
    fn taxonomy_covers_22_attacks() {
        let names: Vec<_> = known_attacks().collect();
        assert_eq!(names.len(), 22);
        for name in &names {
            assert!(categorize(name).is_some(), "{name}");
        }
        assert_eq!(categorize("normal"), Some(AttackCategory::Normal));
        assert_eq!(categorize(" Neptune "), Some(AttackCategory::DoS));
        assert_eq!(categorize("apache2"), None);
        assert_eq!(categorize("mscan"), None);
    }

    #[test]
    fn three_line_file_categories() {
        let text = [
            line("tcp", "normal"),
            line("tcp", "neptune"),
            line("icmp", "satan"),
        ]
        .join("\n");
        let ds = parse_reader(text.as_bytes(), "mem", Split::Train).unwrap();
        assert_eq!(
            ds.categories,
            vec![
                Some(AttackCategory::Normal),
                Some(AttackCategory::DoS),
                Some(AttackCategory::Probe)
            ]
        );
        assert_eq!(ds.records[0].difficulty, Some(21));
    }

    #[test]
    fn empty_file_is_error() {
        assert!(parse_reader(&b""[..], "mem", Split::Train).is_err());
        assert!(parse_reader(&b"\n\n"[..], "mem", Split::Train).is_err());
    }

    #[test]
    fn malformed_line_names_line_number() {
        let mut bad = line("tcp", "normal");
        bad = bad.replacen("0", "abc", 1);
        let text = format!("{}\n{}\n", line("tcp", "normal"), bad);
        let err = parse_reader(text.as_bytes(), "mem", Split::Train).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }

        let short = "0,tcp,http,SF,normal";
        let err = parse_reader(short.as_bytes(), "mem", Split::Train).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn label_optional_parsing() {
        let full = line("tcp", "normal");
        let fields: Vec<&str> = full.split(',').collect();
        let f41 = fields[..41].join(",");
        let f42 = fields[..42].join(",");
        assert!(parse_record(&f41, true).is_err());
        let r = parse_record(&f41, false).unwrap();
        assert_eq!(r.attack_label, None);
        let r = parse_record(&f42, false).unwrap();
        assert_eq!(r.attack_label.as_deref(), Some("normal"));
        assert_eq!(r.difficulty, None);
        assert!(parse_record(&(full.clone() + ",1"), false).is_err());
    }

    #[test]
    fn numeric_columns_skip_categoricals() {
        let mut fields = vec!["0".to_string(); NUM_FEATURES];
        for (i, f) in fields.iter_mut().enumerate() {
            *f = i.to_string();
        }
        fields[PROTOCOL_COLUMN] = "udp".into();
        fields[SERVICE_COLUMN] = "domain_u".into();
        fields[FLAG_COLUMN] = "SF".into();
        let r = parse_record(&fields.join(","), false).unwrap();
        assert_eq!(r.numeric[0], 0.0);
        assert_eq!(r.numeric[1], 4.0);
        assert_eq!(r.numeric[37], 40.0);
        assert_eq!(numeric_feature_name(0), "duration");
        assert_eq!(numeric_feature_name(1), "src_bytes");
        assert_eq!(numeric_feature_name(37), "dst_host_srv_rerror_rate");
    }

    #[test]
    fn novel_attack_filter() {
        let text = [
            line("tcp", "normal"),
            line("tcp", "apache2"),
            line("udp", "smurf"),
        ]
        .join("\n");
        let test = parse_reader(text.as_bytes(), "mem", Split::Test).unwrap();
        assert_eq!(test.unknown_count(), 1);
        let filtered = filter_novel_test_attacks(test).unwrap();
        assert_eq!(filtered.len(), 2);
        let again = filter_novel_test_attacks(filtered.clone()).unwrap();
        assert_eq!(again.records, filtered.records);

        let train = parse_reader(text.as_bytes(), "mem", Split::Train).unwrap();
        assert!(filter_novel_test_attacks(train).is_err());
    }

    #[test]
    fn drop_and_histogram() {
        let text = [
            line("tcp", "normal"),
            line("tcp", "normal"),
            line("tcp", "back"),
        ]
        .join("\n");
        let ds = parse_reader(text.as_bytes(), "mem", Split::Train).unwrap();
        let h = class_histogram(&ds);
        assert_eq!(h.get(AttackCategory::Normal), 2);
        assert_eq!(h.get(AttackCategory::DoS), 1);
        assert_eq!(h.get(AttackCategory::R2L), 0);
        assert_eq!(h.total(), 3);

        let same = drop_category(ds.clone(), AttackCategory::U2R);
        assert_eq!(same.len(), 3);
        let dropped = drop_category(ds, AttackCategory::Normal);
        assert_eq!(dropped.len(), 1);

        let empty = LabeledDataset::new(vec![], Split::Train);
        let h = class_histogram(&empty);
        assert_eq!(h.total(), 0);
        assert!(AttackCategory::ALL.iter().all(|&c| h.get(c) == 0));
    }
}
