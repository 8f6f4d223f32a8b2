//! Lymph-node analysis: per-type MCAV coefficients and classification.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::engine::LymphLog;
use crate::error::{DcaError, Result};
use crate::model::{AntigenType, Context, PresentationRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McavEntry {
    pub antigen_type: AntigenType,
    pub antigen_count: u64,
    pub mature_count: u64,
    pub mcav: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub ticks: u64,
    pub seed: u64,
    pub config_digest: String,
    pub empty_migrations: u64,
    pub overflow: u64,
}

/// Per-type coefficients, sorted by antigen type.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct McavReport {
    pub metadata: RunMetadata,
    pub entries: Vec<McavEntry>,
}

impl McavReport {
    pub fn get(&self, antigen_type: &str) -> Option<&McavEntry> {
        self.entries
            .binary_search_by(|e| e.antigen_type.as_str().cmp(antigen_type))
            .ok()
            .map(|i| &self.entries[i])
    }

    pub fn mcav(&self, antigen_type: &str) -> Option<f64> {
        self.get(antigen_type).map(|e| e.mcav)
    }

    pub fn total_presentations(&self) -> u64 {
        self.entries.iter().map(|e| e.antigen_count).sum()
    }
}

/// Counts presentations and mature presentations per type.
///
/// Types that were never presented do not appear. Metadata other than
/// `empty_migrations` is left for the caller to fill in.
pub fn compute_mcav(log: &LymphLog) -> McavReport {
    let mut report = mcav_from_records(log.records());
    report.metadata.empty_migrations = log.empty_migrations();
    report
}

pub fn mcav_from_records(records: &[PresentationRecord]) -> McavReport {
    let mut counts: BTreeMap<&AntigenType, (u64, u64)> = BTreeMap::new();
    for r in records {
        let (total, mature) = counts.entry(&r.antigen_type).or_default();
        *total += 1;
        if r.context == Context::Anomalous {
            *mature += 1;
        }
    }
    McavReport {
        metadata: RunMetadata::default(),
        entries: counts
            .into_iter()
            .map(|(t, (antigen_count, mature_count))| McavEntry {
                antigen_type: t.clone(),
                antigen_count,
                mature_count,
                mcav: mature_count as f64 / antigen_count as f64,
            })
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Normal,
    Anomalous,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Normal => "normal",
            Label::Anomalous => "anomalous",
        }
    }
}

pub const DEFAULT_ANOMALY_THRESHOLD: f64 = 0.5;

pub fn check_threshold(threshold: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(DcaError::InvalidParameter {
            name: "anomaly_threshold",
            reason: format!("must lie in [0, 1], got {threshold}"),
        });
    }
    Ok(())
}

/// Anomalous iff `mcav >= threshold`.
pub fn classify(report: &McavReport, threshold: f64) -> Result<Vec<(AntigenType, Label)>> {
    check_threshold(threshold)?;
    Ok(report
        .entries
        .iter()
        .map(|e| (e.antigen_type.clone(), label_for(e.mcav, threshold)))
        .collect())
}

fn label_for(mcav: f64, threshold: f64) -> Label {
    if mcav >= threshold {
        Label::Anomalous
    } else {
        Label::Normal
    }
}

/// Row of a written report file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub antigen_type: AntigenType,
    pub antigen_count: u64,
    pub mature_count: u64,
    pub mcav: f64,
    pub label: Label,
}

/// On-disk report: classified rows plus run metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub metadata: RunMetadata,
    pub anomaly_threshold: f64,
    pub antigens: Vec<ReportRow>,
}

pub const CSV_HEADER: &str = "antigen_type,antigen_count,mature_count,mcav,label";

impl ReportDocument {
    pub fn new(report: &McavReport, threshold: f64) -> Result<Self> {
        check_threshold(threshold)?;
        Ok(Self {
            metadata: report.metadata.clone(),
            anomaly_threshold: threshold,
            antigens: report
                .entries
                .iter()
                .map(|e| ReportRow {
                    antigen_type: e.antigen_type.clone(),
                    antigen_count: e.antigen_count,
                    mature_count: e.mature_count,
                    mcav: e.mcav,
                    label: label_for(e.mcav, threshold),
                })
                .collect(),
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| DcaError::Parse {
            line: e.line(),
            reason: e.to_string(),
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.antigens.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        for r in &self.antigens {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.antigen_type,
                r.antigen_count,
                r.mature_count,
                r.mcav,
                r.label.as_str()
            );
        }
        out
    }

    /// Reads the CSV form. Metadata is not part of the CSV and comes back empty.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == CSV_HEADER => {}
            _ => {
                return Err(DcaError::Parse {
                    line: 1,
                    reason: format!("expected header `{CSV_HEADER}`"),
                })
            }
        }
        let mut antigens = Vec::new();
        for (i, line) in lines {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let err = |reason: String| DcaError::Parse {
                line: line_no,
                reason,
            };
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 5 {
                return Err(err(format!("expected 5 fields, got {}", fields.len())));
            }
            let label = match fields[4] {
                "normal" => Label::Normal,
                "anomalous" => Label::Anomalous,
                other => return Err(err(format!("unknown label `{other}`"))),
            };
            antigens.push(ReportRow {
                antigen_type: AntigenType::new(fields[0]).map_err(|e| err(e.to_string()))?,
                antigen_count: fields[1]
                    .parse()
                    .map_err(|_| err(format!("bad antigen_count `{}`", fields[1])))?,
                mature_count: fields[2]
                    .parse()
                    .map_err(|_| err(format!("bad mature_count `{}`", fields[2])))?,
                mcav: fields[3]
                    .parse()
                    .map_err(|_| err(format!("bad mcav `{}`", fields[3])))?,
                label,
            });
        }
        Ok(Self {
            metadata: RunMetadata::default(),
            anomaly_threshold: f64::NAN,
            antigens,
        })
    }

    /// Plain-text table, highest MCAV first.
    pub fn render_table(&self) -> String {
        let mut rows: Vec<&ReportRow> = self.antigens.iter().collect();
        rows.sort_by(|a, b| {
            b.mcav
                .total_cmp(&a.mcav)
                .then_with(|| a.antigen_type.cmp(&b.antigen_type))
        });
        let width = rows
            .iter()
            .map(|r| r.antigen_type.as_str().len())
            .max()
            .unwrap_or(0)
            .max("antigen_type".len());
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<width$}  {:>8}  {:>8}  {:>8}  label",
            "antigen_type", "count", "mature", "mcav"
        );
        for r in rows {
            let _ = writeln!(
                out,
                "{:<width$}  {:>8}  {:>8}  {:>8.4}  {}",
                r.antigen_type.as_str(),
                r.antigen_count,
                r.mature_count,
                r.mcav,
                r.label.as_str()
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(t: &str, ctx: u8) -> PresentationRecord {
        PresentationRecord {
            antigen_type: AntigenType::new(t).unwrap(),
            context: Context::try_from(ctx).unwrap(),
            migration_tick: 0,
            cell_lifespan_ticks: 1,
        }
    }

    #[test]
    fn ratio_of_mature_presentations() {
        let mut records: Vec<_> = (0..7).map(|_| rec("A", 1)).collect();
        records.extend((0..3).map(|_| rec("A", 0)));
        let report = mcav_from_records(&records);
        assert_eq!(report.mcav("A"), Some(0.7));
    }

    #[test]
    fn all_normal_contexts() {
        let report = mcav_from_records(&[rec("A", 0), rec("B", 0), rec("B", 0)]);
        assert!(report.entries.iter().all(|e| e.mcav == 0.0));
    }

    #[test]
    fn mixed_log_hand_count() {
        let log: LymphLog = [
            rec("A", 1),
            rec("B", 0),
            rec("A", 0),
            rec("A", 1),
            rec("B", 0),
        ]
        .into_iter()
        .collect();
        let report = compute_mcav(&log);
        assert_eq!(report.mcav("A"), Some(2.0 / 3.0));
        assert_eq!(report.mcav("B"), Some(0.0));
        assert_eq!(report.get("A").unwrap().antigen_count, 3);
        assert_eq!(report.mcav("C"), None);
    }

    #[test]
    fn empty_log_gives_empty_report() {
        assert!(compute_mcav(&LymphLog::new()).entries.is_empty());
    }

    #[test]
    fn classification_bounds() {
        let report = mcav_from_records(&[rec("hi", 1), rec("lo", 0)]);
        let labels = classify(&report, 0.5).unwrap();
        assert_eq!(labels[0].1, Label::Anomalous);
        assert_eq!(labels[1].1, Label::Normal);
        assert_eq!(label_for(0.7, 0.5), Label::Anomalous);
        assert_eq!(label_for(0.5, 0.5), Label::Anomalous);
        assert_eq!(label_for(0.0, 0.01), Label::Normal);
        assert!(classify(&report, 1.5).is_err());
        assert!(classify(&report, -0.1).is_err());
        assert!(classify(&report, f64::NAN).is_err());
    }

    #[test]
    fn csv_and_json_forms() {
        let mut report = mcav_from_records(&[rec("A", 1), rec("A", 0), rec("B", 0)]);
        report.metadata.seed = 42;
        let doc = ReportDocument::new(&report, 0.5).unwrap();
        assert_eq!(
            doc.to_csv(),
            "antigen_type,antigen_count,mature_count,mcav,label\nA,2,1,0.5,anomalous\nB,1,0,0,normal\n"
        );
        let back = ReportDocument::from_json(&doc.to_json()).unwrap();
        assert_eq!(back, doc);
        let from_csv = ReportDocument::from_csv(&doc.to_csv()).unwrap();
        assert_eq!(from_csv.antigens, doc.antigens);
    }

    #[test]
    fn table_sorted_by_descending_mcav() {
        let report = mcav_from_records(&[rec("a", 0), rec("b", 1), rec("c", 1), rec("c", 0)]);
        let table = ReportDocument::new(&report, 0.5).unwrap().render_table();
        let order: Vec<&str> = table
            .lines()
            .skip(1)
            .map(|l| l.split_whitespace().next().unwrap())
            .collect();
        assert_eq!(order, ["b", "c", "a"]);
    }
}
