//! Experiment report: per-corruption AUC table, score dump, ROC points,
//! score histograms and a JSON summary.
//!
//! Files written into the output directory:
//!
//! - `auc_table.csv`: `label,n_clean,n_out,auc_lr,auc_likelihood,auc_likelihood_flipped,auc_likelihood_best`
//!   where `auc_likelihood` treats low ELBO as out-of-distribution.
//! - `scores.csv`: the score dump the table was computed from.
//! - `roc/<label>.csv`: `fpr,tpr` of the LR curve.
//! - `histograms.csv`: `label,low,high,count` of LR values, shared bin edges.
//! - `summary.json`: configuration fingerprint, table rows and mean LR per label.
//!
//! Every number is printed in shortest round-trip form, so reruns with the
//! same configuration produce byte-identical files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{auc_both_orientations, histogram, roc_auc, EvalError, RocCurve};
use crate::regret::{write_scores_csv, ScoreRecord};

pub const CLEAN_LABEL: &str = "clean";
pub const AUC_TABLE_HEADER: &str =
    "label,n_clean,n_out,auc_lr,auc_likelihood,auc_likelihood_flipped,auc_likelihood_best";
const HISTOGRAM_BINS: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AucRow {
    pub label: String,
    pub n_clean: usize,
    pub n_out: usize,
    pub auc_lr: f64,
    pub auc_likelihood: f64,
    pub auc_likelihood_flipped: f64,
    pub auc_likelihood_best: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelStats {
    pub label: String,
    pub count: usize,
    pub mean_lr: f64,
    pub mean_l_vae: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentReport {
    pub fingerprint: BTreeMap<String, String>,
    pub rows: Vec<AucRow>,
    pub records: Vec<ScoreRecord>,
    pub curves: Vec<(String, RocCurve)>,
    pub stats: Vec<LabelStats>,
}

#[derive(Serialize)]
struct Summary<'a> {
    fingerprint: &'a BTreeMap<String, String>,
    auc: &'a [AucRow],
    labels: &'a [LabelStats],
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> EvalError {
    EvalError::Io { path: path.display().to_string(), msg: e.to_string() }
}

/// Labels in order of first appearance.
fn labels_in_order(records: &[ScoreRecord]) -> Vec<String> {
    let mut seen = Vec::<String>::new();
    for r in records {
        if !seen.contains(&r.label) {
            seen.push(r.label.clone());
        }
    }
    seen
}

impl ExperimentReport {
    /// Builds the report from a score dump. Rows labelled `clean` form the
    /// in-distribution set; every other label is one out-of-distribution group.
    pub fn from_records(records: Vec<ScoreRecord>, fingerprint: BTreeMap<String, String>) -> Result<Self, EvalError> {
        let select = |label: &str, f: fn(&ScoreRecord) -> f64| -> Vec<f64> {
            records.iter().filter(|r| r.label == label).map(f).collect()
        };
        let clean_lr = select(CLEAN_LABEL, |r| r.score.lr);
        let clean_nll = select(CLEAN_LABEL, |r| -r.score.l_vae);
        if clean_lr.is_empty() {
            return Err(EvalError::Empty("no clean rows in score dump"));
        }
        let mut rows = Vec::new();
        let mut curves = Vec::new();
        let mut stats = Vec::new();
        for label in labels_in_order(&records) {
            let lr = select(&label, |r| r.score.lr);
            let l_vae = select(&label, |r| r.score.l_vae);
            stats.push(LabelStats {
                label: label.clone(),
                count: lr.len(),
                mean_lr: lr.iter().sum::<f64>() / lr.len() as f64,
                mean_l_vae: l_vae.iter().sum::<f64>() / l_vae.len() as f64,
            });
            if label == CLEAN_LABEL {
                continue;
            }
            let curve = roc_auc(&clean_lr, &lr)?;
            let nll: Vec<f64> = l_vae.iter().map(|v| -v).collect();
            let (auc_likelihood, auc_likelihood_flipped) = auc_both_orientations(&clean_nll, &nll)?;
            rows.push(AucRow {
                label: label.clone(),
                n_clean: clean_lr.len(),
                n_out: lr.len(),
                auc_lr: curve.auc,
                auc_likelihood,
                auc_likelihood_flipped,
                auc_likelihood_best: auc_likelihood.max(auc_likelihood_flipped),
            });
            curves.push((label, curve));
        }
        Ok(ExperimentReport { fingerprint, rows, records, curves, stats })
    }

    pub fn row(&self, label: &str) -> Option<&AucRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    pub fn auc_table_csv(&self) -> String {
        let mut s = String::from(AUC_TABLE_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                r.label, r.n_clean, r.n_out, r.auc_lr, r.auc_likelihood, r.auc_likelihood_flipped, r.auc_likelihood_best
            );
        }
        s
    }

    fn histograms_csv(&self) -> Result<String, EvalError> {
        let all: Vec<f64> = self.records.iter().map(|r| r.score.lr).collect();
        let edges = histogram(&all, HISTOGRAM_BINS)?;
        let mut s = String::from("label,low,high,count\n");
        for st in &self.stats {
            let mut counts = vec![0usize; edges.len()];
            for r in self.records.iter().filter(|r| r.label == st.label) {
                let idx = edges.iter().position(|b| r.score.lr < b.high).unwrap_or(edges.len() - 1);
                counts[idx] += 1;
            }
            for (b, c) in edges.iter().zip(counts) {
                let _ = writeln!(s, "{},{},{},{}", st.label, b.low, b.high, c);
            }
        }
        Ok(s)
    }

    pub fn write(&self, dir: &Path) -> Result<(), EvalError> {
        let roc_dir = dir.join("roc");
        fs::create_dir_all(&roc_dir).map_err(|e| io_err(&roc_dir, e))?;
        let put = |name: &Path, text: &str| fs::write(name, text).map_err(|e| io_err(name, e));

        put(&dir.join("auc_table.csv"), &self.auc_table_csv())?;
        let mut scores = Vec::new();
        write_scores_csv(&mut scores, &self.records).map_err(|e| io_err(&dir.join("scores.csv"), e))?;
        put(&dir.join("scores.csv"), &String::from_utf8_lossy(&scores))?;
        for (label, curve) in &self.curves {
            let mut s = String::from("fpr,tpr\n");
            for (fpr, tpr) in &curve.points {
                let _ = writeln!(s, "{fpr},{tpr}");
            }
            put(&roc_dir.join(format!("{label}.csv")), &s)?;
        }
        put(&dir.join("histograms.csv"), &self.histograms_csv()?)?;
        let summary = Summary { fingerprint: &self.fingerprint, auc: &self.rows, labels: &self.stats };
        let json = serde_json::to_string_pretty(&summary).map_err(|e| io_err(&dir.join("summary.json"), e))?;
        put(&dir.join("summary.json"), &(json + "\n"))
    }
}

/// Parses an `auc_table.csv` back into rows.
pub fn parse_auc_table(text: &str) -> Result<Vec<AucRow>, EvalError> {
    let bad = |msg: String| EvalError::Io { path: "auc_table.csv".into(), msg };
    let mut lines = text.lines();
    if lines.next() != Some(AUC_TABLE_HEADER) {
        return Err(bad("missing header".into()));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let c: Vec<&str> = l.split(',').collect();
            if c.len() != 7 {
                return Err(bad(format!("expected 7 columns in {l:?}")));
            }
            let f = |s: &str| s.parse::<f64>().map_err(|_| bad(format!("bad number {s:?}")));
            let u = |s: &str| s.parse::<usize>().map_err(|_| bad(format!("bad count {s:?}")));
            Ok(AucRow {
                label: c[0].to_string(),
                n_clean: u(c[1])?,
                n_out: u(c[2])?,
                auc_lr: f(c[3])?,
                auc_likelihood: f(c[4])?,
                auc_likelihood_flipped: f(c[5])?,
                auc_likelihood_best: f(c[6])?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regret::{read_scores_csv, LrScore};

    fn records() -> Vec<ScoreRecord> {
        let mut out = Vec::new();
        for i in 0..20 {
            let lr = i as f64 * 0.1;
            out.push(ScoreRecord {
                sample_id: format!("c{i}"),
                score: LrScore::new(-10.0 - i as f64 * 0.3, -10.0 - i as f64 * 0.3 + lr),
                label: CLEAN_LABEL.into(),
            });
        }
        for (k, label) in ["fog-heavy", "snow-heavy"].iter().enumerate() {
            for i in 0..15 {
                let lr = 0.5 + i as f64 * 0.2 * (k + 1) as f64;
                out.push(ScoreRecord {
                    sample_id: format!("{label}{i}"),
                    score: LrScore::new(-12.0 + i as f64 * 0.1, -12.0 + i as f64 * 0.1 + lr),
                    label: label.to_string(),
                });
            }
        }
        out
    }

    #[test]
    fn table_matches_recomputation_from_written_scores() {
        let dir = tempfile::tempdir().unwrap();
        let rep = ExperimentReport::from_records(records(), BTreeMap::from([("seed".into(), "1".into())])).unwrap();
        rep.write(dir.path()).unwrap();
        let text = fs::read_to_string(dir.path().join("scores.csv")).unwrap();
        let back = read_scores_csv(text.as_bytes()).unwrap();
        let again = ExperimentReport::from_records(back, rep.fingerprint.clone()).unwrap();
        assert_eq!(again.rows, rep.rows);
        let table = parse_auc_table(&fs::read_to_string(dir.path().join("auc_table.csv")).unwrap()).unwrap();
        assert_eq!(table, rep.rows);
        assert_eq!(rep.rows.len(), 2);
        assert!(dir.path().join("roc/snow-heavy.csv").exists());
    }

    #[test]
    fn rerun_is_byte_identical() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        for d in [&a, &b] {
            ExperimentReport::from_records(records(), BTreeMap::new()).unwrap().write(d.path()).unwrap();
        }
        for name in ["auc_table.csv", "scores.csv", "histograms.csv", "summary.json", "roc/fog-heavy.csv"] {
            assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
        }
    }

    #[test]
    fn requires_clean_rows() {
        let r: Vec<_> = records().into_iter().filter(|r| r.label != CLEAN_LABEL).collect();
        assert!(ExperimentReport::from_records(r, BTreeMap::new()).is_err());
    }
}
