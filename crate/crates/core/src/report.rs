//! Report documents (summary, per-entity and per-language tables,
//! correlations) and run manifests.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io::{self, IoError};
use crate::metrics::{pearson, round2, EvalReport, MetricError};
use crate::query::BenchmarkInstance;
use crate::relation::EntityType;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReportError {
    #[error("report does not match dataset: {0}")]
    DatasetMismatch(String),
}

/// One summary row of headline scores, rounded to two decimals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub em_ctr: f64,
    pub em_atr: f64,
    pub em_dev: f64,
    pub f1_ctr: f64,
    pub f1_atr: f64,
    pub f1_dev: f64,
    pub trc: f64,
    pub trcf: f64,
}

impl SummaryRow {
    fn from_report(r: &EvalReport) -> Self {
        let r = r.rounded();
        Self {
            em_ctr: r.em_ctr,
            em_atr: r.em_atr,
            em_dev: r.dev_em,
            f1_ctr: r.f1_ctr,
            f1_atr: r.f1_atr,
            f1_dev: r.dev_f1,
            trc: r.trc,
            trcf: r.trcf,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityRow {
    pub entity_type: EntityType,
    pub count: usize,
    pub trc: f64,
    pub trcf: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_trc: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_trcf: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageRow {
    pub language: String,
    pub count: usize,
    pub trc: f64,
    pub trcf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Correlation {
    Value(f64),
    NotComputable(String),
}

impl Correlation {
    fn from_result(r: Result<f64, MetricError>) -> Self {
        match r {
            Ok(v) => Correlation::Value(round2(v)),
            Err(MetricError::ZeroVariance) => Correlation::NotComputable("ZeroVariance".into()),
            Err(e) => Correlation::NotComputable(e.to_string()),
        }
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            Correlation::Value(v) => Some(*v),
            Correlation::NotComputable(_) => None,
        }
    }
}

impl std::fmt::Display for Correlation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Correlation::Value(v) => write!(f, "{v:.2}"),
            Correlation::NotComputable(why) => write!(f, "not computable ({why})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correlations {
    /// Entity-type instance counts against candidate consistency.
    pub count_vs_trc: Correlation,
    /// Baseline against candidate consistent factuality, per entity type.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_vs_candidate_trcf: Option<Correlation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub instances: usize,
    pub summary: SummaryRow,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_summary: Option<SummaryRow>,
    pub per_entity: Vec<EntityRow>,
    pub per_language: Vec<LanguageRow>,
    pub correlations: Correlations,
}

fn check_matches(report: &EvalReport, dataset: &[BenchmarkInstance], label: &str) -> Result<(), ReportError> {
    if report.m != dataset.len() {
        return Err(ReportError::DatasetMismatch(format!(
            "{label} covers {} instances, dataset has {}",
            report.m,
            dataset.len()
        )));
    }
    let mut counts: BTreeMap<EntityType, usize> = BTreeMap::new();
    for inst in dataset {
        *counts.entry(inst.entity_type).or_default() += 1;
    }
    for et in EntityType::ALL {
        let expected = counts.get(&et).copied().unwrap_or(0);
        let got = report.per_entity.get(&et).map_or(0, |b| b.count);
        if expected != got {
            return Err(ReportError::DatasetMismatch(format!(
                "{label} has {got} {et} instances, dataset has {expected}"
            )));
        }
    }
    Ok(())
}

/// Assemble the report for `report` over `dataset`, optionally against a
/// baseline report over the same dataset.
pub fn build_report(
    report: &EvalReport,
    dataset: &[BenchmarkInstance],
    baseline: Option<&EvalReport>,
) -> Result<ReportDocument, ReportError> {
    check_matches(report, dataset, "report")?;
    if let Some(b) = baseline {
        check_matches(b, dataset, "comparison report")?;
    }
    let rounded = report.rounded();
    let baseline_rounded = baseline.map(EvalReport::rounded);

    let mut per_entity = Vec::new();
    let (mut counts, mut trcs) = (Vec::new(), Vec::new());
    let (mut cand_trcf, mut base_trcf) = (Vec::new(), Vec::new());
    for et in EntityType::ALL {
        let Some(b) = report.per_entity.get(&et).filter(|b| b.count > 0) else {
            continue;
        };
        counts.push(b.count as f64);
        trcs.push(b.trc);
        let base = baseline.and_then(|r| r.per_entity.get(&et));
        if let Some(base) = base {
            cand_trcf.push(b.trcf);
            base_trcf.push(base.trcf);
        }
        let shown = &rounded.per_entity[&et];
        let base_shown = baseline_rounded.as_ref().and_then(|r| r.per_entity.get(&et));
        per_entity.push(EntityRow {
            entity_type: et,
            count: b.count,
            trc: shown.trc,
            trcf: shown.trcf,
            baseline_trc: base_shown.map(|x| x.trc),
            baseline_trcf: base_shown.map(|x| x.trcf),
        });
    }

    let per_language = rounded
        .per_language
        .iter()
        .map(|(lang, b)| LanguageRow {
            language: lang.clone(),
            count: b.count,
            trc: b.trc,
            trcf: b.trcf,
        })
        .collect();

    Ok(ReportDocument {
        instances: report.m,
        summary: SummaryRow::from_report(report),
        baseline_summary: baseline.map(SummaryRow::from_report),
        per_entity,
        per_language,
        correlations: Correlations {
            count_vs_trc: Correlation::from_result(pearson(&counts, &trcs)),
            baseline_vs_candidate_trcf: baseline
                .map(|_| Correlation::from_result(pearson(&base_trcf, &cand_trcf))),
        },
    })
}

fn summary_line(out: &mut String, label: &str, s: &SummaryRow) {
    let _ = writeln!(
        out,
        "{label:<10} {:>7.2} {:>7.2} {:>7.2} {:>7.2} {:>7.2} {:>7.2} {:>14.2} {:>19.2}",
        s.em_ctr, s.em_atr, s.em_dev, s.f1_ctr, s.f1_atr, s.f1_dev, s.trc, s.trcf
    );
}

impl ReportDocument {
    /// Fixed-width plain-text rendering.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "Summary ({} instances)", self.instances);
        let _ = writeln!(
            out,
            "{:<10} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>14} {:>19}",
            "", "EM", "EM", "EM", "F1", "F1", "F1", "", ""
        );
        let _ = writeln!(
            out,
            "{:<10} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>14} {:>19}",
            "", "CTR", "ATR", "Dev.", "CTR", "ATR", "Dev.", "Temp-Ref-Cons", "Temp-Ref-Cons-Fact"
        );
        summary_line(&mut out, "candidate", &self.summary);
        if let Some(b) = &self.baseline_summary {
            summary_line(&mut out, "baseline", b);
        }

        out.push_str("\nBy entity type\n");
        let with_base = self.baseline_summary.is_some();
        let _ = write!(
            out,
            "{:<16} {:>7} {:>14} {:>19}",
            "Entity type", "Count", "Temp-Ref-Cons", "Temp-Ref-Cons-Fact"
        );
        if with_base {
            let _ = write!(out, " {:>14} {:>19}", "Base TRC", "Base TRCF");
        }
        out.push('\n');
        for row in &self.per_entity {
            let _ = write!(
                out,
                "{:<16} {:>7} {:>14.2} {:>19.2}",
                row.entity_type.as_str(),
                row.count,
                row.trc,
                row.trcf
            );
            if let (Some(t), Some(f)) = (row.baseline_trc, row.baseline_trcf) {
                let _ = write!(out, " {t:>14.2} {f:>19.2}");
            }
            out.push('\n');
        }

        out.push_str("\nBy language\n");
        let _ = writeln!(
            out,
            "{:<16} {:>7} {:>14} {:>19}",
            "Language", "Count", "Temp-Ref-Cons", "Temp-Ref-Cons-Fact"
        );
        for row in &self.per_language {
            let _ = writeln!(
                out,
                "{:<16} {:>7} {:>14.2} {:>19.2}",
                row.language, row.count, row.trc, row.trcf
            );
        }

        out.push_str("\nCorrelations\n");
        let _ = writeln!(out, "count vs Temp-Ref-Cons: {}", self.correlations.count_vs_trc);
        if let Some(c) = &self.correlations.baseline_vs_candidate_trcf {
            let _ = writeln!(out, "baseline vs candidate Temp-Ref-Cons-Fact: {c}");
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

/// Provenance record written beside every CLI output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_digest: String,
    pub input_digests: Vec<InputDigest>,
    pub output_paths: Vec<String>,
    pub seed: u64,
    pub toolkit_version: String,
    pub timestamp: String,
}

impl RunManifest {
    /// `config` is any serializable view of the run's settings; its compact
    /// JSON is digested.
    pub fn new<C: Serialize>(
        command: &str,
        config: &C,
        inputs: &[&Path],
        outputs: &[&Path],
        seed: u64,
    ) -> Result<Self, IoError> {
        let config_json = serde_json::to_string(config)?;
        let input_digests = inputs
            .iter()
            .map(|p| {
                Ok(InputDigest {
                    path: p.display().to_string(),
                    sha256: io::digest_file(p)?,
                })
            })
            .collect::<Result<_, IoError>>()?;
        Ok(Self {
            command: command.to_string(),
            config_digest: io::digest_bytes(config_json),
            input_digests,
            output_paths: outputs.iter().map(|p| p.display().to_string()).collect(),
            seed,
            toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        })
    }

    pub fn write_beside(&self, output: &Path) -> Result<PathBuf, IoError> {
        let path = manifest_path(output);
        io::write_json(&path, self)?;
        Ok(path)
    }
}

/// `<output>.manifest.json`
pub fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}
