//! Aggregate per-case metrics into per-method summaries (overall and
//! sub-cortical), run the statistical comparison, and render text / CSV /
//! JSON reports.
//!
//! Aggregation rules: per case, the overall value of a metric is the mean
//! over the foreground classes where it is defined; the sub-cortical value
//! is the DGM class entry. Method summaries average over cases. Undefined
//! class values are excluded rather than imputed, and an infinite HD95
//! propagates into the summary and is flagged.

use crate::metrics::MetricsRecord;
use crate::stats::{
    dunn_posthoc, kruskal_wallis, Adjustment, DunnResult, GroupedScores, KruskalResult,
    ScoreGroup, StatsError,
};
use crate::volume::TissueClass;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("no records to aggregate")]
    NoRecords,
    #[error("inconsistent case sets: {0}")]
    InconsistentCases(String),
    #[error("malformed record (case '{case}', method '{method}'): {reason}")]
    InvalidRecord {
        case: String,
        method: String,
        reason: String,
    },
    #[error("hd95 scores contain infinite values; inspect empty-mask cases before comparing")]
    InfiniteValues,
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Serialize an f64 that may be infinite (JSON has no native infinity, so
/// infinities travel as the strings "inf" / "-inf").
pub mod serde_inf {
    use serde::de::{self, Visitor};
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    struct InfVisitor;

    impl Visitor<'_> for InfVisitor {
        type Value = f64;

        fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
            f.write_str("a number or the string \"inf\"/\"-inf\"")
        }

        fn visit_f64<E: de::Error>(self, v: f64) -> Result<f64, E> {
            Ok(v)
        }

        fn visit_i64<E: de::Error>(self, v: i64) -> Result<f64, E> {
            Ok(v as f64)
        }

        fn visit_u64<E: de::Error>(self, v: u64) -> Result<f64, E> {
            Ok(v as f64)
        }

        fn visit_str<E: de::Error>(self, v: &str) -> Result<f64, E> {
            match v {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(E::custom(format!("unexpected value '{other}'"))),
            }
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        d.deserialize_any(InfVisitor)
    }
}

/// Same as [`serde_inf`] for optional values; `None` travels as null.
pub mod serde_inf_opt {
    use serde::de::{self, Visitor};
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            None => s.serialize_none(),
            Some(v) if v.is_finite() => s.serialize_some(v),
            Some(v) if *v > 0.0 => s.serialize_some("inf"),
            Some(_) => s.serialize_some("-inf"),
        }
    }

    struct OptInfVisitor;

    impl<'de> Visitor<'de> for OptInfVisitor {
        type Value = Option<f64>;

        fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
            f.write_str("null, a number, or the string \"inf\"/\"-inf\"")
        }

        fn visit_none<E: de::Error>(self) -> Result<Self::Value, E> {
            Ok(None)
        }

        fn visit_unit<E: de::Error>(self) -> Result<Self::Value, E> {
            Ok(None)
        }

        fn visit_some<D: Deserializer<'de>>(self, d: D) -> Result<Self::Value, D::Error> {
            super::serde_inf::deserialize(d).map(Some)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        d.deserialize_option(OptInfVisitor)
    }
}

/// Per-method summary row (overall and sub-cortical columns).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub n_cases: usize,
    pub dsc_overall: f64,
    pub dsc_subcortical: f64,
    pub iou_overall: f64,
    pub iou_subcortical: f64,
    #[serde(with = "serde_inf")]
    pub hd95_overall: f64,
    #[serde(with = "serde_inf")]
    pub hd95_subcortical: f64,
    /// True when any contributing HD95 value was infinite.
    pub hd95_infinite: bool,
}

/// Metric selected for a statistical comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Dsc,
    Iou,
    Hd95,
}

impl MetricKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::Dsc => "dsc",
            MetricKind::Iou => "iou",
            MetricKind::Hd95 => "hd95",
        }
    }
}

impl std::str::FromStr for MetricKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "dsc" => Ok(MetricKind::Dsc),
            "iou" => Ok(MetricKind::Iou),
            "hd95" => Ok(MetricKind::Hd95),
            other => Err(format!("unknown metric '{other}' (expected dsc|iou|hd95)")),
        }
    }
}

/// Statistical comparison of the methods on one metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub metric: String,
    pub kruskal: KruskalResult,
    pub dunn: DunnResult,
}

/// Decisions that shaped the numbers, carried in machine-readable output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub sample_unit: String,
    pub subcortical_class: String,
    pub adjustment: Option<String>,
}

impl ReportMetadata {
    fn new(adjustment: Option<String>) -> Self {
        Self {
            sample_unit: "per-case overall mean".to_string(),
            subcortical_class: TissueClass::Dgm.name().to_string(),
            adjustment,
        }
    }
}

/// Full JSON report payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub metadata: ReportMetadata,
    pub summaries: Vec<MethodSummary>,
    pub comparisons: Vec<Comparison>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Csv,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "text" => Ok(ReportFormat::Text),
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(format!("unknown format '{other}' (expected text|csv|json)")),
        }
    }
}

struct PerCaseValues {
    overall: Option<f64>,
    subcortical: Option<f64>,
}

fn validate_record(record: &MetricsRecord) -> Result<(), ReportError> {
    let invalid = |reason: String| ReportError::InvalidRecord {
        case: record.case_id.clone(),
        method: record.method.clone(),
        reason,
    };
    if record.case_id.is_empty() || record.method.is_empty() {
        return Err(invalid("empty case_id or method".to_string()));
    }
    let mut seen = BTreeSet::new();
    for cm in &record.per_class {
        if cm.class == TissueClass::Background {
            return Err(invalid("background has no metrics".to_string()));
        }
        if !seen.insert(cm.class) {
            return Err(invalid(format!("duplicate class {}", cm.class)));
        }
        if cm.dsc.is_some() != cm.iou.is_some() {
            return Err(invalid(format!(
                "class {}: dsc and iou must be defined together",
                cm.class
            )));
        }
    }
    if seen.len() != TissueClass::FOREGROUND.len() {
        return Err(invalid(format!(
            "expected one entry per foreground class, found {}",
            seen.len()
        )));
    }
    Ok(())
}

/// Mean over the defined subset of per-class values plus the DGM entry.
fn per_case_values(record: &MetricsRecord, metric: MetricKind) -> PerCaseValues {
    let pick = |cm: &crate::metrics::ClassMetrics| match metric {
        MetricKind::Dsc => cm.dsc,
        MetricKind::Iou => cm.iou,
        MetricKind::Hd95 => cm.hd95,
    };
    let defined: Vec<f64> = record.per_class.iter().filter_map(pick).collect();
    let overall = if defined.is_empty() {
        None
    } else {
        Some(defined.iter().sum::<f64>() / defined.len() as f64)
    };
    let subcortical = record
        .per_class
        .iter()
        .find(|cm| cm.class == TissueClass::Dgm)
        .and_then(pick);
    PerCaseValues {
        overall,
        subcortical,
    }
}

fn group_by_method(
    records: &[MetricsRecord],
) -> Result<BTreeMap<&str, Vec<&MetricsRecord>>, ReportError> {
    if records.is_empty() {
        return Err(ReportError::NoRecords);
    }
    let mut by_method: BTreeMap<&str, Vec<&MetricsRecord>> = BTreeMap::new();
    for record in records {
        validate_record(record)?;
        by_method
            .entry(record.method.as_str())
            .or_default()
            .push(record);
    }
    // Every method must carry exactly the same case set.
    let mut case_sets: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for (&method, recs) in &by_method {
        let set: BTreeSet<&str> = recs.iter().map(|r| r.case_id.as_str()).collect();
        if set.len() != recs.len() {
            return Err(ReportError::InconsistentCases(format!(
                "method '{method}' has duplicate case ids"
            )));
        }
        case_sets.insert(method, set);
    }
    let reference = case_sets.values().next().expect("non-empty").clone();
    for (method, set) in &case_sets {
        if *set != reference {
            let missing: Vec<&str> = reference.difference(set).copied().collect();
            let extra: Vec<&str> = set.difference(&reference).copied().collect();
            return Err(ReportError::InconsistentCases(format!(
                "method '{method}' differs from '{}': missing {missing:?}, extra {extra:?}",
                case_sets.keys().next().expect("non-empty")
            )));
        }
    }
    Ok(by_method)
}

fn mean_of(values: impl Iterator<Item = f64>) -> (f64, usize) {
    let collected: Vec<f64> = values.collect();
    if collected.is_empty() {
        (f64::NAN, 0)
    } else {
        (
            collected.iter().sum::<f64>() / collected.len() as f64,
            collected.len(),
        )
    }
}

/// Aggregate per-case records into per-method summaries, sorted by
/// descending overall DSC.
pub fn aggregate(records: &[MetricsRecord]) -> Result<Vec<MethodSummary>, ReportError> {
    let by_method = group_by_method(records)?;
    let mut summaries = Vec::with_capacity(by_method.len());
    for (method, recs) in &by_method {
        let values = |metric: MetricKind| -> (f64, f64, bool) {
            let per_case: Vec<PerCaseValues> =
                recs.iter().map(|r| per_case_values(r, metric)).collect();
            let (overall, _) = mean_of(per_case.iter().filter_map(|v| v.overall));
            let (sub, _) = mean_of(per_case.iter().filter_map(|v| v.subcortical));
            let infinite = per_case.iter().any(|v| {
                v.overall.map(f64::is_infinite).unwrap_or(false)
                    || v.subcortical.map(f64::is_infinite).unwrap_or(false)
            });
            (overall, sub, infinite)
        };
        let (dsc_overall, dsc_subcortical, _) = values(MetricKind::Dsc);
        let (iou_overall, iou_subcortical, _) = values(MetricKind::Iou);
        let (hd95_overall, hd95_subcortical, hd95_infinite) = values(MetricKind::Hd95);
        summaries.push(MethodSummary {
            method: method.to_string(),
            n_cases: recs.len(),
            dsc_overall,
            dsc_subcortical,
            iou_overall,
            iou_subcortical,
            hd95_overall,
            hd95_subcortical,
            hd95_infinite,
        });
    }
    summaries.sort_by(|a, b| {
        b.dsc_overall
            .partial_cmp(&a.dsc_overall)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.method.cmp(&b.method))
    });
    Ok(summaries)
}

/// Build one score per case per method (the per-case overall mean of the
/// chosen metric) and run Kruskal-Wallis plus Dunn's post-hoc test.
pub fn compare_methods(
    records: &[MetricsRecord],
    metric: MetricKind,
    adjustment: Adjustment,
) -> Result<Comparison, ReportError> {
    let by_method = group_by_method(records)?;
    let mut groups = Vec::with_capacity(by_method.len());
    for (method, recs) in &by_method {
        // Stable case order inside each group.
        let mut recs: Vec<&&MetricsRecord> = recs.iter().collect();
        recs.sort_by_key(|r| r.case_id.as_str());
        let mut values = Vec::with_capacity(recs.len());
        for r in recs {
            if let Some(v) = per_case_values(r, metric).overall {
                if v.is_infinite() {
                    return Err(ReportError::InfiniteValues);
                }
                values.push(v);
            }
        }
        groups.push(ScoreGroup {
            method: method.to_string(),
            values,
        });
    }
    let scores = GroupedScores {
        metric_name: metric.as_str().to_string(),
        groups,
    };
    let kruskal = kruskal_wallis(&scores)?;
    let dunn = dunn_posthoc(&scores, adjustment)?;
    Ok(Comparison {
        metric: metric.as_str().to_string(),
        kruskal,
        dunn,
    })
}

fn fmt_cell(v: f64) -> String {
    if v.is_nan() {
        "n/a".to_string()
    } else {
        format!("{v:.4}")
    }
}

fn render_text(summaries: &[MethodSummary], comparisons: &[Comparison]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<20}{:>9}{:>10}{:>9}{:>10}{:>9}{:>10}\n",
        "Model", "DSC", "", "IoU", "", "HD95", ""
    ));
    out.push_str(&format!(
        "{:<20}{:>9}{:>10}{:>9}{:>10}{:>9}{:>10}\n",
        "", "Overall", "Sub-c.", "Overall", "Sub-c.", "Overall", "Sub-c."
    ));
    for s in summaries {
        out.push_str(&format!(
            "{:<20}{:>9}{:>10}{:>9}{:>10}{:>9}{:>10}\n",
            s.method,
            fmt_cell(s.dsc_overall),
            fmt_cell(s.dsc_subcortical),
            fmt_cell(s.iou_overall),
            fmt_cell(s.iou_subcortical),
            fmt_cell(s.hd95_overall),
            fmt_cell(s.hd95_subcortical),
        ));
    }
    let n_cases: BTreeSet<usize> = summaries.iter().map(|s| s.n_cases).collect();
    let cases: Vec<String> = n_cases.iter().map(|n| n.to_string()).collect();
    out.push_str(&format!(
        "\ncases per method: {} | sub-cortical column: {} | sample unit: per-case overall mean | undefined class values excluded\n",
        cases.join(","),
        TissueClass::Dgm.name(),
    ));
    let flagged: Vec<&str> = summaries
        .iter()
        .filter(|s| s.hd95_infinite)
        .map(|s| s.method.as_str())
        .collect();
    if !flagged.is_empty() {
        out.push_str(&format!(
            "warning: infinite HD95 present for: {}\n",
            flagged.join(", ")
        ));
    }
    for c in comparisons {
        out.push_str(&format!(
            "\nKruskal-Wallis ({}): H = {:.4}, df = {}, p = {:.6e} (tie correction {:.4})\n",
            c.metric, c.kruskal.h, c.kruskal.df, c.kruskal.p, c.kruskal.tie_correction
        ));
        out.push_str(&format!("Dunn post-hoc ({}):\n", c.dunn.adjustment));
        for pair in &c.dunn.pairs {
            out.push_str(&format!(
                "  {} vs {}: z = {:+.4}, p_raw = {:.6e}, p_adj = {:.6e}\n",
                pair.method_a, pair.method_b, pair.z, pair.p_raw, pair.p_adjusted
            ));
        }
    }
    out
}

/// Pinned CSV header for method summaries.
pub const SUMMARY_CSV_HEADER: [&str; 8] = [
    "method",
    "n_cases",
    "dsc_overall",
    "dsc_subcortical",
    "iou_overall",
    "iou_subcortical",
    "hd95_overall",
    "hd95_subcortical",
];

fn render_csv(summaries: &[MethodSummary]) -> Result<String, ReportError> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(SUMMARY_CSV_HEADER)?;
    for s in summaries {
        writer.write_record([
            s.method.as_str(),
            &s.n_cases.to_string(),
            &s.dsc_overall.to_string(),
            &s.dsc_subcortical.to_string(),
            &s.iou_overall.to_string(),
            &s.iou_subcortical.to_string(),
            &s.hd95_overall.to_string(),
            &s.hd95_subcortical.to_string(),
        ])?;
    }
    let bytes = writer.into_inner().expect("in-memory writer");
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}

/// Render summaries (and optional comparisons) in the requested format.
pub fn render(
    summaries: &[MethodSummary],
    comparisons: &[Comparison],
    format: ReportFormat,
) -> Result<String, ReportError> {
    match format {
        ReportFormat::Text => Ok(render_text(summaries, comparisons)),
        ReportFormat::Csv => render_csv(summaries),
        ReportFormat::Json => {
            let adjustment = comparisons
                .first()
                .map(|c| c.dunn.adjustment.clone());
            let report = Report {
                metadata: ReportMetadata::new(adjustment),
                summaries: summaries.to_vec(),
                comparisons: comparisons.to_vec(),
            };
            let mut json = serde_json::to_string_pretty(&report)?;
            json.push('\n');
            Ok(json)
        }
    }
}

/// Parse a JSON report produced by [`render`].
pub fn parse_json_report(json: &str) -> Result<Report, ReportError> {
    Ok(serde_json::from_str(json)?)
}
