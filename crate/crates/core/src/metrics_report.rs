//! Accuracy, confusion matrices, iteration-efficiency reports and rendering.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::curriculum::RunRecord;
use crate::sampling::SamplePool;
use crate::trainer::{argmax, Classifier, Example};
use crate::{svg, Error, Result};

/// Fraction of `examples` whose argmax prediction equals the label; 0 when empty.
pub fn top1_accuracy<C: Classifier + ?Sized>(clf: &C, examples: &[Example<'_>]) -> Result<f64> {
    if examples.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0usize;
    for ex in examples {
        if argmax(&clf.probabilities(ex.x)?) == ex.y {
            correct += 1;
        }
    }
    Ok(correct as f64 / examples.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub clip_id: String,
    pub start_frame: usize,
    pub label: usize,
    pub predicted: usize,
    pub multiplicity: usize,
}

/// One prediction per distinct pool entry.
pub fn predict_pool<C: Classifier + ?Sized>(clf: &C, pool: &SamplePool) -> Result<Vec<Prediction>> {
    pool.entries()
        .iter()
        .map(|e| {
            let s = &e.sample;
            if s.features.len() != clf.input_dim() {
                return Err(Error::Dimension {
                    expected: clf.input_dim(),
                    got: s.features.len(),
                });
            }
            Ok(Prediction {
                clip_id: s.clip_id.clone(),
                start_frame: s.start_frame,
                label: s.label,
                predicted: argmax(&clf.probabilities(&s.features)?),
                multiplicity: e.multiplicity,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub n_samples: usize,
    pub top1_accuracy: f64,
    /// Rows are true classes, columns predicted classes.
    pub confusion: Vec<Vec<usize>>,
    /// `None` for classes with no support.
    pub per_class_accuracy: Vec<Option<f64>>,
}

impl EvalResult {
    pub fn from_predictions(n_classes: usize, predictions: &[Prediction]) -> Self {
        let mut confusion = vec![vec![0usize; n_classes]; n_classes];
        for p in predictions {
            if p.label < n_classes && p.predicted < n_classes {
                confusion[p.label][p.predicted] += p.multiplicity;
            }
        }
        let n_samples: usize = confusion.iter().flatten().sum();
        let trace: usize = (0..n_classes).map(|c| confusion[c][c]).sum();
        let per_class_accuracy = confusion
            .iter()
            .enumerate()
            .map(|(c, row)| {
                let support: usize = row.iter().sum();
                (support > 0).then(|| row[c] as f64 / support as f64)
            })
            .collect();
        Self {
            n_samples,
            top1_accuracy: if n_samples == 0 { 0.0 } else { trace as f64 / n_samples as f64 },
            confusion,
            per_class_accuracy,
        }
    }

    pub fn support(&self, class: usize) -> usize {
        self.confusion.get(class).map_or(0, |r| r.iter().sum())
    }

    pub fn predicted_count(&self, class: usize) -> usize {
        self.confusion.iter().map(|r| r.get(class).copied().unwrap_or(0)).sum()
    }
}

/// Scores `clf` on every sample of `pool` (duplicates counted).
pub fn evaluate<C: Classifier + ?Sized>(clf: &C, pool: &SamplePool) -> Result<EvalResult> {
    Ok(EvalResult::from_predictions(pool.n_classes(), &predict_pool(clf, pool)?))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub label: String,
    pub display_name: String,
    pub total_iterations: usize,
    /// Top-1 accuracy in percent.
    pub top1_pct: f64,
}

impl ReportEntry {
    pub fn from_run(record: &RunRecord, eval: &EvalResult) -> Self {
        Self {
            label: record.label.clone(),
            display_name: record.strategy.display_name(),
            total_iterations: record.total_iterations,
            top1_pct: 100.0 * eval.top1_accuracy,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportDelta {
    pub label: String,
    pub base_label: String,
    /// `base − other`; positive means fewer iterations than the base.
    pub iteration_savings: i64,
    /// `(base − other) / base · 100`.
    pub percent_savings: f64,
    /// `other − base`, in accuracy points.
    pub accuracy_delta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyReport {
    /// Model / test-set setting the entries belong to.
    pub setting: String,
    pub base_label: String,
    pub entries: Vec<ReportEntry>,
    pub deltas: Vec<ReportDelta>,
}

pub fn build_efficiency_report(
    setting: impl Into<String>,
    entries: Vec<ReportEntry>,
    base_label: &str,
) -> Result<EfficiencyReport> {
    if entries.len() < 2 {
        return Err(Error::Label(format!("need at least 2 entries, got {}", entries.len())));
    }
    let base = entries
        .iter()
        .find(|e| e.label == base_label)
        .ok_or_else(|| Error::Label(format!("base label `{base_label}` not among entries")))?
        .clone();
    let deltas = entries
        .iter()
        .filter(|e| e.label != base_label)
        .map(|e| {
            let saved = base.total_iterations as i64 - e.total_iterations as i64;
            ReportDelta {
                label: e.label.clone(),
                base_label: base_label.to_string(),
                iteration_savings: saved,
                percent_savings: if base.total_iterations == 0 {
                    0.0
                } else {
                    100.0 * saved as f64 / base.total_iterations as f64
                },
                accuracy_delta: e.top1_pct - base.top1_pct,
            }
        })
        .collect();
    Ok(EfficiencyReport {
        setting: setting.into(),
        base_label: base_label.to_string(),
        entries,
        deltas,
    })
}

/// `28300` → `28.3k`; values under 1000 print whole.
pub fn format_iterations(n: i64) -> String {
    if n.abs() >= 1000 {
        format!("{:.1}k", n as f64 / 1000.0)
    } else {
        n.to_string()
    }
}

/// `6.5k (23%)` style savings cell.
pub fn format_savings(d: &ReportDelta) -> String {
    format!("{} ({:.0}%)", format_iterations(d.iteration_savings), d.percent_savings)
}

fn signed2(x: f64) -> String {
    // -0.00 prints as +0.00
    let x = if x.abs() < 0.005 { 0.0 } else { x };
    format!("{x:+.2}")
}

impl EfficiencyReport {
    pub fn entry(&self, label: &str) -> Option<&ReportEntry> {
        self.entries.iter().find(|e| e.label == label)
    }

    pub fn delta(&self, label: &str) -> Option<&ReportDelta> {
        self.deltas.iter().find(|d| d.label == label)
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "### Training efficiency: {}\n", self.setting);
        out.push_str("| Strategy | Iterations | Top-1 (%) | Saved vs base | Δ Top-1 (pts) |\n");
        out.push_str("|---|---:|---:|---:|---:|\n");
        for e in &self.entries {
            let (saved, acc) = match self.delta(&e.label) {
                Some(d) => (format_savings(d), signed2(d.accuracy_delta)),
                None => ("base".to_string(), "base".to_string()),
            };
            let _ = writeln!(
                out,
                "| {} | {} | {:.2} | {} | {} |",
                e.display_name,
                format_iterations(e.total_iterations as i64),
                e.top1_pct,
                saved,
                acc
            );
        }
        out
    }

    /// Flat CSV: one row per entry, delta columns empty for the base.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "setting",
            "label",
            "display_name",
            "total_iterations",
            "top1_pct",
            "base_label",
            "iteration_savings",
            "percent_savings",
            "accuracy_delta",
        ])?;
        for e in &self.entries {
            let d = self.delta(&e.label);
            w.write_record([
                self.setting.clone(),
                e.label.clone(),
                e.display_name.clone(),
                e.total_iterations.to_string(),
                e.top1_pct.to_string(),
                self.base_label.clone(),
                d.map_or(String::new(), |d| d.iteration_savings.to_string()),
                d.map_or(String::new(), |d| d.percent_savings.to_string()),
                d.map_or(String::new(), |d| d.accuracy_delta.to_string()),
            ])?;
        }
        csv_string(w)
    }
}

fn csv_string(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::Validation(e.to_string()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub label: String,
    pub values: Vec<Option<f64>>,
}

/// Strategy × setting accuracy grid, in percent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyTable {
    pub title: String,
    pub columns: Vec<String>,
    pub rows: Vec<AccuracyRow>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Json,
    Markdown,
}

impl std::str::FromStr for TableFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(TableFormat::Csv),
            "json" => Ok(TableFormat::Json),
            "md" | "markdown" => Ok(TableFormat::Markdown),
            other => Err(Error::Config(format!("unknown table format `{other}`"))),
        }
    }
}

impl AccuracyTable {
    /// Cell lookup by row label and column name.
    pub fn value(&self, row: &str, column: &str) -> Option<f64> {
        let c = self.columns.iter().position(|x| x == column)?;
        self.rows.iter().find(|r| r.label == row)?.values.get(c).copied().flatten()
    }

    pub fn from_csv(text: &str, title: impl Into<String>) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let headers = r.headers()?.clone();
        let columns: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
        let mut rows = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let label = rec.get(0).unwrap_or_default().to_string();
            let values = rec
                .iter()
                .skip(1)
                .map(|v| {
                    if v.is_empty() {
                        Ok(None)
                    } else {
                        v.parse::<f64>().map(Some).map_err(|e| Error::Parse {
                            line: i + 2,
                            msg: format!("bad value `{v}`: {e}"),
                        })
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(AccuracyRow { label, values });
        }
        Ok(Self {
            title: title.into(),
            columns,
            rows,
        })
    }
}

/// Renders an accuracy table. CSV and JSON keep full precision; Markdown shows two decimals.
pub fn render_table(table: &AccuracyTable, format: TableFormat) -> Result<String> {
    match format {
        TableFormat::Json => Ok(serde_json::to_string_pretty(table)? + "\n"),
        TableFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let mut header = vec!["strategy".to_string()];
            header.extend(table.columns.iter().cloned());
            w.write_record(&header)?;
            for row in &table.rows {
                let mut rec = vec![row.label.clone()];
                rec.extend(row.values.iter().map(|v| v.map_or(String::new(), |x| x.to_string())));
                w.write_record(&rec)?;
            }
            csv_string(w)
        }
        TableFormat::Markdown => {
            let mut out = String::new();
            let _ = writeln!(out, "### {}\n", table.title);
            let _ = writeln!(out, "| Training Strategy | {} |", table.columns.join(" | "));
            let _ = writeln!(out, "|---|{}", "---:|".repeat(table.columns.len()));
            for row in &table.rows {
                let cells: Vec<String> = row
                    .values
                    .iter()
                    .map(|v| v.map_or("–".to_string(), |x| format!("{x:.2}")))
                    .collect();
                let _ = writeln!(out, "| {} | {} |", row.label, cells.join(" | "));
            }
            Ok(out)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedConfusion {
    pub label: String,
    pub matrix: Vec<Vec<usize>>,
}

/// Everything `compare` produces; serialized as `report.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub title: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<AccuracyTable>,
    pub efficiency: Vec<EfficiencyReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub confusions: Vec<NamedConfusion>,
}

impl ComparisonReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_markdown(&self) -> Result<String> {
        let mut out = format!("# {}\n\n", self.title);
        if let Some(t) = &self.accuracy {
            out.push_str(&render_table(t, TableFormat::Markdown)?);
            out.push('\n');
        }
        for e in &self.efficiency {
            out.push_str(&e.to_markdown());
            out.push('\n');
        }
        Ok(out)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut out = String::new();
        for (i, e) in self.efficiency.iter().enumerate() {
            let csv = e.to_csv()?;
            // keep a single header line across settings
            let body = if i == 0 { csv.as_str() } else { csv.split_once('\n').map_or("", |x| x.1) };
            out.push_str(body);
        }
        Ok(out)
    }
}

/// Writes `report.json`, `report.csv`, `report.md` and `plots/*.svg` into `dir`.
pub fn write_report(report: &ComparisonReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for (name, body) in [
        ("report.json", report.to_json()?),
        ("report.csv", report.to_csv()?),
        ("report.md", report.to_markdown()?),
    ] {
        let p = dir.join(name);
        fs::write(&p, body)?;
        written.push(p);
    }
    written.extend(render_plots(report, &dir.join("plots"))?);
    Ok(written)
}

/// Accuracy-vs-iterations scatter, accuracy and iteration bars, and one
/// confusion heatmap per named matrix.
pub fn render_plots(report: &ComparisonReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut files: Vec<(String, String)> = Vec::new();
    for (i, eff) in report.efficiency.iter().enumerate() {
        let suffix = if report.efficiency.len() > 1 { format!("_{i}") } else { String::new() };
        let points: Vec<(String, f64, f64)> = eff
            .entries
            .iter()
            .map(|e| (e.display_name.clone(), e.total_iterations as f64, e.top1_pct))
            .collect();
        files.push((
            format!("accuracy_vs_iterations{suffix}.svg"),
            svg::scatter(
                &format!("Top-1 vs iterations: {}", eff.setting),
                "total iterations",
                "top-1 accuracy (%)",
                &points,
            ),
        ));
        let cats: Vec<String> = eff.entries.iter().map(|e| e.label.clone()).collect();
        let iters = vec![(
            eff.setting.clone(),
            eff.entries.iter().map(|e| Some(e.total_iterations as f64)).collect(),
        )];
        files.push((
            format!("iterations{suffix}.svg"),
            svg::grouped_bars(&format!("Training iterations: {}", eff.setting), "iterations", &cats, &iters),
        ));
    }
    let (cats, series) = match &report.accuracy {
        Some(t) => (
            t.columns.clone(),
            t.rows.iter().map(|r| (r.label.clone(), r.values.clone())).collect::<Vec<_>>(),
        ),
        None => (
            report.efficiency.iter().map(|e| e.setting.clone()).collect(),
            accuracy_series(&report.efficiency),
        ),
    };
    files.push(("accuracy.svg".into(), svg::grouped_bars("Top-1 accuracy (%)", "top-1 (%)", &cats, &series)));
    for c in &report.confusions {
        let labels: Vec<String> = (0..c.matrix.len()).map(|i| i.to_string()).collect();
        files.push((
            format!("confusion_{}.svg", sanitize(&c.label)),
            svg::heatmap(&format!("Confusion: {}", c.label), &c.matrix, &labels),
        ));
    }
    let mut written = Vec::new();
    for (name, body) in files {
        let p = dir.join(name);
        fs::write(&p, body)?;
        written.push(p);
    }
    Ok(written)
}

fn accuracy_series(reports: &[EfficiencyReport]) -> Vec<(String, Vec<Option<f64>>)> {
    let mut labels: Vec<&ReportEntry> = Vec::new();
    for r in reports {
        for e in &r.entries {
            if !labels.iter().any(|l| l.label == e.label) {
                labels.push(e);
            }
        }
    }
    labels
        .into_iter()
        .map(|l| {
            (
                l.display_name.clone(),
                reports.iter().map(|r| r.entry(&l.label).map(|e| e.top1_pct)).collect(),
            )
        })
        .collect()
}

fn sanitize(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::pool_with_counts;

    struct Oracle;
    impl Classifier for Oracle {
        fn input_dim(&self) -> usize {
            2
        }
        // pool_with_counts stores the label in feature 0
        fn probabilities(&self, x: &[f64]) -> Result<Vec<f64>> {
            let mut p = vec![0.0; 12];
            p[x[0] as usize] = 1.0;
            Ok(p)
        }
    }

    struct Constant;
    impl Classifier for Constant {
        fn input_dim(&self) -> usize {
            2
        }
        fn probabilities(&self, _: &[f64]) -> Result<Vec<f64>> {
            Ok(vec![1.0 / 12.0; 12])
        }
    }

    #[test]
    fn perfect_and_constant_predictors() {
        let pool = pool_with_counts(&[10; 12], 0);
        let r = evaluate(&Oracle, &pool).unwrap();
        assert_eq!(r.n_samples, 120);
        assert_eq!(r.top1_accuracy, 1.0);
        for c in 0..12 {
            assert_eq!(r.confusion[c][c], 10);
        }
        let r = evaluate(&Constant, &pool).unwrap();
        assert!((r.top1_accuracy - 1.0 / 12.0).abs() < 1e-15);
        assert_eq!(r.predicted_count(0), 120);
        assert_eq!(r.per_class_accuracy[0], Some(1.0));
        assert_eq!(r.per_class_accuracy[1], Some(0.0));
    }

    #[test]
    fn empty_class_has_no_accuracy() {
        let r = EvalResult::from_predictions(
            3,
            &[Prediction {
                clip_id: "a".into(),
                start_frame: 0,
                label: 0,
                predicted: 1,
                multiplicity: 2,
            }],
        );
        assert_eq!(r.n_samples, 2);
        assert_eq!(r.per_class_accuracy, vec![Some(0.0), None, None]);
    }

    fn entry(label: &str, iters: usize, acc: f64) -> ReportEntry {
        ReportEntry {
            label: label.into(),
            display_name: label.into(),
            total_iterations: iters,
            top1_pct: acc,
        }
    }

    #[test]
    fn savings_formatting() {
        let r = build_efficiency_report(
            "t1",
            vec![entry("combined", 28_300, 58.12), entry("two_step", 21_800, 60.90)],
            "combined",
        )
        .unwrap();
        let d = r.delta("two_step").unwrap();
        assert_eq!(d.iteration_savings, 6_500);
        assert!((d.percent_savings - 22.968_197_879_858_657).abs() < 1e-9);
        assert_eq!(format_savings(d), "6.5k (23%)");
        assert!((d.accuracy_delta - 2.78).abs() < 1e-9);
        assert!(r.to_markdown().contains("| two_step | 21.8k | 60.90 | 6.5k (23%) | +2.78 |"));
    }

    #[test]
    fn identical_entries_have_zero_deltas() {
        let r = build_efficiency_report("s", vec![entry("a", 100, 50.0), entry("b", 100, 50.0)], "a").unwrap();
        let d = r.delta("b").unwrap();
        assert_eq!((d.iteration_savings, d.percent_savings, d.accuracy_delta), (0, 0.0, 0.0));
    }

    #[test]
    fn report_label_errors() {
        assert!(matches!(
            build_efficiency_report("s", vec![entry("a", 1, 1.0), entry("b", 1, 1.0)], "z"),
            Err(Error::Label(_))
        ));
        assert!(matches!(build_efficiency_report("s", vec![entry("a", 1, 1.0)], "a"), Err(Error::Label(_))));
    }

    #[test]
    fn single_row_table_and_csv_idempotence() {
        let t = AccuracyTable {
            title: "x".into(),
            columns: vec!["T1".into()],
            rows: vec![AccuracyRow {
                label: "Real (G) + Synthetic (A)".into(),
                values: vec![Some(58.12)],
            }],
        };
        let md = render_table(&t, TableFormat::Markdown).unwrap();
        assert_eq!(md.lines().filter(|l| l.starts_with("| Real")).count(), 1);
        let csv = render_table(&t, TableFormat::Csv).unwrap();
        let back = AccuracyTable::from_csv(&csv, "x").unwrap();
        assert_eq!(back, t);
        assert_eq!(render_table(&back, TableFormat::Csv).unwrap(), csv);
    }
}
