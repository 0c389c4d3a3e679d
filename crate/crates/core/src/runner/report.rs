//! Study report and its on-disk artifacts.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::evaluation::{Metric, ScoreReport};
use crate::optimizer::TrialState;
use crate::space::PipelineConfig;

pub const REPORT_JSON: &str = "report.json";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const RUNNING_MAX_CSV: &str = "running_max.csv";
pub const DASHBOARD_HTML: &str = "dashboard.html";

pub const SUMMARY_HEADER: &str =
    "benchmark,phase,metric,baseline,baseline_ci_low,baseline_ci_high,optimized,optimized_ci_low,optimized_ci_high,relative_gain";
pub const RUNNING_MAX_HEADER: &str = "trial,objective,running_max";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Train,
    Holdout,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Train => "train",
            Phase::Holdout => "holdout",
        }
    }
}

/// `(optimized - baseline) / baseline`, undefined for a zero baseline.
pub fn relative_gain(baseline: f64, optimized: f64) -> Option<f64> {
    (baseline != 0.0).then(|| (optimized - baseline) / baseline)
}

/// Signed percentage with one decimal, or `--` when undefined.
pub fn format_gain(gain: Option<f64>) -> String {
    match gain {
        Some(g) => format!("{:+.1}%", g * 100.0),
        None => "--".to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub phase: Phase,
    pub metric: Metric,
    pub baseline: ScoreReport,
    pub optimized: ScoreReport,
    pub relative_gain: Option<f64>,
}

impl Comparison {
    pub fn new(phase: Phase, baseline: ScoreReport, optimized: ScoreReport) -> Self {
        let relative_gain = relative_gain(baseline.mean, optimized.mean);
        Comparison { phase, metric: baseline.metric, baseline, optimized, relative_gain }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningMaxPoint {
    pub trial: usize,
    pub objective: Option<f64>,
    pub running_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub trial_index: usize,
    pub state: TrialState,
    pub objective: Option<f64>,
    pub config: PipelineConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// One question's outcome under the baseline and the optimized config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionDetail {
    pub phase: Phase,
    pub instance_id: String,
    pub question: String,
    pub gold_answer: String,
    pub baseline_prediction: String,
    pub baseline_score: f64,
    pub optimized_prediction: String,
    pub optimized_score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub study_id: String,
    pub benchmark: String,
    pub metric: Metric,
    pub backend: String,
    pub model: String,
    pub n_trials: usize,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
    pub baseline_config: PipelineConfig,
    pub best_trial: usize,
    pub best_config: PipelineConfig,
    /// Objective of the best trial as recorded by the optimizer.
    pub best_objective: f64,
    pub train: ScoreReport,
    pub holdout: ScoreReport,
    pub baseline_train: ScoreReport,
    pub baseline_holdout: ScoreReport,
    pub train_gain: Option<f64>,
    pub holdout_gain: Option<f64>,
    /// Every metric on both phases, target metric included.
    pub comparisons: Vec<Comparison>,
    pub running_max: Vec<RunningMaxPoint>,
    pub trials: Vec<TrialSummary>,
    pub questions: Vec<QuestionDetail>,
}

fn write_file(dir: &Path, name: &str, contents: &str) -> std::io::Result<PathBuf> {
    let path = dir.join(name);
    let tmp = dir.join(format!(".{name}.tmp"));
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, &path)?;
    Ok(path)
}

pub fn report_json(report: &StudyReport) -> String {
    serde_json::to_string_pretty(report).expect("report serializes") + "\n"
}

pub fn summary_csv(report: &StudyReport) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for c in &report.comparisons {
        let (b, o) = (&c.baseline, &c.optimized);
        writeln!(
            out,
            "{},{},{},{:.3},{:.3},{:.3},{:.3},{:.3},{:.3},{}",
            csv_field(&report.benchmark),
            c.phase.as_str(),
            c.metric.label(),
            b.mean,
            b.ci_low,
            b.ci_high,
            o.mean,
            o.ci_low,
            o.ci_high,
            format_gain(c.relative_gain)
        )
        .expect("string write");
    }
    out
}

pub fn running_max_csv(report: &StudyReport) -> String {
    let mut out = String::from(RUNNING_MAX_HEADER);
    out.push('\n');
    for p in &report.running_max {
        let objective = p.objective.map(|v| format!("{v:.6}")).unwrap_or_default();
        writeln!(out, "{},{},{:.6}", p.trial, objective, p.running_max).expect("string write");
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn escape_html(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            c => out.push(c),
        }
    }
    out
}

const CHART_W: f64 = 640.0;
const CHART_H: f64 = 240.0;
const PAD: f64 = 36.0;

fn running_max_svg(points: &[RunningMaxPoint]) -> String {
    let mut svg = format!("<svg viewBox=\"0 0 {CHART_W} {CHART_H}\" width=\"{CHART_W}\" height=\"{CHART_H}\" role=\"img\">");
    let _ = write!(
        svg,
        "<line x1=\"{PAD}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" class=\"axis\"/><line x1=\"{PAD}\" y1=\"{PAD}\" x2=\"{PAD}\" y2=\"{b}\" class=\"axis\"/>",
        b = CHART_H - PAD,
        r = CHART_W - PAD
    );
    let last = points.last().map_or(1, |p| p.trial.max(1)) as f64;
    let x = |t: usize| PAD + (CHART_W - 2.0 * PAD) * t as f64 / last;
    let y = |v: f64| CHART_H - PAD - (CHART_H - 2.0 * PAD) * v.clamp(0.0, 1.0);
    for tick in [0.0, 0.5, 1.0] {
        let _ = write!(svg, "<text x=\"4\" y=\"{:.1}\" class=\"tick\">{tick:.1}</text>", y(tick) + 4.0);
    }
    let _ = write!(svg, "<text x=\"{:.1}\" y=\"{:.1}\" class=\"tick\">trial</text>", CHART_W / 2.0, CHART_H - 6.0);
    for p in points {
        if let Some(v) = p.objective {
            let _ = write!(svg, "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"2.5\" class=\"trial\"/>", x(p.trial), y(v));
        }
    }
    let path: Vec<String> = points.iter().map(|p| format!("{:.1},{:.1}", x(p.trial), y(p.running_max))).collect();
    if !path.is_empty() {
        let _ = write!(svg, "<polyline points=\"{}\" class=\"best\"/>", path.join(" "));
    }
    svg.push_str("</svg>");
    svg
}

fn bars_svg(comparisons: &[Comparison]) -> String {
    let row_h = 22.0;
    let label_w = 150.0;
    let bar_w = CHART_W - label_w - 60.0;
    let height = row_h * 2.0 * comparisons.len() as f64 + 10.0;
    let mut svg = format!("<svg viewBox=\"0 0 {CHART_W} {height}\" width=\"{CHART_W}\" height=\"{height}\" role=\"img\">");
    for (i, c) in comparisons.iter().enumerate() {
        let top = i as f64 * row_h * 2.0 + 5.0;
        let _ = write!(
            svg,
            "<text x=\"0\" y=\"{:.1}\" class=\"tick\">{} {}</text>",
            top + row_h,
            c.phase.as_str(),
            c.metric.label()
        );
        for (j, (class, score)) in [("baseline", &c.baseline), ("optimized", &c.optimized)].into_iter().enumerate() {
            let y0 = top + j as f64 * (row_h - 2.0);
            let _ = write!(
                svg,
                "<rect x=\"{label_w}\" y=\"{y0:.1}\" width=\"{:.1}\" height=\"{:.1}\" class=\"{class}\"/><text x=\"{:.1}\" y=\"{:.1}\" class=\"tick\">{:.3}</text>",
                bar_w * score.mean.clamp(0.0, 1.0),
                row_h - 6.0,
                label_w + bar_w * score.mean.clamp(0.0, 1.0) + 4.0,
                y0 + row_h - 9.0,
                score.mean
            );
        }
    }
    svg.push_str("</svg>");
    svg
}

const STYLE: &str = "body{font-family:sans-serif;margin:2em;color:#222}table{border-collapse:collapse;margin:1em 0}\
td,th{border:1px solid #ccc;padding:3px 8px;font-size:13px;text-align:left;vertical-align:top}\
.axis{stroke:#444}.tick{font-size:11px;fill:#444}.trial{fill:#9ab}.best{fill:none;stroke:#c33;stroke-width:2}\
.baseline{fill:#bbb}.optimized{fill:#36c}.miss{background:#fee}";

pub fn dashboard_html(report: &StudyReport) -> String {
    let e = escape_html;
    let mut html = String::new();
    let _ = write!(
        html,
        "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>Study {}</title><style>{STYLE}</style></head><body>\n",
        e(&report.study_id)
    );
    let _ = write!(
        html,
        "<h1>Study {}</h1>\n<p>Benchmark {}, metric {}, backend {} ({}), {} trials, {} train / {} hold-out questions.</p>\n",
        e(&report.study_id),
        e(&report.benchmark),
        report.metric.label(),
        e(&report.backend),
        e(&report.model),
        report.n_trials,
        report.train_ids.len(),
        report.test_ids.len()
    );
    let _ = write!(
        html,
        "<h2>Configurations</h2>\n<table><tr><th></th><th>config</th></tr><tr><td>baseline</td><td>{}</td></tr><tr><td>best (trial {})</td><td>{}</td></tr></table>\n",
        e(&report.baseline_config.to_string()),
        report.best_trial,
        e(&report.best_config.to_string())
    );
    let _ = write!(html, "<h2>Best objective so far</h2>\n{}\n", running_max_svg(&report.running_max));
    let _ = write!(html, "<h2>Baseline vs optimized</h2>\n{}\n<table><tr>", bars_svg(&report.comparisons));
    for h in SUMMARY_HEADER.split(',') {
        let _ = write!(html, "<th>{h}</th>");
    }
    html.push_str("</tr>\n");
    for row in summary_csv(report).lines().skip(1) {
        html.push_str("<tr>");
        for cell in row.split(',') {
            let _ = write!(html, "<td>{}</td>", e(cell));
        }
        html.push_str("</tr>\n");
    }
    html.push_str("</table>\n<h2>Per-question results</h2>\n<table><tr><th>phase</th><th>id</th><th>question</th><th>gold</th>");
    let _ = writeln!(
        html,
        "<th>baseline answer</th><th>baseline {m}</th><th>optimized answer</th><th>optimized {m}</th><th>note</th></tr>",
        m = report.metric.label()
    );
    for q in &report.questions {
        let class = if q.optimized_score < 1.0 { " class=\"miss\"" } else { "" };
        let _ = writeln!(
            html,
            "<tr{class}><td>{}</td><td>{}</td><td>{}</td><td>{}</td><td>{}</td><td>{:.3}</td><td>{}</td><td>{:.3}</td><td>{}</td></tr>",
            q.phase.as_str(),
            e(&q.instance_id),
            e(&q.question),
            e(&q.gold_answer),
            e(&q.baseline_prediction),
            q.baseline_score,
            e(&q.optimized_prediction),
            q.optimized_score,
            e(q.error_note.as_deref().unwrap_or(""))
        );
    }
    html.push_str("</table>\n</body></html>\n");
    html
}

/// Writes every artifact into `out_dir` and returns their paths.
pub fn emit_report(report: &StudyReport, out_dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    Ok(vec![
        write_file(out_dir, REPORT_JSON, &report_json(report))?,
        write_file(out_dir, SUMMARY_CSV, &summary_csv(report))?,
        write_file(out_dir, RUNNING_MAX_CSV, &running_max_csv(report))?,
        write_file(out_dir, DASHBOARD_HTML, &dashboard_html(report))?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::QuestionScore;
    use crate::space::baseline_config;

    fn score(metric: Metric, values: &[f64]) -> ScoreReport {
        let qs = values.iter().enumerate().map(|(i, v)| QuestionScore::new(&format!("q{i}"), metric, *v)).collect();
        ScoreReport::build(qs, 200, 0.95, 1).unwrap()
    }

    fn report() -> StudyReport {
        let comparisons = vec![
            Comparison::new(Phase::Train, score(Metric::F1, &[0.5, 0.5]), score(Metric::F1, &[0.5, 1.0])),
            Comparison::new(Phase::Holdout, score(Metric::Em, &[0.0, 0.0]), score(Metric::Em, &[1.0, 0.0])),
        ];
        StudyReport {
            study_id: "s<1>".into(),
            benchmark: "toy, v2".into(),
            metric: Metric::F1,
            backend: "mock".into(),
            model: "m".into(),
            n_trials: 2,
            train_ids: vec!["q0".into()],
            test_ids: vec!["q1".into()],
            baseline_config: baseline_config(),
            best_trial: 1,
            best_config: baseline_config(),
            best_objective: 0.75,
            train: comparisons[0].optimized.clone(),
            holdout: comparisons[0].optimized.clone(),
            baseline_train: comparisons[0].baseline.clone(),
            baseline_holdout: comparisons[0].baseline.clone(),
            train_gain: comparisons[0].relative_gain,
            holdout_gain: None,
            comparisons,
            running_max: vec![
                RunningMaxPoint { trial: 0, objective: Some(0.25), running_max: 0.25 },
                RunningMaxPoint { trial: 1, objective: None, running_max: 0.25 },
            ],
            trials: vec![],
            questions: vec![QuestionDetail {
                phase: Phase::Train,
                instance_id: "q0".into(),
                question: "<script>alert(1)</script>".into(),
                gold_answer: "x".into(),
                baseline_prediction: "y".into(),
                baseline_score: 0.0,
                optimized_prediction: "x".into(),
                optimized_score: 1.0,
                error_note: None,
            }],
        }
    }

    #[test]
    fn gain_is_undefined_for_zero_baseline() {
        assert_eq!(relative_gain(0.0, 0.5), None);
        assert_eq!(format_gain(relative_gain(0.0, 0.5)), "--");
        assert_eq!(format_gain(relative_gain(0.169, 0.840)), "+397.0%");
        assert_eq!(format_gain(relative_gain(0.5, 0.25)), "-50.0%");
    }

    #[test]
    fn csv_shapes() {
        let r = report();
        let summary = summary_csv(&r);
        let lines: Vec<&str> = summary.lines().collect();
        assert_eq!(lines[0], SUMMARY_HEADER);
        assert_eq!(lines[1], "\"toy, v2\",train,F1,0.500,0.500,0.500,0.750,0.500,1.000,+50.0%");
        assert!(lines[2].ends_with(",--"));
        assert_eq!(running_max_csv(&r), "trial,objective,running_max\n0,0.250000,0.250000\n1,,0.250000\n");
    }

    #[test]
    fn dashboard_is_self_contained_and_escaped() {
        let html = dashboard_html(&report());
        assert!(!html.contains("http://") && !html.contains("https://") && !html.contains("src="));
        assert!(!html.contains("<script>"));
        assert!(html.contains("&lt;script&gt;"));
        assert!(html.contains("<polyline"));
    }

    #[test]
    fn emit_writes_all_files() {
        let dir = tempfile::tempdir().unwrap();
        let paths = emit_report(&report(), dir.path()).unwrap();
        assert_eq!(paths.len(), 4);
        let back: StudyReport = serde_json::from_str(&std::fs::read_to_string(dir.path().join(REPORT_JSON)).unwrap()).unwrap();
        assert_eq!(back, report());
    }
}
