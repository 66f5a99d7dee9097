//! Report files for evaluation results: CSV tables and self-contained SVG
//! charts (empirical-CDF step lines, MPE bar charts) from a small built-in
//! SVG writer. Output is deterministic: stable ordering, fixed float
//! formatting, no timestamps.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::evaluation::{ErrorSummary, EvaluationError};
use crate::util::fmt_sig6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Svg,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<ReportFormat, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "svg" => Ok(ReportFormat::Svg),
            other => Err(format!("unknown report format `{other}` (expected csv or svg)")),
        }
    }
}

/// One named CDF series (typically one per estimator).
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledCdf {
    pub label: String,
    /// `(error, cumulative fraction)` points, ascending.
    pub points: Vec<(f64, f64)>,
}

/// Write the summary table and CDF series under `out_dir` in the chosen
/// format; returns the created file paths. Summaries must be non-empty;
/// CDF files are only produced when series exist.
pub fn emit_report(
    summaries: &[ErrorSummary],
    cdfs: &[LabeledCdf],
    format: ReportFormat,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, EvaluationError> {
    if summaries.is_empty() {
        return Err(EvaluationError::Empty);
    }
    fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    match format {
        ReportFormat::Csv => {
            let path = out_dir.join("summaries.csv");
            fs::write(&path, summaries_csv(summaries)?)?;
            written.push(path);
            if !cdfs.is_empty() {
                let path = out_dir.join("cdf.csv");
                fs::write(&path, cdf_csv(cdfs)?)?;
                written.push(path);
            }
        }
        ReportFormat::Svg => {
            let path = out_dir.join("summaries.svg");
            fs::write(&path, summary_bars_svg(summaries))?;
            written.push(path);
            if !cdfs.is_empty() {
                let path = out_dir.join("cdf.svg");
                fs::write(&path, cdf_svg(cdfs))?;
                written.push(path);
            }
        }
    }
    Ok(written)
}

fn summaries_csv(summaries: &[ErrorSummary]) -> Result<String, EvaluationError> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<&str> = summaries[0].key.iter().map(|(k, _)| k.as_str()).collect();
    header.extend([
        "mpe", "mean", "p50", "p75", "p90", "p95", "min", "max", "stddev", "count",
    ]);
    writer.write_record(&header).map_err(io_of_csv)?;
    for s in summaries {
        let mut row: Vec<String> = s.key.iter().map(|(_, v)| v.clone()).collect();
        row.extend(
            [s.mpe, s.mean, s.p50, s.p75, s.p90, s.p95, s.min, s.max, s.stddev]
                .iter()
                .map(|v| fmt_sig6(*v)),
        );
        row.push(s.count.to_string());
        writer.write_record(&row).map_err(io_of_csv)?;
    }
    let bytes = writer.into_inner().map_err(|e| {
        EvaluationError::Io(std::io::Error::other(e.to_string()))
    })?;
    Ok(String::from_utf8(bytes).expect("csv writer emits UTF-8"))
}

fn cdf_csv(cdfs: &[LabeledCdf]) -> Result<String, EvaluationError> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record(["label", "err", "fraction"])
        .map_err(io_of_csv)?;
    for cdf in cdfs {
        for (err, fraction) in &cdf.points {
            writer
                .write_record([cdf.label.as_str(), &fmt_sig6(*err), &fmt_sig6(*fraction)])
                .map_err(io_of_csv)?;
        }
    }
    let bytes = writer.into_inner().map_err(|e| {
        EvaluationError::Io(std::io::Error::other(e.to_string()))
    })?;
    Ok(String::from_utf8(bytes).expect("csv writer emits UTF-8"))
}

fn io_of_csv(e: csv::Error) -> EvaluationError {
    EvaluationError::Io(std::io::Error::other(e.to_string()))
}

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN_LEFT: f64 = 60.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 20.0;
const MARGIN_BOTTOM: f64 = 60.0;

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn svg_open(out: &mut String) {
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"11\">"
    );
    let _ = writeln!(
        out,
        "<rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>"
    );
}

struct Scale {
    x_max: f64,
}

impl Scale {
    fn x(&self, v: f64) -> f64 {
        MARGIN_LEFT + v / self.x_max * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    fn y(&self, fraction: f64) -> f64 {
        HEIGHT - MARGIN_BOTTOM - fraction * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
    }
}

fn axes(out: &mut String, scale: &Scale, x_label: &str, y_label: &str) {
    let x0 = MARGIN_LEFT;
    let y0 = HEIGHT - MARGIN_BOTTOM;
    let _ = writeln!(
        out,
        "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{:.2}\" y2=\"{y0}\" stroke=\"black\"/>",
        WIDTH - MARGIN_RIGHT
    );
    let _ = writeln!(
        out,
        "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x0}\" y2=\"{MARGIN_TOP}\" stroke=\"black\"/>"
    );
    for i in 0..=5 {
        let fx = i as f64 / 5.0;
        let vx = fx * scale.x_max;
        let px = scale.x(vx);
        let _ = writeln!(
            out,
            "<line x1=\"{px:.2}\" y1=\"{y0}\" x2=\"{px:.2}\" y2=\"{:.2}\" stroke=\"black\"/>",
            y0 + 4.0
        );
        let _ = writeln!(
            out,
            "<text x=\"{px:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>",
            y0 + 18.0,
            xml_escape(&fmt_sig6(vx))
        );
        let py = scale.y(fx);
        let _ = writeln!(
            out,
            "<line x1=\"{:.2}\" y1=\"{py:.2}\" x2=\"{x0}\" y2=\"{py:.2}\" stroke=\"black\"/>",
            x0 - 4.0
        );
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{}</text>",
            x0 - 8.0,
            py + 4.0,
            xml_escape(&fmt_sig6(fx))
        );
    }
    let _ = writeln!(
        out,
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>",
        (MARGIN_LEFT + WIDTH - MARGIN_RIGHT) / 2.0,
        HEIGHT - 14.0,
        xml_escape(x_label)
    );
    let _ = writeln!(
        out,
        "<text x=\"14\" y=\"{:.2}\" text-anchor=\"middle\" transform=\"rotate(-90 14 {:.2})\">{}</text>",
        (MARGIN_TOP + HEIGHT - MARGIN_BOTTOM) / 2.0,
        (MARGIN_TOP + HEIGHT - MARGIN_BOTTOM) / 2.0,
        xml_escape(y_label)
    );
}

/// Step-line chart of one or more cumulative error distributions.
pub fn cdf_svg(cdfs: &[LabeledCdf]) -> String {
    let x_max = cdfs
        .iter()
        .flat_map(|c| c.points.iter().map(|(e, _)| *e))
        .fold(0.0f64, f64::max)
        .max(1e-9)
        * 1.05;
    let scale = Scale { x_max };
    let mut out = String::new();
    svg_open(&mut out);
    axes(&mut out, &scale, "prediction error", "cumulative fraction");

    for (i, cdf) in cdfs.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        // Step line: advance horizontally at the previous height, then rise.
        let mut points = String::new();
        let mut last_y = scale.y(0.0);
        for (err, fraction) in &cdf.points {
            let px = scale.x(*err);
            let py = scale.y(*fraction);
            let _ = write!(points, "{px:.2},{last_y:.2} {px:.2},{py:.2} ");
            last_y = py;
        }
        let _ = writeln!(
            out,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>",
            points.trim_end()
        );
        let ly = MARGIN_TOP + 14.0 * i as f64 + 8.0;
        let _ = writeln!(
            out,
            "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"10\" height=\"10\" fill=\"{color}\"/>",
            MARGIN_LEFT + 10.0,
            ly - 9.0
        );
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{ly:.2}\">{}</text>",
            MARGIN_LEFT + 24.0,
            xml_escape(&cdf.label)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Bar chart of each summary group's median prediction error.
pub fn summary_bars_svg(summaries: &[ErrorSummary]) -> String {
    let max_mpe = summaries
        .iter()
        .map(|s| s.mpe)
        .fold(0.0f64, f64::max)
        .max(1e-9);
    let mut out = String::new();
    svg_open(&mut out);

    let y0 = HEIGHT - MARGIN_BOTTOM;
    let _ = writeln!(
        out,
        "<line x1=\"{MARGIN_LEFT}\" y1=\"{y0}\" x2=\"{:.2}\" y2=\"{y0}\" stroke=\"black\"/>",
        WIDTH - MARGIN_RIGHT
    );
    let plot_width = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let slot = plot_width / summaries.len() as f64;
    let bar_width = (slot * 0.6).min(60.0);
    for (i, s) in summaries.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let cx = MARGIN_LEFT + slot * (i as f64 + 0.5);
        let height = (s.mpe / max_mpe) * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM);
        let _ = writeln!(
            out,
            "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{bar_width:.2}\" height=\"{height:.2}\" fill=\"{color}\"/>",
            cx - bar_width / 2.0,
            y0 - height
        );
        let label: String = s
            .key
            .iter()
            .map(|(_, v)| v.as_str())
            .collect::<Vec<_>>()
            .join("/");
        let label = if label.is_empty() { "all".to_string() } else { label };
        let _ = writeln!(
            out,
            "<text x=\"{cx:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>",
            y0 + 16.0,
            xml_escape(&label)
        );
        let _ = writeln!(
            out,
            "<text x=\"{cx:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>",
            y0 - height - 6.0,
            xml_escape(&fmt_sig6(s.mpe))
        );
    }
    let _ = writeln!(
        out,
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">median prediction error by group</text>",
        (MARGIN_LEFT + WIDTH - MARGIN_RIGHT) / 2.0,
        HEIGHT - 14.0
    );
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::{summarize, ErrorRecord, GroupKey};

    fn sample_summaries() -> Vec<ErrorSummary> {
        let records = vec![
            ErrorRecord::new("wf", "t1", "n1", "lotaru", 105.0, 100.0).unwrap(),
            ErrorRecord::new("wf", "t2", "n1", "lotaru", 90.0, 100.0).unwrap(),
            ErrorRecord::new("wf", "t1", "n1", "naive", 150.0, 100.0).unwrap(),
            ErrorRecord::new("wf", "t2", "n1", "naive", 60.0, 100.0).unwrap(),
        ];
        summarize(&records, &[GroupKey::Estimator]).unwrap()
    }

    fn sample_cdfs() -> Vec<LabeledCdf> {
        vec![
            LabeledCdf {
                label: "lotaru".into(),
                points: vec![(0.05, 0.5), (0.10, 1.0)],
            },
            LabeledCdf {
                label: "naive".into(),
                points: vec![(0.40, 0.5), (0.50, 1.0)],
            },
        ]
    }

    #[test]
    fn csv_report_shape() {
        let dir = tempfile::tempdir().unwrap();
        let files = emit_report(&sample_summaries(), &sample_cdfs(), ReportFormat::Csv, dir.path())
            .unwrap();
        assert_eq!(files.len(), 2);
        let summaries = std::fs::read_to_string(&files[0]).unwrap();
        let mut lines = summaries.lines();
        assert_eq!(
            lines.next().unwrap(),
            "estimator,mpe,mean,p50,p75,p90,p95,min,max,stddev,count"
        );
        assert_eq!(lines.count(), 2);
        let cdf = std::fs::read_to_string(&files[1]).unwrap();
        assert!(cdf.starts_with("label,err,fraction\n"));
        assert_eq!(cdf.lines().count(), 1 + 4);
    }

    #[test]
    fn svg_report_is_produced_and_closed() {
        let dir = tempfile::tempdir().unwrap();
        let files = emit_report(&sample_summaries(), &sample_cdfs(), ReportFormat::Svg, dir.path())
            .unwrap();
        assert_eq!(files.len(), 2);
        for file in files {
            let content = std::fs::read_to_string(file).unwrap();
            assert!(content.starts_with("<svg "));
            assert!(content.trim_end().ends_with("</svg>"));
            // Every element is either self-closing or a balanced svg/text pair;
            // the integration suite runs a full tag-balance check.
            assert_eq!(content.matches("<svg ").count(), 1);
        }
    }

    #[test]
    fn empty_summaries_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            emit_report(&[], &[], ReportFormat::Csv, dir.path()),
            Err(EvaluationError::Empty)
        ));
    }

    #[test]
    fn unwritable_path_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let file_as_dir = dir.path().join("occupied");
        std::fs::write(&file_as_dir, "x").unwrap();
        let err = emit_report(
            &sample_summaries(),
            &[],
            ReportFormat::Csv,
            &file_as_dir,
        )
        .unwrap_err();
        assert!(matches!(err, EvaluationError::Io(_)));
    }

    #[test]
    fn reports_are_deterministic() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        for format in [ReportFormat::Csv, ReportFormat::Svg] {
            let a = emit_report(&sample_summaries(), &sample_cdfs(), format, dir_a.path()).unwrap();
            let b = emit_report(&sample_summaries(), &sample_cdfs(), format, dir_b.path()).unwrap();
            for (fa, fb) in a.iter().zip(&b) {
                assert_eq!(std::fs::read(fa).unwrap(), std::fs::read(fb).unwrap());
            }
        }
    }

    #[test]
    fn labels_are_xml_escaped() {
        let cdfs = vec![LabeledCdf {
            label: "a<b&c>\"d\"".into(),
            points: vec![(0.1, 1.0)],
        }];
        let svg = cdf_svg(&cdfs);
        assert!(svg.contains("a&lt;b&amp;c&gt;&quot;d&quot;"));
        assert!(!svg.contains("a<b"));
    }
}
