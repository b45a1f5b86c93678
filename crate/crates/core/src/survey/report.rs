//! Percentage table, CSV and diverging stacked-bar chart.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Keying, LikertSummary, SurveyError, SCALE};
use crate::svg::Svg;

/// Plain-text table of whole percentages, one line per (item, passage).
pub fn render_table(summary: &LikertSummary) -> String {
    let mut out = String::new();
    let n = summary.n_valid.map(|n| format!(" (n = {n})")).unwrap_or_default();
    let _ = writeln!(out, "{}: {} vs {}{n}", summary.survey, summary.passages.0, summary.passages.1);
    let pw = summary.rows.iter().map(|r| r.passage.len()).max().unwrap_or(0).max("passage".len());
    let _ = writeln!(
        out,
        "{:<13} {:<pw$} {:>4} {:>4} {:>4} {:>4} {:>9} {:>6}",
        "item", "passage", "SD", "D", "A", "SA", "disagree", "agree"
    );
    let mut negative = false;
    for r in summary.display_rows() {
        let mark = if r.keyed == Keying::Negative {
            negative = true;
            "*"
        } else {
            ""
        };
        let _ = writeln!(
            out,
            "{:<13} {:<pw$} {:>4} {:>4} {:>4} {:>4} {:>9} {:>6}",
            format!("{}{mark}", r.item),
            r.passage,
            r.strongly_disagree,
            r.disagree,
            r.agree,
            r.strongly_agree,
            r.disagreement,
            r.agreement
        );
    }
    if negative {
        out.push_str("* negatively keyed: agreement is unfavourable\n");
    }
    out
}

pub fn write_summary_csv<W: Write>(out: W, summaries: &[LikertSummary]) -> Result<(), SurveyError> {
    let mut w = csv::Writer::from_writer(out);
    for s in summaries {
        for row in s.display_rows() {
            w.serialize(row)?;
        }
    }
    w.flush()?;
    Ok(())
}

const COLORS: [&str; 4] = ["#b2182b", "#ef8a62", "#67a9cf", "#2166ac"];
const PX: f64 = 3.0;
const LABEL_W: f64 = 230.0;
const ROW_H: f64 = 22.0;

/// Diverging stacked bars: disagreement extends left of the centre line,
/// agreement to the right. Generated and original passage share an item block.
pub fn render_diverging_svg(summary: &LikertSummary) -> String {
    let center = LABEL_W + 100.0 * PX + 10.0;
    let width = center + 100.0 * PX + 60.0;
    let rows = summary.display_rows();
    let height = 70.0 + rows.len() as f64 * ROW_H + (rows.len() / 2) as f64 * 8.0 + 40.0;
    let mut svg = Svg::new(width, height);
    svg.text(
        width / 2.0,
        22.0,
        14.0,
        "middle",
        &format!("{}: {} vs {}", summary.survey, summary.passages.0, summary.passages.1),
    );
    let mut y = 50.0;
    for (i, r) in rows.iter().enumerate() {
        if i > 0 && rows[i - 1].item != r.item {
            y += 8.0;
        }
        let label = if r.keyed == Keying::Negative {
            format!("{} (neg.) / {}", r.item, r.passage)
        } else {
            format!("{} / {}", r.item, r.passage)
        };
        svg.text(LABEL_W - 6.0, y + ROW_H * 0.65, 11.0, "end", &label);
        let h = ROW_H - 4.0;
        let d = r.disagree as f64 * PX;
        let sd = r.strongly_disagree as f64 * PX;
        svg.rect(center - d, y, d, h, COLORS[1]);
        svg.rect(center - d - sd, y, sd, h, COLORS[0]);
        let a = r.agree as f64 * PX;
        let sa = r.strongly_agree as f64 * PX;
        svg.rect(center, y, a, h, COLORS[2]);
        svg.rect(center + a, y, sa, h, COLORS[3]);
        svg.text(center - d - sd - 4.0, y + ROW_H * 0.65, 10.0, "end", &format!("{}%", r.disagreement));
        svg.text(center + a + sa + 4.0, y + ROW_H * 0.65, 10.0, "start", &format!("{}%", r.agreement));
        y += ROW_H;
    }
    svg.line(center, 44.0, center, y + 2.0, "black", false);
    let mut x = LABEL_W;
    for (label, color) in SCALE.iter().zip(COLORS) {
        svg.rect(x, y + 16.0, 12.0, 12.0, color);
        svg.text(x + 16.0, y + 26.0, 11.0, "start", label);
        x += 130.0;
    }
    svg.finish()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportFiles {
    pub csv: PathBuf,
    pub tables: Vec<PathBuf>,
    pub charts: Vec<PathBuf>,
}

fn file_stem(s: &str) -> String {
    s.chars().map(|c| if c.is_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

/// Writes `likert_summary.csv` plus a text table and an SVG chart per survey.
pub fn render_report(summaries: &[LikertSummary], out_dir: impl AsRef<Path>) -> Result<ReportFiles, SurveyError> {
    if summaries.is_empty() {
        return Err(SurveyError::Empty);
    }
    let dir = out_dir.as_ref();
    fs::create_dir_all(dir)?;
    let csv_path = dir.join("likert_summary.csv");
    write_summary_csv(fs::File::create(&csv_path)?, summaries)?;
    let mut files = ReportFiles { csv: csv_path, tables: Vec::new(), charts: Vec::new() };
    for s in summaries {
        let stem = file_stem(&s.survey);
        let table = dir.join(format!("{stem}.txt"));
        fs::write(&table, render_table(s))?;
        let chart = dir.join(format!("{stem}.svg"));
        fs::write(&chart, render_diverging_svg(s))?;
        files.tables.push(table);
        files.charts.push(chart);
    }
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::survey::SurveyDefinition;

    fn summary() -> LikertSummary {
        let def = SurveyDefinition::standard("pair", "gen", "orig");
        let table: Vec<(String, String, [i64; 4])> = def
            .items
            .iter()
            .flat_map(|it| {
                [(it.id.clone(), "gen".to_owned(), [2, 6, 54, 38]), (it.id.clone(), "orig".to_owned(), [0, 4, 50, 46])]
            })
            .collect();
        LikertSummary::from_percentages(&def, Some(50), &table).unwrap()
    }

    #[test]
    fn table_lists_every_row() {
        let t = render_table(&summary());
        assert_eq!(t.lines().count(), 2 + 10 + 1);
        assert!(t.contains("distracting*"));
        assert!(t.lines().any(|l| l.starts_with("adequacy") && l.ends_with(" 92")));
    }

    #[test]
    fn report_files_written() {
        let dir = tempfile::tempdir().unwrap();
        let files = render_report(&[summary()], dir.path()).unwrap();
        let csv = fs::read_to_string(&files.csv).unwrap();
        assert_eq!(csv.lines().count(), 11);
        assert!(fs::read_to_string(&files.charts[0]).unwrap().starts_with("<svg"));
        assert!(matches!(render_report(&[], dir.path()), Err(SurveyError::Empty)));
    }
}
