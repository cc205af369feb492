//! Result tables: JSON, RFC 4180 CSV and aligned plain text.

use serde::{Deserialize, Serialize};

use crate::HarnessError;

/// Common envelope written by every evaluation command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricResult {
    pub metric: String,
    pub value: f64,
    #[serde(default)]
    pub detail: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub label: String,
    pub values: Vec<Option<f64>>,
}

/// Rows are input settings (`SENT`, `512`, ...), columns are metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub columns: Vec<String>,
    pub rows: Vec<ReportRow>,
}

impl Report {
    /// Columns appear in first-seen order across all rows.
    pub fn from_results(rows: Vec<(String, Vec<MetricResult>)>) -> Self {
        let mut columns: Vec<String> = Vec::new();
        for (_, results) in &rows {
            for r in results {
                if !columns.contains(&r.metric) {
                    columns.push(r.metric.clone());
                }
            }
        }
        let rows = rows
            .into_iter()
            .map(|(label, results)| ReportRow {
                values: columns
                    .iter()
                    .map(|c| results.iter().find(|r| &r.metric == c).map(|r| r.value))
                    .collect(),
                label,
            })
            .collect();
        Report { columns, rows }
    }

    /// Values use the shortest representation that parses back to the same
    /// `f64`; missing cells are empty.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["label".to_string()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header).unwrap();
        for row in &self.rows {
            let mut record = vec![row.label.clone()];
            record.extend(row.values.iter().map(|v| v.map(|x| x.to_string()).unwrap_or_default()));
            w.write_record(&record).unwrap();
        }
        String::from_utf8(w.into_inner().unwrap()).unwrap()
    }

    pub fn from_csv(text: &str) -> Result<Self, HarnessError> {
        let bad = |e: &dyn std::fmt::Display| HarnessError::InvalidReport(e.to_string());
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let header = r.headers().map_err(|e| bad(&e))?.clone();
        if header.get(0) != Some("label") {
            return Err(HarnessError::InvalidReport("first column must be `label`".into()));
        }
        let columns: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let mut rows = Vec::new();
        for record in r.records() {
            let record = record.map_err(|e| bad(&e))?;
            let values = record
                .iter()
                .skip(1)
                .map(|cell| {
                    if cell.is_empty() {
                        Ok(None)
                    } else {
                        cell.parse::<f64>().map(Some).map_err(|e| bad(&e))
                    }
                })
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(ReportRow {
                label: record.get(0).unwrap_or_default().to_string(),
                values,
            });
        }
        Ok(Report { columns, rows })
    }

    pub fn to_table(&self) -> String {
        let mut header = vec!["Input".to_string()];
        header.extend(self.columns.iter().cloned());
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|row| {
                let mut cells = vec![row.label.clone()];
                cells.extend(row.values.iter().map(|v| match v {
                    Some(x) if x.abs() < 1.0 && *x != 0.0 => format!("{x:.4}"),
                    Some(x) => format!("{x:.2}"),
                    None => "-".to_string(),
                }));
                cells
            })
            .collect();
        aligned_table(&header, &rows)
    }
}

/// Pads every column to its widest cell and separates columns with ` | `.
pub fn aligned_table(header: &[String], rows: &[Vec<String>]) -> String {
    let width = |s: &str| s.chars().count();
    let mut widths: Vec<usize> = header.iter().map(|h| width(h)).collect();
    for row in rows {
        for (i, cell) in row.iter().enumerate() {
            if i < widths.len() {
                widths[i] = widths[i].max(width(cell));
            }
        }
    }
    let line = |cells: &[String]| {
        cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c}{}", " ".repeat(w - width(c))))
            .collect::<Vec<_>>()
            .join(" | ")
            .trim_end()
            .to_string()
    };
    let mut out = line(header);
    out.push('\n');
    out.push_str(
        &widths
            .iter()
            .map(|w| "-".repeat(*w))
            .collect::<Vec<_>>()
            .join("-+-"),
    );
    out.push('\n');
    for row in rows {
        out.push_str(&line(row));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result(metric: &str, value: f64) -> MetricResult {
        MetricResult {
            metric: metric.into(),
            value,
            detail: serde_json::Value::Null,
        }
    }

    fn sample() -> Report {
        Report::from_results(vec![
            ("SENT".into(), vec![result("d-BLEU", 21.62), result("COMET", 0.8479)]),
            ("512".into(), vec![result("d-BLEU", 24.89), result("coverage", 0.1 + 0.2)]),
            ("a \"quoted\", label".into(), vec![]),
        ])
    }

    #[test]
    fn columns_and_missing_cells() {
        let r = sample();
        assert_eq!(r.columns, ["d-BLEU", "COMET", "coverage"]);
        assert_eq!(r.rows[1].values, [Some(24.89), None, Some(0.1 + 0.2)]);
    }

    #[test]
    fn csv_round_trip() {
        let r = sample();
        let csv = r.to_csv();
        assert!(csv.contains("\"a \"\"quoted\"\", label\""), "{csv}");
        assert_eq!(Report::from_csv(&csv).unwrap(), r);
    }

    #[test]
    fn text_table() {
        let t = sample().to_table();
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines[0], "Input             | d-BLEU | COMET  | coverage");
        assert_eq!(lines[2], "SENT              | 21.62  | 0.8479 | -");
    }

    #[test]
    fn rejects_bad_csv() {
        assert!(Report::from_csv("x,y\n1,2\n").is_err());
        assert!(Report::from_csv("label,y\nrow,abc\n").is_err());
    }
}
