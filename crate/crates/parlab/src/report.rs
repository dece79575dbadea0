//! Report assembly: named verdict rows with margins and provenance, JSON
//! emission, and deterministic CSV writers for probe data.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::Result;

/// One verdict row: what was checked, against which estimate tag, and how
/// much margin was left.
#[derive(Debug, Clone, Serialize)]
pub struct ReportRow {
    pub name: String,
    /// Estimate tag the row verifies, e.g. "(3.3)".
    pub tag: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
    /// Positive when passing with room to spare; definition depends on the
    /// row (documented in `summary`).
    pub margin: f64,
    pub summary: String,
}

#[derive(Debug, Clone, Serialize, Default)]
pub struct ReportTable {
    pub rows: Vec<ReportRow>,
    pub config_hash: String,
    pub seed: u64,
    pub max_solver_residual: f64,
}

impl ReportTable {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    /// One line per row, stable ordering.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        for r in &self.rows {
            let verdict = if r.pass { "PASS" } else { "FAIL" };
            let _ = writeln!(
                out,
                "[{verdict}] {} {}: value {:.6e}, threshold {:.6e}, margin {:.3e} ({})",
                r.name, r.tag, r.value, r.threshold, r.margin, r.summary
            );
        }
        out
    }
}

/// Renders a CSV with full-precision, locale-independent formatting so
/// identical data produces identical bytes.
pub fn render_csv(headers: &[&str], rows: &[Vec<f64>]) -> String {
    let mut out = String::new();
    out.push_str(&headers.join(","));
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn write_csv(path: &Path, headers: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    std::fs::write(path, render_csv(headers, rows))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_bytes_are_deterministic() {
        let rows = vec![vec![1.0, 0.1 + 0.2], vec![-3.5e-11, 2.0f64.sqrt()]];
        let a = render_csv(&["x", "y"], &rows);
        let b = render_csv(&["x", "y"], &rows);
        assert_eq!(a.as_bytes(), b.as_bytes());
        assert!(a.starts_with("x,y\n"));
        // full round-trip precision
        let parsed: f64 = a.lines().nth(1).unwrap().split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(parsed, 0.1 + 0.2);
    }

    #[test]
    fn report_render_and_verdict() {
        let table = ReportTable {
            rows: vec![ReportRow {
                name: "demo".into(),
                tag: "(3.3)".into(),
                value: 1e-12,
                threshold: 1e-10,
                pass: true,
                margin: 1e-10 - 1e-12,
                summary: "residual below tolerance".into(),
            }],
            config_hash: "abc".into(),
            seed: 1,
            max_solver_residual: 1e-13,
        };
        assert!(table.all_pass());
        let text = table.render_text();
        assert!(text.contains("[PASS] demo (3.3)"));
        let json = table.to_json();
        assert!(json.contains("\"config_hash\": \"abc\""));
    }
}
