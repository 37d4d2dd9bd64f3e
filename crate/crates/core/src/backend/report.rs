//! EER tables (systems by test condition) as text and SVG.

use std::fmt::Write;


#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub system: String,
    /// EER as a fraction, or the reason the cell failed.
    pub cells: Vec<Result<f64, String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateTable {
    pub columns: Vec<String>,
    pub rows: Vec<ReportRow>,
    /// Append the mean over each row's cells.
    pub with_average: bool,
}

/// Collects per-cell results into a table; failed cells are kept and
/// reported, not propagated.
pub fn rate_sweep_report<E: std::fmt::Display>(
    columns: Vec<String>,
    systems: Vec<(String, Vec<Result<f64, E>>)>,
    with_average: bool,
) -> RateTable {
    let rows = systems
        .into_iter()
        .map(|(system, cells)| ReportRow {
            system,
            cells: cells
                .into_iter()
                .map(|c| c.map_err(|e| e.to_string()))
                .collect(),
        })
        .collect();
    RateTable {
        columns,
        rows,
        with_average,
    }
}

impl ReportRow {
    /// Mean over all cells, if none failed.
    pub fn average(&self) -> Option<f64> {
        let ok: Vec<f64> = self.cells.iter().filter_map(|c| c.as_ref().ok().copied()).collect();
        (ok.len() == self.cells.len() && !ok.is_empty()).then(|| ok.iter().sum::<f64>() / ok.len() as f64)
    }
}

fn cell(v: Option<f64>) -> String {
    v.map(|e| format!("{:.2}", 100.0 * e)).unwrap_or_else(|| "err".into())
}

impl RateTable {
    /// Aligned text with EER in percent; failures listed under the table.
    pub fn to_text(&self) -> String {
        let mut header = vec!["system".to_string()];
        header.extend(self.columns.iter().cloned());
        if self.with_average {
            header.push("Average".into());
        }
        let mut lines = vec![header];
        let mut failures = Vec::new();
        for r in &self.rows {
            let mut line = vec![r.system.clone()];
            for (c, v) in self.columns.iter().zip(&r.cells) {
                if let Err(e) = v {
                    failures.push(format!("{} @ {c}: {e}", r.system));
                }
                line.push(cell(v.as_ref().ok().copied()));
            }
            if self.with_average {
                line.push(cell(r.average()));
            }
            lines.push(line);
        }
        let widths: Vec<usize> = (0..lines[0].len())
            .map(|k| lines.iter().map(|l| l[k].len()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for l in &lines {
            let mut parts = Vec::new();
            for (k, s) in l.iter().enumerate() {
                parts.push(if k == 0 {
                    format!("{s:<w$}", w = widths[k])
                } else {
                    format!("{s:>w$}", w = widths[k])
                });
            }
            out.push_str(parts.join("  ").trim_end());
            out.push('\n');
        }
        for f in failures {
            let _ = writeln!(out, "# failed: {f}");
        }
        out
    }

    /// Line plot of EER (%) per column, one polyline per system.
    pub fn to_svg(&self) -> String {
        let (w, h) = (640.0, 400.0);
        let (l, r, t, b) = (60.0, 150.0, 20.0, 50.0);
        let pw = w - l - r;
        let ph = h - t - b;
        let max = self
            .rows
            .iter()
            .flat_map(|row| row.cells.iter().filter_map(|c| c.as_ref().ok()))
            .fold(0.0f64, |m, &v| m.max(100.0 * v));
        let ymax = if max > 0.0 { max * 1.1 } else { 1.0 };
        let n = self.columns.len().max(2);
        let x = |i: usize| l + pw * i as f64 / (n - 1) as f64;
        let y = |v: f64| t + ph * (1.0 - 100.0 * v / ymax);
        let colors = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

        let mut s = String::new();
        let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="11">"#);
        let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
        let _ = writeln!(s, r#"<line x1="{l}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#, t + ph, l + pw, t + ph);
        let _ = writeln!(s, r#"<line x1="{l}" y1="{t}" x2="{l}" y2="{}" stroke="black"/>"#, t + ph);
        for (i, c) in self.columns.iter().enumerate() {
            let _ = writeln!(s, r#"<text x="{:.1}" y="{}" text-anchor="middle">{c}</text>"#, x(i), t + ph + 16.0);
        }
        for k in 0..=4 {
            let v = ymax * k as f64 / 4.0;
            let yy = t + ph * (1.0 - k as f64 / 4.0);
            let _ = writeln!(s, r#"<text x="{}" y="{yy:.1}" text-anchor="end">{v:.1}</text>"#, l - 6.0);
        }
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">EER (%)</text>"#, 14.0, t + ph / 2.0);
        for (ri, row) in self.rows.iter().enumerate() {
            let color = colors[ri % colors.len()];
            let pts: Vec<String> = row
                .cells
                .iter()
                .enumerate()
                .filter_map(|(i, c)| c.as_ref().ok().map(|&v| format!("{:.1},{:.1}", x(i), y(v))))
                .collect();
            let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, pts.join(" "));
            let ly = t + 14.0 * (ri as f64 + 1.0);
            let _ = writeln!(s, r#"<text x="{}" y="{ly:.1}" fill="{color}">{}</text>"#, l + pw + 10.0, row.system);
        }
        s.push_str("</svg>\n");
        s
    }
}
