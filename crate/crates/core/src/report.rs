//! Model tables and flat-file outputs.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::growth::{ArmaxFit, ResidualDiagnostics};
use crate::survival::{CoxFit, KMCurve};

/// Significance marker for a two-sided p-value.
pub fn stars(p: f64) -> &'static str {
    if !p.is_finite() {
        ""
    } else if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    }
}

fn tidy(s: String) -> String {
    // a rounded negative zero prints as plain zero
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        s[1..].to_string()
    } else {
        s
    }
}

pub fn fixed(x: f64, decimals: usize) -> String {
    if !x.is_finite() {
        return "NA".to_string();
    }
    tidy(format!("{x:.decimals$}"))
}

/// `x` rounded to `digits` significant digits, trailing zeros kept.
pub fn significant(x: f64, digits: usize) -> String {
    if !x.is_finite() {
        return "NA".to_string();
    }
    if x == 0.0 {
        return format!("{:.*}", digits.saturating_sub(1), 0.0);
    }
    let mag = x.abs().log10().floor() as i32;
    let mut decimals = (digits as i32 - 1 - mag).max(0) as usize;
    let s = format!("{x:.decimals$}");
    // rounding may carry into a new leading digit, e.g. 0.99996 -> 1.0000
    let rounded: f64 = s.parse().unwrap_or(x);
    if rounded != 0.0 && rounded.abs().log10().floor() as i32 > mag && decimals > 0 {
        decimals -= 1;
        return tidy(format!("{x:.decimals$}"));
    }
    tidy(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableKind {
    /// Raw coefficients, fixed four decimals.
    Growth,
    /// Exponentiated coefficients with raw standard errors.
    Persistence,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    /// Displayed value: a coefficient, or a hazard ratio in persistence tables.
    pub value: f64,
    pub se: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub variable: String,
    pub cells: Vec<Option<Cell>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelTable {
    pub title: String,
    pub kind: TableKind,
    pub columns: Vec<String>,
    pub rows: Vec<TableRow>,
    pub loglik: Vec<Option<f64>>,
    pub aic: Vec<Option<f64>>,
    pub n_obs: Vec<Option<usize>>,
}

impl ModelTable {
    fn assemble(
        title: &str,
        kind: TableKind,
        columns: Vec<String>,
        coefficients: Vec<Option<Vec<(String, Cell)>>>,
        loglik: Vec<Option<f64>>,
        aic: Vec<Option<f64>>,
        n_obs: Vec<Option<usize>>,
    ) -> Self {
        let mut variables: Vec<String> = Vec::new();
        for (name, _) in coefficients.iter().flatten().flatten() {
            if !variables.contains(name) {
                variables.push(name.clone());
            }
        }
        let rows = variables
            .into_iter()
            .map(|v| TableRow {
                cells: coefficients
                    .iter()
                    .map(|c| c.as_ref().and_then(|c| c.iter().find(|(n, _)| *n == v).map(|(_, cell)| *cell)))
                    .collect(),
                variable: v,
            })
            .collect();
        Self {
            title: title.to_string(),
            kind,
            columns,
            rows,
            loglik,
            aic,
            n_obs,
        }
    }

    /// One column per class; the intercept row comes last.
    pub fn growth(title: &str, fits: &[(&str, Option<&ArmaxFit>)]) -> Self {
        let coefficients = fits
            .iter()
            .map(|(_, f)| {
                f.map(|f| {
                    let mut v: Vec<(String, Cell)> = f
                        .coefficients
                        .iter()
                        .map(|c| {
                            (
                                c.name.clone(),
                                Cell {
                                    value: c.estimate,
                                    se: c.se,
                                    p_value: c.p_value,
                                },
                            )
                        })
                        .collect();
                    if !v.is_empty() {
                        let intercept = v.remove(0);
                        v.push(intercept);
                    }
                    v
                })
            })
            .collect();
        Self::assemble(
            title,
            TableKind::Growth,
            fits.iter().map(|(n, _)| n.to_string()).collect(),
            coefficients,
            fits.iter().map(|(_, f)| f.map(|f| f.loglik)).collect(),
            fits.iter().map(|(_, f)| f.map(|f| f.aic)).collect(),
            fits.iter().map(|(_, f)| f.map(|f| f.n_obs)).collect(),
        )
    }

    pub fn persistence(title: &str, fits: &[(&str, Option<&CoxFit>)]) -> Self {
        let coefficients = fits
            .iter()
            .map(|(_, f)| {
                f.map(|f| {
                    f.coefficients
                        .iter()
                        .map(|c| {
                            (
                                c.name.clone(),
                                Cell {
                                    value: c.estimate.exp(),
                                    se: c.se,
                                    p_value: c.p_value,
                                },
                            )
                        })
                        .collect()
                })
            })
            .collect();
        Self::assemble(
            title,
            TableKind::Persistence,
            fits.iter().map(|(n, _)| n.to_string()).collect(),
            coefficients,
            fits.iter().map(|(_, f)| f.map(|f| f.loglik)).collect(),
            fits.iter().map(|(_, f)| f.map(|f| f.aic)).collect(),
            fits.iter().map(|(_, f)| f.map(|f| f.n_subjects)).collect(),
        )
    }

    /// `value[stars] (se)`.
    pub fn render_cell(&self, cell: &Cell) -> String {
        match self.kind {
            TableKind::Growth => format!("{}{} ({})", fixed(cell.value, 4), stars(cell.p_value), fixed(cell.se, 4)),
            TableKind::Persistence => {
                let se = if cell.se.abs() < 0.01 { fixed(cell.se, 4) } else { significant(cell.se, 4) };
                format!("{}{} ({se})", significant(cell.value, 4), stars(cell.p_value))
            }
        }
    }

    fn render_stat(&self, v: Option<f64>) -> String {
        match (v, self.kind) {
            (None, _) => String::new(),
            (Some(x), TableKind::Growth) => fixed(x, 2),
            (Some(x), TableKind::Persistence) => significant(x, 7),
        }
    }

    /// Header, coefficient rows, then Loglik and AIC footers.
    pub fn grid(&self) -> Vec<Vec<String>> {
        let mut out = vec![std::iter::once("Variables".to_string()).chain(self.columns.iter().cloned()).collect()];
        for row in &self.rows {
            let mut line = vec![row.variable.clone()];
            line.extend(row.cells.iter().map(|c| c.as_ref().map(|c| self.render_cell(c)).unwrap_or_default()));
            out.push(line);
        }
        for (label, values) in [("Loglik", &self.loglik), ("AIC", &self.aic)] {
            let mut line = vec![label.to_string()];
            line.extend(values.iter().map(|v| self.render_stat(*v)));
            out.push(line);
        }
        out
    }

    pub fn to_text(&self) -> String {
        let grid = self.grid();
        let ncol = grid[0].len();
        let widths: Vec<usize> = (0..ncol)
            .map(|j| grid.iter().map(|r| r.get(j).map_or(0, |s| s.chars().count())).max().unwrap_or(0))
            .collect();
        let rule = "-".repeat(widths.iter().sum::<usize>() + 2 * (ncol - 1));
        let mut s = String::new();
        let _ = writeln!(s, "{}", self.title);
        let _ = writeln!(s, "{rule}");
        let footer_start = grid.len() - 2;
        for (i, row) in grid.iter().enumerate() {
            if i == 1 || i == footer_start {
                let _ = writeln!(s, "{rule}");
            }
            let cells: Vec<String> = row.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
            let _ = writeln!(s, "{}", cells.join("  ").trim_end());
        }
        let _ = writeln!(s, "{rule}");
        let note = match self.kind {
            TableKind::Growth => "Normal-theory standard errors in parentheses. * p<0.05, ** p<0.01, *** p<0.001",
            TableKind::Persistence => {
                "Hazard ratios; standard errors in parentheses are not exponentiated. * p<0.05, ** p<0.01, *** p<0.001"
            }
        };
        let _ = writeln!(s, "{note}");
        s
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in self.grid() {
            w.write_record(&row)?;
        }
        let bytes = w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Writes `<stem>.txt`, `<stem>.csv` and `<stem>.json` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(format!("{stem}.txt")), self.to_text())?;
        fs::write(dir.join(format!("{stem}.csv")), self.to_csv()?)?;
        fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

/// Serializes rows with the csv crate's serde support.
pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes rows with an explicit header; used when there may be no rows at all.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_km(path: &Path, curve: &KMCurve) -> Result<()> {
    let rows: Vec<Vec<String>> = curve
        .rows
        .iter()
        .map(|r| {
            vec![
                r.time.to_string(),
                r.survival.to_string(),
                r.lower.to_string(),
                r.upper.to_string(),
                r.at_risk.to_string(),
                r.events.to_string(),
                r.censored.to_string(),
            ]
        })
        .collect();
    write_table(path, &["t", "S", "lower", "upper", "at_risk", "events", "censored"], &rows)
}

pub fn write_diagnostics(path: &Path, diag: &ResidualDiagnostics) -> Result<()> {
    let rows: Vec<Vec<String>> = diag
        .acf
        .iter()
        .zip(&diag.pacf)
        .enumerate()
        .map(|(k, (a, p))| {
            vec![
                (k + 1).to_string(),
                a.to_string(),
                p.to_string(),
                diag.band.to_string(),
                (a.abs() > diag.band).to_string(),
            ]
        })
        .collect();
    write_table(path, &["lag", "acf", "pacf", "band", "outside"], &rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn growth_cell() {
        let t = ModelTable::assemble("g", TableKind::Growth, vec![], vec![], vec![], vec![], vec![]);
        let c = Cell {
            value: 0.2651,
            se: 0.0073,
            p_value: 1e-20,
        };
        assert_eq!(t.render_cell(&c), "0.2651*** (0.0073)");
        let z = Cell {
            value: -0.00001,
            se: 0.0,
            p_value: 0.5,
        };
        assert_eq!(t.render_cell(&z), "0.0000 (0.0000)");
    }

    #[test]
    fn persistence_cells() {
        let t = ModelTable::assemble("p", TableKind::Persistence, vec![], vec![], vec![], vec![], vec![]);
        let cell = |value, se, p| t.render_cell(&Cell { value, se, p_value: p });
        assert_eq!(cell(0.9935, 0.0003, 0.03), "0.9935* (0.0003)");
        assert_eq!(cell(1.0004, 0.0002, 0.2), "1.000 (0.0002)");
        assert_eq!(cell(1.428, 2.688, 0.9), "1.428 (2.688)");
        assert_eq!(cell(1.02, 0.017992, 0.3), "1.020 (0.01799)");
        assert_eq!(cell(0.9933, 0.0019, 0.0005), "0.9933*** (0.0019)");
    }

    #[test]
    fn significant_digits() {
        assert_eq!(significant(-15.929684, 7), "-15.92968");
        assert_eq!(significant(2065.4614, 7), "2065.461");
        assert_eq!(significant(0.99996, 4), "1.000");
    }

    #[test]
    fn empty_table_keeps_header_and_footers() {
        let t = ModelTable::growth("Growth models", &[("Winner", None), ("Also-ran", None)]);
        let g = t.grid();
        assert_eq!(g.len(), 3);
        assert_eq!(g[0], vec!["Variables", "Winner", "Also-ran"]);
        assert_eq!(g[1][0], "Loglik");
    }

    #[test]
    fn star_thresholds() {
        assert_eq!(stars(0.049), "*");
        assert_eq!(stars(0.0099), "**");
        assert_eq!(stars(0.0009), "***");
        assert_eq!(stars(0.05), "");
    }
}
