//! Final evaluation reports: a flat (method, lambda, metric) record set
//! emitted as CSV for machines and as a pivoted table for humans, plus
//! the transferred-representation export.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{Real, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub method: String,
    pub lambda: Real,
    pub metric: String,
    pub value: Real,
}

/// Accumulates metric rows across runs; one entry per
/// (method, lambda, metric).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub entries: Vec<ReportEntry>,
}

impl EvalReport {
    pub fn push(&mut self, method: &str, lambda: Real, metric: &str, value: Real) {
        self.entries.push(ReportEntry {
            method: method.to_string(),
            lambda,
            metric: metric.to_string(),
            value,
        });
    }

    /// Values appear both raw and scaled by 100, the scale most papers
    /// quote ranking and F1 numbers in.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,lambda,metric,value,value_x100\n");
        for e in &self.entries {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                e.method,
                e.lambda,
                e.metric,
                e.value,
                e.value * 100.0
            ));
        }
        out
    }

    /// Pivoted view: metric rows, one column per (method, lambda) pair
    /// in first-appearance order, cells as `raw (x100)`.
    pub fn to_table(&self) -> String {
        let mut columns: Vec<(String, Real)> = Vec::new();
        let mut metrics: Vec<String> = Vec::new();
        for e in &self.entries {
            let col = (e.method.clone(), e.lambda);
            if !columns.contains(&col) {
                columns.push(col);
            }
            if !metrics.contains(&e.metric) {
                metrics.push(e.metric.clone());
            }
        }
        let header: Vec<String> = std::iter::once("metric".to_string())
            .chain(columns.iter().map(|(m, l)| format!("{m} lambda={l}")))
            .collect();

        let cell = |metric: &str, col: &(String, Real)| -> String {
            self.entries
                .iter()
                .find(|e| e.metric == metric && e.method == col.0 && e.lambda == col.1)
                .map_or("-".to_string(), |e| {
                    format!("{:.4} ({:.2})", e.value, e.value * 100.0)
                })
        };
        let rows: Vec<Vec<String>> = metrics
            .iter()
            .map(|metric| {
                std::iter::once(metric.clone())
                    .chain(columns.iter().map(|col| cell(metric, col)))
                    .collect()
            })
            .collect();

        let mut widths: Vec<usize> = header.iter().map(String::len).collect();
        for row in &rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.len());
            }
        }
        let render = |row: &[String]| -> String {
            row.iter()
                .zip(&widths)
                .map(|(cell, w)| format!("{cell:<w$}"))
                .collect::<Vec<_>>()
                .join("  ")
                .trim_end()
                .to_string()
        };
        let mut out = render(&header);
        out.push('\n');
        out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
        out.push('\n');
        for row in &rows {
            out.push_str(&render(row));
            out.push('\n');
        }
        out
    }
}

/// Writes one line per user: `user_id<TAB>v1,...,vk` with the user's
/// transferred representation row.
pub fn write_embeddings(path: &Path, users: &[u32], x: &Tensor) -> Result<()> {
    if users.len() != x.rows() {
        return Err(Error::contract(format!(
            "{} users for {} representation rows",
            users.len(),
            x.rows()
        )));
    }
    let mut out = BufWriter::new(File::create(path)?);
    for (i, &u) in users.iter().enumerate() {
        let values: Vec<String> = x.row(i).iter().map(|v| format!("{v}")).collect();
        writeln!(out, "{u}\t{}", values.join(","))?;
    }
    out.flush()?;
    Ok(())
}
