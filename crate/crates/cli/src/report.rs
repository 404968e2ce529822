//! Tables, plots and a markdown summary built from run records.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use snnf_core::plot::{bar_chart, line_chart, Series};
use snnf_core::{Error, Result};

use crate::ablation::Table;
use crate::experiment::RECORDS_FILE;
use crate::record::{read_records, RunRecord, RunStatus};

pub const TABLE_FILE: &str = "table.csv";
pub const ACCURACY_PLOT: &str = "accuracy_vs_steps.svg";
pub const SUMMARY_FILE: &str = "summary.md";
pub const WEIGHTS_DIR: &str = "temporal_weights";

/// Variants in first-seen order and the sorted set of `T` values.
pub fn layout(records: &[RunRecord]) -> (Vec<String>, Vec<usize>) {
    let mut variants: Vec<String> = Vec::new();
    let mut steps: Vec<usize> = Vec::new();
    for r in records {
        if !variants.contains(&r.variant) {
            variants.push(r.variant.clone());
        }
        if !steps.contains(&r.steps) {
            steps.push(r.steps);
        }
    }
    steps.sort_unstable();
    (variants, steps)
}

fn run_name(i: usize, r: &RunRecord) -> String {
    r.cell.clone().unwrap_or_else(|| format!("run{i}"))
}

pub fn accuracy_plot(table: &Table) -> String {
    let series: Vec<Series> = table
        .rows
        .iter()
        .map(|(v, cells)| Series {
            label: v.clone(),
            points: table
                .steps
                .iter()
                .zip(cells)
                .filter_map(|(&t, c)| c.map(|a| (t as f64, a)))
                .collect(),
        })
        .collect();
    line_chart("Test accuracy vs time steps", "T", "accuracy", &series)
}

/// Bar plot of a run's learned `sᵗ`, one bar per step.
pub fn weights_plot(name: &str, weights: &[f64]) -> String {
    let labels: Vec<String> = (1..=weights.len()).map(|t| t.to_string()).collect();
    bar_chart(&format!("sᵗ for {name}"), "t", "sᵗ", &labels, weights)
}

pub fn summary(records: &[RunRecord], table: &Table) -> String {
    let mut md = String::from("# Run summary\n\n## Mean final test accuracy\n\n| variant |");
    for t in &table.steps {
        let _ = write!(md, " T={t} |");
    }
    md.push_str("\n|---|");
    md.push_str(&"---|".repeat(table.steps.len()));
    md.push('\n');
    for (v, cells) in &table.rows {
        let _ = write!(md, "| {v} |");
        for c in cells {
            match c {
                Some(a) => {
                    let _ = write!(md, " {:.2}% |", 100.0 * a);
                }
                None => md.push_str(" - |"),
            }
        }
        md.push('\n');
    }
    md.push_str("\n## Runs\n\n| run | variant | T | seed | status | accuracy | sᵗ |\n|---|---|---|---|---|---|---|\n");
    for (i, r) in records.iter().enumerate() {
        let status = match &r.status {
            RunStatus::Completed => "completed".to_string(),
            RunStatus::Failed { step: Some(s), .. } => format!("failed at step {s}"),
            RunStatus::Failed { .. } => "failed".to_string(),
        };
        let acc = r.final_test_accuracy.map_or("-".into(), |a| format!("{:.2}%", 100.0 * a));
        let st = r.temporal_weights.as_ref().map_or("-".into(), |w| {
            w.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(", ")
        });
        let _ = writeln!(
            md,
            "| {} | {} | {} | {} | {status} | {acc} | {st} |",
            run_name(i, r),
            r.variant,
            r.steps,
            r.seed
        );
    }
    md
}

fn write(path: PathBuf, text: &str) -> Result<()> {
    fs::write(&path, text).map_err(|source| Error::Io { path, source })
}

/// Writes table, accuracy plot, per-run `sᵗ` plots and summary into `dir`.
/// Output depends only on `records` and `layout`.
pub fn write_report(dir: &Path, records: &[RunRecord], fixed: Option<(&[String], &[usize])>) -> Result<Table> {
    let (variants, steps) = match fixed {
        Some((v, s)) => (v.to_vec(), s.to_vec()),
        None => layout(records),
    };
    let table = Table::from_records(records, &variants, &steps);
    write(dir.join(TABLE_FILE), &table.to_csv())?;
    write(dir.join(ACCURACY_PLOT), &accuracy_plot(&table))?;
    let wdir = dir.join(WEIGHTS_DIR);
    if records.iter().any(|r| r.temporal_weights.is_some()) {
        fs::create_dir_all(&wdir).map_err(|source| Error::Io {
            path: wdir.clone(),
            source,
        })?;
    }
    for (i, r) in records.iter().enumerate() {
        if let Some(w) = &r.temporal_weights {
            let name = run_name(i, r);
            write(wdir.join(format!("{name}.svg")), &weights_plot(&name, w))?;
        }
    }
    write(dir.join(SUMMARY_FILE), &summary(records, &table))?;
    Ok(table)
}

/// `report --dir`: reads `<dir>/records.jsonl` and regenerates the artefacts.
pub fn report_dir(dir: &Path) -> Result<Table> {
    let path = dir.join(RECORDS_FILE);
    if !path.is_file() {
        return Err(Error::Config(format!("no {} in {}", RECORDS_FILE, dir.display())));
    }
    let records = read_records(&path)?;
    if records.is_empty() {
        return Err(Error::Config(format!("{} holds no records", path.display())));
    }
    write_report(dir, &records, None)
}
