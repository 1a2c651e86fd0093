//! Rendering evaluation reports as an aligned text table and as CSV.
//!
//! One row per structure (LA, LAA, LIPV, LSPV, RIPV, RSPV) and a final
//! `Total` row; one `Dice / ASSD` cell per model. Dice is printed as a
//! percentage with one decimal and ASSD in mm with three decimals; missing
//! values print as `n/a`.

use std::fmt::Write as _;

use crate::metrics::{ClassSelector, EvaluationReport};

const NAME_WIDTH: usize = 9;
const DICE_WIDTH: usize = 7;
const ASSD_WIDTH: usize = 8;
const SEP: &str = " / ";

pub fn fmt_dice(dice: Option<f64>) -> String {
    dice.map_or_else(|| "n/a".to_string(), |d| format!("{:.1}", d * 100.0))
}

pub fn fmt_assd(assd: Option<f64>) -> String {
    assd.map_or_else(|| "n/a".to_string(), |a| format!("{a:.3}"))
}

/// Plain-text table. With no models only the header is produced.
pub fn format_report(rows: &[(String, EvaluationReport)]) -> String {
    let group = DICE_WIDTH + SEP.len() + ASSD_WIDTH;
    let mut out = String::new();

    let mut title = format!("{:<NAME_WIDTH$}", "");
    let mut header = format!("{:<NAME_WIDTH$}", "Structure");
    for (name, _) in rows {
        let _ = write!(title, " | {name:^group$}");
        let _ = write!(header, " | {:>DICE_WIDTH$}{SEP}{:<ASSD_WIDTH$}", "Dice(%)", "ASSD(mm)");
    }
    out.push_str(title.trim_end());
    out.push('\n');
    out.push_str(header.trim_end());
    out.push('\n');
    if rows.is_empty() {
        return out;
    }
    out.push_str(&"-".repeat(header.trim_end().chars().count()));
    out.push('\n');

    for sel in ClassSelector::all() {
        let mut line = format!("{:<NAME_WIDTH$}", sel.name());
        for (_, report) in rows {
            let s = report.score(sel);
            let _ = write!(
                line,
                " | {:>DICE_WIDTH$}{SEP}{:<ASSD_WIDTH$}",
                fmt_dice(s.dice),
                fmt_assd(s.assd)
            );
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

/// The same numbers as [`format_report`], one line per (model, structure).
pub fn format_report_csv(rows: &[(String, EvaluationReport)]) -> String {
    let mut out = String::from("model,structure,dice_percent,assd_mm,dice_count,assd_count,assd_excluded\n");
    for (name, report) in rows {
        for sel in ClassSelector::all() {
            let s = report.score(sel);
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                csv_field(name),
                sel.name(),
                fmt_dice(s.dice),
                fmt_assd(s.assd),
                s.dice_count,
                s.assd_count,
                s.assd_excluded
            );
        }
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
