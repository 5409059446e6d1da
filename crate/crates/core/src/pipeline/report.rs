use std::io::Write;

use super::{ComparisonRow, StrategyOutcome};
use crate::data::format_lag;
use crate::error::{Error, Result};
use crate::tndfs::Network;

const COLUMNS: [&str; 19] = [
    "timestamp",
    "model",
    "gt_allocation",
    "gt_itinerary",
    "gt_objective",
    "p_allocation",
    "p_itinerary",
    "p_objective",
    "p_count",
    "p_match",
    "m_allocation",
    "m_itinerary",
    "m_objective",
    "m_match",
    "r_allocation",
    "r_itinerary",
    "r_objective",
    "r_match",
    "mean_time_savings",
];

fn cells(o: &StrategyOutcome, with_match: bool) -> Vec<String> {
    let mut v = vec![o.key.to_string(), o.itinerary.clone(), o.objective.to_string()];
    if with_match {
        v.push(o.matches_truth.to_string());
    }
    v
}

pub fn write_comparison_csv<W: Write>(rows: &[ComparisonRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = COLUMNS.to_vec();
    header.push("chosen_expected_savings");
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![format_lag(&r.lag), r.model.clone()];
        rec.extend(cells(&r.truth, false));
        let mut p = cells(&r.proposed, false);
        p.push(r.proposed_count.to_string());
        p.push(r.proposed.matches_truth.to_string());
        rec.extend(p);
        rec.extend(cells(&r.median, true));
        rec.extend(cells(&r.robust, true));
        rec.push(r.mean_time_savings.to_string());
        rec.push(r.chosen_expected_savings.to_string());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

/// Every sampled allocation with its count, one row per rank.
pub fn write_histogram_csv<W: Write>(rows: &[ComparisonRow], net: &Network, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["timestamp", "model", "rank", "allocation", "itinerary", "count", "samples"])?;
    for r in rows {
        for (i, (key, n)) in r.histogram.iter().enumerate() {
            w.write_record([
                format_lag(&r.lag),
                r.model.clone(),
                (i + 1).to_string(),
                key.to_string(),
                key.itinerary(net),
                n.to_string(),
                r.samples.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

fn mark(o: &StrategyOutcome) -> &'static str {
    if o.matches_truth {
        "*"
    } else {
        ""
    }
}

/// Aligned text table: sample counts of the proposed solution in
/// parentheses, `*` where a strategy matches the ground truth.
pub fn format_comparison(rows: &[ComparisonRow]) -> String {
    let mut table: Vec<[String; 6]> = vec![["time", "model", "GT", "P", "M", "R"].map(String::from)];
    for r in rows {
        table.push([
            format_lag(&r.lag),
            r.model.clone(),
            r.truth.itinerary.clone(),
            format!("{} ({}){}", r.proposed.itinerary, r.proposed_count, mark(&r.proposed)),
            format!("{}{}", r.median.itinerary, mark(&r.median)),
            format!("{}{}", r.robust.itinerary, mark(&r.robust)),
        ]);
    }
    let widths: Vec<usize> = (0..6)
        .map(|c| table.iter().map(|row| row[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &table {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(cell, w)| format!("{cell:<w$}"))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}
