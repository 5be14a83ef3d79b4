use std::io::Write;
use std::path::Path;

use pursuit_core::trajectory_io::atomic_write;

use crate::analyze::{CURVES_HEADER, STATS_HEADER};
use crate::common::CliError;
use crate::ReportArgs;

pub const REPORT_CURVES_HEADER: &str = "condition,pair,channel,library_size,rho_mean,rho_sd";

fn read_csv(path: &Path, expected_header: &str) -> Result<Vec<Vec<String>>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == expected_header => {}
        _ => {
            return Err(CliError::Data(format!(
                "{}: expected header {expected_header:?}",
                path.display()
            )))
        }
    }
    let n_fields = expected_header.split(',').count();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<String> = line.split(',').map(str::to_string).collect();
        if fields.len() != n_fields {
            return Err(CliError::Data(format!(
                "{}:{}: expected {n_fields} fields, got {}",
                path.display(),
                i + 2,
                fields.len()
            )));
        }
        rows.push(fields);
    }
    Ok(rows)
}

/// Reshape analyze output: keep the aggregate curves in tidy long format and
/// render the reward table with the classic columns.
pub fn run(args: &ReportArgs) -> Result<(), CliError> {
    let curves = read_csv(&args.curves, CURVES_HEADER)?;
    let stats = read_csv(&args.stats, STATS_HEADER)?;

    std::fs::create_dir_all(&args.out_dir)
        .map_err(|e| CliError::Data(format!("{}: {e}", args.out_dir.display())))?;

    let curves_out = args.out_dir.join("report_curves.csv");
    atomic_write(&curves_out, |w| {
        writeln!(w, "{REPORT_CURVES_HEADER}")?;
        for row in &curves {
            // columns: condition,pair,channel,episode,library_size,rho_mean,rho_sd
            if row[3] == "all" {
                writeln!(
                    w,
                    "{},{},{},{},{},{}",
                    row[0], row[1], row[2], row[4], row[5], row[6]
                )?;
            }
        }
        Ok(())
    })?;

    let table_out = args.out_dir.join("report_table.txt");
    atomic_write(&table_out, |w| {
        writeln!(
            w,
            "{:<16} {:>4} {:>12} {:>8} {:>8}",
            "Condition", "N", "Mean Reward", "SD", "95% CI"
        )?;
        for row in &stats {
            let parse = |s: &str| s.parse::<f64>().unwrap_or(f64::NAN);
            writeln!(
                w,
                "{:<16} {:>4} {:>12.2} {:>8.2} {:>8.2}",
                row[0],
                row[1],
                parse(&row[2]),
                parse(&row[3]),
                parse(&row[4])
            )?;
        }
        Ok(())
    })?;

    println!(
        "wrote report_curves.csv and report_table.txt to {}",
        args.out_dir.display()
    );
    Ok(())
}
