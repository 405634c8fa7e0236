//! CSV renderings of scenario reports. Floats use 17 significant digits so
//! identical runs give identical bytes.

use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::sim::run::{Comparison, ScenarioReport};

fn finish(wtr: csv::Writer<Vec<u8>>) -> Result<Vec<u8>> {
    wtr.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// `scenario_id,component,amse,sd,replications,failures`, one block per report.
pub fn summary_csv<'a>(reports: impl IntoIterator<Item = &'a ScenarioReport>) -> Result<Vec<u8>> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(["scenario_id", "component", "amse", "sd", "replications", "failures"])?;
    for report in reports {
        for row in &report.summary {
            wtr.write_record([
                row.scenario_id.clone(),
                row.component.clone(),
                fmt_f64(row.amse),
                fmt_f64(row.sd),
                row.replications.to_string(),
                row.failures.to_string(),
            ])?;
        }
    }
    finish(wtr)
}

/// Long format: one row per replication and summary label.
pub fn replications_csv<'a>(reports: impl IntoIterator<Item = &'a ScenarioReport>) -> Result<Vec<u8>> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record([
        "scenario_id",
        "replication",
        "seed",
        "status",
        "component",
        "mse",
        "acceptance_rate",
        "message",
    ])?;
    for report in reports {
        let l = report.spec.components.len();
        let labels = report.labels();
        for rep in &report.replications {
            let acceptance = rep
                .chains
                .as_ref()
                .map_or(String::new(), |c| fmt_f64(c.mean_acceptance));
            if let Some(err) = &rep.error {
                wtr.write_record([
                    report.spec.id.as_str(),
                    &(rep.index + 1).to_string(),
                    &rep.seed.to_string(),
                    "failed",
                    "",
                    "",
                    "",
                    err,
                ])?;
                continue;
            }
            for (row, label) in labels.iter().enumerate() {
                wtr.write_record([
                    report.spec.id.as_str(),
                    &(rep.index + 1).to_string(),
                    &rep.seed.to_string(),
                    "ok",
                    label,
                    &fmt_f64(rep.score(row, l)),
                    &acceptance,
                    "",
                ])?;
            }
        }
    }
    finish(wtr)
}

/// Paired AMSE table of one or more comparisons.
pub fn comparison_csv<'a>(comparisons: impl IntoIterator<Item = &'a Comparison>) -> Result<Vec<u8>> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record([
        "left_id",
        "right_id",
        "component",
        "left_amse",
        "left_sd",
        "right_amse",
        "right_sd",
        "mean_difference",
        "sd_difference",
        "pairs",
    ])?;
    for c in comparisons {
        for row in &c.rows {
            wtr.write_record([
                row.left_id.clone(),
                row.right_id.clone(),
                row.component.clone(),
                fmt_f64(row.left_amse),
                fmt_f64(row.left_sd),
                fmt_f64(row.right_amse),
                fmt_f64(row.right_sd),
                fmt_f64(row.mean_difference),
                fmt_f64(row.sd_difference),
                row.pairs.to_string(),
            ])?;
        }
    }
    finish(wtr)
}
