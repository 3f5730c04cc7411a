//! CSV tables and JSON reports. Outputs carry no timestamps or host
//! details, so identical inputs and flags give byte-identical files.

use std::io::{self, Write};

use serde::Serialize;

use crate::eval::{AttackResult, ExperimentConfig, SweepTable, UserProfileStats, SEED_DERIVATION};
use crate::ingest::{Dataset, DatasetStats, FilterStep};

pub const RESULT_HEADER: [&str; 7] = [
    "class",
    "m",
    "n_users",
    "n_venues",
    "ratio",
    "accuracy_mean",
    "accuracy_stderr",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn result_rows(r: &AttackResult) -> impl Iterator<Item = Vec<String>> + '_ {
    r.per_m.iter().map(move |t| {
        vec![
            r.class.clone(),
            t.m.to_string(),
            r.n_users.to_string(),
            r.n_venues.to_string(),
            r.users_per_venue.to_string(),
            t.accuracy_mean.to_string(),
            t.accuracy_stderr.to_string(),
        ]
    })
}

/// One row per (class, m).
pub fn write_results_csv<'a, W: Write>(
    out: W,
    results: impl IntoIterator<Item = &'a AttackResult>,
) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RESULT_HEADER)?;
    for r in results {
        for row in result_rows(r) {
            w.write_record(&row)?;
        }
    }
    w.flush()
}

/// Result rows plus a `relative_accuracy` column; the baseline comes first.
/// Absent cells keep their class and m with `n_users` 0 and empty values.
pub fn write_sweep_csv<W: Write>(out: W, table: &SweepTable) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = RESULT_HEADER.to_vec();
    header.push("relative_accuracy");
    w.write_record(&header)?;
    for row in result_rows(&table.baseline) {
        let mut row = row;
        let base = row[5].parse::<f64>().ok().filter(|a| *a > 0.0);
        row.push(opt(base.map(|_| 1.0)));
        w.write_record(&row)?;
    }
    let max_m = table.baseline.per_m.len();
    for cell in &table.cells {
        match &cell.result {
            Some(r) => {
                for (row, rel) in result_rows(r).zip(&cell.relative_accuracy) {
                    let mut row = row;
                    row.push(opt(*rel));
                    w.write_record(&row)?;
                }
            }
            None => {
                for m in 1..=max_m {
                    w.write_record([cell.class.as_str(), &m.to_string(), "0", "", "", "", "", ""])?;
                }
            }
        }
    }
    w.flush()
}

pub fn write_profiles_csv<W: Write>(out: W, profiles: &[UserProfileStats]) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["user_id", "entropy_bits", "per_user_accuracy", "n_checkins"])?;
    for p in profiles {
        w.write_record([
            p.user_id.as_str(),
            &p.entropy_bits.to_string(),
            &opt(p.per_user_accuracy),
            &p.n_checkins.to_string(),
        ])?;
    }
    w.flush()
}

#[derive(Debug, Serialize)]
pub struct DatasetInfo {
    pub region: String,
    pub lineage: Vec<FilterStep>,
    pub stats: DatasetStats,
}

impl From<&Dataset> for DatasetInfo {
    fn from(ds: &Dataset) -> Self {
        Self {
            region: ds.region.clone(),
            lineage: ds.lineage.clone(),
            stats: ds.stats(),
        }
    }
}

/// Modelling choices recorded in every report.
#[derive(Debug, Serialize)]
pub struct Notes {
    pub popularity_source: &'static str,
    pub vocabulary: &'static str,
    pub held_out_pool: &'static str,
    pub candidates: &'static str,
    pub seed_derivation: &'static str,
}

pub const NOTES: Notes = Notes {
    popularity_source: "in-dataset",
    vocabulary: "|L| is the number of venues of the class-filtered per-region dataset",
    held_out_pool: "each repetition holds out max_test_size check-ins per user; training is all remaining in-class check-ins; test size m uses the first m held-out check-ins",
    candidates: "closed world: candidates are exactly the eligible users of the class-filtered dataset",
    seed_derivation: SEED_DERIVATION,
};

#[derive(Debug, Serialize)]
pub struct Report<'a, T: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub config: &'a ExperimentConfig,
    pub dataset: DatasetInfo,
    pub notes: &'a Notes,
    pub result: T,
}

impl<'a, T: Serialize> Report<'a, T> {
    pub fn new(
        command: &'a str,
        config: &'a ExperimentConfig,
        dataset: &Dataset,
        result: T,
    ) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            config,
            dataset: dataset.into(),
            notes: &NOTES,
            result,
        }
    }

    pub fn write<W: Write>(&self, mut out: W) -> io::Result<()> {
        serde_json::to_writer_pretty(&mut out, self)?;
        writeln!(out)
    }
}
