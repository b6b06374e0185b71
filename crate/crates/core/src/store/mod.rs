//! Run directories: configuration, baseline, an append-only iteration log in
//! both CSV and JSON lines, and the derived reports.
//!
//! Layout:
//!
//! ```text
//! run_dir/
//!   config.json
//!   baseline.json
//!   iterations.csv        iteration,batch_ids,s_before,s_candidate,delta_s,theta,accepted,checkpoint,wall_time_s
//!   iterations.jsonl      one IterationRecord per line
//!   run.json              the full RunRecord, written when the run finishes
//!   report.json           written by `write_report`
//!   series_normalized.csv
//! ```

mod ratings;
mod report;

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::controller::{RunObserver, RunRecord};
use crate::error::{Error, Result};
use crate::types::{IterationRecord, PerformanceState, RunConfig};

pub use ratings::{
    aggregate_ratings, Criterion, CriterionSummary, Phase, Rating, RatingsTable,
};
pub use report::{build_report, write_report, MetricRow, NormalizedSeries, Report, TimelineEntry};

pub const CONFIG_FILE: &str = "config.json";
pub const BASELINE_FILE: &str = "baseline.json";
pub const ITERATIONS_CSV: &str = "iterations.csv";
pub const ITERATIONS_JSONL: &str = "iterations.jsonl";
pub const RUN_FILE: &str = "run.json";
pub const REPORT_FILE: &str = "report.json";
pub const SERIES_FILE: &str = "series_normalized.csv";

const CSV_HEADER: [&str; 9] = [
    "iteration",
    "batch_ids",
    "s_before",
    "s_candidate",
    "delta_s",
    "theta",
    "accepted",
    "checkpoint",
    "wall_time_s",
];

fn write_json_atomic<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let tmp = path.with_extension("json.tmp");
    let mut file = File::create(&tmp).map_err(|e| Error::file(&tmp, e))?;
    serde_json::to_writer_pretty(&mut file, value)?;
    file.write_all(b"\n").map_err(|e| Error::file(&tmp, e))?;
    file.sync_all().map_err(|e| Error::file(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::file(path, e))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| Error::file(path, e))?;
    serde_json::from_reader(BufReader::new(file))
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

fn read_iterations(path: &Path) -> Result<Vec<IterationRecord>> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(Error::file(path, e)),
    };
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::file(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line)
            .map_err(|e| Error::Data(format!("{}:{}: {e}", path.display(), n + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

/// Writer for one run directory. Only one writer should own a directory at
/// a time; readers can load it concurrently and will see every record whose
/// append has returned.
#[derive(Debug)]
pub struct RunStore {
    dir: PathBuf,
    csv: Option<csv::Writer<File>>,
    jsonl: Option<File>,
    next_iteration: u32,
}

impl RunStore {
    /// Prepares `dir` for a new run, creating it if needed. Fails if the
    /// directory already holds a run.
    pub fn create(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| Error::file(&dir, e))?;
        for name in [BASELINE_FILE, ITERATIONS_JSONL] {
            if dir.join(name).exists() {
                return Err(Error::Config(format!(
                    "{} already contains a run",
                    dir.display()
                )));
            }
        }
        Ok(RunStore {
            dir,
            csv: None,
            jsonl: None,
            next_iteration: 1,
        })
    }

    /// Reopens an existing run for appending; numbering continues after the
    /// last stored iteration.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        if !dir.join(BASELINE_FILE).exists() {
            return Err(Error::MissingBaseline(dir));
        }
        let last = read_iterations(&dir.join(ITERATIONS_JSONL))?
            .last()
            .map_or(0, |r| r.iteration);
        let mut store = RunStore {
            dir,
            csv: None,
            jsonl: None,
            next_iteration: last + 1,
        };
        store.open_logs(false)?;
        Ok(store)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn next_iteration(&self) -> u32 {
        self.next_iteration
    }

    fn open_logs(&mut self, truncate: bool) -> Result<()> {
        let csv_path = self.dir.join(ITERATIONS_CSV);
        let write_header = truncate || !csv_path.exists();
        let mut opts = OpenOptions::new();
        opts.create(true);
        if truncate {
            opts.write(true).truncate(true);
        } else {
            opts.append(true);
        }
        let csv_file = opts.open(&csv_path).map_err(|e| Error::file(&csv_path, e))?;
        let mut csv = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(csv_file);
        if write_header {
            csv.write_record(CSV_HEADER)?;
            csv.flush().map_err(|e| Error::file(&csv_path, e))?;
        }
        let jsonl_path = self.dir.join(ITERATIONS_JSONL);
        let jsonl = opts
            .open(&jsonl_path)
            .map_err(|e| Error::file(&jsonl_path, e))?;
        self.csv = Some(csv);
        self.jsonl = Some(jsonl);
        Ok(())
    }

    /// Writes the configuration and baseline and starts empty logs.
    pub fn init(&mut self, config: &RunConfig, baseline: &PerformanceState) -> Result<()> {
        write_json_atomic(&self.dir.join(CONFIG_FILE), config)?;
        write_json_atomic(&self.dir.join(BASELINE_FILE), baseline)?;
        self.open_logs(true)?;
        self.next_iteration = 1;
        Ok(())
    }

    /// Appends one record to both logs and syncs them before returning.
    pub fn persist_iteration(&mut self, rec: &IterationRecord) -> Result<()> {
        if rec.iteration != self.next_iteration {
            return Err(Error::Data(format!(
                "iteration {} out of order; expected {}",
                rec.iteration, self.next_iteration
            )));
        }
        let (Some(csv), Some(jsonl)) = (self.csv.as_mut(), self.jsonl.as_mut()) else {
            return Err(Error::Data(format!(
                "{} has not been initialized",
                self.dir.display()
            )));
        };
        csv.write_record([
            rec.iteration.to_string(),
            rec.batch_ids.join(";"),
            rec.s_before.to_string(),
            rec.s_after_candidate.to_string(),
            rec.delta_s.to_string(),
            rec.theta.to_string(),
            rec.accepted.to_string(),
            rec.checkpoint_ref.0.clone(),
            rec.wall_time_s.to_string(),
        ])?;
        csv.flush()?;
        csv.get_ref().sync_data()?;

        let mut line = serde_json::to_vec(rec)?;
        line.push(b'\n');
        jsonl.write_all(&line)?;
        jsonl.sync_data()?;
        self.next_iteration += 1;
        Ok(())
    }

    pub fn finish(&mut self, record: &RunRecord) -> Result<()> {
        write_json_atomic(&self.dir.join(RUN_FILE), record)
    }
}

impl RunObserver for RunStore {
    fn baseline(&mut self, config: &RunConfig, state: &PerformanceState) -> Result<()> {
        self.init(config, state)
    }

    fn iteration(&mut self, record: &IterationRecord) -> Result<()> {
        self.persist_iteration(record)
    }

    fn finished(&mut self, record: &RunRecord) -> Result<()> {
        self.finish(record)
    }
}

/// Loads a run, finished or not. An unfinished run is rebuilt from the
/// baseline and the iteration log.
pub fn load_record(dir: &Path) -> Result<RunRecord> {
    let run_path = dir.join(RUN_FILE);
    if run_path.exists() {
        return read_json(&run_path);
    }
    let baseline_path = dir.join(BASELINE_FILE);
    if !baseline_path.exists() {
        return Err(Error::MissingBaseline(dir.to_path_buf()));
    }
    let baseline: PerformanceState = read_json(&baseline_path)?;
    let config: RunConfig = read_json(&dir.join(CONFIG_FILE))?;
    let iterations = read_iterations(&dir.join(ITERATIONS_JSONL))?;

    let mut final_state = baseline.clone();
    let mut accepted_count = 0;
    for rec in iterations.iter().filter(|r| r.accepted) {
        accepted_count += 1;
        final_state = PerformanceState {
            iteration: rec.iteration,
            s_value: rec.s_after_candidate,
            snapshot: rec
                .candidate
                .clone()
                .ok_or_else(|| {
                    Error::Data(format!(
                        "accepted iteration {} has no candidate metrics",
                        rec.iteration
                    ))
                })?,
        };
    }
    Ok(RunRecord {
        config,
        baseline,
        iterations,
        final_state,
        accepted_count,
    })
}

/// Parses `iterations.csv` back into rows of raw fields, for tools that only
/// want the human-readable log.
pub fn read_iterations_csv(dir: &Path) -> Result<Vec<csv::StringRecord>> {
    let path = dir.join(ITERATIONS_CSV);
    let file = File::open(&path).map_err(|e| Error::file(&path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let header = reader.headers()?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::Data(format!(
            "{}: unexpected header {:?}",
            path.display(),
            header
        )));
    }
    reader
        .records()
        .map(|r| r.map_err(Error::from))
        .collect()
}
