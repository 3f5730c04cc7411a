//! Parsing, validation, region labelling and activity filtering of raw
//! check-in and venue files.
//!
//! The on-disk formats are plain comma-delimited text with a header row:
//!
//! ```text
//! user_id,venue_id,timestamp,lat,lon[,region]
//! venue_id,category,lat,lon
//! code,lat_min,lat_max,lon_min,lon_max
//! ```

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{self, File};
use std::io::{self, BufReader, Read, Write};
use std::path::Path;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default activity threshold: a user is active with at least this many check-ins.
pub const DEFAULT_MIN_CHECKINS: usize = 20;
/// Default region threshold: a region is kept with at least this many active users.
pub const DEFAULT_MIN_USERS: usize = 500;

pub const CHECKINS_FILE: &str = "checkins.csv";
pub const VENUES_FILE: &str = "venues.csv";
pub const LINEAGE_FILE: &str = "lineage.json";

/// Top-level Foursquare categories ("Event" is not part of the set).
pub const DEFAULT_CATEGORIES: [&str; 9] = [
    "Arts & Entertainment",
    "College & University",
    "Food",
    "Nightlife Spot",
    "Outdoors & Recreation",
    "Professional & Other Places",
    "Residence",
    "Shop & Service",
    "Travel & Transport",
];

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("row {row}: field `{field}`: {reason}")]
    Malformed {
        row: u64,
        field: &'static str,
        reason: String,
    },
    #[error("bad header: expected `{expected}`, found `{found}`")]
    Header { expected: String, found: String },
    #[error("row {row}: duplicate venue_id `{venue_id}`")]
    DuplicateVenue { row: u64, venue_id: String },
    #[error("check-in references unknown venue `{venue_id}`")]
    UnknownVenue { venue_id: String },
    #[error("check-in for region `{found}` in dataset of region `{expected}`")]
    RegionMismatch { expected: String, found: String },
    #[error("region configuration is empty but {unlabeled} check-ins carry no region label")]
    EmptyRegionConfig { unlabeled: usize },
    #[error("invalid lineage: {0}")]
    Lineage(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] io::Error),
}

/// One observation: a user declares presence at a venue at an instant.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckIn {
    pub user_id: String,
    pub venue_id: String,
    pub timestamp: DateTime<Utc>,
    pub lat: f64,
    pub lon: f64,
    pub region: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Venue {
    pub venue_id: String,
    pub category: String,
    pub lat: f64,
    pub lon: f64,
}

/// The closed set of venue categories accepted by the venue parser.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Taxonomy {
    names: Vec<String>,
}

impl Default for Taxonomy {
    fn default() -> Self {
        Self {
            names: DEFAULT_CATEGORIES.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl Taxonomy {
    pub fn new<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut seen = BTreeSet::new();
        let names = names
            .into_iter()
            .map(Into::into)
            .filter(|n: &String| seen.insert(n.clone()))
            .collect();
        Self { names }
    }

    /// One category name per line; blank lines and `#` comments are ignored.
    pub fn from_reader<R: Read>(mut reader: R) -> io::Result<Self> {
        let mut text = String::new();
        reader.read_to_string(&mut text)?;
        Ok(Self::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
        ))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.names.iter().any(|n| n == name)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// Axis-aligned bounding boxes standing in for urban-region geometry.
/// Boxes may overlap; the first listed box containing a point wins.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RegionConfig {
    pub entries: Vec<RegionBox>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionBox {
    pub code: String,
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
}

impl RegionBox {
    pub fn contains(&self, lat: f64, lon: f64) -> bool {
        lat >= self.lat_min && lat <= self.lat_max && lon >= self.lon_min && lon <= self.lon_max
    }
}

impl RegionConfig {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn locate(&self, lat: f64, lon: f64) -> Option<&str> {
        self.entries
            .iter()
            .find(|b| b.contains(lat, lon))
            .map(|b| b.code.as_str())
    }
}

/// A step applied to the raw input to obtain a dataset. Replaying the
/// lineage in order on the raw input reproduces the dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "step", rename_all = "snake_case")]
pub enum FilterStep {
    Region { code: String },
    ActiveUsers { min_checkins: usize },
    VenueClass { class: String },
    EligibleUsers { min_checkins: usize },
}

/// Check-ins and venues of one region.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub region: String,
    pub checkins: Vec<CheckIn>,
    pub venues: BTreeMap<String, Venue>,
    pub lineage: Vec<FilterStep>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DatasetStats {
    pub checkins: usize,
    pub users: usize,
    pub venues: usize,
    /// Users divided by venues; absent for a dataset without venues.
    pub users_per_venue: Option<f64>,
}

impl Dataset {
    /// Builds a dataset, enforcing referential integrity and the shared region code.
    pub fn new(
        region: impl Into<String>,
        checkins: Vec<CheckIn>,
        venues: impl IntoIterator<Item = Venue>,
    ) -> Result<Self, IngestError> {
        let region = region.into();
        let venues: BTreeMap<String, Venue> = venues
            .into_iter()
            .map(|v| (v.venue_id.clone(), v))
            .collect();
        let ds = Self {
            region,
            checkins,
            venues,
            lineage: Vec::new(),
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        for c in &self.checkins {
            if !self.venues.contains_key(&c.venue_id) {
                return Err(IngestError::UnknownVenue {
                    venue_id: c.venue_id.clone(),
                });
            }
            if let Some(r) = &c.region {
                if *r != self.region {
                    return Err(IngestError::RegionMismatch {
                        expected: self.region.clone(),
                        found: r.clone(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Distinct user ids in lexicographic order.
    pub fn users(&self) -> Vec<&str> {
        let set: BTreeSet<&str> = self.checkins.iter().map(|c| c.user_id.as_str()).collect();
        set.into_iter().collect()
    }

    /// Check-ins grouped by user, input order preserved within each user.
    pub fn checkins_by_user(&self) -> BTreeMap<&str, Vec<&CheckIn>> {
        let mut out: BTreeMap<&str, Vec<&CheckIn>> = BTreeMap::new();
        for c in &self.checkins {
            out.entry(c.user_id.as_str()).or_default().push(c);
        }
        out
    }

    pub fn stats(&self) -> DatasetStats {
        dataset_stats(self)
    }

    /// Writes `checkins.csv`, `venues.csv` and `lineage.json` into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<(), IngestError> {
        fs::create_dir_all(dir)?;
        write_checkins(File::create(dir.join(CHECKINS_FILE))?, &self.checkins)?;
        write_venues(File::create(dir.join(VENUES_FILE))?, self.venues.values())?;
        let meta = LineageFile {
            region: self.region.clone(),
            lineage: self.lineage.clone(),
        };
        let mut f = File::create(dir.join(LINEAGE_FILE))?;
        serde_json::to_writer_pretty(&mut f, &meta)?;
        writeln!(f)?;
        Ok(())
    }

    /// Reads a dataset directory written by [`Dataset::write_dir`]. Without a
    /// lineage file the region code is taken from the check-ins' region
    /// column, or the directory name.
    pub fn read_dir(dir: &Path, taxonomy: &Taxonomy) -> Result<Self, IngestError> {
        let checkins = parse_checkins(BufReader::new(File::open(dir.join(CHECKINS_FILE))?))?;
        let venues = parse_venues(BufReader::new(File::open(dir.join(VENUES_FILE))?), taxonomy)?;
        let lineage_path = dir.join(LINEAGE_FILE);
        let (region, lineage) = if lineage_path.exists() {
            let meta: LineageFile =
                serde_json::from_reader(BufReader::new(File::open(lineage_path)?))?;
            (meta.region, meta.lineage)
        } else {
            let region = checkins
                .iter()
                .find_map(|c| c.region.clone())
                .or_else(|| dir.file_name().map(|n| n.to_string_lossy().into_owned()))
                .unwrap_or_default();
            (region, Vec::new())
        };
        let mut ds = Dataset::new(region, checkins, venues)?;
        ds.lineage = lineage;
        Ok(ds)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct LineageFile {
    region: String,
    lineage: Vec<FilterStep>,
}

const CHECKIN_HEADER: [&str; 5] = ["user_id", "venue_id", "timestamp", "lat", "lon"];
const VENUE_HEADER: [&str; 4] = ["venue_id", "category", "lat", "lon"];
const REGION_HEADER: [&str; 5] = ["code", "lat_min", "lat_max", "lon_min", "lon_max"];

fn reader<R: Read>(raw: R, headers: bool) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(headers)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(raw)
}

fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map(|p| p.line()).unwrap_or(0)
}

fn field<'a>(
    rec: &'a csv::StringRecord,
    idx: usize,
    name: &'static str,
) -> Result<&'a str, IngestError> {
    match rec.get(idx) {
        Some(s) if !s.is_empty() => Ok(s),
        _ => Err(IngestError::Malformed {
            row: line_of(rec),
            field: name,
            reason: "missing value".into(),
        }),
    }
}

fn coordinate(
    rec: &csv::StringRecord,
    idx: usize,
    name: &'static str,
    bound: f64,
) -> Result<f64, IngestError> {
    let raw = field(rec, idx, name)?;
    let v: f64 = raw.parse().map_err(|_| IngestError::Malformed {
        row: line_of(rec),
        field: name,
        reason: format!("not a number: `{raw}`"),
    })?;
    if !v.is_finite() || v.abs() > bound {
        return Err(IngestError::Malformed {
            row: line_of(rec),
            field: name,
            reason: format!("{v} outside [-{bound}, {bound}]"),
        });
    }
    Ok(v)
}

/// Parses a check-in file. Rows are numbered by file line (the header is line 1).
/// Repeated (user, venue, timestamp) rows are kept.
pub fn parse_checkins<R: Read>(raw: R) -> Result<Vec<CheckIn>, IngestError> {
    let mut rdr = reader(raw, true);
    let headers = rdr.headers()?.clone();
    let cols: Vec<&str> = headers.iter().collect();
    let with_region = cols.len() == 6 && cols[5] == "region";
    if cols[..cols.len().min(5)] != CHECKIN_HEADER[..] || !(cols.len() == 5 || with_region) {
        return Err(IngestError::Header {
            expected: "user_id,venue_id,timestamp,lat,lon[,region]".into(),
            found: cols.join(","),
        });
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let expected = if with_region { 6 } else { 5 };
        if rec.len() != expected {
            return Err(IngestError::Malformed {
                row: line_of(&rec),
                field: "row",
                reason: format!("expected {expected} fields, found {}", rec.len()),
            });
        }
        let ts_raw = field(&rec, 2, "timestamp")?;
        let timestamp = DateTime::parse_from_rfc3339(ts_raw)
            .map_err(|e| IngestError::Malformed {
                row: line_of(&rec),
                field: "timestamp",
                reason: format!("`{ts_raw}`: {e}"),
            })?
            .with_timezone(&Utc);
        let region = if with_region {
            rec.get(5).filter(|s| !s.is_empty()).map(str::to_string)
        } else {
            None
        };
        out.push(CheckIn {
            user_id: field(&rec, 0, "user_id")?.to_string(),
            venue_id: field(&rec, 1, "venue_id")?.to_string(),
            timestamp,
            lat: coordinate(&rec, 3, "lat", 90.0)?,
            lon: coordinate(&rec, 4, "lon", 180.0)?,
            region,
        });
    }
    Ok(out)
}

/// Parses a venue file. Categories outside `taxonomy` and rows without
/// coordinates are rejected.
pub fn parse_venues<R: Read>(raw: R, taxonomy: &Taxonomy) -> Result<Vec<Venue>, IngestError> {
    let mut rdr = reader(raw, true);
    let headers = rdr.headers()?.clone();
    let cols: Vec<&str> = headers.iter().collect();
    if cols != VENUE_HEADER {
        return Err(IngestError::Header {
            expected: VENUE_HEADER.join(","),
            found: cols.join(","),
        });
    }
    let mut seen = HashMap::new();
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let venue_id = field(&rec, 0, "venue_id")?.to_string();
        let category = field(&rec, 1, "category")?;
        if !taxonomy.contains(category) {
            return Err(IngestError::Malformed {
                row: line_of(&rec),
                field: "category",
                reason: format!("unknown category `{category}`"),
            });
        }
        if seen.insert(venue_id.clone(), ()).is_some() {
            return Err(IngestError::DuplicateVenue {
                row: line_of(&rec),
                venue_id,
            });
        }
        out.push(Venue {
            venue_id,
            category: category.to_string(),
            lat: coordinate(&rec, 2, "lat", 90.0)?,
            lon: coordinate(&rec, 3, "lon", 180.0)?,
        });
    }
    Ok(out)
}

/// Parses a region configuration; a leading `code,lat_min,...` header row is optional.
pub fn parse_region_config<R: Read>(raw: R) -> Result<RegionConfig, IngestError> {
    let mut rdr = reader(raw, false);
    let mut entries = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if i == 0 && rec.iter().eq(REGION_HEADER.iter().copied()) {
            continue;
        }
        let num = |idx: usize, name: &'static str, bound: f64| coordinate(&rec, idx, name, bound);
        let b = RegionBox {
            code: field(&rec, 0, "code")?.to_string(),
            lat_min: num(1, "lat_min", 90.0)?,
            lat_max: num(2, "lat_max", 90.0)?,
            lon_min: num(3, "lon_min", 180.0)?,
            lon_max: num(4, "lon_max", 180.0)?,
        };
        if b.lat_min > b.lat_max || b.lon_min > b.lon_max {
            return Err(IngestError::Malformed {
                row: line_of(&rec),
                field: "code",
                reason: format!("box `{}` has min > max", b.code),
            });
        }
        entries.push(b);
    }
    Ok(RegionConfig { entries })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionAssignment {
    pub checkins: Vec<CheckIn>,
    pub dropped: usize,
}

/// Labels every unlabeled check-in with the first box containing it and
/// drops those outside all boxes. Pre-labeled check-ins keep their label.
pub fn assign_regions(
    checkins: Vec<CheckIn>,
    config: &RegionConfig,
) -> Result<RegionAssignment, IngestError> {
    let unlabeled = checkins.iter().filter(|c| c.region.is_none()).count();
    if config.is_empty() && unlabeled > 0 {
        return Err(IngestError::EmptyRegionConfig { unlabeled });
    }
    let mut dropped = 0;
    let mut out = Vec::with_capacity(checkins.len());
    for mut c in checkins {
        if c.region.is_none() {
            match config.locate(c.lat, c.lon) {
                Some(code) => c.region = Some(code.to_string()),
                None => {
                    dropped += 1;
                    continue;
                }
            }
        }
        out.push(c);
    }
    Ok(RegionAssignment {
        checkins: out,
        dropped,
    })
}

/// Splits region-labeled check-ins into one dataset per region (ordered by
/// region code). Each dataset's venue table holds the venues its check-ins
/// reference.
pub fn build_region_datasets(
    checkins: Vec<CheckIn>,
    venues: &[Venue],
) -> Result<Vec<Dataset>, IngestError> {
    let table: HashMap<&str, &Venue> = venues.iter().map(|v| (v.venue_id.as_str(), v)).collect();
    let mut by_region: BTreeMap<String, Vec<CheckIn>> = BTreeMap::new();
    for c in checkins {
        let region = c.region.clone().unwrap_or_default();
        by_region.entry(region).or_default().push(c);
    }
    by_region
        .into_iter()
        .map(|(region, cs)| {
            let mut used = BTreeMap::new();
            for c in &cs {
                let v =
                    table
                        .get(c.venue_id.as_str())
                        .ok_or_else(|| IngestError::UnknownVenue {
                            venue_id: c.venue_id.clone(),
                        })?;
                used.entry(v.venue_id.clone())
                    .or_insert_with(|| (*v).clone());
            }
            let mut ds = Dataset::new(region.clone(), cs, used.into_values())?;
            ds.lineage.push(FilterStep::Region { code: region });
            Ok(ds)
        })
        .collect()
}

/// Removes all check-ins of users with fewer than `min_checkins` check-ins,
/// then drops venues left without check-ins. Idempotent at a fixed threshold.
pub fn filter_active_users(ds: &Dataset, min_checkins: usize) -> Dataset {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for c in &ds.checkins {
        *counts.entry(c.user_id.as_str()).or_default() += 1;
    }
    let checkins: Vec<CheckIn> = ds
        .checkins
        .iter()
        .filter(|c| counts[c.user_id.as_str()] >= min_checkins)
        .cloned()
        .collect();
    let used: BTreeSet<&str> = checkins.iter().map(|c| c.venue_id.as_str()).collect();
    let venues = ds
        .venues
        .iter()
        .filter(|(id, _)| used.contains(id.as_str()))
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    let mut lineage = ds.lineage.clone();
    let step = FilterStep::ActiveUsers { min_checkins };
    // Re-applying the same threshold is a no-op, so the lineage stays unchanged.
    if lineage.last() != Some(&step) {
        lineage.push(step);
    }
    Dataset {
        region: ds.region.clone(),
        checkins,
        venues,
        lineage,
    }
}

/// Keeps the datasets with at least `min_users` distinct users.
pub fn filter_active_regions(datasets: Vec<Dataset>, min_users: usize) -> Vec<Dataset> {
    datasets
        .into_iter()
        .filter(|ds| ds.users().len() >= min_users)
        .collect()
}

pub fn dataset_stats(ds: &Dataset) -> DatasetStats {
    let users = ds.users().len();
    let venues = ds.venues.len();
    DatasetStats {
        checkins: ds.checkins.len(),
        users,
        venues,
        users_per_venue: (venues > 0).then(|| users as f64 / venues as f64),
    }
}

pub fn format_timestamp(ts: &DateTime<Utc>) -> String {
    ts.to_rfc3339_opts(SecondsFormat::AutoSi, true)
}

/// Writes check-ins in the ingest format, with a region column.
pub fn write_checkins<W: Write>(out: W, checkins: &[CheckIn]) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["user_id", "venue_id", "timestamp", "lat", "lon", "region"])?;
    for c in checkins {
        w.write_record([
            c.user_id.as_str(),
            c.venue_id.as_str(),
            &format_timestamp(&c.timestamp),
            &c.lat.to_string(),
            &c.lon.to_string(),
            c.region.as_deref().unwrap_or(""),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_venues<'a, W: Write>(
    out: W,
    venues: impl IntoIterator<Item = &'a Venue>,
) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(VENUE_HEADER)?;
    for v in venues {
        w.write_record([
            v.venue_id.as_str(),
            v.category.as_str(),
            &v.lat.to_string(),
            &v.lon.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
