//! Per-venue semantics (popularity, spatial isolation) and venue classes.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{self, Point};
use crate::ingest::{Dataset, FilterStep, Taxonomy, Venue};

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("nearest-venue distance needs at least 2 venues, found {0}")]
    TooFewVenues(usize),
    #[error("percentile selection over an empty set")]
    EmptySelection,
    #[error("fraction {0} outside (0, 1]")]
    BadFraction(f64),
    #[error("unknown category `{0}`")]
    UnknownCategory(String),
    #[error("venue `{0}` has no computed features")]
    MissingFeatures(String),
    #[error("invalid class spec `{0}`")]
    BadClassSpec(String),
    #[error("csv: {0}")]
    Csv(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VenueFeatures {
    pub venue_id: String,
    pub category: String,
    /// Distinct users with at least one check-in at the venue.
    pub visitor_count: u64,
    /// Total check-ins at the venue.
    pub visit_count: u64,
    /// Meters to the nearest other venue of the same dataset.
    pub nn_distance: f64,
}

pub type FeatureTable = BTreeMap<String, VenueFeatures>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Top,
    Least,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    VisitorCount,
    VisitCount,
    NnDistance,
}

impl Metric {
    pub fn value(self, f: &VenueFeatures) -> f64 {
        match self {
            Metric::VisitorCount => f.visitor_count as f64,
            Metric::VisitCount => f.visit_count as f64,
            Metric::NnDistance => f.nn_distance,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Metric::VisitorCount => "visitor_count",
            Metric::VisitCount => "visit_count",
            Metric::NnDistance => "nn_distance",
        }
    }
}

/// A group of venues sharing an attribute.
///
/// Textual form (used on the command line and in reports):
/// `all`, `category=<name>`, `popularity=<top|least>:<fraction>[:visit_count]`,
/// `isolation=<top|least>:<fraction>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VenueClassSpec {
    All,
    Category {
        category: String,
    },
    Popularity {
        direction: Direction,
        fraction: f64,
        metric: Metric,
    },
    Isolation {
        direction: Direction,
        fraction: f64,
    },
}

impl VenueClassSpec {
    pub fn popularity(direction: Direction, fraction: f64) -> Self {
        Self::Popularity {
            direction,
            fraction,
            metric: Metric::VisitorCount,
        }
    }

    pub fn isolation(direction: Direction, fraction: f64) -> Self {
        Self::Isolation {
            direction,
            fraction,
        }
    }

    pub fn category(name: impl Into<String>) -> Self {
        Self::Category {
            category: name.into(),
        }
    }
}

impl fmt::Display for VenueClassSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let dir = |d: &Direction| match d {
            Direction::Top => "top",
            Direction::Least => "least",
        };
        match self {
            Self::All => write!(f, "all"),
            Self::Category { category } => write!(f, "category={category}"),
            Self::Popularity {
                direction,
                fraction,
                metric: Metric::VisitorCount,
            } => write!(f, "popularity={}:{fraction}", dir(direction)),
            Self::Popularity {
                direction,
                fraction,
                metric,
            } => write!(
                f,
                "popularity={}:{fraction}:{}",
                dir(direction),
                metric.name()
            ),
            Self::Isolation {
                direction,
                fraction,
            } => write!(f, "isolation={}:{fraction}", dir(direction)),
        }
    }
}

impl FromStr for VenueClassSpec {
    type Err = FeatureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || FeatureError::BadClassSpec(s.to_string());
        if s == "all" {
            return Ok(Self::All);
        }
        let (kind, rest) = s.split_once('=').ok_or_else(bad)?;
        if kind == "category" {
            return if rest.is_empty() {
                Err(bad())
            } else {
                Ok(Self::category(rest))
            };
        }
        let parts: Vec<&str> = rest.split(':').collect();
        let direction = match parts.first() {
            Some(&"top") => Direction::Top,
            Some(&"least") => Direction::Least,
            _ => return Err(bad()),
        };
        let fraction: f64 = parts.get(1).ok_or_else(bad)?.parse().map_err(|_| bad())?;
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(FeatureError::BadFraction(fraction));
        }
        match (kind, parts.get(2)) {
            ("popularity", None) | ("popularity", Some(&"visitor_count")) => {
                Ok(Self::popularity(direction, fraction))
            }
            ("popularity", Some(&"visit_count")) => Ok(Self::Popularity {
                direction,
                fraction,
                metric: Metric::VisitCount,
            }),
            ("isolation", None) => Ok(Self::isolation(direction, fraction)),
            _ => Err(bad()),
        }
    }
}

/// (visitor_count, visit_count) per venue of the dataset's venue table.
pub fn compute_popularity(ds: &Dataset) -> BTreeMap<String, (u64, u64)> {
    let mut visitors: HashMap<&str, HashSet<&str>> = HashMap::new();
    let mut visits: HashMap<&str, u64> = HashMap::new();
    for c in &ds.checkins {
        visitors.entry(&c.venue_id).or_default().insert(&c.user_id);
        *visits.entry(&c.venue_id).or_default() += 1;
    }
    ds.venues
        .keys()
        .map(|id| {
            let users = visitors.get(id.as_str()).map_or(0, |s| s.len() as u64);
            let n = visits.get(id.as_str()).copied().unwrap_or(0);
            (id.clone(), (users, n))
        })
        .collect()
}

/// Great-circle distance from each venue to its nearest other venue.
pub fn compute_nn_distance<'a, I>(venues: I) -> Result<BTreeMap<String, f64>, FeatureError>
where
    I: IntoIterator<Item = &'a Venue>,
{
    let venues: Vec<&Venue> = venues.into_iter().collect();
    if venues.len() < 2 {
        return Err(FeatureError::TooFewVenues(venues.len()));
    }
    let points: Vec<Point> = venues.iter().map(|v| Point::new(v.lat, v.lon)).collect();
    let nn = geo::nearest_grid(&points);
    Ok(venues.iter().map(|v| v.venue_id.clone()).zip(nn).collect())
}

/// Popularity plus isolation for every venue of the dataset. Requires at
/// least two venues.
pub fn compute_features(ds: &Dataset) -> Result<FeatureTable, FeatureError> {
    let nn = compute_nn_distance(ds.venues.values())?;
    let pop = compute_popularity(ds);
    Ok(ds
        .venues
        .values()
        .map(|v| {
            let (visitor_count, visit_count) = pop[&v.venue_id];
            let f = VenueFeatures {
                venue_id: v.venue_id.clone(),
                category: v.category.clone(),
                visitor_count,
                visit_count,
                nn_distance: nn[&v.venue_id],
            };
            (v.venue_id.clone(), f)
        })
        .collect())
}

/// Full features when isolation is defined (two or more venues), otherwise
/// popularity only.
pub fn compute_features_available(ds: &Dataset) -> FeatureTable {
    compute_features(ds).unwrap_or_else(|_| compute_features_without_isolation(ds))
}

/// Popularity only; isolation is left as NaN. For datasets where spatial
/// features are not needed (or undefined, with fewer than two venues).
pub fn compute_features_without_isolation(ds: &Dataset) -> FeatureTable {
    let pop = compute_popularity(ds);
    ds.venues
        .values()
        .map(|v| {
            let (visitor_count, visit_count) = pop[&v.venue_id];
            let f = VenueFeatures {
                venue_id: v.venue_id.clone(),
                category: v.category.clone(),
                visitor_count,
                visit_count,
                nn_distance: f64::NAN,
            };
            (v.venue_id.clone(), f)
        })
        .collect()
}

/// Number of venues a fraction selects: ⌈fraction·n⌉, guarded against
/// products like 0.7·10 = 7.000000000000001.
pub fn selection_size(fraction: f64, n: usize) -> usize {
    let raw = fraction * n as f64;
    let k = (raw - raw * 1e-12).ceil() as usize;
    k.clamp(1, n)
}

/// Ranks venues by value (descending for `Top`, ascending for `Least`) and
/// returns the first ⌈fraction·n⌉.
///
/// `Least` ranks in exactly the reverse of `Top`'s order, so ties fall on
/// lexicographically smaller ids for `Top` and larger ids for `Least`, and
/// `top f` and `least 1−f` are complementary whenever f·n is integral.
pub fn percentile_select(
    values: &BTreeMap<String, f64>,
    fraction: f64,
    direction: Direction,
) -> Result<BTreeSet<String>, FeatureError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(FeatureError::BadFraction(fraction));
    }
    if values.is_empty() {
        return Err(FeatureError::EmptySelection);
    }
    let mut ranked: Vec<(&String, f64)> = values.iter().map(|(k, v)| (k, *v)).collect();
    // descending value, ascending id
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    if direction == Direction::Least {
        ranked.reverse();
    }
    let k = selection_size(fraction, ranked.len());
    Ok(ranked
        .into_iter()
        .take(k)
        .map(|(id, _)| id.clone())
        .collect())
}

/// Venue ids of the class. Features must describe the full (unfiltered)
/// venue set so percentiles are relative to the whole region.
pub fn class_venues(
    spec: &VenueClassSpec,
    features: &FeatureTable,
    taxonomy: Option<&Taxonomy>,
) -> Result<BTreeSet<String>, FeatureError> {
    let by_metric = |metric: Metric| -> BTreeMap<String, f64> {
        features
            .iter()
            .map(|(k, f)| (k.clone(), metric.value(f)))
            .collect()
    };
    match spec {
        VenueClassSpec::All => Ok(features.keys().cloned().collect()),
        VenueClassSpec::Category { category } => {
            let known = match taxonomy {
                Some(t) => t.contains(category),
                None => features.values().any(|f| &f.category == category),
            };
            if !known {
                return Err(FeatureError::UnknownCategory(category.clone()));
            }
            Ok(features
                .values()
                .filter(|f| &f.category == category)
                .map(|f| f.venue_id.clone())
                .collect())
        }
        VenueClassSpec::Popularity {
            direction,
            fraction,
            metric,
        } => percentile_select(&by_metric(*metric), *fraction, *direction),
        VenueClassSpec::Isolation {
            direction,
            fraction,
        } => {
            if features.values().any(|f| f.nn_distance.is_nan()) {
                return Err(FeatureError::TooFewVenues(features.len()));
            }
            percentile_select(&by_metric(Metric::NnDistance), *fraction, *direction)
        }
    }
}

/// Keeps only check-ins at venues of the class; the venue table becomes the
/// class's venue set.
pub fn filter_by_class(
    ds: &Dataset,
    spec: &VenueClassSpec,
    features: &FeatureTable,
    taxonomy: Option<&Taxonomy>,
) -> Result<Dataset, FeatureError> {
    if *spec == VenueClassSpec::All {
        return Ok(ds.clone());
    }
    if let Some(missing) = ds.venues.keys().find(|id| !features.contains_key(*id)) {
        return Err(FeatureError::MissingFeatures(missing.clone()));
    }
    let keep = class_venues(spec, features, taxonomy)?;
    let checkins = ds
        .checkins
        .iter()
        .filter(|c| keep.contains(&c.venue_id))
        .cloned()
        .collect();
    let venues = ds
        .venues
        .iter()
        .filter(|(id, _)| keep.contains(*id))
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    let mut lineage = ds.lineage.clone();
    lineage.push(FilterStep::VenueClass {
        class: spec.to_string(),
    });
    Ok(Dataset {
        region: ds.region.clone(),
        checkins,
        venues,
        lineage,
    })
}

/// `venue_id,category,visitor_count,visit_count,nn_distance_m`, sorted by venue id.
pub fn write_features<W: Write>(out: W, features: &FeatureTable) -> Result<(), FeatureError> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| FeatureError::Csv(e.to_string());
    w.write_record([
        "venue_id",
        "category",
        "visitor_count",
        "visit_count",
        "nn_distance_m",
    ])
    .map_err(err)?;
    for f in features.values() {
        w.write_record([
            f.venue_id.as_str(),
            f.category.as_str(),
            &f.visitor_count.to_string(),
            &f.visit_count.to_string(),
            &f.nn_distance.to_string(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| FeatureError::Csv(e.to_string()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::CheckIn;
    use chrono::{TimeZone, Utc};

    fn venue(id: &str, cat: &str, lat: f64, lon: f64) -> Venue {
        Venue {
            venue_id: id.into(),
            category: cat.into(),
            lat,
            lon,
        }
    }

    fn ci(user: &str, venue: &str) -> CheckIn {
        CheckIn {
            user_id: user.into(),
            venue_id: venue.into(),
            timestamp: Utc.with_ymd_and_hms(2010, 10, 2, 14, 0, 0).unwrap(),
            lat: 0.0,
            lon: 0.0,
            region: None,
        }
    }

    fn small() -> Dataset {
        let venues = vec![
            venue("a", "Food", 0.0, 0.0),
            venue("b", "Food", 0.0, 0.01),
            venue("c", "Residence", 0.0, 0.03),
            venue("d", "Shop & Service", 0.0, 1.0),
        ];
        let checkins = vec![
            ci("u1", "a"),
            ci("u1", "a"),
            ci("u1", "a"),
            ci("u2", "a"),
            ci("u1", "b"),
            ci("u2", "b"),
            ci("u3", "c"),
        ];
        Dataset::new("R", checkins, venues).unwrap()
    }

    #[test]
    fn popularity_counts() {
        let pop = compute_popularity(&small());
        assert_eq!(pop["a"], (2, 4));
        assert_eq!(pop["b"], (2, 2));
        assert_eq!(pop["c"], (1, 1));
        assert_eq!(pop["d"], (0, 0));
        let total: u64 = pop.values().map(|p| p.1).sum();
        assert_eq!(total, 7);
    }

    #[test]
    fn nn_needs_two_venues() {
        let one = [venue("a", "Food", 0.0, 0.0)];
        assert_eq!(
            compute_nn_distance(&one),
            Err(FeatureError::TooFewVenues(1))
        );
    }

    #[test]
    fn nn_distances_follow_definition() {
        let ds = small();
        let nn = compute_nn_distance(ds.venues.values()).unwrap();
        let d = |x: (f64, f64), y: (f64, f64)| {
            geo::haversine(Point::new(x.0, x.1), Point::new(y.0, y.1))
        };
        assert_eq!(nn["a"], d((0.0, 0.0), (0.0, 0.01)));
        assert_eq!(
            nn["b"],
            d((0.0, 0.01), (0.0, 0.0)).min(d((0.0, 0.01), (0.0, 0.03)))
        );
        assert_eq!(nn["d"], d((0.0, 1.0), (0.0, 0.03)));
    }

    fn values(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn top_fraction_takes_highest() {
        let vals = values(
            &(0..10)
                .map(|i| {
                    (
                        ["v0", "v1", "v2", "v3", "v4", "v5", "v6", "v7", "v8", "v9"][i],
                        i as f64,
                    )
                })
                .collect::<Vec<_>>(),
        );
        let top = percentile_select(&vals, 0.2, Direction::Top).unwrap();
        assert_eq!(top.into_iter().collect::<Vec<_>>(), ["v8", "v9"]);
        assert_eq!(
            percentile_select(&vals, 1.0, Direction::Least)
                .unwrap()
                .len(),
            10
        );
        assert_eq!(
            percentile_select(&vals, 1.0, Direction::Top).unwrap().len(),
            10
        );
    }

    #[test]
    fn equal_values_split_by_id() {
        let ids = ["a", "b", "c", "d", "e", "f", "g", "h", "i", "j"];
        let vals = values(&ids.iter().map(|i| (*i, 1.0)).collect::<Vec<_>>());
        let top = percentile_select(&vals, 0.5, Direction::Top).unwrap();
        let least = percentile_select(&vals, 0.5, Direction::Least).unwrap();
        assert_eq!(
            top.iter().map(String::as_str).collect::<Vec<_>>(),
            ["a", "b", "c", "d", "e"]
        );
        assert_eq!(
            least.iter().map(String::as_str).collect::<Vec<_>>(),
            ["f", "g", "h", "i", "j"]
        );
        assert!(top.is_disjoint(&least));
    }

    #[test]
    fn selection_size_is_not_fooled_by_rounding() {
        for tenths in 1..=10 {
            assert_eq!(selection_size(tenths as f64 / 10.0, 10), tenths);
            assert_eq!(selection_size(tenths as f64 * 0.1, 10), tenths);
        }
        assert_eq!(selection_size(0.1, 15), 2);
        assert_eq!(selection_size(0.01, 10), 1);
    }

    #[test]
    fn percentile_errors() {
        assert_eq!(
            percentile_select(&BTreeMap::new(), 0.5, Direction::Top),
            Err(FeatureError::EmptySelection)
        );
        let vals = values(&[("a", 1.0)]);
        assert_eq!(
            percentile_select(&vals, 0.0, Direction::Top),
            Err(FeatureError::BadFraction(0.0))
        );
        assert!(percentile_select(&vals, 1.5, Direction::Top).is_err());
    }

    #[test]
    fn class_filters() {
        let ds = small();
        let feats = compute_features(&ds).unwrap();
        let tax = Taxonomy::default();

        let food =
            filter_by_class(&ds, &VenueClassSpec::category("Food"), &feats, Some(&tax)).unwrap();
        assert_eq!(food.checkins.len(), 6);
        assert!(food
            .checkins
            .iter()
            .all(|c| c.venue_id == "a" || c.venue_id == "b"));
        assert_eq!(food.venues.keys().collect::<Vec<_>>(), ["a", "b"]);

        assert_eq!(
            filter_by_class(&ds, &VenueClassSpec::All, &feats, Some(&tax)).unwrap(),
            ds
        );

        // ⌈0.25·4⌉ = 1 venue: `a` has the most visitors (tied with `b`, smaller id).
        let top = filter_by_class(
            &ds,
            &VenueClassSpec::popularity(Direction::Top, 0.25),
            &feats,
            Some(&tax),
        )
        .unwrap();
        assert_eq!(top.venues.keys().collect::<Vec<_>>(), ["a"]);
        assert_eq!(top.checkins.len(), 4);

        // `d` is the most isolated venue and keeps its (empty) place in the class.
        let iso = filter_by_class(
            &ds,
            &VenueClassSpec::isolation(Direction::Top, 0.25),
            &feats,
            Some(&tax),
        )
        .unwrap();
        assert_eq!(iso.venues.keys().collect::<Vec<_>>(), ["d"]);
        assert!(iso.checkins.is_empty());

        assert_eq!(
            filter_by_class(&ds, &VenueClassSpec::category("Event"), &feats, Some(&tax)),
            Err(FeatureError::UnknownCategory("Event".into()))
        );
        // A known category with no venues selects nothing.
        let none = filter_by_class(
            &ds,
            &VenueClassSpec::category("Nightlife Spot"),
            &feats,
            Some(&tax),
        )
        .unwrap();
        assert!(none.checkins.is_empty() && none.venues.is_empty());
    }

    #[test]
    fn class_spec_text_round_trip() {
        for s in [
            "all",
            "category=Shop & Service",
            "popularity=top:0.1",
            "popularity=least:0.3:visit_count",
            "isolation=least:1",
        ] {
            let spec: VenueClassSpec = s.parse().unwrap();
            assert_eq!(spec.to_string(), s);
        }
        assert!("popularity=middle:0.1".parse::<VenueClassSpec>().is_err());
        assert!("isolation=top:0".parse::<VenueClassSpec>().is_err());
        assert!("nonsense".parse::<VenueClassSpec>().is_err());
    }

    #[test]
    fn feature_export_is_sorted() {
        let feats = compute_features(&small()).unwrap();
        let mut buf = Vec::new();
        write_features(&mut buf, &feats).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines[0],
            "venue_id,category,visitor_count,visit_count,nn_distance_m"
        );
        assert!(lines[1].starts_with("a,Food,2,4,"));
        assert!(lines[4].starts_with("d,Shop & Service,0,0,"));
    }
}
