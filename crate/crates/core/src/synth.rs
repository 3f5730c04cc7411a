//! Seeded synthetic check-in datasets with controllable separability,
//! venue popularity skew and spatial layout.
//!
//! Each user checks in according to a mixture of two parts:
//!
//! * a shared core of globally popular venues, weighted by a Zipf law with
//!   exponent `popularity_skew`, receiving `core_share` of the mass;
//! * a personal support of `support_size` venues with preferences drawn from
//!   a symmetric Dirichlet(`concentration`).
//!
//! Check-ins are multinomial draws from the mixture, so low concentration
//! and small core share make users easy to tell apart.

use chrono::{Duration, TimeZone, Utc};
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{weighted::WeightedIndex, Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{compute_features, compute_features_without_isolation, FeatureTable};
use crate::ingest::{CheckIn, Dataset, Venue, DEFAULT_CATEGORIES};

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("infeasible synthetic spec: {0}")]
    Infeasible(String),
}

fn infeasible<T>(msg: impl Into<String>) -> Result<T, SynthError> {
    Err(SynthError::Infeasible(msg.into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpatialLayout {
    UniformBox {
        lat_min: f64,
        lat_max: f64,
        lon_min: f64,
        lon_max: f64,
    },
    /// Venues scattered around `clusters` centres placed uniformly in the box,
    /// with Gaussian offsets of standard deviation `sigma_m` meters.
    Clustered {
        clusters: usize,
        sigma_m: f64,
        lat_min: f64,
        lat_max: f64,
        lon_min: f64,
        lon_max: f64,
    },
}

impl Default for SpatialLayout {
    fn default() -> Self {
        // roughly the Atlanta metro area
        SpatialLayout::UniformBox {
            lat_min: 33.4,
            lat_max: 34.2,
            lon_min: -84.8,
            lon_max: -84.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub n_users: usize,
    pub n_venues: usize,
    pub checkins_per_user: usize,
    /// Symmetric Dirichlet parameter of personal preferences.
    pub concentration: f64,
    /// Zipf exponent of shared-core venue attractiveness.
    pub popularity_skew: f64,
    /// Number of globally popular venues mixed into every user's support.
    pub shared_core: usize,
    /// Share of each user's check-in mass going to the shared core.
    pub core_share: f64,
    /// Personal venues per user, drawn from the non-core venues.
    pub support_size: usize,
    /// Deal personal supports so that no two users share a personal venue.
    pub exclusive_supports: bool,
    pub spatial_layout: SpatialLayout,
    /// (category, share of venues); shares sum to 1.
    pub category_assignment: Vec<(String, f64)>,
    pub seed: u64,
    pub region: String,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_users: 100,
            n_venues: 500,
            checkins_per_user: 50,
            concentration: 0.1,
            popularity_skew: 1.0,
            shared_core: 0,
            core_share: 0.0,
            support_size: 10,
            exclusive_supports: false,
            spatial_layout: SpatialLayout::default(),
            category_assignment: DEFAULT_CATEGORIES
                .iter()
                .map(|c| (c.to_string(), 1.0 / 9.0))
                .collect(),
            seed: 7,
            region: "SYN".into(),
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n_users == 0 || self.n_venues == 0 {
            return infeasible("need at least one user and one venue");
        }
        if !(self.concentration > 0.0 && self.concentration.is_finite()) {
            return infeasible(format!(
                "concentration must be positive, got {}",
                self.concentration
            ));
        }
        if !(self.popularity_skew >= 0.0 && self.popularity_skew.is_finite()) {
            return infeasible(format!(
                "popularity_skew must be >= 0, got {}",
                self.popularity_skew
            ));
        }
        if !(0.0..=1.0).contains(&self.core_share) {
            return infeasible(format!(
                "core_share must lie in [0, 1], got {}",
                self.core_share
            ));
        }
        if self.shared_core > self.n_venues {
            return infeasible(format!(
                "shared_core {} exceeds n_venues {}",
                self.shared_core, self.n_venues
            ));
        }
        let pool = self.n_venues - self.shared_core;
        if self.support_size > pool {
            return infeasible(format!(
                "support_size {} exceeds the {pool} non-core venues",
                self.support_size
            ));
        }
        if self.exclusive_supports && self.n_users * self.support_size > pool {
            return infeasible(format!(
                "{} users × {} exclusive venues exceed the {pool} non-core venues",
                self.n_users, self.support_size
            ));
        }
        if self.support_size == 0 && self.shared_core == 0 {
            return infeasible("users need a personal support or a shared core");
        }
        if self.category_assignment.is_empty() {
            return infeasible("empty category assignment");
        }
        if self.category_assignment.iter().any(|(_, f)| f.is_nan() || *f < 0.0) {
            return infeasible("negative category share");
        }
        let total: f64 = self.category_assignment.iter().map(|(_, f)| f).sum();
        if (total - 1.0).abs() > 1e-9 {
            return infeasible(format!("category shares sum to {total}, not 1"));
        }
        if let SpatialLayout::Clustered {
            clusters, sigma_m, ..
        } = &self.spatial_layout
        {
            if *clusters == 0 || sigma_m.is_nan() || *sigma_m < 0.0 {
                return infeasible("clustered layout needs clusters >= 1 and sigma >= 0");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub dataset: Dataset,
    pub features: FeatureTable,
}

fn id_width(n: usize) -> usize {
    n.saturating_sub(1).to_string().len()
}

/// Venue ids are zero-padded so lexicographic and numeric order agree.
pub fn venue_id(i: usize, n: usize) -> String {
    format!("v{:0w$}", i, w = id_width(n))
}

pub fn user_id(i: usize, n: usize) -> String {
    format!("u{:0w$}", i, w = id_width(n))
}

/// Splits `n` items into per-category counts by largest remainder.
fn category_counts(shares: &[(String, f64)], n: usize) -> Vec<usize> {
    let raw: Vec<f64> = shares.iter().map(|(_, f)| f * n as f64).collect();
    let mut counts: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
    let mut rest = n - counts.iter().sum::<usize>().min(n);
    let mut order: Vec<usize> = (0..shares.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = raw[a] - raw[a].floor();
        let fb = raw[b] - raw[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if rest == 0 {
            break;
        }
        counts[i] += 1;
        rest -= 1;
    }
    counts
}

fn place_venues(layout: &SpatialLayout, n: usize, rng: &mut ChaCha8Rng) -> Vec<(f64, f64)> {
    match *layout {
        SpatialLayout::UniformBox {
            lat_min,
            lat_max,
            lon_min,
            lon_max,
        } => (0..n)
            .map(|_| {
                (
                    rng.random_range(lat_min..=lat_max),
                    rng.random_range(lon_min..=lon_max),
                )
            })
            .collect(),
        SpatialLayout::Clustered {
            clusters,
            sigma_m,
            lat_min,
            lat_max,
            lon_min,
            lon_max,
        } => {
            let centres: Vec<(f64, f64)> = (0..clusters)
                .map(|_| {
                    (
                        rng.random_range(lat_min..=lat_max),
                        rng.random_range(lon_min..=lon_max),
                    )
                })
                .collect();
            let sigma_deg = sigma_m / 111_195.0;
            let offset = Normal::new(0.0, sigma_deg.max(0.0)).expect("finite sigma");
            (0..n)
                .map(|_| {
                    let (clat, clon) = centres[rng.random_range(0..clusters)];
                    let lat = (clat + offset.sample(rng)).clamp(-90.0, 90.0);
                    let scale = lat.to_radians().cos().max(1e-6);
                    let lon = (clon + offset.sample(rng) / scale).clamp(-180.0, 180.0);
                    (lat, lon)
                })
                .collect()
        }
    }
}

fn dirichlet(concentration: f64, k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let gamma = Gamma::new(concentration, 1.0).expect("positive concentration");
    let mut w: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
    let total: f64 = w.iter().sum();
    if total > 0.0 && total.is_finite() {
        w.iter_mut().for_each(|x| *x /= total);
    } else {
        // every draw underflowed: all mass on one venue
        w.iter_mut().for_each(|x| *x = 0.0);
        w[rng.random_range(0..k)] = 1.0;
    }
    w
}

/// Generates a dataset; a pure function of the spec (seed included).
pub fn generate(spec: &SynthSpec) -> Result<SynthOutput, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n_v = spec.n_venues;

    let coords = place_venues(&spec.spatial_layout, n_v, &mut rng);
    let mut categories: Vec<&str> = category_counts(&spec.category_assignment, n_v)
        .into_iter()
        .zip(&spec.category_assignment)
        .flat_map(|(count, (name, _))| std::iter::repeat_n(name.as_str(), count))
        .collect();
    categories.shuffle(&mut rng);

    let venues: Vec<Venue> = (0..n_v)
        .map(|i| Venue {
            venue_id: venue_id(i, n_v),
            category: categories[i].to_string(),
            lat: coords[i].0,
            lon: coords[i].1,
        })
        .collect();

    let core = spec.shared_core;
    let zipf: Vec<f64> = {
        let w: Vec<f64> = (0..core)
            .map(|r| 1.0 / ((r + 1) as f64).powf(spec.popularity_skew))
            .collect();
        let total: f64 = w.iter().sum();
        w.into_iter().map(|x| x / total).collect()
    };
    let core_share = match (core, spec.support_size) {
        (0, _) => 0.0,
        (_, 0) => 1.0,
        _ => spec.core_share,
    };

    let pool: Vec<usize> = (core..n_v).collect();
    let mut dealt = pool.clone();
    if spec.exclusive_supports {
        dealt.shuffle(&mut rng);
    }

    let start = Utc.with_ymd_and_hms(2010, 9, 1, 0, 0, 0).unwrap();
    let mut checkins = Vec::with_capacity(spec.n_users * spec.checkins_per_user);
    for u in 0..spec.n_users {
        let support: Vec<usize> = if spec.exclusive_supports {
            dealt[u * spec.support_size..(u + 1) * spec.support_size].to_vec()
        } else {
            index::sample(&mut rng, pool.len(), spec.support_size)
                .into_iter()
                .map(|i| pool[i])
                .collect()
        };
        let mut ids: Vec<usize> = (0..core).collect();
        let mut weights: Vec<f64> = zipf.iter().map(|w| w * core_share).collect();
        if !support.is_empty() {
            let theta = dirichlet(spec.concentration, support.len(), &mut rng);
            ids.extend(&support);
            weights.extend(theta.iter().map(|t| t * (1.0 - core_share)));
        }
        let pick =
            WeightedIndex::new(&weights).map_err(|e| SynthError::Infeasible(e.to_string()))?;
        let user = user_id(u, spec.n_users);
        for j in 0..spec.checkins_per_user {
            let v = &venues[ids[pick.sample(&mut rng)]];
            checkins.push(CheckIn {
                user_id: user.clone(),
                venue_id: v.venue_id.clone(),
                timestamp: start + Duration::minutes((u * spec.checkins_per_user + j) as i64),
                lat: v.lat,
                lon: v.lon,
                region: Some(spec.region.clone()),
            });
        }
    }

    let dataset = Dataset::new(spec.region.clone(), checkins, venues)
        .map_err(|e| SynthError::Infeasible(e.to_string()))?;
    let features = if n_v >= 2 {
        compute_features(&dataset).map_err(|e| SynthError::Infeasible(e.to_string()))?
    } else {
        compute_features_without_isolation(&dataset)
    };
    Ok(SynthOutput { dataset, features })
}

pub const ORACLE_MAX_USERS: usize = 5;
pub const ORACLE_MAX_VENUES: usize = 6;
pub const ORACLE_MAX_COUNT: u64 = 3;

/// A tiny instance for exhaustive-enumeration oracles: every user's count at
/// every venue is drawn uniformly from `0..=max_count`.
pub fn make_oracle_instance(
    n_users: usize,
    n_venues: usize,
    max_count: u64,
    seed: u64,
) -> Result<Dataset, SynthError> {
    if n_users == 0 || n_users > ORACLE_MAX_USERS {
        return infeasible(format!(
            "oracle instances have 1..={ORACLE_MAX_USERS} users, got {n_users}"
        ));
    }
    if n_venues == 0 || n_venues > ORACLE_MAX_VENUES {
        return infeasible(format!(
            "oracle instances have 1..={ORACLE_MAX_VENUES} venues, got {n_venues}"
        ));
    }
    if max_count > ORACLE_MAX_COUNT {
        return infeasible(format!(
            "oracle counts are at most {ORACLE_MAX_COUNT}, got {max_count}"
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let venues: Vec<Venue> = (0..n_venues)
        .map(|i| Venue {
            venue_id: venue_id(i, n_venues),
            category: DEFAULT_CATEGORIES[2].to_string(),
            lat: rng.random_range(33.0..34.0),
            lon: rng.random_range(-85.0..-84.0),
        })
        .collect();
    let start = Utc.with_ymd_and_hms(2010, 9, 1, 0, 0, 0).unwrap();
    let mut checkins = Vec::new();
    for u in 0..n_users {
        for v in &venues {
            let n = rng.random_range(0..=max_count);
            for _ in 0..n {
                checkins.push(CheckIn {
                    user_id: user_id(u, n_users),
                    venue_id: v.venue_id.clone(),
                    timestamp: start + Duration::minutes(checkins.len() as i64),
                    lat: v.lat,
                    lon: v.lon,
                    region: None,
                });
            }
        }
    }
    Dataset::new("ORACLE", checkins, venues).map_err(|e| SynthError::Infeasible(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        let spec = SynthSpec {
            n_users: 100,
            n_venues: 500,
            checkins_per_user: 50,
            concentration: 0.1,
            seed: 7,
            ..Default::default()
        };
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a.dataset, b.dataset);
        assert_eq!(a.features, b.features);
        assert_eq!(a.dataset.checkins.len(), 5000);
        a.dataset.validate().unwrap();
        let c = generate(&SynthSpec { seed: 8, ..spec }).unwrap();
        assert_ne!(a.dataset, c.dataset);
    }

    #[test]
    fn single_venue_puts_everyone_there() {
        let spec = SynthSpec {
            n_users: 10,
            n_venues: 1,
            checkins_per_user: 20,
            support_size: 1,
            ..Default::default()
        };
        let out = generate(&spec).unwrap();
        assert!(out.dataset.checkins.iter().all(|c| c.venue_id == "v0"));
        assert!(out.features["v0"].nn_distance.is_nan());
    }

    #[test]
    fn exclusive_supports_are_disjoint() {
        let spec = SynthSpec {
            n_users: 20,
            n_venues: 100,
            support_size: 5,
            exclusive_supports: true,
            ..Default::default()
        };
        let out = generate(&spec).unwrap();
        let mut owner = std::collections::HashMap::new();
        for c in &out.dataset.checkins {
            let prev = owner.insert(c.venue_id.clone(), c.user_id.clone());
            assert!(prev.is_none() || prev.as_ref() == Some(&c.user_id));
        }
    }

    #[test]
    fn infeasible_specs() {
        let too_wide = SynthSpec {
            n_venues: 5,
            support_size: 6,
            ..Default::default()
        };
        assert!(generate(&too_wide).is_err());
        let bad_core = SynthSpec {
            n_venues: 5,
            shared_core: 6,
            ..Default::default()
        };
        assert!(generate(&bad_core).is_err());
        let bad_shares = SynthSpec {
            category_assignment: vec![("Food".into(), 0.5)],
            ..Default::default()
        };
        assert!(generate(&bad_shares).is_err());
        let crowded = SynthSpec {
            n_users: 30,
            n_venues: 50,
            support_size: 2,
            exclusive_supports: true,
            ..Default::default()
        };
        assert!(generate(&crowded).is_err());
    }

    #[test]
    fn category_shares_are_exact() {
        let counts = category_counts(
            &[("a".into(), 0.5), ("b".into(), 0.25), ("c".into(), 0.25)],
            10,
        );
        assert_eq!(counts.iter().sum::<usize>(), 10);
        assert_eq!(counts, [5, 3, 2]);
    }

    #[test]
    fn clustered_layout_stays_in_range() {
        let spec = SynthSpec {
            spatial_layout: SpatialLayout::Clustered {
                clusters: 4,
                sigma_m: 300.0,
                lat_min: 33.4,
                lat_max: 34.2,
                lon_min: -84.8,
                lon_max: -84.0,
            },
            ..Default::default()
        };
        let out = generate(&spec).unwrap();
        assert!(out
            .dataset
            .venues
            .values()
            .all(|v| v.lat.abs() <= 90.0 && v.lon.abs() <= 180.0));
    }

    #[test]
    fn oracle_instances() {
        let ds = make_oracle_instance(5, 6, 3, 1).unwrap();
        ds.validate().unwrap();
        assert!(ds.users().len() <= 5 && ds.venues.len() == 6);
        assert!(make_oracle_instance(6, 6, 3, 1).is_err());
        assert!(make_oracle_instance(5, 7, 3, 1).is_err());
        assert!(make_oracle_instance(5, 6, 4, 1).is_err());
    }
}
