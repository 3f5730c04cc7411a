//! The experimental protocol: per-user train/test splits, class-restricted
//! Monte-Carlo attack repetitions, accuracy statistics, sweeps over venue
//! classes, and per-user entropy/identifiability profiles.

pub mod stats;

use std::sync::Arc;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attack::{build_user_model_indexed, AttackError, ModelBank, Vocabulary};
use crate::features::{
    filter_by_class, Direction, FeatureError, FeatureTable, Metric, VenueClassSpec,
};
use crate::ingest::{Dataset, FilterStep, Taxonomy};

pub use stats::{
    entropy_from_counts, pearson, pearson_auto, pearson_permutation, pearson_r, user_entropy,
    Correlation, PValueMethod, StatsError,
};

pub const DEFAULT_ALPHA: f64 = 1.0;
pub const DEFAULT_REPETITIONS: usize = 100;
pub const DEFAULT_MAX_TEST_SIZE: usize = 10;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid experiment configuration: {0}")]
    Config(String),
    #[error(
        "no eligible users for class `{class}` (need at least {min_checkins} in-class check-ins)"
    )]
    NoEligibleUsers { class: String, min_checkins: usize },
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Attack(#[from] AttackError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub alpha: f64,
    pub repetitions: usize,
    /// Largest test size m; the held-out pool per user has this many check-ins.
    pub max_test_size: usize,
    /// Users need at least this many in-class check-ins to be targeted.
    pub min_class_checkins: usize,
    pub base_seed: u64,
    pub class_spec: VenueClassSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            repetitions: DEFAULT_REPETITIONS,
            max_test_size: DEFAULT_MAX_TEST_SIZE,
            min_class_checkins: DEFAULT_MAX_TEST_SIZE + 1,
            base_seed: 0,
            class_spec: VenueClassSpec::All,
        }
    }
}

impl ExperimentConfig {
    pub fn with_class(&self, class_spec: VenueClassSpec) -> Self {
        Self {
            class_spec,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |m: String| Err(EvalError::Config(m));
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be positive, got {}", self.alpha));
        }
        if self.repetitions == 0 {
            return bad("repetitions must be at least 1".into());
        }
        if self.max_test_size == 0 {
            return bad("max_test_size must be at least 1".into());
        }
        if self.min_class_checkins < self.max_test_size + 1 {
            return bad(format!(
                "min_class_checkins ({}) must be at least max_test_size + 1 ({})",
                self.min_class_checkins,
                self.max_test_size + 1
            ));
        }
        Ok(())
    }
}

/// SplitMix64 finalizer.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Seed of one user's split in one repetition:
/// `splitmix64(splitmix64(splitmix64(base) ^ rep) ^ fnv1a64(user_id))`.
pub fn split_seed(base_seed: u64, rep_index: u64, user_id: &str) -> u64 {
    splitmix64(splitmix64(splitmix64(base_seed) ^ rep_index) ^ fnv1a64(user_id.as_bytes()))
}

/// Textual description of [`split_seed`], echoed into reports.
pub const SEED_DERIVATION: &str =
    "ChaCha8 seeded with splitmix64(splitmix64(splitmix64(base_seed) ^ rep_index) ^ fnv1a64(user_id))";

#[derive(Debug, Clone, PartialEq)]
pub struct Split<T> {
    pub train: Vec<T>,
    /// Held-out check-ins in sampled order; the test set of size m is `pool[..m]`.
    pub pool: Vec<T>,
}

/// Samples `max_test_size` items uniformly without replacement into an
/// ordered pool; the rest (in input order) is training. `None` when there
/// are fewer than `max_test_size + 1` items.
pub fn split_train_test<T: Clone, R: Rng + ?Sized>(
    items: &[T],
    max_test_size: usize,
    rng: &mut R,
) -> Option<Split<T>> {
    if items.len() < max_test_size + 1 {
        return None;
    }
    let picked = index::sample(rng, items.len(), max_test_size).into_vec();
    let mut held = vec![false; items.len()];
    for &i in &picked {
        held[i] = true;
    }
    let pool = picked.iter().map(|&i| items[i].clone()).collect();
    let train = items
        .iter()
        .zip(&held)
        .filter(|(_, &h)| !h)
        .map(|(c, _)| c.clone())
        .collect();
    Some(Split { train, pool })
}

/// Eligible users of a class-filtered dataset with their check-in histories
/// as vocabulary indices. Targets and candidates coincide.
#[derive(Debug, Clone)]
pub struct Population {
    pub class_spec: VenueClassSpec,
    /// Eligible users, sorted.
    pub users: Vec<String>,
    histories: Vec<Vec<u32>>,
    pub vocab: Arc<Vocabulary>,
    /// Users of the class dataset below the eligibility threshold.
    pub excluded_users: usize,
    pub lineage: Vec<FilterStep>,
}

impl Population {
    /// The vocabulary is the class dataset's venue table.
    pub fn new(
        class_ds: &Dataset,
        class_spec: &VenueClassSpec,
        min_class_checkins: usize,
    ) -> Result<Self, EvalError> {
        let vocab = Arc::new(Vocabulary::new(class_ds.venues.keys().cloned()));
        let mut users = Vec::new();
        let mut histories = Vec::new();
        let mut excluded_users = 0;
        for (user, checkins) in class_ds.checkins_by_user() {
            if checkins.len() < min_class_checkins {
                excluded_users += 1;
                continue;
            }
            let history = checkins
                .iter()
                .map(|c| {
                    vocab
                        .index_of(&c.venue_id)
                        .ok_or_else(|| AttackError::UnknownVenue(c.venue_id.clone()))
                })
                .collect::<Result<Vec<_>, _>>()?;
            users.push(user.to_string());
            histories.push(history);
        }
        if users.is_empty() {
            return Err(EvalError::NoEligibleUsers {
                class: class_spec.to_string(),
                min_checkins: min_class_checkins,
            });
        }
        let mut lineage = class_ds.lineage.clone();
        lineage.push(FilterStep::EligibleUsers {
            min_checkins: min_class_checkins,
        });
        Ok(Self {
            class_spec: class_spec.clone(),
            users,
            histories,
            vocab,
            excluded_users,
            lineage,
        })
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    /// Check-in history (vocabulary indices, input order) of the i-th user.
    pub fn history(&self, i: usize) -> &[u32] {
        &self.histories[i]
    }

    /// The split every user gets in repetition `rep_index`.
    pub fn splits(&self, cfg: &ExperimentConfig, rep_index: usize) -> Vec<Split<u32>> {
        self.users
            .iter()
            .zip(&self.histories)
            .map(|(user, history)| {
                let mut rng =
                    ChaCha8Rng::seed_from_u64(split_seed(cfg.base_seed, rep_index as u64, user));
                split_train_test(history, cfg.max_test_size, &mut rng)
                    .expect("eligible users have more than max_test_size check-ins")
            })
            .collect()
    }

    /// One repetition: fresh splits, a model bank over all training data,
    /// and one attack per user and test size. Returns `success[user][m − 1]`.
    pub fn run_repetition(
        &self,
        cfg: &ExperimentConfig,
        rep_index: usize,
    ) -> Result<Vec<Vec<bool>>, EvalError> {
        if cfg.min_class_checkins < cfg.max_test_size + 1 {
            return Err(EvalError::Config(
                "min_class_checkins must exceed max_test_size".into(),
            ));
        }
        let splits = self.splits(cfg, rep_index);
        let models = self
            .users
            .iter()
            .zip(&splits)
            .map(|(user, s)| {
                build_user_model_indexed(user.as_str(), &s.train, cfg.alpha, self.vocab.clone())
            })
            .collect::<Result<Vec<_>, _>>()?;
        // users are sorted, so bank positions coincide with population positions
        let bank = ModelBank::new(models)?;
        splits
            .iter()
            .enumerate()
            .map(|(target, s)| {
                let predicted = bank.identify_prefixes(&s.pool)?;
                Ok(predicted.into_iter().map(|p| p == target).collect())
            })
            .collect()
    }
}

/// Runs a single repetition on an already class-filtered dataset.
pub fn run_repetition(
    class_ds: &Dataset,
    cfg: &ExperimentConfig,
    rep_index: usize,
) -> Result<Vec<Vec<bool>>, EvalError> {
    cfg.validate()?;
    Population::new(class_ds, &cfg.class_spec, cfg.min_class_checkins)?
        .run_repetition(cfg, rep_index)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSizeResult {
    pub m: usize,
    pub accuracy_mean: f64,
    pub accuracy_stderr: f64,
    /// Correctly identified users in each repetition.
    pub rep_successes: Vec<u32>,
    /// Repetitions in which each user (in `AttackResult::users` order) was identified.
    pub user_successes: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackResult {
    pub class: String,
    pub class_spec: VenueClassSpec,
    /// k: eligible users, who are both targets and candidates.
    pub n_users: usize,
    /// |L|: venues of the class-filtered dataset.
    pub n_venues: usize,
    pub users_per_venue: f64,
    pub repetitions: usize,
    pub excluded_users: usize,
    pub users: Vec<String>,
    pub per_m: Vec<TestSizeResult>,
}

impl AttackResult {
    pub fn at(&self, m: usize) -> Option<&TestSizeResult> {
        self.per_m.get(m.checked_sub(1)?)
    }

    /// Share of repetitions in which each user was identified at test size m.
    pub fn per_user_accuracy(&self, m: usize) -> Option<Vec<f64>> {
        let r = self.at(m)?;
        Some(
            r.user_successes
                .iter()
                .map(|&s| s as f64 / self.repetitions as f64)
                .collect(),
        )
    }
}

/// Mean accuracy and its standard error from per-repetition success counts
/// over `k` users: the sample standard deviation of repetition accuracies
/// divided by √repetitions (0 for a single repetition).
pub fn accuracy_summary(rep_successes: &[u32], k: usize) -> (f64, f64) {
    let reps = rep_successes.len();
    let total: u64 = rep_successes.iter().map(|&s| s as u64).sum();
    let mean = total as f64 / (k * reps) as f64;
    if reps < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = rep_successes
        .iter()
        .map(|&s| {
            let d = s as f64 / k as f64 - mean;
            d * d
        })
        .sum();
    let std = (ss / (reps - 1) as f64).sqrt();
    (mean, std / (reps as f64).sqrt())
}

fn aggregate(
    pop: &Population,
    cfg: &ExperimentConfig,
    outcomes: &[Vec<Vec<bool>>],
) -> AttackResult {
    let k = pop.len();
    let per_m = (1..=cfg.max_test_size)
        .map(|m| {
            let rep_successes: Vec<u32> = outcomes
                .iter()
                .map(|rep| rep.iter().filter(|user| user[m - 1]).count() as u32)
                .collect();
            let user_successes: Vec<u32> = (0..k)
                .map(|u| outcomes.iter().filter(|rep| rep[u][m - 1]).count() as u32)
                .collect();
            let (accuracy_mean, accuracy_stderr) = accuracy_summary(&rep_successes, k);
            TestSizeResult {
                m,
                accuracy_mean,
                accuracy_stderr,
                rep_successes,
                user_successes,
            }
        })
        .collect();
    AttackResult {
        class: cfg.class_spec.to_string(),
        class_spec: cfg.class_spec.clone(),
        n_users: k,
        n_venues: pop.vocab.len(),
        users_per_venue: k as f64 / pop.vocab.len() as f64,
        repetitions: cfg.repetitions,
        excluded_users: pop.excluded_users,
        users: pop.users.clone(),
        per_m,
    }
}

/// Runs all repetitions for an eligible population. Repetitions may run in
/// parallel; the result does not depend on scheduling.
pub fn run_population(pop: &Population, cfg: &ExperimentConfig) -> Result<AttackResult, EvalError> {
    cfg.validate()?;
    let outcomes = (0..cfg.repetitions)
        .into_par_iter()
        .map(|rep| pop.run_repetition(cfg, rep))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(aggregate(pop, cfg, &outcomes))
}

/// Applies the class filter (percentiles relative to `features`, which must
/// describe the unfiltered dataset) and runs the repeated attack.
pub fn run_experiment(
    ds: &Dataset,
    features: &FeatureTable,
    cfg: &ExperimentConfig,
    taxonomy: Option<&Taxonomy>,
) -> Result<AttackResult, EvalError> {
    cfg.validate()?;
    let class_ds = filter_by_class(ds, &cfg.class_spec, features, taxonomy)?;
    let pop = Population::new(&class_ds, &cfg.class_spec, cfg.min_class_checkins)?;
    run_population(&pop, cfg)
}

/// Class accuracy divided by the all-venues accuracy, per test size;
/// absent where the baseline accuracy is zero.
pub fn relative_accuracy(class_result: &AttackResult, baseline: &AttackResult) -> Vec<Option<f64>> {
    class_result
        .per_m
        .iter()
        .zip(&baseline.per_m)
        .map(|(c, b)| (b.accuracy_mean > 0.0).then(|| c.accuracy_mean / b.accuracy_mean))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Category,
    Popularity(Metric),
    Isolation,
}

/// Fractions swept along percentile axes: 0.1, 0.2, …, 1.0.
pub fn fraction_grid() -> Vec<f64> {
    (1..=10).map(|i| i as f64 / 10.0).collect()
}

impl SweepAxis {
    pub fn cells(&self, directions: &[Direction], taxonomy: &Taxonomy) -> Vec<VenueClassSpec> {
        match self {
            SweepAxis::Category => taxonomy
                .names()
                .iter()
                .map(VenueClassSpec::category)
                .collect(),
            SweepAxis::Popularity(metric) => directions
                .iter()
                .flat_map(|&direction| {
                    fraction_grid()
                        .into_iter()
                        .map(move |fraction| VenueClassSpec::Popularity {
                            direction,
                            fraction,
                            metric: *metric,
                        })
                })
                .collect(),
            SweepAxis::Isolation => directions
                .iter()
                .flat_map(|&d| {
                    fraction_grid()
                        .into_iter()
                        .map(move |f| VenueClassSpec::isolation(d, f))
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCell {
    pub class: String,
    /// Eligible users in the cell (0 when the cell is absent).
    pub n_users: usize,
    /// `None` when no user has enough in-class check-ins.
    pub result: Option<AttackResult>,
    pub relative_accuracy: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepTable {
    pub axis: SweepAxis,
    pub baseline: AttackResult,
    pub cells: Vec<SweepCell>,
}

/// One experiment per class along an axis, plus the `all` baseline that
/// relative accuracies are computed against.
pub fn sweep(
    ds: &Dataset,
    features: &FeatureTable,
    axis: SweepAxis,
    directions: &[Direction],
    cfg: &ExperimentConfig,
    taxonomy: &Taxonomy,
) -> Result<SweepTable, EvalError> {
    let baseline = run_experiment(
        ds,
        features,
        &cfg.with_class(VenueClassSpec::All),
        Some(taxonomy),
    )?;
    let mut cells = Vec::new();
    for spec in axis.cells(directions, taxonomy) {
        let class = spec.to_string();
        match run_experiment(ds, features, &cfg.with_class(spec), Some(taxonomy)) {
            Ok(result) => cells.push(SweepCell {
                class,
                n_users: result.n_users,
                relative_accuracy: relative_accuracy(&result, &baseline),
                result: Some(result),
            }),
            Err(EvalError::NoEligibleUsers { .. }) => cells.push(SweepCell {
                class,
                n_users: 0,
                result: None,
                relative_accuracy: vec![None; cfg.max_test_size],
            }),
            Err(e) => return Err(e),
        }
    }
    Ok(SweepTable {
        axis,
        baseline,
        cells,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UserProfileStats {
    pub user_id: String,
    pub entropy_bits: f64,
    /// Share of repetitions identified at the largest test size; absent for
    /// users that were not eligible targets.
    pub per_user_accuracy: Option<f64>,
    pub n_checkins: usize,
}

/// Entropy of every user's full check-in histogram, joined with per-user
/// accuracy at m = max_test_size of an `all`-class result.
pub fn user_profiles(
    ds: &Dataset,
    baseline: &AttackResult,
) -> Result<Vec<UserProfileStats>, EvalError> {
    let accuracy = baseline
        .per_m
        .last()
        .map(|_| {
            baseline
                .per_user_accuracy(baseline.per_m.len())
                .unwrap_or_default()
        })
        .unwrap_or_default();
    ds.checkins_by_user()
        .into_iter()
        .map(|(user, checkins)| {
            let entropy_bits = user_entropy(checkins.iter().map(|c| c.venue_id.as_str()))?;
            let per_user_accuracy = baseline
                .users
                .binary_search_by(|u| u.as_str().cmp(user))
                .ok()
                .and_then(|i| accuracy.get(i).copied());
            Ok(UserProfileStats {
                user_id: user.to_string(),
                entropy_bits,
                per_user_accuracy,
                n_checkins: checkins.len(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileSummary {
    pub n: usize,
    pub entropy_variance: f64,
    pub accuracy_variance: f64,
    pub correlation: Option<Correlation>,
    /// Why the correlation is absent, if it is.
    pub undefined_reason: Option<String>,
}

/// Correlation between entropy and per-user accuracy over the profiled
/// targets, with variance diagnostics. A degenerate input yields an absent
/// correlation and the reason, not an error.
pub fn profile_correlation(profiles: &[UserProfileStats], seed: u64) -> ProfileSummary {
    let (xs, ys): (Vec<f64>, Vec<f64>) = profiles
        .iter()
        .filter_map(|p| p.per_user_accuracy.map(|a| (p.entropy_bits, a)))
        .unzip();
    let (correlation, undefined_reason) = match pearson_auto(&xs, &ys, seed) {
        Ok(c) => (Some(c), None),
        Err(e) => (None, Some(e.to_string())),
    };
    ProfileSummary {
        n: xs.len(),
        entropy_variance: stats::sample_variance(&xs),
        accuracy_variance: stats::sample_variance(&ys),
        correlation,
        undefined_reason,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{CheckIn, Venue};
    use chrono::{TimeZone, Utc};

    fn dataset(users: &[(&str, &[(&str, usize)])]) -> Dataset {
        let mut venues = std::collections::BTreeSet::new();
        let mut checkins = Vec::new();
        for (user, visits) in users {
            for (venue, n) in *visits {
                venues.insert(venue.to_string());
                for i in 0..*n {
                    checkins.push(CheckIn {
                        user_id: user.to_string(),
                        venue_id: venue.to_string(),
                        timestamp: Utc.timestamp_opt(i as i64, 0).unwrap(),
                        lat: 0.0,
                        lon: 0.0,
                        region: None,
                    });
                }
            }
        }
        let venues = venues.into_iter().map(|v| Venue {
            venue_id: v,
            category: "Food".into(),
            lat: 0.0,
            lon: 0.0,
        });
        Dataset::new("R", checkins, venues).unwrap()
    }

    #[test]
    fn split_boundary_and_partition() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let items: Vec<u32> = (0..11).collect();
        let s = split_train_test(&items, 10, &mut rng).unwrap();
        assert_eq!((s.train.len(), s.pool.len()), (1, 10));

        let items: Vec<u32> = (0..30).collect();
        let s = split_train_test(&items, 10, &mut rng).unwrap();
        assert_eq!((s.train.len(), s.pool.len()), (20, 10));
        let mut all: Vec<u32> = s.train.iter().chain(&s.pool).copied().collect();
        all.sort();
        assert_eq!(all, items);

        assert!(split_train_test(&items[..10], 10, &mut rng).is_none());
    }

    #[test]
    fn split_is_seeded() {
        let items: Vec<u32> = (0..40).collect();
        let seed = split_seed(42, 3, "u1");
        let a = split_train_test(&items, 10, &mut ChaCha8Rng::seed_from_u64(seed));
        let b = split_train_test(&items, 10, &mut ChaCha8Rng::seed_from_u64(seed));
        assert_eq!(a, b);
        assert_ne!(split_seed(42, 3, "u1"), split_seed(42, 4, "u1"));
        assert_ne!(split_seed(42, 3, "u1"), split_seed(42, 3, "u2"));
    }

    #[test]
    fn config_validation() {
        assert!(ExperimentConfig::default().validate().is_ok());
        let bad = ExperimentConfig {
            min_class_checkins: 10,
            ..Default::default()
        };
        assert!(matches!(bad.validate(), Err(EvalError::Config(_))));
        let bad = ExperimentConfig {
            repetitions: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = ExperimentConfig {
            alpha: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn single_eligible_user_always_succeeds() {
        let ds = dataset(&[("solo", &[("a", 8), ("b", 7)]), ("few", &[("a", 3)])]);
        let cfg = ExperimentConfig::default();
        let bits = run_repetition(&ds, &cfg, 0).unwrap();
        assert_eq!(bits, vec![vec![true; 10]]);
    }

    #[test]
    fn disjoint_users_are_always_identified() {
        let ds = dataset(&[("u1", &[("a", 20)]), ("u2", &[("b", 15), ("c", 15)])]);
        let cfg = ExperimentConfig::default();
        for rep in 0..5 {
            let bits = run_repetition(&ds, &cfg, rep).unwrap();
            assert!(bits.iter().flatten().all(|&b| b));
        }
    }

    #[test]
    fn no_eligible_users_names_the_class() {
        let ds = dataset(&[("u1", &[("a", 5)])]);
        let cfg = ExperimentConfig {
            class_spec: VenueClassSpec::category("Food"),
            ..Default::default()
        };
        match run_repetition(&ds, &cfg, 0) {
            Err(EvalError::NoEligibleUsers {
                class,
                min_checkins,
            }) => {
                assert_eq!(class, "category=Food");
                assert_eq!(min_checkins, 11);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn summary_arithmetic() {
        // accuracies 0.4 and 0.6 over k = 10
        let (mean, se) = accuracy_summary(&[4, 6], 10);
        assert!((mean - 0.5).abs() < 1e-15);
        let expected = (0.02f64).sqrt() / 2f64.sqrt();
        assert!((se - expected).abs() < 1e-15);
        assert!((se - 0.1).abs() < 1e-12);

        assert_eq!(accuracy_summary(&[10; 100], 10), (1.0, 0.0));
        assert_eq!(accuracy_summary(&[1; 100], 20), (0.05, 0.0));
        assert_eq!(accuracy_summary(&[3], 10).1, 0.0);
    }

    fn result_with(means: &[f64]) -> AttackResult {
        AttackResult {
            class: "x".into(),
            class_spec: VenueClassSpec::All,
            n_users: 1,
            n_venues: 1,
            users_per_venue: 1.0,
            repetitions: 1,
            excluded_users: 0,
            users: vec![],
            per_m: means
                .iter()
                .enumerate()
                .map(|(i, &a)| TestSizeResult {
                    m: i + 1,
                    accuracy_mean: a,
                    accuracy_stderr: 0.0,
                    rep_successes: vec![],
                    user_successes: vec![],
                })
                .collect(),
        }
    }

    #[test]
    fn relative_accuracy_cases() {
        let class = result_with(&[0.8, 0.9, 0.0, 0.3]);
        let base = result_with(&[0.8, 0.6, 0.5, 0.0]);
        let rel = relative_accuracy(&class, &base);
        assert_eq!(rel[0], Some(1.0));
        assert!((rel[1].unwrap() - 1.5).abs() < 1e-12);
        assert_eq!(rel[2], Some(0.0));
        assert_eq!(rel[3], None);
    }

    #[test]
    fn experiment_is_deterministic_and_bounded() {
        let ds = dataset(&[
            ("u1", &[("a", 10), ("b", 5)]),
            ("u2", &[("a", 5), ("b", 10)]),
            ("u3", &[("b", 7), ("c", 8)]),
        ]);
        let feats = crate::features::compute_features_without_isolation(&ds);
        let cfg = ExperimentConfig {
            repetitions: 20,
            base_seed: 5,
            ..Default::default()
        };
        let a = run_experiment(&ds, &feats, &cfg, None).unwrap();
        let b = run_experiment(&ds, &feats, &cfg, None).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.per_m.len(), 10);
        for r in &a.per_m {
            assert!((0.0..=1.0).contains(&r.accuracy_mean));
            assert!(r.accuracy_stderr >= 0.0);
            assert!(r
                .user_successes
                .iter()
                .all(|&s| s as usize <= cfg.repetitions));
        }
        assert_eq!((a.n_users, a.n_venues), (3, 3));
    }

    #[test]
    fn profiles_and_degenerate_correlation() {
        let ds = dataset(&[
            ("u1", &[("a", 15)]),
            ("u2", &[("b", 15)]),
            ("u3", &[("c", 15)]),
        ]);
        let feats = crate::features::compute_features_without_isolation(&ds);
        let cfg = ExperimentConfig {
            repetitions: 3,
            ..Default::default()
        };
        let base = run_experiment(&ds, &feats, &cfg, None).unwrap();
        let profiles = user_profiles(&ds, &base).unwrap();
        assert_eq!(profiles.len(), 3);
        assert!(profiles
            .iter()
            .all(|p| p.entropy_bits == 0.0 && p.per_user_accuracy == Some(1.0)));
        let summary = profile_correlation(&profiles, 1);
        assert!(summary.correlation.is_none());
        assert!(summary.undefined_reason.unwrap().contains("zero variance"));
        assert_eq!(summary.entropy_variance, 0.0);
    }
}
