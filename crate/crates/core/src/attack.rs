//! Per-user smoothed multinomial check-in models and maximum-a-posteriori
//! identification of anonymous check-in sets.
//!
//! For user `v` with training counts `N_i` over a vocabulary of `|L|`
//! venues, the probability of a check-in at venue `i` is
//!
//! ```text
//! P(i | v) = (N_i + α) / (Σ_j N_j + α·|L|)
//! ```
//!
//! and a test set is scored in natural-log space as
//! `Σ_i ln(N_{c_i} + α) − m·ln(Σ_j N_j + α·|L|)`. Every scoring path in
//! this crate evaluates exactly that expression in test order, so two
//! users with equal counts always receive bit-identical scores.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AttackError {
    #[error("smoothing parameter must be positive and finite, got {0}")]
    BadAlpha(f64),
    #[error("empty venue vocabulary")]
    EmptyVocabulary,
    #[error("venue `{0}` is not in the model vocabulary")]
    UnknownVenue(String),
    #[error("empty test set")]
    EmptyTest,
    #[error("empty model bank")]
    EmptyBank,
    #[error("models disagree on {0}")]
    Inconsistent(&'static str),
    #[error("model bank file: {0}")]
    Format(String),
}

/// The venue set `L` the models are defined over.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    ids: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    /// Ids are sorted and deduplicated.
    pub fn new<I, S>(ids: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut ids: Vec<String> = ids.into_iter().map(Into::into).collect();
        ids.sort();
        ids.dedup();
        let index = ids
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i as u32))
            .collect();
        Self { ids, index }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn index_of(&self, venue_id: &str) -> Option<u32> {
        self.index.get(venue_id).copied()
    }

    pub fn id(&self, idx: u32) -> &str {
        &self.ids[idx as usize]
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    fn require(&self, venue_id: &str) -> Result<u32, AttackError> {
        self.index_of(venue_id)
            .ok_or_else(|| AttackError::UnknownVenue(venue_id.to_string()))
    }
}

fn check_alpha(alpha: f64) -> Result<(), AttackError> {
    if alpha > 0.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(AttackError::BadAlpha(alpha))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserModel {
    pub user_id: String,
    counts: BTreeMap<u32, u64>,
    total: u64,
    alpha: f64,
    vocab: Arc<Vocabulary>,
}

impl UserModel {
    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn vocabulary(&self) -> &Arc<Vocabulary> {
        &self.vocab
    }

    /// Training count at a venue (0 for unseen venues).
    pub fn count(&self, venue_id: &str) -> u64 {
        self.vocab
            .index_of(venue_id)
            .and_then(|i| self.counts.get(&i).copied())
            .unwrap_or(0)
    }

    /// Non-zero training counts keyed by venue id.
    pub fn counts(&self) -> impl Iterator<Item = (&str, u64)> + '_ {
        self.counts.iter().map(|(i, n)| (self.vocab.id(*i), *n))
    }

    fn count_at(&self, idx: u32) -> u64 {
        self.counts.get(&idx).copied().unwrap_or(0)
    }

    fn denominator(&self) -> f64 {
        self.total as f64 + self.alpha * self.vocab.len() as f64
    }

    fn log_denominator(&self) -> f64 {
        self.denominator().ln()
    }

    /// Smoothed probability of a check-in at `venue_id`.
    pub fn probability(&self, venue_id: &str) -> Result<f64, AttackError> {
        let idx = self.vocab.require(venue_id)?;
        Ok((self.count_at(idx) as f64 + self.alpha) / self.denominator())
    }

    /// Σ ln P(c_i | v) over the test venues, in natural-log scale.
    pub fn log_likelihood<S: AsRef<str>>(&self, test: &[S]) -> Result<f64, AttackError> {
        if test.is_empty() {
            return Err(AttackError::EmptyTest);
        }
        let mut acc = 0.0;
        for venue in test {
            let idx = self.vocab.require(venue.as_ref())?;
            acc += (self.count_at(idx) as f64 + self.alpha).ln();
        }
        Ok(acc - test.len() as f64 * self.log_denominator())
    }
}

/// Builds a user's model from the venue ids of their training check-ins.
/// An empty training set yields the uniform model.
pub fn build_user_model<I, S>(
    user_id: impl Into<String>,
    train_venues: I,
    alpha: f64,
    vocab: Arc<Vocabulary>,
) -> Result<UserModel, AttackError>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    check_alpha(alpha)?;
    if vocab.is_empty() {
        return Err(AttackError::EmptyVocabulary);
    }
    let mut counts = BTreeMap::new();
    let mut total = 0;
    for v in train_venues {
        *counts.entry(vocab.require(v.as_ref())?).or_insert(0) += 1;
        total += 1;
    }
    Ok(UserModel {
        user_id: user_id.into(),
        counts,
        total,
        alpha,
        vocab,
    })
}

/// Builds a model from vocabulary indices of training check-ins.
pub fn build_user_model_indexed(
    user_id: impl Into<String>,
    train: &[u32],
    alpha: f64,
    vocab: Arc<Vocabulary>,
) -> Result<UserModel, AttackError> {
    check_alpha(alpha)?;
    if vocab.is_empty() {
        return Err(AttackError::EmptyVocabulary);
    }
    let mut counts = BTreeMap::new();
    for &idx in train {
        if idx as usize >= vocab.len() {
            return Err(AttackError::UnknownVenue(format!("#{idx}")));
        }
        *counts.entry(idx).or_insert(0) += 1;
    }
    Ok(UserModel {
        user_id: user_id.into(),
        counts,
        total: train.len() as u64,
        alpha,
        vocab,
    })
}

/// Free-function form of [`UserModel::log_likelihood`].
pub fn log_likelihood<S: AsRef<str>>(model: &UserModel, test: &[S]) -> Result<f64, AttackError> {
    model.log_likelihood(test)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Identification {
    pub predicted: String,
    /// Log-posterior (up to the shared constant) per candidate user.
    pub scores: BTreeMap<String, f64>,
}

/// Candidate users sharing one vocabulary and smoothing parameter, with a
/// uniform prior.
#[derive(Debug, Clone)]
pub struct ModelBank {
    models: Vec<UserModel>,
    vocab: Arc<Vocabulary>,
    alpha: f64,
    // venue index -> (model index, count) for every non-zero count
    postings: Vec<Vec<(u32, u64)>>,
    log_den: Vec<f64>,
}

impl ModelBank {
    pub fn new(mut models: Vec<UserModel>) -> Result<Self, AttackError> {
        let first = models.first().ok_or(AttackError::EmptyBank)?;
        let vocab = first.vocab.clone();
        let alpha = first.alpha;
        for m in &models {
            if m.alpha.to_bits() != alpha.to_bits() {
                return Err(AttackError::Inconsistent("alpha"));
            }
            if !Arc::ptr_eq(&m.vocab, &vocab) && *m.vocab != *vocab {
                return Err(AttackError::Inconsistent("vocabulary"));
            }
        }
        models.sort_by(|a, b| a.user_id.cmp(&b.user_id));
        if models.windows(2).any(|w| w[0].user_id == w[1].user_id) {
            return Err(AttackError::Inconsistent("user ids (duplicate user)"));
        }
        let mut postings = vec![Vec::new(); vocab.len()];
        for (ui, m) in models.iter().enumerate() {
            for (&vi, &n) in &m.counts {
                postings[vi as usize].push((ui as u32, n));
            }
        }
        let log_den = models.iter().map(UserModel::log_denominator).collect();
        Ok(Self {
            models,
            vocab,
            alpha,
            postings,
            log_den,
        })
    }

    /// Builds one model per user from training venue ids.
    pub fn from_training<'a, I, S>(
        training: I,
        alpha: f64,
        vocab: Arc<Vocabulary>,
    ) -> Result<Self, AttackError>
    where
        I: IntoIterator<Item = (&'a str, Vec<S>)>,
        S: AsRef<str>,
    {
        let models = training
            .into_iter()
            .map(|(user, venues)| build_user_model(user, venues, alpha, vocab.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(models)
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn vocabulary(&self) -> &Arc<Vocabulary> {
        &self.vocab
    }

    /// Models ordered by user id.
    pub fn models(&self) -> &[UserModel] {
        &self.models
    }

    pub fn model(&self, user_id: &str) -> Option<&UserModel> {
        self.position(user_id).map(|i| &self.models[i])
    }

    pub fn position(&self, user_id: &str) -> Option<usize> {
        self.models
            .binary_search_by(|m| m.user_id.as_str().cmp(user_id))
            .ok()
    }

    /// Maximum-a-posteriori user for the test venues under the uniform prior.
    /// Exact score ties go to the lexicographically smallest user id.
    pub fn identify<S: AsRef<str>>(&self, test: &[S]) -> Result<Identification, AttackError> {
        let scores = self
            .models
            .iter()
            .map(|m| m.log_likelihood(test))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(self.pick(scores))
    }

    /// As [`ModelBank::identify`], adding `ln prior(user)` to each score.
    pub fn identify_with_prior<S: AsRef<str>>(
        &self,
        test: &[S],
        prior: impl Fn(&str) -> f64,
    ) -> Result<Identification, AttackError> {
        let scores = self
            .models
            .iter()
            .map(|m| Ok(prior(&m.user_id).ln() + m.log_likelihood(test)?))
            .collect::<Result<Vec<_>, AttackError>>()?;
        Ok(self.pick(scores))
    }

    fn pick(&self, scores: Vec<f64>) -> Identification {
        let best = argmax_first(&scores);
        Identification {
            predicted: self.models[best].user_id.clone(),
            scores: self
                .models
                .iter()
                .zip(scores)
                .map(|(m, s)| (m.user_id.clone(), s))
                .collect(),
        }
    }

    /// Predicted model index for every prefix `test[..m]`, m = 1..=len.
    ///
    /// Scores are accumulated through the per-venue postings instead of one
    /// lookup per user and venue, but evaluate the same floating-point
    /// expression as [`UserModel::log_likelihood`].
    pub fn identify_prefixes(&self, test: &[u32]) -> Result<Vec<usize>, AttackError> {
        if test.is_empty() {
            return Err(AttackError::EmptyTest);
        }
        let n = self.models.len();
        let floor = self.alpha.ln();
        let mut acc = vec![0.0f64; n];
        let mut term = vec![floor; n];
        let mut scores = vec![0.0f64; n];
        let mut out = Vec::with_capacity(test.len());
        for (m, &venue) in test.iter().enumerate() {
            let postings = self
                .postings
                .get(venue as usize)
                .ok_or_else(|| AttackError::UnknownVenue(format!("#{venue}")))?;
            for &(ui, count) in postings {
                term[ui as usize] = (count as f64 + self.alpha).ln();
            }
            for (a, t) in acc.iter_mut().zip(&term) {
                *a += *t;
            }
            for &(ui, _) in postings {
                term[ui as usize] = floor;
            }
            let len = (m + 1) as f64;
            for ((s, a), d) in scores.iter_mut().zip(&acc).zip(&self.log_den) {
                *s = *a - len * *d;
            }
            out.push(argmax_first(&scores));
        }
        Ok(out)
    }

    /// Debug export: `#alpha,<α>` and `#vocab_size,<|L|>` header lines,
    /// then `user_id,venue_id,count` rows. Vocabulary venues nobody visited
    /// appear as rows with an empty user id; users without training
    /// check-ins as rows with an empty venue id.
    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "#alpha,{}", self.alpha)?;
        writeln!(out, "#vocab_size,{}", self.vocab.len())?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["user_id", "venue_id", "count"])?;
        for (vi, postings) in self.postings.iter().enumerate() {
            if postings.is_empty() {
                w.write_record(["", self.vocab.id(vi as u32), "0"])?;
            }
        }
        for m in &self.models {
            if m.counts.is_empty() {
                w.write_record([m.user_id.as_str(), "", "0"])?;
            }
            for (venue, n) in m.counts() {
                w.write_record([m.user_id.as_str(), venue, &n.to_string()])?;
            }
        }
        w.flush()
    }

    pub fn read<R: BufRead>(mut input: R) -> Result<Self, AttackError> {
        let fmt = |s: String| AttackError::Format(s);
        let mut header = |key: &str| -> Result<String, AttackError> {
            let mut line = String::new();
            input.read_line(&mut line).map_err(|e| fmt(e.to_string()))?;
            line.trim_end()
                .strip_prefix(&format!("#{key},"))
                .map(str::to_string)
                .ok_or_else(|| {
                    fmt(format!(
                        "expected `#{key},` header, found `{}`",
                        line.trim_end()
                    ))
                })
        };
        let alpha: f64 = header("alpha")?
            .parse()
            .map_err(|_| fmt("bad alpha".into()))?;
        let vocab_size: usize = header("vocab_size")?
            .parse()
            .map_err(|_| fmt("bad vocab_size".into()))?;

        let mut rdr = csv::Reader::from_reader(input);
        let mut venues = Vec::new();
        let mut users: BTreeMap<String, Vec<(String, u64)>> = BTreeMap::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| fmt(e.to_string()))?;
            let (user, venue, count) = match (rec.get(0), rec.get(1), rec.get(2)) {
                (Some(u), Some(v), Some(c)) => (u, v, c),
                _ => return Err(fmt(format!("short row: {rec:?}"))),
            };
            let count: u64 = count
                .parse()
                .map_err(|_| fmt(format!("bad count `{count}`")))?;
            if !venue.is_empty() {
                venues.push(venue.to_string());
            }
            if !user.is_empty() {
                let entry = users.entry(user.to_string()).or_default();
                if !venue.is_empty() {
                    entry.push((venue.to_string(), count));
                }
            }
        }
        let vocab = Arc::new(Vocabulary::new(venues));
        if vocab.len() != vocab_size {
            return Err(fmt(format!(
                "vocab_size {vocab_size} but {} venues listed",
                vocab.len()
            )));
        }
        let models = users
            .into_iter()
            .map(|(user, counts)| {
                let venues = counts
                    .iter()
                    .flat_map(|(v, n)| std::iter::repeat_n(v.as_str(), *n as usize));
                build_user_model(user, venues, alpha, vocab.clone())
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(models)
    }
}

/// Relative margin below which two scores count as tied. Posteriors that
/// are equal as exact rationals (2*3 vs 1*6) can differ by an ulp in log
/// space; distinct integer-count posteriors differ by far more than this.
pub const TIE_MARGIN: f64 = 1e-12;

/// Index of the first maximum, treating scores within [`TIE_MARGIN`] as
/// equal; NaN never wins.
fn argmax_first(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        let b = scores[best];
        if b.is_nan() || s - b > TIE_MARGIN * b.abs().max(1.0) {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab(n: usize) -> Arc<Vocabulary> {
        Arc::new(Vocabulary::new((1..=n).map(|i| format!("v{i}"))))
    }

    fn model(user: &str, counts: &[u64], alpha: f64) -> UserModel {
        let venues = counts
            .iter()
            .enumerate()
            .flat_map(|(i, &n)| std::iter::repeat_n(format!("v{}", i + 1), n as usize));
        build_user_model(user, venues, alpha, vocab(counts.len())).unwrap()
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn smoothed_probabilities() {
        let m = model("u", &[3, 1, 0], 1.0);
        assert!(close(m.probability("v1").unwrap(), 4.0 / 7.0));
        assert!(close(m.probability("v2").unwrap(), 2.0 / 7.0));
        assert!(close(m.probability("v3").unwrap(), 1.0 / 7.0));

        let empty = build_user_model("u", Vec::<String>::new(), 1.0, vocab(5)).unwrap();
        for i in 1..=5 {
            assert!(close(empty.probability(&format!("v{i}")).unwrap(), 0.2));
        }

        let single = model("u", &[2], 0.5);
        assert_eq!(single.probability("v1").unwrap(), 1.0);
    }

    #[test]
    fn non_positive_alpha_is_rejected() {
        for a in [0.0, -1.0, f64::NAN, f64::INFINITY] {
            assert!(matches!(
                build_user_model("u", ["v1"], a, vocab(1)),
                Err(AttackError::BadAlpha(_))
            ));
        }
    }

    #[test]
    fn log_likelihood_examples() {
        let m = model("u", &[3, 1, 0], 1.0);
        assert!(close(
            m.log_likelihood(&["v1"]).unwrap(),
            (4.0f64 / 7.0).ln()
        ));
        assert!(close(
            log_likelihood(&m, &["v1", "v2"]).unwrap(),
            (4.0f64 / 7.0).ln() + (2.0f64 / 7.0).ln()
        ));
        let floor = m.log_likelihood(&["v3"]).unwrap();
        assert!(floor.is_finite());
        assert!(close(floor, (1.0f64 / 7.0).ln()));
        assert_eq!(
            m.log_likelihood(&["nowhere"]),
            Err(AttackError::UnknownVenue("nowhere".into()))
        );
        assert_eq!(m.log_likelihood::<&str>(&[]), Err(AttackError::EmptyTest));
    }

    #[test]
    fn single_candidate_always_wins() {
        let bank = ModelBank::new(vec![model("only", &[0, 5, 1], 1.0)]).unwrap();
        assert_eq!(bank.identify(&["v1"]).unwrap().predicted, "only");
        assert_eq!(bank.identify_prefixes(&[0, 2, 1]).unwrap(), [0, 0, 0]);
    }

    #[test]
    fn disjoint_histories_identify_the_owner() {
        let bank =
            ModelBank::new(vec![model("b", &[0, 4], 1.0), model("a", &[4, 0], 1.0)]).unwrap();
        assert_eq!(bank.identify(&["v1"]).unwrap().predicted, "a");
        assert_eq!(bank.identify(&["v2"]).unwrap().predicted, "b");
    }

    #[test]
    fn ties_go_to_smallest_user_id() {
        let bank =
            ModelBank::new(vec![model("z", &[2, 2], 1.0), model("m", &[2, 2], 1.0)]).unwrap();
        let id = bank.identify(&["v1", "v2"]).unwrap();
        assert_eq!(id.predicted, "m");
        assert_eq!(id.scores["m"], id.scores["z"]);
    }

    #[test]
    fn bank_rejects_mixed_parameters() {
        assert_eq!(
            ModelBank::new(vec![model("a", &[1], 1.0), model("b", &[1], 2.0)]).unwrap_err(),
            AttackError::Inconsistent("alpha")
        );
        assert_eq!(
            ModelBank::new(vec![model("a", &[1], 1.0), model("b", &[1, 1], 1.0)]).unwrap_err(),
            AttackError::Inconsistent("vocabulary")
        );
        assert_eq!(ModelBank::new(vec![]).unwrap_err(), AttackError::EmptyBank);
    }

    #[test]
    fn export_round_trips() {
        let v = vocab(4);
        let bank = ModelBank::new(vec![
            build_user_model("u1", ["v1", "v1", "v2"], 0.3, v.clone()).unwrap(),
            build_user_model("u2", Vec::<&str>::new(), 0.3, v.clone()).unwrap(),
            build_user_model("u3", ["v2"], 0.3, v).unwrap(),
        ])
        .unwrap();
        let mut buf = Vec::new();
        bank.write(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("#alpha,0.3\n#vocab_size,4\nuser_id,venue_id,count\n"));
        let back = ModelBank::read(buf.as_slice()).unwrap();
        assert_eq!(back.models(), bank.models());
        assert_eq!(back.alpha(), 0.3);
        assert_eq!(back.vocabulary().len(), 4);
    }
}
