//! Entropy of check-in histograms and Pearson correlation with p-values.

use std::collections::HashMap;
use std::hash::Hash;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("entropy of an empty histogram")]
    EmptyHistogram,
    #[error("correlation needs equal-length inputs, got {0} and {1}")]
    LengthMismatch(usize, usize),
    #[error("correlation needs at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error("correlation undefined: zero variance in {0}")]
    ZeroVariance(&'static str),
    #[error("non-finite input value")]
    NonFinite,
}

/// Shannon entropy in bits of a count histogram; zero counts contribute nothing.
pub fn entropy_from_counts(counts: &[u64]) -> Result<f64, StatsError> {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(StatsError::EmptyHistogram);
    }
    let total = total as f64;
    let h: f64 = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.log2()
        })
        .sum();
    // -0.0 for a single-venue histogram
    Ok(h.max(0.0))
}

/// Entropy (bits) of the histogram of visited venues.
pub fn user_entropy<I, K>(venues: I) -> Result<f64, StatsError>
where
    I: IntoIterator<Item = K>,
    K: Eq + Hash + Ord,
{
    let mut hist: HashMap<K, u64> = HashMap::new();
    for v in venues {
        *hist.entry(v).or_default() += 1;
    }
    // Sum in a fixed order so the result does not depend on hash iteration.
    let mut counts: Vec<(K, u64)> = hist.into_iter().collect();
    counts.sort_by(|a, b| a.0.cmp(&b.0));
    let counts: Vec<u64> = counts.into_iter().map(|(_, c)| c).collect();
    entropy_from_counts(&counts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PValueMethod {
    StudentT,
    Permutation { permutations: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Correlation {
    pub r: f64,
    pub p_value: f64,
    pub n: usize,
    pub method: PValueMethod,
}

fn check_inputs(xs: &[f64], ys: &[f64]) -> Result<(), StatsError> {
    if xs.len() != ys.len() {
        return Err(StatsError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 3 {
        return Err(StatsError::TooFewPoints(xs.len()));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    Ok(())
}

/// Product-moment correlation coefficient (two-pass, centred sums).
pub fn pearson_r(xs: &[f64], ys: &[f64]) -> Result<f64, StatsError> {
    check_inputs(xs, ys)?;
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(StatsError::ZeroVariance("xs"));
    }
    if syy == 0.0 {
        return Err(StatsError::ZeroVariance("ys"));
    }
    let r = sxy / (sxx.sqrt() * syy.sqrt());
    // Exactly collinear inputs land within a few ulps of ±1.
    if 1.0 - r.abs() <= 16.0 * f64::EPSILON {
        return Ok(r.signum());
    }
    Ok(r.clamp(-1.0, 1.0))
}

/// Pearson r with a two-sided Student-t p-value, `t = r·√((n−2)/(1−r²))`.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<Correlation, StatsError> {
    let r = pearson_r(xs, ys)?;
    Ok(Correlation {
        r,
        p_value: t_test_p_value(r, xs.len()),
        n: xs.len(),
        method: PValueMethod::StudentT,
    })
}

/// Two-sided p-value for correlation `r` over `n` points. With
/// `ν = n − 2` and `t² = ν r² / (1 − r²)`, `P(|T| > |t|) = I_{1−r²}(ν/2, 1/2)`.
pub fn t_test_p_value(r: f64, n: usize) -> f64 {
    let nu = (n - 2) as f64;
    let x = (1.0 - r * r).clamp(0.0, 1.0);
    regularized_incomplete_beta(x, nu / 2.0, 0.5)
}

/// Pearson r with a seeded permutation p-value: the share of shuffles of
/// `ys` whose |r| reaches the observed |r| (add-one smoothed).
pub fn pearson_permutation(
    xs: &[f64],
    ys: &[f64],
    permutations: usize,
    seed: u64,
) -> Result<Correlation, StatsError> {
    let r = pearson_r(xs, ys)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shuffled = ys.to_vec();
    let threshold = r.abs() * (1.0 - 1e-12);
    let mut hits = 0usize;
    for _ in 0..permutations {
        shuffled.shuffle(&mut rng);
        if pearson_r(xs, &shuffled)?.abs() >= threshold {
            hits += 1;
        }
    }
    Ok(Correlation {
        r,
        p_value: (hits + 1) as f64 / (permutations + 1) as f64,
        n: xs.len(),
        method: PValueMethod::Permutation { permutations, seed },
    })
}

/// Below this many points the permutation p-value is used.
pub const PERMUTATION_BELOW_N: usize = 5;
pub const DEFAULT_PERMUTATIONS: usize = 10_000;

/// Student-t p-value, or the permutation fallback for n < 5.
pub fn pearson_auto(xs: &[f64], ys: &[f64], seed: u64) -> Result<Correlation, StatsError> {
    if xs.len() < PERMUTATION_BELOW_N {
        pearson_permutation(xs, ys, DEFAULT_PERMUTATIONS, seed)
    } else {
        pearson(xs, ys)
    }
}

/// ln Γ(x) for x > 0 (Lanczos, g = 7, n = 9).
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + G + 0.5;
    for (i, c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Regularized incomplete beta function I_x(a, b), via the continued
/// fraction (modified Lentz) on whichever side converges fastest.
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(x, a, b) / a
    } else {
        1.0 - front * beta_continued_fraction(1.0 - x, b, a) / b
    }
}

fn beta_continued_fraction(x: f64, a: f64, b: f64) -> f64 {
    const MAX_ITER: usize = 10_000;
    const EPS: f64 = 3e-16;
    const TINY: f64 = 1e-300;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Sample variance (n − 1 denominator); 0 for fewer than two values.
pub fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
}
