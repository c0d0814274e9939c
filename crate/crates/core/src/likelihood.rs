//! Dirichlet-multinomial posterior predictive of a test epoch under a class.
//!
//! Each morph row of a class is given a Dirichlet prior with `α_mn = N_mn + 1`.
//! Integrating the multinomial likelihood of the test counts `Ñ` against it gives
//!
//! ```text
//! μ(S̃|S) = Π_m  Ñ_m! (N_m+|Ξ|−1)! / (Ñ_m+N_m+|Ξ|−1)!  ·  Π_n (Ñ_mn+N_mn)! / (Ñ_mn! N_mn!)
//! ```
//!
//! All routines work in the natural-log domain; the raw product underflows long
//! before an epoch of a thousand symbols.

use serde::{Deserialize, Serialize};

use crate::error::{HsdfError, Result};
use crate::scalar::{xlnx, Real};
use crate::symbolic::{CountMatrix, PfsaModel};

/// Log posterior predictive of one test epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLikelihood<T> {
    /// `ln μ`.
    pub value: T,
    /// `ln μ` divided by the test mass (0 for an empty test matrix).
    pub per_symbol: T,
}

impl<T: Real> LogLikelihood<T> {
    fn new(value: T, test_mass: u64) -> Self {
        let per_symbol = if test_mass == 0 {
            T::zero()
        } else {
            value / T::from_count(test_mass)
        };
        Self { value, per_symbol }
    }
}

/// Dirichlet concentration `α = N + 1` for every morph row of a class.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletParams<T> {
    alphabet_size: usize,
    alpha: Vec<T>,
}

impl<T: Real> DirichletParams<T> {
    pub fn from_counts(counts: &CountMatrix) -> Self {
        Self {
            alphabet_size: counts.alphabet_size(),
            alpha: counts
                .as_slice()
                .iter()
                .map(|&c| T::from_count(c) + T::one())
                .collect(),
        }
    }

    pub fn row(&self, state: usize) -> &[T] {
        let k = self.alphabet_size;
        &self.alpha[state * k..(state + 1) * k]
    }

    /// `ln B(α_m) = Σ_n lnΓ(α_mn) − lnΓ(Σ_n α_mn)`.
    pub fn log_normalizer(&self, state: usize) -> T {
        let row = self.row(state);
        let total: T = row.iter().copied().sum();
        row.iter().map(|a| a.ln_gamma()).sum::<T>() - total.ln_gamma()
    }
}

/// Exact `ln μ(test | train)` via log-gamma.
pub fn log_predictive<T: Real>(train: &CountMatrix, test: &CountMatrix) -> Result<LogLikelihood<T>> {
    train.check_shape(test)?;
    let k = T::from_usize(train.alphabet_size()).unwrap();
    let lf = |n: u64| T::from_count(n + 1).ln_gamma();
    let mut total = T::zero();
    for (train_row, test_row) in train.rows().zip(test.rows()) {
        let test_m: u64 = test_row.iter().sum();
        if test_m == 0 {
            continue;
        }
        let train_m: u64 = train_row.iter().sum();
        let big_train = T::from_count(train_m) + k;
        let mut row = lf(test_m) + big_train.ln_gamma() - (big_train + T::from_count(test_m)).ln_gamma();
        for (&n, &t) in train_row.iter().zip(test_row) {
            if t > 0 {
                row += lf(t + n) - lf(t) - lf(n);
            }
        }
        total += row;
    }
    Ok(LogLikelihood::new(total, test.mass()))
}

/// `ln μ` with every `ln x!` replaced by Stirling's `x ln x − x`.
pub fn log_predictive_stirling<T: Real>(
    train: &CountMatrix,
    test: &CountMatrix,
) -> Result<LogLikelihood<T>> {
    stirling_with(train, test, |n: u64| {
        let x = T::from_count(n);
        xlnx(x) - x
    })
}

/// `ln μ` with every `ln x!` replaced by `x ln x − x + ½ ln(2πx)`.
pub fn log_predictive_stirling_corrected<T: Real>(
    train: &CountMatrix,
    test: &CountMatrix,
) -> Result<LogLikelihood<T>> {
    stirling_with(train, test, |n: u64| {
        if n == 0 {
            return T::zero();
        }
        let x = T::from_count(n);
        x * x.ln() - x + T::lit(0.5) * (T::lit(std::f64::consts::TAU) * x).ln()
    })
}

fn stirling_with<T: Real>(
    train: &CountMatrix,
    test: &CountMatrix,
    lf: impl Fn(u64) -> T,
) -> Result<LogLikelihood<T>> {
    train.check_shape(test)?;
    let kk = train.alphabet_size() as u64;
    let mut total = T::zero();
    for (train_row, test_row) in train.rows().zip(test.rows()) {
        let test_m: u64 = test_row.iter().sum();
        if test_m == 0 {
            continue;
        }
        let train_m: u64 = train_row.iter().sum();
        let mut row = lf(test_m) + lf(train_m + kk - 1) - lf(test_m + train_m + kk - 1);
        for (&n, &t) in train_row.iter().zip(test_row) {
            if t > 0 {
                row += lf(t + n) - lf(t) - lf(n);
            }
        }
        total += row;
    }
    Ok(LogLikelihood::new(total, test.mass()))
}

/// Unnormalized divergence `Σ_mn α̃_mn ln(α̃_mn / Ω_mn)` with `α̃ = Ñ + 1`.
pub fn kl_divergence<T: Real>(test: &CountMatrix, model: &PfsaModel<T>) -> Result<T> {
    model.counts().check_shape(test)?;
    let k = test.alphabet_size();
    let mut total = T::zero();
    for (m, row) in test.rows().enumerate() {
        for (n, &c) in row.iter().enumerate().take(k) {
            let a = T::from_count(c) + T::one();
            total += a * (a / model.morph(m, n)).ln();
        }
    }
    Ok(total)
}

/// Outcome of comparing likelihood-maximization against KL-minimization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KlEquivalenceReport<T> {
    pub stirling_log_likelihoods: Vec<T>,
    pub kl_divergences: Vec<T>,
    pub argmax_likelihood: usize,
    pub argmin_kl: usize,
    /// True when the two criteria select the same class, or classes with
    /// identical count matrices.
    pub agree: bool,
}

/// Scores `test` against every model with the Stirling predictive and the KL
/// form, and reports whether both select the same class.
pub fn verify_kl_equivalence<T: Real>(
    test: &CountMatrix,
    models: &[PfsaModel<T>],
) -> Result<KlEquivalenceReport<T>> {
    if models.is_empty() {
        return Err(HsdfError::InvalidConfig("no models to compare".into()));
    }
    let stirling = models
        .iter()
        .map(|m| log_predictive_stirling::<T>(m.counts(), test).map(|l| l.value))
        .collect::<Result<Vec<_>>>()?;
    let kl = models
        .iter()
        .map(|m| kl_divergence(test, m))
        .collect::<Result<Vec<_>>>()?;
    let best = argmax(&stirling);
    let closest = argmax(&kl.iter().map(|&v| -v).collect::<Vec<_>>());
    let agree = best == closest || models[best].counts() == models[closest].counts();
    Ok(KlEquivalenceReport {
        stirling_log_likelihoods: stirling,
        kl_divergences: kl,
        argmax_likelihood: best,
        argmin_kl: closest,
        agree,
    })
}

fn argmax<T: Real>(xs: &[T]) -> usize {
    xs.iter()
        .enumerate()
        .fold((0, T::neg_infinity()), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
        .0
}
