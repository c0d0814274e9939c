//! Online class discovery over a stream of symbolized epochs.
//!
//! Every epoch is scored against all known classes. A Chinese Restaurant
//! Process weight `γ = ε / (Σ μ + b ε)` reserves probability for a new class,
//! where `b ∈ {1, 2}` is chosen from the recent likelihood change rate of every
//! class: `b = 1` only when all classes lost more than `ν` on average over the
//! last `Δ` epochs. A stickiness floor then guarantees the most recent class at
//! least `κ` of the posterior before a class is sampled.
//!
//! Scores are kept as logarithms until the posterior is formed. The posterior
//! is invariant to a common scale factor on all scores except through `γ`, so
//! masses are computed relative to `Σ μ` and `γ` is evaluated in the log domain.
//! This keeps the arithmetic exact in every concentration unit, including the
//! raw predictive, whose values underflow any floating-point type.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{HsdfError, Result};
use crate::likelihood::{log_predictive, LogLikelihood};
use crate::scalar::{log_add_exp, log_sum_exp, Real};
use crate::symbolic::{CountMatrix, PfsaModel};

/// Unit in which class likelihoods enter the CRP and the change-rate gate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConcentrationMode {
    /// The posterior predictive `μ` itself.
    RawLog,
    /// Geometric mean per symbol, `exp(ln μ / L)`.
    PerSymbol,
    /// Ratio of `μ` to the predictive of the same epoch under an untrained
    /// class (`N = 0`), i.e. the Bayes factor of class `i` against a fresh one.
    PerEpochNormalized,
    /// `exp(c − a)`, where the atypicality `a` measures how far `ln μ` falls
    /// below the median of the log-likelihoods the class recently absorbed,
    /// or rises above the best of them, in units of their step-to-step spread.
    #[default]
    Standardized,
}

impl std::str::FromStr for ConcentrationMode {
    type Err = HsdfError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw-log" | "raw" => Ok(Self::RawLog),
            "per-symbol" => Ok(Self::PerSymbol),
            "per-epoch-normalized" | "normalized" => Ok(Self::PerEpochNormalized),
            "standardized" => Ok(Self::Standardized),
            other => Err(HsdfError::InvalidConfig(format!("unknown concentration mode `{other}`"))),
        }
    }
}

/// Whether `b` adapts to the likelihood change rate or is pinned to 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CrpMode {
    Classical,
    #[default]
    Adaptive,
}

impl std::str::FromStr for CrpMode {
    type Err = HsdfError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classical" => Ok(Self::Classical),
            "adaptive" => Ok(Self::Adaptive),
            other => Err(HsdfError::InvalidConfig(format!("unknown CRP mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingMode {
    /// Inverse-CDF draw from the posterior.
    #[default]
    Sample,
    /// Most probable class; ties go to the lowest index.
    Argmax,
}

/// Hyperparameters of the online classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HsdfConfig<T> {
    /// CRP parameter ε.
    pub epsilon: T,
    /// Stickiness κ ∈ (0, 1).
    pub kappa: T,
    /// Likelihood-rate memory Δ.
    pub delta: usize,
    /// Likelihood-rate threshold ν, in concentration units.
    pub nu: T,
    pub depth: usize,
    pub alphabet_size: usize,
    pub rng_seed: u64,
    pub concentration_mode: ConcentrationMode,
    /// Number of absorbed epochs a class remembers for standardization.
    pub fit_window: usize,
    /// Lower bound on the standardization spread, in nats.
    pub fit_floor: T,
    /// Offset `c` of the standardized log score.
    pub fit_offset: T,
    pub crp_mode: CrpMode,
    pub sampling: SamplingMode,
}

impl<T: Real> Default for HsdfConfig<T> {
    fn default() -> Self {
        Self {
            epsilon: T::lit(0.02),
            kappa: T::lit(0.6),
            delta: 4,
            nu: T::lit(0.05),
            depth: 1,
            alphabet_size: 7,
            rng_seed: 0,
            concentration_mode: ConcentrationMode::default(),
            fit_window: 32,
            fit_floor: T::lit(0.1),
            fit_offset: T::lit(4.0),
            crp_mode: CrpMode::default(),
            sampling: SamplingMode::default(),
        }
    }
}

impl<T: Real> HsdfConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(HsdfError::InvalidConfig(msg.to_string()));
        if !(self.epsilon > T::zero() && self.epsilon.is_finite()) {
            return bad("epsilon must be positive");
        }
        if !(self.kappa > T::zero() && self.kappa < T::one()) {
            return bad("kappa must lie in (0, 1)");
        }
        if self.delta == 0 {
            return bad("delta must be at least 1");
        }
        if !(self.nu > T::zero() && self.nu.is_finite()) {
            return bad("nu must be positive");
        }
        if self.fit_window < 2 {
            return bad("fit_window must be at least 2");
        }
        if !(self.fit_floor > T::zero() && self.fit_floor.is_finite() && self.fit_offset.is_finite()) {
            return bad("fit_floor must be positive and fit_offset finite");
        }
        if self.alphabet_size < 2 {
            return Err(HsdfError::AlphabetTooSmall(self.alphabet_size));
        }
        Ok(())
    }
}

/// Discovered classes plus the per-class likelihood memory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRegistry<T> {
    pub models: Vec<PfsaModel<T>>,
    pub last_class: usize,
    /// Most recent concentration-unit score first.
    history: Vec<VecDeque<T>>,
    /// `ln μ` of the epochs each class absorbed, most recent first.
    fits: Vec<VecDeque<T>>,
    delta: usize,
    fit_window: usize,
}

impl<T: Real> ClassRegistry<T> {
    /// Seeds the registry with one class built from the first epoch.
    pub fn initialize(first_epoch: &CountMatrix, config: &HsdfConfig<T>) -> Result<Self> {
        config.validate()?;
        if first_epoch.mass() == 0 {
            return Err(HsdfError::InvalidConfig("first epoch has no transitions".into()));
        }
        if first_epoch.alphabet_size() != config.alphabet_size || first_epoch.depth() != config.depth {
            return Err(HsdfError::DimensionMismatch {
                expected: format!("|Ξ|={} D={}", config.alphabet_size, config.depth),
                found: format!("|Ξ|={} D={}", first_epoch.alphabet_size(), first_epoch.depth()),
            });
        }
        Ok(Self {
            models: vec![PfsaModel::new(0, first_epoch.clone())],
            last_class: 0,
            history: vec![VecDeque::with_capacity(config.delta)],
            fits: vec![VecDeque::new()],
            delta: config.delta,
            fit_window: config.fit_window,
        })
    }

    /// Rebuilds a registry from existing models; histories start empty.
    pub fn from_models(models: Vec<PfsaModel<T>>, last_class: usize, delta: usize, fit_window: usize) -> Result<Self> {
        if models.is_empty() || last_class >= models.len() || delta == 0 || fit_window < 2 {
            return Err(HsdfError::InvalidConfig(
                "registry needs ≥1 model, a valid last class, Δ ≥ 1 and a fit window ≥ 2".into(),
            ));
        }
        let k = models.len();
        Ok(Self {
            models,
            last_class,
            history: vec![VecDeque::with_capacity(delta); k],
            fits: vec![VecDeque::new(); k],
            delta,
            fit_window,
        })
    }

    pub fn class_count(&self) -> usize {
        self.models.len()
    }

    pub fn delta(&self) -> usize {
        self.delta
    }

    pub fn fit_window(&self) -> usize {
        self.fit_window
    }

    /// Recorded scores of a class, most recent first.
    pub fn history(&self, class: usize) -> &VecDeque<T> {
        &self.history[class]
    }

    pub fn history_full(&self) -> bool {
        self.history.iter().all(|h| h.len() >= self.delta)
    }

    fn push_history(&mut self, scores: &[T]) {
        for (h, &s) in self.history.iter_mut().zip(scores) {
            if h.len() == self.delta {
                h.pop_back();
            }
            h.push_front(s);
        }
    }

    /// Log-likelihoods of the epochs a class absorbed, most recent first.
    pub fn fits(&self, class: usize) -> &VecDeque<T> {
        &self.fits[class]
    }

    fn push_fit(&mut self, class: usize, log_likelihood: T) {
        let f = &mut self.fits[class];
        if f.len() == self.fit_window {
            f.pop_back();
        }
        f.push_front(log_likelihood);
    }

    fn add_class(&mut self, counts: CountMatrix) -> usize {
        let id = self.models.len();
        self.models.push(PfsaModel::new(id, counts));
        self.history.push(VecDeque::with_capacity(self.delta));
        self.fits.push(VecDeque::new());
        id
    }

    /// Atypicality of a log-likelihood for a class, in units of a spread
    /// estimated from successive differences of its recent fits. Both a
    /// shortfall below the median fit and an excess above the best fit count.
    /// Zero until the class has absorbed two epochs.
    pub fn atypicality(&self, class: usize, log_likelihood: T, floor: T) -> T {
        let f = &self.fits[class];
        if f.len() < 2 {
            return T::zero();
        }
        let center = median(f.iter().copied().collect());
        let best = f.iter().copied().fold(T::neg_infinity(), T::max);
        let steps: Vec<T> = f.iter().zip(f.iter().skip(1)).map(|(&a, &b)| (a - b).abs()).collect();
        let spread = (T::lit(1.4826 / std::f64::consts::SQRT_2) * median(steps)).max(floor);
        let shortfall = (center - log_likelihood).max(T::zero());
        let excess = (log_likelihood - best).max(T::zero());
        (shortfall + excess) / spread
    }

    /// Total transition mass absorbed by all classes.
    pub fn total_mass(&self) -> u64 {
        self.models.iter().map(PfsaModel::training_length).sum()
    }
}

fn median<T: Real>(mut v: Vec<T>) -> T {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / T::lit(2.0)
    }
}

/// `A(Δ, i)`: mean of (historical − current) score per class.
pub fn likelihood_rate<T: Real>(
    registry: &ClassRegistry<T>,
    current_scores: &[T],
    delta: usize,
) -> Result<Vec<T>> {
    if current_scores.len() != registry.class_count() {
        return Err(HsdfError::DimensionMismatch {
            expected: format!("{} scores", registry.class_count()),
            found: format!("{} scores", current_scores.len()),
        });
    }
    if delta == 0 {
        return Err(HsdfError::InvalidConfig("delta must be at least 1".into()));
    }
    let d = T::from_usize(delta).unwrap();
    current_scores
        .iter()
        .enumerate()
        .map(|(class, &now)| {
            let h = registry.history(class);
            if h.len() < delta {
                return Err(HsdfError::InsufficientHistory {
                    class,
                    have: h.len(),
                    need: delta,
                });
            }
            Ok(h.iter().take(delta).map(|&past| past - now).sum::<T>() / d)
        })
        .collect()
}

/// `γ = ε / (Σ scores + b ε)`.
pub fn crp_gamma<T: Real>(scores: &[T], epsilon: T, b: u8) -> T {
    let total: T = scores.iter().copied().sum();
    epsilon / (total + T::from_u8(b).unwrap() * epsilon)
}

/// `γ` from log-domain scores; exact where the linear form would underflow.
pub fn crp_gamma_log<T: Real>(log_scores: &[T], epsilon: T, b: u8) -> T {
    let log_total = log_sum_exp(log_scores);
    let log_b_eps = (T::from_u8(b).unwrap() * epsilon).ln();
    (epsilon.ln() - log_add_exp(log_total, log_b_eps)).exp()
}

/// Per-epoch output of the classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentRecord<T> {
    pub epoch_id: usize,
    /// `ln μ(S̃|S^i)` for each existing class.
    pub log_likelihoods: Vec<T>,
    /// Natural log of the concentration-unit scores.
    pub log_scores: Vec<T>,
    /// Concentration-unit scores, saturated to the finite range.
    pub class_scores: Vec<T>,
    /// `A(Δ, i)`, when every class had a full history.
    pub rate: Option<Vec<T>>,
    pub gamma: T,
    pub b_used: u8,
    /// Post-stickiness masses for classes `0..K` and the new class, in units
    /// of `Σ μ`.
    pub adjusted_scores: Vec<T>,
    /// Normalized new-class probability before stickiness (equals γ).
    pub new_class_prior: T,
    pub posterior: Vec<T>,
    pub last_class: usize,
    pub chosen: usize,
    pub new_class_created: bool,
}

fn concentration_log_scores<T: Real>(
    registry: &ClassRegistry<T>,
    epoch: &CountMatrix,
    config: &HsdfConfig<T>,
) -> Result<(Vec<T>, Vec<T>)> {
    let lls: Vec<LogLikelihood<T>> = registry
        .models
        .iter()
        .map(|m| log_predictive(m.counts(), epoch))
        .collect::<Result<_>>()?;
    let raw: Vec<T> = lls.iter().map(|l| l.value).collect();
    let scores = match config.concentration_mode {
        ConcentrationMode::RawLog => raw.clone(),
        ConcentrationMode::PerSymbol => lls.iter().map(|l| l.per_symbol).collect(),
        ConcentrationMode::PerEpochNormalized => {
            let empty = CountMatrix::zeros(epoch.alphabet_size(), epoch.depth())?;
            let reference = log_predictive::<T>(&empty, epoch)?.value;
            raw.iter().map(|&v| v - reference).collect()
        }
        ConcentrationMode::Standardized => raw
            .iter()
            .enumerate()
            .map(|(i, &v)| config.fit_offset - registry.atypicality(i, v, config.fit_floor))
            .collect(),
    };
    Ok((raw, scores))
}

fn saturating_exp<T: Real>(x: T) -> T {
    x.exp().min(T::max_value())
}

/// Scores one epoch, samples its class and updates the registry.
pub fn score_and_assign<T: Real, R: Rng + ?Sized>(
    registry: &mut ClassRegistry<T>,
    epoch: &CountMatrix,
    epoch_id: usize,
    config: &HsdfConfig<T>,
    rng: &mut R,
) -> Result<AssignmentRecord<T>> {
    let k = registry.class_count();
    let (log_likelihoods, log_scores) =
        concentration_log_scores(registry, epoch, config)?;
    let class_scores: Vec<T> = log_scores.iter().map(|&l| saturating_exp(l)).collect();

    let rate = if registry.history_full() {
        Some(likelihood_rate(registry, &class_scores, config.delta)?)
    } else {
        None
    };
    let b = match config.crp_mode {
        CrpMode::Classical => 1,
        CrpMode::Adaptive => match &rate {
            Some(a) if a.iter().all(|&ai| ai > config.nu) => 1,
            _ => 2,
        },
    };
    let gamma = crp_gamma_log(&log_scores, config.epsilon, b);

    // Masses relative to Σ μ: existing (1−γ) w_i, new γ.
    let log_total = log_sum_exp(&log_scores);
    let one_minus = T::one() - gamma;
    let mut masses: Vec<T> = log_scores
        .iter()
        .map(|&l| one_minus * (l - log_total).exp())
        .collect();
    masses.push(gamma);
    let pre_total: T = masses.iter().copied().sum();
    let new_class_prior = gamma / pre_total;

    let last = registry.last_class;
    let floor = config.kappa / (T::one() - config.kappa) * pre_total;
    masses[last] = masses[last].max(floor);

    let post_total: T = masses.iter().copied().sum();
    if !(post_total > T::zero() && post_total.is_finite()) {
        return Err(HsdfError::DegeneratePosterior);
    }
    let posterior: Vec<T> = masses.iter().map(|&m| m / post_total).collect();

    let chosen = match config.sampling {
        SamplingMode::Sample => sample_index(&posterior, rng),
        SamplingMode::Argmax => posterior
            .iter()
            .enumerate()
            .fold((0, T::neg_infinity()), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
            .0,
    };

    registry.push_history(&class_scores);
    let new_class_created = chosen == k;
    if new_class_created {
        registry.add_class(epoch.clone());
    } else {
        registry.models[chosen].update(epoch)?;
        registry.push_fit(chosen, log_likelihoods[chosen]);
    }
    registry.last_class = chosen;

    Ok(AssignmentRecord {
        epoch_id,
        log_likelihoods,
        log_scores,
        class_scores,
        rate,
        gamma,
        b_used: b,
        adjusted_scores: masses,
        new_class_prior,
        posterior,
        last_class: last,
        chosen,
        new_class_created,
    })
}

fn sample_index<T: Real, R: Rng + ?Sized>(probs: &[T], rng: &mut R) -> usize {
    let u = T::lit(rng.gen::<f64>());
    let mut acc = T::zero();
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Rounding left u above the last partial sum: take the last nonzero entry.
    probs.iter().rposition(|&p| p > T::zero()).unwrap_or(probs.len() - 1)
}

/// Result of processing a whole stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamOutcome<T> {
    pub registry: ClassRegistry<T>,
    /// One record per epoch after the first.
    pub records: Vec<AssignmentRecord<T>>,
}

impl<T: Real> StreamOutcome<T> {
    /// Class label of every epoch, including the initializing one.
    pub fn labels(&self) -> Vec<usize> {
        std::iter::once(0)
            .chain(self.records.iter().map(|r| r.chosen))
            .collect()
    }
}

/// Runs the online classifier over epoch count matrices in arrival order.
pub fn run_stream<T: Real>(epochs: &[CountMatrix], config: &HsdfConfig<T>) -> Result<StreamOutcome<T>> {
    let (first, rest) = epochs
        .split_first()
        .ok_or_else(|| HsdfError::InvalidConfig("stream has no epochs".into()))?;
    let mut registry = ClassRegistry::initialize(first, config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let records = rest
        .iter()
        .enumerate()
        .map(|(j, epoch)| score_and_assign(&mut registry, epoch, j + 1, config, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(StreamOutcome { registry, records })
}
