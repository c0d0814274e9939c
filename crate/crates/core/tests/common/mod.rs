//! Oracles, generators and invariant checks shared by the integration suites
//! and the acceptance run.
#![allow(dead_code)]

use std::collections::HashMap;

use hsdf::classifier::crp_gamma_log;
use hsdf::likelihood::{
    log_predictive, log_predictive_stirling, log_predictive_stirling_corrected, verify_kl_equivalence,
};
use hsdf::simulators::{integrate_regime, rk4_step, Oscillator, OscillatorState, RegimeSpec};
use hsdf::*;
use num_rational::Ratio;
use num_traits::{One, Zero};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Q = Ratio<i128>;

pub fn cases() -> ProptestConfig {
    ProptestConfig::with_cases(1000)
}

pub fn matrix(flat: &[u64], k: usize, depth: usize) -> CountMatrix {
    let rows: Vec<Vec<u64>> = flat.chunks(k).map(<[u64]>::to_vec).collect();
    CountMatrix::from_rows(&rows, depth).unwrap()
}

/// Probability that a Pólya urn seeded with `train + 1` balls per colour
/// produces exactly the colour counts `test`, summed over every draw order.
pub fn urn_probability(train: &[u64], test: &[u64]) -> Q {
    fn walk(train: &[u64], test: &[u64], drawn: &mut Vec<u64>, p: Q, acc: &mut Q) {
        if drawn.as_slice() == test {
            *acc += p;
            return;
        }
        let balls = train.iter().sum::<u64>() + train.len() as u64 + drawn.iter().sum::<u64>();
        for s in 0..train.len() {
            if drawn[s] < test[s] {
                let q = Q::new((train[s] + 1 + drawn[s]) as i128, balls as i128);
                drawn[s] += 1;
                walk(train, test, drawn, p * q, acc);
                drawn[s] -= 1;
            }
        }
    }
    let mut acc = Q::zero();
    walk(train, test, &mut vec![0; train.len()], Q::one(), &mut acc);
    acc
}

/// Every vector of `cells` non-negative integers with sum at most `budget`.
pub fn compositions(cells: usize, budget: u64, visit: &mut impl FnMut(&[u64])) {
    fn rec(buf: &mut Vec<u64>, cells: usize, left: u64, visit: &mut impl FnMut(&[u64])) {
        if buf.len() == cells {
            visit(buf);
            return;
        }
        for v in 0..=left {
            buf.push(v);
            rec(buf, cells, left - v, visit);
            buf.pop();
        }
    }
    rec(&mut Vec::with_capacity(cells), cells, budget, visit);
}

/// Compares the exact predictive with the urn oracle on every train/test pair
/// with `|Ξ| ≤ 3`, `|Θ| ≤ 3` and combined mass at most 8. Returns the number
/// of instances and the largest absolute deviation in nats.
pub fn oracle_sweep() -> (usize, f64) {
    let mut cache: HashMap<(Vec<u64>, Vec<u64>), Q> = HashMap::new();
    let mut checked = 0usize;
    let mut worst = 0.0f64;
    for &(k, depth) in &[(2usize, 0usize), (3, 0), (2, 1), (3, 1)] {
        let states = k.pow(depth as u32);
        let cells = k * states;
        compositions(2 * cells, 8, &mut |flat| {
            let (train, test) = flat.split_at(cells);
            let mut exact = Q::one();
            for m in 0..states {
                let key = (train[m * k..(m + 1) * k].to_vec(), test[m * k..(m + 1) * k].to_vec());
                exact *= *cache.entry(key).or_insert_with_key(|(a, b)| urn_probability(a, b));
            }
            let expected = (*exact.numer() as f64).ln() - (*exact.denom() as f64).ln();
            let got = log_predictive::<f64>(&matrix(train, k, depth), &matrix(test, k, depth))
                .unwrap()
                .value;
            worst = worst.max((got - expected).abs());
            checked += 1;
        });
    }
    (checked, worst)
}

pub struct StirlingSweep {
    pub instances: usize,
    /// Instances where the first-order backend misses by more than 2%.
    pub first_order_misses: usize,
    pub worst_first_order: f64,
    pub worst_corrected: f64,
    /// Largest first-order error relative to its `O(ln n)` bound.
    pub worst_bound_ratio: f64,
}

/// 1000 random instances with every count at least 50.
pub fn stirling_sweep() -> StirlingSweep {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut sweep = StirlingSweep {
        instances: 1000,
        first_order_misses: 0,
        worst_first_order: 0.0,
        worst_corrected: 0.0,
        worst_bound_ratio: 0.0,
    };
    for _ in 0..sweep.instances {
        let k: usize = rng.gen_range(2..=7);
        let depth: usize = rng.gen_range(0..=1);
        let states = k.pow(depth as u32);
        let train: Vec<u64> = (0..k * states).map(|_| rng.gen_range(50..=5000)).collect();
        let test: Vec<u64> = (0..k * states).map(|_| rng.gen_range(50..=500)).collect();
        let (a, b) = (matrix(&train, k, depth), matrix(&test, k, depth));
        let exact = log_predictive::<f64>(&a, &b).unwrap().value;
        let first = log_predictive_stirling::<f64>(&a, &b).unwrap().value;
        let corrected = log_predictive_stirling_corrected::<f64>(&a, &b).unwrap().value;
        let rel_first = ((first - exact) / exact).abs();
        sweep.first_order_misses += usize::from(rel_first > 0.02);
        sweep.worst_first_order = sweep.worst_first_order.max(rel_first);
        sweep.worst_corrected = sweep.worst_corrected.max(((corrected - exact) / exact).abs());
        // Each row has 3 + 3|Ξ| factorials, each missing ½ ln(2πx).
        let largest = (a.mass() + b.mass() + k as u64) as f64;
        let bound = states as f64 * (3.0 + 3.0 * k as f64) * 0.5 * (std::f64::consts::TAU * largest).ln();
        sweep.worst_bound_ratio = sweep.worst_bound_ratio.max((first - exact).abs() / bound);
    }
    sweep
}

pub fn sample_row(rng: &mut ChaCha8Rng, probs: &[f64], n: u64) -> Vec<u64> {
    let mut out = vec![0u64; probs.len()];
    for _ in 0..n {
        let mut u: f64 = rng.gen();
        let mut pick = probs.len() - 1;
        for (i, &p) in probs.iter().enumerate() {
            if u < p {
                pick = i;
                break;
            }
            u -= p;
        }
        out[pick] += 1;
    }
    out
}

fn random_morph(rng: &mut ChaCha8Rng, states: usize, k: usize) -> Vec<Vec<f64>> {
    (0..states)
        .map(|_| {
            let w: Vec<f64> = (0..k).map(|_| rng.gen::<f64>() + 0.05).collect();
            let s: f64 = w.iter().sum();
            w.into_iter().map(|v| v / s).collect()
        })
        .collect()
}

/// Agreements of likelihood-argmax and KL-argmin over 100 instances with
/// 2000 training and 300 test symbols per state.
pub fn kl_agreement() -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (k, depth) = (7usize, 1usize);
    let mut agree = 0;
    for _ in 0..100 {
        let n_models = rng.gen_range(2..=5);
        let morphs: Vec<Vec<Vec<f64>>> = (0..n_models).map(|_| random_morph(&mut rng, k, k)).collect();
        let models: Vec<PfsaModel64> = morphs
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let flat: Vec<u64> = m.iter().flat_map(|row| sample_row(&mut rng, row, 2000)).collect();
                PfsaModel64::new(i, matrix(&flat, k, depth))
            })
            .collect();
        let truth = rng.gen_range(0..n_models);
        let flat: Vec<u64> = morphs[truth].iter().flat_map(|row| sample_row(&mut rng, row, 300)).collect();
        agree += usize::from(verify_kl_equivalence(&matrix(&flat, k, depth), &models).unwrap().agree);
    }
    agree
}

pub fn linear_oscillator(beta: f64) -> RegimeSpec<f64> {
    RegimeSpec {
        name: "linear".into(),
        oscillator: Oscillator::Duffing {
            beta,
            alpha1: 1.0,
            lambda: 0.0,
            amplitude: 0.0,
            omega: 0.0,
        },
        dt: 1e-3,
        substeps: 1,
    }
}

/// Largest deviation from `e^{−t/2}(cos ω t + sin ω t / 2ω)` over 10 s.
pub fn damped_oscillator_error() -> f64 {
    let (xs, _) = integrate_regime(&linear_oscillator(1.0), OscillatorState::new(1.0, 0.0), 10_000).unwrap();
    let wd = 3f64.sqrt() / 2.0;
    xs.iter()
        .enumerate()
        .map(|(i, x)| {
            let t = (i + 1) as f64 * 1e-3;
            (x - (-t / 2.0).exp() * ((wd * t).cos() + (wd * t).sin() / (2.0 * wd))).abs()
        })
        .fold(0.0, f64::max)
}

/// Energy drift of the undamped oscillator after 10⁴ steps of 1e−3.
pub fn energy_drift() -> f64 {
    let osc = linear_oscillator(0.0).oscillator;
    let mut s = OscillatorState::new(1.0, 0.0);
    for _ in 0..10_000 {
        s = rk4_step(&osc, s, 1e-3);
    }
    ((s.v * s.v + s.x * s.x) / 2.0 - 0.5).abs()
}

pub fn counts_of(symbols: &[usize], k: usize, depth: usize) -> CountMatrix {
    SymbolString::new(symbols.to_vec(), k, 0)
        .unwrap()
        .count_transitions(depth)
        .unwrap()
}

/// Alphabet size, depth and a batch of symbol strings over that alphabet.
pub fn symbol_epochs(max_epochs: usize) -> impl Strategy<Value = (usize, usize, Vec<Vec<usize>>)> {
    (2usize..=4, 0usize..=1).prop_flat_map(move |(k, depth)| {
        let epoch = prop::collection::vec(0..k, 4..120);
        (Just(k), Just(depth), prop::collection::vec(epoch, 2..=max_epochs))
    })
}

pub fn count_matrix(k: usize, depth: usize, max: u64) -> impl Strategy<Value = CountMatrix> {
    prop::collection::vec(0..=max, k * k.pow(depth as u32)).prop_map(move |flat| matrix(&flat, k, depth))
}

fn hsdf_config(k: usize, depth: usize) -> impl Strategy<Value = HsdfConfig64> {
    (
        0.001f64..2.0,
        0.05f64..0.95,
        1usize..=5,
        1e-6f64..0.5,
        prop_oneof![
            Just(ConcentrationMode::RawLog),
            Just(ConcentrationMode::PerSymbol),
            Just(ConcentrationMode::PerEpochNormalized),
            Just(ConcentrationMode::Standardized),
        ],
        prop_oneof![Just(CrpMode::Classical), Just(CrpMode::Adaptive)],
        prop_oneof![Just(SamplingMode::Sample), Just(SamplingMode::Argmax)],
        any::<u64>(),
    )
        .prop_map(move |(epsilon, kappa, delta, nu, mode, crp, sampling, seed)| HsdfConfig {
            epsilon,
            kappa,
            delta,
            nu,
            depth,
            alphabet_size: k,
            rng_seed: seed,
            concentration_mode: mode,
            crp_mode: crp,
            sampling,
            ..HsdfConfig::default()
        })
}

/// A random configuration with a stream of epoch counts to run it on.
pub fn stream_case() -> impl Strategy<Value = (HsdfConfig64, Vec<CountMatrix>)> {
    symbol_epochs(16).prop_flat_map(|(k, depth, epochs)| {
        let counts: Vec<CountMatrix> = epochs.iter().map(|e| counts_of(e, k, depth)).collect();
        (hsdf_config(k, depth), Just(counts))
    })
}

pub fn three_models() -> impl Strategy<Value = [PfsaModel64; 3]> {
    (2usize..=4, 0usize..=1).prop_flat_map(|(k, depth)| {
        (count_matrix(k, depth, 40), count_matrix(k, depth, 40), count_matrix(k, depth, 40))
            .prop_map(|(a, b, c)| [PfsaModel::new(0, a), PfsaModel::new(1, b), PfsaModel::new(2, c)])
    })
}

/// Normalization, stickiness floor and pre-stickiness γ on every epoch, plus
/// the `b` schedule and a nondecreasing class count.
pub fn check_posteriors(cfg: &HsdfConfig64, counts: &[CountMatrix]) -> Result<(), TestCaseError> {
    let out = run_stream(counts, cfg).unwrap();
    let mut classes = 1;
    for (j, rec) in out.records.iter().enumerate() {
        let total: f64 = rec.posterior.iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-12, "posterior sums to {}", total);
        prop_assert!(rec.posterior[rec.last_class] >= cfg.kappa - 1e-12);
        prop_assert!((rec.new_class_prior - rec.gamma).abs() <= 1e-12);
        let expected = crp_gamma_log(&rec.log_scores, cfg.epsilon, rec.b_used);
        prop_assert!((rec.gamma - expected).abs() <= 1e-12);
        if cfg.crp_mode == CrpMode::Classical {
            prop_assert_eq!(rec.b_used, 1);
        } else if j < cfg.delta {
            prop_assert_eq!(rec.b_used, 2);
        }
        let now = rec.log_likelihoods.len() + usize::from(rec.new_class_created);
        prop_assert!(now >= classes);
        classes = now;
    }
    Ok(())
}

pub fn check_morph_rows(k: usize, depth: usize, epochs: &[Vec<usize>]) -> Result<(), TestCaseError> {
    let mut model = PfsaModel64::new(0, counts_of(&epochs[0], k, depth));
    for e in &epochs[1..] {
        model.update(&counts_of(e, k, depth)).unwrap();
        for m in 0..model.state_count() {
            let row = model.morph_row(m);
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(row.iter().all(|&p| p > 0.0 && p < 1.0));
        }
    }
    Ok(())
}

pub fn check_conservation(cfg: &HsdfConfig64, counts: &[CountMatrix], eta: f64) -> Result<(), TestCaseError> {
    let out = run_stream(counts, cfg).unwrap();
    let mass: u64 = counts.iter().map(CountMatrix::mass).sum();
    prop_assert_eq!(out.registry.total_mass(), mass);
    let revised = revise(&out.registry, &out.records, eta, 1).unwrap();
    prop_assert_eq!(revised.registry.total_mass(), mass);
    Ok(())
}

pub fn check_replay(cfg: &HsdfConfig64, counts: &[CountMatrix]) -> Result<(), TestCaseError> {
    let a = run_stream(counts, cfg).unwrap();
    let b = run_stream(counts, cfg).unwrap();
    prop_assert_eq!(a.records, b.records);
    prop_assert_eq!(a.registry.models, b.registry.models);
    Ok(())
}

pub fn check_metric(models: &[PfsaModel64; 3]) -> Result<(), TestCaseError> {
    let [a, b, c] = models;
    let d = |x: &PfsaModel64, y: &PfsaModel64| pfsa_distance(x, y, 1).unwrap();
    prop_assert_eq!(d(a, a), 0.0);
    prop_assert!(d(a, b) >= 0.0);
    prop_assert!((d(a, b) - d(b, a)).abs() < 1e-15);
    prop_assert!(d(a, c) <= d(a, b) + d(b, c) + 1e-12);
    let same_words = hsdf::revision::word_distribution(a, 1)
        .iter()
        .zip(hsdf::revision::word_distribution(b, 1))
        .all(|(p, q)| (p - q).abs() < 1e-15);
    prop_assert_eq!(d(a, b) == 0.0, same_words);
    Ok(())
}
