//! Offline merging of near-duplicate classes.
//!
//! Two PFSA are compared through the steady-state probabilities of the words
//! they generate: `Φ = Σ_{r=1..R} ‖Pr₁(Ξ_r) − Pr₂(Ξ_r)‖₁ / 2^{r+1}`. Classes
//! closer than a threshold `η` are grouped by single linkage and their counts
//! pooled.

use serde::{Deserialize, Serialize};

use crate::classifier::{AssignmentRecord, ClassRegistry};
use crate::error::{HsdfError, Result};
use crate::scalar::Real;
use crate::symbolic::PfsaModel;

const POWER_TOLERANCE: f64 = 1e-12;
const POWER_MAX_ITERATIONS: usize = 100_000;

/// Stationary distribution over states of the chain induced by the morph
/// matrix. Falls back to empirical state frequencies when power iteration does
/// not settle (periodic or reducible chains).
pub fn stationary_distribution<T: Real>(model: &PfsaModel<T>) -> Vec<T> {
    let states = model.state_count();
    let k = model.alphabet_size();
    let tol = T::lit(POWER_TOLERANCE);
    let mut pi = vec![T::one() / T::from_usize(states).unwrap(); states];
    let mut next = vec![T::zero(); states];
    for _ in 0..POWER_MAX_ITERATIONS {
        next.iter_mut().for_each(|v| *v = T::zero());
        for (m, &p) in pi.iter().enumerate() {
            if p == T::zero() {
                continue;
            }
            for n in 0..k {
                next[model.next_state(m, n)] += p * model.morph(m, n);
            }
        }
        let total: T = next.iter().copied().sum();
        next.iter_mut().for_each(|v| *v /= total);
        let change: T = pi.iter().zip(&next).map(|(a, b)| (*a - *b).abs()).sum();
        std::mem::swap(&mut pi, &mut next);
        if change < tol {
            return pi;
        }
    }
    model.counts().state_frequencies().unwrap_or(pi)
}

/// Steady-state probability of every word of length `r`, in lexicographic
/// order of the words.
pub fn word_distribution<T: Real>(model: &PfsaModel<T>, r: usize) -> Vec<T> {
    let pi = stationary_distribution(model);
    let k = model.alphabet_size();
    // (state, probability) mass after each prefix, expanded one symbol at a time.
    let mut layer: Vec<Vec<(usize, T)>> = vec![pi.iter().copied().enumerate().collect()];
    for _ in 0..r {
        let mut next = Vec::with_capacity(layer.len() * k);
        for prefix in &layer {
            for n in 0..k {
                let mut acc: Vec<(usize, T)> = Vec::new();
                for &(m, p) in prefix {
                    let q = p * model.morph(m, n);
                    let s = model.next_state(m, n);
                    match acc.iter_mut().find(|(st, _)| *st == s) {
                        Some(slot) => slot.1 += q,
                        None => acc.push((s, q)),
                    }
                }
                next.push(acc);
            }
        }
        layer = next;
    }
    layer
        .iter()
        .map(|mass| mass.iter().map(|&(_, p)| p).sum())
        .collect()
}

/// `‖p − q‖₁ / 2^{r+1}`.
pub fn weighted_l1<T: Real>(p: &[T], q: &[T], r: usize) -> T {
    let l1: T = p.iter().zip(q).map(|(a, b)| (*a - *b).abs()).sum();
    l1 / T::lit(2f64.powi(r as i32 + 1))
}

/// PFSA distance truncated at words of length `max_word_len`.
pub fn pfsa_distance<T: Real>(a: &PfsaModel<T>, b: &PfsaModel<T>, max_word_len: usize) -> Result<T> {
    if a.alphabet_size() != b.alphabet_size() {
        return Err(HsdfError::DimensionMismatch {
            expected: format!("|Ξ|={}", a.alphabet_size()),
            found: format!("|Ξ|={}", b.alphabet_size()),
        });
    }
    if max_word_len == 0 {
        return Err(HsdfError::InvalidConfig("max_word_len must be at least 1".into()));
    }
    Ok((1..=max_word_len)
        .map(|r| weighted_l1(&word_distribution(a, r), &word_distribution(b, r), r))
        .sum())
}

/// How the merge threshold η is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EtaRule<T> {
    /// `η = 1 / (2K)` for `K` classes entering revision.
    HalfInverseClassCount,
    Fixed(T),
}

impl<T: Real> EtaRule<T> {
    pub fn resolve(&self, class_count: usize) -> T {
        match *self {
            Self::HalfInverseClassCount => T::one() / T::from_usize(2 * class_count.max(1)).unwrap(),
            Self::Fixed(eta) => eta,
        }
    }
}

/// Pairwise distances and the resulting merge groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceReport<T> {
    pub pairwise: Vec<Vec<T>>,
    pub eta: T,
    /// Groups of original class indices, each sorted, ordered by first member.
    pub merge_sets: Vec<Vec<usize>>,
}

pub fn distance_matrix<T: Real>(models: &[PfsaModel<T>], max_word_len: usize) -> Result<Vec<Vec<T>>> {
    let k = models.len();
    let mut d = vec![vec![T::zero(); k]; k];
    for i in 0..k {
        for j in i + 1..k {
            let v = pfsa_distance(&models[i], &models[j], max_word_len)?;
            d[i][j] = v;
            d[j][i] = v;
        }
    }
    Ok(d)
}

fn find(parent: &mut [usize], x: usize) -> usize {
    let mut root = x;
    while parent[root] != root {
        root = parent[root];
    }
    let mut cur = x;
    while parent[cur] != root {
        let next = parent[cur];
        parent[cur] = root;
        cur = next;
    }
    root
}

/// Single-linkage groups of classes with `Φ < η`.
pub fn merge_sets<T: Real>(pairwise: &[Vec<T>], eta: T) -> Vec<Vec<usize>> {
    let k = pairwise.len();
    let mut parent: Vec<usize> = (0..k).collect();
    for i in 0..k {
        for j in i + 1..k {
            if pairwise[i][j] < eta {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    // Lower index becomes the root.
                    let (lo, hi) = if ri < rj { (ri, rj) } else { (rj, ri) };
                    parent[hi] = lo;
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; k];
    for i in 0..k {
        let r = find(&mut parent, i);
        if slot[r] == usize::MAX {
            slot[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[r]].push(i);
    }
    groups
}

/// Result of an offline revision pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Revision<T> {
    pub registry: ClassRegistry<T>,
    pub records: Vec<AssignmentRecord<T>>,
    /// `mapping[old] = new` class id.
    pub mapping: Vec<usize>,
    pub report: DistanceReport<T>,
}

impl<T: Real> Revision<T> {
    pub fn relabel(&self, labels: &[usize]) -> Vec<usize> {
        labels.iter().map(|&l| self.mapping[l]).collect()
    }
}

/// Merges every single-linkage group of classes with `Φ < η`, repeating on
/// the merged models until no pair is closer than `η`.
///
/// Surviving classes keep the order of their lowest original index and are
/// renumbered densely from 0; records are relabeled accordingly. Histories of
/// the returned registry start empty. The report holds the distances between
/// the original classes and the final grouping of their indices.
pub fn revise<T: Real>(
    registry: &ClassRegistry<T>,
    records: &[AssignmentRecord<T>],
    eta: T,
    max_word_len: usize,
) -> Result<Revision<T>> {
    let pairwise = distance_matrix(&registry.models, max_word_len)?;
    let mut sets: Vec<Vec<usize>> = (0..registry.class_count()).map(|i| vec![i]).collect();
    let mut models = registry.models.clone();
    let mut distances = pairwise.clone();
    loop {
        let groups = merge_sets(&distances, eta);
        if groups.len() == sets.len() {
            break;
        }
        let mut next_sets = Vec::with_capacity(groups.len());
        let mut next_models = Vec::with_capacity(groups.len());
        for (new_id, group) in groups.iter().enumerate() {
            let mut counts = models[group[0]].counts().clone();
            for &g in &group[1..] {
                counts.add_assign(models[g].counts())?;
            }
            let mut members: Vec<usize> = group.iter().flat_map(|&g| sets[g].iter().copied()).collect();
            members.sort_unstable();
            next_sets.push(members);
            next_models.push(PfsaModel::new(new_id, counts));
        }
        sets = next_sets;
        models = next_models;
        distances = distance_matrix(&models, max_word_len)?;
    }
    let mut mapping = vec![0; registry.class_count()];
    for (new_id, group) in sets.iter().enumerate() {
        for &old in group {
            mapping[old] = new_id;
        }
    }
    let revised = ClassRegistry::from_models(models, mapping[registry.last_class], registry.delta(), registry.fit_window())?;
    let records = records
        .iter()
        .map(|r| AssignmentRecord {
            chosen: mapping[r.chosen],
            last_class: mapping[r.last_class],
            ..r.clone()
        })
        .collect();
    Ok(Revision {
        registry: revised,
        records,
        mapping,
        report: DistanceReport {
            pairwise,
            eta,
            merge_sets: sets,
        },
    })
}

/// Counts of consecutive class-label transitions (the upper-tier chain).
pub fn class_transition_counts(labels: &[usize], class_count: usize) -> Vec<Vec<u64>> {
    let mut counts = vec![vec![0u64; class_count]; class_count];
    for w in labels.windows(2) {
        counts[w[0]][w[1]] += 1;
    }
    counts
}
