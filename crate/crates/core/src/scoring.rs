//! Epoch-level error against ground truth.
//!
//! Discovered classes are matched one-to-one to ground-truth regimes greedily:
//! the largest class first takes the regime it overlaps most among those still
//! free. Classes left without a regime count all their epochs as errors.

use serde::{Deserialize, Serialize};

use crate::error::{HsdfError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochScore {
    pub epoch_error_pct: f64,
    /// `confusion[regime][class]` epoch counts.
    pub confusion: Vec<Vec<usize>>,
    /// `class_to_regime[class]`, `None` for surplus classes.
    pub class_to_regime: Vec<Option<usize>>,
    pub misassigned_epochs: usize,
}

pub fn confusion_matrix(truth: &[usize], assigned: &[usize]) -> Vec<Vec<usize>> {
    let regimes = truth.iter().max().map_or(0, |m| m + 1);
    let classes = assigned.iter().max().map_or(0, |m| m + 1);
    let mut c = vec![vec![0usize; classes]; regimes];
    for (&t, &a) in truth.iter().zip(assigned) {
        c[t][a] += 1;
    }
    c
}

/// Greedy majority matching of classes to regimes.
pub fn match_classes(confusion: &[Vec<usize>]) -> Vec<Option<usize>> {
    let regimes = confusion.len();
    let classes = confusion.first().map_or(0, Vec::len);
    let size = |c: usize| confusion.iter().map(|row| row[c]).sum::<usize>();
    let column = |c: usize| confusion.iter().map(|row| row[c]).collect::<Vec<_>>();
    let mut order: Vec<usize> = (0..classes).collect();
    // Largest first; equal sizes by their regime overlaps, then by id.
    order.sort_by(|&a, &b| size(b).cmp(&size(a)).then(column(b).cmp(&column(a))).then(a.cmp(&b)));
    let mut taken = vec![false; regimes];
    let mut mapping = vec![None; classes];
    for c in order {
        let best = (0..regimes)
            .filter(|&r| !taken[r])
            .max_by(|&a, &b| confusion[a][c].cmp(&confusion[b][c]).then(b.cmp(&a)));
        if let Some(r) = best {
            if confusion[r][c] > 0 || size(c) == 0 {
                taken[r] = true;
                mapping[c] = Some(r);
            }
        }
    }
    mapping
}

/// Percentage of epochs whose matched class disagrees with the ground truth.
pub fn score_epochs(truth: &[usize], assigned: &[usize]) -> Result<EpochScore> {
    if truth.len() != assigned.len() || truth.is_empty() {
        return Err(HsdfError::DimensionMismatch {
            expected: format!("{} labels", truth.len()),
            found: format!("{} assignments", assigned.len()),
        });
    }
    let confusion = confusion_matrix(truth, assigned);
    let class_to_regime = match_classes(&confusion);
    let misassigned = truth
        .iter()
        .zip(assigned)
        .filter(|(&t, &a)| class_to_regime[a] != Some(t))
        .count();
    Ok(EpochScore {
        epoch_error_pct: 100.0 * misassigned as f64 / truth.len() as f64,
        confusion,
        class_to_regime,
        misassigned_epochs: misassigned,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_assignment_scores_zero() {
        let truth = vec![0, 0, 1, 1, 2, 0];
        assert_eq!(score_epochs(&truth, &truth).unwrap().epoch_error_pct, 0.0);
    }

    #[test]
    fn permutation_invariant() {
        let truth = vec![0, 0, 1, 1, 1, 0, 0, 1];
        let a = vec![0, 0, 1, 1, 0, 0, 2, 1];
        let b: Vec<usize> = a.iter().map(|&c| [2, 0, 1][c]).collect();
        assert_eq!(
            score_epochs(&truth, &a).unwrap().epoch_error_pct,
            score_epochs(&truth, &b).unwrap().epoch_error_pct
        );
    }

    #[test]
    fn surplus_classes_are_errors() {
        let truth = vec![0, 0, 0, 0, 1, 1];
        let assigned = vec![0, 0, 2, 2, 1, 1];
        let s = score_epochs(&truth, &assigned).unwrap();
        assert_eq!(s.misassigned_epochs, 2);
        assert_eq!(s.class_to_regime, vec![Some(0), Some(1), None]);
        assert_eq!(s.confusion, vec![vec![2, 0, 2], vec![0, 2, 0]]);
    }

    #[test]
    fn length_mismatch_rejected() {
        assert!(score_epochs(&[0, 1], &[0]).is_err());
        assert!(score_epochs(&[], &[]).is_err());
    }
}
