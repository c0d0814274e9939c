//! Quantization of scalar signals into symbols and D-Markov state bookkeeping.
//!
//! A [`Partition`] maps samples to an alphabet of `|Ξ|` symbols by equal-width
//! binning. A depth-`D` state is the window of the previous `D` symbols, encoded
//! in base `|Ξ|` with the oldest symbol as the most significant digit, so the
//! full state space has `|Ξ|^D` rows.

use serde::{Deserialize, Serialize};

use crate::error::{HsdfError, Result};
use crate::scalar::Real;

/// Equal-width bin edges over a calibration range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition<T> {
    edges: Vec<T>,
}

impl<T: Real> Partition<T> {
    /// Builds a partition from explicit, strictly increasing edges.
    pub fn from_edges(edges: Vec<T>) -> Result<Self> {
        if edges.is_empty() {
            return Err(HsdfError::AlphabetTooSmall(1));
        }
        if let Some(index) = edges.iter().position(|e| !e.is_finite()) {
            return Err(HsdfError::NonFiniteSample { index });
        }
        if edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(HsdfError::InvalidConfig(
                "partition edges must be strictly increasing".into(),
            ));
        }
        Ok(Self { edges })
    }

    /// Splits `[min, max]` of the calibration window into `alphabet_size`
    /// equal-width bins. A constant window is widened to unit width around
    /// its value so that the edges stay strictly increasing.
    pub fn uniform(calibration: &[T], alphabet_size: usize) -> Result<Self> {
        if alphabet_size < 2 {
            return Err(HsdfError::AlphabetTooSmall(alphabet_size));
        }
        if calibration.is_empty() {
            return Err(HsdfError::EmptyCalibration);
        }
        let mut lo = T::infinity();
        let mut hi = T::neg_infinity();
        for (index, &x) in calibration.iter().enumerate() {
            if !x.is_finite() {
                return Err(HsdfError::NonFiniteSample { index });
            }
            lo = lo.min(x);
            hi = hi.max(x);
        }
        if hi <= lo {
            let half = T::lit(0.5);
            lo = lo - half;
            hi = hi + half;
        }
        let bins = T::from_usize(alphabet_size).unwrap();
        let width = (hi - lo) / bins;
        let edges = (1..alphabet_size)
            .map(|k| lo + width * T::from_usize(k).unwrap())
            .collect();
        Self::from_edges(edges)
    }

    pub fn edges(&self) -> &[T] {
        &self.edges
    }

    pub fn alphabet_size(&self) -> usize {
        self.edges.len() + 1
    }

    /// Bin index of a single finite sample; out-of-range values clamp.
    #[inline]
    pub fn symbol_of(&self, x: T) -> usize {
        self.edges.partition_point(|&e| e <= x)
    }

    /// Quantizes a block of samples.
    pub fn symbolize(&self, samples: &[T], epoch_id: usize) -> Result<SymbolString> {
        let mut symbols = Vec::with_capacity(samples.len());
        for (index, &x) in samples.iter().enumerate() {
            if !x.is_finite() {
                return Err(HsdfError::NonFiniteSample { index });
            }
            symbols.push(self.symbol_of(x));
        }
        Ok(SymbolString {
            symbols,
            alphabet_size: self.alphabet_size(),
            epoch_id,
        })
    }
}

/// A symbolized epoch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymbolString {
    pub symbols: Vec<usize>,
    pub alphabet_size: usize,
    pub epoch_id: usize,
}

impl SymbolString {
    /// Wraps raw symbols, checking them against the alphabet.
    pub fn new(symbols: Vec<usize>, alphabet_size: usize, epoch_id: usize) -> Result<Self> {
        if alphabet_size < 2 {
            return Err(HsdfError::AlphabetTooSmall(alphabet_size));
        }
        if let Some((index, &symbol)) = symbols.iter().enumerate().find(|(_, &s)| s >= alphabet_size) {
            return Err(HsdfError::SymbolOutOfRange {
                index,
                symbol,
                alphabet: alphabet_size,
            });
        }
        Ok(Self {
            symbols,
            alphabet_size,
            epoch_id,
        })
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// Counts symbol emissions per depth-`depth` state.
    pub fn count_transitions(&self, depth: usize) -> Result<CountMatrix> {
        let need = depth + 1;
        if self.symbols.len() < need {
            return Err(HsdfError::StringTooShort {
                len: self.symbols.len(),
                depth,
                need,
            });
        }
        let mut counts = CountMatrix::zeros(self.alphabet_size, depth)?;
        let k = self.alphabet_size;
        let modulus = counts.state_count();
        // Rolling base-|Ξ| encoding of the last `depth` symbols.
        let mut state = self.symbols[..depth].iter().fold(0usize, |acc, &s| acc * k + s);
        for &s in &self.symbols[depth..] {
            counts.counts[state * k + s] += 1;
            if depth > 0 {
                state = (state * k + s) % modulus;
            }
        }
        Ok(counts)
    }
}

/// Encodes a window of `depth` symbols (oldest first) as a state index.
pub fn encode_state(window: &[usize], alphabet_size: usize) -> usize {
    window.iter().fold(0usize, |acc, &s| acc * alphabet_size + s)
}

/// Per-state symbol emission counts `N_mn` over the full `|Ξ|^D` state space.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CountMatrix {
    alphabet_size: usize,
    depth: usize,
    /// Row-major `state_count × alphabet_size`.
    counts: Vec<u64>,
}

impl CountMatrix {
    pub fn zeros(alphabet_size: usize, depth: usize) -> Result<Self> {
        if alphabet_size < 2 {
            return Err(HsdfError::AlphabetTooSmall(alphabet_size));
        }
        let states = u32::try_from(depth)
            .ok()
            .and_then(|d| alphabet_size.checked_pow(d))
            .filter(|&s| s.checked_mul(alphabet_size).is_some_and(|c| c <= 1 << 26))
            .ok_or_else(|| {
                HsdfError::InvalidConfig(format!(
                    "state space {alphabet_size}^{depth} is too large"
                ))
            })?;
        Ok(Self {
            alphabet_size,
            depth,
            counts: vec![0; states * alphabet_size],
        })
    }

    /// Builds a matrix from explicit rows. The number of rows must be `|Ξ|^D`.
    pub fn from_rows(rows: &[Vec<u64>], depth: usize) -> Result<Self> {
        let alphabet_size = rows.first().map_or(0, Vec::len);
        let mut m = Self::zeros(alphabet_size, depth)?;
        if rows.len() != m.state_count() || rows.iter().any(|r| r.len() != alphabet_size) {
            return Err(HsdfError::DimensionMismatch {
                expected: format!("{}x{}", m.state_count(), alphabet_size),
                found: format!("{}x{}", rows.len(), alphabet_size),
            });
        }
        m.counts = rows.iter().flatten().copied().collect();
        Ok(m)
    }

    pub fn alphabet_size(&self) -> usize {
        self.alphabet_size
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn state_count(&self) -> usize {
        self.counts.len() / self.alphabet_size
    }

    #[inline]
    pub fn get(&self, state: usize, symbol: usize) -> u64 {
        self.counts[state * self.alphabet_size + symbol]
    }

    #[inline]
    pub fn row(&self, state: usize) -> &[u64] {
        let k = self.alphabet_size;
        &self.counts[state * k..(state + 1) * k]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u64]> {
        self.counts.chunks_exact(self.alphabet_size)
    }

    /// `N_m`.
    pub fn row_sum(&self, state: usize) -> u64 {
        self.row(state).iter().sum()
    }

    /// Total number of counted transitions.
    pub fn mass(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.counts
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.alphabet_size == other.alphabet_size && self.depth == other.depth
    }

    pub(crate) fn check_shape(&self, other: &Self) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(HsdfError::DimensionMismatch {
                expected: format!("|Ξ|={} D={}", self.alphabet_size, self.depth),
                found: format!("|Ξ|={} D={}", other.alphabet_size, other.depth),
            })
        }
    }

    /// Elementwise sum.
    pub fn add(&self, other: &Self) -> Result<Self> {
        let mut out = self.clone();
        out.add_assign(other)?;
        Ok(out)
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.check_shape(other)?;
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    /// Per-state visit frequencies `N_m / Σ N_m`, or `None` for an empty matrix.
    pub fn state_frequencies<T: Real>(&self) -> Option<Vec<T>> {
        let total = self.mass();
        if total == 0 {
            return None;
        }
        let total = T::from_count(total);
        Some(
            (0..self.state_count())
                .map(|m| T::from_count(self.row_sum(m)) / total)
                .collect(),
        )
    }
}

/// One discovered class: cumulative counts plus the Laplace-smoothed morph
/// matrix `Ω_mn = (N_mn + 1) / (N_m + |Ξ|)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PfsaModel<T> {
    pub class_id: usize,
    counts: CountMatrix,
    morph: Vec<T>,
    training_length: u64,
}

impl<T: Real> PfsaModel<T> {
    pub fn new(class_id: usize, counts: CountMatrix) -> Self {
        let training_length = counts.mass();
        let mut model = Self {
            class_id,
            morph: vec![T::zero(); counts.as_slice().len()],
            counts,
            training_length,
        };
        model.renormalize();
        model
    }

    fn renormalize(&mut self) {
        let k = self.counts.alphabet_size();
        let kf = T::from_usize(k).unwrap();
        for (m, row) in self.counts.rows().enumerate() {
            let denom = T::from_count(row.iter().sum()) + kf;
            for (n, &c) in row.iter().enumerate() {
                self.morph[m * k + n] = (T::from_count(c) + T::one()) / denom;
            }
        }
    }

    /// Absorbs a new epoch's counts.
    pub fn update(&mut self, new_counts: &CountMatrix) -> Result<()> {
        self.counts.add_assign(new_counts)?;
        self.training_length += new_counts.mass();
        self.renormalize();
        Ok(())
    }

    /// Non-mutating form of [`PfsaModel::update`].
    pub fn updated(&self, new_counts: &CountMatrix) -> Result<Self> {
        let mut next = self.clone();
        next.update(new_counts)?;
        Ok(next)
    }

    pub fn counts(&self) -> &CountMatrix {
        &self.counts
    }

    pub fn training_length(&self) -> u64 {
        self.training_length
    }

    pub fn alphabet_size(&self) -> usize {
        self.counts.alphabet_size()
    }

    pub fn depth(&self) -> usize {
        self.counts.depth()
    }

    pub fn state_count(&self) -> usize {
        self.counts.state_count()
    }

    #[inline]
    pub fn morph(&self, state: usize, symbol: usize) -> T {
        self.morph[state * self.alphabet_size() + symbol]
    }

    pub fn morph_row(&self, state: usize) -> &[T] {
        let k = self.alphabet_size();
        &self.morph[state * k..(state + 1) * k]
    }

    /// Next state after emitting `symbol` from `state` (the map δ).
    #[inline]
    pub fn next_state(&self, state: usize, symbol: usize) -> usize {
        if self.depth() == 0 {
            0
        } else {
            (state * self.alphabet_size() + symbol) % self.state_count()
        }
    }
}

/// One slow-time epoch: raw samples, their symbols, and transition counts.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochBuffer<T> {
    pub samples: Vec<T>,
    pub symbols: SymbolString,
    pub counts: CountMatrix,
}

impl<T: Real> EpochBuffer<T> {
    pub fn new(samples: Vec<T>, partition: &Partition<T>, depth: usize, epoch_id: usize) -> Result<Self> {
        let symbols = partition.symbolize(&samples, epoch_id)?;
        let counts = symbols.count_transitions(depth)?;
        Ok(Self {
            samples,
            symbols,
            counts,
        })
    }

    pub fn epoch_id(&self) -> usize {
        self.symbols.epoch_id
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_partition_examples() {
        let p = Partition::uniform(&[0.0f64, 1.0], 2).unwrap();
        assert_eq!(p.edges(), &[0.5]);
        let p = Partition::uniform(&[-3.0f64, 4.0], 7).unwrap();
        assert_eq!(p.edges(), &[-2.0, -1.0, 0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn partition_errors() {
        assert!(matches!(
            Partition::<f64>::uniform(&[], 3),
            Err(HsdfError::EmptyCalibration)
        ));
        assert!(matches!(
            Partition::uniform(&[0.0, f64::NAN], 3),
            Err(HsdfError::NonFiniteSample { index: 1 })
        ));
        assert!(matches!(
            Partition::uniform(&[0.0, 1.0], 1),
            Err(HsdfError::AlphabetTooSmall(1))
        ));
    }

    #[test]
    fn constant_calibration_still_strict() {
        let p = Partition::uniform(&[2.0f64; 5], 4).unwrap();
        assert_eq!(p.alphabet_size(), 4);
        assert!(p.edges().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn symbolize_examples() {
        let p = Partition::from_edges(vec![0.5f64]).unwrap();
        assert_eq!(p.symbolize(&[0.1, 0.9], 0).unwrap().symbols, vec![0, 1]);
        let p = Partition::from_edges(vec![-2.0f64, -1.0, 0.0, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!(p.symbolize(&[-10.0, 10.0], 0).unwrap().symbols, vec![0, 6]);
        assert_eq!(p.symbolize(&[0.3; 3], 0).unwrap().symbols, vec![3, 3, 3]);
        // Exactly on an edge belongs to the upper bin; on the last edge is the top symbol.
        assert_eq!(p.symbolize(&[3.0, -2.0], 0).unwrap().symbols, vec![6, 1]);
        assert!(matches!(
            p.symbolize(&[0.0, f64::INFINITY], 0),
            Err(HsdfError::NonFiniteSample { index: 1 })
        ));
    }

    #[test]
    fn count_examples() {
        let s = SymbolString::new(vec![0, 1, 0, 1], 2, 0).unwrap();
        let c = s.count_transitions(1).unwrap();
        assert_eq!(c, CountMatrix::from_rows(&[vec![0, 2], vec![1, 0]], 1).unwrap());
        let s = SymbolString::new(vec![0, 0, 0, 0], 2, 0).unwrap();
        let c = s.count_transitions(1).unwrap();
        assert_eq!(c, CountMatrix::from_rows(&[vec![3, 0], vec![0, 0]], 1).unwrap());
        let short = SymbolString::new(vec![1, 0], 2, 0).unwrap();
        assert!(matches!(
            short.count_transitions(2),
            Err(HsdfError::StringTooShort { len: 2, depth: 2, need: 3 })
        ));
    }

    #[test]
    fn depth_two_state_encoding() {
        // states: (0,1)->1, (1,2)->5, (2,0)->6 for |Ξ|=3
        let s = SymbolString::new(vec![0, 1, 2, 0, 1], 3, 0).unwrap();
        let c = s.count_transitions(2).unwrap();
        assert_eq!(c.state_count(), 9);
        assert_eq!(c.get(encode_state(&[0, 1], 3), 2), 1);
        assert_eq!(c.get(encode_state(&[1, 2], 3), 0), 1);
        assert_eq!(c.get(encode_state(&[2, 0], 3), 1), 1);
        assert_eq!(c.mass(), 3);
    }

    #[test]
    fn depth_zero_is_a_histogram() {
        let s = SymbolString::new(vec![0, 1, 1, 2], 3, 0).unwrap();
        let c = s.count_transitions(0).unwrap();
        assert_eq!(c.state_count(), 1);
        assert_eq!(c.row(0), &[1, 2, 1]);
    }

    #[test]
    fn symbol_out_of_range_rejected() {
        assert!(matches!(
            SymbolString::new(vec![0, 3], 3, 0),
            Err(HsdfError::SymbolOutOfRange { index: 1, symbol: 3, alphabet: 3 })
        ));
    }

    #[test]
    fn update_examples() {
        let c = CountMatrix::from_rows(&[vec![1, 0], vec![0, 0]], 1).unwrap();
        let mut model = PfsaModel::<f64>::new(0, c.clone());
        let before = model.clone();
        model.update(&CountMatrix::zeros(2, 1).unwrap()).unwrap();
        assert_eq!(model.morph_row(0), before.morph_row(0));
        model.update(&c).unwrap();
        assert_eq!(model.morph_row(0), &[0.75, 0.25]);
        assert_eq!(model.morph_row(1), &[0.5, 0.5]);
        assert_eq!(model.training_length(), 2);
        let wrong = CountMatrix::zeros(3, 1).unwrap();
        assert!(matches!(model.update(&wrong), Err(HsdfError::DimensionMismatch { .. })));
    }

    #[test]
    fn next_state_shifts_window() {
        let model = PfsaModel::<f64>::new(0, CountMatrix::zeros(3, 2).unwrap());
        let m = encode_state(&[1, 2], 3);
        assert_eq!(model.next_state(m, 0), encode_state(&[2, 0], 3));
    }
}
