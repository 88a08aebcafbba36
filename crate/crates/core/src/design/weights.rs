use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Accepted deviation of an input weight sum from 1 before renormalizing.
pub const WEIGHT_SUM_TOL: f64 = 1e-9;
/// Weights below this are not part of the support.
pub const SUPPORT_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignKind {
    Approximate,
    Exact { n: usize },
}

/// Sparse design: strictly positive weights on candidate indices, summing to 1.
///
/// Exact designs additionally carry integer replication counts with
/// `weight = count / n`.
#[derive(Clone, Debug, PartialEq)]
pub struct Design {
    indices: Vec<usize>,
    weights: Vec<f64>,
    counts: Option<Vec<usize>>,
}

impl Design {
    /// Approximate design from `(index, weight)` pairs. Duplicates are merged,
    /// weights under [`SUPPORT_FLOOR`] dropped and the rest renormalized.
    pub fn approximate(pairs: impl IntoIterator<Item = (usize, f64)>) -> Result<Design> {
        let mut merged: BTreeMap<usize, f64> = BTreeMap::new();
        for (i, w) in pairs {
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::InvalidDesign(format!("weight {w} at index {i}")));
            }
            *merged.entry(i).or_default() += w;
        }
        let total: f64 = merged.values().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidDesign(format!("weights sum to {total}, not 1")));
        }
        merged.retain(|_, w| *w / total >= SUPPORT_FLOOR);
        let kept: f64 = merged.values().sum();
        if merged.is_empty() {
            return Err(Error::InvalidDesign("empty support".into()));
        }
        Ok(Design {
            indices: merged.keys().copied().collect(),
            weights: merged.values().map(|w| w / kept).collect(),
            counts: None,
        })
    }

    /// Approximate design from a dense weight vector over all candidates.
    pub fn from_weights(weights: &[f64]) -> Result<Design> {
        Self::approximate(weights.iter().copied().enumerate().filter(|(_, w)| *w != 0.0))
    }

    /// Exact design from `(index, count)` pairs; n is the total count.
    pub fn exact(pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Design> {
        let mut merged: BTreeMap<usize, usize> = BTreeMap::new();
        for (i, c) in pairs {
            *merged.entry(i).or_default() += c;
        }
        merged.retain(|_, c| *c > 0);
        let n: usize = merged.values().sum();
        if n == 0 {
            return Err(Error::InvalidDesign("exact design with no trials".into()));
        }
        Ok(Design {
            indices: merged.keys().copied().collect(),
            weights: merged.values().map(|&c| c as f64 / n as f64).collect(),
            counts: Some(merged.values().copied().collect()),
        })
    }

    /// Exact design from a dense count vector.
    pub fn from_counts(counts: &[usize]) -> Result<Design> {
        Self::exact(counts.iter().copied().enumerate())
    }

    pub fn kind(&self) -> DesignKind {
        match self.size() {
            Some(n) => DesignKind::Exact { n },
            None => DesignKind::Approximate,
        }
    }

    /// Trial count n for exact designs.
    pub fn size(&self) -> Option<usize> {
        self.counts.as_ref().map(|c| c.iter().sum())
    }

    pub fn is_exact(&self) -> bool {
        self.counts.is_some()
    }

    /// Support indices, ascending.
    pub fn support(&self) -> &[usize] {
        &self.indices
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn counts(&self) -> Option<&[usize]> {
        self.counts.as_deref()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().copied().zip(self.weights.iter().copied())
    }

    pub fn weight_of(&self, index: usize) -> f64 {
        self.indices
            .binary_search(&index)
            .map_or(0.0, |k| self.weights[k])
    }

    pub fn count_of(&self, index: usize) -> usize {
        match (&self.counts, self.indices.binary_search(&index)) {
            (Some(c), Ok(k)) => c[k],
            _ => 0,
        }
    }

    /// Dense count vector of length `len` (exact designs only).
    pub fn dense_counts(&self, len: usize) -> Option<Vec<usize>> {
        let counts = self.counts.as_ref()?;
        let mut out = vec![0; len];
        for (&i, &c) in self.indices.iter().zip(counts) {
            out[i] = c;
        }
        Some(out)
    }

    /// Re-indexes through `map`: support index `i` becomes `map[i]`.
    pub fn remap(&self, map: &[usize]) -> Result<Design> {
        let lookup = |i: usize| {
            map.get(i).copied().ok_or(Error::IndexOutOfRange {
                index: i,
                len: map.len(),
            })
        };
        match &self.counts {
            Some(c) => {
                let pairs = self
                    .indices
                    .iter()
                    .zip(c)
                    .map(|(&i, &k)| Ok((lookup(i)?, k)))
                    .collect::<Result<Vec<_>>>()?;
                Design::exact(pairs)
            }
            None => {
                let pairs = self
                    .iter()
                    .map(|(i, w)| Ok((lookup(i)?, w)))
                    .collect::<Result<Vec<_>>>()?;
                Design::approximate(pairs)
            }
        }
    }

    /// The same design viewed as size-`n` exact, if every `n·wᵢ` is an
    /// integer within `tol`.
    pub fn as_exact(&self, n: usize, tol: f64) -> Option<Design> {
        let mut pairs = Vec::with_capacity(self.indices.len());
        for (i, w) in self.iter() {
            let r = w * n as f64;
            let k = r.round();
            if (r - k).abs() > tol || k < 1.0 {
                return None;
            }
            pairs.push((i, k as usize));
        }
        let d = Design::exact(pairs).ok()?;
        (d.size() == Some(n)).then_some(d)
    }

    pub fn max_index(&self) -> Option<usize> {
        self.indices.last().copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn approximate_normalizes_within_tolerance() {
        let d = Design::approximate([(3, 0.5), (1, 0.5 + 5e-10)]).unwrap();
        assert_eq!(d.support(), &[1, 3]);
        assert!((d.weights().iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(Design::approximate([(0, 0.5), (1, 0.49)]).is_err());
        assert!(Design::approximate([(0, 1.5), (1, -0.5)]).is_err());
    }

    #[test]
    fn tiny_weights_leave_the_support() {
        let d = Design::approximate([(0, 1.0 - 1e-13), (1, 1e-13)]).unwrap();
        assert_eq!(d.support(), &[0]);
        assert_eq!(d.weights(), &[1.0]);
    }

    #[test]
    fn exact_counts() {
        let d = Design::exact([(2, 1), (0, 2), (2, 1), (5, 0)]).unwrap();
        assert_eq!(d.size(), Some(4));
        assert_eq!(d.support(), &[0, 2]);
        assert_eq!(d.counts(), Some(&[2, 2][..]));
        assert_eq!(d.weights(), &[0.5, 0.5]);
        assert_eq!(d.kind(), DesignKind::Exact { n: 4 });
        assert_eq!(d.dense_counts(4), Some(vec![2, 0, 2, 0]));
        assert!(Design::exact([(0, 0)]).is_err());
    }

    #[test]
    fn as_exact_detects_lattice_designs() {
        let d = Design::approximate([(0, 0.5), (1, 0.5)]).unwrap();
        assert_eq!(d.as_exact(4, 1e-9).unwrap().counts(), Some(&[2, 2][..]));
        assert!(d.as_exact(3, 1e-9).is_none());
    }

    #[test]
    fn remap_moves_indices() {
        let d = Design::exact([(0, 1), (1, 3)]).unwrap();
        let r = d.remap(&[7, 4]).unwrap();
        assert_eq!(r.support(), &[4, 7]);
        assert_eq!(r.counts(), Some(&[3, 1][..]));
    }
}
