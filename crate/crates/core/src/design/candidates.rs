use std::borrow::Cow;
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::SpdMatrix;

/// Rows per chunk when walking a candidate set.
pub const CHUNK_ROWS: usize = 65_536;

/// A replayable producer of regressor rows.
///
/// `fill_rows(start, out)` must write rows `start..start + out.len() / dim()`
/// and must be a pure function of its arguments, so that chunks can be
/// produced in any order and on any thread.
pub trait RegressorSource: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn len(&self) -> usize;
    fn fill_rows(&self, start: usize, out: &mut [f64]);
}

#[derive(Clone, Debug)]
enum Storage {
    Dense(Arc<[f64]>),
    Streamed(Arc<dyn RegressorSource>),
}

/// N regressor vectors of dimension m, either held in memory or streamed.
#[derive(Clone, Debug)]
pub struct CandidateSet {
    dim: usize,
    len: usize,
    storage: Storage,
}

fn check_shape(dim: usize, len: usize) -> Result<()> {
    if dim < 2 {
        return Err(Error::InvalidCandidates(format!(
            "regressor dimension must be at least 2, got {dim}"
        )));
    }
    if len < 2 {
        return Err(Error::InvalidCandidates(format!(
            "need at least 2 candidates, got {len}"
        )));
    }
    Ok(())
}

impl CandidateSet {
    /// In-memory candidates; `rows` is row-major with `dim` columns.
    pub fn from_rows(dim: usize, rows: Vec<f64>) -> Result<Self> {
        if dim == 0 || rows.len() % dim != 0 {
            return Err(Error::InvalidCandidates(format!(
                "{} values do not form rows of length {dim}",
                rows.len()
            )));
        }
        let len = rows.len() / dim;
        check_shape(dim, len)?;
        if let Some(x) = rows.iter().find(|x| !x.is_finite()) {
            return Err(Error::InvalidCandidates(format!("non-finite regressor {x}")));
        }
        Ok(CandidateSet {
            dim,
            len,
            storage: Storage::Dense(rows.into()),
        })
    }

    pub fn from_vectors<V: AsRef<[f64]>>(vectors: &[V]) -> Result<Self> {
        let dim = vectors.first().map_or(0, |v| v.as_ref().len());
        let mut rows = Vec::with_capacity(dim * vectors.len());
        for v in vectors {
            let v = v.as_ref();
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: v.len(),
                });
            }
            rows.extend_from_slice(v);
        }
        Self::from_rows(dim, rows)
    }

    pub fn from_source(source: Arc<dyn RegressorSource>) -> Result<Self> {
        check_shape(source.dim(), source.len())?;
        Ok(CandidateSet {
            dim: source.dim(),
            len: source.len(),
            storage: Storage::Streamed(source),
        })
    }

    /// Regressor dimension m.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of candidates N.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn is_streamed(&self) -> bool {
        matches!(self.storage, Storage::Streamed(_))
    }

    pub fn as_dense(&self) -> Option<&[f64]> {
        match &self.storage {
            Storage::Dense(rows) => Some(rows),
            Storage::Streamed(_) => None,
        }
    }

    pub fn num_chunks(&self) -> usize {
        self.len.div_ceil(CHUNK_ROWS)
    }

    pub fn check_index(&self, index: usize) -> Result<()> {
        if index < self.len {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange {
                index,
                len: self.len,
            })
        }
    }

    /// Regressor of candidate `i`.
    ///
    /// # Panics
    /// If `i` is out of range.
    pub fn row(&self, i: usize) -> Cow<'_, [f64]> {
        assert!(i < self.len, "candidate {i} out of range");
        match &self.storage {
            Storage::Dense(rows) => Cow::Borrowed(&rows[i * self.dim..(i + 1) * self.dim]),
            Storage::Streamed(src) => {
                let mut buf = vec![0.0; self.dim];
                src.fill_rows(i, &mut buf);
                Cow::Owned(buf)
            }
        }
    }

    /// Chunk `c` as a row-major block starting at row `c * CHUNK_ROWS`.
    pub fn chunk(&self, c: usize) -> Cow<'_, [f64]> {
        let start = c * CHUNK_ROWS;
        let end = (start + CHUNK_ROWS).min(self.len);
        match &self.storage {
            Storage::Dense(rows) => Cow::Borrowed(&rows[start * self.dim..end * self.dim]),
            Storage::Streamed(src) => {
                let mut buf = vec![0.0; (end - start) * self.dim];
                src.fill_rows(start, &mut buf);
                Cow::Owned(buf)
            }
        }
    }

    /// Maps every chunk in parallel; results come back in chunk order.
    pub fn map_chunks<T, F>(&self, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize, &[f64]) -> T + Sync,
    {
        (0..self.num_chunks())
            .into_par_iter()
            .map(|c| f(c * CHUNK_ROWS, &self.chunk(c)))
            .collect()
    }

    /// Applies `f` to each row, in parallel over chunks, preserving order.
    pub fn map_rows<T, F>(&self, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(&[f64]) -> T + Sync,
    {
        let dim = self.dim;
        let parts = self.map_chunks(|_, rows| rows.chunks_exact(dim).map(&f).collect::<Vec<_>>());
        let mut out = Vec::with_capacity(self.len);
        for p in parts {
            out.extend(p);
        }
        out
    }

    /// Copies a streamed set into memory (a cheap clone for dense sets).
    pub fn materialize(&self) -> CandidateSet {
        match &self.storage {
            Storage::Dense(_) => self.clone(),
            Storage::Streamed(_) => {
                let mut rows = Vec::with_capacity(self.len * self.dim);
                for c in 0..self.num_chunks() {
                    rows.extend_from_slice(&self.chunk(c));
                }
                CandidateSet {
                    dim: self.dim,
                    len: self.len,
                    storage: Storage::Dense(rows.into()),
                }
            }
        }
    }

    /// Candidates at `indices`, in the given order, renumbered from 0.
    pub fn subset(&self, indices: &[usize]) -> Result<CandidateSet> {
        let mut rows = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            self.check_index(i)?;
            rows.extend_from_slice(&self.row(i));
        }
        CandidateSet::from_rows(self.dim, rows)
    }

    /// Every regressor mapped through the symmetric matrix `t`.
    pub fn transform(&self, t: &SpdMatrix) -> Result<CandidateSet> {
        if t.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: t.dim(),
            });
        }
        let dim = self.dim;
        let parts = self.map_chunks(|_, rows| {
            let mut out = vec![0.0; rows.len()];
            for (f, s) in rows.chunks_exact(dim).zip(out.chunks_exact_mut(dim)) {
                t.mul_vec(f, s);
            }
            out
        });
        CandidateSet::from_rows(dim, parts.concat())
    }
}
