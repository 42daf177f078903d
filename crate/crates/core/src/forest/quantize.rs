//! Per-feature quantization into equal-width bins.
//!
//! Bin edges are computed in `f64` and rounded to `f32`, the type of raw
//! responses. A value's bin is the number of upper edges not exceeding
//! it, so `bin(v) <= b` holds exactly when `v < edge(b)`: a split found on
//! bins is reproduced bit-for-bit by thresholding raw values at the edge.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::featuremap::FeatureIndex;

pub const NUM_BINS: usize = 256;

/// Observed `[lo, hi]` of one feature over a training set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureRange {
    pub lo: f32,
    pub hi: f32,
}

impl FeatureRange {
    pub fn is_constant(&self) -> bool {
        self.hi <= self.lo
    }

    /// Upper edge of bin `b`, `b < NUM_BINS - 1`.
    #[inline]
    pub fn edge(&self, b: usize) -> f32 {
        let (lo, hi) = (f64::from(self.lo), f64::from(self.hi));
        (lo + (b + 1) as f64 * (hi - lo) / NUM_BINS as f64) as f32
    }

    #[inline]
    pub fn bin(&self, v: f32) -> u8 {
        if self.is_constant() {
            return 0;
        }
        let (lo, hi) = (f64::from(self.lo), f64::from(self.hi));
        let guess = ((f64::from(v) - lo) / (hi - lo) * NUM_BINS as f64).floor();
        let mut k = guess.clamp(0.0, (NUM_BINS - 1) as f64) as usize;
        while k > 0 && self.edge(k - 1) > v {
            k -= 1;
        }
        while k < NUM_BINS - 1 && self.edge(k) <= v {
            k += 1;
        }
        k as u8
    }
}

/// Quantized training matrix, stored feature-major.
#[derive(Debug, Clone)]
pub struct QuantizedData {
    n_samples: usize,
    columns: Vec<u8>,
    labels: Vec<bool>,
    ranges: Vec<FeatureRange>,
    features: Vec<FeatureIndex>,
}

const ROW_CHUNK: usize = 64;

impl QuantizedData {
    /// Builds the matrix from a row source called twice per sample: once
    /// to collect ranges, once to quantize. `fill(i, row)` writes the raw
    /// features of sample `i`.
    pub fn from_source<F>(labels: Vec<bool>, features: Vec<FeatureIndex>, fill: F) -> Result<Self>
    where
        F: Fn(usize, &mut [f32]) -> Result<()> + Sync,
    {
        let n = labels.len();
        let nf = features.len();
        let row_of = |i: usize| -> Result<Vec<f32>> {
            let mut row = vec![0.0f32; nf];
            fill(i, &mut row)?;
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                return Err(Error::Training(format!("sample {i}: feature {j} is not finite")));
            }
            Ok(row)
        };

        let init = || Ok(vec![(f32::INFINITY, f32::NEG_INFINITY); nf]);
        let merge = |a: Result<Vec<(f32, f32)>>, b: Result<Vec<(f32, f32)>>| -> Result<Vec<(f32, f32)>> {
            let (mut a, b) = (a?, b?);
            for (x, y) in a.iter_mut().zip(b) {
                x.0 = x.0.min(y.0);
                x.1 = x.1.max(y.1);
            }
            Ok(a)
        };
        let bounds = (0..n)
            .into_par_iter()
            .fold(init, |acc, i| {
                let mut acc = acc?;
                for (b, v) in acc.iter_mut().zip(row_of(i)?) {
                    b.0 = b.0.min(v);
                    b.1 = b.1.max(v);
                }
                Ok(acc)
            })
            .reduce(init, merge)?;
        let ranges: Vec<FeatureRange> = bounds
            .into_iter()
            .map(|(lo, hi)| if n == 0 { FeatureRange { lo: 0.0, hi: 0.0 } } else { FeatureRange { lo, hi } })
            .collect();

        let mut columns = vec![0u8; n * nf];
        for start in (0..n).step_by(ROW_CHUNK) {
            let end = (start + ROW_CHUNK).min(n);
            let rows: Vec<Vec<u8>> = (start..end)
                .into_par_iter()
                .map(|i| Ok(row_of(i)?.iter().zip(&ranges).map(|(&v, r)| r.bin(v)).collect()))
                .collect::<Result<_>>()?;
            for (k, row) in rows.iter().enumerate() {
                for (f, &q) in row.iter().enumerate() {
                    columns[f * n + start + k] = q;
                }
            }
        }
        Ok(QuantizedData {
            n_samples: n,
            columns,
            labels,
            ranges,
            features,
        })
    }

    /// Builds the matrix from in-memory rows. Column `j` is addressed as
    /// `FeatureIndex { channel: 0, filter: 0, cell_x: j, cell_y: 0 }`.
    pub fn from_rows(rows: &[Vec<f32>], labels: Vec<bool>) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::invalid("row and label counts differ"));
        }
        let nf = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != nf) {
            return Err(Error::invalid("rows have different lengths"));
        }
        if nf > usize::from(u16::MAX) + 1 {
            return Err(Error::invalid("too many columns for flat addressing"));
        }
        let features = (0..nf).map(|j| FeatureIndex::new(0, 0, j, 0)).collect();
        Self::from_source(labels, features, |i, out| {
            out.copy_from_slice(&rows[i]);
            Ok(())
        })
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_features(&self) -> usize {
        self.ranges.len()
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn column(&self, f: usize) -> &[u8] {
        &self.columns[f * self.n_samples..(f + 1) * self.n_samples]
    }

    pub fn range(&self, f: usize) -> FeatureRange {
        self.ranges[f]
    }

    pub fn feature(&self, f: usize) -> FeatureIndex {
        self.features[f]
    }

    /// Raw-value threshold equivalent to "bin <= b" on feature `f`.
    pub fn threshold(&self, f: usize, b: usize) -> f32 {
        self.ranges[f].edge(b)
    }
}
