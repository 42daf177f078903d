use rand::Rng as _;

use super::{Family, Filter, FilterBank, FilterLists};
use crate::error::{Error, Result};
use crate::rng;

pub const DEFAULT_CELL_PX: usize = 6;
pub const DEFAULT_STRIDE_PX: usize = 6;

/// Single all-ones 1×1-cell filter. With a 4 px cell this is exactly
/// ACF's pooling.
pub fn make_uniform(cell_px: usize, stride_px: usize) -> Result<FilterBank> {
    FilterBank::new(
        Family::Uniform,
        cell_px,
        stride_px,
        FilterLists::Shared(vec![Filter::uniform(1, 1)]),
    )
}

/// Uniform squares with sides `1..=n_sizes` cells.
pub fn make_squares(n_sizes: usize, cell_px: usize, stride_px: usize) -> Result<FilterBank> {
    if n_sizes == 0 {
        return Err(Error::invalid("squares bank needs at least one size"));
    }
    let filters = (1..=n_sizes).map(|s| Filter::uniform(s, s)).collect();
    FilterBank::new(Family::Squares, cell_px, stride_px, FilterLists::Shared(filters))
}

/// Every size `rows × cols` up to the maxima contributes, in order:
///
/// 1. a uniform filter when the size is square,
/// 2. one horizontal two-band filter per column split `k`
///    (`+1` on columns `[0, k)`, `-1` on `[k, cols)`),
/// 3. one vertical two-band filter per row split,
/// 4. one checkerboard `(-1)^(i+j)` when both sides are at least 2.
///
/// Negated patterns are never emitted.
pub fn make_checkerboards(
    max_rows: usize,
    max_cols: usize,
    cell_px: usize,
    stride_px: usize,
) -> Result<FilterBank> {
    if max_rows == 0 || max_cols == 0 {
        return Err(Error::invalid("checkerboards maxima must be at least 1"));
    }
    let mut filters = Vec::with_capacity(checkerboards_count(max_rows, max_cols));
    for rows in 1..=max_rows {
        for cols in 1..=max_cols {
            if rows == cols {
                filters.push(Filter::uniform(rows, cols));
            }
            for k in 1..cols {
                let w = (0..rows * cols)
                    .map(|i| if i % cols < k { 1.0 } else { -1.0 })
                    .collect();
                filters.push(Filter::new(format!("h{rows}x{cols}k{k}"), rows, cols, w)?);
            }
            for k in 1..rows {
                let w = (0..rows * cols)
                    .map(|i| if i / cols < k { 1.0 } else { -1.0 })
                    .collect();
                filters.push(Filter::new(format!("v{rows}x{cols}k{k}"), rows, cols, w)?);
            }
            if rows >= 2 && cols >= 2 {
                let w = (0..rows * cols)
                    .map(|i| if (i / cols + i % cols) % 2 == 0 { 1.0 } else { -1.0 })
                    .collect();
                filters.push(Filter::new(format!("c{rows}x{cols}"), rows, cols, w)?);
            }
        }
    }
    FilterBank::new(Family::Checkerboards, cell_px, stride_px, FilterLists::Shared(filters))
}

/// Closed-form size of [`make_checkerboards`].
pub fn checkerboards_count(max_rows: usize, max_cols: usize) -> usize {
    let (m, n) = (max_rows, max_cols);
    let squares = m.min(n);
    let horizontal = m * n * n.saturating_sub(1) / 2;
    let vertical = n * m * m.saturating_sub(1) / 2;
    let boards = m.saturating_sub(1) * n.saturating_sub(1);
    squares + horizontal + vertical + boards
}

/// `n` random `±1` filters with sizes uniform over
/// `{1..=max_rows} × {1..=max_cols}`.
///
/// Constant draws, repeats and negations of earlier filters are
/// redrawn. Fails when the size range cannot hold `n` distinct patterns.
pub fn make_random(
    n: usize,
    max_rows: usize,
    max_cols: usize,
    seed: u64,
    cell_px: usize,
    stride_px: usize,
) -> Result<FilterBank> {
    if n == 0 {
        return Err(Error::invalid("random bank needs at least one filter"));
    }
    if max_rows == 0 || max_cols == 0 {
        return Err(Error::invalid("random filter maxima must be at least 1"));
    }
    let mut rng = rng::stream(seed, "random-filters", 0);
    let mut filters: Vec<Filter> = Vec::with_capacity(n);
    let max_attempts = 1000 * n + 10_000;
    let mut attempts = 0;
    while filters.len() < n {
        attempts += 1;
        if attempts > max_attempts {
            return Err(Error::invalid(format!(
                "could not draw {n} distinct non-constant filters up to {max_rows}x{max_cols}"
            )));
        }
        let rows = rng.random_range(1..=max_rows);
        let cols = rng.random_range(1..=max_cols);
        let w: Vec<f64> = (0..rows * cols)
            .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
            .collect();
        if w.iter().all(|&v| v == w[0]) {
            continue;
        }
        let f = Filter::new(format!("r{}", filters.len()), rows, cols, w)?;
        if filters.iter().any(|g| g.same_pattern(&f) || g.is_negation_of(&f)) {
            continue;
        }
        filters.push(f);
    }
    FilterBank::new(Family::Random, cell_px, stride_px, FilterLists::Shared(filters))
}
