//! Filter banks applied on top of the feature channels.
//!
//! A [`Filter`] is a small grid of cells; each cell weight covers a
//! `cell_px × cell_px` block of channel pixels. Generated families use
//! weights in `{-1, 0, +1}`, PCA families use real unit-norm filters with
//! one list per channel.

mod generate;
mod io;
mod pca;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channels::NUM_CHANNELS;
use crate::error::{Error, Result};

pub use generate::{
    checkerboards_count, make_checkerboards, make_random, make_squares, make_uniform,
    DEFAULT_CELL_PX, DEFAULT_STRIDE_PX,
};
pub use io::{load_bank, parse_bank, save_bank, write_bank};
pub use pca::{learn_pca, pca_basis, PatchSet, PcaBasis, PcaInput, PCA_PATCH_PX, PCA_STRIDE_PX};

/// Largest filter side, in cells.
pub const MAX_FILTER_DIM: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Uniform,
    Squares,
    Checkerboards,
    Random,
    Informed,
    PcaAllData,
    PcaForeground,
}

impl Family {
    pub fn is_pca(self) -> bool {
        matches!(self, Family::PcaAllData | Family::PcaForeground)
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::Uniform => "uniform",
            Family::Squares => "squares",
            Family::Checkerboards => "checkerboards",
            Family::Random => "random",
            Family::Informed => "informed",
            Family::PcaAllData => "pca-all-data",
            Family::PcaForeground => "pca-foreground",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "uniform" => Family::Uniform,
            "squares" => Family::Squares,
            "checkerboards" => Family::Checkerboards,
            "random" => Family::Random,
            "informed" => Family::Informed,
            "pca-all-data" => Family::PcaAllData,
            "pca-foreground" => Family::PcaForeground,
            other => return Err(Error::invalid(format!("unknown filter family {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Filter {
    id: String,
    rows: usize,
    cols: usize,
    weights: Vec<f64>,
}

impl Filter {
    pub fn new(id: impl Into<String>, rows: usize, cols: usize, weights: Vec<f64>) -> Result<Self> {
        let id = id.into();
        if rows == 0 || cols == 0 || rows > MAX_FILTER_DIM || cols > MAX_FILTER_DIM {
            return Err(Error::invalid(format!(
                "filter {id}: size {rows}x{cols} outside 1..={MAX_FILTER_DIM}"
            )));
        }
        if weights.len() != rows * cols {
            return Err(Error::invalid(format!(
                "filter {id}: {} weights for a {rows}x{cols} filter",
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::invalid(format!("filter {id}: non-finite weight")));
        }
        if weights.iter().all(|&w| w == 0.0) {
            return Err(Error::invalid(format!("filter {id}: all weights are zero")));
        }
        if id.is_empty() || id.chars().any(char::is_whitespace) {
            return Err(Error::invalid(format!("filter id {id:?} must be a non-empty word")));
        }
        Ok(Filter {
            id,
            rows,
            cols,
            weights,
        })
    }

    /// All-ones filter.
    pub fn uniform(rows: usize, cols: usize) -> Self {
        Filter::new(format!("u{rows}x{cols}"), rows, cols, vec![1.0; rows * cols])
            .expect("valid uniform filter")
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    pub fn weight(&self, row: usize, col: usize) -> f64 {
        self.weights[row * self.cols + col]
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn nonzero_cells(&self) -> usize {
        self.weights.iter().filter(|&&w| w != 0.0).count()
    }

    pub fn is_ternary(&self) -> bool {
        self.weights.iter().all(|&w| w == -1.0 || w == 0.0 || w == 1.0)
    }

    pub fn norm(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum::<f64>().sqrt()
    }

    pub fn negated(&self) -> Vec<f64> {
        self.weights.iter().map(|w| -w).collect()
    }

    /// Same shape and weights (ids ignored).
    pub fn same_pattern(&self, other: &Filter) -> bool {
        self.rows == other.rows && self.cols == other.cols && self.weights == other.weights
    }

    pub fn is_negation_of(&self, other: &Filter) -> bool {
        self.rows == other.rows && self.cols == other.cols && self.negated() == other.weights
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FilterLists {
    /// One list applied to every channel.
    Shared(Vec<Filter>),
    /// One list per channel.
    PerChannel(Vec<Vec<Filter>>),
}

/// One response plane: a filter applied to one channel.
#[derive(Debug, Clone, Copy)]
pub struct PlaneRef<'a> {
    pub channel: usize,
    pub filter_index: usize,
    pub filter: &'a Filter,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    family: Family,
    cell_px: usize,
    stride_px: usize,
    filters: FilterLists,
}

impl FilterBank {
    pub fn new(family: Family, cell_px: usize, stride_px: usize, filters: FilterLists) -> Result<Self> {
        let bank = FilterBank {
            family,
            cell_px,
            stride_px,
            filters,
        };
        bank.validate()?;
        Ok(bank)
    }

    fn validate(&self) -> Result<()> {
        if self.cell_px == 0 {
            return Err(Error::invalid("cell_px must be at least 1"));
        }
        if self.stride_px == 0 {
            return Err(Error::invalid("stride_px must be at least 1"));
        }
        match &self.filters {
            FilterLists::Shared(list) => {
                if list.is_empty() {
                    return Err(Error::invalid("filter bank is empty"));
                }
            }
            FilterLists::PerChannel(lists) => {
                if lists.len() != NUM_CHANNELS {
                    return Err(Error::invalid(format!(
                        "per-channel bank needs {NUM_CHANNELS} lists, got {}",
                        lists.len()
                    )));
                }
                if let Some(c) = lists.iter().position(Vec::is_empty) {
                    return Err(Error::Channel {
                        channel: c,
                        msg: "empty filter list".into(),
                    });
                }
            }
        }
        for f in self.all_filters() {
            if self.family.is_pca() {
                if (f.norm() - 1.0).abs() > 1e-6 {
                    return Err(Error::invalid(format!(
                        "filter {}: PCA filters must be unit-norm (norm {})",
                        f.id,
                        f.norm()
                    )));
                }
            } else if !f.is_ternary() {
                return Err(Error::invalid(format!(
                    "filter {}: {} filters take weights in {{-1, 0, +1}}",
                    f.id, self.family
                )));
            }
        }
        Ok(())
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn cell_px(&self) -> usize {
        self.cell_px
    }

    pub fn stride_px(&self) -> usize {
        self.stride_px
    }

    pub fn lists(&self) -> &FilterLists {
        &self.filters
    }

    pub fn is_per_channel(&self) -> bool {
        matches!(self.filters, FilterLists::PerChannel(_))
    }

    /// Filters applied to `channel`.
    pub fn filters_for(&self, channel: usize) -> &[Filter] {
        match &self.filters {
            FilterLists::Shared(list) => list,
            FilterLists::PerChannel(lists) => &lists[channel],
        }
    }

    /// Every distinct filter in bank order (channel lists concatenated for
    /// per-channel banks).
    pub fn all_filters(&self) -> Vec<&Filter> {
        match &self.filters {
            FilterLists::Shared(list) => list.iter().collect(),
            FilterLists::PerChannel(lists) => lists.iter().flatten().collect(),
        }
    }

    pub fn num_filters(&self) -> usize {
        match &self.filters {
            FilterLists::Shared(list) => list.len(),
            FilterLists::PerChannel(lists) => lists.iter().map(Vec::len).sum(),
        }
    }

    /// `(channel, filter)` pairs in response-plane order: channel-major,
    /// then filter index.
    pub fn planes(&self) -> impl Iterator<Item = PlaneRef<'_>> {
        (0..NUM_CHANNELS).flat_map(move |c| {
            self.filters_for(c).iter().enumerate().map(move |(i, f)| PlaneRef {
                channel: c,
                filter_index: i,
                filter: f,
            })
        })
    }

    pub fn num_planes(&self) -> usize {
        (0..NUM_CHANNELS).map(|c| self.filters_for(c).len()).sum()
    }

    /// Index of the first plane of `channel`.
    pub fn plane_offset(&self, channel: usize) -> usize {
        (0..channel).map(|c| self.filters_for(c).len()).sum()
    }

    /// Largest filter support in pixels, `(width, height)`.
    pub fn max_support_px(&self) -> (usize, usize) {
        let all = self.all_filters();
        let w = all.iter().map(|f| f.cols).max().unwrap_or(0) * self.cell_px;
        let h = all.iter().map(|f| f.rows).max().unwrap_or(0) * self.cell_px;
        (w, h)
    }

    /// True when every weight is in `{-1, 0, +1}`, which enables the
    /// integral-image path.
    pub fn is_integer(&self) -> bool {
        self.all_filters().iter().all(|f| f.is_ternary())
    }

    /// A short identifier recorded in model files.
    pub fn describe(&self) -> String {
        format!(
            "{}:{}filters:cell{}:stride{}",
            self.family,
            self.num_filters(),
            self.cell_px,
            self.stride_px
        )
    }
}
