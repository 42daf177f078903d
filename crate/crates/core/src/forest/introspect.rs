//! Filter usage counts, bank reduction and spatial influence maps.

use std::collections::BTreeMap;

use super::BoostedForest;
use crate::channels::NUM_CHANNELS;
use crate::error::{Error, Result};
use crate::filterbank::{Filter, FilterBank, FilterLists};
use crate::image::Plane;

/// Split-node counts per `(channel, filter index)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterUsage {
    pub per_channel: Vec<Vec<usize>>,
}

impl FilterUsage {
    pub fn total(&self) -> usize {
        self.per_channel.iter().flatten().sum()
    }

    /// Counts per filter id summed over channels, in bank order.
    pub fn by_id(&self, bank: &FilterBank) -> Vec<(String, usize)> {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        let mut order = Vec::new();
        for (c, row) in self.per_channel.iter().enumerate() {
            for (i, &n) in row.iter().enumerate() {
                let id = bank.filters_for(c)[i].id();
                if !counts.contains_key(id) {
                    order.push(id);
                }
                *counts.entry(id).or_default() += n;
            }
        }
        order.into_iter().map(|id| (id.to_string(), counts[id])).collect()
    }
}

pub fn filter_usage(forest: &BoostedForest, bank: &FilterBank) -> Result<FilterUsage> {
    let mut per_channel: Vec<Vec<usize>> = (0..NUM_CHANNELS).map(|c| vec![0; bank.filters_for(c).len()]).collect();
    for (f, _) in forest.trees().iter().flat_map(|t| t.splits()) {
        let slot = per_channel
            .get_mut(f.channel as usize)
            .and_then(|row| row.get_mut(f.filter as usize))
            .ok_or_else(|| Error::invalid(format!("split {f:?} addresses a filter outside the bank")))?;
        *slot += 1;
    }
    Ok(FilterUsage { per_channel })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReduceMode {
    /// One shared list ranked by counts summed over channels.
    AcrossChannels,
    /// A separate top list for every channel.
    PerChannel,
}

/// Indices of the `n` most used entries with nonzero count; ties go to
/// the lexicographically smaller id.
fn top_n(counts: &[(usize, &Filter)], n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..counts.len()).filter(|&i| counts[i].0 > 0).collect();
    order.sort_by(|&a, &b| counts[b].0.cmp(&counts[a].0).then_with(|| counts[a].1.id().cmp(counts[b].1.id())));
    order.truncate(n);
    order
}

/// Keeps the `n` most frequently used filters of `bank`.
pub fn reduce_bank(forest: &BoostedForest, bank: &FilterBank, n: usize, mode: ReduceMode) -> Result<FilterBank> {
    if n == 0 {
        return Err(Error::invalid("reduced bank size must be at least 1"));
    }
    let usage = filter_usage(forest, bank)?;
    if usage.total() == 0 {
        return Err(Error::invalid("forest has no split nodes to rank filters by"));
    }
    let lists = match (mode, bank.lists()) {
        (ReduceMode::AcrossChannels, FilterLists::Shared(filters)) => {
            let counts: Vec<(usize, &Filter)> = filters
                .iter()
                .enumerate()
                .map(|(i, f)| (usage.per_channel.iter().map(|row| row[i]).sum(), f))
                .collect();
            let keep = top_n(&counts, n);
            if keep.len() < n {
                log::warn!("only {} filters are used; keeping all of them", keep.len());
            }
            FilterLists::Shared(keep.into_iter().map(|i| filters[i].clone()).collect())
        }
        _ => {
            // per-channel output: rank within each channel, or globally by
            // id for per-channel source banks
            let global: Option<Vec<String>> = (mode == ReduceMode::AcrossChannels).then(|| {
                let by_id: BTreeMap<String, usize> = usage.by_id(bank).into_iter().collect();
                let mut all: Vec<&Filter> = bank.all_filters();
                all.dedup_by(|a, b| a.id() == b.id());
                let counts: Vec<(usize, &Filter)> = all.iter().map(|f| (by_id[f.id()], *f)).collect();
                let mut ids: Vec<String> = top_n(&counts, n).into_iter().map(|i| all[i].id().to_string()).collect();
                ids.dedup();
                ids
            });
            let mut lists = Vec::with_capacity(NUM_CHANNELS);
            for c in 0..NUM_CHANNELS {
                let filters = bank.filters_for(c);
                let counts: Vec<(usize, &Filter)> = usage.per_channel[c].iter().copied().zip(filters).collect();
                let mut keep: Vec<usize> = match &global {
                    Some(ids) => {
                        let mut k: Vec<usize> = (0..filters.len()).filter(|&i| ids.iter().any(|id| id == filters[i].id())).collect();
                        k.sort_by_key(|&i| ids.iter().position(|id| id == filters[i].id()));
                        k
                    }
                    None => top_n(&counts, n),
                };
                if keep.is_empty() {
                    log::warn!("channel {c} uses none of the kept filters; keeping its first filter");
                    keep.push(0);
                }
                lists.push(keep.into_iter().map(|i| filters[i].clone()).collect());
            }
            FilterLists::PerChannel(lists)
        }
    };
    FilterBank::new(bank.family(), bank.cell_px(), bank.stride_px(), lists)
}

/// Per-channel counts of split nodes covering each window pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceMaps {
    pub per_channel: Vec<Plane>,
    pub total: Plane,
}

/// Adds one to every pixel under a nonzero cell of each split node's
/// filter, placed at the node's window position.
pub fn spatial_influence(forest: &BoostedForest, bank: &FilterBank) -> Result<InfluenceMaps> {
    let (w, h) = forest.window();
    let (cell, stride) = (bank.cell_px(), bank.stride_px());
    let mut per_channel: Vec<Plane> = (0..NUM_CHANNELS).map(|_| Plane::new(w, h)).collect();
    for (f, _) in forest.trees().iter().flat_map(|t| t.splits()) {
        let filter = bank
            .filters_for(f.channel as usize)
            .get(f.filter as usize)
            .ok_or_else(|| Error::invalid(format!("split {f:?} addresses a filter outside the bank")))?;
        let (x0, y0) = (f.cell_x as usize * stride, f.cell_y as usize * stride);
        if x0 + filter.cols() * cell > w || y0 + filter.rows() * cell > h {
            return Err(Error::invalid(format!("split {f:?} exceeds the model window")));
        }
        let map = &mut per_channel[f.channel as usize];
        for r in 0..filter.rows() {
            for c in 0..filter.cols() {
                if filter.weight(r, c) == 0.0 {
                    continue;
                }
                for y in y0 + r * cell..y0 + (r + 1) * cell {
                    for x in x0 + c * cell..x0 + (c + 1) * cell {
                        map.data[y * w + x] += 1.0;
                    }
                }
            }
        }
    }
    let total = Plane::from_fn(w, h, |x, y| per_channel.iter().map(|p| p.get(x, y)).sum());
    Ok(InfluenceMaps { per_channel, total })
}
