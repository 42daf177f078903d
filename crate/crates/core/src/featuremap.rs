//! Filter responses over channel planes and the flat feature addressing
//! shared by training and detection.
//!
//! A response is the valid-region correlation of a pixel-expanded filter
//! (each cell weight replicated over a `cell_px × cell_px` block) with one
//! channel, sampled every `stride_px` pixels starting at the origin. A
//! placement is valid only when the whole support lies inside the plane.
//!
//! Ternary banks go through one integral image per channel: each response
//! is a weighted sum of per-cell rectangle sums. Real-valued banks use
//! direct dot products. Both paths are exposed so they can be checked
//! against each other.

use std::path::Path;

use rayon::prelude::*;

use crate::channels::{ChannelStack, NUM_CHANNELS};
use crate::error::{Error, Result};
use crate::filterbank::{Filter, FilterBank};
use crate::image::Plane;

/// Summed-area table with a zero first row and column.
#[derive(Debug, Clone)]
pub struct IntegralImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl IntegralImage {
    pub fn new(p: &Plane) -> Self {
        let (w, h) = (p.width, p.height);
        let stride = w + 1;
        let mut data = vec![0.0f64; stride * (h + 1)];
        for y in 0..h {
            let mut row = 0.0f64;
            for x in 0..w {
                row += f64::from(p.data[y * w + x]);
                data[(y + 1) * stride + x + 1] = data[y * stride + x + 1] + row;
            }
        }
        IntegralImage {
            width: w,
            height: h,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Sum over `[x, x + w) × [y, y + h)`.
    #[inline]
    pub fn rect_sum(&self, x: usize, y: usize, w: usize, h: usize) -> f64 {
        let s = self.width + 1;
        let (x1, y1) = (x + w, y + h);
        self.data[y1 * s + x1] - self.data[y * s + x1] - self.data[y1 * s + x] + self.data[y * s + x]
    }
}

/// One response map on the stride grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponsePlane {
    pub grid_w: usize,
    pub grid_h: usize,
    pub data: Vec<f32>,
}

impl ResponsePlane {
    fn empty() -> Self {
        ResponsePlane {
            grid_w: 0,
            grid_h: 0,
            data: Vec::new(),
        }
    }

    #[inline]
    pub fn get(&self, gx: usize, gy: usize) -> f32 {
        self.data[gy * self.grid_w + gx]
    }

    pub fn write_pfm(&self, path: &Path) -> Result<()> {
        crate::grid::write_pfm(path, self.grid_w, self.grid_h, &self.data)
    }
}

/// Where a response stack came from.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Provenance {
    pub image_id: String,
    pub scale: f64,
}

/// All `(channel, filter)` response planes of one channel stack.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseStack {
    planes: Vec<ResponsePlane>,
    channel_offsets: Vec<usize>,
    stride_px: usize,
    pub provenance: Provenance,
}

impl ResponseStack {
    pub fn planes(&self) -> &[ResponsePlane] {
        &self.planes
    }

    pub fn stride_px(&self) -> usize {
        self.stride_px
    }

    pub fn plane_index(&self, channel: usize, filter: usize) -> Option<usize> {
        if channel >= NUM_CHANNELS {
            return None;
        }
        let i = self.channel_offsets[channel] + filter;
        (i < self.channel_offsets[channel + 1]).then_some(i)
    }

    pub fn plane(&self, channel: usize, filter: usize) -> Option<&ResponsePlane> {
        self.plane_index(channel, filter).map(|i| &self.planes[i])
    }
}

/// Address of one feature inside the model window: the response of
/// `filter` on `channel` at grid cell `(cell_x, cell_y)` relative to the
/// window origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FeatureIndex {
    pub channel: u16,
    pub filter: u16,
    pub cell_x: u16,
    pub cell_y: u16,
}

impl FeatureIndex {
    pub fn new(channel: usize, filter: usize, cell_x: usize, cell_y: usize) -> Self {
        FeatureIndex {
            channel: channel as u16,
            filter: filter as u16,
            cell_x: cell_x as u16,
            cell_y: cell_y as u16,
        }
    }
}

/// Number of valid placements of a `support`-pixel filter along an axis
/// of `extent` pixels.
#[inline]
pub fn placements(extent: usize, support: usize, stride: usize) -> usize {
    if extent < support {
        0
    } else {
        (extent - support) / stride + 1
    }
}

fn filter_support(f: &Filter, cell_px: usize) -> (usize, usize) {
    (f.cols() * cell_px, f.rows() * cell_px)
}

fn check_fits(stack: &ChannelStack, bank: &FilterBank) -> Result<()> {
    let (mw, mh) = bank.max_support_px();
    if stack.width() < mw || stack.height() < mh {
        return Err(Error::invalid(format!(
            "channel stack {}x{} is smaller than the largest filter support {mw}x{mh}",
            stack.width(),
            stack.height()
        )));
    }
    Ok(())
}

fn channel_offsets(bank: &FilterBank) -> Vec<usize> {
    (0..=NUM_CHANNELS).map(|c| bank.plane_offset(c)).collect()
}

fn direct_plane(p: &Plane, f: &Filter, cell: usize, stride: usize) -> ResponsePlane {
    let (fw, fh) = filter_support(f, cell);
    let gw = placements(p.width, fw, stride);
    let gh = placements(p.height, fh, stride);
    // pixel-expanded kernel
    let kernel: Vec<f64> = (0..fh)
        .flat_map(|y| (0..fw).map(move |x| (x, y)))
        .map(|(x, y)| f.weight(y / cell, x / cell))
        .collect();
    let mut data = Vec::with_capacity(gw * gh);
    for gy in 0..gh {
        for gx in 0..gw {
            let (x0, y0) = (gx * stride, gy * stride);
            let mut acc = 0.0f64;
            for ky in 0..fh {
                let row = &p.data[(y0 + ky) * p.width + x0..][..fw];
                let krow = &kernel[ky * fw..(ky + 1) * fw];
                for (k, &v) in krow.iter().zip(row) {
                    acc += k * f64::from(v);
                }
            }
            data.push(acc as f32);
        }
    }
    ResponsePlane {
        grid_w: gw,
        grid_h: gh,
        data,
    }
}

/// Per-cell box sums on the stride grid, `(grid_w, grid_h, sums)`.
fn cell_sums(ii: &IntegralImage, cell: usize, stride: usize) -> (usize, usize, Vec<f64>) {
    let gw = placements(ii.width(), cell, stride);
    let gh = placements(ii.height(), cell, stride);
    let mut sums = Vec::with_capacity(gw * gh);
    for gy in 0..gh {
        for gx in 0..gw {
            sums.push(ii.rect_sum(gx * stride, gy * stride, cell, cell));
        }
    }
    (gw, gh, sums)
}

fn integral_plane(
    ii: &IntegralImage,
    boxes: Option<&(usize, usize, Vec<f64>)>,
    f: &Filter,
    cell: usize,
    stride: usize,
) -> ResponsePlane {
    let (fw, fh) = filter_support(f, cell);
    let gw = placements(ii.width(), fw, stride);
    let gh = placements(ii.height(), fh, stride);
    let cells: Vec<(usize, usize, f64)> = (0..f.rows())
        .flat_map(|r| (0..f.cols()).map(move |c| (r, c)))
        .filter_map(|(r, c)| {
            let w = f.weight(r, c);
            (w != 0.0).then_some((r, c, w))
        })
        .collect();
    let mut data = Vec::with_capacity(gw * gh);
    match boxes {
        // cells land on the stride grid: compose precomputed box sums
        Some((bw, _, sums)) => {
            let k = cell / stride;
            for gy in 0..gh {
                for gx in 0..gw {
                    let mut acc = 0.0f64;
                    for &(r, c, w) in &cells {
                        acc += w * sums[(gy + r * k) * bw + gx + c * k];
                    }
                    data.push(acc as f32);
                }
            }
        }
        None => {
            for gy in 0..gh {
                for gx in 0..gw {
                    let (x0, y0) = (gx * stride, gy * stride);
                    let mut acc = 0.0f64;
                    for &(r, c, w) in &cells {
                        acc += w * ii.rect_sum(x0 + c * cell, y0 + r * cell, cell, cell);
                    }
                    data.push(acc as f32);
                }
            }
        }
    }
    ResponsePlane {
        grid_w: gw,
        grid_h: gh,
        data,
    }
}

/// Applies `bank`, computing only planes with `mask[i] == true` (all when
/// `mask` is `None`); skipped planes are left empty.
pub fn apply_bank_masked(stack: &ChannelStack, bank: &FilterBank, mask: Option<&[bool]>) -> Result<ResponseStack> {
    check_fits(stack, bank)?;
    let cell = bank.cell_px();
    let stride = bank.stride_px();
    let refs: Vec<_> = bank.planes().collect();
    let wanted = |i: usize| mask.is_none_or(|m| m[i]);

    let planes: Vec<ResponsePlane> = if bank.is_integer() {
        let integrals: Vec<IntegralImage> = stack.planes().par_iter().map(IntegralImage::new).collect();
        let boxes: Vec<Option<(usize, usize, Vec<f64>)>> = if cell % stride == 0 {
            integrals.par_iter().map(|ii| Some(cell_sums(ii, cell, stride))).collect()
        } else {
            vec![None; NUM_CHANNELS]
        };
        refs.par_iter()
            .enumerate()
            .map(|(i, p)| {
                if !wanted(i) {
                    return ResponsePlane::empty();
                }
                integral_plane(&integrals[p.channel], boxes[p.channel].as_ref(), p.filter, cell, stride)
            })
            .collect()
    } else {
        refs.par_iter()
            .enumerate()
            .map(|(i, p)| {
                if !wanted(i) {
                    return ResponsePlane::empty();
                }
                direct_plane(stack.plane(p.channel), p.filter, cell, stride)
            })
            .collect()
    };
    Ok(ResponseStack {
        planes,
        channel_offsets: channel_offsets(bank),
        stride_px: stride,
        provenance: Provenance::default(),
    })
}

/// Response planes for every `(channel, filter)` pair of `bank`.
pub fn apply_bank(stack: &ChannelStack, bank: &FilterBank) -> Result<ResponseStack> {
    apply_bank_masked(stack, bank, None)
}

/// Same responses through direct pixel dot products, for any bank.
pub fn apply_bank_direct(stack: &ChannelStack, bank: &FilterBank) -> Result<ResponseStack> {
    check_fits(stack, bank)?;
    let (cell, stride) = (bank.cell_px(), bank.stride_px());
    let refs: Vec<_> = bank.planes().collect();
    let planes = refs
        .par_iter()
        .map(|p| direct_plane(stack.plane(p.channel), p.filter, cell, stride))
        .collect();
    Ok(ResponseStack {
        planes,
        channel_offsets: channel_offsets(bank),
        stride_px: stride,
        provenance: Provenance::default(),
    })
}

/// The valid features of a bank inside a model window, in a fixed order:
/// response plane (channel-major), then `cell_y`, then `cell_x`.
#[derive(Debug, Clone)]
pub struct FeatureSpace {
    window_w: usize,
    window_h: usize,
    features: Vec<FeatureIndex>,
}

impl FeatureSpace {
    pub fn new(bank: &FilterBank, window_w: usize, window_h: usize) -> Result<Self> {
        let stride = bank.stride_px();
        if window_w % stride != 0 || window_h % stride != 0 {
            return Err(Error::invalid(format!(
                "window {window_w}x{window_h} is not divisible by the stride {stride}"
            )));
        }
        let mut features = Vec::new();
        for p in bank.planes() {
            let (fw, fh) = filter_support(p.filter, bank.cell_px());
            let nx = placements(window_w, fw, stride);
            let ny = placements(window_h, fh, stride);
            for cy in 0..ny {
                for cx in 0..nx {
                    features.push(FeatureIndex::new(p.channel, p.filter_index, cx, cy));
                }
            }
        }
        Ok(FeatureSpace {
            window_w,
            window_h,
            features,
        })
    }

    pub fn window(&self) -> (usize, usize) {
        (self.window_w, self.window_h)
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn features(&self) -> &[FeatureIndex] {
        &self.features
    }

    pub fn get(&self, i: usize) -> FeatureIndex {
        self.features[i]
    }
}

/// Number of valid features of `bank` inside a `window_w × window_h` window.
pub fn feature_count(bank: &FilterBank, window_w: usize, window_h: usize) -> Result<usize> {
    let stride = bank.stride_px();
    if window_w % stride != 0 || window_h % stride != 0 {
        return Err(Error::invalid(format!(
            "window {window_w}x{window_h} is not divisible by the stride {stride}"
        )));
    }
    Ok(bank
        .planes()
        .map(|p| {
            let (fw, fh) = filter_support(p.filter, bank.cell_px());
            placements(window_w, fw, stride) * placements(window_h, fh, stride)
        })
        .sum())
}

/// Reads `idx` for the window whose origin is grid cell `(origin_x, origin_y)`.
pub fn read_feature_at(resp: &ResponseStack, idx: FeatureIndex, origin_x: usize, origin_y: usize) -> Result<f32> {
    let plane = resp
        .plane(idx.channel as usize, idx.filter as usize)
        .ok_or_else(|| Error::OutOfRange(format!("{idx:?}: no such response plane")))?;
    let gx = origin_x + idx.cell_x as usize;
    let gy = origin_y + idx.cell_y as usize;
    if gx >= plane.grid_w || gy >= plane.grid_h {
        return Err(Error::OutOfRange(format!(
            "{idx:?} at origin ({origin_x}, {origin_y}) outside {}x{} grid",
            plane.grid_w, plane.grid_h
        )));
    }
    Ok(plane.get(gx, gy))
}

/// Reads `idx` relative to the grid origin.
pub fn read_feature(resp: &ResponseStack, idx: FeatureIndex) -> Result<f32> {
    read_feature_at(resp, idx, 0, 0)
}
