//! Positive/negative window sampling, training-set extraction and patch
//! sampling for PCA filters.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng as _;
use rayon::prelude::*;

use super::Corpus;
use crate::channels::{compute_channels, ChannelOptions, ChannelStack, NUM_CHANNELS};
use crate::error::{Error, Result};
use crate::featuremap::{apply_bank, read_feature_at, FeatureSpace};
use crate::filterbank::{FilterBank, PatchSet};
use crate::forest::QuantizedData;
use crate::geometry::{BoundingBox, WindowGeometry};
use crate::image::{BorderMode, Image, Region};
use crate::rng::stream;

/// Windows may extend past the image by this fraction of their size on
/// each side; the outside is filled by reflection.
pub const MAX_PAD_FRAC: f64 = 0.25;

/// One training window. Features are computed on demand from the source
/// image rather than cached.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSample {
    /// Index into the corpus entries.
    pub image: usize,
    pub image_id: String,
    /// Full model window in image pixels.
    pub window: BoundingBox,
    pub positive: bool,
    pub mirrored: bool,
}

fn within_padding(win: &BoundingBox, w: usize, h: usize) -> bool {
    let (px, py) = (MAX_PAD_FRAC * win.w, MAX_PAD_FRAC * win.h);
    win.x >= -px && win.y >= -py && win.right() <= w as f64 + px && win.bottom() <= h as f64 + py
}

/// One window per non-ignore annotation (two with `mirror`), at model
/// aspect, height-anchored and centred on the box. Windows needing more
/// than [`MAX_PAD_FRAC`] padding are skipped.
pub fn sample_positives(corpus: &Corpus, geometry: &WindowGeometry, mirror: bool) -> Vec<WindowSample> {
    let mut out = Vec::new();
    let mut skipped = 0;
    for (i, e) in corpus.entries.iter().enumerate() {
        for a in e.annotations.iter().filter(|a| !a.ignore) {
            let window = geometry.window_for_object(&a.bbox);
            if !within_padding(&window, e.width, e.height) {
                skipped += 1;
                continue;
            }
            for mirrored in [false, true].into_iter().take(if mirror { 2 } else { 1 }) {
                out.push(WindowSample {
                    image: i,
                    image_id: e.id.clone(),
                    window,
                    positive: true,
                    mirrored,
                });
            }
        }
    }
    if skipped > 0 {
        log::info!("skipped {skipped} positives too close to the image border");
    }
    out
}

/// Up to `n` windows drawn uniformly over image, log-height within
/// `window_h_range` and position. A window is rejected when the object box
/// inside it has IoU above `exclusion_iou` with any annotation.
pub fn sample_negatives(
    corpus: &Corpus,
    n: usize,
    seed: u64,
    exclusion_iou: f64,
    geometry: &WindowGeometry,
    window_h_range: (f64, f64),
) -> Vec<WindowSample> {
    let mut out = Vec::with_capacity(n);
    if n == 0 || corpus.is_empty() {
        return out;
    }
    let mut rng = stream(seed, "negatives", 0);
    let aspect = geometry.window_w as f64 / geometry.window_h as f64;
    let max_attempts = 100 * n + 1000;
    for _ in 0..max_attempts {
        if out.len() == n {
            break;
        }
        let i = rng.random_range(0..corpus.len());
        let e = &corpus.entries[i];
        let hi = window_h_range.1.min(e.height as f64).min(e.width as f64 / aspect);
        let lo = window_h_range.0;
        if lo > hi {
            continue;
        }
        let wh = (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp().min(hi);
        let ww = wh * aspect;
        let x = rng.random::<f64>() * (e.width as f64 - ww);
        let y = rng.random::<f64>() * (e.height as f64 - wh);
        let s = wh / geometry.window_h as f64;
        let obj = geometry.object_in_window(x, y, s, s);
        if e.annotations.iter().any(|a| obj.iou(&a.bbox) > exclusion_iou) {
            continue;
        }
        out.push(WindowSample {
            image: i,
            image_id: e.id.clone(),
            window: BoundingBox::new(x, y, ww, wh),
            positive: false,
            mirrored: false,
        });
    }
    if out.len() < n {
        log::warn!("sampled only {} of {n} negatives", out.len());
    }
    out
}

/// Context margin (model pixels) around training windows, a multiple of
/// the bank stride of at least 4 px.
pub fn feature_margin(stride_px: usize) -> usize {
    stride_px * 4usize.div_ceil(stride_px)
}

/// Channels of a window resampled to model resolution with `margin`
/// extra pixels on every side.
pub fn window_channels(
    img: &Image,
    sample: &WindowSample,
    geometry: &WindowGeometry,
    channels: &ChannelOptions,
    margin: usize,
) -> Result<ChannelStack> {
    let s = sample.window.h / geometry.window_h as f64;
    let m = margin as f64 * s;
    let region = Region {
        x: sample.window.x - m,
        y: sample.window.y - m,
        w: sample.window.w + 2.0 * m,
        h: sample.window.h + 2.0 * m,
    };
    let patch = img.resample(
        &region,
        geometry.window_w + 2 * margin,
        geometry.window_h + 2 * margin,
        sample.mirrored,
        BorderMode::Reflect,
    );
    compute_channels(&patch, channels)
}

/// Quantized feature matrix of `samples` over all features of `bank`
/// inside the model window.
pub fn build_training_set(
    corpus: &Corpus,
    samples: &[WindowSample],
    bank: &FilterBank,
    channels: &ChannelOptions,
    geometry: &WindowGeometry,
) -> Result<QuantizedData> {
    let space = FeatureSpace::new(bank, geometry.window_w, geometry.window_h)?;
    let margin = feature_margin(bank.stride_px());
    let origin = margin / bank.stride_px();
    let mut images: BTreeMap<usize, Arc<Image>> = BTreeMap::new();
    for s in samples {
        if !images.contains_key(&s.image) {
            let e = corpus
                .entries
                .get(s.image)
                .ok_or_else(|| Error::invalid(format!("sample refers to missing image {}", s.image)))?;
            images.insert(s.image, e.load_image()?);
        }
    }
    let labels = samples.iter().map(|s| s.positive).collect();
    QuantizedData::from_source(labels, space.features().to_vec(), |i, row| {
        let s = &samples[i];
        let stack = window_channels(&images[&s.image], s, geometry, channels, margin)?;
        let resp = apply_bank(&stack, bank)?;
        for (v, &f) in row.iter_mut().zip(space.features()) {
            *v = read_feature_at(&resp, f, origin, origin)?;
        }
        Ok(())
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatchOrigin {
    All,
    /// Inside non-ignore annotation boxes.
    Foreground,
    /// Not touching any annotation box.
    Background,
}

/// `n` patch locations drawn per `origin`; every location contributes one
/// `patch_px × patch_px` patch to each channel's set.
pub fn extract_patches(
    corpus: &Corpus,
    channels: &ChannelOptions,
    patch_px: usize,
    n: usize,
    origin: PatchOrigin,
    seed: u64,
) -> Result<PatchSet> {
    if n == 0 || patch_px == 0 {
        return Err(Error::invalid("patch count and size must be positive"));
    }
    let p = patch_px as f64;
    let fg: Vec<(usize, BoundingBox)> = corpus
        .entries
        .iter()
        .enumerate()
        .flat_map(|(i, e)| e.annotations.iter().filter(|a| !a.ignore).map(move |a| (i, a.bbox)))
        .filter(|(_, b)| b.w >= p && b.h >= p)
        .collect();
    if origin == PatchOrigin::Foreground && fg.is_empty() {
        return Err(Error::invalid("foreground patches need annotations at least as large as a patch"));
    }
    let usable: Vec<usize> = (0..corpus.len())
        .filter(|&i| corpus.entries[i].width >= patch_px && corpus.entries[i].height >= patch_px)
        .collect();
    if usable.is_empty() {
        return Err(Error::invalid("no image is large enough for a patch"));
    }
    let mut rng = stream(seed, "patches", origin as u64);
    let mut locs: Vec<(usize, usize, usize)> = Vec::with_capacity(n);
    let max_attempts = 1000 * n + 1000;
    for _ in 0..max_attempts {
        if locs.len() == n {
            break;
        }
        match origin {
            PatchOrigin::Foreground => {
                let (i, b) = fg[rng.random_range(0..fg.len())];
                let (x0, y0) = (b.x.ceil() as usize, b.y.ceil() as usize);
                let (x1, y1) = ((b.right() - p).floor(), (b.bottom() - p).floor());
                if x1 < x0 as f64 || y1 < y0 as f64 {
                    continue;
                }
                let x = rng.random_range(x0..=x1 as usize);
                let y = rng.random_range(y0..=y1 as usize);
                locs.push((i, x, y));
            }
            PatchOrigin::All | PatchOrigin::Background => {
                let i = usable[rng.random_range(0..usable.len())];
                let e = &corpus.entries[i];
                let x = rng.random_range(0..=e.width - patch_px);
                let y = rng.random_range(0..=e.height - patch_px);
                let pb = BoundingBox::new(x as f64, y as f64, p, p);
                if origin == PatchOrigin::Background && e.annotations.iter().any(|a| a.bbox.intersection(&pb) > 0.0) {
                    continue;
                }
                locs.push((i, x, y));
            }
        }
    }
    if locs.len() < n {
        return Err(Error::invalid(format!("could only place {} of {n} {origin:?} patches", locs.len())));
    }

    let mut by_image: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (k, l) in locs.iter().enumerate() {
        by_image.entry(l.0).or_default().push(k);
    }
    let groups: Vec<(usize, Vec<usize>)> = by_image.into_iter().collect();
    let dim = patch_px * patch_px;
    let extracted: Vec<Vec<(usize, Vec<Vec<f32>>)>> = groups
        .par_iter()
        .map(|(i, ks)| {
            let stack = compute_channels(&*corpus.entries[*i].load_image()?, channels)?;
            Ok(ks
                .iter()
                .map(|&k| {
                    let (_, x, y) = locs[k];
                    let per: Vec<Vec<f32>> = (0..NUM_CHANNELS)
                        .map(|c| {
                            let pl = stack.plane(c);
                            let mut v = Vec::with_capacity(dim);
                            for r in 0..patch_px {
                                v.extend_from_slice(&pl.data[(y + r) * pl.width + x..][..patch_px]);
                            }
                            v
                        })
                        .collect();
                    (k, per)
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let mut ordered: Vec<(usize, Vec<Vec<f32>>)> = extracted.into_iter().flatten().collect();
    ordered.sort_by_key(|(k, _)| *k);
    let mut set = PatchSet::new(patch_px);
    for (_, per) in ordered {
        for (c, v) in per.into_iter().enumerate() {
            set.per_channel[c].extend(v);
        }
    }
    Ok(set)
}
