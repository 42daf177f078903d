//! Multi-scale sliding-window detection and greedy non-maximum suppression.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channels::compute_channels;
use crate::error::{Error, Result};
use crate::featuremap::{apply_bank_masked, placements};
pub use crate::geometry::BoundingBox;
use crate::geometry::WindowGeometry;
use crate::image::Image;
use crate::forest::Model;
use crate::numfmt::{format_sig, DETECTION_DIGITS};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub bbox: BoundingBox,
    pub score: f64,
    /// Pyramid scale (resized / original) the window was found at.
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PyramidSpec {
    pub scales_per_octave: usize,
    /// Smallest object height searched, in image pixels.
    pub min_object_h: f64,
    /// Largest object height searched; unbounded when absent.
    pub max_object_h: Option<f64>,
    /// Window step in pixels at every scale.
    pub stride_px: usize,
    pub score_min: f64,
    /// Greedy NMS threshold on min-area overlap; no NMS when absent.
    pub nms_overlap: Option<f64>,
}

impl Default for PyramidSpec {
    fn default() -> Self {
        PyramidSpec {
            scales_per_octave: 8,
            min_object_h: 50.0,
            max_object_h: None,
            stride_px: 6,
            score_min: -1.0,
            nms_overlap: Some(0.65),
        }
    }
}

impl PyramidSpec {
    pub fn validate(&self) -> Result<()> {
        if self.scales_per_octave == 0 || self.stride_px == 0 {
            return Err(Error::invalid("scales_per_octave and stride_px must be positive"));
        }
        if !(self.min_object_h > 0.0) || self.max_object_h.is_some_and(|m| !(m >= self.min_object_h)) {
            return Err(Error::invalid("object height range is empty"));
        }
        Ok(())
    }

    /// Scales `s₀·2^(-k/n)` from `s₀ = object_h / min_object_h` down to
    /// the largest object height or until the window no longer fits.
    pub fn scales(&self, geometry: &WindowGeometry, img_w: usize, img_h: usize) -> Vec<f64> {
        let oh = geometry.object_h();
        let s0 = oh / self.min_object_h;
        let s_min = self.max_object_h.map_or(0.0, |m| oh / m);
        let mut out = Vec::new();
        for k in 0.. {
            let s = s0 * 2f64.powf(-(k as f64) / self.scales_per_octave as f64);
            if s < s_min * (1.0 - 1e-12) {
                break;
            }
            let (w, h) = scaled_dims(img_w, img_h, s);
            if w < geometry.window_w || h < geometry.window_h {
                break;
            }
            out.push(s);
        }
        out
    }

    /// Window heights in image pixels covered by the object height range.
    pub fn window_height_range(&self, geometry: &WindowGeometry) -> (f64, f64) {
        let lo = self.min_object_h / geometry.object_h_frac;
        let hi = self.max_object_h.map_or(f64::INFINITY, |m| m / geometry.object_h_frac);
        (lo, hi)
    }
}

fn scaled_dims(w: usize, h: usize, s: f64) -> (usize, usize) {
    (((w as f64 * s).round() as usize).max(1), ((h as f64 * s).round() as usize).max(1))
}

/// Descending score; ties by scale, then y, then x.
pub fn sort_detections(dets: &mut [Detection]) {
    dets.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.scale.total_cmp(&b.scale))
            .then(a.bbox.y.total_cmp(&b.bbox.y))
            .then(a.bbox.x.total_cmp(&b.bbox.x))
    });
}

fn detect_scale(img: &Image, model: &Model, spec: &PyramidSpec, s: f64, mask: &[bool]) -> Result<Vec<Detection>> {
    let g = &model.geometry;
    let (w, h) = scaled_dims(img.width(), img.height(), s);
    let resized = img.resize(w, h);
    let stack = compute_channels(&resized, &model.channels)?;
    let resp = apply_bank_masked(&stack, &model.bank, Some(mask))?;
    let compiled = model.forest.compile(&resp)?;
    let bank_stride = model.bank.stride_px();
    let step = spec.stride_px / bank_stride;
    let nx = placements(w, g.window_w, spec.stride_px);
    let ny = placements(h, g.window_h, spec.stride_px);
    let (sx, sy) = (w as f64 / img.width() as f64, h as f64 / img.height() as f64);
    let (mx, my) = compiled.max_origin();
    let mut out = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            let (ox, oy) = (i * step, j * step);
            if ox > mx || oy > my {
                continue;
            }
            let score = compiled.score(ox, oy)?;
            if score >= spec.score_min {
                let (px, py) = ((ox * bank_stride) as f64, (oy * bank_stride) as f64);
                out.push(Detection {
                    bbox: g.object_in_window(px / sx, py / sy, 1.0 / sx, 1.0 / sy),
                    score,
                    scale: s,
                });
            }
        }
    }
    Ok(out)
}

/// Scores every stride-aligned window at every pyramid scale and returns
/// the detections scoring at least `spec.score_min`, after NMS when
/// configured, sorted by [`sort_detections`].
pub fn detect(img: &Image, model: &Model, spec: &PyramidSpec) -> Result<Vec<Detection>> {
    spec.validate()?;
    img.validate()?;
    if spec.stride_px % model.bank.stride_px() != 0 {
        return Err(Error::invalid(format!(
            "detection stride {} is not a multiple of the bank stride {}",
            spec.stride_px,
            model.bank.stride_px()
        )));
    }
    // only planes read by some split are computed
    let mut mask = vec![false; model.bank.num_planes()];
    for (f, _) in model.forest.trees().iter().flat_map(|t| t.splits()) {
        mask[model.bank.plane_offset(f.channel as usize) + f.filter as usize] = true;
    }
    let scales = spec.scales(&model.geometry, img.width(), img.height());
    let per_scale: Vec<Vec<Detection>> = scales
        .par_iter()
        .map(|&s| detect_scale(img, model, spec, s, &mask))
        .collect::<Result<_>>()?;
    let mut dets: Vec<Detection> = per_scale.into_iter().flatten().collect();
    sort_detections(&mut dets);
    Ok(match spec.nms_overlap {
        Some(t) => nms(&dets, t),
        None => dets,
    })
}

/// Greedy suppression: walking detections by descending score, a box is
/// dropped when its min-area overlap with an already kept box exceeds
/// `overlap_max`. The input order decides among equal scores.
pub fn nms(dets: &[Detection], overlap_max: f64) -> Vec<Detection> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score));
    let mut kept: Vec<Detection> = Vec::new();
    for i in order {
        let d = dets[i];
        if kept.iter().all(|k| k.bbox.overlap_min(&d.bbox) <= overlap_max) {
            kept.push(d);
        }
    }
    kept
}

/// Detections keyed by image id.
pub type DetectionSet = BTreeMap<String, Vec<Detection>>;

/// One line per detection: `image_id x y w h score`, 6 significant digits.
pub fn write_detections(set: &DetectionSet, header: &[String]) -> String {
    let mut out = String::new();
    for h in header {
        writeln!(out, "# {h}").unwrap();
    }
    for (id, dets) in set {
        for d in dets {
            let b = &d.bbox;
            let f = |x: f64| format_sig(x, DETECTION_DIGITS);
            writeln!(out, "{id} {} {} {} {} {}", f(b.x), f(b.y), f(b.w), f(b.h), f(d.score)).unwrap();
        }
    }
    out
}

pub fn save_detections(set: &DetectionSet, path: &Path, header: &[String]) -> Result<()> {
    std::fs::write(path, write_detections(set, header))?;
    Ok(())
}

pub fn parse_detections(text: &str, source: &str) -> Result<DetectionSet> {
    let mut set = DetectionSet::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = t.split_whitespace().collect();
        if fields.len() != 6 {
            return Err(Error::parse(source, i + 1, "expected 'image_id x y w h score'"));
        }
        let mut v = [0.0f64; 5];
        for (k, s) in fields[1..].iter().enumerate() {
            v[k] = s
                .parse()
                .ok()
                .filter(|x: &f64| x.is_finite())
                .ok_or_else(|| Error::parse(source, i + 1, format!("bad number '{s}'")))?;
        }
        let bbox = BoundingBox::new(v[0], v[1], v[2], v[3]);
        if !bbox.is_valid() {
            return Err(Error::parse(source, i + 1, "box must have positive size"));
        }
        set.entry(fields[0].to_string()).or_default().push(Detection {
            bbox,
            score: v[4],
            scale: 1.0,
        });
    }
    for dets in set.values_mut() {
        sort_detections(dets);
    }
    Ok(set)
}

pub fn load_detections(path: &Path) -> Result<DetectionSet> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    parse_detections(&std::fs::read_to_string(path)?, &path.display().to_string())
}
