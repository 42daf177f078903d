//! Synthetic pedestrian-like corpus.
//!
//! Each image is a smooth two-colour gradient with low-frequency texture
//! and random clutter (boxes, discs, poles, leg-like bar pairs). Targets
//! are upright figures: a disc head, a rounded-rectangle torso in a
//! colour-biased shirt palette and two dark legs. Some targets get a
//! bottom occluder whose covered height fraction is the annotation's
//! occlusion. Uniform noise is added last and values are rounded to 8-bit
//! levels so a saved corpus reloads identically.

use std::sync::Arc;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Corpus, CorpusEntry, ImageSource, Split};
use crate::error::{Error, Result};
use crate::eval::Annotation;
use crate::geometry::BoundingBox;
use crate::image::{Image, Plane};
use crate::rng::{stream, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub width: usize,
    pub height: usize,
    pub n_images: usize,
    pub split: Split,
    pub targets_min: usize,
    pub targets_max: usize,
    /// Target height range in pixels.
    pub height_min: f64,
    pub height_max: f64,
    /// Target width / height.
    pub aspect: f64,
    pub occlusion_prob: f64,
    pub distractors_min: usize,
    pub distractors_max: usize,
    /// Half-width of the additive uniform noise.
    pub noise: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            width: 320,
            height: 240,
            n_images: 300,
            split: Split::Train,
            targets_min: 1,
            targets_max: 3,
            height_min: 80.0,
            height_max: 150.0,
            aspect: 0.4,
            occlusion_prob: 0.2,
            distractors_min: 3,
            distractors_max: 8,
            noise: 0.06,
        }
    }
}

/// Seed of the reference corpora.
pub const REFERENCE_SEED: u64 = 42;

impl SynthSpec {
    /// Reference corpus: 300 training or 100 test images of 320×240 with
    /// 1–3 targets 80–150 px tall.
    pub fn reference(split: Split) -> Self {
        SynthSpec {
            n_images: if split == Split::Train { 300 } else { 100 },
            split,
            ..SynthSpec::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.width >= 8
            && self.height >= 8
            && self.targets_min <= self.targets_max
            && self.distractors_min <= self.distractors_max
            && self.height_min > 0.0
            && self.height_min <= self.height_max
            && self.height_max <= self.height as f64
            && self.aspect > 0.0
            && self.aspect * self.height_max <= self.width as f64
            && (0.0..=1.0).contains(&self.occlusion_prob)
            && self.noise >= 0.0;
        if !ok {
            return Err(Error::invalid(format!("inconsistent synthetic spec {self:?}")));
        }
        Ok(())
    }
}

type Rgb = [f32; 3];

struct Canvas {
    w: usize,
    h: usize,
    px: Vec<Rgb>,
}

impl Canvas {
    /// Paints pixels whose centres satisfy `inside`, within the bounds.
    fn paint(&mut self, x0: f64, y0: f64, x1: f64, y1: f64, color: Rgb, inside: impl Fn(f64, f64) -> bool) {
        let cx0 = (x0 - 0.5).ceil().max(0.0) as usize;
        let cy0 = (y0 - 0.5).ceil().max(0.0) as usize;
        let cx1 = ((x1 - 0.5).floor() as i64).min(self.w as i64 - 1);
        let cy1 = ((y1 - 0.5).floor() as i64).min(self.h as i64 - 1);
        if cx1 < 0 || cy1 < 0 {
            return;
        }
        for y in cy0..=cy1 as usize {
            for x in cx0..=cx1 as usize {
                if inside(x as f64 + 0.5, y as f64 + 0.5) {
                    self.px[y * self.w + x] = color;
                }
            }
        }
    }

    fn rect(&mut self, x0: f64, y0: f64, x1: f64, y1: f64, color: Rgb) {
        self.paint(x0, y0, x1, y1, color, |_, _| true);
    }

    fn disc(&mut self, cx: f64, cy: f64, r: f64, color: Rgb) {
        self.paint(cx - r, cy - r, cx + r, cy + r, color, |x, y| (x - cx).powi(2) + (y - cy).powi(2) <= r * r);
    }

    fn rounded_rect(&mut self, x0: f64, y0: f64, x1: f64, y1: f64, r: f64, color: Rgb) {
        self.paint(x0, y0, x1, y1, color, |x, y| {
            let dx = (x0 + r - x).max(x - (x1 - r)).max(0.0);
            let dy = (y0 + r - y).max(y - (y1 - r)).max(0.0);
            dx * dx + dy * dy <= r * r
        });
    }

    fn into_image(self, noise: f64, rng: &mut Rng) -> Image {
        let mut planes: Vec<Plane> = (0..3).map(|_| Plane::new(self.w, self.h)).collect();
        for (i, c) in self.px.iter().enumerate() {
            for (k, p) in planes.iter_mut().enumerate() {
                let n = if noise > 0.0 { rng.random_range(-noise..noise) as f32 } else { 0.0 };
                p.data[i] = ((c[k] + n).clamp(0.0, 1.0) * 255.0).round() / 255.0;
            }
        }
        Image::new(planes).expect("three equal planes")
    }
}

fn random_color(rng: &mut Rng) -> Rgb {
    [rng.random(), rng.random(), rng.random()]
}

fn jitter(rng: &mut Rng, c: Rgb, amount: f32) -> Rgb {
    c.map(|v| (v + rng.random_range(-amount..amount)).clamp(0.0, 1.0))
}

fn background(spec: &SynthSpec, rng: &mut Rng) -> Canvas {
    let (w, h) = (spec.width, spec.height);
    let (top, bottom) = (random_color(rng), random_color(rng));
    let waves: Vec<(f64, f64, f64, f32)> = (0..2)
        .map(|_| {
            (
                rng.random_range(0.01..0.06),
                rng.random_range(0.01..0.06),
                rng.random_range(0.0..std::f64::consts::TAU),
                rng.random_range(0.02..0.08),
            )
        })
        .collect();
    let mut px = Vec::with_capacity(w * h);
    for y in 0..h {
        let t = y as f32 / (h - 1) as f32;
        for x in 0..w {
            let tex: f32 = waves
                .iter()
                .map(|&(fx, fy, ph, a)| a * ((fx * x as f64 + fy * y as f64 + ph).sin() as f32))
                .sum();
            px.push([0, 1, 2].map(|k| top[k] * (1.0 - t) + bottom[k] * t + tex));
        }
    }
    let mut canvas = Canvas { w, h, px };
    let n = rng.random_range(spec.distractors_min..=spec.distractors_max);
    let (wf, hf) = (w as f64, h as f64);
    for _ in 0..n {
        let color = random_color(rng);
        let (x, y) = (rng.random_range(0.0..wf), rng.random_range(0.0..hf));
        match rng.random_range(0..4) {
            0 => {
                let (bw, bh) = (rng.random_range(10.0..80.0), rng.random_range(10.0..80.0));
                canvas.rect(x, y, x + bw, y + bh, color);
            }
            1 => canvas.disc(x, y, rng.random_range(5.0..30.0), color),
            2 => {
                let (bw, bh) = (rng.random_range(6.0..25.0), rng.random_range(40.0..150.0));
                canvas.rect(x, y, x + bw, y + bh, color);
            }
            _ => {
                let (lw, lh) = (rng.random_range(5.0..15.0), rng.random_range(30.0..70.0));
                let gap = rng.random_range(2.0..10.0);
                canvas.rect(x, y, x + lw, y + lh, color);
                canvas.rect(x + lw + gap, y, x + 2.0 * lw + gap, y + lh, color);
            }
        }
    }
    canvas
}

const SHIRTS: [Rgb; 6] = [
    [0.8, 0.15, 0.15],
    [0.15, 0.3, 0.8],
    [0.15, 0.6, 0.2],
    [0.9, 0.8, 0.2],
    [0.92, 0.92, 0.9],
    [0.12, 0.12, 0.14],
];

fn draw_target(c: &mut Canvas, b: &BoundingBox, rng: &mut Rng) {
    let (x, y, w, h) = (b.x, b.y, b.w, b.h);
    let skin = [
        rng.random_range(0.55..0.9),
        rng.random_range(0.4..0.7),
        rng.random_range(0.3..0.55),
    ];
    let base = SHIRTS[rng.random_range(0..SHIRTS.len())];
    let shirt = jitter(rng, base, 0.12);
    let g = rng.random_range(0.05..0.35);
    let blue = g + rng.random_range(0.0..0.25);
    let legs = jitter(rng, [g, g, blue], 0.05);
    let gap = rng.random_range(0.04..0.12) * w;
    let leg_w = rng.random_range(0.26..0.34) * w;
    let mid = x + w / 2.0;
    c.rect(mid - gap / 2.0 - leg_w, y + 0.55 * h, mid - gap / 2.0, y + h, legs);
    c.rect(mid + gap / 2.0, y + 0.55 * h, mid + gap / 2.0 + leg_w, y + h, legs);
    c.rounded_rect(x + 0.08 * w, y + 0.19 * h, x + 0.92 * w, y + 0.6 * h, 0.18 * w, shirt);
    c.disc(mid, y + 0.1 * h, 0.09 * h, skin);
}

/// The target-free part of image `index`, before noise.
pub fn render_background(spec: &SynthSpec, seed: u64, index: usize) -> Image {
    let mut rng = stream(seed, &format!("synth-background-{}", spec.split), index as u64);
    let canvas = background(spec, &mut rng);
    let mut noise_rng = stream(seed, "unused", 0);
    canvas.into_image(0.0, &mut noise_rng)
}

fn render(spec: &SynthSpec, seed: u64, index: usize) -> (Image, Vec<Annotation>) {
    let mut rng = stream(seed, &format!("synth-background-{}", spec.split), index as u64);
    let mut canvas = background(spec, &mut rng);
    let mut rng = stream(seed, &format!("synth-targets-{}", spec.split), index as u64);
    let wanted = rng.random_range(spec.targets_min..=spec.targets_max);
    let mut annos: Vec<Annotation> = Vec::new();
    for _ in 0..wanted {
        let mut placed = None;
        for _ in 0..100 {
            let h = rng.random_range(spec.height_min..=spec.height_max);
            let w = spec.aspect * h;
            let x = rng.random_range(0.0..=spec.width as f64 - w);
            let y = rng.random_range(0.0..=spec.height as f64 - h);
            let b = BoundingBox::new(x, y, w, h);
            if annos.iter().all(|a| a.bbox.intersection(&b) == 0.0) {
                placed = Some(b);
                break;
            }
        }
        let Some(b) = placed else {
            log::debug!("image {index}: placed {} of {wanted} targets", annos.len());
            break;
        };
        draw_target(&mut canvas, &b, &mut rng);
        let mut occlusion = 0.0;
        if rng.random_bool(spec.occlusion_prob) {
            let f = rng.random_range(0.1..0.7);
            let color = random_color(&mut rng);
            canvas.rect(b.x - 0.1 * b.w, b.bottom() - f * b.h, b.right() + 0.1 * b.w, b.bottom(), color);
            occlusion = f;
        }
        annos.push(Annotation {
            bbox: b,
            occlusion,
            ignore: false,
        });
    }
    let mut noise_rng = stream(seed, &format!("synth-noise-{}", spec.split), index as u64);
    (canvas.into_image(spec.noise, &mut noise_rng), annos)
}

/// Renders `spec.n_images` images with exact annotations.
pub fn make_synthetic(spec: &SynthSpec, seed: u64) -> Result<Corpus> {
    spec.validate()?;
    let entries = (0..spec.n_images)
        .into_par_iter()
        .map(|i| {
            let (img, annotations) = render(spec, seed, i);
            CorpusEntry {
                id: format!("{}-{i:04}", spec.split),
                source: ImageSource::Memory(Arc::new(img)),
                width: spec.width,
                height: spec.height,
                annotations,
            }
        })
        .collect();
    Ok(Corpus {
        id: format!("synth-{}-{seed}", spec.split),
        split: spec.split,
        entries,
    })
}
