//! HOG+LUV feature channels.
//!
//! A [`ChannelStack`] holds ten planes at input resolution:
//!
//! | index | content |
//! |-------|---------|
//! | 0–2   | CIE L\*, u\*, v\* (D65), each rescaled to `[0, 1]` |
//! | 3     | gradient magnitude |
//! | 4–9   | magnitude soft-binned into orientations `k·30°`, `k = 0..5` |
//!
//! Input RGB values are sRGB-encoded and linearized before the XYZ
//! transform; decoding goes through a 4096-segment piecewise-linear table
//! (absolute error below 1e-7, exact at segment ends). The LUV rescaling
//! constants are fixed:
//!
//! * `L = L* / 100`
//! * `U = (u* + 88) / 270`
//! * `V = (v* + 140) / 250`
//!
//! which maps the whole sRGB gamut into `[0, 1]`.
//!
//! Gradients use the `[-1, 0, 1]` stencil with replicated borders and no
//! normalization or clamping of any kind. For multi-plane inputs the
//! gradient of the plane with the largest magnitude is kept per pixel.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Image, Plane};

pub const NUM_CHANNELS: usize = 10;
pub const NUM_ORIENTATIONS: usize = 6;

pub const U_OFFSET: f64 = 88.0;
pub const U_RANGE: f64 = 270.0;
pub const V_OFFSET: f64 = 140.0;
pub const V_RANGE: f64 = 250.0;


#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Smoothing {
    #[default]
    Off,
    /// Separable `[1, 2, 1] / 4` triangle filter (radius 1).
    Triangle1,
}

impl std::fmt::Display for Smoothing {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Smoothing::Off => "off",
            Smoothing::Triangle1 => "triangle1",
        })
    }
}

impl std::str::FromStr for Smoothing {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "off" => Ok(Smoothing::Off),
            "triangle1" => Ok(Smoothing::Triangle1),
            _ => Err(Error::invalid(format!("unknown smoothing '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelOptions {
    pub pre_smooth: Smoothing,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelStack {
    width: usize,
    height: usize,
    planes: Vec<Plane>,
}

impl ChannelStack {
    pub fn from_planes(planes: Vec<Plane>) -> Result<Self> {
        if planes.len() != NUM_CHANNELS {
            return Err(Error::invalid(format!(
                "channel stack needs {NUM_CHANNELS} planes, got {}",
                planes.len()
            )));
        }
        let (width, height) = (planes[0].width, planes[0].height);
        if planes.iter().any(|p| p.width != width || p.height != height) {
            return Err(Error::invalid("channel planes differ in size"));
        }
        Ok(ChannelStack {
            width,
            height,
            planes,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn planes(&self) -> &[Plane] {
        &self.planes
    }

    pub fn plane(&self, channel: usize) -> &Plane {
        &self.planes[channel]
    }
}

fn srgb_to_linear_exact(c: f64) -> f64 {
    if c <= 0.040_45 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

const DECODE_SEGMENTS: usize = 4096;

fn srgb_to_linear(c: f64) -> f64 {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    let t = TABLE.get_or_init(|| {
        (0..=DECODE_SEGMENTS)
            .map(|i| srgb_to_linear_exact(i as f64 / DECODE_SEGMENTS as f64))
            .collect()
    });
    let pos = c.clamp(0.0, 1.0) * DECODE_SEGMENTS as f64;
    let i = (pos as usize).min(DECODE_SEGMENTS - 1);
    let a = pos - i as f64;
    if a == 0.0 {
        t[i]
    } else {
        t[i] + a * (t[i + 1] - t[i])
    }
}

/// Linear sRGB to CIE XYZ (D65).
fn linear_to_xyz(r: f64, g: f64, b: f64) -> [f64; 3] {
    [
        0.412_456_4 * r + 0.357_576_1 * g + 0.180_437_5 * b,
        0.212_672_9 * r + 0.715_152_2 * g + 0.072_175_0 * b,
        0.019_333_9 * r + 0.119_192_0 * g + 0.950_304_1 * b,
    ]
}

/// Scaled LUV triple of one sRGB pixel.
pub fn luv_pixel(r: f64, g: f64, b: f64) -> [f64; 3] {
    let [x, y, z] = linear_to_xyz(srgb_to_linear(r), srgb_to_linear(g), srgb_to_linear(b));
    // reference white is the image of sRGB white, so white maps to L* = 100 exactly
    let [white_x, white_y, white_z] = linear_to_xyz(1.0, 1.0, 1.0);

    let yr = y / white_y;
    let eps = (6.0_f64 / 29.0).powi(3);
    let l = if yr > eps {
        116.0 * yr.cbrt() - 16.0
    } else {
        (29.0_f64 / 3.0).powi(3) * yr
    };

    let dn = white_x + 15.0 * white_y + 3.0 * white_z;
    let (un, vn) = (4.0 * white_x / dn, 9.0 * white_y / dn);
    let d = x + 15.0 * y + 3.0 * z;
    let (u, v) = if d > 0.0 {
        (13.0 * l * (4.0 * x / d - un), 13.0 * l * (9.0 * y / d - vn))
    } else {
        (0.0, 0.0)
    };
    [l / 100.0, (u + U_OFFSET) / U_RANGE, (v + V_OFFSET) / V_RANGE]
}

/// Converts to three scaled LUV planes. Grayscale input is treated as
/// `R = G = B`.
pub fn rgb_to_luv(img: &Image) -> Result<Image> {
    img.validate()?;
    let rgb = img.to_rgb();
    let [r, g, b] = [&rgb.planes()[0], &rgb.planes()[1], &rgb.planes()[2]];
    let (w, h) = (img.width(), img.height());
    let mut out = [Plane::new(w, h), Plane::new(w, h), Plane::new(w, h)];
    for i in 0..w * h {
        let luv = luv_pixel(f64::from(r.data[i]), f64::from(g.data[i]), f64::from(b.data[i]));
        for c in 0..3 {
            out[c].data[i] = luv[c] as f32;
        }
    }
    let [l, u, v] = out;
    Image::rgb(l, u, v)
}

/// Gradient magnitude followed by the six orientation planes.
pub fn gradient_channels(img: &Image) -> Result<[Plane; 1 + NUM_ORIENTATIONS]> {
    img.validate()?;
    let (w, h) = (img.width(), img.height());
    let mut mag = Plane::new(w, h);
    let mut bins: [Plane; NUM_ORIENTATIONS] = std::array::from_fn(|_| Plane::new(w, h));
    let bin_width = std::f64::consts::PI / NUM_ORIENTATIONS as f64;

    for y in 0..h {
        let (up, down) = (y.saturating_sub(1), (y + 1).min(h - 1));
        for x in 0..w {
            let (left, right) = (x.saturating_sub(1), (x + 1).min(w - 1));
            let (mut best_dx, mut best_dy, mut best_m2) = (0.0f64, 0.0f64, -1.0f64);
            for p in img.planes() {
                let row = &p.data[y * w..(y + 1) * w];
                let dx = f64::from(row[right]) - f64::from(row[left]);
                let dy = f64::from(p.data[down * w + x]) - f64::from(p.data[up * w + x]);
                let m2 = dx * dx + dy * dy;
                if m2 > best_m2 {
                    (best_dx, best_dy, best_m2) = (dx, dy, m2);
                }
            }
            let m = best_m2.sqrt();
            mag.data[y * w + x] = m as f32;
            if m == 0.0 {
                continue;
            }
            let (lo, hi, frac) = orientation_split(best_dx, best_dy, bin_width);
            let m_hi = (m * frac) as f32;
            let m_lo = m as f32 - m_hi;
            bins[lo].data[y * w + x] += m_lo;
            bins[hi].data[y * w + x] += m_hi;
        }
    }
    let [b0, b1, b2, b3, b4, b5] = bins;
    Ok([mag, b0, b1, b2, b3, b4, b5])
}

/// Lower bin, upper bin (wrapping) and the upper bin's share for gradient
/// `(dx, dy)`; orientation is taken modulo 180°.
fn orientation_split(dx: f64, dy: f64, bin_width: f64) -> (usize, usize, f64) {
    let pi = std::f64::consts::PI;
    let mut theta = dy.atan2(dx);
    if theta < 0.0 {
        theta += pi;
    }
    if theta >= pi {
        theta -= pi;
    }
    let pos = theta / bin_width;
    let lo = (pos.floor() as usize).min(NUM_ORIENTATIONS - 1);
    let frac = (pos - lo as f64).clamp(0.0, 1.0);
    (lo, (lo + 1) % NUM_ORIENTATIONS, frac)
}

/// Radius-1 triangle smoothing, `[1, 2, 1] / 4` along each axis.
pub fn smooth_triangle(img: &Image) -> Image {
    let planes = img
        .planes()
        .iter()
        .map(|p| {
            let (w, h) = (p.width, p.height);
            let mut tmp = Plane::new(w, h);
            for y in 0..h {
                for x in 0..w {
                    let xi = x as isize;
                    let v = 0.25 * p.get_clamped(xi - 1, y as isize)
                        + 0.5 * p.get(x, y)
                        + 0.25 * p.get_clamped(xi + 1, y as isize);
                    tmp.set(x, y, v);
                }
            }
            let mut out = Plane::new(w, h);
            for y in 0..h {
                for x in 0..w {
                    let yi = y as isize;
                    let v = 0.25 * tmp.get_clamped(x as isize, yi - 1)
                        + 0.5 * tmp.get(x, y)
                        + 0.25 * tmp.get_clamped(x as isize, yi + 1);
                    out.set(x, y, v);
                }
            }
            out
        })
        .collect();
    Image::new(planes).expect("same shape as input")
}

/// LUV planes followed by the gradient planes, computed on the LUV image.
pub fn compute_channels(img: &Image, opts: &ChannelOptions) -> Result<ChannelStack> {
    if img.width() < 3 || img.height() < 3 {
        return Err(Error::invalid(format!(
            "image {}x{} is too small for channel computation (min 3x3)",
            img.width(),
            img.height()
        )));
    }
    img.validate()?;
    let smoothed;
    let src = match opts.pre_smooth {
        Smoothing::Off => img,
        Smoothing::Triangle1 => {
            smoothed = smooth_triangle(img);
            &smoothed
        }
    };
    let luv = rgb_to_luv(src)?;
    let grad = gradient_channels(&luv)?;
    let mut planes: Vec<Plane> = luv.planes().to_vec();
    planes.extend(grad);
    ChannelStack::from_planes(planes)
}
