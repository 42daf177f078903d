//! Planar float images and the bilinear resampler used by the pyramid and
//! the window samplers.

use std::path::Path;

use crate::error::{Error, Result};

/// One real-valued plane, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl Plane {
    pub fn new(width: usize, height: usize) -> Self {
        Plane {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        Plane {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Plane {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        self.data[y * self.width + x] = v;
    }

    /// Pixel read with replicated borders.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f32 {
        let xc = x.clamp(0, self.width as isize - 1) as usize;
        let yc = y.clamp(0, self.height as isize - 1) as usize;
        self.get(xc, yc)
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| f64::from(v)).sum::<f64>() / self.data.len().max(1) as f64
    }
}

/// An RGB (3 planes) or grayscale (1 plane) image with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    planes: Vec<Plane>,
}

impl Image {
    pub fn new(planes: Vec<Plane>) -> Result<Self> {
        if planes.len() != 1 && planes.len() != 3 {
            return Err(Error::invalid(format!(
                "image must have 1 or 3 planes, got {}",
                planes.len()
            )));
        }
        let (width, height) = (planes[0].width, planes[0].height);
        if width == 0 || height == 0 {
            return Err(Error::invalid("image has a zero dimension"));
        }
        if planes.iter().any(|p| p.width != width || p.height != height) {
            return Err(Error::invalid("image planes differ in size"));
        }
        Ok(Image {
            width,
            height,
            planes,
        })
    }

    pub fn rgb(r: Plane, g: Plane, b: Plane) -> Result<Self> {
        Self::new(vec![r, g, b])
    }

    pub fn gray(p: Plane) -> Result<Self> {
        Self::new(vec![p])
    }

    /// A constant-colour RGB image.
    pub fn uniform(width: usize, height: usize, rgb: [f32; 3]) -> Result<Self> {
        Self::new(rgb.iter().map(|&c| Plane::filled(width, height, c)).collect())
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

    pub fn planes_mut(&mut self) -> &mut [Plane] {
        &mut self.planes
    }

    pub fn is_rgb(&self) -> bool {
        self.planes.len() == 3
    }

    /// Rejects non-finite pixels.
    pub fn validate(&self) -> Result<()> {
        for (i, p) in self.planes.iter().enumerate() {
            if let Some(pos) = p.data.iter().position(|v| !v.is_finite()) {
                return Err(Error::invalid(format!(
                    "non-finite pixel in plane {i} at ({}, {})",
                    pos % p.width,
                    pos / p.width
                )));
            }
        }
        Ok(())
    }

    /// Three planes; grayscale images are replicated.
    pub fn to_rgb(&self) -> Image {
        if self.is_rgb() {
            return self.clone();
        }
        let p = self.planes[0].clone();
        Image {
            width: self.width,
            height: self.height,
            planes: vec![p.clone(), p.clone(), p],
        }
    }

    /// Decodes an 8-bit PNG or PPM/PGM file into `[0, 1]` reals.
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let dynimg = image::open(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
        let (w, h) = (dynimg.width() as usize, dynimg.height() as usize);
        if dynimg.color().has_color() {
            let buf = dynimg.to_rgb8();
            let mut planes = vec![Plane::new(w, h), Plane::new(w, h), Plane::new(w, h)];
            for (i, px) in buf.pixels().enumerate() {
                for c in 0..3 {
                    planes[c].data[i] = f32::from(px.0[c]) / 255.0;
                }
            }
            Image::new(planes)
        } else {
            let buf = dynimg.to_luma8();
            let data = buf.pixels().map(|p| f32::from(p.0[0]) / 255.0).collect();
            Image::gray(Plane {
                width: w,
                height: h,
                data,
            })
        }
    }

    /// Encodes as 8-bit; the format follows the file extension (png, ppm, pgm).
    pub fn save(&self, path: &Path) -> Result<()> {
        let to_u8 = |v: f32| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        let (w, h) = (self.width as u32, self.height as u32);
        let res = if self.is_rgb() {
            let mut raw = Vec::with_capacity(self.width * self.height * 3);
            for i in 0..self.width * self.height {
                for p in &self.planes {
                    raw.push(to_u8(p.data[i]));
                }
            }
            image::RgbImage::from_raw(w, h, raw)
                .expect("buffer size matches")
                .save(path)
        } else {
            let raw = self.planes[0].data.iter().map(|&v| to_u8(v)).collect();
            image::GrayImage::from_raw(w, h, raw)
                .expect("buffer size matches")
                .save(path)
        };
        res.map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Bilinear resize to exactly `width × height` (pixel-centre aligned,
    /// replicated borders).
    pub fn resize(&self, width: usize, height: usize) -> Image {
        let region = Region {
            x: 0.0,
            y: 0.0,
            w: self.width as f64,
            h: self.height as f64,
        };
        self.resample(&region, width, height, false, BorderMode::Replicate)
    }

    /// Resamples the source rectangle `region` into a `width × height` image.
    ///
    /// Output pixel `(u, v)` takes its value at source position
    /// `region.x + (u + 0.5) * region.w / width - 0.5` (same for y), so a
    /// full-image region reproduces [`Image::resize`]. With `mirror` the
    /// output is flipped horizontally. Out-of-image positions are handled
    /// by `border`.
    pub fn resample(
        &self,
        region: &Region,
        width: usize,
        height: usize,
        mirror: bool,
        border: BorderMode,
    ) -> Image {
        let fx = region.w / width as f64;
        let fy = region.h / height as f64;
        let xs: Vec<f64> = (0..width)
            .map(|u| {
                let u = if mirror { width - 1 - u } else { u };
                border.map(region.x + (u as f64 + 0.5) * fx - 0.5, self.width)
            })
            .collect();
        let ys: Vec<f64> = (0..height)
            .map(|v| border.map(region.y + (v as f64 + 0.5) * fy - 0.5, self.height))
            .collect();
        let planes = self
            .planes
            .iter()
            .map(|p| {
                let mut out = Plane::new(width, height);
                for (v, &sy) in ys.iter().enumerate() {
                    for (u, &sx) in xs.iter().enumerate() {
                        out.data[v * width + u] = bilinear(p, sx, sy);
                    }
                }
                out
            })
            .collect();
        Image {
            width,
            height,
            planes,
        }
    }
}

/// A real-valued source rectangle for [`Image::resample`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Region {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BorderMode {
    Replicate,
    /// Mirror about the outermost pixel centres.
    Reflect,
}

impl BorderMode {
    fn map(self, mut x: f64, n: usize) -> f64 {
        let max = (n - 1) as f64;
        match self {
            BorderMode::Replicate => x.clamp(0.0, max),
            BorderMode::Reflect => {
                if max == 0.0 {
                    return 0.0;
                }
                // repeated reflection handles offsets larger than the image
                let period = 2.0 * max;
                x = x.rem_euclid(period);
                if x > max {
                    x = period - x;
                }
                x
            }
        }
    }
}

/// Bilinear sample at a position already inside `[0, w-1] × [0, h-1]`.
#[inline]
fn bilinear(p: &Plane, x: f64, y: f64) -> f32 {
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(p.width - 1);
    let y1 = (y0 + 1).min(p.height - 1);
    let ax = x - x0 as f64;
    let ay = y - y0 as f64;
    let top = f64::from(p.get(x0, y0)) * (1.0 - ax) + f64::from(p.get(x1, y0)) * ax;
    let bot = f64::from(p.get(x0, y1)) * (1.0 - ax) + f64::from(p.get(x1, y1)) * ax;
    (top * (1.0 - ay) + bot * ay) as f32
}
