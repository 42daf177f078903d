//! Plain-text corpus manifests.
//!
//! ```text
//! fcdet-manifest 1
//! id caltech-test
//! split test
//! image set06_v000_f0029 images/set06_v000_f0029.png
//! 412 160 21.5 53 0 0
//! 380 158 17 40 0.4 1
//! image set06_v000_f0059 images/set06_v000_f0059.png
//! ```
//!
//! Each `image <id> <path>` line is followed by its annotations, one per
//! line as `x y w h occlusion ignore`. Paths are relative to the manifest.
//! Dataset-specific occlusion levels map onto the fraction at conversion
//! time (KITTI levels 0/1/2/3 as 0/0.5/0.8/1).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{Corpus, CorpusEntry, ImageSource};
use crate::error::{Error, Result};
use crate::eval::Annotation;
use crate::geometry::BoundingBox;

const MAGIC: &str = "fcdet-manifest";
const VERSION: u32 = 1;

/// Serializes `corpus`; file paths are written relative to `base` when
/// possible. In-memory images must be saved first (see [`save_corpus`]).
pub fn write_manifest(corpus: &Corpus, base: &Path, header: &[String]) -> Result<String> {
    let mut out = String::new();
    writeln!(out, "{MAGIC} {VERSION}").unwrap();
    for h in header {
        writeln!(out, "# {h}").unwrap();
    }
    writeln!(out, "id {}", corpus.id).unwrap();
    writeln!(out, "split {}", corpus.split).unwrap();
    for e in &corpus.entries {
        let ImageSource::File(p) = &e.source else {
            return Err(Error::invalid(format!("image {} is only held in memory", e.id)));
        };
        let rel = p.strip_prefix(base).unwrap_or(p);
        writeln!(out, "image {} {}", e.id, rel.display()).unwrap();
        for a in &e.annotations {
            let b = &a.bbox;
            writeln!(out, "{} {} {} {} {} {}", b.x, b.y, b.w, b.h, a.occlusion, u8::from(a.ignore)).unwrap();
        }
    }
    Ok(out)
}

/// Writes in-memory images as PNG files under `images/` next to the
/// manifest, then the manifest itself. Returns the corpus as it will load
/// back.
pub fn save_corpus(corpus: &Corpus, manifest: &Path, header: &[String]) -> Result<Corpus> {
    let base = manifest.parent().unwrap_or(Path::new("")).to_path_buf();
    let mut saved = corpus.clone();
    for e in &mut saved.entries {
        if let ImageSource::Memory(img) = &e.source {
            let dir = base.join("images");
            std::fs::create_dir_all(&dir)?;
            let path = dir.join(format!("{}.png", e.id));
            img.save(&path)?;
            e.source = ImageSource::File(path);
        }
    }
    std::fs::write(manifest, write_manifest(&saved, &base, header)?)?;
    Ok(saved)
}

/// Loads a manifest, keeping every `subsample`-th image.
pub fn load_corpus(path: &Path, subsample: usize) -> Result<Corpus> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let base = path.parent().unwrap_or(Path::new("")).to_path_buf();
    parse_manifest(&std::fs::read_to_string(path)?, &base, &path.display().to_string(), subsample)
}

pub fn parse_manifest(text: &str, base: &Path, source: &str, subsample: usize) -> Result<Corpus> {
    if subsample == 0 {
        return Err(Error::invalid("subsample factor must be at least 1"));
    }
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    match lines.next() {
        Some((_, l)) if l == format!("{MAGIC} {VERSION}") => {}
        _ => return Err(Error::parse(source, 1, format!("expected '{MAGIC} {VERSION}'"))),
    }
    let mut corpus = Corpus::new("", Default::default());
    // image index within the manifest, to apply subsampling before any IO
    let mut seen = 0usize;
    let mut keep = false;
    for (n, l) in lines {
        let fields: Vec<&str> = l.split_whitespace().collect();
        match fields.as_slice() {
            ["id", id] => corpus.id = id.to_string(),
            ["split", s] => corpus.split = s.parse().map_err(|e: Error| Error::parse(source, n, e.to_string()))?,
            ["image", id, rel] => {
                keep = seen % subsample == 0;
                seen += 1;
                if !keep {
                    continue;
                }
                let p: PathBuf = base.join(rel);
                if !p.exists() {
                    return Err(Error::parse(source, n, format!("image file {} not found", p.display())));
                }
                let (w, h) = image::image_dimensions(&p).map_err(|e| Error::parse(source, n, e.to_string()))?;
                corpus.entries.push(CorpusEntry {
                    id: id.to_string(),
                    source: ImageSource::File(p),
                    width: w as usize,
                    height: h as usize,
                    annotations: Vec::new(),
                });
            }
            [x, y, w, h, occ, ign] => {
                if seen == 0 {
                    return Err(Error::parse(source, n, "annotation before any image line"));
                }
                if !keep {
                    continue;
                }
                let num = |s: &str| -> Result<f64> {
                    s.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| Error::parse(source, n, format!("bad number '{s}'")))
                };
                let entry = corpus.entries.last_mut().expect("kept image exists");
                let occlusion = num(occ)?;
                if !(0.0..=1.0).contains(&occlusion) {
                    return Err(Error::parse(source, n, "occlusion must lie in [0, 1]"));
                }
                let ignore = match *ign {
                    "0" => false,
                    "1" => true,
                    _ => return Err(Error::parse(source, n, "ignore flag must be 0 or 1")),
                };
                let b = BoundingBox::new(num(x)?, num(y)?, num(w)?, num(h)?);
                let bbox = clamp_box(&b, entry.width as f64, entry.height as f64)
                    .ok_or_else(|| Error::parse(source, n, "annotation lies outside the image"))?;
                entry.annotations.push(Annotation { bbox, occlusion, ignore });
            }
            _ => return Err(Error::parse(source, n, "unrecognized line")),
        }
    }
    Ok(corpus)
}

fn clamp_box(b: &BoundingBox, w: f64, h: f64) -> Option<BoundingBox> {
    if !(b.w > 0.0 && b.h > 0.0) {
        return None;
    }
    if b.x >= 0.0 && b.y >= 0.0 && b.right() <= w && b.bottom() <= h {
        return Some(*b);
    }
    let (x0, y0) = (b.x.max(0.0), b.y.max(0.0));
    let (x1, y1) = (b.right().min(w), b.bottom().min(h));
    (x1 > x0 && y1 > y0).then(|| BoundingBox::new(x0, y0, x1 - x0, y1 - y0))
}
