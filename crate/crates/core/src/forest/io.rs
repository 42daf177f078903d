//! Model files.
//!
//! ```text
//! fcdet-model 1
//! # <provenance comments>
//! variant discrete
//! window 60 120
//! object 0.5 1
//! pre_smooth off
//! bank <line count>
//! <embedded bank file>
//! cascade none
//! trees <count>
//! tree <weight>
//! split <channel> <filter> <cell_x> <cell_y> <threshold>
//! leaf <value>
//! ...
//! ```
//!
//! Tree nodes are listed in pre-order. Reals carry 12 significant digits,
//! which reproduces the in-memory model exactly.

use std::fmt::Write as _;
use std::path::Path;

use super::{BoostedForest, Model, Node, Tree, Variant};
use crate::channels::{ChannelOptions, Smoothing};
use crate::error::{Error, Result};
use crate::featuremap::FeatureIndex;
use crate::filterbank::{parse_bank, write_bank};
use crate::geometry::WindowGeometry;
use crate::numfmt::{format_sig, MODEL_DIGITS};

const MAGIC: &str = "fcdet-model";
const VERSION: u32 = 1;

fn real(x: f64) -> String {
    format_sig(x, MODEL_DIGITS)
}

fn write_tree(out: &mut String, tree: &Tree) {
    for n in tree.nodes() {
        match *n {
            Node::Split { feature: f, threshold, .. } => writeln!(
                out,
                "split {} {} {} {} {}",
                f.channel,
                f.filter,
                f.cell_x,
                f.cell_y,
                real(f64::from(threshold))
            ),
            Node::Leaf { value } => writeln!(out, "leaf {}", real(value)),
        }
        .unwrap();
    }
}

/// Serializes `model`; `header` lines become `#` comments.
pub fn write_model(model: &Model, header: &[String]) -> String {
    let mut out = String::new();
    let g = &model.geometry;
    let f = &model.forest;
    writeln!(out, "{MAGIC} {VERSION}").unwrap();
    for h in header {
        writeln!(out, "# {h}").unwrap();
    }
    writeln!(out, "variant {}", f.variant()).unwrap();
    writeln!(out, "window {} {}", g.window_w, g.window_h).unwrap();
    writeln!(out, "object {} {}", g.object_w_frac, g.object_h_frac).unwrap();
    writeln!(out, "pre_smooth {}", model.channels.pre_smooth).unwrap();
    let bank = write_bank(&model.bank, &[]);
    writeln!(out, "bank {}", bank.lines().count()).unwrap();
    out.push_str(&bank);
    match f.cascade() {
        None => writeln!(out, "cascade none").unwrap(),
        Some(c) => {
            let vals: Vec<String> = c.iter().map(|&v| real(v)).collect();
            writeln!(out, "cascade {}", vals.join(" ")).unwrap();
        }
    }
    writeln!(out, "trees {}", f.len()).unwrap();
    for (t, w) in f.trees().iter().zip(f.weights()) {
        writeln!(out, "tree {}", real(*w)).unwrap();
        write_tree(&mut out, t);
    }
    out
}

pub fn save_model(model: &Model, path: &Path, header: &[String]) -> Result<()> {
    std::fs::write(path, write_model(model, header))?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<Model> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    parse_model(&std::fs::read_to_string(path)?, &path.display().to_string())
}

struct Lines<'a> {
    lines: Vec<(usize, &'a str)>,
    pos: usize,
    source: &'a str,
}

impl<'a> Lines<'a> {
    fn err(&self, line: usize, msg: impl Into<String>) -> Error {
        Error::parse(self.source, line, msg)
    }

    fn next(&mut self) -> Result<(usize, &'a str)> {
        let l = self
            .lines
            .get(self.pos)
            .copied()
            .ok_or_else(|| self.err(self.lines.last().map_or(1, |l| l.0), "unexpected end of file"))?;
        self.pos += 1;
        Ok(l)
    }

    /// Next line split into fields, requiring `key` as the first one.
    fn keyed(&mut self, key: &str) -> Result<(usize, Vec<&'a str>)> {
        let (n, l) = self.next()?;
        let mut it = l.split_whitespace();
        if it.next() != Some(key) {
            return Err(self.err(n, format!("expected '{key}'")));
        }
        Ok((n, it.collect()))
    }

    fn num<T: std::str::FromStr>(&self, line: usize, s: &str, what: &str) -> Result<T> {
        s.parse().map_err(|_| self.err(line, format!("bad {what} '{s}'")))
    }

    fn node(&mut self, nodes: &mut Vec<Node>, depth: usize) -> Result<()> {
        if depth > 64 {
            return Err(self.err(self.lines[self.pos.saturating_sub(1)].0, "tree too deep"));
        }
        let (n, l) = self.next()?;
        let fields: Vec<&str> = l.split_whitespace().collect();
        match fields.as_slice() {
            ["leaf", v] => {
                nodes.push(Node::Leaf {
                    value: self.num(n, v, "leaf value")?,
                });
                Ok(())
            }
            ["split", c, f, x, y, t] => {
                let feature = FeatureIndex {
                    channel: self.num(n, c, "channel")?,
                    filter: self.num(n, f, "filter")?,
                    cell_x: self.num(n, x, "cell_x")?,
                    cell_y: self.num(n, y, "cell_y")?,
                };
                let threshold = self.num::<f64>(n, t, "threshold")? as f32;
                let at = nodes.len();
                nodes.push(Node::Split {
                    feature,
                    threshold,
                    left: at + 1,
                    right: 0,
                });
                self.node(nodes, depth + 1)?;
                let r = nodes.len();
                if let Node::Split { right, .. } = &mut nodes[at] {
                    *right = r;
                }
                self.node(nodes, depth + 1)
            }
            _ => Err(self.err(n, "expected 'split' or 'leaf'")),
        }
    }
}

pub fn parse_model(text: &str, source: &str) -> Result<Model> {
    let raw: Vec<(usize, &str)> = text.lines().enumerate().map(|(i, l)| (i + 1, l)).collect();
    let first = raw.first().map(|l| l.1.trim()).unwrap_or("");
    if first != format!("{MAGIC} {VERSION}") {
        return Err(Error::parse(source, 1, format!("expected '{MAGIC} {VERSION}'")));
    }
    let mut lines = Lines {
        lines: raw[1..]
            .iter()
            .copied()
            .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
            .collect(),
        pos: 0,
        source,
    };

    let (n, v) = lines.keyed("variant")?;
    let variant: Variant = v.first().ok_or_else(|| lines.err(n, "missing variant"))?.parse().map_err(|e: Error| lines.err(n, e.to_string()))?;
    let (n, v) = lines.keyed("window")?;
    if v.len() != 2 {
        return Err(lines.err(n, "expected 'window <w> <h>'"));
    }
    let (ww, wh): (usize, usize) = (lines.num(n, v[0], "window width")?, lines.num(n, v[1], "window height")?);
    let (n, v) = lines.keyed("object")?;
    if v.len() != 2 {
        return Err(lines.err(n, "expected 'object <w_frac> <h_frac>'"));
    }
    let geometry = WindowGeometry {
        window_w: ww,
        window_h: wh,
        object_w_frac: lines.num(n, v[0], "object width fraction")?,
        object_h_frac: lines.num(n, v[1], "object height fraction")?,
    };
    let (n, v) = lines.keyed("pre_smooth")?;
    let pre_smooth: Smoothing = v.first().ok_or_else(|| lines.err(n, "missing smoothing"))?.parse().map_err(|e: Error| lines.err(n, e.to_string()))?;

    // the embedded bank is located in the raw text so its own comments and
    // line structure are preserved
    let (n, v) = lines.keyed("bank")?;
    let count: usize = lines.num(n, v.first().copied().unwrap_or(""), "bank line count")?;
    if n + count > raw.len() {
        return Err(lines.err(n, "embedded bank is truncated"));
    }
    let bank_text: String = raw[n..n + count].iter().map(|l| format!("{}\n", l.1)).collect();
    let bank = parse_bank(&bank_text, &format!("{source} (bank at line {})", n + 1))?;
    while lines.pos < lines.lines.len() && lines.lines[lines.pos].0 <= n + count {
        lines.pos += 1;
    }

    let (n, v) = lines.keyed("cascade")?;
    let cascade = match v.as_slice() {
        ["none"] => None,
        vals => Some(vals.iter().map(|s| lines.num::<f64>(n, s, "cascade value")).collect::<Result<Vec<_>>>()?),
    };
    let (n, v) = lines.keyed("trees")?;
    let count: usize = lines.num(n, v.first().copied().unwrap_or(""), "tree count")?;
    let mut trees = Vec::with_capacity(count);
    let mut weights = Vec::with_capacity(count);
    for _ in 0..count {
        let (n, v) = lines.keyed("tree")?;
        weights.push(lines.num::<f64>(n, v.first().copied().unwrap_or(""), "tree weight")?);
        let mut nodes = Vec::new();
        lines.node(&mut nodes, 0)?;
        trees.push(Tree::new(nodes).map_err(|e| lines.err(n, e.to_string()))?);
    }
    if lines.pos != lines.lines.len() {
        return Err(lines.err(lines.lines[lines.pos].0, "trailing content"));
    }
    let mut forest = BoostedForest::new(variant, (ww, wh), trees, weights).map_err(|e| lines.err(1, e.to_string()))?;
    forest.set_cascade(cascade).map_err(|e| lines.err(1, e.to_string()))?;
    Model::new(bank, ChannelOptions { pre_smooth }, geometry, forest).map_err(|e| Error::parse(source, 1, e.to_string()))
}
