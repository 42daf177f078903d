//! Line-oriented bank files.
//!
//! ```text
//! fcdet-bank 1
//! family checkerboards
//! cell_px 6
//! stride_px 6
//! per_channel false
//! filter u1x1 1 1
//! 1
//! filter h1x2k1 1 2
//! 1 -1
//! ```
//!
//! Per-channel banks start each channel's list with a `channel <c>` line.
//! Each filter is a header `filter <id> <rows> <cols>` followed by `rows`
//! lines of `cols` weights. Blank lines and lines starting with `#` are
//! ignored.

use std::fmt::Write as _;
use std::path::Path;

use super::{Family, Filter, FilterBank, FilterLists};
use crate::channels::NUM_CHANNELS;
use crate::error::{Error, Result};
use crate::numfmt::{format_sig, BANK_DIGITS};

const MAGIC: &str = "fcdet-bank";
const VERSION: u32 = 1;

fn write_filter(out: &mut String, f: &Filter) {
    writeln!(out, "filter {} {} {}", f.id(), f.rows(), f.cols()).unwrap();
    for r in 0..f.rows() {
        let row: Vec<String> = (0..f.cols())
            .map(|c| format_sig(f.weight(r, c), BANK_DIGITS))
            .collect();
        writeln!(out, "{}", row.join(" ")).unwrap();
    }
}

/// Serializes `bank`; `header` lines are written as `#` comments.
pub fn write_bank(bank: &FilterBank, header: &[String]) -> String {
    let mut out = String::new();
    writeln!(out, "{MAGIC} {VERSION}").unwrap();
    for h in header {
        writeln!(out, "# {h}").unwrap();
    }
    writeln!(out, "family {}", bank.family()).unwrap();
    writeln!(out, "cell_px {}", bank.cell_px()).unwrap();
    writeln!(out, "stride_px {}", bank.stride_px()).unwrap();
    writeln!(out, "per_channel {}", bank.is_per_channel()).unwrap();
    match bank.lists() {
        FilterLists::Shared(list) => list.iter().for_each(|f| write_filter(&mut out, f)),
        FilterLists::PerChannel(lists) => {
            for (c, list) in lists.iter().enumerate() {
                writeln!(out, "channel {c}").unwrap();
                list.iter().for_each(|f| write_filter(&mut out, f));
            }
        }
    }
    out
}

pub fn save_bank(bank: &FilterBank, path: &Path, header: &[String]) -> Result<()> {
    std::fs::write(path, write_bank(bank, header))?;
    Ok(())
}

pub fn load_bank(path: &Path) -> Result<FilterBank> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path)?;
    parse_bank(&text, &path.display().to_string())
}

struct Lines<'a> {
    inner: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
    source: &'a str,
    last: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str, source: &'a str) -> Self {
        Lines {
            inner: text.lines().enumerate().peekable(),
            source,
            last: 0,
        }
    }

    fn skip_blank(&mut self) {
        while let Some((_, l)) = self.inner.peek() {
            let t = l.trim();
            if t.is_empty() || t.starts_with('#') {
                self.inner.next();
            } else {
                break;
            }
        }
    }

    fn next(&mut self) -> Option<(usize, &'a str)> {
        self.skip_blank();
        let (i, l) = self.inner.next()?;
        self.last = i + 1;
        Some((i + 1, l.trim()))
    }

    fn peek_word(&mut self) -> Option<&'a str> {
        self.skip_blank();
        self.inner.peek().and_then(|(_, l)| l.split_whitespace().next())
    }

    fn err(&self, line: usize, msg: impl Into<String>) -> Error {
        Error::parse(self.source, line, msg)
    }

    fn expect_eof(&self) -> Error {
        self.err(self.last + 1, "unexpected end of file")
    }

    fn keyword(&mut self, key: &str) -> Result<(usize, &'a str)> {
        let (n, l) = self.next().ok_or_else(|| self.expect_eof())?;
        let mut it = l.splitn(2, char::is_whitespace);
        if it.next() != Some(key) {
            return Err(self.err(n, format!("expected `{key}`")));
        }
        Ok((n, it.next().unwrap_or("").trim()))
    }
}

fn parse_usize(lines: &Lines<'_>, n: usize, s: &str, what: &str) -> Result<usize> {
    s.parse()
        .map_err(|_| lines.err(n, format!("invalid {what} {s:?}")))
}

fn parse_filter(lines: &mut Lines<'_>) -> Result<Filter> {
    let (n, rest) = lines.keyword("filter")?;
    let parts: Vec<&str> = rest.split_whitespace().collect();
    if parts.len() != 3 {
        return Err(lines.err(n, "expected `filter <id> <rows> <cols>`"));
    }
    let id = parts[0];
    let rows = parse_usize(lines, n, parts[1], "row count")?;
    let cols = parse_usize(lines, n, parts[2], "column count")?;
    if rows == 0 || cols == 0 {
        return Err(lines.err(n, format!("filter {id}: size {rows}x{cols} has a zero dimension")));
    }
    let mut weights = Vec::with_capacity(rows * cols);
    for _ in 0..rows {
        let (ln, l) = lines.next().ok_or_else(|| lines.expect_eof())?;
        let row: Vec<f64> = l
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| lines.err(ln, format!("filter {id}: malformed weight row")))?;
        if row.len() != cols {
            return Err(lines.err(
                ln,
                format!("filter {id}: expected {cols} weights, found {}", row.len()),
            ));
        }
        weights.extend(row);
    }
    Filter::new(id, rows, cols, weights).map_err(|e| lines.err(n, e.to_string()))
}

/// Parses bank text; `source` names the input in error messages.
pub fn parse_bank(text: &str, source: &str) -> Result<FilterBank> {
    let mut lines = Lines::new(text, source);
    let (n, magic) = lines.next().ok_or_else(|| lines.expect_eof())?;
    if magic != format!("{MAGIC} {VERSION}") {
        return Err(lines.err(n, format!("expected `{MAGIC} {VERSION}` header")));
    }
    let (n, fam) = lines.keyword("family")?;
    let family: Family = fam.parse().map_err(|e: Error| lines.err(n, e.to_string()))?;
    let (n, cell) = lines.keyword("cell_px")?;
    let cell_px = parse_usize(&lines, n, cell, "cell_px")?;
    let (n, stride) = lines.keyword("stride_px")?;
    let stride_px = parse_usize(&lines, n, stride, "stride_px")?;
    let (n, pc) = lines.keyword("per_channel")?;
    let per_channel = match pc {
        "true" => true,
        "false" => false,
        _ => return Err(lines.err(n, "per_channel must be true or false")),
    };

    let filters = if per_channel {
        let mut lists = Vec::with_capacity(NUM_CHANNELS);
        while lines.peek_word().is_some() {
            let (n, c) = lines.keyword("channel")?;
            let c = parse_usize(&lines, n, c, "channel")?;
            if c != lists.len() {
                return Err(lines.err(n, format!("expected channel {}", lists.len())));
            }
            let mut list = Vec::new();
            while lines.peek_word() == Some("filter") {
                list.push(parse_filter(&mut lines)?);
            }
            lists.push(list);
        }
        FilterLists::PerChannel(lists)
    } else {
        let mut list = Vec::new();
        while lines.peek_word().is_some() {
            list.push(parse_filter(&mut lines)?);
        }
        FilterLists::Shared(list)
    };
    let last = lines.last;
    FilterBank::new(family, cell_px, stride_px, filters).map_err(|e| Error::parse(source, last, e.to_string()))
}
