//! Detection evaluation: greedy matching, log-average miss rate over
//! FPPI, interpolated average precision, and curve export.

use std::fmt;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::detector::Detection;
use crate::error::{Error, Result};
use crate::geometry::BoundingBox;

/// Ground-truth box. Ignore boxes are regions where detections are
/// neither rewarded nor penalized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Annotation {
    pub bbox: BoundingBox,
    /// Occluded fraction of the object, in `[0, 1]`.
    pub occlusion: f64,
    pub ignore: bool,
}

impl Annotation {
    pub fn new(bbox: BoundingBox) -> Self {
        Annotation {
            bbox,
            occlusion: 0.0,
            ignore: false,
        }
    }

    pub fn height(&self) -> f64 {
        self.bbox.h
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchKind {
    TruePositive,
    FalsePositive,
    /// Matched an ignore region; excluded from the sweep.
    Ignored,
}

/// Matching outcome for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageMatch {
    /// Detections in descending score order.
    pub scores: Vec<f64>,
    pub kinds: Vec<MatchKind>,
    /// Annotation matched by each detection.
    pub det_to_anno: Vec<Option<usize>>,
    /// Detection (index into `scores`) matched by each annotation.
    pub anno_to_det: Vec<Option<usize>>,
    /// Number of non-ignore annotations.
    pub n_positive: usize,
}

/// Greedy matching. Detections are visited by descending score (stable
/// for ties). Each takes the unmatched non-ignore annotation with the
/// highest IoU `>= iou_min` (lowest index on ties); failing that, it is
/// ignored if it covers an ignore region by at least `iou_min` of its own
/// area, and is a false positive otherwise.
pub fn match_image(dets: &[Detection], annos: &[Annotation], iou_min: f64) -> ImageMatch {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score));
    let mut m = ImageMatch {
        scores: Vec::with_capacity(dets.len()),
        kinds: Vec::with_capacity(dets.len()),
        det_to_anno: Vec::with_capacity(dets.len()),
        anno_to_det: vec![None; annos.len()],
        n_positive: annos.iter().filter(|a| !a.ignore).count(),
    };
    for (k, &i) in order.iter().enumerate() {
        let d = &dets[i];
        let mut best: Option<(usize, f64)> = None;
        for (j, a) in annos.iter().enumerate() {
            if a.ignore || m.anno_to_det[j].is_some() {
                continue;
            }
            let iou = d.bbox.iou(&a.bbox);
            if iou >= iou_min && best.is_none_or(|(_, b)| iou > b) {
                best = Some((j, iou));
            }
        }
        m.scores.push(d.score);
        match best {
            Some((j, _)) => {
                m.anno_to_det[j] = Some(k);
                m.det_to_anno.push(Some(j));
                m.kinds.push(MatchKind::TruePositive);
            }
            None => {
                let hit = annos
                    .iter()
                    .position(|a| a.ignore && d.bbox.overlap_self(&a.bbox) >= iou_min);
                m.det_to_anno.push(hit);
                m.kinds.push(if hit.is_some() {
                    MatchKind::Ignored
                } else {
                    MatchKind::FalsePositive
                });
            }
        }
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    #[default]
    CaltechMr,
    KittiAp,
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Protocol::CaltechMr => "caltech-mr",
            Protocol::KittiAp => "kitti-ap",
        })
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "caltech-mr" => Ok(Protocol::CaltechMr),
            "kitti-ap" => Ok(Protocol::KittiAp),
            _ => Err(Error::invalid(format!("unknown protocol '{s}'"))),
        }
    }
}

/// Sampled curve: `(fppi, miss_rate)` for Caltech, `(recall, precision)`
/// for KITTI, plus its scalar summary.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalCurve {
    pub protocol: Protocol,
    pub points: Vec<(f64, f64)>,
    pub summary: f64,
    /// Recall sample count for AP summaries.
    pub recall_points: usize,
}

impl EvalCurve {
    /// `"<protocol> <value>"`, the machine-readable summary line.
    pub fn summary_line(&self) -> String {
        format!("{} {:?}", self.protocol, self.summary)
    }
}

/// FPPI reference points `10^p`, `p = -2, -1.75, ..., 0`.
pub fn mr_reference_fppi() -> [f64; 9] {
    let mut r = [0.0; 9];
    for (k, v) in r.iter_mut().enumerate() {
        *v = match k {
            0 => 0.01,
            4 => 0.1,
            8 => 1.0,
            _ => 10f64.powf(-2.0 + 0.25 * k as f64),
        };
    }
    r
}

const MR_FLOOR: f64 = 1e-10;

/// Non-ignored detections of all images as `(score, is_tp)`, by
/// descending score.
fn sweep_input(results: &[ImageMatch]) -> (Vec<(f64, bool)>, usize) {
    let mut all: Vec<(f64, bool)> = results
        .iter()
        .flat_map(|m| {
            m.scores
                .iter()
                .zip(&m.kinds)
                .filter(|(_, k)| **k != MatchKind::Ignored)
                .map(|(&s, k)| (s, *k == MatchKind::TruePositive))
        })
        .collect();
    all.sort_by(|a, b| b.0.total_cmp(&a.0));
    (all, results.iter().map(|m| m.n_positive).sum())
}

/// Cumulative `(tp, fp)` after each group of equal scores.
fn sweep_counts(sorted: &[(f64, bool)]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let (mut tp, mut fp) = (0, 0);
    for (i, &(s, t)) in sorted.iter().enumerate() {
        if t {
            tp += 1;
        } else {
            fp += 1;
        }
        if sorted.get(i + 1).is_none_or(|n| n.0 != s) {
            out.push((tp, fp));
        }
    }
    out
}

/// Log-average miss rate from `(fppi, miss_rate)` samples.
pub fn mr_summary(points: &[(f64, f64)]) -> f64 {
    let mrs: Vec<f64> = mr_reference_fppi()
        .iter()
        .map(|&r| {
            points
                .iter()
                .filter(|p| p.0 <= r)
                .map(|p| p.1)
                .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.min(v))))
                .unwrap_or(1.0)
        })
        .collect();
    if mrs.iter().all(|&m| m == 0.0) {
        return 0.0;
    }
    (mrs.iter().map(|m| m.max(MR_FLOOR).ln()).sum::<f64>() / mrs.len() as f64).exp()
}

/// Mean interpolated precision from `(recall, precision)` samples.
pub fn ap_summary(points: &[(f64, f64)], recall_points: usize) -> f64 {
    let n = recall_points;
    (0..n)
        .map(|i| {
            let r = i as f64 / (n - 1) as f64;
            points.iter().filter(|p| p.0 >= r).map(|p| p.1).fold(0.0, f64::max)
        })
        .sum::<f64>()
        / n as f64
}

/// Miss rate against FPPI over all score thresholds, summarized by the
/// log-average over the nine reference FPPI values.
pub fn log_avg_miss_rate(results: &[ImageMatch]) -> Result<EvalCurve> {
    let (sorted, n_gt) = sweep_input(results);
    if n_gt == 0 {
        return Err(Error::Eval("no non-ignored annotations to evaluate against".into()));
    }
    let n_img = results.len() as f64;
    let mut points = vec![(0.0, 1.0)];
    points.extend(
        sweep_counts(&sorted)
            .into_iter()
            .map(|(tp, fp)| (fp as f64 / n_img, 1.0 - tp as f64 / n_gt as f64)),
    );
    let summary = mr_summary(&points);
    Ok(EvalCurve {
        protocol: Protocol::CaltechMr,
        points,
        summary,
        recall_points: 0,
    })
}

/// Precision against recall over all score thresholds, summarized by the
/// mean interpolated precision at `recall_points` equally spaced recalls
/// in `[0, 1]`.
pub fn average_precision(results: &[ImageMatch], recall_points: usize) -> Result<EvalCurve> {
    if recall_points < 2 {
        return Err(Error::Eval("at least two recall points are needed".into()));
    }
    let (sorted, n_gt) = sweep_input(results);
    if n_gt == 0 {
        return Err(Error::Eval("no non-ignored annotations to evaluate against".into()));
    }
    let points: Vec<(f64, f64)> = sweep_counts(&sorted)
        .into_iter()
        .map(|(tp, fp)| (tp as f64 / n_gt as f64, tp as f64 / (tp + fp) as f64))
        .collect();
    let summary = ap_summary(&points, recall_points);
    Ok(EvalCurve {
        protocol: Protocol::KittiAp,
        points,
        summary,
        recall_points,
    })
}

/// Annotation filter; anything outside it becomes an ignore region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Subset {
    pub min_height: f64,
    pub max_occlusion: f64,
}

impl Subset {
    /// Caltech "reasonable": at least 50 px tall, at most 35 % occluded.
    pub fn reasonable() -> Self {
        Subset {
            min_height: 50.0,
            max_occlusion: 0.35,
        }
    }

    /// KITTI "moderate": at least 25 px tall, at most partly occluded.
    pub fn moderate() -> Self {
        Subset {
            min_height: 25.0,
            max_occlusion: 0.5,
        }
    }

    /// Everything counts.
    pub fn all() -> Self {
        Subset {
            min_height: 0.0,
            max_occlusion: 1.0,
        }
    }
}

/// Marks annotations outside `subset` as ignore regions. Existing ignore
/// flags are kept.
pub fn apply_subset(annos: &[Annotation], subset: &Subset) -> Vec<Annotation> {
    annos
        .iter()
        .map(|a| Annotation {
            ignore: a.ignore || a.height() < subset.min_height || a.occlusion > subset.max_occlusion,
            ..*a
        })
        .collect()
}

fn csv_header(p: Protocol) -> &'static str {
    match p {
        Protocol::CaltechMr => "fppi,miss_rate",
        Protocol::KittiAp => "recall,precision",
    }
}

/// Header line plus one `x,y` line per point.
pub fn curve_to_csv(curve: &EvalCurve) -> String {
    let mut out = String::new();
    writeln!(out, "{}", csv_header(curve.protocol)).unwrap();
    for (x, y) in &curve.points {
        writeln!(out, "{x},{y}").unwrap();
    }
    out
}

/// Parses [`curve_to_csv`] output; the summary is recomputed from the
/// points (`recall_points` applies to AP curves).
pub fn parse_curve_csv(text: &str, source: &str, recall_points: usize) -> Result<EvalCurve> {
    let mut lines = text.lines().enumerate();
    let header = lines.next().map(|(_, l)| l.trim()).unwrap_or("");
    let protocol = [Protocol::CaltechMr, Protocol::KittiAp]
        .into_iter()
        .find(|&p| csv_header(p) == header)
        .ok_or_else(|| Error::parse(source, 1, "unknown curve header"))?;
    let mut points = Vec::new();
    for (i, l) in lines {
        if l.trim().is_empty() {
            continue;
        }
        let (a, b) = l
            .split_once(',')
            .ok_or_else(|| Error::parse(source, i + 1, "expected 'x,y'"))?;
        let num = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::parse(source, i + 1, format!("bad number '{s}'")))
        };
        points.push((num(a)?, num(b)?));
    }
    let (summary, recall_points) = match protocol {
        Protocol::CaltechMr => (mr_summary(&points), 0),
        Protocol::KittiAp => (ap_summary(&points, recall_points), recall_points),
    };
    Ok(EvalCurve {
        protocol,
        points,
        summary,
        recall_points,
    })
}

/// Plot of the curve: miss rate over log-scaled FPPI, or precision over
/// recall, with the summary in the legend.
pub fn curve_to_svg(curve: &EvalCurve, label: &str) -> String {
    const W: f64 = 480.0;
    const H: f64 = 360.0;
    const L: f64 = 60.0;
    const R: f64 = 20.0;
    const T: f64 = 20.0;
    const B: f64 = 50.0;
    let (pw, ph) = (W - L - R, H - T - B);
    let (fx, x_label, y_label): (Box<dyn Fn(f64) -> f64>, &str, &str) = match curve.protocol {
        Protocol::CaltechMr => (
            Box::new(|x: f64| (x.max(1e-3).log10() + 3.0) / 4.0),
            "false positives per image",
            "miss rate",
        ),
        Protocol::KittiAp => (Box::new(|x: f64| x), "recall", "precision"),
    };
    let px = |x: f64| L + fx(x).clamp(0.0, 1.0) * pw;
    let py = |y: f64| T + (1.0 - y.clamp(0.0, 1.0)) * ph;

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    )
    .unwrap();
    writeln!(s, r#"<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>"#).unwrap();
    writeln!(
        s,
        r#"<rect x="{L}" y="{T}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    )
    .unwrap();
    let ticks: Vec<(f64, String)> = match curve.protocol {
        Protocol::CaltechMr => (-3..=1).map(|p| (10f64.powi(p), format!("1e{p}"))).collect(),
        Protocol::KittiAp => (0..=4).map(|k| (k as f64 / 4.0, format!("{}", k as f64 / 4.0))).collect(),
    };
    for (v, t) in &ticks {
        writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="middle">{t}</text>"#,
            px(*v),
            T + ph + 16.0
        )
        .unwrap();
    }
    for k in 0..=4 {
        let v = k as f64 / 4.0;
        writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="end">{v}</text>"#,
            L - 6.0,
            py(v) + 4.0
        )
        .unwrap();
    }
    writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle">{x_label}</text>"#,
        L + pw / 2.0,
        H - 10.0
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="14" y="{:.1}" font-size="12" text-anchor="middle" transform="rotate(-90 14 {:.1})">{y_label}</text>"#,
        T + ph / 2.0,
        T + ph / 2.0
    )
    .unwrap();
    // step curve
    let mut path = String::new();
    for (i, &(x, y)) in curve.points.iter().enumerate() {
        if i == 0 {
            write!(path, "M{:.2},{:.2}", px(x), py(y)).unwrap();
        } else {
            let prev_y = curve.points[i - 1].1;
            write!(path, " L{:.2},{:.2} L{:.2},{:.2}", px(x), py(prev_y), px(x), py(y)).unwrap();
        }
    }
    if !path.is_empty() {
        writeln!(s, r##"<path d="{path}" fill="none" stroke="#c0392b" stroke-width="2"/>"##).unwrap();
    }
    let legend = format!("{} {}", xml_escape(label), curve.summary_line());
    writeln!(
        s,
        r##"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="end" fill="#c0392b">{legend}</text>"##,
        L + pw - 8.0,
        T + 18.0
    )
    .unwrap();
    s.push_str("</svg>\n");
    s
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveFormat {
    Csv,
    Svg,
}

pub fn export_curve(curve: &EvalCurve, path: &Path, format: CurveFormat, label: &str) -> Result<()> {
    let text = match format {
        CurveFormat::Csv => curve_to_csv(curve),
        CurveFormat::Svg => curve_to_svg(curve, label),
    };
    std::fs::write(path, text)?;
    Ok(())
}
