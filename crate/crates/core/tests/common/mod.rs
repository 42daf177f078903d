//! Independent reference implementations used as test oracles. Nothing
//! here calls into the library's algorithms; they only share data types.

#![allow(dead_code)]

use fcdet_core::detector::Detection;
use fcdet_core::eval::Annotation;
use fcdet_core::geometry::BoundingBox;
use fcdet_core::image::Plane;

/// Eigenpairs of a symmetric matrix by cyclic Jacobi rotations, sorted by
/// descending eigenvalue. Columns of the returned vectors are unit norm.
pub fn jacobi_eigen(a: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| m[i][j] * m[i][j]).sum();
        let diag: f64 = (0..n).map(|i| m[i][i] * m[i][i]).sum();
        if off <= 1e-30 * diag.max(1e-300) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[j][j].total_cmp(&m[i][i]));
    let values = order.iter().map(|&i| m[i][i]).collect();
    let vectors = order.iter().map(|&i| (0..n).map(|k| v[k][i]).collect()).collect();
    (values, vectors)
}

/// Sample covariance `XᵀX / n` of mean-centred rows.
pub fn covariance(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = rows.len() as f64;
    let d = rows[0].len();
    let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    let mut c = vec![vec![0.0; d]; d];
    for r in rows {
        for i in 0..d {
            let a = r[i] - mean[i];
            for j in 0..d {
                c[i][j] += a * (r[j] - mean[j]);
            }
        }
    }
    for row in &mut c {
        for v in row.iter_mut() {
            *v /= n;
        }
    }
    c
}

/// Correlation of a pixel-expanded filter with `plane` at pixel offset
/// `(x, y)`, summed pixel by pixel.
pub fn convolve_at(plane: &Plane, weights: &[f64], rows: usize, cols: usize, cell: usize, x: usize, y: usize) -> f64 {
    let mut s = 0.0;
    for py in 0..rows * cell {
        for px in 0..cols * cell {
            s += weights[(py / cell) * cols + px / cell] * f64::from(plane.get(x + px, y + py));
        }
    }
    s
}

/// Number of `stride`-aligned offsets at which a `sw × sh` support fits
/// inside `w × h`, by enumeration.
pub fn count_placements(w: usize, h: usize, sw: usize, sh: usize, stride: usize) -> usize {
    let mut n = 0;
    for y in (0..h).step_by(stride) {
        for x in (0..w).step_by(stride) {
            if x + sw <= w && y + sh <= h {
                n += 1;
            }
        }
    }
    n
}

/// Bin upper edges of a feature: `lo + (b + 1)(hi − lo) / 256` rounded
/// to `f32`.
pub fn bin_edges(values: &[f32]) -> Vec<f32> {
    let lo = values.iter().copied().fold(f32::INFINITY, f32::min) as f64;
    let hi = values.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    (0..256).map(|b| (lo + (b as f64 + 1.0) * (hi - lo) / 256.0) as f32).collect()
}

/// Exhaustive discrete stump search over raw values: every feature, every
/// bin edge as threshold `x < t` goes left, both sides non-empty. Returns
/// `(error, feature, threshold)` of the first minimum in `(feature, bin)`
/// order.
pub fn brute_force_stump(rows: &[Vec<f32>], labels: &[bool], w: &[f64]) -> Option<(f64, usize, f32)> {
    let nf = rows[0].len();
    let mut best: Option<(f64, usize, f32)> = None;
    for f in 0..nf {
        let col: Vec<f32> = rows.iter().map(|r| r[f]).collect();
        if col.iter().all(|&v| v == col[0]) {
            continue;
        }
        for t in bin_edges(&col) {
            let (mut lp, mut ln, mut rp, mut rn) = (0.0, 0.0, 0.0, 0.0);
            let (mut nl, mut nr) = (0, 0);
            for i in 0..rows.len() {
                let (p, n) = if labels[i] { (w[i], 0.0) } else { (0.0, w[i]) };
                if col[i] < t {
                    lp += p;
                    ln += n;
                    nl += 1;
                } else {
                    rp += p;
                    rn += n;
                    nr += 1;
                }
            }
            if nl == 0 || nr == 0 {
                continue;
            }
            let err = f64::min(lp, ln) + f64::min(rp, rn);
            if best.is_none_or(|b| err < b.0) {
                best = Some((err, f, t));
            }
        }
    }
    best
}

fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let iw = (a.x + a.w).min(b.x + b.w) - a.x.max(b.x);
    let ih = (a.y + a.h).min(b.y + b.h) - a.y.max(b.y);
    if iw <= 0.0 || ih <= 0.0 {
        return 0.0;
    }
    let inter = iw * ih;
    inter / (a.w * a.h + b.w * b.h - inter)
}

fn overlap_min(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let iw = (a.x + a.w).min(b.x + b.w) - a.x.max(b.x);
    let ih = (a.y + a.h).min(b.y + b.h) - a.y.max(b.y);
    if iw <= 0.0 || ih <= 0.0 {
        return 0.0;
    }
    iw * ih / (a.w * a.h).min(b.w * b.h)
}

fn overlap_self(a: &BoundingBox, region: &BoundingBox) -> f64 {
    let iw = (a.x + a.w).min(region.x + region.w) - a.x.max(region.x);
    let ih = (a.y + a.h).min(region.y + region.h) - a.y.max(region.y);
    if iw <= 0.0 || ih <= 0.0 {
        return 0.0;
    }
    iw * ih / (a.w * a.h)
}

/// Suppression-style NMS: repeatedly take the best remaining detection
/// (first in input order among equal scores) and delete everything it
/// overlaps by more than `overlap_max`.
pub fn reference_nms(dets: &[Detection], overlap_max: f64) -> Vec<Detection> {
    let mut alive: Vec<bool> = vec![true; dets.len()];
    let mut out = Vec::new();
    loop {
        let mut best: Option<usize> = None;
        for i in 0..dets.len() {
            if alive[i] && best.is_none_or(|b| dets[i].score > dets[b].score) {
                best = Some(i);
            }
        }
        let Some(b) = best else { break };
        alive[b] = false;
        out.push(dets[b]);
        for i in 0..dets.len() {
            if alive[i] && overlap_min(&dets[b].bbox, &dets[i].bbox) > overlap_max {
                alive[i] = false;
            }
        }
    }
    out
}

/// `(tp, fp)` of one image when only detections scoring at least `t`
/// are kept, by a fresh greedy matching.
fn counts_at(dets: &[Detection], annos: &[Annotation], t: f64, iou_min: f64) -> (usize, usize) {
    let mut kept: Vec<&Detection> = dets.iter().filter(|d| d.score >= t).collect();
    kept.sort_by(|a, b| b.score.total_cmp(&a.score));
    let mut taken = vec![false; annos.len()];
    let (mut tp, mut fp) = (0, 0);
    for d in kept {
        let mut best: Option<(usize, f64)> = None;
        for (j, a) in annos.iter().enumerate() {
            if a.ignore || taken[j] {
                continue;
            }
            let o = iou(&d.bbox, &a.bbox);
            if o >= iou_min && best.is_none_or(|b| o > b.1) {
                best = Some((j, o));
            }
        }
        if let Some((j, _)) = best {
            taken[j] = true;
            tp += 1;
        } else if !annos.iter().any(|a| a.ignore && overlap_self(&d.bbox, &a.bbox) >= iou_min) {
            fp += 1;
        }
    }
    (tp, fp)
}

/// Distinct thresholds, descending.
fn thresholds(images: &[(Vec<Detection>, Vec<Annotation>)]) -> Vec<f64> {
    let mut t: Vec<f64> = images.iter().flat_map(|(d, _)| d.iter().map(|d| d.score)).collect();
    t.sort_by(|a, b| b.total_cmp(a));
    t.dedup();
    t
}

fn totals(images: &[(Vec<Detection>, Vec<Annotation>)], t: f64, iou_min: f64) -> (usize, usize) {
    images.iter().fold((0, 0), |(tp, fp), (d, a)| {
        let (x, y) = counts_at(d, a, t, iou_min);
        (tp + x, fp + y)
    })
}

/// Log-average miss rate by re-matching at every threshold.
pub fn brute_force_mr(images: &[(Vec<Detection>, Vec<Annotation>)], iou_min: f64) -> f64 {
    let n_gt: usize = images.iter().map(|(_, a)| a.iter().filter(|a| !a.ignore).count()).sum();
    let n_img = images.len() as f64;
    let mut pts = vec![(0.0, 1.0)];
    for t in thresholds(images) {
        let (tp, fp) = totals(images, t, iou_min);
        pts.push((fp as f64 / n_img, 1.0 - tp as f64 / n_gt as f64));
    }
    let refs = [
        0.01,
        10f64.powf(-1.75),
        10f64.powf(-1.5),
        10f64.powf(-1.25),
        0.1,
        10f64.powf(-0.75),
        10f64.powf(-0.5),
        10f64.powf(-0.25),
        1.0,
    ];
    let mut logs = 0.0;
    let mut all_zero = true;
    for r in refs {
        let mut m = 1.0f64;
        for &(f, mr) in &pts {
            if f <= r && mr < m {
                m = mr;
            }
        }
        all_zero &= m == 0.0;
        logs += m.max(1e-10).ln();
    }
    if all_zero {
        0.0
    } else {
        (logs / 9.0).exp()
    }
}

/// Interpolated AP by re-matching at every threshold.
pub fn brute_force_ap(images: &[(Vec<Detection>, Vec<Annotation>)], iou_min: f64, n_points: usize) -> f64 {
    let n_gt: usize = images.iter().map(|(_, a)| a.iter().filter(|a| !a.ignore).count()).sum();
    let pts: Vec<(f64, f64)> = thresholds(images)
        .into_iter()
        .filter_map(|t| {
            let (tp, fp) = totals(images, t, iou_min);
            (tp + fp > 0).then(|| (tp as f64 / n_gt as f64, tp as f64 / (tp + fp) as f64))
        })
        .collect();
    let mut sum = 0.0;
    for i in 0..n_points {
        let r = i as f64 / (n_points - 1) as f64;
        let mut p = 0.0f64;
        for &(rec, prec) in &pts {
            if rec >= r && prec > p {
                p = prec;
            }
        }
        sum += p;
    }
    sum / n_points as f64
}

/// Bilinear sample with replicated borders, pixel centres at integers.
pub fn bilinear_clamped(p: &Plane, x: f64, y: f64) -> f64 {
    let cx = x.clamp(0.0, (p.width - 1) as f64);
    let cy = y.clamp(0.0, (p.height - 1) as f64);
    let (x0, y0) = (cx.floor() as usize, cy.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(p.width - 1), (y0 + 1).min(p.height - 1));
    let (ax, ay) = (cx - x0 as f64, cy - y0 as f64);
    let g = |x: usize, y: usize| f64::from(p.get(x, y));
    (1.0 - ay) * ((1.0 - ax) * g(x0, y0) + ax * g(x1, y0)) + ay * ((1.0 - ax) * g(x0, y1) + ax * g(x1, y1))
}
