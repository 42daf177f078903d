//! Exhaustive greedy tree fitting and the two boosting variants.

use rayon::prelude::*;

use super::quantize::{QuantizedData, NUM_BINS};
use super::{Node, Tree, Variant};
use crate::error::{Error, Result};
use crate::numfmt::{canonical, MODEL_DIGITS};

/// Clamp for a perfect weak learner's error.
pub const MIN_ERROR: f64 = 1e-10;

/// Candidate split: `(criterion, feature, bin)`; left side is `bin <= b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitChoice {
    pub criterion: f64,
    pub feature: usize,
    pub bin: usize,
}

#[inline(always)]
fn criterion(variant: Variant, lp: f64, ln: f64, rp: f64, rn: f64) -> f64 {
    match variant {
        Variant::Discrete => lp.min(ln) + rp.min(rn),
        Variant::Real => 2.0 * ((lp * ln).sqrt() + (rp * rn).sqrt()),
    }
}

/// Best threshold bin of one feature over a node's samples; left is
/// `bin <= b`. Candidates run from the first to the last occupied bin, so
/// both sides are non-empty.
fn feature_best(hp: &[f64; NUM_BINS], hn: &[f64; NUM_BINS], tp: f64, tn: f64, variant: Variant) -> Option<(f64, usize)> {
    // weights are strictly positive, so a bin is occupied iff its mass is
    let occupied = |b: usize| hp[b] + hn[b] > 0.0;
    let first = (0..NUM_BINS).find(|&b| occupied(b))?;
    let last = (0..NUM_BINS).rev().find(|&b| occupied(b))?;
    // bins below `first` hold no mass, so the prefix sums start there at zero
    match variant {
        Variant::Discrete => scan(hp, hn, tp, tn, first, last, |lp, ln, rp, rn| {
            criterion(Variant::Discrete, lp, ln, rp, rn)
        }),
        Variant::Real => scan(hp, hn, tp, tn, first, last, |lp, ln, rp, rn| criterion(Variant::Real, lp, ln, rp, rn)),
    }
}

#[inline(always)]
fn scan(
    hp: &[f64; NUM_BINS],
    hn: &[f64; NUM_BINS],
    tp: f64,
    tn: f64,
    first: usize,
    last: usize,
    crit: impl Fn(f64, f64, f64, f64) -> f64,
) -> Option<(f64, usize)> {
    let (mut ln, mut lp) = (0.0f64, 0.0f64);
    let (mut best_c, mut best_b) = (f64::INFINITY, usize::MAX);
    for b in first..last {
        ln += hn[b];
        lp += hp[b];
        let c = crit(lp, ln, (tp - lp).max(0.0), (tn - ln).max(0.0));
        if c < best_c {
            (best_c, best_b) = (c, b);
        }
    }
    (best_b != usize::MAX).then_some((best_c, best_b))
}

/// Features histogrammed per pass over the samples. Their updates are
/// independent, which hides store-to-load latency on repeated bins.
const GROUP: usize = 4;

/// Samples of one class at a node, with their weights gathered once so the
/// per-feature pass reads only the bin columns at random.
struct ClassSamples {
    idx: Vec<u32>,
    w: Vec<f64>,
    total: f64,
}

impl ClassSamples {
    fn gather(y: &[bool], idx: &[u32], w: &[f64], label: bool) -> Self {
        let idx: Vec<u32> = idx.iter().copied().filter(|&i| y[i as usize] == label).collect();
        let w: Vec<f64> = idx.iter().map(|&i| w[i as usize]).collect();
        let total = w.iter().sum();
        ClassSamples { idx, w, total }
    }

    fn histograms(&self, cols: [&[u8]; GROUP]) -> [[f64; NUM_BINS]; GROUP] {
        let mut h = [[0.0f64; NUM_BINS]; GROUP];
        for (&i, &w) in self.idx.iter().zip(&self.w) {
            let i = i as usize;
            for (hk, col) in h.iter_mut().zip(&cols) {
                hk[col[i] as usize] += w;
            }
        }
        h
    }
}

fn class_masses(y: &[bool], idx: &[u32], w: &[f64]) -> (f64, f64) {
    idx.iter().fold((0.0, 0.0), |(p, n), &i| {
        if y[i as usize] {
            (p + w[i as usize], n)
        } else {
            (p, n + w[i as usize])
        }
    })
}

/// Best split of the samples `idx` over all features, ties broken by the
/// lowest feature then the lowest bin.
pub fn best_split(data: &QuantizedData, idx: &[u32], w: &[f64], variant: Variant) -> Option<SplitChoice> {
    let y = data.labels();
    let pos = ClassSamples::gather(y, idx, w, true);
    let neg = ClassSamples::gather(y, idx, w, false);
    const CHUNK: usize = 256;
    let nf = data.n_features();
    let chunk_best: Vec<Option<SplitChoice>> = (0..nf.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut best: Option<SplitChoice> = None;
            let feats: Vec<usize> = (c * CHUNK..((c + 1) * CHUNK).min(nf))
                .filter(|&f| !data.range(f).is_constant())
                .collect();
            for group in feats.chunks(GROUP) {
                // short groups repeat their last feature; the copies are skipped below
                let cols = std::array::from_fn(|k| data.column(group[k.min(group.len() - 1)]));
                let (hp, hn) = (pos.histograms(cols), neg.histograms(cols));
                for (k, &f) in group.iter().enumerate() {
                    if let Some((crit, bin)) = feature_best(&hp[k], &hn[k], pos.total, neg.total, variant) {
                        if best.is_none_or(|b| crit < b.criterion) {
                            best = Some(SplitChoice {
                                criterion: crit,
                                feature: f,
                                bin,
                            });
                        }
                    }
                }
            }
            best
        })
        .collect();
    chunk_best.into_iter().flatten().fold(None, |acc: Option<SplitChoice>, s| match acc {
        Some(a) if a.criterion <= s.criterion => Some(a),
        _ => Some(s),
    })
}

/// A fitted tree with its per-sample outputs on the training data.
#[derive(Debug, Clone)]
pub struct FittedTree {
    pub tree: Tree,
    /// Leaf value reached by every training sample.
    pub outputs: Vec<f64>,
    /// Weighted misclassification of the leaf signs.
    pub error: f64,
}

struct Builder<'a> {
    data: &'a QuantizedData,
    w: &'a [f64],
    variant: Variant,
    smoothing: f64,
    nodes: Vec<Node>,
    outputs: Vec<f64>,
    error: f64,
}

impl Builder<'_> {
    fn leaf(&mut self, idx: &[u32], wp: f64, wn: f64) {
        let value = match self.variant {
            Variant::Discrete => {
                if wp > wn {
                    1.0
                } else {
                    -1.0
                }
            }
            Variant::Real => canonical(0.5 * ((wp + self.smoothing) / (wn + self.smoothing)).ln(), MODEL_DIGITS),
        };
        self.error += wp.min(wn);
        for &i in idx {
            self.outputs[i as usize] = value;
        }
        self.nodes.push(Node::Leaf { value });
    }

    fn grow(&mut self, idx: Vec<u32>, depth_left: usize) {
        let (wp, wn) = class_masses(self.data.labels(), &idx, self.w);
        if depth_left == 0 || wp <= 0.0 || wn <= 0.0 {
            self.leaf(&idx, wp, wn);
            return;
        }
        let Some(s) = best_split(self.data, &idx, self.w, self.variant) else {
            self.leaf(&idx, wp, wn);
            return;
        };
        let col = self.data.column(s.feature);
        let (left, right): (Vec<u32>, Vec<u32>) = idx.iter().partition(|&&i| usize::from(col[i as usize]) <= s.bin);
        drop(idx);
        let at = self.nodes.len();
        self.nodes.push(Node::Split {
            feature: self.data.feature(s.feature),
            threshold: self.data.threshold(s.feature, s.bin),
            left: at + 1,
            right: 0,
        });
        self.grow(left, depth_left - 1);
        let r = self.nodes.len();
        if let Node::Split { right, .. } = &mut self.nodes[at] {
            *right = r;
        }
        self.grow(right, depth_left - 1);
    }
}

/// Fits one tree of at most `depth` split levels. Each node takes the
/// split minimizing weighted misclassification (discrete) or
/// `2 Σ √(W₊W₋)` (real) over every feature and bin; a node becomes a leaf
/// when it is pure, at full depth, or has no split leaving both sides
/// non-empty.
pub fn fit_tree(data: &QuantizedData, weights: &[f64], depth: usize, variant: Variant) -> Result<FittedTree> {
    let n = data.n_samples();
    if weights.len() != n {
        return Err(Error::Training("weight count does not match the sample count".into()));
    }
    if weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
        return Err(Error::Training("weights must be positive and finite".into()));
    }
    let y = data.labels();
    if !y.iter().any(|&l| l) || y.iter().all(|&l| l) {
        return Err(Error::Training("both classes must be present".into()));
    }
    let mut b = Builder {
        data,
        w: weights,
        variant,
        smoothing: 1.0 / (2.0 * n as f64),
        nodes: Vec::new(),
        outputs: vec![0.0; n],
        error: 0.0,
    };
    b.grow((0..n as u32).collect(), depth);
    let tree = Tree::new(b.nodes)?;
    Ok(FittedTree {
        tree,
        outputs: b.outputs,
        error: b.error,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoostOptions {
    pub n_trees: usize,
    pub depth: usize,
    pub variant: Variant,
}

/// Per-round diagnostics of a boosting run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BoostTrace {
    /// Weighted error of each accepted weak learner.
    pub errors: Vec<f64>,
    /// `Σ exp(-y·score)` after each accepted round.
    pub losses: Vec<f64>,
    /// 0.5-percentile of the positives' running score after each round.
    pub positive_floor: Vec<f64>,
    pub halted: Option<String>,
}

/// Boosted trees with their weights (all ones for the real variant).
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub trees: Vec<Tree>,
    pub weights: Vec<f64>,
}

fn percentile_low(values: &mut [f64], q: f64) -> f64 {
    values.sort_by(f64::total_cmp);
    let k = ((values.len() as f64 - 1.0) * q).floor() as usize;
    values[k]
}

/// Runs up to `opts.n_trees` boosting rounds from uniform weights.
pub fn boost(data: &QuantizedData, opts: &BoostOptions) -> Result<(Ensemble, BoostTrace)> {
    if opts.n_trees == 0 {
        return Err(Error::Training("n_trees must be at least 1".into()));
    }
    let n = data.n_samples();
    let y = data.labels();
    let sign = |i: usize| if y[i] { 1.0 } else { -1.0 };
    let mut w = vec![1.0 / n as f64; n];
    let mut scores = vec![0.0f64; n];
    let mut ens = Ensemble {
        trees: Vec::new(),
        weights: Vec::new(),
    };
    let mut trace = BoostTrace::default();
    let positives: Vec<usize> = (0..n).filter(|&i| y[i]).collect();

    for round in 0..opts.n_trees {
        let fitted = fit_tree(data, &w, opts.depth, opts.variant)?;
        let alpha = match opts.variant {
            Variant::Discrete => {
                let eps = fitted.error;
                if eps >= 0.5 {
                    trace.halted = Some(format!("round {round}: weak learner error {eps} >= 0.5"));
                    break;
                }
                let eps = eps.max(MIN_ERROR);
                canonical(0.5 * ((1.0 - eps) / eps).ln(), crate::numfmt::MODEL_DIGITS)
            }
            Variant::Real => 1.0,
        };
        for i in 0..n {
            let h = alpha * fitted.outputs[i];
            scores[i] += h;
            w[i] *= (-sign(i) * h).exp();
        }
        let total: f64 = w.iter().sum();
        for v in &mut w {
            *v = (*v / total).max(f64::MIN_POSITIVE);
        }
        trace.errors.push(fitted.error);
        trace.losses.push((0..n).map(|i| (-sign(i) * scores[i]).exp()).sum());
        let mut pos: Vec<f64> = positives.iter().map(|&i| scores[i]).collect();
        trace.positive_floor.push(percentile_low(&mut pos, 0.005));
        ens.trees.push(fitted.tree);
        ens.weights.push(alpha);

        let (mp, mn) = (0..n).fold((0.0, 0.0), |(p, q), i| if y[i] { (p + w[i], q) } else { (p, q + w[i]) });
        if mp <= f64::MIN_POSITIVE * n as f64 || mn <= f64::MIN_POSITIVE * n as f64 {
            trace.halted = Some(format!("round {round}: class weight mass vanished"));
            break;
        }
    }
    if ens.trees.is_empty() {
        return Err(Error::Training(
            trace.halted.clone().unwrap_or_else(|| "no weak learner accepted".into()),
        ));
    }
    Ok((ens, trace))
}
