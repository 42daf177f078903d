//! Boosted decision forests over filtered channel features.

mod fit;
mod introspect;
mod io;
mod quantize;
mod staged;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use fit::{best_split, boost, fit_tree, BoostOptions, BoostTrace, Ensemble, FittedTree, SplitChoice, MIN_ERROR};
pub use introspect::{filter_usage, reduce_bank, spatial_influence, FilterUsage, InfluenceMaps, ReduceMode};
pub use io::{load_model, parse_model, save_model, write_model};
pub use quantize::{FeatureRange, QuantizedData, NUM_BINS};
pub use staged::{train_staged, MiningOptions, RoundReport, TrainConfig, TrainReport};

use crate::channels::ChannelOptions;
use crate::error::{Error, Result};
use crate::featuremap::{read_feature_at, FeatureIndex, ResponseStack};
use crate::filterbank::FilterBank;
use crate::geometry::WindowGeometry;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// ±1 leaves scaled by a per-tree weight.
    #[default]
    Discrete,
    /// Real-valued confidence leaves, unit tree weights.
    Real,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Discrete => "discrete",
            Variant::Real => "real",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "discrete" => Ok(Variant::Discrete),
            "real" => Ok(Variant::Real),
            _ => Err(Error::invalid(format!("unknown boosting variant '{s}'"))),
        }
    }
}

/// Tree node; a split sends `value < threshold` to `left`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    Split {
        feature: FeatureIndex,
        threshold: f32,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

/// Binary tree stored in pre-order with the root at index 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    /// Checks that `nodes` form one pre-order tree rooted at 0.
    pub fn new(nodes: Vec<Node>) -> Result<Self> {
        fn walk(nodes: &[Node], i: usize, next: &mut usize) -> Result<()> {
            if i != *next || i >= nodes.len() {
                return Err(Error::invalid("tree nodes are not in pre-order"));
            }
            *next += 1;
            match nodes[i] {
                Node::Split {
                    left,
                    right,
                    threshold,
                    ..
                } => {
                    if !threshold.is_finite() {
                        return Err(Error::invalid("non-finite split threshold"));
                    }
                    walk(nodes, left, next)?;
                    walk(nodes, right, next)
                }
                Node::Leaf { value } if value.is_finite() => Ok(()),
                Node::Leaf { .. } => Err(Error::invalid("non-finite leaf value")),
            }
        }
        let mut next = 0;
        walk(&nodes, 0, &mut next)?;
        if next != nodes.len() {
            return Err(Error::invalid("tree has unreachable nodes"));
        }
        Ok(Tree { nodes })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn num_splits(&self) -> usize {
        self.splits().count()
    }

    pub fn splits(&self) -> impl Iterator<Item = (FeatureIndex, f32)> + '_ {
        self.nodes.iter().filter_map(|n| match *n {
            Node::Split { feature, threshold, .. } => Some((feature, threshold)),
            Node::Leaf { .. } => None,
        })
    }

    /// Number of split levels on the longest path.
    pub fn depth(&self) -> usize {
        fn d(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Split { left, right, .. } => 1 + d(nodes, left).max(d(nodes, right)),
                Node::Leaf { .. } => 0,
            }
        }
        d(&self.nodes, 0)
    }

    /// Leaf value reached with feature values supplied by `read`.
    pub fn evaluate(&self, mut read: impl FnMut(FeatureIndex) -> f32) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if read(feature) < threshold { left } else { right },
                Node::Leaf { value } => return value,
            }
        }
    }

    fn try_evaluate(&self, mut read: impl FnMut(FeatureIndex) -> Result<f32>) -> Result<f64> {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if read(feature)? < threshold { left } else { right },
                Node::Leaf { value } => return Ok(value),
            }
        }
    }
}

/// Ordered weighted trees; `score(x) = Σ_t w_t · tree_t(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoostedForest {
    variant: Variant,
    window: (usize, usize),
    trees: Vec<Tree>,
    weights: Vec<f64>,
    cascade: Option<Vec<f64>>,
}

impl BoostedForest {
    pub fn new(variant: Variant, window: (usize, usize), trees: Vec<Tree>, weights: Vec<f64>) -> Result<Self> {
        if trees.len() != weights.len() {
            return Err(Error::invalid("tree and weight counts differ"));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::invalid("non-finite tree weight"));
        }
        Ok(BoostedForest {
            variant,
            window,
            trees,
            weights,
            cascade: None,
        })
    }

    pub fn from_ensemble(variant: Variant, window: (usize, usize), ens: Ensemble) -> Result<Self> {
        Self::new(variant, window, ens.trees, ens.weights)
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn window(&self) -> (usize, usize) {
        self.window
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.trees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trees.is_empty()
    }

    pub fn num_splits(&self) -> usize {
        self.trees.iter().map(Tree::num_splits).sum()
    }

    pub fn cascade(&self) -> Option<&[f64]> {
        self.cascade.as_deref()
    }

    /// Installs per-tree rejection thresholds on the running score.
    pub fn set_cascade(&mut self, trace: Option<Vec<f64>>) -> Result<()> {
        if let Some(t) = &trace {
            if t.len() != self.trees.len() || t.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("cascade trace must have one finite value per tree"));
            }
        }
        self.cascade = trace;
        Ok(())
    }

    /// Full score, ignoring any cascade.
    pub fn score_with(&self, mut read: impl FnMut(FeatureIndex) -> f32) -> f64 {
        self.trees
            .iter()
            .zip(&self.weights)
            .map(|(t, w)| w * t.evaluate(&mut read))
            .sum()
    }

    /// Score of the window whose origin is grid cell `(origin_x, origin_y)`
    /// of `resp`. With a cascade installed, evaluation stops as soon as the
    /// running score drops below that tree's threshold.
    pub fn score_window(&self, resp: &ResponseStack, origin_x: usize, origin_y: usize) -> Result<f64> {
        let mut sum = 0.0;
        for (t, (tree, w)) in self.trees.iter().zip(&self.weights).enumerate() {
            sum += w * tree.try_evaluate(|f| read_feature_at(resp, f, origin_x, origin_y))?;
            if let Some(c) = &self.cascade {
                if sum < c[t] {
                    break;
                }
            }
        }
        Ok(sum)
    }

    /// Resolves feature addresses against `resp` for fast repeated scoring.
    pub fn compile<'a>(&'a self, resp: &'a ResponseStack) -> Result<CompiledForest<'a>> {
        let mut nodes = Vec::new();
        let mut roots = Vec::with_capacity(self.trees.len());
        let (mut max_x, mut max_y) = (usize::MAX, usize::MAX);
        for tree in &self.trees {
            let base = nodes.len();
            roots.push(base);
            for n in tree.nodes() {
                nodes.push(match *n {
                    Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    } => {
                        let p = resp
                            .plane_index(feature.channel as usize, feature.filter as usize)
                            .ok_or_else(|| Error::OutOfRange(format!("{feature:?}: no such response plane")))?;
                        let plane = &resp.planes()[p];
                        let (cx, cy) = (feature.cell_x as usize, feature.cell_y as usize);
                        if cx >= plane.grid_w || cy >= plane.grid_h {
                            return Err(Error::OutOfRange(format!("{feature:?} does not fit the response grid")));
                        }
                        max_x = max_x.min(plane.grid_w - 1 - cx);
                        max_y = max_y.min(plane.grid_h - 1 - cy);
                        CNode::Split {
                            plane: p,
                            cx,
                            cy,
                            threshold,
                            left: base + left,
                            right: base + right,
                        }
                    }
                    Node::Leaf { value } => CNode::Leaf(value),
                });
            }
        }
        Ok(CompiledForest {
            forest: self,
            resp,
            nodes,
            roots,
            max_origin: (max_x, max_y),
        })
    }
}

#[derive(Debug, Clone, Copy)]
enum CNode {
    Split {
        plane: usize,
        cx: usize,
        cy: usize,
        threshold: f32,
        left: usize,
        right: usize,
    },
    Leaf(f64),
}

/// A forest bound to one response stack.
#[derive(Debug)]
pub struct CompiledForest<'a> {
    forest: &'a BoostedForest,
    resp: &'a ResponseStack,
    nodes: Vec<CNode>,
    roots: Vec<usize>,
    max_origin: (usize, usize),
}

impl CompiledForest<'_> {
    /// Largest valid origin per axis (`usize::MAX` when no split reads).
    pub fn max_origin(&self) -> (usize, usize) {
        self.max_origin
    }

    /// Same result as [`BoostedForest::score_window`].
    pub fn score(&self, ox: usize, oy: usize) -> Result<f64> {
        if ox > self.max_origin.0 || oy > self.max_origin.1 {
            return Err(Error::OutOfRange(format!("window origin ({ox}, {oy}) outside the response grid")));
        }
        let planes = self.resp.planes();
        let cascade = self.forest.cascade();
        let mut sum = 0.0;
        for (t, (&root, w)) in self.roots.iter().zip(self.forest.weights()).enumerate() {
            let mut i = root;
            let v = loop {
                match self.nodes[i] {
                    CNode::Split {
                        plane,
                        cx,
                        cy,
                        threshold,
                        left,
                        right,
                    } => {
                        let p = &planes[plane];
                        let v = p.data[(oy + cy) * p.grid_w + ox + cx];
                        i = if v < threshold { left } else { right };
                    }
                    CNode::Leaf(v) => break v,
                }
            };
            sum += w * v;
            if let Some(c) = cascade {
                if sum < c[t] {
                    break;
                }
            }
        }
        Ok(sum)
    }
}

/// Everything needed to run a trained detector.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub bank: FilterBank,
    pub channels: ChannelOptions,
    pub geometry: WindowGeometry,
    pub forest: BoostedForest,
}

impl Model {
    pub fn new(bank: FilterBank, channels: ChannelOptions, geometry: WindowGeometry, forest: BoostedForest) -> Result<Self> {
        geometry.validate()?;
        if forest.window() != (geometry.window_w, geometry.window_h) {
            return Err(Error::invalid("forest window differs from the model geometry"));
        }
        let space = crate::featuremap::FeatureSpace::new(&bank, geometry.window_w, geometry.window_h)?;
        let valid: std::collections::HashSet<FeatureIndex> = space.features().iter().copied().collect();
        for (f, _) in forest.trees().iter().flat_map(Tree::splits) {
            if !valid.contains(&f) {
                return Err(Error::invalid(format!("split feature {f:?} is not valid for the bank and window")));
            }
        }
        Ok(Model {
            bank,
            channels,
            geometry,
            forest,
        })
    }
}

#[cfg(test)]
mod tests;
