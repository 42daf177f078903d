//! Staged training with hard negative mining.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{boost, BoostOptions, BoostedForest, Model, Variant};
use crate::channels::ChannelOptions;
use crate::data::{build_training_set, sample_negatives, sample_positives, Corpus, WindowSample};
use crate::detector::{detect, PyramidSpec};
use crate::error::{Error, Result};
use crate::filterbank::FilterBank;
use crate::geometry::WindowGeometry;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MiningOptions {
    /// Windows scoring below this are never harvested.
    pub score_min: f64,
    pub nms_overlap: f64,
    /// At most this many hard negatives per image and round.
    pub per_image_cap: usize,
    /// A detection is a false positive when its IoU with every
    /// annotation is at most this.
    pub exclusion_iou: f64,
}

impl Default for MiningOptions {
    fn default() -> Self {
        MiningOptions {
            score_min: -1.0,
            nms_overlap: 0.65,
            per_image_cap: 25,
            exclusion_iou: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Tree count of each stage; one mining round between stages.
    pub schedule: Vec<usize>,
    pub depth: usize,
    pub variant: Variant,
    pub negatives_initial: usize,
    pub negatives_per_round: usize,
    pub mirror_positives: bool,
    /// Calibrate a soft cascade on the training positives.
    pub cascade: bool,
    pub seed: u64,
    pub mining: MiningOptions,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            schedule: vec![32, 512, 1024, 2048, 4096],
            depth: 2,
            variant: Variant::Discrete,
            negatives_initial: 10_000,
            negatives_per_round: 10_000,
            mirror_positives: false,
            cascade: false,
            seed: 0,
            mining: MiningOptions::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.schedule.is_empty() || self.schedule[0] == 0 {
            return Err(Error::invalid("schedule must start with at least one tree"));
        }
        if self.schedule.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("schedule must be strictly increasing"));
        }
        if !(1..=8).contains(&self.depth) {
            return Err(Error::invalid("depth must be between 1 and 8"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundReport {
    pub trees_requested: usize,
    pub trees_trained: usize,
    pub positives: usize,
    pub negatives: usize,
    /// Hard negatives harvested after this stage (0 for the last one).
    pub mined: usize,
    pub halted: Option<String>,
    pub losses: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    pub rounds: Vec<RoundReport>,
}

fn train_stage(
    corpus: &Corpus,
    samples: &[WindowSample],
    bank: &FilterBank,
    channels: &ChannelOptions,
    geometry: &WindowGeometry,
    cfg: &TrainConfig,
    n_trees: usize,
) -> Result<(Model, super::BoostTrace)> {
    let data = build_training_set(corpus, samples, bank, channels, geometry)?;
    let (ens, trace) = boost(
        &data,
        &BoostOptions {
            n_trees,
            depth: cfg.depth,
            variant: cfg.variant,
        },
    )?;
    let mut forest = BoostedForest::from_ensemble(cfg.variant, (geometry.window_w, geometry.window_h), ens)?;
    if cfg.cascade {
        forest.set_cascade(Some(trace.positive_floor.iter().map(|v| v - 1.0).collect()))?;
    }
    Ok((Model::new(bank.clone(), *channels, *geometry, forest)?, trace))
}

/// Runs `model` over every corpus image and returns up to `quota` of the
/// highest-scoring false positives as negative windows.
pub(crate) fn mine_negatives(
    corpus: &Corpus,
    model: &Model,
    pyramid: &PyramidSpec,
    mining: &MiningOptions,
    quota: usize,
) -> Result<Vec<WindowSample>> {
    let spec = PyramidSpec {
        score_min: mining.score_min,
        nms_overlap: Some(mining.nms_overlap),
        ..pyramid.clone()
    };
    let per_image: Vec<Vec<(f64, WindowSample)>> = corpus
        .entries
        .par_iter()
        .enumerate()
        .map(|(i, e)| {
            let img = e.load_image()?;
            let mut found = Vec::new();
            for d in detect(&img, model, &spec)? {
                if found.len() == mining.per_image_cap {
                    break;
                }
                if e.annotations.iter().any(|a| d.bbox.iou(&a.bbox) > mining.exclusion_iou) {
                    continue;
                }
                found.push((
                    d.score,
                    WindowSample {
                        image: i,
                        image_id: e.id.clone(),
                        window: model.geometry.window_for_object(&d.bbox),
                        positive: false,
                        mirrored: false,
                    },
                ));
            }
            Ok(found)
        })
        .collect::<Result<_>>()?;
    let mut all: Vec<(f64, WindowSample)> = per_image.into_iter().flatten().collect();
    // stable: equal scores keep image then detection order
    all.sort_by(|a, b| b.0.total_cmp(&a.0));
    all.truncate(quota);
    Ok(all.into_iter().map(|(_, s)| s).collect())
}

/// Trains the first stage on positives plus random negatives, then for
/// each later stage mines false positives with the previous model, adds
/// them to the pool and retrains from scratch at the stage's tree count.
pub fn train_staged(
    corpus: &Corpus,
    bank: &FilterBank,
    channels: &ChannelOptions,
    geometry: &WindowGeometry,
    pyramid: &PyramidSpec,
    cfg: &TrainConfig,
) -> Result<(Model, TrainReport)> {
    cfg.validate()?;
    geometry.validate()?;
    let positives = sample_positives(corpus, geometry, cfg.mirror_positives);
    if positives.is_empty() {
        return Err(Error::Training("corpus yields no positive windows".into()));
    }
    let (lo, hi) = pyramid.window_height_range(geometry);
    let mut negatives = sample_negatives(corpus, cfg.negatives_initial, cfg.seed, cfg.mining.exclusion_iou, geometry, (lo, hi));
    if negatives.is_empty() {
        return Err(Error::Training("corpus yields no negative windows".into()));
    }
    let mut report = TrainReport::default();
    let mut model = None;
    for (stage, &n_trees) in cfg.schedule.iter().enumerate() {
        let samples: Vec<WindowSample> = positives.iter().chain(&negatives).cloned().collect();
        log::info!(
            "stage {stage}: {n_trees} trees on {} positives and {} negatives",
            positives.len(),
            negatives.len()
        );
        let (m, trace) = train_stage(corpus, &samples, bank, channels, geometry, cfg, n_trees)?;
        if let Some(h) = &trace.halted {
            log::warn!("stage {stage}: boosting halted early: {h}");
        }
        let mut round = RoundReport {
            trees_requested: n_trees,
            trees_trained: m.forest.len(),
            positives: positives.len(),
            negatives: negatives.len(),
            mined: 0,
            halted: trace.halted.clone(),
            losses: trace.losses,
        };
        if stage + 1 < cfg.schedule.len() {
            let mined = mine_negatives(corpus, &m, pyramid, &cfg.mining, cfg.negatives_per_round)?;
            if mined.len() < cfg.negatives_per_round {
                log::warn!(
                    "stage {stage}: mined {} of {} requested negatives",
                    mined.len(),
                    cfg.negatives_per_round
                );
            }
            round.mined = mined.len();
            negatives.extend(mined);
        }
        report.rounds.push(round);
        model = Some(m);
    }
    Ok((model.expect("schedule is non-empty"), report))
}
