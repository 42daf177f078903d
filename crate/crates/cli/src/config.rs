//! Run configuration: one TOML file, every key optional, unknown keys
//! rejected. Command-line flags are applied on top.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use fcdet_core::data::SynthSpec;
use fcdet_core::eval::Subset;
use fcdet_core::filterbank::{
    make_checkerboards, make_random, make_squares, make_uniform, Family, FilterBank, DEFAULT_CELL_PX,
    DEFAULT_STRIDE_PX,
};
use fcdet_core::forest::{MiningOptions, TrainConfig, Variant};
use fcdet_core::{ChannelOptions, PyramidSpec, Protocol, WindowGeometry};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Root of all randomness.
    pub seed: u64,
    pub channels: ChannelOptions,
    pub filterbank: BankSection,
    pub geometry: WindowGeometry,
    pub training: TrainingSection,
    pub detector: PyramidSpec,
    pub eval: EvalSection,
    pub synth: SynthSpec,
}

/// Generated bank recipe. PCA banks come from `filters learn` and are
/// passed to `train` as files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BankSection {
    pub family: String,
    pub max_rows: usize,
    pub max_cols: usize,
    /// Square sizes for the squares family.
    pub n_sizes: usize,
    /// Filter count for the random family.
    pub count: usize,
    pub cell_px: usize,
    pub stride_px: usize,
}

impl Default for BankSection {
    fn default() -> Self {
        BankSection {
            family: "checkerboards".into(),
            max_rows: 4,
            max_cols: 4,
            n_sizes: 4,
            count: 30,
            cell_px: DEFAULT_CELL_PX,
            stride_px: DEFAULT_STRIDE_PX,
        }
    }
}

impl BankSection {
    pub fn generate(&self, seed: u64) -> Result<FilterBank> {
        let family: Family = self.family.parse()?;
        let (c, s) = (self.cell_px, self.stride_px);
        Ok(match family {
            Family::Uniform => make_uniform(c, s)?,
            Family::Squares => make_squares(self.n_sizes, c, s)?,
            Family::Checkerboards => make_checkerboards(self.max_rows, self.max_cols, c, s)?,
            Family::Random => make_random(self.count, self.max_rows, self.max_cols, seed, c, s)?,
            other => bail!("filterbank.family: {other} banks are learned with `filters learn`, not generated"),
        })
    }
}

/// Everything of [`TrainConfig`] except the seed, which is the run seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSection {
    pub schedule: Vec<usize>,
    pub depth: usize,
    pub variant: Variant,
    pub negatives_initial: usize,
    pub negatives_per_round: usize,
    pub mirror_positives: bool,
    pub cascade: bool,
    pub mining: MiningOptions,
}

impl Default for TrainingSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainingSection {
            schedule: t.schedule,
            depth: t.depth,
            variant: t.variant,
            negatives_initial: t.negatives_initial,
            negatives_per_round: t.negatives_per_round,
            mirror_positives: t.mirror_positives,
            cascade: t.cascade,
            mining: t.mining,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SubsetName {
    Reasonable,
    Moderate,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub protocol: Protocol,
    pub subset: SubsetName,
    pub iou_min: f64,
    pub recall_points: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            protocol: Protocol::CaltechMr,
            subset: SubsetName::Reasonable,
            iou_min: 0.5,
            recall_points: 41,
        }
    }
}

impl EvalSection {
    pub fn subset(&self) -> Subset {
        match self.subset {
            SubsetName::Reasonable => Subset::reasonable(),
            SubsetName::Moderate => Subset::moderate(),
            SubsetName::All => Subset::all(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("config {}", path.display()))
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.training;
        TrainConfig {
            schedule: t.schedule.clone(),
            depth: t.depth,
            variant: t.variant,
            negatives_initial: t.negatives_initial,
            negatives_per_round: t.negatives_per_round,
            mirror_positives: t.mirror_positives,
            cascade: t.cascade,
            seed: self.seed,
            mining: t.mining.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate().context("geometry")?;
        self.train_config().validate().context("training")?;
        self.detector.validate().context("detector")?;
        self.synth.validate().context("synth")?;
        if !(0.0..=1.0).contains(&self.eval.iou_min) {
            bail!("eval.iou_min must lie in [0, 1]");
        }
        if self.eval.recall_points < 2 {
            bail!("eval.recall_points must be at least 2");
        }
        Ok(())
    }

    /// The resolved configuration as header lines for output artifacts.
    pub fn header(&self, command: &str) -> Vec<String> {
        let body = toml::to_string(self).expect("config serializes");
        std::iter::once(format!("fcdet {command}"))
            .chain(body.lines().filter(|l| !l.is_empty()).map(str::to_string))
            .collect()
    }
}
