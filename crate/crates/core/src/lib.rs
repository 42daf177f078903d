//! Pedestrian detector built on HOG+LUV channels convolved with a filter
//! bank: channels, filter banks, boosted decision forests, sliding-window
//! detection and evaluation.

pub mod channels;
pub mod data;
pub mod detector;
pub mod error;
pub mod eval;
pub mod featuremap;
pub mod filterbank;
pub mod forest;
pub mod geometry;
pub mod grid;
pub mod image;
pub mod numfmt;
pub mod rng;

pub use channels::{compute_channels, ChannelOptions, ChannelStack, Smoothing, NUM_CHANNELS};
pub use data::{Corpus, CorpusEntry, ImageSource, Split, SynthSpec, WindowSample};
pub use detector::{detect, nms, Detection, PyramidSpec};
pub use error::{Error, Result};
pub use eval::{Annotation, EvalCurve, Protocol, Subset};
pub use featuremap::{apply_bank, feature_count, read_feature, FeatureIndex, FeatureSpace, ResponseStack};
pub use filterbank::{Family, Filter, FilterBank, FilterLists};
pub use forest::{BoostedForest, Model, TrainConfig, Tree, Variant};
pub use geometry::{BoundingBox, WindowGeometry};
pub use image::{Image, Plane};
