use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;

use fcdet_core::data::{extract_patches, load_corpus, make_synthetic, save_corpus, PatchOrigin};
use fcdet_core::detector::{load_detections, save_detections, DetectionSet};
use fcdet_core::eval::{
    apply_subset, average_precision, export_curve, log_avg_miss_rate, match_image, CurveFormat,
};
use fcdet_core::filterbank::{learn_pca, load_bank, save_bank, FilterLists, PcaInput, PCA_PATCH_PX};
use fcdet_core::forest::{
    filter_usage, load_model, reduce_bank, save_model, spatial_influence, train_staged, ReduceMode,
};
use fcdet_core::grid::write_pfm;
use fcdet_core::{Corpus, FilterBank, Image, Plane, Protocol};

use crate::config::{RunConfig, SubsetName};
use crate::{DetectArgs, EvalArgs, GenerateArgs, LearnArgs, PatchSource, ReduceArgs, StatsArgs, SynthArgs, TrainArgs};

fn parse_size(s: &str) -> Result<(usize, usize)> {
    let (r, c) = s
        .split_once(['x', 'X'])
        .with_context(|| format!("--max {s:?}: expected ROWSxCOLS"))?;
    Ok((r.parse().context("--max rows")?, c.parse().context("--max cols")?))
}

pub fn filters_generate(mut cfg: RunConfig, a: GenerateArgs) -> Result<()> {
    let b = &mut cfg.filterbank;
    if let Some(f) = a.family {
        b.family = f;
    }
    if let Some(m) = a.max {
        (b.max_rows, b.max_cols) = parse_size(&m)?;
    }
    if let Some(n) = a.n_sizes {
        b.n_sizes = n;
    }
    if let Some(n) = a.count {
        b.count = n;
    }
    if let Some(c) = a.cell_px {
        b.cell_px = c;
    }
    if let Some(s) = a.stride_px {
        b.stride_px = s;
    }
    let bank = cfg.filterbank.generate(cfg.seed)?;
    save_bank(&bank, &a.output, &cfg.header("filters generate"))?;
    println!("{} {}", bank.describe(), a.output.display());
    Ok(())
}

pub fn filters_learn(cfg: RunConfig, a: LearnArgs) -> Result<()> {
    let corpus = load_corpus(&a.corpus, 1)?;
    let patches = |origin| extract_patches(&corpus, &cfg.channels, PCA_PATCH_PX, a.patches, origin, cfg.seed);
    let bank = match a.source {
        PatchSource::All => learn_pca(PcaInput::AllData(&patches(PatchOrigin::All)?), a.k)?,
        PatchSource::ForegroundBackground => {
            let (fg, bg) = (patches(PatchOrigin::Foreground)?, patches(PatchOrigin::Background)?);
            learn_pca(
                PcaInput::ForegroundBackground {
                    foreground: &fg,
                    background: &bg,
                },
                a.k,
            )?
        }
    };
    let mut header = cfg.header("filters learn");
    header.push(format!("corpus {} patches {} k {}", corpus.id, a.patches, a.k));
    save_bank(&bank, &a.output, &header)?;
    println!("{} {}", bank.describe(), a.output.display());
    Ok(())
}

pub fn filters_inspect(path: &Path) -> Result<()> {
    let bank = load_bank(path)?;
    println!("# {}", bank.describe());
    println!("channel id rows cols weight_sum");
    let print = |channel: &str, list: &[fcdet_core::Filter]| {
        for f in list {
            println!("{channel} {} {} {} {}", f.id(), f.rows(), f.cols(), f.weight_sum());
        }
    };
    match bank.lists() {
        FilterLists::Shared(list) => print("*", list),
        FilterLists::PerChannel(lists) => {
            for (c, list) in lists.iter().enumerate() {
                print(&c.to_string(), list);
            }
        }
    }
    Ok(())
}

pub fn filters_reduce(cfg: RunConfig, a: ReduceArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let mode = if a.per_channel {
        ReduceMode::PerChannel
    } else {
        ReduceMode::AcrossChannels
    };
    let bank = reduce_bank(&model.forest, &model.bank, a.top, mode)?;
    let mut header = cfg.header("filters reduce");
    header.push(format!("reduced from {} top {}", a.model.display(), a.top));
    save_bank(&bank, &a.output, &header)?;
    println!("{} {}", bank.describe(), a.output.display());
    Ok(())
}

pub fn train(mut cfg: RunConfig, a: TrainArgs) -> Result<()> {
    let t = &mut cfg.training;
    if let Some(s) = a.schedule {
        t.schedule = s;
    }
    if let Some(d) = a.depth {
        t.depth = d;
    }
    if let Some(v) = a.variant {
        t.variant = v.parse()?;
    }
    if let Some(n) = a.negatives {
        t.negatives_initial = n;
        t.negatives_per_round = n;
    }
    cfg.validate()?;
    let corpus = match &a.corpus {
        Some(p) => load_corpus(p, a.subsample)?,
        None => make_synthetic(&cfg.synth, cfg.seed)?,
    };
    let bank: FilterBank = match &a.bank {
        Some(p) => load_bank(p)?,
        None => cfg.filterbank.generate(cfg.seed)?,
    };
    log::info!("training on {} ({} images) with {}", corpus.id, corpus.len(), bank.describe());
    let (model, report) = train_staged(&corpus, &bank, &cfg.channels, &cfg.geometry, &cfg.detector, &cfg.train_config())?;
    let mut header = cfg.header("train");
    header.push(format!("corpus {} images {}", corpus.id, corpus.len()));
    for (i, r) in report.rounds.iter().enumerate() {
        header.push(format!(
            "stage {i} trees {}/{} positives {} negatives {} mined {}",
            r.trees_trained, r.trees_requested, r.positives, r.negatives, r.mined
        ));
    }
    save_model(&model, &a.output, &header)?;
    println!("trees {} splits {} {}", model.forest.len(), model.forest.num_splits(), a.output.display());
    Ok(())
}

pub fn detect(mut cfg: RunConfig, a: DetectArgs) -> Result<()> {
    let d = &mut cfg.detector;
    if let Some(s) = a.stride_px {
        d.stride_px = s;
    }
    if let Some(n) = a.nms {
        d.nms_overlap = (n >= 0.0).then_some(n);
    }
    if let Some(s) = a.score_min {
        d.score_min = s;
    }
    cfg.detector.validate()?;
    let model = load_model(&a.model)?;
    let inputs: Vec<(String, PathOrImage)> = match &a.corpus {
        Some(p) => {
            let corpus = load_corpus(p, 1)?;
            corpus
                .entries
                .into_iter()
                .map(|e| (e.id.clone(), PathOrImage::Entry(Box::new(e))))
                .collect()
        }
        None => a
            .images
            .iter()
            .map(|p| {
                let id = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                (id, PathOrImage::Path(p.clone()))
            })
            .collect(),
    };
    let per_image: Vec<(String, Vec<fcdet_core::Detection>)> = inputs
        .par_iter()
        .map(|(id, src)| {
            let img = src.load()?;
            Ok((id.clone(), fcdet_core::detect(&img, &model, &cfg.detector)?))
        })
        .collect::<Result<_>>()?;
    let mut set = DetectionSet::new();
    let mut total = 0;
    for (id, dets) in per_image {
        total += dets.len();
        if set.insert(id.clone(), dets).is_some() {
            bail!("duplicate image id {id}");
        }
    }
    let mut header = cfg.header("detect");
    header.push(format!("model {}", a.model.display()));
    save_detections(&set, &a.output, &header)?;
    println!("images {} detections {} {}", set.len(), total, a.output.display());
    Ok(())
}

enum PathOrImage {
    Path(PathBuf),
    Entry(Box<fcdet_core::CorpusEntry>),
}

impl PathOrImage {
    fn load(&self) -> Result<std::sync::Arc<Image>> {
        Ok(match self {
            PathOrImage::Path(p) => std::sync::Arc::new(Image::load(p)?),
            PathOrImage::Entry(e) => e.load_image()?,
        })
    }
}

pub fn eval(mut cfg: RunConfig, a: EvalArgs) -> Result<()> {
    if let Some(p) = a.protocol {
        cfg.eval.protocol = p.parse()?;
    }
    if let Some(s) = a.subset {
        cfg.eval.subset = match s.as_str() {
            "reasonable" => SubsetName::Reasonable,
            "moderate" => SubsetName::Moderate,
            "all" => SubsetName::All,
            other => bail!("unknown subset {other:?}"),
        };
    }
    let corpus = load_corpus(&a.corpus, 1)?;
    let dets = load_detections(&a.detections)?;
    if let Some(id) = dets.keys().find(|id| !corpus.entries.iter().any(|e| &e.id == *id)) {
        bail!("detections for image {id:?}, which is not in the corpus");
    }
    let subset = cfg.eval.subset();
    let results: Vec<_> = corpus
        .entries
        .iter()
        .map(|e| {
            let annos = apply_subset(&e.annotations, &subset);
            match_image(dets.get(&e.id).map_or(&[][..], Vec::as_slice), &annos, cfg.eval.iou_min)
        })
        .collect();
    let curve = match cfg.eval.protocol {
        Protocol::CaltechMr => log_avg_miss_rate(&results)?,
        Protocol::KittiAp => average_precision(&results, cfg.eval.recall_points)?,
    };
    if let Some(dir) = &a.out_dir {
        std::fs::create_dir_all(dir)?;
        let label = a.detections.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        export_curve(&curve, &dir.join("curve.csv"), CurveFormat::Csv, &label)?;
        export_curve(&curve, &dir.join("curve.svg"), CurveFormat::Svg, &label)?;
    }
    println!("{}", curve.summary_line());
    Ok(())
}

pub fn synth(mut cfg: RunConfig, a: SynthArgs) -> Result<()> {
    if let Some(s) = a.split {
        cfg.synth.split = s.parse()?;
    }
    if let Some(n) = a.n_images {
        cfg.synth.n_images = n;
    }
    cfg.synth.validate()?;
    let corpus: Corpus = make_synthetic(&cfg.synth, cfg.seed)?;
    std::fs::create_dir_all(&a.output)?;
    let manifest = a.output.join("manifest.txt");
    save_corpus(&corpus, &manifest, &cfg.header("synth"))?;
    println!(
        "{} images {} annotations {} {}",
        corpus.id,
        corpus.len(),
        corpus.num_annotations(),
        manifest.display()
    );
    Ok(())
}

pub fn stats(a: &StatsArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let usage = filter_usage(&model.forest, &model.bank)?;
    println!("trees {}", model.forest.len());
    println!("splits {}", model.forest.num_splits());
    println!("filter splits");
    for (id, n) in usage.by_id(&model.bank) {
        println!("{id} {n}");
    }
    println!("channel splits");
    for (c, row) in usage.per_channel.iter().enumerate() {
        println!("{c} {}", row.iter().sum::<usize>());
    }
    if let Some(dir) = &a.out_dir {
        std::fs::create_dir_all(dir)?;
        let maps = spatial_influence(&model.forest, &model.bank)?;
        let mut named: BTreeMap<String, &Plane> = BTreeMap::new();
        named.insert("influence-total".into(), &maps.total);
        for (c, p) in maps.per_channel.iter().enumerate() {
            named.insert(format!("influence-c{c}"), p);
        }
        for (name, p) in named {
            write_pfm(&dir.join(format!("{name}.pfm")), p.width, p.height, &p.data)?;
            std::fs::write(dir.join(format!("{name}.svg")), heatmap_svg(p))?;
        }
    }
    Ok(())
}

/// Gray-level heatmap, one rect per pixel, 4× magnified.
fn heatmap_svg(p: &Plane) -> String {
    const MAG: usize = 4;
    let max = p.data.iter().copied().fold(0.0f32, f32::max);
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" shape-rendering="crispEdges">"#,
        p.width * MAG,
        p.height * MAG
    )
    .unwrap();
    for y in 0..p.height {
        for x in 0..p.width {
            let v = if max > 0.0 { p.get(x, y) / max } else { 0.0 };
            let g = (v * 255.0).round() as u8;
            writeln!(
                s,
                r#"<rect x="{}" y="{}" width="{MAG}" height="{MAG}" fill="rgb({g},{g},{g})"/>"#,
                x * MAG,
                y * MAG
            )
            .unwrap();
        }
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_parse() {
        assert_eq!(parse_size("4x3").unwrap(), (4, 3));
        assert!(parse_size("4").is_err());
    }

    #[test]
    fn heatmap_has_one_rect_per_pixel() {
        let svg = heatmap_svg(&Plane::from_fn(3, 2, |x, y| (x + y) as f32));
        assert_eq!(svg.matches("<rect").count(), 6);
        assert!(svg.contains("rgb(255,255,255)"));
    }
}

