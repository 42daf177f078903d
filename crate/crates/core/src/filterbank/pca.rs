//! PCA filter learning (LDCF-style banks).
//!
//! Patches are mean-centred per set; the covariance is `Xᵀ X / n`. Filters
//! are the leading eigenvectors reshaped to `patch_px × patch_px`, unit
//! norm, with the sign fixed so that the first nonzero coefficient is
//! positive. Weights are rounded to 9 significant digits so banks
//! round-trip through the text format unchanged.

use nalgebra::{DMatrix, SymmetricEigen};

use super::{Family, Filter, FilterBank, FilterLists};
use crate::channels::NUM_CHANNELS;
use crate::error::{Error, Result};
use crate::numfmt::{canonical, BANK_DIGITS};

pub const PCA_PATCH_PX: usize = 10;
pub const PCA_STRIDE_PX: usize = 2;

/// Minimum number of patches per channel, as a multiple of the patch
/// dimension.
const MIN_PATCHES_PER_DIM: usize = 10;

/// Square patches, one set per channel, stored row-major and
/// concatenated.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchSet {
    pub patch_px: usize,
    pub per_channel: Vec<Vec<f32>>,
}

impl PatchSet {
    pub fn new(patch_px: usize) -> Self {
        PatchSet {
            patch_px,
            per_channel: vec![Vec::new(); NUM_CHANNELS],
        }
    }

    pub fn dim(&self) -> usize {
        self.patch_px * self.patch_px
    }

    pub fn count(&self, channel: usize) -> usize {
        self.per_channel[channel].len() / self.dim()
    }

    pub fn patch(&self, channel: usize, i: usize) -> &[f32] {
        let d = self.dim();
        &self.per_channel[channel][i * d..(i + 1) * d]
    }
}

#[derive(Debug, Clone, Copy)]
pub enum PcaInput<'a> {
    AllData(&'a PatchSet),
    ForegroundBackground {
        foreground: &'a PatchSet,
        background: &'a PatchSet,
    },
}

/// Full eigendecomposition of one patch covariance.
#[derive(Debug, Clone)]
pub struct PcaBasis {
    pub mean: Vec<f64>,
    pub covariance: DMatrix<f64>,
    /// Descending.
    pub eigenvalues: Vec<f64>,
    /// Unit norm, sign-normalized, same order as `eigenvalues`.
    pub eigenvectors: Vec<Vec<f64>>,
}

/// Decomposes the covariance of `patches` (`n × dim`, row-major).
pub fn pca_basis(patches: &[f32], dim: usize) -> PcaBasis {
    let n = patches.len() / dim;
    let mut mean = vec![0.0f64; dim];
    for row in patches.chunks_exact(dim) {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += f64::from(v);
        }
    }
    for m in &mut mean {
        *m /= n.max(1) as f64;
    }
    let centered = DMatrix::from_fn(n, dim, |i, j| f64::from(patches[i * dim + j]) - mean[j]);
    let covariance = (centered.transpose() * &centered) / n.max(1) as f64;

    let eig = SymmetricEigen::new(covariance.clone());
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .expect("finite eigenvalues")
            .then(a.cmp(&b))
    });
    let eigenvalues = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let eigenvectors = order
        .iter()
        .map(|&i| {
            let mut v: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter_mut().for_each(|x| *x /= norm);
            if let Some(first) = v.iter().find(|x| x.abs() > 1e-12) {
                if *first < 0.0 {
                    v.iter_mut().for_each(|x| *x = -*x);
                }
            }
            v
        })
        .collect();
    PcaBasis {
        mean,
        covariance,
        eigenvalues,
        eigenvectors,
    }
}

fn channel_filters(set: &PatchSet, channel: usize, k: usize, prefix: &str) -> Result<Vec<Filter>> {
    let dim = set.dim();
    let needed = MIN_PATCHES_PER_DIM * dim;
    let have = set.count(channel);
    if have < needed {
        return Err(Error::Channel {
            channel,
            msg: format!("{have} {prefix} patches, need at least {needed}"),
        });
    }
    let basis = pca_basis(&set.per_channel[channel], dim);
    basis
        .eigenvectors
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, v)| {
            let w = v.iter().map(|&x| canonical(x, BANK_DIGITS)).collect();
            Filter::new(format!("pca-{prefix}-c{channel}-{i}"), set.patch_px, set.patch_px, w)
        })
        .collect()
}

/// Learns `k` filters per channel. For the foreground/background split,
/// `k / 2` come from the background set followed by `k / 2` from the
/// foreground set.
pub fn learn_pca(input: PcaInput<'_>, k: usize) -> Result<FilterBank> {
    let (patch_px, family) = match input {
        PcaInput::AllData(set) => (set.patch_px, Family::PcaAllData),
        PcaInput::ForegroundBackground {
            foreground,
            background,
        } => {
            if foreground.patch_px != background.patch_px {
                return Err(Error::invalid("foreground and background patch sizes differ"));
            }
            (foreground.patch_px, Family::PcaForeground)
        }
    };
    let dim = patch_px * patch_px;
    if k == 0 || k > dim {
        return Err(Error::invalid(format!("k = {k} outside 1..={dim}")));
    }
    let mut lists = Vec::with_capacity(NUM_CHANNELS);
    for c in 0..NUM_CHANNELS {
        let list = match input {
            PcaInput::AllData(set) => channel_filters(set, c, k, "all")?,
            PcaInput::ForegroundBackground {
                foreground,
                background,
            } => {
                if k % 2 != 0 {
                    return Err(Error::invalid("foreground/background split needs an even k"));
                }
                let mut l = channel_filters(background, c, k / 2, "bg")?;
                l.extend(channel_filters(foreground, c, k / 2, "fg")?);
                l
            }
        };
        lists.push(list);
    }
    FilterBank::new(family, 1, PCA_STRIDE_PX, FilterLists::PerChannel(lists))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    fn noise_set(n: usize, seed: u64) -> PatchSet {
        let mut rng = crate::rng::stream(seed, "pca-test", 0);
        let mut set = PatchSet::new(PCA_PATCH_PX);
        for c in 0..NUM_CHANNELS {
            set.per_channel[c] = (0..n * set.dim()).map(|_| rng.random::<f32>()).collect();
        }
        set
    }

    #[test]
    fn all_data_bank_has_forty_filters() {
        let set = noise_set(1000, 1);
        let bank = learn_pca(PcaInput::AllData(&set), 4).unwrap();
        assert_eq!(bank.num_filters(), 40);
        assert_eq!(bank.stride_px(), 2);
        assert!(bank.is_per_channel());
        assert_eq!(bank.family(), Family::PcaAllData);
    }

    #[test]
    fn split_bank_takes_half_from_each_set() {
        let fg = noise_set(1000, 2);
        let bg = noise_set(1000, 3);
        let bank = learn_pca(
            PcaInput::ForegroundBackground {
                foreground: &fg,
                background: &bg,
            },
            8,
        )
        .unwrap();
        assert_eq!(bank.num_filters(), 80);
        let ids: Vec<_> = bank.filters_for(3).iter().map(|f| f.id().to_string()).collect();
        assert!(ids[..4].iter().all(|i| i.starts_with("pca-bg-c3")));
        assert!(ids[4..].iter().all(|i| i.starts_with("pca-fg-c3")));
    }

    #[test]
    fn too_few_patches_names_the_channel() {
        let mut set = noise_set(1000, 4);
        let dim = set.dim();
        set.per_channel[7].truncate(999 * dim);
        match learn_pca(PcaInput::AllData(&set), 4) {
            Err(Error::Channel { channel, .. }) => assert_eq!(channel, 7),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rank_one_patches_recover_the_direction() {
        let mut rng = crate::rng::stream(5, "pca-test", 1);
        let dim = PCA_PATCH_PX * PCA_PATCH_PX;
        let base: Vec<f64> = (0..dim).map(|i| ((i * 37) % 11) as f64 / 11.0 - 0.4).collect();
        let mut set = PatchSet::new(PCA_PATCH_PX);
        for c in 0..NUM_CHANNELS {
            for _ in 0..1200 {
                let a: f64 = rng.random_range(-1.0..1.0);
                for &b in &base {
                    let noise: f64 = rng.random_range(-1e-3..1e-3);
                    set.per_channel[c].push((a * b + noise) as f32);
                }
            }
        }
        let bank = learn_pca(PcaInput::AllData(&set), 4).unwrap();
        let bnorm = base.iter().map(|x| x * x).sum::<f64>().sqrt();
        for c in 0..NUM_CHANNELS {
            let f = &bank.filters_for(c)[0];
            let dot: f64 = f.weights().iter().zip(&base).map(|(w, b)| w * b).sum::<f64>() / bnorm;
            assert!(dot.abs() > 0.99, "channel {c}: {dot}");
        }
    }
}
