//! Evaluation-split sampler: greedy category cover, quota-balanced fill, then
//! per-category patching.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::DatasetFile;
use crate::error::{Error, Result};

/// Depth bands of the sampler: near < 10 m, mid 10–35 m, far (35, 100] m,
/// super-far > 100 m (by GT center z).
pub const DEPTH_BAND_NAMES: [&str; 4] = ["near", "mid", "far", "super_far"];

pub fn sampler_depth_band(z: f64) -> usize {
    if z < 10.0 {
        0
    } else if z <= 35.0 {
        1
    } else if z <= 100.0 {
        2
    } else {
        3
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerTargets {
    /// Share of annotations per depth band, ordered as [`DEPTH_BAND_NAMES`].
    pub depth: [f64; 4],
    /// Share of images per source tag.
    pub source: BTreeMap<String, f64>,
    pub min_per_category: usize,
    /// Size of the split after the balanced fill.
    pub target_images: usize,
    pub depth_weight: f64,
    pub source_weight: f64,
}

impl Default for SamplerTargets {
    fn default() -> Self {
        Self {
            depth: [0.50, 0.25, 0.20, 0.05],
            source: [("COCO", 0.20), ("LVIS", 0.40), ("Objects365", 0.40)]
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
            min_per_category: 3,
            target_images: 1000,
            depth_weight: 1.0,
            source_weight: 1.0,
        }
    }
}

impl SamplerTargets {
    pub fn validate(&self) -> Result<()> {
        let d: f64 = self.depth.iter().sum();
        let s: f64 = self.source.values().sum();
        if (d - 1.0).abs() > 1e-9 || (s - 1.0).abs() > 1e-9 {
            return Err(Error::Format(format!("quotas must sum to 1 (depth {d}, source {s})")));
        }
        if self.depth.iter().chain(self.source.values()).any(|q| *q < 0.0) {
            return Err(Error::Format("quotas must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleResult {
    /// Selected image ids in selection order.
    pub images: Vec<u64>,
    pub cover_count: usize,
    pub fill_count: usize,
    pub patch_count: usize,
    /// Categories with fewer than `min_per_category` images in the whole pool.
    pub rare_categories: Vec<String>,
    pub category_coverage: f64,
    pub source_proportions: BTreeMap<String, f64>,
    pub depth_proportions: [f64; 4],
}

struct ImageStats {
    id: u64,
    categories: Vec<usize>,
    source: usize,
    bands: [usize; 4],
}

struct Balance {
    bands: [usize; 4],
    band_total: usize,
    sources: Vec<usize>,
    images: usize,
}

impl Balance {
    fn deviation(&self, add: Option<&ImageStats>, targets: &[f64; 4], source_targets: &[f64], t: &SamplerTargets) -> f64 {
        let mut bands = self.bands;
        let mut band_total = self.band_total;
        let mut images = self.images;
        let extra_source = add.map(|a| a.source);
        if let Some(a) = add {
            for k in 0..4 {
                bands[k] += a.bands[k];
            }
            band_total += a.bands.iter().sum::<usize>();
            images += 1;
        }
        let mut dev = 0.0;
        if band_total > 0 {
            for k in 0..4 {
                dev += t.depth_weight * (bands[k] as f64 / band_total as f64 - targets[k]).abs();
            }
        }
        if images > 0 {
            for (s, &target) in source_targets.iter().enumerate() {
                let n = self.sources[s] + usize::from(extra_source == Some(s));
                dev += t.source_weight * (n as f64 / images as f64 - target).abs();
            }
        }
        dev
    }

    fn add(&mut self, a: &ImageStats) {
        for k in 0..4 {
            self.bands[k] += a.bands[k];
        }
        self.band_total += a.bands.iter().sum::<usize>();
        self.sources[a.source] += 1;
        self.images += 1;
    }
}

/// Builds an evaluation split. Deterministic given `seed`: ties at every greedy
/// step go to the image ranked first by a seeded shuffle.
pub fn sample_eval_split(d: &DatasetFile, targets: &SamplerTargets, seed: u64) -> Result<SampleResult> {
    targets.validate()?;
    if d.images.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let categories: Vec<&str> = d.categories().into_iter().collect();
    let cat_index: BTreeMap<&str, usize> = categories.iter().enumerate().map(|(i, c)| (*c, i)).collect();
    // source slots: one per target source, then one catch-all
    let source_names: Vec<&String> = targets.source.keys().collect();
    let other = source_names.len();
    let mut source_targets: Vec<f64> = targets.source.values().copied().collect();
    source_targets.push(0.0);

    let by_image = d.by_image();
    let mut images: Vec<ImageStats> = d
        .images
        .iter()
        .map(|im| {
            let anns = by_image.get(&im.id).map(Vec::as_slice).unwrap_or(&[]);
            let cats: BTreeSet<usize> = anns.iter().map(|a| cat_index[a.category.as_str()]).collect();
            let mut bands = [0; 4];
            for a in anns {
                if let (false, Some(c)) = (a.ignore3d, a.center) {
                    bands[sampler_depth_band(c[2])] += 1;
                }
            }
            let source = im
                .source
                .as_ref()
                .and_then(|s| source_names.iter().position(|n| *n == s))
                .unwrap_or(other);
            ImageStats {
                id: im.id,
                categories: cats.into_iter().collect(),
                source,
                bands,
            }
        })
        .collect();
    images.sort_by_key(|s| s.id);
    let mut order: Vec<usize> = (0..images.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let mut pool_count = vec![0usize; categories.len()];
    for im in &images {
        for &c in &im.categories {
            pool_count[c] += 1;
        }
    }

    let mut selected = vec![false; images.len()];
    let mut picked: Vec<usize> = Vec::new();
    let mut count = vec![0usize; categories.len()];
    let mut balance = Balance {
        bands: [0; 4],
        band_total: 0,
        sources: vec![0; source_targets.len()],
        images: 0,
    };
    let mut take = |i: usize, selected: &mut Vec<bool>, count: &mut Vec<usize>, balance: &mut Balance| {
        selected[i] = true;
        picked.push(i);
        for &c in &images[i].categories {
            count[c] += 1;
        }
        balance.add(&images[i]);
    };

    // phase 1: greedy set cover
    let mut covered = vec![false; categories.len()];
    loop {
        let mut best: Option<(usize, usize)> = None;
        for &i in &order {
            if selected[i] {
                continue;
            }
            let gain = images[i].categories.iter().filter(|&&c| !covered[c]).count();
            if gain > 0 && best.is_none_or(|(g, _)| gain > g) {
                best = Some((gain, i));
            }
        }
        let Some((_, i)) = best else { break };
        for &c in &images[i].categories {
            covered[c] = true;
        }
        take(i, &mut selected, &mut count, &mut balance);
    }
    let cover_count = balance.images;

    // phase 2: balanced fill
    while balance.images < targets.target_images.min(images.len()) {
        let mut best: Option<(f64, usize)> = None;
        for &i in &order {
            if selected[i] {
                continue;
            }
            let dev = balance.deviation(Some(&images[i]), &targets.depth, &source_targets, targets);
            if best.is_none_or(|(b, _)| dev < b) {
                best = Some((dev, i));
            }
        }
        let Some((_, i)) = best else { break };
        take(i, &mut selected, &mut count, &mut balance);
    }
    let fill_count = balance.images - cover_count;

    // phase 3: patch categories below the minimum; rare ones are only flagged
    let mut rare = Vec::new();
    for c in 0..categories.len() {
        if pool_count[c] < targets.min_per_category {
            rare.push(categories[c].to_string());
            continue;
        }
        while count[c] < targets.min_per_category {
            let mut best: Option<(f64, usize)> = None;
            for &i in &order {
                if selected[i] || !images[i].categories.contains(&c) {
                    continue;
                }
                let dev = balance.deviation(Some(&images[i]), &targets.depth, &source_targets, targets);
                if best.is_none_or(|(b, _)| dev < b) {
                    best = Some((dev, i));
                }
            }
            let Some((_, i)) = best else { break };
            take(i, &mut selected, &mut count, &mut balance);
        }
    }
    let patch_count = balance.images - cover_count - fill_count;

    let n = balance.images.max(1) as f64;
    let mut source_proportions: BTreeMap<String, f64> = source_names
        .iter()
        .enumerate()
        .map(|(k, s)| ((*s).clone(), balance.sources[k] as f64 / n))
        .collect();
    if balance.sources[other] > 0 {
        source_proportions.insert("other".into(), balance.sources[other] as f64 / n);
    }
    let bt = balance.band_total.max(1) as f64;
    let covered_n = count.iter().filter(|&&k| k > 0).count();
    Ok(SampleResult {
        images: picked.iter().map(|&i| images[i].id).collect(),
        cover_count,
        fill_count,
        patch_count,
        rare_categories: rare,
        category_coverage: covered_n as f64 / categories.len().max(1) as f64,
        source_proportions,
        depth_proportions: balance.bands.map(|b| b as f64 / bt),
    })
}
