//! Rule-based detection of ambiguous text layouts in ground-truth
//! annotations: lines with large character spacing and juxtaposed line
//! pairs (edge-aligned lines whose characters share a scale).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{AxisAlignedBox, ConvexPolygon};
use crate::model::ImageRecord;
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AmbiguityConfig {
    pub spacing_ratio_thr: f64,
    pub alignment_ratio_thr: f64,
    pub scale_band: (f64, f64),
}

impl Default for AmbiguityConfig {
    fn default() -> Self {
        Self {
            spacing_ratio_thr: 2.0,
            alignment_ratio_thr: 0.1,
            scale_band: (0.9, 10.0 / 9.0),
        }
    }
}

impl AmbiguityConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.spacing_ratio_thr.is_nan() || self.spacing_ratio_thr <= 0.0 {
            return Err("spacing_ratio_thr must be > 0".into());
        }
        if self.alignment_ratio_thr.is_nan() || self.alignment_ratio_thr <= 0.0 {
            return Err("alignment_ratio_thr must be > 0".into());
        }
        let (lo, hi) = self.scale_band;
        if !(lo < 1.0 && 1.0 < hi) {
            return Err("scale_band must satisfy lower < 1 < upper".into());
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum AmbiguityError {
    #[error("requested {requested} ambiguous images but only {available} are available")]
    InsufficientAmbiguous { requested: usize, available: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageAmbiguityFlags {
    pub image_id: String,
    pub lines_large_spacing: Vec<usize>,
    pub juxtaposed_pairs: Vec<(usize, usize)>,
    pub is_ambiguous: bool,
}

/// Sum of nearest-neighbour center distances over the sum of character
/// scales. `None` with fewer than two characters.
pub fn spacing_ratio(chars: &[AxisAlignedBox]) -> Option<f64> {
    if chars.len() < 2 {
        return None;
    }
    let centers: Vec<_> = chars.iter().map(|c| c.center()).collect();
    let nearest: f64 = centers
        .iter()
        .enumerate()
        .map(|(j, cj)| {
            centers
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != j)
                .map(|(_, ck)| cj.distance(ck))
                .fold(f64::INFINITY, f64::min)
        })
        .sum();
    let scales: f64 = chars.iter().map(|c| c.scale()).sum();
    if scales <= 0.0 {
        return None;
    }
    Some(nearest / scales)
}

pub fn has_large_spacing(chars: &[AxisAlignedBox], cfg: &AmbiguityConfig) -> bool {
    spacing_ratio(chars).is_some_and(|r| r > cfg.spacing_ratio_thr)
}

/// A text line as the juxtaposition rule sees it.
#[derive(Debug, Clone, Copy)]
pub struct LineView<'a> {
    pub polygon: &'a ConvexPolygon,
    pub chars: &'a [AxisAlignedBox],
}

fn edge_gap(a: &AxisAlignedBox, b: &AxisAlignedBox) -> f64 {
    [
        (a.y_min - b.y_min).abs(),
        (a.y_max - b.y_max).abs(),
        (a.x_min - b.x_min).abs(),
        (a.x_max - b.x_max).abs(),
    ]
    .into_iter()
    .fold(f64::INFINITY, f64::min)
}

fn scale_sum(chars: &[AxisAlignedBox]) -> f64 {
    chars.iter().map(|c| c.scale()).sum()
}

/// Alignment measured against `reference`'s characters.
fn aligned(reference: &LineView, other: &LineView, cfg: &AmbiguityConfig) -> bool {
    let denom = scale_sum(reference.chars);
    if denom <= 0.0 {
        return false;
    }
    let gap = edge_gap(
        &reference.polygon.external_rect(),
        &other.polygon.external_rect(),
    );
    reference.chars.len() as f64 * gap / denom < cfg.alignment_ratio_thr
}

fn similar_scale(i: &LineView, j: &LineView, cfg: &AmbiguityConfig) -> bool {
    let si = scale_sum(i.chars);
    let sj = scale_sum(j.chars);
    let denom = i.chars.len() as f64 * sj;
    if denom <= 0.0 {
        return false;
    }
    let ratio = j.chars.len() as f64 * si / denom;
    cfg.scale_band.0 <= ratio && ratio <= cfg.scale_band.1
}

/// True when either ordering of the pair satisfies both the alignment and
/// the scale-similarity rule.
pub fn are_juxtaposed(a: &LineView, b: &LineView, cfg: &AmbiguityConfig) -> bool {
    if a.chars.is_empty() || b.chars.is_empty() {
        return false;
    }
    let ordered = |i: &LineView, j: &LineView| aligned(i, j, cfg) && similar_scale(i, j, cfg);
    ordered(a, b) || ordered(b, a)
}

pub fn classify_image(rec: &ImageRecord, cfg: &AmbiguityConfig) -> ImageAmbiguityFlags {
    let grouped = rec.chars_by_line();
    let active: Vec<usize> = (0..rec.gt_lines.len())
        .filter(|&i| !rec.gt_lines[i].ignore)
        .collect();
    let lines_large_spacing: Vec<usize> = active
        .iter()
        .copied()
        .filter(|&i| has_large_spacing(&grouped[i], cfg))
        .collect();
    let view = |i: usize| LineView {
        polygon: &rec.gt_lines[i].polygon,
        chars: &grouped[i],
    };
    let mut juxtaposed_pairs = Vec::new();
    for (n, &i) in active.iter().enumerate() {
        for &j in &active[n + 1..] {
            if are_juxtaposed(&view(i), &view(j), cfg) {
                juxtaposed_pairs.push((i, j));
            }
        }
    }
    let is_ambiguous = !lines_large_spacing.is_empty() || !juxtaposed_pairs.is_empty();
    ImageAmbiguityFlags {
        image_id: rec.image_id.clone(),
        lines_large_spacing,
        juxtaposed_pairs,
        is_ambiguous,
    }
}

/// Line counts per ambiguity type across a dataset.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineCounts {
    pub large_spacing: usize,
    pub juxtaposed: usize,
    pub union: usize,
    pub total: usize,
}

impl std::ops::Add for LineCounts {
    type Output = LineCounts;
    fn add(self, o: LineCounts) -> LineCounts {
        LineCounts {
            large_spacing: self.large_spacing + o.large_spacing,
            juxtaposed: self.juxtaposed + o.juxtaposed,
            union: self.union + o.union,
            total: self.total + o.total,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsRow {
    #[serde(rename = "type")]
    pub kind: String,
    pub count: usize,
    /// Percentage of all lines; absent on the total row.
    pub proportion: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub counts: LineCounts,
    pub ambiguous_images: usize,
    pub total_images: usize,
    pub rows: Vec<StatsRow>,
}

fn line_counts(rec: &ImageRecord, flags: &ImageAmbiguityFlags) -> LineCounts {
    let mut spaced = vec![false; rec.gt_lines.len()];
    let mut juxt = vec![false; rec.gt_lines.len()];
    for &i in &flags.lines_large_spacing {
        spaced[i] = true;
    }
    for &(i, j) in &flags.juxtaposed_pairs {
        juxt[i] = true;
        juxt[j] = true;
    }
    let mut c = LineCounts::default();
    for i in (0..rec.gt_lines.len()).filter(|&i| !rec.gt_lines[i].ignore) {
        c.total += 1;
        c.large_spacing += spaced[i] as usize;
        c.juxtaposed += juxt[i] as usize;
        c.union += (spaced[i] || juxt[i]) as usize;
    }
    c
}

/// Counts of flagged lines (ignored lines excluded) with percentages.
pub fn dataset_stats(dataset: &[ImageRecord], cfg: &AmbiguityConfig) -> DatasetStats {
    let per_image = par::map(dataset, |rec| {
        let flags = classify_image(rec, cfg);
        (line_counts(rec, &flags), flags.is_ambiguous)
    });
    let counts = per_image
        .iter()
        .fold(LineCounts::default(), |acc, (c, _)| acc + *c);
    let ambiguous_images = per_image.iter().filter(|(_, a)| *a).count();
    let pct = |n: usize| {
        if counts.total == 0 {
            0.0
        } else {
            100.0 * n as f64 / counts.total as f64
        }
    };
    let rows = vec![
        StatsRow {
            kind: "large_character_spacing".into(),
            count: counts.large_spacing,
            proportion: Some(pct(counts.large_spacing)),
        },
        StatsRow {
            kind: "juxtaposed_text_lines".into(),
            count: counts.juxtaposed,
            proportion: Some(pct(counts.juxtaposed)),
        },
        StatsRow {
            kind: "union".into(),
            count: counts.union,
            proportion: Some(pct(counts.union)),
        },
        StatsRow {
            kind: "all".into(),
            count: counts.total,
            proportion: None,
        },
    ];
    DatasetStats {
        counts,
        ambiguous_images,
        total_images: dataset.len(),
        rows,
    }
}

/// Uniformly samples `n` ambiguous image ids without replacement; sorted.
pub fn curate(
    dataset: &[ImageRecord],
    n: usize,
    seed: u64,
    cfg: &AmbiguityConfig,
) -> Result<Vec<String>, AmbiguityError> {
    let flags = par::map(dataset, |rec| classify_image(rec, cfg).is_ambiguous);
    let ambiguous: Vec<&str> = dataset
        .iter()
        .zip(flags)
        .filter(|(_, a)| *a)
        .map(|(r, _)| r.image_id.as_str())
        .collect();
    if ambiguous.len() < n {
        return Err(AmbiguityError::InsufficientAmbiguous {
            requested: n,
            available: ambiguous.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<String> = rand::seq::index::sample(&mut rng, ambiguous.len(), n)
        .into_iter()
        .map(|i| ambiguous[i].to_string())
        .collect();
    picked.sort();
    Ok(picked)
}
