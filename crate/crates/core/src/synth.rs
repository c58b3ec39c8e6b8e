//! Deterministic synthetic scenes with ground truth and simulated detector
//! output.
//!
//! Randomness comes from `ChaCha8Rng` seeded with the scene seed; Gaussian
//! draws use `rand_distr::StandardNormal` scaled by the configured sigma and
//! are always drawn, even at sigma 0, so the stream layout never depends on
//! the noise levels. Dataset scenes use `seed_i = splitmix64(master ^ i)`.

use std::path::PathBuf;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{AxisAlignedBox, ConvexPolygon, Point};
use crate::model::{
    CharDetection, DetectionBundle, GroundTruthChar, GroundTruthLine, ImageRecord, LineCandidate,
};
use crate::par;

/// Mean visual score of every simulated line candidate.
pub const BASE_LINE_SCORE: f64 = 0.85;
/// Mean confidence of simulated character detections.
pub const BASE_CHAR_SCORE: f64 = 0.9;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("{cols} characters per line requested but the longest corpus line has {longest}")]
    ColsExceedCorpus { cols: usize, longest: usize },
    #[error("invalid scene config: {0}")]
    InvalidConfig(String),
    #[error("dataset must contain at least one scene")]
    EmptyDataset,
    #[error("corpus is empty")]
    EmptyCorpus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneKind {
    /// rows x cols characters; rows are the true lines, columns a plausible misreading.
    Grid,
    /// One line whose character spacing exceeds twice the character scale.
    SpacedLine,
    /// One tightly set line.
    PlainLine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CorpusSource {
    Builtin { lines: usize, seed: u64 },
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub kind: SceneKind,
    pub rows: usize,
    pub cols: usize,
    pub char_size: f64,
    pub h_gap: f64,
    pub v_gap: f64,
    pub jitter_sigma: f64,
    pub label_noise_rate: f64,
    pub score_noise_sigma: f64,
    pub ambiguous_candidates: bool,
    pub corpus: CorpusSource,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            kind: SceneKind::Grid,
            rows: 3,
            cols: 4,
            char_size: 32.0,
            h_gap: 12.0,
            v_gap: 12.0,
            jitter_sigma: 1.0,
            label_noise_rate: 0.05,
            score_noise_sigma: 0.05,
            ambiguous_candidates: true,
            corpus: CorpusSource::Builtin {
                lines: 20_000,
                seed: 7,
            },
            seed: 0,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidConfig(m.to_string()));
        if self.rows < 1 || self.cols < 1 {
            return bad("rows and cols must be >= 1");
        }
        if !(self.char_size > 0.0 && self.char_size.is_finite()) {
            return bad("char_size must be > 0");
        }
        if !(self.h_gap >= 0.0 && self.v_gap >= 0.0) {
            return bad("gaps must be >= 0");
        }
        if !(0.0..=1.0).contains(&self.label_noise_rate) {
            return bad("label_noise_rate must be in [0, 1]");
        }
        if !(self.jitter_sigma >= 0.0 && self.score_noise_sigma >= 0.0) {
            return bad("sigmas must be >= 0");
        }
        Ok(())
    }
}

/// Transcript lines plus their sorted character inventory.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    lines: Vec<String>,
    lengths: Vec<usize>,
    alphabet: Vec<char>,
}

impl Corpus {
    pub fn from_lines(lines: Vec<String>) -> Result<Self, SynthError> {
        let lines: Vec<String> = lines.into_iter().filter(|l| !l.is_empty()).collect();
        if lines.is_empty() {
            return Err(SynthError::EmptyCorpus);
        }
        let mut alphabet: Vec<char> = lines.iter().flat_map(|l| l.chars()).collect();
        alphabet.sort_unstable();
        alphabet.dedup();
        let lengths = lines.iter().map(|l| l.chars().count()).collect();
        Ok(Self {
            lines,
            lengths,
            alphabet,
        })
    }

    /// A seeded pseudo-language: a fixed lexicon of short words over a
    /// 48-character inventory, with sentences of 2 to 6 words written
    /// without separators. Word frequencies fall off as 1 / rank.
    pub fn builtin(n_lines: usize, seed: u64) -> Self {
        const INVENTORY: &str = "的一是在不了有和人这中大为上个国我以要他时来用们生到作地于出就分对成会可主发年动同工也能下过子说产种面而方后多定行学法所民得经";
        let inventory: Vec<char> = INVENTORY.chars().take(48).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lexicon: Vec<String> = (0..160)
            .map(|_| {
                let len = rng.random_range(2..=4);
                (0..len)
                    .map(|_| *inventory.choose(&mut rng).expect("non-empty"))
                    .collect()
            })
            .collect();
        let weights: Vec<f64> = (1..=lexicon.len()).map(|r| 1.0 / r as f64).collect();
        let total: f64 = weights.iter().sum();
        let pick = |rng: &mut ChaCha8Rng| {
            let mut u = rng.random::<f64>() * total;
            for (w, word) in weights.iter().zip(&lexicon) {
                if u < *w {
                    return word.as_str();
                }
                u -= w;
            }
            lexicon.last().expect("non-empty").as_str()
        };
        let lines = (0..n_lines.max(1))
            .map(|_| {
                let words = rng.random_range(2..=6);
                (0..words).map(|_| pick(&mut rng)).collect::<String>()
            })
            .collect();
        Self::from_lines(lines).expect("generated lines are non-empty")
    }

    pub fn lines(&self) -> &[String] {
        &self.lines
    }

    pub fn alphabet(&self) -> &[char] {
        &self.alphabet
    }

    pub fn longest(&self) -> usize {
        self.lengths.iter().copied().max().unwrap_or(0)
    }
}

/// 64-bit finalizer used to derive per-scene seeds.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, index: u64) -> u64 {
    splitmix64(master ^ index)
}

struct Noise {
    rng: ChaCha8Rng,
}

impl Noise {
    fn gaussian(&mut self, sigma: f64) -> f64 {
        let z: f64 = self.rng.sample(StandardNormal);
        z * sigma
    }

    fn score(&mut self, base: f64, sigma: f64) -> f64 {
        (base + self.gaussian(sigma)).clamp(0.0, 1.0)
    }
}

fn rect_polygon(b: &AxisAlignedBox) -> ConvexPolygon {
    b.to_polygon().expect("synthetic boxes have positive size")
}

/// Generates one scene. The same config (including seed) always yields the same output.
pub fn gen_scene(
    cfg: &SceneConfig,
    corpus: &Corpus,
    image_id: &str,
) -> Result<(ImageRecord, DetectionBundle), SynthError> {
    cfg.validate()?;
    let longest = corpus.longest();
    if cfg.cols > longest {
        return Err(SynthError::ColsExceedCorpus {
            cols: cfg.cols,
            longest,
        });
    }
    let mut noise = Noise {
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
    };
    let rows = match cfg.kind {
        SceneKind::Grid => cfg.rows,
        SceneKind::SpacedLine | SceneKind::PlainLine => 1,
    };
    let h_gap = match cfg.kind {
        // spacing ratio is (size + gap) / size, so gap > size puts it above 2
        SceneKind::SpacedLine if cfg.h_gap <= cfg.char_size => 1.5 * cfg.char_size,
        _ => cfg.h_gap,
    };

    let eligible: Vec<&String> = corpus
        .lines
        .iter()
        .zip(&corpus.lengths)
        .filter(|(_, &n)| n >= cfg.cols)
        .map(|(l, _)| l)
        .collect();
    let texts: Vec<Vec<char>> =
        rand::seq::index::sample(&mut noise.rng, eligible.len(), rows.min(eligible.len()))
            .into_iter()
            .chain(std::iter::repeat(0))
            .take(rows)
            .map(|i| eligible[i].chars().take(cfg.cols).collect())
            .collect();

    let size = cfg.char_size;
    let margin = size;
    let pitch_x = size + h_gap;
    let pitch_y = size + cfg.v_gap;
    let cell = |r: usize, c: usize| {
        let x = margin + c as f64 * pitch_x;
        let y = margin + r as f64 * pitch_y;
        AxisAlignedBox::new(x, y, x + size, y + size).expect("finite")
    };
    let span = |cells: &mut dyn Iterator<Item = AxisAlignedBox>| {
        let first = cells.next().expect("at least one cell");
        cells.fold(first, |acc, b| acc.union(&b))
    };

    let mut gt_lines = Vec::with_capacity(rows);
    let mut gt_chars = Vec::with_capacity(rows * cfg.cols);
    for (r, text) in texts.iter().enumerate() {
        let row_box = span(&mut (0..cfg.cols).map(|c| cell(r, c)));
        gt_lines.push(GroundTruthLine {
            polygon: rect_polygon(&row_box),
            transcript: text.iter().collect(),
            ignore: false,
        });
        for (c, &label) in text.iter().enumerate() {
            gt_chars.push(GroundTruthChar {
                bbox: cell(r, c),
                label,
                line_index: r,
            });
        }
    }

    let mut chars = Vec::with_capacity(gt_chars.len());
    for g in &gt_chars {
        let center = g.bbox.center();
        let jittered = Point::new(
            center.x + noise.gaussian(cfg.jitter_sigma),
            center.y + noise.gaussian(cfg.jitter_sigma),
        );
        let flip = noise.rng.random::<f64>() < cfg.label_noise_rate;
        let replacement = *corpus
            .alphabet()
            .choose(&mut noise.rng)
            .expect("non-empty alphabet");
        chars.push(CharDetection {
            bbox: AxisAlignedBox::from_center(jittered, size, size).expect("finite"),
            label: if flip { replacement } else { g.label },
            score: noise.score(BASE_CHAR_SCORE, cfg.score_noise_sigma),
        });
    }

    let mut boxes: Vec<AxisAlignedBox> = (0..rows)
        .map(|r| span(&mut (0..cfg.cols).map(|c| cell(r, c))))
        .collect();
    if cfg.ambiguous_candidates {
        match cfg.kind {
            SceneKind::Grid => {
                boxes.extend((0..cfg.cols).map(|c| span(&mut (0..rows).map(|r| cell(r, c)))));
                boxes.push(span(
                    &mut (0..rows)
                        .flat_map(|r| (0..cfg.cols).map(move |c| (r, c)))
                        .map(|(r, c)| cell(r, c)),
                ));
            }
            SceneKind::SpacedLine => {
                boxes.extend((0..cfg.cols).map(|c| cell(0, c)));
                if cfg.cols > 2 {
                    boxes.extend(
                        (0..cfg.cols)
                            .step_by(2)
                            .map(|c| span(&mut (c..(c + 2).min(cfg.cols)).map(|k| cell(0, k)))),
                    );
                }
            }
            SceneKind::PlainLine => {}
        }
    }
    let lines = boxes
        .iter()
        .enumerate()
        .map(|(id, b)| LineCandidate {
            id: id as i64,
            polygon: rect_polygon(b),
            visual_score: noise.score(BASE_LINE_SCORE, cfg.score_noise_sigma),
        })
        .collect();

    let extent = span(&mut (0..rows).flat_map(|r| [cell(r, 0), cell(r, cfg.cols - 1)]));
    let record = ImageRecord {
        image_id: image_id.to_string(),
        width: extent.x_max + margin,
        height: extent.y_max + margin,
        gt_lines,
        gt_chars,
    };
    let bundle = DetectionBundle {
        image_id: image_id.to_string(),
        chars,
        lines,
    };
    Ok((record, bundle))
}

pub fn scene_id(index: usize) -> String {
    format!("scene_{index:06}")
}

/// `n` scenes from `template`, scene `i` seeded with `derive_seed(seed, i)`.
pub fn gen_dataset(
    n: usize,
    template: &SceneConfig,
    seed: u64,
    corpus: &Corpus,
) -> Result<Vec<(ImageRecord, DetectionBundle)>, SynthError> {
    if n == 0 {
        return Err(SynthError::EmptyDataset);
    }
    template.validate()?;
    par::map_range(n, |i| {
        let cfg = SceneConfig {
            seed: derive_seed(seed, i as u64),
            ..template.clone()
        };
        gen_scene(&cfg, corpus, &scene_id(i))
    })
    .into_iter()
    .collect()
}
