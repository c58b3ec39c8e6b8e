//! Per-image spotting: loose candidate filtering, match-assemble
//! recognition, linguistic re-scoring, score fusion and final selection.

use serde::{Deserialize, Serialize};

use crate::geom::nms;
use crate::lm::NgramModel;
use crate::ma::{recognize_line, MatchConfig};
use crate::model::{DetectionBundle, LineCandidate, SpottedLine};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub thr_score: f64,
    pub thr_nms: f64,
    pub lambda: f64,
    pub final_nms: f64,
    pub final_score_thr: f64,
    pub use_lm: bool,
    pub thr_match: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            thr_score: 0.01,
            thr_nms: 0.9,
            lambda: 0.7,
            final_nms: 0.1,
            final_score_thr: 0.6,
            use_lm: true,
            thr_match: MatchConfig::default().thr_match,
        }
    }
}

impl PipelineConfig {
    /// Weight on the visual score actually applied; 1 when the language model is off.
    pub fn effective_lambda(&self) -> f64 {
        if self.use_lm {
            self.lambda
        } else {
            1.0
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let fields = [
            ("thr_score", self.thr_score),
            ("thr_nms", self.thr_nms),
            ("lambda", self.lambda),
            ("final_nms", self.final_nms),
            ("final_score_thr", self.final_score_thr),
            ("thr_match", self.thr_match),
        ];
        for (name, v) in fields {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("{name} = {v} is outside [0, 1]"));
            }
        }
        Ok(())
    }
}

/// Drops low-scoring candidates, then applies the loose NMS. Survivors keep
/// their relative order.
pub fn filter_candidates(lines: &[LineCandidate], cfg: &PipelineConfig) -> Vec<LineCandidate> {
    let survivors: Vec<&LineCandidate> = lines
        .iter()
        .filter(|l| l.visual_score >= cfg.thr_score)
        .collect();
    let items: Vec<_> = survivors
        .iter()
        .map(|l| (&l.polygon, l.visual_score))
        .collect();
    nms(&items, cfg.thr_nms)
        .into_iter()
        .map(|i| survivors[i].clone())
        .collect()
}

/// Convex combination of visual and linguistic scores.
pub fn fuse_scores(s_vis: f64, s_lin: f64, lambda: f64) -> f64 {
    lambda * s_vis + (1.0 - lambda) * s_lin
}

/// Runs the full pipeline on one image. `model` may be `None` only when
/// `cfg.use_lm` is false. Output is sorted by fused score, highest first.
pub fn spot_image(
    bundle: &DetectionBundle,
    model: Option<&NgramModel>,
    cfg: &PipelineConfig,
) -> Vec<SpottedLine> {
    let candidates = filter_candidates(&bundle.lines, cfg);
    let match_cfg = MatchConfig {
        thr_match: cfg.thr_match,
    };
    let lambda = cfg.effective_lambda();
    let model = if cfg.use_lm { model } else { None };
    let scored: Vec<SpottedLine> = par::map(&candidates, |c| {
        let transcript = recognize_line(&c.polygon, &bundle.chars, &match_cfg);
        let s_lin = model.map_or(0.0, |m| m.score(&transcript));
        SpottedLine {
            polygon: c.polygon.clone(),
            final_score: fuse_scores(c.visual_score, s_lin, lambda),
            transcript,
            visual_score: c.visual_score,
            linguistic_score: s_lin,
        }
    });
    let items: Vec<_> = scored.iter().map(|s| (&s.polygon, s.final_score)).collect();
    let mut kept: Vec<SpottedLine> = nms(&items, cfg.final_nms)
        .into_iter()
        .map(|i| &scored[i])
        .filter(|s| s.final_score >= cfg.final_score_thr)
        .cloned()
        .collect();
    // Stable: equal scores keep candidate order.
    kept.sort_by(|a, b| b.final_score.total_cmp(&a.final_score));
    kept
}

/// Turns spotted lines back into candidates scored by their fused score.
pub fn as_candidates(lines: &[SpottedLine]) -> Vec<LineCandidate> {
    lines
        .iter()
        .enumerate()
        .map(|(i, l)| LineCandidate {
            id: i as i64,
            polygon: l.polygon.clone(),
            visual_score: l.final_score,
        })
        .collect()
}
