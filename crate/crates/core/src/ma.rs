//! Match-assemble recognition: bind character detections to a candidate
//! line by overlap ratio, order them along the line's dominant axis and
//! concatenate their labels.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::geom::ConvexPolygon;
use crate::model::CharDetection;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchConfig {
    /// A character belongs to a line when overlap / character area exceeds this.
    pub thr_match: f64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self { thr_match: 0.3 }
    }
}

/// Indices (input order) of the characters whose box lies inside `line` by
/// more than `thr_match` of its own area.
pub fn match_chars(line: &ConvexPolygon, chars: &[CharDetection], cfg: &MatchConfig) -> Vec<usize> {
    chars
        .iter()
        .enumerate()
        .filter_map(|(i, c)| {
            let area = c.bbox.area();
            if area <= 0.0 {
                log::warn!("skipping degenerate character box #{i} ({:?})", c.label);
                return None;
            }
            let ratio = line.intersection_area_with_box(&c.bbox) / area;
            (ratio > cfg.thr_match).then_some(i)
        })
        .collect()
}

/// Orders `matched` left-to-right for wide lines and top-down otherwise.
/// A square external rectangle reads top-down.
pub fn assemble(line: &ConvexPolygon, matched: &[&CharDetection]) -> String {
    let rect = line.external_rect();
    let horizontal = rect.width() > rect.height();
    let key = |c: &CharDetection| {
        let p = c.bbox.center();
        if horizontal {
            p.x
        } else {
            p.y
        }
    };
    let mut order: Vec<usize> = (0..matched.len()).collect();
    order.sort_by(|&a, &b| {
        key(matched[a])
            .partial_cmp(&key(matched[b]))
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    order.into_iter().map(|i| matched[i].label).collect()
}

pub fn recognize_line(line: &ConvexPolygon, chars: &[CharDetection], cfg: &MatchConfig) -> String {
    let matched: Vec<&CharDetection> = match_chars(line, chars, cfg)
        .into_iter()
        .map(|i| &chars[i])
        .collect();
    assemble(line, &matched)
}
