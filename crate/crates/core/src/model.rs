//! Record types shared across the pipeline.

use std::collections::HashSet;

use thiserror::Error;

use crate::geom::{AxisAlignedBox, ConvexPolygon, GeomError};

/// Scores this close outside `[0, 1]` are clamped instead of rejected.
pub const SCORE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValidationError {
    #[error("{path}: invalid geometry: {source}")]
    InvalidGeometry {
        path: String,
        #[source]
        source: GeomError,
    },
    #[error("{path}: score {value} outside [0, 1]")]
    InvalidScore { path: String, value: f64 },
    #[error("{path}: duplicate id {id}")]
    DuplicateId { path: String, id: i64 },
    #[error("{path}: label must be exactly one character, got {label:?}")]
    InvalidLabel { path: String, label: String },
    #[error("{path}: line index {index} out of range ({count} lines)")]
    LineIndexOutOfRange {
        path: String,
        index: usize,
        count: usize,
    },
    #[error("{path}: empty transcript on a line that is not ignored")]
    EmptyTranscript { path: String },
}

/// One recognized character: box, top-1 label and confidence.
#[derive(Debug, Clone, PartialEq)]
pub struct CharDetection {
    pub bbox: AxisAlignedBox,
    pub label: char,
    pub score: f64,
}

/// A proposed text line with its detector confidence.
#[derive(Debug, Clone, PartialEq)]
pub struct LineCandidate {
    pub id: i64,
    pub polygon: ConvexPolygon,
    pub visual_score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpottedLine {
    pub polygon: ConvexPolygon,
    pub transcript: String,
    pub visual_score: f64,
    pub linguistic_score: f64,
    pub final_score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthLine {
    pub polygon: ConvexPolygon,
    pub transcript: String,
    pub ignore: bool,
}

/// A character annotation tied to the line it belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthChar {
    pub bbox: AxisAlignedBox,
    pub label: char,
    pub line_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord {
    pub image_id: String,
    pub width: f64,
    pub height: f64,
    pub gt_lines: Vec<GroundTruthLine>,
    pub gt_chars: Vec<GroundTruthChar>,
}

impl ImageRecord {
    /// Character boxes grouped by parent line, in annotation order.
    pub fn chars_by_line(&self) -> Vec<Vec<AxisAlignedBox>> {
        let mut grouped = vec![Vec::new(); self.gt_lines.len()];
        for c in &self.gt_chars {
            if let Some(group) = grouped.get_mut(c.line_index) {
                group.push(c.bbox);
            }
        }
        grouped
    }

    /// Checks line indices and transcripts; out-of-image geometry only warns.
    pub fn validate(&self) -> Result<(), ValidationError> {
        for (i, line) in self.gt_lines.iter().enumerate() {
            if line.transcript.is_empty() && !line.ignore {
                return Err(ValidationError::EmptyTranscript {
                    path: format!("{}.lines[{i}]", self.image_id),
                });
            }
        }
        for (i, c) in self.gt_chars.iter().enumerate() {
            if c.line_index >= self.gt_lines.len() {
                return Err(ValidationError::LineIndexOutOfRange {
                    path: format!("{}.chars[{i}].line_index", self.image_id),
                    index: c.line_index,
                    count: self.gt_lines.len(),
                });
            }
        }
        let frame = AxisAlignedBox {
            x_min: 0.0,
            y_min: 0.0,
            x_max: self.width,
            y_max: self.height,
        };
        let outside = self
            .gt_lines
            .iter()
            .map(|l| l.polygon.external_rect())
            .chain(self.gt_chars.iter().map(|c| c.bbox))
            .filter(|r| !(frame.contains(&r.corners()[0]) && frame.contains(&r.corners()[2])))
            .count();
        if outside > 0 {
            log::warn!(
                "{}: {outside} annotation(s) extend outside the {}x{} frame",
                self.image_id,
                self.width,
                self.height
            );
        }
        Ok(())
    }
}

/// Detector output for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionBundle {
    pub image_id: String,
    pub chars: Vec<CharDetection>,
    pub lines: Vec<LineCandidate>,
}

fn check_score(path: impl FnOnce() -> String, value: f64) -> Result<f64, ValidationError> {
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else if (-SCORE_TOLERANCE..=1.0 + SCORE_TOLERANCE).contains(&value) {
        Ok(value.clamp(0.0, 1.0))
    } else {
        Err(ValidationError::InvalidScore {
            path: path(),
            value,
        })
    }
}

/// Enforces bundle invariants, clamping scores that are within tolerance of the unit interval.
pub fn validate_bundle(mut bundle: DetectionBundle) -> Result<DetectionBundle, ValidationError> {
    let id = bundle.image_id.clone();
    for (i, c) in bundle.chars.iter_mut().enumerate() {
        c.score = check_score(|| format!("{id}.chars[{i}].score"), c.score)?;
        if c.bbox.x_min > c.bbox.x_max || c.bbox.y_min > c.bbox.y_max {
            return Err(ValidationError::InvalidGeometry {
                path: format!("{id}.chars[{i}].box"),
                source: GeomError::InvertedBox,
            });
        }
    }
    let mut seen = HashSet::new();
    for (i, l) in bundle.lines.iter_mut().enumerate() {
        l.visual_score = check_score(|| format!("{id}.lines[{i}].score"), l.visual_score)?;
        if !seen.insert(l.id) {
            return Err(ValidationError::DuplicateId {
                path: format!("{id}.lines[{i}].id"),
                id: l.id,
            });
        }
    }
    Ok(bundle)
}
