//! JSON documents exchanged with the outside world: detections, ground
//! truth and spotted lines. Numbers are written with the shortest decimal
//! representation that round-trips.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{AxisAlignedBox, ConvexPolygon, GeomError};
use crate::model::{
    validate_bundle, CharDetection, DetectionBundle, GroundTruthChar, GroundTruthLine, ImageRecord,
    LineCandidate, SpottedLine, ValidationError,
};

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Invalid(#[from] ValidationError),
    #[error("duplicate image_id {0:?}")]
    DuplicateImage(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharDoc {
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
    pub label: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateDoc {
    pub id: i64,
    pub polygon: Vec<[f64; 2]>,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionImageDoc {
    pub image_id: String,
    pub chars: Vec<CharDoc>,
    pub lines: Vec<CandidateDoc>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DetectionsDoc {
    pub images: Vec<DetectionImageDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtLineDoc {
    pub polygon: Vec<[f64; 2]>,
    pub transcript: String,
    pub ignore: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtCharDoc {
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
    pub label: String,
    pub line_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtImageDoc {
    pub image_id: String,
    pub width: f64,
    pub height: f64,
    pub lines: Vec<GtLineDoc>,
    pub chars: Vec<GtCharDoc>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GroundTruthDoc {
    pub images: Vec<GtImageDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpottedLineDoc {
    pub polygon: Vec<[f64; 2]>,
    pub transcript: String,
    pub s_vis: f64,
    pub s_lin: f64,
    pub s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpottedImageDoc {
    pub image_id: String,
    pub lines: Vec<SpottedLineDoc>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SpottedDoc {
    pub images: Vec<SpottedImageDoc>,
}

fn geom_err(path: String) -> impl FnOnce(GeomError) -> ValidationError {
    move |source| ValidationError::InvalidGeometry { path, source }
}

fn parse_box(b: &[f64; 4], path: impl Fn() -> String) -> Result<AxisAlignedBox, ValidationError> {
    AxisAlignedBox::new(b[0], b[1], b[2], b[3]).map_err(geom_err(path()))
}

fn parse_polygon(
    p: &[[f64; 2]],
    path: impl Fn() -> String,
) -> Result<ConvexPolygon, ValidationError> {
    ConvexPolygon::from_coords(p).map_err(geom_err(path()))
}

fn parse_label(label: &str, path: impl Fn() -> String) -> Result<char, ValidationError> {
    let mut it = label.chars();
    match (it.next(), it.next()) {
        (Some(c), None) => Ok(c),
        _ => Err(ValidationError::InvalidLabel {
            path: path(),
            label: label.to_string(),
        }),
    }
}

fn check_unique<'a>(ids: impl Iterator<Item = &'a str>) -> Result<(), FormatError> {
    let mut seen = BTreeSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(FormatError::DuplicateImage(id.to_string()));
        }
    }
    Ok(())
}

impl DetectionImageDoc {
    pub fn to_bundle(&self) -> Result<DetectionBundle, ValidationError> {
        let id = &self.image_id;
        let chars = self
            .chars
            .iter()
            .enumerate()
            .map(|(i, c)| {
                Ok(CharDetection {
                    bbox: parse_box(&c.bbox, || format!("{id}.chars[{i}].box"))?,
                    label: parse_label(&c.label, || format!("{id}.chars[{i}].label"))?,
                    score: c.score,
                })
            })
            .collect::<Result<Vec<_>, ValidationError>>()?;
        let lines = self
            .lines
            .iter()
            .enumerate()
            .map(|(i, l)| {
                Ok(LineCandidate {
                    id: l.id,
                    polygon: parse_polygon(&l.polygon, || format!("{id}.lines[{i}].polygon"))?,
                    visual_score: l.score,
                })
            })
            .collect::<Result<Vec<_>, ValidationError>>()?;
        validate_bundle(DetectionBundle {
            image_id: id.clone(),
            chars,
            lines,
        })
    }

    pub fn from_bundle(b: &DetectionBundle) -> Self {
        Self {
            image_id: b.image_id.clone(),
            chars: b
                .chars
                .iter()
                .map(|c| CharDoc {
                    bbox: c.bbox.to_array(),
                    label: c.label.to_string(),
                    score: c.score,
                })
                .collect(),
            lines: b
                .lines
                .iter()
                .map(|l| CandidateDoc {
                    id: l.id,
                    polygon: l.polygon.to_coords(),
                    score: l.visual_score,
                })
                .collect(),
        }
    }
}

impl DetectionsDoc {
    pub fn to_bundles(&self) -> Result<Vec<DetectionBundle>, FormatError> {
        check_unique(self.images.iter().map(|i| i.image_id.as_str()))?;
        Ok(self
            .images
            .iter()
            .map(DetectionImageDoc::to_bundle)
            .collect::<Result<_, _>>()?)
    }

    pub fn from_bundles<'a>(bundles: impl IntoIterator<Item = &'a DetectionBundle>) -> Self {
        Self {
            images: bundles
                .into_iter()
                .map(DetectionImageDoc::from_bundle)
                .collect(),
        }
    }
}

impl GtImageDoc {
    pub fn to_record(&self) -> Result<ImageRecord, ValidationError> {
        let id = &self.image_id;
        let gt_lines = self
            .lines
            .iter()
            .enumerate()
            .map(|(i, l)| {
                Ok(GroundTruthLine {
                    polygon: parse_polygon(&l.polygon, || format!("{id}.lines[{i}].polygon"))?,
                    transcript: l.transcript.clone(),
                    ignore: l.ignore,
                })
            })
            .collect::<Result<Vec<_>, ValidationError>>()?;
        let gt_chars = self
            .chars
            .iter()
            .enumerate()
            .map(|(i, c)| {
                Ok(GroundTruthChar {
                    bbox: parse_box(&c.bbox, || format!("{id}.chars[{i}].box"))?,
                    label: parse_label(&c.label, || format!("{id}.chars[{i}].label"))?,
                    line_index: c.line_index,
                })
            })
            .collect::<Result<Vec<_>, ValidationError>>()?;
        let rec = ImageRecord {
            image_id: id.clone(),
            width: self.width,
            height: self.height,
            gt_lines,
            gt_chars,
        };
        rec.validate()?;
        Ok(rec)
    }

    pub fn from_record(r: &ImageRecord) -> Self {
        Self {
            image_id: r.image_id.clone(),
            width: r.width,
            height: r.height,
            lines: r
                .gt_lines
                .iter()
                .map(|l| GtLineDoc {
                    polygon: l.polygon.to_coords(),
                    transcript: l.transcript.clone(),
                    ignore: l.ignore,
                })
                .collect(),
            chars: r
                .gt_chars
                .iter()
                .map(|c| GtCharDoc {
                    bbox: c.bbox.to_array(),
                    label: c.label.to_string(),
                    line_index: c.line_index,
                })
                .collect(),
        }
    }
}

impl GroundTruthDoc {
    pub fn to_records(&self) -> Result<Vec<ImageRecord>, FormatError> {
        check_unique(self.images.iter().map(|i| i.image_id.as_str()))?;
        Ok(self
            .images
            .iter()
            .map(GtImageDoc::to_record)
            .collect::<Result<_, _>>()?)
    }

    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a ImageRecord>) -> Self {
        Self {
            images: records.into_iter().map(GtImageDoc::from_record).collect(),
        }
    }
}

impl SpottedLineDoc {
    pub fn from_line(l: &SpottedLine) -> Self {
        Self {
            polygon: l.polygon.to_coords(),
            transcript: l.transcript.clone(),
            s_vis: l.visual_score,
            s_lin: l.linguistic_score,
            s: l.final_score,
        }
    }
}

impl SpottedImageDoc {
    pub fn to_lines(&self) -> Result<Vec<SpottedLine>, ValidationError> {
        let id = &self.image_id;
        self.lines
            .iter()
            .enumerate()
            .map(|(i, l)| {
                Ok(SpottedLine {
                    polygon: parse_polygon(&l.polygon, || format!("{id}.lines[{i}].polygon"))?,
                    transcript: l.transcript.clone(),
                    visual_score: l.s_vis,
                    linguistic_score: l.s_lin,
                    final_score: l.s,
                })
            })
            .collect()
    }
}

impl SpottedDoc {
    pub fn check_unique(&self) -> Result<(), FormatError> {
        check_unique(self.images.iter().map(|i| i.image_id.as_str()))
    }
}

/// Pretty-printed JSON with a trailing newline.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String, serde_json::Error> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}
