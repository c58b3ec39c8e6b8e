//! Non-neural core of an ambiguity-aware scene-text spotter.
//!
//! Candidate text lines and character detections come in from a detector
//! (or from [`synth`]); [`pipeline::spot_image`] filters candidates, reads
//! each one with the match-assemble rule in [`ma`], re-scores the
//! transcripts with the character language model in [`lm`] and keeps the
//! best non-overlapping lines. [`ambiguity`] implements the layout rules
//! used to curate ambiguous evaluation splits and [`metrics`] the
//! detection / recognition scores.
//!
//! With the default `parallel` feature, per-image and per-candidate work runs
//! on rayon; without it the same code runs sequentially with identical
//! results.

pub mod ambiguity;
pub mod cli;
pub mod geom;
pub mod io;
pub mod lm;
pub mod ma;
pub mod metrics;
pub mod model;
pub mod par;
pub mod pipeline;
pub mod synth;

pub use geom::{AxisAlignedBox, ConvexPolygon, GeomError, Point};
pub use lm::NgramModel;
pub use model::{
    CharDetection, DetectionBundle, GroundTruthLine, ImageRecord, LineCandidate, SpottedLine,
};
pub use pipeline::{spot_image, PipelineConfig};
