//! Command implementations behind the `ambispot` binary.
//!
//! Every command reads its inputs, runs deterministically, and writes its
//! outputs; concurrency never changes the bytes written. Errors split into
//! input problems (exit 2) and internal failures (exit 1).

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ambiguity::{curate, dataset_stats, AmbiguityConfig, DatasetStats};
use crate::io::{
    to_json_string, DetectionsDoc, GroundTruthDoc, SpottedDoc, SpottedImageDoc, SpottedLineDoc,
};
use crate::lm::{NgramModel, NgramParams};
use crate::metrics::{evaluate, EvalCounts, EvalReport, DEFAULT_IOU_THRESHOLD};
use crate::par;
use crate::pipeline::{spot_image, PipelineConfig};
use crate::synth::{gen_dataset, Corpus, CorpusSource, SceneConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Internal(_) => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Input(_) => "input",
            CliError::Internal(_) => "internal",
        }
    }

    /// Machine-readable form written to stderr.
    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": self.kind(), "message": self.to_string() }).to_string()
    }
}

fn input<E: std::fmt::Display>(context: impl std::fmt::Display) -> impl FnOnce(E) -> CliError {
    move |e| CliError::Input(format!("{context}: {e}"))
}

fn internal<E: std::fmt::Display>(context: impl std::fmt::Display) -> impl FnOnce(E) -> CliError {
    move |e| CliError::Internal(format!("{context}: {e}"))
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(input(path.display()))
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(internal(parent.display()))?;
    }
    fs::write(path, contents).map_err(internal(path.display()))
}

fn parse_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    serde_json::from_str(&read(path)?).map_err(input(path.display()))
}

fn json<T: Serialize>(value: &T) -> Result<String, CliError> {
    to_json_string(value).map_err(internal("serialize"))
}

/// Every tunable, as it may appear in a JSON config file or on the command
/// line. Unset fields fall back to component defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub thr_score: Option<f64>,
    pub thr_nms: Option<f64>,
    pub lambda: Option<f64>,
    pub final_nms: Option<f64>,
    pub final_score_thr: Option<f64>,
    pub use_lm: Option<bool>,
    pub thr_match: Option<f64>,
    pub spacing_ratio_thr: Option<f64>,
    pub alignment_ratio_thr: Option<f64>,
    pub scale_band: Option<(f64, f64)>,
    pub n: Option<usize>,
    pub smoothing_k: Option<f64>,
    pub max_len: Option<usize>,
    pub seed: Option<u64>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        path.map_or(Ok(Self::default()), parse_json)
    }

    /// Fields set in `overrides` win.
    pub fn overlay(self, o: RunConfig) -> RunConfig {
        RunConfig {
            thr_score: o.thr_score.or(self.thr_score),
            thr_nms: o.thr_nms.or(self.thr_nms),
            lambda: o.lambda.or(self.lambda),
            final_nms: o.final_nms.or(self.final_nms),
            final_score_thr: o.final_score_thr.or(self.final_score_thr),
            use_lm: o.use_lm.or(self.use_lm),
            thr_match: o.thr_match.or(self.thr_match),
            spacing_ratio_thr: o.spacing_ratio_thr.or(self.spacing_ratio_thr),
            alignment_ratio_thr: o.alignment_ratio_thr.or(self.alignment_ratio_thr),
            scale_band: o.scale_band.or(self.scale_band),
            n: o.n.or(self.n),
            smoothing_k: o.smoothing_k.or(self.smoothing_k),
            max_len: o.max_len.or(self.max_len),
            seed: o.seed.or(self.seed),
        }
    }

    pub fn pipeline(&self) -> Result<PipelineConfig, CliError> {
        let d = PipelineConfig::default();
        let cfg = PipelineConfig {
            thr_score: self.thr_score.unwrap_or(d.thr_score),
            thr_nms: self.thr_nms.unwrap_or(d.thr_nms),
            lambda: self.lambda.unwrap_or(d.lambda),
            final_nms: self.final_nms.unwrap_or(d.final_nms),
            final_score_thr: self.final_score_thr.unwrap_or(d.final_score_thr),
            use_lm: self.use_lm.unwrap_or(d.use_lm),
            thr_match: self.thr_match.unwrap_or(d.thr_match),
        };
        cfg.validate().map_err(CliError::Input)?;
        Ok(cfg)
    }

    pub fn ambiguity(&self) -> Result<AmbiguityConfig, CliError> {
        let d = AmbiguityConfig::default();
        let cfg = AmbiguityConfig {
            spacing_ratio_thr: self.spacing_ratio_thr.unwrap_or(d.spacing_ratio_thr),
            alignment_ratio_thr: self.alignment_ratio_thr.unwrap_or(d.alignment_ratio_thr),
            scale_band: self.scale_band.unwrap_or(d.scale_band),
        };
        cfg.validate().map_err(CliError::Input)?;
        Ok(cfg)
    }

    pub fn ngram(&self) -> NgramParams {
        let d = NgramParams::default();
        NgramParams {
            order: self.n.unwrap_or(d.order),
            smoothing_k: self.smoothing_k.unwrap_or(d.smoothing_k),
            max_len: self.max_len.unwrap_or(d.max_len),
        }
    }
}

/// Non-empty lines of a UTF-8 corpus file, trailing `\r` stripped.
pub fn read_corpus(path: &Path) -> Result<Vec<String>, CliError> {
    Ok(read(path)?
        .lines()
        .map(|l| l.trim_end_matches('\r'))
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub lines: usize,
    pub vocab_size: usize,
    pub n: usize,
    pub smoothing_k: f64,
    pub max_len: usize,
    pub calibration_a: f64,
    pub calibration_b: f64,
}

pub fn cmd_lm_train(
    corpus_path: &Path,
    model_out: &Path,
    params: NgramParams,
) -> Result<TrainSummary, CliError> {
    let corpus = read_corpus(corpus_path)?;
    if corpus.is_empty() {
        return Err(CliError::Input(format!(
            "{}: corpus is empty",
            corpus_path.display()
        )));
    }
    let model = NgramModel::fit(&corpus, params).map_err(input("lm-train"))?;
    let mut text = model.to_json().map_err(internal("serialize model"))?;
    text.push('\n');
    write(model_out, &text)?;
    Ok(TrainSummary {
        lines: corpus.len(),
        vocab_size: model.vocab_size(),
        n: params.order,
        smoothing_k: params.smoothing_k,
        max_len: params.max_len,
        calibration_a: model.calibration.a,
        calibration_b: model.calibration.b,
    })
}

pub fn load_model(path: &Path) -> Result<NgramModel, CliError> {
    NgramModel::from_json(&read(path)?).map_err(input(path.display()))
}

/// Spots every image of a detections document; images ordered by id.
pub fn spot_document(
    detections: &DetectionsDoc,
    model: Option<&NgramModel>,
    cfg: &PipelineConfig,
) -> Result<SpottedDoc, CliError> {
    let mut bundles = detections.to_bundles().map_err(input("detections"))?;
    bundles.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    let images = par::map(&bundles, |b| SpottedImageDoc {
        image_id: b.image_id.clone(),
        lines: spot_image(b, model, cfg)
            .iter()
            .map(SpottedLineDoc::from_line)
            .collect(),
    });
    Ok(SpottedDoc { images })
}

pub fn cmd_spot(
    detections_path: &Path,
    model_path: Option<&Path>,
    cfg: &PipelineConfig,
    out_path: &Path,
) -> Result<SpottedDoc, CliError> {
    let detections: DetectionsDoc = parse_json(detections_path)?;
    let model = if cfg.use_lm {
        let path = model_path.ok_or_else(|| {
            CliError::Input("a language model is required unless --no-lm is given".into())
        })?;
        Some(load_model(path)?)
    } else {
        None
    };
    let doc = spot_document(&detections, model.as_ref(), cfg)?;
    write(out_path, &json(&doc)?)?;
    Ok(doc)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageEval {
    pub image_id: String,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutput {
    pub global: EvalReport,
    pub per_image: Vec<ImageEval>,
}

pub fn evaluate_documents(
    spotted: &SpottedDoc,
    gt: &GroundTruthDoc,
) -> Result<EvalOutput, CliError> {
    spotted.check_unique().map_err(input("spotted"))?;
    let records = gt.to_records().map_err(input("ground truth"))?;
    let spotted_ids: BTreeSet<&str> = spotted.images.iter().map(|i| i.image_id.as_str()).collect();
    let gt_ids: BTreeSet<&str> = records.iter().map(|r| r.image_id.as_str()).collect();
    if spotted_ids != gt_ids {
        let only_spotted: Vec<_> = spotted_ids.difference(&gt_ids).collect();
        let only_gt: Vec<_> = gt_ids.difference(&spotted_ids).collect();
        return Err(CliError::Input(format!(
            "image_id sets differ; only in spotted: {only_spotted:?}; only in ground truth: {only_gt:?}"
        )));
    }
    let mut pairs: Vec<_> = records
        .iter()
        .map(|r| {
            let s = spotted
                .images
                .iter()
                .find(|s| s.image_id == r.image_id)
                .expect("id sets are equal");
            (r, s)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.image_id.cmp(&b.0.image_id));
    let per_image: Vec<(String, EvalCounts)> = par::try_map(&pairs, |(r, s)| {
        let dets = s.to_lines().map_err(input("spotted"))?;
        Ok::<_, CliError>((
            r.image_id.clone(),
            evaluate(&dets, &r.gt_lines, DEFAULT_IOU_THRESHOLD),
        ))
    })?;
    let total = per_image
        .iter()
        .fold(EvalCounts::default(), |acc, (_, c)| acc + *c);
    Ok(EvalOutput {
        global: total.report(),
        per_image: per_image
            .into_iter()
            .map(|(image_id, c)| ImageEval {
                image_id,
                report: c.report(),
            })
            .collect(),
    })
}

pub fn cmd_eval(
    spotted_path: &Path,
    gt_path: &Path,
    out_path: Option<&Path>,
) -> Result<EvalOutput, CliError> {
    let spotted: SpottedDoc = parse_json(spotted_path)?;
    let gt: GroundTruthDoc = parse_json(gt_path)?;
    let out = evaluate_documents(&spotted, &gt)?;
    if let Some(path) = out_path {
        write(path, &json(&out)?)?;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurateOutput {
    pub ids: Vec<String>,
    pub stats: DatasetStats,
}

pub fn cmd_curate(
    gt_path: &Path,
    n: usize,
    seed: u64,
    cfg: &AmbiguityConfig,
    ids_out: &Path,
    stats_out: &Path,
) -> Result<CurateOutput, CliError> {
    let gt: GroundTruthDoc = parse_json(gt_path)?;
    let records = gt.to_records().map_err(input("ground truth"))?;
    let ids = curate(&records, n, seed, cfg).map_err(|e| CliError::Input(e.to_string()))?;
    let curated: Vec<_> = records
        .iter()
        .filter(|r| ids.binary_search(&r.image_id).is_ok())
        .cloned()
        .collect();
    let stats = dataset_stats(&curated, cfg);
    let mut listing = ids.join("\n");
    if !listing.is_empty() {
        listing.push('\n');
    }
    write(ids_out, &listing)?;
    write(stats_out, &json(&stats)?)?;
    Ok(CurateOutput { ids, stats })
}

/// Statistics over a whole ground-truth file, without sampling.
pub fn cmd_stats(gt_path: &Path, cfg: &AmbiguityConfig) -> Result<DatasetStats, CliError> {
    let gt: GroundTruthDoc = parse_json(gt_path)?;
    let records = gt.to_records().map_err(input("ground truth"))?;
    Ok(dataset_stats(&records, cfg))
}

pub fn load_corpus(source: &CorpusSource) -> Result<Corpus, CliError> {
    match source {
        CorpusSource::Builtin { lines, seed } => Ok(Corpus::builtin(*lines, *seed)),
        CorpusSource::File { path } => {
            Corpus::from_lines(read_corpus(path)?).map_err(input(path.display()))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenOutput {
    pub scenes: usize,
    pub gt_path: PathBuf,
    pub detections_path: PathBuf,
    pub corpus_path: PathBuf,
}

/// Writes `gt.json`, `detections.json` and the `corpus.txt` the scenes were drawn from.
pub fn cmd_gen(
    template: &SceneConfig,
    n: usize,
    seed: u64,
    out_dir: &Path,
) -> Result<GenOutput, CliError> {
    let corpus = load_corpus(&template.corpus)?;
    let data = gen_dataset(n, template, seed, &corpus).map_err(input("gen"))?;
    let gt = GroundTruthDoc::from_records(data.iter().map(|(r, _)| r));
    let det = DetectionsDoc::from_bundles(data.iter().map(|(_, b)| b));
    let out = GenOutput {
        scenes: data.len(),
        gt_path: out_dir.join("gt.json"),
        detections_path: out_dir.join("detections.json"),
        corpus_path: out_dir.join("corpus.txt"),
    };
    write(&out.gt_path, &json(&gt)?)?;
    write(&out.detections_path, &json(&det)?)?;
    let mut text = corpus.lines().join("\n");
    text.push('\n');
    write(&out.corpus_path, &text)?;
    Ok(out)
}

/// Writes the built-in pseudo-language corpus.
pub fn cmd_corpus(lines: usize, seed: u64, out: &Path) -> Result<usize, CliError> {
    let corpus = Corpus::builtin(lines, seed);
    let mut text = corpus.lines().join("\n");
    text.push('\n');
    write(out, &text)?;
    Ok(corpus.lines().len())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overlay_prefers_overrides() {
        let file = RunConfig {
            lambda: Some(0.5),
            thr_score: Some(0.2),
            ..RunConfig::default()
        };
        let flags = RunConfig {
            lambda: Some(0.9),
            ..RunConfig::default()
        };
        let merged = file.overlay(flags);
        assert_eq!(merged.lambda, Some(0.9));
        assert_eq!(merged.thr_score, Some(0.2));
        let p = merged.pipeline().unwrap();
        assert_eq!(p.final_nms, 0.1);
    }

    #[test]
    fn config_rejects_unknown_fields_and_bad_values() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"lamda": 0.5}"#).is_err());
        let bad = RunConfig {
            thr_nms: Some(2.0),
            ..RunConfig::default()
        };
        assert!(matches!(bad.pipeline(), Err(CliError::Input(_))));
    }

    #[test]
    fn error_json_shape() {
        let e = CliError::Input("bad".into());
        assert_eq!(e.exit_code(), 2);
        let v: serde_json::Value = serde_json::from_str(&e.to_json()).unwrap();
        assert_eq!(v["error"], "input");
        assert_eq!(v["message"], "bad");
        assert_eq!(CliError::Internal("x".into()).exit_code(), 1);
    }
}
