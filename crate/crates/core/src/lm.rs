//! Character n-gram language scoring.
//!
//! A transcript's naturalness is its mean per-event log-probability under an
//! additive-smoothed character model (the end-of-string event included),
//! squashed into `[0, 1]` by a two-parameter logistic. The logistic can be
//! fitted against IoU-derived candidate labels.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{GroundTruthLine, LineCandidate};
use crate::par;

pub const MODEL_VERSION: u32 = 1;

/// Seed of the shuffle used to place the default logistic midpoint.
const CALIBRATION_SHUFFLE_SEED: u64 = 0x5eed_ca11_b8a7_e000;

#[derive(Debug, Error)]
pub enum LmError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("calibration needs both positive and negative examples with non-empty transcripts")]
    SingleClass,
    #[error("unsupported model version {0}")]
    UnsupportedVersion(u32),
    #[error("malformed model: {0}")]
    Malformed(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Symbol {
    Bos,
    Eos,
    Unk,
    Char(char),
}

impl Symbol {
    fn encode(&self) -> String {
        match self {
            Symbol::Bos => "<s>".to_string(),
            Symbol::Eos => "</s>".to_string(),
            Symbol::Unk => "<unk>".to_string(),
            Symbol::Char(c) => c.to_string(),
        }
    }

    fn decode(s: &str) -> Result<Self, LmError> {
        match s {
            "<s>" => Ok(Symbol::Bos),
            "</s>" => Ok(Symbol::Eos),
            "<unk>" => Ok(Symbol::Unk),
            _ => {
                let mut it = s.chars();
                match (it.next(), it.next()) {
                    (Some(c), None) => Ok(Symbol::Char(c)),
                    _ => Err(LmError::Malformed(format!("bad symbol {s:?}"))),
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NgramParams {
    pub order: usize,
    pub smoothing_k: f64,
    pub max_len: usize,
}

impl Default for NgramParams {
    fn default() -> Self {
        Self {
            order: 3,
            smoothing_k: 0.1,
            max_len: 16,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
struct ContextCounts {
    total: u64,
    next: BTreeMap<Symbol, u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NgramModel {
    params: NgramParams,
    counts: BTreeMap<Vec<Symbol>, ContextCounts>,
    vocab: Vec<Symbol>,
    pub calibration: Calibration,
}

fn validate_params(p: &NgramParams) -> Result<(), LmError> {
    if p.order < 1 {
        return Err(LmError::InvalidParameter("order must be >= 1".into()));
    }
    if !(p.smoothing_k > 0.0 && p.smoothing_k.is_finite()) {
        return Err(LmError::InvalidParameter("smoothing_k must be > 0".into()));
    }
    if p.max_len < 1 {
        return Err(LmError::InvalidParameter("max_len must be >= 1".into()));
    }
    Ok(())
}

impl NgramModel {
    /// Counts n-grams over `corpus` and places the default logistic midpoint
    /// halfway between the mean score of the corpus and of its shuffles.
    pub fn fit<S: AsRef<str> + Sync>(corpus: &[S], params: NgramParams) -> Result<Self, LmError> {
        validate_params(&params)?;
        if corpus.is_empty() {
            return Err(LmError::EmptyCorpus);
        }
        let ctx_len = params.order - 1;
        let mut counts: BTreeMap<Vec<Symbol>, ContextCounts> = BTreeMap::new();
        let mut vocab = std::collections::BTreeSet::from([Symbol::Bos, Symbol::Eos, Symbol::Unk]);
        for line in corpus {
            let mut history = vec![Symbol::Bos; ctx_len];
            let events = line
                .as_ref()
                .chars()
                .map(Symbol::Char)
                .chain(std::iter::once(Symbol::Eos));
            for sym in events {
                vocab.insert(sym);
                let entry = counts.entry(history.clone()).or_default();
                entry.total += 1;
                *entry.next.entry(sym).or_default() += 1;
                if ctx_len > 0 {
                    history.remove(0);
                    history.push(sym);
                }
            }
        }
        let mut model = Self {
            params,
            counts,
            vocab: vocab.into_iter().collect(),
            calibration: Calibration { a: 4.0, b: 0.0 },
        };
        model.calibration.b = model.default_midpoint(corpus);
        Ok(model)
    }

    fn default_midpoint<S: AsRef<str> + Sync>(&self, corpus: &[S]) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(CALIBRATION_SHUFFLE_SEED);
        let shuffled: Vec<String> = corpus
            .iter()
            .map(|s| {
                let mut chars: Vec<char> = s.as_ref().chars().collect();
                chars.shuffle(&mut rng);
                chars.into_iter().collect()
            })
            .collect();
        let mean = |lines: Vec<Option<f64>>| {
            let vals: Vec<f64> = lines.into_iter().flatten().collect();
            if vals.is_empty() {
                0.0
            } else {
                vals.iter().sum::<f64>() / vals.len() as f64
            }
        };
        let held_in = mean(par::map(corpus, |s| self.avg_logprob(s.as_ref())));
        let shuffled = mean(par::map(&shuffled, |s| self.avg_logprob(s)));
        (held_in + shuffled) / 2.0
    }

    pub fn params(&self) -> &NgramParams {
        &self.params
    }

    pub fn order(&self) -> usize {
        self.params.order
    }

    pub fn max_len(&self) -> usize {
        self.params.max_len
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    /// Characters seen in training, in sorted order.
    pub fn alphabet(&self) -> impl Iterator<Item = char> + '_ {
        self.vocab.iter().filter_map(|s| match s {
            Symbol::Char(c) => Some(*c),
            _ => None,
        })
    }

    fn symbol_for(&self, c: char) -> Symbol {
        let s = Symbol::Char(c);
        if self.vocab.binary_search(&s).is_ok() {
            s
        } else {
            Symbol::Unk
        }
    }

    /// Additive-smoothed P(next | context).
    pub fn prob(&self, context: &[Symbol], next: Symbol) -> f64 {
        let k = self.params.smoothing_k;
        let v = self.vocab.len() as f64;
        let (count, total) = self
            .counts
            .get(context)
            .map(|c| (c.next.get(&next).copied().unwrap_or(0), c.total))
            .unwrap_or((0, 0));
        (count as f64 + k) / (total as f64 + k * v)
    }

    /// Mean log-probability per event over the first `max_len` characters
    /// plus the end marker. `None` for an empty transcript.
    pub fn avg_logprob(&self, transcript: &str) -> Option<f64> {
        let ctx_len = self.params.order - 1;
        let mut history = vec![Symbol::Bos; ctx_len];
        let mut sum = 0.0;
        let mut events = 0usize;
        let body = transcript
            .chars()
            .take(self.params.max_len)
            .map(|c| self.symbol_for(c));
        for sym in body.chain(std::iter::once(Symbol::Eos)) {
            sum += self.prob(&history, sym).ln();
            events += 1;
            if ctx_len > 0 {
                history.remove(0);
                history.push(sym);
            }
        }
        // One event means only the end marker was scored.
        (events > 1).then(|| sum / events as f64)
    }

    /// Linguistic score in `[0, 1]`; 0 for an empty transcript.
    pub fn score(&self, transcript: &str) -> f64 {
        match self.avg_logprob(transcript) {
            Some(lp) => logistic(self.calibration.a * (lp - self.calibration.b)),
            None => 0.0,
        }
    }

    pub fn to_json(&self) -> Result<String, LmError> {
        let doc = ModelDocument {
            version: MODEL_VERSION,
            n: self.params.order,
            smoothing_k: self.params.smoothing_k,
            max_len: self.params.max_len,
            calibration: self.calibration,
            vocab: self.vocab.iter().map(Symbol::encode).collect(),
            counts: self
                .counts
                .iter()
                .flat_map(|(ctx, cc)| {
                    cc.next.iter().map(move |(next, &count)| CountEntry {
                        ctx: ctx.iter().map(Symbol::encode).collect(),
                        next: next.encode(),
                        count,
                    })
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self, LmError> {
        let doc: ModelDocument = serde_json::from_str(text)?;
        if doc.version != MODEL_VERSION {
            return Err(LmError::UnsupportedVersion(doc.version));
        }
        let params = NgramParams {
            order: doc.n,
            smoothing_k: doc.smoothing_k,
            max_len: doc.max_len,
        };
        validate_params(&params)?;
        let mut vocab = doc
            .vocab
            .iter()
            .map(|s| Symbol::decode(s))
            .collect::<Result<Vec<_>, _>>()?;
        vocab.sort();
        vocab.dedup();
        let mut counts: BTreeMap<Vec<Symbol>, ContextCounts> = BTreeMap::new();
        for e in &doc.counts {
            let ctx = e
                .ctx
                .iter()
                .map(|s| Symbol::decode(s))
                .collect::<Result<Vec<_>, _>>()?;
            if ctx.len() != params.order - 1 {
                return Err(LmError::Malformed(format!(
                    "context length {} does not match order {}",
                    ctx.len(),
                    params.order
                )));
            }
            let entry = counts.entry(ctx).or_default();
            entry.total += e.count;
            *entry.next.entry(Symbol::decode(&e.next)?).or_default() += e.count;
        }
        if !doc.calibration.a.is_finite() || !doc.calibration.b.is_finite() {
            return Err(LmError::Malformed("non-finite calibration".into()));
        }
        Ok(Self {
            params,
            counts,
            vocab,
            calibration: doc.calibration,
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelDocument {
    version: u32,
    n: usize,
    smoothing_k: f64,
    max_len: usize,
    calibration: Calibration,
    vocab: Vec<String>,
    counts: Vec<CountEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CountEntry {
    ctx: Vec<String>,
    next: String,
    count: u64,
}

pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + e^z) without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Positive,
    Negative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CandidateLabel {
    pub candidate_id: i64,
    pub label: Label,
}

/// Positive iff the best IoU against a non-ignored ground-truth line exceeds `iou_pos`.
pub fn label_candidates(
    candidates: &[LineCandidate],
    gts: &[GroundTruthLine],
    iou_pos: f64,
) -> Vec<CandidateLabel> {
    candidates
        .iter()
        .map(|c| {
            let best = gts
                .iter()
                .filter(|g| !g.ignore)
                .map(|g| c.polygon.iou(&g.polygon))
                .fold(0.0, f64::max);
            CandidateLabel {
                candidate_id: c.id,
                label: if best > iou_pos {
                    Label::Positive
                } else {
                    Label::Negative
                },
            }
        })
        .collect()
}

/// Mean binary cross-entropy of `logistic(a (x - b))` against the labels.
pub fn cross_entropy(samples: &[(f64, bool)], cal: Calibration) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let total: f64 = samples
        .iter()
        .map(|&(x, positive)| {
            let z = cal.a * (x - cal.b);
            if positive {
                softplus(-z)
            } else {
                softplus(z)
            }
        })
        .sum();
    total / samples.len() as f64
}

pub const CALIBRATION_A_RANGE: (f64, f64) = (0.1, 20.0);
const GRID_POINTS: usize = 41;
const REFINE_LEVELS: usize = 2;

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n < 2 || hi <= lo {
        return vec![lo];
    }
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Coarse-to-fine grid search for the logistic parameters minimizing
/// cross-entropy. Empty transcripts are left out.
pub fn fit_calibration(
    model: &NgramModel,
    scored: &[(String, CandidateLabel)],
) -> Result<Calibration, LmError> {
    let samples: Vec<(f64, bool)> = scored
        .iter()
        .filter_map(|(t, l)| {
            model
                .avg_logprob(t)
                .map(|lp| (lp, l.label == Label::Positive))
        })
        .collect();
    fit_logistic(&samples)
}

/// Grid search over `a` in [0.1, 20] and `b` spanning the observed values,
/// refined twice around the incumbent.
pub fn fit_logistic(samples: &[(f64, bool)]) -> Result<Calibration, LmError> {
    let has_pos = samples.iter().any(|s| s.1);
    let has_neg = samples.iter().any(|s| !s.1);
    if !has_pos || !has_neg {
        return Err(LmError::SingleClass);
    }
    let (a_lo, a_hi) = CALIBRATION_A_RANGE;
    let b_lo = samples.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
    let b_hi = samples
        .iter()
        .map(|s| s.0)
        .fold(f64::NEG_INFINITY, f64::max);

    let mut a_grid = linspace(a_lo, a_hi, GRID_POINTS);
    let mut b_grid = linspace(b_lo, b_hi, GRID_POINTS);
    let mut a_step = (a_hi - a_lo) / (GRID_POINTS - 1) as f64;
    let mut b_step = (b_hi - b_lo) / (GRID_POINTS - 1) as f64;
    let mut best = Calibration { a: a_lo, b: b_lo };
    for level in 0..=REFINE_LEVELS {
        let cells: Vec<Calibration> = a_grid
            .iter()
            .flat_map(|&a| b_grid.iter().map(move |&b| Calibration { a, b }))
            .collect();
        let losses = par::map(&cells, |&c| cross_entropy(samples, c));
        let mut best_loss = f64::INFINITY;
        for (c, loss) in cells.iter().zip(losses) {
            if loss < best_loss {
                best_loss = loss;
                best = *c;
            }
        }
        if level == REFINE_LEVELS {
            break;
        }
        a_grid = linspace((best.a - a_step).max(a_lo), (best.a + a_step).min(a_hi), 21);
        b_grid = linspace((best.b - b_step).max(b_lo), (best.b + b_step).min(b_hi), 21);
        a_step /= 10.0;
        b_step /= 10.0;
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(order: usize) -> NgramParams {
        NgramParams {
            order,
            ..NgramParams::default()
        }
    }

    #[test]
    fn single_path_counts() {
        let m = NgramModel::fit(&["ab"], params(2)).unwrap();
        // vocab: <s> </s> <unk> a b
        assert_eq!(m.vocab_size(), 5);
        let k = 0.1;
        let seen = (1.0 + k) / (1.0 + 5.0 * k);
        let unseen = k / (1.0 + 5.0 * k);
        assert!((m.prob(&[Symbol::Bos], Symbol::Char('a')) - seen).abs() < 1e-15);
        assert!((m.prob(&[Symbol::Char('a')], Symbol::Char('b')) - seen).abs() < 1e-15);
        assert!((m.prob(&[Symbol::Char('b')], Symbol::Eos) - seen).abs() < 1e-15);
        assert!((m.prob(&[Symbol::Char('a')], Symbol::Char('a')) - unseen).abs() < 1e-15);
    }

    #[test]
    fn fit_is_deterministic() {
        let corpus = ["hello", "world", "help"];
        let a = NgramModel::fit(&corpus, NgramParams::default()).unwrap();
        let b = NgramModel::fit(&corpus, NgramParams::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    }

    #[test]
    fn rejects_bad_input() {
        let empty: [&str; 0] = [];
        assert!(matches!(
            NgramModel::fit(&empty, NgramParams::default()),
            Err(LmError::EmptyCorpus)
        ));
        assert!(NgramModel::fit(&["a"], params(0)).is_err());
        let bad_k = NgramParams {
            smoothing_k: 0.0,
            ..NgramParams::default()
        };
        assert!(NgramModel::fit(&["a"], bad_k).is_err());
    }

    #[test]
    fn single_letter_model_by_hand() {
        // Bigram over corpus ["aaa"]: contexts <s>:{a:1}, a:{a:2, </s>:1}; V = 4.
        let m = NgramModel::fit(&["aaa"], params(2)).unwrap();
        let k: f64 = 0.1;
        let v: f64 = 4.0;
        let p_first = (1.0 + k) / (1.0 + k * v);
        let p_aa = (2.0 + k) / (3.0 + k * v);
        let p_end = (1.0 + k) / (3.0 + k * v);
        let expected = (p_first.ln() + 2.0 * p_aa.ln() + p_end.ln()) / 4.0;
        let got = m.avg_logprob("aaa").unwrap();
        assert!((got - expected).abs() < 1e-12);
        assert!(got > -0.6, "{got}");
    }

    #[test]
    fn unknown_characters_lower_the_score() {
        let m = NgramModel::fit(&["abcabc", "abab", "cab"], params(3)).unwrap();
        let known = m.avg_logprob("abc").unwrap();
        let unknown = m.avg_logprob("abz").unwrap();
        assert!(unknown < known);
    }

    #[test]
    fn empty_transcript_is_sentinel_and_scores_zero() {
        let m = NgramModel::fit(&["abc"], NgramParams::default()).unwrap();
        assert_eq!(m.avg_logprob(""), None);
        assert_eq!(m.score(""), 0.0);
    }

    #[test]
    fn logistic_midpoint() {
        let mut m = NgramModel::fit(&["abc"], NgramParams::default()).unwrap();
        let lp = m.avg_logprob("ab").unwrap();
        m.calibration = Calibration { a: 7.0, b: lp };
        assert_eq!(m.score("ab"), 0.5);
    }

    #[test]
    fn truncation_to_max_len() {
        let p = NgramParams {
            max_len: 4,
            ..NgramParams::default()
        };
        let m = NgramModel::fit(&["abcdefgh"], p).unwrap();
        assert_eq!(m.score("abcdXYZ"), m.score("abcdefgh"));
    }

    #[test]
    fn json_round_trip() {
        let m = NgramModel::fit(&["吃饭了", "abc", "<s>"], NgramParams::default()).unwrap();
        let text = m.to_json().unwrap();
        let back = NgramModel::from_json(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_json().unwrap(), text);
        let bumped = text.replace("\"version\": 1", "\"version\": 9");
        assert!(matches!(
            NgramModel::from_json(&bumped),
            Err(LmError::UnsupportedVersion(9))
        ));
    }

    #[test]
    fn label_threshold_is_strict() {
        use crate::geom::AxisAlignedBox;
        let rect = |x1: f64| {
            AxisAlignedBox::new(0.0, 0.0, x1, 10.0)
                .unwrap()
                .to_polygon()
                .unwrap()
        };
        let gts = vec![
            GroundTruthLine {
                polygon: rect(10.0),
                transcript: "x".into(),
                ignore: false,
            },
            GroundTruthLine {
                polygon: AxisAlignedBox::new(100.0, 0.0, 110.0, 10.0)
                    .unwrap()
                    .to_polygon()
                    .unwrap(),
                transcript: String::new(),
                ignore: true,
            },
        ];
        let cand = |id: i64, polygon| LineCandidate {
            id,
            polygon,
            visual_score: 0.5,
        };
        // 80 / 100 with every operand exactly representable
        assert_eq!(rect(8.0).iou(&rect(10.0)), 0.8);
        let cands = vec![
            cand(0, rect(10.0)),
            cand(1, rect(8.0)),
            cand(
                2,
                AxisAlignedBox::new(50.0, 0.0, 60.0, 10.0)
                    .unwrap()
                    .to_polygon()
                    .unwrap(),
            ),
            cand(
                3,
                AxisAlignedBox::new(100.0, 0.0, 110.0, 10.0)
                    .unwrap()
                    .to_polygon()
                    .unwrap(),
            ),
        ];
        let labels: Vec<Label> = label_candidates(&cands, &gts, 0.8)
            .iter()
            .map(|l| l.label)
            .collect();
        assert_eq!(
            labels,
            vec![
                Label::Positive,
                Label::Negative,
                Label::Negative,
                Label::Negative
            ]
        );
    }

    #[test]
    fn calibration_requires_both_classes() {
        assert!(matches!(
            fit_logistic(&[(1.0, true), (2.0, true)]),
            Err(LmError::SingleClass)
        ));
        assert!(matches!(fit_logistic(&[]), Err(LmError::SingleClass)));
    }

    #[test]
    fn separable_clusters_fit_well() {
        let samples: Vec<(f64, bool)> = (0..50)
            .map(|i| (-1.0 - 0.01 * i as f64, true))
            .chain((0..50).map(|i| (-3.0 - 0.01 * i as f64, false)))
            .collect();
        let cal = fit_logistic(&samples).unwrap();
        assert!(cross_entropy(&samples, cal) < 0.1);
        assert!(cal.b > -3.0 && cal.b < -1.5);
        assert_eq!(fit_logistic(&samples).unwrap(), cal);
    }
}
