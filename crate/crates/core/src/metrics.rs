//! Detection (precision / recall / F-measure at an IoU threshold, with
//! do-not-care regions) and recognition (1 - normalized edit distance)
//! evaluation.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{GroundTruthLine, SpottedLine};

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

/// Levenshtein distance over Unicode scalar values.
pub fn edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Edit distance divided by the longer length; 0 when both are empty.
pub fn normalized_edit_distance(a: &str, b: &str) -> f64 {
    let longest = a.chars().count().max(b.chars().count());
    if longest == 0 {
        0.0
    } else {
        edit_distance(a, b) as f64 / longest as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectionOutcome {
    Matched(usize),
    FalsePositive,
    /// Overlaps a do-not-care region; counted nowhere.
    Ignored,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Matching {
    /// One entry per detection, in input order.
    pub outcomes: Vec<DetectionOutcome>,
    /// Indices of non-ignored ground-truth lines left unmatched.
    pub missed: Vec<usize>,
}

impl Matching {
    pub fn matched(&self) -> usize {
        self.outcomes
            .iter()
            .filter(|o| matches!(o, DetectionOutcome::Matched(_)))
            .count()
    }

    pub fn false_positives(&self) -> usize {
        self.outcomes
            .iter()
            .filter(|o| matches!(o, DetectionOutcome::FalsePositive))
            .count()
    }
}

/// Greedy one-to-one matching in descending score order (ties: input order).
pub fn match_lines(dets: &[SpottedLine], gts: &[GroundTruthLine], iou_thr: f64) -> Matching {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| {
        dets[b]
            .final_score
            .total_cmp(&dets[a].final_score)
            .then(a.cmp(&b))
    });
    let mut taken = vec![false; gts.len()];
    let mut outcomes = vec![DetectionOutcome::FalsePositive; dets.len()];
    for d in order {
        let poly = &dets[d].polygon;
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if gt.ignore || taken[g] {
                continue;
            }
            let iou = poly.iou(&gt.polygon);
            if iou > iou_thr && best.is_none_or(|(_, b)| iou > b) {
                best = Some((g, iou));
            }
        }
        outcomes[d] = match best {
            Some((g, _)) => {
                taken[g] = true;
                DetectionOutcome::Matched(g)
            }
            None if gts
                .iter()
                .any(|gt| gt.ignore && poly.iou(&gt.polygon) > iou_thr) =>
            {
                DetectionOutcome::Ignored
            }
            None => DetectionOutcome::FalsePositive,
        };
    }
    let missed = (0..gts.len())
        .filter(|&g| !gts[g].ignore && !taken[g])
        .collect();
    Matching { outcomes, missed }
}

/// Additive evaluation tallies; ratios are taken only after summing.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalCounts {
    pub matched: usize,
    pub false_positives: usize,
    pub missed: usize,
    /// Sum of per-item normalized edit distances.
    pub ned_sum: f64,
}

impl std::ops::Add for EvalCounts {
    type Output = EvalCounts;
    fn add(self, o: EvalCounts) -> EvalCounts {
        EvalCounts {
            matched: self.matched + o.matched,
            false_positives: self.false_positives + o.false_positives,
            missed: self.missed + o.missed,
            ned_sum: self.ned_sum + o.ned_sum,
        }
    }
}

impl EvalCounts {
    pub fn from_matching(m: &Matching, dets: &[SpottedLine], gts: &[GroundTruthLine]) -> Self {
        let mut ned_sum = 0.0;
        for (d, o) in m.outcomes.iter().enumerate() {
            match o {
                DetectionOutcome::Matched(g) => {
                    ned_sum += normalized_edit_distance(&dets[d].transcript, &gts[*g].transcript)
                }
                DetectionOutcome::FalsePositive => ned_sum += 1.0,
                DetectionOutcome::Ignored => {}
            }
        }
        ned_sum += m.missed.len() as f64;
        Self {
            matched: m.matched(),
            false_positives: m.false_positives(),
            missed: m.missed.len(),
            ned_sum,
        }
    }

    pub fn report(&self) -> EvalReport {
        let (precision, recall, f_measure) =
            det_eval(self.matched, self.false_positives, self.missed);
        let items = self.matched + self.false_positives + self.missed;
        let one_minus_ned = if items == 0 {
            1.0
        } else {
            (1.0 - self.ned_sum / items as f64).clamp(0.0, 1.0)
        };
        EvalReport {
            precision,
            recall,
            f_measure,
            one_minus_ned,
            matched: self.matched,
            false_positives: self.false_positives,
            missed: self.missed,
        }
    }
}

/// Precision, recall and their harmonic mean; zero denominators give 0.
pub fn det_eval(matched: usize, false_positives: usize, missed: usize) -> (f64, f64, f64) {
    let ratio = |num: usize, den: usize| {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let p = ratio(matched, matched + false_positives);
    let r = ratio(matched, matched + missed);
    let f = if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    };
    (p, r, f)
}

/// 1 - mean normalized edit distance, where every unmatched detection or
/// ground truth contributes a distance of 1.
pub fn one_minus_ned(m: &Matching, dets: &[SpottedLine], gts: &[GroundTruthLine]) -> f64 {
    EvalCounts::from_matching(m, dets, gts)
        .report()
        .one_minus_ned
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
    pub one_minus_ned: f64,
    pub matched: usize,
    pub false_positives: usize,
    pub missed: usize,
}

/// Evaluates one image.
pub fn evaluate(dets: &[SpottedLine], gts: &[GroundTruthLine], iou_thr: f64) -> EvalCounts {
    let m = match_lines(dets, gts, iou_thr);
    EvalCounts::from_matching(&m, dets, gts)
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<10} {:>8} {:>8} {:>8} {:>8}",
            "", "P", "R", "F", "1-NED"
        )?;
        writeln!(
            f,
            "{:<10} {:>8.2} {:>8.2} {:>8.2} {:>8.2}",
            "score",
            100.0 * self.precision,
            100.0 * self.recall,
            100.0 * self.f_measure,
            100.0 * self.one_minus_ned
        )?;
        write!(
            f,
            "matched={} false_positives={} missed={}",
            self.matched, self.false_positives, self.missed
        )
    }
}
