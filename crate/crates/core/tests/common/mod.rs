//! Independent reference implementations used by the integration and
//! acceptance tests. Nothing here calls into the library's geometry.

#![allow(dead_code)]

use std::f64::consts::TAU;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub type Pt = [f64; 2];
/// `[x_min, y_min, x_max, y_max]`
pub type Rect = [f64; 4];

/// Half-plane sign test; accepts either winding.
pub fn inside(poly: &[Pt], p: Pt) -> bool {
    let mut sign = 0.0f64;
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        let cross = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
        if cross != 0.0 {
            if sign == 0.0 {
                sign = cross.signum();
            } else if cross.signum() != sign {
                return false;
            }
        }
    }
    true
}

pub fn bounds(poly: &[Pt]) -> Rect {
    poly.iter().fold(
        [
            f64::INFINITY,
            f64::INFINITY,
            f64::NEG_INFINITY,
            f64::NEG_INFINITY,
        ],
        |r, p| {
            [
                r[0].min(p[0]),
                r[1].min(p[1]),
                r[2].max(p[0]),
                r[3].max(p[1]),
            ]
        },
    )
}

/// Stratified Monte-Carlo estimate of `area(a ∩ b)`: one uniform sample in
/// each cell of a `side x side` grid over `region`.
pub fn mc_overlap(a: &[Pt], b: &[Pt], region: Rect, side: usize, rng: &mut ChaCha8Rng) -> f64 {
    let (ba, bb) = (bounds(a), bounds(b));
    let clip = [
        ba[0].max(bb[0]),
        ba[1].max(bb[1]),
        ba[2].min(bb[2]),
        ba[3].min(bb[3]),
    ];
    let cw = (region[2] - region[0]) / side as f64;
    let ch = (region[3] - region[1]) / side as f64;
    let mut hits = 0usize;
    for i in 0..side {
        for j in 0..side {
            let p = [
                region[0] + (i as f64 + rng.random::<f64>()) * cw,
                region[1] + (j as f64 + rng.random::<f64>()) * ch,
            ];
            if p[0] < clip[0] || p[0] > clip[2] || p[1] < clip[1] || p[1] > clip[3] {
                continue;
            }
            if inside(a, p) && inside(b, p) {
                hits += 1;
            }
        }
    }
    hits as f64 * cw * ch
}

/// A convex quadrilateral inscribed in a random circle that fits inside `[0, extent]²`.
pub fn random_convex_quad(rng: &mut ChaCha8Rng, extent: f64) -> Vec<Pt> {
    let mid = extent / 2.0;
    random_convex_quad_near(rng, extent, [mid, mid], mid)
}

/// Like [`random_convex_quad`], with the circle center within `spread` of `anchor`.
pub fn random_convex_quad_near(
    rng: &mut ChaCha8Rng,
    extent: f64,
    anchor: Pt,
    spread: f64,
) -> Vec<Pt> {
    let lo = |v: f64| (v - spread).max(5.0);
    let hi = |v: f64| (v + spread).min(extent - 5.0);
    loop {
        let cx = rng.random_range(lo(anchor[0])..hi(anchor[0]));
        let cy = rng.random_range(lo(anchor[1])..hi(anchor[1]));
        let room = cx.min(cy).min(extent - cx).min(extent - cy);
        let r = rng.random_range(2.0..=room.min(45.0));
        let mut angles: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..TAU)).collect();
        angles.sort_by(f64::total_cmp);
        let min_gap = (0..4)
            .map(|i| {
                let next = if i == 3 {
                    angles[0] + TAU
                } else {
                    angles[i + 1]
                };
                next - angles[i]
            })
            .fold(f64::INFINITY, f64::min);
        if min_gap < 0.2 {
            continue;
        }
        return angles
            .iter()
            .map(|t| [cx + r * t.cos(), cy + r * t.sin()])
            .collect();
    }
}

/// Horizontal extent of a convex polygon on the line at height `y`.
pub fn span_at(poly: &[Pt], y: f64) -> Option<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        if (a[1] <= y && y <= b[1]) || (b[1] <= y && y <= a[1]) {
            if a[1] == b[1] {
                lo = lo.min(a[0].min(b[0]));
                hi = hi.max(a[0].max(b[0]));
            } else {
                let x = a[0] + (y - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
                lo = lo.min(x);
                hi = hi.max(x);
            }
        }
    }
    (lo <= hi).then_some((lo, hi))
}

/// Overlap of a convex polygon and a rectangle by midpoint scanlines.
pub fn scanline_overlap(poly: &[Pt], r: Rect, rows: usize) -> f64 {
    let dy = (r[3] - r[1]) / rows as f64;
    (0..rows)
        .filter_map(|k| span_at(poly, r[1] + (k as f64 + 0.5) * dy))
        .map(|(lo, hi)| (hi.min(r[2]) - lo.max(r[0])).max(0.0) * dy)
        .sum()
}

/// Brute-force recognition: scanline overlap ratio against `thr`, then a
/// stable sort on box centers along the dominant axis.
/// Returns the transcript and how many characters had a ratio within
/// `1e-6` of the threshold (where the oracle itself is not decisive).
pub fn reference_recognize(poly: &[Pt], chars: &[(Rect, char)], thr: f64) -> (String, usize) {
    let ext = bounds(poly);
    let horizontal = ext[2] - ext[0] > ext[3] - ext[1];
    let mut close = 0;
    let mut hits: Vec<(f64, char)> = Vec::new();
    for (r, label) in chars {
        let area = (r[2] - r[0]) * (r[3] - r[1]);
        if area <= 0.0 {
            continue;
        }
        let ratio = scanline_overlap(poly, *r, 2000) / area;
        if (ratio - thr).abs() < 1e-6 {
            close += 1;
        }
        if ratio > thr {
            let key = if horizontal {
                (r[0] + r[2]) / 2.0
            } else {
                (r[1] + r[3]) / 2.0
            };
            hits.push((key, *label));
        }
    }
    hits.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    (hits.into_iter().map(|h| h.1).collect(), close)
}

pub fn rect_iou(a: Rect, b: Rect) -> f64 {
    let w = (a[2].min(b[2]) - a[0].max(b[0])).max(0.0);
    let h = (a[3].min(b[3]) - a[1].max(b[1])).max(0.0);
    let inter = w * h;
    let union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Quadratic greedy suppression: repeatedly take the best remaining box
/// (lowest index on ties) and strike everything overlapping it by more
/// than `thr`. Kept indices come back ascending.
pub fn reference_nms(boxes: &[Rect], scores: &[f64], thr: f64) -> Vec<usize> {
    let n = boxes.len();
    let mut done = vec![false; n];
    let mut kept = Vec::new();
    loop {
        let mut best: Option<usize> = None;
        for i in 0..n {
            if !done[i] && best.is_none_or(|b| scores[i] > scores[b]) {
                best = Some(i);
            }
        }
        let Some(i) = best else { break };
        done[i] = true;
        kept.push(i);
        for j in 0..n {
            if !done[j] && rect_iou(boxes[i], boxes[j]) > thr {
                done[j] = true;
            }
        }
    }
    kept.sort_unstable();
    kept
}

/// Plain recursive Levenshtein distance.
pub fn lev_recursive(a: &[char], b: &[char]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    if a[0] == b[0] {
        return lev_recursive(&a[1..], &b[1..]);
    }
    1 + lev_recursive(&a[1..], b)
        .min(lev_recursive(a, &b[1..]))
        .min(lev_recursive(&a[1..], &b[1..]))
}

pub fn random_word(rng: &mut ChaCha8Rng, alphabet: &[char], max_len: usize) -> String {
    let len = rng.random_range(0..=max_len);
    (0..len)
        .map(|_| alphabet[rng.random_range(0..alphabet.len())])
        .collect()
}

/// Probability that a random positive outscores a random negative (ties count half).
pub fn auc(pos: &[f64], neg: &[f64]) -> f64 {
    let mut wins = 0.0;
    for p in pos {
        for n in neg {
            if p > n {
                wins += 1.0;
            } else if p == n {
                wins += 0.5;
            }
        }
    }
    wins / (pos.len() * neg.len()) as f64
}
