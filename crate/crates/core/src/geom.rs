//! Exact planar geometry for character boxes and text-line polygons.
//!
//! Areas are computed with the shoelace formula and intersections by
//! Sutherland-Hodgman clipping of one convex polygon against the half-planes
//! of the other. Two axis-aligned inputs take a closed-form path so that
//! overlaps built from exact coordinates produce exact ratios.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Two reals closer than this are treated as equal.
pub const EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeomError {
    #[error("non-finite coordinate")]
    NonFinite,
    #[error("polygon needs at least 3 distinct vertices, got {0}")]
    TooFewVertices(usize),
    #[error("polygon is not convex (reflex vertex at index {0})")]
    NonConvex(usize),
    #[error("degenerate geometry (area {0})")]
    Degenerate(f64),
    #[error("inverted box extents")]
    InvertedBox,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Cross product of (b - a) x (p - a). Positive when `p` lies left of a->b.
#[inline]
fn cross(a: Point, b: Point, p: Point) -> f64 {
    (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisAlignedBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl AxisAlignedBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self, GeomError> {
        if ![x_min, y_min, x_max, y_max].iter().all(|v| v.is_finite()) {
            return Err(GeomError::NonFinite);
        }
        if x_min > x_max || y_min > y_max {
            return Err(GeomError::InvertedBox);
        }
        Ok(Self {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    pub fn from_center(center: Point, width: f64, height: f64) -> Result<Self, GeomError> {
        Self::new(
            center.x - width / 2.0,
            center.y - height / 2.0,
            center.x + width / 2.0,
            center.y + height / 2.0,
        )
    }

    /// Tight box around a set of points. `None` for an empty set.
    pub fn enclosing<'a>(points: impl IntoIterator<Item = &'a Point>) -> Option<Self> {
        let mut it = points.into_iter();
        let first = it.next()?;
        let mut b = Self {
            x_min: first.x,
            y_min: first.y,
            x_max: first.x,
            y_max: first.y,
        };
        for p in it {
            b.x_min = b.x_min.min(p.x);
            b.y_min = b.y_min.min(p.y);
            b.x_max = b.x_max.max(p.x);
            b.y_max = b.y_max.max(p.y);
        }
        Some(b)
    }

    pub fn union(&self, other: &AxisAlignedBox) -> AxisAlignedBox {
        AxisAlignedBox {
            x_min: self.x_min.min(other.x_min),
            y_min: self.y_min.min(other.y_min),
            x_max: self.x_max.max(other.x_max),
            y_max: self.y_max.max(other.y_max),
        }
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> Point {
        Point::new(
            (self.x_min + self.x_max) / 2.0,
            (self.y_min + self.y_max) / 2.0,
        )
    }

    pub fn scale(&self) -> f64 {
        self.area().sqrt()
    }

    pub fn intersection_area(&self, other: &AxisAlignedBox) -> f64 {
        let w = self.x_max.min(other.x_max) - self.x_min.max(other.x_min);
        let h = self.y_max.min(other.y_max) - self.y_min.max(other.y_min);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    pub fn translate(&self, dx: f64, dy: f64) -> AxisAlignedBox {
        AxisAlignedBox {
            x_min: self.x_min + dx,
            y_min: self.y_min + dy,
            x_max: self.x_max + dx,
            y_max: self.y_max + dy,
        }
    }

    /// Scales about `origin` by `k > 0`.
    pub fn scale_about(&self, origin: Point, k: f64) -> AxisAlignedBox {
        AxisAlignedBox {
            x_min: origin.x + (self.x_min - origin.x) * k,
            y_min: origin.y + (self.y_min - origin.y) * k,
            x_max: origin.x + (self.x_max - origin.x) * k,
            y_max: origin.y + (self.y_max - origin.y) * k,
        }
    }

    pub fn contains(&self, p: &Point) -> bool {
        p.x >= self.x_min - EPS
            && p.x <= self.x_max + EPS
            && p.y >= self.y_min - EPS
            && p.y <= self.y_max + EPS
    }

    /// Counter-clockwise corners starting at (x_min, y_min).
    pub fn corners(&self) -> [Point; 4] {
        [
            Point::new(self.x_min, self.y_min),
            Point::new(self.x_max, self.y_min),
            Point::new(self.x_max, self.y_max),
            Point::new(self.x_min, self.y_max),
        ]
    }

    pub fn to_polygon(&self) -> Result<ConvexPolygon, GeomError> {
        ConvexPolygon::new(self.corners().to_vec())
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }
}

/// A strictly convex polygon stored counter-clockwise (positive shoelace area).
///
/// Construction drops repeated and collinear vertices and reverses clockwise
/// input, so a polygon that round-trips unchanged is one given in that
/// normal form.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexPolygon {
    vertices: Vec<Point>,
    area: f64,
    rect: AxisAlignedBox,
    axis_aligned: bool,
}

fn signed_area(vertices: &[Point]) -> f64 {
    let n = vertices.len();
    let mut twice = 0.0;
    for i in 0..n {
        let a = vertices[i];
        let b = vertices[(i + 1) % n];
        twice += a.x * b.y - b.x * a.y;
    }
    twice / 2.0
}

impl ConvexPolygon {
    pub fn new(mut vertices: Vec<Point>) -> Result<Self, GeomError> {
        if !vertices.iter().all(Point::is_finite) {
            return Err(GeomError::NonFinite);
        }
        vertices.dedup_by(|a, b| a.distance(b) <= EPS);
        while vertices.len() > 1 && vertices[0].distance(&vertices[vertices.len() - 1]) <= EPS {
            vertices.pop();
        }
        if vertices.len() < 3 {
            return Err(GeomError::TooFewVertices(vertices.len()));
        }
        let area = signed_area(&vertices);
        if area.abs() <= EPS {
            return Err(GeomError::Degenerate(area.abs()));
        }
        if area < 0.0 {
            vertices.reverse();
        }
        // Drop collinear vertices, then reject any reflex turn.
        let mut i = 0;
        while i < vertices.len() && vertices.len() >= 3 {
            let n = vertices.len();
            let prev = vertices[(i + n - 1) % n];
            let next = vertices[(i + 1) % n];
            let c = cross(prev, vertices[i], next);
            let scale = prev.distance(&vertices[i]) * vertices[i].distance(&next);
            if c.abs() <= EPS * scale.max(1.0) {
                vertices.remove(i);
                i = i.saturating_sub(1);
                continue;
            }
            if c < 0.0 {
                return Err(GeomError::NonConvex(i));
            }
            i += 1;
        }
        if vertices.len() < 3 {
            return Err(GeomError::TooFewVertices(vertices.len()));
        }
        // Winding more than once around (a star) passes the local test above.
        let mut turn = 0.0;
        let n = vertices.len();
        for i in 0..n {
            let a = vertices[i];
            let b = vertices[(i + 1) % n];
            let c = vertices[(i + 2) % n];
            let h1 = (b.y - a.y).atan2(b.x - a.x);
            let h2 = (c.y - b.y).atan2(c.x - b.x);
            let mut d = h2 - h1;
            while d <= -std::f64::consts::PI {
                d += 2.0 * std::f64::consts::PI;
            }
            while d > std::f64::consts::PI {
                d -= 2.0 * std::f64::consts::PI;
            }
            turn += d;
        }
        if (turn - 2.0 * std::f64::consts::PI).abs() > 1e-6 {
            return Err(GeomError::NonConvex(0));
        }
        let area = signed_area(&vertices);
        if area <= EPS {
            return Err(GeomError::Degenerate(area));
        }
        let rect = AxisAlignedBox::enclosing(&vertices).expect("non-empty");
        let axis_aligned = n == 4
            && (0..4).all(|i| {
                let a = vertices[i];
                let b = vertices[(i + 1) % 4];
                a.x == b.x || a.y == b.y
            });
        Ok(Self {
            vertices,
            area,
            rect,
            axis_aligned,
        })
    }

    pub fn from_coords(coords: &[[f64; 2]]) -> Result<Self, GeomError> {
        Self::new(coords.iter().map(|c| Point::new(c[0], c[1])).collect())
    }

    /// `width` x `height` rectangle rotated by `angle` radians about `center`.
    pub fn rotated_rect(
        center: Point,
        width: f64,
        height: f64,
        angle: f64,
    ) -> Result<Self, GeomError> {
        let (s, c) = angle.sin_cos();
        let hw = width / 2.0;
        let hh = height / 2.0;
        let corners = [(-hw, -hh), (hw, -hh), (hw, hh), (-hw, hh)];
        Self::new(
            corners
                .iter()
                .map(|&(dx, dy)| Point::new(center.x + dx * c - dy * s, center.y + dx * s + dy * c))
                .collect(),
        )
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn to_coords(&self) -> Vec<[f64; 2]> {
        self.vertices.iter().map(|p| [p.x, p.y]).collect()
    }

    pub fn area(&self) -> f64 {
        self.area
    }

    /// Tight axis-aligned bounding rectangle.
    pub fn external_rect(&self) -> AxisAlignedBox {
        self.rect
    }

    /// Midpoint of the axis-aligned extents.
    pub fn center(&self) -> Point {
        self.rect.center()
    }

    pub fn scale(&self) -> f64 {
        self.area.sqrt()
    }

    /// The polygon's rectangle when it is an axis-aligned rectangle.
    pub fn as_axis_aligned(&self) -> Option<AxisAlignedBox> {
        self.axis_aligned.then_some(self.rect)
    }

    /// Point-in-polygon, boundary inclusive.
    pub fn contains(&self, p: &Point) -> bool {
        let n = self.vertices.len();
        (0..n).all(|i| cross(self.vertices[i], self.vertices[(i + 1) % n], *p) >= 0.0)
    }

    pub fn translate(&self, dx: f64, dy: f64) -> ConvexPolygon {
        let vertices = self
            .vertices
            .iter()
            .map(|p| Point::new(p.x + dx, p.y + dy))
            .collect();
        ConvexPolygon::new(vertices).expect("translation preserves validity")
    }

    pub fn scale_about(&self, origin: Point, k: f64) -> Result<ConvexPolygon, GeomError> {
        let vertices = self
            .vertices
            .iter()
            .map(|p| {
                Point::new(
                    origin.x + (p.x - origin.x) * k,
                    origin.y + (p.y - origin.y) * k,
                )
            })
            .collect();
        ConvexPolygon::new(vertices)
    }

    pub fn intersection_area(&self, other: &ConvexPolygon) -> f64 {
        if let (Some(a), Some(b)) = (self.as_axis_aligned(), other.as_axis_aligned()) {
            return a.intersection_area(&b);
        }
        if self.rect.intersection_area(&other.rect) <= 0.0 {
            return 0.0;
        }
        let clipped = clip_convex(&self.vertices, &other.vertices);
        clipped_area(&clipped).clamp(0.0, self.area.min(other.area))
    }

    /// Area of the overlap with an axis-aligned box.
    pub fn intersection_area_with_box(&self, b: &AxisAlignedBox) -> f64 {
        if let Some(a) = self.as_axis_aligned() {
            return a.intersection_area(b);
        }
        if self.rect.intersection_area(b) <= 0.0 {
            return 0.0;
        }
        let clipped = clip_convex(&b.corners(), &self.vertices);
        clipped_area(&clipped).clamp(0.0, self.area.min(b.area()))
    }

    pub fn iou(&self, other: &ConvexPolygon) -> f64 {
        let inter = self.intersection_area(other);
        let union = self.area + other.area - inter;
        if union <= EPS {
            return 0.0;
        }
        (inter / union).clamp(0.0, 1.0)
    }
}

fn clipped_area(vertices: &[Point]) -> f64 {
    if vertices.len() < 3 {
        0.0
    } else {
        signed_area(vertices).max(0.0)
    }
}

/// Clips `subject` against every left half-plane of the CCW convex `clipper`.
fn clip_convex(subject: &[Point], clipper: &[Point]) -> Vec<Point> {
    let mut output: Vec<Point> = subject.to_vec();
    let mut input = Vec::with_capacity(subject.len() + clipper.len());
    let m = clipper.len();
    for i in 0..m {
        if output.is_empty() {
            break;
        }
        let a = clipper[i];
        let b = clipper[(i + 1) % m];
        if a.distance(&b) <= EPS {
            continue;
        }
        std::mem::swap(&mut input, &mut output);
        output.clear();
        let n = input.len();
        for j in 0..n {
            let s = input[j];
            let e = input[(j + 1) % n];
            let ds = cross(a, b, s);
            let de = cross(a, b, e);
            let s_in = ds >= 0.0;
            let e_in = de >= 0.0;
            if s_in && e_in {
                output.push(e);
            } else if s_in != e_in {
                let t = ds / (ds - de);
                output.push(Point::new(s.x + (e.x - s.x) * t, s.y + (e.y - s.y) * t));
                if e_in {
                    output.push(e);
                }
            }
        }
        output.dedup_by(|p, q| p.distance(q) <= EPS);
        while output.len() > 1 && output[0].distance(&output[output.len() - 1]) <= EPS {
            output.pop();
        }
    }
    output
}

/// Shapes that expose the measurements the grouping rules rely on.
pub trait Shape {
    fn area(&self) -> f64;
    fn center(&self) -> Point;
    fn external_rect(&self) -> AxisAlignedBox;

    /// Square root of the area.
    fn scale(&self) -> f64 {
        self.area().sqrt()
    }
}

impl Shape for AxisAlignedBox {
    fn area(&self) -> f64 {
        AxisAlignedBox::area(self)
    }
    fn center(&self) -> Point {
        AxisAlignedBox::center(self)
    }
    fn external_rect(&self) -> AxisAlignedBox {
        *self
    }
}

impl Shape for ConvexPolygon {
    fn area(&self) -> f64 {
        self.area
    }
    fn center(&self) -> Point {
        ConvexPolygon::center(self)
    }
    fn external_rect(&self) -> AxisAlignedBox {
        self.rect
    }
}

/// Greedy non-maximum suppression.
///
/// Items are visited by descending score (equal scores: lower index first);
/// an item survives iff its IoU with every survivor so far is at most
/// `iou_threshold`. Returns surviving indices in ascending order.
pub fn nms(items: &[(&ConvexPolygon, f64)], iou_threshold: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by(|&a, &b| items[b].1.total_cmp(&items[a].1).then(a.cmp(&b)));
    let mut kept: Vec<usize> = Vec::new();
    for idx in order {
        let poly = items[idx].0;
        if kept.iter().all(|&k| poly.iou(items[k].0) <= iou_threshold) {
            kept.push(idx);
        }
    }
    kept.sort_unstable();
    kept
}
