//! Planar geometry in the local metric frame.
//!
//! Everything here works on `f64` metres east/north of a scene origin. Polygons
//! are stored as open rings (the closing vertex is implied).

use serde::{Deserialize, Serialize};

/// A point in metres east (`x`) and north (`y`) of the scene origin.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LocalPoint {
    pub x: f64,
    pub y: f64,
}

impl LocalPoint {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &LocalPoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Axis-aligned rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: LocalPoint,
    pub max: LocalPoint,
}

impl Rect {
    pub fn new(min: LocalPoint, max: LocalPoint) -> Self {
        Self { min, max }
    }

    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a LocalPoint>) -> Option<Rect> {
        let mut it = points.into_iter();
        let first = *it.next()?;
        let mut rect = Rect::new(first, first);
        for p in it {
            rect.min.x = rect.min.x.min(p.x);
            rect.min.y = rect.min.y.min(p.y);
            rect.max.x = rect.max.x.max(p.x);
            rect.max.y = rect.max.y.max(p.y);
        }
        Some(rect)
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn contains(&self, p: &LocalPoint) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn contains_rect(&self, other: &Rect) -> bool {
        self.contains(&other.min) && self.contains(&other.max)
    }

    pub fn intersects(&self, other: &Rect) -> bool {
        self.min.x <= other.max.x
            && other.min.x <= self.max.x
            && self.min.y <= other.max.y
            && other.min.y <= self.max.y
    }
}

/// Simple polygon stored as an open ring of at least three vertices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    pub vertices: Vec<LocalPoint>,
}

impl Polygon {
    /// Builds a polygon from a ring, dropping a duplicated closing vertex and
    /// consecutive duplicates.
    pub fn from_ring(mut ring: Vec<LocalPoint>) -> Self {
        ring.dedup();
        if ring.len() > 1 && ring.first() == ring.last() {
            ring.pop();
        }
        Self { vertices: ring }
    }

    pub fn rectangle(min: LocalPoint, max: LocalPoint) -> Self {
        Self {
            vertices: vec![
                min,
                LocalPoint::new(max.x, min.y),
                max,
                LocalPoint::new(min.x, max.y),
            ],
        }
    }

    pub fn edges(&self) -> impl Iterator<Item = (LocalPoint, LocalPoint)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    /// Shoelace signed area; positive for counter-clockwise rings.
    pub fn signed_area(&self) -> f64 {
        self.edges().map(|(a, b)| a.x * b.y - b.x * a.y).sum::<f64>() / 2.0
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    pub fn bbox(&self) -> Option<Rect> {
        Rect::from_points(&self.vertices)
    }

    /// Even-odd point-in-polygon test.
    pub fn contains(&self, p: &LocalPoint) -> bool {
        let mut inside = false;
        for (a, b) in self.edges() {
            if (a.y > p.y) != (b.y > p.y) {
                let x_cross = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
                if p.x < x_cross {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// True when the ring has at least three vertices, non-zero area and no
    /// two non-adjacent edges touch.
    pub fn is_simple(&self) -> bool {
        let n = self.vertices.len();
        if n < 3 || !self.vertices.iter().all(LocalPoint::is_finite) {
            return false;
        }
        if self.area() <= f64::EPSILON {
            return false;
        }
        let edges: Vec<_> = self.edges().collect();
        for i in 0..n {
            for j in (i + 1)..n {
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                let (a, b) = edges[i];
                let (c, d) = edges[j];
                if adjacent {
                    // Adjacent edges may only share their common vertex; folding back
                    // onto each other is a degeneracy.
                    if n > 3 && collinear_overlap(a, b, c, d) {
                        return false;
                    }
                    continue;
                }
                if segments_touch(a, b, c, d) {
                    return false;
                }
            }
        }
        true
    }

    /// Number of edges the segment `p`→`q` crosses.
    ///
    /// Each edge is treated as half-open (start vertex included, end vertex
    /// excluded) so a segment passing exactly through a vertex counts it once.
    /// Collinear overlaps are not counted.
    pub fn crossings(&self, p: LocalPoint, q: LocalPoint) -> usize {
        self.edges()
            .filter(|&(a, b)| segment_crosses_edge(p, q, a, b))
            .count()
    }

    /// Clips the polygon to an axis-aligned rectangle (Sutherland–Hodgman).
    pub fn clip_to_rect(&self, rect: &Rect) -> Polygon {
        let mut ring = self.vertices.clone();
        type Inside = fn(&LocalPoint, &Rect) -> bool;
        let planes: [(Inside, Edge); 4] = [
            (|p, r| p.x >= r.min.x, Edge::Left),
            (|p, r| p.x <= r.max.x, Edge::Right),
            (|p, r| p.y >= r.min.y, Edge::Bottom),
            (|p, r| p.y <= r.max.y, Edge::Top),
        ];
        for (inside, edge) in planes {
            if ring.is_empty() {
                break;
            }
            let input = std::mem::take(&mut ring);
            let n = input.len();
            for i in 0..n {
                let cur = input[i];
                let prev = input[(i + n - 1) % n];
                let cur_in = inside(&cur, rect);
                let prev_in = inside(&prev, rect);
                if cur_in {
                    if !prev_in {
                        ring.push(edge.intersect(prev, cur, rect));
                    }
                    ring.push(cur);
                } else if prev_in {
                    ring.push(edge.intersect(prev, cur, rect));
                }
            }
        }
        Polygon::from_ring(ring)
    }
}

#[derive(Clone, Copy)]
enum Edge {
    Left,
    Right,
    Bottom,
    Top,
}

impl Edge {
    fn intersect(self, a: LocalPoint, b: LocalPoint, r: &Rect) -> LocalPoint {
        match self {
            Edge::Left | Edge::Right => {
                let x = if matches!(self, Edge::Left) { r.min.x } else { r.max.x };
                let t = (x - a.x) / (b.x - a.x);
                LocalPoint::new(x, a.y + t * (b.y - a.y))
            }
            Edge::Bottom | Edge::Top => {
                let y = if matches!(self, Edge::Bottom) { r.min.y } else { r.max.y };
                let t = (y - a.y) / (b.y - a.y);
                LocalPoint::new(a.x + t * (b.x - a.x), y)
            }
        }
    }
}

/// Open polyline (roads).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polyline {
    pub points: Vec<LocalPoint>,
}

impl Polyline {
    /// Clips every segment to `rect` (Liang–Barsky) and returns the surviving
    /// connected pieces.
    pub fn clip_to_rect(&self, rect: &Rect) -> Vec<Polyline> {
        let mut pieces = Vec::new();
        let mut current: Vec<LocalPoint> = Vec::new();
        for w in self.points.windows(2) {
            match clip_segment(w[0], w[1], rect) {
                Some((a, b)) => {
                    if current.last() != Some(&a) {
                        if current.len() >= 2 {
                            pieces.push(Polyline { points: std::mem::take(&mut current) });
                        }
                        current.clear();
                        current.push(a);
                    }
                    if a != b {
                        current.push(b);
                    }
                }
                None => {
                    if current.len() >= 2 {
                        pieces.push(Polyline { points: std::mem::take(&mut current) });
                    }
                    current.clear();
                }
            }
        }
        if current.len() >= 2 {
            pieces.push(Polyline { points: current });
        }
        pieces
    }
}

fn clip_segment(a: LocalPoint, b: LocalPoint, r: &Rect) -> Option<(LocalPoint, LocalPoint)> {
    let dx = b.x - a.x;
    let dy = b.y - a.y;
    let mut t0 = 0.0_f64;
    let mut t1 = 1.0_f64;
    for (p, q) in [
        (-dx, a.x - r.min.x),
        (dx, r.max.x - a.x),
        (-dy, a.y - r.min.y),
        (dy, r.max.y - a.y),
    ] {
        if p == 0.0 {
            if q < 0.0 {
                return None;
            }
        } else {
            let t = q / p;
            if p < 0.0 {
                t0 = t0.max(t);
            } else {
                t1 = t1.min(t);
            }
            if t0 > t1 {
                return None;
            }
        }
    }
    let at = |t: f64| LocalPoint::new(a.x + t * dx, a.y + t * dy);
    Some((if t0 == 0.0 { a } else { at(t0) }, if t1 == 1.0 { b } else { at(t1) }))
}

fn cross(o: LocalPoint, a: LocalPoint, b: LocalPoint) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

fn on_segment(a: LocalPoint, b: LocalPoint, p: LocalPoint) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

/// Closed-segment intersection test (touching counts).
pub fn segments_touch(a: LocalPoint, b: LocalPoint, c: LocalPoint, d: LocalPoint) -> bool {
    let d1 = cross(c, d, a);
    let d2 = cross(c, d, b);
    let d3 = cross(a, b, c);
    let d4 = cross(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(c, d, a))
        || (d2 == 0.0 && on_segment(c, d, b))
        || (d3 == 0.0 && on_segment(a, b, c))
        || (d4 == 0.0 && on_segment(a, b, d))
}

fn collinear_overlap(a: LocalPoint, b: LocalPoint, c: LocalPoint, d: LocalPoint) -> bool {
    if cross(a, b, c) != 0.0 || cross(a, b, d) != 0.0 {
        return false;
    }
    // Shared endpoint is expected; anything more is an overlap.
    let shared = [a, b].iter().filter(|p| **p == c || **p == d).count();
    let interior = |p: LocalPoint, s: LocalPoint, e: LocalPoint| on_segment(s, e, p) && p != s && p != e;
    shared < 2 && (interior(c, a, b) || interior(d, a, b) || interior(a, c, d) || interior(b, c, d))
}

/// Parametric crossing test of segment `p`→`q` against edge `a`→`b`, with the
/// edge parameter half-open on `[0, 1)`.
fn segment_crosses_edge(p: LocalPoint, q: LocalPoint, a: LocalPoint, b: LocalPoint) -> bool {
    let r = LocalPoint::new(q.x - p.x, q.y - p.y);
    let s = LocalPoint::new(b.x - a.x, b.y - a.y);
    let denom = r.x * s.y - r.y * s.x;
    if denom == 0.0 {
        return false;
    }
    let ap = LocalPoint::new(a.x - p.x, a.y - p.y);
    let t = (ap.x * s.y - ap.y * s.x) / denom;
    let u = (ap.x * r.y - ap.y * r.x) / denom;
    (0.0..=1.0).contains(&t) && (0.0..1.0).contains(&u)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(x0: f64, y0: f64, side: f64) -> Polygon {
        Polygon::rectangle(LocalPoint::new(x0, y0), LocalPoint::new(x0 + side, y0 + side))
    }

    #[test]
    fn area_and_containment() {
        let sq = square(0.0, 0.0, 10.0);
        assert_eq!(sq.area(), 100.0);
        assert!(sq.contains(&LocalPoint::new(5.0, 5.0)));
        assert!(!sq.contains(&LocalPoint::new(15.0, 5.0)));
    }

    #[test]
    fn closing_vertex_is_dropped() {
        let ring = vec![
            LocalPoint::new(0.0, 0.0),
            LocalPoint::new(1.0, 0.0),
            LocalPoint::new(1.0, 1.0),
            LocalPoint::new(0.0, 0.0),
        ];
        assert_eq!(Polygon::from_ring(ring).vertices.len(), 3);
    }

    #[test]
    fn bowtie_is_not_simple() {
        let bowtie = Polygon::from_ring(vec![
            LocalPoint::new(0.0, 0.0),
            LocalPoint::new(10.0, 10.0),
            LocalPoint::new(10.0, 0.0),
            LocalPoint::new(0.0, 10.0),
        ]);
        assert!(!bowtie.is_simple());
        assert!(square(0.0, 0.0, 3.0).is_simple());
    }

    #[test]
    fn degenerate_rings_are_not_simple() {
        let line = Polygon::from_ring(vec![
            LocalPoint::new(0.0, 0.0),
            LocalPoint::new(1.0, 0.0),
            LocalPoint::new(2.0, 0.0),
        ]);
        assert!(!line.is_simple());
        let two = Polygon::from_ring(vec![LocalPoint::new(0.0, 0.0), LocalPoint::new(1.0, 0.0)]);
        assert!(!two.is_simple());
    }

    #[test]
    fn crossings_through_square() {
        let sq = square(40.0, 40.0, 20.0);
        assert_eq!(sq.crossings(LocalPoint::new(0.0, 50.0), LocalPoint::new(100.0, 50.0)), 2);
        assert_eq!(sq.crossings(LocalPoint::new(0.0, 50.0), LocalPoint::new(50.0, 50.0)), 1);
        assert_eq!(sq.crossings(LocalPoint::new(0.0, 0.0), LocalPoint::new(100.0, 0.0)), 0);
        // Through two opposite corners: each corner counted once.
        assert_eq!(sq.crossings(LocalPoint::new(30.0, 30.0), LocalPoint::new(70.0, 70.0)), 2);
    }

    #[test]
    fn clip_polygon_to_rect() {
        let sq = square(-5.0, -5.0, 10.0);
        let r = Rect::new(LocalPoint::new(0.0, 0.0), LocalPoint::new(100.0, 100.0));
        let clipped = sq.clip_to_rect(&r);
        assert!((clipped.area() - 25.0).abs() < 1e-9);
        assert!(clipped.vertices.iter().all(|p| r.contains(p)));
        let outside = square(200.0, 200.0, 5.0).clip_to_rect(&r);
        assert!(outside.vertices.is_empty());
    }

    #[test]
    fn clip_polyline_splits_pieces() {
        let r = Rect::new(LocalPoint::new(0.0, 0.0), LocalPoint::new(10.0, 10.0));
        let line = Polyline {
            points: vec![
                LocalPoint::new(-5.0, 5.0),
                LocalPoint::new(5.0, 5.0),
                LocalPoint::new(5.0, 20.0),
                LocalPoint::new(8.0, 20.0),
                LocalPoint::new(8.0, 5.0),
            ],
        };
        let pieces = line.clip_to_rect(&r);
        assert_eq!(pieces.len(), 2);
        assert_eq!(pieces[0].points, vec![
            LocalPoint::new(0.0, 5.0),
            LocalPoint::new(5.0, 5.0),
            LocalPoint::new(5.0, 10.0)
        ]);
        assert_eq!(pieces[1].points, vec![LocalPoint::new(8.0, 10.0), LocalPoint::new(8.0, 5.0)]);
    }
}
