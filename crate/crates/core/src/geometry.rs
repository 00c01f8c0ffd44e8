//! Planar polygon kernel.
//!
//! Every region the pipeline reasons about (footprints, corridors, conflict
//! areas) is represented as a set of pairwise interior-disjoint convex
//! polygons. Intersections of convex pieces are computed with
//! Sutherland-Hodgman clipping, differences with half-plane splitting, and
//! simple non-convex inputs (zones, ROI) are ear-clipped into triangles first.
//! Side classification goes through [`orient2d`], which falls back to exact
//! expansion arithmetic when the floating-point filter cannot decide the sign.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Pieces whose area falls below this are treated as numerical slivers.
pub const AREA_EPS: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("polygon needs at least 3 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("polygon has a non-finite vertex")]
    NonFinite,
    #[error("degenerate polygon (area {0:e})")]
    Degenerate(f64),
    #[error("polygon is not simple: edges {0} and {1} intersect")]
    NotSimple(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn lerp(self, other: Point, s: f64) -> Point {
        Point::new(self.x + (other.x - self.x) * s, self.y + (other.y - self.y) * s)
    }

    pub fn offset(self, dx: f64, dy: f64) -> Point {
        Point::new(self.x + dx, self.y + dy)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl From<[f64; 2]> for Point {
    fn from([x, y]: [f64; 2]) -> Self {
        Point { x, y }
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Point,
    pub max: Point,
}

impl Aabb {
    pub fn empty() -> Self {
        Aabb {
            min: Point::new(f64::INFINITY, f64::INFINITY),
            max: Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY),
        }
    }

    pub fn from_points(points: &[Point]) -> Self {
        points.iter().fold(Aabb::empty(), |acc, p| acc.expanded(*p))
    }

    pub fn expanded(self, p: Point) -> Self {
        Aabb {
            min: Point::new(self.min.x.min(p.x), self.min.y.min(p.y)),
            max: Point::new(self.max.x.max(p.x), self.max.y.max(p.y)),
        }
    }

    pub fn union(self, other: Aabb) -> Self {
        self.expanded(other.min).expanded(other.max)
    }

    pub fn intersects(&self, other: &Aabb) -> bool {
        self.min.x <= other.max.x
            && other.min.x <= self.max.x
            && self.min.y <= other.max.y
            && other.min.y <= self.max.y
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn area(&self) -> f64 {
        if self.max.x < self.min.x || self.max.y < self.min.y {
            0.0
        } else {
            (self.max.x - self.min.x) * (self.max.y - self.min.y)
        }
    }
}

// (3 + 16 eps) * eps, the stage-A bound of Shewchuk's orient2d.
const CCW_ERRBOUND_A: f64 = (3.0 + 16.0 * f64::EPSILON) * (f64::EPSILON / 2.0);

/// Twice the signed area of triangle `abc`: positive when `c` lies left of the
/// directed line `a -> b`. The sign is exact.
pub fn orient2d(a: Point, b: Point, c: Point) -> f64 {
    let detleft = (a.x - c.x) * (b.y - c.y);
    let detright = (a.y - c.y) * (b.x - c.x);
    let det = detleft - detright;
    let detsum = detleft.abs() + detright.abs();
    if det.abs() > CCW_ERRBOUND_A * detsum || detsum == 0.0 {
        return det;
    }
    orient2d_exact(a, b, c)
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let x = a + b;
    let bv = x - a;
    let av = x - bv;
    (x, (a - av) + (b - bv))
}

fn two_product(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

fn grow_expansion(expansion: &mut Vec<f64>, b: f64) {
    let mut q = b;
    for e in expansion.iter_mut() {
        let (sum, err) = two_sum(q, *e);
        *e = err;
        q = sum;
    }
    expansion.push(q);
}

fn orient2d_exact(a: Point, b: Point, c: Point) -> f64 {
    // det = ax*by - ax*cy - cx*by - ay*bx + ay*cx + cy*bx, every product split
    // into an exact (hi, lo) pair and summed as a nonoverlapping expansion.
    let terms = [
        (a.x, b.y),
        (-a.x, c.y),
        (-c.x, b.y),
        (-a.y, b.x),
        (a.y, c.x),
        (c.y, b.x),
    ];
    let mut expansion = Vec::with_capacity(24);
    for (u, v) in terms {
        let (hi, lo) = two_product(u, v);
        grow_expansion(&mut expansion, lo);
        grow_expansion(&mut expansion, hi);
    }
    expansion
        .iter()
        .rev()
        .copied()
        .find(|e| *e != 0.0)
        .unwrap_or(0.0)
}

fn signed_area_of(vertices: &[Point]) -> f64 {
    let n = vertices.len();
    if n < 3 {
        return 0.0;
    }
    let o = vertices[0];
    let mut acc = 0.0;
    for i in 1..n - 1 {
        let a = vertices[i];
        let b = vertices[i + 1];
        acc += (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
    }
    0.5 * acc
}

/// A closed polygon stored without repeating the first vertex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Point>", into = "Vec<Point>")]
pub struct Polygon {
    vertices: Vec<Point>,
}

impl TryFrom<Vec<Point>> for Polygon {
    type Error = GeometryError;

    fn try_from(value: Vec<Point>) -> Result<Self, Self::Error> {
        Polygon::new(value)
    }
}

impl From<Polygon> for Vec<Point> {
    fn from(p: Polygon) -> Self {
        p.vertices
    }
}

impl Polygon {
    /// Builds a polygon, rejecting fewer than 3 vertices, non-finite
    /// coordinates and zero area. Orientation is preserved.
    pub fn new(vertices: Vec<Point>) -> Result<Self, GeometryError> {
        if vertices.len() < 3 {
            return Err(GeometryError::TooFewVertices(vertices.len()));
        }
        if vertices.iter().any(|p| !p.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        let area = signed_area_of(&vertices);
        if area.abs() <= AREA_EPS * 1e-2 {
            return Err(GeometryError::Degenerate(area));
        }
        Ok(Polygon { vertices })
    }

    pub(crate) fn from_vertices_unchecked(vertices: Vec<Point>) -> Self {
        Polygon { vertices }
    }

    pub fn rectangle(min: Point, max: Point) -> Result<Self, GeometryError> {
        Polygon::new(vec![
            min,
            Point::new(max.x, min.y),
            max,
            Point::new(min.x, max.y),
        ])
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn signed_area(&self) -> f64 {
        signed_area_of(&self.vertices)
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    pub fn is_ccw(&self) -> bool {
        self.signed_area() > 0.0
    }

    /// Returns the polygon with counter-clockwise winding.
    pub fn into_ccw(mut self) -> Self {
        if !self.is_ccw() {
            self.vertices.reverse();
        }
        self
    }

    pub fn bbox(&self) -> Aabb {
        Aabb::from_points(&self.vertices)
    }

    pub fn centroid(&self) -> Point {
        let n = self.vertices.len();
        let (mut cx, mut cy, mut a2) = (0.0, 0.0, 0.0);
        let o = self.vertices[0];
        for i in 0..n {
            let p = self.vertices[i].offset(-o.x, -o.y);
            let q = self.vertices[(i + 1) % n].offset(-o.x, -o.y);
            let cross = p.x * q.y - q.x * p.y;
            a2 += cross;
            cx += (p.x + q.x) * cross;
            cy += (p.y + q.y) * cross;
        }
        Point::new(o.x + cx / (3.0 * a2), o.y + cy / (3.0 * a2))
    }

    /// Convex with CCW winding (collinear vertices allowed).
    pub fn is_convex(&self) -> bool {
        let n = self.vertices.len();
        let sign = if self.is_ccw() { 1.0 } else { -1.0 };
        (0..n).all(|i| {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            let c = self.vertices[(i + 2) % n];
            sign * orient2d(a, b, c) >= 0.0
        })
    }

    /// Checks that no two non-adjacent edges touch.
    pub fn check_simple(&self) -> Result<(), GeometryError> {
        let n = self.vertices.len();
        for i in 0..n {
            let (a, b) = (self.vertices[i], self.vertices[(i + 1) % n]);
            for j in i + 1..n {
                if j == i + 1 || (i == 0 && j == n - 1) {
                    continue;
                }
                let (c, d) = (self.vertices[j], self.vertices[(j + 1) % n]);
                if segments_intersect(a, b, c, d) {
                    return Err(GeometryError::NotSimple(i, j));
                }
            }
        }
        Ok(())
    }

    /// Point membership with the boundary counted as inside.
    pub fn contains(&self, p: Point) -> bool {
        let n = self.vertices.len();
        let mut winding = 0i32;
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            let o = orient2d(a, b, p);
            if o == 0.0 && on_segment_bbox(a, b, p) {
                return true;
            }
            if a.y <= p.y {
                if b.y > p.y && o > 0.0 {
                    winding += 1;
                }
            } else if b.y <= p.y && o < 0.0 {
                winding -= 1;
            }
        }
        winding != 0
    }

    pub fn map_points(&self, f: impl Fn(Point) -> Point) -> Polygon {
        Polygon {
            vertices: self.vertices.iter().map(|p| f(*p)).collect(),
        }
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Polygon {
        self.map_points(|p| p.offset(dx, dy))
    }

    /// Splits into convex CCW pieces: the polygon itself when already convex,
    /// otherwise an ear-clipping triangulation.
    pub fn convex_pieces(&self) -> Vec<Polygon> {
        let ccw = self.clone().into_ccw();
        if ccw.is_convex() {
            vec![ccw]
        } else {
            triangulate(&ccw)
                .into_iter()
                .map(|t| Polygon::from_vertices_unchecked(t.to_vec()))
                .collect()
        }
    }
}

fn on_segment_bbox(a: Point, b: Point, p: Point) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

/// Closed-segment intersection test.
pub fn segments_intersect(a: Point, b: Point, c: Point, d: Point) -> bool {
    let d1 = orient2d(c, d, a);
    let d2 = orient2d(c, d, b);
    let d3 = orient2d(a, b, c);
    let d4 = orient2d(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment_bbox(c, d, a))
        || (d2 == 0.0 && on_segment_bbox(c, d, b))
        || (d3 == 0.0 && on_segment_bbox(a, b, c))
        || (d4 == 0.0 && on_segment_bbox(a, b, d))
}

/// Ear-clipping triangulation of a simple CCW polygon.
pub fn triangulate(polygon: &Polygon) -> Vec<[Point; 3]> {
    let pts = polygon.vertices();
    let mut idx: Vec<usize> = (0..pts.len()).collect();
    let mut triangles = Vec::with_capacity(pts.len().saturating_sub(2));
    let mut guard = 0usize;
    while idx.len() > 3 {
        let m = idx.len();
        let mut clipped = false;
        for i in 0..m {
            let (ia, ib, ic) = (idx[(i + m - 1) % m], idx[i], idx[(i + 1) % m]);
            let (a, b, c) = (pts[ia], pts[ib], pts[ic]);
            if orient2d(a, b, c) <= 0.0 {
                continue;
            }
            let blocked = idx.iter().any(|&k| {
                k != ia
                    && k != ib
                    && k != ic
                    && orient2d(a, b, pts[k]) >= 0.0
                    && orient2d(b, c, pts[k]) >= 0.0
                    && orient2d(c, a, pts[k]) >= 0.0
            });
            if blocked {
                continue;
            }
            triangles.push([a, b, c]);
            idx.remove(i);
            clipped = true;
            break;
        }
        if !clipped {
            // Only collinear runs remain; drop the flattest vertex.
            guard += 1;
            if guard > pts.len() {
                break;
            }
            let m = idx.len();
            let flat = (0..m)
                .min_by(|&i, &j| {
                    let oi = orient2d(pts[idx[(i + m - 1) % m]], pts[idx[i]], pts[idx[(i + 1) % m]]);
                    let oj = orient2d(pts[idx[(j + m - 1) % m]], pts[idx[j]], pts[idx[(j + 1) % m]]);
                    oi.abs().total_cmp(&oj.abs())
                })
                .unwrap_or(0);
            idx.remove(flat);
        }
    }
    if idx.len() == 3 {
        let t = [pts[idx[0]], pts[idx[1]], pts[idx[2]]];
        if orient2d(t[0], t[1], t[2]) > 0.0 {
            triangles.push(t);
        }
    }
    triangles
}

/// Keeps the part of `subject` on the left of (or on) the directed line `a -> b`.
pub fn clip_halfplane(subject: &[Point], a: Point, b: Point) -> Vec<Point> {
    let n = subject.len();
    if n < 3 {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(n + 2);
    let sides: Vec<f64> = subject.iter().map(|p| orient2d(a, b, *p)).collect();
    for i in 0..n {
        let (s, e) = (subject[i], subject[(i + 1) % n]);
        let (ds, de) = (sides[i], sides[(i + 1) % n]);
        let s_in = ds >= 0.0;
        let e_in = de >= 0.0;
        if s_in {
            out.push(s);
        }
        if s_in != e_in && ds != 0.0 && de != 0.0 {
            let t = ds / (ds - de);
            out.push(s.lerp(e, t));
        }
    }
    dedup_ring(&mut out);
    out
}

fn dedup_ring(points: &mut Vec<Point>) {
    const TOL: f64 = 1e-12;
    points.dedup_by(|a, b| (a.x - b.x).abs() <= TOL && (a.y - b.y).abs() <= TOL);
    while points.len() > 1 {
        let (f, l) = (points[0], points[points.len() - 1]);
        if (f.x - l.x).abs() <= TOL && (f.y - l.y).abs() <= TOL {
            points.pop();
        } else {
            break;
        }
    }
}

/// Intersection of a convex-or-not `subject` ring with a convex CCW `clip`.
pub fn clip_convex(subject: &[Point], clip: &Polygon) -> Option<Polygon> {
    let cv = clip.vertices();
    let mut ring = subject.to_vec();
    for i in 0..cv.len() {
        ring = clip_halfplane(&ring, cv[i], cv[(i + 1) % cv.len()]);
        if ring.len() < 3 {
            return None;
        }
    }
    (signed_area_of(&ring) > AREA_EPS).then(|| Polygon::from_vertices_unchecked(ring))
}

/// Pieces of convex `a` lying outside convex `b`, as disjoint convex polygons.
pub fn convex_difference(a: &Polygon, b: &Polygon) -> Vec<Polygon> {
    if !a.bbox().intersects(&b.bbox()) || clip_convex(a.vertices(), b).is_none() {
        return vec![a.clone()];
    }
    let bv = b.vertices();
    let mut remaining = a.vertices().to_vec();
    let mut out = Vec::new();
    for i in 0..bv.len() {
        let (p, q) = (bv[i], bv[(i + 1) % bv.len()]);
        let outside = clip_halfplane(&remaining, q, p);
        if outside.len() >= 3 && signed_area_of(&outside) > AREA_EPS {
            out.push(Polygon::from_vertices_unchecked(outside));
        }
        remaining = clip_halfplane(&remaining, p, q);
        if remaining.len() < 3 || signed_area_of(&remaining) <= AREA_EPS {
            break;
        }
    }
    out
}

/// Monotone-chain convex hull, CCW, collinear points dropped.
pub fn convex_hull(points: &[Point]) -> Vec<Point> {
    let mut pts: Vec<Point> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<Point> = Vec::new();
    for p in &pts {
        while lower.len() >= 2 && orient2d(lower[lower.len() - 2], lower[lower.len() - 1], *p) <= 0.0 {
            lower.pop();
        }
        lower.push(*p);
    }
    let mut upper: Vec<Point> = Vec::new();
    for p in pts.iter().rev() {
        while upper.len() >= 2 && orient2d(upper[upper.len() - 2], upper[upper.len() - 1], *p) <= 0.0 {
            upper.pop();
        }
        upper.push(*p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Intersection of two simple polygons, returned as disjoint convex pieces.
pub fn polygon_intersection(a: &Polygon, b: &Polygon) -> Result<Vec<Polygon>, GeometryError> {
    for p in [a, b] {
        let area = p.area();
        if area <= AREA_EPS {
            return Err(GeometryError::Degenerate(area));
        }
    }
    if !a.bbox().intersects(&b.bbox()) {
        return Ok(Vec::new());
    }
    let pieces_b = b.convex_pieces();
    let mut out = Vec::new();
    for pa in a.convex_pieces() {
        for pb in &pieces_b {
            if pa.bbox().intersects(&pb.bbox()) {
                out.extend(clip_convex(pa.vertices(), pb));
            }
        }
    }
    Ok(out)
}

/// Union of pairwise interior-disjoint convex pieces.
#[derive(Debug, Clone, Default)]
pub struct Region {
    pieces: Vec<Polygon>,
    boxes: Vec<Aabb>,
}

impl Region {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn from_convex(p: Polygon) -> Self {
        let mut r = Region::empty();
        r.push_piece(p.into_ccw());
        r
    }

    /// Builds a region from pieces that are already disjoint and convex.
    pub fn from_disjoint_pieces(pieces: Vec<Polygon>) -> Self {
        let mut r = Region::empty();
        for p in pieces {
            r.push_piece(p.into_ccw());
        }
        r
    }

    /// Splits an arbitrary simple polygon into convex pieces.
    pub fn from_polygon(p: &Polygon) -> Self {
        Region::from_disjoint_pieces(p.convex_pieces())
    }

    fn push_piece(&mut self, p: Polygon) {
        self.boxes.push(p.bbox());
        self.pieces.push(p);
    }

    pub fn pieces(&self) -> &[Polygon] {
        &self.pieces
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn area(&self) -> f64 {
        self.pieces.iter().map(Polygon::area).sum()
    }

    pub fn bbox(&self) -> Aabb {
        self.boxes.iter().fold(Aabb::empty(), |acc, b| acc.union(*b))
    }

    pub fn contains(&self, p: Point) -> bool {
        self.pieces
            .iter()
            .zip(&self.boxes)
            .any(|(poly, bb)| bb.contains(p) && poly.contains(p))
    }

    /// Adds a convex polygon to the union, keeping only the parts not already
    /// covered so pieces stay disjoint.
    pub fn add_convex(&mut self, poly: &Polygon) {
        let poly = poly.clone().into_ccw();
        let pb = poly.bbox();
        let mut fragments = vec![poly];
        for (piece, bb) in self.pieces.iter().zip(&self.boxes) {
            if !bb.intersects(&pb) {
                continue;
            }
            let mut next = Vec::with_capacity(fragments.len());
            for f in fragments {
                if f.bbox().intersects(bb) {
                    next.extend(convex_difference(&f, piece));
                } else {
                    next.push(f);
                }
            }
            fragments = next;
            if fragments.is_empty() {
                return;
            }
        }
        for f in fragments {
            self.push_piece(f);
        }
    }

    /// Exact union of convex polygons. Each polygon contributes only its part
    /// outside the earlier polygons, which fragments much less than
    /// subtracting the already split union.
    pub fn union_of_convex(polys: &[Polygon]) -> Region {
        let polys: Vec<Polygon> = polys.iter().map(|p| p.clone().into_ccw()).collect();
        let boxes: Vec<Aabb> = polys.iter().map(Polygon::bbox).collect();
        let mut out = Region::empty();
        for k in 0..polys.len() {
            let mut fragments = vec![polys[k].clone()];
            for j in (0..k).rev() {
                if !boxes[j].intersects(&boxes[k]) {
                    continue;
                }
                let mut next = Vec::with_capacity(fragments.len());
                for f in fragments {
                    if f.bbox().intersects(&boxes[j]) {
                        next.extend(convex_difference(&f, &polys[j]));
                    } else {
                        next.push(f);
                    }
                }
                fragments = next;
                if fragments.is_empty() {
                    break;
                }
            }
            for f in fragments {
                out.push_piece(f);
            }
        }
        out
    }

    pub fn intersect(&self, other: &Region) -> Region {
        let mut out = Region::empty();
        for (pa, ba) in self.pieces.iter().zip(&self.boxes) {
            for (pb, bb) in other.pieces.iter().zip(&other.boxes) {
                if ba.intersects(bb) {
                    if let Some(p) = clip_convex(pa.vertices(), pb) {
                        out.push_piece(p);
                    }
                }
            }
        }
        out
    }

    /// Area of the overlap with a convex polygon.
    pub fn overlap_area(&self, poly: &Polygon) -> f64 {
        let pb = poly.bbox();
        let clip = poly.clone().into_ccw();
        self.pieces
            .iter()
            .zip(&self.boxes)
            .filter(|(_, bb)| bb.intersects(&pb))
            .filter_map(|(p, _)| clip_convex(p.vertices(), &clip))
            .map(|p| p.area())
            .sum()
    }

    /// Whether a convex polygon shares positive area with the region.
    pub fn overlaps(&self, poly: &Polygon) -> bool {
        let pb = poly.bbox();
        let clip = poly.clone().into_ccw();
        self.pieces
            .iter()
            .zip(&self.boxes)
            .any(|(p, bb)| bb.intersects(&pb) && clip_convex(p.vertices(), &clip).is_some())
    }
}
