//! Oriented-rectangle geometry.
//!
//! Coordinates follow the image convention: x grows rightward and y grows
//! downward. A rectangle's angle `theta` rotates its local frame by the
//! standard rotation matrix `[cos -sin; sin cos]` applied directly to image
//! coordinates, so "counterclockwise" below always refers to that math
//! convention (positive shoelace area), not to how the image looks on screen.
//!
//! All computations use `f64`.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance used to merge nearly coincident clip vertices.
pub const DEDUP_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("degenerate rectangle: w={w}, h={h}")]
    DegenerateRect { w: f64, h: f64 },
    #[error("non-finite rectangle parameter")]
    NonFinite,
    #[error("degenerate quadrilateral (collinear vertices or zero area)")]
    DegenerateQuad,
    #[error("self-intersecting quadrilateral")]
    SelfIntersectingQuad,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }

    fn dot(self, o: Point) -> f64 {
        self.x * o.x + self.y * o.y
    }

    fn cross(self, o: Point) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn dist(self, o: Point) -> f64 {
        (self.x - o.x).hypot(self.y - o.y)
    }
}

/// Wraps an angle into `[-pi/2, pi/2)`. A rectangle is symmetric under a
/// half-turn, so this never changes the shape.
pub fn canonical_angle(theta: f64) -> f64 {
    let mut t = theta - PI * ((theta + FRAC_PI_2) / PI).floor();
    if t >= FRAC_PI_2 {
        t -= PI;
    }
    if t < -FRAC_PI_2 {
        t += PI;
    }
    t
}

/// A rectangle given by its center, its extents along its own axes and the
/// rotation of its frame. `w > 0`, `h > 0` and `theta` lies in `[-pi/2, pi/2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RectFields", into = "RectFields")]
pub struct OrientedRect {
    cx: f64,
    cy: f64,
    w: f64,
    h: f64,
    theta: f64,
}

#[derive(Serialize, Deserialize)]
struct RectFields {
    cx: f64,
    cy: f64,
    w: f64,
    h: f64,
    theta: f64,
}

impl TryFrom<RectFields> for OrientedRect {
    type Error = GeomError;

    fn try_from(f: RectFields) -> Result<Self, GeomError> {
        OrientedRect::new(f.cx, f.cy, f.w, f.h, f.theta)
    }
}

impl From<OrientedRect> for RectFields {
    fn from(r: OrientedRect) -> Self {
        RectFields {
            cx: r.cx,
            cy: r.cy,
            w: r.w,
            h: r.h,
            theta: r.theta,
        }
    }
}

impl OrientedRect {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64, theta: f64) -> Result<Self, GeomError> {
        if ![cx, cy, w, h, theta].iter().all(|v| v.is_finite()) {
            return Err(GeomError::NonFinite);
        }
        if w <= 0.0 || h <= 0.0 {
            return Err(GeomError::DegenerateRect { w, h });
        }
        Ok(Self {
            cx,
            cy,
            w,
            h,
            theta: canonical_angle(theta),
        })
    }

    /// Axis-aligned rectangle from its bounds.
    pub fn from_aabb(b: &Aabb) -> Result<Self, GeomError> {
        let c = b.center();
        Self::new(c.x, c.y, b.width(), b.height(), 0.0)
    }

    pub fn cx(&self) -> f64 {
        self.cx
    }
    pub fn cy(&self) -> f64 {
        self.cy
    }
    pub fn w(&self) -> f64 {
        self.w
    }
    pub fn h(&self) -> f64 {
        self.h
    }
    pub fn theta(&self) -> f64 {
        self.theta
    }
    pub fn center(&self) -> Point {
        Point::new(self.cx, self.cy)
    }
    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// Unit vectors of the rect's local x and y axes in image coordinates.
    fn axes(&self) -> (Point, Point) {
        let (s, c) = self.theta.sin_cos();
        (Point::new(c, s), Point::new(-s, c))
    }

    /// Whether `p` lies inside or on the boundary.
    pub fn contains(&self, p: Point) -> bool {
        let (u, v) = self.axes();
        let d = p.sub(self.center());
        let eps = 1e-12 * (self.w + self.h);
        d.dot(u).abs() <= self.w / 2.0 + eps && d.dot(v).abs() <= self.h / 2.0 + eps
    }

    /// Same rect translated by `(dx, dy)`.
    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self {
            cx: self.cx + dx,
            cy: self.cy + dy,
            ..*self
        }
    }

    /// Same rect rotated by `angle` about `pivot`.
    pub fn rotated_about(&self, pivot: Point, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        let d = self.center().sub(pivot);
        Self {
            cx: pivot.x + c * d.x - s * d.y,
            cy: pivot.y + s * d.x + c * d.y,
            w: self.w,
            h: self.h,
            theta: canonical_angle(self.theta + angle),
        }
    }

    /// True when both describe the same point set, allowing for the
    /// `(w, h, theta) ~ (h, w, theta + pi/2)` ambiguity.
    pub fn approx_same(&self, other: &OrientedRect, tol: f64) -> bool {
        let a = to_corners(self);
        let b = to_corners(other);
        a.vertices()
            .iter()
            .all(|p| b.vertices().iter().any(|q| p.dist(*q) <= tol))
    }
}

/// Four vertices of a simple quadrilateral with non-zero area.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quad {
    pts: [Point; 4],
}

impl Quad {
    pub fn new(pts: [Point; 4]) -> Result<Self, GeomError> {
        if pts.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(GeomError::DegenerateQuad);
        }
        let scale = pts
            .iter()
            .flat_map(|p| [p.x.abs(), p.y.abs()])
            .fold(1.0_f64, f64::max);
        if shoelace(&pts).abs() <= 1e-12 * scale * scale {
            return Err(GeomError::DegenerateQuad);
        }
        // the two pairs of opposite edges must not cross
        for (a, b) in [(0, 2), (1, 3)] {
            let (p1, p2) = (pts[a], pts[(a + 1) % 4]);
            let (q1, q2) = (pts[b], pts[(b + 1) % 4]);
            if segments_cross(p1, p2, q1, q2) {
                return Err(GeomError::SelfIntersectingQuad);
            }
        }
        Ok(Self { pts })
    }

    pub fn points(&self) -> &[Point; 4] {
        &self.pts
    }
}

/// Convex polygon with counterclockwise winding.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConvexPolygon {
    pts: Vec<Point>,
}

impl ConvexPolygon {
    pub fn vertices(&self) -> &[Point] {
        &self.pts
    }

    pub fn area(&self) -> f64 {
        if self.pts.len() < 3 {
            return 0.0;
        }
        shoelace(&self.pts).abs()
    }

    pub fn is_empty(&self) -> bool {
        self.pts.len() < 3
    }

    /// Keeps the part of the polygon to the left of the directed line `a -> b`.
    fn clip_half_plane(&self, a: Point, b: Point) -> ConvexPolygon {
        let edge = b.sub(a);
        let side = |p: Point| edge.cross(p.sub(a));
        let n = self.pts.len();
        let mut out = Vec::with_capacity(n + 1);
        for i in 0..n {
            let cur = self.pts[i];
            let nxt = self.pts[(i + 1) % n];
            let (sc, sn) = (side(cur), side(nxt));
            if sc >= 0.0 {
                out.push(cur);
            }
            if (sc >= 0.0) != (sn >= 0.0) {
                let t = sc / (sc - sn);
                out.push(Point::new(
                    cur.x + t * (nxt.x - cur.x),
                    cur.y + t * (nxt.y - cur.y),
                ));
            }
        }
        dedup_ring(&mut out);
        ConvexPolygon { pts: out }
    }
}

fn dedup_ring(pts: &mut Vec<Point>) {
    pts.dedup_by(|a, b| a.dist(*b) <= DEDUP_EPS);
    while pts.len() > 1 && pts[0].dist(pts[pts.len() - 1]) <= DEDUP_EPS {
        pts.pop();
    }
}

fn shoelace(pts: &[Point]) -> f64 {
    let n = pts.len();
    let mut s = 0.0;
    for i in 0..n {
        s += pts[i].cross(pts[(i + 1) % n]);
    }
    s / 2.0
}

fn orient(a: Point, b: Point, c: Point) -> f64 {
    b.sub(a).cross(c.sub(a))
}

fn on_segment(a: Point, b: Point, p: Point) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

/// Closed-segment intersection test.
fn segments_cross(p1: Point, p2: Point, q1: Point, q2: Point) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(q1, q2, p1))
        || (d2 == 0.0 && on_segment(q1, q2, p2))
        || (d3 == 0.0 && on_segment(p1, p2, q1))
        || (d4 == 0.0 && on_segment(p1, p2, q2))
}

fn point_segment_dist(p: Point, a: Point, b: Point) -> f64 {
    let ab = b.sub(a);
    let len2 = ab.dot(ab);
    if len2 == 0.0 {
        return p.dist(a);
    }
    let t = (p.sub(a).dot(ab) / len2).clamp(0.0, 1.0);
    p.dist(Point::new(a.x + t * ab.x, a.y + t * ab.y))
}

/// Corners of `r` in counterclockwise order, starting from the local
/// `(-w/2, -h/2)` corner.
pub fn to_corners(r: &OrientedRect) -> ConvexPolygon {
    let (u, v) = r.axes();
    let (hw, hh) = (r.w / 2.0, r.h / 2.0);
    let pts = [(-hw, -hh), (hw, -hh), (hw, hh), (-hw, hh)]
        .iter()
        .map(|&(a, b)| Point::new(r.cx + a * u.x + b * v.x, r.cy + a * u.y + b * v.y))
        .collect();
    ConvexPolygon { pts }
}

/// Convex intersection of two rects, clipping `a` against the four
/// half-planes bounding `b`.
pub fn intersection_polygon(a: &OrientedRect, b: &OrientedRect) -> ConvexPolygon {
    let mut poly = to_corners(a);
    let clip = to_corners(b);
    let cv = clip.vertices();
    for i in 0..cv.len() {
        if poly.is_empty() {
            break;
        }
        poly = poly.clip_half_plane(cv[i], cv[(i + 1) % cv.len()]);
    }
    poly
}

pub fn intersection_area(a: &OrientedRect, b: &OrientedRect) -> f64 {
    let area = intersection_polygon(a, b).area();
    area.clamp(0.0, a.area().min(b.area()))
}

pub fn iou(a: &OrientedRect, b: &OrientedRect) -> f64 {
    let inter = intersection_area(a, b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Axis-aligned box `[xmin, xmax] x [ymin, ymax]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub xmin: f64,
    pub ymin: f64,
    pub xmax: f64,
    pub ymax: f64,
}

impl Aabb {
    pub fn new(xmin: f64, ymin: f64, xmax: f64, ymax: f64) -> Self {
        Self {
            xmin,
            ymin,
            xmax,
            ymax,
        }
    }

    pub fn width(&self) -> f64 {
        self.xmax - self.xmin
    }

    pub fn height(&self) -> f64 {
        self.ymax - self.ymin
    }

    pub fn center(&self) -> Point {
        Point::new((self.xmin + self.xmax) / 2.0, (self.ymin + self.ymax) / 2.0)
    }

    pub fn union(&self, o: &Aabb) -> Aabb {
        Aabb::new(
            self.xmin.min(o.xmin),
            self.ymin.min(o.ymin),
            self.xmax.max(o.xmax),
            self.ymax.max(o.ymax),
        )
    }

    pub fn intersect(&self, o: &Aabb) -> Option<Aabb> {
        let b = Aabb::new(
            self.xmin.max(o.xmin),
            self.ymin.max(o.ymin),
            self.xmax.min(o.xmax),
            self.ymax.min(o.ymax),
        );
        (b.width() > 0.0 && b.height() > 0.0).then_some(b)
    }

    /// Half-open containment `[xmin, xmax) x [ymin, ymax)`.
    pub fn contains_point(&self, p: Point) -> bool {
        p.x >= self.xmin && p.x < self.xmax && p.y >= self.ymin && p.y < self.ymax
    }

    pub fn contains_box(&self, o: &Aabb) -> bool {
        o.xmin >= self.xmin && o.ymin >= self.ymin && o.xmax <= self.xmax && o.ymax <= self.ymax
    }

    fn of_points(pts: &[Point]) -> Aabb {
        pts.iter().fold(
            Aabb::new(f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
            |b, p| Aabb::new(b.xmin.min(p.x), b.ymin.min(p.y), b.xmax.max(p.x), b.ymax.max(p.y)),
        )
    }
}

pub fn aabb(r: &OrientedRect) -> Aabb {
    Aabb::of_points(to_corners(r).vertices())
}

/// Andrew's monotone chain; counterclockwise, collinear points dropped.
fn convex_hull(points: &[Point]) -> Vec<Point> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<Point> = Vec::with_capacity(pts.len() * 2);
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Point>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2
                && orient(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0
            {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

/// Rect of the given frame angle in canonical form, with the angle folded
/// into `[-pi/4, pi/4)` by swapping extents where needed.
fn folded_rect(center: Point, w: f64, h: f64, angle: f64) -> Result<OrientedRect, GeomError> {
    let mut t = canonical_angle(angle);
    let (mut w, mut h) = (w, h);
    if t >= FRAC_PI_4 {
        t -= FRAC_PI_2;
        std::mem::swap(&mut w, &mut h);
    } else if t < -FRAC_PI_4 {
        t += FRAC_PI_2;
        std::mem::swap(&mut w, &mut h);
    }
    OrientedRect::new(center.x, center.y, w, h, t)
}

/// Minimum-area enclosing rectangle of a point set. One side of the optimum
/// is collinear with a hull edge, so only hull-edge orientations are tried.
pub fn min_area_rect_points(points: &[Point]) -> Result<OrientedRect, GeomError> {
    let hull = convex_hull(points);
    if hull.len() < 3 || shoelace(&hull) <= 0.0 {
        return Err(GeomError::DegenerateQuad);
    }
    let mut best: Option<(f64, OrientedRect)> = None;
    for i in 0..hull.len() {
        let e = hull[(i + 1) % hull.len()].sub(hull[i]);
        let len = e.dot(e).sqrt();
        let u = Point::new(e.x / len, e.y / len);
        let v = Point::new(-u.y, u.x);
        let (mut umin, mut umax, mut vmin, mut vmax) =
            (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for p in &hull {
            let (pu, pv) = (p.dot(u), p.dot(v));
            umin = umin.min(pu);
            umax = umax.max(pu);
            vmin = vmin.min(pv);
            vmax = vmax.max(pv);
        }
        let (w, h) = (umax - umin, vmax - vmin);
        if w <= 0.0 || h <= 0.0 {
            continue;
        }
        let (mu, mv) = ((umin + umax) / 2.0, (vmin + vmax) / 2.0);
        let center = Point::new(mu * u.x + mv * v.x, mu * u.y + mv * v.y);
        let rect = folded_rect(center, w, h, u.y.atan2(u.x))?;
        let area = w * h;
        best = match best {
            None => Some((area, rect)),
            Some((ba, br)) => {
                let tie = (area - ba).abs() <= 1e-12 * ba;
                if (!tie && area < ba) || (tie && rect.theta < br.theta) {
                    Some((area, rect))
                } else {
                    Some((ba, br))
                }
            }
        };
    }
    best.map(|(_, r)| r).ok_or(GeomError::DegenerateQuad)
}

pub fn min_area_rect(q: &Quad) -> Result<OrientedRect, GeomError> {
    min_area_rect_points(q.points())
}

/// Minimum Euclidean distance between two rects; 0 when they touch or overlap.
pub fn min_distance(a: &OrientedRect, b: &OrientedRect) -> f64 {
    let pa = to_corners(a);
    let pb = to_corners(b);
    let (va, vb) = (pa.vertices(), pb.vertices());
    if va.iter().any(|p| b.contains(*p)) || vb.iter().any(|p| a.contains(*p)) {
        return 0.0;
    }
    let mut best = f64::INFINITY;
    for i in 0..4 {
        let (a1, a2) = (va[i], va[(i + 1) % 4]);
        for j in 0..4 {
            let (b1, b2) = (vb[j], vb[(j + 1) % 4]);
            if segments_cross(a1, a2, b1, b2) {
                return 0.0;
            }
            best = best
                .min(point_segment_dist(a1, b1, b2))
                .min(point_segment_dist(b1, a1, a2));
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::SQRT_2;

    fn r(cx: f64, cy: f64, w: f64, h: f64, t: f64) -> OrientedRect {
        OrientedRect::new(cx, cy, w, h, t).unwrap()
    }

    fn has_corner(poly: &ConvexPolygon, x: f64, y: f64) -> bool {
        poly.vertices()
            .iter()
            .any(|p| (p.x - x).abs() < 1e-12 && (p.y - y).abs() < 1e-12)
    }

    #[test]
    fn corners_identity_rotation() {
        let c = to_corners(&r(0.0, 0.0, 2.0, 1.0, 0.0));
        assert_eq!(
            c.vertices(),
            &[
                Point::new(-1.0, -0.5),
                Point::new(1.0, -0.5),
                Point::new(1.0, 0.5),
                Point::new(-1.0, 0.5)
            ]
        );
        assert!(shoelace(c.vertices()) > 0.0);
    }

    #[test]
    fn corners_quarter_turn() {
        // theta = pi/2 canonicalizes to -pi/2, same point set
        let c = to_corners(&r(0.0, 0.0, 2.0, 1.0, FRAC_PI_2));
        for (x, y) in [(-0.5, -1.0), (0.5, -1.0), (0.5, 1.0), (-0.5, 1.0)] {
            assert!(has_corner(&c, x, y), "missing ({x},{y}) in {c:?}");
        }
    }

    #[test]
    fn corners_eighth_turn() {
        let c = to_corners(&r(0.0, 0.0, 2.0, 1.0, FRAC_PI_4));
        let p = c.vertices()[2];
        assert!((p.x - 0.353_553_390_593_273_8).abs() < 1e-12);
        assert!((p.y - 1.060_660_171_779_821_3).abs() < 1e-12);
    }

    #[test]
    fn rejects_degenerate() {
        assert!(OrientedRect::new(0.0, 0.0, 0.0, 1.0, 0.0).is_err());
        assert!(OrientedRect::new(0.0, 0.0, 1.0, -1.0, 0.0).is_err());
        assert!(OrientedRect::new(f64::NAN, 0.0, 1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn angle_canonicalization() {
        assert_eq!(canonical_angle(FRAC_PI_2), -FRAC_PI_2);
        assert_eq!(canonical_angle(-FRAC_PI_2), -FRAC_PI_2);
        assert!((canonical_angle(PI + 0.3) - 0.3).abs() < 1e-12);
        assert!((canonical_angle(-PI - 0.3) + 0.3).abs() < 1e-12);
        for k in -50..50 {
            let t = canonical_angle(k as f64 * 0.37);
            assert!((-FRAC_PI_2..FRAC_PI_2).contains(&t));
        }
    }

    #[test]
    fn intersection_cases() {
        let a = r(0.0, 0.0, 1.0, 1.0, 0.0);
        assert!((intersection_area(&a, &a) - 1.0).abs() < 1e-12);
        let far = r(5.0, 0.0, 1.0, 1.0, 0.0);
        assert_eq!(intersection_area(&a, &far), 0.0);
        let rot = r(0.0, 0.0, 1.0, 1.0, FRAC_PI_4);
        assert!((intersection_area(&a, &rot) - 2.0 * (SQRT_2 - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn iou_cases() {
        let a = r(0.0, 0.0, 1.0, 1.0, 0.0);
        assert!((iou(&a, &a) - 1.0).abs() < 1e-12);
        let shifted = r(0.5, 0.0, 1.0, 1.0, 0.0);
        assert!((iou(&a, &shifted) - 1.0 / 3.0).abs() < 1e-12);
        let rot = r(0.0, 0.0, 1.0, 1.0, FRAC_PI_4);
        assert!((iou(&a, &rot) - 1.0 / SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn touching_rects_have_zero_iou() {
        let a = r(0.0, 0.0, 1.0, 1.0, 0.0);
        let b = r(1.0, 0.0, 1.0, 1.0, 0.0);
        assert_eq!(iou(&a, &b), 0.0);
    }

    #[test]
    fn aabb_cases() {
        assert_eq!(aabb(&r(0.0, 0.0, 4.0, 2.0, 0.0)), Aabb::new(-2.0, -1.0, 2.0, 1.0));
        let b = aabb(&r(0.0, 0.0, 4.0, 2.0, FRAC_PI_2));
        assert!((b.xmin + 1.0).abs() < 1e-12 && (b.xmax - 1.0).abs() < 1e-12);
        assert!((b.ymin + 2.0).abs() < 1e-12 && (b.ymax - 2.0).abs() < 1e-12);
        let b = aabb(&r(0.0, 0.0, SQRT_2, SQRT_2, FRAC_PI_4));
        for v in [b.xmin, b.ymin] {
            assert!((v + 1.0).abs() < 1e-12);
        }
        for v in [b.xmax, b.ymax] {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn min_rect_of_unit_square() {
        let q = Quad::new([
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(0.0, 1.0),
        ])
        .unwrap();
        let m = min_area_rect(&q).unwrap();
        assert!((m.cx() - 0.5).abs() < 1e-12 && (m.cy() - 0.5).abs() < 1e-12);
        assert!((m.w() - 1.0).abs() < 1e-12 && (m.h() - 1.0).abs() < 1e-12);
        assert_eq!(m.theta(), 0.0);
    }

    #[test]
    fn min_rect_keeps_wide_axis_aligned_rect() {
        let q = Quad::new([
            Point::new(0.0, 0.0),
            Point::new(10.0, 0.0),
            Point::new(10.0, 5.0),
            Point::new(0.0, 5.0),
        ])
        .unwrap();
        let m = min_area_rect(&q).unwrap();
        assert!((m.w() - 10.0).abs() < 1e-12 && (m.h() - 5.0).abs() < 1e-12);
        assert_eq!(m.theta(), 0.0);
    }

    #[test]
    fn min_rect_round_trip() {
        for &t in &[0.0, 0.3, -0.3, 1.2, -1.4, FRAC_PI_4] {
            let orig = r(12.0, -3.0, 7.0, 2.5, t);
            let v = to_corners(&orig);
            let q = Quad::new([v.vertices()[0], v.vertices()[1], v.vertices()[2], v.vertices()[3]])
                .unwrap();
            let m = min_area_rect(&q).unwrap();
            assert!(m.center().dist(orig.center()) < 1e-9);
            assert!((m.area() - orig.area()).abs() < 1e-9 * orig.area());
            assert!(m.approx_same(&orig, 1e-9));
            assert!((-FRAC_PI_4..FRAC_PI_4).contains(&m.theta()));
        }
    }

    #[test]
    fn degenerate_quads() {
        let collinear = [
            Point::new(0.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(2.0, 2.0),
            Point::new(3.0, 3.0),
        ];
        assert_eq!(Quad::new(collinear), Err(GeomError::DegenerateQuad));
        let bowtie = [
            Point::new(0.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(1.0, 0.0),
            Point::new(0.0, 1.0),
        ];
        assert!(Quad::new(bowtie).is_err());
        assert_eq!(
            min_area_rect_points(&collinear),
            Err(GeomError::DegenerateQuad)
        );
    }

    #[test]
    fn distances() {
        let a = r(0.0, 0.0, 10.0, 10.0, 0.0);
        let b = r(25.0, 0.0, 10.0, 10.0, 0.0);
        assert!((min_distance(&a, &b) - 15.0).abs() < 1e-12);
        let c = r(3.0, 3.0, 10.0, 10.0, 0.4);
        assert_eq!(min_distance(&a, &c), 0.0);
        let inner = r(0.0, 0.0, 1.0, 1.0, 0.7);
        assert_eq!(min_distance(&a, &inner), 0.0);
        // diagonal: corner (5,5) to corner (8,9)
        let d = r(13.0, 14.0, 10.0, 10.0, 0.0);
        assert!((min_distance(&a, &d) - 5.0).abs() < 1e-12);
    }
}
