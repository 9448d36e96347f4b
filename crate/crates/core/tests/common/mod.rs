//! Independent reference implementations used by the integration tests.
//! None of these call into the library's geometry.

#![allow(dead_code)]

use rand::Rng;
use wordcascade::geom::OrientedRect;
use wordcascade::postproc::Detection;
use wordcascade::synth;

pub type Pt = (f64, f64);

pub fn corners(r: &OrientedRect) -> [Pt; 4] {
    let (s, c) = r.theta().sin_cos();
    let (hw, hh) = (r.w() / 2.0, r.h() / 2.0);
    [(-hw, -hh), (hw, -hh), (hw, hh), (-hw, hh)]
        .map(|(u, v)| (r.cx() + c * u - s * v, r.cy() + s * u + c * v))
}

/// x-extent of a convex polygon along the horizontal line at `y`.
fn span_at(poly: &[Pt], y: f64) -> Option<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..poly.len() {
        let (a, b) = (poly[i], poly[(i + 1) % poly.len()]);
        let (y0, y1) = (a.1.min(b.1), a.1.max(b.1));
        if y < y0 || y > y1 || y0 == y1 {
            continue;
        }
        let x = a.0 + (y - a.1) * (b.0 - a.0) / (b.1 - a.1);
        lo = lo.min(x);
        hi = hi.max(x);
    }
    (lo < hi).then_some((lo, hi))
}

/// IoU by scanlines: the joint bounding box is cut into `grid` rows and the
/// covered length of each row center is summed.
pub fn raster_iou(a: &OrientedRect, b: &OrientedRect, grid: usize) -> f64 {
    let (pa, pb) = (corners(a), corners(b));
    let ys = pa.iter().chain(&pb).map(|p| p.1);
    let ymin = ys.clone().fold(f64::INFINITY, f64::min);
    let ymax = ys.fold(f64::NEG_INFINITY, f64::max);
    let dy = (ymax - ymin) / grid as f64;
    let (mut ia, mut ib, mut inter) = (0.0, 0.0, 0.0);
    for row in 0..grid {
        let y = ymin + (row as f64 + 0.5) * dy;
        let sa = span_at(&pa, y);
        let sb = span_at(&pb, y);
        if let Some((l, h)) = sa {
            ia += h - l;
        }
        if let Some((l, h)) = sb {
            ib += h - l;
        }
        if let (Some(x), Some(z)) = (sa, sb) {
            inter += (x.1.min(z.1) - x.0.max(z.0)).max(0.0);
        }
    }
    let union = ia + ib - inter;
    if union > 0.0 {
        inter / union
    } else {
        0.0
    }
}

fn seg_point_dist(p: Pt, a: Pt, b: Pt) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    ((p.0 - a.0 - t * dx).powi(2) + (p.1 - a.1 - t * dy).powi(2)).sqrt()
}

fn inside(p: Pt, poly: &[Pt; 4]) -> bool {
    let mut sign = 0.0;
    for i in 0..4 {
        let (a, b) = (poly[i], poly[(i + 1) % 4]);
        let cr = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
        if cr != 0.0 {
            if sign != 0.0 && cr.signum() != sign {
                return false;
            }
            sign = cr.signum();
        }
    }
    true
}

fn segments_cross(a: Pt, b: Pt, c: Pt, d: Pt) -> bool {
    let orient = |p: Pt, q: Pt, r: Pt| (q.0 - p.0) * (r.1 - p.1) - (q.1 - p.1) * (r.0 - p.0);
    let (o1, o2) = (orient(a, b, c), orient(a, b, d));
    let (o3, o4) = (orient(c, d, a), orient(c, d, b));
    o1 * o2 < 0.0 && o3 * o4 < 0.0
}

/// Euclidean distance between two filled rectangles.
pub fn rect_distance(a: &OrientedRect, b: &OrientedRect) -> f64 {
    let (pa, pb) = (corners(a), corners(b));
    if pa.iter().any(|&p| inside(p, &pb)) || pb.iter().any(|&p| inside(p, &pa)) {
        return 0.0;
    }
    let mut best = f64::INFINITY;
    for i in 0..4 {
        let (a0, a1) = (pa[i], pa[(i + 1) % 4]);
        for j in 0..4 {
            let (b0, b1) = (pb[j], pb[(j + 1) % 4]);
            if segments_cross(a0, a1, b0, b1) {
                return 0.0;
            }
            best = best
                .min(seg_point_dist(a0, b0, b1))
                .min(seg_point_dist(b0, a0, a1));
        }
    }
    best
}

/// Partition of word indices under the proximity rule, via union-find.
pub fn proximity_partition(words: &[OrientedRect]) -> Vec<Vec<usize>> {
    let mut parent: Vec<usize> = (0..words.len()).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for i in 0..words.len() {
        for j in i + 1..words.len() {
            if rect_distance(&words[i], &words[j]) < words[i].h() + words[j].h() {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; words.len()];
    for i in 0..words.len() {
        let r = find(&mut parent, i);
        if slot[r] == usize::MAX {
            slot[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[r]].push(i);
    }
    groups
}

/// Reference NMS: rescan for the best remaining detection each round.
pub fn reference_nms(ds: &[Detection], conf: f64, iou_thr: f64) -> Vec<Detection> {
    let mut alive: Vec<usize> = (0..ds.len()).filter(|&i| ds[i].confidence >= conf).collect();
    let better = |i: usize, j: usize| {
        let (a, b) = (&ds[i], &ds[j]);
        (b.confidence, a.rect.cx(), a.rect.cy(), i) < (a.confidence, b.rect.cx(), b.rect.cy(), j)
    };
    let mut out = Vec::new();
    while !alive.is_empty() {
        let mut best = alive[0];
        for &i in &alive[1..] {
            if better(i, best) {
                best = i;
            }
        }
        out.push(ds[best]);
        alive.retain(|&i| i != best && wordcascade::geom::iou(&ds[i].rect, &ds[best].rect) <= iou_thr);
    }
    out
}

pub fn rng(seed: u64) -> impl Rng {
    synth::rng_from_seed(seed)
}

/// Random rect with its center in `[lo, hi]^2`.
pub fn random_rect(r: &mut impl Rng, lo: f64, hi: f64, size: (f64, f64)) -> OrientedRect {
    OrientedRect::new(
        r.random_range(lo..hi),
        r.random_range(lo..hi),
        r.random_range(size.0..size.1),
        r.random_range(size.0..size.1),
        r.random_range(-std::f64::consts::PI..std::f64::consts::PI),
    )
    .unwrap()
}
