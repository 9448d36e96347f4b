//! Text blocks: extraction from segmentation masks, mining from ground-truth
//! word proximity, square crop planning and the block-to-image mapping.

use std::collections::VecDeque;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{self, Aabb, GeomError, OrientedRect, Point};
use crate::postproc::Detection;

/// Components smaller than this many pixels are treated as noise.
pub const DEFAULT_MIN_AREA: usize = 10;
/// Side of the square detector input.
pub const DEFAULT_DST_SIDE: f64 = 240.0;

#[derive(Debug, Error)]
pub enum MaskError {
    #[error("invalid PGM: {0}")]
    Pgm(String),
    #[error("mask size mismatch: {width}x{height} needs {expected} bits, got {found}")]
    Size {
        width: usize,
        height: usize,
        expected: usize,
        found: usize,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Row-major boolean mask; `true` marks text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self, MaskError> {
        if bits.len() != width * height {
            return Err(MaskError::Size {
                width,
                height,
                expected: width * height,
                found: bits.len(),
            });
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Binary PGM (`P5`, maxval 255), text written as 255.
    pub fn write_pgm<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        write!(out, "P5\n{} {}\n255\n", self.width, self.height)?;
        let data: Vec<u8> = self.bits.iter().map(|&b| if b { 255 } else { 0 }).collect();
        out.write_all(&data)
    }

    pub fn to_pgm_bytes(&self) -> Vec<u8> {
        let mut v = Vec::with_capacity(self.bits.len() + 20);
        self.write_pgm(&mut v).expect("writing to a Vec cannot fail");
        v
    }

    /// Parses a binary PGM; pixel values of 128 and above are text.
    pub fn from_pgm_bytes(data: &[u8]) -> Result<Self, MaskError> {
        let mut pos = 0;
        let mut fields = Vec::with_capacity(4);
        while fields.len() < 4 {
            // skip whitespace and comments
            while pos < data.len() {
                if data[pos].is_ascii_whitespace() {
                    pos += 1;
                } else if data[pos] == b'#' {
                    while pos < data.len() && data[pos] != b'\n' {
                        pos += 1;
                    }
                } else {
                    break;
                }
            }
            let start = pos;
            while pos < data.len() && !data[pos].is_ascii_whitespace() && data[pos] != b'#' {
                pos += 1;
            }
            if start == pos {
                return Err(MaskError::Pgm("truncated header".into()));
            }
            fields.push(String::from_utf8_lossy(&data[start..pos]).into_owned());
        }
        if fields[0] != "P5" {
            return Err(MaskError::Pgm(format!("bad magic {:?}", fields[0])));
        }
        let num = |s: &str, what: &str| {
            s.parse::<usize>()
                .map_err(|_| MaskError::Pgm(format!("bad {what} {s:?}")))
        };
        let width = num(&fields[1], "width")?;
        let height = num(&fields[2], "height")?;
        let maxval = num(&fields[3], "maxval")?;
        if maxval == 0 || maxval > 255 {
            return Err(MaskError::Pgm(format!("unsupported maxval {maxval}")));
        }
        // exactly one whitespace byte separates header and raster
        pos += 1;
        let n = width * height;
        if data.len() < pos + n {
            return Err(MaskError::Pgm(format!(
                "raster needs {n} bytes, found {}",
                data.len().saturating_sub(pos)
            )));
        }
        let bits = data[pos..pos + n].iter().map(|&v| v >= 128).collect();
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn read_pgm(path: &Path) -> Result<Self, MaskError> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        Self::from_pgm_bytes(&buf)
    }

    pub fn write_pgm_file(&self, path: &Path) -> Result<(), MaskError> {
        std::fs::write(path, self.to_pgm_bytes())?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub id: usize,
    pub region_aabb: Aabb,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub member_word_indices: Option<Vec<usize>>,
}

/// 8-connected components of text pixels, dropping those under `min_area`
/// pixels. A pixel `(x, y)` covers `[x, x+1) x [y, y+1)`, so a block's box
/// is the union of its pixels' squares. Blocks are ordered by `(ymin, xmin)`.
pub fn connected_components(m: &BinaryMask, min_area: usize) -> Vec<Block> {
    let (w, h) = (m.width, m.height);
    let mut seen = vec![false; w * h];
    let mut queue = VecDeque::new();
    let mut boxes = Vec::new();
    for start in 0..w * h {
        if !m.bits[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        let mut count = 0;
        while let Some(i) = queue.pop_front() {
            let (x, y) = (i % w, i / w);
            count += 1;
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
            for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    let j = ny * w + nx;
                    if m.bits[j] && !seen[j] {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
        if count >= min_area {
            boxes.push(Aabb::new(
                x0 as f64,
                y0 as f64,
                (x1 + 1) as f64,
                (y1 + 1) as f64,
            ));
        }
    }
    boxes.sort_by(|a, b| a.ymin.total_cmp(&b.ymin).then(a.xmin.total_cmp(&b.xmin)));
    boxes
        .into_iter()
        .enumerate()
        .map(|(id, region_aabb)| Block {
            id,
            region_aabb,
            member_word_indices: None,
        })
        .collect()
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Whether two words are close enough to share a training block: their
/// minimum distance is below the sum of their heights.
pub fn words_linked(a: &OrientedRect, b: &OrientedRect) -> bool {
    geom::min_distance(a, b) < a.h() + b.h()
}

/// Groups ground-truth words into blocks: connected components of the
/// proximity graph, each boxed by the tightest axis-aligned rectangle around
/// its members' corners (clipped to the image). Blocks are ordered by their
/// smallest member index.
pub fn mine_blocks(words: &[OrientedRect], image: (f64, f64)) -> Vec<Block> {
    let n = words.len();
    let mut parent: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in i + 1..n {
            if words_linked(&words[i], &words[j]) {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot_of_root = vec![usize::MAX; n];
    for i in 0..n {
        let r = find(&mut parent, i);
        if slot_of_root[r] == usize::MAX {
            slot_of_root[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot_of_root[r]].push(i);
    }
    let frame = Aabb::new(0.0, 0.0, image.0, image.1);
    groups
        .into_iter()
        .enumerate()
        .map(|(id, members)| {
            let bounds = members
                .iter()
                .map(|&i| geom::aabb(&words[i]))
                .reduce(|a, b| a.union(&b))
                .expect("components are non-empty");
            Block {
                id,
                region_aabb: bounds.intersect(&frame).unwrap_or(bounds),
                member_word_indices: Some(members),
            }
        })
        .collect()
}

/// Affine map from an image-frame source box onto `[0, dst_side]^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CropPlan {
    pub src: Aabb,
    pub dst_side: f64,
    pub scale_x: f64,
    pub scale_y: f64,
    pub offset: (f64, f64),
    /// Set when the square had to be clipped at the image edge, making the
    /// resize anisotropic.
    pub anisotropic: bool,
}

/// Square crop co-centered with the block and tightly bounding it, scaled
/// uniformly to `dst_side`. A square that would leave the image is clipped
/// to it and the resulting rectangle is stretched to the square input.
pub fn crop_plan(b: &Block, image: (f64, f64), dst_side: f64) -> CropPlan {
    let r = &b.region_aabb;
    let side = r.width().max(r.height());
    let c = r.center();
    let square = Aabb::new(
        c.x - side / 2.0,
        c.y - side / 2.0,
        c.x + side / 2.0,
        c.y + side / 2.0,
    )
    .union(r);
    let frame = Aabb::new(0.0, 0.0, image.0, image.1);
    let (src, anisotropic) = if frame.contains_box(&square) {
        (square, false)
    } else {
        (square.intersect(&frame).unwrap_or(*r), true)
    };
    let (scale_x, scale_y) = if anisotropic {
        (dst_side / src.width(), dst_side / src.height())
    } else {
        let s = dst_side / side;
        (s, s)
    };
    CropPlan {
        src,
        dst_side,
        scale_x,
        scale_y,
        offset: (src.xmin, src.ymin),
        anisotropic,
    }
}

impl CropPlan {
    pub fn to_block(&self, p: Point) -> Point {
        Point::new(
            (p.x - self.offset.0) * self.scale_x,
            (p.y - self.offset.1) * self.scale_y,
        )
    }

    pub fn to_image(&self, p: Point) -> Point {
        Point::new(
            p.x / self.scale_x + self.offset.0,
            p.y / self.scale_y + self.offset.1,
        )
    }

    fn map_rect(
        &self,
        r: &OrientedRect,
        uniform_scale: f64,
        f: impl Fn(Point) -> Point,
    ) -> Result<OrientedRect, GeomError> {
        if !self.anisotropic {
            let c = f(r.center());
            return OrientedRect::new(c.x, c.y, r.w() * uniform_scale, r.h() * uniform_scale, r.theta());
        }
        // a rectangle becomes a parallelogram; refit the tightest rectangle
        let corners: Vec<Point> = geom::to_corners(r).vertices().iter().map(|&p| f(p)).collect();
        geom::min_area_rect_points(&corners)
    }

    pub fn rect_to_block(&self, r: &OrientedRect) -> Result<OrientedRect, GeomError> {
        self.map_rect(r, self.scale_x, |p| self.to_block(p))
    }

    pub fn rect_to_image(&self, r: &OrientedRect) -> Result<OrientedRect, GeomError> {
        self.map_rect(r, 1.0 / self.scale_x, |p| self.to_image(p))
    }
}

pub fn map_detection_to_image(d: &Detection, p: &CropPlan) -> Result<Detection, GeomError> {
    Ok(Detection {
        rect: p.rect_to_image(&d.rect)?,
        ..*d
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect(cx: f64, cy: f64, w: f64, h: f64) -> OrientedRect {
        OrientedRect::new(cx, cy, w, h, 0.0).unwrap()
    }

    fn block(aabb: Aabb) -> Block {
        Block {
            id: 0,
            region_aabb: aabb,
            member_word_indices: None,
        }
    }

    #[test]
    fn single_square_blob() {
        let mut m = BinaryMask::new(30, 30);
        for y in 5..15 {
            for x in 8..18 {
                m.set(x, y, true);
            }
        }
        let b = connected_components(&m, 10);
        assert_eq!(b.len(), 1);
        assert_eq!(b[0].region_aabb, Aabb::new(8.0, 5.0, 18.0, 15.0));
    }

    #[test]
    fn separated_and_diagonal_blobs() {
        let mut m = BinaryMask::new(40, 10);
        for y in 0..5 {
            for x in 0..5 {
                m.set(x, y, true);
                m.set(x + 7, y, true);
            }
        }
        assert_eq!(connected_components(&m, 10).len(), 2);
        // diagonal touch joins under 8-connectivity
        let mut d = BinaryMask::new(4, 4);
        for i in 0..4 {
            d.set(i, i, true);
        }
        assert_eq!(connected_components(&d, 1).len(), 1);
        assert_eq!(connected_components(&d, 5).len(), 0);
        assert!(connected_components(&BinaryMask::new(20, 20), 10).is_empty());
    }

    #[test]
    fn components_sorted_top_then_left() {
        let mut m = BinaryMask::new(20, 20);
        m.set(15, 2, true);
        m.set(3, 2, true);
        m.set(1, 10, true);
        let b = connected_components(&m, 1);
        let mins: Vec<_> = b.iter().map(|b| (b.region_aabb.xmin, b.region_aabb.ymin)).collect();
        assert_eq!(mins, [(3.0, 2.0), (15.0, 2.0), (1.0, 10.0)]);
        assert_eq!(b.iter().map(|b| b.id).collect::<Vec<_>>(), [0, 1, 2]);
    }

    #[test]
    fn pgm_round_trip_and_threshold() {
        let mut m = BinaryMask::new(3, 2);
        m.set(1, 0, true);
        m.set(2, 1, true);
        let bytes = m.to_pgm_bytes();
        assert!(bytes.starts_with(b"P5\n3 2\n255\n"));
        assert_eq!(BinaryMask::from_pgm_bytes(&bytes).unwrap(), m);

        let mut raw = b"P5 # comment\n2 1\n255\n".to_vec();
        raw.extend([127, 128]);
        let p = BinaryMask::from_pgm_bytes(&raw).unwrap();
        assert_eq!(p.bits(), &[false, true]);
        assert!(BinaryMask::from_pgm_bytes(b"P2\n1 1\n255\n0").is_err());
        assert!(BinaryMask::from_pgm_bytes(b"P5\n2 2\n255\n\x00").is_err());
    }

    #[test]
    fn mine_height_threshold() {
        // heights 10 and 12, edge gap 20 < 22
        let a = rect(50.0, 50.0, 40.0, 10.0);
        let b = rect(50.0 + 20.0 + 20.0 + 20.0, 50.0, 40.0, 12.0);
        assert!((geom::min_distance(&a, &b) - 20.0).abs() < 1e-12);
        assert_eq!(mine_blocks(&[a, b], (500.0, 500.0)).len(), 1);
        let far = rect(50.0 + 20.0 + 25.0 + 20.0, 50.0, 40.0, 12.0);
        assert_eq!(mine_blocks(&[a, far], (500.0, 500.0)).len(), 2);
    }

    #[test]
    fn mine_chain_is_transitive() {
        let a = rect(30.0, 50.0, 20.0, 10.0);
        let b = rect(60.0, 50.0, 20.0, 10.0);
        let c = rect(90.0, 50.0, 20.0, 10.0);
        assert!(geom::min_distance(&a, &c) >= 20.0);
        let blocks = mine_blocks(&[a, b, c], (200.0, 200.0));
        assert_eq!(blocks.len(), 1);
        assert_eq!(blocks[0].member_word_indices, Some(vec![0, 1, 2]));
        assert_eq!(blocks[0].region_aabb, Aabb::new(20.0, 45.0, 100.0, 55.0));
    }

    #[test]
    fn crop_interior_uniform() {
        let b = block(Aabb::new(250.0, 170.0, 350.0, 230.0));
        let p = crop_plan(&b, (1000.0, 560.0), 240.0);
        assert!(!p.anisotropic);
        assert_eq!(p.src, Aabb::new(250.0, 150.0, 350.0, 250.0));
        assert!((p.scale_x - 2.4).abs() < 1e-12 && p.scale_x == p.scale_y);
    }

    #[test]
    fn crop_edge_exception() {
        // 40x100 block centered (30, 200): the co-centered square spans x in [-20, 80]
        let b = block(Aabb::new(10.0, 150.0, 50.0, 250.0));
        let p = crop_plan(&b, (1000.0, 560.0), 240.0);
        assert!(p.anisotropic);
        assert_eq!(p.src, Aabb::new(0.0, 150.0, 80.0, 250.0));
        assert!((p.scale_x - 3.0).abs() < 1e-12 && (p.scale_y - 2.4).abs() < 1e-12);
    }

    #[test]
    fn crop_square_interior() {
        let b = block(Aabb::new(10.0, 10.0, 60.0, 60.0));
        let p = crop_plan(&b, (100.0, 100.0), 240.0);
        assert_eq!(p.src, b.region_aabb);
        assert!((p.scale_x - 4.8).abs() < 1e-12 && p.scale_x == p.scale_y);
    }

    #[test]
    fn forward_map_hits_destination_square() {
        let b = block(Aabb::new(10.0, 150.0, 50.0, 250.0));
        for p in [
            crop_plan(&b, (1000.0, 560.0), 240.0),
            crop_plan(&block(Aabb::new(250.0, 170.0, 350.0, 230.0)), (1000.0, 560.0), 240.0),
        ] {
            let s = p.src;
            let lo = p.to_block(Point::new(s.xmin, s.ymin));
            let hi = p.to_block(Point::new(s.xmax, s.ymax));
            assert!(lo.x.abs() < 1e-12 && lo.y.abs() < 1e-12);
            assert!((hi.x - 240.0).abs() < 1e-9 && (hi.y - 240.0).abs() < 1e-9);
        }
    }

    #[test]
    fn uniform_inverse_mapping() {
        let b = block(Aabb::new(250.0, 170.0, 350.0, 230.0));
        let p = crop_plan(&b, (1000.0, 560.0), 240.0);
        let d = Detection::new(OrientedRect::new(120.0, 120.0, 48.0, 16.0, 0.3).unwrap(), 0.8);
        let m = map_detection_to_image(&d, &p).unwrap();
        assert!((m.rect.cx() - 300.0).abs() < 1e-9 && (m.rect.cy() - 200.0).abs() < 1e-9);
        assert!((m.rect.w() - 20.0).abs() < 1e-9);
        assert!((m.rect.h() - 16.0 / 2.4).abs() < 1e-9);
        assert_eq!(m.rect.theta(), 0.3);
        assert_eq!(m.confidence, 0.8);
    }

    #[test]
    fn anisotropic_axis_aligned_mapping() {
        // scale_x = 3, scale_y = 2.4
        let p = crop_plan(&block(Aabb::new(10.0, 150.0, 50.0, 250.0)), (1000.0, 560.0), 240.0);
        let d = Detection::new(rect(120.0, 120.0, 60.0, 24.0), 0.9);
        let m = map_detection_to_image(&d, &p).unwrap();
        assert!((m.rect.cx() - 40.0).abs() < 1e-9 && (m.rect.cy() - 200.0).abs() < 1e-9);
        assert!((m.rect.w() - 20.0).abs() < 1e-9 && (m.rect.h() - 10.0).abs() < 1e-9);
        assert_eq!(m.rect.theta(), 0.0);
    }
}
