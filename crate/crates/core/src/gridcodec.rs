//! Mapping between word rectangles in a square block image and the
//! `n x n x b` field of box parameters a grid detector predicts.
//!
//! Cell `(row, col)` covers `[col, col+1) x [row, row+1)` in units of
//! `side / n`. Box centers are stored as fractions of the cell measured from
//! its top-left corner, sizes as fractions of the block side, and the angle
//! as `(theta + pi/2) / pi` over the canonical range `[-pi/2, pi/2)`.
//!
//! Experiments with the original detector only used odd `n`; nothing here
//! depends on parity.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{self, GeomError, OrientedRect, Point};

/// Lower clamp for `w` and `h` during optimization.
pub const SIZE_EPS: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("point ({x}, {y}) outside the {side}x{side} block")]
    OutOfBounds { x: f64, y: f64, side: f64 },
    #[error("grid spec mismatch: {0:?} vs {1:?}")]
    SpecMismatch(GridSpec, GridSpec),
    #[error("invalid grid spec: {0}")]
    InvalidSpec(String),
    #[error("expected {expected} box records, found {found}")]
    WrongLength { expected: usize, found: usize },
    #[error(transparent)]
    Geom(#[from] GeomError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n: usize,
    pub b: usize,
    pub side: f64,
}

impl GridSpec {
    pub fn new(n: usize, b: usize, side: f64) -> Result<Self, GridError> {
        if n == 0 || b == 0 || side.is_nan() || side <= 0.0 || !side.is_finite() {
            return Err(GridError::InvalidSpec(format!("n={n} b={b} side={side}")));
        }
        if side != 16.0 * n as f64 {
            log::warn!("block side {side} differs from 16*n = {}", 16 * n);
        }
        Ok(Self { n, b, side })
    }

    /// Spec whose side matches a VGG-style backbone with four 2x poolings.
    pub fn for_network(n: usize, b: usize) -> Result<Self, GridError> {
        Self::new(n, b, 16.0 * n as f64)
    }

    pub fn cells(&self) -> usize {
        self.n * self.n
    }

    pub fn len(&self) -> usize {
        self.cells() * self.b
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_size(&self) -> f64 {
        self.side / self.n as f64
    }

    fn check(&self, other: &GridSpec) -> Result<(), GridError> {
        if self != other {
            return Err(GridError::SpecMismatch(*self, *other));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub fn index(&self, spec: &GridSpec) -> usize {
        self.row * spec.n + self.col
    }

    pub fn from_index(i: usize, spec: &GridSpec) -> Self {
        Cell {
            row: i / spec.n,
            col: i % spec.n,
        }
    }
}

pub fn theta_to_norm(theta: f64) -> f64 {
    (theta + FRAC_PI_2) / PI
}

pub fn norm_to_theta(t: f64) -> f64 {
    t * PI - FRAC_PI_2
}

/// One predicted box `(x, y, w, h, theta_norm, c)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxParams {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub theta_norm: f64,
    pub c: f64,
}

impl BoxParams {
    /// Starting point for descent: a small centered box at zero angle with
    /// confidence one half.
    pub const INIT: BoxParams = BoxParams {
        x: 0.5,
        y: 0.5,
        w: 0.1,
        h: 0.1,
        theta_norm: 0.5,
        c: 0.5,
    };

    /// Placeholder for slots with nothing in them.
    pub const EMPTY: BoxParams = BoxParams {
        c: 0.0,
        ..BoxParams::INIT
    };

    pub fn is_finite(&self) -> bool {
        [self.x, self.y, self.w, self.h, self.theta_norm, self.c]
            .iter()
            .all(|v| v.is_finite())
    }

    /// Clamps every field to its admissible range.
    pub fn clamped(&self) -> BoxParams {
        BoxParams {
            x: self.x.clamp(0.0, 1.0),
            y: self.y.clamp(0.0, 1.0),
            w: self.w.clamp(SIZE_EPS, 1.0),
            h: self.h.clamp(SIZE_EPS, 1.0),
            theta_norm: self.theta_norm.clamp(0.0, 1.0 - f64::EPSILON),
            c: self.c.clamp(0.0, 1.0),
        }
    }

    /// Block-frame rectangle described by this box when it sits in `cell`.
    pub fn to_rect(&self, cell: Cell, spec: &GridSpec) -> Result<OrientedRect, GeomError> {
        let cs = spec.cell_size();
        OrientedRect::new(
            (cell.col as f64 + self.x) * cs,
            (cell.row as f64 + self.y) * cs,
            self.w * spec.side,
            self.h * spec.side,
            norm_to_theta(self.theta_norm),
        )
    }
}

/// The full `n*n*b` parameter field, row-major over cells, boxes contiguous
/// within a cell.
#[derive(Debug, Clone, PartialEq)]
pub struct GridTensor {
    spec: GridSpec,
    boxes: Vec<BoxParams>,
}

#[derive(Serialize, Deserialize)]
struct GridTensorFile {
    n: usize,
    b: usize,
    side: f64,
    boxes: Vec<BoxParams>,
}

impl Serialize for GridTensor {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        GridTensorFile {
            n: self.spec.n,
            b: self.spec.b,
            side: self.spec.side,
            boxes: self.boxes.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for GridTensor {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let f = GridTensorFile::deserialize(d)?;
        let spec = GridSpec::new(f.n, f.b, f.side).map_err(serde::de::Error::custom)?;
        GridTensor::from_boxes(spec, f.boxes).map_err(serde::de::Error::custom)
    }
}

impl GridTensor {
    pub fn filled(spec: GridSpec, value: BoxParams) -> Self {
        Self {
            spec,
            boxes: vec![value; spec.len()],
        }
    }

    pub fn from_boxes(spec: GridSpec, boxes: Vec<BoxParams>) -> Result<Self, GridError> {
        if boxes.len() != spec.len() {
            return Err(GridError::WrongLength {
                expected: spec.len(),
                found: boxes.len(),
            });
        }
        if let Some(bad) = boxes.iter().position(|b| !b.is_finite()) {
            return Err(GridError::InvalidSpec(format!("non-finite box record {bad}")));
        }
        Ok(Self { spec, boxes })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn boxes(&self) -> &[BoxParams] {
        &self.boxes
    }

    pub fn boxes_mut(&mut self) -> &mut [BoxParams] {
        &mut self.boxes
    }

    pub fn slot(&self, cell: usize, j: usize) -> usize {
        cell * self.spec.b + j
    }

    pub fn get(&self, cell: usize, j: usize) -> &BoxParams {
        &self.boxes[self.slot(cell, j)]
    }

    pub fn get_mut(&mut self, cell: usize, j: usize) -> &mut BoxParams {
        let s = self.slot(cell, j);
        &mut self.boxes[s]
    }

    pub fn cell_boxes(&self, cell: usize) -> &[BoxParams] {
        let b = self.spec.b;
        &self.boxes[cell * b..(cell + 1) * b]
    }
}

/// Ground-truth entry for one occupied cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetEntry {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub theta_norm: f64,
    pub word: usize,
}

impl TargetEntry {
    pub fn to_rect(&self, cell: Cell, spec: &GridSpec) -> Result<OrientedRect, GeomError> {
        BoxParams {
            x: self.x,
            y: self.y,
            w: self.w,
            h: self.h,
            theta_norm: self.theta_norm,
            c: 1.0,
        }
        .to_rect(cell, spec)
    }
}

/// At most one ground-truth word per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct GridTarget {
    spec: GridSpec,
    cells: Vec<Option<TargetEntry>>,
}

impl GridTarget {
    pub fn empty(spec: GridSpec) -> Self {
        Self {
            spec,
            cells: vec![None; spec.cells()],
        }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn cells(&self) -> &[Option<TargetEntry>] {
        &self.cells
    }

    pub fn occupied(&self) -> impl Iterator<Item = (usize, &TargetEntry)> {
        self.cells
            .iter()
            .enumerate()
            .filter_map(|(i, e)| e.as_ref().map(|e| (i, e)))
    }

    pub fn occupied_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_some()).count()
    }

    /// Tensor that places each target in box 0 of its cell with `c = 1`
    /// and every other slot at [`BoxParams::EMPTY`].
    pub fn to_tensor(&self) -> GridTensor {
        let mut g = GridTensor::filled(self.spec, BoxParams::EMPTY);
        for (i, e) in self.occupied() {
            *g.get_mut(i, 0) = BoxParams {
                x: e.x,
                y: e.y,
                w: e.w,
                h: e.h,
                theta_norm: e.theta_norm,
                c: 1.0,
            };
        }
        g
    }
}

pub fn cell_of_point(p: Point, spec: &GridSpec) -> Result<Cell, GridError> {
    if !(p.x >= 0.0 && p.y >= 0.0 && p.x < spec.side && p.y < spec.side) {
        return Err(GridError::OutOfBounds {
            x: p.x,
            y: p.y,
            side: spec.side,
        });
    }
    let n = spec.n as f64;
    // `min` guards against p.x * n / side rounding up to n
    let row = ((p.y * n / spec.side).floor() as usize).min(spec.n - 1);
    let col = ((p.x * n / spec.side).floor() as usize).min(spec.n - 1);
    Ok(Cell { row, col })
}

/// Assigns each word to the cell holding its center. When several words
/// share a cell the largest (ties: lowest index) occupies it and the others
/// come back as collisions, in ascending index order.
pub fn encode_scene(
    words: &[OrientedRect],
    spec: &GridSpec,
) -> Result<(GridTarget, Vec<usize>), GridError> {
    let mut target = GridTarget::empty(*spec);
    let mut collisions = Vec::new();
    let cs = spec.cell_size();
    for (k, word) in words.iter().enumerate() {
        let cell = cell_of_point(word.center(), spec)?;
        let entry = TargetEntry {
            x: word.cx() / cs - cell.col as f64,
            y: word.cy() / cs - cell.row as f64,
            w: word.w() / spec.side,
            h: word.h() / spec.side,
            theta_norm: theta_to_norm(word.theta()),
            word: k,
        };
        let slot = &mut target.cells[cell.index(spec)];
        match slot {
            None => *slot = Some(entry),
            Some(prev) => {
                if word.area() > words[prev.word].area() {
                    collisions.push(prev.word);
                    *slot = Some(entry);
                } else {
                    collisions.push(k);
                }
            }
        }
    }
    collisions.sort_unstable();
    Ok((target, collisions))
}

/// Every box of the tensor as a block-frame rect with its confidence. No
/// thresholding.
pub fn decode_grid(g: &GridTensor) -> Result<Vec<(OrientedRect, f64)>, GridError> {
    let spec = g.spec();
    let mut out = Vec::with_capacity(spec.len());
    for cell in 0..spec.cells() {
        let c = Cell::from_index(cell, spec);
        for bp in g.cell_boxes(cell) {
            out.push((bp.to_rect(c, spec)?, bp.c));
        }
    }
    Ok(out)
}

/// For each occupied cell, the index of the predicted box with the highest
/// IoU against the cell's word. Ties, including all-zero IoU, go to the
/// smallest index. Returned as `(cell, j)` in cell order.
pub fn assign_responsibility(
    g: &GridTensor,
    t: &GridTarget,
) -> Result<Vec<(usize, usize)>, GridError> {
    g.spec().check(t.spec())?;
    let spec = g.spec();
    let mut out = Vec::with_capacity(t.occupied_count());
    for (cell, entry) in t.occupied() {
        let c = Cell::from_index(cell, spec);
        if spec.b == 1 {
            out.push((cell, 0));
            continue;
        }
        let truth = entry.to_rect(c, spec)?;
        let mut best = (0usize, f64::NEG_INFINITY);
        for (j, bp) in g.cell_boxes(cell).iter().enumerate() {
            let v = geom::iou(&bp.to_rect(c, spec)?, &truth);
            if v > best.1 {
                best = (j, v);
            }
        }
        out.push((cell, best.0));
    }
    Ok(out)
}
