//! Multi-part squared detection loss over a grid tensor, its analytic
//! gradient, and a plain gradient-descent fitter that minimizes it directly
//! over the box parameters.
//!
//! For a cell holding a word, the responsible box pays
//! `(1-C)^2 + l_ang (t^ - t)^2 + l_coord [(x^-x)^2 + (y^-y)^2 + (sqrt w^ - sqrt w)^2 + (sqrt h^ - sqrt h)^2]`
//! and the other boxes of the cell pay `C^2`. Every box of an empty cell pays
//! `l_noobj C^2`. Angles are compared in normalized form without wraparound.

use serde::{Deserialize, Serialize};

use crate::geom::OrientedRect;
use crate::gridcodec::{
    assign_responsibility, encode_scene, BoxParams, Cell, GridError, GridSpec, GridTarget,
    GridTensor,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_ang: f64,
    pub lambda_coord: f64,
    pub lambda_noobj: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_ang: 10.0,
            lambda_coord: 5.0,
            lambda_noobj: 0.1,
        }
    }
}

/// Weighted contributions of each loss term; `total` is their sum.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub confidence_obj: f64,
    pub confidence_nonresp: f64,
    pub confidence_noobj: f64,
    pub angle: f64,
    pub coord: f64,
}

/// Partial derivatives, one [`BoxParams`]-shaped record per box slot.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGradient {
    pub spec: GridSpec,
    pub boxes: Vec<BoxParams>,
}

impl LossGradient {
    fn zeros(spec: GridSpec) -> Self {
        let z = BoxParams {
            x: 0.0,
            y: 0.0,
            w: 0.0,
            h: 0.0,
            theta_norm: 0.0,
            c: 0.0,
        };
        Self {
            spec,
            boxes: vec![z; spec.len()],
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.boxes
            .iter()
            .flat_map(|b| [b.x, b.y, b.w, b.h, b.theta_norm, b.c])
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Responsible box per occupied cell, as `(cell, j)` pairs.
pub type Responsibility = Vec<(usize, usize)>;

fn check(g: &GridTensor, t: &GridTarget) -> Result<(), GridError> {
    if g.spec() != t.spec() {
        return Err(GridError::SpecMismatch(*g.spec(), *t.spec()));
    }
    Ok(())
}

fn responsible_lookup(spec: &GridSpec, resp: &Responsibility) -> Vec<Option<usize>> {
    let mut r = vec![None; spec.cells()];
    for &(cell, j) in resp {
        r[cell] = Some(j);
    }
    r
}

/// Neumaier-compensated running sum. Keeps the loss accurate to an ulp or
/// so however many cells contribute.
#[derive(Debug, Clone, Copy, Default)]
struct Sum {
    sum: f64,
    comp: f64,
}

impl Sum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Loss under a given responsibility assignment.
pub fn loss_with(
    g: &GridTensor,
    t: &GridTarget,
    w: &LossWeights,
    resp: &Responsibility,
) -> Result<LossBreakdown, GridError> {
    check(g, t)?;
    let spec = g.spec();
    let lookup = responsible_lookup(spec, resp);
    let [mut obj, mut nonresp, mut noobj, mut angle, mut coord] = [Sum::default(); 5];
    for (cell, target) in t.cells().iter().enumerate() {
        let boxes = g.cell_boxes(cell);
        match target {
            None => {
                for b in boxes {
                    noobj.add(w.lambda_noobj * b.c * b.c);
                }
            }
            Some(e) => {
                let rj = lookup[cell].unwrap_or(0);
                for (j, b) in boxes.iter().enumerate() {
                    if j != rj {
                        nonresp.add(b.c * b.c);
                        continue;
                    }
                    obj.add((1.0 - b.c).powi(2));
                    angle.add(w.lambda_ang * (e.theta_norm - b.theta_norm).powi(2));
                    coord.add(
                        w.lambda_coord
                            * ((e.x - b.x).powi(2)
                                + (e.y - b.y).powi(2)
                                + (e.w.sqrt() - b.w.sqrt()).powi(2)
                                + (e.h.sqrt() - b.h.sqrt()).powi(2)),
                    );
                }
            }
        }
    }
    let mut total = Sum::default();
    for part in [obj, nonresp, noobj, angle, coord] {
        total.add(part.sum);
        total.add(part.comp);
    }
    Ok(LossBreakdown {
        total: total.value(),
        confidence_obj: obj.value(),
        confidence_nonresp: nonresp.value(),
        confidence_noobj: noobj.value(),
        angle: angle.value(),
        coord: coord.value(),
    })
}

pub fn loss(g: &GridTensor, t: &GridTarget, w: &LossWeights) -> Result<LossBreakdown, GridError> {
    let resp = assign_responsibility(g, t)?;
    loss_with(g, t, w, &resp)
}

/// Gradient under a fixed responsibility assignment. Requires `w, h > 0`.
pub fn loss_grad_with(
    g: &GridTensor,
    t: &GridTarget,
    w: &LossWeights,
    resp: &Responsibility,
) -> Result<LossGradient, GridError> {
    check(g, t)?;
    let spec = *g.spec();
    let lookup = responsible_lookup(&spec, resp);
    let mut grad = LossGradient::zeros(spec);
    for (cell, target) in t.cells().iter().enumerate() {
        for j in 0..spec.b {
            let b = g.get(cell, j);
            let d = &mut grad.boxes[g.slot(cell, j)];
            match target {
                None => d.c = 2.0 * w.lambda_noobj * b.c,
                Some(e) if lookup[cell].unwrap_or(0) == j => {
                    d.c = -2.0 * (1.0 - b.c);
                    d.theta_norm = -2.0 * w.lambda_ang * (e.theta_norm - b.theta_norm);
                    d.x = -2.0 * w.lambda_coord * (e.x - b.x);
                    d.y = -2.0 * w.lambda_coord * (e.y - b.y);
                    // d/dw (sqrt(w^) - sqrt(w))^2 = -(sqrt(w^) - sqrt(w)) / sqrt(w)
                    let sw = b.w.sqrt();
                    let sh = b.h.sqrt();
                    d.w = -w.lambda_coord * (e.w.sqrt() - sw) / sw;
                    d.h = -w.lambda_coord * (e.h.sqrt() - sh) / sh;
                }
                Some(_) => d.c = 2.0 * b.c,
            }
        }
    }
    Ok(grad)
}

pub fn loss_grad(
    g: &GridTensor,
    t: &GridTarget,
    w: &LossWeights,
) -> Result<LossGradient, GridError> {
    let resp = assign_responsibility(g, t)?;
    loss_grad_with(g, t, w, &resp)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub step: f64,
    pub max_iters: usize,
    /// Descent stops once the loss is at or below this value.
    pub tol: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            step: 0.01,
            max_iters: 5000,
            tol: 1e-12,
        }
    }
}

impl FitConfig {
    /// Largest step for which descent from [`BoxParams::INIT`] is expected
    /// to be monotone on this target: the inverse of the largest curvature
    /// any term reaches between the starting point and the target.
    pub fn stability_cap(target: &GridTarget, w: &LossWeights) -> f64 {
        let w0 = BoxParams::INIT.w.min(BoxParams::INIT.h);
        let mut curv = [2.0, 2.0 * w.lambda_ang, 2.0 * w.lambda_coord, 2.0 * w.lambda_noobj]
            .into_iter()
            .fold(0.0_f64, f64::max);
        for (_, e) in target.occupied() {
            for s in [e.w, e.h] {
                // (sqrt(s) - sqrt(v))^2 has curvature sqrt(s) / (2 v^1.5)
                let v = s.min(w0);
                curv = curv.max(w.lambda_coord * s.sqrt() / (2.0 * v.powf(1.5)));
            }
        }
        1.0 / curv
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordFit {
    pub word_index: usize,
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub final_loss: f64,
    pub iterations: usize,
    pub per_word: Vec<WordFit>,
    pub unrepresentable: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub tensor: GridTensor,
    pub report: FitReport,
    /// Loss before the first step and after every step.
    pub trace: Vec<f64>,
}

/// Descends from [`BoxParams::INIT`] in every slot.
pub fn fit_boxes(
    t: &GridTarget,
    w: &LossWeights,
    opt: &FitConfig,
) -> Result<FitOutcome, GridError> {
    fit_boxes_from(GridTensor::filled(*t.spec(), BoxParams::INIT), t, w, opt)
}

pub fn fit_boxes_from(
    init: GridTensor,
    t: &GridTarget,
    w: &LossWeights,
    opt: &FitConfig,
) -> Result<FitOutcome, GridError> {
    check(&init, t)?;
    let cap = FitConfig::stability_cap(t, w);
    if opt.step > cap {
        log::warn!("step {} above stability cap {cap:.4}; loss may oscillate", opt.step);
    }
    let mut g = init;
    for b in g.boxes_mut() {
        *b = b.clamped();
    }
    let mut current = loss(&g, t, w)?.total;
    let mut trace = vec![current];
    let mut iterations = 0;
    while iterations < opt.max_iters && current > opt.tol {
        let resp = assign_responsibility(&g, t)?;
        let grad = loss_grad_with(&g, t, w, &resp)?;
        for (b, d) in g.boxes_mut().iter_mut().zip(&grad.boxes) {
            *b = BoxParams {
                x: b.x - opt.step * d.x,
                y: b.y - opt.step * d.y,
                w: b.w - opt.step * d.w,
                h: b.h - opt.step * d.h,
                theta_norm: b.theta_norm - opt.step * d.theta_norm,
                c: b.c - opt.step * d.c,
            }
            .clamped();
        }
        iterations += 1;
        current = loss(&g, t, w)?.total;
        trace.push(current);
    }

    let spec = *t.spec();
    let resp = assign_responsibility(&g, t)?;
    let mut per_word = Vec::with_capacity(resp.len());
    for (cell, j) in resp {
        let c = Cell::from_index(cell, &spec);
        let e = t.cells()[cell].expect("responsible cells are occupied");
        let truth = e.to_rect(c, &spec)?;
        let pred = g.get(cell, j).to_rect(c, &spec)?;
        per_word.push(WordFit {
            word_index: e.word,
            iou: crate::geom::iou(&pred, &truth),
        });
    }
    per_word.sort_by_key(|p| p.word_index);
    Ok(FitOutcome {
        tensor: g,
        report: FitReport {
            final_loss: current,
            iterations,
            per_word,
            unrepresentable: Vec::new(),
        },
        trace,
    })
}

/// Encodes block-frame words and fits them; words lost to cell collisions
/// are listed as unrepresentable.
pub fn fit_scene(
    words: &[OrientedRect],
    spec: &GridSpec,
    w: &LossWeights,
    opt: &FitConfig,
) -> Result<FitOutcome, GridError> {
    let (target, collisions) = encode_scene(words, spec)?;
    let mut out = fit_boxes(&target, w, opt)?;
    out.report.unrepresentable = collisions;
    Ok(out)
}
