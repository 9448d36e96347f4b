//! Confidence thresholding and greedy oriented non-maximum suppression.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::geom::{iou, OrientedRect};

/// Detections below this confidence are dropped.
pub const DEFAULT_CONF_THRESHOLD: f64 = 0.5;
/// Overlaps strictly above this IoU are suppressed. Words sit side by side
/// along a line, so the value is lower than for generic objects.
pub const DEFAULT_NMS_IOU: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub rect: OrientedRect,
    pub confidence: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_block: Option<usize>,
}

impl Detection {
    pub fn new(rect: OrientedRect, confidence: f64) -> Self {
        Self {
            rect,
            confidence,
            source_block: None,
        }
    }
}

/// Flat on-disk form `{cx, cy, w, h, theta, confidence}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
    pub theta: f64,
    pub confidence: f64,
}

impl From<&Detection> for DetectionRecord {
    fn from(d: &Detection) -> Self {
        Self {
            cx: d.rect.cx(),
            cy: d.rect.cy(),
            w: d.rect.w(),
            h: d.rect.h(),
            theta: d.rect.theta(),
            confidence: d.confidence,
        }
    }
}

impl TryFrom<DetectionRecord> for Detection {
    type Error = crate::geom::GeomError;

    fn try_from(r: DetectionRecord) -> Result<Self, Self::Error> {
        if !(0.0..=1.0).contains(&r.confidence) {
            return Err(crate::geom::GeomError::NonFinite);
        }
        Ok(Detection::new(
            OrientedRect::new(r.cx, r.cy, r.w, r.h, r.theta)?,
            r.confidence,
        ))
    }
}

pub fn filter_confidence(ds: &[Detection], threshold: f64) -> Vec<Detection> {
    ds.iter()
        .filter(|d| d.confidence >= threshold)
        .copied()
        .collect()
}

/// Total order used wherever detections are ranked: confidence descending,
/// then smaller `cx`, then smaller `cy`, then input position.
pub fn rank_order(ds: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.sort_by(|&a, &b| rank_cmp(&ds[a], a, &ds[b], b));
    order
}

fn rank_cmp(a: &Detection, ia: usize, b: &Detection, ib: usize) -> Ordering {
    b.confidence
        .total_cmp(&a.confidence)
        .then(a.rect.cx().total_cmp(&b.rect.cx()))
        .then(a.rect.cy().total_cmp(&b.rect.cy()))
        .then(ia.cmp(&ib))
}

/// Greedy NMS. Survivors come out in rank order; a candidate is dropped when
/// its IoU with an already kept detection is strictly above `iou_threshold`.
pub fn nms(ds: &[Detection], iou_threshold: f64) -> Vec<Detection> {
    let order = rank_order(ds);
    let mut suppressed = vec![false; ds.len()];
    let mut kept = Vec::new();
    for (pos, &i) in order.iter().enumerate() {
        if suppressed[i] {
            continue;
        }
        kept.push(ds[i]);
        for &j in &order[pos + 1..] {
            if !suppressed[j] && iou(&ds[i].rect, &ds[j].rect) > iou_threshold {
                suppressed[j] = true;
            }
        }
    }
    kept
}
