//! ICDAR-2015-style word detection scoring.
//!
//! Ground truth is one word per line, `x1,y1,x2,y2,x3,y3,x4,y4,transcription`,
//! with `###` marking a don't-care word. A detection is a true positive when
//! its IoU with an unclaimed countable word is strictly above 0.5. Detections
//! that only hit don't-care words are left out of the precision denominator,
//! and don't-care words never count toward recall.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{iou, min_area_rect, GeomError, OrientedRect, Point, Quad};
use crate::postproc::{rank_order, Detection, DetectionRecord};

pub const MATCH_IOU: f64 = 0.5;
pub const DONT_CARE_MARK: &str = "###";
/// Identifier of the don't-care rule, recorded in dataset reports.
pub const DONT_CARE_RULE: &str = "absorb-dontcare-from-precision";

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: degenerate quadrilateral")]
    DegenerateQuad { line: usize },
    #[error("missing input: {0}")]
    MissingFile(String),
    #[error("{file}: {source}")]
    InFile {
        file: String,
        #[source]
        source: Box<EvalError>,
    },
    #[error("invalid detection {index}: {source}")]
    BadDetection { index: usize, source: GeomError },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl EvalError {
    fn in_file(self, file: &Path) -> Self {
        EvalError::InFile {
            file: file.display().to_string(),
            source: Box::new(self),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtEntry {
    pub rect: OrientedRect,
    pub dont_care: bool,
    pub raw_quad: Quad,
}

impl GtEntry {
    /// Entry for an existing rect, with its corners as the quad.
    pub fn from_rect(rect: OrientedRect, dont_care: bool) -> Self {
        let c = crate::geom::to_corners(&rect);
        let v = c.vertices();
        let raw_quad = Quad::new([v[0], v[1], v[2], v[3]]).expect("rect corners form a quad");
        Self {
            rect,
            dont_care,
            raw_quad,
        }
    }
}

pub fn parse_icdar_gt(text: &str) -> Result<Vec<GtEntry>, EvalError> {
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.trim_end_matches('\r').splitn(9, ',').collect();
        if fields.len() < 9 {
            return Err(EvalError::Parse {
                line,
                msg: format!("expected 8 coordinates and a transcription, found {} fields", fields.len()),
            });
        }
        let mut c = [0.0f64; 8];
        for (k, f) in fields[..8].iter().enumerate() {
            let v = f.trim().parse::<f64>().map_err(|_| EvalError::Parse {
                line,
                msg: format!("bad coordinate {f:?}"),
            })?;
            if !v.is_finite() {
                return Err(EvalError::Parse {
                    line,
                    msg: format!("non-finite coordinate {f:?}"),
                });
            }
            c[k] = v;
        }
        let pts = [
            Point::new(c[0], c[1]),
            Point::new(c[2], c[3]),
            Point::new(c[4], c[5]),
            Point::new(c[6], c[7]),
        ];
        let quad = Quad::new(pts).map_err(|_| EvalError::DegenerateQuad { line })?;
        let rect = min_area_rect(&quad).map_err(|_| EvalError::DegenerateQuad { line })?;
        out.push(GtEntry {
            rect,
            dont_care: fields[8].trim() == DONT_CARE_MARK,
            raw_quad: quad,
        });
    }
    Ok(out)
}

/// Writes entries back in the comma-separated quad format. Transcriptions
/// are not kept, so countable words get `word`.
pub fn format_icdar_gt(gts: &[GtEntry]) -> String {
    let mut s = String::new();
    for g in gts {
        for p in g.raw_quad.points() {
            s.push_str(&format!("{},{},", p.x, p.y));
        }
        s.push_str(if g.dont_care { DONT_CARE_MARK } else { "word" });
        s.push('\n');
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchPair {
    pub detection: usize,
    pub gt: usize,
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MatchResult {
    pub pairs: Vec<MatchPair>,
    pub unmatched_detections: Vec<usize>,
    pub unmatched_gt: Vec<usize>,
    pub dontcare_absorbed: Vec<usize>,
}

/// Greedy one-to-one matching in descending confidence order.
pub fn match_detections(ds: &[Detection], gts: &[GtEntry]) -> MatchResult {
    let mut claimed = vec![false; gts.len()];
    let mut m = MatchResult::default();
    for i in rank_order(ds) {
        let d = &ds[i].rect;
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if gt.dont_care || claimed[g] {
                continue;
            }
            let v = iou(d, &gt.rect);
            if v > MATCH_IOU && best.is_none_or(|(_, b)| v > b) {
                best = Some((g, v));
            }
        }
        if let Some((g, v)) = best {
            claimed[g] = true;
            m.pairs.push(MatchPair {
                detection: i,
                gt: g,
                iou: v,
            });
            continue;
        }
        let hits_dont_care = gts
            .iter()
            .any(|gt| gt.dont_care && iou(d, &gt.rect) > MATCH_IOU);
        if hits_dont_care {
            m.dontcare_absorbed.push(i);
        } else {
            m.unmatched_detections.push(i);
        }
    }
    m.unmatched_gt = (0..gts.len())
        .filter(|&g| !gts[g].dont_care && !claimed[g])
        .collect();
    m.unmatched_detections.sort_unstable();
    m.dontcare_absorbed.sort_unstable();
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    pub true_positives: usize,
    pub detections_counted: usize,
    pub gt_counted: usize,
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
}

impl EvalReport {
    pub fn from_counts(tp: usize, detections: usize, gts: usize) -> Self {
        let precision = if detections == 0 {
            1.0
        } else {
            tp as f64 / detections as f64
        };
        let recall = if gts == 0 { 1.0 } else { tp as f64 / gts as f64 };
        let f_score = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            true_positives: tp,
            detections_counted: detections,
            gt_counted: gts,
            precision,
            recall,
            f_score,
        }
    }
}

pub fn score(m: &MatchResult, gts: &[GtEntry]) -> EvalReport {
    let total = m.pairs.len() + m.unmatched_detections.len() + m.dontcare_absorbed.len();
    EvalReport::from_counts(
        m.pairs.len(),
        total - m.dontcare_absorbed.len(),
        gts.iter().filter(|g| !g.dont_care).count(),
    )
}

pub fn evaluate_image(ds: &[Detection], gts: &[GtEntry]) -> EvalReport {
    score(&match_detections(ds, gts), gts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageReport {
    pub image: String,
    #[serde(flatten)]
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetReport {
    pub dontcare_rule: String,
    pub aggregate: EvalReport,
    pub per_image: Vec<ImageReport>,
}

/// Micro-average: counts are summed over images before computing ratios.
pub fn aggregate(per_image: Vec<ImageReport>) -> DatasetReport {
    let (tp, det, gt) = per_image.iter().fold((0, 0, 0), |(a, b, c), r| {
        (
            a + r.report.true_positives,
            b + r.report.detections_counted,
            c + r.report.gt_counted,
        )
    });
    DatasetReport {
        dontcare_rule: DONT_CARE_RULE.to_string(),
        aggregate: EvalReport::from_counts(tp, det, gt),
        per_image,
    }
}

pub fn read_detections(path: &Path) -> Result<Vec<Detection>, EvalError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| EvalError::MissingFile(format!("{}: {e}", path.display())))?;
    parse_detections(&text).map_err(|e| e.in_file(path))
}

/// Detection file: JSON array of `{cx, cy, w, h, theta, confidence}`.
pub fn parse_detections(text: &str) -> Result<Vec<Detection>, EvalError> {
    let records: Vec<DetectionRecord> = serde_json::from_str(text)?;
    records
        .into_iter()
        .enumerate()
        .map(|(index, r)| Detection::try_from(r).map_err(|source| EvalError::BadDetection { index, source }))
        .collect()
}

pub fn read_gt(path: &Path) -> Result<Vec<GtEntry>, EvalError> {
    let bytes = std::fs::read(path)
        .map_err(|e| EvalError::MissingFile(format!("{}: {e}", path.display())))?;
    let text = String::from_utf8_lossy(&bytes);
    parse_icdar_gt(&text).map_err(|e| e.in_file(path))
}

fn image_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Evaluates `(detection file, ground-truth file)` pairs in order.
pub fn evaluate_dataset(pairs: &[(PathBuf, PathBuf)]) -> Result<DatasetReport, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::MissingFile("empty dataset".into()));
    }
    let mut per_image = Vec::with_capacity(pairs.len());
    for (det, gt) in pairs {
        let ds = read_detections(det)?;
        let gts = read_gt(gt)?;
        per_image.push(ImageReport {
            image: image_id(gt),
            report: evaluate_image(&ds, &gts),
        });
    }
    Ok(aggregate(per_image))
}

/// Per-image table with a header row.
pub fn write_csv<W: Write>(report: &DatasetReport, out: W) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "image",
        "true_positives",
        "detections_counted",
        "gt_counted",
        "precision",
        "recall",
        "f_score",
    ])?;
    for r in &report.per_image {
        let p = &r.report;
        w.write_record([
            r.image.clone(),
            p.true_positives.to_string(),
            p.detections_counted.to_string(),
            p.gt_counted.to_string(),
            crate::jsonfmt::round_sig9(p.precision).to_string(),
            crate::jsonfmt::round_sig9(p.recall).to_string(),
            crate::jsonfmt::round_sig9(p.f_score).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
