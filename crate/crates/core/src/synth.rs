//! Seeded synthetic scenes and oracle stand-ins for the segmenter and the
//! word detector.
//!
//! All randomness comes from `Xoshiro256PlusPlus` seeded through SplitMix64
//! (`seed_from_u64`), so a given seed yields bit-identical scenes on every
//! platform.

use std::f64::consts::FRAC_PI_2;

use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rand_xoshiro::{SplitMix64, Xoshiro256PlusPlus};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blocks::{BinaryMask, CropPlan};
use crate::geom::{self, GeomError, OrientedRect, Point};
use crate::gridcodec::{cell_of_point, GridSpec};
use crate::postproc::Detection;

/// Placement attempts per line before generation gives up.
pub const MAX_LINE_ATTEMPTS: usize = 500;
/// Largest IoU tolerated between words of different lines.
pub const MAX_CROSS_LINE_IOU: f64 = 0.1;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synth config: {0}")]
    InvalidConfig(String),
    #[error("could not place line {line} after {attempts} attempts")]
    GenerationFailed { line: usize, attempts: usize },
    #[error(transparent)]
    Geom(#[from] GeomError),
}

pub fn rng_from_seed(seed: u64) -> Xoshiro256PlusPlus {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

/// Independent sub-seed for stream `stream` of `seed`.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut sm = SplitMix64::seed_from_u64(seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    sm.random()
}

/// Inclusive range; `lo == hi` pins the value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Span<T> {
    pub lo: T,
    pub hi: T,
}

impl<T: Copy> Span<T> {
    pub const fn new(lo: T, hi: T) -> Self {
        Self { lo, hi }
    }

    pub const fn fixed(v: T) -> Self {
        Self { lo: v, hi: v }
    }
}

impl Span<f64> {
    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        if self.lo == self.hi {
            self.lo
        } else {
            rng.random_range(self.lo..=self.hi)
        }
    }
}

impl Span<usize> {
    fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        rng.random_range(self.lo..=self.hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub width: f64,
    pub height: f64,
    pub lines: Span<usize>,
    pub words_per_line: Span<usize>,
    /// Word height in pixels.
    pub word_height: Span<f64>,
    /// Word width over height.
    pub aspect: Span<f64>,
    pub line_angle: Span<f64>,
    /// Gap between neighbouring words as a fraction of the line height.
    pub inter_word_gap: Span<f64>,
    pub dont_care_prob: f64,
    /// Minimum distance between words on different lines, in pixels.
    pub line_clearance: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            width: 1000.0,
            height: 700.0,
            lines: Span::new(6, 14),
            words_per_line: Span::new(3, 10),
            word_height: Span::new(10.0, 24.0),
            aspect: Span::new(1.0, 4.0),
            line_angle: Span::new(-0.4, 0.4),
            inter_word_gap: Span::new(0.1, 0.4),
            dont_care_prob: 0.1,
            line_clearance: 0.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    /// Short, well separated lines, so that every word of a block lands in
    /// its own cell of a 15x15 grid.
    pub fn sparse() -> Self {
        Self {
            lines: Span::new(1, 4),
            words_per_line: Span::new(1, 3),
            word_height: Span::new(16.0, 32.0),
            aspect: Span::new(2.0, 4.0),
            line_angle: Span::new(-0.3, 0.3),
            inter_word_gap: Span::new(0.5, 1.0),
            line_clearance: 24.0,
            ..Self::default()
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidConfig(m.to_string()));
        if !(self.width > 0.0 && self.height > 0.0) {
            return bad("image size must be positive");
        }
        if self.lines.lo > self.lines.hi || self.words_per_line.lo > self.words_per_line.hi {
            return bad("empty count range");
        }
        if self.words_per_line.lo == 0 {
            return bad("lines need at least one word");
        }
        for (name, s) in [
            ("word_height", self.word_height),
            ("aspect", self.aspect),
            ("line_angle", self.line_angle),
            ("inter_word_gap", self.inter_word_gap),
        ] {
            if !s.lo.is_finite() || !s.hi.is_finite() || s.lo > s.hi {
                return bad(&format!("empty range {name}"));
            }
        }
        if self.word_height.lo <= 0.0 || self.aspect.lo <= 0.0 || self.inter_word_gap.lo < 0.0 {
            return bad("sizes must be positive");
        }
        if !(0.0..=1.0).contains(&self.dont_care_prob) {
            return bad("dont_care_prob outside [0, 1]");
        }
        if self.line_clearance.is_nan() || self.line_clearance < 0.0 {
            return bad("negative line_clearance");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneWord {
    #[serde(flatten)]
    pub rect: OrientedRect,
    pub dont_care: bool,
    pub line_id: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneTruth {
    pub width: f64,
    pub height: f64,
    pub words: Vec<SceneWord>,
}

impl SceneTruth {
    pub fn image(&self) -> (f64, f64) {
        (self.width, self.height)
    }

    pub fn rects(&self) -> Vec<OrientedRect> {
        self.words.iter().map(|w| w.rect).collect()
    }

    /// Uniformly rescaled copy (image and all words).
    pub fn scaled(&self, s: f64) -> Result<SceneTruth, GeomError> {
        let words = self
            .words
            .iter()
            .map(|w| {
                let r = &w.rect;
                Ok(SceneWord {
                    rect: OrientedRect::new(r.cx() * s, r.cy() * s, r.w() * s, r.h() * s, r.theta())?,
                    ..*w
                })
            })
            .collect::<Result<_, GeomError>>()?;
        Ok(SceneTruth {
            width: self.width * s,
            height: self.height * s,
            words,
        })
    }
}

fn inside_image(r: &OrientedRect, width: f64, height: f64) -> bool {
    let b = geom::aabb(r);
    b.xmin >= 0.0 && b.ymin >= 0.0 && b.xmax <= width && b.ymax <= height
}

/// Lays out lines of words along straight baselines. Words of a line share
/// its angle and height; lines are re-drawn until they clear earlier lines.
pub fn gen_scene(cfg: &SynthConfig) -> Result<SceneTruth, SynthError> {
    cfg.validate()?;
    let mut rng = rng_from_seed(cfg.seed);
    let n_lines = cfg.lines.sample(&mut rng);
    let mut words: Vec<SceneWord> = Vec::new();
    for line in 0..n_lines {
        let mut placed = None;
        for _ in 0..MAX_LINE_ATTEMPTS {
            let angle = cfg.line_angle.sample(&mut rng);
            let h = cfg.word_height.sample(&mut rng);
            let k = cfg.words_per_line.sample(&mut rng);
            let widths: Vec<f64> = (0..k).map(|_| h * cfg.aspect.sample(&mut rng)).collect();
            let gaps: Vec<f64> = (1..k).map(|_| h * cfg.inter_word_gap.sample(&mut rng)).collect();
            let length = widths.iter().sum::<f64>() + gaps.iter().sum::<f64>();
            let (s, c) = angle.sin_cos();
            let half_x = (length * c.abs() + h * s.abs()) / 2.0;
            let half_y = (length * s.abs() + h * c.abs()) / 2.0;
            if 2.0 * half_x > cfg.width || 2.0 * half_y > cfg.height {
                continue;
            }
            let lx = rng.random_range(half_x..=cfg.width - half_x);
            let ly = rng.random_range(half_y..=cfg.height - half_y);
            let mut along = -length / 2.0;
            let mut rects = Vec::with_capacity(k);
            for (i, w) in widths.iter().enumerate() {
                let t = along + w / 2.0;
                rects.push(OrientedRect::new(lx + t * c, ly + t * s, *w, h, angle)?);
                along += w + gaps.get(i).copied().unwrap_or(0.0);
            }
            let ok = rects.iter().all(|r| {
                inside_image(r, cfg.width, cfg.height)
                    && words.iter().all(|o| {
                        geom::iou(r, &o.rect) <= MAX_CROSS_LINE_IOU
                            && (cfg.line_clearance == 0.0
                                || geom::min_distance(r, &o.rect) >= cfg.line_clearance)
                    })
            });
            if ok {
                placed = Some(rects);
                break;
            }
        }
        let rects = placed.ok_or(SynthError::GenerationFailed {
            line,
            attempts: MAX_LINE_ATTEMPTS,
        })?;
        for rect in rects {
            let dont_care = rng.random_bool(cfg.dont_care_prob);
            words.push(SceneWord {
                rect,
                dont_care,
                line_id: line,
            });
        }
    }
    Ok(SceneTruth {
        width: cfg.width,
        height: cfg.height,
        words,
    })
}

/// Square max filter of radius `r` (Chebyshev dilation).
fn dilate(m: &BinaryMask, r: usize) -> BinaryMask {
    if r == 0 {
        return m.clone();
    }
    let (w, h) = (m.width(), m.height());
    let pass = |src: &[bool], len: usize, stride: usize, count: usize, step: usize| {
        let mut out = vec![false; src.len()];
        let mut prefix = vec![0usize; len + 1];
        for line in 0..count {
            let base = line * step;
            for i in 0..len {
                prefix[i + 1] = prefix[i] + src[base + i * stride] as usize;
            }
            for i in 0..len {
                let lo = i.saturating_sub(r);
                let hi = (i + r + 1).min(len);
                out[base + i * stride] = prefix[hi] > prefix[lo];
            }
        }
        out
    };
    let rows = pass(m.bits(), w, 1, h, w);
    let both = pass(&rows, h, w, w, 1);
    BinaryMask::from_bits(w, h, both).expect("same shape")
}

/// Marks every pixel whose center falls inside a word (don't-care words
/// included), then dilates by `dilation` pixels.
pub fn oracle_segment(s: &SceneTruth, dilation: usize) -> BinaryMask {
    let (w, h) = (s.width.ceil() as usize, s.height.ceil() as usize);
    let mut m = BinaryMask::new(w, h);
    for word in &s.words {
        let b = geom::aabb(&word.rect);
        let x0 = b.xmin.floor().max(0.0) as usize;
        let y0 = b.ymin.floor().max(0.0) as usize;
        let x1 = (b.xmax.ceil().max(0.0) as usize).min(w);
        let y1 = (b.ymax.ceil().max(0.0) as usize).min(h);
        for y in y0..y1 {
            for x in x0..x1 {
                if word.rect.contains(Point::new(x as f64 + 0.5, y as f64 + 0.5)) {
                    m.set(x, y, true);
                }
            }
        }
    }
    dilate(&m, dilation)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleNoise {
    /// Center jitter in block pixels.
    pub sigma_center: f64,
    /// Relative size jitter.
    pub sigma_size: f64,
    /// Angle jitter in radians.
    pub sigma_theta: f64,
    /// Expected false positives per block.
    pub false_pos_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleOutput {
    /// Block-frame detections: true words in word order, then false positives.
    pub detections: Vec<Detection>,
    /// Scene word index of each detection, `None` for false positives.
    pub word_of: Vec<Option<usize>>,
    /// Words centered in the block that the grid could not hold.
    pub dropped: Vec<usize>,
}

/// Stand-in detector: maps every word centered in the crop into the block
/// frame, jitters it, and keeps at most `spec.b` words per grid cell
/// (largest first). False positives are appended afterwards.
pub fn oracle_detect(
    plan: &CropPlan,
    s: &SceneTruth,
    spec: &GridSpec,
    noise: &OracleNoise,
    seed: u64,
) -> Result<OracleOutput, GeomError> {
    if spec.side != plan.dst_side {
        log::warn!("grid side {} differs from crop side {}", spec.side, plan.dst_side);
    }
    let mut rng = rng_from_seed(seed);
    let mut candidates: Vec<(usize, Detection, usize)> = Vec::new();
    for (k, word) in s.words.iter().enumerate() {
        if !plan.src.contains_point(word.rect.center()) {
            continue;
        }
        let m = plan.rect_to_block(&word.rect)?;
        let n: [f64; 5] = std::array::from_fn(|_| rng.sample(StandardNormal));
        let rect = OrientedRect::new(
            m.cx() + noise.sigma_center * n[0],
            m.cy() + noise.sigma_center * n[1],
            m.w() * (1.0 + noise.sigma_size * n[2]).max(0.1),
            m.h() * (1.0 + noise.sigma_size * n[3]).max(0.1),
            m.theta() + noise.sigma_theta * n[4],
        )?;
        let confidence = 1.0 - rng.random_range(0.0..=0.1);
        let c = rect.center();
        let edge = spec.side * (1.0 - f64::EPSILON);
        let cell = cell_of_point(
            Point::new(c.x.clamp(0.0, edge), c.y.clamp(0.0, edge)),
            spec,
        )
        .expect("clamped into the block");
        candidates.push((k, Detection::new(rect, confidence), cell.index(spec)));
    }
    // per cell: largest area first, ties by word index
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| {
        let (ka, da, ca) = &candidates[a];
        let (kb, db, cb) = &candidates[b];
        ca.cmp(cb)
            .then(db.rect.area().total_cmp(&da.rect.area()))
            .then(ka.cmp(kb))
    });
    let mut keep = vec![false; candidates.len()];
    let mut dropped = Vec::new();
    let mut run = 0;
    for (pos, &i) in order.iter().enumerate() {
        if pos > 0 && candidates[order[pos - 1]].2 != candidates[i].2 {
            run = 0;
        }
        if run < spec.b {
            keep[i] = true;
        } else {
            dropped.push(candidates[i].0);
        }
        run += 1;
    }
    dropped.sort_unstable();

    let mut detections = Vec::new();
    let mut word_of = Vec::new();
    for (i, (k, d, _)) in candidates.iter().enumerate() {
        if keep[i] {
            detections.push(*d);
            word_of.push(Some(*k));
        }
    }

    let rate = noise.false_pos_rate.max(0.0);
    let mut n_fp = rate.floor() as usize;
    if rng.random_bool(rate.fract()) {
        n_fp += 1;
    }
    for _ in 0..n_fp {
        let side = spec.side;
        let w = side * rng.random_range(0.05..=0.3);
        let h = w * rng.random_range(0.2..=0.5);
        let rect = OrientedRect::new(
            rng.random_range(0.0..side),
            rng.random_range(0.0..side),
            w,
            h,
            rng.random_range(-FRAC_PI_2..FRAC_PI_2),
        )?;
        detections.push(Detection::new(rect, rng.random_range(0.5..=0.7)));
        word_of.push(None);
    }
    Ok(OracleOutput {
        detections,
        word_of,
        dropped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocks::{connected_components, crop_plan, Block};
    use crate::geom::Aabb;

    #[test]
    fn seeded_determinism() {
        let cfg = SynthConfig::default().with_seed(42);
        let a = gen_scene(&cfg).unwrap();
        let b = gen_scene(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        assert_ne!(a, gen_scene(&cfg.with_seed(43)).unwrap());
    }

    #[test]
    fn zero_lines() {
        let cfg = SynthConfig {
            lines: Span::fixed(0),
            ..SynthConfig::default()
        };
        assert!(gen_scene(&cfg).unwrap().words.is_empty());
    }

    #[test]
    fn fixed_angle() {
        let cfg = SynthConfig {
            line_angle: Span::fixed(0.2),
            ..SynthConfig::default()
        };
        for seed in 0..20 {
            let s = gen_scene(&cfg.with_seed(seed)).unwrap();
            assert!(s.words.iter().all(|w| w.rect.theta() == 0.2));
        }
    }

    #[test]
    fn scene_invariants() {
        for seed in 0..50 {
            let s = gen_scene(&SynthConfig::default().with_seed(seed)).unwrap();
            for (i, a) in s.words.iter().enumerate() {
                assert!(inside_image(&a.rect, s.width, s.height));
                for b in &s.words[i + 1..] {
                    let v = geom::iou(&a.rect, &b.rect);
                    if a.line_id == b.line_id {
                        assert_eq!(v, 0.0);
                    } else {
                        assert!(v <= MAX_CROSS_LINE_IOU);
                    }
                }
            }
        }
    }

    #[test]
    fn impossible_layout_fails() {
        let cfg = SynthConfig {
            width: 50.0,
            height: 50.0,
            word_height: Span::fixed(40.0),
            aspect: Span::fixed(3.0),
            ..SynthConfig::default()
        };
        assert!(matches!(
            gen_scene(&cfg),
            Err(SynthError::GenerationFailed { line: 0, .. })
        ));
        let bad = SynthConfig {
            dont_care_prob: 1.5,
            ..SynthConfig::default()
        };
        assert!(matches!(gen_scene(&bad), Err(SynthError::InvalidConfig(_))));
    }

    #[test]
    fn scene_json_shape() {
        let s = gen_scene(&SynthConfig::default().with_seed(1)).unwrap();
        let v = serde_json::to_value(&s).unwrap();
        let keys: Vec<_> = v["words"][0].as_object().unwrap().keys().cloned().collect();
        assert_eq!(keys, ["cx", "cy", "w", "h", "theta", "dont_care", "line_id"]);
        let back: SceneTruth = serde_json::from_value(v).unwrap();
        assert_eq!(back, s);
    }

    fn single_word_scene(r: OrientedRect) -> SceneTruth {
        SceneTruth {
            width: 100.0,
            height: 100.0,
            words: vec![SceneWord {
                rect: r,
                dont_care: false,
                line_id: 0,
            }],
        }
    }

    #[test]
    fn segment_empty_and_single() {
        let empty = SceneTruth {
            width: 64.0,
            height: 32.0,
            words: vec![],
        };
        let m = oracle_segment(&empty, 2);
        assert_eq!((m.width(), m.height(), m.count()), (64, 32, 0));

        let r = OrientedRect::new(50.3, 40.7, 30.0, 12.0, 0.0).unwrap();
        let m = oracle_segment(&single_word_scene(r), 0);
        let rel = (m.count() as f64 - r.area()).abs() / r.area();
        assert!(rel < 0.02, "rasterized {} vs {}", m.count(), r.area());

        let rot = OrientedRect::new(50.0, 50.0, 40.0, 14.0, 0.6).unwrap();
        let m = oracle_segment(&single_word_scene(rot), 0);
        let rel = (m.count() as f64 - rot.area()).abs() / rot.area();
        assert!(rel < 0.02);
    }

    #[test]
    fn dilation_merges_close_words() {
        let a = OrientedRect::new(20.0, 50.0, 20.0, 10.0, 0.0).unwrap();
        let b = OrientedRect::new(45.0, 50.0, 20.0, 10.0, 0.0).unwrap();
        let s = SceneTruth {
            width: 100.0,
            height: 100.0,
            words: [a, b]
                .iter()
                .map(|&rect| SceneWord {
                    rect,
                    dont_care: false,
                    line_id: 0,
                })
                .collect(),
        };
        // gap of 5 px
        assert_eq!(connected_components(&oracle_segment(&s, 0), 10).len(), 2);
        assert_eq!(connected_components(&oracle_segment(&s, 3), 10).len(), 1);
    }

    fn plan_for(scene: &SceneTruth) -> CropPlan {
        let b = Block {
            id: 0,
            region_aabb: Aabb::new(0.0, 0.0, scene.width, scene.height),
            member_word_indices: None,
        };
        crop_plan(&b, scene.image(), 240.0)
    }

    #[test]
    fn oracle_identity() {
        let s = gen_scene(&SynthConfig::sparse().with_seed(3)).unwrap();
        let s = SceneTruth {
            width: 700.0,
            height: 700.0,
            words: s.words.into_iter().filter(|w| geom::aabb(&w.rect).xmax <= 700.0).collect(),
        };
        let plan = plan_for(&s);
        let spec = GridSpec::new(15, 1, 240.0).unwrap();
        let out = oracle_detect(&plan, &s, &spec, &OracleNoise::default(), 9).unwrap();
        assert!(out.dropped.is_empty());
        assert_eq!(out.detections.len(), s.words.len());
        for (d, k) in out.detections.iter().zip(&out.word_of) {
            let truth = plan.rect_to_block(&s.words[k.unwrap()].rect).unwrap();
            assert!(d.rect.approx_same(&truth, 1e-9));
            assert!(d.confidence >= 0.9);
        }
        let again = oracle_detect(&plan, &s, &spec, &OracleNoise::default(), 9).unwrap();
        assert_eq!(out, again);
    }

    #[test]
    fn oracle_capacity() {
        // both centers fall in block cell (3, 3) of a 15x15 grid over 240 px
        let a = OrientedRect::new(52.0, 52.0, 20.0, 6.0, 0.0).unwrap();
        let b = OrientedRect::new(60.0, 60.0, 10.0, 4.0, 0.0).unwrap();
        let s = SceneTruth {
            width: 240.0,
            height: 240.0,
            words: [a, b]
                .iter()
                .map(|&rect| SceneWord {
                    rect,
                    dont_care: false,
                    line_id: 0,
                })
                .collect(),
        };
        let plan = plan_for(&s);
        let out = oracle_detect(
            &plan,
            &s,
            &GridSpec::new(15, 1, 240.0).unwrap(),
            &OracleNoise::default(),
            0,
        )
        .unwrap();
        assert_eq!(out.detections.len(), 1);
        assert_eq!(out.dropped, vec![1]);
        let out2 = oracle_detect(
            &plan,
            &s,
            &GridSpec::new(15, 2, 240.0).unwrap(),
            &OracleNoise::default(),
            0,
        )
        .unwrap();
        assert_eq!(out2.detections.len(), 2);
    }

    #[test]
    fn oracle_false_positives() {
        let s = SceneTruth {
            width: 240.0,
            height: 240.0,
            words: vec![],
        };
        let noise = OracleNoise {
            false_pos_rate: 3.0,
            ..OracleNoise::default()
        };
        let out = oracle_detect(&plan_for(&s), &s, &GridSpec::new(15, 1, 240.0).unwrap(), &noise, 5)
            .unwrap();
        assert_eq!(out.detections.len(), 3);
        assert!(out
            .detections
            .iter()
            .all(|d| (0.5..=0.7).contains(&d.confidence)));
        assert!(out.word_of.iter().all(Option::is_none));
    }
}
