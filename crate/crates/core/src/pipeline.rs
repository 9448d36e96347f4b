//! The full cascade: mask, blocks, per-block crops, block detector,
//! confidence filter, mapping back to the image, and global NMS.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blocks::{self, BinaryMask, Block, CropPlan};
use crate::geom::{Aabb, GeomError, OrientedRect};
use crate::gridcodec::{GridError, GridSpec};
use crate::postproc::{self, Detection};
use crate::synth::{self, OracleNoise, SceneTruth};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{stage}: {source}")]
    Geom {
        stage: &'static str,
        #[source]
        source: GeomError,
    },
    #[error("{stage}: {source}")]
    Grid {
        stage: &'static str,
        #[source]
        source: GridError,
    },
    #[error("config: {0}")]
    Config(String),
}

fn geom_err(stage: &'static str) -> impl Fn(GeomError) -> PipelineError {
    move |source| PipelineError::Geom { stage, source }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub resize_longest_side: f64,
    pub dst_side: f64,
    pub grid_n: usize,
    pub grid_b: usize,
    pub conf_threshold: f64,
    pub nms_iou: f64,
    pub mask_min_area: usize,
    pub seed: u64,
    /// Dilation radius used by the oracle segmenter.
    pub dilation: usize,
    pub noise: OracleNoise,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            resize_longest_side: 1000.0,
            dst_side: blocks::DEFAULT_DST_SIDE,
            grid_n: 15,
            grid_b: 1,
            conf_threshold: postproc::DEFAULT_CONF_THRESHOLD,
            nms_iou: postproc::DEFAULT_NMS_IOU,
            mask_min_area: blocks::DEFAULT_MIN_AREA,
            seed: 0,
            dilation: 3,
            noise: OracleNoise::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let positive = self.resize_longest_side > 0.0
            && self.dst_side > 0.0
            && self.grid_n > 0
            && self.grid_b > 0
            && self.mask_min_area > 0;
        if !positive {
            return Err(PipelineError::Config("sizes and counts must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.conf_threshold) || !(0.0..=1.0).contains(&self.nms_iou) {
            return Err(PipelineError::Config("thresholds must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn grid_spec(&self) -> Result<GridSpec, PipelineError> {
        GridSpec::new(self.grid_n, self.grid_b, self.dst_side)
            .map_err(|source| PipelineError::Grid { stage: "grid", source })
    }
}

/// Detections for one block, in the block frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BlockOutput {
    pub detections: Vec<Detection>,
    pub capacity_drops: usize,
}

pub trait BlockDetector {
    fn detect(
        &mut self,
        block: &Block,
        plan: &CropPlan,
        spec: &GridSpec,
    ) -> Result<BlockOutput, PipelineError>;
}

/// Ground-truth oracle; each block gets its own noise stream.
pub struct OracleDetector<'a> {
    pub scene: &'a SceneTruth,
    pub noise: OracleNoise,
    pub seed: u64,
}

impl BlockDetector for OracleDetector<'_> {
    fn detect(
        &mut self,
        block: &Block,
        plan: &CropPlan,
        spec: &GridSpec,
    ) -> Result<BlockOutput, PipelineError> {
        let seed = synth::derive_seed(self.seed, block.id as u64);
        let out = synth::oracle_detect(plan, self.scene, spec, &self.noise, seed)
            .map_err(geom_err("detect"))?;
        Ok(BlockOutput {
            detections: out.detections,
            capacity_drops: out.dropped.len(),
        })
    }
}

/// Detections supplied from outside, indexed by block id.
pub struct PrecomputedDetector {
    pub per_block: Vec<Vec<Detection>>,
}

impl BlockDetector for PrecomputedDetector {
    fn detect(
        &mut self,
        block: &Block,
        _plan: &CropPlan,
        _spec: &GridSpec,
    ) -> Result<BlockOutput, PipelineError> {
        Ok(BlockOutput {
            detections: self.per_block.get(block.id).cloned().unwrap_or_default(),
            capacity_drops: 0,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockTrace {
    pub id: usize,
    pub region_aabb: Aabb,
    pub src: Aabb,
    pub anisotropic: bool,
    pub detections: usize,
    pub above_threshold: usize,
    pub capacity_drops: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CascadeTrace {
    pub scale: f64,
    pub blocks: usize,
    pub per_block: Vec<BlockTrace>,
    pub capacity_drops: usize,
    pub before_nms: usize,
    pub final_detections: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CascadeOutput {
    /// Image-frame detections in rank order.
    pub detections: Vec<Detection>,
    pub trace: CascadeTrace,
}

/// Runs the cascade on precomputed blocks of an image of size `image`.
pub fn cascade_blocks(
    blocks: &[Block],
    image: (f64, f64),
    detector: &mut dyn BlockDetector,
    cfg: &PipelineConfig,
) -> Result<CascadeOutput, PipelineError> {
    cfg.validate()?;
    let spec = cfg.grid_spec()?;
    let mut trace = CascadeTrace {
        scale: 1.0,
        blocks: blocks.len(),
        ..CascadeTrace::default()
    };
    let mut pooled = Vec::new();
    for block in blocks {
        let plan = blocks::crop_plan(block, image, cfg.dst_side);
        let out = detector.detect(block, &plan, &spec)?;
        let kept = postproc::filter_confidence(&out.detections, cfg.conf_threshold);
        trace.per_block.push(BlockTrace {
            id: block.id,
            region_aabb: block.region_aabb,
            src: plan.src,
            anisotropic: plan.anisotropic,
            detections: out.detections.len(),
            above_threshold: kept.len(),
            capacity_drops: out.capacity_drops,
        });
        trace.capacity_drops += out.capacity_drops;
        for d in &kept {
            let mut m = blocks::map_detection_to_image(d, &plan).map_err(geom_err("map"))?;
            m.source_block = Some(block.id);
            pooled.push(m);
        }
    }
    trace.before_nms = pooled.len();
    let detections = postproc::nms(&pooled, cfg.nms_iou);
    trace.final_detections = detections.len();
    Ok(CascadeOutput { detections, trace })
}

/// Mask-driven cascade: connected components become blocks.
pub fn cascade_mask(
    mask: &BinaryMask,
    detector: &mut dyn BlockDetector,
    cfg: &PipelineConfig,
) -> Result<CascadeOutput, PipelineError> {
    let blocks = blocks::connected_components(mask, cfg.mask_min_area);
    cascade_blocks(
        &blocks,
        (mask.width() as f64, mask.height() as f64),
        detector,
        cfg,
    )
}

fn rescale(d: &Detection, s: f64) -> Result<Detection, GeomError> {
    let r = &d.rect;
    Ok(Detection {
        rect: OrientedRect::new(r.cx() * s, r.cy() * s, r.w() * s, r.h() * s, r.theta())?,
        ..*d
    })
}

/// Scene resized so its longest side is `cfg.resize_longest_side`, plus the
/// scale factor applied.
pub fn resized_scene(scene: &SceneTruth, cfg: &PipelineConfig) -> Result<(SceneTruth, f64), PipelineError> {
    let longest = scene.width.max(scene.height);
    if longest.is_nan() || longest <= 0.0 {
        return Err(PipelineError::Config("scene has no extent".into()));
    }
    let s = cfg.resize_longest_side / longest;
    Ok((scene.scaled(s).map_err(geom_err("resize"))?, s))
}

/// Oracle cascade on a synthetic scene. Detections come back in the
/// original scene frame.
pub fn run_cascade(scene: &SceneTruth, cfg: &PipelineConfig) -> Result<CascadeOutput, PipelineError> {
    let (resized, s) = resized_scene(scene, cfg)?;
    let mask = synth::oracle_segment(&resized, cfg.dilation);
    let mut det = OracleDetector {
        scene: &resized,
        noise: cfg.noise,
        seed: cfg.seed,
    };
    let mut out = cascade_mask(&mask, &mut det, cfg)?;
    out.detections = out
        .detections
        .iter()
        .map(|d| rescale(d, 1.0 / s))
        .collect::<Result<_, _>>()
        .map_err(geom_err("resize"))?;
    out.trace.scale = s;
    Ok(out)
}
