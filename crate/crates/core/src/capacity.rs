//! Grid capacity sweep: how many words a cascade loses to cell collisions as
//! the grid resolution `n` and the boxes per cell `b` vary.

use serde::{Deserialize, Serialize};

use crate::blocks;
use crate::evalbench::{self, GtEntry};
use crate::pipeline::{self, OracleDetector, PipelineConfig, PipelineError};
use crate::synth::{self, SynthConfig, SynthError};

pub const DEFAULT_NS: [usize; 7] = [7, 9, 11, 13, 15, 17, 19];
pub const DEFAULT_BS: [usize; 2] = [1, 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityConfig {
    pub scenes: usize,
    pub seed: u64,
    pub ns: Vec<usize>,
    pub bs: Vec<usize>,
    pub synth: SynthConfig,
    pub pipeline: PipelineConfig,
}

impl Default for CapacityConfig {
    fn default() -> Self {
        Self {
            scenes: 1000,
            seed: 0,
            ns: DEFAULT_NS.to_vec(),
            bs: DEFAULT_BS.to_vec(),
            synth: SynthConfig::default(),
            pipeline: PipelineConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityRow {
    pub n: usize,
    pub b: usize,
    pub words: usize,
    pub capacity_drops: usize,
    pub true_positives: usize,
    pub detections_counted: usize,
    pub gt_counted: usize,
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityTable {
    pub scenes: usize,
    pub seed: u64,
    pub rows: Vec<CapacityRow>,
}

impl CapacityTable {
    pub fn row(&self, n: usize, b: usize) -> Option<&CapacityRow> {
        self.rows.iter().find(|r| r.n == n && r.b == b)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CapacityError {
    #[error("scene {index}: {source}")]
    Synth {
        index: usize,
        #[source]
        source: SynthError,
    },
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

/// Seed of the `i`-th scene of a study.
pub fn scene_seed(seed: u64, i: usize) -> u64 {
    synth::derive_seed(seed, i as u64)
}

/// Runs the oracle cascade on every scene for every `(n, b)` pair; the input
/// side follows the network rule `16 n`. Rows are ordered by `b`, then `n`.
pub fn run_capacity_study(cfg: &CapacityConfig) -> Result<CapacityTable, CapacityError> {
    struct Acc {
        words: usize,
        drops: usize,
        tp: usize,
        det: usize,
        gt: usize,
    }
    let combos: Vec<(usize, usize)> = cfg
        .bs
        .iter()
        .flat_map(|&b| cfg.ns.iter().map(move |&n| (n, b)))
        .collect();
    let mut acc: Vec<Acc> = combos
        .iter()
        .map(|_| Acc {
            words: 0,
            drops: 0,
            tp: 0,
            det: 0,
            gt: 0,
        })
        .collect();

    for i in 0..cfg.scenes {
        let scene = synth::gen_scene(&cfg.synth.with_seed(scene_seed(cfg.seed, i)))
            .map_err(|source| CapacityError::Synth { index: i, source })?;
        let (resized, _) = pipeline::resized_scene(&scene, &cfg.pipeline)?;
        let mask = synth::oracle_segment(&resized, cfg.pipeline.dilation);
        let blocks = blocks::connected_components(&mask, cfg.pipeline.mask_min_area);
        let image = (mask.width() as f64, mask.height() as f64);
        let gts: Vec<GtEntry> = resized
            .words
            .iter()
            .map(|w| GtEntry::from_rect(w.rect, w.dont_care))
            .collect();
        for (slot, &(n, b)) in combos.iter().enumerate() {
            let pc = PipelineConfig {
                grid_n: n,
                grid_b: b,
                dst_side: 16.0 * n as f64,
                ..cfg.pipeline
            };
            let mut det = OracleDetector {
                scene: &resized,
                noise: pc.noise,
                seed: scene_seed(pc.seed, i),
            };
            let out = pipeline::cascade_blocks(&blocks, image, &mut det, &pc)?;
            let r = evalbench::evaluate_image(&out.detections, &gts);
            let a = &mut acc[slot];
            a.words += resized.words.len();
            a.drops += out.trace.capacity_drops;
            a.tp += r.true_positives;
            a.det += r.detections_counted;
            a.gt += r.gt_counted;
        }
    }

    let rows = combos
        .iter()
        .zip(acc)
        .map(|(&(n, b), a)| {
            let r = evalbench::EvalReport::from_counts(a.tp, a.det, a.gt);
            CapacityRow {
                n,
                b,
                words: a.words,
                capacity_drops: a.drops,
                true_positives: a.tp,
                detections_counted: a.det,
                gt_counted: a.gt,
                precision: r.precision,
                recall: r.recall,
                f_score: r.f_score,
            }
        })
        .collect();
    Ok(CapacityTable {
        scenes: cfg.scenes,
        seed: cfg.seed,
        rows,
    })
}
