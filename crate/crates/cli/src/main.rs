mod error;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;

use wordcascade::blocks::{self, BinaryMask, Block};
use wordcascade::capacity::{self, CapacityConfig};
use wordcascade::evalbench::{self, GtEntry};
use wordcascade::gridcodec::{self, GridSpec, GridTensor};
use wordcascade::jsonfmt;
use wordcascade::loss::{self, FitConfig, LossWeights};
use wordcascade::pipeline::{self, OracleDetector, PipelineConfig, PrecomputedDetector};
use wordcascade::postproc::{self, Detection, DetectionRecord};
use wordcascade::synth::{self, SceneTruth, SynthConfig};

use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "wordcascade", version, about = "Cascaded word-level text spotting core")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic scene.
    Synth(SynthArgs),
    /// Rasterize a scene into a dilated text mask (PGM).
    Segment(SegmentArgs),
    /// Connected-component blocks of a mask.
    Blocks(BlocksArgs),
    /// Group word boxes into blocks by proximity.
    Mine(MineArgs),
    /// Oracle detections for each block of a scene, in block frames.
    Detect(DetectArgs),
    /// Encode block-frame words into a grid tensor.
    Encode(EncodeArgs),
    /// Decode a grid tensor into detections.
    Decode(DecodeArgs),
    /// Fit grid boxes to block-frame words by gradient descent.
    Fit(FitArgs),
    /// Confidence filter plus non-maximum suppression.
    Nms(NmsArgs),
    /// Score detections against ICDAR-style ground truth.
    Eval(EvalArgs),
    /// Full cascade on a scene, or on a mask with precomputed block detections.
    Pipeline(PipelineArgs),
    /// Sweep grid resolution and boxes per cell over synthetic scenes.
    CapacityStudy(CapacityArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Use the sparse preset instead of the default density.
    #[arg(long)]
    sparse: bool,
    /// Generator settings as JSON; overrides the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Also write the words as ICDAR ground truth.
    #[arg(long)]
    gt: Option<PathBuf>,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SegmentArgs {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long, default_value_t = 3)]
    dilation: usize,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct BlocksArgs {
    #[arg(long)]
    mask: PathBuf,
    #[arg(long, default_value_t = blocks::DEFAULT_MIN_AREA)]
    min_area: usize,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct MineArgs {
    /// Scene JSON; image size comes from the scene.
    #[arg(long, conflicts_with = "gt", required_unless_present = "gt")]
    scene: Option<PathBuf>,
    /// ICDAR ground-truth file; needs --width and --height.
    #[arg(long, requires_all = ["width", "height"])]
    gt: Option<PathBuf>,
    #[arg(long)]
    width: Option<f64>,
    #[arg(long)]
    height: Option<f64>,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DetectArgs {
    #[arg(long)]
    scene: PathBuf,
    /// Blocks JSON as written by `blocks`.
    #[arg(long)]
    blocks: PathBuf,
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GridArgs {
    #[arg(long, default_value_t = 15)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    b: usize,
    /// Input side in pixels; defaults to 16 n.
    #[arg(long)]
    side: Option<f64>,
}

impl GridArgs {
    fn spec(&self) -> Result<GridSpec, CliError> {
        let side = self.side.unwrap_or(16.0 * self.n as f64);
        GridSpec::new(self.n, self.b, side).map_err(|e| CliError::Usage(e.to_string()))
    }
}

#[derive(Debug, Args)]
struct EncodeArgs {
    /// Scene JSON whose words are already in the block frame.
    #[arg(long)]
    scene: PathBuf,
    #[command(flatten)]
    grid: GridArgs,
    /// Write indices of words lost to cell collisions here.
    #[arg(long)]
    collisions: Option<PathBuf>,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DecodeArgs {
    #[arg(long)]
    grid: PathBuf,
    #[arg(long, default_value_t = postproc::DEFAULT_CONF_THRESHOLD)]
    threshold: f64,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FitArgs {
    /// Scene JSON whose words are already in the block frame.
    #[arg(long)]
    scene: PathBuf,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long)]
    step: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Write the loss after every step here.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Write the fitted tensor here.
    #[arg(long)]
    tensor: Option<PathBuf>,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct NmsArgs {
    #[arg(long)]
    detections: PathBuf,
    #[arg(long, default_value_t = postproc::DEFAULT_CONF_THRESHOLD)]
    threshold: f64,
    #[arg(long, default_value_t = postproc::DEFAULT_NMS_IOU)]
    iou: f64,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Detection file; pairs with the --gt at the same position.
    #[arg(long)]
    det: Vec<PathBuf>,
    #[arg(long)]
    gt: Vec<PathBuf>,
    /// Text file of `<detections> <ground truth>` lines.
    #[arg(long)]
    list: Option<PathBuf>,
    /// Per-image CSV table.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

/// Cascade settings: a JSON file, then individual overrides.
#[derive(Debug, Args)]
struct ConfigArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    resize: Option<f64>,
    #[arg(long)]
    dst_side: Option<f64>,
    #[arg(long)]
    grid_n: Option<usize>,
    #[arg(long)]
    grid_b: Option<usize>,
    #[arg(long)]
    conf_threshold: Option<f64>,
    #[arg(long)]
    nms_iou: Option<f64>,
    #[arg(long)]
    min_area: Option<usize>,
    #[arg(long)]
    dilation: Option<usize>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<PipelineConfig, CliError> {
        let mut c: PipelineConfig = match &self.config {
            Some(p) => read_json(p)?,
            None => PipelineConfig::default(),
        };
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.resize {
            c.resize_longest_side = v;
        }
        if let Some(v) = self.dst_side {
            c.dst_side = v;
        }
        if let Some(v) = self.grid_n {
            c.grid_n = v;
        }
        if let Some(v) = self.grid_b {
            c.grid_b = v;
        }
        if let Some(v) = self.conf_threshold {
            c.conf_threshold = v;
        }
        if let Some(v) = self.nms_iou {
            c.nms_iou = v;
        }
        if let Some(v) = self.min_area {
            c.mask_min_area = v;
        }
        if let Some(v) = self.dilation {
            c.dilation = v;
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Args)]
struct PipelineArgs {
    #[arg(long, conflicts_with_all = ["mask", "block_detections"], required_unless_present = "mask")]
    scene: Option<PathBuf>,
    /// Text mask (PGM); blocks are its connected components.
    #[arg(long, requires = "block_detections")]
    mask: Option<PathBuf>,
    /// Per-block detections as written by `detect`.
    #[arg(long, requires = "mask")]
    block_detections: Option<PathBuf>,
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Write the stage-by-stage trace here.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CapacityArgs {
    #[arg(long, default_value_t = 1000)]
    scenes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_delimiter = ',', default_values_t = capacity::DEFAULT_NS)]
    ns: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = capacity::DEFAULT_BS)]
    bs: Vec<usize>,
    /// Generator settings as JSON.
    #[arg(long)]
    synth_config: Option<PathBuf>,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

/// One block's output from `detect`.
#[derive(Debug, Serialize, serde::Deserialize)]
struct BlockDetections {
    id: usize,
    capacity_drops: usize,
    detections: Vec<DetectionRecord>,
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::input(path, e))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    serde_json::from_str(&read_text(path)?).map_err(|e| CliError::input(path, e))
}

fn write_bytes(out: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    let res = match out {
        Some(p) => fs::write(p, bytes),
        None => std::io::stdout().lock().write_all(bytes),
    };
    res.map_err(|e| CliError::Internal(e.to_string()))
}

fn emit<T: Serialize + ?Sized>(out: Option<&Path>, v: &T) -> Result<(), CliError> {
    write_bytes(out, jsonfmt::to_string(v)?.as_bytes())
}

fn records(ds: &[Detection]) -> Vec<DetectionRecord> {
    ds.iter().map(DetectionRecord::from).collect()
}

fn to_detections(rs: Vec<DetectionRecord>, path: &Path) -> Result<Vec<Detection>, CliError> {
    rs.into_iter()
        .enumerate()
        .map(|(i, r)| Detection::try_from(r).map_err(|e| CliError::input(path, format!("detection {i}: {e}"))))
        .collect()
}

fn synth_cmd(a: &SynthArgs) -> Result<(), CliError> {
    let base = match &a.config {
        Some(p) => read_json(p)?,
        None if a.sparse => SynthConfig::sparse(),
        None => SynthConfig::default(),
    };
    let scene = synth::gen_scene(&base.with_seed(a.seed))?;
    if let Some(gt) = &a.gt {
        let entries: Vec<GtEntry> = scene
            .words
            .iter()
            .map(|w| GtEntry::from_rect(w.rect, w.dont_care))
            .collect();
        write_bytes(Some(gt), evalbench::format_icdar_gt(&entries).as_bytes())?;
    }
    emit(a.out.as_deref(), &scene)
}

fn segment_cmd(a: &SegmentArgs) -> Result<(), CliError> {
    let scene: SceneTruth = read_json(&a.scene)?;
    let mask = synth::oracle_segment(&scene, a.dilation);
    mask.write_pgm_file(&a.out)
        .map_err(|e| CliError::Internal(e.to_string()))
}

fn blocks_cmd(a: &BlocksArgs) -> Result<(), CliError> {
    let mask = BinaryMask::read_pgm(&a.mask)?;
    emit(a.out.as_deref(), &blocks::connected_components(&mask, a.min_area))
}

fn mine_cmd(a: &MineArgs) -> Result<(), CliError> {
    let (rects, image) = match (&a.scene, &a.gt) {
        (Some(p), _) => {
            let s: SceneTruth = read_json(p)?;
            (s.rects(), s.image())
        }
        (None, Some(p)) => {
            let gts = evalbench::read_gt(p)?;
            let image = (a.width.unwrap_or_default(), a.height.unwrap_or_default());
            (gts.iter().map(|g| g.rect).collect(), image)
        }
        (None, None) => return Err(CliError::Usage("need --scene or --gt".into())),
    };
    if !(image.0 > 0.0 && image.1 > 0.0) {
        return Err(CliError::Usage("image size must be positive".into()));
    }
    emit(a.out.as_deref(), &blocks::mine_blocks(&rects, image))
}

fn detect_cmd(a: &DetectArgs) -> Result<(), CliError> {
    let cfg = a.cfg.resolve()?;
    let scene: SceneTruth = read_json(&a.scene)?;
    let blocks: Vec<Block> = read_json(&a.blocks)?;
    let spec = cfg.grid_spec()?;
    let mut det = OracleDetector {
        scene: &scene,
        noise: cfg.noise,
        seed: cfg.seed,
    };
    let mut out = Vec::with_capacity(blocks.len());
    for b in &blocks {
        let plan = blocks::crop_plan(b, scene.image(), cfg.dst_side);
        let r = pipeline::BlockDetector::detect(&mut det, b, &plan, &spec)?;
        out.push(BlockDetections {
            id: b.id,
            capacity_drops: r.capacity_drops,
            detections: records(&r.detections),
        });
    }
    emit(a.out.as_deref(), &out)
}

fn encode_cmd(a: &EncodeArgs) -> Result<(), CliError> {
    let scene: SceneTruth = read_json(&a.scene)?;
    let spec = a.grid.spec()?;
    let (target, collisions) = gridcodec::encode_scene(&scene.rects(), &spec)?;
    if !collisions.is_empty() {
        log::warn!("{} word(s) lost to cell collisions: {collisions:?}", collisions.len());
    }
    if let Some(p) = &a.collisions {
        emit(Some(p), &collisions)?;
    }
    emit(a.out.as_deref(), &target.to_tensor())
}

fn decode_cmd(a: &DecodeArgs) -> Result<(), CliError> {
    let g: GridTensor = read_json(&a.grid)?;
    let ds: Vec<Detection> = gridcodec::decode_grid(&g)?
        .into_iter()
        .map(|(r, c)| Detection::new(r, c))
        .collect();
    emit(a.out.as_deref(), &records(&postproc::filter_confidence(&ds, a.threshold)))
}

fn fit_cmd(a: &FitArgs) -> Result<(), CliError> {
    let scene: SceneTruth = read_json(&a.scene)?;
    let spec = a.grid.spec()?;
    let mut opt = FitConfig::default();
    if let Some(s) = a.step {
        opt.step = s;
    }
    if let Some(n) = a.max_iters {
        opt.max_iters = n;
    }
    let out = loss::fit_scene(&scene.rects(), &spec, &LossWeights::default(), &opt)?;
    if let Some(p) = &a.trace {
        emit(Some(p), &out.trace)?;
    }
    if let Some(p) = &a.tensor {
        emit(Some(p), &out.tensor)?;
    }
    emit(a.out.as_deref(), &out.report)
}

fn nms_cmd(a: &NmsArgs) -> Result<(), CliError> {
    let rs: Vec<DetectionRecord> = read_json(&a.detections)?;
    let ds = to_detections(rs, &a.detections)?;
    let kept = postproc::nms(&postproc::filter_confidence(&ds, a.threshold), a.iou);
    emit(a.out.as_deref(), &records(&kept))
}

fn eval_cmd(a: &EvalArgs) -> Result<(), CliError> {
    if a.det.len() != a.gt.len() {
        return Err(CliError::Usage("--det and --gt must be given the same number of times".into()));
    }
    let mut pairs: Vec<(PathBuf, PathBuf)> = a.det.iter().cloned().zip(a.gt.iter().cloned()).collect();
    if let Some(list) = &a.list {
        let base = list.parent().unwrap_or(Path::new(""));
        for (i, line) in read_text(list)?.lines().enumerate() {
            let fields: Vec<&str> = line.split_whitespace().collect();
            match fields.as_slice() {
                [] => continue,
                [d, g] => pairs.push((base.join(d), base.join(g))),
                _ => return Err(CliError::input(list, format!("line {}: expected two paths", i + 1))),
            }
        }
    }
    if pairs.is_empty() {
        return Err(CliError::Usage("no detection/ground-truth pairs given".into()));
    }
    let report = evalbench::evaluate_dataset(&pairs)?;
    if let Some(p) = &a.csv {
        let f = fs::File::create(p).map_err(|e| CliError::Internal(e.to_string()))?;
        evalbench::write_csv(&report, f)?;
    }
    emit(a.out.as_deref(), &report)
}

fn pipeline_cmd(a: &PipelineArgs) -> Result<(), CliError> {
    let cfg = a.cfg.resolve()?;
    let out = match (&a.scene, &a.mask, &a.block_detections) {
        (Some(p), _, _) => {
            let scene: SceneTruth = read_json(p)?;
            pipeline::run_cascade(&scene, &cfg)?
        }
        (None, Some(m), Some(d)) => {
            let mask = BinaryMask::read_pgm(m)?;
            let per: Vec<BlockDetections> = read_json(d)?;
            let mut per_block = vec![Vec::new(); per.iter().map(|b| b.id + 1).max().unwrap_or(0)];
            for b in per {
                per_block[b.id] = to_detections(b.detections, d)?;
            }
            pipeline::cascade_mask(&mask, &mut PrecomputedDetector { per_block }, &cfg)?
        }
        _ => return Err(CliError::Usage("need --scene, or --mask with --block-detections".into())),
    };
    if let Some(p) = &a.trace {
        emit(Some(p), &out.trace)?;
    }
    emit(a.out.as_deref(), &records(&out.detections))
}

fn capacity_cmd(a: &CapacityArgs) -> Result<(), CliError> {
    let synth = match &a.synth_config {
        Some(p) => read_json(p)?,
        None => SynthConfig::default(),
    };
    let cfg = CapacityConfig {
        scenes: a.scenes,
        seed: a.seed,
        ns: a.ns.clone(),
        bs: a.bs.clone(),
        synth,
        pipeline: PipelineConfig::default(),
    };
    emit(a.out.as_deref(), &capacity::run_capacity_study(&cfg)?)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match &cli.cmd {
        Command::Synth(a) => synth_cmd(a),
        Command::Segment(a) => segment_cmd(a),
        Command::Blocks(a) => blocks_cmd(a),
        Command::Mine(a) => mine_cmd(a),
        Command::Detect(a) => detect_cmd(a),
        Command::Encode(a) => encode_cmd(a),
        Command::Decode(a) => decode_cmd(a),
        Command::Fit(a) => fit_cmd(a),
        Command::Nms(a) => nms_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Pipeline(a) => pipeline_cmd(a),
        Command::CapacityStudy(a) => capacity_cmd(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("wordcascade: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
