use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::Vector3;
use serde_json::json;

use openbox3d::annotate::{annotate_dataset, mask_path, AnnotateConfig, RecordStatus, DEPTH_EXTENSION};
use openbox3d::eval::{evaluate, EvalConfig, MatchMode, NmsConfig};
use openbox3d::filters::DatasetClass;
use openbox3d::geometry::{iou3d, monte_carlo_iou3d, r_y};
use openbox3d::io::{
    atomic_write, read_dataset, read_predictions, read_size_specs, sample_eval_split, synth_scene, to_canonical_json,
    write_dataset, write_mask, DatasetFile, SamplerTargets, SynthSpec,
};
use openbox3d::lift::LiftConfig;
use openbox3d::{Box3D, Error};

#[derive(Parser)]
#[command(name = "openbox3d", version, about = "3D box lifting, filtering and evaluation tools")]
struct Cli {
    /// Worker threads (default: all cores). Never changes any output.
    #[arg(long, global = true, env = "OPENBOX3D_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate predictions against ground truth.
    Eval(EvalArgs),
    /// Lift every annotation of a dataset to a 3D box candidate.
    Lift(LiftArgs),
    /// Generate synthetic scenes with depth maps, masks and exact boxes.
    Synth(SynthArgs),
    /// Draw a balanced evaluation split.
    Sample(SampleArgs),
    /// Exact and Monte-Carlo 3D IoU of two boxes.
    Iou(IouArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Iou,
    Dist,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    pred: PathBuf,
    #[arg(long, value_enum, default_value = "dist")]
    mode: ModeArg,
    /// Threshold grid as start:stop:step, e.g. 0.50:1.00:0.05.
    #[arg(long)]
    thresholds: Option<String>,
    #[arg(long, default_value_t = openbox3d::eval::NMS_IOU)]
    nms_iou: f64,
    #[arg(long, default_value_t = openbox3d::eval::SCORE_FLOOR)]
    score_thresh: f64,
    #[arg(long, default_value_t = openbox3d::eval::MAX_DETECTIONS)]
    max_dets: usize,
    /// Text file with one symmetric category per line.
    #[arg(long)]
    symmetric_categories: Option<PathBuf>,
    /// Structured result file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Plain-text table file.
    #[arg(long)]
    table: Option<PathBuf>,
}

#[derive(Args)]
struct LiftArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Directory of `<image id>.depth` files for images without a depth path.
    #[arg(long)]
    depth_dir: Option<PathBuf>,
    /// Directory of `<annotation id>.mask` files.
    #[arg(long)]
    masks_dir: PathBuf,
    /// TOML lift configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV of per-category size ranges.
    #[arg(long)]
    size_specs: Option<PathBuf>,
    /// Wider size tolerances for fine-grained vocabularies.
    #[arg(long)]
    fine_grained: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out_dir: PathBuf,
    /// TOML scene spec; the flags below override it.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    boxes: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Depth noise standard deviation (m).
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long, default_value_t = 1)]
    scenes: u64,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// TOML sampler targets.
    #[arg(long)]
    targets: Option<PathBuf>,
    /// Image count after the balanced fill.
    #[arg(long)]
    count: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct IouArgs {
    /// `cx,cy,cz,w,h,l,yaw` or `cx,cy,cz,w,h,l,qw,qx,qy,qz`.
    #[arg(long, allow_hyphen_values = true)]
    a: String,
    #[arg(long, allow_hyphen_values = true)]
    b: String,
    #[arg(long, default_value_t = 1_000_000)]
    samples: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

enum Failure {
    User(String),
    Internal(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::NonFinite(_) | Error::DegeneratePoints(_) | Error::AllNoise | Error::NoObjectPoints => {
                Failure::Internal(e.to_string())
            }
            _ => Failure::User(e.to_string()),
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn user(msg: impl Into<String>) -> Failure {
    Failure::User(msg.into())
}

fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| user(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| user(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    atomic_write(path, |w| w.write_all(text.as_bytes())).map_err(Failure::from)
}

fn parse_grid(s: &str) -> CliResult<Vec<f64>> {
    let parts: Vec<f64> = s
        .split(':')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| user(format!("thresholds {s:?}: {e}")))?;
    let [start, stop, step] = parts[..] else {
        return Err(user(format!("thresholds {s:?}: expected start:stop:step")));
    };
    if !(step > 0.0 && start > 0.0 && stop >= start) {
        return Err(user(format!("thresholds {s:?}: need 0 < start <= stop and step > 0")));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..n).map(|k| ((start + k as f64 * step) * 1e10).round() / 1e10).collect())
}

fn parse_box(s: &str) -> CliResult<Box3D> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| user(format!("box {s:?}: {e}")))?;
    let c = Vector3::new(v.first().copied().unwrap_or(0.0), v.get(1).copied().unwrap_or(0.0), v.get(2).copied().unwrap_or(0.0));
    let b = match v.len() {
        7 => Box3D::new(c, Vector3::new(v[3], v[4], v[5]), r_y(v[6])),
        10 => Box3D::from_wxyz(c, Vector3::new(v[3], v[4], v[5]), [v[6], v[7], v[8], v[9]], 1e-6),
        n => return Err(user(format!("box {s:?}: expected 7 or 10 numbers, got {n}"))),
    };
    Ok(b?)
}

fn cmd_eval(a: EvalArgs) -> CliResult<()> {
    let mode = match a.mode {
        ModeArg::Iou => MatchMode::Iou,
        ModeArg::Dist => MatchMode::Dist,
    };
    let thresholds = a.thresholds.as_deref().map(parse_grid).transpose()?;
    let symmetric_categories: BTreeSet<String> = match &a.symmetric_categories {
        Some(p) => std::fs::read_to_string(p)
            .map_err(|e| user(format!("{}: {e}", p.display())))?
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(String::from)
            .collect(),
        None => BTreeSet::new(),
    };
    let cfg = EvalConfig {
        mode,
        thresholds,
        nms: NmsConfig {
            iou_threshold: a.nms_iou,
            score_floor: a.score_thresh,
            max_per_image: a.max_dets,
        },
        symmetric_categories,
    };
    let gt = read_dataset(&a.gt)?;
    let pred = read_predictions(&a.pred)?;
    let result = evaluate(&gt, &pred, &cfg)?;
    let header = format!("# config {}\n", serde_json::to_string(&cfg).map_err(|e| Failure::Internal(e.to_string()))?);
    let table = format!("{header}{}", result.table());
    if let Some(p) = &a.out {
        write_text(p, &to_canonical_json(&result)?)?;
    }
    if let Some(p) = &a.table {
        write_text(p, &table)?;
    }
    print!("{table}");
    Ok(())
}

fn cmd_lift(a: LiftArgs) -> CliResult<()> {
    let lift: LiftConfig = match &a.config {
        Some(p) => read_toml(p)?,
        None => LiftConfig::default(),
    };
    lift.optimizer.validate()?;
    let cfg = AnnotateConfig {
        lift,
        class: if a.fine_grained {
            DatasetClass::FineGrained
        } else {
            DatasetClass::Standard
        },
        seed: a.seed,
    };
    let specs = match &a.size_specs {
        Some(p) => read_size_specs(p)?,
        None => BTreeMap::new(),
    };
    let dataset = read_dataset(&a.dataset)?;
    let dir = a.dataset.parent().unwrap_or(Path::new("."));
    let records = annotate_dataset(&dataset, dir, a.depth_dir.as_deref(), &a.masks_dir, &specs, &cfg)?;
    let mut counts = [0usize; 3];
    for r in &records {
        match r.status {
            RecordStatus::Optimized if r.accepted => counts[0] += 1,
            RecordStatus::Optimized => counts[1] += 1,
            RecordStatus::Failed => {
                counts[2] += 1;
                eprintln!(
                    "annotation {}: {}",
                    r.annotation_id,
                    r.error.as_deref().unwrap_or("failed")
                );
            }
        }
    }
    let out = json!({ "config": cfg, "records": records });
    write_text(&a.out, &to_canonical_json(&out)?)?;
    println!(
        "lifted {} objects: {} accepted, {} rejected by filters, {} failed",
        records.len(),
        counts[0],
        counts[1],
        counts[2]
    );
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> CliResult<()> {
    let mut spec: SynthSpec = match &a.spec {
        Some(p) => read_toml(p)?,
        None => SynthSpec::default(),
    };
    if let Some(n) = a.boxes {
        spec.box_count = n;
    }
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    if let Some(n) = a.noise {
        spec.noise_sigma = n;
    }
    spec.validate()?;
    if a.scenes == 0 {
        return Err(user("--scenes must be at least 1"));
    }
    let mut scenes = Vec::new();
    for k in 0..a.scenes {
        let s = SynthSpec {
            seed: spec.seed.wrapping_add(k),
            ..spec.clone()
        };
        scenes.push(synth_scene(&s)?);
    }
    let depth_dir = a.out_dir.join("depth");
    let masks_dir = a.out_dir.join("masks");
    for d in [&a.out_dir, &depth_dir, &masks_dir] {
        std::fs::create_dir_all(d).map_err(|e| user(format!("{}: {e}", d.display())))?;
    }
    let mut dataset = DatasetFile {
        config: Some(json!({ "spec": spec, "scenes": a.scenes })),
        ..DatasetFile::default()
    };
    let mut next_ann = 1;
    for (k, scene) in scenes.iter().enumerate() {
        let image_id = k as u64 + 1;
        let (mut image, anns) = scene.to_records(image_id, next_ann);
        let rel = format!("depth/{image_id}.{DEPTH_EXTENSION}");
        scene.depth.write(&a.out_dir.join(&rel))?;
        image.depth = Some(rel);
        for (ann, mask) in anns.iter().zip(&scene.masks) {
            write_mask(mask, &mask_path(&masks_dir, ann.id))?;
        }
        next_ann += anns.len() as u64;
        dataset.images.push(image);
        dataset.annotations.extend(anns);
    }
    let path = a.out_dir.join("dataset.json");
    write_dataset(&path, &dataset)?;
    println!(
        "wrote {} scenes, {} objects to {}",
        dataset.images.len(),
        dataset.annotations.len(),
        path.display()
    );
    Ok(())
}

fn cmd_sample(a: SampleArgs) -> CliResult<()> {
    let mut targets: SamplerTargets = match &a.targets {
        Some(p) => read_toml(p)?,
        None => SamplerTargets::default(),
    };
    if let Some(n) = a.count {
        targets.target_images = n;
    }
    targets.validate()?;
    let dataset = read_dataset(&a.dataset)?;
    let r = sample_eval_split(&dataset, &targets, a.seed)?;
    if let Some(p) = &a.out {
        let out = json!({ "config": { "targets": targets, "seed": a.seed }, "result": r });
        write_text(p, &to_canonical_json(&out)?)?;
    }
    let mut ids = r.images.clone();
    ids.sort_unstable();
    let list: Vec<String> = ids.iter().map(u64::to_string).collect();
    println!(
        "selected {} images (cover {}, fill {}, patch {}): {}",
        ids.len(),
        r.cover_count,
        r.fill_count,
        r.patch_count,
        list.join(" ")
    );
    if !r.rare_categories.is_empty() {
        println!("rare_category: {}", r.rare_categories.join(" "));
    }
    Ok(())
}

fn cmd_iou(a: IouArgs) -> CliResult<()> {
    let (ba, bb) = (parse_box(&a.a)?, parse_box(&a.b)?);
    if a.samples == 0 {
        return Err(user("--samples must be positive"));
    }
    let exact = iou3d(&ba, &bb);
    let mc = monte_carlo_iou3d(&ba, &bb, a.samples, a.seed);
    println!("exact {exact:.6}, mc {:.3} ± {:.3}", mc.iou, mc.std_err);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match cli.command {
        Command::Eval(a) => cmd_eval(a),
        Command::Lift(a) => cmd_lift(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Sample(a) => cmd_sample(a),
        Command::Iou(a) => cmd_iou(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::User(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Internal(m)) => {
            eprintln!("internal error: {m}");
            ExitCode::from(1)
        }
    }
}
