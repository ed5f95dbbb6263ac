//! `relight` — multi-scale exposure correction from the command line:
//! pyramid decomposition, synthetic corpus generation, two-phase training,
//! single-image enhancement, and batch PSNR/SSIM scoring.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relight_core::checkpoint::load_checkpoint;
use relight_core::data::{self, ExposureTag, TrainingSet};
use relight_core::image::Image;
use relight_core::metrics::{psnr, ssim, SsimParams};
use relight_core::pyramid::{gauss_pyramid, laplace_pyramid};
use relight_core::trainer::{
    enhance_image, evaluate, preset, run_two_phase, Ablation, PhaseConfig, RunConfig, PRESET_NAMES,
};

#[derive(Parser)]
#[command(
    name = "relight",
    version,
    about = "Multi-scale exposure correction: decompose, synth, train, enhance, eval"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write the Gaussian and Laplacian pyramid levels of a PNG as PNGs
    Decompose(DecomposeArgs),
    /// Materialize a root/{gt,over,under} corpus from clean frames
    Synth(SynthArgs),
    /// Run the two-phase training schedule from a preset
    Train(TrainArgs),
    /// Enhance one PNG with a trained checkpoint
    Enhance(EnhanceArgs),
    /// Score prediction PNGs against ground truth as a PSNR/SSIM CSV
    Eval(EvalArgs),
}

#[derive(Args)]
struct DecomposeArgs {
    /// Input PNG
    input: PathBuf,
    /// Output directory for the level PNGs
    #[arg(long)]
    out: PathBuf,
    /// Pyramid depth (2..=6)
    #[arg(long, default_value_t = 4)]
    levels: usize,
    /// Overwrite existing outputs
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct SynthArgs {
    /// Directory of clean PNG frames to corrupt
    #[arg(long, conflicts_with = "demo", required_unless_present = "demo")]
    input: Option<PathBuf>,
    /// Generate this many procedural demo frames instead of reading --input
    #[arg(long)]
    demo: Option<usize>,
    /// Demo frame height
    #[arg(long, default_value_t = 144)]
    height: usize,
    /// Demo frame width
    #[arg(long, default_value_t = 160)]
    width: usize,
    /// Output corpus root (gt/, over/, under/ are created inside)
    #[arg(long)]
    out: PathBuf,
    /// Seed for per-frame corruption strengths (and demo content)
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Overwrite an existing corpus
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct TrainArgs {
    /// Preset name
    #[arg(long, value_parser = PRESET_NAMES.to_vec())]
    preset: String,
    /// Corpus root holding gt/, over/, under/
    #[arg(long)]
    data: PathBuf,
    /// Output directory for checkpoints and CSV logs
    #[arg(long)]
    out: PathBuf,
    /// Master seed: init, splits, patch sampling
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Objective ablation (full | l1_only); overrides the preset's choice
    #[arg(long)]
    ablation: Option<String>,
    /// Overwrite a non-empty output directory
    #[arg(long)]
    force: bool,
    /// key=value overrides, e.g. phase2.epochs=5 weights.gamma=0.5 set=ue
    #[arg(value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct EnhanceArgs {
    /// Input PNG to correct
    input: PathBuf,
    /// Checkpoint directory (the phase1/phase2/best directory written by train)
    #[arg(long)]
    checkpoint: PathBuf,
    /// Output PNG
    #[arg(long)]
    out: PathBuf,
    /// Overwrite an existing output file
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct EvalArgs {
    /// Directory of prediction PNGs
    #[arg(long)]
    pred: PathBuf,
    /// Directory of ground-truth PNGs with matching filenames
    #[arg(long)]
    gt: PathBuf,
    /// Write the CSV here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overwrite an existing CSV
    #[arg(long)]
    force: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Decompose(a) => decompose(a),
        Cmd::Synth(a) => synth(a),
        Cmd::Train(a) => train(a),
        Cmd::Enhance(a) => enhance(a),
        Cmd::Eval(a) => eval(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

/// Refuses to clobber `path` unless `--force` was given.
fn ensure_free(path: &Path, force: bool) -> Result<()> {
    if path.exists() && !force {
        bail!("output '{}' exists (use --force to overwrite)", path.display());
    }
    Ok(())
}

fn ensure_dir_free(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() && !force {
        let occupied = std::fs::read_dir(dir)
            .map(|mut it| it.next().is_some())
            .unwrap_or(false);
        if occupied {
            bail!(
                "output directory '{}' is not empty (use --force to overwrite)",
                dir.display()
            );
        }
    }
    Ok(())
}

fn decompose(a: DecomposeArgs) -> Result<()> {
    println!(
        "resolved: cmd=decompose input={} out={} levels={} force={}",
        a.input.display(),
        a.out.display(),
        a.levels,
        a.force
    );
    let img: Image<f32> = Image::load_png(&a.input)
        .with_context(|| format!("reading '{}'", a.input.display()))?;
    let gp = gauss_pyramid(&img, a.levels)?;
    let lp = laplace_pyramid(&img, a.levels)?;

    std::fs::create_dir_all(&a.out)
        .with_context(|| format!("creating '{}'", a.out.display()))?;
    let mut written = Vec::new();
    for (i, level) in gp.levels().iter().enumerate() {
        let path = a.out.join(format!("gauss_l{}.png", i + 1));
        ensure_free(&path, a.force)?;
        level.save_png(&path)?;
        written.push(path);
    }
    for (i, level) in lp.levels().iter().enumerate() {
        let path = a.out.join(format!("laplace_l{}.png", i + 1));
        ensure_free(&path, a.force)?;
        if i + 1 < a.levels {
            // band-pass levels are signed; bias for viewing only
            level.map(|v| v + 0.5).save_png(&path)?;
        } else {
            level.save_png(&path)?;
        }
        written.push(path);
    }
    println!("wrote {} level images to {}", written.len(), a.out.display());
    Ok(())
}

fn synth(a: SynthArgs) -> Result<()> {
    let source = match (&a.input, a.demo) {
        (Some(dir), None) => format!("input={}", dir.display()),
        (None, Some(n)) => format!("demo={n} height={} width={}", a.height, a.width),
        _ => unreachable!("clap enforces input xor demo"),
    };
    println!(
        "resolved: cmd=synth {source} out={} seed={} strength=[0.3,0.9) force={}",
        a.out.display(),
        a.seed,
        a.force
    );
    for sub in ["gt", "over", "under"] {
        ensure_dir_free(&a.out.join(sub), a.force)?;
    }

    if let Some(n) = a.demo {
        let ds = data::generate_corpus(&a.out, n, a.height, a.width, a.seed)?;
        println!("generated {} ({})", a.out.display(), ds.summary());
        return Ok(());
    }

    let input = a.input.as_ref().unwrap();
    let mut stems: Vec<(String, PathBuf)> = std::fs::read_dir(input)
        .with_context(|| format!("reading '{}'", input.display()))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")))
        .filter_map(|p| {
            p.file_stem()
                .map(|s| (s.to_string_lossy().into_owned(), p.clone()))
        })
        .collect();
    stems.sort();
    if stems.is_empty() {
        bail!("no PNG frames found in '{}'", input.display());
    }

    for sub in ["gt", "over", "under"] {
        std::fs::create_dir_all(a.out.join(sub))
            .with_context(|| format!("creating '{}'", a.out.join(sub).display()))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    for (stem, path) in &stems {
        let clean: Image<f32> =
            Image::load_png(path).with_context(|| format!("reading '{}'", path.display()))?;
        let strength = rng.gen_range(0.3..0.9);
        clean.save_png(a.out.join("gt").join(format!("{stem}.png")))?;
        for tag in [ExposureTag::Over, ExposureTag::Under] {
            let corrupted = data::synth_corrupt(&clean, tag, strength, a.seed)?;
            corrupted.save_png(a.out.join(tag.dir_name()).join(format!("{stem}.png")))?;
        }
    }
    let ds = data::load_dataset(&a.out)?;
    println!("corrupted {} frames ({})", stems.len(), ds.summary());
    Ok(())
}

fn fmt_run_config(run: &RunConfig<f32>, preset_name: &str) -> String {
    let mut s = String::new();
    let dse = |d: Option<usize>| d.map_or("none".into(), |v| v.to_string());
    let ablation = match run.ablation {
        Ablation::Full => "full",
        Ablation::L1Only => "l1_only",
    };
    write!(
        s,
        "preset={preset_name} seed={} set={} ablation={ablation} \
         phase1={{epochs={} dse={} batch_size={} patch_size={} lr_g={} lr_d={}}} \
         phase2={{epochs={} dse={} batch_size={} patch_size={} lr_g={} lr_d={}}} \
         weights={{alpha={} beta={} gamma={} delta={}}}",
        run.seed,
        run.training_set.flag(),
        run.phase1.epochs,
        dse(run.phase1.dse),
        run.phase1.batch_size,
        run.phase1.patch_size,
        run.phase1.lr_g,
        run.phase1.lr_d,
        run.phase2.epochs,
        dse(run.phase2.dse),
        run.phase2.batch_size,
        run.phase2.patch_size,
        run.phase2.lr_g,
        run.phase2.lr_d,
        run.weights.alpha,
        run.weights.beta,
        run.weights.gamma,
        run.weights.delta,
    )
    .unwrap();
    s
}

fn apply_override(run: &mut RunConfig<f32>, spec: &str) -> Result<()> {
    let (key, value) = spec
        .split_once('=')
        .with_context(|| format!("override '{spec}' is not key=value"))?;
    fn phase<'a>(run: &'a mut RunConfig<f32>, which: &str) -> &'a mut PhaseConfig {
        match which {
            "phase1" => &mut run.phase1,
            _ => &mut run.phase2,
        }
    }
    let parse_usize = |v: &str| -> Result<usize> {
        v.parse().with_context(|| format!("'{v}' is not a count"))
    };
    let parse_lr = |v: &str| -> Result<f64> {
        v.parse().with_context(|| format!("'{v}' is not a rate"))
    };
    let parse_w = |v: &str| -> Result<f32> {
        v.parse().with_context(|| format!("'{v}' is not a weight"))
    };
    match key {
        "set" => run.training_set = TrainingSet::parse(value)?,
        "weights.alpha" => run.weights.alpha = parse_w(value)?,
        "weights.beta" => run.weights.beta = parse_w(value)?,
        "weights.gamma" => run.weights.gamma = parse_w(value)?,
        "weights.delta" => run.weights.delta = parse_w(value)?,
        _ => match key.split_once('.') {
            Some((p @ ("phase1" | "phase2"), field)) => {
                let cfg = phase(run, p);
                match field {
                    "epochs" => cfg.epochs = parse_usize(value)?,
                    "dse" => {
                        cfg.dse = if value.eq_ignore_ascii_case("none") {
                            None
                        } else {
                            Some(parse_usize(value)?)
                        }
                    }
                    "batch_size" => cfg.batch_size = parse_usize(value)?,
                    "patch_size" => cfg.patch_size = parse_usize(value)?,
                    "lr_g" => cfg.lr_g = parse_lr(value)?,
                    "lr_d" => cfg.lr_d = parse_lr(value)?,
                    _ => bail!(
                        "unknown override key '{key}' (fields: epochs, dse, batch_size, patch_size, lr_g, lr_d)"
                    ),
                }
            }
            _ => bail!(
                "unknown override key '{key}' (expected set, weights.*, phase1.*, phase2.*)"
            ),
        },
    }
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let mut run: RunConfig<f32> = preset(&a.preset)?;
    run.seed = a.seed;
    if let Some(ab) = &a.ablation {
        run.ablation = Ablation::parse(ab)?;
    }
    for spec in &a.overrides {
        apply_override(&mut run, spec)?;
    }
    run.validate()?;
    println!(
        "resolved: cmd=train data={} out={} force={} {}",
        a.data.display(),
        a.out.display(),
        a.force,
        fmt_run_config(&run, &a.preset)
    );
    ensure_dir_free(&a.out, a.force)?;

    let dataset = data::load_dataset(&a.data)?;
    println!("dataset: {}", dataset.summary());
    let artifacts = run_two_phase(&run, &dataset, &a.out)?;
    for (phase, log) in [(1, &artifacts.phase1_log), (2, &artifacts.phase2_log)] {
        if log.skipped_frames > 0 {
            eprintln!(
                "warning: phase {phase} skipped {} frame(s) smaller than the patch size",
                log.skipped_frames
            );
        }
        std::fs::write(a.out.join(format!("phase{phase}.csv")), log.to_csv())?;
    }
    println!(
        "split: {} train / {} test / {} val frames",
        artifacts.train.len(),
        artifacts.test.len(),
        artifacts.val.len()
    );
    if let Some(best) = artifacts.best_val_ssim {
        println!(
            "best validation SSIM {best:.4} ({})",
            artifacts.best_dir.as_deref().unwrap_or(Path::new("?")).display()
        );
    }
    if artifacts.test.is_empty() {
        println!("test split is empty; skipping held-out evaluation");
    } else {
        let report = evaluate(
            &artifacts.state.generator,
            &artifacts.test,
            &SsimParams::default(),
        )?;
        std::fs::write(a.out.join("eval.csv"), report.to_csv())?;
        println!("held-out {}", report.summary());
    }
    println!(
        "checkpoints: {} {}",
        artifacts.phase1_dir.display(),
        artifacts.phase2_dir.display()
    );
    Ok(())
}

fn enhance(a: EnhanceArgs) -> Result<()> {
    println!(
        "resolved: cmd=enhance input={} checkpoint={} out={} force={}",
        a.input.display(),
        a.checkpoint.display(),
        a.out.display(),
        a.force
    );
    ensure_free(&a.out, a.force)?;
    let loaded = load_checkpoint::<f32>(&a.checkpoint)?;
    let img: Image<f32> = Image::load_png(&a.input)
        .with_context(|| format!("reading '{}'", a.input.display()))?;
    let (enhanced, padded) = enhance_image(&loaded.generator, &img)?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    enhanced.save_png(&a.out)?;
    println!(
        "wrote {} ({}x{}{})",
        a.out.display(),
        enhanced.width(),
        enhanced.height(),
        if padded { ", via reflect padding" } else { "" }
    );
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    println!(
        "resolved: cmd=eval pred={} gt={} out={} force={}",
        a.pred.display(),
        a.gt.display(),
        a.out
            .as_deref()
            .map_or("-".into(), |p| p.display().to_string()),
        a.force
    );
    let mut names: Vec<String> = std::fs::read_dir(&a.gt)
        .with_context(|| format!("reading '{}'", a.gt.display()))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")))
        .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .collect();
    names.sort();
    if names.is_empty() {
        bail!("no PNG frames found in '{}'", a.gt.display());
    }

    let params: SsimParams<f64> = SsimParams::default();
    let mut csv = String::from("filename,psnr_db,ssim\n");
    let (mut sum_psnr, mut sum_ssim) = (0.0f64, 0.0f64);
    for name in &names {
        let pred_path = a.pred.join(name);
        if !pred_path.exists() {
            bail!("prediction for '{name}' missing in '{}'", a.pred.display());
        }
        let pred: Image<f64> = Image::load_png(&pred_path)?;
        let gt: Image<f64> = Image::load_png(a.gt.join(name))?;
        let p = psnr(&pred, &gt, 1.0)?;
        let s = ssim(&pred, &gt, &params)?;
        sum_psnr += p;
        sum_ssim += s;
        let _ = writeln!(csv, "{name},{p},{s}");
    }
    let n = names.len() as f64;
    let _ = writeln!(csv, "mean,{},{}", sum_psnr / n, sum_ssim / n);

    match &a.out {
        Some(path) => {
            ensure_free(path, a.force)?;
            std::fs::write(path, &csv)?;
            println!("wrote {} ({} frames)", path.display(), names.len());
        }
        None => print!("{csv}"),
    }
    Ok(())
}
