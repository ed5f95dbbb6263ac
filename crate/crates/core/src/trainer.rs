//! Two-phase training schedule with delayed discriminator start, ablation
//! switches, and full-frame evaluation.
//!
//! Phase 1 trains the generator alone on small patches; phase 2 transfers
//! the weights to larger patches and switches the adversarial term on at the
//! discriminator start epoch (DSE). The 3% validation split drives
//! best-checkpoint selection by mean SSIM during phase 2.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Tape;
use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::data::{
    self, ExposureTag, PairedDataset, SplitSpec, TrainingSet, PATCHES_PER_FRAME,
};
use crate::error::{CoreError, Result};
use crate::image::Image;
use crate::losses::{self, LossReport, LossWeights, PyramidTerm};
use crate::metrics::{self, SsimParams};
use crate::model::{
    build_discriminator, build_generator, Discriminator, DiscriminatorConfig, Generator,
    GeneratorConfig, PyramidBatch,
};
use crate::optim::{adam_step, AdamConfig, AdamState};
use crate::params::ParamSet;
use crate::pyramid::{collapse, gauss_pyramid, laplace_pyramid, GaussPyramid, LaplacePyramid};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// One splitmix64 round; used to derive all nested seeds from the run seed.
fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hyper-parameters of one training phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseConfig {
    pub epochs: usize,
    /// Discriminator start epoch; the adversarial term is inactive while
    /// absent (phase 1 always runs without it).
    pub dse: Option<usize>,
    pub batch_size: usize,
    pub patch_size: usize,
    pub lr_g: f64,
    pub lr_d: f64,
}

impl PhaseConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(d) = self.dse {
            if d >= self.epochs {
                return Err(CoreError::Config(format!(
                    "discriminator start epoch {d} must be < epochs {}",
                    self.epochs
                )));
            }
        }
        if self.batch_size == 0 || self.patch_size == 0 {
            return Err(CoreError::Config(
                "batch_size and patch_size must be positive".into(),
            ));
        }
        for (name, lr) in [("lr_g", self.lr_g), ("lr_d", self.lr_d)] {
            if !(lr.is_finite() && lr > 0.0) {
                return Err(CoreError::Config(format!(
                    "{name} must be a positive finite real, got {lr}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ablation {
    Full,
    L1Only,
}

impl Ablation {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "full" => Ok(Ablation::Full),
            "l1_only" | "l1-only" => Ok(Ablation::L1Only),
            other => Err(CoreError::InvalidArgument(format!(
                "unknown ablation '{other}' (expected full or l1_only)"
            ))),
        }
    }
}

/// Everything one training run needs.
#[derive(Debug, Clone)]
pub struct RunConfig<T> {
    pub phase1: PhaseConfig,
    pub phase2: PhaseConfig,
    pub weights: LossWeights<T>,
    pub training_set: TrainingSet,
    pub seed: u64,
    pub ablation: Ablation,
    pub generator: GeneratorConfig<T>,
    pub discriminator: DiscriminatorConfig<T>,
}

impl<T: Scalar> RunConfig<T> {
    pub fn validate(&self) -> Result<()> {
        self.phase1.validate()?;
        self.phase2.validate()?;
        if self.phase1.dse.is_some() {
            return Err(CoreError::Config(
                "phase 1 never trains the discriminator; dse must be absent".into(),
            ));
        }
        self.weights.validate()?;
        let min = self.generator.min_input_edge();
        for (name, p) in [("phase1", &self.phase1), ("phase2", &self.phase2)] {
            if p.patch_size < min {
                return Err(CoreError::Config(format!(
                    "{name} patch size {} is below the cascade minimum {min}",
                    p.patch_size
                )));
            }
        }
        Ok(())
    }

    /// Weights with the ablation applied: `l1_only` zeroes gamma and delta.
    pub fn effective_weights(&self) -> LossWeights<T> {
        match self.ablation {
            Ablation::Full => self.weights,
            Ablation::L1Only => LossWeights {
                gamma: T::zero(),
                delta: T::zero(),
                ..self.weights
            },
        }
    }
}

pub const PRESET_NAMES: &[&str] = &[
    "baseline", "lmspec", "best-ue", "best-oe", "best-c", "desk", "desk-l1",
];

/// Named run configurations: the published hyper-parameter table plus
/// desk-scale presets that finish in minutes on a CPU.
pub fn preset<T: Scalar>(name: &str) -> Result<RunConfig<T>> {
    let base = |p1: PhaseConfig, p2: PhaseConfig, set: TrainingSet, ablation: Ablation| RunConfig {
        phase1: p1,
        phase2: p2,
        weights: LossWeights::default(),
        training_set: set,
        seed: 0,
        ablation,
        generator: GeneratorConfig::default(),
        discriminator: DiscriminatorConfig::default(),
    };
    let phase = |epochs, dse, batch_size, patch_size, lr_g, lr_d| PhaseConfig {
        epochs,
        dse,
        batch_size,
        patch_size,
        lr_g,
        lr_d,
    };

    let cfg = match name {
        "baseline" => base(
            phase(40, None, 32, 128, 1e-4, 1e-5),
            phase(30, Some(15), 8, 256, 1e-4, 1e-5),
            TrainingSet::Combined,
            Ablation::Full,
        ),
        // the prior-art schedule: same table row, single-term objective
        "lmspec" => base(
            phase(40, None, 32, 128, 1e-4, 1e-5),
            phase(30, Some(15), 8, 256, 1e-4, 1e-5),
            TrainingSet::Combined,
            Ablation::L1Only,
        ),
        "best-ue" => base(
            phase(50, None, 32, 128, 1e-4, 1e-5),
            phase(40, Some(20), 8, 256, 1e-4, 1e-5),
            TrainingSet::Under,
            Ablation::Full,
        ),
        "best-oe" => base(
            phase(40, None, 64, 128, 2e-4, 2e-5),
            phase(30, Some(15), 32, 256, 2e-4, 2e-5),
            TrainingSet::Over,
            Ablation::Full,
        ),
        "best-c" => base(
            phase(50, None, 32, 128, 1e-4, 1e-5),
            phase(40, Some(20), 8, 256, 1e-4, 1e-5),
            TrainingSet::Combined,
            Ablation::Full,
        ),
        "desk" => base(
            phase(2, None, 4, 64, 1e-3, 1e-4),
            phase(2, Some(1), 4, 128, 5e-4, 5e-5),
            TrainingSet::Combined,
            Ablation::Full,
        ),
        "desk-l1" => base(
            phase(2, None, 4, 64, 1e-3, 1e-4),
            phase(2, Some(1), 4, 128, 5e-4, 5e-5),
            TrainingSet::Combined,
            Ablation::L1Only,
        ),
        other => return Err(CoreError::UnknownPreset(other.to_string())),
    };
    Ok(cfg)
}

/// Models plus their optimizer moments.
#[derive(Debug)]
pub struct TrainState<T: Scalar> {
    pub generator: Generator<T>,
    pub discriminator: Discriminator<T>,
    pub gen_opt: Vec<AdamState<T>>,
    pub disc_opt: Vec<AdamState<T>>,
}

fn fresh_states<T: Scalar>(params: &ParamSet<T>) -> Vec<AdamState<T>> {
    (0..params.len())
        .map(|i| AdamState::new(params.get(i).numel()))
        .collect()
}

impl<T: Scalar> TrainState<T> {
    pub fn new(
        gen_cfg: GeneratorConfig<T>,
        disc_cfg: DiscriminatorConfig<T>,
        seed: u64,
    ) -> Result<Self> {
        let generator = build_generator(gen_cfg, mix(seed, 0x47454E))?;
        let discriminator = build_discriminator(disc_cfg, mix(seed, 0x44495343))?;
        let gen_opt = fresh_states(generator.params());
        let disc_opt = fresh_states(discriminator.params());
        Ok(Self {
            generator,
            discriminator,
            gen_opt,
            disc_opt,
        })
    }

    /// Drops all Adam moments; each phase starts with a fresh optimizer
    /// (only the weights transfer between phases).
    pub fn reset_optimizer(&mut self) {
        self.gen_opt = fresh_states(self.generator.params());
        self.disc_opt = fresh_states(self.discriminator.params());
    }
}

/// One logged training step.
#[derive(Debug, Clone)]
pub struct StepRow<T> {
    pub phase: usize,
    pub epoch: usize,
    pub step: usize,
    pub report: LossReport<T>,
    /// Discriminator BCE for this step; 0 while the discriminator is gated.
    pub disc: T,
}

/// Per-step log of one phase, serializable as CSV.
#[derive(Debug, Clone)]
pub struct TrainLog<T> {
    levels: usize,
    pub rows: Vec<StepRow<T>>,
    /// Frames skipped because they were smaller than the patch size.
    pub skipped_frames: usize,
}

impl<T: Scalar> TrainLog<T> {
    pub fn new(levels: usize) -> Self {
        Self {
            levels,
            rows: Vec::new(),
            skipped_frames: 0,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("phase,epoch,step,pyr,rec,ssim,adv,adv_raw,total,disc");
        for l in 2..=self.levels {
            s.push_str(&format!(",pyr_l{l}"));
        }
        s.push('\n');
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}",
                r.phase,
                r.epoch,
                r.step,
                r.report.pyr,
                r.report.rec,
                r.report.ssim,
                r.report.adv,
                r.report.adv_raw,
                r.report.total,
                r.disc
            ));
            for v in &r.report.pyr_levels {
                s.push_str(&format!(",{v}"));
            }
            s.push('\n');
        }
        s
    }

    /// Mean total loss over one epoch's steps, if any ran.
    pub fn epoch_mean_total(&self, epoch: usize) -> Option<T> {
        let vals: Vec<T> = self
            .rows
            .iter()
            .filter(|r| r.epoch == epoch)
            .map(|r| r.report.total)
            .collect();
        if vals.is_empty() {
            return None;
        }
        let n = T::lit(vals.len() as f64);
        Some(vals.into_iter().fold(T::zero(), |a, v| a + v) / n)
    }
}

fn batch_level<T: Scalar>(pyramids: &[GaussPyramid<T>], idx: usize) -> Result<Tensor<T>> {
    let imgs: Vec<Image<T>> = pyramids.iter().map(|g| g.levels()[idx].clone()).collect();
    Image::batch_to_tensor(&imgs)
}

/// One generator update (and one gated discriminator update) on a batch of
/// co-located (corrupted, ground-truth) patches.
fn train_step<T: Scalar>(
    state: &mut TrainState<T>,
    batch: &[(Image<T>, Image<T>)],
    weights: &LossWeights<T>,
    adv_active: bool,
    adam_g: &AdamConfig<T>,
    adam_d: &AdamConfig<T>,
) -> Result<(LossReport<T>, T)> {
    let levels = state.generator.config().levels;
    let lps: Vec<LaplacePyramid<T>> = batch
        .iter()
        .map(|(c, _)| laplace_pyramid(c, levels))
        .collect::<Result<_>>()?;
    let pyr_batch = PyramidBatch::from_pyramids(&lps)?;
    let gps: Vec<GaussPyramid<T>> = batch
        .iter()
        .map(|(_, g)| gauss_pyramid(g, levels))
        .collect::<Result<_>>()?;
    // batched ground-truth Gaussian levels, finest first
    let gt_levels: Vec<Tensor<T>> = (0..levels)
        .map(|i| batch_level(&gps, i))
        .collect::<Result<_>>()?;

    // generator step
    let mut tape = Tape::new();
    let gvars = state.generator.stage(&mut tape, true);
    let out = state.generator.forward(&mut tape, &gvars, &pyr_batch)?;

    let terms: Vec<PyramidTerm> = out
        .level_preds
        .iter()
        .map(|&(level, pred)| {
            // the prediction for level i lives at the scale of Gaussian
            // level i-1 of the target
            let target = tape.constant(gt_levels[(level - 2) as usize].clone());
            PyramidTerm {
                level,
                pred,
                target,
            }
        })
        .collect();
    let pyr = losses::pyramid_loss(&mut tape, &terms)?;
    let gt_full = tape.constant(gt_levels[0].clone());
    let rec = losses::reconstruction_loss(&mut tape, out.y, gt_full)?;
    let ssim_params = SsimParams::default();
    let ssim = if weights.gamma > T::zero() {
        losses::ssim_loss(&mut tape, out.y, gt_full, &ssim_params)?
    } else {
        // gated: log an exact zero and spend no compute on the term
        tape.constant(Tensor::scalar(T::zero()))
    };
    let (h, w) = pyr_batch.patch_dims();
    let adv = if adv_active {
        let dvars = state.discriminator.stage(&mut tape, false);
        let logits = state.discriminator.forward(&mut tape, &dvars, out.y)?;
        Some(losses::adversarial_generator_loss(
            &mut tape, logits, h, w, levels,
        )?)
    } else {
        None
    };
    let total = losses::total_loss(
        &mut tape,
        pyr.total,
        rec,
        ssim,
        adv.map(|a| a.normalized),
        weights,
    )?;

    let report = LossReport {
        pyr: tape.scalar_value(pyr.total),
        rec: tape.scalar_value(rec),
        ssim: tape.scalar_value(ssim),
        adv: adv.map_or(T::zero(), |a| tape.scalar_value(a.normalized)),
        adv_raw: adv.map_or(T::zero(), |a| tape.scalar_value(a.raw)),
        total: tape.scalar_value(total),
        pyr_levels: pyr
            .per_level
            .iter()
            .map(|&(_, v)| tape.scalar_value(v))
            .collect(),
    };
    // aborts before any parameter update, leaving the state intact
    report.validate(weights)?;

    tape.backward(total)?;
    for (i, var) in gvars.iter().enumerate() {
        let name = state.generator.params().name(i).to_string();
        let grad = tape
            .grad(*var)
            .ok_or_else(|| CoreError::InvalidArgument(format!("no gradient for '{name}'")))?;
        if !grad.iter().all(|g| g.is_finite()) {
            return Err(CoreError::NonFiniteGradient { name });
        }
        adam_step(
            state.generator.params_mut().get_mut(i).data_mut(),
            grad,
            &mut state.gen_opt[i],
            adam_g,
        )?;
    }

    let disc_value = if adv_active {
        // the fake batch is the pre-update generator output, detached
        let fake = tape.value(out.y).clone();
        drop(tape);
        let mut dtape = Tape::new();
        let dvars = state.discriminator.stage(&mut dtape, true);
        let real = dtape.constant(gt_levels[0].clone());
        let fake = dtape.constant(fake);
        let real_logits = state.discriminator.forward(&mut dtape, &dvars, real)?;
        let fake_logits = state.discriminator.forward(&mut dtape, &dvars, fake)?;
        let dloss = losses::discriminator_loss(&mut dtape, real_logits, fake_logits)?;
        let value = dtape.scalar_value(dloss);
        if !value.is_finite() {
            return Err(CoreError::NonFinite {
                context: "discriminator loss".into(),
            });
        }
        dtape.backward(dloss)?;
        for (i, var) in dvars.iter().enumerate() {
            let name = state.discriminator.params().name(i).to_string();
            let grad = dtape
                .grad(*var)
                .ok_or_else(|| CoreError::InvalidArgument(format!("no gradient for '{name}'")))?;
            if !grad.iter().all(|g| g.is_finite()) {
                return Err(CoreError::NonFiniteGradient { name });
            }
            adam_step(
                state.discriminator.params_mut().get_mut(i).data_mut(),
                grad,
                &mut state.disc_opt[i],
                adam_d,
            )?;
        }
        value
    } else {
        T::zero()
    };

    Ok((report, disc_value))
}

/// Trains one phase over pre-loaded frames; see [`train_phase_with`] for the
/// epoch-callback variant.
pub fn train_phase<T: Scalar>(
    state: &mut TrainState<T>,
    frames: &[(Image<T>, Image<T>)],
    cfg: &PhaseConfig,
    weights: &LossWeights<T>,
    phase: usize,
    seed: u64,
) -> Result<TrainLog<T>> {
    train_phase_with(state, frames, cfg, weights, phase, seed, |_, _| Ok(()))
}

/// Full phase loop: per epoch, every frame contributes
/// [`PATCHES_PER_FRAME`] patch pairs, shuffled and consumed in batches; one
/// generator step per batch, plus one discriminator step once the epoch
/// reaches the DSE. The callback runs after every epoch (checkpoint hooks).
pub fn train_phase_with<T: Scalar>(
    state: &mut TrainState<T>,
    frames: &[(Image<T>, Image<T>)],
    cfg: &PhaseConfig,
    weights: &LossWeights<T>,
    phase: usize,
    seed: u64,
    mut after_epoch: impl FnMut(usize, &TrainState<T>) -> Result<()>,
) -> Result<TrainLog<T>> {
    cfg.validate()?;
    weights.validate()?;
    if frames.is_empty() {
        return Err(CoreError::Dataset("cannot train on an empty frame set".into()));
    }
    let min = state.generator.config().min_input_edge();
    if cfg.patch_size < min {
        return Err(CoreError::Config(format!(
            "patch size {} is below the cascade minimum {min}",
            cfg.patch_size
        )));
    }

    let adam_g = AdamConfig::with_lr(T::lit(cfg.lr_g));
    let adam_d = AdamConfig::with_lr(T::lit(cfg.lr_d));
    let mut log = TrainLog::new(state.generator.config().levels);

    for epoch in 0..cfg.epochs {
        let adv_active =
            cfg.dse.is_some_and(|d| epoch >= d) && weights.delta > T::zero();
        let eseed = mix(seed, mix(phase as u64, epoch as u64));

        let mut patches: Vec<(Image<T>, Image<T>)> = Vec::new();
        let mut skipped = 0usize;
        for (fi, (corrupted, gt)) in frames.iter().enumerate() {
            match data::extract_patches(
                corrupted,
                gt,
                cfg.patch_size,
                PATCHES_PER_FRAME,
                mix(eseed, 1000 + fi as u64),
            ) {
                Ok(pairs) => patches.extend(pairs),
                Err(CoreError::ImageTooSmall { .. }) => skipped += 1,
                Err(e) => return Err(e),
            }
        }
        if patches.is_empty() {
            return Err(CoreError::Dataset(format!(
                "no frame admits {0}x{0} patches",
                cfg.patch_size
            )));
        }
        log.skipped_frames = skipped;
        let mut rng = ChaCha8Rng::seed_from_u64(mix(eseed, 0xA11CE));
        patches.shuffle(&mut rng);

        for (step, chunk) in patches.chunks(cfg.batch_size).enumerate() {
            let (report, disc) =
                train_step(state, chunk, weights, adv_active, &adam_g, &adam_d)?;
            log.rows.push(StepRow {
                phase,
                epoch,
                step,
                report,
                disc,
            });
        }
        after_epoch(epoch, state)?;
    }
    Ok(log)
}

/// Everything a finished two-phase run leaves behind.
#[derive(Debug)]
pub struct RunArtifacts<T: Scalar> {
    pub state: TrainState<T>,
    pub phase1_log: TrainLog<T>,
    pub phase2_log: TrainLog<T>,
    pub train: PairedDataset,
    pub test: PairedDataset,
    pub val: PairedDataset,
    /// Mean validation SSIM of the best phase-2 epoch, when a validation
    /// split exists.
    pub best_val_ssim: Option<f64>,
    pub phase1_dir: PathBuf,
    pub phase2_dir: PathBuf,
    /// Directory of the validation-selected checkpoint, when one was saved.
    pub best_dir: Option<PathBuf>,
}

fn load_frames<T: Scalar>(set: &PairedDataset) -> Result<Vec<(Image<T>, Image<T>)>> {
    set.records().iter().map(data::load_pair).collect()
}

/// Runs the full schedule: phase 1, checkpoint, reload, phase 2 with DSE and
/// validation-driven best-checkpoint selection. Checkpoints land in
/// `out_dir/{phase1,phase2,best}`.
pub fn run_two_phase<T: Scalar>(
    run: &RunConfig<T>,
    dataset: &PairedDataset,
    out_dir: &Path,
) -> Result<RunArtifacts<T>> {
    run.validate()?;
    let filtered = dataset.filter(run.training_set);
    if filtered.is_empty() {
        return Err(CoreError::Dataset(format!(
            "training-set selection '{}' left no records",
            run.training_set.flag()
        )));
    }
    let (train, test, val) = data::split_dataset(
        &filtered,
        &SplitSpec {
            seed: run.seed,
            ..Default::default()
        },
    )?;
    if train.is_empty() {
        return Err(CoreError::Dataset("train split is empty".into()));
    }
    let frames: Vec<(Image<T>, Image<T>)> = load_frames(&train)?;
    let weights = run.effective_weights();
    let mut state = TrainState::new(run.generator.clone(), run.discriminator.clone(), run.seed)?;

    let phase1_log = train_phase(
        &mut state,
        &frames,
        &run.phase1,
        &weights,
        1,
        mix(run.seed, 101),
    )?;
    let phase1_dir = out_dir.join("phase1");
    save_checkpoint(
        &phase1_dir,
        &state.generator,
        Some(&state.gen_opt),
        Some(&state.discriminator),
        Some(&state.disc_opt),
    )?;

    // phase 2 starts from the serialized phase-1 weights, fresh optimizer
    let loaded = load_checkpoint::<T>(&phase1_dir)?;
    state.generator = loaded.generator;
    if let Some(d) = loaded.discriminator {
        state.discriminator = d;
    }
    state.reset_optimizer();

    let ssim_params = SsimParams::default();
    let best_dir = out_dir.join("best");
    let mut best_val_ssim: Option<f64> = None;
    let mut best_saved = false;
    let phase2_log = train_phase_with(
        &mut state,
        &frames,
        &run.phase2,
        &weights,
        2,
        mix(run.seed, 202),
        |_, st| {
            if val.is_empty() {
                return Ok(());
            }
            let report = evaluate(&st.generator, &val, &ssim_params)?;
            let mean = report.mean_ssim.to_f64().unwrap();
            if best_val_ssim.is_none_or(|b| mean > b) {
                best_val_ssim = Some(mean);
                save_checkpoint(&best_dir, &st.generator, None, None, None)?;
                best_saved = true;
            }
            Ok(())
        },
    )?;

    let phase2_dir = out_dir.join("phase2");
    save_checkpoint(
        &phase2_dir,
        &state.generator,
        Some(&state.gen_opt),
        Some(&state.discriminator),
        Some(&state.disc_opt),
    )?;

    Ok(RunArtifacts {
        state,
        phase1_log,
        phase2_log,
        train,
        test,
        val,
        best_val_ssim,
        phase1_dir,
        phase2_dir,
        best_dir: best_saved.then_some(best_dir),
    })
}

/// Full-frame inference. Frames whose dims are not multiples of
/// `2^(levels-1)` (or below the cascade minimum) are reflect-padded on the
/// bottom/right and the output cropped back; the flag reports whether
/// padding was needed.
pub fn enhance_image<T: Scalar>(gen: &Generator<T>, img: &Image<T>) -> Result<(Image<T>, bool)> {
    let cfg = gen.config();
    let multiple = 1usize << (cfg.levels - 1);
    let min_edge = cfg.min_input_edge();
    let target = |n: usize| -> usize { (n.div_ceil(multiple) * multiple).max(min_edge) };
    let (h, w) = (img.height(), img.width());
    let (th, tw) = (target(h), target(w));
    let padded = th != h || tw != w;
    let work = if padded {
        img.reflect_pad(0, th - h, 0, tw - w)?
    } else {
        img.clone()
    };

    let lp = laplace_pyramid(&work, cfg.levels)?;
    let batch = PyramidBatch::from_pyramids(std::slice::from_ref(&lp))?;
    let mut tape = Tape::new();
    let vars = gen.stage(&mut tape, false);
    let out = gen.forward(&mut tape, &vars, &batch)?;
    let full = Image::from_tensor(tape.value(out.y))?;
    let result = if padded { full.crop(0, 0, h, w)? } else { full };
    Ok((result, padded))
}

/// One evaluated frame.
#[derive(Debug, Clone)]
pub struct EvalRow<T> {
    pub name: String,
    pub tag: ExposureTag,
    pub psnr: T,
    pub ssim: T,
    /// True when the frame needed reflect-padding for the pyramid.
    pub padded: bool,
}

/// Per-image and mean full-reference scores over a dataset.
#[derive(Debug, Clone)]
pub struct EvalReport<T> {
    pub rows: Vec<EvalRow<T>>,
    pub mean_psnr: T,
    pub mean_ssim: T,
}

impl<T: Scalar> EvalReport<T> {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("name,tag,psnr,ssim,padded\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                r.name, r.tag, r.psnr, r.ssim, r.padded
            ));
        }
        s
    }

    pub fn summary(&self) -> String {
        format!(
            "{} images: mean PSNR {} dB, mean SSIM {}",
            self.rows.len(),
            self.mean_psnr,
            self.mean_ssim
        )
    }

    pub fn mean_ssim_for(&self, tag: ExposureTag) -> Option<T> {
        let vals: Vec<T> = self
            .rows
            .iter()
            .filter(|r| r.tag == tag)
            .map(|r| r.ssim)
            .collect();
        if vals.is_empty() {
            return None;
        }
        let n = T::lit(vals.len() as f64);
        Some(vals.into_iter().fold(T::zero(), |a, v| a + v) / n)
    }
}

/// Evaluates an arbitrary enhancer over a dataset; rows follow record order.
pub fn evaluate_with<T: Scalar>(
    mut enhance: impl FnMut(&Image<T>) -> Result<(Image<T>, bool)>,
    set: &PairedDataset,
    params: &SsimParams<T>,
) -> Result<EvalReport<T>> {
    if set.is_empty() {
        return Err(CoreError::Dataset("cannot evaluate an empty dataset".into()));
    }
    let mut rows = Vec::with_capacity(set.len());
    let mut sum_psnr = T::zero();
    let mut sum_ssim = T::zero();
    for record in set.records() {
        let (corrupted, gt): (Image<T>, Image<T>) = data::load_pair(record)?;
        let (enhanced, padded) = enhance(&corrupted)?;
        let psnr = metrics::psnr(&enhanced, &gt, params.peak)?;
        let ssim = metrics::ssim(&enhanced, &gt, params)?;
        sum_psnr += psnr;
        sum_ssim += ssim;
        rows.push(EvalRow {
            name: record.name.clone(),
            tag: record.tag,
            psnr,
            ssim,
            padded,
        });
    }
    let n = T::lit(rows.len() as f64);
    Ok(EvalReport {
        mean_psnr: sum_psnr / n,
        mean_ssim: sum_ssim / n,
        rows,
    })
}

/// Full-frame evaluation of a trained generator (no patching at test time).
pub fn evaluate<T: Scalar>(
    gen: &Generator<T>,
    set: &PairedDataset,
    params: &SsimParams<T>,
) -> Result<EvalReport<T>> {
    evaluate_with(|img| enhance_image(gen, img), set, params)
}

/// Sanity enhancer: decompose and collapse without touching anything.
pub fn identity_enhance<T: Scalar>(img: &Image<T>, levels: usize) -> Result<(Image<T>, bool)> {
    let lp = laplace_pyramid(img, levels)?;
    Ok((collapse(&lp)?, false))
}
