//! Dataset ingestion, deterministic splitting, patch sampling, and the
//! synthetic exposure-corruption generator.
//!
//! On-disk layout: `root/{gt,over,under}/NAME.png` with shared NAME keys.
//! Every corrupted frame pairs with the ground-truth frame of the same name;
//! one ground truth may serve both an over- and an under-exposed partner.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{CoreError, Result};
use crate::image::Image;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExposureTag {
    Over,
    Under,
}

impl ExposureTag {
    pub fn dir_name(self) -> &'static str {
        match self {
            ExposureTag::Over => "over",
            ExposureTag::Under => "under",
        }
    }
}

impl fmt::Display for ExposureTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.dir_name())
    }
}

/// Which exposure directions a run trains on (UE / OE / C).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainingSet {
    Under,
    Over,
    Combined,
}

impl TrainingSet {
    pub fn admits(self, tag: ExposureTag) -> bool {
        match self {
            TrainingSet::Under => tag == ExposureTag::Under,
            TrainingSet::Over => tag == ExposureTag::Over,
            TrainingSet::Combined => true,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ue" | "under" => Ok(TrainingSet::Under),
            "oe" | "over" => Ok(TrainingSet::Over),
            "c" | "combined" => Ok(TrainingSet::Combined),
            other => Err(CoreError::InvalidArgument(format!(
                "unknown training set '{other}' (expected ue, oe, or c)"
            ))),
        }
    }

    pub fn flag(self) -> &'static str {
        match self {
            TrainingSet::Under => "ue",
            TrainingSet::Over => "oe",
            TrainingSet::Combined => "c",
        }
    }
}

/// Patches sampled per frame per epoch.
pub const PATCHES_PER_FRAME: usize = 4;

/// One corrupted/ground-truth pair.
#[derive(Debug, Clone)]
pub struct Record {
    /// Shared file stem (pairing key).
    pub name: String,
    pub corrupted: PathBuf,
    pub gt: PathBuf,
    pub tag: ExposureTag,
}

#[derive(Debug, Clone)]
pub struct PairedDataset {
    root: PathBuf,
    records: Vec<Record>,
}

impl PairedDataset {
    pub fn from_records(root: PathBuf, records: Vec<Record>) -> Self {
        Self { root, records }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn count(&self, tag: ExposureTag) -> usize {
        self.records.iter().filter(|r| r.tag == tag).count()
    }

    /// Keeps only records admitted by the training-set selector.
    pub fn filter(&self, set: TrainingSet) -> PairedDataset {
        PairedDataset {
            root: self.root.clone(),
            records: self
                .records
                .iter()
                .filter(|r| set.admits(r.tag))
                .cloned()
                .collect(),
        }
    }

    /// `"N records (O over, U under)"` — the load-time report line.
    pub fn summary(&self) -> String {
        format!(
            "{} records ({} over, {} under)",
            self.len(),
            self.count(ExposureTag::Over),
            self.count(ExposureTag::Under)
        )
    }
}

/// Split fractions; defaults 0.70 / 0.27 / 0.03.
#[derive(Debug, Clone, Copy)]
pub struct SplitSpec {
    pub train: f64,
    pub test: f64,
    pub val: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train: 0.70,
            test: 0.27,
            val: 0.03,
            seed: 0,
        }
    }
}

fn list_pngs(dir: &Path) -> Result<Vec<String>> {
    let mut names = Vec::new();
    let iter = std::fs::read_dir(dir).map_err(|e| CoreError::io(dir, e))?;
    for entry in iter {
        let entry = entry.map_err(|e| CoreError::io(dir, e))?;
        let path = entry.path();
        if path.extension().and_then(|e| e.to_str()) == Some("png") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                names.push(stem.to_string());
            }
        }
    }
    names.sort();
    Ok(names)
}

fn png_dims(path: &Path) -> Result<(u32, u32)> {
    ::image::image_dimensions(path).map_err(|e| CoreError::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Walks `root/{gt,over,under}`, pairs corrupted frames with their ground
/// truths, and validates that partner dimensions agree.
pub fn load_dataset(root: &Path) -> Result<PairedDataset> {
    let gt_dir = root.join("gt");
    if !gt_dir.is_dir() {
        return Err(CoreError::Dataset(format!(
            "{} has no gt/ subdirectory",
            root.display()
        )));
    }
    let gt_names = list_pngs(&gt_dir)?;
    let mut records = Vec::new();
    for tag in [ExposureTag::Over, ExposureTag::Under] {
        let dir = root.join(tag.dir_name());
        if !dir.is_dir() {
            continue;
        }
        for name in list_pngs(&dir)? {
            let corrupted = dir.join(format!("{name}.png"));
            if !gt_names.binary_search(&name).is_ok() {
                return Err(CoreError::Dataset(format!(
                    "{} has no ground-truth partner in gt/",
                    corrupted.display()
                )));
            }
            let gt = gt_dir.join(format!("{name}.png"));
            let (cw, ch) = png_dims(&corrupted)?;
            let (gw, gh) = png_dims(&gt)?;
            if (cw, ch) != (gw, gh) {
                return Err(CoreError::Dataset(format!(
                    "{}: {}x{} does not match its ground truth ({}x{})",
                    corrupted.display(),
                    cw,
                    ch,
                    gw,
                    gh
                )));
            }
            records.push(Record {
                name,
                corrupted,
                gt,
                tag,
            });
        }
    }
    if records.is_empty() {
        return Err(CoreError::Dataset(format!(
            "no paired over/ or under/ frames found beneath {}",
            root.display()
        )));
    }
    Ok(PairedDataset {
        root: root.to_path_buf(),
        records,
    })
}

/// Deterministic train/test/val split. The shuffling unit is the
/// ground-truth frame, so a frame's over and under partners always land in
/// the same split (no leakage); sizes are `floor(frac * groups)` with the
/// remainder going to train.
pub fn split_dataset(
    ds: &PairedDataset,
    spec: &SplitSpec,
) -> Result<(PairedDataset, PairedDataset, PairedDataset)> {
    if ds.is_empty() {
        return Err(CoreError::Dataset("cannot split an empty dataset".into()));
    }
    let sum = spec.train + spec.test + spec.val;
    if (sum - 1.0).abs() > 1e-9 {
        return Err(CoreError::InvalidArgument(format!(
            "split fractions must sum to 1, got {sum}"
        )));
    }
    if spec.train < 0.0 || spec.test < 0.0 || spec.val < 0.0 {
        return Err(CoreError::InvalidArgument("split fractions must be non-negative".into()));
    }

    let mut groups: BTreeMap<String, Vec<Record>> = BTreeMap::new();
    for r in &ds.records {
        groups.entry(r.name.clone()).or_default().push(r.clone());
    }
    let mut names: Vec<String> = groups.keys().cloned().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    names.shuffle(&mut rng);

    let g = names.len();
    let n_test = (spec.test * g as f64).floor() as usize;
    let n_val = (spec.val * g as f64).floor() as usize;
    let n_train = g - n_test - n_val; // floor(train*g) plus the remainder

    let take = |slice: &[String]| -> Vec<Record> {
        slice
            .iter()
            .flat_map(|n| groups[n].iter().cloned())
            .collect()
    };
    let train = take(&names[..n_train]);
    let test = take(&names[n_train..n_train + n_test]);
    let val = take(&names[n_train + n_test..]);

    Ok((
        PairedDataset::from_records(ds.root.clone(), train),
        PairedDataset::from_records(ds.root.clone(), test),
        PairedDataset::from_records(ds.root.clone(), val),
    ))
}

/// Samples `count` co-located patch pairs with uniform top-left corners.
pub fn extract_patches<T: Scalar>(
    corrupted: &Image<T>,
    gt: &Image<T>,
    patch_size: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<(Image<T>, Image<T>)>> {
    if corrupted.height() != gt.height() || corrupted.width() != gt.width() {
        return Err(CoreError::shape(
            &[3, gt.height(), gt.width()],
            &[3, corrupted.height(), corrupted.width()],
            "extract_patches pair",
        ));
    }
    let (h, w) = (corrupted.height(), corrupted.width());
    if h < patch_size || w < patch_size {
        return Err(CoreError::ImageTooSmall {
            height: h,
            width: w,
            min: patch_size,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let y = rng.gen_range(0..=h - patch_size);
        let x = rng.gen_range(0..=w - patch_size);
        out.push((
            corrupted.crop(y, x, patch_size, patch_size)?,
            gt.crop(y, x, patch_size, patch_size)?,
        ));
    }
    Ok(out)
}

/// Applies a synthetic exposure error. Under-exposure darkens with
/// `0.9 * x^(1+3s)`; over-exposure brightens with `min(1, 1.1 * x^(1/(1+3s)))`.
/// The seed is reserved for optional per-image strength jitter and currently
/// leaves the mapping fully determined by `strength`.
pub fn synth_corrupt<T: Scalar>(
    img: &Image<T>,
    mode: ExposureTag,
    strength: f64,
    _seed: u64,
) -> Result<Image<T>> {
    if !(0.0..=1.0).contains(&strength) || strength == 0.0 {
        return Err(CoreError::InvalidArgument(format!(
            "corruption strength must be in (0, 1], got {strength}"
        )));
    }
    let one = T::one();
    Ok(match mode {
        ExposureTag::Under => {
            let gamma = T::lit(1.0 + 3.0 * strength);
            let gain = T::lit(0.9);
            img.map(|x| gain * x.powf(gamma))
        }
        ExposureTag::Over => {
            let gamma = T::lit(1.0 / (1.0 + 3.0 * strength));
            let gain = T::lit(1.1);
            img.map(|x| (gain * x.powf(gamma)).min(one))
        }
    })
}

/// Deterministic procedural test frame: smooth multi-frequency shading with
/// soft blobs and mild texture, values kept inside (0, 1) so both corruption
/// directions have room to move.
pub fn demo_image<T: Scalar>(height: usize, width: usize, seed: u64) -> Image<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tau = std::f64::consts::TAU;

    struct Wave {
        fy: f64,
        fx: f64,
        phase: f64,
        amp: f64,
    }
    let waves: Vec<Wave> = (0..4)
        .map(|_| Wave {
            fy: rng.gen_range(0.5..2.5),
            fx: rng.gen_range(0.5..2.5),
            phase: rng.gen_range(0.0..tau),
            amp: rng.gen_range(0.08..0.2),
        })
        .collect();
    struct Blob {
        cy: f64,
        cx: f64,
        r: f64,
        amp: [f64; 3],
    }
    let blobs: Vec<Blob> = (0..3)
        .map(|_| Blob {
            cy: rng.gen_range(0.1..0.9),
            cx: rng.gen_range(0.1..0.9),
            r: rng.gen_range(0.08..0.3),
            amp: [
                rng.gen_range(-0.25..0.25),
                rng.gen_range(-0.25..0.25),
                rng.gen_range(-0.25..0.25),
            ],
        })
        .collect();
    let tint = [
        rng.gen_range(-0.08..0.08),
        rng.gen_range(-0.08..0.08),
        rng.gen_range(-0.08..0.08),
    ];
    let base = rng.gen_range(0.4..0.6);

    // cheap deterministic per-pixel texture, independent of channel
    let noise_seed = rng.gen::<u64>();
    let noise = |y: usize, x: usize| -> f64 {
        let mut h = noise_seed ^ (y as u64).wrapping_mul(0x9e3779b97f4a7c15);
        h ^= (x as u64).wrapping_mul(0xbf58476d1ce4e5b9);
        h = h.wrapping_mul(0x94d049bb133111eb);
        h ^= h >> 31;
        ((h % 1000) as f64 / 1000.0 - 0.5) * 0.04
    };

    Image::from_fn(height, width, |c, y, x| {
        let v = y as f64 / height as f64;
        let u = x as f64 / width as f64;
        let mut val = base + tint[c];
        for w in &waves {
            val += w.amp * (tau * (w.fy * v + w.fx * u) + w.phase).sin();
        }
        for b in &blobs {
            let d2 = (v - b.cy).powi(2) + (u - b.cx).powi(2);
            val += b.amp[c] * (-d2 / (2.0 * b.r * b.r)).exp();
        }
        val += noise(y, x);
        T::lit(val.clamp(0.03, 0.97))
    })
}

/// Materializes a `root/{gt,over,under}` corpus of procedural frames with
/// per-frame corruption strengths drawn from `[0.3, 0.9)`.
pub fn generate_corpus(
    root: &Path,
    count: usize,
    height: usize,
    width: usize,
    seed: u64,
) -> Result<PairedDataset> {
    if count == 0 {
        return Err(CoreError::InvalidArgument("corpus count must be positive".into()));
    }
    for sub in ["gt", "over", "under"] {
        std::fs::create_dir_all(root.join(sub)).map_err(|e| CoreError::io(root, e))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..count {
        let name = format!("frame_{i:04}");
        let frame_seed = rng.gen::<u64>();
        let strength = rng.gen_range(0.3..0.9);
        let gt: Image<f32> = demo_image(height, width, frame_seed);
        gt.save_png(root.join("gt").join(format!("{name}.png")))?;
        for tag in [ExposureTag::Over, ExposureTag::Under] {
            let corrupted = synth_corrupt(&gt, tag, strength, frame_seed)?;
            corrupted.save_png(root.join(tag.dir_name()).join(format!("{name}.png")))?;
        }
    }
    load_dataset(root)
}

/// Loads the image pair behind a record.
pub fn load_pair<T: Scalar>(record: &Record) -> Result<(Image<T>, Image<T>)> {
    Ok((
        Image::load_png(&record.corrupted)?,
        Image::load_png(&record.gt)?,
    ))
}
