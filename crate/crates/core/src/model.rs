//! Coarse-to-fine generator cascade and the patch discriminator.
//!
//! The generator is a chain of small U-Net-style sub-networks, one per
//! pyramid level, run coarsest first. Sub-network k consumes its pyramid
//! level concatenated with the upsampled output of sub-network k-1 (the
//! coarsest one sees its level alone) and predicts a residual correction.
//! Upsampled intermediate outputs feed the multi-scale loss; the finest
//! output is squashed to `[0,1]` and becomes Y.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Var};
use crate::error::{CoreError, Result};
use crate::image::{Image, CHANNELS};
use crate::params::ParamSet;
use crate::pyramid::{LaplacePyramid, MAX_LEVELS, MIN_LEVELS};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Reference parameter count of the full-scale configuration; desk-scale
/// builds report their distance from it.
pub const FULL_SCALE_PARAMS: usize = 7_000_000;

#[derive(Debug, Clone)]
pub struct GeneratorConfig<T> {
    /// Pyramid levels; must match the decomposition fed to `forward`.
    pub levels: usize,
    /// Feature width per sub-network, coarsest first.
    pub base_channels: Vec<usize>,
    /// Stride-2 stages inside each sub-network.
    pub encoder_depth: usize,
    pub leaky_slope: T,
    /// Smallest patch edge this build must support; `build_generator`
    /// rejects configs whose coarsest feature maps would collapse below 1x1.
    pub min_patch_size: usize,
}

impl<T: Scalar> Default for GeneratorConfig<T> {
    fn default() -> Self {
        Self {
            levels: 4,
            base_channels: vec![16, 12, 8, 8],
            encoder_depth: 2,
            leaky_slope: T::lit(0.2),
            min_patch_size: 32,
        }
    }
}

impl<T: Scalar> GeneratorConfig<T> {
    /// Smallest input edge the cascade accepts: `2^(levels-1+encoder_depth)`.
    pub fn min_input_edge(&self) -> usize {
        1 << (self.levels - 1 + self.encoder_depth)
    }

    fn validate(&self) -> Result<()> {
        if !(MIN_LEVELS..=MAX_LEVELS).contains(&self.levels) {
            return Err(CoreError::Config(format!(
                "generator levels must be in [{MIN_LEVELS}, {MAX_LEVELS}], got {}",
                self.levels
            )));
        }
        if self.base_channels.len() != self.levels {
            return Err(CoreError::Config(format!(
                "base_channels needs one width per sub-network ({} levels, got {})",
                self.levels,
                self.base_channels.len()
            )));
        }
        if self.base_channels.contains(&0) {
            return Err(CoreError::Config("channel widths must be positive".into()));
        }
        if self.encoder_depth == 0 {
            return Err(CoreError::Config("encoder_depth must be at least 1".into()));
        }
        if !(self.leaky_slope.is_finite() && self.leaky_slope >= T::zero() && self.leaky_slope < T::one()) {
            return Err(CoreError::Config(format!(
                "leaky slope must be in [0,1), got {}",
                self.leaky_slope
            )));
        }
        let coarsest = self.min_patch_size >> (self.levels - 1);
        if coarsest < (1 << self.encoder_depth) {
            return Err(CoreError::Config(format!(
                "encoder_depth {} collapses the coarsest {}x{} input below 1x1 \
                 (need patch >= {})",
                self.encoder_depth,
                coarsest,
                coarsest,
                self.min_input_edge()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct DiscriminatorConfig<T> {
    pub base_channels: usize,
    pub leaky_slope: T,
}

impl<T: Scalar> Default for DiscriminatorConfig<T> {
    fn default() -> Self {
        Self {
            base_channels: 16,
            leaky_slope: T::lit(0.2),
        }
    }
}

/// One conv layer: ParamSet indices plus geometry.
#[derive(Debug, Clone, Copy)]
struct ConvLayer {
    w: usize,
    b: usize,
    stride: usize,
    padding: usize,
}

#[derive(Debug, Clone)]
struct SubNet {
    enc: Vec<ConvLayer>,
    dec: Vec<ConvLayer>,
    head: ConvLayer,
}

#[derive(Debug, Clone)]
pub struct Generator<T> {
    config: GeneratorConfig<T>,
    params: ParamSet<T>,
    subnets: Vec<SubNet>,
}

#[derive(Debug, Clone)]
pub struct Discriminator<T> {
    config: DiscriminatorConfig<T>,
    params: ParamSet<T>,
    layers: Vec<ConvLayer>,
    head: ConvLayer,
}

/// Batched pyramid levels, finest first: `levels()[j]` is `[N,3,h_j,w_j]`.
#[derive(Debug, Clone)]
pub struct PyramidBatch<T> {
    levels: Vec<Tensor<T>>,
}

impl<T: Scalar> PyramidBatch<T> {
    pub fn from_pyramids(pyramids: &[LaplacePyramid<T>]) -> Result<Self> {
        let first = pyramids
            .first()
            .ok_or_else(|| CoreError::InvalidArgument("empty pyramid batch".into()))?;
        let n_levels = first.num_levels();
        let mut levels = Vec::with_capacity(n_levels);
        for j in 0..n_levels {
            let imgs: Vec<Image<T>> = pyramids
                .iter()
                .map(|p| {
                    if p.num_levels() != n_levels {
                        return Err(CoreError::InvalidArgument(
                            "pyramids in a batch must share the level count".into(),
                        ));
                    }
                    Ok(p.levels()[j].clone())
                })
                .collect::<Result<_>>()?;
            levels.push(Image::batch_to_tensor(&imgs)?);
        }
        Ok(Self { levels })
    }

    pub fn levels(&self) -> &[Tensor<T>] {
        &self.levels
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn batch_size(&self) -> usize {
        self.levels[0].shape()[0]
    }

    /// Full-resolution patch dims (height, width).
    pub fn patch_dims(&self) -> (usize, usize) {
        let s = self.levels[0].shape();
        (s[2], s[3])
    }
}

/// Everything `Generator::forward` emits for one batch.
#[derive(Debug, Clone)]
pub struct GeneratorOutput {
    /// Upsampled sub-network outputs, `(level_index, node)`, level index
    /// descending from `levels` to 2. The node for level i has the dims of
    /// Gaussian level i-1 of a same-size target patch.
    pub level_preds: Vec<(u32, Var)>,
    /// Final output in `[0,1]`, same dims as the input patch.
    pub y: Var,
}

#[allow(clippy::too_many_arguments)]
fn init_conv<T: Scalar>(
    params: &mut ParamSet<T>,
    rng: &mut ChaCha8Rng,
    name: &str,
    out_ch: usize,
    in_ch: usize,
    k: usize,
    stride: usize,
    padding: usize,
    weight_scale: f64,
) -> Result<ConvLayer> {
    let fan_in = (in_ch * k * k) as f64;
    let bound = (6.0 / fan_in).sqrt() * weight_scale;
    let data: Vec<T> = (0..out_ch * in_ch * k * k)
        .map(|_| T::lit(rng.gen_range(-bound..bound)))
        .collect();
    let w = params.push(
        format!("{name}.weight"),
        Tensor::new(vec![out_ch, in_ch, k, k], data)?,
    )?;
    let b = params.push(format!("{name}.bias"), Tensor::zeros(&[out_ch]))?;
    Ok(ConvLayer {
        w,
        b,
        stride,
        padding,
    })
}

/// Deterministic generator construction from a seed.
pub fn build_generator<T: Scalar>(config: GeneratorConfig<T>, seed: u64) -> Result<Generator<T>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParamSet::new();
    let mut subnets = Vec::with_capacity(config.levels);

    for k in 1..=config.levels {
        let c = config.base_channels[k - 1];
        let in_ch = if k == 1 { CHANNELS } else { 2 * CHANNELS };
        let prefix = format!("gen.sub{k}");
        let mut enc = Vec::new();
        enc.push(init_conv(
            &mut params,
            &mut rng,
            &format!("{prefix}.enc0"),
            c,
            in_ch,
            3,
            1,
            1,
            1.0,
        )?);
        for d in 1..=config.encoder_depth {
            let (ic, oc) = if d == 1 { (c, 2 * c) } else { (2 * c, 2 * c) };
            enc.push(init_conv(
                &mut params,
                &mut rng,
                &format!("{prefix}.enc{d}"),
                oc,
                ic,
                3,
                2,
                1,
                1.0,
            )?);
        }
        let mut dec = Vec::new();
        for d in (0..config.encoder_depth).rev() {
            // input: upsampled previous features ++ encoder skip at depth d
            let up_ch = if d == config.encoder_depth - 1 { 2 * c } else { c };
            let skip_ch = if d == 0 { c } else { 2 * c };
            dec.push(init_conv(
                &mut params,
                &mut rng,
                &format!("{prefix}.dec{d}"),
                c,
                up_ch + skip_ch,
                3,
                1,
                1,
                1.0,
            )?);
        }
        // Small head initialization keeps the untrained cascade close to the
        // identity mapping its residual wiring encodes.
        let head = init_conv(
            &mut params,
            &mut rng,
            &format!("{prefix}.head"),
            CHANNELS,
            c,
            3,
            1,
            1,
            0.1,
        )?;
        subnets.push(SubNet { enc, dec, head });
    }

    Ok(Generator {
        config,
        params,
        subnets,
    })
}

pub fn build_discriminator<T: Scalar>(
    config: DiscriminatorConfig<T>,
    seed: u64,
) -> Result<Discriminator<T>> {
    if config.base_channels == 0 {
        return Err(CoreError::Config("discriminator channels must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParamSet::new();
    let c = config.base_channels;
    let widths = [
        (CHANNELS, c),
        (c, 2 * c),
        (2 * c, 4 * c),
        (4 * c, 4 * c),
    ];
    let mut layers = Vec::new();
    for (idx, (ic, oc)) in widths.iter().enumerate() {
        layers.push(init_conv(
            &mut params,
            &mut rng,
            &format!("disc.conv{idx}"),
            *oc,
            *ic,
            3,
            2,
            1,
            1.0,
        )?);
    }
    let head = init_conv(&mut params, &mut rng, "disc.head", 1, 4 * c, 1, 1, 0, 1.0)?;
    Ok(Discriminator {
        config,
        params,
        layers,
        head,
    })
}

fn apply_conv<T: Scalar>(
    tape: &mut Tape<T>,
    vars: &[Var],
    layer: ConvLayer,
    x: Var,
) -> Result<Var> {
    let y = tape.conv2d(x, vars[layer.w], layer.stride, layer.padding)?;
    tape.bias_add(y, vars[layer.b])
}

/// Upsample 2x and crop back to a reference node's spatial dims.
fn up_to_match<T: Scalar>(tape: &mut Tape<T>, x: Var, reference: Var) -> Result<Var> {
    let (h, w) = {
        let s = tape.shape(reference);
        (s[2], s[3])
    };
    let up = tape.upsample_bilinear2x(x)?;
    tape.crop2d(up, h, w)
}

impl<T: Scalar> Generator<T> {
    pub fn config(&self) -> &GeneratorConfig<T> {
        &self.config
    }

    pub fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.total_numel()
    }

    /// One line per parameter plus the total and its distance from the
    /// full-scale reference configuration.
    pub fn describe(&self) -> String {
        let mut out = String::new();
        for (name, t) in self.params.iter() {
            out.push_str(&format!("{name} {:?}\n", t.shape()));
        }
        let total = self.parameter_count();
        out.push_str(&format!(
            "total parameters: {total} (full-scale reference: {FULL_SCALE_PARAMS}, \
             this build is smaller by {})\n",
            FULL_SCALE_PARAMS.saturating_sub(total)
        ));
        out
    }

    /// Registers every parameter on the tape, as trainable leaves or frozen
    /// constants, in ParamSet order.
    pub fn stage(&self, tape: &mut Tape<T>, trainable: bool) -> Vec<Var> {
        (0..self.params.len())
            .map(|i| {
                let t = self.params.get(i).clone();
                if trainable {
                    tape.leaf(t)
                } else {
                    tape.constant(t)
                }
            })
            .collect()
    }

    /// Runs the cascade on a batched pyramid. `param_vars` must come from
    /// [`Generator::stage`] on the same tape.
    pub fn forward(
        &self,
        tape: &mut Tape<T>,
        param_vars: &[Var],
        batch: &PyramidBatch<T>,
    ) -> Result<GeneratorOutput> {
        if param_vars.len() != self.params.len() {
            return Err(CoreError::InvalidArgument(format!(
                "expected {} staged parameters, got {}",
                self.params.len(),
                param_vars.len()
            )));
        }
        if batch.num_levels() != self.config.levels {
            return Err(CoreError::InvalidArgument(format!(
                "pyramid has {} levels but the generator was built for {}",
                batch.num_levels(),
                self.config.levels
            )));
        }
        let (h, w) = batch.patch_dims();
        let min = self.config.min_input_edge();
        if h < min || w < min {
            return Err(CoreError::ImageTooSmall {
                height: h,
                width: w,
                min,
            });
        }

        let level_vars: Vec<Var> = batch
            .levels
            .iter()
            .map(|t| tape.constant(t.clone()))
            .collect();

        let slope = self.config.leaky_slope;
        let mut prev_up: Option<Var> = None;
        let mut level_preds = Vec::with_capacity(self.config.levels - 1);
        let mut y = None;

        for k in 1..=self.config.levels {
            let idx = self.config.levels - k; // 0-based pyramid level
            let level = level_vars[idx];
            let sub = &self.subnets[k - 1];

            let input = match prev_up {
                None => level,
                Some(u) => tape.concat_channels(level, u)?,
            };

            // encoder
            let mut feats = Vec::with_capacity(sub.enc.len());
            let mut x = input;
            for layer in &sub.enc {
                x = apply_conv(tape, param_vars, *layer, x)?;
                x = tape.leaky_relu(x, slope);
                feats.push(x);
            }
            // decoder with skip connections
            for (j, layer) in sub.dec.iter().enumerate() {
                let skip = feats[sub.enc.len() - 2 - j];
                let up = up_to_match(tape, x, skip)?;
                let cat = tape.concat_channels(up, skip)?;
                x = apply_conv(tape, param_vars, *layer, cat)?;
                x = tape.leaky_relu(x, slope);
            }
            let head = apply_conv(tape, param_vars, sub.head, x)?;

            // residual around the 3-channel base signal
            let base = match prev_up {
                None => level,
                Some(u) => tape.add(level, u)?,
            };
            let o = tape.add(head, base)?;

            if k < self.config.levels {
                let finer = level_vars[idx - 1];
                let up = up_to_match(tape, o, finer)?;
                prev_up = Some(up);
                level_preds.push(((idx + 1) as u32, up));
            } else {
                let shifted = tape.add_scalar(o, -T::lit(0.5));
                let scaled = tape.scale(shifted, T::lit(4.0));
                y = Some(tape.sigmoid(scaled));
            }
        }

        Ok(GeneratorOutput {
            level_preds,
            y: y.expect("cascade always produces a final output"),
        })
    }
}

impl<T: Scalar> Discriminator<T> {
    pub fn config(&self) -> &DiscriminatorConfig<T> {
        &self.config
    }

    pub fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.total_numel()
    }

    pub fn stage(&self, tape: &mut Tape<T>, trainable: bool) -> Vec<Var> {
        (0..self.params.len())
            .map(|i| {
                let t = self.params.get(i).clone();
                if trainable {
                    tape.leaf(t)
                } else {
                    tape.constant(t)
                }
            })
            .collect()
    }

    /// Maps an `[N,3,H,W]` batch to one logit per element (shape `[N]`).
    pub fn forward(&self, tape: &mut Tape<T>, param_vars: &[Var], images: Var) -> Result<Var> {
        if param_vars.len() != self.params.len() {
            return Err(CoreError::InvalidArgument(format!(
                "expected {} staged parameters, got {}",
                self.params.len(),
                param_vars.len()
            )));
        }
        let s = tape.shape(images).to_vec();
        if s.len() != 4 || s[1] != CHANNELS {
            return Err(CoreError::InvalidShape {
                shape: s,
                reason: "discriminator expects [N,3,H,W]".into(),
            });
        }
        let n = s[0];
        let mut x = images;
        for layer in &self.layers {
            x = apply_conv(tape, param_vars, *layer, x)?;
            x = tape.leaky_relu(x, self.config.leaky_slope);
        }
        let logits = apply_conv(tape, param_vars, self.head, x)?;
        let pooled = tape.global_avg_pool(logits)?;
        tape.reshape(pooled, &[n])
    }
}
