//! Shared helpers for the integration suites: finite-difference cases
//! covering every differentiable op and loss.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relight_core::autodiff::{Tape, Var};
use relight_core::error::Result;
use relight_core::gradcheck::finite_diff_check;
use relight_core::losses::{
    adversarial_generator_loss, discriminator_loss, l1_loss, pyramid_loss, ssim_index, ssim_loss,
    total_loss, LossWeights, PyramidTerm,
};
use relight_core::metrics::SsimParams;
use relight_core::tensor::Tensor;

pub fn uniform(shape: &[usize], lo: f64, hi: f64, seed: u64) -> Tensor<f64> {
    Tensor::random_uniform(shape, lo, hi, seed)
}

/// Values in `±[lo_abs, hi_abs]` — away from the kinks of abs/leaky_relu.
pub fn signed(shape: &[usize], lo_abs: f64, hi_abs: f64, seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_| {
        let mag = rng.gen_range(lo_abs..hi_abs);
        if rng.gen_bool(0.5) {
            mag
        } else {
            -mag
        }
    })
}

/// `base` plus sign-mixed offsets of magnitude `[lo_abs, hi_abs]`; keeps the
/// difference from `base` away from the L1 kink.
pub fn offset_from(base: &Tensor<f64>, lo_abs: f64, hi_abs: f64, seed: u64) -> Tensor<f64> {
    let off = signed(base.shape(), lo_abs, hi_abs, seed);
    Tensor::new(
        base.shape().to_vec(),
        base.data()
            .iter()
            .zip(off.data())
            .map(|(b, o)| b + o)
            .collect(),
    )
    .unwrap()
}

/// Points at least 0.05 away from the clamp bounds 0.25 / 0.75, on both
/// sides of each.
pub fn clamp_safe(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_| match rng.gen_range(0..3u8) {
        0 => rng.gen_range(0.05..0.20),
        1 => rng.gen_range(0.30..0.70),
        _ => rng.gen_range(0.80..0.95),
    })
}

/// Reduces any node to a scalar with element-distinct weights so the
/// finite-difference sweep sees every input coordinate.
pub fn readout(tape: &mut Tape<f64>, v: Var) -> Result<Var> {
    let shape = tape.shape(v).to_vec();
    let weights = tape.constant(uniform(&shape, 0.5, 1.5, 0x4242));
    let weighted = tape.mul(v, weights)?;
    Ok(tape.mean(weighted))
}

pub type PointFn = Box<dyn Fn(u64) -> Tensor<f64>>;
pub type BuildFn = Box<dyn Fn(&mut Tape<f64>, Var) -> Result<Var>>;

/// One finite-difference case: a point generator, a graph builder from the
/// leaf to a scalar root, and the step size to difference with.
pub struct Case {
    pub name: &'static str,
    pub eps: f64,
    pub point: PointFn,
    pub build: BuildFn,
}

pub fn run_case(case: &Case, seeds: u64, tol: f64) {
    for seed in 0..seeds {
        let point = (case.point)(seed);
        let loss_fn = |p: &Tensor<f64>| -> Result<(f64, Tensor<f64>)> {
            let mut tape = Tape::new();
            let x = tape.leaf(p.clone());
            let root = (case.build)(&mut tape, x)?;
            tape.backward(root)?;
            let loss = tape.scalar_value(root);
            let grad = Tensor::new(
                p.shape().to_vec(),
                tape.grad(x).expect("leaf gradient").to_vec(),
            )?;
            Ok((loss, grad))
        };
        let report = finite_diff_check(loss_fn, &point, case.eps).unwrap();
        assert!(
            report.non_finite.is_empty(),
            "{} seed {seed}: non-finite perturbations at {:?}",
            case.name,
            report.non_finite
        );
        assert!(
            report.max_rel_err < tol,
            "{} seed {seed}: max rel err {:.3e} at flat index {}",
            case.name,
            report.max_rel_err,
            report.worst_index
        );
    }
}

/// Every differentiable op and every loss, each reduced to a scalar root.
pub fn all_cases() -> Vec<Case> {
    let mut cases: Vec<Case> = Vec::new();
    let mut push = |name: &'static str, point: PointFn, build: BuildFn| {
        cases.push(Case {
            name,
            eps: 1e-5,
            point,
            build,
        });
    };

    // elementwise arithmetic
    push(
        "add_lhs",
        Box::new(|s| uniform(&[2, 3, 4, 5], 0.0, 1.0, s)),
        Box::new(|t, x| {
            let c = t.constant(uniform(&[2, 3, 4, 5], 0.0, 1.0, 71));
            let v = t.add(x, c)?;
            readout(t, v)
        }),
    );
    push(
        "add_self_accumulates",
        Box::new(|s| uniform(&[3, 7], 0.0, 1.0, s)),
        Box::new(|t, x| {
            let v = t.add(x, x)?;
            readout(t, v)
        }),
    );
    push(
        "sub_lhs",
        Box::new(|s| uniform(&[2, 3, 4, 5], 0.0, 1.0, s)),
        Box::new(|t, x| {
            let c = t.constant(uniform(&[2, 3, 4, 5], 0.0, 1.0, 72));
            let v = t.sub(x, c)?;
            readout(t, v)
        }),
    );
    push(
        "sub_rhs",
        Box::new(|s| uniform(&[2, 3, 4, 5], 0.0, 1.0, s)),
        Box::new(|t, x| {
            let c = t.constant(uniform(&[2, 3, 4, 5], 0.0, 1.0, 73));
            let v = t.sub(c, x)?;
            readout(t, v)
        }),
    );
    push(
        "mul",
        Box::new(|s| uniform(&[2, 3, 4, 5], 0.0, 1.0, s)),
        Box::new(|t, x| {
            let c = t.constant(uniform(&[2, 3, 4, 5], -1.0, 1.0, 74));
            let v = t.mul(x, c)?;
            readout(t, v)
        }),
    );
    push(
        "div_numerator",
        Box::new(|s| uniform(&[2, 3, 4, 5], 0.0, 1.0, s)),
        Box::new(|t, x| {
            let c = t.constant(uniform(&[2, 3, 4, 5], 0.5, 1.5, 75));
            let v = t.div(x, c)?;
            readout(t, v)
        }),
    );
    push(
        "div_denominator",
        Box::new(|s| uniform(&[2, 3, 4, 5], 0.5, 1.5, s)),
        Box::new(|t, x| {
            let c = t.constant(uniform(&[2, 3, 4, 5], 0.0, 1.0, 76));
            let v = t.div(c, x)?;
            readout(t, v)
        }),
    );
    push(
        "neg_scale_add_scalar",
        Box::new(|s| uniform(&[4, 9], 0.0, 1.0, s)),
        Box::new(|t, x| {
            let shifted = t.add_scalar(x, 0.3);
            let negated = t.neg(shifted);
            let scaled = t.scale(negated, 1.7);
            readout(t, scaled)
        }),
    );

    // nonlinearities
    push(
        "abs",
        Box::new(|s| signed(&[3, 5, 4], 0.2, 1.0, s)),
        Box::new(|t, x| {
            let v = t.abs(x);
            readout(t, v)
        }),
    );
    push(
        "sigmoid",
        Box::new(|s| uniform(&[2, 3, 5, 5], -4.0, 4.0, s)),
        Box::new(|t, x| {
            let v = t.sigmoid(x);
            readout(t, v)
        }),
    );
    push(
        "leaky_relu",
        Box::new(|s| signed(&[2, 4, 6, 6], 0.2, 1.0, s)),
        Box::new(|t, x| {
            let v = t.leaky_relu(x, 0.2);
            readout(t, v)
        }),
    );
    push(
        "clamp",
        Box::new(|s| clamp_safe(&[3, 6, 6], s)),
        Box::new(|t, x| {
            let v = t.clamp(x, 0.25, 0.75);
            readout(t, v)
        }),
    );
    push(
        "ln",
        Box::new(|s| uniform(&[2, 5, 5], 0.5, 2.0, s)),
        Box::new(|t, x| {
            let v = t.ln(x);
            readout(t, v)
        }),
    );

    // reductions
    push(
        "mean",
        Box::new(|s| uniform(&[3, 4, 5], 0.0, 1.0, s)),
        Box::new(|t, x| Ok(t.mean(x))),
    );
    push(
        "sum",
        Box::new(|s| uniform(&[3, 4, 5], 0.0, 1.0, s)),
        Box::new(|t, x| {
            let v = t.sum(x);
            Ok(t.scale(v, 0.01))
        }),
    );

    // convolution, every geometry the models use
    push(
        "conv2d_input_stride1_pad1",
        Box::new(|s| uniform(&[1, 2, 7, 6], 0.0, 1.0, s)),
        Box::new(|t, x| {
            let k = t.constant(uniform(&[3, 2, 3, 3], -0.5, 0.5, 81));
            let v = t.conv2d(x, k, 1, 1)?;
            readout(t, v)
        }),
    );
    push(
        "conv2d_input_stride2_pad0",
        Box::new(|s| uniform(&[2, 2, 8, 8], 0.0, 1.0, s)),
        Box::new(|t, x| {
            let k = t.constant(uniform(&[4, 2, 3, 3], -0.5, 0.5, 82));
            let v = t.conv2d(x, k, 2, 0)?;
            readout(t, v)
        }),
    );
    push(
        "conv2d_input_stride2_pad1",
        Box::new(|s| uniform(&[1, 3, 9, 7], 0.0, 1.0, s)),
        Box::new(|t, x| {
            let k = t.constant(uniform(&[2, 3, 3, 3], -0.5, 0.5, 83));
            let v = t.conv2d(x, k, 2, 1)?;
            readout(t, v)
        }),
    );
    push(
        "conv2d_kernel",
        Box::new(|s| uniform(&[3, 2, 3, 3], -0.5, 0.5, s)),
        Box::new(|t, x| {
            let input = t.constant(uniform(&[2, 2, 6, 7], 0.0, 1.0, 84));
            let v = t.conv2d(input, x, 1, 1)?;
            readout(t, v)
        }),
    );
    push(
        "conv2d_1x1_head",
        Box::new(|s| uniform(&[1, 4, 5, 5], 0.0, 1.0, s)),
        Box::new(|t, x| {
            let k = t.constant(uniform(&[2, 4, 1, 1], -0.5, 0.5, 85));
            let v = t.conv2d(x, k, 1, 0)?;
            readout(t, v)
        }),
    );
    push(
        "bias_add_bias",
        Box::new(|s| uniform(&[4], -0.5, 0.5, s)),
        Box::new(|t, x| {
            let input = t.constant(uniform(&[2, 4, 5, 6], 0.0, 1.0, 86));
            let v = t.bias_add(input, x)?;
            readout(t, v)
        }),
    );
    push(
        "bias_add_input",
        Box::new(|s| uniform(&[2, 4, 5, 6], 0.0, 1.0, s)),
        Box::new(|t, x| {
            let bias = t.constant(uniform(&[4], -0.5, 0.5, 87));
            let v = t.bias_add(x, bias)?;
            readout(t, v)
        }),
    );

    // resampling and plumbing
    push(
        "upsample_bilinear2x",
        Box::new(|s| uniform(&[1, 3, 5, 6], 0.0, 1.0, s)),
        Box::new(|t, x| {
            let v = t.upsample_bilinear2x(x)?;
            readout(t, v)
        }),
    );
    push(
        "crop2d",
        Box::new(|s| uniform(&[1, 2, 7, 8], 0.0, 1.0, s)),
        Box::new(|t, x| {
            let v = t.crop2d(x, 5, 6)?;
            readout(t, v)
        }),
    );
    push(
        "upsample_then_crop",
        Box::new(|s| uniform(&[1, 3, 5, 5], 0.0, 1.0, s)),
        Box::new(|t, x| {
            let up = t.upsample_bilinear2x(x)?;
            let v = t.crop2d(up, 9, 9)?;
            readout(t, v)
        }),
    );
    push(
        "concat_channels_lhs",
        Box::new(|s| uniform(&[1, 2, 4, 4], 0.0, 1.0, s)),
        Box::new(|t, x| {
            let c = t.constant(uniform(&[1, 3, 4, 4], 0.0, 1.0, 88));
            let v = t.concat_channels(x, c)?;
            readout(t, v)
        }),
    );
    push(
        "concat_channels_rhs",
        Box::new(|s| uniform(&[1, 3, 4, 4], 0.0, 1.0, s)),
        Box::new(|t, x| {
            let c = t.constant(uniform(&[1, 2, 4, 4], 0.0, 1.0, 89));
            let v = t.concat_channels(c, x)?;
            readout(t, v)
        }),
    );
    push(
        "reshape",
        Box::new(|s| uniform(&[2, 3, 4, 2], 0.0, 1.0, s)),
        Box::new(|t, x| {
            let v = t.reshape(x, &[6, 8])?;
            readout(t, v)
        }),
    );
    push(
        "global_avg_pool",
        Box::new(|s| uniform(&[2, 4, 6, 6], 0.0, 1.0, s)),
        Box::new(|t, x| {
            let v = t.global_avg_pool(x)?;
            readout(t, v)
        }),
    );

    // losses
    push(
        "l1_loss",
        Box::new(|s| offset_from(&uniform(&[1, 3, 8, 8], 0.2, 0.8, 90), 0.1, 0.3, s)),
        Box::new(|t, x| {
            let target = t.constant(uniform(&[1, 3, 8, 8], 0.2, 0.8, 90));
            l1_loss(t, x, target)
        }),
    );
    for (level, name) in [(2u32, "pyramid_loss_l2"), (3, "pyramid_loss_l3"), (4, "pyramid_loss_l4")] {
        push(
            name,
            Box::new(move |s| {
                offset_from(&uniform(&[1, 3, 8, 8], 0.2, 0.8, 91 + u64::from(level)), 0.1, 0.2, s)
            }),
            Box::new(move |t, x| {
                let terms: Vec<PyramidTerm> = (2..=4u32)
                    .map(|l| {
                        let target = t.constant(uniform(&[1, 3, 8, 8], 0.2, 0.8, 91 + u64::from(l)));
                        let pred = if l == level {
                            x
                        } else {
                            t.constant(offset_from(
                                &uniform(&[1, 3, 8, 8], 0.2, 0.8, 91 + u64::from(l)),
                                0.1,
                                0.2,
                                500 + u64::from(l),
                            ))
                        };
                        PyramidTerm {
                            level: l,
                            pred,
                            target,
                        }
                    })
                    .collect();
                Ok(pyramid_loss(t, &terms)?.total)
            }),
        );
    }
    push(
        "adversarial_generator_normalized",
        Box::new(|s| uniform(&[4], -3.0, 3.0, s)),
        Box::new(|t, x| Ok(adversarial_generator_loss(t, x, 16, 16, 4)?.normalized)),
    );
    push(
        "adversarial_generator_raw",
        Box::new(|s| uniform(&[4], -3.0, 3.0, s)),
        Box::new(|t, x| {
            let raw = adversarial_generator_loss(t, x, 16, 16, 4)?.raw;
            Ok(t.scale(raw, 1.0 / 3072.0))
        }),
    );
    push(
        "discriminator_loss_real_side",
        Box::new(|s| uniform(&[3], -3.0, 3.0, s)),
        Box::new(|t, x| {
            let fake = t.constant(uniform(&[3], -3.0, 3.0, 95));
            discriminator_loss(t, x, fake)
        }),
    );
    push(
        "discriminator_loss_fake_side",
        Box::new(|s| uniform(&[3], -3.0, 3.0, s)),
        Box::new(|t, x| {
            let real = t.constant(uniform(&[3], -3.0, 3.0, 96));
            discriminator_loss(t, real, x)
        }),
    );
    push(
        "total_loss_composite",
        Box::new(|s| offset_from(&uniform(&[1, 3, 16, 16], 0.25, 0.75, 97), 0.05, 0.15, s)),
        Box::new(|t, x| {
            let target = t.constant(uniform(&[1, 3, 16, 16], 0.25, 0.75, 97));
            let terms = [PyramidTerm {
                level: 2,
                pred: x,
                target,
            }];
            let pyr = pyramid_loss(t, &terms)?;
            let rec = l1_loss(t, x, target)?;
            let ssim = ssim_loss(t, x, target, &SsimParams::default())?;
            total_loss(t, pyr.total, rec, ssim, None, &LossWeights::default())
        }),
    );

    // The SSIM gradient field on a 16x16 patch always has a few coordinates
    // where overlapping-window contributions cancel to ~1e-9 — below what a
    // central difference of an O(1) value can certify at 1e-4 relative error
    // for any admissible step. A small exact-linear probe term lifts every
    // coordinate above the measurement floor; its derivative carries no
    // truncation or roundoff of its own, so any mismatch still attributes
    // entirely to the SSIM backward pass.
    cases.push(Case {
        name: "ssim_index_windowed",
        eps: 1e-4,
        point: Box::new(|s| offset_from(&uniform(&[1, 3, 16, 16], 0.25, 0.75, 93), 0.05, 0.15, s)),
        build: Box::new(|t, x| {
            let target = t.constant(uniform(&[1, 3, 16, 16], 0.25, 0.75, 93));
            let ssim = ssim_index(t, x, target, &SsimParams::default())?;
            lift(t, ssim, x)
        }),
    });
    cases.push(Case {
        name: "ssim_loss_windowed",
        eps: 1e-4,
        point: Box::new(|s| offset_from(&uniform(&[1, 3, 16, 16], 0.25, 0.75, 94), 0.05, 0.15, s)),
        build: Box::new(|t, x| {
            let target = t.constant(uniform(&[1, 3, 16, 16], 0.25, 0.75, 94));
            let ssim = ssim_loss(t, x, target, &SsimParams::default())?;
            lift(t, ssim, x)
        }),
    });

    cases
}

/// `root + 0.02 * mean(w ⊙ x)` with fixed positive weights `w`.
fn lift(tape: &mut Tape<f64>, root: Var, x: Var) -> Result<Var> {
    let shape = tape.shape(x).to_vec();
    let w = tape.constant(uniform(&shape, 0.5, 1.5, 0x51F7));
    let wx = tape.mul(x, w)?;
    let probe = tape.mean(wx);
    let scaled = tape.scale(probe, 0.02);
    tape.add(root, scaled)
}

/// The full finite-difference sweep; `seeds` points per case.
pub fn run_op_and_loss_suite(seeds: u64, tol: f64) {
    for case in all_cases() {
        run_case(&case, seeds, tol);
    }
}
