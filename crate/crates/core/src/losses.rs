//! The four training losses and their weighted combination.
//!
//! All losses are built on [`Tape`] ops so gradients flow end to end,
//! including through the windowed SSIM term. Reductions are means, keeping
//! magnitudes comparable across the 128- and 256-pixel training phases.

use crate::autodiff::{Tape, Var};
use crate::error::{CoreError, Result};
use crate::metrics::SsimParams;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Sigmoid outputs are clamped to `[CLAMP, 1-CLAMP]` before any log.
const CLAMP: f64 = 1e-7;

/// Regularization weights of the final objective.
#[derive(Debug, Clone, Copy)]
pub struct LossWeights<T> {
    pub alpha: T,
    pub beta: T,
    pub gamma: T,
    pub delta: T,
}

impl<T: Scalar> Default for LossWeights<T> {
    fn default() -> Self {
        Self {
            alpha: T::lit(0.25),
            beta: T::lit(0.25),
            gamma: T::one(),
            delta: T::lit(0.25),
        }
    }
}

impl<T: Scalar> LossWeights<T> {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("delta", self.delta),
        ] {
            if !(v.is_finite() && v >= T::zero()) {
                return Err(CoreError::InvalidArgument(format!(
                    "loss weight {name} must be a non-negative finite real, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Scalar loss values for one step, as logged to the training CSV.
#[derive(Debug, Clone)]
pub struct LossReport<T> {
    pub pyr: T,
    pub rec: T,
    pub ssim: T,
    /// Per-pixel-normalized adversarial term (what the optimizer consumes).
    pub adv: T,
    /// Raw `-3hwn log(S(D(Y)))` value, logged for reference.
    pub adv_raw: T,
    pub total: T,
    /// Unweighted per-level L1 values, index order 2..=levels.
    pub pyr_levels: Vec<T>,
}

impl<T: Scalar> LossReport<T> {
    /// Checks finiteness and the weighted-sum identity within 1e-9.
    pub fn validate(&self, weights: &LossWeights<T>) -> Result<()> {
        for (name, v) in [
            ("pyr", self.pyr),
            ("rec", self.rec),
            ("ssim", self.ssim),
            ("adv", self.adv),
            ("adv_raw", self.adv_raw),
            ("total", self.total),
        ] {
            if !v.is_finite() {
                return Err(CoreError::NonFinite {
                    context: format!("loss component {name}"),
                });
            }
        }
        let want = weights.alpha * self.pyr
            + weights.beta * self.rec
            + weights.gamma * self.ssim
            + weights.delta * self.adv;
        if (want - self.total).abs() > T::lit(1e-9) {
            return Err(CoreError::InvalidArgument(format!(
                "loss report total {} disagrees with weighted sum {}",
                self.total, want
            )));
        }
        Ok(())
    }
}

/// Combines component values into the weighted total, rejecting non-finite
/// inputs (a non-finite component aborts the training step upstream).
pub fn weighted_total<T: Scalar>(
    pyr: T,
    rec: T,
    ssim: T,
    adv: T,
    weights: &LossWeights<T>,
) -> Result<T> {
    weights.validate()?;
    for (name, v) in [("pyr", pyr), ("rec", rec), ("ssim", ssim), ("adv", adv)] {
        if !v.is_finite() {
            return Err(CoreError::NonFinite {
                context: format!("loss component {name}"),
            });
        }
    }
    Ok(weights.alpha * pyr + weights.beta * rec + weights.gamma * ssim + weights.delta * adv)
}

/// Mean absolute difference over all elements.
pub fn l1_loss<T: Scalar>(tape: &mut Tape<T>, pred: Var, target: Var) -> Result<Var> {
    let d = tape.sub(pred, target)?;
    let a = tape.abs(d);
    Ok(tape.mean(a))
}

/// Pixel-wise error on the final full-resolution output; identical to
/// [`l1_loss`] by definition.
pub fn reconstruction_loss<T: Scalar>(tape: &mut Tape<T>, pred: Var, target: Var) -> Result<Var> {
    l1_loss(tape, pred, target)
}

/// One pyramid-loss term: level index (2-based) with its prediction and
/// Gaussian target.
#[derive(Debug, Clone, Copy)]
pub struct PyramidTerm {
    pub level: u32,
    pub pred: Var,
    pub target: Var,
}

/// Result of [`pyramid_loss`]: the weighted sum plus per-level raw L1 nodes
/// in index order.
#[derive(Debug, Clone)]
pub struct PyramidLoss {
    pub total: Var,
    pub per_level: Vec<(u32, Var)>,
}

/// Weighted multi-scale L1: `sum over i of 2^(i-2) * L1(target_i, pred_i)`.
///
/// Terms may arrive in any storage order; weights bind to the level index.
/// The indices must be exactly `2..=max` for some `max >= 2` (the standard
/// four-level model supplies 2, 3, 4 with weights 1, 2, 4).
pub fn pyramid_loss<T: Scalar>(tape: &mut Tape<T>, terms: &[PyramidTerm]) -> Result<PyramidLoss> {
    if terms.is_empty() {
        return Err(CoreError::InvalidArgument(
            "pyramid_loss needs at least one level term".into(),
        ));
    }
    let mut seen: Vec<u32> = terms.iter().map(|t| t.level).collect();
    seen.sort_unstable();
    let want: Vec<u32> = (2..2 + terms.len() as u32).collect();
    if seen != want {
        return Err(CoreError::InvalidArgument(format!(
            "pyramid_loss level indices must be exactly {want:?}, got {seen:?}"
        )));
    }

    let mut per_level = Vec::with_capacity(terms.len());
    let mut total: Option<Var> = None;
    let mut sorted: Vec<&PyramidTerm> = terms.iter().collect();
    sorted.sort_by_key(|t| t.level);
    for t in sorted {
        let l1 = l1_loss(tape, t.pred, t.target)?;
        per_level.push((t.level, l1));
        let weight = T::lit(f64::from(1u32 << (t.level - 2)));
        let weighted = tape.scale(l1, weight);
        total = Some(match total {
            None => weighted,
            Some(acc) => tape.add(acc, weighted)?,
        });
    }
    Ok(PyramidLoss {
        total: total.unwrap(),
        per_level,
    })
}

/// Differentiable mean SSIM between two `[N,C,H,W]` tensors in `[0,1]`,
/// Gaussian-windowed over valid positions (same statistic as
/// [`crate::metrics::ssim`]).
pub fn ssim_index<T: Scalar>(
    tape: &mut Tape<T>,
    a: Var,
    b: Var,
    params: &SsimParams<T>,
) -> Result<Var> {
    let sa = tape.shape(a).to_vec();
    if sa.len() != 4 {
        return Err(CoreError::InvalidShape {
            shape: sa,
            reason: "ssim expects [N,C,H,W]".into(),
        });
    }
    if tape.shape(b) != sa.as_slice() {
        return Err(CoreError::shape(&sa, tape.shape(b), "ssim"));
    }
    let (n, c, h, w) = (sa[0], sa[1], sa[2], sa[3]);
    let k = params.window_size;
    if h < k || w < k {
        return Err(CoreError::ImageTooSmall {
            height: h,
            width: w,
            min: k,
        });
    }

    let taps = params.window_taps();
    let kv = tape.constant(Tensor::new(vec![1, 1, k, 1], taps.clone())?);
    let kh = tape.constant(Tensor::new(vec![1, 1, 1, k], taps)?);
    let flat = [n * c, 1, h, w];

    let a = tape.reshape(a, &flat)?;
    let b = tape.reshape(b, &flat)?;
    let window = |tape: &mut Tape<T>, x: Var| -> Result<Var> {
        let v = tape.conv2d(x, kv, 1, 0)?;
        tape.conv2d(v, kh, 1, 0)
    };

    let mu_a = window(tape, a)?;
    let mu_b = window(tape, b)?;
    let aa = tape.mul(a, a)?;
    let bb = tape.mul(b, b)?;
    let ab = tape.mul(a, b)?;
    let m_aa = window(tape, aa)?;
    let m_bb = window(tape, bb)?;
    let m_ab = window(tape, ab)?;

    let mu_aa = tape.mul(mu_a, mu_a)?;
    let mu_bb = tape.mul(mu_b, mu_b)?;
    let mu_ab = tape.mul(mu_a, mu_b)?;
    let var_a = tape.sub(m_aa, mu_aa)?;
    let var_b = tape.sub(m_bb, mu_bb)?;
    let cov = tape.sub(m_ab, mu_ab)?;

    let (c1, c2) = (params.c1(), params.c2());
    let two = T::lit(2.0);
    let lum = tape.scale(mu_ab, two);
    let lum = tape.add_scalar(lum, c1);
    let str_ = tape.scale(cov, two);
    let str_ = tape.add_scalar(str_, c2);
    let num = tape.mul(lum, str_)?;

    let den_l = tape.add(mu_aa, mu_bb)?;
    let den_l = tape.add_scalar(den_l, c1);
    let den_s = tape.add(var_a, var_b)?;
    let den_s = tape.add_scalar(den_s, c2);
    let den = tape.mul(den_l, den_s)?;

    let map = tape.div(num, den)?;
    Ok(tape.mean(map))
}

/// `(1 - SSIM(pred, target)) / 2`: zero at perfection, bounded by 1.
pub fn ssim_loss<T: Scalar>(
    tape: &mut Tape<T>,
    pred: Var,
    target: Var,
    params: &SsimParams<T>,
) -> Result<Var> {
    let s = ssim_index(tape, pred, target, params)?;
    let neg = tape.scale(s, -T::one());
    let one_minus = tape.add_scalar(neg, T::one());
    Ok(tape.scale(one_minus, T::lit(0.5)))
}

/// Both scales of the adversarial generator term.
#[derive(Debug, Clone, Copy)]
pub struct AdvLoss {
    /// `-3 h w n * mean(log(sigmoid(logit)))` — the textbook scale.
    pub raw: Var,
    /// `raw / (3 h w n)` — what the optimizer consumes.
    pub normalized: Var,
}

/// Generator-side adversarial loss over discriminator logits. `h`/`w` are
/// the final-output patch dims, `n_levels` the pyramid level count.
pub fn adversarial_generator_loss<T: Scalar>(
    tape: &mut Tape<T>,
    disc_logits: Var,
    h: usize,
    w: usize,
    n_levels: usize,
) -> Result<AdvLoss> {
    if h == 0 || w == 0 || n_levels == 0 {
        return Err(CoreError::InvalidArgument(
            "adversarial loss scale requires positive h, w, n".into(),
        ));
    }
    if !tape.value(disc_logits).is_finite() {
        return Err(CoreError::NonFinite {
            context: "discriminator logits".into(),
        });
    }
    let s = tape.sigmoid(disc_logits);
    let s = tape.clamp(s, T::lit(CLAMP), T::one() - T::lit(CLAMP));
    let l = tape.ln(s);
    let m = tape.mean(l);
    let normalized = tape.scale(m, -T::one());
    let scale = T::from_usize(3 * h * w * n_levels).unwrap();
    let raw = tape.scale(m, -scale);
    Ok(AdvLoss { raw, normalized })
}

/// Standard discriminator objective:
/// `-mean(log S(real)) - mean(log(1 - S(fake)))`.
pub fn discriminator_loss<T: Scalar>(
    tape: &mut Tape<T>,
    real_logits: Var,
    fake_logits: Var,
) -> Result<Var> {
    if tape.value(real_logits).numel() == 0 || tape.value(fake_logits).numel() == 0 {
        return Err(CoreError::InvalidArgument(
            "discriminator loss needs non-empty batches".into(),
        ));
    }
    let lo = T::lit(CLAMP);
    let hi = T::one() - T::lit(CLAMP);

    let sr = tape.sigmoid(real_logits);
    let sr = tape.clamp(sr, lo, hi);
    let lr = tape.ln(sr);
    let mr = tape.mean(lr);

    let sf = tape.sigmoid(fake_logits);
    let sf = tape.clamp(sf, lo, hi);
    let neg_sf = tape.scale(sf, -T::one());
    let one_minus = tape.add_scalar(neg_sf, T::one());
    let lf = tape.ln(one_minus);
    let mf = tape.mean(lf);

    let s = tape.add(mr, mf)?;
    Ok(tape.scale(s, -T::one()))
}

/// Weighted total on the tape. `adv` is the normalized adversarial node, or
/// `None` when the discriminator is disabled (the delta term is then zero).
pub fn total_loss<T: Scalar>(
    tape: &mut Tape<T>,
    pyr: Var,
    rec: Var,
    ssim: Var,
    adv: Option<Var>,
    weights: &LossWeights<T>,
) -> Result<Var> {
    weights.validate()?;
    for (name, v) in [("pyr", pyr), ("rec", rec), ("ssim", ssim)] {
        if tape.value(v).numel() != 1 {
            return Err(CoreError::InvalidArgument(format!(
                "loss component {name} must be scalar"
            )));
        }
    }
    let a = tape.scale(pyr, weights.alpha);
    let b = tape.scale(rec, weights.beta);
    let g = tape.scale(ssim, weights.gamma);
    let mut total = tape.add(a, b)?;
    total = tape.add(total, g)?;
    if let Some(adv) = adv {
        let d = tape.scale(adv, weights.delta);
        total = tape.add(total, d)?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics;
    use crate::image::Image;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rt(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
        let n: usize = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn l1_trivial_values() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::filled(&[4], 1.0f64));
        let z = tape.constant(Tensor::filled(&[4], 0.0f64));
        let same = l1_loss(&mut tape, a, a).unwrap();
        assert_eq!(tape.scalar_value(same), 0.0);
        let one = l1_loss(&mut tape, a, z).unwrap();
        assert_eq!(tape.scalar_value(one), 1.0);
    }

    #[test]
    fn l1_matches_elementwise_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (ta, tb) = (rt(&[2, 3, 4, 4], &mut rng), rt(&[2, 3, 4, 4], &mut rng));
        let want = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(x, y)| (x - y).abs())
            .sum::<f64>()
            / ta.numel() as f64;
        let mut tape = Tape::new();
        let a = tape.constant(ta);
        let b = tape.constant(tb);
        let l = l1_loss(&mut tape, a, b).unwrap();
        assert!((tape.scalar_value(l) - want).abs() < 1e-12);
    }

    #[test]
    fn unit_level_losses_sum_to_seven() {
        // per-level L1 of exactly 1.0 each -> 1 + 2 + 4
        let mut tape = Tape::new();
        let mut terms = Vec::new();
        for (level, side) in [(2u32, 8usize), (3, 4), (4, 2)] {
            let pred = tape.constant(Tensor::filled(&[1, 3, side, side], 1.0f64));
            let target = tape.constant(Tensor::filled(&[1, 3, side, side], 0.0f64));
            terms.push(PyramidTerm {
                level,
                pred,
                target,
            });
        }
        let out = pyramid_loss(&mut tape, &terms).unwrap();
        assert_eq!(tape.scalar_value(out.total), 7.0);
        for (_, v) in &out.per_level {
            assert_eq!(tape.scalar_value(*v), 1.0);
        }
    }

    #[test]
    fn pyramid_loss_matches_scripted_weighted_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut tape = Tape::new();
        let mut terms = Vec::new();
        let mut want = 0.0;
        for (level, side) in [(2u32, 8usize), (3, 4), (4, 2)] {
            let (tp, tt) = (rt(&[1, 3, side, side], &mut rng), rt(&[1, 3, side, side], &mut rng));
            let l1 = tp
                .data()
                .iter()
                .zip(tt.data())
                .map(|(x, y)| (x - y).abs())
                .sum::<f64>()
                / tp.numel() as f64;
            want += 2f64.powi(level as i32 - 2) * l1;
            let pred = tape.constant(tp);
            let target = tape.constant(tt);
            terms.push(PyramidTerm {
                level,
                pred,
                target,
            });
        }
        let out = pyramid_loss(&mut tape, &terms).unwrap();
        assert!((tape.scalar_value(out.total) - want).abs() < 1e-10);
    }

    #[test]
    fn pyramid_loss_is_storage_order_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut tape = Tape::new();
        let mut terms = Vec::new();
        for (level, side) in [(2u32, 8usize), (3, 4), (4, 2)] {
            let pred = tape.constant(rt(&[1, 3, side, side], &mut rng));
            let target = tape.constant(rt(&[1, 3, side, side], &mut rng));
            terms.push(PyramidTerm {
                level,
                pred,
                target,
            });
        }
        let fwd = pyramid_loss(&mut tape, &terms).unwrap();
        terms.reverse();
        let rev = pyramid_loss(&mut tape, &terms).unwrap();
        assert_eq!(tape.scalar_value(fwd.total), tape.scalar_value(rev.total));
    }

    #[test]
    fn pyramid_loss_rejects_bad_level_sets() {
        let mut tape = Tape::new();
        let v = tape.constant(Tensor::filled(&[1, 3, 2, 2], 0.0f64));
        let t = |level| PyramidTerm {
            level,
            pred: v,
            target: v,
        };
        assert!(pyramid_loss(&mut tape, &[]).is_err());
        assert!(pyramid_loss(&mut tape, &[t(2), t(4)]).is_err()); // gap
        assert!(pyramid_loss(&mut tape, &[t(3), t(4)]).is_err()); // must start at 2
        assert!(pyramid_loss(&mut tape, &[t(2), t(2), t(3)]).is_err()); // dup
    }

    #[test]
    fn reconstruction_is_l1_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut tape = Tape::new();
        let a = tape.constant(rt(&[1, 3, 6, 6], &mut rng));
        let b = tape.constant(rt(&[1, 3, 6, 6], &mut rng));
        let r = reconstruction_loss(&mut tape, a, b).unwrap();
        let l = l1_loss(&mut tape, a, b).unwrap();
        assert_eq!(tape.scalar_value(r), tape.scalar_value(l));
    }

    #[test]
    fn ssim_loss_zero_on_identical_and_matches_metric() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let img_a = Image::from_fn(16, 16, |_, _, _| rng.gen_range(0.0..1.0));
        let img_b = Image::from_fn(16, 16, |_, _, _| rng.gen_range(0.0..1.0));
        let params = SsimParams::<f64>::default();

        let mut tape = Tape::new();
        let a = tape.constant(img_a.to_tensor().reshaped(&[1, 3, 16, 16]).unwrap());
        let b = tape.constant(img_b.to_tensor().reshaped(&[1, 3, 16, 16]).unwrap());

        let zero = ssim_loss(&mut tape, a, a, &params).unwrap();
        assert!(tape.scalar_value(zero).abs() < 1e-12);

        let loss = ssim_loss(&mut tape, a, b, &params).unwrap();
        let metric = metrics::ssim(&img_a, &img_b, &params).unwrap();
        let want = (1.0 - metric) / 2.0;
        assert!(
            (tape.scalar_value(loss) - want).abs() < 1e-9,
            "{} vs {}",
            tape.scalar_value(loss),
            want
        );
        assert!((0.0..=1.0).contains(&tape.scalar_value(loss)));
    }

    #[test]
    fn ssim_loss_rejects_small_images() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::filled(&[1, 3, 8, 8], 0.5f64));
        assert!(ssim_loss(&mut tape, a, a, &SsimParams::default()).is_err());
    }

    #[test]
    fn adversarial_zero_logit_analytic() {
        let (h, w, n) = (8usize, 8usize, 4usize);
        let mut tape = Tape::new();
        let logits = tape.constant(Tensor::filled(&[2], 0.0f64));
        let adv = adversarial_generator_loss(&mut tape, logits, h, w, n).unwrap();
        let ln2 = std::f64::consts::LN_2;
        let want_raw = 3.0 * (h * w * n) as f64 * ln2;
        assert!((tape.scalar_value(adv.raw) - want_raw).abs() < 1e-9);
        assert!((tape.scalar_value(adv.normalized) - ln2).abs() < 1e-12);
    }

    #[test]
    fn adversarial_confident_real_limit_is_near_zero() {
        let mut tape = Tape::new();
        let logits = tape.constant(Tensor::filled(&[3], 40.0f64));
        let adv = adversarial_generator_loss(&mut tape, logits, 8, 8, 4).unwrap();
        assert!(tape.scalar_value(adv.normalized) < 1e-6);
        assert!(tape.scalar_value(adv.raw) >= 0.0);
    }

    #[test]
    fn adversarial_matches_scripted_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let logits: Vec<f64> = (0..5).map(|_| rng.gen_range(-4.0..4.0)).collect();
        let (h, w, n) = (16usize, 16usize, 4usize);
        let want = -3.0 * (h * w * n) as f64
            * logits
                .iter()
                .map(|&x| (1.0 / (1.0 + (-x).exp())).ln())
                .sum::<f64>()
            / logits.len() as f64;
        let mut tape = Tape::new();
        let lv = tape.constant(Tensor::new(vec![5], logits).unwrap());
        let adv = adversarial_generator_loss(&mut tape, lv, h, w, n).unwrap();
        assert!((tape.scalar_value(adv.raw) - want).abs() < 1e-9);
    }

    #[test]
    fn discriminator_loss_analytic_points() {
        let mut tape = Tape::new();
        let zeros = tape.constant(Tensor::filled(&[4], 0.0f64));
        let l = discriminator_loss(&mut tape, zeros, zeros).unwrap();
        assert!((tape.scalar_value(l) - 2.0 * std::f64::consts::LN_2).abs() < 1e-12);

        let real = tape.constant(Tensor::filled(&[4], 40.0f64));
        let fake = tape.constant(Tensor::filled(&[4], -40.0f64));
        let perfect = discriminator_loss(&mut tape, real, fake).unwrap();
        assert!(tape.scalar_value(perfect) < 1e-5);
    }

    #[test]
    fn discriminator_loss_matches_scripted_bce() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let real: Vec<f64> = (0..6).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let fake: Vec<f64> = (0..4).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
        let want = -real.iter().map(|&x| sig(x).ln()).sum::<f64>() / real.len() as f64
            - fake.iter().map(|&x| (1.0 - sig(x)).ln()).sum::<f64>() / fake.len() as f64;
        let mut tape = Tape::new();
        let r = tape.constant(Tensor::new(vec![6], real).unwrap());
        let f = tape.constant(Tensor::new(vec![4], fake).unwrap());
        let l = discriminator_loss(&mut tape, r, f).unwrap();
        assert!((tape.scalar_value(l) - want).abs() < 1e-9);
    }

    #[test]
    fn weighted_total_default_weights_example() {
        let got = weighted_total(4.0f64, 8.0, 0.2, 12.0, &LossWeights::default()).unwrap();
        assert!((got - 6.2).abs() < 1e-12);
        assert_eq!(weighted_total(0.0f64, 0.0, 0.0, 0.0, &LossWeights::default()).unwrap(), 0.0);
    }

    #[test]
    fn weighted_total_projects_with_unit_alpha() {
        let w = LossWeights {
            alpha: 1.0f64,
            beta: 0.0,
            gamma: 0.0,
            delta: 0.0,
        };
        let got = weighted_total(3.7, 100.0, 100.0, 100.0, &w).unwrap();
        assert_eq!(got, 3.7);
    }

    #[test]
    fn weighted_total_is_linear_in_each_component() {
        let w = LossWeights::<f64>::default();
        let base = weighted_total(1.0, 2.0, 3.0, 4.0, &w).unwrap();
        let bumped = weighted_total(1.0, 2.0 + 10.0, 3.0, 4.0, &w).unwrap();
        assert!((bumped - base - 10.0 * w.beta).abs() < 1e-12);
    }

    #[test]
    fn non_finite_component_rejected() {
        let err = weighted_total(f64::NAN, 0.0, 0.0, 0.0, &LossWeights::default()).unwrap_err();
        assert!(matches!(err, CoreError::NonFinite { .. }));
        let report = LossReport {
            pyr: 1.0f64,
            rec: f64::INFINITY,
            ssim: 0.0,
            adv: 0.0,
            adv_raw: 0.0,
            total: 0.0,
            pyr_levels: vec![],
        };
        assert!(report.validate(&LossWeights::default()).is_err());
    }

    #[test]
    fn tape_total_matches_plain_combiner() {
        let mut tape = Tape::new();
        let p = tape.constant(Tensor::scalar(4.0f64));
        let r = tape.constant(Tensor::scalar(8.0f64));
        let s = tape.constant(Tensor::scalar(0.2f64));
        let a = tape.constant(Tensor::scalar(12.0f64));
        let w = LossWeights::default();
        let t = total_loss(&mut tape, p, r, s, Some(a), &w).unwrap();
        let want = weighted_total(4.0, 8.0, 0.2, 12.0, &w).unwrap();
        assert!((tape.scalar_value(t) - want).abs() < 1e-12);

        let no_adv = total_loss(&mut tape, p, r, s, None, &w).unwrap();
        assert!((tape.scalar_value(no_adv) - (1.0 + 2.0 + 0.2)).abs() < 1e-12);
    }
}
