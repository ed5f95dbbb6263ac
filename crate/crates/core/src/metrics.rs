//! Full-reference quality metrics: PSNR and SSIM.

use crate::error::{CoreError, Result};
use crate::image::{Image, CHANNELS};
use crate::scalar::Scalar;

/// SSIM configuration (Wang et al. defaults).
#[derive(Debug, Clone, Copy)]
pub struct SsimParams<T> {
    pub window_size: usize,
    pub window_sigma: T,
    pub k1: T,
    pub k2: T,
    pub peak: T,
}

impl<T: Scalar> Default for SsimParams<T> {
    fn default() -> Self {
        Self {
            window_size: 11,
            window_sigma: T::lit(1.5),
            k1: T::lit(0.01),
            k2: T::lit(0.03),
            peak: T::one(),
        }
    }
}

impl<T: Scalar> SsimParams<T> {
    pub fn c1(&self) -> T {
        let v = self.k1 * self.peak;
        v * v
    }

    pub fn c2(&self) -> T {
        let v = self.k2 * self.peak;
        v * v
    }

    fn validate(&self) -> Result<()> {
        if self.window_size == 0 || self.window_size.is_multiple_of(2) {
            return Err(CoreError::InvalidArgument(format!(
                "SSIM window size must be odd and positive, got {}",
                self.window_size
            )));
        }
        if self.window_sigma <= T::zero() || self.k1 <= T::zero() || self.k2 <= T::zero() || self.peak <= T::zero() {
            return Err(CoreError::InvalidArgument(
                "SSIM sigma, k1, k2, peak must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
    pub fn window_taps(&self) -> Vec<T> {
        let n = self.window_size;
        let half = (n / 2) as isize;
        let two = T::lit(2.0);
        let denom = two * self.window_sigma * self.window_sigma;
        let mut taps: Vec<T> = (0..n)
            .map(|i| {
                let d = T::from_isize(i as isize - half).unwrap();
                (-(d * d) / denom).exp()
            })
            .collect();
        let sum = taps.iter().fold(T::zero(), |a, &b| a + b);
        for t in &mut taps {
            *t /= sum;
        }
        taps
    }
}

fn check_same_dims<T: Scalar>(a: &Image<T>, b: &Image<T>, what: &str) -> Result<()> {
    if a.height() != b.height() || a.width() != b.width() {
        return Err(CoreError::shape(
            &[CHANNELS, a.height(), a.width()],
            &[CHANNELS, b.height(), b.width()],
            what,
        ));
    }
    Ok(())
}

/// Peak signal-to-noise ratio in dB. Identical images return
/// `T::infinity()` (the zero-MSE sentinel).
pub fn psnr<T: Scalar>(a: &Image<T>, b: &Image<T>, peak: T) -> Result<T> {
    check_same_dims(a, b, "psnr")?;
    if peak <= T::zero() {
        return Err(CoreError::InvalidArgument("psnr peak must be positive".into()));
    }
    let n = T::from_usize(a.data().len()).unwrap();
    let mse = a
        .data()
        .iter()
        .zip(b.data())
        .fold(T::zero(), |acc, (&x, &y)| {
            let d = x - y;
            acc + d * d
        })
        / n;
    if mse == T::zero() {
        return Ok(T::infinity());
    }
    Ok(T::lit(10.0) * (peak * peak / mse).log10())
}

/// Mean SSIM over Gaussian-windowed local statistics, computed per RGB
/// channel and averaged. Windows are fully interior (valid positions only).
pub fn ssim<T: Scalar>(a: &Image<T>, b: &Image<T>, params: &SsimParams<T>) -> Result<T> {
    check_same_dims(a, b, "ssim")?;
    params.validate()?;
    let (h, w) = (a.height(), a.width());
    if h < params.window_size || w < params.window_size {
        return Err(CoreError::ImageTooSmall {
            height: h,
            width: w,
            min: params.window_size,
        });
    }
    let taps = params.window_taps();
    let (c1, c2) = (params.c1(), params.c2());
    let two = T::lit(2.0);

    let mut total = T::zero();
    for c in 0..CHANNELS {
        let x = a.channel(c);
        let y = b.channel(c);
        let xx: Vec<T> = x.iter().map(|&v| v * v).collect();
        let yy: Vec<T> = y.iter().map(|&v| v * v).collect();
        let xy: Vec<T> = x.iter().zip(y).map(|(&u, &v)| u * v).collect();

        let mu_x = filter_valid(x, h, w, &taps);
        let mu_y = filter_valid(y, h, w, &taps);
        let m_xx = filter_valid(&xx, h, w, &taps);
        let m_yy = filter_valid(&yy, h, w, &taps);
        let m_xy = filter_valid(&xy, h, w, &taps);

        let mut acc = T::zero();
        for i in 0..mu_x.len() {
            let (mx, my) = (mu_x[i], mu_y[i]);
            let var_x = m_xx[i] - mx * mx;
            let var_y = m_yy[i] - my * my;
            let cov = m_xy[i] - mx * my;
            let num = (two * mx * my + c1) * (two * cov + c2);
            let den = (mx * mx + my * my + c1) * (var_x + var_y + c2);
            acc += num / den;
        }
        total += acc / T::from_usize(mu_x.len()).unwrap();
    }
    Ok(total / T::from_usize(CHANNELS).unwrap())
}

/// Separable valid-mode filtering of one plane with symmetric 1-D taps.
fn filter_valid<T: Scalar>(plane: &[T], h: usize, w: usize, taps: &[T]) -> Vec<T> {
    let k = taps.len();
    let ow = w - k + 1;
    let oh = h - k + 1;
    // horizontal
    let mut horiz = vec![T::zero(); h * ow];
    for y in 0..h {
        for x in 0..ow {
            let mut acc = T::zero();
            for (d, &t) in taps.iter().enumerate() {
                acc += t * plane[y * w + x + d];
            }
            horiz[y * ow + x] = acc;
        }
    }
    // vertical
    let mut out = vec![T::zero(); oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            let mut acc = T::zero();
            for (d, &t) in taps.iter().enumerate() {
                acc += t * horiz[(y + d) * ow + x];
            }
            out[y * ow + x] = acc;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_pair(h: usize, w: usize, seed: u64) -> (Image<f64>, Image<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Image::from_fn(h, w, |_, _, _| rng.gen_range(0.0..1.0));
        let b = Image::from_fn(h, w, |_, _, _| rng.gen_range(0.0..1.0));
        (a, b)
    }

    #[test]
    fn identical_images_hit_the_sentinel_and_unity() {
        let (a, _) = random_pair(16, 16, 1);
        assert!(psnr(&a, &a, 1.0).unwrap().is_infinite());
        let s = ssim(&a, &a, &SsimParams::default()).unwrap();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn psnr_of_half_gray_gap_is_6db() {
        let a = Image::<f64>::filled(8, 8, 0.0);
        let b = Image::<f64>::filled(8, 8, 0.5);
        let got = psnr(&a, &b, 1.0).unwrap();
        let want = 10.0 * (1.0f64 / 0.25).log10();
        assert!((got - want).abs() < 1e-12);
        assert!((got - 6.0206).abs() < 1e-4);
    }

    #[test]
    fn psnr_matches_direct_formula_oracle() {
        let (a, b) = random_pair(8, 8, 2);
        let got = psnr(&a, &b, 1.0).unwrap();
        // one-line oracle
        let mse = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            / a.data().len() as f64;
        let want = 10.0 * (1.0 / mse).log10();
        assert!((got - want).abs() < 1e-9);
    }

    #[test]
    fn zero_variance_closed_form() {
        let a = Image::<f64>::filled(16, 16, 0.25);
        let b = Image::<f64>::filled(16, 16, 0.75);
        let got = ssim(&a, &b, &SsimParams::default()).unwrap();
        let c1 = 1e-4;
        let want = (2.0 * 0.25 * 0.75 + c1) / (0.25 * 0.25 + 0.75 * 0.75 + c1);
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        assert!((got - 0.6001).abs() < 1e-4);
    }

    /// Independent reference: non-separable 2-D Gaussian window, textbook
    /// Wang et al. formula, plain loops.
    fn ssim_oracle(a: &Image<f64>, b: &Image<f64>) -> f64 {
        let (h, w) = (a.height(), a.width());
        let (k, sigma, c1, c2) = (11usize, 1.5f64, 1e-4f64, 9e-4f64);
        let mut win = vec![0.0; k * k];
        let mut sum = 0.0;
        for y in 0..k {
            for x in 0..k {
                let (dy, dx) = (y as f64 - 5.0, x as f64 - 5.0);
                let v = (-(dy * dy + dx * dx) / (2.0 * sigma * sigma)).exp();
                win[y * k + x] = v;
                sum += v;
            }
        }
        for v in &mut win {
            *v /= sum;
        }
        let mut channel_means = Vec::new();
        for c in 0..3 {
            let mut acc = 0.0;
            let mut count = 0usize;
            for oy in 0..=h - k {
                for ox in 0..=w - k {
                    let (mut mx, mut my) = (0.0, 0.0);
                    for y in 0..k {
                        for x in 0..k {
                            let wv = win[y * k + x];
                            mx += wv * a.get(c, oy + y, ox + x);
                            my += wv * b.get(c, oy + y, ox + x);
                        }
                    }
                    let (mut vx, mut vy, mut cov) = (0.0, 0.0, 0.0);
                    for y in 0..k {
                        for x in 0..k {
                            let wv = win[y * k + x];
                            let da = a.get(c, oy + y, ox + x) - mx;
                            let db = b.get(c, oy + y, ox + x) - my;
                            vx += wv * da * da;
                            vy += wv * db * db;
                            cov += wv * da * db;
                        }
                    }
                    acc += ((2.0 * mx * my + c1) * (2.0 * cov + c2))
                        / ((mx * mx + my * my + c1) * (vx + vy + c2));
                    count += 1;
                }
            }
            channel_means.push(acc / count as f64);
        }
        channel_means.iter().sum::<f64>() / 3.0
    }

    #[test]
    fn ssim_matches_scripted_reference() {
        let (a, b) = random_pair(16, 16, 3);
        let got = ssim(&a, &b, &SsimParams::default()).unwrap();
        let want = ssim_oracle(&a, &b);
        assert!(
            (got - want).abs() < 1e-6,
            "got {got}, oracle {want}, diff {}",
            (got - want).abs()
        );
    }

    #[test]
    fn metrics_are_symmetric() {
        let (a, b) = random_pair(16, 16, 4);
        let p = SsimParams::default();
        assert!((ssim(&a, &b, &p).unwrap() - ssim(&b, &a, &p).unwrap()).abs() < 1e-12);
        assert!((psnr(&a, &b, 1.0).unwrap() - psnr(&b, &a, 1.0).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn no_pair_beats_identity() {
        let (a, b) = random_pair(16, 16, 5);
        let p = SsimParams::default();
        let s = ssim(&a, &b, &p).unwrap();
        assert!((-1.0..=1.0).contains(&s));
        assert!(s < 1.0);
    }

    #[test]
    fn undersized_image_rejected() {
        let a = Image::<f64>::filled(8, 16, 0.5);
        let err = ssim(&a, &a, &SsimParams::default()).unwrap_err();
        assert!(matches!(err, CoreError::ImageTooSmall { .. }));
    }

    #[test]
    fn dim_mismatch_rejected() {
        let a = Image::<f64>::filled(16, 16, 0.5);
        let b = Image::<f64>::filled(16, 17, 0.5);
        assert!(psnr(&a, &b, 1.0).is_err());
        assert!(ssim(&a, &b, &SsimParams::default()).is_err());
    }
}
