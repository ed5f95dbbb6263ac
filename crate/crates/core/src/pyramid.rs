//! Burt–Adelson Gaussian and Laplacian pyramids with exact reconstruction.
//!
//! The blur is the separable 5-tap binomial `[1,4,6,4,1]/16` with reflect
//! (mirror, edge not repeated) boundary handling. Odd dimensions ceil-halve
//! on the way down and upsample-then-crop on the way back up, which keeps
//! `collapse(laplace_pyramid(x)) == x` for any input size.

use crate::error::{CoreError, Result};
use crate::image::{Image, CHANNELS};
use crate::image::reflect_index;
use crate::kernels;
use crate::scalar::Scalar;

pub const DEFAULT_LEVELS: usize = 4;
pub const MIN_LEVELS: usize = 2;
pub const MAX_LEVELS: usize = 6;

/// Gaussian pyramid: `levels()[0]` is the input, each next level is
/// blur-then-halve of the previous.
#[derive(Debug, Clone)]
pub struct GaussPyramid<T> {
    levels: Vec<Image<T>>,
}

/// Laplacian pyramid: band-pass differences except the last level, which is
/// the low-frequency residual (equal to the coarsest Gaussian level).
#[derive(Debug, Clone)]
pub struct LaplacePyramid<T> {
    levels: Vec<Image<T>>,
}

impl<T: Scalar> GaussPyramid<T> {
    pub fn levels(&self) -> &[Image<T>] {
        &self.levels
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }
}

impl<T: Scalar> LaplacePyramid<T> {
    pub fn levels(&self) -> &[Image<T>] {
        &self.levels
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    /// Builds a pyramid from raw levels, validating the halving chain.
    pub fn from_levels(levels: Vec<Image<T>>) -> Result<Self> {
        validate_level_count(levels.len())?;
        for i in 0..levels.len() - 1 {
            let (h, w) = (levels[i].height(), levels[i].width());
            let (nh, nw) = (levels[i + 1].height(), levels[i + 1].width());
            if nh != h.div_ceil(2) || nw != w.div_ceil(2) {
                return Err(CoreError::shape(
                    &[CHANNELS, h.div_ceil(2), w.div_ceil(2)],
                    &[CHANNELS, nh, nw],
                    "pyramid level chain",
                ));
            }
        }
        Ok(Self { levels })
    }
}

fn validate_level_count(levels: usize) -> Result<()> {
    if !(MIN_LEVELS..=MAX_LEVELS).contains(&levels) {
        return Err(CoreError::InvalidArgument(format!(
            "pyramid levels must be in [{MIN_LEVELS}, {MAX_LEVELS}], got {levels}"
        )));
    }
    Ok(())
}

const TAPS: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];

/// Separable binomial blur with reflect boundaries.
pub fn blur<T: Scalar>(img: &Image<T>) -> Image<T> {
    let (h, w) = (img.height(), img.width());
    let taps: [T; 5] = std::array::from_fn(|i| T::lit(TAPS[i]));
    // horizontal pass
    let mut horiz = Image::filled(h, w, T::zero());
    for c in 0..CHANNELS {
        for y in 0..h {
            for x in 0..w {
                let mut acc = T::zero();
                for (k, &t) in taps.iter().enumerate() {
                    let sx = reflect_index(x as isize + k as isize - 2, w);
                    acc += t * img.get(c, y, sx);
                }
                horiz.set(c, y, x, acc);
            }
        }
    }
    // vertical pass
    let mut out = Image::filled(h, w, T::zero());
    for c in 0..CHANNELS {
        for y in 0..h {
            for x in 0..w {
                let mut acc = T::zero();
                for (k, &t) in taps.iter().enumerate() {
                    let sy = reflect_index(y as isize + k as isize - 2, h);
                    acc += t * horiz.get(c, sy, x);
                }
                out.set(c, y, x, acc);
            }
        }
    }
    out
}

/// Keeps even-indexed rows and columns; output dims are `ceil(n/2)`.
pub fn downsample2<T: Scalar>(img: &Image<T>) -> Image<T> {
    let (oh, ow) = (img.height().div_ceil(2), img.width().div_ceil(2));
    Image::from_fn(oh, ow, |c, y, x| img.get(c, 2 * y, 2 * x))
}

/// Bilinear 2x upsampling (corners not aligned) followed by a top-left crop
/// to `oh x ow`, the inverse step of ceil-halving.
pub fn upsample2x_cropped<T: Scalar>(img: &Image<T>, oh: usize, ow: usize) -> Result<Image<T>> {
    let (h2, w2) = (2 * img.height(), 2 * img.width());
    if oh > h2 || ow > w2 || oh == 0 || ow == 0 {
        return Err(CoreError::InvalidArgument(format!(
            "upsample crop {oh}x{ow} incompatible with doubled dims {h2}x{w2}"
        )));
    }
    let up = kernels::up2x_forward(img.data(), CHANNELS, img.height(), img.width());
    let mut data = Vec::with_capacity(CHANNELS * oh * ow);
    for c in 0..CHANNELS {
        let plane = &up[c * h2 * w2..(c + 1) * h2 * w2];
        for y in 0..oh {
            data.extend_from_slice(&plane[y * w2..y * w2 + ow]);
        }
    }
    Image::new(oh, ow, data)
}

fn check_min_dims<T: Scalar>(img: &Image<T>, levels: usize) -> Result<()> {
    let min = 1usize << (levels - 1);
    if img.height() < min || img.width() < min {
        return Err(CoreError::ImageTooSmall {
            height: img.height(),
            width: img.width(),
            min,
        });
    }
    Ok(())
}

pub fn gauss_pyramid<T: Scalar>(img: &Image<T>, levels: usize) -> Result<GaussPyramid<T>> {
    validate_level_count(levels)?;
    check_min_dims(img, levels)?;
    let mut out = Vec::with_capacity(levels);
    out.push(img.clone());
    for _ in 1..levels {
        let next = downsample2(&blur(out.last().unwrap()));
        out.push(next);
    }
    Ok(GaussPyramid { levels: out })
}

pub fn laplace_pyramid<T: Scalar>(img: &Image<T>, levels: usize) -> Result<LaplacePyramid<T>> {
    let gp = gauss_pyramid(img, levels)?;
    let mut out = Vec::with_capacity(levels);
    for i in 0..levels - 1 {
        let g = &gp.levels[i];
        let up = upsample2x_cropped(&gp.levels[i + 1], g.height(), g.width())?;
        let mut diff = g.clone();
        for (d, u) in diff.data_mut().iter_mut().zip(up.data()) {
            *d -= *u;
        }
        out.push(diff);
    }
    out.push(gp.levels[levels - 1].clone());
    Ok(LaplacePyramid { levels: out })
}

/// Inverts [`laplace_pyramid`]: repeatedly upsample and add band-pass levels,
/// coarsest first. The result is not clamped; clamping to `[0,1]` happens
/// where images leave the numeric pipeline.
pub fn collapse<T: Scalar>(lp: &LaplacePyramid<T>) -> Result<Image<T>> {
    // Revalidate the chain in case the pyramid was assembled by hand.
    let lp_checked = LaplacePyramid::from_levels(lp.levels.clone())?;
    let levels = &lp_checked.levels;
    let mut x = levels[levels.len() - 1].clone();
    for l in levels[..levels.len() - 1].iter().rev() {
        let up = upsample2x_cropped(&x, l.height(), l.width())?;
        x = up;
        for (d, b) in x.data_mut().iter_mut().zip(l.data()) {
            *d += *b;
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(h: usize, w: usize, seed: u64) -> Image<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::from_fn(h, w, |_, _, _| rng.gen_range(0.0..1.0))
    }

    /// Direct 2-D convolution with the outer-product 5x5 binomial kernel and
    /// reflect indexing, then even-index subsampling. Written as plain loops,
    /// independent of `blur`/`downsample2`.
    fn reduce_oracle(img: &Image<f64>) -> Image<f64> {
        let k1 = [1.0, 4.0, 6.0, 4.0, 1.0].map(|v| v / 16.0);
        let (h, w) = (img.height(), img.width());
        let blurred = Image::from_fn(h, w, |c, y, x| {
            let mut acc = 0.0;
            for (dy, wy) in k1.iter().enumerate() {
                for (dx, wx) in k1.iter().enumerate() {
                    let sy = reflect_index(y as isize + dy as isize - 2, h);
                    let sx = reflect_index(x as isize + dx as isize - 2, w);
                    acc += wy * wx * img.get(c, sy, sx);
                }
            }
            acc
        });
        Image::from_fn(h.div_ceil(2), w.div_ceil(2), |c, y, x| blurred.get(c, 2 * y, 2 * x))
    }

    #[test]
    fn level_dims_halve() {
        let img = Image::<f32>::filled(256, 256, 0.3);
        let gp = gauss_pyramid(&img, 4).unwrap();
        let dims: Vec<_> = gp.levels().iter().map(|l| l.height()).collect();
        assert_eq!(dims, [256, 128, 64, 32]);
    }

    #[test]
    fn constant_image_stays_constant_at_every_level() {
        let img = Image::<f64>::filled(32, 24, 0.5);
        let gp = gauss_pyramid(&img, 4).unwrap();
        for level in gp.levels() {
            for &v in level.data() {
                assert!((v - 0.5).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn impulse_g2_matches_direct_convolution_oracle() {
        let mut img = Image::<f64>::filled(16, 16, 0.0);
        for c in 0..CHANNELS {
            img.set(c, 8, 8, 1.0);
        }
        let gp = gauss_pyramid(&img, 4).unwrap();
        let want = reduce_oracle(&img);
        assert_eq!(gp.levels()[1].height(), want.height());
        for (a, b) in gp.levels()[1].data().iter().zip(want.data()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn random_g2_matches_oracle_on_odd_dims() {
        let img = random_image(13, 17, 7);
        let gp = gauss_pyramid(&img, 2).unwrap();
        let want = reduce_oracle(&img);
        for (a, b) in gp.levels()[1].data().iter().zip(want.data()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn constant_laplacian_is_zero_except_residual() {
        let img = Image::<f64>::filled(16, 16, 0.42);
        let lp = laplace_pyramid(&img, 4).unwrap();
        for l in &lp.levels()[..3] {
            for &v in l.data() {
                assert!(v.abs() < 1e-12);
            }
        }
        for &v in lp.levels()[3].data() {
            assert!((v - 0.42).abs() < 1e-12);
        }
    }

    #[test]
    fn l2_matches_scripted_difference() {
        let img = random_image(32, 32, 11);
        let lp = laplace_pyramid(&img, 4).unwrap();
        // straight-line recomputation: g2 - up(g3)
        let g1 = img.clone();
        let g2 = reduce_oracle(&g1);
        let g3 = reduce_oracle(&g2);
        let up = upsample2x_cropped(&g3, g2.height(), g2.width()).unwrap();
        for ((l, g), u) in lp.levels()[1].data().iter().zip(g2.data()).zip(up.data()) {
            assert!((l - (g - u)).abs() < 1e-10);
        }
    }

    #[test]
    fn collapse_inverts_decomposition() {
        for (h, w, seed) in [(32, 32, 1u64), (13, 11, 2), (40, 25, 3), (8, 8, 4)] {
            let img = random_image(h, w, seed);
            let lp = laplace_pyramid(&img, 4).unwrap();
            let back = collapse(&lp).unwrap();
            let worst = img
                .data()
                .iter()
                .zip(back.data())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            assert!(worst < 1e-10, "{h}x{w}: worst {worst}");
        }
    }

    #[test]
    fn zeroed_bandpass_collapse_matches_upsample_chain() {
        let img = random_image(32, 32, 5);
        let lp = laplace_pyramid(&img, 4).unwrap();
        let mut dims = Vec::new();
        let mut zeroed = Vec::new();
        for (i, l) in lp.levels().iter().enumerate() {
            dims.push((l.height(), l.width()));
            if i < 3 {
                zeroed.push(Image::filled(l.height(), l.width(), 0.0));
            } else {
                zeroed.push(l.clone());
            }
        }
        let got = collapse(&LaplacePyramid::from_levels(zeroed).unwrap()).unwrap();
        // oracle: chain of upsamples applied to g4 directly
        let mut want = lp.levels()[3].clone();
        for i in (0..3).rev() {
            want = upsample2x_cropped(&want, dims[i].0, dims[i].1).unwrap();
        }
        for (a, b) in got.data().iter().zip(want.data()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn blur_never_increases_variance() {
        for seed in 0..5u64 {
            let img = random_image(24, 24, 100 + seed);
            let gp = gauss_pyramid(&img, 4).unwrap();
            let variance = |im: &Image<f64>| {
                let m = im.mean();
                im.data().iter().map(|v| (v - m) * (v - m)).sum::<f64>() / im.data().len() as f64
            };
            for pair in gp.levels().windows(2) {
                assert!(variance(&pair[1]) <= variance(&pair[0]) + 1e-9);
            }
        }
    }

    #[test]
    fn too_small_image_rejected() {
        let img = Image::<f32>::filled(7, 32, 0.5);
        match gauss_pyramid(&img, 4) {
            Err(CoreError::ImageTooSmall { min, .. }) => assert_eq!(min, 8),
            other => panic!("expected ImageTooSmall, got {other:?}"),
        }
    }

    #[test]
    fn bad_level_counts_rejected() {
        let img = Image::<f32>::filled(64, 64, 0.5);
        assert!(gauss_pyramid(&img, 1).is_err());
        assert!(gauss_pyramid(&img, 7).is_err());
        assert!(gauss_pyramid(&img, 6).is_ok());
    }

    #[test]
    fn collapse_rejects_inconsistent_levels() {
        let levels = vec![
            Image::<f32>::filled(16, 16, 0.0),
            Image::<f32>::filled(8, 8, 0.0),
            Image::<f32>::filled(5, 4, 0.0), // should be 4x4
            Image::<f32>::filled(2, 2, 0.0),
        ];
        assert!(LaplacePyramid::from_levels(levels).is_err());
    }

    #[test]
    fn f32_round_trip_within_single_precision_budget() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let img: Image<f32> = Image::from_fn(48, 31, |_, _, _| rng.gen_range(0.0f32..1.0));
        let lp = laplace_pyramid(&img, 4).unwrap();
        let back = collapse(&lp).unwrap();
        let worst = img
            .data()
            .iter()
            .zip(back.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        assert!(worst < 1e-6, "worst {worst}");
    }
}
