//! RGB images as planar float arrays plus 8-bit PNG I/O.
//!
//! Pixels live in `[0,1]`, stored channel-major (`[3,H,W]` layout) so planes
//! can be handed straight to the convolution/pyramid kernels.

use std::path::Path;

use crate::error::{CoreError, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const CHANNELS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct Image<T> {
    height: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Scalar> Image<T> {
    pub fn new(height: usize, width: usize, data: Vec<T>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(CoreError::InvalidShape {
                shape: vec![CHANNELS, height, width],
                reason: "image dimensions must be positive".into(),
            });
        }
        if data.len() != CHANNELS * height * width {
            return Err(CoreError::InvalidShape {
                shape: vec![CHANNELS, height, width],
                reason: format!(
                    "expected {} planar values, got {}",
                    CHANNELS * height * width,
                    data.len()
                ),
            });
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, value: T) -> Self {
        Self {
            height,
            width,
            data: vec![value; CHANNELS * height * width],
        }
    }

    /// Builds an image from a per-pixel function of (channel, y, x).
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(CHANNELS * height * width);
        for c in 0..CHANNELS {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn channel(&self, c: usize) -> &[T] {
        let hw = self.height * self.width;
        &self.data[c * hw..(c + 1) * hw]
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> T {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn set(&mut self, c: usize, y: usize, x: usize, v: T) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn clamp01(&self) -> Self {
        let (zero, one) = (T::zero(), T::one());
        self.map(|v| {
            if v < zero {
                zero
            } else if v > one {
                one
            } else {
                v
            }
        })
    }

    pub fn mean(&self) -> T {
        let n = T::from_usize(self.data.len()).unwrap();
        self.data.iter().fold(T::zero(), |acc, &v| acc + v) / n
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Copies the `h x w` window whose top-left corner is `(y, x)`.
    pub fn crop(&self, y: usize, x: usize, h: usize, w: usize) -> Result<Self> {
        if y + h > self.height || x + w > self.width || h == 0 || w == 0 {
            return Err(CoreError::InvalidArgument(format!(
                "crop {h}x{w}@({y},{x}) outside {}x{} image",
                self.height, self.width
            )));
        }
        let mut data = Vec::with_capacity(CHANNELS * h * w);
        for c in 0..CHANNELS {
            let plane = self.channel(c);
            for row in y..y + h {
                data.extend_from_slice(&plane[row * self.width + x..row * self.width + x + w]);
            }
        }
        Self::new(h, w, data)
    }

    /// Mirror-pads without duplicating the border pixel (indices reflect as
    /// `-1 -> 1`, `n -> n-2`). Each pad amount must be smaller than the
    /// corresponding dimension.
    pub fn reflect_pad(&self, top: usize, bottom: usize, left: usize, right: usize) -> Result<Self> {
        let (h, w) = (self.height, self.width);
        if top >= h || bottom >= h || left >= w || right >= w {
            return Err(CoreError::InvalidArgument(format!(
                "reflect pad ({top},{bottom},{left},{right}) too large for {h}x{w} image"
            )));
        }
        let (nh, nw) = (h + top + bottom, w + left + right);
        let out = Self::from_fn(nh, nw, |c, y, x| {
            let sy = reflect_index(y as isize - top as isize, h);
            let sx = reflect_index(x as isize - left as isize, w);
            self.get(c, sy, sx)
        });
        Ok(out)
    }

    /// Views the image as a `[3,H,W]` tensor.
    pub fn to_tensor(&self) -> Tensor<T> {
        Tensor::new(vec![CHANNELS, self.height, self.width], self.data.clone())
            .expect("image layout is already a valid tensor")
    }

    /// Accepts `[3,H,W]` or `[1,3,H,W]` tensors.
    pub fn from_tensor(t: &Tensor<T>) -> Result<Self> {
        let s = t.shape();
        let (h, w) = match s {
            [c, h, w] if *c == CHANNELS => (*h, *w),
            [1, c, h, w] if *c == CHANNELS => (*h, *w),
            _ => {
                return Err(CoreError::InvalidShape {
                    shape: s.to_vec(),
                    reason: "expected a [3,H,W] or [1,3,H,W] tensor".into(),
                })
            }
        };
        Self::new(h, w, t.data().to_vec())
    }

    /// Stacks same-sized images into an `[N,3,H,W]` batch tensor.
    pub fn batch_to_tensor(images: &[Self]) -> Result<Tensor<T>> {
        let first = images
            .first()
            .ok_or_else(|| CoreError::InvalidArgument("empty image batch".into()))?;
        let (h, w) = (first.height, first.width);
        let mut data = Vec::with_capacity(images.len() * CHANNELS * h * w);
        for img in images {
            if img.height != h || img.width != w {
                return Err(CoreError::shape(
                    &[CHANNELS, h, w],
                    &[CHANNELS, img.height, img.width],
                    "batch_to_tensor",
                ));
            }
            data.extend_from_slice(&img.data);
        }
        Tensor::new(vec![images.len(), CHANNELS, h, w], data)
    }

    /// Splits an `[N,3,H,W]` tensor back into images.
    pub fn batch_from_tensor(t: &Tensor<T>) -> Result<Vec<Self>> {
        let s = t.shape();
        let [n, c, h, w] = match s {
            [n, c, h, w] => [*n, *c, *h, *w],
            _ => {
                return Err(CoreError::InvalidShape {
                    shape: s.to_vec(),
                    reason: "expected an [N,3,H,W] tensor".into(),
                })
            }
        };
        if c != CHANNELS {
            return Err(CoreError::InvalidShape {
                shape: s.to_vec(),
                reason: "expected 3 channels".into(),
            });
        }
        let plane = CHANNELS * h * w;
        (0..n)
            .map(|i| Self::new(h, w, t.data()[i * plane..(i + 1) * plane].to_vec()))
            .collect()
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let rgb = ::image::open(path)
            .map_err(|e| CoreError::Image {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?
            .to_rgb8();
        let (w, h) = (rgb.width() as usize, rgb.height() as usize);
        let raw = rgb.into_raw();
        let scale = T::lit(1.0 / 255.0);
        let mut data = vec![T::zero(); CHANNELS * h * w];
        for (i, px) in raw.chunks_exact(CHANNELS).enumerate() {
            for (c, &byte) in px.iter().enumerate() {
                data[c * h * w + i] = T::from_u8(byte).unwrap() * scale;
            }
        }
        Self::new(h, w, data)
    }

    /// Writes an 8-bit RGB PNG; values are clamped to `[0,1]` and rounded.
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let (h, w) = (self.height, self.width);
        let mut raw = vec![0u8; CHANNELS * h * w];
        for c in 0..CHANNELS {
            for (i, &v) in self.channel(c).iter().enumerate() {
                let v = v.to_f64().unwrap_or(0.0).clamp(0.0, 1.0);
                raw[i * CHANNELS + c] = (v * 255.0).round() as u8;
            }
        }
        let buf: ::image::RgbImage =
            ::image::ImageBuffer::from_raw(w as u32, h as u32, raw).expect("sized buffer");
        buf.save_with_format(path, ::image::ImageFormat::Png)
            .map_err(|e| CoreError::Image {
                path: path.to_path_buf(),
                message: e.to_string(),
            })
    }

    /// Lossless cast between scalar types (f32 -> f64 exact; f64 -> f32
    /// rounds).
    pub fn cast<U: Scalar>(&self) -> Image<U> {
        Image {
            height: self.height,
            width: self.width,
            data: self
                .data
                .iter()
                .map(|&v| U::from_f64(v.to_f64().unwrap()).unwrap())
                .collect(),
        }
    }
}

/// Reflects an out-of-range index back into `[0, n)` without repeating the
/// edge sample.
pub(crate) fn reflect_index(i: isize, n: usize) -> usize {
    debug_assert!(n > 0);
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut i = i.rem_euclid(period);
    if i >= n as isize {
        i = period - i;
    }
    i as usize
}
