//! Grayscale rasters, binary PGM I/O, noise, blur and the synthetic
//! multi-focus generator used by the test harness.
//!
//! Randomness comes from `ChaCha8Rng` seeded with `seed_from_u64(seed)`;
//! Gaussian samples are drawn with `rand_distr::Normal`. Both are fixed so
//! seeded outputs are reproducible across platforms.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Row-major grayscale image with real-valued pixels (nominally 0..=255).
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::invalid(format!(
                "{} pixels given for a {}x{} image",
                pixels.len(),
                width,
                height
            )));
        }
        if pixels.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("image contains non-finite pixels"));
        }
        Ok(ImageBuffer {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        ImageBuffer {
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        ImageBuffer {
            width,
            height,
            pixels,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.pixels[y * self.width + x] = v;
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [f64] {
        &mut self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    pub fn row(&self, y: usize) -> &[f64] {
        &self.pixels[y * self.width..(y + 1) * self.width]
    }

    pub fn mean(&self) -> f64 {
        self.pixels.iter().sum::<f64>() / self.pixels.len().max(1) as f64
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ImageBuffer {
        ImageBuffer {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().map(|&p| f(p)).collect(),
        }
    }

    /// Pixels clamped to [0, 255].
    pub fn clamped(&self) -> ImageBuffer {
        self.map(|p| p.clamp(0.0, 255.0))
    }

    /// Pixels rounded to the nearest integer and clamped to [0, 255].
    pub fn quantized(&self) -> Vec<u8> {
        self.pixels.iter().map(|&p| quantize(p)).collect()
    }

    pub(crate) fn same_dims(&self, other: &ImageBuffer) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::invalid(format!(
                "image dimensions differ: {}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn quantize(p: f64) -> u8 {
    p.round().clamp(0.0, 255.0) as u8
}

/// Parses a binary (P5) PGM with maxval 255. `#` comments are tolerated
/// between header fields.
pub fn read_pgm(bytes: &[u8]) -> Result<ImageBuffer> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(Error::format(0, "expected binary PGM magic `P5`"));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for (k, name) in ["width", "height", "maxval"].iter().enumerate() {
        let start = pos;
        skip_header_space(bytes, &mut pos);
        if pos == start {
            return Err(Error::format(pos, format!("expected whitespace before {name}")));
        }
        let digits_start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if pos == digits_start {
            return Err(Error::format(pos, format!("expected decimal {name}")));
        }
        let text = std::str::from_utf8(&bytes[digits_start..pos]).expect("ascii digits");
        fields[k] = text
            .parse()
            .map_err(|_| Error::format(digits_start, format!("{name} out of range")))?;
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(Error::format(pos, "image dimensions must be positive"));
    }
    if maxval != 255 {
        return Err(Error::format(pos, format!("maxval must be 255, got {maxval}")));
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(Error::format(pos, "expected single whitespace after maxval")),
    }
    let n = width
        .checked_mul(height)
        .ok_or_else(|| Error::format(pos, "image dimensions overflow"))?;
    let payload = &bytes[pos..];
    if payload.len() < n {
        return Err(Error::format(
            bytes.len(),
            format!("truncated payload: {} of {} bytes", payload.len(), n),
        ));
    }
    let pixels = payload[..n].iter().map(|&b| f64::from(b)).collect();
    Ok(ImageBuffer {
        width,
        height,
        pixels,
    })
}

fn skip_header_space(bytes: &[u8], pos: &mut usize) {
    while *pos < bytes.len() {
        match bytes[*pos] {
            b'#' => {
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
            }
            b if b.is_ascii_whitespace() => *pos += 1,
            _ => break,
        }
    }
}

/// Serializes as binary PGM; pixels are rounded and clamped to 0..=255.
pub fn write_pgm(image: &ImageBuffer) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.width, image.height).into_bytes();
    out.extend(image.quantized());
    out
}

pub fn read_pgm_file(path: &Path) -> Result<ImageBuffer> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    read_pgm(&bytes)
}

/// Writes bytes to a sibling temp file and renames it over `path`, so a
/// failed write never leaves a partial file behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("not a file path: {}", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

pub fn write_pgm_file(path: &Path, image: &ImageBuffer) -> Result<()> {
    write_atomic(path, &write_pgm(image))
}

/// Adds i.i.d. N(0, sigma²) noise to every pixel. No clamping.
pub fn add_gaussian_noise(image: &ImageBuffer, sigma: f64, seed: u64) -> Result<ImageBuffer> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::invalid(format!("noise sigma must be >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(image.clone());
    }
    let normal = Normal::new(0.0, sigma).expect("sigma validated");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(ImageBuffer {
        width: image.width,
        height: image.height,
        pixels: image
            .pixels
            .iter()
            .map(|&p| p + normal.sample(&mut rng))
            .collect(),
    })
}

/// Normalized Gaussian taps for offsets `-radius..=radius`, radius = ⌈3σ⌉.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let mut taps: Vec<f64> = (-radius..=radius)
        .map(|k| (-((k * k) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    taps
}

/// Half-sample symmetric extension: `-1 -> 0`, `n -> n-1`. Periodic with
/// period `2n`, so any offset maps into range.
#[inline]
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let r = i.rem_euclid(period);
    (if r < n { r } else { period - 1 - r }) as usize
}

fn convolve_1d(src: &[f64], dst: &mut [f64], taps: &[f64]) {
    let n = src.len();
    let radius = (taps.len() / 2) as isize;
    for (i, d) in dst.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (t, &w) in taps.iter().enumerate() {
            let j = reflect(i as isize + t as isize - radius, n);
            acc += w * src[j];
        }
        *d = acc;
    }
}

/// Separable Gaussian blur with a truncated normalized kernel and
/// half-sample symmetric boundaries. `sigma_b == 0` is the identity.
pub fn gaussian_blur(image: &ImageBuffer, sigma_b: f64) -> Result<ImageBuffer> {
    if !(sigma_b >= 0.0) || !sigma_b.is_finite() {
        return Err(Error::invalid(format!("blur sigma must be >= 0, got {sigma_b}")));
    }
    if sigma_b == 0.0 {
        return Ok(image.clone());
    }
    let taps = gaussian_kernel(sigma_b);
    let (w, h) = image.dims();
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        convolve_1d(image.row(y), &mut tmp[y * w..(y + 1) * w], &taps);
    }
    let mut out = vec![0.0; w * h];
    let mut col = vec![0.0; h];
    let mut col_out = vec![0.0; h];
    for x in 0..w {
        for y in 0..h {
            col[y] = tmp[y * w + x];
        }
        convolve_1d(&col, &mut col_out, &taps);
        for y in 0..h {
            out[y * w + x] = col_out[y];
        }
    }
    Ok(ImageBuffer {
        width: w,
        height: h,
        pixels: out,
    })
}

/// Half-blurred pair: the first output keeps columns `< split` sharp and
/// blurs the rest; the second is the complement.
pub fn synth_multifocus(
    truth: &ImageBuffer,
    sigma_b: f64,
    split: usize,
) -> Result<(ImageBuffer, ImageBuffer)> {
    if split == 0 || split >= truth.width() {
        return Err(Error::invalid(format!(
            "split column must lie in 1..{}, got {split}",
            truth.width()
        )));
    }
    let blurred = gaussian_blur(truth, sigma_b)?;
    let compose = |sharp_left: bool| {
        ImageBuffer::from_fn(truth.width(), truth.height(), |x, y| {
            if (x < split) == sharp_left {
                truth.get(x, y)
            } else {
                blurred.get(x, y)
            }
        })
    };
    Ok((compose(true), compose(false)))
}

/// Deterministic piecewise-smooth test scene: a shaded background, random
/// flat shapes with hard edges and a mild oriented texture. This is the
/// ground truth for the synthetic multi-focus harness.
pub fn synthetic_scene(width: usize, height: usize, seed: u64) -> ImageBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (wf, hf) = (width as f64, height as f64);
    let base = rng.gen_range(70.0..110.0);
    let gx = rng.gen_range(-50.0..50.0);
    let gy = rng.gen_range(-50.0..50.0);
    let mut img = ImageBuffer::from_fn(width, height, |x, y| {
        base + gx * (x as f64 / wf) + gy * (y as f64 / hf)
    });

    let shapes = 6 + (width * height) / 2048;
    for _ in 0..shapes {
        let level = rng.gen_range(20.0..235.0);
        let cx = rng.gen_range(0.0..wf);
        let cy = rng.gen_range(0.0..hf);
        let sx = rng.gen_range(0.06..0.25) * wf;
        let sy = rng.gen_range(0.06..0.25) * hf;
        let disc = rng.gen_bool(0.5);
        for y in 0..height {
            for x in 0..width {
                let dx = (x as f64 - cx) / sx;
                let dy = (y as f64 - cy) / sy;
                let inside = if disc {
                    dx * dx + dy * dy <= 1.0
                } else {
                    dx.abs() <= 1.0 && dy.abs() <= 1.0
                };
                if inside {
                    img.set(x, y, level);
                }
            }
        }
    }

    let waves: Vec<(f64, f64, f64, f64)> = (0..3)
        .map(|_| {
            let period = rng.gen_range(5.0..14.0);
            let angle = rng.gen_range(0.0..PI);
            let amp = rng.gen_range(6.0..14.0);
            let phase = rng.gen_range(0.0..2.0 * PI);
            (2.0 * PI / period * angle.cos(), 2.0 * PI / period * angle.sin(), amp, phase)
        })
        .collect();
    for y in 0..height {
        for x in 0..width {
            let t: f64 = waves
                .iter()
                .map(|&(fx, fy, a, ph)| a * (fx * x as f64 + fy * y as f64 + ph).sin())
                .sum();
            let v = img.get(x, y) + t;
            img.set(x, y, v.clamp(5.0, 250.0));
        }
    }
    img
}
