//! Restoration and fusion quality metrics.

use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};
use crate::imageio::{quantize, ImageBuffer};

pub const PSNR_CAP_DB: f64 = 150.0;

pub fn mse(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    a.same_dims(b)?;
    let n = a.pixels().len() as f64;
    Ok(a.pixels()
        .iter()
        .zip(b.pixels())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / n)
}

/// `10·log10(255² / mse)` in dB, capped at [`PSNR_CAP_DB`].
pub fn psnr(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    let e = mse(a, b)?;
    if e < 1e-12 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (255.0f64 * 255.0 / e).log10()).min(PSNR_CAP_DB))
}

/// 256x256 joint histogram of two quantized images.
#[derive(Debug, Clone)]
pub struct JointHistogram {
    bins: Vec<u32>,
    marginal_a: [u32; 256],
    marginal_b: [u32; 256],
    total: u32,
}

impl JointHistogram {
    pub fn new(a: &ImageBuffer, b: &ImageBuffer) -> Result<Self> {
        a.same_dims(b)?;
        let mut bins = vec![0u32; 256 * 256];
        let mut marginal_a = [0u32; 256];
        let mut marginal_b = [0u32; 256];
        for (&pa, &pb) in a.pixels().iter().zip(b.pixels()) {
            let (qa, qb) = (quantize(pa) as usize, quantize(pb) as usize);
            bins[qa * 256 + qb] += 1;
            marginal_a[qa] += 1;
            marginal_b[qb] += 1;
        }
        Ok(JointHistogram {
            bins,
            marginal_a,
            marginal_b,
            total: a.pixels().len() as u32,
        })
    }

    pub fn bin(&self, a: u8, b: u8) -> u32 {
        self.bins[a as usize * 256 + b as usize]
    }

    pub fn marginal_a(&self) -> &[u32; 256] {
        &self.marginal_a
    }

    pub fn marginal_b(&self) -> &[u32; 256] {
        &self.marginal_b
    }

    pub fn total(&self) -> u32 {
        self.total
    }

    pub fn joint_entropy(&self) -> f64 {
        entropy_of_counts(&self.bins, self.total)
    }

    pub fn mutual_information(&self) -> f64 {
        let h = entropy_of_counts(&self.marginal_a, self.total) + entropy_of_counts(&self.marginal_b, self.total)
            - self.joint_entropy();
        h.max(0.0)
    }
}

/// Shannon entropy in bits, with `0·log 0 = 0`.
fn entropy_of_counts(counts: &[u32], total: u32) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let t = f64::from(total);
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = f64::from(c) / t;
            -p * p.log2()
        })
        .sum()
}

/// Entropy of the 256-bin histogram of the quantized image, in bits.
pub fn entropy(a: &ImageBuffer) -> f64 {
    let mut counts = [0u32; 256];
    for &p in a.pixels() {
        counts[quantize(p) as usize] += 1;
    }
    entropy_of_counts(&counts, a.pixels().len() as u32)
}

/// `H(A) + H(B) − H(A,B)` in bits.
pub fn mutual_information(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    Ok(JointHistogram::new(a, b)?.mutual_information())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QmiReport {
    pub value: f64,
    /// Set when a term had `H(source) + H(F) = 0` and was scored as 0.
    pub degenerate: bool,
}

/// `I(A;F)/(H(A)+H(F)) + I(B;F)/(H(B)+H(F))`, in [0, 1].
pub fn q_mi_report(a: &ImageBuffer, b: &ImageBuffer, f: &ImageBuffer) -> Result<QmiReport> {
    a.same_dims(b)?;
    a.same_dims(f)?;
    let hf = entropy(f);
    let mut degenerate = false;
    let mut term = |src: &ImageBuffer| -> Result<f64> {
        let denom = entropy(src) + hf;
        if denom <= 0.0 {
            degenerate = true;
            return Ok(0.0);
        }
        Ok(mutual_information(src, f)? / denom)
    };
    let value = term(a)? + term(b)?;
    Ok(QmiReport {
        value: value.clamp(0.0, 1.0),
        degenerate,
    })
}

pub fn q_mi(a: &ImageBuffer, b: &ImageBuffer, f: &ImageBuffer) -> Result<f64> {
    Ok(q_mi_report(a, b, f)?.value)
}

/// Per-pixel Sobel edge strength and orientation.
#[derive(Debug, Clone)]
pub struct EdgeMap {
    pub width: usize,
    pub height: usize,
    pub strength: Vec<f64>,
    /// In (−π/2, π/2].
    pub orientation: Vec<f64>,
}

impl EdgeMap {
    /// Sobel responses with replicated borders.
    pub fn sobel(img: &ImageBuffer) -> Result<Self> {
        let (w, h) = img.dims();
        if w < 3 || h < 3 {
            return Err(Error::invalid(format!(
                "edge maps need at least 3x3 pixels, got {w}x{h}"
            )));
        }
        let at = |x: isize, y: isize| {
            let xc = x.clamp(0, w as isize - 1) as usize;
            let yc = y.clamp(0, h as isize - 1) as usize;
            img.get(xc, yc)
        };
        let mut strength = Vec::with_capacity(w * h);
        let mut orientation = Vec::with_capacity(w * h);
        for y in 0..h as isize {
            for x in 0..w as isize {
                let sx = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
                    - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
                let sy = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
                    - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
                strength.push((sx * sx + sy * sy).sqrt());
                orientation.push(if sx == 0.0 {
                    if sy == 0.0 {
                        0.0
                    } else {
                        FRAC_PI_2
                    }
                } else {
                    (sy / sx).atan()
                });
            }
        }
        Ok(EdgeMap {
            width: w,
            height: h,
            strength,
            orientation,
        })
    }
}

/// Sigmoid constants of the edge-preservation metric.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QabfParams {
    pub gamma_g: f64,
    pub kappa_g: f64,
    pub sigma_g: f64,
    pub gamma_a: f64,
    pub kappa_a: f64,
    pub sigma_a: f64,
    /// Exponent applied to source edge strength to form pixel weights.
    pub weight_exp: f64,
}

impl Default for QabfParams {
    fn default() -> Self {
        QabfParams {
            gamma_g: 0.9994,
            kappa_g: -15.0,
            sigma_g: 0.5,
            gamma_a: 0.9879,
            kappa_a: -22.0,
            sigma_a: 0.8,
            weight_exp: 1.0,
        }
    }
}

impl QabfParams {
    fn sigmoid(gamma: f64, kappa: f64, sigma: f64, x: f64) -> f64 {
        gamma / (1.0 + (kappa * (x - sigma)).exp())
    }

    /// Strength and orientation factors, each divided by its value at
    /// perfect agreement so that identical edges score exactly 1.
    fn preservation(&self, g_ratio: f64, agreement: f64) -> f64 {
        let qg = Self::sigmoid(self.gamma_g, self.kappa_g, self.sigma_g, g_ratio)
            / Self::sigmoid(self.gamma_g, self.kappa_g, self.sigma_g, 1.0);
        let qa = Self::sigmoid(self.gamma_a, self.kappa_a, self.sigma_a, agreement)
            / Self::sigmoid(self.gamma_a, self.kappa_a, self.sigma_a, 1.0);
        qg * qa
    }

    /// Per-pixel preservation of source edges in `fused`, plus its weight.
    fn transfer(&self, src: &EdgeMap, fused: &EdgeMap, k: usize) -> (f64, f64) {
        let (gs, gf) = (src.strength[k], fused.strength[k]);
        let weight = gs.powf(self.weight_exp);
        if gs == 0.0 && gf == 0.0 {
            return (1.0, 0.0);
        }
        let ratio = if gs > gf { gf / gs } else { gs / gf };
        let delta = (src.orientation[k] - fused.orientation[k]).abs();
        let agreement = (delta - FRAC_PI_2).abs() / FRAC_PI_2;
        (self.preservation(ratio, agreement), weight)
    }
}

/// Edge-transfer metric with the default constants.
pub fn q_abf(a: &ImageBuffer, b: &ImageBuffer, f: &ImageBuffer) -> Result<f64> {
    q_abf_with(a, b, f, &QabfParams::default())
}

pub fn q_abf_with(a: &ImageBuffer, b: &ImageBuffer, f: &ImageBuffer, params: &QabfParams) -> Result<f64> {
    a.same_dims(b)?;
    a.same_dims(f)?;
    let (ea, eb, ef) = (EdgeMap::sobel(a)?, EdgeMap::sobel(b)?, EdgeMap::sobel(f)?);
    let mut num = 0.0;
    let mut den = 0.0;
    for k in 0..ea.strength.len() {
        let (qa, wa) = params.transfer(&ea, &ef, k);
        let (qb, wb) = params.transfer(&eb, &ef, k);
        num += qa * wa + qb * wb;
        den += wa + wb;
    }
    if den == 0.0 {
        return Ok(1.0);
    }
    Ok((num / den).clamp(0.0, 1.0))
}

/// Metrics for one fused output.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub q_mi: f64,
    pub q_abf: f64,
    /// Against ground truth, when one is available.
    pub psnr_db: Option<f64>,
    pub mse: Option<f64>,
}

impl MetricReport {
    pub fn evaluate(
        a: &ImageBuffer,
        b: &ImageBuffer,
        fused: &ImageBuffer,
        truth: Option<&ImageBuffer>,
    ) -> Result<Self> {
        let (psnr_db, mse_v) = match truth {
            Some(t) => (Some(psnr(fused, t)?), Some(mse(fused, t)?)),
            None => (None, None),
        };
        Ok(MetricReport {
            q_mi: q_mi(a, b, fused)?,
            q_abf: q_abf(a, b, fused)?,
            psnr_db,
            mse: mse_v,
        })
    }

    pub fn to_kv(&self) -> String {
        let mut s = format!("q_mi={:.6}\nq_abf={:.6}\n", self.q_mi, self.q_abf);
        if let Some(p) = self.psnr_db {
            s.push_str(&format!("psnr_db={p:.4}\n"));
        }
        if let Some(m) = self.mse {
            s.push_str(&format!("mse={m:.6}\n"));
        }
        s
    }
}
