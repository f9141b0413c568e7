//! Reconstruction metrics: PSNR, a windowed SSIM proxy, and
//! translation-invariant kernel recovery error.

use crate::conv::{filter2d, Boundary, FilterMode, Kernel2d};
use crate::degrade::BlurKernel;
use crate::error::{CoreError, Result};
use crate::tensor::ImageTensor;

/// PSNR outcome; identical inputs are flagged instead of producing +inf.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Psnr {
    Db(f64),
    Identical,
}

impl Psnr {
    pub fn as_db(self) -> Option<f64> {
        match self {
            Psnr::Db(v) => Some(v),
            Psnr::Identical => None,
        }
    }
}

impl std::fmt::Display for Psnr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Psnr::Db(v) => write!(f, "{v}"),
            Psnr::Identical => write!(f, "identical"),
        }
    }
}

/// `10·log10(peak² / MSE)` with MSE the mean squared difference.
pub fn psnr(a: &ImageTensor, b: &ImageTensor, peak: f64) -> Result<Psnr> {
    a.check_same_shape(b, "psnr")?;
    if peak <= 0.0 {
        return Err(CoreError::invalid(format!("psnr peak must be > 0, got {peak}")));
    }
    let n = a.len() as f64;
    let mse: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum::<f64>()
        / n;
    if mse == 0.0 {
        return Ok(Psnr::Identical);
    }
    Ok(Psnr::Db(10.0 * (peak * peak / mse).log10()))
}

const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_PEAK: f64 = 1.0;

fn gaussian_window(side: usize) -> Kernel2d {
    let c = (side / 2) as f64;
    let mut data = Vec::with_capacity(side * side);
    for y in 0..side {
        for x in 0..side {
            let dy = y as f64 - c;
            let dx = x as f64 - c;
            data.push((-(dx * dx + dy * dy) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp());
        }
    }
    let sum: f64 = data.iter().sum();
    for v in &mut data {
        *v /= sum;
    }
    Kernel2d::new(side, side, data).expect("window shape")
}

/// Mean local SSIM over the image, channels averaged.
///
/// Gaussian window (σ = 1.5), K1 = 0.01, K2 = 0.03, dynamic range 1.0
/// (pixels live in [0,1]); local statistics use reflect boundary. Stands in
/// for perceptual metrics that need pretrained networks.
pub fn ssim(a: &ImageTensor, b: &ImageTensor, window: usize) -> Result<f64> {
    a.check_same_shape(b, "ssim")?;
    if window % 2 == 0 {
        return Err(CoreError::invalid(format!(
            "ssim window must be odd, got {window}"
        )));
    }
    if window > a.height() || window > a.width() {
        return Err(CoreError::invalid(format!(
            "ssim window {window} larger than image {}x{}",
            a.height(),
            a.width()
        )));
    }
    let w = gaussian_window(window);
    let c1 = (SSIM_K1 * SSIM_PEAK) * (SSIM_K1 * SSIM_PEAK);
    let c2 = (SSIM_K2 * SSIM_PEAK) * (SSIM_K2 * SSIM_PEAK);

    let smooth = |x: &ImageTensor| filter2d(x, &w, Boundary::Reflect, FilterMode::Correlate);
    let mu_a = smooth(a)?;
    let mu_b = smooth(b)?;
    let aa = smooth(&a.zip_map(a, |x, y| x * y)?)?;
    let bb = smooth(&b.zip_map(b, |x, y| x * y)?)?;
    let ab = smooth(&a.zip_map(b, |x, y| x * y)?)?;

    let mut acc = 0.0;
    for i in 0..a.len() {
        let (ma, mb) = (mu_a.data()[i], mu_b.data()[i]);
        let va = aa.data()[i] - ma * ma;
        let vb = bb.data()[i] - mb * mb;
        let cov = ab.data()[i] - ma * mb;
        let num = (2.0 * ma * mb + c1) * (2.0 * cov + c2);
        let den = (ma * ma + mb * mb + c1) * (va + vb + c2);
        acc += num / den;
    }
    Ok(acc / a.len() as f64)
}

/// Mean squared kernel difference after aligning both centers of mass to the
/// grid center (integer shift), so pure translations score zero change.
///
/// Kernels of different sides are zero-padded to the larger side first.
pub fn kernel_mse(k_rec: &BlurKernel, k_true: &BlurKernel) -> f64 {
    let side = k_rec.side().max(k_true.side());
    let a = recenter(&pad_to(k_rec, side), side);
    let b = recenter(&pad_to(k_true, side), side);
    let n = (side * side) as f64;
    a.iter()
        .zip(b.iter())
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum::<f64>()
        / n
}

fn pad_to(k: &BlurKernel, side: usize) -> Vec<f64> {
    let off = (side - k.side()) / 2;
    let mut out = vec![0.0; side * side];
    for y in 0..k.side() {
        for x in 0..k.side() {
            out[(y + off) * side + (x + off)] = k.get(y, x);
        }
    }
    out
}

fn recenter(w: &[f64], side: usize) -> Vec<f64> {
    let total: f64 = w.iter().sum();
    if total <= 0.0 {
        return w.to_vec();
    }
    let mut cy = 0.0;
    let mut cx = 0.0;
    for y in 0..side {
        for x in 0..side {
            let v = w[y * side + x];
            cy += v * y as f64;
            cx += v * x as f64;
        }
    }
    let center = (side / 2) as f64;
    let dy = (center - cy / total).round() as isize;
    let dx = (center - cx / total).round() as isize;
    let mut out = vec![0.0; side * side];
    for y in 0..side as isize {
        for x in 0..side as isize {
            let (sy, sx) = (y - dy, x - dx);
            if (0..side as isize).contains(&sy) && (0..side as isize).contains(&sx) {
                out[(y * side as isize + x) as usize] = w[(sy * side as isize + sx) as usize];
            }
        }
    }
    out
}

/// One evaluation row; serialized via [`METRICS_CSV_HEADER`].
#[derive(Clone, Debug)]
pub struct MetricRecord {
    pub image_id: String,
    pub run_label: String,
    pub psnr_db: Psnr,
    pub ssim: f64,
    pub kernel_mse: f64,
}

pub const METRICS_CSV_HEADER: &str = "image_id,run_label,psnr_db,ssim,kernel_mse";

impl MetricRecord {
    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.image_id, self.run_label, self.psnr_db, self.ssim, self.kernel_mse
        )
    }
}

/// Mean PSNR (dB) over records, ignoring `Identical` sentinels.
pub fn mean_psnr(records: &[MetricRecord]) -> f64 {
    let vals: Vec<f64> = records.iter().filter_map(|r| r.psnr_db.as_db()).collect();
    if vals.is_empty() {
        f64::NAN
    } else {
        vals.iter().sum::<f64>() / vals.len() as f64
    }
}

pub fn mean_ssim(records: &[MetricRecord]) -> f64 {
    if records.is_empty() {
        f64::NAN
    } else {
        records.iter().map(|r| r.ssim).sum::<f64>() / records.len() as f64
    }
}

pub fn mean_kernel_mse(records: &[MetricRecord]) -> f64 {
    if records.is_empty() {
        f64::NAN
    } else {
        records.iter().map(|r| r.kernel_mse).sum::<f64>() / records.len() as f64
    }
}
