//! Forward degradation models: blur kernel synthesis, tilt warping, and
//! the observation operator `y = k ∗ x + n`.

use crate::conv::{conv2d, Boundary, FilterMode, Kernel2d};
use crate::error::{CoreError, Result};
use crate::rng::{gaussian_noise, SeedRng};
use crate::tensor::ImageTensor;

/// Nonnegative square kernel with odd side, summing to 1.
#[derive(Clone, Debug, PartialEq)]
pub struct BlurKernel {
    side: usize,
    weights: Vec<f64>,
}

impl BlurKernel {
    pub fn new(side: usize, weights: Vec<f64>) -> Result<Self> {
        if side % 2 == 0 || side == 0 {
            return Err(CoreError::invalid(format!(
                "kernel side must be odd, got {side}"
            )));
        }
        if weights.len() != side * side {
            return Err(CoreError::shape(format!(
                "kernel weights length {} does not match side {side}",
                weights.len()
            )));
        }
        if weights.iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(CoreError::invalid("kernel weights must be nonnegative"));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(CoreError::invalid(format!(
                "kernel weights must sum to 1 (±1e-6), got {sum}"
            )));
        }
        Ok(Self { side, weights })
    }

    /// Identity kernel: 1 at the center.
    pub fn delta(side: usize) -> Self {
        let mut weights = vec![0.0; side * side];
        weights[(side / 2) * side + side / 2] = 1.0;
        Self { side, weights }
    }

    pub fn uniform(side: usize) -> Self {
        let n = side * side;
        Self {
            side,
            weights: vec![1.0 / n as f64; n],
        }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.weights[y * self.side + x]
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn to_kernel2d(&self) -> Kernel2d {
        Kernel2d::new(self.side, self.side, self.weights.clone()).expect("square kernel")
    }

    /// Kernel embedded at the center of a `1 × canvas × canvas` tensor.
    pub fn to_canvas(&self, canvas: usize) -> Result<ImageTensor> {
        if canvas < self.side {
            return Err(CoreError::invalid(format!(
                "canvas {canvas} smaller than kernel side {}",
                self.side
            )));
        }
        let off = (canvas - self.side) / 2;
        let mut t = ImageTensor::zeros(1, canvas, canvas);
        for y in 0..self.side {
            for x in 0..self.side {
                t.set(0, y + off, x + off, self.get(y, x));
            }
        }
        Ok(t)
    }
}

/// What to apply, with parameters; randomness comes from the caller's rng.
#[derive(Clone, Debug, PartialEq)]
pub enum DegradationKind {
    GaussianBlur { sigma: f64 },
    MotionBlur { intensity: f64 },
    Turbulence { sigma_psf: f64, tilt_amplitude: f64 },
    Composite(Vec<DegradationKind>),
}

/// A degradation instance: blur family plus additive noise level in [0,1]
/// pixel units (8-bit "noise level 10" maps to 10/255).
#[derive(Clone, Debug, PartialEq)]
pub struct DegradationSpec {
    pub kind: DegradationKind,
    pub noise_sigma: f64,
    pub kernel_side: usize,
}

impl DegradationSpec {
    pub fn new(kind: DegradationKind, noise_sigma: f64, kernel_side: usize) -> Result<Self> {
        let spec = Self {
            kind,
            noise_sigma,
            kernel_side,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.noise_sigma < 0.0 {
            return Err(CoreError::invalid("noise_sigma must be >= 0"));
        }
        if self.kernel_side % 2 == 0 || self.kernel_side < 3 {
            return Err(CoreError::invalid(format!(
                "kernel_side must be odd and >= 3, got {}",
                self.kernel_side
            )));
        }
        validate_kind(&self.kind)
    }
}

fn validate_kind(kind: &DegradationKind) -> Result<()> {
    match kind {
        DegradationKind::GaussianBlur { sigma } => {
            if *sigma <= 0.0 {
                return Err(CoreError::invalid("gaussian sigma must be > 0"));
            }
        }
        DegradationKind::MotionBlur { intensity } => {
            if !(*intensity > 0.0 && *intensity <= 1.0) {
                return Err(CoreError::invalid("motion intensity must be in (0, 1]"));
            }
        }
        DegradationKind::Turbulence {
            sigma_psf,
            tilt_amplitude,
        } => {
            if *sigma_psf <= 0.0 {
                return Err(CoreError::invalid("turbulence sigma_psf must be > 0"));
            }
            if *tilt_amplitude < 0.0 {
                return Err(CoreError::invalid("tilt_amplitude must be >= 0"));
            }
        }
        DegradationKind::Composite(parts) => {
            if parts.is_empty() {
                return Err(CoreError::invalid("composite degradation must be nonempty"));
            }
            for p in parts {
                validate_kind(p)?;
            }
        }
    }
    Ok(())
}

/// Isotropic Gaussian PSF sampled at pixel centers, normalized to sum 1.
pub fn gaussian_kernel(sigma: f64, side: usize) -> Result<BlurKernel> {
    if sigma <= 0.0 {
        return Err(CoreError::invalid(format!("sigma must be > 0, got {sigma}")));
    }
    if side % 2 == 0 || side < 3 {
        return Err(CoreError::invalid(format!(
            "side must be odd and >= 3, got {side}"
        )));
    }
    let c = (side / 2) as f64;
    let mut weights = Vec::with_capacity(side * side);
    for y in 0..side {
        for x in 0..side {
            let dy = y as f64 - c;
            let dx = x as f64 - c;
            weights.push((-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp());
        }
    }
    let sum: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= sum;
    }
    BlurKernel::new(side, weights)
}

const MOTION_WALK_STEPS: usize = 64;

/// Random-walk motion PSF: a persistent-direction trajectory rasterized with
/// bilinear splatting. Higher intensity means longer steps and more erratic
/// heading changes, so support grows with intensity.
pub fn motion_kernel(rng: &mut SeedRng, intensity: f64, side: usize) -> Result<BlurKernel> {
    if !(intensity > 0.0 && intensity <= 1.0) {
        return Err(CoreError::invalid(format!(
            "intensity must be in (0, 1], got {intensity}"
        )));
    }
    if side % 2 == 0 || side < 3 {
        return Err(CoreError::invalid(format!(
            "side must be odd and >= 3, got {side}"
        )));
    }
    let step_len = intensity * side as f64 / 16.0;
    let turn_scale = 2.0 * intensity;
    let mut heading = rng.uniform(0.0, std::f64::consts::TAU);
    let mut pts = Vec::with_capacity(MOTION_WALK_STEPS + 1);
    let (mut py, mut px) = (0.0f64, 0.0f64);
    pts.push((py, px));
    for _ in 0..MOTION_WALK_STEPS {
        heading += turn_scale * rng.standard_normal();
        py += step_len * heading.sin();
        px += step_len * heading.cos();
        pts.push((py, px));
    }
    // Center the trajectory on the kernel grid.
    let my = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
    let mx = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
    let center = (side / 2) as f64;
    let mut weights = vec![0.0; side * side];
    let hi = (side - 1) as f64 - 1e-6;
    for &(y, x) in &pts {
        let gy = (y - my + center).clamp(0.0, hi);
        let gx = (x - mx + center).clamp(0.0, hi);
        let (iy, ix) = (gy.floor() as usize, gx.floor() as usize);
        let (fy, fx) = (gy - iy as f64, gx - ix as f64);
        weights[iy * side + ix] += (1.0 - fy) * (1.0 - fx);
        weights[iy * side + ix + 1] += (1.0 - fy) * fx;
        weights[(iy + 1) * side + ix] += fy * (1.0 - fx);
        weights[(iy + 1) * side + ix + 1] += fy * fx;
    }
    let sum: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= sum;
    }
    BlurKernel::new(side, weights)
}

const TILT_FILTER_SIGMA: f64 = 4.0;

/// Smooth random displacement field: Gaussian-filtered white noise scaled to
/// the requested RMS amplitude (in pixels). Returns (dy, dx) fields.
fn tilt_field(
    rng: &mut SeedRng,
    height: usize,
    width: usize,
    amplitude: f64,
) -> Result<(ImageTensor, ImageTensor)> {
    let side = (2.0 * 3.0 * TILT_FILTER_SIGMA) as usize | 1; // odd, ~6 sigma wide
    let side = side.min((height.min(width) & !1).saturating_sub(1)).max(3);
    let filt = gaussian_kernel(TILT_FILTER_SIGMA, side)?.to_kernel2d();
    let mut fields = Vec::with_capacity(2);
    for axis in 0..2u64 {
        let white = gaussian_noise(&mut rng.substream("tilt", axis), 1, height, width)?;
        let smooth = crate::conv::filter2d(&white, &filt, Boundary::Reflect, FilterMode::Correlate)?;
        let rms = (smooth.sq_norm() / smooth.len() as f64).sqrt();
        let scale = if rms > 0.0 { amplitude / rms } else { 0.0 };
        fields.push(smooth.scale(scale));
    }
    let dx = fields.pop().expect("two fields");
    let dy = fields.pop().expect("two fields");
    Ok((dy, dx))
}

/// Bilinear warp of `x` by per-pixel displacements, clamped at the borders.
fn warp_bilinear(x: &ImageTensor, dy: &ImageTensor, dx: &ImageTensor) -> Result<ImageTensor> {
    if dy.height() != x.height() || dy.width() != x.width() || !dy.same_shape(dx) {
        return Err(CoreError::shape("tilt field shape does not match image"));
    }
    let (h, w) = (x.height(), x.width());
    let mut out = ImageTensor::zeros(x.channels(), h, w);
    for c in 0..x.channels() {
        let src = x.channel(c);
        let dst = out.channel_mut(c);
        for y in 0..h {
            for xx in 0..w {
                let sy = (y as f64 + dy.get(0, y, xx)).clamp(0.0, (h - 1) as f64 - 1e-9);
                let sx = (xx as f64 + dx.get(0, y, xx)).clamp(0.0, (w - 1) as f64 - 1e-9);
                let (iy, ix) = (sy.floor() as usize, sx.floor() as usize);
                let (fy, fx) = (sy - iy as f64, sx - ix as f64);
                let v = (1.0 - fy) * (1.0 - fx) * src[iy * w + ix]
                    + (1.0 - fy) * fx * src[iy * w + ix + 1]
                    + fy * (1.0 - fx) * src[(iy + 1) * w + ix]
                    + fy * fx * src[(iy + 1) * w + ix + 1];
                dst[y * w + xx] = v;
            }
        }
    }
    Ok(out)
}

fn realize_kernel(
    kind: &DegradationKind,
    side: usize,
    rng: &mut SeedRng,
) -> Result<(BlurKernel, Option<(ImageTensor, ImageTensor)>)> {
    match kind {
        DegradationKind::GaussianBlur { sigma } => Ok((gaussian_kernel(*sigma, side)?, None)),
        DegradationKind::MotionBlur { intensity } => {
            Ok((motion_kernel(&mut rng.substream("motion", 0), *intensity, side)?, None))
        }
        DegradationKind::Turbulence {
            sigma_psf,
            tilt_amplitude: _,
        } => Ok((gaussian_kernel(*sigma_psf, side)?, None)),
        DegradationKind::Composite(parts) => {
            let mut kernel: Option<BlurKernel> = None;
            let mut tilt = None;
            for (i, part) in parts.iter().enumerate() {
                let mut sub = rng.substream("composite", i as u64);
                let (k, t) = realize_kernel(part, side, &mut sub)?;
                if t.is_some() {
                    tilt = t;
                }
                kernel = Some(match kernel {
                    None => k,
                    Some(prev) => compose_kernels(&prev, &k, side)?,
                });
            }
            Ok((kernel.expect("nonempty composite"), tilt))
        }
    }
}

/// Convolution of two kernels, truncated to `side` and renormalized.
fn compose_kernels(a: &BlurKernel, b: &BlurKernel, side: usize) -> Result<BlurKernel> {
    let canvas = a.to_canvas(side)?;
    let blurred = conv2d(&canvas, &b.to_kernel2d(), Boundary::Zero)?;
    let mut weights: Vec<f64> = blurred.data().to_vec();
    let sum: f64 = weights.iter().sum();
    if sum <= 0.0 {
        return Ok(BlurKernel::uniform(side));
    }
    for w in &mut weights {
        *w = w.max(0.0) / sum;
    }
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    BlurKernel::new(side, weights)
}

/// Apply a degradation: `y = k ∗ x + n` under reflect boundary, with the
/// turbulence kind warping by a tilt field before the PSF. Returns the
/// degraded observation and the realized kernel.
pub fn apply_degradation(
    x: &ImageTensor,
    spec: &DegradationSpec,
    rng: &mut SeedRng,
) -> Result<(ImageTensor, BlurKernel)> {
    spec.validate()?;
    x.check_finite("apply_degradation input")?;
    let mut kernel_rng = rng.substream("kernel", 0);
    let (kernel, _) = realize_kernel(&spec.kind, spec.kernel_side, &mut kernel_rng)?;

    let pre = match tilt_of(&spec.kind) {
        Some(amplitude) if amplitude > 0.0 => {
            let mut tilt_rng = rng.substream("tiltfield", 0);
            let (dy, dx) = tilt_field(&mut tilt_rng, x.height(), x.width(), amplitude)?;
            warp_bilinear(x, &dy, &dx)?
        }
        _ => x.clone(),
    };

    let mut y = conv2d(&pre, &kernel.to_kernel2d(), Boundary::Reflect)?;
    if spec.noise_sigma > 0.0 {
        let n = gaussian_noise(
            &mut rng.substream("noise", 0),
            y.channels(),
            y.height(),
            y.width(),
        )?;
        y.axpy(spec.noise_sigma, &n)?;
    }
    y.check_finite("apply_degradation output")?;
    Ok((y, kernel))
}

fn tilt_of(kind: &DegradationKind) -> Option<f64> {
    match kind {
        DegradationKind::Turbulence { tilt_amplitude, .. } => Some(*tilt_amplitude),
        DegradationKind::Composite(parts) => parts.iter().find_map(tilt_of),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wavelet::{dwt2, subband_sq_norms};

    #[test]
    fn gaussian_near_delta_for_tiny_sigma() {
        let k = gaussian_kernel(0.1, 21).unwrap();
        let center = k.get(10, 10);
        assert!(center > 0.999, "center {center}");
    }

    #[test]
    fn gaussian_symmetric_under_rotation() {
        let k = gaussian_kernel(2.3, 15).unwrap();
        let s = k.side();
        let mut max_asym: f64 = 0.0;
        for y in 0..s {
            for x in 0..s {
                // 90-degree rotation: (y, x) -> (x, s-1-y)
                let r = k.get(x, s - 1 - y);
                max_asym = max_asym.max((k.get(y, x) - r).abs());
            }
        }
        assert!(max_asym < 1e-12, "asymmetry {max_asym}");
    }

    #[test]
    fn gaussian_sums_to_one() {
        let k = gaussian_kernel(3.0, 21).unwrap();
        assert!((k.sum() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn gaussian_rejects_even_side() {
        assert!(gaussian_kernel(1.0, 20).is_err());
        assert!(gaussian_kernel(0.0, 21).is_err());
    }

    #[test]
    fn motion_kernel_reproducible() {
        let root = SeedRng::new(404);
        let a = motion_kernel(&mut root.substream("k", 9), 0.5, 21).unwrap();
        let b = motion_kernel(&mut root.substream("k", 9), 0.5, 21).unwrap();
        assert_eq!(a.weights(), b.weights());
    }

    #[test]
    fn motion_kernel_is_valid_blur_kernel() {
        let root = SeedRng::new(1);
        for i in 0..20 {
            let k = motion_kernel(&mut root.substream("k", i), 0.7, 15).unwrap();
            assert!((k.sum() - 1.0).abs() < 1e-9);
            assert!(k.weights().iter().all(|&w| w >= 0.0));
        }
    }

    #[test]
    fn motion_kernel_support_in_regression_range() {
        // Empirical bound over 100 seeded draws at intensity 0.5, side 21.
        let root = SeedRng::new(2024);
        for i in 0..100 {
            let k = motion_kernel(&mut root.substream("support", i), 0.5, 21).unwrap();
            let support = k.weights().iter().filter(|&&w| w > 1e-4).count();
            assert!(
                (5..=21 * 21 / 2).contains(&support),
                "draw {i}: support {support}"
            );
        }
    }

    #[test]
    fn delta_kernel_zero_noise_is_identity() {
        let x = ImageTensor::from_fn(3, 16, 16, |c, y, xx| ((c + y + xx) % 9) as f64 / 9.0);
        let spec = DegradationSpec::new(
            DegradationKind::GaussianBlur { sigma: 0.05 },
            0.0,
            9,
        )
        .unwrap();
        // sigma 0.05 yields a numerically exact delta at f64.
        let (y, k) = apply_degradation(&x, &spec, &mut SeedRng::new(0)).unwrap();
        assert!(k.get(4, 4) > 1.0 - 1e-12);
        assert!(y.max_abs_diff(&x) < 1e-12);
    }

    #[test]
    fn noise_std_matches_spec_level() {
        // Noise level 10 in 8-bit units = 10/255; delta blur isolates it.
        let x = ImageTensor::from_fn(1, 64, 64, |_, y, xx| ((y ^ xx) % 13) as f64 / 13.0);
        let sigma = 10.0 / 255.0;
        let spec = DegradationSpec::new(
            DegradationKind::GaussianBlur { sigma: 0.05 },
            sigma,
            9,
        )
        .unwrap();
        let (y, _) = apply_degradation(&x, &spec, &mut SeedRng::new(7)).unwrap();
        let diff = y.sub(&x).unwrap();
        let std = (diff.sq_norm() / diff.len() as f64).sqrt();
        assert!(
            (std - sigma).abs() < 0.05 * sigma,
            "std {std} vs sigma {sigma}"
        );
    }

    #[test]
    fn constant_image_survives_blur() {
        let x = ImageTensor::from_fn(1, 32, 32, |_, _, _| 0.42);
        let spec =
            DegradationSpec::new(DegradationKind::GaussianBlur { sigma: 3.0 }, 0.0, 21).unwrap();
        let (y, _) = apply_degradation(&x, &spec, &mut SeedRng::new(3)).unwrap();
        assert!(y.max_abs_diff(&x) < 1e-12);
    }

    #[test]
    fn degradation_deterministic_given_seed() {
        let x = ImageTensor::from_fn(3, 32, 32, |c, y, xx| ((c * 31 + y * 7 + xx) % 11) as f64 / 11.0);
        let spec = DegradationSpec::new(
            DegradationKind::MotionBlur { intensity: 0.5 },
            10.0 / 255.0,
            21,
        )
        .unwrap();
        let (y1, k1) = apply_degradation(&x, &spec, &mut SeedRng::new(55)).unwrap();
        let (y2, k2) = apply_degradation(&x, &spec, &mut SeedRng::new(55)).unwrap();
        assert_eq!(y1.data(), y2.data());
        assert_eq!(k1.weights(), k2.weights());
    }

    #[test]
    fn blur_reduces_high_frequency_energy() {
        // Gaussian blur with sigma >= 1 must not increase detail-band energy.
        let mk_image = |seed: u64| {
            let mut rng = SeedRng::new(seed).substream("img", 0);
            let base = gaussian_noise(&mut rng, 1, 32, 32).unwrap();
            base.map(|v| (0.5 + 0.2 * v).clamp(0.0, 1.0))
        };
        let spec =
            DegradationSpec::new(DegradationKind::GaussianBlur { sigma: 1.5 }, 0.0, 13).unwrap();
        for seed in 0..20 {
            let x = mk_image(seed);
            let (y, _) = apply_degradation(&x, &spec, &mut SeedRng::new(seed)).unwrap();
            let hf = |t: &ImageTensor| {
                let (_, lh, hl, hh) = subband_sq_norms(&dwt2(t).unwrap());
                lh + hl + hh
            };
            assert!(hf(&y) <= hf(&x), "seed {seed}");
        }
    }

    #[test]
    fn turbulence_applies_gaussian_psf_and_warp() {
        let x = ImageTensor::from_fn(3, 32, 32, |_, y, xx| ((y / 4 + xx / 4) % 2) as f64);
        let spec = DegradationSpec::new(
            DegradationKind::Turbulence {
                sigma_psf: 2.0,
                tilt_amplitude: 1.0,
            },
            0.0,
            13,
        )
        .unwrap();
        let (y, k) = apply_degradation(&x, &spec, &mut SeedRng::new(9)).unwrap();
        // Realized kernel is the Gaussian PSF.
        let want = gaussian_kernel(2.0, 13).unwrap();
        assert_eq!(k.weights(), want.weights());
        assert!(y.is_finite());
        assert!(y.max_abs_diff(&x) > 0.01, "turbulence should change the image");
        // Deterministic.
        let (y2, _) = apply_degradation(&x, &spec, &mut SeedRng::new(9)).unwrap();
        assert_eq!(y.data(), y2.data());
    }

    #[test]
    fn composite_composes_kernels() {
        let x = ImageTensor::from_fn(1, 32, 32, |_, y, xx| ((y + xx) % 5) as f64 / 5.0);
        let spec = DegradationSpec::new(
            DegradationKind::Composite(vec![
                DegradationKind::GaussianBlur { sigma: 1.0 },
                DegradationKind::GaussianBlur { sigma: 1.0 },
            ]),
            0.0,
            15,
        )
        .unwrap();
        let (_, k) = apply_degradation(&x, &spec, &mut SeedRng::new(4)).unwrap();
        // Two sigma-1 Gaussians compose to roughly sigma sqrt(2).
        let want = gaussian_kernel(std::f64::consts::SQRT_2, 15).unwrap();
        let mse: f64 = k
            .weights()
            .iter()
            .zip(want.weights())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        assert!(mse < 1e-6, "mse {mse}");
        assert!((k.sum() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn blur_kernel_ctor_validates() {
        assert!(BlurKernel::new(4, vec![1.0 / 16.0; 16]).is_err()); // even side
        assert!(BlurKernel::new(3, vec![0.2; 9]).is_err()); // sum 1.8
        let mut w = vec![1.0 / 9.0; 9];
        w[0] = -0.1;
        assert!(BlurKernel::new(3, w).is_err()); // negative
    }
}
