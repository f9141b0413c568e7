//! Forward corruption, the Tweedie clean estimate, and the ancestral
//! reverse step.

use crate::error::{CoreError, Result};
use crate::schedule::NoiseSchedule;
use crate::tensor::ImageTensor;

/// Forward corruption to step `t`: `x_t = √ᾱ_t·x₀ + √(1−ᾱ_t)·ε`.
pub fn q_sample(
    schedule: &NoiseSchedule,
    x0: &ImageTensor,
    t: usize,
    eps: &ImageTensor,
) -> Result<ImageTensor> {
    schedule.validate_t(t)?;
    x0.check_same_shape(eps, "q_sample")?;
    let ab = schedule.alpha_bar(t);
    let (sa, sb) = (ab.sqrt(), (1.0 - ab).sqrt());
    x0.zip_map(eps, |x, e| sa * x + sb * e)
}

/// Clean estimate from a noisy state and predicted noise:
/// `x̂₀ = (x_t − √(1−ᾱ_t)·ε̂) / √ᾱ_t`, the exact inverse of [`q_sample`].
pub fn tweedie_x0(
    schedule: &NoiseSchedule,
    x_t: &ImageTensor,
    t: usize,
    eps_hat: &ImageTensor,
) -> Result<ImageTensor> {
    schedule.validate_t(t)?;
    x_t.check_same_shape(eps_hat, "tweedie_x0")?;
    let ab = schedule.alpha_bar(t);
    let (sa, sb) = (ab.sqrt(), (1.0 - ab).sqrt());
    x_t.zip_map(eps_hat, |x, e| (x - sb * e) / sa)
}

/// Coefficients of the Tweedie estimate: `x̂₀ = c_x·x_t + c_e·ε̂`.
/// Gradient code chains through these directly.
pub fn tweedie_coeffs(schedule: &NoiseSchedule, t: usize) -> (f64, f64) {
    let ab = schedule.alpha_bar(t);
    (1.0 / ab.sqrt(), -(1.0 - ab).sqrt() / ab.sqrt())
}

/// One reverse step:
/// `x_{t−1} = (x_t − (1−α_t)/√(1−ᾱ_t)·ε̂)/√α_t + σ_t·z`.
///
/// The final step (`t = 1`) is deterministic; a nonzero `z` there is
/// rejected rather than silently ignored.
pub fn ancestral_step(
    schedule: &NoiseSchedule,
    x_t: &ImageTensor,
    t: usize,
    eps_hat: &ImageTensor,
    z: &ImageTensor,
) -> Result<ImageTensor> {
    schedule.validate_t(t)?;
    x_t.check_same_shape(eps_hat, "ancestral_step eps")?;
    x_t.check_same_shape(z, "ancestral_step z")?;
    if t == 1 && z.data().iter().any(|&v| v != 0.0) {
        return Err(CoreError::invalid(
            "ancestral_step: z must be zero at t = 1 (final step is deterministic)",
        ));
    }
    let a = schedule.alpha(t);
    let ab = schedule.alpha_bar(t);
    let coeff = (1.0 - a) / (1.0 - ab).sqrt();
    let inv_sqrt_a = 1.0 / a.sqrt();
    let sigma = schedule.sigma(t);
    let mut out = x_t.zip_map(eps_hat, |x, e| inv_sqrt_a * (x - coeff * e))?;
    if sigma != 0.0 {
        out.axpy(sigma, z)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{psnr, Psnr};
    use crate::rng::{gaussian_noise, SeedRng};
    use crate::tensor::correlation;

    fn schedule_1000() -> NoiseSchedule {
        NoiseSchedule::make(1000, 1e-4, 0.02).unwrap()
    }

    #[test]
    fn q_sample_with_zero_noise_scales_input() {
        let s = schedule_1000();
        let x0 = ImageTensor::from_fn(1, 4, 4, |_, y, x| (y + x) as f64 / 8.0);
        let eps = ImageTensor::zeros(1, 4, 4);
        let xt = q_sample(&s, &x0, 300, &eps).unwrap();
        let want = x0.scale(s.alpha_bar(300).sqrt());
        assert!(xt.max_abs_diff(&want) < 1e-15);
    }

    #[test]
    fn q_sample_variance_matches_one_minus_alpha_bar() {
        // Monte Carlo over 1e4 draws of a single pixel: var = 1 - alpha_bar.
        let s = schedule_1000();
        let t = 400;
        let x0 = ImageTensor::from_fn(1, 1, 1, |_, _, _| 0.5);
        let mut rng = SeedRng::new(11).substream("var", 0);
        let n = 10_000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..n {
            let eps = gaussian_noise(&mut rng, 1, 1, 1).unwrap();
            let v = q_sample(&s, &x0, t, &eps).unwrap().data()[0];
            sum += v;
            sum_sq += v * v;
        }
        let mean = sum / n as f64;
        let var = sum_sq / n as f64 - mean * mean;
        let want = 1.0 - s.alpha_bar(t);
        assert!(
            (var - want).abs() < 0.05 * want,
            "var {var} vs expected {want}"
        );
    }

    #[test]
    fn terminal_state_decorrelates_from_input() {
        let s = schedule_1000();
        // A structured toy image.
        let x0 = ImageTensor::from_fn(3, 16, 16, |c, y, x| {
            let fx = (x as f64 / 16.0 * std::f64::consts::TAU * 2.0).sin();
            let fy = (y as f64 / 16.0 * std::f64::consts::TAU).cos();
            0.5 + 0.25 * fx * fy + 0.05 * c as f64
        });
        let mut rng = SeedRng::new(21).substream("eps", 0);
        let eps = gaussian_noise(&mut rng, 3, 16, 16).unwrap();
        let xt = q_sample(&s, &x0, 1000, &eps).unwrap();
        let r = correlation(&xt, &x0).unwrap();
        assert!(r.abs() < 0.1, "correlation {r}");
    }

    #[test]
    fn tweedie_inverts_q_sample() {
        let s = schedule_1000();
        let mut rng = SeedRng::new(31);
        let x0 = gaussian_noise(&mut rng.substream("x0", 0), 2, 8, 8).unwrap();
        for t in [1, 17, 250, 999, 1000] {
            let eps = gaussian_noise(&mut rng.substream("eps", t as u64), 2, 8, 8).unwrap();
            let xt = q_sample(&s, &x0, t, &eps).unwrap();
            let rec = tweedie_x0(&s, &xt, t, &eps).unwrap();
            assert!(rec.max_abs_diff(&x0) < 1e-5, "t = {t}");
        }
    }

    #[test]
    fn tweedie_with_zero_eps_rescales() {
        let s = schedule_1000();
        let xt = ImageTensor::from_fn(1, 2, 2, |_, y, x| (y * 2 + x) as f64);
        let zero = ImageTensor::zeros(1, 2, 2);
        let out = tweedie_x0(&s, &xt, 100, &zero).unwrap();
        let want = xt.scale(1.0 / s.alpha_bar(100).sqrt());
        assert!(out.max_abs_diff(&want) < 1e-15);
    }

    #[test]
    fn tweedie_near_identity_at_t1() {
        let s = schedule_1000();
        assert!((s.alpha_bar(1) - 0.9999).abs() < 1e-12);
        let xt = ImageTensor::from_fn(1, 2, 2, |_, y, x| 1.0 + (y + x) as f64);
        let zero = ImageTensor::zeros(1, 2, 2);
        let out = tweedie_x0(&s, &xt, 1, &zero).unwrap();
        // Scale factor 1/sqrt(0.9999) is within 1.01.
        for (o, x) in out.data().iter().zip(xt.data()) {
            assert!((o / x) > 1.0 && (o / x) < 1.01);
        }
    }

    #[test]
    fn ancestral_step_with_zero_inputs() {
        let s = schedule_1000();
        let xt = ImageTensor::from_fn(1, 2, 2, |_, y, x| (y + 2 * x) as f64);
        let zero = ImageTensor::zeros(1, 2, 2);
        let out = ancestral_step(&s, &xt, 500, &zero, &zero).unwrap();
        let want = xt.scale(1.0 / s.alpha(500).sqrt());
        assert!(out.max_abs_diff(&want) < 1e-15);
    }

    #[test]
    fn ancestral_step_near_identity_when_beta_tiny() {
        let s = NoiseSchedule::make(10, 1e-12, 1e-12).unwrap();
        let xt = ImageTensor::from_fn(1, 3, 3, |_, y, x| (y * 3 + x) as f64);
        let zero = ImageTensor::zeros(1, 3, 3);
        let out = ancestral_step(&s, &xt, 5, &zero, &zero).unwrap();
        assert!(out.max_abs_diff(&xt) < 1e-9);
    }

    #[test]
    fn nonzero_z_rejected_at_final_step() {
        let s = schedule_1000();
        let xt = ImageTensor::zeros(1, 2, 2);
        let z = ImageTensor::from_fn(1, 2, 2, |_, _, _| 1.0);
        assert!(ancestral_step(&s, &xt, 1, &xt.clone(), &z).is_err());
        // t > 1 accepts noise.
        assert!(ancestral_step(&s, &xt, 2, &xt.clone(), &z).is_ok());
    }

    #[test]
    fn deterministic_step_is_bit_stable() {
        let s = schedule_1000();
        let mut rng = SeedRng::new(41);
        let xt = gaussian_noise(&mut rng.substream("x", 0), 1, 4, 4).unwrap();
        let eps = gaussian_noise(&mut rng.substream("e", 0), 1, 4, 4).unwrap();
        let zero = ImageTensor::zeros(1, 4, 4);
        let a = ancestral_step(&s, &xt, 1, &eps, &zero).unwrap();
        let b = ancestral_step(&s, &xt, 1, &eps, &zero).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn oracle_reverse_pass_reconstructs_training_image() {
        // With eps_hat set from the forward-process ground truth at each
        // step, the reverse chain lands exactly on x0 at t = 1.
        let s = schedule_1000();
        let x0 = ImageTensor::from_fn(3, 8, 8, |c, y, x| {
            0.5 + 0.3 * ((x + y) as f64 / 7.0 - 1.0) + 0.1 * (c as f64 - 1.0)
        });
        let root = SeedRng::new(77);
        let mut x = gaussian_noise(&mut root.substream("init", 0), 3, 8, 8).unwrap();
        let zero = ImageTensor::zeros(3, 8, 8);
        for t in (1..=1000).rev() {
            let ab = s.alpha_bar(t);
            // Noise that explains the current state given x0.
            let eps_oracle = x
                .zip_map(&x0, |xt, x0v| (xt - ab.sqrt() * x0v) / (1.0 - ab).sqrt())
                .unwrap();
            let z = if t > 1 {
                gaussian_noise(&mut root.substream("z", t as u64), 3, 8, 8).unwrap()
            } else {
                zero.clone()
            };
            x = ancestral_step(&s, &x, t, &eps_oracle, &z).unwrap();
        }
        match psnr(&x, &x0, 1.0).unwrap() {
            Psnr::Identical => {}
            Psnr::Db(db) => assert!(db > 30.0, "PSNR {db}"),
        }
    }
}
