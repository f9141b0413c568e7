//! Variance schedules for the forward/backward diffusion chains.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Per-step tables `β_t, α_t, ᾱ_t, σ_t` for `t = 1..T`.
///
/// Tables are 1-based (index 0 is unused) to match the usual timestep
/// convention. `σ_t² = β_t` (fixed-variance reverse transitions) except at
/// the final denoising step, where `σ_1 = 0`.
///
/// A schedule also carries `model_t`: the timestep passed to the denoiser at
/// step `t`. For a schedule built by [`NoiseSchedule::strided`] these are the
/// base-schedule timesteps; otherwise `model_t[t] == t`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NoiseSchedule {
    t_count: usize,
    beta_start: f64,
    beta_end: f64,
    beta: Vec<f64>,
    alpha: Vec<f64>,
    alpha_bar: Vec<f64>,
    sigma: Vec<f64>,
    model_t: Vec<usize>,
}

impl NoiseSchedule {
    /// Linear β interpolation over `t = 1..T` with derived tables.
    pub fn make(t_count: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if t_count < 2 {
            return Err(CoreError::invalid(format!(
                "schedule needs T >= 2, got {t_count}"
            )));
        }
        if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
            return Err(CoreError::invalid(format!(
                "need 0 < beta_start <= beta_end < 1, got {beta_start} .. {beta_end}"
            )));
        }
        let mut beta = vec![f64::NAN; t_count + 1];
        for t in 1..=t_count {
            let frac = (t - 1) as f64 / (t_count - 1) as f64;
            beta[t] = beta_start + (beta_end - beta_start) * frac;
        }
        Self::from_betas(beta, beta_start, beta_end, None)
    }

    fn from_betas(
        beta: Vec<f64>,
        beta_start: f64,
        beta_end: f64,
        model_t: Option<Vec<usize>>,
    ) -> Result<Self> {
        // Monotone beta is required of base schedules. Strided sub-schedules
        // (model_t present) preserve the base chain's marginals instead;
        // their betas wobble where stride gaps alternate.
        let require_monotone = model_t.is_none();
        let t_count = beta.len() - 1;
        let mut alpha = vec![f64::NAN; t_count + 1];
        let mut alpha_bar = vec![f64::NAN; t_count + 1];
        let mut sigma = vec![f64::NAN; t_count + 1];
        let mut prod = 1.0;
        for t in 1..=t_count {
            let b = beta[t];
            if !(b > 0.0 && b < 1.0) {
                return Err(CoreError::invalid(format!("beta[{t}] = {b} out of (0,1)")));
            }
            if require_monotone && t > 1 && b < beta[t - 1] {
                return Err(CoreError::invalid(format!(
                    "beta must be nondecreasing, beta[{t}] = {b} < beta[{}] = {}",
                    t - 1,
                    beta[t - 1]
                )));
            }
            alpha[t] = 1.0 - b;
            prod *= alpha[t];
            alpha_bar[t] = prod;
            sigma[t] = b.sqrt();
        }
        // Final denoising step (t = 1 -> x0) is deterministic.
        sigma[1] = 0.0;
        let model_t = model_t.unwrap_or_else(|| (0..=t_count).collect());
        Ok(Self {
            t_count,
            beta_start,
            beta_end,
            beta,
            alpha,
            alpha_bar,
            sigma,
            model_t,
        })
    }

    /// Evenly strided sub-schedule with `n_steps` steps.
    ///
    /// β for step `s` is `1 − ᾱ(t_s)/ᾱ(t_{s−1})`, which keeps the marginal
    /// `q(x_{t_s} | x_0)` of the base chain; `model_t` records the base
    /// timestep so a denoiser trained on the base schedule stays valid.
    pub fn strided(&self, n_steps: usize) -> Result<Self> {
        if n_steps < 2 || n_steps > self.t_count {
            return Err(CoreError::invalid(format!(
                "strided steps must be in [2, {}], got {n_steps}",
                self.t_count
            )));
        }
        if n_steps == self.t_count {
            return Ok(self.clone());
        }
        let mut picks = Vec::with_capacity(n_steps);
        for s in 0..n_steps {
            let t = 1 + (s as f64 / (n_steps - 1) as f64 * (self.t_count - 1) as f64).round()
                as usize;
            picks.push(t.min(self.t_count));
        }
        picks.dedup();
        let n = picks.len();
        let mut beta = vec![f64::NAN; n + 1];
        let mut model_t = vec![0; n + 1];
        let mut prev_bar = 1.0;
        for (s, &t) in picks.iter().enumerate() {
            beta[s + 1] = 1.0 - self.alpha_bar[t] / prev_bar;
            model_t[s + 1] = t;
            prev_bar = self.alpha_bar[t];
        }
        let (b_start, b_end) = (beta[1], beta[n]);
        Self::from_betas(beta, b_start, b_end, Some(model_t))
    }

    pub fn t_count(&self) -> usize {
        self.t_count
    }

    pub fn beta_range(&self) -> (f64, f64) {
        (self.beta_start, self.beta_end)
    }

    fn check_t(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.t_count {
            return Err(CoreError::invalid(format!(
                "t = {t} outside 1..={}",
                self.t_count
            )));
        }
        Ok(())
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.beta[t]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha[t]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t]
    }

    pub fn sigma(&self, t: usize) -> f64 {
        self.sigma[t]
    }

    /// Timestep handed to the denoiser when sampling step `t` of this schedule.
    pub fn model_t(&self, t: usize) -> usize {
        self.model_t[t]
    }

    pub(crate) fn validate_t(&self, t: usize) -> Result<()> {
        self.check_t(t)
    }
}
