//! Forward (noising) diffusion and the reverse-time SDE sampler.
//!
//! The forward kernel is the variance-preserving map
//! x_t = α_t x_0 + σ_t z with z ~ N(0, I).  The reverse sampler here is
//! Euler–Maruyama on the reverse-time SDE with the exact per-step diffusion
//! energy g²(t) = 2 ln(α_{t−1}/α_t), so that the noise injected on the grid
//! matches the noise the forward process accumulates over the same step.

use crate::error::{Error, Result};
use crate::prior::{GmmPrior, GuidanceConfig};
use crate::schedule::NoiseSchedule;
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

/// Draw x_T ~ N(0, σ_T² I), the terminal law of the forward process on a
/// zero-mean unit-variance prior (and approximately for any VP schedule with
/// σ_T ≈ 1).
pub fn sample_prior_noise(dim: usize, schedule: &NoiseSchedule, rng: &mut ChaCha12Rng) -> Vec<f64> {
    let s = schedule.sigma(schedule.t_max);
    (0..dim).map(|_| s * rng.sample::<f64, _>(StandardNormal)).collect()
}

/// One exact draw from the forward kernel at time t given a data sample.
pub fn forward_diffuse_exact(
    x0: &[f64],
    t: usize,
    schedule: &NoiseSchedule,
    rng: &mut ChaCha12Rng,
) -> Vec<f64> {
    let (a, s) = (schedule.alpha(t), schedule.sigma(t));
    x0.iter().map(|&x| a * x + s * rng.sample::<f64, _>(StandardNormal)).collect()
}

/// One reverse Euler–Maruyama step t → t−1 with caller-supplied standard
/// normal noise. c = ln(α_{t−1}/α_t) > 0, so the drift uses the score twice
/// relative to the probability flow (full diffusion coefficient).
///
/// x_{t−1} = x_t (1 + c) + 2 c · score(x_t, t) + √(2c) · z.
pub fn reverse_sde_step_with(
    x: &[f64],
    t: usize,
    prior: &GmmPrior,
    schedule: &NoiseSchedule,
    guidance: &GuidanceConfig,
    z: &[f64],
) -> Result<Vec<f64>> {
    if t == 0 || t > schedule.t_max {
        return Err(Error::InvalidParam(format!("reverse step needs 1 <= t <= T, got {t}")));
    }
    if z.len() != x.len() {
        return Err(Error::Dimension("noise length != state length".into()));
    }
    let c = schedule.step_contraction(t);
    let score = prior.guided_score_at(x, schedule.alpha(t), schedule.sigma(t), guidance)?;
    let amp = (2.0 * c).sqrt();
    let out: Vec<f64> = x
        .iter()
        .zip(score.iter())
        .zip(z.iter())
        .map(|((&xi, &si), &zi)| xi * (1.0 + c) + 2.0 * c * si + amp * zi)
        .collect();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { step: schedule.t_max - t, t });
    }
    Ok(out)
}

/// Same step drawing the noise from `rng`.
pub fn reverse_sde_step(
    x: &[f64],
    t: usize,
    prior: &GmmPrior,
    schedule: &NoiseSchedule,
    guidance: &GuidanceConfig,
    rng: &mut ChaCha12Rng,
) -> Result<Vec<f64>> {
    let z: Vec<f64> = (0..x.len()).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    reverse_sde_step_with(x, t, prior, schedule, guidance, &z)
}

/// Full ancestral chain x_T → x_0.  The final step t = 1 → 0 is noiseless
/// posterior-mean collapse is deliberately *not* used: the step keeps its
/// noise so that a shared-seed observer can solve for the injected z, which
/// is what the shared-seed extraction path does.
pub fn sde_generate(
    x_t: &[f64],
    prior: &GmmPrior,
    schedule: &NoiseSchedule,
    guidance: &GuidanceConfig,
    rng: &mut ChaCha12Rng,
) -> Result<Vec<f64>> {
    let mut x = x_t.to_vec();
    for t in (1..=schedule.t_max).rev() {
        x = reverse_sde_step(&x, t, prior, schedule, guidance, rng)?;
    }
    Ok(x)
}

/// Deterministic part of the t → t−1 SDE step: everything except the √(2c) z
/// injection.  Exposed so a shared-seed decoder can subtract it off.
pub fn reverse_sde_drift(
    x: &[f64],
    t: usize,
    prior: &GmmPrior,
    schedule: &NoiseSchedule,
    guidance: &GuidanceConfig,
) -> Result<Vec<f64>> {
    let c = schedule.step_contraction(t);
    let score = prior.guided_score_at(x, schedule.alpha(t), schedule.sigma(t), guidance)?;
    Ok(x.iter().zip(score.iter()).map(|(&xi, &si)| xi * (1.0 + c) + 2.0 * c * si).collect())
}
