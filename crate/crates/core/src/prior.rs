//! Gaussian-mixture priors with analytic time-marginal scores.
//!
//! For a prior P_0 = Σ_i w_i N(μ_i, diag(v_i)) under the variance-preserving
//! kernel, the time marginal is itself a mixture,
//!
//!   P_t = Σ_i w_i N(α_t μ_i, α_t² diag(v_i) + σ_t² I),
//!
//! so ∇ log P_t is available in closed form: responsibilities are computed in
//! log space (log-sum-exp) and combined with the per-component Gaussian
//! scores.  This stands in for a trained noise-prediction network: the
//! ε-prediction is ε(x, t) = −σ_t ∇ log P_t(x), and classifier-free guidance
//! mixes the conditional sub-mixture score with the full-mixture score.

use crate::error::{Error, Result};
use crate::io::Kv;
use crate::schedule::NoiseSchedule;
use rand::Rng;
use rand_chacha::ChaCha12Rng;

#[derive(Debug, Clone)]
pub struct GmmComponent {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    /// Class label for guidance; None = unlabeled (unconditional only).
    pub label: Option<u32>,
}

#[derive(Debug, Clone)]
pub struct GmmPrior {
    pub dim: usize,
    pub components: Vec<GmmComponent>,
}

/// Guidance strength and (optional) condition for score evaluation.
/// ω = 0 or an absent condition reproduce the unconditional score; ω = 1
/// gives the conditional sub-mixture score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GuidanceConfig {
    pub condition: Option<u32>,
    pub omega: f64,
}

impl GuidanceConfig {
    pub const OFF: GuidanceConfig = GuidanceConfig { condition: None, omega: 0.0 };
}

impl GmmPrior {
    pub fn new(dim: usize, components: Vec<GmmComponent>) -> Result<Self> {
        let p = GmmPrior { dim, components };
        p.validate()?;
        Ok(p)
    }

    /// Single standard-normal component: the marginal is N(0, 1) at every t
    /// and the probability-flow velocity field vanishes identically.
    pub fn standard_normal(dim: usize) -> Self {
        GmmPrior {
            dim,
            components: vec![GmmComponent { weight: 1.0, mean: vec![0.0; dim], var: vec![1.0; dim], label: None }],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidParam("prior dimension must be positive".into()));
        }
        if self.components.is_empty() {
            return Err(Error::InvalidParam("prior needs at least one component".into()));
        }
        let mut wsum = 0.0;
        for (i, c) in self.components.iter().enumerate() {
            if c.mean.len() != self.dim || c.var.len() != self.dim {
                return Err(Error::Dimension(format!("component {i}: mean/var length != dim {}", self.dim)));
            }
            if !(c.weight > 0.0) {
                return Err(Error::InvalidParam(format!("component {i}: weight must be positive")));
            }
            if c.var.iter().any(|&v| !(v > 0.0)) {
                return Err(Error::InvalidParam(format!("component {i}: variances must be positive")));
            }
            wsum += c.weight;
        }
        if (wsum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParam(format!("component weights sum to {wsum}, not 1")));
        }
        Ok(())
    }

    pub fn labels(&self) -> Vec<u32> {
        let mut ls: Vec<u32> = self.components.iter().filter_map(|c| c.label).collect();
        ls.sort_unstable();
        ls.dedup();
        ls
    }

    fn check_x(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::Dimension(format!("state has {} coords, prior has {}", x.len(), self.dim)));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParam("non-finite state".into()));
        }
        Ok(())
    }

    /// log N(x; α μ_i, α² v_i + σ² I) for one component.
    fn comp_log_density(&self, i: usize, x: &[f64], alpha: f64, sigma: f64) -> f64 {
        let c = &self.components[i];
        let s2 = sigma * sigma;
        let mut acc = 0.0;
        for j in 0..self.dim {
            let var = alpha * alpha * c.var[j] + s2;
            let d = x[j] - alpha * c.mean[j];
            acc += -0.5 * (d * d / var + var.ln() + crate::normal::LN_2PI);
        }
        acc
    }

    /// log P marginal density at an arbitrary (α, σ) point of the kernel.
    pub fn log_marginal_density_at(&self, x: &[f64], alpha: f64, sigma: f64) -> Result<f64> {
        self.check_x(x)?;
        Ok(self.log_density_subset(x, alpha, sigma, None))
    }

    fn log_density_subset(&self, x: &[f64], alpha: f64, sigma: f64, label: Option<u32>) -> f64 {
        let mut terms = Vec::with_capacity(self.components.len());
        for (i, c) in self.components.iter().enumerate() {
            if label.is_some() && c.label != label {
                continue;
            }
            terms.push(c.weight.ln() + self.comp_log_density(i, x, alpha, sigma));
        }
        log_sum_exp(&terms)
    }

    /// Score of the (sub-)mixture marginal at kernel point (α, σ).
    /// `label = None` uses the full mixture; otherwise only components with
    /// that label, with weights renormalized (implicit in the softmax).
    pub fn score_at(&self, x: &[f64], alpha: f64, sigma: f64, label: Option<u32>) -> Result<Vec<f64>> {
        self.check_x(x)?;
        let s2 = sigma * sigma;
        let idx: Vec<usize> = self
            .components
            .iter()
            .enumerate()
            .filter(|(_, c)| label.is_none() || c.label == label)
            .map(|(i, _)| i)
            .collect();
        if idx.is_empty() {
            return Err(Error::InvalidParam(format!("no components carry label {label:?}")));
        }
        let logs: Vec<f64> = idx
            .iter()
            .map(|&i| self.components[i].weight.ln() + self.comp_log_density(i, x, alpha, sigma))
            .collect();
        let lse = log_sum_exp(&logs);
        let mut score = vec![0.0; self.dim];
        for (k, &i) in idx.iter().enumerate() {
            let r = (logs[k] - lse).exp();
            if r == 0.0 {
                continue;
            }
            let c = &self.components[i];
            for j in 0..self.dim {
                let var = alpha * alpha * c.var[j] + s2;
                score[j] += r * (alpha * c.mean[j] - x[j]) / var;
            }
        }
        Ok(score)
    }

    /// ∇ log P_t(x) on the schedule grid.
    pub fn marginal_score(&self, x: &[f64], t: usize, schedule: &NoiseSchedule) -> Result<Vec<f64>> {
        self.score_at(x, schedule.alpha(t), schedule.sigma(t), None)
    }

    /// ε-prediction ε(x, t) = −σ_t ∇ log P_t(x); the zero vector at t = 0.
    pub fn eps_prediction(&self, x: &[f64], t: usize, schedule: &NoiseSchedule) -> Result<Vec<f64>> {
        let sigma = schedule.sigma(t);
        let mut s = self.marginal_score(x, t, schedule)?;
        for v in &mut s {
            *v *= -sigma;
        }
        Ok(s)
    }

    /// Guided score s̃ = s_∅ + ω (s_c − s_∅); equals the ε-space mixture
    /// ε_∅ + ω (ε_c − ε_∅) up to the shared factor −σ_t.
    pub fn guided_score_at(&self, x: &[f64], alpha: f64, sigma: f64, g: &GuidanceConfig) -> Result<Vec<f64>> {
        let base = self.score_at(x, alpha, sigma, None)?;
        match g.condition {
            None => Ok(base),
            Some(label) if g.omega == 0.0 => {
                // still validate the label so a typo'd condition fails loudly
                let _ = self.score_at(x, alpha, sigma, Some(label))?;
                Ok(base)
            }
            Some(label) => {
                let cond = self.score_at(x, alpha, sigma, Some(label))?;
                Ok(base.iter().zip(&cond).map(|(u, c)| u + g.omega * (c - u)).collect())
            }
        }
    }

    /// Guided ε-prediction on the schedule grid.
    pub fn guided_eps(&self, x: &[f64], t: usize, schedule: &NoiseSchedule, g: &GuidanceConfig) -> Result<Vec<f64>> {
        let sigma = schedule.sigma(t);
        let mut s = self.guided_score_at(x, schedule.alpha(t), sigma, g)?;
        for v in &mut s {
            *v *= -sigma;
        }
        Ok(s)
    }

    /// Draw one sample from the prior itself (t = 0 law).
    pub fn sample(&self, rng: &mut ChaCha12Rng) -> Vec<f64> {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut pick = self.components.len() - 1;
        for (i, c) in self.components.iter().enumerate() {
            acc += c.weight;
            if u < acc {
                pick = i;
                break;
            }
        }
        let c = &self.components[pick];
        (0..self.dim)
            .map(|j| c.mean[j] + c.var[j].sqrt() * rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect()
    }

    pub fn to_kv(&self) -> Kv {
        let mut kv = Kv::new("prior");
        kv.push_u64("dim", self.dim as u64);
        kv.push_u64("components", self.components.len() as u64);
        for (i, c) in self.components.iter().enumerate() {
            kv.push_f64(&format!("w{i}"), c.weight);
            kv.push_vec(&format!("mu{i}"), &c.mean);
            kv.push_vec(&format!("v{i}"), &c.var);
            if let Some(l) = c.label {
                kv.push_u64(&format!("label{i}"), u64::from(l));
            }
        }
        kv
    }

    pub fn from_kv(kv: &Kv) -> Result<Self> {
        let dim = kv.get_usize("dim")?;
        let n = kv.get_usize("components")?;
        let mut components = Vec::with_capacity(n);
        for i in 0..n {
            components.push(GmmComponent {
                weight: kv.get_f64(&format!("w{i}"))?,
                mean: kv.get_vec(&format!("mu{i}"))?,
                var: kv.get_vec(&format!("v{i}"))?,
                label: kv.get(&format!("label{i}")).map(|s| s.parse::<u32>()).transpose().map_err(|_| Error::Format(format!("bad label{i}")))?,
            });
        }
        GmmPrior::new(dim, components)
    }
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::{NoiseSchedule, ScheduleKind};
    use approx::assert_relative_eq;

    fn demo_prior(dim: usize) -> GmmPrior {
        GmmPrior::new(
            dim,
            vec![
                GmmComponent { weight: 0.35, mean: vec![1.2; dim], var: vec![0.6; dim], label: Some(0) },
                GmmComponent { weight: 0.45, mean: vec![-0.7; dim], var: vec![1.4; dim], label: Some(1) },
                GmmComponent { weight: 0.20, mean: (0..dim).map(|j| 0.3 * j as f64 - 0.4).collect(), var: vec![0.9; dim], label: Some(1) },
            ],
        )
        .unwrap()
    }

    /// Central-difference gradient of the independent log-density; the
    /// analytic score must match to 1e-8 relative.
    #[test]
    fn score_matches_central_difference_of_log_density() {
        let prior = demo_prior(5);
        let sched = NoiseSchedule::build(ScheduleKind::LinearBeta, 1000).unwrap();
        let h = 1e-6;
        for &t in &[0usize, 1, 37, 500, 1000] {
            let (a, s) = (sched.alpha(t), sched.sigma(t));
            let x: Vec<f64> = (0..5).map(|j| 0.8 * (j as f64) - 1.7).collect();
            let score = prior.marginal_score(&x, t, &sched).unwrap();
            for j in 0..5 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += h;
                xm[j] -= h;
                let fd = (prior.log_marginal_density_at(&xp, a, s).unwrap()
                    - prior.log_marginal_density_at(&xm, a, s).unwrap())
                    / (2.0 * h);
                assert_relative_eq!(score[j], fd, max_relative = 1e-8, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn standard_normal_score_is_minus_x() {
        let prior = GmmPrior::standard_normal(6);
        let sched = NoiseSchedule::build(ScheduleKind::Cosine, 300).unwrap();
        let x: Vec<f64> = vec![0.3, -2.0, 1.1, 0.0, 4.5, -0.2];
        for &t in &[0usize, 1, 150, 300] {
            let s = prior.marginal_score(&x, t, &sched).unwrap();
            for j in 0..6 {
                assert_relative_eq!(s[j], -x[j], max_relative = 1e-12, epsilon = 1e-12);
            }
            // ε(x, t) = σ_t x for the standard normal prior
            let eps = prior.eps_prediction(&x, t, &sched).unwrap();
            for j in 0..6 {
                assert_relative_eq!(eps[j], sched.sigma(t) * x[j], max_relative = 1e-12, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn eps_at_t0_is_zero() {
        let prior = demo_prior(4);
        let sched = NoiseSchedule::build(ScheduleKind::LinearBeta, 100).unwrap();
        let eps = prior.eps_prediction(&[0.5, -0.5, 2.0, 0.1], 0, &sched).unwrap();
        assert!(eps.iter().all(|&e| e == 0.0));
    }

    #[test]
    fn responsibilities_survive_far_tail_inputs() {
        let prior = demo_prior(3);
        let sched = NoiseSchedule::build(ScheduleKind::LinearBeta, 1000).unwrap();
        let x = vec![40.0, -35.0, 38.0];
        for &t in &[0usize, 500, 1000] {
            let s = prior.marginal_score(&x, t, &sched).unwrap();
            assert!(s.iter().all(|v| v.is_finite()), "t={t}: {s:?}");
        }
    }

    #[test]
    fn guidance_limits() {
        let prior = demo_prior(4);
        let sched = NoiseSchedule::build(ScheduleKind::LinearBeta, 1000).unwrap();
        let x = vec![0.2, -0.9, 1.4, 0.0];
        let t = 420;
        let (a, s) = (sched.alpha(t), sched.sigma(t));
        let uncond = prior.score_at(&x, a, s, None).unwrap();
        let cond = prior.score_at(&x, a, s, Some(1)).unwrap();

        // ω = 0 → unconditional; ω = 1 → conditional sub-mixture
        let g0 = prior.guided_score_at(&x, a, s, &GuidanceConfig { condition: Some(1), omega: 0.0 }).unwrap();
        let g1 = prior.guided_score_at(&x, a, s, &GuidanceConfig { condition: Some(1), omega: 1.0 }).unwrap();
        assert_eq!(g0, uncond);
        for j in 0..4 {
            assert_relative_eq!(g1[j], cond[j], max_relative = 1e-13);
        }
        // absent condition ignores ω entirely
        let off = prior.guided_score_at(&x, a, s, &GuidanceConfig { condition: None, omega: 7.5 }).unwrap();
        assert_eq!(off, uncond);
        // unknown label is rejected
        assert!(prior.guided_score_at(&x, a, s, &GuidanceConfig { condition: Some(9), omega: 2.0 }).is_err());
    }

    #[test]
    fn single_component_prior_guidance_is_inert() {
        let mut prior = GmmPrior::standard_normal(3);
        prior.components[0].label = Some(0);
        let sched = NoiseSchedule::build(ScheduleKind::LinearBeta, 100).unwrap();
        let x = vec![1.0, -2.0, 0.5];
        let g = GuidanceConfig { condition: Some(0), omega: 7.5 };
        let guided = prior.guided_score_at(&x, sched.alpha(40), sched.sigma(40), &g).unwrap();
        let plain = prior.marginal_score(&x, 40, &sched).unwrap();
        for j in 0..3 {
            assert_relative_eq!(guided[j], plain[j], max_relative = 1e-13);
        }
    }

    #[test]
    fn validation_rejects_bad_mixtures() {
        assert!(GmmPrior::new(0, vec![]).is_err());
        assert!(GmmPrior::new(
            2,
            vec![GmmComponent { weight: 0.8, mean: vec![0.0; 2], var: vec![1.0; 2], label: None }]
        )
        .is_err(), "weights must sum to 1");
        assert!(GmmPrior::new(
            2,
            vec![GmmComponent { weight: 1.0, mean: vec![0.0; 2], var: vec![0.0; 2], label: None }]
        )
        .is_err(), "zero variance");
        assert!(GmmPrior::new(
            2,
            vec![GmmComponent { weight: 1.0, mean: vec![0.0; 3], var: vec![1.0; 2], label: None }]
        )
        .is_err(), "dim mismatch");
        let prior = GmmPrior::standard_normal(2);
        assert!(prior.marginal_score(&[f64::NAN, 0.0], 1, &NoiseSchedule::build(ScheduleKind::LinearBeta, 10).unwrap()).is_err());
    }

    #[test]
    fn kv_roundtrip_preserves_every_bit() {
        let prior = demo_prior(4);
        let text = prior.to_kv().to_text();
        let back = GmmPrior::from_kv(&Kv::parse(&text).unwrap()).unwrap();
        assert_eq!(back.dim, prior.dim);
        for (a, b) in back.components.iter().zip(&prior.components) {
            assert_eq!(a.weight.to_bits(), b.weight.to_bits());
            assert_eq!(a.mean, b.mean);
            assert_eq!(a.var, b.var);
            assert_eq!(a.label, b.label);
        }
    }

    #[test]
    fn sampling_matches_component_occupancy() {
        let prior = GmmPrior::new(
            1,
            vec![
                GmmComponent { weight: 0.3, mean: vec![-6.0], var: vec![0.5], label: None },
                GmmComponent { weight: 0.7, mean: vec![6.0], var: vec![0.5], label: None },
            ],
        )
        .unwrap();
        let mut rng = crate::seeds::rng(11);
        let n = 20_000;
        let hits = (0..n).filter(|_| prior.sample(&mut rng)[0] > 0.0).count();
        let p = hits as f64 / n as f64;
        let sd = (0.7 * 0.3 / n as f64).sqrt();
        assert!((p - 0.7).abs() < 4.0 * sd, "occupancy {p} vs 0.7 ± {}", 4.0 * sd);
    }
}
