//! Variance-preserving noise schedules on a discrete time grid t ∈ {0..T}.
//!
//! A schedule fixes the scalar pair (α_t, σ_t) with α_t² + σ_t² = 1, α_0 = 1,
//! σ_0 = 0 and α strictly decreasing, so the forward transition kernel is
//! P(x_t | x_0) = N(α_t x_0, σ_t² I).  Continuous-time drift/diffusion
//! coefficients are defined through differences of log α, which makes the
//! variance-preserving identity g²(t) = −2 d(log α)/dt exact on the grid.

use crate::error::{Error, Result};
use crate::io::Kv;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    /// β_t linear from 1e−4·(1000/T) to 0.02·(1000/T), α_t = Π √(1−β_s).
    /// β is capped at 0.999 so that short grids (T < 21, where the rescaled
    /// endpoint exceeds 1) stay well defined; the cap is inactive for T ≥ 21.
    LinearBeta,
    /// ᾱ_t = cos²(((t/T + s)/(1 + s))·π/2) / cos²((s/(1+s))·π/2), s = 0.008.
    Cosine,
}

impl ScheduleKind {
    pub fn name(self) -> &'static str {
        match self {
            ScheduleKind::LinearBeta => "linear-beta",
            ScheduleKind::Cosine => "cosine",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        match s {
            "linear-beta" => Ok(ScheduleKind::LinearBeta),
            "cosine" => Ok(ScheduleKind::Cosine),
            other => Err(Error::InvalidParam(format!("unknown schedule kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct NoiseSchedule {
    pub kind: ScheduleKind,
    pub t_max: usize,
    alpha: Vec<f64>,
    sigma: Vec<f64>,
    log_alpha: Vec<f64>,
}

impl NoiseSchedule {
    pub fn build(kind: ScheduleKind, t_max: usize) -> Result<Self> {
        if t_max < 2 {
            return Err(Error::InvalidParam(format!("schedule needs T >= 2, got {t_max}")));
        }
        let mut log_alpha = Vec::with_capacity(t_max + 1);
        match kind {
            ScheduleKind::LinearBeta => {
                let scale = 1000.0 / t_max as f64;
                let (b0, b1) = (1e-4 * scale, 0.02 * scale);
                let mut acc = 0.0;
                log_alpha.push(0.0);
                for t in 1..=t_max {
                    let frac = (t - 1) as f64 / (t_max - 1) as f64;
                    let beta = (b0 + frac * (b1 - b0)).min(0.999);
                    acc += 0.5 * (1.0 - beta).ln();
                    log_alpha.push(acc);
                }
            }
            ScheduleKind::Cosine => {
                let s = 0.008;
                let f = |t: f64| (((t / t_max as f64 + s) / (1.0 + s)) * std::f64::consts::FRAC_PI_2).cos();
                let f0 = f(0.0);
                for t in 0..=t_max {
                    log_alpha.push((f(t as f64) / f0).ln());
                }
            }
        }
        let alpha: Vec<f64> = log_alpha.iter().map(|l| l.exp()).collect();
        // σ = √(1 − α²) via expm1 keeps precision where α ≈ 1.
        let sigma: Vec<f64> = log_alpha.iter().map(|l| (-f64::exp_m1(2.0 * l)).sqrt()).collect();
        let sched = NoiseSchedule { kind, t_max, alpha, sigma, log_alpha };
        sched.validate()?;
        Ok(sched)
    }

    fn validate(&self) -> Result<()> {
        let (a, s) = (&self.alpha, &self.sigma);
        if a[0] != 1.0 || s[0] != 0.0 {
            return Err(Error::InvalidParam("schedule must start at (α, σ) = (1, 0)".into()));
        }
        for t in 0..=self.t_max {
            if !(a[t] > 0.0) {
                return Err(Error::InvalidParam(format!("α_{t} must stay positive")));
            }
            let vp = a[t] * a[t] + s[t] * s[t];
            if (vp - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidParam(format!("variance-preserving identity broken at t = {t}: {vp}")));
            }
            if t > 0 && (a[t] >= a[t - 1] || s[t] < s[t - 1]) {
                return Err(Error::InvalidParam(format!("schedule not monotone at t = {t}")));
            }
        }
        if s[self.t_max] < 0.99 {
            return Err(Error::InvalidParam(format!("terminal σ_T = {} < 0.99: prior signal not destroyed", s[self.t_max])));
        }
        Ok(())
    }

    #[inline]
    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha[t]
    }

    #[inline]
    pub fn sigma(&self, t: usize) -> f64 {
        self.sigma[t]
    }

    #[inline]
    pub fn log_alpha(&self, t: usize) -> f64 {
        self.log_alpha[t]
    }

    /// log-SNR λ_t = log(α_t / σ_t); singular at t = 0.
    #[inline]
    pub fn lambda(&self, t: usize) -> f64 {
        debug_assert!(t >= 1, "λ is singular at t = 0");
        self.log_alpha[t] - self.sigma[t].ln()
    }

    /// Log signal contraction over the step t−1 → t: ln(α_{t−1}/α_t), positive.
    #[inline]
    pub fn step_contraction(&self, t: usize) -> f64 {
        self.log_alpha[t - 1] - self.log_alpha[t]
    }

    /// Squared diffusion coefficient over the step [t−1, t]:
    /// g² = −2 d(log α)/dt, exact under the variance-preserving identity.
    #[inline]
    pub fn g2_step(&self, t: usize) -> f64 {
        2.0 * self.step_contraction(t)
    }

    pub fn to_kv(&self) -> Kv {
        let mut kv = Kv::new("schedule");
        kv.push("schedule_kind", self.kind.name());
        kv.push_u64("t_max", self.t_max as u64);
        kv
    }

    pub fn from_kv(kv: &Kv) -> Result<Self> {
        Self::build(ScheduleKind::from_name(kv.require("schedule_kind")?)?, kv.get_usize("t_max")?)
    }
}
