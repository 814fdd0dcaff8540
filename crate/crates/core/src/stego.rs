//! Embedding and extraction: carrying codec payloads through a generative
//! diffusion backbone.
//!
//! Deterministic-noise schemes place the payload in the initial noise,
//! x_T = σ_T · [g ‖ keystream fill], run the probability-flow ODE to data
//! space, and (optionally) quantize.  Extraction inverts the ODE and divides
//! by σ_T.  The shared-seed scheme instead runs the ancestral SDE chain from
//! keystream noise and injects the payload as the final step's noise; the
//! extractor replays the chain from the shared key, subtracts the drift and
//! reads the injected noise back off.

use crate::codecs::{Codec, CodecParams, Key, Scheme, StreamPurpose};
use crate::diffusion::{reverse_sde_drift, reverse_sde_step_with, sample_prior_noise, sde_generate};
use crate::error::{Error, Result};
use crate::io::Kv;
use crate::prior::{GmmPrior, GuidanceConfig};
use crate::schedule::NoiseSchedule;
use crate::solvers::{integrate, Direction, SolverConfig, SolverKind};
use rand_chacha::ChaCha12Rng;

/// Uniform mid-rise quantizer on [−clip, clip] with q levels including both
/// endpoints; `q = 0` disables quantization (lossless channel).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quantizer {
    pub q: u32,
    pub clip: f64,
}

impl Quantizer {
    pub fn off() -> Quantizer {
        Quantizer { q: 0, clip: 4.0 }
    }

    pub fn new(q: u32, clip: f64) -> Result<Quantizer> {
        if q == 1 {
            return Err(Error::InvalidParam("quantizer needs q = 0 (off) or q >= 2".into()));
        }
        if !(clip > 0.0) {
            return Err(Error::InvalidParam("quantizer clip must be positive".into()));
        }
        Ok(Quantizer { q, clip })
    }

    pub fn apply_value(&self, x: f64) -> f64 {
        if self.q == 0 {
            return x;
        }
        let c = self.clip;
        let x = x.clamp(-c, c);
        let w = 2.0 * c / (self.q - 1) as f64;
        let k = ((x + c) / w).round();
        -c + k * w
    }

    pub fn applied(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|&v| self.apply_value(v)).collect()
    }
}

/// A generative backbone: analytic prior + noise schedule + data layout.
#[derive(Debug, Clone)]
pub struct Backbone {
    pub name: String,
    /// Logical channels (feature extraction transforms each separately).
    pub channels: usize,
    pub prior: GmmPrior,
    pub schedule: NoiseSchedule,
}

impl Backbone {
    pub fn new(name: &str, channels: usize, prior: GmmPrior, schedule: NoiseSchedule) -> Result<Backbone> {
        if channels == 0 || prior.dim % channels != 0 {
            return Err(Error::InvalidParam(format!(
                "dim {} not divisible into {channels} channels",
                prior.dim
            )));
        }
        Ok(Backbone { name: name.to_string(), channels, prior, schedule })
    }

    pub fn dim(&self) -> usize {
        self.prior.dim
    }
}

/// Everything the embedder chooses; the manifest freezes it for extraction.
#[derive(Debug, Clone)]
pub struct EmbedConfig {
    pub codec: Codec,
    /// Fraction of coordinates available for payload (the rest are filled
    /// with honest keystream noise).
    pub payload_fraction: f64,
    pub solver: SolverConfig,
    pub guidance: GuidanceConfig,
    pub quant: Quantizer,
}

/// Frozen record of one embedding, sufficient to extract later.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub backbone: String,
    pub scheme: Scheme,
    pub params: CodecParams,
    pub n_bits: usize,
    pub payload_coords: usize,
    pub solver: SolverConfig,
    pub guidance: GuidanceConfig,
    pub quant: Quantizer,
}

impl Manifest {
    pub fn to_kv(&self) -> Kv {
        let mut kv = Kv::new("manifest");
        kv.push("backbone", &self.backbone);
        kv.push("scheme", self.scheme.name());
        kv.push_u64("bits_per_coord", self.params.bits_per_coord as u64);
        kv.push_f64("theta", self.params.theta);
        kv.push_u64("n_bits", self.n_bits as u64);
        kv.push_u64("payload_coords", self.payload_coords as u64);
        kv.push("solver", self.solver.kind.name());
        kv.push_u64("steps", self.solver.steps as u64);
        kv.push_f64("omega", self.guidance.omega);
        match self.guidance.condition {
            Some(c) => kv.push_u64("condition", u64::from(c)),
            None => kv.push("condition", "none"),
        }
        kv.push_u64("quant_q", u64::from(self.quant.q));
        kv.push_f64("quant_clip", self.quant.clip);
        kv
    }

    pub fn from_kv(kv: &Kv) -> Result<Manifest> {
        let condition = match kv.require("condition")? {
            "none" => None,
            s => Some(s.parse::<u32>().map_err(|_| Error::Format("bad condition".into()))?),
        };
        Ok(Manifest {
            backbone: kv.require("backbone")?.to_string(),
            scheme: Scheme::from_name(kv.require("scheme")?)?,
            params: CodecParams {
                bits_per_coord: kv.get_usize("bits_per_coord")?,
                theta: kv.get_f64("theta")?,
            },
            n_bits: kv.get_usize("n_bits")?,
            payload_coords: kv.get_usize("payload_coords")?,
            solver: SolverConfig {
                kind: SolverKind::from_name(kv.require("solver")?)?,
                steps: kv.get_usize("steps")?,
            },
            guidance: GuidanceConfig { condition, omega: kv.get_f64("omega")? },
            quant: Quantizer::new(kv.get_u64("quant_q")? as u32, kv.get_f64("quant_clip")?)?,
        })
    }

    pub fn codec(&self) -> Result<Codec> {
        Codec::new(self.scheme, self.params)
    }
}

/// Message bits that fit a backbone at the given payload fraction.
pub fn capacity_bits(backbone: &Backbone, codec: &Codec, payload_fraction: f64) -> usize {
    let coords = (payload_fraction * backbone.dim() as f64).floor() as usize;
    coords * codec.bits_per_coord()
}

/// Honest cover via the deterministic sampler.
pub fn gen_cover(
    backbone: &Backbone,
    solver: &SolverConfig,
    guidance: &GuidanceConfig,
    quant: &Quantizer,
    rng: &mut ChaCha12Rng,
) -> Result<Vec<f64>> {
    let x_t = sample_prior_noise(backbone.dim(), &backbone.schedule, rng);
    let x0 = integrate(&x_t, solver, Direction::Generate, &backbone.prior, &backbone.schedule, guidance)?;
    Ok(quant.applied(&x0))
}

/// Honest cover via the ancestral SDE sampler (matches the shared-seed
/// scheme's generation channel).
pub fn gen_cover_sde(
    backbone: &Backbone,
    guidance: &GuidanceConfig,
    quant: &Quantizer,
    rng: &mut ChaCha12Rng,
) -> Result<Vec<f64>> {
    let x_t = sample_prior_noise(backbone.dim(), &backbone.schedule, rng);
    let x0 = sde_generate(&x_t, &backbone.prior, &backbone.schedule, guidance, rng)?;
    Ok(quant.applied(&x0))
}

/// Replay the keyed ancestral chain from x_T down to x_1 (exclusive of the
/// final step, whose noise carries the payload).
fn keyed_chain_to_x1(backbone: &Backbone, guidance: &GuidanceConfig, key: &Key) -> Result<Vec<f64>> {
    let d = backbone.dim();
    let t_max = backbone.schedule.t_max;
    let s_t = backbone.schedule.sigma(t_max);
    let mut init = key.normal_stream(StreamPurpose::SdeInit);
    let mut x: Vec<f64> = (0..d).map(|_| s_t * init.next()).collect();
    let mut noise = key.normal_stream(StreamPurpose::SdeNoise);
    for t in (2..=t_max).rev() {
        let z = noise.fill(d);
        x = reverse_sde_step_with(&x, t, &backbone.prior, &backbone.schedule, guidance, &z)?;
    }
    Ok(x)
}

/// Embed `bits` and synthesize the carrier sample; returns (x_0, manifest).
pub fn embed(backbone: &Backbone, cfg: &EmbedConfig, bits: &[u8], key: &Key) -> Result<(Vec<f64>, Manifest)> {
    if !(cfg.payload_fraction > 0.0 && cfg.payload_fraction <= 1.0) {
        return Err(Error::InvalidParam("payload fraction must lie in (0, 1]".into()));
    }
    let cap = capacity_bits(backbone, &cfg.codec, cfg.payload_fraction);
    if bits.len() > cap {
        return Err(Error::Length(format!("message of {} bits exceeds capacity {cap}", bits.len())));
    }
    if bits.is_empty() {
        return Err(Error::InvalidParam("empty message".into()));
    }
    let g = cfg.codec.encode_bits(bits, key)?;
    let d = backbone.dim();
    let k = g.len();

    let x0 = if cfg.codec.scheme.uses_sde_channel() {
        let x1 = keyed_chain_to_x1(backbone, &cfg.guidance, key)?;
        let mut fill = key.normal_stream(StreamPurpose::CoverFill);
        let z_star: Vec<f64> = (0..d).map(|j| if j < k { g[j] } else { fill.next() }).collect();
        reverse_sde_step_with(&x1, 1, &backbone.prior, &backbone.schedule, &cfg.guidance, &z_star)?
    } else {
        let s_t = backbone.schedule.sigma(backbone.schedule.t_max);
        let mut fill = key.normal_stream(StreamPurpose::CoverFill);
        let x_t: Vec<f64> = (0..d).map(|j| s_t * if j < k { g[j] } else { fill.next() }).collect();
        integrate(&x_t, &cfg.solver, Direction::Generate, &backbone.prior, &backbone.schedule, &cfg.guidance)?
    };

    let manifest = Manifest {
        backbone: backbone.name.clone(),
        scheme: cfg.codec.scheme,
        params: cfg.codec.params,
        n_bits: bits.len(),
        payload_coords: k,
        solver: cfg.solver,
        guidance: cfg.guidance,
        quant: cfg.quant,
    };
    Ok((cfg.quant.applied(&x0), manifest))
}

/// Recover the message from a carrier sample using the shared key.
pub fn extract(backbone: &Backbone, manifest: &Manifest, x0: &[f64], key: &Key) -> Result<Vec<u8>> {
    if manifest.backbone != backbone.name {
        return Err(Error::InvalidParam(format!(
            "manifest was made for backbone '{}', not '{}'",
            manifest.backbone, backbone.name
        )));
    }
    if x0.len() != backbone.dim() {
        return Err(Error::Dimension("sample dimension mismatch".into()));
    }
    let codec = manifest.codec()?;
    let k = manifest.payload_coords;

    let g_hat: Vec<f64> = if manifest.scheme.uses_sde_channel() {
        let x1 = keyed_chain_to_x1(backbone, &manifest.guidance, key)?;
        let drift = reverse_sde_drift(&x1, 1, &backbone.prior, &backbone.schedule, &manifest.guidance)?;
        let amp = (2.0 * backbone.schedule.step_contraction(1)).sqrt();
        x0.iter().zip(&drift).take(k).map(|(&x, &d)| (x - d) / amp).collect()
    } else {
        let x_t = integrate(
            x0,
            &manifest.solver,
            Direction::Invert,
            &backbone.prior,
            &backbone.schedule,
            &manifest.guidance,
        )?;
        let s_t = backbone.schedule.sigma(backbone.schedule.t_max);
        x_t.iter().take(k).map(|&v| v / s_t).collect()
    };
    codec.decode_bits(&g_hat, manifest.n_bits, key)
}

/// Invert a sample to its normalized initial-noise estimate ẑ = x̂_T / σ_T
/// (the detector's working representation).
pub fn invert_to_unit_noise(
    backbone: &Backbone,
    solver: &SolverConfig,
    guidance: &GuidanceConfig,
    x0: &[f64],
) -> Result<Vec<f64>> {
    let x_t = integrate(x0, solver, Direction::Invert, &backbone.prior, &backbone.schedule, guidance)?;
    let s_t = backbone.schedule.sigma(backbone.schedule.t_max);
    Ok(x_t.iter().map(|&v| v / s_t).collect())
}
