//! Payload-spread sweep for the truncated codec: the security/fidelity
//! trade-off in one table.
//!
//! The truncated codec keeps only the central `θ` probability mass of each
//! symbol bin, so small θ means wide decision margins (robust extraction,
//! distorted noise law) and θ = 1 collapses to the distribution-preserving
//! bin codec.  Each grid point measures message extraction accuracy under
//! quantization, the coordinate law's divergence from N(0, 1), and the
//! detector's test accuracy — all from per-point derived seeds so grid
//! points can run in parallel.

use crate::backbones;
use crate::detector::{feature_rows, DetectorSettings};
use crate::scenario::{Class, Provenance, Sample, Split};
use noiselab_core::analysis::codec_kl;
use noiselab_core::codecs::{extraction_accuracy, random_bits, Codec, CodecParams, Key, Scheme};
use noiselab_core::ensemble::{evaluate, train};
use noiselab_core::io::fmt_f64;
use noiselab_core::par;
use noiselab_core::prior::GuidanceConfig;
use noiselab_core::seeds;
use noiselab_core::solvers::{SolverConfig, SolverKind};
use noiselab_core::stego::{capacity_bits, embed, extract, gen_cover, Backbone, EmbedConfig, Quantizer};
use noiselab_core::{Error, Result};
use rand::Rng;

const DOMAIN_SWEEP: u64 = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub points: usize,
    pub theta: (f64, f64),
    pub quant: Quantizer,
    /// Messages per grid point for the extraction-accuracy estimate.
    pub messages: usize,
    /// Cover/stego pairs for the per-point detector run.
    pub train_pairs: usize,
    pub test_pairs: usize,
    pub dim: usize,
    pub channels: usize,
    pub master_seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            points: 10,
            theta: (0.55, 1.0),
            quant: Quantizer { q: 256, clip: 4.0 },
            messages: 100,
            train_pairs: 300,
            test_pairs: 150,
            dim: 64,
            channels: 2,
            master_seed: 20260814,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub theta: f64,
    pub extraction_acc: f64,
    /// Finite KL direction between the payload law and N(0, 1).
    pub kl: f64,
    pub tv: f64,
    pub detection_pct: f64,
}

fn embed_config(theta: f64, quant: Quantizer, guidance: GuidanceConfig) -> Result<EmbedConfig> {
    Ok(EmbedConfig {
        codec: Codec::new(Scheme::Truncated, CodecParams { bits_per_coord: 1, theta })?,
        payload_fraction: 1.0,
        // first-order sampler, matching the codec's generation setup
        solver: SolverConfig { kind: SolverKind::Euler1, steps: 50 },
        guidance,
        quant,
    })
}

fn draw_guidance(model: &Backbone, rng: &mut rand_chacha::ChaCha12Rng) -> GuidanceConfig {
    let labels = model.prior.labels();
    GuidanceConfig { condition: Some(labels[rng.gen_range(0..labels.len())]), omega: 7.5 }
}

fn point_eval(cfg: &SweepConfig, model: &Backbone, theta: f64, tag: u64) -> Result<SweepPoint> {
    // channel fidelity: embed/extract with the sender's own manifest
    let mut rng = seeds::rng(seeds::derive(cfg.master_seed, &[DOMAIN_SWEEP, tag, 1]));
    let mut acc_sum = 0.0;
    for m in 0..cfg.messages {
        let guidance = draw_guidance(model, &mut rng);
        let ec = embed_config(theta, cfg.quant, guidance)?;
        let key = Key::from_seed(seeds::derive(cfg.master_seed, &[DOMAIN_SWEEP, tag, 2, m as u64]));
        let bits = random_bits(capacity_bits(model, &ec.codec, 1.0), &mut rng);
        let (x0, manifest) = embed(model, &ec, &bits, &key)?;
        let got = extract(model, &manifest, &x0, &key)?;
        acc_sum += extraction_accuracy(&bits, &got);
    }
    let extraction_acc = acc_sum / cfg.messages.max(1) as f64;

    // law divergence from the reference noise
    let divergences = codec_kl(&Codec::new(Scheme::Truncated, CodecParams { bits_per_coord: 1, theta })?.coordinate_law());

    // detector accuracy on a small scenario-#1-style dataset
    let n = cfg.train_pairs + cfg.test_pairs;
    let mk = |class: Class, i: usize| -> Result<Sample> {
        let seed = seeds::derive(
            cfg.master_seed,
            &[DOMAIN_SWEEP, tag, if class == Class::Cover { 3 } else { 4 }, i as u64],
        );
        let mut rng = seeds::rng(seed);
        let guidance = draw_guidance(model, &mut rng);
        let ec = embed_config(theta, cfg.quant, guidance)?;
        let x0 = match class {
            Class::Cover => gen_cover(model, &ec.solver, &guidance, &cfg.quant, &mut rng)?,
            Class::Stego => {
                let key = Key::from_seed(seeds::derive(cfg.master_seed, &[DOMAIN_SWEEP, tag, 5, i as u64]));
                let bits = random_bits(capacity_bits(model, &ec.codec, 1.0), &mut rng);
                embed(model, &ec, &bits, &key)?.0
            }
        };
        Ok(Sample {
            x0,
            prov: Provenance {
                index: i,
                split: if i < cfg.train_pairs { Split::Train } else { Split::Test },
                class,
                seed,
                source: model.name.clone(),
                scheme: (class == Class::Stego).then_some(Scheme::Truncated),
                sampler: "euler1/50".to_string(),
                omega: guidance.omega,
                condition: guidance.condition,
                key_seed: None,
                quant_q: cfg.quant.q,
            },
        })
    };
    let covers: Vec<Sample> = (0..n).map(|i| mk(Class::Cover, i)).collect::<Result<_>>()?;
    let stegos: Vec<Sample> = (0..n).map(|i| mk(Class::Stego, i)).collect::<Result<_>>()?;
    let settings = DetectorSettings::default();
    let inversion = backbones::backbone(&settings.backbone, cfg.dim, cfg.channels)?;
    let f_cover = feature_rows(&covers, &inversion, &settings)?;
    let f_stego = feature_rows(&stegos, &inversion, &settings)?;
    let (tc, ec_) = f_cover.split_at(cfg.train_pairs);
    let (ts, es) = f_stego.split_at(cfg.train_pairs);
    let det = train(tc, ts, &settings.hyper, seeds::derive(cfg.master_seed, &[DOMAIN_SWEEP, tag, 6]))?;
    let report = evaluate(&det, ec_, es);

    Ok(SweepPoint {
        theta,
        extraction_acc,
        kl: divergences.kl_finite(),
        tv: divergences.tv,
        detection_pct: 100.0 * report.balanced_accuracy(),
    })
}

/// Evaluate the whole grid; points are independent and derive their own
/// seeds, so parallel and sequential runs agree.
pub fn run_sweep(cfg: &SweepConfig) -> Result<Vec<SweepPoint>> {
    if cfg.points < 2 {
        return Err(Error::InvalidParam("sweep needs at least two grid points".into()));
    }
    if !(cfg.theta.0 > 0.0 && cfg.theta.1 <= 1.0 && cfg.theta.0 < cfg.theta.1) {
        return Err(Error::InvalidParam("theta grid must satisfy 0 < lo < hi <= 1".into()));
    }
    let model = backbones::backbone("vp-a", cfg.dim, cfg.channels)?;
    par::map_indexed(cfg.points, |i| {
        let theta = cfg.theta.0 + (cfg.theta.1 - cfg.theta.0) * i as f64 / (cfg.points - 1) as f64;
        point_eval(cfg, &model, theta, i as u64)
    })
    .into_iter()
    .collect()
}

pub fn sweep_csv(points: &[SweepPoint]) -> String {
    let mut out = String::from("theta,extraction_acc,kl_or_sentinel,tv,detection_acc\n");
    for p in points {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt_f64(p.theta),
            fmt_f64(p.extraction_acc),
            fmt_f64(p.kl),
            fmt_f64(p.tv),
            fmt_f64(p.detection_pct)
        ));
    }
    out
}
