//! Scenario definitions and dataset construction.
//!
//! A scenario fixes how covers and stegos are produced: which backbones, how
//! many sampling steps, what guidance strength, which codecs, and what share
//! of covers comes from the natural-analogue source instead of a generator.
//! Four presets ship:
//!
//! * **#1** — covers and stegos generated by one backbone with identical
//!   sampler settings; the friendliest case for a detector.
//! * **#2** — half the covers are natural-analogue samples.
//! * **#3** — additionally, every sample draws its own backbone, step count
//!   and guidance scale from ranges.
//! * **#4** — like #3, but the stego set mixes several codecs uniformly.
//!
//! Everything is derived from the master seed by sample index, so dataset
//! contents are independent of thread count and rebuildable row by row.

use crate::backbones;
use crate::detector::DetectorSettings;
use noiselab_core::codecs::{random_bits, Codec, CoordinateLaw, Scheme};
use noiselab_core::codecs::Key;
use noiselab_core::par;
use noiselab_core::prior::{GmmPrior, GuidanceConfig};
use noiselab_core::seeds;
use noiselab_core::solvers::{SolverConfig, SolverKind};
use noiselab_core::stego::{capacity_bits, embed, gen_cover, gen_cover_sde, Backbone, EmbedConfig, Quantizer};
use noiselab_core::{Error, Result};
use rand::Rng;
use rand_chacha::ChaCha12Rng;

/// Seed-derivation domains; the row tag and sample index complete the path.
const DOMAIN_COVER: u64 = 10;
const DOMAIN_STEGO: u64 = 20;
const DOMAIN_KEY: u64 = 30;
const DOMAIN_TRAIN: u64 = 40;

/// Schemes whose generator runs a second-order sampler (the rest use a
/// first-order one, except the shared-seed scheme, which replays the full
/// ancestral chain and has no solver choice).
pub fn second_order(scheme: Scheme) -> bool {
    matches!(
        scheme,
        Scheme::MapNoise | Scheme::MapBinary | Scheme::MapConstant | Scheme::GaussianShading | Scheme::HammingBall
    )
}

/// Whether a codec leaves each payload coordinate exactly standard normal
/// (the "distribution-preserving" family graded against the 50% line).
pub fn distribution_preserving(scheme: Scheme) -> bool {
    matches!(Codec::with_defaults(scheme).coordinate_law(), CoordinateLaw::StdNormal)
}

/// One result row: a stego population the detector is scored against.
#[derive(Debug, Clone, PartialEq)]
pub struct RowSpec {
    pub name: String,
    /// Stable tag for seed derivation.
    pub tag: u64,
    /// Schemes cycled over stego indices (singleton except in mixed rows).
    pub schemes: Vec<Scheme>,
}

impl RowSpec {
    pub fn single(scheme: Scheme) -> RowSpec {
        let tag = Scheme::ALL.iter().position(|&s| s == scheme).unwrap() as u64;
        RowSpec { name: scheme.name().to_string(), tag, schemes: vec![scheme] }
    }

    pub fn mixed(schemes: Vec<Scheme>) -> RowSpec {
        RowSpec { name: "mixed".to_string(), tag: 100, schemes }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub id: u8,
    /// Share of covers that are generated; the rest are natural-analogue.
    pub r_g: f64,
    pub r_n: f64,
    pub dim: usize,
    pub channels: usize,
    pub backbones: Vec<String>,
    /// Step range for second-order generation (inclusive).
    pub steps_second: (usize, usize),
    /// Step range for first-order generation (inclusive).
    pub steps_first: (usize, usize),
    /// Guidance-scale range (inclusive; singleton when lo == hi).
    pub omega: (f64, f64),
    pub codecs: Vec<Scheme>,
    /// One row cycling `codecs` over stego samples instead of a row per codec.
    pub mixed_stego: bool,
    pub train_pairs: usize,
    pub test_pairs: usize,
    pub payload_fraction: f64,
    pub quant: Quantizer,
    pub master_seed: u64,
    pub detector: DetectorSettings,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=4).contains(&self.id) {
            return Err(Error::InvalidParam(format!("scenario id {} outside 1..=4", self.id)));
        }
        if !(0.0..=1.0).contains(&self.r_g) || (self.r_g + self.r_n - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParam(format!("cover ratios r_g={} r_n={} must sum to 1", self.r_g, self.r_n)));
        }
        if self.dim == 0 || self.channels == 0 || self.dim % self.channels != 0 {
            return Err(Error::InvalidParam(format!("dim {} not divisible into {} channels", self.dim, self.channels)));
        }
        if self.backbones.is_empty() || self.codecs.is_empty() {
            return Err(Error::InvalidParam("backbone and codec lists must be non-empty".into()));
        }
        for (lo, hi) in [self.steps_second, self.steps_first] {
            if lo == 0 || lo > hi {
                return Err(Error::InvalidParam(format!("bad step range {lo}..={hi}")));
            }
        }
        if !(self.omega.0 <= self.omega.1) || !self.omega.0.is_finite() || !self.omega.1.is_finite() {
            return Err(Error::InvalidParam("bad guidance range".into()));
        }
        if self.train_pairs == 0 || self.test_pairs == 0 {
            return Err(Error::InvalidParam("train and test splits must be non-empty".into()));
        }
        if !(self.payload_fraction > 0.0 && self.payload_fraction <= 1.0) {
            return Err(Error::InvalidParam("payload fraction must lie in (0, 1]".into()));
        }
        if self.id == 1 {
            let singleton = self.r_n == 0.0
                && self.steps_second.0 == self.steps_second.1
                && self.steps_first.0 == self.steps_first.1
                && self.omega.0 == self.omega.1
                && self.backbones.len() == 1;
            if !singleton {
                return Err(Error::InvalidParam(
                    "scenario 1 requires all-generated covers and singleton sampler settings".into(),
                ));
            }
        }
        if self.mixed_stego && self.codecs.iter().any(|s| s.uses_sde_channel()) {
            return Err(Error::InvalidParam(
                "mixed stego rows cannot include the shared-seed scheme (covers cannot mirror two samplers)".into(),
            ));
        }
        Ok(())
    }

    /// Result rows this scenario produces.
    pub fn rows(&self) -> Vec<RowSpec> {
        if self.mixed_stego {
            vec![RowSpec::mixed(self.codecs.clone())]
        } else {
            self.codecs.iter().map(|&s| RowSpec::single(s)).collect()
        }
    }

    /// Seed for detector training on a given row.
    pub fn train_seed(&self, row: &RowSpec) -> u64 {
        seeds::derive(self.master_seed, &[DOMAIN_TRAIN, row.tag])
    }
}

/// Preset matching the published table of scenario setups.
pub fn default_config(id: u8) -> Result<ScenarioConfig> {
    let base = ScenarioConfig {
        id: 1,
        r_g: 1.0,
        r_n: 0.0,
        // 2×128 coordinates: large enough that per-sample moment estimators
        // resolve each codec's law shift, small enough to stay desk-scale
        dim: 256,
        channels: 2,
        backbones: vec!["vp-a".to_string()],
        steps_second: (20, 20),
        steps_first: (50, 50),
        omega: (7.5, 7.5),
        codecs: Scheme::ALL.to_vec(),
        mixed_stego: false,
        train_pairs: 1800,
        test_pairs: 200,
        payload_fraction: 1.0,
        quant: Quantizer::new(256, 4.0)?,
        master_seed: 20260814,
        detector: DetectorSettings::default(),
    };
    let all = vec!["vp-a".to_string(), "vp-b".to_string(), "vp-c".to_string()];
    let cfg = match id {
        1 => base,
        2 => ScenarioConfig { id: 2, r_g: 0.5, r_n: 0.5, ..base },
        3 => ScenarioConfig {
            id: 3,
            r_g: 0.5,
            r_n: 0.5,
            backbones: all,
            steps_second: (15, 25),
            steps_first: (45, 55),
            omega: (4.5, 10.5),
            ..base
        },
        4 => ScenarioConfig {
            id: 4,
            r_g: 0.5,
            r_n: 0.5,
            backbones: all,
            steps_second: (15, 25),
            steps_first: (45, 55),
            omega: (4.5, 10.5),
            codecs: vec![Scheme::MapNoise, Scheme::MapConstant, Scheme::MapBinary, Scheme::HammingBall],
            mixed_stego: true,
            ..base
        },
        other => return Err(Error::InvalidParam(format!("scenario id {other} outside 1..=4"))),
    };
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Class {
    Cover,
    Stego,
}

impl Class {
    pub fn name(self) -> &'static str {
        match self {
            Class::Cover => "cover",
            Class::Stego => "stego",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// Everything needed to trace a sample back to its generation parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub index: usize,
    pub split: Split,
    pub class: Class,
    pub seed: u64,
    /// Backbone name, or "natural" for analogue covers.
    pub source: String,
    pub scheme: Option<Scheme>,
    /// "heun2/20", "euler1/50", "sde-chain/1000", or "direct".
    pub sampler: String,
    pub omega: f64,
    pub condition: Option<u32>,
    pub key_seed: Option<u64>,
    pub quant_q: u32,
}

#[derive(Debug, Clone)]
pub struct Sample {
    pub x0: Vec<f64>,
    pub prov: Provenance,
}

/// A built scenario row: balanced cover/stego populations, split for
/// training and testing.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub scenario_id: u8,
    pub row: RowSpec,
    pub dim: usize,
    pub channels: usize,
    pub train_cover: Vec<Sample>,
    pub train_stego: Vec<Sample>,
    pub test_cover: Vec<Sample>,
    pub test_stego: Vec<Sample>,
}

impl Dataset {
    pub fn all_samples(&self) -> impl Iterator<Item = &Sample> {
        self.train_cover
            .iter()
            .chain(&self.train_stego)
            .chain(&self.test_cover)
            .chain(&self.test_stego)
    }
}

/// Exact-count interleaving: sample `i` is generated iff the running count
/// of generated samples must advance to keep the prefix share at r_g.
fn takes_generated(i: usize, r_g: f64) -> bool {
    (((i + 1) as f64) * r_g).floor() > ((i as f64) * r_g).floor()
}

fn draw_range_usize(rng: &mut ChaCha12Rng, (lo, hi): (usize, usize)) -> usize {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..=hi)
    }
}

fn draw_range_f64(rng: &mut ChaCha12Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..hi)
    }
}

/// Per-sample generator draws shared by covers and stegos: backbone,
/// sampler, guidance scale, condition label — in that fixed order.
fn draw_generation(
    cfg: &ScenarioConfig,
    scheme: Scheme,
    models: &[Backbone],
    rng: &mut ChaCha12Rng,
) -> (usize, SolverConfig, GuidanceConfig) {
    let b = rng.gen_range(0..models.len());
    let solver = if second_order(scheme) {
        SolverConfig { kind: SolverKind::Heun2, steps: draw_range_usize(rng, cfg.steps_second) }
    } else {
        SolverConfig { kind: SolverKind::Euler1, steps: draw_range_usize(rng, cfg.steps_first) }
    };
    let omega = draw_range_f64(rng, cfg.omega);
    let labels = models[b].prior.labels();
    let condition = labels[rng.gen_range(0..labels.len())];
    (b, solver, GuidanceConfig { condition: Some(condition), omega })
}

fn make_cover(
    cfg: &ScenarioConfig,
    row: &RowSpec,
    models: &[Backbone],
    natural: &GmmPrior,
    i: usize,
) -> Result<Sample> {
    let seed = seeds::derive(cfg.master_seed, &[DOMAIN_COVER, row.tag, i as u64]);
    let mut rng = seeds::rng(seed);
    let split = if i < cfg.train_pairs { Split::Train } else { Split::Test };
    if takes_generated(i, cfg.r_g) {
        // covers mirror the sampler family of the codec they will be
        // compared against (ancestral chain for the shared-seed scheme)
        let scheme = row.schemes[i % row.schemes.len()];
        let (b, solver, guidance) = draw_generation(cfg, scheme, models, &mut rng);
        let model = &models[b];
        let (x0, sampler) = if scheme.uses_sde_channel() {
            let x0 = gen_cover_sde(model, &guidance, &cfg.quant, &mut rng)?;
            (x0, format!("sde-chain/{}", model.schedule.t_max))
        } else {
            let x0 = gen_cover(model, &solver, &guidance, &cfg.quant, &mut rng)?;
            (x0, format!("{}/{}", solver.kind.name(), solver.steps))
        };
        Ok(Sample {
            x0,
            prov: Provenance {
                index: i,
                split,
                class: Class::Cover,
                seed,
                source: model.name.clone(),
                scheme: None,
                sampler,
                omega: guidance.omega,
                condition: guidance.condition,
                key_seed: None,
                quant_q: cfg.quant.q,
            },
        })
    } else {
        let x0 = cfg.quant.applied(&natural.sample(&mut rng));
        Ok(Sample {
            x0,
            prov: Provenance {
                index: i,
                split,
                class: Class::Cover,
                seed,
                source: backbones::NATURAL_SOURCE.to_string(),
                scheme: None,
                sampler: "direct".to_string(),
                omega: 0.0,
                condition: None,
                key_seed: None,
                quant_q: cfg.quant.q,
            },
        })
    }
}

fn make_stego(cfg: &ScenarioConfig, row: &RowSpec, models: &[Backbone], i: usize) -> Result<Sample> {
    let seed = seeds::derive(cfg.master_seed, &[DOMAIN_STEGO, row.tag, i as u64]);
    let mut rng = seeds::rng(seed);
    let split = if i < cfg.train_pairs { Split::Train } else { Split::Test };
    let scheme = row.schemes[i % row.schemes.len()];
    let (b, solver, guidance) = draw_generation(cfg, scheme, models, &mut rng);
    let model = &models[b];
    let key_seed = seeds::derive(cfg.master_seed, &[DOMAIN_KEY, row.tag, i as u64]);
    let key = Key::from_seed(key_seed);
    let codec = Codec::with_defaults(scheme);
    let n_bits = capacity_bits(model, &codec, cfg.payload_fraction);
    let bits = random_bits(n_bits, &mut rng);
    let embed_cfg = EmbedConfig {
        codec,
        payload_fraction: cfg.payload_fraction,
        solver,
        guidance,
        quant: cfg.quant,
    };
    let (x0, _manifest) = embed(model, &embed_cfg, &bits, &key)?;
    let sampler = if scheme.uses_sde_channel() {
        format!("sde-chain/{}", model.schedule.t_max)
    } else {
        format!("{}/{}", solver.kind.name(), solver.steps)
    };
    Ok(Sample {
        x0,
        prov: Provenance {
            index: i,
            split,
            class: Class::Stego,
            seed,
            source: model.name.clone(),
            scheme: Some(scheme),
            sampler,
            omega: guidance.omega,
            condition: guidance.condition,
            key_seed: Some(key_seed),
            quant_q: cfg.quant.q,
        },
    })
}

/// Build one row's balanced dataset.  Sample `i` of either class is a pure
/// function of (config, row, i), so parallel construction is deterministic.
pub fn build_dataset(cfg: &ScenarioConfig, row: &RowSpec) -> Result<Dataset> {
    cfg.validate()?;
    let models: Vec<Backbone> = cfg
        .backbones
        .iter()
        .map(|name| backbones::backbone(name, cfg.dim, cfg.channels))
        .collect::<Result<_>>()?;
    let natural = backbones::natural_analogue(cfg.dim);
    let n = cfg.train_pairs + cfg.test_pairs;

    let covers: Vec<Sample> = par::map_indexed(n, |i| make_cover(cfg, row, &models, &natural, i))
        .into_iter()
        .collect::<Result<_>>()?;
    let stegos: Vec<Sample> = par::map_indexed(n, |i| make_stego(cfg, row, &models, i))
        .into_iter()
        .collect::<Result<_>>()?;

    let (train_cover, test_cover): (Vec<_>, Vec<_>) =
        covers.into_iter().partition(|s| s.prov.split == Split::Train);
    let (train_stego, test_stego): (Vec<_>, Vec<_>) =
        stegos.into_iter().partition(|s| s.prov.split == Split::Train);
    Ok(Dataset {
        scenario_id: cfg.id,
        row: row.clone(),
        dim: cfg.dim,
        channels: cfg.channels,
        train_cover,
        train_stego,
        test_cover,
        test_stego,
    })
}
