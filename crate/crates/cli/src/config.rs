//! Scenario configuration as a key-value text file.
//!
//! The config file uses the same `key = value` format as every other text
//! artifact here.  A file only needs the keys it wants to override; anything
//! omitted keeps the scenario preset's value.  Unknown keys are errors so
//! typos cannot silently change an experiment.

use crate::detector::GuidanceMode;
use crate::scenario::ScenarioConfig;
use noiselab_core::codecs::Scheme;
use noiselab_core::io::Kv;
use noiselab_core::solvers::{SolverConfig, SolverKind};
use noiselab_core::stego::Quantizer;
use noiselab_core::{Error, Result};

const KEYS: [&str; 22] = [
    "id",
    "r_g",
    "r_n",
    "dim",
    "channels",
    "backbones",
    "steps_second_lo",
    "steps_second_hi",
    "steps_first_lo",
    "steps_first_hi",
    "omega_lo",
    "omega_hi",
    "codecs",
    "mixed_stego",
    "train_pairs",
    "test_pairs",
    "payload_fraction",
    "quant_q",
    "quant_clip",
    "master_seed",
    "detector_backbone",
    "detector_solver",
];
const DETECTOR_KEYS: [&str; 2] = ["detector_steps", "detector_guidance"];

/// Serialize a full config (also embedded in run manifests).
pub fn config_to_kv(cfg: &ScenarioConfig) -> Kv {
    let mut kv = Kv::new("config");
    kv.push_u64("id", u64::from(cfg.id));
    kv.push_f64("r_g", cfg.r_g);
    kv.push_f64("r_n", cfg.r_n);
    kv.push_u64("dim", cfg.dim as u64);
    kv.push_u64("channels", cfg.channels as u64);
    kv.push("backbones", cfg.backbones.join(","));
    kv.push_u64("steps_second_lo", cfg.steps_second.0 as u64);
    kv.push_u64("steps_second_hi", cfg.steps_second.1 as u64);
    kv.push_u64("steps_first_lo", cfg.steps_first.0 as u64);
    kv.push_u64("steps_first_hi", cfg.steps_first.1 as u64);
    kv.push_f64("omega_lo", cfg.omega.0);
    kv.push_f64("omega_hi", cfg.omega.1);
    kv.push("codecs", cfg.codecs.iter().map(|s| s.name()).collect::<Vec<_>>().join(","));
    kv.push("mixed_stego", if cfg.mixed_stego { "true" } else { "false" });
    kv.push_u64("train_pairs", cfg.train_pairs as u64);
    kv.push_u64("test_pairs", cfg.test_pairs as u64);
    kv.push_f64("payload_fraction", cfg.payload_fraction);
    kv.push_u64("quant_q", u64::from(cfg.quant.q));
    kv.push_f64("quant_clip", cfg.quant.clip);
    kv.push_u64("master_seed", cfg.master_seed);
    kv.push("detector_backbone", &cfg.detector.backbone);
    kv.push("detector_solver", cfg.detector.solver.kind.name());
    kv.push_u64("detector_steps", cfg.detector.solver.steps as u64);
    match cfg.detector.guidance {
        GuidanceMode::Off => kv.push("detector_guidance", "off"),
        GuidanceMode::TrueLabel { omega } => {
            kv.push("detector_guidance", "true-label");
            kv.push_f64("detector_omega", omega);
        }
    }
    kv
}

/// Apply overrides from a parsed key-value file onto `cfg`.
pub fn apply_overrides(cfg: &mut ScenarioConfig, kv: &Kv) -> Result<()> {
    for (key, _) in kv.entries() {
        let known = KEYS.contains(&key) || DETECTOR_KEYS.contains(&key) || key == "detector_omega";
        if !known {
            return Err(Error::InvalidParam(format!("unknown config key '{key}'")));
        }
    }
    if let Some(v) = kv.get("id") {
        cfg.id = v.parse().map_err(|_| Error::Format("bad id".into()))?;
    }
    if kv.get("r_g").is_some() {
        cfg.r_g = kv.get_f64("r_g")?;
    }
    if kv.get("r_n").is_some() {
        cfg.r_n = kv.get_f64("r_n")?;
    }
    if kv.get("dim").is_some() {
        cfg.dim = kv.get_usize("dim")?;
    }
    if kv.get("channels").is_some() {
        cfg.channels = kv.get_usize("channels")?;
    }
    if let Some(v) = kv.get("backbones") {
        cfg.backbones = v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
    }
    if kv.get("steps_second_lo").is_some() {
        cfg.steps_second.0 = kv.get_usize("steps_second_lo")?;
    }
    if kv.get("steps_second_hi").is_some() {
        cfg.steps_second.1 = kv.get_usize("steps_second_hi")?;
    }
    if kv.get("steps_first_lo").is_some() {
        cfg.steps_first.0 = kv.get_usize("steps_first_lo")?;
    }
    if kv.get("steps_first_hi").is_some() {
        cfg.steps_first.1 = kv.get_usize("steps_first_hi")?;
    }
    if kv.get("omega_lo").is_some() {
        cfg.omega.0 = kv.get_f64("omega_lo")?;
    }
    if kv.get("omega_hi").is_some() {
        cfg.omega.1 = kv.get_f64("omega_hi")?;
    }
    if let Some(v) = kv.get("codecs") {
        cfg.codecs = v
            .split(',')
            .map(|s| Scheme::from_name(s.trim()))
            .collect::<Result<Vec<_>>>()?;
    }
    if let Some(v) = kv.get("mixed_stego") {
        cfg.mixed_stego = match v {
            "true" => true,
            "false" => false,
            other => return Err(Error::Format(format!("mixed_stego must be true/false, got '{other}'"))),
        };
    }
    if kv.get("train_pairs").is_some() {
        cfg.train_pairs = kv.get_usize("train_pairs")?;
    }
    if kv.get("test_pairs").is_some() {
        cfg.test_pairs = kv.get_usize("test_pairs")?;
    }
    if kv.get("payload_fraction").is_some() {
        cfg.payload_fraction = kv.get_f64("payload_fraction")?;
    }
    if kv.get("quant_q").is_some() || kv.get("quant_clip").is_some() {
        let q = if kv.get("quant_q").is_some() { kv.get_u64("quant_q")? as u32 } else { cfg.quant.q };
        let clip = if kv.get("quant_clip").is_some() { kv.get_f64("quant_clip")? } else { cfg.quant.clip };
        cfg.quant = Quantizer::new(q, clip)?;
    }
    if kv.get("master_seed").is_some() {
        cfg.master_seed = kv.get_u64("master_seed")?;
    }
    if let Some(v) = kv.get("detector_backbone") {
        cfg.detector.backbone = v.to_string();
    }
    if kv.get("detector_solver").is_some() || kv.get("detector_steps").is_some() {
        let kind = match kv.get("detector_solver") {
            Some(v) => SolverKind::from_name(v)?,
            None => cfg.detector.solver.kind,
        };
        let steps = if kv.get("detector_steps").is_some() {
            kv.get_usize("detector_steps")?
        } else {
            cfg.detector.solver.steps
        };
        cfg.detector.solver = SolverConfig { kind, steps };
    }
    if let Some(v) = kv.get("detector_guidance") {
        cfg.detector.guidance = match v {
            "off" => GuidanceMode::Off,
            "true-label" => {
                let omega = if kv.get("detector_omega").is_some() { kv.get_f64("detector_omega")? } else { 7.5 };
                GuidanceMode::TrueLabel { omega }
            }
            other => return Err(Error::Format(format!("detector_guidance must be off/true-label, got '{other}'"))),
        };
    }
    cfg.validate()
}

/// FNV-1a hash of a config's canonical text, for run manifests.
pub fn hash64(text: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x1000_0000_01b3);
    }
    h
}
