//! Named generative backbones and the natural-image analogue.
//!
//! The three `vp-*` backbones form one model family, the way checkpoints of
//! one architecture do: a shared four-component labeled base mixture, then a
//! per-backbone perturbation (jittered means/variances, one component added
//! or dropped) and a per-backbone discretization grid (T = 1000/800/1200).
//! A detector pinned to one family member therefore faces a mild, realistic
//! mismatch when inverting samples from the others — not an unrelated model
//! whose flow scrambles every statistic.  The "natural" source is a
//! heavier-tailed unlabeled mixture that is *never* installed as a backbone
//! prior — it stands in for real photographs mixed into cover sets.
//!
//! All members run the linear-β schedule.  The cosine schedule's terminal
//! ᾱ_T ≈ 6e−17 puts λ(T) near −37; a uniform-t solver step from T then spans
//! ~35 log-α units, and under classifier-free guidance at the scales these
//! scenarios draw (ω up to 10.5) that one stride amplifies the guided
//! velocity enough to inflate sample variance 5–80×.  Deployed backbones
//! generate cleanly at those scales, so a member that cannot is not a
//! credible stand-in; schedule-grid diversity supplies the cross-model
//! mismatch instead.

use noiselab_core::prior::{GmmComponent, GmmPrior};
use noiselab_core::schedule::{NoiseSchedule, ScheduleKind};
use noiselab_core::stego::Backbone;
use noiselab_core::{seeds, Error, Result};
use rand::Rng;
use rand_distr::StandardNormal;

/// Backbone identifiers accepted wherever a model name is expected.
pub const BACKBONE_NAMES: [&str; 3] = ["vp-a", "vp-b", "vp-c"];

/// Provenance tag for natural-analogue covers (not a backbone).
pub const NATURAL_SOURCE: &str = "natural";

const FAMILY_SEED: u64 = 0x6d6f64656c;

struct MixtureShape {
    tag: u64,
    components: usize,
    mean_scale: f64,
    var_range: (f64, f64),
    labeled: bool,
}

fn seeded_mixture(dim: usize, shape: &MixtureShape) -> GmmPrior {
    let mut rng = seeds::rng(seeds::derive(FAMILY_SEED, &[shape.tag, dim as u64]));
    let k = shape.components;
    let raw: Vec<f64> = (0..k).map(|_| 1.0 + 0.25 * rng.gen::<f64>()).collect();
    let wsum: f64 = raw.iter().sum();
    let components = (0..k)
        .map(|i| GmmComponent {
            weight: raw[i] / wsum,
            mean: (0..dim)
                .map(|_| shape.mean_scale * rng.sample::<f64, _>(StandardNormal))
                .collect(),
            var: (0..dim)
                .map(|_| rng.gen_range(shape.var_range.0..shape.var_range.1))
                .collect(),
            label: shape.labeled.then_some(i as u32),
        })
        .collect();
    GmmPrior::new(dim, components).expect("seeded mixture is always valid")
}

/// The family's shared base prior: four labeled components.
fn family_base(dim: usize) -> GmmPrior {
    seeded_mixture(
        dim,
        &MixtureShape { tag: 0xba5e, components: 4, mean_scale: 0.7, var_range: (0.6, 1.4), labeled: true },
    )
}

/// Perturb a sibling checkpoint out of the base: add seeded jitter to every
/// mean coordinate, scale variances by exp(±var_jitter), and re-tilt weights.
fn jittered(base: GmmPrior, tag: u64, mean_jitter: f64, var_jitter: f64) -> GmmPrior {
    let dim = base.dim;
    let mut rng = seeds::rng(seeds::derive(FAMILY_SEED, &[tag, dim as u64]));
    let mut components = base.components;
    for c in &mut components {
        for m in &mut c.mean {
            *m += mean_jitter * rng.sample::<f64, _>(StandardNormal);
        }
        for v in &mut c.var {
            *v *= (var_jitter * rng.gen_range(-1.0..1.0)).exp();
        }
        c.weight *= 1.0 + 0.15 * rng.gen::<f64>();
    }
    let wsum: f64 = components.iter().map(|c| c.weight).sum();
    for c in &mut components {
        c.weight /= wsum;
    }
    GmmPrior::new(dim, components).expect("jittered mixture is always valid")
}

/// Build a named backbone at the requested data layout.
///
/// `vp-a` is the base checkpoint on the T = 1000 grid.  `vp-b` jitters the
/// base, appends a fifth low-weight component (so its label set strictly
/// contains every sibling's), and discretizes at T = 800.  `vp-c` drops the
/// base's last component, jitters harder, and discretizes at T = 1200.
pub fn backbone(name: &str, dim: usize, channels: usize) -> Result<Backbone> {
    let (prior, t_max) = match name {
        "vp-a" => (family_base(dim), 1000),
        "vp-b" => {
            let mut prior = jittered(family_base(dim), 0xb, 0.06, 0.06);
            let mut rng = seeds::rng(seeds::derive(FAMILY_SEED, &[0xb5, dim as u64]));
            for c in &mut prior.components {
                c.weight *= 0.95;
            }
            prior.components.push(GmmComponent {
                weight: 0.05,
                mean: (0..dim).map(|_| 0.7 * rng.sample::<f64, _>(StandardNormal)).collect(),
                var: (0..dim).map(|_| rng.gen_range(0.8..1.2)).collect(),
                label: Some(4),
            });
            (GmmPrior::new(dim, prior.components)?, 800)
        }
        "vp-c" => {
            let mut base = family_base(dim);
            base.components.pop();
            let wsum: f64 = base.components.iter().map(|c| c.weight).sum();
            for c in &mut base.components {
                c.weight /= wsum;
            }
            let trimmed = GmmPrior::new(dim, base.components)?;
            (jittered(trimmed, 0xc, 0.12, 0.10), 1200)
        }
        "unit" => {
            let schedule = NoiseSchedule::build(ScheduleKind::LinearBeta, 1000)?;
            return Backbone::new("unit", channels, GmmPrior::standard_normal(dim), schedule);
        }
        other => {
            return Err(Error::InvalidParam(format!(
                "unknown backbone '{other}' (expected one of vp-a, vp-b, vp-c, unit)"
            )))
        }
    };
    let schedule = NoiseSchedule::build(ScheduleKind::LinearBeta, t_max)?;
    Backbone::new(name, channels, prior, schedule)
}

/// Unlabeled mixture standing in for natural images: plausible under the
/// family's general shape but off every backbone's manifold, with a
/// moderately wide extra component for the occasional heavy-tailed shot.
/// Kept within ~2× the backbone variances — a "photo", not an alien — so
/// natural covers enrich the cover class without drowning the codec-level
/// feature shifts the detector must still resolve.
pub fn natural_analogue(dim: usize) -> GmmPrior {
    let base = seeded_mixture(
        dim,
        &MixtureShape { tag: 0xf00d, components: 5, mean_scale: 0.9, var_range: (0.7, 1.9), labeled: false },
    );
    let mut rng = seeds::rng(seeds::derive(FAMILY_SEED, &[0xfeed, dim as u64]));
    let mut components: Vec<GmmComponent> = base
        .components
        .into_iter()
        .map(|mut c| {
            c.weight *= 0.88;
            c
        })
        .collect();
    components.push(GmmComponent {
        weight: 0.12,
        mean: (0..dim).map(|_| 0.4 * rng.sample::<f64, _>(StandardNormal)).collect(),
        var: (0..dim).map(|_| rng.gen_range(2.2..3.0)).collect(),
        label: None,
    });
    GmmPrior::new(dim, components).expect("natural mixture is always valid")
}
