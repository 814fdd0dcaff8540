//! Divergence analysis: discrete data-processing checks, payload-law
//! divergences from the reference noise, and the normalized overall score
//! used in scenario reports.
//!
//! The discrete half works on finite distributions and deterministic maps:
//! KL is invariant under bijections and can only shrink under many-to-one
//! maps.  The continuous half integrates codec coordinate laws against the
//! standard normal with adaptive Simpson quadrature, splitting at support
//! edges so every sub-interval is smooth.

use crate::codecs::CoordinateLaw;
use crate::error::{Error, Result};
use crate::normal;

/// KL divergence Σ p ln(p/q) over a shared finite support.
/// Terms with p = 0 vanish; any p > 0 against q = 0 yields +∞.
pub fn kl_discrete(p: &[f64], q: &[f64]) -> Result<f64> {
    check_dist(p)?;
    check_dist(q)?;
    if p.len() != q.len() {
        return Err(Error::Dimension("distributions differ in support size".into()));
    }
    let mut acc = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi == 0.0 {
            continue;
        }
        if qi == 0.0 {
            return Ok(f64::INFINITY);
        }
        acc += pi * (pi / qi).ln();
    }
    Ok(acc.max(0.0))
}

fn check_dist(p: &[f64]) -> Result<()> {
    if p.is_empty() {
        return Err(Error::InvalidParam("empty distribution".into()));
    }
    if p.iter().any(|&v| !(v >= 0.0)) {
        return Err(Error::InvalidParam("negative probability".into()));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParam(format!("probabilities sum to {s}")));
    }
    Ok(())
}

/// Image distribution of `p` under the deterministic map i ↦ map[i].
pub fn pushforward(p: &[f64], map: &[usize], codomain: usize) -> Result<Vec<f64>> {
    check_dist(p)?;
    if map.len() != p.len() {
        return Err(Error::Dimension("map length != support size".into()));
    }
    if map.iter().any(|&j| j >= codomain) {
        return Err(Error::InvalidParam("map leaves the codomain".into()));
    }
    let mut out = vec![0.0; codomain];
    for (&pi, &j) in p.iter().zip(map) {
        out[j] += pi;
    }
    Ok(out)
}

pub fn is_bijection(map: &[usize], codomain: usize) -> bool {
    if map.len() != codomain {
        return false;
    }
    let mut seen = vec![false; codomain];
    for &j in map {
        if j >= codomain || seen[j] {
            return false;
        }
        seen[j] = true;
    }
    true
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapKl {
    pub before: f64,
    pub after: f64,
    pub bijective: bool,
}

/// KL between two distributions before and after pushing both through the
/// same deterministic map — invariant for bijections, non-increasing always.
pub fn kl_under_map(p: &[f64], q: &[f64], map: &[usize], codomain: usize) -> Result<MapKl> {
    let before = kl_discrete(p, q)?;
    let pm = pushforward(p, map, codomain)?;
    let qm = pushforward(q, map, codomain)?;
    let after = kl_discrete(&pm, &qm)?;
    Ok(MapKl { before, after, bijective: is_bijection(map, codomain) })
}

/// Adaptive Simpson quadrature to absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn rec<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        m: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, lm, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + rec(f, m, rm, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    if a == b {
        return 0.0;
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, m, b, fa, fm, fb, whole, tol, 48)
}

/// Divergences between a codec's coordinate law and the reference N(0, 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CodecKl {
    /// D(N(0,1) ‖ law); +∞ whenever the law's support misses reference mass.
    pub kl_ref_to_law: f64,
    /// D(law ‖ N(0,1)); finite for every continuous payload law here, +∞
    /// for discrete (mutually singular) laws.
    pub kl_law_to_ref: f64,
    /// Total variation distance.
    pub tv: f64,
}

impl CodecKl {
    /// The finite divergence direction, preferring the reference-first
    /// order; +∞ only for mutually singular (discrete) laws.
    pub fn kl_finite(&self) -> f64 {
        if self.kl_ref_to_law.is_finite() {
            self.kl_ref_to_law
        } else {
            self.kl_law_to_ref
        }
    }
}

const QUAD_RANGE: f64 = 8.0;
const QUAD_TOL: f64 = 1e-10;

/// Compute `CodecKl` for a coordinate law by exact case analysis plus
/// quadrature on [−8, 8] (the reference mass beyond is ~1e-15 and is added
/// to TV in closed form).
pub fn codec_kl(law: &CoordinateLaw) -> CodecKl {
    match law {
        CoordinateLaw::StdNormal => CodecKl { kl_ref_to_law: 0.0, kl_law_to_ref: 0.0, tv: 0.0 },
        CoordinateLaw::PointMasses(_) => {
            // atoms are singular against Lebesgue density: both directions
            // diverge and the measures share no mass at all
            CodecKl { kl_ref_to_law: f64::INFINITY, kl_law_to_ref: f64::INFINITY, tv: 1.0 }
        }
        law => {
            let mut edges: Vec<f64> = law
                .breakpoints()
                .into_iter()
                .filter(|v| v.abs() < QUAD_RANGE)
                .collect();
            edges.insert(0, -QUAD_RANGE);
            edges.push(QUAD_RANGE);

            let mut kl_law = 0.0;
            let mut tv = normal::cdf(-QUAD_RANGE); // ½ · reference tail mass
            let mut ref_mass_off_support = 2.0 * normal::cdf(-QUAD_RANGE);
            for w in edges.windows(2) {
                let (a, b) = (w[0], w[1]);
                let supported = law.density(0.5 * (a + b)) > 0.0;
                if supported {
                    kl_law += adaptive_simpson(
                        &|x| {
                            let f = law.density(x);
                            if f > 0.0 {
                                f * (f.ln() - normal::log_pdf(x))
                            } else {
                                0.0
                            }
                        },
                        a,
                        b,
                        QUAD_TOL,
                    );
                    tv += 0.5
                        * adaptive_simpson(&|x| (law.density(x) - normal::pdf(x)).abs(), a, b, QUAD_TOL);
                } else {
                    let mass = normal::cdf(b) - normal::cdf(a);
                    tv += 0.5 * mass;
                    ref_mass_off_support += mass;
                }
            }
            let kl_ref = if ref_mass_off_support > 1e-13 {
                f64::INFINITY
            } else {
                adaptive_simpson(
                    &|x| {
                        let f = law.density(x);
                        let phi = normal::pdf(x);
                        if f > 0.0 {
                            phi * (phi.ln().max(-750.0) - f.ln())
                        } else {
                            0.0
                        }
                    },
                    -QUAD_RANGE,
                    QUAD_RANGE,
                    QUAD_TOL,
                )
            };
            CodecKl { kl_ref_to_law: kl_ref, kl_law_to_ref: kl_law.max(0.0), tv: tv.min(1.0) }
        }
    }
}

/// Scenario score: distribution-preserving schemes are graded against the
/// 50% chance line, the rest against 100%, and the two branch means are
/// averaged.  Inputs are detection percentages in [0, 100].
pub fn normalized_overall(dp_detection_pct: &[f64], ndp_detection_pct: &[f64]) -> f64 {
    assert!(
        !dp_detection_pct.is_empty() && !ndp_detection_pct.is_empty(),
        "both scheme families must be represented"
    );
    let dp: f64 = dp_detection_pct.iter().map(|d| 1.0 - (d - 50.0).abs() / 50.0).sum::<f64>()
        / dp_detection_pct.len() as f64;
    let ndp: f64 = ndp_detection_pct.iter().map(|d| 1.0 - (d - 100.0).abs() / 100.0).sum::<f64>()
        / ndp_detection_pct.len() as f64;
    0.5 * (dp + ndp)
}
