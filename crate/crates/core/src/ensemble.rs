//! Ensemble classifier: bagged Fisher linear discriminants over random
//! feature subspaces, with out-of-bag committee sizing.
//!
//! Features are standardized by per-feature median/MAD computed on the
//! pooled training set (robust to the heavy-tailed statistics some payloads
//! induce).  Each base learner draws a per-class bootstrap and a random
//! subspace, solves the ridge-stabilized FLD direction
//! w = (S_w + λI)⁻¹(μ_stego − μ_cover), and sets its threshold to the mean
//! of all balanced-error-minimizing split points — averaging keeps the
//! learner antisymmetric under a class swap instead of inheriting an
//! arbitrary tie-break.  The committee size is picked from a fixed ladder by
//! out-of-bag balanced error, and prediction is a strict majority vote.

use crate::error::{Error, Result};
use crate::io::Kv;
use crate::par;
use crate::seeds;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

const RIDGE_SCALE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct FldHyper {
    pub subspace_dim: usize,
    /// Candidate committee sizes, ascending and odd.
    pub sizes: Vec<usize>,
}

impl Default for FldHyper {
    fn default() -> Self {
        FldHyper { subspace_dim: 5, sizes: vec![11, 31, 51, 101] }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FldLearner {
    pub features: Vec<usize>,
    pub w: Vec<f64>,
    pub bias: f64,
}

impl FldLearner {
    fn project(&self, row: &[f64]) -> f64 {
        self.features.iter().zip(&self.w).map(|(&j, &wj)| row[j] * wj).sum()
    }

    /// true = stego vote.
    fn vote(&self, row: &[f64]) -> bool {
        self.project(row) > self.bias
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detector {
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
    pub learners: Vec<FldLearner>,
    /// Number of leading learners that actually vote.
    pub committee: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub n_cover: usize,
    pub n_stego: usize,
    /// False-alarm rate: covers flagged as stego.
    pub p_fa: f64,
    /// Missed-detection rate: stegos passed as cover.
    pub p_md: f64,
}

impl EvalReport {
    /// Signed detector advantage (1 − p_md) − p_fa: 0 for a coin flip,
    /// 1 for a perfect detector, negative if votes anti-correlate.
    pub fn advantage(&self) -> f64 {
        (1.0 - self.p_md) - self.p_fa
    }

    pub fn balanced_accuracy(&self) -> f64 {
        1.0 - 0.5 * (self.p_fa + self.p_md)
    }

    pub fn to_kv(&self) -> Kv {
        let mut kv = Kv::new("eval");
        kv.push_u64("n_cover", self.n_cover as u64);
        kv.push_u64("n_stego", self.n_stego as u64);
        kv.push_f64("p_fa", self.p_fa);
        kv.push_f64("p_md", self.p_md);
        kv.push_f64("advantage", self.advantage());
        kv.push_f64("balanced_accuracy", self.balanced_accuracy());
        kv
    }
}

fn median_inplace(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn robust_center_scale(rows: &[&[f64]], dim: usize) -> (Vec<f64>, Vec<f64>) {
    let mut center = Vec::with_capacity(dim);
    let mut scale = Vec::with_capacity(dim);
    let mut buf: Vec<f64> = Vec::with_capacity(rows.len());
    for j in 0..dim {
        buf.clear();
        buf.extend(rows.iter().map(|r| r[j]));
        let med = median_inplace(&mut buf);
        for v in buf.iter_mut() {
            *v = (*v - med).abs();
        }
        let mad = median_inplace(&mut buf);
        center.push(med);
        scale.push(if mad > 0.0 { mad } else { 1.0 });
    }
    (center, scale)
}

/// All balanced-error-minimizing thresholds over the projected sample,
/// averaged.  Candidates sit between consecutive distinct projections plus
/// one sentinel on each side.
fn balanced_threshold(proj_cover: &mut [f64], proj_stego: &mut [f64]) -> f64 {
    #[derive(Clone, Copy)]
    struct P {
        v: f64,
        stego: bool,
    }
    let mut all: Vec<P> = proj_cover
        .iter()
        .map(|&v| P { v, stego: false })
        .chain(proj_stego.iter().map(|&v| P { v, stego: true }))
        .collect();
    all.sort_by(|a, b| a.v.partial_cmp(&b.v).unwrap());
    let (nc, ns) = (proj_cover.len() as f64, proj_stego.len() as f64);

    // walking below→above: err(τ) = ½ (#stego ≤ τ / ns + #cover > τ / nc)
    let mut best = f64::INFINITY;
    let mut sum = 0.0;
    let mut count = 0usize;
    let mut stego_below = 0.0;
    let mut cover_below = 0.0;
    let span = (all.last().unwrap().v - all[0].v).max(1.0);
    let consider = |tau: f64, err: f64, best: &mut f64, sum: &mut f64, count: &mut usize| {
        if err < *best - 1e-12 {
            *best = err;
            *sum = tau;
            *count = 1;
        } else if (err - *best).abs() <= 1e-12 {
            *sum += tau;
            *count += 1;
        }
    };
    // sentinel below everything
    consider(all[0].v - span, 0.5 * (0.0 + 1.0), &mut best, &mut sum, &mut count);
    let mut i = 0usize;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].v == all[i].v {
            if all[j].stego {
                stego_below += 1.0;
            } else {
                cover_below += 1.0;
            }
            j += 1;
        }
        let tau = if j < all.len() {
            0.5 * (all[i].v + all[j].v)
        } else {
            all[j - 1].v + span // sentinel above everything
        };
        let err = 0.5 * (stego_below / ns + (nc - cover_below) / nc);
        consider(tau, err, &mut best, &mut sum, &mut count);
        i = j;
    }
    sum / count as f64
}

struct TrainedLearner {
    learner: FldLearner,
    oob_cover: Vec<bool>,
    oob_stego: Vec<bool>,
}

fn train_one(
    idx: usize,
    cover: &[Vec<f64>],
    stego: &[Vec<f64>],
    center: &[f64],
    scale: &[f64],
    hyper: &FldHyper,
    seed: u64,
) -> Result<TrainedLearner> {
    let dim = center.len();
    let d = hyper.subspace_dim;
    let mut rng = seeds::rng(seeds::derive(seed, &[0x1ea7, idx as u64]));

    // random subspace without replacement
    let mut pool: Vec<usize> = (0..dim).collect();
    let mut features = Vec::with_capacity(d);
    for k in 0..d {
        let pick = rng.gen_range(k..dim);
        pool.swap(k, pick);
        features.push(pool[k]);
    }
    features.sort_unstable();

    let std_row = |row: &[f64], out: &mut Vec<f64>| {
        out.clear();
        out.extend(features.iter().map(|&j| (row[j] - center[j]) / scale[j]));
    };

    // per-class bootstrap with OOB tracking
    let mut boot = |rows: &[Vec<f64>]| -> (Vec<Vec<f64>>, Vec<bool>) {
        let n = rows.len();
        let mut seen = vec![false; n];
        let mut out = Vec::with_capacity(n);
        let mut tmp = Vec::with_capacity(d);
        for _ in 0..n {
            let r = rng.gen_range(0..n);
            seen[r] = true;
            std_row(&rows[r], &mut tmp);
            out.push(tmp.clone());
        }
        (out, seen.into_iter().map(|s| !s).collect())
    };
    let (bc, oob_cover) = boot(cover);
    let (bs, oob_stego) = boot(stego);

    let mean_of = |rows: &[Vec<f64>]| -> Vec<f64> {
        let mut m = vec![0.0; d];
        for r in rows {
            for (mj, &v) in m.iter_mut().zip(r) {
                *mj += v;
            }
        }
        let n = rows.len() as f64;
        m.iter_mut().for_each(|v| *v /= n);
        m
    };
    let mu_c = mean_of(&bc);
    let mu_s = mean_of(&bs);

    let mut sw = DMatrix::<f64>::zeros(d, d);
    for (rows, mu) in [(&bc, &mu_c), (&bs, &mu_s)] {
        for r in rows.iter() {
            for a in 0..d {
                let da = r[a] - mu[a];
                for b in a..d {
                    let v = da * (r[b] - mu[b]);
                    sw[(a, b)] += v;
                    if a != b {
                        sw[(b, a)] += v;
                    }
                }
            }
        }
    }
    let lambda = RIDGE_SCALE * sw.trace() / d as f64 + 1e-12;
    for a in 0..d {
        sw[(a, a)] += lambda;
    }
    let diff = DVector::from_iterator(d, mu_s.iter().zip(&mu_c).map(|(s, c)| s - c));
    let w = sw
        .lu()
        .solve(&diff)
        .ok_or_else(|| Error::Singular(format!("learner {idx}: within-class scatter not invertible")))?;
    let w: Vec<f64> = w.iter().copied().collect();

    let project = |row: &[f64]| -> f64 { w.iter().zip(row).map(|(a, b)| a * b).sum() };
    let mut pc: Vec<f64> = bc.iter().map(|r| project(r)).collect();
    let mut ps: Vec<f64> = bs.iter().map(|r| project(r)).collect();
    let bias = balanced_threshold(&mut pc, &mut ps);

    Ok(TrainedLearner { learner: FldLearner { features, w, bias }, oob_cover, oob_stego })
}

impl Detector {
    fn standardize(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.center.iter().zip(&self.scale))
            .map(|(&v, (&c, &s))| (v - c) / s)
            .collect()
    }

    /// true = flagged as stego.
    pub fn predict(&self, features: &[f64]) -> bool {
        let row = self.standardize(features);
        let votes = self.learners[..self.committee].iter().filter(|l| l.vote(&row)).count();
        votes >= self.committee / 2 + 1
    }

    pub fn to_kv(&self) -> Kv {
        let mut kv = Kv::new("detector");
        kv.push_u64("dim", self.center.len() as u64);
        kv.push_u64("learners", self.learners.len() as u64);
        kv.push_u64("committee", self.committee as u64);
        kv.push_vec("center", &self.center);
        kv.push_vec("scale", &self.scale);
        for (i, l) in self.learners.iter().enumerate() {
            kv.push_usize_vec(&format!("f{i}"), &l.features);
            kv.push_vec(&format!("w{i}"), &l.w);
            kv.push_f64(&format!("b{i}"), l.bias);
        }
        kv
    }

    pub fn from_kv(kv: &Kv) -> Result<Detector> {
        let n = kv.get_usize("learners")?;
        let mut learners = Vec::with_capacity(n);
        for i in 0..n {
            learners.push(FldLearner {
                features: kv.get_usize_vec(&format!("f{i}"))?,
                w: kv.get_vec(&format!("w{i}"))?,
                bias: kv.get_f64(&format!("b{i}"))?,
            });
        }
        let det = Detector {
            center: kv.get_vec("center")?,
            scale: kv.get_vec("scale")?,
            learners,
            committee: kv.get_usize("committee")?,
        };
        if det.committee == 0 || det.committee > det.learners.len() {
            return Err(Error::Format("committee size out of range".into()));
        }
        Ok(det)
    }
}

fn check_rows(rows: &[Vec<f64>], dim: usize, what: &str) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::InvalidParam(format!("no {what} rows")));
    }
    if rows.iter().any(|r| r.len() != dim) {
        return Err(Error::Dimension(format!("{what} rows disagree on feature count")));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParam(format!("non-finite {what} feature")));
    }
    Ok(())
}

/// Train the committee; `seed` fixes bootstraps and subspaces, and learners
/// are derived independently by index so the result does not depend on
/// thread count.
pub fn train(cover: &[Vec<f64>], stego: &[Vec<f64>], hyper: &FldHyper, seed: u64) -> Result<Detector> {
    let dim = cover.first().map_or(0, Vec::len);
    check_rows(cover, dim, "cover")?;
    check_rows(stego, dim, "stego")?;
    if hyper.subspace_dim == 0 || hyper.subspace_dim > dim {
        return Err(Error::InvalidParam(format!("subspace dim {} outside 1..={dim}", hyper.subspace_dim)));
    }
    if hyper.sizes.is_empty() || hyper.sizes.iter().any(|&s| s == 0 || s % 2 == 0) {
        return Err(Error::InvalidParam("committee sizes must be odd and positive".into()));
    }
    let mut sizes = hyper.sizes.clone();
    sizes.sort_unstable();
    let max_size = *sizes.last().unwrap();

    let pooled: Vec<&[f64]> = cover.iter().chain(stego.iter()).map(Vec::as_slice).collect();
    let (center, scale) = robust_center_scale(&pooled, dim);

    let trained: Vec<TrainedLearner> = par::map_indexed(max_size, |i| {
        train_one(i, cover, stego, &center, &scale, hyper, seed)
    })
    .into_iter()
    .collect::<Result<_>>()?;

    // out-of-bag balanced error per candidate committee size
    let committee = {
        let oob_error = |l_max: usize| -> f64 {
            let tally = |rows: &[Vec<f64>], is_stego: bool| -> (usize, usize) {
                let mut used = 0usize;
                let mut wrong = 0usize;
                for (r, row) in rows.iter().enumerate() {
                    let srow: Vec<f64> = row
                        .iter()
                        .zip(center.iter().zip(&scale))
                        .map(|(&v, (&c, &s))| (v - c) / s)
                        .collect();
                    let mut votes = 0usize;
                    let mut total = 0usize;
                    for t in trained.iter().take(l_max) {
                        let oob = if is_stego { t.oob_stego[r] } else { t.oob_cover[r] };
                        if oob {
                            total += 1;
                            if t.learner.vote(&srow) {
                                votes += 1;
                            }
                        }
                    }
                    if total == 0 {
                        continue;
                    }
                    used += 1;
                    let said_stego = 2 * votes > total;
                    if said_stego != is_stego {
                        wrong += 1;
                    }
                }
                (used, wrong)
            };
            let (uc, wc) = tally(cover, false);
            let (us, ws) = tally(stego, true);
            if uc == 0 || us == 0 {
                return 0.5;
            }
            0.5 * (wc as f64 / uc as f64 + ws as f64 / us as f64)
        };
        let mut best = sizes[0];
        let mut best_err = f64::INFINITY;
        for &l in &sizes {
            let e = oob_error(l);
            if e < best_err - 1e-12 {
                best_err = e;
                best = l;
            }
        }
        best
    };

    Ok(Detector {
        center,
        scale,
        learners: trained.into_iter().take(committee).map(|t| t.learner).collect(),
        committee,
    })
}

/// Evaluate on held-out features.
pub fn evaluate(det: &Detector, cover: &[Vec<f64>], stego: &[Vec<f64>]) -> EvalReport {
    let fa = cover.iter().filter(|r| det.predict(r)).count();
    let md = stego.iter().filter(|r| !det.predict(r)).count();
    EvalReport {
        n_cover: cover.len(),
        n_stego: stego.len(),
        p_fa: fa as f64 / cover.len().max(1) as f64,
        p_md: md as f64 / stego.len().max(1) as f64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn blob(n: usize, dim: usize, shift: &[f64], seed: u64) -> Vec<Vec<f64>> {
        let mut rng = seeds::rng(seed);
        (0..n)
            .map(|_| {
                (0..dim)
                    .map(|j| rng.sample::<f64, _>(StandardNormal) + shift.get(j).copied().unwrap_or(0.0))
                    .collect()
            })
            .collect()
    }

    #[test]
    fn separable_classes_are_learned() {
        let dim = 10;
        // Signal lives in 3 of 10 features; random 5-feature subspaces miss
        // all three ~8% of the time, so the committee ceiling sits below the
        // single-learner Bayes rate.  The shift is sized so a majority vote
        // still clears 0.9 comfortably.
        let shift = vec![2.0, -2.0, 0.0, 0.0, 1.5, 0.0, 0.0, 0.0, 0.0, 0.0];
        let cover = blob(300, dim, &vec![0.0; dim], 100);
        let stego = blob(300, dim, &shift, 101);
        let det = train(&cover, &stego, &FldHyper::default(), 7).unwrap();
        let r = evaluate(&det, &blob(300, dim, &vec![0.0; dim], 102), &blob(300, dim, &shift, 103));
        assert!(r.balanced_accuracy() > 0.9, "balanced accuracy {}", r.balanced_accuracy());
        assert!(r.advantage() > 0.8, "advantage {}", r.advantage());
        assert!(FldHyper::default().sizes.contains(&det.committee));
    }

    #[test]
    fn identical_classes_give_no_advantage() {
        let dim = 10;
        let cover = blob(400, dim, &vec![0.0; dim], 200);
        let stego = blob(400, dim, &vec![0.0; dim], 201);
        let det = train(&cover, &stego, &FldHyper::default(), 8).unwrap();
        let r = evaluate(&det, &blob(500, dim, &vec![0.0; dim], 202), &blob(500, dim, &vec![0.0; dim], 203));
        assert!(r.advantage().abs() < 0.15, "null advantage {}", r.advantage());
    }

    /// Swapping the class roles at train time must (up to threshold ties)
    /// flip every prediction: the learner pipeline has no hidden preference
    /// for the first class.
    #[test]
    fn class_swap_flips_predictions() {
        let dim = 10;
        let shift = vec![0.8; 10];
        let a = blob(250, dim, &vec![0.0; dim], 300);
        let b = blob(250, dim, &shift, 301);
        let d1 = train(&a, &b, &FldHyper::default(), 9).unwrap();
        let d2 = train(&b, &a, &FldHyper::default(), 9).unwrap();
        // The swap is not exactly mirror-image: bootstrap draws come off one
        // stream, so the first-drawn indices land on whichever class is
        // "cover".  Near-boundary probes can therefore disagree; the bulk
        // must still flip.
        let probe = blob(400, dim, &vec![0.4; dim], 302);
        let flips = probe.iter().filter(|r| d1.predict(r) != d2.predict(r)).count();
        assert!(flips as f64 / probe.len() as f64 > 0.9, "only {flips}/400 flipped");
    }

    #[test]
    fn training_is_deterministic_in_the_seed() {
        let cover = blob(80, 10, &vec![0.0; 10], 400);
        let stego = blob(80, 10, &vec![1.0; 10], 401);
        let d1 = train(&cover, &stego, &FldHyper::default(), 42).unwrap();
        let d2 = train(&cover, &stego, &FldHyper::default(), 42).unwrap();
        assert_eq!(d1.to_kv().to_text(), d2.to_kv().to_text());
        let d3 = train(&cover, &stego, &FldHyper::default(), 43).unwrap();
        assert_ne!(d1.to_kv().to_text(), d3.to_kv().to_text());
    }

    #[test]
    fn detector_roundtrips_through_kv() {
        let cover = blob(60, 10, &vec![0.0; 10], 500);
        let stego = blob(60, 10, &vec![0.7; 10], 501);
        let det = train(&cover, &stego, &FldHyper::default(), 5).unwrap();
        let back = Detector::from_kv(&crate::io::Kv::parse(&det.to_kv().to_text()).unwrap()).unwrap();
        assert_eq!(back, det);
    }

    #[test]
    fn constant_features_do_not_poison_training() {
        let mut cover = blob(120, 10, &vec![0.0; 10], 600);
        let mut stego = blob(120, 10, &vec![1.2; 10], 601);
        for r in cover.iter_mut().chain(stego.iter_mut()) {
            r[3] = 2.0; // zero-MAD column
            r[7] = -1.0;
        }
        let det = train(&cover, &stego, &FldHyper::default(), 6).unwrap();
        let r = evaluate(&det, &cover, &stego);
        assert!(r.balanced_accuracy() > 0.8);
        assert!(det.to_kv().to_text().len() > 0);
    }

    #[test]
    fn threshold_balances_classes() {
        // cover at {0, 1}, stego at {2, 3}: unique optimum between 1 and 2
        let mut pc = vec![0.0, 1.0];
        let mut ps = vec![2.0, 3.0];
        assert_eq!(balanced_threshold(&mut pc, &mut ps), 1.5);
        // overlapping with two optima at 0.5 and 2.5 → mean 1.5
        let mut pc = vec![0.0, 2.0];
        let mut ps = vec![1.0, 3.0];
        assert!((balanced_threshold(&mut pc, &mut ps) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn bad_inputs_are_rejected() {
        let rows = blob(10, 10, &vec![0.0; 10], 700);
        assert!(train(&[], &rows, &FldHyper::default(), 0).is_err());
        let short = vec![vec![0.0; 4]];
        assert!(train(&rows, &short, &FldHyper::default(), 0).is_err());
        let bad_hyper = FldHyper { subspace_dim: 5, sizes: vec![10] };
        assert!(train(&rows, &rows, &bad_hyper, 0).is_err());
        let too_wide = FldHyper { subspace_dim: 11, sizes: vec![11] };
        assert!(train(&rows, &rows, &too_wide, 0).is_err());
    }
}
