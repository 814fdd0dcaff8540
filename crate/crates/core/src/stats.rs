//! Statistical test helpers used by the harness and the test suite:
//! Kolmogorov–Smirnov tests and tie-corrected Spearman rank correlation.

use crate::error::{Error, Result};

/// Complementary CDF of the Kolmogorov distribution,
/// Q(λ) = 2 Σ_{k≥1} (−1)^{k−1} exp(−2k²λ²).
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.18 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let term = (-2.0 * (k as f64).powi(2) * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-14 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample K-S test against a CDF given as a closure. Returns (D, p).
pub fn ks_test<F: Fn(f64) -> f64>(xs: &[f64], cdf: F) -> Result<(f64, f64)> {
    if xs.len() < 8 {
        return Err(Error::Length("K-S test needs at least 8 observations".into()));
    }
    let mut sorted = xs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("non-finite observation"));
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        let lo = i as f64 / n;
        let hi = (i + 1) as f64 / n;
        d = d.max((f - lo).abs()).max((hi - f).abs());
    }
    // Stephens' small-sample correction to the asymptotic distribution.
    let sq = n.sqrt();
    let p = kolmogorov_q(d * (sq + 0.12 + 0.11 / sq));
    Ok((d, p))
}

/// Two-sample K-S test. Returns (D, p).
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.len() < 8 || b.len() < 8 {
        return Err(Error::Length("K-S test needs at least 8 observations per sample".into()));
    }
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(|x, y| x.partial_cmp(y).expect("non-finite observation"));
    sb.sort_by(|x, y| x.partial_cmp(y).expect("non-finite observation"));
    let (na, nb) = (sa.len(), sb.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < na && j < nb {
        let xa = sa[i];
        let xb = sb[j];
        if xa <= xb {
            i += 1;
        }
        if xb <= xa {
            j += 1;
        }
        let fa = i as f64 / na as f64;
        let fb = j as f64 / nb as f64;
        d = d.max((fa - fb).abs());
    }
    let ne = (na as f64 * nb as f64) / (na as f64 + nb as f64);
    let sq = ne.sqrt();
    let p = kolmogorov_q(d * (sq + 0.12 + 0.11 / sq));
    Ok((d, p))
}

/// Average ranks (1-based), ties share the mean rank of their run.
fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).expect("non-finite value"));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            ranks[idx[k]] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Tie-corrected Spearman rank correlation.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Length(format!("spearman: {} vs {} values", a.len(), b.len())));
    }
    if a.len() < 3 {
        return Err(Error::Length("spearman needs at least 3 pairs".into()));
    }
    let ra = average_ranks(a);
    let rb = average_ranks(b);
    let n = a.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for k in 0..a.len() {
        let da = ra[k] - mean;
        let db = rb[k] - mean;
        cov += da * db;
        va += da * da;
        vb += db * db;
    }
    if va == 0.0 || vb == 0.0 {
        return Err(Error::InvalidParam("spearman: constant input".into()));
    }
    Ok(cov / (va * vb).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::normal;
    use rand::Rng;

    #[test]
    fn ks_accepts_true_null_and_rejects_shifted() {
        let mut rng = crate::seeds::rng(7);
        let xs: Vec<f64> = (0..4000).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
        let (_, p) = ks_test(&xs, normal::cdf).unwrap();
        assert!(p > 0.01, "true null rejected: p = {p}");
        let shifted: Vec<f64> = xs.iter().map(|x| x + 0.2).collect();
        let (_, p_bad) = ks_test(&shifted, normal::cdf).unwrap();
        assert!(p_bad < 1e-6, "shifted sample accepted: p = {p_bad}");
    }

    #[test]
    fn ks_two_sample_behaves() {
        let mut rng = crate::seeds::rng(8);
        let a: Vec<f64> = (0..3000).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
        let b: Vec<f64> = (0..3000).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
        let (_, p) = ks_two_sample(&a, &b).unwrap();
        assert!(p > 0.01, "same-law samples rejected: p = {p}");
        let c: Vec<f64> = a.iter().map(|x| 1.3 * x).collect();
        let (_, p_bad) = ks_two_sample(&a, &c).unwrap();
        assert!(p_bad < 1e-4, "scaled sample accepted: p = {p_bad}");
    }

    #[test]
    fn kolmogorov_q_reference_points() {
        // Q(0.8276) ≈ 0.5 (median of the Kolmogorov distribution)
        assert!((kolmogorov_q(0.82757) - 0.5).abs() < 1e-3);
        assert!(kolmogorov_q(2.0) < 7e-4);
        assert_eq!(kolmogorov_q(0.0), 1.0);
    }

    #[test]
    fn spearman_basics() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        let up = [2.0, 4.0, 5.0, 7.0, 11.0];
        let down = [5.0, 4.0, 3.0, 2.0, 1.0];
        assert_eq!(spearman(&a, &up).unwrap(), 1.0);
        assert_eq!(spearman(&a, &down).unwrap(), -1.0);
        // hand-checked tie correction: b has a tied pair
        let b = [1.0, 1.0, 2.0, 3.0, 4.0];
        let rho = spearman(&a, &b).unwrap();
        assert!((rho - 0.974_679_434_480_896_2).abs() < 1e-12, "rho = {rho}");
        assert!(spearman(&a, &[1.0, 1.0, 1.0, 1.0, 1.0]).is_err());
    }
}
