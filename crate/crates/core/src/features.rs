//! Detector features computed on inverted-noise estimates.
//!
//! A sample's feature vector is ten numbers: five order/moment statistics of
//! the raw coordinates and the same five on an orthonormal DCT-II of each
//! channel (payloads that are i.i.d. per coordinate leave fingerprints in
//! one basis or the other).  For z ~ N(0, 1) i.i.d. the reference values are
//! mean 0, variance 1, skewness 0, excess kurtosis 0, IQR 2Φ⁻¹(¾) ≈ 1.349 —
//! in both bases, since the DCT is orthogonal.

pub const FEATURE_DIM: usize = 10;

pub const FEATURE_NAMES: [&str; FEATURE_DIM] = [
    "o_mean", "o_var", "o_skew", "o_kurt", "o_iqr", "t_mean", "t_var", "t_skew", "t_kurt", "t_iqr",
];

/// Interquartile range of the i.i.d. standard normal law.
pub const STD_NORMAL_IQR: f64 = 1.3489795003921634; // 2 Φ⁻¹(0.75)

/// Quantile with linear interpolation at rank p (n − 1).
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty() && (0.0..=1.0).contains(&p));
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
    }
}

/// [mean, unbiased variance, skewness, excess kurtosis, IQR].
/// Moment ratios use n-denominator central moments; a constant sample
/// reports zero skewness and kurtosis rather than NaN.
pub fn stat5(x: &[f64]) -> [f64; 5] {
    assert!(!x.is_empty());
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let mut m2 = 0.0;
    let mut m3 = 0.0;
    let mut m4 = 0.0;
    for &v in x {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    let var = if x.len() > 1 { m2 * n / (n - 1.0) } else { 0.0 };
    let (skew, kurt) = if m2 > 0.0 {
        (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
    } else {
        (0.0, 0.0)
    };
    let mut sorted = x.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
    [mean, var, skew, kurt, iqr]
}

/// Orthonormal DCT-II (direct O(N²) evaluation — vectors here are short).
/// X_k = c_k Σ_n x_n cos(π (2n+1) k / (2N)), c_0 = √(1/N), c_k = √(2/N).
pub fn dct2(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    assert!(n > 0);
    let nf = n as f64;
    let c0 = (1.0 / nf).sqrt();
    let ck = (2.0 / nf).sqrt();
    (0..n)
        .map(|k| {
            let scale = if k == 0 { c0 } else { ck };
            let acc: f64 = x
                .iter()
                .enumerate()
                .map(|(i, &v)| v * (std::f64::consts::PI * (2.0 * i as f64 + 1.0) * k as f64 / (2.0 * nf)).cos())
                .sum();
            scale * acc
        })
        .collect()
}

/// Ten-dimensional feature vector: stat5 of the raw coordinates followed by
/// stat5 of the per-channel DCT coefficients.
pub fn extract_features(x: &[f64], channels: usize) -> Vec<f64> {
    assert!(channels > 0 && x.len() % channels == 0, "bad channel split");
    let w = x.len() / channels;
    let mut transformed = Vec::with_capacity(x.len());
    for c in 0..channels {
        transformed.extend(dct2(&x[c * w..(c + 1) * w]));
    }
    let mut f = Vec::with_capacity(FEATURE_DIM);
    f.extend_from_slice(&stat5(x));
    f.extend_from_slice(&stat5(&transformed));
    f
}
