use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean and population standard deviation.
pub(crate) fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Skewness and excess kurtosis of the standardized values, or `None` when
/// the spread is zero.
pub(crate) fn shape(xs: &[f64]) -> Option<(f64, f64)> {
    if xs.len() < 3 {
        return None;
    }
    let (mean, sd) = mean_sd(xs);
    if !(sd > 0.0) || !sd.is_finite() {
        return None;
    }
    let n = xs.len() as f64;
    let (mut m3, mut m4) = (0.0, 0.0);
    for x in xs {
        let z = (x - mean) / sd;
        m3 += z * z * z;
        m4 += z * z * z * z;
    }
    Some((m3 / n, m4 / n - 3.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalityCheck {
    pub skew: f64,
    pub kurtosis: f64,
    pub pass: bool,
}

pub const MIN_NORMALITY_SAMPLE: usize = 100;
pub const SKEW_LIMIT: f64 = 0.35;
pub const KURTOSIS_LIMIT: f64 = 0.8;

/// Skewness and excess kurtosis of `(v - mean) / sd`; passes when
/// `|skew| < 0.35` and `|kurtosis| < 0.8`.
pub fn normality_check(values: &[f64]) -> Result<NormalityCheck> {
    if values.len() < MIN_NORMALITY_SAMPLE {
        return Err(Error::Config(format!(
            "normality check needs at least {MIN_NORMALITY_SAMPLE} values, got {}",
            values.len()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Degenerate("non-finite value in normality sample".into()));
    }
    let (skew, kurtosis) = shape(values).ok_or_else(|| Error::Degenerate("zero standard deviation".into()))?;
    Ok(NormalityCheck {
        skew,
        kurtosis,
        pass: skew.abs() < SKEW_LIMIT && kurtosis.abs() < KURTOSIS_LIMIT,
    })
}

/// 64-bit FNV-1a.
pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
