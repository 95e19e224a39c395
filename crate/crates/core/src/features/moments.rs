use std::fmt;

/// Population moments of a real sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
}

/// Returned when the variance is zero: only the first two moments exist.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegenerateMoments {
    pub mean: f64,
    pub variance: f64,
}

impl fmt::Display for DegenerateMoments {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "zero variance around mean {}", self.mean)
    }
}

impl std::error::Error for DegenerateMoments {}

impl From<DegenerateMoments> for crate::Error {
    fn from(d: DegenerateMoments) -> Self {
        crate::Error::Degenerate(d.to_string())
    }
}

pub fn mean_variance(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var)
}

/// Mean, variance, skewness and excess kurtosis (Gaussian → 0).
///
/// A variance that is zero, or indistinguishable from rounding noise on the
/// mean, is reported as degenerate.
pub fn moments(x: &[f64]) -> Result<Moments, crate::Error> {
    if x.len() < 4 {
        return Err(crate::Error::Size(format!("moments need >= 4 samples, got {}", x.len())));
    }
    moments_of(x).map_err(Into::into)
}

pub(crate) fn moments_of(x: &[f64]) -> Result<Moments, DegenerateMoments> {
    let (mean, variance) = mean_variance(x);
    if variance <= (mean.abs() * 1e-12).powi(2) || variance == 0.0 {
        return Err(DegenerateMoments { mean, variance });
    }
    let n = x.len() as f64;
    let (m3, m4) = x.iter().fold((0.0, 0.0), |(a, b), v| {
        let d = v - mean;
        let d2 = d * d;
        (a + d2 * d, b + d2 * d2)
    });
    let sd = variance.sqrt();
    Ok(Moments {
        mean,
        variance,
        skewness: m3 / n / (sd * variance),
        excess_kurtosis: m4 / n / (variance * variance) - 3.0,
    })
}

/// Skewness and kurtosis with degenerate samples mapped to (0, 0).
pub(crate) fn shape_or_zero(x: &[f64]) -> (f64, f64, f64, f64) {
    match moments_of(x) {
        Ok(m) => (m.mean, m.variance, m.skewness, m.excess_kurtosis),
        Err(d) => (d.mean, d.variance, 0.0, 0.0),
    }
}
