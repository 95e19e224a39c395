//! Haar wavelet-packet band energies.
//!
//! Leaves come out in natural filter-bank order: node `i` at one level splits
//! into `2i` (lowpass) and `2i + 1` (highpass) at the next.

use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;

use crate::error::{Error, Result};

pub const MAX_DEPTH: u32 = 6;

fn haar_split(x: &[Complex64]) -> (Vec<Complex64>, Vec<Complex64>) {
    let half = x.len().div_ceil(2);
    let zero = Complex64::new(0.0, 0.0);
    let mut low = Vec::with_capacity(half);
    let mut high = Vec::with_capacity(half);
    for k in 0..half {
        let a = x[2 * k];
        let b = x.get(2 * k + 1).copied().unwrap_or(zero);
        low.push((a + b) * FRAC_1_SQRT_2);
        high.push((a - b) * FRAC_1_SQRT_2);
    }
    (low, high)
}

fn check(len: usize, depth: u32) -> Result<()> {
    if !(1..=MAX_DEPTH).contains(&depth) {
        return Err(Error::Parameter(format!("WPD depth must lie in [1, {MAX_DEPTH}], got {depth}")));
    }
    if len < 1 << depth {
        return Err(Error::Parameter(format!(
            "WPD depth {depth} needs >= {} samples, got {len}",
            1 << depth
        )));
    }
    Ok(())
}

/// Unnormalized leaf energies; they sum to the input energy.
pub fn wpd_leaf_energies(x: &[Complex64], depth: u32) -> Result<Vec<f64>> {
    check(x.len(), depth)?;
    let mut nodes = vec![x.to_vec()];
    for _ in 0..depth {
        nodes = nodes
            .iter()
            .flat_map(|node| {
                let (lo, hi) = haar_split(node);
                [lo, hi]
            })
            .collect();
    }
    Ok(nodes
        .iter()
        .map(|node| node.iter().map(|z| z.norm_sqr()).sum())
        .collect())
}

/// Leaf energies normalized to sum to one.
pub fn wpd_energies(x: &[Complex64], depth: u32) -> Result<Vec<f64>> {
    let raw = wpd_leaf_energies(x, depth)?;
    let total: f64 = raw.iter().sum();
    if total <= 0.0 {
        return Err(Error::Degenerate("wavelet packet input has zero energy".into()));
    }
    Ok(raw.into_iter().map(|e| e / total).collect())
}
