//! Exact Poisson-binomial machinery: the distribution of a column degree
//! (a sum of independent, non-identical Bernoulli indicators) and
//! expectations of functions of it. This is the kernel behind every exact
//! constant in the crate.

use crate::{Error, Result};

/// Exact probability mass of a sum of `n` independent Bernoulli terms.
#[derive(Debug, Clone, PartialEq)]
pub struct CountDistribution {
    pub pmf: Vec<f64>,
    pub n: usize,
}

/// Exact PMF by iterated convolution over the terms in ascending index
/// order, O(n^2). The fixed order keeps results bit-identical across runs.
pub fn poisson_binomial(probs: &[f64]) -> Result<CountDistribution> {
    for p in probs {
        if !(0.0..=1.0).contains(p) {
            return Err(Error::InvalidSpec(vec![format!(
                "probability out of range: {p}"
            )]));
        }
    }
    let n = probs.len();
    let mut pmf = vec![0.0; n + 1];
    pmf[0] = 1.0;
    for (t, &p) in probs.iter().enumerate() {
        for m in (0..=t).rev() {
            let shift = pmf[m] * p;
            pmf[m] *= 1.0 - p;
            pmf[m + 1] += shift;
        }
    }
    Ok(CountDistribution { pmf, n })
}

/// Sum_m pmf[m] f(m).
pub fn expect_count_fn(dist: &CountDistribution, f: impl Fn(usize) -> f64) -> f64 {
    dist.pmf.iter().enumerate().map(|(m, p)| p * f(m)).sum()
}

impl CountDistribution {
    pub fn mean(&self) -> f64 {
        expect_count_fn(self, |m| m as f64)
    }
}

/// Expectation of a functional of one independent-edge column that depends
/// only on the edge indicators of a few marked agents and the column degree.
///
/// Enumerates the 2^|marked| indicator patterns of the marked agents and
/// convolves the rest exactly. `f` receives the pattern (aligned with
/// `marked`) and the total degree.
pub fn column_expect(
    col_probs: &[f64],
    marked: &[usize],
    f: impl Fn(&[bool], usize) -> f64,
) -> Result<f64> {
    debug_assert!(marked.iter().all(|&i| i < col_probs.len()));
    let rest: Vec<f64> = col_probs
        .iter()
        .enumerate()
        .filter(|(i, _)| !marked.contains(i))
        .map(|(_, &p)| p)
        .collect();
    let dist = poisson_binomial(&rest)?;
    let mut total = 0.0;
    let mut pattern = vec![false; marked.len()];
    for mask in 0u32..(1 << marked.len()) {
        let mut weight = 1.0;
        let mut base = 0usize;
        for (b, &agent) in marked.iter().enumerate() {
            let present = mask >> b & 1 == 1;
            pattern[b] = present;
            let p = col_probs[agent];
            weight *= if present { p } else { 1.0 - p };
            base += present as usize;
        }
        if weight == 0.0 {
            continue;
        }
        total += weight * expect_count_fn(&dist, |m| f(&pattern, base + m));
    }
    Ok(total)
}
