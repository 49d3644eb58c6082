//! Effective sample size via Geyer's initial monotone positive sequence.

use nalgebra::DMatrix;
use rustfft::{num_complex::Complex, FftPlanner};

/// Normalized autocorrelations ρ̂_0..ρ̂_{N−1}, or `None` for a constant chain.
pub fn autocorrelation(chain: &[f64]) -> Option<Vec<f64>> {
    let n = chain.len();
    let mean = chain.iter().sum::<f64>() / n as f64;
    let size = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = chain
        .iter()
        .map(|&x| Complex::new(x - mean, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(size)
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(size).process(&mut buf);
    for c in buf.iter_mut() {
        *c = Complex::new(c.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(size).process(&mut buf);
    let c0 = buf[0].re;
    if !(c0 > 1e-300 * n as f64) {
        return None;
    }
    Some(buf[..n].iter().map(|c| c.re / c0).collect())
}

/// `N / (1 + 2Σρ̂_k)` with pairwise-monotone truncation. A constant chain gives 0.
pub fn effective_sample_size(chain: &[f64]) -> f64 {
    let n = chain.len();
    if n < 4 {
        return 0.0;
    }
    let Some(rho) = autocorrelation(chain) else {
        return 0.0;
    };
    let mut sum = 0.0;
    let mut prev = f64::INFINITY;
    let mut m = 0;
    while 2 * m + 1 < n {
        let mut pair = rho[2 * m] + rho[2 * m + 1];
        if pair <= 0.0 {
            break;
        }
        pair = pair.min(prev);
        sum += pair;
        prev = pair;
        m += 1;
    }
    let tau = (2.0 * sum - 1.0).max(1.0 / n as f64);
    n as f64 / tau
}

/// Minimum ESS over the columns of an N×D draw matrix.
pub fn min_ess(draws: &DMatrix<f64>) -> f64 {
    draws
        .column_iter()
        .map(|c| effective_sample_size(c.as_slice()))
        .fold(f64::INFINITY, f64::min)
}
