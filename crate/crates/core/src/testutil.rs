//! Synthetic designs shared by unit tests.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::design::{LpDesign, SpecKind};

fn normal(rng: &mut ChaCha20Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// `j` regressors (shock, intercept, noise columns) and `h + 1` noisy responses.
pub fn random_design(seed: u64, t: usize, j: usize, h: usize) -> LpDesign {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let x = DMatrix::from_fn(t, j, |_, c| if c == 1 { 1.0 } else { 0.0 });
    let mut x = x;
    for c in 0..j {
        if c != 1 || j == 1 {
            for i in 0..t {
                x[(i, c)] = normal(&mut rng);
            }
        }
    }
    let theta = DMatrix::from_fn(j, h + 1, |r, c| 0.3 * (r as f64) - 0.1 * c as f64);
    let mut y = &x * theta;
    for i in 0..t {
        let scale = 1.0 + 0.5 * x[(i, 0)].abs();
        for c in 0..=h {
            y[(i, c)] += scale * normal(&mut rng);
        }
    }
    LpDesign {
        y,
        x,
        z: None,
        horizon: h,
        lags: 1,
        spec: SpecKind::Level,
        x_names: (0..j).map(|c| format!("x{c}")).collect(),
        first_row: 0,
    }
}

/// Just-identified IV design: the shock column is endogenous, column 0 of Z
/// is a relevant instrument.
pub fn random_iv_design(seed: u64, t: usize, j: usize, h: usize) -> LpDesign {
    let mut d = random_design(seed, t, j, h);
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0xfeed);
    let mut z = d.x.clone();
    for i in 0..t {
        let inst = normal(&mut rng);
        let confound = normal(&mut rng);
        z[(i, 0)] = inst;
        d.x[(i, 0)] = 0.8 * inst + confound;
        for c in 0..=h {
            d.y[(i, c)] += 0.5 * confound;
        }
    }
    d.z = Some(z);
    d
}
