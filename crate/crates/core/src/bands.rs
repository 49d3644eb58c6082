//! Pointwise credible intervals and sup-t simultaneous bands.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::psd_sqrt;
use crate::stats::{normal_quantile, quantile_sorted, sorted_copy};

/// Simulation count for the plug-in critical value.
pub const DEFAULT_N_SIM: usize = 100_000;

/// Fixed shard count, so results do not depend on the thread pool size.
const SHARDS: usize = 16;

const MAX_BISECTIONS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BandMethod {
    PluginSupT,
    QuantileSupT,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointwiseMode {
    RawQuantiles,
    Asymptotic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn contains_interval(&self, other: &Interval) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandResult {
    pub point: Vec<f64>,
    pub pointwise: Vec<Interval>,
    pub simultaneous: Vec<Interval>,
    /// Plug-in: the sup-t quantile c. Quantile: the equivalent normal
    /// critical value `Φ⁻¹(1 − ξ̂)`.
    pub critical_value: f64,
    pub alpha: f64,
    pub method: BandMethod,
    /// Tail probability ξ̂ of the quantile band.
    pub xi: Option<f64>,
    /// False when the quantile band could not reach the target coverage.
    pub attained: bool,
}

impl BandResult {
    /// `h,point,pw_lo,pw_hi,sim_lo,sim_hi` rows with round-trip floats.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("h,point,pw_lo,pw_hi,sim_lo,sim_hi\n");
        for h in 0..self.point.len() {
            s.push_str(&format!(
                "{h},{:?},{:?},{:?},{:?},{:?}\n",
                self.point[h],
                self.pointwise[h].lo,
                self.pointwise[h].hi,
                self.simultaneous[h].lo,
                self.simultaneous[h].hi
            ));
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("bands serialize")
    }

    /// Every simultaneous interval contains its pointwise interval.
    pub fn nests(&self) -> bool {
        self.simultaneous
            .iter()
            .zip(&self.pointwise)
            .all(|(s, p)| s.contains_interval(p))
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

/// Covariance of one regressor's coefficients across horizons, taken from a
/// D×D covariance in the horizon-major layout.
pub fn extract_irf_covariance(
    omega: &DMatrix<f64>,
    shock_index: usize,
    n_regressors: usize,
    horizon: usize,
) -> Result<DMatrix<f64>> {
    let d = n_regressors * (horizon + 1);
    if omega.shape() != (d, d) || shock_index >= n_regressors {
        return Err(Error::Dimension(format!(
            "cannot extract regressor {shock_index} of {n_regressors} over {} horizons from a {}×{} matrix",
            horizon + 1,
            omega.nrows(),
            omega.ncols()
        )));
    }
    let idx: Vec<usize> = (0..=horizon).map(|h| h * n_regressors + shock_index).collect();
    Ok(DMatrix::from_fn(horizon + 1, horizon + 1, |a, b| omega[(idx[a], idx[b])]))
}

/// `n_sim` draws of `max_h |e_h| / sd_h` for `e ~ N(0, Ω₁)`, sharded with
/// one ChaCha stream per shard.
fn simulate_sup_stats(omega1: &DMatrix<f64>, n_sim: usize, seed: u64) -> Result<Vec<f64>> {
    let root = psd_sqrt(omega1, "IRF covariance")?;
    let n = omega1.nrows();
    let sd: Vec<f64> = (0..n).map(|h| omega1[(h, h)].sqrt()).collect();
    if sd.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::NotPositiveDefinite("IRF covariance"));
    }
    let per = n_sim.div_ceil(SHARDS);
    let shards: Vec<Vec<f64>> = (0..SHARDS)
        .into_par_iter()
        .map(|shard| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            rng.set_stream(shard as u64);
            let count = per.min(n_sim.saturating_sub(shard * per));
            let mut out = Vec::with_capacity(count);
            let mut z = DVector::zeros(n);
            for _ in 0..count {
                for v in z.iter_mut() {
                    *v = rng.sample(StandardNormal);
                }
                let e = &root * &z;
                out.push(
                    e.iter()
                        .zip(&sd)
                        .map(|(x, s)| (x / s).abs())
                        .fold(0.0, f64::max),
                );
            }
            out
        })
        .collect();
    Ok(shards.concat())
}

/// The `1 − α` quantile of `max_h |e_h| / sd_h` over supplied centred draws.
pub fn supt_critical_from_draws(draws: &DMatrix<f64>, sd: &[f64], alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if draws.ncols() != sd.len() || draws.nrows() == 0 {
        return Err(Error::Dimension("draws must have one column per standard deviation".into()));
    }
    let stats: Vec<f64> = draws
        .row_iter()
        .map(|r| r.iter().zip(sd).map(|(x, s)| (x / s).abs()).fold(0.0, f64::max))
        .collect();
    Ok(quantile_sorted(&sorted_copy(&stats), 1.0 - alpha))
}

/// Plug-in sup-t band: `θ̂₁ ± ς̂·c` with `ς̂_h = √(Ω₁,hh / T)`.
///
/// The critical value is floored at `z_{1−α/2}`, which the sup statistic
/// exceeds in population.
pub fn supt_plugin(
    omega1: &DMatrix<f64>,
    theta1_hat: &[f64],
    t_eff: usize,
    alpha: f64,
    n_sim: usize,
    seed: u64,
) -> Result<BandResult> {
    check_alpha(alpha)?;
    let n = theta1_hat.len();
    if omega1.shape() != (n, n) || n_sim == 0 {
        return Err(Error::Dimension("Omega1 must match the IRF length".into()));
    }
    let stats = sorted_copy(&simulate_sup_stats(omega1, n_sim, seed)?);
    let z = normal_quantile(1.0 - alpha / 2.0);
    let c = quantile_sorted(&stats, 1.0 - alpha).max(z);
    Ok(plugin_band(omega1, theta1_hat, t_eff, alpha, c))
}

/// The same band with a caller-supplied critical value.
pub fn plugin_band(omega1: &DMatrix<f64>, theta1_hat: &[f64], t_eff: usize, alpha: f64, c: f64) -> BandResult {
    let z = normal_quantile(1.0 - alpha / 2.0);
    let mut pointwise = Vec::new();
    let mut simultaneous = Vec::new();
    for (h, &p) in theta1_hat.iter().enumerate() {
        let s = (omega1[(h, h)] / t_eff as f64).sqrt();
        pointwise.push(Interval { lo: p - z * s, hi: p + z * s });
        simultaneous.push(Interval { lo: p - c * s, hi: p + c * s });
    }
    BandResult {
        point: theta1_hat.to_vec(),
        pointwise,
        simultaneous,
        critical_value: c,
        alpha,
        method: BandMethod::PluginSupT,
        xi: None,
        attained: true,
    }
}

struct SortedColumns {
    cols: Vec<Vec<f64>>,
}

impl SortedColumns {
    fn new(draws: &DMatrix<f64>) -> Self {
        Self { cols: draws.column_iter().map(|c| sorted_copy(c.as_slice())).collect() }
    }

    fn box_at(&self, xi: f64) -> Vec<Interval> {
        self.cols
            .iter()
            .map(|c| Interval { lo: quantile_sorted(c, xi), hi: quantile_sorted(c, 1.0 - xi) })
            .collect()
    }
}

fn joint_coverage(draws: &DMatrix<f64>, bx: &[Interval]) -> f64 {
    let n = draws.nrows();
    let inside = (0..n)
        .filter(|&i| bx.iter().enumerate().all(|(h, iv)| iv.contains(draws[(i, h)])))
        .count();
    inside as f64 / n as f64
}

/// Quantile-based sup-t band from N×(H+1) draws.
///
/// ξ̂ is the largest tail probability in `[1/N, α/2]` whose quantile box
/// holds at least the target share of draws; the target is `1 − α`, lowered
/// to the smallest marginal coverage at `α/2` so that ξ̂ = α/2 whenever the
/// box is already as tight as the marginals allow.
pub fn supt_quantile(draws1: &DMatrix<f64>, alpha: f64) -> Result<BandResult> {
    check_alpha(alpha)?;
    let n = draws1.nrows();
    if n < 1000 {
        return Err(Error::InvalidArgument(format!("quantile sup-t needs at least 1000 draws, got {n}")));
    }
    let sorted = SortedColumns::new(draws1);
    let half = alpha / 2.0;
    let pointwise = sorted.box_at(half);
    let marginal_min = pointwise
        .iter()
        .enumerate()
        .map(|(h, iv)| draws1.column(h).iter().filter(|&&x| iv.contains(x)).count() as f64 / n as f64)
        .fold(1.0, f64::min);
    let target = (1.0 - alpha).min(marginal_min);

    let (xi, attained) = if joint_coverage(draws1, &pointwise) >= target {
        (half, true)
    } else {
        let mut lo = 1.0 / n as f64;
        let mut hi = half;
        if joint_coverage(draws1, &sorted.box_at(lo)) < target {
            (lo, false)
        } else {
            for _ in 0..MAX_BISECTIONS {
                let mid = 0.5 * (lo + hi);
                if joint_coverage(draws1, &sorted.box_at(mid)) >= target {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo < 0.25 / n as f64 {
                    break;
                }
            }
            (lo, true)
        }
    };
    let point: Vec<f64> = draws1.column_iter().map(|c| c.mean()).collect();
    Ok(BandResult {
        point,
        pointwise,
        simultaneous: sorted.box_at(xi),
        critical_value: normal_quantile(1.0 - xi),
        alpha,
        method: BandMethod::QuantileSupT,
        xi: Some(xi),
        attained,
    })
}

/// Central `1 − α` interval of each column, by linear interpolation.
pub fn pointwise_raw(draws1: &DMatrix<f64>, alpha: f64) -> Result<Vec<Interval>> {
    check_alpha(alpha)?;
    let n = draws1.nrows();
    if (n as f64) * alpha / 2.0 < 10.0 {
        return Err(Error::InvalidArgument(format!(
            "{n} draws are too few for {:.3} tail quantiles",
            alpha / 2.0
        )));
    }
    Ok(SortedColumns::new(draws1).box_at(alpha / 2.0))
}

/// `θ̂ ± z_{1−α/2}·√(Ω₁,hh / T)`.
pub fn pointwise_asymptotic(
    theta1_hat: &[f64],
    omega1: &DMatrix<f64>,
    t_eff: usize,
    alpha: f64,
) -> Result<Vec<Interval>> {
    check_alpha(alpha)?;
    let z = normal_quantile(1.0 - alpha / 2.0);
    Ok(theta1_hat
        .iter()
        .enumerate()
        .map(|(h, &p)| {
            let s = (omega1[(h, h)] / t_eff as f64).sqrt();
            Interval { lo: p - z * s, hi: p + z * s }
        })
        .collect())
}

/// Dispatch on [`PointwiseMode`]; the asymptotic mode needs `(θ̂, Ω₁, T)`.
pub fn pointwise_interval(
    draws1: Option<&DMatrix<f64>>,
    asymptotic: Option<(&[f64], &DMatrix<f64>, usize)>,
    alpha: f64,
    mode: PointwiseMode,
) -> Result<Vec<Interval>> {
    match (mode, draws1, asymptotic) {
        (PointwiseMode::RawQuantiles, Some(d), _) => pointwise_raw(d, alpha),
        (PointwiseMode::Asymptotic, _, Some((p, o, t))) => pointwise_asymptotic(p, o, t, alpha),
        _ => Err(Error::InvalidArgument("inputs do not match the interval mode".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian_draws(cov: &DMatrix<f64>, n: usize, seed: u64) -> DMatrix<f64> {
        let root = psd_sqrt(cov, "t").unwrap();
        let k = cov.nrows();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let z = DMatrix::from_fn(n, k, |_, _| rng.sample::<f64, _>(StandardNormal));
        z * root.transpose()
    }

    #[test]
    fn extraction_picks_the_shock_coefficients() {
        let omega = DMatrix::from_fn(6, 6, |i, j| (10 * i + j) as f64);
        let e = extract_irf_covariance(&omega, 1, 2, 2).unwrap();
        assert_eq!(e[(0, 0)], 11.0);
        assert_eq!(e[(1, 2)], 35.0);
        assert_eq!(e[(2, 2)], 55.0);
        let single = DMatrix::from_fn(3, 3, |i, j| (i + j) as f64);
        assert_eq!(extract_irf_covariance(&single, 0, 1, 2).unwrap(), single);
        assert!(extract_irf_covariance(&omega, 2, 2, 2).is_err());
    }

    #[test]
    fn univariate_plugin_is_normal_quantile() {
        let b = supt_plugin(&DMatrix::from_element(1, 1, 2.0), &[0.0], 100, 0.1, DEFAULT_N_SIM, 1).unwrap();
        assert!((b.critical_value - 1.6449).abs() < 0.02);
    }

    #[test]
    fn perfect_dependence_gives_pointwise_value() {
        let omega = DMatrix::from_element(8, 8, 1.0);
        let b = supt_plugin(&omega, &[0.0; 8], 100, 0.1, DEFAULT_N_SIM, 2).unwrap();
        assert!((b.critical_value - 1.6449).abs() < 0.02);
        let draws = gaussian_draws(&DMatrix::from_element(1, 1, 1.0), 20_000, 3);
        let same = DMatrix::from_fn(20_000, 5, |i, _| draws[(i, 0)]);
        let q = supt_quantile(&same, 0.1).unwrap();
        assert_eq!(q.xi, Some(0.05));
    }

    #[test]
    fn independent_coordinates_match_closed_form() {
        let expect = normal_quantile((1.0 + 0.9f64.powf(1.0 / 8.0)) / 2.0);
        let b = supt_plugin(&DMatrix::identity(8, 8), &[0.0; 8], 1, 0.1, DEFAULT_N_SIM, 4).unwrap();
        assert!((b.critical_value - expect).abs() < 0.03);
        let draws = gaussian_draws(&DMatrix::identity(8, 8), 100_000, 5);
        let q = supt_quantile(&draws, 0.1).unwrap();
        for iv in &q.simultaneous {
            assert!((iv.length() / 2.0 - expect).abs() < 0.05);
        }
    }

    #[test]
    fn single_horizon_quantile_band_is_central_interval() {
        let draws = gaussian_draws(&DMatrix::from_element(1, 1, 1.0), 5_000, 6);
        let q = supt_quantile(&draws, 0.1).unwrap();
        assert_eq!(q.xi, Some(0.05));
        assert_eq!(q.simultaneous, q.pointwise);
    }

    #[test]
    fn raw_quantiles_of_integers() {
        let draws = DMatrix::from_fn(1000, 1, |i, _| (i + 1) as f64);
        let iv = pointwise_raw(&draws, 0.1).unwrap();
        assert!((iv[0].lo - 50.95).abs() < 1e-12 && (iv[0].hi - 950.05).abs() < 1e-12);
        assert!(pointwise_raw(&DMatrix::zeros(150, 1), 0.1).is_err());
    }

    #[test]
    fn raw_and_asymptotic_agree_for_gaussian_draws() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.4, 0.4, 2.0]);
        let draws = gaussian_draws(&cov, 100_000, 7);
        let raw = pointwise_raw(&draws, 0.1).unwrap();
        let asy = pointwise_asymptotic(&[0.0, 0.0], &cov, 1, 0.1).unwrap();
        for (r, a) in raw.iter().zip(&asy) {
            assert!((r.length() / a.length() - 1.0).abs() < 0.02);
        }
    }

    #[test]
    fn plugin_is_deterministic_and_nests() {
        let omega = DMatrix::from_fn(4, 4, |i, j| 0.5f64.powi((i as i32 - j as i32).abs()));
        let a = supt_plugin(&omega, &[1.0, 2.0, 3.0, 4.0], 50, 0.1, 10_000, 9).unwrap();
        let b = supt_plugin(&omega, &[1.0, 2.0, 3.0, 4.0], 50, 0.1, 10_000, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.nests());
        assert!(a.to_csv().starts_with("h,point,pw_lo,pw_hi,sim_lo,sim_hi\n0,1.0,"));
        assert!(a.to_json().contains("\"method\": \"plugin-sup-t\""));
    }
}
