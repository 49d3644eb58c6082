//! Point anchors, moment functions, moment covariances and the LTE geometry.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::design::LpDesign;
use crate::error::{Error, Result};
use crate::linalg::{cholesky_with_jitter, spd_inverse, symmetrize};

/// Relative singular-value floor below which a matrix is treated as rank deficient.
const RANK_TOL: f64 = 1e-10;

/// Coefficients Θ = (θ_(0), …, θ_(H)), one column per horizon.
///
/// `vec()` stacks the columns, so coordinate `h·J + j` is regressor `j` at
/// horizon `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaMatrix(DMatrix<f64>);

impl ThetaMatrix {
    pub fn new(coeffs: DMatrix<f64>) -> Result<Self> {
        if coeffs.iter().any(|v| !v.is_finite()) {
            return Err(Error::Sampler("non-finite coefficient".into()));
        }
        Ok(Self(coeffs))
    }

    pub fn from_vec(n_regressors: usize, n_horizons: usize, theta: &[f64]) -> Result<Self> {
        if theta.len() != n_regressors * n_horizons {
            return Err(Error::Dimension(format!(
                "theta has {} entries, expected {}",
                theta.len(),
                n_regressors * n_horizons
            )));
        }
        Self::new(DMatrix::from_column_slice(n_regressors, n_horizons, theta))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn vec(&self) -> DVector<f64> {
        DVector::from_column_slice(self.0.as_slice())
    }

    pub fn n_regressors(&self) -> usize {
        self.0.nrows()
    }

    pub fn n_horizons(&self) -> usize {
        self.0.ncols()
    }

    /// Coefficient path of one regressor across horizons.
    pub fn path(&self, regressor: usize) -> Vec<f64> {
        self.0.row(regressor).iter().copied().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MomentCovKind {
    Standard,
    NeweyWest { bandwidth: usize },
}

impl MomentCovKind {
    /// Newey–West with bandwidth `round(1.3·√T)`.
    pub fn newey_west_default(t: usize) -> Self {
        MomentCovKind::NeweyWest { bandwidth: default_bandwidth(t) }
    }
}

pub fn default_bandwidth(t: usize) -> usize {
    (1.3 * (t as f64).sqrt()).round() as usize
}

fn check_rank(m: &DMatrix<f64>, what: &'static str) -> Result<()> {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.max();
    let min = sv.min();
    if !(max > 0.0) || min <= RANK_TOL * max {
        return Err(Error::RankDeficient { what, sigma_min: min });
    }
    Ok(())
}

/// Least squares through a thin QR factorization.
fn least_squares(x: &DMatrix<f64>, y: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    check_rank(x, what)?;
    let qr = x.clone().qr();
    let qty = qr.q().transpose() * y;
    qr.r()
        .solve_upper_triangular(&qty)
        .ok_or(Error::RankDeficient { what, sigma_min: 0.0 })
}

pub fn ols(design: &LpDesign) -> Result<ThetaMatrix> {
    ThetaMatrix::new(least_squares(&design.x, &design.y, "X")?)
}

/// Two-stage least squares with `X̂ = Z(ZᵀZ)⁻¹ZᵀX`.
pub fn tsls(design: &LpDesign) -> Result<ThetaMatrix> {
    let z = design.instruments(true)?;
    check_rank(z, "Z")?;
    check_rank(&(z.transpose() * &design.x), "ZᵀX")?;
    let q = z.clone().qr().q();
    let x_hat = &q * (q.transpose() * &design.x);
    ThetaMatrix::new(least_squares(&x_hat, &design.y, "projected X")?)
}

/// Just-identified IV closed form `(ZᵀX)⁻¹ZᵀY`.
pub fn iv_just_identified(design: &LpDesign) -> Result<ThetaMatrix> {
    let z = design.instruments(true)?;
    if z.ncols() != design.x.ncols() {
        return Err(Error::Dimension(format!(
            "{} instruments for {} regressors",
            z.ncols(),
            design.x.ncols()
        )));
    }
    let zx = z.transpose() * &design.x;
    check_rank(&zx, "ZᵀX")?;
    let zy = z.transpose() * &design.y;
    let sol = zx
        .lu()
        .solve(&zy)
        .ok_or(Error::RankDeficient { what: "ZᵀX", sigma_min: 0.0 })?;
    ThetaMatrix::new(sol)
}

fn check_theta(theta: &ThetaMatrix, design: &LpDesign) -> Result<()> {
    if theta.n_regressors() != design.n_regressors() || theta.n_horizons() != design.n_horizons() {
        return Err(Error::Dimension(format!(
            "theta is {}×{}, design needs {}×{}",
            theta.n_regressors(),
            theta.n_horizons(),
            design.n_regressors(),
            design.n_horizons()
        )));
    }
    Ok(())
}

/// Per-period moment contributions `m_t(θ)`, one row per t, horizon-major blocks.
pub fn moment_scores(theta: &ThetaMatrix, design: &LpDesign, use_iv: bool) -> Result<DMatrix<f64>> {
    check_theta(theta, design)?;
    let z = design.instruments(use_iv)?;
    let resid = &design.y - &design.x * theta.matrix();
    let (t, k) = z.shape();
    let nh = design.n_horizons();
    let mut s = DMatrix::zeros(t, nh * k);
    for h in 0..nh {
        for c in 0..k {
            let col = z.column(c).component_mul(&resid.column(h));
            s.set_column(h * k + c, &col);
        }
    }
    Ok(s)
}

/// `m̄(θ) = (1/T) Σ_t m_t(θ)`.
pub fn moment_mean(theta: &ThetaMatrix, design: &LpDesign, use_iv: bool) -> Result<DVector<f64>> {
    let s = moment_scores(theta, design, use_iv)?;
    let t = s.nrows() as f64;
    Ok(s.row_sum().transpose() / t)
}

/// Bartlett-weighted long-run covariance of the rows of `scores`, uncentered.
///
/// `lags = 0` gives the plain outer-product estimator.
pub fn long_run_covariance(scores: &DMatrix<f64>, lags: usize) -> DMatrix<f64> {
    let (t, _) = scores.shape();
    // Σ_s w_|s| m_{t+s} accumulated per row, then one product: Sᵀ(K S)/T.
    let smoothed = if lags == 0 {
        scores.clone()
    } else {
        let mut acc = scores.clone();
        for s in 1..=lags.min(t.saturating_sub(1)) {
            let w = 1.0 - s as f64 / (lags as f64 + 1.0);
            let n = t - s;
            let ahead = scores.rows(s, n) * w;
            let behind = scores.rows(0, n) * w;
            let mut top = acc.rows_mut(0, n);
            top += &ahead;
            let mut bottom = acc.rows_mut(s, n);
            bottom += &behind;
        }
        acc
    };
    let mut v = scores.transpose() * smoothed / t as f64;
    symmetrize(&mut v);
    v
}

pub fn moment_covariance(
    theta_star: &ThetaMatrix,
    design: &LpDesign,
    kind: MomentCovKind,
    use_iv: bool,
) -> Result<DMatrix<f64>> {
    let scores = moment_scores(theta_star, design, use_iv)?;
    let lags = match kind {
        MomentCovKind::Standard => 0,
        MomentCovKind::NeweyWest { bandwidth } => {
            if bandwidth == 0 {
                return Err(Error::InvalidArgument("Newey-West bandwidth must be at least 1".into()));
            }
            if bandwidth >= scores.nrows() {
                return Err(Error::InvalidArgument(format!(
                    "bandwidth {bandwidth} is not below the effective sample {}",
                    scores.nrows()
                )));
            }
            bandwidth
        }
    };
    Ok(long_run_covariance(&scores, lags))
}

/// Everything the quasi-posterior needs, evaluated once at the anchor.
#[derive(Debug, Clone)]
pub struct LteGeometry {
    /// Jacobian of the moment mean, `I ⊗ (−ZᵀX/T)`.
    pub g: DMatrix<f64>,
    pub w: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub theta_star: ThetaMatrix,
    pub t_eff: usize,
    pub use_iv: bool,
    /// `T·GᵀWG`, the quasi-posterior precision.
    pub precision: DMatrix<f64>,
    /// Diagonal jitter added to V before inversion.
    pub jitter: f64,
    zx: DMatrix<f64>,
    zy: DMatrix<f64>,
}

impl LteGeometry {
    /// Assembles the geometry from precomputed pieces. `zx = ZᵀX/T`, `zy = ZᵀY/T`.
    pub fn from_parts(
        zx: DMatrix<f64>,
        zy: DMatrix<f64>,
        v: DMatrix<f64>,
        theta_star: ThetaMatrix,
        t_eff: usize,
        use_iv: bool,
    ) -> Result<Self> {
        let (k, j) = zx.shape();
        let nh = zy.ncols();
        if v.shape() != (k * nh, k * nh) || theta_star.n_regressors() != j {
            return Err(Error::Dimension("geometry pieces disagree".into()));
        }
        let mut v = v;
        symmetrize(&mut v);
        let (chol, jitter) = cholesky_with_jitter(&v, "moment covariance V")?;
        let mut w = chol.inverse();
        symmetrize(&mut w);
        let mut g = DMatrix::zeros(k * nh, j * nh);
        for h in 0..nh {
            g.view_mut((h * k, h * j), (k, j)).copy_from(&(-&zx));
        }
        let mut precision = g.transpose() * &w * &g * t_eff as f64;
        symmetrize(&mut precision);
        Ok(Self { g, w, v, theta_star, t_eff, use_iv, precision, jitter, zx, zy })
    }

    pub fn n_params(&self) -> usize {
        self.g.ncols()
    }

    pub fn n_regressors(&self) -> usize {
        self.zx.ncols()
    }

    pub fn n_horizons(&self) -> usize {
        self.zy.ncols()
    }

    /// Moment mean at an arbitrary θ, using the cached cross products.
    pub fn moment_mean(&self, theta: &[f64]) -> DVector<f64> {
        let (k, j) = self.zx.shape();
        let mut out = DVector::zeros(k * self.n_horizons());
        for h in 0..self.n_horizons() {
            let th = nalgebra::DVectorView::from_slice(&theta[h * j..(h + 1) * j], j);
            let block = self.zy.column(h) - &self.zx * th;
            out.rows_mut(h * k, k).copy_from(&block);
        }
        out
    }

    /// `GᵀWG`.
    pub fn gwg(&self) -> DMatrix<f64> {
        &self.precision / self.t_eff as f64
    }
}

/// Builds the LTE geometry: anchor, V at the anchor, W = V⁻¹ and G.
pub fn lte_geometry(design: &LpDesign, kind: MomentCovKind, use_iv: bool) -> Result<LteGeometry> {
    let theta_star = if use_iv { tsls(design)? } else { ols(design)? };
    let v = moment_covariance(&theta_star, design, kind, use_iv)?;
    let z = design.instruments(use_iv)?;
    let t = design.t_eff() as f64;
    let zx = z.transpose() * &design.x / t;
    let zy = z.transpose() * &design.y / t;
    LteGeometry::from_parts(zx, zy, v, theta_star, design.t_eff(), use_iv)
}

/// Sandwich `(GᵀWG)⁻¹GᵀWVWG(GᵀWG)⁻¹`.
pub fn asymptotic_covariance(geom: &LteGeometry) -> Result<DMatrix<f64>> {
    let a_inv = spd_inverse(&geom.gwg(), "GᵀWG")?;
    let wg = &geom.w * &geom.g;
    let meat = wg.transpose() * &geom.v * &wg;
    let mut out = &a_inv * meat * &a_inv;
    symmetrize(&mut out);
    Ok(out)
}

/// Equation-by-equation sandwich `T(XᵀX)⁻¹V̂_(h)(XᵀX)⁻¹`, one J×J matrix per horizon.
pub fn muller_sandwich(
    design: &LpDesign,
    theta_hat: &ThetaMatrix,
    kind: MomentCovKind,
) -> Result<Vec<DMatrix<f64>>> {
    let scores = moment_scores(theta_hat, design, false)?;
    let j = design.n_regressors();
    let t = design.t_eff();
    let lags = match kind {
        MomentCovKind::Standard => 0,
        MomentCovKind::NeweyWest { bandwidth } => {
            if bandwidth == 0 || bandwidth >= t {
                return Err(Error::InvalidArgument(format!("bandwidth {bandwidth} out of range")));
            }
            bandwidth
        }
    };
    check_rank(&design.x, "X")?;
    let xtx_inv = spd_inverse(&(design.x.transpose() * &design.x), "XᵀX")?;
    (0..design.n_horizons())
        .map(|h| {
            let block = scores.columns(h * j, j).into_owned();
            let vh = long_run_covariance(&block, lags);
            let mut out = &xtx_inv * vh * &xtx_inv * t as f64;
            symmetrize(&mut out);
            Ok(out)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{random_design, random_iv_design};

    #[test]
    fn ols_recovers_noiseless_coefficients() {
        let mut d = random_design(1, 80, 4, 2);
        let theta0 = DMatrix::from_fn(4, 3, |i, h| (i as f64 - 1.5) * (h as f64 + 1.0));
        d.y = &d.x * &theta0;
        let est = ols(&d).unwrap();
        assert!((est.matrix() - theta0).abs().max() < 1e-12);
    }

    #[test]
    fn intercept_only_gives_mean() {
        let y = DMatrix::from_column_slice(4, 1, &[1.0, 2.0, 4.0, 9.0]);
        let mut d = random_design(2, 4, 1, 0);
        d.x = DMatrix::from_element(4, 1, 1.0);
        d.y = y;
        assert!((ols(&d).unwrap().matrix()[(0, 0)] - 4.0).abs() < 1e-14);
    }

    #[test]
    fn ols_residuals_are_orthogonal() {
        let d = random_design(3, 500, 5, 1);
        let est = ols(&d).unwrap();
        let r = d.x.transpose() * (&d.y - &d.x * est.matrix());
        let scale = d.x.abs().max() * d.y.abs().max() * 500.0;
        assert!(r.abs().max() < 1e-8 * scale);
    }

    #[test]
    fn rank_deficient_x_is_reported() {
        let mut d = random_design(4, 50, 3, 0);
        let c = d.x.column(2).into_owned();
        d.x.set_column(1, &(c * 2.0));
        assert!(matches!(ols(&d), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn tsls_with_z_equal_x_is_ols() {
        let mut d = random_design(5, 120, 4, 2);
        d.z = Some(d.x.clone());
        let a = ols(&d).unwrap();
        let b = tsls(&d).unwrap();
        assert!((a.matrix() - b.matrix()).abs().max() < 1e-10);
    }

    #[test]
    fn just_identified_tsls_matches_closed_form() {
        let d = random_iv_design(6, 200, 4, 3);
        let a = tsls(&d).unwrap();
        let b = iv_just_identified(&d).unwrap();
        assert!((a.matrix() - b.matrix()).abs().max() < 1e-10);
        let m = moment_mean(&a, &d, true).unwrap();
        assert!(m.amax() < 1e-10);
    }

    #[test]
    fn moments_vanish_at_ols() {
        let d = random_design(7, 150, 3, 3);
        let est = ols(&d).unwrap();
        assert!(moment_mean(&est, &d, false).unwrap().amax() < 1e-10);
    }

    #[test]
    fn moment_mean_at_zero_matches_loop() {
        let d = random_design(8, 40, 3, 2);
        let zero = ThetaMatrix::new(DMatrix::zeros(3, 3)).unwrap();
        let m = moment_mean(&zero, &d, false).unwrap();
        for h in 0..3 {
            for j in 0..3 {
                let mut acc = 0.0;
                for t in 0..40 {
                    acc += d.y[(t, h)] * d.x[(t, j)];
                }
                assert!((m[h * 3 + j] - acc / 40.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn newey_west_matches_explicit_lag_sum() {
        let d = random_design(9, 60, 2, 1);
        let est = ols(&d).unwrap();
        let s = moment_scores(&est, &d, false).unwrap();
        let bw = 4;
        let t = s.nrows();
        let mut expect = s.transpose() * &s / t as f64;
        for lag in 1..=bw {
            let b = s.rows(lag, t - lag).transpose() * s.rows(0, t - lag) / t as f64;
            let w = 1.0 - lag as f64 / (bw as f64 + 1.0);
            expect += (&b + b.transpose()) * w;
        }
        let got = moment_covariance(&est, &d, MomentCovKind::NeweyWest { bandwidth: bw }, false)
            .unwrap();
        assert!((got - expect).abs().max() < 1e-12);
    }

    #[test]
    fn empty_lag_sum_is_standard() {
        let d = random_design(10, 60, 2, 1);
        let est = ols(&d).unwrap();
        let s = moment_scores(&est, &d, false).unwrap();
        let std = moment_covariance(&est, &d, MomentCovKind::Standard, false).unwrap();
        assert_eq!(long_run_covariance(&s, 0), std);
    }

    #[test]
    fn bandwidth_rule() {
        assert_eq!(default_bandwidth(500), 29);
        let d = random_design(11, 30, 2, 0);
        let est = ols(&d).unwrap();
        let too_wide = MomentCovKind::NeweyWest { bandwidth: 30 };
        assert!(moment_covariance(&est, &d, too_wide, false).is_err());
    }

    #[test]
    fn geometry_structure() {
        let d = random_design(12, 200, 3, 2);
        let geom = lte_geometry(&d, MomentCovKind::Standard, false).unwrap();
        assert_eq!(geom.g.shape(), (9, 9));
        for a in 0..3 {
            for b in 0..3 {
                if a != b {
                    assert!(geom.g.view((a * 3, b * 3), (3, 3)).iter().all(|&e| e == 0.0));
                }
            }
        }
        let wv = &geom.w * &geom.v;
        assert!((wv - DMatrix::identity(9, 9)).abs().max() < 1e-6);
    }

    #[test]
    fn sandwich_collapses_with_efficient_weight() {
        let d = random_design(13, 300, 3, 1);
        let geom = lte_geometry(&d, MomentCovKind::Standard, false).unwrap();
        let omega = asymptotic_covariance(&geom).unwrap();
        let inv = spd_inverse(&geom.gwg(), "t").unwrap();
        assert!((&omega - &inv).norm() / inv.norm() < 1e-8);
    }

    #[test]
    fn sandwich_is_homogeneous_in_v() {
        let d = random_design(14, 300, 3, 1);
        let mut geom = lte_geometry(&d, MomentCovKind::Standard, false).unwrap();
        let base = asymptotic_covariance(&geom).unwrap();
        geom.v *= 3.0;
        let scaled = asymptotic_covariance(&geom).unwrap();
        assert!((scaled - base * 3.0).abs().max() < 1e-10);
    }

    #[test]
    fn two_by_two_sandwich_by_hand() {
        // one regressor, two horizons: G = diag(−a, −a)
        let zx = DMatrix::from_element(1, 1, 2.0);
        let zy = DMatrix::from_row_slice(1, 2, &[0.0, 0.0]);
        let v = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 2.0]);
        let theta = ThetaMatrix::new(DMatrix::zeros(1, 2)).unwrap();
        let mut geom = LteGeometry::from_parts(zx, zy, v, theta, 10, false).unwrap();
        // swap in a non-efficient W so the full sandwich matters
        geom.w = DMatrix::identity(2, 2);
        geom.precision = geom.g.transpose() * &geom.w * &geom.g * 10.0;
        let omega = asymptotic_covariance(&geom).unwrap();
        // (GᵀG)⁻¹GᵀVG(GᵀG)⁻¹ = V / a²
        let expect = DMatrix::from_row_slice(2, 2, &[1.0, 0.25, 0.25, 0.5]);
        assert!((omega - expect).abs().max() < 1e-14);
    }

    #[test]
    fn muller_blocks_match_full_sandwich() {
        let d = random_design(15, 250, 3, 2);
        let geom = lte_geometry(&d, MomentCovKind::Standard, false).unwrap();
        let omega = asymptotic_covariance(&geom).unwrap() / d.t_eff() as f64;
        let blocks = muller_sandwich(&d, &geom.theta_star, MomentCovKind::Standard).unwrap();
        for (h, b) in blocks.iter().enumerate() {
            let diag = omega.view((h * 3, h * 3), (3, 3));
            assert!((b - diag).abs().max() < 1e-8 * b.abs().max());
        }
    }

    #[test]
    fn muller_zero_residuals() {
        let mut d = random_design(16, 50, 2, 1);
        let theta0 = DMatrix::from_element(2, 2, 0.5);
        d.y = &d.x * &theta0;
        let est = ThetaMatrix::new(theta0).unwrap();
        for b in muller_sandwich(&d, &est, MomentCovKind::Standard).unwrap() {
            assert!(b.abs().max() < 1e-20);
        }
    }
}
