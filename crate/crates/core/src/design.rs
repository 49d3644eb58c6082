//! Local-projection design matrices for level and long-differenced specifications.

use std::collections::HashSet;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::TimeSeriesData;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpecKind {
    Level,
    #[serde(rename = "ld")]
    LongDifferenced,
}

/// Base period subtracted from the response in the long-differenced spec.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LdBase {
    /// `y_{t+h} − y_{t−1}`: cumulated change from the pre-shock level.
    #[default]
    PreShock,
    /// `y_{t+h} − y_t`: the h = 0 response is identically zero.
    Current,
}

/// Which columns go where, and how far to project.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignConfig {
    pub response: String,
    pub shock: String,
    pub controls: Vec<String>,
    pub iv: Option<Vec<String>>,
    pub horizon: usize,
    pub lags: usize,
    pub spec: SpecKind,
    #[serde(default)]
    pub ld_base: LdBase,
    /// Also put lags of the instruments among the exogenous regressors.
    #[serde(default)]
    pub lag_instruments: bool,
}

impl DesignConfig {
    pub fn new(response: &str, shock: &str, horizon: usize, lags: usize, spec: SpecKind) -> Self {
        Self {
            response: response.into(),
            shock: shock.into(),
            controls: Vec::new(),
            iv: None,
            horizon,
            lags,
            spec,
            ld_base: LdBase::default(),
            lag_instruments: false,
        }
    }

    pub fn controls<S: AsRef<str>>(mut self, names: &[S]) -> Self {
        self.controls = names.iter().map(|s| s.as_ref().to_string()).collect();
        self
    }

    pub fn iv<S: AsRef<str>>(mut self, names: &[S]) -> Self {
        self.iv = Some(names.iter().map(|s| s.as_ref().to_string()).collect());
        self
    }

    pub fn ld_base(mut self, base: LdBase) -> Self {
        self.ld_base = base;
        self
    }

    pub fn lag_instruments(mut self, yes: bool) -> Self {
        self.lag_instruments = yes;
        self
    }
}

/// Time-aligned `(Y, X, Z)` for one projection system.
///
/// Column 0 of `x` is the shock, column 1 the intercept. When present, `z`
/// equals `x` with column 0 replaced by the instrument columns.
#[derive(Debug, Clone, PartialEq)]
pub struct LpDesign {
    pub y: DMatrix<f64>,
    pub x: DMatrix<f64>,
    pub z: Option<DMatrix<f64>>,
    pub horizon: usize,
    pub lags: usize,
    pub spec: SpecKind,
    pub x_names: Vec<String>,
    /// Absolute (0-based) time index of design row 0.
    pub first_row: usize,
}

impl LpDesign {
    pub fn t_eff(&self) -> usize {
        self.y.nrows()
    }

    pub fn n_regressors(&self) -> usize {
        self.x.ncols()
    }

    pub fn n_instruments(&self) -> usize {
        self.z.as_ref().map_or(0, |z| z.ncols())
    }

    pub fn n_horizons(&self) -> usize {
        self.horizon + 1
    }

    /// D = J(H+1).
    pub fn n_params(&self) -> usize {
        self.n_regressors() * self.n_horizons()
    }

    pub fn has_iv(&self) -> bool {
        self.z.is_some()
    }

    /// The instrument block, or `x` itself for plain LPs.
    pub fn instruments(&self, use_iv: bool) -> Result<&DMatrix<f64>> {
        if use_iv {
            self.z
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("design has no instruments".into()))
        } else {
            Ok(&self.x)
        }
    }
}

pub fn build_design(data: &TimeSeriesData, cfg: &DesignConfig) -> Result<LpDesign> {
    if cfg.lags == 0 {
        return Err(Error::InvalidArgument("lag count must be at least 1".into()));
    }
    let resp = data.column_index(&cfg.response)?;
    let shock = data.column_index(&cfg.shock)?;
    let controls = cfg
        .controls
        .iter()
        .map(|c| data.column_index(c))
        .collect::<Result<Vec<_>>>()?;
    let ivs = match &cfg.iv {
        Some(list) if list.is_empty() => {
            return Err(Error::InvalidArgument("instrument list is empty".into()))
        }
        Some(list) => Some(list.iter().map(|c| data.column_index(c)).collect::<Result<Vec<_>>>()?),
        None => None,
    };

    let mut used = vec![resp, shock];
    used.extend(&controls);
    if let Some(iv) = &ivs {
        used.extend(iv);
    }
    let mut seen = HashSet::new();
    for &c in &used {
        if !seen.insert(c) {
            return Err(Error::InvalidArgument(format!(
                "column '{}' is used more than once",
                data.names()[c]
            )));
        }
    }

    let (h_max, l) = (cfg.horizon, cfg.lags);
    let ld = cfg.spec == SpecKind::LongDifferenced;
    // LD lags of Δy need one extra presample observation.
    let start = if ld { l + 1 } else { l };
    let n = data.n_obs();
    if n < start + h_max + 1 {
        return Err(Error::Data(format!(
            "{n} observations cannot support H={h_max}, L={l}"
        )));
    }
    let t_eff = n - h_max - start;
    let vals = data.values();
    let names = data.names();
    let at = |c: usize, t: usize| vals[(t, c)];

    // Lagged blocks: response (or its difference), controls, shock, optional IV.
    let mut lag_vars: Vec<(usize, bool)> = vec![(resp, ld)];
    lag_vars.extend(controls.iter().map(|&c| (c, false)));
    lag_vars.push((shock, false));
    if cfg.lag_instruments {
        if let Some(iv) = &ivs {
            lag_vars.extend(iv.iter().map(|&c| (c, false)));
        }
    }
    let j = 2 + lag_vars.len() * l;

    let mut x_names = vec![names[shock].clone(), "const".to_string()];
    for &(c, diff) in &lag_vars {
        for lag in 1..=l {
            let base = if diff { format!("d.{}", names[c]) } else { names[c].clone() };
            x_names.push(format!("{base}.l{lag}"));
        }
    }

    let mut x = DMatrix::zeros(t_eff, j);
    let mut y = DMatrix::zeros(t_eff, h_max + 1);
    for i in 0..t_eff {
        let t = start + i;
        x[(i, 0)] = at(shock, t);
        x[(i, 1)] = 1.0;
        let mut col = 2;
        for &(c, diff) in &lag_vars {
            for lag in 1..=l {
                x[(i, col)] = if diff {
                    at(c, t - lag) - at(c, t - lag - 1)
                } else {
                    at(c, t - lag)
                };
                col += 1;
            }
        }
        for h in 0..=h_max {
            y[(i, h)] = if ld {
                let base = match cfg.ld_base {
                    LdBase::PreShock => at(resp, t - 1),
                    LdBase::Current => at(resp, t),
                };
                at(resp, t + h) - base
            } else {
                at(resp, t + h)
            };
        }
    }

    let z = ivs.map(|iv| {
        let r = iv.len();
        let mut z = DMatrix::zeros(t_eff, j - 1 + r);
        for i in 0..t_eff {
            for (k, &c) in iv.iter().enumerate() {
                z[(i, k)] = at(c, start + i);
            }
        }
        z.view_mut((0, r), (t_eff, j - 1)).copy_from(&x.columns(1, j - 1));
        z
    });

    let k = z.as_ref().map_or(0, |z| z.ncols());
    if t_eff <= j || t_eff <= k {
        return Err(Error::Data(format!(
            "effective sample {t_eff} does not exceed the {} regressors",
            j.max(k)
        )));
    }

    Ok(LpDesign {
        y,
        x,
        z,
        horizon: h_max,
        lags: l,
        spec: cfg.spec,
        x_names,
        first_row: start,
    })
}
