use std::fmt;
use std::str::FromStr;

use clap::ValueEnum;
use qblp::estimators::default_bandwidth;
use qblp::{MomentCovKind, PriorSpec, SpecKind};
use serde::{Deserialize, Serialize};

/// Moment covariance as given on the command line: `standard`, `nw` or `nw:S`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum CovChoice {
    Standard,
    NeweyWest(Option<usize>),
}

impl CovChoice {
    /// Bandwidth `round(1.3√T)` unless one was given.
    pub fn resolve(self, t: usize) -> MomentCovKind {
        match self {
            CovChoice::Standard => MomentCovKind::Standard,
            CovChoice::NeweyWest(s) => MomentCovKind::NeweyWest { bandwidth: s.unwrap_or_else(|| default_bandwidth(t)) },
        }
    }
}

impl FromStr for CovChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "standard" => Ok(CovChoice::Standard),
            "nw" | "hac" => Ok(CovChoice::NeweyWest(None)),
            _ => match s.strip_prefix("nw:") {
                Some(b) => b
                    .parse()
                    .map(|b| CovChoice::NeweyWest(Some(b)))
                    .map_err(|_| format!("bad Newey-West bandwidth '{b}'")),
                None => Err(format!("unknown covariance '{s}' (standard, nw or nw:S)")),
            },
        }
    }
}

impl fmt::Display for CovChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CovChoice::Standard => write!(f, "standard"),
            CovChoice::NeweyWest(None) => write!(f, "nw"),
            CovChoice::NeweyWest(Some(s)) => write!(f, "nw:{s}"),
        }
    }
}

impl TryFrom<String> for CovChoice {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<CovChoice> for String {
    fn from(c: CovChoice) -> String {
        c.to_string()
    }
}

/// `flat` or `rp:KAPPA`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum PriorChoice {
    Flat,
    Roughness(f64),
}

impl PriorChoice {
    pub fn build(self, n_regressors: usize, horizon: usize) -> qblp::Result<PriorSpec> {
        match self {
            PriorChoice::Flat => Ok(PriorSpec::Flat),
            PriorChoice::Roughness(k) => PriorSpec::roughness(k, n_regressors, horizon),
        }
    }
}

impl FromStr for PriorChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "flat" {
            return Ok(PriorChoice::Flat);
        }
        match s.strip_prefix("rp:") {
            Some(k) => match k.parse::<f64>() {
                Ok(k) if k > 0.0 && k.is_finite() => Ok(PriorChoice::Roughness(k)),
                _ => Err(format!("bad smoothness scale '{k}'")),
            },
            None => Err(format!("unknown prior '{s}' (flat or rp:KAPPA)")),
        }
    }
}

impl fmt::Display for PriorChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PriorChoice::Flat => write!(f, "flat"),
            PriorChoice::Roughness(k) => write!(f, "rp:{k:?}"),
        }
    }
}

impl TryFrom<String> for PriorChoice {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<PriorChoice> for String {
    fn from(c: PriorChoice) -> String {
        c.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpecArg {
    Level,
    Ld,
}

impl From<SpecArg> for SpecKind {
    fn from(s: SpecArg) -> SpecKind {
        match s {
            SpecArg::Level => SpecKind::Level,
            SpecArg::Ld => SpecKind::LongDifferenced,
        }
    }
}

impl FromStr for SpecArg {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        <SpecArg as ValueEnum>::from_str(s, true)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyArg {
    Lte,
    Pseudo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerArg {
    Gess,
    Ags,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn covariance_strings_round_trip() {
        for s in ["standard", "nw", "nw:12"] {
            assert_eq!(s.parse::<CovChoice>().unwrap().to_string(), s);
        }
        assert!("nw:x".parse::<CovChoice>().is_err());
        assert_eq!(CovChoice::NeweyWest(None).resolve(500), MomentCovKind::NeweyWest { bandwidth: 29 });
    }

    #[test]
    fn prior_strings_round_trip() {
        assert_eq!("rp:100".parse::<PriorChoice>().unwrap(), PriorChoice::Roughness(100.0));
        assert_eq!(PriorChoice::Roughness(100.0).to_string(), "rp:100.0");
        assert!("rp:-1".parse::<PriorChoice>().is_err());
        assert!("gauss".parse::<PriorChoice>().is_err());
    }
}
