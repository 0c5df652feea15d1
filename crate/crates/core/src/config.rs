//! Run configuration shared by the library entry points and the CLI.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::diffusion::GeodesicSource;
use crate::error::{Error, Result};

/// A kernel scale that is either fixed or chosen by the median heuristics.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "ScaleRepr", into = "ScaleRepr")]
pub enum Scale {
    #[default]
    Auto,
    Value(f64),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ScaleRepr {
    Value(f64),
    Keyword(AutoKeyword),
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum AutoKeyword {
    Auto,
}

impl From<ScaleRepr> for Scale {
    fn from(r: ScaleRepr) -> Self {
        match r {
            ScaleRepr::Value(v) => Scale::Value(v),
            ScaleRepr::Keyword(AutoKeyword::Auto) => Scale::Auto,
        }
    }
}

impl From<Scale> for ScaleRepr {
    fn from(s: Scale) -> Self {
        match s {
            Scale::Value(v) => ScaleRepr::Value(v),
            Scale::Auto => ScaleRepr::Keyword(AutoKeyword::Auto),
        }
    }
}

impl FromStr for Scale {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Scale::Auto);
        }
        s.parse::<f64>()
            .map(Scale::Value)
            .map_err(|_| format!("expected \"auto\" or a number, got {s:?}"))
    }
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scale::Auto => f.write_str("auto"),
            Scale::Value(v) => write!(f, "{v}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitVariant {
    /// Least-squares minimizer of sum (1 + A r^2 - Vol_nor)^2.
    #[default]
    Ols,
    /// A = mean(Vol_nor) / (1 + mean(r^2)).
    #[serde(alias = "paper")]
    PaperFormula,
}

impl FitVariant {
    pub fn other(self) -> Self {
        match self {
            FitVariant::Ols => FitVariant::PaperFormula,
            FitVariant::PaperFormula => FitVariant::Ols,
        }
    }
}

/// Which dimension normalizes the ball volumes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DimMode {
    Local,
    Global,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleMode {
    #[default]
    Exact,
    Shot,
}

/// Simulator stages that can be perturbed to exercise the verifier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    KernelGram,
    GeodesicDiagonal,
    Neighbors,
    CenteredGram,
    LocalDimension,
    CurvatureSums,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::KernelGram,
        Stage::GeodesicDiagonal,
        Stage::Neighbors,
        Stage::CenteredGram,
        Stage::LocalDimension,
        Stage::CurvatureSums,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::KernelGram => "kernel_gram",
            Stage::GeodesicDiagonal => "geodesic_diagonal",
            Stage::Neighbors => "neighbors",
            Stage::CenteredGram => "centered_gram",
            Stage::LocalDimension => "local_dimension",
            Stage::CurvatureSums => "curvature_sums",
        }
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Stage::ALL.iter().map(|st| st.name()).collect();
                format!("unknown stage {s:?}; expected one of {}", names.join(", "))
            })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QsimConfig {
    pub mode: SampleMode,
    /// Standard deviation of simulated shot noise in shot mode.
    pub shot_eps: f64,
    /// Chebyshev degree; `None` derives it from `poly_eps`.
    pub degree: Option<usize>,
    pub poly_eps: f64,
    /// Residual tolerance of the power method.
    pub power_tol: f64,
    pub max_iters: usize,
    /// Relative error charged per amplitude amplification.
    pub amplification_tol: f64,
    /// Maximum relative deviation from an oracle before a stage fails.
    pub stage_tol: f64,
    pub inject_fault: Option<Stage>,
}

impl Default for QsimConfig {
    fn default() -> Self {
        Self {
            mode: SampleMode::Exact,
            shot_eps: 0.01,
            degree: None,
            poly_eps: 1e-14,
            power_tol: 1e-13,
            max_iters: 1_000_000,
            amplification_tol: 1e-10,
            stage_tol: 1e-6,
            inject_fault: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub sigma2: Scale,
    pub t: f64,
    pub nn: usize,
    pub tau: f64,
    pub h: Scale,
    pub fit_variant: FitVariant,
    /// `None` means global for whole-cloud runs and local for single points.
    pub dim_mode: Option<DimMode>,
    pub r_min: Option<f64>,
    pub r_max: Option<f64>,
    pub geodesic_source: GeodesicSource,
    pub seed: u64,
    pub qsim: QsimConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            sigma2: Scale::Auto,
            t: 1.0,
            nn: 20,
            tau: 0.95,
            h: Scale::Auto,
            fit_variant: FitVariant::Ols,
            dim_mode: None,
            r_min: None,
            r_max: None,
            geodesic_source: GeodesicSource::PSpectrum,
            seed: 0,
            qsim: QsimConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Parameter(m));
        for (name, s) in [("sigma2", self.sigma2), ("h", self.h)] {
            if let Scale::Value(v) = s {
                if !(v > 0.0 && v.is_finite()) {
                    return bad(format!("{name} must be > 0, got {v}"));
                }
            }
        }
        if !(self.t > 0.0 && self.t.is_finite()) {
            return bad(format!("t must be > 0, got {}", self.t));
        }
        if self.nn < 2 {
            return bad(format!("nn must be >= 2, got {}", self.nn));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return bad(format!("tau must lie in (0, 1), got {}", self.tau));
        }
        for (name, r) in [("r_min", self.r_min), ("r_max", self.r_max)] {
            if let Some(v) = r {
                if !(v >= 0.0 && v.is_finite()) {
                    return bad(format!("{name} must be >= 0, got {v}"));
                }
            }
        }
        if let (Some(lo), Some(hi)) = (self.r_min, self.r_max) {
            if lo > hi {
                return bad(format!("r_min {lo} exceeds r_max {hi}"));
            }
        }
        let q = &self.qsim;
        if !(q.shot_eps > 0.0 && q.shot_eps < 1.0) {
            return bad(format!("shot_eps must lie in (0, 1), got {}", q.shot_eps));
        }
        if !(q.poly_eps > 0.0 && q.poly_eps < 0.1) {
            return bad(format!("poly_eps must lie in (0, 0.1), got {}", q.poly_eps));
        }
        if !(q.power_tol > 0.0 && q.power_tol < 1.0) {
            return bad(format!("power_tol must lie in (0, 1), got {}", q.power_tol));
        }
        if q.max_iters == 0 {
            return bad("max_iters must be positive".into());
        }
        if !(q.amplification_tol >= 0.0 && q.stage_tol > 0.0) {
            return bad("tolerances must be positive".into());
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: RunConfig = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scale_serializes_as_keyword_or_number() {
        assert_eq!(serde_json::to_string(&Scale::Auto).unwrap(), "\"auto\"");
        assert_eq!(serde_json::to_string(&Scale::Value(0.5)).unwrap(), "0.5");
        assert_eq!(serde_json::from_str::<Scale>("2.5").unwrap(), Scale::Value(2.5));
        assert!(serde_json::from_str::<Scale>("\"median\"").is_err());
        assert_eq!("auto".parse::<Scale>().unwrap(), Scale::Auto);
    }

    #[test]
    fn config_round_trips() {
        let c = RunConfig {
            sigma2: Scale::Value(0.25),
            dim_mode: Some(DimMode::Local),
            fit_variant: FitVariant::PaperFormula,
            qsim: QsimConfig {
                inject_fault: Some(Stage::Neighbors),
                ..QsimConfig::default()
            },
            ..RunConfig::default()
        };
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(RunConfig::from_json(&text).unwrap(), c);
        let partial = RunConfig::from_json(r#"{"nn": 12, "fit_variant": "paper"}"#).unwrap();
        assert_eq!(partial.nn, 12);
        assert_eq!(partial.fit_variant, FitVariant::PaperFormula);
        assert_eq!(partial.tau, 0.95);
    }

    #[test]
    fn out_of_range_values_rejected() {
        assert!(RunConfig::from_json(r#"{"tau": 1.5}"#).is_err());
        assert!(RunConfig::from_json(r#"{"nn": 1}"#).is_err());
        assert!(RunConfig::from_json(r#"{"sigma2": -1}"#).is_err());
        assert!(RunConfig::from_json(r#"{"bogus": 1}"#).is_err());
    }
}
