//! TOML run configuration.
//!
//! ```toml
//! [domain]
//! a = 0.5
//! k = 3
//! family = "power"        # power | loglog | neglog | logpower
//! r = 2.0
//! b = 0.9
//! # c = 0.5               # logpower only
//!
//! [compute]
//! p = 2.0
//! n_min = 2
//! n_max = 10
//! axis = "y"              # x | y
//! method = "exact-eigen"  # exact-eigen | search | witness
//! seed = 0
//! budget = 2000
//! # x_lo = 0.0            # remez only: fixed truncation instead of 1/n^2
//!
//! [quad]
//! rel_tol = 1e-10
//! panels = 40
//! grading = 0.5
//!
//! [witness]
//! omega = "auto"          # or a number
//! sigma = 0.0
//!
//! [output]
//! directory = "out"
//! formats = ["csv", "json"]
//! ```

use std::path::Path;

use mlab_core::markov::Method;
use mlab_core::{Axis, CuspFunction, CuspidalDomain, QuadSpec};
use serde::Deserialize;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub domain: DomainBlock,
    #[serde(default)]
    pub compute: ComputeBlock,
    #[serde(default)]
    pub quad: QuadBlock,
    #[serde(default)]
    pub witness: WitnessBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Power,
    LogLog,
    NegLog,
    LogPower,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainBlock {
    pub a: f64,
    pub k: u32,
    pub family: Family,
    pub r: f64,
    pub b: f64,
    pub c: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AxisName {
    X,
    Y,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ComputeBlock {
    pub p: f64,
    pub n_min: usize,
    pub n_max: usize,
    pub axis: AxisName,
    pub method: Method,
    pub seed: u64,
    pub budget: usize,
    pub x_lo: Option<f64>,
}

impl Default for ComputeBlock {
    fn default() -> Self {
        Self {
            p: 2.0,
            n_min: 2,
            n_max: 10,
            axis: AxisName::Y,
            method: Method::ExactEigen,
            seed: 0,
            budget: 2_000,
            x_lo: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadBlock {
    pub rel_tol: f64,
    pub panels: usize,
    pub grading: f64,
}

impl Default for QuadBlock {
    fn default() -> Self {
        let q = QuadSpec::default();
        Self {
            rel_tol: q.rel_tol,
            panels: q.num_graded_panels,
            grading: q.grading_ratio,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum OmegaSetting {
    Value(f64),
    Keyword(String),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WitnessBlock {
    pub omega: OmegaSetting,
    pub sigma: f64,
}

impl Default for WitnessBlock {
    fn default() -> Self {
        Self {
            omega: OmegaSetting::Keyword("auto".into()),
            sigma: 0.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputBlock {
    pub directory: String,
    pub formats: Vec<String>,
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self {
            directory: "mlab-out".into(),
            formats: vec!["csv".into(), "json".into()],
        }
    }
}

fn field_error(path: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{path}: {msg}"))
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let cfg: Self =
            toml::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))?;
        cfg.check()?;
        Ok(cfg)
    }

    /// Preconditions of the numerical modules, reported by field path.
    fn check(&self) -> CliResult<()> {
        self.domain()?;
        let c = &self.compute;
        if !(c.p >= 1.0) || !c.p.is_finite() {
            return Err(field_error(
                "compute.p",
                format!("{} is outside [1, inf)", c.p),
            ));
        }
        if c.n_min > c.n_max {
            return Err(field_error(
                "compute.n_min",
                format!("{} exceeds compute.n_max = {}", c.n_min, c.n_max),
            ));
        }
        if c.budget == 0 {
            return Err(field_error("compute.budget", "must be at least 1"));
        }
        if c.method == Method::ExactEigen && c.p != 2.0 {
            return Err(field_error(
                "compute.method",
                format!("exact-eigen requires p = 2 (compute.p = {})", c.p),
            ));
        }
        if let Some(x) = c.x_lo {
            if !(0.0..1.0).contains(&x) {
                return Err(field_error(
                    "compute.x_lo",
                    format!("{x} is outside [0, 1)"),
                ));
            }
        }
        self.quad_spec()?;
        match &self.witness.omega {
            OmegaSetting::Value(w) if !(*w > 0.0) => {
                return Err(field_error(
                    "witness.omega",
                    format!("{w} is outside (0, inf)"),
                ))
            }
            OmegaSetting::Keyword(s) if s != "auto" => {
                return Err(field_error(
                    "witness.omega",
                    format!("expected \"auto\" or a number, got \"{s}\""),
                ))
            }
            _ => {}
        }
        if !self.witness.sigma.is_finite() || self.witness.sigma <= -1.0 {
            return Err(field_error(
                "witness.sigma",
                format!("{} is outside (-1, inf)", self.witness.sigma),
            ));
        }
        for f in &self.output.formats {
            if f != "csv" && f != "json" {
                return Err(field_error(
                    "output.formats",
                    format!("unknown format \"{f}\""),
                ));
            }
        }
        Ok(())
    }

    pub fn domain(&self) -> CliResult<CuspidalDomain> {
        let d = &self.domain;
        let f = match d.family {
            Family::Power => CuspFunction::Power { r: d.r, b: d.b },
            Family::LogLog => CuspFunction::LogLog { r: d.r, b: d.b },
            Family::NegLog => CuspFunction::NegLog { r: d.r, b: d.b },
            Family::LogPower => CuspFunction::LogPower {
                r: d.r,
                b: d.b,
                c: d.c
                    .ok_or_else(|| field_error("domain.c", "required for family \"logpower\""))?,
            },
        };
        if d.c.is_some() && d.family != Family::LogPower {
            return Err(field_error("domain.c", "only used by family \"logpower\""));
        }
        f.check_parameters().map_err(|e| field_error("domain", e))?;
        CuspidalDomain::new(d.a, d.k, f).map_err(|e| field_error("domain", e))
    }

    pub fn quad_spec(&self) -> CliResult<QuadSpec> {
        let q = QuadSpec {
            rel_tol: self.quad.rel_tol,
            num_graded_panels: self.quad.panels,
            grading_ratio: self.quad.grading,
            ..QuadSpec::default()
        };
        q.validate().map_err(|e| field_error("quad", e))?;
        Ok(q)
    }

    pub fn axis(&self) -> Axis {
        match self.compute.axis {
            AxisName::X => Axis::X,
            AxisName::Y => Axis::Y,
        }
    }

    pub fn wants(&self, format: &str) -> bool {
        self.output.formats.iter().any(|f| f == format)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const D1: &str = "[domain]\na = 0.5\nk = 3\nfamily = \"power\"\nr = 2.0\nb = 0.9\n";

    #[test]
    fn minimal_config_uses_defaults() {
        let c = RunConfig::parse(D1).unwrap();
        assert_eq!(c.compute.n_max, 10);
        assert_eq!(c.witness.omega, OmegaSetting::Keyword("auto".into()));
        assert!(c.wants("csv") && c.wants("json"));
    }

    #[test]
    fn errors_name_the_field() {
        let bad = format!("{D1}[compute]\np = 0.5\n");
        let e = RunConfig::parse(&bad).unwrap_err().to_string();
        assert!(e.starts_with("compute.p"), "{e}");
        let bad = D1.replace("b = 0.9", "b = 0.9\nc = 1.0");
        assert!(RunConfig::parse(&bad)
            .unwrap_err()
            .to_string()
            .starts_with("domain.c"));
        let bad = format!("{D1}[witness]\nomega = \"big\"\n");
        assert!(RunConfig::parse(&bad)
            .unwrap_err()
            .to_string()
            .starts_with("witness.omega"));
        let bad = format!("{D1}[compute]\nmethod = \"exact-eigen\"\np = 3.0\n");
        assert!(RunConfig::parse(&bad)
            .unwrap_err()
            .to_string()
            .starts_with("compute.method"));
        let bad = D1.replace("family = \"power\"", "family = \"loglog\"");
        assert!(RunConfig::parse(&bad)
            .unwrap_err()
            .to_string()
            .starts_with("domain"));
        let bad = format!("{D1}[quad]\npanels = 5\n");
        assert!(RunConfig::parse(&bad)
            .unwrap_err()
            .to_string()
            .starts_with("quad"));
    }

    #[test]
    fn unknown_keys_rejected() {
        let bad = format!("{D1}[compute]\nnmax = 4\n");
        let e = RunConfig::parse(&bad).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert!(e.to_string().contains("nmax"));
    }

    #[test]
    fn numeric_omega_accepted() {
        let c = RunConfig::parse(&format!("{D1}[witness]\nomega = 6\n")).unwrap();
        assert_eq!(c.witness.omega, OmegaSetting::Value(6.0));
    }
}
