//! JSON problem configuration shared by the command-line tools.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::assembly::ExteriorData;
use crate::error::{NonlocalError, Result};
use crate::expr::Expr;
use crate::kernels::Kernel;
use crate::mesh::Domain;
use crate::quadrature::QuadConfig;
use crate::solve::{EigenMethod, EigenOptions};
use crate::verify::{CheckKind, SuiteConfig, SuiteParams};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    /// Cells along the longest side of the bounding box.
    pub n: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EquationConfig {
    pub lambda: f64,
    pub convolution: Option<Kernel>,
    pub rhs: Expr,
    pub exterior: Option<ExteriorData>,
}

impl Default for EquationConfig {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            convolution: None,
            rhs: Expr::constant(1.0),
            exterior: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub eigen_tol: f64,
    pub eigen_method: EigenMethod,
    pub linear_tol: f64,
    pub count: usize,
    /// Margin of the subdomain on which positivity is reported.
    pub positivity_margin: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            eigen_tol: 1e-10,
            eigen_method: EigenMethod::Auto,
            linear_tol: 1e-12,
            count: 4,
            positivity_margin: 0.25,
        }
    }
}

impl SolverConfig {
    pub fn eigen_options(&self) -> EigenOptions {
        EigenOptions {
            tol: self.eigen_tol,
            method: self.eigen_method,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerificationConfig {
    pub checks: Vec<CheckKind>,
    pub params: SuiteParams,
}

impl Default for VerificationConfig {
    fn default() -> Self {
        Self {
            checks: CheckKind::ALL.to_vec(),
            params: SuiteParams::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub domain: Domain,
    pub kernel: Kernel,
    pub mesh: MeshConfig,
    #[serde(default)]
    pub equation: EquationConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub quadrature: QuadConfig,
    #[serde(default)]
    pub verification: VerificationConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

fn check_expr(name: &str, e: &Expr, dim: usize) -> Result<()> {
    if e.dims_used() > dim {
        return Err(NonlocalError::config(format!(
            "{name} expression '{}' uses coordinates beyond dimension {dim}",
            e.source()
        )));
    }
    Ok(())
}

impl ProblemConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| NonlocalError::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| NonlocalError::config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Validates every descriptor before any computation starts.
    pub fn validate(&self) -> Result<()> {
        let cfg_err = |e: NonlocalError| NonlocalError::config(e.to_string());
        self.domain.validate().map_err(cfg_err)?;
        self.kernel.validate().map_err(cfg_err)?;
        let dim = self.domain.dim();
        if self.kernel.dim() != dim {
            return Err(NonlocalError::config(format!(
                "kernel dimension {} differs from domain dimension {dim}",
                self.kernel.dim()
            )));
        }
        if self.mesh.n == 0 {
            return Err(NonlocalError::config("mesh.n must be positive"));
        }
        if let Some(h) = &self.equation.convolution {
            h.validate().map_err(cfg_err)?;
            if h.dim() != dim {
                return Err(NonlocalError::config("convolution kernel dimension differs from the domain"));
            }
        }
        check_expr("rhs", &self.equation.rhs, dim)?;
        if let Some(g) = &self.equation.exterior {
            check_expr("exterior", &g.expr, dim)?;
            if !(g.radius >= 0.0 && g.radius.is_finite()) {
                return Err(NonlocalError::config("exterior radius must be finite and nonnegative"));
            }
        }
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(NonlocalError::config(format!("{name} must be positive, got {v}")))
            }
        };
        positive("solver.eigen_tol", self.solver.eigen_tol)?;
        positive("solver.linear_tol", self.solver.linear_tol)?;
        positive("quadrature.rel_tol", self.quadrature.rel_tol)?;
        if !self.equation.lambda.is_finite() {
            return Err(NonlocalError::config("equation.lambda must be finite"));
        }
        Ok(())
    }

    pub fn suite(&self) -> SuiteConfig {
        SuiteConfig {
            domain: self.domain.clone(),
            kernel: self.kernel.clone(),
            n: self.mesh.n,
            quad: self.quadrature,
            seed: self.seed,
            checks: self.verification.checks.clone(),
            params: self.verification.params.clone(),
            rhs: Some(self.equation.rhs.clone()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "domain": {"shape": "interval", "a": -1, "b": 1},
        "kernel": {"family": "log_laplacian", "dim": 1, "params": {}},
        "mesh": {"n": 32}
    }"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = ProblemConfig::from_json(MINIMAL).unwrap();
        assert_eq!(cfg.equation.lambda, 0.0);
        assert_eq!(cfg.equation.rhs.eval(&[0.3]), 1.0);
        assert_eq!(cfg.verification.checks.len(), CheckKind::ALL.len());
        assert_eq!(cfg.output, PathBuf::from("out"));
    }

    #[test]
    fn mismatched_dimensions_are_rejected() {
        let bad = MINIMAL.replace("\"dim\": 1", "\"dim\": 2");
        assert!(matches!(ProblemConfig::from_json(&bad), Err(NonlocalError::Config(_))));
        let bad = MINIMAL.replace("\"n\": 32", "\"n\": 32, \"extra\": 1");
        assert!(ProblemConfig::from_json(&bad).is_err());
        let bad = MINIMAL.replace("}\n    }", "},\n \"equation\": {\"rhs\": \"y\"}\n    }");
        assert!(ProblemConfig::from_json(&bad).is_err(), "{bad}");
    }
}
