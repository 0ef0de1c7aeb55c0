//! Physical constants, grid specification and their validation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum FluxMode {
    /// Speed weighted by the Fermi cutoff `1/(1+exp(δ(|v|²−v_max²)))`.
    #[default]
    Cutoff,
    /// Plain speed weighting, no cutoff.
    Raw,
}

impl std::str::FromStr for FluxMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cutoff" => Ok(FluxMode::Cutoff),
            "raw" => Ok(FluxMode::Raw),
            other => Err(Error::param(
                "flux_mode",
                &format!("unknown mode {other:?}"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Anastomosis rate.
    pub gamma: f64,
    /// Friction.
    pub k: f64,
    /// Velocity diffusivity.
    pub sigma: f64,
    /// TAF diffusivity.
    pub d: f64,
    /// TAF consumption rate.
    pub eta: f64,
    /// Maximal branching rate.
    pub alpha1: f64,
    pub c_r: f64,
    /// Chemotactic strength.
    pub d1: f64,
    pub gamma1: f64,
    pub q1: f64,
    pub delta: f64,
    pub v_max: f64,
    pub dim: usize,
    #[serde(default)]
    pub flux_mode: FluxMode,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            gamma: 1.0,
            k: 1.0,
            sigma: 0.5,
            d: 0.5,
            eta: 1.0,
            alpha1: 1.0,
            c_r: 1.0,
            d1: 0.5,
            gamma1: 1.0,
            q1: 1.0,
            delta: 1.0,
            v_max: 2.0,
            dim: 1,
            flux_mode: FluxMode::Cutoff,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub x_extent: f64,
    pub v_extent: f64,
    pub nx: usize,
    pub nv: usize,
    pub t_final: f64,
    pub nt: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            x_extent: 4.0,
            v_extent: 4.0,
            nx: 64,
            nv: 64,
            t_final: 0.5,
            nt: 60,
        }
    }
}

impl GridSpec {
    pub fn dx(&self) -> f64 {
        2.0 * self.x_extent / self.nx as f64
    }

    pub fn dv(&self) -> f64 {
        2.0 * self.v_extent / self.nv as f64
    }

    pub fn dt(&self) -> f64 {
        self.t_final / self.nt as f64
    }

    /// `Δx² + Δv² + Δt`, the combined first/second order error scale.
    pub fn discretization_scale(&self) -> f64 {
        self.dx().powi(2) + self.dv().powi(2) + self.dt()
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if !(v.is_finite() && v > 0.0) {
        return Err(Error::param(name, "must be > 0"));
    }
    Ok(())
}

fn nonnegative(name: &str, v: f64) -> Result<()> {
    if !(v.is_finite() && v >= 0.0) {
        return Err(Error::param(name, "must be >= 0"));
    }
    Ok(())
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        positive("k", self.k)?;
        positive("sigma", self.sigma)?;
        positive("d", self.d)?;
        positive("c_r", self.c_r)?;
        positive("delta", self.delta)?;
        positive("v_max", self.v_max)?;
        // Switching a coupling off is how the decoupled reductions are run.
        nonnegative("gamma", self.gamma)?;
        nonnegative("eta", self.eta)?;
        nonnegative("alpha1", self.alpha1)?;
        nonnegative("d1", self.d1)?;
        nonnegative("gamma1", self.gamma1)?;
        nonnegative("q1", self.q1)?;
        if !(1..=3).contains(&self.dim) {
            return Err(Error::param("dim", "must be 1, 2 or 3"));
        }
        Ok(())
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        positive("x_extent", self.x_extent)?;
        positive("v_extent", self.v_extent)?;
        positive("t_final", self.t_final)?;
        for (name, n) in [("nx", self.nx), ("nv", self.nv)] {
            if n < 4 || n % 2 != 0 {
                return Err(Error::param(name, "must be even and >= 4"));
            }
        }
        if self.nt == 0 {
            return Err(Error::param("nt", "must be >= 1"));
        }
        Ok(())
    }
}

/// Checks both halves of a configuration and hands them back unchanged.
pub fn validate_params(p: ModelParams, g: GridSpec) -> Result<(ModelParams, GridSpec)> {
    p.validate()?;
    g.validate()?;
    Ok((p, g))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_pass() {
        let p = ModelParams {
            dim: 2,
            ..Default::default()
        };
        assert!(validate_params(p, GridSpec::default()).is_ok());
    }

    #[test]
    fn zero_sigma_named() {
        let p = ModelParams {
            sigma: 0.0,
            ..Default::default()
        };
        let err = validate_params(p, GridSpec::default()).unwrap_err();
        assert_eq!(err.to_string(), "sigma must be > 0");
    }

    #[test]
    fn dim_four_rejected() {
        let p = ModelParams {
            dim: 4,
            ..Default::default()
        };
        assert!(matches!(p.validate(), Err(Error::Param { ref field, .. }) if field == "dim"));
    }

    #[test]
    fn odd_grid_rejected() {
        let g = GridSpec {
            nx: 33,
            ..Default::default()
        };
        assert!(g.validate().is_err());
        let g = GridSpec {
            nv: 2,
            ..Default::default()
        };
        assert!(g.validate().is_err());
    }

    #[test]
    fn spacings() {
        let g = GridSpec {
            x_extent: 2.0,
            v_extent: 3.0,
            nx: 8,
            nv: 6,
            t_final: 1.0,
            nt: 4,
        };
        assert_eq!(g.dx(), 0.5);
        assert_eq!(g.dv(), 1.0);
        assert_eq!(g.dt(), 0.25);
    }
}
