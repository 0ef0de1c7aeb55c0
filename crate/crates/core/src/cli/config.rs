//! Run configuration: a TOML tree with `[model]`, `[grid]`, `[scheme]`,
//! `[initial.p0]`, `[initial.c0]` and `[output]` tables.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::{FieldKind, PhaseField, SpatialField};
use crate::kernels::RhoSpec;
use crate::picard::{SchemeSetup, SchemeVariant};
use crate::{GridSpec, ModelParams};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Seeds the test-function bank of the weak-form diagnostic.
    #[serde(default)]
    pub seed: u64,
    pub model: ModelParams,
    pub grid: GridSpec,
    #[serde(default)]
    pub scheme: SchemeOptions,
    pub initial: InitialData,
    #[serde(default)]
    pub output: OutputOptions,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SchemeOptions {
    pub variant: SchemeVariant,
    pub max_iter: usize,
    pub tol: f64,
    /// Weight exponent of the entry hypotheses; `dim + 2` when absent.
    pub beta: Option<f64>,
    /// Moment exponent for raw-flux runs.
    pub beta2: f64,
    pub c_background: f64,
    pub rho: Option<RhoSpec>,
}

impl Default for SchemeOptions {
    fn default() -> Self {
        SchemeOptions {
            variant: SchemeVariant::A,
            max_iter: 25,
            tol: 1e-6,
            beta: None,
            beta2: 4.0,
            c_background: 0.0,
            rho: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct InitialData {
    pub p0: DensityShape,
    pub c0: TafShape,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DensityShape {
    Zero,
    Gaussian {
        amplitude: f64,
        x_center: Vec<f64>,
        v_center: Vec<f64>,
        x_width: f64,
        v_width: f64,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum TafShape {
    Constant {
        value: f64,
    },
    Gaussian {
        amplitude: f64,
        center: Vec<f64>,
        width: f64,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct OutputOptions {
    /// Steps between CSV snapshots; `nt/10` when absent.
    pub snapshots: Option<usize>,
    pub png: bool,
    pub binary: bool,
}

impl Default for OutputOptions {
    fn default() -> Self {
        OutputOptions {
            snapshots: None,
            png: true,
            binary: true,
        }
    }
}

fn config_err(path: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("{path}: {msg}"))
}

/// Parses and validates; errors carry the dotted path of the offending field.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let de = toml::Deserializer::new(text);
    let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let msg = e.inner().message().to_string();
        // serde reports a missing key against its parent table
        if let Some(field) = msg
            .strip_prefix("missing field `")
            .and_then(|s| s.strip_suffix('`'))
        {
            let full = if path == "." {
                field.to_string()
            } else {
                format!("{path}.{field}")
            };
            return config_err(&full, "missing required field");
        }
        config_err(&path, msg)
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

fn requalify(section: &str, e: Error) -> Error {
    match e {
        Error::Param { field, reason } => config_err(&format!("{section}.{field}"), reason),
        other => other,
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate().map_err(|e| requalify("model", e))?;
        self.grid.validate().map_err(|e| requalify("grid", e))?;
        let n = self.model.dim;
        let s = &self.scheme;
        if !(s.tol.is_finite() && s.tol > 0.0) {
            return Err(config_err("scheme.tol", "must be > 0"));
        }
        if s.max_iter < 2 {
            return Err(config_err("scheme.max_iter", "must be >= 2"));
        }
        if !(s.c_background.is_finite() && s.c_background >= 0.0) {
            return Err(config_err("scheme.c_background", "must be >= 0"));
        }
        if let Some(b) = s.beta {
            if !(b > n as f64) {
                return Err(config_err("scheme.beta", format!("must exceed dim = {n}")));
            }
        }
        match &self.initial.p0 {
            DensityShape::Zero => {}
            DensityShape::Gaussian {
                amplitude,
                x_center,
                v_center,
                x_width,
                v_width,
            } => {
                if !(amplitude.is_finite() && *amplitude >= 0.0) {
                    return Err(config_err("initial.p0.amplitude", "must be >= 0"));
                }
                for (name, c) in [("x_center", x_center), ("v_center", v_center)] {
                    if c.len() != n {
                        return Err(config_err(
                            &format!("initial.p0.{name}"),
                            format!("needs {n} entries"),
                        ));
                    }
                }
                for (name, w) in [("x_width", x_width), ("v_width", v_width)] {
                    if !(w.is_finite() && *w > 0.0) {
                        return Err(config_err(&format!("initial.p0.{name}"), "must be > 0"));
                    }
                }
            }
        }
        match &self.initial.c0 {
            TafShape::Constant { value } => {
                if !(value.is_finite() && *value >= 0.0) {
                    return Err(config_err("initial.c0.value", "must be >= 0"));
                }
            }
            TafShape::Gaussian {
                amplitude,
                center,
                width,
            } => {
                if !(amplitude.is_finite() && *amplitude >= 0.0) {
                    return Err(config_err("initial.c0.amplitude", "must be >= 0"));
                }
                if center.len() != n {
                    return Err(config_err(
                        "initial.c0.center",
                        format!("needs {n} entries"),
                    ));
                }
                if !(width.is_finite() && *width > 0.0) {
                    return Err(config_err("initial.c0.width", "must be > 0"));
                }
            }
        }
        if self.output.snapshots == Some(0) {
            return Err(config_err("output.snapshots", "must be >= 1"));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, independent of file formatting.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        format!("{:x}", Sha256::digest(&bytes))
    }

    pub fn setup(&self) -> SchemeSetup {
        let mut s = SchemeSetup::new(self.model, self.grid);
        s.variant = self.scheme.variant;
        s.max_iter = self.scheme.max_iter;
        s.tol = self.scheme.tol;
        s.c_background = self.scheme.c_background;
        if let Some(b) = self.scheme.beta {
            s.beta = b;
        }
        if let Some(r) = self.scheme.rho {
            s.rho = r;
        }
        s
    }

    pub fn snapshot_every(&self) -> usize {
        self.output.snapshots.unwrap_or((self.grid.nt / 10).max(1))
    }

    pub fn initial_fields(&self) -> (PhaseField, SpatialField) {
        let g = crate::PhaseGrid::new(self.model.dim, &self.grid);
        let p0 = match &self.initial.p0 {
            DensityShape::Zero => PhaseField::zeros(g),
            DensityShape::Gaussian {
                amplitude,
                x_center,
                v_center,
                x_width,
                v_width,
            } => PhaseField::from_fn(g, |x, v| {
                let rx: f64 = x.iter().zip(x_center).map(|(a, b)| (a - b).powi(2)).sum();
                let rv: f64 = v.iter().zip(v_center).map(|(a, b)| (a - b).powi(2)).sum();
                amplitude * (-rx / (2.0 * x_width * x_width) - rv / (2.0 * v_width * v_width)).exp()
            }),
        };
        let c0 = match &self.initial.c0 {
            TafShape::Constant { value } => SpatialField::constant(g.x, FieldKind::Taf, *value),
            TafShape::Gaussian {
                amplitude,
                center,
                width,
            } => SpatialField::from_fn(g.x, FieldKind::Taf, |x| {
                let r: f64 = x.iter().zip(center).map(|(a, b)| (a - b).powi(2)).sum();
                amplitude * (-r / (2.0 * width * width)).exp()
            }),
        };
        (p0, c0)
    }

    /// Sets a numeric `model` or `grid` field by name.
    pub fn with_param(&self, name: &str, value: f64) -> Result<RunConfig> {
        let mut tree = serde_json::to_value(self).expect("config serializes");
        let section = ["model", "grid"]
            .into_iter()
            .find(|s| tree[*s].get(name).is_some())
            .ok_or_else(|| Error::Argument(format!("{name} is not a model or grid field")))?;
        let slot = &mut tree[section][name];
        *slot = if slot.is_u64() {
            if value < 0.0 || value.fract() != 0.0 {
                return Err(Error::Argument(format!(
                    "{section}.{name} needs a nonnegative integer, got {value}"
                )));
            }
            serde_json::json!(value as u64)
        } else if slot.is_f64() {
            serde_json::json!(value)
        } else {
            return Err(Error::Argument(format!("{section}.{name} is not numeric")));
        };
        let cfg: RunConfig =
            serde_json::from_value(tree).map_err(|e| Error::Argument(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// A small N = 1 configuration used by tests and as a template.
pub const EXAMPLE_CONFIG: &str = r#"seed = 7

[model]
gamma = 1.0
k = 1.0
sigma = 0.5
d = 0.5
eta = 1.0
alpha1 = 1.0
c_r = 1.0
d1 = 0.5
gamma1 = 1.0
q1 = 1.0
delta = 1.0
v_max = 2.0
dim = 1

[grid]
x_extent = 4.0
v_extent = 4.0
nx = 32
nv = 32
t_final = 0.3
nt = 20

[initial.p0]
kind = "gaussian"
amplitude = 1.0
x_center = [0.0]
v_center = [0.5]
x_width = 0.5
v_width = 0.5

[initial.c0]
kind = "gaussian"
amplitude = 0.8
center = [1.5]
width = 0.7
"#;
