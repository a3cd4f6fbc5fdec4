//! Run configuration documents.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use sqforms::exterior::Backend;
use sqforms::models::{ModelParams, MODEL_CATALOG};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Spectrum,
    Classify,
    Witten,
    Stationary,
    Morse,
    Simulate,
    Sweep,
}

/// Mesh given directly in the configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InlineMesh {
    Circle {
        n: usize,
        length: f64,
    },
    Torus {
        nx: usize,
        ny: usize,
        lx: f64,
        ly: f64,
    },
    Surface {
        vertices: Vec<[f64; 3]>,
        faces: Vec<[usize; 3]>,
    },
    /// Surface read from an OFF file, relative to the working directory.
    Off {
        path: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlinePotential {
    pub values: Vec<f64>,
    pub scale: f64,
}

/// Flow tables: vertex samples per direction plus an optional superpotential.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineFlow {
    #[serde(default)]
    pub drive: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub potential: Option<InlinePotential>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineModel {
    pub mesh: InlineMesh,
    #[serde(default)]
    pub flow: InlineFlow,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelChoice {
    Library(ModelParams),
    Inline { inline: InlineModel },
}

/// Thresholds relative to the spectral radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "default_tol")]
    pub tau_gamma: f64,
    #[serde(default = "default_tol")]
    pub tau_e: f64,
    #[serde(default = "default_tol")]
    pub tau0: f64,
    /// SUSY pairing tolerance.
    #[serde(default = "default_tol")]
    pub pairing: f64,
}

fn default_tol() -> f64 {
    sqforms::spectral::DEFAULT_RELATIVE_TOLERANCE
}

impl Default for Tolerances {
    fn default() -> Self {
        let t = default_tol();
        Self {
            tau_gamma: t,
            tau_e: t,
            tau0: t,
            pairing: t,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub epsilons: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub dt: f64,
    pub steps: usize,
    pub n_paths: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub record_every: usize,
    #[serde(default = "default_bins")]
    pub bins: usize,
    /// Autocorrelation fit window in records.
    #[serde(default)]
    pub min_lag: usize,
    #[serde(default = "default_max_lag")]
    pub max_lag: usize,
    /// Write raw float64 paths with a JSON layout sidecar.
    #[serde(default)]
    pub dump_paths: bool,
}

fn one() -> usize {
    1
}
fn default_bins() -> usize {
    64
}
fn default_max_lag() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MorseConfig {
    /// Strictly decreasing ε values for a tunneling-splitting scan.
    #[serde(default)]
    pub instanton_epsilons: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelChoice,
    /// Overrides the model's noise intensity.
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub backend: Backend,
    #[serde(default)]
    pub tolerances: Tolerances,
    pub tasks: Vec<Task>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub simulation: Option<SimulationConfig>,
    #[serde(default)]
    pub morse: Option<MorseConfig>,
    #[serde(default)]
    pub output_dir: Option<String>,
}

fn available_models() -> String {
    MODEL_CATALOG
        .iter()
        .map(|(n, p)| format!("{n}({p})"))
        .collect::<Vec<_>>()
        .join(", ")
}

impl RunConfig {
    /// Parses and validates a configuration document.
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let raw: Value = serde_json::from_str(text)
            .map_err(|e| CliError::Validation(format!("config is not valid JSON: {e}")))?;
        if let Some(name) = raw
            .get("model")
            .and_then(|m| m.get("name"))
            .and_then(Value::as_str)
        {
            if !MODEL_CATALOG.iter().any(|(n, _)| *n == name) {
                return Err(CliError::Validation(format!(
                    "unknown model `{name}`; available models: {}",
                    available_models()
                )));
            }
        }
        let cfg: RunConfig = serde_json::from_value(raw.clone()).map_err(|e| {
            // untagged enums hide the inner message, so re-parse the model for a precise one
            let detail = raw
                .get("model")
                .filter(|m| m.get("name").is_some())
                .and_then(|m| serde_json::from_value::<ModelParams>(m.clone()).err())
                .map(|me| format!("model: {me}"))
                .unwrap_or_else(|| e.to_string());
            CliError::Validation(format!("invalid config: {detail}"))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Validation(m));
        if self.tasks.is_empty() {
            return bad("at least one task is required".into());
        }
        let t = &self.tolerances;
        for (name, v) in [
            ("tau_gamma", t.tau_gamma),
            ("tau_e", t.tau_e),
            ("tau0", t.tau0),
            ("pairing", t.pairing),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return bad(format!("tolerance {name} must be positive, got {v}"));
            }
        }
        if let Some(e) = self.epsilon {
            if !(e >= 0.0) || !e.is_finite() {
                return bad(format!("epsilon must be finite and >= 0, got {e}"));
            }
        }
        if self.tasks.contains(&Task::Sweep) {
            let Some(s) = &self.sweep else {
                return bad("task `sweep` needs a `sweep.epsilons` list".into());
            };
            if s.epsilons.is_empty() || s.epsilons.iter().any(|e| !(*e >= 0.0)) {
                return bad("sweep epsilons must be a nonempty list of values >= 0".into());
            }
            if s.epsilons.windows(2).any(|w| !(w[1] < w[0])) {
                return bad("sweep epsilons must be strictly decreasing".into());
            }
            if !matches!(self.model, ModelChoice::Library(_)) {
                return bad("task `sweep` needs a library model".into());
            }
        }
        if self.tasks.contains(&Task::Simulate) {
            if self.simulation.is_none() {
                return bad("task `simulate` needs a `simulation` section".into());
            }
            if !matches!(self.model, ModelChoice::Library(_)) {
                return bad("task `simulate` needs a library model with a closed-form flow".into());
            }
        }
        Ok(())
    }

    /// Noise intensity after the override.
    pub fn effective_model(&self) -> ModelChoice {
        match (&self.model, self.epsilon) {
            (ModelChoice::Library(p), Some(e)) => ModelChoice::Library(p.with_epsilon(e)),
            (ModelChoice::Inline { inline }, Some(e)) => ModelChoice::Inline {
                inline: InlineModel {
                    epsilon: e,
                    ..inline.clone()
                },
            },
            (m, None) => m.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_library_model() {
        let c = RunConfig::from_json(
            r#"{"model": {"name": "constant_drive_circle", "a": 1, "epsilon": 0.2, "n": 64},
                "tasks": ["spectrum", "classify"], "backend": "fourier"}"#,
        )
        .unwrap();
        assert_eq!(c.backend, Backend::Fourier);
        assert_eq!(c.tasks, vec![Task::Spectrum, Task::Classify]);
        assert!(matches!(
            c.model,
            ModelChoice::Library(ModelParams::ConstantDriveCircle { n: 64, .. })
        ));
    }

    #[test]
    fn parses_inline_model() {
        let c = RunConfig::from_json(
            r#"{"model": {"inline": {"mesh": {"kind": "circle", "n": 8, "length": 6.283185307179586},
                "flow": {"drive": [[1,1,1,1,1,1,1,1]]}, "epsilon": 0.5}}, "tasks": ["witten"]}"#,
        )
        .unwrap();
        assert!(matches!(c.model, ModelChoice::Inline { .. }));
    }

    #[test]
    fn rejects_invalid_documents() {
        let cases = [
            r#"{"model": {"name": "constant_drive_circle", "a": 1, "epsilon": 0.2, "n": 64}, "tasks": []}"#,
            r#"{"model": {"name": "lorenz", "sigma": 10}, "tasks": ["spectrum"]}"#,
            r#"{"model": {"name": "constant_drive_circle", "a": 1, "epsilon": 0.2, "n": 64}, "tasks": ["sweep"],
                "sweep": {"epsilons": [0.1, 0.2]}}"#,
            r#"{"model": {"name": "constant_drive_circle", "a": 1, "epsilon": 0.2, "n": 64}, "tasks": ["witten"],
                "tolerances": {"tau0": 0}}"#,
            r#"{"model": {"name": "constant_drive_circle", "a": 1, "n": 64}, "tasks": ["witten"]}"#,
        ];
        for c in cases {
            assert!(
                matches!(RunConfig::from_json(c), Err(CliError::Validation(_))),
                "{c}"
            );
        }
        let unknown =
            RunConfig::from_json(r#"{"model": {"name": "lorenz"}, "tasks": ["spectrum"]}"#)
                .unwrap_err();
        assert!(unknown.to_string().contains("langevin_double_well_circle"));
    }
}
