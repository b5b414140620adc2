//! TOML run configuration.

use serde::{Deserialize, Serialize};

use crate::bw::BwSettings;
use crate::controversy::PipelineSettings;
use crate::error::{Error, Result};
use crate::model::{MatrixSpec, ModelConfig};
use crate::operators::ModelOperators;
use crate::propagators::IntegrationSettings;

/// Everything a run needs.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub settings: PipelineSettings,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    spectrum: Option<RawSpectrum>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    interaction: Option<RawInteraction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    integration: Option<RawIntegration>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bw: Option<RawBw>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    solve: Option<RawSolve>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpectrum {
    positive_energies: Option<Vec<f64>>,
    negative_energies: Option<Vec<f64>>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInteraction {
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    coulomb: Option<RawMatrix>,
    #[serde(skip_serializing_if = "Option::is_none")]
    delta: Option<RawMatrix>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMatrix {
    #[serde(skip_serializing_if = "Option::is_none")]
    scale: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    preset: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    matrix: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawIntegration {
    #[serde(skip_serializing_if = "Option::is_none")]
    eta_sequence: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    quadrature_points: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    cutoff_factor: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    j_order: Option<usize>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBw {
    #[serde(skip_serializing_if = "Option::is_none")]
    order: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_iter: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tol: Option<f64>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolve {
    #[serde(skip_serializing_if = "Option::is_none")]
    state_index: Option<usize>,
}

fn matrix_spec(raw: &RawMatrix, key: &str) -> Result<Option<MatrixSpec>> {
    match (&raw.preset, &raw.matrix) {
        (Some(_), Some(_)) => Err(Error::config(format!(
            "interaction.{key}: give either preset or matrix, not both"
        ))),
        (Some(p), None) => MatrixSpec::from_preset(p)
            .map(Some)
            .map_err(|e| Error::config(format!("interaction.{key}.preset: {e}"))),
        (None, Some(m)) => Ok(Some(MatrixSpec::Explicit(m.clone()))),
        (None, None) => Ok(None),
    }
}

impl RawConfig {
    fn into_run(self) -> Result<RunConfig> {
        let mut model = ModelConfig::default();
        let mut integration = IntegrationSettings::default();
        let mut bw = BwSettings::default();
        let mut state_index = 0;
        if let Some(s) = self.spectrum {
            if let Some(p) = s.positive_energies {
                model.positive_energies = p;
            }
            if let Some(n) = s.negative_energies {
                model.negative_energies = n;
            }
        }
        if let Some(i) = self.interaction {
            if let Some(seed) = i.seed {
                model.seed = seed;
            }
            if let Some(c) = i.coulomb {
                if let Some(s) = c.scale {
                    model.coulomb_scale = s;
                }
                if let Some(m) = matrix_spec(&c, "coulomb")? {
                    model.coulomb_matrix = m;
                }
            }
            if let Some(d) = i.delta {
                if let Some(s) = d.scale {
                    model.delta_scale = s;
                }
                if let Some(m) = matrix_spec(&d, "delta")? {
                    model.delta_matrix = m;
                }
            }
        }
        if let Some(g) = self.integration {
            if let Some(v) = g.eta_sequence {
                integration.eta_sequence = v;
            }
            if let Some(v) = g.quadrature_points {
                integration.quadrature_points = v;
            }
            if let Some(v) = g.cutoff_factor {
                integration.cutoff_factor = v;
            }
            if let Some(v) = g.j_order {
                integration.j_order = v;
            }
        }
        if let Some(b) = self.bw {
            if let Some(v) = b.order {
                bw.order = v;
            }
            if let Some(v) = b.max_iter {
                bw.max_iter = v;
            }
            bw.tol = b.tol;
        }
        if let Some(s) = self.solve {
            if let Some(v) = s.state_index {
                state_index = v;
            }
        }
        let run = RunConfig {
            model,
            settings: PipelineSettings {
                integration,
                bw,
                state_index,
            },
        };
        run.validate()?;
        Ok(run)
    }
}

fn raw_matrix(scale: f64, spec: &MatrixSpec) -> RawMatrix {
    let (preset, matrix) = match spec {
        MatrixSpec::Explicit(m) => (None, Some(m.clone())),
        other => (other.preset_name().map(str::to_string), None),
    };
    RawMatrix {
        scale: Some(scale),
        preset,
        matrix,
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.settings.validate()?;
        if self.model.seed > i64::MAX as u64 {
            return Err(Error::config("interaction.seed must fit in a signed 64-bit integer"));
        }
        // builds every operator, which also checks explicit matrices
        let ops = ModelOperators::build(&self.model).map_err(|e| match e {
            Error::Invalid(m) => Error::Config(m),
            other => other,
        })?;
        let pp = ops.basis.indices_with(crate::model::SignPattern::PlusPlus).len();
        if self.settings.state_index >= pp.max(1) {
            return Err(Error::config(format!(
                "solve.state_index {} out of range (++ block has {pp} states)",
                self.settings.state_index
            )));
        }
        Ok(())
    }

    /// Canonical TOML text; `parse(emit(c)) == c` for any config that passes
    /// [`RunConfig::validate`].
    pub fn emit(&self) -> String {
        let m = &self.model;
        let s = &self.settings;
        let raw = RawConfig {
            spectrum: Some(RawSpectrum {
                positive_energies: Some(m.positive_energies.clone()),
                negative_energies: Some(m.negative_energies.clone()),
            }),
            interaction: Some(RawInteraction {
                seed: Some(m.seed),
                coulomb: Some(raw_matrix(m.coulomb_scale, &m.coulomb_matrix)),
                delta: Some(raw_matrix(m.delta_scale, &m.delta_matrix)),
            }),
            integration: Some(RawIntegration {
                eta_sequence: Some(s.integration.eta_sequence.clone()),
                quadrature_points: Some(s.integration.quadrature_points),
                cutoff_factor: Some(s.integration.cutoff_factor),
                j_order: Some(s.integration.j_order),
            }),
            bw: Some(RawBw {
                order: Some(s.bw.order),
                max_iter: Some(s.bw.max_iter),
                tol: s.bw.tol,
            }),
            solve: Some(RawSolve {
                state_index: Some(s.state_index),
            }),
        };
        toml::to_string(&raw).expect("config is always representable as TOML")
    }
}

/// Parses and validates TOML text, filling defaults.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
    raw.into_run()
}

pub fn load_config(path: &std::path::Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}
