//! The JSON run configuration for `twig analyze`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};

use twig_core::integrate::{Dopri5, Observation};
use twig_core::model::{build_model, registry, ModelDocument, ModelSystem};
use twig_core::twig::{RecenterMode, SweepConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelChoice {
    Registry(String),
    Inline(ModelDocument),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub t_min: f64,
    pub t_max: f64,
    pub count: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        let d = SweepConfig::default();
        Self {
            t_min: d.t_min,
            t_max: d.t_max,
            count: d.count,
        }
    }
}

/// `true`/`false`, or one of `"none"`, `"states"`, `"full"`. `true` means full.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RecenterSetting {
    Flag(bool),
    Mode(RecenterMode),
}

impl Default for RecenterSetting {
    fn default() -> Self {
        Self::Flag(false)
    }
}

impl RecenterSetting {
    pub fn mode(self) -> RecenterMode {
        match self {
            Self::Flag(false) => RecenterMode::None,
            Self::Flag(true) => RecenterMode::Full,
            Self::Mode(m) => m,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NearBifurcation {
    pub param: String,
    pub offsets: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Classification {
    pub tail_fraction: f64,
    pub slope_tol: f64,
}

impl Default for Classification {
    fn default() -> Self {
        Self {
            tail_fraction: 0.25,
            slope_tol: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObserveSetting {
    /// Planar projection for polar models, every component otherwise.
    #[default]
    Default,
    /// Every raw state component, including an unwrapped angle.
    Components,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSection {
    pub rtol: f64,
    pub atol: f64,
}

fn default_n_samples() -> usize {
    50
}

fn default_outputs() -> PathBuf {
    PathBuf::from("twig-out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelChoice,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default = "default_n_samples")]
    pub n_samples: usize,
    #[serde(default)]
    pub recenter: RecenterSetting,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub near_bifurcation: Option<NearBifurcation>,
    #[serde(default)]
    pub classification: Classification,
    #[serde(default = "default_outputs")]
    pub outputs: PathBuf,
    /// Reserved for randomized tie-breaking; the analysis itself is
    /// deterministic.
    #[serde(default)]
    pub seed: u64,
    /// Number of correction terms appended to registry models.
    #[serde(default)]
    pub order: usize,
    #[serde(default)]
    pub observe: ObserveSetting,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub integrator: Option<IntegratorSection>,
}

/// A validated configuration with its model built.
pub struct Prepared {
    pub config: RunConfig,
    pub model: ModelSystem,
    pub params: Vec<f64>,
    pub sweep: SweepConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn prepare(self) -> Result<Prepared> {
        let s = &self.sweep;
        ensure!(
            s.t_min > 0.0 && s.t_min.is_finite() && s.t_max.is_finite(),
            "sweep.t_min must be positive and finite"
        );
        ensure!(
            s.t_min < s.t_max,
            "sweep.t_min ({}) must be below sweep.t_max ({})",
            s.t_min,
            s.t_max
        );
        ensure!(
            s.count >= 8,
            "sweep.count must be at least 8, got {}",
            s.count
        );
        ensure!(
            self.n_samples >= 4,
            "n_samples must be at least 4, got {}",
            self.n_samples
        );
        let c = &self.classification;
        ensure!(
            c.tail_fraction > 0.0 && c.tail_fraction <= 1.0,
            "classification.tail_fraction must lie in (0, 1]"
        );
        ensure!(
            c.slope_tol > 0.0,
            "classification.slope_tol must be positive"
        );

        let mut model = match &self.model {
            ModelChoice::Registry(name) => {
                if !registry().iter().any(|m| m.name == name) {
                    let names: Vec<_> = registry().iter().map(|m| m.name).collect();
                    bail!("unknown model '{name}'; available: {}", names.join(", "));
                }
                build_model(name, self.order)?
            }
            ModelChoice::Inline(doc) => {
                ensure!(self.order == 0, "order applies to registry models only");
                doc.build("custom")?
            }
        };
        let overrides: Vec<(&str, f64)> =
            self.params.iter().map(|(k, &v)| (k.as_str(), v)).collect();
        let params = model
            .params_with(&overrides)
            .with_context(|| format!("parameters are {}", model.param_names().join(", ")))?;
        if let Some(nb) = &self.near_bifurcation {
            ensure!(!nb.offsets.is_empty(), "near_bifurcation.offsets is empty");
            ensure!(
                nb.offsets.iter().all(|o| o.is_finite()),
                "near_bifurcation.offsets must be finite"
            );
            let index = model.param_index(&nb.param).with_context(|| {
                format!(
                    "near_bifurcation.param; parameters are {}",
                    model.param_names().join(", ")
                )
            })?;
            model = model.with_bifurcation_param(index);
        }

        let mut integrator = Dopri5::default();
        if let Some(i) = self.integrator {
            ensure!(
                i.rtol > 0.0 && i.atol > 0.0,
                "integrator tolerances must be positive"
            );
            integrator.rtol = i.rtol;
            integrator.atol = i.atol;
        }
        let sweep = SweepConfig {
            t_min: s.t_min,
            t_max: s.t_max,
            count: s.count,
            n_samples: self.n_samples,
            recenter: self.recenter.mode(),
            observation: match self.observe {
                ObserveSetting::Default => None,
                ObserveSetting::Components => Some(Observation::all_components(&model)),
            },
            integrator,
            fixed_point_guess: None,
        };
        Ok(Prepared {
            config: self,
            model,
            params,
            sweep,
        })
    }
}
