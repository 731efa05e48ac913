use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use ccf::basedyn::BaseSystem;
use ccf::cocycle::{Cocycle, Generator, RealFn, UhParams};
use ccf::cohomology::CohomologyParams;
use ccf::projection::GapParams;
use ccf::rigidity::RigidityParams;
use ccf::schrodinger::{LabelParams, Potential, ScanParams, schrodinger_cocycle};

/// One experiment: base, cocycle or potential, and the parameters of every
/// pipeline. Only the section of the pipeline being run is read.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Must match the subcommand when present.
    #[serde(default)]
    pub pipeline: Option<String>,
    pub base: BaseSystem,
    /// Potential V of the Schrödinger cocycle A_{E,V}.
    #[serde(default)]
    pub potential: Option<RealFn>,
    /// A general cocycle; takes precedence over the potential.
    #[serde(default)]
    pub cocycle: Option<Generator>,
    #[serde(default)]
    pub energy: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub uh: UhParams,
    #[serde(default)]
    pub rigidity: RigidityParams,
    #[serde(default = "default_delta0")]
    pub delta0: f64,
    #[serde(default)]
    pub spectrum: SpectrumSection,
    #[serde(default)]
    pub reduce: ReduceSection,
    #[serde(default)]
    pub cohomology: CohomologySection,
    #[serde(default)]
    pub gap: GapSection,
    #[serde(default)]
    pub rotation: RotationSection,
}

fn default_delta0() -> f64 {
    0.05
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumSection {
    pub min: f64,
    pub max: f64,
    pub step: f64,
    pub scan: ScanParams,
    /// Decreasing steps of the gap-count table; empty skips it.
    pub refine: Vec<f64>,
    /// Truncation size of the eigenvalue cross-check; zero skips it.
    pub truncation: usize,
    /// Number of seeded base points for the cross-check.
    pub truncation_points: usize,
    /// Label interior gaps by rotation numbers (circle bases only).
    pub labels: bool,
    pub label: LabelParams,
}

impl Default for SpectrumSection {
    fn default() -> Self {
        SpectrumSection {
            min: -3.0,
            max: 3.0,
            step: 1e-2,
            scan: ScanParams::default(),
            refine: Vec::new(),
            truncation: 0,
            truncation_points: 3,
            labels: false,
            label: LabelParams::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReduceTarget {
    /// UH inputs go to the constant diagonal form, others to a rotation.
    #[default]
    Auto,
    Hyperbolic,
    Rotation,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReduceSection {
    pub target: ReduceTarget,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CohomologySection {
    /// The function φ; defaults to the potential.
    pub phi: Option<RealFn>,
    pub delta: f64,
    pub params: CohomologyParams,
    pub verify_grid: usize,
}

impl Default for CohomologySection {
    fn default() -> Self {
        CohomologySection {
            phi: None,
            delta: 0.05,
            params: CohomologyParams::default(),
            verify_grid: 10_000,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GapSection {
    pub epsilon: f64,
    pub params: GapParams,
}

impl Default for GapSection {
    fn default() -> Self {
        GapSection {
            epsilon: 0.1,
            params: GapParams::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RotationSection {
    /// Energies at which the Schrödinger rotation number is computed; empty
    /// means the configured energy (or the general cocycle).
    pub energies: Vec<f64>,
    pub x0: [f64; 2],
    pub iterations: u64,
    pub k_max: i64,
}

impl Default for RotationSection {
    fn default() -> Self {
        RotationSection {
            energies: Vec::new(),
            x0: [0.0, 0.0],
            iterations: 100_000,
            k_max: 1000,
        }
    }
}

/// A configuration problem, located by file and field path.
#[derive(Debug)]
pub struct ConfigError {
    pub file: PathBuf,
    pub field: String,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: field `{}`: {}", self.file.display(), self.field, self.message)
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let err = |field: &str, message: String| ConfigError {
            file: path.to_path_buf(),
            field: field.into(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| err("(file)", e.to_string()))?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            err(&field, e.into_inner().to_string())
        })
    }

    pub fn error(&self, file: &Path, field: &str, message: impl Into<String>) -> ConfigError {
        ConfigError {
            file: file.to_path_buf(),
            field: field.into(),
            message: message.into(),
        }
    }

    /// Checks shared by every pipeline, then those of `pipeline`.
    pub fn validate(&self, file: &Path, pipeline: &str) -> Result<(), ConfigError> {
        if let Some(p) = &self.pipeline
            && p != pipeline
        {
            return Err(self.error(file, "pipeline", format!("config is for `{p}`, not `{pipeline}`")));
        }
        self.base.validate().map_err(|e| self.error(file, "base", e.to_string()))?;
        if !self.energy.is_finite() {
            return Err(self.error(file, "energy", "must be finite"));
        }
        let positive = |field: &str, x: f64| {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(self.error(file, field, format!("must be positive and finite, got {x}")))
            }
        };
        match pipeline {
            "spectrum" => {
                let s = &self.spectrum;
                self.potential_or(file)?;
                positive("spectrum.step", s.step)?;
                if !(s.max >= s.min) {
                    return Err(self.error(file, "spectrum.max", "must be at least spectrum.min"));
                }
                if s.refine.iter().any(|&h| !(h > 0.0)) || s.refine.windows(2).any(|w| !(w[1] < w[0])) {
                    return Err(self.error(file, "spectrum.refine", "steps must be positive and decreasing"));
                }
                if s.labels && self.base.circle_alpha().is_none() {
                    return Err(self.error(file, "spectrum.labels", "gap labels need a circle base"));
                }
            }
            "rotate-conjugate" | "reduce" | "uh-test" => {
                self.cocycle_or(file)?;
                positive("delta0", self.delta0)?;
            }
            "cohomology" => {
                positive("cohomology.delta", self.cohomology.delta)?;
                if self.cohomology.phi.is_none() && self.potential.is_none() {
                    return Err(self.error(file, "cohomology.phi", "missing (and no potential to fall back on)"));
                }
                if self.cohomology.verify_grid == 0 {
                    return Err(self.error(file, "cohomology.verify_grid", "must be positive"));
                }
            }
            "open-gap" => {
                self.potential_or(file)?;
                positive("gap.epsilon", self.gap.epsilon)?;
            }
            "rotation-number" => {
                self.cocycle_or(file)?;
                if self.rotation.iterations < 10_000 {
                    return Err(self.error(file, "rotation.iterations", "must be at least 10000"));
                }
                if !self.rotation.energies.is_empty() && self.potential.is_none() {
                    return Err(self.error(file, "rotation.energies", "energies need a potential"));
                }
            }
            _ => {}
        }
        Ok(())
    }

    fn potential_or(&self, file: &Path) -> Result<Potential, ConfigError> {
        self.potential
            .clone()
            .map(|f| Potential::new("V", f))
            .ok_or_else(|| self.error(file, "potential", "missing"))
    }

    fn cocycle_or(&self, file: &Path) -> Result<Cocycle, ConfigError> {
        match (&self.cocycle, &self.potential) {
            (Some(g), _) => Ok(Cocycle::from_generator(self.base, g.clone())),
            (None, Some(_)) => Ok(schrodinger_cocycle(self.base, &self.potential_or(file)?, self.energy)),
            (None, None) => Err(self.error(file, "cocycle", "missing (give a cocycle or a potential)")),
        }
    }

    /// The potential; only called after validation.
    pub fn potential(&self) -> Potential {
        Potential::new("V", self.potential.clone().expect("validated"))
    }

    pub fn cocycle(&self) -> Cocycle {
        self.cocycle_or(Path::new("")).expect("validated")
    }

    pub fn cohomology_phi(&self) -> RealFn {
        self.cohomology.phi.clone().or_else(|| self.potential.clone()).expect("validated")
    }
}
