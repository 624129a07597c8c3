//! Job configuration documents.

use std::collections::BTreeMap;
use std::path::PathBuf;

use monodromy::latalg::FreeActionOptions;
use monodromy::lattice::{DetectOptions, LoopPath};
use monodromy::maslov::MaslovSampling;
use monodromy::Tolerances;
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::schema;
use crate::CliError;

/// Default number of random samples of the mapping torus check.
pub const DEFAULT_TORUS_SAMPLES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JobKind {
    Periods,
    Monodromy,
    Maslov,
    Refine,
    S1Action,
    MappingTorusCheck,
    FullVerify,
}

impl JobKind {
    pub fn name(self) -> &'static str {
        match self {
            JobKind::Periods => "periods",
            JobKind::Monodromy => "monodromy",
            JobKind::Maslov => "maslov",
            JobKind::Refine => "refine",
            JobKind::S1Action => "s1-action",
            JobKind::MappingTorusCheck => "mapping-torus-check",
            JobKind::FullVerify => "full-verify",
        }
    }

    pub fn needs_loop(self) -> bool {
        matches!(self, JobKind::Monodromy | JobKind::MappingTorusCheck | JobKind::FullVerify)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

/// A closed loop in value space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LoopSpec {
    /// `samples` equal steps counterclockwise around a circle.
    Circle { center: Vec<f64>, radius: f64, start_angle: f64, samples: usize },
    /// Explicit vertices; the first vertex is appended at the end when the
    /// polyline is not already closed.
    Polyline {
        points: Vec<Vec<f64>>,
        #[serde(default = "default_clearance")]
        min_critical_distance: f64,
    },
}

fn default_clearance() -> f64 {
    monodromy::systems::CRITICAL_EXCLUSION
}

impl LoopSpec {
    pub fn to_path(&self) -> LoopPath {
        match self {
            LoopSpec::Circle { center, radius, start_angle, samples } => {
                LoopPath::circle(center, *radius, *start_angle, *samples)
            }
            LoopSpec::Polyline { points, min_critical_distance } => {
                let mut samples: Vec<DVector<f64>> = points.iter().map(|p| DVector::from_column_slice(p)).collect();
                if samples.first() != samples.last() {
                    samples.push(samples[0].clone());
                }
                LoopPath::new(samples, *min_critical_distance)
            }
        }
    }
}

/// Every tolerance a job may use. Omitted fields take their defaults and
/// the full set is echoed in the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToleranceSpec {
    pub flow: Tolerances,
    pub detect: DetectOptions,
    pub maslov: MaslovSampling,
    pub free_action: FreeActionOptions,
    pub mapping_torus_samples: usize,
}

impl Default for ToleranceSpec {
    fn default() -> Self {
        ToleranceSpec {
            flow: Tolerances::default(),
            detect: DetectOptions::default(),
            maslov: MaslovSampling::default(),
            free_action: FreeActionOptions::default(),
            mapping_torus_samples: DEFAULT_TORUS_SAMPLES,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    /// Report destination; standard output when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<PathBuf>,
    /// Directory for CSV plot data; none is written when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plot_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobConfig {
    pub system: SystemSpec,
    pub job: JobKind,
    #[serde(default, rename = "loop", skip_serializing_if = "Option::is_none")]
    pub loop_path: Option<LoopSpec>,
    /// Regular value whose fibre is examined (non-loop jobs).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<Vec<f64>>,
    /// Explicit anchor point; overrides the seed point of `value` or of the
    /// loop start.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point: Option<Vec<f64>>,
    /// Approximate periods refined by the `refine` job.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hints: Option<Vec<Vec<f64>>>,
    /// Lattice coordinates of a circle action section.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub section: Option<Vec<i64>>,
    /// Integer functionals on the lattice basis, one per row.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<Vec<Vec<i64>>>,
    #[serde(default)]
    pub tolerances: ToleranceSpec,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub seed: u64,
}

impl JobConfig {
    /// Parses and validates a config document against the published schema
    /// and the job-specific requirements.
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| CliError::ConfigInvalid(format!("not JSON: {e}")))?;
        schema::validate_config(&value)?;
        let cfg: JobConfig = serde_json::from_value(value).map_err(|e| CliError::ConfigInvalid(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::ConfigInvalid(msg));
        let job = self.job.name();
        if self.job.needs_loop() && self.loop_path.is_none() {
            return bad(format!("job {job} requires a loop"));
        }
        if !self.job.needs_loop() && self.value.is_none() && self.point.is_none() {
            return bad(format!("job {job} requires a value or a point"));
        }
        if self.job == JobKind::Refine && self.hints.as_ref().map_or(true, |h| h.is_empty()) {
            return bad("job refine requires hints".into());
        }
        if let Some(LoopSpec::Polyline { points, .. }) = &self.loop_path {
            if points.len() < 2 {
                return bad("a polyline loop needs at least two points".into());
            }
            if points.iter().any(|p| p.len() != points[0].len()) {
                return bad("polyline points differ in length".into());
            }
        }
        if let Some(rho) = &self.rho {
            if rho.iter().any(|r| r.len() != rho[0].len()) {
                return bad("rho rows differ in length".into());
            }
        }
        self.tolerances.flow.validate().map_err(|e| CliError::ConfigInvalid(e.to_string()))?;
        Ok(())
    }
}
