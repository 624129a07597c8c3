//! Report documents. Field order is fixed by the struct definitions and
//! all maps are ordered, so equal runs serialize to equal bytes.

use monodromy::latalg::{ChainLevel, FreeActionReport, MappingTorusReport};
use monodromy::lattice::{DetectOptions, LatticeBasis, GAP_SAFETY, MAX_BISECTIONS, ROUNDING_THRESHOLD};
use monodromy::maslov::MaslovSampling;
use monodromy::systems::CRITICAL_EXCLUSION;
use monodromy::{IntMatrix, Tolerances};
use serde::{Deserialize, Serialize};

use crate::config::{JobConfig, ToleranceSpec};

pub const SCHEMA_VERSION: &str = "1.0.0";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageVerdict {
    pub stage: String,
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

/// Tolerances and fixed thresholds in effect for a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToleranceEcho {
    pub flow: Tolerances,
    pub detect: DetectOptions,
    pub maslov: MaslovSampling,
    pub free_action: monodromy::latalg::FreeActionOptions,
    pub mapping_torus_samples: usize,
    pub monodromy_rounding: f64,
    pub monodromy_reconstruction: f64,
    pub gap_safety: f64,
    pub max_bisections: usize,
    pub mapping_torus_residual: f64,
    pub mapping_torus_quotient: f64,
    pub critical_exclusion: f64,
}

impl ToleranceEcho {
    pub fn new(t: &ToleranceSpec) -> Self {
        ToleranceEcho {
            flow: t.flow,
            detect: t.detect.clone(),
            maslov: t.maslov,
            free_action: t.free_action,
            mapping_torus_samples: t.mapping_torus_samples,
            monodromy_rounding: ROUNDING_THRESHOLD,
            monodromy_reconstruction: 1e-6,
            gap_safety: GAP_SAFETY,
            max_bisections: MAX_BISECTIONS,
            mapping_torus_residual: 1e-6,
            mapping_torus_quotient: 1e-9,
            critical_exclusion: CRITICAL_EXCLUSION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisOut {
    pub value: Vec<f64>,
    pub anchor: Vec<f64>,
    /// Periods `T_1, ..., T_n`.
    pub periods: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
}

impl From<&LatticeBasis> for BasisOut {
    fn from(b: &LatticeBasis) -> Self {
        BasisOut {
            value: b.value.iter().copied().collect(),
            anchor: b.anchor.coords.iter().copied().collect(),
            periods: (0..b.n()).map(|i| b.period(i).iter().copied().collect()).collect(),
            residuals: b.residuals.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConjugacyOut {
    pub class: String,
    pub k: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainLevelOut {
    /// Kernel basis vectors in Hermite normal form, one per row.
    pub kernel: Vec<Vec<String>>,
    pub complement: Vec<String>,
    pub certificate: String,
    pub saturated: bool,
}

impl From<&ChainLevel> for ChainLevelOut {
    fn from(l: &ChainLevel) -> Self {
        ChainLevelOut {
            kernel: (0..l.kernel.ncols())
                .map(|c| l.kernel.column(c).iter().map(ToString::to_string).collect())
                .collect(),
            complement: l.complement.iter().map(ToString::to_string).collect(),
            certificate: l.certificate.to_string(),
            saturated: l.saturated,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreeActionOut {
    pub generator: Vec<f64>,
    pub max_closure_residual: f64,
    pub min_fraction_distance: f64,
    pub samples: usize,
}

impl From<&FreeActionReport> for FreeActionOut {
    fn from(r: &FreeActionReport) -> Self {
        FreeActionOut {
            generator: r.generator.clone(),
            max_closure_residual: r.max_closure_residual,
            min_fraction_distance: r.min_fraction_distance,
            samples: r.samples,
        }
    }
}

/// Computed objects; stages that did not run leave their fields absent.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Results {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub basis: Option<BasisOut>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub end_basis: Option<BasisOut>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub monodromy: Option<IntMatrix>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub conjugacy: Option<ConjugacyOut>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub maslov_vector: Option<Vec<i64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<IntMatrix>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho_source: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho_invariant: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kernel_chain: Option<Vec<ChainLevelOut>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub section: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub free_action: Option<FreeActionOut>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mapping_torus: Option<MappingTorusReport>,
}

/// Numerical diagnostics. Wall time is deliberately absent so that
/// reports are reproducible byte for byte.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_basis_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pre_round_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trajectory_samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub total_substeps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_jump_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub winding_residuals: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub maslov_samples: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub plot_files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: String,
    pub config: JobConfig,
    pub tolerances: ToleranceEcho,
    pub results: Results,
    pub verdicts: Vec<StageVerdict>,
    pub diagnostics: Diagnostics,
}

impl Report {
    pub fn new(config: &JobConfig) -> Self {
        Report {
            schema_version: SCHEMA_VERSION.into(),
            config: config.clone(),
            tolerances: ToleranceEcho::new(&config.tolerances),
            results: Results::default(),
            verdicts: Vec::new(),
            diagnostics: Diagnostics::default(),
        }
    }

    pub fn record(&mut self, stage: &str, verdict: Verdict, detail: Option<String>) {
        self.verdicts.push(StageVerdict { stage: stage.into(), verdict, detail });
    }

    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.verdict != Verdict::Fail)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}
