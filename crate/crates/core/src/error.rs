use thiserror::Error;

/// Every failure the pipeline can report.
///
/// Variants are grouped by the module that raises them; [`Error::module`]
/// names that module so callers can prefix messages with context.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    // systems
    #[error("unknown system `{0}`")]
    UnknownSystem(String),
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    // flow
    #[error("step size underflow at s = {at}")]
    StepFailure { at: f64 },
    #[error("trajectory left the regular domain")]
    LeftRegularDomain,
    #[error("Newton iteration diverged (residual {residual:e} after {iterations} iterations)")]
    NewtonDiverged { residual: f64, iterations: usize },
    #[error("target value lies within {distance:e} of a critical value")]
    NearCriticalValue { distance: f64 },

    // lattice
    #[error("no return found in the scanned time box (t_max = {t_max})")]
    NoReturnFound { t_max: f64 },
    #[error("period candidates do not generate a lattice: {0}")]
    DegenerateCandidates(String),
    #[error("continuation step bisection exhausted near sample {sample}")]
    StepBisectionExhausted { sample: usize },
    #[error("monodromy matrix is not integral (pre-round residual {residual:e})")]
    NonIntegerMonodromy { residual: f64 },
    #[error("matrix is not unimodular (det = {det})")]
    NonUnimodular { det: String },
    #[error("invalid loop path: {0}")]
    InvalidPath(String),

    // maslov
    #[error("generator span is not Lagrangian (|omega| = {omega:e})")]
    NotLagrangian { omega: f64 },
    #[error("generators are linearly dependent at the given point")]
    DependentGenerators,
    #[error("phase step refinement exhausted at s = {at}")]
    PhaseStepTooLarge { at: f64 },
    #[error("cycle does not close (displacement {residual:e})")]
    CycleNotClosed { residual: f64 },
    #[error("winding {winding} is not close to an integer")]
    NonIntegerWinding { winding: f64 },
    #[error("system is not Hamiltonian on R^2n: {0}")]
    NotHamiltonian(String),

    // latalg
    #[error("rho rows are rationally dependent (row {row} vanishes on the previous kernel)")]
    RankDeficientRho { row: usize },
    #[error("section vector is zero")]
    ZeroSection,
    #[error("section vector is not primitive (gcd = {gcd})")]
    NotPrimitive { gcd: String },
    #[error("circle action does not close (residual {residual:e})")]
    ClosureFailed { residual: f64 },
    #[error("circle action is not free: fraction {numer}/{denom} returns (distance {distance:e})")]
    NotFree { numer: u32, denom: u32, distance: f64 },
    #[error("mapping torus identification mismatch (residual {residual:e})")]
    IdentificationMismatch { residual: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

impl Error {
    pub fn module(&self) -> &'static str {
        use Error::*;
        match self {
            UnknownSystem(_) | InvalidParameter { .. } => "systems",
            StepFailure { .. } | LeftRegularDomain | NewtonDiverged { .. } | NearCriticalValue { .. } => "flow",
            NoReturnFound { .. }
            | DegenerateCandidates(_)
            | StepBisectionExhausted { .. }
            | NonIntegerMonodromy { .. }
            | NonUnimodular { .. }
            | InvalidPath(_) => "lattice",
            NotLagrangian { .. }
            | DependentGenerators
            | PhaseStepTooLarge { .. }
            | CycleNotClosed { .. }
            | NonIntegerWinding { .. }
            | NotHamiltonian(_) => "maslov",
            RankDeficientRho { .. }
            | ZeroSection
            | NotPrimitive { .. }
            | ClosureFailed { .. }
            | NotFree { .. }
            | IdentificationMismatch { .. } => "latalg",
            Dimension(_) => "core",
        }
    }

    /// True for failures that mean "a checked property does not hold"
    /// rather than "the computation could not be carried out".
    pub fn is_verdict_failure(&self) -> bool {
        matches!(
            self,
            Error::NonIntegerMonodromy { .. }
                | Error::NonUnimodular { .. }
                | Error::ClosureFailed { .. }
                | Error::NotFree { .. }
                | Error::IdentificationMismatch { .. }
                | Error::NonIntegerWinding { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
