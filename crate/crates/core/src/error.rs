use thiserror::Error;

/// Errors surfaced by the core algorithms. Variant names are part of the
/// reporting surface (the CLI prints them verbatim).
#[derive(Debug, Error, Clone, PartialEq)]
pub enum AclError {
    #[error("DegenerateCurve: torsion polynomial vanishes identically")]
    DegenerateCurve,
    #[error("InvalidCurve: {0}")]
    InvalidCurve(String),
    #[error("DomainError: {0}")]
    Domain(String),
    #[error("ComparabilityFailure: interval ({lo}, {hi}) has cHigh/cLow = {ratio}")]
    ComparabilityFailure { lo: f64, hi: f64, ratio: f64 },
    #[error("GeometricInequalityViolation: ratio {ratio} at {witness:?}")]
    GeometricInequalityViolation { ratio: f64, witness: Vec<f64> },
    #[error("DerivativeBoundViolation: ratio {ratio} at {witness:?}")]
    DerivativeBoundViolation { ratio: f64, witness: Vec<f64> },
    #[error("JacobianAssemblyError: analytic {analytic} vs finite difference {numeric}")]
    JacobianAssembly { analytic: f64, numeric: f64 },
    #[error("ErrorDominationFailure: |E| = {error} exceeds half of |main| = {main} at delta {delta}")]
    ErrorDomination {
        main: f64,
        error: f64,
        delta: f64,
        rho: Vec<f64>,
        tau: Vec<f64>,
        x: Vec<f64>,
    },
    #[error("DegenerateTruncation: interval ({lo}, {hi}) is empty after truncation")]
    DegenerateTruncation { lo: f64, hi: f64 },
    #[error("NonGenericTarget: Jacobian {jacobian} at preimage {root:?}")]
    NonGenericTarget { jacobian: f64, root: [f64; 2] },
    #[error("BoxTooSmall: axis {axis} needs {padding} more voxels of padding")]
    BoxTooSmall { axis: usize, padding: usize },
    #[error("ResolutionError: feature {feature} is below voxel size {voxel}")]
    Resolution { feature: f64, voxel: f64 },
    #[error("EmptyIncidence: pairing of E and F vanishes")]
    EmptyIncidence,
    #[error("RefinementContract: generation {generation} kept {kept} of {previous}")]
    RefinementContract {
        generation: usize,
        kept: f64,
        previous: f64,
    },
    #[error("TowerCollapse: level {level} fiber empty ({detail})")]
    TowerCollapse { level: usize, detail: String },
    #[error("InternalConsistency: {0}")]
    Internal(String),
    #[error("ExtremalUncertain: lower {lower} vs upper {upper}")]
    ExtremalUncertain { lower: f64, upper: f64 },
}

pub type Result<T> = std::result::Result<T, AclError>;

impl AclError {
    /// Reported name of the variant (the prefix of the display string).
    pub fn kind(&self) -> String {
        let s = self.to_string();
        s.split(':').next().unwrap_or_default().to_string()
    }
}
