//! Crate-wide error type. Invalid inputs surface as variants of [`Error`];
//! library code never panics on caller data.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("state vector has vanishing norm")]
    ZeroNorm,
    #[error("matrix is not Hermitian (defect {0:.3e})")]
    NotHermitian(f64),
    #[error("matrix is not positive semidefinite (eigenvalue {0:.3e})")]
    NotPositive(f64),
    #[error("trace {0} lies outside (0, 1]")]
    BadTrace(f64),
    #[error("Bloch vector norm {0} exceeds 1")]
    BlochNormExceeded(f64),
    #[error("state is sub-normalized (trace {0}); renormalize it first")]
    SubNormalized(f64),
    #[error("operator is not a contraction: largest eigenvalue of K^dag K is {0}")]
    NotContractive(f64),
    #[error("measurement strength {0} rad lies outside [0, pi/2]")]
    StrengthOutOfRange(f64),
    #[error("entangling interval {0} s maps outside the admissible strength range")]
    DurationOutOfRange(f64),
    #[error("forced branch has probability {0:.3e}; outcome cannot occur")]
    DegenerateBranch(f64),
    #[error("pre/post-selection overlap {0:.3e} is too small; weak value diverges")]
    SingularPostSelection(f64),
    #[error("weak-value estimator is undefined at zero measurement strength")]
    ZeroStrength,
    #[error("post-selected probability mass {0:.3e} is too small for the estimator")]
    VanishingMass(f64),
    #[error("readout confusion eps0 + eps1 = {0} >= 1 cannot be inverted")]
    NonInvertibleCorrection(f64),
    #[error("reconstructed process is non-physical: {reason} (residual {residual:.3e})")]
    NonPhysicalProcess { reason: &'static str, residual: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("calibration target is infeasible: {0}")]
    InfeasibleCalibration(String),
    #[error("post-selection bound needs p_adapt >= p_single, got {p_adapt} < {p_single}")]
    BoundNeedsDilution { p_adapt: f64, p_single: f64 },
    #[error("dataset invariant violated: {0}")]
    BadDataset(String),
    #[error("fit failed: {0}")]
    FitFailed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
