use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors shared across the identification and control modules.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied argument violated a precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A cluster's fuzzy covariance could not be inverted even after
    /// regularization; the cluster has fewer effective samples than
    /// dimensions. Reduce the cluster count or regularize the data.
    #[error("covariance of cluster {cluster} is singular; reduce the cluster count or regularize the data")]
    SingularCovariance { cluster: usize },

    /// Two samples share an abscissa but disagree on the ordinate, so a
    /// slope between them is undefined.
    #[error("duplicate abscissa {x} with differing ordinates; slope is undefined")]
    DuplicateAbscissa { x: f64 },

    /// A curve fit has no solution on the given data.
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    /// Every rule's firing strength underflowed at the given input.
    #[error("no rule fires at input {input:?}")]
    NoRuleFires { input: Vec<f64> },

    /// Integration produced a non-finite state.
    #[error("non-finite state during integration: {state:?}")]
    NonFiniteState { state: Vec<f64> },

    /// The vehicle left the attitude region where the thrust channel can be
    /// inverted (cos(phi)*cos(theta) too small).
    #[error("attitude outside thrust validity region: cos(phi)*cos(theta) = {0:.6}")]
    ThrustValidity(f64),

    /// The thrust input required by a position controller is not positive.
    #[error("position control requires positive total thrust, got U_z = {0:.6}")]
    NonPositiveThrust(f64),

    /// Open-loop excitation left the small-angle validity region even after
    /// repeated damping retries.
    #[error("excitation diverged beyond the validity region after {retries} retries")]
    ExcitationDiverged { retries: usize },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config error: {0}")]
    Config(#[from] toml::de::Error),

    #[error("config serialize error: {0}")]
    ConfigSerialize(#[from] toml::ser::Error),
}
