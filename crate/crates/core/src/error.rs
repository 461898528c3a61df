use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A physical parameter lies outside its admissible domain.
    #[error("parameter out of domain: {0}")]
    ParameterDomain(String),

    /// The series formulas exclude eta = 1.
    #[error(
        "eta = 1 is the transparent case: the spectral series is undefined there, \
         use the characteristics solver instead"
    )]
    Transparent,

    /// Operation needs eta > 0 with eta != 1.
    #[error(
        "operation requires a damped, non-transparent boundary (eta > 0, eta != 1), got eta = {0}"
    )]
    NotDamped(f64),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error(
        "initial displacement violates the Dirichlet end: |phi0(L)| = {value:e} > {tolerance:e}"
    )]
    Compatibility { value: f64, tolerance: f64 },

    #[error("point x = {x} is outside the moving interval [{left}, {right}] at t = {t}")]
    OutsideInterval {
        x: f64,
        t: f64,
        left: f64,
        right: f64,
    },

    #[error("time must be non-negative, got {0}")]
    NegativeTime(f64),

    #[error("argument {0} lies outside the domain of dependence")]
    OutsideDependence(f64),

    /// Series reconstruction produced a non-negligible imaginary part.
    #[error("imaginary residue {residue:e} exceeds {tolerance:e} of the field scale")]
    ImaginaryResidue { residue: f64, tolerance: f64 },

    #[error("need at least {needed} positive energy samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
