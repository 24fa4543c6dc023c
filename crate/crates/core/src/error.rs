use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("wavelength {wavelength_m:.4e} m outside model validity range [{min_m:.4e}, {max_m:.4e}] m")]
    WavelengthOutOfRange {
        wavelength_m: f64,
        min_m: f64,
        max_m: f64,
    },

    #[error("invalid dispersion model: {0}")]
    InvalidModel(String),

    #[error("{0}")]
    Domain(String),

    /// The collinear closed form divides by the group-index walk-off
    /// |n'_a - n'_b| and is meaningless when the two photons co-propagate.
    #[error("group indices nearly equal (|n'_a - n'_b| = {0:.3e}); the collinear emission model diverges")]
    DegenerateGroupIndex(f64),

    #[error("{0}")]
    DataQuality(String),

    #[error("{0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
