use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Two objects that must share a site set or dimension do not.
    Dimension { expected: usize, found: usize },
    /// A matrix that has to be inverted is singular.
    Singular,
    /// Transition probabilities leave [0, 1] at some physical point.
    ProbabilityOutOfRange {
        position: Vec<f64>,
        direction: usize,
        value: f64,
        /// Admissible interval per spatial axis, measured along the axis through the origin.
        admissible: Vec<(f64, f64)>,
    },
    /// A point asked for is not the image of a lattice site.
    OffLattice { position: Vec<f64> },
    /// Observable stepping consumed the whole window.
    Exhausted { steps: usize },
    /// Distribution support left the physical domain.
    BoundaryReached { step: usize, position: Vec<f64> },
    /// The coefficient sequence did not settle on the grid.
    LimitNotFound { name: String, rel_change: f64 },
    /// Input is valid but not handled by this operation.
    Unsupported(String),
    /// Malformed parameters.
    Invalid(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Dimension { expected, found } => {
                write!(f, "dimension mismatch: expected {expected}, found {found}")
            }
            Error::Singular => write!(f, "singular matrix"),
            Error::ProbabilityOutOfRange { position, direction, value, admissible } => {
                write!(f, "probability P^{direction} = {value} outside [0, 1] at {position:?}; admissible per axis:")?;
                for (i, (lo, hi)) in admissible.iter().enumerate() {
                    if lo.is_nan() {
                        write!(f, " x{} none (invalid at the origin)", i + 1)?;
                    } else {
                        write!(f, " x{} in [{lo}, {hi}]", i + 1)?;
                    }
                }
                Ok(())
            }
            Error::OffLattice { position } => write!(f, "point {position:?} is not on the lattice image"),
            Error::Exhausted { steps } => write!(f, "window exhausted after {steps} steps"),
            Error::BoundaryReached { step, position } => {
                write!(f, "support reached the domain boundary at step {step} (near {position:?})")
            }
            Error::LimitNotFound { name, rel_change } => {
                write!(f, "no limit for {name}: relative change {rel_change:e} between finest estimates")
            }
            Error::Unsupported(s) => write!(f, "unsupported input: {s}"),
            Error::Invalid(s) => write!(f, "invalid parameters: {s}"),
        }
    }
}

impl core::error::Error for Error {}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::Dimension { expected, found })
    }
}
